fn main() {
    std::process::exit(osg_core::cli::run(std::env::args_os()));
}
