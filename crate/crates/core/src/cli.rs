//! The `osg` command line: `synth`, `split`, `train`, `eval` and `report`.
//!
//! Every command writes into a fresh output directory (existing non-empty
//! directories are refused) and echoes its resolved configuration there as
//! `run.conf`. Exit codes: 0 success, 1 invalid input, 2 runtime failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{split_assignment, RunConfig};
use crate::data::{load_class_table, synth_generate, Dataset, CLASSES_FILE};
use crate::episodic::{evaluate, Task};
use crate::error::{Error, Result};
use crate::model::{init_model, EmbeddingModel};
use crate::splits::{generate_split, load_split, overlap_stats, save_split, Category, Subset};
use crate::trainer::train;

pub const RUN_CONF: &str = "run.conf";
pub const INPUTS_FILE: &str = "inputs.conf";
pub const MODEL_FILE: &str = "model.osm";
pub const TRAIN_LOG_FILE: &str = "trainlog.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.txt";
pub const EVAL_FILE: &str = "eval.csv";
pub const OVERLAP_FILE: &str = "overlap.csv";
pub const BALANCE_FILE: &str = "balance.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_WIDE_FILE: &str = "report_wide.csv";

#[derive(Debug, Parser)]
#[command(name = "osg", version, about = "Few-shot and cross-modal few-shot open-set generalization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for this command's stage (synth, split, train or eval).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any configuration key, e.g. `--set train.lr0=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate open-set splits from a class table.
    Split {
        /// Dataset directory holding the class table.
        #[arg(long, conflicts_with = "classes", required_unless_present = "classes")]
        data: Option<PathBuf>,
        /// Class-table CSV.
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train an embedding model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint with episodic κ-NN classification.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// FSG or CM-FSG.
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Merge evaluation directories into one table.
    Report {
        /// Output directories of `osg eval`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy)]
enum Stage {
    Synth,
    Split,
    Train,
    Eval,
}

fn resolve(common: &Common, stage: Stage) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        let key = match stage {
            Stage::Synth => "synth.seed",
            Stage::Split => "split.seed",
            Stage::Train => "train.seed",
            Stage::Eval => "eval.seed",
        };
        cfg.set(key, &seed.to_string())?;
    }
    for s in &common.set {
        let (k, v) = split_assignment(s).ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

/// Creates `dir`, refusing to reuse a non-empty one.
fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let occupied = !dir.is_dir()
            || fs::read_dir(dir)
                .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?
                .next()
                .is_some();
        if occupied {
            return Err(Error::Precondition(format!(
                "output {} already exists; outputs are never overwritten",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn cmd_synth(out: &Path, cfg: &RunConfig) -> Result<()> {
    let ds = synth_generate(&cfg.synth)?;
    fresh_dir(out)?;
    ds.save_dir(out)?;
    write(&out.join(RUN_CONF), &cfg.to_text())
}

const BALANCE_HEADER: &str = "split,seed,train,val,test,val_hov,val_hon,val_hovn,test_hov,test_hon,test_hovn,imbalance";

fn cmd_split(classes: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let table = load_class_table(classes)?;
    if cfg.split.count == 0 {
        return Err(Error::Config("split.count must be at least 1".into()));
    }
    let results = (0..cfg.split.count)
        .map(|i| {
            let mut spec = cfg.split.spec.clone();
            spec.seed = spec.seed.wrapping_add(i as u64);
            generate_split(&table, &spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let overlap = overlap_stats(&results, &table)?;

    fresh_dir(out)?;
    let mut balance = format!("{BALANCE_HEADER}\n");
    for (i, r) in results.iter().enumerate() {
        save_split(out.join(format!("split_{i}.csv")), r)?;
        let cats = |s| [Category::HoV, Category::HoN, Category::HoVN].map(|c| r.with_category(s, c).len());
        let (v, t) = (cats(Subset::Val), cats(Subset::Test));
        balance.push_str(&format!(
            "split_{i},{},{},{},{},{},{},{},{},{},{},{}\n",
            cfg.split.spec.seed.wrapping_add(i as u64),
            r.train.len(),
            r.validation.len(),
            r.test.len(),
            v[0],
            v[1],
            v[2],
            t[0],
            t[1],
            t[2],
            r.imbalance()
        ));
    }
    write(&out.join(OVERLAP_FILE), &overlap.to_csv())?;
    write(&out.join(BALANCE_FILE), &balance)?;
    write(&out.join(RUN_CONF), &cfg.to_text())
}

fn cmd_train(data: &Path, split: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let ds = Dataset::load_dir(data)?;
    let split_result = load_split(split, ds.class_table())?;
    let (_, d_in) = ds.feature_shape();
    let model = init_model(cfg.model_config(d_in, ds.label_dim()), cfg.train.seed)?;
    let tc = cfg.train_config();
    tc.validate()?;
    fresh_dir(out)?;
    let (best, log) = train(model, &ds, &split_result, &tc)?;
    if let Some(why) = &log.validation_skipped {
        eprintln!("osg: validation {why}; keeping the final model");
    }
    best.save(out.join(MODEL_FILE))?;
    log.save_csv(out.join(TRAIN_LOG_FILE))?;
    write(&out.join(TRAIN_SUMMARY_FILE), &log.summary())?;
    write(
        &out.join(INPUTS_FILE),
        &format!("data = {}\nsplit = {}\n", data.display(), split.display()),
    )?;
    write(&out.join(RUN_CONF), &cfg.to_text())
}

fn cmd_eval(data: &Path, split: &Path, model_path: &Path, out: &Path, cfg: &mut RunConfig) -> Result<()> {
    let ds = Dataset::load_dir(data)?;
    let split_result = load_split(split, ds.class_table())?;
    let model = EmbeddingModel::load(model_path)?;
    // The checkpoint decides the method; the echo records it.
    cfg.train.method = model.method();
    let report = evaluate(&model, &ds, &split_result, cfg.eval.task, &cfg.eval.spec)?;
    for s in &report.subsets {
        if let Some(why) = &s.skipped {
            eprintln!("osg: warning: skipped {why}");
        }
    }
    fresh_dir(out)?;
    write(&out.join(EVAL_FILE), &report.to_csv())?;
    write(
        &out.join(INPUTS_FILE),
        &format!(
            "data = {}\nsplit = {}\nmodel = {}\n",
            data.display(),
            split.display(),
            model_path.display()
        ),
    )?;
    write(&out.join(RUN_CONF), &cfg.to_text())
}

/// One accuracy cell of the merged report, copied verbatim from an eval CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub method: String,
    pub dml: String,
    pub task: String,
    pub subset: String,
    pub split: String,
    pub seed: String,
    pub accuracy: String,
}

fn inputs_value(text: &str, key: &str) -> Option<String> {
    text.lines()
        .filter_map(split_assignment)
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
}

/// Reads the rows of one `osg eval` output directory.
pub fn read_eval_dir(dir: &Path) -> Result<Vec<ReportRow>> {
    let cfg = RunConfig::load(dir.join(RUN_CONF))?;
    let inputs_path = dir.join(INPUTS_FILE);
    let split_path = inputs_value(&read(&inputs_path)?, "split")
        .ok_or_else(|| Error::Format(format!("{} has no split entry", inputs_path.display())))?;
    let split = Path::new(&split_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or(split_path.clone());

    let csv_path = dir.join(EVAL_FILE);
    let text = read(&csv_path)?;
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = lines.next().map(|(_, l)| l.split(',').collect()).unwrap_or_default();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Format(format!("{} lacks column {name}", csv_path.display())))
    };
    let (ti, si, ai, seedi) = (col("task")?, col("subset")?, col("accuracy")?, col("seed")?);
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != header.len() {
                return Err(Error::Parse {
                    path: csv_path.clone(),
                    line: i + 1,
                    msg: format!("expected {} fields, got {}", header.len(), f.len()),
                });
            }
            Ok(ReportRow {
                method: cfg.train.method.to_string(),
                dml: cfg.dml.to_string(),
                task: f[ti].to_string(),
                subset: f[si].to_string(),
                split: split.clone(),
                seed: f[seedi].to_string(),
                accuracy: f[ai].to_string(),
            })
        })
        .collect()
}

pub const REPORT_HEADER: &str = "method,dml,task,subset,split,seed,accuracy";

/// Long table, one row per input cell, sorted by
/// `(method, dml, task, subset, split, seed)`.
pub fn report_long(rows: &[ReportRow]) -> Result<String> {
    let mut sorted: Vec<&ReportRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.method, &a.dml, &a.task, &a.subset, &a.split, &a.seed)
            .cmp(&(&b.method, &b.dml, &b.task, &b.subset, &b.split, &b.seed))
    });
    for w in sorted.windows(2) {
        let key = |r: &ReportRow| (r.method.clone(), r.dml.clone(), r.task.clone(), r.subset.clone(), r.split.clone(), r.seed.clone());
        if key(w[0]) == key(w[1]) {
            return Err(Error::Precondition(format!(
                "two inputs report {} {} {} {} on {} with seed {}",
                w[0].method, w[0].dml, w[0].task, w[0].subset, w[0].split, w[0].seed
            )));
        }
    }
    let mut out = format!("{REPORT_HEADER}\n");
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method, r.dml, r.task, r.subset, r.split, r.seed, r.accuracy
        ));
    }
    Ok(out)
}

/// Wide table: one row per `(method, dml, task, subset, seed)`, one column
/// per split. Missing cells are empty.
pub fn report_wide(rows: &[ReportRow]) -> String {
    let splits: BTreeSet<&str> = rows.iter().map(|r| r.split.as_str()).collect();
    type Row<'a> = (&'a str, &'a str, &'a str, &'a str, &'a str);
    let mut table: BTreeMap<Row<'_>, BTreeMap<&str, &str>> = BTreeMap::new();
    for r in rows {
        table
            .entry((&r.method, &r.dml, &r.task, &r.subset, &r.seed))
            .or_default()
            .insert(&r.split, &r.accuracy);
    }
    let mut out = String::from("method,dml,task,subset,seed");
    for s in &splits {
        out.push(',');
        out.push_str(s);
    }
    out.push('\n');
    for ((m, d, t, s, seed), cells) in &table {
        out.push_str(&format!("{m},{d},{t},{s},{seed}"));
        for sp in &splits {
            out.push(',');
            out.push_str(cells.get(sp).copied().unwrap_or(""));
        }
        out.push('\n');
    }
    out
}

fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for dir in inputs {
        rows.extend(read_eval_dir(dir)?);
    }
    let long = report_long(&rows)?;
    fresh_dir(out)?;
    write(&out.join(REPORT_FILE), &long)?;
    write(&out.join(REPORT_WIDE_FILE), &report_wide(&rows))
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, common } => cmd_synth(&out, &resolve(&common, Stage::Synth)?),
        Command::Split {
            data,
            classes,
            out,
            common,
        } => {
            let cfg = resolve(&common, Stage::Split)?;
            let classes = classes.unwrap_or_else(|| data.unwrap_or_default().join(CLASSES_FILE));
            cmd_split(&classes, &out, &cfg)
        }
        Command::Train {
            data,
            split,
            out,
            common,
        } => cmd_train(&data, &split, &out, &resolve(&common, Stage::Train)?),
        Command::Eval {
            data,
            split,
            model,
            out,
            task,
            n,
            k,
            m,
            episodes,
            common,
        } => {
            let mut cfg = resolve(&common, Stage::Eval)?;
            if let Some(t) = task {
                cfg.eval.task = t;
            }
            let ep = &mut cfg.eval.spec.episode;
            ep.n = n.unwrap_or(ep.n);
            ep.k = k.unwrap_or(ep.k);
            ep.m = m.unwrap_or(ep.m);
            cfg.eval.spec.episodes = episodes.unwrap_or(cfg.eval.spec.episodes);
            cmd_eval(&data, &split, &model, &out, &mut cfg)
        }
        Command::Report { inputs, out } => cmd_report(&inputs, &out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("osg: error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
