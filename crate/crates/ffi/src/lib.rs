//! C ABI over `osg-core`.
//!
//! Objects cross the boundary as opaque handles created by `osg_*_load`,
//! `osg_*_synth`, `osg_*_generate` or `osg_train` and released by the matching
//! `osg_*_free`. Every fallible call returns an [`OsgStatus`]; on failure the
//! message is available from [`osg_last_error`] on the same thread. Panics
//! never unwind into C: they are caught and reported as `OSG_STATUS_PANIC`.
//!
//! Configuration is passed as text in the `key = value` format used by the
//! `osg` command line, so C callers and the CLI share one set of keys.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use osg_core::config::RunConfig;
use osg_core::data::{synth_generate, Dataset, Instance};
use osg_core::episodic::{evaluate, knn_classify, EpisodeSpec, EvalSpec, EvalSubset, Task};
use osg_core::model::{init_model, EmbeddingModel};
use osg_core::numcore::Tensor2;
use osg_core::splits::{generate_split, load_split, SplitResult};
use osg_core::trainer::train;
use osg_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    OutOfRange = 4,
    Dimension = 5,
    Degenerate = 6,
    NonFinite = 7,
    Config = 8,
    Parse = 9,
    DuplicateId = 10,
    Format = 11,
    Truncated = 12,
    Eligibility = 13,
    Sampling = 14,
    Capability = 15,
    Unsupported = 16,
    Precondition = 17,
    Io = 18,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsgTask {
    Fsg = 0,
    CmFsg = 1,
}

/// Episode shape and schedule for [`osg_evaluate`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OsgEvalParams {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub episodes: usize,
    pub seed: u64,
}

/// Pooled result for one evaluation subset. `reported` is 0 when the subset
/// had too few classes for the episode shape; the other fields are then 0.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OsgSubsetResult {
    pub reported: i32,
    pub queries: u64,
    pub correct: u64,
    pub accuracy: f64,
}

pub struct OsgDataset(Dataset);
pub struct OsgSplit(SplitResult);
pub struct OsgModel(EmbeddingModel);

struct Fail {
    status: OsgStatus,
    msg: String,
}

impl Fail {
    fn new(status: OsgStatus, msg: impl Into<String>) -> Self {
        Self {
            status,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension(_) => OsgStatus::Dimension,
            Error::Degenerate(_) => OsgStatus::Degenerate,
            Error::NonFinite(_) => OsgStatus::NonFinite,
            Error::Config(_) => OsgStatus::Config,
            Error::Parse { .. } => OsgStatus::Parse,
            Error::DuplicateId { .. } => OsgStatus::DuplicateId,
            Error::Format(_) => OsgStatus::Format,
            Error::Truncated(_) => OsgStatus::Truncated,
            Error::Eligibility { .. } => OsgStatus::Eligibility,
            Error::Sampling(_) => OsgStatus::Sampling,
            Error::Capability { .. } => OsgStatus::Capability,
            Error::Unsupported(_) => OsgStatus::Unsupported,
            Error::Precondition(_) => OsgStatus::Precondition,
            Error::Io { .. } => OsgStatus::Io,
        };
        Fail::new(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Fail>;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> OsgStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let fail = match outcome {
        Ok(Ok(())) => {
            set_last_error("");
            return OsgStatus::Ok;
        }
        Ok(Err(fail)) => fail,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            Fail::new(OsgStatus::Panic, format!("internal panic: {msg}"))
        }
    };
    set_last_error(&fail.msg);
    fail.status
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| Fail::new(OsgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| Fail::new(OsgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Fail::new(OsgStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(OsgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::new(OsgStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_vec(src: &[f64], out: *mut f64, out_len: usize) -> FfiResult<()> {
    if out_len < src.len() {
        return Err(Fail::new(
            OsgStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, need {}", src.len()),
        ));
    }
    if out.is_null() {
        return Err(Fail::new(OsgStatus::NullPointer, "output buffer is null"));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Optional configuration text on top of the defaults. Null means defaults.
unsafe fn run_config(text: *const c_char) -> FfiResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if !text.is_null() {
        cfg.merge_text(string(text, "config")?, Path::new("<config>"))?;
    }
    Ok(cfg)
}

fn into_handle<T>(value: T, out: &mut *mut T) {
    *out = Box::into_raw(Box::new(value));
}

/// Failure message of the most recent call on this thread; empty if that call
/// succeeded. The pointer stays valid until the next `osg_*` call on the same
/// thread.
#[no_mangle]
pub extern "C" fn osg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn osg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// Datasets

/// Loads a dataset directory written by `osg synth` (or laid out the same way).
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_load(dir: *const c_char, out: *mut *mut OsgDataset) -> OsgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ds = Dataset::load_dir(string(dir, "dir")?)?;
        into_handle(OsgDataset(ds), out);
        Ok(())
    })
}

/// Generates a synthetic dataset from `synth.*` keys in `config` (null for
/// defaults).
///
/// # Safety
/// `config` must be null or NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_synth(config: *const c_char, out: *mut *mut OsgDataset) -> OsgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = run_config(config)?;
        into_handle(OsgDataset(synth_generate(&cfg.synth)?), out);
        Ok(())
    })
}

/// Writes the dataset as a directory (which must not already hold files of
/// the same names).
///
/// # Safety
/// `ds` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_save(ds: *const OsgDataset, dir: *const c_char) -> OsgStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let dir = string(dir, "dir")?;
        std::fs::create_dir_all(dir).map_err(|e| Fail::new(OsgStatus::Io, format!("{dir}: {e}")))?;
        ds.0.save_dir(dir)?;
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_free(ds: *mut OsgDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be null or a live dataset handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_num_instances(ds: *const OsgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.instances().len())
}

/// # Safety
/// `ds` must be null or a live dataset handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_num_classes(ds: *const OsgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.class_table().len())
}

/// Frames per instance.
///
/// # Safety
/// `ds` must be null or a live dataset handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_frames(ds: *const OsgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.feature_shape().0)
}

/// Per-frame feature dimension.
///
/// # Safety
/// `ds` must be null or a live dataset handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_feature_dim(ds: *const OsgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.feature_shape().1)
}

/// # Safety
/// `ds` must be null or a live dataset handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_label_dim(ds: *const OsgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.label_dim())
}

/// Class id of instance `index` (position in the dataset, not instance id).
///
/// # Safety
/// `ds` must be a live dataset handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_instance_class(
    ds: *const OsgDataset,
    index: usize,
    out: *mut u32,
) -> OsgStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let out = out_ptr(out, "out")?;
        *out = instance(ds, index)?.class_id;
        Ok(())
    })
}

/// Copies the label embedding of `class_id` into `out`.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn osg_dataset_label_embedding(
    ds: *const OsgDataset,
    class_id: u32,
    out: *mut f64,
    out_len: usize,
) -> OsgStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let label = ds
            .0
            .label_embedding(class_id)
            .ok_or_else(|| Fail::new(OsgStatus::OutOfRange, format!("no class {class_id}")))?;
        write_vec(label, out, out_len)
    })
}

fn instance(ds: &OsgDataset, index: usize) -> FfiResult<&Instance> {
    let n = ds.0.instances().len();
    if index >= n {
        return Err(Fail::new(
            OsgStatus::OutOfRange,
            format!("instance index {index} out of range ({n} instances)"),
        ));
    }
    Ok(ds.0.instance(index))
}

// Splits

/// Generates a split from `split.*` keys in `config` (null for defaults).
///
/// # Safety
/// `ds` must be a live dataset handle; `config` null or NUL-terminated; `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn osg_split_generate(
    ds: *const OsgDataset,
    config: *const c_char,
    out: *mut *mut OsgSplit,
) -> OsgStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let out = out_ptr(out, "out")?;
        let cfg = run_config(config)?;
        into_handle(OsgSplit(generate_split(ds.0.class_table(), &cfg.split.spec)?), out);
        Ok(())
    })
}

/// Loads a split CSV written by `osg split`, checked against the dataset's
/// class table.
///
/// # Safety
/// `path` must be NUL-terminated; `ds` a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn osg_split_load(
    path: *const c_char,
    ds: *const OsgDataset,
    out: *mut *mut OsgSplit,
) -> OsgStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let out = out_ptr(out, "out")?;
        into_handle(OsgSplit(load_split(string(path, "path")?, ds.0.class_table())?), out);
        Ok(())
    })
}

/// # Safety
/// `split` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn osg_split_free(split: *mut OsgSplit) {
    if !split.is_null() {
        drop(Box::from_raw(split));
    }
}

/// Number of classes in the train, validation and test subsets.
///
/// # Safety
/// `split` must be a live handle; the `out_*` pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn osg_split_sizes(
    split: *const OsgSplit,
    out_train: *mut usize,
    out_val: *mut usize,
    out_test: *mut usize,
) -> OsgStatus {
    guard(|| {
        let s = &deref(split, "split")?.0;
        *out_ptr(out_train, "out_train")? = s.train.len();
        *out_ptr(out_val, "out_val")? = s.validation.len();
        *out_ptr(out_test, "out_test")? = s.test.len();
        Ok(())
    })
}

// Models

/// Initializes a model from `model.*` and `train.*` keys and trains it, as
/// `osg train` does. Validation messages are discarded.
///
/// # Safety
/// `ds` and `split` must be live handles; `config` null or NUL-terminated;
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn osg_train(
    ds: *const OsgDataset,
    split: *const OsgSplit,
    config: *const c_char,
    out: *mut *mut OsgModel,
) -> OsgStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let split = deref(split, "split")?;
        let out = out_ptr(out, "out")?;
        let cfg = run_config(config)?;
        let (_, d_in) = ds.0.feature_shape();
        let model = init_model(cfg.model_config(d_in, ds.0.label_dim()), cfg.train.seed)?;
        let tc = cfg.train_config();
        tc.validate()?;
        let (best, _) = train(model, &ds.0, &split.0, &tc)?;
        into_handle(OsgModel(best), out);
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn osg_model_load(path: *const c_char, out: *mut *mut OsgModel) -> OsgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        into_handle(OsgModel(EmbeddingModel::load(string(path, "path")?)?), out);
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn osg_model_save(model: *const OsgModel, path: *const c_char) -> OsgStatus {
    guard(|| {
        deref(model, "model")?.0.save(string(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn osg_model_free(model: *mut OsgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Length of every embedding the model produces.
///
/// # Safety
/// `model` must be null or a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn osg_model_embed_dim(model: *const OsgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.embed_dim())
}

/// Embeds dataset instance `index` into `out` (unit norm).
///
/// # Safety
/// `model` and `ds` must be live handles; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn osg_model_embed_instance(
    model: *const OsgModel,
    ds: *const OsgDataset,
    index: usize,
    out: *mut f64,
    out_len: usize,
) -> OsgStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let inst = instance(deref(ds, "dataset")?, index)?;
        let trace = model.0.embed_video(inst)?;
        write_vec(trace.embedding(), out, out_len)
    })
}

/// Embeds raw features, `frames × dim` values in row-major order.
///
/// # Safety
/// `model` must be a live handle; `features` must hold `frames * dim`
/// doubles; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn osg_model_embed_features(
    model: *const OsgModel,
    features: *const f64,
    frames: usize,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> OsgStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let len = frames
            .checked_mul(dim)
            .ok_or_else(|| Fail::new(OsgStatus::OutOfRange, "frames * dim overflows"))?;
        let values = slice(features, len, "features")?.to_vec();
        let inst = Instance {
            instance_id: 0,
            class_id: 0,
            features: Tensor2::from_vec(frames, dim, values)?,
        };
        let trace = model.0.embed_video(&inst)?;
        write_vec(trace.embedding(), out, out_len)
    })
}

/// Projects a label embedding into the joint space (JE models only).
///
/// # Safety
/// `model` must be a live handle; `label` must hold `label_len` doubles;
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn osg_model_embed_label(
    model: *const OsgModel,
    label: *const f64,
    label_len: usize,
    out: *mut f64,
    out_len: usize,
) -> OsgStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let trace = model.0.embed_label(slice(label, label_len, "label")?)?;
        write_vec(trace.embedding(), out, out_len)
    })
}

// Classification and evaluation

/// κ-NN over `count` support vectors of length `dim` stored row-major.
///
/// # Safety
/// `support` must hold `count * dim` doubles, `labels` `count` values,
/// `query` `dim` doubles; `out_label` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn osg_knn_classify(
    support: *const f64,
    labels: *const u32,
    count: usize,
    dim: usize,
    query: *const f64,
    kappa: usize,
    out_label: *mut u32,
) -> OsgStatus {
    guard(|| {
        let out = out_ptr(out_label, "out_label")?;
        let len = count
            .checked_mul(dim)
            .ok_or_else(|| Fail::new(OsgStatus::OutOfRange, "count * dim overflows"))?;
        let flat = slice(support, len, "support")?;
        let labels = slice(labels, count, "labels")?;
        let query = slice(query, dim, "query")?;
        let items: Vec<(&[f64], u32)> = if dim == 0 {
            labels.iter().map(|&c| (&[][..], c)).collect()
        } else {
            flat.chunks(dim).zip(labels).map(|(v, &c)| (v, c)).collect()
        };
        *out = knn_classify(&items, query, kappa)?;
        Ok(())
    })
}

/// Episodic evaluation on the split's test classes. `out` receives three
/// results, in the order All, HoV, HoN.
///
/// # Safety
/// All handles must be live; `params` valid; `out` must hold three
/// `OsgSubsetResult` values.
#[no_mangle]
pub unsafe extern "C" fn osg_evaluate(
    model: *const OsgModel,
    ds: *const OsgDataset,
    split: *const OsgSplit,
    task: OsgTask,
    params: *const OsgEvalParams,
    out: *mut OsgSubsetResult,
) -> OsgStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let ds = deref(ds, "dataset")?;
        let split = deref(split, "split")?;
        let p = deref(params, "params")?;
        if out.is_null() {
            return Err(Fail::new(OsgStatus::NullPointer, "out is null"));
        }
        let spec = EvalSpec {
            episode: EpisodeSpec { n: p.n, k: p.k, m: p.m },
            episodes: p.episodes,
            seed: p.seed,
        };
        let task = match task {
            OsgTask::Fsg => Task::Fsg,
            OsgTask::CmFsg => Task::CmFsg,
        };
        let report = evaluate(&model.0, &ds.0, &split.0, task, &spec)?;
        let results = std::slice::from_raw_parts_mut(out, EvalSubset::ALL.len());
        for (slot, subset) in results.iter_mut().zip(EvalSubset::ALL) {
            *slot = match report.subset(subset) {
                Some(s) if s.skipped.is_none() => OsgSubsetResult {
                    reported: 1,
                    queries: s.queries as u64,
                    correct: s.correct as u64,
                    accuracy: s.accuracy,
                },
                _ => OsgSubsetResult::default(),
            };
        }
        Ok(())
    })
}
