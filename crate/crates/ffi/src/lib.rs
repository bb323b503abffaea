//! C interface to `deferlab`.
//!
//! Datasets and models are opaque heap handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`DlStatus`]; on failure the message is kept per thread and can be read
//! with [`dl_last_error_message`]. Panics are caught at the boundary and
//! reported as [`DlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use deferlab::datagen::{FeatureDistribution, SyntheticConfig, SyntheticSource};
use deferlab::defer::{read_csv, read_pair, write_pair, DeferDataset, HalfspacePair};
use deferlab::eval::{evaluate, generalization_bound, DeferralSystem};
use deferlab::milp::{build_milp, solve_milp, MilpConfig, MilpStatus};
use deferlab::train::{
    read_system, train_method, write_system, Method, TrainConfig, TrainedSystem,
};
use deferlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    Io = 5,
    Solver = 6,
    Diverged = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlMilpStatus {
    ProvenOptimal = 0,
    TimeLimitIncumbent = 1,
    Infeasible = 2,
}

/// Accuracy breakdown of a system on a dataset. Conditional accuracies are
/// NaN when their subset is empty.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DlReport {
    pub system_accuracy: f64,
    pub coverage: f64,
    pub classifier_accuracy_nondeferred: f64,
    pub human_accuracy_deferred: f64,
    pub n_points: usize,
}

/// Opaque dataset handle.
pub struct DlDataset(DeferDataset);

enum Model {
    Pair(HalfspacePair),
    System(TrainedSystem),
}

/// Opaque handle to a halfspace pair or a trained system.
pub struct DlModel(Model);

impl DlModel {
    fn system(&self) -> &dyn DeferralSystem {
        match &self.0 {
            Model::Pair(p) => p,
            Model::System(s) => s,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DlStatus {
    match err {
        Error::InvalidArgument(_) => DlStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => DlStatus::DimensionMismatch,
        Error::Parse { .. } => DlStatus::Parse,
        Error::Diverged(_) => DlStatus::Diverged,
        Error::Solver(_) => DlStatus::Solver,
        Error::Internal(_) => DlStatus::Internal,
        Error::Io(_) => DlStatus::Io,
    }
}

struct Fail(DlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail(DlStatus::Io, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DlStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the buffer size the full message needs,
/// including the terminator. Returns 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len) - 1;
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a dataset from row-major `features` (`n * d` values), labels and
/// human predictions (`n` each).
///
/// # Safety
/// Array arguments must point to the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_new(
    features: *const f64,
    n: usize,
    d: usize,
    labels: *const usize,
    human: *const usize,
    num_classes: usize,
    out: *mut *mut DlDataset,
) -> DlStatus {
    guard(|| {
        let total = n
            .checked_mul(d)
            .ok_or_else(|| Fail(DlStatus::InvalidArgument, "n * d overflows".into()))?;
        let x = slice(features, total, "features")?.to_vec();
        let y = slice(labels, n, "labels")?.to_vec();
        let h = slice(human, n, "human")?.to_vec();
        let ds = DeferDataset::from_flat(x, d, y, h, num_classes)?;
        put(out, DlDataset(ds))
    })
}

/// Reads a `x0,...,y,h` CSV file. `num_classes` of 0 infers the count.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_read_csv(
    path: *const c_char,
    num_classes: usize,
    out: *mut *mut DlDataset,
) -> DlStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let file = File::open(path).map_err(|e| Fail(DlStatus::Io, format!("{path}: {e}")))?;
        let classes = (num_classes > 0).then_some(num_classes);
        let ds = read_csv(BufReader::new(file), classes)?;
        put(out, DlDataset(ds))
    })
}

/// Draws a synthetic binary instance over a Gaussian mixture with
/// `components` components in `[0, 1]^d`. `train` receives the `n` training
/// points, `test` (if non-null) `test_size` held-out points, and `planted`
/// (if non-null) the planted pair.
///
/// # Safety
/// Output pointers must be null (where optional) or valid for writes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dl_synthetic_generate(
    d: usize,
    n: usize,
    components: usize,
    p_m: f64,
    p_h0: f64,
    p_h1: f64,
    seed: u64,
    test_size: usize,
    train: *mut *mut DlDataset,
    test: *mut *mut DlDataset,
    planted: *mut *mut DlModel,
) -> DlStatus {
    guard(|| {
        if train.is_null() {
            return Err(null("train"));
        }
        let config = SyntheticConfig {
            dim: d,
            n,
            distribution: FeatureDistribution::GaussianMixture {
                components,
                upper: 1.0,
            },
            p_m,
            p_h0,
            p_h1,
            seed,
        };
        let src = SyntheticSource::new(&config)?;
        let inst = src.instance()?;
        let held = if test.is_null() {
            None
        } else {
            Some(src.heldout(test_size)?)
        };
        put(train, DlDataset(inst.dataset))?;
        if let Some(h) = held {
            put(test, DlDataset(h))?;
        }
        if !planted.is_null() {
            put(planted, DlModel(Model::Pair(inst.planted_pair)))?;
        }
        Ok(())
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_len(ds: *const DlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_dim(ds: *const DlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim())
}

/// Class count, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_num_classes(ds: *const DlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.num_classes())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dl_dataset_free(ds: *mut DlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Solves the mixed-integer program on `train` with default margin and box.
/// `time_limit_s <= 0` runs to proven optimality. An infeasible program
/// returns `DL_STATUS_SOLVER` and leaves `out` untouched.
///
/// # Safety
/// `train` must be a live handle; `out` valid for writes; `status` null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dl_milp_solve(
    train: *const DlDataset,
    time_limit_s: f64,
    seed: u64,
    out: *mut *mut DlModel,
    status: *mut DlMilpStatus,
) -> DlStatus {
    guard(|| {
        let ds = &deref(train, "train")?.0;
        if out.is_null() {
            return Err(null("output handle"));
        }
        let config = MilpConfig {
            time_limit_s: (time_limit_s > 0.0).then_some(time_limit_s),
            seed,
            ..MilpConfig::default()
        };
        let sol = solve_milp(&build_milp(ds, &config)?, &config)?;
        if !status.is_null() {
            *status = match sol.status {
                MilpStatus::ProvenOptimal => DlMilpStatus::ProvenOptimal,
                MilpStatus::TimeLimitIncumbent => DlMilpStatus::TimeLimitIncumbent,
                MilpStatus::Infeasible => DlMilpStatus::Infeasible,
            };
        }
        let pair = sol
            .pair
            .ok_or_else(|| Fail(DlStatus::Solver, "program is infeasible".into()))?;
        put(out, DlModel(Model::Pair(pair)))
    })
}

/// Trains `method` (`rs`, `ce`, `ova`, `moe`, `confidence`, `selective`,
/// `triage`, ...) with default settings. `epochs` of 0 keeps the default.
///
/// # Safety
/// `train` and `val` must be live handles and `method` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dl_train(
    train: *const DlDataset,
    val: *const DlDataset,
    method: *const c_char,
    epochs: usize,
    seed: u64,
    out: *mut *mut DlModel,
) -> DlStatus {
    guard(|| {
        let train = &deref(train, "train")?.0;
        let val = &deref(val, "val")?.0;
        let method: Method = c_str(method, "method")?.parse()?;
        if out.is_null() {
            return Err(null("output handle"));
        }
        let mut config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        if epochs > 0 {
            config.epochs = epochs;
        }
        let system = train_method(method, train, val, &config)?;
        put(out, DlModel(Model::System(system)))
    })
}

/// Loads a pair or trained system file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dl_model_read(path: *const c_char, out: *mut *mut DlModel) -> DlStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Fail(DlStatus::Io, format!("{path}: {e}")))?;
        let model = if text.starts_with("pair,") {
            Model::Pair(read_pair(text.as_bytes())?)
        } else if text.starts_with("system,") {
            Model::System(read_system(text.as_bytes())?)
        } else {
            return Err(Fail(
                DlStatus::Parse,
                format!("{path}: neither a pair nor a model file"),
            ));
        };
        put(out, DlModel(model))
    })
}

/// Writes `model` in the format [`dl_model_read`] accepts.
///
/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dl_model_write(model: *const DlModel, path: *const c_char) -> DlStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let path = PathBuf::from(c_str(path, "path")?);
        let mut buf = Vec::new();
        match &model.0 {
            Model::Pair(p) => write_pair(p, &mut buf)?,
            Model::System(s) => write_system(s, &mut buf)?,
        }
        std::fs::write(&path, buf)
            .map_err(|e| Fail(DlStatus::Io, format!("{}: {e}", path.display())))
    })
}

/// Input dimension the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dl_model_dim(model: *const DlModel) -> usize {
    model.as_ref().map_or(0, |m| m.system().input_dim())
}

/// Decides a single point `x` of length `d`: `*deferred` becomes 1 when the
/// point goes to the human, and `*label` holds the classifier's label.
///
/// # Safety
/// `x` must point to `d` values; output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dl_model_decide(
    model: *const DlModel,
    x: *const f64,
    d: usize,
    deferred: *mut i32,
    label: *mut usize,
) -> DlStatus {
    guard(|| {
        let sys = deref(model, "model")?.system();
        let x = slice(x, d, "x")?;
        if deferred.is_null() || label.is_null() {
            return Err(null("output"));
        }
        if d != sys.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.input_dim(),
                got: d,
            }
            .into());
        }
        let decision = sys.decide_at(x, sys.threshold());
        *deferred = i32::from(decision.deferred);
        *label = decision.classifier_label;
        Ok(())
    })
}

/// Evaluates `model` on `ds`.
///
/// # Safety
/// Handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dl_evaluate(
    model: *const DlModel,
    ds: *const DlDataset,
    out: *mut DlReport,
) -> DlStatus {
    guard(|| {
        let sys = deref(model, "model")?.system();
        let ds = &deref(ds, "dataset")?.0;
        if out.is_null() {
            return Err(null("report"));
        }
        let r = evaluate(sys, ds)?;
        *out = DlReport {
            system_accuracy: r.system_accuracy,
            coverage: r.coverage,
            classifier_accuracy_nondeferred: r.classifier_accuracy_nondeferred.unwrap_or(f64::NAN),
            human_accuracy_deferred: r.human_accuracy_deferred.unwrap_or(f64::NAN),
            n_points: r.n_points,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dl_model_free(model: *mut DlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Upper bound on the population system loss of a halfspace pair with
/// weight norms `k_m`, `k_r` in dimension `d` trained on `n` points.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dl_generalization_bound(
    train_loss: f64,
    k_m: f64,
    k_r: f64,
    d: usize,
    n: usize,
    human_error_rate: f64,
    delta: f64,
    out: *mut f64,
) -> DlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = generalization_bound(train_loss, k_m, k_r, d, n, human_error_rate, delta)?;
        Ok(())
    })
}
