//! C ABI over the `sepeval` engine.
//!
//! Conventions:
//! - every fallible function returns a [`SepStatus`]; on failure a message
//!   is available from [`sep_last_error`] on the same thread;
//! - outputs are written through caller-provided pointers only on success;
//! - datasets are opaque handles created by `sep_dataset_new` or
//!   `sep_dataset_load_jsonl` and released with `sep_dataset_free`;
//! - strings returned by the library are NUL-terminated UTF-8 and must be
//!   released with `sep_string_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sepeval::harness::{
    evaluate, parse_ground_truth, parse_predictions, sweep_thresholds, Dataset, EvalConfig,
    MatchedDataset,
};
use sepeval::meloss::{entropy, me_loss, BatchGroups, ProbabilityVector};
use sepeval::{
    classify, separability, BoundingBox, Error, ExtendedConfusionMatrix, GroundTruthObject,
    MatchConfig, ObjectKind, PredictedCategory, Prediction, SeparabilityScores, ThresholdConfig,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidUtf8 = 3,
    Parse = 4,
    Io = 5,
    Internal = 6,
    Panic = 7,
}

/// Threshold bucket of a confidence value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepCategory {
    IdBackground = 0,
    Ood = 1,
    IdForeground = 2,
}

/// Ground-truth kind for `sep_dataset_add_ground_truth`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepObjectKind {
    Foreground = 0,
    Ood = 1,
}

/// The tracked cells of the extended confusion matrix (TN is not tracked).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SepMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub to: u64,
    pub fn_o: u64,
    pub fo_n: u64,
    pub fo_p: u64,
    pub fp_o: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SepScores {
    pub obs: f64,
    pub ofs: f64,
    pub s: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SepEvalOptions {
    pub t_id_bg: f64,
    pub t_id_fg: f64,
    pub overlap_threshold: f64,
    pub iop_for_ood: bool,
    pub beta: f64,
    pub tpr_target: f64,
    /// 0 uses the global thread pool.
    pub workers: usize,
}

/// Threshold-independent metrics are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SepEvalSummary {
    pub matrix: SepMatrix,
    pub scores: SepScores,
    pub map: f64,
    pub auroc: f64,
    pub fpr_at_tpr: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SepOperatingPoint {
    pub t_id_bg: f64,
    pub t_id_fg: f64,
    pub scores: SepScores,
}

/// Opaque dataset handle.
pub struct SepDataset {
    n_classes: usize,
    predictions: Vec<Prediction>,
    ground_truth: Vec<GroundTruthObject>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(SepStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidInput(_) => SepStatus::InvalidInput,
            Error::Parse { .. } => SepStatus::Parse,
            Error::Io(_) => SepStatus::Io,
            Error::Diverged { .. } | Error::Invariant(_) => SepStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SepStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SepStatus::InvalidInput, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SepStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SepStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside sepeval");
            SepStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SepStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(SepStatus::Internal, "string contains NUL".into()))
}

impl From<ExtendedConfusionMatrix> for SepMatrix {
    fn from(m: ExtendedConfusionMatrix) -> Self {
        Self {
            tp: m.tp,
            fn_: m.fn_,
            fp: m.fp,
            to: m.to,
            fn_o: m.fn_o,
            fo_n: m.fo_n,
            fo_p: m.fo_p,
            fp_o: m.fp_o,
        }
    }
}

impl From<SepMatrix> for ExtendedConfusionMatrix {
    fn from(m: SepMatrix) -> Self {
        Self {
            tp: m.tp,
            fn_: m.fn_,
            fp: m.fp,
            to: m.to,
            fn_o: m.fn_o,
            fo_n: m.fo_n,
            fo_p: m.fo_p,
            fp_o: m.fp_o,
        }
    }
}

impl From<SeparabilityScores> for SepScores {
    fn from(s: SeparabilityScores) -> Self {
        Self {
            obs: s.obs,
            ofs: s.ofs,
            s: s.s,
        }
    }
}

impl SepEvalOptions {
    fn to_config(self) -> Result<EvalConfig, Failure> {
        let cfg = EvalConfig {
            matching: MatchConfig {
                overlap_threshold: self.overlap_threshold,
                iop_for_ood: self.iop_for_ood,
            },
            thresholds: ThresholdConfig::new(self.t_id_bg, self.t_id_fg)?,
            beta: self.beta,
            tpr_target: self.tpr_target,
        };
        cfg.matching.validate()?;
        if !(cfg.tpr_target > 0.0 && cfg.tpr_target <= 1.0) {
            return Err(invalid(format!(
                "tpr_target {} must lie in (0, 1]",
                cfg.tpr_target
            )));
        }
        Ok(cfg)
    }

    fn workers(&self) -> Option<usize> {
        (self.workers > 0).then_some(self.workers)
    }
}

impl SepDataset {
    fn dataset(&self) -> Result<Dataset, Failure> {
        Ok(Dataset::new(
            self.n_classes,
            self.predictions.clone(),
            self.ground_truth.clone(),
        )?)
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Defaults: thresholds 0.39 / 0.42, IoU 0.5 without IoP, β = 1, TPR 0.95.
#[no_mangle]
pub extern "C" fn sep_eval_options_default() -> SepEvalOptions {
    default_options()
}

fn default_options() -> SepEvalOptions {
    let d = EvalConfig::default();
    SepEvalOptions {
        t_id_bg: d.thresholds.t_id_bg,
        t_id_fg: d.thresholds.t_id_fg,
        overlap_threshold: d.matching.overlap_threshold,
        iop_for_ood: d.matching.iop_for_ood,
        beta: d.beta,
        tpr_target: d.tpr_target,
        workers: 0,
    }
}

#[no_mangle]
pub unsafe extern "C" fn sep_classify(
    confidence: f64,
    t_id_bg: f64,
    t_id_fg: f64,
    out: *mut SepCategory,
) -> SepStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let t = ThresholdConfig::new(t_id_bg, t_id_fg)?;
        *out = match classify(confidence, &t)? {
            PredictedCategory::IdBackground => SepCategory::IdBackground,
            PredictedCategory::Ood => SepCategory::Ood,
            PredictedCategory::IdForeground => SepCategory::IdForeground,
        };
        Ok(())
    })
}

/// F-beta style combination of OBS and OFS.
#[no_mangle]
pub unsafe extern "C" fn sep_separability(
    obs: f64,
    ofs: f64,
    beta: f64,
    out: *mut f64,
) -> SepStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = separability(obs, ofs, beta)?;
        Ok(())
    })
}

/// Cell-wise sum of two matrices.
#[no_mangle]
pub unsafe extern "C" fn sep_matrix_merge(
    a: *const SepMatrix,
    b: *const SepMatrix,
    out: *mut SepMatrix,
) -> SepStatus {
    guard(|| {
        let a = *a.as_ref().ok_or_else(|| null("a"))?;
        let b = *b.as_ref().ok_or_else(|| null("b"))?;
        let out = out_ref(out, "out")?;
        let sum = ExtendedConfusionMatrix::from(a).merge(&ExtendedConfusionMatrix::from(b));
        *out = sum.into();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sep_matrix_scores(
    m: *const SepMatrix,
    beta: f64,
    out: *mut SepScores,
) -> SepStatus {
    guard(|| {
        let m = *m.as_ref().ok_or_else(|| null("m"))?;
        let out = out_ref(out, "out")?;
        *out = SeparabilityScores::from_matrix(&m.into(), beta)?.into();
        Ok(())
    })
}

/// Shannon entropy in nats of one probability vector.
#[no_mangle]
pub unsafe extern "C" fn sep_entropy(probs: *const f64, len: usize, out: *mut f64) -> SepStatus {
    guard(|| {
        let p = slice(probs, len, "probs")?;
        let out = out_ref(out, "out")?;
        *out = entropy(&ProbabilityVector::new(p.to_vec())?);
        Ok(())
    })
}

fn rows(data: &[f64], n: usize, n_classes: usize) -> Result<Vec<ProbabilityVector>, Failure> {
    (0..n)
        .map(|i| {
            Ok(ProbabilityVector::new(
                data[i * n_classes..(i + 1) * n_classes].to_vec(),
            )?)
        })
        .collect()
}

/// Entropy-margin loss over row-major `n × n_classes` probability matrices.
#[no_mangle]
pub unsafe extern "C" fn sep_me_loss(
    fg_probs: *const f64,
    n_fg: usize,
    ood_probs: *const f64,
    n_ood: usize,
    n_classes: usize,
    margin: f64,
    out: *mut f64,
) -> SepStatus {
    guard(|| {
        if n_classes == 0 {
            return Err(invalid("n_classes must be positive"));
        }
        if !margin.is_finite() || margin < 0.0 {
            return Err(invalid(format!(
                "margin {margin} must be finite and non-negative"
            )));
        }
        let len = |n: usize| {
            n.checked_mul(n_classes)
                .ok_or_else(|| invalid("size overflow"))
        };
        let fg = slice(fg_probs, len(n_fg)?, "fg_probs")?;
        let ood = slice(ood_probs, len(n_ood)?, "ood_probs")?;
        let out = out_ref(out, "out")?;
        let groups = BatchGroups {
            fg_samples: rows(fg, n_fg, n_classes)?,
            ood_samples: rows(ood, n_ood, n_classes)?,
        };
        *out = me_loss(&groups, margin);
        Ok(())
    })
}

/// New empty dataset; NULL when `n_classes` is 0.
#[no_mangle]
pub extern "C" fn sep_dataset_new(n_classes: usize) -> *mut SepDataset {
    if n_classes == 0 {
        set_last_error("n_classes must be positive");
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(SepDataset {
        n_classes,
        predictions: Vec::new(),
        ground_truth: Vec::new(),
    }))
}

/// Release a dataset. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sep_dataset_free(ds: *mut SepDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Load JSON-lines ground truth and predictions from two files.
#[no_mangle]
pub unsafe extern "C" fn sep_dataset_load_jsonl(
    gt_path: *const c_char,
    pred_path: *const c_char,
    out: *mut *mut SepDataset,
) -> SepStatus {
    guard(|| {
        let gt_path = c_str(gt_path, "gt_path")?;
        let pred_path = c_str(pred_path, "pred_path")?;
        let out = out_ref(out, "out")?;
        let open = |p: &str| {
            File::open(p)
                .map(BufReader::new)
                .map_err(|e| Failure(SepStatus::Io, format!("{p}: {e}")))
        };
        let ground_truth = parse_ground_truth(open(gt_path)?)?;
        let (n_classes, predictions) = parse_predictions(open(pred_path)?)?;
        let ds = Dataset::new(n_classes, predictions, ground_truth)?;
        *out = Box::into_raw(Box::new(SepDataset {
            n_classes: ds.n_classes,
            predictions: ds.predictions,
            ground_truth: ds.ground_truth,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sep_dataset_n_classes(ds: *const SepDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.n_classes)
}

/// `bbox` points to `[x1, y1, x2, y2]`; `class_id` is ignored for OOD objects.
#[no_mangle]
pub unsafe extern "C" fn sep_dataset_add_ground_truth(
    ds: *mut SepDataset,
    image_id: *const c_char,
    bbox: *const f64,
    kind: SepObjectKind,
    class_id: usize,
) -> SepStatus {
    guard(|| {
        let ds = out_ref(ds, "ds")?;
        let image = c_str(image_id, "image_id")?;
        let b = slice(bbox, 4, "bbox")?;
        let bbox = BoundingBox::new(b[0], b[1], b[2], b[3])?;
        let kind = match kind {
            SepObjectKind::Foreground if class_id >= ds.n_classes => {
                return Err(invalid(format!(
                    "class {class_id} out of range for {} classes",
                    ds.n_classes
                )))
            }
            SepObjectKind::Foreground => ObjectKind::Foreground(class_id),
            SepObjectKind::Ood => ObjectKind::Ood,
        };
        ds.ground_truth
            .push(GroundTruthObject::new(image, bbox, kind));
        Ok(())
    })
}

/// `scores` must hold exactly `n_classes` values in `[0, 1]`.
#[no_mangle]
pub unsafe extern "C" fn sep_dataset_add_prediction(
    ds: *mut SepDataset,
    image_id: *const c_char,
    bbox: *const f64,
    scores: *const f64,
    n_scores: usize,
) -> SepStatus {
    guard(|| {
        let ds = out_ref(ds, "ds")?;
        let image = c_str(image_id, "image_id")?;
        let b = slice(bbox, 4, "bbox")?;
        let scores = slice(scores, n_scores, "scores")?;
        if scores.len() != ds.n_classes {
            return Err(invalid(format!(
                "{} scores given, expected {}",
                scores.len(),
                ds.n_classes
            )));
        }
        let bbox = BoundingBox::new(b[0], b[1], b[2], b[3])?;
        ds.predictions
            .push(Prediction::new(image, bbox, scores.to_vec())?);
        Ok(())
    })
}

/// Evaluate at one operating point. `opts` may be NULL for the defaults.
#[no_mangle]
pub unsafe extern "C" fn sep_dataset_evaluate(
    ds: *const SepDataset,
    opts: *const SepEvalOptions,
    out: *mut SepEvalSummary,
) -> SepStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let opts = opts.as_ref().copied().unwrap_or_else(default_options);
        let out = out_ref(out, "out")?;
        let r = evaluate(&ds.dataset()?, &opts.to_config()?, opts.workers())?;
        *out = SepEvalSummary {
            matrix: r.confusion.into(),
            scores: r.separability.into(),
            map: r.map.unwrap_or(f64::NAN),
            auroc: r.auroc.unwrap_or(f64::NAN),
            fpr_at_tpr: r.fpr_at_tpr.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Full report as a JSON string; release with `sep_string_free`.
#[no_mangle]
pub unsafe extern "C" fn sep_dataset_report_json(
    ds: *const SepDataset,
    opts: *const SepEvalOptions,
    out: *mut *mut c_char,
) -> SepStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let opts = opts.as_ref().copied().unwrap_or_else(default_options);
        let out = out_ref(out, "out")?;
        let r = evaluate(&ds.dataset()?, &opts.to_config()?, opts.workers())?;
        *out = to_c_string(r.to_json())?;
        Ok(())
    })
}

/// Best `(t_id_bg, t_id_fg)` on a grid of spacing `step`. Matching and β
/// come from `opts` (NULL for defaults); its thresholds are ignored.
#[no_mangle]
pub unsafe extern "C" fn sep_dataset_sweep(
    ds: *const SepDataset,
    opts: *const SepEvalOptions,
    step: f64,
    out: *mut SepOperatingPoint,
) -> SepStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let opts = opts.as_ref().copied().unwrap_or_else(default_options);
        let out = out_ref(out, "out")?;
        let cfg = opts.to_config()?;
        let matched = MatchedDataset::build(&ds.dataset()?, &cfg.matching, opts.workers())?;
        let best = sweep_thresholds(&matched, cfg.beta, step)?.best;
        *out = SepOperatingPoint {
            t_id_bg: best.t_id_bg,
            t_id_fg: best.t_id_fg,
            scores: SepScores {
                obs: best.obs,
                ofs: best.ofs,
                s: best.s,
            },
        };
        Ok(())
    })
}

/// Confidence histogram as CSV; release with `sep_string_free`.
#[no_mangle]
pub unsafe extern "C" fn sep_dataset_histogram_csv(
    ds: *const SepDataset,
    opts: *const SepEvalOptions,
    out: *mut *mut c_char,
) -> SepStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let opts = opts.as_ref().copied().unwrap_or_else(default_options);
        let out = out_ref(out, "out")?;
        let cfg = opts.to_config()?;
        let matched = MatchedDataset::build(&ds.dataset()?, &cfg.matching, opts.workers())?;
        *out = to_c_string(matched.histogram().to_csv())?;
        Ok(())
    })
}
