//! Report types and their text / JSON renderings.
//!
//! The table mirrors the usual results layout (`Method | S | OBS | OFS |
//! mAP`) with three decimals, followed by the confusion-matrix cells.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::harness::sweep::SweepResult;
use crate::matching::MatchConfig;
use crate::metrics::{separability, SeparabilityScores};
use crate::taxonomy::{ExtendedConfusionMatrix, ThresholdConfig};
use crate::toylab::ToyRun;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub images: u64,
    pub predictions: u64,
    pub fg_objects: u64,
    pub ood_objects: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub thresholds: ThresholdConfig,
    pub matching: MatchConfig,
    pub confusion: ExtendedConfusionMatrix,
    pub separability: SeparabilityScores,
    pub ap_iou: f64,
    pub ap_per_class: Vec<Option<f64>>,
    pub map: Option<f64>,
    pub auroc: Option<f64>,
    pub tpr_target: f64,
    pub fpr_at_tpr: Option<f64>,
    pub counts: DatasetCounts,
    /// Path of the histogram CSV, when one was written.
    pub histogram: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

/// Three decimals, round-half-to-even on the exact binary value.
pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn opt3(v: Option<f64>) -> String {
    v.map(fmt3).unwrap_or_else(|| "n/a".into())
}

impl EvalReport {
    /// Conservation of objects across the matrix and S vs. OBS/OFS.
    pub fn check(&self) -> Result<()> {
        let (fg, ood) = self.confusion.object_totals();
        if fg != self.counts.fg_objects || ood != self.counts.ood_objects {
            return Err(Error::Invariant(format!(
                "matrix accounts for {fg} FG / {ood} OOD objects, dataset has {} / {}",
                self.counts.fg_objects, self.counts.ood_objects
            )));
        }
        let sc = &self.separability;
        let s = separability(sc.obs, sc.ofs, sc.beta)?;
        if s != sc.s {
            return Err(Error::Invariant(format!(
                "S = {} does not recompute ({s})",
                sc.s
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["confusion"]["tn"] = Value::String("n/a".into());
        serde_json::to_string_pretty(&v).expect("value serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let map_col = format!("mAP@{}", self.ap_iou);
        let sc = &self.separability;
        let width = self.label.len().max(6);
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>8}",
            "Method", "S", "OBS", "OFS", map_col
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>8}",
            self.label,
            fmt3(sc.s),
            fmt3(sc.obs),
            fmt3(sc.ofs),
            opt3(self.map)
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "operating point: t_ID_BG = {}, t_ID_FG = {}, beta = {}",
            fmt3(self.thresholds.t_id_bg),
            fmt3(self.thresholds.t_id_fg),
            fmt3(sc.beta)
        );
        let _ = writeln!(
            out,
            "matching: overlap >= {}, OOD overlap = {}",
            fmt3(self.matching.overlap_threshold),
            if self.matching.iop_for_ood {
                "IoP"
            } else {
                "IoU"
            }
        );
        let _ = writeln!(out);
        let c = &self.confusion;
        let _ = writeln!(out, "predicted \\ actual        BG       OOD        FG");
        let _ = writeln!(
            out,
            "BG                 {:>9} {:>9} {:>9}",
            "n/a", c.fn_o, c.fn_
        );
        let _ = writeln!(
            out,
            "OOD                {:>9} {:>9} {:>9}",
            c.fo_n, c.to, c.fo_p
        );
        let _ = writeln!(
            out,
            "FG                 {:>9} {:>9} {:>9}",
            c.fp, c.fp_o, c.tp
        );
        let _ = writeln!(out);
        let ap: Vec<String> = self
            .ap_per_class
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{k}:{}", opt3(*v)))
            .collect();
        let _ = writeln!(out, "AP@{} per class: {}", self.ap_iou, ap.join(" "));
        let _ = writeln!(out, "AUROC (FG vs OOD matches): {}", opt3(self.auroc));
        let _ = writeln!(
            out,
            "FPR@{}%TPR (FG vs OOD matches): {}",
            (self.tpr_target * 100.0).round(),
            opt3(self.fpr_at_tpr)
        );
        let n = &self.counts;
        let _ = writeln!(
            out,
            "images {}, predictions {}, FG objects {}, OOD objects {}",
            n.images, n.predictions, n.fg_objects, n.ood_objects
        );
        if let Some(h) = &self.histogram {
            let _ = writeln!(out, "histogram: {h}");
        }
        let _ = writeln!(
            out,
            "note: AUROC/FPR use matched-object confidences only; background true negatives are not counted."
        );
        out
    }
}

/// Serialize a report. JSON keeps full precision; the table uses 3 decimals.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Json => report.to_json(),
    }
}

pub fn sweep_summary(sweep: &SweepResult) -> String {
    let b = &sweep.best;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "grid step {}, {} threshold pairs, beta = {}",
        sweep.step,
        sweep.grid.len(),
        fmt3(sweep.beta)
    );
    let _ = writeln!(
        out,
        "{:>8}  {:>8}  {:>6}  {:>6}  {:>6}",
        "t_ID_BG", "t_ID_FG", "S", "OBS", "OFS"
    );
    let _ = writeln!(
        out,
        "{:>8}  {:>8}  {:>6}  {:>6}  {:>6}",
        fmt3(b.t_id_bg),
        fmt3(b.t_id_fg),
        fmt3(b.s),
        fmt3(b.obs),
        fmt3(b.ofs)
    );
    out
}

pub fn sweep_grid_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("t_id_bg,t_id_fg,obs,ofs,s\n");
    for p in &sweep.grid {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.t_id_bg, p.t_id_fg, p.obs, p.ofs, p.s
        );
    }
    out
}

pub fn toy_table(runs: &[ToyRun]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14}  {:>6}  {:>6}  {:>6}  {:>8}  {:>8}  {:>7}  {:>7}",
        "Method", "S", "OBS", "OFS", "t_ID_BG", "t_ID_FG", "H_FG", "H_OOD"
    );
    for r in runs {
        let e = &r.evaluation;
        let name = format!(
            "{} seed {}",
            if r.use_me { "ME" } else { "baseline" },
            r.seed
        );
        let _ = writeln!(
            out,
            "{:<14}  {:>6}  {:>6}  {:>6}  {:>8}  {:>8}  {:>7}  {:>7}",
            name,
            fmt3(e.scores.s),
            fmt3(e.scores.obs),
            fmt3(e.scores.ofs),
            fmt3(e.thresholds.t_id_bg),
            fmt3(e.thresholds.t_id_fg),
            fmt3(e.mean_entropy_fg),
            fmt3(e.mean_entropy_ood)
        );
    }
    let s: Vec<f64> = runs.iter().map(|r| r.evaluation.scores.s).collect();
    let gap: Vec<f64> = runs.iter().map(|r| r.evaluation.entropy_gap()).collect();
    let _ = writeln!(
        out,
        "median S = {}, median entropy gap (H_OOD - H_FG) = {}",
        fmt3(crate::toylab::median(&s)),
        fmt3(crate::toylab::median(&gap))
    );
    out
}
