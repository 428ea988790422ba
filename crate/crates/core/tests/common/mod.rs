//! Independent reference implementations and random scene generators shared
//! by the integration tests. Nothing here calls the code under test except
//! constructors.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use sepeval::{BoundingBox, GroundTruthObject, ObjectKind, Prediction};

/// Coordinates are multiples of `1/RES`, so rasterizing at `RES` cells per
/// unit counts areas exactly.
pub const RES: i64 = 4;

pub fn grid_box(x1: i64, y1: i64, x2: i64, y2: i64) -> BoundingBox {
    let s = RES as f64;
    BoundingBox::new(x1 as f64 / s, y1 as f64 / s, x2 as f64 / s, y2 as f64 / s).unwrap()
}

fn cells(b: &BoundingBox) -> (i64, i64, i64, i64) {
    let s = RES as f64;
    (
        (b.x1() * s).round() as i64,
        (b.y1() * s).round() as i64,
        (b.x2() * s).round() as i64,
        (b.y2() * s).round() as i64,
    )
}

/// Count grid cells covered by both boxes and by either.
pub fn raster_counts(a: &BoundingBox, b: &BoundingBox) -> (u64, u64, u64, u64) {
    let (ax1, ay1, ax2, ay2) = cells(a);
    let (bx1, by1, bx2, by2) = cells(b);
    let (mut inter, mut union, mut area_a, mut area_b) = (0, 0, 0, 0);
    for x in ax1.min(bx1)..ax2.max(bx2) {
        for y in ay1.min(by1)..ay2.max(by2) {
            let in_a = x >= ax1 && x < ax2 && y >= ay1 && y < ay2;
            let in_b = x >= bx1 && x < bx2 && y >= by1 && y < by2;
            inter += (in_a && in_b) as u64;
            union += (in_a || in_b) as u64;
            area_a += in_a as u64;
            area_b += in_b as u64;
        }
    }
    (inter, union, area_a, area_b)
}

pub fn raster_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (i, u, _, _) = raster_counts(a, b);
    i as f64 / u as f64
}

pub fn raster_iop(pred: &BoundingBox, gt: &BoundingBox) -> f64 {
    let (i, _, area_pred, _) = raster_counts(pred, gt);
    i as f64 / area_pred as f64
}

/// Confidence order: descending, ties by lower index.
pub fn ranked(preds: &[Prediction]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&a, &b| {
        preds[b]
            .confidence()
            .partial_cmp(&preds[a].confidence())
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Exhaustive matching: among all one-to-one assignments whose pairs clear
/// the threshold, pick the lexicographically best one when predictions are
/// taken in confidence order and each prefers (matched, larger overlap,
/// lower gt index).
pub fn brute_force_matching(
    preds: &[Prediction],
    gts: &[GroundTruthObject],
    overlap: impl Fn(&BoundingBox, &GroundTruthObject) -> f64,
    threshold: f64,
) -> Vec<Option<usize>> {
    let order = ranked(preds);
    let ov: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| gts.iter().map(|g| overlap(&p.bbox, g)).collect())
        .collect();

    // key per prediction in confidence order: (matched, overlap, -gt index)
    type Key = Vec<(bool, f64, i64)>;
    fn better(a: &Key, b: &Key) -> bool {
        for (x, y) in a.iter().zip(b) {
            if x.0 != y.0 {
                return x.0;
            }
            if x.1 != y.1 {
                return x.1 > y.1;
            }
            if x.2 != y.2 {
                return x.2 > y.2;
            }
        }
        false
    }

    let mut best: Option<(Key, Vec<Option<usize>>)> = None;
    let mut current = vec![None; preds.len()];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        k: usize,
        preds: usize,
        gts: usize,
        ov: &[Vec<f64>],
        threshold: f64,
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        visit: &mut dyn FnMut(&[Option<usize>]),
    ) {
        if k == preds {
            visit(current);
            return;
        }
        current[k] = None;
        rec(k + 1, preds, gts, ov, threshold, used, current, visit);
        for g in 0..gts {
            if !used[g] && ov[k][g] >= threshold {
                used[g] = true;
                current[k] = Some(g);
                rec(k + 1, preds, gts, ov, threshold, used, current, visit);
                used[g] = false;
                current[k] = None;
            }
        }
    }
    let mut used = vec![false; gts.len()];
    rec(
        0,
        preds.len(),
        gts.len(),
        &ov,
        threshold,
        &mut used,
        &mut current,
        &mut |assign: &[Option<usize>]| {
            let key: Key = order
                .iter()
                .map(|&p| match assign[p] {
                    Some(g) => (true, ov[p][g], -(g as i64)),
                    None => (false, 0.0, 0),
                })
                .collect();
            if best.as_ref().is_none_or(|(bk, _)| better(&key, bk)) {
                best = Some((key, assign.to_vec()));
            }
        },
    );
    best.map(|(_, a)| a).unwrap_or_default()
}

/// Bucket 0 = background, 1 = OOD, 2 = foreground.
pub fn bucket(conf: f64, t_bg: f64, t_fg: f64) -> usize {
    if conf < t_bg {
        0
    } else if conf < t_fg {
        1
    } else {
        2
    }
}

/// Cell name for (actual, predicted bucket). Actual: `Some(true)` for a
/// foreground object, `Some(false)` for OOD, `None` for no object.
pub fn rule_table(actual: Option<bool>, predicted: usize) -> Option<&'static str> {
    const TABLE: [[Option<&str>; 3]; 3] = [
        // BG        OOD           FG
        [Some("fn"), Some("fo_p"), Some("tp")],   // FG object
        [Some("fn_o"), Some("to"), Some("fp_o")], // OOD object
        [None, Some("fo_n"), Some("fp")],         // nothing
    ];
    let row = match actual {
        Some(true) => 0,
        Some(false) => 1,
        None => 2,
    };
    TABLE[row][predicted]
}

/// Cell counts from a matching (`assign[p] = Some(gt)`) via the rule table.
pub fn oracle_cells(
    preds: &[Prediction],
    gts: &[GroundTruthObject],
    assign: &[Option<usize>],
    t_bg: f64,
    t_fg: f64,
    into: &mut BTreeMap<&'static str, u64>,
) {
    let mut claimed = vec![None; gts.len()];
    for (p, a) in assign.iter().enumerate() {
        match a {
            Some(g) => claimed[*g] = Some(p),
            None => {
                if let Some(cell) = rule_table(None, bucket(preds[p].confidence(), t_bg, t_fg)) {
                    *into.entry(cell).or_default() += 1;
                }
            }
        }
    }
    for (g, c) in claimed.iter().enumerate() {
        let actual = Some(matches!(gts[g].kind, ObjectKind::Foreground(_)));
        let b = c.map_or(0, |p| bucket(preds[p].confidence(), t_bg, t_fg));
        *into.entry(rule_table(actual, b).unwrap()).or_default() += 1;
    }
}

pub fn cells_of(m: &sepeval::ExtendedConfusionMatrix) -> BTreeMap<&'static str, u64> {
    [
        ("tp", m.tp),
        ("fn", m.fn_),
        ("fp", m.fp),
        ("to", m.to),
        ("fn_o", m.fn_o),
        ("fo_n", m.fo_n),
        ("fo_p", m.fo_p),
        ("fp_o", m.fp_o),
    ]
    .into_iter()
    .filter(|(_, v)| *v > 0)
    .collect()
}

/// Mann-Whitney AUROC by explicit pair counting, ties counted half.
pub fn pair_count_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in id {
        for &b in ood {
            twice += if a > b {
                2
            } else if a == b {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

/// FPR at the highest threshold among all observed scores with TPR ≥ target.
pub fn sweep_fpr(id: &[f64], ood: &[f64], target: f64) -> f64 {
    let mut ts: Vec<f64> = id.iter().chain(ood).copied().collect();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for t in ts {
        let tpr = id.iter().filter(|&&s| s >= t).count() as f64 / id.len() as f64;
        if tpr >= target {
            return ood.iter().filter(|&&s| s >= t).count() as f64 / ood.len() as f64;
        }
    }
    1.0
}

/// AP from ranked hits: every cutoff is a PR point; the interpolated
/// precision at recall r is the best precision at any cutoff with recall ≥ r.
pub fn brute_force_ap(hits: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let points: Vec<(f64, f64)> = (1..=hits.len())
        .map(|k| {
            let tp = hits[..k].iter().filter(|h| **h).count();
            (tp as f64 / k as f64, tp as f64 / n_gt as f64)
        })
        .collect();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for &(_, r) in &points {
        if r > prev {
            let p = points
                .iter()
                .filter(|(_, r2)| *r2 >= r)
                .map(|(p2, _)| *p2)
                .fold(0.0, f64::max);
            ap += (r - prev) * p;
            prev = r;
        }
    }
    ap
}

/// Class-aware AP reference: per image, predictions whose argmax is `class`
/// are matched (exhaustively) to foreground objects of that class; the
/// ranked hit list is then integrated.
pub fn oracle_ap(images: &[Scene], class: usize, iou_thr: f64) -> Option<f64> {
    let mut rows: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut n_gt = 0;
    for (ii, img) in images.iter().enumerate() {
        let gts: Vec<GroundTruthObject> = img
            .gts
            .iter()
            .filter(|g| g.kind == ObjectKind::Foreground(class))
            .cloned()
            .collect();
        n_gt += gts.len();
        let picked: Vec<usize> = (0..img.preds.len())
            .filter(|&p| argmax(img.preds[p].scores()) == class)
            .collect();
        let preds: Vec<Prediction> = picked.iter().map(|&p| img.preds[p].clone()).collect();
        let assign = brute_force_matching(&preds, &gts, |b, g| raster_iou(b, &g.bbox), iou_thr);
        for (k, &p) in picked.iter().enumerate() {
            rows.push((img.preds[p].confidence(), ii, p, assign[k].is_some()));
        }
    }
    if n_gt == 0 {
        return None;
    }
    rows.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let hits: Vec<bool> = rows.iter().map(|r| r.3).collect();
    Some(brute_force_ap(&hits, n_gt))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// One image's records.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: String,
    pub preds: Vec<Prediction>,
    pub gts: Vec<GroundTruthObject>,
}

pub struct SceneSpec {
    pub n_classes: usize,
    pub max_preds: usize,
    pub max_gts: usize,
    /// Grid cells per side of the image.
    pub extent: i64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_classes: 3,
            max_preds: 6,
            max_gts: 4,
            extent: 24,
        }
    }
}

fn random_box(rng: &mut dyn RngCore, extent: i64) -> BoundingBox {
    let x1 = rng.random_range(0..extent - 1);
    let y1 = rng.random_range(0..extent - 1);
    let x2 = rng.random_range(x1 + 1..=extent);
    let y2 = rng.random_range(y1 + 1..=extent);
    grid_box(x1, y1, x2, y2)
}

/// Confidences on a coarse lattice so ties and threshold hits happen.
fn random_scores(rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(0..=40) as f64 / 40.0)
        .collect()
}

pub fn random_scene(rng: &mut dyn RngCore, image: &str, spec: &SceneSpec) -> Scene {
    let n_gt = rng.random_range(0..=spec.max_gts);
    let mut gts = Vec::with_capacity(n_gt);
    for _ in 0..n_gt {
        let b = random_box(rng, spec.extent);
        let kind = if rng.random_bool(0.4) {
            ObjectKind::Ood
        } else {
            ObjectKind::Foreground(rng.random_range(0..spec.n_classes))
        };
        gts.push(GroundTruthObject::new(image, b, kind));
    }
    let n_pred = rng.random_range(0..=spec.max_preds);
    let mut preds = Vec::with_capacity(n_pred);
    for _ in 0..n_pred {
        // half the predictions are jittered copies of a gt box
        let b = if !gts.is_empty() && rng.random_bool(0.5) {
            let g: &GroundTruthObject = gts.choose(rng).unwrap();
            let (x1, y1, x2, y2) = cells(&g.bbox);
            let j = |rng: &mut dyn RngCore| rng.random_range(-1..=1);
            let nx1 = (x1 + j(rng)).clamp(0, spec.extent - 1);
            let ny1 = (y1 + j(rng)).clamp(0, spec.extent - 1);
            let nx2 = (x2 + j(rng)).clamp(nx1 + 1, spec.extent);
            let ny2 = (y2 + j(rng)).clamp(ny1 + 1, spec.extent);
            grid_box(nx1, ny1, nx2, ny2)
        } else {
            random_box(rng, spec.extent)
        };
        preds.push(Prediction::new(image, b, random_scores(rng, spec.n_classes)).unwrap());
    }
    Scene {
        image: image.to_string(),
        preds,
        gts,
    }
}

pub fn random_dataset(rng: &mut dyn RngCore, n_images: usize, spec: &SceneSpec) -> Vec<Scene> {
    (0..n_images)
        .map(|i| random_scene(rng, &format!("img{i:05}"), spec))
        .collect()
}

pub fn flatten(scenes: &[Scene]) -> (Vec<Prediction>, Vec<GroundTruthObject>) {
    let preds = scenes
        .iter()
        .flat_map(|s| s.preds.iter().cloned())
        .collect();
    let gts = scenes.iter().flat_map(|s| s.gts.iter().cloned()).collect();
    (preds, gts)
}

/// Random ordered threshold pair on the 0.025 lattice (so ties with scores occur).
pub fn random_thresholds(rng: &mut dyn RngCore) -> (f64, f64) {
    let a = rng.random_range(0..=40) as f64 / 40.0;
    let b = rng.random_range(0..=40) as f64 / 40.0;
    (a.min(b), a.max(b))
}
