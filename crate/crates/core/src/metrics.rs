//! Per-sample segmentation metrics and the differentiable Dice/BCE losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, GradMap, ProbMap};
use crate::persistence::{pd_distance, DiagramDistanceConfig};
use crate::soft_euler::LossOutput;
use crate::topology::betti_numbers;

/// All metrics for one prediction/ground-truth pair. Field names are the CSV
/// column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sample_id: String,
    pub dice: f64,
    pub iou: f64,
    pub bf1: f64,
    pub d_beta0: u64,
    pub d_beta1: u64,
    pub pd_dist: f64,
}

impl MetricsRecord {
    pub fn is_finite(&self) -> bool {
        [self.dice, self.iou, self.bf1, self.pd_dist]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BF1_TOLERANCE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Probabilities `>= threshold` count as foreground.
    pub threshold: f64,
    /// Boundary match radius in pixels.
    pub bf1_tolerance: usize,
    pub pd: DiagramDistanceConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            bf1_tolerance: DEFAULT_BF1_TOLERANCE,
            pd: DiagramDistanceConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::param("threshold", "must lie strictly inside (0, 1)"));
        }
        if let DiagramDistanceConfig::Wasserstein { q } = self.pd {
            if !(q >= 1.0 && q.is_finite()) {
                return Err(Error::param("pd.q", "must be finite and >= 1"));
            }
        }
        Ok(())
    }
}

/// `(dice, iou)`; two empty masks agree perfectly and score `(1, 1)`.
pub fn dice_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<(f64, f64)> {
    gt.ensure_same_shape(pred.shape())?;
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.pixels().iter().zip(gt.pixels()) {
        a += usize::from(p);
        b += usize::from(g);
        inter += usize::from(p & g);
    }
    if a + b == 0 {
        return Ok((1.0, 1.0));
    }
    let union = a + b - inter;
    Ok((
        2.0 * inter as f64 / (a + b) as f64,
        inter as f64 / union as f64,
    ))
}

/// Foreground pixels with at least one 4-neighbour that is background or off
/// the grid.
pub fn boundary_pixels(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (h, w) = mask.shape();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1);
            if edge {
                out.push((r, c));
            }
        }
    }
    out
}

/// Fraction of `from` pixels with a `to` pixel within Euclidean distance `tol`.
fn matched_fraction(from: &[(usize, usize)], to: &BinaryMask, tol: usize) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    let (h, w) = to.shape();
    let t = tol as isize;
    let hits = from
        .iter()
        .filter(|&&(r, c)| {
            (-t..=t).any(|dr| {
                (-t..=t).any(|dc| {
                    if dr * dr + dc * dc > t * t {
                        return false;
                    }
                    match (r.checked_add_signed(dr), c.checked_add_signed(dc)) {
                        (Some(rr), Some(cc)) if rr < h && cc < w => to.get(rr, cc),
                        _ => false,
                    }
                })
            })
        })
        .count();
    hits as f64 / from.len() as f64
}

/// Boundary F1 with a pixel tolerance; 1.0 when both boundaries are empty.
pub fn boundary_f1(pred: &BinaryMask, gt: &BinaryMask, tol: usize) -> Result<f64> {
    gt.ensure_same_shape(pred.shape())?;
    let pb = boundary_pixels(pred);
    let gb = boundary_pixels(gt);
    if pb.is_empty() && gb.is_empty() {
        return Ok(1.0);
    }
    let as_mask = |pts: &[(usize, usize)]| BinaryMask::from_points(gt.height(), gt.width(), pts);
    let precision = matched_fraction(&pb, &as_mask(&gb), tol);
    let recall = matched_fraction(&gb, &as_mask(&pb), tol);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// `(|b0(pred) - b0(gt)|, |b1(pred) - b1(gt)|)`.
pub fn betti_errors(pred: &BinaryMask, gt: &BinaryMask) -> Result<(u64, u64)> {
    gt.ensure_same_shape(pred.shape())?;
    let a = betti_numbers(pred);
    let b = betti_numbers(gt);
    Ok((
        a.beta0.abs_diff(b.beta0) as u64,
        a.beta1.abs_diff(b.beta1) as u64,
    ))
}

/// Soft Dice loss `1 - (2 sum(p y) + s) / (sum(p) + sum(y) + s)`.
///
/// With `smooth == 0` and both maps empty the ratio is undefined; that case
/// is reported as a perfect match with zero gradient.
pub fn dice_loss(p: &ProbMap, y: &BinaryMask, smooth: f64) -> Result<LossOutput> {
    y.ensure_same_shape(p.shape())?;
    if !(smooth >= 0.0 && smooth.is_finite()) {
        return Err(Error::param("smooth", "must be finite and >= 0"));
    }
    let (mut inter, mut sp, mut sy) = (0.0, 0.0, 0.0);
    for (&pv, &yv) in p.values().iter().zip(y.pixels()) {
        let yv = f64::from(yv);
        inter += pv * yv;
        sp += pv;
        sy += yv;
    }
    let num = 2.0 * inter + smooth;
    let den = sp + sy + smooth;
    if den == 0.0 {
        return Ok(LossOutput {
            value: 0.0,
            grad: GradMap::zeros(p.height(), p.width()),
        });
    }
    let grad = y
        .pixels()
        .iter()
        .map(|&yv| -(2.0 * f64::from(yv) * den - num) / (den * den))
        .collect();
    Ok(LossOutput {
        value: 1.0 - num / den,
        grad: GradMap::from_raw(p.height(), p.width(), grad),
    })
}

/// Mean binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
/// Clamped pixels have zero gradient.
pub fn bce_loss(p: &ProbMap, y: &BinaryMask, clamp_eps: f64) -> Result<LossOutput> {
    y.ensure_same_shape(p.shape())?;
    if !(clamp_eps > 0.0 && clamp_eps < 0.5) {
        return Err(Error::param("clamp_eps", "must lie in (0, 0.5)"));
    }
    let n = p.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pv, &yv) in p.values().iter().zip(y.pixels()) {
        let clamped = pv.clamp(clamp_eps, 1.0 - clamp_eps);
        let inside = clamped == pv;
        if yv != 0 {
            value -= clamped.ln();
            grad.push(if inside { -1.0 / (clamped * n) } else { 0.0 });
        } else {
            value -= (-clamped).ln_1p();
            grad.push(if inside {
                1.0 / ((1.0 - clamped) * n)
            } else {
                0.0
            });
        }
    }
    Ok(LossOutput {
        value: value / n,
        grad: GradMap::from_raw(p.height(), p.width(), grad),
    })
}

/// Thresholds `pred` and computes every [`MetricsRecord`] field. The PD
/// distance uses the un-thresholded map.
pub fn evaluate_sample(
    sample_id: &str,
    pred: &ProbMap,
    gt: &BinaryMask,
    cfg: &EvalConfig,
) -> Result<MetricsRecord> {
    cfg.validate()?;
    gt.ensure_same_shape(pred.shape())?;
    let mask = pred.threshold(cfg.threshold);
    let (dice, iou) = dice_iou(&mask, gt)?;
    let bf1 = boundary_f1(&mask, gt, cfg.bf1_tolerance)?;
    let (d_beta0, d_beta1) = betti_errors(&mask, gt)?;
    let pd_dist = pd_distance(pred, gt, &cfg.pd)?;
    Ok(MetricsRecord {
        sample_id: sample_id.to_owned(),
        dice,
        iou,
        bf1,
        d_beta0,
        d_beta1,
        pd_dist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: usize, w: usize, top: usize, left: usize, size: usize) -> BinaryMask {
        let mut m = BinaryMask::zeros(h, w);
        for r in top..top + size {
            for c in left..left + size {
                m.set(r, c, true);
            }
        }
        m
    }

    #[test]
    fn dice_iou_cases() {
        let a = square(6, 6, 1, 1, 3);
        assert_eq!(dice_iou(&a, &a).unwrap(), (1.0, 1.0));
        let far = square(6, 6, 4, 4, 2);
        let b = square(6, 6, 0, 0, 1);
        assert_eq!(dice_iou(&far, &b).unwrap(), (0.0, 0.0));
        let pred = BinaryMask::from_points(3, 3, &[(0, 0), (0, 1)]);
        let gt = BinaryMask::from_points(3, 3, &[(0, 0)]);
        let (d, i) = dice_iou(&pred, &gt).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(i, 0.5);
        let e = BinaryMask::zeros(2, 2);
        assert_eq!(dice_iou(&e, &e).unwrap(), (1.0, 1.0));
        assert!(dice_iou(&e, &BinaryMask::zeros(2, 3)).is_err());
    }

    #[test]
    fn boundary_f1_cases() {
        let a = square(8, 8, 2, 2, 4);
        assert_eq!(boundary_f1(&a, &a, 0).unwrap(), 1.0);
        let shifted = square(8, 8, 2, 3, 4);
        assert_eq!(boundary_f1(&a, &shifted, 2).unwrap(), 1.0);
        assert!(boundary_f1(&a, &shifted, 0).unwrap() < 1.0);
        let e = BinaryMask::zeros(8, 8);
        assert_eq!(boundary_f1(&e, &a, 2).unwrap(), 0.0);
        assert_eq!(boundary_f1(&e, &e, 2).unwrap(), 1.0);
    }

    #[test]
    fn boundary_pixels_of_square() {
        let a = square(6, 6, 1, 1, 4);
        assert_eq!(boundary_pixels(&a).len(), 12);
        // A mask touching the border counts the border as background.
        let full = BinaryMask::new(3, 3, vec![1; 9]).unwrap();
        assert_eq!(boundary_pixels(&full).len(), 8);
    }

    #[test]
    fn betti_error_cases() {
        let one = square(8, 8, 1, 1, 3);
        assert_eq!(betti_errors(&one, &one).unwrap(), (0, 0));
        let mut two = one.clone();
        two.set(6, 6, true);
        assert_eq!(betti_errors(&two, &one).unwrap(), (1, 0));
        let disk = square(5, 5, 1, 1, 3);
        let mut ring = disk.clone();
        ring.set(2, 2, false);
        assert_eq!(betti_errors(&disk, &ring).unwrap(), (0, 1));
    }

    #[test]
    fn dice_loss_cases() {
        let y = square(4, 4, 1, 1, 2);
        assert_eq!(dice_loss(&y.to_probmap(), &y, 0.0).unwrap().value, 0.0);
        let ones = BinaryMask::new(2, 2, vec![1; 4]).unwrap();
        let out = dice_loss(&ProbMap::filled(2, 2, 0.5).unwrap(), &ones, 0.0).unwrap();
        assert!((out.value - 1.0 / 3.0).abs() < 1e-15);
        assert!(dice_loss(&y.to_probmap(), &y, -1.0).is_err());
    }

    #[test]
    fn bce_cases() {
        let y = square(4, 4, 1, 1, 2);
        let eps = 1e-7;
        let out = bce_loss(&y.to_probmap(), &y, eps).unwrap();
        assert!((out.value - (-(1.0 - eps).ln())).abs() < 1e-15);
        assert!(out.value < 2.0 * eps);
        let half = bce_loss(&ProbMap::filled(4, 4, 0.5).unwrap(), &y, eps).unwrap();
        assert!((half.value - 2f64.ln()).abs() < 1e-15);
        assert!(bce_loss(&y.to_probmap(), &y, 0.0).is_err());
    }

    #[test]
    fn evaluate_perfect_prediction() {
        let gt = square(10, 10, 2, 2, 5);
        let rec = evaluate_sample("s", &gt.to_probmap(), &gt, &EvalConfig::default()).unwrap();
        assert_eq!(
            rec,
            MetricsRecord {
                sample_id: "s".into(),
                dice: 1.0,
                iou: 1.0,
                bf1: 1.0,
                d_beta0: 0,
                d_beta1: 0,
                pd_dist: 0.0,
            }
        );
    }

    #[test]
    fn config_validation() {
        let cfg = EvalConfig {
            threshold: 1.0,
            ..EvalConfig::default()
        };
        assert!(cfg.validate().is_err());
        let gt = BinaryMask::zeros(2, 2);
        assert!(evaluate_sample("x", &gt.to_probmap(), &gt, &cfg).is_err());
    }
}
