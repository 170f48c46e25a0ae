//! Central finite-difference verification of every analytic gradient.
//!
//! Each check draws seeded random instances, evaluates the analytic gradient
//! and compares it coordinate by coordinate against
//! `(f(x + h) - f(x - h)) / 2h`, using the error measure
//! `|analytic - numeric| / (1 + |analytic|)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Exec;
use crate::grid::{BinaryMask, GradMap, ProbMap};
use crate::manifold::{
    contrastive_loss, contrastive_loss_grad, poincare_distance, poincare_distance_grad,
    ContrastiveBatch, HYPERBOLIC_DIM,
};
use crate::metrics::{bce_loss, dice_loss};
use crate::soft_euler::{soft_euler_char, soft_euler_grad, soft_euler_loss, tv_loss};

/// Operations covered by the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckedOp {
    SoftEulerChar,
    SoftEulerLoss,
    TvLoss,
    DiceLoss,
    BceLoss,
    PoincareDistance,
    ContrastiveLoss,
}

impl CheckedOp {
    pub const ALL: [CheckedOp; 7] = [
        CheckedOp::SoftEulerChar,
        CheckedOp::SoftEulerLoss,
        CheckedOp::TvLoss,
        CheckedOp::DiceLoss,
        CheckedOp::BceLoss,
        CheckedOp::PoincareDistance,
        CheckedOp::ContrastiveLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckedOp::SoftEulerChar => "soft_euler_char",
            CheckedOp::SoftEulerLoss => "soft_euler_loss",
            CheckedOp::TvLoss => "tv_loss",
            CheckedOp::DiceLoss => "dice_loss",
            CheckedOp::BceLoss => "bce_loss",
            CheckedOp::PoincareDistance => "poincare_distance",
            CheckedOp::ContrastiveLoss => "contrastive_loss",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Instance `k` draws a grid of up to `sizes[k % sizes.len()]` per side.
    pub sizes: Vec<usize>,
    pub instances: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Negates one analytic gradient; a negative control for the suite.
    pub inject_sign_flip: Option<CheckedOp>,
    pub exec: Exec,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sizes: vec![4, 8, 16, 32],
            instances: 100,
            step: 1e-5,
            tolerance: 1e-5,
            inject_sign_flip: None,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub op: CheckedOp,
    pub instances: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn failures(&self) -> Vec<&CheckResult> {
        self.results
            .iter()
            .filter(|r| r.max_rel_error.is_nan() || r.max_rel_error >= self.tolerance)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (1.0 + analytic.abs())
}

/// Largest relative error between `analytic` and central differences of `f`
/// over every pixel of `p`.
pub fn max_fd_error_map(
    f: impl Fn(&ProbMap) -> f64,
    p: &ProbMap,
    analytic: &GradMap,
    step: f64,
) -> f64 {
    (0..p.len())
        .map(|i| {
            let v = p.values()[i];
            let numeric =
                (f(&p.with_value(i, v + step)) - f(&p.with_value(i, v - step))) / (2.0 * step);
            relative_error(analytic.values()[i], numeric)
        })
        .fold(0.0, f64::max)
}

/// Largest relative error between `analytic` and central differences of `f`
/// over every coordinate of `x`.
pub fn max_fd_error_vec(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], step: f64) -> f64 {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + step;
            let plus = f(&buf);
            buf[i] = x[i] - step;
            let minus = f(&buf);
            buf[i] = x[i];
            relative_error(analytic[i], (plus - minus) / (2.0 * step))
        })
        .fold(0.0, f64::max)
}

fn instance_rng(seed: u64, op: CheckedOp, k: usize) -> ChaCha8Rng {
    let tag = op as u64;
    ChaCha8Rng::seed_from_u64(seed ^ (tag << 48) ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_probmap(rng: &mut impl Rng, max_side: usize, lo: f64, hi: f64) -> ProbMap {
    let h = rng.gen_range(1..=max_side.max(1));
    let w = rng.gen_range(1..=max_side.max(1));
    let values = (0..h * w).map(|_| rng.gen_range(lo..=hi)).collect();
    ProbMap::new(h, w, values).expect("generated values are in range")
}

fn random_mask(rng: &mut impl Rng, h: usize, w: usize) -> BinaryMask {
    let density = rng.gen_range(0.2..0.8);
    BinaryMask::new(
        h,
        w,
        (0..h * w)
            .map(|_| u8::from(rng.gen_bool(density)))
            .collect(),
    )
    .expect("valid mask")
}

/// Uniform direction in the cube, radius uniform in `[0, max_norm]`.
pub fn random_ball_point(rng: &mut impl Rng, dim: usize, max_norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            let r = rng.gen_range(0.0..=max_norm);
            return v.into_iter().map(|x| x * r / n).collect();
        }
    }
}

fn random_contrastive_batch(rng: &mut impl Rng, n: usize) -> ContrastiveBatch {
    loop {
        let z = (0..n)
            .map(|_| random_ball_point(rng, HYPERBOLIC_DIM, 0.9))
            .collect();
        let labels = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let batch = ContrastiveBatch::new(z, labels).expect("valid batch");
        if !batch.anchors().is_empty() {
            return batch;
        }
    }
}

fn check_instance(op: CheckedOp, cfg: &GradcheckConfig, k: usize) -> f64 {
    let mut rng = instance_rng(cfg.seed, op, k);
    let side = cfg.sizes[k % cfg.sizes.len()];
    let sign = if cfg.inject_sign_flip == Some(op) {
        -1.0
    } else {
        1.0
    };
    let h = cfg.step;
    match op {
        CheckedOp::SoftEulerChar => {
            let p = random_probmap(&mut rng, side, 0.0, 1.0);
            let g = soft_euler_grad(&p).scaled(sign);
            max_fd_error_map(soft_euler_char, &p, &g, h)
        }
        CheckedOp::SoftEulerLoss => {
            let p = random_probmap(&mut rng, side, 0.0, 1.0);
            let y = random_mask(&mut rng, p.height(), p.width());
            let g = soft_euler_loss(&p, &y)
                .expect("same shape")
                .grad
                .scaled(sign);
            max_fd_error_map(
                |q| soft_euler_loss(q, &y).expect("same shape").value,
                &p,
                &g,
                h,
            )
        }
        CheckedOp::TvLoss => {
            let eps = 1e-2;
            let p = random_probmap(&mut rng, side, 0.0, 1.0);
            let g = tv_loss(&p, eps).expect("eps > 0").grad.scaled(sign);
            max_fd_error_map(|q| tv_loss(q, eps).expect("eps > 0").value, &p, &g, h)
        }
        CheckedOp::DiceLoss => {
            let p = random_probmap(&mut rng, side, 0.0, 1.0);
            let y = random_mask(&mut rng, p.height(), p.width());
            let g = dice_loss(&p, &y, 1.0)
                .expect("same shape")
                .grad
                .scaled(sign);
            max_fd_error_map(
                |q| dice_loss(q, &y, 1.0).expect("same shape").value,
                &p,
                &g,
                h,
            )
        }
        CheckedOp::BceLoss => {
            let p = random_probmap(&mut rng, side, 0.05, 0.95);
            let y = random_mask(&mut rng, p.height(), p.width());
            let g = bce_loss(&p, &y, 1e-7)
                .expect("same shape")
                .grad
                .scaled(sign);
            max_fd_error_map(
                |q| bce_loss(q, &y, 1e-7).expect("same shape").value,
                &p,
                &g,
                h,
            )
        }
        CheckedOp::PoincareDistance => {
            let c = rng.gen_range(0.5..2.0);
            let radius = 0.9 / f64::sqrt(c);
            let u = random_ball_point(&mut rng, HYPERBOLIC_DIM, radius);
            let v = random_ball_point(&mut rng, HYPERBOLIC_DIM, radius);
            let (du, dv) = poincare_distance_grad(&u, &v, c);
            let du: Vec<f64> = du.into_iter().map(|x| x * sign).collect();
            let dv: Vec<f64> = dv.into_iter().map(|x| x * sign).collect();
            let eu = max_fd_error_vec(|x| poincare_distance(x, &v, c), &u, &du, h);
            let ev = max_fd_error_vec(|x| poincare_distance(&u, x, c), &v, &dv, h);
            eu.max(ev)
        }
        CheckedOp::ContrastiveLoss => {
            let tau = rng.gen_range(0.1..0.5);
            let batch = random_contrastive_batch(&mut rng, 8);
            let grads = contrastive_loss_grad(&batch, tau, 1.0).expect("valid batch");
            let mut worst: f64 = 0.0;
            for (i, g) in grads.iter().enumerate() {
                let g: Vec<f64> = g.iter().map(|x| x * sign).collect();
                let f = |x: &[f64]| {
                    contrastive_loss(&batch.with_point(i, x), tau, 1.0).expect("valid batch")
                };
                worst = worst.max(max_fd_error_vec(f, &batch.embeddings()[i], &g, h));
            }
            worst
        }
    }
}

/// Runs every check in [`CheckedOp::ALL`].
pub fn run_gradcheck(cfg: &GradcheckConfig) -> GradcheckReport {
    assert!(!cfg.sizes.is_empty(), "at least one grid size is required");
    let results = CheckedOp::ALL
        .iter()
        .map(|&op| {
            let errors = cfg
                .exec
                .map_range(cfg.instances, |k| check_instance(op, cfg, k));
            CheckResult {
                op,
                instances: cfg.instances,
                max_rel_error: errors.into_iter().fold(0.0, f64::max),
            }
        })
        .collect();
    GradcheckReport {
        tolerance: cfg.tolerance,
        results,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> GradcheckConfig {
        GradcheckConfig {
            instances: 6,
            sizes: vec![3, 6],
            ..GradcheckConfig::default()
        }
    }

    #[test]
    fn quick_suite_passes() {
        let report = run_gradcheck(&quick());
        assert_eq!(report.results.len(), 7);
        for r in &report.results {
            assert!(
                r.max_rel_error < 1e-6,
                "{}: {}",
                r.op.name(),
                r.max_rel_error
            );
        }
    }

    #[test]
    fn sign_flip_is_detected() {
        for op in CheckedOp::ALL {
            let cfg = GradcheckConfig {
                inject_sign_flip: Some(op),
                ..quick()
            };
            let report = run_gradcheck(&cfg);
            let failing: Vec<_> = report.failures().iter().map(|r| r.op).collect();
            assert_eq!(failing, vec![op]);
        }
    }

    #[test]
    fn names_round_trip() {
        for op in CheckedOp::ALL {
            assert_eq!(CheckedOp::from_name(op.name()), Some(op));
        }
        assert_eq!(CheckedOp::from_name("nope"), None);
    }
}
