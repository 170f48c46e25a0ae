//! Differentiable topology surrogate.
//!
//! [`soft_euler_char`] replaces the binary pixels of the exact local Euler
//! formula (see [`crate::topology`]) with probabilities. On `{0, 1}` input every
//! product is exact, so it reproduces [`euler_characteristic`] bit for bit.
//! Out-of-range neighbours are omitted from the sums; there is no padding.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{BinaryMask, GradMap, ProbMap};
use crate::topology::euler_characteristic;

/// Soft Euler characteristic, using the default execution mode.
pub fn soft_euler_char(p: &ProbMap) -> f64 {
    soft_euler_char_with(p, Exec::default())
}

/// Soft Euler characteristic. Per-row partial sums are reduced in row order.
pub fn soft_euler_char_with(p: &ProbMap, exec: Exec) -> f64 {
    let (h, w) = p.shape();
    let v = p.values();
    exec.sum_range(h, |r| {
        let row = &v[r * w..(r + 1) * w];
        let mut faces = 0.0;
        let mut horizontal = 0.0;
        for c in 0..w {
            faces += row[c];
            if c + 1 < w {
                horizontal += row[c] * row[c + 1];
            }
        }
        let mut vertical = 0.0;
        let mut squares = 0.0;
        if r + 1 < h {
            let below = &v[(r + 1) * w..(r + 2) * w];
            for c in 0..w {
                vertical += row[c] * below[c];
                if c + 1 < w {
                    squares += row[c] * below[c] * row[c + 1] * below[c + 1];
                }
            }
        }
        faces - horizontal - vertical + squares
    })
}

/// Analytic gradient of [`soft_euler_char`].
pub fn soft_euler_grad(p: &ProbMap) -> GradMap {
    soft_euler_grad_with(p, Exec::default())
}

pub fn soft_euler_grad_with(p: &ProbMap, exec: Exec) -> GradMap {
    let (h, w) = p.shape();
    let v = p.values();
    let mut out = vec![0.0; h * w];
    exec.for_each_row(&mut out, w, |r, g| {
        let row = &v[r * w..(r + 1) * w];
        let above = (r > 0).then(|| &v[(r - 1) * w..r * w]);
        let below = (r + 1 < h).then(|| &v[(r + 1) * w..(r + 2) * w]);
        // Vertex and edge terms.
        for c in 0..w {
            let mut d = 1.0;
            if c > 0 {
                d -= row[c - 1];
            }
            if c + 1 < w {
                d -= row[c + 1];
            }
            if let Some(up) = above {
                d -= up[c];
            }
            if let Some(down) = below {
                d -= down[c];
            }
            g[c] = d;
        }
        // Square terms: each 2x2 block touching this row contributes the
        // product of its other three pixels.
        for c in 0..w.saturating_sub(1) {
            if let Some(up) = above {
                let (a, b, x, y) = (up[c], up[c + 1], row[c], row[c + 1]);
                g[c] += a * b * y;
                g[c + 1] += a * b * x;
            }
            if let Some(down) = below {
                let (x, y, a, b) = (row[c], row[c + 1], down[c], down[c + 1]);
                g[c] += y * a * b;
                g[c + 1] += x * a * b;
            }
        }
    });
    GradMap::from_raw(h, w, out)
}

/// Squared mismatch between the soft and ground-truth Euler characteristics.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grad: GradMap,
}

/// `(chi_soft(p) - chi(y))^2` and its gradient.
pub fn soft_euler_loss(p: &ProbMap, y: &BinaryMask) -> Result<LossOutput> {
    y.ensure_same_shape(p.shape())?;
    let diff = soft_euler_char(p) - euler_characteristic(y) as f64;
    Ok(LossOutput {
        value: diff * diff,
        grad: soft_euler_grad(p).scaled(2.0 * diff),
    })
}

/// Smoothed anisotropic total variation.
///
/// Every horizontal and vertical neighbour pair contributes
/// `sqrt(d^2 + eps^2) - eps`, so constant maps score exactly zero and the
/// function is differentiable everywhere.
pub fn tv_loss(p: &ProbMap, smooth_eps: f64) -> Result<LossOutput> {
    if !(smooth_eps > 0.0 && smooth_eps.is_finite()) {
        return Err(Error::param("smooth_eps", "must be finite and > 0"));
    }
    let (h, w) = p.shape();
    let eps2 = smooth_eps * smooth_eps;
    let mut value = 0.0;
    let mut grad = vec![0.0; h * w];
    let mut pair = |a: usize, b: usize, value: &mut f64| {
        let d = p.values()[b] - p.values()[a];
        let s = (d * d + eps2).sqrt();
        *value += s - smooth_eps;
        let g = d / s;
        grad[b] += g;
        grad[a] -= g;
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                pair(i, i + 1, &mut value);
            }
            if r + 1 < h {
                pair(i, i + w, &mut value);
            }
        }
    }
    Ok(LossOutput {
        value,
        grad: GradMap::from_raw(h, w, grad),
    })
}

/// Relative weights of the two topology terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopoLossConfig {
    pub euler_weight: f64,
    pub tv_weight: f64,
    pub tv_eps: f64,
}

impl Default for TopoLossConfig {
    fn default() -> Self {
        Self {
            euler_weight: 1.0,
            tv_weight: 1.0,
            tv_eps: 1e-2,
        }
    }
}

/// `euler_weight * soft_euler_loss + tv_weight * tv_loss`.
pub fn topology_loss(p: &ProbMap, y: &BinaryMask, cfg: &TopoLossConfig) -> Result<LossOutput> {
    let e = soft_euler_loss(p, y)?;
    let t = tv_loss(p, cfg.tv_eps)?;
    let values = e
        .grad
        .values()
        .iter()
        .zip(t.grad.values())
        .map(|(a, b)| cfg.euler_weight * a + cfg.tv_weight * b)
        .collect();
    Ok(LossOutput {
        value: cfg.euler_weight * e.value + cfg.tv_weight * t.value,
        grad: GradMap::from_raw(p.height(), p.width(), values),
    })
}

/// Weights of the composite training objective at a given epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_seg: f64,
    pub w_contrast: f64,
    pub w_topo: f64,
    pub epoch: u32,
}

/// Epochs with the topology term disabled.
pub const DEFAULT_WARMUP_EPOCHS: i64 = 10;

/// Topology weight schedule: zero during warm-up, then a linear ramp over
/// `ramp_epochs` (a hard step when zero), then constant at `base.w_topo`.
/// `w_seg` and `w_contrast` pass through unchanged.
pub fn loss_weight_schedule(
    epoch: i64,
    warmup_epochs: i64,
    ramp_epochs: i64,
    base: LossWeights,
) -> Result<LossWeights> {
    if epoch < 0 {
        return Err(Error::param("epoch", "must be >= 0"));
    }
    if warmup_epochs < 0 || ramp_epochs < 0 {
        return Err(Error::param("warmup_epochs/ramp_epochs", "must be >= 0"));
    }
    let w_topo = if epoch < warmup_epochs {
        0.0
    } else if ramp_epochs == 0 || epoch >= warmup_epochs + ramp_epochs {
        base.w_topo
    } else {
        base.w_topo * (epoch - warmup_epochs) as f64 / ramp_epochs as f64
    };
    Ok(LossWeights {
        w_topo,
        epoch: u32::try_from(epoch).map_err(|_| Error::param("epoch", "too large"))?,
        ..base
    })
}
