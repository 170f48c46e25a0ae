//! Product-manifold geometry: Poincare ball (hyperbolic) x Euclidean x sphere.
//!
//! Points of the ball of curvature `c` satisfy `sqrt(c) * |x| < 1`. The
//! distance is
//!
//! ```text
//! d(u, v) = arcosh(1 + 2c |u - v|^2 / ((1 - c|u|^2)(1 - c|v|^2))) / sqrt(c)
//! ```
//!
//! Gradients blow up near the boundary, which is why every entry point clamps
//! its inputs to radius `(1 - eps_ball) / sqrt(c)` first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;

pub const HYPERBOLIC_DIM: usize = 8;
pub const EUCLIDEAN_DIM: usize = 32;
pub const SPHERICAL_DIM: usize = 8;
pub const PRODUCT_DIM: usize = HYPERBOLIC_DIM + EUCLIDEAN_DIM + SPHERICAL_DIM;

pub const DEFAULT_BALL_EPS: f64 = 1e-5;
pub const DEFAULT_TAU: f64 = 0.2;
pub const DEFAULT_SPHERE_EPS: f64 = 1e-8;

/// Sphere outputs are unit vectors within this tolerance.
pub const SPHERE_NORM_TOL: f64 = 1e-6;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A point strictly inside the Poincare ball of curvature `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    curvature: f64,
}

impl BallPoint {
    /// Fails unless the coordinates are finite and strictly inside the ball.
    pub fn new(coords: Vec<f64>, curvature: f64) -> Result<Self> {
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(Error::param("curvature", "must be finite and > 0"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ball point"));
        }
        if curvature.sqrt() * norm(&coords) >= 1.0 {
            return Err(Error::param("coords", "point is not inside the ball"));
        }
        Ok(Self { coords, curvature })
    }

    pub fn origin(dim: usize, curvature: f64) -> Self {
        Self {
            coords: vec![0.0; dim],
            curvature,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Rescales `x` onto radius `(1 - eps_ball) / sqrt(c)` if it lies beyond it.
pub fn clamp_to_ball(x: &[f64], c: f64, eps_ball: f64) -> BallPoint {
    assert!(c > 0.0, "curvature must be positive");
    assert!(
        eps_ball > 0.0 && eps_ball < 0.1,
        "eps_ball must lie in (0, 0.1)"
    );
    let limit = (1.0 - eps_ball) / c.sqrt();
    let n = norm(x);
    let coords = if n > limit {
        x.iter().map(|v| v * (limit / n)).collect()
    } else {
        x.to_vec()
    };
    BallPoint {
        coords,
        curvature: c,
    }
}

fn guarded<'a>(x: &'a [f64], c: f64, buf: &'a mut Vec<f64>) -> &'a [f64] {
    if c.sqrt() * norm(x) > 1.0 - DEFAULT_BALL_EPS {
        *buf = clamp_to_ball(x, c, DEFAULT_BALL_EPS).into_coords();
        buf
    } else {
        x
    }
}

struct DistanceParts {
    sq: f64,
    alpha: f64,
    beta: f64,
    delta: f64,
}

fn distance_parts(u: &[f64], v: &[f64], c: f64) -> DistanceParts {
    let sq = sq_dist(u, v);
    let alpha = 1.0 - c * dot(u, u);
    let beta = 1.0 - c * dot(v, v);
    DistanceParts {
        sq,
        alpha,
        beta,
        delta: 2.0 * c * sq / (alpha * beta),
    }
}

/// `arcosh(1 + x)` without cancellation for small `x`.
fn arcosh1p(x: f64) -> f64 {
    (x + (x * (x + 2.0)).sqrt()).ln_1p()
}

/// Geodesic distance in the Poincare ball of curvature `c > 0`.
///
/// Points on or beyond the boundary are clamped with [`DEFAULT_BALL_EPS`]
/// rather than producing NaN.
pub fn poincare_distance(u: &[f64], v: &[f64], c: f64) -> f64 {
    assert!(c > 0.0, "curvature must be positive");
    assert_eq!(u.len(), v.len(), "dimension mismatch");
    let (mut bu, mut bv) = (Vec::new(), Vec::new());
    let u = guarded(u, c, &mut bu);
    let v = guarded(v, c, &mut bv);
    arcosh1p(distance_parts(u, v, c).delta) / c.sqrt()
}

/// Partial derivatives `(dd/du, dd/dv)` of [`poincare_distance`].
///
/// At `u == v` the distance has a kink; both gradients are defined as zero.
pub fn poincare_distance_grad(u: &[f64], v: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(c > 0.0, "curvature must be positive");
    assert_eq!(u.len(), v.len(), "dimension mismatch");
    let (mut bu, mut bv) = (Vec::new(), Vec::new());
    let u = guarded(u, c, &mut bu);
    let v = guarded(v, c, &mut bv);
    let p = distance_parts(u, v, c);
    if p.delta <= 0.0 {
        return (vec![0.0; u.len()], vec![0.0; v.len()]);
    }
    // dd/ddelta * ddelta/du, with ddelta/du = 4c/(ab) * ((u - v) + c|u-v|^2 u / a).
    let dd_ddelta = 1.0 / (c.sqrt() * (p.delta * (p.delta + 2.0)).sqrt());
    let scale = dd_ddelta * 4.0 * c / (p.alpha * p.beta);
    let du = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| scale * ((ui - vi) + c * p.sq * ui / p.alpha))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| scale * ((vi - ui) + c * p.sq * vi / p.beta))
        .collect();
    (du, dv)
}

/// One latent token: ball, Euclidean and spherical parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub h: BallPoint,
    pub e: Vec<f64>,
    pub s: Vec<f64>,
}

impl ProductPoint {
    /// `[h, e, s]`, 48 values for the default dimensions.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.h.dim() + self.e.len() + self.s.len());
        out.extend_from_slice(self.h.coords());
        out.extend_from_slice(&self.e);
        out.extend_from_slice(&self.s);
        out
    }
}

/// Affine maps of the three adapter branches. Matrices are row-major with
/// `input_dim` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    input_dim: usize,
    pub w_h: Vec<f64>,
    pub b_h: Vec<f64>,
    pub w_e: Vec<f64>,
    pub b_e: Vec<f64>,
    pub w_s: Vec<f64>,
    pub b_s: Vec<f64>,
    pub sphere_eps: f64,
    pub curvature: f64,
    pub ball_eps: f64,
}

impl AdapterParams {
    pub fn zeros(input_dim: usize) -> Self {
        assert!(input_dim >= 1, "input_dim must be >= 1");
        Self {
            input_dim,
            w_h: vec![0.0; HYPERBOLIC_DIM * input_dim],
            b_h: vec![0.0; HYPERBOLIC_DIM],
            w_e: vec![0.0; EUCLIDEAN_DIM * input_dim],
            b_e: vec![0.0; EUCLIDEAN_DIM],
            w_s: vec![0.0; SPHERICAL_DIM * input_dim],
            b_s: vec![0.0; SPHERICAL_DIM],
            sphere_eps: DEFAULT_SPHERE_EPS,
            curvature: 1.0,
            ball_eps: DEFAULT_BALL_EPS,
        }
    }

    /// Deterministic init, every entry uniform in `[-1/sqrt(D), 1/sqrt(D)]`.
    pub fn seeded(input_dim: usize, seed: u64) -> Self {
        let mut p = Self::zeros(input_dim);
        let bound = 1.0 / (input_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for buf in [
            &mut p.w_h, &mut p.b_h, &mut p.w_e, &mut p.b_e, &mut p.w_s, &mut p.b_s,
        ] {
            buf.iter_mut()
                .for_each(|v| *v = rng.gen_range(-bound..=bound));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim;
        let shapes = [
            (self.w_h.len(), HYPERBOLIC_DIM * d),
            (self.b_h.len(), HYPERBOLIC_DIM),
            (self.w_e.len(), EUCLIDEAN_DIM * d),
            (self.b_e.len(), EUCLIDEAN_DIM),
            (self.w_s.len(), SPHERICAL_DIM * d),
            (self.b_s.len(), SPHERICAL_DIM),
        ];
        if d == 0 || shapes.iter().any(|(got, want)| got != want) {
            return Err(Error::param(
                "adapter",
                "parameter shapes do not match input_dim",
            ));
        }
        let all = [
            &self.w_h, &self.b_h, &self.w_e, &self.b_e, &self.w_s, &self.b_s,
        ];
        if all.iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("adapter parameters"));
        }
        if self.sphere_eps.is_nan() || self.sphere_eps <= 0.0 {
            return Err(Error::param("sphere_eps", "must be > 0"));
        }
        if !(self.curvature > 0.0 && self.curvature.is_finite()) {
            return Err(Error::param("curvature", "must be finite and > 0"));
        }
        if !(self.ball_eps > 0.0 && self.ball_eps < 0.1) {
            return Err(Error::param("ball_eps", "must lie in (0, 0.1)"));
        }
        Ok(())
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(r, bias)| bias + dot(&w[r * x.len()..(r + 1) * x.len()], x))
        .collect()
}

/// Exponential map at the origin: `a * tanh(sqrt(c)|a|) / (sqrt(c)|a|)`.
///
/// Applying `tanh` elementwise would not keep an 8-dimensional point inside
/// the ball, so the norm-directional form is used.
pub fn exp_map_origin(a: &[f64], c: f64) -> Vec<f64> {
    let n = c.sqrt() * norm(a);
    if n == 0.0 {
        return vec![0.0; a.len()];
    }
    let f = n.tanh() / n;
    a.iter().map(|v| v * f).collect()
}

/// Unit-sphere projection `z / (|z| + eps)`.
///
/// The guard biases the norm by `eps / (|z| + eps)`; when that exceeds
/// [`SPHERE_NORM_TOL`] the vector is normalized exactly instead, and raw
/// vectors no longer than `eps` map to zero.
pub fn sphere_project(z: &[f64], eps: f64) -> Vec<f64> {
    let n = norm(z);
    if n <= eps {
        return vec![0.0; z.len()];
    }
    let denom = if eps / (n + eps) > SPHERE_NORM_TOL {
        n
    } else {
        n + eps
    };
    z.iter().map(|v| v / denom).collect()
}

/// Projects one feature token onto the product manifold.
pub fn adapter_forward(x: &[f64], params: &AdapterParams) -> Result<ProductPoint> {
    params.validate()?;
    if x.len() != params.input_dim {
        return Err(Error::param(
            "x",
            format!("expected length {}, got {}", params.input_dim, x.len()),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("adapter input"));
    }
    let c = params.curvature;
    let a = affine(&params.w_h, &params.b_h, x);
    let h = clamp_to_ball(&exp_map_origin(&a, c), c, params.ball_eps);
    let e = affine(&params.w_e, &params.b_e, x)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let s = sphere_project(&affine(&params.w_s, &params.b_s, x), params.sphere_eps);
    Ok(ProductPoint { h, e, s })
}

/// Ball embeddings with instance labels: 0 is background, `k >= 1` a lesion
/// instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    embeddings: Vec<Vec<f64>>,
    labels: Vec<u32>,
}

impl ContrastiveBatch {
    pub fn new(embeddings: Vec<Vec<f64>>, labels: Vec<u32>) -> Result<Self> {
        if embeddings.len() != labels.len() {
            return Err(Error::param(
                "labels",
                format!(
                    "{} labels for {} embeddings",
                    labels.len(),
                    embeddings.len()
                ),
            ));
        }
        if let Some(first) = embeddings.first() {
            if embeddings.iter().any(|e| e.len() != first.len()) {
                return Err(Error::param("embeddings", "mixed dimensions"));
            }
        }
        if embeddings.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("contrastive embeddings"));
        }
        Ok(Self { embeddings, labels })
    }

    pub fn from_points(points: Vec<BallPoint>, labels: Vec<u32>) -> Result<Self> {
        Self::new(
            points.into_iter().map(BallPoint::into_coords).collect(),
            labels,
        )
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy with one embedding replaced.
    pub fn with_point(&self, point: usize, coords: &[f64]) -> Self {
        let mut out = self.clone();
        out.embeddings[point].copy_from_slice(coords);
        out
    }

    /// Tokens with at least one positive and one negative.
    ///
    /// Every token, background included, may anchor. Positives are the other
    /// tokens with the same label; negatives are all tokens with a different
    /// label.
    pub fn anchors(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let l = self.labels[i];
                self.labels
                    .iter()
                    .enumerate()
                    .any(|(j, &m)| j != i && m == l)
                    && self.labels.iter().any(|&m| m != l)
            })
            .collect()
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One anchor's term: `-log(sum_P e^{-d/tau} / (sum_P e^{-d/tau} + sum_N e^{-d/tau}))`,
/// evaluated in the log domain.
pub fn anchor_loss(pos_dists: &[f64], neg_dists: &[f64], tau: f64) -> f64 {
    let pos = pos_dists.iter().map(|d| -d / tau);
    let all = pos.clone().chain(neg_dists.iter().map(|d| -d / tau));
    log_sum_exp(all) - log_sum_exp(pos)
}

fn check_tau(tau: f64, c: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param("tau", "must be finite and > 0"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("curvature", "must be finite and > 0"));
    }
    Ok(())
}

/// Hyperbolic contrastive loss summed over all valid anchors.
pub fn contrastive_loss(batch: &ContrastiveBatch, tau: f64, c: f64) -> Result<f64> {
    contrastive_loss_with(batch, tau, c, Exec::default())
}

pub fn contrastive_loss_with(
    batch: &ContrastiveBatch,
    tau: f64,
    c: f64,
    exec: Exec,
) -> Result<f64> {
    check_tau(tau, c)?;
    let anchors = batch.anchors();
    if anchors.is_empty() {
        return Err(Error::DegenerateBatch);
    }
    let z = &batch.embeddings;
    let labels = &batch.labels;
    Ok(exec.sum_range(anchors.len(), |k| {
        let i = anchors[k];
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for j in 0..z.len() {
            if j == i {
                continue;
            }
            let d = poincare_distance(&z[i], &z[j], c);
            if labels[j] == labels[i] {
                pos.push(d);
            } else {
                neg.push(d);
            }
        }
        anchor_loss(&pos, &neg, tau)
    }))
}

/// Gradient of [`contrastive_loss`] with respect to every embedding.
pub fn contrastive_loss_grad(batch: &ContrastiveBatch, tau: f64, c: f64) -> Result<Vec<Vec<f64>>> {
    contrastive_loss_grad_with(batch, tau, c, Exec::default())
}

/// Anchors handled per work unit; fixed so the reduction order never depends
/// on the thread count.
const ANCHOR_CHUNK: usize = 32;

pub fn contrastive_loss_grad_with(
    batch: &ContrastiveBatch,
    tau: f64,
    c: f64,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    check_tau(tau, c)?;
    let anchors = batch.anchors();
    if anchors.is_empty() {
        return Err(Error::DegenerateBatch);
    }
    let z = &batch.embeddings;
    let labels = &batch.labels;
    let n = z.len();
    let dim = z.first().map_or(0, Vec::len);

    let n_chunks = anchors.len().div_ceil(ANCHOR_CHUNK);
    let partials = exec.map_range(n_chunks, |chunk| {
        let mut acc = vec![0.0; n * dim];
        for &i in &anchors[chunk * ANCHOR_CHUNK..((chunk + 1) * ANCHOR_CHUNK).min(anchors.len())] {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let dists: Vec<f64> = others
                .iter()
                .map(|&j| poincare_distance(&z[i], &z[j], c))
                .collect();
            let is_pos: Vec<bool> = others.iter().map(|&j| labels[j] == labels[i]).collect();
            let scores = dists.iter().map(|d| -d / tau);
            let lse_all = log_sum_exp(scores.clone());
            let lse_pos = log_sum_exp(
                scores
                    .clone()
                    .zip(&is_pos)
                    .filter(|(_, &p)| p)
                    .map(|(s, _)| s),
            );
            // dL/dd_ij = ([j in P] softmax_P(j) - softmax_all(j)) / tau
            for (k, &j) in others.iter().enumerate() {
                let s = -dists[k] / tau;
                let mut coef = -(s - lse_all).exp();
                if is_pos[k] {
                    coef += (s - lse_pos).exp();
                }
                coef /= tau;
                if coef == 0.0 {
                    continue;
                }
                let (du, dv) = poincare_distance_grad(&z[i], &z[j], c);
                for a in 0..dim {
                    acc[i * dim + a] += coef * du[a];
                    acc[j * dim + a] += coef * dv[a];
                }
            }
        }
        acc
    });

    let mut total = vec![0.0; n * dim];
    for part in partials {
        total.iter_mut().zip(part).for_each(|(t, p)| *t += p);
    }
    Ok(total
        .chunks(dim.max(1))
        .take(n)
        .map(<[f64]>::to_vec)
        .collect())
}
