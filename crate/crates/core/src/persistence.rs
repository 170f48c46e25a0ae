//! 0-dimensional persistent homology of superlevel filtrations on pixel grids,
//! plus Wasserstein and bottleneck distances between diagrams.
//!
//! Superlevel convention: a component is born at its highest pixel value and
//! dies at the (lower) threshold where it merges into an older component, so
//! every point has `birth >= death`. The essential component dies at 0, the
//! bottom of the `[0, 1]` codomain. Zero-persistence points are not recorded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ProbMap};
use crate::topology::{connected_components, Connectivity, UnionFind};

/// A `(birth, death)` pair with `birth >= death`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct DiagramPoint {
    pub birth: f64,
    pub death: f64,
}

impl From<[f64; 2]> for DiagramPoint {
    fn from([birth, death]: [f64; 2]) -> Self {
        Self { birth, death }
    }
}

impl From<DiagramPoint> for [f64; 2] {
    fn from(p: DiagramPoint) -> Self {
        [p.birth, p.death]
    }
}

impl DiagramPoint {
    pub fn new(birth: f64, death: f64) -> Self {
        Self { birth, death }
    }

    pub fn persistence(&self) -> f64 {
        self.birth - self.death
    }

    /// L-infinity distance to the diagonal.
    pub fn diagonal_cost(&self) -> f64 {
        0.5 * (self.birth - self.death).abs()
    }

    pub fn linf(&self, other: &DiagramPoint) -> f64 {
        (self.birth - other.birth)
            .abs()
            .max((self.death - other.death).abs())
    }
}

/// Multiset of diagram points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersistenceDiagram {
    points: Vec<DiagramPoint>,
}

impl PersistenceDiagram {
    pub fn new(points: Vec<DiagramPoint>) -> Result<Self> {
        for p in &points {
            if !(p.birth.is_finite() && p.death.is_finite()) {
                return Err(Error::NonFinite("diagram point"));
            }
            if p.birth < p.death {
                return Err(Error::param(
                    "diagram",
                    format!("birth {} below death {}", p.birth, p.death),
                ));
            }
        }
        Ok(Self { points })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(b, d)| DiagramPoint::new(b, d))
                .collect(),
        )
    }

    pub fn points(&self) -> &[DiagramPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Descending persistence, then descending birth.
    pub fn sorted(&self) -> Self {
        let mut points = self.points.clone();
        points.sort_by(|a, b| {
            b.persistence()
                .total_cmp(&a.persistence())
                .then(b.birth.total_cmp(&a.birth))
        });
        Self { points }
    }

    /// JSON array of `[birth, death]` pairs in [`sorted`](Self::sorted) order.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.sorted()).expect("diagram serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: Vec<DiagramPoint> =
            serde_json::from_str(s).map_err(|e| Error::param("diagram json", e.to_string()))?;
        Self::new(raw)
    }

    /// Points alive at threshold `t`: `birth >= t > death`.
    pub fn alive_at(&self, t: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p.birth >= t && p.death < t)
            .count()
    }
}

/// H0 diagram of the superlevel filtration `{p >= t}` with 4-connectivity.
///
/// Pixels are swept by descending value (ties in raster order) and merged with
/// a union-find; on a merge the component with the lower birth dies at the
/// current value. Equal births keep the component whose root was seen first.
pub fn h0_superlevel_diagram(p: &ProbMap) -> PersistenceDiagram {
    let (h, w) = p.shape();
    let values = p.values();
    let mut order: Vec<usize> = (0..h * w).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let mut uf = UnionFind::new(h * w);
    let mut birth = vec![0.0; h * w];
    let mut rank = vec![0usize; h * w];
    let mut added = vec![false; h * w];
    let mut points = Vec::new();

    for (step, &idx) in order.iter().enumerate() {
        let value = values[idx];
        added[idx] = true;
        birth[idx] = value;
        rank[idx] = step;
        let (r, c) = (idx / w, idx % w);
        let neighbours = [
            (r > 0).then(|| idx - w),
            (c > 0).then(|| idx - 1),
            (c + 1 < w).then(|| idx + 1),
            (r + 1 < h).then(|| idx + w),
        ];
        for n in neighbours.into_iter().flatten() {
            if !added[n] {
                continue;
            }
            let (a, b) = (uf.find(idx), uf.find(n));
            if a == b {
                continue;
            }
            // Elder rule; the earlier-processed root wins ties.
            let (elder, younger) = if (birth[a], std::cmp::Reverse(rank[a]))
                >= (birth[b], std::cmp::Reverse(rank[b]))
            {
                (a, b)
            } else {
                (b, a)
            };
            if birth[younger] > value {
                points.push(DiagramPoint::new(birth[younger], value));
            }
            uf.attach(elder, younger);
        }
    }

    let mut seen_roots = vec![false; h * w];
    for idx in order {
        let root = uf.find(idx);
        if !seen_roots[root] {
            seen_roots[root] = true;
            if birth[root] > 0.0 {
                points.push(DiagramPoint::new(birth[root], 0.0));
            }
        }
    }
    PersistenceDiagram { points }
}

/// One `(1, 0)` point per 4-connected foreground component.
pub fn diagram_of_mask(y: &BinaryMask) -> PersistenceDiagram {
    let (_, n) = connected_components(y, Connectivity::Four);
    PersistenceDiagram {
        points: vec![DiagramPoint::new(1.0, 0.0); n],
    }
}

/// Orders the two diagrams as `(smaller, larger)`.
fn by_size<'a>(
    a: &'a PersistenceDiagram,
    b: &'a PersistenceDiagram,
) -> (&'a [DiagramPoint], &'a [DiagramPoint]) {
    if a.len() <= b.len() {
        (&a.points, &b.points)
    } else {
        (&b.points, &a.points)
    }
}

/// Minimum-cost assignment of every row to a distinct column, for
/// `rows <= cols` (Hungarian method with potentials, O(rows^2 cols)).
/// Returns the column chosen by each row.
fn assign_rows(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based; column 0 is the virtual start and owner 0 means "free".
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=m {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=m {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for col in 1..=m {
        if owner[col] != 0 {
            out[owner[col] - 1] = col - 1;
        }
    }
    out
}

/// q-Wasserstein distance with L-infinity ground metric; unmatched points pay
/// their distance to the diagonal.
///
/// Rows are the points of the smaller diagram. Each row either takes a point
/// of the larger diagram or its own private diagonal slot; larger-diagram
/// points left over go to the diagonal. Column costs for real points are
/// offset by that diagonal fallback so the assignment optimum is the matching
/// optimum.
pub fn wasserstein_pd(a: &PersistenceDiagram, b: &PersistenceDiagram, q: f64) -> Result<f64> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::param("q", "must be finite and >= 1"));
    }
    let (small, large) = by_size(a, b);
    let (s, l) = (small.len(), large.len());
    let pair = |i: usize, j: usize| small[i].linf(&large[j]).powf(q);
    let diag_small = |i: usize| small[i].diagonal_cost().powf(q);
    let diag_large = |j: usize| large[j].diagonal_cost().powf(q);

    // Any finite cost above every feasible assignment works as "forbidden".
    let forbidden = 1.0
        + 2.0
            * (0..s)
                .map(|i| diag_small(i) + (0..l).map(|j| pair(i, j)).sum::<f64>())
                .sum::<f64>()
        + 2.0 * (0..l).map(diag_large).sum::<f64>();
    let cost: Vec<Vec<f64>> = (0..s)
        .map(|i| {
            (0..l)
                .map(|j| pair(i, j) - diag_large(j))
                .chain((0..s).map(|k| if k == i { diag_small(i) } else { forbidden }))
                .collect()
        })
        .collect();
    let choice = assign_rows(&cost);

    let mut taken = vec![false; l];
    let mut total = 0.0;
    for (i, &col) in choice.iter().enumerate() {
        if col < l {
            taken[col] = true;
            total += pair(i, col);
        } else {
            total += diag_small(i);
        }
    }
    for j in (0..l).filter(|&j| !taken[j]) {
        total += diag_large(j);
    }
    Ok(total.powf(1.0 / q))
}

/// Kuhn's augmenting-path search: can every vertex in `left` be matched
/// along `edge(left, right)` to a distinct vertex in `0..n_right`?
fn saturates(left: &[usize], n_right: usize, edge: &dyn Fn(usize, usize) -> bool) -> bool {
    fn augment(
        x: usize,
        n_right: usize,
        edge: &dyn Fn(usize, usize) -> bool,
        visited: &mut [bool],
        mate: &mut [Option<usize>],
    ) -> bool {
        for y in 0..n_right {
            if !visited[y] && edge(x, y) {
                visited[y] = true;
                if mate[y].is_none_or(|other| augment(other, n_right, edge, visited, mate)) {
                    mate[y] = Some(x);
                    return true;
                }
            }
        }
        false
    }
    let mut mate = vec![None; n_right];
    left.iter().all(|&x| {
        let mut visited = vec![false; n_right];
        augment(x, n_right, edge, &mut visited, &mut mate)
    })
}

/// Bottleneck distance: binary search over the candidate edge costs.
///
/// A bound `t` is feasible when there is a matching that covers every point
/// of the smaller diagram (each may use its own diagonal slot) and every
/// larger-diagram point farther than `t` from the diagonal. By the
/// Mendelsohn-Dulmage theorem that holds exactly when each side can be
/// covered on its own, so two Kuhn searches decide it.
pub fn bottleneck_pd(a: &PersistenceDiagram, b: &PersistenceDiagram) -> f64 {
    let (small, large) = by_size(a, b);
    let (s, l) = (small.len(), large.len());
    let pair = |i: usize, j: usize| small[i].linf(&large[j]);

    let mut candidates: Vec<f64> = (0..s)
        .flat_map(|i| (0..l).map(move |j| pair(i, j)))
        .collect();
    candidates.extend(small.iter().chain(large).map(DiagramPoint::diagonal_cost));
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let rows: Vec<usize> = (0..s).collect();
    let feasible = |t: f64| {
        // Smaller side: columns 0..l are real points, l + i is row i's diagonal.
        let row_edge = |i: usize, col: usize| {
            if col < l {
                pair(i, col) <= t
            } else {
                col - l == i && small[i].diagonal_cost() <= t
            }
        };
        let heavy: Vec<usize> = (0..l).filter(|&j| large[j].diagonal_cost() > t).collect();
        saturates(&rows, l + s, &row_edge) && saturates(&heavy, s, &|j, i| pair(i, j) <= t)
    };

    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Which diagram distance to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiagramDistanceConfig {
    Wasserstein { q: f64 },
    Bottleneck,
}

impl Default for DiagramDistanceConfig {
    fn default() -> Self {
        DiagramDistanceConfig::Wasserstein { q: 1.0 }
    }
}

impl DiagramDistanceConfig {
    pub fn distance(&self, a: &PersistenceDiagram, b: &PersistenceDiagram) -> Result<f64> {
        match *self {
            DiagramDistanceConfig::Wasserstein { q } => wasserstein_pd(a, b, q),
            DiagramDistanceConfig::Bottleneck => Ok(bottleneck_pd(a, b)),
        }
    }
}

/// Distance between the superlevel diagram of `pred` and the diagram of `gt`.
pub fn pd_distance(pred: &ProbMap, gt: &BinaryMask, cfg: &DiagramDistanceConfig) -> Result<f64> {
    gt.ensure_same_shape(pred.shape())?;
    cfg.distance(&h0_superlevel_diagram(pred), &diagram_of_mask(gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagram(pairs: &[(f64, f64)]) -> PersistenceDiagram {
        PersistenceDiagram::from_pairs(pairs).unwrap()
    }

    #[test]
    fn plateau_on_zero_background() {
        let mut v = vec![0.0; 25];
        for idx in [6, 7, 8, 11, 12, 13] {
            v[idx] = 1.0;
        }
        let d = h0_superlevel_diagram(&ProbMap::new(5, 5, v).unwrap());
        assert_eq!(d.points(), &[DiagramPoint::new(1.0, 0.0)]);
    }

    #[test]
    fn two_peaks_joined_by_ridge() {
        let p = ProbMap::new(1, 7, vec![0.0, 1.0, 0.3, 0.3, 0.3, 0.8, 0.0]).unwrap();
        let d = h0_superlevel_diagram(&p).sorted();
        assert_eq!(
            d.points(),
            &[DiagramPoint::new(1.0, 0.0), DiagramPoint::new(0.8, 0.3)]
        );
    }

    #[test]
    fn all_zero_map_has_empty_diagram() {
        assert!(h0_superlevel_diagram(&ProbMap::filled(4, 4, 0.0).unwrap()).is_empty());
    }

    #[test]
    fn mask_diagrams() {
        assert!(diagram_of_mask(&BinaryMask::zeros(3, 3)).is_empty());
        let m = BinaryMask::from_ascii(&["#.#.#"]).unwrap();
        assert_eq!(diagram_of_mask(&m), diagram(&[(1.0, 0.0); 3]));
        assert_eq!(h0_superlevel_diagram(&m.to_probmap()), diagram_of_mask(&m));
    }

    #[test]
    fn wasserstein_small_cases() {
        let one = diagram(&[(1.0, 0.0)]);
        let empty = PersistenceDiagram::default();
        assert_eq!(wasserstein_pd(&one, &one, 1.0).unwrap(), 0.0);
        assert_eq!(wasserstein_pd(&one, &empty, 1.0).unwrap(), 0.5);
        let other = diagram(&[(0.8, 0.0)]);
        assert!((wasserstein_pd(&one, &other, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(wasserstein_pd(&one, &other, 0.5).is_err());
        assert_eq!(wasserstein_pd(&empty, &empty, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn bottleneck_small_cases() {
        let one = diagram(&[(1.0, 0.0)]);
        assert_eq!(bottleneck_pd(&one, &one), 0.0);
        assert_eq!(bottleneck_pd(&one, &PersistenceDiagram::default()), 0.5);
        let two = diagram(&[(1.0, 0.0), (0.6, 0.2)]);
        assert!((bottleneck_pd(&two, &one) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pd_distance_cases() {
        let gt = BinaryMask::from_ascii(&[".....", ".###.", ".###.", "....."]).unwrap();
        let cfg = DiagramDistanceConfig::default();
        assert_eq!(pd_distance(&gt.to_probmap(), &gt, &cfg).unwrap(), 0.0);
        let half: Vec<f64> = gt.pixels().iter().map(|&v| 0.5 * f64::from(v)).collect();
        let pred = ProbMap::new(4, 5, half).unwrap();
        assert_eq!(pd_distance(&pred, &gt, &cfg).unwrap(), 0.5);
        let wrong = ProbMap::filled(3, 3, 0.5).unwrap();
        assert!(matches!(
            pd_distance(&wrong, &gt, &cfg),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn json_is_sorted_pairs() {
        let d = diagram(&[(0.5, 0.4), (1.0, 0.0), (0.9, 0.3), (0.7, 0.1)]);
        assert_eq!(d.to_json(), "[[1.0,0.0],[0.9,0.3],[0.7,0.1],[0.5,0.4]]");
        let back = PersistenceDiagram::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d.sorted());
        assert!(PersistenceDiagram::from_json("[[0.1,0.5]]").is_err());
    }
}
