//! Brute-force oracles and generators shared by the integration tests.
//!
//! Nothing here calls into the library's own algorithms; each oracle is the
//! slow, obvious version of what it checks.

#![allow(dead_code)]

use hypertopo::persistence::PersistenceDiagram;
use hypertopo::{BinaryMask, ProbMap};
use rand::Rng;

pub fn random_mask(rng: &mut impl Rng, max_side: usize) -> BinaryMask {
    let h = rng.gen_range(1..=max_side);
    let w = rng.gen_range(1..=max_side);
    random_mask_of(rng, h, w)
}

pub fn random_mask_of(rng: &mut impl Rng, h: usize, w: usize) -> BinaryMask {
    let density = rng.gen_range(0.05..0.95);
    let pixels = (0..h * w)
        .map(|_| u8::from(rng.gen_bool(density)))
        .collect();
    BinaryMask::new(h, w, pixels).unwrap()
}

pub fn random_probmap(rng: &mut impl Rng, h: usize, w: usize) -> ProbMap {
    ProbMap::new(h, w, (0..h * w).map(|_| rng.gen_range(0.0..=1.0)).collect()).unwrap()
}

/// Number of connected components of cells where `grid[r][c] == value`,
/// by depth-first flood fill.
fn flood_count(grid: &[Vec<bool>], value: bool, eight: bool) -> usize {
    let h = grid.len() as i64;
    let w = if h == 0 { 0 } else { grid[0].len() as i64 };
    let mut seen = vec![vec![false; w as usize]; h as usize];
    let four = [(0, 1), (1, 0), (0, -1), (-1, 0)];
    let diag = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
    let mut count = 0;
    for r in 0..h {
        for c in 0..w {
            if grid[r as usize][c as usize] != value || seen[r as usize][c as usize] {
                continue;
            }
            count += 1;
            let mut stack = vec![(r, c)];
            seen[r as usize][c as usize] = true;
            while let Some((y, x)) = stack.pop() {
                let steps = four
                    .iter()
                    .chain(if eight { diag.iter() } else { [].iter() });
                for (dy, dx) in steps {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h || nx >= w {
                        continue;
                    }
                    let (uy, ux) = (ny as usize, nx as usize);
                    if grid[uy][ux] == value && !seen[uy][ux] {
                        seen[uy][ux] = true;
                        stack.push((ny, nx));
                    }
                }
            }
        }
    }
    count
}

fn to_grid(mask: &BinaryMask, pad: usize) -> Vec<Vec<bool>> {
    let (h, w) = mask.shape();
    let mut g = vec![vec![false; w + 2 * pad]; h + 2 * pad];
    for r in 0..h {
        for c in 0..w {
            g[r + pad][c + pad] = mask.get(r, c);
        }
    }
    g
}

/// 4-connected foreground components.
pub fn components_oracle(mask: &BinaryMask) -> usize {
    flood_count(&to_grid(mask, 0), true, false)
}

/// 8-connected background components not touching the border.
pub fn holes_flood(mask: &BinaryMask) -> usize {
    flood_count(&to_grid(mask, 1), false, true) - 1
}

/// V - E + F by listing every cell of the cubical complex.
pub fn chi_by_cells(mask: &BinaryMask) -> i64 {
    let (h, w) = mask.shape();
    let on = |r: usize, c: usize| mask.get(r, c);
    let mut v = 0i64;
    let mut e = 0i64;
    let mut f = 0i64;
    for r in 0..h {
        for c in 0..w {
            if !on(r, c) {
                continue;
            }
            v += 1;
            if c + 1 < w && on(r, c + 1) {
                e += 1;
            }
            if r + 1 < h && on(r + 1, c) {
                e += 1;
            }
            if r + 1 < h && c + 1 < w && on(r, c + 1) && on(r + 1, c) && on(r + 1, c + 1) {
                f += 1;
            }
        }
    }
    v - e + f
}

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn diag(a: (f64, f64)) -> f64 {
    (a.0 - a.1) / 2.0
}

/// Enumerates every partial matching of `a` into `b`; unmatched points on
/// either side go to the diagonal. Calls `visit` with the list of edge costs.
fn each_matching(a: &[(f64, f64)], b: &[(f64, f64)], visit: &mut impl FnMut(&[f64])) {
    fn rec(
        i: usize,
        a: &[(f64, f64)],
        b: &[(f64, f64)],
        used: &mut Vec<bool>,
        costs: &mut Vec<f64>,
        visit: &mut dyn FnMut(&[f64]),
    ) {
        if i == a.len() {
            let base = costs.len();
            for (j, p) in b.iter().enumerate() {
                if !used[j] {
                    costs.push(diag(*p));
                }
            }
            visit(costs);
            costs.truncate(base);
            return;
        }
        costs.push(diag(a[i]));
        rec(i + 1, a, b, used, costs, visit);
        costs.pop();
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                costs.push(linf(a[i], b[j]));
                rec(i + 1, a, b, used, costs, visit);
                costs.pop();
                used[j] = false;
            }
        }
    }
    let mut used = vec![false; b.len()];
    rec(0, a, b, &mut used, &mut Vec::new(), visit);
}

fn pairs(d: &PersistenceDiagram) -> Vec<(f64, f64)> {
    d.points().iter().map(|p| (p.birth, p.death)).collect()
}

pub fn brute_wasserstein(a: &PersistenceDiagram, b: &PersistenceDiagram, q: f64) -> f64 {
    let mut best = f64::INFINITY;
    each_matching(&pairs(a), &pairs(b), &mut |costs| {
        best = best.min(costs.iter().map(|c| c.powf(q)).sum::<f64>());
    });
    best.powf(1.0 / q)
}

pub fn brute_bottleneck(a: &PersistenceDiagram, b: &PersistenceDiagram) -> f64 {
    let mut best = f64::INFINITY;
    each_matching(&pairs(a), &pairs(b), &mut |costs| {
        best = best.min(costs.iter().copied().fold(0.0, f64::max));
    });
    best
}

/// Diagram with up to `max_points` points, birth >= death, values on a coarse
/// grid so that ties actually occur.
pub fn random_diagram(rng: &mut impl Rng, max_points: usize) -> PersistenceDiagram {
    let n = rng.gen_range(0..=max_points);
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let a = f64::from(rng.gen_range(0..=20u32)) / 20.0;
            let b = f64::from(rng.gen_range(0..=20u32)) / 20.0;
            (a.max(b), a.min(b))
        })
        .collect();
    PersistenceDiagram::from_pairs(&pts).unwrap()
}
