//! Exact combinatorial topology of binary pixel grids.
//!
//! The foreground is read as a cubical complex with one vertex per pixel, one
//! edge per 4-adjacent pair and one square per fully set 2x2 block. Its Euler
//! characteristic is the local sum
//!
//! ```text
//! chi = sum(P[i,j]) - sum(P[i,j] P[i,j+1]) - sum(P[i,j] P[i+1,j])
//!     + sum(P[i,j] P[i+1,j] P[i,j+1] P[i+1,j+1])
//! ```
//!
//! Note that the usual soft-Euler write-up labels single pixels as "faces" and
//! 2x2 blocks as "vertices". The roles are swapped with respect to the complex
//! above, but the formula is the same, and the formula is what is implemented.
//!
//! Components use 4-connectivity; holes are the dual 8-connected bounded
//! background regions. This is the only pairing for which chi = b0 - b1.

use std::collections::VecDeque;

use crate::grid::BinaryMask;

/// Pixel adjacency used for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }

    /// Already-visited neighbours in a raster scan.
    fn backward_offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 2] = [(-1, 0), (0, -1)];
        const EIGHT: [(isize, isize); 4] = [(-1, -1), (-1, 0), (-1, 1), (0, -1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Betti numbers of a 2D foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BettiPair {
    pub beta0: usize,
    pub beta1: usize,
}

impl BettiPair {
    pub fn euler(&self) -> i64 {
        self.beta0 as i64 - self.beta1 as i64
    }
}

/// Component labels; 0 is background, components are numbered 1..=count in
/// the raster order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Attaches the root of `child` under the root of `keep`.
    pub(crate) fn attach(&mut self, keep: usize, child: usize) {
        let (k, c) = (self.find(keep), self.find(child));
        if k != c {
            self.parent[c] = k;
            self.size[k] += self.size[c];
        }
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] >= self.size[rb] {
            self.attach(ra, rb);
        } else {
            self.attach(rb, ra);
        }
        true
    }
}

#[inline]
fn neighbour(
    h: usize,
    w: usize,
    r: usize,
    c: usize,
    (dr, dc): (isize, isize),
) -> Option<(usize, usize)> {
    let nr = r.checked_add_signed(dr)?;
    let nc = c.checked_add_signed(dc)?;
    (nr < h && nc < w).then_some((nr, nc))
}

/// Labels the maximal connected foreground regions.
///
/// Two-pass union-find; labels are then renumbered by first pixel in raster
/// order, so identical inputs always produce identical label maps.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> (LabelMap, usize) {
    let (h, w) = mask.shape();
    let mut uf = UnionFind::new(h * w);
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            for &off in connectivity.backward_offsets() {
                if let Some((nr, nc)) = neighbour(h, w, r, c, off) {
                    if mask.get(nr, nc) {
                        uf.union(r * w + c, nr * w + nc);
                    }
                }
            }
        }
    }

    let mut root_label = vec![0u32; h * w];
    let mut labels = vec![0u32; h * w];
    let mut count = 0u32;
    for (idx, label) in labels.iter_mut().enumerate() {
        if mask.pixels()[idx] == 0 {
            continue;
        }
        let root = uf.find(idx);
        if root_label[root] == 0 {
            count += 1;
            root_label[root] = count;
        }
        *label = root_label[root];
    }
    (
        LabelMap {
            height: h,
            width: w,
            labels,
        },
        count as usize,
    )
}

/// Exact Euler characteristic from the local vertex/edge/square counts.
pub fn euler_characteristic(mask: &BinaryMask) -> i64 {
    let (h, w) = mask.shape();
    let mut chi = 0i64;
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            chi += 1;
            let right = c + 1 < w && mask.get(r, c + 1);
            let down = r + 1 < h && mask.get(r + 1, c);
            chi -= i64::from(right) + i64::from(down);
            if right && down && mask.get(r + 1, c + 1) {
                chi += 1;
            }
        }
    }
    chi
}

/// `beta0` from 4-connected components, `beta1 = beta0 - chi`.
///
/// # Panics
///
/// If `beta1` would be negative. That can only mean the Euler characteristic
/// and the component count disagree about the complex, which is a bug.
pub fn betti_numbers(mask: &BinaryMask) -> BettiPair {
    let (_, beta0) = connected_components(mask, Connectivity::Four);
    let chi = euler_characteristic(mask);
    let beta1 = beta0 as i64 - chi;
    assert!(
        beta1 >= 0,
        "topology invariant violated: beta0={beta0}, chi={chi} gives negative beta1"
    );
    BettiPair {
        beta0,
        beta1: beta1 as usize,
    }
}

/// Counts 8-connected background regions that do not reach the border.
///
/// Independent of [`betti_numbers`]: it never looks at the Euler
/// characteristic, only at breadth-first reachability of background pixels.
pub fn holes_oracle(mask: &BinaryMask) -> usize {
    let (h, w) = mask.shape();
    let mut seen = vec![false; h * w];
    let mut queue = VecDeque::new();

    let flood = |seen: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize)>| {
        while let Some((r, c)) = queue.pop_front() {
            for &off in Connectivity::Eight.offsets() {
                if let Some((nr, nc)) = neighbour(h, w, r, c, off) {
                    let idx = nr * w + nc;
                    if !mask.get(nr, nc) && !seen[idx] {
                        seen[idx] = true;
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
    };

    for r in 0..h {
        for c in 0..w {
            let on_border = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
            if on_border && !mask.get(r, c) && !seen[r * w + c] {
                seen[r * w + c] = true;
                queue.push_back((r, c));
            }
        }
    }
    flood(&mut seen, &mut queue);

    let mut holes = 0;
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) && !seen[r * w + c] {
                holes += 1;
                seen[r * w + c] = true;
                queue.push_back((r, c));
                flood(&mut seen, &mut queue);
            }
        }
    }
    holes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring() -> BinaryMask {
        BinaryMask::from_ascii(&["###", "#.#", "###"]).unwrap()
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::zeros(3, 3);
        let (labels, n) = connected_components(&m, Connectivity::Four);
        assert_eq!(n, 0);
        assert!(labels.labels().iter().all(|&l| l == 0));
        assert_eq!(betti_numbers(&m), BettiPair { beta0: 0, beta1: 0 });
        assert_eq!(euler_characteristic(&m), 0);
    }

    #[test]
    fn adjacency_definitions() {
        let m = BinaryMask::from_points(3, 3, &[(0, 0), (2, 2)]);
        assert_eq!(connected_components(&m, Connectivity::Four).1, 2);
        let d = BinaryMask::from_points(3, 3, &[(0, 0), (1, 1)]);
        assert_eq!(connected_components(&d, Connectivity::Four).1, 2);
        assert_eq!(connected_components(&d, Connectivity::Eight).1, 1);
    }

    #[test]
    fn labels_follow_raster_order() {
        let m = BinaryMask::from_ascii(&["..#", "#..", "#.#"]).unwrap();
        let (labels, n) = connected_components(&m, Connectivity::Four);
        assert_eq!(n, 3);
        assert_eq!(labels.labels(), &[0, 0, 1, 2, 0, 0, 2, 0, 3]);
    }

    #[test]
    fn euler_small_cases() {
        assert_eq!(
            euler_characteristic(&BinaryMask::from_points(3, 3, &[(1, 1)])),
            1
        );
        assert_eq!(euler_characteristic(&ring()), 0);
        let block = BinaryMask::new(2, 2, vec![1; 4]).unwrap();
        assert_eq!(euler_characteristic(&block), 1);
    }

    #[test]
    fn betti_small_cases() {
        assert_eq!(betti_numbers(&ring()), BettiPair { beta0: 1, beta1: 1 });
        let two_blocks = BinaryMask::from_ascii(&["##.##", "##.##"]).unwrap();
        assert_eq!(betti_numbers(&two_blocks), BettiPair { beta0: 2, beta1: 0 });
    }

    #[test]
    fn holes_oracle_cases() {
        assert_eq!(holes_oracle(&ring()), 1);
        let diamond = BinaryMask::from_points(3, 3, &[(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(holes_oracle(&diamond), 0);
        assert_eq!(betti_numbers(&diamond), BettiPair { beta0: 4, beta1: 0 });
        let disk = BinaryMask::from_ascii(&[".###.", "#####", "#####", ".###."]).unwrap();
        assert_eq!(holes_oracle(&disk), 0);
    }

    #[test]
    fn diagonal_gap_in_wall_is_not_a_hole() {
        // The top-right corner is missing: the centre escapes diagonally.
        let m = BinaryMask::from_ascii(&[".....", ".##..", ".#.#.", ".###.", "....."]).unwrap();
        assert_eq!(holes_oracle(&m), 0);
        assert_eq!(betti_numbers(&m).beta1, 0);
    }
}
