//! Synthetic masks with known Betti numbers.
//!
//! Solid blobs are filled rectangles; a blob carrying `k` holes is a rectangle
//! with `k` rectangular cavities separated by one-pixel walls. Blobs are kept
//! at least `min_gap` background pixels apart, so neither 4- nor 8-adjacency
//! can join them and the outer background stays connected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BinaryMask;

/// Placement attempts per blob before giving up.
const MAX_ATTEMPTS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub n_blobs: usize,
    pub n_holes: usize,
    pub min_gap: usize,
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    top: usize,
    left: usize,
    height: usize,
    width: usize,
}

impl Rect {
    fn separated(&self, other: &Rect, gap: usize) -> bool {
        self.top >= other.top + other.height + gap
            || other.top >= self.top + self.height + gap
            || self.left >= other.left + other.width + gap
            || other.left >= self.left + self.width + gap
    }
}

fn blob_shape(rng: &mut impl Rng, holes: usize) -> (usize, usize, Vec<Rect>) {
    if holes == 0 {
        return (rng.gen_range(1..=6), rng.gen_range(1..=6), Vec::new());
    }
    let cavity_h = rng.gen_range(1..=3);
    let cavity_w = rng.gen_range(1..=3);
    let cavities = (0..holes)
        .map(|k| Rect {
            top: 1,
            left: 1 + k * (cavity_w + 1),
            height: cavity_h,
            width: cavity_w,
        })
        .collect();
    (cavity_h + 2, holes * (cavity_w + 1) + 1, cavities)
}

/// Deterministic for a fixed spec; errors when the blobs do not fit.
pub fn synth_mask(spec: &SynthSpec) -> Result<BinaryMask> {
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::param("height/width", "must be positive"));
    }
    if spec.min_gap < 2 {
        return Err(Error::param("min_gap", "must be >= 2"));
    }
    if spec.n_holes > 0 && spec.n_blobs == 0 {
        return Err(Error::param("n_holes", "holes need at least one blob"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut holes_per_blob = vec![0usize; spec.n_blobs];
    for _ in 0..spec.n_holes {
        let b = rng.gen_range(0..spec.n_blobs);
        holes_per_blob[b] += 1;
    }

    let capacity = |placed: usize| Error::Capacity {
        placed,
        requested: spec.n_blobs,
        height: spec.height,
        width: spec.width,
    };

    let mut mask = BinaryMask::zeros(spec.height, spec.width);
    let mut placed: Vec<Rect> = Vec::with_capacity(spec.n_blobs);
    for &holes in &holes_per_blob {
        let mut done = false;
        for _ in 0..MAX_ATTEMPTS {
            let (h, w, cavities) = blob_shape(&mut rng, holes);
            if h > spec.height || w > spec.width {
                continue;
            }
            let rect = Rect {
                top: rng.gen_range(0..=spec.height - h),
                left: rng.gen_range(0..=spec.width - w),
                height: h,
                width: w,
            };
            if !placed.iter().all(|p| p.separated(&rect, spec.min_gap)) {
                continue;
            }
            for r in rect.top..rect.top + h {
                for c in rect.left..rect.left + w {
                    mask.set(r, c, true);
                }
            }
            for cav in cavities {
                for r in cav.top..cav.top + cav.height {
                    for c in cav.left..cav.left + cav.width {
                        mask.set(rect.top + r, rect.left + c, false);
                    }
                }
            }
            placed.push(rect);
            done = true;
            break;
        }
        if !done {
            return Err(capacity(placed.len()));
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{betti_numbers, holes_oracle, BettiPair};

    fn spec(seed: u64, n_blobs: usize, n_holes: usize) -> SynthSpec {
        SynthSpec {
            seed,
            height: 48,
            width: 48,
            n_blobs,
            n_holes,
            min_gap: 2,
        }
    }

    #[test]
    fn single_solid_blob() {
        let m = synth_mask(&spec(1, 1, 0)).unwrap();
        assert_eq!(betti_numbers(&m), BettiPair { beta0: 1, beta1: 0 });
    }

    #[test]
    fn three_blobs_one_hole() {
        let m = synth_mask(&spec(7, 3, 1)).unwrap();
        assert_eq!(betti_numbers(&m), BettiPair { beta0: 3, beta1: 1 });
        assert_eq!(holes_oracle(&m), 1);
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            synth_mask(&spec(99, 4, 3)).unwrap(),
            synth_mask(&spec(99, 4, 3)).unwrap()
        );
    }

    #[test]
    fn infeasible_specs() {
        let tiny = SynthSpec {
            height: 4,
            width: 4,
            ..spec(0, 20, 0)
        };
        assert!(matches!(synth_mask(&tiny), Err(Error::Capacity { .. })));
        assert!(synth_mask(&spec(0, 0, 2)).is_err());
        assert!(synth_mask(&SynthSpec {
            min_gap: 1,
            ..spec(0, 1, 0)
        })
        .is_err());
        let empty = synth_mask(&spec(0, 0, 0)).unwrap();
        assert!(empty.is_empty());
    }
}
