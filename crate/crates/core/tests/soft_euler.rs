mod common;

use common::{random_mask_of, random_probmap};
use hypertopo::gradcheck::max_fd_error_map;
use hypertopo::soft_euler::{
    loss_weight_schedule, soft_euler_char, soft_euler_char_with, soft_euler_grad,
    soft_euler_grad_with, soft_euler_loss, topology_loss, tv_loss, LossWeights, TopoLossConfig,
};
use hypertopo::topology::euler_characteristic;
use hypertopo::{BinaryMask, Exec, ProbMap};
use proptest::prelude::*;

fn map_strategy(max_side: usize) -> impl Strategy<Value = ProbMap> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(h, w)| {
        proptest::collection::vec(0.0f64..=1.0, h * w)
            .prop_map(move |v| ProbMap::new(h, w, v).unwrap())
    })
}

fn mask_strategy(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(h, w)| {
        proptest::collection::vec(0u8..=1, h * w)
            .prop_map(move |px| BinaryMask::new(h, w, px).unwrap())
    })
}

/// Soft chi computed straight from the definition, one term at a time.
fn soft_chi_oracle(p: &ProbMap) -> f64 {
    let (h, w) = p.shape();
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            total += p.get(r, c);
        }
    }
    for r in 0..h {
        for c in 0..w.saturating_sub(1) {
            total -= p.get(r, c) * p.get(r, c + 1);
        }
    }
    for r in 0..h.saturating_sub(1) {
        for c in 0..w {
            total -= p.get(r, c) * p.get(r + 1, c);
        }
    }
    for r in 0..h.saturating_sub(1) {
        for c in 0..w.saturating_sub(1) {
            total += p.get(r, c) * p.get(r, c + 1) * p.get(r + 1, c) * p.get(r + 1, c + 1);
        }
    }
    total
}

proptest! {
    #[test]
    fn soft_chi_is_exact_on_binary_masks(m in mask_strategy(32)) {
        prop_assert_eq!(soft_euler_char(&m.to_probmap()), euler_characteristic(&m) as f64);
    }

    #[test]
    fn soft_chi_matches_term_oracle(p in map_strategy(20)) {
        prop_assert!((soft_euler_char(&p) - soft_chi_oracle(&p)).abs() < 1e-9);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise(p in map_strategy(40)) {
        prop_assert_eq!(
            soft_euler_char_with(&p, Exec::Sequential).to_bits(),
            soft_euler_char_with(&p, Exec::Parallel).to_bits()
        );
        prop_assert_eq!(soft_euler_grad_with(&p, Exec::Sequential), soft_euler_grad_with(&p, Exec::Parallel));
    }

    #[test]
    fn grad_matches_finite_differences(p in map_strategy(12)) {
        let g = soft_euler_grad(&p);
        prop_assert!(max_fd_error_map(soft_euler_char, &p, &g, 1e-5) < 1e-6);
    }

    #[test]
    fn losses_are_non_negative_and_finite(p in map_strategy(12), seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let y = random_mask_of(&mut rng, p.height(), p.width());
        let topo = soft_euler_loss(&p, &y).unwrap();
        prop_assert!(topo.value >= 0.0);
        prop_assert!(topo.grad.is_finite());
        let tv = tv_loss(&p, 1e-2).unwrap();
        prop_assert!(tv.value >= 0.0);
        prop_assert!(tv.grad.is_finite());
        let total = topology_loss(&p, &y, &TopoLossConfig::default()).unwrap();
        prop_assert!((total.value - topo.value - tv.value).abs() < 1e-9);
    }

    #[test]
    fn loss_vanishes_on_matching_binary_input(m in mask_strategy(16)) {
        let out = soft_euler_loss(&m.to_probmap(), &m).unwrap();
        prop_assert_eq!(out.value, 0.0);
        prop_assert_eq!(out.grad.max_abs(), 0.0);
    }

    #[test]
    fn schedule_is_monotone(warmup in 0i64..20, ramp in 0i64..20, e in 0i64..60) {
        let base = LossWeights { w_seg: 1.0, w_contrast: 0.5, w_topo: 0.3, epoch: 0 };
        let a = loss_weight_schedule(e, warmup, ramp, base).unwrap();
        let b = loss_weight_schedule(e + 1, warmup, ramp, base).unwrap();
        prop_assert!(a.w_topo <= b.w_topo);
        prop_assert!(a.w_contrast <= b.w_contrast);
        prop_assert!(b.w_topo <= base.w_topo);
        prop_assert_eq!(a.w_seg, base.w_seg);
    }
}

#[test]
fn half_map_soft_chi() {
    let p = ProbMap::filled(2, 2, 0.5).unwrap();
    assert_eq!(soft_euler_char(&p), 1.0625);
}

#[test]
fn tv_loss_fd_on_random_maps() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for side in [2, 5, 9] {
        let p = random_probmap(&mut rng, side, side + 1);
        let g = tv_loss(&p, 1e-2).unwrap().grad;
        let err = max_fd_error_map(|q| tv_loss(q, 1e-2).unwrap().value, &p, &g, 1e-6);
        assert!(err < 1e-5, "{err}");
    }
}

#[test]
fn tv_rejects_bad_eps() {
    let p = ProbMap::filled(2, 2, 0.5).unwrap();
    assert!(tv_loss(&p, 0.0).is_err());
    assert!(tv_loss(&p, -1.0).is_err());
}
