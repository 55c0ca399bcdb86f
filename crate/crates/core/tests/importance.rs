use fisgan_core::flows::{standard_normal, FlowArch, FlowKind, FlowModel};
use fisgan_core::importance::{allocate_counts, augment, build_flow_dataset, importance_weights, AugmentCov, LatentBatch};
use fisgan_core::optim::AdamState;
use fisgan_core::Tensor2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn norms() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..100.0, 1..64).prop_filter("some mass", |g| g.iter().any(|&v| v > 0.0))
}

proptest! {
    #[test]
    fn counts_are_conserved(g in norms(), total in 1usize..5000) {
        let plan = allocate_counts(&importance_weights(&g).unwrap(), total).unwrap();
        prop_assert_eq!(plan.counts.iter().sum::<usize>(), total);
    }

    #[test]
    fn larger_norm_never_gets_fewer_draws(g in norms(), total in 1usize..5000) {
        let plan = allocate_counts(&importance_weights(&g).unwrap(), total).unwrap();
        for a in 0..g.len() {
            for b in 0..g.len() {
                if g[a] > g[b] {
                    prop_assert!(plan.counts[a] >= plan.counts[b], "{:?} {:?}", g, plan.counts);
                }
            }
        }
    }

    #[test]
    fn weights_ignore_scale(g in norms(), k in -20i32..20, c in 1e-3f64..1e3) {
        let w = importance_weights(&g).unwrap();
        let pow2 = 2f64.powi(k);
        let scaled: Vec<f64> = g.iter().map(|v| v * pow2).collect();
        prop_assert_eq!(&importance_weights(&scaled).unwrap(), &w);
        let scaled: Vec<f64> = g.iter().map(|v| v * c).collect();
        for (a, b) in importance_weights(&scaled).unwrap().iter().zip(&w) {
            prop_assert!((a - b).abs() <= 8.0 * f64::EPSILON * b);
        }
    }
}

#[test]
fn ten_thousand_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..40);
        let g: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..10.0) }).collect();
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let w = importance_weights(&g).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let total = rng.gen_range(1..2000);
        let plan = allocate_counts(&w, total).unwrap();
        assert_eq!(plan.counts.iter().sum::<usize>(), total);
    }
}

#[test]
fn augment_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let latents = standard_normal(8, 3, &mut rng);
    let plan = allocate_counts(&importance_weights(&[1.0, 2.0, 0.0, 4.0, 1.0, 1.0, 3.0, 0.5]).unwrap(), 100).unwrap();
    let a = augment(&latents, &plan, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let b = augment(&latents, &plan, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows(), 100);
}

#[test]
fn uniform_norms_give_one_draw_per_latent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut batch = LatentBatch::new(standard_normal(16, 4, &mut rng));
    batch.set_norms(vec![0.7; 16]).unwrap();
    let data = build_flow_dataset(&batch, 16, AugmentCov::Identity, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let noise = standard_normal(16, 4, &mut ChaCha8Rng::seed_from_u64(3));
    let expected = Tensor2::from_fn(16, 4, |r, c| batch.latents.get(r, c) + noise.get(r, c));
    assert_eq!(data, expected);
}

/// Half the latents near `+c`, half near `-c`; the first half has three times the norm.
fn weighted_clusters(seed: u64) -> (LatentBatch, [f64; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = [2.5, 0.0];
    let jitter = standard_normal(64, 2, &mut rng);
    let latents = Tensor2::from_fn(64, 2, |r, c| {
        let sign = if r < 32 { 1.0 } else { -1.0 };
        sign * center[c] + 0.3 * jitter.get(r, c)
    });
    let mut batch = LatentBatch::new(latents);
    batch.set_norms((0..64).map(|r| if r < 32 { 3.0 } else { 1.0 }).collect()).unwrap();
    (batch, center)
}

fn nearer_heavy(points: &Tensor2, center: [f64; 2]) -> f64 {
    let hits = points
        .iter_rows()
        .filter(|p| {
            let d = |s: f64| (p[0] - s * center[0]).powi(2) + (p[1] - s * center[1]).powi(2);
            d(1.0) < d(-1.0)
        })
        .count();
    hits as f64 / points.rows() as f64
}

#[test]
fn heavy_cluster_gets_its_share_of_rows() {
    let (batch, center) = weighted_clusters(4);
    let data = build_flow_dataset(&batch, 1000, AugmentCov::Identity, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    // Each heavy latent is owed 23.4375 rows and each light one 7.8125; the
    // light remainders are larger, so they take the leftovers first.
    let plan = allocate_counts(batch.weights.as_ref().unwrap(), 1000).unwrap();
    assert_eq!(plan.counts[..32].iter().sum::<usize>(), 744);
    assert!(nearer_heavy(&data, center) >= 0.7);
}

#[test]
fn fitted_flow_targets_the_heavy_cluster() {
    let mut passes = 0;
    for seed in 0..5 {
        let (batch, center) = weighted_clusters(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let data = build_flow_dataset(&batch, 512, AugmentCov::Identity, &mut rng).unwrap();
        let arch = FlowArch { depth: 4, hidden: 32, ..FlowArch::default() };
        let mut flow = FlowModel::new(FlowKind::RealNvp, 2, &arch, &mut rng).unwrap();
        flow.fit(&data, 30, 64, &mut AdamState::new(1e-3), &mut rng).unwrap();
        let frac = nearer_heavy(&flow.sample(10_000, &mut rng).unwrap(), center);
        if frac >= 0.6 {
            passes += 1;
        }
    }
    assert!(passes >= 4, "{passes}/5 seeds");
}
