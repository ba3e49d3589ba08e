use motion_attn::dct::{idct, DctCoeffs};
use motion_attn::fusion::{convex_combine, fuse_post, fuse_pre, FusionNet, PostFusionModel};
use motion_attn::model::{MotionModel, ModelConfig};
use motion_attn::numerics::{seeded_rng, ParamStore, Tensor};
use motion_attn::pose::{make_partition, synth_periodic, Level, PeriodicSpec, Representation};
use motion_attn::training::{slice_windows, train_fusion, LossKind, TrainConfig};
use proptest::prelude::*;
use rand::Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = seeded_rng(seed);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// A fusion net with every parameter redrawn, so weights are far from uniform.
fn scrambled_net(k: usize, n_keep: usize, inputs: usize, seed: u64) -> (FusionNet, ParamStore) {
    let mut store = ParamStore::new();
    let net = FusionNet::new(&mut store, "f", k, n_keep, inputs, 8, 1, &mut seeded_rng(seed)).unwrap();
    let mut rng = seeded_rng(seed + 1);
    for t in store.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
    }
    (net, store)
}

proptest! {
    #[test]
    fn weights_are_convex_and_output_in_hull(seed in 0u64..500, inputs in 2usize..4) {
        let (net, store) = scrambled_net(6, 5, inputs, seed);
        let items: Vec<Tensor> = (0..inputs).map(|j| random(6, 5, seed * 10 + j as u64)).collect();
        let refs: Vec<&Tensor> = items.iter().collect();
        let w = net.weights_for(&store, &refs).unwrap();
        prop_assert_eq!(w.shape(), &[6, inputs]);
        for r in 0..6 {
            let row = w.row(r);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let out = fuse_pre(&refs, &net, &store).unwrap();
        for r in 0..6 {
            for c in 0..5 {
                let lo = items.iter().map(|t| t.get(r, c)).fold(f64::INFINITY, f64::min);
                let hi = items.iter().map(|t| t.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.get(r, c) >= lo - 1e-12 && out.get(r, c) <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn pre_fusion_matches_convex_oracle() {
    let (net, store) = scrambled_net(4, 3, 3, 7);
    let items: Vec<Tensor> = (0..3).map(|j| random(4, 3, 20 + j)).collect();
    let refs: Vec<&Tensor> = items.iter().collect();
    let w = net.weights_for(&store, &refs).unwrap();
    let got = fuse_pre(&refs, &net, &store).unwrap();
    for r in 0..4 {
        for c in 0..3 {
            let want: f64 = (0..3).map(|j| w.get(r, j) * items[j].get(r, c)).sum();
            assert!((got.get(r, c) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_inputs_pass_through() {
    let (net, store) = scrambled_net(4, 3, 3, 8);
    let x = random(4, 3, 30);
    let out = fuse_pre(&[&x, &x, &x], &net, &store).unwrap();
    assert!(out.max_abs_diff(&x) < 1e-12);
}

/// Weights applied to decoded poses give the same result as weights applied
/// to coefficients followed by decoding, because decoding is linear.
#[test]
fn pose_and_coefficient_domains_agree() {
    let (net, store) = scrambled_net(5, 8, 3, 9);
    let coeffs: Vec<Tensor> = (0..3).map(|j| random(5, 8, 40 + j)).collect();
    let poses: Vec<Tensor> = coeffs.iter().map(|c| idct(&DctCoeffs::new(c.clone()).unwrap())).collect();
    let cref: Vec<&Tensor> = coeffs.iter().collect();
    let pref: Vec<&Tensor> = poses.iter().collect();
    let (fused, w) = fuse_post(&cref, &pref, &net, &store).unwrap();
    let via_coeffs = idct(&DctCoeffs::new(convex_combine(&cref, &w).unwrap()).unwrap());
    assert!(fused.max_abs_diff(&via_coeffs) < 1e-12);
}

fn base(level: Level, seed: u64) -> MotionModel {
    let part = make_partition(12, 3, level, None).unwrap();
    let mut cfg = ModelConfig::new(Representation::Xyz, 4, 3, part).with_horizon(6, 4);
    cfg.d = 8;
    cfg.f = 16;
    cfg.blocks = 1;
    cfg.seed = seed;
    MotionModel::new(cfg).unwrap()
}

#[test]
fn training_fusion_leaves_bases_untouched() {
    let bases = vec![base(Level::Pose, 1), base(Level::Joint, 2)];
    let before: Vec<ParamStore> = bases.iter().map(|b| b.store().clone()).collect();
    let mut model = PostFusionModel::new(bases, 8, 1, 3).unwrap();
    let fusion_before = model.store().clone();

    let seq = synth_periodic(&PeriodicSpec::random(4, 12, 80, 1.0, 0.0, 4)).unwrap();
    let windows = slice_windows(&[seq], 20, 6, 4, 5).unwrap();
    let mut cfg = TrainConfig::new(LossKind::Mpjpe);
    cfg.fusion_epochs = 3;
    cfg.lr = 1e-2;
    cfg.batch = 4;
    train_fusion(&mut model, &windows, &[], &cfg).unwrap();

    for (b, s) in model.bases().iter().zip(&before) {
        assert_eq!(b.store(), s);
    }
    assert_ne!(model.store(), &fusion_before);
    let p = model.predict(&windows[0].history).unwrap();
    let w = p.weights.unwrap();
    for r in 0..w.rows() {
        assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn mismatched_bases_are_rejected() {
    let a = base(Level::Pose, 1);
    let part = make_partition(12, 3, Level::Pose, None).unwrap();
    let cfg = ModelConfig::new(Representation::Xyz, 4, 3, part).with_horizon(6, 5);
    let b = MotionModel::new(cfg).unwrap();
    assert!(PostFusionModel::new(vec![a.clone(), b], 8, 1, 0).is_err());
    assert!(PostFusionModel::new(vec![a], 8, 1, 0).is_err());
}
