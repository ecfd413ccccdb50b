use proptest::prelude::*;

use clifford_core::algebra::Signature;
use clifford_core::autodiff::{fd_check, FdConfig};
use clifford_core::datagen::*;
use clifford_core::layers::ParamSet;
use clifford_core::models::*;
use clifford_core::Error;

fn tiny_advection(trajectories: usize, steps: usize, grid: usize, seed: u64) -> TrajectorySet {
    gen_advection2d(&AdvectionParams {
        grid,
        trajectories,
        steps,
        dt: 0.02,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn tiny_config(family: Family, set: &TrajectorySet) -> SurrogateConfig {
    let mut c = SurrogateConfig::desk(family, set.signature, &set.dims, set.packing.mapped_blades());
    c.blocks = 1;
    c.channels = if family.is_clifford() { 2 } else { 4 };
    c.modes = vec![2; set.dims.len()];
    c
}

fn layout(blades: usize, spatial: usize) -> FrameLayout {
    FrameLayout { blades, channels: 1, spatial }
}

#[test]
fn smse_closed_forms() {
    let l = layout(4, 9);
    let target: Vec<f64> = (0..36).map(|i| (i as f64).sin()).collect();
    assert_eq!(smse(&target, &target, l, &[0, 1, 2]).unwrap(), 0.0);
    let shifted: Vec<f64> = target.iter().map(|v| v + 1.0).collect();
    let one = smse(&shifted, &target, l, &[0]).unwrap();
    assert!((one - 1.0).abs() < 1e-12);
    let two = smse(&shifted, &target, l, &[0, 2]).unwrap();
    assert!((two - 2.0 * one).abs() < 1e-12);
    // two steps sum
    let t2 = [target.clone(), target.clone()].concat();
    let s2 = [shifted.clone(), shifted].concat();
    assert!((smse(&s2, &t2, l, &[0]).unwrap() - 2.0).abs() < 1e-12);
    assert!(matches!(smse(&target[..35], &target, l, &[0]), Err(Error::Shape(_))));
}

proptest! {
    #[test]
    fn smse_nonnegative_and_zero_iff_equal(v in prop::collection::vec(-10.0f64..10.0, 8), i in 0usize..8, d in -1.0f64..1.0) {
        let l = layout(2, 4);
        let mut w = v.clone();
        w[i] += d;
        let s = smse(&w, &v, l, &[0, 1]).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert_eq!(s == 0.0, d == 0.0);
    }
}

#[test]
fn onestep_splits_into_scalar_and_vector() {
    let set = tiny_advection(3, 8, 8, 1);
    let model = Surrogate::new(tiny_config(Family::Cfno, &set), 3).unwrap();
    let m = evaluate(&model, &set, &[0, 1, 2], 4).unwrap();
    assert!(m.smse_onestep > 0.0);
    assert_eq!(m.smse_onestep, m.smse_scalar + m.smse_vector);
    let (scalar, vector) = field_groups(&set);
    assert_eq!((scalar, vector), (vec![0], vec![1, 2]));
}

#[test]
fn every_family_predicts_full_frames() {
    let set = tiny_advection(2, 4, 8, 2);
    let hist: Vec<&[f64]> = vec![set.frame(0, 0), set.frame(0, 1)];
    for family in [Family::Resnet, Family::Cresnet, Family::CresnetRot, Family::Fno, Family::Cfno] {
        let model = Surrogate::new(tiny_config(family, &set), 0).unwrap();
        let out = model.predict(&[hist.clone(), hist.clone()]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), set.frame_len(), "{family:?}");
        // the unmapped bivector blade stays empty
        let n = set.spatial_len();
        assert!(out[0][3 * n..].iter().all(|&v| v == 0.0), "{family:?}");
    }
    let cfg3 = SurrogateConfig::desk(Family::Cresnet, Signature::CL30, &[4, 4, 4], vec![1, 2, 3, 4, 5, 6]);
    assert!(Surrogate::new(cfg3.clone(), 0).is_ok());
    let mut rot3 = cfg3;
    rot3.family = Family::CresnetRot;
    assert!(Surrogate::new(rot3, 0).is_err());
}

#[test]
fn rollout_baselines() {
    let set = tiny_advection(2, 8, 8, 3);
    // static data: identity model is exact
    let mut stat = set.clone();
    for tr in 0..stat.trajectories {
        let f0 = stat.frame(tr, 0).to_vec();
        for t in 1..stat.steps {
            let n = stat.frame_len();
            stat.data[(tr * stat.steps + t) * n..][..n].copy_from_slice(&f0);
        }
    }
    let id = IdentityModel { history: 2 };
    let m = evaluate(&id, &stat, &[0, 1], 4).unwrap();
    assert_eq!((m.smse_onestep, m.smse_rollout), (0.0, 0.0));

    // zero model: rollout loss is the target energy
    let z = ZeroModel { history: 2 };
    let l = FrameLayout::of(&set);
    let mapped = set.packing.mapped_blades();
    let hist = [set.frame(0, 0), set.frame(0, 1)];
    let pred = rollout(&z, &hist, 5).unwrap().concat();
    let target: Vec<f64> = (2..7).flat_map(|t| set.frame(0, t).to_vec()).collect();
    let energy: f64 = (2..7)
        .map(|t| {
            let f = set.frame(0, t);
            mapped.iter().map(|&b| f[b * l.spatial..(b + 1) * l.spatial].iter().map(|v| v * v).sum::<f64>() / l.spatial as f64).sum::<f64>()
        })
        .sum();
    assert!((smse(&pred, &target, l, &mapped).unwrap() - energy).abs() < 1e-12);

    // one rollout step is the one-step loss of the first window
    let model = Surrogate::new(tiny_config(Family::Cresnet, &set), 1).unwrap();
    let r1 = rollout(&model, &hist, 1).unwrap().concat();
    let one = model.predict(&[hist.to_vec()]).unwrap().concat();
    assert_eq!(smse(&r1, set.frame(0, 2), l, &mapped).unwrap(), smse(&one, set.frame(0, 2), l, &mapped).unwrap());

    assert!(rollout(&model, &hist[..1], 1).is_err());
}

#[test]
fn model_gradients_match_finite_differences() {
    let set = tiny_advection(2, 3, 6, 4);
    for family in [Family::Cfno, Family::CresnetRot, Family::Fno, Family::Resnet] {
        let model = Surrogate::new(tiny_config(family, &set), 5).unwrap();
        let hist = vec![vec![set.frame(0, 0), set.frame(0, 1)], vec![set.frame(1, 0), set.frame(1, 1)]];
        let targets = vec![set.frame(0, 2), set.frame(1, 2)];
        let (_, g) = model.loss_and_grad(&hist, &targets).unwrap();
        let f = |p: &[Vec<f64>]| {
            let mut m = model.clone();
            for (i, v) in p.iter().enumerate() {
                *m.params.get_mut(i) = v.clone();
            }
            m.loss_and_grad(&hist, &targets).unwrap().0
        };
        // whole-model losses have many tiny gradient entries; a wider step
        // keeps the difference quotient's rounding noise below them
        let cfg = FdConfig { coords: 60, seed: 1, h: 1e-4, ..Default::default() };
        let r = fd_check(f, model.params.tensors(), &g, cfg);
        assert!(r.max_rel_error <= 1e-5, "{family:?}: {r:?}");
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let set = tiny_advection(4, 4, 8, 5);
    let model = Surrogate::new(tiny_config(Family::Cfno, &set), 0).unwrap();
    let before = model.params.clone();
    let cfg = TrainConfig { epochs: 2, batch_size: 2, lr: 0.0, ..Default::default() };
    let mut tr = Trainer::new(model, cfg, &set).unwrap();
    tr.run(&set).unwrap();
    assert_eq!(tr.model.params, before);
    assert_eq!(tr.step, 2 * tr.batches_per_epoch());
}

#[test]
fn training_is_deterministic_and_resumable() {
    let set = tiny_advection(6, 5, 8, 6);
    let cfg = TrainConfig { epochs: 4, batch_size: 2, lr: 3e-3, ..Default::default() };
    let make = || Trainer::new(Surrogate::new(tiny_config(Family::Cfno, &set), 9).unwrap(), cfg.clone(), &set).unwrap();
    let mut a = make();
    a.run(&set).unwrap();
    let mut b = make();
    b.run(&set).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.model.params, b.model.params);

    let dir = tempfile::tempdir().unwrap();
    let mut c = make();
    c.run_epoch(&set).unwrap();
    c.run_epoch(&set).unwrap();
    save_checkpoint(dir.path(), &c).unwrap();
    let mut d = load_trainer(dir.path()).unwrap();
    assert_eq!(d.step, c.step);
    d.run(&set).unwrap();
    assert_eq!(d.curve, a.curve);
    assert_eq!(d.model.params, a.model.params);
    assert_eq!(d.curve.len(), 4);
    assert!(d.curve.windows(2).all(|w| w[1].step > w[0].step));
    assert!(curve_csv(&d.curve).starts_with("step,train_smse,valid_smse\n"));
}

#[test]
fn single_batch_overfit() {
    let set = tiny_advection(2, 3, 8, 7);
    let mut mc = tiny_config(Family::Cfno, &set);
    mc.channels = 8;
    mc.modes = vec![4, 4];
    let model = Surrogate::new(mc, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 1500,
        batch_size: 2,
        lr: 1e-2,
        valid_frac: 0.0,
        ..Default::default()
    };
    let mut tr = Trainer::new(model, cfg, &set).unwrap();
    assert_eq!(tr.batches_per_epoch(), 1);
    tr.run(&set).unwrap();
    let m = evaluate(&tr.model, &set, &tr.train_idx, 4).unwrap();
    assert!(m.smse_onestep < 1e-4, "{}", m.smse_onestep);
}

#[test]
fn divergence_restores_last_good_parameters() {
    let set = tiny_advection(3, 3, 8, 8);
    let model = Surrogate::new(tiny_config(Family::Cfno, &set), 0).unwrap();
    let before = model.params.clone();
    let cfg = TrainConfig { epochs: 1, batch_size: 1, lr: 1e300, warmup_frac: 0.0, valid_frac: 0.0, ..Default::default() };
    let mut tr = Trainer::new(model, cfg, &set).unwrap();
    assert!(matches!(tr.run_epoch(&set), Err(Error::NonFinite(_))));
    assert_eq!(tr.model.params, before);
    assert_eq!(tr.step, 0);
}

#[test]
fn parameter_parity_with_real_baselines() {
    let mapped = vec![0, 1, 2];
    let count = |f: Family| {
        let c = SurrogateConfig::desk(f, Signature::CL20, &[32, 32], mapped.clone());
        Surrogate::new(c, 0).unwrap().parameter_count() as f64
    };
    let (cfno, fno) = (count(Family::Cfno), count(Family::Fno));
    assert!((cfno / fno - 1.0).abs() <= 0.1, "{cfno} vs {fno}");
    let (cres, res) = (count(Family::Cresnet), count(Family::Resnet));
    assert!((cres / res - 1.0).abs() <= 0.1, "{cres} vs {res}");
}

#[test]
fn checkpoint_rejects_foreign_parameters() {
    let set = tiny_advection(2, 3, 8, 9);
    let a = Surrogate::new(tiny_config(Family::Cfno, &set), 0).unwrap();
    let b = Surrogate::new(tiny_config(Family::Fno, &set), 0).unwrap();
    assert!(Surrogate::with_params(a.config.clone(), b.params.clone()).is_err());
    assert!(Surrogate::with_params(a.config.clone(), ParamSet::new()).is_err());
    let mut other = set.clone();
    other.dims = vec![4, 4];
    assert!(check_compatible(&a.config, &other).is_err());
}
