use super::*;
use crate::basis::basis_dense;
use crate::data::gen_blobs;
use crate::nn::ModelDef;

fn mlp() -> Model {
    Model::new(ModelDef::mlp(2, &[16], 3)).unwrap()
}

fn config(epochs: usize, m: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        lr: LrSchedule { base: 0.05, ..LrSchedule::default() },
        m,
        batch_size: 32,
        subset_seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn schedule_drops_once() {
    let s = LrSchedule { base: 1.0, drop_frac: 0.8, drop_factor: 0.1 };
    assert_eq!(s.lr_at(0, 10), 1.0);
    assert_eq!(s.lr_at(7, 10), 1.0);
    assert!((s.lr_at(8, 10) - 0.1).abs() < 1e-15);
    assert_eq!(LrSchedule::constant(0.3).lr_at(9, 10), 0.3);
}

#[test]
fn subsets_are_distinct_sorted_and_uniform() {
    let (k, m, trials) = (40, 10, 4000);
    let mut hits = vec![0usize; k];
    for t in 0..trials {
        let s = sample_subset(k, m, splitmix64_at(7, t));
        assert_eq!(s.len(), m);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        for j in s {
            hits[j] += 1;
        }
    }
    // expected 1000 per index, binomial sd about 27
    for h in hits {
        assert!((850..1150).contains(&h), "{h}");
    }
    assert_eq!(sample_subset(5, 5, 1), vec![0, 1, 2, 3, 4]);
}

#[test]
fn projection_matches_dense_oracle() {
    let model = mlp();
    let schema = model.schema();
    let spec = BasisSpec::new(4, 6).unwrap();
    let grad: Vec<f32> = (0..schema.d()).map(|i| ((i * 37 % 11) as f32 - 5.0) * 0.1).collect();
    let got = project_gradient(&grad, &spec, schema, &[0, 2, 5], &StreamConfig::sequential().with_chunk(17)).unwrap();
    for (g, j) in got.iter().zip([0, 2, 5]) {
        let b = basis_dense(&spec, schema, j).unwrap();
        let want: f64 = grad.iter().zip(&b).map(|(&x, &y)| x as f64 * y as f64).sum();
        assert!((g - want).abs() < 1e-9 * want.abs().max(1.0));
    }
    assert!(project_gradient(&grad[1..], &spec, schema, &[0], &StreamConfig::default()).is_err());
}

#[test]
fn incremental_theta_tracks_reconstruction() {
    let model = mlp();
    let data = gen_blobs(3, 40, 0.3, 1);
    let spec = BasisSpec::new(9, 32).unwrap();
    let cfg = TrainConfig { rebuild_every: 0, ..config(5, 8) };
    let mut state = init_state(&spec, &model, &cfg).unwrap();
    train(&model, &mut state, &data, &cfg, |_, _| {}).unwrap();
    let fresh = reconstruct_full(&spec, model.schema(), &state.alpha, &cfg.stream).unwrap();
    let drift = state.theta.iter().zip(&fresh).fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
    assert!(drift < 1e-4, "drift {drift}");
    rebuild(&mut state, model.schema(), &cfg.stream).unwrap();
    assert_eq!(state.theta, fresh);
}

#[test]
fn zero_learning_rate_freezes_alpha() {
    let model = mlp();
    let data = gen_blobs(3, 20, 0.3, 1);
    let spec = BasisSpec::new(9, 16).unwrap();
    let cfg = TrainConfig { lr: LrSchedule::constant(0.0), ..config(2, 16) };
    let mut state = init_state(&spec, &model, &cfg).unwrap();
    let before = state.alpha.clone();
    let theta = state.theta.clone();
    train(&model, &mut state, &data, &cfg, |_, _| {}).unwrap();
    assert_eq!(state.alpha, before);
    assert_eq!(state.theta, theta);
}

#[test]
fn training_is_deterministic_and_learns() {
    let model = mlp();
    let data = gen_blobs(3, 60, 0.3, 2);
    let spec = BasisSpec::new(1, 64).unwrap();
    let cfg = config(30, 64);
    let run = |exec| {
        let cfg = TrainConfig { stream: StreamConfig { exec, ..cfg.stream }, ..cfg.clone() };
        let mut state = init_state(&spec, &model, &cfg).unwrap();
        let mut losses = Vec::new();
        train(&model, &mut state, &data, &cfg, |r, _| losses.push(r.loss)).unwrap();
        (state, losses)
    };
    let (a, la) = run(crate::exec::Exec::default());
    let (b, lb) = run(crate::exec::Exec::Sequential);
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert!(la.last().unwrap() < &(0.5 * la[0]), "{la:?}");
}

#[test]
fn checkpoint_resume_continues_exactly() {
    let model = mlp();
    let data = gen_blobs(3, 20, 0.3, 5);
    let spec = BasisSpec::new(2, 24).unwrap();
    let cfg = TrainConfig { optimizer: OptimizerKind::adam(), lr: LrSchedule::constant(0.01), rebuild_every: 2, ..config(6, 10) };
    let mut straight = init_state(&spec, &model, &cfg).unwrap();
    train(&model, &mut straight, &data, &cfg, |_, _| {}).unwrap();

    let mut half = init_state(&spec, &model, &cfg).unwrap();
    while half.epoch < 4 {
        train_epoch(&model, &mut half, &data, &cfg).unwrap();
    }
    let bytes = half.checkpoint(model.schema()).to_bytes();
    let mut resumed = TrainState::resume(Checkpoint::from_bytes(&bytes).unwrap(), &model, &cfg, None).unwrap();
    train(&model, &mut resumed, &data, &cfg, |_, _| {}).unwrap();
    assert_eq!(resumed.alpha, straight.alpha);
    assert_eq!(resumed.bn_stats, straight.bn_stats);
}

#[test]
fn config_validation() {
    assert!(config(1, 0).validate(4).is_err());
    assert!(config(1, 5).validate(4).is_err());
    assert!(config(0, 1).validate(4).is_err());
    assert!(config(1, 4).validate(4).is_ok());
}

#[test]
fn initial_alpha_is_bounded() {
    let spec = BasisSpec::new(3, 100).unwrap();
    let a = initial_alpha(&spec);
    assert!(a.iter().all(|v| v.abs() <= 0.1));
    assert_eq!(a, initial_alpha(&spec));
    assert_ne!(a, initial_alpha(&spec.with_seed(4)));
}
