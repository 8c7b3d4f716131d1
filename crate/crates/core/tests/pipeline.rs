use pranc::basis::{BasisSpec, StreamConfig};
use pranc::codec::{pack, unpack_for};
use pranc::data::{gen_blobs, mnist_subset, Dataset};
use pranc::exec::Exec;
use pranc::nn::{evaluate, evaluate_with, Model, ModelDef, Tensor};
use pranc::reconstruct::{infer_on_demand, reconstruct_full};
use pranc::trainer::{init_state, rebuild, train, LrSchedule, TrainConfig, TrainState};

fn mlp() -> Model {
    Model::new(ModelDef::mlp(2, &[16], 3)).unwrap()
}

fn run(model: &Model, data: &Dataset, spec: &BasisSpec, cfg: &TrainConfig) -> (TrainState, Vec<f64>) {
    let mut state = init_state(spec, model, cfg).unwrap();
    let mut losses = Vec::new();
    train(model, &mut state, data, cfg, |r, _| losses.push(r.loss)).unwrap();
    (state, losses)
}

#[test]
fn full_subset_descends_on_separable_blobs() {
    let model = mlp();
    let data = gen_blobs(3, 100, 0.2, 4);
    let spec = BasisSpec::new(5, 32).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        m: 32,
        batch_size: 32,
        lr: LrSchedule::constant(0.01),
        ..TrainConfig::default()
    };
    let (_, losses) = run(&model, &data, &spec, &cfg);
    assert!(*losses.last().unwrap() < 0.1, "{losses:?}");
}

#[test]
fn zero_lr_still_updates_running_stats() {
    let def: ModelDef = "input = 1x1x2\nclasses = 3\nlayer = batchnorm\nlayer = flatten\nlayer = dense out=3\n".parse().unwrap();
    let model = Model::new(def).unwrap();
    let blobs = gen_blobs(3, 20, 0.2, 1);
    let data = Dataset {
        inputs: Tensor::new(vec![60, 1, 1, 2], blobs.inputs.data().to_vec()).unwrap(),
        ..blobs
    };
    let spec = BasisSpec::new(1, 8).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        m: 8,
        lr: LrSchedule::constant(0.0),
        ..TrainConfig::default()
    };
    let start = init_state(&spec, &model, &cfg).unwrap();
    let (end, _) = run(&model, &data, &spec, &cfg);
    assert_eq!(end.alpha, start.alpha);
    assert_ne!(end.bn_stats, start.bn_stats);
}

#[test]
fn packet_round_trip_preserves_accuracy() {
    let model = mlp();
    let data = gen_blobs(3, 60, 0.3, 2);
    let spec = BasisSpec::new(12, 48).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        m: 24,
        batch_size: 32,
        lr: LrSchedule::constant(0.01),
        ..TrainConfig::default()
    };
    let (mut state, _) = run(&model, &data, &spec, &cfg);
    rebuild(&mut state, model.schema(), &cfg.stream).unwrap();
    let trained = evaluate(&model, &state.theta, &state.bn_stats, &data, 64).unwrap();
    let bytes = pack(&spec, model.schema(), &state.alpha, &state.bn_stats).unwrap();
    let packet = unpack_for(&bytes, model.schema()).unwrap();
    let theta = reconstruct_full(&packet.basis_spec(None).unwrap(), model.schema(), &packet.alpha, &StreamConfig::default()).unwrap();
    assert_eq!(theta, state.theta);
    assert_eq!(evaluate(&model, &theta, &packet.bn_stats, &data, 64).unwrap(), trained);
    let on_demand = evaluate_with(&model, &data, 64, |x| Ok(infer_on_demand(&packet, &model, x, 16, None)?.0)).unwrap();
    assert_eq!(on_demand, trained);
    let other = Model::new(ModelDef::mlp(2, &[17], 3)).unwrap();
    assert!(unpack_for(&bytes, other.schema()).is_err());
}

#[test]
fn execution_policy_does_not_change_results() {
    let model = mlp();
    let data = gen_blobs(3, 40, 0.3, 7);
    let spec = BasisSpec::new(3, 40).unwrap();
    let base = TrainConfig {
        epochs: 8,
        m: 10,
        batch_size: 16,
        rebuild_every: 3,
        ..TrainConfig::default()
    };
    let (a, _) = run(&model, &data, &spec, &TrainConfig { stream: StreamConfig { chunk: 5, exec: Exec::Sequential }, ..base.clone() });
    let (b, _) = run(&model, &data, &spec, &TrainConfig { stream: StreamConfig { chunk: 64, exec: Exec::default() }, ..base });
    assert_eq!(a.alpha, b.alpha);
}

#[test]
fn vendored_mnist_subset_is_balanced() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/testdata/mnist-subset");
    let split = mnist_subset(dir, 100, 50, 0).unwrap();
    assert_eq!(split.train.len(), 1000);
    assert_eq!(split.test.len(), 500);
    assert_eq!(split.train.inputs.shape(), &[1000, 1, 28, 28]);
    for c in 0..10 {
        assert_eq!(split.train.labels.iter().filter(|&&l| l == c).count(), 100);
    }
    let px = split.train.inputs.data();
    assert!(px.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(px.contains(&1.0));
}
