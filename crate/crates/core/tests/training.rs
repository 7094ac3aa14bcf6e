use signa_core::ablation::{run_ablation, AblationAxis, AblationGrid, CellValue};
use signa_core::attention::GateMode;
use signa_core::dataset::Split;
use signa_core::experiment::{prepare_model, run_experiment, ExperimentConfig};
use signa_core::model::{Adam, AdamConfig, TrainConfig};
use signa_core::numerics::DiffGraph;
use signa_core::semantics::{count_cooccurrence, cooccurrence_probability, GnnKind};
use signa_core::synth::{synthesize, SynthSpec};

fn small_spec(per_scene: usize) -> SynthSpec {
    let mut spec = SynthSpec::default();
    spec.scenes.iter_mut().for_each(|s| s.count = per_scene);
    spec
}

fn small_config(signa: bool, epochs: usize) -> ExperimentConfig {
    let base = if signa { ExperimentConfig::default() } else { ExperimentConfig::baseline() };
    ExperimentConfig {
        stage_channels: [4, 8, 8, 8],
        embedding_dim: 16,
        train: TrainConfig { epochs, ..TrainConfig::default() },
        ..base
    }
}

#[test]
fn four_samples_are_memorized_within_200_steps() {
    let data = synthesize(&small_spec(20)).unwrap();
    let model = prepare_model(&data, &ExperimentConfig::default(), 0, None).unwrap();
    let mut model = model;
    let idx = &data.indices(Split::Train)[..4];
    let images: Vec<_> = idx.iter().map(|&i| data.image_tensor(i)).collect();
    let targets: Vec<f64> = idx.iter().flat_map(|&i| data.labels[i].iter().map(|&v| f64::from(v))).collect();
    let mut adam = Adam::new(AdamConfig::default());
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let mut g = DiffGraph::new();
        let (logits, bindings) = model.record(&mut g, &images).unwrap();
        let loss = g.bce_loss(logits, &targets, 1e-7).unwrap();
        last = g.value(loss).data()[0];
        g.backward_scalar(loss).unwrap();
        adam.step(&mut model.params, &bindings.gradients(&g), 1e-3).unwrap();
    }
    assert!(last < 0.05, "loss after 200 steps: {last}");
}

#[test]
fn reruns_are_bit_identical() {
    let data = synthesize(&small_spec(20)).unwrap();
    let cfg = small_config(true, 2);
    let a = run_experiment(&data, &cfg, 5, None, |_| {}).unwrap();
    let b = run_experiment(&data, &cfg, 5, None, |_| {}).unwrap();
    assert_eq!(a.history(), b.history());
    assert_eq!(a.model().params, b.model().params);
    assert_eq!(a.training.rng_state, b.training.rng_state);
    let c = run_experiment(&data, &cfg, 6, None, |_| {}).unwrap();
    assert_ne!(a.model().params, c.model().params);
}

#[test]
fn neutral_block_reproduces_baseline_logits() {
    let data = synthesize(&small_spec(10)).unwrap();
    let base = small_config(false, 1);
    let mut with_block = small_config(true, 1);
    let signa = with_block.signa.as_mut().unwrap();
    signa.gate = GateMode::Linear;
    signa.residual = true;
    let baseline = prepare_model(&data, &base, 3, None).unwrap();
    let mut model = prepare_model(&data, &with_block, 3, None).unwrap();
    model.copy_shared_params(&baseline);
    for (path, t) in model.params.iter_mut() {
        if path.starts_with("signa.fuse") {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let images: Vec<_> = (0..6).map(|i| data.image_tensor(i)).collect();
    let a = baseline.forward_images(&images).unwrap();
    let b = model.forward_images(&images).unwrap();
    let bits = |t: &signa_core::numerics::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn synthetic_cooccurrence_matches_the_spec() {
    let spec = SynthSpec::default();
    let data = synthesize(&spec).unwrap();
    assert_eq!(data.len(), 2000);
    let sets = data.label_sets(&(0..data.len()).collect::<Vec<_>>());
    let empirical = cooccurrence_probability(&count_cooccurrence(&sets, data.classes()).unwrap());
    let analytic = spec.analytic_probability().unwrap();
    let worst = empirical.max_abs_diff(&analytic);
    assert!(worst <= 0.05, "largest deviation {worst}");
    for j in 0..data.classes() {
        assert!(data.labels.iter().any(|r| r[j] == 1), "label {j} never drawn");
    }
    assert_eq!(synthesize(&spec).unwrap(), data);
    let other = synthesize(&SynthSpec { seed: 1, ..spec }).unwrap();
    assert_ne!(other.images, data.images);
}

#[test]
fn single_cell_grid_equals_a_single_run() {
    let data = synthesize(&small_spec(20)).unwrap();
    let base = small_config(true, 1);
    let grid = AblationGrid { axis: AblationAxis::Gnn, cells: vec![CellValue::Gnn(GnnKind::Gcn)], seeds: vec![4] };
    let results = run_ablation(&grid, &base, |cfg, seed| run_experiment(&data, cfg, seed, None, |_| {}).map(|o| o.test.example.f1));
    let cfg = CellValue::Gnn(GnnKind::Gcn).configure(&base).unwrap();
    let single = run_experiment(&data, &cfg, 4, None, |_| {}).unwrap();
    assert_eq!(results[0].per_seed, vec![single.test.example.f1]);
    assert_eq!(results[0].mean, Some(single.test.example.f1));
}
