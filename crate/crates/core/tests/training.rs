use indzsl_core::dataset::{generate_synthetic, nearest_mean_accuracy, ClassPools, SyntheticDataset, SyntheticSpec};
use indzsl_core::ivae::{synthesize, train, IvaeParameters, TrainingConfig};
use indzsl_core::semantics::{build_referent_index, CdpOptions, ClassSemanticMatrix, ReferentIndex};
use indzsl_core::Error;

fn toy() -> (SyntheticDataset, ReferentIndex) {
    let mut data = generate_synthetic(&SyntheticSpec::toy(11)).unwrap();
    data.semantics.refine(&CdpOptions::default()).unwrap();
    let s = &data.splits;
    let index = build_referent_index(&data.semantics, &s.all_classes(), &s.seen_classes, 2, true).unwrap();
    (data, index)
}

fn small(epochs: usize, lr: f64) -> TrainingConfig {
    TrainingConfig {
        hidden_dims: vec![32],
        latent_dim: 8,
        learning_rate: lr,
        epochs,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let (data, index) = toy();
    let config = small(0, 1e-3);
    let out = train(&data.splits, &data.semantics, &index, &config).unwrap();
    let init = IvaeParameters::init_for(data.splits.feature_dim, data.semantics.dim(), &config).unwrap();
    assert_eq!(out.params, init);
    assert!(out.history.is_empty());
    assert_eq!(out.steps, 0);
    assert!(out.initial.total.is_finite() && out.initial.total > 0.0);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (data, index) = toy();
    let config = small(2, 0.0);
    let out = train(&data.splits, &data.semantics, &index, &config).unwrap();
    let init = IvaeParameters::init_for(data.splits.feature_dim, data.semantics.dim(), &config).unwrap();
    assert_eq!(out.params, init);
    assert!(out.steps > 0);
}

#[test]
fn training_is_reproducible() {
    let (data, index) = toy();
    let a = train(&data.splits, &data.semantics, &index, &small(3, 1e-3)).unwrap();
    let b = train(&data.splits, &data.semantics, &index, &small(3, 1e-3)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
}

#[test]
fn semantic_dimension_must_match_features() {
    let (data, index) = toy();
    let narrow = data.semantics.raw().split_cols(8).unwrap().0;
    let sem = ClassSemanticMatrix::new(data.semantics.class_ids().to_vec(), narrow).unwrap();
    assert!(matches!(
        train(&data.splits, &sem, &index, &small(1, 1e-3)),
        Err(Error::Config(_))
    ));
}

#[test]
fn synthesized_samples_land_nearest_their_own_class() {
    let (data, index) = toy();
    let s = &data.splits;
    let config = TrainingConfig {
        hidden_dims: vec![128, 256],
        latent_dim: 32,
        learning_rate: 1e-3,
        epochs: 100,
        seed: 11,
        ..Default::default()
    };
    let out = train(s, &data.semantics, &index, &config).unwrap();
    let pools = ClassPools::from_partition(&s.seen_train).unwrap();
    let synth = synthesize(&out.params, &index, &pools, &data.semantics, &s.unseen_classes, 100, 11, false).unwrap();
    let part = synth.to_partition(s.feature_dim).unwrap();
    let audit = nearest_mean_accuracy(&data.oracle.class_means, &s.unseen_classes, &part);
    println!("synthesized nearest-mean audit {audit:.3}");
    assert!(audit >= 0.80);

    let again = synthesize(&out.params, &index, &pools, &data.semantics, &s.unseen_classes, 100, 11, false).unwrap();
    assert_eq!(again, synth);
}
