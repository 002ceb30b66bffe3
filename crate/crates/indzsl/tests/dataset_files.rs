use std::path::{Path, PathBuf};

use indzsl::formats::{
    load_dataset, read_checkpoint, save_dataset, write_checkpoint, write_features, write_semantics, write_splits,
    Checkpoint, FeatureFile, SplitRole,
};
use indzsl::FormatError;
use indzsl_core::dataset::{generate_synthetic, SyntheticSpec};
use indzsl_core::ivae::{IvaeParameters, TrainingConfig};
use indzsl_core::nnkernel::Matrix;

struct Files {
    _dir: tempfile::TempDir,
    features: PathBuf,
    semantics: PathBuf,
    splits: PathBuf,
}

/// Three classes in two dimensions: 0 and 1 seen, 2 unseen.
fn files(sem_dim: usize, split_roles: &[(u32, SplitRole)], sem_ids: &[u32]) -> Files {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("f.bin");
    let semantics = dir.path().join("s.bin");
    let splits = dir.path().join("splits.tsv");
    let labels = vec![0, 0, 1, 1, 2, 2];
    write_features(
        &features,
        &FeatureFile {
            dim: 2,
            class_ids: vec![0, 1, 2],
            features: Matrix::from_fn(6, 2, |i, j| (i * 2 + j) as f64 * 0.25),
            labels,
            test_flags: vec![false, true, false, true, false, true],
        },
    )
    .unwrap();
    let z = Matrix::from_fn(sem_ids.len(), sem_dim, |i, j| if i == j % sem_ids.len() { 1.0 } else { 0.1 });
    write_semantics(&semantics, sem_ids, &z).unwrap();
    write_splits(&splits, split_roles).unwrap();
    Files {
        _dir: dir,
        features,
        semantics,
        splits,
    }
}

const ROLES: [(u32, SplitRole); 3] = [(0, SplitRole::Seen), (1, SplitRole::Seen), (2, SplitRole::Unseen)];

fn load(f: &Files) -> Result<(indzsl_core::dataset::DatasetSplits, indzsl_core::semantics::ClassSemanticMatrix), FormatError> {
    load_dataset(&f.features, &f.semantics, &f.splits)
}

fn message(err: FormatError) -> String {
    err.to_string()
}

#[test]
fn buckets_follow_role_and_flag() {
    let f = files(2, &ROLES, &[0, 1, 2]);
    let (splits, sem) = load(&f).unwrap();
    assert_eq!(splits.seen_train.labels, vec![0, 1]);
    assert_eq!(splits.seen_test.labels, vec![0, 1]);
    assert_eq!(splits.unseen_test.labels, vec![2]);
    assert_eq!(splits.unseen_heldout.labels, vec![2]);
    assert_eq!(sem.class_ids(), &[0, 1, 2]);
}

#[test]
fn split_class_without_features_is_named() {
    let mut roles = ROLES.to_vec();
    roles.push((9, SplitRole::Unseen));
    let f = files(2, &roles, &[0, 1, 2, 9]);
    let msg = message(load(&f).unwrap_err());
    assert!(msg.contains("class 9") && msg.contains("f.bin"), "{msg}");
}

#[test]
fn split_class_without_semantics_is_named() {
    let f = files(2, &ROLES, &[0, 1]);
    let msg = message(load(&f).unwrap_err());
    assert!(msg.contains("class 2") && msg.contains("s.bin"), "{msg}");
}

#[test]
fn feature_class_missing_from_splits_is_named() {
    let f = files(2, &ROLES[..2], &[0, 1, 2]);
    let msg = message(load(&f).unwrap_err());
    assert!(msg.contains("class 2") && msg.contains("splits.tsv"), "{msg}");
}

#[test]
fn semantic_dimension_must_equal_feature_dimension() {
    let f = files(3, &ROLES, &[0, 1, 2]);
    let msg = message(load(&f).unwrap_err());
    assert!(msg.contains("semantic dimension 3"), "{msg}");
}

#[test]
fn missing_file_names_the_path() {
    let f = files(2, &ROLES, &[0, 1, 2]);
    let err = load_dataset(Path::new("/nonexistent/f.bin"), &f.semantics, &f.splits).unwrap_err();
    assert!(matches!(err, FormatError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/f.bin"));
}

#[test]
fn saved_synthetic_dataset_reloads_up_to_f32_rounding() {
    let data = generate_synthetic(&SyntheticSpec::toy(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (f, s, p) = (dir.path().join("f.bin"), dir.path().join("s.bin"), dir.path().join("p.tsv"));
    save_dataset(&data.splits, &data.semantics, &f, &s, &p).unwrap();
    let (splits, sem) = load_dataset(&f, &s, &p).unwrap();
    assert_eq!(splits.seen_classes, data.splits.seen_classes);
    assert_eq!(splits.unseen_classes, data.splits.unseen_classes);
    for (a, b) in [
        (&splits.seen_train, &data.splits.seen_train),
        (&splits.seen_test, &data.splits.seen_test),
        (&splits.unseen_test, &data.splits.unseen_test),
        (&splits.unseen_heldout, &data.splits.unseen_heldout),
    ] {
        assert_eq!(a.labels, b.labels);
        let rounded = b.features.map(|v| f64::from(v as f32));
        assert_eq!(a.features, rounded);
    }
    // rows are renormalized on load, which may move the last bit
    assert!(sem.raw().max_abs_diff(data.semantics.raw()).unwrap() < 1e-15);
}

#[test]
fn truncated_checkpoint_reports_offset() {
    let config = TrainingConfig {
        hidden_dims: vec![4],
        latent_dim: 2,
        ..Default::default()
    };
    let ckpt = Checkpoint {
        config_json: "{}".into(),
        params: IvaeParameters::init_for(3, 3, &config).unwrap(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    write_checkpoint(&path, &ckpt).unwrap();
    assert_eq!(read_checkpoint(&path).unwrap(), ckpt);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    let err = read_checkpoint(&path).unwrap_err();
    assert!(matches!(err, FormatError::Truncated { .. }), "{err}");
    assert!(err.to_string().contains("c.bin"));
}
