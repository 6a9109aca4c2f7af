//! On-disk round trips.

use misinfo_core::corpus::{load_annotated, load_tweets};
use misinfo_core::embeddings::{load_embeddings, save_embeddings, train_skipgram, SkipgramConfig};
use misinfo_core::neural::{DenseNet, OutputActivation, Params};
use misinfo_core::persist::ParamFile;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn embeddings_survive_save_and_load() {
    let corpus: Vec<Vec<&str>> = (0..30).map(|i| vec!["tea", "cures", if i % 2 == 0 { "cancer" } else { "nothing" }]).collect();
    let cfg = SkipgramConfig { dim: 12, min_count: 1, epochs: 2, seed: 8, ..SkipgramConfig::default() };
    let table = train_skipgram(&corpus, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    save_embeddings(&table, &path).unwrap();
    assert_eq!(load_embeddings(&path).unwrap(), table);
}

#[test]
fn param_files_restore_weights() {
    let net = DenseNet::new(&[4, 3, 1], OutputActivation::Sigmoid, &mut ChaCha8Rng::seed_from_u64(2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    ParamFile::new("test-net", &net, serde_json::json!({ "note": "x" })).save(&path).unwrap();
    let file = ParamFile::load(&path).unwrap();
    let mut back = DenseNet::zeros(&[4, 3, 1], OutputActivation::Sigmoid);
    file.load_into(&mut back).unwrap();
    assert_eq!(back, net);
    assert_eq!(back.param_count(), 4 * 3 + 3 + 3 + 1);
}

#[test]
fn corpus_files_load_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tweets.jsonl");
    std::fs::write(
        &path,
        "{\"id\":\"1\",\"text\":\"Sugar causes cancer\",\"category\":\"cause\",\"anchors\":[[0,5]]}\n\n{\"id\":\"2\",\"text\":\"x\"}\n",
    )
    .unwrap();
    let err = load_tweets(&path).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
    std::fs::write(&path, "{\"id\":\"1\",\"text\":\"Sugar causes cancer\",\"category\":\"cause\",\"anchors\":[[0,5]]}\n").unwrap();
    let data = load_annotated(&path).unwrap();
    assert!(data[0].relevant);
    assert_eq!(data[0].anchor_texts(), ["Sugar"]);
}
