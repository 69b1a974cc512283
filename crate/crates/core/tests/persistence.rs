use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use spelunker_core::index::{index_from_bytes, index_to_bytes, load_index, save_index, IndexMetadata, PersistError};
use spelunker_core::synth::{random_dataset, random_query, SynthSpec};
use spelunker_core::BallTree;

fn tree(seed: u64, n: usize) -> BallTree<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BallTree::build(random_dataset(&mut rng, &SynthSpec::default(), n), 6).unwrap()
}

fn meta() -> IndexMetadata {
    let mut m = IndexMetadata::new();
    m.insert("embedder".into(), json!({"kind": "local", "dim": 16}));
    m
}

#[test]
fn round_trip_preserves_everything() {
    let original = tree(1, 200);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wine.idx");
    save_index(&original, &meta(), &path).unwrap();
    let (loaded, m) = load_index::<f64>(&path).unwrap();
    assert_eq!(loaded, original);
    assert_eq!(m, meta());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let q = random_query(&mut rng, original.dataset(), &[0.25, 1.0, 4.0]);
        assert_eq!(original.knn_search(&q, 7).unwrap(), loaded.knn_search(&q, 7).unwrap());
    }
}

#[test]
fn serialisation_is_byte_deterministic() {
    let a = index_to_bytes(&tree(4, 120), &meta()).unwrap();
    let b = index_to_bytes(&tree(4, 120), &meta()).unwrap();
    assert_eq!(a, b);
    let (reloaded, _) = index_from_bytes::<f64>(&a).unwrap();
    assert_eq!(index_to_bytes(&reloaded, &meta()).unwrap(), a);
}

#[test]
fn f32_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = BallTree::build(random_dataset::<f32, _>(&mut rng, &SynthSpec::default(), 90), 5).unwrap();
    let bytes = index_to_bytes(&t, &IndexMetadata::new()).unwrap();
    assert_eq!(index_from_bytes::<f32>(&bytes).unwrap().0, t);
}

#[test]
fn rejects_bad_magic() {
    let mut bytes = index_to_bytes(&tree(3, 30), &meta()).unwrap();
    bytes[0] = b'X';
    assert_eq!(index_from_bytes::<f64>(&bytes).unwrap_err(), PersistError::BadMagic);
}

#[test]
fn rejects_other_versions() {
    let mut bytes = index_to_bytes(&tree(3, 30), &meta()).unwrap();
    bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
    assert_eq!(index_from_bytes::<f64>(&bytes).unwrap_err(), PersistError::VersionMismatch(7));
}

#[test]
fn rejects_truncation() {
    let bytes = index_to_bytes(&tree(3, 30), &meta()).unwrap();
    for cut in [0, 5, 12, 19, bytes.len() / 2, bytes.len() - 1] {
        let err = index_from_bytes::<f64>(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, PersistError::Truncated | PersistError::BadMagic), "cut {cut}: {err:?}");
    }
}

#[test]
fn detects_flipped_payload_byte() {
    let bytes = index_to_bytes(&tree(3, 30), &meta()).unwrap();
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let data_start = 20 + header_len;
    for pos in [data_start, data_start + 17, bytes.len() - 1] {
        let mut corrupt = bytes.clone();
        corrupt[pos] ^= 0x40;
        assert!(matches!(
            index_from_bytes::<f64>(&corrupt).unwrap_err(),
            PersistError::ChecksumMismatch(_)
        ));
    }
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_index::<f64>(dir.path().join("nope.idx")).unwrap_err(),
        PersistError::Io(_)
    ));
}
