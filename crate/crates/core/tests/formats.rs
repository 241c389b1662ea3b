//! Dataset and checkpoint files against committed golden bytes.
//!
//! `CSIFM_BLESS=1 cargo test --test formats` rewrites the fixtures.

use std::collections::BTreeMap;
use std::path::PathBuf;

use csifm::cli::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, Checkpoint, DType, Dataset};
use csifm::numerics::Tensor;
use csifm::{Error, FormatError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden(name: &str, bytes: &[u8]) -> Vec<u8> {
    let path = fixture(name);
    if std::env::var("CSIFM_BLESS").is_ok_and(|v| v == "1") {
        std::fs::write(&path, bytes).unwrap();
    }
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn golden_dataset() -> Dataset {
    let samples = (0..2).map(|s| Tensor::from_fn([1, 2, 2, 2], |i| (s * 8 + i) as f32 * 0.5 - 3.0)).collect();
    Dataset::new(DType::Complex, [1, 2, 2], samples).unwrap()
}

fn golden_checkpoint() -> Checkpoint {
    let mut ck = Checkpoint::default();
    ck.push("enc.w", Tensor::new([2, 2], vec![1.0, -2.0, 0.25, 1e-3]).unwrap()).unwrap();
    ck.push("head.b", Tensor::new([3], vec![0.0, f32::MIN_POSITIVE, 7.5]).unwrap()).unwrap();
    ck
}

fn le32(v: u32) -> [u8; 4] {
    v.to_le_bytes()
}

#[test]
fn dataset_bytes_match_golden() {
    let d = golden_dataset();
    let bytes = d.to_bytes();
    assert_eq!(bytes, golden("golden.wgct", &bytes));

    let mut header = b"WGCT".to_vec();
    header.extend(le32(1));
    header.push(0);
    [1, 2, 2, 2].iter().for_each(|&x| header.extend(le32(x)));
    assert_eq!(&bytes[..header.len()], &header[..]);
    assert_eq!(bytes.len(), header.len() + 2 * 8 * 4);
    assert_eq!(&bytes[header.len()..header.len() + 4], &(-3.0f32).to_le_bytes());
    assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
}

#[test]
fn checkpoint_bytes_match_golden() {
    let ck = golden_checkpoint();
    let bytes = ck.to_bytes();
    assert_eq!(bytes, golden("golden.wgck", &bytes));

    let mut body = Vec::new();
    body.extend(5u16.to_le_bytes());
    body.extend(b"enc.w");
    body.push(2);
    body.extend(le32(2));
    body.extend(le32(2));
    [1.0f32, -2.0, 0.25, 1e-3].iter().for_each(|x| body.extend(x.to_le_bytes()));
    body.extend(6u16.to_le_bytes());
    body.extend(b"head.b");
    body.push(1);
    body.extend(le32(3));
    [0.0f32, f32::MIN_POSITIVE, 7.5].iter().for_each(|x| body.extend(x.to_le_bytes()));
    let mut want = b"WGCK".to_vec();
    want.extend(le32(1));
    want.extend(le32(2));
    want.extend(&body);
    want.extend(le32(crc32fast::hash(&body)));
    assert_eq!(bytes, want);
    assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
}

#[test]
fn random_checkpoint_survives_disk() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut ck = Checkpoint::default();
    for i in 0..100 {
        let rank = rng.random_range(0..4);
        let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..6)).collect();
        let t = Tensor::from_fn(shape, |_| rng.random_range(-1e3f32..1e3));
        ck.push(format!("layer{}.p{i}", i % 7), t).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.wgck");
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.records.len(), 100);
    for ((na, a), (nb, b)) in ck.records.iter().zip(&back.records) {
        assert_eq!(na, nb);
        assert_eq!(a.shape(), b.shape());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn wrong_magic_is_rejected() {
    let mut d = golden_dataset().to_bytes();
    d[..4].copy_from_slice(b"XXXX");
    assert!(matches!(Dataset::from_bytes(&d), Err(Error::Format(FormatError::BadMagic { .. }))));
    let mut c = golden_checkpoint().to_bytes();
    c[..4].copy_from_slice(b"XXXX");
    assert!(matches!(Checkpoint::from_bytes(&c), Err(Error::Format(FormatError::BadMagic { .. }))));
    assert!(matches!(Checkpoint::from_bytes(&golden_dataset().to_bytes()), Err(Error::Format(FormatError::BadMagic { .. }))));
}

#[test]
fn corruption_is_detected() {
    let mut c = golden_checkpoint().to_bytes();
    let n = c.len();
    c[n - 6] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&c), Err(Error::Format(FormatError::BadChecksum))));
    let d = golden_dataset().to_bytes();
    assert!(matches!(Dataset::from_bytes(&d[..d.len() - 1]), Err(Error::Format(FormatError::Truncated { .. }))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.wgct");
    let meta = BTreeMap::from([("task".to_string(), "estimation".to_string())]);
    save_dataset(&path, &golden_dataset(), &meta).unwrap();
    let (back, m) = load_dataset(&path).unwrap();
    assert_eq!(back, golden_dataset());
    assert_eq!(m["task"], "estimation");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Format(FormatError::BadChecksum))));
}
