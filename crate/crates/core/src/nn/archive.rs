//! Self-describing tensor archives.
//!
//! An archive is a directory holding `manifest.json` and `data.bin`. The
//! manifest lists every tensor with its byte range inside the blob; the blob
//! is raw little-endian `f32`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::{ArchName, ArchitectureSpec, SlotRole};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "data.bin";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightSet {
    ImageNet,
    StylizedImageNet,
    LpipsScaling,
    Cifar10,
    SimClr,
    Random,
}

impl WeightSet {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightSet::ImageNet => "imagenet",
            WeightSet::StylizedImageNet => "stylized-imagenet",
            WeightSet::LpipsScaling => "lpips-scaling",
            WeightSet::Cifar10 => "cifar10",
            WeightSet::SimClr => "simclr",
            WeightSet::Random => "random",
        }
    }
}

impl fmt::Display for WeightSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            WeightSet::ImageNet,
            WeightSet::StylizedImageNet,
            WeightSet::LpipsScaling,
            WeightSet::Cifar10,
            WeightSet::SimClr,
            WeightSet::Random,
        ]
        .into_iter()
        .find(|w| w.as_str() == s)
        .ok_or_else(|| Error::UnknownWeightSet(s.to_string()))
    }
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
}

/// On-disk `manifest.json`. Labels stay strings here so unknown values
/// surface as typed errors rather than parse failures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub architecture: String,
    pub weight_set: String,
    pub entries: Vec<ManifestEntry>,
    pub blob_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_sha256: Option<String>,
}

/// Named `f32` tensors for one architecture and weight set.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorArchive {
    pub architecture: ArchName,
    pub weight_set: WeightSet,
    /// Checksum of the upstream checkpoint the tensors were copied from.
    pub source_checksum: Option<String>,
    tensors: BTreeMap<String, Tensor>,
}

impl TensorArchive {
    pub fn new(architecture: ArchName, weight_set: WeightSet) -> Self {
        TensorArchive {
            architecture,
            weight_set,
            source_checksum: None,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_opt(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Checks that every parameter slot of `spec` resolves with the right shape.
    pub fn validate_for(&self, spec: &ArchitectureSpec) -> Result<()> {
        if self.architecture != spec.name {
            return Err(Error::Archive(format!(
                "archive is for {} but architecture is {}",
                self.architecture, spec.name
            )));
        }
        for slot in spec.param_slots() {
            let t = self.get(&slot.name)?;
            if t.shape() != slot.shape.as_slice() {
                return Err(Error::Archive(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    slot.name,
                    t.shape(),
                    slot.shape
                )));
            }
        }
        Ok(())
    }

    /// Serialize into `(manifest, blob)`. Entries are in name order.
    pub fn to_parts(&self) -> (Manifest, Vec<u8>) {
        let mut blob = Vec::with_capacity(self.total_elements() * 4);
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let offset = blob.len() as u64;
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            entries.push(ManifestEntry {
                name: name.clone(),
                dtype: "f32".into(),
                shape: t.shape().to_vec(),
                offset,
                nbytes: blob.len() as u64 - offset,
            });
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            architecture: self.architecture.to_string(),
            weight_set: self.weight_set.to_string(),
            entries,
            blob_sha256: sha256_hex(&blob),
            source_sha256: self.source_checksum.clone(),
        };
        (manifest, blob)
    }

    /// Rebuild from a validated manifest and its blob.
    pub fn from_parts(manifest: &Manifest, blob: &[u8]) -> Result<Self> {
        let (architecture, weight_set) = validate_manifest(manifest)?;
        let needed = manifest
            .entries
            .iter()
            .map(|e| e.offset + e.nbytes)
            .max()
            .unwrap_or(0);
        if (blob.len() as u64) < needed {
            return Err(Error::Archive(format!(
                "truncated blob: {} bytes, manifest needs {needed}",
                blob.len()
            )));
        }
        let actual = sha256_hex(blob);
        if !actual.eq_ignore_ascii_case(&manifest.blob_sha256) {
            return Err(Error::ChecksumMismatch {
                expected: manifest.blob_sha256.clone(),
                actual,
            });
        }
        let mut archive = TensorArchive::new(architecture, weight_set);
        archive.source_checksum = manifest.source_sha256.clone();
        for e in &manifest.entries {
            let bytes = &blob[e.offset as usize..(e.offset + e.nbytes) as usize];
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            archive.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
        }
        Ok(archive)
    }

    /// SHA-256 of the serialized blob; identifies the weights in run metadata.
    pub fn checksum(&self) -> String {
        self.to_parts().0.blob_sha256
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Structural checks that need no blob access.
pub fn validate_manifest(m: &Manifest) -> Result<(ArchName, WeightSet)> {
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Archive(format!(
            "unsupported format_version {}",
            m.format_version
        )));
    }
    let arch: ArchName = m.architecture.parse()?;
    let weight_set: WeightSet = m.weight_set.parse()?;
    let mut ranges = Vec::with_capacity(m.entries.len());
    let mut names = std::collections::BTreeSet::new();
    for e in &m.entries {
        if e.dtype != "f32" {
            return Err(Error::Archive(format!(
                "tensor `{}` has dtype {}, only f32 is supported",
                e.name, e.dtype
            )));
        }
        if !names.insert(e.name.as_str()) {
            return Err(Error::Archive(format!("duplicate tensor `{}`", e.name)));
        }
        let numel: u64 = e.shape.iter().map(|&d| d as u64).product();
        if e.nbytes != numel * 4 {
            return Err(Error::Archive(format!(
                "tensor `{}`: nbytes {} does not match shape {:?}",
                e.name, e.nbytes, e.shape
            )));
        }
        if e.offset % 4 != 0 {
            return Err(Error::Archive(format!(
                "tensor `{}`: offset {} not 4-byte aligned",
                e.name, e.offset
            )));
        }
        ranges.push((e.offset, e.offset + e.nbytes, e.name.as_str()));
    }
    ranges.sort();
    for pair in ranges.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Archive(format!(
                "tensors `{}` and `{}` overlap",
                pair[0].2, pair[1].2
            )));
        }
    }
    Ok((arch, weight_set))
}

pub fn save_archive(archive: &TensorArchive, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, blob) = archive.to_parts();
    let blob_path = dir.join(BLOB_FILE);
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

/// Loads an archive directory. The manifest is validated before the blob
/// is read.
pub fn load_archive(dir: impl AsRef<Path>) -> Result<TensorArchive> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    validate_manifest(&manifest)?;
    let blob_path = dir.join(BLOB_FILE);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    TensorArchive::from_parts(&manifest, &blob)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Archive(format!("{}: {e}", path.display())))
}

/// Fills every parameter slot with fan-in scaled uniform noise
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`. Batch-norm layers get the identity
/// transform (weight 1, bias 0, mean 0, var 1).
pub fn random_init(spec: &ArchitectureSpec, seed: u64) -> TensorArchive {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut archive = TensorArchive::new(spec.name, WeightSet::Random);
    for slot in spec.param_slots() {
        let n = slot.numel();
        let data: Vec<f32> = if slot.is_batch_norm {
            let fill = match (slot.role, slot.name.ends_with("running_var")) {
                (SlotRole::Weight, _) | (SlotRole::RunningStat, true) => 1.0,
                _ => 0.0,
            };
            vec![fill; n]
        } else {
            let bound = 1.0 / (slot.fan_in as f32).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        archive.insert(
            slot.name.clone(),
            Tensor::new(slot.shape.clone(), data).expect("slot shape"),
        );
    }
    archive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TensorArchive {
        let mut a = TensorArchive::new(ArchName::SqueezeNet, WeightSet::LpipsScaling);
        a.insert("lin0", Tensor::from_fn(vec![4], |i| i as f32 * 0.5));
        a.insert("lin1", Tensor::from_fn(vec![2, 3], |i| -(i as f32)));
        a
    }

    #[test]
    fn parts_round_trip() {
        let a = small();
        let (m, blob) = a.to_parts();
        assert_eq!(TensorArchive::from_parts(&m, &blob).unwrap(), a);
    }

    #[test]
    fn overlapping_offsets_rejected() {
        let (mut m, blob) = small().to_parts();
        m.entries[1].offset = 4;
        let err = TensorArchive::from_parts(&m, &blob).unwrap_err();
        assert!(
            matches!(err, Error::Archive(ref s) if s.contains("overlap")),
            "{err}"
        );
    }

    #[test]
    fn truncated_blob_rejected() {
        let (m, blob) = small().to_parts();
        let err = TensorArchive::from_parts(&m, &blob[..blob.len() - 4]).unwrap_err();
        assert!(
            matches!(err, Error::Archive(ref s) if s.contains("truncated")),
            "{err}"
        );
    }

    #[test]
    fn checksum_mismatch_rejected() {
        let (m, mut blob) = small().to_parts();
        blob[0] ^= 1;
        assert!(matches!(
            TensorArchive::from_parts(&m, &blob),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn unknown_labels_rejected() {
        let (mut m, blob) = small().to_parts();
        m.architecture = "lenet".into();
        assert!(matches!(
            TensorArchive::from_parts(&m, &blob),
            Err(Error::UnknownArchitecture(_))
        ));
        let (mut m, blob) = small().to_parts();
        m.weight_set = "jft".into();
        assert!(matches!(
            TensorArchive::from_parts(&m, &blob),
            Err(Error::UnknownWeightSet(_))
        ));
    }

    #[test]
    fn non_f32_rejected() {
        let (mut m, blob) = small().to_parts();
        m.entries[0].dtype = "f16".into();
        assert!(TensorArchive::from_parts(&m, &blob).is_err());
    }

    #[test]
    fn random_init_reproducible() {
        let spec = ArchitectureSpec::squeezenet();
        let a = random_init(&spec, 7);
        let b = random_init(&spec, 7);
        let c = random_init(&spec, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.weight_set, WeightSet::Random);
        a.validate_for(&spec).unwrap();
    }

    #[test]
    fn random_init_moments() {
        // U(-b, b) has mean 0 and variance b^2/3, so the sample mean of n
        // draws has standard deviation b / sqrt(3n).
        let spec = ArchitectureSpec::squeezenet();
        let a = random_init(&spec, 1);
        let w = a.get("features.12.expand3x3.weight").unwrap();
        let fan_in = 64.0 * 9.0;
        let b = 1.0 / f64::sqrt(fan_in);
        let n = w.len() as f64;
        let mean = w.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = w
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 3.0 * b / (3.0 * n).sqrt(), "mean {mean}");
        assert!((var - b * b / 3.0).abs() < 0.02 * b * b / 3.0, "var {var}");
        let bound = 1.0 / (fan_in as f32).sqrt();
        assert!(w.data().iter().all(|&v| v.abs() <= bound));
    }
}
