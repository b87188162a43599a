//! Weight serialization shared by the SR network and the detector.
//!
//! On disk a weight set is a pair of files: `<base>.json` holding the
//! ordered shape manifest and `<base>.bin` holding every tensor
//! concatenated as little-endian 32-bit floats. The format exists so
//! golden-file tests and externally trained weights can be injected
//! without any framework dependency.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("binary payload holds {actual} floats, manifest expects {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("missing tensor {name:?}")]
    MissingTensor { name: String },
    #[error("tensor {name:?} has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<ManifestEntry>,
}

/// An ordered collection of named f32 tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    order: Vec<String>,
    entries: HashMap<String, (Vec<usize>, Vec<f32>)>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<(), WeightsError> {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data length mismatch for {name}"
        );
        if self.entries.contains_key(name) {
            return Err(WeightsError::DuplicateName(name.to_string()));
        }
        self.order.push(name.to_string());
        self.entries.insert(name.to_string(), (shape, data));
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    /// Fetch a tensor, validating its shape against the caller's expectation.
    pub fn get(&self, name: &str, expected_shape: &[usize]) -> Result<&[f32], WeightsError> {
        let (shape, data) = self
            .entries
            .get(name)
            .ok_or_else(|| WeightsError::MissingTensor {
                name: name.to_string(),
            })?;
        if shape != expected_shape {
            return Err(WeightsError::ShapeMismatch {
                name: name.to_string(),
                expected: expected_shape.to_vec(),
                actual: shape.clone(),
            });
        }
        Ok(data)
    }

    /// Write `<base>.json` and `<base>.bin`.
    pub fn save(&self, base: &Path) -> Result<(), WeightsError> {
        let manifest = Manifest {
            tensors: self
                .order
                .iter()
                .map(|name| ManifestEntry {
                    name: name.clone(),
                    shape: self.entries[name].0.clone(),
                })
                .collect(),
        };
        let json_path = base.with_extension("json");
        let bin_path = base.with_extension("bin");
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&json_path, json).map_err(|source| WeightsError::Io {
            path: json_path.clone(),
            source,
        })?;
        let mut bytes = Vec::new();
        for name in &self.order {
            for v in &self.entries[name].1 {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&bin_path, bytes).map_err(|source| WeightsError::Io {
            path: bin_path,
            source,
        })
    }

    /// Read a store saved by [`WeightStore::save`].
    pub fn load(base: &Path) -> Result<Self, WeightsError> {
        let json_path = base.with_extension("json");
        let bin_path = base.with_extension("bin");
        let json = fs::read_to_string(&json_path).map_err(|source| WeightsError::Io {
            path: json_path.clone(),
            source,
        })?;
        let manifest: Manifest =
            serde_json::from_str(&json).map_err(|source| WeightsError::Manifest {
                path: json_path,
                source,
            })?;
        let bytes = fs::read(&bin_path).map_err(|source| WeightsError::Io {
            path: bin_path,
            source,
        })?;
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let expected: usize = manifest
            .tensors
            .iter()
            .map(|e| e.shape.iter().product::<usize>())
            .sum();
        if floats.len() != expected {
            return Err(WeightsError::PayloadLength {
                expected,
                actual: floats.len(),
            });
        }
        let mut store = WeightStore::new();
        let mut offset = 0usize;
        for entry in manifest.tensors {
            let len: usize = entry.shape.iter().product();
            store.insert(&entry.name, entry.shape, floats[offset..offset + len].to_vec())?;
            offset += len;
        }
        Ok(store)
    }
}

/// Deterministic seeded initializer for toy-network weights.
///
/// Uniform in `[-scale, scale]` from a ChaCha8 stream, so the same seed
/// reproduces the same weights on every platform.
pub struct SeededInit {
    rng: ChaCha8Rng,
}

impl SeededInit {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, n: usize, scale: f32) -> Vec<f32> {
        let dist = Uniform::new_inclusive(-scale, scale);
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }

    pub fn zeros(n: usize) -> Vec<f32> {
        vec![0.0; n]
    }
}
