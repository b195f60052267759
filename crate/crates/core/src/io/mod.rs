//! Named-array container used for checkpoints and continual-learning state.
//!
//! A container is two files sharing a stem: `<stem>.json` is the manifest
//! and `<stem>.bin` holds every array back to back as little-endian `f64`.
//!
//! ```json
//! {"format": "cworld-named-arrays", "version": 1, "dtype": "f64le",
//!  "arrays": [{"name": "actor/l0.w", "shape": [12, 256], "offset": 0, "count": 3072}]}
//! ```
//!
//! `offset` and `count` are in elements, not bytes.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::ParameterBlock;
use crate::{Error, Result};

pub const FORMAT: &str = "cworld-named-arrays";
pub const VERSION: u32 = 1;
pub const DTYPE: &str = "f64le";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct Manifest {
    format: String,
    version: u32,
    dtype: String,
    arrays: Vec<ManifestEntry>,
}

/// Ordered collection of uniquely named `f64` arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NamedArrays {
    arrays: Vec<NamedArray>,
}

impl NamedArrays {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn arrays(&self) -> &[NamedArray] {
        &self.arrays
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let name = name.into();
        let count = element_count(&shape)
            .ok_or_else(|| Error::Format(format!("shape of `{name}` overflows")))?;
        if count != data.len() {
            return Err(Error::Dimension {
                what: "named array length",
                expected: count,
                got: data.len(),
            });
        }
        if self.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate array name `{name}`")));
        }
        self.arrays.push(NamedArray { name, shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Adds every entry of `block` as `<prefix>/<entry name>`.
    pub fn push_block(&mut self, prefix: &str, block: &ParameterBlock) -> Result<()> {
        for (i, e) in block.entries().iter().enumerate() {
            self.push(format!("{prefix}/{}", e.name), e.shape.clone(), block.slice(i).to_vec())?;
        }
        Ok(())
    }

    /// Adds a flat vector as a rank-1 array.
    pub fn push_vector(&mut self, name: impl Into<String>, data: Vec<f64>) -> Result<()> {
        let n = data.len();
        self.push(name, vec![n], data)
    }

    /// Rebuilds a parameter block from all arrays under `<prefix>/`.
    pub fn to_block(&self, prefix: &str) -> Result<ParameterBlock> {
        let p = format!("{prefix}/");
        let items: Vec<_> = self
            .arrays
            .iter()
            .filter_map(|a| {
                a.name
                    .strip_prefix(&p)
                    .map(|n| (n.to_string(), a.shape.clone(), a.data.clone()))
            })
            .collect();
        if items.is_empty() {
            return Err(Error::Format(format!("no arrays under prefix `{prefix}`")));
        }
        ParameterBlock::new(items)
    }

    /// Serializes to `(manifest json, binary blob)`.
    pub fn encode(&self) -> (String, Vec<u8>) {
        let mut blob = Vec::new();
        let mut entries = Vec::with_capacity(self.arrays.len());
        let mut offset = 0;
        for a in &self.arrays {
            entries.push(ManifestEntry {
                name: a.name.clone(),
                shape: a.shape.clone(),
                offset,
                count: a.data.len(),
            });
            offset += a.data.len();
            for v in &a.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            dtype: DTYPE.into(),
            arrays: entries,
        };
        (
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
            blob,
        )
    }

    /// Parses a manifest and blob, validating every offset and shape.
    pub fn decode(manifest: &str, blob: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_str(manifest)?;
        if m.format != FORMAT || m.version != VERSION || m.dtype != DTYPE {
            return Err(Error::Format(format!(
                "unsupported container {}/{}/{}",
                m.format, m.version, m.dtype
            )));
        }
        if !blob.len().is_multiple_of(8) {
            return Err(Error::Format(format!("blob length {} is not a multiple of 8", blob.len())));
        }
        let available = blob.len() / 8;
        let mut seen = HashSet::new();
        let mut arrays = Vec::with_capacity(m.arrays.len());
        for e in m.arrays {
            if !seen.insert(e.name.clone()) {
                return Err(Error::Format(format!("duplicate array name `{}`", e.name)));
            }
            let count = element_count(&e.shape)
                .ok_or_else(|| Error::Format(format!("shape of `{}` overflows", e.name)))?;
            if count != e.count {
                return Err(Error::Format(format!(
                    "`{}`: shape holds {count} elements, manifest says {}",
                    e.name, e.count
                )));
            }
            let end = e
                .offset
                .checked_add(e.count)
                .filter(|&end| end <= available)
                .ok_or_else(|| Error::Format(format!("`{}` runs past the end of the blob", e.name)))?;
            let data = blob[e.offset * 8..end * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            arrays.push(NamedArray {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        Ok(Self { arrays })
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let (manifest, blob) = self.encode();
        std::fs::write(dir.join(format!("{stem}.json")), manifest)?;
        std::fs::write(dir.join(format!("{stem}.bin")), blob)?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let manifest = std::fs::read_to_string(dir.join(format!("{stem}.json")))?;
        let blob = std::fs::read(dir.join(format!("{stem}.bin")))?;
        Self::decode(&manifest, &blob)
    }
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn block_round_trip_through_files() {
        let block = ParameterBlock::new(vec![
            ("w".into(), vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, -0.0, 1e-300]),
            ("b".into(), vec![3], vec![0.5, 0.25, -0.125]),
        ])
        .unwrap();
        let mut na = NamedArrays::new();
        na.push_block("actor", &block).unwrap();
        na.push_vector("mask", vec![0.0, 1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        na.write(dir.path(), "ckpt").unwrap();
        let back = NamedArrays::read(dir.path(), "ckpt").unwrap();
        assert_eq!(back, na);
        assert_eq!(back.to_block("actor").unwrap(), block);
    }

    #[test]
    fn blob_is_little_endian_f64() {
        let mut na = NamedArrays::new();
        na.push_vector("x", vec![1.0]).unwrap();
        let (_, blob) = na.encode();
        assert_eq!(blob, 1.0f64.to_le_bytes().to_vec());
    }

    #[test]
    fn rejects_malformed_manifests() {
        let ok = r#"{"format":"cworld-named-arrays","version":1,"dtype":"f64le","arrays":[{"name":"a","shape":[2],"offset":0,"count":2}]}"#;
        let blob = [0u8; 16];
        assert!(NamedArrays::decode(ok, &blob).is_ok());
        assert!(NamedArrays::decode(ok, &blob[..8]).is_err());
        assert!(NamedArrays::decode(ok, &blob[..15]).is_err());
        let bad_shape = ok.replace("\"shape\":[2]", "\"shape\":[3]");
        assert!(NamedArrays::decode(&bad_shape, &blob).is_err());
        let overflow = ok.replace("\"offset\":0", &format!("\"offset\":{}", usize::MAX));
        assert!(NamedArrays::decode(&overflow, &blob).is_err());
        let wrong_dtype = ok.replace("f64le", "f32le");
        assert!(NamedArrays::decode(&wrong_dtype, &blob).is_err());
        let dup = r#"{"format":"cworld-named-arrays","version":1,"dtype":"f64le","arrays":[{"name":"a","shape":[1],"offset":0,"count":1},{"name":"a","shape":[1],"offset":1,"count":1}]}"#;
        assert!(NamedArrays::decode(dup, &blob).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(data in prop::collection::vec(prop::num::f64::ANY, 0..64)) {
            let mut na = NamedArrays::new();
            na.push_vector("v", data.clone()).unwrap();
            let (m, b) = na.encode();
            let back = NamedArrays::decode(&m, &b).unwrap();
            let got = &back.get("v").unwrap().data;
            prop_assert_eq!(got.len(), data.len());
            for (x, y) in got.iter().zip(&data) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
