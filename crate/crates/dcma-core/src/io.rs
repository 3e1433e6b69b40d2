//! JSON file formats shared by the CLI and the library.

use crate::codebook::{Codebook, CodebookError, Provenance};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Serde adapter storing `Vec<Complex64>` as `[[re, im], ...]`.
pub mod complex_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect())
    }
}

/// On-disk codebook: row-major entries with construction provenance.
/// `serde_json` prints floats in shortest round-trip form, so save/load is
/// bit-faithful.
#[derive(Debug, Serialize, Deserialize)]
pub struct CodebookFile {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(with = "complex_vec")]
    pub entries: Vec<Complex64>,
    pub provenance: Provenance,
}

impl CodebookFile {
    pub fn from_codebook(cb: &Codebook) -> Self {
        Self {
            k: cb.k_resources(),
            j: cb.j_users(),
            entries: cb.entries().to_vec(),
            provenance: cb.provenance().clone(),
        }
    }

    pub fn into_codebook(self) -> Result<Codebook, CodebookError> {
        if self.entries.len() != self.k * self.j {
            return Err(CodebookError::MalformedFile(format!(
                "expected {} entries for a {}x{} matrix, found {}",
                self.k * self.j,
                self.k,
                self.j,
                self.entries.len()
            )));
        }
        Codebook::new(self.entries, self.k, self.j, self.provenance)
    }
}

pub fn save_codebook(cb: &Codebook, path: &Path) -> std::io::Result<()> {
    let file = CodebookFile::from_codebook(cb);
    let text = serde_json::to_string_pretty(&file).expect("codebook serialization");
    std::fs::write(path, text)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
}

pub fn load_codebook(path: &Path) -> Result<Codebook, LoadError> {
    let text = std::fs::read_to_string(path)?;
    let file: CodebookFile = serde_json::from_str(&text)?;
    Ok(file.into_codebook()?)
}
