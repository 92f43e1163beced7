use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{KLExpansion, KLMeta};
use crate::error::{Error, Result};
use crate::kronop::{Domain, ParityVector};
use crate::assembly::Parity;
use crate::sefit::SqExpMixture;

/// Coefficient layout of the `.kl.bin` file.
pub const EXPANSION_LAYOUT: &str =
    "f64 little-endian, pair-major; each pair holds (n+1)^D coefficients in row-major multi-index order, direction 1 slowest";

#[derive(Serialize, Deserialize)]
struct Header {
    generator: String,
    layout: String,
    binary: String,
    domain: String,
    dim: usize,
    n: usize,
    num_pairs: usize,
    pair_stride_bytes: u64,
    offsets: Vec<u64>,
    eigenvalues: Vec<f64>,
    parity_labels: Vec<String>,
    meta: KLMeta,
    mixture: SqExpMixture,
}

fn paths(base: &Path) -> (PathBuf, PathBuf) {
    let name = base.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    (base.with_file_name(format!("{name}.kl.json")), base.with_file_name(format!("{name}.kl.bin")))
}

fn parse_label(s: &str, d: usize) -> Result<ParityVector> {
    if s.len() != d || !s.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::Parse(format!("bad parity label `{s}`")));
    }
    Ok(ParityVector(s.chars().map(|c| Parity::from_bit((c == '1') as usize)).collect()))
}

impl KLExpansion {
    /// Writes `<base>.kl.json` and `<base>.kl.bin`; returns both paths.
    pub fn save(&self, base: impl AsRef<Path>, generator: &str) -> Result<(PathBuf, PathBuf)> {
        let (json_path, bin_path) = paths(base.as_ref());
        let stride = 8 * (self.n as u64 + 1).pow(self.dim() as u32);
        let header = Header {
            generator: generator.to_owned(),
            layout: EXPANSION_LAYOUT.to_owned(),
            binary: bin_path.file_name().unwrap().to_string_lossy().into_owned(),
            domain: self.domain.to_string(),
            dim: self.dim(),
            n: self.n,
            num_pairs: self.num_pairs(),
            pair_stride_bytes: stride,
            offsets: (0..self.num_pairs() as u64).map(|j| j * stride).collect(),
            eigenvalues: self.eigenvalues.clone(),
            parity_labels: self.parity_labels.iter().map(|p| p.label()).collect(),
            meta: self.meta.clone(),
            mixture: self.mixture.clone(),
        };
        let mut bytes = Vec::with_capacity(stride as usize * self.num_pairs());
        for c in &self.coeffs {
            for v in c {
                bytes.extend(v.to_le_bytes());
            }
        }
        fs::write(&bin_path, bytes)?;
        let mut json = serde_json::to_string_pretty(&header)?;
        json.push('\n');
        fs::write(&json_path, json)?;
        Ok((json_path, bin_path))
    }

    /// Reads an expansion from `<base>.kl.json` (or the JSON path itself).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json_path = if path.to_string_lossy().ends_with(".kl.json") { path.to_path_buf() } else { paths(path).0 };
        let header: Header = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
        let domain: Domain<f64> = header.domain.parse()?;
        if domain.dim() != header.dim || header.eigenvalues.len() != header.num_pairs || header.parity_labels.len() != header.num_pairs {
            return Err(Error::Parse("inconsistent expansion header".into()));
        }
        let bin_path = json_path.with_file_name(&header.binary);
        let bytes = fs::read(&bin_path)?;
        let per_pair = (header.n + 1).pow(header.dim as u32);
        if bytes.len() != 8 * per_pair * header.num_pairs {
            return Err(Error::Parse(format!(
                "{} holds {} bytes, expected {}",
                bin_path.display(),
                bytes.len(),
                8 * per_pair * header.num_pairs
            )));
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let coeffs = values.chunks_exact(per_pair.max(1)).map(|c| c.to_vec()).collect();
        let parity_labels =
            header.parity_labels.iter().map(|s| parse_label(s, header.dim)).collect::<Result<Vec<_>>>()?;
        header.mixture.validate()?;
        Ok(Self {
            domain,
            n: header.n,
            mixture: header.mixture,
            eigenvalues: header.eigenvalues,
            parity_labels,
            coeffs,
            meta: header.meta,
        })
    }
}
