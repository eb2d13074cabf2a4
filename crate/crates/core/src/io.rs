//! Dense tensor files and dataset sidecars.
//!
//! A tensor file is one JSON header line
//! `{"format":"dtf","version":1,"order":..,"shape":[..],"dtype":"c128","layout":"mode1-fastest"}`
//! followed by `2·len` little-endian `f64` values (real, imaginary interleaved).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, StpcaError};
use crate::linalg::cplx;
use crate::score::Scenario;
use crate::synth::LabeledTensorDataset;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    order: usize,
    shape: Vec<usize>,
    dtype: String,
    layout: String,
}

pub fn encode_tensor(t: &DenseTensor) -> Vec<u8> {
    let header = Header {
        format: "dtf".into(),
        version: 1,
        order: t.order(),
        shape: t.shape().to_vec(),
        dtype: "c128".into(),
        layout: "mode1-fastest".into(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(16 * t.len());
    for z in t.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_tensor(mut r: impl BufRead) -> Result<DenseTensor> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(line.trim_ascii_end())
        .map_err(|e| StpcaError::Format(format!("bad tensor header: {}", e)))?;
    if header.format != "dtf" || header.version != 1 {
        return Err(StpcaError::Format(format!("unsupported format {} v{}", header.format, header.version)));
    }
    if header.dtype != "c128" || header.layout != "mode1-fastest" {
        return Err(StpcaError::Format(format!("unsupported dtype/layout {}/{}", header.dtype, header.layout)));
    }
    if header.order != header.shape.len() {
        return Err(StpcaError::Format(format!("order {} with shape {:?}", header.order, header.shape)));
    }
    let len = header
        .shape
        .iter()
        .try_fold(1usize, |a, &b| a.checked_mul(b))
        .ok_or_else(|| StpcaError::Format("shape overflows".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != 16 * len {
        return Err(StpcaError::Format(format!("payload has {} bytes, expected {}", payload.len(), 16 * len)));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
    let data = payload.chunks_exact(16).map(|c| cplx(f(&c[..8]), f(&c[8..]))).collect();
    DenseTensor::new(header.shape, data)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| StpcaError::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

pub fn write_tensor(path: &Path, t: &DenseTensor) -> Result<()> {
    write_atomic(path, &encode_tensor(t))
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    decode_tensor(BufReader::new(fs::File::open(path)?))
}

/// Labels and ground truth stored next to a tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub labels: Vec<usize>,
    pub true_features: Vec<usize>,
    pub scenario: Scenario,
    /// Generator settings, when synthetic.
    #[serde(default)]
    pub spec: serde_json::Value,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// `data.dtf` -> `data.json`.
pub fn sidecar_path(tensor_path: &Path) -> PathBuf {
    tensor_path.with_extension("json")
}

pub fn save_dataset(path: &Path, ds: &LabeledTensorDataset, spec: serde_json::Value, seed: Option<u64>) -> Result<()> {
    let side = Sidecar {
        labels: ds.labels.clone(),
        true_features: ds.true_features.clone(),
        scenario: ds.scenario,
        spec,
        seed,
    };
    let json = serde_json::to_vec_pretty(&side).map_err(|e| StpcaError::Format(e.to_string()))?;
    write_tensor(path, &ds.tensor)?;
    write_atomic(&sidecar_path(path), &json)
}

pub fn load_dataset(path: &Path) -> Result<LabeledTensorDataset> {
    let tensor = read_tensor(path)?;
    let side = fs::read(sidecar_path(path))?;
    let side: Sidecar = serde_json::from_slice(&side).map_err(|e| StpcaError::Format(format!("bad sidecar: {}", e)))?;
    LabeledTensorDataset::new(tensor, side.labels, side.true_features, side.scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bytes() {
        let t = DenseTensor::new(vec![2, 1, 2], vec![cplx(1.0, -0.0), cplx(f64::MIN_POSITIVE, 2.5), cplx(-3.0, 1e300), cplx(0.1, 0.2)])
            .unwrap();
        let bytes = encode_tensor(&t);
        let back = decode_tensor(&bytes[..]).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let t = DenseTensor::zeros(vec![2, 2]).unwrap();
        let bytes = encode_tensor(&t);
        assert!(matches!(decode_tensor(&bytes[..bytes.len() - 1]), Err(StpcaError::Format(_))));
        assert!(matches!(decode_tensor(&b"{}\n"[..]), Err(StpcaError::Format(_))));
    }
}
