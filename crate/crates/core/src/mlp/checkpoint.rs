//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic     4 bytes  "DEMN"
//! version   u32
//! layers    u32      number of widths L (K + 1)
//! widths    L x u32
//! payload   for each layer k: W_k row-major (p_k * p_{k-1} f64), then b_k (p_k f64)
//! ```

use ndarray::{Array1, Array2};

use super::MlpParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DEMN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_model(params: &MlpParams) -> Vec<u8> {
    let widths = params.widths();
    let mut out = Vec::with_capacity(12 + 4 * widths.len() + 8 * params.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
    for &w in widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::ModelFormat(format!("truncated stream while reading {what}")));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("four bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(n * 8, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect())
    }
}

pub fn load_model(bytes: &[u8]) -> Result<MlpParams> {
    let mut r = Reader { bytes };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let count = r.u32("layer count")? as usize;
    if !(2..=4096).contains(&count) {
        return Err(Error::ModelFormat(format!("implausible layer count {count}")));
    }
    let widths = (0..count)
        .map(|_| r.u32("widths").map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    if widths.contains(&0) {
        return Err(Error::ModelFormat("zero layer width".into()));
    }
    let expected: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() * 8;
    if r.bytes.len() != expected {
        return Err(Error::ModelFormat(format!(
            "payload is {} bytes but widths {widths:?} require {expected}",
            r.bytes.len()
        )));
    }
    let mut weights = Vec::with_capacity(count - 1);
    let mut biases = Vec::with_capacity(count - 1);
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let flat = r.f64s(fan_in * fan_out, "weights")?;
        weights.push(
            Array2::from_shape_vec((fan_out, fan_in), flat)
                .map_err(|e| Error::ModelFormat(e.to_string()))?,
        );
        biases.push(Array1::from(r.f64s(fan_out, "biases")?));
    }
    MlpParams::from_layers(weights, biases).map_err(|e| Error::ModelFormat(e.to_string()))
}
