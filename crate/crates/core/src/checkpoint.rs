//! Model files.
//!
//! The bidirectional H-RNN is stored as
//!
//! ```text
//! "HRNN1" | u32 d_feat | u32 d1 | u32 d2 | u32 s | f64 arrays
//! ```
//!
//! Arrays follow [`HrnnModel::arrays`](crate::hrnn::HrnnModel::arrays):
//! for each of layer 1, layer-2 forward and layer-2 backward the twelve
//! LSTM arrays `W_ix W_fx W_ox W_gx U_ih U_fh U_oh U_gh b_i b_f b_o b_g`,
//! then `W_p` (2 × (2·d2 + d1)) and `b_p`. Matrices are row-major. Every
//! other variant uses a tagged container
//!
//! ```text
//! "HRNV1" | u32 name_len | name | u32 n | n × u32 dims | f64 arrays
//! ```
//!
//! A checkpoint is a model file followed by a `u32` epoch counter. All
//! numbers are little-endian.

use std::path::Path;

use crate::codec::{to_u32, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::registry::{KeynessModel, ModelRegistry};

pub const HRNN_MAGIC: &[u8; 5] = b"HRNN1";
pub const VARIANT_MAGIC: &[u8; 5] = b"HRNV1";
const HRNN_VARIANT: &str = "hrnn";

pub fn encode_model(model: &dyn KeynessModel, epoch: Option<u32>) -> Result<Vec<u8>> {
    let mut w = ByteWriter::default();
    let dims = model.header_dims();
    if model.variant() == HRNN_VARIANT {
        w.bytes(HRNN_MAGIC);
    } else {
        w.bytes(VARIANT_MAGIC);
        let name = model.variant().as_bytes();
        w.u32(to_u32(name.len(), "variant name length")?);
        w.bytes(name);
        w.u32(to_u32(dims.len(), "header length")?);
    }
    for d in dims {
        w.u32(to_u32(d, "model dim")?);
    }
    for (_, array) in model.parameters() {
        for v in array {
            w.f64(*v);
        }
    }
    if let Some(e) = epoch {
        w.u32(e);
    }
    Ok(w.buf)
}

/// Decode a model or checkpoint; returns the epoch counter when present.
pub fn decode_model(
    registry: &ModelRegistry,
    path: &Path,
    bytes: &[u8],
) -> Result<(Box<dyn KeynessModel>, Option<u32>)> {
    let mut r = ByteReader::new(path, bytes);
    let magic = r.take(5, "magic")?;
    let (entry, dims) = if magic == HRNN_MAGIC {
        let entry = registry.get(HRNN_VARIANT)?;
        let dims = read_dims(&mut r, entry.header_len)?;
        (entry, dims)
    } else if magic == VARIANT_MAGIC {
        let len = r.u32("variant name length")? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(len, "variant name")?)
            .map_err(|_| r.error_at(at, "variant name is not UTF-8"))?;
        let entry = registry
            .get(name)
            .map_err(|_| r.error_at(at, format!("unknown variant `{name}`")))?;
        let at = r.offset();
        let n = r.u32("header length")? as usize;
        if n != entry.header_len {
            return Err(r.error_at(
                at,
                format!(
                    "variant `{name}` expects {} dims, header has {n}",
                    entry.header_len
                ),
            ));
        }
        (entry, read_dims(&mut r, n)?)
    } else {
        return Err(r.error_at(0, format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    };

    let mut model = (entry.from_header)(&dims).map_err(|e| r.error(e.to_string()))?;
    let total: usize = model.parameters().iter().map(|(_, a)| a.len()).sum();
    let need = total * 8;
    if r.remaining() != need && r.remaining() != need + 4 {
        return Err(r.error(format!(
            "expected {need} bytes of parameters (+4 for an epoch counter), found {}",
            r.remaining()
        )));
    }
    for array in model.parameters_mut() {
        for v in array.iter_mut() {
            let at = r.offset();
            let x = r.f64("parameter")?;
            if !x.is_finite() {
                return Err(r.error_at(at, format!("non-finite parameter {x}")));
            }
            *v = x;
        }
    }
    let epoch = if r.remaining() == 4 {
        Some(r.u32("epoch counter")?)
    } else {
        None
    };
    r.finish()?;
    Ok((model, epoch))
}

fn read_dims(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<usize>> {
    (0..n)
        .map(|_| {
            let at = r.offset();
            let d = r.u32("model dim")? as usize;
            if d == 0 {
                Err(r.error_at(at, "model dims must be at least 1"))
            } else {
                Ok(d)
            }
        })
        .collect()
}

pub fn save_model(path: &Path, model: &dyn KeynessModel, epoch: Option<u32>) -> Result<()> {
    write_atomic(path, &encode_model(model, epoch)?)
}

pub fn load_model(
    registry: &ModelRegistry,
    path: &Path,
) -> Result<(Box<dyn KeynessModel>, Option<u32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(registry, path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::ModelConfig;

    fn config() -> ModelConfig {
        ModelConfig {
            feature_dim: 3,
            hidden1: 4,
            hidden2: 2,
            subshot_len: 5,
            stride: None,
            masked: false,
            flat_steps: 7,
        }
    }

    #[test]
    fn hrnn_layout_is_fixed() {
        let reg = ModelRegistry::builtin();
        let model = reg.create("hrnn", &config(), 0.3, 9).unwrap();
        let bytes = encode_model(model.as_ref(), None).unwrap();
        assert_eq!(&bytes[..5], b"HRNN1");
        let dims: Vec<u32> = bytes[5..21]
            .chunks(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(dims, [3, 4, 2, 5]);
        // 1 + 2 LSTMs + head
        let lstm = |i: usize, h: usize| 4 * (h * i + h * h + h);
        let count = lstm(3, 4) + 2 * lstm(4, 2) + 2 * (2 * 2 + 4) + 2;
        assert_eq!(bytes.len(), 21 + 8 * count);
        let first = f64::from_le_bytes(bytes[21..29].try_into().unwrap());
        assert_eq!(first, model.parameters()[0].1[0]);
    }

    #[test]
    fn every_variant_round_trips_bit_exactly() {
        let reg = ModelRegistry::builtin();
        for name in reg.names() {
            let model = reg.create(name, &config(), 0.3, 4).unwrap();
            for epoch in [None, Some(17)] {
                let bytes = encode_model(model.as_ref(), epoch).unwrap();
                let (back, e) = decode_model(&reg, Path::new("m"), &bytes).unwrap();
                assert_eq!(e, epoch);
                assert_eq!(back.variant(), name);
                assert_eq!(encode_model(back.as_ref(), epoch).unwrap(), bytes);
            }
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let reg = ModelRegistry::builtin();
        let model = reg.create("hrnn", &config(), 0.3, 4).unwrap();
        let bytes = encode_model(model.as_ref(), None).unwrap();
        let p = Path::new("m.bin");
        assert!(matches!(
            decode_model(&reg, p, &bytes[..bytes.len() - 1]),
            Err(Error::Format { offset: 21, .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_model(&reg, p, &bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut nan = bytes.clone();
        nan[21..29].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            decode_model(&reg, p, &nan),
            Err(Error::Format { offset: 21, .. })
        ));
        let mut zero_dim = bytes;
        zero_dim[5..9].copy_from_slice(&0u32.to_le_bytes());
        assert!(decode_model(&reg, p, &zero_dim).is_err());
    }
}
