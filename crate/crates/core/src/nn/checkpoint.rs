//! Binary model checkpoints.
//!
//! Layout (little-endian):
//! `b"GZGMODEL"`, `u32` format version, `u32` length + JSON header (model
//! config and, optionally, the scalar-feature normalizer and window size),
//! `u32` tensor count, then per tensor: `u32` name length, UTF-8 name,
//! `u64` element count, `f32` values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::features::FeatureStats;

const MAGIC: &[u8; 8] = b"GZGMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub normalizer: Option<FeatureStats>,
    pub window_size: Option<f64>,
    pub sampling_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model,
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<checkpoint>", e)
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> Result<()> {
    let header = serde_json::to_vec(&ckpt.header)?;
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())
        .map_err(io_err)?;
    out.write_all(&(header.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    out.write_all(&header).map_err(io_err)?;
    let tensors = ckpt.model.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for (name, data) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        out.write_all(name.as_bytes()).map_err(io_err)?;
        out.write_all(&(data.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        out.write_all(&bytes).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn read_exact<R: Read, const N: usize>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("unexpected end of file".into()))?;
    Ok(buf)
}

fn read_vec<R: Read>(input: &mut R, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    input
        .take(len as u64)
        .read_to_end(&mut buf)
        .map_err(io_err)?;
    if buf.len() != len {
        return Err(Error::Checkpoint("unexpected end of file".into()));
    }
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    if &read_exact::<_, 8>(&mut input)? != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut input)?);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let header_len = u32::from_le_bytes(read_exact(&mut input)?) as usize;
    let header: CheckpointHeader = serde_json::from_slice(&read_vec(&mut input, header_len)?)?;
    let mut model = Model::zeros(&header.model)?;

    let count = u32::from_le_bytes(read_exact(&mut input)?) as usize;
    let expected: Vec<(String, usize)> = model
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    for ((name, len), dst) in expected.into_iter().zip(model.tensors_mut()) {
        let name_len = u32::from_le_bytes(read_exact(&mut input)?) as usize;
        let found = String::from_utf8(read_vec(&mut input, name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if found != name {
            return Err(Error::Checkpoint(format!(
                "expected tensor {name}, found {found}"
            )));
        }
        let n = u64::from_le_bytes(read_exact(&mut input)?) as usize;
        if n != len {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: expected {len} values, found {n}"
            )));
        }
        let bytes = read_vec(&mut input, 4 * n)?;
        for (d, chunk) in dst.iter_mut().zip(bytes.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        }
    }
    Ok(Checkpoint { header, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            seq_len: 16,
            stem_channels: 3,
            block_channels: vec![3, 4],
            kernel_size: 3,
            scalar_hidden: 2,
            fusion_hidden: 5,
            skip_connections: true,
            seed: 11,
        }
    }

    #[test]
    fn round_trip() {
        let model = Model::init(&small()).unwrap();
        let ckpt = Checkpoint {
            header: CheckpointHeader {
                model: small(),
                normalizer: None,
                window_size: Some(5.0),
                sampling_rate: Some(200.0),
            },
            model,
        };
        let mut buf = Vec::new();
        write_checkpoint(&ckpt, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let ckpt = Checkpoint {
            header: CheckpointHeader {
                model: small(),
                normalizer: None,
                window_size: None,
                sampling_rate: None,
            },
            model: Model::init(&small()).unwrap(),
        };
        let mut buf = Vec::new();
        write_checkpoint(&ckpt, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(matches!(
            read_checkpoint(buf.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }
}
