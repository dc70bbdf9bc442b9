//! `DCV1` checkpoint files.
//!
//! Layout: the magic bytes `DCV1`, then until end of file one record per
//! tensor: name length (u32 LE), UTF-8 name, rank (u32 LE), each dimension
//! (u32 LE), and the raw f32 LE values. The model config travels as the
//! record `meta.config`; optimizer state uses the `optim.` prefix.

use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DCV1";
const CONFIG_RECORD: &str = "meta.config";

/// A loaded checkpoint: model weights plus any extra named tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub extras: Vec<(String, Tensor<f32>)>,
}

pub fn encode_records(records: &[(&str, &Tensor<f32>)]) -> Vec<u8> {
    let mut buf = MAGIC.to_vec();
    for (name, t) in records {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_records(buf: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(Error::Checkpoint("missing DCV1 magic".into()));
    }
    let mut r = Reader { buf, pos: 4 };
    let mut out = Vec::new();
    while r.pos < buf.len() {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        if !(1..=4).contains(&rank) {
            return Err(Error::Checkpoint(format!("`{name}` has rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("`{name}` is too large")))?;
        let bytes = r.take(numel.checked_mul(4).ok_or_else(|| {
            Error::Checkpoint(format!("`{name}` is too large"))
        })?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    extras: &[(String, Tensor<f32>)],
) -> Result<()> {
    fs::write(path, checkpoint_bytes(params, extras)).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_bytes(params: &ModelParams, extras: &[(String, Tensor<f32>)]) -> Vec<u8> {
    let meta = Tensor::from_vec(params.config.to_meta());
    let names = params.names();
    let mut records: Vec<(&str, &Tensor<f32>)> = vec![(CONFIG_RECORD, &meta)];
    records.extend(names.iter().map(String::as_str).zip(params.tensors()));
    records.extend(extras.iter().map(|(n, t)| (n.as_str(), t)));
    encode_records(&records)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&buf)
}

pub fn parse_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut records = decode_records(buf)?;
    let meta_at = records
        .iter()
        .position(|(n, _)| n == CONFIG_RECORD)
        .ok_or_else(|| Error::Checkpoint(format!("missing `{CONFIG_RECORD}` record")))?;
    let (_, meta) = records.remove(meta_at);
    let cfg = ModelConfig::from_meta(meta.data())?;
    let names = ModelParams::<f32>::zeros(&cfg, 1)?.names();
    let mut tensors = Vec::with_capacity(names.len());
    for name in &names {
        let at = records
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        tensors.push(records.remove(at).1);
    }
    let params = ModelParams::from_tensors(&cfg, tensors)?;
    Ok(Checkpoint {
        params,
        extras: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ablation;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig::with_shape(3, 4, 6).with_ablation(Ablation {
            context: true,
            ..Ablation::NONE
        });
        let p = ModelParams::<f32>::init(&cfg, 11, 42).unwrap();
        let extra = vec![("optim.step".to_string(), Tensor::scalar(3.0f32))];
        let bytes = checkpoint_bytes(&p, &extra);
        assert_eq!(&bytes[..4], b"DCV1");
        let ck = parse_checkpoint(&bytes).unwrap();
        assert_eq!(ck.params, p);
        assert_eq!(ck.extras, extra);
        assert_eq!(checkpoint_bytes(&ck.params, &ck.extras), bytes);
    }

    #[test]
    fn record_layout() {
        let t = Tensor::new(&[2], vec![1.0f32, -2.0]).unwrap();
        let bytes = encode_records(&[("ab", &t)]);
        let mut expected = b"DCV1".to_vec();
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(b"ab");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let t = Tensor::from_vec(vec![1.0f32; 3]);
        let bytes = encode_records(&[("x", &t)]);
        assert!(decode_records(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_records(b"XXXX").is_err());
    }
}
