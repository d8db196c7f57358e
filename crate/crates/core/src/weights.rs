//! Snapshot weight files (QRWT).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   "QRWT" (4 bytes)
//! version u16 (currently 1)
//! arch    u32 length + UTF-8 architecture descriptor
//! then per tensor, until end of file:
//!   name  u32 length + UTF-8
//!   rank  u8
//!   dims  rank x u32
//!   data  product(dims) x f64 (IEEE-754 bit patterns, so round trips are
//!         bit-exact)
//! ```

use std::fs;
use std::path::Path;

use crate::arch::{Architecture, ModelParams, NamedTensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"QRWT";
const VERSION: u16 = 1;

pub fn encode_params(params: &ModelParams) -> Vec<u8> {
    let descriptor = params.arch().descriptor();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(descriptor.as_bytes());
    for named in params.tensors() {
        out.extend_from_slice(&(named.name.len() as u32).to_le_bytes());
        out.extend_from_slice(named.name.as_bytes());
        out.push(named.tensor.shape().len() as u8);
        for &d in named.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in named.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            context: "QRWT",
            expected: "QRWT",
        });
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            context: "QRWT",
            found: version,
            expected: VERSION,
        });
    }
    let descriptor = cur.string("architecture descriptor")?;
    let arch = Architecture::parse(&descriptor)?;

    let mut tensors = Vec::new();
    while !cur.done() {
        let name = cur.string("tensor name")?;
        let rank = cur.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut numel: u64 = 1;
        for i in 0..rank {
            let d = cur.u32(&format!("dim {i} of {name}"))? as u64;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::DimensionOverflow(format!("tensor {name} dims")))?;
            shape.push(d as usize);
        }
        let byte_len = numel
            .checked_mul(8)
            .ok_or_else(|| Error::DimensionOverflow(format!("tensor {name} payload")))?;
        if byte_len > (cur.bytes.len() - cur.pos) as u64 {
            return Err(Error::Truncated(format!(
                "tensor {name} declares {numel} elements but the file ends early"
            )));
        }
        let raw = cur.take(byte_len as usize, "tensor data")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tensor {name} contains non-finite values"
            )));
        }
        tensors.push(NamedTensor {
            name,
            tensor: Tensor::new(shape, data)?,
        });
    }
    ModelParams::from_named_tensors(&arch, tensors)
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, encode_params(params)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_params(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn done(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "expected {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::Parse(format!("{what} is not valid UTF-8")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn round_trip_is_bit_exact() {
        let arch = Architecture::default_cnn(3, 8, 8, 4).unwrap();
        let params = ModelParams::init(&arch, &RngStream::from_seed(77)).unwrap();
        let bytes = encode_params(&params);
        let loaded = decode_params(&bytes).unwrap();
        assert!(loaded.bits_eq(&params));
        // Re-encoding reproduces identical bytes.
        assert_eq!(encode_params(&loaded), bytes);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let arch = Architecture::default_cnn(1, 4, 4, 2).unwrap();
        let params = ModelParams::init(&arch, &RngStream::from_seed(0)).unwrap();
        let mut bytes = encode_params(&params);
        bytes[0] = b'X';
        assert!(matches!(
            decode_params(&bytes),
            Err(Error::BadMagic { context: "QRWT", .. })
        ));
    }

    #[test]
    fn truncation_is_rejected() {
        let arch = Architecture::default_cnn(1, 4, 4, 2).unwrap();
        let params = ModelParams::init(&arch, &RngStream::from_seed(0)).unwrap();
        let bytes = encode_params(&params);
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            decode_params(truncated),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let arch = Architecture::default_cnn(1, 4, 4, 2).unwrap();
        let params = ModelParams::init(&arch, &RngStream::from_seed(0)).unwrap();
        let mut bytes = encode_params(&params);
        bytes[4] = 9;
        assert!(matches!(
            decode_params(&bytes),
            Err(Error::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn tensor_mismatch_with_descriptor_is_rejected() {
        // Encode params for one architecture, then lie about the descriptor.
        let arch = Architecture::default_cnn(1, 4, 4, 2).unwrap();
        let params = ModelParams::init(&arch, &RngStream::from_seed(0)).unwrap();
        let other = Architecture::default_cnn(1, 4, 4, 3).unwrap();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        let desc = other.descriptor();
        bytes.extend_from_slice(&(desc.len() as u32).to_le_bytes());
        bytes.extend_from_slice(desc.as_bytes());
        bytes.extend_from_slice(&encode_params(&params)[6 + 4 + arch.descriptor().len()..]);
        assert!(decode_params(&bytes).is_err());
    }
}
