//! Binary checkpoint: ASCII header `URGLM1 <n_tensors>`, then per tensor a
//! line `<name> <rank> <dims…>` followed by its values as row-major
//! little-endian `f64`.

use super::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::{ParamSet, Scalar};

pub const CHECKPOINT_MAGIC: &str = "URGLM1";

pub fn write_checkpoint<T: Scalar>(params: &EncoderParams<T>) -> Vec<u8> {
    let tensors = params.tensors();
    let mut out = format!("{CHECKPOINT_MAGIC} {}\n", tensors.len()).into_bytes();
    for (name, t) in tensors {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        out.extend_from_slice(format!("{name} {} {}\n", t.rank(), dims.join(" ")).as_bytes());
        for x in t.data() {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Reader<'a> {
    fn header_line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(self.line, "truncated checkpoint header"))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| Error::parse(self.line, "header is not ASCII"))?;
        self.pos += end + 1;
        self.line += 1;
        Ok(line)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let need = n * 8;
        if self.bytes.len() - self.pos < need {
            return Err(Error::parse(self.line, "truncated tensor data"));
        }
        let out = self.bytes[self.pos..self.pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos += need;
        Ok(out)
    }
}

/// Loads a checkpoint, requiring every tensor to match `cfg` by name and shape.
pub fn read_checkpoint<T: Scalar>(bytes: &[u8], cfg: &EncoderConfig) -> Result<EncoderParams<T>> {
    cfg.validate()?;
    let mut r = Reader { bytes, pos: 0, line: 1 };
    let header = r.header_line()?;
    let count: usize = header
        .strip_prefix(CHECKPOINT_MAGIC)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(1, format!("expected `{CHECKPOINT_MAGIC} <n>`")))?;

    let mut params = EncoderParams::<T>::zeros(cfg);
    let expected = params.tensors().len();
    if count != expected {
        return Err(Error::data(format!(
            "checkpoint has {count} tensors, config expects {expected}"
        )));
    }
    for (name, tensor) in params.tensors_mut() {
        let line_no = r.line;
        let line = r.header_line()?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() < 2 || fields[0] != name {
            return Err(Error::parse(
                line_no,
                format!("expected tensor `{name}`, found `{line}`"),
            ));
        }
        let rank: usize = fields[1].parse().map_err(|_| Error::parse(line_no, "bad rank"))?;
        let dims: Vec<usize> = fields[2..]
            .iter()
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(line_no, "bad dimension"))?;
        if dims.len() != rank || dims != tensor.shape() {
            return Err(Error::data(format!(
                "tensor `{name}` has shape {dims:?}, config expects {:?}",
                tensor.shape()
            )));
        }
        let values = r.f64s(tensor.len())?;
        for (dst, v) in tensor.data_mut().iter_mut().zip(values) {
            *dst = T::lit(v);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::data("trailing bytes after the last tensor"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;

    #[test]
    fn round_trip_is_exact() {
        let cfg = EncoderConfig::tiny();
        let p: EncoderParams<f64> = init_params(&cfg, 3).unwrap();
        let bytes = write_checkpoint(&p);
        assert!(bytes.starts_with(b"URGLM1 24\nembeddings.token 2 20 8\n"));
        assert_eq!(read_checkpoint::<f64>(&bytes, &cfg).unwrap(), p);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cfg = EncoderConfig::tiny();
        let p: EncoderParams<f64> = init_params(&cfg, 3).unwrap();
        let bytes = write_checkpoint(&p);
        let other = EncoderConfig {
            vocab_size: 21,
            ..cfg.clone()
        };
        assert!(read_checkpoint::<f64>(&bytes, &other).is_err());
        assert!(read_checkpoint::<f64>(&bytes[..bytes.len() - 3], &cfg).is_err());
        assert!(read_checkpoint::<f64>(b"NOPE 1\n", &cfg).is_err());
    }
}
