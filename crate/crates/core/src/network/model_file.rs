//! Binary model file, little-endian throughout:
//!
//! ```text
//! magic "SNGLNET\0" | version u32 | architecture table | conventions block
//! | weights | adam step u64, m, v | crc32 u32
//! ```
//!
//! The CRC covers every preceding byte.

use std::path::Path;

use super::arch::{Architecture, LayerSpec, Shape};
use super::params::{AdamState, LayerParams, NetworkParams, ParamSet};
use crate::encoder::EncoderConventions;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"SNGLNET\0";
pub const MODEL_VERSION: u32 = 1;

const KIND_CONV: u8 = 1;
const KIND_RELU: u8 = 2;
const KIND_POOL: u8 = 3;
const KIND_FLATTEN: u8 = 4;
const KIND_FC: u8 = 5;
const KIND_SIGMOID: u8 = 6;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats(&mut self, vs: &[f64]) {
        self.u32(vs.len());
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn params(&mut self, set: &ParamSet) {
        for l in &set.layers {
            self.floats(&l.weights);
            self.floats(&l.bias);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                what: "model file",
                detail: format!("unexpected end at byte {}", self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let n = self.u32()?;
        if n != expected {
            return Err(Error::Format {
                what: "model file",
                detail: format!("tensor of {n} values where {expected} expected"),
            });
        }
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }
    fn params(&mut self, arch: &Architecture) -> Result<ParamSet> {
        let mut layers = Vec::with_capacity(arch.layers.len());
        for spec in &arch.layers {
            let (w, b) = spec.param_shape();
            layers.push(LayerParams {
                weights: self.floats(w)?,
                bias: self.floats(b)?,
            });
        }
        Ok(ParamSet { layers })
    }
}

pub fn encode_model(params: &NetworkParams, conventions: &EncoderConventions) -> Result<Vec<u8>> {
    params.validate()?;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION as usize);

    let arch = &params.architecture;
    w.u32(arch.input.c);
    w.u32(arch.input.h);
    w.u32(arch.input.w);
    w.u32(arch.layers.len());
    for l in &arch.layers {
        let (kind, a, b, c, d, e) = match *l {
            LayerSpec::Convolution {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => (KIND_CONV, in_channels, out_channels, kernel, stride, padding),
            LayerSpec::Relu => (KIND_RELU, 0, 0, 0, 0, 0),
            LayerSpec::MaxPool { size } => (KIND_POOL, size, 0, 0, 0, 0),
            LayerSpec::Flatten => (KIND_FLATTEN, 0, 0, 0, 0, 0),
            LayerSpec::FullyConnected { inputs, units } => (KIND_FC, inputs, units, 0, 0, 0),
            LayerSpec::Sigmoid => (KIND_SIGMOID, 0, 0, 0, 0, 0),
        };
        w.u8(kind);
        for v in [a, b, c, d, e] {
            w.u32(v);
        }
    }

    let conv = serde_json::to_vec(conventions)?;
    w.u32(conv.len());
    w.0.extend_from_slice(&conv);

    w.params(&params.tensors);
    w.u64(params.adam.step);
    w.params(&params.adam.m);
    w.params(&params.adam.v);

    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    Ok(w.0)
}

pub fn decode_model(bytes: &[u8]) -> Result<(NetworkParams, EncoderConventions)> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Magic("model"));
    }
    if bytes.len() < 12 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    if bytes.len() < 16 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 12 };
    let input = Shape::new(r.u32()?, r.u32()?, r.u32()?);
    let n = r.u32()?;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let kind = r.u8()?;
        let v = [r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        layers.push(match kind {
            KIND_CONV => LayerSpec::Convolution {
                in_channels: v[0],
                out_channels: v[1],
                kernel: v[2],
                stride: v[3],
                padding: v[4],
            },
            KIND_RELU => LayerSpec::Relu,
            KIND_POOL => LayerSpec::MaxPool { size: v[0] },
            KIND_FLATTEN => LayerSpec::Flatten,
            KIND_FC => LayerSpec::FullyConnected {
                inputs: v[0],
                units: v[1],
            },
            KIND_SIGMOID => LayerSpec::Sigmoid,
            other => {
                return Err(Error::Format {
                    what: "model file",
                    detail: format!("unknown layer kind {other}"),
                })
            }
        });
    }
    let architecture = Architecture { input, layers };
    architecture.validate()?;

    let clen = r.u32()?;
    let conventions: EncoderConventions = serde_json::from_slice(r.take(clen)?)?;

    let tensors = r.params(&architecture)?;
    let step = r.u64()?;
    let m = r.params(&architecture)?;
    let v = r.params(&architecture)?;
    if r.pos != body.len() {
        return Err(Error::Format {
            what: "model file",
            detail: format!("{} trailing bytes", body.len() - r.pos),
        });
    }
    let params = NetworkParams {
        architecture,
        tensors,
        adam: AdamState { m, v, step },
    };
    params.validate()?;
    Ok((params, conventions))
}

pub fn save_model(path: &Path, params: &NetworkParams, conventions: &EncoderConventions) -> Result<()> {
    let bytes = encode_model(params, conventions)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, 0, e))
}

pub fn load_model(path: &Path) -> Result<(NetworkParams, EncoderConventions)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, 0, e))?;
    decode_model(&bytes)
}
