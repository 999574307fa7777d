//! Generator models and their byte-exact weight-blob format.
//!
//! ```text
//! "CGM1" | version u32 | layer_count u32
//!   | per layer: kind u8, extent_count u8, extents u32...
//!   | tensor_count u32
//!   | per tensor: rank u8, dims u32..., values f32...
//!   | training_seed u64 | crc32 u32
//! ```
//! All integers and floats are little-endian; the CRC (IEEE) covers every
//! preceding byte.

use super::DbError;
use crate::image::{denormalize, normalize, ImageBuffer};
use crate::nn::{LayerSpec, Network, Role, Tensor};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"CGM1";
pub const FORMAT_VERSION: u32 = 1;

const KIND_CONV: u8 = 0;
const KIND_TCONV: u8 = 1;
const KIND_DENSE: u8 = 2;
const KIND_LEAKY: u8 = 3;
const KIND_TANH: u8 = 4;

/// A trained image-to-image generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    pub network: Network,
    /// `(width, height)` the model was trained on. The blob format does not
    /// carry it, so freshly loaded models have `None` until a manifest
    /// supplies it.
    pub input_extents: Option<(usize, usize)>,
    pub training_seed: u64,
    pub format_version: u32,
}

impl GeneratorModel {
    pub fn new(
        network: Network,
        input_extents: (usize, usize),
        training_seed: u64,
    ) -> Result<Self, DbError> {
        if network.role() != Role::Generator {
            return Err(DbError::ShapeMismatch(
                "model network is not a generator".into(),
            ));
        }
        let model = Self {
            network,
            input_extents: Some(input_extents),
            training_seed,
            format_version: FORMAT_VERSION,
        };
        model.check_accepts(input_extents.0, input_extents.1)?;
        Ok(model)
    }

    /// Fails unless the network maps `1 x h x w` to `1 x h x w`.
    pub fn check_accepts(&self, width: usize, height: usize) -> Result<(), DbError> {
        if let Some(ext) = self.input_extents {
            if ext != (width, height) {
                return Err(DbError::ShapeMismatch(format!(
                    "model expects {}x{}, image is {width}x{height}",
                    ext.0, ext.1
                )));
            }
        }
        match self.network.output_shape(&[1, height, width]) {
            Ok(s) if s == [1, height, width] => Ok(()),
            Ok(s) => Err(DbError::ShapeMismatch(format!(
                "model maps 1x{height}x{width} to {s:?}"
            ))),
            Err(e) => Err(DbError::ShapeMismatch(e.to_string())),
        }
    }

    /// `denormalize(G(normalize(img)))`.
    pub fn run(&self, img: &ImageBuffer) -> Result<ImageBuffer, DbError> {
        self.check_accepts(img.width(), img.height())?;
        let x = normalize(img)
            .reshape(vec![1, 1, img.height(), img.width()])
            .map_err(|e| DbError::ShapeMismatch(e.to_string()))?;
        let y = self
            .network
            .predict(&x)
            .map_err(|e| DbError::ShapeMismatch(e.to_string()))?;
        denormalize(&y).map_err(|e| DbError::ShapeMismatch(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        let layers = self.network.layers();
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for layer in layers {
            let (kind, extents) = encode_layer(layer);
            out.push(kind);
            out.push(extents.len() as u8);
            for e in extents {
                out.extend_from_slice(&e.to_le_bytes());
            }
        }
        let params = self.network.params();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for t in params {
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.training_seed.to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DbError> {
        let corrupt = |msg: String| DbError::CorruptModel(msg);
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format version {version} (reader supports {FORMAT_VERSION})"
            )));
        }
        if bytes.len() < 12 {
            return Err(corrupt("truncated header".into()));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(corrupt(format!(
                "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let mut r = Reader {
            bytes: body,
            pos: 8,
        };
        let layer_count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(layer_count.min(1024));
        for _ in 0..layer_count {
            let kind = r.u8()?;
            let n = r.u8()? as usize;
            let extents = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            layers.push(decode_layer(kind, &extents)?);
        }
        let tensor_count = r.u32()? as usize;
        let mut params = Vec::with_capacity(tensor_count.min(1024));
        for _ in 0..tensor_count {
            let rank = r.u8()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| corrupt("tensor size overflows".into()))?;
            let raw = r.take(
                n.checked_mul(4)
                    .ok_or_else(|| corrupt("tensor size overflows".into()))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            params.push(Tensor::new(dims, data).map_err(|e| corrupt(e.to_string()))?);
        }
        let training_seed = r.u64()?;
        if r.pos != body.len() {
            return Err(corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        let network = Network::from_parts(Role::Generator, layers, params)
            .map_err(|e| corrupt(e.to_string()))?;
        Ok(Self {
            network,
            input_extents: None,
            training_seed,
            format_version: version,
        })
    }
}

pub fn save_model(model: &GeneratorModel, path: &Path) -> Result<(), DbError> {
    std::fs::write(path, model.to_bytes()).map_err(|e| DbError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GeneratorModel, DbError> {
    let bytes = std::fs::read(path).map_err(|e| DbError::io(path, e))?;
    GeneratorModel::from_bytes(&bytes)
}

fn encode_layer(layer: &LayerSpec) -> (u8, Vec<u32>) {
    match *layer {
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => (
            KIND_CONV,
            [in_channels, out_channels, kernel, stride, padding]
                .map(|v| v as u32)
                .to_vec(),
        ),
        LayerSpec::TransposedConv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => (
            KIND_TCONV,
            [in_channels, out_channels, kernel, stride, padding]
                .map(|v| v as u32)
                .to_vec(),
        ),
        LayerSpec::Dense { inputs, outputs } => (KIND_DENSE, vec![inputs as u32, outputs as u32]),
        // The slope travels as its IEEE-754 bit pattern.
        LayerSpec::LeakyRelu { slope } => (KIND_LEAKY, vec![slope.to_bits()]),
        LayerSpec::Tanh => (KIND_TANH, Vec::new()),
    }
}

fn decode_layer(kind: u8, e: &[u32]) -> Result<LayerSpec, DbError> {
    let u = |i: usize| e[i] as usize;
    let layer = match (kind, e.len()) {
        (KIND_CONV, 5) => LayerSpec::conv(u(0), u(1), u(2), u(3), u(4)),
        (KIND_TCONV, 5) => LayerSpec::transposed_conv(u(0), u(1), u(2), u(3), u(4)),
        (KIND_DENSE, 2) => LayerSpec::dense(u(0), u(1)),
        (KIND_LEAKY, 1) => LayerSpec::leaky_relu(f32::from_bits(e[0])),
        (KIND_TANH, 0) => LayerSpec::Tanh,
        _ => {
            return Err(DbError::CorruptModel(format!(
                "unknown layer kind {kind} with {} extents",
                e.len()
            )))
        }
    };
    layer
        .validate()
        .map_err(|err| DbError::CorruptModel(err.to_string()))?;
    Ok(layer)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DbError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                DbError::CorruptModel(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DbError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DbError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, DbError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}
