//! Model checkpoint files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CSWM"
//! 4       4     format version (u32, currently 1)
//! 8       2     n_s (u16)
//! 10      2     n_m (u16)
//! 12      2     d_m (u16)
//! 14      2     reserved (u16, zero)
//! ```
//!
//! followed by every network in declaration order (sensory nets, M-nets,
//! Q-nets). Per network: layer count (u32), then per layer: in_dim (u32),
//! out_dim (u32), the row-major weight matrix (`out_dim * in_dim` f64), and
//! the biases (`out_dim` f64). Activations are not stored: hidden layers are
//! ReLU, output layers identity. Write/read round-trips are bit-exact.

use std::fs;
use std::path::Path;

use crate::cortex::{CortexConfig, CortexState};
use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, Mlp};

const MAGIC: &[u8; 4] = b"CSWM";
const VERSION: u32 = 1;

pub fn save_cortex(cortex: &CortexState, path: &Path) -> Result<()> {
    let bytes = to_bytes(cortex)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_cortex(path: &Path) -> Result<CortexState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

pub fn to_bytes(cortex: &CortexState) -> Result<Vec<u8>> {
    let cfg = cortex.config();
    for &dim in &[cfg.n_s, cfg.n_m, cfg.d_m] {
        if dim > u16::MAX as usize {
            return Err(Error::Config(format!("dimension {dim} exceeds checkpoint header range")));
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(cfg.n_s as u16).to_le_bytes());
    buf.extend_from_slice(&(cfg.n_m as u16).to_le_bytes());
    buf.extend_from_slice(&(cfg.d_m as u16).to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());

    let nets = cortex
        .sensory_nets()
        .iter()
        .chain(cortex.m_nets())
        .chain(cortex.q_nets());
    for net in nets {
        buf.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
        for layer in net.layers() {
            buf.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
            buf.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
            for w in layer.weights() {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            for b in layer.biases() {
                buf.extend_from_slice(&b.to_le_bytes());
            }
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::DataIntegrity(format!(
                "checkpoint truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("len 2")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("len 4")))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("len 8")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<CortexState> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::DataIntegrity("bad checkpoint magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::DataIntegrity(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let n_s = cur.u16()? as usize;
    let n_m = cur.u16()? as usize;
    let d_m = cur.u16()? as usize;
    let _reserved = cur.u16()?;

    let read_net = |cur: &mut Cursor, output_activation: Activation| -> Result<Mlp> {
        let n_layers = cur.u32()? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::DataIntegrity(format!(
                "implausible layer count {n_layers}"
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let in_dim = cur.u32()? as usize;
            let out_dim = cur.u32()? as usize;
            let weights = cur.f64_vec(in_dim * out_dim)?;
            let biases = cur.f64_vec(out_dim)?;
            let activation = if k + 1 < n_layers {
                Activation::Relu
            } else {
                output_activation
            };
            layers.push(
                Layer::from_params(in_dim, out_dim, weights, biases, activation)
                    .map_err(|e| Error::DataIntegrity(format!("checkpoint layer: {e}")))?,
            );
        }
        Mlp::from_layers(layers).map_err(|e| Error::DataIntegrity(format!("checkpoint net: {e}")))
    };

    // Message nets emit rectified outputs; Q outputs stay sign-unrestricted.
    let mut sensory = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        sensory.push(read_net(&mut cur, Activation::Relu)?);
    }
    let n_m_nets = if n_m > 1 { n_m } else { 0 };
    let mut m_nets = Vec::with_capacity(n_m_nets);
    for _ in 0..n_m_nets {
        m_nets.push(read_net(&mut cur, Activation::Relu)?);
    }
    let mut q_nets = Vec::with_capacity(n_m);
    for _ in 0..n_m {
        q_nets.push(read_net(&mut cur, Activation::Identity)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::DataIntegrity(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - cur.pos
        )));
    }

    // Reconstruct the configuration from the stored shapes.
    let obs_dims: Vec<usize> = sensory.iter().map(|s| s.input_dim()).collect();
    let action_counts: Vec<usize> = q_nets.iter().map(|q| q.output_dim()).collect();
    let hidden_width = q_nets
        .first()
        .map(|q| q.layers().first().expect("non-empty").out_dim())
        .unwrap_or(1);
    let config = CortexConfig {
        n_s,
        n_m,
        d_m,
        obs_dims,
        action_counts,
        hidden_width,
    };
    CortexState::from_parts(config, sensory, m_nets, q_nets)
        .map_err(|e| Error::DataIntegrity(format!("inconsistent checkpoint: {e}")))
}
