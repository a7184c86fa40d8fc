//! Binary model blobs.
//!
//! Layout: `b"SANZ"`, version byte, input width (u32), layer count (u32),
//! per layer width (u32) and activation code (u8), head code (u8),
//! parameter count (u64), then every parameter as a little-endian `f32`
//! in layer order (weights row-major, then bias). Integers are little-endian.

use super::net::{Activation, Head, LayerSpec, Network, NetworkSpec, ParamSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SANZ";
pub const VERSION: u8 = 1;

pub fn encode_network(net: &Network) -> Vec<u8> {
    let spec = &net.spec;
    let mut out = Vec::with_capacity(32 + 4 * net.params.total_count());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(spec.input as u32).to_le_bytes());
    out.extend_from_slice(&(spec.layers.len() as u32).to_le_bytes());
    for l in &spec.layers {
        out.extend_from_slice(&(l.width as u32).to_le_bytes());
        out.push(l.activation.code());
    }
    out.push(spec.head.code());
    out.extend_from_slice(&(net.params.total_count() as u64).to_le_bytes());
    for &v in net.params.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!("model blob ends inside {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Decodes one blob and returns it with the number of bytes consumed.
pub fn decode_network_prefix(buf: &[u8]) -> Result<(Network, usize)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("model blob does not start with SANZ".into()));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version as u32,
            expected: VERSION as u32,
        });
    }
    let input = r.u32("input width")? as usize;
    let n_layers = r.u32("layer count")? as usize;
    if n_layers > 1 << 16 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let width = r.u32("layer width")? as usize;
        let code = r.u8("activation")?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
        layers.push(LayerSpec { width, activation });
    }
    let code = r.u8("head")?;
    let head = Head::from_code(code).ok_or_else(|| Error::Format(format!("unknown head code {code}")))?;
    let spec = NetworkSpec { input, layers, head };
    spec.validate()?;
    let count = r.u64("parameter count")? as usize;
    if count != spec.param_count() {
        return Err(Error::Format(format!(
            "blob declares {count} parameters, layout needs {}",
            spec.param_count()
        )));
    }
    let raw = r.take(count * 4, "parameters")?;
    let mut params = ParamSet::zeros(&spec);
    for (p, chunk) in params.iter_mut().zip(raw.chunks_exact(4)) {
        *p = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Ok((Network { spec, params }, r.pos))
}

pub fn decode_network(buf: &[u8]) -> Result<Network> {
    let (net, used) = decode_network_prefix(buf)?;
    if used != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after model blob", buf.len() - used)));
    }
    Ok(net)
}
