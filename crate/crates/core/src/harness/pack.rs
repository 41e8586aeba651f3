//! Bit-packed export of binary-mode networks.
//!
//! File layout: magic, version, architecture string, then per trainable
//! layer the weight count, the sign bits (eight per byte, canonical weight
//! order as in checkpoints) and the layer's scaling factors as `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::binary::{pack_signs, unpack_signs};
use crate::error::{Error, Result};
use crate::harness::checkpoint::{Checkpoint, Reader};
use crate::layers::{LayerKind, LayerSpec, LayerState, Network};

const MAGIC: &[u8; 8] = b"STIDIPAK";
const VERSION: u32 = 1;

/// Storage needed for a network's weights, raw versus packed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub weights: usize,
    /// 64-bit float per weight.
    pub real_bytes: usize,
    /// One bit per weight, rounded up to whole bytes per layer.
    pub sign_bytes: usize,
    pub alpha_count: usize,
    /// One 64-bit float per scaling factor.
    pub alpha_bytes: usize,
}

impl Footprint {
    pub fn of(net: &Network) -> Self {
        let mut f = Footprint { weights: 0, real_bytes: 0, sign_bytes: 0, alpha_count: 0, alpha_bytes: 0 };
        for l in &net.layers {
            let Some(s) = &l.state else { continue };
            let n = l.spec.weight_len();
            f.weights += n;
            f.real_bytes += 8 * n;
            f.sign_bytes += n.div_ceil(8);
            let a = s.binary.as_ref().map_or(0, |b| b.alpha.len());
            f.alpha_count += a;
            f.alpha_bytes += 8 * a;
        }
        f
    }

    pub fn packed_bytes(&self) -> usize {
        self.sign_bytes + self.alpha_bytes
    }

    /// `real_bytes / packed_bytes`, scaling-factor overhead included.
    pub fn reduction(&self) -> f64 {
        self.real_bytes as f64 / self.packed_bytes() as f64
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "weights: {}", self.weights);
        let _ = writeln!(s, "real-valued bytes (f64): {}", self.real_bytes);
        let _ = writeln!(s, "packed sign bytes: {}", self.sign_bytes);
        let _ = writeln!(s, "scaling factors: {} ({} bytes)", self.alpha_count, self.alpha_bytes);
        let _ = writeln!(s, "packed total bytes: {}", self.packed_bytes());
        let _ = writeln!(s, "reduction: {:.2}x", self.reduction());
        s
    }
}

/// Weights of one layer in canonical order (`n_out × n_in` for dense layers).
fn canonical_weights(spec: &LayerSpec, s: &LayerState) -> Vec<f64> {
    match spec.kind {
        LayerKind::Dense { n_out } => {
            let n_in = spec.input.len();
            (0..n_out).flat_map(|o| (0..n_in).map(move |i| s.weights[i * n_out + o])).collect()
        }
        _ => s.weights.clone(),
    }
}

pub fn packed_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    if !ckpt.network.is_binary() {
        return Err(Error::Mode("only binary-mode checkpoints can be packed".into()));
    }
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    w.extend_from_slice(&VERSION.to_le_bytes());
    w.extend_from_slice(&(ckpt.architecture.len() as u32).to_le_bytes());
    w.extend_from_slice(ckpt.architecture.as_bytes());
    for l in &ckpt.network.layers {
        let Some(s) = &l.state else { continue };
        let b = s.binary.as_ref().ok_or_else(|| Error::Mode("layer without scaling factors".into()))?;
        w.extend_from_slice(&(l.spec.weight_len() as u32).to_le_bytes());
        w.extend_from_slice(&pack_signs(&canonical_weights(&l.spec, s)));
        w.extend_from_slice(&(b.alpha.len() as u32).to_le_bytes());
        b.alpha.iter().for_each(|a| w.extend_from_slice(&a.to_le_bytes()));
    }
    Ok(w)
}

/// Write the packed file and return the footprint it realises.
pub fn export_packed(ckpt: &Checkpoint, path: &Path) -> Result<Footprint> {
    std::fs::write(path, packed_bytes(ckpt)?)?;
    Ok(Footprint::of(&ckpt.network))
}

/// Sign weights and scaling factors of one layer read back from a packed file.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedLayer {
    pub signs: Vec<i8>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedModel {
    pub architecture: String,
    pub layers: Vec<PackedLayer>,
}

pub fn read_packed(bytes: &[u8]) -> Result<PackedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a packed model (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported packed version {version}")));
    }
    let n = r.u32()? as usize;
    let architecture =
        String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("architecture is not UTF-8".into()))?;
    let mut layers = Vec::new();
    while r.pos < bytes.len() {
        let n = r.u32()? as usize;
        let signs = unpack_signs(r.take(n.div_ceil(8))?, n)?;
        let k = r.u32()? as usize;
        let alpha = (0..k).map(|_| r.f64()).collect::<Result<_>>()?;
        layers.push(PackedLayer { signs, alpha });
    }
    Ok(PackedModel { architecture, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::{binarize, AlphaGranularity};
    use crate::harness::config::{Mode, RunConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ckpt(arch: &str, mode: Mode, g: AlphaGranularity) -> Checkpoint {
        let mut cfg = RunConfig::new(arch).unwrap();
        cfg.mode = mode;
        for l in &mut cfg.layers {
            l.init = (-1.0, 1.0);
            l.alpha_granularity = g;
        }
        let net = cfg.build_network(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        Checkpoint::new(arch, net).unwrap()
    }

    #[test]
    fn filter_bank_arithmetic() {
        // 40 filters of 5x5 on one input map
        let c = ckpt("5x5-40C5", Mode::Binary, AlphaGranularity::PerFilter);
        let f = Footprint::of(&c.network);
        assert_eq!((f.weights, f.sign_bytes, f.alpha_count), (1000, 125, 40));
        let c = ckpt("10x80-10", Mode::Binary, AlphaGranularity::PerLayer);
        let f = Footprint::of(&c.network);
        assert_eq!(f.sign_bytes, 1000);
        let c = ckpt("1x80-10", Mode::Binary, AlphaGranularity::PerLayer);
        assert_eq!(Footprint::of(&c.network).sign_bytes, 100);
    }

    #[test]
    fn experiment_architecture_shrinks_enough() {
        let c = ckpt("28x28-40C5-P2-1000-10", Mode::Binary, AlphaGranularity::PerFilter);
        assert!(Footprint::of(&c.network).reduction() >= 16.0);
    }

    #[test]
    fn round_trip_reproduces_signs() {
        let c = ckpt("8x8-3C3-P2-7-4", Mode::Binary, AlphaGranularity::PerFilter);
        let bytes = packed_bytes(&c).unwrap();
        assert_eq!(bytes.len(), 8 + 4 + 4 + c.architecture.len() + 3 * 8 + Footprint::of(&c.network).packed_bytes());
        let back = read_packed(&bytes).unwrap();
        assert_eq!(back.architecture, c.architecture);
        let trainable: Vec<_> = c.network.layers.iter().filter(|l| l.state.is_some()).collect();
        assert_eq!(back.layers.len(), trainable.len());
        for (p, l) in back.layers.iter().zip(trainable) {
            let s = l.state.as_ref().unwrap();
            assert_eq!(p.signs, binarize(&canonical_weights(&l.spec, s)));
            assert_eq!(p.alpha, s.binary.as_ref().unwrap().alpha);
        }
    }

    #[test]
    fn real_checkpoints_are_refused() {
        let c = ckpt("4x4-2", Mode::Real, AlphaGranularity::PerLayer);
        assert!(matches!(packed_bytes(&c), Err(Error::Mode(_))));
    }
}
