//! Self-describing little-endian checkpoint container.
//!
//! Layout: magic, version, architecture string, mode byte, `t_max`, then one
//! record per layer (kind, neuron parameters, rates, weight shape header and
//! row-major `f64` values; dense weights are stored `n_out × n_in`), then a
//! scaling-factor block when the mode is binary.

use std::io::{Read, Write};
use std::path::Path;

use crate::binary::{AlphaGranularity, BinaryState};
use crate::dynamics::NeuronParams;
use crate::error::{Error, Result};
use crate::harness::config::{parse_architecture_tokens, Mode};
use crate::layers::{Layer, LayerKind, LayerState, Network};

const MAGIC: &[u8; 8] = b"STIDICKP";
const VERSION: u32 = 1;

/// A network plus the architecture string it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: String,
    pub network: Network,
}

impl Checkpoint {
    /// Fails when only some trainable layers are binary.
    pub fn new(architecture: impl Into<String>, network: Network) -> Result<Self> {
        let states = network.layers.iter().filter_map(|l| l.state.as_ref());
        let binary = states.clone().filter(|s| s.binary.is_some()).count();
        if binary != 0 && binary != states.count() {
            return Err(Error::Mode("network mixes binary and real-valued layers".into()));
        }
        Ok(Self { architecture: architecture.into(), network })
    }

    pub fn mode(&self) -> Mode {
        if self.network.is_binary() {
            Mode::Binary
        } else {
            Mode::Real
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        put_u32(&mut w, self.architecture.len() as u32);
        w.extend_from_slice(self.architecture.as_bytes());
        w.push(match self.mode() {
            Mode::Real => 0,
            Mode::Binary => 1,
        });
        put_u32(&mut w, self.network.t_max);
        put_u32(&mut w, self.network.layers.len() as u32);
        for l in &self.network.layers {
            w.push(match l.spec.kind {
                LayerKind::Conv { .. } => 0,
                LayerKind::Pool { .. } => 1,
                LayerKind::Dense { .. } => 2,
            });
            put_u32(&mut w, l.spec.params.tau1);
            put_u32(&mut w, l.spec.params.tau2);
            put_f64(&mut w, l.spec.params.v_th);
            let Some(s) = &l.state else { continue };
            put_f64(&mut w, s.eta);
            put_f64(&mut w, s.beta);
            let dims = l.spec.weight_dims();
            put_u32(&mut w, dims.len() as u32);
            for d in &dims {
                put_u32(&mut w, *d as u32);
            }
            match l.spec.kind {
                LayerKind::Dense { n_out } => {
                    let n_in = l.spec.input.len();
                    for o in 0..n_out {
                        for i in 0..n_in {
                            put_f64(&mut w, s.weights[i * n_out + o]);
                        }
                    }
                }
                _ => s.weights.iter().for_each(|&x| put_f64(&mut w, x)),
            }
        }
        if self.mode() == Mode::Binary {
            for s in self.network.layers.iter().filter_map(|l| l.state.as_ref()) {
                let b = s.binary.as_ref().expect("binary checkpoints are binary in every layer");
                w.push(match b.granularity {
                    AlphaGranularity::PerLayer => 0,
                    AlphaGranularity::PerFilter => 1,
                });
                put_f64(&mut w, b.mu);
                put_u32(&mut w, b.alpha.len() as u32);
                b.alpha.iter().for_each(|&a| put_f64(&mut w, a));
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32()? as usize;
        let architecture = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Format("architecture string is not UTF-8".into()))?;
        let arch = parse_architecture_tokens(&architecture)?;
        let binary = match r.u8()? {
            0 => false,
            1 => true,
            m => return Err(Error::Format(format!("unknown mode byte {m}"))),
        };
        let t_max = r.u32()?;
        let n_layers = r.u32()? as usize;
        if n_layers != arch.layers.len() {
            return Err(Error::Format(format!("{n_layers} layer records for architecture {architecture}")));
        }
        let mut params = Vec::with_capacity(n_layers);
        let mut raw = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let kind = r.u8()?;
            let p = NeuronParams::new(r.u32()?, r.u32()?, r.f64()?, t_max)?;
            params.push(p);
            let state = if kind == 1 {
                None
            } else {
                let (eta, beta) = (r.f64()?, r.f64()?);
                let nd = r.u32()? as usize;
                let dims: Vec<usize> = (0..nd).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
                let count: usize = dims.iter().product();
                let values: Vec<f64> = (0..count).map(|_| r.f64()).collect::<Result<_>>()?;
                Some((eta, beta, dims, values))
            };
            raw.push((kind, state));
        }
        let specs = arch.specs(&params)?;
        let mut layers = Vec::with_capacity(n_layers);
        for (spec, (kind, state)) in specs.into_iter().zip(raw) {
            let expect = match spec.kind {
                LayerKind::Conv { .. } => 0,
                LayerKind::Pool { .. } => 1,
                LayerKind::Dense { .. } => 2,
            };
            if kind != expect {
                return Err(Error::Format(format!("layer kind {kind} does not match {architecture}")));
            }
            let state = match state {
                None => None,
                Some((eta, beta, dims, values)) => {
                    if dims != spec.weight_dims() {
                        return Err(Error::Format(format!("weight shape {dims:?} for a {:?} layer", spec.kind)));
                    }
                    let mut s = LayerState::zeros(&spec, eta, beta);
                    match spec.kind {
                        LayerKind::Dense { n_out } => {
                            let n_in = spec.input.len();
                            for o in 0..n_out {
                                for i in 0..n_in {
                                    s.weights[i * n_out + o] = values[o * n_in + i];
                                }
                            }
                        }
                        _ => s.weights = values,
                    }
                    Some(s)
                }
            };
            layers.push(Layer { spec, state });
        }
        if binary {
            for l in layers.iter_mut() {
                let Some(s) = l.state.as_mut() else { continue };
                let granularity = match r.u8()? {
                    0 => AlphaGranularity::PerLayer,
                    1 => AlphaGranularity::PerFilter,
                    g => return Err(Error::Format(format!("unknown scaling granularity {g}"))),
                };
                let mu = r.f64()?;
                let n = r.u32()? as usize;
                let alpha = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
                s.binary = Some(BinaryState::new(&l.spec, granularity, alpha, mu)?);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let network = Network::new(arch.input_shape(), t_max, layers)?;
        Ok(Self { architecture, network })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct Reader<'a> {
    pub(crate) buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::Length(format!("needed {n} bytes at offset {}", self.pos)));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(mode: Mode) -> Checkpoint {
        let mut cfg = RunConfig::parse("architecture = 10x10-3C3-P2-5-2\nlayer.1.init = -1, 1").unwrap();
        cfg.mode = mode;
        cfg.layers[0].alpha_granularity = AlphaGranularity::PerFilter;
        let net = cfg.build_network(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        Checkpoint::new(cfg.architecture.to_string(), net).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        for mode in [Mode::Real, Mode::Binary] {
            let c = sample(mode);
            let bytes = c.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_bytes(), bytes);
            assert_eq!(back.mode(), mode);
        }
    }

    #[test]
    fn dense_records_are_output_major() {
        let c = sample(Mode::Real);
        let l = &c.network.layers[3];
        let s = l.state.as_ref().unwrap();
        let bytes = c.to_bytes();
        // the output layer's values are the last 2 * 5 doubles of the file
        let tail = &bytes[bytes.len() - 80..];
        let first = f64::from_le_bytes(tail[..8].try_into().unwrap());
        let second = f64::from_le_bytes(tail[8..16].try_into().unwrap());
        assert_eq!(first, s.dense_weight(&l.spec, 0, 0));
        assert_eq!(second, s.dense_weight(&l.spec, 0, 1));
    }

    #[test]
    fn rejects_damaged_files() {
        let bytes = sample(Mode::Binary).to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Length(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.ckpt");
        let c = sample(Mode::Real);
        c.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), c);
    }
}
