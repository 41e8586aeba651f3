//! Run configuration: a flat `key = value` file.
//!
//! ```text
//! architecture = 28x28-40C5-P2-1000-10
//! epochs = 30
//! layer.1.eta = 0.001
//! layer.1.init = 0, 2
//! ```
//!
//! `layer.N` counts every layer of the architecture from 1, pooling
//! included (pooling layers take no keys).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use crate::binary::{AlphaGranularity, BinaryState};
use crate::dynamics::NeuronParams;
use crate::error::{Error, Result};
use crate::layers::{Layer, LayerKind, LayerSpec, LayerState, Network};
use crate::learning::{OutputTargetRule, TrainConfig};
use crate::raster::Shape;

/// Dataset root used when the config names none.
pub const DATA_DIR_ENV: &str = "STIDI_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Real,
    Binary,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Mode::Real),
            "binary" => Ok(Mode::Binary),
            _ => Err(Error::Config(format!("mode must be real or binary, not {s:?}"))),
        }
    }
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Real => "real",
            Mode::Binary => "binary",
        }
    }
}

/// One parsed architecture token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchToken {
    Conv { maps: usize, kernel: usize },
    Pool { window: usize },
    Dense { n_out: usize },
}

/// Parsed architecture string such as `28x28-40C5-P2-1000-10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub layers: Vec<ArchToken>,
}

impl Architecture {
    pub fn input_shape(&self) -> Shape {
        Shape::Maps { maps: 1, height: self.height, width: self.width }
    }

    /// Resolve shapes, giving layer `i` the neuron parameters `params[i]`.
    pub fn specs(&self, params: &[NeuronParams]) -> Result<Vec<LayerSpec>> {
        if params.len() != self.layers.len() {
            return Err(Error::Config(format!("{} parameter sets for {} layers", params.len(), self.layers.len())));
        }
        let mut shape = self.input_shape();
        let mut out = Vec::with_capacity(self.layers.len());
        for (tok, p) in self.layers.iter().zip(params) {
            let kind = match *tok {
                ArchToken::Conv { maps, kernel } => LayerKind::Conv { maps, kernel },
                ArchToken::Pool { window } => LayerKind::Pool { window, stride: window },
                ArchToken::Dense { n_out } => LayerKind::Dense { n_out },
            };
            let spec = LayerSpec::new(kind, shape, *p)?;
            shape = spec.output;
            out.push(spec);
        }
        Ok(out)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)?;
        for t in &self.layers {
            match t {
                ArchToken::Conv { maps, kernel } => write!(f, "-{maps}C{kernel}")?,
                ArchToken::Pool { window } => write!(f, "-P{window}")?,
                ArchToken::Dense { n_out } => write!(f, "-{n_out}")?,
            }
        }
        Ok(())
    }
}

fn parse_count(tok: &str, what: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::Config(format!("bad {what} in architecture token {tok:?}"))),
    }
}

/// Parse an architecture string. Shapes are not checked here; see
/// [`parse_architecture`] for the validated form.
pub fn parse_architecture_tokens(text: &str) -> Result<Architecture> {
    let mut parts = text.trim().split('-');
    let input = parts.next().unwrap_or_default();
    let (h, w) = input
        .split_once(['x', 'X', '*'])
        .ok_or_else(|| Error::Config(format!("architecture must start with HxW, got {input:?}")))?;
    let (height, width) = (parse_count(h, "height")?, parse_count(w, "width")?);
    let mut layers = Vec::new();
    for tok in parts {
        let t = if let Some(k) = tok.strip_prefix(['P', 'p']) {
            ArchToken::Pool { window: parse_count(k, "pool window")? }
        } else if let Some((m, k)) = tok.split_once(['C', 'c']) {
            ArchToken::Conv { maps: parse_count(m, "map count")?, kernel: parse_count(k, "kernel")? }
        } else {
            ArchToken::Dense { n_out: parse_count(tok, "layer size")? }
        };
        layers.push(t);
    }
    Ok(Architecture { height, width, layers })
}

/// Parse and shape-check an architecture with placeholder neuron parameters.
pub fn parse_architecture(text: &str) -> Result<Vec<LayerSpec>> {
    let arch = parse_architecture_tokens(text)?;
    let p = NeuronParams::symmetric(80, 1.0, 100)?;
    arch.specs(&vec![p; arch.layers.len()])
}

/// Hyperparameters of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerConfig {
    pub tau1: u32,
    pub tau2: u32,
    pub v_th: f64,
    pub eta: f64,
    pub beta: f64,
    /// Uniform weight initialisation range.
    pub init: (f64, f64),
    pub mu: f64,
    pub alpha_init: (f64, f64),
    pub alpha_granularity: AlphaGranularity,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            tau1: 40,
            tau2: 40,
            v_th: 10.0,
            eta: 0.01,
            beta: 1.0,
            init: (0.0, 0.5),
            mu: 0.001,
            alpha_init: (0.0, 2.0),
            alpha_granularity: AlphaGranularity::PerLayer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub architecture: Architecture,
    pub layers: Vec<LayerConfig>,
    pub t_max: u32,
    pub lambda: f64,
    pub mode: Mode,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    /// Stratified training subset size; whole split when unset.
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub intensity_max: u32,
    pub clip: Option<f64>,
    pub flip_sign: bool,
}

impl RunConfig {
    /// Defaults for an architecture.
    pub fn new(architecture: &str) -> Result<Self> {
        let architecture = parse_architecture_tokens(architecture)?;
        let layers = vec![LayerConfig::default(); architecture.layers.len()];
        let cfg = Self {
            architecture,
            layers,
            t_max: 100,
            lambda: 5.0,
            mode: Mode::Real,
            epochs: 30,
            batch_size: 1,
            seed: 0,
            data_dir: None,
            train_subset: None,
            test_subset: None,
            intensity_max: 255,
            clip: None,
            flip_sign: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            if entries.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {}", n + 1, k.trim())));
            }
        }
        let arch = entries.remove("architecture").ok_or_else(|| Error::Config("missing architecture".into()))?;
        let mut cfg = Self::new(&arch)?;
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(rest) = key.strip_prefix("layer.") {
            let (idx, field) = rest.split_once('.').ok_or_else(|| Error::Config(format!("bad layer key {key:?}")))?;
            let i: usize = parse(idx, key)?;
            let n = self.layers.len();
            if i == 0 || i > n {
                return Err(Error::Config(format!("{key}: layers are numbered 1..={n}")));
            }
            if let ArchToken::Pool { .. } = self.architecture.layers[i - 1] {
                return Err(Error::Config(format!("{key}: layer {i} is a pooling layer")));
            }
            let l = &mut self.layers[i - 1];
            match field {
                "tau" => {
                    let tau: u32 = parse(value, key)?;
                    l.tau1 = tau / 2;
                    l.tau2 = tau - tau / 2;
                }
                "tau1" => l.tau1 = parse(value, key)?,
                "tau2" => l.tau2 = parse(value, key)?,
                "v_th" => l.v_th = parse(value, key)?,
                "eta" => l.eta = parse(value, key)?,
                "beta" => l.beta = parse(value, key)?,
                "init" => l.init = parse_range(value, key)?,
                "mu" => l.mu = parse(value, key)?,
                "alpha_init" => l.alpha_init = parse_range(value, key)?,
                "alpha_granularity" => {
                    l.alpha_granularity = match value {
                        "layer" => AlphaGranularity::PerLayer,
                        "filter" => AlphaGranularity::PerFilter,
                        _ => return Err(Error::Config(format!("{key}: expected layer or filter"))),
                    }
                }
                _ => return Err(Error::Config(format!("unknown key {key:?}"))),
            }
            return Ok(());
        }
        match key {
            "architecture" => {
                let arch = parse_architecture_tokens(value)?;
                if arch.layers.len() != self.layers.len() {
                    self.layers = vec![LayerConfig::default(); arch.layers.len()];
                }
                self.architecture = arch;
            }
            "t_max" => self.t_max = parse(value, key)?,
            "lambda" => self.lambda = parse(value, key)?,
            "mode" => self.mode = value.parse()?,
            "epochs" => self.epochs = parse(value, key)?,
            "batch_size" => self.batch_size = parse(value, key)?,
            "seed" => self.seed = parse(value, key)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "train_subset" => self.train_subset = Some(parse(value, key)?),
            "test_subset" => self.test_subset = Some(parse(value, key)?),
            "intensity_max" => self.intensity_max = parse(value, key)?,
            "clip" => self.clip = Some(parse(value, key)?),
            "flip_sign" => self.flip_sign = parse(value, key)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.specs()?;
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if matches!(self.architecture.layers[i], ArchToken::Pool { .. }) {
                continue;
            }
            let n = i + 1;
            if !(l.eta > 0.0 && l.beta > 0.0 && l.mu > 0.0) {
                return Err(Error::Config(format!("layer {n}: eta, beta and mu must be positive")));
            }
            if l.init.0 > l.init.1 || l.alpha_init.0 > l.alpha_init.1 {
                return Err(Error::Config(format!("layer {n}: empty initialisation range")));
            }
        }
        Ok(())
    }

    pub fn neuron_params(&self) -> Result<Vec<NeuronParams>> {
        self.layers.iter().map(|l| NeuronParams::new(l.tau1, l.tau2, l.v_th, self.t_max)).collect()
    }

    pub fn specs(&self) -> Result<Vec<LayerSpec>> {
        self.architecture.specs(&self.neuron_params()?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { rule: OutputTargetRule { lambda: self.lambda }, flip_sign: self.flip_sign, clip: self.clip }
    }

    /// Dataset root: the config key, else the environment variable.
    pub fn resolve_data_dir(&self) -> Result<PathBuf> {
        if let Some(d) = &self.data_dir {
            return Ok(d.clone());
        }
        std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config(format!("no data_dir in the config and {DATA_DIR_ENV} is unset")))
    }

    /// Fresh network with weights (and scaling factors in binary mode) drawn from `rng`.
    pub fn build_network<R: Rng>(&self, rng: &mut R) -> Result<Network> {
        let specs = self.specs()?;
        let mut layers = Vec::with_capacity(specs.len());
        for (spec, lc) in specs.into_iter().zip(&self.layers) {
            let state = if spec.is_trainable() {
                let mut s = LayerState::uniform(&spec, lc.init.0, lc.init.1, lc.eta, lc.beta, rng);
                if self.mode == Mode::Binary {
                    let n = lc.alpha_granularity.count(&spec);
                    let (lo, hi) = lc.alpha_init;
                    let alpha = (0..n).map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo }).collect();
                    s.binary = Some(BinaryState::new(&spec, lc.alpha_granularity, alpha, lc.mu)?);
                }
                Some(s)
            } else {
                None
            };
            layers.push(Layer { spec, state });
        }
        Network::new(self.architecture.input_shape(), self.t_max, layers)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "architecture = {}", self.architecture);
        let _ = writeln!(s, "t_max = {}", self.t_max);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(d) = &self.data_dir {
            let _ = writeln!(s, "data_dir = {}", d.display());
        }
        if let Some(n) = self.train_subset {
            let _ = writeln!(s, "train_subset = {n}");
        }
        if let Some(n) = self.test_subset {
            let _ = writeln!(s, "test_subset = {n}");
        }
        let _ = writeln!(s, "intensity_max = {}", self.intensity_max);
        if let Some(c) = self.clip {
            let _ = writeln!(s, "clip = {c}");
        }
        let _ = writeln!(s, "flip_sign = {}", self.flip_sign);
        for (i, (l, tok)) in self.layers.iter().zip(&self.architecture.layers).enumerate() {
            if matches!(tok, ArchToken::Pool { .. }) {
                continue;
            }
            let n = i + 1;
            let _ = writeln!(s, "layer.{n}.tau1 = {}", l.tau1);
            let _ = writeln!(s, "layer.{n}.tau2 = {}", l.tau2);
            let _ = writeln!(s, "layer.{n}.v_th = {}", l.v_th);
            let _ = writeln!(s, "layer.{n}.eta = {}", l.eta);
            let _ = writeln!(s, "layer.{n}.beta = {}", l.beta);
            let _ = writeln!(s, "layer.{n}.init = {}, {}", l.init.0, l.init.1);
            let _ = writeln!(s, "layer.{n}.mu = {}", l.mu);
            let _ = writeln!(s, "layer.{n}.alpha_init = {}, {}", l.alpha_init.0, l.alpha_init.1);
            let g = match l.alpha_granularity {
                AlphaGranularity::PerLayer => "layer",
                AlphaGranularity::PerFilter => "filter",
            };
            let _ = writeln!(s, "layer.{n}.alpha_granularity = {g}");
        }
        s
    }
}

fn parse<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_range(v: &str, key: &str) -> Result<(f64, f64)> {
    let inner = v.trim().trim_start_matches('[').trim_end_matches(']');
    let (a, b) = inner.split_once(',').ok_or_else(|| Error::Config(format!("{key}: expected lo, hi")))?;
    Ok((parse(a, key)?, parse(b, key)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn architecture_examples() {
        let specs = parse_architecture("28x28-40C5-P2-1000-10").unwrap();
        let kinds: Vec<LayerKind> = specs.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                LayerKind::Conv { maps: 40, kernel: 5 },
                LayerKind::Pool { window: 2, stride: 2 },
                LayerKind::Dense { n_out: 1000 },
                LayerKind::Dense { n_out: 10 },
            ]
        );
        assert_eq!(specs[1].output, Shape::Maps { maps: 40, height: 12, width: 12 });
        let single = parse_architecture("28x28-10").unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].input.len(), 784);
        assert!(matches!(parse_architecture("28x28-40C30-P2-10"), Err(Error::Shape(_))));
        for bad in ["", "28-10", "28x28-10Q", "28x28-0", "28x28-C5"] {
            assert!(parse_architecture(bad).is_err(), "{bad}");
        }
        let a = parse_architecture_tokens("28x28-20C5-P2-40C5-P2-1000-10").unwrap();
        assert_eq!(a.to_string(), "28x28-20C5-P2-40C5-P2-1000-10");
    }

    const SAMPLE: &str = "
        # dense desk-scale run
        architecture = 28x28-400-10
        lambda = 50
        seed = 7
        train_subset = 10000
        layer.1.v_th = 5
        layer.1.init = -1, 1.1
        layer.2.init = [-1.2, 1.2]
        layer.2.tau = 81
    ";

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.lambda, 50.0);
        assert_eq!(cfg.epochs, 30);
        assert_eq!(cfg.batch_size, 1);
        assert_eq!(cfg.layers[0].init, (-1.0, 1.1));
        assert_eq!(cfg.layers[1].init, (-1.2, 1.2));
        assert_eq!((cfg.layers[1].tau1, cfg.layers[1].tau2), (40, 41));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "lambda = 5",
            "architecture = 28x28-10\nbogus = 1",
            "architecture = 28x28-10\nlayer.2.eta = 1",
            "architecture = 28x28-4C3-P2-10\nlayer.2.eta = 1",
            "architecture = 28x28-10\nlayer.1.eta = 0",
            "architecture = 28x28-10\nlayer.1.init = 1, 0",
            "architecture = 28x28-10\nlambda = -1",
            "architecture = 28x28-10\nmode = ternary",
            "architecture = 28x28-10\nseed = 1\nseed = 2",
            "architecture = 28x28-10\nbatch_size = 0",
        ] {
            assert!(matches!(RunConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn builds_seeded_networks() {
        let mut cfg = RunConfig::parse("architecture = 12x12-3C5-P2-6-2").unwrap();
        cfg.mode = Mode::Binary;
        cfg.layers[0].alpha_granularity = AlphaGranularity::PerFilter;
        let a = cfg.build_network(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = cfg.build_network(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.is_binary());
        assert_eq!(a.layers[0].state.as_ref().unwrap().binary.as_ref().unwrap().alpha.len(), 3);
        assert!(a.layers[1].state.is_none());
        assert_eq!(a.layers[2].spec.input.len(), 3 * 4 * 4);
    }

    #[test]
    fn data_dir_falls_back_to_the_environment() {
        let mut cfg = RunConfig::new("28x28-10").unwrap();
        cfg.data_dir = Some(PathBuf::from("/x"));
        assert_eq!(cfg.resolve_data_dir().unwrap(), PathBuf::from("/x"));
    }
}
