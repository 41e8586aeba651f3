//! Independent oracles and pre-flight checks for the engine.
//!
//! Nothing here is used by training; the point is to cross-check the fast
//! integer-grid code against slow, obviously-correct reimplementations.

pub mod gradient;
pub mod oracle;
pub mod smoke;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::NeuronParams;
use crate::layers::{Layer, LayerKind, LayerSpec, LayerState, Network};
use crate::raster::{Shape, SpikeRaster};

pub use gradient::{finite_difference_suite, FdReport};
pub use oracle::{fine_grid_spike_oracle, oracle_agrees, OracleTrace};
pub use smoke::{convergence_smoke, mean_accuracy, smoke_sweep, SmokeConfig, SmokeReport};

/// Default number of fine steps per integer step.
pub const DEFAULT_RESOLUTION: u32 = 100;

/// Ranges from which [`TinyNetCase::generate`] draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TinyNetConfig {
    pub max_layers: usize,
    pub max_neurons: usize,
    pub weights: (f64, f64),
    pub v_th: (f64, f64),
    pub tau: (u32, u32),
    pub t_max: u32,
    /// Probability that an input neuron spikes at all.
    pub input_rate: f64,
}

impl Default for TinyNetConfig {
    fn default() -> Self {
        Self {
            max_layers: 3,
            max_neurons: 12,
            weights: (-0.5, 1.0),
            v_th: (0.3, 2.0),
            tau: (2, 12),
            t_max: 60,
            input_rate: 0.85,
        }
    }
}

impl TinyNetConfig {
    /// Magnitude that weight perturbations are scaled by.
    pub fn weight_scale(&self) -> f64 {
        self.weights.0.abs().max(self.weights.1.abs()).max(f64::MIN_POSITIVE)
    }
}

/// A small seeded dense network together with one input raster.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyNetCase {
    pub seed: u64,
    pub config: TinyNetConfig,
    pub network: Network,
    pub input: SpikeRaster,
}

impl TinyNetCase {
    pub fn generate(seed: u64, config: TinyNetConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let n_layers = rng.gen_range(1..=c.max_layers.max(1));
        let n_in = rng.gen_range(1..=c.max_neurons.max(1));
        let input_shape = Shape::Flat(n_in);
        let mut shape = input_shape;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n_out = rng.gen_range(1..=c.max_neurons.max(1));
            let tau1 = rng.gen_range(c.tau.0..=c.tau.1);
            let tau2 = rng.gen_range(c.tau.0..=c.tau.1);
            let v_th = rng.gen_range(c.v_th.0..=c.v_th.1);
            let params = NeuronParams::new(tau1, tau2, v_th, c.t_max).expect("generated parameters are valid");
            let spec = LayerSpec::new(LayerKind::Dense { n_out }, shape, params).expect("dense layers always fit");
            let state = LayerState::uniform(&spec, c.weights.0, c.weights.1, 0.0, 0.0, &mut rng);
            shape = spec.output;
            layers.push(Layer { spec, state: Some(state) });
        }
        let times: Vec<Option<u32>> =
            (0..n_in).map(|_| rng.gen_bool(c.input_rate).then(|| rng.gen_range(0..=c.t_max))).collect();
        let input = SpikeRaster::from_times(input_shape, c.t_max, &times).expect("times lie within the horizon");
        let network = Network::new(input_shape, c.t_max, layers).expect("generated layers chain");
        Self { seed, config, network, input }
    }

    /// Dense weights of layer `l` as `[out][in]`.
    pub fn weight_rows(&self, l: usize) -> Vec<Vec<f64>> {
        let layer = &self.network.layers[l];
        let state = layer.state.as_ref().expect("tiny cases are all dense");
        (0..layer.spec.output.len())
            .map(|j| (0..layer.spec.input.len()).map(|i| state.dense_weight(&layer.spec, j, i)).collect())
            .collect()
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Options for [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub cases: u64,
    pub resolution: u32,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { cases: 50, resolution: DEFAULT_RESOLUTION, seed: 0 }
    }
}

/// Finite-difference sweep over `cases` seeded tiny networks.
pub fn gradient_sweep(cfg: &VerifyConfig) -> SuiteResult {
    let mut total = FdReport::default();
    for k in 0..cfg.cases {
        let case = TinyNetCase::generate(cfg.seed + k, TinyNetConfig::default());
        total.merge(&finite_difference_suite(&case, 1e-4 * case.config.weight_scale(), cfg.resolution));
    }
    SuiteResult { name: "gradients", passed: total.passes(), detail: total.to_string() }
}

/// Fine-grid oracle sweep over `cases` seeded tiny networks.
pub fn oracle_sweep(cfg: &VerifyConfig) -> SuiteResult {
    let (mut agree, mut spikes) = (0, 0usize);
    for k in 0..cfg.cases {
        let case = TinyNetCase::generate(cfg.seed + k, TinyNetConfig::default());
        let trace = fine_grid_spike_oracle(&case, cfg.resolution);
        spikes += trace.spike_count();
        agree += usize::from(oracle_agrees(&case, &trace));
    }
    SuiteResult {
        name: "oracle",
        passed: agree as u64 == cfg.cases,
        detail: format!("{agree}/{} cases agree ({spikes} spikes checked)", cfg.cases),
    }
}

/// Seeds the smoke suites average over.
pub const SMOKE_SEEDS: u64 = 6;

/// Every suite, in a fixed order: gradients, oracle, then the learning smoke
/// test with its two ablations.
pub fn run_all(cfg: &VerifyConfig) -> Vec<SuiteResult> {
    let mut out = vec![gradient_sweep(cfg), oracle_sweep(cfg)];
    let seeds = cfg.seed..cfg.seed + SMOKE_SEEDS;
    let base = SmokeConfig::default();
    let real = smoke_sweep(&base, seeds.clone());
    let real_acc = mean_accuracy(&real);
    let worst = real.iter().min_by(|a, b| a.accuracy.total_cmp(&b.accuracy)).expect("at least one seed");
    out.push(SuiteResult {
        name: "smoke",
        passed: real.iter().all(SmokeReport::passed),
        detail: format!("{}/{} seeds pass; worst: {worst}", real.iter().filter(|r| r.passed()).count(), real.len()),
    });
    let no_margin = mean_accuracy(&smoke_sweep(&SmokeConfig { lambda: 0.0, ..base }, seeds.clone()));
    out.push(SuiteResult {
        name: "smoke lambda=0",
        passed: no_margin >= smoke::NO_MARGIN_ACCURACY,
        detail: format!("mean accuracy {no_margin:.3} (with margin {real_acc:.3})"),
    });
    let binary = mean_accuracy(&smoke_sweep(&SmokeConfig { binary: true, ..base }, seeds));
    out.push(SuiteResult {
        name: "smoke binary",
        passed: binary + smoke::BINARY_GAP >= real_acc,
        detail: format!("mean accuracy {binary:.3} (real {real_acc:.3})"),
    });
    out
}
