//! A tiny learnable task that training has to solve before anything bigger is attempted.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::config::{Mode, RunConfig};
use crate::layers::{classify, network_forward};
use crate::learning::{binary_train_step, train_step};
use crate::raster::{Shape, SpikeRaster};

/// Two classes of fixed rasters over disjoint halves of a 4x5 input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmokeConfig {
    pub lambda: f64,
    pub binary: bool,
    pub epochs: usize,
    pub per_class: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for SmokeConfig {
    fn default() -> Self {
        Self { lambda: 5.0, binary: false, epochs: 100, per_class: 20, hidden: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmokeReport {
    /// Accuracy on the training rasters after the last epoch.
    pub accuracy: f64,
    /// `losses[epoch][layer]`: mean per-sample loss during that epoch.
    pub losses: Vec<Vec<f64>>,
}

pub const SMOKE_ACCURACY: f64 = 0.95;
/// Mean accuracy the margin-free ablation must reach: halfway from chance to perfect.
pub const NO_MARGIN_ACCURACY: f64 = 0.75;
/// Largest mean accuracy binary mode may give up against real mode.
pub const BINARY_GAP: f64 = 0.05;
pub const SMOOTHING_WINDOW: usize = 5;
/// Hidden-layer losses sit around 1e-10 and wander at that scale; this is a
/// tenth of a time step of displacement, squared and normalised.
pub const LOSS_SLACK: f64 = 1e-6;

impl SmokeReport {
    /// Per-layer loss after a moving average over [`SMOOTHING_WINDOW`] epochs.
    pub fn smoothed(&self) -> Vec<Vec<f64>> {
        let n_layers = self.losses.first().map_or(0, Vec::len);
        (0..n_layers)
            .map(|l| {
                self.losses
                    .windows(SMOOTHING_WINDOW.min(self.losses.len()).max(1))
                    .map(|w| w.iter().map(|e| e[l]).sum::<f64>() / w.len() as f64)
                    .collect()
            })
            .collect()
    }

    /// Every layer's smoothed loss ends no higher than it started, up to
    /// [`LOSS_SLACK`].
    pub fn loss_decreases(&self) -> bool {
        self.smoothed().iter().all(|s| match (s.first(), s.last()) {
            (Some(a), Some(b)) => *b <= *a + LOSS_SLACK,
            _ => true,
        })
    }

    pub fn passed(&self) -> bool {
        self.accuracy >= SMOKE_ACCURACY && self.loss_decreases()
    }
}

impl fmt::Display for SmokeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "accuracy {:.3}, smoothed loss", self.accuracy)?;
        for s in self.smoothed() {
            write!(f, " {:.4}->{:.4}", s.first().unwrap_or(&0.0), s.last().unwrap_or(&0.0))?;
        }
        Ok(())
    }
}

const T_MAX: u32 = 100;

pub(crate) fn smoke_task(cfg: &SmokeConfig, rng: &mut ChaCha8Rng) -> Vec<(SpikeRaster, usize)> {
    let shape = Shape::Maps { maps: 1, height: 4, width: 5 };
    let mut out = Vec::with_capacity(2 * cfg.per_class);
    for k in 0..2 * cfg.per_class {
        let label = k % 2;
        let times: Vec<Option<u32>> = (0..20).map(|i| (i / 10 == label).then(|| rng.gen_range(0..=20))).collect();
        out.push((SpikeRaster::from_times(shape, T_MAX, &times).expect("times within horizon"), label));
    }
    out
}

pub(crate) fn smoke_run_config(cfg: &SmokeConfig) -> RunConfig {
    let mut rc = RunConfig::new(&format!("4x5-{}-2", cfg.hidden)).expect("fixed architecture");
    rc.t_max = T_MAX;
    rc.lambda = cfg.lambda;
    rc.seed = cfg.seed;
    rc.mode = if cfg.binary { Mode::Binary } else { Mode::Real };
    // Signed initial weights so binary signs differ between neurons.
    let (hidden, output) = rc.layers.split_at_mut(1);
    let h = &mut hidden[0];
    (h.v_th, h.init, h.alpha_init, h.eta) = (1.0, (-0.2, 0.5), (0.3, 0.3), 0.05);
    let o = &mut output[0];
    (o.v_th, o.init, o.alpha_init, o.eta) = (0.3, (-0.3, 0.6), (0.3, 0.3), 0.1);
    rc
}

/// Mean accuracy of one run per seed in `seeds`, keeping everything else of `base`.
pub fn smoke_sweep(base: &SmokeConfig, seeds: std::ops::Range<u64>) -> Vec<SmokeReport> {
    seeds.map(|seed| convergence_smoke(&SmokeConfig { seed, ..*base })).collect()
}

pub fn mean_accuracy(reports: &[SmokeReport]) -> f64 {
    reports.iter().map(|r| r.accuracy).sum::<f64>() / reports.len().max(1) as f64
}

/// Train a tiny dense network on two separable classes and report how it went.
pub fn convergence_smoke(cfg: &SmokeConfig) -> SmokeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let task = smoke_task(cfg, &mut rng);
    let rc = smoke_run_config(cfg);
    let tcfg = rc.train_config();
    let mut net = rc.build_network(&mut rng).expect("smoke network is valid");
    let mut order: Vec<usize> = (0..task.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = vec![0.0; net.layers.len()];
        for &i in &order {
            let (x, y) = &task[i];
            let o =
                if cfg.binary { binary_train_step(x, *y, &mut net, &tcfg) } else { train_step(x, *y, &mut net, &tcfg) }
                    .expect("smoke samples fit the network");
            sum.iter_mut().zip(&o.losses).for_each(|(a, b)| *a += b);
        }
        losses.push(sum.iter().map(|s| s / task.len() as f64).collect());
    }
    let correct = task.iter().filter(|(x, y)| classify(network_forward(x, &net).expect("fits").output()) == *y).count();
    SmokeReport { accuracy: correct as f64 / task.len() as f64, losses }
}
