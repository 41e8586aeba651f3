//! Brute-force spike times on a finer time grid.

use crate::dynamics::{psp_kernel_at, NeuronParams};
use crate::layers::network_forward;
use crate::verify::TinyNetCase;

/// Fine-grid first-crossing times for every layer of a case.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrace {
    pub resolution: u32,
    /// `fine[l][j]`: crossing time of neuron `j` in layer `l`, in integer-step units.
    pub fine: Vec<Vec<Option<f64>>>,
}

impl OracleTrace {
    /// Spike times rounded up to the integer grid.
    pub fn ceiled(&self) -> Vec<Vec<Option<u32>>> {
        self.fine.iter().map(|l| l.iter().map(|t| t.map(|t| t.ceil() as u32)).collect()).collect()
    }

    pub fn spike_count(&self) -> usize {
        self.fine.iter().flatten().filter(|t| t.is_some()).count()
    }
}

/// Potential at real time `t` from presynaptic spikes at real times.
pub(crate) fn potential_at(pre: &[Option<f64>], weights: &[f64], t: f64, p: &NeuronParams) -> f64 {
    pre.iter().zip(weights).filter_map(|(tj, w)| tj.map(|tj| w * psp_kernel_at(t - tj, p))).sum()
}

/// First fine-grid point in `[0, t_max]` where the potential reaches threshold.
pub(crate) fn fine_first_crossing(
    pre: &[Option<f64>],
    weights: &[f64],
    p: &NeuronParams,
    resolution: u32,
) -> Option<f64> {
    let res = f64::from(resolution);
    (0..=u64::from(p.t_max) * u64::from(resolution))
        .map(|k| k as f64 / res)
        .find(|&t| potential_at(pre, weights, t, p) >= p.v_th)
}

/// Simulate the case on a grid `resolution` times finer than the engine's.
///
/// Each layer sees the previous layer's spikes rounded up to integer steps,
/// which is what the integer-grid engine would hand it.
pub fn fine_grid_spike_oracle(case: &TinyNetCase, resolution: u32) -> OracleTrace {
    assert!(resolution >= 10, "resolution must be at least 10");
    let mut pre: Vec<Option<f64>> = case.input.iter().map(|t| t.map(f64::from)).collect();
    let mut fine = Vec::with_capacity(case.network.layers.len());
    for (l, layer) in case.network.layers.iter().enumerate() {
        let times: Vec<Option<f64>> =
            case.weight_rows(l).iter().map(|w| fine_first_crossing(&pre, w, &layer.spec.params, resolution)).collect();
        pre = times.iter().map(|t| t.map(f64::ceil)).collect();
        fine.push(times);
    }
    OracleTrace { resolution, fine }
}

/// Whether the engine's forward pass equals the ceiled oracle on every layer.
pub fn oracle_agrees(case: &TinyNetCase, trace: &OracleTrace) -> bool {
    let acts = network_forward(&case.input, &case.network).expect("tiny cases are well formed");
    acts.rasters[1..].iter().zip(trace.ceiled()).all(|(r, o)| r.iter().eq(o))
}
