//! Piecewise-linear postsynaptic potentials and first-threshold-crossing.
//!
//! A presynaptic spike at `t_j` raises the potential linearly for `tau1` steps,
//! to a peak of exactly 1, then lets it fall linearly back to 0 over `tau2`
//! steps. The kernel is 0 before the spike and after `t_j + tau1 + tau2`.

use crate::error::{shape_err, Error, Result};
use crate::raster::{SpikeRaster, NO_SPIKE};

/// PL-PSP time constants, threshold and horizon of one layer's neurons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    pub tau1: u32,
    pub tau2: u32,
    pub v_th: f64,
    pub t_max: u32,
}

impl NeuronParams {
    pub fn new(tau1: u32, tau2: u32, v_th: f64, t_max: u32) -> Result<Self> {
        let p = Self { tau1, tau2, v_th, t_max };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric split of a total kernel duration: `tau1 = tau2 = tau / 2`.
    pub fn symmetric(tau: u32, v_th: f64, t_max: u32) -> Result<Self> {
        Self::new(tau / 2, tau - tau / 2, v_th, t_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau1 < 1 || self.tau2 < 1 {
            return Err(Error::Config(format!("tau1 and tau2 must be >= 1 (got {}, {})", self.tau1, self.tau2)));
        }
        if !(self.v_th > 0.0 && self.v_th.is_finite()) {
            return Err(Error::Config(format!("threshold must be positive (got {})", self.v_th)));
        }
        if self.t_max < 1 {
            return Err(Error::Config("t_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Total support `tau1 + tau2` of the kernel.
    #[inline]
    pub fn tau(&self) -> u32 {
        self.tau1 + self.tau2
    }
}

/// Kernel value `dt` steps after the presynaptic spike.
#[inline]
pub fn psp_kernel(dt: i64, p: &NeuronParams) -> f64 {
    let (tau1, tau) = (i64::from(p.tau1), i64::from(p.tau()));
    if dt < 0 || dt >= tau {
        0.0
    } else if dt < tau1 {
        dt as f64 / p.tau1 as f64
    } else {
        (tau - dt) as f64 / p.tau2 as f64
    }
}

/// Kernel value for a real-valued elapsed time.
#[inline]
pub fn psp_kernel_at(dt: f64, p: &NeuronParams) -> f64 {
    let (tau1, tau) = (f64::from(p.tau1), f64::from(p.tau()));
    if !(0.0..tau).contains(&dt) {
        0.0
    } else if dt < tau1 {
        dt / tau1
    } else {
        (tau - dt) / f64::from(p.tau2)
    }
}

/// Derivative of `w * kernel(t - t_j)` with respect to the presynaptic time `t_j`.
///
/// Moving the presynaptic spike later lowers the potential on the rising
/// segment and raises it on the falling one.
#[inline]
pub fn psp_slope_wrt_presyn_time(dt: i64, w: f64, p: &NeuronParams) -> f64 {
    if dt < 0 || dt >= i64::from(p.tau()) {
        0.0
    } else if dt < i64::from(p.tau1) {
        -w / p.tau1 as f64
    } else {
        w / p.tau2 as f64
    }
}

/// Membrane potential at step `t`: weighted sum of the kernels of all spiking inputs.
pub fn membrane_potential(inputs: &SpikeRaster, weights: &[f64], t: u32, p: &NeuronParams) -> Result<f64> {
    check_len(inputs, weights)?;
    Ok(inputs
        .iter()
        .zip(weights)
        .filter_map(|(tj, &w)| tj.map(|tj| w * psp_kernel(i64::from(t) - i64::from(tj), p)))
        .sum())
}

/// Earliest integer step in `[0, t_max]` at which the potential reaches `v_th`.
pub fn first_spike_time(inputs: &SpikeRaster, weights: &[f64], p: &NeuronParams) -> Result<Option<u32>> {
    check_len(inputs, weights)?;
    let mut drive = DriveBins::new(p.t_max);
    for (&tj, &w) in inputs.raw().iter().zip(weights) {
        if tj != NO_SPIKE {
            drive.add(tj, w);
        }
    }
    let t = drive.fire_time(p);
    Ok((t != NO_SPIKE).then_some(t))
}

fn check_len(inputs: &SpikeRaster, weights: &[f64]) -> Result<()> {
    if inputs.len() != weights.len() {
        return shape_err(format!("{} inputs but {} weights", inputs.len(), weights.len()));
    }
    Ok(())
}

/// Summed synaptic weight arriving at each time step, for a single neuron.
///
/// The potential is piecewise linear with kinks only at integer steps, so it
/// can be advanced exactly with two running window sums: `rise` over inputs
/// still on their rising segment and `fall` over those on their falling one.
/// Everything is carried scaled by `tau1 * tau2` so integer-valued inputs stay
/// exact.
pub(crate) struct DriveBins {
    bins: Vec<f64>,
    first: usize,
    last: usize,
}

impl DriveBins {
    pub(crate) fn new(t_max: u32) -> Self {
        Self { bins: vec![0.0; t_max as usize + 1], first: usize::MAX, last: 0 }
    }

    #[inline]
    pub(crate) fn add(&mut self, t: u32, w: f64) {
        let t = t as usize;
        self.bins[t] += w;
        self.first = self.first.min(t);
        self.last = self.last.max(t);
    }

    pub(crate) fn fire_time(&self, p: &NeuronParams) -> u32 {
        if self.first == usize::MAX {
            return NO_SPIKE;
        }
        scan_single(&self.bins, self.first, self.last, p)
    }

    /// Zero the touched range so the buffer can be reused.
    pub(crate) fn clear(&mut self) {
        if self.first != usize::MAX {
            self.bins[self.first..=self.last].fill(0.0);
        }
        self.first = usize::MAX;
        self.last = 0;
    }
}

#[inline]
fn scan_single(bins: &[f64], first: usize, last: usize, p: &NeuronParams) -> u32 {
    let (tau1, tau) = (p.tau1 as usize, p.tau() as usize);
    let (s_rise, s_fall) = (f64::from(p.tau2), f64::from(p.tau1));
    let theta = p.v_th * f64::from(p.tau1) * f64::from(p.tau2);
    let stop = (last + tau).min(p.t_max as usize);
    let (mut rise, mut fall, mut v) = (0.0f64, 0.0f64, 0.0f64);
    for t in first..=stop {
        if v >= theta {
            return t as u32;
        }
        let d0 = bins[t];
        let d1 = if t >= tau1 { bins[t - tau1] } else { 0.0 };
        let d2 = if t >= tau { bins[t - tau] } else { 0.0 };
        rise += d0 - d1;
        fall += d1 - d2;
        v += s_rise * rise - s_fall * fall;
    }
    NO_SPIKE
}

/// Same scan as [`DriveBins::fire_time`] for `n` neurons sharing one time axis.
///
/// `bins` is laid out `[t][neuron]`; `out` receives a fire time or `NO_SPIKE`.
pub(crate) fn scan_many(bins: &[f64], n: usize, first: usize, last: usize, p: &NeuronParams, out: &mut [u32]) {
    out.fill(NO_SPIKE);
    if first > last || n == 0 {
        return;
    }
    let (tau1, tau) = (p.tau1 as usize, p.tau() as usize);
    let (s_rise, s_fall) = (f64::from(p.tau2), f64::from(p.tau1));
    let theta = p.v_th * f64::from(p.tau1) * f64::from(p.tau2);
    let stop = (last + tau).min(p.t_max as usize);
    let zero = vec![0.0; n];
    let mut rise = vec![0.0f64; n];
    let mut fall = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut pending = n;
    for t in first..=stop {
        for i in 0..n {
            if out[i] == NO_SPIKE && v[i] >= theta {
                out[i] = t as u32;
                pending -= 1;
            }
        }
        if pending == 0 {
            return;
        }
        let d0 = &bins[t * n..(t + 1) * n];
        let d1 = if t >= tau1 { &bins[(t - tau1) * n..(t - tau1 + 1) * n] } else { &zero[..] };
        let d2 = if t >= tau { &bins[(t - tau) * n..(t - tau + 1) * n] } else { &zero[..] };
        for i in 0..n {
            rise[i] += d0[i] - d1[i];
            fall[i] += d1[i] - d2[i];
            v[i] += s_rise * rise[i] - s_fall * fall[i];
        }
    }
}
