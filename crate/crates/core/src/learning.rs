//! Layer-local spike-time learning.
//!
//! Every layer minimises its own squared firing-time error. The output layer
//! gets its targets from the label; each lower layer gets targets by
//! displacing its spike times in the direction that reduces the error of the
//! layer above. No gradient travels through more than one layer.
//!
//! Silent neurons are read as firing at `t_max` inside every formula here.

use crate::binary;
use crate::dynamics::{psp_kernel, NeuronParams};
use crate::error::{shape_err, Error, Result};
use crate::layers::{classify, network_forward, LayerKind, LayerSpec, LayerState, Network};
use crate::raster::{SpikeRaster, NO_SPIKE};

/// Desired firing time of each neuron of one layer, in `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTimes {
    times: Vec<f64>,
    t_max: u32,
}

impl TargetTimes {
    pub fn new(times: Vec<f64>, t_max: u32) -> Result<Self> {
        if let Some(t) = times.iter().find(|t| !(0.0..=f64::from(t_max)).contains(*t)) {
            return Err(Error::InputDomain(format!("target time {t} outside [0, {t_max}]")));
        }
        Ok(Self { times, t_max })
    }

    /// Targets equal to the actual times: zero error everywhere.
    pub fn from_actual(actual: &SpikeRaster) -> Self {
        let times = (0..actual.len()).map(|i| f64::from(actual.time_or_max(i))).collect();
        Self { times, t_max: actual.t_max() }
    }

    /// `clamp(t + dt, 0, t_max)` per neuron.
    pub fn displaced(actual: &SpikeRaster, dt: &[f64]) -> Self {
        let hi = f64::from(actual.t_max());
        let times = dt.iter().enumerate().map(|(i, d)| (f64::from(actual.time_or_max(i)) + d).clamp(0.0, hi)).collect();
        Self { times, t_max: actual.t_max() }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `T - t` per neuron.
    pub fn displacements(&self, actual: &SpikeRaster) -> Vec<f64> {
        self.times.iter().enumerate().map(|(i, &t)| t - f64::from(actual.time_or_max(i))).collect()
    }
}

/// Output rule: the labelled neuron should fire `lambda` steps before the
/// earliest output spike, all others `lambda` steps after the latest one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputTargetRule {
    pub lambda: f64,
}

impl Default for OutputTargetRule {
    fn default() -> Self {
        Self { lambda: 5.0 }
    }
}

/// Normalised temporal error `e_j = (T_j - t_j) / t_max`.
pub fn temporal_errors(actual: &SpikeRaster, targets: &TargetTimes) -> Result<Vec<f64>> {
    if actual.len() != targets.len() {
        return shape_err(format!("{} neurons but {} targets", actual.len(), targets.len()));
    }
    let t_max = f64::from(actual.t_max());
    Ok(targets.times.iter().enumerate().map(|(i, &tt)| (tt - f64::from(actual.time_or_max(i))) / t_max).collect())
}

/// `sum_j 0.5 * e_j^2`.
pub fn layer_loss(actual: &SpikeRaster, targets: &TargetTimes) -> Result<f64> {
    Ok(temporal_errors(actual, targets)?.iter().map(|e| 0.5 * e * e).sum())
}

pub fn output_targets(actual: &SpikeRaster, label: usize, rule: &OutputTargetRule) -> Result<TargetTimes> {
    if label >= actual.len() {
        return Err(Error::InputDomain(format!("label {label} for {} output neurons", actual.len())));
    }
    let times: Vec<f64> = (0..actual.len()).map(|i| f64::from(actual.time_or_max(i))).collect();
    let tau_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let tau_max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = f64::from(actual.t_max());
    let targets = (0..times.len())
        .map(|i| {
            let t = if i == label { tau_min - rule.lambda } else { tau_max + rule.lambda };
            t.clamp(0.0, hi)
        })
        .collect();
    Ok(TargetTimes { times: targets, t_max: actual.t_max() })
}

/// `-1/tau1` on the rising segment, `+1/tau2` on the falling one, else 0.
#[inline]
fn unit_slope(dt: i64, p: &NeuronParams) -> f64 {
    crate::dynamics::psp_slope_wrt_presyn_time(dt, 1.0, p)
}

/// Per-postsynaptic factor `(e_j / t_max) * (t_j / v_th)` shared by all rules.
pub(crate) fn error_gains(post: &SpikeRaster, errors: &[f64], p: &NeuronParams) -> Vec<f64> {
    let t_max = f64::from(p.t_max);
    errors.iter().enumerate().map(|(j, &e)| (e / t_max) * (f64::from(post.time_or_max(j)) / p.v_th)).collect()
}

/// Rows `table[b][j] = gain_j * kernel(t_j - b)` for every presynaptic time bin `b`.
pub(crate) fn kernel_table(post: &SpikeRaster, gains: &[f64], p: &NeuronParams) -> Vec<f64> {
    let n = gains.len();
    let bins = p.t_max as usize + 1;
    let mut table = vec![0.0; bins * n];
    for j in 0..n {
        if gains[j] == 0.0 {
            continue;
        }
        let tj = i64::from(post.time_or_max(j));
        let lo = (tj - i64::from(p.tau()) + 1).max(0);
        for b in lo..=tj {
            table[b as usize * n + j] = gains[j] * psp_kernel(tj - b, p);
        }
    }
    table
}

fn check_pair(pre: &SpikeRaster, post: &SpikeRaster, spec: &LayerSpec, errors: &[f64]) -> Result<()> {
    if pre.len() != spec.input.len() || post.len() != spec.output.len() || errors.len() != post.len() {
        return shape_err(format!(
            "layer {} -> {} got rasters of {} and {} with {} errors",
            spec.input,
            spec.output,
            pre.len(),
            post.len(),
            errors.len()
        ));
    }
    Ok(())
}

/// Adds `scale * dw` of a dense layer into `sink` (presynaptic-major layout).
///
/// `dw_ji = -eta * (e_j / t_max) * (t_j / v_th) * kernel(t_j - t_i)` when the
/// presynaptic spike is not later than the postsynaptic one, 0 otherwise.
pub(crate) fn accumulate_dense_dw(
    pre: &SpikeRaster,
    post: &SpikeRaster,
    errors: &[f64],
    spec: &LayerSpec,
    eta: f64,
    sink: &mut [f64],
) {
    let n_out = post.len();
    let p = &spec.params;
    let gains: Vec<f64> = error_gains(post, errors, p).into_iter().map(|g| -eta * g).collect();
    if gains.iter().all(|&g| g == 0.0) {
        return;
    }
    let table = kernel_table(post, &gains, p);
    for (i, &t) in pre.raw().iter().enumerate() {
        if t == NO_SPIKE {
            continue;
        }
        let b = t as usize;
        let row = &table[b * n_out..(b + 1) * n_out];
        sink[i * n_out..(i + 1) * n_out].iter_mut().zip(row).for_each(|(s, &h)| *s += h);
    }
}

/// Weight change of a dense layer for one sample, in the layer's storage layout.
pub fn dense_weight_update(
    pre: &SpikeRaster,
    post: &SpikeRaster,
    targets: &TargetTimes,
    spec: &LayerSpec,
    state: &LayerState,
) -> Result<Vec<f64>> {
    let errors = temporal_errors(post, targets)?;
    check_pair(pre, post, spec, &errors)?;
    let mut dw = vec![0.0; spec.weight_len()];
    accumulate_dense_dw(pre, post, &errors, spec, state.eta, &mut dw);
    Ok(dw)
}

/// Displacement of each presynaptic spike time that reduces the error of a dense layer:
///
/// `dt_i = -beta * sum_j (e_j / t_max) * (t_j / v_th) * dv_ji`, where `dv_ji` is the
/// slope of `v_j` with respect to `t_i` (zero unless `t_i <= t_j`).
pub fn hidden_displacements(
    pre: &SpikeRaster,
    post: &SpikeRaster,
    errors: &[f64],
    spec: &LayerSpec,
    state: &LayerState,
) -> Result<Vec<f64>> {
    check_pair(pre, post, spec, errors)?;
    let n_out = post.len();
    let p = &spec.params;
    let gains = error_gains(post, errors, p);
    let mut dt = vec![0.0; pre.len()];
    if gains.iter().all(|&g| g == 0.0) {
        return Ok(dt);
    }
    let bins = p.t_max as usize + 1;
    let mut table = vec![0.0; bins * n_out];
    for j in 0..n_out {
        if gains[j] == 0.0 {
            continue;
        }
        let tj = i64::from(post.time_or_max(j));
        let lo = (tj - i64::from(p.tau()) + 1).max(0);
        for b in lo..=tj {
            table[b as usize * n_out + j] = gains[j] * unit_slope(tj - b, p);
        }
    }
    let alpha = state.alpha_for(0);
    for (i, d) in dt.iter_mut().enumerate() {
        let b = pre.time_or_max(i) as usize;
        let row = &table[b * n_out..(b + 1) * n_out];
        let w = &state.weights[i * n_out..(i + 1) * n_out];
        let s: f64 = match alpha {
            None => row.iter().zip(w).map(|(g, w)| g * w).sum(),
            Some(a) => row.iter().zip(w).map(|(g, &w)| if w >= 0.0 { g * a } else { -g * a }).sum(),
        };
        *d = -state.beta * s;
    }
    Ok(dt)
}

/// Visit every synapse `(post d, filter offset k, pre index)` of a conv layer
/// whose postsynaptic error is nonzero.
fn for_each_conv_synapse(spec: &LayerSpec, errors: &[f64], mut f: impl FnMut(usize, usize, usize, usize)) {
    let LayerKind::Conv { maps, kernel } = spec.kind else { unreachable!() };
    let (in_maps, h, w) = spec.input.as_maps();
    let (_, oh, ow) = spec.output.as_maps();
    for d in 0..maps {
        for y in 0..oh {
            for x in 0..ow {
                let post = (d * oh + y) * ow + x;
                if errors[post] == 0.0 {
                    continue;
                }
                for n in 0..in_maps {
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let k = (n * kernel + ky) * kernel + kx;
                            let pre = (n * h + y + ky) * w + x + kx;
                            f(d, post, k, pre);
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn accumulate_conv_dw(
    pre: &SpikeRaster,
    post: &SpikeRaster,
    errors: &[f64],
    spec: &LayerSpec,
    eta: f64,
    sink: &mut [f64],
) {
    let p = &spec.params;
    let flen = spec.filter_len();
    let gains = error_gains(post, errors, p);
    for_each_conv_synapse(spec, errors, |d, j, k, i| {
        let ti = pre.raw()[i];
        if ti == NO_SPIKE {
            return;
        }
        let tj = post.time_or_max(j);
        if ti <= tj {
            sink[d * flen + k] += -eta * gains[j] * psp_kernel(i64::from(tj) - i64::from(ti), p);
        }
    });
}

/// Filter change of a conv layer: every neuron of map `D` contributes to the
/// shared filter `D` through its own receptive field.
pub fn conv_weight_update(
    pre: &SpikeRaster,
    post: &SpikeRaster,
    targets: &TargetTimes,
    spec: &LayerSpec,
    state: &LayerState,
) -> Result<Vec<f64>> {
    if !matches!(spec.kind, LayerKind::Conv { .. }) {
        return shape_err("conv_weight_update on a non-conv layer");
    }
    let errors = temporal_errors(post, targets)?;
    check_pair(pre, post, spec, &errors)?;
    let mut dw = vec![0.0; spec.weight_len()];
    accumulate_conv_dw(pre, post, &errors, spec, state.eta, &mut dw);
    Ok(dw)
}

/// Presynaptic displacements through a conv layer, summing over every output
/// neuron whose receptive field contains the presynaptic neuron.
pub fn conv_displacements(
    pre: &SpikeRaster,
    post: &SpikeRaster,
    errors: &[f64],
    spec: &LayerSpec,
    state: &LayerState,
) -> Result<Vec<f64>> {
    if !matches!(spec.kind, LayerKind::Conv { .. }) {
        return shape_err("conv_displacements on a non-conv layer");
    }
    check_pair(pre, post, spec, errors)?;
    let p = &spec.params;
    let flen = spec.filter_len();
    let gains = error_gains(post, errors, p);
    let mut dt = vec![0.0; pre.len()];
    for_each_conv_synapse(spec, errors, |d, j, k, i| {
        let dtime = i64::from(post.time_or_max(j)) - i64::from(pre.time_or_max(i));
        let w = LayerState::effective(state.weights[d * flen + k], state.alpha_for(d));
        dt[i] += -state.beta * gains[j] * unit_slope(dtime, p) * w;
    });
    Ok(dt)
}

/// Targets for the layer feeding an earliest-spike pool.
///
/// Each window's displacement goes to the neuron that won the window; the
/// other neurons keep their actual time as target. Silent windows are left
/// untouched.
pub fn route_targets_through_pool(
    pool_in: &SpikeRaster,
    displacements: &[f64],
    spec: &LayerSpec,
) -> Result<TargetTimes> {
    let winners = crate::layers::pool_winners(pool_in, spec)?;
    if displacements.len() != winners.len() {
        return shape_err(format!("{} displacements for {} pooling windows", displacements.len(), winners.len()));
    }
    let mut targets = TargetTimes::from_actual(pool_in);
    let hi = f64::from(pool_in.t_max());
    for (win, &dt) in winners.iter().zip(displacements) {
        if let Some(i) = *win {
            targets.times[i] = (targets.times[i] + dt).clamp(0.0, hi);
        }
    }
    Ok(targets)
}

/// Knobs of a training step beyond the per-layer rates stored in the network.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainConfig {
    pub rule: OutputTargetRule,
    /// Negate every weight/scale update. Off by default: the update signs are
    /// used exactly as derived.
    pub flip_sign: bool,
    /// Binary mode only: clip real-valued shadow weights to `[-c, c]` after each update.
    pub clip: Option<f64>,
}

/// What one sample did to the network.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Local loss per layer (0 for pooling layers).
    pub losses: Vec<f64>,
    pub predicted: usize,
}

/// Sum of per-sample updates waiting to be committed.
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    dw: Vec<Vec<f64>>,
    dalpha: Vec<Vec<f64>>,
    samples: usize,
}

impl GradientBuffer {
    pub fn new(net: &Network) -> Self {
        let dw = net.layers.iter().map(|l| vec![0.0; l.spec.weight_len()]).collect();
        let dalpha = net
            .layers
            .iter()
            .map(|l| l.state.as_ref().and_then(|s| s.binary.as_ref()).map_or(Vec::new(), |b| vec![0.0; b.alpha.len()]))
            .collect();
        Self { dw, dalpha, samples: 0 }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn weight_delta(&self, layer: usize) -> &[f64] {
        &self.dw[layer]
    }

    /// Apply the accumulated sum and reset.
    pub fn commit(&mut self, net: &mut Network, cfg: &TrainConfig) {
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let Some(state) = layer.state.as_mut() else { continue };
            for (w, d) in state.weights.iter_mut().zip(self.dw[l].iter_mut()) {
                *w += *d;
                *d = 0.0;
            }
            finish_layer_update(state, &mut self.dalpha[l], cfg);
        }
        self.samples = 0;
    }
}

fn finish_layer_update(state: &mut LayerState, dalpha: &mut [f64], cfg: &TrainConfig) {
    if let Some(b) = state.binary.as_mut() {
        if let Some(c) = cfg.clip {
            state.weights.iter_mut().for_each(|w| *w = w.clamp(-c, c));
        }
        for (a, d) in b.alpha.iter_mut().zip(dalpha.iter_mut()) {
            *a += *d;
            *d = 0.0;
        }
        b.note_negative_alpha();
    }
}

enum Sink<'a> {
    Apply(&'a mut Network),
    Buffer(&'a Network, &'a mut GradientBuffer),
}

impl Sink<'_> {
    fn net(&self) -> &Network {
        match self {
            Sink::Apply(n) => n,
            Sink::Buffer(n, _) => n,
        }
    }
}

/// One online update: forward, then walk the layers from the output down,
/// deriving each layer's targets and applying its local update.
pub fn train_step(sample: &SpikeRaster, label: usize, net: &mut Network, cfg: &TrainConfig) -> Result<StepOutcome> {
    step(sample, label, Sink::Apply(net), cfg)
}

/// Like [`train_step`] but adds the updates to `buf` instead of the weights.
pub fn accumulate_step(
    sample: &SpikeRaster,
    label: usize,
    net: &Network,
    cfg: &TrainConfig,
    buf: &mut GradientBuffer,
) -> Result<StepOutcome> {
    let out = step(sample, label, Sink::Buffer(net, &mut *buf), cfg)?;
    buf.samples += 1;
    Ok(out)
}

/// Training step that requires every trainable layer to be in binary mode.
pub fn binary_train_step(
    sample: &SpikeRaster,
    label: usize,
    net: &mut Network,
    cfg: &TrainConfig,
) -> Result<StepOutcome> {
    let all_binary = net.layers.iter().all(|l| l.state.as_ref().is_none_or(|s| s.binary.is_some()));
    if !all_binary {
        return Err(Error::Mode("binary_train_step on a network with real-valued layers".into()));
    }
    train_step(sample, label, net, cfg)
}

fn step(sample: &SpikeRaster, label: usize, mut sink: Sink<'_>, cfg: &TrainConfig) -> Result<StepOutcome> {
    let acts = network_forward(sample, sink.net())?;
    let n_layers = sink.net().layers.len();
    let mut losses = vec![0.0; n_layers];
    let predicted = classify(acts.output());
    if n_layers == 0 {
        return Ok(StepOutcome { losses, predicted });
    }
    let sign = if cfg.flip_sign { -1.0 } else { 1.0 };
    let mut targets = output_targets(acts.output(), label, &cfg.rule)?;
    for l in (0..n_layers).rev() {
        let pre = &acts.rasters[l];
        let post = &acts.rasters[l + 1];
        let spec = sink.net().layers[l].spec;
        if let LayerKind::Pool { .. } = spec.kind {
            if l == 0 {
                break;
            }
            let disp = targets.displacements(post);
            targets = route_targets_through_pool(pre, &disp, &spec)?;
            continue;
        }
        losses[l] = layer_loss(post, &targets)?;
        let errors = temporal_errors(post, &targets)?;
        if errors.iter().all(|&e| e == 0.0) {
            if l > 0 {
                targets = TargetTimes::from_actual(pre);
            }
            continue;
        }
        let state = sink.net().layers[l].state.as_ref().expect("trainable layer has state");
        let is_conv = matches!(spec.kind, LayerKind::Conv { .. });
        let next = if l > 0 {
            let dt = if is_conv {
                conv_displacements(pre, post, &errors, &spec, state)?
            } else {
                hidden_displacements(pre, post, &errors, &spec, state)?
            };
            Some(TargetTimes::displaced(pre, &dt))
        } else {
            None
        };
        let dalpha = match &state.binary {
            Some(_) => {
                binary::alpha_gradient(pre, post, &errors, &spec, state)?.into_iter().map(|d| sign * d).collect()
            }
            None => Vec::new(),
        };
        let eta = sign * state.eta;
        match &mut sink {
            Sink::Apply(net) => {
                let state = net.layers[l].state.as_mut().unwrap();
                if is_conv {
                    accumulate_conv_dw(pre, post, &errors, &spec, eta, &mut state.weights);
                } else {
                    accumulate_dense_dw(pre, post, &errors, &spec, eta, &mut state.weights);
                }
                let mut dalpha = dalpha;
                finish_layer_update(state, &mut dalpha, cfg);
            }
            Sink::Buffer(_, buf) => {
                if is_conv {
                    accumulate_conv_dw(pre, post, &errors, &spec, eta, &mut buf.dw[l]);
                } else {
                    accumulate_dense_dw(pre, post, &errors, &spec, eta, &mut buf.dw[l]);
                }
                buf.dalpha[l].iter_mut().zip(&dalpha).for_each(|(a, d)| *a += d);
            }
        }
        if let Some(next) = next {
            targets = next;
        }
    }
    Ok(StepOutcome { losses, predicted })
}
