//! Forward pass over convolutional, pooling and fully connected layers.

use rand::Rng;

use crate::binary::BinaryState;
use crate::dynamics::{scan_many, DriveBins, NeuronParams};
use crate::error::{shape_err, Error, Result};
use crate::raster::{Shape, SpikeRaster, NO_SPIKE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// `maps` filters of `kernel × kernel`, stride 1, no padding.
    Conv {
        maps: usize,
        kernel: usize,
    },
    /// Earliest-spike pooling.
    Pool {
        window: usize,
        stride: usize,
    },
    Dense {
        n_out: usize,
    },
}

/// Architecture of a single layer with its resolved input/output shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
    pub params: NeuronParams,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, input: Shape, params: NeuronParams) -> Result<Self> {
        let output = output_shape(kind, input)?;
        Ok(Self { kind, input, output, params })
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self.kind, LayerKind::Pool { .. })
    }

    /// Number of synaptic weights (0 for pooling).
    pub fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv { maps, kernel } => maps * self.input.as_maps().0 * kernel * kernel,
            LayerKind::Dense { n_out } => n_out * self.input.len(),
            LayerKind::Pool { .. } => 0,
        }
    }

    /// Weights sharing one scaling factor when each conv filter has its own.
    pub(crate) fn filter_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv { kernel, .. } => self.input.as_maps().0 * kernel * kernel,
            _ => self.weight_len(),
        }
    }

    /// Weight tensor dimensions in canonical order: `n_out × n_in` for dense
    /// layers, `maps × in_maps × k × k` for convolutions.
    pub fn weight_dims(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv { maps, kernel } => vec![maps, self.input.as_maps().0, kernel, kernel],
            LayerKind::Dense { n_out } => vec![n_out, self.input.len()],
            LayerKind::Pool { .. } => vec![],
        }
    }
}

fn output_shape(kind: LayerKind, input: Shape) -> Result<Shape> {
    let (in_maps, h, w) = input.as_maps();
    match kind {
        LayerKind::Conv { maps, kernel } => {
            if matches!(input, Shape::Flat(_)) {
                return shape_err("convolution needs a spatial input");
            }
            if kernel == 0 || maps == 0 || kernel > h || kernel > w {
                return shape_err(format!("{maps}C{kernel} does not fit a {input} input"));
            }
            let _ = in_maps;
            Ok(Shape::Maps { maps, height: h - kernel + 1, width: w - kernel + 1 })
        }
        LayerKind::Pool { window, stride } => {
            if matches!(input, Shape::Flat(_)) {
                return shape_err("pooling needs a spatial input");
            }
            if window == 0 || stride == 0 || window > h || window > w {
                return shape_err(format!("pool window {window} does not fit a {input} input"));
            }
            if (h - window) % stride != 0 || (w - window) % stride != 0 {
                return shape_err(format!("pool {window}/{stride} does not tile a {input} input"));
            }
            Ok(Shape::Maps { maps: in_maps, height: (h - window) / stride + 1, width: (w - window) / stride + 1 })
        }
        LayerKind::Dense { n_out } => {
            if n_out == 0 {
                return shape_err("dense layer needs at least one neuron");
            }
            Ok(Shape::Flat(n_out))
        }
    }
}

/// Trainable state of a conv or dense layer.
///
/// Dense weights are stored presynaptic-major (`n_in × n_out`) so a single
/// input spike touches one contiguous row; use [`LayerState::dense_weight`]
/// for `(out, in)` access. Conv filters are `maps × in_maps × k × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub weights: Vec<f64>,
    /// Weight learning rate.
    pub eta: f64,
    /// Displacement learning rate for the presynaptic layer's targets.
    pub beta: f64,
    pub binary: Option<BinaryState>,
}

impl LayerState {
    pub fn zeros(spec: &LayerSpec, eta: f64, beta: f64) -> Self {
        Self { weights: vec![0.0; spec.weight_len()], eta, beta, binary: None }
    }

    /// Uniform initialisation in `[lo, hi)`.
    pub fn uniform<R: Rng>(spec: &LayerSpec, lo: f64, hi: f64, eta: f64, beta: f64, rng: &mut R) -> Self {
        let weights = (0..spec.weight_len()).map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo }).collect();
        Self { weights, eta, beta, binary: None }
    }

    pub fn dense_weight(&self, spec: &LayerSpec, out: usize, inp: usize) -> f64 {
        let n_out = spec.output.len();
        self.weights[inp * n_out + out]
    }

    pub fn set_dense_weight(&mut self, spec: &LayerSpec, out: usize, inp: usize, w: f64) {
        let n_out = spec.output.len();
        self.weights[inp * n_out + out] = w;
    }

    /// Scaling factor applied to filter/group `g` in binary mode.
    #[inline]
    pub(crate) fn alpha_for(&self, g: usize) -> Option<f64> {
        self.binary.as_ref().map(|b| b.alpha_for_group(g))
    }

    /// Weight as seen by the forward pass: `w` in real mode, `alpha * sign(w)` in binary mode.
    #[inline]
    pub(crate) fn effective(w: f64, alpha: Option<f64>) -> f64 {
        match alpha {
            None => w,
            Some(a) => {
                if w >= 0.0 {
                    a
                } else {
                    -a
                }
            }
        }
    }

    pub fn check(&self, spec: &LayerSpec) -> Result<()> {
        if self.weights.len() != spec.weight_len() {
            return shape_err(format!("{} weights for a layer needing {}", self.weights.len(), spec.weight_len()));
        }
        if let Some(b) = &self.binary {
            b.check(spec)?;
        }
        Ok(())
    }
}

fn check_input(input: &SpikeRaster, spec: &LayerSpec) -> Result<()> {
    let ok = match spec.kind {
        LayerKind::Dense { .. } => input.len() == spec.input.len(),
        _ => input.shape() == spec.input,
    };
    if !ok {
        return shape_err(format!("layer expects {} but got {}", spec.input, input.shape()));
    }
    Ok(())
}

/// Fully connected layer: every output neuron integrates all inputs.
pub fn dense_forward(input: &SpikeRaster, spec: &LayerSpec, state: &LayerState) -> Result<SpikeRaster> {
    check_input(input, spec)?;
    state.check(spec)?;
    let LayerKind::Dense { n_out } = spec.kind else {
        return shape_err("dense_forward on a non-dense layer");
    };
    let p = &spec.params;
    let mut bins = vec![0.0f64; (p.t_max as usize + 1) * n_out];
    let (mut first, mut last) = (usize::MAX, 0usize);
    let alpha = state.alpha_for(0);
    for (i, &t) in input.raw().iter().enumerate() {
        if t == NO_SPIKE {
            continue;
        }
        let t = t as usize;
        first = first.min(t);
        last = last.max(t);
        let row = &state.weights[i * n_out..(i + 1) * n_out];
        let sink = &mut bins[t * n_out..(t + 1) * n_out];
        match alpha {
            None => sink.iter_mut().zip(row).for_each(|(s, &w)| *s += w),
            Some(a) => sink.iter_mut().zip(row).for_each(|(s, &w)| *s += if w >= 0.0 { a } else { -a }),
        }
    }
    let mut out = vec![NO_SPIKE; n_out];
    if first != usize::MAX {
        scan_many(&bins, n_out, first, last, p, &mut out);
    }
    Ok(SpikeRaster::from_raw(spec.output, p.t_max, out))
}

/// Index of input `(map, y, x)` in a maps × h × w raster.
#[inline]
fn idx(map: usize, y: usize, x: usize, h: usize, w: usize) -> usize {
    (map * h + y) * w + x
}

/// Convolution with shared filters; every output neuron fires on its own
/// receptive field.
pub fn conv_forward(input: &SpikeRaster, spec: &LayerSpec, state: &LayerState) -> Result<SpikeRaster> {
    check_input(input, spec)?;
    state.check(spec)?;
    let LayerKind::Conv { maps, kernel } = spec.kind else {
        return shape_err("conv_forward on a non-conv layer");
    };
    let (in_maps, h, w) = spec.input.as_maps();
    let (_, oh, ow) = spec.output.as_maps();
    let p = &spec.params;
    let flen = in_maps * kernel * kernel;
    let times = input.raw();
    let mut out = vec![NO_SPIKE; spec.output.len()];
    let mut events: Vec<(u32, usize)> = Vec::with_capacity(flen);
    let mut drive = DriveBins::new(p.t_max);
    let alphas: Vec<Option<f64>> = (0..maps).map(|d| state.alpha_for(d)).collect();
    for y in 0..oh {
        for x in 0..ow {
            events.clear();
            for n in 0..in_maps {
                for ky in 0..kernel {
                    let base = idx(n, y + ky, x, h, w);
                    for kx in 0..kernel {
                        let t = times[base + kx];
                        if t != NO_SPIKE {
                            events.push((t, (n * kernel + ky) * kernel + kx));
                        }
                    }
                }
            }
            if events.is_empty() {
                continue;
            }
            for d in 0..maps {
                let filter = &state.weights[d * flen..(d + 1) * flen];
                for &(t, k) in &events {
                    drive.add(t, LayerState::effective(filter[k], alphas[d]));
                }
                out[idx(d, y, x, oh, ow)] = drive.fire_time(p);
                drive.clear();
            }
        }
    }
    Ok(SpikeRaster::from_raw(spec.output, p.t_max, out))
}

/// Position of the earliest spike in each pooling window (`None` when the
/// window is silent). Ties go to the first input in row-major window order.
pub fn pool_winners(input: &SpikeRaster, spec: &LayerSpec) -> Result<Vec<Option<usize>>> {
    check_input(input, spec)?;
    let LayerKind::Pool { window, stride } = spec.kind else {
        return shape_err("pooling on a non-pool layer");
    };
    let (maps, h, w) = spec.input.as_maps();
    let (_, oh, ow) = spec.output.as_maps();
    let times = input.raw();
    let mut winners = Vec::with_capacity(spec.output.len());
    for m in 0..maps {
        for y in 0..oh {
            for x in 0..ow {
                let mut best: Option<(u32, usize)> = None;
                for dy in 0..window {
                    for dx in 0..window {
                        let i = idx(m, y * stride + dy, x * stride + dx, h, w);
                        let t = times[i];
                        if t != NO_SPIKE && best.is_none_or(|(bt, _)| t < bt) {
                            best = Some((t, i));
                        }
                    }
                }
                winners.push(best.map(|(_, i)| i));
            }
        }
    }
    Ok(winners)
}

/// Earliest-spike pooling: each output fires at the first spike in its window.
pub fn pool_forward(input: &SpikeRaster, spec: &LayerSpec) -> Result<SpikeRaster> {
    let winners = pool_winners(input, spec)?;
    let times = winners.iter().map(|w| w.map_or(NO_SPIKE, |i| input.raw()[i])).collect();
    Ok(SpikeRaster::from_raw(spec.output, input.t_max(), times))
}

/// One layer of a network: its architecture plus trainable state (none for pooling).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub state: Option<LayerState>,
}

impl Layer {
    pub fn forward(&self, input: &SpikeRaster) -> Result<SpikeRaster> {
        match (self.spec.kind, &self.state) {
            (LayerKind::Pool { .. }, _) => pool_forward(input, &self.spec),
            (LayerKind::Dense { .. }, Some(s)) => dense_forward(input, &self.spec, s),
            (LayerKind::Conv { .. }, Some(s)) => conv_forward(input, &self.spec, s),
            _ => Err(Error::Shape("trainable layer without state".into())),
        }
    }
}

/// An ordered stack of layers fed by a fixed-shape input raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input: Shape,
    pub t_max: u32,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(input: Shape, t_max: u32, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input;
        for (i, l) in layers.iter().enumerate() {
            let ok = match l.spec.kind {
                LayerKind::Dense { .. } => l.spec.input.len() == shape.len(),
                _ => l.spec.input == shape,
            };
            if !ok {
                return shape_err(format!("layer {} expects {} but receives {shape}", i + 1, l.spec.input));
            }
            if l.spec.params.t_max != t_max {
                return Err(Error::Config(format!("layer {} has a different horizon", i + 1)));
            }
            if let Some(s) = &l.state {
                s.check(&l.spec)?;
            } else if l.spec.is_trainable() {
                return Err(Error::Config(format!("layer {} has no weights", i + 1)));
            }
            shape = l.spec.output;
        }
        Ok(Self { input, t_max, layers })
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().map_or(self.input, |l| l.spec.output)
    }

    pub fn is_binary(&self) -> bool {
        self.layers.iter().any(|l| l.state.as_ref().is_some_and(|s| s.binary.is_some()))
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.weight_len()).sum()
    }
}

/// Rasters of every stage: index 0 is the input, index `l + 1` the output of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub rasters: Vec<SpikeRaster>,
}

impl Activations {
    pub fn output(&self) -> &SpikeRaster {
        self.rasters.last().expect("activations always hold the input")
    }
}

pub fn network_forward(input: &SpikeRaster, net: &Network) -> Result<Activations> {
    if input.len() != net.input.len() {
        return shape_err(format!("network expects {} inputs but got {}", net.input, input.shape()));
    }
    let mut rasters = Vec::with_capacity(net.layers.len() + 1);
    let first = if input.shape() == net.input { input.clone() } else { input.clone().reshaped(net.input)? };
    rasters.push(first);
    for layer in &net.layers {
        let next = layer.forward(rasters.last().unwrap())?;
        rasters.push(next);
    }
    Ok(Activations { rasters })
}

/// Winner-takes-all readout: the earliest output spike; silent neurons count
/// as `t_max + 1` and ties go to the lowest index.
pub fn classify(output: &SpikeRaster) -> usize {
    let late = u64::from(output.t_max()) + 1;
    let mut best = (u64::MAX, 0usize);
    for (i, t) in output.iter().enumerate() {
        let t = t.map_or(late, u64::from);
        if t < best.0 {
            best = (t, i);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> NeuronParams {
        NeuronParams::new(40, 40, 5.0, 100).unwrap()
    }

    fn flat(times: &[Option<u32>]) -> SpikeRaster {
        SpikeRaster::from_times(Shape::Flat(times.len()), 100, times).unwrap()
    }

    fn maps(m: usize, h: usize, w: usize) -> Shape {
        Shape::Maps { maps: m, height: h, width: w }
    }

    fn random_raster(shape: Shape, density: f64, rng: &mut ChaCha8Rng) -> SpikeRaster {
        let times: Vec<Option<u32>> =
            (0..shape.len()).map(|_| rng.gen_bool(density).then(|| rng.gen_range(0..=60))).collect();
        SpikeRaster::from_times(shape, 100, &times).unwrap()
    }

    #[test]
    fn dense_zero_weights_silent() {
        let spec = LayerSpec::new(LayerKind::Dense { n_out: 3 }, Shape::Flat(4), params()).unwrap();
        let state = LayerState::zeros(&spec, 0.1, 1.0);
        let out = dense_forward(&flat(&[Some(0), Some(5), None, Some(9)]), &spec, &state).unwrap();
        assert_eq!(out.spike_count(), 0);
    }

    #[test]
    fn dense_single_wire() {
        let p = params();
        let spec = LayerSpec::new(LayerKind::Dense { n_out: 2 }, Shape::Flat(2), p).unwrap();
        let mut state = LayerState::zeros(&spec, 0.1, 1.0);
        state.set_dense_weight(&spec, 1, 0, 2.0 * p.v_th);
        let out = dense_forward(&flat(&[Some(0), None]), &spec, &state).unwrap();
        assert_eq!(out.time(0), None);
        assert_eq!(out.time(1), Some(20));
    }

    #[test]
    fn dense_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = NeuronParams::new(10, 30, 1.0, 100).unwrap();
        let spec = LayerSpec::new(LayerKind::Dense { n_out: 6 }, Shape::Flat(12), p).unwrap();
        let state = LayerState::uniform(&spec, 0.0, 0.5, 0.1, 1.0, &mut rng);
        let input = random_raster(Shape::Flat(12), 0.7, &mut rng);
        let perm: Vec<usize> = (0..12).rev().collect();
        let mut permuted_state = state.clone();
        let mut permuted_times = vec![None; 12];
        for (new, &old) in perm.iter().enumerate() {
            permuted_times[new] = input.time(old);
            for o in 0..6 {
                permuted_state.set_dense_weight(&spec, o, new, state.dense_weight(&spec, o, old));
            }
        }
        let a = dense_forward(&input, &spec, &state).unwrap();
        let b = dense_forward(&flat(&permuted_times), &spec, &permuted_state).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dense_matches_per_neuron_first_spike() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = NeuronParams::new(13, 27, 2.0, 100).unwrap();
        let spec = LayerSpec::new(LayerKind::Dense { n_out: 9 }, Shape::Flat(20), p).unwrap();
        let state = LayerState::uniform(&spec, -0.3, 1.0, 0.1, 1.0, &mut rng);
        let input = random_raster(Shape::Flat(20), 0.6, &mut rng);
        let out = dense_forward(&input, &spec, &state).unwrap();
        for o in 0..9 {
            let w: Vec<f64> = (0..20).map(|i| state.dense_weight(&spec, o, i)).collect();
            assert_eq!(out.time(o), crate::dynamics::first_spike_time(&input, &w, &p).unwrap());
        }
    }

    #[test]
    fn conv_zero_filter_silent() {
        let spec = LayerSpec::new(LayerKind::Conv { maps: 2, kernel: 3 }, maps(1, 6, 6), params()).unwrap();
        let state = LayerState::zeros(&spec, 0.1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = conv_forward(&random_raster(maps(1, 6, 6), 0.9, &mut rng), &spec, &state).unwrap();
        assert_eq!(out.shape(), maps(2, 4, 4));
        assert_eq!(out.spike_count(), 0);
    }

    #[test]
    fn conv_full_window_equals_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = NeuronParams::new(10, 20, 1.5, 100).unwrap();
        let cspec = LayerSpec::new(LayerKind::Conv { maps: 3, kernel: 4 }, maps(2, 4, 4), p).unwrap();
        let cstate = LayerState::uniform(&cspec, 0.0, 0.6, 0.1, 1.0, &mut rng);
        let dspec = LayerSpec::new(LayerKind::Dense { n_out: 3 }, Shape::Flat(32), p).unwrap();
        let mut dstate = LayerState::zeros(&dspec, 0.1, 1.0);
        for d in 0..3 {
            for k in 0..32 {
                dstate.set_dense_weight(&dspec, d, k, cstate.weights[d * 32 + k]);
            }
        }
        for _ in 0..20 {
            let input = random_raster(maps(2, 4, 4), 0.7, &mut rng);
            let c = conv_forward(&input, &cspec, &cstate).unwrap();
            let d = dense_forward(&input, &dspec, &dstate).unwrap();
            assert_eq!(c.raw(), d.raw());
        }
    }

    #[test]
    fn conv_translation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = NeuronParams::new(10, 20, 1.0, 100).unwrap();
        let spec = LayerSpec::new(LayerKind::Conv { maps: 2, kernel: 3 }, maps(1, 8, 8), p).unwrap();
        let state = LayerState::uniform(&spec, 0.0, 0.8, 0.1, 1.0, &mut rng);
        let base = random_raster(maps(1, 8, 8), 0.6, &mut rng);
        // shift right by one column; column 0 becomes silent
        let mut shifted = SpikeRaster::silent(maps(1, 8, 8), 100);
        for y in 0..8 {
            for x in 1..8 {
                shifted.set(y * 8 + x, base.time(y * 8 + x - 1)).unwrap();
            }
        }
        let a = conv_forward(&base, &spec, &state).unwrap();
        let b = conv_forward(&shifted, &spec, &state).unwrap();
        for d in 0..2 {
            for y in 0..6 {
                for x in 0..5 {
                    assert_eq!(a.time(idx(d, y, x, 6, 6)), b.time(idx(d, y, x + 1, 6, 6)));
                }
            }
        }
    }

    #[test]
    fn conv_filter_perturbation_is_shared() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = NeuronParams::new(10, 20, 1.0, 100).unwrap();
        let spec = LayerSpec::new(LayerKind::Conv { maps: 1, kernel: 2 }, maps(1, 5, 5), p).unwrap();
        let mut state = LayerState::uniform(&spec, 0.2, 0.6, 0.1, 1.0, &mut rng);
        state.weights[3] += 0.7;
        let input = random_raster(maps(1, 5, 5), 0.8, &mut rng);
        let out = conv_forward(&input, &spec, &state).unwrap();
        // every output position recomputed independently with the same perturbed filter
        for y in 0..4 {
            for x in 0..4 {
                let mut times = Vec::new();
                for ky in 0..2 {
                    for kx in 0..2 {
                        times.push(input.time((y + ky) * 5 + x + kx));
                    }
                }
                let local = flat(&times);
                let expect = crate::dynamics::first_spike_time(&local, &state.weights, &p).unwrap();
                assert_eq!(out.time(y * 4 + x), expect);
            }
        }
    }

    #[test]
    fn pool_examples() {
        let spec = LayerSpec::new(LayerKind::Pool { window: 2, stride: 2 }, maps(1, 2, 2), params()).unwrap();
        let input = SpikeRaster::from_times(maps(1, 2, 2), 100, &[Some(12), Some(30), None, Some(45)]).unwrap();
        assert_eq!(pool_forward(&input, &spec).unwrap().time(0), Some(12));
        let silent = SpikeRaster::silent(maps(1, 2, 2), 100);
        assert_eq!(pool_forward(&silent, &spec).unwrap().time(0), None);
    }

    #[test]
    fn pool_window_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = LayerSpec::new(LayerKind::Pool { window: 1, stride: 1 }, maps(3, 5, 4), params()).unwrap();
        let input = random_raster(maps(3, 5, 4), 0.5, &mut rng);
        assert_eq!(pool_forward(&input, &spec).unwrap(), input);
    }

    #[test]
    fn pool_equals_unit_if_neuron() {
        // an IF neuron with unit weights and unit threshold fires at its first input
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = LayerSpec::new(LayerKind::Pool { window: 2, stride: 2 }, maps(2, 6, 6), params()).unwrap();
        let input = random_raster(maps(2, 6, 6), 0.4, &mut rng);
        let out = pool_forward(&input, &spec).unwrap();
        for m in 0..2 {
            for y in 0..3 {
                for x in 0..3 {
                    let mut potential = 0.0;
                    let mut fired = None;
                    for t in 0..=100u32 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                if input.time(idx(m, 2 * y + dy, 2 * x + dx, 6, 6)) == Some(t) {
                                    potential += 1.0;
                                }
                            }
                        }
                        if potential >= 1.0 {
                            fired = Some(t);
                            break;
                        }
                    }
                    assert_eq!(out.time(idx(m, y, x, 3, 3)), fired);
                }
            }
        }
    }

    #[test]
    fn experiment_architecture_shapes() {
        let p = params();
        let c = LayerSpec::new(LayerKind::Conv { maps: 40, kernel: 5 }, maps(1, 28, 28), p).unwrap();
        assert_eq!(c.output, maps(40, 24, 24));
        let pl = LayerSpec::new(LayerKind::Pool { window: 2, stride: 2 }, c.output, p).unwrap();
        assert_eq!(pl.output, maps(40, 12, 12));
        let h = LayerSpec::new(LayerKind::Dense { n_out: 1000 }, pl.output, p).unwrap();
        assert_eq!(h.output, Shape::Flat(1000));
        assert!(LayerSpec::new(LayerKind::Conv { maps: 40, kernel: 30 }, maps(1, 28, 28), p).is_err());
    }

    #[test]
    fn empty_network_returns_input() {
        let net = Network::new(Shape::Flat(3), 100, vec![]).unwrap();
        let input = flat(&[Some(1), None, Some(7)]);
        let acts = network_forward(&input, &net).unwrap();
        assert_eq!(acts.output(), &input);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&flat(&[Some(30), Some(10), Some(80)])), 1);
        assert_eq!(classify(&flat(&[None, None, None])), 0);
        assert_eq!(classify(&flat(&[Some(10), Some(10), Some(80)])), 0);
        assert_eq!(classify(&flat(&[None, Some(100), None])), 1);
    }
}
