//! Binary-weight mode.
//!
//! The forward pass sees `alpha * sign(w)`; learning keeps updating the
//! real-valued `w` and additionally trains the scaling factor(s) `alpha`.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::dynamics::{membrane_potential, psp_kernel, NeuronParams};
use crate::error::{shape_err, Error, Result};
use crate::layers::{LayerKind, LayerSpec, LayerState};
use crate::learning::{error_gains, kernel_table, temporal_errors, TargetTimes};
use crate::raster::{SpikeRaster, NO_SPIKE};

/// How many scaling factors a layer carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaGranularity {
    /// One factor shared by the whole layer.
    #[default]
    PerLayer,
    /// One factor per convolution filter (dense layers fall back to one).
    PerFilter,
}

impl AlphaGranularity {
    pub fn count(&self, spec: &LayerSpec) -> usize {
        match (self, spec.kind) {
            (AlphaGranularity::PerFilter, LayerKind::Conv { maps, .. }) => maps,
            _ => 1,
        }
    }
}

/// Scaling factors of one binary layer. Sign weights are never stored; they
/// are always derived from the real-valued weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryState {
    pub alpha: Vec<f64>,
    /// Scaling-factor learning rate.
    pub mu: f64,
    pub granularity: AlphaGranularity,
}

static NEGATIVE_ALPHA_WARNED: AtomicBool = AtomicBool::new(false);

impl BinaryState {
    pub fn new(spec: &LayerSpec, granularity: AlphaGranularity, alpha: Vec<f64>, mu: f64) -> Result<Self> {
        let s = Self { alpha, mu, granularity };
        s.check(spec)?;
        Ok(s)
    }

    pub(crate) fn check(&self, spec: &LayerSpec) -> Result<()> {
        let want = self.granularity.count(spec);
        if self.alpha.len() != want {
            return shape_err(format!("{} scaling factors where {want} are needed", self.alpha.len()));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn alpha_for_group(&self, g: usize) -> f64 {
        if self.alpha.len() == 1 {
            self.alpha[0]
        } else {
            self.alpha[g]
        }
    }

    pub(crate) fn note_negative_alpha(&self) {
        if self.alpha.iter().any(|&a| a < 0.0) && !NEGATIVE_ALPHA_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("a scaling factor went negative; effective weight signs are inverted for that group");
        }
    }
}

/// Elementwise sign with `sign(0) = +1`.
pub fn binarize(real: &[f64]) -> Vec<i8> {
    real.iter().map(|&w| if w >= 0.0 { 1 } else { -1 }).collect()
}

/// `alpha * sum_j s_j * kernel(t - t_j)` for sign weights `s_j`.
pub fn binary_membrane_potential(
    inputs: &SpikeRaster,
    sign_weights: &[i8],
    alpha: f64,
    t: u32,
    p: &NeuronParams,
) -> Result<f64> {
    let w: Vec<f64> = sign_weights.iter().map(|&s| f64::from(s)).collect();
    Ok(alpha * membrane_potential(inputs, &w, t, p)?)
}

/// Gradient-descent change of the scaling factor(s):
///
/// `d_alpha = -mu * sum_i (e_i / t_max) * (t_i / v_th) * sum_j s_ij * kernel(t_i - t_j)`
///
/// with the sum running over the neurons of each alpha group.
pub fn alpha_update(
    pre: &SpikeRaster,
    post: &SpikeRaster,
    targets: &TargetTimes,
    spec: &LayerSpec,
    state: &LayerState,
) -> Result<Vec<f64>> {
    let errors = temporal_errors(post, targets)?;
    alpha_gradient(pre, post, &errors, spec, state)
}

pub(crate) fn alpha_gradient(
    pre: &SpikeRaster,
    post: &SpikeRaster,
    errors: &[f64],
    spec: &LayerSpec,
    state: &LayerState,
) -> Result<Vec<f64>> {
    let Some(b) = &state.binary else {
        return Err(Error::Mode("alpha update on a real-valued layer".into()));
    };
    if pre.len() != spec.input.len() || post.len() != spec.output.len() || errors.len() != post.len() {
        return shape_err("alpha update shapes do not match the layer");
    }
    let p = &spec.params;
    let gains = error_gains(post, errors, p);
    let mut grad = vec![0.0; b.alpha.len()];
    match spec.kind {
        LayerKind::Dense { n_out } => {
            let table = kernel_table(post, &gains, p);
            let mut total = 0.0;
            for (i, &t) in pre.raw().iter().enumerate() {
                if t == NO_SPIKE {
                    continue;
                }
                let row = &table[t as usize * n_out..(t as usize + 1) * n_out];
                let w = &state.weights[i * n_out..(i + 1) * n_out];
                total += row.iter().zip(w).map(|(g, &w)| if w >= 0.0 { *g } else { -*g }).sum::<f64>();
            }
            grad[0] = total;
        }
        LayerKind::Conv { maps, kernel } => {
            let (in_maps, h, w) = spec.input.as_maps();
            let (_, oh, ow) = spec.output.as_maps();
            let flen = spec.filter_len();
            for d in 0..maps {
                let g = if grad.len() == 1 { 0 } else { d };
                for y in 0..oh {
                    for x in 0..ow {
                        let j = (d * oh + y) * ow + x;
                        if gains[j] == 0.0 {
                            continue;
                        }
                        let tj = i64::from(post.time_or_max(j));
                        let mut u = 0.0;
                        for n in 0..in_maps {
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let ti = pre.raw()[(n * h + y + ky) * w + x + kx];
                                    if ti == NO_SPIKE {
                                        continue;
                                    }
                                    let s = if state.weights[d * flen + (n * kernel + ky) * kernel + kx] >= 0.0 {
                                        1.0
                                    } else {
                                        -1.0
                                    };
                                    u += s * psp_kernel(tj - i64::from(ti), p);
                                }
                            }
                        }
                        grad[g] += gains[j] * u;
                    }
                }
            }
        }
        LayerKind::Pool { .. } => return Err(Error::Mode("pooling layers have no scaling factor".into())),
    }
    Ok(grad.into_iter().map(|g| -b.mu * g).collect())
}

/// Sign weights packed eight per byte, least significant bit first; a set bit means `+1`.
pub fn pack_signs(real: &[f64]) -> Vec<u8> {
    let mut out = vec![0u8; real.len().div_ceil(8)];
    for (i, &w) in real.iter().enumerate() {
        if w >= 0.0 {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn unpack_signs(packed: &[u8], n: usize) -> Result<Vec<i8>> {
    if packed.len() != n.div_ceil(8) {
        return Err(Error::Length(format!("{} packed bytes for {n} weights", packed.len())));
    }
    Ok((0..n).map(|i| if packed[i / 8] >> (i % 8) & 1 == 1 { 1 } else { -1 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::first_spike_time;
    use crate::layers::{conv_forward, dense_forward, LayerKind};
    use crate::layers::{Layer, Network};
    use crate::learning::{train_step, TrainConfig};
    use crate::raster::Shape;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> NeuronParams {
        NeuronParams::new(40, 40, 5.0, 100).unwrap()
    }

    fn random_raster(shape: Shape, rng: &mut ChaCha8Rng) -> SpikeRaster {
        let times: Vec<Option<u32>> =
            (0..shape.len()).map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(0..=60))).collect();
        SpikeRaster::from_times(shape, 100, &times).unwrap()
    }

    fn binary_state(spec: &LayerSpec, weights: Vec<f64>, alpha: Vec<f64>, g: AlphaGranularity) -> LayerState {
        let mut s = LayerState::zeros(spec, 0.01, 1.0);
        s.weights = weights;
        s.binary = Some(BinaryState::new(spec, g, alpha, 0.1).unwrap());
        s
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize(&[-0.3, 0.7]), vec![-1, 1]);
        assert_eq!(binarize(&[0.0]), vec![1]);
        assert_eq!(binarize(&[-1.0, 1.0, 1.0]), vec![-1, 1, 1]);
    }

    #[test]
    fn potential_examples() {
        let p = params();
        let x = SpikeRaster::from_times(Shape::Flat(3), 100, &[Some(0), Some(10), None]).unwrap();
        let s = [1i8, -1, 1];
        let real = membrane_potential(&x, &[1.0, -1.0, 1.0], 30, &p).unwrap();
        assert_eq!(binary_membrane_potential(&x, &s, 1.0, 30, &p).unwrap(), real);
        assert_eq!(binary_membrane_potential(&x, &s, 0.0, 30, &p).unwrap(), 0.0);
        let v = binary_membrane_potential(&x, &s, 1.5, 30, &p).unwrap();
        assert_relative_eq!(binary_membrane_potential(&x, &s, 3.0, 30, &p).unwrap(), 2.0 * v);
    }

    #[test]
    fn single_term_alpha_update() {
        let spec = LayerSpec::new(LayerKind::Dense { n_out: 1 }, Shape::Flat(1), params()).unwrap();
        let state = binary_state(&spec, vec![-0.4], vec![1.0], AlphaGranularity::PerLayer);
        let pre = SpikeRaster::from_times(Shape::Flat(1), 100, &[Some(0)]).unwrap();
        let post = SpikeRaster::from_times(Shape::Flat(1), 100, &[Some(20)]).unwrap();
        let t = TargetTimes::new(vec![40.0], 100).unwrap();
        let da = alpha_update(&pre, &post, &t, &spec, &state).unwrap();
        // -mu * (e/T) * (t/v_th) * s * kernel, with s = -1
        let s = -1.0;
        assert_relative_eq!(da[0], -0.1 * (0.2 / 100.0) * (20.0 / 5.0) * s * 0.5, max_relative = 1e-12);
        let mut faster = state.clone();
        faster.binary.as_mut().unwrap().mu = 0.3;
        assert_relative_eq!(
            alpha_update(&pre, &post, &t, &spec, &faster).unwrap()[0],
            3.0 * da[0],
            max_relative = 1e-12
        );
        let met = TargetTimes::from_actual(&post);
        assert_eq!(alpha_update(&pre, &post, &met, &spec, &state).unwrap(), vec![0.0]);
    }

    #[test]
    fn alpha_update_needs_binary_state() {
        let spec = LayerSpec::new(LayerKind::Dense { n_out: 1 }, Shape::Flat(1), params()).unwrap();
        let state = LayerState::zeros(&spec, 0.01, 1.0);
        let x = SpikeRaster::silent(Shape::Flat(1), 100);
        assert!(matches!(alpha_update(&x, &x, &TargetTimes::from_actual(&x), &spec, &state), Err(Error::Mode(_))));
    }

    #[test]
    fn per_filter_alphas_are_independent() {
        let input = Shape::Maps { maps: 1, height: 3, width: 3 };
        let spec = LayerSpec::new(LayerKind::Conv { maps: 2, kernel: 3 }, input, params()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let state = binary_state(&spec, w, vec![1.0, 2.0], AlphaGranularity::PerFilter);
        let pre = random_raster(input, &mut rng);
        let post = SpikeRaster::from_times(spec.output, 100, &[Some(60), Some(70)]).unwrap();
        let only_first = TargetTimes::new(vec![40.0, 70.0], 100).unwrap();
        let da = alpha_update(&pre, &post, &only_first, &spec, &state).unwrap();
        assert_eq!(da.len(), 2);
        assert_eq!(da[1], 0.0);
    }

    proptest! {
        #[test]
        fn unit_alpha_matches_real_forward(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = NeuronParams::new(rng.gen_range(1..50), rng.gen_range(1..50), rng.gen_range(0.5..4.0), 100).unwrap();
            let spec = LayerSpec::new(LayerKind::Dense { n_out: 5 }, Shape::Flat(12), p).unwrap();
            let signs: Vec<f64> = (0..60).map(|_| if rng.gen_bool(0.6) { 1.0 } else { -1.0 }).collect();
            let mut real = LayerState::zeros(&spec, 0.0, 0.0);
            real.weights = signs.clone();
            let bin = binary_state(&spec, signs, vec![1.0], AlphaGranularity::PerLayer);
            let x = random_raster(Shape::Flat(12), &mut rng);
            prop_assert_eq!(dense_forward(&x, &spec, &real).unwrap(), dense_forward(&x, &spec, &bin).unwrap());

            let input = Shape::Maps { maps: 2, height: 6, width: 6 };
            let cs = LayerSpec::new(LayerKind::Conv { maps: 3, kernel: 3 }, input, p).unwrap();
            let signs: Vec<f64> = (0..cs.weight_len()).map(|_| if rng.gen_bool(0.6) { 1.0 } else { -1.0 }).collect();
            let mut real = LayerState::zeros(&cs, 0.0, 0.0);
            real.weights = signs.clone();
            let bin = binary_state(&cs, signs, vec![1.0; 3], AlphaGranularity::PerFilter);
            let x = random_raster(input, &mut rng);
            prop_assert_eq!(conv_forward(&x, &cs, &real).unwrap(), conv_forward(&x, &cs, &bin).unwrap());
        }

        #[test]
        fn scaled_binary_neuron_matches_scaled_weights(seed in any::<u64>(), alpha in 0.1f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = LayerSpec::new(LayerKind::Dense { n_out: 1 }, Shape::Flat(10), params()).unwrap();
            let w: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bin = binary_state(&spec, w.clone(), vec![alpha], AlphaGranularity::PerLayer);
            let x = random_raster(Shape::Flat(10), &mut rng);
            let eff: Vec<f64> = binarize(&w).iter().map(|&s| alpha * f64::from(s)).collect();
            let direct = first_spike_time(&x, &eff, &spec.params).unwrap();
            prop_assert_eq!(dense_forward(&x, &spec, &bin).unwrap().time(0), direct);
        }

        #[test]
        fn pack_round_trip(w in proptest::collection::vec(-2.0f64..2.0, 0..70)) {
            let packed = pack_signs(&w);
            prop_assert_eq!(packed.len(), w.len().div_ceil(8));
            prop_assert_eq!(unpack_signs(&packed, w.len()).unwrap(), binarize(&w));
        }
    }

    #[test]
    fn packed_sizes() {
        assert_eq!(pack_signs(&[0.5; 800]).len(), 100);
        assert_eq!(pack_signs(&[-0.5; 1000]).len(), 125);
        assert!(unpack_signs(&[0u8; 3], 30).is_err());
    }

    #[test]
    fn signs_follow_real_weights_through_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = LayerSpec::new(LayerKind::Dense { n_out: 5 }, Shape::Flat(8), params()).unwrap();
        let o = LayerSpec::new(LayerKind::Dense { n_out: 3 }, h.output, params()).unwrap();
        let mk = |s: &LayerSpec, rng: &mut ChaCha8Rng| {
            let mut st = LayerState::uniform(s, -0.2, 1.0, 5.0, 50.0, rng);
            st.binary = Some(BinaryState::new(s, AlphaGranularity::PerLayer, vec![2.0], 0.1).unwrap());
            st
        };
        let layers =
            vec![Layer { spec: h, state: Some(mk(&h, &mut rng)) }, Layer { spec: o, state: Some(mk(&o, &mut rng)) }];
        let mut net = Network::new(Shape::Flat(8), 100, layers).unwrap();
        for k in 0..30 {
            let x = random_raster(Shape::Flat(8), &mut rng);
            train_step(&x, k % 3, &mut net, &TrainConfig::default()).unwrap();
            for l in &net.layers {
                let st = l.state.as_ref().unwrap();
                let x = random_raster(Shape::Flat(l.spec.input.len()), &mut rng);
                let mut real = st.clone();
                let a = st.binary.as_ref().unwrap().alpha[0];
                real.weights = binarize(&st.weights).iter().map(|&s| a * f64::from(s)).collect();
                real.binary = None;
                assert_eq!(dense_forward(&x, &l.spec, st).unwrap(), dense_forward(&x, &l.spec, &real).unwrap());
            }
        }
    }

    #[test]
    fn binary_step_rejects_real_layers() {
        let spec = LayerSpec::new(LayerKind::Dense { n_out: 2 }, Shape::Flat(2), params()).unwrap();
        let layers = vec![Layer { spec, state: Some(LayerState::zeros(&spec, 0.1, 1.0)) }];
        let mut net = Network::new(Shape::Flat(2), 100, layers).unwrap();
        let x = SpikeRaster::silent(Shape::Flat(2), 100);
        let r = crate::learning::binary_train_step(&x, 0, &mut net, &TrainConfig::default());
        assert!(matches!(r, Err(Error::Mode(_))));
    }
}
