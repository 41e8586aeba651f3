//! Central-difference checks of the potential's derivatives.
//!
//! `dv/dw` is the kernel value and `dv/dt_j` is the piecewise-constant kernel
//! slope. The derivative of the spike time with respect to the potential is
//! a linearisation, not an identity, so it is deliberately not checked here.

use std::fmt;

use crate::dynamics::{membrane_potential, psp_kernel, psp_slope_wrt_presyn_time};
use crate::layers::network_forward;
use crate::verify::oracle::potential_at;
use crate::verify::TinyNetCase;

pub const WEIGHT_TOLERANCE: f64 = 1e-6;
pub const TIME_TOLERANCE: f64 = 1e-3;

/// Largest relative errors seen, with how many comparisons went into each.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FdReport {
    pub weight_checks: usize,
    pub weight_max_rel: f64,
    pub time_checks: usize,
    /// Time checks where the analytic slope is non-zero.
    pub time_active: usize,
    pub time_max_rel: f64,
    pub kinks_skipped: usize,
}

impl FdReport {
    pub fn merge(&mut self, o: &FdReport) {
        self.weight_checks += o.weight_checks;
        self.weight_max_rel = self.weight_max_rel.max(o.weight_max_rel);
        self.time_checks += o.time_checks;
        self.time_active += o.time_active;
        self.time_max_rel = self.time_max_rel.max(o.time_max_rel);
        self.kinks_skipped += o.kinks_skipped;
    }

    pub fn passes(&self) -> bool {
        self.weight_max_rel <= WEIGHT_TOLERANCE && self.time_max_rel <= TIME_TOLERANCE
    }
}

impl fmt::Display for FdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dv/dw max rel {:.2e} over {} checks; dv/dt max rel {:.2e} over {} checks ({} non-zero, {} at kinks skipped)",
            self.weight_max_rel, self.weight_checks, self.time_max_rel, self.time_checks, self.time_active, self.kinks_skipped
        )
    }
}

fn rel_err(numeric: f64, analytic: f64) -> f64 {
    let d = (numeric - analytic).abs();
    if analytic == 0.0 {
        d
    } else {
        d / analytic.abs()
    }
}

/// Check both derivatives for every synapse of every layer, evaluated at each
/// neuron's own spike time (or `t_max` when it stays silent).
///
/// `h` perturbs weights; presynaptic times move by one fine step `1/resolution`.
pub fn finite_difference_suite(case: &TinyNetCase, h: f64, resolution: u32) -> FdReport {
    let acts = network_forward(&case.input, &case.network).expect("tiny cases are well formed");
    let delta = 1.0 / f64::from(resolution);
    let mut r = FdReport::default();
    for (l, layer) in case.network.layers.iter().enumerate() {
        let p = &layer.spec.params;
        let pre = &acts.rasters[l];
        let post = &acts.rasters[l + 1];
        let pre_f: Vec<Option<f64>> = pre.iter().map(|t| t.map(f64::from)).collect();
        let kinks = [0.0, f64::from(p.tau1), f64::from(p.tau())];
        for (j, row) in case.weight_rows(l).iter().enumerate() {
            let t = post.time_or_max(j);
            let mut w = row.clone();
            for i in 0..row.len() {
                w[i] = row[i] + h;
                let up = membrane_potential(pre, &w, t, p).expect("lengths match");
                w[i] = row[i] - h;
                let down = membrane_potential(pre, &w, t, p).expect("lengths match");
                w[i] = row[i];
                let analytic = pre.time(i).map_or(0.0, |ti| psp_kernel(i64::from(t) - i64::from(ti), p));
                r.weight_max_rel = r.weight_max_rel.max(rel_err((up - down) / (2.0 * h), analytic));
                r.weight_checks += 1;

                let Some(ti) = pre.time(i) else { continue };
                let dt = f64::from(t) - f64::from(ti);
                if kinks.iter().any(|k| (dt - k).abs() <= delta) {
                    r.kinks_skipped += 1;
                    continue;
                }
                let mut shifted = pre_f.clone();
                shifted[i] = Some(f64::from(ti) + delta);
                let later = potential_at(&shifted, row, f64::from(t), p);
                shifted[i] = Some(f64::from(ti) - delta);
                let earlier = potential_at(&shifted, row, f64::from(t), p);
                let analytic = psp_slope_wrt_presyn_time(i64::from(t) - i64::from(ti), row[i], p);
                r.time_max_rel = r.time_max_rel.max(rel_err((later - earlier) / (2.0 * delta), analytic));
                r.time_checks += 1;
                r.time_active += usize::from(analytic != 0.0);
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::NeuronParams;
    use crate::verify::{TinyNetConfig, DEFAULT_RESOLUTION};

    #[test]
    fn fifty_seeded_cases_pass() {
        let mut total = FdReport::default();
        for s in 0..50 {
            let c = TinyNetCase::generate(s, TinyNetConfig::default());
            total.merge(&finite_difference_suite(&c, 1e-4 * c.config.weight_scale(), DEFAULT_RESOLUTION));
        }
        assert!(total.passes(), "{total}");
        assert!(total.time_active > 100, "{total}");
    }

    #[test]
    fn potential_is_linear_in_weights() {
        let c = TinyNetCase::generate(5, TinyNetConfig::default());
        let r = finite_difference_suite(&c, 1e-4, DEFAULT_RESOLUTION);
        assert!(r.weight_max_rel < 1e-9, "{r}");
    }

    #[test]
    fn segment_slopes() {
        let p = NeuronParams::new(4, 8, 1.0, 50).unwrap();
        let w = 1.7;
        let fd = |dt: f64| {
            (w * crate::dynamics::psp_kernel_at(dt + 0.01, &p) - w * crate::dynamics::psp_kernel_at(dt - 0.01, &p))
                / 0.02
        };
        // dv/dt_j = -dv/d(dt)
        assert!((-fd(2.0) - psp_slope_wrt_presyn_time(2, w, &p)).abs() < 1e-9);
        assert!((psp_slope_wrt_presyn_time(2, w, &p) + w / 4.0).abs() < 1e-12);
        assert!((-fd(7.0) - psp_slope_wrt_presyn_time(7, w, &p)).abs() < 1e-9);
        assert!((psp_slope_wrt_presyn_time(7, w, &p) - w / 8.0).abs() < 1e-12);
    }

    #[test]
    fn rel_err_handles_zero_analytic() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert_eq!(rel_err(1e-3, 0.0), 1e-3);
        assert!((rel_err(1.01, 1.0) - 0.01).abs() < 1e-12);
    }
}
