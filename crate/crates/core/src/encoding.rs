//! Intensity-to-latency input coding.
//!
//! Brighter pixels spike earlier: `t = round(t_max * (1 - p / intensity_max))`.
//! Black pixels (`p = 0`) stay silent.

use crate::error::{Error, Result};
use crate::raster::{Shape, SpikeRaster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub t_max: u32,
    pub intensity_max: u32,
}

impl EncodingConfig {
    pub fn new(t_max: u32, intensity_max: u32) -> Result<Self> {
        if t_max < 1 || intensity_max < 1 {
            return Err(Error::Config(format!(
                "encoding needs t_max >= 1 and intensity_max >= 1 (got {t_max}, {intensity_max})"
            )));
        }
        Ok(Self { t_max, intensity_max })
    }
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { t_max: 100, intensity_max: 255 }
    }
}

/// Spike time for a single nonzero intensity.
#[inline]
fn latency(p: u32, cfg: &EncodingConfig) -> u32 {
    let frac = 1.0 - f64::from(p) / f64::from(cfg.intensity_max);
    (f64::from(cfg.t_max) * frac).round() as u32
}

/// Encode a row-major `height × width` grid into a `1 × height × width` raster.
pub fn encode_image<P>(pixels: &[P], height: usize, width: usize, cfg: &EncodingConfig) -> Result<SpikeRaster>
where
    P: Copy + Into<u32>,
{
    if pixels.len() != height * width {
        return Err(Error::Shape(format!("{} pixels for a {height}x{width} image", pixels.len())));
    }
    let shape = Shape::Maps { maps: 1, height, width };
    let mut times = Vec::with_capacity(pixels.len());
    for (i, &px) in pixels.iter().enumerate() {
        let p: u32 = px.into();
        if p > cfg.intensity_max {
            return Err(Error::InputDomain(format!("pixel {i} has intensity {p} above {}", cfg.intensity_max)));
        }
        times.push(if p == 0 { crate::raster::NO_SPIKE } else { latency(p, cfg) });
    }
    Ok(SpikeRaster::from_raw(shape, cfg.t_max, times))
}

/// Map a raster back to intensities (silent neurons become 0).
///
/// Each spike time is mapped to the intensity closest to the exact inverse of
/// the linear code among those that encode back to the same time.
pub fn decode_raster(raster: &SpikeRaster, cfg: &EncodingConfig) -> Vec<u32> {
    raster.iter().map(|t| t.map_or(0, |t| invert(t, cfg))).collect()
}

fn invert(t: u32, cfg: &EncodingConfig) -> u32 {
    let exact = f64::from(cfg.intensity_max) * (1.0 - f64::from(t) / f64::from(cfg.t_max));
    let guess = (exact.round() as i64).clamp(1, i64::from(cfg.intensity_max));
    let lo = (guess - 2).max(1);
    let hi = (guess + 2).min(i64::from(cfg.intensity_max));
    (lo..=hi)
        .filter(|&p| latency(p as u32, cfg) == t)
        .min_by(|&a, &b| {
            let da = (a as f64 - exact).abs();
            let db = (b as f64 - exact).abs();
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .unwrap_or(guess) as u32
}
