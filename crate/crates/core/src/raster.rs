//! The inter-layer value: one optional spike time per neuron.

use crate::error::{shape_err, Error, Result};

/// Sentinel stored for neurons that never fire.
pub(crate) const NO_SPIKE: u32 = u32::MAX;

/// Spatial layout of a layer's neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Flat(usize),
    /// maps × height × width, row-major.
    Maps {
        maps: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Maps { maps, height, width } => maps * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// View any shape as maps × height × width (flat `n` becomes `n × 1 × 1`).
    pub fn as_maps(&self) -> (usize, usize, usize) {
        match *self {
            Shape::Flat(n) => (n, 1, 1),
            Shape::Maps { maps, height, width } => (maps, height, width),
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Flat(n) => write!(f, "{n}"),
            Shape::Maps { maps, height, width } => write!(f, "{maps}x{height}x{width}"),
        }
    }
}

/// Per-neuron first-spike times for one layer activation.
///
/// Every neuron carries at most one spike, at an integer step in `[0, t_max]`,
/// or no spike at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRaster {
    shape: Shape,
    t_max: u32,
    times: Vec<u32>,
}

impl SpikeRaster {
    /// A raster in which no neuron fires.
    pub fn silent(shape: Shape, t_max: u32) -> Self {
        Self { shape, t_max, times: vec![NO_SPIKE; shape.len()] }
    }

    pub fn from_times(shape: Shape, t_max: u32, times: &[Option<u32>]) -> Result<Self> {
        if times.len() != shape.len() {
            return shape_err(format!("{} times for shape {shape}", times.len()));
        }
        let mut raster = Self::silent(shape, t_max);
        for (i, t) in times.iter().enumerate() {
            raster.set(i, *t)?;
        }
        Ok(raster)
    }

    pub(crate) fn from_raw(shape: Shape, t_max: u32, times: Vec<u32>) -> Self {
        debug_assert_eq!(times.len(), shape.len());
        debug_assert!(times.iter().all(|&t| t == NO_SPIKE || t <= t_max));
        Self { shape, t_max, times }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, i: usize) -> Option<u32> {
        match self.times[i] {
            NO_SPIKE => None,
            t => Some(t),
        }
    }

    /// Spike time with silent neurons read as `t_max`, the convention used by
    /// every learning formula.
    #[inline]
    pub fn time_or_max(&self, i: usize) -> u32 {
        self.times[i].min(self.t_max)
    }

    pub fn set(&mut self, i: usize, t: Option<u32>) -> Result<()> {
        match t {
            Some(t) if t > self.t_max => {
                Err(Error::InputDomain(format!("spike time {t} exceeds horizon {}", self.t_max)))
            }
            Some(t) => {
                self.times[i] = t;
                Ok(())
            }
            None => {
                self.times[i] = NO_SPIKE;
                Ok(())
            }
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Option<u32>> + '_ {
        self.times.iter().map(|&t| if t == NO_SPIKE { None } else { Some(t) })
    }

    pub(crate) fn raw(&self) -> &[u32] {
        &self.times
    }

    pub fn spike_count(&self) -> usize {
        self.times.iter().filter(|&&t| t != NO_SPIKE).count()
    }

    /// Number of spikes emitted no later than `t`.
    pub fn spikes_until(&self, t: u32) -> usize {
        self.times.iter().filter(|&&s| s != NO_SPIKE && s <= t).count()
    }

    /// Same times, reinterpreted under a different shape of equal size.
    pub fn reshaped(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.times.len() {
            return shape_err(format!("cannot reshape {} into {shape}", self.shape));
        }
        self.shape = shape;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_times_past_horizon() {
        let mut r = SpikeRaster::silent(Shape::Flat(2), 10);
        assert!(r.set(0, Some(10)).is_ok());
        assert!(matches!(r.set(1, Some(11)), Err(Error::InputDomain(_))));
        assert_eq!(r.time(0), Some(10));
        assert_eq!(r.time(1), None);
        assert_eq!(r.time_or_max(1), 10);
    }

    #[test]
    fn counts_spikes() {
        let r = SpikeRaster::from_times(Shape::Flat(4), 100, &[Some(3), None, Some(50), Some(0)]).unwrap();
        assert_eq!(r.spike_count(), 3);
        assert_eq!(r.spikes_until(3), 2);
    }
}
