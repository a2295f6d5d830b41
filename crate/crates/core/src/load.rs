//! Exponentially weighted load average, the stand-in for a host's one-minute
//! run-queue average.

use crate::time::Micros;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadProxy {
    window: f64,
    value: f64,
}

impl LoadProxy {
    pub const ONE_MINUTE: f64 = 60.0;

    pub fn new(window_secs: f64) -> Self {
        Self { window: window_secs, value: 0.0 }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Folds in an observation that held for `elapsed`:
    /// `v <- v * e^(-dt/w) + x * (1 - e^(-dt/w))`.
    pub fn update(&mut self, observed: f64, elapsed: Micros) -> f64 {
        let decay = libm::exp(-elapsed.as_secs_f64().max(0.0) / self.window);
        self.value = self.value * decay + observed * (1.0 - decay);
        self.value
    }
}

impl Default for LoadProxy {
    fn default() -> Self {
        Self::new(Self::ONE_MINUTE)
    }
}
