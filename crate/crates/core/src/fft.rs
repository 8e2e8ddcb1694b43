//! Separable N-dimensional complex FFTs on cubic arrays (last axis fastest).

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct CubeFft {
    dim: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CubeFft {
    pub fn new(dim: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        CubeFft {
            dim,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    /// Inverse transform in place, including the `1/n^N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        // last axis: contiguous lines
        plan.process(data);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in (0..self.dim.saturating_sub(1)).rev() {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            for start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (k, c) in line.iter_mut().enumerate() {
                        *c = data[base + k * stride];
                    }
                    plan.process(&mut line);
                    for (k, c) in line.iter().enumerate() {
                        data[base + k * stride] = *c;
                    }
                }
            }
        }
    }
}

/// Signed frequency index of FFT bin `j` of length `n` (Nyquist taken positive).
pub fn signed_freq(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}
