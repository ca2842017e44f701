//! Derivatives on the uniform grid.
//!
//! Periodic fields are differentiated spectrally through the radix-2 FFT.
//! Non-periodic fields (the unwrapped action) use high-order central
//! differences that shrink their stencil near masked points.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::fields::SpatialGrid;

pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: &SpatialGrid) -> Self {
        let n = grid.n_points();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let dk = 2.0 * std::f64::consts::PI / grid.length();
        let wavenumbers = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                m * dk
            })
            .collect();
        Self {
            n,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Angular wavenumbers in FFT order; the Nyquist entry is negative.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Unnormalized forward transform, `sum_j f_j exp(-2 pi i jk/n)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    /// Inverse transform including the `1/n` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        let scale = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn apply_multiplier(&self, values: &[Complex64], mult: impl Fn(usize, f64) -> Complex64) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.forward(&mut buf);
        for (j, v) in buf.iter_mut().enumerate() {
            *v *= mult(j, self.wavenumbers[j]);
        }
        self.inverse(&mut buf);
        buf
    }

    /// First derivative. The Nyquist mode is dropped so that the result of a
    /// real input stays real.
    pub fn derivative(&self, values: &[Complex64]) -> Vec<Complex64> {
        let nyq = self.n / 2;
        self.apply_multiplier(values, |j, k| {
            if j == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k)
            }
        })
    }

    pub fn second_derivative(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.apply_multiplier(values, |_, k| Complex64::new(-k * k, 0.0))
    }

    pub fn derivative_real(&self, values: &[f64]) -> Vec<f64> {
        let c: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.derivative(&c).into_iter().map(|z| z.re).collect()
    }

    pub fn second_derivative_real(&self, values: &[f64]) -> Vec<f64> {
        let c: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.second_derivative(&c).into_iter().map(|z| z.re).collect()
    }
}

// Central first-derivative weights for offsets 1..=r, orders 2, 4, 6, 8.
const CENTRAL_WEIGHTS: [&[f64]; 4] = [
    &[1.0 / 2.0],
    &[2.0 / 3.0, -1.0 / 12.0],
    &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
    &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
];

/// Gradient of a non-periodic sampled function.
///
/// At every point the widest centred stencil (up to eighth order) whose
/// points are all `valid` is used. Points whose two neighbours are not both
/// valid use a one-sided stencil into the valid side, second order where two
/// valid points are available.
pub fn finite_difference_gradient(values: &[f64], dq: f64, valid: &[bool]) -> Vec<f64> {
    let n = values.len();
    debug_assert_eq!(valid.len(), n);
    let mut out = vec![0.0; n];
    for j in 0..n {
        let max_r = j.min(n - 1 - j);
        let mut chosen = None;
        for (order, w) in CENTRAL_WEIGHTS.iter().enumerate().rev() {
            let r = order + 1;
            if r > max_r {
                continue;
            }
            if (j - r..=j + r).all(|i| valid[i]) {
                chosen = Some(*w);
                break;
            }
        }
        if let Some(w) = chosen {
            out[j] = w
                .iter()
                .enumerate()
                .map(|(i, c)| c * (values[j + i + 1] - values[j - i - 1]))
                .sum::<f64>()
                / dq;
            continue;
        }
        let ok = |i: isize| i >= 0 && (i as usize) < n && valid[i as usize];
        let v = |i: isize| values[i as usize];
        let ji = j as isize;
        out[j] = if ok(ji + 1) && ok(ji + 2) {
            (-3.0 * v(ji) + 4.0 * v(ji + 1) - v(ji + 2)) / (2.0 * dq)
        } else if ok(ji - 1) && ok(ji - 2) {
            (3.0 * v(ji) - 4.0 * v(ji - 1) + v(ji - 2)) / (2.0 * dq)
        } else if ok(ji + 1) {
            (v(ji + 1) - v(ji)) / dq
        } else if ok(ji - 1) {
            (v(ji) - v(ji - 1)) / dq
        } else if j > 0 && j < n - 1 {
            (v(ji + 1) - v(ji - 1)) / (2.0 * dq)
        } else if j == 0 {
            (v(1) - v(0)) / dq
        } else {
            (v(ji) - v(ji - 1)) / dq
        };
    }
    out
}
