use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Periodic grid with `size` points per axis on `[0, 2π)^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    pub n: usize,
    pub size: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.size.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.size as f64
    }

    /// Volume element `h^n` of the discrete integral.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// Multi-index of a flat position, last axis fastest.
    pub fn unflatten(&self, mut idx: usize, out: &mut [usize]) {
        for d in (0..self.n).rev() {
            out[d] = idx % self.size;
            idx /= self.size;
        }
    }

    /// Signed frequency of an FFT bin; `None` for the Nyquist bin.
    pub fn frequency(&self, i: usize) -> Option<f64> {
        let half = self.size / 2;
        match i.cmp(&half) {
            std::cmp::Ordering::Less => Some(i as f64),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(i as f64 - self.size as f64),
        }
    }

    /// Frequency vectors of all bins (flat order); `None` where any axis sits
    /// at the Nyquist bin.
    pub fn frequencies(&self) -> Vec<Option<Vec<f64>>> {
        let mut idx = vec![0; self.n];
        (0..self.len())
            .map(|p| {
                self.unflatten(p, &mut idx);
                idx.iter().map(|&i| self.frequency(i)).collect()
            })
            .collect()
    }

    /// Coordinates of a grid point.
    pub fn point(&self, p: usize) -> Vec<f64> {
        let mut idx = vec![0; self.n];
        self.unflatten(p, &mut idx);
        idx.iter().map(|&i| i as f64 * self.spacing()).collect()
    }
}

/// Separable n-dimensional FFT along every axis.
pub struct NdFft {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl NdFft {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        NdFft {
            grid: grid.clone(),
            forward: planner.plan_fft_forward(grid.size),
            inverse: planner.plan_fft_inverse(grid.size),
        }
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let (n, m) = (self.grid.n, self.grid.size);
        assert_eq!(data.len(), self.grid.len());
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..n {
            let stride = m.pow((n - 1 - axis) as u32);
            let block = stride * m;
            for start in 0..data.len() / m {
                let base = (start / stride) * block + start % stride;
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + t * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (t, v) in line.iter().enumerate() {
                    data[base + t * stride] = *v;
                }
            }
        }
    }

    /// Fourier coefficients `c_k` with `g(x) = Σ_k c_k e^{ik·x}`.
    pub fn coefficients(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run(&mut data, &self.forward);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Grid values `Σ_k c_k e^{ik·x}`; the imaginary part is discarded.
    pub fn values(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.run(&mut data, &self.inverse);
        data.iter().map(|c| c.re).collect()
    }
}
