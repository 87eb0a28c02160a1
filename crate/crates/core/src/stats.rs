//! Mergeable moment accumulators.
//!
//! Both accumulators hold `(count, mean, central co-moments)` and merge with
//! the pairwise update for means and central moments up to fourth order, so
//! chunks of a record can be reduced in any grouping and agree with a single
//! pass to rounding.

#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;

/// Largest supported sample vector: eight modes of `(I, Q)`.
pub const MAX_DIM: usize = 16;

/// Running mean and co-moment matrix of fixed-length sample vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    count: u64,
    mean: Vec<f64>,
    comoment: DMatrix<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "at most {MAX_DIM} quadratures are supported");
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        let d = self.dim();
        let mut delta = [0.0f64; MAX_DIM];
        for i in 0..d {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..d {
            let after = x[i] - self.mean[i];
            for j in 0..d {
                self.comoment[(j, i)] += delta[j] * after;
            }
        }
    }

    /// Pushes every frame of an interleaved buffer.
    pub fn extend_frames(&mut self, frames: &[f64]) {
        let d = self.dim();
        for frame in frames.chunks_exact(d) {
            self.push(frame);
        }
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        assert_eq!(self.dim(), other.dim(), "accumulator dimensions differ");
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = self.dim();
        let delta: Vec<f64> = (0..d).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..d {
            for j in 0..d {
                self.comoment[(i, j)] += other.comoment[(i, j)] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..d {
            self.mean[i] += delta[i] * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased sample covariance, means removed. `None` below two samples.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        if self.count < 2 {
            return None;
        }
        let mut c = &self.comoment / (self.count as f64 - 1.0);
        let d = self.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
                c[(i, j)] = avg;
                c[(j, i)] = avg;
            }
        }
        Some(c)
    }
}

/// Running central moments up to fourth order of a scalar stream.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 =
            self.m3 + other.m3 + d3 * na * nb * (na - nb) / (n * n) + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n += other.n;
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        self.m2 / self.n as f64
    }

    /// `⟨δx³⟩/σ³`.
    pub fn skewness(&self) -> f64 {
        let n = self.n as f64;
        (self.m3 / n) / (self.m2 / n).powf(1.5)
    }

    /// `⟨δx⁴⟩/σ⁴`; three for a Gaussian.
    pub fn kurtosis(&self) -> f64 {
        let n = self.n as f64;
        (self.m4 / n) / (self.m2 / n).powi(2)
    }
}
