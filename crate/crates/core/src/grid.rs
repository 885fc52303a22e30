//! Uniform grids, quadrature rules and spectral differentiation on the periodic k-grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{PumpError, Result};

/// Periodic Brillouin-zone grid `k_m = -π/a + 2πm/(aN)`, `m = 0..N`.
#[derive(Clone)]
pub struct KGrid {
    points: Vec<f64>,
    lattice_constant: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for KGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KGrid({} points, a = {})", self.points.len(), self.lattice_constant)
    }
}

impl KGrid {
    pub fn new(n: usize, lattice_constant: f64) -> Result<Self> {
        if n < 4 {
            return Err(PumpError::Argument(format!("k-grid needs at least 4 points, got {n}")));
        }
        let step = 2.0 * PI / (lattice_constant * n as f64);
        let points = (0..n).map(|m| -PI / lattice_constant + step * m as f64).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            points,
            lattice_constant,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lattice_constant(&self) -> f64 {
        self.lattice_constant
    }

    /// Brillouin-zone average `∫ dk a/2π f(k)` by the periodic trapezoid rule.
    pub fn average(&self, values: &[f64]) -> f64 {
        pairwise_sum(values) / values.len() as f64
    }

    /// Spectral `∂k` of real samples on this grid. The Nyquist mode of an even
    /// grid is dropped.
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let n = self.len();
        debug_assert_eq!(values.len(), n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = self.lattice_constant / n as f64;
        for (m, z) in buf.iter_mut().enumerate() {
            let wave = if 2 * m < n {
                m as f64
            } else if 2 * m == n {
                0.0
            } else {
                m as f64 - n as f64
            };
            *z *= Complex64::new(0.0, wave * scale);
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|z| z.re).collect()
    }
}

/// Uniform closed time grid `t_i = iT/(N-1)`, `i = 0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(n: usize, period: f64) -> Result<Self> {
        if n < 2 {
            return Err(PumpError::Argument(format!("time grid needs at least 2 points, got {n}")));
        }
        let step = period / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| step * i as f64).collect();
        points[n - 1] = period;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Four-point Gauss-Legendre nodes and weights mapped onto `[lo, hi]`.
pub fn gauss_legendre(lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    GL4_NODES
        .iter()
        .zip(GL4_WEIGHTS.iter())
        .map(move |(&x, &w)| (mid + half * x, half * w))
}

/// Cumulative integral over a time grid: `out[i] = ∫_{t_0}^{t_i} f`, each
/// interval by four-point Gauss-Legendre.
pub fn cumulative_gauss<F>(grid: &[f64], mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in grid.windows(2) {
        let mut part = 0.0;
        for (t, wt) in gauss_legendre(w[0], w[1]) {
            part += wt * f(t)?;
        }
        acc += part;
        out.push(acc);
    }
    Ok(out)
}

/// Pairwise summation; the reduction tree depends only on the length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Cumulative trapezoid rule on an arbitrary grid.
pub fn cumulative_trapezoid(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..t.len() {
        acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spectral_derivative_of_harmonics() {
        let g = KGrid::new(100, 1.0).unwrap();
        let f: Vec<f64> = g.points().iter().map(|k| (3.0 * k).sin() + 0.5 * k.cos()).collect();
        let d = g.derivative(&f);
        for (k, dk) in g.points().iter().zip(&d) {
            assert_abs_diff_eq!(*dk, 3.0 * (3.0 * k).cos() - 0.5 * k.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_derivative_respects_lattice_constant() {
        let a = 2.0;
        let g = KGrid::new(32, a).unwrap();
        let f: Vec<f64> = g.points().iter().map(|k| (k * a).cos()).collect();
        let d = g.derivative(&f);
        for (k, dk) in g.points().iter().zip(&d) {
            assert_abs_diff_eq!(*dk, -a * (k * a).sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn gauss_is_exact_for_septics() {
        let v: f64 = gauss_legendre(0.0, 2.0).map(|(t, w)| w * t.powi(7)).sum();
        assert_abs_diff_eq!(v, 2f64.powi(8) / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn grids() {
        let g = KGrid::new(100, 1.0).unwrap();
        assert_abs_diff_eq!(g.points()[0], -PI);
        assert!(g.points()[99] < PI);
        let t = TimeGrid::new(100, 5.0).unwrap();
        assert_eq!(t.points()[0], 0.0);
        assert_eq!(t.points()[99], 5.0);
        assert!(KGrid::new(2, 1.0).is_err());
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert_abs_diff_eq!(pairwise_sum(&v), v.iter().sum::<f64>(), epsilon = 1e-12);
    }
}
