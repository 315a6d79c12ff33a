//! Uniform periodic grid on `[-L, L)`, spectral differentiation and the
//! weighted Lebesgue norms used throughout the crate.
//!
//! Numerical kernels work on plain sample slices (`&[f64]`, `&[Complex64]`)
//! indexed like [`Grid::nodes`]; [`Field`] pairs samples with their grid for
//! persistence and for callers that want a self-describing value.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};

/// Smallest admissible point count.
pub const MIN_POINTS: usize = 256;

struct GridInner {
    half_width: f64,
    spacing: f64,
    nodes: Vec<f64>,
    bracket: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic mesh `x_j = -L + j h`, `h = 2L / N`.
///
/// Cloning is cheap: the node table and FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("half_width", &self.inner.half_width)
            .field("points", &self.inner.nodes.len())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n() && self.half_width() == other.half_width()
    }
}

impl Grid {
    /// Builds the grid. `points` must be a power of two and at least 256.
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !points.is_power_of_two() || points < MIN_POINTS {
            return Err(LabError::NonPowerOfTwo(points));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(LabError::InvalidParameter {
                name: "half_width",
                reason: format!("must be positive and finite, got {half_width}"),
            });
        }
        let spacing = 2.0 * half_width / points as f64;
        let nodes: Vec<f64> = (0..points).map(|j| -half_width + j as f64 * spacing).collect();
        let bracket = nodes.iter().map(|x| (1.0 + x * x).sqrt()).collect();
        let n = points as i64;
        let wavenumbers = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j } else { j - n };
                std::f64::consts::PI * m as f64 / half_width
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let inverse = planner.plan_fft_inverse(points);
        Ok(Grid {
            inner: Arc::new(GridInner {
                half_width,
                spacing,
                nodes,
                bracket,
                wavenumbers,
                forward,
                inverse,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.nodes.len()
    }

    pub fn half_width(&self) -> f64 {
        self.inner.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.inner.nodes
    }

    /// `<x_j> = sqrt(1 + x_j^2)` at every node.
    pub fn bracket(&self) -> &[f64] {
        &self.inner.bracket
    }

    /// Angular wavenumbers `k_m = pi m / L` in FFT storage order,
    /// `m` running over `0..N/2` then `-N/2..0`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    /// Largest resolved wavenumber, `pi N / (2L)`.
    pub fn max_wavenumber(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    /// Samples a real function at the nodes.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes().iter().map(|&x| f(x)).collect()
    }

    /// Samples a complex function at the nodes.
    pub fn sample_complex<F: Fn(f64) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        self.nodes().iter().map(|&x| f(x)).collect()
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n() {
            Ok(())
        } else {
            Err(LabError::ShapeMismatch {
                expected: self.n(),
                found: len,
            })
        }
    }

    /// In-place forward DFT (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.inner.forward.process(data);
    }

    /// In-place inverse DFT including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inner.inverse.process(data);
        let scale = 1.0 / self.n() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Multiplies every Fourier mode by `symbol(k_m)`.
    pub fn apply_symbol<F: Fn(f64) -> Complex64>(&self, data: &mut [Complex64], symbol: F) {
        self.forward(data);
        for (z, &k) in data.iter_mut().zip(self.wavenumbers()) {
            *z *= symbol(k);
        }
        self.inverse(data);
    }

    /// Fourier differentiation: mode `m` is multiplied by `(i k_m)^order`.
    /// For odd orders the unpaired Nyquist mode is dropped so that real
    /// input stays real.
    pub fn spectral_derivative(&self, f: &[Complex64], order: u32) -> Vec<Complex64> {
        let mut out = f.to_vec();
        self.forward(&mut out);
        let nyquist = self.n() / 2;
        for (m, (z, &k)) in out.iter_mut().zip(self.wavenumbers()).enumerate() {
            if order % 2 == 1 && m == nyquist {
                *z = Complex64::new(0.0, 0.0);
            } else {
                *z *= Complex64::new(0.0, k).powu(order);
            }
        }
        self.inverse(&mut out);
        out
    }

    pub fn spectral_derivative_real(&self, f: &[f64], order: u32) -> Vec<f64> {
        let buf = to_complex(f);
        self.spectral_derivative(&buf, order)
            .into_iter()
            .map(|z| z.re)
            .collect()
    }

    /// `-f''` for real samples.
    pub fn neg_laplacian_real(&self, f: &[f64]) -> Vec<f64> {
        let mut buf = to_complex(f);
        self.forward(&mut buf);
        for (z, &k) in buf.iter_mut().zip(self.wavenumbers()) {
            *z *= k * k;
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Evaluates the trigonometric interpolant of `f` at `x_j + shift`.
    pub fn fourier_shift_real(&self, f: &[f64], shift: f64) -> Vec<f64> {
        let mut buf = to_complex(f);
        let nyquist = self.n() / 2;
        self.forward(&mut buf);
        for (m, (z, &k)) in buf.iter_mut().zip(self.wavenumbers()).enumerate() {
            if m == nyquist {
                // split the Nyquist mode symmetrically so the result is real
                *z *= (k * shift).cos();
            } else {
                *z *= Complex64::from_polar(1.0, k * shift);
            }
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// `h * sum conj(f_j) g_j`, conjugate-linear in the first slot.
    pub fn inner(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        f.iter().zip(g).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.spacing()
    }

    pub fn inner_real(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.spacing()
    }

    /// `<q, f>` for real `q` and complex `f`.
    pub fn inner_rc(&self, q: &[f64], f: &[Complex64]) -> Complex64 {
        f.iter().zip(q).map(|(z, &a)| z * a).sum::<Complex64>() * self.spacing()
    }

    pub fn norm(&self, f: &[Complex64], kind: NormKind) -> f64 {
        self.weighted_norm(f.iter().map(|z| z.norm()), kind)
    }

    pub fn norm_real(&self, f: &[f64], kind: NormKind) -> f64 {
        self.weighted_norm(f.iter().map(|x| x.abs()), kind)
    }

    pub fn l2(&self, f: &[Complex64]) -> f64 {
        self.norm(f, NormKind::L2)
    }

    pub fn l2_real(&self, f: &[f64]) -> f64 {
        self.norm_real(f, NormKind::L2)
    }

    /// Trigonometric interpolant of `f` on the refined mesh `x = -L + j h / factor`.
    /// The Nyquist mode is split evenly between `±N/2`.
    pub fn refine(&self, f: &[Complex64], factor: usize) -> Vec<Complex64> {
        let n = self.n();
        if factor <= 1 {
            return f.to_vec();
        }
        let m = n * factor;
        let mut modes = f.to_vec();
        self.forward(&mut modes);
        let mut fine = vec![Complex64::default(); m];
        let half = n / 2;
        fine[..half].copy_from_slice(&modes[..half]);
        fine[m - half + 1..].copy_from_slice(&modes[half + 1..]);
        fine[half] = 0.5 * modes[half];
        fine[m - half] = 0.5 * modes[half];
        FftPlanner::new().plan_fft_inverse(m).process(&mut fine);
        let scale = 1.0 / n as f64;
        fine.iter_mut().for_each(|z| *z *= scale);
        fine
    }

    /// `||<x>^k f||∞` over the refined mesh of [`Grid::refine`].
    pub fn oversampled_linf(&self, f: &[Complex64], factor: usize, weight_power: i32) -> f64 {
        let factor = factor.max(1);
        let h = self.spacing() / factor as f64;
        let l = self.half_width();
        self.refine(f, factor)
            .iter()
            .enumerate()
            .map(|(j, z)| {
                let x = -l + j as f64 * h;
                z.norm() * (1.0 + x * x).sqrt().powi(weight_power)
            })
            .fold(0.0, f64::max)
    }

    fn weighted_norm<I: Iterator<Item = f64>>(&self, abs: I, kind: NormKind) -> f64 {
        let k = kind.weight_power;
        let weights = self.bracket();
        let w = |j: usize| if k == 0 { 1.0 } else { weights[j].powi(k) };
        match kind.base {
            NormBase::L1 => self.spacing() * abs.enumerate().map(|(j, a)| w(j) * a).sum::<f64>(),
            NormBase::L2 => (self.spacing()
                * abs
                    .enumerate()
                    .map(|(j, a)| {
                        let v = w(j) * a;
                        v * v
                    })
                    .sum::<f64>())
            .sqrt(),
            NormBase::Linf => abs.enumerate().map(|(j, a)| w(j) * a).fold(0.0, f64::max),
        }
    }
}

/// Underlying Lebesgue exponent of a [`NormKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum NormBase {
    L1,
    L2,
    Linf,
}

/// A Lebesgue norm with polynomial weight `<x>^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NormKind {
    pub base: NormBase,
    pub weight_power: i32,
}

impl NormKind {
    pub const L1: NormKind = NormKind::new(NormBase::L1, 0);
    pub const L2: NormKind = NormKind::new(NormBase::L2, 0);
    pub const LINF: NormKind = NormKind::new(NormBase::Linf, 0);

    pub const fn new(base: NormBase, weight_power: i32) -> Self {
        NormKind { base, weight_power }
    }

    pub const fn weighted(self, weight_power: i32) -> Self {
        NormKind {
            base: self.base,
            weight_power,
        }
    }
}

pub fn to_complex(f: &[f64]) -> Vec<Complex64> {
    f.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Sampled values carried by a [`Field`].
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Real(v) => v.len(),
            Samples::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        match self {
            Samples::Real(v) => to_complex(v),
            Samples::Complex(v) => v.clone(),
        }
    }
}

/// Samples tied to the grid they live on.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    samples: Samples,
}

impl Field {
    pub fn real(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Field {
            grid: grid.clone(),
            samples: Samples::Real(values),
        })
    }

    pub fn complex(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Field {
            grid: grid.clone(),
            samples: Samples::Complex(values),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn is_real(&self) -> bool {
        matches!(self.samples, Samples::Real(_))
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    /// Real part of the samples (exact for real-tagged fields).
    pub fn real_values(&self) -> Vec<f64> {
        match &self.samples {
            Samples::Real(v) => v.clone(),
            Samples::Complex(v) => v.iter().map(|z| z.re).collect(),
        }
    }

    pub fn complex_values(&self) -> Vec<Complex64> {
        self.samples.to_complex()
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match &self.samples {
            Samples::Real(v) => self.grid.norm_real(v, kind),
            Samples::Complex(v) => self.grid.norm(v, kind),
        }
    }

    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(LabError::ShapeMismatch {
                expected: self.grid.n(),
                found: other.grid.n(),
            });
        }
        Ok(self.grid.inner(&self.complex_values(), &other.complex_values()))
    }

    pub fn spectral_derivative(&self, order: u32) -> Field {
        let samples = match &self.samples {
            Samples::Real(v) => Samples::Real(self.grid.spectral_derivative_real(v, order)),
            Samples::Complex(v) => Samples::Complex(self.grid.spectral_derivative(v, order)),
        };
        Field {
            grid: self.grid.clone(),
            samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: &Grid) -> Vec<f64> {
        grid.sample(|x| (-x * x / 2.0).exp())
    }

    #[test]
    fn grid_layout() {
        let g = Grid::new(40.0, 4096).unwrap();
        assert_eq!(g.spacing(), 0.01953125);
        let g = Grid::new(1.0, 256).unwrap();
        assert_eq!(g.nodes()[0], -1.0);
        assert_eq!(g.nodes()[255], 1.0 - 1.0 / 128.0);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(matches!(Grid::new(40.0, 1000), Err(LabError::NonPowerOfTwo(1000))));
        assert!(matches!(Grid::new(40.0, 128), Err(LabError::NonPowerOfTwo(128))));
        assert!(Grid::new(0.0, 256).is_err());
        assert!(Grid::new(-3.0, 256).is_err());
    }

    #[test]
    fn norms_of_zero_field_vanish() {
        let g = Grid::new(10.0, 256).unwrap();
        let z = vec![0.0; 256];
        for base in [NormBase::L1, NormBase::L2, NormBase::Linf] {
            for k in [-2, -1, 0, 1, 2] {
                assert_eq!(g.norm_real(&z, NormKind::new(base, k)), 0.0);
            }
        }
    }

    #[test]
    fn gaussian_l2_norm() {
        let g = Grid::new(40.0, 4096).unwrap();
        let n = g.norm_real(&gaussian(&g), NormKind::L2);
        let expected = std::f64::consts::PI.powf(0.25);
        assert!((n - expected).abs() < 1e-10, "{n} vs {expected}");
    }

    #[test]
    fn constant_l1_is_rectangle_rule() {
        let g = Grid::new(1.0, 256).unwrap();
        let one = vec![1.0; 256];
        let n = g.norm_real(&one, NormKind::L1);
        // N nodes on [-1, 1-h], each weighted by h: N h = 2L
        assert!((n - 2.0).abs() < 1e-14);
    }

    #[test]
    fn second_derivative_of_sine_mode() {
        let l = 40.0;
        let g = Grid::new(l, 1024).unwrap();
        let k = std::f64::consts::PI / l;
        let f = g.sample(|x| (k * x).sin());
        let d2 = g.spectral_derivative_real(&f, 2);
        let err = d2
            .iter()
            .zip(&f)
            .map(|(d, s)| (d + k * k * s).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = Grid::new(5.0, 256).unwrap();
        let d = g.spectral_derivative_real(&vec![1.0; 256], 1);
        assert!(d.iter().all(|v| v.abs() < 1e-14));
        let d = g.spectral_derivative_real(&vec![1.0; 256], 2);
        assert!(d.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn gaussian_second_derivative() {
        let g = Grid::new(40.0, 4096).unwrap();
        let d2 = g.spectral_derivative_real(&gaussian(&g), 2);
        let err = d2
            .iter()
            .zip(g.nodes())
            .map(|(d, &x)| (d - (x * x - 1.0) * (-x * x / 2.0).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn inner_product_identities() {
        let g = Grid::new(40.0, 2048).unwrap();
        let f = to_complex(&gaussian(&g));
        let odd = g.sample_complex(|x| Complex64::new(x * (-x * x / 2.0).exp(), 0.0));
        assert!(g.inner(&f, &odd).norm() < 1e-12);
        let n2 = g.l2(&f).powi(2);
        assert!((g.inner(&f, &f).re - n2).abs() < 1e-14);
        let i = Complex64::i();
        let fi: Vec<_> = f.iter().map(|z| z * i).collect();
        // conjugate-linear in the first slot
        let lhs = g.inner(&fi, &f);
        assert!((lhs - (-i) * n2).norm() < 1e-13);
    }

    #[test]
    fn fourier_shift_interpolates_band_limited_data() {
        let g = Grid::new(40.0, 1024).unwrap();
        let f = g.sample(|x| 1.0 / (x.cosh()));
        let half = g.fourier_shift_real(&f, 0.5 * g.spacing());
        let err = half
            .iter()
            .zip(g.nodes())
            .map(|(v, &x)| (v - 1.0 / (x + 0.5 * g.spacing()).cosh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn refinement_interpolates_band_limited_data() {
        let g = Grid::new(10.0, 256).unwrap();
        let f: Vec<Complex64> =
            g.sample_complex(|x| Complex64::new((-x * x).exp(), (x * 0.3).sin() * (-x * x / 2.0).exp()));
        let fine = g.refine(&f, 4);
        assert_eq!(fine.len(), 1024);
        let h = g.spacing() / 4.0;
        let err = fine
            .iter()
            .enumerate()
            .map(|(j, z)| {
                let x = -10.0 + j as f64 * h;
                (z - Complex64::new((-x * x).exp(), (x * 0.3).sin() * (-x * x / 2.0).exp())).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        for (j, z) in f.iter().enumerate() {
            assert!((fine[4 * j] - z).norm() < 1e-14);
        }
        let coarse = g.norm(&f, NormKind::LINF.weighted(-1));
        assert!(g.oversampled_linf(&f, 4, -1) >= coarse - 1e-15);
        assert_eq!(g.oversampled_linf(&f, 1, -1), coarse);
    }

    #[test]
    fn field_rejects_wrong_length() {
        let g = Grid::new(5.0, 256).unwrap();
        assert!(matches!(
            Field::real(&g, vec![0.0; 10]),
            Err(LabError::ShapeMismatch {
                expected: 256,
                found: 10
            })
        ));
    }
}
