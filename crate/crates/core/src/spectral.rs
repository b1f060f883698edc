//! Periodic grids, collocated fields and Fourier multipliers.
//!
//! Samples sit at `x_j = -L + j Δx`. The stored spectrum is the forward DFT
//! divided by `N`, so `f(x) = Σ_m c_m exp(i k_m (x + L))` and
//! `∫ |f|² dx = 2L Σ |c_m|²`. Index `m ≥ N/2` carries wavenumber `π (m - N)/L`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on imaginary parts of real-flavored fields, relative to the sup norm.
pub const REAL_ROUNDOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_length: f64,
    n_points: usize,
}

impl GridSpec {
    pub fn new(half_length: f64, n_points: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::HalfLength(half_length));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::GridSize(n_points));
        }
        Ok(Self {
            half_length,
            n_points,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n_points as f64
    }

    /// Length of the torus, i.e. the measure in `∫|f|² = 2L Σ|c|²`.
    pub fn period(&self) -> f64 {
        2.0 * self.half_length
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Signed mode number of FFT slot `m`, in `-N/2..N/2`.
    pub fn mode_index(&self, m: usize) -> i64 {
        let n = self.n_points as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    pub fn wavenumber(&self, m: usize) -> f64 {
        std::f64::consts::PI * self.mode_index(m) as f64 / self.half_length
    }

    /// Wavenumbers in FFT slot order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|m| self.wavenumber(m)).collect()
    }

    pub fn nyquist_slot(&self) -> usize {
        self.n_points / 2
    }

    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI * (self.n_points / 2 - 1) as f64 / self.half_length
    }

    /// Two-thirds dealiasing mask in FFT slot order: keeps `3|j| < N`.
    pub fn dealias_mask(&self) -> Vec<bool> {
        (0..self.n_points)
            .map(|m| 3 * self.mode_index(m).unsigned_abs() < self.n_points as u64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FracOrder(f64);

impl FracOrder {
    /// Order valid for operator use, `0 < s < 1`.
    pub fn new(s: f64) -> Result<Self> {
        if s > 0.0 && s < 1.0 {
            Ok(Self(s))
        } else {
            Err(Error::FracOrder { s, range: "(0, 1)" })
        }
    }

    /// Order valid for the coupled system, `1/2 < s < 1`.
    pub fn system(s: f64) -> Result<Self> {
        if s > 0.5 && s < 1.0 {
            Ok(Self(s))
        } else {
            Err(Error::FracOrder {
                s,
                range: "(1/2, 1)",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn require_above_half(self) -> Result<()> {
        Self::system(self.0).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    ComplexShortwave,
    RealLongwave,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    samples: Vec<Complex64>,
    flavor: Flavor,
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((n, forward))
            .or_insert_with(|| {
                if forward {
                    planner.plan_fft_forward(n)
                } else {
                    planner.plan_fft_inverse(n)
                }
            })
            .clone()
    })
}

/// Normalized forward transform: `c_m = N^{-1} Σ_j f_j e^{-2πi jm/N}`.
pub fn forward(samples: &[Complex64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    plan(n, true).process(&mut buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    buf
}

/// Inverse of [`forward`].
pub fn inverse(spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut buf = spectrum.to_vec();
    plan(buf.len(), false).process(&mut buf);
    buf
}

impl Field {
    pub fn from_complex(grid: GridSpec, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.n_points {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid,
            samples,
            flavor: Flavor::ComplexShortwave,
        })
    }

    pub fn from_real(grid: GridSpec, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.n_points {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid,
            samples: samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            flavor: Flavor::RealLongwave,
        })
    }

    pub fn from_fn_real(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            samples: grid.xs().into_iter().map(|x| Complex64::new(f(x), 0.0)).collect(),
            flavor: Flavor::RealLongwave,
        }
    }

    pub fn from_fn_complex(grid: GridSpec, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            grid,
            samples: grid.xs().into_iter().map(f).collect(),
            flavor: Flavor::ComplexShortwave,
        }
    }

    pub fn zeros(grid: GridSpec, flavor: Flavor) -> Self {
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); grid.n_points],
            flavor,
        }
    }

    /// Builds a field from a normalized spectrum in FFT slot order.
    pub fn from_spectrum(grid: GridSpec, spectrum: &[Complex64], flavor: Flavor) -> Result<Self> {
        if spectrum.len() != grid.n_points {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid,
            samples: inverse(spectrum),
            flavor,
        }
        .enforce_flavor())
    }

    fn enforce_flavor(mut self) -> Self {
        if self.flavor == Flavor::RealLongwave {
            debug_assert!({
                let sup = self.samples.iter().map(|c| c.re.abs()).fold(1.0, f64::max);
                self.samples
                    .iter()
                    .all(|c| c.im.abs() <= REAL_ROUNDOFF * sup)
            });
            self.samples.iter_mut().for_each(|c| c.im = 0.0);
        }
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.re).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        forward(&self.samples)
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Multiplies the spectrum by `symbol(k)` per slot. The symbol is
    /// evaluated at the signed wavenumber; the Nyquist slot is handled by
    /// the caller through `zero_nyquist`.
    pub fn apply_symbol(&self, zero_nyquist: bool, symbol: impl Fn(f64) -> Complex64) -> Field {
        let mut spec = self.spectrum();
        for (m, c) in spec.iter_mut().enumerate() {
            if zero_nyquist && m == self.grid.nyquist_slot() {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c *= symbol(self.grid.wavenumber(m));
            }
        }
        Field {
            grid: self.grid,
            samples: inverse(&spec),
            flavor: self.flavor,
        }
        .enforce_flavor()
    }

    /// Multiplies the spectrum by `|k|^p`, zeroing the zero mode (for `p > 0`)
    /// and the Nyquist mode.
    pub fn abs_k_power(&self, p: f64) -> Field {
        self.apply_symbol(true, |k| {
            if k == 0.0 {
                Complex64::new(if p == 0.0 { 1.0 } else { 0.0 }, 0.0)
            } else {
                Complex64::new(k.abs().powf(p), 0.0)
            }
        })
    }

    /// `(-Δ)^{σ}` for arbitrary real `σ ≥ 0`, i.e. multiplier `|k|^{2σ}`.
    pub fn frac_power(&self, sigma: f64) -> Field {
        self.abs_k_power(2.0 * sigma)
    }

    pub fn derivative(&self) -> Field {
        self.apply_symbol(true, |k| Complex64::new(0.0, k))
    }

    pub fn laplacian(&self) -> Field {
        self.apply_symbol(false, |k| Complex64::new(-k * k, 0.0))
    }

    /// Applies the two-thirds dealiasing mask.
    pub fn dealias(&self) -> Field {
        let mask = self.grid.dealias_mask();
        let mut spec = self.spectrum();
        for (c, keep) in spec.iter_mut().zip(mask) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Field {
            grid: self.grid,
            samples: inverse(&spec),
            flavor: self.flavor,
        }
        .enforce_flavor()
    }

    /// Mean value `(2L)^{-1} ∫ f`.
    pub fn mean(&self) -> Complex64 {
        self.samples.iter().sum::<Complex64>() / self.grid.n_points as f64
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.spacing() * self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `∫ |f|^p dx` by the rectangle rule.
    pub fn lp_integral(&self, p: f64) -> f64 {
        self.grid.spacing() * self.samples.iter().map(|c| c.norm().powf(p)).sum::<f64>()
    }

    /// `∫ f conj(g) dx`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.same_grid(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b.conj())
            .sum::<Complex64>()
            * self.grid.spacing())
    }

    /// Maximum of `|f|` over the collocation points.
    pub fn sup_on_grid(&self) -> f64 {
        self.samples.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Maximum of `|f|` on a `factor`-times refined grid obtained by
    /// zero-padding the spectrum.
    pub fn sup_padded(&self, factor: usize) -> f64 {
        self.refine(factor).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Trigonometric interpolant sampled on a grid `factor` times finer.
    /// The Nyquist coefficient is split evenly between `±N/2`.
    pub fn refine(&self, factor: usize) -> Vec<Complex64> {
        let n = self.grid.n_points;
        let big = n * factor;
        let spec = self.spectrum();
        let mut padded = vec![Complex64::new(0.0, 0.0); big];
        padded[..n / 2].copy_from_slice(&spec[..n / 2]);
        padded[big - n / 2 + 1..].copy_from_slice(&spec[n / 2 + 1..]);
        if factor > 1 {
            padded[n / 2] = 0.5 * spec[n / 2];
            padded[big - n / 2] = 0.5 * spec[n / 2];
        } else {
            padded[n / 2] = spec[n / 2];
        }
        inverse(&padded)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field {
            grid: self.grid,
            samples: self.samples.iter().map(|&c| f(c)).collect(),
            flavor: self.flavor,
        }
        .enforce_flavor()
    }

    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .map(|c| Complex64::new(f(c.re), 0.0))
                .collect(),
            flavor: Flavor::RealLongwave,
        }
    }

    /// `|f|²` as a real field.
    pub fn abs_sq(&self) -> Field {
        Field {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .map(|c| Complex64::new(c.norm_sqr(), 0.0))
                .collect(),
            flavor: Flavor::RealLongwave,
        }
    }

    pub fn scale(&self, a: Complex64) -> Field {
        let flavor = if a.im == 0.0 {
            self.flavor
        } else {
            Flavor::ComplexShortwave
        };
        Field {
            grid: self.grid,
            samples: self.samples.iter().map(|&c| c * a).collect(),
            flavor,
        }
    }

    pub fn scale_real(&self, a: f64) -> Field {
        self.scale(Complex64::new(a, 0.0))
    }

    fn zip_with(&self, other: &Field, op: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Field> {
        self.same_grid(other)?;
        let flavor = if self.flavor == Flavor::RealLongwave && other.flavor == Flavor::RealLongwave {
            Flavor::RealLongwave
        } else {
            Flavor::ComplexShortwave
        };
        Ok(Field {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| op(a, b))
                .collect(),
            flavor,
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product (not dealiased).
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn with_flavor(mut self, flavor: Flavor) -> Field {
        self.flavor = flavor;
        self.enforce_flavor()
    }

    /// Cyclic shift by `shift` grid points: `(T f)_j = f_{j - shift}`.
    pub fn translate(&self, shift: usize) -> Field {
        let n = self.grid.n_points;
        let mut samples = self.samples.clone();
        samples.rotate_right(shift % n);
        Field {
            grid: self.grid,
            samples,
            flavor: self.flavor,
        }
    }

    /// Maximum pointwise distance to another field on the same grid.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// `(-Δ)^s f` through the multiplier `|k|^{2s}`.
pub fn frac_laplacian_spectral(f: &Field, s: FracOrder) -> Field {
    f.frac_power(s.value())
}

/// Inverse of the fractional Laplacian on mean-free fields.
pub fn riesz_inverse(f: &Field, s: FracOrder) -> Result<Field> {
    let mean = f.mean();
    let scale = f.sup_on_grid().max(1.0);
    if mean.norm() > 1e-12 * scale {
        return Err(Error::ZeroMode(mean.norm()));
    }
    Ok(f.abs_k_power(-2.0 * s.value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_examples() {
        let g = GridSpec::new(PI, 8).unwrap();
        assert!((g.spacing() - PI / 4.0).abs() < 1e-15);
        let mut ks: Vec<i64> = (0..8).map(|m| (g.wavenumber(m) / 1.0).round() as i64).collect();
        ks.sort();
        assert_eq!(ks, vec![-4, -3, -2, -1, 0, 1, 2, 3]);
        let g = GridSpec::new(2.0 * PI, 16).unwrap();
        assert!((g.wavenumber(1) - 0.5).abs() < 1e-15);
        assert_eq!(GridSpec::new(PI, 7), Err(Error::GridSize(7)));
        assert_eq!(GridSpec::new(PI, 4), Err(Error::GridSize(4)));
        assert!(GridSpec::new(-1.0, 8).is_err());
        assert!(GridSpec::new(f64::NAN, 8).is_err());
    }

    #[test]
    fn spacing_times_n_is_period() {
        for (l, n) in [(PI, 8), (20.0, 2048), (17.3, 512)] {
            let g = GridSpec::new(l, n).unwrap();
            assert_eq!(g.spacing() * n as f64, 2.0 * l);
        }
    }

    #[test]
    fn sine_is_eigenfunction() {
        let g = GridSpec::new(PI, 64).unwrap();
        let f = Field::from_fn_real(g, |x| (3.0 * x).sin());
        let out = frac_laplacian_spectral(&f, FracOrder::new(0.75).unwrap());
        let expect = Field::from_fn_real(g, |x| 3f64.powf(1.5) * (3.0 * x).sin());
        assert!(out.max_abs_diff(&expect).unwrap() < 1e-12);
        let one = Field::from_fn_real(g, |_| 1.0);
        assert!(frac_laplacian_spectral(&one, FracOrder::new(0.3).unwrap()).sup_on_grid() < 1e-14);
    }

    #[test]
    fn riesz_inverse_examples() {
        let g = GridSpec::new(PI, 64).unwrap();
        let s = FracOrder::new(0.6).unwrap();
        let f = Field::from_fn_real(g, |x| (2.0 * x).cos());
        let out = riesz_inverse(&f, s).unwrap();
        let expect = Field::from_fn_real(g, |x| 2f64.powf(-1.2) * (2.0 * x).cos());
        assert!(out.max_abs_diff(&expect).unwrap() < 1e-13);
        let one = Field::from_fn_real(g, |_| 1.0);
        assert!(matches!(riesz_inverse(&one, s), Err(Error::ZeroMode(_))));
    }

    #[test]
    fn limit_toward_second_derivative() {
        let g = GridSpec::new(PI, 64).unwrap();
        let delta = 1e-3;
        let s = FracOrder::new(1.0 - delta).unwrap();
        let bound = 10.0 * delta * g.k_max().ln();
        for j in 1..31 {
            let f = Field::from_fn_real(g, |x| (j as f64 * x).cos());
            let a = frac_laplacian_spectral(&f, s);
            let b = f.laplacian().scale_real(-1.0);
            let rel = a.max_abs_diff(&b).unwrap() / b.sup_on_grid();
            assert!(rel <= bound, "mode {j}: {rel} > {bound}");
        }
    }

    #[test]
    fn padded_sup_finds_offgrid_peak() {
        let g = GridSpec::new(PI, 16).unwrap();
        let f = Field::from_fn_real(g, |x| (x - 0.1).cos());
        assert!(f.sup_on_grid() < 0.999);
        assert!((f.sup_padded(8) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn dealias_mask_counts() {
        let g = GridSpec::new(PI, 12usize.next_power_of_two()).unwrap();
        let kept = g.dealias_mask().iter().filter(|&&k| k).count();
        // |j| <= 5 for N = 16
        assert_eq!(kept, 11);
    }

    fn random_field(g: GridSpec, coeffs: &[(f64, f64)]) -> Field {
        let mut spec = vec![Complex64::new(0.0, 0.0); g.n_points()];
        for (j, &(a, b)) in coeffs.iter().enumerate() {
            spec[j + 1] = Complex64::new(a, b);
            spec[g.n_points() - 1 - j] = Complex64::new(a, -b);
        }
        Field::from_spectrum(g, &spec, Flavor::RealLongwave).unwrap()
    }

    proptest! {
        #[test]
        fn eigen_identity_every_mode(j in 1i64..31, s in 0.01f64..0.99) {
            let g = GridSpec::new(PI, 64).unwrap();
            let f = Field::from_fn_complex(g, |x| Complex64::new(0.0, j as f64 * x).exp());
            let out = frac_laplacian_spectral(&f, FracOrder::new(s).unwrap());
            let lam = (j as f64).powf(2.0 * s);
            let diff = out.max_abs_diff(&f.scale_real(lam)).unwrap();
            prop_assert!(diff <= 1e-12 * lam.max(1.0) * 10.0);
        }

        #[test]
        fn commutes_with_translation(
            coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 10),
            shift in 0usize..32, s in 0.05f64..0.95,
        ) {
            let g = GridSpec::new(3.0, 32).unwrap();
            let f = random_field(g, &coeffs);
            let s = FracOrder::new(s).unwrap();
            let a = frac_laplacian_spectral(&f.translate(shift), s);
            let b = frac_laplacian_spectral(&f, s).translate(shift);
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-11);
            prop_assert_eq!(a.flavor(), Flavor::RealLongwave);
        }

        #[test]
        fn riesz_roundtrip(coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 10), s in 0.05f64..0.95) {
            let g = GridSpec::new(2.0, 32).unwrap();
            let f = random_field(g, &coeffs);
            let s = FracOrder::new(s).unwrap();
            let back = riesz_inverse(&frac_laplacian_spectral(&f, s), s).unwrap();
            let centered = f.map(|c| c - f.mean());
            prop_assert!(back.max_abs_diff(&centered).unwrap() < 1e-11);
        }
    }
}
