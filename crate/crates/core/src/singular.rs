//! Real-space (singular-integral) forms of the fractional Laplacian and the
//! Gagliardo seminorm on the periodic window, plus the normalization
//! constant `C_{1,s}`.
//!
//! These evaluations never touch the FFT, so they serve as independent
//! oracles for the multiplier definitions in [`crate::spectral`].
//!
//! On the torus the principal-value integral over the line folds onto
//! `h ∈ (0, L]` with the periodized kernel `Σ_m |h + 2Lm|^{-1-2s}`. The
//! singular image `m = 0` is integrated analytically on the first cell
//! against a local polynomial fit; the remaining images form a smooth
//! kernel summed with the Hurwitz zeta function.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{
    gauss_legendre, image_kernel, integrate, lagrange_weights, monomial_coefficients,
    AdaptiveOptions,
};
use crate::spectral::{Field, FracOrder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Relative change between successive Gauss refinements accepted as converged.
    pub rel_tol: f64,
    /// Largest number of Gauss points per grid cell before giving up.
    pub max_gauss: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_gauss: 32,
        }
    }
}

/// Result of a real-space operator evaluation.
#[derive(Debug, Clone)]
pub struct SingularEvaluation {
    pub field: Field,
    /// Largest pointwise change between the last two Gauss refinements.
    pub quadrature_error: f64,
    /// Largest pointwise difference between the torus operator and the
    /// operator on the line applied to the zero extension of the window.
    pub truncation_error: f64,
    pub gauss_points: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SeminormEvaluation {
    pub value: f64,
    pub quadrature_error: f64,
    pub gauss_points: usize,
}

/// `C_{1,s} = [∫_ℝ (1 - cos ζ) |ζ|^{-1-2s} dζ]^{-1}`.
pub fn cns_constant(s: FracOrder) -> Result<f64> {
    let s = s.value();
    let p = 1.0 + 2.0 * s;
    // ∫_0^1 by the cosine series.
    let mut head = 0.0;
    let mut fact = 1.0;
    for n in 1..30 {
        let two_n = 2 * n;
        fact *= ((two_n - 1) * two_n) as f64;
        let term = 1.0 / (fact * (two_n as f64 - 2.0 * s));
        head += if n % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    // ∫_1^∞ (1 - cos ζ) ζ^{-p} = 1/(2s) - ∫_1^∞ cos ζ ζ^{-p}.
    let periods = 160;
    let z = 1.0 + 2.0 * std::f64::consts::PI * periods as f64;
    let opts = AdaptiveOptions {
        abs_tol: 1e-16,
        rel_tol: 1e-13,
        max_intervals: 200,
    };
    let mut osc = 0.0;
    for j in 0..periods {
        let a = 1.0 + 2.0 * std::f64::consts::PI * j as f64;
        let b = a + 2.0 * std::f64::consts::PI;
        osc += integrate(|x| x.cos() * x.powf(-p), a, b, opts)?.value;
    }
    osc += oscillatory_tail(p, z, true, 0);
    let half = head + 1.0 / (2.0 * s) - osc;
    let total = 2.0 * half;
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Quadrature(format!("normalization integral {total}")));
    }
    Ok(1.0 / total)
}

/// `∫_z^∞ cos(ζ) ζ^{-p}` (or `sin` when `cosine` is false) by repeated
/// integration by parts.
fn oscillatory_tail(p: f64, z: f64, cosine: bool, depth: usize) -> f64 {
    if depth > 10 {
        return 0.0;
    }
    if cosine {
        -z.sin() * z.powf(-p) + p * oscillatory_tail(p + 1.0, z, false, depth + 1)
    } else {
        z.cos() * z.powf(-p) - p * oscillatory_tail(p + 1.0, z, true, depth + 1)
    }
}

const HALF_STENCIL: i64 = 4;

/// Maps 9 symmetric samples to monomial coefficients in the scaled variable `h/Δx`.
fn stencil_coefficient_matrix() -> Vec<Vec<f64>> {
    let xs: Vec<f64> = (-HALF_STENCIL..=HALF_STENCIL).map(|m| m as f64).collect();
    let n = xs.len();
    (0..n)
        .map(|col| {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            monomial_coefficients(&xs, &e)
        })
        .collect()
}

/// Local polynomial coefficients (in `h/Δx`) of `f` around node `i`.
fn local_coefficients(samples: &[Complex64], i: usize, matrix: &[Vec<f64>]) -> Vec<Complex64> {
    let n = samples.len() as i64;
    let mut coef = vec![Complex64::new(0.0, 0.0); matrix.len()];
    for (col, m) in (-HALF_STENCIL..=HALF_STENCIL).enumerate() {
        let v = samples[((i as i64 + m).rem_euclid(n)) as usize];
        for (c, a) in coef.iter_mut().zip(&matrix[col]) {
            *c += v * *a;
        }
    }
    coef
}

/// Samples of `f(x_m + τ Δx)` for every node `m`, by 8-point Lagrange interpolation.
fn shifted_samples(samples: &[Complex64], tau: f64) -> Vec<Complex64> {
    let n = samples.len() as i64;
    let (lo, nodes): (i64, Vec<f64>) = if tau >= 0.0 {
        (-3, (-3..=4).map(|m| m as f64).collect())
    } else {
        (-4, (-4..=3).map(|m| m as f64).collect())
    };
    let w = lagrange_weights(&nodes, tau);
    (0..n)
        .map(|m| {
            w.iter()
                .enumerate()
                .map(|(q, wq)| samples[((m + lo + q as i64).rem_euclid(n)) as usize] * *wq)
                .sum()
        })
        .collect()
}

/// Shared far-field quadrature data for a fixed Gauss order.
struct FarField {
    /// kernel weights indexed by cell `j` (covering `[jΔx, (j+1)Δx]`) then Gauss node.
    weights: Vec<Vec<f64>>,
    plus: Vec<Vec<Complex64>>,
    minus: Vec<Vec<Complex64>>,
    /// Gauss rule on the first cell for the smooth image kernel.
    near_nodes: Vec<f64>,
    near_weights: Vec<f64>,
}

impl FarField {
    fn new(f: &Field, p: f64, g: usize) -> Self {
        let grid = f.grid();
        let dx = grid.spacing();
        let period = grid.period();
        let n = grid.n_points();
        let (x, w) = gauss_legendre(g);
        let tau: Vec<f64> = x.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let wt: Vec<f64> = w.iter().map(|w| 0.5 * w).collect();
        let weights = (1..n / 2)
            .map(|j| {
                tau.iter()
                    .zip(&wt)
                    .map(|(t, w)| {
                        let h = (j as f64 + t) * dx;
                        w * dx * (h.powf(-p) + image_kernel(p, period, h))
                    })
                    .collect()
            })
            .collect();
        let plus = tau.iter().map(|&t| shifted_samples(f.samples(), t)).collect();
        let minus = tau.iter().map(|&t| shifted_samples(f.samples(), -t)).collect();
        let near_nodes: Vec<f64> = tau.iter().map(|t| t * dx).collect();
        let near_weights: Vec<f64> = near_nodes
            .iter()
            .zip(&wt)
            .map(|(h, w)| w * dx * image_kernel(p, period, *h))
            .collect();
        Self {
            weights,
            plus,
            minus,
            near_nodes,
            near_weights,
        }
    }
}

fn laplacian_pass(f: &Field, s: f64, c: f64, g: usize, matrix: &[Vec<f64>]) -> Vec<Complex64> {
    let grid = f.grid();
    let n = grid.n_points();
    let dx = grid.spacing();
    let p = 1.0 + 2.0 * s;
    let far = FarField::new(f, p, g);
    let total_weight: f64 = far.weights.iter().flatten().sum();
    let samples = f.samples();
    (0..n)
        .map(|i| {
            let fi = samples[i];
            let mut acc = 2.0 * fi * total_weight;
            for (jj, row) in far.weights.iter().enumerate() {
                let j = jj + 1;
                let ip = (i + j) % n;
                let im = (i + n - j) % n;
                for (q, w) in row.iter().enumerate() {
                    acc -= (far.plus[q][ip] + far.minus[q][im]) * *w;
                }
            }
            // First cell: 2q(0) - q(h) - q(-h) = -2 Σ c_{2m} h^{2m}.
            let coef = local_coefficients(samples, i, matrix);
            let mut near = Complex64::new(0.0, 0.0);
            for m in (2..coef.len()).step_by(2) {
                let cm = coef[m] * dx.powi(-(m as i32));
                near -= 2.0 * cm * dx.powf(m as f64 - 2.0 * s) / (m as f64 - 2.0 * s);
                for (h, w) in far.near_nodes.iter().zip(&far.near_weights) {
                    near -= 2.0 * cm * h.powi(m as i32) * *w;
                }
            }
            c * (acc + near)
        })
        .collect()
}

fn seminorm_pass(f: &Field, s: f64, g: usize, matrix: &[Vec<f64>]) -> f64 {
    let grid = f.grid();
    let n = grid.n_points();
    let dx = grid.spacing();
    let p = 1.0 + 2.0 * s;
    let far = FarField::new(f, p, g);
    let samples = f.samples();
    let mut total = 0.0;
    for i in 0..n {
        let fi = samples[i];
        let mut acc = 0.0;
        for (jj, row) in far.weights.iter().enumerate() {
            let j = jj + 1;
            let ip = (i + j) % n;
            let im = (i + n - j) % n;
            for (q, w) in row.iter().enumerate() {
                acc += w * ((fi - far.plus[q][ip]).norm_sqr() + (fi - far.minus[q][im]).norm_sqr());
            }
        }
        // |d(h)|² + |d(-h)|² with d(h) = q(h) - q(0) keeps only even total degree.
        let coef: Vec<Complex64> = local_coefficients(samples, i, matrix)
            .into_iter()
            .enumerate()
            .map(|(m, c)| c * dx.powi(-(m as i32)))
            .collect();
        let deg = coef.len() - 1;
        let mut poly = vec![0.0; 2 * deg + 1];
        for a in 1..=deg {
            for b in 1..=deg {
                if (a + b) % 2 == 0 {
                    poly[a + b] += 2.0 * (coef[a] * coef[b].conj()).re;
                }
            }
        }
        let mut near = 0.0;
        for (j, pj) in poly.iter().enumerate().skip(2) {
            if *pj == 0.0 {
                continue;
            }
            near += pj * dx.powf(j as f64 - 2.0 * s) / (j as f64 - 2.0 * s);
            for (h, w) in far.near_nodes.iter().zip(&far.near_weights) {
                near += pj * h.powi(j as i32) * w;
            }
        }
        total += dx * (acc + near);
    }
    total
}

/// Difference between the torus operator and the line operator applied to
/// the zero extension of the window: `C Σ_j Δx f_j S(x_i - x_j)`, with `S`
/// the image part of the periodized kernel.
fn truncation_estimate(f: &Field, s: f64, c: f64) -> f64 {
    let grid = f.grid();
    let n = grid.n_points();
    let dx = grid.spacing();
    let p = 1.0 + 2.0 * s;
    let scale = f.sup_on_grid();
    if scale == 0.0 {
        return 0.0;
    }
    let kernel: Vec<f64> = (0..2 * n - 1)
        .map(|d| image_kernel(p, grid.period(), (d as f64 - (n - 1) as f64) * dx))
        .collect();
    let samples = f.samples();
    (0..n)
        .map(|i| {
            let sum: Complex64 = (0..n)
                .map(|j| samples[j] * kernel[i + n - 1 - j])
                .sum();
            c * dx * sum.norm()
        })
        .fold(0.0, f64::max)
}

fn refine<T, D>(quad: QuadratureSpec, mut pass: impl FnMut(usize) -> T, diff: D) -> Result<(T, f64, usize)>
where
    D: Fn(&T, &T) -> (f64, f64),
{
    let mut g = 4;
    let mut prev = pass(g);
    loop {
        let next_g = 2 * g;
        if next_g > quad.max_gauss {
            return Err(Error::Quadrature(format!(
                "no convergence with {g} Gauss points per cell"
            )));
        }
        let next = pass(next_g);
        let (change, scale) = diff(&prev, &next);
        if change <= quad.rel_tol * scale {
            return Ok((next, change, next_g));
        }
        prev = next;
        g = next_g;
    }
}

/// `(-Δ)^s f` by the principal-value singular integral on the periodic window.
pub fn frac_laplacian_singular(
    f: &Field,
    s: FracOrder,
    quad: QuadratureSpec,
) -> Result<SingularEvaluation> {
    let sv = s.value();
    let c = cns_constant(s)?;
    let matrix = stencil_coefficient_matrix();
    let input_scale = f.sup_on_grid();
    let (values, err, g) = refine(
        quad,
        |g| laplacian_pass(f, sv, c, g, &matrix),
        |a: &Vec<Complex64>, b: &Vec<Complex64>| {
            let change = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            let scale = b.iter().map(|x| x.norm()).fold(input_scale, f64::max);
            (change, scale)
        },
    )?;
    let field = Field::from_complex(*f.grid(), values)?.with_flavor(f.flavor());
    Ok(SingularEvaluation {
        field,
        quadrature_error: err,
        truncation_error: truncation_estimate(f, sv, c),
        gauss_points: g,
    })
}

/// `∫_window ∫_ℝ |f(x) - f(y)|² |x - y|^{-1-2s} dy dx` for the periodic extension of `f`.
pub fn gagliardo_seminorm_sq(
    f: &Field,
    s: FracOrder,
    quad: QuadratureSpec,
) -> Result<SeminormEvaluation> {
    let sv = s.value();
    let matrix = stencil_coefficient_matrix();
    // Roundoff level for inputs whose seminorm vanishes.
    let floor = 1e-6 * f.l2_norm_sq() * f.grid().spacing().powf(-2.0 * sv);
    let (value, err, g) = refine(
        quad,
        |g| seminorm_pass(f, sv, g, &matrix),
        |a: &f64, b: &f64| ((a - b).abs(), b.abs().max(floor)),
    )?;
    Ok(SeminormEvaluation {
        value,
        quadrature_error: err,
        gauss_points: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{frac_laplacian_spectral, GridSpec};
    use statrs::function::gamma::gamma;
    use std::f64::consts::PI;

    fn closed_form(s: f64) -> f64 {
        s * 4f64.powf(s) * gamma(0.5 + s) / (PI.sqrt() * gamma(1.0 - s))
    }

    /// Independent scheme: substitution ζ = u^m with m = 1/(1-s) on [0, π]
    /// (smooth integrand), composite Gauss–Legendre over half-periods and
    /// Euler averaging of the partial integrals at ζ = nπ.
    fn second_scheme(s: f64) -> f64 {
        let (x, w) = gauss_legendre(30);
        let gl = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| -> f64 {
            x.iter()
                .zip(&w)
                .map(|(x, w)| 0.5 * (b - a) * w * f(0.5 * (b - a) * x + 0.5 * (a + b)))
                .sum()
        };
        let p = 1.0 + 2.0 * s;
        let m = 1.0 / (1.0 - s);
        let r = PI.powf(1.0 / m);
        let mut acc = 0.0;
        for j in 0..8 {
            let a = r * j as f64 / 8.0;
            let b = r * (j + 1) as f64 / 8.0;
            acc += gl(
                &|u: f64| {
                    let z = u.powf(m);
                    2.0 * m * (0.5 * z).sin().powi(2) * u.powf(m - 1.0 - m * p)
                },
                a,
                b,
            );
        }
        let mut partial = vec![];
        for n in 1..400 {
            let a = n as f64 * PI;
            acc += gl(&|z: f64| (1.0 - z.cos()) * z.powf(-p), a, a + PI);
            if n >= 380 {
                let z = a + PI;
                partial.push(acc + z.powf(-2.0 * s) / (2.0 * s));
            }
        }
        while partial.len() > 1 {
            partial = partial.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        1.0 / (2.0 * partial[0])
    }

    #[test]
    fn half_order_constant_is_inverse_pi() {
        let c = cns_constant(FracOrder::new(0.5).unwrap()).unwrap();
        assert!((c - 1.0 / PI).abs() < 1e-8, "{c}");
    }

    #[test]
    fn constant_matches_closed_form_and_second_scheme() {
        for s in [0.05, 0.25, 0.5, 0.6, 0.75, 0.9, 0.99] {
            let c = cns_constant(FracOrder::new(s).unwrap()).unwrap();
            assert!(c > 0.0);
            assert!((c - closed_form(s)).abs() < 1e-9 * closed_form(s), "s={s}: {c}");
            if s <= 0.9 {
                let other = second_scheme(s);
                assert!((c - other).abs() < 1e-10 * c, "s={s}: {c} vs {other}");
            }
        }
    }

    #[test]
    fn constant_field_maps_to_zero() {
        let g = GridSpec::new(5.0, 64).unwrap();
        let f = Field::from_fn_real(g, |_| 3.0);
        let out = frac_laplacian_singular(&f, FracOrder::new(0.6).unwrap(), QuadratureSpec::default()).unwrap();
        assert!(out.field.sup_on_grid() < 1e-10);
        let semi = gagliardo_seminorm_sq(&f, FracOrder::new(0.6).unwrap(), QuadratureSpec::default()).unwrap();
        assert!(semi.value.abs() < 1e-20);
    }

    #[test]
    fn odd_function_vanishes_at_origin() {
        let g = GridSpec::new(10.0, 128).unwrap();
        let f = Field::from_fn_real(g, |x| x * (-x * x).exp());
        let out = frac_laplacian_singular(&f, FracOrder::new(0.7).unwrap(), QuadratureSpec::default()).unwrap();
        assert!(out.field.samples()[64].norm() < 1e-12);
    }

    #[test]
    fn gaussian_matches_spectral() {
        let g = GridSpec::new(20.0, 512).unwrap();
        let f = Field::from_fn_real(g, |x| (-x * x).exp());
        let s = FracOrder::new(0.6).unwrap();
        let a = frac_laplacian_singular(&f, s, QuadratureSpec::default()).unwrap();
        let b = frac_laplacian_spectral(&f, s);
        let diff = a.field.max_abs_diff(&b).unwrap();
        assert!(diff < 1e-7, "{diff}");
        // (-Δ)^s of a Gaussian decays like |x|^{-1-2s}: the periodic image at
        // distance L contributes about C √π L^{-1-2s} at the window edge.
        let expected = cns_constant(s).unwrap() * PI.sqrt() * 20f64.powf(-2.2);
        assert!(
            (a.truncation_error / expected - 1.0).abs() < 0.5,
            "{} vs {expected}",
            a.truncation_error
        );
    }

    #[test]
    fn trig_mode_matches_eigenvalue() {
        let g = GridSpec::new(PI, 128).unwrap();
        let f = Field::from_fn_real(g, |x| (2.0 * x).cos());
        let s = FracOrder::new(0.75).unwrap();
        let a = frac_laplacian_singular(&f, s, QuadratureSpec::default()).unwrap();
        let expect = f.scale_real(2f64.powf(1.5));
        let d = a.field.max_abs_diff(&expect).unwrap();
        assert!(d < 1e-8, "{d} {}", a.gauss_points);
    }

    #[test]
    fn seminorm_homogeneity_and_identity() {
        let g = GridSpec::new(12.0, 256).unwrap();
        let s = FracOrder::new(0.6).unwrap();
        let f = Field::from_fn_real(g, |x| (-x * x).exp());
        let a = gagliardo_seminorm_sq(&f, s, QuadratureSpec::default()).unwrap().value;
        let b = gagliardo_seminorm_sq(&f.scale_real(2.0), s, QuadratureSpec::default()).unwrap().value;
        assert!((b - 4.0 * a).abs() < 1e-10 * b);
        let spectral = f.frac_power(0.5 * s.value()).l2_norm_sq();
        let c = cns_constant(s).unwrap();
        assert!((a - 2.0 / c * spectral).abs() < 1e-6 * a, "{a} vs {}", 2.0 / c * spectral);
    }
}
