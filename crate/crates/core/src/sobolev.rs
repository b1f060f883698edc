//! Fractional Sobolev norms and the inequality checks built on them.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::singular::{cns_constant, gagliardo_seminorm_sq, QuadratureSpec};
use crate::spectral::{Field, Flavor, FracOrder, GridSpec};

/// Oversampling factor used for sup norms and for nonlinear maps of fields.
pub const REFINE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l2: f64,
    /// `(Σ (1+k²)^s |c_k|² · 2L)^{1/2}`.
    pub hs_fourier: f64,
    /// `(Σ (1+|k|^{2s}) |c_k|² · 2L)^{1/2}`, i.e. `(‖f‖² + ‖(-Δ)^{s/2}f‖²)^{1/2}`.
    pub hs_split: f64,
    /// `‖(-Δ)^{s/2} f‖₂`.
    pub frac_grad_l2: f64,
    pub gagliardo_sq: Option<f64>,
}

/// Weighted spectral sum `2L Σ w(k) |c_k|²`.
pub fn weighted_sum(f: &Field, weight: impl Fn(f64) -> f64) -> f64 {
    let g = f.grid();
    f.spectrum()
        .iter()
        .enumerate()
        .map(|(m, c)| weight(g.wavenumber(m)) * c.norm_sqr())
        .sum::<f64>()
        * g.period()
}

/// `‖(-Δ)^{σ/2} f‖₂²` from the spectrum, Nyquist mode excluded.
pub fn frac_grad_sq(f: &Field, sigma: f64) -> f64 {
    let g = *f.grid();
    let nyq = g.nyquist_slot();
    f.spectrum()
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != nyq)
        .map(|(m, c)| {
            let k = g.wavenumber(m).abs();
            if k == 0.0 {
                0.0
            } else {
                k.powf(2.0 * sigma) * c.norm_sqr()
            }
        })
        .sum::<f64>()
        * g.period()
}

/// `‖f‖_{H^1}` with weights `1 + k²`.
pub fn h1_norm(f: &Field) -> f64 {
    weighted_sum(f, |k| 1.0 + k * k).sqrt()
}

pub fn hs_norm(f: &Field, s: FracOrder) -> NormReport {
    let sv = s.value();
    let l2 = f.l2_norm();
    let fg2 = frac_grad_sq(f, sv);
    NormReport {
        l2,
        hs_fourier: weighted_sum(f, |k| (1.0 + k * k).powf(sv)).sqrt(),
        hs_split: (l2 * l2 + fg2).sqrt(),
        frac_grad_l2: fg2.sqrt(),
        gagliardo_sq: None,
    }
}

pub fn hs_norm_with_gagliardo(f: &Field, s: FracOrder, quad: QuadratureSpec) -> Result<NormReport> {
    let mut r = hs_norm(f, s);
    r.gagliardo_sq = Some(gagliardo_seminorm_sq(f, s, quad)?.value);
    Ok(r)
}

/// Constants `(m_s, M_s)` with `m_s (‖f‖ + ‖(-Δ)^{s/2}f‖) ≤ ‖f‖_{H^s} ≤ M_s (‖f‖ + ‖(-Δ)^{s/2}f‖)`
/// for every field resolved on `grid`, from the extremes of
/// `(1+κ²)^s / (1+κ^{2s})` over the resolved wavenumbers.
pub fn norm_equivalence_constants(grid: &GridSpec, s: FracOrder) -> (f64, f64) {
    let sv = s.value();
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    for j in 1..grid.n_points() / 2 {
        let k = grid.wavenumber(j);
        let r = (1.0 + k * k).powf(sv) / (1.0 + k.powf(2.0 * sv));
        lo = lo.min(r);
        hi = hi.max(r);
    }
    ((lo / 2.0).sqrt(), hi.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    /// `rhs - lhs` for inequalities, `-|rhs - lhs|` for identities.
    pub margin: f64,
    pub tolerance: f64,
    pub witness: String,
    pub seed: Option<u64>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.margin >= -self.tolerance
    }

    pub(crate) fn inequality(name: &str, s: f64, lhs: f64, rhs: f64, constant: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            s,
            lhs,
            rhs,
            constant,
            margin: rhs - lhs,
            tolerance,
            witness: String::new(),
            seed: None,
        }
    }

    pub fn with_witness(mut self, witness: impl Into<String>, seed: Option<u64>) -> Self {
        self.witness = witness.into();
        self.seed = seed;
        self
    }
}

/// Slack allowed on the sharp inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-10;

/// Checks `∬|f(x)-f(y)|²|x-y|^{-1-2s} = 2 C_{1,s}^{-1} ‖(-Δ)^{s/2} f‖²`.
pub fn check_equivalence(f: &Field, s: FracOrder, quad: QuadratureSpec) -> Result<InequalityReport> {
    let semi = gagliardo_seminorm_sq(f, s, quad)?;
    let c = cns_constant(s)?;
    let rhs = 2.0 / c * frac_grad_sq(f, s.value());
    let lhs = semi.value;
    let tolerance = semi.quadrature_error + quad.rel_tol * rhs.abs();
    Ok(InequalityReport {
        name: "seminorm_equivalence".into(),
        s: s.value(),
        lhs,
        rhs,
        constant: 2.0 / c,
        margin: -(rhs - lhs).abs(),
        tolerance,
        witness: String::new(),
        seed: None,
    })
}

/// Exact samples of `f·g` on the grid refined by `factor`, as a field on
/// the refined grid.
pub fn refined_field(f: &Field, factor: usize) -> Field {
    let g = f.grid();
    let fine = GridSpec::new(g.half_length(), g.n_points() * factor).expect("refined grid valid");
    Field::from_complex(fine, f.refine(factor))
        .expect("length matches")
        .with_flavor(f.flavor())
}

/// Checks `‖fg‖_{H^s} ≤ C ‖f‖_{H^s} ‖g‖_{H^s}` with a configured constant.
/// The product is formed on a twice-refined grid, exact for resolved inputs.
pub fn check_algebra(f: &Field, g: &Field, s: FracOrder, constant: f64) -> Result<InequalityReport> {
    s.require_above_half()?;
    f.same_grid(g)?;
    let prod = refined_field(f, 2).mul(&refined_field(g, 2))?;
    let lhs = hs_norm(&prod, s).hs_fourier;
    let rhs = constant * hs_norm(f, s).hs_fourier * hs_norm(g, s).hs_fourier;
    Ok(InequalityReport::inequality(
        "algebra",
        s.value(),
        lhs,
        rhs,
        constant,
        INEQUALITY_SLACK,
    ))
}

/// Ratio `‖fg‖_{H^s} / (‖f‖_{H^s} ‖g‖_{H^s})`.
pub fn algebra_ratio(f: &Field, g: &Field, s: FracOrder) -> Result<f64> {
    let r = check_algebra(f, g, s, 1.0)?;
    Ok(if r.rhs == 0.0 { 0.0 } else { r.lhs / r.rhs })
}

/// Checks `‖(-Δ)^{s/2} F(f)‖₂ ≤ ‖F'‖_∞ ‖(-Δ)^{s/2} f‖₂` for a real field and a
/// scalar map `F` with `F(0) = 0`. `F(f)` is formed on an 8× refined grid.
pub fn check_chain_rule(
    map: impl Fn(f64) -> f64,
    lipschitz: f64,
    f: &Field,
    s: FracOrder,
) -> Result<InequalityReport> {
    if map(0.0).abs() > 0.0 {
        return Err(Error::InvalidArgument("chain rule map must satisfy F(0) = 0".into()));
    }
    let sv = s.value();
    let fine = refined_field(f, REFINE).map_real(&map);
    let lhs = frac_grad_sq(&fine, sv).sqrt();
    let rhs = lipschitz * frac_grad_sq(f, sv).sqrt();
    Ok(InequalityReport::inequality(
        "chain_rule",
        sv,
        lhs,
        rhs,
        lipschitz,
        INEQUALITY_SLACK,
    ))
}

/// Constant `2/√(π(2s-1))` of the L∞ interpolation inequality.
pub fn linf_constant(s: FracOrder) -> Result<f64> {
    s.require_above_half()?;
    Ok(2.0 / (std::f64::consts::PI * (2.0 * s.value() - 1.0)).sqrt())
}

/// Checks `‖f‖_∞ ≤ 2/√(π(2s-1)) ‖f‖₂^{1-1/(2s)} ‖(-Δ)^{s/2}f‖₂^{1/(2s)}`.
pub fn check_linf_interp(f: &Field, s: FracOrder) -> Result<InequalityReport> {
    let c = linf_constant(s)?;
    let sv = s.value();
    let lhs = f.sup_padded(REFINE);
    let l2 = f.l2_norm();
    let fg = frac_grad_sq(f, sv).sqrt();
    let rhs = c * l2.powf(1.0 - 0.5 / sv) * fg.powf(0.5 / sv);
    Ok(InequalityReport::inequality("linf_interp", sv, lhs, rhs, c, INEQUALITY_SLACK))
}

/// Checks `‖(-Δ)^{s/2}|f|²‖₂ ≤ 2 ‖f‖_∞ ‖(-Δ)^{s/2}f‖₂`. `|f|²` is formed on a
/// twice-refined grid so its spectrum is exact.
pub fn check_product_bound(f: &Field, s: FracOrder) -> Result<InequalityReport> {
    s.require_above_half()?;
    let sv = s.value();
    let sq = refined_field(f, 2).abs_sq();
    let lhs = frac_grad_sq(&sq, sv).sqrt();
    let rhs = 2.0 * f.sup_padded(REFINE) * frac_grad_sq(f, sv).sqrt();
    Ok(InequalityReport::inequality("product_bound", sv, lhs, rhs, 2.0, INEQUALITY_SLACK))
}

/// Random mean-free field with modes `0 < |j| < N/4`, amplitudes
/// `|k|^{-1}·N(0,1)` and uniform phases.
pub fn random_band_limited(grid: GridSpec, flavor: Flavor, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_points();
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    let band = n / 4;
    let draw = |k: f64, rng: &mut ChaCha8Rng| {
        let a: f64 = rng.sample(StandardNormal);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        Complex64::from_polar(a / k.abs(), phase)
    };
    for j in 1..band {
        let k = grid.wavenumber(j);
        let c = draw(k, &mut rng);
        spec[j] = c;
        spec[n - j] = match flavor {
            Flavor::RealLongwave => c.conj(),
            Flavor::ComplexShortwave => draw(k, &mut rng),
        };
    }
    Field::from_spectrum(grid, &spec, flavor).expect("spectrum length matches grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(PI, 64).unwrap()
    }

    #[test]
    fn single_mode_norms() {
        let g = grid();
        let s = FracOrder::new(0.7).unwrap();
        let a = Complex64::new(0.3, -0.4);
        let f = Field::from_fn_complex(g, |x| a * Complex64::new(0.0, 3.0 * x).exp());
        let r = hs_norm(&f, s);
        let expect = (10f64.powf(0.7) * a.norm_sqr() * 2.0 * PI).sqrt();
        assert!((r.hs_fourier - expect).abs() < 1e-12);
        assert!((r.l2 - (a.norm_sqr() * 2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((r.frac_grad_l2 - 3f64.powf(0.7) * r.l2).abs() < 1e-12);
        assert!(r.hs_fourier >= r.l2);
    }

    #[test]
    fn small_order_split_weight_limit() {
        let g = grid();
        let s = FracOrder::new(1e-9).unwrap();
        let f = Field::from_fn_real(g, |x| (2.0 * x).sin());
        let r = hs_norm(&f, s);
        assert!((r.hs_split - 2f64.sqrt() * r.l2).abs() < 1e-7);
        assert!((r.hs_fourier - r.l2).abs() < 1e-7);
    }

    #[test]
    fn equivalence_constants_bracket_random_fields() {
        let g = GridSpec::new(8.0, 128).unwrap();
        for s in [0.55, 0.75, 0.95] {
            let s = FracOrder::new(s).unwrap();
            let (lo, hi) = norm_equivalence_constants(&g, s);
            assert!(lo > 0.0 && hi >= 1.0);
            for seed in 0..50 {
                let f = random_band_limited(g, Flavor::ComplexShortwave, seed);
                let r = hs_norm(&f, s);
                let sum = r.l2 + r.frac_grad_l2;
                assert!(r.hs_fourier <= hi * sum * (1.0 + 1e-12));
                assert!(r.hs_fourier >= lo * sum * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn equivalence_identity_on_gaussian() {
        let g = GridSpec::new(12.0, 256).unwrap();
        let f = Field::from_fn_real(g, |x| (-x * x).exp());
        let r = check_equivalence(&f, FracOrder::new(0.6).unwrap(), QuadratureSpec::default()).unwrap();
        assert!((r.lhs / r.rhs - 1.0).abs() < 1e-2);
        let zero = Field::from_fn_real(g, |_| 1.0);
        let r = check_equivalence(&zero, FracOrder::new(0.6).unwrap(), QuadratureSpec::default()).unwrap();
        assert!(r.lhs.abs() < 1e-12 && r.rhs.abs() < 1e-12);
    }

    #[test]
    fn algebra_identity_element_and_two_modes() {
        let g = grid();
        let s = FracOrder::new(0.75).unwrap();
        let f = random_band_limited(g, Flavor::RealLongwave, 3);
        let one = Field::from_fn_real(g, |_| 1.0);
        let ratio = algebra_ratio(&f, &one, s).unwrap();
        let one_norm = hs_norm(&one, s).hs_fourier;
        assert!((ratio - 1.0 / one_norm).abs() < 1e-12);

        // cos(kx)² = (1 + cos 2kx)/2
        let k = 3.0;
        let c = Field::from_fn_real(g, |x| (k * x).cos());
        let ratio = algebra_ratio(&c, &c, s).unwrap();
        let l = 2.0 * PI;
        let prod_sq = l * (0.25 + 2.0 * 0.0625 * (1.0 + 4.0 * k * k).powf(0.75));
        let single_sq = l * 2.0 * 0.25 * (1.0 + k * k).powf(0.75);
        assert!((ratio - prod_sq.sqrt() / single_sq).abs() < 1e-12);
        assert!(check_algebra(&c, &c, FracOrder::new(0.4).unwrap(), 1.0).is_err());
    }

    #[test]
    fn chain_rule_linear_maps_are_equalities() {
        let g = grid();
        let s = FracOrder::new(0.6).unwrap();
        let f = random_band_limited(g, Flavor::RealLongwave, 11);
        let r = check_chain_rule(|x| x, 1.0, &f, s).unwrap();
        assert!((r.lhs - r.rhs).abs() < 1e-12 * r.rhs);
        let r = check_chain_rule(|x| -2.5 * x, 2.5, &f, s).unwrap();
        assert!((r.lhs - r.rhs).abs() < 1e-12 * r.rhs);
        let r = check_chain_rule(f64::tanh, 1.0, &f, s).unwrap();
        assert!(r.passed() && r.margin > 0.0);
        assert!(check_chain_rule(|x| x + 1.0, 1.0, &f, s).is_err());
    }

    #[test]
    fn linf_single_mode_closed_form() {
        let g = grid();
        let s = FracOrder::new(0.75).unwrap();
        let k = 2.0;
        let f = Field::from_fn_real(g, |x| (k * x).cos());
        let r = check_linf_interp(&f, s).unwrap();
        let l2 = PI.sqrt();
        let rhs = 2.0 / (PI * 0.5).sqrt() * l2.powf(1.0 / 3.0) * (k.powf(0.75) * l2).powf(2.0 / 3.0);
        assert!((r.lhs - 1.0).abs() < 1e-12);
        assert!((r.rhs - rhs).abs() < 1e-12 * rhs);
        assert!(r.passed());
        let zero = Field::zeros(g, Flavor::RealLongwave);
        let r = check_linf_interp(&zero, s).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(check_linf_interp(&f, FracOrder::new(0.5).unwrap()).is_err());
    }

    #[test]
    fn product_single_mode_closed_form() {
        let g = grid();
        let s = FracOrder::new(0.8).unwrap();
        let k = 3.0;
        let f = Field::from_fn_real(g, |x| (k * x).cos());
        let r = check_product_bound(&f, s).unwrap();
        // |f|² = 1/2 + cos(2kx)/2
        let lhs = ((2.0 * k).powf(0.8) * 0.5 * PI.sqrt()).abs();
        let rhs = 2.0 * k.powf(0.8) * PI.sqrt();
        assert!((r.lhs - lhs).abs() < 1e-12 * lhs);
        assert!((r.rhs - rhs).abs() < 1e-12 * rhs);
        assert!(r.passed());
    }

    #[test]
    fn gaussians_of_varying_width_satisfy_linf() {
        let g = GridSpec::new(40.0, 2048).unwrap();
        for s in [0.55, 0.75, 0.95] {
            let s = FracOrder::new(s).unwrap();
            for w in [0.3, 1.0, 3.0] {
                let f = Field::from_fn_real(g, |x| (-(x / w).powi(2)).exp());
                assert!(check_linf_interp(&f, s).unwrap().passed());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn norms_invariant_under_translation_and_phase(seed in 0u64..1000, shift in 0usize..64, theta in 0.0f64..6.3) {
            let g = grid();
            let s = FracOrder::new(0.65).unwrap();
            let f = random_band_limited(g, Flavor::ComplexShortwave, seed);
            let a = hs_norm(&f, s);
            let b = hs_norm(&f.translate(shift).scale(Complex64::from_polar(1.0, theta)), s);
            prop_assert!((a.hs_fourier - b.hs_fourier).abs() < 1e-12 * a.hs_fourier);
            prop_assert!((a.frac_grad_l2 - b.frac_grad_l2).abs() < 1e-12 * a.frac_grad_l2);
        }

        #[test]
        fn sharp_inequalities_hold(seed in 0u64..10_000, s in 0.51f64..0.99) {
            let g = GridSpec::new(5.0, 64).unwrap();
            let s = FracOrder::new(s).unwrap();
            let f = random_band_limited(g, Flavor::ComplexShortwave, seed);
            prop_assert!(check_linf_interp(&f, s).unwrap().passed());
            prop_assert!(check_product_bound(&f, s).unwrap().passed());
            let r = random_band_limited(g, Flavor::RealLongwave, seed);
            prop_assert!(check_chain_rule(f64::tanh, 1.0, &r, s).unwrap().passed());
        }
    }
}
