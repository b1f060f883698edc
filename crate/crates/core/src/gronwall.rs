//! Bounds for nonnegative `η` with
//! `η(t) ≤ C + ∫_{t₀}^t (a η + b η^σ)` in all three regimes, plus an ODE
//! integrator for the equality case used to check them.
//!
//! With `A(t) = ∫_{t₀}^t a` and `J(t) = ∫_{t₀}^t b(τ) e^{(σ-1)A(τ)} dτ` the
//! bound reads
//!
//! ```text
//! σ ≠ 1:  η(t) ≤ e^{A(t)} {C^{1-σ} + (1-σ) J(t)}^{1/(1-σ)}
//! σ = 1:  η(t) ≤ C exp(∫_{t₀}^t (a + b))
//! ```
//!
//! For `σ > 1` the bracket must stay positive; a sufficient condition on the
//! whole window `[t₀, t₀+h]` is
//! `C < e^{-A(t₀+h)} ((σ-1) ∫_{t₀}^{t₀+h} b)^{-1/(σ-1)}`.

use std::cell::Cell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, AdaptiveOptions};

/// Nonnegative coefficient function of time.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// Piecewise-linear interpolation of samples at increasing times,
    /// held constant outside the sampled range.
    Sampled { times: Vec<f64>, values: Vec<f64> },
    Func(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Sampled { times, .. } => write!(f, "Sampled({} samples)", times.len()),
            Self::Func(_) => write!(f, "Func"),
        }
    }
}

impl Coefficient {
    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Func(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Sampled { times, values } => {
                let j = times.partition_point(|&x| x <= t);
                if j == 0 {
                    values[0]
                } else if j == times.len() {
                    values[j - 1]
                } else {
                    let w = (t - times[j - 1]) / (times[j] - times[j - 1]);
                    values[j - 1] + w * (values[j] - values[j - 1])
                }
            }
            Self::Func(f) => f(t),
        }
    }

    /// `∫_lo^hi` of the coefficient.
    pub fn integral(&self, lo: f64, hi: f64) -> Result<f64> {
        match self {
            Self::Constant(c) => Ok(c * (hi - lo)),
            Self::Sampled { times, .. } => {
                // Exact for the interpolant: split at the sample times.
                let mut knots = vec![lo];
                knots.extend(times.iter().copied().filter(|&x| x > lo && x < hi));
                knots.push(hi);
                Ok(knots
                    .windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])))
                    .sum())
            }
            Self::Func(f) => Ok(integrate(|x| f(x), lo, hi, AdaptiveOptions::default())?.value),
        }
    }

    fn check(&self, name: &str, t0: f64, t1: f64) -> Result<()> {
        let bad = |v: f64| !(v >= 0.0 && v.is_finite());
        let fail = || Err(Error::InvalidArgument(format!("coefficient {name} must be finite and ≥ 0")));
        match self {
            Self::Constant(c) if bad(*c) => fail(),
            Self::Sampled { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient {name}: times and values must be nonempty and of equal length"
                    )));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient {name}: sample times must increase"
                    )));
                }
                if values.iter().any(|v| bad(*v)) {
                    return fail();
                }
                Ok(())
            }
            Self::Func(f) => {
                for i in 0..=256 {
                    if bad(f(t0 + (t1 - t0) * i as f64 / 256.0)) {
                        return fail();
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GronwallSpec {
    pub c: f64,
    pub sigma: f64,
    pub a: Coefficient,
    pub b: Coefficient,
    pub t0: f64,
    pub horizon: f64,
}

impl GronwallSpec {
    pub fn new(c: f64, sigma: f64, a: Coefficient, b: Coefficient, t0: f64, horizon: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("C must be finite and ≥ 0, got {c}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("σ must be finite and ≥ 0, got {sigma}")));
        }
        if !(horizon > 0.0 && horizon.is_finite() && t0.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        a.check("a", t0, t0 + horizon)?;
        b.check("b", t0, t0 + horizon)?;
        Ok(Self {
            c,
            sigma,
            a,
            b,
            t0,
            horizon,
        })
    }

    fn end(&self) -> f64 {
        self.t0 + self.horizon
    }

    /// `J(t) = ∫_{t₀}^t b(τ) e^{(σ-1)A(τ)} dτ`.
    fn weighted_b(&self, t: f64) -> Result<f64> {
        if t == self.t0 {
            return Ok(0.0);
        }
        let k = self.sigma - 1.0;
        if let Coefficient::Constant(a) = self.a {
            if let Coefficient::Constant(b) = self.b {
                let x = k * a * (t - self.t0);
                return Ok(if x == 0.0 {
                    b * (t - self.t0)
                } else {
                    b * (t - self.t0) * x.exp_m1() / x
                });
            }
        }
        let failure = Cell::new(None);
        let value = integrate(
            |tau| {
                let a = self.a.integral(self.t0, tau).unwrap_or_else(|e| {
                    failure.set(Some(e));
                    0.0
                });
                self.b.eval(tau) * (k * a).exp()
            },
            self.t0,
            t,
            AdaptiveOptions::default(),
        )?
        .value;
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }

    /// `C^{1-σ} + (1-σ) J(t)` for `σ > 1`; the bound exists while it is positive.
    fn bracket(&self, t: f64) -> Result<f64> {
        Ok(self.c.powf(1.0 - self.sigma) + (1.0 - self.sigma) * self.weighted_b(t)?)
    }

    /// Right side of the window condition for `σ > 1` over `[t₀, t]`.
    fn admissible_c(&self, t: f64) -> Result<f64> {
        let k = self.sigma - 1.0;
        let a = self.a.integral(self.t0, t)?;
        let b = self.b.integral(self.t0, t)?;
        Ok((-a).exp() * (k * b).powf(-1.0 / k))
    }

    /// Largest `t ≤ t₀+h` at which the `σ > 1` bracket is still positive.
    pub fn max_admissible_time(&self) -> Result<f64> {
        if self.sigma <= 1.0 || self.c == 0.0 || self.bracket(self.end())? > 0.0 {
            return Ok(self.end());
        }
        let (mut lo, mut hi) = (self.t0, self.end());
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.bracket(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }
}

/// Bound on `η(t)` for `t₀ ≤ t ≤ t₀+h`.
///
/// For `σ > 1` the window condition is enforced both at the full horizon
/// and on `[t₀, t]`, and the bracket is required to stay positive at `t`.
pub fn gronwall_bound(spec: &GronwallSpec, t: f64) -> Result<f64> {
    if !(t >= spec.t0 && t <= spec.end()) {
        return Err(Error::InvalidArgument(format!(
            "t = {t} outside [{}, {}]",
            spec.t0,
            spec.end()
        )));
    }
    let sigma = spec.sigma;
    let c = spec.c;
    let a_int = spec.a.integral(spec.t0, t)?;
    if sigma == 1.0 {
        return Ok(c * (a_int + spec.b.integral(spec.t0, t)?).exp());
    }
    if sigma > 1.0 {
        if c == 0.0 {
            return Ok(0.0);
        }
        for end in [spec.end(), t] {
            if end == spec.t0 {
                continue;
            }
            let limit = spec.admissible_c(end)?;
            if !(c < limit) {
                return Err(Error::InadmissibleHorizon {
                    condition: format!(
                        "C = {c} must be below e^(-∫a) ((σ-1)∫b)^(-1/(σ-1)) = {limit} on [{}, {end}]",
                        spec.t0
                    ),
                    max_time: spec.max_admissible_time()?,
                });
            }
        }
    }
    let j = spec.weighted_b(t)?;
    let k = 1.0 - sigma;
    if sigma > 1.0 && spec.bracket(t)? <= 0.0 {
        return Err(Error::InadmissibleHorizon {
            condition: format!("bracket C^(1-σ) + (1-σ)J(t) is not positive at t = {t}"),
            max_time: spec.max_admissible_time()?,
        });
    }
    if c == 0.0 {
        // σ < 1 only: C^{1-σ} = 0.
        return Ok(a_int.exp() * (k * j).powf(1.0 / k));
    }
    // ln{C^{k} + kJ} = k ln C + ln(1 + kJ C^{-k}), kept accurate as σ → 1.
    let ln_bracket = k * c.ln() + (k * j * (-k * c.ln()).exp()).ln_1p();
    Ok((a_int + ln_bracket / k).exp())
}

/// Classical RK4 for the equality case `η' = a η + b η^σ`, `η(t₀) = C`,
/// with `steps` uniform steps up to `t`.
pub fn integrate_equality_case(spec: &GronwallSpec, t: f64, steps: usize) -> f64 {
    let rhs = |tau: f64, y: f64| spec.a.eval(tau) * y + spec.b.eval(tau) * y.max(0.0).powf(spec.sigma);
    let h = (t - spec.t0) / steps.max(1) as f64;
    let mut y = spec.c;
    let mut tau = spec.t0;
    for _ in 0..steps.max(1) {
        let k1 = rhs(tau, y);
        let k2 = rhs(tau + 0.5 * h, y + 0.5 * h * k1);
        let k3 = rhs(tau + 0.5 * h, y + 0.5 * h * k2);
        let k4 = rhs(tau + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        tau += h;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(c: f64, sigma: f64, a: f64, b: f64, h: f64) -> GronwallSpec {
        GronwallSpec::new(c, sigma, Coefficient::Constant(a), Coefficient::Constant(b), 0.0, h).unwrap()
    }

    #[test]
    fn exponential_case() {
        let spec = constant(1.7, 1.0, 0.3, 0.45, 2.0);
        for t in [0.0f64, 0.5, 1.3, 2.0] {
            let expect = 1.7 * (0.75 * t).exp();
            assert!((gronwall_bound(&spec, t).unwrap() - expect).abs() <= 1e-10 * expect);
        }
    }

    #[test]
    fn linear_case_without_b() {
        let spec = GronwallSpec::new(
            2.0,
            0.0,
            Coefficient::func(|t| 1.0 + t.sin().powi(2)),
            Coefficient::Constant(0.0),
            0.0,
            3.0,
        )
        .unwrap();
        // ∫_0^t (1 + sin²) = 3t/2 - sin(2t)/4.
        for t in [0.4f64, 1.0, 3.0] {
            let expect = 2.0 * (1.5 * t - (2.0 * t).sin() / 4.0).exp();
            assert!((gronwall_bound(&spec, t).unwrap() - expect).abs() <= 1e-10 * expect);
        }
    }

    #[test]
    fn quadratic_equality_case() {
        let spec = constant(0.5, 2.0, 0.0, 1.0, 0.9);
        for i in 0..=90 {
            let t = i as f64 / 100.0;
            let ode = integrate_equality_case(&spec, t, 2000);
            let bound = gronwall_bound(&spec, t).unwrap();
            assert!((bound - 1.0 / (2.0 - t)).abs() < 1e-12);
            assert!((bound - ode).abs() < 1e-6);
        }
    }

    #[test]
    fn inadmissible_horizon_is_rejected() {
        // η' = η², η(0) = 1/2 blows up at t = 2.
        let spec = constant(0.5, 2.0, 0.0, 1.0, 2.5);
        match gronwall_bound(&spec, 1.0) {
            Err(Error::InadmissibleHorizon { max_time, .. }) => assert!((max_time - 2.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert!(gronwall_bound(&spec, 3.0).is_err());
        assert!(GronwallSpec::new(-1.0, 2.0, Coefficient::Constant(0.0), Coefficient::Constant(1.0), 0.0, 1.0).is_err());
        assert!(GronwallSpec::new(1.0, 2.0, Coefficient::func(|t| t - 0.5), Coefficient::Constant(1.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_initial_value_stays_zero_above_one() {
        let spec = constant(0.0, 3.0, 1.0, 1.0, 1.0);
        assert_eq!(gronwall_bound(&spec, 1.0).unwrap(), 0.0);
        // σ < 1 with C = 0 is the classical non-uniqueness case: bound ((1-σ) t)^{1/(1-σ)}.
        let spec = constant(0.0, 0.5, 0.0, 1.0, 1.0);
        assert!((gronwall_bound(&spec, 1.0).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn sampled_matches_closed_form_coefficients() {
        let times: Vec<f64> = (0..=200).map(|i| i as f64 / 100.0).collect();
        let a = Coefficient::Sampled {
            values: times.iter().map(|t| 0.2 + 0.1 * t).collect(),
            times: times.clone(),
        };
        let f = Coefficient::func(|t| 0.2 + 0.1 * t);
        let b = Coefficient::Constant(0.3);
        let sampled = GronwallSpec::new(1.0, 0.5, a, b.clone(), 0.0, 2.0).unwrap();
        let exact = GronwallSpec::new(1.0, 0.5, f, b, 0.0, 2.0).unwrap();
        let (x, y) = (gronwall_bound(&sampled, 1.7).unwrap(), gronwall_bound(&exact, 1.7).unwrap());
        assert!((x - y).abs() < 1e-9 * y);
    }

    #[test]
    fn bound_dominates_equality_case_with_variable_coefficients() {
        let a = Coefficient::func(|t| 0.5 * (1.0 + t.cos()));
        let b = Coefficient::func(|t| 0.2 * t);
        for sigma in [0.0, 0.4, 1.0, 1.5, 2.0] {
            let spec = GronwallSpec::new(0.8, sigma, a.clone(), b.clone(), 0.0, 1.0).unwrap();
            for i in 1..=10 {
                let t = i as f64 / 10.0;
                let bound = gronwall_bound(&spec, t).unwrap();
                let ode = integrate_equality_case(&spec, t, 4000);
                assert!((bound - ode).abs() < 1e-8 * bound, "σ = {sigma}, t = {t}: {bound} vs {ode}");
            }
        }
    }

    #[test]
    fn continuity_across_sigma_one() {
        let a = Coefficient::func(|t| 0.3 + 0.1 * t);
        let b = Coefficient::Constant(0.4);
        let eval = |sigma: f64| {
            let spec = GronwallSpec::new(2.0, sigma, a.clone(), b.clone(), 0.0, 1.0).unwrap();
            gronwall_bound(&spec, 1.0).unwrap()
        };
        let (lo, mid, hi) = (eval(1.0 - 1e-6), eval(1.0), eval(1.0 + 1e-6));
        assert!(lo <= mid && mid <= hi, "{lo} {mid} {hi}");
        assert!((hi - lo) / mid < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn monotone_in_data(
            c in 0.01f64..2.0,
            dc in 0.0f64..1.0,
            a in 0.0f64..1.0,
            da in 0.0f64..1.0,
            b in 0.0f64..1.0,
            db in 0.0f64..1.0,
            sigma in 0.0f64..0.99,
            t in 0.0f64..1.0,
        ) {
            let base = gronwall_bound(&constant(c, sigma, a, b, 1.0), t).unwrap();
            prop_assert!(gronwall_bound(&constant(c + dc, sigma, a, b, 1.0), t).unwrap() >= base * (1.0 - 1e-12));
            prop_assert!(gronwall_bound(&constant(c, sigma, a + da, b, 1.0), t).unwrap() >= base * (1.0 - 1e-12));
            prop_assert!(gronwall_bound(&constant(c, sigma, a, b + db, 1.0), t).unwrap() >= base * (1.0 - 1e-12));
        }

        #[test]
        fn dominates_ode_above_one(c in 0.05f64..0.5, a in 0.0f64..0.5, b in 0.0f64..0.8, sigma in 1.01f64..3.0) {
            let spec = constant(c, sigma, a, b, 1.0);
            match gronwall_bound(&spec, 1.0) {
                Ok(bound) => {
                    let ode = integrate_equality_case(&spec, 1.0, 2000);
                    prop_assert!(bound >= ode * (1.0 - 1e-8));
                }
                Err(Error::InadmissibleHorizon { max_time, .. }) => prop_assert!(max_time <= 1.0),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
