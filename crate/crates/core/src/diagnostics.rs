//! A-priori quantities along trajectories: mass, the energy functional and
//! its balance law, the long-wave L² balance, the bilinear form of the
//! fractional diffusion, the θ/H envelopes of the global bound, the
//! smallness condition that closes it, and negative-norm bounds on time
//! derivatives.
//!
//! All spatial integrals are grid sums over the same dealiased products the
//! solver uses, so the semi-discrete identities hold exactly and the
//! residuals measure only time discretization.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::singular::{cns_constant, gagliardo_seminorm_sq, QuadratureSpec};
use crate::sobolev::{frac_grad_sq, refined_field, weighted_sum, InequalityReport, INEQUALITY_SLACK, REFINE};
use crate::solver::{
    g_eps_apply, mollify_initial, solve_perturbed, PerturbedRun, SystemParams, Trajectory,
};
use crate::spectral::{Field, FracOrder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `‖u‖₂²`.
    pub mass: f64,
    /// `‖(-Δ)^{s/2}u‖² + ε^a‖∂u‖² + ½∫|u|⁴ + α∫v|u|²`.
    pub energy: f64,
    pub v_l2: f64,
    pub v_sup: f64,
    pub energy_balance_residual: f64,
    pub v_balance_residual: f64,
    pub theta: f64,
    pub h_bound: f64,
    pub dtu_hminus1: f64,
    pub dtv_hminus1: f64,
}

/// Grid quantities of one state that the balances and envelopes need.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StateTerms {
    mass: f64,
    frac_u: f64,
    grad_u: f64,
    quartic: f64,
    energy: f64,
    energy_flux: f64,
    v_l2_sq: f64,
    v_sup: f64,
    grad_v: f64,
    frac_v_half: f64,
    /// `∫(-Δ)^{s/2}g_ε(v)·v + ε^b‖∂v‖² - β∫(-Δ)^{s/2}|u|²·v`.
    v_dissipation: f64,
}

/// `P(-Δ)^{s/2} q`, the dealiased half-order operator used by the solver.
fn half_power(q: &Field, s: f64) -> Field {
    q.dealias().abs_k_power(s)
}

fn real_inner(a: &Field, b: &Field) -> f64 {
    a.inner(b).expect("same grid").re
}

fn state_terms(u: &Field, v: &Field, params: &SystemParams, run: &PerturbedRun) -> StateTerms {
    let s = params.s.value();
    let prop = run.propagator(params.s);
    let (ea, eb) = (prop.dispersion(), prop.viscosity());
    let rho = u.abs_sq();
    let d_rho = half_power(&rho, s);
    let d_g = half_power(&g_eps_apply(v, run.eps, &params.g), s);
    let lap_v = v.laplacian();
    let frac_u = frac_grad_sq(u, s);
    let grad_u = frac_grad_sq(u, 1.0);
    let quartic = u.lp_integral(4.0);
    let coupling = real_inner(v, &rho);
    let alpha = params.alpha;
    let energy_flux = alpha * params.beta * real_inner(&d_rho, &rho) - alpha * real_inner(&d_g, &rho)
        + alpha * eb * real_inner(&lap_v, &rho);
    let grad_v = -real_inner(&lap_v, v);
    StateTerms {
        mass: u.l2_norm_sq(),
        frac_u,
        grad_u,
        quartic,
        energy: frac_u + ea * grad_u + 0.5 * quartic + alpha * coupling,
        energy_flux,
        v_l2_sq: v.l2_norm_sq(),
        v_sup: v.sup_padded(REFINE),
        grad_v,
        frac_v_half: frac_grad_sq(v, 0.5 * s),
        v_dissipation: real_inner(&d_g, v) + eb * grad_v - params.beta * real_inner(&d_rho, v),
    }
}

fn all_terms(traj: &Trajectory) -> Vec<StateTerms> {
    traj.u
        .iter()
        .zip(&traj.v)
        .map(|(u, v)| state_terms(u, v, &traj.params, &traj.run))
        .collect()
}

/// Second-order derivative estimate of sampled values at index `i`:
/// central in the interior, three-point one-sided at the ends.
fn time_derivative(values: &[f64], dt: f64, i: usize) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => (values[1] - values[0]) / dt,
        _ if i == 0 => (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt),
        _ if i == n - 1 => (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dt),
        _ => (values[i + 1] - values[i - 1]) / (2.0 * dt),
    }
}

fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * dt * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

fn interior_index(traj: &Trajectory, i: usize) -> Result<()> {
    if traj.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: traj.len(),
        });
    }
    if i == 0 || i + 1 >= traj.len() {
        return Err(Error::InvalidArgument(format!(
            "sample {i} has no neighbours on both sides in a trajectory of {}",
            traj.len()
        )));
    }
    Ok(())
}

/// `|dE/dt - RHS|` at interior sample `i`, where `RHS` is
/// `αβ∫(-Δ)^{s/2}(|u|²)|u|² - α∫|u|²(-Δ)^{s/2}g_ε(v) - αε^b∫∂|u|²∂v`
/// and `dE/dt` is the central difference over samples `i ± 1`.
pub fn energy_balance_residual(traj: &Trajectory, i: usize) -> Result<f64> {
    interior_index(traj, i)?;
    let w: Vec<StateTerms> = (i - 1..=i + 1)
        .map(|j| state_terms(&traj.u[j], &traj.v[j], &traj.params, &traj.run))
        .collect();
    let de = (w[2].energy - w[0].energy) / (2.0 * traj.run.dt);
    Ok((de - w[1].energy_flux).abs())
}

/// `|½ d‖v‖²/dt + ∫(-Δ)^{s/2}g_ε(v)v + ε^b‖∂v‖² - β∫(-Δ)^{s/2}(|u|²)v|` at
/// interior sample `i`.
pub fn v_balance_residual(traj: &Trajectory, i: usize) -> Result<f64> {
    interior_index(traj, i)?;
    let w: Vec<StateTerms> = (i - 1..=i + 1)
        .map(|j| state_terms(&traj.u[j], &traj.v[j], &traj.params, &traj.run))
        .collect();
    let dv = (w[2].v_l2_sq - w[0].v_l2_sq) / (2.0 * traj.run.dt);
    Ok((0.5 * dv + w[1].v_dissipation).abs())
}

/// Largest interior residuals `(energy, v-balance)` over a trajectory.
pub fn max_balance_residuals(traj: &Trajectory) -> Result<(f64, f64)> {
    if traj.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: traj.len(),
        });
    }
    let terms = all_terms(traj);
    let dt = traj.run.dt;
    let energy: Vec<f64> = terms.iter().map(|t| t.energy).collect();
    let v_sq: Vec<f64> = terms.iter().map(|t| t.v_l2_sq).collect();
    let mut worst = (0.0f64, 0.0f64);
    for i in 1..terms.len() - 1 {
        let e = (time_derivative(&energy, dt, i) - terms[i].energy_flux).abs();
        let v = (0.5 * time_derivative(&v_sq, dt, i) + terms[i].v_dissipation).abs();
        worst = (worst.0.max(e), worst.1.max(v));
    }
    Ok(worst)
}

/// `‖f‖_{H^{-1}}` with weights `(1 + k²)^{-1}` on `|c_k|²`.
fn hminus1(f: &Field) -> f64 {
    weighted_sum(f, |k| 1.0 / (1.0 + k * k)).sqrt()
}

/// `(‖Δu/Δt‖_{H^{-1}}, ‖Δv/Δt‖_{H^{-1}})` between two states `dt` apart.
pub fn dt_negative_norm(
    earlier: (&Field, &Field),
    later: (&Field, &Field),
    dt: f64,
) -> Result<(f64, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time separation must be > 0, got {dt}")));
    }
    let du = later.0.sub(earlier.0)?;
    let dv = later.1.sub(earlier.1)?;
    Ok((hminus1(&du) / dt, hminus1(&dv) / dt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeNormReport {
    /// Difference quotients on each step `[t_{i-1}, t_i]`.
    pub per_step: Vec<(f64, f64)>,
    /// `Σ ‖Δu/Δt‖²_{H^{-1}} Δt`.
    pub integral_u: f64,
    pub integral_v: f64,
}

pub fn dt_negative_norms(traj: &Trajectory) -> Result<NegativeNormReport> {
    if traj.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: traj.len(),
        });
    }
    let dt = traj.run.dt;
    let per_step = (1..traj.len())
        .map(|i| dt_negative_norm((&traj.u[i - 1], &traj.v[i - 1]), (&traj.u[i], &traj.v[i]), dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(NegativeNormReport {
        integral_u: per_step.iter().map(|p| p.0 * p.0 * dt).sum(),
        integral_v: per_step.iter().map(|p| p.1 * p.1 * dt).sum(),
        per_step,
    })
}

/// Envelope of the global bound along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub times: Vec<f64>,
    /// `1 + ‖(-Δ)^{s/2}u‖² + ε^a‖∂u‖² + ¼‖u‖₄⁴`.
    pub theta_lhs: Vec<f64>,
    pub theta: Vec<f64>,
    /// Measured `h(t) = ‖(-Δ)^{s/2}u‖² + ε^a‖∂u‖² + ¼‖u‖₄⁴`, standing in
    /// for the unspecified continuous majorant.
    pub h_measured: Vec<f64>,
    pub v_l2_sq: Vec<f64>,
    pub big_h: Vec<f64>,
    /// `min_t (θ - lhs)`.
    pub theta_margin: f64,
    /// `min_t (H - ‖v‖²)`.
    pub h_margin: f64,
}

impl EnvelopeReport {
    pub fn theta_holds(&self) -> bool {
        let scale = self.theta.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        self.theta_margin >= -INEQUALITY_SLACK * scale
    }

    pub fn h_holds(&self) -> bool {
        let scale = self.big_h.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        self.h_margin >= -INEQUALITY_SLACK * scale
    }
}

/// Evaluates `θ(t)` (initial-data block plus four accumulated integrals,
/// trapezoid rule on stored samples) and `H(t)` with the measured `h`.
pub fn theta_envelope(traj: &Trajectory) -> EnvelopeReport {
    let terms = all_terms(traj);
    theta_from_terms(traj, &terms)
}

fn theta_from_terms(traj: &Trajectory, terms: &[StateTerms]) -> EnvelopeReport {
    let params = &traj.params;
    let run = &traj.run;
    let s = params.s.value();
    let prop = run.propagator(params.s);
    let (ea, eb) = (prop.dispersion(), prop.viscosity());
    let big_t = run.t_final;
    let (alpha, beta) = (params.alpha.abs(), params.beta.abs());
    let gprime = params.g.bounds().1 + run.eps;
    let dt = run.dt;
    let (u0, v0) = (&traj.u[0], &traj.v[0]);
    let u0_l2 = u0.l2_norm();
    let v0_l2 = v0.l2_norm();
    let t0 = &terms[0];
    let base = 1.0
        + t0.frac_u
        + ea * t0.grad_u
        + 0.5 * t0.quartic
        + u0.sup_padded(REFINE) * v0_l2 * u0_l2
        + alpha * alpha * big_t.exp() * v0_l2 * v0_l2;
    let q = 2.0 * s - 1.0;
    let k1 = 4.0 * alpha / (PI * q).sqrt() * gprime * u0_l2.powf(1.0 - 0.5 / s);
    let k2 = 8.0 * alpha * beta / (PI * q) * u0_l2.powf(3.0 - 1.0 / s);
    let k3 = 4.0 / PI.sqrt() * alpha * eb * u0_l2.sqrt();
    let k4 = 16.0 * alpha * alpha * beta * beta * big_t.exp() / (PI * q) * u0_l2.powf(2.0 - 1.0 / s);
    let integrand: Vec<f64> = terms
        .iter()
        .map(|t| {
            let du = t.frac_u.sqrt();
            k1 * t.v_l2_sq.sqrt() * du.powf(1.0 + 0.5 / s)
                + k2 * du.powf(1.0 + 1.0 / s)
                + k3 * t.grad_v.sqrt() * t.grad_u.powf(0.75)
                + k4 * du.powf(2.0 + 1.0 / s)
        })
        .collect();
    let theta: Vec<f64> = cumulative_trapezoid(&integrand, dt)
        .into_iter()
        .map(|i| base + i)
        .collect();
    let h_measured: Vec<f64> = terms
        .iter()
        .map(|t| t.frac_u + ea * t.grad_u + 0.25 * t.quartic)
        .collect();
    let theta_lhs: Vec<f64> = h_measured.iter().map(|h| 1.0 + h).collect();
    let kh = 16.0 * beta * beta * big_t.exp() / (PI * q) * u0_l2.powf(2.0 - 1.0 / s);
    let h_pow: Vec<f64> = h_measured.iter().map(|h| h.powf(1.0 + 0.5 / s)).collect();
    let big_h: Vec<f64> = cumulative_trapezoid(&h_pow, dt)
        .into_iter()
        .map(|i| big_t.exp() * v0_l2 * v0_l2 + kh * i)
        .collect();
    let v_l2_sq: Vec<f64> = terms.iter().map(|t| t.v_l2_sq).collect();
    let theta_margin = theta
        .iter()
        .zip(&theta_lhs)
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    let h_margin = big_h
        .iter()
        .zip(&v_l2_sq)
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    EnvelopeReport {
        times: traj.times.clone(),
        theta_lhs,
        theta,
        h_measured,
        v_l2_sq,
        big_h,
        theta_margin,
        h_margin,
    }
}

/// Both readings of the time-integrated dissipation bound. The stated form
/// puts `ε^{1/2}`, `ε^{7/2}` inside the squared norms, raises `h` to
/// `2 + 1/s` and integrates `H²`; the chain of estimates that produces it
/// carries `ε`, `ε^b`, `h^{1 + 1/(2s)}` and `H`. Neither is asserted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub lhs_stated: f64,
    pub rhs_stated: f64,
    pub lhs_tracked: f64,
    pub rhs_tracked: f64,
}

pub fn dissipation_report(traj: &Trajectory) -> Result<DissipationReport> {
    let terms = all_terms(traj);
    let env = theta_from_terms(traj, &terms);
    let params = &traj.params;
    let run = &traj.run;
    let s = params.s.value();
    let eps = run.eps;
    let dt = run.dt;
    let c = cns_constant(params.s)?;
    let last = |v: Vec<f64>| *cumulative_trapezoid(&v, dt).last().expect("nonempty");
    let i_frac = last(terms.iter().map(|t| t.frac_v_half).collect());
    let i_grad = last(terms.iter().map(|t| t.grad_v).collect());
    let u0_l2 = traj.u[0].l2_norm();
    let v0_sq = terms[0].v_l2_sq;
    let k = 8.0 * params.beta.powi(2) / (PI * (2.0 * s - 1.0)) * u0_l2.powf(2.0 - 1.0 / s);
    let h_stated = last(env.h_measured.iter().map(|h| h.powf(2.0 + 1.0 / s)).collect());
    let h_tracked = last(env.h_measured.iter().map(|h| h.powf(1.0 + 0.5 / s)).collect());
    let big_h_sq = last(env.big_h.iter().map(|h| h * h).collect());
    let big_h_int = last(env.big_h.clone());
    Ok(DissipationReport {
        lhs_stated: eps / c * i_frac + eps.powi(7) * i_grad,
        rhs_stated: 0.5 * v0_sq + k * h_stated + 0.5 * big_h_sq,
        lhs_tracked: eps / c * i_frac + run.propagator(params.s).viscosity() * i_grad,
        rhs_tracked: 0.5 * v0_sq + k * h_tracked + 0.5 * big_h_int,
    })
}

/// Per-sample diagnostics for a whole trajectory.
pub fn record_diagnostics(traj: &Trajectory) -> Vec<DiagnosticsRecord> {
    let terms = all_terms(traj);
    let env = theta_from_terms(traj, &terms);
    let dt = traj.run.dt;
    let energy: Vec<f64> = terms.iter().map(|t| t.energy).collect();
    let v_sq: Vec<f64> = terms.iter().map(|t| t.v_l2_sq).collect();
    let neg: Vec<(f64, f64)> = (1..traj.len())
        .map(|i| {
            dt_negative_norm((&traj.u[i - 1], &traj.v[i - 1]), (&traj.u[i], &traj.v[i]), dt)
                .expect("trajectory samples share a grid")
        })
        .collect();
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (dtu, dtv) = match (i, neg.len()) {
                (_, 0) => (0.0, 0.0),
                (0, _) => neg[0],
                _ => neg[i - 1],
            };
            DiagnosticsRecord {
                t: traj.times[i],
                mass: t.mass,
                energy: t.energy,
                v_l2: t.v_l2_sq.sqrt(),
                v_sup: t.v_sup,
                energy_balance_residual: (time_derivative(&energy, dt, i) - t.energy_flux).abs(),
                v_balance_residual: (0.5 * time_derivative(&v_sq, dt, i) + t.v_dissipation).abs(),
                theta: env.theta[i],
                h_bound: env.big_h[i],
                dtu_hminus1: dtu,
                dtv_hminus1: dtv,
            }
        })
        .collect()
}

/// `B_s(v, w) = C_{1,s} ∬ (v(x)-v(y))(w(x)-w(y)) |x-y|^{-1-2s}`, by
/// polarization of the Gagliardo quadrature.
pub fn bilinear_form(v: &Field, w: &Field, s: FracOrder, quad: QuadratureSpec) -> Result<f64> {
    let c = cns_constant(s)?;
    let plus = gagliardo_seminorm_sq(&v.add(w)?, s, quad)?.value;
    let minus = gagliardo_seminorm_sq(&v.sub(w)?, s, quad)?.value;
    Ok(0.25 * c * (plus - minus))
}

/// Checks `B_s(G(w), w) ≥ 0` for a nondecreasing map `G`. `G(w)` is formed on
/// the refined grid so the pairing sees the composed profile rather than its
/// collocation aliasing.
pub fn check_monotone_pairing(
    map: impl Fn(f64) -> f64,
    w: &Field,
    s: FracOrder,
    quad: QuadratureSpec,
) -> Result<InequalityReport> {
    let fine = refined_field(w, 2);
    let gw = fine.map_real(&map);
    let c = cns_constant(s)?;
    let plus = gagliardo_seminorm_sq(&gw.add(&fine)?, s, quad)?;
    let minus = gagliardo_seminorm_sq(&gw.sub(&fine)?, s, quad)?;
    let value = 0.25 * c * (plus.value - minus.value);
    let tolerance = 0.25 * c * (plus.quadrature_error + minus.quadrature_error)
        + quad.rel_tol * 0.25 * c * (plus.value + minus.value);
    Ok(InequalityReport::inequality("monotone_pairing", s.value(), 0.0, value, 1.0, tolerance))
}

/// Checks `∫(-Δ)^{s/2}G(v)·v ≥ m ‖(-Δ)^{s/4}v‖²` for `G' ≥ m`.
///
/// Both sides by spectral sums, `G(v)` on the 8× refined grid. The sharp
/// constant is 1: for `G(v) = m v` the two sides coincide, so a factor
/// `C_{1,s}^{-1} > 1` in front of the right side cannot hold in general.
pub fn check_coercivity(
    map: impl Fn(f64) -> f64,
    m: f64,
    v: &Field,
    s: FracOrder,
    constant: f64,
) -> Result<InequalityReport> {
    let sv = s.value();
    let fine = refined_field(v, REFINE);
    let gv = fine.map_real(&map);
    let pairing = real_inner(&gv.abs_k_power(sv), &fine);
    let rhs = constant * m * frac_grad_sq(v, 0.5 * sv);
    // `pairing ≥ rhs` rephrased as `lhs ≤ rhs` for the report.
    Ok(InequalityReport::inequality(
        "coercivity",
        sv,
        rhs,
        pairing,
        constant * m,
        INEQUALITY_SLACK * pairing.abs().max(1.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmallnessRoute {
    /// `α = 0`: every coupled constant vanishes.
    Uncoupled,
    /// Satisfied with coupling; holds because `|α| ≤ α₀` (equivalently
    /// `‖u₀‖₂ ≤ E₀` for the reported frontiers).
    SmallCoupling,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub lhs: f64,
    /// `ln lhs`, finite even when `lhs` overflows (`-∞` when it vanishes).
    pub ln_lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub route: SmallnessRoute,
    /// Largest `|α|` satisfying the condition with everything else fixed.
    pub alpha_frontier: f64,
    /// Largest `‖u₀‖₂` (scaling `u₀`) satisfying the condition.
    pub energy_frontier: f64,
}

/// Norms of the mollified data that enter the constants.
#[derive(Debug, Clone, Copy)]
struct DataNorms {
    frac_u: f64,
    grad_u: f64,
    quartic: f64,
    u_sup: f64,
    u_l2: f64,
    v_l2: f64,
}

impl DataNorms {
    fn scaled(&self, lambda: f64) -> Self {
        let l2 = lambda * lambda;
        Self {
            frac_u: self.frac_u * l2,
            grad_u: self.grad_u * l2,
            quartic: self.quartic * l2 * l2,
            u_sup: self.u_sup * lambda,
            u_l2: self.u_l2 * lambda,
            v_l2: self.v_l2,
        }
    }
}

struct SmallnessInputs {
    s: f64,
    beta: f64,
    gprime: f64,
    eps: f64,
    a: f64,
    b: f64,
    big_t: f64,
    c1s: f64,
}

fn constants(alpha: f64, d: &DataNorms, k: &SmallnessInputs) -> (f64, f64, f64, f64) {
    let SmallnessInputs {
        s,
        beta,
        gprime,
        eps,
        a,
        b,
        big_t,
        c1s,
    } = *k;
    let al2 = alpha * alpha;
    let be2 = beta * beta;
    let q = 2.0 * s - 1.0;
    let s2 = s * s;
    let base = 1.0
        + d.frac_u
        + d.grad_u
        + 0.5 * d.quartic
        + d.u_sup * d.v_l2 * d.u_l2
        + al2 * big_t.exp() * d.v_l2 * d.v_l2;
    let c = 64.0 * base.powf(1.0 - 0.5 / s)
        + 32.0 * al2 * q / (s2 * PI) * gprime * gprime * d.u_l2.powf(2.0 - 1.0 / s) * d.v_l2 * d.v_l2 * (3.0 * big_t).exp()
        + 16.0 * al2 * eps.powf(b - 1.5 * a) * q * q / (PI * s2) * d.u_l2 * d.v_l2 * d.v_l2 * (2.0 * big_t).exp();
    let c1 = 64.0 * big_t;
    let c2 = 256.0 * al2 * be2 * big_t / (s2 * PI * PI) * d.u_l2.powf(6.0 - 2.0 / s);
    let c3 = 512.0 * al2 * be2 / (s2 * PI * PI) * gprime * gprime * d.u_l2.powf(4.0 - 2.0 / s) * (3.0 * big_t).exp()
        + 256.0 * c1s * al2 * be2 * eps.powf(b - 1.0 - 1.5 * a) * q / (PI * PI * s2)
            * d.u_l2.powf(3.0 - 1.0 / s)
            * (2.0 * big_t).exp()
        + 1024.0 * al2 * al2 * be2 * be2 * (2.0 * big_t).exp() / (PI * PI * s2) * d.u_l2.powf(4.0 - 2.0 / s) * big_t;
    (c, c1, c2, c3)
}

/// `ln` of `C (C₂+C₃)^{(2s-1)/2} e^{64T²} T^{(2s-1)/2}`.
fn ln_lhs(c: f64, c2: f64, c3: f64, s: f64, big_t: f64) -> f64 {
    let q = 0.5 * (2.0 * s - 1.0);
    if c2 + c3 == 0.0 || big_t == 0.0 {
        return f64::NEG_INFINITY;
    }
    c.ln() + q * (c2 + c3).ln() + 64.0 * big_t * big_t + q * big_t.ln()
}

/// Largest `x` in `[lo, hi]` (log-bisection) with `ok(x)`, assuming `ok` is
/// monotone (true below a threshold). Returns `hi` if `ok(hi)` and 0 if
/// `!ok(lo)`.
fn log_frontier(ok: impl Fn(f64) -> bool, lo: f64, hi: f64) -> f64 {
    if ok(hi) {
        return f64::INFINITY;
    }
    if !ok(lo) {
        return 0.0;
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if ok(m.exp()) {
            a = m;
        } else {
            b = m;
        }
    }
    a.exp()
}

/// Assembles the constants of the global bound and evaluates
/// `C (C₂+C₃)^{(2s-1)/2} exp(64T²) T^{(2s-1)/2} ≤ ((2s-1)/2)^{(2s-1)/2}`
/// on the mollified data, with `‖g'_ε‖_∞ = M + ε`.
pub fn smallness_condition(
    params: &SystemParams,
    u0: &Field,
    v0: &Field,
    run: &PerturbedRun,
) -> Result<SmallnessReport> {
    u0.same_grid(v0)?;
    params.s.require_above_half()?;
    let (u0, v0) = mollify_initial(u0, v0);
    let s = params.s.value();
    let data = DataNorms {
        frac_u: frac_grad_sq(&u0, s),
        grad_u: frac_grad_sq(&u0, 1.0),
        quartic: u0.lp_integral(4.0),
        u_sup: u0.sup_padded(REFINE),
        u_l2: u0.l2_norm(),
        v_l2: v0.l2_norm(),
    };
    let inputs = SmallnessInputs {
        s,
        beta: params.beta,
        gprime: params.g.bounds().1 + run.eps,
        eps: run.eps,
        a: run.a as f64,
        b: run.b as f64,
        big_t: run.t_final,
        c1s: cns_constant(params.s)?,
    };
    let q = 0.5 * (2.0 * s - 1.0);
    let rhs = q.powf(q);
    let ln_rhs = rhs.ln();
    let alpha = params.alpha.abs();
    let (c, c1, c2, c3) = constants(alpha, &data, &inputs);
    let ln_l = ln_lhs(c, c2, c3, s, inputs.big_t);
    let satisfied = ln_l <= ln_rhs;
    let holds = |alpha: f64, d: &DataNorms| {
        let (c, _, c2, c3) = constants(alpha, d, &inputs);
        ln_lhs(c, c2, c3, s, inputs.big_t) <= ln_rhs
    };
    let alpha_frontier = log_frontier(|a| holds(a, &data), 1e-150, 1e150);
    let energy_frontier = if data.u_l2 == 0.0 {
        f64::INFINITY
    } else {
        data.u_l2 * log_frontier(|l| holds(alpha, &data.scaled(l)), 1e-100, 1e100)
    };
    let route = if alpha == 0.0 {
        SmallnessRoute::Uncoupled
    } else if satisfied {
        SmallnessRoute::SmallCoupling
    } else {
        SmallnessRoute::Violated
    };
    Ok(SmallnessReport {
        c,
        c1,
        c2,
        c3,
        lhs: ln_l.exp(),
        ln_lhs: ln_l,
        rhs,
        satisfied,
        route,
        alpha_frontier,
        energy_frontier,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCell {
    pub alpha: f64,
    pub ln_lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// The analytic condition holds with strict inequality.
    pub strictly_inside: bool,
    pub blew_up: bool,
    pub failure: Option<String>,
}

/// One cell of the α-sweep: the analytic verdict next to the empirical one.
pub fn stability_cell(
    u0: &Field,
    v0: &Field,
    params: &SystemParams,
    run: &PerturbedRun,
) -> Result<StabilityCell> {
    let report = smallness_condition(params, u0, v0, run)?;
    let (blew_up, failure) = match solve_perturbed(u0, v0, params, run) {
        Ok(_) => (false, None),
        Err(e @ (Error::BlowUp { .. } | Error::NonContraction { .. } | Error::PicardMaxIter(_))) => {
            (true, Some(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    Ok(StabilityCell {
        alpha: params.alpha,
        ln_lhs: report.ln_lhs,
        rhs: report.rhs,
        satisfied: report.satisfied,
        strictly_inside: report.ln_lhs < report.rhs.ln(),
        blew_up,
        failure,
    })
}

pub fn stability_map(
    u0: &Field,
    v0: &Field,
    params: &SystemParams,
    run: &PerturbedRun,
    alphas: &[f64],
) -> Result<Vec<StabilityCell>> {
    alphas
        .iter()
        .map(|&alpha| stability_cell(u0, v0, &SystemParams { alpha, ..*params }, run))
        .collect()
}
