//! The `verify` verb: seeded property ensembles per module.

use std::f64::consts::PI;

use anyhow::{bail, Result};
use clap::ValueEnum;
use fracbenney::entropy::{entropy_flux, line_remainder_identity, remainder_cases, remainder_rk, EntropySpec};
use fracbenney::gronwall::{gronwall_bound, integrate_equality_case, Coefficient, GronwallSpec};
use fracbenney::propagators::{check_heat_smoothing, heat_semigroup_apply, schrodinger_group_apply, PropagatorSpec};
use fracbenney::singular::{cns_constant, frac_laplacian_singular, QuadratureSpec};
use fracbenney::sobolev::{
    check_chain_rule, check_equivalence, check_linf_interp, check_product_bound, random_band_limited,
};
use fracbenney::solver::{solve_perturbed, NonlinearityG, PerturbedRun, StepStats, SystemParams, Trajectory};
use fracbenney::spectral::{frac_laplacian_spectral, riesz_inverse, Field, Flavor, FracOrder, GridSpec};
use fracbenney::weakform::{default_library, weak_residual_u, weak_residual_v, Participation};
use fracbenney::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::artifacts::Check;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Operators,
    Inequalities,
    Propagators,
    Gronwall,
    Entropy,
    Weakform,
    All,
}

impl Suite {
    pub const MODULES: [Suite; 6] = [
        Suite::Operators,
        Suite::Inequalities,
        Suite::Propagators,
        Suite::Gronwall,
        Suite::Entropy,
        Suite::Weakform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Operators => "operators",
            Suite::Inequalities => "inequalities",
            Suite::Propagators => "propagators",
            Suite::Gronwall => "gronwall",
            Suite::Entropy => "entropy",
            Suite::Weakform => "weakform",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.checks.iter().any(Check::failed)
    }
}

/// Runs one suite, or every module suite for [`Suite::All`].
pub fn verify(suite: Suite, seed: u64) -> Result<Vec<SuiteReport>> {
    let suites: Vec<Suite> = match suite {
        Suite::All => Suite::MODULES.to_vec(),
        s => vec![s],
    };
    suites
        .into_iter()
        .map(|s| {
            let checks = match s {
                Suite::Operators => operators(seed)?,
                Suite::Inequalities => inequalities(seed)?,
                Suite::Propagators => propagators(seed)?,
                Suite::Gronwall => gronwall()?,
                Suite::Entropy => entropy(seed)?,
                Suite::Weakform => weakform()?,
                Suite::All => bail!("unexpected nested suite"),
            };
            Ok(SuiteReport { suite: s, checks })
        })
        .collect()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn operators(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 1);
    let grid = GridSpec::new(20.0, 512)?;
    let c = rng.gen_range(-2.0..2.0);
    let f = Field::from_fn_real(grid, |x| (-(x - c) * (x - c)).exp());
    let mut cross: f64 = 0.0;
    for s in [0.3, 0.55, 0.75, 0.9] {
        let s = FracOrder::new(s)?;
        let singular = frac_laplacian_singular(&f, s, QuadratureSpec::default())?;
        cross = cross.max(singular.field.max_abs_diff(&frac_laplacian_spectral(&f, s))?);
    }

    let small = GridSpec::new(12.0, 256)?;
    let mut gap: f64 = 0.0;
    for _ in 0..5 {
        let (c, w) = (rng.gen_range(-3.0..3.0), rng.gen_range(0.6..2.0));
        let f = Field::from_fn_real(small, |x| (-((x - c) / w).powi(2)).exp());
        let r = check_equivalence(&f, FracOrder::new(rng.gen_range(0.2..0.95))?, QuadratureSpec::default())?;
        gap = gap.max((r.lhs - r.rhs).abs() / r.rhs);
    }

    let mut riesz: f64 = 0.0;
    for i in 0..20u64 {
        let f = random_band_limited(small, Flavor::ComplexShortwave, seed.wrapping_mul(1000).wrapping_add(i));
        let s = FracOrder::new(0.2 + 0.035 * i as f64)?;
        let back = frac_laplacian_spectral(&riesz_inverse(&f, s)?, s);
        riesz = riesz.max(back.max_abs_diff(&f)? / f.sup_on_grid());
    }
    let half = (cns_constant(FracOrder::new(0.5)?)? - 1.0 / PI).abs();
    Ok(vec![
        Check::bound("spectral_vs_singular", cross, 1e-5),
        Check::bound("seminorm_equivalence_relative_gap", gap, 1e-2),
        Check::bound("riesz_inverse_round_trip", riesz, 1e-10),
        Check::bound("normalization_at_one_half", half, 1e-8),
    ])
}

fn inequalities(seed: u64) -> Result<Vec<Check>> {
    let grid = GridSpec::new(10.0, 64)?;
    let mut checks = vec![];
    for s in [0.6, 0.75, 0.9] {
        let order = FracOrder::new(s)?;
        let mut violations = [0usize; 3];
        let mut worst = [f64::NEG_INFINITY; 3];
        for i in 0..200u64 {
            let base = seed.wrapping_mul(1_000_003).wrapping_add(i);
            let f = random_band_limited(grid, Flavor::ComplexShortwave, base);
            let r = random_band_limited(grid, Flavor::RealLongwave, base.wrapping_add(1 << 32));
            let reports = [
                check_linf_interp(&f, order)?,
                check_product_bound(&f, order)?,
                check_chain_rule(f64::tanh, 1.0, &r, order)?,
            ];
            for (k, rep) in reports.iter().enumerate() {
                worst[k] = worst[k].max(rep.lhs / rep.rhs);
                if !rep.passed() {
                    violations[k] += 1;
                }
            }
        }
        for (k, name) in ["linf_interpolation", "product_bound", "chain_rule"].iter().enumerate() {
            checks.push(Check::flag(
                &format!("{name}_s{s}"),
                violations[k] == 0,
                format!("{} violations in 200 fields, largest lhs/rhs {:.6}", violations[k], worst[k]),
            ));
        }
    }
    Ok(checks)
}

fn propagators(seed: u64) -> Result<Vec<Check>> {
    let grid = GridSpec::new(10.0, 128)?;
    let p = PropagatorSpec::with_default_exponents(0.1, FracOrder::new(0.75)?)?;
    let mut rng = rng_for(seed, 3);
    let (mut iso, mut group, mut contraction, mut smoothing) = (0.0f64, 0.0f64, 0usize, 0usize);
    for i in 0..20u64 {
        let base = seed.wrapping_mul(1000).wrapping_add(i);
        let u = random_band_limited(grid, Flavor::ComplexShortwave, base);
        let (t1, t2) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let n = u.l2_norm();
        iso = iso.max((schrodinger_group_apply(&u, t1, &p).l2_norm() - n).abs() / n);
        let composed = schrodinger_group_apply(&schrodinger_group_apply(&u, t2, &p), t1, &p);
        group = group.max(composed.max_abs_diff(&schrodinger_group_apply(&u, t1 + t2, &p))? / u.sup_on_grid());
        let v = random_band_limited(grid, Flavor::RealLongwave, base.wrapping_add(1 << 32));
        for e in -6..=3 {
            let t = 10f64.powi(e);
            if heat_semigroup_apply(&v, t, &p)?.l2_norm() > v.l2_norm() * (1.0 + 1e-12) {
                contraction += 1;
            }
            if !check_heat_smoothing(&v, t, &p)?.passed() {
                smoothing += 1;
            }
        }
    }
    Ok(vec![
        Check::bound("schrodinger_isometry", iso, 1e-12),
        Check::bound("schrodinger_group_law", group, 1e-12),
        Check::flag("heat_contraction", contraction == 0, format!("{contraction} violations")),
        Check::flag("heat_smoothing", smoothing == 0, format!("{smoothing} violations")),
    ])
}

fn constant(c: f64, sigma: f64, a: f64, b: f64, horizon: f64) -> Result<GronwallSpec> {
    Ok(GronwallSpec::new(
        c,
        sigma,
        Coefficient::Constant(a),
        Coefficient::Constant(b),
        0.0,
        horizon,
    )?)
}

/// The three regimes σ < 1, σ = 1 and σ > 1.
fn gronwall() -> Result<Vec<Check>> {
    let sub = constant(1.0, 0.5, 0.3, 0.4, 2.0)?;
    let mut sub_gap: f64 = 0.0;
    for i in 1..=20 {
        let t = 0.1 * i as f64;
        let b = gronwall_bound(&sub, t)?;
        sub_gap = sub_gap.max((b - integrate_equality_case(&sub, t, 4000)).abs() / b);
    }
    let lin = constant(1.7, 1.0, 0.3, 0.45, 2.0)?;
    let mut lin_gap: f64 = 0.0;
    for i in 0..=20 {
        let t = 0.1 * i as f64;
        let e = 1.7 * (0.75 * t).exp();
        lin_gap = lin_gap.max((gronwall_bound(&lin, t)? - e).abs() / e);
    }
    let sup = constant(0.5, 2.0, 0.0, 1.0, 0.9)?;
    let mut sup_gap: f64 = 0.0;
    for i in 0..=90 {
        let t = 0.01 * i as f64;
        sup_gap = sup_gap.max((gronwall_bound(&sup, t)? - 1.0 / (2.0 - t)).abs());
    }
    let bad = constant(0.5, 2.0, 0.0, 1.0, 2.5)?;
    let rejected = matches!(gronwall_bound(&bad, 1.0), Err(Error::InadmissibleHorizon { .. }));
    Ok(vec![
        Check::bound("sublinear_vs_equality_ode", sub_gap, 1e-8),
        Check::bound("linear_vs_exponential", lin_gap, 1e-10),
        Check::bound("superlinear_vs_closed_form", sup_gap, 1e-6),
        Check::flag("superlinear_horizon_rejected", rejected, "horizon 2.5 with blow-up at t = 2"),
    ])
}

fn entropy(seed: u64) -> Result<Vec<Check>> {
    let mut defect: f64 = 0.0;
    let mut negative = 0usize;
    for c in remainder_cases(20, seed) {
        let r = line_remainder_identity(&c.profile, &c.g, c.k, FracOrder::new(c.s)?, c.x)?;
        defect = defect.max(r.defect);
        negative += usize::from(r.remainder < 0.0);
    }

    let g = NonlinearityG::TanhBlend { m: 0.2, big_m: 1.0 };
    let eta = EntropySpec::bump(0.3, 0.8)?;
    let h = 1e-5;
    let mut flux: f64 = 0.0;
    for i in 0..=40 {
        let v = -2.0 + 0.1 * i as f64;
        let fd = (entropy_flux(&eta, &g, v + h) - entropy_flux(&eta, &g, v - h)) / (2.0 * h);
        flux = flux.max((fd - eta.derivative(v) * g.derivative(v)).abs());
    }

    let grid = GridSpec::new(8.0, 64)?;
    let s = FracOrder::new(0.75)?;
    let mut torus_negative = 0usize;
    let mut evaluated = 0usize;
    for i in 0..10u64 {
        let v = random_band_limited(grid, Flavor::RealLongwave, seed.wrapping_mul(100).wrapping_add(i));
        for j in (0..64).step_by(8) {
            match remainder_rk(&v, &g, 0.05, s, j) {
                Ok(r) => {
                    evaluated += 1;
                    torus_negative += usize::from(r < 0.0);
                }
                Err(Error::UndefinedSign(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(vec![
        Check::bound("remainder_identity_defect", defect, 1e-6),
        Check::flag("line_remainder_nonnegative", negative == 0, format!("{negative} negative of 20")),
        Check::bound("flux_derivative_consistency", flux, 1e-6),
        Check::flag(
            "torus_remainder_nonnegative",
            torus_negative == 0,
            format!("{torus_negative} negative of {evaluated}"),
        ),
    ])
}

/// Exact single-mode solution of the uncoupled regularized system.
fn single_mode_trajectory() -> Result<Trajectory> {
    let grid = GridSpec::new(8.0, 64)?;
    let params = SystemParams::new(0.0, 0.0, 0.7, NonlinearityG::Zero)?;
    let n = 1601;
    let mut run = PerturbedRun::new(0.5, 1.0, 1.0 / (n - 1) as f64)?;
    run.a = 2;
    run.b = 3;
    let k = 3.0 * PI / grid.half_length();
    let s = params.s.value();
    let (au, av) = (0.8, 0.6);
    let omega = k.powf(2.0 * s) + run.eps.powi(run.a as i32) * k * k + au * au;
    let lambda = run.eps.powi(run.b as i32) * k * k + run.eps * k.powf(s);
    let times: Vec<f64> = (0..n).map(|i| i as f64 * run.dt).collect();
    let u = times
        .iter()
        .map(|&t| Field::from_fn_complex(grid, |x| Complex64::from_polar(au, k * x - omega * t)).with_flavor(Flavor::ComplexShortwave))
        .collect();
    let v = times
        .iter()
        .map(|&t| Field::from_fn_real(grid, |x| av * (k * x).cos() * (-lambda * t).exp()))
        .collect();
    Ok(Trajectory {
        params,
        run,
        steps: vec![StepStats::default(); n],
        times,
        u,
        v,
        substeps_per_step: 1,
    })
}

fn max_residuals(traj: &Trajectory) -> Result<(f64, f64)> {
    let grid = *traj.u[0].grid();
    let t = traj.run.t_final;
    let mut ru: f64 = 0.0;
    for phi in default_library(grid, t, Flavor::ComplexShortwave) {
        ru = ru.max(weak_residual_u(traj, &phi, true)?.norm());
    }
    let mut rv: f64 = 0.0;
    for psi in default_library(grid, t, Flavor::RealLongwave) {
        rv = rv.max(weak_residual_v(traj, &psi, true)?.abs());
    }
    Ok((ru, rv))
}

fn weakform() -> Result<Vec<Check>> {
    let (eu, ev) = max_residuals(&single_mode_trajectory()?)?;

    let grid = GridSpec::new(8.0, 64)?;
    let u0 = Field::from_fn_complex(grid, |x| Complex64::new(0.5 * (-x * x / 4.0).exp(), 0.0)).with_flavor(Flavor::ComplexShortwave);
    let v0 = Field::from_fn_real(grid, |x| 0.5 * (-x * x / 4.0).exp());
    let params = SystemParams::new(0.05, 0.2, 0.75, NonlinearityG::TanhBlend { m: 0.0, big_m: 1.0 })?;
    let mut res = vec![];
    for dt in [0.004, 0.002] {
        let mut run = PerturbedRun::new(0.2, 0.12, dt)?;
        run.picard_tol = 1e-13;
        res.push(max_residuals(&solve_perturbed(&u0, &v0, &params, &run)?)?);
    }
    let order_u = (res[0].0 / res[1].0).log2();
    let order_v = (res[0].1 / res[1].1).log2();

    let canonical = GridSpec::new(16.0, 512)?;
    let mut inactive = 0usize;
    for flavor in [Flavor::ComplexShortwave, Flavor::RealLongwave] {
        for f in default_library(canonical, 1.0, flavor) {
            if f.participation(canonical, 1.0)? != Participation::Active {
                inactive += 1;
            }
        }
    }
    Ok(vec![
        Check::bound("exact_solution_residual_u", eu, 1e-8),
        Check::bound("exact_solution_residual_v", ev, 1e-8),
        Check::flag("residual_order_u", order_u >= 1.8, format!("measured order {order_u:.3}")),
        Check::flag("residual_order_v", order_v >= 1.8, format!("measured order {order_v:.3}")),
        Check::flag("library_admissible", inactive == 0, format!("{inactive} inactive test functions")),
    ])
}
