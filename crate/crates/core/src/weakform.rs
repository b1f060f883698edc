//! Weak formulations of the coupled system: compactly supported test
//! functions, the space-time residuals of both equations, and their
//! perturbed variants with the vanishing-viscosity terms.
//!
//! Spatial pairings are grid sums `∫ f conj(g) dx` against the same dealiased
//! nonlinear terms the solver uses, so the semi-discrete weak form holds
//! exactly and residuals measure time discretization plus the time
//! quadrature (composite Simpson on the trajectory samples).
//!
//! The short-wave form multiplies only the time-derivative and initial-data
//! pairings by `i`:
//!
//! ```text
//! i∫∫u ∂_tφ̄ + i∫u₀φ̄(0) + ∫∫(-Δ)^{s/2}u (-Δ)^{s/2}φ̄ - ε^a∫∫u Δφ̄ + ∫∫(αv + |u|²)u φ̄ = 0
//! ```
//!
//! which is what `i u_t - (-Δ)^s u + ε^a Δu = αvu + |u|²u` gives after
//! pairing with `φ̄` and integrating by parts.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{long_wave_forcing, short_wave_forcing, Trajectory};
use crate::spectral::{Field, Flavor, GridSpec};

/// Exponent `p` of the bump profile `(1 - r²)^p`.
pub const BUMP_POWER: i32 = 8;

/// Largest fraction of a test function's energy allowed in the top third of
/// the resolved wavenumbers.
pub const RESOLUTION_TOL: f64 = 1e-8;

const LIBRARY_SEED: u64 = 0x7e57_f00d;

pub const LIBRARY_SIZE: usize = 16;

fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - r * r).powi(BUMP_POWER)
    }
}

fn bump_derivative(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        -2.0 * BUMP_POWER as f64 * r * (1.0 - r * r).powi(BUMP_POWER - 1)
    }
}

/// `A b((t - t_c)/r_t) b((x - x_c)/r_x) e^{i(κx + θ)}` with `b(r) = (1 - r²)^8`;
/// the real flavor keeps `cos(κx + θ)` in place of the exponential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: usize,
    pub flavor: Flavor,
    pub amplitude: f64,
    pub t_center: f64,
    pub t_radius: f64,
    pub x_center: f64,
    pub x_radius: f64,
    pub wavenumber: f64,
    pub phase: f64,
}

/// Whether a test function meets the trajectory's time interval at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Participation {
    Active,
    /// Support disjoint from `[0, T]`; every pairing vanishes.
    Empty,
}

impl TestFunction {
    pub fn time_support(&self) -> (f64, f64) {
        (self.t_center - self.t_radius, self.t_center + self.t_radius)
    }

    pub fn space_support(&self) -> (f64, f64) {
        (self.x_center - self.x_radius, self.x_center + self.x_radius)
    }

    fn oscillation(&self, x: f64) -> Complex64 {
        let arg = self.wavenumber * x + self.phase;
        match self.flavor {
            Flavor::ComplexShortwave => Complex64::from_polar(1.0, arg),
            Flavor::RealLongwave => Complex64::new(arg.cos(), 0.0),
        }
    }

    fn space_factor(&self, x: f64) -> Complex64 {
        bump((x - self.x_center) / self.x_radius) * self.oscillation(x)
    }

    pub fn value(&self, t: f64, x: f64) -> Complex64 {
        self.amplitude * bump((t - self.t_center) / self.t_radius) * self.space_factor(x)
    }

    pub fn time_derivative(&self, t: f64, x: f64) -> Complex64 {
        self.amplitude * bump_derivative((t - self.t_center) / self.t_radius) / self.t_radius
            * self.space_factor(x)
    }

    /// Samples `φ(t, ·)` on the collocation grid.
    pub fn sample(&self, grid: GridSpec, t: f64) -> Field {
        let a = self.amplitude * bump((t - self.t_center) / self.t_radius);
        self.sample_scaled(grid, a)
    }

    /// Samples `∂_tφ(t, ·)` on the collocation grid.
    pub fn sample_time_derivative(&self, grid: GridSpec, t: f64) -> Field {
        let a = self.amplitude * bump_derivative((t - self.t_center) / self.t_radius) / self.t_radius;
        self.sample_scaled(grid, a)
    }

    fn sample_scaled(&self, grid: GridSpec, a: f64) -> Field {
        let f = Field::from_fn_complex(grid, |x| a * self.space_factor(x));
        f.with_flavor(self.flavor)
    }

    /// Energy fraction of the spatial profile in `|k| > 2k_max/3`.
    pub fn spectral_tail(&self, grid: GridSpec) -> f64 {
        let spec = self.sample_scaled(grid, 1.0).spectrum();
        let cut = 2.0 * grid.k_max() / 3.0;
        let mut tail = 0.0;
        let mut total = 0.0;
        for (m, c) in spec.iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            if grid.wavenumber(m).abs() > cut {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    /// Checks the support against `(-∞, T) × [-L, L)` and the spatial
    /// resolution, and reports whether the pairing is empty.
    pub fn participation(&self, grid: GridSpec, t_final: f64) -> Result<Participation> {
        if !(self.t_radius > 0.0 && self.x_radius > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "test function {} needs positive radii and a finite amplitude",
                self.id
            )));
        }
        let (t_lo, t_hi) = self.time_support();
        if t_lo >= t_final || t_hi <= 0.0 {
            return Ok(Participation::Empty);
        }
        let slack = 1e-12 * t_final.max(1.0);
        if t_hi > t_final + slack {
            return Err(Error::SupportLeakage("time horizon"));
        }
        let (x_lo, x_hi) = self.space_support();
        let l = grid.half_length();
        if x_lo < -l || x_hi > l {
            return Err(Error::SupportLeakage("spatial window"));
        }
        let tail = self.spectral_tail(grid);
        if tail > RESOLUTION_TOL {
            return Err(Error::InvalidArgument(format!(
                "test function {} is under-resolved: tail energy fraction {tail:e}",
                self.id
            )));
        }
        Ok(Participation::Active)
    }
}

/// The fixed library of test functions of one flavor for a grid and horizon.
/// Supports reach from before `t = 0` (so initial data enter) up to at most
/// `T`, with spatial radii between 15% and 40% of the half-length.
pub fn default_library(grid: GridSpec, t_final: f64, flavor: Flavor) -> Vec<TestFunction> {
    let l = grid.half_length();
    let min_radius = (16.0 * grid.spacing()).min(0.4 * l);
    (0..LIBRARY_SIZE)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(LIBRARY_SEED ^ id as u64);
            let t_radius = t_final * rng.gen_range(0.2..0.45);
            // Early members straddle t = 0, the rest sit inside (0, T).
            let t_center = if id % 4 == 0 {
                rng.gen_range(0.0..0.5 * t_radius)
            } else {
                rng.gen_range(t_radius..(t_final - t_radius).max(t_radius))
            };
            let x_radius = (l * rng.gen_range(0.15..0.4)).max(min_radius);
            let x_center = rng.gen_range(-1.0..1.0) * 0.95 * (l - x_radius);
            let wavenumber = if id % 2 == 0 {
                0.0
            } else {
                rng.gen_range(-2.0..2.0)
            };
            TestFunction {
                id,
                flavor,
                amplitude: rng.gen_range(0.5..1.5),
                t_center,
                t_radius,
                x_center,
                x_radius,
                wavenumber,
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect()
}

/// Composite Simpson weights on uniformly spaced samples; an odd interval
/// count closes with the 3/8 rule on the last three intervals.
pub fn simpson_weights(times: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
    if !(h > 0.0) || !uniform {
        return Err(Error::InvalidArgument(
            "time samples must be increasing and uniformly spaced".into(),
        ));
    }
    let intervals = n - 1;
    let mut w = vec![0.0; n];
    let simpson_end = if intervals.is_multiple_of(2) { intervals } else { intervals - 3 };
    for i in (0..simpson_end).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if simpson_end < intervals {
        let i = simpson_end;
        for (j, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[i + j] += 3.0 * h / 8.0 * c;
        }
    }
    Ok(w)
}

fn check_flavor(phi: &TestFunction, want: Flavor) -> Result<()> {
    if phi.flavor == want {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "test function {} has flavor {:?}, expected {want:?}",
            phi.id, phi.flavor
        )))
    }
}

fn pair(f: &Field, g: &Field) -> Complex64 {
    f.inner(g).expect("same grid")
}

/// Residual of the short-wave weak form against `φ`. With `perturbed` the
/// dispersive regularization `-ε^a∫∫u Δφ̄` is included.
pub fn weak_residual_u(traj: &Trajectory, phi: &TestFunction, perturbed: bool) -> Result<Complex64> {
    check_flavor(phi, Flavor::ComplexShortwave)?;
    let grid = *traj.u[0].grid();
    if phi.participation(grid, traj.run.t_final)? == Participation::Empty {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let w = simpson_weights(&traj.times)?;
    let s = traj.params.s.value();
    let visc = if perturbed {
        traj.run.eps.powi(traj.run.a as i32)
    } else {
        0.0
    };
    let i = Complex64::i();
    let (t_lo, t_hi) = phi.time_support();
    let mut total = i * pair(&traj.u[0], &phi.sample(grid, 0.0));
    for (n, &t) in traj.times.iter().enumerate() {
        if t <= t_lo || t >= t_hi {
            continue;
        }
        let (u, v) = (&traj.u[n], &traj.v[n]);
        let p = phi.sample(grid, t);
        let pt = phi.sample_time_derivative(grid, t);
        let lin = p
            .abs_k_power(2.0 * s)
            .sub(&p.laplacian().scale_real(visc))
            .expect("same grid");
        let nl = short_wave_forcing(u, v, traj.params.alpha);
        total += w[n] * (i * pair(u, &pt) + pair(u, &lin) + pair(&nl, &p));
    }
    Ok(total)
}

/// Residual of the long-wave weak form against `ψ`. With `perturbed` the
/// flux is `g_ε` and the viscous pairing `ε^b∫∫v Δψ` is included.
pub fn weak_residual_v(traj: &Trajectory, psi: &TestFunction, perturbed: bool) -> Result<f64> {
    check_flavor(psi, Flavor::RealLongwave)?;
    let grid = *traj.v[0].grid();
    if psi.participation(grid, traj.run.t_final)? == Participation::Empty {
        return Ok(0.0);
    }
    let w = simpson_weights(&traj.times)?;
    let (eps, visc) = if perturbed {
        (traj.run.eps, traj.run.eps.powi(traj.run.b as i32))
    } else {
        (0.0, 0.0)
    };
    let (t_lo, t_hi) = psi.time_support();
    let mut total = pair(&traj.v[0], &psi.sample(grid, 0.0)).re;
    for (n, &t) in traj.times.iter().enumerate() {
        if t <= t_lo || t >= t_hi {
            continue;
        }
        let (u, v) = (&traj.u[n], &traj.v[n]);
        let p = psi.sample(grid, t);
        let pt = psi.sample_time_derivative(grid, t);
        let forcing = long_wave_forcing(u, v, &traj.params, eps);
        total += w[n] * (pair(v, &pt).re + visc * pair(v, &p.laplacian()).re + pair(&forcing, &p).re);
    }
    Ok(total)
}

/// One row of a residual table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub test_id: usize,
    pub flavor: Flavor,
    pub eps: f64,
    pub perturbed: bool,
    /// `|residual|`.
    pub residual: f64,
    /// Time step of the trajectory, the refinement parameter.
    pub dt: f64,
}

/// Residuals of both equations against the default libraries.
pub fn residual_table(traj: &Trajectory, perturbed: bool) -> Result<Vec<ResidualRow>> {
    let grid = *traj.u[0].grid();
    let t_final = traj.run.t_final;
    let mut rows = Vec::with_capacity(2 * LIBRARY_SIZE);
    for phi in default_library(grid, t_final, Flavor::ComplexShortwave) {
        rows.push(ResidualRow {
            test_id: phi.id,
            flavor: phi.flavor,
            eps: traj.run.eps,
            perturbed,
            residual: weak_residual_u(traj, &phi, perturbed)?.norm(),
            dt: traj.run.dt,
        });
    }
    for psi in default_library(grid, t_final, Flavor::RealLongwave) {
        rows.push(ResidualRow {
            test_id: psi.id,
            flavor: psi.flavor,
            eps: traj.run.eps,
            perturbed,
            residual: weak_residual_v(traj, &psi, perturbed)?.abs(),
            dt: traj.run.dt,
        });
    }
    Ok(rows)
}

/// Largest residual magnitude per flavor `(short wave, long wave)`.
pub fn max_residuals(rows: &[ResidualRow]) -> (f64, f64) {
    rows.iter().fold((0.0, 0.0), |(a, b), r| match r.flavor {
        Flavor::ComplexShortwave => (a.max(r.residual), b),
        Flavor::RealLongwave => (a, b.max(r.residual)),
    })
}
