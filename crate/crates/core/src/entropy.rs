//! Entropy pairs for the long-wave equation, the nonnegative remainder that
//! relates `(-Δ)^s|g(v) - g(k)|` to `sgn(v - k)(-Δ)^s g(v)`, and the
//! regularized entropy balance evaluated along trajectories.
//!
//! A smooth entropy is described by its second derivative `η''` (compactly
//! supported, nonnegative) and the slope `c₀` of its affine part:
//!
//! ```text
//! η(v)  = ½∫η''(ξ)|v - ξ| dξ + c₀ v
//! η'(v) = ½∫η''(ξ) sgn(v - ξ) dξ + c₀
//! q(v)  = ½∫η''(ξ)|g(v) - g(ξ)| dξ + c₀ g(v)      (q' = η' g')
//! ```
//!
//! Kružkov entropies `|v - k|` (`η'' = 2δ_k`) are an exact special case.
//!
//! The remainder on the torus integrates over level sets located by linear
//! interpolation of the band-limited representative between refined
//! collocation points; the integrand is clipped to its nonnegative part, so
//! small errors in the located endpoints only touch values that vanish
//! there.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, image_kernel, integrate, integrate_pieces, AdaptiveOptions};
use crate::singular::cns_constant;
use crate::solver::{NonlinearityG, Trajectory};
use crate::spectral::{Field, FracOrder};
use crate::weakform::{simpson_weights, Participation, TestFunction};

/// `|v(x) - k|` at or below this (times `1 + |k|`) leaves the sign undefined.
pub const SIGN_TOL: f64 = 1e-12;

/// Refinement factor used to locate level sets on the torus.
pub const LEVEL_REFINE: usize = 8;

const GL_POINTS: usize = 32;

fn quad_opts() -> AdaptiveOptions {
    AdaptiveOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_intervals: 20_000,
    }
}

fn gl_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_POINTS))
}

/// Fixed Gauss–Legendre rule on `[a, b]`; empty or reversed ranges give 0.
fn gl_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let (x, w) = gl_rule();
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * x.iter().zip(w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>()
}

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum EntropySpec {
    /// `η = |v - k|`.
    Kruzkov { k: f64 },
    /// Convex entropy linear at infinity, given by `η''` and `c₀`.
    Smooth {
        second: ScalarMap,
        support: (f64, f64),
        slope_offset: f64,
    },
}

impl fmt::Debug for EntropySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Kruzkov { k } => f.debug_struct("Kruzkov").field("k", k).finish(),
            Self::Smooth {
                support,
                slope_offset,
                ..
            } => f
                .debug_struct("Smooth")
                .field("support", support)
                .field("slope_offset", slope_offset)
                .finish_non_exhaustive(),
        }
    }
}

impl EntropySpec {
    pub fn kruzkov(k: f64) -> Self {
        Self::Kruzkov { k }
    }

    /// Validates `η''` on 513 samples of its support: finite and nonnegative.
    pub fn smooth(
        second: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
        slope_offset: f64,
    ) -> Result<Self> {
        let (lo, hi) = support;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && slope_offset.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "entropy support {support:?} and slope {slope_offset} must be finite with lo ≤ hi"
            )));
        }
        for i in 0..=512 {
            let xi = lo + (hi - lo) * i as f64 / 512.0;
            let d2 = second(xi);
            if !(d2.is_finite() && d2 >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "η''({xi}) = {d2} is not a finite nonnegative value"
                )));
            }
        }
        Ok(Self::Smooth {
            second: Arc::new(second),
            support,
            slope_offset,
        })
    }

    /// `η'' = (1 - r²)⁴/w` with `r = (ξ - c)/w`, odd affine part.
    pub fn bump(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidArgument(format!("bump width {width} must be positive")));
        }
        Self::smooth(
            move |xi| {
                let r = (xi - center) / width;
                if r.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - r * r).powi(4) / width
                }
            },
            (center - width, center + width),
            0.0,
        )
    }

    /// `η = ½(v - c)²` on `|v - c| ≤ cap`, continued linearly.
    pub fn quadratic_capped(center: f64, cap: f64) -> Result<Self> {
        if !(cap > 0.0) {
            return Err(Error::InvalidArgument(format!("cap {cap} must be positive")));
        }
        Self::smooth(
            move |xi| if (xi - center).abs() <= cap { 1.0 } else { 0.0 },
            (center - cap, center + cap),
            0.0,
        )
    }

    /// `η(v) = slope · v`.
    pub fn linear(slope: f64) -> Self {
        Self::Smooth {
            second: Arc::new(|_| 0.0),
            support: (0.0, 0.0),
            slope_offset: slope,
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self, Self::Smooth { .. })
    }

    pub fn value(&self, v: f64) -> f64 {
        match self {
            Self::Kruzkov { k } => (v - k).abs(),
            Self::Smooth {
                second,
                support,
                slope_offset,
            } => reconstruct_entropy(second.as_ref(), *support, v) + slope_offset * v,
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        match self {
            Self::Kruzkov { k } => {
                if v > *k {
                    1.0
                } else if v < *k {
                    -1.0
                } else {
                    0.0
                }
            }
            Self::Smooth {
                second,
                support,
                slope_offset,
            } => {
                let (lo, hi) = *support;
                let m = v.clamp(lo, hi);
                0.5 * (gl_integrate(|xi| second(xi), lo, m) - gl_integrate(|xi| second(xi), m, hi))
                    + slope_offset
            }
        }
    }

    /// `η''(v)`; for a Kružkov entropy only the regular part, which is 0.
    pub fn second_derivative(&self, v: f64) -> f64 {
        match self {
            Self::Kruzkov { .. } => 0.0,
            Self::Smooth { second, support, .. } => {
                if v < support.0 || v > support.1 {
                    0.0
                } else {
                    second(v)
                }
            }
        }
    }
}

/// `½∫η''(ξ)|v - ξ| dξ` over the support of `η''`.
pub fn reconstruct_entropy(second: &dyn Fn(f64) -> f64, support: (f64, f64), v: f64) -> f64 {
    let (lo, hi) = support;
    let m = v.clamp(lo, hi);
    0.5 * (gl_integrate(|xi| second(xi) * (v - xi), lo, m)
        + gl_integrate(|xi| second(xi) * (xi - v), m, hi))
}

fn flux_with(eta: &EntropySpec, g: impl Fn(f64) -> f64, v: f64) -> f64 {
    match eta {
        EntropySpec::Kruzkov { k } => (g(v) - g(*k)).abs(),
        EntropySpec::Smooth {
            second,
            support,
            slope_offset,
        } => {
            let gv = g(v);
            let (lo, hi) = *support;
            let m = v.clamp(lo, hi);
            // g is nondecreasing, so g(v) - g(ξ) has the sign of v - ξ.
            0.5 * (gl_integrate(|xi| second(xi) * (gv - g(xi)), lo, m)
                + gl_integrate(|xi| second(xi) * (g(xi) - gv), m, hi))
                + slope_offset * gv
        }
    }
}

/// Entropy flux `q` with `q' = η'g'`, in the representation
/// `½∫η''(ξ)|g(v) - g(ξ)| dξ + c₀ g(v)`.
pub fn entropy_flux(eta: &EntropySpec, g: &NonlinearityG, v: f64) -> f64 {
    flux_with(eta, |x| g.apply(x), v)
}

/// Evaluates the trigonometric interpolant of a real field off the grid.
struct Interpolant {
    x0: f64,
    k1: f64,
    positive: Vec<Complex64>,
    negative: Vec<Complex64>,
    nyquist: Complex64,
}

impl Interpolant {
    fn new(f: &Field) -> Self {
        let grid = f.grid();
        let n = grid.n_points();
        let spec = f.spectrum();
        Self {
            x0: grid.x(0),
            k1: PI / grid.half_length(),
            positive: spec[..n / 2].to_vec(),
            negative: (0..n / 2).map(|m| if m == 0 { Complex64::new(0.0, 0.0) } else { spec[n - m] }).collect(),
            nyquist: spec[n / 2],
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let phase = self.k1 * (x - self.x0);
        let z = Complex64::from_polar(1.0, phase);
        let mut zp = Complex64::new(1.0, 0.0);
        let mut sum = self.positive[0];
        for m in 1..self.positive.len() {
            zp *= z;
            sum += self.positive[m] * zp + self.negative[m] * zp.conj();
        }
        sum += self.nyquist * (phase * self.positive.len() as f64).cos();
        sum.re
    }
}

/// `Σ_m |h + Pm|^{-p}` for `h` reduced to `(-P/2, P/2]`.
fn periodic_kernel(p: f64, period: f64, h: f64) -> f64 {
    let mut hw = h.rem_euclid(period);
    if hw > 0.5 * period {
        hw -= period;
    }
    if hw == 0.0 {
        return f64::INFINITY;
    }
    hw.abs().powf(-p) + image_kernel(p, period, hw)
}

fn sign_at(vx: f64, k: f64, x: f64) -> Result<f64> {
    if (vx - k).abs() <= SIGN_TOL * (1.0 + k.abs()) {
        Err(Error::UndefinedSign(x))
    } else {
        Ok((vx - k).signum())
    }
}

/// Intervals of offsets `h ∈ (0, 2L)` from grid point `j` on which `v` lies
/// on the other side of `k`, each widened by one refined cell.
fn opposite_runs(v: &Field, k: f64, sigma: f64, j: usize) -> Vec<(f64, f64)> {
    let grid = v.grid();
    let fine: Vec<f64> = v.refine(LEVEL_REFINE).iter().map(|c| c.re).collect();
    let nf = fine.len();
    let dxf = grid.spacing() / LEVEL_REFINE as f64;
    let period = grid.period();
    let start = j * LEVEL_REFINE;
    let opposite = |i: usize| sigma * (fine[i % nf] - k) < 0.0;
    let crossing = |o: usize| {
        let (a, b) = (fine[(start + o - 1) % nf], fine[(start + o) % nf]);
        let t = if b != a { ((k - a) / (b - a)).clamp(0.0, 1.0) } else { 0.5 };
        (o as f64 - 1.0 + t) * dxf
    };
    let mut runs = Vec::new();
    let mut open: Option<f64> = None;
    for o in 1..=nf {
        let inside = o < nf && opposite(start + o);
        match (open, inside) {
            (None, true) => open = Some(crossing(o)),
            (Some(a), false) => {
                let b = crossing(o);
                runs.push(((a - dxf).max(0.5 * a), (b + dxf).min(period - 0.5 * (period - b))));
                open = None;
            }
            _ => {}
        }
    }
    runs
}

/// `R_k` at grid point `j`: `2C_{1,s}` times the integral of `|g(v(y)) - g(k)|
/// |x - y|^{-1-2s}` over the level set on the other side of `k` from `v(x)`,
/// with the kernel periodized over the window.
pub fn remainder_rk(v: &Field, g: &NonlinearityG, k: f64, s: FracOrder, j: usize) -> Result<f64> {
    remainder_with(v, &Interpolant::new(v), |x| g.apply(x), k, s, j)
}

fn remainder_with(
    v: &Field,
    interp: &Interpolant,
    g: impl Fn(f64) -> f64,
    k: f64,
    s: FracOrder,
    j: usize,
) -> Result<f64> {
    let grid = v.grid();
    let x = grid.x(j);
    let sigma = sign_at(v.samples()[j].re, k, x)?;
    let p = 1.0 + 2.0 * s.value();
    let period = grid.period();
    let gk = g(k);
    let mut total = 0.0;
    for (a, b) in opposite_runs(v, k, sigma, j) {
        let piece = integrate(
            |h| {
                let w = sigma * (gk - g(interp.eval(x + h)));
                if w > 0.0 {
                    w * periodic_kernel(p, period, h)
                } else {
                    0.0
                }
            },
            a,
            b,
            quad_opts(),
        )?;
        total += piece.value;
    }
    Ok(2.0 * cns_constant(s)? * total)
}

/// `𝓡(x_j) = ½∫η''(k) R_k(x_j) dk` for the flux `g_ε = g + ε·id` and order `s`.
///
/// For smooth entropies the two integrals are exchanged: `𝓡(x) = C_{1,s}
/// ∫ F(v(x), v(y)) K(x - y) dy` with `F(a, b) = ∫ η''(k)|g_ε(k) - g_ε(b)| dk`
/// over `k` between `b` and `a`, whose integrand is `O(|x - y|^{1-2s})` at the
/// diagonal.
pub fn entropy_remainder(
    v: &Field,
    eta: &EntropySpec,
    g: &NonlinearityG,
    eps: f64,
    s: FracOrder,
    j: usize,
) -> Result<f64> {
    let interp = Interpolant::new(v);
    remainder_density(v, &interp, eta, g, eps, s, j)
}

fn remainder_density(
    v: &Field,
    interp: &Interpolant,
    eta: &EntropySpec,
    g: &NonlinearityG,
    eps: f64,
    s: FracOrder,
    j: usize,
) -> Result<f64> {
    let geps = |x: f64| g.apply(x) + eps * x;
    match eta {
        EntropySpec::Kruzkov { k } => remainder_with(v, interp, geps, *k, s, j),
        EntropySpec::Smooth { second, support, .. } => {
            let (lo, hi) = *support;
            if !(hi > lo) {
                return Ok(0.0);
            }
            let grid = v.grid();
            let x = grid.x(j);
            let a = v.samples()[j].re;
            let p = 1.0 + 2.0 * s.value();
            let period = grid.period();
            let f = |b: f64| {
                let (kl, kh) = (a.min(b).max(lo), a.max(b).min(hi));
                let gb = geps(b);
                gl_integrate(|kk| second(kk) * (geps(kk) - gb).abs(), kl, kh)
            };
            let l = grid.half_length();
            let breaks = [-l, -0.5 * l, -0.125 * l, 0.0, 0.125 * l, 0.5 * l, l];
            let r = integrate_pieces(
                |h| {
                    if h == 0.0 {
                        0.0
                    } else {
                        f(interp.eval(x + h)) * periodic_kernel(p, period, h)
                    }
                },
                &breaks,
                quad_opts(),
            )?;
            Ok(cns_constant(s)? * r.value)
        }
    }
}

/// Smooth profile on the line with analytic level sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LineProfile {
    /// `base + amplitude · tanh((y - center)/width)`.
    Sigmoid {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `base + amplitude · exp(-((y - center)/width)²)`.
    Gaussian {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

impl LineProfile {
    fn parts(&self) -> (f64, f64, f64, f64) {
        match *self {
            Self::Sigmoid {
                base,
                amplitude,
                center,
                width,
            }
            | Self::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => (base, amplitude, center, width),
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        let (base, amp, c, w) = self.parts();
        let r = (y - c) / w;
        match self {
            Self::Sigmoid { .. } => base + amp * r.tanh(),
            Self::Gaussian { .. } => base + amp * (-r * r).exp(),
        }
    }

    /// Limits at `-∞` and `+∞`.
    pub fn limits(&self) -> (f64, f64) {
        let (base, amp, _, _) = self.parts();
        match self {
            Self::Sigmoid { .. } => (base - amp, base + amp),
            Self::Gaussian { .. } => (base, base),
        }
    }

    /// Points where the profile equals `k`, increasing.
    pub fn crossings(&self, k: f64) -> Vec<f64> {
        let (base, amp, c, w) = self.parts();
        let t = (k - base) / amp;
        match self {
            Self::Sigmoid { .. } if t.abs() < 1.0 => vec![c + w * t.atanh()],
            Self::Gaussian { .. } if t > 0.0 && t < 1.0 => {
                let r = (-t.ln()).sqrt();
                vec![c - w * r, c + w * r]
            }
            _ => Vec::new(),
        }
    }

    pub fn center(&self) -> f64 {
        self.parts().2
    }

    pub fn width(&self) -> f64 {
        self.parts().3
    }
}

/// The three terms of the remainder identity at one point on the line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderIdentity {
    /// `(-Δ)^s|g(v) - g(k)|(x)`.
    pub frac_abs: f64,
    /// `R_k(x)`.
    pub remainder: f64,
    /// `sgn(v(x) - k)(-Δ)^s g(v)(x)`.
    pub signed_frac: f64,
    /// `|frac_abs + remainder - signed_frac|`.
    pub defect: f64,
}

/// Distance past which a profile equals its limits to double precision.
fn far_distance(profile: &LineProfile, x: f64) -> f64 {
    (x - profile.center()).abs() + 60.0 * profile.width() + 10.0
}

/// `(-Δ)^s f(x)` on the line as `C_{1,s}∫_0^∞ (2f(x) - f(x+h) - f(x-h)) h^{-1-2s} dh`.
/// The first piece `[0, δ]` uses the Taylor expansion with finite-difference
/// derivatives; `kinks` are points where `f` is not smooth (kept away from
/// `x`), and `f` must settle to `limits` within the far distance.
fn line_frac_laplacian(
    f: &dyn Fn(f64) -> f64,
    limits: (f64, f64),
    x: f64,
    s: FracOrder,
    kinks: &[f64],
    width: f64,
    far: f64,
) -> Result<f64> {
    let sv = s.value();
    let fx = f(x);
    let d_min = kinks.iter().map(|y| (y - x).abs()).fold(f64::INFINITY, f64::min);
    let delta = (0.01 * width).min(0.25 * d_min);
    let h2 = (0.02 * width).min(0.2 * d_min);
    let f2 = (-f(x + 2.0 * h2) + 16.0 * f(x + h2) - 30.0 * fx + 16.0 * f(x - h2) - f(x - 2.0 * h2))
        / (12.0 * h2 * h2);
    let h4 = (0.05 * width).min(0.2 * d_min);
    let f4 = (f(x - 2.0 * h4) - 4.0 * f(x - h4) + 6.0 * fx - 4.0 * f(x + h4) + f(x + 2.0 * h4))
        / h4.powi(4);
    let near = -f2 * delta.powf(2.0 - 2.0 * sv) / (2.0 - 2.0 * sv)
        - f4 * delta.powf(4.0 - 2.0 * sv) / (12.0 * (4.0 - 2.0 * sv));
    let mut breaks = vec![delta, far];
    let mut b = delta;
    while b < far {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.extend(kinks.iter().map(|y| (y - x).abs()).filter(|&d| d > delta && d < far));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let body = integrate_pieces(
        |h| (2.0 * fx - f(x + h) - f(x - h)) * h.powf(-1.0 - 2.0 * sv),
        &breaks,
        quad_opts(),
    )?;
    let tail = (2.0 * fx - limits.0 - limits.1) * far.powf(-2.0 * sv) / (2.0 * sv);
    Ok(cns_constant(s)? * (near + body.value + tail))
}

/// `R_k(x)` on the line, integrating over the level set between analytic
/// crossings and closing unbounded pieces with their constant tails.
pub fn line_remainder(profile: &LineProfile, g: &NonlinearityG, k: f64, s: FracOrder, x: f64) -> Result<f64> {
    let sigma = sign_at(profile.value(x), k, x)?;
    let sv = s.value();
    let gk = g.apply(k);
    let far = far_distance(profile, x);
    let cs = profile.crossings(k);
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend(&cs);
    bounds.push(f64::INFINITY);
    let w = profile.width();
    let (lim_lo, lim_hi) = profile.limits();
    let integrand = |y: f64| (g.apply(profile.value(y)) - gk).abs() * (y - x).abs().powf(-1.0 - 2.0 * sv);
    let mut total = 0.0;
    for win in bounds.windows(2) {
        let (a, b) = (win[0], win[1]);
        let probe = match (a.is_finite(), b.is_finite()) {
            (true, true) => 0.5 * (a + b),
            (false, true) => b - w,
            (true, false) => a + w,
            (false, false) => x,
        };
        if sigma * (profile.value(probe) - k) >= 0.0 {
            continue;
        }
        let lo = if a.is_finite() { a } else { x - far };
        let hi = if b.is_finite() { b } else { x + far };
        total += integrate(integrand, lo, hi, quad_opts())?.value;
        let tail = far.powf(-2.0 * sv) / (2.0 * sv);
        if !a.is_finite() {
            total += (g.apply(lim_lo) - gk).abs() * tail;
        }
        if !b.is_finite() {
            total += (g.apply(lim_hi) - gk).abs() * tail;
        }
    }
    Ok(2.0 * cns_constant(s)? * total)
}

/// Evaluates all three terms of the remainder identity independently.
pub fn line_remainder_identity(
    profile: &LineProfile,
    g: &NonlinearityG,
    k: f64,
    s: FracOrder,
    x: f64,
) -> Result<RemainderIdentity> {
    let sigma = sign_at(profile.value(x), k, x)?;
    let gk = g.apply(k);
    let far = far_distance(profile, x);
    let (lim_lo, lim_hi) = profile.limits();
    let kinks = profile.crossings(k);
    let w = profile.width();
    let abs_part = |y: f64| (g.apply(profile.value(y)) - gk).abs();
    let frac_abs = line_frac_laplacian(
        &abs_part,
        ((g.apply(lim_lo) - gk).abs(), (g.apply(lim_hi) - gk).abs()),
        x,
        s,
        &kinks,
        w,
        far,
    )?;
    let gv = |y: f64| g.apply(profile.value(y));
    let signed_frac =
        sigma * line_frac_laplacian(&gv, (g.apply(lim_lo), g.apply(lim_hi)), x, s, &[], w, far)?;
    let remainder = line_remainder(profile, g, k, s, x)?;
    Ok(RemainderIdentity {
        frac_abs,
        remainder,
        signed_frac,
        defect: (frac_abs + remainder - signed_frac).abs(),
    })
}

/// One seeded configuration for the remainder identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderCase {
    pub profile: LineProfile,
    pub g: NonlinearityG,
    pub k: f64,
    pub s: f64,
    pub x: f64,
}

/// Sigmoid (one crossing) and Gaussian (two crossings) profiles with random
/// levels, nonlinearities and orders; `x` stays at least `0.2·width` from
/// every crossing.
pub fn remainder_cases(count: usize, seed: u64) -> Vec<RemainderCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let width = rng.gen_range(0.5..2.0);
            let amplitude = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let base = rng.gen_range(-1.0..1.0);
            let center = rng.gen_range(-2.0..2.0);
            let (profile, t) = if i % 2 == 0 {
                let p = LineProfile::Sigmoid {
                    base,
                    amplitude,
                    center,
                    width,
                };
                (p, rng.gen_range(-0.9..0.9))
            } else {
                let p = LineProfile::Gaussian {
                    base,
                    amplitude,
                    center,
                    width,
                };
                (p, rng.gen_range(0.1..0.9))
            };
            let k = base + amplitude * t;
            let g = if rng.gen_bool(0.7) {
                let m = rng.gen_range(0.0..0.5);
                NonlinearityG::TanhBlend {
                    m,
                    big_m: m + rng.gen_range(0.2..1.5),
                }
            } else {
                NonlinearityG::Linear {
                    slope: rng.gen_range(0.1..2.0),
                }
            };
            let s = rng.gen_range(0.15..0.9);
            let cs = profile.crossings(k);
            let x = loop {
                let x = center + width * rng.gen_range(-4.0..4.0);
                if cs.iter().all(|c| (c - x).abs() >= 0.2 * width) {
                    break x;
                }
            };
            RemainderCase { profile, g, k, s, x }
        })
        .collect()
}

/// Terms of the regularized entropy balance paired with a test function.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyBalance {
    /// `-∫∫η(v)∂_tψ - ∫η(v₀)ψ(0)`.
    pub time: f64,
    /// `∫∫q(v)(-Δ)^{s/2}ψ`.
    pub flux: f64,
    /// `-β∫∫η'(v)(-Δ)^{s/2}|u|² ψ`.
    pub coupling: f64,
    /// `-ε^b∫∫η(v)Δψ`.
    pub viscous: f64,
    /// `ε∫∫η(v)(-Δ)^{s/2}ψ`.
    pub eps_flux: f64,
    /// `ε^b∫∫|∂_x v|²η''(v)ψ`.
    pub dissipation: f64,
    /// `∫∫𝓡ψ`.
    pub remainder: f64,
    /// Sum of all terms.
    pub residual: f64,
}

/// Pairs the regularized entropy balance of the long-wave equation with `ψ`.
/// Needs a smooth entropy; the remainder is evaluated at grid points inside
/// the spatial support of `ψ`.
pub fn entropy_balance(traj: &Trajectory, eta: &EntropySpec, psi: &TestFunction) -> Result<EntropyBalance> {
    if !eta.is_smooth() {
        return Err(Error::InvalidArgument(
            "the entropy balance needs a smooth entropy".into(),
        ));
    }
    if psi.flavor != crate::spectral::Flavor::RealLongwave {
        return Err(Error::InvalidArgument("entropy balance needs a real test function".into()));
    }
    let grid = *traj.v[0].grid();
    if psi.participation(grid, traj.run.t_final)? == Participation::Empty {
        return Ok(EntropyBalance::default());
    }
    let w = simpson_weights(&traj.times)?;
    let params = &traj.params;
    let s = params.s.value();
    let half = FracOrder::new(0.5 * s)?;
    let eps = traj.run.eps;
    let visc = eps.powi(traj.run.b as i32);
    let g = params.g;
    let dx = grid.spacing();
    let (x_lo, x_hi) = psi.space_support();
    let inside: Vec<usize> = (0..grid.n_points())
        .filter(|&j| grid.x(j) > x_lo && grid.x(j) < x_hi)
        .collect();
    let real_pair = |f: &Field, h: &Field| f.inner(h).expect("same grid").re;
    let (t_lo, t_hi) = psi.time_support();

    let mut out = EntropyBalance {
        time: -real_pair(&traj.v[0].map_real(|x| eta.value(x)), &psi.sample(grid, 0.0)),
        ..Default::default()
    };
    for (n, &t) in traj.times.iter().enumerate() {
        if t <= t_lo || t >= t_hi {
            continue;
        }
        let (u, v) = (&traj.u[n], &traj.v[n]);
        let p = psi.sample(grid, t);
        let pt = psi.sample_time_derivative(grid, t);
        let dp = p.abs_k_power(s);
        let eta_v = v.map_real(|x| eta.value(x));
        let q_v = v.map_real(|x| entropy_flux(eta, &g, x));
        let rho = u.abs_sq().dealias().abs_k_power(s);
        let coupling = v
            .map_real(|x| eta.derivative(x))
            .mul(&rho)
            .expect("same grid");
        let vx = v.derivative();
        let diss = vx
            .abs_sq()
            .mul(&v.map_real(|x| eta.second_derivative(x)))
            .expect("same grid");
        let interp = Interpolant::new(v);
        let mut rem = 0.0;
        for &j in &inside {
            let r = remainder_density(v, &interp, eta, &g, eps, half, j)?;
            rem += r * p.samples()[j].re * dx;
        }
        let wn = w[n];
        out.time -= wn * real_pair(&eta_v, &pt);
        out.flux += wn * real_pair(&q_v, &dp);
        out.coupling -= wn * params.beta * real_pair(&coupling, &p);
        out.viscous -= wn * visc * real_pair(&eta_v, &p.laplacian());
        out.eps_flux += wn * eps * real_pair(&eta_v, &dp);
        out.dissipation += wn * visc * real_pair(&diss, &p);
        out.remainder += wn * rem;
    }
    out.residual = out.time
        + out.flux
        + out.coupling
        + out.viscous
        + out.eps_flux
        + out.dissipation
        + out.remainder;
    Ok(out)
}

/// Residual of the regularized entropy balance against `ψ`.
pub fn entropy_balance_residual(traj: &Trajectory, eta: &EntropySpec, psi: &TestFunction) -> Result<f64> {
    Ok(entropy_balance(traj, eta, psi)?.residual)
}
