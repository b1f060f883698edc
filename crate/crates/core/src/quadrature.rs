//! One-dimensional quadrature and small special functions shared by the
//! singular-integral, Grönwall and entropy code.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// Tolerances for the adaptive Gauss–Kronrod driver.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive G7/K15 quadrature on a finite interval.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: AdaptiveOptions,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let mut intervals = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let value: f64 = intervals.iter().map(|i| i.2).sum();
        let error: f64 = intervals.iter().map(|i| i.3).sum();
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            return Ok(Integral { value, error });
        }
        if intervals.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "{} subintervals on [{a}, {b}], error estimate {error:e} for value {value:e}",
                intervals.len()
            )));
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Integrates over consecutive breakpoints, summing values and error estimates.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    opts: AdaptiveOptions,
) -> Result<Integral> {
    let mut total = Integral {
        value: 0.0,
        error: 0.0,
    };
    for w in breaks.windows(2) {
        let piece = integrate(&mut f, w[0], w[1], opts)?;
        total.value += piece.value;
        total.error += piece.error;
    }
    Ok(total)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            nodes[0] = 0.0;
            weights[0] = 2.0;
            break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Hurwitz zeta ζ(p, q) = Σ_{n≥0} (q+n)^{-p} for p > 1, q > 0, by Euler–Maclaurin.
pub fn hurwitz_zeta(p: f64, q: f64) -> f64 {
    debug_assert!(p > 1.0 && q > 0.0);
    // B_{2j}/(2j)!
    const B: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
        1.0 / 74_724_249_600.0,
        -3617.0 / 10_670_622_842_880_000.0,
    ];
    let n = 12usize;
    let mut sum = 0.0;
    for k in 0..n {
        sum += (q + k as f64).powf(-p);
    }
    let x = q + n as f64;
    sum += x.powf(1.0 - p) / (p - 1.0) + 0.5 * x.powf(-p);
    // rising factorial p (p+1) ... (p+2j-2) times x^{-p-2j+1}
    let mut fact = p;
    let mut xp = x.powf(-p - 1.0);
    for (j, b) in B.iter().enumerate() {
        sum += b * fact * xp;
        let m = 2.0 * j as f64;
        fact *= (p + m + 1.0) * (p + m + 2.0);
        xp /= x * x;
    }
    sum
}

/// Sum of |h + P m|^{-p} over all nonzero integers m, for |h| < P.
///
/// This is the smooth part of the periodized kernel |h|^{-p} on a circle of
/// circumference `period`.
pub fn image_kernel(p: f64, period: f64, h: f64) -> f64 {
    let r = h / period;
    period.powf(-p) * (hurwitz_zeta(p, 1.0 + r) + hurwitz_zeta(p, 1.0 - r))
}

/// Lagrange basis weights for evaluating at `x` from nodes `xs`.
pub fn lagrange_weights(xs: &[f64], x: f64) -> Vec<f64> {
    xs.iter()
        .enumerate()
        .map(|(j, &xj)| {
            xs.iter()
                .enumerate()
                .filter(|(m, _)| *m != j)
                .map(|(_, &xm)| (x - xm) / (xj - xm))
                .product()
        })
        .collect()
}

/// Monomial coefficients of the interpolating polynomial through (xs, ys).
pub fn monomial_coefficients(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    // Newton divided differences then expansion.
    let n = xs.len();
    let mut dd = ys.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (xs[i] - xs[i - j]);
        }
    }
    let mut coef = vec![0.0; n];
    for i in (0..n).rev() {
        // coef <- coef * (x - xs[i]) + dd[i]
        let mut next = vec![0.0; n];
        for k in 0..n {
            if coef[k] != 0.0 {
                if k + 1 < n {
                    next[k + 1] += coef[k];
                }
                next[k] -= coef[k] * xs[i];
            }
        }
        next[0] += dd[i];
        coef = next;
    }
    coef
}
