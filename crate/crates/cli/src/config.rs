//! TOML run configuration, validation and hashing.

use std::path::{Path, PathBuf};

use fracbenney::solver::{check_ladder, NonlinearityG, PerturbedRun, SystemParams};
use fracbenney::sobolev::random_band_limited;
use fracbenney::spectral::{Field, Flavor, GridSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("invalid [{section}]: {message}")]
    Invalid { section: &'static str, message: String },
}

fn invalid(section: &'static str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        section,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_length: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub alpha: f64,
    pub beta: f64,
    pub s: f64,
    pub g: NonlinearityG,
}

/// Initial profile registry. Gaussians are `A exp(-((x-c)/w)²)`, times
/// `e^{ikx}` for the short wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
        #[serde(default)]
        wavenumber: f64,
    },
    Sech {
        amplitude: f64,
        center: f64,
        width: f64,
        #[serde(default)]
        wavenumber: f64,
    },
    /// Seeded band-limited field scaled to the given L² norm; the stream
    /// is `seed + offset`.
    Random {
        l2_norm: f64,
        #[serde(default)]
        offset: u64,
    },
}

impl Profile {
    fn validate(&self, section: &'static str) -> Result<(), ConfigError> {
        match *self {
            Profile::Zero => Ok(()),
            Profile::Gaussian { amplitude, center, width, wavenumber }
            | Profile::Sech { amplitude, center, width, wavenumber } => {
                if ![amplitude, center, wavenumber].iter().all(|v| v.is_finite()) || !(width > 0.0 && width.is_finite()) {
                    return Err(invalid(section, "profile parameters must be finite with width > 0"));
                }
                Ok(())
            }
            Profile::Random { l2_norm, .. } => {
                if !(l2_norm >= 0.0 && l2_norm.is_finite()) {
                    return Err(invalid(section, "l2_norm must be finite and ≥ 0"));
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, grid: GridSpec, flavor: Flavor, seed: u64) -> Field {
        let complex = flavor == Flavor::ComplexShortwave;
        let carrier = |k: f64, x: f64| {
            if complex {
                Complex64::from_polar(1.0, k * x)
            } else {
                Complex64::new((k * x).cos(), 0.0)
            }
        };
        let field = match *self {
            Profile::Zero => Field::zeros(grid, flavor),
            Profile::Gaussian { amplitude, center, width, wavenumber } => Field::from_fn_complex(grid, |x| {
                carrier(wavenumber, x) * amplitude * (-((x - center) / width).powi(2)).exp()
            }),
            Profile::Sech { amplitude, center, width, wavenumber } => Field::from_fn_complex(grid, |x| {
                carrier(wavenumber, x) * (amplitude / ((x - center) / width).cosh())
            }),
            Profile::Random { l2_norm, offset } => {
                let f = random_band_limited(grid, flavor, seed.wrapping_add(offset));
                let n = f.l2_norm();
                if n == 0.0 {
                    f
                } else {
                    f.scale_real(l2_norm / n)
                }
            }
        };
        field.with_flavor(flavor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub u0: Profile,
    pub v0: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub eps: f64,
    /// Strictly decreasing ε values for `sweep`.
    #[serde(default)]
    pub eps_ladder: Vec<f64>,
    #[serde(default = "default_a")]
    pub a: u32,
    #[serde(default = "default_b")]
    pub b: u32,
}

fn default_a() -> u32 {
    4
}

fn default_b() -> u32 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max_iter")]
    pub picard_max_iter: usize,
    #[serde(default = "default_blowup_factor")]
    pub blowup_factor: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
}

fn default_picard_tol() -> f64 {
    1e-12
}

fn default_picard_max_iter() -> usize {
    50
}

fn default_blowup_factor() -> f64 {
    1e6
}

fn default_max_halvings() -> u32 {
    8
}

/// Thresholds of the invariant checks that decide the exit status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default = "default_tight")]
    pub mass_drift: f64,
    #[serde(default = "default_tight")]
    pub sup_excess: f64,
    #[serde(default = "default_balance")]
    pub energy_balance: f64,
    #[serde(default = "default_balance")]
    pub v_balance: f64,
}

fn default_tight() -> f64 {
    1e-8
}

fn default_balance() -> f64 {
    1e-4
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            mass_drift: default_tight(),
            sup_excess: default_tight(),
            energy_balance: default_balance(),
            v_balance: default_balance(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Coupling values of the stability map.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Multipliers of `u₀` for the energy axis of the stability map.
    #[serde(default = "default_scales")]
    pub u0_scales: Vec<f64>,
}

fn default_scales() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Every how many stored steps a trajectory sample is written.
    #[serde(default = "default_stride")]
    pub trajectory_stride: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_stride() -> usize {
    10
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            trajectory_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub system: SystemConfig,
    pub data: DataConfig,
    pub perturbation: PerturbationConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Everything a solver call needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub params: SystemParams,
    pub run: PerturbedRun,
    pub u0: Field,
    pub v0: Field,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })
    }

    /// TOML of the config with the output directory blanked, so the same
    /// experiment written to different places shares one identity.
    pub fn to_toml(&self) -> String {
        let mut normalized = self.clone();
        normalized.output.dir = PathBuf::new();
        toml::to_string(&normalized).expect("config serializes")
    }

    /// SHA-256 of [`RunConfig::to_toml`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Checks every solver precondition and builds the run inputs.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let grid = GridSpec::new(self.grid.half_length, self.grid.n_points).map_err(|e| invalid("grid", e))?;
        let s = &self.system;
        let params = SystemParams::new(s.alpha, s.beta, s.s, s.g).map_err(|e| invalid("system", e))?;
        params.g.validate(4.0, 1e-9).map_err(|e| invalid("system.g", e))?;
        let t = &self.time;
        let p = &self.perturbation;
        let mut run = PerturbedRun::new(p.eps, t.t_final, t.dt).map_err(|e| invalid("time", e))?;
        run.a = p.a;
        run.b = p.b;
        run.picard_tol = t.picard_tol;
        run.picard_max_iter = t.picard_max_iter;
        run.blowup_factor = t.blowup_factor;
        run.max_halvings = t.max_halvings;
        run.validate().map_err(|e| invalid("time", e))?;
        if p.a == 0 || p.b == 0 {
            return Err(invalid("perturbation", "exponents a and b must be positive"));
        }
        if !p.eps_ladder.is_empty() {
            check_ladder(&p.eps_ladder).map_err(|e| invalid("perturbation", e))?;
            if p.eps_ladder.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                return Err(invalid("perturbation", "ladder values must lie in (0, 1)"));
            }
        }
        self.data.u0.validate("data.u0")?;
        self.data.v0.validate("data.v0")?;
        let th = &self.thresholds;
        if ![th.mass_drift, th.sup_excess, th.energy_balance, th.v_balance].iter().all(|v| *v >= 0.0) {
            return Err(invalid("thresholds", "thresholds must be ≥ 0"));
        }
        if self.sweep.alphas.iter().chain(&self.sweep.u0_scales).any(|v| !v.is_finite()) {
            return Err(invalid("sweep", "grid values must be finite"));
        }
        if self.output.trajectory_stride == 0 {
            return Err(invalid("output", "trajectory_stride must be ≥ 1"));
        }
        let u0 = self.data.u0.sample(grid, Flavor::ComplexShortwave, self.seed);
        let v0 = self.data.v0.sample(grid, Flavor::RealLongwave, self.seed);
        Ok(Prepared { params, run, u0, v0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = include_str!("../../../configs/canonical.toml");

    #[test]
    fn canonical_config_validates() {
        let cfg: RunConfig = toml::from_str(CANONICAL).unwrap();
        let p = cfg.prepare().unwrap();
        assert_eq!((p.run.a, p.run.b), (4, 7));
        assert_eq!(p.u0.grid().n_points(), 512);
    }

    #[test]
    fn hash_is_stable_across_round_trip() {
        let cfg: RunConfig = toml::from_str(CANONICAL).unwrap();
        let mut back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        back.output.dir = cfg.output.dir.clone();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(cfg.hash(), other.hash());
        other.seed -= 1;
        other.output.dir = PathBuf::from("elsewhere");
        assert_eq!(cfg.hash(), other.hash());
    }

    #[test]
    fn non_power_of_two_grid_is_rejected() {
        let mut cfg: RunConfig = toml::from_str(CANONICAL).unwrap();
        cfg.grid.n_points = 100;
        let msg = cfg.prepare().unwrap_err().to_string();
        assert!(msg.contains("power of two"), "{msg}");
    }

    #[test]
    fn increasing_ladder_is_rejected() {
        let mut cfg: RunConfig = toml::from_str(CANONICAL).unwrap();
        cfg.perturbation.eps_ladder = vec![0.1, 0.2];
        assert!(matches!(cfg.prepare(), Err(ConfigError::Invalid { section: "perturbation", .. })));
    }
}
