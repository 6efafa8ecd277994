//! Problem configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cone::{ConeSpec, Sampling};
use crate::error::{Error, Result};
use crate::numerics::{matrix_from_nested, Vector};
use crate::parallel::Exec;
use crate::simulation::{PerturbationSpec, SimConfig, Signal};
use crate::synthesis::LinearPlant;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub rho: f64,
    pub mu: f64,
    #[serde(default)]
    pub positive_degree: bool,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    pub plant: PlantSection,
    pub cone: ConeSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_max_iters() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSection {
    pub h: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
    /// 1-based indices of the physical constraints; the rest are virtual.
    pub safe: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Homogeneous,
    Linear,
    Mixed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub controller: ControllerKind,
    pub t_final: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_step: Option<f64>,
    pub stride: Option<f64>,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            x0: None,
            controller: ControllerKind::default(),
            t_final: None,
            rel_tol: None,
            abs_tol: None,
            max_step: None,
            stride: None,
            perturbation: PerturbationConfig::None,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    #[default]
    None,
    /// `channel · |amplitude sin(frequency t) · selectorᵀx|^exponent`
    StateMultiplicative {
        channel: Vec<f64>,
        selector: Vec<f64>,
        exponent: f64,
        #[serde(default = "one")]
        amplitude: f64,
        frequency: f64,
    },
    /// Held measurement noise plus `additive · amplitude sin(frequency t)`.
    NoisePlusAdditive {
        noise: f64,
        hold: f64,
        seed: Option<u64>,
        additive: Vec<f64>,
        #[serde(default = "one")]
        amplitude: f64,
        frequency: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_count() -> usize {
    2048
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            count: default_count(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Offset of the ISSf slices; the check is skipped when absent.
    pub issf_r: Option<Vec<f64>>,
    /// Largest `|q|` in the ISS grid.
    #[serde(default = "one")]
    pub iss_q_max: f64,
    #[serde(default = "default_q_points")]
    pub iss_q_points: usize,
}

fn default_q_points() -> usize {
    9
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            issf_r: None,
            iss_q_max: 1.0,
            iss_q_points: default_q_points(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Validated problem data.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub plant: LinearPlant,
    pub cone: ConeSpec,
    /// 0-based physical constraint indices.
    pub safe: Vec<usize>,
}

pub fn read_config(path: &Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn vector(v: &[f64], n: usize, what: &'static str) -> Result<Vector> {
    if v.len() != n {
        return Err(Error::dim(what, n, v.len()));
    }
    let out = Vector::from_column_slice(v);
    crate::numerics::ensure_finite_vec(&out, what)?;
    Ok(out)
}

/// Checks a degree against `[-1, 0)` (or `(0, 1]` for positive degrees).
pub fn check_degree(mu: f64, positive: bool) -> Result<()> {
    let ok = if positive {
        mu > 0.0 && mu <= 1.0
    } else {
        (-1.0..0.0).contains(&mu)
    };
    if ok {
        Ok(())
    } else {
        let range = if positive { "(0, 1]" } else { "[-1, 0)" };
        Err(Error::InvalidInput(format!("mu = {mu} outside {range}")))
    }
}

impl Problem {
    /// Loads and validates every dimension before any stage runs.
    pub fn load(path: &Path) -> Result<Problem> {
        Problem::from_config(read_config(path)?)
    }

    pub fn from_config(config: ProblemConfig) -> Result<Problem> {
        let a = matrix_from_nested(&config.plant.a, "plant A")?;
        let b = matrix_from_nested(&config.plant.b, "plant B")?;
        let plant = LinearPlant::new(a, b)?;
        let n = plant.n();
        let h = matrix_from_nested(&config.cone.h, "cone rows H")?;
        if h.shape() != (n, n) {
            return Err(Error::dim(
                "cone rows H",
                format!("{n}x{n}"),
                format!("{}x{}", h.nrows(), h.ncols()),
            ));
        }
        let cone = ConeSpec::new(h, config.cone.labels.clone())?;
        cone.h_inv()?;
        let p = cone.p();
        let safe = match &config.cone.safe {
            None => (0..p).collect(),
            Some(idx) => {
                if let Some(bad) = idx.iter().find(|&&i| i == 0 || i > p) {
                    return Err(Error::InvalidInput(format!(
                        "cone.safe index {bad} outside 1..={p}"
                    )));
                }
                idx.iter().map(|i| i - 1).collect()
            }
        };
        if !(config.rho > 0.0 && config.rho.is_finite()) {
            return Err(Error::InvalidInput(format!("rho = {} must be positive", config.rho)));
        }
        check_degree(config.mu, config.positive_degree)?;
        if let Some(x0) = &config.sim.x0 {
            vector(x0, n, "sim.x0")?;
        }
        match &config.sim.perturbation {
            PerturbationConfig::None => {}
            PerturbationConfig::StateMultiplicative {
                channel, selector, ..
            } => {
                vector(channel, n, "perturbation channel")?;
                vector(selector, n, "perturbation selector")?;
            }
            PerturbationConfig::NoisePlusAdditive { additive, .. } => {
                vector(additive, n, "perturbation additive")?;
            }
        }
        if let Some(r) = &config.verify.issf_r {
            vector(r, p, "verify.issf_r")?;
        }
        if config.verify.iss_q_points == 0 {
            return Err(Error::InvalidInput("verify.iss_q_points must be positive".into()));
        }
        if config.sampling.count == 0 {
            return Err(Error::InvalidInput("sampling.count must be positive".into()));
        }
        let problem = Problem {
            config,
            plant,
            cone,
            safe,
        };
        problem.sim_config()?.validate()?;
        Ok(problem)
    }

    pub fn n(&self) -> usize {
        self.plant.n()
    }

    pub fn sampling(&self) -> Sampling {
        Sampling {
            count: self.config.sampling.count,
            seed: self.config.sampling.seed,
            exec: Exec::Parallel,
        }
    }

    pub fn x0(&self) -> Result<Vector> {
        match &self.config.sim.x0 {
            Some(x0) => vector(x0, self.n(), "sim.x0"),
            None => Err(Error::InvalidInput("sim.x0 is required for simulation".into())),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.config.sim;
        let d = SimConfig::default();
        Ok(SimConfig {
            t_final: s.t_final.unwrap_or(d.t_final),
            rel_tol: s.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: s.abs_tol.unwrap_or(d.abs_tol),
            max_step: s.max_step.unwrap_or(d.max_step),
            stride: s.stride.unwrap_or(d.stride),
            ..d
        })
    }

    pub fn perturbation(&self) -> Result<PerturbationSpec> {
        let n = self.n();
        Ok(match &self.config.sim.perturbation {
            PerturbationConfig::None => PerturbationSpec::None,
            PerturbationConfig::StateMultiplicative {
                channel,
                selector,
                exponent,
                amplitude,
                frequency,
            } => PerturbationSpec::StateMultiplicative {
                channel: vector(channel, n, "perturbation channel")?,
                selector: vector(selector, n, "perturbation selector")?,
                exponent: *exponent,
                signal: Signal::Sine {
                    amplitude: *amplitude,
                    frequency: *frequency,
                },
            },
            PerturbationConfig::NoisePlusAdditive {
                noise,
                hold,
                seed,
                additive,
                amplitude,
                frequency,
            } => PerturbationSpec::NoisePlusAdditive {
                noise_magnitude: *noise,
                hold: *hold,
                seed: seed.unwrap_or(self.config.sampling.seed),
                additive: vector(additive, n, "perturbation additive")?,
                signal: Signal::Sine {
                    amplitude: *amplitude,
                    frequency: *frequency,
                },
            },
        })
    }

    pub fn issf_offset(&self) -> Option<Vector> {
        self.config
            .verify
            .issf_r
            .as_ref()
            .map(|r| Vector::from_column_slice(r))
    }
}
