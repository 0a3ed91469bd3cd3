//! Resolution of flags, configuration file and defaults into typed settings.

use std::path::PathBuf;

use snscp::problem::{
    load_samples, make_counterexample, make_norm_opt, Counterexample, NormOptParams,
};
use snscp::solver::{budget_for_alpha, SolverConfig};
use snscp::{Dims, NormOptInstance, Problem};

use crate::config::ConfigFile;
use crate::{CliError, InstanceArgs, Preset, SolverArgs};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_M: usize = 1;
pub const DEFAULT_N: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Clone, Debug)]
pub enum InstanceSource {
    Generated {
        params: NormOptParams,
        seed: u64,
    },
    Samples {
        path: PathBuf,
        b: f64,
        lambda1: f64,
        lambda2: f64,
    },
    Counterexample,
}

pub enum Instance {
    NormOpt(NormOptInstance),
    Counterexample(Counterexample),
}

impl Instance {
    pub fn problem(&self) -> &dyn Problem {
        match self {
            Self::NormOpt(p) => p,
            Self::Counterexample(p) => p,
        }
    }
}

/// Everything needed to build an instance and a solver configuration.
#[derive(Clone, Debug)]
pub struct Settings {
    pub source: InstanceSource,
    pub alpha: f64,
    /// Explicit budget; `None` means `⌈αN⌉`.
    pub s: Option<usize>,
    pub solver: SolverArgs,
}

impl Settings {
    pub fn resolve(
        instance: &InstanceArgs,
        solver: &SolverArgs,
    ) -> Result<(Self, ConfigFile), CliError> {
        let file = match &instance.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let preset: Option<Preset> = file.pick(instance.preset, "preset")?;
        let samples: Option<PathBuf> = file.pick(instance.samples.clone(), "samples")?;
        let b = file
            .pick(instance.b, "b")?
            .unwrap_or(NormOptParams::DEFAULT_B);
        let lambda1 = file
            .pick(instance.lambda1, "lambda1")?
            .unwrap_or(NormOptParams::DEFAULT_LAMBDA);
        let lambda2 = file
            .pick(instance.lambda2, "lambda2")?
            .unwrap_or(NormOptParams::DEFAULT_LAMBDA);
        let k = file.pick(instance.k, "k")?;
        let m = file.pick(instance.m, "m")?;
        let n = file.pick(instance.n, "n")?;

        let source = match (preset, samples) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either a preset or a sample file, not both".into(),
                ))
            }
            (Some(Preset::Counterexample), None) => {
                if k.is_some() || m.is_some() || n.is_some() {
                    return Err(CliError::Config(
                        "the counterexample preset has fixed dimensions".into(),
                    ));
                }
                InstanceSource::Counterexample
            }
            (None, Some(path)) => {
                if k.is_some() || m.is_some() || n.is_some() {
                    return Err(CliError::Config(
                        "dimensions are read from the sample file".into(),
                    ));
                }
                InstanceSource::Samples {
                    path,
                    b,
                    lambda1,
                    lambda2,
                }
            }
            (None, None) => InstanceSource::Generated {
                params: NormOptParams {
                    k: k.unwrap_or(DEFAULT_K),
                    m: m.unwrap_or(DEFAULT_M),
                    n: n.unwrap_or(DEFAULT_N),
                    b,
                    lambda1,
                    lambda2,
                },
                seed: file.pick(instance.seed, "seed")?.unwrap_or(DEFAULT_SEED),
            },
        };

        let resolved_solver = SolverArgs {
            tau: file.pick(solver.tau, "tau")?,
            rho: file.pick(solver.rho, "rho")?,
            nu: file.pick(solver.nu, "nu")?,
            pi: file.pick(solver.pi, "pi")?,
            gamma: file.pick(solver.gamma, "gamma")?,
            mu_bar: file.pick(solver.mu_bar, "mu-bar")?,
            max_it: file.pick(solver.max_it, "max-it")?,
            tol_scale: file.pick(solver.tol_scale, "tol-scale")?,
            t_max: file.pick(solver.t_max, "t-max")?,
            pivot_tol: file.pick(solver.pivot_tol, "pivot-tol")?,
            ls_zero_rel: file.pick(solver.ls_zero_rel, "ls-zero-rel")?,
        };
        let settings = Self {
            source,
            alpha: file.pick(instance.alpha, "alpha")?.unwrap_or(DEFAULT_ALPHA),
            s: file.pick(instance.s, "s")?,
            solver: resolved_solver,
        };
        Ok((settings, file))
    }

    pub fn build_instance(&self) -> Result<Instance, CliError> {
        Ok(match &self.source {
            InstanceSource::Generated { params, seed } => {
                Instance::NormOpt(make_norm_opt(*params, *seed)?)
            }
            InstanceSource::Samples {
                path,
                b,
                lambda1,
                lambda2,
            } => Instance::NormOpt(load_samples(path, *b, *lambda1, *lambda2)?),
            InstanceSource::Counterexample => Instance::Counterexample(make_counterexample()),
        })
    }

    /// Solver configuration for an instance with `dims`.
    ///
    /// `s` defaults to `⌈αN⌉` and `γ` to `a/s` with `a` chosen from `α`.
    pub fn solver_config(&self, dims: Dims) -> Result<SolverConfig, CliError> {
        let base = SolverConfig::for_alpha(self.alpha, dims.n)?;
        let s = match self.s {
            Some(s) => s,
            None => budget_for_alpha(self.alpha, dims.n)?,
        };
        let mut cfg = SolverConfig::new(s);
        cfg.gamma = base.gamma * base.s as f64 / s.max(1) as f64;
        let a = &self.solver;
        if let Some(v) = a.tau {
            cfg.tau = v;
        }
        if let Some(v) = a.rho {
            cfg.rho = v;
        }
        if let Some(v) = a.nu {
            cfg.nu = v;
        }
        if let Some(v) = a.pi {
            cfg.pi = v;
        }
        if let Some(v) = a.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = a.mu_bar {
            cfg.mu_bar = v;
        }
        if let Some(v) = a.max_it {
            cfg.max_it = v;
        }
        if let Some(v) = a.tol_scale {
            cfg.tol_scale = v;
        }
        if let Some(v) = a.t_max {
            cfg.t_max = v;
        }
        if let Some(v) = a.pivot_tol {
            cfg.pivot_tol = v;
        }
        if let Some(v) = a.ls_zero_rel {
            cfg.ls_zero_rel = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
