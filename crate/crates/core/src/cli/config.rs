//! Sectioned `key=value` experiment files.
//!
//! ```text
//! [data]
//! preset = synthetic
//! dim = 30
//! [method]
//! methods = milp,rs,ce
//! ```
//!
//! `#` starts a comment. Unknown sections and keys are rejected. Optional
//! values take `none` (or `auto` where a default is derived).

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::datagen::{FeatureDistribution, GroupedExpertConfig, SyntheticConfig};
use crate::error::{Error, Result};
use crate::eval::BenchMethod;
use crate::milp::MilpConfig;
use crate::surrogates::SurrogateLoss;
use crate::train::{Architecture, Method, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Synthetic,
    Grouped,
    Csv,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Synthetic => "synthetic",
            Preset::Grouped => "grouped",
            Preset::Csv => "csv",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Preset::Synthetic),
            "grouped" => Ok(Preset::Grouped),
            "csv" => Ok(Preset::Csv),
            _ => Err(Error::InvalidArgument(format!(
                "unknown preset '{s}' (synthetic | grouped | csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub preset: Preset,
    pub dim: usize,
    pub n: usize,
    /// `mixture` or `uniform`.
    pub distribution: String,
    pub components: usize,
    pub upper: f64,
    pub p_m: f64,
    pub p_h0: f64,
    pub p_h1: f64,
    pub classes: usize,
    pub k: usize,
    pub separation: f64,
    pub test_size: usize,
    pub path: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            preset: Preset::Synthetic,
            dim: 30,
            n: 1000,
            distribution: "mixture".into(),
            components: 20,
            upper: 1.0,
            p_m: 0.0,
            p_h0: 0.3,
            p_h1: 0.0,
            classes: 10,
            k: 5,
            separation: GroupedExpertConfig::DEFAULT_SEPARATION,
            test_size: 5000,
            path: None,
            seed: None,
        }
    }
}

impl DataSection {
    pub fn synthetic(&self, seed: u64) -> Result<SyntheticConfig> {
        let distribution = match self.distribution.as_str() {
            "mixture" => FeatureDistribution::GaussianMixture {
                components: self.components,
                upper: self.upper,
            },
            "uniform" => FeatureDistribution::Uniform { upper: self.upper },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown distribution '{other}' (mixture | uniform)"
                )))
            }
        };
        let cfg = SyntheticConfig {
            dim: self.dim,
            n: self.n,
            distribution,
            p_m: self.p_m,
            p_h0: self.p_h0,
            p_h1: self.p_h1,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grouped(&self, seed: u64) -> GroupedExpertConfig {
        GroupedExpertConfig {
            separation: self.separation,
            ..GroupedExpertConfig::new(self.dim, self.n, self.classes, self.k, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub trials: usize,
    pub grid_size: usize,
    pub jobs: usize,
    pub delta: f64,
    pub svg: bool,
    pub seed: Option<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            trials: 5,
            grid_size: 200,
            jobs: 1,
            delta: 0.05,
            svg: true,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub method: Method,
    pub methods: Vec<BenchMethod>,
    pub solver: MilpConfig,
    /// One group id per training point, for the fairness rows.
    pub groups: Option<PathBuf>,
    pub train: TrainConfig,
    pub train_seed: Option<u64>,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSection::default(),
            method: Method::Surrogate(SurrogateLoss::Rs),
            methods: "milp,rs,ce,ova,confidence,selective,triage,moe"
                .split(',')
                .map(|m| m.parse().expect("built-in method ids parse"))
                .collect(),
            solver: MilpConfig {
                time_limit_s: Some(120.0),
                ..MilpConfig::default()
            },
            groups: None,
            train: TrainConfig::default(),
            train_seed: None,
            eval: EvalSection::default(),
        }
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad value {raw:?} for {key}"),
    })
}

fn optional<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Option<T>> {
    match raw {
        "none" | "auto" => Ok(None),
        _ => value(line, key, raw).map(Some),
    }
}

fn list<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').map(|t| value(line, key, t.trim())).collect()
}

fn parsed<T: FromStr<Err = Error>>(line: usize, raw: &str) -> Result<T> {
    raw.parse().map_err(|e: Error| Error::Parse {
        line,
        msg: e.to_string(),
    })
}

fn show<T: fmt::Display>(v: &Option<T>, absent: &str) -> String {
    v.as_ref().map_or(absent.to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["data", "method", "solver", "train", "eval"].contains(&section.as_str()) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown section [{section}]"),
                    });
                }
                continue;
            }
            let Some((key, val)) = body.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected key = value, found {body:?}"),
                });
            };
            cfg.set(&section, key.trim(), val.trim(), line)?;
        }
        Ok(cfg)
    }

    /// Applies one `section.key = value` assignment.
    pub fn set(&mut self, section: &str, key: &str, v: &str, line: usize) -> Result<()> {
        let d = &mut self.data;
        let s = &mut self.solver;
        let t = &mut self.train;
        let e = &mut self.eval;
        match (section, key) {
            ("data", "preset") => d.preset = parsed(line, v)?,
            ("data", "dim") => d.dim = value(line, key, v)?,
            ("data", "n") => d.n = value(line, key, v)?,
            ("data", "distribution") => d.distribution = v.to_string(),
            ("data", "components") => d.components = value(line, key, v)?,
            ("data", "upper") => d.upper = value(line, key, v)?,
            ("data", "p_m") => d.p_m = value(line, key, v)?,
            ("data", "p_h0") => d.p_h0 = value(line, key, v)?,
            ("data", "p_h1") => d.p_h1 = value(line, key, v)?,
            ("data", "classes") => d.classes = value(line, key, v)?,
            ("data", "k") => d.k = value(line, key, v)?,
            ("data", "separation") => d.separation = value(line, key, v)?,
            ("data", "test_size") => d.test_size = value(line, key, v)?,
            ("data", "path") => d.path = optional(line, key, v)?,
            ("data", "seed") => d.seed = optional(line, key, v)?,
            ("method", "method") => self.method = parsed(line, v)?,
            ("method", "methods") => {
                self.methods = v
                    .split(',')
                    .map(|m| parsed(line, m.trim()))
                    .collect::<Result<_>>()?
            }
            ("solver", "gamma") => s.gamma = value(line, key, v)?,
            ("solver", "box") => s.box_bound = value(line, key, v)?,
            ("solver", "k_m") => s.k_m = optional(line, key, v)?,
            ("solver", "k_r") => s.k_r = optional(line, key, v)?,
            ("solver", "lambda") => s.lambda_reg = value(line, key, v)?,
            ("solver", "coverage") => s.coverage_beta = optional(line, key, v)?,
            ("solver", "groups") => self.groups = optional(line, key, v)?,
            ("solver", "time_limit") => s.time_limit_s = optional(line, key, v)?,
            ("solver", "abs_gap") => s.abs_gap = optional(line, key, v)?,
            ("solver", "heuristic") => s.heuristic = value(line, key, v)?,
            ("train", "epochs") => t.epochs = value(line, key, v)?,
            ("train", "batch_size") => t.batch_size = value(line, key, v)?,
            ("train", "lr") => t.learning_rate = value(line, key, v)?,
            ("train", "beta1") => t.beta1 = value(line, key, v)?,
            ("train", "beta2") => t.beta2 = value(line, key, v)?,
            ("train", "eps") => t.eps = value(line, key, v)?,
            ("train", "architecture") => t.architecture = parsed::<Architecture>(line, v)?,
            ("train", "alpha_grid") => t.alpha_grid = list(line, key, v)?,
            ("train", "val_fraction") => t.val_fraction = value(line, key, v)?,
            ("train", "seed") => self.train_seed = optional(line, key, v)?,
            ("eval", "trials") => e.trials = value(line, key, v)?,
            ("eval", "grid_size") => e.grid_size = value(line, key, v)?,
            ("eval", "jobs") => e.jobs = value(line, key, v)?,
            ("eval", "delta") => e.delta = value(line, key, v)?,
            ("eval", "svg") => e.svg = value(line, key, v)?,
            ("eval", "seed") => e.seed = optional(line, key, v)?,
            ("", _) => {
                return Err(Error::Parse {
                    line,
                    msg: format!("key {key:?} appears before any section"),
                })
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key {key:?} in [{section}]"),
                })
            }
        }
        Ok(())
    }

    /// Fills every unset seed with `global`.
    pub fn resolve_seeds(&mut self, global: u64) {
        self.data.seed.get_or_insert(global);
        self.train_seed.get_or_insert(global);
        self.eval.seed.get_or_insert(global);
        self.train.seed = self.train_seed.unwrap_or(global);
        self.solver.seed = self.train.seed;
    }

    /// Every key with its current value; parsing the output reproduces
    /// this config.
    pub fn render(&self) -> String {
        let d = &self.data;
        let s = &self.solver;
        let t = &self.train;
        let e = &self.eval;
        let mut o = String::new();
        let path = d.path.as_ref().map(|p| p.display().to_string());
        let groups = self.groups.as_ref().map(|p| p.display().to_string());
        let methods: Vec<String> = self.methods.iter().map(ToString::to_string).collect();
        let grid: Vec<String> = t.alpha_grid.iter().map(|a| format!("{a:?}")).collect();
        let _ = writeln!(o, "[data]");
        let _ = writeln!(o, "preset = {}", d.preset);
        let _ = writeln!(o, "dim = {}", d.dim);
        let _ = writeln!(o, "n = {}", d.n);
        let _ = writeln!(o, "distribution = {}", d.distribution);
        let _ = writeln!(o, "components = {}", d.components);
        let _ = writeln!(o, "upper = {:?}", d.upper);
        let _ = writeln!(o, "p_m = {:?}", d.p_m);
        let _ = writeln!(o, "p_h0 = {:?}", d.p_h0);
        let _ = writeln!(o, "p_h1 = {:?}", d.p_h1);
        let _ = writeln!(o, "classes = {}", d.classes);
        let _ = writeln!(o, "k = {}", d.k);
        let _ = writeln!(o, "separation = {:?}", d.separation);
        let _ = writeln!(o, "test_size = {}", d.test_size);
        let _ = writeln!(o, "path = {}", show(&path, "none"));
        let _ = writeln!(o, "seed = {}", show(&d.seed, "none"));
        let _ = writeln!(o, "\n[method]");
        let _ = writeln!(o, "method = {}", self.method);
        let _ = writeln!(o, "methods = {}", methods.join(","));
        let _ = writeln!(o, "\n[solver]");
        let _ = writeln!(o, "gamma = {:?}", s.gamma);
        let _ = writeln!(o, "box = {:?}", s.box_bound);
        let _ = writeln!(o, "k_m = {}", show(&s.k_m, "auto"));
        let _ = writeln!(o, "k_r = {}", show(&s.k_r, "auto"));
        let _ = writeln!(o, "lambda = {:?}", s.lambda_reg);
        let _ = writeln!(o, "coverage = {}", show(&s.coverage_beta, "none"));
        let _ = writeln!(o, "groups = {}", show(&groups, "none"));
        let _ = writeln!(o, "time_limit = {}", show(&s.time_limit_s, "none"));
        let _ = writeln!(o, "abs_gap = {}", show(&s.abs_gap, "auto"));
        let _ = writeln!(o, "heuristic = {}", s.heuristic);
        let _ = writeln!(o, "\n[train]");
        let _ = writeln!(o, "epochs = {}", t.epochs);
        let _ = writeln!(o, "batch_size = {}", t.batch_size);
        let _ = writeln!(o, "lr = {:?}", t.learning_rate);
        let _ = writeln!(o, "beta1 = {:?}", t.beta1);
        let _ = writeln!(o, "beta2 = {:?}", t.beta2);
        let _ = writeln!(o, "eps = {:?}", t.eps);
        let _ = writeln!(o, "architecture = {}", t.architecture);
        let _ = writeln!(o, "alpha_grid = {}", grid.join(","));
        let _ = writeln!(o, "val_fraction = {:?}", t.val_fraction);
        let _ = writeln!(o, "seed = {}", show(&self.train_seed, "none"));
        let _ = writeln!(o, "\n[eval]");
        let _ = writeln!(o, "trials = {}", e.trials);
        let _ = writeln!(o, "grid_size = {}", e.grid_size);
        let _ = writeln!(o, "jobs = {}", e.jobs);
        let _ = writeln!(o, "delta = {:?}", e.delta);
        let _ = writeln!(o, "svg = {}", e.svg);
        let _ = writeln!(o, "seed = {}", show(&e.seed, "none"));
        o
    }
}
