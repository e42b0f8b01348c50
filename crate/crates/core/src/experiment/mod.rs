//! Seeded sweeps of the Jekyll & Hyde agent over rules, learning rates and seeds.

mod aggregate;
mod output;
mod plot;

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::environments::{
    make_chain, make_random_mdp, ChainSpec, PerformanceScale, RandomMdpSpec,
};
use crate::error::{LabError, Result};
use crate::jekyll_hyde::{
    run_agent, RunOptions, Schedule, Schedules, Setting, DEFAULT_CRITIC_LR,
};
use crate::mdp::FiniteMdp;
use crate::parametrization::DEFAULT_ESCORT_P;
use crate::updates::{RuleKind, UpdateRule};

pub use aggregate::{aggregate, quantile, SummaryRow};
pub use output::{read_records, write_curves_csv, write_records_csv, write_summary_csv};
pub use plot::{emit_plot, render_svg};

fn default_random_states() -> usize {
    100
}
fn default_random_actions() -> usize {
    4
}
fn default_connectivity() -> usize {
    2
}
fn default_chain_states() -> usize {
    10
}
fn default_cliff_states() -> usize {
    7
}
fn default_beta() -> f64 {
    0.8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// A fresh random MDP per seed, generated from that seed.
    RandomMdp {
        #[serde(default = "default_random_states")]
        n_states: usize,
        #[serde(default = "default_random_actions")]
        n_actions: usize,
        #[serde(default = "default_connectivity")]
        connectivity: usize,
    },
    Chain {
        #[serde(default = "default_chain_states")]
        n_states: usize,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        duplicate_optimal: bool,
    },
    Cliff {
        #[serde(default = "default_cliff_states")]
        n_states: usize,
        #[serde(default = "default_beta")]
        beta: f64,
    },
}

impl EnvironmentSpec {
    pub fn label(&self) -> &'static str {
        match self {
            EnvironmentSpec::RandomMdp { .. } => "random-mdp",
            EnvironmentSpec::Chain { .. } => "chain",
            EnvironmentSpec::Cliff { .. } => "cliff",
        }
    }

    pub fn default_threshold(&self) -> f64 {
        match self {
            EnvironmentSpec::RandomMdp { .. } => 0.95,
            _ => 0.5,
        }
    }

    /// The MDP and its normalisation for one seed.
    pub fn build(&self, seed: u64) -> Result<(FiniteMdp, PerformanceScale)> {
        match *self {
            EnvironmentSpec::RandomMdp {
                n_states,
                n_actions,
                connectivity,
            } => {
                let mdp = make_random_mdp(&RandomMdpSpec {
                    n_states,
                    n_actions,
                    connectivity,
                    seed,
                })?;
                let scale = PerformanceScale::uniform_to_optimal(&mdp)?;
                Ok((mdp, scale))
            }
            EnvironmentSpec::Chain {
                n_states,
                beta,
                duplicate_optimal,
            } => {
                let mdp = make_chain(&ChainSpec {
                    n_states,
                    beta,
                    duplicate_optimal,
                    cliff: false,
                })?;
                let scale = PerformanceScale::jump_to_optimal(&mdp)?;
                Ok((mdp, scale))
            }
            EnvironmentSpec::Cliff { n_states, beta } => {
                let mdp = make_chain(&ChainSpec {
                    n_states,
                    beta,
                    duplicate_optimal: false,
                    cliff: true,
                })?;
                let scale = PerformanceScale::jump_to_optimal(&mdp)?;
                Ok((mdp, scale))
            }
        }
    }

    fn depends_on_seed(&self) -> bool {
        matches!(self, EnvironmentSpec::RandomMdp { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingSpec {
    Preset(Setting),
    Explicit {
        epsilon: Schedule,
        off_policy: Schedule,
    },
}

impl SettingSpec {
    pub fn label(&self) -> &'static str {
        match self {
            SettingSpec::Preset(s) => s.label(),
            SettingSpec::Explicit { .. } => "custom",
        }
    }

    fn schedules(&self, critic_lr: f64) -> Schedules {
        let (epsilon, off_policy) = match *self {
            SettingSpec::Preset(s) => s.schedules(),
            SettingSpec::Explicit {
                epsilon,
                off_policy,
            } => (epsilon, off_policy),
        };
        Schedules {
            epsilon,
            off_policy,
            critic_lr,
        }
    }
}

fn default_interval() -> u64 {
    100
}
fn default_critic_lr() -> f64 {
    DEFAULT_CRITIC_LR
}
fn default_escort_p() -> f64 {
    DEFAULT_ESCORT_P
}
fn default_seeds() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub setting: SettingSpec,
    /// Rule labels: `pg-sm`, `pg-es`, `di`, `ce`, `mce`.
    pub rules: Vec<String>,
    pub etas: Vec<f64>,
    pub total_steps: u64,
    #[serde(default = "default_interval")]
    pub checkpoint_interval: u64,
    /// Defaults to 0.95 on random MDPs and 0.5 on chains and cliffs.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_critic_lr")]
    pub critic_lr: f64,
    #[serde(default = "default_escort_p")]
    pub escort_p: f64,
    /// End each run once the threshold is crossed instead of running to `total_steps`.
    #[serde(default)]
    pub stop_on_threshold: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
            .unwrap_or_else(|| self.environment.default_threshold())
    }

    pub fn rule_kinds(&self) -> Result<Vec<RuleKind>> {
        self.rules
            .iter()
            .map(|r| RuleKind::from_label(r, self.escort_p))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if self.rules.is_empty() || self.etas.is_empty() || self.n_seeds == 0 {
            return bad("rules, etas and n_seeds must all be nonempty".into());
        }
        self.rule_kinds()?;
        if let Some(eta) = self.etas.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad(format!("learning rates must be positive, got {eta}"));
        }
        let t = self.threshold();
        if !(t > 0.0 && t < 1.0) {
            return bad(format!("threshold must lie in (0, 1), got {t}"));
        }
        if self.total_steps == 0 || self.checkpoint_interval == 0 {
            return bad("total_steps and checkpoint_interval must be positive".into());
        }
        if !(self.critic_lr > 0.0 && self.critic_lr <= 1.0) {
            return bad(format!("critic_lr must lie in (0, 1], got {}", self.critic_lr));
        }
        if !(self.escort_p > 0.0) {
            return bad(format!("escort_p must be positive, got {}", self.escort_p));
        }
        Ok(())
    }

    /// Number of runs in the sweep.
    pub fn n_runs(&self) -> usize {
        self.rules.len() * self.etas.len() * self.n_seeds
    }
}

/// One run of the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub rule: String,
    pub eta: f64,
    pub setting: String,
    pub env: String,
    /// Steps to threshold, or `total_steps` when censored.
    pub steps: u64,
    pub censored: bool,
    pub curve: Vec<(u64, f64)>,
}

struct Cell {
    rule: RuleKind,
    eta: f64,
    seed_index: usize,
}

/// Runs every `(rule, η, seed)` cell. Runs are ordered rule-major, then η,
/// then seed; the output order does not depend on the thread count.
///
/// Every cell with seed index `i` uses seed `base_seed + i`, so all rules and
/// learning rates face the same MDPs and agent randomness.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let rules = config.rule_kinds()?;
    let seeds: Vec<u64> = (0..config.n_seeds as u64)
        .map(|i| config.base_seed.wrapping_add(i))
        .collect();
    let environments: Vec<(FiniteMdp, PerformanceScale)> = if config.environment.depends_on_seed() {
        seeds
            .par_iter()
            .map(|&s| config.environment.build(s))
            .collect::<Result<_>>()?
    } else {
        vec![config.environment.build(config.base_seed)?]
    };
    let n_seeds = seeds.len();
    let cells: Vec<Cell> = rules
        .iter()
        .flat_map(|&rule| {
            config.etas.iter().flat_map(move |&eta| {
                (0..n_seeds).map(move |seed_index| Cell {
                    rule,
                    eta,
                    seed_index,
                })
            })
        })
        .collect();
    let schedules = config.setting.schedules(config.critic_lr);
    let options = RunOptions {
        total_steps: config.total_steps,
        checkpoint_interval: config.checkpoint_interval,
        threshold: config.threshold(),
        stop_on_threshold: config.stop_on_threshold,
    };
    cells
        .par_iter()
        .map(|cell| {
            let (mdp, scale) = &environments[cell.seed_index.min(environments.len() - 1)];
            let seed = seeds[cell.seed_index];
            let run = run_agent(
                mdp,
                scale,
                UpdateRule::new(cell.rule, cell.eta),
                schedules,
                &options,
                seed,
            )?;
            Ok(RunRecord {
                seed,
                rule: cell.rule.label().to_string(),
                eta: cell.eta,
                setting: config.setting.label().to_string(),
                env: config.environment.label().to_string(),
                steps: run.steps_to_threshold.unwrap_or(config.total_steps),
                censored: run.steps_to_threshold.is_none(),
                curve: run.curve,
            })
        })
        .collect()
}

/// Runs the sweep on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| run_sweep(config))
}
