//! Benchmark MDPs: seeded random MDPs, the deterministic chain and its cliff
//! and duplicate-action variants, and a one-state bandit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::mdp::{objective, optimal_values, FiniteMdp, Policy, Successors};
use crate::table::Table;

/// Discount used by every benchmark environment.
pub const BENCHMARK_DISCOUNT: f64 = 0.99;

/// Number of copies of the walking action in the duplicate-action chain.
pub const DUPLICATE_WALK_COPIES: usize = 3;

const VALUE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub connectivity: usize,
    pub seed: u64,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        RandomMdpSpec {
            n_states: 100,
            n_actions: 4,
            connectivity: 2,
            seed: 0,
        }
    }
}

/// Random MDP: every `(s, a)` picks `connectivity` successors uniformly with
/// replacement and splits the unit interval at sorted uniform cut points.
/// Rewards are `U[0, 1]`, the start state is 0 and nothing terminates.
pub fn make_random_mdp(spec: &RandomMdpSpec) -> Result<FiniteMdp> {
    let RandomMdpSpec {
        n_states,
        n_actions,
        connectivity,
        seed,
    } = *spec;
    if n_states == 0 || n_actions == 0 || connectivity == 0 || connectivity > n_states {
        return Err(LabError::Config(format!(
            "random MDP needs 1 <= connectivity <= n_states, got {connectivity} / {n_states}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_states * n_actions);
    let mut rewards = Table::zeros(n_states, n_actions);
    for s in 0..n_states {
        for a in 0..n_actions {
            let targets: Vec<usize> = (0..connectivity).map(|_| rng.gen_range(0..n_states)).collect();
            let mut cuts: Vec<f64> = (1..connectivity).map(|_| rng.gen::<f64>()).collect();
            cuts.sort_by(f64::total_cmp);
            let mut succ: Successors = Vec::with_capacity(connectivity);
            let mut prev = 0.0;
            for (i, &next) in targets.iter().enumerate() {
                let end = cuts.get(i).copied().unwrap_or(1.0);
                let mass = end - prev;
                prev = end;
                match succ.iter_mut().find(|(n, _)| *n == next) {
                    Some(entry) => entry.1 += mass,
                    None => succ.push((next, mass)),
                }
            }
            transitions.push(succ);
            rewards[(s, a)] = rng.gen::<f64>();
        }
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    FiniteMdp::new(
        n_states,
        n_actions,
        transitions,
        rewards,
        BENCHMARK_DISCOUNT,
        initial,
        vec![false; n_states],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSpec {
    pub n_states: usize,
    pub beta: f64,
    pub duplicate_optimal: bool,
    pub cliff: bool,
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec {
            n_states: 10,
            beta: 0.8,
            duplicate_optimal: false,
            cliff: false,
        }
    }
}

impl ChainSpec {
    pub fn n_actions(&self) -> usize {
        let walks = if self.duplicate_optimal {
            DUPLICATE_WALK_COPIES
        } else {
            1
        };
        1 + walks + usize::from(self.cliff)
    }
}

/// Action that jumps straight to the terminal state.
pub const JUMP: usize = 0;
/// First action that walks one state to the right.
pub const WALK: usize = 1;

/// Deterministic chain `s0 → … → s_{n−1}` (terminal).
///
/// Action order: jump, walk (and its copies), then the cliff action if present.
/// Walking into the terminal state pays 1; jumping pays `β γ^{n−2}` from every
/// state, so at `s0` jumping is worth exactly `β` times walking.
pub fn make_chain(spec: &ChainSpec) -> Result<FiniteMdp> {
    let n = spec.n_states;
    if n < 3 {
        return Err(LabError::Config(format!("chain needs at least 3 states, got {n}")));
    }
    if !(spec.beta > 0.0 && spec.beta < 1.0) {
        return Err(LabError::Config(format!("beta must lie in (0, 1), got {}", spec.beta)));
    }
    let n_actions = spec.n_actions();
    let walks = n_actions - 1 - usize::from(spec.cliff);
    let gamma = BENCHMARK_DISCOUNT;
    let terminal_state = n - 1;
    let jump_reward = spec.beta * gamma.powi(n as i32 - 2);

    let mut transitions = Vec::with_capacity(n * n_actions);
    let mut rewards = Table::zeros(n, n_actions);
    for s in 0..n {
        for a in 0..n_actions {
            if s == terminal_state {
                transitions.push(Vec::new());
                continue;
            }
            let is_walk = (WALK..WALK + walks).contains(&a);
            if is_walk {
                transitions.push(vec![(s + 1, 1.0)]);
                if s + 1 == terminal_state {
                    rewards[(s, a)] = 1.0;
                }
            } else {
                transitions.push(vec![(terminal_state, 1.0)]);
                if a == JUMP {
                    rewards[(s, a)] = jump_reward;
                }
            }
        }
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let mut terminal = vec![false; n];
    terminal[terminal_state] = true;
    FiniteMdp::new(n, n_actions, transitions, rewards, gamma, initial, terminal)
}

/// One decision state whose actions all end the episode with reward `q[a]`.
/// State 1 is the terminal state.
pub fn make_bandit(q: &[f64]) -> Result<FiniteMdp> {
    let n_actions = q.len();
    let mut rewards = Table::zeros(2, n_actions);
    rewards.row_mut(0).copy_from_slice(q);
    let mut transitions = vec![vec![(1, 1.0)]; n_actions];
    transitions.extend(std::iter::repeat_n(Vec::new(), n_actions));
    FiniteMdp::new(
        2,
        n_actions,
        transitions,
        rewards,
        BENCHMARK_DISCOUNT,
        vec![1.0, 0.0],
        vec![false, true],
    )
}

/// `(J(π) − J(low)) / (J(high) − J(low))`.
pub fn normalized_performance(
    mdp: &FiniteMdp,
    pi: &Policy,
    low_ref: &Policy,
    high_ref: &Policy,
) -> Result<f64> {
    let scale = PerformanceScale::new(objective(mdp, low_ref)?, objective(mdp, high_ref)?)?;
    Ok(scale.normalize(objective(mdp, pi)?))
}

/// Precomputed reference objectives for repeated normalisation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerformanceScale {
    pub low: f64,
    pub high: f64,
}

impl PerformanceScale {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(high > low) {
            return Err(LabError::Config(format!(
                "reference policies have no gap: low {low}, high {high}"
            )));
        }
        Ok(PerformanceScale { low, high })
    }

    /// Uniform policy to optimal policy, used on random MDPs.
    pub fn uniform_to_optimal(mdp: &FiniteMdp) -> Result<Self> {
        let (_, best) = optimal_values(mdp, VALUE_TOL)?;
        let uniform = Policy::uniform(mdp.n_states(), mdp.n_actions());
        PerformanceScale::new(objective(mdp, &uniform)?, objective(mdp, &best)?)
    }

    /// Always-jump policy to optimal policy, used on chains and cliffs.
    pub fn jump_to_optimal(mdp: &FiniteMdp) -> Result<Self> {
        let (_, best) = optimal_values(mdp, VALUE_TOL)?;
        let jump = Policy::deterministic(&vec![JUMP; mdp.n_states()], mdp.n_actions());
        PerformanceScale::new(objective(mdp, &jump)?, objective(mdp, &best)?)
    }

    pub fn normalize(&self, j: f64) -> f64 {
        (j - self.low) / (self.high - self.low)
    }
}
