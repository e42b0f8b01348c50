//! The Jekyll & Hyde agent.
//!
//! Jekyll is an actor-critic exploiter: an expected-SARSA critic `q̊` and an
//! actor updated with one of the five update rules. Hyde is an explorer that
//! runs Q-learning on the count-based reward `1/√n(s,a)` and acts greedily.
//! At each episode start Hyde takes control with probability `ε_t`; each
//! update draws a transition from Hyde's buffer with probability `o_t` and
//! from Jekyll's buffer otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environments::PerformanceScale;
use crate::error::{LabError, Result};
use crate::mdp::{objective, FiniteMdp};
use crate::parametrization::{policy_of, PolicyParams};
use crate::table::Table;
use crate::updates::{expected_actor_update_in_place, UpdateRule};

/// Critic (and Hyde) learning rate.
pub const DEFAULT_CRITIC_LR: f64 = 0.1;

/// RNG stream reserved for the agent; stream 0 is left to environment generation.
pub const AGENT_STREAM: u64 = 1;

/// A `[0, 1]`-valued function of the global step counter `t ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    Constant { value: f64 },
    /// `min{1, scale / √t}`.
    InvSqrt { scale: f64 },
}

impl Schedule {
    pub fn at(&self, t: u64) -> f64 {
        let raw = match *self {
            Schedule::Constant { value } => value,
            Schedule::InvSqrt { scale } => scale / (t.max(1) as f64).sqrt(),
        };
        raw.clamp(0.0, 1.0)
    }
}

/// The three exploration / off-policy presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    NoExplo,
    LowOffPol,
    HiOffPol,
}

impl Setting {
    /// `(ε_t, o_t)`.
    pub fn schedules(&self) -> (Schedule, Schedule) {
        let decaying = Schedule::InvSqrt { scale: 10.0 };
        match self {
            Setting::NoExplo => (Schedule::Constant { value: 0.0 }, Schedule::Constant { value: 0.0 }),
            Setting::LowOffPol => (decaying, decaying),
            Setting::HiOffPol => (decaying, Schedule::Constant { value: 0.5 }),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Setting::NoExplo => "no-explo",
            Setting::LowOffPol => "low-off-pol",
            Setting::HiOffPol => "hi-off-pol",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label.to_ascii_lowercase().as_str() {
            "no-explo" | "noexplo" => Ok(Setting::NoExplo),
            "low-off-pol" | "lowoffpol" => Ok(Setting::LowOffPol),
            "hi-off-pol" | "hioffpol" => Ok(Setting::HiOffPol),
            other => Err(LabError::Config(format!("unknown exploration setting '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedules {
    pub epsilon: Schedule,
    pub off_policy: Schedule,
    pub critic_lr: f64,
}

impl Schedules {
    pub fn from_setting(setting: Setting) -> Self {
        let (epsilon, off_policy) = setting.schedules();
        Schedules {
            epsilon,
            off_policy,
            critic_lr: DEFAULT_CRITIC_LR,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    /// True only when `next_state` is a terminal state of the MDP. Episodes cut
    /// short by the geometric horizon still bootstrap.
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Personality {
    Jekyll,
    Hyde,
}

#[derive(Clone, Debug)]
pub struct AgentState {
    pub actor: PolicyParams,
    pub critic: Table,
    pub hyde_q: Table,
    pub visits: Vec<u64>,
    pub jekyll_buffer: Vec<Transition>,
    pub hyde_buffer: Vec<Transition>,
    pub in_control: Personality,
    pub state: usize,
    pub t: u64,
    rule: UpdateRule,
    schedules: Schedules,
    rng: ChaCha8Rng,
}

fn sample_index(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64> + Clone) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

impl AgentState {
    pub fn new(mdp: &FiniteMdp, rule: UpdateRule, schedules: Schedules, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(AGENT_STREAM);
        let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
        let mut agent = AgentState {
            actor: rule.kind.initial_params(n_s, n_a),
            critic: Table::zeros(n_s, n_a),
            hyde_q: Table::zeros(n_s, n_a),
            visits: vec![0; n_s * n_a],
            jekyll_buffer: Vec::new(),
            hyde_buffer: Vec::new(),
            in_control: Personality::Jekyll,
            state: 0,
            t: 0,
            rule,
            schedules,
            rng,
        };
        agent.state = sample_index(&mut agent.rng, mdp.initial_dist().iter().copied());
        agent
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.critic.n_cols() + a]
    }

    fn start_episode(&mut self, mdp: &FiniteMdp) {
        self.state = sample_index(&mut self.rng, mdp.initial_dist().iter().copied());
        let eps = self.schedules.epsilon.at(self.t.max(1));
        self.in_control = if self.rng.gen::<f64>() < eps {
            Personality::Hyde
        } else {
            Personality::Jekyll
        };
    }

    /// Greedy on `Q̃` with uniform tie-breaking. An action never tried in `s`
    /// has an unbounded count bonus `1/√0`, so untried actions come first.
    fn hyde_action(&mut self, s: usize) -> usize {
        let n_a = self.hyde_q.n_cols();
        let untried: Vec<usize> = (0..n_a).filter(|&a| self.visits[s * n_a + a] == 0).collect();
        if !untried.is_empty() {
            return untried[self.rng.gen_range(0..untried.len())];
        }
        let row = self.hyde_q.row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..row.len()).filter(|&a| row[a] == best).collect();
        if ties.len() == 1 {
            ties[0]
        } else {
            ties[self.rng.gen_range(0..ties.len())]
        }
    }

    /// Acts once in the environment with the personality in control.
    pub fn behavior_step(&mut self, mdp: &FiniteMdp) -> Result<Transition> {
        self.t += 1;
        let s = self.state;
        let action = match self.in_control {
            Personality::Jekyll => {
                let pi = self.actor.policy_row(s)?;
                sample_index(&mut self.rng, pi.into_iter())
            }
            Personality::Hyde => self.hyde_action(s),
        };
        let succ = mdp.successors(s, action);
        let next_state = succ[sample_index(&mut self.rng, succ.iter().map(|x| x.1))].0;
        let terminal = mdp.is_terminal(next_state);
        let tr = Transition {
            state: s,
            action,
            next_state,
            reward: mdp.reward(s, action),
            terminal,
        };
        self.visits[s * mdp.n_actions() + action] += 1;
        match self.in_control {
            Personality::Jekyll => self.jekyll_buffer.push(tr),
            Personality::Hyde => self.hyde_buffer.push(tr),
        }
        let truncated =
            !mdp.has_terminal_states() && self.rng.gen::<f64>() >= mdp.discount();
        if terminal || truncated {
            self.start_episode(mdp);
        } else {
            self.state = next_state;
        }
        Ok(tr)
    }

    /// One critic, explorer and actor update from a replayed transition.
    pub fn update_step(&mut self, mdp: &FiniteMdp) -> Result<()> {
        let use_hyde = self.rng.gen::<f64>() < self.schedules.off_policy.at(self.t.max(1));
        let buffer = match (use_hyde, self.hyde_buffer.is_empty(), self.jekyll_buffer.is_empty()) {
            (_, true, true) => return Ok(()),
            (true, false, _) | (false, false, true) => &self.hyde_buffer,
            _ => &self.jekyll_buffer,
        };
        let tr = buffer[self.rng.gen_range(0..buffer.len())];
        let gamma = mdp.discount();
        let lr = self.schedules.critic_lr;
        let (s, a, next) = (tr.state, tr.action, tr.next_state);

        let bonus = 1.0 / (self.visits(s, a) as f64).sqrt();
        let explore_future = if tr.terminal {
            0.0
        } else {
            self.hyde_q.row(next).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        self.hyde_q[(s, a)] += lr * (bonus + gamma * explore_future - self.hyde_q[(s, a)]);

        let future = if tr.terminal {
            0.0
        } else {
            let pi = self.actor.policy_row(next)?;
            pi.iter().zip(self.critic.row(next)).map(|(p, q)| p * q).sum()
        };
        self.critic[(s, a)] += lr * (tr.reward + gamma * future - self.critic[(s, a)]);

        let q_row = self.critic.row(s).to_vec();
        expected_actor_update_in_place(self.rule.kind, &mut self.actor, s, &q_row, self.rule.eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub total_steps: u64,
    pub checkpoint_interval: u64,
    pub threshold: f64,
    /// End the run at the first checkpoint that crosses the threshold.
    pub stop_on_threshold: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentRun {
    /// First checkpoint step with `J̄ ≥ threshold`, if any.
    pub steps_to_threshold: Option<u64>,
    /// `(step, J̄)` at every checkpoint.
    pub curve: Vec<(u64, f64)>,
}

/// Runs the agent for `total_steps` (one behaviour step and one update each),
/// evaluating Jekyll's policy exactly every `checkpoint_interval` steps.
pub fn run_agent(
    mdp: &FiniteMdp,
    scale: &PerformanceScale,
    rule: UpdateRule,
    schedules: Schedules,
    options: &RunOptions,
    seed: u64,
) -> Result<AgentRun> {
    if options.checkpoint_interval == 0 {
        return Err(LabError::Config("checkpoint interval must be positive".into()));
    }
    let mut agent = AgentState::new(mdp, rule, schedules, seed);
    let mut curve = Vec::new();
    let mut crossed = None;
    for step in 1..=options.total_steps {
        agent.behavior_step(mdp)?;
        agent.update_step(mdp)?;
        if step % options.checkpoint_interval == 0 {
            let jbar = scale.normalize(objective(mdp, &policy_of(&agent.actor)?)?);
            curve.push((step, jbar));
            if crossed.is_none() && jbar >= options.threshold {
                crossed = Some(step);
                if options.stop_on_threshold {
                    break;
                }
            }
        }
    }
    Ok(AgentRun {
        steps_to_threshold: crossed,
        curve,
    })
}
