//! Finite MDPs, exact policy evaluation and optimal values.
//!
//! Rewards are deterministic means `r(s, a)` paid on the transition out of `s`.
//! Terminal states have value zero and need no outgoing transitions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::table::Table;

const MASS_TOL: f64 = 1e-12;

/// Sparse successor list for one state-action pair.
pub type Successors = Vec<(usize, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Successors>,
    rewards: Table,
    discount: f64,
    initial_dist: Vec<f64>,
    terminal: Vec<bool>,
}

/// On-disk JSON layout. `transitions[s][a]` lists `[next_state, probability]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    initial_dist: Vec<f64>,
    terminal: Vec<bool>,
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Successors>>,
}

impl TryFrom<MdpDocument> for FiniteMdp {
    type Error = LabError;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        if doc.rewards.len() != doc.n_states || doc.transitions.len() != doc.n_states {
            return Err(LabError::InvalidMdp(
                "rewards/transitions must have one row per state".into(),
            ));
        }
        if doc
            .rewards
            .iter()
            .any(|r| r.len() != doc.n_actions)
            || doc.transitions.iter().any(|r| r.len() != doc.n_actions)
        {
            return Err(LabError::InvalidMdp(
                "rewards/transitions must have one column per action".into(),
            ));
        }
        FiniteMdp::new(
            doc.n_states,
            doc.n_actions,
            doc.transitions.into_iter().flatten().collect(),
            Table::from_rows(doc.rewards),
            doc.discount,
            doc.initial_dist,
            doc.terminal,
        )
    }
}

impl From<FiniteMdp> for MdpDocument {
    fn from(mdp: FiniteMdp) -> Self {
        let a = mdp.n_actions;
        let mut transitions = Vec::with_capacity(mdp.n_states);
        let mut flat = mdp.transitions.into_iter();
        for _ in 0..mdp.n_states {
            transitions.push(flat.by_ref().take(a).collect());
        }
        MdpDocument {
            n_states: mdp.n_states,
            n_actions: a,
            discount: mdp.discount,
            initial_dist: mdp.initial_dist,
            terminal: mdp.terminal,
            rewards: mdp.rewards.rows().map(<[f64]>::to_vec).collect(),
            transitions,
        }
    }
}

impl FiniteMdp {
    /// Builds and validates an MDP. `transitions` is indexed by `s * n_actions + a`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<Successors>,
        rewards: Table,
        discount: f64,
        initial_dist: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(LabError::InvalidMdp(msg));
        if n_states == 0 || n_actions == 0 {
            return invalid("need at least one state and one action".into());
        }
        if !(0.0..1.0).contains(&discount) {
            return invalid(format!("discount {discount} outside [0, 1)"));
        }
        if transitions.len() != n_states * n_actions {
            return invalid(format!(
                "expected {} transition lists, got {}",
                n_states * n_actions,
                transitions.len()
            ));
        }
        if rewards.n_rows() != n_states || rewards.n_cols() != n_actions {
            return invalid("reward table shape does not match".into());
        }
        if rewards.as_slice().iter().any(|r| !r.is_finite()) {
            return invalid("non-finite reward".into());
        }
        if initial_dist.len() != n_states || terminal.len() != n_states {
            return invalid("initial distribution / terminal flags length mismatch".into());
        }
        if initial_dist.iter().any(|&p| !(p >= 0.0))
            || (initial_dist.iter().sum::<f64>() - 1.0).abs() > MASS_TOL
        {
            return invalid("initial distribution is not a probability vector".into());
        }
        for s in 0..n_states {
            if terminal[s] {
                continue;
            }
            for a in 0..n_actions {
                let succ = &transitions[s * n_actions + a];
                if succ.iter().any(|&(n, p)| n >= n_states || !(p >= 0.0)) {
                    return invalid(format!("bad successor entry at ({s}, {a})"));
                }
                let mass: f64 = succ.iter().map(|&(_, p)| p).sum();
                if (mass - 1.0).abs() > MASS_TOL {
                    return invalid(format!("transition mass {mass} at ({s}, {a})"));
                }
            }
        }
        Ok(FiniteMdp {
            n_states,
            n_actions,
            transitions,
            rewards,
            discount,
            initial_dist,
            terminal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn has_terminal_states(&self) -> bool {
        self.terminal.iter().any(|&t| t)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[(s, a)]
    }

    pub fn rewards(&self) -> &Table {
        &self.rewards
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One Bellman backup `r(s,a) + γ Σ P(s'|s,a) v(s')`; zero at terminal states.
    pub fn backup(&self, v: &[f64]) -> Table {
        let mut q = Table::zeros(self.n_states, self.n_actions);
        for s in (0..self.n_states).filter(|&s| !self.terminal[s]) {
            for a in 0..self.n_actions {
                let future: f64 = self
                    .successors(s, a)
                    .iter()
                    .map(|&(n, p)| p * v[n])
                    .sum();
                q[(s, a)] = self.rewards[(s, a)] + self.discount * future;
            }
        }
        q
    }

    fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.n_states() != self.n_states || pi.n_actions() != self.n_actions {
            return Err(LabError::Shape(format!(
                "policy is {}x{}, MDP is {}x{}",
                pi.n_states(),
                pi.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// Per-state action distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    probs: Table,
}

impl Policy {
    pub fn new(probs: Table) -> Result<Self> {
        for (s, row) in probs.rows().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > MASS_TOL
            {
                return Err(LabError::InvalidPolicy(format!(
                    "row {s} is not a distribution: {row:?}"
                )));
            }
        }
        Ok(Policy { probs })
    }

    /// Skips validation; callers guarantee the rows are distributions.
    pub(crate) fn from_table_unchecked(probs: Table) -> Self {
        Policy { probs }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            probs: Table::filled(n_states, n_actions, 1.0 / n_actions as f64),
        }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = Table::zeros(actions.len(), n_actions);
        for (s, &a) in actions.iter().enumerate() {
            probs[(s, a)] = 1.0;
        }
        Policy { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.n_rows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.n_cols()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.probs.row(s)
    }

    pub fn table(&self) -> &Table {
        &self.probs
    }

    /// Most likely action per state (lowest index on ties).
    pub fn mode(&self) -> Vec<usize> {
        self.probs.rows().map(argmax_lowest).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunctions {
    pub v: Vec<f64>,
    pub q: Table,
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Exact evaluation: solves `(I − γ P_π) v = r_π` with a dense LU factorisation.
pub fn evaluate_policy(mdp: &FiniteMdp, pi: &Policy) -> Result<ValueFunctions> {
    mdp.check_policy(pi)?;
    let n = mdp.n_states;
    let gamma = mdp.discount;
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in (0..n).filter(|&s| !mdp.terminal[s]) {
        for a in 0..mdp.n_actions {
            let p_a = pi.prob(s, a);
            if p_a == 0.0 {
                continue;
            }
            rhs[s] += p_a * mdp.rewards[(s, a)];
            for &(next, p) in mdp.successors(s, a) {
                m[(s, next)] -= gamma * p_a * p;
            }
        }
    }
    let v = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LabError::InvalidMdp("singular evaluation system".into()))?;
    let mut v: Vec<f64> = v.iter().copied().collect();
    for s in (0..n).filter(|&s| mdp.terminal[s]) {
        v[s] = 0.0;
    }
    let q = mdp.backup(&v);
    Ok(ValueFunctions { v, q })
}

/// Discounted objective `p0 · v_π`.
pub fn objective(mdp: &FiniteMdp, pi: &Policy) -> Result<f64> {
    let vf = evaluate_policy(mdp, pi)?;
    Ok(mdp
        .initial_dist
        .iter()
        .zip(&vf.v)
        .map(|(p, v)| p * v)
        .sum())
}

/// Optimal values and a deterministic optimal policy.
///
/// Runs value iteration until the sup-norm residual drops below
/// `tol (1 − γ) / γ`, takes the greedy policy (lowest index on ties), then
/// polishes it with exact policy-iteration steps so that the returned values
/// are the exact values of the returned policy.
pub fn optimal_values(mdp: &FiniteMdp, tol: f64) -> Result<(ValueFunctions, Policy)> {
    if !(tol > 0.0) {
        return Err(LabError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let gamma = mdp.discount;
    let stop = if gamma > 0.0 {
        tol * (1.0 - gamma) / gamma
    } else {
        f64::INFINITY
    };
    let mut v = vec![0.0; mdp.n_states];
    loop {
        let q = mdp.backup(&v);
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|s| {
                if mdp.terminal[s] {
                    0.0
                } else {
                    q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let residual = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual < stop {
            break;
        }
    }

    let q = mdp.backup(&v);
    let mut actions: Vec<usize> = q.rows().map(argmax_lowest).collect();
    loop {
        let pi = Policy::deterministic(&actions, mdp.n_actions);
        let vf = evaluate_policy(mdp, &pi)?;
        let mut changed = false;
        for s in (0..mdp.n_states).filter(|&s| !mdp.terminal[s]) {
            let row = vf.q.row(s);
            let current = row[actions[s]];
            let slack = 1e-12 * (1.0 + current.abs());
            let best = argmax_lowest(row);
            if row[best] > current + slack {
                actions[s] = best;
                changed = true;
            } else {
                // lowest index among actions tied with the current one
                let tied = row.iter().position(|&x| x >= current - slack).unwrap_or(actions[s]);
                if tied != actions[s] {
                    actions[s] = tied;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok((vf, pi));
        }
    }
}
