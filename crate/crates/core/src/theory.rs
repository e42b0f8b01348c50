//! Executable analytical settings: unlearning, domino, gravity wells and
//! value monotonicity.
//!
//! Each driver measures a quantity and attaches the closed-form bound that the
//! corresponding analytical result predicts for it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::mdp::{evaluate_policy, FiniteMdp};
use crate::parametrization::{policy_of, row_policy, ParamKind, PolicyParams};
use crate::table::Table;
use crate::updates::{apply_update, argmax_action, update_row, RuleKind};

/// Slack on the probability comparisons that decide recovery and flips, so
/// that round-off in an exact return to the start does not count as a miss.
pub const RECOVERY_TOL: f64 = 1e-9;

/// Ties in the gravity-well test are counted as satisfying the condition.
pub const GRAVITY_TIE_TOL: f64 = 1e-12;

/// Domino step budget.
pub const DOMINO_BUDGET: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundDirection {
    /// measured ≥ bound
    AtLeast,
    /// measured ≤ ⌈bound⌉
    AtMost,
    /// measured = bound
    Exactly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub direction: BoundDirection,
}

impl Bound {
    fn at_least(value: f64) -> Self {
        Bound {
            value,
            direction: BoundDirection::AtLeast,
        }
    }

    fn at_most(value: f64) -> Self {
        Bound {
            value,
            direction: BoundDirection::AtMost,
        }
    }

    /// Whether a measurement (`None` = never reached within budget) breaks the bound.
    pub fn violated_by(&self, measured: Option<u64>) -> bool {
        match (self.direction, measured) {
            (BoundDirection::AtLeast, None) => false,
            (BoundDirection::AtLeast, Some(m)) => (m as f64) < self.value,
            (BoundDirection::AtMost, None) | (BoundDirection::Exactly, None) => true,
            (BoundDirection::AtMost, Some(m)) => (m as f64) > self.value.ceil(),
            (BoundDirection::Exactly, Some(m)) => (m as f64) != self.value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant { eta: f64 },
    /// `η_t = η1 / √t`, with `t` counted across both phases.
    Decaying { eta1: f64 },
}

impl StepSchedule {
    fn at(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Decaying { eta1 } => eta1 / (t as f64).sqrt(),
        }
    }

    pub fn eta(&self) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Decaying { eta1 } => eta1,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StepSchedule::Constant { .. } => "constant",
            StepSchedule::Decaying { .. } => "decaying",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnReport {
    pub rule: RuleKind,
    pub schedule: StepSchedule,
    pub n: u64,
    /// Reverse updates needed to get back to the start; `None` if the
    /// parameters stopped moving or the budget ran out first.
    pub n_prime: Option<u64>,
    pub bound: Bound,
    pub violated: bool,
}

/// Analytical bound on the recovery count for a rule and schedule.
pub fn unlearning_bound(rule: RuleKind, schedule: StepSchedule, n: u64) -> Bound {
    let nf = n as f64;
    let root = nf.sqrt();
    match (schedule, rule) {
        (StepSchedule::Constant { .. }, RuleKind::PgSm | RuleKind::PgEs { .. }) => Bound::at_least(nf),
        (StepSchedule::Constant { eta }, RuleKind::Di) => Bound {
            value: nf.min(ceil_inverse(eta)),
            direction: BoundDirection::Exactly,
        },
        (StepSchedule::Constant { eta }, RuleKind::Ce | RuleKind::Mce) => {
            Bound::at_most(2.0 + (1.0 + 2.0 * eta * nf).ln() / eta)
        }
        (StepSchedule::Decaying { .. }, RuleKind::PgSm | RuleKind::PgEs { .. }) => {
            Bound::at_least(3.0 * nf - 4.0 * root + 1.0)
        }
        (StepSchedule::Decaying { eta1 }, RuleKind::Di) => Bound::at_most(
            (3.0 * nf + 4.0 * root + 1.0)
                .min((1.0 / eta1 + 1.0).powi(2) + root * (2.0 + 2.0 / eta1)),
        ),
        (StepSchedule::Decaying { eta1 }, RuleKind::Ce | RuleKind::Mce) => {
            let log = (1.0 + 4.0 * eta1 * root).ln();
            Bound::at_most((4.0 + log / (2.0 * eta1)).powi(2) + root * (8.0 + log / eta1))
        }
    }
}

/// `⌈1/η⌉`, ignoring round-off in `1/η` itself.
fn ceil_inverse(eta: f64) -> f64 {
    let inv = 1.0 / eta;
    let nearest = inv.round();
    if (inv - nearest).abs() < 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        inv.ceil()
    }
}

fn unlearning_budget(n: u64) -> u64 {
    (100 * n).max(10_000_000)
}

/// One state, two actions, uniform start. `n` updates with `q = (1, 0)`, then
/// updates with `q = (0, 1)` until `π(a1) ≤ π0(a1)`.
pub fn run_unlearning(rule: RuleKind, schedule: StepSchedule, n: u64) -> Result<UnlearnReport> {
    if !(schedule.eta() > 0.0) {
        return Err(LabError::Config("learning rate must be positive".into()));
    }
    let kind = rule.param_kind();
    let start = rule.initial_params(1, 2);
    let mut row = start.row(0).to_vec();
    let start_prob = first_prob(kind, &row)?;
    let forward = [1.0, 0.0];
    let backward = [0.0, 1.0];
    for t in 1..=n {
        row = update_row(rule, &row, &forward, schedule.at(t))?;
    }
    let mut n_prime = None;
    let budget = unlearning_budget(n);
    for k in 1..=budget {
        let next = update_row(rule, &row, &backward, schedule.at(n + k))?;
        if next == row {
            break;
        }
        row = next;
        if first_prob(kind, &row)? <= start_prob + RECOVERY_TOL {
            n_prime = Some(k);
            break;
        }
    }
    let bound = unlearning_bound(rule, schedule, n);
    Ok(UnlearnReport {
        rule,
        schedule,
        n,
        n_prime,
        bound,
        violated: bound.violated_by(n_prime),
    })
}

fn first_prob(kind: ParamKind, row: &[f64]) -> Result<f64> {
    row_policy(kind, row)
        .map(|p| p[0])
        .ok_or(LabError::DegenerateParameters { state: 0 })
}

/// How a successor counts as flipped in the domino construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlipCriterion {
    /// `π_t(a2|s) ≥ π0(a2|s)` once updates have started: the recovery test of
    /// the unlearning setting.
    Recovered,
    /// `π_t(a2|s) > π0(a2|s)`.
    Strict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominoReport {
    pub rule: RuleKind,
    pub eta: f64,
    pub chain_length: usize,
    /// `None` when the budget was exhausted.
    pub steps_to_solve: Option<u64>,
    /// `None` where the analytical formula does not apply.
    pub bound: Option<Bound>,
    pub violated: bool,
}

pub fn domino_bound(rule: RuleKind, eta: f64, chain_length: usize) -> Option<Bound> {
    let links = (chain_length - 1) as f64;
    match rule {
        RuleKind::PgSm | RuleKind::PgEs { .. } => Some(Bound::at_least(2f64.powf(links))),
        // one recovery of at most ⌈1/η⌉ steps per link
        RuleKind::Di => Some(Bound::at_most(1.0 + links * ceil_inverse(eta))),
        RuleKind::Ce | RuleKind::Mce => (chain_length >= 3).then(|| {
            Bound::at_most(32.0 * (8.0 * eta + 3.0).exp() / eta.powi(3) * links * links.ln())
        }),
    }
}

/// Domino chain with the default flip criterion and budget.
pub fn run_domino(rule: RuleKind, eta: f64, chain_length: usize) -> Result<DominoReport> {
    run_domino_with(rule, eta, chain_length, FlipCriterion::Recovered, DOMINO_BUDGET)
}

/// Chain of two-action states updated synchronously with unit weights. The
/// last state always has `q = (0, 1)`; every other state gets `q = (0, 1)`
/// once its successor has flipped and `q = (1, 0)` before. Solved when the
/// first state itself meets the flip test.
///
/// In practice updates will not flip this way; the construction isolates how
/// slow unlearning compounds along a decision chain.
pub fn run_domino_with(
    rule: RuleKind,
    eta: f64,
    chain_length: usize,
    criterion: FlipCriterion,
    budget: u64,
) -> Result<DominoReport> {
    if chain_length < 2 {
        return Err(LabError::Config("domino chain needs at least 2 states".into()));
    }
    if !(eta > 0.0) {
        return Err(LabError::Config("learning rate must be positive".into()));
    }
    let kind = rule.param_kind();
    let mut rows: Vec<Vec<f64>> = vec![rule.initial_params(1, 2).row(0).to_vec(); chain_length];
    let start_prob = second_prob(kind, &rows[0])?;
    let flipped = |row: &[f64], t: u64| -> Result<bool> {
        let p = second_prob(kind, row)?;
        Ok(match criterion {
            FlipCriterion::Recovered => t > 0 && p >= start_prob - RECOVERY_TOL,
            FlipCriterion::Strict => p > start_prob + RECOVERY_TOL,
        })
    };
    let good = [0.0, 1.0];
    let bad = [1.0, 0.0];
    let mut steps = None;
    for t in 0..budget {
        let status: Vec<bool> = rows
            .iter()
            .map(|r| flipped(r, t))
            .collect::<Result<_>>()?;
        let mut next = Vec::with_capacity(chain_length);
        for k in 0..chain_length {
            let successor_flipped = k + 1 == chain_length || status[k + 1];
            let q = if successor_flipped { &good } else { &bad };
            next.push(update_row(rule, &rows[k], q, eta)?);
        }
        rows = next;
        if flipped(&rows[0], t + 1)? {
            steps = Some(t + 1);
            break;
        }
    }
    let bound = domino_bound(rule, eta, chain_length);
    Ok(DominoReport {
        rule,
        eta,
        chain_length,
        steps_to_solve: steps,
        bound,
        violated: bound.is_some_and(|b| b.violated_by(steps)),
    })
}

fn second_prob(kind: ParamKind, row: &[f64]) -> Result<f64> {
    row_policy(kind, row)
        .map(|p| p[1])
        .ok_or(LabError::DegenerateParameters { state: 0 })
}

/// True iff the action maximising `q` receives the largest probability
/// increase under one update of the single-state parameters `theta_row`.
pub fn check_gravity_condition(rule: RuleKind, theta_row: &[f64], q_row: &[f64], eta: f64) -> Result<bool> {
    let kind = rule.param_kind();
    let params = PolicyParams::new(Table::from_rows(vec![theta_row.to_vec()]), kind)?;
    if q_row.len() != params.n_actions() {
        return Err(LabError::Shape("q row and parameter row differ in length".into()));
    }
    let before = params.policy_row(0)?;
    let after_row = update_row(rule, params.row(0), q_row, eta)?;
    let after = row_policy(kind, &after_row).ok_or(LabError::DegenerateParameters { state: 0 })?;
    let gains: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    let best_gain = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(gains[argmax_action(q_row)] >= best_gain - GRAVITY_TIE_TOL)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub v_before: Vec<f64>,
    pub v_after: Vec<f64>,
    pub delta_v: Vec<f64>,
    pub monotone: bool,
}

/// One update with the exact q-function of the current policy; monotone iff no
/// state value drops by more than `1e-10`.
pub fn check_value_monotonicity(
    mdp: &FiniteMdp,
    rule: RuleKind,
    params: &PolicyParams,
    d: &[f64],
    eta: f64,
) -> Result<MonotonicityReport> {
    let before = evaluate_policy(mdp, &policy_of(params)?)?;
    let next = apply_update(rule, params, d, &before.q, eta)?;
    let after = evaluate_policy(mdp, &policy_of(&next)?)?;
    let delta_v: Vec<f64> = after.v.iter().zip(&before.v).map(|(a, b)| a - b).collect();
    let monotone = delta_v.iter().all(|&x| x >= -1e-10);
    Ok(MonotonicityReport {
        v_before: before.v,
        v_after: after.v,
        delta_v,
        monotone,
    })
}

/// One line of a theory report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub setting: String,
    pub rule: String,
    pub eta: f64,
    pub n_or_s: u64,
    pub measured: Option<u64>,
    pub bound: Option<f64>,
    pub violated: bool,
}

impl From<&UnlearnReport> for TheoryRow {
    fn from(r: &UnlearnReport) -> Self {
        TheoryRow {
            setting: format!("unlearn-{}", r.schedule.label()),
            rule: r.rule.label().to_string(),
            eta: r.schedule.eta(),
            n_or_s: r.n,
            measured: r.n_prime,
            bound: Some(r.bound.value),
            violated: r.violated,
        }
    }
}

impl From<&DominoReport> for TheoryRow {
    fn from(r: &DominoReport) -> Self {
        TheoryRow {
            setting: "domino".to_string(),
            rule: r.rule.label().to_string(),
            eta: r.eta,
            n_or_s: r.chain_length as u64,
            measured: r.steps_to_solve,
            bound: r.bound.map(|b| b.value),
            violated: r.violated,
        }
    }
}

/// Writes rows as CSV with header `setting,rule,eta,n_or_S,measured,bound,violated`.
pub fn write_theory_csv<W: Write>(rows: &[TheoryRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["setting", "rule", "eta", "n_or_S", "measured", "bound", "violated"])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
