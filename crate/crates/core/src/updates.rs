//! The five actor update operators `θ' = U(θ, d, q, η)`.
//!
//! | rule    | parametrization | per-state step                                   |
//! |---------|-----------------|--------------------------------------------------|
//! | `PgSm`  | softmax         | `η d π(a) adv(a)`                                |
//! | `PgEs`  | escort(p)       | `η d sign(θ_a) (p/‖θ‖_p) π(a)^{1−1/p} adv(a)`     |
//! | `Di`    | direct          | `proj(θ + η d q)`                                |
//! | `Ce`    | softmax         | `η d (1[a = a_q] − π(a))`                        |
//! | `Mce`   | softmax         | `+η d (1 − π(a_q))` on `a_q`, split evenly off the rest |
//!
//! Ties in `a_q = argmax q` go to the lowest action index.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::parametrization::{escort_factors, project_simplex, row_policy, ParamKind, PolicyParams};
use crate::table::Table;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum RuleKind {
    PgSm,
    PgEs { p: f64 },
    Di,
    Ce,
    Mce,
}

impl RuleKind {
    /// Parametrization this rule operates on.
    pub fn param_kind(&self) -> ParamKind {
        match *self {
            RuleKind::PgSm | RuleKind::Ce | RuleKind::Mce => ParamKind::Softmax,
            RuleKind::PgEs { p } => ParamKind::Escort { p },
            RuleKind::Di => ParamKind::Direct,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RuleKind::PgSm => "pg-sm",
            RuleKind::PgEs { .. } => "pg-es",
            RuleKind::Di => "di",
            RuleKind::Ce => "ce",
            RuleKind::Mce => "mce",
        }
    }

    /// Parses a label such as `pg-sm` or `mce`; escort rules take `escort_p`.
    pub fn from_label(label: &str, escort_p: f64) -> Result<Self> {
        match label.to_ascii_lowercase().as_str() {
            "pg-sm" | "pgsm" => Ok(RuleKind::PgSm),
            "pg-es" | "pges" => Ok(RuleKind::PgEs { p: escort_p }),
            "di" => Ok(RuleKind::Di),
            "ce" => Ok(RuleKind::Ce),
            "mce" => Ok(RuleKind::Mce),
            other => Err(LabError::Config(format!("unknown update rule '{other}'"))),
        }
    }

    pub fn all(escort_p: f64) -> [RuleKind; 5] {
        [
            RuleKind::PgSm,
            RuleKind::PgEs { p: escort_p },
            RuleKind::Di,
            RuleKind::Ce,
            RuleKind::Mce,
        ]
    }

    pub fn initial_params(&self, n_states: usize, n_actions: usize) -> PolicyParams {
        PolicyParams::uniform(self.param_kind(), n_states, n_actions)
    }

    fn check(&self, params: &PolicyParams) -> Result<()> {
        if self.param_kind() != params.kind() {
            return Err(LabError::IncompatibleRule {
                rule: self.label().to_string(),
                kind: params.kind().to_string(),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for RuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A rule together with its (constant) actor learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRule {
    pub kind: RuleKind,
    pub eta: f64,
}

impl UpdateRule {
    pub fn new(kind: RuleKind, eta: f64) -> Self {
        UpdateRule { kind, eta }
    }

    pub fn apply(&self, params: &PolicyParams, d: &[f64], q: &Table) -> Result<PolicyParams> {
        apply_update(self.kind, params, d, q, self.eta)
    }
}

/// Lowest index among the maximisers of `q_row`.
pub fn argmax_action(q_row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &x) in q_row.iter().enumerate().skip(1) {
        if x > q_row[best] {
            best = a;
        }
    }
    best
}

/// New parameter row for one state with weight `w = η d(s)`.
pub(crate) fn update_row(kind: RuleKind, row: &[f64], q_row: &[f64], w: f64) -> Result<Vec<f64>> {
    let n = row.len();
    let degenerate = || LabError::DegenerateParameters { state: usize::MAX };
    if let RuleKind::Di = kind {
        let moved: Vec<f64> = row.iter().zip(q_row).map(|(t, q)| t + w * q).collect();
        return Ok(project_simplex(&moved));
    }
    let pi = row_policy(kind.param_kind(), row).ok_or_else(degenerate)?;
    let step: Vec<f64> = match kind {
        RuleKind::PgSm => {
            let mean: f64 = pi.iter().zip(q_row).map(|(p, q)| p * q).sum();
            (0..n).map(|a| w * pi[a] * (q_row[a] - mean)).collect()
        }
        RuleKind::PgEs { p } => {
            let mean: f64 = pi.iter().zip(q_row).map(|(p, q)| p * q).sum();
            let factors = escort_factors(row, p).ok_or_else(degenerate)?;
            (0..n).map(|a| w * factors[a] * (q_row[a] - mean)).collect()
        }
        RuleKind::Ce => {
            let best = argmax_action(q_row);
            (0..n)
                .map(|a| w * (if a == best { 1.0 } else { 0.0 } - pi[a]))
                .collect()
        }
        RuleKind::Mce => {
            let best = argmax_action(q_row);
            let gain = w * (1.0 - pi[best]);
            let penalty = if n > 1 { gain / (n - 1) as f64 } else { 0.0 };
            (0..n)
                .map(|a| if a == best { gain } else { -penalty })
                .collect()
        }
        RuleKind::Di => unreachable!(),
    };
    Ok(row.iter().zip(step).map(|(t, dt)| t + dt).collect())
}

fn fix_state(err: LabError, s: usize) -> LabError {
    match err {
        LabError::DegenerateParameters { .. } => LabError::DegenerateParameters { state: s },
        other => other,
    }
}

/// Applies one update to every state, weighting state `s` by `η d(s)`.
pub fn apply_update(
    kind: RuleKind,
    params: &PolicyParams,
    d: &[f64],
    q: &Table,
    eta: f64,
) -> Result<PolicyParams> {
    kind.check(params)?;
    let (n_s, n_a) = (params.n_states(), params.n_actions());
    if d.len() != n_s || q.n_rows() != n_s || q.n_cols() != n_a {
        return Err(LabError::Shape(format!(
            "params {n_s}x{n_a}, d has {} entries, q is {}x{}",
            d.len(),
            q.n_rows(),
            q.n_cols()
        )));
    }
    if d.iter().any(|&w| !(w >= 0.0)) {
        return Err(LabError::Config("state weights must be nonnegative".into()));
    }
    let mut theta = params.theta.clone();
    for (s, &weight) in d.iter().enumerate() {
        let row = update_row(kind, params.row(s), q.row(s), eta * weight).map_err(|e| fix_state(e, s))?;
        theta.row_mut(s).copy_from_slice(&row);
    }
    Ok(PolicyParams {
        theta,
        kind: params.kind,
    })
}

/// Expected actor update at a single sampled state, with `d(s) = 1` and all
/// other rows untouched.
pub fn expected_actor_update(
    kind: RuleKind,
    params: &PolicyParams,
    s: usize,
    q_row: &[f64],
    eta: f64,
) -> Result<PolicyParams> {
    let mut out = params.clone();
    expected_actor_update_in_place(kind, &mut out, s, q_row, eta)?;
    Ok(out)
}

/// In-place variant used by the agent's inner loop.
pub fn expected_actor_update_in_place(
    kind: RuleKind,
    params: &mut PolicyParams,
    s: usize,
    q_row: &[f64],
    eta: f64,
) -> Result<()> {
    kind.check(params)?;
    if s >= params.n_states() || q_row.len() != params.n_actions() {
        return Err(LabError::Shape(format!(
            "state {s} / critic row of length {} for {}x{} parameters",
            q_row.len(),
            params.n_states(),
            params.n_actions()
        )));
    }
    let row = update_row(kind, params.row(s), q_row, eta).map_err(|e| fix_state(e, s))?;
    params.theta.row_mut(s).copy_from_slice(&row);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parametrization::policy_of;

    fn one_state(kind: ParamKind, row: &[f64]) -> PolicyParams {
        PolicyParams::new(Table::from_rows(vec![row.to_vec()]), kind).unwrap()
    }

    fn q1(row: &[f64]) -> Table {
        Table::from_rows(vec![row.to_vec()])
    }

    #[test]
    fn pgsm_two_action_step() {
        let p = one_state(ParamKind::Softmax, &[0.0, 0.0]);
        let next = apply_update(RuleKind::PgSm, &p, &[1.0], &q1(&[1.0, 0.0]), 1.0).unwrap();
        assert!((next.row(0)[0] - 0.25).abs() < 1e-15);
        assert!((next.row(0)[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_q_leaves_pg_unchanged_but_moves_ce() {
        let q = q1(&[0.3, 0.3, 0.3]);
        let sm = one_state(ParamKind::Softmax, &[0.1, -0.4, 0.9]);
        let es = one_state(ParamKind::Escort { p: 2.0 }, &[0.1, -0.4, 0.9]);
        let after = apply_update(RuleKind::PgSm, &sm, &[1.0], &q, 1.0).unwrap();
        assert!(after.theta().max_abs_diff(sm.theta()) < 1e-15);
        let after = apply_update(RuleKind::PgEs { p: 2.0 }, &es, &[1.0], &q, 1.0).unwrap();
        assert!(after.theta().max_abs_diff(es.theta()) < 1e-15);

        let ce = apply_update(RuleKind::Ce, &sm, &[1.0], &q, 1.0).unwrap();
        assert!(ce.row(0)[0] > sm.row(0)[0]);
        assert!(ce.row(0)[1] < sm.row(0)[1] && ce.row(0)[2] < sm.row(0)[2]);
        let mce = apply_update(RuleKind::Mce, &sm, &[1.0], &q, 1.0).unwrap();
        assert!(mce.row(0)[0] > sm.row(0)[0]);
    }

    #[test]
    fn ce_counterexample_step() {
        let p = one_state(ParamKind::Softmax, &[10.0, 0.0, 0.0]);
        let next = apply_update(RuleKind::Ce, &p, &[1.0], &q1(&[0.99, 1.0, 0.0]), 1.0).unwrap();
        let expected = [9.0, 1.0, 0.0];
        for (a, e) in next.row(0).iter().zip(expected) {
            assert!((a - e).abs() < 1e-3, "{:?}", next.row(0));
        }
    }

    #[test]
    fn mce_equals_ce_with_two_actions() {
        let p = one_state(ParamKind::Softmax, &[0.7, -1.3]);
        for q in [[1.0, 0.0], [0.0, 1.0], [0.2, 0.2]] {
            let ce = apply_update(RuleKind::Ce, &p, &[0.8], &q1(&q), 1.5).unwrap();
            let mce = apply_update(RuleKind::Mce, &p, &[0.8], &q1(&q), 1.5).unwrap();
            assert!(ce.theta().max_abs_diff(mce.theta()) < 1e-15);
        }
    }

    #[test]
    fn expected_update_pgsm_three_actions() {
        let p = PolicyParams::uniform(ParamKind::Softmax, 2, 3);
        let next = expected_actor_update(RuleKind::PgSm, &p, 1, &[1.0, 0.0, 0.0], 0.9).unwrap();
        let expected = [2.0 / 9.0, -1.0 / 9.0, -1.0 / 9.0];
        for (a, e) in next.row(1).iter().zip(expected) {
            assert!((a - 0.9 * e).abs() < 1e-15);
        }
        assert_eq!(next.row(0), p.row(0));
    }

    #[test]
    fn expected_update_matches_indicator_weights() {
        let theta = Table::from_rows(vec![vec![0.2, 0.5, -0.1], vec![1.0, 0.0, 0.3]]);
        let q = Table::from_rows(vec![vec![0.1, 0.7, 0.3], vec![0.9, 0.2, 0.4]]);
        for kind in RuleKind::all(2.0) {
            let start = match kind.param_kind() {
                ParamKind::Direct => PolicyParams::new(
                    Table::from_rows(vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]]),
                    ParamKind::Direct,
                )
                .unwrap(),
                pk => PolicyParams::new(theta.clone(), pk).unwrap(),
            };
            let a = expected_actor_update(kind, &start, 1, q.row(1), 0.7).unwrap();
            let b = apply_update(kind, &start, &[0.0, 1.0], &q, 0.7).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn di_with_huge_step_reaches_vertex() {
        let p = PolicyParams::uniform(ParamKind::Direct, 1, 3);
        let next = expected_actor_update(RuleKind::Di, &p, 0, &[0.1, 0.5, 0.2], 1e9).unwrap();
        assert_eq!(next.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_action(&[0.99, 1.0, 0.0]), 1);
        assert_eq!(argmax_action(&[1.0, 1.0]), 0);
    }

    #[test]
    fn incompatible_rule_rejected() {
        let p = PolicyParams::uniform(ParamKind::Softmax, 1, 2);
        let err = apply_update(RuleKind::Di, &p, &[1.0], &q1(&[1.0, 0.0]), 1.0);
        assert!(matches!(err, Err(LabError::IncompatibleRule { .. })));
        let e = PolicyParams::uniform(ParamKind::Escort { p: 2.0 }, 1, 2);
        assert!(apply_update(RuleKind::PgEs { p: 3.0 }, &e, &[1.0], &q1(&[1.0, 0.0]), 1.0).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = PolicyParams::uniform(ParamKind::Softmax, 2, 2);
        assert!(matches!(
            apply_update(RuleKind::Ce, &p, &[1.0], &Table::zeros(2, 2), 1.0),
            Err(LabError::Shape(_))
        ));
    }

    #[test]
    fn mce_keeps_row_sum() {
        let p = one_state(ParamKind::Softmax, &[0.4, -2.0, 1.1, 0.0]);
        let next = apply_update(RuleKind::Mce, &p, &[1.0], &q1(&[0.0, 1.0, 0.2, 0.5]), 3.0).unwrap();
        let before: f64 = p.row(0).iter().sum();
        let after: f64 = next.row(0).iter().sum();
        assert!((before - after).abs() < 1e-12);
        let pi0 = policy_of(&p).unwrap();
        let pi1 = policy_of(&next).unwrap();
        assert!(pi1.prob(0, 1) > pi0.prob(0, 1));
    }
}
