//! Softmax, escort and direct policy parametrizations.
//!
//! All three are tabular: one real parameter per state-action pair.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::mdp::Policy;
use crate::table::Table;

const SIMPLEX_TOL: f64 = 1e-12;

/// Default escort exponent.
pub const DEFAULT_ESCORT_P: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamKind {
    Softmax,
    Escort { p: f64 },
    Direct,
}

impl std::fmt::Display for ParamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamKind::Softmax => write!(f, "softmax"),
            ParamKind::Escort { p } => write!(f, "escort(p={p})"),
            ParamKind::Direct => write!(f, "direct"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub(crate) theta: Table,
    pub(crate) kind: ParamKind,
}

impl PolicyParams {
    pub fn new(theta: Table, kind: ParamKind) -> Result<Self> {
        match kind {
            ParamKind::Direct => {
                for (s, row) in theta.rows().enumerate() {
                    if row.iter().any(|&x| !(x >= 0.0))
                        || (row.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL
                    {
                        return Err(LabError::Config(format!(
                            "direct parameters in state {s} are off the simplex"
                        )));
                    }
                }
            }
            ParamKind::Escort { p } => {
                if !(p > 0.0) {
                    return Err(LabError::Config(format!("escort exponent must be > 0, got {p}")));
                }
                if let Some(s) = theta.rows().position(|r| r.iter().all(|&x| x == 0.0)) {
                    return Err(LabError::DegenerateParameters { state: s });
                }
            }
            ParamKind::Softmax => {}
        }
        if theta.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(LabError::Config("non-finite parameter".into()));
        }
        Ok(PolicyParams { theta, kind })
    }

    /// Parameters realising the uniform policy: zeros for softmax, ones for
    /// escort, `1/|A|` for direct.
    pub fn uniform(kind: ParamKind, n_states: usize, n_actions: usize) -> Self {
        let fill = match kind {
            ParamKind::Softmax => 0.0,
            ParamKind::Escort { .. } => 1.0,
            ParamKind::Direct => 1.0 / n_actions as f64,
        };
        PolicyParams {
            theta: Table::filled(n_states, n_actions, fill),
            kind,
        }
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn theta(&self) -> &Table {
        &self.theta
    }

    pub fn n_states(&self) -> usize {
        self.theta.n_rows()
    }

    pub fn n_actions(&self) -> usize {
        self.theta.n_cols()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.theta.row(s)
    }

    /// Action distribution in state `s`.
    pub fn policy_row(&self, s: usize) -> Result<Vec<f64>> {
        row_policy(self.kind, self.theta.row(s)).ok_or(LabError::DegenerateParameters { state: s })
    }
}

/// Maps one parameter row to its action distribution; `None` for an all-zero escort row.
pub fn row_policy(kind: ParamKind, row: &[f64]) -> Option<Vec<f64>> {
    match kind {
        ParamKind::Softmax => {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            Some(exps.into_iter().map(|e| e / z).collect())
        }
        ParamKind::Escort { p } => {
            let scale = row.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if scale == 0.0 {
                return None;
            }
            let pow: Vec<f64> = row.iter().map(|x| (x.abs() / scale).powf(p)).collect();
            let z: f64 = pow.iter().sum();
            Some(pow.into_iter().map(|w| w / z).collect())
        }
        ParamKind::Direct => Some(row.to_vec()),
    }
}

pub fn policy_of(params: &PolicyParams) -> Result<Policy> {
    let mut probs = Table::zeros(params.n_states(), params.n_actions());
    for s in 0..params.n_states() {
        let row = params.policy_row(s)?;
        probs.row_mut(s).copy_from_slice(&row);
    }
    Ok(Policy::from_table_unchecked(probs))
}

/// Sign used by escort gradients; zero counts as positive.
pub(crate) fn escort_sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Per-action escort factor `sign(θ_w) (p / ‖θ‖_p) π_w^{1 − 1/p}`.
///
/// `π_w^{1−1/p}` is evaluated as `(|θ_w| / ‖θ‖_p)^{p−1}`, which is the same
/// quantity without the round trip through `π`.
pub(crate) fn escort_factors(row: &[f64], p: f64) -> Option<Vec<f64>> {
    let scale = row.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let norm = scale
        * row
            .iter()
            .map(|x| (x.abs() / scale).powf(p))
            .sum::<f64>()
            .powf(1.0 / p);
    Some(
        row.iter()
            .map(|&x| escort_sign(x) * (p / norm) * (x.abs() / norm).powf(p - 1.0))
            .collect(),
    )
}

/// Jacobian of one state's policy row: `d_pi[a][w] = ∂π(a|s)/∂θ_{s,w}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularGradient {
    pub d_pi: Vec<Vec<f64>>,
}

impl TabularGradient {
    /// `Σ_a weights[a] ∂π(a|s)/∂θ_{s,w}` for every `w`.
    pub fn contract(&self, weights: &[f64]) -> Vec<f64> {
        let n = self.d_pi.len();
        (0..n)
            .map(|w| (0..n).map(|a| weights[a] * self.d_pi[a][w]).sum())
            .collect()
    }
}

pub fn policy_gradient(params: &PolicyParams, s: usize) -> Result<TabularGradient> {
    let n = params.n_actions();
    let d_pi = match params.kind {
        ParamKind::Direct => (0..n)
            .map(|a| (0..n).map(|w| if a == w { 1.0 } else { 0.0 }).collect())
            .collect(),
        ParamKind::Softmax => {
            let pi = params.policy_row(s)?;
            (0..n)
                .map(|a| {
                    (0..n)
                        .map(|w| pi[a] * (if a == w { 1.0 } else { 0.0 } - pi[w]))
                        .collect()
                })
                .collect()
        }
        ParamKind::Escort { p } => {
            let pi = params.policy_row(s)?;
            let factors = escort_factors(params.row(s), p)
                .ok_or(LabError::DegenerateParameters { state: s })?;
            (0..n)
                .map(|a| {
                    (0..n)
                        .map(|w| factors[w] * (if a == w { 1.0 } else { 0.0 } - pi[a]))
                        .collect()
                })
                .collect()
        }
    };
    Ok(TabularGradient { d_pi })
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    x.iter().map(|&v| (v - tau).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: ParamKind, row: &[f64]) -> PolicyParams {
        PolicyParams::new(Table::from_rows(vec![row.to_vec()]), kind).unwrap()
    }

    #[test]
    fn softmax_symmetric_row_is_uniform() {
        let pi = policy_of(&params(ParamKind::Softmax, &[0.0, 0.0, 0.0])).unwrap();
        for a in 0..3 {
            assert!((pi.prob(0, a) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logit() {
        let pi = policy_of(&params(ParamKind::Softmax, &[10.0, 0.0, 0.0])).unwrap();
        let e10 = 10f64.exp();
        assert!((pi.prob(0, 0) - e10 / (e10 + 2.0)).abs() < 1e-15);
        assert!((pi.prob(0, 0) - 0.9999092).abs() < 1e-7);
    }

    #[test]
    fn softmax_does_not_overflow() {
        let pi = policy_of(&params(ParamKind::Softmax, &[1000.0, 999.0])).unwrap();
        assert!(pi.row(0).iter().all(|p| p.is_finite()));
    }

    #[test]
    fn escort_values_and_sign_invariance() {
        let kind = ParamKind::Escort { p: 2.0 };
        for row in [[2.0, 1.0], [-2.0, 1.0]] {
            let pi = policy_of(&params(kind, &row)).unwrap();
            assert!((pi.prob(0, 0) - 0.8).abs() < 1e-15);
            assert!((pi.prob(0, 1) - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn escort_zero_row_is_degenerate() {
        let theta = Table::from_rows(vec![vec![1.0, 1.0], vec![0.0, 0.0]]);
        let err = PolicyParams::new(theta, ParamKind::Escort { p: 2.0 });
        assert!(matches!(err, Err(LabError::DegenerateParameters { state: 1 })));
    }

    #[test]
    fn softmax_gradient_uniform_two_actions() {
        let g = policy_gradient(&params(ParamKind::Softmax, &[0.0, 0.0]), 0).unwrap();
        assert!((g.d_pi[0][0] - 0.25).abs() < 1e-15);
        assert!((g.d_pi[0][1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn direct_gradient_is_identity() {
        let g = policy_gradient(&params(ParamKind::Direct, &[0.2, 0.3, 0.5]), 0).unwrap();
        for a in 0..3 {
            for w in 0..3 {
                assert_eq!(g.d_pi[a][w], if a == w { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn escort_gradient_at_zero_coordinate_is_finite() {
        let g = policy_gradient(&params(ParamKind::Escort { p: 2.0 }, &[0.0, 1.0]), 0).unwrap();
        assert!(g.d_pi.iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn gradient_columns_conserve_mass() {
        for kind in [ParamKind::Softmax, ParamKind::Escort { p: 2.0 }] {
            let g = policy_gradient(&params(kind, &[0.3, -1.2, 2.0, 0.7]), 0).unwrap();
            for w in 0..4 {
                let col: f64 = (0..4).map(|a| g.d_pi[a][w]).sum();
                assert!(col.abs() < 1e-10, "{kind}: column {w} sums to {col}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.6, 0.6]), vec![0.5, 0.5]);
        let on = project_simplex(&[0.5, 0.3, 0.2]);
        for (a, b) in on.iter().zip([0.5, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = project_simplex(&[1.2, 0.1, -0.1]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0 && p[2] == 0.0);
    }

    #[test]
    fn direct_params_must_be_on_simplex() {
        let theta = Table::from_rows(vec![vec![0.7, 0.7]]);
        assert!(PolicyParams::new(theta, ParamKind::Direct).is_err());
    }
}
