use serde::{Deserialize, Serialize};

use super::RunRecord;

/// Per-(rule, η) statistics of steps-to-threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub rule: String,
    pub eta: f64,
    pub runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub censored_fraction: f64,
}

impl SummaryRow {
    /// The median itself is a censored value.
    pub fn median_censored(&self) -> bool {
        self.censored_fraction >= 0.5
    }
}

/// Linear-interpolation quantile of sorted data (the usual "type 7" rule).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Groups records by `(rule, η)` in order of first appearance.
/// Censored runs enter the statistics at their censoring value.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, f64, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        match groups
            .iter_mut()
            .find(|(rule, eta, _)| *rule == r.rule && *eta == r.eta)
        {
            Some(g) => g.2.push(r),
            None => groups.push((r.rule.clone(), r.eta, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(rule, eta, runs)| {
            let mut steps: Vec<f64> = runs.iter().map(|r| r.steps as f64).collect();
            steps.sort_by(f64::total_cmp);
            let censored = runs.iter().filter(|r| r.censored).count();
            let (q1, q3) = (quantile(&steps, 0.25), quantile(&steps, 0.75));
            SummaryRow {
                rule,
                eta,
                runs: runs.len(),
                median: quantile(&steps, 0.5),
                q1,
                q3,
                iqr: q3 - q1,
                censored_fraction: censored as f64 / runs.len() as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rule: &str, eta: f64, steps: u64, censored: bool) -> RunRecord {
        RunRecord {
            seed: 0,
            rule: rule.into(),
            eta,
            setting: "no-explo".into(),
            env: "chain".into(),
            steps,
            censored,
            curve: vec![],
        }
    }

    #[test]
    fn median_of_three() {
        let rows = aggregate(&[
            record("ce", 1.0, 1000, false),
            record("ce", 1.0, 10, false),
            record("ce", 1.0, 20, false),
        ]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].median, 20.0);
        assert_eq!(rows[0].q1, 15.0);
        assert_eq!(rows[0].q3, 510.0);
    }

    #[test]
    fn single_record() {
        let rows = aggregate(&[record("di", 0.5, 300, false)]);
        assert_eq!(rows[0].median, 300.0);
        assert_eq!(rows[0].iqr, 0.0);
        assert_eq!(rows[0].censored_fraction, 0.0);
    }

    #[test]
    fn all_censored() {
        let rows = aggregate(&[record("pg-sm", 1.0, 5000, true), record("pg-sm", 1.0, 5000, true)]);
        assert_eq!(rows[0].censored_fraction, 1.0);
        assert_eq!(rows[0].median, 5000.0);
        assert!(rows[0].median_censored());
    }

    #[test]
    fn groups_keep_first_appearance_order() {
        let rows = aggregate(&[
            record("mce", 1.0, 1, false),
            record("ce", 1.0, 2, false),
            record("mce", 0.1, 3, false),
            record("mce", 1.0, 4, false),
        ]);
        let keys: Vec<_> = rows.iter().map(|r| (r.rule.as_str(), r.eta, r.runs)).collect();
        assert_eq!(keys, vec![("mce", 1.0, 2), ("ce", 1.0, 1), ("mce", 0.1, 1)]);
    }
}
