use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{RunRecord, SummaryRow};
use crate::error::Result;

#[derive(Serialize, Deserialize)]
struct RecordRow {
    seed: u64,
    rule: String,
    eta: f64,
    setting: String,
    env: String,
    steps: u64,
    censored: bool,
}

#[derive(Serialize, Deserialize)]
struct CurveRow {
    seed: u64,
    rule: String,
    eta: f64,
    step: u64,
    jbar: f64,
}

/// `seed,rule,eta,setting,env,steps,censored`, one row per run.
pub fn write_records_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(RecordRow {
            seed: r.seed,
            rule: r.rule.clone(),
            eta: r.eta,
            setting: r.setting.clone(),
            env: r.env.clone(),
            steps: r.steps,
            censored: r.censored,
        })?;
    }
    if records.is_empty() {
        w.write_record(["seed", "rule", "eta", "setting", "env", "steps", "censored"])?;
    }
    w.flush()?;
    Ok(())
}

/// `seed,rule,eta,step,jbar`, one row per checkpoint.
pub fn write_curves_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut any = false;
    for r in records {
        for &(step, jbar) in &r.curve {
            any = true;
            w.serialize(CurveRow {
                seed: r.seed,
                rule: r.rule.clone(),
                eta: r.eta,
                step,
                jbar,
            })?;
        }
    }
    if !any {
        w.write_record(["seed", "rule", "eta", "step", "jbar"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the run table and, if given, attaches curves to their runs.
/// Runs are matched on `(seed, rule, eta)`.
pub fn read_records<R: Read, C: Read>(records: R, curves: Option<C>) -> Result<Vec<RunRecord>> {
    let mut out: Vec<RunRecord> = csv::Reader::from_reader(records)
        .deserialize::<RecordRow>()
        .map(|row| {
            let row = row?;
            Ok(RunRecord {
                seed: row.seed,
                rule: row.rule,
                eta: row.eta,
                setting: row.setting,
                env: row.env,
                steps: row.steps,
                censored: row.censored,
                curve: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;
    if let Some(curves) = curves {
        let index: HashMap<(u64, String, u64), usize> = out
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.seed, r.rule.clone(), r.eta.to_bits()), i))
            .collect();
        for row in csv::Reader::from_reader(curves).deserialize::<CurveRow>() {
            let row = row?;
            if let Some(&i) = index.get(&(row.seed, row.rule, row.eta.to_bits())) {
                out[i].curve.push((row.step, row.jbar));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RunRecord> {
        vec![
            RunRecord {
                seed: 3,
                rule: "pg-sm".into(),
                eta: 0.1,
                setting: "hi-off-pol".into(),
                env: "chain".into(),
                steps: 1200,
                censored: false,
                curve: vec![(100, -0.25), (200, 0.1 + 0.2)],
            },
            RunRecord {
                seed: 4,
                rule: "mce".into(),
                eta: 10.0,
                setting: "hi-off-pol".into(),
                env: "chain".into(),
                steps: 5000,
                censored: true,
                curve: vec![(100, 1.0 / 3.0)],
            },
        ]
    }

    #[test]
    fn header_is_fixed() {
        let mut buf = Vec::new();
        write_records_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("seed,rule,eta,setting,env,steps,censored"));
        assert_eq!(text.lines().nth(2), Some("4,mce,10.0,hi-off-pol,chain,5000,true"));
        let mut buf = Vec::new();
        write_curves_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("seed,rule,eta,step,jbar"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn round_trip() {
        let records = sample();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_records_csv(&records, &mut a).unwrap();
        write_curves_csv(&records, &mut b).unwrap();
        let back = read_records(a.as_slice(), Some(b.as_slice())).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn empty_tables_keep_headers() {
        let mut buf = Vec::new();
        write_records_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "seed,rule,eta,setting,env,steps,censored");
    }
}
