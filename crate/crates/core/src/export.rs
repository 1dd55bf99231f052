//! CSV and JSON writers for traces, summaries, and sweeps.

use std::io::Write;

use serde::Serialize;

use crate::certificates::Certificate;
use crate::coordinator::{RunSummary, RunTrace, StopRule};
use crate::model::{CoupledInstance, StepSchedule};
use crate::pev::{Bin, TrialRecord};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header of the trace CSV for `p` coupling rows.
pub fn trace_header(p: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend((0..p).map(|j| format!("lambda_{j}")));
    h.extend(
        [
            "max_violation",
            "rho_inf",
            "gamma",
            "cost",
            "feasible",
            "best_cost",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

/// One row per iteration.
pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: W) -> csv::Result<()> {
    let p = trace.summary.final_lambda.len();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(p))?;
    for r in &trace.rows {
        let mut rec = vec![r.k.to_string()];
        rec.extend(r.lambda.iter().map(f64::to_string));
        rec.push(r.max_violation.to_string());
        rec.push(r.rho_inf.to_string());
        rec.push(r.gamma.to_string());
        rec.push(r.cost.to_string());
        rec.push(r.feasible.to_string());
        rec.push(opt(r.best_cost));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Run summary written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryDocument<'a> {
    pub instance: &'a str,
    pub fingerprint: String,
    pub mode: &'a str,
    pub schedule: StepSchedule,
    pub stop: StopRule,
    pub settled: Option<usize>,
    pub k_feasible: Option<usize>,
    pub final_cost: f64,
    pub final_feasible: bool,
    pub best_feasible_cost: Option<f64>,
    pub summary: &'a RunSummary,
    pub certificate: Option<&'a Certificate>,
    /// Why the certificate is missing, if it is.
    pub certificate_absent_reason: Option<String>,
}

impl<'a> SummaryDocument<'a> {
    pub fn new(
        instance: &'a CoupledInstance,
        mode: &'a str,
        trace: &'a RunTrace,
        certificate: Result<&'a Certificate, String>,
    ) -> Self {
        let s = &trace.summary;
        let (certificate, certificate_absent_reason) = match certificate {
            Ok(c) => (Some(c), None),
            Err(reason) => (None, Some(reason)),
        };
        Self {
            instance: instance.name(),
            fingerprint: instance.fingerprint(),
            mode,
            schedule: trace.schedule,
            stop: trace.stop,
            settled: s.settled,
            k_feasible: s.k_feasible,
            final_cost: s.final_cost,
            final_feasible: s.final_feasible,
            best_feasible_cost: s.best.as_ref().map(|b| b.cost),
            summary: s,
            certificate,
            certificate_absent_reason,
        }
    }
}

pub const SWEEP_HEADER: [&str; 9] = [
    "trial",
    "m",
    "setup",
    "delta_rho_pct",
    "delta_j_pct",
    "alg1_gap_pct",
    "alg2_gap_pct",
    "baseline_failed",
    "runtime_s",
];

pub fn write_sweep_csv<W: Write>(records: &[TrialRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.m.to_string(),
            r.setup.as_str().to_string(),
            opt(r.delta_rho_pct),
            opt(r.delta_j_pct),
            opt(r.alg1_gap_pct),
            opt(r.alg2_gap_pct),
            r.baseline_failed.to_string(),
            r.runtime_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(bins: &[Bin], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for b in bins {
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinator::run_algorithm1;
    use crate::model::tests::t1;

    #[test]
    fn trace_csv_columns() {
        let trace = run_algorithm1(
            &t1(2.0),
            StepSchedule::harmonic(1.0).unwrap(),
            StopRule::new(3, 10).unwrap(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("k,lambda_0,max_violation,rho_inf,gamma,cost,feasible,best_cost")
        );
        assert_eq!(lines.next(), Some("1,0,0,0,0,-5,true,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn histogram_csv() {
        let mut buf = Vec::new();
        write_histogram_csv(
            &[Bin {
                lo: 0.0,
                hi: 1.0,
                count: 2,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "bin_lo,bin_hi,count\n0,1,2\n"
        );
    }
}
