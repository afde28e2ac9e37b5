//! CSV emitters with fixed schemas. Raw series are in bit/s; decision tables
//! are in Gbps. BS and UE ids in the output are 1-based. Floats use the
//! shortest round-trip form, switching to exponents for tiny values.

use std::io::{self, Write};

use crate::hybrid::CiRecord;
use crate::scenario::DecisionSummary;

fn per_operator(prefix: &str, operators: usize) -> impl Iterator<Item = String> + '_ {
    (1..=operators).map(move |z| format!("{prefix}_op{z}"))
}

pub fn timeseries_header(operators: usize) -> String {
    let mut cols: Vec<String> = ["ci", "frame_type", "sum_rate_bps", "min_rate_bps"].map(String::from).to_vec();
    cols.extend(per_operator("utility", operators));
    cols.extend(per_operator("cost", operators));
    cols.push("epsilon".to_string());
    cols.join(",")
}

/// One row per CI.
pub fn write_timeseries(mut out: impl Write, records: &[CiRecord], operators: usize) -> io::Result<()> {
    writeln!(out, "{}", timeseries_header(operators))?;
    for r in records {
        write!(out, "{},{},{:?},{:?}", r.ci, r.frame.as_str(), r.sum_rate, r.min_rate)?;
        for v in r.utilities.iter().chain(&r.costs) {
            write!(out, ",{v:?}")?;
        }
        writeln!(out, ",{:?}", r.epsilon)?;
    }
    Ok(())
}

pub const RATE_REPORT_HEADER: &str = "ci_index,ue_id,serving_bs,rate_bps,i1,i2,i3";

/// One row per CI and UE; interference terms in W.
pub fn write_rate_reports(mut out: impl Write, records: &[CiRecord]) -> io::Result<()> {
    writeln!(out, "{RATE_REPORT_HEADER}")?;
    for r in records {
        for m in &r.metrics {
            writeln!(
                out,
                "{},{},{},{:?},{:?},{:?},{:?}",
                r.ci,
                m.ue + 1,
                m.serving_bs + 1,
                m.rate_bps,
                m.i1,
                m.i2,
                m.i3
            )?;
        }
    }
    Ok(())
}

pub fn decision_table_header(operators: usize) -> String {
    let mut cols: Vec<String> = ["antennas", "scenario"].map(String::from).to_vec();
    cols.extend(per_operator("sum_rate_gbps", operators));
    cols.extend(per_operator("min_rate_gbps", operators));
    cols.extend(["focus_ue", "i1_norm", "i2_norm", "i3_norm", "rate_improvement_pct"].map(String::from));
    cols.extend(per_operator("cost", operators));
    cols.push("utility".to_string());
    cols.join(",")
}

/// One row per decision. The improvement column is empty for rows without a
/// reference decision.
pub fn write_decision_table(mut out: impl Write, rows: &[DecisionSummary]) -> io::Result<()> {
    let operators = rows.first().map_or(0, |r| r.sum_rate_gbps.len());
    writeln!(out, "{}", decision_table_header(operators))?;
    for r in rows {
        write!(out, "{}x{},{}", r.n_bs, r.n_ue, r.label.replace(',', ":"))?;
        for v in r.sum_rate_gbps.iter().chain(&r.min_rate_gbps) {
            write!(out, ",{v:?}")?;
        }
        write!(out, ",{}", r.focus_ue)?;
        for v in r.focus_interference {
            write!(out, ",{v:?}")?;
        }
        match r.focus_improvement_pct {
            Some(p) => write!(out, ",{p:?}")?,
            None => write!(out, ",")?,
        }
        for v in &r.costs {
            write!(out, ",{v:?}")?;
        }
        writeln!(out, ",{:?}", r.utility)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::FrameType;
    use crate::interference::UeMetrics;

    #[test]
    fn headers() {
        assert_eq!(
            timeseries_header(2),
            "ci,frame_type,sum_rate_bps,min_rate_bps,utility_op1,utility_op2,cost_op1,cost_op2,epsilon"
        );
        assert_eq!(
            decision_table_header(2),
            "antennas,scenario,sum_rate_gbps_op1,sum_rate_gbps_op2,min_rate_gbps_op1,min_rate_gbps_op2,\
             focus_ue,i1_norm,i2_norm,i3_norm,rate_improvement_pct,cost_op1,cost_op2,utility"
        );
    }

    #[test]
    fn rows_line_up_with_headers() {
        let rec = CiRecord {
            ci: 3,
            frame: FrameType::Training,
            phase: 0,
            decision: 0,
            incumbent: 0,
            explored: false,
            sum_rate: 2.5,
            min_rate: 1.0,
            utilities: vec![1.0, 2.0],
            costs: vec![5.0, 105.0],
            epsilon: 0.5,
            metrics: vec![UeMetrics {
                ue: 0,
                serving_bs: 1,
                rx: 1.0,
                i1: 0.0,
                i2: 0.25,
                i3: 0.5,
                rate_bps: 2.5,
            }],
        };
        let mut ts = Vec::new();
        write_timeseries(&mut ts, std::slice::from_ref(&rec), 2).unwrap();
        let ts = String::from_utf8(ts).unwrap();
        assert_eq!(ts.lines().nth(1), Some("3,training,2.5,1.0,1.0,2.0,5.0,105.0,0.5"));
        let mut rr = Vec::new();
        write_rate_reports(&mut rr, &[rec]).unwrap();
        assert_eq!(String::from_utf8(rr).unwrap(), format!("{RATE_REPORT_HEADER}\n3,1,2,2.5,0.0,0.25,0.5\n"));
    }
}
