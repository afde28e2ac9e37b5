//! Measured `(A, C, rates)` records and their line-delimited file format.

use std::fmt::Write as _;

use crate::coordination::SharingDecision;
use crate::error::{Error, Result};
use crate::matrix::BinMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub ci: u64,
    pub decision: SharingDecision,
    /// Measured per-UE rates in bit/s.
    pub rates: Vec<f64>,
}

/// Ordered measurement records; the oldest are dropped beyond `capacity`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_bs: usize,
    num_ue: usize,
    capacity: Option<usize>,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(num_bs: usize, num_ue: usize) -> Self {
        Self {
            num_bs,
            num_ue,
            capacity: None,
            records: Vec::new(),
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity.max(1));
        self
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_ue(&self) -> usize {
        self.num_ue
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    /// Appends a record; returns how many old records were evicted.
    pub fn push(&mut self, record: Record) -> Result<usize> {
        let d = &record.decision;
        for m in [&d.association, &d.coordination] {
            if m.rows() != self.num_bs || m.cols() != self.num_ue {
                return Err(Error::Dimension(format!(
                    "record is {}x{}, dataset expects {}x{}",
                    m.rows(),
                    m.cols(),
                    self.num_bs,
                    self.num_ue
                )));
            }
        }
        if record.rates.len() != self.num_ue {
            return Err(Error::Dimension(format!(
                "record has {} rates, dataset expects {}",
                record.rates.len(),
                self.num_ue
            )));
        }
        if let Some(r) = record.rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Parse(format!("rate {r} is not a finite nonnegative number")));
        }
        self.records.push(record);
        let evicted = match self.capacity {
            Some(cap) if self.records.len() > cap => {
                let n = self.records.len() - cap;
                self.records.drain(..n);
                n
            }
            _ => 0,
        };
        Ok(evicted)
    }

    /// Header `# bs=B ue=U`, then one `ci,A bits,C bits,rates..` line per record.
    pub fn to_text(&self) -> String {
        let mut out = format!("# bs={} ue={}\n", self.num_bs, self.num_ue);
        for r in &self.records {
            write!(
                out,
                "{},{},{}",
                r.ci,
                r.decision.association.to_bit_string(),
                r.decision.coordination.to_bit_string()
            )
            .unwrap();
            for rate in &r.rates {
                write!(out, ",{rate}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let field = |key: &str| -> Result<usize> {
            header
                .trim_start_matches('#')
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| Error::Parse(format!("dataset header lacks `{key}`")))?
                .parse()
                .map_err(|e| Error::Parse(format!("dataset header `{key}`: {e}")))
        };
        let mut ds = Self::new(field("bs")?, field("ue")?);
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |msg: String| Error::Parse(format!("dataset line {}: {msg}", i + 2));
            let mut parts = line.split(',');
            let mut next = || parts.next().ok_or_else(|| bad("too few fields".into()));
            let ci = next()?.parse().map_err(|e| bad(format!("{e}")))?;
            let a = BinMatrix::from_bit_string(ds.num_bs, ds.num_ue, next()?)?;
            let c = BinMatrix::from_bit_string(ds.num_bs, ds.num_ue, next()?)?;
            let rates = parts
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{e}"))))
                .collect::<Result<Vec<_>>>()?;
            ds.push(Record {
                ci,
                decision: SharingDecision::new(a, c),
                rates,
            })
            .map_err(|e| bad(e.to_string()))?;
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ci: u64) -> Record {
        let a = BinMatrix::from_grid("10\n01").unwrap();
        Record {
            ci,
            decision: SharingDecision::new(a.clone(), a.with(0, 1, true)),
            rates: vec![1.5e9, 0.1 + ci as f64],
        }
    }

    #[test]
    fn text_round_trip() {
        let mut ds = Dataset::new(2, 2);
        ds.push(record(3)).unwrap();
        ds.push(record(7)).unwrap();
        let text = ds.to_text();
        assert!(text.starts_with("# bs=2 ue=2\n3,1001,1101,1500000000,3.1\n"));
        assert_eq!(Dataset::from_text(&text).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_records() {
        let mut ds = Dataset::new(2, 2);
        let mut r = record(0);
        r.rates[0] = -1.0;
        assert!(ds.push(r).is_err());
        let mut r = record(0);
        r.rates.push(1.0);
        assert!(ds.push(r).is_err());
        assert!(Dataset::new(3, 2).push(record(0)).is_err());
        assert!(ds.is_empty());
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut ds = Dataset::new(2, 2).with_capacity(2);
        for ci in 0..4 {
            ds.push(record(ci)).unwrap();
        }
        let cis: Vec<u64> = ds.records().iter().map(|r| r.ci).collect();
        assert_eq!(cis, [2, 3]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = Dataset::from_text("# bs=2 ue=2\n0,1001,1101,1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(Dataset::from_text("# ue=2\n").is_err());
    }
}
