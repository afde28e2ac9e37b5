//! Measured rates of every decision that has been run, and the promotion rule.
//!
//! A decision is scored by the utility of its mean measured rates, the same
//! quantity the optimizer maximizes. Its standard error comes from the
//! delta method with per-UE relative rate variances pooled over all
//! decisions, since fading spreads the rates of every decision alike and a
//! handful of samples gives a poor variance estimate on its own.

use std::collections::HashMap;

use crate::coordination::SharingDecision;
use crate::interference::RATE_FLOOR_BPS;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateStats {
    /// Measurements taken in training frames.
    pub training_samples: usize,
    /// All measurements, training and operation.
    pub samples: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl CandidateStats {
    pub fn mean_rates(&self) -> Vec<f64> {
        let n = self.samples.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Sum of squared relative deviations from the mean, per UE.
    fn relative_ss(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.samples as f64;
        self.sum.iter().zip(&self.sum_sq).map(move |(s, q)| {
            let m = s / n;
            if m > 0.0 {
                ((q - n * m * m) / (m * m)).max(0.0)
            } else {
                0.0
            }
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct CandidateLedger {
    entries: HashMap<SharingDecision, CandidateStats>,
}

impl CandidateLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn get(&self, decision: &SharingDecision) -> Option<&CandidateStats> {
        self.entries.get(decision)
    }

    pub fn observe(&mut self, decision: &SharingDecision, rates: &[f64], training: bool) {
        let e = self.entries.entry(decision.clone()).or_default();
        if e.sum.is_empty() {
            e.sum = vec![0.0; rates.len()];
            e.sum_sq = vec![0.0; rates.len()];
        }
        for (u, r) in rates.iter().enumerate() {
            e.sum[u] += r;
            e.sum_sq[u] += r * r;
        }
        e.samples += 1;
        if training {
            e.training_samples += 1;
        }
    }

    /// `sum_u w_u ln(mean rate_u)` of a decision.
    pub fn utility(&self, decision: &SharingDecision, weights: &[f64]) -> Option<f64> {
        let e = self.entries.get(decision)?;
        Some(
            e.mean_rates()
                .iter()
                .zip(weights)
                .map(|(r, w)| w * r.max(RATE_FLOOR_BPS).ln())
                .sum(),
        )
    }

    /// Mean measured sum rate of a decision.
    pub fn sum_rate(&self, decision: &SharingDecision) -> Option<f64> {
        self.entries.get(decision).map(|e| e.mean_rates().iter().sum())
    }

    /// Pooled relative variance of a single rate sample, per UE; `None`
    /// until some decision has two samples.
    pub fn pooled_relative_variance(&self) -> Option<Vec<f64>> {
        let mut ss: Vec<f64> = Vec::new();
        let mut dof = 0usize;
        for e in self.entries.values().filter(|e| e.samples >= 2) {
            if ss.is_empty() {
                ss = vec![0.0; e.sum.len()];
            }
            for (acc, v) in ss.iter_mut().zip(e.relative_ss()) {
                *acc += v;
            }
            dof += e.samples - 1;
        }
        (dof > 0).then(|| ss.into_iter().map(|v| v / dof as f64).collect())
    }

    /// Standard error of [`Self::utility`].
    pub fn stderr(&self, decision: &SharingDecision, weights: &[f64]) -> f64 {
        let (Some(e), Some(var)) = (self.entries.get(decision), self.pooled_relative_variance()) else {
            return f64::INFINITY;
        };
        let n = e.samples as f64;
        (var.iter().zip(weights).map(|(v, w)| w * w * v).sum::<f64>() / n).sqrt()
    }

    /// Standard error of [`Self::sum_rate`].
    pub fn sum_rate_stderr(&self, decision: &SharingDecision) -> f64 {
        let (Some(e), Some(var)) = (self.entries.get(decision), self.pooled_relative_variance()) else {
            return f64::INFINITY;
        };
        let n = e.samples as f64;
        (e.mean_rates().iter().zip(&var).map(|(m, v)| m * m * v).sum::<f64>() / n).sqrt()
    }

    /// True when `candidate` has a higher mean sum rate than `incumbent` by
    /// at least `z` standard errors of the difference. An unmeasured
    /// incumbent is always beaten.
    pub fn raises_sum_rate(&self, candidate: &SharingDecision, incumbent: &SharingDecision, z: f64) -> bool {
        let Some(c) = self.sum_rate(candidate) else {
            return false;
        };
        let Some(i) = self.sum_rate(incumbent) else {
            return true;
        };
        let se = self.sum_rate_stderr(candidate).hypot(self.sum_rate_stderr(incumbent));
        let spread = if z > 0.0 { z * se } else { 0.0 };
        c - i >= spread
    }

    /// Lead of `candidate` over `incumbent` and its standard error.
    fn lead(&self, candidate: &SharingDecision, incumbent: &SharingDecision, weights: &[f64]) -> Option<(f64, f64)> {
        let c = self.utility(candidate, weights)?;
        let i = self.utility(incumbent, weights)?;
        let se = self.stderr(candidate, weights).hypot(self.stderr(incumbent, weights));
        Some((c - i, se))
    }

    /// A candidate is promoted once it has `min_samples` training
    /// measurements and its utility beats the incumbent's by `margin` plus
    /// `z` standard errors of the difference. An incumbent without
    /// measurements is beaten by any qualified candidate.
    pub fn should_promote(
        &self,
        candidate: &SharingDecision,
        incumbent: &SharingDecision,
        weights: &[f64],
        min_samples: usize,
        margin: f64,
        z: f64,
    ) -> bool {
        if candidate == incumbent {
            return false;
        }
        match self.entries.get(candidate) {
            Some(c) if c.training_samples >= min_samples => {}
            _ => return false,
        }
        if !self.entries.contains_key(incumbent) {
            return true;
        }
        let (lead, se) = self.lead(candidate, incumbent, weights).expect("both measured");
        let spread = if z > 0.0 { z * se } else { 0.0 };
        lead >= margin + spread
    }

    /// A candidate is dropped once it is `z` standard errors short of the
    /// promotion margin, or has used up `max_samples` training measurements.
    pub fn should_reject(
        &self,
        candidate: &SharingDecision,
        incumbent: &SharingDecision,
        weights: &[f64],
        margin: f64,
        z: f64,
        max_samples: usize,
    ) -> bool {
        let Some(c) = self.entries.get(candidate) else {
            return false;
        };
        if c.training_samples >= max_samples {
            return true;
        }
        match self.lead(candidate, incumbent, weights) {
            Some((lead, se)) if se.is_finite() => lead + z * se < margin,
            _ => false,
        }
    }
}
