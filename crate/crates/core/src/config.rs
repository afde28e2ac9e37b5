//! Simulation configuration.
//!
//! A run is described by a single TOML document whose sections mirror the
//! radio parameters, the coordination penalties and budgets, the frame
//! schedule of the hybrid loop and the learning setup. Unknown keys are
//! rejected so a typo never silently falls back to a default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-law path loss, `PL(dB) = intercept_db + 10 * exponent * log10(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub exponent: f64,
}

impl Default for PathLossModel {
    /// 28 GHz line-of-sight fit.
    fn default() -> Self {
        Self {
            intercept_db: 61.4,
            exponent: 2.0,
        }
    }
}

/// Radio and Monte-Carlo parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    /// Antennas per BS (also the RF-chain count bounding the cell size).
    pub n_bs: usize,
    /// Antennas per UE.
    pub n_ue: usize,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    /// RZF regularizer, relative to the RMS row norm of the effective channel.
    pub delta: f64,
    /// Paths per link; the first one is the LoS path.
    pub num_paths: usize,
    /// Channel realizations per long-term rate estimate.
    pub realizations: usize,
    pub pathloss: PathLossModel,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            n_bs: 8,
            n_ue: 2,
            tx_power_dbm: 30.0,
            noise_psd_dbm_per_hz: -174.0,
            bandwidth_hz: 1e9,
            carrier_hz: 28e9,
            delta: 1e-6,
            num_paths: 3,
            realizations: 100,
            pathloss: PathLossModel::default(),
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl RadioConfig {
    pub fn small_antennas() -> Self {
        Self::default()
    }

    pub fn large_antennas() -> Self {
        Self {
            n_bs: 64,
            n_ue: 16,
            ..Self::default()
        }
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    pub fn noise_psd_w(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_per_hz)
    }

    /// Noise power over the operator bandwidth, `W_z * sigma^2`.
    pub fn noise_power_w(&self) -> f64 {
        self.bandwidth_hz * self.noise_psd_w()
    }

    pub fn validate(&self) -> Result<()> {
        positive_count("radio.n_bs", self.n_bs)?;
        positive_count("radio.n_ue", self.n_ue)?;
        positive_count("radio.num_paths", self.num_paths)?;
        positive_count("radio.realizations", self.realizations)?;
        positive("radio.bandwidth_hz", self.bandwidth_hz)?;
        positive("radio.carrier_hz", self.carrier_hz)?;
        positive("radio.delta", self.delta)?;
        positive("radio.pathloss.exponent", self.pathloss.exponent)?;
        finite("radio.tx_power_dbm", self.tx_power_dbm)?;
        finite("radio.noise_psd_dbm_per_hz", self.noise_psd_dbm_per_hz)?;
        finite("radio.pathloss.intercept_db", self.pathloss.intercept_db)?;
        Ok(())
    }
}

/// Which operator a coordination bit is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Attribution {
    /// Charged to the operator owning the UE.
    #[default]
    Ue,
    /// Charged to the operator owning the BS.
    Bs,
}

/// Penalties, budgets and the feasibility rules of the sharing problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharingConfig {
    /// Penalty for a BS estimating the channel of a UE it serves.
    pub p_serving: f64,
    /// Penalty for intra-operator coordination.
    pub p_intra: f64,
    /// Penalty for inter-operator coordination.
    pub p_inter: f64,
    pub attribution: Attribution,
    /// Per-operator coordination budget. A single value applies to all operators.
    pub budget: Vec<f64>,
    pub roaming: bool,
    /// Cell-size cap applied to the explored feasibility space, in meters.
    pub cell_radius_m: Option<f64>,
    /// Interference-ball radius applied to the topology, in meters.
    pub interference_ball_m: Option<f64>,
    pub serving_implies_coordinated: bool,
}

impl Default for SharingConfig {
    fn default() -> Self {
        Self {
            p_serving: 1.0,
            p_intra: 10.0,
            p_inter: 100.0,
            attribution: Attribution::Ue,
            budget: vec![120.0],
            roaming: false,
            cell_radius_m: Some(150.0),
            interference_ball_m: None,
            serving_implies_coordinated: true,
        }
    }
}

impl SharingConfig {
    /// Budget of operator `z` (0-based).
    pub fn budget_of(&self, z: usize) -> f64 {
        match self.budget.len() {
            0 => f64::INFINITY,
            1 => self.budget[0],
            _ => self.budget.get(z).copied().unwrap_or(f64::INFINITY),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_serving && self.p_serving < self.p_intra && self.p_intra < self.p_inter) {
            return Err(Error::config(
                "sharing",
                "penalties must satisfy 0 <= p_serving < p_intra < p_inter",
            ));
        }
        for (k, b) in self.budget.iter().enumerate() {
            if !(*b >= 0.0) {
                return Err(Error::config(
                    format!("sharing.budget[{k}]"),
                    "must be nonnegative",
                ));
            }
        }
        if let Some(r) = self.cell_radius_m {
            positive("sharing.cell_radius_m", r)?;
        }
        if let Some(r) = self.interference_ball_m {
            positive("sharing.interference_ball_m", r)?;
        }
        Ok(())
    }
}

/// Training/operation frame cadence and the exploration schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Training-frame period during the warm-up phase.
    pub dense_period: u64,
    /// Last CI of the warm-up phase.
    pub dense_until: u64,
    /// Training-frame period after warm-up.
    pub sparse_period: u64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_decay_every: u64,
    /// Training-frame measurements required before a candidate may be promoted.
    pub confidence_min_samples: usize,
    /// Relative utility margin over the incumbent required for promotion.
    pub confidence_margin: f64,
    /// Standard errors of the utility difference the candidate must clear on
    /// top of the margin; zero compares plain means.
    pub confidence_z: f64,
    /// Also require the candidate's mean measured sum rate to beat the
    /// incumbent's by `confidence_z` standard errors.
    pub confidence_sum_rate_guard: bool,
    /// Training measurements after which an unpromoted candidate is dropped.
    pub confidence_max_samples: usize,
    /// Strongest BSs considered per UE by the feasibility sampler.
    pub sampler_strongest_k: usize,
    pub sampler_attempts: usize,
    pub ci_duration_s: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            dense_period: 10,
            dense_until: 2000,
            sparse_period: 50,
            epsilon0: 0.5,
            epsilon_decay: 0.9,
            epsilon_decay_every: 1000,
            confidence_min_samples: 3,
            confidence_margin: 0.01,
            confidence_z: 2.0,
            confidence_max_samples: 30,
            confidence_sum_rate_guard: true,
            sampler_strongest_k: 3,
            sampler_attempts: 200,
            ci_duration_s: 1e-3,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dense_period == 0 {
            return Err(Error::config("schedule.dense_period", "must be positive"));
        }
        if self.sparse_period == 0 {
            return Err(Error::config("schedule.sparse_period", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon0) {
            return Err(Error::config("schedule.epsilon0", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay) {
            return Err(Error::config("schedule.epsilon_decay", "must lie in [0, 1]"));
        }
        if self.epsilon_decay_every == 0 {
            return Err(Error::config("schedule.epsilon_decay_every", "must be positive"));
        }
        positive_count("schedule.sampler_strongest_k", self.sampler_strongest_k)?;
        positive_count("schedule.sampler_attempts", self.sampler_attempts)?;
        if !(self.confidence_margin >= 0.0) {
            return Err(Error::config("schedule.confidence_margin", "must be nonnegative"));
        }
        if self.confidence_max_samples < self.confidence_min_samples {
            return Err(Error::config(
                "schedule.confidence_max_samples",
                "must be at least confidence_min_samples",
            ));
        }
        if !(self.confidence_z >= 0.0) {
            return Err(Error::config("schedule.confidence_z", "must be nonnegative"));
        }
        positive("schedule.ci_duration_s", self.ci_duration_s)?;
        Ok(())
    }
}

/// How much topology the cloud knows when the rate models are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Knowledge {
    /// Path losses and LoS angles.
    #[default]
    Full,
    /// Path losses only.
    Partial,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub knowledge: Knowledge,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Mini-batch steps run by every dataset update.
    pub steps_per_update: usize,
    /// Consecutive stalled steps before the gradient is perturbed.
    pub stall_window: usize,
    pub stall_tolerance: f64,
    /// Perturbation scale relative to the parameter RMS.
    pub perturbation_scale: f64,
    /// Upper bound on perturbations per update.
    pub max_perturbations: usize,
    /// Output scale of the approximators, in bit/s.
    pub rate_unit_bps: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            knowledge: Knowledge::Full,
            hidden_layers: 5,
            hidden_width: 20,
            batch_size: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            steps_per_update: 20,
            stall_window: 20,
            stall_tolerance: 1e-6,
            perturbation_scale: 1e-4,
            max_perturbations: 3,
            rate_unit_bps: 1e9,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        positive_count("learning.hidden_layers", self.hidden_layers)?;
        positive_count("learning.hidden_width", self.hidden_width)?;
        positive_count("learning.batch_size", self.batch_size)?;
        positive("learning.learning_rate", self.learning_rate)?;
        positive("learning.rate_unit_bps", self.rate_unit_bps)?;
        for (name, b) in [("learning.beta1", self.beta1), ("learning.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventAction {
    /// Add `count` UEs to every operator.
    Add,
    /// Remove the last `count` UEs of every operator.
    Remove,
}

/// A change of the UE population at a given CI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeEvent {
    pub ci: u64,
    pub action: EventAction,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    #[default]
    Toy,
    Manhattan,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub topology: TopologyKind,
    pub topology_file: Option<String>,
    pub ci_count: u64,
    /// Compute the true-rate oracle and report the gap in the run summary.
    pub compute_oracle: bool,
    /// UE (1-based) whose interference terms are reported in summaries.
    pub focus_ue: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "toy".to_string(),
            topology: TopologyKind::Toy,
            topology_file: None,
            ci_count: 10_000,
            compute_oracle: false,
            focus_ue: 6,
        }
    }
}

/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub radio: RadioConfig,
    pub sharing: SharingConfig,
    pub schedule: ScheduleConfig,
    pub learning: LearningConfig,
    #[serde(rename = "event")]
    pub events: Vec<UeEvent>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            scenario: ScenarioConfig::default(),
            radio: RadioConfig::default(),
            sharing: SharingConfig::default(),
            schedule: ScheduleConfig::default(),
            learning: LearningConfig::default(),
            events: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let field = e
                .span()
                .map(|s| format!("config (bytes {}..{})", s.start, s.end))
                .unwrap_or_else(|| "config".to_string());
            Error::config(field, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        self.sharing.validate()?;
        self.schedule.validate()?;
        self.learning.validate()?;
        if self.scenario.topology == TopologyKind::File && self.scenario.topology_file.is_none() {
            return Err(Error::config(
                "scenario.topology_file",
                "required when scenario.topology = \"file\"",
            ));
        }
        positive_count("scenario.focus_ue", self.scenario.focus_ue)?;
        let mut last = 0;
        for (k, ev) in self.events.iter().enumerate() {
            if ev.ci == 0 || ev.ci < last {
                return Err(Error::config(
                    format!("event[{k}].ci"),
                    "events must have positive, non-decreasing CI indices",
                ));
            }
            if ev.count == 0 {
                return Err(Error::config(format!("event[{k}].count"), "must be positive"));
            }
            last = ev.ci;
        }
        Ok(())
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be finite"))
    }
}

fn positive_count(field: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::config(field, "must be positive"))
    }
}
