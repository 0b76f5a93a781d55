use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dgp::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fe::SaControl;
use crate::grouptime::ControlGroup;
use crate::impute::McConfig;

/// Estimators the harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    Twfe,
    TwfeEs,
    Sa,
    Cs,
    Bjs,
    Mc,
    Etwfe,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 7] = [
        EstimatorId::Twfe,
        EstimatorId::TwfeEs,
        EstimatorId::Sa,
        EstimatorId::Cs,
        EstimatorId::Bjs,
        EstimatorId::Mc,
        EstimatorId::Etwfe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorId::Twfe => "twfe",
            EstimatorId::TwfeEs => "twfe-es",
            EstimatorId::Sa => "sa",
            EstimatorId::Cs => "cs",
            EstimatorId::Bjs => "bjs",
            EstimatorId::Mc => "mc",
            EstimatorId::Etwfe => "etwfe",
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::UnknownEstimator(s.to_string()))
    }
}

/// Knobs shared by every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSettings {
    /// `(max_lead, max_lag)` for the event-study regression; `None` saturates
    /// it with every event time the panel supports.
    pub es_window: Option<(u32, u32)>,
    pub sa_control: SaControl,
    pub cs_control: ControlGroup,
    /// Base period shift `a` in `g - 1 - a` for group-time contrasts.
    pub anticipation: u32,
    /// Depth of the in-sample pre-period residual points for imputation estimators.
    pub placebo_leads: u32,
    pub mc: McConfig,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            es_window: None,
            sa_control: SaControl::NeverTreated,
            cs_control: ControlGroup::NeverTreated,
            anticipation: 0,
            placebo_leads: 5,
            mc: McConfig::bench(),
        }
    }
}

/// A full Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub scenarios: Vec<ScenarioConfig>,
    pub estimators: Vec<EstimatorId>,
    pub replications: usize,
    /// Replication `r` of every scenario draws from `stream(base_seed, r)`.
    pub base_seed: u64,
    /// Fewer replications for selected estimators.
    #[serde(default)]
    pub rep_override: BTreeMap<EstimatorId, usize>,
    #[serde(default)]
    pub settings: EstimatorSettings,
    /// SHA-256 of each preset source the scenarios came from.
    #[serde(default)]
    pub preset_hashes: BTreeMap<String, String>,
    /// Lower end of the pre-treatment window used for placebo flags.
    #[serde(default = "default_placebo_min_e")]
    pub placebo_min_e: i32,
}

fn default_placebo_min_e() -> i32 {
    -5
}

/// Replications run for matrix completion unless overridden.
pub const MC_DEFAULT_REPS: usize = 100;
pub const DEFAULT_REPS: usize = 200;

impl BenchPlan {
    pub fn new(scenarios: Vec<ScenarioConfig>, estimators: Vec<EstimatorId>, replications: usize, base_seed: u64) -> Self {
        let mut rep_override = BTreeMap::new();
        rep_override.insert(EstimatorId::Mc, MC_DEFAULT_REPS);
        BenchPlan {
            scenarios,
            estimators,
            replications,
            base_seed,
            rep_override,
            settings: EstimatorSettings::default(),
            preset_hashes: BTreeMap::new(),
            placebo_min_e: default_placebo_min_e(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::EmptyPlan("scenarios"));
        }
        if self.estimators.is_empty() {
            return Err(Error::EmptyPlan("estimators"));
        }
        if self.replications == 0 {
            return Err(Error::EmptyPlan("replications"));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        self.settings.mc.validate()
    }

    /// Replications actually run for `id`.
    pub fn reps_for(&self, id: EstimatorId) -> usize {
        self.rep_override
            .get(&id)
            .map_or(self.replications, |&r| r.min(self.replications))
    }

    /// Estimators that run in replication `r`.
    pub fn estimators_for(&self, r: usize) -> Vec<EstimatorId> {
        self.estimators.iter().copied().filter(|&e| r < self.reps_for(e)).collect()
    }
}
