//! Run configuration: a TOML file with nested sections, unknown keys
//! rejected, every field optional with defaults mirroring the reference
//! two-computer experiment setup. Validation collects all violations rather
//! than stopping at the first.

use serde::{Deserialize, Serialize};

use sentinel_core::model::{CostModel, ModelFlags};
use sentinel_core::observer::{self, ObserverState};
use sentinel_core::solver::SolveSettings;
use sentinel_core::{Error, Result};

/// Either one value for every computer or a per-computer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerComputer {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerComputer {
    pub fn resolve(&self, k: usize) -> std::result::Result<Vec<f64>, String> {
        match self {
            PerComputer::Uniform(v) => Ok(vec![*v; k]),
            PerComputer::List(vs) if vs.len() == k => Ok(vs.clone()),
            PerComputer::List(vs) => {
                Err(format!("expected {k} entries (one per computer), got {}", vs.len()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub k: usize,
    pub h_admissible_on_w: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { k: 2, h_admissible_on_w: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateCosts {
    pub normal: f64,
    pub compromised: f64,
    pub fully_compromised: f64,
    pub remote_compromised: f64,
}

impl Default for StateCosts {
    fn default() -> Self {
        StateCosts { normal: 0.0, compromised: 1.0, fully_compromised: 2.0, remote_compromised: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostsSection {
    pub beta: f64,
    pub null: f64,
    pub sense: PerComputer,
    pub reimage: PerComputer,
    pub state: StateCosts,
}

impl Default for CostsSection {
    fn default() -> Self {
        CostsSection {
            beta: 0.9,
            null: 0.0,
            sense: PerComputer::Uniform(0.1),
            reimage: PerComputer::Uniform(10.0),
            state: StateCosts::default(),
        }
    }
}

/// Where the observer is rooted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialObserver {
    /// The all-normal singleton: the defender acts before any attack.
    AllNormal,
    /// The belief at the first decision epoch after the attacker's opening
    /// move. This rooting reproduces the reference observer sizes.
    PostAttack,
    /// Every system state is a candidate.
    Full,
}

impl std::fmt::Display for InitialObserver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialObserver::AllNormal => f.write_str("all-normal"),
            InitialObserver::PostAttack => f.write_str("post-attack"),
            InitialObserver::Full => f.write_str("full"),
        }
    }
}

impl std::str::FromStr for InitialObserver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-normal" => Ok(InitialObserver::AllNormal),
            "post-attack" => Ok(InitialObserver::PostAttack),
            "full" => Ok(InitialObserver::Full),
            other => Err(Error::Parse(format!(
                "unknown initial observer {other:?} (expected all-normal, post-attack, or full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverSection {
    pub initial: InitialObserver,
    pub state_budget: usize,
}

impl Default for ObserverSection {
    fn default() -> Self {
        ObserverSection { initial: InitialObserver::PostAttack, state_budget: 1 << 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { tolerance: 1e-9, max_iterations: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub r_from: f64,
    pub r_to: f64,
    pub r_step: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { r_from: 3.0, r_to: 30.0, r_step: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Output directory; empty means the SENTINEL_OUT_DIR environment
    /// variable or the current directory.
    pub out_dir: String,
    pub seed: u64,
    /// 0 lets the thread pool size itself.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub costs: CostsSection,
    pub observer: ObserverSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Parses and validates, reporting every violation at once.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.model.k == 0 {
            violations.push("model.k: need at least one computer".to_string());
        }
        let s = &self.costs.state;
        let ordered = 0.0 <= s.normal
            && s.normal < s.compromised
            && s.compromised < s.fully_compromised
            && s.fully_compromised < s.remote_compromised
            && s.remote_compromised.is_finite();
        if !ordered {
            violations.push(
                "costs.state: must satisfy 0 <= normal < compromised < fully_compromised < remote_compromised"
                    .to_string(),
            );
        }
        if !(self.costs.beta > 0.0 && self.costs.beta < 1.0) {
            violations.push(format!(
                "costs.beta: discount must lie strictly between 0 and 1, got {}",
                self.costs.beta
            ));
        }
        match (self.costs.sense.resolve(self.model.k), self.costs.reimage.resolve(self.model.k)) {
            (Ok(sense), Ok(reimage)) => {
                for i in 0..self.model.k {
                    if !(0.0 <= self.costs.null
                        && self.costs.null < sense[i]
                        && sense[i] < reimage[i]
                        && reimage[i].is_finite())
                    {
                        violations.push(format!(
                            "costs: computer {} must satisfy 0 <= null < sense < reimage, got {} / {} / {}",
                            i + 1,
                            self.costs.null,
                            sense[i],
                            reimage[i]
                        ));
                    }
                }
            }
            (sense, reimage) => {
                if let Err(e) = sense {
                    violations.push(format!("costs.sense: {e}"));
                }
                if let Err(e) = reimage {
                    violations.push(format!("costs.reimage: {e}"));
                }
            }
        }
        if !(self.solver.tolerance > 0.0) {
            violations.push(format!(
                "solver.tolerance: must be positive, got {}",
                self.solver.tolerance
            ));
        }
        if self.solver.max_iterations == 0 {
            violations.push("solver.max_iterations: must be at least 1".to_string());
        }
        if !(self.sweep.r_from > 0.0 && self.sweep.r_from <= self.sweep.r_to) {
            violations.push(format!(
                "sweep: need 0 < r_from <= r_to, got {}..{}",
                self.sweep.r_from, self.sweep.r_to
            ));
        }
        if !(self.sweep.r_step > 0.0) {
            violations.push(format!("sweep.r_step: must be positive, got {}", self.sweep.r_step));
        }
        if self.observer.state_budget == 0 {
            violations.push("observer.state_budget: must be positive".to_string());
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(violations.join("\n")))
        }
    }

    pub fn flags(&self) -> ModelFlags {
        ModelFlags { h_admissible_on_w: self.model.h_admissible_on_w }
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        let k = self.model.k;
        let s = &self.costs.state;
        CostModel::new(
            [s.normal, s.compromised, s.fully_compromised, s.remote_compromised],
            self.costs.null,
            self.costs.sense.resolve(k).map_err(Error::InvalidParameter)?,
            self.costs.reimage.resolve(k).map_err(Error::InvalidParameter)?,
            self.costs.beta,
        )
    }

    pub fn initial_observer_state(&self) -> Result<ObserverState> {
        let k = self.model.k;
        match self.observer.initial {
            InitialObserver::AllNormal => Ok(observer::initial_observer(k)),
            InitialObserver::PostAttack => observer::post_attack_observer(k, self.flags()),
            InitialObserver::Full => Ok(ObserverState::full(k)),
        }
    }

    pub fn solve_settings(&self) -> SolveSettings {
        SolveSettings {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            initial: None,
        }
    }
}
