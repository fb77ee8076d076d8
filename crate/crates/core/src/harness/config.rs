use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, DqnConfig, SacConfig, TrainConfig};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::fh_model::{CompressionConfig, KnobSets};

use super::eval::EvalConfig;

/// Which controller a run trains or evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AgentSelection {
    Dqn,
    Sac,
    /// Every cell held at the worst-case feasible config.
    Reference,
    /// Every cell held at the given knob values `(q, b_w, r_w)`.
    Fixed { q: u32, b_w: u32, r_w: u32 },
}

impl AgentSelection {
    /// Resolves fixed knob values to indices in `knobs`.
    pub fn fixed_config(&self, knobs: &KnobSets) -> Result<Option<CompressionConfig>> {
        let AgentSelection::Fixed { q, b_w, r_w } = *self else {
            return Ok(None);
        };
        let find = |set: &[u32], v: u32, what: &str| {
            set.iter()
                .position(|&x| x == v)
                .ok_or_else(|| Error::Config(format!("{what} {v} is not in the knob set {set:?}")))
        };
        Ok(Some(CompressionConfig {
            q_idx: find(&knobs.modulation, q, "modulation order")?,
            b_idx: find(&knobs.bitwidth, b_w, "bitwidth")?,
            r_idx: find(&knobs.granularity, r_w, "granularity")?,
        }))
    }
}

impl fmt::Display for AgentSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSelection::Dqn => f.write_str("dqn"),
            AgentSelection::Sac => f.write_str("sac"),
            AgentSelection::Reference => f.write_str("reference"),
            AgentSelection::Fixed { q, b_w, r_w } => write!(f, "fixed:{q},{b_w},{r_w}"),
        }
    }
}

impl FromStr for AgentSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => return Ok(AgentSelection::Dqn),
            "sac" => return Ok(AgentSelection::Sac),
            "reference" => return Ok(AgentSelection::Reference),
            _ => {}
        }
        let bad = || Error::Config(format!("agent `{s}`: expected dqn, sac, reference or fixed:<q>,<b_w>,<r_w>"));
        let spec = s.strip_prefix("fixed:").ok_or_else(bad)?;
        let v: Vec<u32> = spec.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        match v[..] {
            [q, b_w, r_w] => Ok(AgentSelection::Fixed { q, b_w, r_w }),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for AgentSelection {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AgentSelection> for String {
    fn from(a: AgentSelection) -> Self {
        a.to_string()
    }
}

/// Everything one experiment needs. Every section may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub agent: AgentSelection,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub dqn: DqnConfig,
    pub sac: SacConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            agent: AgentSelection::Dqn,
            seed: 0,
            out_dir: PathBuf::from("runs"),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            dqn: DqnConfig::default(),
            sac: SacConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; the name `default` yields the built-in defaults.
    pub fn load(path: &Path) -> Result<Self> {
        if path.as_os_str() == "default" {
            return Ok(Self::default());
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Checks every section, so a bad value fails before any simulation runs.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.dqn.validate()?;
        self.sac.validate()?;
        self.eval.validate()?;
        self.agent.fixed_config(&self.env.params.knobs)?;
        if self.train.log_every == 0 {
            return Err(Error::Config("train.log_every must be positive".into()));
        }
        Ok(())
    }

    /// The learner config for `dqn` or `sac`, `None` for static controllers.
    pub fn agent_config(&self) -> Option<AgentConfig> {
        match self.agent {
            AgentSelection::Dqn => Some(AgentConfig::Dqn(self.dqn.clone())),
            AgentSelection::Sac => Some(AgentConfig::Sac(self.sac.clone())),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_parses_and_prints() {
        for s in ["dqn", "sac", "reference", "fixed:6,16,4"] {
            assert_eq!(s.parse::<AgentSelection>().unwrap().to_string(), s);
        }
        for s in ["", "ppo", "fixed:", "fixed:6,16", "fixed:a,b,c"] {
            assert!(s.parse::<AgentSelection>().is_err(), "{s}");
        }
    }

    #[test]
    fn fixed_values_resolve_to_indices() {
        let k = KnobSets::default();
        let a: AgentSelection = "fixed:8,18,1".parse().unwrap();
        assert_eq!(a.fixed_config(&k).unwrap(), Some(CompressionConfig { q_idx: 1, b_idx: 2, r_idx: 0 }));
        let bad: AgentSelection = "fixed:4,16,4".parse().unwrap();
        assert!(bad.fixed_config(&k).is_err());
    }

    #[test]
    fn toml_round_trip_is_identity() {
        let mut cfg = ExperimentConfig { agent: AgentSelection::Fixed { q: 8, b_w: 20, r_w: 2 }, seed: 11, ..Default::default() };
        cfg.dqn.hidden = Some(vec![32, 32]);
        cfg.eval.n_slots = 5_000;
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn partial_files_fill_defaults_and_typos_fail() {
        let cfg = ExperimentConfig::from_toml("agent = \"sac\"\n[train]\nenv_steps = 10\n").unwrap();
        assert_eq!(cfg.agent, AgentSelection::Sac);
        assert_eq!(cfg.train.env_steps, 10);
        assert_eq!(cfg.env, EnvConfig::default());
        assert!(ExperimentConfig::from_toml("agnet = \"sac\"\n").is_err());
        assert!(ExperimentConfig::from_toml("[env]\ngamma = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[env.params]\nprb_max = 0\n").is_err());
    }
}
