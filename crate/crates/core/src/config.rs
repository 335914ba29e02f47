//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::SobolParameter;
use crate::eventkey::WorldSeed;
use crate::models::{ClinicModelParams, InfectionModelParams, Mode, ModelSpec, Observable, Scenario};
use crate::{Error, Result};

/// Seed stream used when a config does not give one.
pub const DEFAULT_SEED_STREAM: WorldSeed = WorldSeed(0x00C0_FFEE_5EED_0000_0000_0000_0000_002A);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Infection,
    Clinic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SobolConfig {
    pub parameter: SobolParameter,
    pub grid: Vec<f64>,
    pub m_inner: usize,
}

impl Default for SobolConfig {
    fn default() -> Self {
        SobolConfig { parameter: SobolParameter::Placebo, grid: vec![0.0, 1.0], m_inner: 200 }
    }
}

/// Everything that determines an experiment. Missing fields take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub mode: Mode,
    /// Scenario of a single run.
    pub scenario: Scenario,
    /// Scenarios compared by the paired experiments, `[y0, y1]`.
    pub scenario_pair: [Scenario; 2],
    /// World of a single run or audit.
    pub seed: WorldSeed,
    /// Root from which replicate and experiment seeds are derived.
    pub seed_stream: WorldSeed,
    /// Paired replicates.
    pub m: usize,
    /// Worlds in the placebo experiment.
    pub n_seeds: usize,
    pub observable: Observable,
    pub infection: InfectionModelParams,
    pub clinic: ClinicModelParams,
    pub sobol: SobolConfig,
    pub strict_ledger: bool,
    pub trace: bool,
    /// Output directory; not part of the digest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Infection,
            mode: Mode::Keyed,
            scenario: Scenario::Baseline,
            scenario_pair: [Scenario::Baseline, Scenario::Intervention],
            seed: WorldSeed(1),
            seed_stream: DEFAULT_SEED_STREAM,
            m: 1000,
            n_seeds: 1000,
            observable: Observable::Cases,
            infection: InfectionModelParams::default(),
            clinic: ClinicModelParams::default(),
            sobol: SobolConfig::default(),
            strict_ledger: false,
            trace: false,
            out: None,
        }
    }
}

#[derive(Serialize)]
struct WorldIdentity<'a> {
    model: &'a ModelSpec,
    mode: Mode,
    seed: WorldSeed,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec().validate()?;
        if self.sobol.grid.len() < 2 || self.sobol.m_inner < 2 {
            return Err(Error::Config("sobol needs at least 2 grid values and m_inner >= 2".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        match self.model {
            ModelKind::Infection => ModelSpec::Infection(self.infection.clone()),
            ModelKind::Clinic => ModelSpec::Clinic(self.clinic.clone()),
        }
    }

    /// SHA-256 of the compact JSON form with `out` cleared.
    pub fn digest(&self) -> String {
        let canonical = ExperimentConfig { out: None, ..self.clone() };
        sha256_hex(serde_json::to_string(&canonical).expect("config serializes").as_bytes())
    }

    /// Digest of the model, mode and seed only. Runs of one world under
    /// different scenarios share it.
    pub fn world_digest(&self) -> String {
        let spec = self.model_spec();
        let id = WorldIdentity { model: &spec, mode: self.mode, seed: self.seed };
        sha256_hex(serde_json::to_string(&id).expect("world serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trips() {
        let c = ExperimentConfig {
            model: ModelKind::Clinic,
            mode: Mode::Stateful,
            scenario: Scenario::Intervention,
            observable: Observable::Agent(3),
            infection: InfectionModelParams::uniform(7, 0.125).with_vaccinated(vec![2, 5]),
            sobol: SobolConfig { parameter: SobolParameter::VaccineEfficacy, grid: vec![0.0, 0.25, 0.5], m_inner: 200 },
            out: Some("results".into()),
            ..Default::default()
        };
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn unknown_field_names_the_field() {
        let err = ExperimentConfig::from_json("{\n  \"mode\": \"keyed\",\n  \"bogus\": 1\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn seeds_must_be_32_hex() {
        assert!(ExperimentConfig::from_json(r#"{"seed": "1"}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"seed": "000000000000000000000000000000ff"}"#).unwrap();
        assert_eq!(c.seed, WorldSeed(255));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ExperimentConfig::from_json(
            r#"{"infection": {"n_agents": 2, "p_infect": 1.5, "incubation_rate": 1}}"#
        )
        .is_err());
        assert!(ExperimentConfig::from_json(r#"{"sobol": {"grid": [1]}}"#).is_err());
    }

    #[test]
    fn digest_ignores_out_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out: Some("x".into()), ..a.clone() };
        let c = ExperimentConfig { m: 5, ..a.clone() };
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn world_digest_ignores_scenario() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { scenario: Scenario::Intervention, ..a.clone() };
        let c = ExperimentConfig { seed: WorldSeed(2), ..a.clone() };
        assert_eq!(a.world_digest(), b.world_digest());
        assert_ne!(a.digest(), b.digest());
        assert_ne!(a.world_digest(), c.world_digest());
    }
}
