//! Single-step infection model with a conditional incubation draw.
//!
//! Agent `i` (1-based) is infected with probability `p_infect[i]`, scaled by
//! `1 - VE` when vaccinated in the intervention scenario. An infected agent
//! then draws an exponential incubation period. That conditional draw is
//! what shifts every later draw index under a stateful generator.

use serde::{Deserialize, Serialize};

use super::{check_probability, Mode, RunOptions, RunOutcome, Sampler, Scenario};
use crate::cbrng::Distribution;
use crate::eventkey::{EventId, EventLedger, WorldSeed};
use crate::{Error, Result};

pub const INFECTION: &str = "infection";
pub const INCUBATION: &str = "incubation";
pub const EFFICACY_CHECK: &str = "efficacy_check";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInfectionParams")]
pub struct InfectionModelParams {
    pub n_agents: usize,
    pub p_infect: Vec<f64>,
    pub vaccine_efficacy: f64,
    /// 1-based indices of agents vaccinated in the intervention scenario.
    pub vaccinated: Vec<u64>,
    /// Vaccinated agents draw an efficacy check that has no effect.
    pub placebo: bool,
    pub incubation_rate: f64,
}

impl Default for InfectionModelParams {
    fn default() -> Self {
        InfectionModelParams {
            n_agents: 100,
            p_infect: vec![0.3; 100],
            vaccine_efficacy: 0.5,
            vaccinated: vec![1],
            placebo: false,
            incubation_rate: 0.2,
        }
    }
}

impl InfectionModelParams {
    /// `n` agents sharing infection probability `p`; other fields default.
    pub fn uniform(n: usize, p: f64) -> Self {
        InfectionModelParams { n_agents: n, p_infect: vec![p; n], ..Default::default() }
    }

    pub fn with_efficacy(mut self, ve: f64) -> Self {
        self.vaccine_efficacy = ve;
        self
    }

    pub fn with_placebo(mut self, placebo: bool) -> Self {
        self.placebo = placebo;
        self
    }

    pub fn with_vaccinated(mut self, agents: impl Into<Vec<u64>>) -> Self {
        self.vaccinated = agents.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::InvalidParams("n_agents must be positive".into()));
        }
        if self.p_infect.len() != self.n_agents {
            return Err(Error::InvalidParams(format!(
                "p_infect has {} entries for {} agents",
                self.p_infect.len(),
                self.n_agents
            )));
        }
        for (i, &p) in self.p_infect.iter().enumerate() {
            check_probability(&format!("p_infect[{}]", i + 1), p)?;
        }
        check_probability("vaccine_efficacy", self.vaccine_efficacy)?;
        if let Some(&a) = self.vaccinated.iter().find(|&&a| a == 0 || a as usize > self.n_agents) {
            return Err(Error::InvalidParams(format!("vaccinated agent {a} outside 1..={}", self.n_agents)));
        }
        if !(self.incubation_rate > 0.0 && self.incubation_rate.is_finite()) {
            return Err(Error::InvalidParams(format!("incubation_rate = {} must be positive", self.incubation_rate)));
        }
        Ok(())
    }

    fn is_vaccinated(&self, agent: u64) -> bool {
        self.vaccinated.contains(&agent)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Risks {
    Shared(f64),
    PerAgent(Vec<f64>),
}

/// Config form: `p_infect` may be one number shared by all agents, and
/// `vaccinated_agent` is accepted for a single vaccinee.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInfectionParams {
    n_agents: usize,
    p_infect: Risks,
    #[serde(default)]
    vaccine_efficacy: f64,
    #[serde(default)]
    vaccinated: Option<Vec<u64>>,
    #[serde(default)]
    vaccinated_agent: Option<u64>,
    #[serde(default)]
    placebo: bool,
    incubation_rate: f64,
}

impl TryFrom<RawInfectionParams> for InfectionModelParams {
    type Error = Error;

    fn try_from(raw: RawInfectionParams) -> Result<Self> {
        let p_infect = match raw.p_infect {
            Risks::Shared(p) => vec![p; raw.n_agents],
            Risks::PerAgent(v) => v,
        };
        let vaccinated = match (raw.vaccinated, raw.vaccinated_agent) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParams("give either vaccinated or vaccinated_agent, not both".into()))
            }
            (Some(v), None) => v,
            (None, a) => a.into_iter().collect(),
        };
        let params = InfectionModelParams {
            n_agents: raw.n_agents,
            p_infect,
            vaccine_efficacy: raw.vaccine_efficacy,
            vaccinated,
            placebo: raw.placebo,
            incubation_rate: raw.incubation_rate,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Runs the infection model in either mode.
pub fn simulate_infection(
    seed: WorldSeed,
    params: &InfectionModelParams,
    scenario: Scenario,
    mode: Mode,
    ledger: Option<&mut EventLedger>,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    params.validate()?;
    let mut sampler = Sampler::new(seed, mode, ledger, opts);
    let incubation = Distribution::Exponential { rate: params.incubation_rate };
    let n = params.n_agents;
    let mut infected = Vec::with_capacity(n);
    let mut onset_day = Vec::with_capacity(n);

    for (idx, &base) in params.p_infect.iter().enumerate() {
        let agent = idx as u64 + 1;
        let mut p = base;
        if scenario == Scenario::Intervention && params.is_vaccinated(agent) {
            if params.placebo {
                sampler.draw(EventId::new(EFFICACY_CHECK, vec![agent]))?;
            } else {
                p *= 1.0 - params.vaccine_efficacy;
            }
        }
        let hit = sampler.bernoulli(EventId::new(INFECTION, vec![agent]), agent, p)?;
        infected.push(hit);
        if hit {
            let u = sampler.draw(EventId::new(INCUBATION, vec![agent]))?;
            onset_day.push(Some(incubation.quantile(u)));
        } else {
            onset_day.push(None);
        }
    }
    Ok(sampler.finish(infected, onset_day))
}

/// One shared stateful generator consumed in agent order.
pub fn simulate_infection_stateful(
    seed: WorldSeed,
    params: &InfectionModelParams,
    scenario: Scenario,
) -> Result<RunOutcome> {
    simulate_infection(seed, params, scenario, Mode::Stateful, None, &RunOptions::default())
}

/// Every draw keyed by its event; `ledger` guards against reuse.
pub fn simulate_infection_keyed(
    seed: WorldSeed,
    params: &InfectionModelParams,
    scenario: Scenario,
    ledger: Option<&mut EventLedger>,
) -> Result<RunOutcome> {
    simulate_infection(seed, params, scenario, Mode::Keyed, ledger, &RunOptions::default())
}
