//! Reference micro-models, each runnable with a stateful generator or with
//! event-keyed draws.
//!
//! Both modes share one control flow: the model asks a [`Sampler`] for the
//! uniform of a named event. In keyed mode the name is the key; in stateful
//! mode it is only a label for whichever draw the generator hands out next.

mod clinic;
mod infection;
mod stateful;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cbrng::UnitUniform;
use crate::eventkey::{event_uniform, EventId, EventLedger, WorldSeed};
use crate::Result;

pub use clinic::{simulate_clinic, ClinicModelParams, Encounter, Keying};
pub use infection::{simulate_infection, simulate_infection_keyed, simulate_infection_stateful, InfectionModelParams};
pub use stateful::{stateful_next, StatefulGenerator, STATEFUL_GENERATOR_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stateful,
    Keyed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Stateful => "stateful",
            Mode::Keyed => "keyed",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Baseline or intervention world. For the clinic model the intervention is
/// the worker swap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Baseline,
    #[serde(alias = "swapped")]
    Intervention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Reject repeated queries of one event (keyed mode only).
    pub strict_ledger: bool,
    pub trace: bool,
    /// Record the noise map and per-event Bernoulli records.
    pub noise: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { strict_ledger: false, trace: true, noise: true }
    }
}

impl RunOptions {
    /// Outcomes only; what large replicate sweeps use.
    pub fn outcomes_only() -> Self {
        RunOptions { strict_ledger: false, trace: false, noise: false }
    }

    pub fn strict(mut self) -> Self {
        self.strict_ledger = true;
        self
    }
}

/// One consumed uniform, in consumption order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based position of this draw within the run.
    pub draw: u64,
    pub event: EventId,
    pub u: f64,
}

/// Where a uniform came from: an event key, or a stateful draw position
/// together with the event that happened to consume it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseKey {
    Draw { draw: u64, consumer: EventId },
    Event(EventId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub event: NoiseKey,
    pub u: f64,
}

/// A Bernoulli event `y = [u < p]` together with the unit (agent or
/// patient, 1-based) whose outcome it drives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliRecord {
    pub event: EventId,
    pub unit: u64,
    pub p: f64,
    pub y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub mode: Mode,
    pub seed: WorldSeed,
    pub cases: u64,
    pub infected: Vec<bool>,
    pub onset_day: Vec<Option<f64>>,
    /// Total uniforms consumed.
    pub draws: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw_trace: Option<Vec<TraceEntry>>,
    #[serde(default)]
    pub noise_map: Option<Vec<NoiseRecord>>,
    #[serde(default)]
    pub events: Option<Vec<BernoulliRecord>>,
}

impl RunOutcome {
    /// Bitwise equality of cases, infection vector and onset vector.
    pub fn same_outcomes(&self, other: &RunOutcome) -> bool {
        self.cases == other.cases
            && self.infected == other.infected
            && self.onset_day.len() == other.onset_day.len()
            && self.onset_day.iter().zip(&other.onset_day).all(|(a, b)| a.map(f64::to_bits) == b.map(f64::to_bits))
    }

    /// Noise by event description. Keyed runs map each event key; stateful
    /// runs map each consuming event to the draw it happened to receive.
    pub fn noise_by_event(&self) -> Option<BTreeMap<&EventId, f64>> {
        let records = self.noise_map.as_ref()?;
        Some(
            records
                .iter()
                .map(|r| match &r.event {
                    NoiseKey::Event(e) => (e, r.u),
                    NoiseKey::Draw { consumer, .. } => (consumer, r.u),
                })
                .collect(),
        )
    }

    pub fn bernoulli_by_event(&self) -> Option<BTreeMap<&EventId, &BernoulliRecord>> {
        Some(self.events.as_ref()?.iter().map(|r| (&r.event, r)).collect())
    }

    /// Drops the draw trace, as written when tracing is off.
    pub fn without_trace(mut self) -> Self {
        self.draw_trace = None;
        self
    }
}

/// Scalar observable of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    #[default]
    Cases,
    /// Infection indicator of one agent (1-based).
    Agent(u64),
}

impl Observable {
    pub fn of(self, outcome: &RunOutcome) -> f64 {
        match self {
            Observable::Cases => outcome.cases as f64,
            Observable::Agent(i) => {
                let infected = (i as usize).checked_sub(1).and_then(|k| outcome.infected.get(k)).copied();
                f64::from(u8::from(infected.unwrap_or(false)))
            }
        }
    }
}

/// Either reference model with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Infection(InfectionModelParams),
    Clinic(ClinicModelParams),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Infection(p) => p.validate(),
            ModelSpec::Clinic(p) => p.validate(),
        }
    }

    pub fn run(&self, seed: WorldSeed, scenario: Scenario, mode: Mode, opts: &RunOptions) -> Result<RunOutcome> {
        let mut ledger = (opts.strict_ledger && mode == Mode::Keyed).then(EventLedger::strict);
        match self {
            ModelSpec::Infection(p) => simulate_infection(seed, p, scenario, mode, ledger.as_mut(), opts),
            ModelSpec::Clinic(p) => simulate_clinic(seed, p, scenario, mode, ledger.as_mut(), opts),
        }
    }
}

enum Source<'a> {
    Stateful(StatefulGenerator),
    Keyed { seed: WorldSeed, ledger: Option<&'a mut EventLedger> },
}

/// Hands out uniforms for named events and records what was consumed.
pub(crate) struct Sampler<'a> {
    source: Source<'a>,
    mode: Mode,
    seed: WorldSeed,
    draws: u64,
    trace: Option<Vec<TraceEntry>>,
    noise: Option<Vec<NoiseRecord>>,
    events: Option<Vec<BernoulliRecord>>,
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(seed: WorldSeed, mode: Mode, ledger: Option<&'a mut EventLedger>, opts: &RunOptions) -> Self {
        let source = match mode {
            Mode::Stateful => Source::Stateful(StatefulGenerator::new(seed.fold64())),
            Mode::Keyed => Source::Keyed { seed, ledger },
        };
        Sampler {
            source,
            mode,
            seed,
            draws: 0,
            trace: opts.trace.then(Vec::new),
            noise: opts.noise.then(Vec::new),
            events: opts.noise.then(Vec::new),
        }
    }

    pub(crate) fn draw(&mut self, event: EventId) -> Result<UnitUniform> {
        let u = match &mut self.source {
            Source::Stateful(gen) => gen.next_uniform(),
            Source::Keyed { seed, ledger } => event_uniform(*seed, &event, ledger.as_deref_mut())?,
        };
        self.draws += 1;
        if let Some(noise) = &mut self.noise {
            let key = match self.mode {
                Mode::Stateful => NoiseKey::Draw { draw: self.draws, consumer: event.clone() },
                Mode::Keyed => NoiseKey::Event(event.clone()),
            };
            noise.push(NoiseRecord { event: key, u: u.value() });
        }
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry { draw: self.draws, event, u: u.value() });
        }
        Ok(u)
    }

    /// Draws `[u < p]` for `event` and records it against `unit`.
    pub(crate) fn bernoulli(&mut self, event: EventId, unit: u64, p: f64) -> Result<bool> {
        let record = self.events.is_some().then(|| event.clone());
        let y = self.draw(event)?.value() < p;
        if let (Some(events), Some(event)) = (&mut self.events, record) {
            events.push(BernoulliRecord { event, unit, p, y });
        }
        Ok(y)
    }

    pub(crate) fn finish(self, infected: Vec<bool>, onset_day: Vec<Option<f64>>) -> RunOutcome {
        RunOutcome {
            mode: self.mode,
            seed: self.seed,
            cases: infected.iter().filter(|&&b| b).count() as u64,
            infected,
            onset_day,
            draws: self.draws,
            draw_trace: self.trace,
            noise_map: self.noise,
            events: self.events,
        }
    }
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(crate::Error::InvalidParams(format!("{name} = {p} is not a probability")))
    }
}
