//! Clinic encounters between patients and healthcare workers.
//!
//! Each scheduled encounter carries a risk that is the same in every
//! scenario; the intervention only changes which worker is present. Slot
//! keying ties an encounter's noise to the contact opportunity `(t, i, r)`,
//! dyad keying to the patient-worker pair `(t, i, worker)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{check_probability, Mode, RunOptions, RunOutcome, Sampler, Scenario};
use crate::eventkey::{EventId, EventLedger, WorldSeed};
use crate::{Error, Result};

pub const ENCOUNTER: &str = "encounter";
pub const CONTACT: &str = "contact";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keying {
    Slot,
    Dyad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Encounter {
    pub day: u64,
    /// 1-based.
    pub patient: u64,
    /// 1-based position of this encounter in the patient's day.
    pub slot: u64,
    /// Worker present at baseline.
    pub worker: u64,
    /// Worker present when swapped.
    pub alternate_worker: u64,
    pub risk: f64,
}

impl Encounter {
    pub fn worker_in(&self, scenario: Scenario) -> u64 {
        match scenario {
            Scenario::Baseline => self.worker,
            Scenario::Intervention => self.alternate_worker,
        }
    }

    pub fn is_swapped(&self) -> bool {
        self.worker != self.alternate_worker
    }

    pub fn event_id(&self, keying: Keying, scenario: Scenario) -> EventId {
        match keying {
            Keying::Slot => EventId::new(ENCOUNTER, vec![self.day, self.patient, self.slot]),
            Keying::Dyad => EventId::new(CONTACT, vec![self.day, self.patient, self.worker_in(scenario)]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicModelParams {
    pub n_patients: u64,
    pub n_workers: u64,
    pub keying: Keying,
    pub encounters: Vec<Encounter>,
}

impl Default for ClinicModelParams {
    fn default() -> Self {
        Self::example(Keying::Slot)
    }
}

impl ClinicModelParams {
    /// 30 patients, 6 workers, 5 days with two encounters per patient-day.
    /// A third of patient-days get the next worker over when swapped.
    pub fn example(keying: Keying) -> Self {
        let (n_patients, n_workers) = (30u64, 6u64);
        let mut encounters = Vec::new();
        for day in 0..5u64 {
            for patient in 1..=n_patients {
                for slot in 1..=2u64 {
                    let worker = 1 + (patient + slot + day) % n_workers;
                    let alternate_worker = if (patient + day) % 3 == 0 { 1 + worker % n_workers } else { worker };
                    encounters.push(Encounter { day, patient, slot, worker, alternate_worker, risk: 0.08 });
                }
            }
        }
        ClinicModelParams { n_patients, n_workers, keying, encounters }
    }

    pub fn with_keying(mut self, keying: Keying) -> Self {
        self.keying = keying;
        self
    }

    /// Same schedule with no worker ever swapped.
    pub fn without_swaps(mut self) -> Self {
        for e in &mut self.encounters {
            e.alternate_worker = e.worker;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 || self.n_workers == 0 {
            return Err(Error::InvalidParams("n_patients and n_workers must be positive".into()));
        }
        let mut slots = BTreeSet::new();
        let mut dyads = [BTreeSet::new(), BTreeSet::new()];
        for e in &self.encounters {
            check_probability("encounter risk", e.risk)?;
            if e.patient == 0 || e.patient > self.n_patients {
                return Err(Error::InvalidParams(format!("patient {} outside 1..={}", e.patient, self.n_patients)));
            }
            for w in [e.worker, e.alternate_worker] {
                if w == 0 || w > self.n_workers {
                    return Err(Error::InvalidParams(format!("worker {w} outside 1..={}", self.n_workers)));
                }
            }
            if !slots.insert((e.day, e.patient, e.slot)) {
                return Err(Error::InvalidParams(format!(
                    "slot {} of patient {} on day {} scheduled twice",
                    e.slot, e.patient, e.day
                )));
            }
            if self.keying == Keying::Dyad {
                for (set, s) in dyads.iter_mut().zip([Scenario::Baseline, Scenario::Intervention]) {
                    if !set.insert((e.day, e.patient, e.worker_in(s))) {
                        return Err(Error::InvalidParams(format!(
                            "dyad keying needs one encounter per patient-worker-day; patient {} meets worker {} twice on day {}",
                            e.patient,
                            e.worker_in(s),
                            e.day
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs the clinic model. A patient is infected if any encounter transmits;
/// onset is the first such day.
pub fn simulate_clinic(
    seed: WorldSeed,
    params: &ClinicModelParams,
    scenario: Scenario,
    mode: Mode,
    ledger: Option<&mut EventLedger>,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    params.validate()?;
    let mut sampler = Sampler::new(seed, mode, ledger, opts);
    let n = params.n_patients as usize;
    let mut infected = vec![false; n];
    let mut onset_day: Vec<Option<f64>> = vec![None; n];
    for e in &params.encounters {
        let hit = sampler.bernoulli(e.event_id(params.keying, scenario), e.patient, e.risk)?;
        if hit {
            let k = e.patient as usize - 1;
            infected[k] = true;
            let day = e.day as f64;
            onset_day[k] = Some(onset_day[k].map_or(day, |d| d.min(day)));
        }
    }
    Ok(sampler.finish(infected, onset_day))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_is_valid_under_both_keyings() {
        ClinicModelParams::example(Keying::Slot).validate().unwrap();
        ClinicModelParams::example(Keying::Dyad).validate().unwrap();
        assert!(ClinicModelParams::example(Keying::Slot).encounters.iter().any(Encounter::is_swapped));
    }

    #[test]
    fn rejects_bad_schedules() {
        let mut p = ClinicModelParams::example(Keying::Slot);
        p.encounters[0].risk = 1.5;
        assert!(p.validate().is_err());

        let mut p = ClinicModelParams::example(Keying::Slot);
        let dup = p.encounters[0].clone();
        p.encounters.push(dup);
        assert!(p.validate().is_err());

        let mut p = ClinicModelParams::example(Keying::Slot);
        p.encounters[0].alternate_worker = 99;
        assert!(p.validate().is_err());

        // Same worker twice in one day is fine for slots, reuse for dyads.
        let mut p = ClinicModelParams::example(Keying::Slot).without_swaps();
        p.encounters[1].worker = p.encounters[0].worker;
        p.encounters[1].alternate_worker = p.encounters[0].worker;
        p.validate().unwrap();
        assert!(p.with_keying(Keying::Dyad).validate().is_err());
    }

    #[test]
    fn slot_keyed_swap_is_invisible() {
        let p = ClinicModelParams::example(Keying::Slot);
        for s in 0..50u128 {
            let mut l0 = EventLedger::strict();
            let mut l1 = EventLedger::strict();
            let o = RunOptions::default();
            let a = simulate_clinic(WorldSeed(s), &p, Scenario::Baseline, Mode::Keyed, Some(&mut l0), &o).unwrap();
            let b = simulate_clinic(WorldSeed(s), &p, Scenario::Intervention, Mode::Keyed, Some(&mut l1), &o).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dyad_keys_follow_worker() {
        let p = ClinicModelParams::example(Keying::Dyad);
        let e = p.encounters.iter().find(|e| e.is_swapped()).unwrap();
        assert_ne!(e.event_id(Keying::Dyad, Scenario::Baseline), e.event_id(Keying::Dyad, Scenario::Intervention));
        assert_eq!(e.event_id(Keying::Slot, Scenario::Baseline), e.event_id(Keying::Slot, Scenario::Intervention));
    }
}
