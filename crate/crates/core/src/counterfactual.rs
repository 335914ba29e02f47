//! Paired replicates, treatment-effect estimation and principal strata.
//!
//! A paired replicate runs both scenarios in the same world. The paired
//! estimator's variance is `(Var Y0 + Var Y1 - 2 Cov(Y0, Y1)) / m`; with
//! unbiased sample moments throughout this holds exactly as a sample
//! identity, and [`AteReport`] carries both sides of it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eventkey::{derive_seed, EventId, WorldSeed};
use crate::models::{BernoulliRecord, Mode, ModelSpec, Observable, RunOptions, RunOutcome, Scenario};
use crate::{Error, Result};

pub const REPLICATE_LABEL: &str = "replicate";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedReplicate {
    pub index: u64,
    pub seed: WorldSeed,
    pub y0: f64,
    pub y1: f64,
    pub ite: f64,
    pub outcome0: RunOutcome,
    pub outcome1: RunOutcome,
}

/// What to run for every replicate.
#[derive(Clone, Debug)]
pub struct PairedSpec<'a> {
    pub model: &'a ModelSpec,
    pub scenarios: [Scenario; 2],
    pub mode: Mode,
    pub observable: Observable,
    pub options: RunOptions,
}

impl<'a> PairedSpec<'a> {
    pub fn new(model: &'a ModelSpec, scenarios: [Scenario; 2], mode: Mode) -> Self {
        PairedSpec { model, scenarios, mode, observable: Observable::Cases, options: RunOptions::default() }
    }

    pub fn with_options(mut self, options: RunOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_observable(mut self, observable: Observable) -> Self {
        self.observable = observable;
        self
    }
}

pub fn replicate_seed(stream: WorldSeed, index: u64) -> WorldSeed {
    derive_seed(stream, REPLICATE_LABEL, &[index])
}

/// Runs `m` paired replicates with seeds from the `"replicate"` namespace.
pub fn run_paired(m: usize, spec: &PairedSpec<'_>, seed_stream: WorldSeed) -> Result<Vec<PairedReplicate>> {
    run_paired_in(REPLICATE_LABEL, m, spec, seed_stream)
}

/// As [`run_paired`], drawing replicate seeds from namespace `label`.
pub fn run_paired_in(
    label: &'static str,
    m: usize,
    spec: &PairedSpec<'_>,
    seed_stream: WorldSeed,
) -> Result<Vec<PairedReplicate>> {
    if m < 2 {
        return Err(Error::TooFewReplicates { got: m, need: 2 });
    }
    spec.model.validate()?;
    (0..m as u64)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(seed_stream, label, &[index]);
            let run = |s| spec.model.run(seed, s, spec.mode, &spec.options).map_err(|e| e.at_replicate(index));
            let outcome0 = run(spec.scenarios[0])?;
            let outcome1 = run(spec.scenarios[1])?;
            let y0 = spec.observable.of(&outcome0);
            let y1 = spec.observable.of(&outcome1);
            Ok(PairedReplicate { index, seed, y0, y1, ite: y1 - y0, outcome0, outcome1 })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub m: usize,
    pub delta_hat: f64,
    pub var_y0: f64,
    pub var_y1: f64,
    pub cov: f64,
    /// Standard error of `cov`.
    pub cov_se: f64,
    /// `(var_y0 + var_y1 - 2 cov) / m`.
    pub var_delta_hat: f64,
    /// Sample variance of the ITEs over `m`, computed directly.
    pub var_ite_direct: f64,
}

impl AteReport {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let m = pairs.len();
        if m < 2 {
            return Err(Error::TooFewReplicates { got: m, need: 2 });
        }
        let n = m as f64;
        let mean0 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mean1 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let mean_d = pairs.iter().map(|p| p.1 - p.0).sum::<f64>() / n;
        let (mut s00, mut s11, mut s01, mut sdd) = (0.0, 0.0, 0.0, 0.0);
        for &(a, b) in pairs {
            let (da, db) = (a - mean0, b - mean1);
            let dd = (b - a) - mean_d;
            s00 += da * da;
            s11 += db * db;
            s01 += da * db;
            sdd += dd * dd;
        }
        let cov = s01 / (n - 1.0);
        // Spread of the centred cross products around their mean.
        let prod_mean = s01 / n;
        let prod_var = pairs
            .iter()
            .map(|&(a, b)| {
                let q = (a - mean0) * (b - mean1) - prod_mean;
                q * q
            })
            .sum::<f64>()
            / (n - 1.0);
        let var_y0 = s00 / (n - 1.0);
        let var_y1 = s11 / (n - 1.0);
        Ok(AteReport {
            m,
            delta_hat: mean_d,
            var_y0,
            var_y1,
            cov,
            cov_se: (prod_var / n).sqrt(),
            var_delta_hat: (var_y0 + var_y1 - 2.0 * cov) / n,
            var_ite_direct: sdd / (n - 1.0) / n,
        })
    }

    /// Relative gap between the component and direct variance routes.
    pub fn identity_gap(&self) -> f64 {
        let scale = self.var_ite_direct.abs().max(self.var_delta_hat.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.var_delta_hat - self.var_ite_direct).abs() / scale
        }
    }
}

pub fn estimate_ate(reps: &[PairedReplicate]) -> Result<AteReport> {
    let pairs: Vec<(f64, f64)> = reps.iter().map(|r| (r.y0, r.y1)).collect();
    AteReport::from_pairs(&pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumLabel {
    AlwaysInfected,
    Preventable,
    NeverInfected,
}

impl StratumLabel {
    /// Potential outcomes `(Y0, Y1)` the stratum implies.
    pub fn predicted(self) -> (bool, bool) {
        match self {
            StratumLabel::AlwaysInfected => (true, true),
            StratumLabel::Preventable => (true, false),
            StratumLabel::NeverInfected => (false, false),
        }
    }
}

/// Stratum of an event with noise `u`, baseline risk `p0` and protective
/// intervention risk `p1 <= p0`.
pub fn classify_stratum(u: f64, p0: f64, p1: f64) -> Result<StratumLabel> {
    if !(0.0 <= p1 && p1 <= p0 && p0 <= 1.0) {
        return Err(Error::StratumOrder { p0, p1 });
    }
    Ok(if u < p1 {
        StratumLabel::AlwaysInfected
    } else if u < p0 {
        StratumLabel::Preventable
    } else {
        StratumLabel::NeverInfected
    })
}

/// Bernoulli events by label; `None` selects all of them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFilter {
    pub label: Option<String>,
}

impl EventFilter {
    pub fn label(label: impl Into<String>) -> Self {
        EventFilter { label: Some(label.into()) }
    }

    pub fn matches(&self, e: &EventId) -> bool {
        self.label.as_deref().is_none_or(|l| e.label == l)
    }
}

/// One event present in both scenarios of a keyed pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedEvent {
    pub event: EventId,
    pub unit: u64,
    pub u0: f64,
    pub u1: f64,
    pub p0: f64,
    pub p1: f64,
    pub y0: bool,
    pub y1: bool,
}

/// Bernoulli events of a keyed pair split into matched and scenario-only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventMatch {
    pub matched: Vec<MatchedEvent>,
    pub only0: Vec<BernoulliRecord>,
    pub only1: Vec<BernoulliRecord>,
}

type KeyedEvents<'a> = (BTreeMap<&'a EventId, f64>, BTreeMap<&'a EventId, &'a BernoulliRecord>);

fn keyed_events(o: &RunOutcome) -> Result<KeyedEvents<'_>> {
    if o.mode != Mode::Keyed {
        return Err(Error::StrataUnidentifiable);
    }
    match (o.noise_by_event(), o.bernoulli_by_event()) {
        (Some(n), Some(b)) => Ok((n, b)),
        _ => Err(Error::StrataUnidentifiable),
    }
}

/// Aligns two keyed runs by event key.
pub fn match_events(o0: &RunOutcome, o1: &RunOutcome) -> Result<EventMatch> {
    let (noise0, ev0) = keyed_events(o0)?;
    let (noise1, ev1) = keyed_events(o1)?;
    let mut out = EventMatch::default();
    for (e, r0) in &ev0 {
        match ev1.get(e) {
            Some(r1) => out.matched.push(MatchedEvent {
                event: (*e).clone(),
                unit: r0.unit,
                u0: noise0[e],
                u1: noise1[e],
                p0: r0.p,
                p1: r1.p,
                y0: r0.y,
                y1: r1.y,
            }),
            None => out.only0.push((*r0).clone()),
        }
    }
    out.only1 = ev1.iter().filter(|(e, _)| !ev0.contains_key(*e)).map(|(_, r)| (*r).clone()).collect();
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrataCensus {
    pub events: u64,
    pub always_infected: u64,
    pub preventable: u64,
    pub never_infected: u64,
    /// Observed outcomes, `crosstab[y0][y1]`.
    pub crosstab: [[u64; 2]; 2],
    /// Events whose observed `(Y0, Y1)` differ from their stratum.
    pub mismatches: u64,
    /// Shared events that saw different noise across scenarios.
    pub noise_mismatches: u64,
    /// Events occurring in only one scenario; no counterpart, no stratum.
    pub unmatched: u64,
}

impl StrataCensus {
    pub fn count(&self, label: StratumLabel) -> u64 {
        match label {
            StratumLabel::AlwaysInfected => self.always_infected,
            StratumLabel::Preventable => self.preventable,
            StratumLabel::NeverInfected => self.never_infected,
        }
    }
}

/// Classifies every shared Bernoulli event of every replicate and checks the
/// observed potential outcomes against the stratum predictions.
pub fn strata_census(reps: &[PairedReplicate], filter: &EventFilter) -> Result<StrataCensus> {
    let mut c = StrataCensus::default();
    for rep in reps {
        let m = match_events(&rep.outcome0, &rep.outcome1).map_err(|e| e.at_replicate(rep.index))?;
        c.unmatched += m.only0.iter().chain(&m.only1).filter(|r| filter.matches(&r.event)).count() as u64;
        for ev in m.matched.iter().filter(|ev| filter.matches(&ev.event)) {
            c.events += 1;
            if ev.u0.to_bits() != ev.u1.to_bits() {
                c.noise_mismatches += 1;
            }
            let label = classify_stratum(ev.u0, ev.p0, ev.p1).map_err(|e| e.at_replicate(rep.index))?;
            match label {
                StratumLabel::AlwaysInfected => c.always_infected += 1,
                StratumLabel::Preventable => c.preventable += 1,
                StratumLabel::NeverInfected => c.never_infected += 1,
            }
            c.crosstab[usize::from(ev.y0)][usize::from(ev.y1)] += 1;
            if label.predicted() != (ev.y0, ev.y1) {
                c.mismatches += 1;
            }
        }
    }
    Ok(c)
}

/// Unit-level effect; undefined when any of the unit's events lacks a
/// counterpart in the other scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitEffect {
    pub unit: u64,
    pub ite: Option<i8>,
    pub unmatched_events: u64,
}

/// Per-unit ITE of a keyed pair, `unit` running over `1..=n_units`.
pub fn unit_effects(o0: &RunOutcome, o1: &RunOutcome) -> Result<Vec<UnitEffect>> {
    let m = match_events(o0, o1)?;
    let n = o0.infected.len().max(o1.infected.len());
    let mut unmatched = vec![0u64; n];
    for r in m.only0.iter().chain(&m.only1) {
        if let Some(slot) = (r.unit as usize).checked_sub(1).and_then(|k| unmatched.get_mut(k)) {
            *slot += 1;
        }
    }
    Ok((0..n)
        .map(|k| {
            let y = |o: &RunOutcome| i8::from(o.infected.get(k).copied().unwrap_or(false));
            UnitEffect {
                unit: k as u64 + 1,
                ite: (unmatched[k] == 0).then(|| y(o1) - y(o0)),
                unmatched_events: unmatched[k],
            }
        })
        .collect())
}

/// Shared Bernoulli events that are 0 under `lower` and 1 under `higher`,
/// where `higher` differs only by a larger protective effect.
pub fn monotonicity_violations(lower: &RunOutcome, higher: &RunOutcome) -> Result<Vec<EventId>> {
    let (a, b) = match (lower.bernoulli_by_event(), higher.bernoulli_by_event()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidParams("monotonicity check needs recorded events".into())),
    };
    Ok(a.iter()
        .filter_map(|(e, r)| match b.get(e) {
            Some(h) if !r.y && h.y => Some((*e).clone()),
            _ => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ClinicModelParams, InfectionModelParams, Keying};

    #[test]
    fn three_replicate_fixture() {
        // Hand-derived (scripts/oracle.py): var0 = 1, var1 = 4/3, cov = 1.
        let r = AteReport::from_pairs(&[(1.0, 2.0), (2.0, 2.0), (3.0, 4.0)]).unwrap();
        assert!((r.delta_hat - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.var_y0 - 1.0).abs() < 1e-15);
        assert!((r.var_y1 - 4.0 / 3.0).abs() < 1e-15);
        assert!((r.cov - 1.0).abs() < 1e-15);
        assert!((r.var_delta_hat - 1.0 / 9.0).abs() < 1e-12);
        assert!((r.var_ite_direct - 1.0 / 9.0).abs() < 1e-15);
        assert!(r.identity_gap() < 1e-12);
    }

    #[test]
    fn perfect_coupling_has_zero_variance() {
        let pairs: Vec<_> = [3.0, 1.0, 4.0, 1.0, 5.0].iter().map(|&y| (y, y)).collect();
        let r = AteReport::from_pairs(&pairs).unwrap();
        assert_eq!(r.delta_hat, 0.0);
        assert_eq!(r.cov, r.var_y0);
        assert_eq!(r.var_delta_hat, 0.0);
        assert_eq!(r.var_ite_direct, 0.0);
    }

    #[test]
    fn too_few_replicates() {
        assert!(matches!(AteReport::from_pairs(&[(1.0, 1.0)]), Err(Error::TooFewReplicates { .. })));
        let model = ModelSpec::Infection(InfectionModelParams::default());
        let spec = PairedSpec::new(&model, [Scenario::Baseline, Scenario::Baseline], Mode::Keyed);
        assert!(run_paired(1, &spec, WorldSeed(1)).is_err());
    }

    #[test]
    fn strata_table() {
        assert_eq!(classify_stratum(0.1, 0.5, 0.25).unwrap(), StratumLabel::AlwaysInfected);
        assert_eq!(classify_stratum(0.3, 0.5, 0.25).unwrap(), StratumLabel::Preventable);
        assert_eq!(classify_stratum(0.9, 0.5, 0.25).unwrap(), StratumLabel::NeverInfected);
        assert_eq!(classify_stratum(0.25, 0.5, 0.25).unwrap(), StratumLabel::Preventable);
        assert_eq!(classify_stratum(0.5, 0.5, 0.25).unwrap(), StratumLabel::NeverInfected);
        assert!(matches!(classify_stratum(0.3, 0.25, 0.5), Err(Error::StratumOrder { .. })));
        assert!(classify_stratum(0.3, 1.5, 0.5).is_err());
    }

    #[test]
    fn identical_scenarios_zero_ite() {
        let model = ModelSpec::Infection(InfectionModelParams::default());
        for mode in [Mode::Stateful, Mode::Keyed] {
            let spec = PairedSpec::new(&model, [Scenario::Baseline, Scenario::Baseline], mode);
            let reps = run_paired(20, &spec, WorldSeed(9)).unwrap();
            assert!(reps.iter().all(|r| r.ite == 0.0));
            assert_eq!(estimate_ate(&reps).unwrap().delta_hat, 0.0);
        }
    }

    #[test]
    fn keyed_placebo_zero_ite() {
        let model = ModelSpec::Infection(InfectionModelParams::default().with_placebo(true));
        let spec = PairedSpec::new(&model, [Scenario::Baseline, Scenario::Intervention], Mode::Keyed)
            .with_options(RunOptions::outcomes_only().strict());
        let reps = run_paired(200, &spec, WorldSeed(10)).unwrap();
        assert!(reps.iter().all(|r| r.ite == 0.0));
    }

    #[test]
    fn replicate_error_carries_index() {
        let mut p = InfectionModelParams::default();
        p.p_infect[0] = 2.0;
        let model = ModelSpec::Infection(p);
        let spec = PairedSpec::new(&model, [Scenario::Baseline, Scenario::Intervention], Mode::Keyed);
        assert!(matches!(run_paired(3, &spec, WorldSeed(1)), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn stateful_strata_are_unidentifiable() {
        let model = ModelSpec::Infection(InfectionModelParams::default());
        let spec = PairedSpec::new(&model, [Scenario::Baseline, Scenario::Intervention], Mode::Stateful);
        let reps = run_paired(3, &spec, WorldSeed(1)).unwrap();
        let err = strata_census(&reps, &EventFilter::default()).unwrap_err();
        assert!(err.to_string().contains("stateful mode: strata unidentifiable"), "{err}");
    }

    #[test]
    fn zero_efficacy_has_no_preventable_events() {
        let model = ModelSpec::Infection(InfectionModelParams::default().with_efficacy(0.0));
        let spec = PairedSpec::new(&model, [Scenario::Baseline, Scenario::Intervention], Mode::Keyed);
        let reps = run_paired(50, &spec, WorldSeed(2)).unwrap();
        let c = strata_census(&reps, &EventFilter::label("infection")).unwrap();
        assert_eq!(c.preventable, 0);
        assert_eq!(c.mismatches, 0);
        assert_eq!(c.events, 50 * 100);
    }

    #[test]
    fn full_efficacy_preventable_iff_below_baseline_risk() {
        let model = ModelSpec::Infection(InfectionModelParams::default().with_efficacy(1.0));
        let spec = PairedSpec::new(&model, [Scenario::Baseline, Scenario::Intervention], Mode::Keyed);
        for rep in run_paired(100, &spec, WorldSeed(3)).unwrap() {
            let m = match_events(&rep.outcome0, &rep.outcome1).unwrap();
            let first = m.matched.iter().find(|e| e.unit == 1).unwrap();
            let label = classify_stratum(first.u0, first.p0, first.p1).unwrap();
            assert_eq!(label == StratumLabel::Preventable, first.u0 < 0.3);
            assert_ne!(label, StratumLabel::AlwaysInfected);
        }
    }

    #[test]
    fn dyad_swap_leaves_unit_effects_undefined() {
        let p = ClinicModelParams::example(Keying::Dyad);
        let swapped: Vec<u64> = p.encounters.iter().filter(|e| e.is_swapped()).map(|e| e.patient).collect();
        let model = ModelSpec::Clinic(p);
        let spec = PairedSpec::new(&model, [Scenario::Baseline, Scenario::Intervention], Mode::Keyed);
        let rep = &run_paired(2, &spec, WorldSeed(4)).unwrap()[0];
        for eff in unit_effects(&rep.outcome0, &rep.outcome1).unwrap() {
            assert_eq!(eff.ite.is_none(), swapped.contains(&eff.unit), "patient {}", eff.unit);
        }
    }
}
