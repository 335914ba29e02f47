//! Experiments contrasting stateful and event-keyed draws.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counterfactual::{run_paired_in, AteReport, PairedSpec};
use crate::eventkey::{derive_seed, EventId, WorldSeed};
use crate::models::{
    simulate_infection, InfectionModelParams, Mode, ModelSpec, Observable, RunOptions, RunOutcome, Scenario, TraceEntry,
};
use crate::{Error, Result};

/// Seed namespaces. Each experiment arm draws its worlds from its own label.
pub const PLACEBO_LABEL: &str = "placebo";
pub const CRN_KEYED_LABEL: &str = "crn_keyed";
pub const CRN_STATEFUL_LABEL: &str = "crn_stateful";
pub const INDEPENDENT_LABEL: &str = "independent";
pub const SOBOL_LABEL: &str = "sobol";

/// A named pass/fail assertion made inside an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool) -> Self {
        Check { name: name.into(), passed }
    }
}

/// Earliest event whose noise differs between two runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub event: EventId,
    pub draw0: u64,
    pub draw1: u64,
    pub u0: f64,
    pub u1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceboReport {
    pub mode: Mode,
    pub n_seeds: usize,
    /// Runs whose cases, infection vector or onset vector differ.
    pub n_divergent: usize,
    /// Runs with identical outcomes but some shared event on different noise.
    pub n_latent_divergent: usize,
    pub first_divergence_events: Vec<Option<Divergence>>,
}

impl PlaceboReport {
    pub fn checks(&self) -> Vec<Check> {
        match self.mode {
            Mode::Keyed => vec![
                Check::new("keyed placebo runs match baseline", self.n_divergent == 0),
                Check::new("keyed placebo noise matches baseline", self.n_latent_divergent == 0),
            ],
            Mode::Stateful => Vec::new(),
        }
    }
}

fn first_divergence(t0: &[TraceEntry], t1: &[TraceEntry]) -> Option<Divergence> {
    let other: BTreeMap<&EventId, &TraceEntry> = t1.iter().map(|t| (&t.event, t)).collect();
    t0.iter().find_map(|a| {
        let b = other.get(&a.event)?;
        (a.u.to_bits() != b.u.to_bits()).then(|| Divergence {
            event: a.event.clone(),
            draw0: a.draw,
            draw1: b.draw,
            u0: a.u,
            u1: b.u,
        })
    })
}

/// Baseline against a placebo intervention (vaccinated agents draw an
/// efficacy check with no effect) for `n_seeds` worlds.
pub fn placebo_experiment(
    n_seeds: usize,
    params: &InfectionModelParams,
    mode: Mode,
    seed_stream: WorldSeed,
) -> Result<PlaceboReport> {
    let placebo = params.clone().with_placebo(true);
    placebo.validate()?;
    let opts = RunOptions { strict_ledger: false, trace: true, noise: false };
    let per_seed: Vec<(bool, Option<Divergence>)> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|n| {
            let seed = derive_seed(seed_stream, PLACEBO_LABEL, &[n]);
            let run = |s| simulate_infection(seed, &placebo, s, mode, None, &opts).map_err(|e| e.at_replicate(n));
            let a = run(Scenario::Baseline)?;
            let b = run(Scenario::Intervention)?;
            let first =
                first_divergence(a.draw_trace.as_deref().unwrap_or(&[]), b.draw_trace.as_deref().unwrap_or(&[]));
            Ok((!a.same_outcomes(&b), first))
        })
        .collect::<Result<_>>()?;
    Ok(PlaceboReport {
        mode,
        n_seeds,
        n_divergent: per_seed.iter().filter(|(d, _)| *d).count(),
        n_latent_divergent: per_seed.iter().filter(|(d, f)| !*d && f.is_some()).count(),
        first_divergence_events: per_seed.into_iter().map(|(_, f)| f).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceArms {
    /// Keyed runs, scenarios in disjoint worlds.
    pub independent: AteReport,
    /// Seed-matched stateful runs.
    pub crn_stateful: AteReport,
    /// Seed-matched keyed runs.
    pub crn_keyed: AteReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub m: usize,
    pub arms: VarianceArms,
    /// `crn_keyed.cov > 3 se`.
    pub keyed_cov_positive: bool,
    /// `|independent.cov| <= 3 se`.
    pub independent_cov_null: bool,
    pub keyed_not_worse_than_independent: bool,
    pub stateful_not_worse_than_independent: bool,
    /// -1, 0 or 1.
    pub stateful_cov_sign: i8,
}

impl VarianceComparison {
    pub fn checks(&self) -> Vec<Check> {
        let a = &self.arms;
        vec![
            Check::new(
                "variance identity holds in every arm",
                [&a.independent, &a.crn_stateful, &a.crn_keyed].iter().all(|r| r.identity_gap() <= 1e-9),
            ),
            Check::new("independent covariance within 3 se of 0", self.independent_cov_null),
            Check::new("keyed covariance positive at 3 se", self.keyed_cov_positive),
            Check::new("keyed variance not above independent", self.keyed_not_worse_than_independent),
        ]
    }
}

/// Paired-estimator variance under independent worlds, stateful CRN and
/// keyed CRN, each arm on its own seed namespace.
pub fn variance_comparison(
    m: usize,
    model: &ModelSpec,
    scenarios: [Scenario; 2],
    observable: Observable,
    seed_stream: WorldSeed,
) -> Result<VarianceComparison> {
    if m < 100 {
        return Err(Error::TooFewReplicates { got: m, need: 100 });
    }
    let opts = RunOptions::outcomes_only();
    let arm = |label, mode| -> Result<AteReport> {
        let spec = PairedSpec::new(model, scenarios, mode).with_options(opts).with_observable(observable);
        let reps = run_paired_in(label, m, &spec, seed_stream)?;
        AteReport::from_pairs(&reps.iter().map(|r| (r.y0, r.y1)).collect::<Vec<_>>())
    };
    let crn_keyed = arm(CRN_KEYED_LABEL, Mode::Keyed)?;
    let crn_stateful = arm(CRN_STATEFUL_LABEL, Mode::Stateful)?;
    let pairs = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let side = |k: usize| {
                let seed = derive_seed(seed_stream, INDEPENDENT_LABEL, &[i, k as u64]);
                model
                    .run(seed, scenarios[k], Mode::Keyed, &opts)
                    .map(|o| observable.of(&o))
                    .map_err(|e| e.at_replicate(i))
            };
            Ok((side(0)?, side(1)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let independent = AteReport::from_pairs(&pairs)?;
    Ok(VarianceComparison {
        m,
        keyed_cov_positive: crn_keyed.cov > 3.0 * crn_keyed.cov_se,
        independent_cov_null: independent.cov.abs() <= 3.0 * independent.cov_se,
        keyed_not_worse_than_independent: crn_keyed.var_delta_hat <= independent.var_delta_hat,
        stateful_not_worse_than_independent: crn_stateful.var_delta_hat <= independent.var_delta_hat,
        stateful_cov_sign: if crn_stateful.cov > 0.0 {
            1
        } else if crn_stateful.cov < 0.0 {
            -1
        } else {
            0
        },
        arms: VarianceArms { independent, crn_stateful, crn_keyed },
    })
}

/// Infection-model parameter varied in a first-order Sobol experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SobolParameter {
    /// Placebo flag; any nonzero grid value turns it on. At zero the
    /// efficacy is forced to 0, so neither value has a mechanistic effect.
    Placebo,
    VaccineEfficacy,
    /// Shared infection probability of every agent.
    PInfect,
}

impl SobolParameter {
    pub fn apply(self, params: &InfectionModelParams, value: f64) -> InfectionModelParams {
        let mut p = params.clone();
        match self {
            SobolParameter::Placebo => {
                p.placebo = value != 0.0;
                if !p.placebo {
                    p.vaccine_efficacy = 0.0;
                }
            }
            SobolParameter::VaccineEfficacy => p.vaccine_efficacy = value,
            SobolParameter::PInfect => p.p_infect = vec![value; p.n_agents],
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    pub parameter: SobolParameter,
    pub mode: Mode,
    pub m_inner: usize,
    pub grid: Vec<f64>,
    pub conditional_means: Vec<f64>,
    pub v_i: f64,
    pub total_variance: f64,
    pub s_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined_reason: Option<String>,
}

impl SobolReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut checks =
            vec![Check::new("first-order index within [0, 1]", self.s_i.is_none_or(|s| (0.0..=1.0).contains(&s)))];
        if self.parameter == SobolParameter::Placebo && self.mode == Mode::Keyed {
            checks.push(Check::new("null parameter has zero keyed first-order variance", self.v_i == 0.0));
        }
        checks
    }
}

/// Population variance as the mean squared pairwise half-difference; exactly
/// zero when all values are bitwise equal.
fn pairwise_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mut acc = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            acc += (a - b) * (a - b);
        }
    }
    acc / (n * n)
}

/// First-order index of one parameter with the same `m_inner` worlds reused
/// at every grid value, in the intervention scenario.
pub fn sobol_first_order(
    params: &InfectionModelParams,
    parameter: SobolParameter,
    grid: &[f64],
    m_inner: usize,
    mode: Mode,
    seed_stream: WorldSeed,
) -> Result<SobolReport> {
    if grid.len() < 2 || m_inner < 2 {
        return Err(Error::InvalidParams("sobol needs at least 2 grid values and 2 worlds".into()));
    }
    let variants: Vec<InfectionModelParams> = grid.iter().map(|&v| parameter.apply(params, v)).collect();
    for v in &variants {
        v.validate()?;
    }
    let opts = RunOptions::outcomes_only();
    let rows: Vec<Vec<f64>> = variants
        .iter()
        .map(|p| {
            (0..m_inner as u64)
                .into_par_iter()
                .map(|w| {
                    let seed = derive_seed(seed_stream, SOBOL_LABEL, &[w]);
                    simulate_infection(seed, p, Scenario::Intervention, mode, None, &opts)
                        .map(|o| o.cases as f64)
                        .map_err(|e| e.at_replicate(w))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let conditional_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / m_inner as f64).collect();
    let all: Vec<f64> = rows.concat();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let total_variance = all.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / all.len() as f64;
    let v_i = pairwise_variance(&conditional_means);
    let (s_i, undefined_reason) = if total_variance > 0.0 {
        (Some(v_i / total_variance), None)
    } else {
        (None, Some("total output variance is zero".to_owned()))
    };
    Ok(SobolReport {
        parameter,
        mode,
        m_inner,
        grid: grid.to_vec(),
        conditional_means,
        v_i,
        total_variance,
        s_i,
        undefined_reason,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub event: EventId,
    pub draw0: u64,
    pub draw1: u64,
    pub u0: f64,
    pub u1: f64,
    pub matches: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTable {
    /// Shared events, ordered by event id.
    pub rows: Vec<AuditRow>,
    pub only0: Vec<EventId>,
    pub only1: Vec<EventId>,
    pub n_shared: usize,
    pub n_mismatched: usize,
    /// Shared events consumed at a different draw position.
    pub n_shifted: usize,
    /// Largest `draw1 - draw0` by magnitude.
    pub max_shift: i64,
}

impl AuditTable {
    pub fn mismatched(&self) -> impl Iterator<Item = &AuditRow> {
        self.rows.iter().filter(|r| !r.matches)
    }

    pub fn row(&self, event: &EventId) -> Option<&AuditRow> {
        self.rows.iter().find(|r| &r.event == event)
    }
}

/// Aligns the draw traces of two runs by event description.
pub fn draw_index_audit(o0: &RunOutcome, o1: &RunOutcome) -> Result<AuditTable> {
    let t0 = o0.draw_trace.as_ref().ok_or(Error::MissingTrace("first outcome"))?;
    let t1 = o1.draw_trace.as_ref().ok_or(Error::MissingTrace("second outcome"))?;
    let m0: BTreeMap<&EventId, &TraceEntry> = t0.iter().map(|t| (&t.event, t)).collect();
    let m1: BTreeMap<&EventId, &TraceEntry> = t1.iter().map(|t| (&t.event, t)).collect();
    let rows: Vec<AuditRow> = m0
        .iter()
        .filter_map(|(e, a)| {
            m1.get(e).map(|b| AuditRow {
                event: (*e).clone(),
                draw0: a.draw,
                draw1: b.draw,
                u0: a.u,
                u1: b.u,
                matches: a.u.to_bits() == b.u.to_bits(),
            })
        })
        .collect();
    let shifts = rows.iter().map(|r| r.draw1 as i64 - r.draw0 as i64);
    Ok(AuditTable {
        only0: m0.keys().filter(|e| !m1.contains_key(*e)).map(|e| (*e).clone()).collect(),
        only1: m1.keys().filter(|e| !m0.contains_key(*e)).map(|e| (*e).clone()).collect(),
        n_shared: rows.len(),
        n_mismatched: rows.iter().filter(|r| !r.matches).count(),
        n_shifted: rows.iter().filter(|r| r.draw0 != r.draw1).count(),
        max_shift: shifts.max_by_key(|s| s.abs()).unwrap_or(0),
        rows,
    })
}
