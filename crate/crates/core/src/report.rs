//! Report envelopes and file writers.
//!
//! Every artifact carries the config digest, the generator identities and
//! the config itself, so any file can be traced back to what produced it.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::Check;
use crate::cbrng::{GENERATOR_ID, PHILOX_ROUNDS};
use crate::config::ExperimentConfig;
use crate::counterfactual::{AteReport, PairedReplicate, StrataCensus};
use crate::eventkey::WorldSeed;
use crate::models::{Mode, STATEFUL_GENERATOR_ID};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generators {
    pub keyed: String,
    pub keyed_rounds: usize,
    pub stateful: String,
}

impl Default for Generators {
    fn default() -> Self {
        Generators {
            keyed: GENERATOR_ID.to_owned(),
            keyed_rounds: PHILOX_ROUNDS,
            stateful: STATEFUL_GENERATOR_ID.to_owned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_digest: String,
    pub world_digest: String,
    pub generators: Generators,
    pub mode: Mode,
    pub seed_stream: WorldSeed,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Provenance {
            command: command.to_owned(),
            config_digest: config.digest(),
            world_digest: config.world_digest(),
            generators: Generators::default(),
            mode: config.mode,
            seed_stream: config.seed_stream,
            config: ExperimentConfig { out: None, ..config.clone() },
        }
    }
}

/// A result with its provenance and the checks made while producing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub provenance: Provenance,
    pub checks: Vec<Check>,
    pub result: T,
}

impl<T> Report<T> {
    pub fn new(command: &str, config: &ExperimentConfig, checks: Vec<Check>, result: T) -> Self {
        Report { provenance: Provenance::new(command, config), checks, result }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a report and checks its world digest.
pub fn read_report_for_world<T: DeserializeOwned>(path: &Path, world_digest: &str) -> Result<Report<T>> {
    let report: Report<T> = read_json(path)?;
    if report.provenance.world_digest != world_digest {
        return Err(Error::DigestMismatch { expected: world_digest.to_owned(), found: report.provenance.world_digest });
    }
    Ok(report)
}

#[derive(Serialize)]
struct AteRow<'a> {
    config_digest: &'a str,
    arm: &'a str,
    m: usize,
    delta_hat: f64,
    var_y0: f64,
    var_y1: f64,
    cov: f64,
    cov_se: f64,
    var_delta_hat: f64,
    var_ite_direct: f64,
}

/// One row per named estimator arm.
pub fn write_ate_csv(path: &Path, digest: &str, arms: &[(&str, &AteReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (arm, r) in arms {
        w.serialize(AteRow {
            config_digest: digest,
            arm,
            m: r.m,
            delta_hat: r.delta_hat,
            var_y0: r.var_y0,
            var_y1: r.var_y1,
            cov: r.cov,
            cov_se: r.cov_se,
            var_delta_hat: r.var_delta_hat,
            var_ite_direct: r.var_ite_direct,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReplicateRow<'a> {
    config_digest: &'a str,
    index: u64,
    seed: String,
    y0: f64,
    y1: f64,
    ite: f64,
}

pub fn write_replicates_csv(path: &Path, digest: &str, reps: &[PairedReplicate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reps {
        w.serialize(ReplicateRow {
            config_digest: digest,
            index: r.index,
            seed: r.seed.to_hex(),
            y0: r.y0,
            y1: r.y1,
            ite: r.ite,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StrataRow<'a> {
    config_digest: &'a str,
    quantity: &'a str,
    count: u64,
}

pub fn write_strata_csv(path: &Path, digest: &str, c: &StrataCensus) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let rows = [
        ("events", c.events),
        ("always_infected", c.always_infected),
        ("preventable", c.preventable),
        ("never_infected", c.never_infected),
        ("y0_0_y1_0", c.crosstab[0][0]),
        ("y0_0_y1_1", c.crosstab[0][1]),
        ("y0_1_y1_0", c.crosstab[1][0]),
        ("y0_1_y1_1", c.crosstab[1][1]),
        ("mismatches", c.mismatches),
        ("noise_mismatches", c.noise_mismatches),
        ("unmatched", c.unmatched),
    ];
    for (quantity, count) in rows {
        w.serialize(StrataRow { config_digest: digest, quantity, count })?;
    }
    w.flush()?;
    Ok(())
}
