//! Shared fixtures for the benchmarks.

use eventkeyed_core::models::{ClinicModelParams, InfectionModelParams, Keying};
use eventkeyed_core::{EventId, WorldSeed};

pub const SEED: WorldSeed = WorldSeed(0x00C0_FFEE_5EED_0000_0000_0000_0000_002A);

/// Events shaped like the ones the reference models query.
pub fn sample_events(n: u64) -> Vec<EventId> {
    (0..n)
        .map(|i| match i % 3 {
            0 => EventId::new("infection", vec![i]),
            1 => EventId::new("incubation", vec![i]),
            _ => EventId::new("encounter", vec![i / 60, i % 30, 1 + i % 2]),
        })
        .collect()
}

pub fn infection_population(n_agents: usize) -> InfectionModelParams {
    InfectionModelParams::uniform(n_agents, 0.3).with_vaccinated(vec![1])
}

pub fn clinic(keying: Keying) -> ClinicModelParams {
    ClinicModelParams::example(keying)
}
