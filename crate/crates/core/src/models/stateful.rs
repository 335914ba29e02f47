use crate::cbrng::UnitUniform;

pub const STATEFUL_GENERATOR_ID: &str = "splitmix64";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64: a 64-bit Weyl sequence passed through a fixed mixer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatefulGenerator {
    state: u64,
}

impl StatefulGenerator {
    pub fn new(seed: u64) -> Self {
        StatefulGenerator { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_uniform(&mut self) -> UnitUniform {
        UnitUniform::from_u64(self.next_u64())
    }
}

/// Advances `gen` once and returns its uniform.
pub fn stateful_next(gen: &mut StatefulGenerator) -> UnitUniform {
    gen.next_uniform()
}
