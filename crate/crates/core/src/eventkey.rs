//! Stable event identifiers and their mapping to exogenous uniforms.
//!
//! An [`EventId`] names one modeled draw by what it is (a label plus integer
//! coordinates such as time, agent or slot), never by when it happens. Its
//! canonical byte serialization is compressed together with the world seed
//! into a Philox counter, so the uniform for an event is a pure function of
//! `(seed, event)`.
//!
//! # Key derivation
//!
//! The serialization is zero padded and suffixed with its original length as
//! a big-endian `u64` so the total is a multiple of 16 bytes. Each 16-byte
//! block is read as four big-endian `u32` words and absorbed with
//!
//! ```text
//! state_0     = philox_block(seed, CHAIN_INIT)
//! state_{n+1} = philox_block(Key128 { hi: 0, lo: state_n[1] << 32 | state_n[0] },
//!                            block_n ^ state_n)
//! ```
//!
//! The event key is `(seed, final state)` and the event's uniform is the high
//! half of `philox_block(seed, final state)`.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cbrng::{philox_block, Counter128, Key128, UnitUniform};
use crate::{Error, Result};

pub const MAX_LABEL_BYTES: usize = 64;
pub const MAX_COMPONENTS: usize = 16;

/// Chain initialization counter, ASCII `"evky/chain/v1"`.
pub const CHAIN_INIT: Counter128 = Counter128([0x6576_6B79, 0x2F63_6861, 0x696E_2F76, 0x3100_0000]);

/// Seed under which agent identifiers are derived, ASCII `"agent-ids/v1"`.
pub const ID_DERIVATION_SEED: WorldSeed = WorldSeed(0x6167_656E_742D_6964_732F_7631_0000_0000);

pub const OFFSPRING_LABEL: &str = "offspring";

// 2 + 64 + 1 + 16 * 8 + 8 = 203 bytes, plus the 8-byte length and padding.
const MAX_PADDED: usize = 224;

/// Canonical identifier of a single stochastic draw.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventId {
    pub label: Cow<'static, str>,
    pub components: Vec<u64>,
    #[serde(default)]
    pub draw_index: u64,
}

impl EventId {
    pub fn new(label: impl Into<Cow<'static, str>>, components: impl Into<Vec<u64>>) -> Self {
        EventId { label: label.into(), components: components.into(), draw_index: 0 }
    }

    /// Same event, `k`-th draw within it.
    pub fn with_draw(mut self, k: u64) -> Self {
        self.draw_index = k;
        self
    }

    fn check(&self) -> Result<()> {
        if self.label.len() > MAX_LABEL_BYTES {
            return Err(Error::LabelTooLong { len: self.label.len(), max: MAX_LABEL_BYTES });
        }
        if self.components.len() > MAX_COMPONENTS {
            return Err(Error::TooManyComponents { len: self.components.len(), max: MAX_COMPONENTS });
        }
        Ok(())
    }

    fn write_to(&self, buf: &mut [u8]) -> usize {
        let label = self.label.as_bytes();
        let mut n = 0;
        buf[n..n + 2].copy_from_slice(&(label.len() as u16).to_be_bytes());
        n += 2;
        buf[n..n + label.len()].copy_from_slice(label);
        n += label.len();
        buf[n] = self.components.len() as u8;
        n += 1;
        for c in &self.components {
            buf[n..n + 8].copy_from_slice(&c.to_be_bytes());
            n += 8;
        }
        buf[n..n + 8].copy_from_slice(&self.draw_index.to_be_bytes());
        n + 8
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.label)?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]#{}", self.draw_index)
    }
}

/// Canonical bytes: u16 BE label length, UTF-8 label, u8 component count,
/// u64 BE components, u64 BE draw index.
pub fn serialize_event(e: &EventId) -> Result<Vec<u8>> {
    e.check()?;
    let mut buf = [0u8; MAX_PADDED];
    let n = e.write_to(&mut buf);
    Ok(buf[..n].to_vec())
}

/// Index of one exogenous world.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldSeed(pub u128);

impl WorldSeed {
    pub fn key(self) -> Key128 {
        Key128::from_u128(self.0)
    }

    /// Seed for a conventional 64-bit stateful generator.
    pub fn fold64(self) -> u64 {
        (self.0 >> 64) as u64 ^ self.0 as u64
    }

    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }
}

impl FromStr for WorldSeed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 32 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::InvalidSeed(s.to_owned()));
        }
        u128::from_str_radix(s, 16).map(WorldSeed).map_err(|_| Error::InvalidSeed(s.to_owned()))
    }
}

impl fmt::Display for WorldSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl Serialize for WorldSeed {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for WorldSeed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn absorb(seed: WorldSeed, bytes: &[u8]) -> Counter128 {
    let mut state = philox_block(seed.key(), CHAIN_INIT);
    for chunk in bytes.chunks_exact(16) {
        let mut words = [0u32; 4];
        for (w, b) in words.iter_mut().zip(chunk.chunks_exact(4)) {
            *w = u32::from_be_bytes([b[0], b[1], b[2], b[3]]);
        }
        let key = Key128::new(0, (u64::from(state[1]) << 32) | u64::from(state[0]));
        state = philox_block(key, Counter128(words) ^ Counter128(state));
    }
    Counter128(state)
}

/// Compresses `(seed, e)` into the generator inputs for that event.
pub fn event_key(seed: WorldSeed, e: &EventId) -> Result<(Key128, Counter128)> {
    e.check()?;
    let mut buf = [0u8; MAX_PADDED];
    let n = e.write_to(&mut buf);
    let padded = (n + 8).div_ceil(16) * 16;
    buf[padded - 8..padded].copy_from_slice(&(n as u64).to_be_bytes());
    Ok((seed.key(), absorb(seed, &buf[..padded])))
}

/// The exogenous uniform `U_e` of event `e` in world `seed`.
///
/// With a ledger the query is recorded; a strict ledger rejects a second
/// query of the same event.
pub fn event_uniform(seed: WorldSeed, e: &EventId, ledger: Option<&mut EventLedger>) -> Result<UnitUniform> {
    let (key, counter) = event_key(seed, e)?;
    if let Some(ledger) = ledger {
        ledger.record(e)?;
    }
    Ok(UnitUniform::from_block(philox_block(key, counter)))
}

/// Seed of an independent sub-world, e.g. one replicate of an experiment.
pub fn derive_seed(stream: WorldSeed, label: &'static str, components: &[u64]) -> WorldSeed {
    let e = EventId::new(label, components.to_vec());
    let (_, counter) = event_key(stream, &e).expect("static labels are within limits");
    WorldSeed(counter.to_u128())
}

/// Genealogically stable agent identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId(pub u128);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// Identifier of founder `index` in cohort `cohort_label`.
///
/// Scenario never enters the derivation, so founders coincide across
/// counterfactual worlds.
pub fn founder_id(index: u64, cohort_label: &str) -> Result<AgentId> {
    let e = EventId::new(cohort_label.to_owned(), vec![index]);
    let (_, counter) = event_key(ID_DERIVATION_SEED, &e)?;
    Ok(AgentId(counter.to_u128()))
}

/// Identifier of the `k`-th offspring of `parent`.
///
/// Only parent and birth order enter; birth timing could be appended as a
/// further component for models that need it.
pub fn child_id(parent: AgentId, k: u64) -> AgentId {
    let e = EventId::new(OFFSPRING_LABEL, vec![(parent.0 >> 64) as u64, parent.0 as u64, k]);
    let (_, counter) = event_key(ID_DERIVATION_SEED, &e).expect("static label");
    AgentId(counter.to_u128())
}

/// Per-run record of queried events.
#[derive(Clone, Debug, Default)]
pub struct EventLedger {
    strict: bool,
    counts: BTreeMap<EventId, u64>,
}

impl EventLedger {
    pub fn new(strict: bool) -> Self {
        EventLedger { strict, counts: BTreeMap::new() }
    }

    pub fn strict() -> Self {
        Self::new(true)
    }

    pub fn permissive() -> Self {
        Self::new(false)
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn record(&mut self, e: &EventId) -> Result<()> {
        match self.counts.get_mut(e) {
            Some(_) if self.strict => Err(Error::DuplicateEvent { event: e.to_string() }),
            Some(n) => {
                *n += 1;
                Ok(())
            }
            None => {
                self.counts.insert(e.clone(), 1);
                Ok(())
            }
        }
    }

    pub fn count(&self, e: &EventId) -> u64 {
        self.counts.get(e).copied().unwrap_or(0)
    }

    pub fn contains(&self, e: &EventId) -> bool {
        self.counts.contains_key(e)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EventId, u64)> {
        self.counts.iter().map(|(e, n)| (e, *n))
    }

    /// Events queried more than once.
    pub fn duplicates(&self) -> impl Iterator<Item = (&EventId, u64)> {
        self.iter().filter(|(_, n)| *n > 1)
    }

    /// One `label,components,draw_index,count` line per event, components
    /// separated by `;`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (e, n) in self.iter() {
            let comps: Vec<String> = e.components.iter().map(u64::to_string).collect();
            out.push_str(&format!("{},{},{},{}\n", e.label, comps.join(";"), e.draw_index, n));
        }
        out
    }
}
