//! Simulation environments producing [`SimOutcome`]s for a policy.
//!
//! Two backends share the [`Simulator`] trait: the built-in stochastic
//! [`Surrogate`] and the [`External`] process adapter. Both are pure
//! functions of (scenario, policy, seed).
//!
//! # Random streams
//!
//! Every run draws from its own ChaCha8 stream. The stream seed is a
//! splitmix64 chain over `(scenario_seed, a_itn bits, a_irs bits,
//! replicate_index)`; the baseline stream chains `(scenario_seed,
//! BASELINE_TAG)` instead and so does not depend on the replicate. ChaCha8 is
//! counter based, so streams are identical across platforms and
//! independent of which worker thread runs them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::policy_space::Policy;
use crate::reward_model::SimOutcome;

mod external;
mod surrogate;

pub use external::{run_external, ExternalAdapterConfig, External, WireDeath, WireEpisode, WireOutcome};
pub use surrogate::{AgeBand, ScenarioParams, Surrogate};

const BASELINE_TAG: u64 = 0xBA5E_11E0_0000_0001;

pub const DAYS_PER_YEAR: f64 = 365.0;

/// splitmix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive stable hash of a word sequence.
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |h, w| splitmix64(h ^ splitmix64(*w)))
}

/// FNV-1a over bytes; used to fingerprint scenario documents.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimSeed {
    pub scenario_seed: u64,
    pub replicate_index: u64,
}

impl SimSeed {
    pub fn new(scenario_seed: u64, replicate_index: u64) -> Self {
        SimSeed {
            scenario_seed,
            replicate_index,
        }
    }

    pub fn stream_seed(&self, policy: &Policy) -> u64 {
        hash_words(&[
            self.scenario_seed,
            policy.itn().to_bits(),
            policy.irs().to_bits(),
            self.replicate_index,
        ])
    }

    pub fn baseline_stream_seed(&self) -> u64 {
        hash_words(&[self.scenario_seed, BASELINE_TAG])
    }
}

pub trait Simulator: Send + Sync {
    fn simulate(&self, policy: &Policy, seed: SimSeed) -> Result<SimOutcome>;

    /// The no-intervention run. Depends only on `seed.scenario_seed`.
    fn baseline(&self, seed: SimSeed) -> Result<SimOutcome>;

    /// Identifies the scenario, so baseline results can be shared.
    fn fingerprint(&self) -> u64;
}

/// Baseline outcomes keyed by (scenario fingerprint, scenario seed).
/// Each entry is filled once and then only read.
#[derive(Debug, Default)]
pub struct BaselineCache {
    entries: Mutex<HashMap<(u64, u64), Arc<SimOutcome>>>,
}

impl BaselineCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_run(&self, sim: &dyn Simulator, seed: SimSeed) -> Result<Arc<SimOutcome>> {
        let key = (sim.fingerprint(), seed.scenario_seed);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let outcome = Arc::new(sim.baseline(seed)?);
        let mut entries = self.entries.lock().unwrap();
        Ok(Arc::clone(entries.entry(key).or_insert(outcome)))
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
