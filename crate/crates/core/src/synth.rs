//! Seeded synthetic NFT collections.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with the spec's
//! 64-bit seed through `SeedableRng::seed_from_u64`, so corpora are identical
//! across platforms. Per token, in token order, the generator draws:
//!
//! 1. whether the token is active (`active_fraction`),
//! 2. its first-year sale count from `count_distribution` (active tokens only),
//! 3. for each sale, a uniform day in `0..365`, a uniform second within the
//!    day, and a standard normal `z`.
//!
//! A sale on a day in quarter `q` (0-based) is priced at
//! `initial_price × quarterly_drift^q × exp(volatility · z)`. The multiplier is
//! quantized to 1e-9 before being applied to the integer wei price, which makes
//! prices exactly proportional to `initial_price_eth`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{sequence_events, SaleEvent};
use crate::series::{build_series, CollectionSeries, Quarter, SECONDS_PER_DAY, YEAR_DAYS};
use crate::wei::Wei;

const NANO: u128 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountWeight {
    pub count: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_tokens: usize,
    pub active_fraction: f64,
    pub count_distribution: Vec<CountWeight>,
    pub initial_price_eth: Wei,
    pub quarterly_drift: f64,
    pub volatility: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_tokens == 0 {
            return bad("n_tokens must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.active_fraction) {
            return bad(format!("active_fraction {} outside [0,1]", self.active_fraction));
        }
        if self.count_distribution.is_empty() {
            return bad("count_distribution is empty".into());
        }
        if self.count_distribution.iter().any(|w| !(w.probability >= 0.0)) {
            return bad("count probabilities must be non-negative".into());
        }
        let total: f64 = self.count_distribution.iter().map(|w| w.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("count probabilities sum to {total}, expected 1"));
        }
        if self.initial_price_eth.0 == 0 || self.initial_price_eth.0 % NANO != 0 {
            return bad("initial_price_eth must be positive with at most 9 decimals".into());
        }
        if !(self.quarterly_drift > 0.0) || !self.quarterly_drift.is_finite() {
            return bad("quarterly_drift must be positive".into());
        }
        if !(self.volatility >= 0.0) || !self.volatility.is_finite() {
            return bad("volatility must be non-negative".into());
        }
        Ok(())
    }

    fn draw_count(&self, rng: &mut ChaCha8Rng) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for w in &self.count_distribution {
            acc += w.probability;
            if u < acc {
                return w.count;
            }
        }
        self.count_distribution.last().map_or(0, |w| w.count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub collection_id: String,
    pub inception_timestamp: u64,
    pub spec: SynthSpec,
    pub events: Vec<SaleEvent>,
    /// Ground-truth 365-day series; equals `build_series(events)`.
    pub truth: CollectionSeries,
    /// First-year sale count drawn for each token, in token order.
    pub drawn_counts: Vec<u32>,
}

impl SynthCorpus {
    pub fn token_ids(&self) -> Vec<u64> {
        (0..self.spec.n_tokens as u64).collect()
    }
}

/// Default inception used for synthetic collections (2021-04-30T00:00:00Z).
pub const DEFAULT_INCEPTION: u64 = 1_619_740_800;

pub fn generate_collection(spec: &SynthSpec, collection_id: &str) -> Result<SynthCorpus, SynthError> {
    generate_collection_at(spec, collection_id, DEFAULT_INCEPTION)
}

pub fn generate_collection_at(
    spec: &SynthSpec,
    collection_id: &str,
    inception_timestamp: u64,
) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = spec.initial_price_eth.0 / NANO;
    let mut events = Vec::new();
    let mut drawn_counts = Vec::with_capacity(spec.n_tokens);
    for token_id in 0..spec.n_tokens as u64 {
        let active = rng.random::<f64>() < spec.active_fraction;
        let count = if active { spec.draw_count(&mut rng) } else { 0 };
        drawn_counts.push(count);
        for _ in 0..count {
            let day = rng.random_range(0..YEAR_DAYS as u64);
            let second = rng.random_range(0..SECONDS_PER_DAY);
            let z: f64 = rng.sample(StandardNormal);
            let q = Quarter::of_day(day as usize).index() as i32;
            let multiplier = spec.quarterly_drift.powi(q) * (spec.volatility * z).exp();
            let nanos = (multiplier * NANO as f64).round() as u128;
            events.push(SaleEvent {
                collection_id: collection_id.to_string(),
                token_id,
                timestamp: inception_timestamp + day * SECONDS_PER_DAY + second,
                price_wei: Wei(unit * nanos),
                seq: 0,
            });
        }
    }
    let events = sequence_events(events);
    let token_ids: Vec<u64> = (0..spec.n_tokens as u64).collect();
    let truth = build_series(collection_id, &events, inception_timestamp, &token_ids)
        .expect("generated events lie inside the collection frame")
        .series;
    Ok(SynthCorpus {
        collection_id: collection_id.to_string(),
        inception_timestamp,
        spec: spec.clone(),
        events,
        truth,
        drawn_counts,
    })
}

/// SplitMix64 finalizer, used to derive independent per-collection seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteRole {
    Train,
    Test,
    Ood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub collection_id: String,
    pub role: SuiteRole,
    /// Training collection this one was derived from, for test collections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twin_of: Option<String>,
    /// Expected tier of the Q4 market cap, for training collections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_tier: Option<u8>,
    pub inception_timestamp: u64,
    pub spec: SynthSpec,
}

/// Structured description of a benchmark suite, serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub seed: u64,
    pub collections: Vec<SuiteEntry>,
}

impl SuiteManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest is serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }

    pub fn generate(&self) -> Result<BenchmarkSuite, SynthError> {
        let corpora = self
            .collections
            .iter()
            .map(|e| generate_collection_at(&e.spec, &e.collection_id, e.inception_timestamp))
            .collect::<Result<_, _>>()?;
        Ok(BenchmarkSuite {
            manifest: self.clone(),
            corpora,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkSuite {
    pub manifest: SuiteManifest,
    /// One corpus per manifest entry, in manifest order.
    pub corpora: Vec<SynthCorpus>,
}

impl BenchmarkSuite {
    pub fn by_role(&self, role: SuiteRole) -> Vec<&SynthCorpus> {
        self.manifest
            .collections
            .iter()
            .zip(&self.corpora)
            .filter(|(e, _)| e.role == role)
            .map(|(_, c)| c)
            .collect()
    }
}

struct Archetype {
    id: &'static str,
    role: SuiteRole,
    twin_of: Option<&'static str>,
    tier: Option<u8>,
    n_tokens: usize,
    active_fraction: f64,
    counts: &'static [(u32, f64)],
    price: &'static str,
    drift: f64,
    volatility: f64,
}

// Five training collections across tiers 1 and 3, four test collections that
// are perturbed copies of training collections, and one collection whose
// trading profile lies far outside the training range.
const ARCHETYPES: [Archetype; 10] = [
    Archetype { id: "train-1", role: SuiteRole::Train, twin_of: None, tier: Some(1), n_tokens: 1000, active_fraction: 0.9, counts: &[(1, 0.2), (2, 0.4), (3, 0.3), (4, 0.1)], price: "8", drift: 1.5, volatility: 0.4 },
    Archetype { id: "train-2", role: SuiteRole::Train, twin_of: None, tier: Some(1), n_tokens: 1000, active_fraction: 0.85, counts: &[(1, 0.3), (2, 0.4), (3, 0.3)], price: "20", drift: 1.0, volatility: 0.4 },
    Archetype { id: "train-3", role: SuiteRole::Train, twin_of: None, tier: Some(3), n_tokens: 1000, active_fraction: 0.7, counts: &[(1, 0.3), (2, 0.4), (3, 0.3)], price: "1", drift: 1.1, volatility: 0.4 },
    Archetype { id: "train-4", role: SuiteRole::Train, twin_of: None, tier: Some(3), n_tokens: 1000, active_fraction: 0.4, counts: &[(1, 0.6), (2, 0.3), (3, 0.1)], price: "0.3", drift: 1.6, volatility: 0.4 },
    Archetype { id: "train-5", role: SuiteRole::Train, twin_of: None, tier: Some(3), n_tokens: 1000, active_fraction: 0.2, counts: &[(1, 0.7), (2, 0.3)], price: "0.05", drift: 1.2, volatility: 0.4 },
    Archetype { id: "test-1", role: SuiteRole::Test, twin_of: Some("train-3"), tier: None, n_tokens: 300, active_fraction: 0.65, counts: &[(1, 0.3), (2, 0.4), (3, 0.3)], price: "0.9", drift: 1.15, volatility: 0.4 },
    Archetype { id: "test-2", role: SuiteRole::Test, twin_of: Some("train-4"), tier: None, n_tokens: 300, active_fraction: 0.45, counts: &[(1, 0.6), (2, 0.3), (3, 0.1)], price: "0.35", drift: 1.5, volatility: 0.4 },
    Archetype { id: "test-3", role: SuiteRole::Test, twin_of: Some("train-2"), tier: None, n_tokens: 300, active_fraction: 0.85, counts: &[(1, 0.3), (2, 0.4), (3, 0.3)], price: "18", drift: 1.05, volatility: 0.4 },
    Archetype { id: "test-4", role: SuiteRole::Test, twin_of: Some("train-1"), tier: None, n_tokens: 300, active_fraction: 0.9, counts: &[(1, 0.2), (2, 0.4), (3, 0.3), (4, 0.1)], price: "7", drift: 1.5, volatility: 0.4 },
    Archetype { id: "ood", role: SuiteRole::Ood, twin_of: None, tier: None, n_tokens: 150, active_fraction: 1.0, counts: &[(20, 0.5), (24, 0.5)], price: "60", drift: 2.5, volatility: 0.3 },
];

/// Manifest of the standard ten-collection benchmark suite.
pub fn benchmark_manifest(seed: u64) -> SuiteManifest {
    let collections = ARCHETYPES
        .iter()
        .enumerate()
        .map(|(i, a)| SuiteEntry {
            collection_id: a.id.to_string(),
            role: a.role,
            twin_of: a.twin_of.map(str::to_string),
            expected_tier: a.tier,
            inception_timestamp: DEFAULT_INCEPTION + i as u64 * 7 * SECONDS_PER_DAY,
            spec: SynthSpec {
                n_tokens: a.n_tokens,
                active_fraction: a.active_fraction,
                count_distribution: a
                    .counts
                    .iter()
                    .map(|&(count, probability)| CountWeight { count, probability })
                    .collect(),
                initial_price_eth: Wei::from_eth_str(a.price).expect("archetype price"),
                quarterly_drift: a.drift,
                volatility: a.volatility,
                seed: derive_seed(seed, i as u64),
            },
        })
        .collect();
    SuiteManifest { seed, collections }
}

/// Generates the standard benchmark suite: 5 training, 4 test and 1
/// out-of-distribution collection.
pub fn make_benchmark_suite(seed: u64) -> BenchmarkSuite {
    benchmark_manifest(seed)
        .generate()
        .expect("built-in archetypes are valid")
}
