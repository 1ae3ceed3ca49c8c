//! Collection context vectors.
//!
//! Every token's Q1 series is flattened into a 182-vector (91 days × value,
//! count; day-major). PCA over all training tokens gives six components; a
//! collection's raw context is the mean of its tokens' projections. Raw
//! contexts are rescaled into `[1, 3]` using a single global minimum and
//! maximum taken over all components of all training collections, and new
//! collections are embedded with the frozen training transform.

mod eigen;
mod normalize;
mod pca;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use normalize::{normalize_contexts, NormalizationParams, CONTEXT_HIGH, CONTEXT_LOW};
pub use pca::{collection_context_raw, fit_pca, token_vector, PcaModel, FEATURE_DIM};

use crate::series::CollectionSeries;

/// Dimension of a context vector.
pub const CONTEXT_DIM: usize = 6;

pub type RawContext = [f64; CONTEXT_DIM];

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("need at least {needed} token vectors to fit, got {got}")]
    InsufficientTokens { needed: usize, got: usize },
    #[error("training covariance has rank below {CONTEXT_DIM} (eigenvalue {index} is {value:e})")]
    RankDeficient { index: usize, value: f64 },
    #[error("collection `{0}` has no tokens")]
    EmptyCollection(String),
    #[error("collection `{0}` does not cover the first quarter")]
    MissingQ1(String),
    #[error("all raw context values are equal; normalization range is empty")]
    DegenerateRange,
    #[error("context value {0} outside [1, 3]")]
    OutOfRange(f64),
    #[error("context csv line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Normalized collection embedding; every component lies in `[1, 3]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextVector([f64; CONTEXT_DIM]);

impl ContextVector {
    pub fn new(values: [f64; CONTEXT_DIM]) -> Result<Self, ContextError> {
        match values.iter().find(|v| !(CONTEXT_LOW..=CONTEXT_HIGH).contains(*v)) {
            Some(&v) => Err(ContextError::OutOfRange(v)),
            None => Ok(ContextVector(values)),
        }
    }

    pub fn values(&self) -> &[f64; CONTEXT_DIM] {
        &self.0
    }

    pub fn distance(&self, other: &ContextVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Context of every training collection, keyed by collection id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextTable(pub BTreeMap<String, ContextVector>);

impl ContextTable {
    pub fn get(&self, id: &str) -> Option<&ContextVector> {
        self.0.get(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ContextVector)> {
        self.0.iter()
    }

    /// Largest distance between two entries; 0 for fewer than two entries.
    pub fn max_pairwise_distance(&self) -> f64 {
        let v: Vec<_> = self.0.values().collect();
        let mut best = 0.0f64;
        for (i, a) in v.iter().enumerate() {
            for b in &v[i + 1..] {
                best = best.max(a.distance(b));
            }
        }
        best
    }

    /// Largest distance from a training context to its nearest other
    /// training context; 0 for fewer than two entries.
    pub fn max_nearest_neighbor_distance(&self) -> f64 {
        let v: Vec<_> = self.0.values().collect();
        if v.len() < 2 {
            return 0.0;
        }
        v.iter()
            .enumerate()
            .map(|(i, a)| {
                v.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| a.distance(b))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["collection_id", "c1", "c2", "c3", "c4", "c5", "c6"])?;
        for (id, ctx) in &self.0 {
            let mut row = vec![id.clone()];
            row.extend(ctx.values().iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ContextError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ContextError::Csv {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |reason: String| ContextError::Csv { line, reason };
            if rec.len() != CONTEXT_DIM + 1 {
                return Err(bad(format!("expected {} fields", CONTEXT_DIM + 1)));
            }
            let mut vals = [0.0; CONTEXT_DIM];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = rec[k + 1].trim().parse().map_err(|_| bad(format!("invalid c{}", k + 1)))?;
            }
            map.insert(rec[0].to_string(), ContextVector::new(vals)?);
        }
        Ok(ContextTable(map))
    }
}

/// Embeds a new collection with frozen training PCA and normalization,
/// clamping every component into `[1, 3]`.
pub fn embed_new(pca: &PcaModel, params: &NormalizationParams, q1: &CollectionSeries) -> Result<ContextVector, ContextError> {
    let raw = collection_context_raw(pca, q1)?;
    Ok(params.apply(&raw))
}

/// Nearest training context and its Euclidean distance; `None` for an empty table.
pub fn context_distance<'t>(ctx: &ContextVector, table: &'t ContextTable) -> Option<(f64, &'t str)> {
    table
        .iter()
        .map(|(id, c)| (ctx.distance(c), id.as_str()))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Result of comparing a context against the training contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCheck {
    pub min_distance: f64,
    pub nearest: String,
    pub threshold: f64,
    pub warn: bool,
}

/// Flags contexts farther from every training context than `threshold`.
///
/// The default is the largest nearest-neighbour distance within the training
/// table: a collection is flagged when it is more isolated than any training
/// collection is from the rest.
pub fn check_context_distance(ctx: &ContextVector, table: &ContextTable, threshold: Option<f64>) -> Option<DistanceCheck> {
    let (min_distance, nearest) = context_distance(ctx, table)?;
    let threshold = threshold.unwrap_or_else(|| table.max_nearest_neighbor_distance());
    Some(DistanceCheck {
        min_distance,
        nearest: nearest.to_string(),
        threshold,
        warn: min_distance > threshold,
    })
}

/// Everything needed to embed collections: fitted PCA, frozen normalization
/// and the training table.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModel {
    pub pca: PcaModel,
    pub norm: NormalizationParams,
    pub table: ContextTable,
}

impl ContextModel {
    /// Fits PCA over all training collections and normalizes their contexts.
    pub fn fit(training: &[CollectionSeries]) -> Result<Self, ContextError> {
        let pca = fit_pca(training)?;
        let mut raw = BTreeMap::new();
        for cs in training {
            raw.insert(cs.collection_id.clone(), collection_context_raw(&pca, cs)?);
        }
        let (table, norm) = normalize_contexts(&raw)?;
        Ok(ContextModel { pca, norm, table })
    }

    pub fn embed(&self, q1: &CollectionSeries) -> Result<ContextVector, ContextError> {
        embed_new(&self.pca, &self.norm, q1)
    }
}
