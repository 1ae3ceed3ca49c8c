use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Step;
use super::NnError;
use crate::context::{ContextVector, CONTEXT_DIM};
use crate::series::CollectionSeries;

/// One materialized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub context: [f64; CONTEXT_DIM],
    pub window: Vec<Step>,
    pub target: Step,
}

#[derive(Debug, Clone)]
struct Source {
    context: [f64; CONTEXT_DIM],
    /// Per token, per day.
    tokens: Vec<Vec<Step>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ExampleRef {
    source: u32,
    token: u32,
    /// Day of the target.
    day: u32,
}

/// Sliding-window examples over a set of collections. Windows are stored as
/// references into the source series and materialized on demand.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    window: usize,
    sources: Vec<Source>,
    refs: Vec<ExampleRef>,
}

impl TrainingSet {
    /// Every day `d` in `[window, len)` of every token yields one example with
    /// days `d - window .. d` as input and day `d` as target.
    pub fn build(collections: &[([f64; CONTEXT_DIM], &CollectionSeries)], window: usize) -> Result<Self, NnError> {
        if window == 0 {
            return Err(NnError::InvalidConfig("window must be at least 1".into()));
        }
        let mut sources = Vec::with_capacity(collections.len());
        let mut refs = Vec::new();
        for (s, (context, cs)) in collections.iter().enumerate() {
            let days = cs.len_days();
            if days < window + 1 {
                return Err(NnError::SeriesTooShort {
                    collection: cs.collection_id.clone(),
                    days,
                    needed: window + 1,
                });
            }
            let tokens: Vec<Vec<Step>> = cs
                .tokens
                .iter()
                .map(|t| t.points.iter().map(|p| [p.value, f64::from(p.count)]).collect())
                .collect();
            for (k, t) in tokens.iter().enumerate() {
                for day in window..t.len() {
                    refs.push(ExampleRef {
                        source: s as u32,
                        token: k as u32,
                        day: day as u32,
                    });
                }
            }
            sources.push(Source {
                context: *context,
                tokens,
            });
        }
        Ok(TrainingSet { window, sources, refs })
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn get(&self, i: usize) -> Example {
        let r = self.refs[i];
        let src = &self.sources[r.source as usize];
        let series = &src.tokens[r.token as usize];
        let d = r.day as usize;
        Example {
            context: src.context,
            window: series[d - self.window..d].to_vec(),
            target: series[d],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Example> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Keeps a seeded uniform sample of at most `max` examples, in original order.
    pub fn subsample(&self, max: usize, seed: u64) -> TrainingSet {
        if self.len() <= max {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, self.len(), max).into_vec();
        picked.sort_unstable();
        TrainingSet {
            window: self.window,
            sources: self.sources.clone(),
            refs: picked.into_iter().map(|i| self.refs[i]).collect(),
        }
    }
}

/// Examples conditioned on each collection's context.
pub fn make_training_set(collections: &[(ContextVector, CollectionSeries)], window: usize) -> Result<TrainingSet, NnError> {
    let pairs: Vec<_> = collections.iter().map(|(c, s)| (*c.values(), s)).collect();
    TrainingSet::build(&pairs, window)
}

/// Examples with the context features zeroed, for unconditional baselines.
pub fn make_unconditional_set(collections: &[&CollectionSeries], window: usize) -> Result<TrainingSet, NnError> {
    let pairs: Vec<_> = collections.iter().map(|s| ([0.0; CONTEXT_DIM], *s)).collect();
    TrainingSet::build(&pairs, window)
}
