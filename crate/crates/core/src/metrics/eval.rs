use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use super::{abs_diff_pct, quarter_caps, regression_stats, tier, MetricsError, RegressionStats, Tier};
use crate::context::{check_context_distance, ContextModel, DistanceCheck, CONTEXT_DIM};
use crate::nn::{generate_tokens, make_training_set, make_unconditional_set, train_with, ModelParams, Step, TrainConfig};
use crate::series::{slice_quarter, CollectionSeries, Quarter, GROWTH_DAYS};
use crate::synth::derive_seed;
use crate::transform::{assemble_projection, assemble_raw, step_transform_tokens};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub train: TrainConfig,
    /// Per-model cap on training examples, drawn uniformly with a derived seed.
    pub max_train_examples: Option<usize>,
    /// Context distance above which a warning is raised; defaults to the
    /// largest nearest-neighbour distance among training contexts.
    pub warn_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelLabel {
    /// Unconditional model trained on one collection (1-based position, id).
    Baseline(usize, String),
    /// Unconditional model trained on all training collections.
    Aggregate,
    ContextPred,
    NftContextPred,
}

impl fmt::Display for ModelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelLabel::Baseline(i, id) => write!(f, "M{i}[{id}]"),
            ModelLabel::Aggregate => f.write_str("M_X"),
            ModelLabel::ContextPred => f.write_str("ContextPred"),
            ModelLabel::NftContextPred => f.write_str("NFT ContextPred"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    /// `(training collection id, model)` in training order.
    pub baselines: Vec<(String, ModelParams)>,
    pub aggregate: ModelParams,
    pub contextual: ModelParams,
    /// Epoch losses keyed by model label.
    pub loss_histories: Vec<(String, Vec<f64>)>,
}

enum Job<'a> {
    Baseline(usize, &'a CollectionSeries),
    Aggregate,
    Contextual,
}

/// Trains one unconditional model per training collection, one on all of
/// them, and the context-conditioned model. Model `k` uses seed
/// `derive_seed(seed, 100 + k)` and example subsample seed
/// `derive_seed(seed, 200 + k)`.
pub fn train_models(
    context: &ContextModel,
    train: &[CollectionSeries],
    config: &EvalConfig,
    on_epoch: impl Fn(&str, usize, f64) + Sync,
) -> Result<TrainedModels, MetricsError> {
    if train.is_empty() {
        return Err(MetricsError::NoCollections("training"));
    }
    let mut contextual_pairs = Vec::with_capacity(train.len());
    for cs in train {
        let ctx = context
            .table
            .get(&cs.collection_id)
            .ok_or_else(|| crate::context::ContextError::EmptyCollection(cs.collection_id.clone()))?;
        contextual_pairs.push((*ctx, cs.clone()));
    }
    let mut jobs: Vec<Job> = train.iter().enumerate().map(|(i, cs)| Job::Baseline(i, cs)).collect();
    jobs.push(Job::Aggregate);
    jobs.push(Job::Contextual);

    let window = config.train.window;
    let results: Vec<(String, ModelParams, Vec<f64>)> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, job)| {
            let (label, data) = match job {
                Job::Baseline(i, cs) => (ModelLabel::Baseline(i + 1, cs.collection_id.clone()), make_unconditional_set(&[cs], window)?),
                Job::Aggregate => (ModelLabel::Aggregate, make_unconditional_set(&train.iter().collect::<Vec<_>>(), window)?),
                Job::Contextual => (ModelLabel::ContextPred, make_training_set(&contextual_pairs, window)?),
            };
            let data = match config.max_train_examples {
                Some(max) => data.subsample(max, derive_seed(config.train.seed, 200 + k as u64)),
                None => data,
            };
            let cfg = TrainConfig {
                seed: derive_seed(config.train.seed, 100 + k as u64),
                ..config.train.clone()
            };
            let name = label.to_string();
            let out = train_with(&cfg, &data, |e, l| on_epoch(&name, e, l))?;
            Ok((name, out.model, out.loss_history))
        })
        .collect::<Result<_, MetricsError>>()?;

    let mut it = results.into_iter();
    let mut baselines = Vec::new();
    let mut loss_histories = Vec::new();
    for cs in train {
        let (name, model, hist) = it.next().expect("one result per job");
        baselines.push((cs.collection_id.clone(), model));
        loss_histories.push((name, hist));
    }
    let (name, aggregate, hist) = it.next().expect("aggregate result");
    loss_histories.push((name, hist));
    let (name, contextual, hist) = it.next().expect("contextual result");
    loss_histories.push((name, hist));
    Ok(TrainedModels {
        baselines,
        aggregate,
        contextual,
        loss_histories,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub collection: String,
    pub model: ModelLabel,
    /// Daily-value errors over Q2–Q4.
    pub stats: RegressionStats,
    /// `|y − ŷ| / y` of each quarter's market cap; `None` where the actual cap is 0.
    pub cap_abs_diff: [Option<f64>; 4],
    pub caps: [f64; 4],
    /// Tier of the projected Q4 market cap.
    pub tier: Tier,
}

impl EvalRow {
    /// Mean of the available Q2–Q4 market-cap differences.
    pub fn growth_abs_diff(&self) -> Option<f64> {
        let v: Vec<f64> = self.cap_abs_diff[1..].iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionDiagnostics {
    pub collection: String,
    pub context: [f64; CONTEXT_DIM],
    pub distance: DistanceCheck,
    pub actual_caps: [f64; 4],
    /// Tier of the actual Q4 market cap.
    pub actual_tier: Tier,
    /// Negative generated values clamped by the step-transform.
    pub clamped_negatives: usize,
    /// Whether the step-transformed projection satisfied every series invariant.
    pub nft_valid: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub diagnostics: Vec<CollectionDiagnostics>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn row(&self, collection: &str, model: &ModelLabel) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.collection == collection && &r.model == model)
    }

    pub fn rows_for<'a>(&'a self, collection: &'a str) -> impl Iterator<Item = &'a EvalRow> + 'a {
        self.rows.iter().filter(move |r| r.collection == collection)
    }

    pub fn diagnostics_for(&self, collection: &str) -> Option<&CollectionDiagnostics> {
        self.diagnostics.iter().find(|d| d.collection == collection)
    }

    /// `collection,model,mae,mse,rmse,r2,q1,q2,q3,q4,tier`, with an `Actual`
    /// row per collection carrying its tier.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["collection", "model", "mae", "mse", "rmse", "r2", "q1", "q2", "q3", "q4", "tier"])?;
        for d in &self.diagnostics {
            for r in self.rows_for(&d.collection) {
                let mut rec = vec![
                    r.collection.clone(),
                    r.model.to_string(),
                    format!("{:.6}", r.stats.mae),
                    format!("{:.6}", r.stats.mse),
                    format!("{:.6}", r.stats.rmse),
                    fmt_opt(r.stats.r2),
                ];
                rec.extend(r.cap_abs_diff.iter().map(|v| fmt_opt(*v)));
                rec.push(r.tier.to_string());
                w.write_record(&rec)?;
            }
            let mut rec = vec![d.collection.clone(), "Actual".to_string()];
            rec.extend(std::iter::repeat_n(String::new(), 8));
            rec.push(d.actual_tier.to_string());
            w.write_record(&rec)?;
        }
        w.flush()
    }

    /// One row per collection: context, nearest training collection and the
    /// distance warning.
    pub fn write_diagnostics_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "collection",
            "c1",
            "c2",
            "c3",
            "c4",
            "c5",
            "c6",
            "nearest",
            "distance",
            "threshold",
            "warning",
            "contextpred_growth_abs_diff",
            "clamped_negatives",
            "nft_valid",
        ])?;
        for d in &self.diagnostics {
            let mut rec = vec![d.collection.clone()];
            rec.extend(d.context.iter().map(|c| format!("{c:.6}")));
            rec.push(d.distance.nearest.clone());
            rec.push(format!("{:.6}", d.distance.min_distance));
            rec.push(format!("{:.6}", d.distance.threshold));
            rec.push(d.distance.warn.to_string());
            rec.push(fmt_opt(self.row(&d.collection, &ModelLabel::ContextPred).and_then(EvalRow::growth_abs_diff)));
            rec.push(d.clamped_negatives.to_string());
            rec.push(d.nft_valid.to_string());
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

fn rollout(
    model: &ModelParams,
    cond: &[f64; CONTEXT_DIM],
    q1: &CollectionSeries,
    window: usize,
) -> Result<BTreeMap<u64, Vec<Step>>, MetricsError> {
    let gen = generate_tokens(model, cond, &q1.tokens, window, GROWTH_DAYS)?;
    Ok(q1.token_ids().into_iter().zip(gen).collect())
}

fn score(actual: &CollectionSeries, projected: &CollectionSeries, model: ModelLabel) -> Result<EvalRow, MetricsError> {
    let stats = regression_stats(actual, projected, &Quarter::GROWTH)?;
    let actual_caps = quarter_caps(actual);
    let caps = quarter_caps(projected);
    let mut cap_abs_diff = [None; 4];
    for q in 0..4 {
        cap_abs_diff[q] = abs_diff_pct(actual_caps[q], caps[q]).ok();
    }
    Ok(EvalRow {
        collection: actual.collection_id.clone(),
        model,
        stats,
        cap_abs_diff,
        caps,
        tier: tier(caps[3]),
    })
}

/// Projects every test collection from its observed Q1 with each trained
/// model and scores the projections against the actual year.
pub fn evaluate_models(
    models: &TrainedModels,
    context: &ContextModel,
    test: &[CollectionSeries],
    config: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    if test.is_empty() {
        return Err(MetricsError::NoCollections("test"));
    }
    let window = config.train.window;
    let zero = [0.0; CONTEXT_DIM];
    let mut report = EvalReport::default();
    for actual in test {
        let q1 = slice_quarter(actual, Quarter::Q1);
        let ctx = context.embed(&q1)?;
        let distance = check_context_distance(&ctx, &context.table, config.warn_threshold)
            .ok_or(MetricsError::NoCollections("training context"))?;

        for (i, (id, model)) in models.baselines.iter().enumerate() {
            let raw = rollout(model, &zero, &q1, window)?;
            report.rows.push(score(actual, &assemble_raw(&q1, &raw)?, ModelLabel::Baseline(i + 1, id.clone()))?);
        }
        let raw = rollout(&models.aggregate, &zero, &q1, window)?;
        report.rows.push(score(actual, &assemble_raw(&q1, &raw)?, ModelLabel::Aggregate)?);

        let raw = rollout(&models.contextual, ctx.values(), &q1, window)?;
        report.rows.push(score(actual, &assemble_raw(&q1, &raw)?, ModelLabel::ContextPred)?);
        let (steps, clamped_negatives) = step_transform_tokens(&q1, &raw)?;
        let nft = assemble_projection(&q1, &steps)?;
        let nft_valid = nft.check_invariants().is_ok();
        report.rows.push(score(actual, &nft, ModelLabel::NftContextPred)?);

        let actual_caps = quarter_caps(actual);
        report.diagnostics.push(CollectionDiagnostics {
            collection: actual.collection_id.clone(),
            context: *ctx.values(),
            distance,
            actual_caps,
            actual_tier: tier(actual_caps[3]),
            clamped_negatives,
            nft_valid,
        });
    }
    Ok(report)
}

/// Trains every model on `train` and evaluates on `test`.
pub fn run_evaluation(
    context: &ContextModel,
    train: &[CollectionSeries],
    test: &[CollectionSeries],
    config: &EvalConfig,
) -> Result<(TrainedModels, EvalReport), MetricsError> {
    let models = train_models(context, train, config, |_, _, _| {})?;
    let report = evaluate_models(&models, context, test, config)?;
    Ok((models, report))
}
