use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use nftproj::context::{check_context_distance, ContextModel, DistanceCheck};
use nftproj::ingest::{fetch_events, write_events_csv, IngestConfig};
use nftproj::metrics::{evaluate_models, train_models, write_daily_stats_csv, ModelLabel, TrainedModels};
use nftproj::nn::{generate_tokens, load_checkpoint, save_checkpoint, Checkpoint, ModelParams, TrainConfig};
use nftproj::series::{build_series, read_series_csv, slice_quarter, write_series_csv, GROWTH_DAYS};
use nftproj::synth::{benchmark_manifest, SuiteManifest};
use nftproj::transform::{assemble_projection, assemble_raw, step_transform_tokens};
use nftproj::{CollectionSeries, Quarter};

use crate::config::{load_event_file, RunConfig};
use crate::{Cli, Command, ContextCmd, EmbedArgs, IngestCmd, UsageError};

pub const CONTEXTUAL_FILE: &str = "contextpred.ckpt";
pub const AGGREGATE_FILE: &str = "aggregate.ckpt";

pub fn baseline_file(id: &str) -> String {
    format!("baseline-{id}.ckpt")
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Ingest(IngestCmd::Fetch(a)) => {
            init_threads(threads, None)?;
            let mut cfg = IngestConfig::from_env(a.base_url)?;
            cfg.page_size = a.page_size;
            cfg.max_retries = a.max_retries;
            let events = fetch_events(&cfg, &a.address, a.from_block, a.to_block)?;
            write_to(&a.out, |w| write_events_csv(w, &events))?;
            eprintln!("fetched {} sales into {}", events.len(), a.out.display());
            Ok(())
        }
        Command::Ingest(IngestCmd::Load(a)) => {
            init_threads(threads, None)?;
            let events = load_event_file(&a.input, a.format.as_deref())?;
            write_to(&a.out, |w| write_events_csv(w, &events))?;
            eprintln!("wrote {} sales to {}", events.len(), a.out.display());
            Ok(())
        }
        Command::Synth(a) => {
            init_threads(threads, None)?;
            let manifest = match &a.manifest {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("cannot read manifest {}", p.display()))?;
                    SuiteManifest::from_toml(&text)?
                }
                None => benchmark_manifest(a.seed),
            };
            let suite = manifest.generate()?;
            fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
            write_to(&a.out.join("manifest.toml"), |w| w.write_all(manifest.to_toml().as_bytes()))?;
            for c in &suite.corpora {
                write_to(&a.out.join(format!("{}.csv", c.collection_id)), |w| write_events_csv(w, &c.events))?;
            }
            eprintln!("wrote {} collections to {}", suite.corpora.len(), a.out.display());
            Ok(())
        }
        Command::Series(a) => {
            init_threads(threads, None)?;
            let events = load_event_file(&a.events, a.format.as_deref())?;
            let tokens: Vec<u64> = (a.token_start..a.token_start + a.token_count).collect();
            let built = build_series(&a.collection, &events, a.inception, &tokens)?;
            if built.dropped_late > 0 {
                eprintln!("warning: ignored {} sales after the first year", built.dropped_late);
            }
            let cs = match a.quarter {
                Some(q) => slice_quarter(&built.series, quarter(q)),
                None => built.series,
            };
            write_to(&a.out, |w| write_series_csv(w, &cs))
        }
        Command::Context(cmd) => context(cmd, threads),
        Command::Train(a) => {
            let cfg = RunConfig::load(&a.config)?;
            init_threads(threads, Some(&cfg))?;
            let mut eval = cfg.eval_config();
            if let Some(e) = a.epochs {
                eval.train.epochs = e;
            }
            let cols = cfg.collections()?;
            let context = fit_context(&cols.train)?;
            let models = train_models(&context, &cols.train, &eval, |name, e, l| eprintln!("{name} epoch {e}: loss {l:.6}"))?;
            fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
            let save = |file: &str, model: &ModelParams| -> Result<()> {
                let ckpt = Checkpoint {
                    context: context.clone(),
                    model: Some(model.clone()),
                    config: Some(eval.train.clone()),
                };
                Ok(save_checkpoint(&ckpt, &a.out.join(file))?)
            };
            save(CONTEXTUAL_FILE, &models.contextual)?;
            save(AGGREGATE_FILE, &models.aggregate)?;
            for (id, m) in &models.baselines {
                save(&baseline_file(id), m)?;
            }
            for (name, hist) in &models.loss_histories {
                write_to(&a.out.join(format!("{}.loss.csv", file_label(name))), |w| write_loss_csv(w, hist))?;
            }
            write_to(&a.out.join("contexts.csv"), |w| context.table.write_csv(w))?;
            eprintln!("saved {} models to {}", models.baselines.len() + 2, a.out.display());
            Ok(())
        }
        Command::Generate(a) => {
            init_threads(threads, None)?;
            let ckpt = load_checkpoint(&a.checkpoint)?;
            let (model, config) = match (&ckpt.model, &ckpt.config) {
                (Some(m), Some(c)) => (m, c),
                _ => return Err(UsageError(format!("{} holds no trained model", a.checkpoint.display())).into()),
            };
            let q1 = read_q1(&a.series, a.collection.as_deref())?;
            let (ctx, chk) = embed_checked(&ckpt.context, &q1, a.threshold)?;
            warn_distance(&q1.collection_id, &chk);
            let gen = generate_tokens(model, ctx.values(), &q1.tokens, config.window, GROWTH_DAYS)?;
            let raw: BTreeMap<u64, _> = q1.token_ids().into_iter().zip(gen).collect();
            let (steps, clamped) = step_transform_tokens(&q1, &raw)?;
            let projection = assemble_projection(&q1, &steps)?;
            fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
            write_to(&a.out.join("raw.csv"), |w| write_series_csv(w, &assemble_raw(&q1, &raw).expect("checked above")))?;
            write_to(&a.out.join("projection.csv"), |w| write_series_csv(w, &projection))?;
            if clamped > 0 {
                eprintln!("note: {clamped} negative plateau values clamped to 0");
            }
            Ok(())
        }
        Command::Evaluate(a) => {
            let cfg = RunConfig::load(&a.config)?;
            init_threads(threads, Some(&cfg))?;
            let contextual = load_checkpoint(&a.models.join(CONTEXTUAL_FILE))?;
            let aggregate = load_checkpoint(&a.models.join(AGGREGATE_FILE))?;
            let cols = cfg.collections()?;
            let mut baselines = Vec::new();
            for cs in &cols.train {
                let ck = load_checkpoint(&a.models.join(baseline_file(&cs.collection_id)))?;
                baselines.push((cs.collection_id.clone(), require_model(ck, &a.models)?.0));
            }
            let (agg, _) = require_model(aggregate, &a.models)?;
            let context = contextual.context.clone();
            let (ctx_model, train_cfg) = require_model(contextual, &a.models)?;
            let models = TrainedModels {
                baselines,
                aggregate: agg,
                contextual: ctx_model,
                loss_histories: Vec::new(),
            };
            let mut eval = cfg.eval_config();
            eval.train = train_cfg;
            let report = evaluate_models(&models, &context, &cols.test, &eval)?;
            fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
            write_to(&a.out.join("evaluation.csv"), |w| report.write_csv(w))?;
            write_to(&a.out.join("diagnostics.csv"), |w| report.write_diagnostics_csv(w))?;
            for d in &report.diagnostics {
                warn_distance(&d.collection, &d.distance);
                if let (Some(cp), Some(mx)) = (report.row(&d.collection, &ModelLabel::ContextPred), report.row(&d.collection, &ModelLabel::Aggregate)) {
                    eprintln!(
                        "{}: ContextPred MAE {:.6}, M_X MAE {:.6}, actual {}",
                        d.collection, cp.stats.mae, mx.stats.mae, d.actual_tier
                    );
                }
            }
            Ok(())
        }
        Command::Report(a) => {
            init_threads(threads, None)?;
            let mut loaded = Vec::new();
            for spec in &a.series {
                let (label, path) = spec
                    .split_once('=')
                    .ok_or_else(|| UsageError(format!("--series expects label=path, got `{spec}`")))?;
                loaded.push((label.to_string(), read_series(Path::new(path), Some(label))?));
            }
            let refs: Vec<(&str, &CollectionSeries)> = loaded.iter().map(|(l, cs)| (l.as_str(), cs)).collect();
            write_to(&a.out, |w| write_daily_stats_csv(w, &refs))?;
            if let Some(path) = &a.samples_out {
                write_to(path, |w| write_samples(w, &refs, a.sample_tokens))?;
            }
            Ok(())
        }
    }
}

fn context(cmd: ContextCmd, threads: Option<usize>) -> Result<()> {
    match cmd {
        ContextCmd::Fit { config, out, table } => {
            let cfg = RunConfig::load(&config)?;
            init_threads(threads, Some(&cfg))?;
            let cols = cfg.collections()?;
            let context = fit_context(&cols.train)?;
            let table_path = table.unwrap_or_else(|| with_suffix(&out, ".contexts.csv"));
            save_checkpoint(
                &Checkpoint {
                    context: context.clone(),
                    model: None,
                    config: None,
                },
                &out,
            )?;
            write_to(&table_path, |w| context.table.write_csv(w))?;
            Ok(())
        }
        ContextCmd::Embed(a) => {
            init_threads(threads, None)?;
            let (id, _, values) = embed_args(&a, None)?;
            println!("{id},{}", values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(","));
            Ok(())
        }
        ContextCmd::Distance { embed, threshold } => {
            init_threads(threads, None)?;
            let (id, chk, _) = embed_args(&embed, threshold)?;
            println!("{id},{},{:.6},{:.6},{}", chk.nearest, chk.min_distance, chk.threshold, chk.warn);
            warn_distance(&id, &chk);
            Ok(())
        }
    }
}

fn embed_args(a: &EmbedArgs, threshold: Option<f64>) -> Result<(String, DistanceCheck, [f64; 6])> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let q1 = read_q1(&a.series, a.collection.as_deref())?;
    let (ctx, chk) = embed_checked(&ckpt.context, &q1, threshold)?;
    Ok((q1.collection_id, chk, *ctx.values()))
}

fn embed_checked(
    context: &ContextModel,
    q1: &CollectionSeries,
    threshold: Option<f64>,
) -> Result<(nftproj::ContextVector, DistanceCheck)> {
    let ctx = context.embed(q1)?;
    let chk = check_context_distance(&ctx, &context.table, threshold)
        .ok_or_else(|| UsageError("checkpoint has an empty context table".into()))?;
    Ok((ctx, chk))
}

fn warn_distance(id: &str, chk: &DistanceCheck) {
    if chk.warn {
        eprintln!(
            "warning: context of `{id}` is {:.4} from the nearest training collection `{}` (threshold {:.4}); projections may be unreliable",
            chk.min_distance, chk.nearest, chk.threshold
        );
    }
}

fn require_model(ckpt: Checkpoint, dir: &Path) -> Result<(ModelParams, TrainConfig)> {
    match (ckpt.model, ckpt.config) {
        (Some(m), Some(c)) => Ok((m, c)),
        _ => Err(UsageError(format!("a checkpoint in {} holds no trained model", dir.display())).into()),
    }
}

fn fit_context(train: &[CollectionSeries]) -> Result<ContextModel> {
    let q1: Vec<CollectionSeries> = train.iter().map(|cs| slice_quarter(cs, Quarter::Q1)).collect();
    Ok(ContextModel::fit(&q1)?)
}

fn quarter(q: u8) -> Quarter {
    match q {
        1 => Quarter::Q1,
        2 => Quarter::Q2,
        3 => Quarter::Q3,
        _ => Quarter::Q4,
    }
}

fn read_series(path: &Path, collection: Option<&str>) -> Result<CollectionSeries> {
    let id = match collection {
        Some(c) => c.to_string(),
        None => path.file_stem().and_then(|s| s.to_str()).unwrap_or("collection").to_string(),
    };
    let file = File::open(path).with_context(|| format!("cannot read series {}", path.display()))?;
    read_series_csv(std::io::BufReader::new(file), &id, 0).with_context(|| format!("in {}", path.display()))
}

fn read_q1(path: &Path, collection: Option<&str>) -> Result<CollectionSeries> {
    Ok(slice_quarter(&read_series(path, collection)?, Quarter::Q1))
}

fn file_label(name: &str) -> String {
    match name {
        "M_X" => "aggregate".into(),
        "ContextPred" => "contextpred".into(),
        other => match other.find('[') {
            Some(i) => format!("baseline-{}", other[i + 1..].trim_end_matches(']')),
            None => other.to_string(),
        },
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_loss_csv<W: Write>(mut w: W, hist: &[f64]) -> std::io::Result<()> {
    writeln!(w, "epoch,loss")?;
    for (e, l) in hist.iter().enumerate() {
        writeln!(w, "{},{l}", e + 1)?;
    }
    Ok(())
}

fn write_samples<W: Write>(mut w: W, series: &[(&str, &CollectionSeries)], n: usize) -> std::io::Result<()> {
    writeln!(w, "series,token_id,day,value_eth,count")?;
    for (label, cs) in series {
        let mut tokens: Vec<_> = cs.tokens.iter().collect();
        // most traded first, ties by token id
        tokens.sort_by_key(|t| (std::cmp::Reverse(t.last().count), t.token_id));
        for t in tokens.into_iter().take(n) {
            for (i, p) in t.points.iter().enumerate() {
                writeln!(w, "{label},{},{},{},{}", t.token_id, cs.start_day + i, p.value, p.count)?;
            }
        }
    }
    Ok(())
}

fn write_to(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).with_context(|| format!("cannot write {}", path.display()))
}

fn init_threads(flag: Option<usize>, cfg: Option<&RunConfig>) -> Result<()> {
    let Some(n) = flag.or_else(|| cfg.and_then(|c| c.threads)) else {
        return Ok(());
    };
    if n == 0 {
        return Err(UsageError("--threads must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow::anyhow!("cannot configure thread pool: {e}"))
}
