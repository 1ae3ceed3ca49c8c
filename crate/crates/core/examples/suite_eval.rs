//! Trains every model on the synthetic benchmark suite and prints the
//! evaluation table.
//!
//! ```text
//! cargo run --release -p nftproj-core --example suite_eval -- [seed] [hidden] [epochs] [batch] [max_examples] [lr] [value_scale] [log] [contexts]
//! ```

use std::time::Instant;

use nftproj::context::{check_context_distance, ContextModel};
use nftproj::metrics::{evaluate_models, train_models, EvalConfig, ModelLabel};
use nftproj::nn::{AdamConfig, TrainConfig};
use nftproj::series::{slice_quarter, Quarter};
use nftproj::synth::{make_benchmark_suite, SuiteRole};

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = arg(&args, 1, 7);
    let config = EvalConfig {
        train: TrainConfig {
            epochs: arg(&args, 3, 8),
            batch_size: arg(&args, 4, 64),
            hidden: arg(&args, 2, 16),
            dropout_rate: 0.2,
            adam: AdamConfig { lr: arg(&args, 6, 3e-3), ..AdamConfig::default() },
            seed,
            feature_scale: [arg(&args, 7, 1.0), 1.0],
            log_value: args.iter().any(|a| a == "log"),
            ..TrainConfig::default()
        },
        max_train_examples: Some(arg(&args, 5, 8000)),
        warn_threshold: None,
    };

    let t0 = Instant::now();
    let suite = make_benchmark_suite(seed);
    let train: Vec<_> = suite.by_role(SuiteRole::Train).iter().map(|c| c.truth.clone()).collect();
    let mut test: Vec<_> = suite.by_role(SuiteRole::Test).iter().map(|c| c.truth.clone()).collect();
    test.extend(suite.by_role(SuiteRole::Ood).iter().map(|c| c.truth.clone()));
    let q1: Vec<_> = train.iter().map(|cs| slice_quarter(cs, Quarter::Q1)).collect();
    let context = ContextModel::fit(&q1).expect("context fit");
    for (id, c) in context.table.iter() {
        println!("context {id}: {:.3?}", c.values());
    }
    for cs in &test {
        let ctx = context.embed(&slice_quarter(cs, Quarter::Q1)).expect("embed");
        let chk = check_context_distance(&ctx, &context.table, None).expect("distance");
        println!(
            "context {}: {:.3?} nearest {} at {:.4} (threshold {:.4})",
            cs.collection_id,
            ctx.values(),
            chk.nearest,
            chk.min_distance,
            chk.threshold
        );
    }
    println!("suite + context: {:.1?}", t0.elapsed());
    if args.iter().any(|a| a == "contexts") {
        return;
    }

    let t1 = Instant::now();
    let models = train_models(&context, &train, &config, |name, e, l| eprintln!("{name} epoch {e}: {l:.6}")).expect("train");
    println!("training: {:.1?}", t1.elapsed());
    let t2 = Instant::now();
    let report = evaluate_models(&models, &context, &test, &config).expect("evaluate");
    println!("evaluation: {:.1?}", t2.elapsed());

    report.write_csv(std::io::stdout()).unwrap();
    report.write_diagnostics_csv(std::io::stdout()).unwrap();
    for d in &report.diagnostics {
        let cp = report.row(&d.collection, &ModelLabel::ContextPred).unwrap();
        let mx = report.row(&d.collection, &ModelLabel::Aggregate).unwrap();
        println!(
            "{}: ContextPred mae {:.4} vs M_X {:.4} -> {}; growth abs diff {:?}; warn {}",
            d.collection,
            cp.stats.mae,
            mx.stats.mae,
            if cp.stats.mae < mx.stats.mae { "better" } else { "worse" },
            cp.growth_abs_diff(),
            d.distance.warn
        );
    }
}
