use std::collections::HashMap;

use rayon::prelude::*;

use super::model::{predict, ModelParams, Scratch, Step};
use super::NnError;
use crate::context::CONTEXT_DIM;
use crate::series::TokenSeries;

/// Autoregressive rollout: predict the next day, slide the window by one and
/// repeat `horizon` times. Dropout is off.
pub fn generate(model: &ModelParams, context: &[f64; CONTEXT_DIM], seed_window: &[Step], horizon: usize) -> Result<Vec<Step>, NnError> {
    if seed_window.is_empty() {
        return Err(NnError::ShapeMismatch {
            what: "seed window length",
            expected: 1,
            got: 0,
        });
    }
    let mut scratch = Scratch::new(model);
    let mut window = seed_window.to_vec();
    let mut out = Vec::with_capacity(horizon);
    for day in 0..horizon {
        let y = predict(model, context, &window, &mut scratch);
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(NnError::NonFinite(format!("generated step {day}")));
        }
        out.push(y);
        window.rotate_left(1);
        *window.last_mut().expect("non-empty") = y;
    }
    Ok(out)
}

/// Last `window` days of a token series as model input.
pub fn seed_window(token: &TokenSeries, window: usize) -> Result<Vec<Step>, NnError> {
    let n = token.points.len();
    if n < window {
        return Err(NnError::ShapeMismatch {
            what: "seed window length",
            expected: window,
            got: n,
        });
    }
    Ok(token.points[n - window..].iter().map(|p| [p.value, f64::from(p.count)]).collect())
}

/// Generates every token independently from its last `window` observed days.
/// Tokens with bit-identical seed windows share one rollout.
pub fn generate_tokens(
    model: &ModelParams,
    context: &[f64; CONTEXT_DIM],
    tokens: &[TokenSeries],
    window: usize,
    horizon: usize,
) -> Result<Vec<Vec<Step>>, NnError> {
    let seeds = tokens.iter().map(|t| seed_window(t, window)).collect::<Result<Vec<_>, _>>()?;
    let mut unique: Vec<&[Step]> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let slot: Vec<usize> = seeds
        .iter()
        .map(|w| {
            let key: Vec<u64> = w.iter().flat_map(|s| [s[0].to_bits(), s[1].to_bits()]).collect();
            *index.entry(key).or_insert_with(|| {
                unique.push(w);
                unique.len() - 1
            })
        })
        .collect();
    let rolled: Vec<Vec<Step>> = unique
        .par_iter()
        .map(|w| generate(model, context, w, horizon))
        .collect::<Result<_, _>>()?;
    Ok(slot.into_iter().map(|k| rolled[k].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::DailyPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> ModelParams {
        ModelParams::init(6, 0.2, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn window(seed: u64) -> Vec<Step> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..20).map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..3.0)]).collect()
    }

    #[test]
    fn zero_horizon_is_empty() {
        assert!(generate(&model(1), &[2.0; 6], &window(1), 0).unwrap().is_empty());
    }

    #[test]
    fn zero_model_generates_zeros() {
        let out = generate(&ModelParams::zeros(3), &[2.0; 6], &window(2), 30).unwrap();
        assert!(out.iter().all(|s| *s == [0.0, 0.0]));
    }

    #[test]
    fn rollout_composes() {
        let m = model(3);
        let ctx = [1.2, 2.2, 2.9, 1.0, 1.5, 2.0];
        let w = window(4);
        let whole = generate(&m, &ctx, &w, 12).unwrap();
        let first = generate(&m, &ctx, &w, 5).unwrap();
        let mut advanced: Vec<Step> = w.iter().chain(&first).copied().collect();
        advanced.drain(..advanced.len() - w.len());
        let rest = generate(&m, &ctx, &advanced, 7).unwrap();
        assert_eq!(whole[..5], first[..]);
        assert_eq!(whole[5..], rest[..]);
    }

    #[test]
    fn generation_is_pure() {
        let m = model(5);
        assert_eq!(generate(&m, &[2.0; 6], &window(6), 10).unwrap(), generate(&m, &[2.0; 6], &window(6), 10).unwrap());
    }

    #[test]
    fn shared_windows_match_individual_rollouts() {
        let m = model(7);
        let ctx = [2.0; 6];
        let tok = |id: u64, v: f64| TokenSeries {
            token_id: id,
            points: vec![DailyPoint::new(v, if v > 0.0 { 1 } else { 0 }); 25],
        };
        let tokens = vec![tok(0, 0.0), tok(1, 1.5), tok(2, 0.0)];
        let out = generate_tokens(&m, &ctx, &tokens, 20, 8).unwrap();
        assert_eq!(out[0], out[2]);
        for (t, o) in tokens.iter().zip(&out) {
            assert_eq!(*o, generate(&m, &ctx, &seed_window(t, 20).unwrap(), 8).unwrap());
        }
    }
}
