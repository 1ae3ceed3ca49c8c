use super::{symmetric_eigen, ContextError, RawContext, CONTEXT_DIM};
use crate::series::{CollectionSeries, TokenSeries, Q1_DAYS};

/// Length of a flattened Q1 token vector.
pub const FEATURE_DIM: usize = Q1_DAYS * 2;

/// Eigenvalues at or below this fraction of the total second moment count as
/// absent; rounding in the mean leaves tiny spurious variance otherwise.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `CONTEXT_DIM` orthonormal rows of length `FEATURE_DIM`.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Projects a centered copy of `x` onto every component.
    pub fn project(&self, x: &[f64]) -> RawContext {
        let mut out = [0.0; CONTEXT_DIM];
        for (o, comp) in out.iter_mut().zip(&self.components) {
            *o = comp.iter().zip(x.iter().zip(&self.mean)).map(|(c, (v, m))| c * (v - m)).sum();
        }
        out
    }
}

/// Flattens a token's first 91 days, day-major: `[v0, n0, v1, n1, ...]`.
pub fn token_vector(t: &TokenSeries) -> Vec<f64> {
    t.points[..Q1_DAYS]
        .iter()
        .flat_map(|p| [p.value, f64::from(p.count)])
        .collect()
}

fn q1_vectors(cs: &CollectionSeries) -> Result<Vec<Vec<f64>>, ContextError> {
    if cs.start_day != 0 || cs.len_days() < Q1_DAYS {
        if cs.tokens.is_empty() {
            return Ok(Vec::new());
        }
        return Err(ContextError::MissingQ1(cs.collection_id.clone()));
    }
    Ok(cs.tokens.iter().map(token_vector).collect())
}

/// Fits six principal components over the Q1 token vectors of all training
/// collections.
///
/// Components are the top eigenvectors of the sample covariance (denominator
/// `n - 1`). Each is sign-normalized so that its largest-magnitude loading
/// (first such index on ties) is positive.
pub fn fit_pca(training_q1: &[CollectionSeries]) -> Result<PcaModel, ContextError> {
    let mut rows = Vec::new();
    for cs in training_q1 {
        rows.extend(q1_vectors(cs)?);
    }
    let n = rows.len();
    if n < CONTEXT_DIM + 1 {
        return Err(ContextError::InsufficientTokens {
            needed: CONTEXT_DIM + 1,
            got: n,
        });
    }

    let d = FEATURE_DIM;
    let mut mean = vec![0.0; d];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for r in &rows {
        for ((c, x), m) in centered.iter_mut().zip(r).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut cov[i * d..(i + 1) * d];
            for j in i..d {
                row[j] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    let second_moment: f64 = rows.iter().flatten().map(|x| x * x).sum::<f64>() / denom;
    let floor = RANK_TOLERANCE * second_moment;
    let eig = symmetric_eigen(&cov, d);
    for (index, &value) in eig.values[..CONTEXT_DIM].iter().enumerate() {
        if !(value > floor) {
            return Err(ContextError::RankDeficient { index, value });
        }
    }

    let components = eig.vectors[..CONTEXT_DIM]
        .iter()
        .map(|v| {
            let mut pivot = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            if v[pivot] < 0.0 {
                v.iter().map(|x| -x).collect()
            } else {
                v.clone()
            }
        })
        .collect();

    Ok(PcaModel {
        mean,
        components,
        explained_variance: eig.values[..CONTEXT_DIM].to_vec(),
    })
}

/// Mean over the collection's tokens of their centered projections.
pub fn collection_context_raw(pca: &PcaModel, q1: &CollectionSeries) -> Result<RawContext, ContextError> {
    let vectors = q1_vectors(q1)?;
    if vectors.is_empty() {
        return Err(ContextError::EmptyCollection(q1.collection_id.clone()));
    }
    let mut acc = [0.0; CONTEXT_DIM];
    for v in &vectors {
        for (a, p) in acc.iter_mut().zip(pca.project(v)) {
            *a += p;
        }
    }
    for a in &mut acc {
        *a /= vectors.len() as f64;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::DailyPoint;

    fn collection(id: &str, tokens: Vec<Vec<f64>>) -> CollectionSeries {
        CollectionSeries {
            collection_id: id.into(),
            inception_day: 0,
            start_day: 0,
            tokens: tokens
                .into_iter()
                .enumerate()
                .map(|(i, flat)| TokenSeries {
                    token_id: i as u64,
                    points: flat
                        .chunks(2)
                        .map(|c| DailyPoint::new(c[0], c[1] as u32))
                        .collect(),
                })
                .collect(),
        }
    }

    fn lcg_vectors(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                (0..FEATURE_DIM)
                    .map(|k| {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        if k % 2 == 0 {
                            (s >> 11) as f64 / (1u64 << 53) as f64 * 10.0
                        } else {
                            ((s >> 60) % 4) as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_tokens_are_rank_deficient() {
        let v = lcg_vectors(1, 1).remove(0);
        let c = collection("a", vec![v; 20]);
        assert!(matches!(fit_pca(&[c]), Err(ContextError::RankDeficient { index: 0, .. })));
    }

    #[test]
    fn too_few_tokens() {
        let c = collection("a", lcg_vectors(6, 2));
        assert!(matches!(fit_pca(&[c]), Err(ContextError::InsufficientTokens { got: 6, .. })));
    }

    #[test]
    fn components_orthonormal_and_sorted() {
        let pca = fit_pca(&[collection("a", lcg_vectors(30, 3)), collection("b", lcg_vectors(25, 4))]).unwrap();
        for i in 0..CONTEXT_DIM {
            for j in 0..CONTEXT_DIM {
                let dot: f64 = pca.components[i].iter().zip(&pca.components[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "({i},{j}) = {dot}");
            }
        }
        assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn single_token_context_is_its_projection() {
        let pca = fit_pca(&[collection("a", lcg_vectors(30, 5))]).unwrap();
        let v = lcg_vectors(1, 99).remove(0);
        let one = collection("one", vec![v.clone()]);
        assert_eq!(collection_context_raw(&pca, &one).unwrap(), pca.project(&v));
    }

    #[test]
    fn mean_token_projects_to_origin() {
        let pca = fit_pca(&[collection("a", lcg_vectors(30, 6))]).unwrap();
        let direct = pca.project(&pca.mean.clone());
        assert!(direct.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn three_token_mean_matches_direct_arithmetic() {
        let pca = fit_pca(&[collection("a", lcg_vectors(40, 7))]).unwrap();
        let toks = lcg_vectors(3, 8);
        let raw = collection_context_raw(&pca, &collection("t", toks.clone())).unwrap();
        for k in 0..CONTEXT_DIM {
            let mut sum = 0.0;
            for t in &toks {
                for j in 0..FEATURE_DIM {
                    sum += pca.components[k][j] * (t[j] - pca.mean[j]);
                }
            }
            assert!((raw[k] - sum / 3.0).abs() < 1e-9 * (1.0 + sum.abs()));
        }
    }

    #[test]
    fn empty_collection_rejected() {
        let pca = fit_pca(&[collection("a", lcg_vectors(30, 9))]).unwrap();
        assert!(matches!(
            collection_context_raw(&pca, &collection("e", vec![])),
            Err(ContextError::EmptyCollection(_))
        ));
    }
}
