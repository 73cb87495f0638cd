use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Diagonal added to covariances that are numerically singular.
pub const COVARIANCE_REGULARIZER: f64 = 1e-6;

/// Mean and covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

fn check_set(feats: &[Vec<f64>], min: usize, what: &str) -> Result<usize> {
    if feats.len() < min {
        return Err(Error::invalid(format!("{what} needs at least {min} samples, got {}", feats.len())));
    }
    let d = feats[0].len();
    if d == 0 || feats.iter().any(|f| f.len() != d) {
        return Err(Error::ShapeMismatch(format!("{what}: features have inconsistent widths")));
    }
    Ok(d)
}

impl GaussianStats {
    /// Sample mean and unbiased covariance.
    pub fn fit(feats: &[Vec<f64>]) -> Result<Self> {
        let d = check_set(feats, 2, "gaussian fit")?;
        let n = feats.len();
        let x = DMatrix::from_fn(n, d, |i, j| feats[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        Ok(Self { mean, cov })
    }
}

/// Fréchet distance and whether a covariance had to be regularized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frechet {
    pub distance: f64,
    pub regularized: bool,
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn trace_sqrt(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new((m + m.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum()
}

fn is_singular(cov: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let max = eig.max().abs().max(1e-300);
    eig.min() <= max * 1e-12
}

/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`.
///
/// The cross term is `Tr((S₁Σ₂S₁)^{1/2})` with `S₁ = Σ₁^{1/2}`, which is
/// symmetric positive semidefinite; negative eigenvalues from round-off are
/// floored at zero. Both argument orders are averaged so the result is exactly
/// symmetric.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<Frechet> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::ShapeMismatch("feature dimensions differ".into()));
    }
    let d = a.mean.len();
    let regularized = is_singular(&a.cov) || is_singular(&b.cov);
    let eye = DMatrix::<f64>::identity(d, d) * if regularized { COVARIANCE_REGULARIZER } else { 0.0 };
    let (s1, s2) = (&a.cov + &eye, &b.cov + &eye);
    let cross = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
        let r = sym_sqrt(x);
        trace_sqrt(&(&r * y * &r))
    };
    let cross_term = 0.5 * (cross(&s1, &s2) + cross(&s2, &s1));
    let diff = &a.mean - &b.mean;
    let distance = diff.dot(&diff) + s1.trace() + s2.trace() - 2.0 * cross_term;
    if regularized {
        log::warn!("covariance is singular; added {COVARIANCE_REGULARIZER} to the diagonal");
    }
    Ok(Frechet {
        distance: distance.max(0.0),
        regularized,
    })
}

pub fn frechet_from_features(real: &[Vec<f64>], gen: &[Vec<f64>]) -> Result<Frechet> {
    frechet_distance(&GaussianStats::fit(real)?, &GaussianStats::fit(gen)?)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Distance from each point to its k-th nearest other point.
fn knn_radii(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| dist(p, q))
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

/// Fraction of `queries` strictly inside at least one k-NN ball of `support`.
fn coverage(support: &[Vec<f64>], queries: &[Vec<f64>], k: usize) -> f64 {
    let radii = knn_radii(support, k);
    let inside = queries
        .iter()
        .filter(|q| support.iter().zip(&radii).any(|(s, r)| dist(q, s) < *r))
        .count();
    inside as f64 / queries.len() as f64
}

/// k-NN manifold precision and recall.
///
/// Precision is the share of generated samples inside the union of real k-NN
/// balls; recall is the share of real samples inside the generated balls.
pub fn precision_recall(real: &[Vec<f64>], gen: &[Vec<f64>], k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let d = check_set(real, k + 1, "precision/recall (real)")?;
    if check_set(gen, k + 1, "precision/recall (generated)")? != d {
        return Err(Error::ShapeMismatch("feature dimensions differ".into()));
    }
    Ok((coverage(real, gen, k), coverage(gen, real, k)))
}

/// Mean distance over `num_pairs` random pairs with no index repeated within a pass.
pub fn diversity(feats: &[Vec<f64>], num_pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    check_set(feats, 2, "diversity")?;
    if num_pairs == 0 {
        return Err(Error::invalid("diversity needs at least one pair"));
    }
    let mut order: Vec<usize> = (0..feats.len()).collect();
    let mut total = 0.0;
    let mut taken = 0;
    while taken < num_pairs {
        order.shuffle(rng);
        for pair in order.chunks_exact(2) {
            if taken == num_pairs {
                break;
            }
            total += dist(&feats[pair[0]], &feats[pair[1]]);
            taken += 1;
        }
    }
    Ok(total / num_pairs as f64)
}

/// Diversity within each text condition, averaged over conditions.
pub fn mmodality(sets: &[Vec<Vec<f64>>], pairs_per_text: usize, rng: &mut impl Rng) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::invalid("mmodality needs at least one text condition"));
    }
    let mut total = 0.0;
    for set in sets {
        total += diversity(set, pairs_per_text, rng)?;
    }
    Ok(total / sets.len() as f64)
}
