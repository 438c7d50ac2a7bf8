//! Template matching: Pearson-distance scoring of claimed identities.

use serde::{Deserialize, Serialize};

use crate::config::{Agg, MatchingConfig};
use crate::error::{Error, Result};
use crate::subspace::{self, SubspaceModel};

/// Distance used between projected vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceKind {
    /// One minus the sample correlation; in `[0, 2]`.
    Pearson,
    /// Plain Euclidean distance; used by the autocorrelation baseline.
    Euclidean,
}

/// Distance a constant vector maps to when correlation is undefined.
pub const NO_MATCH_DISTANCE: f64 = 2.0;

/// Pearson distance `1 - cov(a,b) / sqrt(cov(a,a) cov(b,b))`.
///
/// Undefined when either vector is constant (zero self-covariance); callers
/// scoring claims map that to [`NO_MATCH_DISTANCE`].
pub fn pearson_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::ContractViolation(format!(
            "Pearson distance needs two equal-length vectors of at least 2 entries, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(1.0 - cov / (va * vb).sqrt())
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ContractViolation("length mismatch in Euclidean distance".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

fn distance(kind: DistanceKind, a: &[f64], b: &[f64]) -> Result<f64> {
    match kind {
        DistanceKind::Pearson => match pearson_distance(a, b) {
            Err(Error::UndefinedCorrelation) => Ok(NO_MATCH_DISTANCE),
            other => other,
        },
        DistanceKind::Euclidean => euclidean_distance(a, b),
    }
}

fn aggregate(values: impl Iterator<Item = f64>, agg: Agg) -> f64 {
    match agg {
        Agg::Min => values.fold(f64::INFINITY, f64::min),
        Agg::Mean => {
            let mut sum = 0.0;
            let mut count = 0usize;
            for v in values {
                sum += v;
                count += 1;
            }
            sum / count as f64
        }
    }
}

/// Score a set of projected test vectors against a class's projected
/// templates: aggregate over templates per vector, then over vectors.
pub fn aggregate_score(
    templates: &[Vec<f64>],
    vectors: &[Vec<f64>],
    kind: DistanceKind,
    policy: &MatchingConfig,
) -> Result<f64> {
    if templates.is_empty() || vectors.is_empty() {
        return Err(Error::ContractViolation(
            "claim scoring needs at least one template and one test vector".into(),
        ));
    }
    let mut per_vector = Vec::with_capacity(vectors.len());
    for v in vectors {
        let dists: Result<Vec<f64>> =
            templates.iter().map(|t| distance(kind, t, v)).collect();
        per_vector.push(aggregate(dists?.into_iter(), policy.over_templates));
    }
    Ok(aggregate(per_vector.into_iter(), policy.over_vectors))
}

/// A scored claim against one enrolled identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub value: f64,
    pub claimed_id: String,
    /// Ground-truth flag; set during evaluation only.
    pub genuine: Option<bool>,
}

/// Project the test vectors (already at the model's input length) and score
/// them against the claimed identity's gallery.
pub fn claim_score(
    model: &SubspaceModel,
    claimed_id: &str,
    test_rows: &[Vec<f64>],
    kind: DistanceKind,
    policy: &MatchingConfig,
) -> Result<MatchScore> {
    let class = model
        .gallery_class(claimed_id)
        .ok_or_else(|| Error::UnknownIdentity(claimed_id.to_string()))?;
    if test_rows.is_empty() {
        return Err(Error::ContractViolation("claim needs at least one test vector".into()));
    }
    let projected: Result<Vec<Vec<f64>>> =
        test_rows.iter().map(|r| subspace::project(model, r)).collect();
    let value = aggregate_score(&class.templates, &projected?, kind, policy)?;
    Ok(MatchScore { value, claimed_id: claimed_id.to_string(), genuine: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

/// Accept when the score does not exceed the threshold (inclusive).
pub fn decide(score: &MatchScore, threshold: f64) -> Decision {
    if score.value <= threshold {
        Decision::Accept
    } else {
        Decision::Reject
    }
}
