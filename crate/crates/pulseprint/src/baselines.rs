//! Comparator pipelines: autocorrelation/LDA over blind windows (no peak
//! detection) and open-set matching without dimensionality reduction.

use std::collections::BTreeMap;

use crate::config::{MatchingConfig, RunConfig};
use crate::error::{Error, Result};
use crate::eval::ScoreSet;
use crate::matching::{self, DistanceKind};
use crate::recording::RawRecording;
use crate::subspace::{self, TrainingSet};

/// Normalized autocorrelation of one blind window; the lag-0 entry is
/// exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct AcWindow {
    pub values: Vec<f64>,
}

/// Fixed-length windows at stride `(1 - overlap) * window`, no peak
/// detection involved.
pub fn blind_windows(
    rec: &RawRecording,
    window_s: f64,
    overlap: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidConfig(format!("overlap {overlap} outside [0, 1)")));
    }
    let win = (window_s * rec.fs).round() as usize;
    if win < 2 || !(window_s > 0.0) {
        return Err(Error::InvalidConfig(format!("window of {window_s} s is too short")));
    }
    if win > rec.samples.len() {
        return Err(Error::InsufficientSignal(format!(
            "window of {win} samples exceeds signal of {}",
            rec.samples.len()
        )));
    }
    let stride = (((1.0 - overlap) * win as f64).round() as usize).max(1);
    let mut out = Vec::new();
    let mut offset = 0;
    while offset + win <= rec.samples.len() {
        out.push(rec.samples[offset..offset + win].to_vec());
        offset += stride;
    }
    Ok(out)
}

/// Biased normalized autocorrelation over lags `0..m`:
/// `R[m] = sum_i x[i] x[i+m] / R[0]`, with no `1/(N-m)` correction.
pub fn normalized_autocorr(window: &[f64], m: usize) -> Result<AcWindow> {
    if m == 0 || m > window.len() {
        return Err(Error::InvalidConfig(format!(
            "lag count {m} outside 1..={}",
            window.len()
        )));
    }
    let r0: f64 = window.iter().map(|x| x * x).sum();
    if r0 == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    let values = (0..m)
        .map(|lag| {
            if lag == 0 {
                1.0
            } else {
                let raw: f64 = window[..window.len() - lag]
                    .iter()
                    .zip(&window[lag..])
                    .map(|(a, b)| a * b)
                    .sum();
                raw / r0
            }
        })
        .collect();
    Ok(AcWindow { values })
}

/// Autocorrelation feature rows for one recording: band-pass, trim the
/// transient, blind-window, normalize each window's autocorrelation.
///
/// The lag-0 entry is identically one by construction, so it carries no
/// discriminant information and would make the within-class scatter exactly
/// singular; the feature rows start at lag 1.
pub fn ac_feature_rows(rec: &RawRecording, cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let filtered = crate::preprocess::bandpass_filter(rec, &cfg.filter)?;
    let skip = ((cfg.filter.transient_s * rec.fs) as usize).min(filtered.samples.len());
    let trimmed = filtered.with_samples(filtered.samples[skip..].to_vec());
    let windows = blind_windows(&trimmed, cfg.ac.window_s, cfg.ac.overlap)?;
    let win_len = windows.first().map(|w| w.len()).unwrap_or(0);
    let m = cfg.ac.lags_for(rec.fs).min(win_len);
    windows
        .into_iter()
        .map(|w| normalized_autocorr(&w, m).map(|a| a.values[1..].to_vec()))
        .collect()
}

fn group_rows_by_subject(
    recordings: &[RawRecording],
    cfg: &RunConfig,
) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for rec in recordings {
        let rows = ac_feature_rows(rec, cfg)?;
        groups.entry(rec.subject_id.clone()).or_default().extend(rows);
    }
    Ok(groups.into_iter().collect())
}

/// The full autocorrelation/LDA comparator: enroll LDA on training windows,
/// score each test recording as one trial (all its windows) against every
/// enrolled identity with Euclidean distance.
pub fn acda_pipeline(
    train: &[RawRecording],
    test: &[RawRecording],
    lda_dim: Option<usize>,
    cfg: &RunConfig,
) -> Result<ScoreSet> {
    let train_rows = group_rows_by_subject(train, cfg)?;
    let ts = TrainingSet::new(train_rows)?;
    let m = lda_dim.unwrap_or_else(|| (ts.n_classes() - 1).max(1));
    let model = subspace::fit_lda(&ts, m)?;

    let mut scores = ScoreSet::default();
    for rec in test {
        let rows = ac_feature_rows(rec, cfg)?;
        if rows.is_empty() {
            continue;
        }
        let projected: Result<Vec<Vec<f64>>> =
            rows.iter().map(|r| subspace::project(&model, r)).collect();
        let projected = projected?;
        for class in &model.gallery {
            let value = matching::aggregate_score(
                &class.templates,
                &projected,
                DistanceKind::Euclidean,
                &cfg.matching,
            )?;
            if class.label == rec.subject_id {
                scores.genuine.push(value);
            } else {
                scores.imposter.push(value);
            }
        }
    }
    Ok(scores)
}

/// Open-set matching: wavelet features compared by Pearson distance against
/// the raw gallery, no projection. `train` and `test` are per-subject
/// feature rows with a common padded length.
pub fn openset_scores(
    train: &[(String, Vec<Vec<f64>>)],
    test_trials: &[(String, Vec<Vec<f64>>)],
    policy: &MatchingConfig,
) -> Result<ScoreSet> {
    let ts = TrainingSet::new(train.to_vec())?;
    let model = subspace::openset_model(&ts)?;
    let mut scores = ScoreSet::default();
    for (claimant, rows) in test_trials {
        let sized: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| crate::features::normalize_length(r.clone(), model.input_dim))
            .collect();
        for class in &model.gallery {
            let value =
                matching::aggregate_score(&class.templates, &sized, DistanceKind::Pearson, policy)?;
            if &class.label == claimant {
                scores.genuine.push(value);
            } else {
                scores.imposter.push(value);
            }
        }
    }
    Ok(scores)
}
