//! Method dispatch: turns recordings into feature rows and feature rows
//! into fitted models, for every supported method.

use crate::baselines;
use crate::config::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::features::{self, CwtPlan, ScaleGrid};
use crate::matching::DistanceKind;
use crate::preprocess;
use crate::recording::RawRecording;
use crate::subspace::{self, SubspaceModel, TrainingSet};

/// Distance that goes with a method: the autocorrelation baseline matches
/// with Euclidean distance, everything else with Pearson distance.
pub fn distance_for(method: Method) -> DistanceKind {
    match method {
        Method::AcLda => DistanceKind::Euclidean,
        _ => DistanceKind::Pearson,
    }
}

/// Extract unpadded feature rows from one recording, honoring the
/// configured method.
pub fn extract_rows(rec: &RawRecording, cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    match cfg.method() {
        Method::AcLda => baselines::ac_feature_rows(rec, cfg),
        _ => cwt_rows(rec, cfg),
    }
}

/// Wavelet rows: preprocess into averaged segments, transform, and take the
/// selected scale's magnitudes. Rows keep their native `4r + 1` length;
/// padding to a common gallery length happens at fit/projection time.
pub fn cwt_rows(rec: &RawRecording, cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let segments = preprocess::preprocess(rec, cfg)?;
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let grid = ScaleGrid::from_band(&cfg.features, rec.fs)?;
    let scale_idx = features::select_scale(&grid, &cfg.features.scale_policy)?;
    let plan = CwtPlan::new(&grid, segments[0].values.len())?;
    segments
        .iter()
        .map(|s| plan.transform(&s.values).map(|sc| sc.row_magnitudes(scale_idx)))
        .collect()
}

/// Fit the configured subspace model on per-subject training rows. The
/// gallery length L is the longest training row; shorter rows are
/// zero-padded. Subjects with fewer than two rows fail enrollment.
pub fn fit_model(cfg: &RunConfig, train: &[(String, Vec<Vec<f64>>)]) -> Result<SubspaceModel> {
    let offenders: Vec<&str> = train
        .iter()
        .filter(|(_, rows)| rows.len() < 2)
        .map(|(label, _)| label.as_str())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Enrollment(format!(
            "subjects with fewer than 2 usable averaged segments: {}",
            offenders.join(", ")
        )));
    }
    let l = train
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|r| r.len()))
        .max()
        .ok_or_else(|| Error::Enrollment("no training subjects".into()))?;

    let classes: Vec<(String, Vec<Vec<f64>>)> = train
        .iter()
        .map(|(label, rows)| {
            let padded =
                rows.iter().map(|r| features::normalize_length(r.clone(), l)).collect();
            (label.clone(), padded)
        })
        .collect();
    let ts = TrainingSet::new(classes)?;
    let m = cfg.subspace.dim.unwrap_or_else(|| (ts.n_classes() - 1).max(1));
    match cfg.method() {
        Method::CwtDlda => subspace::fit_dlda(&ts, m),
        Method::CwtLda | Method::AcLda => subspace::fit_lda(&ts, m),
        Method::CwtPca => subspace::fit_pca(&ts, m),
        Method::CwtKpca => subspace::fit_kpca(&ts, m, cfg.subspace.kernel_sigma),
        Method::CwtKdda => subspace::fit_kdda(&ts, m, cfg.subspace.kernel_sigma),
        Method::Openset => subspace::openset_model(&ts),
    }
}

/// Pad or truncate rows to the model's input length and project them.
pub fn project_rows(model: &SubspaceModel, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|r| {
            let sized = features::normalize_length(r.clone(), model.input_dim);
            subspace::project(model, &sized)
        })
        .collect()
}
