//! Verification metrics and evaluation protocols.
//!
//! Scores are distances: a claim is accepted when its score is at or below
//! the threshold, so FAR counts imposter scores `<= t` and FRR counts
//! genuine scores `> t`.
//!
//! The equal error rate sweeps every distinct score as a threshold, keeps
//! the Pareto-optimal (FAR, FRR) operating points, and linearly interpolates
//! the segment where `FAR - FRR` changes sign. The test suite pins this
//! against an exhaustive recounted sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::config::{Method, NTest, RunConfig};
use crate::error::{Error, Result};
use crate::matching::{self, DistanceKind};
use crate::pipeline;
use crate::recording::{Dataset, RawRecording, State};
use crate::subspace::SubspaceModel;

// ---------------------------------------------------------------------------
// Score sets and metrics
// ---------------------------------------------------------------------------

/// Genuine and imposter score pools for one evaluation cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, imposter: Vec<f64>) -> Self {
        Self { genuine, imposter }
    }

    pub fn extend(&mut self, other: ScoreSet) {
        self.genuine.extend(other.genuine);
        self.imposter.extend(other.imposter);
    }

    fn assert_usable(&self) {
        assert!(
            !self.genuine.is_empty() && !self.imposter.is_empty(),
            "score set needs both genuine and imposter scores"
        );
        debug_assert!(self.genuine.iter().chain(&self.imposter).all(|s| s.is_finite()));
    }
}

/// False acceptance and false rejection rates at a threshold
/// (accept-if-`<=` convention).
pub fn far_frr(scores: &ScoreSet, threshold: f64) -> (f64, f64) {
    scores.assert_usable();
    let fa = scores.imposter.iter().filter(|&&s| s <= threshold).count();
    let fr = scores.genuine.iter().filter(|&&s| s > threshold).count();
    (fa as f64 / scores.imposter.len() as f64, fr as f64 / scores.genuine.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Ordered (threshold, FAR, FRR) sweep. FAR is non-decreasing and FRR
/// non-increasing in the threshold; the first point covers FAR = 0 and the
/// last FRR = 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Full threshold sweep over the distinct scores, with a leading
/// below-everything point so the curve always reaches FAR = 0.
pub fn roc_export(scores: &ScoreSet) -> RocCurve {
    scores.assert_usable();
    let mut thresholds: Vec<f64> =
        scores.genuine.iter().chain(&scores.imposter).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut genuine = scores.genuine.clone();
    let mut imposter = scores.imposter.clone();
    genuine.sort_by(|a, b| a.partial_cmp(b).unwrap());
    imposter.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut points = vec![RocPoint { threshold: f64::NEG_INFINITY, far: 0.0, frr: 1.0 }];
    for t in thresholds {
        let fa = imposter.partition_point(|&s| s <= t);
        let ac = genuine.partition_point(|&s| s <= t);
        points.push(RocPoint {
            threshold: t,
            far: fa as f64 / imposter.len() as f64,
            frr: 1.0 - ac as f64 / genuine.len() as f64,
        });
    }
    RocCurve { points }
}

/// Equal error rate: the FAR = FRR crossing of the Pareto-optimal operating
/// points, linearly interpolated between the adjacent points where
/// `FAR - FRR` changes sign.
pub fn eer(scores: &ScoreSet) -> f64 {
    let curve = roc_export(scores);
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.far, p.frr)).collect();
    eer_from_sweep(&pts)
}

/// Shared crossing logic for a sweep of (FAR, FRR) points ordered by
/// ascending threshold.
pub fn eer_from_sweep(points: &[(f64, f64)]) -> f64 {
    // Pareto frontier: among equal FARs only the smallest FRR is a real
    // operating point, and vice versa.
    let mut frontier: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        if let Some(last) = frontier.last_mut() {
            if p.0 == last.0 {
                *last = p; // same FAR, later threshold has the smaller FRR
                continue;
            }
        }
        frontier.push(p);
    }
    let mut pruned: Vec<(f64, f64)> = Vec::with_capacity(frontier.len());
    for p in frontier {
        if let Some(last) = pruned.last() {
            if p.1 == last.1 {
                continue; // same FRR already reachable at a smaller FAR
            }
        }
        pruned.push(p);
    }

    let diff = |p: &(f64, f64)| p.0 - p.1;
    let first_nonneg = pruned
        .iter()
        .position(|p| diff(p) >= 0.0)
        .expect("sweep always ends at FAR 1, FRR 0");
    let hi = pruned[first_nonneg];
    if diff(&hi) == 0.0 || first_nonneg == 0 {
        return 0.5 * (hi.0 + hi.1);
    }
    let lo = pruned[first_nonneg - 1];
    let t = -diff(&lo) / (diff(&hi) - diff(&lo));
    lo.0 + t * (hi.0 - lo.0)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One (protocol, nTest) evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub dataset: String,
    pub method: Method,
    pub protocol: String,
    pub ntest: NTest,
    pub mean_eer: f64,
    pub std_eer: f64,
    pub iterations: usize,
    pub per_iteration: Vec<f64>,
    /// Scores pooled across iterations.
    pub scores: ScoreSet,
    /// ROC of the pooled scores.
    pub roc: RocCurve,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, protocol: &str, ntest: NTest) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.protocol == protocol && c.ntest == ntest)
    }
}

fn make_cell(
    dataset: &str,
    method: Method,
    protocol: &str,
    ntest: NTest,
    eers: Vec<f64>,
    pooled: ScoreSet,
) -> EvalCell {
    let n = eers.len() as f64;
    let mean = eers.iter().sum::<f64>() / n;
    let var = eers.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    EvalCell {
        dataset: dataset.to_string(),
        method,
        protocol: protocol.to_string(),
        ntest,
        mean_eer: mean,
        std_eer: var.sqrt(),
        iterations: eers.len(),
        per_iteration: eers,
        roc: roc_export(&pooled),
        scores: pooled,
    }
}

// ---------------------------------------------------------------------------
// Protocol plumbing
// ---------------------------------------------------------------------------

/// A (session, state) cell of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionId {
    pub session: String,
    pub state: State,
}

impl PartitionId {
    pub fn matches(&self, rec: &RawRecording) -> bool {
        rec.session_id == self.session && rec.state == self.state
    }
}

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.session, self.state)
    }
}

impl FromStr for PartitionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (session, state) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("partition {s:?} is not session:state")))?;
        Ok(PartitionId { session: session.to_string(), state: state.parse()? })
    }
}

/// Deterministic RNG stream for one (iteration, subject) pair.
fn stream_rng(seed: u64, iteration: usize, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64 + 1) << 32) | subject as u64);
    rng
}

struct SubjectPool {
    label: String,
    /// Projected test vectors in temporal order.
    projected: Vec<Vec<f64>>,
}

/// Score every (claimant, claimed) pair: one genuine claim per enrolled
/// identity, every other identity as an imposter claim.
fn score_all_claims(
    model: &SubspaceModel,
    kind: DistanceKind,
    cfg: &RunConfig,
    slices: &[(String, Vec<Vec<f64>>)],
) -> Result<ScoreSet> {
    let mut scores = ScoreSet::default();
    for class in &model.gallery {
        for (claimant, vectors) in slices {
            if vectors.is_empty() {
                continue;
            }
            let value =
                matching::aggregate_score(&class.templates, vectors, kind, &cfg.matching)?;
            if *claimant == class.label {
                scores.genuine.push(value);
            } else {
                scores.imposter.push(value);
            }
        }
    }
    Ok(scores)
}

fn first_recording_per_subject<'a>(
    recordings: impl Iterator<Item = &'a RawRecording>,
) -> BTreeMap<String, &'a RawRecording> {
    let mut map = BTreeMap::new();
    for rec in recordings {
        map.entry(rec.subject_id.clone()).or_insert(rec);
    }
    map
}

/// Enroll the model on the first `train_seconds` of each subject's
/// recording; unusable subjects are excluded with a warning.
fn enroll_subjects(
    subjects: &BTreeMap<String, &RawRecording>,
    cfg: &RunConfig,
) -> Result<(SubspaceModel, Vec<String>)> {
    let mut train_rows: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (label, rec) in subjects {
        let result = rec
            .slice_seconds(0.0, cfg.protocol.train_seconds.min(rec.duration_s()))
            .and_then(|train| pipeline::extract_rows(&train, cfg));
        match result {
            Ok(rows) if rows.len() >= 2 => train_rows.push((label.clone(), rows)),
            Ok(rows) => {
                log::warn!("excluding {label}: only {} usable training segments", rows.len())
            }
            Err(e) => log::warn!("excluding {label}: {e}"),
        }
    }
    if train_rows.len() < 2 {
        return Err(Error::Enrollment(format!(
            "only {} subjects have usable training signal",
            train_rows.len()
        )));
    }
    let labels = train_rows.iter().map(|(l, _)| l.clone()).collect();
    let model = pipeline::fit_model(cfg, &train_rows)?;
    Ok((model, labels))
}

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

/// Single-session protocol: enroll on the head of each subject's recording,
/// then verify with `nTest` consecutive test segments drawn at a random
/// start per iteration (the `All` cell uses every remaining segment once and
/// has zero spread by construction).
pub fn protocol_single_session(dataset: &Dataset, cfg: &RunConfig) -> Result<EvalReport> {
    let subjects = first_recording_per_subject(dataset.recordings.iter());
    let (model, enrolled) = enroll_subjects(&subjects, cfg)?;

    let mut pools: Vec<SubjectPool> = Vec::new();
    for label in &enrolled {
        let rec = subjects[label];
        let rows = rec
            .slice_seconds(cfg.protocol.train_seconds, rec.duration_s())
            .and_then(|test| pipeline::extract_rows(&test, cfg));
        match rows {
            Ok(rows) if !rows.is_empty() => {
                let projected = pipeline::project_rows(&model, &rows)?;
                pools.push(SubjectPool { label: label.clone(), projected });
            }
            Ok(_) => log::warn!("no usable test segments for {label}"),
            Err(e) => log::warn!("no usable test signal for {label}: {e}"),
        }
    }
    if pools.len() < 2 {
        return Err(Error::Enrollment("fewer than 2 subjects have test signal".into()));
    }

    let kind = pipeline::distance_for(cfg.method());
    let mut cells = Vec::new();
    for &ntest in &cfg.protocol.ntest {
        let iterations = match ntest {
            NTest::All => 1,
            NTest::Count(_) => cfg.protocol.iterations.max(1),
        };
        let mut eers = Vec::with_capacity(iterations);
        let mut pooled = ScoreSet::default();
        for iter in 0..iterations {
            let slices: Vec<(String, Vec<Vec<f64>>)> = pools
                .iter()
                .enumerate()
                .map(|(si, pool)| {
                    let vectors = match ntest {
                        NTest::All => pool.projected.clone(),
                        NTest::Count(n) => {
                            let n = n.min(pool.projected.len());
                            let max_start = pool.projected.len() - n;
                            let start = if max_start == 0 {
                                0
                            } else {
                                stream_rng(cfg.protocol.seed, iter, si).gen_range(0..=max_start)
                            };
                            pool.projected[start..start + n].to_vec()
                        }
                    };
                    (pool.label.clone(), vectors)
                })
                .collect();
            let scores = score_all_claims(&model, kind, cfg, &slices)?;
            eers.push(eer(&scores));
            pooled.extend(scores);
        }
        cells.push(make_cell(&dataset.name, cfg.method(), "single_session", ntest, eers, pooled));
    }
    Ok(EvalReport { cells })
}

/// Cross-partition protocol: enroll on one (session, state) partition and
/// verify non-randomly (segments from the start) on the others. Training on
/// a test partition would leak and is rejected.
pub fn protocol_cross_partition(
    dataset: &Dataset,
    cfg: &RunConfig,
    train: &PartitionId,
    tests: &[PartitionId],
) -> Result<EvalReport> {
    if tests.iter().any(|t| t == train) {
        return Err(Error::InvalidConfig(format!(
            "partition {train} cannot be both train and test"
        )));
    }
    if tests.is_empty() {
        return Err(Error::InvalidConfig("no test partitions given".into()));
    }
    let train_subjects =
        first_recording_per_subject(dataset.recordings.iter().filter(|r| train.matches(r)));
    if train_subjects.is_empty() {
        return Err(Error::InvalidConfig(format!("no recordings in train partition {train}")));
    }
    let (model, enrolled) = enroll_subjects(&train_subjects, cfg)?;
    let kind = pipeline::distance_for(cfg.method());

    let mut cells = Vec::new();
    for test_p in tests {
        let test_subjects =
            first_recording_per_subject(dataset.recordings.iter().filter(|r| test_p.matches(r)));
        let mut pools: Vec<SubjectPool> = Vec::new();
        for label in &enrolled {
            let Some(rec) = test_subjects.get(label) else {
                log::warn!("subject {label} absent from partition {test_p}; excluded from cell");
                continue;
            };
            match pipeline::extract_rows(rec, cfg) {
                Ok(rows) if !rows.is_empty() => {
                    let projected = pipeline::project_rows(&model, &rows)?;
                    pools.push(SubjectPool { label: label.clone(), projected });
                }
                Ok(_) | Err(_) => {
                    log::warn!("subject {label} has no usable signal in {test_p}; excluded")
                }
            }
        }
        if pools.len() < 2 {
            return Err(Error::Enrollment(format!(
                "partition {test_p} has fewer than 2 usable subjects"
            )));
        }
        let protocol = format!("cross_{}_{}", test_p.session, test_p.state);
        for &ntest in &cfg.protocol.ntest {
            let slices: Vec<(String, Vec<Vec<f64>>)> = pools
                .iter()
                .map(|pool| {
                    let vectors = match ntest {
                        NTest::All => pool.projected.clone(),
                        NTest::Count(n) => {
                            pool.projected[..n.min(pool.projected.len())].to_vec()
                        }
                    };
                    (pool.label.clone(), vectors)
                })
                .collect();
            let scores = score_all_claims(&model, kind, cfg, &slices)?;
            let e = eer(&scores);
            cells.push(make_cell(&dataset.name, cfg.method(), &protocol, ntest, vec![e], scores));
        }
    }
    Ok(EvalReport { cells })
}

/// Cross-emotion protocol: iterate over every emotion as the training
/// partition; genuine trials are the subject's remaining emotions, imposter
/// trials are every emotion of every other subject. Reported per `nTest` as
/// mean and spread over the training-emotion iterations.
pub fn protocol_cross_emotion(dataset: &Dataset, cfg: &RunConfig) -> Result<EvalReport> {
    let mut emotions: Vec<u32> = dataset
        .recordings
        .iter()
        .filter_map(|r| match r.state {
            State::Emotion(k) => Some(k),
            _ => None,
        })
        .collect();
    emotions.sort_unstable();
    emotions.dedup();
    if emotions.len() < 2 {
        return Err(Error::InvalidConfig("cross-emotion needs at least 2 emotions".into()));
    }

    // rows per (subject, emotion), extracted once
    let mut rows: BTreeMap<(String, u32), Vec<Vec<f64>>> = BTreeMap::new();
    for rec in &dataset.recordings {
        let State::Emotion(k) = rec.state else { continue };
        let key = (rec.subject_id.clone(), k);
        if rows.contains_key(&key) {
            continue;
        }
        match pipeline::extract_rows(rec, cfg) {
            Ok(r) if !r.is_empty() => {
                rows.insert(key, r);
            }
            Ok(_) | Err(_) => log::warn!(
                "no usable signal for {} emotion{}; excluded",
                rec.subject_id,
                k
            ),
        }
    }

    let kind = pipeline::distance_for(cfg.method());
    let mut per_ntest: BTreeMap<String, (Vec<f64>, ScoreSet)> = BTreeMap::new();

    for &p in &emotions {
        // Enroll on emotion p. Emotion recordings are short (about a
        // minute), so the whole recording is the training budget.
        let mut train_rows: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        for ((subject, k), r) in &rows {
            if *k == p && r.len() >= 2 {
                train_rows.push((subject.clone(), r.clone()));
            }
        }
        if train_rows.len() < 2 {
            log::warn!("skipping training emotion {p}: fewer than 2 usable subjects");
            continue;
        }
        let model = pipeline::fit_model(cfg, &train_rows)?;

        // trials: every (subject, emotion) except the training pairs
        let mut trials: Vec<(String, u32, Vec<Vec<f64>>)> = Vec::new();
        for ((subject, k), r) in &rows {
            let projected = pipeline::project_rows(&model, r)?;
            trials.push((subject.clone(), *k, projected));
        }

        for &ntest in &cfg.protocol.ntest {
            let mut scores = ScoreSet::default();
            for class in &model.gallery {
                for (subject, k, projected) in &trials {
                    if *subject == class.label && *k == p {
                        continue; // training data itself
                    }
                    let vectors = match ntest {
                        NTest::All => &projected[..],
                        NTest::Count(n) => &projected[..n.min(projected.len())],
                    };
                    if vectors.is_empty() {
                        continue;
                    }
                    let value = matching::aggregate_score(
                        &class.templates,
                        vectors,
                        kind,
                        &cfg.matching,
                    )?;
                    if *subject == class.label {
                        scores.genuine.push(value);
                    } else {
                        scores.imposter.push(value);
                    }
                }
            }
            let entry = per_ntest.entry(ntest.to_string()).or_default();
            entry.0.push(eer(&scores));
            entry.1.extend(scores);
        }
    }

    let mut cells = Vec::new();
    for &ntest in &cfg.protocol.ntest {
        let (eers, pooled) = per_ntest
            .remove(&ntest.to_string())
            .ok_or_else(|| Error::Enrollment("no usable training emotion".into()))?;
        cells.push(make_cell(&dataset.name, cfg.method(), "cross_emotion", ntest, eers, pooled));
    }
    Ok(EvalReport { cells })
}
