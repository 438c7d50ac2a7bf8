//! Dataset ingestion, model persistence, and report serialization.
//!
//! Recordings are CSV files — either a `t,ppg` pair with a header or a bare
//! single column of samples — tied together by a manifest CSV with the
//! schema `file,subject,session,state,fs`. Models persist as versioned JSON
//! bundles embedding the full run configuration and its fingerprint, so a
//! gallery is self-describing and cannot silently be reused under different
//! settings.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, RocCurve};
use crate::features::Scalogram;
use crate::pipeline;
use crate::recording::{Dataset, RawRecording, State};
use crate::subspace::SubspaceModel;
use crate::synthgen::SynthDataset;

// ---------------------------------------------------------------------------
// Manifests and recordings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub subject: String,
    pub session: String,
    pub state: State,
    pub fs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

/// Parse a manifest CSV (`file,subject,session,state,fs`), validating each
/// row and rejecting duplicate (file, subject, session, state) tuples.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["file", "subject", "session", "state", "fs"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Manifest {
            line: 1,
            msg: format!("header must be {}", expected.join(",")),
        });
    }
    let mut entries = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row?;
        if row.len() != 5 {
            return Err(Error::Manifest { line, msg: format!("expected 5 fields, got {}", row.len()) });
        }
        let fs: f64 = row[4]
            .parse()
            .map_err(|_| Error::Manifest { line, msg: format!("bad fs {:?}", &row[4]) })?;
        if !(fs > 0.0) {
            return Err(Error::Manifest { line, msg: format!("fs must be positive, got {fs}") });
        }
        let state: State = row[3]
            .parse()
            .map_err(|_| Error::Manifest { line, msg: format!("bad state {:?}", &row[3]) })?;
        let entry = ManifestEntry {
            file: PathBuf::from(&row[0]),
            subject: row[1].to_string(),
            session: row[2].to_string(),
            state,
            fs,
        };
        let key = (entry.file.clone(), entry.subject.clone(), entry.session.clone(), entry.state);
        if !seen.insert(key) {
            return Err(Error::Manifest { line, msg: "duplicate manifest entry".into() });
        }
        entries.push(entry);
    }
    let name = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Ok(DatasetManifest { name, entries })
}

/// Read one recording CSV: `t,ppg` with a header, or a bare column of
/// samples.
pub fn read_recording_csv(path: &Path, entry: &ManifestEntry) -> Result<RawRecording> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig(format!("empty recording file {}", path.display())))?;

    let mut samples = Vec::new();
    let has_header = first.split(',').any(|f| f.trim().parse::<f64>().is_err());
    if has_header {
        let cols: Vec<&str> = first.split(',').map(str::trim).collect();
        let ppg_col = cols.iter().position(|c| *c == "ppg").ok_or_else(|| {
            Error::InvalidConfig(format!("{}: header {first:?} has no ppg column", path.display()))
        })?;
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let value = fields.get(ppg_col).ok_or_else(|| Error::InvalidConfig(format!(
                "{}: row {} is missing the ppg column",
                path.display(),
                i + 2
            )))?;
            samples.push(value.parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!("{}: bad sample {value:?} at row {}", path.display(), i + 2))
            })?);
        }
    } else {
        for (i, line) in std::iter::once(first).chain(lines).enumerate() {
            samples.push(line.trim().parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!("{}: bad sample at row {}", path.display(), i + 1))
            })?);
        }
    }
    RawRecording::new(samples, entry.fs, entry.subject.clone(), entry.session.clone(), entry.state)
}

/// Load every recording referenced by a manifest. Missing files are a hard
/// error naming the path.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut recordings = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path = if entry.file.is_absolute() { entry.file.clone() } else { base.join(&entry.file) };
        if !path.exists() {
            return Err(Error::InvalidConfig(format!(
                "recording file {} listed in manifest does not exist",
                path.display()
            )));
        }
        recordings.push(read_recording_csv(&path, entry)?);
    }
    Ok(Dataset::new(manifest.name, recordings))
}

/// Write one recording as `t,ppg` CSV. Samples print in shortest
/// round-trip form, so reading the file back restores them exactly.
pub fn write_recording_csv(path: &Path, rec: &RawRecording) -> Result<()> {
    let mut out = String::with_capacity(rec.samples.len() * 16);
    out.push_str("t,ppg\n");
    for (i, s) in rec.samples.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i as f64 / rec.fs, s));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a synthetic dataset: per-recording CSVs, ground-truth beat
/// sidecars, and the manifest. Returns the manifest path.
pub fn write_dataset(dir: &Path, synth: &SynthDataset) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("file,subject,session,state,fs\n");
    for (rec, truth) in synth.dataset.recordings.iter().zip(&synth.ground_truth) {
        let file = format!("{}_{}_{}.csv", rec.subject_id, rec.session_id, rec.state);
        write_recording_csv(&dir.join(&file), rec)?;
        let mut beats = String::from("beat_sample\n");
        for b in truth {
            beats.push_str(&format!("{b}\n"));
        }
        fs::write(dir.join(format!("{file}.beats.csv")), beats)?;
        manifest.push_str(&format!(
            "{file},{},{},{},{}\n",
            rec.subject_id, rec.session_id, rec.state, rec.fs
        ));
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

pub const MODEL_VERSION: u32 = 1;

/// A persisted gallery: the fitted model plus the configuration that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub fingerprint: String,
    pub method: Method,
    pub config: RunConfig,
    pub model: SubspaceModel,
}

pub fn save_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    let json = serde_json::to_string(bundle)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let text = fs::read_to_string(path)?;
    let bundle: ModelBundle = serde_json::from_str(&text)?;
    if bundle.version != MODEL_VERSION {
        return Err(Error::InvalidConfig(format!(
            "model version {} is not supported (expected {MODEL_VERSION})",
            bundle.version
        )));
    }
    Ok(bundle)
}

/// Refuse to use a model under a configuration other than the one it was
/// enrolled with.
pub fn check_fingerprint(bundle: &ModelBundle, cfg: &RunConfig) -> Result<()> {
    let run = cfg.fingerprint();
    if bundle.fingerprint != run {
        return Err(Error::FingerprintMismatch { model: bundle.fingerprint.clone(), run });
    }
    Ok(())
}

/// Enroll a gallery from a dataset: per subject, extract features from the
/// first `train_seconds` of their first recording and fit the configured
/// model.
pub fn enroll(dataset: &Dataset, cfg: &RunConfig) -> Result<ModelBundle> {
    let mut per_subject: BTreeMap<String, &RawRecording> = BTreeMap::new();
    for rec in &dataset.recordings {
        per_subject.entry(rec.subject_id.clone()).or_insert(rec);
    }
    let mut train_rows = Vec::new();
    let mut failures = Vec::new();
    for (label, rec) in per_subject {
        let rows = rec
            .slice_seconds(0.0, cfg.protocol.train_seconds.min(rec.duration_s()))
            .and_then(|train| pipeline::extract_rows(&train, cfg));
        match rows {
            Ok(rows) if rows.len() >= 2 => train_rows.push((label, rows)),
            Ok(rows) => failures.push(format!("{label} ({} segments)", rows.len())),
            Err(e) => failures.push(format!("{label} ({e})")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Enrollment(format!(
            "subjects without enough usable signal: {}",
            failures.join(", ")
        )));
    }
    let model = pipeline::fit_model(cfg, &train_rows)?;
    Ok(ModelBundle {
        version: MODEL_VERSION,
        fingerprint: cfg.fingerprint(),
        method: cfg.method(),
        config: cfg.clone(),
        model,
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Results CSV with the fixed schema
/// `dataset,method,protocol,nTest,mean_eer,std_eer,iterations`.
/// Error rates are fractions in `[0, 1]`.
pub fn results_csv(report: &EvalReport) -> String {
    let mut out = String::from("dataset,method,protocol,nTest,mean_eer,std_eer,iterations\n");
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{}\n",
            c.dataset, c.method, c.protocol, c.ntest, c.mean_eer, c.std_eer, c.iterations
        ));
    }
    out
}

/// ROC CSV with schema `threshold,far,frr`. The leading below-all-scores
/// point prints its threshold as `-inf`.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,far,frr\n");
    for p in &curve.points {
        out.push_str(&format!("{},{:.6},{:.6}\n", p.threshold, p.far, p.frr));
    }
    out
}

/// Write `results.csv` plus one ROC CSV per cell (and optionally an SVG
/// overlay of all cells' ROC curves) under `dir`.
pub fn write_report(dir: &Path, report: &EvalReport, plot: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), results_csv(report))?;
    let mut curves = Vec::new();
    for c in &report.cells {
        let name = format!("roc_{}_{}_{}.csv", c.method, c.protocol, c.ntest);
        fs::write(dir.join(&name), roc_csv(&c.roc))?;
        curves.push((format!("{} {} nTest={}", c.method, c.protocol, c.ntest), &c.roc));
    }
    if plot {
        write_roc_svg(&dir.join("roc.svg"), &curves)?;
    }
    Ok(())
}

/// Minimal SVG plot of FRR against FAR for a set of curves.
pub fn write_roc_svg(path: &Path, curves: &[(String, &RocCurve)]) -> Result<()> {
    const W: f64 = 560.0;
    const H: f64 = 560.0;
    const M: f64 = 60.0;
    let x = |far: f64| M + far * (W - 2.0 * M);
    let y = |frr: f64| H - M - frr * (H - 2.0 * M);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    // axes and diagonal
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        x(0.0), y(0.0), x(1.0), y(0.0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        x(0.0), y(0.0), x(0.0), y(1.0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 4\"/>\n",
        x(0.0), y(0.0), x(1.0), y(1.0)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\">FAR</text>\n",
        x(0.5) - 14.0, H - M / 3.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" transform=\"rotate(-90 {} {})\">FRR</text>\n",
        M / 3.0, y(0.5), M / 3.0, y(0.5)
    ));

    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = palette[i % palette.len()];
        let pts: Vec<String> =
            curve.points.iter().map(|p| format!("{:.2},{:.2}", x(p.far), y(p.frr))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{label}</text>\n",
            x(0.35),
            y(1.0) + 14.0 * (i as f64 + 1.0)
        ));
    }
    svg.push_str("</svg>\n");
    let mut f = fs::File::create(path)?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}

/// CSV dump of a scalogram's magnitudes: one row per scale, prefixed with
/// the scale's center frequency.
pub fn scalogram_csv(scalogram: &Scalogram, center_frequencies_hz: &[f64]) -> String {
    let mut out = String::from("center_frequency_hz");
    for i in 0..scalogram.n_samples {
        out.push_str(&format!(",b{i}"));
    }
    out.push('\n');
    for s in 0..scalogram.n_scales {
        out.push_str(&format!("{}", center_frequencies_hz[s]));
        for v in scalogram.row_magnitudes(s) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
