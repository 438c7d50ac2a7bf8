//! Wavelet feature extraction.
//!
//! Pulse segments are decomposed with a continuous wavelet transform using
//! the generalized (analytic) Morse wavelet, defined directly in the
//! frequency domain as `a_{gamma,beta} * w^beta * exp(-w^gamma)` for
//! positive frequencies and exactly zero for negative ones. One scale row —
//! chosen by band or by index — becomes the feature vector, zero-padded to a
//! common length across a cohort.
//!
//! Transforms are computed per scale as frequency-domain products and match
//! the direct time-domain discretization of the wavelet inner product; the
//! test suite checks that equivalence against an O(n^2) reference.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::config::{FeatureConfig, ScalePolicy};
use crate::error::{Error, Result};
use crate::preprocess::PulseSegment;

/// Morse wavelet shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorseParams {
    pub gamma: f64,
    pub beta: f64,
}

impl MorseParams {
    pub fn new(gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma > 0.0 && beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "Morse parameters must be positive, got gamma {gamma}, beta {beta}"
            )));
        }
        Ok(Self { gamma, beta })
    }

    /// Frequency of the wavelet's magnitude peak, `(beta/gamma)^(1/gamma)`,
    /// in radians per second at unit scale.
    pub fn peak_omega(&self) -> f64 {
        (self.beta / self.gamma).powf(1.0 / self.gamma)
    }

    /// Log of the factor that normalizes the peak response to 2 (the
    /// analytic-wavelet convention). Computed in log space; beta = 20 would
    /// overflow otherwise.
    fn log_peak_norm(&self) -> f64 {
        let r = self.beta / self.gamma;
        (2.0_f64).ln() - r * (r.ln() - 1.0)
    }

    /// Evaluate the frequency response at `omega` rad/s (non-negative).
    pub fn response(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        (self.log_peak_norm() + self.beta * omega.ln() - omega.powf(self.gamma)).exp()
    }
}

impl From<&FeatureConfig> for MorseParams {
    fn from(cfg: &FeatureConfig) -> Self {
        MorseParams { gamma: cfg.morse_gamma, beta: cfg.morse_beta }
    }
}

/// Frequency-domain samples of the dilated Morse wavelet on an `n`-point DFT
/// grid at sampling rate `fs`. Negative-frequency bins are exactly zero.
pub fn morse_wavelet(
    gamma: f64,
    beta: f64,
    scale: f64,
    n: usize,
    fs: f64,
) -> Result<Vec<Complex64>> {
    let params = MorseParams::new(gamma, beta)?;
    if n == 0 {
        return Err(Error::InvalidConfig("wavelet needs at least one sample".into()));
    }
    if !(scale > 0.0 && fs > 0.0) {
        return Err(Error::InvalidConfig("scale and sampling rate must be positive".into()));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, slot) in out.iter_mut().enumerate().take(n / 2 + 1) {
        let omega = std::f64::consts::TAU * k as f64 * fs / n as f64;
        *slot = Complex64::new(params.response(scale * omega), 0.0);
    }
    Ok(out)
}

/// Dyadic grid of analysis scales, stored coarsest-first with the matching
/// (ascending) center frequencies in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    scales: Vec<f64>,
    center_frequencies_hz: Vec<f64>,
    pub voices_per_octave: u32,
    pub sample_rate: f64,
    morse: MorseParams,
}

impl ScaleGrid {
    /// Build a grid whose center frequencies ladder from `freq_min_hz` to
    /// `freq_max_hz` with `voices_per_octave` steps per doubling.
    pub fn from_band(cfg: &FeatureConfig, fs: f64) -> Result<ScaleGrid> {
        let morse = MorseParams::new(cfg.morse_gamma, cfg.morse_beta)?;
        if !(cfg.freq_min_hz > 0.0 && cfg.freq_min_hz < cfg.freq_max_hz) {
            return Err(Error::InvalidConfig("bad scale-grid frequency band".into()));
        }
        if cfg.freq_max_hz >= fs / 2.0 {
            return Err(Error::InvalidConfig(format!(
                "scale-grid top {} Hz reaches Nyquist at fs {fs}",
                cfg.freq_max_hz
            )));
        }
        if cfg.voices_per_octave == 0 {
            return Err(Error::InvalidConfig("voices_per_octave must be positive".into()));
        }
        let mut freqs = Vec::new();
        let mut v = 0u32;
        loop {
            let f = cfg.freq_min_hz * 2f64.powf(v as f64 / cfg.voices_per_octave as f64);
            if f > cfg.freq_max_hz * (1.0 + 1e-9) {
                break;
            }
            freqs.push(f);
            v += 1;
        }
        Self::from_center_frequencies(morse, freqs, cfg.voices_per_octave, fs)
    }

    /// Build a grid from explicit center frequencies (ascending Hz).
    pub fn from_center_frequencies(
        morse: MorseParams,
        freqs: Vec<f64>,
        voices_per_octave: u32,
        fs: f64,
    ) -> Result<ScaleGrid> {
        if freqs.is_empty() || freqs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "center frequencies must be strictly ascending and non-empty".into(),
            ));
        }
        let wp = morse.peak_omega();
        let scales = freqs.iter().map(|f| wp / (std::f64::consts::TAU * f)).collect();
        Ok(ScaleGrid {
            scales,
            center_frequencies_hz: freqs,
            voices_per_octave,
            sample_rate: fs,
            morse,
        })
    }

    /// Analysis scales in seconds, coarsest (lowest frequency) first.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn center_frequencies_hz(&self) -> &[f64] {
        &self.center_frequencies_hz
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn morse(&self) -> MorseParams {
        self.morse
    }
}

/// Pick the scale row used for features.
///
/// `ByBand` selects the in-band scale whose center frequency is nearest the
/// band midpoint. `ByIndex { k }` counts 1-based from the coarsest scale, so
/// `k = 1` is the largest scale; whether "k-th highest" should instead count
/// from the finest end is reachable by indexing from `grid.len()`.
pub fn select_scale(grid: &ScaleGrid, policy: &ScalePolicy) -> Result<usize> {
    match policy {
        ScalePolicy::ByIndex { k } => {
            if *k == 0 || *k > grid.len() {
                return Err(Error::InvalidConfig(format!(
                    "scale index {k} outside 1..={}",
                    grid.len()
                )));
            }
            Ok(k - 1)
        }
        ScalePolicy::ByBand { low_hz, high_hz } => {
            if !(low_hz > &0.0 && low_hz < high_hz) {
                return Err(Error::InvalidConfig("bad scale selection band".into()));
            }
            let mid = 0.5 * (low_hz + high_hz);
            grid.center_frequencies_hz
                .iter()
                .enumerate()
                .filter(|(_, f)| **f >= *low_hz && **f <= *high_hz)
                .min_by(|(_, a), (_, b)| {
                    (*a - mid).abs().partial_cmp(&(*b - mid).abs()).unwrap()
                })
                .map(|(i, _)| i)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "no scale with center frequency in [{low_hz}, {high_hz}] Hz"
                    ))
                })
        }
    }
}

/// Complex wavelet coefficients, one row per scale, row length equal to the
/// source segment length.
#[derive(Debug, Clone)]
pub struct Scalogram {
    data: Vec<Complex64>,
    pub n_scales: usize,
    pub n_samples: usize,
}

impl Scalogram {
    pub fn row(&self, scale_index: usize) -> &[Complex64] {
        &self.data[scale_index * self.n_samples..(scale_index + 1) * self.n_samples]
    }

    pub fn row_magnitudes(&self, scale_index: usize) -> Vec<f64> {
        self.row(scale_index).iter().map(|c| c.norm()).collect()
    }
}

/// Reusable transform plan for segments of a fixed length: FFT plans plus
/// the per-scale conjugated wavelet spectra.
pub struct CwtPlan {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    wavelets: Vec<Vec<Complex64>>,
    scales: Vec<f64>,
    n: usize,
}

impl CwtPlan {
    pub fn new(grid: &ScaleGrid, n: usize) -> Result<CwtPlan> {
        if n < 16 {
            return Err(Error::InsufficientSignal(format!(
                "wavelet transform needs at least 16 samples, got {n}"
            )));
        }
        let morse = grid.morse();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let wavelets = grid
            .scales()
            .iter()
            .map(|&a| morse_wavelet(morse.gamma, morse.beta, a, n, grid.sample_rate))
            .collect::<Result<Vec<_>>>()?;
        Ok(CwtPlan { fft, ifft, wavelets, scales: grid.scales().to_vec(), n })
    }

    /// Transform one segment's samples (length must match the plan).
    pub fn transform(&self, values: &[f64]) -> Result<Scalogram> {
        if values.len() != self.n {
            return Err(Error::ContractViolation(format!(
                "plan built for {} samples, got {}",
                self.n,
                values.len()
            )));
        }
        let mut spectrum: Vec<Complex64> =
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut spectrum);

        let mut data = Vec::with_capacity(self.scales.len() * self.n);
        let inv_n = 1.0 / self.n as f64;
        for (a, wavelet) in self.scales.iter().zip(&self.wavelets) {
            let gain = inv_n / a.sqrt();
            let mut row: Vec<Complex64> = spectrum
                .iter()
                .zip(wavelet)
                .map(|(x, w)| x * w.conj())
                .collect();
            self.ifft.process(&mut row);
            data.extend(row.into_iter().map(|c| c * gain));
        }
        Ok(Scalogram { data, n_scales: self.scales.len(), n_samples: self.n })
    }
}

/// Wavelet-transform one pulse segment over the grid.
pub fn cwt(segment: &PulseSegment, grid: &ScaleGrid) -> Result<Scalogram> {
    CwtPlan::new(grid, segment.values.len())?.transform(&segment.values)
}

/// A fixed-length, non-negative feature vector: coefficient magnitudes of
/// one scale row, zero-padded (or center-truncated) to the gallery length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<String>,
}

/// Pad with trailing zeros up to `l`, or center-truncate down to `l`.
pub fn normalize_length(mut row: Vec<f64>, l: usize) -> Vec<f64> {
    use std::cmp::Ordering;
    match row.len().cmp(&l) {
        Ordering::Equal => row,
        Ordering::Less => {
            row.resize(l, 0.0);
            row
        }
        Ordering::Greater => {
            let start = (row.len() - l) / 2;
            row[start..start + l].to_vec()
        }
    }
}

/// Extract the feature vector for the selected scale.
pub fn to_feature_vector(scalogram: &Scalogram, scale_index: usize, l: usize) -> FeatureVector {
    FeatureVector {
        values: normalize_length(scalogram.row_magnitudes(scale_index), l),
        label: None,
    }
}
