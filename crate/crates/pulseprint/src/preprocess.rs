//! Pulse preprocessing: band-pass filtering, systolic peak detection,
//! false-peak removal, and peak-centered segmentation.
//!
//! The band-pass filter is a Butterworth IIR design realized as cascaded
//! second-order sections; a direct-form transfer function at order 38 is
//! numerically unusable. Filtering is causal (forward-only) and the leading
//! [`crate::config::FilterConfig::transient_s`] seconds are excluded from
//! amplitude normalization and dropped before peak detection.

use num_complex::Complex64;

use crate::config::{FilterConfig, PeakConfig, RunConfig};
use crate::error::{Error, Result};
use crate::recording::RawRecording;

// ---------------------------------------------------------------------------
// Butterworth band-pass as second-order sections
// ---------------------------------------------------------------------------

/// One digital biquad, `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response_at(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b0 + z_inv * (self.b1 + z_inv * self.b2);
        let den = 1.0 + z_inv * (self.a1 + z_inv * self.a2);
        num / den
    }

    fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }
}

/// A cascade of second-order sections with its design sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SosCascade {
    sections: Vec<Biquad>,
    fs: f64,
}

impl SosCascade {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn sample_rate(&self) -> f64 {
        self.fs
    }

    /// Causal forward filtering, direct form II transposed per section.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b0 * xin + s1;
                s1 = s.b1 * xin - s.a1 * out + s2;
                s2 = s.b2 * xin - s.a2 * out;
                *v = out;
            }
        }
        y
    }

    /// Complex frequency response at `f_hz`. This is the analytic oracle for
    /// the filter: attenuation and passband checks evaluate it directly.
    pub fn response_at(&self, f_hz: f64) -> Complex64 {
        let omega = std::f64::consts::TAU * f_hz / self.fs;
        let z_inv = Complex64::new(omega.cos(), -omega.sin());
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response_at(z_inv))
    }

    pub fn magnitude_at(&self, f_hz: f64) -> f64 {
        self.response_at(f_hz).norm()
    }
}

/// Design a Butterworth band-pass of total order `order` (even) as
/// `order/2` second-order sections, gain-normalized to one at the geometric
/// center of the band.
pub fn design_bandpass(low_hz: f64, high_hz: f64, fs: f64, order: usize) -> Result<SosCascade> {
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::InvalidConfig(format!(
            "cutoffs must satisfy 0 < {low_hz} < {high_hz} < fs/2 = {}",
            fs / 2.0
        )));
    }
    if order < 2 || order % 2 != 0 {
        return Err(Error::InvalidConfig(format!("band-pass order must be even, got {order}")));
    }

    let n = order / 2; // analog low-pass prototype order
    let c = 2.0 * fs; // bilinear-transform constant
    let w1 = c * (std::f64::consts::PI * low_hz / fs).tan();
    let w2 = c * (std::f64::consts::PI * high_hz / fs).tan();
    let w0_sq = w1 * w2;
    let bw = w2 - w1;

    // Low-pass prototype poles on the unit circle, left half-plane. Each
    // conjugate-pair representative maps to two band-pass pole pairs; the
    // real pole (odd n) maps to one pair.
    let mut analog_pairs: Vec<(f64, f64)> = Vec::with_capacity(n); // (A1, A0) of s^2 + A1 s + A0
    for k in 0..n {
        let theta = std::f64::consts::PI * (2.0 * k as f64 + n as f64 + 1.0) / (2.0 * n as f64);
        let p = Complex64::new(theta.cos(), theta.sin());
        if p.im < -1e-12 {
            continue; // conjugate handled by its mirror
        }
        let alpha = p * (bw / 2.0);
        let disc = (alpha * alpha - w0_sq).sqrt();
        let q_hi = alpha + disc;
        let q_lo = alpha - disc;
        if p.im > 1e-12 {
            // complex prototype pole: two conjugate-closed quadratics
            for q in [q_hi, q_lo] {
                analog_pairs.push((-2.0 * q.re, q.norm_sqr()));
            }
        } else {
            // real prototype pole: the two roots close one real quadratic
            let sum = q_hi + q_lo;
            let prod = q_hi * q_lo;
            analog_pairs.push((-sum.re, prod.re));
        }
    }
    debug_assert_eq!(analog_pairs.len(), n);

    // Bilinear transform. Each section carries one band-pass zero pair
    // (s = 0 and s = infinity), i.e. numerator `c (z^2 - 1)`.
    let mut sections: Vec<Biquad> = Vec::with_capacity(n);
    for (a1s, a0s) in analog_pairs {
        let d0 = c * c + a1s * c + a0s;
        let biquad = Biquad {
            b0: c / d0,
            b1: 0.0,
            b2: -c / d0,
            a1: (-2.0 * c * c + 2.0 * a0s) / d0,
            a2: (c * c - a1s * c + a0s) / d0,
        };
        if !biquad.is_stable() {
            return Err(Error::NumericInstability(format!(
                "unstable section for band [{low_hz}, {high_hz}] Hz at fs {fs}"
            )));
        }
        sections.push(biquad);
    }
    // Most-damped sections first, then peak-scale each section so every
    // partial cascade has unit maximum frequency response. Intermediate
    // signals never blow up, which keeps accumulated rounding orders of
    // magnitude below the signal; the full cascade ends up with unit
    // passband gain.
    sections.sort_by(|a, b| b.a2.partial_cmp(&a.a2).unwrap());
    let mut probe_omegas: Vec<f64> = (0..8192)
        .map(|i| std::f64::consts::PI * i as f64 / 8191.0)
        .collect();
    for s in &sections {
        // each section's resonance, where partial-cascade peaks live
        let r = s.a2.max(0.0).sqrt();
        if r > 0.0 {
            let c = (-s.a1 / (2.0 * r)).clamp(-1.0, 1.0);
            probe_omegas.push(c.acos());
        }
    }
    let mut partial = vec![Complex64::new(1.0, 0.0); probe_omegas.len()];
    for s in &mut sections {
        let mut peak = 0.0_f64;
        for (h, &omega) in partial.iter_mut().zip(&probe_omegas) {
            let z_inv = Complex64::new(omega.cos(), -omega.sin());
            *h *= s.response_at(z_inv);
            peak = peak.max(h.norm());
        }
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::NumericInstability("degenerate section gain".into()));
        }
        s.b0 /= peak;
        s.b1 /= peak;
        s.b2 /= peak;
        for h in &mut partial {
            *h /= peak;
        }
    }
    Ok(SosCascade { sections, fs })
}

/// Filter a recording and normalize its peak-to-peak range to one.
///
/// The output has the same length as the input. The range used for
/// normalization excludes the configured transient; a degenerate range
/// (e.g. a constant input, which the band-pass nulls) is left unscaled
/// rather than amplified.
pub fn bandpass_filter(rec: &RawRecording, cfg: &FilterConfig) -> Result<RawRecording> {
    let sos = design_bandpass(cfg.low_hz, cfg.high_hz, rec.fs, cfg.order)?;
    let mut y = sos.apply(&rec.samples);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInstability("filter produced non-finite output".into()));
    }
    let skip = ((cfg.transient_s * rec.fs) as usize).min(y.len().saturating_sub(1));
    let steady = &y[skip..];
    let (lo, hi) = steady
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range > 1e-12 {
        for v in &mut y {
            *v /= range;
        }
    }
    Ok(rec.with_samples(y))
}

// ---------------------------------------------------------------------------
// Peak detection
// ---------------------------------------------------------------------------

/// Detected peak indices with their prominences (of the squared signal),
/// strictly ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeakList {
    pub indices: Vec<usize>,
    pub prominences: Vec<f64>,
}

impl PeakList {
    pub fn new(indices: Vec<usize>, prominences: Vec<f64>) -> Self {
        debug_assert_eq!(indices.len(), prominences.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices, prominences }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Find systolic peaks. The signal is squared to emphasize the amplitude gap
/// between maxima and everything else, local maxima are kept when their
/// prominence exceeds `prominence_rel` times the typical squared pulse
/// height, and candidates are mapped back to positive-valued samples of the
/// input.
///
/// The reference height is the median of per-block maxima of the squared
/// signal (blocks of 1.5 s, long enough to hold a beat at any plausible
/// rate). For clean signals this coincides with the squared signal's range;
/// unlike the raw range it does not collapse the threshold when a motion
/// burst towers over the pulses.
pub fn detect_peaks(rec: &RawRecording, cfg: &PeakConfig) -> PeakList {
    let sq: Vec<f64> = rec.samples.iter().map(|v| v * v).collect();
    let block = ((1.5 * rec.fs) as usize).max(1);
    let mut block_maxima: Vec<f64> = sq
        .chunks(block)
        .map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    block_maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut typical = block_maxima[block_maxima.len() / 2];
    if !(typical > 0.0) {
        // sparser than one beat per block; fall back to the global peak
        typical = *block_maxima.last().unwrap();
    }
    if !(typical > 0.0) {
        return PeakList::default();
    }
    let threshold = cfg.prominence_rel * typical;

    let mut indices = Vec::new();
    let mut prominences = Vec::new();
    for i in local_maxima(&sq) {
        if rec.samples[i] <= 0.0 {
            continue; // squared troughs are not systolic peaks
        }
        let prom = prominence(&sq, i);
        if prom >= threshold {
            indices.push(i);
            prominences.push(prom);
        }
    }
    PeakList::new(indices, prominences)
}

/// Indices of strict local maxima; plateaus report their midpoint.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 <= n.saturating_sub(1) {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[j] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[j] {
                out.push(i + (j - i) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence of `x[peak]`: height above the higher of the two
/// minima separating it from taller terrain (or the signal edge).
fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for i in (0..peak).rev() {
        if x[i] > h {
            break;
        }
        left_min = left_min.min(x[i]);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

// ---------------------------------------------------------------------------
// False peak removal
// ---------------------------------------------------------------------------

/// Drop peaks whose adjacent-pair instantaneous heart rate falls outside
/// `hr_band` (bpm).
///
/// For each violating pair the peak whose removal makes the merged interval
/// plausible is dropped; when either works the lower-prominence peak goes.
/// Interior pairs that are too *slow* (missing beats) cannot be repaired by
/// removal and are left alone; segmentation simply spans the gap.
pub fn remove_false_peaks(peaks: &PeakList, fs: f64, hr_band: (f64, f64)) -> PeakList {
    let mut idx = peaks.indices.clone();
    let mut prom = peaks.prominences.clone();

    let plausible = |gap_samples: f64| {
        let hr = 60.0 * fs / gap_samples;
        hr >= hr_band.0 && hr <= hr_band.1
    };

    let mut skipped: Vec<(usize, usize)> = Vec::new();
    'outer: loop {
        for j in 0..idx.len().saturating_sub(1) {
            let pair = (idx[j], idx[j + 1]);
            if plausible((pair.1 - pair.0) as f64) || skipped.contains(&pair) {
                continue;
            }
            // Removing an interior peak merges its two intervals; a boundary
            // peak just disappears.
            let removal_ok = |k: usize| {
                k == 0 || k + 1 == idx.len() || plausible((idx[k + 1] - idx[k - 1]) as f64)
            };
            let candidate = match (removal_ok(j), removal_ok(j + 1)) {
                (true, false) => Some(j),
                (false, true) => Some(j + 1),
                (true, true) => Some(if prom[j] < prom[j + 1] { j } else { j + 1 }),
                (false, false) => None,
            };
            match candidate {
                Some(k) => {
                    idx.remove(k);
                    prom.remove(k);
                }
                None => skipped.push(pair),
            }
            continue 'outer;
        }
        break;
    }
    PeakList::new(idx, prom)
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// A window of `4r + 1` samples centered on a detected systolic peak, where
/// `r` is the median inter-peak spacing in samples. At typical pulse rates a
/// window covers roughly 3.5 to 4 pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSegment {
    pub values: Vec<f64>,
    /// Median inter-peak spacing used for the window half-width `2r`.
    pub r: usize,
    /// Sample index of the source peak in the segmented signal.
    pub center_index: usize,
}

/// Cut one candidate window per peak; windows that would cross the signal
/// boundary are dropped rather than padded.
pub fn segment(rec: &RawRecording, peaks: &PeakList) -> Result<Vec<PulseSegment>> {
    if peaks.len() < 2 {
        return Err(Error::InsufficientSignal(format!(
            "segmentation needs at least 2 peaks, found {}",
            peaks.len()
        )));
    }
    let mut gaps: Vec<usize> =
        peaks.indices.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    let r = if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        let a = gaps[gaps.len() / 2 - 1] as f64;
        let b = gaps[gaps.len() / 2] as f64;
        ((a + b) / 2.0).round() as usize
    };
    if r == 0 {
        return Err(Error::InsufficientSignal("median inter-peak spacing is zero".into()));
    }
    let window = 4 * r + 1;
    let n = rec.samples.len();
    if window > n {
        return Err(Error::InsufficientSignal(format!(
            "window of {window} samples exceeds signal of {n}"
        )));
    }

    let mut segments = Vec::new();
    for &i in &peaks.indices {
        if i >= 2 * r && i + 2 * r < n {
            segments.push(PulseSegment {
                values: rec.samples[i - 2 * r..=i + 2 * r].to_vec(),
                r,
                center_index: i,
            });
        }
    }
    Ok(segments)
}

/// Average consecutive segment pairs element-wise to damp wide-band noise;
/// a trailing odd segment is dropped.
pub fn average_pairs(segments: &[PulseSegment]) -> Result<Vec<PulseSegment>> {
    if segments.len() < 2 {
        return Err(Error::InsufficientSignal(format!(
            "pair averaging needs at least 2 segments, found {}",
            segments.len()
        )));
    }
    let len = segments[0].values.len();
    if segments.iter().any(|s| s.values.len() != len) {
        return Err(Error::ContractViolation("segments differ in length".into()));
    }
    let out = segments
        .chunks_exact(2)
        .map(|pair| {
            let values = pair[0]
                .values
                .iter()
                .zip(&pair[1].values)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            PulseSegment { values, r: pair[0].r, center_index: pair[0].center_index }
        })
        .collect();
    Ok(out)
}

/// Full preprocessing chain: filter, trim the transient, detect and vet
/// peaks, segment, and pair-average. Returns the averaged segments.
pub fn preprocess(rec: &RawRecording, cfg: &RunConfig) -> Result<Vec<PulseSegment>> {
    let filtered = bandpass_filter(rec, &cfg.filter)?;
    let skip = ((cfg.filter.transient_s * rec.fs) as usize).min(filtered.samples.len());
    let trimmed = filtered.with_samples(filtered.samples[skip..].to_vec());
    if trimmed.samples.len() < 2 {
        return Err(Error::InsufficientSignal("nothing left after transient trim".into()));
    }
    let peaks = detect_peaks(&trimmed, &cfg.peaks);
    let peaks = remove_false_peaks(&peaks, rec.fs, cfg.hr_band.for_state(rec.state));
    let segments = segment(&trimmed, &peaks)?;
    average_pairs(&segments)
}
