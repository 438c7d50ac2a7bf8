//! Run configuration: every tunable parameter of the pipeline lives here,
//! is serializable, and is hashed into a fingerprint so models remember the
//! configuration they were enrolled under.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::recording::State;

/// Verification method: feature extractor + subspace learner + distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Wavelet features + direct LDA, Pearson distance. The default.
    CwtDlda,
    /// Wavelet features + classical LDA (requires many samples per feature).
    CwtLda,
    /// Wavelet features + PCA.
    CwtPca,
    /// Wavelet features + Gaussian-kernel PCA.
    CwtKpca,
    /// Wavelet features + Gaussian-kernel direct discriminant analysis.
    CwtKdda,
    /// Wavelet features matched directly, no dimensionality reduction.
    Openset,
    /// Autocorrelation of blind windows + LDA, Euclidean distance.
    AcLda,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::CwtDlda,
        Method::CwtLda,
        Method::CwtPca,
        Method::CwtKpca,
        Method::CwtKdda,
        Method::Openset,
        Method::AcLda,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::CwtDlda => "cwt-dlda",
            Method::CwtLda => "cwt-lda",
            Method::CwtPca => "cwt-pca",
            Method::CwtKpca => "cwt-kpca",
            Method::CwtKdda => "cwt-kdda",
            Method::Openset => "openset",
            Method::AcLda => "ac-lda",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of consecutive test segments per verification trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NTest {
    Count(usize),
    /// Use every available test segment once.
    All,
}

impl fmt::Display for NTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NTest::Count(n) => write!(f, "{n}"),
            NTest::All => write!(f, "All"),
        }
    }
}

impl FromStr for NTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(NTest::All);
        }
        s.parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("bad nTest value {s:?}")))
            .and_then(|n| {
                if n == 0 {
                    Err(Error::InvalidConfig("nTest must be at least 1".into()))
                } else {
                    Ok(NTest::Count(n))
                }
            })
    }
}

impl Serialize for NTest {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NTest {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Band-pass filter parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Total band-pass order; realized as `order/2` second-order sections.
    pub order: usize,
    /// Leading seconds treated as filter transient and excluded downstream.
    pub transient_s: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { low_hz: 0.5, high_hz: 5.0, order: 38, transient_s: 2.0 }
    }
}

/// Peak detection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Prominence threshold as a fraction of the squared signal's range.
    pub prominence_rel: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { prominence_rel: 0.25 }
    }
}

/// Plausible heart-rate band in bpm, per activity state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrBandConfig {
    pub relax: (f64, f64),
    pub exercise: (f64, f64),
}

impl Default for HrBandConfig {
    fn default() -> Self {
        Self { relax: (40.0, 140.0), exercise: (40.0, 200.0) }
    }
}

impl HrBandConfig {
    /// Emotion recordings use the resting band.
    pub fn for_state(&self, state: State) -> (f64, f64) {
        match state {
            State::Exercise => self.exercise,
            State::Relax | State::Emotion(_) => self.relax,
        }
    }
}

/// Which wavelet scale feeds the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePolicy {
    /// Scale whose center frequency is nearest the midpoint of `[low, high]`
    /// Hz and inside the band.
    ByBand { low_hz: f64, high_hz: f64 },
    /// k-th scale counting from the coarsest (1-based).
    ByIndex { k: usize },
}

impl Default for ScalePolicy {
    fn default() -> Self {
        ScalePolicy::ByBand { low_hz: 1.0, high_hz: 2.0 }
    }
}

/// Wavelet feature extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub morse_gamma: f64,
    pub morse_beta: f64,
    pub voices_per_octave: u32,
    /// Scale grid spans center frequencies `[freq_min_hz, freq_max_hz]`.
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub scale_policy: ScalePolicy,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            morse_gamma: 3.0,
            morse_beta: 20.0,
            voices_per_octave: 8,
            freq_min_hz: 0.25,
            freq_max_hz: 8.0,
            scale_policy: ScalePolicy::default(),
        }
    }
}

/// Subspace-learning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubspaceConfig {
    /// Output dimension; `None` uses one less than the number of classes.
    pub dim: Option<usize>,
    /// Gaussian kernel width; `None` uses the median pairwise distance.
    pub kernel_sigma: Option<f64>,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        Self { dim: None, kernel_sigma: None }
    }
}

/// How per-template and per-vector distances combine into one claim score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Agg {
    Min,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingConfig {
    /// Aggregation over the claimed class's gallery templates.
    pub over_templates: Agg,
    /// Aggregation over the claim's test vectors.
    pub over_vectors: Agg,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self { over_templates: Agg::Min, over_vectors: Agg::Mean }
    }
}

/// Autocorrelation baseline parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcConfig {
    pub window_s: f64,
    /// Fractional overlap between consecutive windows, in `[0, 1)`.
    pub overlap: f64,
    /// Autocorrelation lags; `None` derives `round(1.2 * fs / hr_typical_hz)`.
    pub lags: Option<usize>,
    pub hr_typical_hz: f64,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self { window_s: 5.0, overlap: 0.5, lags: None, hr_typical_hz: 1.25 }
    }
}

impl AcConfig {
    pub fn lags_for(&self, fs: f64) -> usize {
        self.lags.unwrap_or(((1.2 * fs / self.hr_typical_hz).round() as usize).max(2))
    }
}

/// Evaluation protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Enrollment uses the first `train_seconds` of each subject's signal.
    pub train_seconds: f64,
    pub ntest: Vec<NTest>,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train_seconds: 45.0,
            ntest: vec![NTest::Count(2), NTest::Count(5), NTest::Count(10), NTest::All],
            iterations: 50,
            seed: 17,
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub method: MethodConfig,
    pub filter: FilterConfig,
    pub peaks: PeakConfig,
    pub hr_band: HrBandConfig,
    pub features: FeatureConfig,
    pub subspace: SubspaceConfig,
    pub matching: MatchingConfig,
    pub ac: AcConfig,
    pub protocol: ProtocolConfig,
}

/// Wrapper so the method serializes as `method = "cwt-dlda"` at the top level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MethodConfig(pub Method);

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig(Method::CwtDlda)
    }
}

impl RunConfig {
    pub fn method(&self) -> Method {
        self.method.0
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = MethodConfig(method);
        self
    }

    /// Stable hash of the full configuration. Enrolled models carry this so
    /// verifying under a different configuration is a hard error.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_changes() {
        let base = RunConfig::default();
        let mut other = RunConfig::default();
        assert_eq!(base.fingerprint(), other.fingerprint());
        other.filter.low_hz = 0.6;
        assert_ne!(base.fingerprint(), other.fingerprint());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default().with_method(Method::AcLda);
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.method(), Method::AcLda);
    }

    #[test]
    fn ntest_parses_counts_and_all() {
        assert_eq!("2".parse::<NTest>().unwrap(), NTest::Count(2));
        assert_eq!("all".parse::<NTest>().unwrap(), NTest::All);
        assert_eq!("All".parse::<NTest>().unwrap(), NTest::All);
        assert!("0".parse::<NTest>().is_err());
        assert!("x".parse::<NTest>().is_err());
    }

    #[test]
    fn hr_band_by_state() {
        let bands = HrBandConfig::default();
        assert_eq!(bands.for_state(State::Exercise), (40.0, 200.0));
        assert_eq!(bands.for_state(State::Emotion(3)), bands.relax);
    }
}
