//! Raw recordings and dataset containers.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Physical or emotional state a recording was captured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    Relax,
    Exercise,
    /// Emotion-elicitation segment, tagged with the stimulus index.
    Emotion(u32),
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Relax => write!(f, "relax"),
            State::Exercise => write!(f, "exercise"),
            State::Emotion(k) => write!(f, "emotion{k}"),
        }
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relax" => Ok(State::Relax),
            "exercise" => Ok(State::Exercise),
            other => {
                if let Some(idx) = other.strip_prefix("emotion") {
                    idx.parse::<u32>()
                        .map(State::Emotion)
                        .map_err(|_| Error::InvalidConfig(format!("bad state label {other:?}")))
                } else {
                    Err(Error::InvalidConfig(format!("bad state label {other:?}")))
                }
            }
        }
    }
}

/// A sampled PPG trace with its acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub samples: Vec<f64>,
    /// Sampling rate in Hz.
    pub fs: f64,
    pub subject_id: String,
    pub session_id: String,
    pub state: State,
}

/// Minimum usable recording length in seconds.
pub const MIN_DURATION_S: f64 = 10.0;

impl RawRecording {
    /// Build a recording, validating the container invariants: positive
    /// sampling rate, at least [`MIN_DURATION_S`] of signal, finite samples.
    pub fn new(
        samples: Vec<f64>,
        fs: f64,
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
        state: State,
    ) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::InvalidConfig(format!("sampling rate must be positive, got {fs}")));
        }
        if (samples.len() as f64) < MIN_DURATION_S * fs {
            return Err(Error::InsufficientSignal(format!(
                "{} samples at {fs} Hz is shorter than {MIN_DURATION_S} s",
                samples.len()
            )));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("recording contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            fs,
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            state,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same metadata, different samples. Used by internal stages (filtering,
    /// transient trimming) whose outputs may legitimately be shorter than the
    /// public minimum duration.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> RawRecording {
        RawRecording {
            samples,
            fs: self.fs,
            subject_id: self.subject_id.clone(),
            session_id: self.session_id.clone(),
            state: self.state,
        }
    }

    /// Slice `[from_s, to_s)` in seconds, clamped to the recording length.
    pub fn slice_seconds(&self, from_s: f64, to_s: f64) -> Result<RawRecording> {
        if from_s < 0.0 || to_s <= from_s {
            return Err(Error::InvalidConfig(format!("bad slice [{from_s}, {to_s})")));
        }
        let lo = (from_s * self.fs).round() as usize;
        let hi = ((to_s * self.fs).round() as usize).min(self.samples.len());
        if lo >= hi {
            return Err(Error::InsufficientSignal(format!(
                "slice [{from_s}, {to_s}) s is outside the recording"
            )));
        }
        RawRecording::new(
            self.samples[lo..hi].to_vec(),
            self.fs,
            self.subject_id.clone(),
            self.session_id.clone(),
            self.state,
        )
    }
}

/// A named collection of recordings.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub name: String,
    pub recordings: Vec<RawRecording>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, recordings: Vec<RawRecording>) -> Self {
        Self { name: name.into(), recordings }
    }

    /// Distinct subject ids in first-appearance order.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for rec in &self.recordings {
            if !out.contains(&rec.subject_id) {
                out.push(rec.subject_id.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_labels_round_trip() {
        for s in [State::Relax, State::Exercise, State::Emotion(7)] {
            assert_eq!(s.to_string().parse::<State>().unwrap(), s);
        }
        assert!("emotional".parse::<State>().is_err());
    }

    #[test]
    fn rejects_short_or_bad_recordings() {
        assert!(RawRecording::new(vec![0.0; 100], 300.0, "a", "s1", State::Relax).is_err());
        assert!(RawRecording::new(vec![0.0; 3000], 0.0, "a", "s1", State::Relax).is_err());
        assert!(RawRecording::new(vec![f64::NAN; 3000], 300.0, "a", "s1", State::Relax).is_err());
        assert!(RawRecording::new(vec![0.0; 3000], 300.0, "a", "s1", State::Relax).is_ok());
    }

    #[test]
    fn slice_seconds_clamps_to_length() {
        let rec = RawRecording::new(vec![1.0; 6000], 300.0, "a", "s1", State::Relax).unwrap();
        let s = rec.slice_seconds(0.0, 100.0).unwrap();
        assert_eq!(s.samples.len(), 6000);
        let s = rec.slice_seconds(5.0, 20.0).unwrap();
        assert_eq!(s.samples.len(), 4500);
        assert!(rec.slice_seconds(25.0, 30.0).is_err());
    }
}
