//! Synthetic PPG cohorts with known ground truth.
//!
//! Each subject is a small morphology model: a systolic and a diastolic
//! Gaussian component on every beat (optionally a third, dicrotic component),
//! a base heart rate with beat-to-beat variability, and per-state
//! perturbation gains. Rendering is a pure function of
//! `(profile, args, seed)`, and every rendered recording carries the exact
//! sample positions of its systolic peaks, so detector and pipeline accuracy
//! can be measured instead of eyeballed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recording::{Dataset, RawRecording, State};

/// One Gaussian bump of a beat. Position and width are fractions of the
/// beat period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussComponent {
    pub amplitude: f64,
    pub width_frac: f64,
    pub position_frac: f64,
}

impl GaussComponent {
    fn validate(&self, name: &str) -> Result<()> {
        if self.amplitude <= 0.0 || self.width_frac <= 0.0 {
            return Err(Error::InvalidConfig(format!("{name}: non-positive amplitude or width")));
        }
        if !(0.0 < self.position_frac && self.position_frac < 1.0) {
            return Err(Error::InvalidConfig(format!("{name}: position must be in (0, 1)")));
        }
        Ok(())
    }
}

/// Per-subject morphology and state response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub systolic: GaussComponent,
    pub diastolic: GaussComponent,
    pub dicrotic: Option<GaussComponent>,
    pub base_hr_bpm: f64,
    pub hr_std_bpm: f64,
    /// Respiration rate in Hz; breathing modulates beat amplitudes.
    pub resp_rate_hz: f64,
    /// Relative depth of the respiratory amplitude modulation.
    pub resp_depth: f64,
    /// Respiratory sinus arrhythmia: heart rate swings this many bpm with
    /// the breathing cycle.
    pub rsa_bpm: f64,
    /// Multiplies heart rate in the exercise state.
    pub exercise_hr_gain: f64,
    /// Fraction by which exercise pulls the diastolic peak toward the
    /// systolic one.
    pub exercise_compression: f64,
    /// Relative morphology jitter applied per emotion index.
    pub emotion_jitter: f64,
    /// Relative morphology drift applied after a time lapse.
    pub drift_gain: f64,
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<()> {
        self.systolic.validate("systolic")?;
        self.diastolic.validate("diastolic")?;
        if let Some(d) = &self.dicrotic {
            d.validate("dicrotic")?;
        }
        if self.systolic.position_frac >= self.diastolic.position_frac {
            return Err(Error::InvalidConfig(
                "systolic component must precede the diastolic one".into(),
            ));
        }
        if !(40.0..=200.0).contains(&self.base_hr_bpm) {
            return Err(Error::InvalidConfig(format!(
                "base heart rate {} bpm outside [40, 200]",
                self.base_hr_bpm
            )));
        }
        Ok(())
    }

    /// The parameters that carry identity, normalized to their sampling
    /// ranges. Used for the cohort separation guarantee.
    fn identity_coords(&self, cfg: &CohortConfig) -> Vec<f64> {
        let n = |v: f64, (lo, hi): (f64, f64)| (v - lo) / (hi - lo);
        vec![
            n(self.systolic.amplitude, cfg.systolic_amplitude),
            n(self.systolic.width_frac, cfg.systolic_width),
            n(self.systolic.position_frac, cfg.systolic_position),
            n(self.diastolic.amplitude, cfg.diastolic_amplitude),
            n(self.diastolic.width_frac, cfg.diastolic_width),
            n(self.diastolic.position_frac, cfg.diastolic_position),
            n(self.base_hr_bpm, cfg.base_hr_bpm),
        ]
    }
}

/// Sampling ranges for cohort generation plus the minimum pairwise
/// separation (in normalized parameter space) that keeps subjects learnable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub systolic_amplitude: (f64, f64),
    pub systolic_width: (f64, f64),
    pub systolic_position: (f64, f64),
    pub diastolic_amplitude: (f64, f64),
    pub diastolic_width: (f64, f64),
    pub diastolic_position: (f64, f64),
    pub base_hr_bpm: (f64, f64),
    pub hr_std_bpm: (f64, f64),
    pub resp_rate_hz: (f64, f64),
    pub resp_depth: (f64, f64),
    pub rsa_bpm: (f64, f64),
    pub exercise_hr_gain: (f64, f64),
    pub exercise_compression: (f64, f64),
    pub emotion_jitter: (f64, f64),
    pub drift_gain: (f64, f64),
    /// Minimum pairwise distance between identity parameters, normalized.
    pub min_separation: f64,
    /// Additional pairwise floor on base heart-rate differences, in bpm.
    /// Matching beat periods are the main source of imposter confusion, so
    /// clean desk-scale cohorts should keep rates apart.
    pub min_hr_gap_bpm: f64,
    /// Add a small dicrotic-notch component to every beat.
    pub with_dicrotic: bool,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            systolic_amplitude: (0.8, 1.2),
            systolic_width: (0.045, 0.085),
            systolic_position: (0.12, 0.24),
            diastolic_amplitude: (0.30, 0.65),
            diastolic_width: (0.08, 0.16),
            diastolic_position: (0.45, 0.75),
            base_hr_bpm: (55.0, 95.0),
            hr_std_bpm: (0.5, 2.0),
            resp_rate_hz: (0.18, 0.33),
            resp_depth: (0.08, 0.20),
            rsa_bpm: (1.0, 3.0),
            exercise_hr_gain: (1.06, 1.16),
            exercise_compression: (0.06, 0.14),
            emotion_jitter: (0.02, 0.05),
            drift_gain: (0.02, 0.05),
            min_separation: 0.25,
            min_hr_gap_bpm: 0.0,
            with_dicrotic: false,
        }
    }
}

/// Recording condition handed to [`render`]. `TimeLapse` stands for a
/// second-session recording whose morphology has drifted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Relax,
    Exercise,
    Emotion(u32),
    TimeLapse,
}

impl Condition {
    fn state(&self) -> State {
        match self {
            Condition::Relax | Condition::TimeLapse => State::Relax,
            Condition::Exercise => State::Exercise,
            Condition::Emotion(k) => State::Emotion(*k),
        }
    }
}

/// Additive disturbance model for rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// White-noise standard deviation relative to unit pulse amplitude.
    /// Baseline wander at 0.2 Hz rides along with twice this amplitude.
    pub white: f64,
    /// Motion-artifact bursts per minute: short in-band transients several
    /// times the pulse amplitude. Off by default.
    pub bursts_per_min: f64,
}

impl NoiseSpec {
    pub fn white(level: f64) -> Self {
        Self { white: level, bursts_per_min: 0.0 }
    }
}

/// Draw `n` pairwise-separated subject profiles.
pub fn sample_cohort(n: usize, seed: u64, cfg: &CohortConfig) -> Result<Vec<SubjectProfile>> {
    if n < 2 {
        return Err(Error::InvalidConfig("cohort needs at least 2 subjects".into()));
    }
    // 7 identity parameters, each normalized to [0, 1].
    let diameter = (7.0_f64).sqrt();
    if cfg.min_separation > diameter {
        return Err(Error::InvalidConfig(format!(
            "min_separation {} exceeds the parameter-box diameter {diameter:.3}",
            cfg.min_separation
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // With a heart-rate gap, rates come from jittered, shuffled slots across
    // the configured range: sequential rejection cannot pack rates tightly.
    let hr_slots: Option<Vec<f64>> = if cfg.min_hr_gap_bpm > 0.0 {
        let (lo, hi) = cfg.base_hr_bpm;
        let step = (hi - lo) / n as f64;
        if step < cfg.min_hr_gap_bpm {
            return Err(Error::InvalidConfig(format!(
                "cannot fit {n} subjects with a {} bpm heart-rate gap into [{lo}, {hi}] bpm",
                cfg.min_hr_gap_bpm
            )));
        }
        let jitter = 0.5 * (step - cfg.min_hr_gap_bpm);
        let mut slots: Vec<f64> = (0..n)
            .map(|i| lo + (i as f64 + 0.5) * step + rng.gen_range(-jitter..=jitter))
            .collect();
        use rand::seq::SliceRandom;
        slots.shuffle(&mut rng);
        Some(slots)
    } else {
        None
    };

    let mut profiles: Vec<SubjectProfile> = Vec::with_capacity(n);
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(n);
    const MAX_ATTEMPTS: usize = 20_000;

    let mut attempts = 0;
    while profiles.len() < n {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::InvalidConfig(format!(
                "could not place {n} subjects with min_separation {}; lower it or shrink the cohort",
                cfg.min_separation
            )));
        }
        let mut candidate = draw_profile(profiles.len(), &mut rng, cfg);
        if let Some(slots) = &hr_slots {
            candidate.base_hr_bpm = slots[profiles.len()];
        }
        let c = candidate.identity_coords(cfg);
        let ok = coords.iter().all(|other| dist(&c, other) >= cfg.min_separation)
            && profiles
                .iter()
                .all(|p| (p.base_hr_bpm - candidate.base_hr_bpm).abs() >= cfg.min_hr_gap_bpm);
        if ok {
            candidate.validate()?;
            profiles.push(candidate);
            coords.push(c);
        }
    }
    Ok(profiles)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn draw_profile(index: usize, rng: &mut ChaCha8Rng, cfg: &CohortConfig) -> SubjectProfile {
    let mut pick = |range: (f64, f64)| rng.gen_range(range.0..range.1);
    let systolic = GaussComponent {
        amplitude: pick(cfg.systolic_amplitude),
        width_frac: pick(cfg.systolic_width),
        position_frac: pick(cfg.systolic_position),
    };
    let diastolic = GaussComponent {
        amplitude: pick(cfg.diastolic_amplitude),
        width_frac: pick(cfg.diastolic_width),
        position_frac: pick(cfg.diastolic_position),
    };
    let dicrotic = cfg.with_dicrotic.then(|| GaussComponent {
        amplitude: 0.3 * diastolic.amplitude,
        width_frac: 0.5 * diastolic.width_frac,
        position_frac: 0.5 * (systolic.position_frac + diastolic.position_frac),
    });
    SubjectProfile {
        subject_id: format!("s{index:02}"),
        systolic,
        diastolic,
        dicrotic,
        base_hr_bpm: pick(cfg.base_hr_bpm),
        hr_std_bpm: pick(cfg.hr_std_bpm),
        resp_rate_hz: pick(cfg.resp_rate_hz),
        resp_depth: pick(cfg.resp_depth),
        rsa_bpm: pick(cfg.rsa_bpm),
        exercise_hr_gain: pick(cfg.exercise_hr_gain),
        exercise_compression: pick(cfg.exercise_compression),
        emotion_jitter: pick(cfg.emotion_jitter),
        drift_gain: pick(cfg.drift_gain),
    }
}

/// Render one recording plus the ground-truth systolic sample indices.
pub fn render(
    profile: &SubjectProfile,
    duration_s: f64,
    fs: f64,
    condition: Condition,
    noise: NoiseSpec,
    seed: u64,
) -> Result<(RawRecording, Vec<usize>)> {
    if duration_s < 10.0 {
        return Err(Error::InvalidConfig("render needs at least 10 s".into()));
    }
    profile.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adjusted = condition_profile(profile, condition, seed);

    let n = (duration_s * fs).round() as usize;
    let mut samples = vec![0.0_f64; n];
    let mut truth = Vec::new();

    let hr_noise = Normal::new(0.0, adjusted.hr_std_bpm.max(1e-9)).unwrap();
    let resp_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut t = 0.15; // keep the first beat fully inside the record
    loop {
        let breath_phase = std::f64::consts::TAU * adjusted.resp_rate_hz * t + resp_phase;
        let hr = (adjusted.base_hr_bpm
            + adjusted.rsa_bpm * breath_phase.sin()
            + hr_noise.sample(&mut rng))
        .clamp(40.0, 200.0);
        let period = 60.0 / hr;
        if t + period > duration_s {
            break;
        }
        // breathing modulates the whole beat's amplitude
        let breath = 1.0 + adjusted.resp_depth * breath_phase.sin();
        let mut components: Vec<&GaussComponent> =
            vec![&adjusted.systolic, &adjusted.diastolic];
        if let Some(d) = &adjusted.dicrotic {
            components.push(d);
        }
        for comp in components {
            let center = t + comp.position_frac * period;
            let sigma = comp.width_frac * period;
            add_gaussian(&mut samples, fs, center, sigma, comp.amplitude * breath);
        }
        let sys_idx = ((t + adjusted.systolic.position_frac * period) * fs).round() as usize;
        if sys_idx < n {
            truth.push(sys_idx);
        }
        t += period;
    }

    if noise.white > 0.0 {
        let white = Normal::new(0.0, noise.white).unwrap();
        let wander_amp = 2.0 * noise.white;
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        for (i, s) in samples.iter_mut().enumerate() {
            let ts = i as f64 / fs;
            *s += white.sample(&mut rng)
                + wander_amp * (std::f64::consts::TAU * 0.2 * ts + phase).sin();
        }
    }
    if noise.bursts_per_min > 0.0 {
        let count = (noise.bursts_per_min * duration_s / 60.0).round() as usize;
        for _ in 0..count {
            let center = rng.gen_range(0.5..duration_s - 0.5);
            let width = rng.gen_range(0.08..0.3); // envelope sigma in seconds
            let freq = rng.gen_range(1.0..4.0); // inside the analysis band
            let amp = rng.gen_range(2.0..5.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let lo = (((center - 4.0 * width) * fs).floor().max(0.0)) as usize;
            let hi = (((center + 4.0 * width) * fs).ceil() as usize).min(samples.len());
            for i in lo..hi {
                let dt = i as f64 / fs - center;
                samples[i] += amp
                    * (-0.5 * (dt / width) * (dt / width)).exp()
                    * (std::f64::consts::TAU * freq * dt + phase).sin();
            }
        }
    }

    let rec = RawRecording::new(
        samples,
        fs,
        profile.subject_id.clone(),
        session_label(condition),
        condition.state(),
    )?;
    Ok((rec, truth))
}

fn session_label(condition: Condition) -> &'static str {
    match condition {
        Condition::TimeLapse => "s2",
        _ => "s1",
    }
}

fn condition_profile(profile: &SubjectProfile, condition: Condition, seed: u64) -> SubjectProfile {
    let mut p = profile.clone();
    match condition {
        Condition::Relax => {}
        Condition::Exercise => {
            p.base_hr_bpm = (p.base_hr_bpm * p.exercise_hr_gain).min(200.0);
            let gap = p.diastolic.position_frac - p.systolic.position_frac;
            p.diastolic.position_frac =
                p.systolic.position_frac + gap * (1.0 - p.exercise_compression);
            // breathing hard after exercise
            p.resp_rate_hz *= 1.3;
            p.resp_depth = (p.resp_depth * 1.5).min(0.4);
        }
        Condition::Emotion(k) => {
            // Per-emotion deterministic jitter, independent of the render seed
            // so one emotion looks the same across subjects' sessions.
            let gain = p.emotion_jitter;
            let mut jrng = ChaCha8Rng::seed_from_u64(
                seed ^ (0x45 + k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            jitter_morphology(&mut p, gain, 0.3, &mut jrng);
        }
        Condition::TimeLapse => {
            // weeks later: waveform drifts a little, the resting rate more
            let gain = p.drift_gain;
            let mut jrng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a95_5a5a_1234_5678);
            jitter_morphology(&mut p, gain, 1.5, &mut jrng);
        }
    }
    p
}

fn jitter_morphology(p: &mut SubjectProfile, gain: f64, hr_factor: f64, rng: &mut ChaCha8Rng) {
    let mut j = |v: &mut f64| *v *= 1.0 + gain * rng.gen_range(-1.0..1.0);
    j(&mut p.systolic.amplitude);
    j(&mut p.systolic.width_frac);
    j(&mut p.diastolic.amplitude);
    j(&mut p.diastolic.width_frac);
    j(&mut p.diastolic.position_frac);
    p.base_hr_bpm *= 1.0 + hr_factor * gain * rng.gen_range(-1.0..1.0);
    p.base_hr_bpm = p.base_hr_bpm.clamp(40.0, 200.0);
    // keep ordering valid after jitter
    let min_dia = p.systolic.position_frac + 0.05;
    if p.diastolic.position_frac < min_dia {
        p.diastolic.position_frac = min_dia;
    }
    if p.diastolic.position_frac >= 0.95 {
        p.diastolic.position_frac = 0.95;
    }
}

fn add_gaussian(samples: &mut [f64], fs: f64, center_s: f64, sigma_s: f64, amplitude: f64) {
    let lo = (((center_s - 5.0 * sigma_s) * fs).floor().max(0.0)) as usize;
    let hi = (((center_s + 5.0 * sigma_s) * fs).ceil() as usize).min(samples.len());
    for i in lo..hi {
        let dt = i as f64 / fs - center_s;
        samples[i] += amplitude * (-0.5 * (dt / sigma_s) * (dt / sigma_s)).exp();
    }
}

/// A rendered cohort: recordings plus per-recording ground-truth beats.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub dataset: Dataset,
    /// Ground-truth systolic sample indices, aligned with
    /// `dataset.recordings`.
    pub ground_truth: Vec<Vec<usize>>,
    pub seed: u64,
}

fn subject_seed(seed: u64, subject: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((subject as u64 + 1).wrapping_mul(0xd134_2543_de82_ef95))
        .wrapping_add(salt)
}

/// One relax recording per subject.
pub fn generate_single_session(
    n_subjects: usize,
    duration_s: f64,
    fs: f64,
    noise: NoiseSpec,
    seed: u64,
    cfg: &CohortConfig,
) -> Result<SynthDataset> {
    let profiles = sample_cohort(n_subjects, seed, cfg)?;
    let mut recordings = Vec::new();
    let mut truth = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        let (rec, gt) =
            render(p, duration_s, fs, Condition::Relax, noise, subject_seed(seed, i, 0))?;
        recordings.push(rec);
        truth.push(gt);
    }
    Ok(SynthDataset {
        dataset: Dataset::new("synth-single", recordings),
        ground_truth: truth,
        seed,
    })
}

/// Per subject: relax + post-exercise in session 1, and a drifted relax
/// recording in session 2.
pub fn generate_two_session(
    n_subjects: usize,
    duration_s: f64,
    fs: f64,
    noise: NoiseSpec,
    seed: u64,
    cfg: &CohortConfig,
) -> Result<SynthDataset> {
    let profiles = sample_cohort(n_subjects, seed, cfg)?;
    let mut recordings = Vec::new();
    let mut truth = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        for (salt, condition) in
            [(0, Condition::Relax), (1, Condition::Exercise), (2, Condition::TimeLapse)]
        {
            let (rec, gt) =
                render(p, duration_s, fs, condition, noise, subject_seed(seed, i, salt))?;
            recordings.push(rec);
            truth.push(gt);
        }
    }
    Ok(SynthDataset {
        dataset: Dataset::new("synth-two-session", recordings),
        ground_truth: truth,
        seed,
    })
}

/// Per subject: one recording per emotion index, same session.
pub fn generate_emotions(
    n_subjects: usize,
    n_emotions: u32,
    duration_s: f64,
    fs: f64,
    noise: NoiseSpec,
    seed: u64,
    cfg: &CohortConfig,
) -> Result<SynthDataset> {
    if n_emotions < 2 {
        return Err(Error::InvalidConfig("need at least 2 emotions".into()));
    }
    let profiles = sample_cohort(n_subjects, seed, cfg)?;
    let mut recordings = Vec::new();
    let mut truth = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        for k in 0..n_emotions {
            let (rec, gt) = render(
                p,
                duration_s,
                fs,
                Condition::Emotion(k),
                noise,
                subject_seed(seed, i, 100 + k as u64),
            )?;
            recordings.push(rec);
            truth.push(gt);
        }
    }
    Ok(SynthDataset {
        dataset: Dataset::new("synth-emotions", recordings),
        ground_truth: truth,
        seed,
    })
}
