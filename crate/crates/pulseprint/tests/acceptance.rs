//! Acceptance suite: one test per release criterion, each printing a
//! PASS/SKIP line with its measured values. Run with
//! `cargo test -p pulseprint --test acceptance -- --nocapture` to see them.

mod support;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pulseprint::config::{Method, NTest, RunConfig};
use pulseprint::eval::{self, PartitionId, ScoreSet};
use pulseprint::features::{CwtPlan, ScaleGrid};
use pulseprint::matching;
use pulseprint::pipeline;
use pulseprint::preprocess;
use pulseprint::recording::State;
use pulseprint::subspace::{self, Projection, TrainingSet};
use pulseprint::synthgen::{self, CohortConfig};
use pulseprint::{io, Dataset};

fn base_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.protocol.train_seconds = 45.0;
    cfg.protocol.seed = 1234;
    cfg
}

/// Criterion 1: the fast wavelet transform matches the direct time-domain
/// discretization within 1e-6 relative Frobenius error on 50 random
/// segments of length <= 512, in under 10 s total.
#[test]
fn criterion_01_cwt_matches_direct_discretization() {
    let start = Instant::now();
    let cfg = base_config();
    let grid = ScaleGrid::from_band(&cfg.features, 300.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n = rng.gen_range(16..=512);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = CwtPlan::new(&grid, n).unwrap().transform(&x).unwrap();
        let direct = support::cwt_direct(&x, &grid);
        let err = support::rel_frobenius_error(&fast, &direct);
        worst = worst.max(err);
        assert!(err < 1e-6, "relative Frobenius error {err} at n = {n}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "oracle comparison took {elapsed:.1} s");
    println!("[criterion 01] PASS: worst relative error {worst:.2e}, {elapsed:.2} s for 50 segments");
}

/// Criterion 2: classical LDA matches a brute-force generalized eigensolve
/// on random problems with L <= 8, and direct LDA spans the same subspace
/// when the within-class scatter is well-conditioned.
#[test]
fn criterion_02_lda_matches_generalized_eigensolve() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 20 {
        attempts += 1;
        assert!(attempts < 500, "could not draw enough well-separated problems");
        let l = rng.gen_range(2..=8usize);
        let k = rng.gen_range(2..=3.min(l));
        let m = k - 1;

        // isotropic within-class designs rotated at random: S_w stays exactly
        // isotropic, so LDA and DLDA legitimately share a span
        let sigma = rng.gen_range(0.2..0.8);
        let rot = support::random_rotation(l, &mut rng);
        let mut classes = Vec::new();
        for c in 0..k {
            let center: Vec<f64> = (0..l).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let samples: Vec<Vec<f64>> = support::isotropic_class(&center, sigma)
                .into_iter()
                .map(|v| {
                    let x = nalgebra::DVector::from_vec(v);
                    (&rot * x).iter().cloned().collect()
                })
                .collect();
            classes.push((format!("c{c}"), samples));
        }
        let ts = TrainingSet::new(classes).unwrap();
        let sp = subspace::scatter_matrices(&ts);
        let (oracle_vals, oracle_vecs) = support::generalized_eig_oracle(&sp.s_b, &sp.s_w);
        // skip degenerate spectra where the subspace itself is ill-defined
        if oracle_vals[m - 1] < 0.05 * oracle_vals[0].max(1e-12) {
            continue;
        }
        checked += 1;

        let lda = subspace::fit_lda(&ts, m).unwrap();
        let w = match &lda.projection {
            Projection::Linear { weights } => weights.clone(),
            _ => unreachable!(),
        };
        // eigenvalues via the generalized Rayleigh quotient of each direction
        for j in 0..m {
            let col = w.column(j).into_owned();
            let quotient =
                (col.transpose() * &sp.s_b * &col)[(0, 0)] / (col.transpose() * &sp.s_w * &col)[(0, 0)];
            let expected = oracle_vals[j];
            assert!(
                (quotient - expected).abs() <= 1e-8 * expected.max(1.0),
                "eigenvalue {j}: {quotient} vs oracle {expected}"
            );
        }
        let oracle_span = oracle_vecs.columns(0, m).into_owned();
        let angle = support::max_principal_angle(&w, &oracle_span);
        assert!(angle < 1e-6, "LDA principal angle {angle}");

        let dlda = subspace::fit_dlda(&ts, m).unwrap();
        let wd = match &dlda.projection {
            Projection::Linear { weights } => weights.clone(),
            _ => unreachable!(),
        };
        let angle = support::max_principal_angle(&w, &wd);
        assert!(angle < 1e-6, "DLDA vs LDA principal angle {angle}");
    }
    println!("[criterion 02] PASS: {checked} random problems matched the brute-force eigensolve");
}

/// Criterion 3: the interpolated equal error rate matches the exhaustive
/// threshold sweep within 1e-9 on 1000 random score sets of size <= 200.
#[test]
fn criterion_03_eer_matches_exhaustive_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst = 0.0_f64;
    for case in 0..1000 {
        let ng = rng.gen_range(1..=200);
        let ni = rng.gen_range(1..=200);
        // mix continuous scores with quantized ones so ties are common
        let quantize = case % 3 == 0;
        let mut draw = |rng: &mut ChaCha8Rng| {
            let v: f64 = rng.gen_range(0.0..2.0);
            if quantize {
                (v * 8.0).round() / 8.0
            } else {
                v
            }
        };
        let genuine: Vec<f64> = (0..ng).map(|_| draw(&mut rng)).collect();
        let imposter: Vec<f64> = (0..ni).map(|_| draw(&mut rng)).collect();
        let scores = ScoreSet::new(genuine, imposter);
        let fast = eval::eer(&scores);
        let oracle = support::eer_exhaustive(&scores);
        let err = (fast - oracle).abs();
        worst = worst.max(err);
        assert!(err < 1e-9, "case {case}: fast {fast} vs oracle {oracle}");
    }
    println!("[criterion 03] PASS: 1000 score sets, worst deviation {worst:.2e}");
}

/// Criterion 4: a noiseless 10-subject cohort with 45 s training and
/// nTest = 2 verifies with an equal error rate of exactly zero.
#[test]
fn criterion_04_noiseless_smoke_eer_zero() {
    let mut cfg = base_config();
    cfg.protocol.ntest = vec![NTest::Count(2)];
    cfg.protocol.iterations = 5;
    // A cleanly separated cohort: distinct resting rates, mild beat-to-beat
    // variability, diastolic bumps below the detection threshold.
    let cohort = CohortConfig {
        min_hr_gap_bpm: 3.0,
        hr_std_bpm: (0.05, 0.2),
        diastolic_amplitude: (0.25, 0.45),
        ..CohortConfig::default()
    };
    let synth = synthgen::generate_single_session(10, 90.0, 100.0, 0.0, 9, &cohort).unwrap();
    let report = eval::protocol_single_session(&synth.dataset, &cfg).unwrap();
    let cell = report.cell("single_session", NTest::Count(2)).unwrap();
    assert_eq!(cell.mean_eer, 0.0, "per-iteration EERs: {:?}", cell.per_iteration);
    assert!(cell.per_iteration.iter().all(|&e| e == 0.0));
    println!("[criterion 04] PASS: noiseless 10-subject cohort separates exactly (EER = 0)");
}

/// Criterion 5: on a noisy 42-subject cohort with 50 iterations, using all
/// test segments is at least as accurate as using two, the all-segments cell
/// has zero spread, and the whole run stays far under the time budget.
#[test]
fn criterion_05_realism_trend_and_budget() {
    let start = Instant::now();
    let mut cfg = base_config();
    cfg.protocol.ntest = vec![NTest::Count(2), NTest::All];
    cfg.protocol.iterations = 50;
    let synth =
        synthgen::generate_single_session(42, 150.0, 100.0, 0.08, 42, &CohortConfig::default())
            .unwrap();
    let report = eval::protocol_single_session(&synth.dataset, &cfg).unwrap();
    let two = report.cell("single_session", NTest::Count(2)).unwrap();
    let all = report.cell("single_session", NTest::All).unwrap();
    assert!(
        all.mean_eer <= two.mean_eer,
        "nTest=All EER {} should not exceed nTest=2 EER {}",
        all.mean_eer,
        two.mean_eer
    );
    assert_eq!(all.std_eer, 0.0, "single all-segments pass has no spread");
    assert_eq!(all.iterations, 1);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "run took {elapsed:.0} s, budget is 600 s");
    println!(
        "[criterion 05] PASS: EER nTest=2 {:.3}% >= nTest=All {:.3}%, std(All) = 0, {elapsed:.1} s",
        100.0 * two.mean_eer,
        100.0 * all.mean_eer
    );
}

/// Criterion 6: with state perturbations, the main method is at least as
/// accurate as the open-set, PCA, and autocorrelation comparators in at
/// least 8 of 10 seeded cohorts.
#[test]
fn criterion_06_method_ordering() {
    let mut cfg = base_config();
    cfg.protocol.ntest = vec![NTest::All];
    let train: PartitionId = "s1:relax".parse().unwrap();
    let tests: Vec<PartitionId> = vec!["s1:exercise".parse().unwrap()];
    let comparators = [Method::Openset, Method::CwtPca, Method::AcLda];

    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..10u64 {
        let synth = synthgen::generate_two_session(
            12,
            150.0,
            100.0,
            0.08,
            100 + seed,
            &CohortConfig::default(),
        )
        .unwrap();
        let eer_for = |method: Method| -> f64 {
            let cfg = cfg.clone().with_method(method);
            let report =
                eval::protocol_cross_partition(&synth.dataset, &cfg, &train, &tests).unwrap();
            report.cells[0].mean_eer
        };
        let dlda = eer_for(Method::CwtDlda);
        let others: Vec<(Method, f64)> =
            comparators.iter().map(|&m| (m, eer_for(m))).collect();
        let won = others.iter().all(|(_, e)| dlda <= *e);
        if won {
            wins += 1;
        }
        rows.push(format!(
            "seed {seed}: cwt-dlda {:.2}% vs {} -> {}",
            100.0 * dlda,
            others
                .iter()
                .map(|(m, e)| format!("{m} {:.2}%", 100.0 * e))
                .collect::<Vec<_>>()
                .join(", "),
            if won { "win" } else { "loss" }
        ));
    }
    for r in &rows {
        println!("  {r}");
    }
    assert!(wins >= 8, "cwt-dlda won only {wins}/10 seeds");
    println!("[criterion 06] PASS: cwt-dlda at or below every comparator in {wins}/10 seeds");
}

/// Criterion 7: verifying across exercise or across a session degrades, or
/// at least never improves, on the single-session cell.
#[test]
fn criterion_07_cross_state_degradation() {
    let mut cfg = base_config();
    cfg.protocol.ntest = vec![NTest::All];
    let synth =
        synthgen::generate_two_session(12, 150.0, 100.0, 0.08, 7, &CohortConfig::default())
            .unwrap();

    let relax_only = Dataset::new(
        "synth-single",
        synth
            .dataset
            .recordings
            .iter()
            .filter(|r| r.session_id == "s1" && r.state == State::Relax)
            .cloned()
            .collect(),
    );
    let single = eval::protocol_single_session(&relax_only, &cfg).unwrap();
    let single_eer = single.cell("single_session", NTest::All).unwrap().mean_eer;

    let train: PartitionId = "s1:relax".parse().unwrap();
    let tests: Vec<PartitionId> =
        vec!["s1:exercise".parse().unwrap(), "s2:relax".parse().unwrap()];
    let cross = eval::protocol_cross_partition(&synth.dataset, &cfg, &train, &tests).unwrap();
    let exercise_eer = cross.cell("cross_s1_exercise", NTest::All).unwrap().mean_eer;
    let session_eer = cross.cell("cross_s2_relax", NTest::All).unwrap().mean_eer;

    assert!(
        exercise_eer >= single_eer,
        "cross-exercise {exercise_eer} below single-session {single_eer}"
    );
    assert!(
        session_eer >= single_eer,
        "cross-session {session_eer} below single-session {single_eer}"
    );
    println!(
        "[criterion 07] PASS: single {:.2}% <= cross-exercise {:.2}% and cross-session {:.2}%",
        100.0 * single_eer,
        100.0 * exercise_eer,
        100.0 * session_eer
    );
}

/// Criterion 8 (dataset-conditional): with the public capnography benchmark
/// present, the default method reaches EER <= 2% with 45 s training and all
/// test segments. Skipped when the dataset is not installed.
#[test]
fn criterion_08_real_dataset_when_present() {
    let manifest = std::env::var("PULSEPRINT_CAPNOBASE_MANIFEST")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|_| std::path::PathBuf::from("data/capnobase/manifest.csv"));
    if !manifest.exists() {
        println!(
            "[criterion 08] SKIP: dataset manifest {} not present",
            manifest.display()
        );
        return;
    }
    let mut cfg = base_config();
    cfg.protocol.ntest = vec![NTest::All];
    cfg.features.scale_policy = pulseprint::config::ScalePolicy::ByIndex { k: 3 };
    let dataset = io::load_dataset(&manifest).unwrap();
    let report = eval::protocol_single_session(&dataset, &cfg).unwrap();
    let cell = report.cell("single_session", NTest::All).unwrap();
    assert!(
        cell.mean_eer <= 0.02,
        "EER {:.3}% above the 2% gate",
        100.0 * cell.mean_eer
    );
    println!("[criterion 08] PASS: EER {:.3}% on the real dataset", 100.0 * cell.mean_eer);
}

/// Criterion 9: the designed band-pass attenuates 0.1 Hz by at least 40 dB
/// and passes 2 Hz within 3 dB, checked against the analytic transfer
/// function.
#[test]
fn criterion_09_filter_meets_band_spec() {
    let sos = preprocess::design_bandpass(0.5, 5.0, 300.0, 38).unwrap();
    let stop = sos.magnitude_at(0.1);
    let pass = sos.magnitude_at(2.0);
    let stop_db = -20.0 * stop.log10();
    assert!(stop_db >= 40.0, "stopband attenuation only {stop_db:.1} dB");
    assert!(pass >= 10f64.powf(-3.0 / 20.0) && pass <= 10f64.powf(3.0 / 20.0));
    println!(
        "[criterion 09] PASS: 0.1 Hz attenuated {stop_db:.0} dB, 2 Hz gain {:.2} dB",
        20.0 * pass.log10()
    );
}

/// Criterion 10: enrollment runs under 2 s per subject (60 s at 300 Hz) and
/// a two-segment verification claim under 200 ms, single-threaded.
#[test]
fn criterion_10_performance_budget() {
    let mut cfg = base_config();
    cfg.protocol.train_seconds = 60.0;
    let n_subjects = 10;
    let synth =
        synthgen::generate_single_session(n_subjects, 70.0, 300.0, 0.02, 5, &CohortConfig::default())
            .unwrap();

    let start = Instant::now();
    let bundle = io::enroll(&synth.dataset, &cfg).unwrap();
    let per_subject = start.elapsed().as_secs_f64() / n_subjects as f64;
    assert!(per_subject < 2.0, "enrollment took {per_subject:.2} s per subject");

    // a fresh 20 s probe recording, claimed as its own subject
    let profile = synthgen::sample_cohort(n_subjects, 5, &CohortConfig::default())
        .unwrap()
        .remove(0);
    let (probe, _) =
        synthgen::render(&profile, 20.0, 300.0, synthgen::Condition::Relax, 0.02, 999).unwrap();
    let start = Instant::now();
    let rows = pipeline::extract_rows(&probe, &cfg).unwrap();
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .take(2)
        .map(|r| pulseprint::features::normalize_length(r, bundle.model.input_dim))
        .collect();
    let score = matching::claim_score(
        &bundle.model,
        &profile.subject_id,
        &rows,
        pipeline::distance_for(cfg.method()),
        &cfg.matching,
    )
    .unwrap();
    let verify_s = start.elapsed().as_secs_f64();
    assert!(verify_s < 0.2, "verification took {verify_s:.3} s");
    assert!(score.value.is_finite());
    println!(
        "[criterion 10] PASS: enroll {:.0} ms/subject, verify {:.0} ms",
        1e3 * per_subject,
        1e3 * verify_s
    );
}

/// Criterion 11: two full synth -> enroll -> evaluate runs with the same
/// configuration produce byte-identical results and ROC CSVs.
#[test]
fn criterion_11_end_to_end_determinism() {
    let mut cfg = base_config();
    cfg.protocol.ntest = vec![NTest::Count(2), NTest::All];
    cfg.protocol.iterations = 5;

    let run = |dir: &std::path::Path| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let synth =
            synthgen::generate_single_session(6, 90.0, 100.0, 0.05, 77, &CohortConfig::default())
                .unwrap();
        let manifest = io::write_dataset(dir, &synth).unwrap();
        let dataset = io::load_dataset(&manifest).unwrap();
        let bundle = io::enroll(&dataset, &cfg).unwrap();
        let model_path = dir.join("model.json");
        io::save_model(&model_path, &bundle).unwrap();
        let report = eval::protocol_single_session(&dataset, &cfg).unwrap();
        let report_dir = dir.join("report");
        io::write_report(&report_dir, &report, false).unwrap();
        (
            std::fs::read(report_dir.join("results.csv")).unwrap(),
            std::fs::read(report_dir.join("roc_cwt-dlda_single_session_All.csv")).unwrap(),
            std::fs::read(model_path).unwrap(),
        )
    };

    // distinct parents, equal leaf names: the dataset name is part of the
    // output, the storage location is not
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let (results_a, roc_a, model_a) = run(&dir_a.path().join("cohort"));
    let (results_b, roc_b, model_b) = run(&dir_b.path().join("cohort"));
    assert_eq!(results_a, results_b, "results CSVs differ between runs");
    assert_eq!(roc_a, roc_b, "ROC CSVs differ between runs");
    assert_eq!(model_a, model_b, "model bundles differ between runs");
    println!("[criterion 11] PASS: results, ROC, and model bytes identical across runs");
}

/// Smoke invariant from the generator: the full pipeline on a small
/// noiseless cohort separates perfectly, and rendered spectra concentrate
/// power around the pulse rate (which justifies the 1-2 Hz scale policy).
#[test]
fn synthetic_generator_supports_the_scale_policy() {
    let profiles = synthgen::sample_cohort(3, 9, &CohortConfig::default()).unwrap();
    for p in &profiles {
        let (rec, _) =
            synthgen::render(p, 30.0, 100.0, synthgen::Condition::Relax, 0.0, 3).unwrap();
        let n = rec.samples.len();
        let mean = rec.samples.iter().sum::<f64>() / n as f64;
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut buf: Vec<num_complex::Complex64> = rec
            .samples
            .iter()
            .map(|&v| num_complex::Complex64::new(v - mean, 0.0))
            .collect();
        fft.process(&mut buf);
        let f0 = p.base_hr_bpm / 60.0;
        let hz = |k: usize| k as f64 * 100.0 / n as f64;
        let mut band = 0.0;
        let mut total = 0.0;
        for k in 1..n / 2 {
            let power = buf[k].norm_sqr();
            total += power;
            if hz(k) >= 0.8 * f0 && hz(k) <= 2.2 * f0 {
                band += power;
            }
        }
        assert!(
            band / total > 0.5,
            "only {:.0}% of power near the pulse rate for {}",
            100.0 * band / total,
            p.subject_id
        );
    }
}
