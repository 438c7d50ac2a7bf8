use pulseprint::config::{Method, NTest, RunConfig};
use pulseprint::eval::{self, PartitionId};
use pulseprint::synthgen::{self, CohortConfig, NoiseSpec};

fn run_ordering(label: &str, cohort: &CohortConfig, test: &str, noise: NoiseSpec, quiet: bool) -> usize {
    let mut cfg = RunConfig::default();
    cfg.protocol.train_seconds = 45.0;
    cfg.protocol.seed = 1234;
    cfg.protocol.ntest = vec![NTest::All];
    let train: PartitionId = "s1:relax".parse().unwrap();
    let tests: Vec<PartitionId> = vec![test.parse().unwrap()];
    let mut wins = 0;
    for seed in 0..10u64 {
        let synth = synthgen::generate_two_session(12, 150.0, 100.0, noise, 100 + seed, cohort).unwrap();
        let mut line = format!("  seed {seed}:");
        let mut eers = Vec::new();
        for method in [Method::CwtDlda, Method::Openset, Method::CwtPca, Method::AcLda] {
            let c = cfg.clone().with_method(method);
            match eval::protocol_cross_partition(&synth.dataset, &c, &train, &tests) {
                Ok(report) => {
                    let e = report.cells[0].mean_eer;
                    eers.push(e);
                    line.push_str(&format!(" {}={:.2}%", method, 100.0 * e));
                }
                Err(e) => line.push_str(&format!(" {}=ERR({e})", method)),
            }
        }
        if eers.len() == 4 && eers[1..].iter().all(|&e| eers[0] <= e) { wins += 1; line.push_str("  WIN"); }
        if !quiet { println!("{line}"); }
    }
    println!("{label}: wins {wins}/10");
    wins
}

fn main() {
    let mild_drift = CohortConfig {
        hr_std_bpm: (0.2, 0.6),
        ..CohortConfig::default()
    };
    run_ordering("drift, bursts 3/min", &mild_drift, "s2:relax", NoiseSpec { white: 0.08, bursts_per_min: 3.0 }, false);
    let mild_ex = CohortConfig {
        exercise_hr_gain: (1.01, 1.03),
        exercise_compression: (0.02, 0.06),
        hr_std_bpm: (0.2, 0.6),
        ..CohortConfig::default()
    };
    run_ordering("exercise, bursts 3/min", &mild_ex, "s1:exercise", NoiseSpec { white: 0.08, bursts_per_min: 3.0 }, false);
}
