//! Small estimation-study driver: prints the ℓ1 error and ĝ RMSE of the
//! three methods on the simulated designs.
//!
//! Usage: `cargo run --release --example table_study [reps] [link]`

use faplm::simulation::{run_estimation_study, LinkKind, MethodKind, SimulationConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let link = match args.get(2).map(|s| s.as_str()) {
        Some("sine") => LinkKind::Sine,
        _ => LinkKind::Linear,
    };

    for method in [MethodKind::Faplm, MethodKind::Plm, MethodKind::Falm] {
        let cfg = SimulationConfig {
            link,
            n_reps: reps,
            method,
            ..SimulationConfig::table_defaults()
        };
        let start = std::time::Instant::now();
        let report = run_estimation_study(&cfg).expect("study failed");
        println!(
            "{:?} {:?}: l1 = {:.3} (se {:.3}), rmse = {:.3} (se {:.3}), l2 = {:.3}  [{:.1?}]",
            method,
            link,
            report.mean_l1,
            report.se_l1,
            report.mean_rmse,
            report.se_rmse,
            report.mean_l2,
            start.elapsed()
        );
    }
}
