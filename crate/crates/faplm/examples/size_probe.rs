//! Empirical size / power probe for the debiased max test.
//!
//! Usage: `cargo run --release --example size_probe [reps] [boot] [omega]`

use faplm::rng::RngSpec;
use faplm::simulation::{run_power_study, LinkKind, SimulationConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let boot: usize = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(200);
    let omega: f64 = args.get(3).and_then(|a| a.parse().ok()).unwrap_or(0.0);

    let cfg = SimulationConfig {
        link: LinkKind::Linear,
        n_reps: reps,
        rng: RngSpec::new(77, 0),
        ..SimulationConfig::table_defaults()
    };
    let grid = if omega == 0.0 { vec![0.0] } else { vec![0.0, omega] };
    let start = std::time::Instant::now();
    let report = run_power_study(&cfg, &grid, 0.05, boot).expect("power study failed");
    for row in &report.rows {
        println!(
            "omega={} rate={:.3} ({} reps, {} boot)",
            row.omega, row.rejection_rate, row.n_reps, report.n_boot
        );
    }
    let med_t: Vec<f64> = {
        let mut t: Vec<f64> = report
            .replications
            .iter()
            .filter(|r| r.omega == 0.0)
            .map(|r| r.t_n)
            .collect();
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vec![t[t.len() / 2]]
    };
    let med_c: Vec<f64> = {
        let mut c: Vec<f64> = report
            .replications
            .iter()
            .filter(|r| r.omega == 0.0)
            .map(|r| r.c_hat)
            .collect();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vec![c[c.len() / 2]]
    };
    println!(
        "null median T_n = {:.3}, median c_hat = {:.3}, elapsed {:.1?}",
        med_t[0],
        med_c[0],
        start.elapsed()
    );
}
