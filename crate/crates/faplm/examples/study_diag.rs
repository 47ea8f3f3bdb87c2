//! Diagnostic dump for the estimation studies: per-method metric means
//! plus the distribution of cross-validated penalties.
//!
//! Usage: `cargo run --release --example study_diag [reps] [link]`

use faplm::simulation::{run_estimation_study, LinkKind, MethodKind, SimulationConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(50);
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
        let report = run_estimation_study(&cfg).expect("study failed");
        let mut lambdas: Vec<f64> = report.replications.iter().map(|r| r.lambda_used).collect();
        lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = lambdas[lambdas.len() / 2];
        let sigma2_mean = report.replications.iter().map(|r| r.sigma_hat2).sum::<f64>()
            / report.replications.len() as f64;
        println!(
            "{:?} {:?}: l1={:.3} rmse={:.4} l2={:.3} med_lambda={:.4} mean_sigma2={:.3}",
            method, link, report.mean_l1, report.mean_rmse, report.mean_l2, med, sigma2_mean
        );
    }
}
