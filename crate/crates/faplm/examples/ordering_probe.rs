//! Paired comparison of FAPLM vs PLM RMSE on the sine design across
//! seeds and penalty rules.
//!
//! Usage: `cargo run --release --example ordering_probe [reps]`

use faplm::regression::{FitConfig, LambdaRule};
use faplm::rng::RngSpec;
use faplm::simulation::{run_estimation_study, LinkKind, MethodKind, SimulationConfig};

fn paired(reps: usize, seed: u64, fit: FitConfig, label: &str) {
    let base = SimulationConfig {
        link: LinkKind::Sine,
        n_reps: reps,
        rng: RngSpec::new(seed, 0),
        fit,
        ..SimulationConfig::table_defaults()
    };
    let fa = run_estimation_study(&SimulationConfig { method: MethodKind::Faplm, ..base.clone() })
        .unwrap();
    let plm =
        run_estimation_study(&SimulationConfig { method: MethodKind::Plm, ..base.clone() }).unwrap();
    let diffs: Vec<f64> = fa
        .g_rmse
        .iter()
        .zip(plm.g_rmse.iter())
        .map(|(a, b)| a - b)
        .collect();
    let mean = diffs.iter().sum::<f64>() / reps as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    println!(
        "{label} seed={seed}: rmse FA={:.4} PLM={:.4} paired diff={:+.5} (se {:.5})  l1 FA={:.3} PLM={:.3}",
        fa.mean_rmse, plm.mean_rmse, mean, se, fa.mean_l1, plm.mean_l1
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let anchor = faplm::regression::lambda_anchor(200, 200);

    for seed in [20240u64, 1, 2] {
        paired(reps, seed, FitConfig::default(), "cv-min");
    }
    for mult in [0.5, 1.0, 2.0] {
        paired(
            reps,
            20240,
            FitConfig::with_fixed_lambda(anchor * mult),
            &format!("fixed {mult}x anchor"),
        );
    }
}
