//! Small dimension-by-budget sweep written as CSV, SVG and a manifest.

use batch_reuse::config::Config;
use batch_reuse::experiments::{run_sweep, write_sweep, Manifest, SweepGrid};
use batch_reuse::io::write_json;

fn main() {
    let text = "model.dim = 32\nnetwork.width = 32\ntrainer.t2 = 2000\ntrainer.lambda = 1e-6\n\
                experiments.dims = [16, 32]\nexperiments.budgets = [4, 16]\nexperiments.seeds = 2\n";
    let cfg = Config::from_value(Config::parse_str(text).unwrap()).unwrap();
    let grid = SweepGrid::from_config(&cfg);
    let outcome = run_sweep(&grid, 2).unwrap();
    for row in &outcome.heatmap {
        println!("d {:>3} n {:>4} {:<11} {:.3} +- {:.3}", row.d, row.n, row.stat, row.mean, row.std);
    }
    let out = std::env::temp_dir().join("batch-reuse-sweep-example");
    std::fs::create_dir_all(&out).unwrap();
    let mut files = write_sweep(&out, &outcome, true).unwrap();
    files.push("manifest.json".into());
    let seeds = (0..grid.seeds).map(|r| grid.seed(r)).collect();
    write_json(&out.join("manifest.json"), &Manifest::new("sweep", &cfg, seeds, files)).unwrap();
    println!("wrote {}", out.display());
}
