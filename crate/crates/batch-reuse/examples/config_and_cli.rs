//! Layered configuration and the command-line entry point.

use batch_reuse::config::{apply_env, Config};

fn main() {
    let mut raw = Config::parse_str("[model]\ndim = 64\n[trainer]\nmode = \"online\"\n").unwrap();
    apply_env(&mut raw, [("BATCHREUSE_NETWORK__WIDTH".to_string(), "32".to_string())]).unwrap();
    let cfg = Config::from_value(raw).unwrap().resolved().unwrap();
    println!(
        "dim {}, width {}, mode {:?}, c_a {:.4}, c_b {:.3}, xi_weak {:.4}",
        cfg.model.dim,
        cfg.network.width,
        cfg.trainer.mode,
        cfg.network.c_a.unwrap(),
        cfg.trainer.c_b.unwrap(),
        cfg.trainer.xi_weak.unwrap()
    );

    let out = std::env::temp_dir().join("batch-reuse-cli-example");
    let code = batch_reuse::cli::run(["batch-reuse", "exponent", "--power", "0,0,1", "--out", out.to_str().unwrap()]);
    println!("exit code {code}");
}
