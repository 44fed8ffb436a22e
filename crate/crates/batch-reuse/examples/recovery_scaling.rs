//! Median weak-recovery time against dimension, with a log-log fit.

use std::collections::BTreeMap;

use batch_reuse::config::Config;
use batch_reuse::experiments::{fit_scaling, recovery_step, run_single};

fn main() {
    let mut taus = BTreeMap::new();
    for d in [64, 128, 256] {
        let text = format!(
            "model.dim = {d}\nmodel.link_hermite = [0, 0, 1]\nnetwork.width = 64\n\
             network.family = {{\"family\":\"hermite_rademacher\",\"degree\":2}}\n\
             trainer.sample_budget = {}\ntrainer.t2 = 0\ntrainer.eta_weak = 1\ntrainer.xi_weak = 0.125\ntrainer.thresholds = [0.4]",
            16 * d
        );
        let cfg = Config::from_value(Config::parse_str(&text).unwrap()).unwrap().resolved().unwrap();
        let mut t: Vec<f64> = (0..5)
            .map(|s| recovery_step(&run_single(&cfg, s).unwrap().record, 0.4).map_or(f64::INFINITY, |v| v as f64))
            .collect();
        t.sort_by(f64::total_cmp);
        println!("d {d}: recovery pairs {t:?}");
        taus.insert(d, t[t.len() / 2]);
    }
    match fit_scaling(&taus) {
        Ok(f) => println!("slope {:.2}, r2 {:.3}", f.slope, f.r2),
        Err(e) => println!("no fit: {e}"),
    }
}
