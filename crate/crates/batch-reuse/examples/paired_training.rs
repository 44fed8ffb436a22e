//! One paired-reuse run on He_3 with its overlap trajectory and Phase II fit.

use batch_reuse::config::Config;
use batch_reuse::experiments::run_single;

fn main() {
    let text = r#"
        model.dim = 64
        model.link_hermite = [0, 0, 0, 1]
        network.width = 128
        network.family = {"family":"general_link","info_exponent":3,"reduced_exponent":1,"power":3,"small":0.1,"relu_mix":0.042}
        trainer.sample_budget = 2048
        trainer.eta_weak = 0.5
        trainer.xi_weak = 0.5
        trainer.weak_fraction = 0.5
        trainer.eta_strong = 0.15
        trainer.t2 = 10000
        trainer.lambda = 1e-8
        trainer.thresholds = [0.3, 0.5]
    "#;
    let cfg = Config::from_value(Config::parse_str(text).unwrap()).unwrap().resolved().unwrap();
    let out = run_single(&cfg, 0).unwrap();
    let rec = &out.record;
    let every = (rec.checkpoints.len() / 10).max(1);
    for c in rec.checkpoints.iter().step_by(every) {
        println!("pair {:>5}  samples {:>5}  top decile {:.3}  mean {:.3}", c.step, c.samples, c.top_decile, c.mean_abs);
    }
    for r in &rec.recovery {
        println!("top decile first above {} at pair {:?}", r.threshold, r.step);
    }
    if let Some(t) = &rec.test_error {
        println!("test error after ridge {:.3} +- {:.3}", t.mean, t.std_error);
    }
}
