//! Paired reuse against online SGD and full-batch GD on the same sample budget.

use batch_reuse::config::Config;
use batch_reuse::experiments::run_single;

fn main() {
    let base = r#"
        model.dim = 64
        model.link_hermite = [0, 0, 0, 1]
        network.width = 128
        network.family = {"family":"general_link","info_exponent":3,"reduced_exponent":1,"power":3,"small":0.1,"relu_mix":0.042}
        trainer.sample_budget = 1024
        trainer.t2 = 0
    "#;
    let modes = [
        ("paired", "trainer.mode = \"paired\"\ntrainer.eta_weak = 0.5\ntrainer.xi_weak = 0.5\ntrainer.weak_fraction = 0.5\ntrainer.eta_strong = 0.15"),
        ("online", "trainer.mode = \"online\"\ntrainer.eta_weak = 0.5\ntrainer.batch_size = 8"),
        ("full-batch", "trainer.mode = \"full-batch\"\ntrainer.eta_weak = 32\ntrainer.steps = 64"),
    ];
    for (name, extra) in modes {
        let cfg = Config::from_value(Config::parse_str(&format!("{base}\n{extra}")).unwrap()).unwrap().resolved().unwrap();
        let tops: Vec<f64> =
            (0..3).map(|s| run_single(&cfg, s).unwrap().record.checkpoints.last().unwrap().top_decile).collect();
        println!("{name:<10} top-decile |overlap| per seed {tops:.3?}");
    }
}
