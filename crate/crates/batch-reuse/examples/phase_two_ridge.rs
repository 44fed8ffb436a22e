//! Second-layer ridge fit on ReLU features with the first layer aligned to the target.

use batch_reuse::experiments::test_error;
use batch_reuse::hermite::HermiteSeries;
use batch_reuse::model::{make_direction, DataConfig, DirectionMode, LinkSpec};
use batch_reuse::network::{init_network, ActivationSpec};
use batch_reuse::trainer::{phase2_ridge, Problem};

fn main() {
    let (d, width) = (32, 64);
    let theta = make_direction(d, DirectionMode::Axis, 0);
    let mut state = init_network(width, d, 1.0, 0).unwrap();
    for j in 0..width {
        state.row_mut(j).copy_from_slice(&theta);
    }
    state.set_activations(vec![ActivationSpec::new(HermiteSeries::zero(), 1.0); width]).unwrap();
    let c_b = 4.0 * (d as f64).ln().sqrt();
    for k in 1..=4 {
        let link = LinkSpec::hermite(k);
        let problem = Problem { link: &link, theta: &theta, data: DataConfig::new(d, 0.0, 1).unwrap() };
        for lambda in [1e-8, 1e-6, 1e-4] {
            let mut s = state.clone();
            let fit = phase2_ridge(&mut s, &problem, 20_000, lambda, c_b, 1).unwrap();
            let err = test_error(&s, &link, &theta, 20_000, 2).unwrap();
            println!("He_{k} lambda {lambda:e}: train {:.4} test {:.4} stationarity {:.1e}", fit.train_mse, err.mean, fit.stationarity);
        }
    }
}
