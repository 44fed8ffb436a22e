//! Term-by-term view of the alignment change from two steps on one sample.

use batch_reuse::diagnostics::two_step_expansion_terms;
use batch_reuse::hermite::HermiteSeries;
use batch_reuse::linalg::dot;
use batch_reuse::network::ActivationSpec;
use batch_reuse::rng::{fill_normal, stream, unit_vector, Purpose};

fn main() {
    let d = 32;
    let act = ActivationSpec::polynomial(vec![0.0, 0.6, 0.3, 0.5]);
    let mut rng = stream(0, 0, Purpose::Diagnostics);
    let w = unit_vector(&mut rng, d);
    let theta = unit_vector(&mut rng, d);
    let mut x = vec![0.0; d];
    fill_normal(&mut rng, &mut x);
    let y = HermiteSeries::basis(3).eval(dot(&theta, &x));
    for scale in [1.0, 0.5, 0.25] {
        let eta = scale * 0.1 / d as f64;
        let t = two_step_expansion_terms(&act, &w, &theta, &x, y, eta);
        println!("eta {eta:.5}: csq {:.3e}, label-power terms {:?}", eta * t.csq, t.terms.iter().map(|v| format!("{:.3e}", eta * v)).collect::<Vec<_>>());
        println!(
            "  unprojected: realized {:.6e}, series {:.6e}; projected residual {:.3e}",
            t.realized_unprojected,
            t.reconstruction(eta),
            t.realized_projected - t.projected_reconstruction(eta)
        );
    }
}
