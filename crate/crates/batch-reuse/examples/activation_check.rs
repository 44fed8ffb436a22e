//! Draws activations from each family and checks the recovery conditions for He_3.

use batch_reuse::exponents::check_activation_conditions;
use batch_reuse::model::LinkSpec;
use batch_reuse::network::{sample_activation, ActivationFamily};
use batch_reuse::rng::{stream_at, Purpose};

fn main() {
    let link = LinkSpec::hermite(3);
    let cert = link.reduction().unwrap().clone();
    println!("He_3 reduces to exponent {} with label power {}", cert.achieved_ie, cert.power);
    let families = [
        ActivationFamily::HermiteRademacher { degree: 3, magnitudes: None },
        ActivationFamily::DiscreteMixture { small: 0.05, power_bound: 3 },
        ActivationFamily::GeneralLink { info_exponent: 3, reduced_exponent: 1, power: 3, small: 0.1, relu_mix: 0.0 },
    ];
    for family in &families {
        let draws = 500;
        let passed = (0..draws)
            .filter(|&i| {
                let act = sample_activation(3, family, &mut stream_at(0, 0, Purpose::Activation, i)).unwrap();
                check_activation_conditions(&act, &link, &cert).unwrap().all_pass()
            })
            .count();
        println!("{family:?}: {passed}/{draws} meet every condition");
    }
}
