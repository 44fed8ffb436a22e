//! Information exponents and label-power reductions.

use batch_reuse::exponents::{generative_exponent_upper, information_exponent, monomial_reduction, ReductionMode};
use batch_reuse::hermite::HermiteSeries;

fn main() {
    for k in 1..=6 {
        let he = HermiteSeries::basis(k);
        let (ge, power) = generative_exponent_upper(&he, 12).unwrap();
        println!("He_{k}: IE {}, best power {power} reaches exponent {ge}", information_exponent(&he).unwrap());
    }

    // A mixed link: even part dominates, a small odd part survives.
    let link = HermiteSeries::new(vec![0.0, 0.0, 0.0, 0.5, 0.85]).normalized();
    for mode in [ReductionMode::EvenTarget2, ReductionMode::OddTarget1] {
        match monomial_reduction(&link, mode, 12) {
            Ok(c) => println!("{mode:?}: power {} gives exponent {} (coefficient {:.6})", c.power, c.achieved_ie, c.coefficient),
            Err(e) => println!("{mode:?}: {e}"),
        }
    }
}
