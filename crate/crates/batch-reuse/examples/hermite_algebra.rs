//! Products, powers, derivatives and basis changes of Hermite series.

use batch_reuse::hermite::{gauss_hermite_expect, HermiteSeries};

fn main() {
    let he1 = HermiteSeries::basis(1);
    let he3 = HermiteSeries::basis(3);

    // z * z = 1 + sqrt(2) he_2
    println!("he_1 * he_1 = {:?}", he1.multiply(&he1).unwrap().coeffs());
    println!("he_3^2      = {:?}", he3.power(2).unwrap().coeffs());
    println!("d/dz he_3   = {:?}", he3.derivative().coeffs());

    // (z^3 - 3z) / sqrt(6) in the monomial basis and back.
    let mono = he3.to_monomial();
    println!("he_3 as monomials = {mono:?}");
    println!("back to hermite   = {:?}", HermiteSeries::from_monomial(&mono).coeffs());

    // Parseval through quadrature.
    let g = HermiteSeries::new(vec![0.2, -0.5, 0.0, 0.8]);
    let quad = gauss_hermite_expect(|z| g.eval(z).powi(2), 6).unwrap();
    println!("E[g^2] = {quad:.15} vs sum of squares {:.15}", g.norm().powi(2));
}
