//! Share of random initial neurons that start with a large overlap.

use batch_reuse::diagnostics::init_tail_fraction;

fn main() {
    for c2 in [0.0, 0.25, 0.5, 1.0] {
        let row: Vec<String> = [64, 256, 1024]
            .iter()
            .map(|&d| format!("d={d}: {:.4}", init_tail_fraction(d, 100_000, c2, 0).unwrap()))
            .collect();
        println!("C2 {c2}: {}  (lower bound {:.4})", row.join(", "), (-16.0 * c2 * c2).exp());
    }
}
