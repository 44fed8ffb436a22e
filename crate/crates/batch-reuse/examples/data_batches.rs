//! Reproducible Gaussian batches from the single-index model, through CSV.

use batch_reuse::model::{make_direction, sample_batch, Batch, DataConfig, DirectionMode, LinkSpec};

fn main() {
    let d = 4;
    let link = LinkSpec::hermite(2);
    let theta = make_direction(d, DirectionMode::Random, 7);
    let data = DataConfig::new(d, 0.1, 7).unwrap();
    let batch = sample_batch(&link, &theta, 3, &data, 0).unwrap();
    let mut csv = Vec::new();
    batch.write_csv(&mut csv).unwrap();
    print!("{}", String::from_utf8_lossy(&csv));
    let back = Batch::read_csv(csv.as_slice()).unwrap();
    println!("round trip exact: {}", back == batch);
    println!("same counter, same batch: {}", sample_batch(&link, &theta, 3, &data, 0).unwrap() == batch);
}
