//! The 1-D Wasserstein distance and the latent-set distances built on it.
//!
//!     cargo run --example wasserstein_shift

use invar_har::nn::Tensor;
use invar_har::shift::{latent_distance, percent_change, wasserstein_1d, LatentDistance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, offset: f64) -> Tensor {
    let normal = Normal::new(offset, 1.0).unwrap();
    Tensor::new(vec![n, d], (0..n * d).map(|_| normal.sample(rng)).collect()).unwrap()
}

fn main() -> invar_har::Result<()> {
    println!("W1([0, 1], [1, 2]) = {}", wasserstein_1d(&[0.0, 1.0], &[1.0, 2.0])?);
    println!("W1([0, 2], [1])    = {}", wasserstein_1d(&[0.0, 2.0], &[1.0])?);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let train = cloud(&mut rng, 400, 8, 0.0);
    let sliced = LatentDistance::Sliced { projections: 64, seed: 1 };
    for offset in [0.0, 0.5, 1.0, 2.0] {
        let test = cloud(&mut rng, 300, 8, offset);
        println!(
            "offset {offset:.1}: per-dimension {:.3}  sliced {:.3}",
            latent_distance(&train, &test, LatentDistance::PerDimension)?,
            latent_distance(&train, &test, sliced)?
        );
    }
    println!("0.40 -> 0.10 is a {:.0}% reduction", percent_change(0.4, 0.1).unwrap());
    Ok(())
}
