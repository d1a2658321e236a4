use ndarray::Array2;
use rand::Rng;

use crate::Mat;

/// Xavier/Glorot uniform initialization for a rows×cols weight matrix.
pub fn xavier<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Gaussian initialization via Box-Muller (keeps draws portable and
/// independent of distribution-crate internals).
pub fn normal<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Mat {
    Array2::from_shape_fn((rows, cols), |_| std * standard_normal(rng))
}

/// One standard-normal draw (Box-Muller, first coordinate).
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn zeros(rows: usize, cols: usize) -> Mat {
    Array2::zeros((rows, cols))
}

pub fn identity(n: usize) -> Mat {
    Array2::eye(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_within_bound_and_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let wa = xavier(&mut a, 10, 20);
        let wb = xavier(&mut b, 10, 20);
        assert_eq!(wa, wb);
        let bound = (6.0 / 30.0f64).sqrt();
        assert!(wa.iter().all(|x| x.abs() < bound));
    }

    #[test]
    fn normal_has_roughly_unit_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = normal(&mut rng, 100, 100, 1.0);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }
}
