//! Seeded randomness. Every random choice in the crate flows from a `u64`
//! seed through xoshiro256** (seed expanded with SplitMix64).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256StarStar;

pub type Rng = Xoshiro256StarStar;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the sign
/// of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal(rng: &mut Rng, n: usize) -> DMatrix<f64> {
    let qr = normal_matrix(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_orthogonal() {
        let a = random_orthogonal(&mut seeded(7), 4);
        let b = random_orthogonal(&mut seeded(7), 4);
        assert_eq!(a, b);
        let e = a.transpose() * &a - DMatrix::identity(4, 4);
        assert!(e.amax() < 1e-14);
    }
}
