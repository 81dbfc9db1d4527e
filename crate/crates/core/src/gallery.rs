//! Seeded random models for property tests and benchmarks.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{c, hermitian_part, CMat};
use crate::models::{build_birth_process, build_reflected_bm, build_transport_jump, HalfLineGrid};
use crate::operators::GKSLModel;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
    CMat::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
}

/// G = −iH − ½ΣL*L with random hermitian H and `channels` random L.
pub fn random_exact(dim: usize, channels: usize, seed: u64) -> GKSLModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = hermitian_part(&random_matrix(&mut rng, dim, 1.0));
    let ls: Vec<CMat> = (0..channels).map(|_| random_matrix(&mut rng, dim, 0.6)).collect();
    let mut m = CMat::zeros(dim, dim);
    for l in &ls {
        m += l.adjoint() * l;
    }
    let m = hermitian_part(&m);
    GKSLModel::from_hamiltonian(h, m, ls, format!("random_exact(dim={dim}, seed={seed})")).expect("random exact model is well formed")
}

/// An exact model with an extra loss term −½K, K ⪰ 0 of rank ≤ 2.
pub fn random_substochastic(dim: usize, channels: usize, seed: u64) -> GKSLModel {
    let base = random_exact(dim, channels, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let v = random_matrix(&mut rng, dim, 0.5).columns(0, dim.min(2)).into_owned();
    let k = &v * v.adjoint();
    GKSLModel::new(&base.g - k * c(0.5), base.ls, format!("random_substochastic(dim={dim}, seed={seed})")).expect("same shapes")
}

/// Named models covering every construction in the crate at small size.
pub fn gallery() -> Vec<GKSLModel> {
    let mut out = Vec::new();
    out.push(GKSLModel::new(CMat::from_element(1, 1, c(-0.5)), vec![CMat::from_element(1, 1, c(1.0))], "scalar_exact").unwrap());
    out.push(GKSLModel::new(CMat::from_element(1, 1, c(-0.5)), vec![], "pure_loss").unwrap());
    for (i, d) in [2usize, 4, 6, 8, 12].into_iter().enumerate() {
        out.push(random_exact(d, 1 + i % 3, 100 + i as u64));
        out.push(random_substochastic(d, 1 + (i + 1) % 3, 200 + i as u64));
    }
    let grid = HalfLineGrid::new(32, 24.0).unwrap();
    let g = grid.sample(|x| 2f64.sqrt() * (-x).exp());
    out.push(build_reflected_bm(1.0, &g, &grid).unwrap().model);
    out.push(build_transport_jump(&g, &grid, true).unwrap().model);
    let sq: Vec<f64> = (0..40).map(|k| ((k + 1) * (k + 1)) as f64).collect();
    out.push(build_birth_process(&sq, 40).unwrap().model);
    out.push(build_birth_process(&[1.0; 40], 40).unwrap().model);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{check_condition_a, Classification, DEFAULT_TOL};

    #[test]
    fn random_models_classify_as_built() {
        for seed in 0..5 {
            let e = random_exact(5, 2, seed);
            assert_eq!(check_condition_a(&e, DEFAULT_TOL).unwrap().classification, Classification::Exact);
            let s = random_substochastic(5, 2, seed);
            assert_eq!(check_condition_a(&s, DEFAULT_TOL).unwrap().classification, Classification::Substochastic);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(random_exact(4, 2, 9).g, random_exact(4, 2, 9).g);
        assert_ne!(random_exact(4, 2, 9).g, random_exact(4, 2, 10).g);
    }
}
