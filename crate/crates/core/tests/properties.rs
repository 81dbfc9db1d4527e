use minqds::gallery::{random_exact, random_substochastic};
use minqds::linalg::{self, c, choi_matrix, eye, fro_norm, op_norm, CMat};
use minqds::resolvent::{p_lambda, q_lambda};
use minqds::timedomain::evolve;
use minqds::GKSLModel;
use num_complex::Complex64;
use proptest::prelude::*;

fn model(dim: usize, channels: usize, seed: u64, lossy: bool) -> GKSLModel {
    if lossy {
        random_substochastic(dim, channels, seed)
    } else {
        random_exact(dim, channels, seed)
    }
}

fn matrix_from(dim: usize, vals: &[f64]) -> CMat {
    CMat::from_fn(dim, dim, |i, j| {
        let k = 2 * (i * dim + j);
        Complex64::new(vals[k % vals.len()], vals[(k + 1) % vals.len()])
    })
}

fn models() -> impl Strategy<Value = (usize, usize, u64, bool)> {
    (1usize..=6, 1usize..=3, any::<u64>(), any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn q_is_linear((dim, ch, seed, lossy) in models(), vals in prop::collection::vec(-1.0f64..1.0, 8..80), a in -2.0f64..2.0, lambda in 0.2f64..4.0) {
        let m = model(dim, ch, seed, lossy);
        let x = matrix_from(dim, &vals);
        let y = matrix_from(dim, &vals[3..]);
        let lhs = q_lambda(&m, lambda, &(&x * c(a) + &y)).unwrap();
        let rhs = q_lambda(&m, lambda, &x).unwrap() * c(a) + q_lambda(&m, lambda, &y).unwrap();
        prop_assert!(fro_norm(&(lhs - &rhs)) <= 1e-10 * (1.0 + fro_norm(&rhs)));
    }

    #[test]
    fn maps_preserve_hermiticity((dim, ch, seed, lossy) in models(), vals in prop::collection::vec(-1.0f64..1.0, 8..80), lambda in 0.2f64..4.0) {
        let m = model(dim, ch, seed, lossy);
        let x = linalg::hermitian_part(&matrix_from(dim, &vals));
        for y in [p_lambda(&m, lambda, &x).unwrap(), q_lambda(&m, lambda, &x).unwrap(), evolve(&m, &x, 0.7).unwrap()] {
            prop_assert!(fro_norm(&(&y - y.adjoint())) <= 1e-12 * (1.0 + fro_norm(&y)));
        }
    }

    #[test]
    fn q_and_t_are_contractions_on_identity((dim, ch, seed, lossy) in models(), lambda in 0.2f64..4.0, t in 0.0f64..3.0) {
        let m = model(dim, ch, seed, lossy);
        let id = eye(dim);
        let qi = q_lambda(&m, lambda, &id).unwrap();
        prop_assert!(op_norm(&qi) <= 1.0 + 1e-10);
        prop_assert!(linalg::min_eig(&qi) >= -1e-12);
        let ti = evolve(&m, &id, t).unwrap();
        prop_assert!(op_norm(&ti) <= 1.0 + 1e-9);
    }

    #[test]
    fn choi_matrices_are_positive((dim, ch, seed, lossy) in models(), lambda in 0.2f64..4.0, t in 0.01f64..2.0) {
        let m = model(dim, ch, seed, lossy);
        let cq = choi_matrix(dim, |x| q_lambda(&m, lambda, x).unwrap());
        prop_assert!(linalg::min_eig(&cq) >= -1e-10 * op_norm(&cq).max(1.0));
        let ct = choi_matrix(dim, |x| evolve(&m, x, t).unwrap());
        prop_assert!(linalg::min_eig(&ct) >= -1e-9 * op_norm(&ct).max(1.0));
    }
}
