//! Dense complex linear algebra used throughout the crate.
//!
//! Everything works on `DMatrix<Complex64>`. The two non-trivial routines are
//! the Padé-13 matrix exponential and a Bartels–Stewart Sylvester solver on
//! complex Schur forms.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn from_real(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint()
}

#[derive(Clone, Copy)]
enum Op {
    N,
    /// conjugate transpose
    H,
}

// C = op(A)·op(B) through matrixmultiply's zgemm; nalgebra's generic product
// is several times slower for complex entries.
fn gemm(a: &CMat, oa: Op, b: &CMat, ob: Op) -> CMat {
    // zgemm has no conjugation flag: conjugate a copy and transpose by strides
    let (a, m, k, sa) = match oa {
        Op::N => (std::borrow::Cow::Borrowed(a), a.nrows(), a.ncols(), (1, a.nrows() as isize)),
        Op::H => (std::borrow::Cow::Owned(a.conjugate()), a.ncols(), a.nrows(), (a.nrows() as isize, 1)),
    };
    let (b, k2, n, sb) = match ob {
        Op::N => (std::borrow::Cow::Borrowed(b), b.nrows(), b.ncols(), (1, b.nrows() as isize)),
        Op::H => (std::borrow::Cow::Owned(b.conjugate()), b.ncols(), b.nrows(), (b.nrows() as isize, 1)),
    };
    assert_eq!(k, k2, "inner dimensions differ");
    let mut out = CMat::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: Complex64 is repr(C) {re, im}, so a column-major buffer of
    // Complex64 is a buffer of [f64; 2]; strides match nalgebra's layout and
    // the shapes were checked above.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            sa.0,
            sa.1,
            b.as_ptr() as *const [f64; 2],
            sb.0,
            sb.1,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    out
}

/// A·B.
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::N, b, Op::N)
}

/// A*·B.
pub fn adj_mul(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::H, b, Op::N)
}

/// A·B*.
pub fn mul_adj(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::N, b, Op::H)
}

/// (A + A*)/2.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5)
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if is_hermitian(a, 1e-14) {
        let ev = eigvalsh(a);
        return ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Induced 1-norm (max column sum), cheap upper bound for the spectral radius.
pub fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_hermitian(a: &CMat, rel: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = fro_norm(a).max(f64::MIN_POSITIVE);
    fro_norm(&(a - a.adjoint())) <= rel * scale
}

/// Eigenvalues of the hermitian part, ascending.
pub fn eigvalsh(a: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|x, y| x.total_cmp(y));
    v
}

/// Eigen-decomposition of the hermitian part with eigenvalues ascending.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let se = SymmetricEigen::new(hermitian_part(a));
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn max_eig(a: &CMat) -> f64 {
    eigvalsh(a).last().copied().unwrap_or(0.0)
}

pub fn min_eig(a: &CMat) -> f64 {
    eigvalsh(a).first().copied().unwrap_or(0.0)
}

/// Apply a real function to a hermitian matrix through its spectrum.
pub fn spectral_map(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, u) = eigh(a);
    let d = CVec::from_iterator(vals.len(), vals.iter().map(|&v| c(f(v))));
    let scaled = CMat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * d[j]);
    hermitian_part(&(scaled * u.adjoint()))
}

/// Principal square root of a positive semidefinite matrix. Negative
/// roundoff eigenvalues are clamped to zero.
pub fn sqrtm_psd(a: &CMat) -> CMat {
    spectral_map(a, |v| v.max(0.0).sqrt())
}

/// ⟨u, A u⟩ (real part; the imaginary part vanishes for hermitian A).
pub fn quad_form(a: &CMat, u: &CVec) -> f64 {
    u.dotc(&(a * u)).re
}

/// Orthonormal basis of {u : r·u = 0 for every row r}. Rows are given as
/// vectors `r`, the constraint being Σ r_k u_k = 0.
pub fn constraint_null_basis(n: usize, rows: &[CVec]) -> CMat {
    let mut basis: Vec<CVec> = Vec::new();
    for r in rows {
        // constraint functional u ↦ Σ r_k u_k = ⟨conj(r), u⟩
        let mut v = r.map(|z| z.conj());
        for b in &basis {
            let p = b.dotc(&v);
            v -= b * p;
        }
        let nv = v.norm();
        if nv > 1e-14 {
            basis.push(v / c(nv));
        }
    }
    let mut proj = eye(n);
    for b in &basis {
        proj -= b * b.adjoint();
    }
    let (vals, vecs) = eigh(&proj);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 0.5).collect();
    let mut out = CMat::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &vecs.column(i));
    }
    out
}

// ---------------------------------------------------------------------------
// Matrix exponential

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// e^A by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * c(0.5f64.powi(s));
    let b = &PADE13;
    let id = eye(n);
    let a2 = mul(&a, &a);
    let a4 = mul(&a2, &a2);
    let a6 = mul(&a4, &a2);
    let u_inner = mul(&a6, &(&a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9])))
        + &a6 * c(b[7])
        + &a4 * c(b[5])
        + &a2 * c(b[3])
        + &id * c(b[1]);
    let u = mul(&a, &u_inner);
    let v = mul(&a6, &(&a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8])))
        + &a6 * c(b[6])
        + &a4 * c(b[4])
        + &a2 * c(b[2])
        + &id * c(b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = mul(&r, &r);
    }
    r
}

// ---------------------------------------------------------------------------
// Sylvester equations

/// Complex Schur form A = U T U* with T upper triangular.
#[derive(Clone, Debug)]
pub struct SchurForm {
    pub u: CMat,
    pub t: CMat,
}

impl SchurForm {
    pub fn new(a: &CMat) -> Self {
        let (u, t) = Schur::new(a.clone()).unpack();
        // Clear roundoff below the diagonal; the solver reads only the upper part.
        let n = t.nrows();
        let t = CMat::from_fn(n, n, |i, j| if i > j { ZERO } else { t[(i, j)] });
        SchurForm { u, t }
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }
}

/// Solve (S + σ I) z = f for upper triangular S, column-oriented back substitution.
fn upper_solve_shifted(s: &CMat, sigma: Complex64, f: &mut CVec) {
    let n = s.nrows();
    for i in (0..n).rev() {
        let zi = f[i] / (s[(i, i)] + sigma);
        f[i] = zi;
        for k in 0..i {
            f[k] -= s[(k, i)] * zi;
        }
    }
}

/// Smallest |S_ii + T_jj|, the separation estimate of the triangular pair.
pub fn separation(sa: &SchurForm, sb: &SchurForm, shift: Complex64) -> f64 {
    let mut sep = f64::INFINITY;
    for i in 0..sa.dim() {
        for j in 0..sb.dim() {
            sep = sep.min((sa.t[(i, i)] + shift + sb.t[(j, j)]).norm());
        }
    }
    sep
}

/// Solves (A + shift·I) Y + Y B = Q given Schur forms of A and B.
pub fn sylvester_schur(sa: &SchurForm, shift: Complex64, sb: &SchurForm, q: &CMat) -> Result<CMat> {
    let n = sa.dim();
    let m = sb.dim();
    if q.nrows() != n || q.ncols() != m {
        return Err(Error::Dimension(format!(
            "sylvester right-hand side is {}x{}, expected {n}x{m}",
            q.nrows(),
            q.ncols()
        )));
    }
    let scale = 1.0 + op_norm_bound(&sa.t) + shift.norm() + op_norm_bound(&sb.t);
    let sep = separation(sa, sb, shift);
    if !(sep > 1e-13 * scale) {
        return Err(Error::Solver { what: "sylvester".into(), condition: scale / sep });
    }
    let f = mul(&adj_mul(&sa.u, q), &sb.u);
    let mut z = CMat::zeros(n, m);
    for j in 0..m {
        let mut rhs: CVec = f.column(j).into_owned();
        for k in 0..j {
            let tkj = sb.t[(k, j)];
            if tkj != ZERO {
                rhs.axpy(-tkj, &z.column(k), ONE);
            }
        }
        upper_solve_shifted(&sa.t, shift + sb.t[(j, j)], &mut rhs);
        z.set_column(j, &rhs);
    }
    Ok(mul_adj(&mul(&sa.u, &z), &sb.u))
}

fn op_norm_bound(t: &CMat) -> f64 {
    one_norm(t)
}

/// Solves A Y + Y B = Q.
pub fn solve_sylvester(a: &CMat, b: &CMat, q: &CMat) -> Result<CMat> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::Dimension("sylvester coefficients must be square".into()));
    }
    let sa = SchurForm::new(a);
    let sb = SchurForm::new(b);
    sylvester_schur(&sa, ZERO, &sb, q)
}

/// Choi matrix Σ_ij E_ij ⊗ Φ(E_ij) of a linear map on n×n matrices.
pub fn choi_matrix(n: usize, map: impl Fn(&CMat) -> CMat) -> CMat {
    let mut out = CMat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let mut e = CMat::zeros(n, n);
            e[(i, j)] = ONE;
            let img = map(&e);
            out.view_mut((i * n, j * n), (n, n)).copy_from(&img);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn gemm_variants_match_nalgebra() {
        let a = random(6, 1);
        let b = CMat::from_fn(6, 4, |i, j| Complex64::new(i as f64 - j as f64, 0.5 * (i * j) as f64));
        assert!(fro_norm(&(mul(&a, &b) - &a * &b)) < 1e-13);
        assert!(fro_norm(&(adj_mul(&a, &b) - a.adjoint() * &b)) < 1e-13);
        assert!(fro_norm(&(mul_adj(&b.adjoint(), &a) - b.adjoint() * a.adjoint())) < 1e-13);
        assert_eq!(mul(&CMat::zeros(3, 0), &CMat::zeros(0, 2)), CMat::zeros(3, 2));
    }

    #[test]
    fn schur_factor_is_triangular_and_reconstructs() {
        let a = random(7, 3);
        let (u, t) = Schur::new(a.clone()).unpack();
        let below: f64 = (0..7).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| t[(i, j)].norm()).fold(0.0, f64::max);
        assert!(below < 1e-12 * fro_norm(&a), "sub-diagonal mass {below}");
        assert!(fro_norm(&(&u * &t * u.adjoint() - &a)) < 1e-12 * fro_norm(&a));
    }

    #[test]
    fn expm_scalar_and_nilpotent() {
        let a = CMat::from_element(1, 1, c(-1.0));
        assert!((expm(&a)[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-15);
        let mut n = CMat::zeros(3, 3);
        n[(0, 1)] = c(2.0);
        n[(1, 2)] = c(3.0);
        let e = expm(&n);
        assert!((e[(0, 2)].re - 3.0).abs() < 1e-14);
        assert!((e[(0, 1)].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn expm_matches_taylor_on_large_norm() {
        // diag with a rotation block: exact e^{tθJ} = rotation
        let mut a = CMat::zeros(2, 2);
        a[(0, 1)] = c(-30.0);
        a[(1, 0)] = c(30.0);
        let e = expm(&a);
        assert!((e[(0, 0)].re - 30f64.cos()).abs() < 1e-11);
        assert!((e[(1, 0)].re - 30f64.sin()).abs() < 1e-11);
    }

    #[test]
    fn expm_group_property() {
        let a = random(6, 9) * c(0.7);
        let e1 = expm(&a);
        let e2 = expm(&(&a * c(0.5)));
        assert!(fro_norm(&(&e2 * &e2 - &e1)) < 1e-12 * fro_norm(&e1));
    }

    #[test]
    fn sylvester_small_cases() {
        let y = solve_sylvester(&eye(3), &eye(3), &(eye(3) * c(2.0))).unwrap();
        assert!(fro_norm(&(y - eye(3))) < 1e-14);
        let lam = 0.7;
        let y = solve_sylvester(
            &CMat::from_element(1, 1, c(lam + 1.0)),
            &CMat::from_element(1, 1, c(1.0)),
            &CMat::from_element(1, 1, c(3.0)),
        )
        .unwrap();
        assert!((y[(0, 0)].re - 3.0 / (lam + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn sylvester_residual_random() {
        for seed in 0..5 {
            let a = random(8, seed) + eye(8) * c(4.0);
            let b = random(5, seed + 100) + eye(5) * c(4.0);
            let q = CMat::from_fn(8, 5, |i, j| Complex64::new(i as f64 - j as f64, 0.5));
            let y = solve_sylvester(&a, &b, &q).unwrap();
            let r = fro_norm(&(&a * &y + &y * &b - &q));
            assert!(r <= 1e-10 * (op_norm(&a) + op_norm(&b)) * op_norm(&y), "residual {r}");
        }
    }

    #[test]
    fn sylvester_singular_pencil_reports_condition() {
        let a = eye(2);
        let b = -eye(2);
        match solve_sylvester(&a, &b, &eye(2)) {
            Err(Error::Solver { condition, .. }) => assert!(condition > 1e12),
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn sqrtm_squares_back() {
        let r = random(5, 1);
        let p = &r * r.adjoint();
        let s = sqrtm_psd(&p);
        assert!(fro_norm(&(&s * &s - &p)) < 1e-12 * fro_norm(&p));
    }

    #[test]
    fn null_basis_is_orthogonal_to_constraint() {
        let r = CVec::from_vec(vec![c(1.0), c(-2.0), c(0.0), c(0.5)]);
        let b = constraint_null_basis(4, &[r.clone()]);
        assert_eq!(b.ncols(), 3);
        for j in 0..3 {
            let s: Complex64 = r.iter().zip(b.column(j).iter()).map(|(x, y)| x * y).sum();
            assert!(s.norm() < 1e-13);
        }
    }
}
