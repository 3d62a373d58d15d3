use mnar_core::linalg::*;
use mnar_core::rng::{self, stream_rng, Stream};
use mnar_core::transfer::gen_partition;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

fn seeded(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut r = stream_rng(seed, Stream::Factors);
    DenseMatrix::from_fn(rows, cols, |_, _| rng::normal(&mut r))
}

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |data| DenseMatrix::new(r, c, data).unwrap())
    })
}

#[test]
fn singular_values_match_gram_eigendecomposition() {
    let a = seeded(5, 4, 1);
    let t = rank_d_svd(&a, 3).unwrap();
    let gram = to_na(&a).transpose() * to_na(&a);
    let mut eig: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().map(|x| x.max(0.0).sqrt()).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    for k in 0..3 {
        assert!((t.singular_values[k] - eig[k]).abs() < 1e-8);
    }
}

#[test]
fn rank_one_and_diagonal() {
    let u = [0.6, 0.8, 0.0];
    let v = [0.0, 1.0];
    let a = DenseMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
    let t = rank_d_svd(&a, 1).unwrap();
    assert!((t.singular_values[0] - 1.0).abs() < 1e-14);
    for i in 0..3 {
        assert!((t.u.get(i, 0).abs() - u[i]).abs() < 1e-14);
    }
    assert!(rank_d_svd(&a, 3).is_err());
}

#[test]
fn norm_op_matches_svd() {
    let a = seeded(4, 3, 2);
    assert!((norm_op(&a) - rank_d_svd(&a, 1).unwrap().singular_values[0]).abs() < 1e-10);
    let z = DenseMatrix::zeros(3, 3);
    assert_eq!((norm_max(&z), norm_fro(&z), norm_op(&z), norm_two_to_inf(&z)), (0.0, 0.0, 0.0, 0.0));
    let e = DenseMatrix::from_fn(3, 3, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
    assert_eq!((norm_max(&e), norm_fro(&e), norm_op(&e), norm_two_to_inf(&e)), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn kron_against_index_formula() {
    let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let b = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let k = kron(&a, &b);
    for i in 0..2 {
        for j in 0..2 {
            for v in 0..2 {
                for w in 0..2 {
                    assert_eq!(k.get(i * 2 + v, j * 2 + w), a.get(i, j) * b.get(v, w));
                }
            }
        }
    }
    let na = to_na(&a).kronecker(&to_na(&b));
    assert_eq!(to_na(&k), na);
    let c = kron(&a, &DenseMatrix::from_diag(&[3.0]));
    assert_eq!(c, a.scale(3.0));
}

#[test]
fn vec_convention() {
    let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(vec(&x), vec![1.0, 3.0, 2.0, 4.0]);
    assert!(unvec(&[1.0, 2.0, 3.0], 2, 2).is_err());
}

fn block_sizes(p: &DenseMatrix) -> Vec<usize> {
    let mut reps: Vec<(Vec<f64>, usize)> = Vec::new();
    for i in 0..p.rows() {
        match reps.iter_mut().find(|(r, _)| r.as_slice() == p.row(i)) {
            Some((_, c)) => *c += 1,
            None => reps.push((p.row(i).to_vec(), 1)),
        }
    }
    reps.into_iter().map(|(_, c)| c).collect()
}

#[test]
fn partition_incoherence_matches_block_sizes() {
    let pair = gen_partition(300, 200, 5, 0.1, 0.8, 3).unwrap();
    let (mu_u, mu_v) = incoherence(&pair.p, 5).unwrap();
    // the factor row in a block of size s has squared norm 1/s
    let rows = block_sizes(&pair.p);
    let cols = block_sizes(&pair.p.transpose());
    assert_eq!((rows.len(), cols.len()), (5, 5));
    let oracle_u = 300.0 / (5.0 * *rows.iter().min().unwrap() as f64);
    let oracle_v = 200.0 / (5.0 * *cols.iter().min().unwrap() as f64);
    assert!((mu_u - oracle_u).abs() < 1e-8, "{mu_u} vs {oracle_u}");
    assert!((mu_v - oracle_v).abs() < 1e-8, "{mu_v} vs {oracle_v}");
}

#[test]
fn incoherence_extremes() {
    let u = OrthonormalFactor::canonical(200, 5);
    assert!((factor_incoherence(&u) - 40.0).abs() < 1e-12);
    let flat = OrthonormalFactor::new(DenseMatrix::from_fn(4, 1, |_, _| 0.5)).unwrap();
    assert!((factor_incoherence(&flat) - 1.0).abs() < 1e-12);
    assert!(incoherence(&DenseMatrix::zeros(4, 4), 1).is_err());
}

#[test]
fn sign_matrix_cases() {
    let z = DenseMatrix::identity(3).scale(2.5);
    assert!(sign_matrix(&z).unwrap().max_abs_diff(&DenseMatrix::identity(3)) < 1e-14);
    let q = orthonormalize(&seeded(3, 3, 4)).unwrap();
    assert!(sign_matrix(&q).unwrap().max_abs_diff(&q) < 1e-12);
    let z = seeded(3, 3, 5);
    let s = sign_matrix(&z).unwrap();
    let h = z.t_matmul(&s);
    assert!(h.asymmetry() < 1e-12);
    assert!(symmetric_eigen(&h).unwrap().min() >= -1e-12);
    assert!(sign_matrix(&seeded(3, 2, 6)).is_err());
}

#[test]
fn procrustes_cases() {
    let u = orthonormalize(&seeded(10, 3, 7)).unwrap();
    let a = procrustes_align(&u, &u).unwrap();
    assert!(a.distance < 1e-14);
    assert!(a.rotation.max_abs_diff(&DenseMatrix::identity(3)) < 1e-12);
    let w0 = orthonormalize(&seeded(3, 3, 8)).unwrap();
    let rotated = u.rotate(&w0).unwrap();
    let a = procrustes_align(&u, &rotated).unwrap();
    assert!(a.distance < 1e-12);
    assert!(a.rotation.max_abs_diff(&w0) < 1e-12);

    let theta: f64 = 0.1;
    let e1 = OrthonormalFactor::canonical(3, 1);
    let uhat = OrthonormalFactor::new(DenseMatrix::column_vector(&[theta.cos(), theta.sin(), 0.0])).unwrap();
    let a = procrustes_align(&e1, &uhat).unwrap();
    let plus = ((theta.cos() - 1.0).powi(2)).sqrt().max(theta.sin());
    let minus = ((theta.cos() + 1.0).powi(2)).sqrt().max(theta.sin());
    assert!((a.distance - plus.min(minus)).abs() < 1e-14);
}

#[test]
fn symmetric_eigen_matches_nalgebra() {
    let a = seeded(6, 6, 9);
    let s = &a + &a.transpose();
    let ours = symmetric_eigen(&s).unwrap();
    let mut theirs: Vec<f64> = to_na(&s).symmetric_eigen().eigenvalues.iter().copied().collect();
    theirs.sort_by(f64::total_cmp);
    for (x, y) in ours.values.iter().zip(&theirs) {
        assert!((x - y).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(a in matrix(9, 9)) {
        let t = svd(&a);
        prop_assert!(orthonormality_defect(&t.u) <= 1e-8);
        prop_assert!(orthonormality_defect(&t.v) <= 1e-8);
        prop_assert!(t.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(t.singular_values.iter().all(|&s| s >= 0.0));
        let scale = norm_max(&a).max(1.0);
        prop_assert!(t.reconstruct().max_abs_diff(&a) <= 1e-10 * scale);
        let mut theirs: Vec<f64> = to_na(&a).singular_values().iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in t.singular_values.iter().zip(&theirs) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn truncation_is_eckart_young(a in matrix(8, 8), d in 1usize..4) {
        let k = a.rows().min(a.cols());
        prop_assume!(d <= k);
        let t = truncate_rank(&a, d).unwrap();
        let sv = singular_values(&a);
        let tail: f64 = sv[d..].iter().map(|s| s * s).sum::<f64>().sqrt();
        prop_assert!((norm_fro(&(&a - &t)) - tail).abs() <= 1e-9 * norm_fro(&a).max(1.0));
    }

    #[test]
    fn vec_kron_identity(
        (a, x, b) in (1usize..=6, 1usize..=6, 1usize..=6, 1usize..=6).prop_flat_map(|(p, q, r, s)| {
            (
                proptest::collection::vec(-3.0f64..3.0, p * q).prop_map(move |v| DenseMatrix::new(p, q, v).unwrap()),
                proptest::collection::vec(-3.0f64..3.0, q * r).prop_map(move |v| DenseMatrix::new(q, r, v).unwrap()),
                proptest::collection::vec(-3.0f64..3.0, r * s).prop_map(move |v| DenseMatrix::new(r, s, v).unwrap()),
            )
        })
    ) {
        let lhs = vec(&a.matmul(&x).matmul(&b));
        let rhs = kron(&b.transpose(), &a).matvec(&vec(&x));
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() <= 1e-12 * 100.0);
        }
        let back = unvec(&vec(&x), x.rows(), x.cols()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn norm_ordering(a in matrix(7, 7)) {
        let (m, n) = a.shape();
        let tol = 1e-12 * norm_fro(&a).max(1.0);
        prop_assert!(norm_max(&a) <= norm_two_to_inf(&a) + tol);
        prop_assert!(norm_two_to_inf(&a) <= norm_fro(&a) + tol);
        prop_assert!(norm_op(&a) <= norm_fro(&a) + tol);
        prop_assert!(norm_two_to_inf(&a) <= (n as f64).sqrt() * norm_max(&a) + tol);
        prop_assert!(norm_op(&a) <= ((m * n) as f64).sqrt() * norm_max(&a) + tol);
    }

    #[test]
    fn incoherence_within_bounds(seed in 0u64..1000, m in 4usize..30, d in 1usize..4) {
        prop_assume!(d <= m);
        let u = orthonormalize(&seeded(m, d, seed)).unwrap();
        let mu = factor_incoherence(&u);
        prop_assert!(mu >= 1.0 - 1e-12 && mu <= m as f64 / d as f64 + 1e-12);
    }

    #[test]
    fn solve_matches_nalgebra(seed in 0u64..1000, n in 1usize..8) {
        let a = &seeded(n, n, seed) + &DenseMatrix::identity(n).scale(n as f64);
        let b = seeded(n, 2, seed + 1);
        let ours = solve(&a, &b).unwrap();
        let theirs = to_na(&a).lu().solve(&to_na(&b)).unwrap();
        for i in 0..n {
            for j in 0..2 {
                prop_assert!((ours.get(i, j) - theirs[(i, j)]).abs() < 1e-10);
            }
        }
    }
}
