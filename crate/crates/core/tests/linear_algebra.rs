use num_bigint::BigInt;
use num_rational::BigRational;
use ulf_core::field::{Backend, FieldConfig, FieldElement, Valuation};
use ulf_core::laws::gl_density;
use ulf_core::linalg::{carry_to, is_orthonormal, polar, UMatrix, UVector};
use ulf_core::sampling::{sample_gamma, sample_gamma_n, sample_gl_haar, sample_sigma};
use ulf_core::RngStream;

fn random_d_matrix(rng: &mut RngStream, c: FieldConfig, n: usize) -> UMatrix {
    UMatrix::from_rows((0..n).map(|_| (0..n).map(|_| sample_gamma(rng, c)).collect()).collect()).unwrap()
}

/// Random vector with norm exponent anywhere in `-3..=3`, or zero.
fn random_vector(rng: &mut RngStream, c: FieldConfig, n: usize) -> UVector {
    if rng.next_index(20) == 0 {
        return UVector::zeros(c, n);
    }
    sample_gamma_n(rng, c, n).shift(rng.next_index(7) as i64 - 3)
}

#[test]
fn equivalent_characterizations_agree_on_random_d_matrices() {
    let mut seen = [0usize; 2];
    for (i, (p, backend, n)) in [(2, Backend::Padic, 2), (2, Backend::Padic, 3), (3, Backend::Laurent, 3)]
        .into_iter()
        .enumerate()
    {
        let c = FieldConfig::new(p, backend, 24).unwrap();
        let mut rng = RngStream::new(10, i as u64);
        for _ in 0..300 {
            let u = random_d_matrix(&mut rng, c, n);
            let gl = u.is_gl().unwrap();
            seen[gl as usize] += 1;
            let det_unit = u.det_exp().unwrap() == Valuation::Finite(0);
            let cols = is_orthonormal(&u.columns(), &mut rng, 16).unwrap();
            let rows = is_orthonormal(&u.row_vectors(), &mut rng, 16).unwrap();
            let iso = u.is_isometry_witnessed(&mut rng, 16).unwrap();
            let inverse_in_d = match u.inverse() {
                Ok(inv) => inv.entries().iter().all(FieldElement::is_integral),
                Err(_) => false,
            };
            assert_eq!(
                [det_unit, cols, rows, iso.isometry, inverse_in_d],
                [gl; 5],
                "disagreement on {u:?}"
            );
            if let Some(x) = iso.witness {
                assert_ne!(u.apply(&x).unwrap().norm_exp(), x.norm_exp());
            }
        }
    }
    assert!(seen[0] > 50 && seen[1] > 50, "{seen:?}");
}

#[test]
fn haar_matrices_are_isometries() {
    for (i, (p, n)) in [(2, 3), (3, 2), (5, 4)].into_iter().enumerate() {
        let c = FieldConfig::padic(p).unwrap();
        let mut rng = RngStream::new(11, i as u64);
        for _ in 0..100 {
            let u = sample_gl_haar(&mut rng, c, n);
            for _ in 0..10 {
                let x = random_vector(&mut rng, c, n);
                assert_eq!(u.apply(&x).unwrap().norm_exp(), x.norm_exp());
            }
        }
    }
}

#[test]
fn products_stay_in_gl_and_reduce_homomorphically() {
    let c = FieldConfig::laurent(3).unwrap();
    let mut rng = RngStream::new(12, 0);
    for _ in 0..200 {
        let a = sample_gl_haar(&mut rng, c, 3);
        let b = sample_gl_haar(&mut rng, c, 3);
        let ab = a.mul(&b).unwrap();
        assert!(ab.is_gl().unwrap());
        let (ra, rb) = (a.residue_matrix().unwrap(), b.residue_matrix().unwrap());
        let rab = ab.residue_matrix().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: u32 = (0..3).map(|l| ra[i][l] * rb[l][j]).sum::<u32>() % 3;
                assert_eq!(rab[i][j], s);
            }
        }
    }
}

#[test]
fn carry_to_is_gl_and_hits_x() {
    let c = FieldConfig::padic(5).unwrap();
    let mut rng = RngStream::new(13, 0);
    for _ in 0..500 {
        let x = sample_sigma(&mut rng, c, 4);
        let u = carry_to(&x).unwrap();
        assert!(u.is_gl().unwrap());
        assert!(u.apply(&UVector::basis(c, 4, 0)).unwrap().agrees_with(&x));
    }
}

#[test]
fn gl_acts_transitively_on_the_sphere() {
    for c in [FieldConfig::padic(2).unwrap(), FieldConfig::laurent(3).unwrap()] {
        let mut rng = RngStream::new(14, c.p() as u64);
        for _ in 0..300 {
            let x = sample_sigma(&mut rng, c, 3);
            let y = sample_sigma(&mut rng, c, 3);
            let m = carry_to(&y).unwrap().mul(&carry_to(&x).unwrap().inverse().unwrap()).unwrap();
            assert!(m.is_gl().unwrap());
            assert!(m.apply(&x).unwrap().agrees_with(&y));
        }
    }
}

#[test]
fn polar_recomposes() {
    let c = FieldConfig::padic(3).unwrap();
    let mut rng = RngStream::new(15, 0);
    for _ in 0..10_000 {
        let x = random_vector(&mut rng, c, 3);
        let pol = polar(&x);
        match (pol.radius, pol.theta) {
            (Valuation::Infinite, None) => assert!(x.is_zero()),
            (Valuation::Finite(m), Some(theta)) => {
                assert_eq!(theta.norm_exp(), Valuation::Finite(0));
                assert_eq!(theta.shift(m), x);
            }
            other => panic!("inconsistent polar form {other:?}"),
        }
    }
}

fn leibniz_det_mod(m: &[Vec<u32>], q: u32) -> u32 {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for i in 0..n {
                let mut v = p.clone();
                v.insert(i, n - 1);
                out.push(v);
            }
        }
        out
    }
    let n = m.len();
    let mut acc = 0i64;
    for perm in perms(n) {
        let inversions = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| perm[i] > perm[j]).count();
        let sign = if inversions % 2 == 0 { 1 } else { -1 };
        acc += sign * (0..n).map(|i| m[i][perm[i]] as i64).product::<i64>();
    }
    acc.rem_euclid(q as i64) as u32
}

#[test]
fn gl_density_matches_residue_enumeration() {
    for (q, n) in [(2u32, 2usize), (2, 3), (3, 2)] {
        let c = FieldConfig::padic(q).unwrap();
        let total = (q as usize).pow((n * n) as u32);
        let mut invertible = 0usize;
        for code in 0..total {
            let mut rest = code;
            let m: Vec<Vec<u32>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            let d = (rest % q as usize) as u32;
                            rest /= q as usize;
                            d
                        })
                        .collect()
                })
                .collect();
            let det_nonzero = leibniz_det_mod(&m, q) != 0;
            let lifted = UMatrix::from_rows(
                m.iter()
                    .map(|r| r.iter().map(|&d| FieldElement::from_i64(c, d as i64)).collect())
                    .collect(),
            )
            .unwrap();
            assert_eq!(lifted.is_gl().unwrap(), det_nonzero);
            invertible += det_nonzero as usize;
        }
        let frac = BigRational::new(BigInt::from(invertible), BigInt::from(total));
        assert_eq!(frac, gl_density(q, n as u32).unwrap(), "q = {q}, n = {n}");
    }
}

#[test]
fn det_exp_of_diagonal_adds_valuations() {
    let c = FieldConfig::padic(7).unwrap();
    let mut rng = RngStream::new(16, 0);
    for _ in 0..200 {
        let diag: Vec<FieldElement> = (0..3).map(|_| sample_gamma(&mut rng, c)).collect();
        let want = diag.iter().fold(Valuation::Finite(0), |a, d| a + d.abs_exp());
        assert_eq!(UMatrix::diagonal(diag).unwrap().det_exp().unwrap(), want);
    }
}
