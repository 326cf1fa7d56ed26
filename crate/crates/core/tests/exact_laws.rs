use std::collections::BTreeMap;

use proptest::prelude::*;
use ulf_core::laws::{
    finite_freedman_bound, phi_from_pi, pi_from_phi, tv_formula, tv_oracle, RadialProfile, Radius,
};
use ulf_core::{Error, ScaleLaw};

#[test]
fn closed_form_equals_indicator_oracle() {
    for q in [2, 3, 5, 7] {
        for n in 1..=16 {
            for k in 1..=n {
                assert_eq!(tv_formula(q, n, k).unwrap(), tv_oracle(q, n, k).unwrap(), "q {q} n {n} k {k}");
            }
        }
    }
}

#[test]
fn full_prefix_matches_freedman_bound() {
    for q in [2, 3, 5, 11] {
        for n in 1..=20 {
            assert_eq!(tv_formula(q, n, n).unwrap(), finite_freedman_bound(q, n).unwrap());
        }
    }
}

fn arb_scale_law() -> impl Strategy<Value = ScaleLaw> {
    (prop::collection::btree_map(-6i64..6, 1u32..100, 1..6), 0u32..50).prop_map(|(raw, zero)| {
        let total = raw.values().sum::<u32>() as f64 + zero as f64;
        let atoms: BTreeMap<i64, f64> = raw.into_iter().map(|(m, w)| (m, w as f64 / total)).collect();
        let zero = 1.0 - atoms.values().sum::<f64>();
        ScaleLaw::new(atoms, zero.max(0.0)).unwrap()
    })
}

fn arb_valid_profile() -> impl Strategy<Value = RadialProfile> {
    (2u32..6, -5i64..5, prop::collection::vec(0.0f64..1.0, 1..10)).prop_map(|(q, lo, mut vals)| {
        vals.sort_by(|a, b| b.total_cmp(a));
        let hi = lo + vals.len() as i64 - 1;
        RadialProfile::new(q, lo, hi, vals).unwrap()
    })
}

proptest! {
    #[test]
    fn pi_to_phi_to_pi_is_identity(pi in arb_scale_law(), q in 2u32..6, lo in -8i64..-6, hi in 6i64..9) {
        let phi = phi_from_pi(&pi, q, lo, hi).unwrap();
        let back = pi_from_phi(&phi).unwrap();
        for (&m, &w) in pi.atoms() {
            prop_assert!((back.mass(m.into()) - w).abs() < 1e-12);
        }
        prop_assert!((back.zero_mass() - pi.zero_mass()).abs() < 1e-12);
    }

    #[test]
    fn phi_to_pi_to_phi_is_identity(phi in arb_valid_profile()) {
        let pi = pi_from_phi(&phi).unwrap();
        let again = phi_from_pi(&pi, phi.q(), phi.m_lo(), phi.m_hi()).unwrap();
        for (a, b) in phi.values().iter().zip(again.values()) {
            prop_assert!((a - b).abs() < 1e-12, "{:?} vs {:?}", phi.values(), again.values());
        }
    }

    #[test]
    fn profiles_of_scale_laws_are_valid(pi in arb_scale_law(), q in 2u32..6) {
        let phi = phi_from_pi(&pi, q, -3, 3).unwrap();
        prop_assert!(phi.values().windows(2).all(|w| w[1] <= w[0] + 1e-15));
        prop_assert!(phi.values().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        prop_assert!(pi_from_phi(&phi).is_ok());
    }

    #[test]
    fn any_increase_is_reported_with_its_pair(phi in arb_valid_profile(), at in 0usize..9, bump in 0.01f64..0.5) {
        prop_assume!(phi.values().len() >= 2);
        let i = 1 + at % (phi.values().len() - 1);
        let mut vals = phi.values().to_vec();
        vals[i] = vals[i - 1] + bump;
        let bad = RadialProfile::new(phi.q(), phi.m_lo(), phi.m_hi(), vals).unwrap();
        match pi_from_phi(&bad) {
            Err(Error::MonotonicityViolation { smaller, larger, phi_smaller, phi_larger }) => {
                prop_assert!(phi_larger > phi_smaller);
                prop_assert!(matches!((smaller, larger), (Radius::Pow(a), Radius::Pow(b)) if b == a + 1));
            }
            other => prop_assert!(false, "{other:?}"),
        }
    }
}
