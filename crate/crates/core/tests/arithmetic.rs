use num_bigint::BigUint;
use proptest::prelude::*;
use ulf_core::field::{Backend, FieldConfig, FieldElement, PhaseFraction, Valuation};
use ulf_core::sampling::sample_gamma;
use ulf_core::{ElementRecord, Error, RngStream};

const PRIMES: [u32; 5] = [2, 3, 5, 7, 11];

fn padic(p: u32, n: usize) -> FieldConfig {
    FieldConfig::new(p, Backend::Padic, n).unwrap()
}

fn laurent(p: u32, n: usize) -> FieldConfig {
    FieldConfig::new(p, Backend::Laurent, n).unwrap()
}

/// Base-`p` digit of `x` at position `pos`.
fn big_digit(x: &BigUint, p: u32, pos: i64) -> u32 {
    let q = x / BigUint::from(p).pow(pos as u32);
    (q % p).try_into().unwrap()
}

/// Every trusted digit of `got` in positions `0..limit` matches `want`.
fn matches_integer(got: &FieldElement, want: &BigUint, p: u32, limit: i64) -> bool {
    if got.is_zero() {
        return want % BigUint::from(p).pow(limit as u32) == BigUint::from(0u32);
    }
    let top = got.absolute_precision().unwrap().min(limit);
    (0..top).all(|pos| got.digit_at(pos) == big_digit(want, p, pos))
}

fn element_from_coeffs(c: FieldConfig, coeffs: &[u32]) -> FieldElement {
    match coeffs.iter().position(|&d| d != 0) {
        None => c.zero(),
        Some(v) => FieldElement::new(c, Valuation::Finite(v as i64), &coeffs[v..]).unwrap(),
    }
}

fn convolve(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    let mut out = vec![0u64; a.len() + b.len()];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x as u64 * y as u64) % p as u64;
        }
    }
    out.into_iter().map(|d| d as u32).collect()
}

fn coeff(v: &[u32], pos: i64) -> u32 {
    usize::try_from(pos).ok().and_then(|i| v.get(i)).copied().unwrap_or(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn padic_agrees_with_big_integers(pi in 0usize..5, a in 0u64..1 << 40, b in 0u64..1 << 40) {
        let p = PRIMES[pi];
        let n = 12usize;
        let c = padic(p, n);
        let (x, y) = (FieldElement::from_i64(c, a as i64), FieldElement::from_i64(c, b as i64));
        let (ba, bb) = (BigUint::from(a), BigUint::from(b));
        let modulus = BigUint::from(p).pow(n as u32);

        prop_assert!(matches_integer(&x, &ba, p, n as i64));
        prop_assert!(matches_integer(&x.mul(&y).unwrap(), &(&ba * &bb), p, n as i64));
        prop_assert!(matches_integer(&x.add(&y).unwrap(), &(&ba + &bb), p, n as i64));
        // a - b represented as a + (p^N * big - b) mod p^N
        let diff = (&ba + &modulus * BigUint::from(1u64 << 41) - &bb) % &modulus;
        match x.sub(&y) {
            Ok(d) => prop_assert!(matches_integer(&d, &diff, p, n as i64)),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn padic_division_agrees_with_modular_inverse(pi in 0usize..5, a in 0u64..1 << 40, b in 1u64..1 << 40) {
        let p = PRIMES[pi];
        prop_assume!(b % p as u64 != 0);
        let n = 10usize;
        let c = padic(p, n);
        let modulus = BigUint::from(p).pow(n as u32);
        let phi = BigUint::from(p).pow(n as u32 - 1) * BigUint::from(p - 1);
        let inv_b = BigUint::from(b).modpow(&(phi - 1u32), &modulus);
        let want = BigUint::from(a) * inv_b % &modulus;
        let q = FieldElement::from_i64(c, a as i64).div(&FieldElement::from_i64(c, b as i64)).unwrap();
        prop_assert!(matches_integer(&q, &want, p, n as i64));
    }

    #[test]
    fn laurent_agrees_with_convolution(
        pi in 0usize..5,
        a in prop::collection::vec(0u32..11, 8),
        b in prop::collection::vec(0u32..11, 8),
    ) {
        let p = PRIMES[pi];
        let a: Vec<u32> = a.into_iter().map(|d| d % p).collect();
        let b: Vec<u32> = b.into_iter().map(|d| d % p).collect();
        let c = laurent(p, 8);
        let (x, y) = (element_from_coeffs(c, &a), element_from_coeffs(c, &b));
        let prod = convolve(&a, &b, p);
        let sum: Vec<u32> = a.iter().zip(&b).map(|(s, t)| (s + t) % p).collect();
        for (got, want) in [(x.mul(&y).unwrap(), prod), (x.add(&y).unwrap(), sum)] {
            if got.is_zero() {
                prop_assert!(want.iter().all(|&d| d == 0));
            } else {
                let v = got.valuation().finite().unwrap();
                for pos in 0..got.absolute_precision().unwrap() {
                    prop_assert_eq!(got.digit_at(pos), coeff(&want, pos), "pos {} (v {})", pos, v);
                }
            }
        }
    }

    #[test]
    fn valuations_are_multiplicative_and_ultrametric(seed in any::<u64>(), pi in 0usize..5, laur in any::<bool>()) {
        let p = PRIMES[pi];
        let c = if laur { laurent(p, 16) } else { padic(p, 16) };
        let mut rng = RngStream::new(seed, 0);
        let x = sample_gamma(&mut rng, c).shift(rng.next_index(7) as i64 - 3);
        let y = sample_gamma(&mut rng, c).shift(rng.next_index(7) as i64 - 3);
        prop_assert_eq!(x.mul(&y).unwrap().abs_exp(), x.abs_exp() + y.abs_exp());
        match x.add(&y) {
            Ok(s) => {
                let lo = x.abs_exp().min(y.abs_exp());
                prop_assert!(s.abs_exp() >= lo);
                if x.abs_exp() != y.abs_exp() {
                    prop_assert_eq!(s.abs_exp(), lo);
                }
            }
            Err(Error::PrecisionExhausted(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn character_is_a_homomorphism(seed in any::<u64>(), pi in 0usize..5, laur in any::<bool>()) {
        let p = PRIMES[pi];
        let c = if laur { laurent(p, 16) } else { padic(p, 16) };
        let mut rng = RngStream::new(seed, 1);
        let x = sample_gamma(&mut rng, c).shift(-(rng.next_index(4) as i64));
        let y = sample_gamma(&mut rng, c).shift(-(rng.next_index(4) as i64));
        let lhs = match x.add(&y) {
            Ok(s) => s.character().unwrap(),
            Err(_) => return Ok(()),
        };
        let rhs = x.character().unwrap().add(&y.character().unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
        prop_assert!(sample_gamma(&mut rng, c).character().unwrap().is_zero());
    }

    #[test]
    fn ball_id_is_constant_on_balls(seed in any::<u64>(), pi in 0usize..5, k in 1usize..8) {
        let c = padic(PRIMES[pi], 16);
        let mut rng = RngStream::new(seed, 2);
        let x = sample_gamma(&mut rng, c);
        let y = x.add(&sample_gamma(&mut rng, c).shift(k as i64)).unwrap();
        prop_assert_eq!(x.ball_id(k).unwrap(), y.ball_id(k).unwrap());
    }

    #[test]
    fn records_roundtrip(seed in any::<u64>(), pi in 0usize..5, laur in any::<bool>()) {
        let p = PRIMES[pi];
        let c = if laur { laurent(p, 12) } else { padic(p, 12) };
        let mut rng = RngStream::new(seed, 3);
        let x = sample_gamma(&mut rng, c).shift(rng.next_index(9) as i64 - 4);
        let json = serde_json::to_string(&x).unwrap();
        let rec: ElementRecord = serde_json::from_str(&json).unwrap();
        let back = FieldElement::from_record_in(&rec, c).unwrap();
        prop_assert_eq!(back.valuation(), x.valuation());
        prop_assert_eq!(back.known(), x.known());
        prop_assert_eq!(back.known_digits(), x.known_digits());
        prop_assert_eq!(back, x);
    }
}

#[test]
fn division_roundtrip_on_a_thousand_units() {
    for (i, c) in [padic(3, 20), laurent(5, 20), padic(2, 20)].into_iter().enumerate() {
        let mut rng = RngStream::new(44, i as u64);
        for _ in 0..1000 {
            let a = sample_gamma(&mut rng, c);
            let u = loop {
                let u = sample_gamma(&mut rng, c);
                if u.is_unit() {
                    break u;
                }
            };
            let back = a.div(&u).unwrap().mul(&u).unwrap();
            assert!(back.agrees_with(&a), "{a} / {u} * {u} = {back}");
            assert!(u.inverse().unwrap().mul(&u).unwrap().agrees_with(&c.one()));
        }
    }
}

#[test]
fn character_is_nontrivial_just_outside_d() {
    for c in [padic(5, 8), laurent(5, 8)] {
        let phases: Vec<PhaseFraction> = (1..5)
            .map(|d| FieldElement::from_i64(c, d).shift(-1).character().unwrap())
            .collect();
        assert!(phases.iter().all(|ph| !ph.is_zero()));
        assert_eq!(phases[0].to_string(), "1/5");
    }
}
