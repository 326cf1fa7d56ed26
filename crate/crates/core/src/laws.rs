//! Closed forms in exact rational arithmetic, and the radial profiles `phi`
//! that pair with scale laws `pi` through `phi(r) = P(|tau| <= 1/r)`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Valuation;
use crate::sampling::ScaleLaw;

pub type Rational = BigRational;

/// Tolerance for the monotonicity and sign checks on a profile.
pub const PROFILE_TOLERANCE: f64 = 1e-12;

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `q^{-e}`.
fn inv_pow(q: u32, e: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::from(q).pow(e))
}

fn check_q(q: u32) -> Result<()> {
    if q < 2 {
        Err(Error::Domain(format!("q must be at least 2, got {q}")))
    } else {
        Ok(())
    }
}

/// Total variation distance between the first `k` coordinates of `sigma_n`
/// and `gamma_k`: `q^{-n} (1 - q^{-k}) / (1 - q^{-n})`.
pub fn tv_formula(q: u32, n: u32, k: u32) -> Result<Rational> {
    check_q(q)?;
    if k == 0 || k > n {
        return Err(Error::Domain(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let one = Rational::one();
    Ok(inv_pow(q, n) * (&one - inv_pow(q, k)) / (&one - inv_pow(q, n)))
}

/// Largest `n` accepted by [`tv_oracle`].
pub const TV_ORACLE_MAX_N: u32 = 30;

/// The same distance computed from unit-indicator counts.
///
/// With `eps_i` i.i.d. Bernoulli(`1 - 1/q`), `Y = eps_1 + .. + eps_k` and
/// `X = Y + Z`, `Z = eps_{k+1} + .. + eps_n`, the distance equals
/// `1/2 sum_y |P(Y = y) - P(Y = y | X != 0)|`. The conditional law is built
/// from the joint law of `(Y, Z)`, not from the closed form.
pub fn tv_oracle(q: u32, n: u32, k: u32) -> Result<Rational> {
    check_q(q)?;
    if k == 0 || k > n {
        return Err(Error::Domain(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if n > TV_ORACLE_MAX_N {
        return Err(Error::Domain(format!("oracle supports n <= {TV_ORACLE_MAX_N}")));
    }
    let success = Rational::one() - inv_pow(q, 1);
    let y_law = binomial_pmf(k, &success);
    let z_law = binomial_pmf(n - k, &success);

    // P(Y = y, X != 0) = sum over z with y + z != 0.
    let mut joint_nonzero = vec![Rational::zero(); k as usize + 1];
    for (y, py) in y_law.iter().enumerate() {
        for (z, pz) in z_law.iter().enumerate() {
            if y + z != 0 {
                joint_nonzero[y] += py * pz;
            }
        }
    }
    let p_nonzero: Rational = joint_nonzero.iter().sum();
    let total: Rational = y_law
        .iter()
        .zip(&joint_nonzero)
        .map(|(py, pj)| (py - pj / &p_nonzero).abs())
        .sum();
    Ok(total / int(2))
}

/// Binomial(`trials`, `success`) pmf in exact arithmetic.
fn binomial_pmf(trials: u32, success: &Rational) -> Vec<Rational> {
    let failure = Rational::one() - success;
    let mut out = Vec::with_capacity(trials as usize + 1);
    let mut choose = BigInt::one();
    for j in 0..=trials {
        if j > 0 {
            choose = choose * BigInt::from(trials - j + 1) / BigInt::from(j);
        }
        let term = Rational::from_integer(choose.clone())
            * num_traits::pow(success.clone(), j as usize)
            * num_traits::pow(failure.clone(), (trials - j) as usize);
        out.push(term);
    }
    out
}

/// `gamma_{n x n}`-mass of `GL_n(D)`: `prod_{i=1}^n (1 - q^{-i})`.
pub fn gl_density(q: u32, n: u32) -> Result<Rational> {
    check_q(q)?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    Ok((1..=n).fold(Rational::one(), |acc, i| acc * (Rational::one() - inv_pow(q, i))))
}

/// `gamma_n`-mass of the unit sphere: `1 - q^{-n}`.
pub fn sphere_mass(q: u32, n: u32) -> Result<Rational> {
    check_q(q)?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    Ok(Rational::one() - inv_pow(q, n))
}

/// Bound `q^{-n}` on the distance between a `GL_n(D)`-invariant law and its
/// `gamma_n` counterpart with the same scale law.
pub fn finite_freedman_bound(q: u32, n: u32) -> Result<Rational> {
    check_q(q)?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    Ok(inv_pow(q, n))
}

/// Whether an estimate is consistent with a bound: `estimate <= bound + sigmas * se`.
pub fn within_bound(estimate: f64, bound: f64, se: f64, sigmas: f64) -> bool {
    estimate <= bound + sigmas * se
}

/// A point of the value grid `{0} ∪ {q^m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Radius {
    Zero,
    /// `q^m`.
    Pow(i64),
}

impl Radius {
    /// `||x||` for a vector with norm exponent `v` (`||x|| = q^{-v}`).
    pub fn from_norm_exp(v: Valuation) -> Self {
        match v {
            Valuation::Infinite => Radius::Zero,
            Valuation::Finite(v) => Radius::Pow(-v),
        }
    }
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Radius::Zero => f.write_str("0"),
            Radius::Pow(m) => write!(f, "q^{m}"),
        }
    }
}

/// `phi` on `{0} ∪ {q^m : m_lo <= m <= m_hi}`, with `phi(0) = 1`.
///
/// `values[i] = phi(q^(m_lo + i))`. Outside the window the profile is
/// extended by `1` below `q^m_lo` and by `phi(q^m_hi)` above `q^m_hi`,
/// which is the profile of the scale law returned by [`pi_from_phi`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRecord", into = "ProfileRecord")]
pub struct RadialProfile {
    q: u32,
    m_lo: i64,
    m_hi: i64,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProfileRecord {
    q: u32,
    m_lo: i64,
    m_hi: i64,
    values: Vec<f64>,
}

impl TryFrom<ProfileRecord> for RadialProfile {
    type Error = Error;

    fn try_from(r: ProfileRecord) -> Result<Self> {
        RadialProfile::new(r.q, r.m_lo, r.m_hi, r.values)
    }
}

impl From<RadialProfile> for ProfileRecord {
    fn from(p: RadialProfile) -> Self {
        ProfileRecord {
            q: p.q,
            m_lo: p.m_lo,
            m_hi: p.m_hi,
            values: p.values,
        }
    }
}

impl RadialProfile {
    pub fn new(q: u32, m_lo: i64, m_hi: i64, values: Vec<f64>) -> Result<Self> {
        check_q(q)?;
        if m_lo > m_hi {
            return Err(Error::Domain(format!("empty window [{m_lo}, {m_hi}]")));
        }
        if values.len() as i64 != m_hi - m_lo + 1 {
            return Err(Error::Domain(format!(
                "window [{m_lo}, {m_hi}] needs {} values, got {}",
                m_hi - m_lo + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("profile values must be finite".into()));
        }
        Ok(Self { q, m_lo, m_hi, values })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn m_lo(&self) -> i64 {
        self.m_lo
    }

    pub fn m_hi(&self) -> i64 {
        self.m_hi
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `phi(q^m)` for `m` inside the window.
    pub fn at(&self, m: i64) -> Option<f64> {
        (self.m_lo..=self.m_hi)
            .contains(&m)
            .then(|| self.values[(m - self.m_lo) as usize])
    }

    pub fn eval(&self, r: Radius) -> f64 {
        match r {
            Radius::Zero => 1.0,
            Radius::Pow(m) if m < self.m_lo => 1.0,
            Radius::Pow(m) if m > self.m_hi => self.values[self.values.len() - 1],
            Radius::Pow(m) => self.values[(m - self.m_lo) as usize],
        }
    }

    /// `phi_n(x) = phi(||x||)` given the norm exponent of `x`.
    pub fn eval_norm_exp(&self, v: Valuation) -> f64 {
        self.eval(Radius::from_norm_exp(v))
    }

    /// Non-fatal remarks, e.g. a window too coarse to show `phi -> 1` at small radii.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let first = self.values[0];
        if (first - 1.0).abs() > 1e-9 {
            out.push(format!(
                "phi(q^{}) = {first}: window does not reach the region where phi is 1; \
                 the missing mass is assigned to the atom rho^{}",
                self.m_lo,
                self.m_lo - 1
            ));
        }
        out
    }
}

/// `phi(q^m) = P(|tau| <= q^{-m}) = P(tau = 0) + sum_{j >= m} pi_j` on the window.
pub fn phi_from_pi(pi: &ScaleLaw, q: u32, m_lo: i64, m_hi: i64) -> Result<RadialProfile> {
    let values = (m_lo..=m_hi)
        .map(|m| pi.zero_mass() + pi.atoms().range(m..).map(|(_, w)| w).sum::<f64>())
        .collect();
    RadialProfile::new(q, m_lo, m_hi, values)
}

/// Recovers the scale law from a nonnegative nonincreasing profile.
///
/// Atoms are `pi_j = phi(q^j) - phi(q^{j+1})` for `m_lo <= j < m_hi`; the
/// mass `phi(q^m_hi)` at or above the top of the window goes to the zero
/// atom and the mass `1 - phi(q^m_lo)` below the window to `rho^(m_lo - 1)`.
pub fn pi_from_phi(phi: &RadialProfile) -> Result<ScaleLaw> {
    let tol = PROFILE_TOLERANCE;
    let first = phi.values[0];
    if first > 1.0 + tol {
        return Err(Error::MonotonicityViolation {
            smaller: Radius::Zero,
            larger: Radius::Pow(phi.m_lo),
            phi_smaller: 1.0,
            phi_larger: first,
        });
    }
    for (i, w) in phi.values.windows(2).enumerate() {
        if w[1] > w[0] + tol {
            let m = phi.m_lo + i as i64;
            return Err(Error::MonotonicityViolation {
                smaller: Radius::Pow(m),
                larger: Radius::Pow(m + 1),
                phi_smaller: w[0],
                phi_larger: w[1],
            });
        }
    }
    let last = phi.values[phi.values.len() - 1];
    if last < -tol {
        return Err(Error::NegativeValue {
            at: Radius::Pow(phi.m_hi),
            value: last,
        });
    }

    let mut atoms = BTreeMap::new();
    let mut push = |m: i64, w: f64| {
        if w > 0.0 {
            atoms.insert(m, w);
        }
    };
    push(phi.m_lo - 1, 1.0 - first);
    for (i, w) in phi.values.windows(2).enumerate() {
        push(phi.m_lo + i as i64, w[0] - w[1]);
    }
    let zero = last.max(0.0);
    // Clamping removes at most `tol` per atom; renormalize what remains.
    let total: f64 = atoms.values().sum::<f64>() + zero;
    let atoms = atoms.into_iter().map(|(m, w)| (m, w / total)).collect();
    ScaleLaw::new(atoms, zero / total)
}
