//! Finite-precision arithmetic in a local field with prime residue field.
//!
//! Two backends are supported: the `p`-adic numbers `Q_p` (digits carry) and
//! the Laurent series field `F_p((t))` (digits add independently mod `p`).
//! Both use the same representation: an exact valuation, a normalized vector
//! of `N` base-`p` unit digits, and a count `known` of trusted leading digits.
//! Valuations are never approximated, so `|x| = p^{-v}` is always exact.
//!
//! Values that agree in all `N` digits of the working precision are
//! identified: the sum of two full-precision operands that cancels across the
//! whole window is the exact zero. Any other total cancellation reports
//! [`Error::PrecisionExhausted`].

use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PRECISION: usize = 32;
const MAX_PRIME: u32 = 1 << 31;
const MAX_PRECISION: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backend {
    /// `Q_p`.
    #[serde(rename = "qp")]
    Padic,
    /// `F_p((t))`.
    #[serde(rename = "laurent")]
    Laurent,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Padic => "qp",
            Backend::Laurent => "laurent",
        }
    }

    /// Description of the fixed additive character used by [`FieldElement::character`].
    pub fn character_description(self) -> &'static str {
        match self {
            Backend::Padic => "chi(x) = exp(2 pi i {x}), {x} the fractional part of x in Z[1/p]/Z",
            Backend::Laurent => "chi(x) = exp(2 pi i a_{-1}/p), a_{-1} the coefficient of t^-1",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qp" | "padic" => Ok(Backend::Padic),
            "laurent" | "fpt" => Ok(Backend::Laurent),
            other => Err(Error::InvalidConfig(format!("unknown backend '{other}'"))),
        }
    }
}

/// The field `K` together with the working precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FieldConfig {
    p: u32,
    backend: Backend,
    precision: usize,
}

impl FieldConfig {
    pub fn new(p: u32, backend: Backend, precision: usize) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidConfig(format!("{p} is not prime")));
        }
        if p >= MAX_PRIME {
            return Err(Error::InvalidConfig(format!("prime {p} exceeds 2^31")));
        }
        if precision == 0 || precision > MAX_PRECISION {
            return Err(Error::InvalidConfig(format!(
                "precision must lie in 1..={MAX_PRECISION}, got {precision}"
            )));
        }
        Ok(Self {
            p,
            backend,
            precision,
        })
    }

    pub fn padic(p: u32) -> Result<Self> {
        Self::new(p, Backend::Padic, DEFAULT_PRECISION)
    }

    pub fn laurent(p: u32) -> Result<Self> {
        Self::new(p, Backend::Laurent, DEFAULT_PRECISION)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    /// Order of the residue field. Always equal to `p` here.
    pub fn q(&self) -> u32 {
        self.p
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement::zero(*self)
    }

    pub fn one(&self) -> FieldElement {
        FieldElement::uniformizer_pow(*self, 0)
    }

    /// `rho^m`, where `rho = p` (`Q_p`) or `rho = t` (`F_p((t))`).
    pub fn rho_pow(&self, m: i64) -> FieldElement {
        FieldElement::uniformizer_pow(*self, m)
    }
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let n = n as u64;
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// An exponent in `Z ∪ {+∞}`: the valuation of an element (`|x| = q^{-v}`),
/// or equally a scale `rho^m` with `+∞` standing for the scale `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Valuation::Infinite)
    }

    /// `q^{-v}` as a real number.
    pub fn abs_value(self, q: u32) -> f64 {
        match self {
            Valuation::Finite(v) => (q as f64).powf(-(v as f64)),
            Valuation::Infinite => 0.0,
        }
    }
}

impl Add for Valuation {
    type Output = Valuation;

    fn add(self, rhs: Valuation) -> Valuation {
        match (self, rhs) {
            (Valuation::Finite(a), Valuation::Finite(b)) => Valuation::Finite(a + b),
            _ => Valuation::Infinite,
        }
    }
}

impl From<i64> for Valuation {
    fn from(v: i64) -> Self {
        Valuation::Finite(v)
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Valuation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "zero" | "+inf" => Ok(Valuation::Infinite),
            other => other
                .parse::<i64>()
                .map(Valuation::Finite)
                .map_err(|_| Error::Domain(format!("expected an integer or 'inf', got '{other}'"))),
        }
    }
}

impl Serialize for Valuation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Valuation::Finite(v) => serializer.serialize_i64(*v),
            Valuation::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Valuation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ValuationVisitor;

        impl Visitor<'_> for ValuationVisitor {
            type Value = Valuation;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer or the string \"inf\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Valuation, E> {
                Ok(Valuation::Finite(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Valuation, E> {
                i64::try_from(v)
                    .map(Valuation::Finite)
                    .map_err(|_| E::custom("valuation out of range"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Valuation, E> {
                if v == "inf" {
                    Ok(Valuation::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(ValuationVisitor)
    }
}

/// A phase `num / p^exp` in `[0, 1)`, reduced so that `p ∤ num` unless the phase is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseFraction {
    p: u32,
    num: u128,
    exp: u32,
}

impl PhaseFraction {
    pub fn zero(p: u32) -> Self {
        Self { p, num: 0, exp: 0 }
    }

    /// Builds `num / p^exp mod 1`.
    pub fn new(p: u32, num: u128, exp: u32) -> Result<Self> {
        let den = pow_u128(p, exp)?;
        Ok(Self { p, num: num % den, exp }.reduced())
    }

    fn reduced(mut self) -> Self {
        let p = self.p as u128;
        if self.num == 0 {
            self.exp = 0;
            return self;
        }
        while self.exp > 0 && self.num.is_multiple_of(p) {
            self.num /= p;
            self.exp -= 1;
        }
        self
    }

    pub fn numerator(&self) -> u128 {
        self.num
    }

    pub fn denominator_exp(&self) -> u32 {
        self.exp
    }

    pub fn denominator(&self) -> u128 {
        (self.p as u128).pow(self.exp)
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.denominator() as f64
    }

    /// Sum modulo 1.
    pub fn add(&self, other: &PhaseFraction) -> Result<PhaseFraction> {
        if self.p != other.p {
            return Err(Error::ConfigMismatch);
        }
        let exp = self.exp.max(other.exp);
        let den = pow_u128(self.p, exp)?;
        let a = self.num * pow_u128(self.p, exp - self.exp)?;
        let b = other.num * pow_u128(self.p, exp - other.exp)?;
        let sum = (a % den + b % den) % den;
        Ok(Self {
            p: self.p,
            num: sum,
            exp,
        }
        .reduced())
    }
}

impl fmt::Display for PhaseFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.denominator())
    }
}

fn pow_u128(p: u32, exp: u32) -> Result<u128> {
    (p as u128)
        .checked_pow(exp)
        .ok_or_else(|| Error::Domain(format!("phase denominator {p}^{exp} overflows")))
}

/// A truncated element of `K`.
///
/// For a nonzero element `x = sum_i digits[i] * rho^(v + i)` with
/// `digits[0] != 0`; only the first `known` digits are trusted, the rest are
/// zero padding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldElement {
    config: FieldConfig,
    valuation: Valuation,
    digits: Vec<u32>,
    known: usize,
}

impl FieldElement {
    pub fn zero(config: FieldConfig) -> Self {
        Self {
            config,
            valuation: Valuation::Infinite,
            digits: vec![0; config.precision],
            known: config.precision,
        }
    }

    pub fn uniformizer_pow(config: FieldConfig, m: i64) -> Self {
        let mut digits = vec![0; config.precision];
        digits[0] = 1;
        Self {
            config,
            valuation: Valuation::Finite(m),
            digits,
            known: config.precision,
        }
    }

    /// Builds `rho^v * (d_0 + d_1 rho + ...)` from a finite digit expansion.
    ///
    /// The expansion is taken as exact: digits past the end of `unit_digits`
    /// are zero, so the element carries the full working precision.
    pub fn new(config: FieldConfig, valuation: Valuation, unit_digits: &[u32]) -> Result<Self> {
        Self::with_known(config, valuation, unit_digits, config.precision)
    }

    /// Like [`FieldElement::new`] but trusting only `known` leading digits.
    pub fn with_known(
        config: FieldConfig,
        valuation: Valuation,
        unit_digits: &[u32],
        known: usize,
    ) -> Result<Self> {
        let p = config.p;
        let n = config.precision;
        if let Some(d) = unit_digits.iter().find(|&&d| d >= p) {
            return Err(Error::Normalization(format!("digit {d} out of range for p = {p}")));
        }
        match valuation {
            Valuation::Infinite => {
                if unit_digits.iter().any(|&d| d != 0) {
                    return Err(Error::Normalization(
                        "zero element (valuation inf) must have no nonzero digits".into(),
                    ));
                }
                Ok(Self::zero(config))
            }
            Valuation::Finite(v) => {
                match unit_digits.first() {
                    None => {
                        return Err(Error::Normalization(format!(
                            "valuation {v} claimed with no digits"
                        )))
                    }
                    Some(0) => {
                        return Err(Error::Normalization(format!(
                            "leading digit is zero but valuation {v} was claimed"
                        )))
                    }
                    Some(_) => {}
                }
                if known == 0 {
                    return Err(Error::Normalization("known must be at least 1".into()));
                }
                let known = known.min(n);
                let mut digits = vec![0; n];
                for (slot, &d) in digits.iter_mut().zip(unit_digits.iter()).take(known) {
                    *slot = d;
                }
                Ok(Self {
                    config,
                    valuation: Valuation::Finite(v),
                    digits,
                    known,
                })
            }
        }
    }

    /// The image of an integer in `K` (for `F_p((t))` this is `n mod p`).
    pub fn from_i64(config: FieldConfig, n: i64) -> Self {
        let p = config.p as u64;
        match config.backend {
            Backend::Laurent => {
                let r = n.rem_euclid(p as i64) as u32;
                if r == 0 {
                    Self::zero(config)
                } else {
                    Self::new(config, Valuation::Finite(0), &[r]).expect("normalized digit")
                }
            }
            Backend::Padic => {
                if n == 0 {
                    return Self::zero(config);
                }
                let mut m = n.unsigned_abs();
                let mut v = 0i64;
                while m.is_multiple_of(p) {
                    m /= p;
                    v += 1;
                }
                let mut digits = Vec::new();
                while m > 0 {
                    digits.push((m % p) as u32);
                    m /= p;
                }
                let x = Self::new(config, Valuation::Finite(v), &digits).expect("normalized digits");
                if n < 0 {
                    x.neg()
                } else {
                    x
                }
            }
        }
    }

    pub fn config(&self) -> FieldConfig {
        self.config
    }

    pub fn valuation(&self) -> Valuation {
        self.valuation
    }

    /// `m` with `|x| = q^{-m}`; `+∞` for zero.
    pub fn abs_exp(&self) -> Valuation {
        self.valuation
    }

    pub fn abs(&self) -> f64 {
        self.valuation.abs_value(self.config.p)
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    /// The trusted unit digits.
    pub fn known_digits(&self) -> &[u32] {
        if self.is_zero() {
            &[]
        } else {
            &self.digits[..self.known]
        }
    }

    pub fn known(&self) -> usize {
        self.known
    }

    pub fn is_zero(&self) -> bool {
        self.valuation.is_infinite()
    }

    /// In the ring of integers `D = {|x| <= 1}`.
    pub fn is_integral(&self) -> bool {
        self.valuation >= Valuation::Finite(0)
    }

    pub fn is_unit(&self) -> bool {
        self.valuation == Valuation::Finite(0)
    }

    /// First untrusted absolute position, `None` (unbounded) for the exact zero.
    pub fn absolute_precision(&self) -> Option<i64> {
        self.valuation.finite().map(|v| v + self.known as i64)
    }

    /// Digit at absolute position `pos` (coefficient of `rho^pos`), zero outside the window.
    pub fn digit_at(&self, pos: i64) -> u32 {
        match self.valuation {
            Valuation::Infinite => 0,
            Valuation::Finite(v) => {
                let idx = pos - v;
                if idx < 0 || idx >= self.config.precision as i64 {
                    0
                } else {
                    self.digits[idx as usize]
                }
            }
        }
    }

    /// The image in the residue field `D / rho D`, or `None` off `D`.
    pub fn residue(&self) -> Option<u32> {
        match self.valuation {
            Valuation::Infinite => Some(0),
            Valuation::Finite(v) if v > 0 => Some(0),
            Valuation::Finite(0) => Some(self.digits[0]),
            Valuation::Finite(_) => None,
        }
    }

    /// Multiplies by `rho^m`; exact.
    pub fn shift(&self, m: i64) -> Self {
        let mut out = self.clone();
        if let Valuation::Finite(v) = self.valuation {
            out.valuation = Valuation::Finite(v + m);
        }
        out
    }

    fn check_config(&self, other: &Self) -> Result<()> {
        if self.config == other.config {
            Ok(())
        } else {
            Err(Error::ConfigMismatch)
        }
    }

    /// Normalizes the window `window[i] = digit at position lo + i` whose
    /// trusted part ends at absolute position `hi`.
    fn from_window(config: FieldConfig, lo: i64, window: &[u32], hi: i64) -> Option<Self> {
        let first = window.iter().position(|&d| d != 0)?;
        let v = lo + first as i64;
        let known = ((hi - v) as usize).min(config.precision);
        let mut digits = vec![0; config.precision];
        for (slot, &d) in digits.iter_mut().zip(&window[first..]).take(known) {
            *slot = d;
        }
        Some(Self {
            config,
            valuation: Valuation::Finite(v),
            digits,
            known,
        })
    }

    pub fn neg(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let p = self.config.p;
        let mut out = self.clone();
        match self.config.backend {
            Backend::Laurent => {
                for d in out.digits[..self.known].iter_mut() {
                    *d = (p - *d) % p;
                }
            }
            Backend::Padic => {
                // -u = (p - u_0) + sum (p - 1 - u_i) p^i, valid since u_0 != 0.
                out.digits[0] = p - self.digits[0];
                for d in out.digits[1..self.known].iter_mut() {
                    *d = p - 1 - *d;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_config(other)?;
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        let config = self.config;
        let p = config.p as u64;
        let vx = self.valuation.finite().unwrap();
        let vy = other.valuation.finite().unwrap();
        let lo = vx.min(vy);
        let hi = self
            .absolute_precision()
            .unwrap()
            .min(other.absolute_precision().unwrap());
        let len = (hi - lo) as usize;
        let mut window = vec![0u32; len];
        match config.backend {
            Backend::Padic => {
                let mut carry = 0u64;
                for (i, slot) in window.iter_mut().enumerate() {
                    let pos = lo + i as i64;
                    let s = self.digit_at(pos) as u64 + other.digit_at(pos) as u64 + carry;
                    *slot = (s % p) as u32;
                    carry = s / p;
                }
            }
            Backend::Laurent => {
                for (i, slot) in window.iter_mut().enumerate() {
                    let pos = lo + i as i64;
                    *slot = ((self.digit_at(pos) as u64 + other.digit_at(pos) as u64) % p) as u32;
                }
            }
        }
        match Self::from_window(config, lo, &window, hi) {
            Some(x) => Ok(x),
            None if self.known == config.precision && other.known == config.precision => {
                Ok(Self::zero(config))
            }
            None => Err(Error::PrecisionExhausted(format!(
                "sum cancels all {len} trusted digits"
            ))),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_config(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.config));
        }
        let config = self.config;
        let p = config.p as u128;
        let k = self.known.min(other.known);
        let mut acc = vec![0u128; k];
        for (i, &a) in self.digits[..k].iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.digits[..k - i].iter().enumerate() {
                acc[i + j] += a as u128 * b as u128;
            }
        }
        let mut digits = vec![0u32; config.precision];
        match config.backend {
            Backend::Padic => {
                let mut carry = 0u128;
                for (slot, &a) in digits.iter_mut().zip(acc.iter()) {
                    let t = a + carry;
                    *slot = (t % p) as u32;
                    carry = t / p;
                }
            }
            Backend::Laurent => {
                for (slot, &a) in digits.iter_mut().zip(acc.iter()) {
                    *slot = (a % p) as u32;
                }
            }
        }
        debug_assert!(digits[0] != 0);
        Ok(Self {
            config,
            valuation: self.valuation + other.valuation,
            digits,
            known: k,
        })
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.check_config(other)?;
        if other.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if self.is_zero() {
            return Ok(Self::zero(self.config));
        }
        let config = self.config;
        let p = config.p as i128;
        let k = self.known.min(other.known);
        let inv0 = mod_inverse(other.digits[0], config.p) as i128;
        let mut rem: Vec<i128> = self.digits[..k].iter().map(|&d| d as i128).collect();
        let divisor = &other.digits[..k];
        let mut digits = vec![0u32; config.precision];
        for i in 0..k {
            let qi = (rem[i].rem_euclid(p) * inv0) % p;
            digits[i] = qi as u32;
            if qi == 0 {
                continue;
            }
            match config.backend {
                Backend::Padic => {
                    let mut borrow = 0i128;
                    for (j, &d) in divisor[..k - i].iter().enumerate() {
                        let t = rem[i + j] - qi * d as i128 + borrow;
                        rem[i + j] = t.rem_euclid(p);
                        borrow = t.div_euclid(p);
                    }
                }
                Backend::Laurent => {
                    for (j, &d) in divisor[..k - i].iter().enumerate() {
                        rem[i + j] = (rem[i + j] - qi * d as i128).rem_euclid(p);
                    }
                }
            }
        }
        let v = self.valuation.finite().unwrap() - other.valuation.finite().unwrap();
        Ok(Self {
            config,
            valuation: Valuation::Finite(v),
            digits,
            known: k,
        })
    }

    pub fn inverse(&self) -> Result<Self> {
        self.config.one().div(self)
    }

    /// Agreement on every absolute position trusted by both operands.
    pub fn agrees_with(&self, other: &Self) -> bool {
        if self.config != other.config {
            return false;
        }
        match (self.valuation, other.valuation) {
            (Valuation::Infinite, Valuation::Infinite) => true,
            (Valuation::Finite(a), Valuation::Finite(b)) => {
                let hi = self
                    .absolute_precision()
                    .unwrap()
                    .min(other.absolute_precision().unwrap());
                (a.min(b)..hi).all(|pos| self.digit_at(pos) == other.digit_at(pos))
            }
            _ => false,
        }
    }

    /// The fixed additive character as a phase: `chi(x) = exp(2 pi i phase)`.
    ///
    /// Trivial on `D`, nontrivial on `rho^{-1} D`.
    pub fn character(&self) -> Result<PhaseFraction> {
        let p = self.config.p;
        let v = match self.valuation {
            Valuation::Infinite => return Ok(PhaseFraction::zero(p)),
            Valuation::Finite(v) if v >= 0 => return Ok(PhaseFraction::zero(p)),
            Valuation::Finite(v) => v,
        };
        let frac_len = (-v) as usize;
        match self.config.backend {
            Backend::Padic => {
                if frac_len > self.known {
                    return Err(Error::PrecisionExhausted(format!(
                        "phase needs {frac_len} digits but only {} are known",
                        self.known
                    )));
                }
                let mut num = 0u128;
                for &d in self.digits[..frac_len].iter().rev() {
                    num = num
                        .checked_mul(p as u128)
                        .and_then(|n| n.checked_add(d as u128))
                        .ok_or_else(|| Error::Domain("phase numerator overflows".into()))?;
                }
                PhaseFraction::new(p, num, frac_len as u32)
            }
            Backend::Laurent => {
                let idx = frac_len - 1;
                if idx >= self.known {
                    return Err(Error::PrecisionExhausted(
                        "coefficient of t^-1 lies outside the trusted digits".into(),
                    ));
                }
                PhaseFraction::new(p, self.digits[idx] as u128, 1)
            }
        }
    }

    /// Label of the coset `x + rho^k D` in the ball tree: the digits at positions `0..k`.
    pub fn ball_id(&self, level: usize) -> Result<Vec<u32>> {
        if !self.is_integral() {
            return Err(Error::Domain(format!(
                "ball_id needs an element of D, valuation is {}",
                self.valuation
            )));
        }
        if let Some(a) = self.absolute_precision() {
            if (level as i64) > a {
                return Err(Error::PrecisionExhausted(format!(
                    "ball level {level} exceeds absolute precision {a}"
                )));
            }
        }
        Ok((0..level as i64).map(|pos| self.digit_at(pos)).collect())
    }

    /// [`FieldElement::ball_id`] packed little-endian into an index in `0..p^level`.
    pub fn ball_index(&self, level: usize) -> Result<usize> {
        let p = self.config.p as usize;
        let id = self.ball_id(level)?;
        Ok(id.iter().rev().fold(0usize, |acc, &d| acc * p + d as usize))
    }

    pub fn to_record(&self) -> ElementRecord {
        ElementRecord {
            backend: self.config.backend,
            p: self.config.p,
            v: self.valuation,
            digits: self.known_digits().to_vec(),
        }
    }

    /// Parses a record at the given working precision; `known` is the number of digits supplied.
    pub fn from_record(record: &ElementRecord, precision: usize) -> Result<Self> {
        let config = FieldConfig::new(record.p, record.backend, precision)?;
        Self::from_record_in(record, config)
    }

    pub fn from_record_in(record: &ElementRecord, config: FieldConfig) -> Result<Self> {
        if record.p != config.p || record.backend != config.backend {
            return Err(Error::ConfigMismatch);
        }
        let known = record.digits.len().clamp(1, config.precision);
        Self::with_known(config, record.v, &record.digits, known)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.valuation {
            Valuation::Infinite => write!(f, "0"),
            Valuation::Finite(v) => {
                let digits: Vec<String> = self.known_digits().iter().map(u32::to_string).collect();
                write!(f, "rho^{v}*[{}]", digits.join(","))
            }
        }
    }
}

impl Serialize for FieldElement {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

/// Canonical JSON form: `{"backend":"qp"|"laurent","p":..,"v":int|"inf","digits":[..]}`,
/// digits little-endian from the valuation upward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub backend: Backend,
    pub p: u32,
    pub v: Valuation,
    pub digits: Vec<u32>,
}

pub(crate) fn mod_inverse(a: u32, p: u32) -> u32 {
    let (mut t, mut new_t) = (0i64, 1i64);
    let (mut r, mut new_r) = (p as i64, (a % p) as i64);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    debug_assert_eq!(r, 1, "{a} is not invertible mod {p}");
    t.rem_euclid(p as i64) as u32
}
