//! Seeded samplers for the Haar-type laws on `K`, `K^n` and `GL_n(D)`.
//!
//! `gamma` is Haar measure on `D`, `gamma_n` its product, `sigma_n` is
//! `gamma_n` conditioned on the unit sphere, Haar on `GL_n(D)` is the
//! i.i.d.-`gamma` matrix law conditioned on `GL_n(D)`. The two conditioned
//! laws are sampled by rejection, so acceptance counts are exposed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldElement, Valuation};
use crate::linalg::{UMatrix, UVector};
use crate::rng::RngStream;

/// Tolerance on the total mass of a [`ScaleLaw`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Probability law of the scale `tau` on `{rho^m : m in Z} ∪ {0}`.
///
/// JSON form: `{"atoms":{"m":prob,...},"zero":prob}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScaleLawRecord", into = "ScaleLawRecord")]
pub struct ScaleLaw {
    atoms: BTreeMap<i64, f64>,
    zero: f64,
}

#[derive(Serialize, Deserialize)]
struct ScaleLawRecord {
    atoms: BTreeMap<i64, f64>,
    #[serde(default)]
    zero: f64,
}

impl TryFrom<ScaleLawRecord> for ScaleLaw {
    type Error = Error;

    fn try_from(r: ScaleLawRecord) -> Result<Self> {
        ScaleLaw::new(r.atoms, r.zero)
    }
}

impl From<ScaleLaw> for ScaleLawRecord {
    fn from(l: ScaleLaw) -> Self {
        ScaleLawRecord {
            atoms: l.atoms,
            zero: l.zero,
        }
    }
}

impl ScaleLaw {
    pub fn new(atoms: BTreeMap<i64, f64>, zero: f64) -> Result<Self> {
        let masses = atoms.values().chain(std::iter::once(&zero));
        for &w in masses.clone() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidLaw(format!("mass {w} is not a probability")));
            }
        }
        let total: f64 = masses.sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidLaw(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { atoms, zero })
    }

    /// Point mass at `rho^m`.
    pub fn point(m: i64) -> Self {
        Self {
            atoms: BTreeMap::from([(m, 1.0)]),
            zero: 0.0,
        }
    }

    /// Point mass at `0`.
    pub fn zero_atom() -> Self {
        Self {
            atoms: BTreeMap::new(),
            zero: 1.0,
        }
    }

    pub fn atoms(&self) -> &BTreeMap<i64, f64> {
        &self.atoms
    }

    pub fn zero_mass(&self) -> f64 {
        self.zero
    }

    pub fn mass(&self, scale: Valuation) -> f64 {
        match scale {
            Valuation::Infinite => self.zero,
            Valuation::Finite(m) => self.atoms.get(&m).copied().unwrap_or(0.0),
        }
    }

    /// Smallest exponent with positive mass, i.e. the largest possible `|tau|`.
    pub fn support_min(&self) -> Option<i64> {
        self.atoms.iter().find(|(_, &w)| w > 0.0).map(|(&m, _)| m)
    }

    /// The support points with positive mass, finite exponents first.
    pub fn support(&self) -> Vec<Valuation> {
        let mut out: Vec<Valuation> = self
            .atoms
            .iter()
            .filter(|(_, &w)| w > 0.0)
            .map(|(&m, _)| Valuation::Finite(m))
            .collect();
        if self.zero > 0.0 {
            out.push(Valuation::Infinite);
        }
        out
    }

    pub fn sample(&self, rng: &mut RngStream) -> Valuation {
        let u = rng.unit_f64();
        let mut acc = 0.0;
        let mut last = Valuation::Infinite;
        for (&m, &w) in &self.atoms {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Valuation::Finite(m);
            if u < acc {
                return last;
            }
        }
        if self.zero > 0.0 {
            Valuation::Infinite
        } else {
            last
        }
    }
}

/// One draw from `gamma`, Haar measure on `D`.
///
/// Digits are i.i.d. uniform from position 0 upward; leading zero digits only
/// raise the valuation, after which `N` digits are drawn, so every draw
/// carries full precision.
pub fn sample_gamma(rng: &mut RngStream, config: FieldConfig) -> FieldElement {
    let p = config.p();
    let mut v = 0i64;
    let lead = loop {
        let d = rng.digit(p);
        if d != 0 {
            break d;
        }
        v += 1;
    };
    let mut digits = Vec::with_capacity(config.precision());
    digits.push(lead);
    digits.extend((1..config.precision()).map(|_| rng.digit(p)));
    FieldElement::new(config, Valuation::Finite(v), &digits).expect("normalized by construction")
}

pub fn sample_gamma_n(rng: &mut RngStream, config: FieldConfig, n: usize) -> UVector {
    UVector::new((0..n).map(|_| sample_gamma(rng, config)).collect()).expect("n >= 1")
}

/// A draw from `sigma_n` together with the number of `gamma_n` attempts used.
pub fn sample_sigma_counted(rng: &mut RngStream, config: FieldConfig, n: usize) -> (UVector, u64) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let x = sample_gamma_n(rng, config, n);
        if x.entries().iter().any(FieldElement::is_unit) {
            return (x, attempts);
        }
    }
}

pub fn sample_sigma(rng: &mut RngStream, config: FieldConfig, n: usize) -> UVector {
    sample_sigma_counted(rng, config, n).0
}

/// One rejection attempt for Haar measure on `GL_n(D)`: `Some` iff accepted.
pub fn try_gl_haar(rng: &mut RngStream, config: FieldConfig, n: usize) -> Option<UMatrix> {
    let rows = (0..n)
        .map(|_| (0..n).map(|_| sample_gamma(rng, config)).collect())
        .collect();
    let m = UMatrix::from_rows(rows).expect("n >= 1");
    m.is_gl().expect("square").then_some(m)
}

pub fn sample_gl_haar_counted(rng: &mut RngStream, config: FieldConfig, n: usize) -> (UMatrix, u64) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        if let Some(m) = try_gl_haar(rng, config, n) {
            return (m, attempts);
        }
    }
}

pub fn sample_gl_haar(rng: &mut RngStream, config: FieldConfig, n: usize) -> UMatrix {
    sample_gl_haar_counted(rng, config, n).0
}

/// Haar measure on the compact module `rho^m D`, or the point mass at 0 for `Infinite`.
pub fn sample_k_gaussian(rng: &mut RngStream, config: FieldConfig, module: Valuation) -> FieldElement {
    match module {
        Valuation::Infinite => config.zero(),
        Valuation::Finite(m) => sample_gamma(rng, config).shift(m),
    }
}

/// The first `n` terms `tau * eta_i` of a rotatable sequence.
pub fn sample_rotatable(rng: &mut RngStream, config: FieldConfig, pi: &ScaleLaw, n: usize) -> UVector {
    let tau = pi.sample(rng);
    UVector::new((0..n).map(|_| sample_k_gaussian(rng, config, tau)).collect()).expect("n >= 1")
}

/// `tau_n`: the exponent `m` with `||x|| = q^{-m}`; `Infinite` for the zero vector.
pub fn estimate_tau(xs: &UVector) -> Valuation {
    xs.norm_exp()
}

/// Draws per stream in [`draw_batch`].
pub const BATCH_CHUNK: usize = 2048;

/// `count` draws of `f`, chunked onto forked streams of `(seed, stream)` and
/// generated in parallel. The output depends only on the arguments, never on
/// the number of worker threads.
pub fn draw_batch<T, F>(seed: u64, stream: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync,
{
    let root = RngStream::new(seed, stream);
    let chunks = count.div_ceil(BATCH_CHUNK);
    let per_chunk: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = root.fork(c as u64);
            let len = BATCH_CHUNK.min(count - c * BATCH_CHUNK);
            (0..len).map(|_| f(&mut rng)).collect()
        })
        .collect();
    per_chunk.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_law_validation() {
        assert!(ScaleLaw::new(BTreeMap::from([(0, 0.5)]), 0.4).is_err());
        assert!(ScaleLaw::new(BTreeMap::from([(0, -0.5), (1, 1.5)]), 0.0).is_err());
        assert!(ScaleLaw::new(BTreeMap::from([(0, 0.5), (1, 0.5)]), 0.0).is_ok());
        let json = r#"{"atoms":{"0":0.5,"1":0.25},"zero":0.25}"#;
        let law: ScaleLaw = serde_json::from_str(json).unwrap();
        assert_eq!(law.mass(Valuation::Finite(1)), 0.25);
        assert_eq!(law.mass(Valuation::Infinite), 0.25);
        assert_eq!(serde_json::to_string(&law).unwrap(), json);
        assert!(serde_json::from_str::<ScaleLaw>(r#"{"atoms":{"0":0.7}}"#).is_err());
    }

    #[test]
    fn gamma_draws_lie_in_d() {
        let c = FieldConfig::padic(3).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..1000 {
            let x = sample_gamma(&mut rng, c);
            assert!(x.is_integral());
            assert_eq!(x.known(), c.precision());
        }
    }

    #[test]
    fn sigma_draws_are_unit_vectors() {
        let c = FieldConfig::padic(2).unwrap();
        let mut rng = RngStream::new(5, 1);
        for _ in 0..500 {
            assert_eq!(sample_sigma(&mut rng, c, 3).norm_exp(), Valuation::Finite(0));
        }
    }

    #[test]
    fn gl_haar_draws_are_invertible() {
        let c = FieldConfig::padic(2).unwrap();
        let mut rng = RngStream::new(5, 2);
        for _ in 0..200 {
            assert!(sample_gl_haar(&mut rng, c, 3).is_gl().unwrap());
        }
    }

    #[test]
    fn k_gaussian_modules() {
        let c = FieldConfig::laurent(3).unwrap();
        let mut rng = RngStream::new(5, 3);
        for _ in 0..500 {
            assert!(sample_k_gaussian(&mut rng, c, Valuation::Finite(2)).abs_exp() >= Valuation::Finite(2));
            assert!(sample_k_gaussian(&mut rng, c, Valuation::Infinite).is_zero());
        }
    }

    #[test]
    fn rotatable_degenerate_scales() {
        let c = FieldConfig::padic(2).unwrap();
        let mut rng = RngStream::new(5, 4);
        let zero = sample_rotatable(&mut rng, c, &ScaleLaw::zero_atom(), 4);
        assert!(zero.is_zero());
        assert_eq!(estimate_tau(&zero), Valuation::Infinite);
        let x = sample_rotatable(&mut rng, c, &ScaleLaw::point(0), 4);
        assert!(x.norm_exp() >= Valuation::Finite(0));
    }

    #[test]
    fn batches_do_not_depend_on_thread_count() {
        let c = FieldConfig::padic(5).unwrap();
        let a = draw_batch(9, 1, 5000, |r| sample_gamma(r, c));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| draw_batch(9, 1, 5000, |r| sample_gamma(r, c)));
        assert_eq!(a, b);
        assert_eq!(a.len(), 5000);
    }
}
