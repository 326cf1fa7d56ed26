//! Vectors and matrices over `K` with the max norm.
//!
//! `GL_n(D)` membership is decided on the reduction modulo `rho`, which needs
//! only the leading digit of each entry and is therefore exact. Determinant
//! valuations and inverses use elimination with minimal-valuation pivots.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldElement, Valuation};
use crate::rng::RngStream;
use crate::sampling;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UVector {
    config: FieldConfig,
    entries: Vec<FieldElement>,
}

impl UVector {
    pub fn new(entries: Vec<FieldElement>) -> Result<Self> {
        let config = entries
            .first()
            .ok_or_else(|| Error::Domain("vectors must have at least one entry".into()))?
            .config();
        if entries.iter().any(|e| e.config() != config) {
            return Err(Error::ConfigMismatch);
        }
        Ok(Self { config, entries })
    }

    pub fn zeros(config: FieldConfig, n: usize) -> Self {
        Self {
            config,
            entries: vec![config.zero(); n],
        }
    }

    /// The coordinate vector `e_i` (0-based).
    pub fn basis(config: FieldConfig, n: usize, i: usize) -> Self {
        let mut v = Self::zeros(config, n);
        v.entries[i] = config.one();
        v
    }

    pub fn config(&self) -> FieldConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[FieldElement] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<FieldElement> {
        self.entries
    }

    pub fn get(&self, i: usize) -> &FieldElement {
        &self.entries[i]
    }

    /// `m` with `||x|| = q^{-m}`: the minimum entry valuation.
    pub fn norm_exp(&self) -> Valuation {
        self.entries
            .iter()
            .map(FieldElement::abs_exp)
            .min()
            .unwrap_or(Valuation::Infinite)
    }

    pub fn is_zero(&self) -> bool {
        self.norm_exp().is_infinite()
    }

    pub fn shift(&self, m: i64) -> Self {
        Self {
            config: self.config,
            entries: self.entries.iter().map(|e| e.shift(m)).collect(),
        }
    }

    pub fn prefix(&self, k: usize) -> Self {
        Self {
            config: self.config,
            entries: self.entries[..k].to_vec(),
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.config != other.config {
            return Err(Error::ConfigMismatch);
        }
        if self.dim() != other.dim() {
            return Err(Error::Domain(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: self.config,
            entries,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: self.config,
            entries,
        })
    }

    pub fn scale(&self, alpha: &FieldElement) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|e| e.mul(alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: self.config,
            entries,
        })
    }

    pub fn dot(&self, other: &Self) -> Result<FieldElement> {
        self.check_dim(other)?;
        let mut acc = self.config.zero();
        for (a, b) in self.entries.iter().zip(&other.entries) {
            acc = acc.add(&a.mul(b)?)?;
        }
        Ok(acc)
    }

    pub fn agrees_with(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.agrees_with(b))
    }
}

impl Serialize for UVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

/// A dense matrix over `K`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UMatrix {
    config: FieldConfig,
    rows: usize,
    cols: usize,
    entries: Vec<FieldElement>,
}

impl UMatrix {
    pub fn from_rows(rows: Vec<Vec<FieldElement>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err(Error::Domain("matrices must be nonempty".into()));
        }
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Domain("ragged matrix rows".into()));
        }
        let config = rows[0][0].config();
        let entries: Vec<FieldElement> = rows.into_iter().flatten().collect();
        if entries.iter().any(|e| e.config() != config) {
            return Err(Error::ConfigMismatch);
        }
        Ok(Self {
            config,
            rows: nrows,
            cols: ncols,
            entries,
        })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[UVector]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::Domain("no columns".into()))?;
        let n = first.dim();
        if columns.iter().any(|c| c.dim() != n) {
            return Err(Error::Domain("columns differ in dimension".into()));
        }
        let rows = (0..n)
            .map(|i| columns.iter().map(|c| c.get(i).clone()).collect())
            .collect();
        Self::from_rows(rows)
    }

    pub fn identity(config: FieldConfig, n: usize) -> Self {
        let mut m = Self {
            config,
            rows: n,
            cols: n,
            entries: vec![config.zero(); n * n],
        };
        for i in 0..n {
            m.entries[i * n + i] = config.one();
        }
        m
    }

    pub fn diagonal(diag: Vec<FieldElement>) -> Result<Self> {
        let n = diag.len();
        let config = diag
            .first()
            .ok_or_else(|| Error::Domain("empty diagonal".into()))?
            .config();
        let rows = diag
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let mut row = vec![config.zero(); n];
                row[i] = d;
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn config(&self) -> FieldConfig {
        self.config
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &FieldElement {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[FieldElement] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> UVector {
        UVector {
            config: self.config,
            entries: self.entries[i * self.cols..(i + 1) * self.cols].to_vec(),
        }
    }

    pub fn column(&self, j: usize) -> UVector {
        UVector {
            config: self.config,
            entries: (0..self.rows).map(|i| self.get(i, j).clone()).collect(),
        }
    }

    pub fn columns(&self) -> Vec<UVector> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn row_vectors(&self) -> Vec<UVector> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(self.get(i, j).clone());
            }
        }
        Self {
            config: self.config,
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    /// `U x`.
    pub fn apply(&self, x: &UVector) -> Result<UVector> {
        if x.config() != self.config {
            return Err(Error::ConfigMismatch);
        }
        if x.dim() != self.cols {
            return Err(Error::Domain(format!(
                "cannot apply a {}x{} matrix to a vector of length {}",
                self.rows,
                self.cols,
                x.dim()
            )));
        }
        let entries = (0..self.rows)
            .map(|i| self.row(i).dot(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(UVector {
            config: self.config,
            entries,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.config != other.config {
            return Err(Error::ConfigMismatch);
        }
        if self.cols != other.rows {
            return Err(Error::Domain("inner dimensions differ".into()));
        }
        let cols: Vec<UVector> = other
            .columns()
            .iter()
            .map(|c| self.apply(c))
            .collect::<Result<_>>()?;
        Self::from_columns(&cols)
    }

    fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::Domain(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }

    /// Reduction modulo `rho`, when every entry lies in `D`.
    pub fn residue_matrix(&self) -> Option<Vec<Vec<u32>>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j).residue()).collect())
            .collect()
    }

    /// Membership in `GL_n(D)`: entries in `D` and the residue matrix invertible over `F_p`.
    pub fn is_gl(&self) -> Result<bool> {
        let n = self.require_square()?;
        Ok(match self.residue_matrix() {
            Some(m) => fp_rank(m, self.config.p()) == n,
            None => false,
        })
    }

    /// Valuation of `det U`.
    pub fn det_exp(&self) -> Result<Valuation> {
        let n = self.require_square()?;
        let mut a = self.entries.clone();
        let mut total = 0i64;
        for c in 0..n {
            let pivot = (c..n)
                .min_by_key(|&r| a[r * n + c].abs_exp())
                .expect("nonempty range");
            let pv = match a[pivot * n + c].abs_exp() {
                Valuation::Infinite => return Ok(Valuation::Infinite),
                Valuation::Finite(v) => v,
            };
            total += pv;
            if pivot != c {
                for j in 0..n {
                    a.swap(pivot * n + j, c * n + j);
                }
            }
            let piv = a[c * n + c].clone();
            for r in c + 1..n {
                if a[r * n + c].is_zero() {
                    continue;
                }
                let factor = a[r * n + c].div(&piv)?;
                a[r * n + c] = self.config.zero();
                for j in c + 1..n {
                    let t = factor.mul(&a[c * n + j])?;
                    a[r * n + j] = a[r * n + j].sub(&t)?;
                }
            }
        }
        Ok(Valuation::Finite(total))
    }

    /// Gauss-Jordan inverse with minimal-valuation pivots.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.require_square()?;
        let zero = self.config.zero();
        let mut a = self.entries.clone();
        let mut inv = Self::identity(self.config, n).entries;
        for c in 0..n {
            let pivot = (c..n)
                .min_by_key(|&r| a[r * n + c].abs_exp())
                .expect("nonempty range");
            if a[pivot * n + c].is_zero() {
                return Err(Error::Domain("matrix is singular".into()));
            }
            if pivot != c {
                for j in 0..n {
                    a.swap(pivot * n + j, c * n + j);
                    inv.swap(pivot * n + j, c * n + j);
                }
            }
            let piv_inv = a[c * n + c].inverse()?;
            for j in 0..n {
                a[c * n + j] = a[c * n + j].mul(&piv_inv)?;
                inv[c * n + j] = inv[c * n + j].mul(&piv_inv)?;
            }
            a[c * n + c] = self.config.one();
            for r in 0..n {
                if r == c || a[r * n + c].is_zero() {
                    continue;
                }
                let factor = a[r * n + c].clone();
                for j in 0..n {
                    if j != c {
                        let t = factor.mul(&a[c * n + j])?;
                        a[r * n + j] = a[r * n + j].sub(&t)?;
                    }
                    let t = factor.mul(&inv[c * n + j])?;
                    inv[r * n + j] = inv[r * n + j].sub(&t)?;
                }
                a[r * n + c] = zero.clone();
            }
        }
        Ok(Self {
            config: self.config,
            rows: n,
            cols: n,
            entries: inv,
        })
    }

    /// Looks for `x` with `||U x|| != ||x||`: the coordinate vectors, a lift
    /// of a kernel vector of the residue matrix when it is singular, then
    /// `trials` vectors drawn from `gamma_n`.
    pub fn is_isometry_witnessed(&self, rng: &mut RngStream, trials: usize) -> Result<IsometryCheck> {
        let n = self.require_square()?;
        let kernel = self
            .residue_matrix()
            .and_then(|m| fp_kernel_vector(m, self.config.p()))
            .map(|v| lift(self.config, &v));
        let probes = (0..n)
            .map(|i| UVector::basis(self.config, n, i))
            .chain(kernel)
            .chain((0..trials).map(|_| sampling::sample_gamma_n(rng, self.config, n)));
        for x in probes {
            let ux = self.apply(&x)?;
            if ux.norm_exp() != x.norm_exp() {
                return Ok(IsometryCheck {
                    isometry: false,
                    witness: Some(x),
                });
            }
        }
        Ok(IsometryCheck {
            isometry: true,
            witness: None,
        })
    }

    pub fn agrees_with(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.agrees_with(b))
    }
}

impl Serialize for UMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[FieldElement]> = self.entries.chunks(self.cols).collect();
        rows.serialize(serializer)
    }
}

#[derive(Debug, Clone)]
pub struct IsometryCheck {
    pub isometry: bool,
    pub witness: Option<UVector>,
}

/// Checks `||sum alpha_i x_i|| = max |alpha_i|`: first with the unit tuples
/// (so every `x_i` must have norm 1), then with a lifted residue dependency
/// among the `x_i` if one exists, then with `trials` random tuples whose
/// entries are `gamma` draws.
pub fn is_orthonormal(vectors: &[UVector], rng: &mut RngStream, trials: usize) -> Result<bool> {
    let first = match vectors.first() {
        Some(v) => v,
        None => return Ok(true),
    };
    let config = first.config();
    let n = first.dim();
    if vectors.iter().any(|v| v.dim() != n || v.config() != config) {
        return Err(Error::Domain("vectors must share dimension and field".into()));
    }
    if vectors.iter().any(|v| v.norm_exp() != Valuation::Finite(0)) {
        return Ok(false);
    }
    let residues: Vec<Vec<u32>> = (0..n)
        .map(|i| vectors.iter().map(|v| v.get(i).residue().expect("unit norm")).collect())
        .collect();
    let dependency = fp_kernel_vector(residues, config.p()).map(|d| lift(config, &d).into_entries());
    let random = (0..trials).map(|_| {
        (0..vectors.len())
            .map(|_| sampling::sample_gamma(rng, config))
            .collect::<Vec<FieldElement>>()
    });
    for alphas in dependency.into_iter().chain(random) {
        let mut combo = UVector::zeros(config, n);
        for (a, v) in alphas.iter().zip(vectors) {
            combo = combo.add(&v.scale(a)?)?;
        }
        let expected = alphas.iter().map(FieldElement::abs_exp).min().unwrap();
        if combo.norm_exp() != expected {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A matrix in `GL_n(D)` whose first column is `x`; requires `||x|| = 1`.
///
/// Column 1 is `x`, the others are `e_j` for `j != i` in ascending order,
/// where `i` is the first coordinate with `|x_i| = 1`.
pub fn carry_to(x: &UVector) -> Result<UMatrix> {
    if x.norm_exp() != Valuation::Finite(0) {
        return Err(Error::Domain(format!(
            "carry_to needs a unit vector, norm exponent is {}",
            x.norm_exp()
        )));
    }
    let n = x.dim();
    let config = x.config();
    let i = x
        .entries()
        .iter()
        .position(FieldElement::is_unit)
        .expect("a unit coordinate exists");
    let mut columns = vec![x.clone()];
    columns.extend((0..n).filter(|&j| j != i).map(|j| UVector::basis(config, n, j)));
    let u = UMatrix::from_columns(&columns)?;
    debug_assert!(u.is_gl()?);
    Ok(u)
}

/// Polar form `x = R theta` with `R = rho^m`, `||theta|| = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polar {
    /// `m` with `R = rho^m`; `Infinite` means `R = 0`.
    pub radius: Valuation,
    /// `None` for `x = 0`: the direction must then be drawn from `sigma_n` by the caller.
    pub theta: Option<UVector>,
}

pub fn polar(x: &UVector) -> Polar {
    match x.norm_exp() {
        Valuation::Infinite => Polar {
            radius: Valuation::Infinite,
            theta: None,
        },
        Valuation::Finite(m) => Polar {
            radius: Valuation::Finite(m),
            theta: Some(x.shift(-m)),
        },
    }
}

/// The residue digits as an exact vector over `D`.
fn lift(config: FieldConfig, digits: &[u32]) -> UVector {
    UVector::new(digits.iter().map(|&d| FieldElement::from_i64(config, d as i64)).collect())
        .expect("nonempty")
}

/// A nonzero `z` with `m z = 0` over `F_p`, if the columns are dependent.
pub fn fp_kernel_vector(mut m: Vec<Vec<u32>>, p: u32) -> Option<Vec<u32>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let p64 = p as u64;
    let mut pivots = Vec::new();
    let mut rank = 0;
    for c in 0..cols {
        let Some(pr) = (rank..rows).find(|&r| m[r][c] != 0) else {
            continue;
        };
        m.swap(rank, pr);
        let inv = crate::field::mod_inverse(m[rank][c], p) as u64;
        for j in c..cols {
            m[rank][j] = (m[rank][j] as u64 * inv % p64) as u32;
        }
        for r in 0..rows {
            if r != rank && m[r][c] != 0 {
                let f = m[r][c] as u64;
                for j in c..cols {
                    let sub = f * m[rank][j] as u64 % p64;
                    m[r][j] = ((m[r][j] as u64 + p64 - sub) % p64) as u32;
                }
            }
        }
        pivots.push(c);
        rank += 1;
    }
    let free = (0..cols).find(|c| !pivots.contains(c))?;
    let mut z = vec![0u32; cols];
    z[free] = 1;
    for (r, &c) in pivots.iter().enumerate() {
        z[c] = ((p64 - m[r][free] as u64) % p64) as u32;
    }
    Some(z)
}

/// Rank of a matrix over `F_p`.
pub fn fp_rank(mut m: Vec<Vec<u32>>, p: u32) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let p64 = p as u64;
    let mut rank = 0;
    for c in 0..cols {
        let Some(pr) = (rank..rows).find(|&r| m[r][c] != 0) else {
            continue;
        };
        m.swap(rank, pr);
        let inv = crate::field::mod_inverse(m[rank][c], p) as u64;
        for r in 0..rows {
            if r != rank && m[r][c] != 0 {
                let f = m[r][c] as u64 * inv % p64;
                for j in c..cols {
                    let sub = f * m[rank][j] as u64 % p64;
                    m[r][j] = ((m[r][j] as u64 + p64 - sub) % p64) as u32;
                }
            }
        }
        rank += 1;
    }
    rank
}
