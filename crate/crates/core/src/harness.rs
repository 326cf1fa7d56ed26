//! Statistical and spectral checks: chi-square tests on ball histograms,
//! indicator-level total variation, empirical characteristic functions, Gram
//! matrix certificates and a search for non-PSD witnesses.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldElement, Valuation};
use crate::laws::RadialProfile;
use crate::linalg::UVector;
use crate::rng::RngStream;
use crate::sampling::{draw_batch, sample_gamma_n, sample_rotatable, sample_sigma, ScaleLaw};

/// Smallest expected count allowed in a chi-square cell.
pub const MIN_EXPECTED: f64 = 5.0;

/// Minimum eigenvalue above which a Gram matrix counts as PSD.
pub const PSD_TOLERANCE: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub cells: usize,
    pub samples: u64,
}

fn chi_square_tail(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    if !statistic.is_finite() {
        return 0.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    dist.sf(statistic).clamp(0.0, 1.0)
}

/// Pearson test of `observed` against the fully specified law `probs`.
///
/// Cells of probability zero are dropped; a single observation in one of them
/// makes the statistic infinite.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<GofReport> {
    if observed.len() != probs.len() {
        return Err(Error::Domain(format!(
            "{} observed cells against {} law cells",
            observed.len(),
            probs.len()
        )));
    }
    let samples: u64 = observed.iter().sum();
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            if o > 0 {
                statistic = f64::INFINITY;
            }
            continue;
        }
        let e = p * samples as f64;
        if e < MIN_EXPECTED {
            return Err(Error::Domain(format!(
                "expected count {e:.2} below {MIN_EXPECTED} in some cell; reduce the level or add samples"
            )));
        }
        cells += 1;
        statistic += (o as f64 - e).powi(2) / e;
    }
    let dof = cells.saturating_sub(1);
    Ok(GofReport {
        statistic,
        dof,
        p_value: chi_square_tail(statistic, dof),
        cells,
        samples,
    })
}

/// Two-sample homogeneity test on paired histograms.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<GofReport> {
    chi_square_independence(&[a.to_vec(), b.to_vec()])
}

/// Pearson independence test on a contingency table. Empty rows and columns
/// are dropped.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<GofReport> {
    let cols = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != cols) {
        return Err(Error::Domain("ragged contingency table".into()));
    }
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let total: u64 = row_sums.iter().sum();
    let rows_used: Vec<usize> = (0..table.len()).filter(|&i| row_sums[i] > 0).collect();
    let cols_used: Vec<usize> = (0..cols).filter(|&j| col_sums[j] > 0).collect();
    let mut statistic = 0.0;
    for &i in &rows_used {
        for &j in &cols_used {
            let e = row_sums[i] as f64 * col_sums[j] as f64 / total as f64;
            if e < MIN_EXPECTED {
                return Err(Error::Domain(format!(
                    "expected count {e:.2} below {MIN_EXPECTED} in cell ({i}, {j}); reduce the level or add samples"
                )));
            }
            statistic += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    let dof = rows_used.len().saturating_sub(1) * cols_used.len().saturating_sub(1);
    Ok(GofReport {
        statistic,
        dof,
        p_value: chi_square_tail(statistic, dof),
        cells: rows_used.len() * cols_used.len(),
        samples: total,
    })
}

fn cell_count(q: u32, level: usize, k: usize) -> Result<usize> {
    (q as usize)
        .checked_pow((level * k) as u32)
        .filter(|&c| c <= 1 << 24)
        .ok_or_else(|| Error::Domain(format!("q^(level * k) = {q}^{} cells is too many", level * k)))
}

/// Histogram cell of the first `k` coordinates of `x` at ball level `level`.
pub fn ball_cell(x: &UVector, level: usize, k: usize) -> Result<usize> {
    let base = (x.config().q() as usize).pow(level as u32);
    let mut idx = 0;
    for i in (0..k).rev() {
        idx = idx * base + x.get(i).ball_index(level)?;
    }
    Ok(idx)
}

pub fn ball_histogram(samples: &[UVector], level: usize, k: usize) -> Result<Vec<u64>> {
    let q = samples
        .first()
        .map(|x| x.config().q())
        .ok_or_else(|| Error::Domain("no samples".into()))?;
    let mut counts = vec![0u64; cell_count(q, level, k)?];
    for x in samples {
        counts[ball_cell(x, level, k)?] += 1;
    }
    Ok(counts)
}

/// Chi-square test of the level-`level` ball histogram of `samples` (all
/// coordinates) against `law`, indexed as in [`ball_cell`].
pub fn chi_square_balls(samples: &[UVector], level: usize, law: &[f64]) -> Result<GofReport> {
    let k = samples.first().map_or(0, UVector::dim);
    chi_square_gof(&ball_histogram(samples, level, k)?, law)
}

pub fn chi_square_uniform(samples: &[UVector], level: usize) -> Result<GofReport> {
    let first = samples.first().ok_or_else(|| Error::Domain("no samples".into()))?;
    let law = uniform_cells(first.config().q(), first.dim(), level)?;
    chi_square_balls(samples, level, &law)
}

/// `gamma_k` discretized at ball level `level`.
pub fn uniform_cells(q: u32, k: usize, level: usize) -> Result<Vec<f64>> {
    let cells = cell_count(q, level, k)?;
    Ok(vec![1.0 / cells as f64; cells])
}

fn leading_digits_zero(cell: usize, q: usize, level: usize, k: usize) -> bool {
    let base = q.pow(level as u32);
    let mut c = cell;
    for _ in 0..k {
        if !(c % base).is_multiple_of(q) {
            return false;
        }
        c /= base;
    }
    true
}

/// Law of the first `k` coordinates of `sigma_n` at ball level `level >= 1`.
pub fn sigma_marginal_cells(q: u32, n: usize, k: usize, level: usize) -> Result<Vec<f64>> {
    if level == 0 || k == 0 || k > n {
        return Err(Error::Domain(format!("need level >= 1 and 1 <= k <= n, got level {level}, k {k}, n {n}")));
    }
    let cells = cell_count(q, level, k)?;
    let qf = q as f64;
    let sphere = 1.0 - qf.powi(-(n as i32));
    let base = 1.0 / cells as f64;
    let tail_unit = 1.0 - qf.powi(-((n - k) as i32));
    Ok((0..cells)
        .map(|c| {
            if leading_digits_zero(c, q as usize, level, k) {
                base * tail_unit / sphere
            } else {
                base / sphere
            }
        })
        .collect())
}

/// Law of `sigma_n` at ball level `level >= 1`.
pub fn sphere_cells(q: u32, n: usize, level: usize) -> Result<Vec<f64>> {
    sigma_marginal_cells(q, n, n, level)
}

/// Bit `i` is set iff coordinate `i < k` of `x` is a unit.
pub fn unit_pattern(x: &UVector, k: usize) -> usize {
    (0..k).filter(|&i| x.get(i).is_unit()).fold(0, |acc, i| acc | 1 << i)
}

pub fn unit_pattern_counts(samples: &[UVector], k: usize) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << k];
    for x in samples {
        counts[unit_pattern(x, k)] += 1;
    }
    counts
}

/// Valuation pattern of the first `k` coordinates: each `v(x_i) - base`
/// clamped to `0..levels`, zero entries in the top level.
pub fn valuation_pattern(x: &UVector, k: usize, base: i64, levels: usize) -> usize {
    let top = levels as i64 - 1;
    (0..k).rev().fold(0, |acc, i| {
        let slot = match x.get(i).valuation() {
            Valuation::Infinite => top,
            Valuation::Finite(v) => (v - base).clamp(0, top),
        };
        acc * levels + slot as usize
    })
}

pub fn tv_from_counts(a: &[u64], b: &[u64]) -> f64 {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / na as f64 - y as f64 / nb as f64).abs())
        .sum::<f64>()
}

/// Plug-in total variation between the unit-indicator pattern laws of the
/// first `k` coordinates of two samples.
pub fn empirical_tv_indicator(samples_a: &[UVector], samples_b: &[UVector], k: usize) -> f64 {
    tv_from_counts(&unit_pattern_counts(samples_a, k), &unit_pattern_counts(samples_b, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub estimate: f64,
    pub se: f64,
    pub replicates: usize,
}

fn multinomial(rng: &mut RngStream, n: u64, counts: &[u64]) -> Vec<u64> {
    let total: u64 = counts.iter().sum();
    let mut left = n;
    let mut mass = total;
    counts
        .iter()
        .map(|&c| {
            if left == 0 || mass == 0 {
                return 0;
            }
            let p = (c as f64 / mass as f64).min(1.0);
            mass -= c;
            let draw = Binomial::new(left, p).expect("p in [0, 1]").sample(rng);
            left -= draw;
            draw
        })
        .collect()
}

/// Plug-in TV with a parametric bootstrap standard error.
pub fn tv_bootstrap(a: &[u64], b: &[u64], replicates: usize, rng: &mut RngStream) -> TvEstimate {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let estimate = tv_from_counts(a, b);
    let reps: Vec<f64> = (0..replicates)
        .map(|_| tv_from_counts(&multinomial(rng, na, a), &multinomial(rng, nb, b)))
        .collect();
    let mean = reps.iter().sum::<f64>() / replicates as f64;
    let var = reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (replicates.max(2) - 1) as f64;
    TvEstimate {
        estimate,
        se: var.sqrt(),
        replicates,
    }
}

/// Split-sample lower estimate of TV: the set `A = {p_a > p_b}` is chosen on
/// the first halves and `P_a(A) - P_b(A)` is estimated on the second halves,
/// which is unbiased for a quantity at most the true TV.
pub fn tv_split(pattern_a: &[usize], pattern_b: &[usize], cells: usize) -> TvEstimate {
    let hist = |xs: &[usize]| {
        let mut h = vec![0u64; cells];
        for &x in xs {
            h[x] += 1;
        }
        h
    };
    let (a1, a2) = pattern_a.split_at(pattern_a.len() / 2);
    let (b1, b2) = pattern_b.split_at(pattern_b.len() / 2);
    let (ha1, hb1) = (hist(a1), hist(b1));
    let set: Vec<bool> = (0..cells)
        .map(|c| ha1[c] as f64 / a1.len() as f64 > hb1[c] as f64 / b1.len() as f64)
        .collect();
    let frac = |xs: &[usize]| xs.iter().filter(|&&x| set[x]).count() as f64 / xs.len() as f64;
    let (pa, pb) = (frac(a2), frac(b2));
    TvEstimate {
        estimate: pa - pb,
        se: (pa * (1.0 - pa) / a2.len() as f64 + pb * (1.0 - pb) / b2.len() as f64).sqrt(),
        replicates: 0,
    }
}

/// Mean of `exp(2 pi i chi(t . x))` over the samples.
pub fn empirical_cf(samples: &[UVector], t: &UVector) -> Result<Complex64> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for x in samples {
        let phase = t.dot(x)?.character()?;
        acc += Complex64::cis(std::f64::consts::TAU * phase.to_f64());
    }
    Ok(acc / samples.len() as f64)
}

/// Kolmogorov distance between the empirical law of `values` and U(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Psd,
    NotPsd,
}

#[derive(Debug, Clone, Serialize)]
pub struct GramCertificate {
    pub points: Vec<UVector>,
    pub matrix: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    /// Unit eigenvector for `min_eigenvalue`.
    pub witness: Vec<f64>,
    pub verdict: Verdict,
    pub method: String,
    /// Input points dropped as coincident with an earlier point at working precision.
    pub merged: usize,
}

/// `phi(||x - y||)`, or `None` when the points coincide at working precision.
fn kernel(phi: &RadialProfile, x: &UVector, y: &UVector) -> Result<Option<f64>> {
    match x.sub(y) {
        Ok(d) if d.is_zero() => Ok(None),
        Ok(d) => Ok(Some(phi.eval_norm_exp(d.norm_exp()))),
        Err(Error::PrecisionExhausted(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn gram_matrix(phi: &RadialProfile, points: &[UVector]) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = kernel(phi, &points[i], &points[j])?.unwrap_or(1.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Builds `[phi(||x_i - x_j||)]` and certifies it by a symmetric eigensolve.
pub fn gram_check(phi: &RadialProfile, points: &[UVector]) -> Result<GramCertificate> {
    if points.is_empty() {
        return Err(Error::Domain("no points".into()));
    }
    let mut kept: Vec<UVector> = Vec::with_capacity(points.len());
    for x in points {
        let mut coincident = false;
        for y in &kept {
            if kernel(phi, x, y)?.is_none() {
                coincident = true;
                break;
            }
        }
        if !coincident {
            kept.push(x.clone());
        }
    }
    let merged = points.len() - kept.len();
    let matrix = gram_matrix(phi, &kept)?;
    let n = kept.len();
    let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
    let eig = DMatrix::from_row_slice(n, n, &flat).symmetric_eigen();
    let (idx, &min_eigenvalue) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("n >= 1");
    let witness = eig.eigenvectors.column(idx).iter().copied().collect();
    Ok(GramCertificate {
        points: kept,
        matrix,
        min_eigenvalue,
        witness,
        verdict: if min_eigenvalue >= PSD_TOLERANCE {
            Verdict::Psd
        } else {
            Verdict::NotPsd
        },
        method: "symmetric-eigen".into(),
        merged,
    })
}

/// Recomputes the Gram matrix from the certificate's points and returns the
/// Rayleigh quotient of the witness vector. A `NotPsd` certificate is valid
/// iff this is below the PSD tolerance.
pub fn verify_certificate(phi: &RadialProfile, cert: &GramCertificate) -> Result<f64> {
    let m = gram_matrix(phi, &cert.points)?;
    let z = &cert.witness;
    if z.len() != m.len() {
        return Err(Error::Domain("witness length does not match the point count".into()));
    }
    let num: f64 = (0..z.len())
        .map(|i| (0..z.len()).map(|j| z[i] * m[i][j] * z[j]).sum::<f64>())
        .sum();
    let den: f64 = z.iter().map(|x| x * x).sum();
    Ok(num / den)
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ViolationSearch {
    Found {
        certificate: Box<GramCertificate>,
        configuration: String,
        rayleigh: f64,
    },
    NotFound {
        tried: usize,
    },
}

/// Point cap for one search configuration.
pub const SEARCH_MAX_POINTS: usize = 128;
pub const DEFAULT_BUDGET: usize = 10_000;
pub const DEFAULT_MAX_N: usize = 6;

/// The residue vector with base-`p` digits of `index` as coordinates, scaled by `rho^-m`.
fn residue_point(config: FieldConfig, n: usize, index: usize, m: i64) -> UVector {
    let p = config.p() as usize;
    let mut rest = index;
    let entries = (0..n)
        .map(|_| {
            let d = rest % p;
            rest /= p;
            FieldElement::from_i64(config, d as i64).shift(-m)
        })
        .collect();
    UVector::new(entries).expect("n >= 1")
}

fn j_configuration(config: FieldConfig, n: usize, m: i64, count: usize) -> Vec<UVector> {
    (0..count).map(|i| residue_point(config, n, i, m)).collect()
}

/// `rho^-m2 a + rho^-m1 b` for `a` among the first `clusters` and `b` among
/// the first `spread` residue vectors; `m1 < m2`.
fn nested_configuration(
    config: FieldConfig,
    n: usize,
    m1: i64,
    m2: i64,
    clusters: usize,
    spread: usize,
) -> Result<Vec<UVector>> {
    let mut out = Vec::with_capacity(clusters * spread);
    for a in 0..clusters {
        let outer = residue_point(config, n, a, m2);
        for b in 0..spread {
            out.push(outer.add(&residue_point(config, n, b, m1))?);
        }
    }
    Ok(out)
}

/// Budgeted search for a point set whose Gram matrix under `phi` has a
/// negative eigenvalue. Two families are tried for each dimension up to
/// `max_n`: up to `q^n` residue vectors scaled by `rho^-m` (pairwise distance
/// exactly `q^m`), and two clusters of such points at distance `q^m2` whose
/// members sit `q^m1` apart. `NotFound` is not a proof of nonnegativity.
pub fn find_psd_violation(
    phi: &RadialProfile,
    config: FieldConfig,
    max_n: usize,
    budget: usize,
) -> Result<ViolationSearch> {
    if config.q() != phi.q() {
        return Err(Error::ConfigMismatch);
    }
    let q = config.q() as usize;
    let mut tried = 0;
    let found = |cert: GramCertificate, configuration: String| -> Result<Option<ViolationSearch>> {
        if cert.verdict == Verdict::Psd {
            return Ok(None);
        }
        let rayleigh = verify_certificate(phi, &cert)?;
        Ok((rayleigh < PSD_TOLERANCE).then(|| ViolationSearch::Found {
            certificate: Box::new(cert),
            configuration,
            rayleigh,
        }))
    };
    for n in 1..=max_n {
        let size = q.saturating_pow(n as u32).min(SEARCH_MAX_POINTS);
        for m in phi.m_lo()..=phi.m_hi() {
            if tried >= budget {
                return Ok(ViolationSearch::NotFound { tried });
            }
            tried += 1;
            let cert = gram_check(phi, &j_configuration(config, n, m, size))?;
            if let Some(hit) = found(cert, format!("{size} points pairwise at distance q^{m} in K^{n}"))? {
                return Ok(hit);
            }
        }
        let spread = q.saturating_pow(n as u32).min(SEARCH_MAX_POINTS / 2);
        for m1 in phi.m_lo()..=phi.m_hi() {
            for m2 in m1 + 1..=phi.m_hi() {
                if tried >= budget {
                    return Ok(ViolationSearch::NotFound { tried });
                }
                tried += 1;
                let points = nested_configuration(config, n, m1, m2, 2, spread)?;
                let cert = gram_check(phi, &points)?;
                let label = format!("2 clusters at distance q^{m2}, {spread} points each at distance q^{m1}, in K^{n}");
                if let Some(hit) = found(cert, label)? {
                    return Ok(hit);
                }
            }
        }
    }
    Ok(ViolationSearch::NotFound { tried })
}

/// One named pass/fail line of a suite.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    /// A p-value test passing iff `p_value >= alpha`.
    pub fn from_gof(name: &str, report: &GofReport, alpha: f64) -> Self {
        Self {
            name: name.into(),
            statistic: report.statistic,
            p_value: Some(report.p_value),
            threshold: alpha,
            pass: report.p_value >= alpha,
            detail: format!("dof {}, cells {}, samples {}", report.dof, report.cells, report.samples),
        }
    }

    /// A bound check passing iff `statistic <= threshold`.
    pub fn bound(name: &str, statistic: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            statistic,
            p_value: None,
            threshold,
            pass: statistic <= threshold,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub version: String,
    pub config: serde_json::Value,
    /// Per-test level after the Bonferroni split.
    pub alpha: f64,
    pub tests: Vec<CheckOutcome>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn new(suite: &str, seed: u64, config: serde_json::Value, alpha: f64, tests: Vec<CheckOutcome>) -> Self {
        let pass = tests.iter().all(|t| t.pass);
        Self {
            suite: suite.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            alpha,
            tests,
            pass,
        }
    }
}

/// Number of chi-square tests inside [`freedman_roundtrip`] for a law with
/// `finite_atoms` finite support points: one per atom plus independence.
pub fn freedman_test_count(finite_atoms: usize) -> usize {
    finite_atoms + usize::from(finite_atoms >= 2)
}

/// `P(tau_hat = m)` where `tau_hat` is the norm exponent of `tau * eta`,
/// `eta ~ gamma_n`.
fn tau_hat_prob(pi: &ScaleLaw, q: u32, n: usize, m: i64) -> f64 {
    let r = (q as f64).powi(-(n as i32));
    pi.atoms()
        .range(..=m)
        .map(|(&j, &w)| w * r.powi((m - j).min(i32::MAX as i64) as i32) * (1.0 - r))
        .sum()
}

/// Draws `samples` vectors `xi = tau * eta` in `K^n` and checks the scale
/// mixture decomposition:
///
/// * the law of `tau_hat = ||xi||` exponent against `pi`, within three
///   standard deviations plus the escape mass `q^-n`;
/// * for each finite atom, the first `k` coordinates of `rho^-tau_hat xi`
///   against the `sigma_n` marginal at ball level 1;
/// * independence of `tau_hat` and that level-1 pattern;
/// * split-sample TV between the valuation patterns of the first `k`
///   coordinates of `tau * sigma_n` and of `tau * gamma_k`, against `q^-n`.
///
/// `alpha` is the per-test level for the chi-square parts.
pub fn freedman_roundtrip(
    pi: &ScaleLaw,
    config: FieldConfig,
    n: usize,
    k: usize,
    samples: usize,
    seed: u64,
    alpha: f64,
) -> Result<Vec<CheckOutcome>> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let q = config.q();
    let escape = (q as f64).powi(-(n as i32));
    let mut out = Vec::new();

    let xs = draw_batch(seed, 0, samples, |r| sample_rotatable(r, config, pi, n));
    let taus: Vec<Valuation> = xs.iter().map(UVector::norm_exp).collect();
    let nf = samples as f64;

    // (a) law of tau_hat
    let support = pi.support();
    let mut worst = f64::NEG_INFINITY;
    let mut lines = Vec::new();
    for &s in &support {
        let freq = taus.iter().filter(|&&t| t == s).count() as f64 / nf;
        let exact = match s {
            Valuation::Infinite => pi.zero_mass(),
            Valuation::Finite(m) => tau_hat_prob(pi, q, n, m),
        };
        let sd = (exact * (1.0 - exact) / nf).sqrt();
        let excess = (freq - pi.mass(s)).abs() - (3.0 * sd + escape);
        worst = worst.max(excess);
        lines.push(format!("{s}: {freq:.6} vs {:.6}", pi.mass(s)));
    }
    let escaped = taus.iter().filter(|t| !support.contains(t)).count() as f64 / nf;
    let escape_excess = escaped - (escape + 3.0 * (escape * (1.0 - escape) / nf).sqrt());
    lines.push(format!("escaped {escaped:.6}"));
    out.push(CheckOutcome::bound(
        "tau_law",
        worst.max(escape_excess),
        0.0,
        lines.join(", "),
    ));

    // (b) conditional coordinate law, (c) independence
    let law = sigma_marginal_cells(q, n, k, 1)?;
    let min_law = law.iter().copied().fold(f64::INFINITY, f64::min);
    let mut table = Vec::new();
    let mut rows = Vec::new();
    for &s in &support {
        let Valuation::Finite(m) = s else { continue };
        let thetas: Vec<UVector> = xs
            .iter()
            .zip(&taus)
            .filter(|(_, &t)| t == s)
            .map(|(x, _)| x.shift(-m))
            .collect();
        if (thetas.len() as f64) * min_law < MIN_EXPECTED {
            continue;
        }
        let hist = ball_histogram(&thetas, 1, k)?;
        let gof = chi_square_gof(&hist, &law)?;
        out.push(CheckOutcome::from_gof(&format!("coordinates_given_tau_{m}"), &gof, alpha));
        table.push(hist);
        rows.push(m);
    }
    if table.len() >= 2 {
        let indep = chi_square_independence(&table)?;
        let mut check = CheckOutcome::from_gof("tau_pattern_independence", &indep, alpha);
        check.detail = format!("rows {rows:?}, {}", check.detail);
        out.push(check);
    }

    // (d) indicator-level TV against the mixture of tau * gamma_k
    let base = pi.support_min().unwrap_or(0);
    let levels: usize = 3;
    let cells = levels.pow(k as u32);
    let a: Vec<usize> = draw_batch(seed, 1, samples, |r| {
        let tau = pi.sample(r);
        let x = sample_sigma(r, config, n).prefix(k);
        valuation_pattern(&scale_by(&x, tau), k, base, levels)
    });
    let b: Vec<usize> = draw_batch(seed, 2, samples, |r| {
        let tau = pi.sample(r);
        let x = sample_gamma_n(r, config, k);
        valuation_pattern(&scale_by(&x, tau), k, base, levels)
    });
    let tv = tv_split(&a, &b, cells);
    out.push(CheckOutcome::bound(
        "indicator_tv",
        tv.estimate,
        escape + 3.0 * tv.se,
        format!("split estimate {:.3e}, se {:.3e}, bound q^-{n} = {escape:.3e}", tv.estimate, tv.se),
    ));
    Ok(out)
}

fn scale_by(x: &UVector, tau: Valuation) -> UVector {
    match tau {
        Valuation::Infinite => UVector::zeros(x.config(), x.dim()),
        Valuation::Finite(m) => x.shift(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::phi_from_pi;
    use std::collections::BTreeMap;

    #[test]
    fn gof_rejects_underfilled_cells() {
        assert!(chi_square_gof(&[3, 1], &[0.5, 0.5]).is_err());
        let r = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 1);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gof_zero_cells() {
        let r = chi_square_gof(&[50, 50, 0], &[0.5, 0.5, 0.0]).unwrap();
        assert_eq!(r.cells, 2);
        let bad = chi_square_gof(&[50, 49, 1], &[0.5, 0.5, 0.0]).unwrap();
        assert_eq!(bad.p_value, 0.0);
    }

    #[test]
    fn chi_square_tail_known_value() {
        // P(chi2_1 > 3.841459) = 0.05
        assert!((chi_square_tail(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn sigma_cells_sum_to_one() {
        for (q, n, k, l) in [(2, 3, 3, 2), (3, 4, 2, 1), (2, 16, 4, 1)] {
            let law = sigma_marginal_cells(q, n, k, l).unwrap();
            assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let sphere = sphere_cells(2, 2, 1).unwrap();
        assert_eq!(sphere[0], 0.0);
        assert!((sphere[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ball_cells_index_coordinates() {
        let c = FieldConfig::padic(3).unwrap();
        let x = UVector::new(vec![FieldElement::from_i64(c, 5), FieldElement::from_i64(c, 1)]).unwrap();
        // 5 = 2 + 1*3 -> level-2 index 5; 1 -> 1; cell 5 + 9 * 1
        assert_eq!(ball_cell(&x, 2, 2).unwrap(), 14);
        assert_eq!(ball_cell(&x, 1, 1).unwrap(), 2);
    }

    #[test]
    fn patterns() {
        let c = FieldConfig::padic(2).unwrap();
        let x = UVector::new(vec![
            FieldElement::from_i64(c, 1),
            FieldElement::from_i64(c, 2),
            c.zero(),
        ])
        .unwrap();
        assert_eq!(unit_pattern(&x, 3), 0b001);
        // valuations 0, 1, inf -> slots 0, 1, 2 in base 3
        assert_eq!(valuation_pattern(&x, 3, 0, 3), 3 + 2 * 9);
    }

    #[test]
    fn tv_of_identical_counts_is_zero() {
        assert_eq!(tv_from_counts(&[10, 20], &[1, 2]), 0.0);
        assert!((tv_from_counts(&[10, 0], &[0, 10]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_se_is_positive() {
        let mut rng = RngStream::new(1, 0);
        let est = tv_bootstrap(&[500, 500], &[400, 600], 100, &mut rng);
        assert!((est.estimate - 0.1).abs() < 1e-12);
        assert!(est.se > 0.005 && est.se < 0.05, "{est:?}");
    }

    #[test]
    fn ks_of_grid_is_small() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&v) <= 0.0005 + 1e-12);
    }

    #[test]
    fn indicator_profile_gives_all_ones() {
        let c = FieldConfig::padic(2).unwrap();
        let phi = RadialProfile::new(2, -2, 2, vec![1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let mut rng = RngStream::new(2, 0);
        let pts: Vec<UVector> = (0..6).map(|_| sample_gamma_n(&mut rng, c, 3)).collect();
        let cert = gram_check(&phi, &pts).unwrap();
        assert!(cert.matrix.iter().flatten().all(|&v| v == 1.0));
        assert_eq!(cert.verdict, Verdict::Psd);
    }

    #[test]
    fn two_points_at_distance_one_are_borderline_psd() {
        let c = FieldConfig::padic(2).unwrap();
        let phi = RadialProfile::new(2, 0, 0, vec![-0.5]).unwrap();
        let pts = j_configuration(c, 1, 0, 2);
        let cert = gram_check(&phi, &pts).unwrap();
        assert_eq!(cert.verdict, Verdict::Psd);
        assert!((cert.min_eigenvalue - 0.5).abs() < 1e-12);
    }

    #[test]
    fn four_points_in_k2_refute() {
        let c = FieldConfig::padic(2).unwrap();
        let phi = RadialProfile::new(2, 0, 0, vec![-0.5]).unwrap();
        let cert = gram_check(&phi, &j_configuration(c, 2, 0, 4)).unwrap();
        assert_eq!(cert.verdict, Verdict::NotPsd);
        assert!((cert.min_eigenvalue + 0.5).abs() < 1e-9);
        assert!(verify_certificate(&phi, &cert).unwrap() < PSD_TOLERANCE);
    }

    #[test]
    fn coincident_points_are_merged() {
        let c = FieldConfig::padic(3).unwrap();
        let phi = RadialProfile::new(3, 0, 0, vec![0.5]).unwrap();
        let x = UVector::basis(c, 2, 0);
        let cert = gram_check(&phi, &[x.clone(), x.clone(), UVector::basis(c, 2, 1)]).unwrap();
        assert_eq!(cert.merged, 1);
        assert_eq!(cert.points.len(), 2);
    }

    #[test]
    fn search_finds_increasing_profile() {
        let c = FieldConfig::padic(2).unwrap();
        let phi = RadialProfile::new(2, 0, 1, vec![0.5, 0.9]).unwrap();
        match find_psd_violation(&phi, c, DEFAULT_MAX_N, DEFAULT_BUDGET).unwrap() {
            ViolationSearch::Found { rayleigh, .. } => assert!(rayleigh < PSD_TOLERANCE),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn search_finds_nothing_for_valid_profile() {
        let c = FieldConfig::padic(3).unwrap();
        let pi = ScaleLaw::new(BTreeMap::from([(-1, 0.25), (0, 0.5), (2, 0.25)]), 0.0).unwrap();
        let phi = phi_from_pi(&pi, 3, -2, 3).unwrap();
        assert!(matches!(
            find_psd_violation(&phi, c, 4, DEFAULT_BUDGET).unwrap(),
            ViolationSearch::NotFound { .. }
        ));
    }

    #[test]
    fn cf_of_gamma_near_one_on_d() {
        let c = FieldConfig::padic(3).unwrap();
        let xs = draw_batch(3, 0, 2000, |r| sample_gamma_n(r, c, 2));
        let t = UVector::basis(c, 2, 1);
        assert!((empirical_cf(&xs, &t).unwrap() - 1.0).norm() < 1e-12);
    }
}
