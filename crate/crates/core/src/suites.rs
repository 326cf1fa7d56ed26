//! Named verification batteries. Each returns a [`SuiteReport`] whose
//! `pass` flag is the conjunction of its checks; chi-square checks share the
//! family level `alpha` by Bonferroni.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldConfig, Valuation};
use crate::harness::{
    chi_square_balls, chi_square_homogeneity, empirical_cf, find_psd_violation, freedman_roundtrip,
    freedman_test_count, gram_check, sphere_cells, tv_bootstrap, uniform_cells, unit_pattern_counts,
    ball_histogram, CheckOutcome, SuiteReport, Verdict, ViolationSearch, DEFAULT_BUDGET, DEFAULT_MAX_N,
};
use crate::laws::{gl_density, pi_from_phi, to_f64, tv_formula, tv_oracle, RadialProfile, TV_ORACLE_MAX_N};
use crate::linalg::UVector;
use crate::rng::RngStream;
use crate::sampling::{
    draw_batch, sample_gamma_n, sample_gl_haar, sample_rotatable, sample_sigma, try_gl_haar, ScaleLaw,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Tv,
    GlHaar,
    Invariance,
    Freedman,
    GaussianCf,
    Schoenberg,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Tv,
        Suite::GlHaar,
        Suite::Invariance,
        Suite::Freedman,
        Suite::GaussianCf,
        Suite::Schoenberg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Tv => "tv",
            Suite::GlHaar => "gl-haar",
            Suite::Invariance => "invariance",
            Suite::Freedman => "freedman",
            Suite::GaussianCf => "gaussian-cf",
            Suite::Schoenberg => "schoenberg",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite {s:?}")))
    }
}

/// Everything a suite may read. Fields a suite does not use are ignored but
/// still echoed into its report.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteParams {
    pub field: FieldConfig,
    pub n: usize,
    pub k: usize,
    pub level: usize,
    pub trials: usize,
    pub seed: u64,
    /// Family-wise level before the Bonferroni split.
    pub alpha: f64,
    pub pi: Option<ScaleLaw>,
    pub phi: Option<RadialProfile>,
    pub max_n: usize,
    pub budget: usize,
}

impl SuiteParams {
    pub fn new(field: FieldConfig) -> Self {
        Self {
            field,
            n: 3,
            k: 1,
            level: 2,
            trials: 100_000,
            seed: 0,
            alpha: 0.01,
            pi: None,
            phi: None,
            max_n: DEFAULT_MAX_N,
            budget: DEFAULT_BUDGET,
        }
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("params serialize")
    }

    fn check_nk(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= k <= n, got k = {}, n = {}",
                self.k, self.n
            )));
        }
        if self.trials < 2 {
            return Err(Error::InvalidConfig("trials must be at least 2".into()));
        }
        Ok(())
    }
}

pub fn run(suite: Suite, params: &SuiteParams) -> Result<SuiteReport> {
    match suite {
        Suite::Tv => tv(params),
        Suite::GlHaar => gl_haar(params),
        Suite::Invariance => invariance(params),
        Suite::Freedman => freedman(params),
        Suite::GaussianCf => gaussian_cf(params),
        Suite::Schoenberg => schoenberg(params),
    }
}

/// Bootstrap replicates used for TV standard errors.
pub const BOOTSTRAP_REPLICATES: usize = 200;

/// Indicator-level TV between the first `k` coordinates of `sigma_n` and
/// `gamma_k`, against the closed form.
pub fn tv(params: &SuiteParams) -> Result<SuiteReport> {
    params.check_nk()?;
    let (c, n, k) = (params.field, params.n, params.k);
    let exact = tv_formula(c.q(), n as u32, k as u32)?;
    let target = to_f64(&exact);
    let mut tests = Vec::new();
    if n as u32 <= TV_ORACLE_MAX_N {
        let oracle = tv_oracle(c.q(), n as u32, k as u32)?;
        tests.push(CheckOutcome {
            name: "closed_form_matches_oracle".into(),
            statistic: to_f64(&oracle),
            p_value: None,
            threshold: target,
            pass: oracle == exact,
            detail: format!("oracle {oracle}, closed form {exact}"),
        });
    }
    let a = draw_batch(params.seed, 0, params.trials, |r| sample_sigma(r, c, n).prefix(k));
    let b = draw_batch(params.seed, 1, params.trials, |r| sample_gamma_n(r, c, k));
    let mut rng = RngStream::new(params.seed, 2);
    let est = tv_bootstrap(
        &unit_pattern_counts(&a, k),
        &unit_pattern_counts(&b, k),
        BOOTSTRAP_REPLICATES,
        &mut rng,
    );
    tests.push(CheckOutcome::bound(
        "empirical_tv_within_3se",
        (est.estimate - target).abs(),
        3.0 * est.se,
        format!("estimate {:.6}, target {exact} = {target:.6}, se {:.6}", est.estimate, est.se),
    ));
    Ok(SuiteReport::new("tv", params.seed, params.echo(), params.alpha, tests))
}

/// Rejection acceptance rate against the `GL_n(D)` density, plus isometry of
/// accepted matrices on random vectors.
pub fn gl_haar(params: &SuiteParams) -> Result<SuiteReport> {
    params.check_nk()?;
    let (c, n) = (params.field, params.n);
    let density = to_f64(&gl_density(c.q(), n as u32)?);
    let accepted = draw_batch(params.seed, 0, params.trials, |r| try_gl_haar(r, c, n).is_some())
        .into_iter()
        .filter(|&a| a)
        .count();
    let freq = accepted as f64 / params.trials as f64;
    let se = (density * (1.0 - density) / params.trials as f64).sqrt();
    let mut tests = vec![CheckOutcome::bound(
        "acceptance_rate_within_3se",
        (freq - density).abs(),
        3.0 * se,
        format!("{accepted}/{} accepted, density {density:.6}", params.trials),
    )];
    let matrices = (params.trials / 100).clamp(1, 1000);
    let failures: usize = draw_batch(params.seed, 1, matrices, |r| {
        let u = sample_gl_haar(r, c, n);
        (0..10)
            .filter(|_| {
                let x = sample_gamma_n(r, c, n);
                u.apply(&x).map(|y| y.norm_exp() != x.norm_exp()).unwrap_or(true)
            })
            .count()
    })
    .into_iter()
    .sum();
    tests.push(CheckOutcome::bound(
        "haar_matrices_preserve_norm",
        failures as f64,
        0.0,
        format!("{matrices} matrices x 10 vectors"),
    ));
    Ok(SuiteReport::new("gl-haar", params.seed, params.echo(), params.alpha, tests))
}

/// Ball-level uniformity of `gamma_n`, the conditioned law of `sigma_n`, and
/// equality of the laws of `xi` and `U xi` for a rotatable `xi` and Haar `U`.
pub fn invariance(params: &SuiteParams) -> Result<SuiteReport> {
    params.check_nk()?;
    let (c, n, level) = (params.field, params.n, params.level);
    let alpha = params.alpha / 3.0;
    let mut tests = Vec::new();

    let xs = draw_batch(params.seed, 0, params.trials, |r| sample_gamma_n(r, c, n));
    let gof = chi_square_balls(&xs, level, &uniform_cells(c.q(), n, level)?)?;
    tests.push(CheckOutcome::from_gof("gamma_n_uniform", &gof, alpha));

    let xs = draw_batch(params.seed, 1, params.trials, |r| sample_sigma(r, c, n));
    let gof = chi_square_balls(&xs, level, &sphere_cells(c.q(), n, level)?)?;
    tests.push(CheckOutcome::from_gof("sigma_n_conditioned", &gof, alpha));

    let pi = params.pi.clone().unwrap_or_else(|| ScaleLaw::point(0));
    if pi.support_min().unwrap_or(0) < 0 {
        return Err(Error::InvalidConfig(
            "the invariance suite needs a scale law supported on D".into(),
        ));
    }
    let plain = draw_batch(params.seed, 2, params.trials, |r| sample_rotatable(r, c, &pi, n));
    let rotated = draw_batch(params.seed, 3, params.trials, |r| {
        let x = sample_rotatable(r, c, &pi, n);
        sample_gl_haar(r, c, n).apply(&x)
    })
    .into_iter()
    .collect::<Result<Vec<UVector>>>()?;
    let gof = chi_square_homogeneity(&ball_histogram(&plain, level, n)?, &ball_histogram(&rotated, level, n)?)?;
    tests.push(CheckOutcome::from_gof("rotatable_law_invariant", &gof, alpha));
    Ok(SuiteReport::new("invariance", params.seed, params.echo(), alpha, tests))
}

/// Scale mixture decomposition of a rotatable sequence.
pub fn freedman(params: &SuiteParams) -> Result<SuiteReport> {
    params.check_nk()?;
    let pi = params
        .pi
        .clone()
        .ok_or_else(|| Error::InvalidConfig("the freedman suite needs a scale law".into()))?;
    let finite = pi.support().iter().filter(|s| !s.is_infinite()).count();
    let alpha = params.alpha / freedman_test_count(finite).max(1) as f64;
    let tests = freedman_roundtrip(&pi, params.field, params.n, params.k, params.trials, params.seed, alpha)?;
    Ok(SuiteReport::new("freedman", params.seed, params.echo(), alpha, tests))
}

/// Empirical characteristic function of `gamma_n`: one on `D^n`, zero just outside.
pub fn gaussian_cf(params: &SuiteParams) -> Result<SuiteReport> {
    params.check_nk()?;
    let (c, n) = (params.field, params.n);
    let xs = draw_batch(params.seed, 0, params.trials, |r| sample_gamma_n(r, c, n));
    let bound = 3.0 / (params.trials as f64).sqrt();
    let mut rng = RngStream::new(params.seed, 1);
    let inside = [
        ("t_basis", UVector::basis(c, n, 0)),
        ("t_gamma", sample_gamma_n(&mut rng, c, n)),
    ];
    let outside = [
        ("t_rho_inv_basis", UVector::basis(c, n, n - 1).shift(-1)),
        ("t_rho_inv_sigma", sample_sigma(&mut rng, c, n).shift(-1)),
    ];
    let mut tests = Vec::new();
    for (name, t) in inside {
        let cf = empirical_cf(&xs, &t)?;
        tests.push(CheckOutcome::bound(
            &format!("cf_one_{name}"),
            (cf - 1.0).norm(),
            bound,
            format!("norm exponent {}, cf {cf:.6}", t.norm_exp()),
        ));
    }
    for (name, t) in outside {
        debug_assert_eq!(t.norm_exp(), Valuation::Finite(-1));
        let cf = empirical_cf(&xs, &t)?;
        tests.push(CheckOutcome::bound(
            &format!("cf_zero_{name}"),
            cf.norm(),
            bound,
            format!("norm exponent {}, cf {cf:.6}", t.norm_exp()),
        ));
    }
    Ok(SuiteReport::new("gaussian-cf", params.seed, params.echo(), params.alpha, tests))
}

/// Most points in a random set of the forward check.
pub const FORWARD_MAX_POINTS: usize = 12;

/// Positive-definiteness of `phi(||x||)` against its characterization: a
/// nonnegative nonincreasing profile must give PSD Gram matrices on random
/// point sets, any other profile must yield a verified witness.
pub fn schoenberg(params: &SuiteParams) -> Result<SuiteReport> {
    let phi = params
        .phi
        .clone()
        .ok_or_else(|| Error::InvalidConfig("the schoenberg suite needs a profile".into()))?;
    let c = params.field;
    if phi.q() != c.q() {
        return Err(Error::ConfigMismatch);
    }
    let mut tests = Vec::new();
    match pi_from_phi(&phi) {
        Ok(_) => {
            let sets = params.trials.clamp(1, 10_000);
            let lo = phi.m_lo();
            let worst = draw_batch(params.seed, 0, sets, |r| {
                let dim = 1 + (r.next_index(params.max_n.max(1)));
                let count = 2 + r.next_index(FORWARD_MAX_POINTS - 1);
                let points: Vec<UVector> = (0..count)
                    .map(|_| {
                        let scale = lo - 1 + r.next_index((phi.m_hi() - lo + 3) as usize) as i64;
                        sample_gamma_n(r, c, dim).shift(-scale)
                    })
                    .collect();
                gram_check(&phi, &points).map(|cert| cert.min_eigenvalue)
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
            tests.push(CheckOutcome {
                name: "random_sets_psd".into(),
                statistic: worst,
                p_value: None,
                threshold: crate::harness::PSD_TOLERANCE,
                pass: worst >= crate::harness::PSD_TOLERANCE,
                detail: format!("{sets} random point sets, smallest eigenvalue {worst:.3e}"),
            });
            let search = find_psd_violation(&phi, c, params.max_n, params.budget)?;
            let (pass, detail) = match &search {
                ViolationSearch::NotFound { tried } => (true, format!("no witness in {tried} configurations")),
                ViolationSearch::Found { configuration, .. } => (false, format!("witness found: {configuration}")),
            };
            tests.push(CheckOutcome {
                name: "structured_search_finds_nothing".into(),
                statistic: 0.0,
                p_value: None,
                threshold: 0.0,
                pass,
                detail,
            });
        }
        Err(violation) => {
            let search = find_psd_violation(&phi, c, params.max_n, params.budget)?;
            let (statistic, pass, detail) = match &search {
                ViolationSearch::Found {
                    certificate,
                    configuration,
                    rayleigh,
                } => (
                    *rayleigh,
                    certificate.verdict == Verdict::NotPsd,
                    format!("{violation}; witness: {configuration}, min eigenvalue {:.6}", certificate.min_eigenvalue),
                ),
                ViolationSearch::NotFound { tried } => (
                    0.0,
                    false,
                    format!("{violation}; no witness in {tried} configurations (not a proof of nonnegativity)"),
                ),
            };
            tests.push(CheckOutcome {
                name: "witness_found".into(),
                statistic,
                p_value: None,
                threshold: crate::harness::PSD_TOLERANCE,
                pass,
                detail,
            });
        }
    }
    Ok(SuiteReport::new("schoenberg", params.seed, params.echo(), params.alpha, tests))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_roundtrip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        let mut p = SuiteParams::new(FieldConfig::padic(2).unwrap());
        p.trials = 20_000;
        p.n = 3;
        p.k = 2;
        p.seed = 11;
        for s in [Suite::Tv, Suite::GlHaar, Suite::GaussianCf] {
            let r = run(s, &p).unwrap();
            assert!(r.pass, "{}", serde_json::to_string_pretty(&r).unwrap());
        }
    }

    #[test]
    fn schoenberg_on_valid_and_invalid_profiles() {
        let mut p = SuiteParams::new(FieldConfig::padic(2).unwrap());
        p.trials = 50;
        p.phi = Some(RadialProfile::new(2, 0, 1, vec![1.0, 0.5]).unwrap());
        assert!(schoenberg(&p).unwrap().pass);
        p.phi = Some(RadialProfile::new(2, 0, 0, vec![-0.5]).unwrap());
        assert!(schoenberg(&p).unwrap().pass);
    }
}
