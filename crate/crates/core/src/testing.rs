//! The four goodness-of-fit tests: plain, bootstrap-corrected, augmented and
//! augmented bootstrap-corrected, for a given membership or for a community
//! count with spectrally estimated membership.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deviation::{entrywise_deviations, gamma_max, sample_psi, theta, default_b};
use crate::error::{Error, Result};
use crate::estimation::{estimate_q, spectral_membership};
use crate::graph::{density, AdjacencyMatrix, Membership};
use crate::gumbel::{critical_value, fit_gumbel_mle, p_value, GumbelParams};
use crate::sbm::{augment, generate_sbm, BlockProbabilityMatrix, SbmSpec};
use crate::seed::{self, tag};
use crate::{Gumbel, Real};

/// Smallest admissible number of bootstrap replicates.
pub const MIN_BOOTSTRAP_J: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Plain,
    Bootstrap,
    Augmented,
    AugmentedBootstrap,
}

impl Variant {
    pub fn is_bootstrap(self) -> bool {
        matches!(self, Variant::Bootstrap | Variant::AugmentedBootstrap)
    }

    pub fn is_augmented(self) -> bool {
        matches!(self, Variant::Augmented | Variant::AugmentedBootstrap)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "bootstrap" => Ok(Variant::Bootstrap),
            "augmented" => Ok(Variant::Augmented),
            "augmented-bootstrap" => Ok(Variant::AugmentedBootstrap),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Plain => "plain",
            Variant::Bootstrap => "bootstrap",
            Variant::Augmented => "augmented",
            Variant::AugmentedBootstrap => "augmented-bootstrap",
        })
    }
}

/// `K`: the number of communities is `K0`. `G`: the membership is `g0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    K,
    G,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipSource {
    Given,
    Spectral,
}

/// Number of rows drawn per resampled sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BChoice {
    /// `ceil(density^{-1/2} (n / log n)^{1/3})`, computed on the tested graph.
    #[default]
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for BChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(BChoice::Auto);
        }
        match s.parse::<usize>() {
            Ok(b) if b > 0 => Ok(BChoice::Fixed(b)),
            _ => Err(Error::InvalidArgument(format!("B must be a positive integer or \"auto\", got {s:?}"))),
        }
    }
}

impl Serialize for BChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BChoice::Auto => s.serialize_str("auto"),
            BChoice::Fixed(b) => s.serialize_u64(*b as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(0) => Err(serde::de::Error::custom("B must be positive")),
            Raw::Int(b) => Ok(BChoice::Fixed(b)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct TestOptions {
    pub alpha: f64,
    pub b: BChoice,
    pub m: usize,
    pub bootstrap_j: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self { alpha: 0.05, b: BChoice::Auto, m: 100, bootstrap_j: 100, seed: 0, variant: Variant::Plain }
    }
}

impl TestOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.m == 0 {
            return Err(Error::InvalidArgument("M must be at least 1".into()));
        }
        if self.variant.is_bootstrap() && self.bootstrap_j < MIN_BOOTSTRAP_J {
            return Err(Error::InvalidArgument(format!(
                "bootstrap needs at least {MIN_BOOTSTRAP_J} replicates, got {}",
                self.bootstrap_j
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestReport {
    pub statistic: Real,
    pub critical_value: Real,
    pub p_value: Real,
    pub reject: bool,
    pub variant: Variant,
    pub k0: usize,
    pub hypothesis: Hypothesis,
    pub b_used: usize,
    pub m_used: usize,
    pub seed: u64,
    pub gumbel_fit: Option<Gumbel>,
    pub membership_source: MembershipSource,
}

/// What is being tested.
#[derive(Clone, Debug)]
pub enum Target {
    /// Hypothesis (I): `K = k0`, membership estimated spectrally.
    Count(usize),
    /// Hypothesis (II): the membership equals the one given.
    Given(Membership),
}

/// Plain test of a given membership.
pub fn test_membership(a: &AdjacencyMatrix, g0: &Membership, opts: &TestOptions) -> Result<TestReport> {
    run_test(a, &Target::Given(g0.clone()), &TestOptions { variant: Variant::Plain, ..opts.clone() })
}

/// Plain test of a community count.
pub fn test_k(a: &AdjacencyMatrix, k0: usize, opts: &TestOptions) -> Result<TestReport> {
    run_test(a, &Target::Count(k0), &TestOptions { variant: Variant::Plain, ..opts.clone() })
}

/// Bootstrap-corrected test of a given membership.
pub fn bootstrap_corrected(a: &AdjacencyMatrix, g0: &Membership, opts: &TestOptions) -> Result<TestReport> {
    run_test(a, &Target::Given(g0.clone()), &TestOptions { variant: Variant::Bootstrap, ..opts.clone() })
}

/// Augmented test; `opts.variant` selects whether the bootstrap correction
/// is applied on top (any non-augmented variant is promoted to its augmented
/// counterpart).
pub fn augmented_test(a: &AdjacencyMatrix, target: &Target, opts: &TestOptions) -> Result<TestReport> {
    let variant = if opts.variant.is_bootstrap() { Variant::AugmentedBootstrap } else { Variant::Augmented };
    run_test(a, target, &TestOptions { variant, ..opts.clone() })
}

/// Runs `opts.variant` against `target`.
pub fn run_test(a: &AdjacencyMatrix, target: &Target, opts: &TestOptions) -> Result<TestReport> {
    opts.validate()?;
    let (hypothesis, source, k0) = match target {
        Target::Count(k0) => (Hypothesis::K, MembershipSource::Spectral, *k0),
        Target::Given(g0) => {
            g0.check_len(a)?;
            (Hypothesis::G, MembershipSource::Given, g0.k())
        }
    };
    if k0 == 0 {
        return Err(Error::InvalidArgument("K0 must be at least 1".into()));
    }
    if opts.variant.is_augmented() && k0 == 1 {
        return Err(Error::AugmentationInfeasible("K0 = 1 has no between-community probability".into()));
    }
    let pipeline = Pipeline { augmented: opts.variant.is_augmented(), m: opts.m };

    let observed = pipeline.run(a, target, opts.b, opts.seed)?;
    let critical = critical_value(opts.alpha)?;
    let (statistic, gumbel_fit) = if opts.variant.is_bootstrap() {
        let (corrected, fit) = pipeline.bootstrap(&observed, target, opts)?;
        (corrected, Some(fit))
    } else {
        (observed.theta, None)
    };
    let reject = statistic > critical;
    Ok(TestReport {
        statistic,
        critical_value: critical,
        p_value: consistent_p_value(statistic, reject, opts.alpha),
        reject,
        variant: opts.variant,
        k0,
        hypothesis,
        b_used: observed.b,
        m_used: opts.m,
        seed: opts.seed,
        gumbel_fit,
        membership_source: source,
    })
}

/// The p-value and the critical value are two routes to one decision;
/// rounding at the boundary must not let them disagree.
fn consistent_p_value(statistic: Real, reject: bool, alpha: Real) -> Real {
    let p = p_value(statistic).clamp(0.0, 1.0);
    match (reject, p < alpha) {
        (true, false) => next_down(alpha),
        (false, true) => alpha,
        _ => p,
    }
}

fn next_down(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

struct Pipeline {
    augmented: bool,
    m: usize,
}

/// The observed statistic and what the bootstrap needs to regenerate it.
struct Observed {
    theta: Real,
    b: usize,
    /// Membership the null model is fitted on (`g0` or its spectral estimate).
    membership: Membership,
    qhat: BlockProbabilityMatrix<Real>,
}

impl Pipeline {
    fn run(&self, a: &AdjacencyMatrix, target: &Target, b: BChoice, seed: u64) -> Result<Observed> {
        let membership = match target {
            Target::Given(g0) => g0.clone(),
            Target::Count(k0) => spectral_membership(a, *k0, seed::derive(seed, &[tag::SPECTRAL]))?,
        };
        let qhat = estimate_q::<Real>(a, &membership)?;
        let (theta, b) = if self.augmented {
            let aug = augment(a, &membership, &qhat, seed)?;
            let g_plus = match target {
                Target::Given(_) => aug.membership,
                // The hypothesized count grows by one; its membership on the
                // augmented graph is estimated afresh.
                Target::Count(k0) => {
                    spectral_membership(&aug.graph, k0 + 1, seed::derive(seed, &[tag::SPECTRAL, 1]))?
                }
            };
            let q_plus = estimate_q::<Real>(&aug.graph, &g_plus)?;
            self.statistic(&aug.graph, &g_plus, &q_plus, b, seed)?
        } else {
            self.statistic(a, &membership, &qhat, b, seed)?
        };
        Ok(Observed { theta, b, membership, qhat })
    }

    fn statistic(
        &self,
        a: &AdjacencyMatrix,
        g: &Membership,
        qhat: &BlockProbabilityMatrix<Real>,
        b: BChoice,
        seed: u64,
    ) -> Result<(Real, usize)> {
        let b = match b {
            BChoice::Fixed(b) => b,
            BChoice::Auto => default_b(density::<Real>(a)?, a.n())?,
        };
        let d = entrywise_deviations(a, g, qhat)?;
        let psi = sample_psi(&d, b, self.m, seed::derive(seed, &[tag::PSI]))?;
        Ok((theta(gamma_max(&psi), self.m, g.k())?, b))
    }

    /// Regenerates `J` networks from the fitted model, recomputes the
    /// statistic on each with the observed `B` and `M`, and maps the
    /// observed statistic through the fitted-to-limit affine transform.
    fn bootstrap(&self, obs: &Observed, target: &Target, opts: &TestOptions) -> Result<(Real, Gumbel)> {
        let spec = SbmSpec::new(obs.qhat.clone(), obs.membership.clone(), 0)?;
        let stats: Vec<Real> = (0..opts.bootstrap_j)
            .into_par_iter()
            .map(|j| {
                let rep_seed = seed::derive(opts.seed, &[tag::BOOTSTRAP, j as u64]);
                let a_j = generate_sbm(&SbmSpec { seed: rep_seed, ..spec.clone() });
                self.run(&a_j, target, BChoice::Fixed(obs.b), rep_seed).map(|o| o.theta)
            })
            .collect::<Result<_>>()?;
        let fit = fit_gumbel_mle(&stats)
            .map_err(|e| Error::BootstrapFit { statistics: stats.clone(), source: Box::new(e) })?;
        Ok((bootstrap_transform(obs.theta, fit), fit))
    }
}

/// `mu + beta (theta - mu_hat) / beta_hat` with `(mu, beta)` the null limit.
pub fn bootstrap_transform(theta: Real, fit: Gumbel) -> Real {
    let limit = GumbelParams::<Real>::null_limit();
    limit.mu + limit.beta * (theta - fit.mu) / fit.beta
}
