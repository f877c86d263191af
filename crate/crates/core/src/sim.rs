//! Scenario-driven Monte-Carlo harness: data generators for grouped,
//! multivariate, and survival designs, plus end-to-end error-rate and power
//! estimation for the corrected permutation tests and their competitors.

use ndarray::{Array1, Array2};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;

use crate::contrasts::ContrastSpec;
use crate::correction::CaseMode;
use crate::engine::{self, DataSet, RunConfig};
use crate::error::{Error, Result};
use crate::io::KeyValueFile;
use crate::linalg::{sqrt_psd, standard_normal, SymMatrix};
use crate::moments::GroupedSample;
use crate::mtp;
use crate::statistics::KernelKind;
use crate::survival::{SurvivalGroup, SurvivalSample};

/// Which application a scenario simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Application {
    Anova,
    Manova,
    Rmst,
}

impl Application {
    pub fn name(&self) -> &'static str {
        match self {
            Application::Anova => "anova",
            Application::Manova => "manova",
            Application::Rmst => "rmst",
        }
    }
}

/// Error distributions for the univariate location model
/// `X = sigma_i * (eta - m) + mu_i`, centered so `E[X] = mu_i` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnovaDist {
    Normal,
    Lognormal,
    ChiSq3,
    T3,
}

impl AnovaDist {
    /// Mean of the raw draw, subtracted during generation.
    pub fn centering_constant(&self) -> f64 {
        match self {
            AnovaDist::Normal | AnovaDist::T3 => 0.0,
            AnovaDist::Lognormal => (0.5_f64).exp(),
            AnovaDist::ChiSq3 => 3.0,
        }
    }

    fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        match self {
            AnovaDist::Normal => standard_normal(rng),
            AnovaDist::Lognormal => standard_normal(rng).exp(),
            AnovaDist::ChiSq3 => rand_distr::ChiSquared::new(3.0).unwrap().sample(rng),
            AnovaDist::T3 => rand_distr::StudentT::new(3.0).unwrap().sample(rng),
        }
    }
}

/// Innovation distributions for the multivariate model
/// `X = Gamma_i^{1/2} Z + mu_i` with unit-variance components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManovaDist {
    /// `Exp(1) - 1`
    ExpCentered,
    Normal,
    /// `sqrt(7/9) * t_9`, standardized to unit variance.
    T9Std,
}

impl ManovaDist {
    fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        match self {
            ManovaDist::ExpCentered => {
                let v: f64 = rand_distr::Exp1.sample(rng);
                v - 1.0
            }
            ManovaDist::Normal => standard_normal(rng),
            ManovaDist::T9Std => {
                let t: f64 = rand_distr::StudentT::new(9.0).unwrap().sample(rng);
                (7.0_f64 / 9.0).sqrt() * t
            }
        }
    }
}

/// Group covariance layout for multivariate scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    Identity,
    /// Heterogeneous 4x4 layout: two equicorrelation groups followed by two
    /// autoregressive groups with entries `0.65^|a-b| sqrt((a+1)(b+1))`.
    Hetero4,
}

impl CovarianceKind {
    /// Covariance of group `i` (0-based) at dimension `d`.
    pub fn group_covariance(&self, i: usize, d: usize) -> Result<SymMatrix> {
        match self {
            CovarianceKind::Identity => SymMatrix::new(Array2::eye(d)),
            CovarianceKind::Hetero4 => {
                if d != 4 {
                    return Err(Error::InvalidInput(
                        "the hetero4 covariance layout requires d = 4".into(),
                    ));
                }
                let m = if i < 2 {
                    let mut m = Array2::from_elem((4, 4), 1.0);
                    for a in 0..4 {
                        m[[a, a]] = (a + 3) as f64;
                    }
                    m
                } else {
                    Array2::from_shape_fn((4, 4), |(a, b)| {
                        0.65_f64.powi((a as i32 - b as i32).abs())
                            * (((a + 2) * (b + 2)) as f64).sqrt()
                    })
                };
                SymMatrix::new(m)
            }
        }
    }
}

/// Contrast family used by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastFamily {
    Dunnett,
    Tukey,
    Centering,
}

impl ContrastFamily {
    pub fn build(&self, k: usize) -> Result<ContrastSpec> {
        match self {
            ContrastFamily::Dunnett => ContrastSpec::dunnett(k),
            ContrastFamily::Tukey => ContrastSpec::tukey(k),
            ContrastFamily::Centering => ContrastSpec::centering(k),
        }
    }
}

impl std::str::FromStr for ContrastFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dunnett" => Ok(ContrastFamily::Dunnett),
            "tukey" => Ok(ContrastFamily::Tukey),
            "centering" => Ok(ContrastFamily::Centering),
            other => Err(Error::InvalidInput(format!("unknown contrast family '{other}'"))),
        }
    }
}

/// Decision procedures a scenario can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Corrected,
    PermutationBonferroni,
    AsymptoticMultiple,
    AsymptoticBonferroni,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Corrected => "corrected",
            Method::PermutationBonferroni => "permutation_bonferroni",
            Method::AsymptoticMultiple => "asymptotic_multiple",
            Method::AsymptoticBonferroni => "asymptotic_bonferroni",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "corrected" => Ok(Method::Corrected),
            "perm_bonf" | "permutation_bonferroni" => Ok(Method::PermutationBonferroni),
            "asymptotic" | "asymptotic_multiple" => Ok(Method::AsymptoticMultiple),
            "asymptotic_bonf" | "asymptotic_bonferroni" => Ok(Method::AsymptoticBonferroni),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// A fully specified simulation scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub application: Application,
    pub k: usize,
    pub d: usize,
    pub sizes: Vec<usize>,
    pub anova_dist: AnovaDist,
    pub manova_dist: ManovaDist,
    pub sigma: Vec<f64>,
    pub cov: CovarianceKind,
    /// Group mean vector of length `k * d` (second moments for RMST come
    /// from the rates instead).
    pub mu: Vec<f64>,
    pub event_rate: Vec<f64>,
    pub censor_rate: Vec<f64>,
    pub tau: f64,
    pub contrast: ContrastFamily,
    /// Merge all hypotheses into one global test.
    pub global: bool,
    pub kernel: KernelKind,
    pub case_mode: CaseMode,
    pub eps: f64,
    pub rn_exponent: f64,
    pub n_sim: usize,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl Scenario {
    /// Parse a scenario from flat `key = value` text.
    pub fn from_text(text: &str, default_label: &str) -> Result<Self> {
        let kv = KeyValueFile::parse(text)?;
        const KNOWN: &[&str] = &[
            "application", "label", "k", "d", "n", "dist", "sigma", "cov", "mu", "event_rate",
            "censor_rate", "tau", "contrast", "global", "stat", "case", "eps", "rn_exponent",
            "n_sim", "b", "alpha", "seed", "methods",
        ];
        for key in kv.keys() {
            if !KNOWN.contains(&key) {
                return Err(Error::Parse(format!("unknown scenario key '{key}'")));
            }
        }

        let application = match kv.require("application")? {
            "anova" => Application::Anova,
            "manova" => Application::Manova,
            "rmst" => Application::Rmst,
            other => return Err(Error::Parse(format!("unknown application '{other}'"))),
        };
        let k: usize = kv.require("k")?.parse().map_err(|_| Error::Parse("bad k".into()))?;
        let d: usize = kv.parse_value("d", 1)?;
        let sizes: Vec<usize> = kv
            .parse_list("n")?
            .ok_or_else(|| Error::Parse("missing required key 'n'".into()))?;

        let anova_dist = match kv.get("dist") {
            None => AnovaDist::Normal,
            Some("normal") => AnovaDist::Normal,
            Some("lognormal") => AnovaDist::Lognormal,
            Some("chisq3") => AnovaDist::ChiSq3,
            Some("t3") => AnovaDist::T3,
            Some(other) if application != Application::Anova => {
                // Fall through; the manova parser below owns this key.
                let _ = other;
                AnovaDist::Normal
            }
            Some(other) => return Err(Error::Parse(format!("unknown anova distribution '{other}'"))),
        };
        let manova_dist = match kv.get("dist") {
            None | Some("normal") => ManovaDist::Normal,
            Some("exp_centered") => ManovaDist::ExpCentered,
            Some("t9std") => ManovaDist::T9Std,
            Some(other) if application != Application::Manova => {
                let _ = other;
                ManovaDist::Normal
            }
            Some(other) => {
                return Err(Error::Parse(format!("unknown manova distribution '{other}'")))
            }
        };
        let cov = match kv.get("cov") {
            None | Some("identity") => CovarianceKind::Identity,
            Some("hetero4") => CovarianceKind::Hetero4,
            Some(other) => return Err(Error::Parse(format!("unknown covariance '{other}'"))),
        };

        let scenario = Scenario {
            label: kv.get("label").unwrap_or(default_label).to_string(),
            application,
            k,
            d,
            sizes,
            anova_dist,
            manova_dist,
            sigma: kv.parse_list("sigma")?.unwrap_or_else(|| vec![1.0; k]),
            cov,
            mu: kv.parse_list("mu")?.unwrap_or_else(|| vec![0.0; k * d]),
            event_rate: kv.parse_list("event_rate")?.unwrap_or_else(|| vec![1.0; k]),
            censor_rate: kv.parse_list("censor_rate")?.unwrap_or_else(|| vec![0.0; k]),
            tau: kv.parse_value("tau", 1.0)?,
            contrast: kv.require("contrast")?.parse()?,
            global: kv.parse_value("global", false)?,
            kernel: kv.get("stat").unwrap_or("student").parse()?,
            case_mode: kv.get("case").unwrap_or("auto").parse()?,
            eps: kv.parse_value("eps", 0.1)?,
            rn_exponent: kv.parse_value("rn_exponent", 0.25)?,
            n_sim: kv.parse_value("n_sim", 1000)?,
            b: kv.parse_value("b", 1999)?,
            alpha: kv.parse_value("alpha", 0.05)?,
            seed: kv.parse_value("seed", 42)?,
            methods: match kv.get("methods") {
                None => default_methods(kv.get("stat").unwrap_or("student").parse()?),
                Some(raw) => raw
                    .split(',')
                    .map(|m| m.trim().parse())
                    .collect::<Result<Vec<Method>>>()?,
            },
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "scenario".into());
        Self::from_text(&text, &stem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput("scenario needs k >= 2".into()));
        }
        if self.sizes.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "'n' needs {} entries, found {}",
                self.k,
                self.sizes.len()
            )));
        }
        if self.sizes.iter().any(|&n| n < 2) {
            return Err(Error::InvalidInput("all group sizes must be >= 2".into()));
        }
        if self.application != Application::Manova && self.d != 1 {
            return Err(Error::InvalidInput("d > 1 requires the manova application".into()));
        }
        if self.mu.len() != self.k * self.d {
            return Err(Error::InvalidInput(format!(
                "'mu' needs {} entries, found {}",
                self.k * self.d,
                self.mu.len()
            )));
        }
        if self.sigma.len() != self.k {
            return Err(Error::InvalidInput("'sigma' needs one entry per group".into()));
        }
        if self.application == Application::Rmst {
            if self.event_rate.len() != self.k || self.censor_rate.len() != self.k {
                return Err(Error::InvalidInput("rates need one entry per group".into()));
            }
            if self.event_rate.iter().any(|&r| r <= 0.0) {
                return Err(Error::InvalidInput("event rates must be > 0".into()));
            }
            if self.censor_rate.iter().any(|&r| r < 0.0) {
                return Err(Error::InvalidInput("censoring rates must be >= 0".into()));
            }
            if !(self.tau > 0.0) {
                return Err(Error::InvalidInput("tau must be > 0".into()));
            }
        }
        if self.n_sim < 100 {
            return Err(Error::InvalidInput("n_sim must be at least 100".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no methods selected".into()));
        }
        if self.kernel == KernelKind::Ats && self.methods.contains(&Method::AsymptoticBonferroni) {
            return Err(Error::MethodUnavailable(
                "asymptotic_bonferroni is not defined for the ANOVA-type statistic".into(),
            ));
        }
        Ok(())
    }

    /// The contrast spec this scenario tests.
    pub fn contrast_spec(&self) -> Result<ContrastSpec> {
        let base = self.contrast.build(self.k)?;
        let spec = if self.d > 1 { base.expand_multivariate(self.d)? } else { base };
        Ok(if self.global { spec.as_global() } else { spec })
    }

    /// True group-level parameter vector (means, or true RMSTs for survival).
    pub fn true_mu(&self) -> Vec<f64> {
        match self.application {
            Application::Anova | Application::Manova => self.mu.clone(),
            Application::Rmst => self
                .event_rate
                .iter()
                .map(|&rate| (1.0 - (-rate * self.tau).exp()) / rate)
                .collect(),
        }
    }

    /// Per-hypothesis truth: `false` entries are the violated nulls.
    pub fn false_hypotheses(&self, spec: &ContrastSpec) -> Vec<bool> {
        let mu = Array1::from(self.true_mu());
        let theta = spec.matrix().dot(&mu);
        (0..spec.n_hypotheses())
            .map(|l| spec.block_of(&theta, l).iter().any(|v| v.abs() > 1e-12))
            .collect()
    }
}

fn default_methods(kernel: KernelKind) -> Vec<Method> {
    let mut m = vec![
        Method::Corrected,
        Method::PermutationBonferroni,
        Method::AsymptoticMultiple,
    ];
    if kernel != KernelKind::Ats {
        m.push(Method::AsymptoticBonferroni);
    }
    m
}

/// Draw one univariate dataset `X = sigma_i (eta - m) + mu_i`.
pub fn generate_anova<R: RngCore>(scenario: &Scenario, rng: &mut R) -> Result<GroupedSample> {
    let m = scenario.anova_dist.centering_constant();
    let groups = scenario
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            Array2::from_shape_fn((n, 1), |_| {
                scenario.sigma[i] * (scenario.anova_dist.sample(rng) - m) + scenario.mu[i]
            })
        })
        .collect();
    GroupedSample::new(groups)
}

/// Draw one multivariate dataset `X = Gamma_i^{1/2} Z + mu_i`.
pub fn generate_manova<R: RngCore>(scenario: &Scenario, rng: &mut R) -> Result<GroupedSample> {
    let d = scenario.d;
    let roots: Vec<Array2<f64>> = (0..scenario.k)
        .map(|i| Ok(sqrt_psd(&scenario.cov.group_covariance(i, d)?)?.into_matrix()))
        .collect::<Result<Vec<_>>>()?;
    let groups = scenario
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut g = Array2::zeros((n, d));
            for row in 0..n {
                let z = Array1::from_shape_fn(d, |_| scenario.manova_dist.sample(rng));
                let x = roots[i].dot(&z);
                for c in 0..d {
                    g[[row, c]] = x[c] + scenario.mu[i * d + c];
                }
            }
            g
        })
        .collect();
    GroupedSample::new(groups)
}

/// Draw one survival dataset: exponential event and censoring times.
pub fn generate_survival<R: RngCore>(scenario: &Scenario, rng: &mut R) -> Result<SurvivalSample> {
    let groups = scenario
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let rate = scenario.event_rate[i];
            let c_rate = scenario.censor_rate[i];
            let mut time = Vec::with_capacity(n);
            let mut status = Vec::with_capacity(n);
            for _ in 0..n {
                let t = exp_draw(rate, rng);
                let c = if c_rate > 0.0 { exp_draw(c_rate, rng) } else { f64::INFINITY };
                time.push(t.min(c));
                status.push(t <= c);
            }
            SurvivalGroup { time, status }
        })
        .collect();
    SurvivalSample::new(groups, scenario.tau)
}

fn exp_draw<R: RngCore>(rate: f64, rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

fn generate(scenario: &Scenario, rng: &mut ChaCha12Rng) -> Result<DataSet> {
    Ok(match scenario.application {
        Application::Anova => DataSet::Grouped(generate_anova(scenario, rng)?),
        Application::Manova => DataSet::Grouped(generate_manova(scenario, rng)?),
        Application::Rmst => DataSet::Survival(generate_survival(scenario, rng)?),
    })
}

/// Estimated proportions for one (scenario, method) pair.
#[derive(Debug, Clone, Serialize)]
pub struct MetricResult {
    pub scenario: String,
    pub application: Application,
    pub method: String,
    pub n_sim: usize,
    pub b: usize,
    pub alpha: f64,
    /// Rate of at least one rejection under a null scenario.
    pub fwer: Option<f64>,
    pub fwer_se: Option<f64>,
    /// Rate of rejecting all false hypotheses. `None` whenever no hypothesis
    /// is false: the empty conjunction would be vacuously true, so the
    /// harness reports not-applicable instead of 0 or 1.
    pub family_wise_power: Option<f64>,
    pub family_wise_power_se: Option<f64>,
    /// Rate of at least one rejection under an alternative.
    pub global_power: Option<f64>,
    pub global_power_se: Option<f64>,
}

impl MetricResult {
    pub fn tsv_header() -> &'static str {
        "scenario\tapplication\tmethod\tn_sim\tb\talpha\tfwer\tfwer_se\tfamily_wise_power\tfamily_wise_power_se\tglobal_power\tglobal_power_se"
    }

    pub fn to_tsv_row(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "NA".to_string(),
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.scenario,
            self.application.name(),
            self.method,
            self.n_sim,
            self.b,
            self.alpha,
            fmt(self.fwer),
            fmt(self.fwer_se),
            fmt(self.family_wise_power),
            fmt(self.family_wise_power_se),
            fmt(self.global_power),
            fmt(self.global_power_se)
        )
    }
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Run every repetition of a scenario and aggregate per-method metrics.
///
/// Repetitions run in parallel; each derives its own RNG stream from the
/// scenario seed, so results do not depend on scheduling. Permutation
/// parallelism inside the engine is disabled here to avoid oversubscribing
/// the pool.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<MetricResult>> {
    scenario.validate()?;
    let spec = scenario.contrast_spec()?;
    let falsity = scenario.false_hypotheses(&spec);
    let any_false = falsity.iter().any(|&f| f);
    let null_scenario = !any_false;

    let per_rep: Result<Vec<Vec<(bool, bool)>>> = (0..scenario.n_sim as u64)
        .into_par_iter()
        .map(|rep| simulate_one(scenario, &spec, &falsity, rep))
        .collect();
    let per_rep = per_rep?;

    let mut results = Vec::new();
    for (m_idx, method) in scenario.methods.iter().enumerate() {
        let n = scenario.n_sim;
        let any_rate =
            per_rep.iter().filter(|rep| rep[m_idx].0).count() as f64 / n as f64;
        let all_false_rate =
            per_rep.iter().filter(|rep| rep[m_idx].1).count() as f64 / n as f64;
        let result = if null_scenario {
            MetricResult {
                scenario: scenario.label.clone(),
                application: scenario.application,
                method: method.name().into(),
                n_sim: n,
                b: scenario.b,
                alpha: scenario.alpha,
                fwer: Some(any_rate),
                fwer_se: Some(binomial_se(any_rate, n)),
                family_wise_power: None,
                family_wise_power_se: None,
                global_power: None,
                global_power_se: None,
            }
        } else {
            MetricResult {
                scenario: scenario.label.clone(),
                application: scenario.application,
                method: method.name().into(),
                n_sim: n,
                b: scenario.b,
                alpha: scenario.alpha,
                fwer: None,
                fwer_se: None,
                family_wise_power: Some(all_false_rate),
                family_wise_power_se: Some(binomial_se(all_false_rate, n)),
                global_power: Some(any_rate),
                global_power_se: Some(binomial_se(any_rate, n)),
            }
        };
        results.push(result);
    }
    Ok(results)
}

/// One repetition: generate data, run the engine once, and apply every
/// selected method. Returns `(any rejection, all false hypotheses rejected)`
/// per method.
fn simulate_one(
    scenario: &Scenario,
    spec: &ContrastSpec,
    falsity: &[bool],
    rep: u64,
) -> Result<Vec<(bool, bool)>> {
    let mut rng = engine::derive_stream(scenario.seed, rep);
    let data = generate(scenario, &mut rng)?;
    let engine_seed = rng.next_u64();

    let mut cfg = RunConfig::new(scenario.b, scenario.alpha, engine_seed);
    cfg.case_mode = scenario.case_mode;
    cfg.eps = scenario.eps;
    cfg.rn_exponent = scenario.rn_exponent;
    cfg.kernel = scenario.kernel;
    cfg.parallel = false;
    let run = engine::run(&data, spec, &cfg)?;

    let labels = spec.labels();
    let mut outcomes = Vec::with_capacity(scenario.methods.len());
    for method in &scenario.methods {
        let rejections: Vec<bool> = match method {
            Method::Corrected => mtp::balanced_report(
                &run.w_obs,
                run.w_perm.view(),
                &labels,
                scenario.alpha,
                "corrected",
            )?
            .rejections(),
            Method::PermutationBonferroni => mtp::bonferroni_naive(
                &run.w_obs,
                run.w_perm_naive.view(),
                &labels,
                scenario.alpha,
            )
            .rejections(),
            Method::AsymptoticMultiple => {
                let sigma = dataset_sigma(&data, spec)?;
                let mut comp_rng = engine::competitor_stream(&cfg);
                mtp::asymptotic_multiple(
                    &run.w_obs,
                    &sigma,
                    spec,
                    scenario.kernel,
                    scenario.alpha,
                    scenario.b.max(1000),
                    &mut comp_rng,
                )?
                .rejections()
            }
            Method::AsymptoticBonferroni => {
                let df: Vec<usize> = spec.blocks().iter().map(|b| b.len).collect();
                mtp::asymptotic_bonferroni(
                    &run.w_obs,
                    &df,
                    &labels,
                    scenario.kernel,
                    scenario.alpha,
                )?
                .rejections()
            }
        };
        let any = rejections.iter().any(|&r| r);
        let all_false = falsity
            .iter()
            .zip(&rejections)
            .filter(|(&f, _)| f)
            .all(|(_, &r)| r);
        outcomes.push((any, all_false));
    }
    Ok(outcomes)
}

/// `H Gamma H'` estimated from a dataset, for the asymptotic competitor.
fn dataset_sigma(data: &DataSet, spec: &ContrastSpec) -> Result<SymMatrix> {
    let gamma = match data {
        DataSet::Grouped(s) => crate::moments::gamma_hat(s)?,
        DataSet::Survival(s) => crate::survival::rmst_moments(s)?.gamma,
    };
    crate::moments::sigma_hat(spec, &gamma)
}
