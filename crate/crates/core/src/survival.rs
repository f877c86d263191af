//! Kaplan-Meier estimation, restricted mean survival time (RMST), and the
//! moment quantities needed to run contrast tests on RMST vectors.

use ndarray::{Array1, Array2};

use crate::contrasts::ContrastSpec;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::moments::GroupedSample;

/// One group of right-censored observations.
#[derive(Debug, Clone)]
pub struct SurvivalGroup {
    pub time: Vec<f64>,
    pub status: Vec<bool>,
}

impl SurvivalGroup {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// Right-censored samples for `k` groups plus the restriction time `tau`.
#[derive(Debug, Clone)]
pub struct SurvivalSample {
    groups: Vec<SurvivalGroup>,
    tau: f64,
}

impl SurvivalSample {
    pub fn new(groups: Vec<SurvivalGroup>, tau: f64) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::InvalidInput("need at least 2 groups".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidInput("restriction time tau must be > 0".into()));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.time.len() != g.status.len() {
                return Err(Error::InvalidInput(format!(
                    "group {}: time and status lengths differ",
                    i + 1
                )));
            }
            if g.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "group {} has {} observations, need at least 2",
                    i + 1,
                    g.len()
                )));
            }
            if g.time.iter().any(|&t| !(t >= 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "group {}: times must be non-negative and finite",
                    i + 1
                )));
            }
        }
        Ok(Self { groups, tau })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn group(&self, i: usize) -> &SurvivalGroup {
        &self.groups[i]
    }

    /// Groups that contain no observed event at or before `tau`; their RMST
    /// variance is undefined.
    pub fn groups_without_events(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                !g.time
                    .iter()
                    .zip(&g.status)
                    .any(|(&t, &s)| s && t <= self.tau)
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Encode the (time, status) pairs as a grouped sample with two columns,
    /// so the pooled permutation machinery applies unchanged.
    pub fn to_grouped(&self) -> GroupedSample {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let mut m = Array2::zeros((g.len(), 2));
                for (row, (&t, &s)) in g.time.iter().zip(&g.status).enumerate() {
                    m[[row, 0]] = t;
                    m[[row, 1]] = if s { 1.0 } else { 0.0 };
                }
                m
            })
            .collect();
        GroupedSample::new(groups).expect("sizes validated on construction")
    }

    /// Inverse of [`to_grouped`]: rebuild a survival sample from permuted
    /// two-column groups.
    pub fn from_grouped(sample: &GroupedSample, tau: f64) -> Self {
        let groups = (0..sample.k())
            .map(|i| {
                let g = sample.group(i);
                SurvivalGroup {
                    time: g.column(0).to_vec(),
                    status: g.column(1).iter().map(|&v| v != 0.0).collect(),
                }
            })
            .collect();
        Self { groups, tau }
    }
}

/// A right-continuous step survival function: value 1 before the first jump,
/// `values[i]` from `jump_times[i]` onward.
#[derive(Debug, Clone)]
pub struct StepSurvival {
    pub jump_times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepSurvival {
    pub fn at(&self, t: f64) -> f64 {
        match self.jump_times.iter().rposition(|&jt| jt <= t) {
            Some(i) => self.values[i],
            None => 1.0,
        }
    }
}

/// Product-limit (Kaplan-Meier) estimator.
///
/// At each distinct event time with `d` events and `y` at risk the survival
/// drops by the factor `1 - d/y`; censorings only shrink the risk set. Ties
/// between events and censorings at the same time are resolved events-first.
pub fn kaplan_meier(time: &[f64], status: &[bool]) -> Result<StepSurvival> {
    if time.is_empty() || time.len() != status.len() {
        return Err(Error::InvalidInput(
            "kaplan_meier needs non-empty, equal-length time and status".into(),
        ));
    }
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].partial_cmp(&time[b]).unwrap());

    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut at_risk = time.len();
    let mut idx = 0;
    while idx < order.len() {
        let t = time[order[idx]];
        let mut events = 0usize;
        let mut total = 0usize;
        while idx < order.len() && time[order[idx]] == t {
            if status[order[idx]] {
                events += 1;
            }
            total += 1;
            idx += 1;
        }
        if events > 0 {
            surv *= 1.0 - events as f64 / at_risk as f64;
            jump_times.push(t);
            values.push(surv);
        }
        at_risk -= total;
    }
    Ok(StepSurvival { jump_times, values })
}

/// Exact integral of the step survival function over `[0, tau]`.
pub fn rmst(s: &StepSurvival, tau: f64) -> f64 {
    let mut integral = 0.0;
    let mut prev_t = 0.0;
    let mut value = 1.0;
    for (&t, &v) in s.jump_times.iter().zip(&s.values) {
        if t >= tau {
            break;
        }
        integral += value * (t - prev_t);
        prev_t = t;
        value = v;
    }
    integral + value * (tau - prev_t)
}

/// Greenwood-type variance of the RMST estimator.
#[derive(Debug, Clone, Copy)]
pub struct RmstVariance {
    pub value: f64,
    /// True when some event time exhausted the risk set and the term's
    /// denominator was capped at `y^2`.
    pub tie_capped: bool,
}

/// Variance estimate of the RMST at horizon `tau`:
/// `sum over event times t_j <= tau of A(t_j)^2 d_j / (y_j (y_j - d_j))`
/// with `A(t) = integral of the Kaplan-Meier curve over [t, tau]`.
/// Zero when no event occurs at or before `tau`.
pub fn rmst_variance(time: &[f64], status: &[bool], tau: f64) -> Result<RmstVariance> {
    if time.is_empty() || time.len() != status.len() {
        return Err(Error::InvalidInput(
            "rmst_variance needs non-empty, equal-length time and status".into(),
        ));
    }
    let km = kaplan_meier(time, status)?;
    let total = rmst(&km, tau);

    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].partial_cmp(&time[b]).unwrap());

    let mut value = 0.0;
    let mut tie_capped = false;
    let mut at_risk = time.len();
    let mut idx = 0;
    // Running integral of the KM curve from 0 to the current event time.
    let mut integral_to_t = 0.0;
    let mut prev_t = 0.0;
    let mut surv = 1.0;
    while idx < order.len() {
        let t = time[order[idx]];
        let mut events = 0usize;
        let mut total_at_t = 0usize;
        while idx < order.len() && time[order[idx]] == t {
            if status[order[idx]] {
                events += 1;
            }
            total_at_t += 1;
            idx += 1;
        }
        if t > tau {
            break;
        }
        integral_to_t += surv * (t - prev_t);
        prev_t = t;
        if events > 0 {
            let a = total - integral_to_t;
            let y = at_risk as f64;
            let d = events as f64;
            let denom = if at_risk == events {
                tie_capped = true;
                y * y
            } else {
                y * (y - d)
            };
            value += a * a * d / denom;
            surv *= 1.0 - d / y;
        }
        at_risk -= total_at_t;
    }
    Ok(RmstVariance { value, tie_capped })
}

/// Per-group RMST moments: estimate vector, nuisance covariance, and flags.
#[derive(Debug, Clone)]
pub struct RmstMoments {
    /// Per-group RMST estimates (length `k`).
    pub mu: Array1<f64>,
    /// Diagonal nuisance matrix scaled for the root-n limit.
    pub gamma: SymMatrix,
    /// Groups with no observed event at or before `tau`.
    pub degenerate_groups: Vec<usize>,
    /// True when any variance term needed tie capping.
    pub tie_capped: bool,
}

/// Compute RMST moments for every group without failing on degenerate
/// groups; callers decide whether a zero-variance group is an error.
///
/// The nuisance diagonal is `n * sigma_i^2` with `sigma_i^2` the per-group
/// variance estimate of `mu_i`, which makes `H Gamma H'` an estimate of the
/// covariance of `sqrt(n) H mu_hat`.
pub fn rmst_moments(sample: &SurvivalSample) -> Result<RmstMoments> {
    let k = sample.k();
    let n = sample.n() as f64;
    let tau = sample.tau();
    let mut mu = Array1::zeros(k);
    let mut gamma = Array2::zeros((k, k));
    let mut tie_capped = false;
    for i in 0..k {
        let g = sample.group(i);
        let km = kaplan_meier(&g.time, &g.status)?;
        mu[i] = rmst(&km, tau);
        let var = rmst_variance(&g.time, &g.status, tau)?;
        tie_capped |= var.tie_capped;
        gamma[[i, i]] = n * var.value;
    }
    Ok(RmstMoments {
        mu,
        gamma: SymMatrix::new(gamma)?,
        degenerate_groups: sample.groups_without_events(),
        tie_capped,
    })
}

/// Contrast estimate and nuisance for an RMST comparison. Errors when any
/// group has no observed event at or before `tau`.
pub fn rmst_theta(
    spec: &ContrastSpec,
    sample: &SurvivalSample,
) -> Result<(Array1<f64>, SymMatrix)> {
    if spec.d() != 1 {
        return Err(Error::InvalidInput("RMST contrasts require a d=1 spec".into()));
    }
    if spec.k() != sample.k() {
        return Err(Error::InvalidInput(format!(
            "contrast spec is for k={} but sample has k={}",
            spec.k(),
            sample.k()
        )));
    }
    let moments = rmst_moments(sample)?;
    if let Some(&group) = moments.degenerate_groups.first() {
        return Err(Error::VarianceUndefined { group: group + 1 });
    }
    let theta = spec.matrix().dot(&moments.mu);
    Ok((theta, moments.gamma))
}
