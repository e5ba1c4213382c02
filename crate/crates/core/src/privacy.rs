//! Privacy accounting for the sampling-and-threshold protocol.
//!
//! With population `n`, maximum sequence length `L`, vote threshold `theta` and
//! batch scale `gamma` (batch size `m = gamma * sqrt(n)`), one protocol
//! execution is `(epsilon, delta)`-differentially private with
//!
//! ```text
//! epsilon = L * ln(1 + 1 / (sqrt(n) / (gamma * theta) - 1))
//! delta   = (theta - 2) / ((theta - 3) * theta!)
//! ```
//!
//! whenever `4 <= theta <= sqrt(n)` and `1 <= gamma <= sqrt(n) / (theta + 1)`.
//! The inverse direction picks `theta` from a target `delta` through the
//! Lambert W function and then solves for `gamma` in closed form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambert::lambert_w;
use crate::registry::{no_arg, Registry};

/// Floor applied to the Lambert-derived threshold.
pub const MIN_LAMBERT_THETA: u32 = 10;

/// Relative slack allowed on the closed upper bounds of the valid region.
const RANGE_SLACK: f64 = 1e-12;

fn sqrt_n(n: u64) -> f64 {
    (n as f64).sqrt()
}

/// `ln(k!)` by direct summation; exact enough for the thresholds used here.
pub(crate) fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| f64::from(i).ln()).sum()
}

/// Checks the ranges under which the privacy bound holds.
pub fn check_ranges(n: u64, theta: u32, gamma: f64) -> Result<()> {
    let root = sqrt_n(n);
    if theta < 4 {
        return Err(Error::range(format!("theta >= 4 violated: theta = {theta}")));
    }
    if f64::from(theta) > root {
        return Err(Error::range(format!(
            "theta <= sqrt(n) violated: theta = {theta}, sqrt(n) = {root:.6}"
        )));
    }
    if !gamma.is_finite() || gamma < 1.0 {
        return Err(Error::range(format!("gamma >= 1 violated: gamma = {gamma}")));
    }
    let cap = root / f64::from(theta + 1);
    if gamma > cap * (1.0 + RANGE_SLACK) {
        return Err(Error::range(format!(
            "gamma <= sqrt(n)/(theta+1) violated: gamma = {gamma:.6}, bound = {cap:.6}"
        )));
    }
    Ok(())
}

/// Privacy loss `epsilon` of one execution.
pub fn epsilon_from(n: u64, max_length: u32, theta: u32, gamma: f64) -> Result<f64> {
    if max_length == 0 {
        return Err(Error::range("L >= 1 violated: L = 0"));
    }
    check_ranges(n, theta, gamma)?;
    // 1 + 1/(1/r - 1) = 1/(1 - r) with r = gamma*theta/sqrt(n)
    let r = gamma * f64::from(theta) / sqrt_n(n);
    Ok(-f64::from(max_length) * (-r).ln_1p())
}

/// Failure probability `delta` for a threshold, evaluated in log space.
pub fn delta_from(theta: u32) -> Result<f64> {
    if theta < 4 {
        return Err(Error::range(format!("theta >= 4 violated: theta = {theta}")));
    }
    let t = f64::from(theta);
    Ok(((t - 2.0).ln() - (t - 3.0).ln() - ln_factorial(theta)).exp())
}

/// A threshold together with how it was reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaChoice {
    pub theta: u32,
    /// `ceil(e^{W(C)+1} - 1/2)` before the floor and the post-hoc correction.
    /// `None` for rules that do not use the Lambert estimate.
    pub lambert_theta: Option<u32>,
    /// Times `theta` was incremented because `delta_from(theta)` missed the target.
    pub increments: u32,
}

/// Picks `theta` for a target `delta` via the Lambert W estimate, then raises
/// it until `delta_from(theta) <= delta_target`.
pub fn select_theta_detailed(delta_target: f64) -> Result<ThetaChoice> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(Error::range(format!(
            "0 < delta < 1 violated: delta = {delta_target}"
        )));
    }
    let c = (8.0 / (7.0 * (2.0 * std::f64::consts::PI).sqrt() * delta_target)).ln()
        / std::f64::consts::E;
    let w = lambert_w(c.max(0.0))?;
    let estimate = ((w + 1.0).exp() - 0.5).ceil();
    let lambert_theta = estimate.max(0.0) as u32;
    let mut theta = lambert_theta.max(MIN_LAMBERT_THETA);
    let mut increments = 0;
    while delta_from(theta)? > delta_target {
        theta += 1;
        increments += 1;
    }
    if increments > 0 {
        log::debug!(
            "lambert threshold {lambert_theta} missed delta {delta_target:e}; raised to {theta}"
        );
    }
    Ok(ThetaChoice {
        theta,
        lambert_theta: Some(lambert_theta),
        increments,
    })
}

pub fn select_theta(delta_target: f64) -> Result<u32> {
    select_theta_detailed(delta_target).map(|c| c.theta)
}

/// `ceil(log10(n) + 6)`, valid for `n >= 10^4`. Computed with integers so
/// exact powers of ten do not suffer from rounding.
pub fn theta_log_rule(n: u64) -> Result<u32> {
    if n < 10_000 {
        return Err(Error::range(format!(
            "n >= 10^4 violated for the logarithmic threshold rule: n = {n}"
        )));
    }
    let mut digits = 0u32;
    let mut pow = 1u128;
    while pow < u128::from(n) {
        pow *= 10;
        digits += 1;
    }
    Ok(digits + 6)
}

/// Closed-form batch scale achieving `epsilon` at the given threshold.
pub fn select_gamma(n: u64, max_length: u32, epsilon: f64, theta: u32) -> Result<f64> {
    if max_length == 0 {
        return Err(Error::range("L >= 1 violated: L = 0"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::range(format!("epsilon > 0 violated: epsilon = {epsilon}")));
    }
    if theta == 0 {
        return Err(Error::range("theta >= 1 violated: theta = 0"));
    }
    let l = f64::from(max_length);
    let eps_cap = l * f64::from(theta + 1).ln();
    if epsilon > eps_cap * (1.0 + RANGE_SLACK) {
        return Err(Error::range(format!(
            "epsilon <= L*ln(theta+1) violated: epsilon = {epsilon}, bound = {eps_cap:.6}"
        )));
    }
    // (e^{eps/L} - 1) / e^{eps/L} = 1 - e^{-eps/L}
    let gamma = -(-epsilon / l).exp_m1() * sqrt_n(n) / f64::from(theta);
    if gamma < 1.0 {
        return Err(Error::PopulationTooSmall {
            n,
            max_length,
            epsilon,
            theta,
            gamma,
        });
    }
    Ok(gamma)
}

/// `floor(gamma * sqrt(n))`, at least 1.
pub fn batch_size(n: u64, gamma: f64) -> u64 {
    ((gamma * sqrt_n(n)).floor() as u64).max(1)
}

/// A strategy that fixes the vote threshold for a population size.
pub trait ThetaRule: Send + Sync + fmt::Debug {
    /// Spec string that resolves back to this rule.
    fn name(&self) -> String;

    /// The `delta` this rule aims to stay under.
    fn delta_target(&self, n: u64) -> f64;

    fn choose(&self, n: u64) -> Result<ThetaChoice>;
}

/// `delta <= 1/(300 n)` through the logarithmic rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct InverseThreeHundredN;

impl ThetaRule for InverseThreeHundredN {
    fn name(&self) -> String {
        "inv300n".into()
    }

    fn delta_target(&self, n: u64) -> f64 {
        1.0 / (300.0 * n as f64)
    }

    fn choose(&self, n: u64) -> Result<ThetaChoice> {
        Ok(ThetaChoice {
            theta: theta_log_rule(n)?,
            lambert_theta: None,
            increments: 0,
        })
    }
}

/// `delta <= 1/n^2` through the Lambert estimate.
#[derive(Debug, Clone, Copy, Default)]
pub struct InverseNSquared;

impl ThetaRule for InverseNSquared {
    fn name(&self) -> String {
        "invn2".into()
    }

    fn delta_target(&self, n: u64) -> f64 {
        let n = n as f64;
        1.0 / (n * n)
    }

    fn choose(&self, n: u64) -> Result<ThetaChoice> {
        select_theta_detailed(self.delta_target(n))
    }
}

/// A caller-supplied `delta`.
#[derive(Debug, Clone, Copy)]
pub struct ExplicitDelta(pub f64);

impl ThetaRule for ExplicitDelta {
    fn name(&self) -> String {
        format!("explicit={}", self.0)
    }

    fn delta_target(&self, _n: u64) -> f64 {
        self.0
    }

    fn choose(&self, _n: u64) -> Result<ThetaChoice> {
        select_theta_detailed(self.0)
    }
}

/// Registry of the built-in threshold rules: `inv300n`, `invn2`, `explicit=<delta>`.
pub fn theta_rules() -> Registry<dyn ThetaRule> {
    let mut r: Registry<dyn ThetaRule> = Registry::new("delta mode");
    r.register("inv300n", |arg| {
        no_arg("inv300n", arg)?;
        Ok(Box::new(InverseThreeHundredN))
    });
    r.register("invn2", |arg| {
        no_arg("invn2", arg)?;
        Ok(Box::new(InverseNSquared))
    });
    r.register("explicit", |arg| {
        let raw = arg.ok_or_else(|| Error::InvalidInput("explicit needs a delta: explicit=<delta>".into()))?;
        let delta: f64 = raw
            .parse()
            .map_err(|_| Error::InvalidInput(format!("cannot parse delta {raw:?}")))?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::range(format!("0 < delta < 1 violated: delta = {delta}")));
        }
        Ok(Box::new(ExplicitDelta(delta)))
    });
    r
}

/// Resolves a delta-mode spec string against [`theta_rules`].
pub fn theta_rule(spec: &str) -> Result<Box<dyn ThetaRule>> {
    theta_rules().resolve(spec)
}

/// A validated parameter set and the guarantee it realizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct PrivacyParams {
    n: u64,
    max_length: u32,
    theta: u32,
    gamma: f64,
    batch_size: u64,
    epsilon: f64,
    delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_mode: Option<String>,
    theta_increments: u32,
}

#[derive(Deserialize)]
struct RawParams {
    n: u64,
    max_length: u32,
    theta: u32,
    gamma: f64,
    #[serde(default)]
    delta_target: Option<f64>,
    #[serde(default)]
    delta_mode: Option<String>,
    #[serde(default)]
    theta_increments: u32,
}

impl TryFrom<RawParams> for PrivacyParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        let mut p = PrivacyParams::new(raw.n, raw.max_length, raw.theta, raw.gamma)?;
        p.delta_target = raw.delta_target;
        p.delta_mode = raw.delta_mode;
        p.theta_increments = raw.theta_increments;
        Ok(p)
    }
}

impl PrivacyParams {
    /// Validates the ranges and derives `m`, `epsilon` and `delta`.
    pub fn new(n: u64, max_length: u32, theta: u32, gamma: f64) -> Result<Self> {
        let epsilon = epsilon_from(n, max_length, theta, gamma)?;
        let delta = delta_from(theta)?;
        Ok(Self {
            n,
            max_length,
            theta,
            gamma,
            batch_size: batch_size(n, gamma),
            epsilon,
            delta,
            delta_target: None,
            delta_mode: None,
            theta_increments: 0,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn max_length(&self) -> u32 {
        self.max_length
    }
    pub fn theta(&self) -> u32 {
        self.theta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn batch_size(&self) -> u64 {
        self.batch_size
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn delta_target(&self) -> Option<f64> {
        self.delta_target
    }
    pub fn delta_mode(&self) -> Option<&str> {
        self.delta_mode.as_deref()
    }
    pub fn theta_increments(&self) -> u32 {
        self.theta_increments
    }
}

/// Chooses `(theta, gamma, m)` so one execution over `n` users with sequences
/// of length at most `max_length` is `(epsilon, delta)`-private, where `delta`
/// comes from `rule`.
pub fn choose_parameters(
    n: u64,
    max_length: u32,
    epsilon: f64,
    rule: &dyn ThetaRule,
) -> Result<PrivacyParams> {
    if n == 0 {
        return Err(Error::range("n >= 1 violated: n = 0"));
    }
    let choice = rule.choose(n)?;
    let gamma = select_gamma(n, max_length, epsilon, choice.theta)?;
    let mut params = PrivacyParams::new(n, max_length, choice.theta, gamma)?;
    params.delta_target = Some(rule.delta_target(n));
    params.delta_mode = Some(rule.name());
    params.theta_increments = choice.increments;
    Ok(params)
}
