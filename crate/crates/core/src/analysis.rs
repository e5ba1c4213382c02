//! Utility predictions for the protocol.
//!
//! A sequence held by `W` of `n` users survives one round when at least
//! `theta` of the `m` sampled users hold it, which is the upper tail of a
//! hypergeometric distribution. When the sequence shares no prefix with any
//! other sequence it has to survive each of its `L` rounds independently, so
//! its discovery probability is that tail raised to the power `L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::{choose_parameters, PrivacyParams, ThetaRule};

/// Largest population the minimum-population search will consider.
pub const MAX_POPULATION: u64 = 1_000_000_000;

/// Where the minimum-population bracketing starts.
pub const MIN_SEARCH_POPULATION: u64 = 16;

/// Consecutive populations above the answer that must also satisfy the target.
const STABILITY_WINDOW: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryQuery {
    pub n: u64,
    pub batch_size: u64,
    pub theta: u32,
    /// Users holding the target sequence.
    pub occurrences: u64,
    /// Rounds the sequence must survive (its length including EOS).
    pub length: u32,
}

impl DiscoveryQuery {
    pub fn validate(&self) -> Result<()> {
        if self.occurrences > self.n {
            return Err(Error::range(format!(
                "W <= n violated: W = {}, n = {}",
                self.occurrences, self.n
            )));
        }
        if self.batch_size == 0 || self.batch_size > self.n {
            return Err(Error::range(format!(
                "1 <= m <= n violated: m = {}, n = {}",
                self.batch_size, self.n
            )));
        }
        if self.theta == 0 {
            return Err(Error::range("theta >= 1 violated: theta = 0"));
        }
        if self.length == 0 {
            return Err(Error::range("L >= 1 violated: L = 0"));
        }
        Ok(())
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)` for integer `n >= 1`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        let ln_fact: f64 = (2..=n as u32).map(|k| f64::from(k).ln()).sum();
        return ln_fact - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np - x`, with a series when `x` is near `np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Log binomial pmf with `q = 1 - p` supplied separately.
fn ln_binom_pmf(x: f64, n: f64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    if x < 0.0 || x > n {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        if n == 0.0 {
            return 0.0;
        }
        return if p < 0.1 { -bd0(n, n * q) - n * p } else { n * q.ln() };
    }
    if x == n {
        return if q < 0.1 { -bd0(n, n * p) - n * q } else { n * p.ln() };
    }
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(x, n * p) - bd0(n - x, n * q);
    let lf = LN_2PI + x.ln() + (-x / n).ln_1p();
    lc - 0.5 * lf
}

/// Hypergeometric sampler for one target: `n` users, `holders` hold it, `m` drawn.
struct Hypergeometric {
    n: f64,
    holders: f64,
    m: f64,
    p: f64,
    q: f64,
    ln_norm: f64,
}

impl Hypergeometric {
    fn new(n: u64, holders: u64, m: u64) -> Self {
        let (nf, hf, mf) = (n as f64, holders as f64, m as f64);
        let p = mf / nf;
        let q = (nf - mf) / nf;
        Self {
            n: nf,
            holders: hf,
            m: mf,
            p,
            q,
            ln_norm: ln_binom_pmf(mf, nf, p, q),
        }
    }

    /// `ln P(X = x)`.
    fn ln_pmf(&self, x: u64) -> f64 {
        let x = x as f64;
        let others = self.n - self.holders;
        if x > self.holders || x > self.m || self.m - x > others {
            return f64::NEG_INFINITY;
        }
        ln_binom_pmf(x, self.holders, self.p, self.q)
            + ln_binom_pmf(self.m - x, others, self.p, self.q)
            - self.ln_norm
    }
}

/// `ln(sum exp(terms))` shifted by the largest term.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Probability that at least `theta` of the `m` users sampled from `n` hold a
/// sequence held by `occurrences` users.
///
/// Sums whichever tail lies away from the mode: the upper tail directly when
/// `theta` is above the mode, otherwise one minus the lower tail. Both sums
/// run over log-space terms combined with a max-shifted log-sum-exp.
pub fn round_probability(n: u64, m: u64, theta: u32, occurrences: u64) -> Result<f64> {
    DiscoveryQuery {
        n,
        batch_size: m,
        theta,
        occurrences,
        length: 1,
    }
    .validate()?;
    let w = occurrences;
    let theta = u64::from(theta);
    let lo = m.saturating_sub(n - w);
    let hi = w.min(m);
    if theta <= lo {
        return Ok(1.0);
    }
    if theta > hi {
        return Ok(0.0);
    }
    let dist = Hypergeometric::new(n, w, m);
    let mode = ((m as f64 + 1.0) * (w as f64 + 1.0) / (n as f64 + 2.0)).floor() as u64;

    if theta > mode {
        // Terms decrease from theta onward.
        let first = dist.ln_pmf(theta);
        let mut terms = vec![first];
        for x in theta + 1..=hi {
            let t = dist.ln_pmf(x);
            terms.push(t);
            if t < first - 50.0 {
                break;
            }
        }
        Ok(log_sum_exp(&terms).exp().clamp(0.0, 1.0))
    } else {
        let terms: Vec<f64> = (lo..theta).map(|x| dist.ln_pmf(x)).collect();
        Ok((1.0 - log_sum_exp(&terms).exp()).clamp(0.0, 1.0))
    }
}

/// Worst-case probability of discovering the target: the per-round survival
/// probability raised to the number of rounds it must survive.
pub fn discovery_rate(query: &DiscoveryQuery) -> Result<f64> {
    query.validate()?;
    let p = round_probability(query.n, query.batch_size, query.theta, query.occurrences)?;
    Ok(p.powi(query.length as i32))
}

/// `ceil(f * n)`, ignoring float noise below one part in 10^12.
pub fn occurrences_for(frequency: f64, n: u64) -> u64 {
    let raw = frequency * n as f64;
    let w = (raw - raw.abs() * 1e-12).ceil();
    (w.max(0.0) as u64).min(n)
}

/// Result of the minimum-population search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinPopulation {
    pub n: u64,
    pub occurrences: u64,
    pub rate: f64,
    pub params: PrivacyParams,
}

fn evaluate(
    n: u64,
    frequency: f64,
    max_length: u32,
    epsilon: f64,
    rule: &dyn ThetaRule,
) -> Option<(PrivacyParams, u64, f64)> {
    let params = choose_parameters(n, max_length, epsilon, rule).ok()?;
    if params.batch_size() > n {
        return None;
    }
    let occurrences = occurrences_for(frequency, n);
    let rate = discovery_rate(&DiscoveryQuery {
        n,
        batch_size: params.batch_size(),
        theta: params.theta(),
        occurrences,
        length: max_length,
    })
    .ok()?;
    Some((params, occurrences, rate))
}

/// Smallest population for which a sequence of the given frequency reaches
/// `target_rate`, with parameters chosen for `(epsilon, rule)` at that size.
///
/// Brackets by doubling from [`MIN_SEARCH_POPULATION`] and bisects. Integer
/// jumps in `theta` make the predicate non-monotone in places, so a candidate
/// is only accepted when the next three populations also satisfy the target;
/// otherwise the search resumes above the first failure.
pub fn min_population(
    frequency: f64,
    target_rate: f64,
    epsilon: f64,
    max_length: u32,
    rule: &dyn ThetaRule,
) -> Result<MinPopulation> {
    if !(frequency > 0.0 && frequency < 1.0) {
        return Err(Error::range(format!(
            "0 < f < 1 violated: f = {frequency}"
        )));
    }
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::range(format!(
            "0 < target rate < 1 violated: rate = {target_rate}"
        )));
    }
    let ok = |n: u64| {
        evaluate(n, frequency, max_length, epsilon, rule).is_some_and(|(_, _, r)| r >= target_rate)
    };

    let mut floor = MIN_SEARCH_POPULATION;
    loop {
        // Bracket: `lo` fails (or is below the floor), `hi` succeeds.
        let mut lo = floor - 1;
        let mut hi = floor;
        while !ok(hi) {
            if hi >= MAX_POPULATION {
                return Err(Error::Unsatisfiable {
                    cap: MAX_POPULATION,
                });
            }
            lo = hi;
            hi = (hi * 2).min(MAX_POPULATION);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        match (1..=STABILITY_WINDOW).find(|k| !ok(hi + k)) {
            None => {
                let (params, occurrences, rate) =
                    evaluate(hi, frequency, max_length, epsilon, rule).expect("predicate held");
                return Ok(MinPopulation {
                    n: hi,
                    occurrences,
                    rate,
                    params,
                });
            }
            Some(k) => floor = hi + k + 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::privacy::InverseNSquared;

    #[test]
    fn trivial_tails() {
        assert_eq!(round_probability(50, 10, 1, 0).unwrap(), 0.0);
        assert_eq!(round_probability(50, 10, 10, 50).unwrap(), 1.0);
        assert_eq!(round_probability(50, 10, 11, 50).unwrap(), 0.0);
    }

    #[test]
    fn small_enumeration() {
        // 7 of the 10 pairs from 5 users contain one of the 2 holders.
        let p = round_probability(5, 2, 1, 2).unwrap();
        assert!((p - 0.7).abs() < 1e-15);
        let q = DiscoveryQuery {
            n: 5,
            batch_size: 2,
            theta: 1,
            occurrences: 2,
            length: 3,
        };
        assert!((discovery_rate(&q).unwrap() - 0.343).abs() < 1e-14);
        let one = DiscoveryQuery { length: 1, ..q };
        assert_eq!(discovery_rate(&one).unwrap(), p);
    }

    #[test]
    fn rejects_invalid_queries() {
        assert!(round_probability(5, 6, 1, 2).is_err());
        assert!(round_probability(5, 0, 1, 2).is_err());
        assert!(round_probability(5, 2, 0, 2).is_err());
        assert!(round_probability(5, 2, 1, 6).is_err());
    }

    #[test]
    fn large_population_is_finite() {
        // n = 10^7 with the invn2 parameters for epsilon = 2.
        let p = round_probability(10_000_000, 106_627, 17, 300).unwrap();
        assert!((0.0..=1.0).contains(&p));
        let mean = 106_627.0 * 300.0 / 1e7;
        assert!(mean < 17.0 && p < 0.5);
    }

    #[test]
    fn monotone_in_occurrences() {
        let mut prev = 0.0;
        for w in 0..=200 {
            let q = DiscoveryQuery {
                n: 1000,
                batch_size: 60,
                theta: 5,
                occurrences: w,
                length: 4,
            };
            let r = discovery_rate(&q).unwrap();
            assert!(r + 1e-15 >= prev, "w={w}");
            prev = r;
        }
    }

    #[test]
    fn occurrences_round_up() {
        assert_eq!(occurrences_for(0.01, 100), 1);
        assert_eq!(occurrences_for(0.01, 150), 2);
        assert_eq!(occurrences_for(0.3, 10), 3);
    }

    #[test]
    fn min_population_meets_target() {
        let r = min_population(0.01, 0.9, 2.0, 10, &InverseNSquared).unwrap();
        assert!(r.rate >= 0.9);
        let before = evaluate(r.n - 1, 0.01, 10, 2.0, &InverseNSquared);
        assert!(before.is_none_or(|(_, _, rate)| rate < 0.9));
    }

    #[test]
    fn min_population_rejects_bad_inputs() {
        assert!(min_population(0.0, 0.9, 2.0, 10, &InverseNSquared).is_err());
        assert!(min_population(0.01, 1.0, 2.0, 10, &InverseNSquared).is_err());
    }
}
