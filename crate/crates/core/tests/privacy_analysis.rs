use proptest::prelude::*;
use triehh::analysis::{min_population, occurrences_for, round_probability, DiscoveryQuery, MIN_SEARCH_POPULATION};
use triehh::privacy::{
    delta_from, epsilon_from, select_theta_detailed, InverseNSquared, InverseThreeHundredN, MIN_LAMBERT_THETA,
};
use triehh::{choose_parameters, discovery_rate, theta_rule, PrivacyParams};

#[test]
fn epsilon_grows_with_gamma_and_theta() {
    for n in [10_000u64, 250_000, 1_000_000, 40_000_000] {
        let root = (n as f64).sqrt();
        for theta in (4..60).step_by(3) {
            let cap = root / f64::from(theta + 1);
            if cap < 1.0 {
                continue;
            }
            let gammas: Vec<f64> = (0..=8).map(|k| 1.0 + (cap - 1.0) * f64::from(k) / 8.0).collect();
            let eps: Vec<f64> = gammas.iter().map(|&g| epsilon_from(n, 10, theta, g).unwrap()).collect();
            assert!(eps.windows(2).all(|w| w[1] > w[0]) || cap == 1.0, "n={n} theta={theta}");
            let g = gammas[gammas.len() / 2];
            assert!(epsilon_from(n, 10, theta, g / 2.0).map_or(true, |e| e < eps[gammas.len() / 2]));
            // Raising theta at fixed gamma.
            if f64::from(theta + 2) <= root && g <= root / f64::from(theta + 2) {
                assert!(epsilon_from(n, 10, theta + 1, g).unwrap() > epsilon_from(n, 10, theta, g).unwrap());
            }
        }
    }
}

#[test]
fn delta_falls_with_theta() {
    let deltas: Vec<f64> = (4..=170).map(|t| delta_from(t).unwrap()).collect();
    assert!(deltas.windows(2).all(|w| w[1] < w[0]));
    assert!(deltas.iter().all(|d| d.is_finite() && *d >= 0.0));
    assert!(delta_from(25).unwrap() > 0.0);
}

#[test]
fn theta_tracks_log_ratio() {
    for a in [1i32, 2, 3] {
        for n in [1e4f64, 1e5, 1e6, 1e7] {
            let choice = select_theta_detailed(n.powi(-a)).unwrap();
            let approx = f64::from(a) * n.ln() / n.ln().ln();
            let estimate = f64::from(choice.lambert_theta.unwrap());
            assert!(
                estimate / approx <= 2.0 && estimate / approx >= 0.5,
                "a={a} n={n}: {estimate} vs {approx}"
            );
            if choice.lambert_theta.unwrap() >= MIN_LAMBERT_THETA {
                let ratio = f64::from(choice.theta) / approx;
                assert!((0.5..=2.0).contains(&ratio), "a={a} n={n}: ratio {ratio}");
            }
        }
    }
}

#[test]
fn named_rules_target_their_deltas() {
    for n in [10_000u64, 123_456, 10_000_000] {
        let p = choose_parameters(n, 10, 2.0, &InverseThreeHundredN).unwrap();
        assert!(p.delta() <= 1.0 / (300.0 * n as f64));
        let q = choose_parameters(n, 10, 2.0, &InverseNSquared).unwrap();
        assert!(q.delta() <= 1.0 / (n as f64 * n as f64));
        assert!(q.theta() >= p.theta());
        assert!(q.gamma() < p.gamma());
    }
    let explicit = theta_rule("explicit=1e-9").unwrap();
    let p = choose_parameters(1_000_000, 10, 2.0, explicit.as_ref()).unwrap();
    assert!(p.delta() <= 1e-9);
}

fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Exact tail through u128 binomials; valid while C(n, n/2) fits.
fn exact_tail(n: u64, m: u64, theta: u64, w: u64) -> f64 {
    fn c(n: u64, k: u64) -> u128 {
        if k > n {
            return 0;
        }
        let k = k.min(n - k);
        (1..=u128::from(k)).fold(1u128, |acc, i| acc * (u128::from(n - k) + i) / i)
    }
    let total = c(n, m);
    let hits: u128 = (theta..=w.min(m)).map(|x| c(w, x) * c(n - w, m - x)).sum();
    hits as f64 / total as f64
}

proptest! {
    #[test]
    fn tail_matches_exact_binomials(n in 1u64..=60, a in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 1u32..=61) {
        let m = ((n as f64 * a).round() as u64).clamp(1, n);
        let w = (n as f64 * b).round() as u64;
        let got = round_probability(n, m, t, w).unwrap();
        let want = exact_tail(n, m, u64::from(t), w);
        prop_assert!((got - want).abs() <= 1e-12, "n={} m={} t={} w={}: {} vs {}", n, m, t, w, got, want);
    }

    #[test]
    fn tail_is_a_probability_and_monotone_in_w(n in 10u64..5_000_000, frac_m in 0.0f64..1.0, frac_w in 0.0f64..0.99, t in 1u32..60) {
        let m = ((n as f64 * frac_m) as u64).clamp(1, n);
        let w = (n as f64 * frac_w) as u64;
        let p = round_probability(n, m, t, w).unwrap();
        let q = round_probability(n, m, t, w + 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(q >= p - 1e-12, "{} then {}", p, q);
    }

    #[test]
    fn params_respect_validity_ranges(n in 1u64..100_000_000, theta in 0u32..200, gamma in 0.0f64..500.0, l in 1u32..30) {
        let root = (n as f64).sqrt();
        let in_range = theta >= 4
            && f64::from(theta) <= root
            && gamma >= 1.0
            && gamma <= root / f64::from(theta + 1) * (1.0 + 1e-12);
        match PrivacyParams::new(n, l, theta, gamma) {
            Ok(p) => {
                prop_assert!(in_range);
                prop_assert!(p.batch_size() >= 1 && p.batch_size() <= n);
                prop_assert!(p.epsilon() > 0.0);
                // Below about e^-745 the bound underflows to zero.
                prop_assert!(p.delta().is_finite() && p.delta() >= 0.0);
            }
            Err(_) => prop_assert!(!in_range),
        }
    }
}

#[test]
fn log_space_tail_agrees_with_direct_sum_at_scale() {
    // A direct sum of ratios of ln-binomials; independent of the saddle-point form.
    let (n, m, w) = (1_000_000u64, 12_081u64, 2_000u64);
    for theta in [5u32, 15, 24, 40, 60] {
        let ln_total = ln_choose(n, m);
        let direct: f64 = (u64::from(theta)..=w.min(m))
            .map(|x| (ln_choose(w, x) + ln_choose(n - w, m - x) - ln_total).exp())
            .sum();
        let got = round_probability(n, m, theta, w).unwrap();
        assert!((got - direct).abs() <= 1e-9 * direct.max(1e-300) + 1e-15, "theta={theta}: {got} vs {direct}");
    }
}

#[test]
fn rate_examples() {
    let q = DiscoveryQuery {
        n: 5,
        batch_size: 2,
        theta: 1,
        occurrences: 2,
        length: 3,
    };
    assert!((discovery_rate(&q).unwrap() - 0.343).abs() < 1e-12);
    let one = DiscoveryQuery { length: 1, ..q };
    assert_eq!(discovery_rate(&one).unwrap(), round_probability(5, 2, 1, 2).unwrap());
}

#[test]
fn min_population_shape_on_grid() {
    let freqs = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05];
    let mut previous: Option<Vec<u64>> = None;
    for eps in [1.0, 2.0, 4.0] {
        let row: Vec<u64> = freqs
            .iter()
            .map(|&f| min_population(f, 0.9, eps, 10, &InverseNSquared).unwrap().n)
            .collect();
        assert!(row.windows(2).all(|w| w[1] <= w[0]), "eps={eps}: {row:?}");
        if let Some(prev) = &previous {
            assert!(row.iter().zip(prev).all(|(a, b)| a <= b), "{row:?} vs {prev:?}");
        }
        previous = Some(row);
    }
}

#[test]
fn vacuous_target_returns_smallest_feasible_population() {
    let r = min_population(0.5, 1e-12, 4.0, 10, &InverseNSquared).unwrap();
    assert!(r.rate >= 1e-12);
    for n in MIN_SEARCH_POPULATION..r.n {
        let feasible = choose_parameters(n, 10, 4.0, &InverseNSquared).is_ok_and(|p| {
            discovery_rate(&DiscoveryQuery {
                n,
                batch_size: p.batch_size(),
                theta: p.theta(),
                occurrences: occurrences_for(0.5, n),
                length: 10,
            })
            .is_ok_and(|rate| rate >= 1e-12)
        });
        assert!(!feasible, "n={n} already satisfies the target");
    }
    assert!(choose_parameters(r.n - 1, 10, 4.0, &InverseNSquared).is_err());
}

#[test]
fn unreachable_frequency_reports_cap() {
    assert!(min_population(1e-9, 0.9, 0.1, 10, &InverseNSquared).is_err());
}
