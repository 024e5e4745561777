use super::*;
use crate::data::Subject;
use crate::rng;
use crate::simulate::{sample_dataset, ScenarioConfig};
use crate::testutil::random_dataset;
use proptest::prelude::*;
use rand::Rng;

fn ds(rows: &[(f64, bool, f64)]) -> Dataset {
    Dataset::new(
        rows.iter()
            .map(|&(t, e, z)| Subject::constant(t, e, vec![z]))
            .collect(),
        4.0,
    )
    .unwrap()
}

fn scenario_model(n: usize, seed: u64) -> FittedModel {
    let data = sample_dataset(&ScenarioConfig::delayed_effect(n), seed).unwrap();
    FittedModel::fit(data, &ProfileFitConfig::with_window(0.5, 1.5))
        .unwrap()
        .with_smooth_hazard(4.0 / DEFAULT_GRID_DIVISIONS as f64)
        .unwrap()
        .with_censoring(DEFAULT_MAX_STRATA)
        .unwrap()
}

/// Per-event loop over all subjects.
fn naive_breslow(data: &Dataset, theta: &ChangePointParams) -> Vec<(f64, f64)> {
    data.event_times()
        .into_iter()
        .map(|t| {
            let deaths = data
                .subjects()
                .iter()
                .filter(|s| s.event && s.observed_time == t)
                .count() as f64;
            let denom: f64 = data
                .subjects()
                .iter()
                .filter(|s| s.observed_time >= t)
                .map(|s| theta.linear_predictor(t, &s.covariates).exp())
                .sum();
            (t, deaths / denom)
        })
        .collect()
}

#[test]
fn breslow_with_zero_coefficients_is_nelson_aalen() {
    let d = random_dataset(5, 40, 2);
    let zero = ChangePointParams::new(vec![0.0; 2], vec![0.0; 2], 1.0);
    let b = breslow(&d, &zero).unwrap();
    for (k, &t) in b.jump_times.iter().enumerate() {
        let deaths = d.subjects().iter().filter(|s| s.event && s.observed_time == t).count();
        let at_risk = d.risk_set(t).len();
        assert_eq!(b.jump_sizes[k], deaths as f64 / at_risk as f64);
    }
}

#[test]
fn breslow_single_subject() {
    let d = ds(&[(1.0, true, 2.0)]);
    let theta = ChangePointParams::new(vec![0.3], vec![-1.0], 0.5);
    let b = breslow(&d, &theta).unwrap();
    assert_eq!(b.jump_times, vec![1.0]);
    // t = 1 > zeta, so beta applies
    assert!((b.jump_sizes[0] - (2.0f64).exp()).abs() < 1e-15);
}

#[test]
fn breslow_matches_naive_loop() {
    for seed in 0..20 {
        let d = random_dataset(seed, 10, 2);
        if d.n_events() == 0 {
            continue;
        }
        let theta = ChangePointParams::new(vec![0.4, -0.2], vec![-1.1, 0.8], 0.9);
        let b = breslow(&d, &theta).unwrap();
        let oracle = naive_breslow(&d, &theta);
        assert_eq!(b.jump_times.len(), oracle.len());
        for (k, (t, size)) in oracle.into_iter().enumerate() {
            assert_eq!(b.jump_times[k], t);
            assert!((b.jump_sizes[k] - size).abs() <= 1e-13 * size, "seed {seed}");
        }
    }
}

#[test]
fn breslow_piecewise_covariates() {
    let path = CovariatePath::piecewise(vec![0.5], vec![vec![0.0], vec![1.0]]).unwrap();
    let d = Dataset::new(
        vec![
            Subject::new(1.0, true, path.clone()),
            Subject::new(0.3, true, path),
            Subject::constant(2.0, false, vec![1.0]),
        ],
        4.0,
    )
    .unwrap();
    let theta = ChangePointParams::new(vec![0.7], vec![0.2], 0.8);
    let b = breslow(&d, &theta).unwrap();
    for ((t, size), got) in naive_breslow(&d, &theta).into_iter().zip(&b.jump_sizes) {
        assert!((size - got).abs() < 1e-14, "t = {t}");
    }
    assert!(matches!(breslow(&ds(&[(1.0, false, 0.0)]), &theta), Err(Error::NoEvents)));
}

#[test]
fn breslow_jumps_are_event_times() {
    let m = scenario_model(300, 1);
    let events = m.data.event_times();
    assert!(m.breslow.jump_times.iter().all(|t| events.contains(t)));
    assert!(m.breslow.jump_sizes.iter().all(|&s| s > 0.0));
    assert_eq!(m.breslow.cumulative(0.0), 0.0);
}

#[test]
fn step_sampler_with_dominant_first_jump() {
    // everyone at risk has z = 0, so each jump is O(1) and the tilt e^40 dominates
    let d = ds(&[(0.5, true, 0.0), (1.5, true, 0.0), (2.5, false, 0.0)]);
    let theta = ChangePointParams::new(vec![40.0], vec![40.0], 1.0);
    let m = FittedModel::from_params(d, theta).unwrap();
    let sampler = conditional_survival_step(&m, &CovariatePath::Constant(vec![1.0]));
    let mut r = rng::stream(1, &[]);
    for _ in 0..1000 {
        assert_eq!(sampler.sample(&mut r), 0.5);
    }
}

#[test]
fn step_sampler_cdf_matches_formula() {
    let m = scenario_model(500, 2);
    let z = CovariatePath::Constant(vec![1.0]);
    let sampler = conditional_survival_step(&m, &z);
    let n = 100_000;
    let mut r = rng::stream(7, &[]);
    let mut draws: Vec<f64> = (0..n).map(|_| sampler.sample(&mut r)).collect();
    draws.sort_by(f64::total_cmp);
    let jumps = &m.breslow.jump_times;
    for &t in jumps.iter().step_by(jumps.len() / 25) {
        let cum: f64 = jumps
            .iter()
            .zip(&m.breslow.jump_sizes)
            .filter(|(&s, _)| s <= t)
            .map(|(&s, &d)| m.theta_hat.linear_predictor(s, &z).exp() * d)
            .sum();
        let p = 1.0 - (-cum).exp();
        let emp = draws.partition_point(|&x| x <= t) as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((emp - p).abs() <= 3.0 * se + 1e-12, "t = {t}: {emp} vs {p}");
        assert!((sampler.cdf(t) - p).abs() < 1e-12);
    }
    // every finite draw is a jump time
    assert!(draws.iter().filter(|x| x.is_finite()).all(|x| jumps.binary_search_by(|s| s.total_cmp(x)).is_ok()));
}

#[test]
fn kernel_mass_of_a_single_jump() {
    let tau = 4.0;
    let single = StepCumHazard {
        jump_times: vec![tau / 2.0],
        jump_sizes: vec![1.0],
    };
    let sh = SmoothHazard::from_increments(&single, tau, 0.05, 1e-3 * tau).unwrap();
    assert!((sh.integral() - 1.0).abs() < 1e-3);
    assert!(sh.values.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn reflection_keeps_boundary_mass() {
    let tau = 4.0;
    let near_zero = StepCumHazard {
        jump_times: vec![0.01, 3.99],
        jump_sizes: vec![1.0, 1.0],
    };
    let sh = SmoothHazard::from_increments(&near_zero, tau, 0.3, tau / 4096.0).unwrap();
    assert!((sh.integral() - 2.0).abs() < 1e-3, "{}", sh.integral());
}

#[test]
fn smoothed_hazard_tracks_constant_truth() {
    let data = sample_dataset(&ScenarioConfig::delayed_effect(1000), 3).unwrap();
    let m = FittedModel::fit(data, &ProfileFitConfig::with_window(0.5, 1.5))
        .unwrap()
        .with_smooth_hazard(4.0 / 4096.0)
        .unwrap();
    let sh = m.smooth_hazard.as_ref().unwrap();
    let inner: Vec<f64> = sh
        .grid()
        .filter(|(t, _)| (0.5..=3.5).contains(t))
        .map(|(_, v)| (v - 0.5).abs())
        .collect();
    let mad = inner.iter().sum::<f64>() / inner.len() as f64;
    assert!(mad < 0.15, "mean absolute deviation {mad}");
    let rel = (sh.integral() - m.breslow.total()).abs() / m.breslow.total();
    assert!(rel < 0.05, "mass defect {rel}");
}

#[test]
fn smooth_needs_events() {
    let d = ds(&[(1.0, false, 0.0), (2.0, false, 1.0)]);
    assert!(matches!(normal_reference_bandwidth(&d), Err(Error::NoEvents)));
}

fn constant_hazard_model(c: f64) -> FittedModel {
    let d = ds(&[(1.0, true, 0.0), (2.0, true, 0.0), (3.0, false, 0.0)]);
    let mut m = FittedModel::from_params(d, ChangePointParams::new(vec![0.0], vec![0.0], 1.3)).unwrap();
    let step = 4.0 / 4096.0;
    m.smooth_hazard = Some(SmoothHazard {
        tau: 4.0,
        grid_step: step,
        bandwidth: 0.1,
        values: vec![c; 4097],
    });
    m
}

#[test]
fn smooth_sampler_constant_hazard_is_truncated_exponential() {
    let c = 0.7;
    let m = constant_hazard_model(c);
    let sampler = conditional_survival_smooth(&m, &CovariatePath::Constant(vec![0.0])).unwrap();
    let n = 100_000;
    let mut r = rng::stream(3, &[]);
    let mut draws: Vec<f64> = (0..n).map(|_| sampler.sample(&mut r)).collect();
    draws.sort_by(f64::total_cmp);
    let finite = draws.iter().filter(|x| x.is_finite()).count();
    // KS distance against 1 - exp(-c t) on [0, tau]
    let mut ks: f64 = 0.0;
    for (i, &x) in draws[..finite].iter().enumerate() {
        let f = 1.0 - (-c * x).exp();
        ks = ks.max((f - i as f64 / n as f64).abs()).max((f - (i + 1) as f64 / n as f64).abs());
    }
    assert!(ks < 1.95 / (n as f64).sqrt(), "KS = {ks}");
    let beyond = (n - finite) as f64 / n as f64;
    let p = (-c * 4.0).exp();
    assert!((beyond - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    // continuous law: no repeated values
    let finite_draws = &draws[..finite];
    assert!(finite_draws.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn smooth_sampler_mean_matches_quadrature() {
    let m = scenario_model(500, 4);
    for z in [0.0, 1.0] {
        let z = CovariatePath::Constant(vec![z]);
        let sampler = conditional_survival_smooth(&m, &z).unwrap();
        // the integrand is continuous across the estimated change point
        assert!(sampler.nodes().contains(&m.theta_hat.zeta));
        let tau = m.tau();
        let k = 200_000;
        let h = tau / k as f64;
        let surv = |t: f64| (-sampler.cumulative(t)).exp();
        let mean: f64 = (0..k).map(|i| 0.5 * h * (surv(i as f64 * h) + surv((i + 1) as f64 * h))).sum();
        let second: f64 = (0..k)
            .map(|i| {
                let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                h * (a * surv(a) + b * surv(b))
            })
            .sum();
        let var = second - mean * mean;
        let n = 100_000;
        let mut r = rng::stream(9, &[]);
        let emp = (0..n).map(|_| sampler.sample(&mut r).min(tau)).sum::<f64>() / n as f64;
        assert!((emp - mean).abs() < 3.0 * (var / n as f64).sqrt(), "{emp} vs {mean}");
    }
}

/// Product-limit formula over the distinct event times.
fn naive_product_limit(obs: &[(f64, bool)], t: f64) -> f64 {
    let mut times: Vec<f64> = obs.iter().filter(|o| o.1 && o.0 <= t).map(|o| o.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&s| {
            let d = obs.iter().filter(|o| o.1 && o.0 == s).count() as f64;
            let r = obs.iter().filter(|o| o.0 >= s).count() as f64;
            1.0 - d / r
        })
        .product()
}

#[test]
fn km_no_failures_is_empirical_survival() {
    let times = [0.3, 1.2, 1.2, 2.0, 3.5, 0.7, 2.9];
    let d = ds(&times.iter().map(|&t| (t, false, 0.0)).collect::<Vec<_>>());
    let est = km_censoring(&d, DEFAULT_MAX_STRATA).unwrap();
    let g = est.stratum(&[0.0]).unwrap();
    for &t in &[0.0, 0.3, 0.5, 1.2, 2.0, 3.0, 3.5, 4.0] {
        let emp = times.iter().filter(|&&c| c > t).count() as f64 / times.len() as f64;
        assert_eq!(g.survival_at(t), emp, "t = {t}");
    }
}

#[test]
fn km_all_failures_keeps_censoring_survival_at_one() {
    let d = ds(&[(0.3, true, 0.0), (1.0, true, 0.0), (2.2, true, 0.0)]);
    let est = km_censoring(&d, DEFAULT_MAX_STRATA).unwrap();
    let g = est.stratum(&[0.0]).unwrap();
    assert!(g.times.is_empty());
    assert_eq!(g.survival_at(4.0), 1.0);
}

#[test]
fn km_matches_product_limit_oracle() {
    for seed in 0..30 {
        let mut r = rng::stream(seed, &[1]);
        let obs: Vec<(f64, bool)> = (0..10)
            .map(|_| ((r.random::<f64>() * 8.0).ceil() / 2.0, r.random::<f64>() < 0.6))
            .collect();
        let curve = kaplan_meier(&obs);
        for k in 0..=10 {
            let t = k as f64 * 0.45;
            let want = naive_product_limit(&obs, t);
            assert!((curve.survival_at(t) - want).abs() < 1e-14, "seed {seed} t {t}");
        }
    }
}

#[test]
fn km_strata_and_categorical_checks() {
    let d = ds(&[(1.0, false, 0.0), (2.0, true, 1.0), (3.0, false, 1.0)]);
    let est = km_censoring(&d, DEFAULT_MAX_STRATA).unwrap();
    assert_eq!(est.strata.len(), 2);
    assert!(matches!(est.stratum(&[2.0]), Err(Error::UnknownStratum(_))));
    assert!(matches!(km_censoring(&d, 1), Err(Error::NonCategorical(_))));
    let path = CovariatePath::piecewise(vec![0.5], vec![vec![0.0], vec![1.0]]).unwrap();
    let pw = Dataset::new(vec![Subject::new(1.0, true, path)], 4.0).unwrap();
    assert!(matches!(km_censoring(&pw, 4), Err(Error::NonCategorical(_))));

    let one = ds(&[(1.0, true, 0.0), (2.0, true, 0.0)]);
    let curves = km_curves(&one, DEFAULT_MAX_STRATA).unwrap();
    assert_eq!(curves.len(), 1);
    assert_eq!(curves[0].1.survival, vec![0.5, 0.0]);
}

#[test]
fn censoring_draws_single_support_point() {
    let d = ds(&[(1.7, false, 0.0), (0.4, true, 0.0)]);
    let est = km_censoring(&d, DEFAULT_MAX_STRATA).unwrap();
    let mut r = rng::stream(2, &[]);
    for _ in 0..100 {
        assert_eq!(sample_censoring(&est, &[0.0], None, &mut r).unwrap(), 1.7);
        // no mass above the bound
        assert_eq!(sample_censoring(&est, &[0.0], Some(2.0), &mut r).unwrap(), 4.0);
    }
}

#[test]
fn censoring_conditional_draws_follow_renormalized_tail() {
    let m = scenario_model(500, 5);
    let est = m.censoring.as_ref().unwrap();
    let g = est.stratum(&[1.0]).unwrap();
    let lb = 1.0;
    let tail = g.survival_at(lb);
    let n = 100_000;
    let mut r = rng::stream(4, &[]);
    let mut draws: Vec<f64> = (0..n)
        .map(|_| sample_censoring(est, &[1.0], Some(lb), &mut r).unwrap())
        .collect();
    draws.sort_by(f64::total_cmp);
    assert!(draws[0] > lb);
    for &t in g.times.iter().filter(|&&t| t > lb).step_by(5) {
        let p = 1.0 - g.survival_at(t) / tail;
        let emp = draws.partition_point(|&x| x <= t) as f64 / n as f64;
        assert!((emp - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12);
    }
    // administrative censoring at tau plus any residual mass
    let at_tau = draws.iter().filter(|&&x| x == 4.0).count() as f64 / n as f64;
    let last = g.survival_at(4.0 - 1e-9) / tail;
    assert!((at_tau - last).abs() <= 3.0 * (last * (1.0 - last) / n as f64).sqrt() + 1e-12);
}

#[test]
fn csv_exports() {
    let m = scenario_model(300, 6);
    let mut buf = Vec::new();
    m.breslow.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("time,cumulative_hazard\n"));
    assert_eq!(text.lines().count(), m.breslow.jump_times.len() + 1);
    let mut buf = Vec::new();
    m.smooth_hazard.as_ref().unwrap().write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4098);
}

proptest! {
    #[test]
    fn sampler_cdfs_are_monotone(seed in 0u64..1000, z in 0.0f64..=1.0) {
        let d = random_dataset(seed, 30, 1);
        prop_assume!(d.n_events() >= 2);
        let theta = ChangePointParams::new(vec![0.5], vec![-0.5], 1.0);
        let m = FittedModel::from_params(d, theta).unwrap().with_smooth_hazard(4.0 / 512.0);
        prop_assume!(m.is_ok());
        let m = m.unwrap();
        let z = CovariatePath::Constant(vec![z]);
        let step = conditional_survival_step(&m, &z);
        let smooth = conditional_survival_smooth(&m, &z).unwrap();
        prop_assert_eq!(step.cdf(0.0), 0.0);
        prop_assert_eq!(smooth.cdf(0.0), 0.0);
        let mut prev = (0.0, 0.0);
        for k in 0..=400 {
            let t = k as f64 * 0.01;
            let cur = (step.cdf(t), smooth.cdf(t));
            prop_assert!(cur.0 >= prev.0 && cur.1 >= prev.1);
            // continuity of the smooth CDF
            prop_assert!(cur.1 - prev.1 < 0.05);
            prev = cur;
        }
    }

    #[test]
    fn km_survival_is_monotone_from_one(obs in prop::collection::vec((0.0f64..4.0, any::<bool>()), 1..40)) {
        let curve = kaplan_meier(&obs);
        let mut prev = 1.0;
        for &s in &curve.survival {
            prop_assert!(s <= prev && s >= 0.0);
            prev = s;
        }
    }
}
