use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use telepar_core::causal::*;
use telepar_core::montecarlo::{rejection_rate, replicate};
use telepar_core::panel::{PanelDataset, PanelRow};
use telepar_core::ppml::{fit, ModelSpec};
use telepar_core::synth::{assign_cohorts, simulate_outcomes, simulate_outcomes_with, PanelConfig, TrueParameters};
use telepar_core::Error;

fn panel(n_states: usize, counties: usize, seed: u64, beta1: f64, beta2: f64) -> (PanelConfig, TrueParameters) {
    let config = PanelConfig { n_states, counties_per_state: counties, seed, ..PanelConfig::default() };
    let mut params = TrueParameters::zero(1, 0);
    params.beta1[0] = beta1;
    params.beta2[0] = beta2;
    let params = params.with_random_effects(&config, 3.0, 1.0, 0.1).unwrap();
    (config, params)
}

fn simulate(n_states: usize, counties: usize, seed: u64) -> PanelDataset {
    let (c, p) = panel(n_states, counties, seed, 0.03, -0.006);
    simulate_outcomes(&assign_cohorts(&c).unwrap(), &p, &c).unwrap()
}

/// Treated rows get `slope · rel_year` before adoption.
fn with_pretrend(n_states: usize, counties: usize, seed: u64, slope: f64) -> PanelDataset {
    let (c, p) = panel(n_states, counties, seed, 0.03, -0.006);
    simulate_outcomes_with(&assign_cohorts(&c).unwrap(), &p, &c, |r| match r.rel_year() {
        Some(e) if e < 0 => slope * f64::from(e),
        _ => 0.0,
    })
    .unwrap()
}

fn types() -> Vec<String> {
    vec!["price_floor".to_string()]
}

#[test]
fn table_has_one_row_per_level_plus_acrt() {
    let ds = simulate(30, 10, 1);
    let f = fit(&ds, &build_design(&ds, &types(), DesignOptions::default()).unwrap(), &ModelSpec::default()).unwrap();
    let s = att_table(&f, "price_floor", &DEFAULT_LEVELS, 0.0).unwrap();
    let rows = s.rows();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[6].metric, "ACRT(B=0)");
    for r in &rows {
        assert!((r.ci_high - r.coefficient - 1.959964 * r.std_error).abs() < 1e-6);
    }
    let mut buf = Vec::new();
    write_table_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "policy_type,metric,coefficient,std_error,z,p,ci_low,ci_high");
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn percent_att_is_att_at_zero() {
    for seed in 0..4 {
        let ds = simulate(20, 8, seed);
        let f =
            fit(&ds, &build_design(&ds, &types(), DesignOptions::default()).unwrap(), &ModelSpec::default()).unwrap();
        let a = att_percent(&f, "price_floor").unwrap();
        assert!((a - att_at(&f, "price_floor", 0.0).unwrap().value).abs() < 1e-15);
    }
}

#[test]
fn missing_type_is_reported() {
    let ds = simulate(10, 5, 2);
    let f = fit(
        &ds,
        &build_design(&ds, &types(), DesignOptions { include_triple: false, ..Default::default() }).unwrap(),
        &ModelSpec::default(),
    )
    .unwrap();
    assert!(matches!(att_at(&f, "price_floor", 1.0), Err(Error::CoefficientMissing(_))));
    assert!(matches!(build_design(&ds, &["cap".to_string()], DesignOptions::default()), Err(Error::Data(_))));
}

proptest! {
    #[test]
    fn att_is_monotone_in_broadband(beta2 in -0.5..0.5f64, beta1 in 0.001..0.3f64, b in -3.0..12.0f64, db in 0.01..3.0f64) {
        let m = AttModel { beta2, beta1, vcov: nalgebra::Matrix2::zeros() };
        prop_assert!(m.att(b + db).value > m.att(b).value);
        prop_assert!(m.att(b).value > -1.0);
    }

    #[test]
    fn taylor_gap_is_second_order(beta2 in -0.5..0.5f64, beta1 in -0.3..0.3f64) {
        let m = AttModel { beta2, beta1, vcov: nalgebra::Matrix2::zeros() };
        let gap = m.taylor_gap();
        // exp(β₂)(exp(β₁) − 1 − β₁) lies in [0, exp(β₂)β₁²exp(|β₁|)/2].
        prop_assert!(gap >= -1e-15);
        prop_assert!(gap <= beta2.exp() * beta1 * beta1 * beta1.abs().exp() / 2.0 + 1e-15);
    }
}

/// Resamples whole states with replacement, relabelling duplicates.
fn cluster_resample(ds: &PanelDataset, rng: &mut ChaCha8Rng) -> PanelDataset {
    let mut states: Vec<u32> = ds.rows.iter().map(|r| r.state_id).collect();
    states.sort_unstable();
    states.dedup();
    let mut rows: Vec<PanelRow> = Vec::with_capacity(ds.rows.len());
    for draw in 0..states.len() as u32 {
        let s = states[rng.random_range(0..states.len())];
        for r in ds.rows.iter().filter(|r| r.state_id == s) {
            let mut r = r.clone();
            r.county_id += 100_000 * (draw + 1);
            r.state_id = draw + 1;
            r.cluster_id = draw + 1;
            rows.push(r);
        }
    }
    PanelDataset { rows, type_names: ds.type_names.clone(), control_names: ds.control_names.clone() }
}

#[test]
fn delta_method_matches_cluster_bootstrap() {
    let ds = simulate(40, 10, 11);
    let spec = ModelSpec::default();
    let t = types();
    let f = fit(&ds, &build_design(&ds, &t, DesignOptions::default()).unwrap(), &spec).unwrap();
    let m = AttModel::from_fit(&f, "price_floor").unwrap();
    let draws: Vec<Option<(f64, f64)>> = replicate(500, 77, |_, s| {
        let b = cluster_resample(&ds, &mut ChaCha8Rng::seed_from_u64(s));
        let f = fit(&b, &build_design(&b, &t, DesignOptions::default()).ok()?, &spec).ok()?;
        let m = AttModel::from_fit(&f, "price_floor").ok()?;
        Some((m.att(2.0).value, m.acrt(0.0).value))
    });
    let draws: Vec<(f64, f64)> = draws.into_iter().flatten().collect();
    assert!(draws.len() >= 490);
    let sd = |v: Vec<f64>| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let boot_att = sd(draws.iter().map(|d| d.0).collect());
    let boot_acrt = sd(draws.iter().map(|d| d.1).collect());
    let (se_att, se_acrt) = (m.att(2.0).se, m.acrt(0.0).se);
    assert!((se_att / boot_att - 1.0).abs() < 0.15, "ATT(2): delta {se_att} vs bootstrap {boot_att}");
    assert!((se_acrt / boot_acrt - 1.0).abs() < 0.15, "ACRT(0): delta {se_acrt} vs bootstrap {boot_acrt}");
}

#[test]
fn event_study_base_year_and_empty_cells() {
    let ds = simulate(20, 5, 3);
    let es = event_study(&ds, &EventStudySpec { post: 5, bootstrap_reps: 99, ..EventStudySpec::default() }).unwrap();
    let base = es.coefficients.iter().find(|c| c.rel_year == -1).unwrap();
    assert_eq!((base.coef, base.coef_bb), (0.0, Some(0.0)));
    assert_eq!(es.coefficients.len(), 13);
    assert!(es.fit.index_of(&rel_name(-1)).is_none());
    let pre = es.pre_test.unwrap();
    assert_eq!(pre.df, 12);
    assert_eq!(es.pre_test_bootstrap.unwrap().df, 12);
    // Cohorts end in 2017 on a 2008–2017 panel: nobody is observed 6 years out.
    assert!(matches!(event_study(&ds, &EventStudySpec::default()), Err(Error::EmptyCell(_))));
}

#[test]
fn event_study_pre_coefficients_are_quiet_under_the_null() {
    let spec = EventStudySpec { post: 5, bootstrap_reps: 0, ..EventStudySpec::default() };
    let runs: Vec<Vec<bool>> = replicate(200, 31, |_, s| {
        let es = event_study(&simulate(50, 20, s), &spec).unwrap();
        es.coefficients
            .iter()
            .filter(|c| c.rel_year < -1)
            .flat_map(|c| [(c.coef, c.se), (c.coef_bb.unwrap(), c.se_bb.unwrap())])
            .map(|(b, se)| (b / se).abs() > 1.959964)
            .collect()
    });
    for j in 0..runs[0].len() {
        let rejections = runs.iter().filter(|r| r[j]).count();
        assert!(rejections <= 20, "pre-period coefficient {j} significant in {rejections}/200 reps");
    }
}

#[test]
fn event_study_detects_a_linear_pretrend() {
    let spec = EventStudySpec { post: 5, bootstrap_reps: 199, ..EventStudySpec::default() };
    let p: Vec<f64> = replicate(50, 41, |_, s| {
        let ds = with_pretrend(50, 10, s, 0.03);
        assert_eq!(ds.len(), 5000);
        event_study(&ds, &spec).unwrap().pre_test_bootstrap.unwrap().p_value
    });
    let power = rejection_rate(&p, 0.05);
    assert!(power > 0.8, "power {power}");
}

#[test]
fn placebo_detects_a_pretrend() {
    let spec = ModelSpec::default();
    let p: Vec<f64> =
        replicate(50, 43, |_, s| placebo_test(&with_pretrend(50, 10, s, 0.03), &spec, 2, true).unwrap().treat_trend.p);
    let power = rejection_rate(&p, 0.05);
    assert!(power > 0.5, "power {power}");
}

#[test]
fn placebo_needs_treated_states() {
    let config =
        PanelConfig { n_states: 6, counties_per_state: 3, never_treated_fraction: 1.0, ..PanelConfig::default() };
    let ds = simulate_outcomes(&assign_cohorts(&config).unwrap(), &TrueParameters::zero(1, 0), &config).unwrap();
    assert!(matches!(placebo_test(&ds, &ModelSpec::default(), 2, true), Err(Error::Data(_))));
}
