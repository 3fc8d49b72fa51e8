use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use telepar_core::causal::{
    att_table, build_design, event_study, placebo_test, write_table_csv, CausalSummary, TableRow,
};
use telepar_core::consistency::run_consistency;
use telepar_core::equilibrium::{sweep, write_sweep_csv};
use telepar_core::ingest::{
    assemble_panel, ingest_broadband, read_records, write_records, ControlTable, IngestOptions, Transform,
};
use telepar_core::montecarlo::run_recovery;
use telepar_core::panel::PanelDataset;
use telepar_core::ppml::{fit, reset_test, FitResult};
use telepar_core::stats::normal_two_sided_p;
use telepar_core::synth::{assign_cohorts, simulate_outcomes};
use telepar_core::{Error, Result};

use crate::config::{self, *};
use crate::output::Outputs;

pub struct Common<'a> {
    pub config: &'a Path,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

fn read_panel(path: &Path) -> Result<PanelDataset> {
    let ds = PanelDataset::read_csv(File::open(path)?)?;
    ds.validate()?;
    Ok(ds)
}

/// Types named in the config, or every type flagged on some row.
fn pick_types(ds: &PanelDataset, types: Option<Vec<String>>) -> Result<Vec<String>> {
    let types = types.unwrap_or_else(|| {
        ds.type_names
            .iter()
            .enumerate()
            .filter(|(k, _)| ds.rows.iter().any(|r| r.type_flags[*k]))
            .map(|(_, t)| t.clone())
            .collect()
    });
    if types.is_empty() {
        return Err(Error::Data("no treatment type has any treated rows".into()));
    }
    Ok(types)
}

fn fit_summary(f: &FitResult) -> Value {
    json!({
        "n_obs": f.n_obs,
        "n_clusters": f.n_clusters,
        "iterations": f.iterations,
        "converged": f.converged,
        "deviance": f.deviance,
        "dropped_separated": f.n_dropped_separated,
        "dropped_collinear": f.dropped_collinear,
    })
}

fn check_converged(f: &FitResult) -> Result<()> {
    if f.converged {
        Ok(())
    } else {
        Err(Error::NoConvergence { iterations: f.iterations, residual: f.deviance })
    }
}

pub fn simulate_equilibrium(c: &Common, out: &mut Outputs) -> Result<Value> {
    let cfg: SimulateConfig = config::load(c.config)?;
    if cfg.regimes.is_empty() || cfg.broadband.is_empty() {
        return Err(Error::Config("need at least one regime and one broadband level".into()));
    }
    cfg.primitives.validate().map_err(|e| Error::Config(e.to_string()))?;
    for r in &cfg.regimes {
        r.validate()?;
    }
    let rows = sweep(&cfg.primitives, &cfg.response, &cfg.regimes, &cfg.broadband)?;
    out.file("sweep.csv", |w| write_sweep_csv(&rows, w))?;
    Ok(json!({ "rows": rows.len(), "sign_ok": rows.iter().filter(|r| r.sign_ok).count() }))
}

pub fn generate_panel(c: &Common, out: &mut Outputs) -> Result<Value> {
    let mut cfg: GenerateConfig = config::load(c.config)?;
    if let Some(s) = c.seed {
        cfg.panel.seed = s;
    }
    let k = cfg.panel.type_names.len();
    if cfg.params.beta1.len() == 1 && k > 1 {
        // A single coefficient applies to every type.
        for v in [&mut cfg.params.beta1, &mut cfg.params.beta2, &mut cfg.params.beta3] {
            *v = vec![v[0]; k];
        }
    }
    let params = cfg.params.with_random_effects(&cfg.panel, cfg.county_mean, cfg.county_sd, cfg.year_sd)?;
    let assignment = assign_cohorts(&cfg.panel)?;
    let ds = simulate_outcomes(&assignment, &params, &cfg.panel)?;
    out.file("panel.csv", |w| ds.write_csv(w))?;
    out.json("assignment.json", &assignment)?;
    Ok(json!({
        "seed": cfg.panel.seed,
        "rows": ds.len(),
        "treated_states": ds.n_treated_states(),
        "never_treated_states": assignment.n_never_treated(),
    }))
}

#[derive(Serialize)]
struct CoefRow<'a> {
    name: &'a str,
    coefficient: f64,
    std_error: f64,
    z: f64,
    p: f64,
    std_error_uncorrected: f64,
}

fn coef_rows(f: &FitResult) -> Vec<CoefRow<'_>> {
    f.names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let se = f.vcov_corrected[(i, i)].sqrt();
            let z = f.coefficients[i] / se;
            CoefRow {
                name,
                coefficient: f.coefficients[i],
                std_error: se,
                z,
                p: normal_two_sided_p(z),
                std_error_uncorrected: f.vcov_cluster[(i, i)].sqrt(),
            }
        })
        .collect()
}

pub fn fit_panel(c: &Common, out: &mut Outputs) -> Result<Value> {
    let cfg: FitConfig = config::load(c.config)?;
    let ds = read_panel(&config::require_file(c.config, &cfg.panel)?)?;
    let types = pick_types(&ds, cfg.types)?;
    let regs = build_design(&ds, &types, cfg.design)?;
    let f = fit(&ds, &regs, &cfg.model)?;
    check_converged(&f)?;
    out.file("coefficients.csv", |w| write_records(&coef_rows(&f), w))?;
    Ok(json!({ "types": types, "fit": fit_summary(&f) }))
}

#[derive(Serialize)]
struct EventRow {
    rel_year: i32,
    coef: f64,
    se: f64,
    coef_bb: Option<f64>,
    se_bb: Option<f64>,
}

pub fn analyze(c: &Common, levels: Option<Vec<f64>>, out: &mut Outputs) -> Result<Value> {
    let mut cfg: AnalyzeConfig = config::load(c.config)?;
    if let Some(l) = levels {
        cfg.levels = l;
    }
    if cfg.levels.is_empty() || cfg.levels.iter().any(|b| !b.is_finite()) {
        return Err(Error::Config("levels must be a nonempty list of finite numbers".into()));
    }
    let ds = read_panel(&config::require_file(c.config, &cfg.panel)?)?;
    let types = pick_types(&ds, cfg.types)?;
    let regs = build_design(&ds, &types, cfg.design)?;
    let f = fit(&ds, &regs, &cfg.model)?;
    check_converged(&f)?;

    let summaries: Vec<CausalSummary> =
        types.iter().map(|k| att_table(&f, k, &cfg.levels, cfg.acrt_at)).collect::<Result<_>>()?;
    let rows: Vec<TableRow> = summaries.iter().flat_map(|s| s.rows()).collect();
    out.file("att_table.csv", |w| write_table_csv(&rows, w))?;
    out.file("coefficients.csv", |w| write_records(&coef_rows(&f), w))?;

    let mut diagnostics = serde_json::Map::new();
    diagnostics.insert(
        "causal".into(),
        json!(summaries
            .iter()
            .map(|s| json!({ "policy_type": s.policy_type, "acrt_raw": s.acrt_raw, "taylor_gap": s.taylor_gap }))
            .collect::<Vec<_>>()),
    );
    if cfg.reset {
        diagnostics.insert("reset".into(), json!(reset_test(&ds, &regs, &cfg.model)?));
    }
    if cfg.placebo_shift > 0 {
        let p = placebo_test(&ds, &cfg.model, cfg.placebo_shift, cfg.placebo_controls)?;
        diagnostics.insert("placebo".into(), json!(p.record()));
    }
    if let Some(mut spec) = cfg.event_study {
        if let Some(s) = c.seed {
            spec.bootstrap_seed = s;
        }
        let es = event_study(&ds, &spec)?;
        let rows: Vec<EventRow> = es
            .coefficients
            .iter()
            .map(|e| EventRow { rel_year: e.rel_year, coef: e.coef, se: e.se, coef_bb: e.coef_bb, se_bb: e.se_bb })
            .collect();
        out.file("event_study.csv", |w| write_records(&rows, w))?;
        diagnostics
            .insert("pre_trend".into(), json!({ "wald_f": es.pre_test, "score_bootstrap": es.pre_test_bootstrap }));
    }
    out.json("diagnostics.json", &diagnostics)?;
    Ok(json!({ "types": types, "fit": fit_summary(&f), "diagnostics": diagnostics }))
}

pub fn ingest(c: &Common, transform: Option<Transform>, out: &mut Outputs) -> Result<Value> {
    let cfg: IngestConfig = config::load(c.config)?;
    let options = IngestOptions { transform: transform.unwrap_or(cfg.transform), standardization: cfg.standardization };
    let records = read_records(File::open(config::require_file(c.config, &cfg.broadband)?)?)?;
    let column = ingest_broadband(&records, options)?;
    out.file("broadband.csv", |w| write_records(&column.values, w))?;
    out.json("broadband_meta.json", &column.meta)?;
    let mut summary = json!({ "records": column.values.len(), "meta": column.meta });
    if let Some(o) = &cfg.outcomes {
        let outcomes = read_records(File::open(config::require_file(c.config, o)?)?)?;
        let controls = match &cfg.controls {
            Some(p) => Some(ControlTable::read_csv(File::open(config::require_file(c.config, p)?)?)?),
            None => None,
        };
        let laws = match &cfg.laws {
            Some(p) => read_records(File::open(config::require_file(c.config, p)?)?)?,
            None => Vec::new(),
        };
        let (ds, report) = assemble_panel(&column.values, &outcomes, controls.as_ref(), &laws)?;
        out.file("panel.csv", |w| ds.write_csv(w))?;
        summary["assembly"] = json!(report);
    } else if cfg.controls.is_some() || cfg.laws.is_some() {
        return Err(Error::Config("controls and laws need an outcomes file".into()));
    }
    Ok(summary)
}

pub fn montecarlo(c: &Common, out: &mut Outputs) -> Result<Value> {
    let cfg: MonteCarloConfig = config::load(c.config)?;
    match cfg {
        MonteCarloConfig::Recovery { mut study } => {
            if let Some(s) = c.seed {
                study.seed = s;
            }
            let report = run_recovery(&study)?;
            out.json("montecarlo_summary.json", &report)?;
            Ok(json!({ "kind": "recovery", "seed": study.seed, "report": report }))
        }
        MonteCarloConfig::Consistency { mut study } => {
            if let Some(s) = c.seed {
                study.seed = s;
            }
            let report = run_consistency(&study)?;
            out.json("montecarlo_summary.json", &report)?;
            let failed: BTreeSet<usize> =
                report.draws.iter().enumerate().filter(|(_, d)| !d.pass()).map(|(i, _)| i).collect();
            Ok(json!({
                "kind": "consistency",
                "seed": study.seed,
                "rho": report.rho,
                "effects": report.effects,
                "pass_fraction": report.pass_fraction,
                "failures": report.failures,
                "draws_not_passing": failed.len(),
            }))
        }
    }
}
