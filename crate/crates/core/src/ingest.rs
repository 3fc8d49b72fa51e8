//! Broadband ingestion and panel assembly from user-supplied CSV extracts.
//!
//! Broadband arrives as Tier-1 connections per 1,000 households, either as a
//! direct rate or as a 0–5 category; weighting by `households / 1000` gives
//! connection counts, which are then transformed into `broadband_z`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use crate::panel::{PanelDataset, PanelRow};
use crate::{Error, Result};

/// Connections per 1,000 households at the midpoint of each category.
pub const TIER_MIDPOINTS: [f64; 6] = [0.0, 100.0, 300.0, 500.0, 700.0, 900.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadbandRecord {
    pub county_id: u32,
    pub year: i32,
    /// 0–5; used only when no direct rate is given.
    #[serde(default)]
    pub tier1_category: Option<u8>,
    /// Connections per 1,000 households.
    #[serde(default)]
    pub tier1_rate: Option<f64>,
    pub households: f64,
}

impl BroadbandRecord {
    pub fn rate(&self) -> Result<f64> {
        match (self.tier1_rate, self.tier1_category) {
            (Some(r), _) if r.is_finite() && r >= 0.0 => Ok(r),
            (Some(r), _) => {
                Err(Error::Data(format!("county {} year {}: bad tier-1 rate {r}", self.county_id, self.year)))
            }
            (None, Some(c)) => TIER_MIDPOINTS.get(usize::from(c)).copied().ok_or_else(|| {
                Error::Data(format!("county {} year {}: tier-1 category {c} outside 0..=5", self.county_id, self.year))
            }),
            (None, None) => Err(Error::Data(format!("county {} year {}: no tier-1 value", self.county_id, self.year))),
        }
    }

    /// Tier value × households / 1000.
    pub fn weighted(&self) -> Result<f64> {
        if !(self.households.is_finite() && self.households >= 0.0) {
            return Err(Error::Data(format!(
                "county {} year {}: households must be nonnegative, got {}",
                self.county_id, self.year, self.households
            )));
        }
        Ok(self.rate()? * self.households / 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Zscore,
    LogMinmax,
    Arcsinh,
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(Transform::Zscore),
            "log_minmax" => Ok(Transform::LogMinmax),
            "arcsinh" => Ok(Transform::Arcsinh),
            _ => Err(Error::Config(format!("unknown transform '{s}' (zscore, log_minmax, arcsinh)"))),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Zscore => "zscore",
            Transform::LogMinmax => "log_minmax",
            Transform::Arcsinh => "arcsinh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    #[default]
    Pooled,
    PerYear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct IngestOptions {
    pub transform: Transform,
    /// Only meaningful for the z-score.
    pub standardization: Standardization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BroadbandValue {
    pub county_id: u32,
    pub year: i32,
    pub weighted: f64,
    pub broadband_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZscoreGroup {
    /// `None` for the pooled sample.
    pub year: Option<i32>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformMeta {
    pub transform: Transform,
    pub n: usize,
    pub min: f64,
    pub max: f64,
    /// Offset added before the log of the min-max ratio.
    pub delta: Option<f64>,
    pub zscore: Vec<ZscoreGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BroadbandColumn {
    pub values: Vec<BroadbandValue>,
    pub meta: TransformMeta,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn zscore_group(xs: &[f64], year: Option<i32>) -> Result<ZscoreGroup> {
    let (mean, sd) = mean_sd(xs);
    if !(sd > 0.0) {
        let scope = year.map_or("pooled sample".to_string(), |y| format!("year {y}"));
        return Err(Error::Degenerate(format!("broadband has zero variance in the {scope}")));
    }
    Ok(ZscoreGroup { year, mean, sd })
}

/// One transformed value per (county, year), sorted by key.
pub fn ingest_broadband(records: &[BroadbandRecord], options: IngestOptions) -> Result<BroadbandColumn> {
    if records.is_empty() {
        return Err(Error::Empty("no broadband records".into()));
    }
    if options.standardization == Standardization::PerYear && options.transform != Transform::Zscore {
        return Err(Error::Config("per-year standardization applies to the z-score only".into()));
    }
    let mut by_key: BTreeMap<(u32, i32), f64> = BTreeMap::new();
    for r in records {
        if by_key.insert((r.county_id, r.year), r.weighted()?).is_some() {
            return Err(Error::Data(format!("duplicate broadband record for county {} year {}", r.county_id, r.year)));
        }
    }
    let weighted: Vec<f64> = by_key.values().copied().collect();
    let min = weighted.iter().copied().fold(f64::INFINITY, f64::min);
    let max = weighted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut delta = None;
    let mut groups = Vec::new();

    let transformed: Vec<f64> = match options.transform {
        Transform::Arcsinh => weighted.iter().map(|w| w.asinh()).collect(),
        Transform::LogMinmax => {
            let range = max - min;
            if !(range > 0.0) {
                return Err(Error::Degenerate("min-max needs at least two distinct broadband values".into()));
            }
            let d = 1e-6 * range;
            delta = Some(d);
            weighted.iter().map(|w| ((w - min + d) / (range + d)).ln()).collect()
        }
        Transform::Zscore => match options.standardization {
            Standardization::Pooled => {
                let g = zscore_group(&weighted, None)?;
                groups.push(g);
                weighted.iter().map(|w| (w - g.mean) / g.sd).collect()
            }
            Standardization::PerYear => {
                let mut per_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
                for (&(_, y), &w) in &by_key {
                    per_year.entry(y).or_default().push(w);
                }
                let stats: BTreeMap<i32, ZscoreGroup> =
                    per_year.iter().map(|(&y, xs)| Ok((y, zscore_group(xs, Some(y))?))).collect::<Result<_>>()?;
                groups.extend(stats.values().copied());
                by_key.iter().map(|(&(_, y), &w)| (w - stats[&y].mean) / stats[&y].sd).collect()
            }
        },
    };
    let values = by_key
        .keys()
        .zip(weighted.iter().zip(&transformed))
        .map(|(&(county_id, year), (&weighted, &broadband_z))| BroadbandValue {
            county_id,
            year,
            weighted,
            broadband_z,
        })
        .collect();
    Ok(BroadbandColumn {
        values,
        meta: TransformMeta { transform: options.transform, n: weighted.len(), min, max, delta, zscore: groups },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub county_id: u32,
    pub state_id: u32,
    pub year: i32,
    /// Blank when the count is missing.
    #[serde(default)]
    pub outcome: Option<u64>,
    #[serde(default, deserialize_with = "flag")]
    pub metro: bool,
}

/// Controls keyed by (county, year), one column per name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<(u32, i32), Vec<f64>>,
}

impl ControlTable {
    pub fn read_csv<R: io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let pos = |n: &str| {
            header.iter().position(|h| h == n).ok_or_else(|| Error::Data(format!("controls: missing column '{n}'")))
        };
        let (c, y) = (pos("county_id")?, pos("year")?);
        let value_cols: Vec<usize> = (0..header.len()).filter(|&i| i != c && i != y).collect();
        let names = value_cols.iter().map(|&i| header[i].to_string()).collect();
        let mut rows = BTreeMap::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = n + 2;
            let parse = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
            let county =
                parse(c).parse::<u32>().map_err(|_| Error::Data(format!("controls line {line}: bad county_id")))?;
            let year = parse(y).parse::<i32>().map_err(|_| Error::Data(format!("controls line {line}: bad year")))?;
            let vals = value_cols
                .iter()
                .map(|&i| {
                    let s = parse(i);
                    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        Error::Data(format!("controls line {line}: bad value '{s}' in '{}'", &header[i]))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.insert((county, year), vals).is_some() {
                return Err(Error::Data(format!("controls: duplicate row for county {county} year {year}")));
            }
        }
        Ok(ControlTable { names, rows })
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["county_id".to_string(), "year".to_string()];
        header.extend(self.names.iter().cloned());
        out.write_record(&header)?;
        for (&(c, y), vals) in &self.rows {
            let mut rec = vec![c.to_string(), y.to_string()];
            rec.extend(vals.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" => Ok(false),
        "1" | "x" | "true" | "yes" => Ok(true),
        other => Err(serde::de::Error::custom(format!("expected a flag (0/1/x), got '{other}'"))),
    }
}

/// One state's law: adoption year and framing of the provider-reimbursement
/// and cost-sharing clauses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LawRecord {
    pub state_id: u32,
    #[serde(default)]
    pub adoption_year: Option<i32>,
    /// "same rate as" → price parity.
    #[serde(default, deserialize_with = "flag")]
    pub price_same_rate: bool,
    /// "does not exceed" → price ceiling.
    #[serde(default, deserialize_with = "flag")]
    pub price_not_exceed: bool,
    /// "at least the same" → price floor.
    #[serde(default, deserialize_with = "flag")]
    pub price_at_least: bool,
    #[serde(default, deserialize_with = "flag")]
    pub cost_same_rate: bool,
    #[serde(default, deserialize_with = "flag")]
    pub cost_not_exceed: bool,
}

pub const PRICE_FLOOR: &str = "price_floor";
pub const PRICE_CEILING: &str = "price_ceiling";
pub const PRICE_PARITY: &str = "price_parity";
pub const COST_CEILING: &str = "cost_ceiling";
pub const COST_PARITY: &str = "cost_parity";
pub const LAW_TYPES: [&str; 5] = [PRICE_FLOOR, PRICE_CEILING, PRICE_PARITY, COST_CEILING, COST_PARITY];

impl LawRecord {
    /// The law's treatment types; a state may combine one price and one cost control.
    pub fn types(&self) -> Result<Vec<&'static str>> {
        let price: Vec<&str> = [
            (self.price_at_least, PRICE_FLOOR),
            (self.price_not_exceed, PRICE_CEILING),
            (self.price_same_rate, PRICE_PARITY),
        ]
        .into_iter()
        .filter_map(|(f, t)| f.then_some(t))
        .collect();
        let cost: Vec<&str> = [(self.cost_not_exceed, COST_CEILING), (self.cost_same_rate, COST_PARITY)]
            .into_iter()
            .filter_map(|(f, t)| f.then_some(t))
            .collect();
        if price.len() > 1 || cost.len() > 1 {
            return Err(Error::Data(format!(
                "ambiguous framing for state {}: {} set together",
                self.state_id,
                price.iter().chain(&cost).copied().collect::<Vec<_>>().join(" and ")
            )));
        }
        Ok(price.into_iter().chain(cost).collect())
    }

    fn set(&mut self, t: &str) -> Result<()> {
        match t {
            PRICE_FLOOR => self.price_at_least = true,
            PRICE_CEILING => self.price_not_exceed = true,
            PRICE_PARITY => self.price_same_rate = true,
            COST_CEILING => self.cost_not_exceed = true,
            COST_PARITY => self.cost_same_rate = true,
            _ => return Err(Error::Data(format!("treatment type '{t}' has no law framing"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AssemblyReport {
    pub rows: usize,
    pub dropped_missing_outcome: usize,
    /// Outcome keys without broadband, broadband keys without outcomes, and
    /// outcome keys without controls.
    pub outcome_without_broadband: usize,
    pub broadband_without_outcome: usize,
    pub outcome_without_controls: usize,
    pub law_states_absent: usize,
}

/// Inner join of outcomes, broadband and (optionally) controls on
/// (county, year), with treatment from the state law table. Rows come out
/// sorted by county, then year.
pub fn assemble_panel(
    broadband: &[BroadbandValue],
    outcomes: &[OutcomeRecord],
    controls: Option<&ControlTable>,
    laws: &[LawRecord],
) -> Result<(PanelDataset, AssemblyReport)> {
    let mut report = AssemblyReport::default();
    let bb: BTreeMap<(u32, i32), f64> = broadband.iter().map(|b| ((b.county_id, b.year), b.broadband_z)).collect();
    let mut law_by_state: BTreeMap<u32, (Option<i32>, Vec<&str>)> = BTreeMap::new();
    for l in laws {
        if law_by_state.insert(l.state_id, (l.adoption_year, l.types()?)).is_some() {
            return Err(Error::Data(format!("law table lists state {} twice", l.state_id)));
        }
    }
    let type_names: Vec<String> = LAW_TYPES.iter().map(|t| t.to_string()).collect();

    let mut by_key: BTreeMap<(u32, i32), &OutcomeRecord> = BTreeMap::new();
    let mut county_state: BTreeMap<u32, u32> = BTreeMap::new();
    for o in outcomes {
        if by_key.insert((o.county_id, o.year), o).is_some() {
            return Err(Error::Data(format!("duplicate outcome row for county {} year {}", o.county_id, o.year)));
        }
        if *county_state.entry(o.county_id).or_insert(o.state_id) != o.state_id {
            return Err(Error::Data(format!("county {} appears under more than one state", o.county_id)));
        }
    }
    let states: BTreeSet<u32> = county_state.values().copied().collect();
    report.law_states_absent = law_by_state.keys().filter(|s| !states.contains(s)).count();
    report.broadband_without_outcome = bb.keys().filter(|k| !by_key.contains_key(k)).count();

    let mut rows = Vec::new();
    for (&key, o) in &by_key {
        let Some(&z) = bb.get(&key) else {
            report.outcome_without_broadband += 1;
            continue;
        };
        let ctrl = match controls {
            Some(t) => match t.rows.get(&key) {
                Some(v) => v.clone(),
                None => {
                    report.outcome_without_controls += 1;
                    continue;
                }
            },
            None => Vec::new(),
        };
        let Some(outcome) = o.outcome else {
            report.dropped_missing_outcome += 1;
            continue;
        };
        let (cohort_year, types) = law_by_state.get(&o.state_id).cloned().unwrap_or((None, Vec::new()));
        let types = if cohort_year.is_some() { types } else { Vec::new() };
        rows.push(PanelRow {
            county_id: o.county_id,
            state_id: o.state_id,
            year: o.year,
            outcome,
            cohort_year,
            post: cohort_year.is_some_and(|c| o.year >= c),
            broadband_z: z,
            metro: o.metro,
            cluster_id: o.state_id,
            type_flags: LAW_TYPES.iter().map(|t| types.contains(t)).collect(),
            controls: ctrl,
        });
    }
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "key mismatch: no (county, year) key is shared by every input ({} outcome keys without broadband, {} without controls)",
            report.outcome_without_broadband, report.outcome_without_controls
        )));
    }
    report.rows = rows.len();
    let ds = PanelDataset { type_names, control_names: controls.map(|t| t.names.clone()).unwrap_or_default(), rows };
    ds.validate()?;
    Ok((ds, report))
}

/// The four input tables [`assemble_panel`] reads.
pub type SourceTables = (Vec<BroadbandValue>, Vec<OutcomeRecord>, ControlTable, Vec<LawRecord>);

/// Splits a panel back into the four assembly inputs.
pub fn disassemble(dataset: &PanelDataset) -> Result<SourceTables> {
    let bb = dataset
        .rows
        .iter()
        .map(|r| BroadbandValue {
            county_id: r.county_id,
            year: r.year,
            weighted: f64::NAN,
            broadband_z: r.broadband_z,
        })
        .collect();
    let outcomes = dataset
        .rows
        .iter()
        .map(|r| OutcomeRecord {
            county_id: r.county_id,
            state_id: r.state_id,
            year: r.year,
            outcome: Some(r.outcome),
            metro: r.metro,
        })
        .collect();
    let controls = ControlTable {
        names: dataset.control_names.clone(),
        rows: dataset.rows.iter().map(|r| ((r.county_id, r.year), r.controls.clone())).collect(),
    };
    let mut laws: BTreeMap<u32, LawRecord> = BTreeMap::new();
    for r in dataset.rows.iter().filter(|r| r.is_treated()) {
        let law = laws.entry(r.state_id).or_insert_with(|| LawRecord {
            state_id: r.state_id,
            adoption_year: r.cohort_year,
            ..Default::default()
        });
        if law.adoption_year != r.cohort_year {
            return Err(Error::Data(format!("state {} has more than one adoption year", r.state_id)));
        }
        for (t, &f) in dataset.type_names.iter().zip(&r.type_flags) {
            if f {
                law.set(t)?;
            }
        }
    }
    Ok((bb, outcomes, controls, laws.into_values().collect()))
}

pub fn read_records<T: DeserializeOwned, R: io::Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

pub fn write_records<T: Serialize, W: io::Write>(records: &[T], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(county: u32, year: i32, rate: f64, households: f64) -> BroadbandRecord {
        BroadbandRecord { county_id: county, year, tier1_category: None, tier1_rate: Some(rate), households }
    }

    #[test]
    fn weighting_uses_households_per_thousand() {
        assert_eq!(rec(1, 2010, 400.0, 2500.0).weighted().unwrap(), 1000.0);
        let cat = BroadbandRecord { tier1_category: Some(3), tier1_rate: None, ..rec(1, 2010, 0.0, 1000.0) };
        assert_eq!(cat.weighted().unwrap(), 500.0);
        let bad = BroadbandRecord { tier1_category: Some(6), tier1_rate: None, ..rec(1, 2010, 0.0, 1000.0) };
        assert!(matches!(bad.weighted(), Err(Error::Data(_))));
        assert!(matches!(rec(1, 2010, 100.0, -1.0).weighted(), Err(Error::Data(_))));
    }

    #[test]
    fn minmax_example() {
        let recs: Vec<_> =
            [0.0, 50.0, 100.0].iter().enumerate().map(|(i, &w)| rec(i as u32, 2010, w, 1000.0)).collect();
        let col =
            ingest_broadband(&recs, IngestOptions { transform: Transform::LogMinmax, ..Default::default() }).unwrap();
        let d = col.meta.delta.unwrap();
        assert!((d - 1e-4).abs() < 1e-18);
        for (v, ratio) in col.values.iter().zip([0.0, 0.5, 1.0]) {
            let expect = ((ratio * 100.0 + d) / (100.0 + d)).ln();
            assert!((v.broadband_z - expect).abs() < 1e-15);
        }
        assert_eq!(col.values[2].broadband_z, 0.0);
    }

    #[test]
    fn zscore_is_standardized_and_rejects_constants() {
        let recs: Vec<_> = (0..20).map(|i| rec(i, 2010 + (i % 2) as i32, f64::from(i * i), 1000.0)).collect();
        let col = ingest_broadband(&recs, IngestOptions::default()).unwrap();
        let z: Vec<f64> = col.values.iter().map(|v| v.broadband_z).collect();
        let (m, s) = mean_sd(&z);
        assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        let per_year =
            ingest_broadband(&recs, IngestOptions { standardization: Standardization::PerYear, ..Default::default() })
                .unwrap();
        assert_eq!(per_year.meta.zscore.len(), 2);
        let flat: Vec<_> = (0..5).map(|i| rec(i, 2010, 300.0, 1000.0)).collect();
        assert!(matches!(ingest_broadband(&flat, IngestOptions::default()), Err(Error::Degenerate(_))));
        let lm = IngestOptions { transform: Transform::LogMinmax, ..Default::default() };
        assert!(matches!(ingest_broadband(&flat, lm), Err(Error::Degenerate(_))));
    }

    #[test]
    fn arcsinh_of_zero_is_zero() {
        let col = ingest_broadband(
            &[rec(1, 2010, 0.0, 10.0)],
            IngestOptions { transform: Transform::Arcsinh, ..Default::default() },
        )
        .unwrap();
        assert_eq!(col.values[0].broadband_z, 0.0);
    }

    #[test]
    fn framing_must_be_unambiguous() {
        let law = LawRecord {
            state_id: 4,
            adoption_year: Some(2014),
            price_same_rate: true,
            price_not_exceed: true,
            ..Default::default()
        };
        assert!(matches!(law.types(), Err(Error::Data(_))));
        let law = LawRecord {
            state_id: 4,
            adoption_year: Some(2014),
            price_at_least: true,
            cost_not_exceed: true,
            ..Default::default()
        };
        assert_eq!(law.types().unwrap(), vec![PRICE_FLOOR, COST_CEILING]);
    }

    #[test]
    fn law_flags_parse_from_csv() {
        let text = "state_id,adoption_year,price_same_rate,price_not_exceed,price_at_least,cost_same_rate,cost_not_exceed\n3,2013,,,x,,1\n5,,,,,,\n";
        let laws: Vec<LawRecord> = read_records(text.as_bytes()).unwrap();
        assert_eq!(laws[0].types().unwrap(), vec![PRICE_FLOOR, COST_CEILING]);
        assert_eq!(laws[1].adoption_year, None);
    }

    #[test]
    fn empty_law_table_means_never_treated() {
        let bb = vec![BroadbandValue { county_id: 1, year: 2010, weighted: 1.0, broadband_z: 0.3 }];
        let out = vec![OutcomeRecord { county_id: 1, state_id: 1, year: 2010, outcome: Some(4), metro: false }];
        let (ds, report) = assemble_panel(&bb, &out, None, &[]).unwrap();
        assert_eq!(report.rows, 1);
        assert!(!ds.rows[0].is_treated() && ds.rows[0].type_flags.iter().all(|f| !f));
    }

    #[test]
    fn missing_outcomes_are_dropped_and_counted() {
        let bb: Vec<_> =
            (0..3).map(|y| BroadbandValue { county_id: 1, year: 2010 + y, weighted: 1.0, broadband_z: 0.0 }).collect();
        let out: Vec<_> = (0..3)
            .map(|y| OutcomeRecord {
                county_id: 1,
                state_id: 2,
                year: 2010 + y,
                outcome: (y != 1).then_some(5),
                metro: true,
            })
            .collect();
        let laws = [LawRecord { state_id: 2, adoption_year: Some(2011), price_at_least: true, ..Default::default() }];
        let (ds, report) = assemble_panel(&bb[..2], &out, None, &laws).unwrap();
        assert_eq!((report.rows, report.dropped_missing_outcome, report.outcome_without_broadband), (1, 1, 1));
        assert!(!ds.rows[0].post);
        let other = vec![BroadbandValue { county_id: 9, year: 2010, weighted: 1.0, broadband_z: 0.0 }];
        assert!(matches!(assemble_panel(&other, &out, None, &laws), Err(Error::Data(_))));
    }
}
