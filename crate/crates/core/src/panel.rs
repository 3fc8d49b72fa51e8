//! County × year panel shared by the generator, the estimator and the CLI.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub county_id: u32,
    pub state_id: u32,
    pub year: i32,
    pub outcome: u64,
    /// First treated year; `None` for never-treated states.
    pub cohort_year: Option<i32>,
    pub post: bool,
    pub broadband_z: f64,
    pub metro: bool,
    pub cluster_id: u32,
    /// Treatment-type indicators, aligned with `PanelDataset::type_names`.
    pub type_flags: Vec<bool>,
    /// Control values, aligned with `PanelDataset::control_names`.
    pub controls: Vec<f64>,
}

impl PanelRow {
    pub fn rel_year(&self) -> Option<i32> {
        self.cohort_year.map(|c| self.year - c)
    }

    pub fn is_treated(&self) -> bool {
        self.cohort_year.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelDataset {
    pub type_names: Vec<String>,
    pub control_names: Vec<String>,
    pub rows: Vec<PanelRow>,
}

/// Dense 0-based codes for a grouping column.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCodes {
    pub codes: Vec<u32>,
    pub n_levels: usize,
}

impl GroupCodes {
    pub fn from_keys<K: Ord + Copy>(keys: impl IntoIterator<Item = K>) -> Self {
        let keys: Vec<K> = keys.into_iter().collect();
        let levels: BTreeSet<K> = keys.iter().copied().collect();
        let index: BTreeMap<K, u32> = levels.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
        GroupCodes { codes: keys.iter().map(|k| index[k]).collect(), n_levels: levels.len() }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn subset(&self, keep: &[usize]) -> Self {
        GroupCodes::from_keys(keep.iter().map(|&i| self.codes[i]))
    }
}

impl PanelDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn type_index(&self, name: &str) -> Result<usize> {
        self.type_names
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::Data(format!("unknown treatment type '{name}'")))
    }

    pub fn control_index(&self, name: &str) -> Result<usize> {
        self.control_names
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::Data(format!("unknown control '{name}'")))
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.outcome as f64).collect()
    }

    pub fn county_codes(&self) -> GroupCodes {
        GroupCodes::from_keys(self.rows.iter().map(|r| r.county_id))
    }

    pub fn year_codes(&self) -> GroupCodes {
        GroupCodes::from_keys(self.rows.iter().map(|r| r.year))
    }

    pub fn state_codes(&self) -> GroupCodes {
        GroupCodes::from_keys(self.rows.iter().map(|r| r.state_id))
    }

    pub fn cluster_codes(&self) -> GroupCodes {
        GroupCodes::from_keys(self.rows.iter().map(|r| r.cluster_id))
    }

    pub fn year_range(&self) -> Option<(i32, i32)> {
        let lo = self.rows.iter().map(|r| r.year).min()?;
        let hi = self.rows.iter().map(|r| r.year).max()?;
        Some((lo, hi))
    }

    pub fn n_treated_states(&self) -> usize {
        self.rows.iter().filter(|r| r.is_treated()).map(|r| r.state_id).collect::<HashSet<_>>().len()
    }

    pub fn select(&self, keep: &[usize]) -> PanelDataset {
        PanelDataset {
            type_names: self.type_names.clone(),
            control_names: self.control_names.clone(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Checks flag consistency, key uniqueness and column alignment.
    pub fn validate(&self) -> Result<()> {
        let k = self.type_names.len();
        let m = self.control_names.len();
        let mut keys = HashSet::with_capacity(self.rows.len());
        let mut state_info: HashMap<u32, (Option<i32>, &[bool])> = HashMap::new();
        let mut county_state: HashMap<u32, u32> = HashMap::new();
        for (n, r) in self.rows.iter().enumerate() {
            if r.type_flags.len() != k || r.controls.len() != m {
                return Err(Error::Data(format!("row {n}: column count mismatch")));
            }
            if !keys.insert((r.county_id, r.year)) {
                return Err(Error::Data(format!("duplicate key (county {}, year {})", r.county_id, r.year)));
            }
            let expect_post = r.cohort_year.is_some_and(|c| r.year >= c);
            if r.post != expect_post {
                return Err(Error::Data(format!("row {n}: post flag inconsistent with cohort year")));
            }
            if !r.broadband_z.is_finite() || r.controls.iter().any(|c| !c.is_finite()) {
                return Err(Error::Data(format!("row {n}: non-finite covariate")));
            }
            if *county_state.entry(r.county_id).or_insert(r.state_id) != r.state_id {
                return Err(Error::Data(format!("county {} appears in two states", r.county_id)));
            }
            let entry = state_info.entry(r.state_id).or_insert((r.cohort_year, &r.type_flags));
            if entry.0 != r.cohort_year || entry.1 != r.type_flags.as_slice() {
                return Err(Error::Data(format!("state {}: treatment not constant within state", r.state_id)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = [
            "county_id",
            "state_id",
            "year",
            "outcome",
            "cohort_year",
            "rel_year",
            "post",
            "broadband_z",
            "metro",
            "cluster_id",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.type_names.iter().map(|t| format!("type_{t}")));
        header.extend(self.control_names.iter().map(|c| format!("ctrl_{c}")));
        out.write_record(&header)?;
        let opt = |v: Option<i32>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![
                r.county_id.to_string(),
                r.state_id.to_string(),
                r.year.to_string(),
                r.outcome.to_string(),
                opt(r.cohort_year),
                opt(r.rel_year()),
                u8::from(r.post).to_string(),
                r.broadband_z.to_string(),
                u8::from(r.metro).to_string(),
                r.cluster_id.to_string(),
            ];
            rec.extend(r.type_flags.iter().map(|&f| u8::from(f).to_string()));
            rec.extend(r.controls.iter().map(|c| c.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let col = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("missing column '{name}'")))
        };
        let county = col("county_id")?;
        let state = col("state_id")?;
        let year = col("year")?;
        let outcome = col("outcome")?;
        let cohort = col("cohort_year")?;
        let post = col("post")?;
        let bb = col("broadband_z")?;
        let metro = header.iter().position(|h| h == "metro");
        let cluster = header.iter().position(|h| h == "cluster_id");
        let rel = header.iter().position(|h| h == "rel_year");
        let mut type_cols = Vec::new();
        let mut ctrl_cols = Vec::new();
        for (i, h) in header.iter().enumerate() {
            if let Some(t) = h.strip_prefix("type_") {
                type_cols.push((i, t.to_string()));
            } else if let Some(c) = h.strip_prefix("ctrl_") {
                ctrl_cols.push((i, c.to_string()));
            }
        }

        let mut rows = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = n + 2;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let int = |i: usize, what: &str| -> Result<i64> {
                field(i).parse::<i64>().map_err(|_| Error::Data(format!("line {line}: bad {what} '{}'", field(i))))
            };
            let flag = |i: usize, what: &str| -> Result<bool> {
                match field(i) {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(Error::Data(format!("line {line}: {what} must be 0 or 1"))),
                }
            };
            let num = |i: usize, what: &str| -> Result<f64> {
                field(i).parse::<f64>().map_err(|_| Error::Data(format!("line {line}: bad {what} '{}'", field(i))))
            };

            let outcome_raw = field(outcome);
            let outcome_val = outcome_raw.parse::<u64>().map_err(|_| {
                Error::Data(format!("line {line}: outcome must be a nonnegative integer, got '{outcome_raw}'"))
            })?;
            let cohort_year = match field(cohort) {
                "" | "never" | "Never" | "NA" => None,
                s => Some(s.parse::<i32>().map_err(|_| Error::Data(format!("line {line}: bad cohort_year '{s}'")))?),
            };
            let state_id = int(state, "state_id")? as u32;
            let row = PanelRow {
                county_id: int(county, "county_id")? as u32,
                state_id,
                year: int(year, "year")? as i32,
                outcome: outcome_val,
                cohort_year,
                post: flag(post, "post")?,
                broadband_z: num(bb, "broadband_z")?,
                metro: match metro {
                    Some(i) => flag(i, "metro")?,
                    None => false,
                },
                cluster_id: match cluster {
                    Some(i) => int(i, "cluster_id")? as u32,
                    None => state_id,
                },
                type_flags: type_cols.iter().map(|(i, t)| flag(*i, t)).collect::<Result<_>>()?,
                controls: ctrl_cols.iter().map(|(i, c)| num(*i, c)).collect::<Result<_>>()?,
            };
            if let Some(i) = rel {
                let given = field(i);
                let expect = row.rel_year().map(|v| v.to_string()).unwrap_or_default();
                if given != expect {
                    return Err(Error::Data(format!("line {line}: rel_year '{given}' inconsistent with cohort")));
                }
            }
            rows.push(row);
        }
        let ds = PanelDataset {
            type_names: type_cols.into_iter().map(|(_, t)| t).collect(),
            control_names: ctrl_cols.into_iter().map(|(_, c)| c).collect(),
            rows,
        };
        ds.validate()?;
        Ok(ds)
    }
}
