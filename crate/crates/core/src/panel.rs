//! Locality-by-age-by-period outcome panels.
//!
//! A panel is a flat set of [`OutcomeCell`]s keyed by
//! `(locality, age, period, outcome)`. Duplicate keys in the input are
//! collapsed into one population-weighted cell on load. Age series for
//! estimation are built with [`build_age_series`], which pools periods (and,
//! for [`NATIONAL`], localities) by population and drops the donut ages.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pseudo-locality that pools every locality in the panel.
pub const NATIONAL: &str = "NATIONAL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCell {
    pub locality_id: String,
    pub age: i32,
    pub period: String,
    pub outcome: String,
    pub value: f64,
    pub population: f64,
    pub value_variance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalityMeta {
    pub name: String,
    pub state: String,
    pub census_region: String,
    pub census_division: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalityPanel {
    cells: Vec<OutcomeCell>,
    meta: BTreeMap<String, LocalityMeta>,
    outcomes: BTreeSet<String>,
}

/// Column names and admissible age range for [`load_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub locality_id: String,
    pub locality_name: String,
    pub state: String,
    pub census_region: String,
    pub census_division: String,
    pub age: String,
    pub period: String,
    pub outcome: String,
    pub value: String,
    pub population: String,
    pub value_variance: String,
    pub min_age: i32,
    pub max_age: i32,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            locality_id: "locality_id".into(),
            locality_name: "locality_name".into(),
            state: "state".into(),
            census_region: "census_region".into(),
            census_division: "census_division".into(),
            age: "age".into(),
            period: "period".into(),
            outcome: "outcome".into(),
            value: "value".into(),
            population: "population".into(),
            value_variance: "value_variance".into(),
            min_age: 0,
            max_age: 130,
        }
    }
}

/// Estimation window around the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeWindow {
    pub cutoff: f64,
    pub bandwidth: u32,
    pub donut: BTreeSet<i32>,
}

impl Default for AgeWindow {
    fn default() -> Self {
        Self {
            cutoff: 65.0,
            bandwidth: 5,
            donut: BTreeSet::from([65]),
        }
    }
}

impl AgeWindow {
    pub fn new(cutoff: f64, bandwidth: u32, donut: impl IntoIterator<Item = i32>) -> Result<Self> {
        let w = Self {
            cutoff,
            bandwidth,
            donut: donut.into_iter().collect(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidth < 2 {
            return Err(Error::Config(format!(
                "bandwidth must be at least 2, got {}",
                self.bandwidth
            )));
        }
        let bw = f64::from(self.bandwidth);
        if let Some(bad) = self
            .donut
            .iter()
            .find(|&&a| (f64::from(a) - self.cutoff).abs() > bw)
        {
            return Err(Error::Config(format!(
                "donut age {bad} lies outside the window {} +/- {}",
                self.cutoff, self.bandwidth
            )));
        }
        Ok(())
    }

    pub fn offset(&self, age: i32) -> f64 {
        f64::from(age) - self.cutoff
    }

    pub fn contains(&self, age: i32) -> bool {
        self.offset(age).abs() <= f64::from(self.bandwidth)
    }
}

impl LocalityPanel {
    /// Builds a panel from cells and metadata, collapsing duplicate keys.
    pub fn from_parts(
        cells: Vec<OutcomeCell>,
        meta: BTreeMap<String, LocalityMeta>,
    ) -> Result<Self> {
        for c in &cells {
            if !meta.contains_key(&c.locality_id) {
                return Err(Error::UnknownLocality(c.locality_id.clone()));
            }
            if c.population < 0.0 || !c.population.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "negative or non-finite population in cell {}/{}/{}",
                    c.locality_id, c.age, c.period
                )));
            }
        }
        let cells = collapse(cells);
        let outcomes = cells.iter().map(|c| c.outcome.clone()).collect();
        Ok(Self {
            cells,
            meta,
            outcomes,
        })
    }

    pub fn cells(&self) -> &[OutcomeCell] {
        &self.cells
    }

    pub fn meta(&self) -> &BTreeMap<String, LocalityMeta> {
        &self.meta
    }

    pub fn outcomes(&self) -> &BTreeSet<String> {
        &self.outcomes
    }

    pub fn localities(&self) -> impl Iterator<Item = &str> {
        self.meta.keys().map(String::as_str)
    }

    pub fn periods(&self) -> BTreeSet<String> {
        self.cells.iter().map(|c| c.period.clone()).collect()
    }

    /// Returns a copy with each value replaced by `f(cell)`.
    pub fn map_values(&self, mut f: impl FnMut(&OutcomeCell) -> f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.cells {
            c.value = f(c);
        }
        out
    }

    /// Pools localities into coarser geographies, population-weighted per
    /// `(age, period, outcome)`.
    pub fn aggregate(&self, level: Level) -> Result<Self> {
        if level == Level::Locality {
            return Ok(self.clone());
        }
        let mut meta = BTreeMap::new();
        let mut cells = Vec::with_capacity(self.cells.len());
        for c in &self.cells {
            let m = &self.meta[&c.locality_id];
            let (id, gm) = level.group(m);
            meta.entry(id.clone()).or_insert(gm);
            cells.push(OutcomeCell {
                locality_id: id,
                ..c.clone()
            });
        }
        Self::from_parts(cells, meta)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "locality_id",
            "locality_name",
            "state",
            "census_region",
            "census_division",
            "age",
            "period",
            "outcome",
            "value",
            "population",
            "value_variance",
        ])?;
        for c in &self.cells {
            let m = &self.meta[&c.locality_id];
            let var = c.value_variance.map(|v| v.to_string()).unwrap_or_default();
            wr.write_record([
                c.locality_id.as_str(),
                &m.name,
                &m.state,
                &m.census_region,
                &m.census_division,
                &c.age.to_string(),
                &c.period,
                &c.outcome,
                &c.value.to_string(),
                &c.population.to_string(),
                &var,
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Geography used by [`LocalityPanel::aggregate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Keep localities as loaded (e.g. commuting zones).
    Locality,
    State,
    Division,
    Region,
    National,
}

impl Level {
    fn group(self, m: &LocalityMeta) -> (String, LocalityMeta) {
        match self {
            Level::Locality => unreachable!(),
            Level::State => (
                m.state.clone(),
                LocalityMeta {
                    name: m.state.clone(),
                    ..m.clone()
                },
            ),
            Level::Division => (
                m.census_division.clone(),
                LocalityMeta {
                    name: m.census_division.clone(),
                    state: String::new(),
                    ..m.clone()
                },
            ),
            Level::Region => (
                m.census_region.clone(),
                LocalityMeta {
                    name: m.census_region.clone(),
                    state: String::new(),
                    census_division: String::new(),
                    census_region: m.census_region.clone(),
                },
            ),
            Level::National => (
                NATIONAL.to_string(),
                LocalityMeta {
                    name: NATIONAL.to_string(),
                    ..LocalityMeta::default()
                },
            ),
        }
    }
}

#[derive(Default)]
struct Pool {
    first_value: f64,
    count: usize,
    sum_p: f64,
    sum_pv: f64,
    sum_v: f64,
    sum_p2var: f64,
    sum_var: f64,
    all_var: bool,
}

impl Pool {
    fn add(&mut self, value: f64, pop: f64, var: Option<f64>) {
        if self.count == 0 {
            self.first_value = value;
            self.all_var = true;
        }
        self.count += 1;
        self.sum_p += pop;
        self.sum_pv += pop * value;
        self.sum_v += value;
        match var {
            Some(v) => {
                self.sum_p2var += pop * pop * v;
                self.sum_var += v;
            }
            None => self.all_var = false,
        }
    }

    /// `(value, population, variance)`; a single input passes through untouched.
    fn finish(&self, single: Option<f64>) -> (f64, f64, Option<f64>) {
        if self.count == 1 {
            return (self.first_value, self.sum_p, single);
        }
        let n = self.count as f64;
        if self.sum_p > 0.0 {
            let var = self
                .all_var
                .then(|| self.sum_p2var / (self.sum_p * self.sum_p));
            (self.sum_pv / self.sum_p, self.sum_p, var)
        } else {
            let var = self.all_var.then(|| self.sum_var / (n * n));
            (self.sum_v / n, 0.0, var)
        }
    }
}

fn collapse(cells: Vec<OutcomeCell>) -> Vec<OutcomeCell> {
    type Key = (String, String, String, i32);
    let mut pools: BTreeMap<Key, (Pool, Option<f64>)> = BTreeMap::new();
    for c in cells {
        let key = (c.locality_id, c.outcome, c.period, c.age);
        let e = pools.entry(key).or_default();
        if e.0.count == 0 {
            e.1 = c.value_variance;
        }
        e.0.add(c.value, c.population, c.value_variance);
    }
    pools
        .into_iter()
        .map(|((locality_id, outcome, period, age), (pool, single))| {
            let (value, population, value_variance) = pool.finish(single);
            OutcomeCell {
                locality_id,
                age,
                period,
                outcome,
                value,
                population,
                value_variance,
            }
        })
        .collect()
}

pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<LocalityPanel> {
    read_panel(File::open(path)?, schema)
}

pub fn read_panel<R: Read>(reader: R, schema: &PanelSchema) -> Result<LocalityPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })
    };
    let i_loc = require(&schema.locality_id)?;
    let i_age = require(&schema.age)?;
    let i_period = require(&schema.period)?;
    let i_outcome = require(&schema.outcome)?;
    let i_value = require(&schema.value)?;
    let i_pop = require(&schema.population)?;
    let i_name = find(&schema.locality_name);
    let i_state = find(&schema.state);
    let i_region = find(&schema.census_region);
    let i_division = find(&schema.census_division);
    let i_var = find(&schema.value_variance);

    let mut meta: BTreeMap<String, LocalityMeta> = BTreeMap::new();
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row { line, message };
        let get = |i: usize| rec.get(i).unwrap_or("");
        let opt = |i: Option<usize>| i.map(|i| get(i).to_string()).unwrap_or_default();

        let locality_id = get(i_loc).to_string();
        if locality_id.is_empty() {
            return Err(row_err("empty locality_id".into()));
        }
        let age: i32 = get(i_age)
            .parse()
            .map_err(|_| row_err(format!("non-integer age `{}`", get(i_age))))?;
        if age < schema.min_age || age > schema.max_age {
            return Err(row_err(format!(
                "age {age} outside [{}, {}]",
                schema.min_age, schema.max_age
            )));
        }
        let parse_real = |col: &str, raw: &str| -> Result<f64> {
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| row_err(format!("non-numeric {col} `{raw}`")))
        };
        let value = parse_real("value", get(i_value))?;
        let population = parse_real("population", get(i_pop))?;
        if population < 0.0 {
            return Err(row_err(format!("negative population {population}")));
        }
        let value_variance = match i_var.map(get) {
            None | Some("") => None,
            Some(raw) => {
                let v = parse_real("value_variance", raw)?;
                if v < 0.0 {
                    return Err(row_err(format!("negative value_variance {v}")));
                }
                Some(v)
            }
        };

        let m = LocalityMeta {
            name: opt(i_name),
            state: opt(i_state),
            census_region: opt(i_region),
            census_division: opt(i_division),
        };
        match meta.get(&locality_id) {
            Some(existing) if *existing != m => {
                return Err(row_err(format!(
                    "metadata for `{locality_id}` conflicts with an earlier row"
                )));
            }
            Some(_) => {}
            None => {
                meta.insert(locality_id.clone(), m);
            }
        }
        cells.push(OutcomeCell {
            locality_id,
            age,
            period: get(i_period).to_string(),
            outcome: get(i_outcome).to_string(),
            value,
            population,
            value_variance,
        });
    }
    LocalityPanel::from_parts(cells, meta)
}

/// Which side of the cutoff a point sits on. Offset 0 belongs to the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn of<T: Real>(offset: T) -> Side {
        if offset <= T::zero() {
            Side::Left
        } else {
            Side::Right
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint<T> {
    pub age: i32,
    /// Age minus the cutoff.
    pub offset: T,
    pub value: T,
    /// Population behind the point.
    pub weight: T,
    /// Sampling variance of `value`, when known.
    pub variance: Option<T>,
    /// Period label; empty when periods are pooled.
    pub period: String,
}

/// Age-indexed outcome series, sorted by `(age, period)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeSeries<T> {
    pub points: Vec<SeriesPoint<T>>,
}

impl<T: Real> AgeSeries<T> {
    pub fn new(mut points: Vec<SeriesPoint<T>>) -> Self {
        points.sort_by(|a, b| (a.age, &a.period).cmp(&(b.age, &b.period)));
        Self { points }
    }

    pub fn side(&self, side: Side) -> impl Iterator<Item = &SeriesPoint<T>> {
        self.points
            .iter()
            .filter(move |p| Side::of(p.offset) == side)
    }

    pub fn distinct_ages(&self, side: Side) -> usize {
        self.side(side)
            .filter(|p| p.weight > T::zero())
            .map(|p| p.age)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Points with `|offset| <= bandwidth` and age outside `donut`.
    pub fn restrict(&self, bandwidth: u32, donut: &BTreeSet<i32>) -> Self {
        let bw = T::from_u32(bandwidth).expect("bandwidth representable");
        Self {
            points: self
                .points
                .iter()
                .filter(|p| p.offset.abs() <= bw && !donut.contains(&p.age))
                .cloned()
                .collect(),
        }
    }

    pub fn without_ages(&self, donut: &BTreeSet<i32>) -> Self {
        Self {
            points: self
                .points
                .iter()
                .filter(|p| !donut.contains(&p.age))
                .cloned()
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> AgeSeries<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        AgeSeries {
            points: self
                .points
                .iter()
                .map(|p| SeriesPoint {
                    age: p.age,
                    offset: c(p.offset),
                    value: c(p.value),
                    weight: c(p.weight),
                    variance: p.variance.map(c),
                    period: p.period.clone(),
                })
                .collect(),
        }
    }

    pub(crate) fn check_support(&self, context: &str) -> Result<()> {
        for side in [Side::Left, Side::Right] {
            let n = self.distinct_ages(side);
            if n < 2 {
                return Err(Error::InsufficientSupport(format!(
                    "{context}: {n} distinct ages on the {side:?} side after the donut, need 2"
                )));
            }
        }
        Ok(())
    }
}

/// Options controlling how cells are collected into a series.
#[derive(Debug, Clone, Default)]
pub struct SeriesFilter<'a> {
    /// Only use these periods. `None` keeps every period.
    pub periods: Option<&'a BTreeSet<String>>,
    /// Keep one point per `(age, period)` instead of pooling periods.
    pub separate_periods: bool,
}

/// Population-weighted series for `locality` (or [`NATIONAL`]) within the
/// window, donut ages removed.
pub fn build_age_series(
    panel: &LocalityPanel,
    locality: &str,
    outcome: &str,
    window: &AgeWindow,
    filter: &SeriesFilter<'_>,
) -> Result<AgeSeries<f64>> {
    let full = build_full_series(panel, locality, outcome, window, filter)?;
    let s = full.restrict(window.bandwidth, &window.donut);
    s.check_support(&format!("{locality}/{outcome}"))?;
    Ok(s)
}

/// Like [`build_age_series`] but keeps every age in the panel (donut still
/// removed) and does not check support.
pub fn build_full_series(
    panel: &LocalityPanel,
    locality: &str,
    outcome: &str,
    window: &AgeWindow,
    filter: &SeriesFilter<'_>,
) -> Result<AgeSeries<f64>> {
    let national = locality == NATIONAL && !panel.meta.contains_key(NATIONAL);
    if !national && !panel.meta.contains_key(locality) {
        return Err(Error::UnknownLocality(locality.to_string()));
    }
    let mut pools: BTreeMap<(i32, String), (Pool, Option<f64>)> = BTreeMap::new();
    for c in &panel.cells {
        if c.outcome != outcome
            || (!national && c.locality_id != locality)
            || window.donut.contains(&c.age)
            || filter.periods.is_some_and(|ps| !ps.contains(&c.period))
        {
            continue;
        }
        let period = if filter.separate_periods {
            c.period.clone()
        } else {
            String::new()
        };
        let e = pools.entry((c.age, period)).or_default();
        if e.0.count == 0 {
            e.1 = c.value_variance;
        }
        e.0.add(c.value, c.population, c.value_variance);
    }
    let points = pools
        .into_iter()
        .map(|((age, period), (pool, single))| {
            let (value, weight, variance) = pool.finish(single);
            SeriesPoint {
                age,
                offset: window.offset(age),
                value,
                weight,
                variance,
                period,
            }
        })
        .filter(|p| p.weight > 0.0)
        .collect();
    Ok(AgeSeries::new(points))
}

/// Population of `locality` (or every locality for [`NATIONAL`]) at the ten
/// ages just below the cutoff, summed over the selected periods. Used as the
/// locality weight in cross-locality moments.
pub fn near_elderly_population(
    panel: &LocalityPanel,
    locality: &str,
    outcome: &str,
    cutoff: f64,
    periods: Option<&BTreeSet<String>>,
) -> f64 {
    let national = locality == NATIONAL && !panel.meta.contains_key(NATIONAL);
    panel
        .cells
        .iter()
        .filter(|c| {
            let x = f64::from(c.age) - cutoff;
            c.outcome == outcome
                && (national || c.locality_id == locality)
                && (-10.0..0.0).contains(&x)
                && periods.is_none_or(|ps| ps.contains(&c.period))
        })
        .map(|c| c.population)
        .sum()
}

/// Locality-level covariates, one row per locality.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub localities: Vec<String>,
    pub names: Vec<String>,
    /// `rows[i][j]` is covariate `j` for locality `i`.
    pub rows: Vec<Vec<f64>>,
}

impl CovariateTable {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let id_col = headers
            .iter()
            .position(|h| h == "locality_id")
            .ok_or_else(|| Error::Schema {
                column: "locality_id".into(),
            })?;
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != id_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut localities = Vec::new();
        let mut rows = Vec::new();
        let mut seen = BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let id = rec.get(id_col).unwrap_or("").to_string();
            if !seen.insert(id.clone()) {
                return Err(Error::Row {
                    line,
                    message: format!("duplicate locality `{id}`"),
                });
            }
            let mut row = Vec::with_capacity(names.len());
            for (i, raw) in rec.iter().enumerate() {
                if i == id_col {
                    continue;
                }
                let v = raw
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Row {
                        line,
                        message: format!("missing or non-numeric covariate `{raw}`"),
                    })?;
                row.push(v);
            }
            localities.push(id);
            rows.push(row);
        }
        Ok(Self {
            localities,
            names,
            rows,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["locality_id".to_string()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header)?;
        for (id, row) in self.localities.iter().zip(&self.rows) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(f64::to_string));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    /// Every column restricted to `ids`, in that order.
    pub fn aligned(&self, ids: &[String]) -> Result<Vec<Vec<f64>>> {
        let index: BTreeMap<&str, usize> = self
            .localities
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !index.contains_key(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::Alignment {
                context: "localities missing from covariates".into(),
                ids: missing,
            });
        }
        Ok((0..self.names.len())
            .map(|j| {
                ids.iter()
                    .map(|id| self.rows[index[id.as_str()]][j])
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "locality_id,locality_name,state,census_region,census_division,age,period,outcome,value,population,value_variance\n";

    fn read(body: &str) -> Result<LocalityPanel> {
        read_panel(
            format!("{HEADER}{body}").as_bytes(),
            &PanelSchema::default(),
        )
    }

    #[test]
    fn six_rows_two_localities() {
        let p = read(
            "L1,a,S,R,D,63,2010,c,1,10,\n\
             L1,a,S,R,D,64,2010,c,2,10,\n\
             L1,a,S,R,D,66,2010,c,3,10,\n\
             L2,b,S,R,D,63,2010,c,1,10,\n\
             L2,b,S,R,D,64,2010,c,2,10,\n\
             L2,b,S,R,D,66,2010,c,3,10,\n",
        )
        .unwrap();
        assert_eq!(p.cells().len(), 6);
        assert_eq!(p.localities().count(), 2);
    }

    #[test]
    fn duplicates_are_population_averaged() {
        let p = read(
            "L1,a,S,R,D,64,2010,collections,10,1,\n\
             L1,a,S,R,D,64,2010,collections,20,3,\n",
        )
        .unwrap();
        assert_eq!(p.cells().len(), 1);
        assert_eq!(p.cells()[0].value, 17.5);
        assert_eq!(p.cells()[0].population, 4.0);
    }

    #[test]
    fn negative_population_is_a_row_error() {
        let err = read("L1,a,S,R,D,64,2010,c,1,10,\nL1,a,S,R,D,63,2010,c,1,-5,\n").unwrap_err();
        match err {
            Error::Row { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_numeric_value_reports_line() {
        let err = read("L1,a,S,R,D,64,2010,c,abc,10,\n").unwrap_err();
        assert!(matches!(err, Error::Row { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_panel(
            "locality_id,age,period,outcome,value\nL1,64,2010,c,1\n".as_bytes(),
            &PanelSchema::default(),
        )
        .unwrap_err();
        match err {
            Error::Schema { column } => assert_eq!(column, "population"),
            e => panic!("unexpected {e}"),
        }
    }

    fn ages_panel(ages: impl IntoIterator<Item = i32>) -> LocalityPanel {
        let meta = BTreeMap::from([("L1".to_string(), LocalityMeta::default())]);
        let cells = ages
            .into_iter()
            .map(|age| OutcomeCell {
                locality_id: "L1".into(),
                age,
                period: "2010".into(),
                outcome: "y".into(),
                value: f64::from(age),
                population: 1.0,
                value_variance: None,
            })
            .collect();
        LocalityPanel::from_parts(cells, meta).unwrap()
    }

    #[test]
    fn donut_and_window_applied() {
        let p = ages_panel(55..=75);
        let s = build_age_series(
            &p,
            "L1",
            "y",
            &AgeWindow::default(),
            &SeriesFilter::default(),
        )
        .unwrap();
        let offsets: Vec<f64> = s.points.iter().map(|p| p.offset).collect();
        assert_eq!(
            offsets,
            vec![-5.0, -4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0, 5.0]
        );
    }

    #[test]
    fn national_pools_by_population() {
        let meta = BTreeMap::from([
            ("A".to_string(), LocalityMeta::default()),
            ("B".to_string(), LocalityMeta::default()),
        ]);
        let mut cells = Vec::new();
        for (id, pop, v) in [("A", 1.0, 0.0), ("B", 3.0, 4.0)] {
            for age in [60, 61, 62, 68, 69] {
                cells.push(OutcomeCell {
                    locality_id: id.into(),
                    age,
                    period: "p".into(),
                    outcome: "y".into(),
                    value: v,
                    population: pop,
                    value_variance: None,
                });
            }
        }
        let p = LocalityPanel::from_parts(cells, meta).unwrap();
        let s = build_age_series(
            &p,
            NATIONAL,
            "y",
            &AgeWindow::default(),
            &SeriesFilter::default(),
        )
        .unwrap();
        assert_eq!(s.points[0].offset, -5.0);
        assert_eq!(s.points[0].value, 3.0);
        assert_eq!(s.points[0].weight, 4.0);
    }

    #[test]
    fn only_adjacent_ages_is_insufficient() {
        let p = ages_panel([64, 66]);
        let err = build_age_series(
            &p,
            "L1",
            "y",
            &AgeWindow::default(),
            &SeriesFilter::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientSupport(_)));
    }

    #[test]
    fn window_validation() {
        assert!(AgeWindow::new(65.0, 1, [65]).is_err());
        assert!(AgeWindow::new(65.0, 5, [75]).is_err());
        assert!(AgeWindow::new(65.0, 5, [64, 65, 66]).is_ok());
    }

    #[test]
    fn covariates_round_trip() {
        let src = "locality_id,x1,x2\nA,1.5,-2\nB,0.1,3e-7\n";
        let t = CovariateTable::read(src.as_bytes()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(CovariateTable::read(buf.as_slice()).unwrap(), t);
        let cols = t.aligned(&["B".into(), "A".into()]).unwrap();
        assert_eq!(cols[0], vec![0.1, 1.5]);
        assert!(t.aligned(&["C".into()]).is_err());
    }

    #[test]
    fn missing_covariate_is_rejected() {
        assert!(CovariateTable::read("locality_id,x\nA,\n".as_bytes()).is_err());
    }
}
