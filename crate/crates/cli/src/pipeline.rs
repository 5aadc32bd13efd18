use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use locality_rd::honest_rd::{
    estimate_rd_parametric, estimate_rd_with, CurvatureChoice, HonestRdConfig, RdEstimate, SeMode,
};
use locality_rd::panel::{
    build_full_series, load_panel, near_elderly_population, AgeWindow, Level, LocalityPanel,
    SeriesFilter, NATIONAL,
};
use locality_rd::{Error, PanelSchema, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::opts::{LevelArg, RdArgs, SeModeArg, SourceArgs, WeightsArg};

pub fn window(rd: &RdArgs) -> Result<AgeWindow> {
    let donut: Vec<i32> = if rd.no_donut {
        Vec::new()
    } else {
        rd.donut.clone()
    };
    AgeWindow::new(rd.cutoff, rd.bandwidth, donut)
}

pub fn rd_config(rd: &RdArgs) -> Result<HonestRdConfig<f64>> {
    let cfg = HonestRdConfig {
        window: window(rd)?,
        curvature_bound: rd.curvature.unwrap_or(0.0),
        bound_scale: rd.bound_scale,
        confidence_level: rd.confidence,
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn curvature_choice(rd: &RdArgs) -> CurvatureChoice {
    match rd.curvature {
        Some(_) => CurvatureChoice::Fixed,
        None => CurvatureChoice::Pilot {
            left_window_width: rd.pilot_width,
        },
    }
}

pub fn period_set(periods: &[String]) -> Option<BTreeSet<String>> {
    (!periods.is_empty()).then(|| periods.iter().cloned().collect())
}

pub fn require_panel(rd: &RdArgs) -> Result<&Path> {
    rd.panel
        .as_deref()
        .ok_or_else(|| Error::Config("--panel is required".into()))
}

/// Loads the panel and pools it to the requested level. `National` keeps the
/// localities; callers estimate the pooled series directly.
pub fn load(rd: &RdArgs) -> Result<LocalityPanel> {
    let panel = load_panel(require_panel(rd)?, &PanelSchema::default())?;
    let level = match rd.level {
        LevelArg::Cz | LevelArg::National => Level::Locality,
        LevelArg::State => Level::State,
        LevelArg::Division => Level::Division,
        LevelArg::Region => Level::Region,
    };
    panel.aggregate(level)
}

pub fn outcomes(panel: &LocalityPanel, rd: &RdArgs) -> Result<Vec<String>> {
    if rd.outcome.is_empty() {
        return Ok(panel.outcomes().iter().cloned().collect());
    }
    for o in &rd.outcome {
        if !panel.outcomes().contains(o) {
            return Err(Error::Config(format!("outcome `{o}` is not in the panel")));
        }
    }
    Ok(rd.outcome.clone())
}

pub fn single_outcome(outcomes: &[String]) -> Result<String> {
    match outcomes {
        [o] => Ok(o.clone()),
        [] => Err(Error::Config("no outcome available".into())),
        _ => Err(Error::Config(
            "this command needs exactly one --outcome".into(),
        )),
    }
}

pub fn honest_one(
    panel: &LocalityPanel,
    locality: &str,
    outcome: &str,
    rd: &RdArgs,
    periods: Option<&BTreeSet<String>>,
) -> Result<RdEstimate<f64>> {
    let cfg = rd_config(rd)?;
    let series = build_full_series(
        panel,
        locality,
        outcome,
        &cfg.window,
        &SeriesFilter {
            periods,
            separate_periods: false,
        },
    )?;
    let (e, _) = estimate_rd_with(&series, &cfg, curvature_choice(rd))?;
    Ok(e.labelled(locality, outcome))
}

pub fn parametric_one(
    panel: &LocalityPanel,
    locality: &str,
    outcome: &str,
    rd: &RdArgs,
    order: usize,
    se_mode: SeModeArg,
) -> Result<RdEstimate<f64>> {
    let cfg = rd_config(rd)?;
    let periods = period_set(&rd.periods);
    let series = build_full_series(
        panel,
        locality,
        outcome,
        &cfg.window,
        &SeriesFilter {
            periods: periods.as_ref(),
            separate_periods: true,
        },
    )?;
    let mode = match se_mode {
        SeModeArg::Robust => SeMode::Robust,
        SeModeArg::ClusterAge => SeMode::ClusterOnAge,
    };
    Ok(estimate_rd_parametric(&series, order, mode, rd.confidence)?.labelled(locality, outcome))
}

pub fn locality_ids(panel: &LocalityPanel) -> Vec<String> {
    panel.localities().map(str::to_string).collect()
}

/// Honest estimates for every locality, in id order.
pub fn honest_all(
    panel: &LocalityPanel,
    outcome: &str,
    rd: &RdArgs,
    periods: Option<&BTreeSet<String>>,
) -> Vec<(String, Result<RdEstimate<f64>>)> {
    locality_ids(panel)
        .into_par_iter()
        .map(|id| {
            let r = honest_one(panel, &id, outcome, rd, periods);
            (id, r)
        })
        .collect()
}

pub fn population(
    panel: &LocalityPanel,
    locality: &str,
    outcome: &str,
    rd: &RdArgs,
    periods: Option<&BTreeSet<String>>,
) -> f64 {
    near_elderly_population(panel, locality, outcome, rd.cutoff, periods)
}

/// One locality's estimate as used by the second-stage commands.
#[derive(Debug, Clone)]
pub struct LocalityEstimate {
    pub id: String,
    pub gamma: f64,
    pub se: f64,
    pub population: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Estimates {
    pub rows: Vec<LocalityEstimate>,
    pub national: Option<f64>,
    pub failed: Vec<String>,
}

impl Estimates {
    pub fn ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.id.clone()).collect()
    }

    pub fn weights(&self, mode: WeightsArg) -> Vec<f64> {
        match mode {
            WeightsArg::Population => self.rows.iter().map(|r| r.population).collect(),
            WeightsArg::None => vec![1.0; self.rows.len()],
        }
    }
}

#[derive(Debug, Deserialize)]
struct EstimateFileRow {
    locality_id: String,
    outcome: String,
    gamma: Option<f64>,
    se: Option<f64>,
    population: Option<f64>,
    #[serde(default)]
    error: String,
}

fn read_estimates_file(path: &Path, outcome: Option<&str>) -> Result<(String, Estimates)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows: Vec<EstimateFileRow> = Vec::new();
    for (i, r) in rdr.deserialize().enumerate() {
        rows.push(r.map_err(|e| Error::Row {
            line: i as u64 + 2,
            message: e.to_string(),
        })?);
    }
    let available: BTreeSet<&str> = rows.iter().map(|r| r.outcome.as_str()).collect();
    let outcome = match outcome {
        Some(o) if available.contains(o) => o.to_string(),
        Some(o) => {
            return Err(Error::Config(format!(
                "outcome `{o}` is not in {}",
                path.display()
            )))
        }
        None if available.len() == 1 => available.iter().next().expect("one").to_string(),
        None => {
            return Err(Error::Config(
                "this command needs exactly one --outcome".into(),
            ))
        }
    };
    let mut out = Estimates::default();
    for r in rows.into_iter().filter(|r| r.outcome == outcome) {
        let ok = r.error.is_empty();
        match (r.gamma, r.se) {
            (Some(g), _) if ok && r.locality_id == NATIONAL => out.national = Some(g),
            (Some(gamma), Some(se)) if ok => out.rows.push(LocalityEstimate {
                id: r.locality_id,
                gamma,
                se,
                population: r.population.unwrap_or(1.0),
            }),
            _ if r.locality_id == NATIONAL => {}
            _ => out.failed.push(r.locality_id),
        }
    }
    Ok((outcome, out))
}

/// Locality estimates from `--estimates` or by running honest RD on `--panel`.
/// The panel is returned when one was loaded.
pub fn source_estimates(
    src: &SourceArgs,
    outcome: Option<&str>,
) -> Result<(String, Estimates, Option<LocalityPanel>)> {
    if let Some(path) = &src.estimates {
        let wanted = outcome.or(src.rd.outcome.first().map(String::as_str));
        let (o, e) = read_estimates_file(path, wanted)?;
        return Ok((o, e, None));
    }
    let panel = load(&src.rd)?;
    let outcome = match outcome {
        Some(o) => o.to_string(),
        None => single_outcome(&outcomes(&panel, &src.rd)?)?,
    };
    let periods = period_set(&src.rd.periods);
    let mut out = Estimates::default();
    for (id, r) in honest_all(&panel, &outcome, &src.rd, periods.as_ref()) {
        match r {
            Ok(e) => out.rows.push(LocalityEstimate {
                population: population(&panel, &id, &outcome, &src.rd, periods.as_ref()),
                id,
                gamma: e.gamma,
                se: e.se,
            }),
            Err(_) => out.failed.push(id),
        }
    }
    out.national = honest_one(&panel, NATIONAL, &outcome, &src.rd, periods.as_ref())
        .ok()
        .map(|e| e.gamma);
    Ok((outcome, out, Some(panel)))
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn csv(&self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        fs::write(self.dir.join(name), buf)?;
        Ok(())
    }

    /// Writes `{"config": config, ...body}` as pretty JSON.
    pub fn json<C: Serialize, B: Serialize>(&self, name: &str, config: &C, body: &B) -> Result<()> {
        let mut map = serde_json::Map::new();
        map.insert(
            "config".into(),
            serde_json::to_value(config).map_err(std::io::Error::from)?,
        );
        match serde_json::to_value(body).map_err(std::io::Error::from)? {
            serde_json::Value::Object(o) => map.extend(o),
            other => {
                map.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(map))
            .map_err(std::io::Error::from)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}
