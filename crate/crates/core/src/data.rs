//! Datasets: the simulated TRIG/JUMP series, CSV ingestion and windowing.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::garch::GarchParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Known latent standard deviations, for simulated data.
    pub true_sigma: Option<Vec<f64>>,
    /// Row labels such as ISO dates, when the source had them.
    pub labels: Option<Vec<String>>,
    pub name: String,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let ts = TimeSeries {
            times,
            values,
            true_sigma: None,
            labels: None,
            name: name.into(),
        };
        ts.validate()?;
        Ok(ts)
    }

    pub fn with_true_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        self.true_sigma = Some(sigma);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_len(self.times.len(), self.values.len())?;
        if let Some(s) = &self.true_sigma {
            crate::error::check_len(self.times.len(), s.len())?;
        }
        if let Some(l) = &self.labels {
            crate::error::check_len(self.times.len(), l.len())?;
        }
        if let Some(i) = self.times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(format!(
                "times must be strictly increasing (index {})",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `true_sigma^2` when known, otherwise the squared observations.
    pub fn reference_variance(&self) -> Vec<f64> {
        match &self.true_sigma {
            Some(s) => s.iter().map(|v| v * v).collect(),
            None => self.values.iter().map(|v| v * v).collect(),
        }
    }

    /// Contiguous sub-series `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        TimeSeries {
            times: self.times[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
            true_sigma: self.true_sigma.as_ref().map(|s| s[start..end].to_vec()),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
            name: self.name.clone(),
        }
    }

    /// Median spacing of the time grid, used to place forecast targets past
    /// the end of the data.
    pub fn typical_step(&self) -> f64 {
        let mut d: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        if d.is_empty() {
            return 1.0;
        }
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    }

    /// Writes `t,y[,true_sigma]` with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv write: {e}"));
        if self.true_sigma.is_some() {
            out.write_record(["t", "y", "true_sigma"])
                .map_err(csv_err)?;
        } else {
            out.write_record(["t", "y"]).map_err(csv_err)?;
        }
        for i in 0..self.len() {
            let mut row = vec![self.times[i].to_string(), self.values[i].to_string()];
            if let Some(s) = &self.true_sigma {
                row.push(s[i].to_string());
            }
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()
            .map_err(|e| Error::InvalidParameter(format!("csv write: {e}")))
    }
}

fn normal_draws<R: Rng + ?Sized>(sigma: &[f64], rng: &mut R) -> Vec<f64> {
    sigma
        .iter()
        .map(|s| s * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `sigma(t) = sin(t) cos(t^2) + 1` on `t = 0, 0.02, ..., 4`.
pub fn simulate_trig(seed: u64) -> TimeSeries {
    let times: Vec<f64> = (0..=200).map(|i| i as f64 / 50.0).collect();
    let sigma: Vec<f64> = times
        .iter()
        .map(|t| t.sin() * (t * t).cos() + 1.0)
        .collect();
    let values = normal_draws(&sigma, &mut crate::rng::seeded(seed));
    TimeSeries {
        times,
        values,
        true_sigma: Some(sigma),
        labels: None,
        name: "TRIG".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpConfig {
    pub low: f64,
    pub high: f64,
    /// Half-open intervals `[start, end)` on which the deviation is `high`.
    pub high_intervals: Vec<(f64, f64)>,
}

impl Default for JumpConfig {
    fn default() -> Self {
        JumpConfig {
            low: 0.1,
            high: 7.0,
            high_intervals: vec![(2.0, 4.0)],
        }
    }
}

/// Deviation jumping between two levels on `t = 0, 0.1, ..., 6`.
pub fn simulate_jump(seed: u64) -> TimeSeries {
    simulate_jump_with(seed, &JumpConfig::default())
}

pub fn simulate_jump_with(seed: u64, cfg: &JumpConfig) -> TimeSeries {
    let times: Vec<f64> = (0..=60).map(|i| i as f64 / 10.0).collect();
    let sigma: Vec<f64> = times
        .iter()
        .map(|&t| {
            if cfg.high_intervals.iter().any(|&(a, b)| t >= a && t < b) {
                cfg.high
            } else {
                cfg.low
            }
        })
        .collect();
    let values = normal_draws(&sigma, &mut crate::rng::seeded(seed));
    TimeSeries {
        times,
        values,
        true_sigma: Some(sigma),
        labels: None,
        name: "JUMP".into(),
    }
}

/// A GARCH(1,1) path on an integer time axis with its conditional
/// standard deviations as the truth.
pub fn simulate_garch(seed: u64, params: &GarchParams, n: usize) -> TimeSeries {
    let (values, var) = crate::garch::simulate(params, n, &mut crate::rng::seeded(seed));
    TimeSeries {
        times: (0..n).map(|i| i as f64).collect(),
        values,
        true_sigma: Some(var.into_iter().map(f64::sqrt).collect()),
        labels: None,
        name: "GARCH-SIM".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvFormat {
    /// `date,price`: converted to log returns on a trading-day index.
    Prices,
    /// `date,return`: used as is on a trading-day index.
    Returns,
    /// `t,y[,true_sigma]`: the simulated-data export format.
    Series,
    /// Decide from the header.
    Auto,
}

impl std::str::FromStr for CsvFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "prices" | "price" => Ok(CsvFormat::Prices),
            "returns" | "return" => Ok(CsvFormat::Returns),
            "series" => Ok(CsvFormat::Series),
            "auto" => Ok(CsvFormat::Auto),
            other => Err(format!("unknown csv format '{other}'")),
        }
    }
}

fn detect_format(header: &csv::StringRecord) -> Result<CsvFormat> {
    let cols: Vec<String> = header
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let second = cols.get(1).map(String::as_str).unwrap_or("");
    match (cols.first().map(String::as_str).unwrap_or(""), second) {
        ("t", _) => Ok(CsvFormat::Series),
        (_, s) if s.starts_with("price") || s == "close" => Ok(CsvFormat::Prices),
        (_, s) if s.starts_with("return") => Ok(CsvFormat::Returns),
        _ => Err(Error::Parse {
            row: 0,
            line: 1,
            message: format!("cannot infer csv format from header {cols:?}"),
        }),
    }
}

pub fn load_returns(path: &Path, format: CsvFormat) -> Result<TimeSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_returns(file, format, &name)
}

/// Parses one of the [`CsvFormat`] layouts. Rows are numbered from 1,
/// excluding the header.
pub fn read_returns<R: Read>(reader: R, format: CsvFormat, name: &str) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let format = match format {
        CsvFormat::Auto => detect_format(&header)?,
        f => f,
    };

    let mut labels = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut third = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |j: usize, what: &str| -> Result<f64> {
            let raw = rec.get(j).unwrap_or("");
            if raw.is_empty() {
                return Err(Error::Parse {
                    row,
                    line,
                    message: format!("missing {what}"),
                });
            }
            raw.parse::<f64>().map_err(|e| Error::Parse {
                row,
                line,
                message: format!("invalid {what} '{raw}': {e}"),
            })
        };
        match format {
            CsvFormat::Prices => {
                let p = field(1, "price")?;
                if !(p > 0.0) {
                    return Err(Error::NonPositivePrice { row, price: p });
                }
                labels.push(rec.get(0).unwrap_or("").to_string());
                second.push(p);
            }
            CsvFormat::Returns => {
                second.push(field(1, "return")?);
                labels.push(rec.get(0).unwrap_or("").to_string());
            }
            CsvFormat::Series => {
                first.push(field(0, "t")?);
                second.push(field(1, "y")?);
                if rec.len() > 2 && !rec.get(2).unwrap_or("").is_empty() {
                    third.push(field(2, "true_sigma")?);
                }
            }
            CsvFormat::Auto => unreachable!(),
        }
    }

    let mut ts = match format {
        CsvFormat::Prices => {
            let returns: Vec<f64> = second.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
            let times = (0..returns.len()).map(|i| i as f64).collect();
            let labels = labels.into_iter().skip(1).collect();
            TimeSeries {
                times,
                values: returns,
                true_sigma: None,
                labels: Some(labels),
                name: name.into(),
            }
        }
        CsvFormat::Returns => TimeSeries {
            times: (0..second.len()).map(|i| i as f64).collect(),
            values: second,
            true_sigma: None,
            labels: Some(labels),
            name: name.into(),
        },
        CsvFormat::Series => {
            let sigma = if third.is_empty() { None } else { Some(third) };
            TimeSeries {
                times: first,
                values: second,
                true_sigma: sigma,
                labels: None,
                name: name.into(),
            }
        }
        CsvFormat::Auto => unreachable!(),
    };
    if ts
        .labels
        .as_ref()
        .is_some_and(|l| l.iter().all(String::is_empty))
    {
        ts.labels = None;
    }
    ts.validate()?;
    Ok(ts)
}

/// A training window `[start, origin)`; forecasts are issued from `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub origin: usize,
}

/// Retraining origins `window, window + step, ...` strictly inside the series.
pub fn rolling_windows(len: usize, window: usize, step: usize) -> Result<Vec<Window>> {
    if window > len {
        return Err(Error::WindowTooLarge { window, len });
    }
    if step == 0 || window == 0 {
        return Err(Error::InvalidParameter(
            "window and step must be at least 1".into(),
        ));
    }
    Ok((window..len)
        .step_by(step)
        .map(|origin| Window {
            start: origin - window,
            origin,
        })
        .collect())
}
