//! Observation records, the log time scale and the uniform evaluation grid.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of points on the uniform evaluation grid.
pub const GRID_POINTS: usize = 101;

/// Expected CSV header for expression input files.
pub const OBSERVATION_HEADER: [&str; 5] = [
    "compound_id",
    "condition",
    "replicate_id",
    "time_hours",
    "value_log2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Control,
    Treated,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Control => "control",
            Condition::Treated => "treated",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "control" => Ok(Condition::Control),
            "treated" => Ok(Condition::Treated),
            other => Err(Error::Schema(format!(
                "unknown condition {other:?} (expected \"control\" or \"treated\")"
            ))),
        }
    }
}

/// One replicate measurement of one compound, value in log2 units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub compound_id: String,
    pub condition: Condition,
    pub replicate_id: String,
    pub time_hours: f64,
    pub value: f64,
}

/// Maps experiment time in hours onto the log time coordinate `ln(1 + t)`.
pub fn to_log_time(time_hours: f64) -> Result<f64> {
    if !(time_hours >= 0.0) || !time_hours.is_finite() {
        return Err(Error::Domain(format!(
            "time must be a finite nonnegative number of hours, got {time_hours}"
        )));
    }
    Ok(time_hours.ln_1p())
}

/// Uniform grid in log time from 0 to `ln(1 + t_max_hours)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    t_max_hours: f64,
}

impl TimeGrid {
    pub fn new(t_max_hours: f64) -> Result<Self> {
        Self::with_points(t_max_hours, GRID_POINTS)
    }

    /// Grid with a custom number of points (at least 2). Most callers want [`TimeGrid::new`].
    pub fn with_points(t_max_hours: f64, n: usize) -> Result<Self> {
        if !(t_max_hours > 0.0) || !t_max_hours.is_finite() {
            return Err(Error::Domain(format!(
                "t_max_hours must be positive, got {t_max_hours}"
            )));
        }
        if n < 2 {
            return Err(Error::Domain("a grid needs at least 2 points".into()));
        }
        let end = to_log_time(t_max_hours)?;
        let step = end / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
        points[n - 1] = end;
        Ok(Self {
            points,
            t_max_hours,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_max_hours(&self) -> f64 {
        self.t_max_hours
    }

    /// Distance between the first and last grid point.
    pub fn span(&self) -> f64 {
        self.points[self.points.len() - 1] - self.points[0]
    }
}

/// Observations of one compound under one condition, times already in log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundSeries {
    pub compound_id: String,
    pub condition: Condition,
    /// `(log_time, value)` pairs in input order.
    pub observations: Vec<(f64, f64)>,
}

impl CompoundSeries {
    pub fn log_times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.1).collect()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

fn parse_field<T: FromStr>(
    path: &Path,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid {name} {raw:?}"),
    })
}

/// Reads an expression CSV. Rows are returned in file order; duplicates are kept.
pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<RawObservation>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_observations(file, path)
}

pub fn read_observations<R: std::io::Read>(
    reader: R,
    path: &Path,
) -> Result<Vec<RawObservation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != OBSERVATION_HEADER {
        return Err(Error::Schema(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            OBSERVATION_HEADER.join(","),
            names.join(",")
        )));
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != OBSERVATION_HEADER.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let condition: Condition = record[1].trim().parse()?;
        let time_hours: f64 = parse_field(path, line, "time_hours", &record[3])?;
        let value: f64 = parse_field(path, line, "value_log2", &record[4])?;
        if !(time_hours >= 0.0) || !time_hours.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("time_hours must be nonnegative, got {time_hours}"),
            });
        }
        if !value.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "value_log2 must be finite".into(),
            });
        }
        out.push(RawObservation {
            compound_id: record[0].trim().to_string(),
            condition,
            replicate_id: record[2].trim().to_string(),
            time_hours,
            value,
        });
    }
    Ok(out)
}

pub fn write_observations<W: std::io::Write>(writer: W, records: &[RawObservation]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    wtr.write_record(OBSERVATION_HEADER).map_err(to_err)?;
    for r in records {
        wtr.write_record([
            r.compound_id.as_str(),
            r.condition.as_str(),
            r.replicate_id.as_str(),
            &r.time_hours.to_string(),
            &r.value.to_string(),
        ])
        .map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn save_observations(path: impl AsRef<Path>, records: &[RawObservation]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_observations(std::io::BufWriter::new(file), records)
}

pub type SeriesKey = (String, Condition);

/// Partitions observations by `(compound, condition)` and converts times to log scale.
///
/// Groups with fewer than two observations are kept in the map; use
/// [`fittable_groups`] to drop them before GP fitting.
pub fn group_by_compound(records: &[RawObservation]) -> Result<BTreeMap<SeriesKey, CompoundSeries>> {
    let mut groups: BTreeMap<SeriesKey, CompoundSeries> = BTreeMap::new();
    for r in records {
        let t = to_log_time(r.time_hours)?;
        groups
            .entry((r.compound_id.clone(), r.condition))
            .or_insert_with(|| CompoundSeries {
                compound_id: r.compound_id.clone(),
                condition: r.condition,
                observations: Vec::new(),
            })
            .observations
            .push((t, r.value));
    }
    Ok(groups)
}

/// Drops groups that cannot support a GP fit (fewer than 2 observations), logging a warning for each.
pub fn fittable_groups(
    groups: BTreeMap<SeriesKey, CompoundSeries>,
) -> BTreeMap<SeriesKey, CompoundSeries> {
    groups
        .into_iter()
        .filter(|(key, series)| {
            let keep = series.len() >= 2;
            if !keep {
                log::warn!(
                    "{} ({}) has {} observation(s); excluded from GP fitting",
                    key.0,
                    key.1,
                    series.len()
                );
            }
            keep
        })
        .collect()
}
