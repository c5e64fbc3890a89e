//! Text tables from the artifacts of a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vqsolve::problems::cut_errors;

use crate::error::{CliError, Result};
use crate::run::{CONFIG_ECHO_FILE, CONVERGENCE_FILE, SOLUTION_FILE, SUMMARY_FILE};

/// x-cuts shown per Burgers field.
const CUTS: usize = 5;
/// Rows of the hypoelastic field table.
const FIELD_ROWS: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct StageRow {
    pub shots: u64,
    pub sigma_init: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub lowest_loss: f64,
}

impl StageRow {
    pub fn evals_per_iteration(&self) -> f64 {
        self.evaluations as f64 / self.iterations.max(1) as f64
    }
}

/// Parsed `key = value` summary of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub entries: BTreeMap<String, String>,
}

impl Summary {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = read_artifact(&path)?;
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::MalformedArtifact {
                    path: path.clone(),
                    message: format!("bad line `{line}`"),
                })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::MalformedArtifact {
                path: SUMMARY_FILE.into(),
                message: format!("missing or invalid `{key}`"),
            })
    }

    pub fn stages(&self) -> Result<Vec<StageRow>> {
        let mut rows = Vec::new();
        for i in 1.. {
            let pre = format!("stage{i}");
            if self.get(&format!("{pre}.shots")).is_none() {
                break;
            }
            rows.push(StageRow {
                shots: self.parsed(&format!("{pre}.shots"))?,
                sigma_init: self.parsed(&format!("{pre}.sigma_init"))?,
                iterations: self.parsed(&format!("{pre}.iterations"))?,
                evaluations: self.parsed(&format!("{pre}.evaluations"))?,
                lowest_loss: self.parsed(&format!("{pre}.lowest_loss"))?,
            });
        }
        Ok(rows)
    }
}

/// Solution CSV split into coordinate columns and per-field triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionData {
    pub coords: Vec<String>,
    pub fields: Vec<String>,
    pub points: Vec<Vec<f64>>,
    /// Per point, per field: (predicted, exact, abs error).
    pub values: Vec<Vec<[f64; 3]>>,
}

impl SolutionData {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SOLUTION_FILE);
        if !path.is_file() {
            return Err(CliError::MissingArtifact(path));
        }
        let malformed = |message: String| CliError::MalformedArtifact {
            path: path.clone(),
            message,
        };
        let mut reader = csv::Reader::from_path(&path)?;
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        let coords: Vec<String> = header
            .iter()
            .take_while(|h| !h.ends_with("_pred"))
            .cloned()
            .collect();
        let rest = &header[coords.len()..];
        if coords.is_empty() || rest.is_empty() || !rest.len().is_multiple_of(3) {
            return Err(malformed(format!("unexpected header {header:?}")));
        }
        let mut fields = Vec::new();
        for triple in rest.chunks(3) {
            let name = triple[0].trim_end_matches("_pred");
            if triple[1] != format!("{name}_exact") || triple[2] != format!("{name}_abs_err") {
                return Err(malformed(format!("unexpected columns {triple:?}")));
            }
            fields.push(name.to_string());
        }
        let mut points = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record?;
            let nums = record
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| malformed(e.to_string()))?;
            if nums.len() != header.len() {
                return Err(malformed("ragged row".into()));
            }
            points.push(nums[..coords.len()].to_vec());
            values.push(
                nums[coords.len()..]
                    .chunks(3)
                    .map(|c| [c[0], c[1], c[2]])
                    .collect(),
            );
        }
        if points.is_empty() {
            return Err(malformed("no rows".into()));
        }
        Ok(Self {
            coords,
            fields,
            points,
            values,
        })
    }
}

fn read_artifact(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Stage table in the shape: stage, shots, σ_init, evaluations per
/// iteration, lowest loss.
pub fn stage_table(rows: &[StageRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>5}  {:>8}  {:>10}  {:>11}  {:>14}",
        "stage", "shots", "sigma_init", "evals/iter", "lowest loss"
    );
    for (i, r) in rows.iter().enumerate() {
        let shots = if r.shots == 0 {
            "exact".to_string()
        } else {
            r.shots.to_string()
        };
        let _ = writeln!(
            s,
            "{:>5}  {:>8}  {:>10}  {:>11.1}  {:>14.6e}",
            i + 1,
            shots,
            r.sigma_init,
            r.evals_per_iteration(),
            r.lowest_loss
        );
    }
    s
}

/// Predicted and exact values of every field at evenly spaced rows.
pub fn field_table(data: &SolutionData) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:>8}", data.coords[0]);
    for f in &data.fields {
        let _ = write!(
            s,
            "  {:>14}  {:>14}  {:>10}",
            format!("{f} pred"),
            format!("{f} exact"),
            "abs err"
        );
    }
    s.push('\n');
    let n = data.points.len();
    let rows = FIELD_ROWS.min(n);
    for r in 0..rows {
        let i = if rows == 1 {
            0
        } else {
            r * (n - 1) / (rows - 1)
        };
        let _ = write!(s, "{:>8.4}", data.points[i][0]);
        for v in &data.values[i] {
            let _ = write!(s, "  {:>14.6e}  {:>14.6e}  {:>10.3e}", v[0], v[1], v[2]);
        }
        s.push('\n');
    }
    let _ = write!(s, "{:>8}", "max");
    for j in 0..data.fields.len() {
        let m = data.values.iter().fold(0.0f64, |m, v| m.max(v[j][2]));
        let _ = write!(s, "  {:>14}  {:>14}  {:>10.3e}", "", "", m);
    }
    s.push('\n');
    s
}

/// Error along fixed-`x` lines: max and mean absolute error over the other
/// coordinate, at a few evenly spaced cuts.
pub fn cut_table(data: &SolutionData, field: usize) -> Result<String> {
    let errors: Vec<f64> = data.values.iter().map(|v| v[field][2]).collect();
    let curves = cut_errors(&data.points, &errors, 0)?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} error along {} = const",
        data.fields[field], data.coords[0]
    );
    let _ = writeln!(
        s,
        "{:>8}  {:>6}  {:>10}  {:>10}",
        data.coords[0], "points", "max err", "mean err"
    );
    let n = curves.len();
    let rows = CUTS.min(n);
    for r in 0..rows {
        let c = &curves[if rows == 1 {
            0
        } else {
            r * (n - 1) / (rows - 1)
        }];
        let max = c.samples.iter().fold(0.0f64, |m, (_, e)| m.max(*e));
        let mean = c.samples.iter().map(|(_, e)| e).sum::<f64>() / c.samples.len() as f64;
        let _ = writeln!(
            s,
            "{:>8.4}  {:>6}  {:>10.3e}  {:>10.3e}",
            c.at,
            c.samples.len(),
            max,
            mean
        );
    }
    Ok(s)
}

/// Consolidated report of the run in `dir`.
pub fn report(dir: &Path) -> Result<String> {
    for name in [CONFIG_ECHO_FILE, CONVERGENCE_FILE] {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(CliError::MissingArtifact(path));
        }
    }
    let summary = Summary::read(dir)?;
    let data = SolutionData::read(dir)?;
    let mut s = String::new();
    let _ = writeln!(s, "run {}", dir.display());
    for key in [
        "benchmark",
        "seed",
        "mode",
        "optimizer",
        "iterations",
        "evaluations",
    ] {
        let _ = writeln!(s, "{key}: {}", summary.get(key).unwrap_or("?"));
    }
    for key in ["best_loss", "exact_loss", "wall_time_s"] {
        let _ = writeln!(s, "{key}: {}", summary.get(key).unwrap_or("?"));
    }
    let stages = summary.stages()?;
    if summary.get("optimizer") == Some("staged") && !stages.is_empty() {
        s.push('\n');
        s.push_str(&stage_table(&stages));
    }
    s.push('\n');
    if data.coords.len() == 1 {
        s.push_str(&field_table(&data));
    } else {
        for j in 0..data.fields.len() {
            s.push_str(&cut_table(&data, j)?);
        }
    }
    Ok(s)
}
