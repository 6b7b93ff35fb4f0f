//! File formats: pattern CSV, curve CSV, and the JSON schemas shared with
//! the command-line front end.
//!
//! Patterns travel as `x,y,mark` CSV where the mark is either a 1-based
//! integer or a string label; labels map to indices in first-appearance
//! order and the mapping is echoed back in outputs. All numeric output uses
//! the shortest round-trip decimal representation, so write-then-read is
//! lossless.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::contrast::{ContrastConfig, Family, PowerMatrix};
use crate::curves::{Correction, KCurveMatrix};
use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, RectWindow};
use crate::lgcp::NUM_PARAMS;
use crate::scalar::Real;

/// A parsed pattern plus the mark labels, indexed by type.
#[derive(Debug, Clone)]
pub struct LabeledPattern<T> {
    pub pattern: PointPattern<T>,
    pub labels: Vec<String>,
}

/// Read a pattern CSV (`x,y,mark` header). When `window` is `None` the
/// bounding box of the points is used.
pub fn read_pattern_csv<T: Real, R: Read>(
    reader: R,
    window: Option<RectWindow<T>>,
) -> Result<LabeledPattern<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Validation(format!("pattern CSV missing column '{name}'")))
    };
    let (cx, cy, cm) = (col("x")?, col("y")?, col("mark")?);

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut raw_marks: Vec<String> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let parse = |idx: usize, name: &str| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| Error::Validation(format!("short row in pattern CSV")))?
                .parse::<f64>()
                .map_err(|_| {
                    Error::Validation(format!(
                        "cannot parse {name} value '{}'",
                        record.get(idx).unwrap_or("")
                    ))
                })
        };
        xs.push(parse(cx, "x")?);
        ys.push(parse(cy, "y")?);
        raw_marks.push(
            record
                .get(cm)
                .ok_or_else(|| Error::Validation("short row in pattern CSV".into()))?
                .to_string(),
        );
    }

    // integer marks are 1-based indices; any non-integer switches the whole
    // column to label mode with first-appearance numbering
    let as_ints: Option<Vec<usize>> = raw_marks
        .iter()
        .map(|m| m.parse::<usize>().ok().filter(|&v| v >= 1))
        .collect();
    let (marks, labels): (Vec<usize>, Vec<String>) = match as_ints {
        Some(ints) => {
            let m = ints.iter().copied().max().unwrap_or(1);
            let labels = (1..=m).map(|i| i.to_string()).collect();
            (ints.into_iter().map(|v| v - 1).collect(), labels)
        }
        None => {
            let mut labels: Vec<String> = Vec::new();
            let mut marks = Vec::with_capacity(raw_marks.len());
            for m in &raw_marks {
                let idx = match labels.iter().position(|l| l == m) {
                    Some(i) => i,
                    None => {
                        labels.push(m.clone());
                        labels.len() - 1
                    }
                };
                marks.push(idx);
            }
            (marks, labels)
        }
    };

    let window = match window {
        Some(w) => w,
        None => {
            if xs.is_empty() {
                return Err(Error::Validation(
                    "empty pattern needs an explicit window".into(),
                ));
            }
            let (xmin, xmax) = min_max(&xs);
            let (ymin, ymax) = min_max(&ys);
            if xmax <= xmin || ymax <= ymin {
                return Err(Error::Validation(
                    "degenerate bounding box; supply an explicit window".into(),
                ));
            }
            RectWindow::new(T::of(xmin), T::of(xmax), T::of(ymin), T::of(ymax))?
        }
    };

    let points: Vec<Point<T>> = xs
        .into_iter()
        .zip(ys)
        .map(|(x, y)| Point::new(T::of(x), T::of(y)))
        .collect();
    let num_types = labels.len().max(1);
    let pattern = PointPattern::new(points, marks, num_types, window)?;
    Ok(LabeledPattern { pattern, labels })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Write a pattern CSV. With `labels` the marks are written as strings,
/// otherwise as 1-based integers.
pub fn write_pattern_csv<T: Real, W: Write>(
    mut w: W,
    pattern: &PointPattern<T>,
    labels: Option<&[String]>,
) -> Result<()> {
    writeln!(w, "x,y,mark")?;
    for (p, &m) in pattern.points().iter().zip(pattern.marks()) {
        match labels {
            Some(l) => writeln!(w, "{},{},{}", p.x, p.y, l[m])?,
            None => writeln!(w, "{},{},{}", p.x, p.y, m + 1)?,
        }
    }
    Ok(())
}

/// Write a curve matrix as CSV with `h,i,j,khat` columns in grid-major
/// order; metadata travels in `#` comment lines.
pub fn write_kfun_csv<T: Real, W: Write>(
    mut w: W,
    curves: &KCurveMatrix<T>,
    lambda: &[T],
    model: bool,
) -> Result<()> {
    let grid = curves.grid();
    writeln!(w, "# correction: {}", curves.correction)?;
    writeln!(w, "# R: {}", grid.r())?;
    writeln!(w, "# n0: {}", grid.n0())?;
    let lambda_str: Vec<String> = lambda.iter().map(|l| l.to_string()).collect();
    writeln!(w, "# lambda: {}", lambda_str.join(","))?;
    writeln!(w, "# scaled: {}", curves.scaled)?;
    if model {
        writeln!(w, "# model: true")?;
    }
    writeln!(w, "h,i,j,khat")?;
    let m = curves.num_types();
    for k in 1..=grid.n0() {
        let h = grid.node(k);
        for i in 0..m {
            for j in 0..m {
                writeln!(w, "{},{},{},{}", h, i + 1, j + 1, curves.at(i, j, k))?;
            }
        }
    }
    Ok(())
}

/// Parsed curve CSV: metadata plus rows in file order.
#[derive(Debug, Clone)]
pub struct KfunCsv {
    pub correction: Option<String>,
    pub r: Option<f64>,
    pub n0: Option<usize>,
    pub rows: Vec<(f64, usize, usize, f64)>,
}

/// Read back a kfun CSV (used mostly by round-trip checks and plot tooling).
pub fn read_kfun_csv<R: Read>(reader: R) -> Result<KfunCsv> {
    let mut out = KfunCsv {
        correction: None,
        r: None,
        n0: None,
        rows: Vec::new(),
    };
    let reader = BufReader::new(reader);
    let mut saw_header = false;
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("correction:") {
                out.correction = Some(v.trim().to_string());
            } else if let Some(v) = rest.strip_prefix("R:") {
                out.r = v.trim().parse().ok();
            } else if let Some(v) = rest.strip_prefix("n0:") {
                out.n0 = v.trim().parse().ok();
            }
            continue;
        }
        if !saw_header {
            if line != "h,i,j,khat" {
                return Err(Error::Validation(format!(
                    "unexpected curve CSV header '{line}'"
                )));
            }
            saw_header = true;
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |name: &str| -> Result<&str> {
            parts
                .next()
                .ok_or_else(|| Error::Validation(format!("curve CSV row missing {name}")))
        };
        let h: f64 = next("h")?.parse().map_err(|_| bad_row(line))?;
        let i: usize = next("i")?.parse().map_err(|_| bad_row(line))?;
        let j: usize = next("j")?.parse().map_err(|_| bad_row(line))?;
        let v: f64 = next("khat")?.parse().map_err(|_| bad_row(line))?;
        out.rows.push((h, i, j, v));
    }
    Ok(out)
}

fn bad_row(line: &str) -> Error {
    Error::Validation(format!("cannot parse curve CSV row '{line}'"))
}

/// `c` entry of a contrast config file: a scalar or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerSpec<T> {
    Scalar(T),
    Matrix(Vec<Vec<T>>),
}

fn default_n0() -> usize {
    512
}

/// JSON schema of the contrast configuration
/// (`c`, `R`, `n0`, `family`, `correction`, `symmetrize`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastConfigFile<T> {
    pub c: PowerSpec<T>,
    #[serde(rename = "R")]
    pub r: T,
    #[serde(default = "default_n0")]
    pub n0: usize,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub correction: Correction,
    #[serde(default)]
    pub symmetrize: bool,
}

impl<T: Real> ContrastConfigFile<T> {
    pub fn to_config(&self, m: usize) -> Result<ContrastConfig<T>> {
        let power = match &self.c {
            PowerSpec::Scalar(c) => PowerMatrix::uniform(m, *c)?,
            PowerSpec::Matrix(rows) => {
                let p = PowerMatrix::from_rows(rows)?;
                if p.dim() != m {
                    return Err(Error::Validation(format!(
                        "power matrix is {}x{} but the pattern has {m} types",
                        p.dim(),
                        p.dim()
                    )));
                }
                p
            }
        };
        if self.n0 == 0 {
            return Err(Error::Validation("n0 must be >= 1".into()));
        }
        if !(self.r > T::zero()) {
            return Err(Error::Validation(format!(
                "R must be positive, got {}",
                self.r
            )));
        }
        Ok(ContrastConfig {
            power,
            r: self.r,
            n0: self.n0,
            family: self.family,
            correction: self.correction,
            symmetrize: self.symmetrize,
        })
    }

    pub fn from_config(config: &ContrastConfig<T>) -> Self {
        let c = match config.power.as_uniform() {
            Some(c) => PowerSpec::Scalar(c),
            None => PowerSpec::Matrix(
                (0..config.power.dim())
                    .map(|i| (0..config.power.dim()).map(|j| config.power.at(i, j)).collect())
                    .collect(),
            ),
        };
        Self {
            c,
            r: config.r,
            n0: config.n0,
            family: config.family,
            correction: config.correction,
            symmetrize: config.symmetrize,
        }
    }
}

/// Fit configuration file: contrast controls plus the fixed model sign and
/// an optional explicit window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfigFile<T> {
    #[serde(flatten)]
    pub contrast: ContrastConfigFile<T>,
    #[serde(default = "default_b")]
    pub b: i8,
    #[serde(default)]
    pub window: Option<RectWindow<T>>,
}

fn default_b() -> i8 {
    -1
}

/// Serialized fit result (`fit.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord<T> {
    pub sigma1: T,
    pub phi1: T,
    pub sigma2: T,
    pub phi2: T,
    pub sigma3: T,
    pub phi3: T,
    pub b: i8,
    pub mu1: T,
    pub mu2: T,
    pub rho: T,
    pub u_min: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub config: ContrastConfigFile<T>,
    pub window: RectWindow<T>,
    pub counts: Vec<usize>,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<([T; NUM_PARAMS], T)>>,
}

/// Serialized covariance report (`sigma.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRecord<T> {
    pub theta_hat: [T; NUM_PARAMS],
    pub b_matrix: Vec<Vec<T>>,
    pub s_matrix: Vec<Vec<T>>,
    pub sigma_matrix: Vec<Vec<T>>,
    pub se: [T; NUM_PARAMS],
    pub ci_asym: [(T, T); NUM_PARAMS],
    pub ci_sim: Option<[(T, T); NUM_PARAMS]>,
    pub rho_hat: T,
    pub rho_se: Option<T>,
    pub rho_se_delta: Option<T>,
    pub rho_ci_asym: Option<(T, T)>,
    pub rho_ci_sim: Option<(T, T)>,
    pub det_sigma: T,
    pub log_det_sigma: T,
    pub nsim_requested: usize,
    pub nsim_used: usize,
    pub failures: usize,
    pub outliers: usize,
    pub config: ContrastConfigFile<T>,
    pub version: String,
}

/// One cell of a serialized selection sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectCellRecord<T> {
    pub c: T,
    #[serde(rename = "R")]
    pub r: T,
    pub det: Option<T>,
    pub log_det: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Serialized selection result (`select.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRecord<T> {
    pub best_c: T,
    #[serde(rename = "best_R")]
    pub best_r: T,
    pub best_det: T,
    pub best_log_det: T,
    pub cells: Vec<SelectCellRecord<T>>,
    pub nsim: usize,
    pub seed: u64,
    pub replicate_failures: usize,
    pub elapsed_secs: f64,
    pub version: String,
}

/// Read a JSON file into any deserializable value.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Pretty-print a value as JSON to a file (trailing newline included).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::DistanceGrid;

    #[test]
    fn pattern_csv_roundtrip_integer_marks() {
        let csv = "x,y,mark\n1.5,2.25,1\n0.125,9.75,2\n3.0,3.0,1\n";
        let parsed = read_pattern_csv::<f64, _>(csv.as_bytes(), None).unwrap();
        assert_eq!(parsed.pattern.num_types(), 2);
        assert_eq!(parsed.pattern.counts(), vec![2, 1]);
        assert_eq!(parsed.labels, vec!["1", "2"]);
        let mut buf = Vec::new();
        write_pattern_csv(&mut buf, &parsed.pattern, None).unwrap();
        let again = read_pattern_csv::<f64, _>(buf.as_slice(), Some(*parsed.pattern.window()))
            .unwrap();
        assert_eq!(again.pattern, parsed.pattern);
    }

    #[test]
    fn pattern_csv_labels_map_in_first_appearance_order() {
        let csv = "x,y,mark\n0.0,0.0,fox\n1.0,1.0,hare\n2.0,2.0,fox\n";
        let parsed = read_pattern_csv::<f64, _>(csv.as_bytes(), None).unwrap();
        assert_eq!(parsed.labels, vec!["fox", "hare"]);
        assert_eq!(parsed.pattern.marks(), &[0, 1, 0]);
    }

    #[test]
    fn pattern_csv_lossless_floats() {
        let x = 0.1 + 0.2; // not exactly representable as a short decimal
        let w = RectWindow::square(0.0, 1.0).unwrap();
        let pattern = PointPattern::single_type(vec![Point::new(x, 1.0 / 3.0)], w).unwrap();
        let mut buf = Vec::new();
        write_pattern_csv(&mut buf, &pattern, None).unwrap();
        let again = read_pattern_csv::<f64, _>(buf.as_slice(), Some(w)).unwrap();
        assert_eq!(again.pattern.points()[0].x, x);
        assert_eq!(again.pattern.points()[0].y, 1.0 / 3.0);
    }

    #[test]
    fn kfun_csv_roundtrips_values() {
        let grid = DistanceGrid::new(1.0, 3).unwrap();
        let mut curves = KCurveMatrix::zeros(grid, 2, Correction::Isotropic, false);
        curves.entry_mut(0, 0).copy_from_slice(&[0.1, 0.2, 0.3]);
        curves.entry_mut(0, 1).copy_from_slice(&[0.4, 0.5, 0.6]);
        curves.entry_mut(1, 0).copy_from_slice(&[0.7, 0.8, 0.9]);
        curves.entry_mut(1, 1).copy_from_slice(&[1.0, 1.1, 1.2]);
        let mut buf = Vec::new();
        write_kfun_csv(&mut buf, &curves, &[1.5, 2.5], false).unwrap();
        let parsed = read_kfun_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed.correction.as_deref(), Some("isotropic"));
        assert_eq!(parsed.n0, Some(3));
        assert_eq!(parsed.rows.len(), 12);
        // grid-major: first four rows share the first node
        assert!(parsed.rows[..4].iter().all(|r| r.0 == grid.node(1)));
        assert_eq!(parsed.rows[1], (grid.node(1), 1, 2, 0.4));
    }

    #[test]
    fn contrast_config_defaults_apply() {
        let json = r#"{"c": 0.2, "R": 2.5}"#;
        let file: ContrastConfigFile<f64> = serde_json::from_str(json).unwrap();
        assert_eq!(file.n0, 512);
        assert_eq!(file.family, Family::OriginalK);
        assert_eq!(file.correction, Correction::Isotropic);
        assert!(!file.symmetrize);
        let config = file.to_config(2).unwrap();
        assert_eq!(config.power.as_uniform(), Some(0.2));
    }

    #[test]
    fn contrast_config_matrix_power() {
        let json = r#"{"c": [[0.2, 0.3], [0.3, 0.4]], "R": 1.0, "family": "adjusted-q"}"#;
        let file: ContrastConfigFile<f64> = serde_json::from_str(json).unwrap();
        let config = file.to_config(2).unwrap();
        assert_eq!(config.power.at(0, 1), 0.3);
        assert_eq!(config.family, Family::AdjustedQ);
        let echoed = ContrastConfigFile::from_config(&config);
        let json2 = serde_json::to_string(&echoed).unwrap();
        let file2: ContrastConfigFile<f64> = serde_json::from_str(&json2).unwrap();
        assert_eq!(file2, echoed);
    }

    #[test]
    fn fit_config_parses_flat_layout() {
        let json = r#"{"c": 0.5, "R": 1.25, "b": -1, "correction": "border"}"#;
        let file: FitConfigFile<f64> = serde_json::from_str(json).unwrap();
        assert_eq!(file.b, -1);
        assert_eq!(file.contrast.correction, Correction::Border);
        assert!(file.window.is_none());
    }
}
