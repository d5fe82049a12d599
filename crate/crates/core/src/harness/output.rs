//! Output files: CSV tables, event logs, JSON dumps and plot descriptions.
//!
//! Floats are written in shortest round-trip form and CSVs carry no wall
//! clock times, so identical runs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptiveRun, Event};
use crate::error::Result;
use crate::estimators::{EstimatorTotals, StepEstimators};
use crate::harness::sweep::{EocTable, SPACE_COLUMNS, TIME_COLUMNS};

fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub totals: EstimatorTotals,
    pub error: Option<f64>,
    pub effectivity: Option<f64>,
    pub total_dof: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    /// File name relative to the description.
    pub file: String,
    pub x: String,
    pub y: String,
}

/// What an external tool needs to draw one figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotDescription {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl PlotDescription {
    pub fn new(name: &str, title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log(mut self, x: bool, y: bool) -> Self {
        self.log_x = x;
        self.log_y = y;
        self
    }

    pub fn series(mut self, name: &str, file: &str, x: &str, y: &str) -> Self {
        self.series.push(Series {
            name: name.into(),
            file: file.into(),
            x: x.into(),
            y: y.into(),
        });
        self
    }
}

/// File name for observables at time `t`.
pub fn observables_file(t: f64) -> String {
    format!("observables_{t}.csv")
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self {
            root: root.as_ref().to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn csv(&self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(path)
    }

    /// One row per step: `n, t, k, dim`, every ζ, `gbar`, `p`.
    pub fn write_steps(&self, name: &str, steps: &[StepEstimators]) -> Result<PathBuf> {
        let header: Vec<String> = StepEstimators::COLUMNS.iter().map(|s| s.to_string()).collect();
        self.csv(name, &header, steps.iter().map(step_fields))
    }

    /// Per-step rows of an adaptive run with mesh data, iteration counts and
    /// the running tilde estimators.
    pub fn write_adaptive_steps(&self, name: &str, run: &AdaptiveRun) -> Result<PathBuf> {
        let mut header: Vec<String> = StepEstimators::COLUMNS.iter().map(|s| s.to_string()).collect();
        for c in ["elements", "h_min", "h_max", "time_iters", "space_iters", "tilde_E_T", "tilde_E_S"] {
            header.push(c.into());
        }
        let rows = run.records.iter().zip(&run.tilde).map(|(r, (tt, ts))| {
            let mut f = step_fields(&r.est);
            f.extend([
                r.elements.to_string(),
                num(r.h_min),
                num(r.h_max),
                r.time_iters.to_string(),
                r.space_iters.to_string(),
                num(*tt),
                num(*ts),
            ]);
            f
        });
        self.csv(name, &header, rows)
    }

    pub fn write_summary(&self, name: &str, rows: &[SummaryRow]) -> Result<PathBuf> {
        let mut header = vec!["run".to_string()];
        header.extend(EstimatorTotals::COLUMNS.iter().map(|s| s.to_string()));
        for c in ["E_total", "error", "ei", "total_dof"] {
            header.push(c.into());
        }
        let rows = rows.iter().map(|r| {
            let mut f = vec![r.label.clone()];
            let v = r.totals.values();
            f.push(r.totals.steps.to_string());
            f.extend(v[1..].iter().map(|x| num(*x)));
            f.extend([
                num(r.totals.total()),
                opt(r.error),
                opt(r.effectivity),
                r.total_dof.map(|d| d.to_string()).unwrap_or_default(),
            ]);
            f
        });
        self.csv(name, &header, rows)
    }

    /// Estimator columns each followed by its EOC; space columns use `M`,
    /// time columns and the error use `k⁻¹`.
    pub fn write_eoc(&self, name: &str, table: &EocTable) -> Result<PathBuf> {
        let cols: Vec<&str> = SPACE_COLUMNS.iter().chain(&TIME_COLUMNS).copied().chain(["error"]).collect();
        let mut header = vec!["M".to_string(), "k_inv".to_string()];
        for c in &cols {
            header.push(c.to_string());
            header.push(format!("eoc_{c}"));
        }
        for c in ["E_total", "ei"] {
            header.push(c.into());
        }
        let values: Vec<Vec<f64>> = cols.iter().map(|c| table.column(c)).collect();
        let eocs: Vec<Option<Vec<f64>>> = cols.iter().map(|c| table.eoc(c)).collect();
        let rows = table.rows.iter().enumerate().map(|(i, r)| {
            let mut f = vec![r.elements.to_string(), num(r.k_inv())];
            for (v, e) in values.iter().zip(&eocs) {
                f.push(if v[i].is_nan() { String::new() } else { num(v[i]) });
                f.push(match e {
                    Some(e) if i > 0 => num(e[i - 1]),
                    _ => String::new(),
                });
            }
            f.extend([num(r.totals.total()), opt(r.effectivity)]);
            f
        });
        self.csv(name, &header, rows)
    }

    /// One event per line: `n t action payload`.
    pub fn write_events(&self, name: &str, events: &[Event]) -> Result<PathBuf> {
        let path = self.path(name);
        let text: String = events.iter().map(|e| format!("{e}\n")).collect();
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Rows `x, N, J` at time `t`, in `<prefix>observables_<t>.csv`.
    pub fn write_observables(&self, prefix: &str, t: f64, rows: &[[f64; 3]]) -> Result<PathBuf> {
        let header = ["x", "N", "J"].map(String::from);
        self.csv(&format!("{prefix}{}", observables_file(t)), &header, rows.iter().map(|r| r.iter().map(|v| num(*v)).collect()))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(value)?)?;
        Ok(path)
    }

    /// Writes `plot_<name>.json`.
    pub fn write_plot(&self, plot: &PlotDescription) -> Result<PathBuf> {
        self.write_json(&format!("plot_{}.json", plot.name), plot)
    }
}

fn step_fields(s: &StepEstimators) -> Vec<String> {
    let v = s.values();
    let mut f = vec![s.n.to_string(), num(v[1]), num(v[2]), s.dim.to_string()];
    f.extend(v[4..].iter().map(|x| num(*x)));
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::SweepRow;

    fn tmp(name: &str) -> OutputDir {
        let d = std::env::temp_dir().join(format!("cnafem-out-{}-{name}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        OutputDir::create(d).unwrap()
    }

    #[test]
    fn steps_csv_has_one_row_per_step() {
        let out = tmp("steps");
        let s = StepEstimators {
            n: 1,
            t: 0.5,
            k: 0.5,
            dim: 7,
            zeta_t1: 0.25,
            ..Default::default()
        };
        let p = out.write_steps("steps.csv", &[s, StepEstimators { n: 2, t: 1.0, ..s }]).unwrap();
        let text = fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], StepEstimators::COLUMNS.join(","));
        assert_eq!(lines[1], "1,0.5,0.5,7,0,0.25,0,0,0,0,0,0,0,0");
    }

    #[test]
    fn eoc_csv_leaves_first_rate_blank() {
        let out = tmp("eoc");
        let row = |m: usize, s0: f64| SweepRow {
            elements: m,
            k: 1.0 / m as f64,
            totals: EstimatorTotals {
                e_s0: s0,
                ..Default::default()
            },
            error: Some(s0),
            effectivity: None,
            max_norm_drift: 0.0,
            max_midpoint_defect: 0.0,
            seconds: 0.0,
        };
        let t = EocTable {
            problem: "p".into(),
            degree: 1,
            reference: None,
            rows: vec![row(10, 1.0), row(20, 0.25)],
        };
        let text = fs::read_to_string(out.write_eoc("eoc.csv", &t).unwrap()).unwrap();
        let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        let h = &lines[0];
        let at = |name: &str| h.iter().position(|c| *c == name).unwrap();
        assert_eq!(lines[1][at("eoc_E_S0")], "");
        assert_eq!(lines[2][at("eoc_E_S0")], "2");
        assert_eq!(lines[2][at("eoc_error")], "2");
        assert_eq!(lines[2][at("eoc_E_S1")], "");
    }

    #[test]
    fn numbers_round_trip_in_short_form() {
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(4.678e-51), "4.678e-51");
        assert_eq!(num(-0.0), "-0");
        for v in [1.0 / 3.0, 2.5e-7, 6.02e23, 1e-4] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn plot_description_round_trips() {
        let out = tmp("plot");
        let p = PlotDescription::new("k", "Time step", "t", "k")
            .log(false, true)
            .series("adaptive", "steps.csv", "t", "k");
        let path = out.write_plot(&p).unwrap();
        assert!(path.ends_with("plot_k.json"));
        let back: PlotDescription = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(observables_file(0.54), "observables_0.54.csv");
    }
}
