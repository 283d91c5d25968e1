use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{true_value, ExperimentSpec, HarnessError};
use crate::oracle::StochasticOracle;
use crate::solver::RunResult;

pub const CSV_HEADER: [&str; 7] = ["budget", "rep", "best_value", "true_value", "delta", "Q_n", "W_s"];

/// One (grid point, replication) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub budget: f64,
    pub rep: usize,
    /// Lowest estimate among incumbents recorded by this budget (NaN before
    /// the first record).
    pub best_value: f64,
    /// Exact objective at that incumbent.
    pub true_value: f64,
    /// Optimality gap `true_value − f_min` (NaN when `f_min` is unknown).
    pub delta: f64,
    pub communications: u64,
    pub shots: u64,
}

/// Across-replication mean and 95% normal-approximation band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub budget: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressCurve {
    pub grid: Vec<f64>,
    pub reps: usize,
    /// Ordered by grid point, then replication.
    pub rows: Vec<CsvRow>,
    pub summary: Vec<CurvePoint>,
}

/// `points` evenly spaced values from 0 to `budget`; a single 0 for a zero
/// budget.
pub fn budget_grid(budget: f64, points: usize) -> Vec<f64> {
    if budget == 0.0 || points < 2 {
        return vec![0.0];
    }
    let last = (points - 1) as f64;
    (0..points).map(|i| budget * i as f64 / last).collect()
}

fn band(budget: f64, values: impl Iterator<Item = f64>) -> CurvePoint {
    let v: Vec<f64> = values.collect();
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / m.sqrt();
    CurvePoint {
        budget,
        mean,
        lower: mean - half,
        upper: mean + half,
    }
}

impl ProgressCurve {
    /// Step-interpolates each trajectory onto the budget grid: at budget
    /// `b` a replication reports its lowest-estimate incumbent among the
    /// records with cost `≤ b`.
    pub fn build(spec: &ExperimentSpec, oracle: &dyn StochasticOracle, runs: &[RunResult], x0: &DVector<f64>) -> Self {
        let grid = budget_grid(spec.budget, spec.grid_points);
        let f_min = oracle.optimal_value();
        let start_value = true_value(oracle, x0, spec.seed);
        let gap = |v: f64| f_min.map_or(f64::NAN, |m| v - m);
        let mut per_rep: Vec<Vec<CsvRow>> = Vec::with_capacity(runs.len());
        for (rep, run) in runs.iter().enumerate() {
            let traj = &run.trajectory;
            let mut prefix_best: Vec<usize> = Vec::with_capacity(traj.len());
            for (j, r) in traj.iter().enumerate() {
                let keep = match prefix_best.last() {
                    Some(&b) if traj[b].estimate <= r.estimate => b,
                    _ => j,
                };
                prefix_best.push(keep);
            }
            let mut values: HashMap<usize, f64> = HashMap::new();
            let rows = grid
                .iter()
                .map(|&b| {
                    let seen = traj.partition_point(|r| r.cost <= b);
                    if seen == 0 {
                        return CsvRow {
                            budget: b,
                            rep,
                            best_value: f64::NAN,
                            true_value: start_value,
                            delta: gap(start_value),
                            communications: 0,
                            shots: 0,
                        };
                    }
                    let best = prefix_best[seen - 1];
                    let tv = *values
                        .entry(best)
                        .or_insert_with(|| true_value(oracle, &traj[best].incumbent, spec.seed));
                    let last = &traj[seen - 1];
                    CsvRow {
                        budget: b,
                        rep,
                        best_value: traj[best].estimate,
                        true_value: tv,
                        delta: gap(tv),
                        communications: last.communications,
                        shots: last.shots,
                    }
                })
                .collect();
            per_rep.push(rows);
        }
        let mut rows = Vec::with_capacity(grid.len() * runs.len());
        let mut summary = Vec::with_capacity(grid.len());
        for (g, &b) in grid.iter().enumerate() {
            rows.extend(per_rep.iter().map(|r| r[g]));
            summary.push(band(b, per_rep.iter().map(|r| r[g].true_value)));
        }
        Self {
            grid,
            reps: runs.len(),
            rows,
            summary,
        }
    }

    pub fn final_rows(&self) -> &[CsvRow] {
        &self.rows[self.rows.len() - self.reps..]
    }
}

/// Writes the curve's rows with the fixed header.
pub fn write_csv<W: Write>(curve: &ProgressCurve, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &curve.rows {
        w.write_record([
            r.budget.to_string(),
            r.rep.to_string(),
            r.best_value.to_string(),
            r.true_value.to_string(),
            r.delta.to_string(),
            r.communications.to_string(),
            r.shots.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(curve: &ProgressCurve, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    write_csv(curve, std::fs::File::create(path)?)
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize) -> Result<T, HarnessError> {
    let raw = record.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| HarnessError::Spec(format!("bad CSV value `{raw}` in column {}", CSV_HEADER[i])))
}

/// Reads rows written by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Spec("unexpected CSV header".into()));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(CsvRow {
                budget: field(&rec, 0)?,
                rep: field(&rec, 1)?,
                best_value: field(&rec, 2)?,
                true_value: field(&rec, 3)?,
                delta: field(&rec, 4)?,
                communications: field(&rec, 5)?,
                shots: field(&rec, 6)?,
            })
        })
        .collect()
}
