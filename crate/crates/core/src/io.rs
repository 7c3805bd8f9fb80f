//! Model documents (JSON) and trajectory / estimation tables (CSV).
//!
//! Floats are written with `{}` formatting, which is the shortest decimal that
//! parses back to the same bits.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dims, FodnModel, FractionalTerm};
use crate::schedule::Schedule;
use crate::simulator::Trajectory;

pub type Rows = Vec<Vec<f64>>;

/// Builds a matrix from row-major rows; `cols` fixes the width of an empty matrix.
pub fn matrix_from_rows(name: &str, rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, cols));
    }
    let width = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::Parse(format!("{name}: row {} has {} entries, expected {width}", i + 1, rows[i].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A matrix or a time-indexed list of matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Matrix(Rows),
    Sequence(Vec<Rows>),
}

impl MatrixSpec {
    pub fn to_schedule(&self, name: &str, cols: usize, start: usize) -> Result<Schedule<DMatrix<f64>>> {
        match self {
            MatrixSpec::Matrix(rows) => Ok(Schedule::constant(matrix_from_rows(name, rows, cols)?)),
            MatrixSpec::Sequence(items) => Schedule::sequence(
                start,
                items
                    .iter()
                    .map(|rows| matrix_from_rows(name, rows, cols))
                    .collect::<Result<_>>()?,
            ),
        }
    }

    pub fn from_schedule(s: &Schedule<DMatrix<f64>>) -> Self {
        match s {
            Schedule::Constant(m) => MatrixSpec::Matrix(matrix_to_rows(m)),
            Schedule::Sequence { items, .. } => MatrixSpec::Sequence(items.iter().map(matrix_to_rows).collect()),
        }
    }
}

/// Weight given as `c·I`, a full matrix, or a time-indexed list of matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Scalar(f64),
    Matrix(Rows),
    Sequence(Vec<Rows>),
}

impl WeightSpec {
    pub fn to_schedule(&self, name: &str, side: usize, start: usize) -> Result<Schedule<DMatrix<f64>>> {
        match self {
            WeightSpec::Scalar(c) => Ok(Schedule::constant(DMatrix::identity(side, side) * *c)),
            WeightSpec::Matrix(rows) => MatrixSpec::Matrix(rows.clone()).to_schedule(name, side, start),
            WeightSpec::Sequence(items) => MatrixSpec::Sequence(items.clone()).to_schedule(name, side, start),
        }
    }

    pub fn to_matrix(&self, name: &str, side: usize) -> Result<DMatrix<f64>> {
        match self {
            WeightSpec::Sequence(_) => Err(Error::Parse(format!("{name} must be a single matrix"))),
            other => Ok(other.to_schedule(name, side, 0)?.at(0)?.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTermDoc {
    #[serde(rename = "A")]
    pub matrix: Rows,
    #[serde(rename = "a")]
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTermDoc {
    #[serde(rename = "B")]
    pub matrix: Rows,
    #[serde(rename = "b")]
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceTermDoc {
    #[serde(rename = "G")]
    pub matrix: Rows,
    #[serde(rename = "g")]
    pub order: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsDoc {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
}

/// On-disk form of a [`FodnModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub state_terms: Vec<StateTermDoc>,
    #[serde(default)]
    pub input_terms: Vec<InputTermDoc>,
    #[serde(default)]
    pub disturbance_terms: Vec<DisturbanceTermDoc>,
    #[serde(rename = "C")]
    pub c: MatrixSpec,
    /// First time index of a `C` sequence.
    #[serde(rename = "C_start", default = "one", skip_serializing_if = "is_one")]
    pub c_start: usize,
    pub dims: DimsDoc,
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

impl ModelDoc {
    pub fn to_model(&self) -> Result<FodnModel> {
        let DimsDoc { n, m, p, q } = self.dims;
        let terms = |what: &str, items: Vec<(&Rows, f64)>, cols: usize| -> Result<Vec<FractionalTerm>> {
            items
                .into_iter()
                .enumerate()
                .map(|(i, (rows, order))| {
                    Ok(FractionalTerm::new(matrix_from_rows(&format!("{what} {}", i + 1), rows, cols)?, order))
                })
                .collect()
        };
        FodnModel::new(
            terms("state term", self.state_terms.iter().map(|t| (&t.matrix, t.order)).collect(), n)?,
            terms("input term", self.input_terms.iter().map(|t| (&t.matrix, t.order)).collect(), m)?,
            terms("disturbance term", self.disturbance_terms.iter().map(|t| (&t.matrix, t.order)).collect(), p)?,
            self.c.to_schedule("C", n, self.c_start)?,
            Dims { n, m, p, q },
        )
    }

    pub fn from_model(model: &FodnModel) -> Self {
        let Dims { n, m, p, q } = model.dims();
        ModelDoc {
            state_terms: model
                .state_terms()
                .iter()
                .map(|t| StateTermDoc { matrix: matrix_to_rows(&t.matrix), order: t.order })
                .collect(),
            input_terms: model
                .input_terms()
                .iter()
                .map(|t| InputTermDoc { matrix: matrix_to_rows(&t.matrix), order: t.order })
                .collect(),
            disturbance_terms: model
                .disturbance_terms()
                .iter()
                .map(|t| DisturbanceTermDoc { matrix: matrix_to_rows(&t.matrix), order: t.order })
                .collect(),
            c: MatrixSpec::from_schedule(model.output_map()),
            c_start: model.output_map().range().map_or(1, |r| r.start),
            dims: DimsDoc { n, m, p, q },
        }
    }
}

pub fn parse_model(text: &str) -> Result<FodnModel> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model document: {e}")))?;
    doc.to_model()
}

pub fn model_to_json(model: &FodnModel) -> String {
    serde_json::to_string_pretty(&ModelDoc::from_model(model)).expect("model document serializes")
}

pub fn load_model(path: &Path) -> Result<FodnModel> {
    parse_model(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------- CSV tables

/// Header cells and rows of a numeric CSV; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("CSV header: {e}")))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("CSV row {}: {e}", i + 1)))?;
            let row = rec
                .iter()
                .zip(&headers)
                .map(|(cell, col)| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>()
                            .map(Some)
                            .map_err(|_| Error::Parse(format!("CSV row {}, column {col}: not a number: {cell:?}", i + 1)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Table { headers, rows })
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.headers).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()))
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Indices of the columns `{prefix}_1 ..= {prefix}_k`, which must be contiguous from 1.
    pub fn columns(&self, prefix: &str) -> Result<Vec<usize>> {
        let mut found: Vec<(usize, usize)> = Vec::new();
        for (idx, h) in self.headers.iter().enumerate() {
            if let Some(rest) = h.strip_prefix(prefix).and_then(|r| r.strip_prefix('_')) {
                let i: usize = rest
                    .parse()
                    .map_err(|_| Error::Parse(format!("column {h:?} has no channel number")))?;
                found.push((i, idx));
            }
        }
        found.sort();
        for (expect, (i, _)) in found.iter().enumerate() {
            if *i != expect + 1 {
                return Err(Error::Parse(format!("column {prefix}_{} is missing", expect + 1)));
            }
        }
        Ok(found.into_iter().map(|(_, idx)| idx).collect())
    }
}

fn header(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |i| format!("{prefix}_{i}"))
}

fn cells(v: Option<&DVector<f64>>, dim: usize) -> Vec<Option<f64>> {
    match v {
        Some(v) => v.iter().map(|x| Some(*x)).collect(),
        None => vec![None; dim],
    }
}

/// Writes `k, x_1..x_n, u_1..u_m, w_1..w_p, z_1..z_q`, one row per `k = 0..=N`.
///
/// Cells without a value (`u`, `w` at `k = N`, `z` at `k = 0`) are left empty.
pub fn write_trajectory_csv<W: Write>(writer: W, traj: &Trajectory, dims: Dims) -> Result<()> {
    let Dims { n, m, p, q } = dims;
    let mut headers = vec!["k".to_string()];
    headers.extend(header("x", n));
    headers.extend(header("u", m));
    headers.extend(header("w", p));
    headers.extend(header("z", q));
    let rows = (0..=traj.horizon())
        .map(|k| {
            let mut row = vec![Some(k as f64)];
            row.extend(cells(traj.states.get(k), n));
            row.extend(cells(traj.inputs.get(k), m));
            row.extend(cells(traj.disturbances.get(k), p));
            row.extend(cells(traj.output(k), q));
            row
        })
        .collect();
    Table { headers, rows }.write(writer)
}

fn column_block(
    table: &Table,
    cols: &[usize],
    rows: std::ops::Range<usize>,
    what: &str,
) -> Result<Option<Vec<DVector<f64>>>> {
    let present = |r: usize| cols.iter().filter(|&&c| table.rows[r][c].is_some()).count();
    let filled: usize = rows.clone().map(present).sum();
    if cols.is_empty() {
        return Ok(Some(vec![DVector::zeros(0); rows.len()]));
    }
    if filled == 0 {
        return Ok(None);
    }
    rows.map(|r| {
        cols.iter()
            .map(|&c| table.rows[r][c])
            .collect::<Option<Vec<f64>>>()
            .map(DVector::from_vec)
            .ok_or_else(|| Error::Parse(format!("{what} has empty cells in row k = {r}")))
    })
    .collect::<Result<Vec<_>>>()
    .map(Some)
}

/// A trajectory read back from CSV with the dimensions found in its header.
///
/// Signals whose columns are entirely empty come back as empty vectors.
/// Measurement noise is not stored in the CSV and is always empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCsv {
    pub dims: Dims,
    pub trajectory: Trajectory,
}

pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<TrajectoryCsv> {
    let table = Table::read(reader)?;
    if table.headers.first().map(String::as_str) != Some("k") {
        return Err(Error::Parse("first column must be k".into()));
    }
    let (xs, us, ws, zs) = (table.columns("x")?, table.columns("u")?, table.columns("w")?, table.columns("z")?);
    let known = 1 + xs.len() + us.len() + ws.len() + zs.len();
    if known != table.headers.len() {
        return Err(Error::Parse(format!(
            "unexpected columns in trajectory CSV header: {:?}",
            table.headers
        )));
    }
    if table.rows.is_empty() {
        return Err(Error::Parse("trajectory CSV has no rows".into()));
    }
    let n_steps = table.rows.len() - 1;
    for (r, row) in table.rows.iter().enumerate() {
        if row.len() != table.headers.len() || row[0] != Some(r as f64) {
            return Err(Error::Parse(format!("row {} must start with k = {r}", r + 1)));
        }
    }
    let dims = Dims { n: xs.len(), m: us.len(), p: ws.len(), q: zs.len() };
    let trajectory = Trajectory {
        states: column_block(&table, &xs, 0..n_steps + 1, "x")?.unwrap_or_default(),
        inputs: column_block(&table, &us, 0..n_steps, "u")?.unwrap_or_default(),
        disturbances: column_block(&table, &ws, 0..n_steps, "w")?.unwrap_or_default(),
        outputs: column_block(&table, &zs, 1..n_steps + 1, "z")?
            .ok_or_else(|| Error::Parse("trajectory CSV has no measurements".into()))?,
        meas_noise: Vec::new(),
    };
    Ok(TrajectoryCsv { dims, trajectory })
}

/// One row of the estimation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRow {
    pub k: usize,
    pub x_hat: DVector<f64>,
    /// Measurement `y[k]`, absent at `k = 0`.
    pub y: Option<DVector<f64>>,
    /// `C_k x̂[k]`, absent at `k = 0`.
    pub y_hat: Option<DVector<f64>>,
    /// `‖x̂[k] - x̃[k]‖` when the true lifted state is known.
    pub err_norm: Option<f64>,
    pub trace_p: f64,
}

/// Writes `k, xhat_1..xhat_d, y_1..y_q, yhat_1..yhat_q, err_norm, trace_P`.
pub fn write_estimation_csv<W: Write>(writer: W, rows: &[EstimationRow], d: usize, q: usize) -> Result<()> {
    let mut headers = vec!["k".to_string()];
    headers.extend(header("xhat", d));
    headers.extend(header("y", q));
    headers.extend(header("yhat", q));
    headers.push("err_norm".into());
    headers.push("trace_P".into());
    let rows = rows
        .iter()
        .map(|r| {
            let mut row = vec![Some(r.k as f64)];
            row.extend(cells(Some(&r.x_hat), d));
            row.extend(cells(r.y.as_ref(), q));
            row.extend(cells(r.y_hat.as_ref(), q));
            row.push(r.err_norm);
            row.push(Some(r.trace_p));
            row
        })
        .collect();
    Table { headers, rows }.write(writer)
}

pub fn read_estimation_csv<R: Read>(reader: R) -> Result<Vec<EstimationRow>> {
    let table = Table::read(reader)?;
    let (xh, ys, yh) = (table.columns("xhat")?, table.columns("y")?, table.columns("yhat")?);
    let pos = |name: &str| {
        table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("estimation CSV lacks column {name}")))
    };
    let (ie, it) = (pos("err_norm")?, pos("trace_P")?);
    let vec_of = |row: &[Option<f64>], cols: &[usize]| -> Option<DVector<f64>> {
        cols.iter().map(|&c| row[c]).collect::<Option<Vec<_>>>().map(DVector::from_vec)
    };
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let missing = || Error::Parse(format!("estimation CSV row {} is incomplete", i + 1));
            Ok(EstimationRow {
                k: row[0].ok_or_else(missing)? as usize,
                x_hat: vec_of(row, &xh).ok_or_else(missing)?,
                y: if ys.is_empty() { None } else { vec_of(row, &ys) },
                y_hat: if yh.is_empty() { None } else { vec_of(row, &yh) },
                err_norm: row[ie],
                trace_p: row[it].ok_or_else(missing)?,
            })
        })
        .collect()
}
