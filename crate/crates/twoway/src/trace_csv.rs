//! Trace CSV. Reals are written with 17 significant digits so that reading a
//! file back recovers every value exactly; inapplicable metrics are empty.

use std::io::{Read, Write};

use twoway_core::engine::{Algorithm, IterationTrace, TraceRow};

pub const HEADER: [&str; 10] = [
    "round",
    "algo",
    "l1_error",
    "l2_error",
    "holdout_loss",
    "mu",
    "upstream_scalars",
    "downstream_scalars",
    "inner_iters",
    "wall_ms",
];

/// Appended only when some trace carries a logistic holdout.
pub const MISCLASS_COLUMN: &str = "holdout_misclass";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub round: usize,
    pub algo: Algorithm,
    pub l1_error: Option<f64>,
    pub l2_error: Option<f64>,
    pub holdout_loss: Option<f64>,
    pub mu: f64,
    pub upstream_scalars: Option<u64>,
    pub downstream_scalars: Option<u64>,
    pub inner_iters: usize,
    pub wall_ms: Option<f64>,
    pub holdout_misclass: Option<f64>,
}

impl CsvRow {
    pub fn from_trace(algo: Algorithm, row: &TraceRow) -> Self {
        CsvRow {
            round: row.round,
            algo,
            l1_error: row.l1_error,
            l2_error: row.l2_error,
            holdout_loss: row.holdout_loss,
            mu: row.mu,
            upstream_scalars: row.upstream_scalars,
            downstream_scalars: row.downstream_scalars,
            inner_iters: row.inner_iters,
            wall_ms: row.wall_ms,
            holdout_misclass: row.holdout_misclass,
        }
    }
}

pub fn rows_of(traces: &[IterationTrace]) -> Vec<CsvRow> {
    traces
        .iter()
        .flat_map(|t| t.rows.iter().map(move |r| CsvRow::from_trace(t.algorithm, r)))
        .collect()
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

fn opt_count(v: Option<u64>) -> String {
    v.map(|c| c.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> csv::Result<()> {
    let misclass = rows.iter().any(|r| r.holdout_misclass.is_some());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<&str> = HEADER.to_vec();
    if misclass {
        header.push(MISCLASS_COLUMN);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.round.to_string(),
            r.algo.tag().to_string(),
            opt_real(r.l1_error),
            opt_real(r.l2_error),
            opt_real(r.holdout_loss),
            real(r.mu),
            opt_count(r.upstream_scalars),
            opt_count(r.downstream_scalars),
            r.inner_iters.to_string(),
            opt_real(r.wall_ms),
        ];
        if misclass {
            rec.push(opt_real(r.holdout_misclass));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_string(rows: &[CsvRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is ASCII")
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("record {record}, column {column}: cannot parse {value:?}")]
    Field {
        record: usize,
        column: &'static str,
        value: String,
    },
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, ReadError> {
    let mut rd = csv::ReaderBuilder::new().from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let misclass = header.len() == HEADER.len() + 1 && header[HEADER.len()] == MISCLASS_COLUMN;
    if !header.iter().zip(HEADER).all(|(a, b)| a == b) || !(header.len() == HEADER.len() || misclass) {
        return Err(ReadError::Header(header));
    }

    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let record = i + 1;
        let field = |col: usize| rec.get(col).unwrap_or("");
        let fail = |col: usize, column: &'static str| ReadError::Field {
            record,
            column,
            value: field(col).to_string(),
        };
        let opt_f = |col: usize, name: &'static str| -> Result<Option<f64>, ReadError> {
            match field(col) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| fail(col, name)),
            }
        };
        let opt_u = |col: usize, name: &'static str| -> Result<Option<u64>, ReadError> {
            match field(col) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| fail(col, name)),
            }
        };
        rows.push(CsvRow {
            round: field(0).parse().map_err(|_| fail(0, "round"))?,
            algo: Algorithm::from_tag(field(1)).ok_or_else(|| fail(1, "algo"))?,
            l1_error: opt_f(2, "l1_error")?,
            l2_error: opt_f(3, "l2_error")?,
            holdout_loss: opt_f(4, "holdout_loss")?,
            mu: field(5).parse().map_err(|_| fail(5, "mu"))?,
            upstream_scalars: opt_u(6, "upstream_scalars")?,
            downstream_scalars: opt_u(7, "downstream_scalars")?,
            inner_iters: field(8).parse().map_err(|_| fail(8, "inner_iters"))?,
            wall_ms: opt_f(9, "wall_ms")?,
            holdout_misclass: if misclass { opt_f(10, MISCLASS_COLUMN)? } else { None },
        });
    }
    Ok(rows)
}
