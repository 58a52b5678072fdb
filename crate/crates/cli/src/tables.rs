//! Result tables and their CSV form.
//!
//! Floats are written with 17 significant digits so that parsing a file
//! gives back the exact in-memory values.

use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line: u64) -> CliResult<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("line {line}: bad number {field:?}")))
}

fn parse_opt(field: &str, line: u64) -> CliResult<Option<f64>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(field, line).map(Some)
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// `log(e₀/e₁) / log(h₀/h₁)`.
pub fn observed_order(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    (e0 / e1).ln() / (h0 / h1).ln()
}

/// The observed order, or `None` when it is undefined (zero or infinite errors).
fn finite_order(e0: f64, e1: f64, h0: f64, h1: f64) -> Option<f64> {
    Some(observed_order(e0, e1, h0, h1)).filter(|o| o.is_finite())
}

/// Relative error that is zero, not NaN, when the error itself is zero.
pub fn relative(error: f64, reference_norm: f64) -> f64 {
    if error == 0.0 {
        0.0
    } else {
        error / reference_norm
    }
}

/// Write via a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
}

fn read_records(text: &str, header: &[&str]) -> CliResult<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let found: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(CliError::Usage(format!(
            "unexpected header {found:?}, want {header:?}"
        )));
    }
    r.records().map(|rec| rec.map_err(CliError::from)).collect()
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    pub relative_error: f64,
    pub observed_order: Option<f64>,
}

/// Convergence table; `h` strictly decreasing, order from the row above
/// (absent in the first row and wherever it is undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    const HEADER: [&'static str; 3] = ["h", "relative_error", "observed_order"];

    pub fn from_errors(hs: &[f64], errors: &[f64]) -> CliResult<Self> {
        if hs.len() != errors.len() {
            return Err(CliError::Usage(
                "step and error lists differ in length".into(),
            ));
        }
        if hs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::Usage(
                "step sizes must be strictly decreasing".into(),
            ));
        }
        let rows = hs
            .iter()
            .zip(errors)
            .enumerate()
            .map(|(k, (&h, &e))| ErrorRow {
                h,
                relative_error: e,
                observed_order: if k > 0 {
                    finite_order(errors[k - 1], e, hs[k - 1], h)
                } else {
                    None
                },
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        csv_bytes(
            &Self::HEADER,
            self.rows.iter().map(|r| {
                vec![
                    format_f64(r.h),
                    format_f64(r.relative_error),
                    format_opt(r.observed_order),
                ]
            }),
        )
    }

    pub fn from_csv(text: &str) -> CliResult<Self> {
        let rows = read_records(text, &Self::HEADER)?
            .iter()
            .map(|rec| {
                let line = line_of(rec);
                Ok(ErrorRow {
                    h: parse_f64(&rec[0], line)?,
                    relative_error: parse_f64(&rec[1], line)?,
                    observed_order: parse_opt(&rec[2], line)?,
                })
            })
            .collect::<CliResult<_>>()?;
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongTimeEntry {
    pub h: f64,
    /// `‖y_N − y(t)‖`.
    pub error: f64,
    pub relative_error: f64,
    /// Against the previous (larger) `h` at the same time.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTimeRow {
    pub time: f64,
    pub entries: Vec<LongTimeEntry>,
}

/// Errors at checkpoint times for a sequence of step sizes. Stored in long
/// form: one CSV line per `(t, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTimeTable {
    pub rows: Vec<LongTimeRow>,
}

impl LongTimeTable {
    const HEADER: [&'static str; 5] = ["t", "h", "error", "relative_error", "order"];

    /// `errors[i][k]` and `relative[i][k]` at `times[i]` for `hs[k]`.
    pub fn new(
        times: &[f64],
        hs: &[f64],
        errors: &[Vec<f64>],
        relative: &[Vec<f64>],
    ) -> CliResult<Self> {
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Usage(
                "checkpoint times must be increasing".into(),
            ));
        }
        let rows = times
            .iter()
            .enumerate()
            .map(|(i, &time)| LongTimeRow {
                time,
                entries: hs
                    .iter()
                    .enumerate()
                    .map(|(k, &h)| LongTimeEntry {
                        h,
                        error: errors[i][k],
                        relative_error: relative[i][k],
                        order: if k > 0 {
                            finite_order(errors[i][k - 1], errors[i][k], hs[k - 1], h)
                        } else {
                            None
                        },
                    })
                    .collect(),
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn row_at(&self, time: f64) -> Option<&LongTimeRow> {
        self.rows.iter().find(|r| r.time == time)
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        csv_bytes(
            &Self::HEADER,
            self.rows.iter().flat_map(|r| {
                r.entries.iter().map(move |e| {
                    vec![
                        format_f64(r.time),
                        format_f64(e.h),
                        format_f64(e.error),
                        format_f64(e.relative_error),
                        format_opt(e.order),
                    ]
                })
            }),
        )
    }

    pub fn from_csv(text: &str) -> CliResult<Self> {
        let mut rows: Vec<LongTimeRow> = Vec::new();
        for rec in read_records(text, &Self::HEADER)? {
            let line = line_of(&rec);
            let time = parse_f64(&rec[0], line)?;
            let entry = LongTimeEntry {
                h: parse_f64(&rec[1], line)?,
                error: parse_f64(&rec[2], line)?,
                relative_error: parse_f64(&rec[3], line)?,
                order: parse_opt(&rec[4], line)?,
            };
            match rows.last_mut() {
                Some(r) if r.time == time => r.entries.push(entry),
                _ => rows.push(LongTimeRow {
                    time,
                    entries: vec![entry],
                }),
            }
        }
        Ok(Self { rows })
    }
}

/// CSV with a header row and float columns.
pub fn numeric_csv(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> CliResult<Vec<u8>> {
    csv_bytes(
        header,
        rows.into_iter()
            .map(|r| r.into_iter().map(format_f64).collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_table_orders() {
        let t = ErrorTable::from_errors(&[0.1, 0.01, 0.001], &[1e-2, 1e-4, 1e-6]).unwrap();
        assert_eq!(t.rows[0].observed_order, None);
        assert!((t.rows[1].observed_order.unwrap() - 2.0).abs() < 1e-12);
        assert!(ErrorTable::from_errors(&[0.01, 0.1], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn error_table_round_trip() {
        let t = ErrorTable::from_errors(
            &[0.1, 0.01],
            &[std::f64::consts::PI * 1e-3, 1.0 / 3.0 * 1e-5],
        )
        .unwrap();
        let bytes = t.to_csv().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("h,relative_error,observed_order\n"));
        assert!(!text.contains('\r'));
        assert_eq!(ErrorTable::from_csv(&text).unwrap(), t);
    }

    #[test]
    fn long_time_round_trip() {
        let errs = vec![vec![4e-8, 1.0000001e-8], vec![2.5e-7, 6.2e-8]];
        let rel = vec![vec![1e-7, 2.5e-8], vec![3e-7, 7e-8]];
        let t = LongTimeTable::new(&[1.0, 10.0], &[2e-3, 1e-3], &errs, &rel).unwrap();
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(LongTimeTable::from_csv(&text).unwrap(), t);
        assert!(LongTimeTable::new(&[2.0, 1.0], &[1e-3], &errs, &rel).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("x.csv");
        write_atomic(&path, b"a\n").unwrap();
        write_atomic(&path, b"b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "b\n");
        assert_eq!(
            std::fs::read_dir(path.parent().unwrap()).unwrap().count(),
            1
        );
    }
}
