//! Flat-text dataset format.
//!
//! ```text
//! #tau,4
//! observed_time,event,z1,...,zp
//! 0.8127,1,0
//! ```
//!
//! Datasets with piecewise covariate paths use the extended layout, one row
//! per path segment, where `from` is the left end of the segment (the first
//! segment of every subject starts at 0):
//!
//! ```text
//! #tau,4
//! subject,observed_time,event,from,z1,...,zp
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `read(write(d)) == d` bit for bit.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::data::{CovariatePath, Dataset, Subject};
use crate::error::{Error, Result};

const TAU_PREFIX: &str = "#tau,";

pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "{TAU_PREFIX}{}", data.tau())?;
    let p = data.dim();
    let zs = (1..=p).map(|k| format!("z{k}"));
    let mut wtr = csv::WriterBuilder::new().from_writer(out);
    if data.has_constant_covariates() {
        let header: Vec<String> = ["observed_time".to_string(), "event".to_string()]
            .into_iter()
            .chain(zs)
            .collect();
        wtr.write_record(&header)?;
        for s in data.subjects() {
            let mut rec = vec![s.observed_time.to_string(), flag(s.event).to_string()];
            rec.extend(s.covariates.value_at(0.0).iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
    } else {
        let header: Vec<String> = ["subject", "observed_time", "event", "from"]
            .into_iter()
            .map(String::from)
            .chain(zs)
            .collect();
        wtr.write_record(&header)?;
        for (i, s) in data.subjects().iter().enumerate() {
            for (from, value) in s.covariates.segments() {
                let mut rec = vec![
                    i.to_string(),
                    s.observed_time.to_string(),
                    flag(s.event).to_string(),
                    from.to_string(),
                ];
                rec.extend(value.iter().map(f64::to_string));
                wtr.write_record(&rec)?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

fn flag(event: bool) -> u8 {
    u8::from(event)
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let tau = first
        .trim()
        .strip_prefix(TAU_PREFIX)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("expected `{TAU_PREFIX}<value>`"),
        })
        .and_then(|v| parse_f64(v, 1))?;

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let extended = header.get(0) == Some("subject");
    let fixed = if extended { 4 } else { 2 };
    if header.len() < fixed {
        return Err(Error::Parse {
            line: 2,
            message: "header has too few columns".into(),
        });
    }

    let mut subjects: Vec<Subject> = Vec::new();
    // (subject index, time, event, breakpoints, values) for the extended layout
    let mut pending: Option<(usize, f64, bool, Vec<f64>, Vec<Vec<f64>>)> = None;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 3;
        let rec = rec?;
        let num = |col: usize| -> Result<f64> {
            parse_f64(rec.get(col).unwrap_or(""), line)
        };
        let z: Vec<f64> = (fixed..rec.len()).map(num).collect::<Result<_>>()?;
        if !extended {
            let t = num(0)?;
            let e = parse_flag(rec.get(1).unwrap_or(""), line)?;
            subjects.push(Subject::constant(t, e, z));
            continue;
        }
        let id: usize = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Parse {
                line,
                message: "bad subject index".into(),
            })?;
        let t = num(1)?;
        let e = parse_flag(rec.get(2).unwrap_or(""), line)?;
        let from = num(3)?;
        match pending.as_mut() {
            Some(cur) if cur.0 == id => {
                cur.3.push(from);
                cur.4.push(z);
            }
            _ => {
                if let Some(done) = pending.take() {
                    subjects.push(finish(done, line)?);
                }
                if id != subjects.len() || from != 0.0 {
                    return Err(Error::Parse {
                        line,
                        message: "subjects must be contiguous, in order, and start at from = 0"
                            .into(),
                    });
                }
                pending = Some((id, t, e, Vec::new(), vec![z]));
            }
        }
    }
    if let Some(done) = pending.take() {
        subjects.push(finish(done, 0)?);
    }
    Dataset::new(subjects, tau)
}

fn finish(
    (_, t, e, breakpoints, values): (usize, f64, bool, Vec<f64>, Vec<Vec<f64>>),
    line: usize,
) -> Result<Subject> {
    let path = CovariatePath::piecewise(breakpoints, values).map_err(|err| Error::Parse {
        line,
        message: err.to_string(),
    })?;
    Ok(Subject::new(t, e, path))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: {s:?}"),
    })
}

fn parse_flag(s: &str, line: usize) -> Result<bool> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Error::Parse {
            line,
            message: format!("event flag must be 0 or 1, got {other:?}"),
        }),
    }
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(data, std::io::BufWriter::new(file))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?)
}

/// Write `(time, value)` rows with a header.
pub(crate) fn write_xy_csv<W: Write>(
    out: W,
    header: [&str; 2],
    rows: impl IntoIterator<Item = (f64, f64)>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header)?;
    for (x, y) in rows {
        wtr.write_record([x.to_string(), y.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(d: &Dataset) -> Dataset {
        let mut buf = Vec::new();
        write_dataset(d, &mut buf).unwrap();
        read_dataset(buf.as_slice()).unwrap()
    }

    #[test]
    fn constant_layout() {
        let d = Dataset::new(
            vec![
                Subject::constant(0.1 + 0.2, true, vec![1.0, -2.5e-300]),
                Subject::constant(4.0, false, vec![0.0, 1.0 / 3.0]),
            ],
            4.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("#tau,4\nobserved_time,event,z1,z2\n"));
        assert_eq!(roundtrip(&d), d);
    }

    #[test]
    fn extended_layout() {
        let path = CovariatePath::piecewise(vec![0.5, 2.0], vec![vec![0.0], vec![1.0], vec![2.0]])
            .unwrap();
        let d = Dataset::new(
            vec![
                Subject::new(3.0, true, path),
                Subject::constant(1.0, false, vec![7.0]),
            ],
            4.0,
        )
        .unwrap();
        let back = roundtrip(&d);
        assert_eq!(back, d);
        assert!(back.subjects()[1].covariates.is_constant());
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_dataset("observed_time,event\n1,1\n".as_bytes()).is_err());
        assert!(read_dataset("#tau,4\nobserved_time,event\n1,2\n".as_bytes()).is_err());
        assert!(read_dataset("#tau,4\nobserved_time,event\nx,1\n".as_bytes()).is_err());
        assert!(read_dataset("#tau,4\nobserved_time,event\n5,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_roundtrip(rows in prop::collection::vec((0.0f64..=4.0, any::<bool>(), -1e6f64..1e6), 1..20)) {
            let subjects = rows.iter().map(|&(t, e, z)| Subject::constant(t, e, vec![z])).collect();
            let d = Dataset::new(subjects, 4.0).unwrap();
            let back = roundtrip(&d);
            for (a, b) in d.subjects().iter().zip(back.subjects()) {
                prop_assert_eq!(a.observed_time.to_bits(), b.observed_time.to_bits());
                prop_assert_eq!(a.covariates.value_at(0.0)[0].to_bits(), b.covariates.value_at(0.0)[0].to_bits());
            }
            prop_assert_eq!(back, d);
        }
    }
}
