//! CSV reading and writing.
//!
//! Columns: `group` (0 control, 1 incident, 2 prevalent), `backward_time`
//! (empty except for prevalent cases), then one column per covariate.

use crate::types::{Dataset, GroupLabel, Subject};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header must start with `group,backward_time`, found {0:?}")]
    Header(Vec<String>),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Reads a dataset; every malformed row is reported, not just the first.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[0] != "group" || header[1] != "backward_time" {
        return Err(IoError::Header(header));
    }
    let names = header[2..].to_vec();
    let mut subjects = Vec::new();
    let mut problems: Vec<(usize, String)> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // Data rows are numbered from 1, after the header.
        let row = k + 1;
        let record = record?;
        match parse_row(&record, names.len()) {
            Ok(s) => subjects.push(s),
            Err(m) => problems.push((row, m)),
        }
    }
    match problems.len() {
        0 => Ok(Dataset::new(names, subjects)),
        1 => {
            let (row, message) = problems.pop().expect("one problem");
            Err(IoError::Row { row, message })
        }
        _ => {
            let row = problems[0].0;
            let message = problems.iter().map(|(r, m)| format!("row {r}: {m}")).collect::<Vec<_>>().join("; ");
            Err(IoError::Row { row, message })
        }
    }
}

fn parse_row(record: &csv::StringRecord, dim: usize) -> Result<Subject, String> {
    if record.len() != dim + 2 {
        return Err(format!("expected {} fields, found {}", dim + 2, record.len()));
    }
    let code: i64 = record[0].parse().map_err(|_| format!("group {:?} is not an integer", &record[0]))?;
    let group = GroupLabel::from_code(code).ok_or_else(|| format!("group must be 0, 1 or 2, found {code}"))?;
    let backward_time = match &record[1] {
        "" => None,
        s => Some(s.parse::<f64>().map_err(|_| format!("backward_time {s:?} is not a number"))?),
    };
    let covariates = (0..dim)
        .map(|j| {
            let s = &record[j + 2];
            s.parse::<f64>().map_err(|_| format!("covariate {} = {s:?} is not a number", j + 1))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Subject { group, covariates, backward_time })
}

/// Writes a dataset with every number at 17 significant digits, so that
/// reading it back reproduces the same bits.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["group".to_string(), "backward_time".to_string()];
    header.extend(data.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for s in &data.subjects {
        let mut rec = vec![s.group.code().to_string(), s.backward_time.map(format_full).unwrap_or_default()];
        rec.extend(s.covariates.iter().map(|&v| format_full(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits (round-trips any f64).
pub fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// 6 significant digits for human-readable tables.
pub fn format_short(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_schema() {
        let text = "group,backward_time,x1,x2\n0,,1.5,0\n1,,-2,1\n2,3.25,0.5,1\n";
        let data = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(data.covariate_names, vec!["x1", "x2"]);
        assert_eq!(data.subjects[2], Subject::prevalent(vec![0.5, 1.0], 3.25));
        assert_eq!(data.subjects[1].group, GroupLabel::IncidentCase);
    }

    #[test]
    fn reports_bad_rows() {
        let text = "group,backward_time,x1\n0,,1.5\n7,,1\n0,,abc\n";
        let err = read_dataset(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("row 3"), "{err}");
        let err = read_dataset("grp,backward_time\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::Header(_)));
        let err = read_dataset("group,backward_time,x\n1,,q\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::Row { row: 1, .. }), "{err}");
    }

    #[test]
    fn short_format() {
        assert_eq!(format_short(0.0668123), "0.0668123");
        assert_eq!(format_short(1.0023456), "1.00235");
        assert_eq!(format_short(-123.456789), "-123.457");
        assert_eq!(format_short(1.5e-7), "1.50000e-7");
    }

    fn subject() -> impl Strategy<Value = Subject> {
        (0u8..3, prop::collection::vec(-1e6f64..1e6, 2), 0.0f64..40.0).prop_map(|(g, x, a)| match g {
            0 => Subject::control(x),
            1 => Subject::incident(x),
            _ => Subject::prevalent(x, a),
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(subjects in prop::collection::vec(subject(), 0..30)) {
            let data = Dataset::with_default_names(2, subjects);
            let mut buf = Vec::new();
            write_dataset(&data, &mut buf).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(back, data);
        }
    }
}
