//! CSV serialization of trial logs and collectives.
//!
//! Trial logs are flat CSV with columns
//! `j,lambda,setting_left,setting_right,outcome_left,outcome_right`.
//! Floating values print in Rust's shortest round-trip form, so a written
//! log parses back to bit-identical values. The file carries no metadata:
//! on load, the lambda backend and setting sets are reconstructed from the
//! values themselves (a column whose every entry parses as a float is
//! treated as numeric; table-driven models use non-numeric labels).

use std::io::{Read, Write};

use thiserror::Error;

use crate::collective::{Alphabet, Collective};
use crate::epr::{Lambda, SettingSet, TrialLog, TrialRecord};

#[derive(Debug, Error)]
pub enum LogIoError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("log contains no trials")]
    NoTrials,
}

const LOG_HEADER: [&str; 6] = [
    "j",
    "lambda",
    "setting_left",
    "setting_right",
    "outcome_left",
    "outcome_right",
];

/// Write a trial log as CSV.
pub fn write_log_csv<W: Write>(log: &TrialLog, writer: W) -> Result<(), LogIoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LOG_HEADER)?;
    for t in &log.records {
        let lambda = match t.lambda {
            Lambda::Angle(a) => format!("{a}"),
            Lambda::Sym(s) => match &log.lambda_labels {
                Some(labels) => labels[s as usize].clone(),
                None => format!("{s}"),
            },
        };
        w.write_record([
            t.index.to_string(),
            lambda,
            log.left_settings.label(t.left_setting),
            log.right_settings.label(t.right_setting),
            t.left_outcome.to_string(),
            t.right_outcome.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Render a trial log to a CSV string.
pub fn log_to_csv_string(log: &TrialLog) -> String {
    let mut buf = Vec::new();
    write_log_csv(log, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

struct RawRow {
    line: u64,
    index: u64,
    lambda: String,
    left: String,
    right: String,
    left_outcome: i8,
    right_outcome: i8,
}

fn parse_outcome(s: &str, line: u64) -> Result<i8, LogIoError> {
    match s.trim() {
        "1" | "+1" => Ok(1),
        "-1" => Ok(-1),
        other => Err(LogIoError::Parse {
            line,
            message: format!("outcome must be +1 or -1, got `{other}`"),
        }),
    }
}

/// Read a trial log from CSV, reconstructing the setting sets and lambda
/// backend from the observed values. Parse failures report the 1-based file
/// line of the offending row.
pub fn read_log_csv<R: Read>(reader: R) -> Result<TrialLog, LogIoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut rows: Vec<RawRow> = Vec::new();
    for (i, result) in r.records().enumerate() {
        let line = i as u64 + 2; // line 1 is the header
        let record = result.map_err(|e| LogIoError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 6 {
            return Err(LogIoError::Parse {
                line,
                message: format!("expected 6 columns, got {}", record.len()),
            });
        }
        let index: u64 = record[0].trim().parse().map_err(|_| LogIoError::Parse {
            line,
            message: format!("bad trial index `{}`", &record[0]),
        })?;
        if index != rows.len() as u64 + 1 {
            return Err(LogIoError::Parse {
                line,
                message: format!(
                    "trial indices must be consecutive from 1, got {index} at position {}",
                    rows.len() + 1
                ),
            });
        }
        rows.push(RawRow {
            line,
            index,
            lambda: record[1].to_string(),
            left: record[2].to_string(),
            right: record[3].to_string(),
            left_outcome: parse_outcome(&record[4], line)?,
            right_outcome: parse_outcome(&record[5], line)?,
        });
    }
    if rows.is_empty() {
        return Err(LogIoError::NoTrials);
    }

    let lambda_numeric = rows.iter().all(|r| r.lambda.trim().parse::<f64>().is_ok());
    let lambda_labels: Option<Vec<String>> = if lambda_numeric {
        None
    } else {
        let mut labels: Vec<String> = rows.iter().map(|r| r.lambda.clone()).collect();
        labels.sort();
        labels.dedup();
        Some(labels)
    };

    let left_settings = reconstruct_set(rows.iter().map(|r| (r.line, r.left.as_str())))?;
    let right_settings = reconstruct_set(rows.iter().map(|r| (r.line, r.right.as_str())))?;

    let records = rows
        .iter()
        .map(|row| {
            let lambda = match &lambda_labels {
                None => {
                    let v: f64 = row.lambda.trim().parse().expect("checked numeric");
                    Lambda::Angle(v)
                }
                Some(labels) => {
                    Lambda::Sym(labels.iter().position(|l| *l == row.lambda).unwrap() as u32)
                }
            };
            Ok(TrialRecord {
                index: row.index,
                lambda,
                left_setting: find_setting(&left_settings, &row.left, row.line)?,
                right_setting: find_setting(&right_settings, &row.right, row.line)?,
                left_outcome: row.left_outcome,
                right_outcome: row.right_outcome,
            })
        })
        .collect::<Result<Vec<_>, LogIoError>>()?;

    Ok(TrialLog {
        model_name: "loaded".to_string(),
        master_seed: None,
        lambda_labels,
        left_settings,
        right_settings,
        records,
    })
}

fn reconstruct_set<'a, I: Iterator<Item = (u64, &'a str)> + Clone>(
    values: I,
) -> Result<SettingSet, LogIoError> {
    let numeric = values.clone().all(|(_, v)| v.trim().parse::<f64>().is_ok());
    if numeric {
        let mut angles: Vec<f64> = values.map(|(_, v)| v.trim().parse().unwrap()).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).expect("no NaN settings"));
        angles.dedup();
        Ok(SettingSet::Angles(angles))
    } else {
        let mut labels: Vec<String> = values.map(|(_, v)| v.to_string()).collect();
        labels.sort();
        labels.dedup();
        Ok(SettingSet::Labels(labels))
    }
}

fn find_setting(set: &SettingSet, raw: &str, line: u64) -> Result<u16, LogIoError> {
    let idx = match set {
        SettingSet::Angles(v) => {
            let x: f64 = raw.trim().parse().map_err(|_| LogIoError::Parse {
                line,
                message: format!("bad setting `{raw}`"),
            })?;
            v.iter().position(|a| *a == x)
        }
        SettingSet::Labels(v) => v.iter().position(|l| l == raw),
    };
    idx.map(|i| i as u16).ok_or_else(|| LogIoError::Parse {
        line,
        message: format!("setting `{raw}` missing from the reconstructed set"),
    })
}

/// Write a collective as CSV with columns (index, symbol).
pub fn write_collective_csv<W: Write>(c: &Collective, writer: W) -> Result<(), LogIoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index", "symbol"])?;
    for i in 0..c.len() {
        w.write_record([(i + 1).to_string(), c.label_at(i).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a collective from CSV; the alphabet is the sorted set of distinct
/// symbols observed.
pub fn read_collective_csv<R: Read>(reader: R) -> Result<Collective, LogIoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut labels = Vec::new();
    for (i, result) in r.records().enumerate() {
        let line = i as u64 + 2;
        let record = result.map_err(|e| LogIoError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(LogIoError::Parse {
                line,
                message: format!("expected 2 columns, got {}", record.len()),
            });
        }
        labels.push(record[1].to_string());
    }
    if labels.is_empty() {
        return Err(LogIoError::NoTrials);
    }
    let mut distinct = labels.clone();
    distinct.sort();
    distinct.dedup();
    let alphabet = Alphabet::new(distinct).expect("deduplicated labels are distinct");
    Collective::from_labels(alphabet, &labels).map_err(|e| LogIoError::Parse {
        line: 0,
        message: e.to_string(),
    })
}
