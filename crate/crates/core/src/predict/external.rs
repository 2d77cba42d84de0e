//! Black-box predictors living outside this process.
//!
//! Both modes send the evaluation points as CSV (header = feature names in
//! dataset order, one row per point).
//!
//! * `file`: points are written to `points_path`; the model writes
//!   `preds_path` with a `prediction` header, one value per line and a final
//!   `#done` line. Any stale `preds_path` is removed before the points are
//!   written.
//! * `exec`: the command is run through `sh -c`, receives the CSV on stdin
//!   and prints one decimal number per line on stdout.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::data::{write_rows_csv, FeatureMeta, RowMatrix};
use crate::error::{Error, Result};

pub const DONE_SENTINEL: &str = "#done";
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExternalMode {
    File {
        points_path: PathBuf,
        preds_path: PathBuf,
    },
    Exec {
        command: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    #[serde(flatten)]
    pub mode: ExternalMode,
    pub timeout_secs: f64,
}

impl ExternalSpec {
    pub fn exec(command: impl Into<String>) -> Self {
        Self {
            mode: ExternalMode::Exec {
                command: command.into(),
            },
            timeout_secs: 60.0,
        }
    }

    pub fn file(points_path: impl Into<PathBuf>, preds_path: impl Into<PathBuf>) -> Self {
        Self {
            mode: ExternalMode::File {
                points_path: points_path.into(),
                preds_path: preds_path.into(),
            },
            timeout_secs: 60.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match &self.mode {
            ExternalMode::File {
                points_path,
                preds_path,
            } => !points_path.as_os_str().is_empty() && !preds_path.as_os_str().is_empty(),
            ExternalMode::Exec { command } => !command.trim().is_empty(),
        };
        if !ok {
            return Err(Error::Invalid("external predictor paths/command must be non-empty".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Invalid("external predictor timeout must be positive".into()));
        }
        Ok(())
    }

    /// Parses `exec:<command>` or `file:<points_path>:<preds_path>`.
    pub fn parse(s: &str, timeout_secs: f64) -> Result<Self> {
        let spec = if let Some(cmd) = s.strip_prefix("exec:") {
            Self::exec(cmd)
        } else if let Some(rest) = s.strip_prefix("file:") {
            let (points, preds) = rest
                .split_once(':')
                .ok_or_else(|| Error::Invalid("file mode needs file:<points>:<preds>".into()))?;
            Self::file(points, preds)
        } else {
            return Err(Error::Invalid(format!("unknown external predictor '{s}'")));
        };
        let spec = Self {
            timeout_secs,
            ..spec
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_value(line: &str, index: usize) -> Result<f64> {
    line.trim()
        .parse::<f64>()
        .map_err(|_| Error::Protocol(format!("unparsable prediction on line {}: '{line}'", index + 1)))
}

fn check_count(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::CountMismatch { expected, got });
    }
    Ok(())
}

pub fn predict_external(spec: &ExternalSpec, rows: &RowMatrix, metas: &[FeatureMeta]) -> Result<Vec<f64>> {
    spec.validate()?;
    if rows.ncols() != metas.len() {
        return Err(Error::Invalid(format!(
            "rows have {} columns, metadata describes {}",
            rows.ncols(),
            metas.len()
        )));
    }
    let csv = write_rows_csv(metas, rows)?;
    let timeout = Duration::from_secs_f64(spec.timeout_secs);
    match &spec.mode {
        ExternalMode::Exec { command } => run_exec(command, csv, rows.nrows(), timeout, spec.timeout_secs),
        ExternalMode::File {
            points_path,
            preds_path,
        } => {
            match std::fs::remove_file(preds_path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
            std::fs::write(points_path, csv)?;
            let start = Instant::now();
            loop {
                if let Ok(text) = std::fs::read_to_string(preds_path) {
                    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
                    if lines.last().map(|l| l.trim()) == Some(DONE_SENTINEL) {
                        let body = &lines[..lines.len() - 1];
                        let body = match body.first() {
                            Some(h) if h.trim() == "prediction" => &body[1..],
                            _ => {
                                return Err(Error::Protocol(
                                    "predictions file must start with a 'prediction' header".into(),
                                ))
                            }
                        };
                        let values = body
                            .iter()
                            .enumerate()
                            .map(|(i, l)| parse_value(l, i + 1))
                            .collect::<Result<Vec<_>>>()?;
                        check_count(rows.nrows(), values.len())?;
                        return Ok(values);
                    }
                }
                if start.elapsed() > timeout {
                    return Err(Error::Timeout(spec.timeout_secs));
                }
                thread::sleep(POLL);
            }
        }
    }
}

fn run_exec(command: &str, input: String, expected: usize, timeout: Duration, secs: f64) -> Result<Vec<f64>> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| Error::Protocol(format!("cannot spawn '{command}': {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = thread::spawn(move || {
        // A model may legitimately exit before reading everything.
        let _ = stdin.write_all(input.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut out = String::new();
        stdout.read_to_string(&mut out).map(|_| out)
    });

    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() > timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Timeout(secs));
        }
        thread::sleep(POLL);
    };
    let _ = writer.join();
    let out = reader
        .join()
        .map_err(|_| Error::Protocol("stdout reader panicked".into()))??;
    if !status.success() {
        return Err(Error::Protocol(format!("command exited with {status}")));
    }
    let values = out
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| parse_value(l, i))
        .collect::<Result<Vec<_>>>()?;
    check_count(expected, values.len())?;
    Ok(values)
}
