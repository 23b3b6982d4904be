//! CSV formats for θ traces and particle states.
//!
//! Numbers are written in scientific notation with 17 significant digits so
//! that every `f64` parses back to the identical value.
//!
//! State files hold one `theta` row followed by `particle` rows:
//!
//! ```text
//! kind,index,v0,v1,...
//! theta,0,0.5
//! particle,0,1.2,-0.3,...
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::config::Trace;
use crate::error::{Error, Result};
use crate::model::ParticleCloud;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub theta: Vec<f64>,
    pub theta_bar: Vec<f64>,
}

pub fn write_theta_trace<W: Write>(out: W, trace: &Trace) -> Result<()> {
    let d = trace.theta_bar_final.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend((0..d).map(|i| format!("theta_{i}")));
    header.extend((0..d).map(|i| format!("theta_bar_{i}")));
    w.write_record(&header).map_err(csv_io)?;
    for (i, (theta, bar)) in trace.theta_path.iter().zip(trace.theta_bar_path()).enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(theta.iter().map(|v| fmt_f64(*v)));
        rec.extend(bar.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_theta_trace<R: Read>(input: R, path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| csv_parse(e, path))?.clone();
    if headers.get(0) != Some("step") || headers.len() % 2 != 1 {
        return Err(Error::Format {
            path: path.into(),
            reason: "expected header `step,theta_*,theta_bar_*`".into(),
        });
    }
    let d = (headers.len() - 1) / 2;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_parse(e, path))?;
        let line = i + 2;
        let step = rec[0].parse().map_err(|_| parse_err(path, line, "bad step"))?;
        let values = parse_fields(rec.iter().skip(1), path, line)?;
        rows.push(TraceRow {
            step,
            theta: values[..d].to_vec(),
            theta_bar: values[d..].to_vec(),
        });
    }
    Ok(rows)
}

pub fn write_state<W: Write>(out: W, theta: &[f64], cloud: &ParticleCloud) -> Result<()> {
    let width = theta.len().max(cloud.d_x());
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let mut header = vec!["kind".to_string(), "index".to_string()];
    header.extend((0..width).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_io)?;
    let mut rec = vec!["theta".to_string(), "0".to_string()];
    rec.extend(theta.iter().map(|v| fmt_f64(*v)));
    w.write_record(&rec).map_err(csv_io)?;
    for (n, x) in cloud.particles().enumerate() {
        let mut rec = vec!["particle".to_string(), n.to_string()];
        rec.extend(x.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_state(path: &Path) -> Result<(Vec<f64>, ParticleCloud)> {
    let f = fs::File::open(path)?;
    read_state_from(f, path)
}

pub fn read_state_from<R: Read>(input: R, path: &Path) -> Result<(Vec<f64>, ParticleCloud)> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let mut theta = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_parse(e, path))?;
        let line = i + 2;
        let values = parse_fields(rec.iter().skip(2), path, line)?;
        match rec.get(0) {
            Some("theta") => theta = Some(values),
            Some("particle") => {
                if let Some(first) = rows.first() {
                    if first.len() != values.len() {
                        return Err(parse_err(path, line, "particle rows differ in length"));
                    }
                }
                rows.push(values);
            }
            other => {
                return Err(parse_err(
                    path,
                    line,
                    &format!("unknown row kind {:?}", other.unwrap_or("")),
                ))
            }
        }
    }
    let theta = theta.ok_or_else(|| Error::Format {
        path: path.into(),
        reason: "missing theta row".into(),
    })?;
    if rows.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            reason: "no particle rows".into(),
        });
    }
    Ok((theta, ParticleCloud::from_rows(&rows)?))
}

fn parse_fields<'a>(
    fields: impl Iterator<Item = &'a str>,
    path: &Path,
    line: usize,
) -> Result<Vec<f64>> {
    fields
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, &format!("not a number: {s:?}")))
        })
        .collect()
}

fn parse_err(path: &Path, line: usize, reason: &str) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        reason: reason.to_string(),
    }
}

fn csv_parse(e: csv::Error, path: &Path) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    parse_err(path, line, &e.to_string())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(e.into())
}
