//! On-disk formats.
//!
//! Packing snapshot (plain text, floats in shortest round-trip form so a
//! write/read cycle is bit-exact):
//!
//! ```text
//! # granular packing snapshot
//! format 1
//! n 25
//! lattice 5 5
//! box 0.55 0.43 fixed-walls
//! phi 0.84
//! sigma 0.1
//! # index x y k
//! 0 0.051 0.049 5.5
//! ...
//! ```
//!
//! Trajectory CSV: `step,time,p<i>_<axis>...`, one row per recorded sample.
//! Loss history CSV: `step,total,partial_<case>...,lr`, one row per epoch.

use std::fs;
use std::path::Path;

use granular_core::optim::EpochRecord;
use granular_core::physics::{Boundary, Container, PackingGeometry};
use granular_core::sim::{ProbeRecord, SimConfig};

use crate::error::{AppError, AppResult};

/// Geometry plus per-particle stiffness.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub geometry: PackingGeometry,
    pub packing_fraction: f64,
    pub diameter: f64,
    pub stiffness: Vec<f64>,
}

const SNAPSHOT_HEADER: &str = "# granular packing snapshot";

impl Snapshot {
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let boundary = match g.container.boundary {
            Boundary::FixedWalls => "fixed-walls",
            Boundary::Open => "open",
        };
        let mut s = String::new();
        s.push_str(SNAPSHOT_HEADER);
        s.push('\n');
        s.push_str("format 1\n");
        s.push_str(&format!("n {}\n", g.len()));
        s.push_str(&format!("lattice {} {}\n", g.lattice.0, g.lattice.1));
        s.push_str(&format!(
            "box {:?} {:?} {boundary}\n",
            g.container.width, g.container.height
        ));
        s.push_str(&format!("phi {:?}\n", self.packing_fraction));
        s.push_str(&format!("sigma {:?}\n", self.diameter));
        s.push_str("# index x y k\n");
        for (i, (p, k)) in g.equilibrium.iter().zip(&self.stiffness).enumerate() {
            s.push_str(&format!("{i} {:?} {:?} {:?}\n", p[0], p[1], k));
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> AppResult<Self> {
        let err = |line: usize, msg: &str| AppError::parse(origin, format!("line {}: {msg}", line + 1));
        let mut n = None;
        let mut lattice = None;
        let mut container = None;
        let mut phi = None;
        let mut sigma = None;
        let mut rows: Vec<(usize, [f64; 2], f64)> = Vec::new();
        let mut seen_header = false;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line == SNAPSHOT_HEADER {
                seen_header = true;
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(ln, &format!("bad number '{s}'")));
            let count = |s: &str| s.parse::<usize>().map_err(|_| err(ln, &format!("bad count '{s}'")));
            match fields[0] {
                "format" => {
                    if fields.get(1) != Some(&"1") {
                        return Err(err(ln, "unsupported format version"));
                    }
                }
                "n" if fields.len() == 2 => n = Some(count(fields[1])?),
                "lattice" if fields.len() == 3 => lattice = Some((count(fields[1])?, count(fields[2])?)),
                "box" if fields.len() == 4 => {
                    let (w, h) = (num(fields[1])?, num(fields[2])?);
                    container = Some(match fields[3] {
                        "fixed-walls" => Container::walls(w, h),
                        "open" => Container {
                            width: w,
                            height: h,
                            boundary: Boundary::Open,
                        },
                        other => return Err(err(ln, &format!("unknown boundary '{other}'"))),
                    });
                }
                "phi" if fields.len() == 2 => phi = Some(num(fields[1])?),
                "sigma" if fields.len() == 2 => sigma = Some(num(fields[1])?),
                _ if fields.len() == 4 => {
                    rows.push((count(fields[0])?, [num(fields[1])?, num(fields[2])?], num(fields[3])?));
                }
                _ => return Err(err(ln, "unrecognized line")),
            }
        }
        if !seen_header {
            return Err(AppError::parse(origin, "missing snapshot header"));
        }
        let missing = |what: &str| AppError::parse(origin, format!("missing '{what}' line"));
        let n = n.ok_or_else(|| missing("n"))?;
        if rows.len() != n {
            return Err(AppError::parse(
                origin,
                format!("expected {n} particles, found {}", rows.len()),
            ));
        }
        if let Some((pos, _)) = rows.iter().enumerate().find(|(pos, r)| r.0 != *pos) {
            return Err(AppError::parse(origin, format!("particle rows out of order at {pos}")));
        }
        let geometry = PackingGeometry {
            container: container.ok_or_else(|| missing("box"))?,
            lattice: lattice.ok_or_else(|| missing("lattice"))?,
            equilibrium: rows.iter().map(|r| r.1).collect(),
        };
        Ok(Snapshot {
            geometry,
            packing_fraction: phi.ok_or_else(|| missing("phi"))?,
            diameter: sigma.ok_or_else(|| missing("sigma"))?,
            stiffness: rows.iter().map(|r| r.2).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        fs::write(path, self.to_text()).map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text, path)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> AppError {
    AppError::parse(path, e)
}

/// Writes probe series with their step and time columns.
pub fn write_trajectory(path: &Path, config: &SimConfig, records: &[ProbeRecord]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend(records.iter().map(|r| format!("p{}_{}", r.particle, r.axis.name())));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let len = records.first().map_or(0, |r| r.series.len());
    for k in 0..len {
        let mut row = vec![
            config.recorded_step(k).to_string(),
            format!("{:?}", config.recorded_time(k)),
        ];
        row.extend(records.iter().map(|r| format!("{:?}", r.series[k])));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Columns of a trajectory file: header and per-column values.
pub fn read_trajectory(path: &Path) -> AppResult<(Vec<String>, Vec<Vec<f64>>)> {
    read_numeric_csv(path)
}

pub fn read_numeric_csv(path: &Path) -> AppResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        for (col, field) in columns.iter_mut().zip(row.iter()) {
            col.push(
                field
                    .parse::<f64>()
                    .map_err(|_| AppError::parse(path, format!("bad number '{field}'")))?,
            );
        }
    }
    Ok((header, columns))
}

/// Header of a loss-history file for the given case labels.
pub fn history_header(labels: &[&str]) -> Vec<String> {
    let mut h = vec!["step".to_string(), "total".to_string()];
    h.extend(labels.iter().map(|l| format!("partial_{l}")));
    h.push("lr".to_string());
    h
}

pub fn history_row(record: &EpochRecord) -> Vec<String> {
    let mut row = vec![record.epoch.to_string(), format!("{:?}", record.report.total)];
    row.extend(record.report.partials.iter().map(|(_, v)| format!("{v:?}")));
    row.push(format!("{:?}", record.lr));
    row
}

pub fn write_history(path: &Path, labels: &[&str], history: &[EpochRecord]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(history_header(labels)).map_err(|e| csv_err(path, e))?;
    for r in history {
        w.write_record(history_row(r)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Generic numeric table writer.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}
