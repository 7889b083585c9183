//! Long-format scan CSV input: `y_mm,z_mm,freq_MHz,signal`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::spectrum::SweepTrace;

use super::config::GridSteps;

pub const SCAN_HEADER: [&str; 4] = ["y_mm", "z_mm", "freq_MHz", "signal"];

/// One sweep at one stage position.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub y_mm: f64,
    pub z_mm: f64,
    /// Carries the same position.
    pub trace: SweepTrace,
    /// `file:line` of the first row of this position.
    pub source: String,
}

/// Grid completeness. Missing pixels are listed, never fatal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridReport {
    /// Expected lattice coordinates (mm), ascending.
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
    pub present: usize,
    pub missing: Vec<(f64, f64)>,
    /// Positions that do not sit on the nominal step lattice.
    pub off_grid: Vec<(f64, f64)>,
}

impl GridReport {
    pub fn expected(&self) -> usize {
        self.ys.len() * self.zs.len()
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.off_grid.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} x {} grid (y x z): {} of {} positions present",
            self.ys.len(),
            self.zs.len(),
            self.present,
            self.expected()
        );
        if !self.missing.is_empty() {
            let _ = write!(s, "; missing:");
            for (y, z) in &self.missing {
                let _ = write!(s, " ({y}, {z})");
            }
        }
        if !self.off_grid.is_empty() {
            let _ = write!(s, "; {} off-lattice positions", self.off_grid.len());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Sorted by `(y, z)`.
    pub records: Vec<ScanRecord>,
    pub report: GridReport,
    pub warnings: Vec<String>,
}

fn key(y: f64, z: f64) -> (u64, u64) {
    // +0.0 and −0.0 are the same stage position
    ((y + 0.0).to_bits(), (z + 0.0).to_bits())
}

struct Group {
    y: f64,
    z: f64,
    first_line: usize,
    points: Vec<(f64, f64)>,
}

fn parse_file(path: &Path, groups: &mut BTreeMap<(u64, u64), (PathBuf, Group)>) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut header: Option<([usize; 4], usize)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some((idx, width)) = header else {
            let mut idx = [0; 4];
            for (k, name) in SCAN_HEADER.iter().enumerate() {
                idx[k] = cols
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| err(line_no, format!("header lacks column {name:?}")))?;
            }
            header = Some((idx, cols.len()));
            continue;
        };
        if cols.len() != width {
            return Err(err(line_no, format!("expected {width} columns, found {}", cols.len())));
        }
        let mut v = [0.0; 4];
        for (k, &c) in idx.iter().enumerate() {
            v[k] = cols[c]
                .parse::<f64>()
                .map_err(|_| err(line_no, format!("{}: {:?} is not a number", SCAN_HEADER[k], cols[c])))?;
            if !v[k].is_finite() {
                return Err(err(line_no, format!("{} is not finite", SCAN_HEADER[k])));
            }
        }
        let [y, z, f, s] = v;
        let k = key(y, z);
        match groups.get_mut(&k) {
            Some((owner, g)) if owner == path => g.points.push((f, s)),
            Some((owner, g)) => {
                return Err(Error::DuplicatePosition {
                    y_mm: y,
                    z_mm: z,
                    first: format!("{}:{}", owner.display(), g.first_line),
                    second: format!("{}:{line_no}", path.display()),
                })
            }
            None => {
                groups.insert(
                    k,
                    (
                        path.to_path_buf(),
                        Group {
                            y,
                            z,
                            first_line: line_no,
                            points: vec![(f, s)],
                        },
                    ),
                );
            }
        }
    }
    if header.is_none() {
        return Err(err(1, "missing header y_mm,z_mm,freq_MHz,signal".into()));
    }
    Ok(())
}

fn lattice(values: &[f64], step: f64) -> (Vec<f64>, Vec<bool>) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = ((hi - lo) / step).round() as usize;
    let axis = (0..=n).map(|k| lo + k as f64 * step).collect();
    let tol = 1e-6 * step.max(1.0);
    let on = values
        .iter()
        .map(|v| {
            let k = ((v - lo) / step).round();
            (v - (lo + k * step)).abs() <= tol
        })
        .collect();
    (axis, on)
}

fn index_of(axis: &[f64], v: f64, step: f64) -> Option<usize> {
    let tol = 1e-6 * step.max(1.0);
    axis.iter().position(|a| (a - v).abs() <= tol)
}

/// Completeness of `positions` against the lattice spanned by `steps`.
pub fn grid_report(positions: &[(f64, f64)], steps: &GridSteps) -> GridReport {
    if positions.is_empty() {
        return GridReport::default();
    }
    let ys: Vec<f64> = positions.iter().map(|p| p.0).collect();
    let zs: Vec<f64> = positions.iter().map(|p| p.1).collect();
    let (yax, yon) = lattice(&ys, steps.y_step);
    let (zax, zon) = lattice(&zs, steps.z_step);
    let mut seen = vec![false; yax.len() * zax.len()];
    let mut off_grid = Vec::new();
    for (i, &(y, z)) in positions.iter().enumerate() {
        match (yon[i] && zon[i])
            .then(|| (index_of(&yax, y, steps.y_step), index_of(&zax, z, steps.z_step)))
        {
            Some((Some(a), Some(b))) => seen[a * zax.len() + b] = true,
            _ => off_grid.push((y, z)),
        }
    }
    let missing = yax
        .iter()
        .flat_map(|&y| zax.iter().map(move |&z| (y, z)))
        .zip(&seen)
        .filter(|(_, s)| !**s)
        .map(|(p, _)| p)
        .collect();
    GridReport {
        ys: yax,
        zs: zax,
        present: positions.len(),
        missing,
        off_grid,
    }
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads one scan CSV or every `*.csv` in a directory.
pub fn ingest(path: &Path, steps: &GridSteps) -> Result<Ingested> {
    let files = if path.is_dir() {
        csv_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    let mut warnings = Vec::new();
    if files.is_empty() {
        warnings.push(format!("{}: no scan files found", path.display()));
    }
    let mut groups = BTreeMap::new();
    for f in &files {
        parse_file(f, &mut groups)?;
    }

    let mut records = Vec::with_capacity(groups.len());
    for (file, g) in groups.into_values() {
        let trace = SweepTrace::from_unsorted(g.points).map_err(|e| Error::Parse {
            path: file.clone(),
            line: g.first_line,
            msg: format!("position ({}, {}): {e}", g.y, g.z),
        })?;
        records.push(ScanRecord {
            y_mm: g.y,
            z_mm: g.z,
            trace: trace.with_position(g.y, g.z),
            source: format!("{}:{}", file.display(), g.first_line),
        });
    }
    records.sort_by(|a, b| a.y_mm.total_cmp(&b.y_mm).then(a.z_mm.total_cmp(&b.z_mm)));

    let positions: Vec<(f64, f64)> = records.iter().map(|r| (r.y_mm, r.z_mm)).collect();
    let report = grid_report(&positions, steps);
    if !report.is_complete() {
        warnings.push(report.summary());
    }
    Ok(Ingested {
        records,
        report,
        warnings,
    })
}

/// Writes records in the long format accepted by [`ingest`].
pub fn write_scan_csv(path: &Path, records: &[ScanRecord]) -> Result<()> {
    let mut out = format!("# units: y_mm=mm, z_mm=mm, freq_MHz=MHz, signal=V\n{}\n", SCAN_HEADER.join(","));
    for r in records {
        for (f, s) in r.trace.freqs().iter().zip(r.trace.values()) {
            let _ = writeln!(out, "{},{},{f},{s}", r.y_mm, r.z_mm);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a single sweep. The header row is optional: with one, the
/// `freq_MHz` and `signal` columns are used; without, the first two columns.
pub fn read_trace(path: &Path) -> Result<SweepTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut layout: Option<(usize, usize, usize)> = None;
    let mut points = Vec::new();
    let mut first = 1;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let (fi, si, width) = match layout {
            Some(l) => l,
            None if cols.len() == 2 && cols.iter().all(|c| c.parse::<f64>().is_ok()) => {
                first = i + 1;
                *layout.insert((0, 1, 2))
            }
            None => {
                let find = |name: &str| {
                    cols.iter()
                        .position(|c| *c == name)
                        .ok_or_else(|| err(i + 1, format!("header lacks column {name:?}")))
                };
                layout = Some((find("freq_MHz")?, find("signal")?, cols.len()));
                first = i + 2;
                continue;
            }
        };
        if cols.len() != width {
            return Err(err(i + 1, format!("expected {width} columns, found {}", cols.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(i + 1, format!("{s:?} is not a finite number")))
        };
        points.push((num(cols[fi])?, num(cols[si])?));
    }
    if layout.is_none() {
        return Err(err(1, "no data rows".into()));
    }
    SweepTrace::from_unsorted(points).map_err(|e| err(first, e.to_string()))
}
