//! Map output: CSV (authoritative) and 16-bit PGM previews.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! reading a CSV back yields bit-identical values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::process::{FieldMap, FieldRow};

pub const FIELD_HEADER: &str =
    "y_mm,z_mm,B_mT,theta_deg,phi_deg,sigma_B,sigma_theta,sigma_phi,residual_MHz,unique_flag";
pub const FREQ_HEADER: &str = "y_mm,z_mm,freq_MHz";
pub const FIELD_MAP_FILE: &str = "field_map.csv";
pub const FAILURES_FILE: &str = "field_map_failures.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmitOptions {
    pub raster: bool,
}

type Quantity = (&'static str, fn(&FieldRow) -> f64);

pub fn freq_map_file(k: usize) -> String {
    format!("freq_map_{k}.csv")
}

fn field_csv(map: &FieldMap) -> String {
    let mut s = String::with_capacity(128 * (map.pixels.len() + 1));
    s.push_str(FIELD_HEADER);
    s.push('\n');
    for r in map.rows() {
        for v in r.values() {
            let _ = write!(s, "{v},");
        }
        s.push_str(if r.unique { "1\n" } else { "0\n" });
    }
    s
}

fn freq_csv(map: &FieldMap, k: usize) -> String {
    let mut s = format!("{FREQ_HEADER}\n");
    for p in &map.pixels {
        let _ = writeln!(s, "{},{},{}", p.y_mm, p.z_mm, p.center(k));
    }
    s
}

fn failures_csv(map: &FieldMap) -> String {
    let mut s = String::from("y_mm,z_mm,reason,detail\n");
    for p in &map.pixels {
        if let Some(f) = &p.failure {
            let detail = f.detail.replace([',', '\n'], ";");
            let _ = writeln!(s, "{},{},{},{detail}", p.y_mm, p.z_mm, f.reason);
        }
    }
    s
}

/// `width × height` 16-bit PGM with rows running from high z to low z.
/// Finite values map to 1..=65535 by min–max scaling; NaN and absent pixels are 0.
pub fn pgm16(map: &FieldMap, value: impl Fn(&FieldRow, usize) -> f64, label: &str) -> (Vec<u8>, String) {
    let (ys, zs) = (&map.grid.ys, &map.grid.zs);
    let (w, h) = (ys.len(), zs.len());
    let mut grid = vec![f64::NAN; w * h];
    let locate = |axis: &[f64], v: f64| {
        axis.iter()
            .enumerate()
            .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
            .map(|(i, _)| i)
    };
    for (k, (p, r)) in map.pixels.iter().zip(map.rows()).enumerate() {
        if let (Some(i), Some(j)) = (locate(ys, p.y_mm), locate(zs, p.z_mm)) {
            grid[(h - 1 - j) * w + i] = value(&r, k);
        }
    }
    let finite = grid.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let mut bytes = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for v in &grid {
        let code: u16 = if !v.is_finite() {
            0
        } else if hi > lo {
            1 + ((v - lo) / (hi - lo) * 65534.0).round() as u16
        } else {
            1
        };
        bytes.extend_from_slice(&code.to_be_bytes());
    }
    let scale = format!(
        "quantity={label}\nwidth={w}\nheight={h}\nmin={lo}\nmax={hi}\n\
         value = min + (code - 1) / 65534 * (max - min); code 0 = no data\n\
         columns: y ascending from {}; rows: z descending from {}\n",
        ys.first().copied().unwrap_or(f64::NAN),
        zs.last().copied().unwrap_or(f64::NAN),
    );
    (bytes, scale)
}

fn check_writable(dir: &Path, targets: &[PathBuf]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in targets {
        if t.is_dir() {
            return Err(Error::io(
                t,
                std::io::Error::new(std::io::ErrorKind::IsADirectory, "output target is a directory"),
            ));
        }
        if t.exists() && fs::metadata(t).map(|m| m.permissions().readonly()).unwrap_or(false) {
            return Err(Error::io(
                t,
                std::io::Error::new(std::io::ErrorKind::PermissionDenied, "output file is read-only"),
            ));
        }
    }
    let probe = dir.join(".nvmag-write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(dir, e))?;
    let _ = fs::remove_file(&probe);
    Ok(())
}

/// Writes the frequency maps, the field map, a failures sidecar and,
/// optionally, rasters. Everything is rendered and the destination probed
/// before the first file is written. Returns the written paths.
pub fn emit(map: &FieldMap, out_dir: &Path, opts: &EmitOptions) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for k in 0..map.components {
        files.push((out_dir.join(freq_map_file(k + 1)), freq_csv(map, k).into_bytes()));
    }
    files.push((out_dir.join(FIELD_MAP_FILE), field_csv(map).into_bytes()));
    files.push((out_dir.join(FAILURES_FILE), failures_csv(map).into_bytes()));

    if opts.raster {
        let field_q: [Quantity; 3] = [
            ("B_mT", |r| r.b_mt),
            ("theta_deg", |r| r.theta_deg),
            ("phi_deg", |r| r.phi_deg),
        ];
        for (name, f) in field_q {
            let (img, scale) = pgm16(map, |r, _| f(r), name);
            files.push((out_dir.join(format!("{name}.pgm")), img));
            files.push((out_dir.join(format!("{name}.scale.txt")), scale.into_bytes()));
        }
        for k in 0..map.components {
            let label = format!("freq_{}_MHz", k + 1);
            let (img, scale) = pgm16(map, |_, i| map.pixels[i].center(k), &label);
            files.push((out_dir.join(format!("freq_map_{}.pgm", k + 1)), img));
            files.push((out_dir.join(format!("freq_map_{}.scale.txt", k + 1)), scale.into_bytes()));
        }
    }

    let targets: Vec<PathBuf> = files.iter().map(|f| f.0.clone()).collect();
    check_writable(out_dir, &targets)?;
    for (path, bytes) in &files {
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(targets)
}

fn parse_rows(path: &Path, header: &str, width: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((i, h)) => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected header {header:?}, found {h:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    lines
        .map(|(i, l)| {
            let cols: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
            if cols.len() != width {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected {width} columns, found {}", cols.len()),
                });
            }
            Ok((i + 1, cols))
        })
        .collect()
}

fn num(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("{s:?} is not a number"),
    })
}

/// Reads a field-map CSV written by [`emit`].
pub fn read_field_map(path: &Path) -> Result<Vec<FieldRow>> {
    parse_rows(path, FIELD_HEADER, 10)?
        .into_iter()
        .map(|(line, c)| {
            let mut v = [0.0; 9];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = num(path, line, &c[k])?;
            }
            let unique = match c[9].as_str() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("unique_flag {other:?} is not 0 or 1"),
                    })
                }
            };
            Ok(FieldRow {
                y_mm: v[0],
                z_mm: v[1],
                b_mt: v[2],
                theta_deg: v[3],
                phi_deg: v[4],
                sigma_b: v[5],
                sigma_theta: v[6],
                sigma_phi: v[7],
                residual_mhz: v[8],
                unique,
            })
        })
        .collect()
}

/// Reads a `y_mm,z_mm,freq_MHz` map.
pub fn read_freq_map(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    parse_rows(path, FREQ_HEADER, 3)?
        .into_iter()
        .map(|(line, c)| Ok((num(path, line, &c[0])?, num(path, line, &c[1])?, num(path, line, &c[2])?)))
        .collect()
}
