//! File emission and parsing: density/mask/history/region CSVs and the run
//! report. All writes are atomic (write to a temp file, then rename) and
//! byte-deterministic for fixed inputs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::HexGrid;
use crate::lengthscale::Regions;
use crate::mask::{DensityField, EllipticalMask, MaskSet, MaskShape, Polarity};
use crate::sls::HistoryRow;

pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// `row,col,density` with 6-digit densities.
pub fn density_csv(grid: &HexGrid, field: &DensityField) -> String {
    let mut s = String::from("row,col,density\n");
    for cell in grid.cells() {
        s.push_str(&format!("{},{},{}\n", cell.row, cell.col, fmt6(field.rho[cell.id])));
    }
    s
}

/// Parse a density CSV; grid dimensions are inferred from the indices.
pub fn parse_density_csv(path: &Path, text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut n_rows = 0usize;
    let mut n_cols = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("row")) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected 3 comma-separated fields, got {}", parts.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("bad {what} value {s:?}"),
            })
        };
        let row = parse(parts[0], "row")? as usize;
        let col = parse(parts[1], "col")? as usize;
        let rho = parse(parts[2], "density")?;
        n_rows = n_rows.max(row + 1);
        n_cols = n_cols.max(col + 1);
        entries.push((row, col, rho));
    }
    if entries.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "no density rows".into(),
        });
    }
    let mut rho = vec![f64::NAN; n_rows * n_cols];
    for (r, c, v) in entries {
        rho[r * n_cols + c] = v;
    }
    if let Some(i) = rho.iter().position(|v| v.is_nan()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!(
                "missing density for cell (row {}, col {})",
                i / n_cols,
                i % n_cols
            ),
        });
    }
    Ok((n_cols, n_rows, rho))
}

/// `id,polarity,x,y,a,b,theta`.
pub fn masks_csv(masks: &MaskSet) -> String {
    let pol = match masks.polarity {
        Polarity::Negative => "negative",
        Polarity::Positive => "positive",
    };
    let mut s = String::from("id,polarity,x,y,a,b,theta\n");
    for (i, m) in masks.masks.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i,
            pol,
            fmt6(m.x),
            fmt6(m.y),
            fmt6(m.a),
            fmt6(m.b),
            fmt6(m.theta)
        ));
    }
    s
}

pub fn parse_masks_csv(path: &Path, text: &str, alpha: f64, eta: f64) -> Result<MaskSet> {
    let mut masks = Vec::new();
    let mut polarity = Polarity::Negative;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("id")) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 7 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected 7 fields, got {}", parts.len()),
            });
        }
        polarity = match parts[1] {
            "negative" => Polarity::Negative,
            "positive" => Polarity::Positive,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("bad polarity {other:?}"),
                })
            }
        };
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("bad number {s:?}"),
            })
        };
        masks.push(EllipticalMask {
            x: num(parts[2])?,
            y: num(parts[3])?,
            a: num(parts[4])?,
            b: num(parts[5])?,
            theta: num(parts[6])?,
        });
    }
    MaskSet::new(masks, polarity, MaskShape::Elliptical, alpha, eta)
}

/// `eval,phi,g1,gmin,gmax,vf,eps1,eps2,bwi`.
pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut s = String::from("eval,phi,g1,gmin,gmax,vf,eps1,eps2,bwi\n");
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.eval,
            fmt6(r.phi),
            fmt6(r.g1),
            fmt6(r.gmin),
            fmt6(r.gmax),
            fmt6(r.vf),
            fmt6(r.eps1),
            fmt6(r.eps2),
            fmt6(r.bwi)
        ));
    }
    s
}

/// `cell,region` with region in {rmin, rmax, none}.
pub fn regions_csv(regions: &Regions) -> String {
    let mut s = String::from("cell,region\n");
    for i in 0..regions.r_min.len() {
        let tag = if regions.r_min[i] {
            "rmin"
        } else if regions.r_max[i] {
            "rmax"
        } else {
            "none"
        };
        s.push_str(&format!("{i},{tag}\n"));
    }
    s
}

#[derive(Debug, Clone)]
pub struct ReportData {
    pub phi: f64,
    pub phi_projected: f64,
    pub vf: f64,
    pub g1: f64,
    pub gmin: f64,
    pub gmax: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub bwi: f64,
    pub mask_count: usize,
    pub masks_deleted: usize,
    pub evals_used: usize,
    pub status: String,
    pub skeleton_cells: usize,
    pub blue_cells: usize,
    pub red_cells: usize,
}

pub fn report_txt(r: &ReportData) -> String {
    format!(
        "status: {}\n\
         phi: {:.6}\n\
         phi_projected: {:.6}\n\
         vf: {:.6}\n\
         g1: {:.6}\n\
         gmin: {:.6}\n\
         gmax: {:.6}\n\
         eps1: {:.6}\n\
         eps2: {:.6}\n\
         bwi: {:.6}\n\
         masks: {}\n\
         masks_deleted: {}\n\
         evaluations: {}\n\
         skeleton_cells: {}\n\
         blue_cells: {}\n\
         red_cells: {}\n",
        r.status,
        r.phi,
        r.phi_projected,
        r.vf,
        r.g1,
        r.gmin,
        r.gmax,
        r.eps1,
        r.eps2,
        r.bwi,
        r.mask_count,
        r.masks_deleted,
        r.evals_used,
        r.skeleton_cells,
        r.blue_cells,
        r.red_cells
    )
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
