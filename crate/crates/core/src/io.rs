//! Path files: a CSV table `t,y,dW,dL,is_jump` plus a JSON sidecar with the
//! parameters and grid. Floats are written with 17 significant digits so a
//! written path reads back bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::simulate::{stable_coefficient, uniform_grid, JumpRecord, Path};

pub const FORMAT_VERSION: u32 = 1;

pub const PATH_HEADER: &str = "t,y,dW,dL,is_jump";

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathMeta {
    pub version: u32,
    pub params: ModelParams,
    pub seed: Option<u64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub kappa: f64,
    #[serde(default)]
    pub projections: usize,
}

impl PathMeta {
    pub fn of(path: &Path) -> Self {
        Self {
            version: FORMAT_VERSION,
            params: path.params,
            seed: path.seed,
            horizon: path.horizon(),
            n_steps: path.n_steps(),
            dt: path.dt,
            kappa: path.kappa,
            projections: path.projections,
        }
    }
}

pub fn path_to_csv(path: &Path) -> String {
    let mut out = String::with_capacity(80 * (path.values.len() + 1));
    out.push_str(PATH_HEADER);
    out.push('\n');
    let mut jumps = path.jump_records.iter().peekable();
    for (k, (t, y)) in path.times.iter().zip(&path.values).enumerate() {
        out.push_str(&fmt_f64(*t));
        out.push(',');
        out.push_str(&fmt_f64(*y));
        if k == 0 {
            out.push_str(",,,\n");
            continue;
        }
        let step = k - 1;
        let cell = |v: &Option<Vec<f64>>| v.as_ref().map(|xs| fmt_f64(xs[step])).unwrap_or_default();
        let is_jump = jumps.peek().is_some_and(|j| j.step == step);
        if is_jump {
            jumps.next();
        }
        out.push(',');
        out.push_str(&cell(&path.brownian_increments));
        out.push(',');
        out.push_str(&cell(&path.stable_increments));
        out.push(',');
        out.push_str(if is_jump { "1" } else { "0" });
        out.push('\n');
    }
    out
}

pub fn meta_to_json(meta: &PathMeta) -> Result<String> {
    Ok(serde_json::to_string_pretty(meta)?)
}

/// Writes `<out>` (CSV) and `<out>.json` (sidecar). Both are rendered in
/// memory first so a failure leaves no partial files behind.
pub fn write_path(path: &Path, out: &FsPath) -> Result<()> {
    let csv = path_to_csv(path);
    let json = meta_to_json(&PathMeta::of(path))?;
    write_atomically(out, csv.as_bytes())?;
    write_atomically(&sidecar_path(out), json.as_bytes())
}

pub fn sidecar_path(csv: &FsPath) -> std::path::PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomically(target: &FsPath, bytes: &[u8]) -> Result<()> {
    let mut tmp = target.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, target)?;
    Ok(())
}

fn parse_cell(cell: &str, line: usize) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::Parse(format!("line {line}: bad number {cell:?}: {e}")))
}

/// Parses a path CSV against its sidecar. Increment columns that are blank on
/// every row give an observation-only path.
pub fn path_from_csv(csv: &str, meta: &PathMeta) -> Result<Path> {
    if meta.version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported path format version {}",
            meta.version
        )));
    }
    meta.params.validate()?;
    let mut lines = csv.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PATH_HEADER => {}
        _ => return Err(Error::Parse(format!("expected header {PATH_HEADER:?}"))),
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut dws: Vec<Option<f64>> = Vec::new();
    let mut dls: Vec<Option<f64>> = Vec::new();
    let mut flags = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(Error::Parse(format!("line {line_no}: expected 5 columns")));
        }
        let t = parse_cell(cells[0], line_no)?
            .ok_or_else(|| Error::Parse(format!("line {line_no}: missing t")))?;
        let y = parse_cell(cells[1], line_no)?
            .ok_or_else(|| Error::Parse(format!("line {line_no}: missing y")))?;
        times.push(t);
        values.push(y);
        if values.len() > 1 {
            dws.push(parse_cell(cells[2], line_no)?);
            dls.push(parse_cell(cells[3], line_no)?);
            flags.push(match cells[4].trim() {
                "1" => true,
                "0" | "" => false,
                other => {
                    return Err(Error::Parse(format!("line {line_no}: bad is_jump {other:?}")))
                }
            });
        }
    }
    if values.len() != meta.n_steps + 1 {
        return Err(Error::Validation(format!(
            "sidecar declares {} steps but the table has {} rows",
            meta.n_steps,
            values.len()
        )));
    }
    let mut path = Path::from_values(meta.params, meta.dt, values)?;
    if times.len() != path.times.len() {
        return Err(Error::Validation("time column does not match the grid".into()));
    }
    let grid = uniform_grid(meta.dt, meta.n_steps);
    for (k, (t, g)) in times.iter().zip(&grid).enumerate() {
        let tol = 1e-9 * meta.horizon.max(1.0);
        if (t - g).abs() > tol && k < meta.n_steps {
            return Err(Error::Validation(format!("row {k}: time {t} is off the grid")));
        }
    }
    path.times = times;
    path.kappa = meta.kappa;
    path.seed = meta.seed;
    path.projections = meta.projections;
    let column = |xs: Vec<Option<f64>>| -> Result<Option<Vec<f64>>> {
        if xs.iter().all(Option::is_none) {
            return Ok(None);
        }
        xs.into_iter()
            .map(|x| x.ok_or_else(|| Error::Parse("increment column is partly blank".into())))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    };
    path.brownian_increments = column(dws)?;
    path.stable_increments = column(dls)?;
    if let Some(dl) = &path.stable_increments {
        path.jump_records = flags
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(k, _)| JumpRecord {
                step: k,
                delta_y: stable_coefficient(&path.params, path.values[k]) * dl[k],
            })
            .collect();
    }
    Ok(path)
}

pub fn read_path(csv_file: &FsPath) -> Result<Path> {
    let meta: PathMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_file))?)?;
    path_from_csv(&fs::read_to_string(csv_file)?, &meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::simulate_path;
    use proptest::prelude::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn first_row_has_blank_increments() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.5, 1.0).unwrap();
        let path = simulate_path(&p, 1.0, 10, 1).unwrap();
        let csv = path_to_csv(&path);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), PATH_HEADER);
        assert!(lines.next().unwrap().ends_with(",,,"));
        assert_eq!(csv.lines().count(), 12);
    }

    #[test]
    fn rejects_unknown_sidecar_fields() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.5, 1.0).unwrap();
        let path = simulate_path(&p, 1.0, 10, 1).unwrap();
        let mut v: serde_json::Value = serde_json::to_value(PathMeta::of(&path)).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<PathMeta>(v).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::new(1.0, -0.3, 1.0, 1.0, 1.5, 1.0).unwrap();
        let path = simulate_path(&p, 2.0, 500, 3).unwrap();
        let file = dir.path().join("path.csv");
        write_path(&path, &file).unwrap();
        let back = read_path(&file).unwrap();
        assert_eq!(back.values, path.values);
        assert_eq!(back.jump_records, path.jump_records);
        assert!(!dir.path().join("path.csv.partial").exists());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn csv_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..200, b in -1.0f64..1.0) {
            let p = ModelParams::new(0.7, b, 0.9, 1.1, 1.6, 0.5).unwrap();
            let path = simulate_path(&p, 1.3, n, seed).unwrap();
            let meta = PathMeta::of(&path);
            let json = meta_to_json(&meta).unwrap();
            let meta2: PathMeta = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&meta2, &meta);
            let back = path_from_csv(&path_to_csv(&path), &meta2).unwrap();
            prop_assert_eq!(back, path);
        }
    }
}
