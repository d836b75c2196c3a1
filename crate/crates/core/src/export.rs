//! On-disk artifacts: zone masks and per-state uncertainty as CSV, models
//! as JSON, optional PGM heatmaps. Every file is written to a temporary
//! sibling first and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeeError};
use crate::model::{ModelSnapshot, UncertainModel};
use crate::system::DiscreteSystem;
use crate::zone::{FeasibleZone, HorizonField};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";
pub const ZONE_FILE: &str = "zone.csv";
pub const UD_FILE: &str = "ud_state.csv";
pub const MODEL_FILE: &str = "model.json";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const BASELINE_DIR: &str = "baseline";

pub fn iter_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("iter_{k}"))
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SeeError::io(dir, e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()
    };
    write().map_err(|e| SeeError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| SeeError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SeeError::MissingSnapshot(path.to_path_buf()),
        _ => SeeError::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| SeeError::MalformedSnapshot {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn action_header(u: &[i32]) -> String {
    let parts: Vec<String> = u.iter().map(i32::to_string).collect();
    format!("u={}", parts.join(";"))
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| SeeError::Shape(format!("csv: {e}"));
    w.write_record(&header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| SeeError::Shape(format!("csv: {e}")))
}

fn coords(x: &[i32]) -> Vec<String> {
    x.iter().map(i32::to_string).collect()
}

/// One row per state: its coordinates, then a 0/1 column per action.
pub fn zone_csv(zone: &FeasibleZone, system: &DiscreteSystem) -> Result<Vec<u8>> {
    let mut header = system.state_labels();
    header.extend(system.actions().iter().map(|u| action_header(u)));
    let na = system.num_actions();
    let rows = system.states().iter().enumerate().map(|(s, x)| {
        let mut row = coords(x);
        row.extend((0..na).map(|a| if zone.contains(s * na + a) { "1" } else { "0" }.to_string()));
        row
    });
    csv_bytes(header, rows)
}

/// Reads a mask written by [`zone_csv`], checking it against the system.
pub fn read_zone_csv(path: &Path, system: &DiscreteSystem) -> Result<FeasibleZone> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SeeError::MissingSnapshot(path.to_path_buf()),
        _ => SeeError::io(path, e),
    })?;
    let bad = |msg: String| SeeError::MalformedSnapshot {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let dims = system.state_dims();
    let na = system.num_actions();
    let mut mask = vec![false; system.num_pairs()];
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != dims + na {
            return Err(bad(format!("row {} has {} fields, expected {}", rows + 1, rec.len(), dims + na)));
        }
        let x: Vec<i32> = rec
            .iter()
            .take(dims)
            .map(|f| f.parse().map_err(|_| bad(format!("bad coordinate {f:?}"))))
            .collect::<Result<_>>()?;
        let s = system.state_pos(&x).ok_or_else(|| bad(format!("unknown state {x:?}")))?;
        for (a, f) in rec.iter().skip(dims).enumerate() {
            mask[s * na + a] = match f {
                "0" => false,
                "1" => true,
                _ => return Err(bad(format!("bad mask value {f:?}"))),
            };
        }
        rows += 1;
    }
    if rows != system.num_states() {
        return Err(bad(format!("{rows} rows, expected {}", system.num_states())));
    }
    Ok(FeasibleZone::from_mask(mask, na))
}

/// Per-state sum of `|set| - 1` over actions.
pub fn ud_state_csv(model: &UncertainModel, system: &DiscreteSystem) -> Result<Vec<u8>> {
    let mut header = system.state_labels();
    header.push("ud".into());
    let rows = system.states().iter().enumerate().map(|(s, x)| {
        let mut row = coords(x);
        row.push(model.state_ud(s).to_string());
        row
    });
    csv_bytes(header, rows)
}

/// Horizon per pair, `inf` for the zone.
pub fn horizon_csv(field: &HorizonField, system: &DiscreteSystem) -> Result<Vec<u8>> {
    let mut header = system.state_labels();
    header.extend(system.actions().iter().map(|u| action_header(u)));
    let na = system.num_actions();
    let rows = system.states().iter().enumerate().map(|(s, x)| {
        let mut row = coords(x);
        row.extend((0..na).map(|a| field.get(s * na + a).map_or("inf".to_string(), |v| v.to_string())));
        row
    });
    csv_bytes(header, rows)
}

pub fn model_json(model: &UncertainModel, system: &DiscreteSystem) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec(&model.to_snapshot(system))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn read_model(path: &Path, system: &DiscreteSystem) -> Result<UncertainModel> {
    let snap: ModelSnapshot = read_json(path)?;
    UncertainModel::from_snapshot(&snap, system)
}

/// Binary graymap, row-major from the top row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// How state values map onto the image plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapScale {
    pub width: usize,
    pub height: usize,
    /// Axis along image columns, left to right.
    pub x_axis: String,
    /// Axis along image rows, largest index at the top.
    pub y_axis: String,
    /// Fixed index of every further axis.
    pub slice: Vec<(String, i32)>,
    /// Value shown as 0.
    pub min: f64,
    /// Value shown as 255.
    pub max: f64,
}

/// Maps the first two state axes onto a plane; further axes are fixed at
/// index 0 (or their lowest index if 0 is out of range). `None` for
/// systems without a grid.
fn plane(system: &DiscreteSystem) -> Option<(usize, usize, Vec<Option<usize>>, Vec<(String, i32)>)> {
    let grid = system.grid()?;
    let axes = &grid.state;
    let width = axes[0].range.len();
    let height = axes.get(1).map_or(1, |a| a.range.len());
    let slice: Vec<(String, i32)> = axes
        .iter()
        .skip(2)
        .map(|a| {
            let v = if a.range.contains(0) { 0 } else { a.range.lo };
            (a.label.clone(), v)
        })
        .collect();
    let mut cells = vec![None; width * height];
    for (s, x) in system.states().iter().enumerate() {
        if x.iter().skip(2).zip(&slice).any(|(&v, (_, want))| v != *want) {
            continue;
        }
        let col = (x[0] - axes[0].range.lo) as usize;
        let row = match axes.get(1) {
            Some(a) => (a.range.hi - x[1]) as usize,
            None => 0,
        };
        cells[row * width + col] = Some(s);
    }
    Some((width, height, cells, slice))
}

/// Linear heatmap of per-state values with its scale.
pub fn state_heatmap(system: &DiscreteSystem, values: &[f64]) -> Option<(Pgm, HeatmapScale)> {
    let (width, height, cells, slice) = plane(system)?;
    let shown: Vec<f64> = cells.iter().flatten().map(|&s| values[s]).collect();
    let min = shown.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let max = shown.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(min);
    let span = max - min;
    let pixels = cells
        .iter()
        .map(|c| match c {
            Some(s) if span > 0.0 => ((values[*s] - min) / span * 255.0).round() as u8,
            _ => 0,
        })
        .collect();
    let axes = &system.grid()?.state;
    Some((
        Pgm { width, height, pixels },
        HeatmapScale {
            width,
            height,
            x_axis: axes[0].label.clone(),
            y_axis: axes.get(1).map_or_else(String::new, |a| a.label.clone()),
            slice,
            min,
            max,
        },
    ))
}

/// Region states at 128, region states next to a non-region state at 255.
pub fn region_overlay(system: &DiscreteSystem, zone: &FeasibleZone) -> Option<Pgm> {
    let (width, height, cells, _) = plane(system)?;
    let inside = |r: isize, c: isize| -> bool {
        if r < 0 || c < 0 || r >= height as isize || c >= width as isize {
            return false;
        }
        cells[r as usize * width + c as usize].is_some_and(|s| zone.state_in_region(s))
    };
    let mut pixels = vec![0u8; width * height];
    for r in 0..height as isize {
        for c in 0..width as isize {
            if !inside(r, c) {
                continue;
            }
            let edge = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|(dr, dc)| !inside(r + dr, c + dc));
            pixels[r as usize * width + c as usize] = if edge { 255 } else { 128 };
        }
    }
    Some(Pgm { width, height, pixels })
}

/// Writes the UD heatmap, its sidecar and the region overlay into `dir`.
pub fn write_pgms(dir: &Path, system: &DiscreteSystem, model: &UncertainModel, zone: &FeasibleZone) -> Result<()> {
    let ud: Vec<f64> = (0..system.num_states()).map(|s| model.state_ud(s) as f64).collect();
    if let Some((pgm, scale)) = state_heatmap(system, &ud) {
        write_atomic(&dir.join("ud_state.pgm"), &pgm.to_bytes())?;
        write_json(&dir.join("ud_state.scale.json"), &scale)?;
    }
    if let Some(pgm) = region_overlay(system, zone) {
        write_atomic(&dir.join("region.pgm"), &pgm.to_bytes())?;
    }
    Ok(())
}

/// Rewrites the derived files of every stored iteration from its zone and
/// model snapshots. Returns the iteration indices processed.
pub fn rerender(out: &Path, system: &DiscreteSystem, pgm: bool) -> Result<Vec<usize>> {
    let mut done = Vec::new();
    for k in 1.. {
        let dir = iter_dir(out, k);
        if !dir.is_dir() {
            break;
        }
        let zone = read_zone_csv(&dir.join(ZONE_FILE), system)?;
        let model = read_model(&dir.join(MODEL_FILE), system)?;
        write_atomic(&dir.join(ZONE_FILE), &zone_csv(&zone, system)?)?;
        write_atomic(&dir.join(UD_FILE), &ud_state_csv(&model, system)?)?;
        if pgm {
            write_pgms(&dir, system, &model, &zone)?;
        }
        done.push(k);
    }
    if done.is_empty() {
        return Err(SeeError::MissingSnapshot(iter_dir(out, 1)));
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::PendulumParams;
    use crate::zone::true_model_baseline;

    #[test]
    fn zone_csv_round_trip() {
        let sys = DiscreteSystem::double_integrator();
        let base = true_model_baseline(&sys);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zone.csv");
        write_atomic(&path, &zone_csv(&base, &sys).unwrap()).unwrap();
        assert_eq!(read_zone_csv(&path, &sys).unwrap(), base);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 1271);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 2 + 5);
    }

    #[test]
    fn empty_zone_is_all_zeros() {
        let sys = DiscreteSystem::double_integrator();
        let text = String::from_utf8(zone_csv(&FeasibleZone::empty(&sys), &sys).unwrap()).unwrap();
        for line in text.lines().skip(1) {
            assert!(line.split(',').skip(2).all(|f| f == "0"));
        }
    }

    #[test]
    fn pendulum_heatmap_dims() {
        let sys = DiscreteSystem::pendulum(PendulumParams::default());
        let (pgm, scale) = state_heatmap(&sys, &vec![1.0; sys.num_states()]).unwrap();
        assert_eq!((pgm.width, pgm.height), (21, 21));
        assert_eq!((scale.width, scale.height), (21, 21));
        let bytes = pgm.to_bytes();
        assert!(bytes.starts_with(b"P5\n21 21\n255\n"));
        assert_eq!(bytes.len(), "P5\n21 21\n255\n".len() + 441);
    }

    #[test]
    fn heatmap_scale_is_linear() {
        let sys = DiscreteSystem::pendulum(PendulumParams::default());
        let values: Vec<f64> = (0..sys.num_states()).map(|s| (s % 3) as f64).collect();
        let (pgm, scale) = state_heatmap(&sys, &values).unwrap();
        assert_eq!((scale.min, scale.max), (0.0, 2.0));
        assert!(pgm.pixels.iter().all(|&p| p == 0 || p == 128 || p == 255));
    }

    #[test]
    fn missing_snapshot_is_reported() {
        let sys = DiscreteSystem::double_integrator();
        let dir = tempfile::tempdir().unwrap();
        let err = read_model(&dir.path().join("model.json"), &sys).unwrap_err();
        assert!(matches!(err, SeeError::MissingSnapshot(_)));
    }
}
