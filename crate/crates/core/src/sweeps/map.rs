//! Position maps of F_p^wg, F_p^rad and β over one unit cell of the
//! waveguide.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emission::{purcell_wg, EmissionReport};
use crate::error::{Error, Result};
use crate::io::{color_pixmap, csv_bytes, sci, ColorScale};
use crate::pwe::Orientation;
use crate::sweeps::study::WaveguideStudy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    FpWg,
    FpRad,
    Beta,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::FpWg => "fp_wg",
            Quantity::FpRad => "fp_rad",
            Quantity::Beta => "beta",
        }
    }

    /// F_p^wg comes from the eigenmode alone.
    pub fn needs_solve(self) -> bool {
        self != Quantity::FpWg
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp_wg" => Ok(Quantity::FpWg),
            "fp_rad" => Ok(Quantity::FpRad),
            "beta" => Ok(Quantity::Beta),
            other => Err(Error::Config(format!("unknown map quantity '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSpec {
    pub quantity: Quantity,
    pub orientations: Vec<Orientation>,
    pub ng_targets: Vec<f64>,
    /// Samples along x ∈ [0, a] and y ∈ [−√3a, √3a].
    pub grid: (usize, usize),
    pub contour_levels: Vec<f64>,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self {
            quantity: Quantity::Beta,
            orientations: vec![Orientation::X, Orientation::Y],
            ng_targets: vec![5.0, 20.0, 58.0, 120.0],
            grid: (16, 28),
            contour_levels: vec![0.8, 0.96],
        }
    }
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::Config(format!("empty map grid {:?}", self.grid)));
        }
        if self.orientations.is_empty() || self.ng_targets.is_empty() {
            return Err(Error::Config("map needs at least one orientation and one n_g target".into()));
        }
        Ok(())
    }

    /// Cell centres `(ix, iy, x, y)`, iy = 0 at the bottom.
    pub fn positions(&self) -> Vec<(usize, usize, f64, f64)> {
        let (nx, ny) = self.grid;
        let h = 3f64.sqrt();
        let mut out = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let x = (ix as f64 + 0.5) / nx as f64;
                let y = -h + 2.0 * h * (iy as f64 + 0.5) / ny as f64;
                out.push((ix, iy, x, y));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Inside a hole; no emitter there.
    Hole,
    Failed,
}

/// One map cell, persisted as one JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub n_g_target: f64,
    pub orientation: Orientation,
    pub ix: usize,
    pub iy: usize,
    pub x: f64,
    pub y: f64,
    pub status: CellStatus,
    pub fp_wg: Option<f64>,
    pub report: Option<EmissionReport>,
    pub error: Option<String>,
}

type CellKey = (u64, Orientation, usize, usize);

impl CellRecord {
    fn key(&self) -> CellKey {
        (self.n_g_target.to_bits(), self.orientation, self.ix, self.iy)
    }

    pub fn value(&self, q: Quantity) -> Option<f64> {
        match q {
            Quantity::FpWg => self.fp_wg,
            Quantity::FpRad => self.report.as_ref().map(|r| r.fp_rad),
            Quantity::Beta => self.report.as_ref().map(|r| r.beta),
        }
    }
}

/// Records persisted so far; a missing file is an empty record set.
pub fn load_records(path: &Path) -> Result<Vec<CellRecord>> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn last line from an interrupted run is recomputed
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            Err(_) => continue,
        }
    }
    Ok(out)
}

/// Appends records, one line each, flushing after every record.
pub struct RecordLog {
    file: Option<Mutex<std::fs::File>>,
}

impl RecordLog {
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?))
            }
            None => None,
        };
        Ok(Self { file })
    }

    pub fn append(&self, record: &CellRecord) -> Result<()> {
        if let Some(f) = &self.file {
            let mut line = serde_json::to_string(record)?;
            line.push('\n');
            let mut f = f.lock().unwrap_or_else(|e| e.into_inner());
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}

/// Every cell of the map at one operating point, skipping cells already in
/// `done`. Cells run on the current rayon pool.
pub fn map_operating_point(
    spec: &MapSpec,
    study: &WaveguideStudy,
    n_g_target: f64,
    done: &[CellRecord],
    log: &RecordLog,
) -> Result<Vec<CellRecord>> {
    let have: HashSet<CellKey> = done.iter().map(CellRecord::key).collect();
    let mut jobs = Vec::new();
    for &o in &spec.orientations {
        for (ix, iy, x, y) in spec.positions() {
            if !have.contains(&(n_g_target.to_bits(), o, ix, iy)) {
                jobs.push((o, ix, iy, x, y));
            }
        }
    }
    let fresh: Vec<Result<CellRecord>> = jobs
        .par_iter()
        .map(|&(o, ix, iy, x, y)| {
            let rec = map_cell(spec.quantity, study, n_g_target, o, ix, iy, (x, y));
            log.append(&rec)?;
            Ok(rec)
        })
        .collect();
    let mut out: Vec<CellRecord> = done
        .iter()
        .filter(|r| r.n_g_target.to_bits() == n_g_target.to_bits())
        .cloned()
        .collect();
    for r in fresh {
        out.push(r?);
    }
    out.sort_by_key(|r| (r.orientation == Orientation::Y, r.iy, r.ix));
    Ok(out)
}

fn map_cell(
    quantity: Quantity,
    study: &WaveguideStudy,
    n_g_target: f64,
    o: Orientation,
    ix: usize,
    iy: usize,
    r0: (f64, f64),
) -> CellRecord {
    let mut rec = CellRecord {
        n_g_target,
        orientation: o,
        ix,
        iy,
        x: r0.0,
        y: r0.1,
        status: CellStatus::Ok,
        fp_wg: None,
        report: None,
        error: None,
    };
    if !study.in_dielectric(r0) {
        rec.status = CellStatus::Hole;
        return rec;
    }
    rec.fp_wg = Some(purcell_wg(&study.point.primary, r0, o, study.p0));
    if quantity.needs_solve() {
        match study.emit(r0, o) {
            Ok(run) => rec.report = Some(run.report),
            Err(e) => {
                rec.status = CellStatus::Failed;
                rec.error = Some(e.to_string());
            }
        }
    }
    rec
}

pub const MAP_HEADER: [&str; 17] = [
    "n_g_target", "orientation", "ix", "iy", "x", "y", "status", "omega", "n_g", "fp_wg", "fp_rad",
    "fp_total", "beta", "beta_prime", "beta_guided", "p_rad", "p_total",
];

/// Long-format table, one row per record; missing values are empty.
pub fn map_csv(records: &[CellRecord]) -> Result<Vec<u8>> {
    let opt = |v: Option<f64>| v.map(sci).unwrap_or_default();
    let rows = records.iter().map(|r| {
        let rep = r.report.as_ref();
        vec![
            sci(r.n_g_target),
            orientation_str(r.orientation).into(),
            r.ix.to_string(),
            r.iy.to_string(),
            sci(r.x),
            sci(r.y),
            match r.status {
                CellStatus::Ok => "ok",
                CellStatus::Hole => "hole",
                CellStatus::Failed => "failed",
            }
            .into(),
            opt(rep.map(|p| p.omega)),
            opt(rep.map(|p| p.n_g)),
            opt(r.fp_wg),
            opt(rep.map(|p| p.fp_rad)),
            opt(rep.map(|p| p.fp_total)),
            opt(rep.map(|p| p.beta)),
            opt(rep.map(|p| p.beta_prime)),
            opt(rep.map(|p| p.beta_guided)),
            opt(rep.map(|p| p.p_rad)),
            opt(rep.map(|p| p.p_total)),
        ]
    });
    csv_bytes(&MAP_HEADER, rows)
}

pub fn orientation_str(o: Orientation) -> &'static str {
    match o {
        Orientation::X => "x",
        Orientation::Y => "y",
    }
}

/// Raster of one (n_g, orientation) slice with its top row at y = +√3a.
pub struct MapRaster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
}

pub fn raster(spec: &MapSpec, records: &[CellRecord], n_g_target: f64, o: Orientation) -> MapRaster {
    let (nx, ny) = spec.grid;
    let mut values = vec![None; nx * ny];
    for r in records {
        if r.n_g_target.to_bits() == n_g_target.to_bits() && r.orientation == o && r.ix < nx && r.iy < ny {
            values[(ny - 1 - r.iy) * nx + r.ix] = r.value(spec.quantity);
        }
    }
    MapRaster { width: nx, height: ny, values }
}

/// Colour scale of a raster: β on the nonlinear scale from 0 to 1,
/// Purcell factors linear over their range.
pub fn scale_for(quantity: Quantity, values: &[Option<f64>]) -> ColorScale {
    if quantity == Quantity::Beta {
        return ColorScale { min: 0.0, max: 1.0, nonlinear: true };
    }
    let finite = values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        ColorScale { min: lo, max: hi, nonlinear: false }
    } else {
        ColorScale { min: 0.0, max: 1.0, nonlinear: false }
    }
}

/// Sidecar written next to each raster.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleFile {
    pub quantity: Quantity,
    pub min: f64,
    pub max: f64,
    pub colormap: String,
    pub nonlinear: bool,
    pub contours: Vec<f64>,
}

const CONTOUR_COLORS: [[u8; 3]; 4] = [[0, 200, 0], [0, 80, 255], [255, 0, 0], [0, 0, 0]];
const ZOOM: usize = 8;

/// PPM bytes and the matching scale sidecar.
pub fn render(spec: &MapSpec, raster: &MapRaster) -> Result<(Vec<u8>, ScaleFile)> {
    let scale = scale_for(spec.quantity, &raster.values);
    let contours: Vec<(f64, [u8; 3])> = if spec.quantity == Quantity::Beta {
        spec.contour_levels
            .iter()
            .enumerate()
            .map(|(k, &l)| (l, CONTOUR_COLORS[k % CONTOUR_COLORS.len()]))
            .collect()
    } else {
        Vec::new()
    };
    let ppm = color_pixmap(raster.width, raster.height, &raster.values, &scale, ZOOM, &contours)?;
    let side = ScaleFile {
        quantity: spec.quantity,
        min: scale.min,
        max: scale.max,
        colormap: "viridis".into(),
        nonlinear: scale.nonlinear,
        contours: contours.iter().map(|c| c.0).collect(),
    };
    Ok((ppm, side))
}

/// Largest relative difference between mirror cells (x, y) and (x, −y).
pub fn mirror_asymmetry(spec: &MapSpec, raster: &MapRaster) -> f64 {
    let (nx, ny) = spec.grid;
    let mut worst: f64 = 0.0;
    for row in 0..ny / 2 {
        for ix in 0..nx {
            let a = raster.values[row * nx + ix];
            let b = raster.values[(ny - 1 - row) * nx + ix];
            if let (Some(a), Some(b)) = (a, b) {
                let scale = a.abs().max(b.abs());
                if scale > 0.0 {
                    worst = worst.max((a - b).abs() / scale);
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ng: f64, ix: usize, iy: usize, beta: Option<f64>) -> CellRecord {
        CellRecord {
            n_g_target: ng,
            orientation: Orientation::Y,
            ix,
            iy,
            x: 0.0,
            y: 0.0,
            status: if beta.is_some() { CellStatus::Ok } else { CellStatus::Hole },
            fp_wg: beta,
            report: None,
            error: None,
        }
    }

    #[test]
    fn positions_are_mirror_symmetric() {
        let spec = MapSpec::default();
        let p = spec.positions();
        assert_eq!(p.len(), 16 * 28);
        for &(ix, iy, x, y) in &p {
            let &(_, _, xm, ym) = p.iter().find(|q| q.0 == ix && q.1 == 27 - iy).unwrap();
            assert_eq!(x, xm);
            assert!((y + ym).abs() < 1e-12);
            assert!(x > 0.0 && x < 1.0 && y.abs() < 3f64.sqrt());
        }
    }

    #[test]
    fn records_round_trip_and_torn_lines_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.jsonl");
        let log = RecordLog::open(Some(&path)).unwrap();
        log.append(&record(58.0, 1, 2, Some(0.5))).unwrap();
        log.append(&record(58.0, 2, 2, None)).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"n_g_target\": 58.0, \"orient").unwrap();
        let back = load_records(&path).unwrap();
        assert_eq!(back, vec![record(58.0, 1, 2, Some(0.5)), record(58.0, 2, 2, None)]);
        assert!(load_records(&dir.path().join("none.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn raster_marks_missing_cells_and_flips_rows() {
        let spec = MapSpec {
            quantity: Quantity::FpWg,
            grid: (2, 2),
            ..MapSpec::default()
        };
        let recs = vec![record(5.0, 0, 0, Some(1.0)), record(5.0, 1, 1, None), record(20.0, 1, 0, Some(9.0))];
        let r = raster(&spec, &recs, 5.0, Orientation::Y);
        assert_eq!(r.values, vec![None, None, Some(1.0), None]);
        let (ppm, side) = render(&spec, &r).unwrap();
        assert!(ppm.starts_with(b"P6\n16 16 255\n"));
        assert!(!side.nonlinear);
        assert_eq!(mirror_asymmetry(&spec, &r), 0.0);
    }

    #[test]
    fn csv_leaves_missing_values_empty() {
        let b = map_csv(&[record(5.0, 0, 0, None)]).unwrap();
        let s = String::from_utf8(b).unwrap();
        let row = s.lines().nth(1).unwrap();
        assert!(row.contains(",hole,,,"));
        assert_eq!(row.split(',').count(), MAP_HEADER.len());
    }
}
