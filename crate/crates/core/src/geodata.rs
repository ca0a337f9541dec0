//! Fixed geographic cell grid with population and active-user weights.
//!
//! The grid is a regular lat/lon lattice over a bounding box, with centers on
//! both boundary lines inclusive and row-major ordering (north to south, then
//! west to east). Population can come from an ESRI ASCII raster, a
//! `lat,lon,population` CSV, or a seeded synthetic generator.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geo::{geodetic_unit, Vec3};

/// Bounding box and resolution of the cell lattice, in degrees.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min_deg: f64,
    pub lat_max_deg: f64,
    pub lon_min_deg: f64,
    pub lon_max_deg: f64,
    pub resolution_deg: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.lat_min_deg < self.lat_max_deg) {
            return Err(SimError::config("grid: lat_min must be < lat_max"));
        }
        if !(self.lon_min_deg < self.lon_max_deg) {
            return Err(SimError::config("grid: lon_min must be < lon_max"));
        }
        if !(self.resolution_deg > 0.0) {
            return Err(SimError::config("grid: resolution must be > 0"));
        }
        Ok(())
    }

    /// Number of center rows (latitude lines, both boundaries inclusive).
    pub fn rows(&self) -> usize {
        lattice_count(self.lat_min_deg, self.lat_max_deg, self.resolution_deg)
    }

    /// Number of center columns (longitude lines, both boundaries inclusive).
    pub fn cols(&self) -> usize {
        lattice_count(self.lon_min_deg, self.lon_max_deg, self.resolution_deg)
    }
}

fn lattice_count(min: f64, max: f64, step: f64) -> usize {
    ((max - min) / step + 1e-9).floor() as usize + 1
}

/// One grid cell with its geometry and user weights.
#[derive(Debug, Clone)]
pub struct Cell {
    pub cell_id: u32,
    pub center_lat_deg: f64,
    pub center_lon_deg: f64,
    /// Corner coordinates (lat, lon), order: NW, NE, SE, SW.
    pub corners: [(f64, f64); 4],
    /// Spherical cell area, for reporting.
    pub area_km2: f64,
    pub total_population: f64,
    pub active_fraction: f64,
    /// U_c = active_fraction * total_population. Kept real-valued.
    pub active_users: f64,
    /// Cached unit direction of the center (spherical Earth).
    pub center_unit: Vec3,
    /// Cached unit directions of the corners.
    pub corner_units: [Vec3; 4],
}

/// Regular cell lattice over a bounding box.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub spec: GridSpec,
    pub cells: Vec<Cell>,
    rows: usize,
    cols: usize,
    populated_ids: Vec<u32>,
}

/// Synthetic population models (deterministic given a seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SyntheticModel {
    /// Every cell gets the same population.
    Uniform { population_per_cell: f64 },
    /// Independent log-normal draw per cell, rounded to an integer.
    LogNormal { mu_log: f64, sigma_log: f64 },
    /// Sum of Gaussian bumps around `hotspots` well-separated centers.
    Clustered {
        hotspots: usize,
        amplitude: f64,
        width_cells: f64,
    },
}

impl CellGrid {
    /// Build the lattice without population.
    pub fn build(spec: GridSpec) -> Result<CellGrid, SimError> {
        spec.validate()?;
        let rows = spec.rows();
        let cols = spec.cols();
        let res = spec.resolution_deg;
        let half = res / 2.0;
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            // Row 0 is the northernmost line of centers.
            let lat = spec.lat_max_deg - r as f64 * res;
            for c in 0..cols {
                let lon = spec.lon_min_deg + c as f64 * res;
                let corners = [
                    (lat + half, lon - half),
                    (lat + half, lon + half),
                    (lat - half, lon + half),
                    (lat - half, lon - half),
                ];
                let cell_id = (r * cols + c) as u32;
                cells.push(Cell {
                    cell_id,
                    center_lat_deg: lat,
                    center_lon_deg: lon,
                    corners,
                    area_km2: spherical_area_km2(lat - half, lat + half, res),
                    total_population: 0.0,
                    active_fraction: 0.0,
                    active_users: 0.0,
                    center_unit: geodetic_unit(lat, lon),
                    corner_units: corners.map(|(la, lo)| geodetic_unit(la, lo)),
                });
            }
        }
        Ok(CellGrid {
            spec,
            cells,
            rows,
            cols,
            populated_ids: Vec::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, cell_id: u32) -> &Cell {
        &self.cells[cell_id as usize]
    }

    /// (row, col) of a cell id; inverse of `cell_id = row * cols + col`.
    pub fn row_col(&self, cell_id: u32) -> (usize, usize) {
        let id = cell_id as usize;
        (id / self.cols, id % self.cols)
    }

    /// Ids of cells with active_users > 0, ascending.
    pub fn populated_ids(&self) -> &[u32] {
        &self.populated_ids
    }

    pub fn total_active_users(&self) -> f64 {
        self.populated_ids
            .iter()
            .map(|&id| self.cells[id as usize].active_users)
            .sum()
    }

    pub fn total_population(&self) -> f64 {
        self.cells.iter().map(|c| c.total_population).sum()
    }

    /// Set a scalar active-user fraction and recompute U_c and the populated set.
    pub fn set_active_fraction(&mut self, alpha: f64) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(SimError::config("active fraction must be in [0, 1]"));
        }
        for cell in &mut self.cells {
            cell.active_fraction = alpha;
            cell.active_users = alpha * cell.total_population;
        }
        self.refresh_populated();
        Ok(())
    }

    fn refresh_populated(&mut self) {
        self.populated_ids = self
            .cells
            .iter()
            .filter(|c| c.active_users > 0.0)
            .map(|c| c.cell_id)
            .collect();
    }

    fn set_populations(&mut self, pops: Vec<f64>) {
        for (cell, pop) in self.cells.iter_mut().zip(pops) {
            cell.total_population = pop;
            cell.active_users = cell.active_fraction * pop;
        }
        self.refresh_populated();
    }

    /// Fill total_population from an ESRI ASCII raster by nearest-neighbor
    /// lookup at the cell centers. NODATA maps to 0; a center outside the
    /// raster extent is a bounds error.
    pub fn load_population_raster(&mut self, path: &Path) -> Result<(), SimError> {
        let file = std::fs::File::open(path)?;
        let raster = EsriAsciiGrid::parse(BufReader::new(file))?;
        self.load_population_from(&raster)
    }

    pub fn load_population_from(&mut self, raster: &EsriAsciiGrid) -> Result<(), SimError> {
        let mut pops = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            let v = raster.sample(cell.center_lat_deg, cell.center_lon_deg)?;
            pops.push(v.max(0.0));
        }
        self.set_populations(pops);
        Ok(())
    }

    /// Fill total_population from `lat,lon,population` CSV rows. Each row is
    /// accumulated onto the nearest cell center; rows outside the grid are
    /// ignored. An optional `lat,lon,population` header line is accepted.
    pub fn load_population_csv<R: Read>(&mut self, reader: R) -> Result<(), SimError> {
        let mut pops = vec![0.0; self.cells.len()];
        let buf = BufReader::new(reader);
        for (lineno, line) in buf.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(|f| f.trim()).collect();
            if lineno == 0 && fields.first().map(|f| f.eq_ignore_ascii_case("lat")) == Some(true) {
                continue;
            }
            if fields.len() != 3 {
                return Err(SimError::ingestion(
                    format!("csv line {}", lineno + 1),
                    "expected 3 fields: lat,lon,population",
                ));
            }
            let parse = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|_| {
                    SimError::ingestion(
                        format!("csv line {}", lineno + 1),
                        format!("invalid {what}: {s:?}"),
                    )
                })
            };
            let lat = parse(fields[0], "lat")?;
            let lon = parse(fields[1], "lon")?;
            let pop = parse(fields[2], "population")?;
            if pop < 0.0 {
                return Err(SimError::ingestion(
                    format!("csv line {}", lineno + 1),
                    "negative population",
                ));
            }
            if let Some(id) = self.nearest_cell(lat, lon) {
                pops[id as usize] += pop;
            }
        }
        self.set_populations(pops);
        Ok(())
    }

    /// Nearest cell center to a point, or None outside the grid box
    /// (half a cell of slack around the boundary centers).
    pub fn nearest_cell(&self, lat_deg: f64, lon_deg: f64) -> Option<u32> {
        let res = self.spec.resolution_deg;
        let row = ((self.spec.lat_max_deg - lat_deg) / res).round();
        let col = ((lon_deg - self.spec.lon_min_deg) / res).round();
        if row < 0.0 || col < 0.0 || row as usize >= self.rows || col as usize >= self.cols {
            return None;
        }
        Some((row as usize * self.cols + col as usize) as u32)
    }

    /// Deterministic synthetic population.
    pub fn synthesize_population(&mut self, seed: u64, model: &SyntheticModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.cells.len();
        let pops = match model {
            SyntheticModel::Uniform { population_per_cell } => {
                vec![population_per_cell.max(0.0).round(); n]
            }
            SyntheticModel::LogNormal { mu_log, sigma_log } => {
                let dist = LogNormal::new(*mu_log, *sigma_log).expect("log-normal params");
                (0..n).map(|_| dist.sample(&mut rng).round()).collect()
            }
            SyntheticModel::Clustered {
                hotspots,
                amplitude,
                width_cells,
            } => self.clustered_population(&mut rng, *hotspots, *amplitude, *width_cells),
        };
        self.set_populations(pops);
    }

    fn clustered_population(
        &self,
        rng: &mut ChaCha8Rng,
        hotspots: usize,
        amplitude: f64,
        width_cells: f64,
    ) -> Vec<f64> {
        // Hotspot centers kept at least 4 widths apart so each one remains a
        // strict local maximum of the summed field.
        let min_sep = 4.0 * width_cells;
        let mut centers: Vec<(f64, f64)> = Vec::new();
        let mut guard = 0;
        while centers.len() < hotspots && guard < 10_000 {
            guard += 1;
            let r = rng.gen_range(0..self.rows) as f64;
            let c = rng.gen_range(0..self.cols) as f64;
            if centers
                .iter()
                .all(|&(cr, cc)| ((r - cr).powi(2) + (c - cc).powi(2)).sqrt() >= min_sep)
            {
                centers.push((r, c));
            }
        }
        let mut pops = vec![0.0; self.cells.len()];
        for (idx, pop) in pops.iter_mut().enumerate() {
            let r = (idx / self.cols) as f64;
            let c = (idx % self.cols) as f64;
            let mut v = 0.0;
            for &(cr, cc) in &centers {
                let d2 = (r - cr).powi(2) + (c - cc).powi(2);
                v += amplitude * (-d2 / (2.0 * width_cells * width_cells)).exp();
            }
            *pop = v.round();
        }
        pops
    }
}

fn spherical_area_km2(lat_bot_deg: f64, lat_top_deg: f64, dlon_deg: f64) -> f64 {
    let r_km = crate::geo::EARTH_RADIUS_M / 1000.0;
    let dlon = dlon_deg.to_radians();
    r_km * r_km * dlon * (lat_top_deg.to_radians().sin() - lat_bot_deg.to_radians().sin())
}

/// In-memory ESRI ASCII grid (`ncols/nrows/xllcorner/yllcorner/cellsize/
/// NODATA_value` header, northernmost row first).
#[derive(Debug, Clone)]
pub struct EsriAsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major, row 0 = northernmost.
    pub values: Vec<f64>,
}

impl EsriAsciiGrid {
    pub fn parse<R: BufRead>(reader: R) -> Result<EsriAsciiGrid, SimError> {
        let mut ncols = None;
        let mut nrows = None;
        let mut xll = None;
        let mut yll = None;
        let mut cellsize = None;
        let mut nodata = -9999.0;
        let mut values: Vec<f64> = Vec::new();
        let mut header_done = false;

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let first = parts.next().unwrap();
            if !header_done && first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let key = first.to_ascii_lowercase();
                let val: f64 = parts
                    .next()
                    .ok_or_else(|| {
                        SimError::ingestion(
                            format!("raster header line {}", lineno + 1),
                            format!("missing value for {key}"),
                        )
                    })?
                    .parse()
                    .map_err(|_| {
                        SimError::ingestion(
                            format!("raster header line {}", lineno + 1),
                            format!("invalid value for {key}"),
                        )
                    })?;
                match key.as_str() {
                    "ncols" => ncols = Some(val as usize),
                    "nrows" => nrows = Some(val as usize),
                    "xllcorner" => xll = Some(val),
                    "yllcorner" => yll = Some(val),
                    "cellsize" => cellsize = Some(val),
                    "nodata_value" => nodata = val,
                    other => {
                        return Err(SimError::ingestion(
                            format!("raster header line {}", lineno + 1),
                            format!("unsupported header key {other:?}"),
                        ))
                    }
                }
                continue;
            }
            header_done = true;
            for tok in trimmed.split_whitespace() {
                values.push(tok.parse().map_err(|_| {
                    SimError::ingestion(
                        format!("raster data line {}", lineno + 1),
                        format!("invalid number {tok:?}"),
                    )
                })?);
            }
        }

        let (ncols, nrows, xllcorner, yllcorner, cellsize) =
            match (ncols, nrows, xll, yll, cellsize) {
                (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
                _ => {
                    return Err(SimError::ingestion(
                        "raster header",
                        "missing one of ncols/nrows/xllcorner/yllcorner/cellsize",
                    ))
                }
            };
        if cellsize <= 0.0 {
            return Err(SimError::ingestion("raster header", "cellsize must be > 0"));
        }
        if values.len() != ncols * nrows {
            return Err(SimError::ingestion(
                "raster data",
                format!("expected {} values, found {}", ncols * nrows, values.len()),
            ));
        }
        Ok(EsriAsciiGrid {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata,
            values,
        })
    }

    /// Nearest-neighbor sample; NODATA maps to 0, outside the extent errors.
    pub fn sample(&self, lat_deg: f64, lon_deg: f64) -> Result<f64, SimError> {
        let col = ((lon_deg - self.xllcorner) / self.cellsize).floor();
        let row_from_bottom = ((lat_deg - self.yllcorner) / self.cellsize).floor();
        if col < 0.0
            || row_from_bottom < 0.0
            || col as usize >= self.ncols
            || row_from_bottom as usize >= self.nrows
        {
            return Err(SimError::ingestion(
                format!("raster row {row_from_bottom}, col {col}"),
                format!("point ({lat_deg}, {lon_deg}) outside raster extent"),
            ));
        }
        let row = self.nrows - 1 - row_from_bottom as usize;
        let v = self.values[row * self.ncols + col as usize];
        if v == self.nodata {
            Ok(0.0)
        } else {
            Ok(v)
        }
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.xllcorner);
        let _ = writeln!(out, "yllcorner {}", self.yllcorner);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for r in 0..self.nrows {
            let row = &self.values[r * self.ncols..(r + 1) * self.ncols];
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}
