//! Walker-delta constellation: construction, circular-orbit propagation, and
//! satellite-to-cell visibility on a spherical Earth.
//!
//! Positions are Earth-fixed (ECEF): the inertial circular-orbit position is
//! rotated by `-earth_rotation_rate * t` about the polar axis. Geometry is
//! only ever evaluated at slot edges.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geo::{self, Vec3};
use crate::geodata::{Cell, CellGrid};

/// Constellation shell parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConstellationConfig {
    /// Total number of satellites S.
    pub total_satellites: u32,
    /// Number of orbital planes P (must divide S).
    pub orbital_planes: u32,
    /// Shell altitude above the spherical Earth (m).
    pub altitude_m: f64,
    /// Inclination (deg).
    pub inclination_deg: f64,
    /// True-anomaly offset between satellites in adjacent planes (deg).
    pub inter_plane_phasing_deg: f64,
    pub earth_radius_m: f64,
    pub gravitational_parameter: f64,
    pub earth_rotation_rate: f64,
}

impl ConstellationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.total_satellites == 0 || self.orbital_planes == 0 {
            return Err(SimError::config("constellation: S and P must be positive"));
        }
        if self.total_satellites % self.orbital_planes != 0 {
            return Err(SimError::config(format!(
                "constellation: {} satellites not divisible by {} planes",
                self.total_satellites, self.orbital_planes
            )));
        }
        if !(self.altitude_m > 0.0) {
            return Err(SimError::config("constellation: altitude must be > 0"));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(SimError::config("constellation: inclination must be in [0, 180]"));
        }
        if !(self.earth_radius_m > 0.0) || !(self.gravitational_parameter > 0.0) {
            return Err(SimError::config("constellation: earth model must be positive"));
        }
        Ok(())
    }

    pub fn satellites_per_plane(&self) -> u32 {
        self.total_satellites / self.orbital_planes
    }

    /// Circular orbit radius a = R + h (m).
    pub fn orbit_radius_m(&self) -> f64 {
        self.earth_radius_m + self.altitude_m
    }

    /// Orbital period 2*pi*sqrt(a^3 / mu) (s).
    pub fn orbital_period_s(&self) -> f64 {
        let a = self.orbit_radius_m();
        2.0 * std::f64::consts::PI * (a * a * a / self.gravitational_parameter).sqrt()
    }
}

/// Identifier of one satellite in the shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SatelliteId {
    pub plane_index: u32,
    pub in_plane_index: u32,
    pub flat_id: u32,
}

/// Circular-orbit elements of one satellite at epoch t = 0.
#[derive(Debug, Clone, Copy)]
pub struct OrbitalElements {
    pub id: SatelliteId,
    /// Right ascension of the ascending node (rad).
    pub raan_rad: f64,
    /// Argument of latitude at t = 0 (rad); doubles as the anomaly for a
    /// circular orbit.
    pub initial_anomaly_rad: f64,
}

/// A built constellation ready for propagation.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub cfg: ConstellationConfig,
    pub elements: Vec<OrbitalElements>,
    mean_motion_rad_s: f64,
    inclination_rad: f64,
}

/// Earth-fixed positions of every satellite at one slot edge.
#[derive(Debug, Clone)]
pub struct GeometrySnapshot {
    pub slot_index: usize,
    pub epoch_time_s: f64,
    pub positions: Vec<Vec3>,
}

/// Which quantifier the visible-set computation applies over cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityRule {
    /// In range if elevation >= mask at at least one cell center.
    AnyCell,
    /// In range if elevation >= mask at every populated cell center, i.e. the
    /// satellite can serve the whole region.
    AllCells,
}

/// Build initial orbital elements: plane p at RAAN 360*p/P, satellite m in
/// plane p at anomaly 360*m/(S/P) + p*delta_theta, all circular at R + h.
pub fn build_constellation(cfg: ConstellationConfig) -> Result<Constellation, SimError> {
    cfg.validate()?;
    let per_plane = cfg.satellites_per_plane();
    let planes = cfg.orbital_planes;
    let mut elements = Vec::with_capacity(cfg.total_satellites as usize);
    for p in 0..planes {
        let raan = 2.0 * std::f64::consts::PI * p as f64 / planes as f64;
        for m in 0..per_plane {
            let anomaly_deg =
                360.0 * m as f64 / per_plane as f64 + p as f64 * cfg.inter_plane_phasing_deg;
            elements.push(OrbitalElements {
                id: SatelliteId {
                    plane_index: p,
                    in_plane_index: m,
                    flat_id: p * per_plane + m,
                },
                raan_rad: raan,
                initial_anomaly_rad: anomaly_deg.to_radians(),
            });
        }
    }
    let a = cfg.orbit_radius_m();
    let mean_motion = (cfg.gravitational_parameter / (a * a * a)).sqrt();
    Ok(Constellation {
        inclination_rad: cfg.inclination_deg.to_radians(),
        mean_motion_rad_s: mean_motion,
        cfg,
        elements,
    })
}

impl Constellation {
    pub fn mean_motion_rad_s(&self) -> f64 {
        self.mean_motion_rad_s
    }

    /// Earth-fixed position of one satellite at time t (s after epoch).
    pub fn position_at(&self, el: &OrbitalElements, t: f64) -> Vec3 {
        let a = self.cfg.orbit_radius_m();
        let u = el.initial_anomaly_rad + self.mean_motion_rad_s * t;
        let (sin_u, cos_u) = u.sin_cos();
        let (sin_o, cos_o) = el.raan_rad.sin_cos();
        let (sin_i, cos_i) = self.inclination_rad.sin_cos();
        // Inertial position of a circular orbit.
        let xi = a * (cos_u * cos_o - sin_u * sin_o * cos_i);
        let yi = a * (cos_u * sin_o + sin_u * cos_o * cos_i);
        let zi = a * (sin_u * sin_i);
        // Rotate into the Earth-fixed frame: Rz(-w*t).
        let theta = self.cfg.earth_rotation_rate * t;
        let (sin_t, cos_t) = theta.sin_cos();
        Vec3::new(cos_t * xi + sin_t * yi, -sin_t * xi + cos_t * yi, zi)
    }

    /// Snapshot of all satellite positions at time t.
    pub fn propagate(&self, slot_index: usize, t: f64) -> GeometrySnapshot {
        let positions = self
            .elements
            .iter()
            .map(|el| self.position_at(el, t))
            .collect();
        GeometrySnapshot {
            slot_index,
            epoch_time_s: t,
            positions,
        }
    }
}

/// Elevation (deg) of a satellite above the local horizon of a geodetic
/// ground point on the spherical Earth. Errors if the satellite is below the
/// Earth surface.
pub fn elevation_angle(
    sat_position: Vec3,
    ground_lat_deg: f64,
    ground_lon_deg: f64,
    earth_radius_m: f64,
) -> Result<f64, SimError> {
    if sat_position.norm() < earth_radius_m {
        return Err(SimError::domain(format!(
            "satellite radius {:.1} m is below the Earth surface",
            sat_position.norm()
        )));
    }
    let ground_unit = geo::geodetic_unit(ground_lat_deg, ground_lon_deg);
    Ok(elevation_deg(sat_position, ground_unit, earth_radius_m))
}

/// Elevation (deg) given the cached ground-point unit vector.
fn elevation_deg(sat_position: Vec3, ground_unit: Vec3, earth_radius_m: f64) -> f64 {
    sin_elevation(sat_position, ground_unit, earth_radius_m)
        .asin()
        .to_degrees()
}

/// sin(elevation); monotone in elevation over [-90, 90], so mask comparisons
/// can run on sines without the asin.
fn sin_elevation(sat_position: Vec3, ground_unit: Vec3, earth_radius_m: f64) -> f64 {
    let ground = ground_unit * earth_radius_m;
    let los = sat_position - ground;
    let dist = los.norm();
    if dist < 1e-9 {
        return 1.0; // satellite exactly at the ground point: treat as zenith
    }
    (los.dot(ground_unit) / dist).clamp(-1.0, 1.0)
}

/// Satellites with elevation >= mask at at least one cell center,
/// ordered by flat id.
pub fn visible_satellites(
    snapshot: &GeometrySnapshot,
    constellation: &Constellation,
    grid: &CellGrid,
    elevation_mask_deg: f64,
) -> Vec<SatelliteId> {
    visible_set(
        snapshot,
        constellation,
        grid,
        elevation_mask_deg,
        VisibilityRule::AnyCell,
    )
}

/// Visible set under the given rule, ordered by flat id. `AllCells`
/// quantifies over populated cell centers only (a satellite must be able to
/// serve every cell that carries users).
pub fn visible_set(
    snapshot: &GeometrySnapshot,
    constellation: &Constellation,
    grid: &CellGrid,
    elevation_mask_deg: f64,
    rule: VisibilityRule,
) -> Vec<SatelliteId> {
    let cells: Vec<&Cell> = match rule {
        VisibilityRule::AnyCell => grid.cells.iter().collect(),
        VisibilityRule::AllCells => {
            if grid.populated_ids().is_empty() {
                grid.cells.iter().collect()
            } else {
                grid.populated_ids().iter().map(|&id| grid.cell(id)).collect()
            }
        }
    };
    if cells.is_empty() {
        return Vec::new();
    }
    let radius = constellation.cfg.earth_radius_m;
    let sin_mask = elevation_mask_deg.to_radians().sin();

    // Bounding cap of the cell centers, for a cheap per-satellite prefilter.
    let mut centroid = Vec3::default();
    for c in &cells {
        centroid = centroid + c.center_unit;
    }
    let centroid = if centroid.norm() > 1e-12 {
        centroid.normalized()
    } else {
        cells[0].center_unit
    };
    let cap_radius_rad = cells
        .iter()
        .map(|c| centroid.angle_to(c.center_unit))
        .fold(0.0f64, f64::max);

    let mask_rad = elevation_mask_deg.to_radians().clamp(
        -std::f64::consts::FRAC_PI_2,
        std::f64::consts::FRAC_PI_2,
    );

    let mut out = Vec::new();
    for el in &constellation.elements {
        let pos = snapshot.positions[el.id.flat_id as usize];
        let r_sat = pos.norm();
        if r_sat < radius {
            continue;
        }
        // Largest central angle at which the mask can still be met.
        let cos_arg = (radius * mask_rad.cos() / r_sat).clamp(-1.0, 1.0);
        let psi_max = cos_arg.acos() - mask_rad;
        // Necessary condition for either rule: some cell center within psi_max.
        if pos.angle_to(centroid) > psi_max + cap_radius_rad + 1e-9 {
            continue;
        }
        let visible = match rule {
            VisibilityRule::AnyCell => cells
                .iter()
                .any(|c| sin_elevation(pos, c.center_unit, radius) >= sin_mask),
            VisibilityRule::AllCells => cells
                .iter()
                .all(|c| sin_elevation(pos, c.center_unit, radius) >= sin_mask),
        };
        if visible {
            out.push(el.id);
        }
    }
    out
}

/// Worst-case distance (m) from a satellite to a cell: max over the cell's
/// four corners and its center.
pub fn max_distance_to_cell(sat_position: Vec3, cell: &Cell, earth_radius_m: f64) -> f64 {
    let mut d = sat_position.distance(cell.center_unit * earth_radius_m);
    for corner in &cell.corner_units {
        d = d.max(sat_position.distance(*corner * earth_radius_m));
    }
    d
}
