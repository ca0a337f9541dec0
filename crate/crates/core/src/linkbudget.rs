//! Link budget: worst-case attenuation, nominal Shannon rates, slot-edge
//! minimum rates, per-user throughput, and the handover penalty.
//!
//! All configured dB quantities are converted to linear once at load; the
//! internal math is linear-domain throughout.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geodata::CellGrid;
use crate::orbital::{max_distance_to_cell, GeometrySnapshot, SatelliteId};

/// Communication-system parameters, stored linear.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinkConfig {
    pub carrier_frequency_hz: f64,
    pub tx_power_w: f64,
    /// Satellite antenna gain towards the cell (linear).
    pub sat_antenna_gain: f64,
    /// User antenna gain towards the satellite (linear).
    pub user_antenna_gain: f64,
    /// Atmospheric attenuation theta (linear >= 1).
    pub atmospheric_loss: f64,
    /// Pointing loss ell (linear >= 1).
    pub pointing_loss: f64,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub speed_of_light_m_s: f64,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("carrier_frequency", self.carrier_frequency_hz),
            ("tx_power", self.tx_power_w),
            ("sat_antenna_gain", self.sat_antenna_gain),
            ("user_antenna_gain", self.user_antenna_gain),
            ("atmospheric_loss", self.atmospheric_loss),
            ("pointing_loss", self.pointing_loss),
            ("bandwidth", self.bandwidth_hz),
            ("noise_power", self.noise_power_w),
            ("speed_of_light", self.speed_of_light_m_s),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::config(format!("link: {name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Slot/frame timing and beam count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Slot duration T (s).
    pub slot_duration_s: f64,
    /// OFDMA frame duration T_F (s).
    pub frame_duration_s: f64,
    /// Beams per satellite N_B.
    pub beams_per_satellite: u32,
    /// Number of slots K in an episode.
    pub num_slots: usize,
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.slot_duration_s > 0.0) || !(self.frame_duration_s > 0.0) {
            return Err(SimError::config("timing: durations must be > 0"));
        }
        let ratio = self.slot_duration_s / self.frame_duration_s;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(SimError::config(format!(
                "timing: T/T_F = {ratio} is not an integer"
            )));
        }
        if self.beams_per_satellite == 0 {
            return Err(SimError::config("timing: need at least one beam"));
        }
        if self.num_slots == 0 {
            return Err(SimError::config("timing: need at least one slot"));
        }
        Ok(())
    }

    /// Frames per slot per beam, N_T = T / T_F.
    pub fn frames_per_slot(&self) -> u32 {
        (self.slot_duration_s / self.frame_duration_s).round() as u32
    }

    /// Per-satellite frame budget, N_T * N_B.
    pub fn satellite_frame_budget(&self) -> u32 {
        self.frames_per_slot() * self.beams_per_satellite
    }

    /// T_F / T, the fraction of a slot one frame occupies.
    pub fn frame_fraction(&self) -> f64 {
        self.frame_duration_s / self.slot_duration_s
    }
}

/// Handover cost model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HandoverModel {
    pub handover_cost: f64,
}

impl HandoverModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&self.handover_cost) {
            return Err(SimError::config("handover cost must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Worst-case attenuation: L = (4 pi d f)^2 / v_c^2 * theta * ell (linear).
pub fn path_loss(distance_m: f64, cfg: &LinkConfig) -> f64 {
    let fspl = 4.0 * std::f64::consts::PI * distance_m * cfg.carrier_frequency_hz
        / cfg.speed_of_light_m_s;
    fspl * fspl * cfg.atmospheric_loss * cfg.pointing_loss
}

/// Nominal rate rho = B log2(1 + P G G / (L sigma^2)) at the worst-case
/// distance (bit/s).
pub fn nominal_rate(distance_m: f64, cfg: &LinkConfig) -> f64 {
    let loss = path_loss(distance_m, cfg);
    let snr = cfg.tx_power_w * cfg.sat_antenna_gain * cfg.user_antenna_gain
        / (loss * cfg.noise_power_w);
    cfg.bandwidth_hz * (1.0 + snr).log2()
}

/// Minimum nominal rate at the slot edges.
pub fn min_rate(rho_start: f64, rho_end: f64) -> f64 {
    rho_start.min(rho_end)
}

/// Per-user throughput R = (T_F / (T U_c)) * x * rho_min (bit/s).
pub fn per_user_throughput(
    frames: f64,
    rho_min_bps: f64,
    users: f64,
    timing: &TimingConfig,
) -> Result<f64, SimError> {
    if !(users > 0.0) {
        return Err(SimError::domain("per-user throughput needs users > 0"));
    }
    Ok(timing.frame_fraction() / users * frames * rho_min_bps)
}

/// Handover penalty h = h_cost * (1 - H(prev_frames)): zero if the pair was
/// served last slot, the full cost otherwise.
pub fn handover_penalty(prev_frames: u32, model: &HandoverModel) -> f64 {
    if prev_frames > 0 {
        0.0
    } else {
        model.handover_cost
    }
}

/// One satellite-to-cell rate entry.
#[derive(Debug, Clone, Copy)]
pub struct RateEntry {
    pub cell_id: u32,
    /// min(rho_k, rho_{k+1}) over the slot edges.
    pub rho_min_bps: f64,
    /// Rate at the slot start edge, for diagnostics.
    pub rho_start_bps: f64,
    /// Worst-case distance at the slot start edge (m).
    pub distance_start_m: f64,
}

/// Per-slot table of worst-case nominal rates for the visible satellites.
#[derive(Debug, Clone)]
pub struct RateTable {
    pub slot_index: usize,
    /// Satellites in range for the whole slot, ordered by flat id.
    pub sats: Vec<SatelliteId>,
    /// Entries per satellite (same order as `sats`), each sorted by cell id.
    pub entries: Vec<Vec<RateEntry>>,
}

impl RateTable {
    /// Build the table for one slot from the geometry at its two edges.
    ///
    /// `sats` is the visible set for the slot (satellites in range at both
    /// edges under the scenario's visibility rule). A pair below
    /// `pair_mask_deg` elevation at either edge is excluded, which also
    /// implements the "rate 0 if invisible at an edge" convention.
    pub fn build(
        slot_index: usize,
        start: &GeometrySnapshot,
        end: &GeometrySnapshot,
        sats: Vec<SatelliteId>,
        grid: &CellGrid,
        link: &LinkConfig,
        earth_radius_m: f64,
        pair_mask_deg: f64,
    ) -> RateTable {
        let sin_mask = pair_mask_deg.to_radians().sin();
        let mut entries = Vec::with_capacity(sats.len());
        for sat in &sats {
            let p_start = start.positions[sat.flat_id as usize];
            let p_end = end.positions[sat.flat_id as usize];
            let mut sat_entries = Vec::new();
            for &cell_id in grid.populated_ids() {
                let cell = grid.cell(cell_id);
                if sin_elevation_of(p_start, cell.center_unit, earth_radius_m) < sin_mask
                    || sin_elevation_of(p_end, cell.center_unit, earth_radius_m) < sin_mask
                {
                    continue;
                }
                let d_start = max_distance_to_cell(p_start, cell, earth_radius_m);
                let d_end = max_distance_to_cell(p_end, cell, earth_radius_m);
                let rho_start = nominal_rate(d_start, link);
                let rho_end = nominal_rate(d_end, link);
                sat_entries.push(RateEntry {
                    cell_id,
                    rho_min_bps: min_rate(rho_start, rho_end),
                    rho_start_bps: rho_start,
                    distance_start_m: d_start,
                });
            }
            entries.push(sat_entries);
        }
        RateTable {
            slot_index,
            sats,
            entries,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.entries.iter().map(|e| e.len()).sum()
    }

    /// CSV dump `slot,sat_id,cell_id,d_m,rho_bps,rho_min_bps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,sat_id,cell_id,d_m,rho_bps,rho_min_bps\n");
        for (sat, entries) in self.sats.iter().zip(&self.entries) {
            for e in entries {
                out.push_str(&format!(
                    "{},{},{},{:.3},{:.3},{:.3}\n",
                    self.slot_index, sat.flat_id, e.cell_id, e.distance_start_m, e.rho_start_bps,
                    e.rho_min_bps
                ));
            }
        }
        out
    }
}

fn sin_elevation_of(sat: crate::geo::Vec3, ground_unit: crate::geo::Vec3, radius: f64) -> f64 {
    let ground = ground_unit * radius;
    let los = sat - ground;
    let dist = los.norm();
    if dist < 1e-9 {
        return 1.0;
    }
    (los.dot(ground_unit) / dist).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{db_to_linear, SPEED_OF_LIGHT_M_S};

    /// Table-1 communication parameters (dB quantities converted here).
    fn table1_link() -> LinkConfig {
        LinkConfig {
            carrier_frequency_hz: 2e9,
            tx_power_w: 75.35,
            sat_antenna_gain: db_to_linear(30.0),
            user_antenna_gain: db_to_linear(0.0),
            atmospheric_loss: db_to_linear(0.5),
            pointing_loss: db_to_linear(3.0),
            bandwidth_hz: 30e6,
            noise_power_w: db_to_linear(-122.2),
            speed_of_light_m_s: SPEED_OF_LIGHT_M_S,
        }
    }

    fn table1_timing() -> TimingConfig {
        TimingConfig {
            slot_duration_s: 10.0,
            frame_duration_s: 0.010,
            beams_per_satellite: 10,
            num_slots: 100,
        }
    }

    /// Independent dB-domain oracle: 20 log10(4 pi d f / c) + theta_dB + ell_dB.
    fn path_loss_db_oracle(d: f64, f: f64, theta_db: f64, ell_db: f64) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * d * f / SPEED_OF_LIGHT_M_S).log10() + theta_db + ell_db
    }

    #[test]
    fn golden_path_loss_550km() {
        let cfg = table1_link();
        let loss_db = crate::geo::linear_to_db(path_loss(550e3, &cfg));
        let oracle = path_loss_db_oracle(550e3, 2e9, 0.5, 3.0);
        assert!((loss_db - oracle).abs() < 1e-9, "{loss_db} vs oracle {oracle}");
        assert!((loss_db - 156.78).abs() < 0.01, "path loss {loss_db} dB");
    }

    #[test]
    fn ten_times_distance_adds_20db() {
        let mut cfg = table1_link();
        cfg.atmospheric_loss = 1.0;
        cfg.pointing_loss = 1.0;
        let l1 = crate::geo::linear_to_db(path_loss(100e3, &cfg));
        let l2 = crate::geo::linear_to_db(path_loss(1000e3, &cfg));
        assert!((l2 - l1 - 20.0).abs() < 1e-9);
    }

    #[test]
    fn unit_path_loss_construction() {
        let cfg = LinkConfig {
            carrier_frequency_hz: SPEED_OF_LIGHT_M_S / (4.0 * std::f64::consts::PI),
            atmospheric_loss: 1.0,
            pointing_loss: 1.0,
            ..table1_link()
        };
        assert!((path_loss(1.0, &cfg) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn golden_nominal_rate_550km() {
        // Independent dB-chain oracle: EIRP 48.77 dBW - L - P_N.
        let cfg = table1_link();
        let eirp_dbw = 10.0 * 75.35f64.log10() + 30.0 + 0.0;
        assert!((eirp_dbw - 48.77).abs() < 0.005);
        let snr_db = eirp_dbw - path_loss_db_oracle(550e3, 2e9, 0.5, 3.0) - (-122.20);
        assert!((snr_db - 14.2).abs() < 0.01, "snr {snr_db} dB");
        let rho_oracle = 30e6 * (1.0 + db_to_linear(snr_db)).log2();
        let rho = nominal_rate(550e3, &cfg);
        assert!(
            ((rho - rho_oracle) / rho_oracle).abs() < 1e-9,
            "{rho} vs {rho_oracle}"
        );
        assert!(((rho - 1.43e8) / 1.43e8).abs() < 0.01, "rate {rho} bit/s");
    }

    #[test]
    fn rate_vanishes_with_power() {
        let mut cfg = table1_link();
        cfg.tx_power_w = 1e-30;
        assert!(nominal_rate(550e3, &cfg) < 1e-6);
    }

    #[test]
    fn rate_is_linear_in_bandwidth_at_fixed_snr() {
        let mut cfg = table1_link();
        let r1 = nominal_rate(550e3, &cfg);
        cfg.bandwidth_hz *= 2.0;
        let r2 = nominal_rate(550e3, &cfg);
        assert!((r2 - 2.0 * r1).abs() / r1 < 1e-12);
    }

    #[test]
    fn rate_monotonicity_in_distance_power_gain() {
        let cfg = table1_link();
        let mut prev = f64::INFINITY;
        for d in [400e3, 600e3, 900e3, 1500e3, 2500e3] {
            let r = nominal_rate(d, &cfg);
            assert!(r < prev, "rate must strictly decrease with distance");
            prev = r;
        }
        let base = nominal_rate(700e3, &cfg);
        for scale in [1.5, 2.0, 4.0] {
            let mut c = cfg;
            c.tx_power_w *= scale;
            assert!(nominal_rate(700e3, &c) > base);
            let mut c = cfg;
            c.sat_antenna_gain *= scale;
            assert!(nominal_rate(700e3, &c) > base);
        }
    }

    #[test]
    fn min_rate_conventions() {
        assert_eq!(min_rate(100.0, 80.0), 80.0);
        assert_eq!(min_rate(42.0, 42.0), 42.0);
        assert_eq!(min_rate(99.0, 0.0), 0.0);
    }

    #[test]
    fn per_user_throughput_cases() {
        let t = table1_timing();
        assert_eq!(t.frames_per_slot(), 1000);
        // Full-time single user: x = N_T, U = 1 gives R = rho_min.
        let r = per_user_throughput(1000.0, 5e7, 1.0, &t).unwrap();
        assert!((r - 5e7).abs() < 1e-6);
        assert_eq!(per_user_throughput(0.0, 5e7, 3.0, &t).unwrap(), 0.0);
        // Direct substitution oracle.
        let r = per_user_throughput(500.0, 1.43e8, 250.0, &t).unwrap();
        assert!((r - 2.86e5).abs() < 1e-6, "got {r}");
        assert!(per_user_throughput(1.0, 1.0, 0.0, &t).is_err());
    }

    #[test]
    fn handover_penalty_cases() {
        let m = HandoverModel { handover_cost: 0.4 };
        assert_eq!(handover_penalty(3, &m), 0.0);
        assert_eq!(handover_penalty(0, &m), 0.4);
        let zero = HandoverModel { handover_cost: 0.0 };
        assert_eq!(handover_penalty(0, &zero), 0.0);
        assert!(HandoverModel { handover_cost: 1.0 }.validate().is_err());
    }

    #[test]
    fn db_and_linear_domains_agree() {
        let cfg = table1_link();
        for d in [300e3, 550e3, 1200e3, 2800e3] {
            let lin_db = crate::geo::linear_to_db(path_loss(d, &cfg));
            let oracle = path_loss_db_oracle(d, 2e9, 0.5, 3.0);
            assert!(
                ((lin_db - oracle) / oracle).abs() < 1e-9,
                "distance {d}: {lin_db} vs {oracle}"
            );
        }
    }

    #[test]
    fn timing_validation() {
        let mut t = table1_timing();
        assert!(t.validate().is_ok());
        assert_eq!(t.satellite_frame_budget(), 10_000);
        t.frame_duration_s = 0.3; // T/T_F not integral
        assert!(t.validate().is_err());
    }

    #[test]
    fn rate_table_pairs_only_for_visible() {
        use crate::geodata::{CellGrid, GridSpec, SyntheticModel};
        use crate::orbital::{build_constellation, ConstellationConfig};

        let cfg = ConstellationConfig {
            total_satellites: 8,
            orbital_planes: 4,
            altitude_m: 550e3,
            inclination_deg: 53.0,
            inter_plane_phasing_deg: 0.0,
            earth_radius_m: crate::geo::EARTH_RADIUS_M,
            gravitational_parameter: crate::geo::EARTH_MU_M3_S2,
            earth_rotation_rate: crate::geo::EARTH_ROTATION_RAD_S,
        };
        let con = build_constellation(cfg).unwrap();
        let mut grid = CellGrid::build(GridSpec {
            lat_min_deg: 40.0,
            lat_max_deg: 50.0,
            lon_min_deg: 0.0,
            lon_max_deg: 10.0,
            resolution_deg: 1.0,
        })
        .unwrap();
        grid.synthesize_population(0, &SyntheticModel::Uniform { population_per_cell: 10.0 });
        grid.set_active_fraction(0.1).unwrap();

        let start = con.propagate(0, 0.0);
        let end = con.propagate(1, 10.0);
        let sats: Vec<_> = con.elements.iter().map(|e| e.id).collect();
        let table = RateTable::build(
            0,
            &start,
            &end,
            sats,
            &grid,
            &table1_link(),
            cfg.earth_radius_m,
            10.0,
        );
        for (sat, entries) in table.sats.iter().zip(&table.entries) {
            for e in entries {
                assert!(e.rho_min_bps >= 0.0);
                assert!(e.rho_min_bps <= e.rho_start_bps + 1e-9);
                let cell = grid.cell(e.cell_id);
                let el = crate::orbital::elevation_angle(
                    start.positions[sat.flat_id as usize],
                    cell.center_lat_deg,
                    cell.center_lon_deg,
                    cfg.earth_radius_m,
                )
                .unwrap();
                assert!(el >= 10.0 - 1e-9, "pair below the mask: {el}");
            }
        }
    }
}
