//! Episode orchestration: scenario configuration, geometry caching, the
//! per-slot pipeline (geometry -> rates -> allocation -> metrics), parameter
//! sweeps, and artifact export.
//!
//! The scenario file is JSON with explicit units in key names (altitude_km,
//! bandwidth_mhz, ...); dB quantities are entered in dB and converted to
//! linear once at load. Artifacts land in `output_dir` as `report.csv`,
//! `summary.json`, `alloc/slot_####.csv`, and `heatmap_<algo>.asc`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocator::{
    distributed_allocate, global_allocate, AllocationMatrix, ConflictRule, MatchingConfig,
};
use crate::error::SimError;
use crate::geo::{db_to_linear, SPEED_OF_LIGHT_M_S};
use crate::geodata::{CellGrid, EsriAsciiGrid, GridSpec, SyntheticModel};
use crate::linkbudget::{HandoverModel, LinkConfig, RateTable, TimingConfig};
use crate::metrics::{
    count_handovers, jain_from_rates, per_cell_user_rates, EpisodeReport, SlotMetrics,
};
use crate::orbital::{
    build_constellation, visible_set, Constellation, ConstellationConfig, GeometrySnapshot,
    SatelliteId, VisibilityRule,
};
use crate::solver::{Instance, SolverConfig, StepRule};

/// Allocation strategy for an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Global,
    Distributed,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Global => "global",
            Algorithm::Distributed => "distributed",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "global" => Ok(Algorithm::Global),
            "distributed" => Ok(Algorithm::Distributed),
            other => Err(SimError::config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Population input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PopulationSpec {
    /// ESRI ASCII grid.
    Raster { path: PathBuf },
    /// `lat,lon,population` rows.
    Csv { path: PathBuf },
    /// Seeded synthetic generator.
    Synthetic {
        #[serde(flatten)]
        model: SyntheticModel,
    },
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec::Synthetic {
            model: SyntheticModel::LogNormal {
                mu_log: 9.1,
                sigma_log: 1.6,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstellationSpec {
    pub total_satellites: u32,
    pub orbital_planes: u32,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub inter_plane_phasing_deg: f64,
    pub earth_radius_km: f64,
    pub gravitational_parameter_m3_s2: f64,
    pub earth_rotation_rate_rad_s: f64,
}

impl Default for ConstellationSpec {
    fn default() -> Self {
        ConstellationSpec {
            total_satellites: 1584,
            orbital_planes: 72,
            altitude_km: 550.0,
            inclination_deg: 53.0,
            inter_plane_phasing_deg: 0.0,
            earth_radius_km: crate::geo::EARTH_RADIUS_M / 1000.0,
            gravitational_parameter_m3_s2: crate::geo::EARTH_MU_M3_S2,
            earth_rotation_rate_rad_s: crate::geo::EARTH_ROTATION_RAD_S,
        }
    }
}

impl ConstellationSpec {
    pub fn resolve(&self) -> ConstellationConfig {
        ConstellationConfig {
            total_satellites: self.total_satellites,
            orbital_planes: self.orbital_planes,
            altitude_m: self.altitude_km * 1000.0,
            inclination_deg: self.inclination_deg,
            inter_plane_phasing_deg: self.inter_plane_phasing_deg,
            earth_radius_m: self.earth_radius_km * 1000.0,
            gravitational_parameter: self.gravitational_parameter_m3_s2,
            earth_rotation_rate: self.earth_rotation_rate_rad_s,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkSpec {
    pub carrier_frequency_ghz: f64,
    pub tx_power_w: f64,
    pub sat_antenna_gain_dbi: f64,
    pub user_antenna_gain_dbi: f64,
    pub atmospheric_loss_db: f64,
    pub pointing_loss_db: f64,
    pub bandwidth_mhz: f64,
    pub noise_power_dbw: f64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec {
            carrier_frequency_ghz: 2.0,
            tx_power_w: 75.35,
            sat_antenna_gain_dbi: 30.0,
            user_antenna_gain_dbi: 0.0,
            atmospheric_loss_db: 0.5,
            pointing_loss_db: 3.0,
            bandwidth_mhz: 30.0,
            noise_power_dbw: -122.2,
        }
    }
}

impl LinkSpec {
    pub fn resolve(&self) -> LinkConfig {
        LinkConfig {
            carrier_frequency_hz: self.carrier_frequency_ghz * 1e9,
            tx_power_w: self.tx_power_w,
            sat_antenna_gain: db_to_linear(self.sat_antenna_gain_dbi),
            user_antenna_gain: db_to_linear(self.user_antenna_gain_dbi),
            atmospheric_loss: db_to_linear(self.atmospheric_loss_db),
            pointing_loss: db_to_linear(self.pointing_loss_db),
            bandwidth_hz: self.bandwidth_mhz * 1e6,
            noise_power_w: db_to_linear(self.noise_power_dbw),
            speed_of_light_m_s: SPEED_OF_LIGHT_M_S,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingSpec {
    pub slot_duration_s: f64,
    pub frame_duration_ms: f64,
    pub beams_per_satellite: u32,
    pub num_slots: usize,
}

impl Default for TimingSpec {
    fn default() -> Self {
        TimingSpec {
            slot_duration_s: 10.0,
            frame_duration_ms: 10.0,
            beams_per_satellite: 10,
            num_slots: 100,
        }
    }
}

impl TimingSpec {
    pub fn resolve(&self) -> TimingConfig {
        TimingConfig {
            slot_duration_s: self.slot_duration_s,
            frame_duration_s: self.frame_duration_ms / 1000.0,
            beams_per_satellite: self.beams_per_satellite,
            num_slots: self.num_slots,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSpec {
    /// Reweighting numerator; None derives the median of U_c over populated
    /// cells at prepare time.
    pub beta: Option<f64>,
    pub tau_frames: f64,
    pub n_iter: u32,
    pub pg_max_steps: u32,
    /// KKT threshold; None derives 1e-6 * (total active users).
    pub pg_tolerance: Option<f64>,
    pub pg_step_rule: StepRule,
    pub pg_fixed_step: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            beta: None,
            tau_frames: 1.0,
            n_iter: 2,
            pg_max_steps: 5000,
            pg_tolerance: None,
            pg_step_rule: StepRule::Backtracking,
            pg_fixed_step: 1.0,
        }
    }
}

fn default_grid() -> GridSpec {
    GridSpec {
        lat_min_deg: 40.0,
        lat_max_deg: 55.0,
        lon_min_deg: 5.0,
        lon_max_deg: 30.0,
        resolution_deg: 0.25,
    }
}

/// Full scenario description (the JSON config file format).
///
/// Omitted fields take the benchmark defaults: the central-Europe grid, the
/// 1584-satellite 550 km shell, the Table-1 communication system, and the
/// calibrated all-cells visibility rule (the 2.8 deg mask reproduces the
/// 19-25 in-range satellites of the reference scenario).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub grid: GridSpec,
    pub population: PopulationSpec,
    /// Ratio of active users to total population (alpha).
    pub active_user_ratio: f64,
    pub constellation: ConstellationSpec,
    pub link: LinkSpec,
    pub timing: TimingSpec,
    pub handover_cost: f64,
    pub algorithm: Algorithm,
    pub solver: SolverSpec,
    pub matching: MatchingConfig,
    pub conflict_rule: ConflictRule,
    pub visibility_rule: VisibilityRule,
    pub elevation_mask_deg: f64,
    /// Simulation epoch offset (s) applied before slot 0.
    pub epoch_s: f64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            grid: default_grid(),
            population: PopulationSpec::default(),
            active_user_ratio: 1e-3,
            constellation: ConstellationSpec::default(),
            link: LinkSpec::default(),
            timing: TimingSpec::default(),
            handover_cost: 0.0,
            algorithm: Algorithm::Global,
            solver: SolverSpec::default(),
            matching: MatchingConfig::default(),
            conflict_rule: ConflictRule::PenalizedThroughput,
            visibility_rule: VisibilityRule::AllCells,
            elevation_mask_deg: 2.8,
            epoch_s: 0.0,
            seed: 42,
            output_dir: None,
        }
    }
}

impl ScenarioSpec {
    pub fn from_file(path: &Path) -> Result<ScenarioSpec, SimError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| SimError::config(format!("cannot parse {}: {e}", path.display())))
    }

    /// SHA-256 over the canonical JSON of this spec.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-episode knobs that do not invalidate the geometry cache.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub algorithm: Algorithm,
    pub handover_cost: f64,
    pub n_iter: u32,
    pub output_dir: Option<PathBuf>,
}

/// Scenario with grid, constellation, and per-edge geometry precomputed.
/// Rate tables are derived per slot from the cached snapshots, so sweeps over
/// handover cost or iteration count share all geometry work.
pub struct PreparedScenario {
    pub spec: ScenarioSpec,
    pub grid: CellGrid,
    pub constellation: Constellation,
    pub link: LinkConfig,
    pub timing: TimingConfig,
    edge_snapshots: Vec<GeometrySnapshot>,
    edge_visible: Vec<Vec<SatelliteId>>,
    pub solver_beta: f64,
    pub solver_tolerance: f64,
}

impl PreparedScenario {
    pub fn prepare(spec: &ScenarioSpec) -> Result<PreparedScenario, SimError> {
        if !(0.0..1.0).contains(&spec.handover_cost) {
            return Err(SimError::config("handover_cost must be in [0, 1)"));
        }
        let mut grid = CellGrid::build(spec.grid)?;
        grid.set_active_fraction(spec.active_user_ratio)?;
        match &spec.population {
            PopulationSpec::Raster { path } => grid.load_population_raster(path)?,
            PopulationSpec::Csv { path } => {
                let file = fs::File::open(path)?;
                grid.load_population_csv(file)?;
            }
            PopulationSpec::Synthetic { model } => grid.synthesize_population(spec.seed, model),
        }
        if grid.populated_ids().is_empty() {
            return Err(SimError::config("no populated cells in the scenario"));
        }

        let constellation = build_constellation(spec.constellation.resolve())?;
        let link = spec.link.resolve();
        link.validate()?;
        let timing = spec.timing.resolve();
        timing.validate()?;

        // Geometry at slot edges 0..=K, shared between adjacent slots.
        let k = timing.num_slots;
        let mut edge_snapshots = Vec::with_capacity(k + 1);
        let mut edge_visible = Vec::with_capacity(k + 1);
        for edge in 0..=k {
            let t = spec.epoch_s + edge as f64 * timing.slot_duration_s;
            let snap = constellation.propagate(edge, t);
            let visible = visible_set(
                &snap,
                &constellation,
                &grid,
                spec.elevation_mask_deg,
                spec.visibility_rule,
            );
            edge_snapshots.push(snap);
            edge_visible.push(visible);
        }

        // Derived solver defaults (median users, user-scaled tolerance).
        let mut users: Vec<f64> = grid
            .populated_ids()
            .iter()
            .map(|&id| grid.cell(id).active_users)
            .collect();
        users.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let beta = spec
            .solver
            .beta
            .unwrap_or_else(|| crate::metrics::quantile(&users, 0.5));
        let tolerance = spec
            .solver
            .pg_tolerance
            .unwrap_or(1e-6 * grid.total_active_users());

        Ok(PreparedScenario {
            spec: spec.clone(),
            grid,
            constellation,
            link,
            timing,
            edge_snapshots,
            edge_visible,
            solver_beta: beta,
            solver_tolerance: tolerance,
        })
    }

    /// |S_k| at a slot-start edge.
    pub fn visible_count(&self, edge: usize) -> usize {
        self.edge_visible[edge].len()
    }

    /// Satellites in range for the whole slot (both edges).
    fn slot_sats(&self, slot: usize) -> Vec<SatelliteId> {
        let a = &self.edge_visible[slot];
        let b = &self.edge_visible[slot + 1];
        // Both are flat-id sorted; merge-intersect.
        let mut out = Vec::with_capacity(a.len().min(b.len()));
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].flat_id.cmp(&b[j].flat_id) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    /// Build the rate table for a slot from the cached edge geometry.
    pub fn rate_table(&self, slot: usize) -> RateTable {
        let sats = self.slot_sats(slot);
        // Under the all-cells rule every listed satellite clears the mask at
        // every populated cell; pairs only need the horizon floor. Under the
        // any-cell rule each pair must clear the mask itself.
        let pair_mask = match self.spec.visibility_rule {
            VisibilityRule::AnyCell => self.spec.elevation_mask_deg,
            VisibilityRule::AllCells => 0.0,
        };
        RateTable::build(
            slot,
            &self.edge_snapshots[slot],
            &self.edge_snapshots[slot + 1],
            sats,
            &self.grid,
            &self.link,
            self.constellation.cfg.earth_radius_m,
            pair_mask,
        )
    }

    pub fn solver_config(&self, n_iter: u32) -> SolverConfig {
        SolverConfig {
            beta: self.solver_beta,
            tau: self.spec.solver.tau_frames,
            n_iter,
            pg_max_steps: self.spec.solver.pg_max_steps,
            pg_tolerance: self.solver_tolerance,
            pg_step_rule: self.spec.solver.pg_step_rule,
            pg_fixed_step: self.spec.solver.pg_fixed_step,
        }
    }

    pub fn default_params(&self) -> RunParams {
        RunParams {
            algorithm: self.spec.algorithm,
            handover_cost: self.spec.handover_cost,
            n_iter: self.spec.solver.n_iter,
            output_dir: self.spec.output_dir.clone(),
        }
    }

    /// Run one episode over the prepared geometry.
    pub fn run(&self, params: &RunParams) -> Result<EpisodeReport, SimError> {
        let model = HandoverModel {
            handover_cost: params.handover_cost,
        };
        model.validate()?;
        let solver_cfg = self.solver_config(params.n_iter);
        let matching = self.spec.matching;
        let conflict_rule = self.spec.conflict_rule;

        if let Some(dir) = &params.output_dir {
            fs::create_dir_all(dir.join("alloc"))?;
        }

        let mut prev: Option<AllocationMatrix> = None;
        let mut slots = Vec::with_capacity(self.timing.num_slots);
        let mut heat_sum = vec![0.0f64; self.grid.cell_count()];
        let mut total_acquisitions = 0usize;
        let mut total_gaps = 0usize;

        for k in 0..self.timing.num_slots {
            let table = self.rate_table(k);
            let inst = Instance::build(&table, &self.grid, prev.as_ref(), &model, &self.timing)
                .map_err(|e| e.at_slot(k))?;

            let started = Instant::now();
            let (matrix, conflicts_pre, uncovered) = match params.algorithm {
                Algorithm::Global => {
                    let (m, diag) =
                        global_allocate(&inst, &solver_cfg, conflict_rule).map_err(|e| e.at_slot(k))?;
                    (m, diag.conflicting_cells_pre_adjust, diag.uncovered_cells)
                }
                Algorithm::Distributed => {
                    let (m, diag) =
                        distributed_allocate(&inst, &matching).map_err(|e| e.at_slot(k))?;
                    (m, 0, diag.uncovered_cells)
                }
            };
            let solver_runtime_s = started.elapsed().as_secs_f64();

            matrix.validate(&self.timing).map_err(|e| e.at_slot(k))?;

            let rates = per_cell_user_rates(&matrix, &self.grid, &self.timing);
            let (jain, jain_degenerate) = jain_from_rates(&rates);
            let mut sum_u = 0.0;
            let mut sum_ur = 0.0;
            for &(cell_id, u, r) in &rates {
                sum_u += u;
                sum_ur += u * r;
                heat_sum[cell_id as usize] += r;
            }
            let avg = if sum_u > 0.0 { sum_ur / sum_u } else { 0.0 };

            let transitions = match &prev {
                Some(p) => count_handovers(p, &matrix),
                None => crate::metrics::HandoverStats {
                    handovers: 0,
                    acquisitions: matrix.served_cell_count(),
                    gaps: 0,
                },
            };
            total_acquisitions += transitions.acquisitions;
            total_gaps += transitions.gaps;

            if let Some(dir) = &params.output_dir {
                let path = dir.join("alloc").join(format!("slot_{k:04}.csv"));
                fs::write(path, matrix.to_csv(&self.grid, &self.timing))?;
            }

            slots.push(SlotMetrics {
                slot_index: k,
                avg_user_throughput_bps: avg,
                jain_index: jain,
                jain_degenerate,
                handovers: transitions.handovers,
                first_acquisitions: transitions.acquisitions,
                service_gaps: transitions.gaps,
                conflicting_cells_pre_adjust: conflicts_pre,
                uncovered_populated_cells: uncovered,
                solver_runtime_s,
            });
            prev = Some(matrix);
        }

        // Fingerprint the effective configuration of this run.
        let mut effective = self.spec.clone();
        effective.algorithm = params.algorithm;
        effective.handover_cost = params.handover_cost;
        effective.solver.n_iter = params.n_iter;
        effective.output_dir = None;
        let report = EpisodeReport::from_slots(slots, effective.fingerprint());

        if let Some(dir) = &params.output_dir {
            fs::write(dir.join("report.csv"), report.to_csv())?;
            let heat = self.throughput_heatmap(&heat_sum);
            let algo = params.algorithm.name();
            fs::write(dir.join(format!("heatmap_{algo}.asc")), heat.to_ascii())?;
            fs::write(
                dir.join(format!("heatmap_{algo}.csv")),
                self.heatmap_csv(&heat_sum),
            )?;
            let summary = self.summary_json(&report, params, total_acquisitions, total_gaps)?;
            fs::write(dir.join("summary.json"), summary)?;
        }
        Ok(report)
    }

    /// Mean per-user throughput per cell as an ESRI ASCII raster; cells
    /// without users are NODATA.
    pub fn throughput_heatmap(&self, heat_sum: &[f64]) -> EsriAsciiGrid {
        let spec = self.spec.grid;
        let res = spec.resolution_deg;
        let nodata = -9999.0;
        let slots = self.timing.num_slots as f64;
        let mut values = vec![nodata; self.grid.cell_count()];
        for &cell_id in self.grid.populated_ids() {
            values[cell_id as usize] = heat_sum[cell_id as usize] / slots;
        }
        EsriAsciiGrid {
            ncols: self.grid.cols(),
            nrows: self.grid.rows(),
            xllcorner: spec.lon_min_deg - res / 2.0,
            yllcorner: spec.lat_min_deg - res / 2.0,
            cellsize: res,
            nodata,
            values,
        }
    }

    fn heatmap_csv(&self, heat_sum: &[f64]) -> String {
        let slots = self.timing.num_slots as f64;
        let mut out = String::from("cell_id,lat_deg,lon_deg,mean_user_bps\n");
        for &cell_id in self.grid.populated_ids() {
            let c = self.grid.cell(cell_id);
            out.push_str(&format!(
                "{},{},{},{:.3}\n",
                cell_id,
                c.center_lat_deg,
                c.center_lon_deg,
                heat_sum[cell_id as usize] / slots
            ));
        }
        out
    }

    fn summary_json(
        &self,
        report: &EpisodeReport,
        params: &RunParams,
        acquisitions: usize,
        gaps: usize,
    ) -> Result<String, SimError> {
        let visible: Vec<usize> = (0..self.timing.num_slots)
            .map(|k| self.visible_count(k))
            .collect();
        let summary = serde_json::json!({
            "fingerprint": report.fingerprint,
            "algorithm": params.algorithm.name(),
            "handover_cost": params.handover_cost,
            "n_iter": params.n_iter,
            "aggregates": report.aggregates,
            "totals": {
                "handovers": report.total_handovers(),
                "first_acquisitions": acquisitions,
                "service_gaps": gaps,
            },
            "visible_satellites": {
                "min": visible.iter().min(),
                "max": visible.iter().max(),
            },
            "populated_cells": self.grid.populated_ids().len(),
            "total_active_users": self.grid.total_active_users(),
        });
        serde_json::to_string_pretty(&summary)
            .map_err(|e| SimError::config(format!("summary serialization: {e}")))
    }
}

/// Prepare and run a whole episode as configured.
pub fn run_episode(spec: &ScenarioSpec) -> Result<EpisodeReport, SimError> {
    let prep = PreparedScenario::prepare(spec)?;
    let params = prep.default_params();
    prep.run(&params)
}

/// Sweepable episode parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    HCost,
    NIter,
}

impl std::str::FromStr for SweepParam {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "h_cost" => Ok(SweepParam::HCost),
            "n_iter" => Ok(SweepParam::NIter),
            other => Err(SimError::config(format!(
                "unknown sweep parameter {other:?} (expected h_cost or n_iter)"
            ))),
        }
    }
}

/// One episode per value, sharing the prepared geometry. With an output
/// directory set, per-value artifacts land in subdirectories and an
/// aggregate `sweep_<param>.csv` table is written.
pub fn sweep(
    spec: &ScenarioSpec,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<(f64, EpisodeReport)>, SimError> {
    if values.is_empty() {
        return Err(SimError::config("sweep needs at least one value"));
    }
    let prep = PreparedScenario::prepare(spec)?;
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut params = prep.default_params();
        let label = match param {
            SweepParam::HCost => {
                params.handover_cost = v;
                format!("h_cost_{v}")
            }
            SweepParam::NIter => {
                params.n_iter = v.round().max(1.0) as u32;
                format!("n_iter_{}", params.n_iter)
            }
        };
        params.output_dir = spec.output_dir.as_ref().map(|d| d.join(label));
        let report = prep.run(&params)?;
        out.push((v, report));
    }
    if let Some(dir) = &spec.output_dir {
        let name = match param {
            SweepParam::HCost => "sweep_h_cost.csv",
            SweepParam::NIter => "sweep_n_iter.csv",
        };
        let mut table =
            String::from("value,mean_avg_bps,median_jain,total_handovers,mean_conflicts\n");
        for (v, report) in &out {
            table.push_str(&format!(
                "{},{:.3},{:.6},{},{:.3}\n",
                v,
                report.mean_throughput_bps(),
                report.median_jain(),
                report.total_handovers(),
                report.aggregates["conflicting_cells"].mean
            ));
        }
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), table)?;
    }
    Ok(out)
}

/// Quick look at one slot's geometry and rate table.
#[derive(Debug, Clone, Serialize)]
pub struct SlotInspection {
    pub slot: usize,
    pub visible_at_start: usize,
    pub visible_at_end: usize,
    pub sats_in_table: usize,
    pub pair_count: usize,
    pub populated_cells: usize,
    pub uncovered_populated_cells: usize,
    pub rho_min_bps_min: f64,
    pub rho_min_bps_mean: f64,
    pub rho_min_bps_max: f64,
}

pub fn inspect_slot(spec: &ScenarioSpec, slot: usize) -> Result<SlotInspection, SimError> {
    let prep = PreparedScenario::prepare(spec)?;
    if slot >= prep.timing.num_slots {
        return Err(SimError::config(format!(
            "slot {slot} out of range (num_slots = {})",
            prep.timing.num_slots
        )));
    }
    let table = prep.rate_table(slot);
    let model = HandoverModel {
        handover_cost: spec.handover_cost,
    };
    let inst = Instance::build(&table, &prep.grid, None, &model, &prep.timing)?;
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for entries in &table.entries {
        for e in entries {
            min = min.min(e.rho_min_bps);
            max = max.max(e.rho_min_bps);
            sum += e.rho_min_bps;
            n += 1;
        }
    }
    Ok(SlotInspection {
        slot,
        visible_at_start: prep.visible_count(slot),
        visible_at_end: prep.edge_visible[slot + 1].len(),
        sats_in_table: table.sats.len(),
        pair_count: n,
        populated_cells: prep.grid.populated_ids().len(),
        uncovered_populated_cells: inst.uncovered_cells.len(),
        rho_min_bps_min: if n > 0 { min } else { 0.0 },
        rho_min_bps_mean: if n > 0 { sum / n as f64 } else { 0.0 },
        rho_min_bps_max: max,
    })
}

/// Sum of per-metric hashes over the CSV artifacts of a run, excluding
/// wall-clock columns: used by determinism checks.
pub fn artifact_digest(dir: &Path) -> Result<String, SimError> {
    let mut hasher = Sha256::new();
    let mut paths: Vec<PathBuf> = Vec::new();
    collect_csvs(dir, &mut paths)?;
    paths.sort();
    for path in paths {
        let text = fs::read_to_string(&path)?;
        if path.file_name().is_some_and(|n| n == "report.csv") {
            // Drop the wall-clock column (solver_s).
            for line in text.lines() {
                let without_runtime: Vec<&str> = line.split(',').collect();
                let keep = &without_runtime[..without_runtime.len().saturating_sub(1)];
                hasher.update(keep.join(",").as_bytes());
                hasher.update(b"\n");
            }
        } else {
            hasher.update(text.as_bytes());
        }
    }
    Ok(hex_string(&hasher.finalize()))
}

fn collect_csvs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), SimError> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_csvs(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "csv" || e == "asc") {
            out.push(path);
        }
    }
    Ok(())
}

/// Aggregate table for reporting sweeps in memory.
pub fn sweep_table(results: &[(f64, EpisodeReport)]) -> BTreeMap<String, Vec<f64>> {
    let mut table = BTreeMap::new();
    table.insert(
        "value".to_string(),
        results.iter().map(|(v, _)| *v).collect(),
    );
    table.insert(
        "mean_avg_bps".to_string(),
        results.iter().map(|(_, r)| r.mean_throughput_bps()).collect(),
    );
    table.insert(
        "median_jain".to_string(),
        results.iter().map(|(_, r)| r.median_jain()).collect(),
    );
    table.insert(
        "total_handovers".to_string(),
        results.iter().map(|(_, r)| r.total_handovers() as f64).collect(),
    );
    table
}
