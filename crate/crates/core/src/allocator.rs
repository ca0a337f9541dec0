//! End-to-end allocation algorithms for one slot: rounding, the feasibility
//! adjustment, the reweighted-l1 global optimizer, and the distributed
//! matching baseline.
//!
//! All integer intermediates are pair-aligned with `solver::Instance::pairs`;
//! the final `AllocationMatrix` stores one serving satellite per cell and is
//! feasibility-checked after every slot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::linkbudget::TimingConfig;
use crate::metrics::count_conflicts;
use crate::orbital::SatelliteId;
use crate::solver::{
    reweight, solve_local, solve_relaxed_global, Instance, SolverConfig,
};

/// One cell's serving satellite and allocated frames for a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServingEntry {
    pub sat: SatelliteId,
    pub frames: u32,
    pub rho_min_bps: f64,
}

/// Feasible integer allocation for one slot: at most one serving satellite
/// per cell, per-entry box and per-satellite budget respected.
#[derive(Debug, Clone, Default)]
pub struct AllocationMatrix {
    pub slot_index: usize,
    serving: BTreeMap<u32, ServingEntry>,
}

impl AllocationMatrix {
    pub fn empty(slot_index: usize) -> Self {
        AllocationMatrix {
            slot_index,
            serving: BTreeMap::new(),
        }
    }

    pub fn serving_sat(&self, cell_id: u32) -> Option<SatelliteId> {
        self.serving.get(&cell_id).map(|e| e.sat)
    }

    pub fn entry(&self, cell_id: u32) -> Option<&ServingEntry> {
        self.serving.get(&cell_id)
    }

    /// Frames allocated by a given satellite to a cell (0 unless that
    /// satellite serves the cell).
    pub fn frames_for(&self, sat_flat_id: u32, cell_id: u32) -> u32 {
        match self.serving.get(&cell_id) {
            Some(e) if e.sat.flat_id == sat_flat_id => e.frames,
            _ => 0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &ServingEntry)> {
        self.serving.iter().map(|(&c, e)| (c, e))
    }

    pub fn served_cell_count(&self) -> usize {
        self.serving.len()
    }

    /// Machine check of the three feasibility constraints.
    pub fn validate(&self, timing: &TimingConfig) -> Result<(), SimError> {
        let cap = timing.frames_per_slot();
        let budget = timing.satellite_frame_budget();
        let mut per_sat: BTreeMap<u32, u64> = BTreeMap::new();
        for (cell, e) in self.iter() {
            if e.frames == 0 {
                return Err(SimError::solver(format!(
                    "cell {cell} listed as served with zero frames"
                )));
            }
            if e.frames > cap {
                return Err(SimError::solver(format!(
                    "cell {cell}: {} frames exceed the per-cell cap {cap}",
                    e.frames
                )));
            }
            *per_sat.entry(e.sat.flat_id).or_default() += e.frames as u64;
        }
        for (sat, total) in per_sat {
            if total > budget as u64 {
                return Err(SimError::solver(format!(
                    "satellite {sat} allocated {total} frames over budget {budget}"
                )));
            }
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn insert_for_test(&mut self, cell: u32, entry: ServingEntry) {
        self.serving.insert(cell, entry);
    }

    /// CSV dump `slot,cell_id,sat_id,frames,rho_min_bps,per_user_bps`.
    pub fn to_csv(&self, grid: &crate::geodata::CellGrid, timing: &TimingConfig) -> String {
        let mut out = String::from("slot,cell_id,sat_id,frames,rho_min_bps,per_user_bps\n");
        for (cell_id, e) in self.iter() {
            let users = grid.cell(cell_id).active_users;
            let per_user = if users > 0.0 {
                timing.frame_fraction() / users * e.frames as f64 * e.rho_min_bps
            } else {
                0.0
            };
            out.push_str(&format!(
                "{},{},{},{},{:.3},{:.3}\n",
                self.slot_index, cell_id, e.sat.flat_id, e.frames, e.rho_min_bps, per_user
            ));
        }
        out
    }
}

/// Weight used by the cell-to-satellite matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// rho_min * (1 - h): handover-aware nearest-rate matching (default).
    PenalizedRate,
    /// rho_min only.
    RawRate,
    /// rho_min * (1 - h) / U_c.
    RatePerUser,
}

/// Matching configuration; ties always break to the lowest flat id.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MatchingConfig {
    pub weight_rule: WeightRule,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig {
            weight_rule: WeightRule::PenalizedRate,
        }
    }
}

/// Which score picks the surviving satellite for a conflicting cell in the
/// adjustment's first phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictRule {
    /// argmax X * rho_min * (1 - h): keep the highest penalized throughput
    /// (default; consistent with the objective).
    PenalizedThroughput,
    /// argmax X * rho_min * h, exactly as printed in the source algorithm
    /// listing; selectable for comparison.
    LiteralPenalty,
}

/// Elementwise round-half-up of a relaxed allocation.
pub fn round_allocation(x: &[f64]) -> Vec<u32> {
    // Values are nonnegative, so round() (half away from zero) is half-up.
    x.iter().map(|&v| v.round().max(0.0) as u32).collect()
}

/// Outcome counters of the adjustment pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdjustOutcome {
    pub conflicts_resolved: usize,
    pub trims: usize,
}

/// Feasibility adjustment: resolve multi-server cells, then trim satellite
/// budgets. Never increases an entry and never creates a new pair.
///
/// Phase 1 keeps, per conflicting cell, the satellite maximizing the
/// configured score and zeroes the rest. Phase 2 decrements, per satellite
/// over budget, the entry with the largest overshoot `X - x_relaxed` until
/// the budget holds. Ties break to the lowest satellite/cell id.
pub fn adjust_allocation(
    inst: &Instance,
    frames: &mut [u32],
    relaxed: &[f64],
    rule: ConflictRule,
) -> AdjustOutcome {
    let mut outcome = AdjustOutcome::default();

    // Phase 1: single-server constraint.
    for pair_ids in &inst.cell_pairs {
        let positive = pair_ids.iter().filter(|&&pi| frames[pi] > 0).count();
        if positive <= 1 {
            continue;
        }
        outcome.conflicts_resolved += 1;
        let mut best_pi = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for &pi in pair_ids {
            if frames[pi] == 0 {
                continue;
            }
            let p = &inst.pairs[pi];
            let score = match rule {
                ConflictRule::PenalizedThroughput => {
                    frames[pi] as f64 * p.rho_min_bps * (1.0 - p.penalty)
                }
                ConflictRule::LiteralPenalty => frames[pi] as f64 * p.rho_min_bps * p.penalty,
            };
            // Strict inequality keeps the earliest (lowest flat id) on ties.
            if score > best_score {
                best_score = score;
                best_pi = pi;
            }
        }
        for &pi in pair_ids {
            if pi != best_pi {
                frames[pi] = 0;
            }
        }
    }

    // Phase 2: per-satellite budgets.
    let budget = inst.sat_budget.round() as u64;
    for range in &inst.sat_ranges {
        let mut total: u64 = frames[range.clone()].iter().map(|&f| f as u64).sum();
        while total > budget {
            let mut best_pi = usize::MAX;
            let mut best_overshoot = f64::NEG_INFINITY;
            for pi in range.clone() {
                if frames[pi] == 0 {
                    continue;
                }
                let overshoot = frames[pi] as f64 - relaxed[pi];
                if overshoot > best_overshoot {
                    best_overshoot = overshoot;
                    best_pi = pi;
                }
            }
            if best_pi == usize::MAX {
                break; // nothing left to trim
            }
            frames[best_pi] -= 1;
            total -= 1;
            outcome.trims += 1;
        }
    }

    outcome
}

/// Assemble the validated matrix from pair-aligned frames. Requires the
/// single-server constraint to hold already (post-adjustment).
pub fn build_matrix(inst: &Instance, frames: &[u32]) -> Result<AllocationMatrix, SimError> {
    let mut matrix = AllocationMatrix::empty(inst.slot_index);
    for (pi, p) in inst.pairs.iter().enumerate() {
        if frames[pi] == 0 {
            continue;
        }
        let cell_id = inst.cells[p.cell].cell_id;
        let entry = ServingEntry {
            sat: inst.sats[p.sat],
            frames: frames[pi],
            rho_min_bps: p.rho_min_bps,
        };
        if matrix.serving.insert(cell_id, entry).is_some() {
            return Err(SimError::solver(format!(
                "cell {cell_id} still served by multiple satellites after adjustment"
            )));
        }
    }
    Ok(matrix)
}

/// Diagnostics of one global allocation.
#[derive(Debug, Clone, Default)]
pub struct GlobalDiagnostics {
    /// Relaxed objective after each reweighting iteration.
    pub iteration_objectives: Vec<f64>,
    pub kkt_residuals: Vec<f64>,
    pub solver_steps: Vec<u32>,
    pub converged: bool,
    /// Cells served by more than one satellite after rounding, before the
    /// adjustment.
    pub conflicting_cells_pre_adjust: usize,
    pub uncovered_cells: usize,
    pub trims: usize,
}

/// Global reweighted-l1 allocation: `n_iter` rounds of (solve relaxed
/// problem, update weights w = beta/(tau + x)), then round and adjust.
pub fn global_allocate(
    inst: &Instance,
    cfg: &SolverConfig,
    rule: ConflictRule,
) -> Result<(AllocationMatrix, GlobalDiagnostics), SimError> {
    let n = inst.pairs.len();
    let mut weights = vec![0.0; n];
    let mut diag = GlobalDiagnostics {
        uncovered_cells: inst.uncovered_cells.len(),
        converged: true,
        ..Default::default()
    };
    let mut relaxed = vec![0.0; n];
    let mut warm: Option<Vec<f64>> = None;
    for _ in 0..cfg.n_iter {
        let sol = solve_relaxed_global(inst, &weights, warm.as_deref(), cfg)?;
        diag.iteration_objectives.push(sol.objective);
        diag.kkt_residuals.push(sol.kkt_residual);
        diag.solver_steps.push(sol.steps);
        diag.converged &= sol.converged;
        relaxed = sol.values;
        reweight(&relaxed, cfg.beta, cfg.tau, &mut weights);
        warm = Some(relaxed.clone());
    }

    let mut frames = round_allocation(&relaxed);
    let pair_cells: Vec<usize> = inst.pairs.iter().map(|p| p.cell).collect();
    diag.conflicting_cells_pre_adjust =
        count_conflicts(&pair_cells, &frames, inst.cells.len());
    let outcome = adjust_allocation(inst, &mut frames, &relaxed, rule);
    diag.trims = outcome.trims;
    let matrix = build_matrix(inst, &frames)?;
    Ok((matrix, diag))
}

/// Match every covered cell to the satellite maximizing the configured
/// weight. Returns, per dense cell, the chosen pair index.
pub fn match_cells(inst: &Instance, cfg: &MatchingConfig) -> Vec<Option<usize>> {
    let mut chosen = vec![None; inst.cells.len()];
    for (ci, pair_ids) in inst.cell_pairs.iter().enumerate() {
        let users = inst.cells[ci].users;
        let mut best_pi = None;
        let mut best_w = f64::NEG_INFINITY;
        for &pi in pair_ids {
            let p = &inst.pairs[pi];
            let w = match cfg.weight_rule {
                WeightRule::PenalizedRate => p.rho_min_bps * (1.0 - p.penalty),
                WeightRule::RawRate => p.rho_min_bps,
                WeightRule::RatePerUser => p.rho_min_bps * (1.0 - p.penalty) / users,
            };
            // Pairs are satellite-ordered, so strict improvement keeps the
            // lowest flat id on ties.
            if w > best_w {
                best_w = w;
                best_pi = Some(pi);
            }
        }
        chosen[ci] = best_pi;
    }
    chosen
}

/// Diagnostics of one distributed allocation.
#[derive(Debug, Clone, Default)]
pub struct DistributedDiagnostics {
    pub uncovered_cells: usize,
    pub trims: usize,
}

/// Distributed baseline: match cells to satellites, solve each satellite's
/// local problem in closed form, round, and adjust (only the budget phase
/// can trigger; the matching guarantees no conflicts).
pub fn distributed_allocate(
    inst: &Instance,
    matching: &MatchingConfig,
) -> Result<(AllocationMatrix, DistributedDiagnostics), SimError> {
    let chosen = match_cells(inst, matching);
    let n = inst.pairs.len();
    let mut relaxed = vec![0.0; n];

    for (s_idx, range) in inst.sat_ranges.iter().enumerate() {
        // Matched pairs of this satellite, in pair (cell) order.
        let matched: Vec<usize> = chosen
            .iter()
            .flatten()
            .copied()
            .filter(|&pi| inst.pairs[pi].sat == s_idx && range.contains(&pi))
            .collect();
        if matched.is_empty() {
            continue;
        }
        let users: Vec<f64> = matched
            .iter()
            .map(|&pi| inst.cells[inst.pairs[pi].cell].users)
            .collect();
        let x = solve_local(&users, inst.frame_cap, inst.sat_budget);
        for (&pi, &xv) in matched.iter().zip(&x) {
            relaxed[pi] = xv;
        }
    }

    let mut frames = round_allocation(&relaxed);
    let outcome = adjust_allocation(inst, &mut frames, &relaxed, ConflictRule::PenalizedThroughput);
    debug_assert_eq!(outcome.conflicts_resolved, 0, "matching produced a conflict");
    let matrix = build_matrix(inst, &frames)?;
    Ok((
        matrix,
        DistributedDiagnostics {
            uncovered_cells: inst.uncovered_cells.len(),
            trims: outcome.trims,
        },
    ))
}
