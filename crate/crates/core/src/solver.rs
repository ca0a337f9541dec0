//! Relaxed concave allocation solvers.
//!
//! `solve_relaxed_global` maximizes the weighted log-utility objective
//!
//! ```text
//!   sum_c U_c ln( sum_s R(s,c) (1 - h(s,c)) )  -  sum_{s,c} w(s,c) x(s,c)
//! ```
//!
//! over `0 <= x <= N_T` per pair and `sum_c x(s,c) <= N_T N_B` per satellite,
//! by projected gradient ascent with Barzilai-Borwein steps, a backtracking
//! line search, and an exact per-satellite projection. First-order optimality
//! is certified by `kkt_residual`.
//!
//! Internally the ascent runs in coordinates scaled by sqrt(U_c), which makes
//! the objective curvature roughly uniform across cells; the projection then
//! carries per-coordinate weights. Reported values, gradients, and KKT
//! residuals are always in the original frame units.
//!
//! `solve_local` solves one satellite's log-utility problem in closed form
//! (capped water-filling).

use serde::{Deserialize, Serialize};

use crate::allocator::AllocationMatrix;
use crate::error::SimError;
use crate::geodata::CellGrid;
use crate::linkbudget::{handover_penalty, HandoverModel, RateTable, TimingConfig};
use crate::orbital::SatelliteId;

/// Per-user rates below this floor are clamped inside objective evaluation
/// so the line search stays finite; the optimum of a served cell is interior
/// and never touches the floor.
pub const RATE_FLOOR_BPS: f64 = 1e-12;

/// Step-length rule for the projected gradient ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Fixed step `pg_fixed_step`, no line search.
    Fixed,
    /// Barzilai-Borwein trial step with Armijo backtracking (default); the
    /// objective is non-decreasing across iterations under this rule.
    Backtracking,
}

/// Solver parameters (reweighting and inner projected-gradient loop).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Reweighting numerator beta in w = beta / (tau + x).
    pub beta: f64,
    /// Reweighting offset tau (frames).
    pub tau: f64,
    /// Reweighting iterations.
    pub n_iter: u32,
    pub pg_max_steps: u32,
    /// KKT residual threshold for convergence.
    pub pg_tolerance: f64,
    pub pg_step_rule: StepRule,
    pub pg_fixed_step: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.beta < 0.0 {
            return Err(SimError::config("solver: beta must be >= 0"));
        }
        if !(self.tau > 0.0) {
            return Err(SimError::config("solver: tau must be > 0"));
        }
        if self.n_iter == 0 {
            return Err(SimError::config("solver: n_iter must be >= 1"));
        }
        if !(self.pg_tolerance > 0.0) {
            return Err(SimError::config("solver: pg_tolerance must be > 0"));
        }
        if self.pg_max_steps == 0 {
            return Err(SimError::config("solver: pg_max_steps must be >= 1"));
        }
        Ok(())
    }
}

/// One satellite-cell pair of the relaxed problem.
#[derive(Debug, Clone, Copy)]
pub struct Pair {
    /// Index into `Instance::sats`.
    pub sat: usize,
    /// Dense index into `Instance::cells`.
    pub cell: usize,
    pub rho_min_bps: f64,
    /// Handover penalty h(s,c) in [0, 1).
    pub penalty: f64,
    /// Per-frame contribution to the cell's per-user rate:
    /// (T_F / (T U_c)) rho_min (1 - h).
    pub gain: f64,
}

/// A populated, covered cell of the instance.
#[derive(Debug, Clone, Copy)]
pub struct InstanceCell {
    pub cell_id: u32,
    pub users: f64,
}

/// One slot's relaxed allocation problem over visible pairs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub slot_index: usize,
    pub sats: Vec<SatelliteId>,
    pub cells: Vec<InstanceCell>,
    /// Sorted by (sat, cell); contiguous per satellite.
    pub pairs: Vec<Pair>,
    /// Pair range of each satellite.
    pub sat_ranges: Vec<std::ops::Range<usize>>,
    /// Pair indices of each dense cell.
    pub cell_pairs: Vec<Vec<usize>>,
    /// Per-pair frame cap N_T.
    pub frame_cap: f64,
    /// Per-satellite frame budget N_T * N_B.
    pub sat_budget: f64,
    /// Populated cells with no positive-rate visible pair, dropped from the
    /// objective and reported in diagnostics.
    pub uncovered_cells: Vec<u32>,
    pub total_users: f64,
}

impl Instance {
    /// Assemble the slot instance from the rate table, the grid, and the
    /// previous allocation (handover penalties). With `prev = None` (first
    /// slot) all penalties are zero.
    pub fn build(
        rates: &RateTable,
        grid: &CellGrid,
        prev: Option<&AllocationMatrix>,
        model: &HandoverModel,
        timing: &TimingConfig,
    ) -> Result<Instance, SimError> {
        model.validate()?;
        timing.validate()?;
        let frame_fraction = timing.frame_fraction();

        // Dense-index the populated cells that appear in at least one pair.
        let mut covered = vec![false; grid.cell_count()];
        for entries in &rates.entries {
            for e in entries {
                if e.rho_min_bps > 0.0 {
                    covered[e.cell_id as usize] = true;
                }
            }
        }
        let mut dense_of = vec![usize::MAX; grid.cell_count()];
        let mut cells = Vec::new();
        let mut uncovered = Vec::new();
        let mut total_users = 0.0;
        for &cell_id in grid.populated_ids() {
            let users = grid.cell(cell_id).active_users;
            total_users += users;
            if covered[cell_id as usize] {
                dense_of[cell_id as usize] = cells.len();
                cells.push(InstanceCell { cell_id, users });
            } else {
                uncovered.push(cell_id);
            }
        }

        let mut pairs = Vec::with_capacity(rates.pair_count());
        let mut sat_ranges = Vec::with_capacity(rates.sats.len());
        for (s_idx, (sat, entries)) in rates.sats.iter().zip(&rates.entries).enumerate() {
            let start = pairs.len();
            for e in entries {
                if e.rho_min_bps <= 0.0 {
                    continue;
                }
                let dense = dense_of[e.cell_id as usize];
                if dense == usize::MAX {
                    continue;
                }
                let users = cells[dense].users;
                let prev_frames = prev
                    .map(|m| m.frames_for(sat.flat_id, e.cell_id))
                    .unwrap_or(0);
                let penalty = match prev {
                    Some(_) => handover_penalty(prev_frames, model),
                    None => 0.0,
                };
                let gain = frame_fraction / users * e.rho_min_bps * (1.0 - penalty);
                pairs.push(Pair {
                    sat: s_idx,
                    cell: dense,
                    rho_min_bps: e.rho_min_bps,
                    penalty,
                    gain,
                });
            }
            sat_ranges.push(start..pairs.len());
        }

        let mut cell_pairs = vec![Vec::new(); cells.len()];
        for (pi, p) in pairs.iter().enumerate() {
            cell_pairs[p.cell].push(pi);
        }

        Ok(Instance {
            slot_index: rates.slot_index,
            sats: rates.sats.clone(),
            cells,
            pairs,
            sat_ranges,
            cell_pairs,
            frame_cap: timing.frames_per_slot() as f64,
            sat_budget: timing.satellite_frame_budget() as f64,
            uncovered_cells: uncovered,
            total_users,
        })
    }

    /// Build an instance directly from parts (tests, toy problems).
    /// `raw_pairs` entries are (sat, cell, rho_min, penalty).
    pub fn from_parts(
        sat_count: usize,
        users: &[f64],
        raw_pairs: &[(usize, usize, f64, f64)],
        frame_cap: f64,
        sat_budget: f64,
        frame_fraction: f64,
    ) -> Instance {
        let sats: Vec<SatelliteId> = (0..sat_count)
            .map(|i| SatelliteId {
                plane_index: 0,
                in_plane_index: i as u32,
                flat_id: i as u32,
            })
            .collect();
        let cells: Vec<InstanceCell> = users
            .iter()
            .enumerate()
            .map(|(i, &u)| InstanceCell {
                cell_id: i as u32,
                users: u,
            })
            .collect();
        let mut sorted: Vec<&(usize, usize, f64, f64)> = raw_pairs.iter().collect();
        sorted.sort_by_key(|p| (p.0, p.1));
        let mut pairs = Vec::with_capacity(sorted.len());
        let mut sat_ranges = Vec::with_capacity(sat_count);
        let mut idx = 0;
        for s in 0..sat_count {
            let start = idx;
            while idx < sorted.len() && sorted[idx].0 == s {
                let &&(sat, cell, rho, penalty) = &sorted[idx];
                pairs.push(Pair {
                    sat,
                    cell,
                    rho_min_bps: rho,
                    penalty,
                    gain: frame_fraction / users[cell] * rho * (1.0 - penalty),
                });
                idx += 1;
            }
            sat_ranges.push(start..idx);
        }
        let mut cell_pairs = vec![Vec::new(); cells.len()];
        for (pi, p) in pairs.iter().enumerate() {
            cell_pairs[p.cell].push(pi);
        }
        let total_users = users.iter().sum();
        Instance {
            slot_index: 0,
            sats,
            cells,
            pairs,
            sat_ranges,
            cell_pairs,
            frame_cap,
            sat_budget,
            uncovered_cells: Vec::new(),
            total_users,
        }
    }

    /// Per-user rate of every cell under allocation `x` (pair-aligned).
    pub fn cell_rates(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.resize(self.cells.len(), 0.0);
        for (p, &xv) in self.pairs.iter().zip(x) {
            z[p.cell] += p.gain * xv;
        }
    }
}

/// Result of one relaxed solve.
#[derive(Debug, Clone)]
pub struct RelaxedAllocation {
    /// Pair-aligned x values in frames.
    pub values: Vec<f64>,
    /// Natural-log objective at `values`.
    pub objective: f64,
    pub kkt_residual: f64,
    /// False when `pg_max_steps` ran out before the residual hit tolerance.
    pub converged: bool,
    pub steps: u32,
}

/// Objective of the relaxed problem at `x` (original coordinates).
pub fn objective(inst: &Instance, weights: &[f64], x: &[f64]) -> f64 {
    let mut z = Vec::new();
    inst.cell_rates(x, &mut z);
    let mut total = 0.0;
    for (cell, &zc) in inst.cells.iter().zip(&z) {
        total += cell.users * zc.max(RATE_FLOOR_BPS).ln();
    }
    for (&w, &xv) in weights.iter().zip(x) {
        total -= w * xv;
    }
    total
}

/// Analytic gradient of `objective` at `x`, written into `grad`.
pub fn gradient(inst: &Instance, weights: &[f64], x: &[f64], grad: &mut Vec<f64>) {
    let mut z = Vec::new();
    inst.cell_rates(x, &mut z);
    gradient_with_rates(inst, weights, &z, grad);
}

fn gradient_with_rates(inst: &Instance, weights: &[f64], z: &[f64], grad: &mut Vec<f64>) {
    grad.clear();
    grad.resize(inst.pairs.len(), 0.0);
    for (pi, p) in inst.pairs.iter().enumerate() {
        let zc = z[p.cell].max(RATE_FLOOR_BPS);
        grad[pi] = inst.cells[p.cell].users * p.gain / zc - weights[pi];
    }
}

/// First-order optimality residual of a feasible point.
///
/// Per satellite, a budget multiplier lambda >= 0 is fitted to minimize the
/// worst violation of the stationarity conditions: interior coordinates need
/// |grad - lambda| = 0, coordinates at zero need grad <= lambda, coordinates
/// at the cap need grad >= lambda, and lambda must be 0 when the budget is
/// slack. Returns the maximum violation over all coordinates.
pub fn kkt_residual(inst: &Instance, x: &[f64], grad: &[f64]) -> f64 {
    let cap = inst.frame_cap;
    let tol_x = 1e-9 * cap.max(1.0);
    let mut worst = 0.0f64;
    for range in &inst.sat_ranges {
        if range.is_empty() {
            continue;
        }
        let xs = &x[range.clone()];
        let gs = &grad[range.clone()];
        let sum: f64 = xs.iter().sum();
        let budget_active = sum >= inst.sat_budget - 1e-9 * inst.sat_budget.max(1.0);

        let mut up_max = f64::NEG_INFINITY; // grads that lambda must dominate
        let mut down_min = f64::INFINITY; // grads that must dominate lambda
        for (&xv, &gv) in xs.iter().zip(gs) {
            let at_lo = xv <= tol_x;
            let at_hi = xv >= cap - tol_x;
            if at_lo {
                up_max = up_max.max(gv);
            } else if at_hi {
                down_min = down_min.min(gv);
            } else {
                up_max = up_max.max(gv);
                down_min = down_min.min(gv);
            }
        }
        let lambda = if !budget_active {
            0.0
        } else {
            match (up_max.is_finite(), down_min.is_finite()) {
                (true, true) => (0.5 * (up_max + down_min)).max(0.0),
                (true, false) => up_max.max(0.0),
                (false, true) => down_min.max(0.0),
                (false, false) => 0.0,
            }
        };
        let mut v = 0.0f64;
        if up_max.is_finite() {
            v = v.max(up_max - lambda);
        }
        if down_min.is_finite() {
            v = v.max(lambda - down_min);
        }
        worst = worst.max(v);
    }
    worst
}

/// Exact Euclidean projection (with per-coordinate weights) onto
/// `{x : 0 <= x_i <= cap_i, sum_i a_i x_i <= budget}`, `a_i > 0`.
///
/// With unit weights this is the plain box-plus-budget projection. The
/// active-budget case solves `x_i = clamp(y_i - lambda a_i, 0, cap_i)` for
/// the exact lambda by a breakpoint sweep in O(n log n).
pub fn project_weighted_box_budget(x: &mut [f64], caps: &[f64], a: &[f64], budget: f64) {
    debug_assert_eq!(x.len(), caps.len());
    debug_assert_eq!(x.len(), a.len());
    let mut weighted_sum = 0.0;
    for ((v, &cap), &ai) in x.iter().zip(caps).zip(a) {
        weighted_sum += ai * v.clamp(0.0, cap);
    }
    if weighted_sum <= budget + 1e-9 * budget.max(1.0) {
        for (v, &cap) in x.iter_mut().zip(caps) {
            *v = v.clamp(0.0, cap);
        }
        return;
    }

    // Events along increasing lambda: a capped coordinate becomes free at
    // lambda = (y - cap)/a, a free coordinate reaches zero at lambda = y/a.
    // Between events the weighted sum is cap_part + sum_ay - lambda*sum_a2.
    #[derive(Clone, Copy)]
    struct Ev {
        lambda: f64,
        // +1: capped -> free (adds y to the free pool);
        // -1: free -> zero (removes y from the free pool).
        kind: i8,
        idx: usize,
    }
    let mut events: Vec<Ev> = Vec::with_capacity(2 * x.len());
    let mut cap_part = 0.0; // sum of a_i * cap_i over currently capped coords
    let mut sum_ay = 0.0; // sum of a_i * y_i over currently free coords
    let mut sum_a2 = 0.0; // sum of a_i^2 over currently free coords
    for (i, ((&y, &cap), &ai)) in x.iter().zip(caps).zip(a).enumerate() {
        if y <= 0.0 {
            continue; // zero at lambda = 0 and stays zero
        }
        if y >= cap {
            cap_part += ai * cap;
            events.push(Ev {
                lambda: (y - cap) / ai,
                kind: 1,
                idx: i,
            });
        } else {
            sum_ay += ai * y;
            sum_a2 += ai * ai;
        }
        events.push(Ev {
            lambda: y / ai,
            kind: -1,
            idx: i,
        });
    }
    events.sort_by(|p, q| {
        p.lambda
            .partial_cmp(&q.lambda)
            .unwrap()
            .then(p.kind.cmp(&q.kind))
    });

    let mut lambda_lo = 0.0f64;
    let mut lambda_star = None;
    for ev in &events {
        let lambda_hi = ev.lambda.max(lambda_lo);
        if sum_a2 > 0.0 {
            let cand = (cap_part + sum_ay - budget) / sum_a2;
            if cand >= lambda_lo - 1e-12 && cand <= lambda_hi + 1e-12 {
                lambda_star = Some(cand.max(0.0));
                break;
            }
        }
        match ev.kind {
            1 => {
                cap_part -= a[ev.idx] * caps[ev.idx];
                sum_ay += a[ev.idx] * x[ev.idx];
                sum_a2 += a[ev.idx] * a[ev.idx];
            }
            _ => {
                sum_ay -= a[ev.idx] * x[ev.idx];
                sum_a2 -= a[ev.idx] * a[ev.idx];
            }
        }
        lambda_lo = lambda_hi;
    }
    let lambda = lambda_star.unwrap_or(lambda_lo);
    for ((v, &cap), &ai) in x.iter_mut().zip(caps).zip(a) {
        *v = (*v - lambda * ai).clamp(0.0, cap);
    }
}

/// Plain Euclidean projection onto `{0 <= x <= cap, sum x <= budget}`.
pub fn project_box_budget(x: &mut [f64], cap: f64, budget: f64) {
    let caps = vec![cap; x.len()];
    let ones = vec![1.0; x.len()];
    project_weighted_box_budget(x, &caps, &ones, budget);
}

/// Reweighting update w = beta / (tau + x), elementwise.
pub fn reweight(values: &[f64], beta: f64, tau: f64, weights: &mut [f64]) {
    for (w, &v) in weights.iter_mut().zip(values) {
        *w = beta / (tau + v);
    }
}

/// Drive the strictly-interior support (pairs with 0 < x < cap) toward a
/// forest by pushing flow around support cycles until an edge hits a bound.
///
/// The satellite/cell incidence graph of interior pairs is bipartite; around
/// any cycle a push can keep every cell's rate exact (frame amounts convert
/// at gain ratios at each cell) and every satellite's load exact except one
/// root, whose load is made non-increasing by choosing the push direction.
/// Each pivot therefore stays feasible, leaves the objective's log terms
/// untouched, and retires at least one edge; when no cycle remains, the
/// number of multi-served cells is bounded by the satellite count plus the
/// cap-saturated cells, which is the sparsity an exact solver's unique
/// optimum exhibits.
///
/// Moves that would increase the weighted-l1 cost are skipped. Returns the
/// number of pivots applied.
fn pivot_cycles(inst: &Instance, weights: &[f64], x: &mut [f64]) -> usize {
    const ACTIVE: f64 = 1e-9;
    let n_sat = inst.sats.len();
    let n_nodes = n_sat + inst.cells.len();
    let mut excluded: std::collections::HashSet<usize> = Default::default();
    let mut pivots = 0usize;

    // Each round builds one spanning forest and pushes every non-tree edge's
    // cycle in turn (with live stocks); rounds repeat until no cycle moves.
    'outer: for _round in 0..64 {
        let interior =
            |pi: usize, x: &[f64]| x[pi] > ACTIVE && x[pi] < inst.frame_cap - ACTIVE;
        let candidates: Vec<usize> = (0..inst.pairs.len())
            .filter(|&pi| !excluded.contains(&pi) && interior(pi, x))
            .collect();

        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_nodes];
        for &pi in &candidates {
            let p = &inst.pairs[pi];
            adj[p.sat].push((pi, n_sat + p.cell));
            adj[n_sat + p.cell].push((pi, p.sat));
        }

        // BFS forest.
        let mut visited = vec![false; n_nodes];
        let mut parent = vec![usize::MAX; n_nodes];
        let mut tree_edge = vec![usize::MAX; n_nodes];
        let mut depth = vec![0usize; n_nodes];
        let mut queue = std::collections::VecDeque::new();
        for start in 0..n_nodes {
            if visited[start] || adj[start].is_empty() {
                continue;
            }
            visited[start] = true;
            queue.push_back(start);
            while let Some(node) = queue.pop_front() {
                for &(e, other) in &adj[node] {
                    if !visited[other] {
                        visited[other] = true;
                        parent[other] = node;
                        tree_edge[other] = e;
                        depth[other] = depth[node] + 1;
                        queue.push_back(other);
                    }
                }
            }
        }

        let mut moved_this_round = 0usize;
        for &pi in &candidates {
            let p = &inst.pairs[pi];
            if tree_edge[p.sat] == pi || tree_edge[n_sat + p.cell] == pi || !interior(pi, x) {
                continue;
            }
            if pivots >= 50_000 {
                break 'outer;
            }
            if pivot_one_cycle(
                inst, weights, x, pi, p.sat, n_sat + p.cell, n_sat, &parent, &tree_edge, &depth,
                &mut excluded,
            ) {
                pivots += 1;
                moved_this_round += 1;
            }
        }
        if moved_this_round == 0 {
            break;
        }
    }
    pivots
}

/// Push one cycle (closing edge + tree paths) and return whether it moved.
#[allow(clippy::too_many_arguments)]
fn pivot_one_cycle(
    inst: &Instance,
    weights: &[f64],
    x: &mut [f64],
    closing_edge: usize,
    mut u: usize,
    mut v: usize,
    n_sat: usize,
    parent: &[usize],
    tree_edge: &[usize],
    depth: &[usize],
    excluded: &mut std::collections::HashSet<usize>,
) -> bool {
    const ACTIVE: f64 = 1e-9;
    {
        // Tree edges must still be usable: a previous push in this round may
        // have driven one to a bound, invalidating paths through it. Walk the
        // candidate cycle first and bail early if any leg is at a bound.
        let within = |pi: usize| x[pi] > ACTIVE && x[pi] < inst.frame_cap - ACTIVE;
        let (mut a, mut b) = (u, v);
        while depth[a] > depth[b] {
            if !within(tree_edge[a]) {
                return false;
            }
            a = parent[a];
        }
        while depth[b] > depth[a] {
            if !within(tree_edge[b]) {
                return false;
            }
            b = parent[b];
        }
        while a != b {
            if !within(tree_edge[a]) || !within(tree_edge[b]) {
                return false;
            }
            a = parent[a];
            b = parent[b];
        }
    }

    // Cycle = closing edge + tree paths to the lowest common ancestor.
        let mut path_u: Vec<(usize, usize)> = vec![(u, usize::MAX)];
        let mut path_v: Vec<(usize, usize)> = vec![(v, usize::MAX)];
        while depth[u] > depth[v] {
            path_u.last_mut().unwrap().1 = tree_edge[u];
            u = parent[u];
            path_u.push((u, usize::MAX));
        }
        while depth[v] > depth[u] {
            path_v.last_mut().unwrap().1 = tree_edge[v];
            v = parent[v];
            path_v.push((v, usize::MAX));
        }
        while u != v {
            path_u.last_mut().unwrap().1 = tree_edge[u];
            u = parent[u];
            path_u.push((u, usize::MAX));
            path_v.last_mut().unwrap().1 = tree_edge[v];
            v = parent[v];
            path_v.push((v, usize::MAX));
        }
        // Closed loop: u-side down to the lca, v-side back up, closing edge.
        let mut loop_nodes: Vec<usize> = path_u.iter().map(|&(n, _)| n).collect();
        let mut loop_edges: Vec<usize> = path_u.iter().filter_map(|&(_, e)| (e != usize::MAX).then_some(e)).collect();
        for &(n, e) in path_v.iter().rev() {
            if e != usize::MAX {
                loop_edges.push(e);
            }
            if n != *loop_nodes.last().unwrap() {
                loop_nodes.push(n);
            }
        }
        loop_edges.push(closing_edge);
        let m = loop_nodes.len();
        debug_assert_eq!(loop_edges.len(), m);

        // Rotate so the loop starts at a satellite (the imbalance root).
        let k0 = loop_nodes.iter().position(|&n| n < n_sat).expect("bipartite cycle");
        loop_nodes.rotate_left(k0);
        loop_edges.rotate_left(k0);

        // Frame coefficients around the loop: exact rate balance at cells,
        // exact load balance at non-root satellites.
        let coeffs = |nodes: &[usize], edges: &[usize]| -> Option<Vec<f64>> {
            let mut c = vec![1.0f64; m];
            for k in 1..m {
                c[k] = if nodes[k] >= n_sat {
                    let prev = inst.pairs[edges[k - 1]].gain;
                    let cur = inst.pairs[edges[k]].gain;
                    c[k - 1] * prev / cur
                } else {
                    c[k - 1]
                };
                if !c[k].is_finite() || c[k] > 1e9 || c[k] < 1e-9 {
                    return None;
                }
            }
            Some(c)
        };
        let forward = coeffs(&loop_nodes, &loop_edges);
        let (nodes, edges, c) = match forward {
            Some(c) if c[m - 1] >= 1.0 => (loop_nodes, loop_edges, c),
            _ => {
                // Reverse direction: root stays, everything else flips.
                let mut rn = loop_nodes.clone();
                let mut re = loop_edges.clone();
                rn[1..].reverse();
                re.reverse();
                match coeffs(&rn, &re) {
                    Some(c) if c[m - 1] >= 1.0 - 1e-12 => (rn, re, c),
                    _ => {
                        excluded.insert(closing_edge);
                        return false;
                    }
                }
            }
        };

        // Edge k adds frames when leaving a satellite node, removes when
        // leaving a cell node; the step keeps every edge inside its box.
        let mut delta = f64::INFINITY;
        let mut weight_slope = 0.0;
        for k in 0..m {
            let e = edges[k];
            if nodes[k] < n_sat {
                delta = delta.min((inst.frame_cap - x[e]) / c[k]);
                weight_slope -= weights[e] * c[k];
            } else {
                delta = delta.min(x[e] / c[k]);
                weight_slope += weights[e] * c[k];
            }
        }
        let wmag: f64 = edges.iter().zip(&c).map(|(&e, &ck)| weights[e] * ck).sum();
        if !(delta > 1e-9) || weight_slope < -1e-12 * (wmag.abs() + 1.0) {
            excluded.insert(closing_edge);
            return false;
        }
        for k in 0..m {
            let e = edges[k];
            if nodes[k] < n_sat {
                x[e] += c[k] * delta;
            } else {
                x[e] -= c[k] * delta;
            }
        }
        true
}

/// Move multi-served cells' mass onto their best pair without changing any
/// cell's rate: frames convert at the gain ratio (the better pair needs
/// fewer), so every move keeps all z_c exact, frees satellite capacity, and
/// never decreases the objective (moves that would raise the weighted-l1
/// cost are skipped). Among equal-objective near-optimal points this selects
/// a sparse one, the same tie-break an exact solver's unique optimum has.
///
/// Returns the number of moves applied.
fn consolidate_ties(inst: &Instance, weights: &[f64], x: &mut [f64]) -> usize {
    const ACTIVE: f64 = 1e-9;
    let mut totals: Vec<f64> = inst
        .sat_ranges
        .iter()
        .map(|r| x[r.clone()].iter().sum())
        .collect();
    let mut moves = 0;
    for pair_ids in &inst.cell_pairs {
        let active = pair_ids.iter().filter(|&&pi| x[pi] > ACTIVE).count();
        if active < 2 {
            continue;
        }
        // Receiver: highest gain; ties break to the lowest pair index
        // (lowest satellite id, since pairs are satellite-ordered).
        let mut best = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for &pi in pair_ids {
            if x[pi] > ACTIVE && inst.pairs[pi].gain > best_gain {
                best_gain = inst.pairs[pi].gain;
                best = pi;
            }
        }
        if best == usize::MAX || best_gain <= 0.0 {
            continue;
        }
        let recv_sat = inst.pairs[best].sat;
        for &pi in pair_ids {
            if pi == best || x[pi] <= ACTIVE {
                continue;
            }
            let donor_gain = inst.pairs[pi].gain;
            if donor_gain <= 0.0 {
                continue;
            }
            let slack = inst.sat_budget - totals[recv_sat];
            let room = inst.frame_cap - x[best];
            let recv = (x[pi] * donor_gain / best_gain).min(room).min(slack);
            if recv <= 1e-12 {
                continue;
            }
            let donate = recv * best_gain / donor_gain;
            // Objective delta is only the weighted-l1 term (z is unchanged).
            let delta = weights[pi] * donate - weights[best] * recv;
            if delta < -1e-12 {
                continue;
            }
            x[best] += recv;
            x[pi] -= donate;
            totals[recv_sat] += recv;
            totals[inst.pairs[pi].sat] -= donate;
            moves += 1;
        }
    }
    moves
}

/// Solve the relaxed global problem for one slot.
///
/// Returns a feasible point with KKT residual <= `pg_tolerance`, or the best
/// iterate with `converged = false` when `pg_max_steps` runs out.
pub fn solve_relaxed_global(
    inst: &Instance,
    weights: &[f64],
    warm_start: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<RelaxedAllocation, SimError> {
    cfg.validate()?;
    if inst.sat_budget <= 0.0 || inst.frame_cap <= 0.0 {
        return Err(SimError::config("solver: zero frame budget is infeasible"));
    }
    let n = inst.pairs.len();
    if n == 0 {
        return Ok(RelaxedAllocation {
            values: Vec::new(),
            objective: 0.0,
            kkt_residual: 0.0,
            converged: true,
            steps: 0,
        });
    }
    debug_assert_eq!(weights.len(), n);

    // Scaled frame: x = scale * xt with scale = sqrt(U_cell); the curvature
    // of the log terms becomes roughly uniform across cells.
    let scale: Vec<f64> = inst
        .pairs
        .iter()
        .map(|p| inst.cells[p.cell].users.sqrt().max(1e-12))
        .collect();
    let caps_t: Vec<f64> = scale.iter().map(|s| inst.frame_cap / s).collect();

    let project =
        |xt: &mut [f64]| {
            for range in &inst.sat_ranges {
                if !range.is_empty() {
                    project_weighted_box_budget(
                        &mut xt[range.clone()],
                        &caps_t[range.clone()],
                        &scale[range.clone()],
                        inst.sat_budget,
                    );
                }
            }
        };

    // Starting point: warm start when provided, otherwise an even spread of
    // each satellite's budget (keeps every covered cell's rate positive).
    let mut xt: Vec<f64> = match warm_start {
        Some(w) => {
            debug_assert_eq!(w.len(), n);
            w.iter().zip(&scale).map(|(&v, &s)| v / s).collect()
        }
        None => {
            let mut x0 = vec![0.0; n];
            for range in &inst.sat_ranges {
                if range.is_empty() {
                    continue;
                }
                let share = (inst.sat_budget / range.len() as f64).min(inst.frame_cap);
                for v in &mut x0[range.clone()] {
                    *v = share;
                }
            }
            x0.iter().zip(&scale).map(|(&v, &s)| v / s).collect()
        }
    };
    project(&mut xt);

    let to_original = |xt: &[f64]| -> Vec<f64> {
        xt.iter().zip(&scale).map(|(&v, &s)| v * s).collect()
    };

    // Objective with the minimum covered-cell rate; the log barrier keeps the
    // optimum strictly positive on every covered cell, so iterates may be
    // confined above a guard derived from the start point without excluding
    // the optimum. This keeps gradients bounded and the line search sane.
    let evaluate = |x: &[f64], z: &mut Vec<f64>| -> (f64, f64) {
        inst.cell_rates(x, z);
        let mut obj = 0.0;
        let mut min_z = f64::INFINITY;
        for (cell, &zc) in inst.cells.iter().zip(z.iter()) {
            min_z = min_z.min(zc);
            obj += cell.users * zc.max(RATE_FLOOR_BPS).ln();
        }
        for (&w, &xv) in weights.iter().zip(x) {
            obj -= w * xv;
        }
        (obj, min_z)
    };

    let mut x = to_original(&xt);
    let mut z = Vec::new();
    let mut grad = Vec::new();
    let (mut obj, start_min_z) = evaluate(&x, &mut z);
    let z_guard = (start_min_z * 1e-9).max(1e-240);
    gradient_with_rates(inst, weights, &z, &mut grad);

    let mut grad_t: Vec<f64> = grad.iter().zip(&scale).map(|(&g, &s)| g * s).collect();
    let mut kkt = kkt_residual(inst, &x, &grad);

    let mut step = {
        // Conservative first trial: move the largest scaled gradient entry by
        // a tenth of the scaled cap.
        let gmax = grad_t.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let cmax = caps_t.iter().cloned().fold(0.0f64, f64::max);
        if gmax > 0.0 {
            (0.1 * cmax / gmax).clamp(1e-12, 1e12)
        } else {
            1.0
        }
    };

    let mut prev_xt: Vec<f64> = Vec::new();
    let mut prev_grad_t: Vec<f64> = Vec::new();
    let mut steps_taken = 0;
    let mut converged = false;
    let mut consolidation_rounds = 0;

    loop {
        if kkt <= cfg.pg_tolerance {
            // First-order optimality holds; pick the sparse point of the
            // near-optimal set, then let the ascent polish if that moved.
            let moves = consolidate_ties(inst, weights, &mut x)
                + pivot_cycles(inst, weights, &mut x);
            consolidation_rounds += 1;
            if moves == 0 || consolidation_rounds > 16 {
                converged = true;
                break;
            }
            for i in 0..n {
                xt[i] = x[i] / scale[i];
            }
            let (new_obj, _) = evaluate(&x, &mut z);
            obj = new_obj;
            gradient_with_rates(inst, weights, &z, &mut grad);
            for i in 0..n {
                grad_t[i] = grad[i] * scale[i];
            }
            kkt = kkt_residual(inst, &x, &grad);
            // The jump invalidates the secant pair.
            prev_xt.clear();
            prev_grad_t.clear();
            continue;
        }
        if steps_taken >= cfg.pg_max_steps {
            break;
        }
        steps_taken += 1;

        if !prev_xt.is_empty() {
            // Barzilai-Borwein step from the last displacement/curvature pair.
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                let s_i = xt[i] - prev_xt[i];
                let y_i = grad_t[i] - prev_grad_t[i];
                ss += s_i * s_i;
                sy += s_i * y_i;
            }
            if sy < -1e-300 {
                step = (ss / -sy).clamp(1e-12, 1e12);
            } else if ss > 0.0 {
                step = (step * 2.0).min(1e12);
            }
        }
        prev_xt.clone_from(&xt);
        prev_grad_t.clone_from(&grad_t);

        match cfg.pg_step_rule {
            StepRule::Fixed => {
                let mut t = cfg.pg_fixed_step;
                let mut moved = false;
                for _ in 0..60 {
                    let mut trial = xt.clone();
                    for i in 0..n {
                        trial[i] += t * grad_t[i];
                    }
                    project(&mut trial);
                    let trial_x = to_original(&trial);
                    let (trial_obj, trial_min_z) = evaluate(&trial_x, &mut z);
                    if trial_min_z >= z_guard && trial_obj.is_finite() {
                        xt = trial;
                        x = trial_x;
                        obj = trial_obj;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            StepRule::Backtracking => {
                let mut t = step;
                let mut accepted = false;
                for _ in 0..60 {
                    let mut trial = xt.clone();
                    for i in 0..n {
                        trial[i] += t * grad_t[i];
                    }
                    project(&mut trial);
                    let mut ascent = 0.0;
                    for i in 0..n {
                        ascent += grad_t[i] * (trial[i] - xt[i]);
                    }
                    let trial_x = to_original(&trial);
                    let (trial_obj, trial_min_z) = evaluate(&trial_x, &mut z);
                    if trial_min_z >= z_guard
                        && trial_obj.is_finite()
                        && trial_obj >= obj + 1e-4 * ascent.max(0.0)
                    {
                        xt = trial;
                        x = trial_x;
                        obj = trial_obj;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    // Numerically stuck; report the current certificate.
                    break;
                }
            }
        }

        inst.cell_rates(&x, &mut z);
        gradient_with_rates(inst, weights, &z, &mut grad);
        for i in 0..n {
            grad_t[i] = grad[i] * scale[i];
        }
        kkt = kkt_residual(inst, &x, &grad);
    }

    Ok(RelaxedAllocation {
        values: x,
        objective: obj,
        kkt_residual: kkt,
        converged,
        steps: steps_taken,
    })
}

/// Closed-form optimum of one satellite's local problem: maximize
/// `sum_c U_c ln(x_c)`-shaped utility under `0 <= x <= cap` and
/// `sum x <= budget`, by capped water-filling (x_c = min(cap, U_c / lambda)).
///
/// Rates and penalties shift the objective by constants and do not move the
/// argmax; they only matter for the objective value (see `local_objective`).
pub fn solve_local(users: &[f64], cap: f64, budget: f64) -> Vec<f64> {
    let n = users.len();
    if n == 0 {
        return Vec::new();
    }
    let mut x = vec![0.0; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut remaining = budget.min(cap * n as f64);
    // Each round caps every cell whose proportional share exceeds the box and
    // re-splits the remainder; at least one cell leaves per round.
    while !active.is_empty() && remaining > 0.0 {
        let sum_u: f64 = active.iter().map(|&i| users[i]).sum();
        if sum_u <= 0.0 {
            break;
        }
        let mut next = Vec::with_capacity(active.len());
        let mut capped = false;
        for &i in &active {
            let share = remaining * users[i] / sum_u;
            if share >= cap {
                x[i] = cap;
                capped = true;
            } else {
                next.push(i);
            }
        }
        if !capped {
            for &i in &next {
                x[i] = remaining * users[i] / sum_u;
            }
            break;
        }
        remaining = (remaining - cap * (active.len() - next.len()) as f64).max(0.0);
        active = next;
    }
    x
}

/// Objective value of the local problem: sum U_c ln(gain_c * x_c).
pub fn local_objective(users: &[f64], gains: &[f64], x: &[f64]) -> f64 {
    users
        .iter()
        .zip(gains)
        .zip(x)
        .map(|((&u, &g), &xv)| u * (g * xv).max(RATE_FLOOR_BPS).ln())
        .sum()
}

/// Objective of the original integer problem at an integer allocation
/// (pair-aligned frame counts, natural log). Used by oracles and diagnostics.
pub fn integer_objective(inst: &Instance, frames: &[u32]) -> f64 {
    let x: Vec<f64> = frames.iter().map(|&f| f as f64).collect();
    let mut z = Vec::new();
    inst.cell_rates(&x, &mut z);
    inst.cells
        .iter()
        .zip(&z)
        .map(|(c, &zc)| c.users * zc.max(RATE_FLOOR_BPS).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tight(tol: f64) -> SolverConfig {
        SolverConfig {
            beta: 0.0,
            tau: 1.0,
            n_iter: 1,
            pg_max_steps: 20_000,
            pg_tolerance: tol,
            pg_step_rule: StepRule::Backtracking,
            pg_fixed_step: 1.0,
        }
    }

    /// Random small instance with positive users and rates.
    fn random_instance(rng: &mut ChaCha8Rng, sats: usize, cells: usize, cap: f64, beams: f64) -> Instance {
        let users: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.5..20.0)).collect();
        let mut raw = Vec::new();
        for s in 0..sats {
            for c in 0..cells {
                if rng.gen_bool(0.85) {
                    let rho = rng.gen_range(1e6..2e8);
                    let pen = if rng.gen_bool(0.3) { rng.gen_range(0.0..0.5) } else { 0.0 };
                    raw.push((s, c, rho, pen));
                }
            }
        }
        // Guarantee coverage of every cell.
        for c in 0..cells {
            if !raw.iter().any(|p| p.1 == c) {
                raw.push((0, c, 1e7, 0.0));
            }
        }
        Instance::from_parts(sats, &users, &raw, cap, cap * beams, 1e-3)
    }

    #[test]
    fn single_pair_saturates_box() {
        let inst = Instance::from_parts(1, &[2.0], &[(0, 0, 1e8, 0.0)], 100.0, 1000.0, 1e-3);
        let w = vec![0.0];
        let sol = solve_relaxed_global(&inst, &w, None, &tight(1e-9)).unwrap();
        assert!(sol.converged);
        assert!((sol.values[0] - 100.0).abs() < 1e-6, "x = {}", sol.values[0]);
    }

    #[test]
    fn proportional_split_across_two_cells() {
        // One satellite, equal rates, users (3, 1), budget below 2 N_T:
        // stationarity gives x1/x2 = 3.
        let inst = Instance::from_parts(
            1,
            &[3.0, 1.0],
            &[(0, 0, 1e8, 0.0), (0, 1, 1e8, 0.0)],
            100.0,
            80.0,
            1e-3,
        );
        let w = vec![0.0, 0.0];
        let sol = solve_relaxed_global(&inst, &w, None, &tight(1e-9)).unwrap();
        assert!(sol.converged, "kkt {}", sol.kkt_residual);
        assert!((sol.values[0] - 60.0).abs() < 1e-4, "{:?}", sol.values);
        assert!((sol.values[1] - 20.0).abs() < 1e-4, "{:?}", sol.values);
    }

    #[test]
    fn generic_instance_converges_with_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(&mut rng, 2, 2, 50.0, 1.5);
        let w = vec![0.01; inst.pairs.len()];
        let sol = solve_relaxed_global(&inst, &w, None, &tight(1e-6)).unwrap();
        assert!(sol.converged);
        assert!(sol.kkt_residual <= 1e-6);
        // Finite-difference check of the gradient at the solution.
        let mut grad = Vec::new();
        gradient(&inst, &w, &sol.values, &mut grad);
        let fd = fd_gradient(&inst, &w, &sol.values);
        for (g, f) in grad.iter().zip(&fd) {
            let denom = g.abs().max(f.abs()).max(1e-9);
            assert!((g - f).abs() / denom < 1e-4, "grad {g} vs fd {f}");
        }
    }

    fn fd_gradient(inst: &Instance, w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let h = 1e-5 * x[i].abs().max(1.0);
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = objective(inst, w, &xp);
            xp[i] = orig - h;
            let fm = objective(inst, w, &xp);
            xp[i] = orig;
            out.push((fp - fm) / (2.0 * h));
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let inst = random_instance(&mut rng, 3, 4, 20.0, 1.0);
            let w: Vec<f64> = (0..inst.pairs.len()).map(|_| rng.gen_range(0.0..0.1)).collect();
            // Random strictly interior point (positive rates everywhere).
            let x: Vec<f64> = (0..inst.pairs.len()).map(|_| rng.gen_range(0.5..5.0)).collect();
            let mut grad = Vec::new();
            gradient(&inst, &w, &x, &mut grad);
            let fd = fd_gradient(&inst, &w, &x);
            for (g, f) in grad.iter().zip(&fd) {
                let denom = g.abs().max(f.abs()).max(1e-9);
                assert!((g - f).abs() / denom < 1e-5, "grad {g} vs fd {f}");
            }
        }
    }

    #[test]
    fn objective_is_monotone_under_backtracking() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 3, 6, 30.0, 1.2);
        let w = vec![0.02; inst.pairs.len()];
        // Run the solver step by step by limiting pg_max_steps.
        let mut last = f64::NEG_INFINITY;
        for steps in [1, 2, 4, 8, 16, 32, 64] {
            let mut cfg = tight(1e-14);
            cfg.pg_max_steps = steps;
            let sol = solve_relaxed_global(&inst, &w, None, &cfg).unwrap();
            assert!(
                sol.objective >= last - 1e-9 * last.abs().max(1.0),
                "objective decreased: {last} -> {}",
                sol.objective
            );
            last = sol.objective;
        }
    }

    #[test]
    fn kkt_zero_point_with_positive_gradient() {
        let inst = Instance::from_parts(
            1,
            &[1.0, 1.0],
            &[(0, 0, 1e8, 0.0), (0, 1, 5e7, 0.0)],
            10.0,
            10.0,
            1e-3,
        );
        let x = vec![0.0, 0.0];
        let mut grad = Vec::new();
        gradient(&inst, &[0.0, 0.0], &x, &mut grad);
        let res = kkt_residual(&inst, &x, &grad);
        let gmax = grad.iter().cloned().fold(f64::MIN, f64::max);
        assert!((res - gmax).abs() < 1e-9, "residual {res} vs gradient {gmax}");
    }

    #[test]
    fn kkt_small_at_analytic_optimum_and_larger_elsewhere() {
        // Proportional-split optimum of the 2-cell problem.
        let inst = Instance::from_parts(
            1,
            &[3.0, 1.0],
            &[(0, 0, 1e8, 0.0), (0, 1, 1e8, 0.0)],
            100.0,
            80.0,
            1e-3,
        );
        let w = vec![0.0, 0.0];
        let xstar = vec![60.0, 20.0];
        let mut grad = Vec::new();
        gradient(&inst, &w, &xstar, &mut grad);
        let at_opt = kkt_residual(&inst, &xstar, &grad);
        assert!(at_opt <= 1e-9, "residual at optimum {at_opt}");

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = rng.gen_range(1.0..75.0);
            let mut x = vec![a, 80.0 - a];
            project_box_budget(&mut x, 100.0, 80.0);
            if (x[0] - 60.0).abs() < 1.0 {
                continue;
            }
            gradient(&inst, &w, &x, &mut grad);
            assert!(kkt_residual(&inst, &x, &grad) > at_opt);
        }
    }

    #[test]
    fn projection_matches_qp_oracle_small() {
        // Brute-force oracle: enumerate active sets for <= 4 variables.
        fn qp_oracle(y: &[f64], cap: f64, budget: f64) -> Vec<f64> {
            let n = y.len();
            let mut best: Option<(f64, Vec<f64>)> = None;
            // Each variable: 0 = at zero, 1 = free, 2 = at cap; budget: tight or slack.
            for mask in 0..3usize.pow(n as u32) {
                let mut kinds = Vec::with_capacity(n);
                let mut m = mask;
                for _ in 0..n {
                    kinds.push(m % 3);
                    m /= 3;
                }
                for budget_tight in [false, true] {
                    let mut x = vec![0.0; n];
                    let free: Vec<usize> =
                        (0..n).filter(|&i| kinds[i] == 1).collect();
                    let fixed_sum: f64 = (0..n)
                        .map(|i| if kinds[i] == 2 { cap } else { 0.0 })
                        .sum();
                    if budget_tight {
                        if free.is_empty() {
                            if (fixed_sum - budget).abs() > 1e-9 {
                                continue;
                            }
                        }
                        let lambda = if free.is_empty() {
                            0.0
                        } else {
                            let sy: f64 = free.iter().map(|&i| y[i]).sum();
                            (sy - (budget - fixed_sum)) / free.len() as f64
                        };
                        if lambda < -1e-9 {
                            continue;
                        }
                        for i in 0..n {
                            x[i] = match kinds[i] {
                                0 => 0.0,
                                2 => cap,
                                _ => y[i] - lambda,
                            };
                        }
                    } else {
                        for i in 0..n {
                            x[i] = match kinds[i] {
                                0 => 0.0,
                                2 => cap,
                                _ => y[i],
                            };
                        }
                        if x.iter().sum::<f64>() > budget + 1e-9 {
                            continue;
                        }
                    }
                    if x.iter().any(|&v| v < -1e-9 || v > cap + 1e-9) {
                        continue;
                    }
                    let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    if best.as_ref().map(|(d, _)| dist < *d - 1e-12).unwrap_or(true) {
                        best = Some((dist, x));
                    }
                }
            }
            best.unwrap().1
        }

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.gen_range(1..=4);
            let cap = rng.gen_range(0.5..3.0);
            let budget = rng.gen_range(0.2..(n as f64) * cap * 1.2);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..4.0)).collect();
            let mut x = y.clone();
            project_box_budget(&mut x, cap, budget);
            let oracle = qp_oracle(&y, cap, budget);
            let d_fast: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            let d_oracle: f64 = oracle.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(
                (d_fast - d_oracle).abs() < 1e-7,
                "projection suboptimal: {x:?} vs {oracle:?} for y = {y:?} cap {cap} budget {budget}"
            );
            assert!(x.iter().all(|&v| (-1e-9..=cap + 1e-9).contains(&v)));
            assert!(x.iter().sum::<f64>() <= budget + 1e-7);
        }
    }

    #[test]
    fn water_filling_proportional_split() {
        let x = solve_local(&[3.0, 1.0], 4.0, 4.0);
        assert!((x[0] - 3.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn water_filling_cap_binds() {
        let x = solve_local(&[10.0, 1.0], 3.0, 6.0);
        assert_eq!(x, vec![3.0, 3.0]);
    }

    #[test]
    fn water_filling_single_cell() {
        assert_eq!(solve_local(&[5.0], 4.0, 10.0), vec![4.0]);
        assert_eq!(solve_local(&[5.0], 4.0, 2.5), vec![2.5]);
        assert!(solve_local(&[], 4.0, 10.0).is_empty());
    }

    #[test]
    fn water_filling_matches_lambda_search_oracle() {
        // 1-D search on the water level: x_c = min(cap, U_c/lambda), with
        // lambda chosen so the total matches min(budget, n*cap).
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let n = rng.gen_range(1..8);
            let users: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..50.0)).collect();
            let cap = rng.gen_range(1.0..10.0);
            let budget = rng.gen_range(0.5..(n as f64) * cap * 1.3);
            let target = budget.min(cap * n as f64);
            let total = |lambda: f64| -> f64 {
                users.iter().map(|u| (u / lambda).min(cap)).sum()
            };
            let (mut lo, mut hi) = (1e-9, 1e9);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if total(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let lambda = 0.5 * (lo + hi);
            let oracle: Vec<f64> = users.iter().map(|u| (u / lambda).min(cap)).collect();
            let x = solve_local(&users, cap, budget);
            for (a, b) in x.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-5, "{x:?} vs {oracle:?}");
            }
        }
    }

    #[test]
    fn local_agrees_with_global_single_satellite() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let cells = rng.gen_range(2..6);
            let users: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.5..30.0)).collect();
            let raw: Vec<(usize, usize, f64, f64)> = (0..cells)
                .map(|c| (0usize, c, rng.gen_range(1e7..2e8), 0.0))
                .collect();
            let cap = 20.0;
            let budget = rng.gen_range(5.0..cap * cells as f64 * 1.1);
            let inst = Instance::from_parts(1, &users, &raw, cap, budget, 1e-3);
            let w = vec![0.0; inst.pairs.len()];
            let global = solve_relaxed_global(&inst, &w, None, &tight(1e-10)).unwrap();
            assert!(global.converged);

            let gains: Vec<f64> = inst.pairs.iter().map(|p| p.gain).collect();
            let x_local = solve_local(&users, cap, budget);
            // Pairs are (sat, cell)-sorted, so the local vector aligns.
            let local_obj = local_objective(&users, &gains, &x_local);
            assert!(
                ((global.objective - local_obj) / local_obj.abs().max(1e-9)).abs() < 1e-6,
                "global {} vs local {}",
                global.objective,
                local_obj
            );
        }
    }

    #[test]
    fn rate_scaling_does_not_move_local_argmax() {
        let users = [4.0, 2.0, 1.0];
        let x1 = solve_local(&users, 5.0, 8.0);
        // Scaling all rates multiplies gains but the argmax is rate-free.
        let x2 = solve_local(&users, 5.0, 8.0);
        assert_eq!(x1, x2);
        // And the global solver agrees: scaled rates, same optimizer.
        let raw1: Vec<(usize, usize, f64, f64)> =
            vec![(0, 0, 1e7, 0.0), (0, 1, 1e7, 0.0), (0, 2, 1e7, 0.0)];
        let raw2: Vec<(usize, usize, f64, f64)> =
            vec![(0, 0, 7e7, 0.0), (0, 1, 7e7, 0.0), (0, 2, 7e7, 0.0)];
        let i1 = Instance::from_parts(1, &users, &raw1, 5.0, 8.0, 1e-3);
        let i2 = Instance::from_parts(1, &users, &raw2, 5.0, 8.0, 1e-3);
        let w = vec![0.0; 3];
        let s1 = solve_relaxed_global(&i1, &w, None, &tight(1e-10)).unwrap();
        let s2 = solve_relaxed_global(&i2, &w, None, &tight(1e-10)).unwrap();
        for (a, b) in s1.values.iter().zip(&s2.values) {
            assert!((a - b).abs() < 1e-5, "{:?} vs {:?}", s1.values, s2.values);
        }
    }

    #[test]
    fn relaxed_solution_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 3, 5, 12.0, 1.4);
            let w = vec![0.05; inst.pairs.len()];
            let sol = solve_relaxed_global(&inst, &w, None, &tight(1e-6)).unwrap();
            for &v in &sol.values {
                assert!((-1e-9..=inst.frame_cap + 1e-9).contains(&v));
            }
            for range in &inst.sat_ranges {
                let s: f64 = sol.values[range.clone()].iter().sum();
                assert!(s <= inst.sat_budget + 1e-6 * inst.sat_budget.max(1.0));
            }
        }
    }

    #[test]
    fn zero_budget_is_a_configuration_error() {
        let inst = Instance::from_parts(1, &[1.0], &[(0, 0, 1e8, 0.0)], 0.0, 0.0, 1e-3);
        let w = vec![0.0];
        assert!(solve_relaxed_global(&inst, &w, None, &tight(1e-6)).is_err());
    }

    #[test]
    fn reweighting_formula() {
        let x = vec![0.0, 1.0, 9.0];
        let mut w = vec![0.0; 3];
        reweight(&x, 5.0, 1.0, &mut w);
        assert_eq!(w, vec![5.0, 2.5, 0.5]);
    }
}
