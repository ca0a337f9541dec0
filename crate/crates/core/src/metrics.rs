//! Per-slot and episode-level performance measures: per-user throughput,
//! Jain's fairness index, handover counts, and conflicting-cell counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::allocator::AllocationMatrix;
use crate::geodata::CellGrid;
use crate::linkbudget::TimingConfig;

/// Metrics of one slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot_index: usize,
    pub avg_user_throughput_bps: f64,
    pub jain_index: f64,
    /// True when every populated cell had zero rate (Jain undefined, 0 reported).
    pub jain_degenerate: bool,
    pub handovers: usize,
    pub first_acquisitions: usize,
    pub service_gaps: usize,
    pub conflicting_cells_pre_adjust: usize,
    pub uncovered_populated_cells: usize,
    pub solver_runtime_s: f64,
}

/// Mean/median/quartiles of one metric over the episode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Whole-episode report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub slots: Vec<SlotMetrics>,
    pub aggregates: BTreeMap<String, Aggregate>,
    /// SHA-256 over the canonical scenario configuration.
    pub fingerprint: String,
}

/// Per-user rate of every populated cell under an allocation:
/// (cell_id, users, rate). Unserved cells carry rate 0.
pub fn per_cell_user_rates(
    alloc: &AllocationMatrix,
    grid: &CellGrid,
    timing: &TimingConfig,
) -> Vec<(u32, f64, f64)> {
    let fraction = timing.frame_fraction();
    grid.populated_ids()
        .iter()
        .map(|&cell_id| {
            let users = grid.cell(cell_id).active_users;
            let rate = match alloc.entry(cell_id) {
                Some(e) => fraction / users * e.frames as f64 * e.rho_min_bps,
                None => 0.0,
            };
            (cell_id, users, rate)
        })
        .collect()
}

/// Jain's fairness index over populated cells, user-weighted:
/// (sum U_c R_c)^2 / ((sum U_c) sum U_c R_c^2). Returns (0, true) when every
/// rate is zero.
pub fn jain_index(
    alloc: &AllocationMatrix,
    grid: &CellGrid,
    timing: &TimingConfig,
) -> (f64, bool) {
    jain_from_rates(&per_cell_user_rates(alloc, grid, timing))
}

/// Jain index from precomputed (cell, users, rate) triples.
pub fn jain_from_rates(rates: &[(u32, f64, f64)]) -> (f64, bool) {
    let mut sum_u = 0.0;
    let mut sum_ur = 0.0;
    let mut sum_ur2 = 0.0;
    for &(_, u, r) in rates {
        sum_u += u;
        sum_ur += u * r;
        sum_ur2 += u * r * r;
    }
    if sum_ur2 <= 0.0 || sum_u <= 0.0 {
        return (0.0, true);
    }
    ((sum_ur * sum_ur) / (sum_u * sum_ur2), false)
}

/// User-weighted mean per-user throughput over populated cells.
pub fn average_user_throughput(
    alloc: &AllocationMatrix,
    grid: &CellGrid,
    timing: &TimingConfig,
) -> f64 {
    let rates = per_cell_user_rates(alloc, grid, timing);
    let mut sum_u = 0.0;
    let mut sum_ur = 0.0;
    for &(_, u, r) in &rates {
        sum_u += u;
        sum_ur += u * r;
    }
    if sum_u > 0.0 {
        sum_ur / sum_u
    } else {
        0.0
    }
}

/// Serving-satellite transition counts between consecutive slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HandoverStats {
    /// Cells served in both slots by different satellites.
    pub handovers: usize,
    /// Cells unserved before and served now.
    pub acquisitions: usize,
    /// Cells served before and unserved now.
    pub gaps: usize,
}

/// Count serving changes from `prev` to `cur`. First acquisitions and
/// service gaps are tallied separately, not as handovers.
pub fn count_handovers(prev: &AllocationMatrix, cur: &AllocationMatrix) -> HandoverStats {
    let mut stats = HandoverStats::default();
    for (cell, entry) in cur.iter() {
        match prev.serving_sat(cell) {
            Some(old) if old != entry.sat => stats.handovers += 1,
            Some(_) => {}
            None => stats.acquisitions += 1,
        }
    }
    for (cell, _) in prev.iter() {
        if cur.serving_sat(cell).is_none() {
            stats.gaps += 1;
        }
    }
    stats
}

/// Number of cells with two or more satellites allocating positive frames
/// (pre-adjustment integer matrix, pair-aligned).
pub fn count_conflicts(pair_cells: &[usize], frames: &[u32], n_cells: usize) -> usize {
    let mut servers = vec![0u32; n_cells];
    for (&cell, &f) in pair_cells.iter().zip(frames) {
        if f > 0 {
            servers[cell] += 1;
        }
    }
    servers.iter().filter(|&&s| s >= 2).count()
}

/// Conflicting cells of a relaxed allocation: entries above `threshold`
/// frames count as serving.
pub fn count_conflicts_relaxed(
    pair_cells: &[usize],
    x: &[f64],
    threshold: f64,
    n_cells: usize,
) -> usize {
    let mut servers = vec![0u32; n_cells];
    for (&cell, &v) in pair_cells.iter().zip(x) {
        if v > threshold {
            servers[cell] += 1;
        }
    }
    servers.iter().filter(|&&s| s >= 2).count()
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn aggregate(values: &[f64]) -> Aggregate {
    let mean = if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    Aggregate {
        mean,
        median: quantile(values, 0.5),
        q1: quantile(values, 0.25),
        q3: quantile(values, 0.75),
    }
}

impl EpisodeReport {
    pub fn from_slots(slots: Vec<SlotMetrics>, fingerprint: String) -> EpisodeReport {
        let mut aggregates = BTreeMap::new();
        let collect = |f: &dyn Fn(&SlotMetrics) -> f64| -> Vec<f64> {
            slots.iter().map(f).collect()
        };
        aggregates.insert(
            "avg_user_throughput_bps".to_string(),
            aggregate(&collect(&|s| s.avg_user_throughput_bps)),
        );
        aggregates.insert(
            "jain_index".to_string(),
            aggregate(&collect(&|s| s.jain_index)),
        );
        aggregates.insert(
            "handovers".to_string(),
            aggregate(&collect(&|s| s.handovers as f64)),
        );
        aggregates.insert(
            "conflicting_cells".to_string(),
            aggregate(&collect(&|s| s.conflicting_cells_pre_adjust as f64)),
        );
        aggregates.insert(
            "uncovered_cells".to_string(),
            aggregate(&collect(&|s| s.uncovered_populated_cells as f64)),
        );
        aggregates.insert(
            "solver_runtime_s".to_string(),
            aggregate(&collect(&|s| s.solver_runtime_s)),
        );
        EpisodeReport {
            slots,
            aggregates,
            fingerprint,
        }
    }

    /// Episode totals of the serving-transition counters.
    pub fn total_handovers(&self) -> usize {
        self.slots.iter().map(|s| s.handovers).sum()
    }

    pub fn mean_throughput_bps(&self) -> f64 {
        self.aggregates["avg_user_throughput_bps"].mean
    }

    pub fn median_jain(&self) -> f64 {
        self.aggregates["jain_index"].median
    }

    /// CSV report `slot,avg_bps,jain,handovers,conflicts,uncovered,solver_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,avg_bps,jain,handovers,conflicts,uncovered,solver_s\n");
        for s in &self.slots {
            out.push_str(&format!(
                "{},{:.3},{:.6},{},{},{},{:.4}\n",
                s.slot_index,
                s.avg_user_throughput_bps,
                s.jain_index,
                s.handovers,
                s.conflicting_cells_pre_adjust,
                s.uncovered_populated_cells,
                s.solver_runtime_s
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::ServingEntry;
    use crate::geodata::{CellGrid, GridSpec};
    use crate::orbital::SatelliteId;

    fn timing() -> TimingConfig {
        TimingConfig {
            slot_duration_s: 10.0,
            frame_duration_s: 0.01,
            beams_per_satellite: 10,
            num_slots: 1,
        }
    }

    fn sat(flat: u32) -> SatelliteId {
        SatelliteId {
            plane_index: 0,
            in_plane_index: flat,
            flat_id: flat,
        }
    }

    fn grid_with_users(users: &[f64]) -> CellGrid {
        let mut grid = CellGrid::build(GridSpec {
            lat_min_deg: 0.0,
            lat_max_deg: 1.0,
            lon_min_deg: 0.0,
            lon_max_deg: (users.len() as f64 - 1.0).max(0.5),
            resolution_deg: 1.0,
        })
        .unwrap();
        assert!(grid.cell_count() >= users.len());
        grid.set_active_fraction(1.0).unwrap();
        let pops: Vec<f64> = (0..grid.cell_count())
            .map(|i| users.get(i).copied().unwrap_or(0.0))
            .collect();
        let csv: String = pops
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let c = grid.cell(i as u32);
                format!("{},{},{}\n", c.center_lat_deg, c.center_lon_deg, p)
            })
            .collect();
        grid.load_population_csv(csv.as_bytes()).unwrap();
        grid
    }

    /// Matrix giving cell i exactly `frames[i]` frames at rate rho from sat 0.
    fn alloc_with(frames_rho: &[(u32, f64)]) -> AllocationMatrix {
        let mut m = AllocationMatrix::empty(0);
        for (i, &(frames, rho)) in frames_rho.iter().enumerate() {
            if frames > 0 {
                m.insert_for_test(i as u32, ServingEntry {
                    sat: sat(0),
                    frames,
                    rho_min_bps: rho,
                });
            }
        }
        m
    }

    #[test]
    fn jain_equal_rates_is_one() {
        let grid = grid_with_users(&[2.0, 2.0]);
        // Equal per-user rates: same frames and rho, same users.
        let alloc = alloc_with(&[(100, 1e8), (100, 1e8)]);
        let (j, degenerate) = jain_index(&alloc, &grid, &timing());
        assert!(!degenerate);
        assert!((j - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jain_half_served_is_half() {
        let grid = grid_with_users(&[1.0, 1.0]);
        let alloc = alloc_with(&[(100, 1e8)]);
        let (j, _) = jain_index(&alloc, &grid, &timing());
        assert!((j - 0.5).abs() < 1e-12);
    }

    #[test]
    fn jain_weighted_example() {
        // U = (3, 1), R = (1, 2): (3 + 2)^2 / (4 * (3 + 4)) = 25/28.
        let rates = vec![(0u32, 3.0, 1.0), (1u32, 1.0, 2.0)];
        let (j, _) = jain_from_rates(&rates);
        assert!((j - 25.0 / 28.0).abs() < 1e-12);
    }

    #[test]
    fn jain_degenerate_when_all_zero() {
        let grid = grid_with_users(&[1.0, 1.0]);
        let alloc = AllocationMatrix::empty(0);
        let (j, degenerate) = jain_index(&alloc, &grid, &timing());
        assert_eq!(j, 0.0);
        assert!(degenerate);
    }

    #[test]
    fn jain_is_scale_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.gen_range(2..10);
            let rates: Vec<(u32, f64, f64)> = (0..n)
                .map(|i| (i as u32, rng.gen_range(0.1..50.0), rng.gen_range(0.0..1e6)))
                .collect();
            let (j1, d1) = jain_from_rates(&rates);
            let lambda = rng.gen_range(1e-3..1e3);
            let scaled: Vec<(u32, f64, f64)> =
                rates.iter().map(|&(c, u, r)| (c, u, lambda * r)).collect();
            let (j2, d2) = jain_from_rates(&scaled);
            assert_eq!(d1, d2);
            if !d1 {
                assert!((j1 - j2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jain_is_one_iff_rates_equal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.gen_range(2..8);
            let equal = rng.gen_bool(0.5);
            let base = rng.gen_range(1.0..1e5);
            let rates: Vec<(u32, f64, f64)> = (0..n)
                .map(|i| {
                    let r = if equal {
                        base
                    } else {
                        base * rng.gen_range(0.2..5.0)
                    };
                    (i as u32, rng.gen_range(0.1..10.0), r)
                })
                .collect();
            let distinct = rates
                .iter()
                .any(|&(_, _, r)| ((r - rates[0].2) / base).abs() > 1e-9);
            let (j, _) = jain_from_rates(&rates);
            if !distinct {
                assert!((j - 1.0).abs() < 1e-9);
            } else {
                assert!(j < 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn average_throughput_cases() {
        let grid = grid_with_users(&[1.0]);
        let alloc = alloc_with(&[(500, 1e8)]);
        let t = timing();
        let single = average_user_throughput(&alloc, &grid, &t);
        let expected = 0.001 * 500.0 * 1e8;
        assert!((single - expected).abs() < 1e-6);

        // Two equal-user cells at rates (100, 200) average to 150.
        let rates = vec![(0u32, 1.0, 100.0), (1u32, 1.0, 200.0)];
        let mean: f64 = {
            let su: f64 = rates.iter().map(|r| r.1).sum();
            rates.iter().map(|r| r.1 * r.2).sum::<f64>() / su
        };
        assert!((mean - 150.0).abs() < 1e-12);

        // U = (3, 1), R = (1, 2) averages to 1.25.
        let rates = vec![(0u32, 3.0, 1.0), (1u32, 1.0, 2.0)];
        let mean: f64 = {
            let su: f64 = rates.iter().map(|r| r.1).sum();
            rates.iter().map(|r| r.1 * r.2).sum::<f64>() / su
        };
        assert!((mean - 1.25).abs() < 1e-12);
    }

    #[test]
    fn average_throughput_is_linear_in_rates() {
        let rates = vec![(0u32, 2.0, 300.0), (1u32, 5.0, 100.0)];
        let mean = |rs: &[(u32, f64, f64)]| {
            let su: f64 = rs.iter().map(|r| r.1).sum();
            rs.iter().map(|r| r.1 * r.2).sum::<f64>() / su
        };
        let m1 = mean(&rates);
        let doubled: Vec<_> = rates.iter().map(|&(c, u, r)| (c, u, 2.0 * r)).collect();
        assert!((mean(&doubled) - 2.0 * m1).abs() < 1e-9);
    }

    #[test]
    fn handover_counting() {
        let a = alloc_with(&[(10, 1.0), (10, 1.0)]);
        let same = count_handovers(&a, &a);
        assert_eq!(same, HandoverStats::default());

        // Cell 0 switches to satellite 1.
        let mut b = AllocationMatrix::empty(1);
        b.insert_for_test(0, ServingEntry { sat: sat(1), frames: 10, rho_min_bps: 1.0 });
        b.insert_for_test(1, ServingEntry { sat: sat(0), frames: 10, rho_min_bps: 1.0 });
        assert_eq!(
            count_handovers(&a, &b),
            HandoverStats { handovers: 1, acquisitions: 0, gaps: 0 }
        );

        // Cell 1 loses service: a gap, not a handover.
        let mut c = AllocationMatrix::empty(1);
        c.insert_for_test(0, ServingEntry { sat: sat(0), frames: 10, rho_min_bps: 1.0 });
        assert_eq!(
            count_handovers(&a, &c),
            HandoverStats { handovers: 0, acquisitions: 0, gaps: 1 }
        );
    }

    #[test]
    fn handover_total_is_reorder_invariant() {
        let a = alloc_with(&[(10, 1.0), (10, 1.0), (10, 1.0)]);
        let mut b = AllocationMatrix::empty(1);
        for cell in [2u32, 0, 1] {
            b.insert_for_test(cell, ServingEntry { sat: sat(1), frames: 5, rho_min_bps: 1.0 });
        }
        assert_eq!(count_handovers(&a, &b).handovers, 3);
    }

    #[test]
    fn conflict_counting() {
        // Pairs over 3 cells: cell 0 served twice, cell 1 once, cell 2 never.
        let pair_cells = vec![0usize, 0, 1, 2];
        let frames = vec![3u32, 1, 5, 0];
        assert_eq!(count_conflicts(&pair_cells, &frames, 3), 1);
        let single = vec![0usize, 1];
        assert_eq!(count_conflicts(&single, &[1, 1], 2), 0);
        let relaxed = vec![0.6f64, 0.4, 5.0, 0.0];
        assert_eq!(count_conflicts_relaxed(&pair_cells, &relaxed, 0.5, 3), 0);
        let relaxed = vec![0.6f64, 0.7, 5.0, 0.0];
        assert_eq!(count_conflicts_relaxed(&pair_cells, &relaxed, 0.5, 3), 1);
    }

    #[test]
    fn quantiles_and_aggregates() {
        let vals = [1.0, 2.0, 3.0, 4.0];
        assert!((quantile(&vals, 0.5) - 2.5).abs() < 1e-12);
        assert!((quantile(&vals, 0.0) - 1.0).abs() < 1e-12);
        assert!((quantile(&vals, 1.0) - 4.0).abs() < 1e-12);
        let agg = aggregate(&vals);
        assert!((agg.mean - 2.5).abs() < 1e-12);
        assert!((agg.q1 - 1.75).abs() < 1e-12);
        assert!((agg.q3 - 3.25).abs() < 1e-12);
    }
}
