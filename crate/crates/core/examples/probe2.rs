//! Deeper diagnostic probe: per-slot detail for the distributed Jain collapse
//! and the global conflict count.

use leofair::allocator::{distributed_allocate, global_allocate, MatchingConfig};
use leofair::linkbudget::HandoverModel;
use leofair::metrics::{jain_from_rates, per_cell_user_rates};
use leofair::simrunner::{PreparedScenario, ScenarioSpec};
use leofair::solver::Instance;

fn main() {
    let mut spec = ScenarioSpec::default();
    spec.timing.num_slots = 4;
    let prep = PreparedScenario::prepare(&spec).unwrap();
    let model = HandoverModel { handover_cost: 0.4 };

    println!("=== distributed h=0.4, per-slot ===");
    let mut prev = None;
    for k in 0..4 {
        let table = prep.rate_table(k);
        let inst = Instance::build(&table, &prep.grid, prev.as_ref(), &model, &prep.timing).unwrap();
        let (matrix, _) = distributed_allocate(&inst, &MatchingConfig::default()).unwrap();
        let rates = per_cell_user_rates(&matrix, &prep.grid, &prep.timing);
        let (jain, _) = jain_from_rates(&rates);
        // Distribution of per-user rates.
        let mut sorted: Vec<(f64, f64, u32)> = rates
            .iter()
            .map(|&(c, u, r)| (r, u, c))
            .collect();
        sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        println!(
            "slot {k}: jain {jain:.4}, served {}, top rates: {:?}",
            matrix.served_cell_count(),
            sorted
                .iter()
                .take(5)
                .map(|&(r, u, c)| format!("cell {c} u={u:.2} r={r:.3e}"))
                .collect::<Vec<_>>()
        );
        // Per-satellite load.
        let mut loads: std::collections::BTreeMap<u32, (usize, u64, f64)> = Default::default();
        for (cell, e) in matrix.iter() {
            let l = loads.entry(e.sat.flat_id).or_default();
            l.0 += 1;
            l.1 += e.frames as u64;
            l.2 += prep.grid.cell(cell).active_users;
        }
        let small: Vec<String> = loads
            .iter()
            .filter(|(_, l)| l.2 < 2000.0)
            .map(|(s, l)| format!("sat {s}: {} cells {} frames {:.1} users", l.0, l.1, l.2))
            .collect();
        println!("   underloaded sats: {small:?}");
        prev = Some(matrix);
    }

    println!("=== global h=0, solver diagnostics per reweight iteration ===");
    let model0 = HandoverModel { handover_cost: 0.0 };
    let table = prep.rate_table(0);
    let inst = Instance::build(&table, &prep.grid, None, &model0, &prep.timing).unwrap();
    for n_iter in [1u32, 2, 3] {
        let cfg = prep.solver_config(n_iter);
        let t0 = std::time::Instant::now();
        let (matrix, diag) = global_allocate(&inst, &cfg, spec.conflict_rule).unwrap();
        let rates = per_cell_user_rates(&matrix, &prep.grid, &prep.timing);
        let (jain, _) = jain_from_rates(&rates);
        println!(
            "n_iter={n_iter}: {:.2} s, conflicts {}, jain {jain:.4}, served {}, steps {:?}, kkt {:?}, obj {:?}",
            t0.elapsed().as_secs_f64(),
            diag.conflicting_cells_pre_adjust,
            matrix.served_cell_count(),
            diag.solver_steps,
            diag.kkt_residuals.iter().map(|k| format!("{k:.2e}")).collect::<Vec<_>>(),
            diag.iteration_objectives.iter().map(|o| format!("{o:.6e}")).collect::<Vec<_>>(),
        );
    }
}
