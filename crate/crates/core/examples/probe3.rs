//! Experiments: solver init policy, tolerance, and tau vs conflict counts.

use leofair::allocator::{global_allocate, ConflictRule};
use leofair::linkbudget::HandoverModel;
use leofair::metrics::{jain_from_rates, per_cell_user_rates};
use leofair::simrunner::{PreparedScenario, ScenarioSpec};
use leofair::solver::Instance;

fn main() {
    let mut spec = ScenarioSpec::default();
    spec.timing.num_slots = 2;
    let prep = PreparedScenario::prepare(&spec).unwrap();
    let model = HandoverModel { handover_cost: 0.0 };
    let table = prep.rate_table(0);
    let inst = Instance::build(&table, &prep.grid, None, &model, &prep.timing).unwrap();
    let populated = prep.grid.populated_ids().len() as f64;

    for (label, tau, tol_scale, n_iter) in [
        ("baseline tau=1 n=1", 1.0, 1.0, 1u32),
        ("tight-tol n=1", 1.0, 0.1, 1),
        ("baseline tau=1 n=2", 1.0, 1.0, 2),
        ("tau=0.3 n=2", 0.3, 1.0, 2),
        ("tau=0.3 n=3", 0.3, 1.0, 3),
        ("tau=0.1 n=2", 0.1, 1.0, 2),
    ] {
        let mut cfg = prep.solver_config(n_iter);
        cfg.tau = tau;
        cfg.pg_tolerance *= tol_scale;
        let t0 = std::time::Instant::now();
        let (matrix, diag) = global_allocate(&inst, &cfg, ConflictRule::PenalizedThroughput).unwrap();
        let rates = per_cell_user_rates(&matrix, &prep.grid, &prep.timing);
        let (jain, _) = jain_from_rates(&rates);
        println!(
            "{label}: {:.2} s, conflicts {} ({:.2}%), jain {jain:.4}, steps {:?}, kkt {:?}",
            t0.elapsed().as_secs_f64(),
            diag.conflicting_cells_pre_adjust,
            100.0 * diag.conflicting_cells_pre_adjust as f64 / populated,
            diag.solver_steps,
            diag.kkt_residuals.iter().map(|k| format!("{k:.2e}")).collect::<Vec<_>>(),
        );
    }
}
