//! Anatomy of the remaining multi-served cells in the relaxed solution.

use leofair::linkbudget::HandoverModel;
use leofair::simrunner::{PreparedScenario, ScenarioSpec};
use leofair::solver::{solve_relaxed_global, Instance};

fn main() {
    let mut spec = ScenarioSpec::default();
    spec.timing.num_slots = 1;
    let prep = PreparedScenario::prepare(&spec).unwrap();
    let model = HandoverModel { handover_cost: 0.0 };
    let table = prep.rate_table(0);
    let inst = Instance::build(&table, &prep.grid, None, &model, &prep.timing).unwrap();
    let weights = vec![0.0; inst.pairs.len()];
    let cfg = prep.solver_config(1);
    let sol = solve_relaxed_global(&inst, &weights, None, &cfg).unwrap();
    println!("kkt {:.2e} steps {} converged {}", sol.kkt_residual, sol.steps, sol.converged);

    let mut conflicts = 0;
    let mut cap_bound = 0;
    let mut second_sizes: Vec<f64> = Vec::new();
    let mut totals: Vec<f64> = Vec::new();
    for pair_ids in &inst.cell_pairs {
        let mut entries: Vec<f64> = pair_ids
            .iter()
            .map(|&pi| sol.values[pi])
            .filter(|&v| v > 0.5)
            .collect();
        if entries.len() < 2 {
            continue;
        }
        conflicts += 1;
        entries.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = entries.iter().sum();
        totals.push(total);
        second_sizes.push(entries[1]);
        if total > inst.frame_cap - 1.0 {
            cap_bound += 1;
        }
    }
    second_sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "conflicts {} (cap-bound {}), second-entry quartiles: {:.2} {:.2} {:.2}, max {:.2}",
        conflicts,
        cap_bound,
        second_sizes[second_sizes.len() / 4],
        second_sizes[second_sizes.len() / 2],
        second_sizes[3 * second_sizes.len() / 4],
        second_sizes.last().unwrap()
    );
    // Satellite budget slack after the solve.
    let budget = inst.sat_budget;
    for (s, range) in inst.sat_ranges.iter().enumerate() {
        let used: f64 = sol.values[range.clone()].iter().sum();
        if budget - used > 1.0 {
            println!("sat {s}: slack {:.1}", budget - used);
        }
    }
    println!("total frames {:.1} of {:.1}", sol.values.iter().sum::<f64>(), budget * inst.sats.len() as f64);
}
