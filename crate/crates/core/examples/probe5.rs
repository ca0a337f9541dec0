//! Micro-timing of solver kernels at full scale.

use std::time::Instant;

use leofair::linkbudget::HandoverModel;
use leofair::simrunner::{PreparedScenario, ScenarioSpec};
use leofair::solver::{gradient, kkt_residual, objective, project_box_budget, Instance};

fn main() {
    let mut spec = ScenarioSpec::default();
    spec.timing.num_slots = 1;
    let prep = PreparedScenario::prepare(&spec).unwrap();
    let model = HandoverModel { handover_cost: 0.0 };
    let table = prep.rate_table(0);
    let inst = Instance::build(&table, &prep.grid, None, &model, &prep.timing).unwrap();
    let n = inst.pairs.len();
    println!("pairs: {n}, cells {}, sats {}", inst.cells.len(), inst.sats.len());
    let weights = vec![0.01; n];
    let x: Vec<f64> = (0..n).map(|i| (i % 17) as f64).collect();

    let reps = 50;
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += objective(&inst, &weights, &x);
    }
    println!("objective: {:.3} ms  ({acc:.1})", t.elapsed().as_secs_f64() * 1000.0 / reps as f64);

    let mut grad = Vec::new();
    let t = Instant::now();
    for _ in 0..reps {
        gradient(&inst, &weights, &x, &mut grad);
    }
    println!("gradient: {:.3} ms", t.elapsed().as_secs_f64() * 1000.0 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        acc += kkt_residual(&inst, &x, &grad);
    }
    println!("kkt: {:.3} ms  ({acc:.1})", t.elapsed().as_secs_f64() * 1000.0 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        let mut y = x.clone();
        for range in &inst.sat_ranges {
            project_box_budget(&mut y[range.clone()], inst.frame_cap, inst.sat_budget);
        }
        acc += y[0];
    }
    println!(
        "projection (all sats, incl clone): {:.3} ms  ({acc:.1})",
        t.elapsed().as_secs_f64() * 1000.0 / reps as f64
    );
}
