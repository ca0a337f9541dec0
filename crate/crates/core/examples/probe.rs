//! Scratch probe for full-scale scenario bring-up. Not part of the test
//! suite; run with `cargo run --release --example probe [slots]`.

use std::time::Instant;

use leofair::simrunner::{Algorithm, PreparedScenario, RunParams, ScenarioSpec};

fn main() {
    let slots: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    let mut spec = ScenarioSpec::default();
    spec.timing.num_slots = slots;

    let t0 = Instant::now();
    let prep = PreparedScenario::prepare(&spec).unwrap();
    println!("prepare: {:.2} s", t0.elapsed().as_secs_f64());
    println!(
        "populated cells: {}, total users: {:.1}, beta {:.3}, tol {:.3}",
        prep.grid.populated_ids().len(),
        prep.grid.total_active_users(),
        prep.solver_beta,
        prep.solver_tolerance,
    );

    let counts: Vec<usize> = (0..=slots).map(|k| prep.visible_count(k)).collect();
    println!(
        "|S_k| over {} edges: min {} max {} (first 20: {:?})",
        counts.len(),
        counts.iter().min().unwrap(),
        counts.iter().max().unwrap(),
        &counts[..counts.len().min(20)]
    );

    let table = prep.rate_table(0);
    println!(
        "slot 0 rate table: {} sats, {} pairs",
        table.sats.len(),
        table.pair_count()
    );

    for h in [0.0, 0.4] {
        let t0 = Instant::now();
        let params = RunParams {
            algorithm: Algorithm::Distributed,
            handover_cost: h,
            n_iter: 1,
            output_dir: None,
        };
        let rep = prep.run(&params).unwrap();
        println!(
            "distributed h={h}: {:.1} s total | median jain {:.4} mean thr {:.4e} handovers {} gaps {} acq {}",
            t0.elapsed().as_secs_f64(),
            rep.median_jain(),
            rep.mean_throughput_bps(),
            rep.total_handovers(),
            rep.slots.iter().map(|s| s.service_gaps).sum::<usize>(),
            rep.slots.iter().map(|s| s.first_acquisitions).sum::<usize>(),
        );
    }

    for h in [0.0, 0.4] {
        let t0 = Instant::now();
        let params = RunParams {
            algorithm: Algorithm::Global,
            handover_cost: h,
            n_iter: 2,
            output_dir: None,
        };
        let rep = prep.run(&params).unwrap();
        let max_rt = rep
            .slots
            .iter()
            .map(|s| s.solver_runtime_s)
            .fold(0.0f64, f64::max);
        println!(
            "global h={h} n_iter=2: {:.1} s total, max slot {:.2} s | median jain {:.4} mean thr {:.4e} handovers {} conflicts mean {:.2}",
            t0.elapsed().as_secs_f64(),
            max_rt,
            rep.median_jain(),
            rep.mean_throughput_bps(),
            rep.total_handovers(),
            rep.aggregates["conflicting_cells"].mean,
        );
    }
}
