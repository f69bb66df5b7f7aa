//! End-to-end acceptance gate. Each criterion prints one PASS/FAIL line.
//! With SURROFLOOD_ACCEPTANCE_STRICT=1 the process exits nonzero if any fails.

mod common;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surroflood::mads::{
    mads_restarts, st_then_mads, ControlLayout, MadsConfig, MadsResult, RestartSummary, StMadsResult,
};
use surroflood::model::{CaseModel, Grid, RockProperties, Schedule, WellKind, WellSpec};
use surroflood::parallel::default_workers;
use surroflood::permgen::{generate_channel_perm, ChannelParams};
use surroflood::respmat::{build_response, superposition_residual, BuildOptions};
use surroflood::sim1p::{PssSolver, Sim1pOptions};
use surroflood::sim2p::{Controls, SimOptions, Simulator};
use surroflood::st_qp::{assemble_qp, solve_rate_ratio_qp, QpObjective, QpOptions, RateRatios, WeightMatrices};
use surroflood::st_sweep::{
    controls_with_bhp_wells, equal_rate_base_cases, random_ratios, reallocate_ratios, run_two_step_st,
    velocity_npv_correlation, StConfig, StResult, SweepConfig,
};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn st_config(workers: usize) -> StConfig {
    StConfig {
        sweep: SweepConfig {
            workers,
            ..SweepConfig::default()
        },
        build: BuildOptions {
            workers,
            ..BuildOptions::default()
        },
        ..StConfig::default()
    }
}

fn superposition() -> Outcome {
    let t0 = Instant::now();
    let mut params = ChannelParams::new(100, 100, 1, 8);
    params.k_channel = 1000.0;
    params.k_background = 5.0;
    let perm = generate_channel_perm(&params, 2024).unwrap();
    let wells = vec![
        WellSpec::producer("P1", 10, 10, 1000.0),
        WellSpec::producer("P2", 89, 12, 1000.0),
        WellSpec::producer("P3", 12, 88, 1000.0),
        WellSpec::producer("P4", 90, 90, 1000.0),
        WellSpec::injector("I1", 40, 55, 10000.0),
        WellSpec::injector("I2", 62, 40, 10000.0),
    ];
    let model = CaseModel::new(
        Grid::new(100, 100, 1, 50.0, 50.0, 100.0).unwrap(),
        RockProperties::isotropic(perm, 0.25, 1e-9),
        fluid_for_ratio(1.0),
        wells,
        economics(20e6),
        Schedule::new(7300.0, 1),
        6000.0,
    )
    .unwrap();
    let resp = build_response(
        &model,
        &BuildOptions {
            workers: default_workers(),
            ..BuildOptions::default()
        },
    )
    .unwrap();
    let f = RateRatios::new(vec![0.4, 0.1, 0.3, 0.2, 0.35, 0.65], model.kinds()).unwrap();
    let err = superposition_residual(&model, &resp, &f.signed_rates(model.field_rate_for_pvi(1.0))).unwrap();
    let rel: Vec<f64> = (0..3)
        .map(|d| if err.max_velocity > 0.0 { err.avg_abs[d] / err.max_velocity } else { 0.0 })
        .collect();
    let secs = t0.elapsed().as_secs_f64();
    let pass = rel.iter().all(|r| *r <= 1e-6) && secs < 30.0;
    outcome(
        pass,
        format!(
            "avg |error| / max|u| per component = [{:.2e}, {:.2e}, {:.2e}] (limit 1e-6), {secs:.1}s",
            rel[0], rel[1], rel[2]
        ),
    )
}

fn simplex_grid_optimality() -> Outcome {
    let t0 = Instant::now();
    let model = desk_case(202, 3.0);
    let resp = build_response(&model, &BuildOptions::default()).unwrap();
    let problem = assemble_qp(&resp, &WeightMatrices::ones(model.grid.n_cells()), QpObjective::SquaredVelocity).unwrap();
    let sol = solve_rate_ratio_qp(&problem, None, &QpOptions::default()).unwrap();
    let mut best = f64::INFINITY;
    for i in 0..=100 {
        for j in 0..=(100 - i) {
            for k in 0..=100 {
                let f = [
                    i as f64 / 100.0,
                    j as f64 / 100.0,
                    (100 - i - j) as f64 / 100.0,
                    k as f64 / 100.0,
                    (100 - k) as f64 / 100.0,
                ];
                best = best.min(problem.objective_normalized(&f));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let qp = sol.objective_normalized;
    let pass = qp <= best + 1e-6 && sol.kkt_residual <= 1e-8 && secs < 60.0;
    outcome(
        pass,
        format!(
            "QP {qp:.9e} vs grid best {best:.9e}, KKT residual {:.1e}, {secs:.1}s",
            sol.kkt_residual
        ),
    )
}

fn mirror_symmetry() -> Outcome {
    let n = 21;
    let model = CaseModel::new(
        Grid::new(n, n, 1, 50.0, 50.0, 100.0).unwrap(),
        RockProperties::uniform(n * n, 100.0, 0.25, 1e-9),
        fluid_for_ratio(1.0),
        vec![
            WellSpec::producer("P1", 2, 10, 1000.0),
            WellSpec::producer("P2", 18, 10, 1000.0),
            WellSpec::producer("P3", 10, 2, 1000.0),
            WellSpec::injector("I1", 6, 17, 10000.0),
            WellSpec::injector("I2", 14, 17, 10000.0),
        ],
        economics(5e6),
        Schedule::new(7300.0, 1),
        6000.0,
    )
    .unwrap();
    let resp = build_response(&model, &BuildOptions::default()).unwrap();
    let problem = assemble_qp(&resp, &WeightMatrices::ones(n * n), QpObjective::SquaredVelocity).unwrap();
    let f = solve_rate_ratio_qp(&problem, None, &QpOptions::default()).unwrap().ratios.f;
    let dp = (f[0] - f[1]).abs();
    let di = (f[3] - f[4]).abs();
    outcome(
        dp <= 1e-6 && di <= 1e-6,
        format!("f* = {f:.6?}; |P1-P2| = {dp:.1e}, |I1-I2| = {di:.1e} (limit 1e-6)"),
    )
}

fn velocity_npv_anticorrelation() -> Outcome {
    let t0 = Instant::now();
    let model = build(&CaseSpec {
        n: 50,
        cell: 50.0,
        thickness: 100.0,
        seed: 77,
        n_channels: 4,
        mobility_ratio: 1.0,
        wells: vec![
            WellSpec::producer("P1", 4, 4, 1000.0),
            WellSpec::producer("P2", 45, 6, 1000.0),
            WellSpec::producer("P3", 6, 44, 1000.0),
            WellSpec::producer("P4", 44, 45, 1000.0),
            WellSpec::injector("I1", 20, 26, 10000.0),
            WellSpec::injector("I2", 31, 22, 10000.0),
        ],
        horizon: 7300.0,
        well_cost: 20e6,
    });
    let mut cfg = st_config(default_workers());
    cfg.sweep.n_points = 9;
    let study = velocity_npv_correlation(&model, &model.economics, &[0.0, 0.1], 39, 8, &cfg).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for run in &study.runs {
        let share = run.npv_f_star / run.max_npv;
        pass &= run.spearman <= -0.5 && run.npv_f_star >= 0.95 * run.max_npv;
        parts.push(format!(
            "d={}: spearman {:.3}, NPV(f*)/max = {:.4}",
            run.discount_rate, run.spearman, share
        ));
    }
    outcome(pass, format!("{} ({:.0}s)", parts.join("; "), t0.elapsed().as_secs_f64()))
}

struct DeskRun {
    name: String,
    model: CaseModel,
    st: StResult,
    mads: RestartSummary,
}

fn desk_runs(workers: usize) -> Vec<DeskRun> {
    desk_cases()
        .into_iter()
        .map(|(name, model)| {
            let st = run_two_step_st(&model, &model.economics, &st_config(workers)).unwrap();
            let layout = ControlLayout::new(&model, 1).unwrap();
            let cfg = MadsConfig {
                seed: 11,
                workers,
                ..MadsConfig::default()
            };
            let mads = mads_restarts(&model, &model.economics, &layout, &SimOptions::default(), &cfg, 5).unwrap();
            DeskRun { name, model, st, mads }
        })
        .collect()
}

fn st_vs_mads(runs: &[DeskRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let ratio = r.st.npv() / r.mads.median;
        pass &= r.st.npv() >= 0.90 * r.mads.median;
        parts.push(format!(
            "{}: ST {:.4e} / MADS median {:.4e} = {:.3} (min {:.4e}, max {:.4e})",
            r.name,
            r.st.npv(),
            r.mads.median,
            ratio,
            r.mads.min,
            r.mads.max
        ));
    }
    outcome(pass, parts.join("; "))
}

fn st_vs_base_cases(runs: &[DeskRun], workers: usize) -> Outcome {
    let pvis = [0.25, 0.75, 1.25, 1.5, 2.0];
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let cfg = SweepConfig {
            workers,
            ..SweepConfig::default()
        };
        let base = equal_rate_base_cases(&r.model, &r.model.economics, &pvis, &cfg).unwrap();
        let best = base.iter().map(|b| b.npv).fold(f64::NEG_INFINITY, f64::max);
        pass &= base.iter().all(|b| r.st.npv() > b.npv);
        parts.push(format!(
            "{}: ST {:.4e} at PVI {:.2} vs best base {:.4e}",
            r.name,
            r.st.npv(),
            r.st.sweep.pvi_star,
            best
        ));
    }
    outcome(pass, parts.join("; "))
}

fn budget_accounting(runs: &[DeskRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let n_points = SweepConfig::default().n_points;
        let resims = r.st.sweep.points.iter().filter(|p| p.reallocated || p.full_evaluations > 1).count();
        let st_units = r.st.cost.parallel_units;
        pass &= r.st.cost.full_evaluations == n_points + resims;
        pass &= r.st.cost.pss_solves == r.model.n_wells();
        pass &= st_units <= 2.0;
        let mut per_run = Vec::new();
        for m in &r.mads.runs {
            let units = m.parallel_units();
            if m.iterations >= 5 {
                pass &= units >= 5.0 && units / st_units >= 5.0;
            }
            per_run.push(format!("{}it/{:.0}u/{:.1}x", m.iterations, units, units / st_units));
        }
        parts.push(format!(
            "{}: ST {} sims + {} PSS, {:.3} units; MADS runs {}",
            r.name,
            r.st.cost.full_evaluations,
            r.st.cost.pss_solves,
            st_units,
            per_run.join(" ")
        ));
    }
    outcome(pass, parts.join("; "))
}

fn simulator_verification() -> Outcome {
    // 1D displacement
    let bl_model = {
        let mut fluid = fluid_for_ratio(3.0);
        fluid.c_o = 1e-7;
        fluid.c_w = 1e-7;
        CaseModel::new(
            Grid::new(200, 1, 1, 10.0, 100.0, 10.0).unwrap(),
            RockProperties::uniform(200, 200.0, 0.2, 1e-9),
            fluid,
            vec![WellSpec::injector("I", 0, 0, 1e6), WellSpec::producer("P", 199, 0, -1e6)],
            economics(0.0),
            Schedule::new(500.0, 1),
            4000.0,
        )
        .unwrap()
    };
    let q = bl_model.field_rate_for_pvi(0.5);
    let opts = SimOptions {
        bhp_switching: false,
        ..SimOptions::default()
    };
    let r = Simulator::new(&bl_model, opts.clone())
        .unwrap()
        .run(&Controls::from_reservoir_rates(&bl_model, &[-q, q]))
        .unwrap();
    let xd: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
    let exact = buckley_leverett(&bl_model.fluid, 0.5, &xd);
    let l1 = r.final_state.s_w.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() / 200.0;

    // material balance on the desk cases at a high rate
    let mut mb = r.max_mb_error();
    for (_, m) in desk_cases() {
        let f = RateRatios::uniform(&m.kinds());
        let res = Simulator::new(&m, SimOptions::default())
            .unwrap()
            .run(&Controls::from_reservoir_rates(&m, &f.signed_rates(m.field_rate_for_pvi(2.0))))
            .unwrap();
        mb = mb.max(res.max_mb_error());
    }

    // unit-mobility first step against the single-phase solver
    let mut m1 = desk_case(101, 1.0);
    let f = RateRatios::uniform(&m1.kinds());
    let rates = f.signed_rates(m1.field_rate_for_pvi(1.0));
    m1.schedule = Schedule::new(1.0, 1);
    let two = Simulator::new(
        &m1,
        SimOptions {
            bhp_switching: false,
            ..SimOptions::default()
        },
    )
    .unwrap()
    .run(&Controls::from_reservoir_rates(&m1, &rates))
    .unwrap();
    let one = PssSolver::new(&m1, Sim1pOptions::default())
        .unwrap()
        .transient_step(&vec![m1.initial_pressure; m1.grid.n_cells()], &rates, 1.0, m1.initial_total_compressibility())
        .unwrap();
    let scale = one.iter().take(m1.grid.n_cells()).fold(0.0f64, |a, p| a.max((p - m1.initial_pressure).abs()));
    let dev = (0..m1.grid.n_cells()).fold(0.0f64, |a, c| a.max((two.final_state.p[c] - one[c]).abs())) / scale;

    outcome(
        l1 <= 0.02 && mb <= 1e-8 && dev <= 1e-8 && two.steps.len() == 1,
        format!("Buckley-Leverett L1 {l1:.4} (limit 0.02); max step material balance {mb:.1e}; unit-mobility pressure deviation {dev:.1e}"),
    )
}

fn bhp_reallocation() -> Outcome {
    let unit = reallocate_ratios(&[0.5, 0.3]).unwrap();
    let unit_ok = (unit[0] - 0.625).abs() < 1e-15 && (unit[1] - 0.375).abs() < 1e-15;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kinds = vec![WellKind::Producer; 4];
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let f = random_ratios(&kinds, &mut rng).f;
        let g = reallocate_ratios(&f[..3]).unwrap();
        worst = worst.max((g.iter().sum::<f64>() - 1.0).abs());
    }

    // one producer and one injector with limits near the initial pressure
    let mut m = desk_case(202, 1.0);
    m.wells[0].bhp_limit = 5800.0;
    m.wells[3].bhp_limit = 6200.0;
    m.wells[4].bhp_limit = 20000.0;
    let f = RateRatios::uniform(&m.kinds());
    let q = m.field_rate_for_pvi(1.0);
    let first = Simulator::new(&m, SimOptions::default())
        .unwrap()
        .run(&controls_with_bhp_wells(&m, &f, q, &[]).unwrap())
        .unwrap();
    let mut early: Vec<usize> = first.early_switches().map(|e| e.well).collect();
    early.sort();
    early.dedup();
    let second = Simulator::new(&m, SimOptions::default())
        .unwrap()
        .run(&controls_with_bhp_wells(&m, &f, q, &early).unwrap())
        .unwrap();
    let transient = SimOptions::default().transient_steps;
    let settled = (transient..second.steps.len())
        .find(|&k| second.steps[k..].iter().all(|s| (s.vrr() - 1.0).abs() <= 1e-3));
    let pass = unit_ok && worst <= 1e-12 && early == vec![0, 3] && settled.is_some();
    let settled = match settled {
        Some(k) => format!("within 1e-3 from day {:.0} to the end", second.steps[k].t_start),
        None => "never settles within 1e-3".into(),
    };
    outcome(
        pass,
        format!(
            "[0.5,0.3,0.2] -> {unit:?}; worst role-sum error {worst:.1e}; early BHP wells {early:?}; VRR {settled}"
        ),
    )
}

/// Poll evaluations, leaving out the starting point.
fn polls(r: &MadsResult) -> usize {
    r.evaluations - r.history[0].evaluations
}

fn multi_period(workers: usize, cold: &[DeskRun]) -> Outcome {
    let n_periods = 2;
    let mut pass = true;
    let mut fewer_polls = 0;
    let mut parts = Vec::new();
    for r in cold {
        let multi = CaseModel {
            schedule: r.model.schedule.with_periods(n_periods),
            ..r.model.clone()
        };
        let cfg = MadsConfig {
            seed: 11,
            workers,
            max_iter: 40,
            ..MadsConfig::default()
        };
        let chained: StMadsResult = st_then_mads(&multi, &multi.economics, &st_config(workers), &cfg, n_periods).unwrap();
        let layout = ControlLayout::new(&multi, n_periods).unwrap();
        let cold_runs = mads_restarts(&multi, &multi.economics, &layout, &SimOptions::default(), &cfg, 3).unwrap();
        let mut cold_polls: Vec<usize> = cold_runs.runs.iter().map(polls).collect();
        cold_polls.sort();
        let median_polls = cold_polls[cold_polls.len() / 2];
        let chained_polls = polls(&chained.mads);
        pass &= chained.refined_npv >= chained.st_npv;
        if chained_polls < median_polls {
            fewer_polls += 1;
        }
        parts.push(format!(
            "{}: ST {:.4e} -> ST&MADS {:.4e} in {} polls/{} it; cold median {:.4e}, polls {:?}",
            r.name, chained.st_npv, chained.refined_npv, chained_polls, chained.mads.iterations, cold_runs.median, cold_polls
        ));
    }
    pass &= fewer_polls >= 1;
    outcome(pass, parts.join("; "))
}

fn main() {
    let workers = default_workers();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
        results.push((id, name, o));
    };
    run(1, "superposition fidelity", &mut superposition);
    run(2, "QP global optimality", &mut simplex_grid_optimality);
    run(3, "mirror symmetry", &mut mirror_symmetry);
    run(4, "velocity/NPV anticorrelation", &mut velocity_npv_anticorrelation);
    let t0 = Instant::now();
    let desk = desk_runs(workers);
    println!("(desk-case ST and MADS runs took {:.1}s)", t0.elapsed().as_secs_f64());
    run(5, "ST vs MADS gap", &mut || st_vs_mads(&desk));
    run(6, "ST vs equal-rate base cases", &mut || st_vs_base_cases(&desk, workers));
    run(7, "budget and speedup accounting", &mut || budget_accounting(&desk));
    run(8, "simulator verification", &mut simulator_verification);
    run(9, "BHP reallocation", &mut bhp_reallocation);
    run(10, "multi-period ST & MADS", &mut || multi_period(workers, &desk));
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        if std::env::var("SURROFLOOD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
