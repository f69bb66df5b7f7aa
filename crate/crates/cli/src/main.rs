use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use surroflood::econ::npv_all_drilled;
use surroflood::mads::{mads_restarts, st_then_mads, ControlLayout, MadsConfig};
use surroflood::model::{load_case, write_field_file, CaseModel};
use surroflood::permgen::{generate_channel_perm, ChannelParams};
use surroflood::respmat::{cache_key, load_or_build, BuildOptions};
use surroflood::sim2p::{Controls, SimOptions, Simulator};
use surroflood::st_qp::RateRatios;
use surroflood::st_sweep::{equal_rate_base_cases, run_iterative_bhp_st, run_two_step_st, StConfig, StResult, SweepConfig};

#[derive(Parser)]
#[command(name = "surroflood", version, about = "Waterflood well-rate optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one two-phase simulation at fixed rate ratios.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Field injection in pore volumes over the horizon.
        #[arg(long, default_value_t = 1.0)]
        pvi: f64,
        /// Comma-separated rate ratios in well order; equal split if omitted.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        /// Comma-separated times (days) at which to dump pressure and saturation.
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Build (or load from cache) the velocity response matrices.
    BuildResponse {
        #[command(flatten)]
        common: Common,
        /// Also write one velocity CSV per well.
        #[arg(long)]
        columns: bool,
    },
    /// Two-step optimization: rate ratios from the QP, then a field-rate sweep.
    RunSt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Two-step optimization repeated with bounds on BHP-limited wells.
    RunStIterative {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = 5)]
        max_iters: usize,
    },
    /// Pattern search from the center point and random restarts.
    RunMads {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mads: MadsArgs,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
    },
    /// Two-step optimization used as the starting point of a pattern search.
    RunStMads {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        mads: MadsArgs,
    },
    /// Equal-rate NPVs at a list of PVI values.
    BaseCases {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.75,1.25,1.5,2.0")]
        pvi: Vec<f64>,
    },
    /// Write a seeded channelized permeability field.
    GenPerm {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long, default_value_t = 1)]
        nz: usize,
        #[arg(long, default_value_t = 4)]
        channels: usize,
        #[arg(long, default_value_t = 1000.0)]
        k_channel: f64,
        #[arg(long, default_value_t = 10.0)]
        k_background: f64,
        /// Channel width in cells; defaults to ny/12.
        #[arg(long)]
        width: Option<f64>,
        /// Meander amplitude as a fraction of ny.
        #[arg(long, default_value_t = 0.12)]
        amplitude: f64,
        /// Meander wavelength as a fraction of nx.
        #[arg(long, default_value_t = 0.6)]
        wavelength: f64,
        /// File name inside the output directory; `.csv`/`.txt` write text.
        #[arg(long, default_value = "perm.bin")]
        file: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "SURROFLOOD_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 0.5)]
    pvi_lo: f64,
    #[arg(long, default_value_t = 2.5)]
    pvi_hi: f64,
    #[arg(long, default_value_t = 41)]
    pvi_points: usize,
    /// Add a finer sweep around the best point.
    #[arg(long)]
    refine: bool,
    /// Directory for cached response matrices.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct MadsArgs {
    #[arg(long, default_value_t = 1)]
    periods: usize,
    #[arg(long, default_value_t = 15)]
    max_iter: usize,
    #[arg(long, default_value_t = 0.25)]
    initial_mesh: f64,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    case: Option<String>,
    seed: u64,
    workers: usize,
    out: String,
    version: String,
    inputs: Vec<InputHash>,
}

#[derive(Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// The case file and every field file it references.
fn input_hashes(case: &Path) -> Result<Vec<InputHash>> {
    let mut out = vec![InputHash {
        path: case.display().to_string(),
        sha256: sha256_file(case)?,
    }];
    let text = std::fs::read_to_string(case)?;
    let doc: toml::Value = toml::from_str(&text).context("parsing case file")?;
    let base = case.parent().unwrap_or_else(|| Path::new("."));
    let mut files = Vec::new();
    collect_files(&doc, &mut files);
    files.sort();
    files.dedup();
    for f in files {
        let p = base.join(&f);
        out.push(InputHash {
            path: p.display().to_string(),
            sha256: sha256_file(&p)?,
        });
    }
    Ok(out)
}

fn collect_files(v: &toml::Value, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                match (k.as_str(), v) {
                    ("file", toml::Value::String(s)) => out.push(s.clone()),
                    _ => collect_files(v, out),
                }
            }
        }
        toml::Value::Array(a) => a.iter().for_each(|v| collect_files(v, out)),
        _ => {}
    }
}

struct Run {
    out: PathBuf,
    started: Instant,
}

impl Run {
    fn start(name: &str, case: Option<&Path>, seed: u64, workers: usize, out: &Path) -> Result<Run> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let manifest = RunManifest {
            command: name.to_string(),
            args: std::env::args().skip(1).collect(),
            case: case.map(|c| c.display().to_string()),
            seed,
            workers,
            out: out.display().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: match case {
                Some(c) => input_hashes(c)?,
                None => Vec::new(),
            },
        };
        std::fs::write(out.join("manifest.toml"), toml::to_string(&manifest)?)?;
        Ok(Run {
            out: out.to_path_buf(),
            started: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes `summary.txt` with the run's results and a separate timing table.
    fn finish<T: Serialize>(&self, summary: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Timing {
            wall_seconds: f64,
        }
        #[derive(Serialize)]
        struct Doc<'a, T> {
            result: &'a T,
            timing: Timing,
        }
        let doc = Doc {
            result: summary,
            timing: Timing {
                wall_seconds: self.started.elapsed().as_secs_f64(),
            },
        };
        std::fs::write(self.path("summary.txt"), toml::to_string(&doc)?)?;
        Ok(())
    }
}

fn load(common: &Common) -> Result<CaseModel> {
    load_case(&common.case).with_context(|| format!("case: loading {}", common.case.display()))
}

fn st_config(common: &Common, s: &SweepArgs) -> StConfig {
    StConfig {
        sweep: SweepConfig {
            pvi_lo: s.pvi_lo,
            pvi_hi: s.pvi_hi,
            n_points: s.pvi_points,
            refine: s.refine,
            workers: common.workers,
            ..SweepConfig::default()
        },
        build: BuildOptions {
            workers: common.workers,
            ..BuildOptions::default()
        },
        cache_dir: s.cache.clone(),
        ..StConfig::default()
    }
}

fn mads_config(common: &Common, m: &MadsArgs) -> MadsConfig {
    MadsConfig {
        initial_mesh: m.initial_mesh,
        max_iter: m.max_iter,
        seed: common.seed,
        workers: common.workers,
        ..MadsConfig::default()
    }
}

#[derive(Serialize)]
struct StSummary {
    wells: Vec<String>,
    f_star: Vec<f64>,
    qp_objective: f64,
    kkt_residual: f64,
    pvi_star: f64,
    q_star: f64,
    npv_star: f64,
    on_boundary: bool,
    reallocation_applied: bool,
    full_evaluations: usize,
    pss_solves: usize,
    parallel_units: f64,
    iterations: usize,
}

fn st_summary(model: &CaseModel, st: &StResult) -> StSummary {
    StSummary {
        wells: model.wells.iter().map(|w| w.name.clone()).collect(),
        f_star: st.f_star.f.clone(),
        qp_objective: st.qp_objective,
        kkt_residual: st.kkt_residual,
        pvi_star: st.sweep.pvi_star,
        q_star: st.sweep.q_star,
        npv_star: st.npv(),
        on_boundary: st.sweep.on_boundary,
        reallocation_applied: st.reallocation_applied,
        full_evaluations: st.cost.full_evaluations,
        pss_solves: st.cost.pss_solves,
        parallel_units: st.cost.parallel_units,
        iterations: st.iterations.len(),
    }
}

fn simulate(common: &Common, pvi: f64, ratios: Option<&[f64]>, snapshots: Option<&[f64]>) -> Result<()> {
    let model = load(common)?;
    let run = Run::start("simulate", Some(&common.case), common.seed, common.workers, &common.out)?;
    let kinds = model.kinds();
    let f = match ratios {
        Some(r) => RateRatios::new(r.to_vec(), kinds).context("ratios")?,
        None => RateRatios::uniform(&kinds),
    };
    let opts = SimOptions {
        snapshot_times: snapshots.map(|s| s.to_vec()).unwrap_or_default(),
        ..SimOptions::default()
    };
    let controls = Controls::from_reservoir_rates(&model, &f.signed_rates(model.field_rate_for_pvi(pvi)));
    let result = Simulator::new(&model, opts)
        .context("simulate")?
        .run(&controls)
        .context("simulate")?;
    result.write_csv(&run.path("steps.csv"))?;
    if !result.snapshots.is_empty() {
        result.write_snapshots(&run.out)?;
    }
    let npv = npv_all_drilled(&result, &model.economics).context("econ")?;

    #[derive(Serialize)]
    struct Summary {
        pvi: f64,
        ratios: Vec<f64>,
        steps: usize,
        pressure_solves: usize,
        cum_oil: Vec<f64>,
        cum_water_prod: Vec<f64>,
        cum_water_inj: Vec<f64>,
        switched_wells: Vec<String>,
        max_material_balance_error: f64,
        npv: surroflood::econ::NpvBreakdown,
    }
    run.finish(&Summary {
        pvi,
        ratios: f.f.clone(),
        steps: result.steps.len(),
        pressure_solves: result.pressure_solves,
        cum_oil: result.cum_oil.clone(),
        cum_water_prod: result.cum_water_prod.clone(),
        cum_water_inj: result.cum_water_inj.clone(),
        switched_wells: result.switches.iter().map(|s| model.wells[s.well].name.clone()).collect(),
        max_material_balance_error: result.max_mb_error(),
        npv,
    })
}

fn build_response(common: &Common, columns: bool) -> Result<()> {
    let model = load(common)?;
    let run = Run::start("build-response", Some(&common.case), common.seed, common.workers, &common.out)?;
    let opts = BuildOptions {
        workers: common.workers,
        ..BuildOptions::default()
    };
    let (resp, cached) = load_or_build(&model, &run.out, &opts).context("respmat")?;
    if columns {
        for (j, w) in model.wells.iter().enumerate() {
            resp.write_column_csv(j, &run.path(&format!("velocity_{}.csv", w.name)))?;
        }
    }

    #[derive(Serialize)]
    struct Summary {
        key: String,
        n_cells: usize,
        n_wells: usize,
        loaded_from_cache: bool,
    }
    run.finish(&Summary {
        key: cache_key(&model),
        n_cells: resp.n_cells,
        n_wells: resp.n_wells(),
        loaded_from_cache: cached,
    })
}

fn run_st(common: &Common, s: &SweepArgs, iterative: Option<usize>) -> Result<()> {
    let model = load(common)?;
    let name = if iterative.is_some() { "run-st-iterative" } else { "run-st" };
    let run = Run::start(name, Some(&common.case), common.seed, common.workers, &common.out)?;
    let cfg = st_config(common, s);
    let st = match iterative {
        Some(n) => run_iterative_bhp_st(&model, &model.economics, &cfg, n),
        None => run_two_step_st(&model, &model.economics, &cfg),
    }
    .context("st")?;
    st.sweep.write_csv(&run.path("sweep.csv"))?;
    run.finish(&st_summary(&model, &st))
}

fn run_mads(common: &Common, m: &MadsArgs, restarts: usize) -> Result<()> {
    let base = load(common)?;
    let model = CaseModel {
        schedule: base.schedule.with_periods(m.periods),
        ..base
    };
    let run = Run::start("run-mads", Some(&common.case), common.seed, common.workers, &common.out)?;
    let layout = ControlLayout::new(&model, m.periods).context("mads")?;
    let cfg = mads_config(common, m);
    let summary = mads_restarts(&model, &model.economics, &layout, &SimOptions::default(), &cfg, restarts)
        .context("mads")?;
    for (r, res) in summary.runs.iter().enumerate() {
        res.write_history_csv(&run.path(&format!("history_{r}.csv")))?;
    }

    #[derive(Serialize)]
    struct RunSummary {
        npv: f64,
        initial_npv: f64,
        evaluations: usize,
        iterations: usize,
        parallel_units: f64,
        x_best: Vec<f64>,
    }
    #[derive(Serialize)]
    struct Summary {
        periods: usize,
        n_opt: usize,
        restarts: usize,
        median_npv: f64,
        min_npv: f64,
        max_npv: f64,
        median_evaluations: f64,
        median_iterations: f64,
        runs: Vec<RunSummary>,
    }
    run.finish(&Summary {
        periods: m.periods,
        n_opt: layout.n_opt(),
        restarts,
        median_npv: summary.median,
        min_npv: summary.min,
        max_npv: summary.max,
        median_evaluations: summary.median_evaluations,
        median_iterations: summary.median_iterations,
        runs: summary
            .runs
            .iter()
            .map(|r| RunSummary {
                npv: r.f_best,
                initial_npv: r.f_initial,
                evaluations: r.evaluations,
                iterations: r.iterations,
                parallel_units: r.parallel_units(),
                x_best: r.x_best.clone(),
            })
            .collect(),
    })
}

fn run_st_mads(common: &Common, s: &SweepArgs, m: &MadsArgs) -> Result<()> {
    let model = load(common)?;
    let run = Run::start("run-st-mads", Some(&common.case), common.seed, common.workers, &common.out)?;
    let res = st_then_mads(&model, &model.economics, &st_config(common, s), &mads_config(common, m), m.periods)
        .context("st-mads")?;
    res.st.sweep.write_csv(&run.path("sweep.csv"))?;
    res.mads.write_history_csv(&run.path("history.csv"))?;
    let settings = res.layout.decode(&res.mads.x_best).context("st-mads")?;

    #[derive(Serialize)]
    struct Period {
        ratios: Vec<f64>,
        pvi: f64,
    }
    #[derive(Serialize)]
    struct Summary {
        st: StSummary,
        periods: usize,
        refined_npv: f64,
        mads_evaluations: usize,
        mads_iterations: usize,
        mads_parallel_units: f64,
        controls: Vec<Period>,
    }
    run.finish(&Summary {
        st: st_summary(&model, &res.st),
        periods: m.periods,
        refined_npv: res.refined_npv,
        mads_evaluations: res.mads.evaluations,
        mads_iterations: res.mads.iterations,
        mads_parallel_units: res.mads.parallel_units(),
        controls: settings
            .into_iter()
            .map(|p| Period {
                ratios: p.ratios.f,
                pvi: p.pvi,
            })
            .collect(),
    })
}

fn base_cases(common: &Common, pvi: &[f64]) -> Result<()> {
    let model = load(common)?;
    let run = Run::start("base-cases", Some(&common.case), common.seed, common.workers, &common.out)?;
    let cfg = SweepConfig {
        workers: common.workers,
        ..SweepConfig::default()
    };
    let cases = equal_rate_base_cases(&model, &model.economics, pvi, &cfg).context("base-cases")?;
    let mut csv = String::from("pvi,q,npv\n");
    for c in &cases {
        csv.push_str(&format!("{},{},{}\n", c.pvi, c.q, c.npv));
    }
    std::fs::write(run.path("base_cases.csv"), csv)?;
    let best = cases
        .iter()
        .max_by(|a, b| a.npv.total_cmp(&b.npv))
        .expect("at least one base case");

    #[derive(Serialize)]
    struct Summary<'a> {
        cases: &'a [surroflood::st_sweep::BaseCase],
        best_pvi: f64,
        best_q: f64,
        best_npv: f64,
    }
    run.finish(&Summary {
        cases: &cases,
        best_pvi: best.pvi,
        best_q: best.q,
        best_npv: best.npv,
    })
}

fn gen_perm(
    out: &Path,
    seed: u64,
    params: ChannelParams,
    file: &str,
) -> Result<()> {
    let run = Run::start("gen-perm", None, seed, 1, out)?;
    let k = generate_channel_perm(&params, seed).context("gen-perm")?;
    write_field_file(&run.path(file), &k).context("gen-perm")?;
    let high = k.iter().filter(|v| **v == params.k_channel).count();

    #[derive(Serialize)]
    struct Summary {
        file: String,
        sha256: String,
        params: ChannelParams,
        channel_fraction: f64,
    }
    run.finish(&Summary {
        file: file.to_string(),
        sha256: sha256_file(&run.path(file))?,
        channel_fraction: high as f64 / k.len() as f64,
        params,
    })
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            pvi,
            ratios,
            snapshots,
        } => simulate(&common, pvi, ratios.as_deref(), snapshots.as_deref()),
        Command::BuildResponse { common, columns } => build_response(&common, columns),
        Command::RunSt { common, sweep } => run_st(&common, &sweep, None),
        Command::RunStIterative {
            common,
            sweep,
            max_iters,
        } => run_st(&common, &sweep, Some(max_iters)),
        Command::RunMads {
            common,
            mads,
            restarts,
        } => run_mads(&common, &mads, restarts),
        Command::RunStMads { common, sweep, mads } => run_st_mads(&common, &sweep, &mads),
        Command::BaseCases { common, pvi } => base_cases(&common, &pvi),
        Command::GenPerm {
            out,
            seed,
            nx,
            ny,
            nz,
            channels,
            k_channel,
            k_background,
            width,
            amplitude,
            wavelength,
            file,
        } => {
            let mut params = ChannelParams::new(nx, ny, nz, channels);
            params.k_channel = k_channel;
            params.k_background = k_background;
            params.amplitude = amplitude;
            params.wavelength = wavelength;
            if let Some(w) = width {
                params.width = w;
            }
            if file.contains(['/', '\\']) {
                bail!("gen-perm: --file must be a plain file name");
            }
            gen_perm(&out, seed, params, &file)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
