//! Command-line front end: scenario loading, the four subcommands
//! (`sweep`, `adaptive`, `design`, `check`), and CSV/report emission.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
//! failures. CSV numbers are written with 17 significant digits so repeated
//! runs are byte-identical and downstream regressions are bit-stable.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::config::{self, DesignChoice, InitSpec, ScenarioConfig};
use crate::designs::{
    augmented_cost, design1_optimize, design2_optimize, design3_lqr, static_gains, CostReport,
    Design2Mode,
};
use crate::error::{Error, Result};
use crate::fem::{build_fem, interpolate, FemModel};
use crate::graph::{deviation_operator, laplacian_from_gains, EdgeGains, Topology};
use crate::mateq::{is_hurwitz, kappa_margin, solve_are, solve_lyapunov};
use crate::network::{aggregate_weight, assemble_augmented, assemble_closed_loop};
use crate::sim::{simulate_adaptive, simulate_constant, SimTrace};

#[derive(Parser)]
#[command(
    name = "netsync",
    about = "Synchronization experiments for networks of 1D diffusion systems",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct CommonOpts {
    /// Scenario file; omitted fields keep the subcommand's benchmark values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory for CSV files and reports.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for sweep evaluation (0 = one per core).
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub jobs: usize,

    /// Integrator step override.
    #[arg(long, value_name = "DT")]
    pub dt: Option<f64>,

    /// Horizon override.
    #[arg(long, value_name = "T")]
    pub t_end: Option<f64>,

    /// Sweep grid override, start:stop:step.
    #[arg(long, value_name = "A:B:STEP")]
    pub grid: Option<String>,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Sweep the uniform coupling gain and tabulate trajectory costs.
    Sweep(CommonOpts),
    /// Compare adaptive gains against constant gains from the same start.
    Adaptive(CommonOpts),
    /// Run a gain-design procedure and verify the designed loop.
    Design {
        /// Which procedure: 1, 2, 3, or static.
        which: Option<String>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Run the internal consistency checks.
    Check(CommonOpts),
}

/// Parse `std::env::args`, run the selected subcommand, and map errors to
/// the documented exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Sweep(opts) => {
            let cfg = load_scenario(&opts, ScenarioConfig::sweep_defaults())?;
            init_pool(opts.jobs);
            cmd_sweep(&cfg, &opts.out)
        }
        Cmd::Adaptive(opts) => {
            let cfg = load_scenario(&opts, ScenarioConfig::adaptive_defaults())?;
            init_pool(opts.jobs);
            cmd_adaptive(&cfg, &opts.out)
        }
        Cmd::Design { which, opts } => {
            let cfg = load_scenario(&opts, ScenarioConfig::design_defaults())?;
            init_pool(opts.jobs);
            let which = match which {
                Some(s) => DesignChoice::parse(&s).ok_or_else(|| Error::Config {
                    line: 0,
                    field: "design".into(),
                    msg: format!("expected 1, 2, 3, or static, got '{s}'"),
                })?,
                None => cfg.design_which.ok_or_else(|| Error::Config {
                    line: 0,
                    field: "design.which".into(),
                    msg: "no design selected; pass it on the command line or set [design] which"
                        .into(),
                })?,
            };
            cmd_design(&cfg, which, &opts.out)
        }
        Cmd::Check(opts) => {
            init_pool(opts.jobs);
            cmd_check()
        }
    }
}

fn init_pool(jobs: usize) {
    if jobs > 0 {
        // Ignore "already initialized": only reachable when embedding the
        // dispatcher in a process that already configured rayon.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn load_scenario(opts: &CommonOpts, base: ScenarioConfig) -> Result<ScenarioConfig> {
    let mut cfg = base;
    if let Some(path) = &opts.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            line: 0,
            field: "--config".into(),
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        cfg.apply_str(&text)?;
    }
    if let Some(dt) = opts.dt {
        cfg.dt = dt;
    }
    if let Some(t_end) = opts.t_end {
        cfg.t_end = t_end;
    }
    if let Some(grid) = &opts.grid {
        cfg.grid = config::parse_grid(grid).map_err(|msg| Error::Config {
            line: 0,
            field: "--grid".into(),
            msg,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// 17-significant-digit scientific notation: enough to reconstruct the exact
/// double, stable across runs.
fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv<I: Iterator<Item = String>>(path: &Path, header: &str, rows: I) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    f.flush()?;
    Ok(())
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    Ok(())
}

fn scenario_summary(cfg: &ScenarioConfig, topo: &Topology) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "mesh: n = {}, a1 = {}, pulse = box({}, width {})\n",
        cfg.n, cfg.a1, cfg.pulse_center, cfg.pulse_width
    ));
    s.push_str(&format!("gains: c_k = {}, c_f = {}\n", cfg.c_k, cfg.c_f));
    let edges: Vec<String> = topo
        .edges_one_based()
        .iter()
        .map(|(i, j)| format!("{i}-{j}"))
        .collect();
    s.push_str(&format!(
        "topology: {} agents, edges {}\n",
        topo.n_agents(),
        edges.join(", ")
    ));
    let init = match &cfg.init {
        InitSpec::Paper => "builtin benchmark profiles".to_string(),
        InitSpec::Expressions(e) => format!("{} custom expressions", e.len()),
    };
    s.push_str(&format!("initial profiles: {init}\n"));
    s.push_str(&format!(
        "integrator: fixed-step RK4, requested dt = {}, horizon t_end = {}\n",
        cfg.dt, cfg.t_end
    ));
    s
}

fn pair_label(pair: (usize, usize)) -> String {
    format!("alpha_{}_{}", pair.0 + 1, pair.1 + 1)
}

fn gain_lines(gains: &EdgeGains) -> String {
    let mut s = String::new();
    for ((i, j), v) in gains.iter() {
        s.push_str(&format!("  {} = {}\n", pair_label((i, j)), v));
    }
    s
}

/// Integrator provenance for reports: requested vs actually-used step.
fn step_note(trace: &SimTrace, requested: f64) -> String {
    if trace.halvings == 0 {
        format!("dt = {}", trace.dt)
    } else {
        format!(
            "dt = {} (requested {} halved {} times for stability)",
            trace.dt, requested, trace.halvings
        )
    }
}

/// Sweep the uniform gain over the configured grid, write `sweep.csv`, the
/// per-α deviation traces, and a report flagging the argmin row.
pub fn cmd_sweep(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let fem = cfg.build_fem()?;
    let topo = cfg.build_topology()?;
    let x0 = cfg.build_initial_states(&fem)?;
    let grid = cfg.grid_points();

    let (best, report) = design2_optimize(
        &fem,
        &topo,
        &x0,
        Design2Mode::UniformSweep { grid },
        cfg.t_end,
        cfg.dt,
    )?;
    let table = report.sweep_table.as_ref().expect("uniform mode tabulates");

    write_csv(
        &out.join("sweep.csv"),
        "alpha,j2,j1,control_energy",
        table.iter().map(|(a, j2, j1, e)| {
            format!("{},{},{},{}", fmt_f(*a), fmt_f(*j2), fmt_f(*j1), fmt_f(*e))
        }),
    )?;

    let mut trace_files = Vec::new();
    for &alpha in &cfg.trace_alphas {
        let gains = EdgeGains::uniform(&topo, alpha)?;
        let sys = assemble_closed_loop(&fem, &topo, &gains)?;
        let trace = simulate_constant(&sys, &x0, cfg.t_end, cfg.dt)?;
        let name = format!("zs_alpha_{alpha}.csv");
        write_csv(
            &out.join(&name),
            "t,z_norm",
            trace
                .times
                .iter()
                .zip(&trace.z_norm)
                .map(|(t, z)| format!("{},{}", fmt_f(*t), fmt_f(*z))),
        )?;
        trace_files.push(name);
    }

    let best_alpha = best.values().first().copied().unwrap_or(0.0);
    let best_row = table
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.1.total_cmp(&b.1))
        .expect("table is nonempty");
    let (argmin_idx, &(_, best_j2, _, _)) = best_row;
    let first = table.first().expect("nonempty");
    let last = table.last().expect("nonempty");
    let interior =
        argmin_idx > 0 && argmin_idx + 1 < table.len() && best_j2 < first.1 && best_j2 < last.1;

    let mut rpt = String::new();
    rpt.push_str("uniform gain sweep\n");
    rpt.push_str("==================\n\n");
    rpt.push_str(&scenario_summary(cfg, &topo));
    rpt.push_str(&format!(
        "grid: {}:{}:{} ({} points)\n\n",
        cfg.grid.0,
        cfg.grid.1,
        cfg.grid.2,
        table.len()
    ));
    rpt.push_str(&format!(
        "argmin: alpha = {} with j2 = {:.6e}  <-- minimum\n",
        best_alpha, best_j2
    ));
    rpt.push_str(&format!(
        "endpoints: j2({}) = {:.6e}, j2({}) = {:.6e}\n",
        first.0, first.1, last.0, last.1
    ));
    rpt.push_str(&format!(
        "interior minimum: {}\n\n",
        if interior { "yes" } else { "no" }
    ));
    rpt.push_str("files: sweep.csv (alpha, j2, j1, control_energy)\n");
    for f in &trace_files {
        rpt.push_str(&format!("       {f} (t, z_norm)\n"));
    }
    write_text(&out.join("sweep_report"), &rpt)?;
    Ok(())
}

/// Run the adaptive law and a constant-gain reference from the same initial
/// gains; write `compare.csv`, `gains.csv`, `mean_state.csv`, and a report.
pub fn cmd_adaptive(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let fem = cfg.build_fem()?;
    let topo = cfg.build_topology()?;
    let x0 = cfg.build_initial_states(&fem)?;
    let gains0 = EdgeGains::uniform(&topo, cfg.alpha0)?;

    let adaptive = simulate_adaptive(
        &fem, &topo, &x0, &gains0, cfg.gamma, cfg.sigma, cfg.t_end, cfg.dt,
    )?;
    let sys = assemble_closed_loop(&fem, &topo, &gains0)?;
    let constant = simulate_constant(&sys, &x0, cfg.t_end, cfg.dt)?;
    // Both runs derive their stability bound from the same initial closed
    // loop, so the step grids coincide.
    if adaptive.len() != constant.len() {
        return Err(Error::Dimension(format!(
            "adaptive and constant runs recorded {} vs {} steps",
            adaptive.len(),
            constant.len()
        )));
    }

    write_csv(
        &out.join("compare.csv"),
        "t,z_norm_adaptive,z_norm_constant,w_adaptive",
        (0..adaptive.len()).map(|k| {
            format!(
                "{},{},{},{}",
                fmt_f(adaptive.times[k]),
                fmt_f(adaptive.z_norm[k]),
                fmt_f(constant.z_norm[k]),
                fmt_f(adaptive.w_value[k])
            )
        }),
    )?;

    let labels: Vec<String> = topo
        .ordered_pairs()
        .iter()
        .map(|&p| pair_label(p))
        .collect();
    write_csv(
        &out.join("gains.csv"),
        &format!("t,{}", labels.join(",")),
        (0..adaptive.len()).map(|k| {
            let mut row = fmt_f(adaptive.times[k]);
            for v in &adaptive.gain_history[k] {
                row.push(',');
                row.push_str(&fmt_f(*v));
            }
            row
        }),
    )?;

    let nodes = fem.nodes();
    let mean_of = |states: &[crate::fem::SpatialField]| -> crate::fem::SpatialField {
        let mut mean = states[0].clone();
        for s in &states[1..] {
            mean += s;
        }
        mean / states.len() as f64
    };
    let mean_adaptive = mean_of(&adaptive.final_states);
    let mean_constant = mean_of(&constant.final_states);
    write_csv(
        &out.join("mean_state.csv"),
        "xi,x_mean_adaptive,x_mean_constant",
        (0..fem.n).map(|j| {
            format!(
                "{},{},{}",
                fmt_f(nodes[j]),
                fmt_f(mean_adaptive[j]),
                fmt_f(mean_constant[j])
            )
        }),
    )?;

    let z_end_a = *adaptive.z_norm.last().expect("nonempty run");
    let z_end_c = *constant.z_norm.last().expect("nonempty run");
    let final_gains = adaptive.gain_history.last().expect("nonempty run");
    let (lo, hi) = final_gains
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });

    let mut rpt = String::new();
    rpt.push_str("adaptive vs constant gains\n");
    rpt.push_str("==========================\n\n");
    rpt.push_str(&scenario_summary(cfg, &topo));
    rpt.push_str(&format!(
        "adaptation: gamma = {}, sigma = {}, alpha0 = {}\n",
        cfg.gamma, cfg.sigma, cfg.alpha0
    ));
    rpt.push_str(&format!("step: {}\n\n", step_note(&adaptive, cfg.dt)));
    rpt.push_str(&format!(
        "final deviation |Z({})|: adaptive = {:.6e}, constant = {:.6e}\n",
        cfg.t_end, z_end_a, z_end_c
    ));
    rpt.push_str(&format!(
        "adaptive improvement: {}\n",
        if z_end_a <= z_end_c { "yes" } else { "no" }
    ));
    rpt.push_str(&format!("final gain range: [{lo:.6e}, {hi:.6e}]\n\n"));
    rpt.push_str("files: compare.csv (t, z_norm_adaptive, z_norm_constant, w_adaptive)\n");
    rpt.push_str("       gains.csv (t, per-pair gains)\n");
    rpt.push_str("       mean_state.csv (xi, mean state at t_end for both runs)\n");
    write_text(&out.join("adaptive_report"), &rpt)?;
    Ok(())
}

/// Run one design procedure, simulate the designed loop, and write
/// `design_<k>_report` plus a verification trace CSV.
pub fn cmd_design(cfg: &ScenarioConfig, which: DesignChoice, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let fem = cfg.build_fem()?;
    let topo = cfg.build_topology()?;
    let x0 = cfg.build_initial_states(&fem)?;

    match which {
        DesignChoice::One => {
            let init = cfg.build_gains(&topo)?;
            let (gains, report) = design1_optimize(&fem, &topo, cfg.design_symmetric, &init)?;
            let trace = verify_gains(cfg, &fem, &topo, &gains, &x0, out, "design_1_trace.csv")?;
            let body = constant_design_body(cfg, &fem, &topo, &gains, &trace, &report)?;
            let mut rpt = header_block("design 1: Lyapunov trace minimization", cfg, &topo);
            rpt.push_str(&format!(
                "search: Nelder-Mead over {} gains ({}), clamped to [0, {}]\n",
                if cfg.design_symmetric {
                    topo.edges().len()
                } else {
                    topo.ordered_pairs().len()
                },
                if cfg.design_symmetric {
                    "symmetric"
                } else {
                    "directed"
                },
                crate::designs::DESIGN1_GAIN_CAP,
            ));
            rpt.push_str(&body);
            write_text(&out.join("design_1_report"), &rpt)?;
        }
        DesignChoice::Two => {
            let mode = if cfg.design_multi {
                Design2Mode::MultiGain
            } else {
                Design2Mode::UniformSweep {
                    grid: cfg.grid_points(),
                }
            };
            let (gains, report) = design2_optimize(&fem, &topo, &x0, mode, cfg.t_end, cfg.dt)?;
            let trace = verify_gains(cfg, &fem, &topo, &gains, &x0, out, "design_2_trace.csv")?;
            let body = constant_design_body(cfg, &fem, &topo, &gains, &trace, &report)?;
            let mut rpt = header_block("design 2: trajectory cost minimization", cfg, &topo);
            if let Some(table) = &report.sweep_table {
                let (a, j2, _, _) = table
                    .iter()
                    .copied()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("nonempty grid");
                rpt.push_str(&format!(
                    "mode: uniform sweep over {} grid points; argmin alpha = {a} (j2 = {j2:.6e})\n",
                    table.len()
                ));
            } else {
                rpt.push_str("mode: per-edge search (Nelder-Mead, symmetric gains)\n");
            }
            rpt.push_str(&body);
            write_text(&out.join("design_2_report"), &rpt)?;
        }
        DesignChoice::Static => {
            let gains = static_gains(&fem, &topo, &x0)?;
            let trace = verify_gains(
                cfg,
                &fem,
                &topo,
                &gains,
                &x0,
                out,
                "design_static_trace.csv",
            )?;
            let mut report = CostReport {
                design_id: "static".into(),
                gains: Some(gains.clone()),
                laplacian: None,
                j1: None,
                j2: None,
                j3: None,
                trace_pi: None,
                residual: None,
                pi: None,
                sweep_table: None,
                wall_time: std::time::Duration::ZERO,
            };
            report.j1 = Some(trace.cost_j1());
            report.j2 = Some(trace.cost_j2());
            let body = constant_design_body(cfg, &fem, &topo, &gains, &trace, &report)?;
            let mut rpt = header_block("static design: initial-mismatch gains", cfg, &topo);
            rpt.push_str(&body);
            write_text(&out.join("design_static_report"), &rpt)?;
        }
        DesignChoice::Three => {
            let gains = cfg.build_gains(&topo)?;
            let lap = laplacian_from_gains(&topo, &gains)?;
            let (gain, report) = design3_lqr(&fem, &topo, &lap)?;

            let (a_open, b_tilde) = assemble_augmented(&fem, &topo, &lap)?;
            let q_weight = aggregate_weight(&fem, topo.n_agents())?;
            let (j3, rows) = augmented_cost(
                &fem, &a_open, &b_tilde, &gain, &q_weight, &x0, cfg.t_end, cfg.dt,
            )?;
            write_csv(
                &out.join("design_3_trace.csv"),
                "t,x_norm,z_norm",
                rows.iter()
                    .map(|r| format!("{},{},{}", fmt_f(r[0]), fmt_f(r[1]), fmt_f(r[2]))),
            )?;

            let p = report.pi.as_ref().expect("riccati solution retained");
            let q0 = crate::network::stack_states(&fem, &x0)?;
            let predicted = (p * &q0).dot(&q0);
            let a_closed = &a_open - &b_tilde * &gain;
            let (_, abscissa) = is_hurwitz(&a_closed)?;
            let coupling = cross_agent_magnitude(&gain, topo.n_agents(), fem.n);

            let mut rpt = header_block("design 3: LQR on the augmented system", cfg, &topo);
            rpt.push_str("coupling laplacian:\n");
            rpt.push_str(&matrix_lines(lap.matrix()));
            rpt.push_str(&format!("\ntrace_p = {:.6e}\n", report.trace_pi.unwrap()));
            rpt.push_str(&format!(
                "riccati_residual = {:.3e}\n",
                report.residual.unwrap()
            ));
            rpt.push_str(&format!("closed_loop_abscissa = {abscissa:.6e}\n"));
            rpt.push_str(&format!(
                "gain shape: {} x {} (rows 1..{} drive per-agent actuation, rows {}..{} the coupling channel)\n",
                gain.nrows(),
                gain.ncols(),
                topo.n_agents(),
                topo.n_agents() + 1,
                2 * topo.n_agents()
            ));
            rpt.push_str(&format!(
                "gain coupling: {}\n",
                if coupling <= 1e-12 {
                    "block-diagonal (no cross-agent terms)".to_string()
                } else {
                    format!("dense (max cross-agent magnitude {coupling:.3e})")
                }
            ));
            rpt.push_str(&format!(
                "\nj3 quadrature over [0, {}] = {:.6e}\n",
                cfg.t_end, j3
            ));
            rpt.push_str(&format!(
                "predicted infinite-horizon cost x0'·P·x0 = {predicted:.6e}\n"
            ));
            rpt.push_str(&format!(
                "wall_time_s = {:.3}\n",
                report.wall_time.as_secs_f64()
            ));
            rpt.push_str("\nfiles: design_3_trace.csv (t, x_norm, z_norm)\n");
            write_text(&out.join("design_3_report"), &rpt)?;
        }
    }
    Ok(())
}

fn header_block(title: &str, cfg: &ScenarioConfig, topo: &Topology) -> String {
    let mut s = String::new();
    s.push_str(title);
    s.push('\n');
    s.push_str(&"=".repeat(title.len()));
    s.push_str("\n\n");
    s.push_str(&scenario_summary(cfg, topo));
    s.push('\n');
    s
}

/// Simulate the constant-gain loop at the designed gains and write its
/// deviation trace; shared by designs 1, 2, and static.
fn verify_gains(
    cfg: &ScenarioConfig,
    fem: &FemModel,
    topo: &Topology,
    gains: &EdgeGains,
    x0: &[crate::fem::SpatialField],
    out: &Path,
    trace_name: &str,
) -> Result<SimTrace> {
    let sys = assemble_closed_loop(fem, topo, gains)?;
    let trace = simulate_constant(&sys, x0, cfg.t_end, cfg.dt)?;
    write_csv(
        &out.join(trace_name),
        "t,x_norm,z_norm",
        (0..trace.len()).map(|k| {
            format!(
                "{},{},{}",
                fmt_f(trace.times[k]),
                fmt_f(trace.x_norm[k]),
                fmt_f(trace.z_norm[k])
            )
        }),
    )?;
    Ok(trace)
}

/// Report body shared by the gain-valued designs: chosen gains, costs,
/// certificates, and closed-loop diagnostics.
fn constant_design_body(
    cfg: &ScenarioConfig,
    fem: &FemModel,
    topo: &Topology,
    gains: &EdgeGains,
    trace: &SimTrace,
    report: &CostReport,
) -> Result<String> {
    let sys = assemble_closed_loop(fem, topo, gains)?;
    let (_, abscissa) = is_hurwitz(&sys.a_cl)?;
    let kappa = kappa_margin(&sys.a_cl, &sys.q_weight).ok();

    let mut s = String::new();
    s.push_str("chosen gains:\n");
    s.push_str(&gain_lines(gains));
    if let Some(tr) = report.trace_pi {
        s.push_str(&format!("\ntrace_pi = {tr:.6e}\n"));
    }
    if let Some(res) = report.residual {
        s.push_str(&format!("lyapunov_residual = {res:.3e}\n"));
    }
    s.push_str(&format!(
        "\nverification run over [0, {}] ({}):\n",
        cfg.t_end,
        step_note(trace, cfg.dt)
    ));
    s.push_str(&format!("  j1 = {:.6e}\n", trace.cost_j1()));
    s.push_str(&format!("  j2 = {:.6e}\n", trace.cost_j2()));
    s.push_str(&format!(
        "  final |Z| = {:.6e}\n",
        trace.z_norm.last().copied().unwrap_or(0.0)
    ));
    s.push_str(&format!("closed_loop_abscissa = {abscissa:.6e}\n"));
    if let Some(k) = kappa {
        s.push_str(&format!("weighted_decay_margin = {k:.6e}\n"));
    }
    s.push_str(&format!(
        "wall_time_s = {:.3}\n",
        report.wall_time.as_secs_f64()
    ));
    Ok(s)
}

/// Largest magnitude the gain's per-agent actuation rows place on *other*
/// agents' states; zero means the feedback decouples across agents.
fn cross_agent_magnitude(gain: &DMatrix<f64>, n_agents: usize, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n_agents.min(gain.nrows()) {
        for j in 0..n_agents {
            if i == j {
                continue;
            }
            let block = gain.view((i, j * n), (1, n));
            worst = worst.max(block.amax());
        }
    }
    worst
}

fn matrix_lines(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        s.push_str("  ");
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Fast internal consistency suite: one `ok` line per check, first failure
/// aborts with a numerical-failure exit code.
pub fn cmd_check() -> Result<()> {
    let mut count = 0usize;
    let mut check = |name: &str, ok: bool, detail: String| -> Result<()> {
        if ok {
            count += 1;
            println!("ok - {name}: {detail}");
            Ok(())
        } else {
            Err(Error::CheckFailed {
                name: name.into(),
                msg: detail,
            })
        }
    };

    // Assembly: Gram matrices symmetric, actuation pulse integrates to one.
    let fem = build_fem(12, 0.05, 0.5, 0.1, 5e-4, 1e-2)?;
    let sym = (&fem.mass - fem.mass.transpose())
        .amax()
        .max((&fem.stiff - fem.stiff.transpose()).amax());
    let mass_defect = (fem.b_vec.sum() - 1.0).abs();
    check(
        "fem assembly",
        sym < 1e-14 && mass_defect < 1e-12,
        format!("symmetry defect {sym:.1e}, pulse mass defect {mass_defect:.1e}"),
    )?;

    // Discrete spectrum approximates the continuous one.
    let fem40 = build_fem(40, 0.05, 0.5, 0.1, 5e-4, 1e-2)?;
    let pi2 = std::f64::consts::PI.powi(2);
    let lam = fem40.dirichlet_spectrum()[0];
    let rel = (lam - pi2).abs() / pi2;
    check(
        "dirichlet spectrum",
        rel < 1e-3,
        format!("smallest eigenvalue {lam:.6} vs pi^2 (rel err {rel:.2e})"),
    )?;

    // Mean-deviation operator is an orthogonal projector.
    let c1 = deviation_operator(5)?;
    let idem = (&c1 * &c1 - &c1).amax();
    let rowsum = (0..5)
        .map(|i| (0..5).map(|j| c1[(i, j)]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    check(
        "deviation operator",
        idem < 1e-12 && rowsum < 1e-12,
        format!("idempotence defect {idem:.1e}, row sum {rowsum:.1e}"),
    )?;

    // Benchmark graph Laplacian: degrees on the diagonal, zero row sums.
    let topo5 = Topology::benchmark();
    let lap = laplacian_from_gains(&topo5, &EdgeGains::uniform(&topo5, 1.0)?)?;
    let want_diag = [3.0, 1.0, 1.0, 3.0, 2.0];
    let diag_ok = (0..5).all(|i| (lap.matrix()[(i, i)] - want_diag[i]).abs() < 1e-12);
    let lap_rows = (0..5)
        .map(|i| (0..5).map(|j| lap.matrix()[(i, j)]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    check(
        "graph laplacian",
        diag_ok && lap_rows < 1e-12,
        format!("diag (3,1,1,3,2), max row sum {lap_rows:.1e}"),
    )?;

    // Projection lands in the admissible Laplacian set.
    let topo3 = Topology::new(3, &[(1, 2), (2, 3)])?;
    let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 2.0, -1.0, 0.0, 3.0, 4.0, -2.0, 1.0]);
    let proj = crate::graph::project_to_theta(&m, &topo3)?;
    let pm = proj.matrix();
    let member = pm[(0, 1)] <= 0.0
        && pm[(1, 0)] <= 0.0
        && pm[(0, 2)] == 0.0
        && pm[(2, 0)] == 0.0
        && (0..3)
            .map(|i| (0..3).map(|j| pm[(i, j)]).sum::<f64>().abs())
            .fold(0.0, f64::max)
            < 1e-12;
    check(
        "theta projection",
        member,
        "off-diagonal signs, sparsity, and row sums".into(),
    )?;

    // Lyapunov solve leaves a tiny residual and an SPD certificate.
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
    let sol = solve_lyapunov(&a, &DMatrix::identity(2, 2))?;
    let spd = sol.p.clone().cholesky().is_some();
    check(
        "lyapunov solve",
        sol.residual_norm < 1e-12 && spd,
        format!("residual {:.1e}, certificate SPD", sol.residual_norm),
    )?;

    // Riccati: integrator plant with unit weights has the closed form p = 1.
    let one = DMatrix::from_element(1, 1, 1.0);
    let sol = solve_are(&DMatrix::zeros(1, 1), &one, &one, &one)?;
    let p_err = (sol.p[(0, 0)] - 1.0).abs();
    check(
        "riccati solve",
        p_err < 1e-12,
        format!("|p - 1| = {p_err:.1e}"),
    )?;

    // Block assembly agrees with the Kronecker form I⊗A_c − L⊗(b2·fᵀ).
    let fem6 = build_fem(6, 0.05, 0.5, 0.1, 5e-4, 1e-2)?;
    let gains3 = EdgeGains::uniform(&topo3, 0.7)?;
    let sys = assemble_closed_loop(&fem6, &topo3, &gains3)?;
    let lap3 = laplacian_from_gains(&topo3, &gains3)?;
    let bf = fem6.b2() * fem6.f_vec.transpose();
    let want = DMatrix::identity(3, 3).kronecker(&fem6.a_closed()) - lap3.matrix().kronecker(&bf);
    let kron_defect = (&sys.a_cl - want).amax();
    check(
        "kronecker structure",
        kron_defect < 1e-13,
        format!("max defect {kron_defect:.1e}"),
    )?;

    // Identical agents stay identical: the synchronized manifold is invariant.
    let fem8 = build_fem(8, 0.05, 0.5, 0.1, 5e-4, 1e-2)?;
    let profile = interpolate(&fem8, |xi| (std::f64::consts::PI * xi).sin())?;
    let x0_sync = vec![profile.clone(), profile.clone(), profile];
    let sys = assemble_closed_loop(&fem8, &topo3, &EdgeGains::uniform(&topo3, 0.5)?)?;
    let trace = simulate_constant(&sys, &x0_sync, 0.3, 1e-3)?;
    let z_max = trace.z_norm.iter().copied().fold(0.0, f64::max);
    check(
        "synchronized manifold",
        z_max < 1e-12,
        format!("max |Z| = {z_max:.1e}"),
    )?;

    // With zero states the adaptation reduces to the σ-leak exponential.
    let topo2 = Topology::new(2, &[(1, 2)])?;
    let zeros = vec![nalgebra::DVector::zeros(6), nalgebra::DVector::zeros(6)];
    let fem6b = build_fem(6, 0.1, 0.5, 0.1, 5e-4, 1e-3)?;
    let (gamma, sigma, t_leak) = (50.0, 1e-3, 0.5);
    let trace = simulate_adaptive(
        &fem6b,
        &topo2,
        &zeros,
        &EdgeGains::uniform(&topo2, 1.0)?,
        gamma,
        sigma,
        t_leak,
        1e-3,
    )?;
    let alpha_end = trace.gain_history.last().expect("recorded")[0];
    let leak_err = (alpha_end - (-gamma * sigma * t_leak).exp()).abs();
    check(
        "gain leak law",
        leak_err < 1e-9,
        format!("|alpha(t) - alpha0·e^(-gamma·sigma·t)| = {leak_err:.1e}"),
    )?;

    // Two identical sweeps must format to identical bytes.
    let x0_bench = crate::fem::benchmark_initial_states(&fem8);
    let sweep_once = || -> Result<String> {
        let (_, report) = design2_optimize(
            &fem8,
            &topo5,
            &x0_bench,
            Design2Mode::UniformSweep {
                grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            },
            0.3,
            1e-3,
        )?;
        let table = report.sweep_table.expect("uniform mode tabulates");
        Ok(table
            .iter()
            .map(|(a, j2, j1, e)| {
                format!("{},{},{},{}", fmt_f(*a), fmt_f(*j2), fmt_f(*j1), fmt_f(*e))
            })
            .collect::<Vec<_>>()
            .join("\n"))
    };
    let first = sweep_once()?;
    let second = sweep_once()?;
    check(
        "sweep determinism",
        first == second,
        format!("{} bytes, byte-identical across runs", first.len()),
    )?;

    println!("{count} checks passed");
    Ok(())
}
