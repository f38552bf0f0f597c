//! `pamtree` -- command-line front end for the regular-tree parabolic
//! Anderson toolkit: variational solves, Legendre tables, excursion
//! statistics and the Monte Carlo estimators, all emitted as CSV with a
//! reproducible parameter header.
//!
//! Exit codes: 0 success, 2 invalid input, 3 non-convergence (solver or
//! all Monte Carlo replicas killed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pamtree::experiment::{self, ExperimentConfig};
use pamtree::functionals::{scaling_defect, scaling_limit, Rho};
use pamtree::graphs::{build_depth_line, build_truncated_tree, build_unit_graph};
use pamtree::simulate;
use pamtree::sojourn::{self, SojournLaw, SojournSampler, TadpoleSampler};
use pamtree::solver::{self, SolveOptions};

#[derive(Parser)]
#[command(name = "pamtree", version, about = "Variational formulas and Markov-renewal simulations for the parabolic Anderson model on a regular tree")]
struct Cli {
    /// Worker threads for multi-start solves and Monte Carlo replicas
    /// (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the ball variational problem inf [I(p) + rho J(p)].
    ChiLower(ChiArgs),
    /// Solve the constrained unit problem with p(boundary) <= 1/R.
    ChiUpper(ChiArgs),
    /// Solve the ball problem over a rho grid with monotonicity checks.
    ChiScan(ChiScanArgs),
    /// Principal Dirichlet eigenvalue of the ball (rho -> 0 limit).
    Eigen(GraphArgs),
    /// Legendre transform table of a sojourn cumulant.
    Legendre(LegendreArgs),
    /// First-return distribution of the tree excursion.
    Pmf(PmfArgs),
    /// Draw tadpole sojourn times.
    Sample(SampleArgs),
    /// Estimate the survival exponent of the killed walk.
    McSurvival(McArgs),
    /// Simulate the depth chain and compare with the stationary profile.
    McDepth(McDepthArgs),
    /// Simulate the renewal-unit walk.
    McUnit(McDepthArgs),
    /// Estimate the annealed mass exponent.
    McMass(McMassArgs),
    /// Scan the tadpole-weight inequality F(w) + C >= coeff (1-sqrt w)^2.
    IneqScan(IneqArgs),
    /// Solve the ball problem and report minimiser shape diagnostics.
    Minimiser(ChiArgs),
    /// Tabulate the double-exponential scaling defect against its limit.
    Scaling(ScalingArgs),
}

#[derive(Args)]
struct GraphArgs {
    /// Offspring number of the tree (degree is d+1).
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, alias = "R", default_value_t = 4)]
    radius: u32,
    /// Output file; stdout when omitted. Relative paths resolve inside
    /// $PAMTREE_OUT when that is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChiArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, alias = "R", default_value_t = 4)]
    radius: u32,
    #[arg(long)]
    rho: f64,
    /// Convergence tolerance on the projected gradient norm.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 60_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChiScanArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, alias = "R", default_value_t = 4)]
    radius: u32,
    /// Grid spec: VALUE, V1,V2,..., or start:stop:linN|logN.
    #[arg(long)]
    rho_grid: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 60_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LawKind {
    /// Exponential holding time of rate d+1.
    Exp,
    /// Full tree-return (tadpole) sojourn.
    TreeReturn,
}

#[derive(Args)]
struct LegendreArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, value_enum, default_value_t = LawKind::TreeReturn)]
    law: LawKind,
    /// Alpha grid spec (slopes of the Legendre transform).
    #[arg(long, default_value = "0.05:20:log50")]
    alpha_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PmfArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    /// Largest half-length k of the tabulated return probabilities.
    #[arg(long, alias = "kmax", default_value_t = 50)]
    k_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyKind {
    /// Mix the return-length distribution, then sum exponentials.
    Pmf,
    /// Simulate the conditioned depth walk step by step.
    Doob,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StrategyKind::Pmf)]
    strategy: StrategyKind,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, alias = "R", default_value_t = 2)]
    radius: u32,
    /// Time horizon.
    #[arg(long)]
    t: f64,
    /// Number of replicas.
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McDepthArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, alias = "R", default_value_t = 5)]
    radius: u32,
    #[arg(long, default_value_t = 100_000.0)]
    t: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McMassArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, alias = "R", default_value_t = 2)]
    radius: u32,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IneqArgs {
    #[arg(long, default_value_t = 4)]
    d: u32,
    #[arg(long, default_value = "1e-6:1e6:log241")]
    w_grid: String,
    #[arg(long, default_value = "0.05:30:lin600")]
    c_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 10_000.0)]
    t: f64,
    #[arg(long, default_value = "0.1:10:log25")]
    c_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_out(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(base) = std::env::var("PAMTREE_OUT") {
            if !base.is_empty() {
                return PathBuf::from(base).join(path);
            }
        }
    }
    path.to_path_buf()
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            let path = resolve_out(path);
            experiment::write_text(&path, content)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn solve_options(tol: f64, max_iters: usize, restarts: usize, seed: u64) -> SolveOptions {
    SolveOptions {
        grad_tol: tol,
        max_iters,
        restarts,
        seed,
        ..SolveOptions::default()
    }
}

fn cmd_chi_lower(args: &ChiArgs) -> Result<bool> {
    let tree = build_truncated_tree(args.d, args.radius)?;
    let rho = Rho::new(args.rho)?;
    let opts = solve_options(args.tol, args.max_iters, args.restarts, args.seed);
    let res = solver::solve_chi_lower(&tree, rho, &opts)?;
    let mut config = ExperimentConfig::new("chi-lower", args.d, args.radius, args.seed);
    config.rho = Some(args.rho);
    config.tol = Some(args.tol);
    let shells = solver::shell_masses(&tree, res.minimiser.values());
    emit(&args.out, &experiment::render_solve(&config, &res, &shells))?;
    Ok(res.converged)
}

fn cmd_chi_upper(args: &ChiArgs) -> Result<bool> {
    let unit = build_unit_graph(args.d, args.radius)?;
    let rho = Rho::new(args.rho)?;
    let opts = solve_options(args.tol, args.max_iters, args.restarts, args.seed);
    let res = solver::solve_chi_upper(&unit, rho, &opts)?;
    let mut config = ExperimentConfig::new("chi-upper", args.d, args.radius, args.seed);
    config.rho = Some(args.rho);
    config.tol = Some(args.tol);
    let shells = solver::unit_shell_masses(&unit, res.minimiser.values());
    emit(&args.out, &experiment::render_solve(&config, &res, &shells))?;
    Ok(res.converged)
}

fn cmd_chi_scan(args: &ChiScanArgs) -> Result<bool> {
    let tree = build_truncated_tree(args.d, args.radius)?;
    let grid = experiment::parse_grid(&args.rho_grid)?;
    let opts = solve_options(args.tol, args.max_iters, args.restarts, args.seed);
    let curve = solver::chi_scan(&tree, &grid, &opts)?;
    let mut config = ExperimentConfig::new("chi-scan", args.d, args.radius, args.seed);
    config.rho_grid = Some(grid);
    config.tol = Some(args.tol);
    let all_converged = curve.points.iter().all(|p| p.converged);
    emit(&args.out, &experiment::render_chi_scan(&config, &curve))?;
    Ok(all_converged)
}

fn cmd_eigen(args: &GraphArgs) -> Result<bool> {
    let eig = solver::principal_dirichlet_value(args.d, args.radius)?;
    let config = ExperimentConfig::new("eigen", args.d, args.radius, 0);
    emit(&args.out, &experiment::render_eigen(&config, &eig))?;
    Ok(true)
}

fn cmd_legendre(args: &LegendreArgs) -> Result<bool> {
    let law = match args.law {
        LawKind::Exp => SojournLaw::exp_rate(args.d)?,
        LawKind::TreeReturn => SojournLaw::tree_return(args.d)?,
    };
    let alphas = experiment::parse_grid(&args.alpha_grid)?;
    let table = sojourn::legendre_table(law, &alphas)?;
    let mut config = ExperimentConfig::new("legendre", args.d, 0, 0);
    config.tol = None;
    emit(&args.out, &experiment::render_legendre(&config, &table))?;
    Ok(true)
}

fn cmd_pmf(args: &PmfArgs) -> Result<bool> {
    let pmf = sojourn::return_pmf(args.d, args.k_max)?;
    let config = ExperimentConfig::new("pmf", args.d, 0, 0);
    emit(&args.out, &experiment::render_pmf(&config, &pmf))?;
    Ok(true)
}

fn cmd_sample(args: &SampleArgs) -> Result<bool> {
    let strategy = match args.strategy {
        StrategyKind::Pmf => TadpoleSampler::PmfMixture,
        StrategyKind::Doob => TadpoleSampler::DoobWalk,
    };
    let sampler = SojournSampler::with_strategy(SojournLaw::tree_return(args.d)?, strategy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let samples: Vec<f64> = (0..args.n).map(|_| sampler.sample(&mut rng)).collect();
    let mut config = ExperimentConfig::new("sample", args.d, 0, args.seed);
    config.n = Some(args.n);
    emit(&args.out, &experiment::render_samples(&config, &samples))?;
    Ok(true)
}

fn cmd_mc_survival(args: &McArgs) -> Result<bool> {
    let tree = build_truncated_tree(args.d, args.radius)?;
    let est = simulate::estimate_survival_exponent(&tree, args.t, args.n, args.seed)?;
    let mut config = ExperimentConfig::new("mc-survival", args.d, args.radius, args.seed);
    config.t = Some(args.t);
    config.n = Some(args.n);
    emit(&args.out, &experiment::render_survival(&config, &est))?;
    Ok(true)
}

fn cmd_mc_depth(args: &McDepthArgs) -> Result<bool> {
    let line = build_depth_line(args.d, args.radius)?;
    let profile = simulate::simulate_depth_chain(&line, args.t, args.seed)?;
    let stationary = simulate::zero_depth_profile(args.d, args.radius)?;
    let mut config = ExperimentConfig::new("mc-depth", args.d, args.radius, args.seed);
    config.t = Some(args.t);
    emit(&args.out, &experiment::render_depth_profile(&config, &profile, &stationary))?;
    Ok(true)
}

fn cmd_mc_unit(args: &McDepthArgs) -> Result<bool> {
    let unit = build_unit_graph(args.d, args.radius)?;
    let rec = simulate::simulate_unit_walk(&unit, args.t, args.seed)?;
    let mut config = ExperimentConfig::new("mc-unit", args.d, args.radius, args.seed);
    config.t = Some(args.t);
    emit(&args.out, &experiment::render_unit_walk(&config, &rec, unit.boundary_mask()))?;
    Ok(true)
}

fn cmd_mc_mass(args: &McMassArgs) -> Result<bool> {
    let tree = build_truncated_tree(args.d, args.radius)?;
    let rho = Rho::new(args.rho)?;
    let est = simulate::estimate_mass_exponent(&tree, rho, args.t, args.n, args.seed)?;
    let mut config = ExperimentConfig::new("mc-mass", args.d, args.radius, args.seed);
    config.rho = Some(args.rho);
    config.t = Some(args.t);
    config.n = Some(args.n);
    emit(&args.out, &experiment::render_mass(&config, &est))?;
    Ok(true)
}

fn cmd_ineq_scan(args: &IneqArgs) -> Result<bool> {
    let w_grid = experiment::parse_grid(&args.w_grid)?;
    let c_grid = experiment::parse_grid(&args.c_grid)?;
    let report = solver::f_inequality_scan(args.d, &w_grid, &c_grid)?;
    let config = ExperimentConfig::new("ineq-scan", args.d, 0, 0);
    emit(&args.out, &experiment::render_f_scan(&config, &report))?;
    Ok(true)
}

fn cmd_minimiser(args: &ChiArgs) -> Result<bool> {
    let tree = build_truncated_tree(args.d, args.radius)?;
    let rho = Rho::new(args.rho)?;
    let opts = solve_options(args.tol, args.max_iters, args.restarts, args.seed);
    let res = solver::solve_chi_lower(&tree, rho, &opts)?;
    let diag = solver::minimiser_diagnostics(&tree, &res.minimiser, rho)?;
    let mut config = ExperimentConfig::new("minimiser", args.d, args.radius, args.seed);
    config.rho = Some(args.rho);
    config.tol = Some(args.tol);
    emit(&args.out, &experiment::render_diagnostics(&config, &diag))?;
    Ok(res.converged)
}

fn cmd_scaling(args: &ScalingArgs) -> Result<bool> {
    let rho = Rho::new(args.rho)?;
    let grid = experiment::parse_grid(&args.c_grid)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &c in &grid {
        rows.push((c, scaling_defect(c, args.t, rho.get())?, scaling_limit(c, rho.get())));
    }
    let mut config = ExperimentConfig::new("scaling", 0, 0, 0);
    config.rho = Some(args.rho);
    config.t = Some(args.t);
    emit(&args.out, &experiment::render_scaling(&config, &rows))?;
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::ChiLower(a) => cmd_chi_lower(a),
        Command::ChiUpper(a) => cmd_chi_upper(a),
        Command::ChiScan(a) => cmd_chi_scan(a),
        Command::Eigen(a) => cmd_eigen(a),
        Command::Legendre(a) => cmd_legendre(a),
        Command::Pmf(a) => cmd_pmf(a),
        Command::Sample(a) => cmd_sample(a),
        Command::McSurvival(a) => cmd_mc_survival(a),
        Command::McDepth(a) => cmd_mc_depth(a),
        Command::McUnit(a) => cmd_mc_unit(a),
        Command::McMass(a) => cmd_mc_mass(a),
        Command::IneqScan(a) => cmd_ineq_scan(a),
        Command::Minimiser(a) => cmd_minimiser(a),
        Command::Scaling(a) => cmd_scaling(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().is_err() {
            eprintln!("warning: thread pool already initialised, --jobs ignored");
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: solver did not converge within the iteration budget");
            ExitCode::from(3)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<pamtree::Error>() {
                Some(pamtree::Error::NoConvergence(_))
                | Some(pamtree::Error::AllRunsKilled { .. })
                | Some(pamtree::Error::BracketFailure { .. }) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
