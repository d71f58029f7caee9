use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gr_bvbfv::adm;
use gr_bvbfv::boundary;
use gr_bvbfv::grid::GField;
use gr_bvbfv::io::{load_scenario, write_archive};
use gr_bvbfv::presets::PresetRegistry;
use gr_bvbfv::state::State;
use gr_bvbfv::verification::{render_report, run_suite, SuiteConfig, SuiteRegistry};
use gr_bvbfv::Error;

/// Default directory for reports when `--out` is not given.
const REPORT_DIR_VAR: &str = "BVBFV_REPORT_DIR";

#[derive(Parser)]
#[command(name = "bvbfv", version, about = "Checks the BV-BFV structure of ADM gravity on discretized manifolds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// ADM geometry of a scenario.
    Adm {
        #[command(subcommand)]
        cmd: AdmCmd,
    },
    /// Boundary constraints 𝓗, 𝓗_a and the Euler–Lagrange constraints.
    Constraints(ScenarioArgs),
    /// Reduce a pre-boundary scenario to Darboux fields and archive them.
    Reduce {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Preset catalogue.
    Presets {
        #[command(subcommand)]
        cmd: PresetsCmd,
    },
}

#[derive(Subcommand)]
enum AdmCmd {
    /// Lagrangian, extrinsic curvature, boundary curvature and constraints.
    Report(ScenarioArgs),
}

#[derive(Subcommand)]
enum PresetsCmd {
    List,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "boundary")]
    suite: String,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Boundary points per axis; defaults to 32 for d = 2 and 16 for d = 3.
    #[arg(long)]
    grid: Option<usize>,
    /// Normal layers of bulk patches.
    #[arg(long, default_value_t = 9)]
    layers: usize,
    /// Number of seeds (0, 1, ..).
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    eps: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(Error),
    Run(Error),
}

fn config<T>(r: Result<T, Error>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn run<T>(r: Result<T, Error>) -> Result<T, Failure> {
    r.map_err(Failure::Run)
}

fn report_path(out: Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
    out.or_else(|| std::env::var_os(REPORT_DIR_VAR).map(|d| Path::new(&d).join(default_name)))
}

fn emit(text: &str, out: Option<PathBuf>, default_name: &str) -> Result<(), Failure> {
    print!("{text}");
    if let Some(p) = report_path(out, default_name) {
        if let Some(dir) = p.parent() {
            config(fs::create_dir_all(dir).map_err(Error::from))?;
        }
        config(fs::write(&p, text).map_err(Error::from))?;
    }
    Ok(())
}

fn stat_line(text: &mut String, s: &State, name: &str, f: &GField) {
    let integral = s.integrate(f).body();
    writeln!(text, "{name}\tmax {:.6e}\tintegral {:.6e}", f.max_abs(), integral).unwrap();
}

fn adm_report(args: ScenarioArgs) -> Result<bool, Failure> {
    let (_, s) = config(load_scenario(&args.scenario))?;
    let mut text = String::new();
    stat_line(&mut text, &s, "L_ADM", &run(adm::adm_lagrangian_density(&s))?);
    let (k, _, tr) = run(adm::extrinsic_curvature(&s))?;
    let k_max = k.iter().flatten().map(|f| f.max_abs()).fold(0.0, f64::max);
    writeln!(text, "K_ab\tmax {k_max:.6e}").unwrap();
    stat_line(&mut text, &s, "K", &tr);
    stat_line(&mut text, &s, "R", &run(adm::boundary_ricci_scalar(&s))?);
    let (ge, gb) = run(adm::classical_constraints(&s))?;
    stat_line(&mut text, &s, "G_eta", &ge);
    for (a, f) in gb.iter().enumerate() {
        stat_line(&mut text, &s, &format!("G_beta{a}"), f);
    }
    emit(&text, args.out, "adm_report.txt")?;
    Ok(true)
}

fn constraints(args: ScenarioArgs) -> Result<bool, Failure> {
    let (_, s) = config(load_scenario(&args.scenario))?;
    let ds = run(boundary::reduce_bv(&s))?;
    let (h, ha) = run(boundary::boundary_constraints(&ds))?;
    let mut text = String::new();
    stat_line(&mut text, &ds, "H", &h);
    for (a, f) in ha.iter().enumerate() {
        stat_line(&mut text, &ds, &format!("H{a}"), f);
    }
    let (ge, gb) = run(adm::classical_constraints(&s))?;
    stat_line(&mut text, &s, "G_eta", &ge);
    for (a, f) in gb.iter().enumerate() {
        stat_line(&mut text, &s, &format!("G_beta{a}"), f);
    }
    emit(&text, args.out, "constraints.txt")?;
    Ok(true)
}

fn reduce(scenario: &Path, out: &Path) -> Result<bool, Failure> {
    let (_, s) = config(load_scenario(scenario))?;
    let ds = run(boundary::reduce_bv(&s))?;
    config(write_archive(out, &ds))?;
    println!("wrote {}", out.display());
    Ok(true)
}

fn verify(args: VerifyArgs) -> Result<bool, Failure> {
    let cfg = SuiteConfig {
        suite: args.suite.clone(),
        d: args.d,
        n: args.grid.unwrap_or(if args.d == 3 { 16 } else { 32 }),
        layers: args.layers,
        eps: args.eps,
        lambda: args.lambda,
        seeds: (0..args.seeds).collect(),
        tol_scale: args.tol_scale,
        force: args.force,
        ..Default::default()
    };
    // plumbing problems are configuration errors, not failed checks
    config(cfg.validate())?;
    config(SuiteRegistry::default().get(&cfg.suite).map(|_| ()))?;
    let records = run_suite(&cfg);
    emit(&render_report(&records), args.out, &format!("{}_d{}.txt", cfg.suite, cfg.d))?;
    Ok(records.iter().all(|r| r.pass))
}

fn presets_list() -> Result<bool, Failure> {
    for (name, about) in PresetRegistry::default().list() {
        println!("{name}\t{about}");
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Adm { cmd: AdmCmd::Report(a) } => adm_report(a),
        Cmd::Constraints(a) => constraints(a),
        Cmd::Reduce { scenario, out } => reduce(&scenario, &out),
        Cmd::Verify(a) => verify(a),
        Cmd::Presets { cmd: PresetsCmd::List } => presets_list(),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
