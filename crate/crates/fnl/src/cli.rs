//! The `fnl` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fnl_core::adversaries::{AttackKind, AttackSpec, Direction};
use fnl_core::harness::{certify_lower_bound, minimax_demo, BoundNotion, Family, RobustnessReport, SweepNotion};
use fnl_core::repair::{best_response, dp_repair, eopp_repair, BestResponseConfig, RepairWitness};
use fnl_core::{BaseClassifier, Distribution, GroupId, HypothesisClass, Notion};
use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;

use crate::config::{self, Overrides};
use crate::{io, report, runner, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fnl", version, about = "Fair learning under malicious noise: sweeps, attacks, repairs and certificates")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an alpha sweep from a config file.
    Run(RunArgs),
    /// Emit the corruption Q and the corrupted distribution for an attack.
    Attack(AttackArgs),
    /// Build a repair witness for given D, D~ and base classifier.
    Repair(RepairArgs),
    /// Certify a lower-bound floor on its canonical instance.
    Certify(CertifyArgs),
    /// Worst-group error under a duplicate-flip attack.
    Minimax(MinimaxArgs),
    /// Re-render CSV or SVG from a stored report JSON.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "FNL_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's alpha grid (repeatable).
    #[arg(long)]
    alpha: Vec<f64>,
    #[arg(long)]
    notion: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory; defaults to the config's, then FNL_OUT, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Files to write (repeatable); defaults to json and csv.
    #[arg(long, value_enum)]
    format: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackName {
    Identity,
    DuplicateFlip,
    NeedleEopp,
    TprRaise,
    TprLower,
    GridWorstCase,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// Experiment config providing the instance (and default attack).
    #[arg(long, conflicts_with = "distribution")]
    config: Option<PathBuf>,
    /// Clean distribution JSON.
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<AttackName>,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    target: Option<String>,
    /// Notion for the worst-case search.
    #[arg(long)]
    notion: Option<String>,
    #[arg(long, default_value_t = 21)]
    grid: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct RepairArgs {
    /// Clean distribution JSON.
    #[arg(long)]
    distribution: PathBuf,
    /// Corrupted distribution JSON.
    #[arg(long)]
    corrupted: PathBuf,
    /// Base classifier JSON.
    #[arg(long)]
    classifier: PathBuf,
    /// dp and eopp build analytic witnesses; other notions use the grid
    /// best response over all tables.
    #[arg(long, default_value = "dp")]
    notion: String,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Budget recorded in the certificate; defaults to TV(D, D~).
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long)]
    notion: String,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 201)]
    grid: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct MinimaxArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Target worst-group error.
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report JSON written by `run`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Vec<Format>,
    #[command(flatten)]
    out: OutArgs,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(a) => run(a),
        Command::Attack(a) => attack(a),
        Command::Repair(a) => repair(a),
        Command::Certify(a) => certify(a),
        Command::Minimax(a) => minimax(a),
        Command::Report(a) => rerender(a),
    }
}

fn parse<T: std::str::FromStr<Err = fnl_core::Error>>(s: &str) -> Result<T> {
    s.parse().map_err(Error::from)
}

fn write_formats(report: &RobustnessReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for f in formats {
        let (name, text) = match f {
            Format::Json => ("report.json", io::to_json(report)),
            Format::Csv => ("report.csv", report::to_csv(report)?),
            Format::Svg => ("report.svg", report::to_svg(report)),
        };
        let path = io::output_path(dir, name);
        io::write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

fn default_out() -> PathBuf {
    std::env::var_os("FNL_OUT").map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

fn run(a: RunArgs) -> Result<i32> {
    let base = config::load(&a.config)?;
    let overrides = Overrides {
        alphas: a.alpha,
        notion: a.notion.as_deref().map(parse::<SweepNotion>).transpose()?,
        grid_n: a.grid,
        seed: a.seed,
        output: a.out.as_ref().map(|p| p.display().to_string()),
    };
    let cfg = config::apply(base, &overrides)?;
    let dir = cfg.output.as_ref().map_or_else(default_out, PathBuf::from);
    let report = runner::run(&cfg, a.jobs)?;
    let formats = if a.format.is_empty() { vec![Format::Json, Format::Csv] } else { a.format };
    write_formats(&report, &dir, &formats)?;
    for s in &report.sweeps {
        match s.fit {
            Some(f) => println!(
                "{} {}: slope={:.4} r2={:.4} verdict={} max_beta_over_sqrt_alpha={:.4}",
                report.name, s.notion, f.slope, f.r_squared, s.verdict, s.max_beta_over_sqrt_alpha
            ),
            None => println!("{} {}: verdict={} (fewer than 3 positive points)", report.name, s.notion, s.verdict),
        }
        for r in &s.records {
            if r.dominance == Some(false) {
                log::warn!("{} at alpha={}: best response worse than witness beyond grid slack", s.notion, r.alpha);
            }
        }
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

fn attack_kind(name: AttackName, notion: Option<&str>, grid: usize) -> Result<AttackKind> {
    Ok(match name {
        AttackName::Identity => AttackKind::Identity,
        AttackName::DuplicateFlip => AttackKind::DuplicateFlip,
        AttackName::NeedleEopp => AttackKind::NeedleEopp,
        AttackName::TprRaise => AttackKind::TprShift {
            direction: Direction::Raise,
            classifier: None,
        },
        AttackName::TprLower => AttackKind::TprShift {
            direction: Direction::Lower,
            classifier: None,
        },
        AttackName::GridWorstCase => AttackKind::GridWorstCase {
            notion: parse::<Notion>(notion.unwrap_or("dp"))?,
            resolution: 10,
            grid_n: grid,
        },
    })
}

#[derive(Serialize)]
struct AttackSummary<'a> {
    attack: &'a str,
    alpha: f64,
    tv_distance: f64,
}

fn attack(a: AttackArgs) -> Result<i32> {
    let kind = a.kind.map(|k| attack_kind(k, a.notion.as_deref(), a.grid)).transpose()?;
    let (family, seed, cfg_attack, cfg_target) = match (&a.config, &a.distribution) {
        (Some(path), _) => {
            let cfg = config::load(path)?;
            (cfg.instance, a.seed.unwrap_or(cfg.seed), cfg.attack, cfg.target_group)
        }
        (None, Some(path)) => {
            let distribution: Distribution = io::read_json(path)?;
            let family = Family::Inline {
                distribution,
                h_star: None,
            };
            (family, a.seed.unwrap_or(0), None, None)
        }
        (None, None) if kind == Some(AttackKind::NeedleEopp) => (Family::Needle, 0, None, None),
        (None, None) => return Err(Error::Usage("--distribution or --config is required".into())),
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let inst = family.instance(a.alpha, &mut rng)?;
    let kind = kind.or(cfg_attack).unwrap_or(inst.default_attack);
    let target = a.target.map(GroupId).or(cfg_target).or(inst.target_group);
    let (clean, hypotheses) = (inst.clean, inst.hypotheses);
    let spec = AttackSpec::new(kind, a.alpha, target);
    let outcome = spec.apply(&clean, &hypotheses)?;
    let dir = a.out.out;
    io::write_json(&dir.join("clean.json"), &clean)?;
    io::write_json(&dir.join("q.json"), &outcome.q)?;
    io::write_json(&dir.join("d_tilde.json"), &outcome.d_tilde)?;
    let summary = AttackSummary {
        attack: &outcome.description,
        alpha: a.alpha,
        tv_distance: clean.tv_distance(&outcome.d_tilde),
    };
    io::write_json(&dir.join("attack.json"), &summary)?;
    println!(
        "attack {} alpha={} tv={:.6} -> {}",
        summary.attack,
        summary.alpha,
        summary.tv_distance,
        dir.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct CertificationRecord {
    notion: Notion,
    gap: f64,
    excess: f64,
    alpha: f64,
}

#[derive(Serialize)]
struct WitnessFile<'a> {
    witness: &'a RepairWitness,
    certification: CertificationRecord,
}

fn repair(a: RepairArgs) -> Result<i32> {
    let d: Distribution = io::read_json(&a.distribution)?;
    let dt: Distribution = io::read_json(&a.corrupted)?;
    let h: BaseClassifier = io::read_json(&a.classifier)?;
    let notion = parse::<Notion>(&a.notion)?;
    let w = match notion {
        Notion::DemographicParity => dp_repair(&h, &d, &dt)?,
        Notion::EqualOpportunity => eopp_repair(&h, &d, &dt)?,
        other => {
            let class = HypothesisClass::all_tables(&d)?;
            let cfg = BestResponseConfig::new(a.grid);
            let opt = best_response(&d, &d, &class, other, &cfg)?.error_on_original;
            best_response(&dt, &d, &class, other, &cfg.with_baseline(opt))?
        }
    };
    let record = CertificationRecord {
        notion,
        gap: w.gap_on_corrupted,
        excess: w.excess_error_on_original,
        alpha: a.alpha.unwrap_or_else(|| d.tv_distance(&dt)),
    };
    println!(
        "repair {} {}: gap={:.3e} excess={:.6}",
        notion, w.candidate_label, record.gap, record.excess
    );
    let path = a.out.out.join("witness.json");
    io::write_json(&path, &WitnessFile { witness: &w, certification: record })?;
    let tolerance = if matches!(notion, Notion::DemographicParity | Notion::EqualOpportunity) {
        fnl_core::EXACT_TOL
    } else {
        2.0 / a.grid as f64 + fnl_core::EXACT_TOL
    };
    Ok(if w.gap_on_corrupted <= tolerance { 0 } else { 1 })
}

fn certify(a: CertifyArgs) -> Result<i32> {
    let notion = parse::<BoundNotion>(&a.notion)?;
    let c = certify_lower_bound(notion, a.alpha, a.grid)?;
    println!(
        "certify {} alpha={}: floor={:.6} claimed={:.6} slack={:.6} pass={}",
        c.notion, c.alpha, c.floor, c.claimed, c.slack, c.pass
    );
    io::write_json(&a.out.out.join("certificate.json"), &c)?;
    Ok(if c.pass { 0 } else { 1 })
}

fn minimax(a: MinimaxArgs) -> Result<i32> {
    let r = minimax_demo(a.alpha, a.grid, a.gamma)?;
    let groups: Vec<String> = r.groups.iter().map(|g| format!("{}={:.6}", g.group, g.error)).collect();
    println!(
        "minimax alpha={}: {} max={:.6} opt_clean={:.6}{}",
        r.alpha,
        groups.join(" "),
        r.max_group_error,
        r.opt_clean,
        match r.gamma_feasible {
            Some(true) => format!(" gamma={} feasible", r.gamma.unwrap_or_default()),
            Some(false) => format!(" gamma={} infeasible", r.gamma.unwrap_or_default()),
            None => String::new(),
        }
    );
    io::write_json(&a.out.out.join("minimax.json"), &r)?;
    Ok(0)
}

fn rerender(a: ReportArgs) -> Result<i32> {
    let report: RobustnessReport = io::read_json(&a.input)?;
    let formats = if a.format.is_empty() { vec![Format::Csv] } else { a.format };
    for p in write_formats(&report, &a.out.out, &formats)? {
        println!("wrote {}", p.display());
    }
    Ok(0)
}
