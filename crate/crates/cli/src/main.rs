//! `bridgeamm` command-line driver.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use bridgeamm_core::engine::{run, RunReport, SimConfig, SwapStatus};
use bridgeamm_core::experiments::attacks::run_attack_suite;
use bridgeamm_core::experiments::montecarlo::{bad_debt_cdf, run_montecarlo, McIteration, SolvencyRow};
use bridgeamm_core::experiments::replay::{orbit_fixture, run_replay, ReplayExtras, ReplaySpec};
use bridgeamm_core::experiments::sweep::run_sweep;
use bridgeamm_core::experiments::synth::{generate_synthetic_prices, StressSpec};
use bridgeamm_core::oracle::{load_price_csv, write_price_csv, PriceFeed};
use bridgeamm_core::relayer::Scenario;
use bridgeamm_core::report::{summary_json, write_csv, Provenance};
use bridgeamm_core::statemachine::write_transition_log;
use bridgeamm_core::{ConfigFile, EngineError, HealthIndex, Mode};

#[derive(Parser, Debug)]
#[command(name = "bridgeamm", version, about = "Latency-aware cross-chain AMM simulator")]
struct Cli {
    /// Configuration file (key = value); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config value.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Iteration count for montecarlo (default 100000) and sweep (default 1000 per point).
    #[arg(long, global = true, value_name = "N")]
    iterations: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the engine on a scenario and a price series.
    Simulate {
        #[arg(long, value_name = "JSON")]
        scenario: PathBuf,
        #[arg(long, value_name = "CSV")]
        prices: PathBuf,
        /// Disable every protection.
        #[arg(long)]
        baseline: bool,
    },
    /// Seeded Monte Carlo over drawdown, latency and swap size.
    Montecarlo,
    /// Replay a price series against the protected pool and the baseline bridge.
    Replay {
        #[arg(long, value_name = "CSV", conflicts_with = "fixture")]
        prices: Option<PathBuf>,
        /// Latency spikes, collateral shocks and forged swaps to inject.
        #[arg(long, value_name = "JSON", conflicts_with = "fixture")]
        extras: Option<PathBuf>,
        /// Built-in fixture instead of a price file.
        #[arg(long, value_parser = ["orbit"])]
        fixture: Option<String>,
        /// Stress spec for the synthetic series used when no prices are given.
        #[arg(long, value_name = "JSON", conflicts_with_all = ["prices", "fixture"])]
        spec: Option<PathBuf>,
        /// Days of synthetic prices when no prices are given.
        #[arg(long, default_value_t = 547)]
        days: u32,
        /// User-flow and LP behavior overrides.
        #[arg(long, value_name = "JSON")]
        flow: Option<PathBuf>,
    },
    /// Run the ten attack vectors and compare with the expected outcomes.
    Attacks,
    /// Grid sweep over h_max, tau_max and theta_price.
    Sweep,
    /// Write a synthetic minute-level price series.
    GenPrices {
        #[arg(long, default_value_t = 547)]
        days: u32,
        #[arg(long, value_name = "JSON")]
        spec: Option<PathBuf>,
    },
    /// Check a configuration file and print its normalized form.
    ValidateConfig,
}

/// Failure class, mapped to the process exit code.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
    Assertion(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
            Failure::Assertion(_) => 3,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) => Failure::Config(e.into()),
            _ => Failure::Data(e.into()),
        }
    }
}

type Res<T> = Result<T, Failure>;

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn data_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Res<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(data_err)?;
    serde_json::from_str(&text).with_context(|| format!("malformed JSON in {}", path.display())).map_err(data_err)
}

fn load_prices(path: &Path) -> Res<Vec<PriceFeed>> {
    load_price_csv(path).with_context(|| format!("loading {}", path.display())).map_err(data_err)
}

/// Output directory that refuses to clobber files unless forced.
struct Out {
    dir: PathBuf,
}

impl Out {
    fn prepare(dir: &Path, files: &[&str], force: bool) -> Res<Out> {
        if !force {
            let existing: Vec<_> = files.iter().map(|f| dir.join(f)).filter(|p| p.exists()).collect();
            if !existing.is_empty() {
                let list: Vec<_> = existing.iter().map(|p| p.display().to_string()).collect();
                return Err(config_err(anyhow!("refusing to overwrite {} (pass --force)", list.join(", "))));
            }
        }
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(config_err)?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    fn create(&self, name: &str) -> Res<BufWriter<fs::File>> {
        let path = self.dir.join(name);
        let f = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display())).map_err(data_err)?;
        Ok(BufWriter::new(f))
    }

    fn text(&self, name: &str, body: &str) -> Res<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display())).map_err(data_err)
    }

    fn csv<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> Res<()> {
        write_csv(self.create(name)?, rows).with_context(|| format!("writing {name}")).map_err(data_err)
    }

    fn outcomes(&self, name: &str, report: &RunReport) -> Res<()> {
        report.write_outcomes_csv(self.create(name)?).with_context(|| format!("writing {name}")).map_err(data_err)
    }

    fn transitions(&self, name: &str, report: &RunReport) -> Res<()> {
        write_transition_log(self.create(name)?, &report.transitions)
            .with_context(|| format!("writing {name}"))
            .map_err(data_err)
    }
}

struct Ctx {
    file: ConfigFile,
    sim: SimConfig,
    prov: Provenance,
    jobs: Option<usize>,
}

fn load_context(cli: &Cli) -> Res<Ctx> {
    let mut file = match &cli.config {
        Some(p) => ConfigFile::load(p).map_err(config_err)?,
        None => ConfigFile::default(),
    };
    if let Some(seed) = cli.seed {
        file.settings.seed = seed;
    }
    let sim = SimConfig::from_config(&file)?;
    if cli.jobs == Some(0) {
        return Err(config_err(anyhow!("--jobs must be at least 1")));
    }
    Ok(Ctx { prov: Provenance::new(&file), file, sim, jobs: cli.jobs })
}

fn health_cell(h: HealthIndex) -> Option<f64> {
    (!h.is_unbounded()).then(|| h.value())
}

#[derive(Serialize)]
struct SimulateSummary {
    baseline: bool,
    swaps: usize,
    settled: usize,
    reverted_slippage: usize,
    reverted_solvency: usize,
    reverted_rate_limit: usize,
    blocked_halted: usize,
    restricted_entries: usize,
    halted_entries: usize,
    total_bad_debt: f64,
    max_bad_debt_fraction: f64,
    final_health: Option<f64>,
    solvent: bool,
}

#[derive(Serialize)]
struct EpochRow {
    epoch_index: u64,
    collateral_start: f64,
    bad_debt: f64,
    bad_debt_fraction: f64,
}

fn simulate(cli: &Cli, scenario: &Path, prices: &Path, baseline: bool) -> Res<()> {
    let ctx = load_context(cli)?;
    let files = ["simulate_summary.json", "simulate_outcomes.csv", "simulate_epochs.csv", "simulate_transitions.ndjson"];
    let out = Out::prepare(&cli.out, &files, cli.force)?;
    let sc = Scenario::load(scenario).with_context(|| format!("loading {}", scenario.display())).map_err(data_err)?;
    let feeds = load_prices(prices)?;
    let cfg = if baseline { ctx.sim.baseline() } else { ctx.sim.clone() };
    let report = run(&cfg, &sc.schedule(), &feeds)?;
    let count = |s: SwapStatus| report.outcomes.iter().filter(|o| o.status == s).count();
    let summary = SimulateSummary {
        baseline,
        swaps: report.outcomes.len(),
        settled: count(SwapStatus::Settled),
        reverted_slippage: count(SwapStatus::RevertedSlippage),
        reverted_solvency: count(SwapStatus::RevertedSolvency),
        reverted_rate_limit: count(SwapStatus::RevertedRateLimit),
        blocked_halted: count(SwapStatus::BlockedHalted),
        restricted_entries: report.count_entries(Mode::Restricted),
        halted_entries: report.count_entries(Mode::Halted),
        total_bad_debt: report.total_bad_debt(),
        max_bad_debt_fraction: report.max_bad_debt_fraction,
        final_health: health_cell(report.final_health),
        solvent: report.solvent,
    };
    out.text(files[0], &summary_json(&ctx.prov, "simulate", &summary))?;
    out.outcomes(files[1], &report)?;
    out.csv(
        files[2],
        report.epochs.iter().map(|e| EpochRow {
            epoch_index: e.epoch_index,
            collateral_start: e.collateral_start,
            bad_debt: e.bad_debt,
            bad_debt_fraction: e.bad_debt_fraction(),
        }),
    )?;
    out.transitions(files[3], &report)?;
    println!(
        "simulate: {} swaps, {} settled, max bad-debt fraction {:.6}, solvent {}",
        summary.swaps, summary.settled, summary.max_bad_debt_fraction, summary.solvent
    );
    Ok(())
}

#[derive(Serialize)]
struct IterationRow {
    index: u64,
    drawdown: f64,
    latency: f64,
    swap_size: f64,
    status: SwapStatus,
    solvent: bool,
    bad_debt_fraction: f64,
    halted: bool,
    restricted: bool,
}

impl From<&McIteration> for IterationRow {
    fn from(i: &McIteration) -> Self {
        IterationRow {
            index: i.index,
            drawdown: i.scenario.drawdown,
            latency: i.scenario.latency,
            swap_size: i.scenario.swap_size,
            status: i.status,
            solvent: i.solvent,
            bad_debt_fraction: i.bad_debt_fraction,
            halted: i.halted,
            restricted: i.restricted,
        }
    }
}

#[derive(Serialize)]
struct SolvencyCsvRow<'a> {
    group: &'static str,
    label: &'a str,
    count: u64,
    solvent: u64,
    probability: f64,
    ci_lower: f64,
    ci_upper: f64,
}

fn solvency_rows<'a>(group: &'static str, rows: &'a [SolvencyRow]) -> impl Iterator<Item = SolvencyCsvRow<'a>> {
    rows.iter().map(move |r| SolvencyCsvRow {
        group,
        label: &r.label,
        count: r.count,
        solvent: r.solvent,
        probability: r.probability,
        ci_lower: r.ci_lower,
        ci_upper: r.ci_upper,
    })
}

#[derive(Serialize)]
struct CdfRow {
    bad_debt_fraction: f64,
    cumulative: f64,
}

fn montecarlo(cli: &Cli) -> Res<()> {
    let ctx = load_context(cli)?;
    let n = cli.iterations.unwrap_or(100_000);
    if n == 0 {
        return Err(config_err(anyhow!("--iterations must be at least 1")));
    }
    let files = ["montecarlo_summary.json", "montecarlo_iterations.csv", "montecarlo_solvency.csv", "montecarlo_bad_debt_cdf.csv"];
    let out = Out::prepare(&cli.out, &files, cli.force)?;
    let mc = run_montecarlo(n, &ctx.sim, ctx.jobs)?;
    let s = &mc.summary;
    out.text(files[0], &summary_json(&ctx.prov, "montecarlo", s))?;
    out.csv(files[1], mc.iterations.iter().map(IterationRow::from))?;
    out.csv(
        files[2],
        solvency_rows("drawdown", &s.by_drawdown)
            .chain(solvency_rows("latency", &s.by_latency))
            .chain(solvency_rows("stress", &s.by_stress)),
    )?;
    out.csv(
        files[3],
        bad_debt_cdf(&mc.iterations).into_iter().map(|(x, c)| CdfRow { bad_debt_fraction: x, cumulative: c }),
    )?;
    let overall = s.overall();
    println!(
        "montecarlo: {} iterations, P(solvent) = {:.4} [{:.4}, {:.4}], p99 bad debt {:.6}, max {:.6}",
        s.iterations, overall.probability, overall.ci_lower, overall.ci_upper, s.bad_debt.p99, s.bad_debt.max
    );
    if !s.all_within_bound {
        return Err(Failure::Assertion(format!("an iteration exceeded the per-epoch bound {}", s.theorem1_bound)));
    }
    Ok(())
}

#[derive(Serialize)]
struct HealthRow {
    timestamp: f64,
    health: Option<f64>,
}

#[derive(Serialize)]
struct VolumeRow {
    day: i64,
    protected_volume: f64,
    baseline_volume: f64,
}

struct ReplayArgs<'a> {
    prices: Option<&'a Path>,
    extras: Option<&'a Path>,
    fixture: bool,
    spec: Option<&'a Path>,
    days: u32,
    flow: Option<&'a Path>,
}

fn replay(cli: &Cli, args: ReplayArgs) -> Res<()> {
    let ctx = load_context(cli)?;
    let files = [
        "replay_summary.json",
        "replay_health_timeline.csv",
        "replay_daily_volume.csv",
        "replay_stress_periods.csv",
        "replay_outcomes_protected.csv",
        "replay_outcomes_baseline.csv",
        "replay_transitions.ndjson",
    ];
    let out = Out::prepare(&cli.out, &files, cli.force)?;
    let flow: ReplaySpec = match args.flow {
        Some(p) => read_json(p)?,
        None => ReplaySpec::default(),
    };
    let (prices, extras) = if args.fixture {
        orbit_fixture(ctx.file.settings.seed)
    } else {
        let extras: ReplayExtras = match args.extras {
            Some(p) => read_json(p)?,
            None => ReplayExtras::default(),
        };
        let prices = match args.prices {
            Some(p) => load_prices(p)?,
            None => {
                if args.days == 0 {
                    return Err(config_err(anyhow!("--days must be at least 1")));
                }
                let spec: StressSpec = match args.spec {
                    Some(p) => read_json(p)?,
                    None => StressSpec::default(),
                };
                generate_synthetic_prices(args.days, ctx.file.settings.seed, &spec)
            }
        };
        (prices, extras)
    };
    let report = run_replay(&prices, &flow, &extras, &ctx.sim)?;
    let s = &report.summary;
    out.text(files[0], &summary_json(&ctx.prov, "replay", s))?;
    out.csv(
        files[1],
        report.health_timeline().into_iter().map(|(t, h)| HealthRow { timestamp: t, health: health_cell(h) }),
    )?;
    out.csv(
        files[2],
        report.daily_volume().into_iter().map(|(day, a, b)| VolumeRow { day, protected_volume: a, baseline_volume: b }),
    )?;
    out.csv(files[3], &s.stress_periods)?;
    out.outcomes(files[4], &report.protected)?;
    out.outcomes(files[5], &report.baseline)?;
    out.transitions(files[6], &report.protected)?;
    println!(
        "replay: {} days, {} Restricted / {} Halted entries, max bad debt {:.6} vs baseline {:.6}",
        s.days, s.restricted_entries, s.halted_entries, s.protected_max_bad_debt_fraction, s.baseline_max_bad_debt_fraction
    );
    if !s.protected_within_bound {
        return Err(Failure::Assertion(format!("an epoch exceeded the per-epoch bound {}", s.theorem1_bound)));
    }
    Ok(())
}

fn attacks(cli: &Cli) -> Res<()> {
    let ctx = load_context(cli)?;
    let files = ["attacks_summary.json", "attack_outcomes.csv"];
    let out = Out::prepare(&cli.out, &files, cli.force)?;
    let outcomes = run_attack_suite(&ctx.sim)?;
    out.text(files[0], &summary_json(&ctx.prov, "attacks", &outcomes))?;
    out.csv(files[1], &outcomes)?;
    for o in &outcomes {
        println!(
            "{:>2}  {:<28} cb {:<3} swap {:<3} {:<9} {}",
            o.number,
            o.name,
            if o.cb_active { "yes" } else { "no" },
            if o.swap_ok { "yes" } else { "no" },
            format!("{:?}", o.status).to_uppercase(),
            if o.matches { "ok" } else { "MISMATCH" }
        );
    }
    let bad: Vec<_> = outcomes.iter().filter(|o| !o.matches).map(|o| o.number.to_string()).collect();
    if !bad.is_empty() {
        return Err(Failure::Assertion(format!("vectors {} differ from the expected outcome", bad.join(", "))));
    }
    Ok(())
}

fn sweep(cli: &Cli) -> Res<()> {
    let ctx = load_context(cli)?;
    let n = cli.iterations.unwrap_or(1_000);
    if n == 0 {
        return Err(config_err(anyhow!("--iterations must be at least 1")));
    }
    let files = ["sweep_summary.json", "sweep_points.csv"];
    let out = Out::prepare(&cli.out, &files, cli.force)?;
    let points = run_sweep(&ctx.sim, n, ctx.jobs)?;
    out.text(files[0], &summary_json(&ctx.prov, "sweep", &points))?;
    out.csv(files[1], &points)?;
    let pareto = points.iter().filter(|p| p.pareto).count();
    println!("sweep: {} points at {n} iterations each, {pareto} Pareto-optimal", points.len());
    Ok(())
}

fn gen_prices(cli: &Cli, days: u32, spec: Option<&Path>) -> Res<()> {
    let ctx = load_context(cli)?;
    if days == 0 {
        return Err(config_err(anyhow!("--days must be at least 1")));
    }
    let out = Out::prepare(&cli.out, &["prices.csv"], cli.force)?;
    let spec: StressSpec = match spec {
        Some(p) => read_json(p)?,
        None => StressSpec::default(),
    };
    let feeds = generate_synthetic_prices(days, ctx.file.settings.seed, &spec);
    write_price_csv(out.create("prices.csv")?, &feeds).context("writing prices.csv").map_err(data_err)?;
    println!("gen-prices: {} rows", feeds.len());
    Ok(())
}

fn validate_config(cli: &Cli) -> Res<()> {
    let ctx = load_context(cli)?;
    print!("{}", ctx.file.to_kv_string());
    println!("# config hash {}", ctx.file.hash());
    Ok(())
}

fn dispatch(cli: &Cli) -> Res<()> {
    match &cli.command {
        Command::Simulate { scenario, prices, baseline } => simulate(cli, scenario, prices, *baseline),
        Command::Montecarlo => montecarlo(cli),
        Command::Replay { prices, extras, fixture, spec, days, flow } => replay(
            cli,
            ReplayArgs {
                prices: prices.as_deref(),
                extras: extras.as_deref(),
                fixture: fixture.is_some(),
                spec: spec.as_deref(),
                days: *days,
                flow: flow.as_deref(),
            },
        ),
        Command::Attacks => attacks(cli),
        Command::Sweep => sweep(cli),
        Command::GenPrices { days, spec } => gen_prices(cli, *days, spec.as_deref()),
        Command::ValidateConfig => validate_config(cli),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("configuration error: {e:#}"),
                Failure::Data(e) => eprintln!("data error: {e:#}"),
                Failure::Assertion(m) => eprintln!("assertion failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
