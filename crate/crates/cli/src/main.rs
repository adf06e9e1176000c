use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use intercell::burr::model_for;
use intercell::cache::{panel_set_key, typical_set_cached, Cache};
use intercell::closed_form::{multi_moment, single_moment, HypoExp};
use intercell::config::ScenarioConfig;
use intercell::geometry::{build_layout, ReusePattern};
use intercell::mcp::{run_mcp, McpConfig};
use intercell::propagation::Scenario;
use intercell::simulator::{
    chunk_count, ks_distance, simulate_chunks, GainSampler, Mode, SampleSummary,
    EXACT_QUANTILE_LIMIT,
};
use intercell::typical_set::PartitionSpec;

/// Exit status when the MCP mean diverges from the exact mean.
const EXIT_DIVERGED: u8 = 3;

/// Chunks simulated per batch in `simulate`.
const SIMULATE_BATCH_CHUNKS: u64 = 160;

#[derive(Parser)]
#[command(
    name = "intercell",
    version,
    about = "Intercell interference statistics for hexagonal networks"
)]
struct Cli {
    /// Scenario file (TOML). Flags override its values.
    #[arg(long, global = true, visible_alias = "scenario")]
    config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ScenarioArgs {
    /// Frequency reuse pattern (FR1 or FR3).
    #[arg(long)]
    reuse: Option<ReusePattern>,
    /// Shadowing standard deviation in dB.
    #[arg(long = "sigma-db")]
    sigma_db: Option<f64>,
}

#[derive(Args, Clone, Copy)]
struct PartitionArgs {
    /// Number of probability intervals J.
    #[arg(long, default_value_t = 25)]
    intervals: usize,
    /// Points per interval P.
    #[arg(long, default_value_t = 900)]
    points: usize,
}

#[derive(Subcommand)]
enum Command {
    /// AP coordinates and rings.
    Layout {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average path losses of the interferers, strongest first.
    Lambdas {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact moments of one link and of the total gain.
    Moments {
        /// Frequency reuse pattern (FR1 or FR3).
        #[arg(long)]
        reuse: Option<ReusePattern>,
        /// Moment orders, comma separated.
        #[arg(long = "k", value_delimiter = ',', default_value = "1,2,3")]
        orders: Vec<u32>,
        /// Shadowing values in dB: `6`, `0,6,12`, `0..12` or `0..12:3`.
        #[arg(long = "sigma-db", value_parser = parse_sigma_list)]
        sigma_db: Option<SigmaList>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form pdf and cdf of the total gain without shadowing.
    ClosedFormPdf {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 400)]
        grid: usize,
        /// Upper end of the grid (defaults to the 1 - 1e-6 tail point).
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Typical set of a single shadowed Rayleigh link.
    TypicalSet {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        partition: PartitionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo panel estimate of the total-gain distribution.
    Mcp {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        partition: PartitionArgs,
        #[arg(long, default_value_t = 20_000)]
        iterations: usize,
        /// Compelled links M.
        #[arg(long, default_value_t = 2)]
        compelled: usize,
        /// Intervals sampled for non-compelled links.
        #[arg(long, default_value_t = 3)]
        loaded_intervals: usize,
        #[arg(long, default_value_t = 200)]
        bins: usize,
        /// Run iterations on one thread.
        #[arg(long)]
        serial: bool,
        /// Histogram CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Truncated Burr model of the total gain.
    Model {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 400)]
        grid: usize,
        /// Print the parameters as JSON instead of the pdf grid.
        #[arg(long)]
        params_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Direct simulation of the total gain.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// exact or approx.
        #[arg(long, default_value = "exact")]
        mode: Mode,
        /// Number of draws (accepts 1e7).
        #[arg(long, default_value = "1e7", value_parser = parse_count)]
        draws: u64,
        #[arg(long, default_value_t = 200)]
        bins: usize,
        /// Upper end of the histogram (defaults to the 1 - 1e-4 tail point of the closed form).
        #[arg(long)]
        x_max: Option<f64>,
        /// Histogram CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Clone, Debug)]
struct SigmaList(Vec<f64>);

fn parse_sigma_list(s: &str) -> std::result::Result<SigmaList, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("not a number: {t}"))
    };
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 1.0),
        };
        let lo = num(lo)?;
        if !(step > 0.0 && hi >= lo) {
            return Err(format!("empty or invalid range: {s}"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok(SigmaList((0..=n).map(|i| lo + step * i as f64).collect()));
    }
    s.split(',')
        .map(num)
        .collect::<std::result::Result<_, _>>()
        .map(SigmaList)
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("not a whole non-negative count: {s}"))
    }
}

struct Session {
    base: ScenarioConfig,
    cache: Option<Cache>,
}

impl Session {
    fn config(&self, args: ScenarioArgs) -> ScenarioConfig {
        let mut c = self.base;
        if let Some(r) = args.reuse {
            c.reuse = r;
        }
        if let Some(s) = args.sigma_db {
            c.sigma_db = s;
        }
        c
    }

    fn scenario(&self, args: ScenarioArgs) -> Result<(ScenarioConfig, Scenario)> {
        let c = self.config(args);
        let s = c.scenario().context("building scenario")?;
        Ok((c, s))
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn csv_writer(path: Option<&Path>, header: &[&str]) -> Result<csv::Writer<Box<dyn Write>>> {
    let mut w = csv::Writer::from_writer(output(path)?);
    w.write_record(header)?;
    Ok(w)
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Smallest mean·2^k whose closed-form survival drops below `tail`.
fn tail_point(law: &HypoExp, tail: f64) -> Result<f64> {
    let mut x = law.mean().max(f64::MIN_POSITIVE);
    while 1.0 - law.cdf(x)? > tail {
        x *= 2.0;
    }
    Ok(x)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut base = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        base.seed = seed;
    }
    let ctx = Session {
        base,
        cache: Cache::from_env()?,
    };

    match cli.command {
        Command::Layout { out } => layout(&ctx, out.as_deref())?,
        Command::Lambdas { scenario, out } => lambdas(&ctx, scenario, out.as_deref())?,
        Command::Moments {
            reuse,
            orders,
            sigma_db,
            out,
        } => moments(&ctx, reuse, &orders, sigma_db, out.as_deref())?,
        Command::ClosedFormPdf {
            scenario,
            grid,
            x_max,
            out,
        } => closed_form_pdf(&ctx, scenario, grid, x_max, out.as_deref())?,
        Command::TypicalSet {
            scenario,
            partition,
            out,
        } => typical_set(&ctx, scenario, partition, out.as_deref())?,
        Command::Mcp {
            scenario,
            partition,
            iterations,
            compelled,
            loaded_intervals,
            bins,
            serial,
            out,
            summary,
        } => {
            let config = McpConfig {
                compelled,
                loaded_intervals,
                iterations,
                seed: ctx.base.seed,
                partition: PartitionSpec::new(partition.intervals, partition.points)?,
                histogram_bins: bins,
                parallel: !serial,
                ..McpConfig::default()
            };
            return mcp(&ctx, scenario, &config, out.as_deref(), summary.as_deref());
        }
        Command::Model {
            scenario,
            grid,
            params_only,
            out,
        } => model(&ctx, scenario, grid, params_only, out.as_deref())?,
        Command::Simulate {
            scenario,
            mode,
            draws,
            bins,
            x_max,
            out,
            summary,
        } => simulate(
            &ctx,
            scenario,
            mode,
            draws,
            bins,
            x_max,
            out.as_deref(),
            summary.as_deref(),
        )?,
    }
    Ok(ExitCode::SUCCESS)
}

fn layout(ctx: &Session, out: Option<&Path>) -> Result<()> {
    let layout = build_layout(ctx.base.cell_radius)?;
    let mut w = csv_writer(out, &["index", "x_m", "y_m", "ring"])?;
    for (i, p) in layout.ap_positions().iter().enumerate() {
        w.serialize((i, p.x, p.y, layout.ring(i)?))?;
    }
    w.flush()?;
    Ok(())
}

fn lambdas(ctx: &Session, args: ScenarioArgs, out: Option<&Path>) -> Result<()> {
    let (_, scenario) = ctx.scenario(args)?;
    let mut w = csv_writer(out, &["n", "lambda", "ap_index", "ring"])?;
    for (rank, i) in scenario.interferers().iter().enumerate() {
        w.serialize((
            rank + 1,
            i.lambda,
            i.ap_index,
            scenario.layout().ring(i.ap_index)?,
        ))?;
    }
    w.flush()?;
    Ok(())
}

fn moments(
    ctx: &Session,
    reuse: Option<ReusePattern>,
    orders: &[u32],
    sigmas: Option<SigmaList>,
    out: Option<&Path>,
) -> Result<()> {
    let (config, scenario) = ctx.scenario(ScenarioArgs {
        reuse,
        sigma_db: None,
    })?;
    let lambdas = scenario.lambdas();
    let sigmas = sigmas.map_or_else(|| vec![config.sigma_db], |s| s.0);
    let mut w = csv_writer(out, &["sigma_db", "k", "single", "multi"])?;
    for &sigma in &sigmas {
        for &k in orders {
            anyhow::ensure!(k >= 1, "moment orders start at 1");
            let multi = multi_moment(k, &lambdas, sigma)?;
            w.serialize((sigma, k, single_moment(k, sigma), multi))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn closed_form_pdf(
    ctx: &Session,
    args: ScenarioArgs,
    grid: usize,
    x_max: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let (config, scenario) = ctx.scenario(args)?;
    if config.sigma_db != 0.0 {
        log::warn!(
            "the closed form ignores shadowing (sigma_dB = {})",
            config.sigma_db
        );
    }
    let law = HypoExp::new(&scenario.lambdas())?;
    let x_max = match x_max {
        Some(x) => x,
        None => tail_point(&law, 1e-6)?,
    };
    let grid = grid.max(1);
    let mut w = csv_writer(out, &["x", "pdf", "cdf"])?;
    for i in 0..=grid {
        let x = x_max * i as f64 / grid as f64;
        w.serialize((x, law.pdf(x)?, law.cdf(x)?))?;
    }
    w.flush()?;
    Ok(())
}

fn typical_set(
    ctx: &Session,
    args: ScenarioArgs,
    partition: PartitionArgs,
    out: Option<&Path>,
) -> Result<()> {
    let config = ctx.config(args);
    let spec = PartitionSpec::new(partition.intervals, partition.points)?;
    let set = typical_set_cached(ctx.cache.as_ref(), config.sigma_db, spec)?;
    let mut w = csv_writer(out, &["interval_j", "amplitude", "probability"])?;
    for j in 0..spec.intervals {
        let p = spec.element_probability(j);
        for a in set.interval(j) {
            w.serialize((j + 1, a, p))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn mcp(
    ctx: &Session,
    args: ScenarioArgs,
    config: &McpConfig,
    out: Option<&Path>,
    summary: Option<&Path>,
) -> Result<ExitCode> {
    let (scenario_config, scenario) = ctx.scenario(args)?;
    let set = typical_set_cached(
        ctx.cache.as_ref(),
        scenario_config.sigma_db,
        config.partition,
    )?;
    let result = run_mcp(&scenario, &set, config)?;
    if let Some(cache) = &ctx.cache {
        let key = panel_set_key(&format!(
            "{}J={} P={} M={} loaded={} iterations={}",
            scenario_config.emit(),
            config.partition.intervals,
            config.partition.points,
            config.compelled,
            config.loaded_intervals,
            config.iterations
        ));
        cache.store_panel_set(&key, &result.panel)?;
        log::info!("final panel set cached under {key}");
    }

    let h = &result.histogram;
    let edges = h.edges();
    let mut w = csv_writer(out, &["bin_lo", "bin_hi", "mass", "density"])?;
    w.serialize((0.0, edges[0], h.underflow(), h.underflow() / edges[0]))?;
    for ((pair, m), d) in edges.windows(2).zip(h.masses()).zip(h.densities()) {
        w.serialize((pair[0], pair[1], m, d))?;
    }
    w.serialize((edges[edges.len() - 1], f64::INFINITY, h.overflow(), 0.0))?;
    w.flush()?;

    let sup_distance = if scenario_config.sigma_db == 0.0 {
        let law = HypoExp::new(&scenario.lambdas())?;
        Some(h.sup_distance(|x| law.cdf(x).unwrap_or(f64::NAN)))
    } else {
        None
    };
    let check = result.check();
    let report = json!({
        "reuse": scenario_config.reuse.to_string(),
        "sigma_dB": scenario_config.sigma_db,
        "seed": config.seed,
        "iterations": result.iterations,
        "compelled": config.compelled,
        "loaded_intervals": config.loaded_intervals,
        "intervals": config.partition.intervals,
        "points": config.partition.points,
        "mean": result.mean,
        "exact_mean": result.exact_mean,
        "deviation_percent": 100.0 * result.deviation(),
        "sup_cdf_distance_closed_form": sup_distance,
        "converged": check.is_ok(),
    });
    match summary {
        Some(p) => write_json(Some(p), &report)?,
        None => eprintln!("{}", serde_json::to_string(&report)?),
    }
    match check {
        Ok(()) => Ok(ExitCode::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(EXIT_DIVERGED))
        }
    }
}

fn model(
    ctx: &Session,
    args: ScenarioArgs,
    grid: usize,
    params_only: bool,
    out: Option<&Path>,
) -> Result<()> {
    let config = ctx.config(args);
    let model = model_for(config.reuse, config.sigma_db).with_context(|| {
        format!(
            "no usable model for {} at sigma_dB = {}",
            config.reuse, config.sigma_db
        )
    })?;
    if params_only {
        let exact = config.scenario()?.mean_gain();
        let report = model.mean_report(exact)?;
        return write_json(
            out,
            &json!({
                "reuse": config.reuse.to_string(),
                "sigma_dB": config.sigma_db,
                "eta": model.params.eta,
                "alpha": model.params.alpha,
                "k": model.params.k,
                "beta": model.params.beta,
                "x_t": model.x_t,
                "a": model.a,
                "truncated_mean": report.truncated_mean,
                "exact_mean": report.exact_mean,
                "deviation_percent": 100.0 * report.deviation,
            }),
        );
    }
    let grid = grid.max(1);
    let mut w = csv_writer(out, &["x", "pdf", "cdf"])?;
    for i in 0..=grid {
        let x = model.x_t * i as f64 / grid as f64;
        w.serialize((x, model.pdf(x), model.cdf(x)))?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    ctx: &Session,
    args: ScenarioArgs,
    mode: Mode,
    draws: u64,
    bins: usize,
    x_max: Option<f64>,
    out: Option<&Path>,
    summary: Option<&Path>,
) -> Result<()> {
    let (config, scenario) = ctx.scenario(args)?;
    let law = HypoExp::new(&scenario.lambdas())?;
    let sampler = GainSampler::new(&scenario, mode)?;
    let x_max = match x_max {
        Some(x) => x,
        None => tail_point(&law, 1e-4)?,
    };
    let bins = bins.max(1);
    let width = x_max / bins as f64;
    let keep = draws <= EXACT_QUANTILE_LIMIT;

    let mut counts = vec![0u64; bins];
    let mut overflow = 0u64;
    let mut stats = SampleSummary::new(&[], false);
    let mut kept = Vec::new();
    let chunks = chunk_count(draws);
    let mut start = 0;
    while start < chunks {
        let end = (start + SIMULATE_BATCH_CHUNKS).min(chunks);
        let batch = simulate_chunks(&sampler, draws, config.seed, start..end);
        for &x in &batch {
            stats.push(x);
            let b = (x / width) as usize;
            match counts.get_mut(b) {
                Some(c) => *c += 1,
                None => overflow += 1,
            }
        }
        if keep {
            kept.extend_from_slice(&batch);
        }
        start = end;
    }

    let mut w = csv_writer(out, &["x", "empirical_pdf", "closed_form_pdf"])?;
    let n = draws.max(1) as f64;
    for (b, c) in counts.iter().enumerate() {
        let x = (b as f64 + 0.5) * width;
        w.serialize((x, *c as f64 / (n * width), law.pdf(x)?))?;
    }
    w.flush()?;

    let ks = if keep && !kept.is_empty() {
        Some(ks_distance(&mut kept, |x| law.cdf(x).unwrap_or(f64::NAN)))
    } else {
        None
    };
    let report = json!({
        "reuse": config.reuse.to_string(),
        "sigma_dB": config.sigma_db,
        "mode": format!("{mode:?}").to_lowercase(),
        "seed": config.seed,
        "draws": draws,
        "mean": stats.mean(),
        "exact_mean": scenario.mean_gain(),
        "moment2": stats.moment(2),
        "moment3": stats.moment(3),
        "min": stats.min(),
        "max": stats.max(),
        "overflow_fraction": overflow as f64 / n,
        "ks_closed_form": ks,
    });
    match summary {
        Some(p) => write_json(Some(p), &report),
        None => {
            eprintln!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
    }
}
