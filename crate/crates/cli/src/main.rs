use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use urllc_core::config::{SystemConfig, CONFIG_KEYS};
use urllc_core::markov::build_chain;
use urllc_core::metrics::Analyzer;
use urllc_core::optimize::{optimize_m, optimize_n};
use urllc_core::outage::build_outage_table;
use urllc_core::sim::{campaign_traces, place_ues, run_campaign, CampaignOptions, ChannelMode, McEstimate};

mod table;

use table::Comparison;

/// Prefix of environment variables that override config keys, e.g. `URLLC_N_UES=10`.
const ENV_PREFIX: &str = "URLLC_";

/// Reliability, energy-efficiency analysis and Monte Carlo simulation of
/// grant-free URLLC uplinks with ZF multi-user detection.
#[derive(Debug, Parser)]
#[command(name = "urllc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// key = value config file; `preset = name` lines load a preset first.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset used when no config file is given.
    #[arg(long, global = true, default_value = "reference")]
    preset: String,
    /// Override one config key (repeatable); applied after URLLC_* variables.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for randomized commands; a fresh one is drawn and reported when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo slots per campaign.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    slots: u64,
    /// Worker threads for campaigns (estimates do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Analysis,
    Sim,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Iid,
    Cor,
}

impl From<Mode> for ChannelMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Iid => ChannelMode::Iid,
            Mode::Cor => ChannelMode::Cor,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytical error probability, throughput, power and efficiency.
    Analyze {
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Monte Carlo campaign.
    Simulate {
        #[arg(long, value_enum, default_value = "iid")]
        mode: Mode,
        /// Also write per-slot traces as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Number of leading slots to trace.
        #[arg(long, default_value_t = 1000)]
        trace_limit: u64,
    },
    /// Compare both engines and flag metrics more than 3 standard errors apart.
    Validate {
        #[arg(long, value_enum, default_value = "iid")]
        mode: Mode,
    },
    /// Evaluate a grid of parameter values; one CSV row per point and engine.
    Sweep {
        /// `key=v1,v2,...`, `key=lo:hi` (integers) or `key=lo:hi:step`; repeat
        /// for a grid. Pair-valued keys separate items with `;`.
        #[arg(long = "vary", value_name = "KEY=VALUES", required = true)]
        vary: Vec<String>,
        #[arg(long, value_enum, default_value = "analysis")]
        engine: Engine,
        #[arg(long, value_enum, default_value = "iid")]
        mode: Mode,
    },
    /// Most energy-efficient number of UEs under the error constraint.
    OptimizeN {
        /// Defaults to the config's `eps_max`.
        #[arg(long)]
        eps_max: Option<f64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Most energy-efficient number of antennas under the error constraint.
    OptimizeM {
        #[arg(long)]
        eps_max: Option<f64>,
        /// Largest antenna count considered; defaults to twice the number of UEs.
        #[arg(long)]
        m_max: Option<usize>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Transition matrix of the contention chain for `n` initial contenders.
    DumpChain {
        #[arg(long)]
        n: usize,
    },
    /// Outage probability for every number of simultaneous transmitters.
    DumpOutage,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let config = load_config(g)?;
    let text = match cli.command {
        Command::Analyze { format } => analyze(&config, format)?,
        Command::Simulate { mode, trace, trace_limit } => simulate(g, &config, mode.into(), trace.as_deref(), trace_limit)?,
        Command::Validate { mode } => validate(g, &config, mode.into())?,
        Command::Sweep { vary, engine, mode } => sweep(g, &config, &vary, engine, mode.into())?,
        Command::OptimizeN { eps_max, format } => {
            let res = optimize_n(&config, eps_max.unwrap_or(config.eps_max))?;
            match format {
                Format::Json => serde_json::to_string_pretty(&res)? + "\n",
                Format::Csv => res.sweep_csv("n_ues"),
            }
        }
        Command::OptimizeM { eps_max, m_max, format } => {
            let m_max = m_max.unwrap_or(2 * config.n_ues);
            let res = optimize_m(&config, eps_max.unwrap_or(config.eps_max), m_max)?;
            match format {
                Format::Json => serde_json::to_string_pretty(&res)? + "\n",
                Format::Csv => res.sweep_csv("n_antennas"),
            }
        }
        Command::DumpChain { n } => {
            let table = build_outage_table(&config)?;
            build_chain(n, config.rounds()?, &table)?.to_csv()
        }
        Command::DumpOutage => build_outage_table(&config)?.to_csv(),
    };
    emit(g.out.as_deref(), &text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Preset or file, then `URLLC_*` variables, then `--set` pairs.
fn load_config(g: &Global) -> Result<SystemConfig> {
    let mut cfg = match &g.config {
        Some(path) => SystemConfig::load(path)?,
        None => SystemConfig::preset(&g.preset)?,
    };
    let mut env: Vec<(String, String)> = std::env::vars()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|key| (key.to_ascii_lowercase(), v)))
        .collect();
    env.sort();
    for (key, value) in env {
        cfg.set(&key, &value)
            .with_context(|| format!("environment variable {ENV_PREFIX}{}", key.to_ascii_uppercase()))?;
    }
    for pair in &g.overrides {
        let (key, value) = pair
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{pair}`"))?;
        cfg.set(key.trim(), value.trim())
            .with_context(|| format!("--set {pair}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seed(g: &Global) -> u64 {
    g.seed.unwrap_or_else(|| {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        let s = nanos ^ (u64::from(std::process::id()) << 32);
        eprintln!("no --seed given; using {s}");
        s
    })
}

fn campaign_options(g: &Global, mode: ChannelMode, seed: u64) -> CampaignOptions {
    CampaignOptions {
        workers: g
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        ..CampaignOptions::new(g.slots, mode, seed)
    }
}

fn analyze(config: &SystemConfig, format: Format) -> Result<String> {
    let report = Analyzer::new(config.clone())?.report()?;
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => format!("{}\n{}\n", table::header(), table::analysis_row(&report)),
    })
}

fn simulate(
    g: &Global,
    config: &SystemConfig,
    mode: ChannelMode,
    trace: Option<&Path>,
    trace_limit: u64,
) -> Result<String> {
    let opts = campaign_options(g, mode, seed(g));
    let est = run_campaign(config, &opts)?;
    if let Some(path) = trace {
        let mut lines = String::new();
        for t in campaign_traces(config, &opts, trace_limit)? {
            lines.push_str(&serde_json::to_string(&t)?);
            lines.push('\n');
        }
        fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
    }
    let out = json!({
        "config": config,
        "config_hash": format!("{:016x}", config.config_hash()),
        "estimate": est,
    });
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

fn validate(g: &Global, config: &SystemConfig, mode: ChannelMode) -> Result<String> {
    let seed = seed(g);
    let opts = campaign_options(g, mode, seed);
    let placement = place_ues(config, seed)?;
    let est = run_campaign(config, &CampaignOptions { placement: Some(placement), ..opts })?;
    // Score the analysis against the transmit powers the campaign actually used.
    let mut matched = config.clone();
    matched.mean_ue_power_w = Some(est.mean_ue_power_w);
    let report = Analyzer::new(matched)?.report()?;
    let rows = comparisons(&report, &est);
    let mut out = format!("# seed={seed} n_slots={} mode={mode}\n{}\n", est.n_slots, table::COMPARISON_HEADER);
    for c in &rows {
        out.push_str(&table::comparison_row(c));
        out.push('\n');
    }
    Ok(out)
}

fn comparisons(report: &urllc_core::MetricsReport, est: &McEstimate) -> Vec<Comparison> {
    vec![
        Comparison {
            metric: "epsilon",
            analytical: Some(report.epsilon),
            simulated: Some(est.epsilon_hat),
            se: Some(est.epsilon_se),
        },
        Comparison {
            metric: "throughput_cond_bps",
            analytical: Some(report.throughput_cond_bps),
            simulated: Some(est.throughput_hat),
            se: Some(est.throughput_se),
        },
        Comparison {
            metric: "power_w",
            analytical: Some(report.power_w),
            simulated: Some(est.power_hat),
            se: Some(est.power_se),
        },
        Comparison {
            metric: "efficiency_cond_bpj",
            analytical: report.efficiency_cond_bpj,
            simulated: est.eta_hat,
            se: est.eta_se,
        },
    ]
}

const PAIR_KEYS: &[&str] = &["ue_distance_range_m", "pathloss"];

/// Expands one `--vary` argument into its key and value strings.
fn parse_vary(arg: &str) -> Result<(String, Vec<String>)> {
    let (key, spec) = arg
        .split_once('=')
        .with_context(|| format!("--vary expects KEY=VALUES, got `{arg}`"))?;
    let key = key.trim();
    if !CONFIG_KEYS.contains(&key) {
        bail!("unknown sweep parameter `{key}` (expected one of: {})", CONFIG_KEYS.join(", "));
    }
    let spec = spec.trim();
    let values: Vec<String> = if PAIR_KEYS.contains(&key) {
        spec.split(';').map(|s| s.trim().to_string()).collect()
    } else if spec.contains(':') {
        expand_range(spec)?
    } else {
        spec.split(',').map(|s| s.trim().to_string()).collect()
    };
    if values.is_empty() || values.iter().any(String::is_empty) {
        bail!("empty value in `--vary {arg}`");
    }
    Ok((key.to_string(), values))
}

fn expand_range(spec: &str) -> Result<Vec<String>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] => {
            let (lo, hi): (i64, i64) = (
                lo.parse().with_context(|| format!("range start `{lo}`"))?,
                hi.parse().with_context(|| format!("range end `{hi}`"))?,
            );
            if hi < lo {
                bail!("empty range {lo}:{hi}");
            }
            Ok((lo..=hi).map(|v| v.to_string()).collect())
        }
        [lo, hi, step] => {
            let lo: f64 = lo.parse().with_context(|| format!("range start `{lo}`"))?;
            let hi: f64 = hi.parse().with_context(|| format!("range end `{hi}`"))?;
            let step: f64 = step.parse().with_context(|| format!("range step `{step}`"))?;
            if !(step > 0.0) || hi < lo {
                bail!("bad range {spec}");
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| format!("{}", lo + i as f64 * step)).collect())
        }
        _ => bail!("bad range `{spec}` (expected lo:hi or lo:hi:step)"),
    }
}

fn sweep(g: &Global, base: &SystemConfig, vary: &[String], engine: Engine, mode: ChannelMode) -> Result<String> {
    let axes = vary.iter().map(|a| parse_vary(a)).collect::<Result<Vec<_>>>()?;
    let mut points = vec![base.clone()];
    for (key, values) in &axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut c = p.clone();
                c.set(key, v).with_context(|| format!("--vary {key}={v}"))?;
                next.push(c);
            }
        }
        points = next;
    }
    let seed = (engine != Engine::Analysis).then(|| seed(g));

    let mut out = table::header();
    out.push('\n');
    for cfg in &points {
        cfg.validate().with_context(|| sweep_point(cfg, &axes))?;
        if engine != Engine::Sim {
            let report = Analyzer::new(cfg.clone())
                .and_then(|a| a.report())
                .with_context(|| sweep_point(cfg, &axes))?;
            out.push_str(&table::analysis_row(&report));
            out.push('\n');
        }
        if let Some(seed) = seed {
            let est = run_campaign(cfg, &campaign_options(g, mode, seed)).with_context(|| sweep_point(cfg, &axes))?;
            out.push_str(&table::sim_row(cfg, &est));
            out.push('\n');
        }
    }
    Ok(out)
}

fn sweep_point(cfg: &SystemConfig, axes: &[(String, Vec<String>)]) -> String {
    let at: Vec<String> = axes
        .iter()
        .map(|(k, _)| format!("{k}={}", cfg.get(k).unwrap_or_default()))
        .collect();
    format!("sweep point {}", at.join(" "))
}
