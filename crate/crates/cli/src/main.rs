//! `fdm`: exact PMFs, samples, dispersion reports, operator chains and
//! convergence experiments for count distributions.

mod chain;
mod experiments;
mod mv;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fdm_core::families::{atlas, REGISTRY};
use fdm_core::series::{fmt_f64, pmf_from_fcgf, TableSampler};
use fdm_core::{FamilySpec, PmfConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use chain::{Invocation, Terminal};
use experiments::Experiment;

/// Bad arguments; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "fdm", version, about = "Count distributions through their factorial cumulant generating functions")]
struct Cli {
    /// Write output here instead of stdout (a directory for --manifest)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// PMF truncation order
    #[arg(long, global = true, env = "FDM_TRUNC")]
    trunc: Option<usize>,
    /// Largest tail mass accepted for a complete table
    #[arg(long, global = true)]
    tail_tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// PMF table: --family NAME --PARAM VALUE ... [--n N]
    Pmf(FamilyTokens),
    /// Draws: --family NAME --PARAM VALUE ... --n COUNT
    Sample(FamilyTokens),
    /// Mean, dispersion, Fisher index and zero-inflation index
    Report(FamilyTokens),
    /// Operator chain: --family NAME ... [dilate|tilt|mtransform|translate|subtract|geomthin ...] [pmf|sample|report]
    Op(FamilyTokens),
    /// Convergence experiment, or a batch from --manifest
    #[command(args_conflicts_with_subcommands = true)]
    Converge {
        /// JSON manifest of experiments; per-experiment CSVs and summary.json go to --out
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(subcommand)]
        experiment: Option<Experiment>,
    },
    /// Multivariate counts
    #[command(subcommand)]
    Mv(mv::MvCommand),
    /// Power parameter p and stable index alpha of the named power-dispersion laws
    Atlas,
    /// Catalog of named families and their parameters
    Families,
}

#[derive(Debug, clap::Args)]
struct FamilyTokens {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "ARGS")]
    tokens: Vec<String>,
}

const GLOBAL_FLAGS: [&str; 5] = ["--out", "--format", "--seed", "--trunc", "--tail-tol"];

/// Moves global flags found after free-form family tokens in front of the
/// subcommand, where clap parses them.
fn hoist_globals(argv: Vec<String>) -> Vec<String> {
    let mut head = Vec::new();
    let mut rest = Vec::new();
    let mut it = argv.into_iter();
    if let Some(bin) = it.next() {
        head.push(bin);
    }
    let mut it = it.peekable();
    while let Some(a) = it.next() {
        let flag = a.split_once('=').map_or(a.as_str(), |(f, _)| f);
        if GLOBAL_FLAGS.contains(&flag) {
            let inline = a.contains('=');
            head.push(a);
            if !inline {
                if let Some(v) = it.next() {
                    head.push(v);
                }
            }
        } else {
            rest.push(a);
        }
    }
    head.extend(rest);
    head
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Output text ready to be written.
pub struct Rendered(pub String);

impl Rendered {
    fn json(v: &Value) -> Self {
        Rendered(serde_json::to_string_pretty(v).expect("json values serialize") + "\n")
    }
}

fn config(cli: &Cli) -> Result<PmfConfig, UsageError> {
    let mut cfg = PmfConfig::default();
    if let Some(n) = cli.trunc {
        if n == 0 {
            return Err(UsageError("--trunc must be positive".into()));
        }
        cfg.order = n;
    }
    if let Some(t) = cli.tail_tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(UsageError("--tail-tol must lie in (0, 1)".into()));
        }
        cfg.tail_tol = t;
    }
    Ok(cfg)
}

fn render_outcome(e: &Experiment, format: Format, seed: u64) -> anyhow::Result<Rendered> {
    render_outcome_with(e, format, seed, &PmfConfig::default())
}

fn render_outcome_with(e: &Experiment, format: Format, seed: u64, cfg: &PmfConfig) -> anyhow::Result<Rendered> {
    let outcome = e.run(cfg, &mut rng(seed))?;
    Ok(match format {
        Format::Csv => Rendered(outcome.csv),
        Format::Json => Rendered::json(&json!({ "experiment": e.name(), "result": outcome.summary })),
    })
}

fn family_command(inv: &Invocation, cfg: &PmfConfig, format: Format, seed: u64) -> anyhow::Result<Rendered> {
    let spec = FamilySpec::make(&inv.family, &inv.params)?;
    let f = chain::apply(&spec, &inv.ops, cfg)?;
    match inv.terminal {
        Terminal::Pmf => {
            let order = inv.n.unwrap_or(cfg.order);
            let table = pmf_from_fcgf(&f, &PmfConfig { order, ..*cfg })?;
            Ok(match format {
                Format::Csv => {
                    let mut s = table.to_csv();
                    s.push_str(&format!("# total={},tail_bound={}\n", fmt_f64(table.total()), fmt_f64(table.tail_bound())));
                    Rendered(s)
                }
                Format::Json => Rendered::json(&json!({
                    "family": spec.name(),
                    "probs": table.probs(),
                    "total": table.total(),
                    "tail_bound": table.tail_bound(),
                })),
            })
        }
        Terminal::Sample => {
            let n = inv.n.ok_or_else(|| UsageError("sample needs --n COUNT".into()))?;
            let table = pmf_from_fcgf(&f, cfg)?;
            table.require_complete(cfg.tail_tol)?;
            let sampler = TableSampler::new(&table);
            let mut r = rng(seed);
            let draws: Vec<u64> = (0..n).map(|_| sampler.sample(&mut r)).collect();
            Ok(match format {
                Format::Csv => {
                    let mut s = String::from("x\n");
                    for d in &draws {
                        s.push_str(&format!("{d}\n"));
                    }
                    Rendered(s)
                }
                Format::Json => Rendered::json(&json!({ "family": spec.name(), "seed": seed, "draws": draws })),
            })
        }
        Terminal::Report => {
            if inv.n.is_some() {
                return Err(UsageError("report takes no --n".into()).into());
            }
            let r = f.report()?;
            let opt = |x: Option<f64>| x.map_or(String::new(), fmt_f64);
            Ok(match format {
                Format::Csv => Rendered(format!(
                    "mean,dispersion,fisher_index,zero_inflation\n{},{},{},{}\n",
                    fmt_f64(r.mean),
                    fmt_f64(r.dispersion),
                    opt(r.fisher_index),
                    opt(r.zero_inflation)
                )),
                Format::Json => Rendered::json(&serde_json::to_value(r)?),
            })
        }
    }
}

fn fmt_short(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn run(cli: &Cli) -> anyhow::Result<Option<Rendered>> {
    let cfg = config(cli)?;
    let fixed = |t| Some(t);
    let out = match &cli.command {
        Command::Pmf(t) => family_command(&chain::parse(&t.tokens, fixed(Terminal::Pmf))?, &cfg, cli.format, cli.seed)?,
        Command::Sample(t) => family_command(&chain::parse(&t.tokens, fixed(Terminal::Sample))?, &cfg, cli.format, cli.seed)?,
        Command::Report(t) => family_command(&chain::parse(&t.tokens, fixed(Terminal::Report))?, &cfg, cli.format, cli.seed)?,
        Command::Op(t) => family_command(&chain::parse(&t.tokens, None)?, &cfg, cli.format, cli.seed)?,
        Command::Converge { manifest: Some(path), .. } => {
            let out = cli
                .out
                .as_ref()
                .ok_or_else(|| UsageError("--manifest needs --out DIR".into()))?;
            experiments::run_manifest(path, out, &cfg, cli.seed)?;
            return Ok(None);
        }
        Command::Converge { experiment: Some(e), .. } => render_outcome_with(e, cli.format, cli.seed, &cfg)?,
        Command::Converge { .. } => return Err(UsageError("converge needs an experiment or --manifest".into()).into()),
        Command::Mv(cmd) => mv::run(cmd, cli.format, cli.seed)?,
        Command::Atlas => {
            let rows = atlas();
            match cli.format {
                Format::Csv => Rendered(
                    rows.iter()
                        .map(|r| format!("{}, p={}, alpha={}\n", r.family, fmt_short(r.p), fmt_short(r.alpha)))
                        .collect(),
                ),
                Format::Json => Rendered::json(&json!(rows
                    .iter()
                    .map(|r| json!({ "family": r.family, "p": r.p, "alpha": fmt_short(r.alpha) }))
                    .collect::<Vec<_>>())),
            }
        }
        Command::Families => match cli.format {
            Format::Csv => {
                let mut s = String::from("family,params,optional,summary\n");
                for i in REGISTRY {
                    s.push_str(&format!("{},{},{},\"{}\"\n", i.name, i.params.join(";"), i.optional.join(";"), i.summary));
                }
                Rendered(s)
            }
            Format::Json => Rendered::json(&json!(REGISTRY
                .iter()
                .map(|i| json!({ "family": i.name, "params": i.params, "optional": i.optional, "summary": i.summary }))
                .collect::<Vec<_>>())),
        },
    };
    Ok(Some(out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(hoist_globals(std::env::args().collect())) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Rendered(text))) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display())),
                None => match std::io::stdout().lock().write_all(text.as_bytes()) {
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                    r => r.map_err(|e| e.to_string()),
                },
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            let usage = e.downcast_ref::<UsageError>().is_some();
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
