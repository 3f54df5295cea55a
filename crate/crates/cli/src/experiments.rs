//! Named convergence experiments and the JSON manifest runner.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use clap::Subcommand;
use fdm_core::asymptotics::{
    binomial_converge, boundary_grid, dispersion_limit_check, hermite_clt, hermite_revisited, inar1_simulate,
    mean_and_acf, pt_converge, thin_numbers, ConvergenceRun, Direction, Inar1Config,
};
use fdm_core::multivariate::{mv_thin_numbers, sample_moments, sample_mv_pt, MvFcgf, MvPmf, MvPtParams, DEFAULT_AXIS_BUDGET};
use fdm_core::series::{fmt_f64, pmf_from_fcgf};
use fdm_core::{FamilySpec, PmfConfig};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::chain::parse_family_string;
use crate::UsageError;

#[derive(Debug, Clone, Subcommand, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Thinned averages against Poisson
    ThinNumbers {
        /// Base family as `name:key=value,...`
        #[arg(long)]
        family: String,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
    },
    /// Centred, scaled sums against a Hermite law
    HermiteClt {
        #[arg(long)]
        family: String,
        #[arg(long)]
        mu: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
    },
    /// Reproductive members near an interior mean against a Hermite law
    HermiteRevisited {
        #[arg(long)]
        family: String,
        #[arg(long)]
        mu0: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
    },
    /// Scaled tilting-family members against a Poisson-Tweedie law
    PtConverge {
        #[arg(long)]
        family: String,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        gamma: f64,
        /// Leading constant of the dispersion function; estimated when absent
        #[arg(long)]
        #[serde(default)]
        c0: Option<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long)]
        direction: Direction,
    },
    /// Scaled additive members against a binomial law
    BinomialConverge {
        #[arg(long)]
        family: String,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        trials: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
    },
    /// Log-log fit of the dispersion function near a boundary
    DispersionLimit {
        #[arg(long)]
        family: String,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        boundary: Direction,
        #[arg(long, value_delimiter = ',')]
        #[serde(default)]
        grid: Vec<f64>,
    },
    /// Simulated INAR(1) path
    Inar1 {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        length: usize,
    },
    /// Multivariate thinned averages against independent Poissons
    MvThinNumbers {
        /// Law as JSON, e.g. '{"kind":"bivariate-poisson","mu":[0.5,1,1]}'
        #[arg(long, value_parser = parse_mv_law)]
        law: MvFcgf,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_AXIS_BUDGET)]
        #[serde(default = "default_side")]
        side: usize,
    },
    /// Draws from the multivariate Poisson-Tweedie law
    MvSample {
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        /// Rows separated by ';', entries by ','
        #[arg(long, value_parser = crate::mv::parse_matrix)]
        sigma: Matrix,
        #[arg(long)]
        count: usize,
    },
}

/// Square matrix given on the command line or in JSON.
pub type Matrix = Vec<Vec<f64>>;

fn default_side() -> usize {
    DEFAULT_AXIS_BUDGET
}

pub fn parse_mv_law(s: &str) -> Result<MvFcgf, String> {
    serde_json::from_str(s).map_err(|e| format!("not a multivariate law: {e}"))
}

/// CSV rows plus a JSON summary.
pub struct Outcome {
    pub csv: String,
    pub summary: Value,
}

fn family(s: &str) -> anyhow::Result<FamilySpec> {
    let (name, params) = parse_family_string(s)?;
    Ok(FamilySpec::make(&name, &params)?)
}

fn run_outcome(run: ConvergenceRun) -> Outcome {
    let summary = serde_json::to_value(run.summary()).expect("summary serializes");
    Outcome { csv: run.to_csv(), summary }
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ThinNumbers { .. } => "thin_numbers",
            Experiment::HermiteClt { .. } => "hermite_clt",
            Experiment::HermiteRevisited { .. } => "hermite_revisited",
            Experiment::PtConverge { .. } => "pt_converge",
            Experiment::BinomialConverge { .. } => "binomial_converge",
            Experiment::DispersionLimit { .. } => "dispersion_limit",
            Experiment::Inar1 { .. } => "inar1",
            Experiment::MvThinNumbers { .. } => "mv_thin_numbers",
            Experiment::MvSample { .. } => "mv_sample",
        }
    }

    pub fn run(&self, cfg: &PmfConfig, rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
        Ok(match self {
            Experiment::ThinNumbers { family: f, grid } => {
                let spec = family(f)?;
                let base = pmf_from_fcgf(spec.fcgf(), cfg)?;
                let mu = spec.fcgf().mean()?;
                run_outcome(thin_numbers(&base, mu, grid, cfg)?)
            }
            Experiment::HermiteClt { family: f, mu, grid } => run_outcome(hermite_clt(family(f)?.fcgf(), *mu, grid, cfg)?),
            Experiment::HermiteRevisited { family: f, mu0, mu, gamma, grid } => {
                run_outcome(hermite_revisited(&family(f)?, *mu0, *mu, *gamma, grid, cfg)?)
            }
            Experiment::PtConverge { family: f, p, mu, gamma, c0, grid, direction } => {
                run_outcome(pt_converge(&family(f)?, *p, *mu, *gamma, *c0, grid, *direction, cfg)?)
            }
            Experiment::BinomialConverge { family: f, mu, trials, grid } => {
                run_outcome(binomial_converge(&family(f)?, *mu, *trials, grid, cfg)?)
            }
            Experiment::DispersionLimit { family: f, p, boundary, grid } => {
                let grid = if grid.is_empty() { boundary_grid(*boundary) } else { grid.clone() };
                let fit = dispersion_limit_check(&family(f)?, *p, *boundary, &grid)?;
                let mut csv = String::from("mean,v\n");
                for (m, v) in fit.means.iter().zip(&fit.values) {
                    csv.push_str(&format!("{},{}\n", fmt_f64(*m), fmt_f64(*v)));
                }
                Outcome {
                    csv,
                    summary: json!({ "slope": fit.slope, "intercept": fit.intercept, "c0": fit.c0 }),
                }
            }
            Experiment::Inar1 { lambda, c, length } => {
                let xs = inar1_simulate(&Inar1Config::new(*lambda, *c, *length)?, rng);
                let (mean, acf) = mean_and_acf(&xs, 1);
                let mut csv = String::from("t,x\n");
                for (t, x) in xs.iter().enumerate() {
                    csv.push_str(&format!("{t},{x}\n"));
                }
                Outcome { csv, summary: json!({ "mean": mean, "acf1": acf, "length": length }) }
            }
            Experiment::MvThinNumbers { law, grid, side } => {
                let base = MvPmf::from_fcgf(law, *side)?;
                let mu = law.dispersion()?.mean;
                run_outcome(mv_thin_numbers(&base, &mu, grid)?)
            }
            Experiment::MvSample { p, mu, sigma, count } => {
                let params = MvPtParams::new(*p, mu.clone(), sigma.clone())?;
                let xs = sample_mv_pt(&params, *count, rng)?;
                let (mean, cov) = sample_moments(&xs);
                Outcome { csv: crate::mv::counts_csv(&xs), summary: json!({ "mean": mean, "covariance": cov }) }
            }
        })
    }
}

#[derive(Debug, Deserialize)]
struct Entry {
    id: String,
    #[serde(flatten)]
    experiment: Experiment,
}

/// 1-based line of the `n`-th (0-based) occurrence of `needle`.
fn line_of(text: &str, needle: &str, n: usize) -> Option<usize> {
    let (pos, _) = text.match_indices(needle).nth(n)?;
    Some(text[..pos].matches('\n').count() + 1)
}

fn parse_manifest(text: &str) -> Result<Vec<Entry>, UsageError> {
    // Parse as a value first so syntax errors keep their line context, then
    // check each entry separately so schema errors name the offending entry.
    let raw: Value = serde_json::from_str(text).map_err(|e| UsageError(format!("manifest: {e}")))?;
    let items = match &raw {
        Value::Array(a) => a.clone(),
        Value::Object(o) => match o.get("experiments") {
            Some(Value::Array(a)) if o.len() == 1 => a.clone(),
            _ => return Err(UsageError("manifest: expected an array or {\"experiments\": [...]}".into())),
        },
        _ => return Err(UsageError("manifest: expected an array or {\"experiments\": [...]}".into())),
    };
    let mut entries = Vec::with_capacity(items.len());
    let mut seen = BTreeMap::new();
    for (i, item) in items.into_iter().enumerate() {
        let id = item.get("id").and_then(Value::as_str).map(str::to_string);
        let line = id
            .as_deref()
            .and_then(|id| line_of(text, &format!("\"{id}\""), 0))
            .map_or(String::new(), |l| format!(" (line {l})"));
        let entry: Entry = serde_json::from_value(item)
            .map_err(|e| UsageError(format!("manifest entry {i}{line}: {e}")))?;
        if entry.id.is_empty() || !entry.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(UsageError(format!(
                "manifest entry {i}{line}: id '{}' must be non-empty and use only [A-Za-z0-9._-]",
                entry.id
            )));
        }
        let count = seen.entry(entry.id.clone()).or_insert(0usize);
        if *count > 0 {
            let l = line_of(text, &format!("\"{}\"", entry.id), *count).map_or(String::new(), |l| format!(" (line {l})"));
            return Err(UsageError(format!("manifest entry {i}{l}: duplicate experiment id '{}'", entry.id)));
        }
        *count += 1;
        entries.push(entry);
    }
    Ok(entries)
}

/// Runs every entry; writes `<id>.csv` per experiment and `summary.json` into `out`.
pub fn run_manifest(path: &Path, out: &Path, cfg: &PmfConfig, seed: u64) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let entries = parse_manifest(&text)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut summary = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let mut rng = crate::rng(seed);
        rng.set_stream(i as u64);
        let outcome = entry
            .experiment
            .run(cfg, &mut rng)
            .with_context(|| format!("experiment '{}'", entry.id))?;
        let file = out.join(format!("{}.csv", entry.id));
        std::fs::write(&file, outcome.csv).with_context(|| format!("writing {}", file.display()))?;
        summary.push(json!({
            "id": entry.id,
            "experiment": entry.experiment.name(),
            "result": outcome.summary,
        }));
    }
    let file = out.join("summary.json");
    let text = serde_json::to_string_pretty(&Value::Array(summary))? + "\n";
    std::fs::write(&file, text).with_context(|| format!("writing {}", file.display()))?;
    Ok(())
}
