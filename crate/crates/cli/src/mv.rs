//! `fdm mv ...`: dispersion matrices, zero-inflation, sampling and thinned averages.

use clap::{Args, Subcommand};
use fdm_core::multivariate::{classify, mv_zero_inflation, MvDispersion, MvFcgf};
use fdm_core::series::fmt_f64;
use serde_json::json;

use crate::experiments::{parse_mv_law, Experiment, Matrix};
use crate::{Format, Rendered, UsageError};

/// A closed-form law, or a raw mean vector and dispersion matrix.
#[derive(Debug, Clone, Args)]
pub struct LawArgs {
    /// Law as JSON, e.g. '{"kind":"multinomial","trials":3,"q":[0.2,0.3]}'
    #[arg(long, value_parser = parse_mv_law, conflicts_with_all = ["mean", "matrix"])]
    law: Option<MvFcgf>,
    #[arg(long, value_delimiter = ',', requires = "matrix")]
    mean: Option<Vec<f64>>,
    /// Dispersion matrix, rows separated by ';'
    #[arg(long, value_parser = parse_matrix, requires = "mean")]
    matrix: Option<Matrix>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum MvCommand {
    /// Over-, under-, equi- or indefinite dispersion
    Classify(LawArgs),
    /// Zero-inflation index along a direction (all ones by default)
    Zi {
        #[arg(long, value_parser = parse_mv_law)]
        law: MvFcgf,
        #[arg(long, value_delimiter = ',')]
        c: Option<Vec<f64>>,
    },
    /// Draws from the multivariate Poisson-Tweedie law
    Sample {
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        #[arg(long, value_parser = parse_matrix)]
        sigma: Matrix,
        #[arg(long)]
        n: usize,
    },
    /// Thinned averages against independent Poissons
    ThinNumbers {
        #[arg(long, value_parser = parse_mv_law)]
        law: MvFcgf,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = fdm_core::multivariate::DEFAULT_AXIS_BUDGET)]
        side: usize,
    },
}

/// `"a,b;c,d"` into rows.
pub fn parse_matrix(s: &str) -> Result<Matrix, String> {
    let rows: Matrix = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| format!("'{x}' is not a number")))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    if rows.iter().any(|r| r.len() != rows.len()) {
        return Err(format!("matrix must be square, got {} rows", rows.len()));
    }
    Ok(rows)
}

pub fn counts_csv(xs: &[Vec<u64>]) -> String {
    let k = xs.first().map_or(0, |x| x.len());
    let header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    let mut out = header.join(",") + "\n";
    for x in xs {
        let row: Vec<String> = x.iter().map(u64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn run(cmd: &MvCommand, format: Format, seed: u64) -> anyhow::Result<Rendered> {
    match cmd {
        MvCommand::Classify(law) => {
            let d = match (&law.law, &law.mean, &law.matrix) {
                (Some(f), _, _) => {
                    f.validate()?;
                    f.dispersion()?
                }
                (None, Some(mean), Some(m)) => MvDispersion::new(mean.clone(), m.clone())?,
                _ => return Err(UsageError("classify needs --law or --mean with --matrix".into()).into()),
            };
            let class = classify(&d);
            let ev = d.eigenvalues();
            Ok(match format {
                Format::Csv => {
                    let ev: Vec<String> = ev.iter().map(|x| fmt_f64(*x)).collect();
                    Rendered(format!("class,determinant,eigenvalues\n{class},{},{}\n", fmt_f64(d.determinant()), ev.join(";")))
                }
                Format::Json => Rendered::json(&json!({
                    "class": class,
                    "determinant": d.determinant(),
                    "eigenvalues": ev,
                    "mean": d.mean,
                    "matrix": d.matrix,
                })),
            })
        }
        MvCommand::Zi { law, c } => {
            law.validate()?;
            let zi = mv_zero_inflation(law, c.as_deref())?;
            Ok(match format {
                Format::Csv => Rendered(format!("zero_inflation\n{}\n", fmt_f64(zi))),
                Format::Json => Rendered::json(&json!({ "zero_inflation": zi })),
            })
        }
        MvCommand::Sample { p, mu, sigma, n } => {
            let e = Experiment::MvSample { p: *p, mu: mu.clone(), sigma: sigma.clone(), count: *n };
            crate::render_outcome(&e, format, seed)
        }
        MvCommand::ThinNumbers { law, grid, side } => {
            let e = Experiment::MvThinNumbers { law: law.clone(), grid: grid.clone(), side: *side };
            crate::render_outcome(&e, format, seed)
        }
    }
}
