//! Free-form family parameters and operator chains:
//! `--family NAME --KEY VALUE ... [OP --KEY VALUE ...]... [pmf|sample|report --KEY VALUE ...]`.

use std::collections::BTreeMap;

use fdm_core::{AnalyticFcgf, FamilySpec, PmfConfig};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Dilate(f64),
    Tilt(f64),
    MTransform(f64),
    Translate(f64),
    Subtract(f64),
    GeomThin(f64),
}

impl Op {
    const NAMES: [&'static str; 6] = ["dilate", "tilt", "mtransform", "translate", "subtract", "geomthin"];

    fn build(name: &str, kv: &BTreeMap<String, f64>) -> Result<Self, UsageError> {
        let (key, ctor): (&str, fn(f64) -> Op) = match name {
            "dilate" => ("c", Op::Dilate),
            "tilt" => ("theta", Op::Tilt),
            "mtransform" => ("a", Op::MTransform),
            "translate" => ("mu", Op::Translate),
            "subtract" => ("mu", Op::Subtract),
            "geomthin" => ("c", Op::GeomThin),
            _ => unreachable!("checked by caller"),
        };
        if let Some(extra) = kv.keys().find(|k| k.as_str() != key) {
            return Err(UsageError(format!("{name} takes only --{key}, got --{extra}")));
        }
        kv.get(key)
            .map(|v| ctor(*v))
            .ok_or_else(|| UsageError(format!("{name} needs --{key}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Pmf,
    Sample,
    Report,
}

impl Terminal {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "pmf" => Some(Terminal::Pmf),
            "sample" => Some(Terminal::Sample),
            "report" => Some(Terminal::Report),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub ops: Vec<Op>,
    pub terminal: Terminal,
    /// Table order for `pmf`, number of draws for `sample`.
    pub n: Option<usize>,
}

fn parse_value(key: &str, raw: Option<&String>) -> Result<f64, UsageError> {
    let raw = raw.ok_or_else(|| UsageError(format!("--{key} needs a value")))?;
    raw.parse::<f64>()
        .map_err(|_| UsageError(format!("--{key}: '{raw}' is not a number")))
}

/// Parses the tokens after a family subcommand; `terminal` is fixed unless the
/// subcommand is `op`, where it is read from the chain (default `pmf`).
pub fn parse(tokens: &[String], terminal: Option<Terminal>) -> Result<Invocation, UsageError> {
    let mut family = None;
    let mut params = BTreeMap::new();
    let mut ops = Vec::new();
    let mut term = terminal;
    let mut n = None;
    // current op name and its keys
    let mut pending: Option<(String, BTreeMap<String, f64>)> = None;
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        if let Some(key) = tok.strip_prefix("--") {
            if key == "family" {
                let name = tokens.get(i + 1).ok_or_else(|| UsageError("--family needs a name".into()))?;
                if family.replace(name.clone()).is_some() {
                    return Err(UsageError("--family given twice".into()));
                }
            } else if key == "n" {
                let v = tokens.get(i + 1).ok_or_else(|| UsageError("--n needs a value".into()))?;
                n = Some(v.parse::<usize>().map_err(|_| UsageError(format!("--n: '{v}' is not a count")))?);
            } else {
                let v = parse_value(key, tokens.get(i + 1))?;
                let target = match pending.as_mut() {
                    Some((_, kv)) => kv,
                    None if !ops.is_empty() || (terminal.is_none() && term.is_some()) => {
                        return Err(UsageError(format!("--{key} is not an option of the output step")))
                    }
                    None => &mut params,
                };
                if target.insert(key.to_string(), v).is_some() {
                    return Err(UsageError(format!("--{key} given twice")));
                }
            }
            i += 2;
            continue;
        }
        if terminal.is_none() {
            if Op::NAMES.contains(&tok.as_str()) {
                if term.is_some() {
                    return Err(UsageError(format!("operator '{tok}' after the output step")));
                }
                if let Some((name, kv)) = pending.take() {
                    ops.push(Op::build(&name, &kv)?);
                }
                pending = Some((tok.clone(), BTreeMap::new()));
                i += 1;
                continue;
            }
            if let Some(t) = Terminal::parse(tok) {
                if term.replace(t).is_some() {
                    return Err(UsageError("more than one output step".into()));
                }
                if let Some((name, kv)) = pending.take() {
                    ops.push(Op::build(&name, &kv)?);
                }
                i += 1;
                continue;
            }
        }
        return Err(UsageError(format!("unexpected argument '{tok}'")));
    }
    if let Some((name, kv)) = pending.take() {
        ops.push(Op::build(&name, &kv)?);
    }
    let family = family.ok_or_else(|| UsageError("--family is required".into()))?;
    Ok(Invocation { family, params, ops, terminal: term.unwrap_or(Terminal::Pmf), n })
}

/// Parses `name:key=value,key=value` (the form used by experiments and manifests).
pub fn parse_family_string(s: &str) -> Result<(String, BTreeMap<String, f64>), UsageError> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    if name.is_empty() {
        return Err(UsageError(format!("family '{s}' has no name")));
    }
    let mut params = BTreeMap::new();
    for item in rest.split(',').filter(|x| !x.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| UsageError(format!("family parameter '{item}' is not key=value")))?;
        let v = v
            .trim()
            .parse::<f64>()
            .map_err(|_| UsageError(format!("family parameter {k}: '{v}' is not a number")))?;
        if params.insert(k.trim().to_string(), v).is_some() {
            return Err(UsageError(format!("family parameter {k} given twice")));
        }
    }
    Ok((name.to_string(), params))
}

/// Applies the chain; tilts stay inside the family's valid tilt range until
/// another operator has been applied.
pub fn apply(spec: &FamilySpec, ops: &[Op], cfg: &PmfConfig) -> fdm_core::Result<AnalyticFcgf> {
    let mut member = Some(spec.clone());
    let mut f = spec.fcgf().clone();
    for op in ops {
        if let (Op::Tilt(theta), Some(m)) = (op, member.as_ref()) {
            let t = m.tilted(*theta)?;
            f = t.fcgf().clone();
            member = Some(t);
            continue;
        }
        member = None;
        f = match *op {
            Op::Dilate(c) => f.dilate_validated(c, cfg)?,
            Op::Tilt(theta) => f.tilt(theta)?,
            Op::MTransform(a) => f.m_transform_checked(a, cfg)?,
            Op::Translate(mu) => f.translate(mu)?,
            Op::Subtract(mu) => f.subtract(mu, cfg)?,
            Op::GeomThin(c) => f.geometric_thin(c)?,
        };
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn family_with_params() {
        let inv = parse(&toks("--family hermite --mu 2 --gamma 1 --n 10"), Some(Terminal::Pmf)).unwrap();
        assert_eq!(inv.family, "hermite");
        assert_eq!(inv.params["mu"], 2.0);
        assert_eq!(inv.n, Some(10));
        assert!(inv.ops.is_empty());
    }

    #[test]
    fn op_chain() {
        let inv = parse(&toks("--family nb --lambda 3 --mu 1 mtransform --a 1 dilate --c 0.5 pmf --n 10"), None).unwrap();
        assert_eq!(inv.ops, vec![Op::MTransform(1.0), Op::Dilate(0.5)]);
        assert_eq!(inv.terminal, Terminal::Pmf);
        assert_eq!(inv.params.len(), 2);
        let inv = parse(&toks("--family poisson --mu 1 translate --mu 2 report"), None).unwrap();
        assert_eq!(inv.terminal, Terminal::Report);
    }

    #[test]
    fn usage_errors() {
        assert!(parse(&toks("--mu 1"), Some(Terminal::Pmf)).is_err());
        assert!(parse(&toks("--family poisson --mu x"), Some(Terminal::Pmf)).is_err());
        assert!(parse(&toks("--family poisson --mu 1 dilate"), Some(Terminal::Pmf)).is_err());
        assert!(parse(&toks("--family poisson --mu 1 dilate --theta 1"), None).is_err());
        assert!(parse(&toks("--family poisson --mu 1 pmf dilate --c 0.5"), None).is_err());
        assert!(parse(&toks("--family poisson --mu 1 --mu 2"), Some(Terminal::Pmf)).is_err());
    }

    #[test]
    fn family_strings() {
        let (name, p) = parse_family_string("linnik:b=1,c=1,alpha=0.5,theta=-1").unwrap();
        assert_eq!(name, "linnik");
        assert_eq!(p["theta"], -1.0);
        assert!(parse_family_string("nb:lambda").is_err());
        assert_eq!(parse_family_string("poisson").unwrap().1.len(), 0);
    }
}
