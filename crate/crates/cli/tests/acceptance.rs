//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits non-zero when a criterion fails, except for failures listed in
//! `KNOWN_FAILURES`, which are reported as FAIL with their reason.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fdm_core::asymptotics::{
    dispersion_limit_check, hermite_clt, inar1_simulate, mean_and_acf, pt_converge, thin_numbers, Direction,
    Inar1Config,
};
use fdm_core::families::{alpha_from_p, atlas, dispersion_function, make, numeric_dispersion, p_from_alpha, FamilySpec};
use fdm_core::multivariate::{classify, sample_mv_pt, DispersionClass, MvFcgf, MvPtParams};
use fdm_core::poisson_tweedie::{pt_dilate, pt_fcgf, pt_pmf, sample_pt, PtParams};
use fdm_core::series::{pmf_from_fcgf, thin_pmf, PmfConfig, PmfTable};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

/// Criteria whose failure is understood and documented; the detail says why.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    11,
    "the nu = 2 tilting family has v/(-mu^2) <= 1 - 2^(1-nu) = 0.5 everywhere and v ~ -mu^3/(2 lambda) at 0",
)];

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn c1_atlas() -> Check {
    let want: [(&str, f64, f64); 8] = [
        ("hermite", 0.0, 2.0),
        ("neyman-a", 1.0, f64::NEG_INFINITY),
        ("polya-aeppli", 1.5, -1.0),
        ("nb", 2.0, 0.0),
        ("pig", 3.0, 0.5),
        ("poisson-binomial(n=3)", 0.5, 3.0),
        ("poisson-binomial(n=4)", 2.0 / 3.0, 4.0),
        ("poisson-binomial(n=5)", 0.75, 5.0),
    ];
    let rows = atlas();
    for (name, p, alpha) in want {
        let row = rows.iter().find(|r| r.family == name).ok_or(format!("{name} missing"))?;
        ensure(row.p == p && row.alpha == alpha && alpha_from_p(p) == alpha, format!("{name}: ({}, {})", row.p, row.alpha))?;
        ensure(p_from_alpha(alpha) == p, format!("{name}: inverse gives {}", p_from_alpha(alpha)))?;
    }
    Ok(format!("{} (p, alpha) pairs exact", want.len()))
}

fn c2_variance_law() -> Check {
    let cfg = PmfConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_series, mut worst_z) = (0.0f64, 0.0f64);
    for p in [1.0, 1.5, 2.0, 3.0] {
        for mu in [0.5, 1.0, 2.0] {
            for gamma in [0.25, 1.0] {
                let params = e(PtParams::new(p, mu, gamma))?;
                let want = mu + gamma * mu.powf(p);
                let t = e(pt_pmf(&params, &cfg))?;
                let err = (t.variance() - want).abs();
                ensure(err < 1e-8, format!("series p={p} mu={mu} gamma={gamma}: error {err:e}"))?;
                worst_series = worst_series.max(err);
                let xs = e(sample_pt(&params, 1_000_000, &mut rng))?;
                let n = xs.len() as f64;
                let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
                let m2 = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
                let m4 = xs.iter().map(|&x| (x as f64 - mean).powi(4)).sum::<f64>() / n;
                let se = ((m4 - m2 * m2) / n).sqrt();
                let z = (m2 - want).abs() / se;
                ensure(z < 4.0, format!("Monte Carlo p={p} mu={mu} gamma={gamma}: {m2} vs {want}, z={z:.2}"))?;
                worst_z = worst_z.max(z);
            }
        }
    }
    Ok(format!("series error <= {worst_series:.1e}; Monte Carlo |z| <= {worst_z:.2} (24 cases, 1e6 draws each)"))
}

fn c3_dilation_closure() -> Check {
    let cfg = PmfConfig::default();
    let mut worst = 0.0f64;
    for p in [1.0, 1.5, 2.0, 3.0] {
        let params = e(PtParams::new(p, 1.5, 0.7))?;
        let base = e(pt_pmf(&params, &cfg))?;
        for c in [0.25, 0.5, 0.9] {
            let thinned = e(thin_pmf(&base, c))?;
            let direct = e(pt_pmf(&e(pt_dilate(&params, c))?, &cfg))?;
            for k in 0..=cfg.order {
                worst = worst.max((thinned.prob(k) - direct.prob(k)).abs());
            }
        }
    }
    ensure(worst < 1e-9, format!("max difference {worst:e}"))?;
    Ok(format!("max elementwise difference {worst:.1e}"))
}

fn c4_m_transform() -> Check {
    let mut worst = 0.0f64;
    for n in [1u64, 3] {
        for mu in [0.5, 1.0] {
            let nb = e(make("nb", &[("lambda", n as f64), ("mu", mu)]))?;
            let t = e(pmf_from_fcgf(&e(nb.fcgf().m_transform(mu))?, &PmfConfig::with_order(20)))?;
            let direct = e(PmfTable::binomial(n, mu, 20))?;
            for k in 0..=20 {
                worst = worst.max((t.prob(k) - direct.prob(k)).abs());
            }
        }
    }
    ensure(worst < 1e-10, format!("max difference {worst:e}"))?;
    Ok(format!("max difference from binomial tables {worst:.1e}"))
}

fn c5_thin_numbers() -> Check {
    let cfg = PmfConfig::with_order(200);
    let bern = e(PmfTable::binomial(1, 0.5, cfg.order))?;
    let tv = e(thin_numbers(&bern, 0.5, &[50], &cfg))?.tv_distances[0];
    ensure(tv <= 0.005, format!("Bernoulli TV {tv}"))?;
    let geo = e(pmf_from_fcgf(e(make("geometric", &[("mu", 2.0)]))?.fcgf(), &cfg))?;
    let run = e(thin_numbers(&geo, 2.0, &[8, 16, 32, 64], &cfg))?;
    let factors: Vec<f64> = run.tv_distances.windows(2).map(|w| w[1] / w[0]).collect();
    ensure(factors.iter().all(|f| *f <= 0.7), format!("geometric factors {factors:?}"))?;
    let worst = factors.iter().copied().fold(0.0, f64::max);
    Ok(format!("Bernoulli n=50 TV {tv:.2e}; geometric factor per doubling <= {worst:.3}"))
}

fn c6_hermite_clt() -> Check {
    let cfg = PmfConfig::with_order(120);
    let base = e(make("geometric", &[("mu", 2.0)]))?;
    let run = e(hermite_clt(base.fcgf(), 8.0, &[25, 100, 400], &cfg))?;
    ensure(run.skipped.is_empty(), format!("skipped {:?}", run.skipped))?;
    let slope = run.log_log_slope().ok_or("no slope")?;
    ensure((-1.0..=-0.25).contains(&slope), format!("slope {slope}"))?;
    Ok(format!("log-log slope {slope:.3}, TV {:?}", run.tv_distances.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>()))
}

fn c7_pt_convergence() -> Check {
    let cfg = PmfConfig::with_order(160);
    let linnik = e(make("linnik", &[("b", 1.0), ("c", 1.0), ("alpha", 0.5), ("theta", -1.0)]))?;
    let up = e(pt_converge(&linnik, 3.0, 1.0, 1.0, Some(2.0), &[1.0, 2.0, 4.0, 8.0], Direction::Up, &cfg))?;
    let down = e(pt_converge(&linnik, 2.0, 1.0, 1.0, Some(2.0), &[1.0, 0.5, 0.25, 0.125], Direction::Down, &cfg))?;
    for (name, run) in [("up", &up), ("down", &down)] {
        ensure(run.skipped.is_empty(), format!("{name}: skipped {:?}", run.skipped))?;
        ensure(run.is_strictly_decreasing(), format!("{name}: TV {:?}", run.tv_distances))?;
        let last = run.final_tv().ok_or("empty run")?;
        ensure(last < 0.05, format!("{name}: final TV {last}"))?;
    }
    Ok(format!(
        "Linnik up final TV {:.4}, down final TV {:.4}, both strictly decreasing",
        up.final_tv().unwrap(),
        down.final_tv().unwrap()
    ))
}

fn catalog() -> Result<Vec<FamilySpec>, String> {
    let grid: Vec<(&str, Vec<Vec<(&str, f64)>>)> = vec![
        ("poisson", vec![vec![("mu", 0.5)], vec![("mu", 4.0)]]),
        ("bernoulli", vec![vec![("q", 0.2)], vec![("q", 0.9)]]),
        ("binomial", vec![vec![("trials", 3.0), ("q", 0.4)], vec![("trials", 12.0), ("q", 0.05)]]),
        ("degenerate", vec![vec![("value", 2.0)]]),
        ("geometric", vec![vec![("mu", 0.3)], vec![("mu", 5.0)]]),
        ("nb", vec![vec![("lambda", 0.5), ("mu", 1.0)], vec![("lambda", 4.0), ("mu", 0.2)]]),
        ("hermite", vec![vec![("mu", 2.0), ("gamma", 1.0)], vec![("mu", 1.0), ("gamma", 1.0)]]),
        ("short", vec![vec![("mu1", 1.0), ("mu2", 2.0), ("phi", 0.5)]]),
        ("neyman-a", vec![vec![("mu", 2.0), ("gamma", 1.0)], vec![("mu", 0.3), ("gamma", 3.0)]]),
        ("neyman-a-additive", vec![vec![("mean", 1.5)]]),
        ("poisson-nb", vec![vec![("lambda", 1.0), ("mu", 0.5), ("k", 2.5)]]),
        ("polya-aeppli", vec![vec![("lambda", 2.0), ("mu", 0.7)]]),
        ("poisson-binomial", vec![vec![("lambda", 1.0), ("mu", 0.5), ("trials", 3.0)]]),
        ("discrete-stable", vec![vec![("alpha", 0.5), ("theta", -0.5)], vec![("alpha", -1.0), ("mu", 2.0)]]),
        ("linnik", vec![vec![("b", 1.0), ("c", 1.0), ("alpha", 0.5), ("theta", -1.0)]]),
        ("com-poisson", vec![vec![("lambda", 1.0), ("nu", 2.0)], vec![("lambda", 2.0), ("nu", 0.5)]]),
        (
            "pt",
            [0.0, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0]
                .iter()
                .map(|&p| vec![("p", p), ("mu", 2.0), ("gamma", 0.5)])
                .collect(),
        ),
    ];
    let mut out = Vec::new();
    for (name, sets) in grid {
        for params in sets {
            out.push(make(name, &params).map_err(|err| format!("{name}: {err}"))?);
        }
    }
    Ok(out)
}

fn c8_round_trips() -> Check {
    let fams = catalog()?;
    let (mut worst_rt, mut worst_tilt) = (0.0f64, 0.0f64);
    for f in &fams {
        let c = e(f.fcgf().cumulants(2))?;
        let v = dispersion_function(f, c[0]).map_err(|err| format!("{} {:?}: {err}", f.name(), f.params()))?;
        let rel = (v - c[1]).abs() / c[1].abs().max(1.0);
        ensure(rel <= 1e-9, format!("{} {:?}: v={v}, C''(0)={}", f.name(), f.params(), c[1]))?;
        worst_rt = worst_rt.max(rel);
        let range = f.tilt_range();
        if f.mean_domain().lo == f.mean_domain().hi {
            continue;
        }
        let theta0 = if range.hi > 0.05 { 0.05 } else { 0.5 * range.hi };
        let t = e(f.tilted(theta0))?;
        let m0 = e(t.fcgf().mean())?;
        for m in [c[0], m0, 0.5 * (c[0] + m0)] {
            let a = e(numeric_dispersion(f, m))?;
            let b = e(numeric_dispersion(&t, m))?;
            let rel = (a - b).abs() / a.abs().max(1.0);
            ensure(rel <= 1e-8, format!("{} tilting at m={m}: {a} vs {b}", f.name()))?;
            worst_tilt = worst_tilt.max(rel);
        }
    }
    Ok(format!("{} members; round trip <= {worst_rt:.1e}, tilting invariance <= {worst_tilt:.1e}", fams.len()))
}

fn c9_zero_inflation() -> Check {
    let zi = |f: &fdm_core::AnalyticFcgf| -> Result<f64, String> {
        e(f.report())?.zero_inflation.ok_or_else(|| "no zero-inflation index".to_string())
    };
    let po = zi(e(make("poisson", &[("mu", 3.3)]))?.fcgf())?;
    ensure(po == 0.0, format!("Poisson ZI {po}"))?;
    let nta = zi(&pt_fcgf(&e(PtParams::new(1.0, 2.0, 1.0))?))?;
    ensure((nta - (-1.0f64).exp()).abs() < 1e-12, format!("NTA ZI {nta}"))?;
    let base = e(make("nb", &[("lambda", 1.0), ("mu", 0.8)]))?;
    let mut zs = Vec::new();
    for l in [0.5, 1.0, 2.0, 7.5] {
        zs.push(zi(&e(base.fcgf().convolution_power(l))?)?);
    }
    let spread = zs.iter().map(|z| (z - zs[0]).abs()).fold(0.0, f64::max);
    ensure(spread < 1e-10, format!("additive ZI spread {spread:e}"))?;
    Ok(format!("Poisson 0; NTA error {:.1e}; additive spread {spread:.1e}", (nta - (-1.0f64).exp()).abs()))
}

fn c10_multivariate() -> Check {
    let bp = e(MvFcgf::BivariatePoisson { mu: [1.0, 1.0, 1.0] }.dispersion())?;
    ensure(classify(&bp) == DispersionClass::Indefinite, "bivariate Poisson not indefinite")?;
    let mn = e(MvFcgf::Multinomial { trials: 4, q: vec![0.2, 0.3, 0.1] }.dispersion())?;
    ensure(classify(&mn) == DispersionClass::Under, "multinomial not underdispersed")?;
    let ip = e(MvFcgf::IndependentPoisson { mu: vec![1.0, 2.0] }.dispersion())?;
    ensure(classify(&ip) == DispersionClass::Equi, "product Poisson not equidispersed")?;
    let params = e(MvPtParams::new(2.0, vec![1.0, 2.0], vec![vec![0.5, 0.2], vec![0.2, 0.5]]))?;
    let xs = e(sample_mv_pt(&params, 1_000_000, &mut ChaCha8Rng::seed_from_u64(10)))?;
    let n = xs.len() as f64;
    let mean: Vec<f64> = (0..2).map(|i| xs.iter().map(|x| x[i] as f64).sum::<f64>() / n).collect();
    let y = params.mixing_covariance();
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let prods: Vec<f64> = xs.iter().map(|x| (x[i] as f64 - mean[i]) * (x[j] as f64 - mean[j])).collect();
            let cov = prods.iter().sum::<f64>() / n;
            let var = prods.iter().map(|v| (v - cov).powi(2)).sum::<f64>() / n;
            let se = (var / n).sqrt();
            let want = y[i][j] + if i == j { params.mu[i] } else { 0.0 };
            let z = (cov - want).abs() / se;
            ensure(z < 4.0, format!("cov[{i}][{j}] = {cov} vs {want}, z = {z:.2}"))?;
            worst = worst.max(z);
        }
    }
    Ok(format!("classes indefinite/under/equi; covariance |z| <= {worst:.2} at 1e6 draws"))
}

fn c11_com_poisson() -> Check {
    let com2 = e(make("com-poisson", &[("lambda", 1.0), ("nu", 2.0)]))?;
    let v = e(dispersion_function(&com2, 0.01))?;
    let ratio = v / -(0.01f64 * 0.01);
    let com05 = e(make("com-poisson", &[("lambda", 1.0), ("nu", 0.5)]))?;
    let fit = e(dispersion_limit_check(&com05, 0.0, Direction::Up, &[10.0, 20.0, 50.0, 100.0]))?;
    let p = p_from_alpha(2.0);
    let slope_ok = (fit.slope - p).abs() <= 0.15;
    let ratio_ok = (0.85..=1.15).contains(&ratio);
    let detail = format!("nu=2: v/(-mu^2) = {ratio:.4} at mu=0.01 (window [0.85, 1.15]); nu=0.5: slope {:.4} vs p = {p}", fit.slope);
    if ratio_ok && slope_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c12_inar1() -> Check {
    let cfg = e(Inar1Config::new(3.0, 0.5, 100_000))?;
    let xs = inar1_simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(12));
    let (mean, acf) = mean_and_acf(&xs, 1);
    // long-run variance of the mean of a stationary AR(1)-type path
    let se = (3.0 * (1.0 + 0.5) / (1.0 - 0.5) / xs.len() as f64).sqrt();
    ensure((mean - 3.0).abs() < 4.0 * se, format!("mean {mean}, se {se}"))?;
    ensure((acf - 0.5).abs() < 0.02, format!("lag-1 ACF {acf}"))?;
    Ok(format!("mean {mean:.4} (|z| = {:.2}), lag-1 ACF {acf:.4}", (mean - 3.0).abs() / se))
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = e(std::fs::read_dir(dir))?
        .map(|entry| {
            let entry = e(entry)?;
            Ok((entry.file_name().to_string_lossy().into_owned(), e(std::fs::read(entry.path()))?))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn c13_determinism() -> Check {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests/full.json");
    let tmp = e(tempfile::tempdir())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = e(Command::new(env!("CARGO_BIN_EXE_fdm"))
            .args(["converge", "--manifest"])
            .arg(&manifest)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "2024"])
            .env_remove("FDM_TRUNC")
            .status())?;
        ensure(status.success(), format!("fdm exited with {status}"))?;
        runs.push(read_dir_sorted(&out)?);
    }
    ensure(runs[0].len() > 1, "no outputs written")?;
    for ((fa, a), (fb, b)) in runs[0].iter().zip(&runs[1]) {
        ensure(fa == fb && a == b, format!("{fa} differs between reruns"))?;
    }
    Ok(format!("{} files byte-identical across reruns", runs[0].len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 13] = [
        (1, "power-parameter atlas", c1_atlas),
        (2, "Poisson-Tweedie variance law", c2_variance_law),
        (3, "dilation closure", c3_dilation_closure),
        (4, "M-transform duality", c4_m_transform),
        (5, "law of thin numbers", c5_thin_numbers),
        (6, "Hermite CLT", c6_hermite_clt),
        (7, "Poisson-Tweedie convergence", c7_pt_convergence),
        (8, "dispersion-function round trips", c8_round_trips),
        (9, "zero-inflation index", c9_zero_inflation),
        (10, "multivariate dispersion", c10_multivariate),
        (11, "COM-Poisson asymptotes", c11_com_poisson),
        (12, "INAR(1) moments", c12_inar1),
        (13, "CLI determinism", c13_determinism),
    ];
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => match KNOWN_FAILURES.iter().find(|(k, _)| *k == id) {
                Some((_, why)) => println!("FAIL {id:>2} {name}: {detail} (known: {why}) [{secs:.1}s]"),
                None => {
                    unexpected += 1;
                    println!("FAIL {id:>2} {name}: {detail} [{secs:.1}s]");
                }
            },
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
