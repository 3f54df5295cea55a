//! Samplers checked against exact moments and tables.

use fdm_core::multivariate::{sample_moments, sample_mv_pt, MvPtParams};
use fdm_core::poisson_tweedie::{pt_pmf, sample_pt, PtParams};
use fdm_core::series::PmfConfig;
use fdm_core::tweedie::{TweedieParams, TweedieSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Sample variance and a plug-in standard error `sqrt((m4 - s^4) / n)`.
fn variance_with_se(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (mean, m2, ((m4 - m2 * m2) / n).sqrt())
}

#[test]
fn pt_sample_variance_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [1.0, 1.5, 2.0, 3.0, 4.0] {
        for (mu, gamma) in [(0.5, 1.0), (2.0, 0.25)] {
            let params = PtParams::new(p, mu, gamma).unwrap();
            let xs: Vec<f64> = sample_pt(&params, 200_000, &mut rng).unwrap().into_iter().map(|x| x as f64).collect();
            let (mean, var, se) = variance_with_se(&xs);
            let want = mu + gamma * mu.powf(p);
            assert!((var - want).abs() < 4.0 * se, "p={p} mu={mu} gamma={gamma}: {var} vs {want} (se {se})");
            let mean_se = (want / xs.len() as f64).sqrt();
            assert!((mean - mu).abs() < 4.0 * mean_se, "p={p}: mean {mean}");
        }
    }
}

#[test]
fn pt_samples_match_pmf_table() {
    let cfg = PmfConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = PtParams::new(1.5, 2.0, 0.5).unwrap();
    let table = pt_pmf(&params, &cfg).unwrap();
    let n = 200_000;
    let xs = sample_pt(&params, n, &mut rng).unwrap();
    let mut counts = vec![0usize; cfg.order + 1];
    for x in xs {
        counts[(x as usize).min(cfg.order)] += 1;
    }
    let tv: f64 = 0.5 * (0..=cfg.order).map(|k| (counts[k] as f64 / n as f64 - table.prob(k)).abs()).sum::<f64>();
    assert!(tv < 0.01, "{tv}");
}

#[test]
fn tweedie_moments_per_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [1.0, 1.3, 2.0, 2.5, 3.0, 5.0] {
        let params = TweedieParams::new(p, 1.5, 0.6).unwrap();
        let s = TweedieSampler::new(params).unwrap();
        let xs: Vec<f64> = (0..200_000).map(|_| s.sample(&mut rng)).collect();
        let (mean, var, se) = variance_with_se(&xs);
        assert!((mean - params.mean()).abs() < 4.0 * (params.variance() / xs.len() as f64).sqrt(), "p={p}: {mean}");
        assert!((var - params.variance()).abs() < 4.0 * se, "p={p}: {var} vs {}", params.variance());
        assert!(xs.iter().all(|x| *x >= 0.0));
    }
}

fn inverse_gaussian_cdf(x: f64, mu: f64, shape: f64) -> f64 {
    let z = Normal::standard();
    let r = (shape / x).sqrt();
    z.cdf(r * (x / mu - 1.0)) + (2.0 * shape / mu).exp() * z.cdf(-r * (x / mu + 1.0))
}

#[test]
fn inverse_gaussian_goodness_of_fit() {
    // p = 3: Tw_3(mu, gamma) is inverse Gaussian with shape 1 / gamma
    let (mu, gamma) = (1.0, 0.5);
    let s = TweedieSampler::new(TweedieParams::new(3.0, mu, gamma).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 100_000;
    let edges: Vec<f64> = (1..20).map(|i| 0.15 * i as f64).collect();
    let mut counts = vec![0usize; edges.len() + 1];
    for _ in 0..n {
        let x = s.sample(&mut rng);
        counts[edges.partition_point(|e| *e <= x)] += 1;
    }
    let mut cdf = vec![0.0];
    cdf.extend(edges.iter().map(|&e| inverse_gaussian_cdf(e, mu, 1.0 / gamma)));
    cdf.push(1.0);
    let chi2: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            let e = n as f64 * (cdf[i + 1] - cdf[i]);
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let crit = ChiSquared::new((counts.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
}

fn covariance_se(xs: &[Vec<u64>], mean: &[f64], i: usize, j: usize) -> f64 {
    let n = xs.len() as f64;
    let prods: Vec<f64> = xs.iter().map(|x| (x[i] as f64 - mean[i]) * (x[j] as f64 - mean[j])).collect();
    let m = prods.iter().sum::<f64>() / n;
    (prods.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n / n).sqrt()
}

#[test]
fn mv_pt_covariance() {
    let params = MvPtParams::new(2.0, vec![1.0, 2.0], vec![vec![0.5, 0.2], vec![0.2, 0.4]]).unwrap();
    let xs = sample_mv_pt(&params, 400_000, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let (mean, cov) = sample_moments(&xs);
    let y = params.mixing_covariance();
    for i in 0..2 {
        for j in 0..2 {
            let want = y[i][j] + if i == j { params.mu[i] } else { 0.0 };
            let se = covariance_se(&xs, &mean, i, j);
            assert!((cov[i][j] - want).abs() < 4.0 * se, "({i},{j}): {} vs {want}", cov[i][j]);
        }
    }
}

#[test]
fn mv_pt_marginals_are_pt() {
    let cfg = PmfConfig::default();
    let params = MvPtParams::new(1.5, vec![1.0, 2.0], vec![vec![0.5, 0.2], vec![0.2, 0.4]]).unwrap();
    let n = 200_000;
    let xs = sample_mv_pt(&params, n, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    for i in 0..2 {
        let table = pt_pmf(&PtParams::new(1.5, params.mu[i], params.sigma[i][i]).unwrap(), &cfg).unwrap();
        let mut counts = vec![0usize; cfg.order + 1];
        for x in &xs {
            counts[(x[i] as usize).min(cfg.order)] += 1;
        }
        let tv: f64 = 0.5 * (0..=cfg.order).map(|k| (counts[k] as f64 / n as f64 - table.prob(k)).abs()).sum::<f64>();
        assert!(tv < 0.02, "margin {i}: {tv}");
    }
}

#[test]
fn mv_pt_diagonal_sigma_gives_independent_margins() {
    let params = MvPtParams::new(2.0, vec![1.5, 0.5], vec![vec![0.3, 0.0], vec![0.0, 1.0]]).unwrap();
    let xs = sample_mv_pt(&params, 200_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let (mean, cov) = sample_moments(&xs);
    assert!(cov[0][1].abs() < 4.0 * covariance_se(&xs, &mean, 0, 1), "{}", cov[0][1]);
}

#[test]
fn mv_pt_rejects_negative_correlation() {
    let params = MvPtParams::new(2.0, vec![1.0, 1.0], vec![vec![0.5, -0.2], vec![-0.2, 0.5]]).unwrap();
    assert!(sample_mv_pt(&params, 10, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}
