//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs under `cargo test`; pass substrings as arguments to select criteria, e.g.
//! `cargo test --test acceptance -- tilt`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ref_core::dists::{
    layers_from_quantiles, regression_model, reinsurance_losses, reinsurance_model,
    with_intercept, DistributionSpec, RegressionModel,
};
use ref_core::oracle::{brute_expectile, grid_ref, linear_grid, simplex_worst_case};
use ref_core::solver::{
    j_derivative, ols, ref_1d, ref_kd, regression_objective, robust_regression,
    worst_case_value,
};
use ref_core::tilt::{kl_at, solve_tilt, EmpiricalDistribution};
use ref_core::ScoreFamily;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn uniform(atoms: Vec<f64>) -> EmpiricalDistribution {
    EmpiricalDistribution::uniform(atoms).expect("valid sample")
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn classical_recovery() -> Outcome {
    let sample = DistributionSpec::texp(2.0).sample(10_000, 2024).map_err(|e| e.to_string())?;
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let dist = uniform(sample.clone());
    let mut worst: f64 = 0.0;
    for b in [0.0, 1.0, 1.5, 2.0] {
        let fam = ScoreFamily::mean(b).unwrap();
        let z = ref_1d(&fam, &dist, 0.0, None).map_err(|e| e.to_string())?.z();
        worst = worst.max(rel(z, mean));
        ensure(rel(z, mean) <= 1e-6, || format!("mean b={b}: {z} vs {mean}"))?;
    }
    // Lower empirical quantile: the ceil(n alpha)-th order statistic.
    let order = sorted(sample.clone());
    let k = (0.95 * n).ceil() as usize - 1;
    let var = ref_1d(&ScoreFamily::var(1.0, 0.95).unwrap(), &dist, 0.0, None)
        .map_err(|e| e.to_string())?
        .z();
    ensure(var == order[k], || format!("VaR {var} vs order statistic {}", order[k]))?;
    let w = vec![1.0 / n; sample.len()];
    let brute = brute_expectile(&sample, &w, 0.7).map_err(|e| e.to_string())?;
    let e = ref_1d(&ScoreFamily::expectile(2.0, 0.7).unwrap(), &dist, 0.0, None)
        .map_err(|e| e.to_string())?
        .z();
    ensure(rel(e, brute) <= 1e-6, || format!("expectile {e} vs {brute}"))?;
    Ok(format!("max mean rel err {worst:.1e}; VaR exact; expectile rel err {:.1e}", rel(e, brute)))
}

fn tilt_matches_simplex_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_value, mut worst_kl) = (0.0_f64, 0.0_f64);
    for _ in 0..50 {
        let k = rng.random_range(2..=6);
        let scores: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..10.0)).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        for eps in [0.01, 0.05, 0.1, 0.3] {
            let sol = solve_tilt(&scores, &w, eps).map_err(|e| e.to_string())?;
            let oracle = simplex_worst_case(&scores, &w, eps).map_err(|e| e.to_string())?;
            let err = rel(sol.value, oracle.value);
            worst_value = worst_value.max(err);
            ensure(err <= 1e-4, || format!("{scores:?} eps {eps}: {} vs {}", sol.value, oracle.value))?;
            if !sol.degenerate {
                worst_kl = worst_kl.max((sol.kl_achieved - eps).abs());
                ensure((sol.kl_achieved - eps).abs() <= 1e-8, || {
                    format!("kl {} at eps {eps}", sol.kl_achieved)
                })?;
            }
        }
    }
    Ok(format!("200 cases; max value rel err {worst_value:.1e}, max KL err {worst_kl:.1e}"))
}

fn tilt_limits_and_degenerate_case() -> Outcome {
    let s = [0.0, 1.0];
    let w = [0.5, 0.5];
    let small = kl_at(&s, &w, 1e-8).map_err(|e| e.to_string())?;
    let large = kl_at(&s, &w, 1e4).map_err(|e| e.to_string())?;
    ensure(small <= 1e-6, || format!("d(1e-8) = {small}"))?;
    ensure((large - 2f64.ln()).abs() <= 1e-6, || format!("d(1e4) = {large}"))?;
    let deg = solve_tilt(&s, &w, 2f64.ln()).map_err(|e| e.to_string())?;
    ensure(deg.degenerate && deg.value == 1.0, || format!("value {}", deg.value))?;
    ensure(deg.tilted_weights == vec![0.0, 1.0], || format!("{:?}", deg.tilted_weights))?;
    Ok(format!("d(1e-8) = {small:.1e}, |d(1e4) - ln 2| = {:.1e}, degenerate value 1", (large - 2f64.ln()).abs()))
}

fn single_crossing() -> Outcome {
    let fam = ScoreFamily::mean(2.0).unwrap();
    let dist = uniform(vec![0.0, 1.0, 5.0]);
    let sign_grid = linear_grid(0.0, 5.0, 1000);
    let fine = linear_grid(0.0, 5.0, 5001);
    let mut worst: f64 = 0.0;
    for eps in [0.0, 0.1, 0.3] {
        let signs: Vec<bool> = sign_grid
            .iter()
            .map(|z| j_derivative(&fam, &dist, *z, eps).map(|d| d >= 0.0))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let changes = signs.windows(2).filter(|p| p[0] != p[1]).count();
        ensure(changes == 1, || format!("eps {eps}: {changes} sign changes"))?;
        let z = ref_1d(&fam, &dist, eps, None).map_err(|e| e.to_string())?.z();
        let g = grid_ref(&fam, &dist, eps, &fine).map_err(|e| e.to_string())?;
        let gz = g.argmin_z.expect("argmin reported");
        worst = worst.max((z - gz).abs());
        ensure((z - gz).abs() <= 1e-3 + 1e-12, || format!("eps {eps}: {z} vs grid {gz}"))?;
    }
    Ok(format!("one sign change at each radius; max |z - grid| {worst:.1e}"))
}

fn functional_properties() -> Outcome {
    let sample = DistributionSpec::LogNormal { mu: 0.0, sigma: 0.5 }
        .sample(400, 5)
        .map_err(|e| e.to_string())?;
    let dist = uniform(sample);
    let eps = 0.1;
    let scalar = [
        ScoreFamily::mean(0.5).unwrap(),
        ScoreFamily::var(1.0, 0.9).unwrap(),
        ScoreFamily::expectile(1.5, 0.7).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for fam in &scalar {
        let base = ref_1d(fam, &dist, eps, None).map_err(|e| e.to_string())?.z();
        for c in [0.01, 10.0] {
            let z = ref_1d(fam, &dist.scaled(c), eps, None).map_err(|e| e.to_string())?.z();
            worst = worst.max(rel(z, c * base));
            ensure(rel(z, c * base) <= 1e-6, || format!("{:?} c={c}: {z} vs {}", fam.kind(), c * base))?;
        }
    }
    let joint = ScoreFamily::var_es(0.5, 0.9).unwrap();
    let base = ref_kd(&joint, &dist, eps, None).map_err(|e| e.to_string())?.z_star;
    for c in [0.01, 10.0] {
        let z = ref_kd(&joint, &dist.scaled(c), eps, None).map_err(|e| e.to_string())?.z_star;
        for i in 0..2 {
            worst = worst.max(rel(z[i], c * base[i]));
            ensure(rel(z[i], c * base[i]) <= 1e-6, || format!("joint c={c}: {z:?} vs {base:?}"))?;
        }
    }

    let sq = ScoreFamily::mean(2.0).unwrap();
    let base = ref_1d(&sq, &dist, eps, None).map_err(|e| e.to_string())?.z();
    for c in [-1.0, 3.0] {
        let z = ref_1d(&sq, &dist.shifted(c), eps, None).map_err(|e| e.to_string())?.z();
        ensure((z - (base + c)).abs() <= 1e-6, || format!("shift {c}: {z} vs {}", base + c))?;
    }

    let m = 2.5;
    let constant = uniform(vec![m; 7]);
    for fam in scalar.iter().chain([&sq]) {
        let z = ref_1d(fam, &constant, eps, None).map_err(|e| e.to_string())?.z();
        ensure(z == m, || format!("{:?} on constant: {z}", fam.kind()))?;
    }
    let z = ref_kd(&joint, &constant, eps, None).map_err(|e| e.to_string())?.z_star;
    ensure(z == vec![m, m], || format!("joint on constant: {z:?}"))?;
    Ok(format!("homogeneity max rel err {worst:.1e}; translation and constants exact"))
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sample = DistributionSpec::LogNormal { mu: 0.0, sigma: 0.6 }
        .sample(60, 3)
        .map_err(|e| e.to_string())?;
    let dist = uniform(sample);
    let (lo, hi) = (dist.min(), dist.max());
    let families = [
        ScoreFamily::mean(0.0).unwrap(),
        ScoreFamily::mean(0.5).unwrap(),
        ScoreFamily::mean(1.0).unwrap(),
        ScoreFamily::mean(2.0).unwrap(),
        ScoreFamily::mean(3.0).unwrap(),
        ScoreFamily::expectile(2.0, 0.7).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let fam = &families[i % families.len()];
        let z = rng.random_range(lo..hi);
        let eps = rng.random_range(0.01..1.0);
        let h = 1e-5 * z.abs().max(1.0);
        let up = worst_case_value(fam, &dist, z + h, eps).map_err(|e| e.to_string())?;
        let down = worst_case_value(fam, &dist, z - h, eps).map_err(|e| e.to_string())?;
        let fd = (up - down) / (2.0 * h);
        let an = j_derivative(fam, &dist, z, eps).map_err(|e| e.to_string())?;
        let err = (an - fd).abs() / an.abs().max(1e-6);
        worst = worst.max(err);
        ensure(err <= 1e-4, || format!("{:?} b={} z={z} eps={eps}: {an} vs {fd}", fam.kind(), fam.b()))?;
    }

    let (x, y) = regression_model(RegressionModel::B, 40, 1).map_err(|e| e.to_string())?;
    let design = with_intercept(&DMatrix::from_column_slice(x.len(), 1, &x));
    let fam = ScoreFamily::mean(2.0).unwrap();
    let start = ols(&design, &y).map_err(|e| e.to_string())?;
    let mut worst_reg: f64 = 0.0;
    for _ in 0..20 {
        let beta: Vec<f64> = start.iter().map(|b| b + rng.random_range(-0.2..0.2)).collect();
        let eps = rng.random_range(0.05..2.0);
        let (_, grad) = regression_objective(&fam, &design, &y, &beta, eps).map_err(|e| e.to_string())?;
        let scale = grad.iter().fold(1e-6_f64, |m, g| m.max(g.abs()));
        for j in 0..beta.len() {
            let h = 1e-6;
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[j] += h;
            bm[j] -= h;
            let (vp, _) = regression_objective(&fam, &design, &y, &bp, eps).map_err(|e| e.to_string())?;
            let (vm, _) = regression_objective(&fam, &design, &y, &bm, eps).map_err(|e| e.to_string())?;
            let fd = (vp - vm) / (2.0 * h);
            let err = (grad[j] - fd).abs() / scale;
            worst_reg = worst_reg.max(err);
            ensure(err <= 1e-4, || format!("regression grad[{j}] {} vs {fd}", grad[j]))?;
        }
    }
    Ok(format!("max rel err {worst:.1e} (scalar), {worst_reg:.1e} (regression)"))
}

fn murphy_trends() -> Outcome {
    // Degrees in (0, 2]: outside it the direction of the robust shift flips for these
    // families (lower-tail penalties dominate VaR for b <= 0, and the mean score's upper
    // tail dominates on symmetric data for b > 2).
    let bs: Vec<f64> = (1..=20).map(|i| 0.1 * i as f64).collect();
    let texp = uniform(DistributionSpec::texp(2.0).sample(30_000, 7).map_err(|e| e.to_string())?);
    let var_eps = [0.0, 0.05, 0.2, 0.5];
    let mut ordered = 0;
    for b in &bs {
        let fam = ScoreFamily::var(*b, 0.95).unwrap();
        let z: Vec<f64> = var_eps
            .iter()
            .map(|e| ref_1d(&fam, &texp, *e, None).map(|r| r.z()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        if z.windows(2).all(|p| p[0] <= p[1]) {
            ordered += 1;
        }
    }
    let var_share = ordered as f64 / bs.len() as f64;

    let beta_sample = DistributionSpec::Beta { a: 2.0, b: 2.0 }
        .sample(30_000, 8)
        .map_err(|e| e.to_string())?;
    let mean = beta_sample.iter().sum::<f64>() / beta_sample.len() as f64;
    let beta = uniform(beta_sample);
    let (mut below, mut total) = (0, 0);
    for b in &bs {
        let fam = ScoreFamily::mean(*b).unwrap();
        for e in [0.05, 0.2, 0.5] {
            let z = ref_1d(&fam, &beta, e, None).map_err(|e| e.to_string())?.z();
            total += 1;
            if z <= mean {
                below += 1;
            }
        }
    }
    let mean_share = below as f64 / total as f64;
    ensure(var_share >= 0.95 && mean_share >= 0.95, || {
        format!("VaR ordered at {var_share:.3} of b; mean below baseline at {mean_share:.3}")
    })?;
    Ok(format!("VaR ordered in eps at {:.0}% of b; Beta mean-REF below sample mean at {:.0}%", 100.0 * var_share, 100.0 * mean_share))
}

fn reinsurance() -> Outcome {
    let model = reinsurance_model();
    let big = model.sample(100_000, 99).map_err(|e| e.to_string())?;
    for (k, target) in [100.0, 150.0, 150.0].iter().enumerate() {
        let m = big.column(k).mean();
        ensure(rel(m, *target) <= 0.01, || format!("line {k} mean {m} vs {target}"))?;
    }

    let alphas = [0.9, 0.975];
    let eps = [0.6, 0.7, 0.8, 0.9];
    let (mut retained, mut flagged) = (0, 0);
    for r in 0..20u64 {
        let x = model.sample(10_000, 42 + r).map_err(|e| e.to_string())?;
        let layers = layers_from_quantiles(&x).map_err(|e| e.to_string())?;
        let cap: f64 = layers.iter().map(|l| l.limit).sum();
        let y = reinsurance_losses(&x, &layers).map_err(|e| e.to_string())?;
        ensure(y.iter().all(|v| *v >= 0.0 && *v <= cap), || format!("replicate {r}: loss above {cap}"))?;
        let dist = uniform(y.iter().map(|v| v * 0.01).collect());
        let mut crossing = false;
        for alpha in alphas {
            let fam = ScoreFamily::var_es(0.5, alpha).unwrap();
            let mut init = None;
            let mut path = Vec::new();
            for e in eps {
                let res = ref_kd(&fam, &dist, e, init).map_err(|e| e.to_string())?;
                init = Some([res.z_star[0], res.z_star[1]]);
                crossing |= res.z_star[0] > res.z_star[1];
                path.push((res.z_star[0] / 0.01, res.z_star[1] / 0.01));
            }
            // Slack at the solver's relative simplex tolerance.
            let monotone = path.windows(2).all(|p| {
                p[1].0 >= p[0].0 * (1.0 - 1e-9) && p[1].1 >= p[0].1 * (1.0 - 1e-9)
            });
            ensure(monotone, || format!("replicate {r} alpha {alpha}: {path:?}"))?;
        }
        if crossing {
            flagged += 1;
        } else {
            retained += 1;
        }
    }
    ensure(retained > 0, || "every replicate was rejected".into())?;
    Ok(format!("marginal means within 1%; 20 replicates monotone in eps; {retained} retained, {flagged} rejected"))
}

fn regression_trends() -> Outcome {
    let fam = ScoreFamily::mean(2.0).unwrap();
    let mut slopes = Vec::new();
    for model in [RegressionModel::A, RegressionModel::B, RegressionModel::C] {
        let (x, y) = regression_model(model, 40, 42).map_err(|e| e.to_string())?;
        let n = x.len() as f64;
        // Normal equations for a line.
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icept = (sy - slope * sx) / n;
        let design = with_intercept(&DMatrix::from_column_slice(x.len(), 1, &x));
        let fit = robust_regression(&fam, &design, &y, 0.0).map_err(|e| e.to_string())?;
        ensure((fit.beta[0] - icept).abs() <= 1e-8 && (fit.beta[1] - slope).abs() <= 1e-8, || {
            format!("model {model}: {:?} vs ({icept}, {slope})", fit.beta)
        })?;
        slopes.push(fit.beta[1]);
        if model == RegressionModel::A {
            let robust = robust_regression(&fam, &design, &y, 1.0).map_err(|e| e.to_string())?;
            ensure(robust.beta[1] < fit.beta[1], || {
                format!("model A slope {} at eps 1 vs {} at eps 0", robust.beta[1], fit.beta[1])
            })?;
        }
    }
    ensure(slopes[0] > slopes[1] && slopes[1] > slopes[2], || format!("slopes {slopes:?}"))?;
    Ok(format!("least squares within 1e-8; eps=0 slopes A/B/C = {:.3}/{:.3}/{:.3}", slopes[0], slopes[1], slopes[2]))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "classical recovery at eps = 0", budget: Duration::from_secs(5), run: classical_recovery },
        Criterion { id: 2, name: "tilt vs simplex oracle", budget: Duration::from_secs(60), run: tilt_matches_simplex_oracle },
        Criterion { id: 3, name: "tilt limits and degenerate case", budget: Duration::from_secs(5), run: tilt_limits_and_degenerate_case },
        Criterion { id: 4, name: "single crossing and grid oracle", budget: Duration::from_secs(60), run: single_crossing },
        Criterion { id: 5, name: "homogeneity, translation, constants", budget: Duration::from_secs(120), run: functional_properties },
        Criterion { id: 6, name: "gradient checks", budget: Duration::from_secs(60), run: gradient_checks },
        Criterion { id: 7, name: "murphy diagram trends", budget: Duration::from_secs(300), run: murphy_trends },
        Criterion { id: 8, name: "reinsurance", budget: Duration::from_secs(600), run: reinsurance },
        Criterion { id: 9, name: "regression trends", budget: Duration::from_secs(60), run: regression_trends },
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        let label = format!("criterion {}: {}", c.id, c.name);
        if !filters.is_empty() && !filters.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = (c.run)();
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => {
                Err(format!("{detail}; took {elapsed:.1?}, budget {:?}", c.budget))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {label} ({elapsed:.2?}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label} ({elapsed:.2?}): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
