use nalgebra::DMatrix;
use rayon::prelude::*;

use super::Settings;
use crate::dists::io::{read_losses, read_table_file};
use crate::dists::{
    layers_from_quantiles, regression_model, reinsurance_losses, reinsurance_model,
    with_intercept, DistributionSpec, RegressionModel,
};
use crate::error::{Error, Result};
use crate::oracle::{grid_ref, linear_grid, simplex_worst_case, MAX_ATOMS};
use crate::scores::{ActionDomain, ScoreFamily, ScoreKind, ScoreParams};
use crate::solver::{ref_1d, ref_kd, robust_regression};
use crate::tilt::{score_values, solve_tilt, EmpiricalDistribution};

/// Rows produced by a command, plus optional side tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Simulated losses (`reinsurance --losses-output`).
    pub losses: Option<Box<Output>>,
    /// Generated data set (`regress --dump-data`).
    pub data: Option<Box<Output>>,
    pub failed_checks: usize,
}

impl Output {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), ..Self::default() }
    }
}

fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn default_b(kind: ScoreKind) -> &'static str {
    match kind {
        ScoreKind::MeanPatton | ScoreKind::Expectile => "2",
        ScoreKind::VarHomogeneous => "1",
        ScoreKind::VarEsJoint => "0.5",
    }
}

fn single_b(settings: &Settings, kind: ScoreKind) -> Result<f64> {
    let b = settings.b_grid(default_b(kind))?;
    if b.len() != 1 {
        return Err(Error::BadSpec("expected a single --b".into()));
    }
    Ok(b[0])
}

fn score_kind(settings: &Settings, default: &str) -> Result<ScoreKind> {
    settings.score.as_deref().unwrap_or(default).parse()
}

fn scale_factor(settings: &Settings, default: f64) -> Result<f64> {
    let c = settings.scale.unwrap_or(default);
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::BadSpec(format!("--scale must be positive, got {c}")));
    }
    Ok(c)
}

fn ascending(eps: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|a, b| eps[*a].total_cmp(&eps[*b]));
    order
}

/// `ref`: one row per radius.
pub fn cmd_ref(settings: &Settings) -> Result<Output> {
    let path = settings.input.as_ref().ok_or_else(|| Error::BadSpec("ref needs --input".into()))?;
    let kind = score_kind(settings, "mean")?;
    let family = settings.family("mean", single_b(settings, kind)?)?;
    let eps = settings.eps_list("0")?;
    let c = scale_factor(settings, 1.0)?;
    let losses: Vec<f64> = read_losses(path)?.into_iter().map(|y| y * c).collect();
    let dist = EmpiricalDistribution::uniform(losses)?;
    // Scores are b-homogeneous: undo the scaling on every reported quantity.
    let cb = c.powf(family.b());

    if family.dim() == 1 {
        let mut out = Output::new(&["epsilon", "z_star", "eta_star", "value", "degenerate_hit"]);
        for e in &eps {
            let r = ref_1d(&family, &dist, *e, None)?;
            out.rows.push(vec![
                num(*e),
                num(r.z() / c),
                num(r.eta_star * cb),
                num(r.value / cb),
                r.diagnostics.degenerate_hit.to_string(),
            ]);
        }
        return Ok(out);
    }

    let mut out =
        Output::new(&["epsilon", "z_star", "z2_star", "eta_star", "value", "degenerate_hit"]);
    let mut rows = vec![Vec::new(); eps.len()];
    let mut init = None;
    for i in ascending(&eps) {
        let r = ref_kd(&family, &dist, eps[i], init)?;
        init = Some([r.z_star[0], r.z_star[1]]);
        rows[i] = vec![
            num(eps[i]),
            num(r.z_star[0] / c),
            num(r.z_star[1] / c),
            num(r.eta_star * cb),
            num(r.value / cb),
            r.diagnostics.degenerate_hit.to_string(),
        ];
    }
    out.rows = rows;
    Ok(out)
}

/// `murphy`: robust functional over a grid of homogeneity degrees and radii.
pub fn cmd_murphy(settings: &Settings) -> Result<Output> {
    let kind = score_kind(settings, "mean")?;
    if kind == ScoreKind::VarEsJoint {
        return Err(Error::BadSpec("murphy supports scalar scores only".into()));
    }
    let bs = settings.b_grid("0.1:2:0.1")?;
    let eps = settings.eps_list("0,0.1,0.5")?;
    let sample = match &settings.input {
        Some(path) => read_losses(path)?,
        None => {
            let spec: DistributionSpec = settings.dist.as_deref().unwrap_or("texp:2").parse()?;
            spec.sample(settings.n.unwrap_or(10_000), settings.seed())?
        }
    };
    let dist = EmpiricalDistribution::uniform(sample)?;
    let families: Vec<(f64, ScoreFamily)> =
        bs.iter().map(|b| settings.family("mean", *b).map(|f| (*b, f))).collect::<Result<_>>()?;

    let cells: Vec<(f64, f64, &ScoreFamily)> = families
        .iter()
        .flat_map(|(b, fam)| eps.iter().map(move |e| (*b, *e, fam)))
        .collect();
    let mut results: Vec<(f64, f64, f64)> = cells
        .par_iter()
        .map(|(b, e, fam)| ref_1d(fam, &dist, *e, None).map(|r| (*b, *e, r.z())))
        .collect::<Result<_>>()?;
    results.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let mut out = Output::new(&["b", "epsilon", "z_star"]);
    out.rows = results.into_iter().map(|(b, e, z)| vec![num(b), num(e), num(z)]).collect();
    Ok(out)
}

struct ReplicateRows {
    rows: Vec<(f64, f64, f64, f64)>,
    rejected: bool,
    losses: Vec<f64>,
}

fn reinsurance_replicate(
    seed: u64,
    n: usize,
    alphas: &[f64],
    eps: &[f64],
    params: &ScoreParams,
    scale: f64,
) -> Result<ReplicateRows> {
    let x = reinsurance_model().sample(n, seed)?;
    let layers = layers_from_quantiles(&x)?;
    let losses = reinsurance_losses(&x, &layers)?;
    let dist = EmpiricalDistribution::uniform(losses.iter().map(|y| y * scale).collect())?;
    let mut rows = Vec::new();
    let mut rejected = false;
    for alpha in alphas {
        let family = params.clone().with_alpha(*alpha).build()?;
        let mut init = None;
        for i in ascending(eps) {
            let r = ref_kd(&family, &dist, eps[i], init)?;
            init = Some([r.z_star[0], r.z_star[1]]);
            rejected |= r.diagnostics.quantile_crossing;
            rows.push((*alpha, eps[i], r.z_star[0] / scale, r.z_star[1] / scale));
        }
    }
    Ok(ReplicateRows { rows, rejected, losses })
}

/// `reinsurance`: robust (VaR, ES) per replicate, level and radius.
///
/// Replicates whose robust VaR exceeds the robust ES at any level or radius are marked
/// `rejected = true`; downstream summaries should drop them.
pub fn cmd_reinsurance(settings: &Settings) -> Result<Output> {
    let n = settings.n.unwrap_or(10_000);
    let replicates = settings.replicates.unwrap_or(100);
    if replicates == 0 {
        return Err(Error::BadSpec("--replicates must be positive".into()));
    }
    let alphas = settings.alpha_list("0.9,0.975")?;
    let eps = settings.eps_list("0.6,0.7,0.8,0.9")?;
    let b = single_b(settings, ScoreKind::VarEsJoint)?;
    let scale = scale_factor(settings, 0.01)?;
    if let Some(s) = settings.score.as_deref() {
        if s.parse::<ScoreKind>()? != ScoreKind::VarEsJoint {
            return Err(Error::BadSpec("reinsurance uses the joint (VaR, ES) score".into()));
        }
    }
    let mut params = ScoreParams::new(ScoreKind::VarEsJoint, b);
    if let Some(c) = settings.constants {
        params = params.with_constants(c);
    }
    // Fail fast on invalid levels before launching replicates.
    for a in &alphas {
        params.clone().with_alpha(*a).build()?;
    }

    let seed = settings.seed();
    let mut results: Vec<(usize, ReplicateRows)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            reinsurance_replicate(seed.wrapping_add(r as u64), n, &alphas, &eps, &params, scale)
                .map(|rows| (r, rows))
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|(r, _)| *r);

    let mut out = Output::new(&["replicate", "alpha", "epsilon", "var", "es", "rejected"]);
    for (r, rep) in &results {
        let mut rows = rep.rows.clone();
        rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        for (alpha, e, var, es) in rows {
            out.rows.push(vec![
                r.to_string(),
                num(alpha),
                num(e),
                num(var),
                num(es),
                rep.rejected.to_string(),
            ]);
        }
    }
    let mut losses = Output::new(&["loss"]);
    losses.rows = results[0].1.losses.iter().map(|y| vec![num(*y)]).collect();
    out.losses = Some(Box::new(losses));
    Ok(out)
}

/// `regress`: robust regression coefficients per radius.
pub fn cmd_regress(settings: &Settings) -> Result<Output> {
    let (columns, y, names) = match &settings.input {
        Some(path) => {
            let mut table = read_table_file(path)?;
            if table.columns.len() < 2 {
                return Err(Error::ShapeMismatch("need covariate columns and a response".into()));
            }
            let y = table.columns.pop().expect("two or more columns");
            table.header.pop();
            (table.columns, y, table.header)
        }
        None => {
            let model: RegressionModel = settings.model.as_deref().unwrap_or("A").parse()?;
            let (x, y) = regression_model(model, settings.n.unwrap_or(40), settings.seed())?;
            (vec![x], y, vec!["x".to_string()])
        }
    };
    let n = y.len();
    let m = columns.len();
    let raw = DMatrix::from_fn(n, m, |i, j| columns[j][i]);
    let x = with_intercept(&raw);
    let kind = score_kind(settings, "mean")?;
    let family = settings.family("mean", single_b(settings, kind)?)?;
    let eps = settings.eps_list("0,1,5,10")?;

    let mut header: Vec<String> = vec!["epsilon".into()];
    header.extend((0..=m).map(|j| format!("beta_{j}")));
    header.push("mse".into());
    let mut out = Output { header, ..Output::default() };
    for e in &eps {
        let fit = robust_regression(&family, &x, &y, *e)?;
        let mut row = vec![num(*e)];
        row.extend(fit.beta.iter().map(|b| num(*b)));
        row.push(num(fit.mse));
        out.rows.push(row);
    }

    let mut data_header: Vec<String> = names;
    data_header.push("y".into());
    let mut data = Output { header: data_header, ..Output::default() };
    data.rows = (0..n)
        .map(|i| {
            let mut row: Vec<String> = columns.iter().map(|c| num(c[i])).collect();
            row.push(num(y[i]));
            row
        })
        .collect();
    out.data = Some(Box::new(data));
    Ok(out)
}

/// `check`: solver versus oracle on a loss sample (default `{0, 1, 5}`).
pub fn cmd_check(settings: &Settings) -> Result<Output> {
    let atoms = match &settings.input {
        Some(path) => read_losses(path)?,
        None => vec![0.0, 1.0, 5.0],
    };
    let kind = score_kind(settings, "mean")?;
    if kind == ScoreKind::VarEsJoint {
        return Err(Error::BadSpec("check supports scalar scores only".into()));
    }
    let family = settings.family("mean", single_b(settings, kind)?)?;
    let eps = settings.eps_list("0,0.1,0.3")?;
    let dist = EmpiricalDistribution::uniform(atoms)?;

    let (mut lo, mut hi) = (dist.min(), dist.max());
    if family.action_domain() == ActionDomain::PositiveReals {
        lo = lo.max(1e-9);
        hi = hi.max(2.0 * lo);
    }
    let grid = linear_grid(lo, hi, 2001);
    let step = (hi - lo) / 2000.0;

    let mut out =
        Output::new(&["check", "epsilon", "solver", "oracle", "abs_diff", "tolerance", "pass"]);
    let push = |out: &mut Output, name: &str, e: f64, a: f64, b: f64, tol: f64| {
        let diff = (a - b).abs();
        let pass = diff <= tol;
        if !pass {
            out.failed_checks += 1;
        }
        out.rows.push(vec![
            name.to_string(),
            num(e),
            num(a),
            num(b),
            num(diff),
            num(tol),
            pass.to_string(),
        ]);
    };
    for e in &eps {
        let r = ref_1d(&family, &dist, *e, None)?;
        let g = grid_ref(&family, &dist, *e, &grid)?;
        let gz = g.argmin_z.expect("grid oracle reports its argmin");
        push(&mut out, "argmin", *e, r.z(), gz, step + 1e-9 * step.max(1.0));
        push(&mut out, "min_value", *e, r.value, r.value.min(g.value), 1e-8 * r.value.abs().max(1.0));
        if dist.len() <= MAX_ATOMS {
            let scores = score_values(&family, &dist, &[r.z()])?;
            let tilt = solve_tilt(&scores, dist.weights(), *e)?;
            let oracle = simplex_worst_case(&scores, dist.weights(), *e)?;
            push(&mut out, "inner_value", *e, tilt.value, oracle.value, 1e-4 * oracle.value.abs());
        }
    }
    Ok(out)
}
