use std::path::Path;
use std::sync::Arc;

use nsadisp::evolution::{
    discretize_h, dispersive_scan, gaussian_bump, gaussian_k_max, geometric_times, l2_stability_scan, t_max_heuristic,
    Propagator, PropagatorPlan,
};
use nsadisp::ft_diagnostics::{t_hat_l1_scan, Evaluator, LambdaGrid, Window};
use nsadisp::low_energy::{build_s0, low_energy_scan, scan_to_csv, RegularizedInverse};
use nsadisp::potentials::PotentialSpec;
use nsadisp::threshold::{build_p0, build_ppp, threshold_report, GridMeta, PppOptions, ThresholdBasis};
use nsadisp::{Grid, GridFunction, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::scenario::{Scenario, Tolerances, WindowKind};
use crate::CliError;

pub struct Context<'a> {
    pub scenario: &'a Scenario,
    pub grid: Arc<Grid>,
    pub v: PotentialSpec,
    pub out: &'a Path,
    pub seed: u64,
}

impl Context<'_> {
    fn tol(&self) -> &Tolerances {
        &self.scenario.tolerances
    }

    fn header(&self) -> Value {
        json!({
            "potential": self.v.name,
            "grid": GridMeta::of(&self.grid),
            "tolerances": self.tol(),
        })
    }
}

fn write(out: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    let p = out.join(name);
    std::fs::write(&p, text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

fn write_json(out: &Path, name: &str, mut header: Value, body: Value) -> Result<(), CliError> {
    if let (Some(h), Value::Object(b)) = (header.as_object_mut(), body) {
        h.extend(b);
    }
    let mut text = serde_json::to_string_pretty(&header).expect("serializable");
    text.push('\n');
    write(out, name, &text)
}

pub fn threshold(ctx: &Context) -> Result<(ThresholdBasis, Value), CliError> {
    let (report, basis) = threshold_report(&ctx.v, ctx.tol().tol_rank, ctx.tol().tol_res)?;
    let body = serde_json::to_value(&report).expect("serializable");
    write_json(ctx.out, "threshold.json", ctx.header(), body.clone())?;
    if report.pairing_residual > ctx.tol().tol_pairing {
        return Err(CliError::Assertion(format!("pairing residual {:e} above tolerance", report.pairing_residual)));
    }
    Ok((basis, body))
}

/// L1-normalized test function with random nodal values under a Gaussian envelope.
pub fn random_f(grid: &Arc<Grid>, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = grid
        .radii
        .iter()
        .map(|&r| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * (-r * r / 4.0).exp())
        .collect();
    let f = GridFunction::new(grid, vals).expect("matching length");
    f.scale(C64::new(1.0 / f.l1(), 0.0))
}

pub fn inverse(ctx: &Context, basis: &ThresholdBasis) -> Result<(RegularizedInverse, Value), CliError> {
    let reg = build_s0(&ctx.v, basis)?;
    if reg.window <= 0.0 {
        return Err(CliError::Assertion("no low-energy window with a contraction certificate".into()));
    }
    let res = reg.residuals()?;
    let lambdas = match &ctx.scenario.invert.lambdas {
        Some(l) => l.clone(),
        None => geometric_times(reg.window / 20.0, reg.window, 8),
    };
    let f = random_f(&ctx.grid, ctx.seed);
    let adm = f.sub(&build_p0(basis).apply(&f)?)?;
    let rows = low_energy_scan(&reg, &lambdas, &adm, &f)?;
    write(ctx.out, "invert.csv", &scan_to_csv(&rows))?;
    let body = json!({
        "window": reg.window,
        "s0_residuals": res,
        "chains": basis.lengths(),
        "lambdas": lambdas,
        "seed": ctx.seed,
    });
    write_json(ctx.out, "invert.json", ctx.header(), body.clone())?;
    if res.one_sided > ctx.tol().tol_identity || res.range > ctx.tol().tol_identity {
        return Err(CliError::Assertion(format!(
            "S0 residuals {:e}, {:e} above tolerance",
            res.one_sided, res.range
        )));
    }
    Ok((reg, body))
}

pub fn evolve(ctx: &Context, basis: Option<&ThresholdBasis>) -> Result<Value, CliError> {
    let cfg = &ctx.scenario.evolve;
    let t_max = cfg.t_max.unwrap_or_else(|| t_max_heuristic(&ctx.grid, gaussian_k_max(cfg.bump_width)));
    // anchor the grid at the fit start so the fit window is exactly [t_fit_min, T_max]
    let mut times = if cfg.t_min < cfg.t_fit_min { geometric_times(cfg.t_min, cfg.t_fit_min, 5) } else { vec![] };
    times.pop();
    times.extend(geometric_times(cfg.t_fit_min.max(cfg.t_min), t_max, cfg.count));
    let plan = PropagatorPlan::new(discretize_h(&ctx.v)?, times, cfg.method, t_max)?;
    let prop = Propagator::build(plan)?;
    let f = gaussian_bump(&ctx.grid, cfg.bump_width);
    let (projector, clusters) = if cfg.project {
        let opts = PppOptions { tol_imag: ctx.tol().tol_imag, tol_cluster: ctx.tol().tol_cluster, ..PppOptions::default() };
        let rep = build_ppp(&ctx.v, &opts, basis.filter(|b| !b.is_empty()))?;
        let trivial = rep.clusters.is_empty() && basis.map_or(true, |b| b.is_empty());
        (if trivial { None } else { Some(rep.projector) }, serde_json::to_value(&rep.clusters).expect("serializable"))
    } else {
        (None, Value::Array(vec![]))
    };
    let decay = dispersive_scan(&prop, &f, projector.as_ref(), cfg.t_fit_min)?;
    let l2 = l2_stability_scan(&prop, &f, projector.as_ref())?;
    write(ctx.out, "evolve.csv", &decay.to_csv())?;
    let body = json!({
        "exponent": decay.exponent,
        "stderr": decay.stderr,
        "constant": decay.constant,
        "fit_window": decay.fit_window,
        "T_max": decay.t_max,
        "exceeds_horizon": decay.exceeds_horizon,
        "projected": projector.is_some(),
        "clusters": clusters,
        "l2_ratio_sup": l2.ratio_sup,
    });
    write_json(ctx.out, "evolve.json", ctx.header(), body.clone())?;
    Ok(body)
}

pub fn ftscan(ctx: &Context, basis: &ThresholdBasis, reg: Option<&RegularizedInverse>) -> Result<Value, CliError> {
    let cfg = &ctx.scenario.ftscan;
    let mut f = gaussian_bump(&ctx.grid, 1.0);
    if cfg.project && !basis.is_empty() {
        f = f.sub(&build_p0(basis).apply(&f)?)?;
    }
    let (window, support) = match cfg.window {
        WindowKind::Low => {
            let r = cfg.r.or(reg.map(|g| 0.5 * g.window)).filter(|r| *r > 0.0).unwrap_or(0.5);
            (Window::Low { r }, 2.0 * r)
        }
        WindowKind::Mid => (Window::Mid { lambda1: cfg.lambda1 }, 2.0 * cfg.lambda1),
        WindowKind::High => (Window::High { lambda1: cfg.lambda1 }, 4.0 * cfg.lambda1),
    };
    let grid = LambdaGrid::covering(cfg.n, support * cfg.padding)?;
    let eval = match (cfg.window, reg) {
        (WindowKind::Low, Some(r)) if !basis.is_empty() => Evaluator::Formula(r),
        _ => Evaluator::Dense(&ctx.v),
    };
    let scan = t_hat_l1_scan(&eval, &f, window, grid)?;
    write(ctx.out, "ftscan.csv", &scan.to_csv())?;
    let body = json!({ "scan": scan.summary_json(), "window_params": window, "f_norm": scan.f_norm });
    write_json(ctx.out, "ftscan.json", ctx.header(), body.clone())?;
    Ok(body)
}

pub const EXPONENT: f64 = -1.5;
pub const EXPONENT_TOL: f64 = 0.15;

pub fn full(ctx: &Context) -> Result<(), CliError> {
    let (basis, th) = threshold(ctx)?;
    let (reg, inv) = inverse(ctx, &basis)?;
    let ft = ftscan(ctx, &basis, Some(&reg))?;
    let ev = evolve(ctx, Some(&basis))?;
    let exponent = ev["exponent"].as_f64().unwrap_or(f64::NAN);
    let ok = (exponent - EXPONENT).abs() <= EXPONENT_TOL;
    let body = json!({
        "threshold": th,
        "invert": inv,
        "ftscan": ft,
        "evolve": ev,
        "exponent_check": { "target": EXPONENT, "tolerance": EXPONENT_TOL, "pass": ok },
    });
    write_json(ctx.out, "full.json", ctx.header(), body)?;
    if !ok {
        return Err(CliError::Assertion(format!("decay exponent {exponent} outside {EXPONENT} ± {EXPONENT_TOL}")));
    }
    Ok(())
}
