//! One function per subcommand. Each returns an [`Outcome`]; nothing here
//! touches the disk.

use mflab::chaos::{
    cancellation_check, cancellation_refinement, ckp_tensor_check, delta_trend, exp_moment_mc, gamma_bounds,
    marginal_error_study, product_cancellation_bruteforce, ChaosError, StudyConfig,
};
use mflab::field::{DensityField, GridSpec};
use mflab::kernels::Kernels;
use mflab::kolmogorov::{
    entropy_inequality_check, gronwall_shape, solve_kolmogorov, KolmogorovField, KolmogorovOptions,
};
use mflab::meanfield::{
    bounds_ledger, moment_growth_rate, shift_x, solve, stability_check, write_field_csv, BoundsLedger, LedgerInputs,
    MeanFieldRun, SolveOptions,
};
use mflab::particles::{sample_initial, simulate, weighted_empirical, InitialSource};
use serde_json::{json, Value};
use std::fmt::Write as _;

use crate::config::ExperimentConfig;
use crate::output::{Check, Outcome};
use crate::RunError;

/// Relative slack on the exponential-growth and maximum-principle bounds.
pub const BOUND_RTOL: f64 = 1e-3;
/// Absolute slack on the `mu` L1 bound.
pub const MU_ATOL: f64 = 1e-3;
/// Distance allowed between two runs from identical data.
pub const IDENTICAL_TOL: f64 = 1e-12;

pub fn dispatch(subcommand: &str, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match subcommand {
        "simulate-particles" => simulate_particles(cfg),
        "solve-meanfield" => solve_meanfield(cfg),
        "solve-kolmogorov" => solve_kolmogorov_cmd(cfg),
        "chaos-study" => chaos_study(cfg),
        "verify-bounds" => verify_bounds(cfg),
        "verify-cancellation" => verify_cancellation(cfg),
        other => Err(RunError::Config(format!("unknown subcommand `{other}`"))),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn is_zero(k: &Kernels) -> bool {
    k.interaction.is_zero() && k.influence.is_zero()
}

fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
    let mut o = SolveOptions::every(cfg.times.t_end, cfg.times.frame_dt);
    o.cfl = cfg.times.cfl;
    o
}

fn mean_field(cfg: &ExperimentConfig, grid: GridSpec) -> Result<(DensityField, MeanFieldRun), RunError> {
    let psi0 = cfg.initial_on(grid)?;
    let run = solve(&psi0, &cfg.kernels(), &solve_options(cfg))?;
    Ok((psi0, run))
}

fn simulate_particles(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let k = cfg.kernels();
    let source = InitialSource::Product { density: &cfg.initial, dim: cfg.grids.dim, m_max: Some(cfg.grids.m_max) };
    let init = sample_initial(&source, cfg.particles.n, cfg.seed)?;
    let t = &cfg.times;
    let traj = simulate(&init, &k, t.t_end, t.dt, t.scheme, t.store_every)?;
    let s0 = k.influence.bounds().s0;
    let mass0 = weighted_empirical(&init).total_mass;
    let mut frames = Vec::new();
    let mut worst = 0.0f64;
    for f in &traj.frames {
        let mass = weighted_empirical(f).total_mass;
        let (lo, hi) = f.weights.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), w| (a.min(*w), b.max(*w)));
        // Each weight moves at rate at most sup|S|, and so does their mean.
        let excess = (mass - mass0).abs() - s0 * f.time;
        worst = worst.max(excess);
        frames.push(json!({ "t": f.time, "total_mass": mass, "min_weight": lo, "max_weight": hi }));
    }
    let mut checks = vec![Check::new(
        "total weight moves at most sup|S| per unit time",
        worst <= 1e-12 * (1.0 + mass0.abs()),
        format!("max excess {worst:e}"),
    )];
    if k.influence.is_zero() {
        let frozen = traj.frames.iter().all(|f| f.weights == init.weights);
        checks.push(Check::new("weights are frozen without influence", frozen, ""));
    }
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(|e| RunError::Io(e.to_string()))?;
    Ok(Outcome {
        checks,
        result: json!({ "N": cfg.particles.n, "scheme": t.scheme, "frames": frames }),
        csv: Some(String::from_utf8(csv).expect("csv is utf-8")),
    })
}

/// Moment growth, maximum principle and `mu` L1 bound along a run.
fn run_bound_checks(run: &MeanFieldRun, k: &Kernels) -> Vec<Check> {
    let b = k.influence.bounds();
    let first = &run.moments[0];
    let mut growth_worst = f64::NEG_INFINITY;
    for rep in &run.moments {
        for bb in 1..=3 {
            for p in 1..=2 {
                let (Some(v), Some(m0)) = (rep.get(bb, p), first.get(bb, p)) else { continue };
                let bound = (moment_growth_rate(bb, p, b.s0, b.s1) * rep.time).exp() * m0 * (1.0 + BOUND_RTOL);
                growth_worst = growth_worst.max(v / bound);
            }
        }
    }
    let mu_bar = first.mu_l1.max(first.mu_linf);
    let mut max_ratio = f64::NEG_INFINITY;
    let mut mu_excess = f64::NEG_INFINITY;
    for rep in &run.moments {
        max_ratio = max_ratio.max(rep.psi_linf / ((b.s1 * rep.time).exp() * first.psi_linf * (1.0 + BOUND_RTOL)));
        mu_excess = mu_excess.max(rep.mu_l1 - (mu_bar + b.s0 * rep.time + MU_ATOL));
    }
    vec![
        Check::new("weight moments grow at most exponentially", growth_worst <= 1.0, format!("max ratio to bound {growth_worst:.6}")),
        Check::new("maximum principle", max_ratio <= 1.0, format!("max ratio to bound {max_ratio:.6}")),
        Check::new("mu L1 bound", mu_excess <= 0.0, format!("max excess {mu_excess:e}")),
    ]
}

fn solve_meanfield(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let grid = cfg.grids.spec()?;
    let (_, run) = mean_field(cfg, grid)?;
    let k = cfg.kernels();
    let mut checks = run_bound_checks(&run, &k);
    checks.push(Check::new(
        "mass conservation",
        run.max_mass_drift <= 1e-8,
        format!("max drift {:e}", run.max_mass_drift),
    ));
    let mut csv = Vec::new();
    write_field_csv(&run.frames, &mut csv).map_err(|e| RunError::Io(e.to_string()))?;
    Ok(Outcome {
        checks,
        result: json!({
            "moments": to_value(&run.moments),
            "log_gradients": to_value(&run.log_gradients),
            "envelope_constant": run.envelope_constant,
            "steps": run.steps,
            "max_mass_drift": run.max_mass_drift,
        }),
        csv: Some(String::from_utf8(csv).expect("csv is utf-8")),
    })
}

fn solve_kolmogorov_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    if cfg.grids.dim != 1 {
        return Err(RunError::Config("solve-kolmogorov supports d = 1 only".into()));
    }
    let ks = &cfg.kolmogorov;
    let grid = GridSpec::new(1, ks.gx, ks.gm, ks.m_max).map_err(|e| RunError::Config(format!("kolmogorov grid: {e}")))?;
    let k = cfg.kernels();
    let factor = cfg.initial_on(grid)?;
    let joint = KolmogorovField::tensor_power(&factor, ks.n)?;
    let mut kopts = KolmogorovOptions::every(cfg.times.t_end, cfg.times.frame_dt);
    kopts.cfl = cfg.times.cfl;
    let frames = solve_kolmogorov(&joint, &k, &kopts)?;
    let entropy = entropy_inequality_check(&frames, &k, ks.tol_ent)?;

    let mut mopts = solve_options(cfg);
    mopts.frame_times = kopts.frame_times.clone();
    let mf = solve(&factor, &k, &mopts)?;
    let mut ckp = Vec::new();
    for (f, m) in frames.iter().zip(&mf.frames) {
        for order in 1..=ks.n {
            let r = ckp_tensor_check(f, m, order)?;
            ckp.push(json!({ "t": f.time, "k": order, "l1": r.l1, "entropy": r.entropy, "bound": r.bound, "holds": r.holds }));
        }
    }
    let ckp_ok = ckp.iter().all(|c| c["holds"] == json!(true));
    let gronwall = gronwall_shape(&frames, &mf.frames, ks.gronwall_margin)?;
    let masses: Vec<f64> = frames.iter().map(KolmogorovField::mass).collect();
    let mass_drift = masses.iter().map(|m| (m - masses[0]).abs()).fold(0.0, f64::max);

    let mut csv = String::from("t,entropy,entropy_bound,relative_entropy,gronwall_bound\n");
    for i in 0..frames.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            entropy.times[i], entropy.entropy[i], entropy.rhs_bound[i], gronwall.relative_entropy[i], gronwall.bounds[i]
        );
    }
    let checks = vec![
        Check::new("entropy inequality", entropy.satisfied, format!("max excess {:e} (tol {:e})", entropy.max_excess, ks.tol_ent)),
        Check::new("marginal L1 distance within the entropy bound", ckp_ok, format!("{} marginal pairs", ckp.len())),
        Check::new("relative entropy follows a Gronwall envelope", gronwall.holds, format!("kappa {:e}, smallest kappa that fits {:e}", gronwall.kappa, gronwall.kappa_required)),
        Check::new("mass conservation", mass_drift <= 1e-10, format!("max drift {mass_drift:e}")),
    ];
    Ok(Outcome {
        checks,
        result: json!({
            "N": ks.n,
            "grid": { "G_x": ks.gx, "G_m": ks.gm, "m_max": ks.m_max },
            "entropy": to_value(&entropy),
            "ckp": ckp,
            "gronwall": to_value(&gronwall),
            "mass": masses,
        }),
        csv: Some(csv),
    })
}

fn chaos_study(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let c = &cfg.chaos;
    let grid = match &c.grids {
        Some(g) => g.spec()?,
        None => cfg.grids.spec()?,
    };
    let k = cfg.kernels();
    let study = StudyConfig {
        kernels: k.clone(),
        psi0: cfg.initial_on(grid)?,
        bins: None,
        t_end: cfg.times.t_end,
        dt: cfg.times.dt,
        scheme: cfg.times.scheme,
        cfl: cfg.times.cfl,
        checkpoints: c.checkpoints.clone(),
        ns: c.ns.clone(),
        replicas: c.replicas,
        seeds: c.seeds.iter().map(|s| s.wrapping_add(cfg.seed)).collect(),
        delta: c.delta_n.map(|n| (n, c.delta_samples)),
    };
    let report = marginal_error_study(&study)?;
    let mut checks = Vec::new();
    if is_zero(&k) {
        let (ok, detail) = match report.slope {
            Some(s) => ((s + 0.5).abs() <= c.slope_band, format!("slope {s:.4}, expected -0.5 +- {}", c.slope_band)),
            None => (false, "slope undefined".to_string()),
        };
        checks.push(Check::new("free-case marginal error decays like N^-1/2", ok, detail));
    } else {
        let l1: Vec<f64> = report.rows.iter().map(|r| r.l1).collect();
        let ok = l1.windows(2).all(|w| w[1] < w[0]);
        checks.push(Check::new("marginal error decreases in N", ok, format!("median L1 {l1:?}")));
    }
    let mut csv = String::from("N,replicas,l1,w1\n");
    for r in &report.rows {
        let _ = writeln!(csv, "{},{},{},{}", r.n, r.replicas, r.l1, r.w1);
    }
    Ok(Outcome { checks, result: to_value(&report), csv: Some(csv) })
}

fn ledger(cfg: &ExperimentConfig, psi0: &DensityField, k: &Kernels) -> Result<BoundsLedger, RunError> {
    let inputs = LedgerInputs::measure(psi0, k, cfg.verify.b_max, cfg.chaos.lambda, cfg.times.t_end)?;
    Ok(bounds_ledger(&inputs)?)
}

fn verify_bounds(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let grid = cfg.grids.spec()?;
    let k = cfg.kernels();
    let (psi0, run) = mean_field(cfg, grid)?;
    let led = ledger(cfg, &psi0, &k)?;
    let inputs = &led.inputs;
    let mut checks = run_bound_checks(&run, &k);

    let mut worst_logm = f64::NEG_INFINITY;
    let mut worst_gradx = f64::NEG_INFINITY;
    let mut envelope_ok = true;
    let mut checked = 0;
    for lg in run.log_gradients.iter().filter(|lg| lg.time <= led.t_star) {
        checked += 1;
        worst_logm = worst_logm.max(lg.dm_log_linf - inputs.k_logm(lg.time));
        worst_gradx = worst_gradx.max(lg.dx_log_linf - inputs.gradx_log_bound(lg.time));
        let env = inputs.envelope_c * inputs.k_dm(lg.time).max(1.0);
        envelope_ok &= lg.envelope_max <= env && lg.envelope_min >= 1.0 / env;
    }
    checks.push(Check::new("positivity envelope", envelope_ok, format!("{checked} frames up to T_star = {:.4}", led.t_star)));
    checks.push(Check::new("weight log-derivative bound", worst_logm <= 0.0, format!("max excess {worst_logm:e}")));
    checks.push(Check::new("spatial log-gradient bound", worst_gradx <= 0.0, format!("max excess {worst_gradx:e}")));
    if is_zero(&k) {
        let ok = (led.k_dm - inputs.envelope_c).abs() <= 1e-12 * inputs.envelope_c;
        checks.push(Check::new(
            "without kernels the weight-derivative constant equals the envelope constant",
            ok,
            format!("K {} vs C {}", led.k_dm, inputs.envelope_c),
        ));
    }

    let v = &cfg.verify;
    let opts = solve_options(cfg);
    let same = stability_check(&psi0, &psi0, &k, &opts, v.stability_margin)?;
    let same_max = same.distances.iter().copied().fold(0.0, f64::max);
    checks.push(Check::new("identical data give identical solutions", same_max <= IDENTICAL_TOL, format!("max distance {same_max:e}")));
    let shifted = stability_check(&psi0, &shift_x(&psi0, v.stability_shift), &k, &opts, v.stability_margin)?;
    checks.push(Check::new(
        "distance grows at most exponentially",
        shifted.degenerate || (shifted.c_hat.is_finite() && shifted.bound_holds),
        format!("fitted rate {:.4}, C_hat {:.4}, D(0) {:e}", shifted.fitted_rate, shifted.c_hat, shifted.d0),
    ));

    let mut csv = String::from("t,psi_linf,mu_l1,dm_log_linf,dx_log_linf,envelope_min,envelope_max\n");
    for (rep, lg) in run.moments.iter().zip(&run.log_gradients) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            rep.time, rep.psi_linf, rep.mu_l1, lg.dm_log_linf, lg.dx_log_linf, lg.envelope_min, lg.envelope_max
        );
    }
    Ok(Outcome {
        checks,
        result: json!({
            "ledger": to_value(&led),
            "moments": to_value(&run.moments),
            "log_gradients": to_value(&run.log_gradients),
            "stability": { "identical": to_value(&same), "shifted": to_value(&shifted) },
        }),
        csv: Some(csv),
    })
}

fn verify_cancellation(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let v = &cfg.verify;
    let k = cfg.kernels();
    let grid = cfg.grids.spec()?;
    let psi0 = cfg.initial_on(grid)?;
    let mut checks = Vec::new();

    let single = cancellation_check(&psi0, &k)?;
    let levels = v
        .refinement
        .iter()
        .map(|[gx, gm]| GridSpec::new(cfg.grids.dim, *gx, *gm, v.refinement_m_max))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RunError::Config(format!("verify.refinement: {e}")))?;
    let refinement = cancellation_refinement(&levels, &k, |g| {
        cfg.initial.discretize(g).map_err(|e| ChaosError::InvalidArgument(e.to_string()))
    })?;
    checks.push(Check::new(
        "single-slot integrals vanish under refinement",
        refinement.passes(v.min_slope),
        format!("slopes {:?}, min {}", refinement.slopes, v.min_slope),
    ));

    let bruteforce = if cfg.grids.dim == 1 {
        let g = GridSpec::new(1, v.bruteforce_cells, v.bruteforce_cells, v.bruteforce_m_max)
            .map_err(|e| RunError::Config(format!("brute-force grid: {e}")))?;
        let psi = cfg.initial_on(g)?;
        let r = product_cancellation_bruteforce(&psi, &k, 2, 1, v.tol_cancel)?;
        checks.push(Check::new(
            "product integrals vanish on qualifying index classes",
            r.passes,
            format!("max qualifying {:e}, tol {:e}", r.max_qualifying, v.tol_cancel),
        ));
        let control = r.entry(&[1, 1], &[2, 2]).map(|e| json!({ "phi": e.phi, "theta": e.theta }));
        json!({ "report": to_value(&r), "control": control })
    } else {
        Value::Null
    };

    let run = solve(&psi0, &k, &solve_options(cfg))?;
    let mut gamma = Vec::new();
    for f in &run.frames {
        gamma.push(gamma_bounds(f, &k, v.b_max)?);
    }
    let gamma_ok = gamma.iter().all(|g| g.holds(v.gamma_slack));
    checks.push(Check::new("remainder kernel bounds", gamma_ok, format!("{} frames, slack {}", gamma.len(), v.gamma_slack)));

    let led = ledger(cfg, &psi0, &k)?;
    let mut mc = Vec::new();
    for &n in &v.mc_ns {
        mc.push(exp_moment_mc(&psi0, &k, n, v.mc_samples, cfg.seed)?);
    }
    let trend = if mc.len() >= 2 { Some(delta_trend(&mc, cfg.seed.wrapping_add(1))?) } else { None };
    if is_zero(&k) {
        let ok = mc.iter().all(|r| r.delta == 1.0);
        checks.push(Check::new("without kernels the exponential moment is exactly one", ok, ""));
    } else if led.small_cond_1 && led.small_cond_2 {
        if let Some(t) = &trend {
            checks.push(Check::new(
                "exponential remainder moment does not grow with N",
                t.flat_within(v.trend_tol),
                format!("slope {:e}, CI {:?}, tol {}", t.slope, t.ci, v.trend_tol),
            ));
        }
    }

    Ok(Outcome {
        checks,
        result: json!({
            "cancellation": to_value(&single),
            "refinement": to_value(&refinement),
            "bruteforce": bruteforce,
            "gamma": to_value(&gamma),
            "smallness": {
                "cond1": led.cond1_lhs, "cond2": led.cond2_lhs,
                "holds": led.small_cond_1 && led.small_cond_2, "t_double_star": led.t_double_star,
            },
            "exp_moment": to_value(&mc),
            "trend": trend.as_ref().map(to_value),
        }),
        csv: None,
    })
}
