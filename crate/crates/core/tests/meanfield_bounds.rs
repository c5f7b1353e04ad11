use mflab::chaos::gamma_bounds;
use mflab::field::{DensityField, GridSpec, ProductDensity};
use mflab::kernels::{InfluenceBounds, InfluenceKernel, InfluenceSpec, InteractionKernel, InteractionSpec, Kernels, SKind, SSpec};
use mflab::meanfield::{bounds_ledger, moment_growth_rate, solve, LedgerInputs, MeanFieldRun, SolveOptions};
use std::sync::OnceLock;

const S_BAR: f64 = 0.1;

/// Constant-in-space influence with a bump in the weight, scaled so that
/// both `sup |S|` and `sup |d_m S|` are declared as 0.1.
fn kernels() -> Kernels {
    let spec = |bounds| InfluenceSpec::Separable {
        s: SSpec { kind: SKind::Constant, amplitude: S_BAR, freq: 1, parity: None },
        chi_support: Some([0.5, 8.5]),
        chi2_support: None,
        bounds,
    };
    let computed = InfluenceKernel::new(spec(None)).unwrap().computed_bounds();
    let declared = InfluenceBounds { s0: S_BAR, s1: S_BAR, s2: computed.s2 };
    Kernels::new(
        InteractionKernel::new(InteractionSpec::Constant { c: vec![0.2] }).unwrap(),
        InfluenceKernel::new(spec(Some(declared))).unwrap(),
    )
}

fn initial() -> DensityField {
    ProductDensity::exponential_uniform().discretize(GridSpec::new(1, 64, 200, 40.0).unwrap()).unwrap()
}

fn run() -> &'static MeanFieldRun {
    static RUN: OnceLock<MeanFieldRun> = OnceLock::new();
    RUN.get_or_init(|| solve(&initial(), &kernels(), &SolveOptions::every(1.0, 0.1)).unwrap())
}

#[test]
fn declared_bounds_cover_the_kernel() {
    let k = kernels();
    let c = k.influence.computed_bounds();
    assert!(c.s0 <= S_BAR && c.s1 <= S_BAR, "{c:?}");
}

#[test]
fn moments_grow_at_most_exponentially() {
    let r = run();
    let first = &r.moments[0];
    for b in 1..=3 {
        for p in 1..=2 {
            let rate = moment_growth_rate(b, p, S_BAR, S_BAR);
            let m0 = first.get(b, p).unwrap();
            for rep in &r.moments {
                let v = rep.get(b, p).unwrap();
                assert!(v <= (rate * rep.time).exp() * m0 * (1.0 + 1e-3), "b {b} p {p} t {}: {v} vs {m0}", rep.time);
            }
        }
    }
    // The dynamics are not trivial.
    assert!((r.moments.last().unwrap().get(1, 1).unwrap() - first.get(1, 1).unwrap()).abs() > 1e-3);
}

#[test]
fn maximum_principle_and_mu_bound() {
    let r = run();
    let psi0_max = r.moments[0].psi_linf;
    let mu_bar = r.moments[0].mu_l1.max(r.moments[0].mu_linf);
    for rep in &r.moments {
        assert!(rep.psi_linf <= (S_BAR * rep.time).exp() * psi0_max * (1.0 + 1e-3));
        assert!(rep.mu_l1 <= mu_bar + S_BAR * rep.time + 1e-3);
    }
}

#[test]
fn log_gradients_stay_within_ledger_bounds() {
    let r = run();
    let inputs = LedgerInputs::measure(&r.frames[0], &kernels(), 12, 1.0, 1.0).unwrap();
    let ledger = bounds_ledger(&inputs).unwrap();
    eprintln!("T* {} T** {} C {}", ledger.t_star, ledger.t_double_star, inputs.envelope_c);
    let mut checked = 0;
    for lg in &r.log_gradients {
        if lg.time > ledger.t_star {
            continue;
        }
        checked += 1;
        let c = inputs.envelope_c;
        assert!(lg.dm_log_linf <= inputs.k_logm(lg.time), "t {}: {} vs {}", lg.time, lg.dm_log_linf, inputs.k_logm(lg.time));
        assert!(lg.dx_log_linf <= inputs.gradx_log_bound(lg.time));
        let env = c * inputs.k_dm(lg.time).max(1.0);
        assert!(lg.envelope_max <= env && lg.envelope_min >= 1.0 / env, "t {}: {lg:?}", lg.time);
    }
    assert!(checked >= 2);
}

#[test]
fn gamma_bounds_hold_along_the_run() {
    for frame in &run().frames {
        let g = gamma_bounds(frame, &kernels(), 12).unwrap();
        eprintln!("t {} g1 {:.4e}/{:.4e} g2 {:.4e}/{:.4e}", g.time, g.gamma1_measured, g.gamma1_bound, g.gamma2_measured, g.gamma2_bound);
        assert!(g.holds(0.05), "{g:?}");
    }
}

#[test]
fn gamma_bounds_hold_for_varying_density() {
    use mflab::field::{MProfile, XProfile};
    let psi = ProductDensity { x: XProfile::Cosine { amplitude: 0.4, freq: 1 }, m: MProfile::Exponential }
        .discretize(GridSpec::new(1, 32, 120, 30.0).unwrap())
        .unwrap();
    let k = Kernels::new(
        InteractionKernel::new(InteractionSpec::Constant { c: vec![0.5] }).unwrap(),
        InfluenceKernel::new(InfluenceSpec::Separable {
            s: SSpec { kind: SKind::Sin, amplitude: 0.3, freq: 1, parity: None },
            chi_support: Some([0.5, 6.0]),
            chi2_support: None,
            bounds: None,
        })
        .unwrap(),
    );
    let g = gamma_bounds(&psi, &k, 12).unwrap();
    assert!(g.gamma1_measured > 0.0 && g.gamma2_measured > 0.0);
    assert!(g.holds(0.05), "{g:?}");
}
