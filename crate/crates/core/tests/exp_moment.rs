use mflab::chaos::{delta_trend, exp_moment_mc};
use mflab::field::{DensityField, GridSpec, MProfile, ProductDensity, XProfile};
use mflab::kernels::{InfluenceKernel, InfluenceSpec, InteractionKernel, InteractionSpec, Kernels, SKind, SSpec};
use mflab::meanfield::{bounds_ledger, LedgerInputs};

fn psi() -> DensityField {
    ProductDensity { x: XProfile::Cosine { amplitude: 0.3, freq: 1 }, m: MProfile::Exponential }
        .discretize(GridSpec::new(1, 32, 120, 30.0).unwrap())
        .unwrap()
}

fn small_kernels() -> Kernels {
    Kernels::new(
        InteractionKernel::new(InteractionSpec::Constant { c: vec![0.02] }).unwrap(),
        InfluenceKernel::new(InfluenceSpec::Separable {
            s: SSpec { kind: SKind::Sin, amplitude: 0.02, freq: 1, parity: None },
            chi_support: Some([0.5, 6.5]),
            chi2_support: None,
            bounds: None,
        })
        .unwrap(),
    )
}

#[test]
fn small_amplitudes_satisfy_both_conditions() {
    let inputs = LedgerInputs::measure(&psi(), &small_kernels(), 12, 1.0, 1.0).unwrap();
    let l = bounds_ledger(&inputs).unwrap();
    eprintln!("cond1 {} cond2 {} T** {}", l.cond1_lhs, l.cond2_lhs, l.t_double_star);
    assert!(l.small_cond_1 && l.small_cond_2);
}

#[test]
fn zero_kernels_give_one_for_every_n() {
    for n in [8, 16, 32, 64] {
        let r = exp_moment_mc(&psi(), &Kernels::zero(1), n, 500, n as u64).unwrap();
        assert_eq!(r.delta, 1.0);
        assert_eq!(r.ci, [1.0, 1.0]);
    }
}

#[test]
fn exponential_moment_shows_no_growth_in_n() {
    let k = small_kernels();
    let reports: Vec<_> = [8, 16, 32, 64].iter().map(|&n| exp_moment_mc(&psi(), &k, n, 10_000, 7).unwrap()).collect();
    for r in &reports {
        eprintln!("N {} delta {} ci {:?} mean_r {:e} mean_s {:e} max {:e}", r.n, r.delta, r.ci, r.mean_r, r.mean_s, r.max_abs);
    }
    let trend = delta_trend(&reports, 11).unwrap();
    eprintln!("slope {} ci {:?}", trend.slope, trend.ci);
    assert!(trend.flat_within(0.01));
}
