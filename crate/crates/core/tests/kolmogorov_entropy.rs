use mflab::field::{DensityField, GridSpec};
use mflab::kernels::{InfluenceKernel, InfluenceSpec, InteractionKernel, InteractionSpec, Kernels, SKind, SSpec};
use mflab::kolmogorov::{entropy_inequality_check, solve_kolmogorov, KolmogorovField, KolmogorovOptions};

fn factor(gx: usize, gm: usize, m_max: f64) -> DensityField {
    let g = GridSpec::new(1, gx, gm, m_max).unwrap();
    let mut f = DensityField::from_fn(g, |x, m| (1.0 + 0.3 * (std::f64::consts::TAU * x[0]).cos()) * (-m).exp());
    f.normalize().unwrap();
    f
}

fn separable(kind: SKind, amp: f64, support: Option<[f64; 2]>) -> InfluenceKernel {
    InfluenceKernel::new(InfluenceSpec::Separable {
        s: SSpec { kind, amplitude: amp, freq: 1, parity: None },
        chi_support: support,
        chi2_support: None,
        bounds: None,
    })
    .unwrap()
}

#[test]
fn generic_separable_satisfies_entropy_inequality() {
    let psi = KolmogorovField::tensor_power(&factor(24, 24, 6.0), 2).unwrap();
    let k = Kernels::new(
        InteractionKernel::new(InteractionSpec::Constant { c: vec![0.3] }).unwrap(),
        separable(SKind::Sin, 0.5, Some([0.3, 4.0])),
    );
    let frames = solve_kolmogorov(&psi, &k, &KolmogorovOptions::every(1.0, 0.05)).unwrap();
    let r = entropy_inequality_check(&frames, &k, 1e-2).unwrap();
    eprintln!("excess {:e} entropy {:?} rhs {:?}", r.max_excess, r.entropy, r.rhs_bound);
    assert!(r.satisfied);
}

#[test]
fn weight_independent_influence_does_not_raise_entropy() {
    let psi = KolmogorovField::tensor_power(&factor(24, 24, 40.0), 2).unwrap();
    let k = Kernels::new(InteractionKernel::zero(1), separable(SKind::Constant, 0.5, None));
    let frames = solve_kolmogorov(&psi, &k, &KolmogorovOptions::every(1.0, 0.05)).unwrap();
    let r = entropy_inequality_check(&frames, &k, 1e-10).unwrap();
    eprintln!("excess {:e}", r.max_excess);
    assert!(r.source_term.iter().all(|s| *s == 0.0));
    assert!(r.entropy.iter().all(|e| *e <= r.entropy[0] + 1e-10));
}
