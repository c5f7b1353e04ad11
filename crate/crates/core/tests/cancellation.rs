use std::f64::consts::TAU;

use mflab::chaos::{cancellation_refinement, product_cancellation_bruteforce, ChaosError};
use mflab::field::{DensityField, GridSpec, MProfile, ProductDensity, XProfile};
use mflab::kernels::{InfluenceKernel, InfluenceSpec, InteractionKernel, InteractionSpec, Kernels, SKind, SSpec, Trig};

fn influence(amp: f64) -> InfluenceKernel {
    InfluenceKernel::new(InfluenceSpec::Separable {
        s: SSpec { kind: SKind::Sin, amplitude: amp, freq: 1, parity: None },
        chi_support: Some([0.5, 4.0]),
        chi2_support: None,
        bounds: None,
    })
    .unwrap()
}

fn cosine(grid: GridSpec) -> Result<mflab::field::DensityField, ChaosError> {
    Ok(ProductDensity { x: XProfile::Cosine { amplitude: 0.3, freq: 1 }, m: MProfile::Exponential }
        .discretize(grid)
        .expect("valid profile"))
}

#[test]
fn phi_second_slot_refines_in_one_dimension() {
    let k = Kernels::new(InteractionKernel::new(InteractionSpec::Constant { c: vec![0.3] }).unwrap(), influence(0.4));
    let grids: Vec<GridSpec> = [8, 16, 32].iter().map(|&g| GridSpec::new(1, g, 2 * g, 8.0).unwrap()).collect();
    let r = cancellation_refinement(&grids, &k, cosine).unwrap();
    eprintln!("slopes {:?}", r.slopes);
    assert!(r.slopes[0].unwrap() >= 0.9 && r.slopes[1].unwrap() >= 0.9);
    // Constant interaction: the second theta slot vanishes to roundoff.
    assert!(r.reports.iter().all(|c| c.theta_second_slot < 1e-14));
}

#[test]
fn theta_slots_refine_with_perpendicular_gradient_field() {
    let a = InteractionKernel::new(InteractionSpec::PerpGradientTrig { amplitude: 0.3, potential: [Trig::Sin, Trig::Cos] })
        .unwrap();
    let k = Kernels::new(a, influence(0.3));
    let grids: Vec<GridSpec> = [6, 12, 24].iter().map(|&g| GridSpec::new(2, g, g, 8.0).unwrap()).collect();
    let make = |g: GridSpec| {
        let mut f = DensityField::from_fn(g, |x, m| {
            (1.0 + 0.3 * (TAU * x[0]).cos()) * (1.0 + 0.2 * (TAU * (x[0] + x[1])).sin()) * (-m).exp()
        });
        f.normalize().expect("positive");
        Ok(f)
    };
    let r = cancellation_refinement(&grids, &k, make).unwrap();
    eprintln!("slopes {:?}", r.slopes);
    assert!(r.passes(0.9));
}

fn bruteforce_kernels() -> Kernels {
    Kernels::new(InteractionKernel::new(InteractionSpec::Constant { c: vec![0.3] }).unwrap(), influence(0.4))
}

fn bruteforce_density(cells: usize) -> mflab::field::DensityField {
    cosine(GridSpec::new(1, cells, cells, 8.0).unwrap()).unwrap()
}

/// At 12 cells per axis the qualifying integrals sit near 2e-4 while the
/// negative control is above 5e-3; 1e-3 separates the two.
const TOL_CANCEL: f64 = 1e-3;

#[test]
fn bruteforce_qualifying_pairs_cancel_for_two_particles() {
    let r = product_cancellation_bruteforce(&bruteforce_density(12), &bruteforce_kernels(), 2, 1, TOL_CANCEL).unwrap();
    assert_eq!(r.entries.len(), 16);
    assert_eq!(r.entries.iter().filter(|e| e.qualifying).count(), 6);
    assert!(r.passes, "max qualifying {:e}", r.max_qualifying);
    let control = r.entry(&[1, 1], &[2, 2]).unwrap();
    assert!(!control.qualifying);
    assert!(control.phi.abs() > TOL_CANCEL && control.theta.abs() > TOL_CANCEL);
}

#[test]
fn bruteforce_residual_shrinks_under_refinement() {
    let coarse = product_cancellation_bruteforce(&bruteforce_density(12), &bruteforce_kernels(), 2, 1, TOL_CANCEL).unwrap();
    let fine = product_cancellation_bruteforce(&bruteforce_density(24), &bruteforce_kernels(), 2, 1, TOL_CANCEL).unwrap();
    assert!(fine.max_qualifying < coarse.max_qualifying / 4.0, "{:e} vs {:e}", fine.max_qualifying, coarse.max_qualifying);
    let (c0, c1) = (coarse.entry(&[1, 1], &[2, 2]).unwrap(), fine.entry(&[1, 1], &[2, 2]).unwrap());
    assert!((c1.phi / c0.phi - 1.0).abs() < 0.2 && (c1.theta / c0.theta - 1.0).abs() < 0.2);
}

#[test]
fn bruteforce_without_influence_has_zero_phi_products() {
    let k = Kernels::new(InteractionKernel::new(InteractionSpec::Constant { c: vec![0.3] }).unwrap(), InfluenceKernel::zero());
    let r = product_cancellation_bruteforce(&bruteforce_density(8), &k, 2, 1, TOL_CANCEL).unwrap();
    assert!(r.entries.iter().all(|e| e.phi == 0.0 && e.phi_abs == 0.0));
}

#[test]
fn bruteforce_refuses_large_problems() {
    let psi = bruteforce_density(16);
    assert!(matches!(
        product_cancellation_bruteforce(&psi, &bruteforce_kernels(), 3, 2, TOL_CANCEL),
        Err(ChaosError::Budget { .. })
    ));
    assert!(product_cancellation_bruteforce(&psi, &bruteforce_kernels(), 4, 1, TOL_CANCEL).is_err());
}
