use mflab::chaos::{circle_w1, marginal_error_study, ChaosError, StudyConfig};
use mflab::field::{DensityField, GridSpec, MProfile, ProductDensity, XProfile};
use mflab::kernels::{InfluenceKernel, InfluenceSpec, InteractionKernel, InteractionSpec, Kernels, SKind, SSpec};
use mflab::particles::Scheme;

fn psi0() -> DensityField {
    ProductDensity { x: XProfile::Cosine { amplitude: 0.3, freq: 1 }, m: MProfile::Exponential }
        .discretize(GridSpec::new(1, 8, 16, 8.0).unwrap())
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

fn config(kernels: Kernels, ns: Vec<usize>, replicas: usize) -> StudyConfig {
    StudyConfig {
        kernels,
        psi0: psi0(),
        bins: None,
        t_end: 0.5,
        dt: 0.05,
        scheme: Scheme::Heun,
        cfl: 0.45,
        checkpoints: vec![0.25],
        ns,
        replicas,
        seeds: vec![1, 2, 3, 4, 5],
        delta: None,
    }
}

#[test]
fn free_particles_show_sampling_rate() {
    let r = marginal_error_study(&config(Kernels::zero(1), vec![64, 256, 1024, 4096], 4)).unwrap();
    let slope = r.slope.unwrap();
    assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
    assert!(r.rows.windows(2).all(|w| w[1].w1 < w[0].w1));
}

#[test]
fn more_replicas_reduce_the_pooled_error() {
    let one = marginal_error_study(&config(Kernels::zero(1), vec![128], 2)).unwrap();
    let two = marginal_error_study(&config(Kernels::zero(1), vec![128], 4)).unwrap();
    assert!(two.rows[0].l1 < one.rows[0].l1, "{} vs {}", two.rows[0].l1, one.rows[0].l1);
}

#[test]
fn interacting_error_decreases_in_n() {
    let r = marginal_error_study(&config(small_kernels(), vec![32, 128, 512], 4)).unwrap();
    assert!(r.rows.windows(2).all(|w| w[1].l1 < w[0].l1), "{:?}", r.rows.iter().map(|r| r.l1).collect::<Vec<_>>());
    assert_eq!(r.checkpoints, vec![0.25, 0.5]);
    assert!(r.rows.iter().all(|row| row.l1_checkpoints.len() == 2));
}

#[test]
fn delta_rows_cover_product_form_frames() {
    let mut cfg = config(small_kernels(), vec![16], 1);
    cfg.seeds = vec![3];
    cfg.delta = Some((8, 500));
    let r = marginal_error_study(&cfg).unwrap();
    assert_eq!(r.delta.len() + r.delta_skipped.len(), 3);
    assert_eq!(r.delta[0].t, 0.0);
    assert!(r.delta.iter().all(|d| d.ci[0] <= d.mean && d.mean <= d.ci[1]));
}

#[test]
fn misaligned_bins_are_refused() {
    let mut cfg = config(Kernels::zero(1), vec![16], 1);
    cfg.bins = Some(GridSpec::new(1, 16, 16, 8.0).unwrap());
    assert_eq!(marginal_error_study(&cfg).unwrap_err(), ChaosError::BinsMisaligned);
    cfg.bins = Some(cfg.psi0.grid);
    assert!(marginal_error_study(&cfg).is_ok());
}

#[test]
fn study_is_reproducible() {
    let cfg = config(small_kernels(), vec![32], 2);
    assert_eq!(marginal_error_study(&cfg).unwrap(), marginal_error_study(&cfg).unwrap());
}

#[test]
fn circle_w1_is_rotation_invariant() {
    let xs = [0.05, 0.3, 0.42, 0.9];
    let ws = [1.0, 2.0, 0.5, 1.5];
    let cells = [1.0, 3.0, 2.0, 1.0, 0.5, 0.5, 1.0, 1.0];
    let base = circle_w1(&xs, &ws, &cells);
    // Rotating by one cell on both sides leaves the distance unchanged.
    let shifted: Vec<f64> = xs.iter().map(|x| (x + 0.125) % 1.0).collect();
    let mut rolled = cells.to_vec();
    rolled.rotate_right(1);
    assert!((circle_w1(&shifted, &ws, &rolled) - base).abs() < 1e-12);
}
