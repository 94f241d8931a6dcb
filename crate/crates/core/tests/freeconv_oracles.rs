use approx::assert_abs_diff_eq;
use isofisher::freeconv::{
    free_mult_conv_two_atom, max_support_track, mean_track, propagate_schedule, solve_three_layer,
    ConvGrid, LayerSchedule, ThreeLayerParams, TwoAtomJacobianLaw,
};
use isofisher::specmeasure::{
    atom_weight_from_cauchy, default_atom_eps_sequence, distance_l1, moment, stieltjes_invert,
    GridDensity, SpectralMeasure,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Analytic Cauchy transform of `ν̃₂ ⊠ (1 + γ₁ ·)_* ν̃₁`, picking the root with
/// negative imaginary part.
fn analytic_g(alpha1: f64, alpha2: f64, gamma1: f64, z: Complex64) -> Complex64 {
    let s = |x: f64| x.sqrt();
    let u = s(alpha1 * (1.0 - alpha2));
    let v = s(alpha2 * (1.0 - alpha1));
    let lm = 1.0 + gamma1 * (u - v).powi(2);
    let lp = 1.0 + gamma1 * (u + v).powi(2);
    let f = (lp - z) * (z - lm);
    let g = (z - 1.0) * (z - 2.0 * (1.0 + gamma1) * alpha2) - gamma1 * (alpha1 - alpha2) * z;
    let den = 2.0 * (z - 1.0) * (1.0 + gamma1 - z);
    let base = (1.0 + g / den) / z;
    let root = (-f).sqrt() / den;
    let (a, b) = (base + root, base - root);
    if a.im < b.im {
        a
    } else {
        b
    }
}

/// `G_{μ_3}` for unit `q`, `σ` via `μ_3 = (1 + γ₂ ·)_* (ν̃₂ ⊠ ξ)`.
fn analytic_mu3(alpha1: f64, alpha2: f64, gamma1: f64, gamma2: f64) -> impl Fn(Complex64) -> Complex64 {
    move |z| analytic_g(alpha1, alpha2, gamma1, (z - 1.0) / gamma2) / gamma2
}

#[test]
fn inversion_of_analytic_transform_gives_arcsine() {
    let g = analytic_mu3(0.5, 0.5, 1.0, 1.0);
    let d = stieltjes_invert(g, (2.0, 3.0), 2048, None).unwrap();
    let exact = |x: f64| {
        let p = (x - 2.0) * (3.0 - x);
        if p > 0.0 {
            1.0 / (2.0 * PI * p.sqrt())
        } else {
            0.0
        }
    };
    // compare away from the integrable edge singularities
    for (x, v) in d.nodes().zip(d.values()) {
        if x > 2.05 && x < 2.95 {
            assert!((v - exact(x)).abs() < 1e-3 * exact(x).max(1.0), "x={x} got {v} want {}", exact(x));
        }
    }
}

#[test]
fn analytic_atom_weights() {
    let g = analytic_mu3(0.75, 0.75, 1.0, 1.0);
    let eps = default_atom_eps_sequence(1.0);
    assert_abs_diff_eq!(atom_weight_from_cauchy(&g, 3.0, &eps), 0.5, epsilon = 1e-4);
    assert_abs_diff_eq!(atom_weight_from_cauchy(&g, 1.0, &eps), 0.25, epsilon = 1e-4);
    assert_eq!(atom_weight_from_cauchy(&g, 2.0, &eps), 0.0);

    let g = analytic_mu3(0.3, 0.8, 1.0, 1.0);
    assert_abs_diff_eq!(atom_weight_from_cauchy(&g, 2.0, &eps), 0.5, epsilon = 1e-4);
}

#[test]
fn closed_form_matches_analytic_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let (a1, a2) = (rng.random_range(0.3..0.99), rng.random_range(0.3..0.99));
        let (g1, g2) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let mut p = ThreeLayerParams::unit(a1, a2);
        p.gamma1 = g1;
        p.gamma2 = g2;
        let closed = solve_three_layer(&p, 2048).unwrap();
        let g = analytic_mu3(a1, a2, g1, g2);
        let (lm, lp) = p.lambda_pm();
        let inverted = stieltjes_invert(&g, (lm, lp), 2048, None).unwrap();
        let cont = closed.density().unwrap();
        let scale = cont.values().iter().cloned().fold(0.0, f64::max);
        for (x, v) in inverted.nodes().zip(inverted.values()) {
            let t = (x - lm) / (lp - lm);
            if t > 0.05 && t < 0.95 {
                assert!((v - p.density(x)).abs() < 2e-3 * scale, "a=({a1},{a2}) x={x}");
            }
        }
    }
}

#[test]
fn general_parameters_reduce_to_unit_form() {
    // γ₁' = σ₂²γ₁q₀/q₁ and an outer map (q₂ + σ₃²γ₂q₁ ·)
    let p = ThreeLayerParams {
        q0: 1.3,
        q1: 0.7,
        q2: 0.9,
        sigma2: 1.1,
        sigma3: 0.8,
        alpha1: 0.6,
        alpha2: 0.7,
        gamma1: 1.4,
        gamma2: 0.9,
    };
    let g1 = p.sigma2.powi(2) * p.gamma1 * p.q0 / p.q1;
    let a = p.sigma3.powi(2) * p.gamma2 * p.q1;
    let g = |z: Complex64| analytic_g(p.alpha1, p.alpha2, g1, (z - p.q2) / a) / a;
    let (lm, lp) = p.lambda_pm();
    for k in 1..20 {
        let x = lm + (lp - lm) * k as f64 / 20.0;
        let rho = -g(Complex64::new(x, 1e-10)).im / PI;
        assert_abs_diff_eq!(rho, p.density(x), epsilon = 1e-6 * p.density(x).max(1.0));
    }
}

#[test]
fn recursion_matches_closed_form_on_random_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid = ConvGrid::default();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (a1, a2) = (rng.random_range(0.3..0.99), rng.random_range(0.3..0.99));
        let (g1, g2) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let laws = vec![
            TwoAtomJacobianLaw::new(a1, g1).unwrap(),
            TwoAtomJacobianLaw::new(a2, g2).unwrap(),
        ];
        let schedule = LayerSchedule::new(vec![1.0; 3], vec![1.0; 3], laws).unwrap();
        let (ms, stats) = propagate_schedule(&schedule, &grid).unwrap();
        assert!(stats.iter().all(|s| s.flagged == 0));
        let mut p = ThreeLayerParams::unit(a1, a2);
        p.gamma1 = g1;
        p.gamma2 = g2;
        let closed = solve_three_layer(&p, 2048).unwrap();
        let bin = (p.lambda_max() - p.lambda_min()) / 100.0;
        let d = distance_l1(&ms[2], &closed, bin).unwrap();
        worst = worst.max(d);
        assert!(d < 1e-2, "a=({a1},{a2}) g=({g1},{g2}) L1 = {d}");
    }
    println!("worst L1 = {worst}");
}

#[test]
fn two_layer_example_from_previous_measure() {
    let mu2 = SpectralMeasure::from_atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
    let law = TwoAtomJacobianLaw::new(0.5, 1.0).unwrap();
    let (mu3, _) = isofisher::freeconv::propagate_layer(&mu2, law, 1.0, 1.0, &ConvGrid::default()).unwrap();
    let closed = solve_three_layer(&ThreeLayerParams::unit(0.5, 0.5), 2048).unwrap();
    assert!(distance_l1(&mu3, &closed, 0.01).unwrap() < 1e-2);
}

#[test]
fn largest_atom_follows_max_track() {
    let laws: Vec<_> = [0.97, 0.95, 0.99, 0.96, 0.98]
        .iter()
        .zip([1.1, 0.9, 1.0, 1.05, 0.95])
        .map(|(a, g)| TwoAtomJacobianLaw::new(*a, g).unwrap())
        .collect();
    let schedule = LayerSchedule::new(vec![1.0, 0.9, 1.1, 1.0, 0.8, 1.2], vec![1.0, 1.05, 0.95, 1.0, 1.0, 1.02], laws).unwrap();
    let (ms, _) = propagate_schedule(&schedule, &ConvGrid::default()).unwrap();
    let track = max_support_track(&schedule);
    for (l, m) in ms.iter().enumerate() {
        let (x, w) = m.largest_atom().unwrap();
        assert_abs_diff_eq!(x, track.lambda[l], epsilon = 1e-6);
        assert_abs_diff_eq!(w, track.beta[l], epsilon = 1e-2);
        assert!(m.support_max() <= track.lambda[l] + 1e-6);
    }
    let means = mean_track(&schedule);
    for (m, expected) in ms.iter().zip(means) {
        assert_abs_diff_eq!(moment(m, 1), expected, epsilon = 1e-3);
    }
}

fn arcsine_measure(lo: f64, width: f64, atom: f64) -> SpectralMeasure {
    let hi = lo + width;
    let d = GridDensity::from_interval_mass(lo, hi, 512, |a, b| {
        let cdf = |x: f64| (2.0 / PI) * ((x - lo) / width).clamp(0.0, 1.0).sqrt().asin();
        (1.0 - atom) * (cdf(b) - cdf(a))
    })
    .unwrap();
    SpectralMeasure::new(vec![(hi, atom)], Some(d)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mean_multiplicative_and_support_bounded(
        lo in 0.2f64..2.0,
        width in 0.2f64..2.0,
        atom in 0.0f64..0.6,
        alpha in 0.3f64..0.99,
        gamma in 0.5f64..2.0,
    ) {
        let mu = arcsine_measure(lo, width, atom);
        let law = TwoAtomJacobianLaw::new(alpha, gamma).unwrap();
        let (conv, _) = free_mult_conv_two_atom(&mu, law, &ConvGrid::with_grid_count(1024)).unwrap();
        prop_assert!((moment(&conv, 1) - moment(&mu, 1) * alpha * gamma).abs() < 1e-3);
        prop_assert!(conv.support_max() <= mu.support_max() * gamma + 1e-6);
        prop_assert!((conv.total_mass() - 1.0).abs() < 1e-6);
    }
}
