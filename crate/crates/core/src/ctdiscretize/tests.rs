use super::*;
use crate::kernels::{validate_kernel, MarkovKernel};
use crate::montecarlo::{drawdowns, estimate_mass_loss, terminal_mean, DrawdownSpec};
use crate::rng::path_rng;
use crate::special::normal_cdf;

#[test]
fn atom_weight_matches_closed_form() {
    let k = InverseBessel::new(1.0, 1.0).unwrap();
    // Φ(−1/2).
    assert!((k.atom_weight(1.0) - 0.308_537_538_725_986_9).abs() < 1e-12);
}

#[test]
fn cdf_limits() {
    let k = InverseBessel::new(1.0, 1.0).unwrap();
    assert_eq!(k.cdf(1.0, 0.0), 0.0);
    assert!(k.cdf(1.0, 1e-3) < 1e-100);
    let below_top = k.cdf(1.0, 2.0 * (1.0 - 1e-12));
    assert!((below_top - (1.0 - normal_cdf(-0.5))).abs() < 1e-10);
    assert_eq!(k.cdf(1.0, 2.0), 1.0);
}

#[test]
fn quadrature_cdf_matches_closed_form() {
    for &(x, alpha, beta) in &[(1.0, 1.0, 1.0), (0.5, 0.25, 3.0), (2.0, 4.0, 0.5)] {
        let k = InverseBessel::new(alpha, beta).unwrap();
        let top = k.barrier(x);
        let mut last = 0.0;
        for i in 1..40 {
            let z = top * i as f64 / 40.0;
            let q = bessel_cdf(x, alpha, beta, z).unwrap();
            assert!(q.remainder_bound <= 1e-14);
            assert!(
                (q.value - k.cdf(x, z)).abs() < 1e-10,
                "(x, α, β, z) = ({x}, {alpha}, {beta}, {z})"
            );
            assert!(q.value >= last - 1e-15);
            last = q.value;
        }
    }
}

#[test]
fn density_is_the_derivative_of_the_cdf() {
    let k = InverseBessel::new(1.0, 1.0).unwrap();
    for i in 1..60 {
        let z = 0.2 + 1.75 * i as f64 / 60.0;
        let h = 1e-5;
        let fd = (k.cdf(1.0, z + h) - k.cdf(1.0, z - h)) / (2.0 * h);
        assert!((fd - k.density(1.0, z)).abs() < 1e-6, "z = {z}");
    }
}

#[test]
fn kernel_is_a_martingale_on_a_parameter_grid() {
    for &alpha in &[0.25, 1.0, 4.0] {
        for &beta in &[0.5, 1.0, 3.0] {
            let k = InverseBessel::new(alpha, beta).unwrap();
            validate_kernel(&k, &[0.5, 1.0, 2.0], 1e-8).unwrap();
        }
    }
}

#[test]
fn large_barrier_keeps_mean_one() {
    let k = InverseBessel::new(1.0, 1e4).unwrap();
    assert!(k.atom_weight(1.0) < 1e-3);
    validate_kernel(&k, &[1.0], 1e-8).unwrap();
}

#[test]
fn forced_low_uniform_jumps_to_barrier() {
    let k = InverseBessel::new(1.0, 1.0).unwrap();
    assert_eq!(k.sample_with_uniform(1.0, 0.3).unwrap(), 2.0);
    let z = k.sample_with_uniform(1.0, 0.5).unwrap();
    assert!(z < 2.0);
    assert!((k.cdf(1.0, z) - (0.5 - k.atom_weight(1.0))).abs() < 1e-10);
}

#[test]
fn quantile_inverts_cdf() {
    let k = InverseBessel::new(0.5, 2.0).unwrap();
    let top = k.cdf(3.0, k.barrier(3.0) * (1.0 - 1e-12));
    for i in 1..50 {
        let t = top * i as f64 / 50.0;
        let z = k.quantile(3.0, t).unwrap();
        assert!((k.cdf(3.0, z) - t).abs() < 1e-9, "t = {t}");
    }
    assert!(k.quantile(3.0, top + 1e-6).is_err());
}

#[test]
fn sampled_jump_frequency_and_mean() {
    let k = InverseBessel::new(1.0, 1.0).unwrap();
    let mut rng = path_rng(2024, 0);
    let n = 200_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| sample_bessel_step(1.0, 1.0, 1.0, &mut rng).unwrap())
        .collect();
    let p = k.atom_weight(1.0);
    let jumps = draws.iter().filter(|&&z| z == 2.0).count() as f64 / n as f64;
    assert!((jumps - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 1.0).abs() < 4.0 * (var / n as f64).sqrt());
    let d = ks_one_sample(&draws, |z| {
        if z >= 2.0 {
            (1.0 - p, 1.0)
        } else {
            let f = k.cdf(1.0, z);
            (f, f)
        }
    });
    assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
}

#[test]
fn ks_statistics_on_known_samples() {
    assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
    assert!((ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
    let d = ks_one_sample(&[0.5, 0.5], |z| if z >= 0.5 { (0.0, 1.0) } else { (0.0, 0.0) });
    assert_eq!(d, 0.0);
}

#[test]
fn reciprocal_bessel_mean_calibration() {
    let driver = Driver::InverseBessel {};
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|i| sample_driver_at(&driver, 1.0, 1.0, 1e-4, &mut path_rng(5, i)))
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let expected = 2.0 * normal_cdf(1.0) - 1.0;
    assert!(
        (mean - expected).abs() < 4.0 * (var / n as f64).sqrt(),
        "{mean} vs {expected}"
    );
}

#[test]
fn sde_first_step_matches_kernel() {
    let schedule = Schedule::RelativeBarrier { alpha: 1.0, beta: 1.0 };
    let n = 20_000;
    let sde = discretize_sde_path(
        &Driver::InverseBessel {},
        &schedule,
        1.0,
        1,
        n,
        8,
        &SdeOptions::default(),
    )
    .unwrap();
    let from_sde: Vec<f64> = sde.batch.paths.iter().map(|p| p[1]).collect();
    let kernel = InverseBessel::new(1.0, 1.0).unwrap();
    let mut rng = path_rng(9, 0);
    let from_kernel: Vec<f64> = (0..n).map(|_| kernel.sample_step(1.0, &mut rng).unwrap()).collect();
    let d = ks_two_sample(&from_sde, &from_kernel);
    assert!(d < 0.02, "two-sample KS distance {d}");
    assert_eq!(sde.exploded_paths, 0);
}

#[test]
fn time_cap_dominates_for_huge_barrier() {
    let driver = Driver::GeometricBrownian { sigma: 0.3 };
    let schedule = Schedule::RelativeBarrier { alpha: 0.01, beta: 1e6 };
    let sde = discretize_sde_path(&driver, &schedule, 1.0, 50, 4000, 4, &SdeOptions::default()).unwrap();
    assert_eq!(sde.barrier_hits, 0);
    // Without hits, S_50 = X_{0.5}, log-normal with variance 0.09 · 0.5.
    let logs: Vec<f64> = sde.batch.paths.iter().map(|p| p[50].ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean + 0.0225).abs() < 4.0 * (0.045f64 / n).sqrt());
    assert!((var - 0.045).abs() < 0.005);
}

#[test]
fn geometric_brownian_loses_no_mass_under_deterministic_barriers() {
    let driver = Driver::GeometricBrownian { sigma: 0.5 };
    let schedule = Schedule::deterministic(1.5);
    let sde = discretize_sde_path(&driver, &schedule, 1.0, 20, 20_000, 6, &SdeOptions::default()).unwrap();
    let record = drawdowns(&sde.batch, &DrawdownSpec::default()).unwrap();
    let est = estimate_mass_loss(&record, 1).unwrap();
    assert!(est.agrees_with(0.0, 4.0, 0.0), "{est:?}");
    assert!(terminal_mean(&record).agrees_with(1.0, 5.0, 0.0));
}

#[test]
fn cev_paths_stay_nonnegative_and_finite() {
    let driver = Driver::Cev {
        sigma: 0.5,
        exponent: 1.5,
    };
    let schedule = Schedule::RelativeBarrier { alpha: 0.5, beta: 1.0 };
    let opts = SdeOptions {
        substep: Some(1e-3),
        ..SdeOptions::default()
    };
    let sde = discretize_sde_path(&driver, &schedule, 1.0, 5, 500, 1, &opts).unwrap();
    for path in &sde.batch.paths {
        assert!(path.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(path.windows(2).all(|w| w[1] <= 2.0 * w[0] + 1e-12));
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(InverseBessel::new(0.0, 1.0).is_err());
    assert!(bessel_cdf(1.0, 1.0, 1.0, 2.5).is_err());
    let bad = Schedule::DeterministicBarrier {
        times: Sequence::Explicit { values: vec![1.0, 0.5] },
        levels: Sequence::Linear { step: 1.0 },
    };
    assert!(discretize_sde_path(&Driver::InverseBessel {}, &bad, 1.0, 2, 1, 0, &SdeOptions::default()).is_err());
    assert!(Driver::GeometricBrownian { sigma: -1.0 }.validate().is_err());
}

#[test]
fn bessel_report_shows_positive_mass_loss() {
    let report = bessel_bubble_report(1.0, 1.0, 1.0, 60, 20_000, 12).unwrap();
    let loss = &report.mass_loss;
    assert!(loss.value > 4.0 * loss.std_error, "{loss:?}");
    assert_eq!(report.mass_loss_ladder.last().unwrap().n, 60);
}
