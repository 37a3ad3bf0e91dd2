//! Values computed independently (numpy / scipy) and frozen here.

use lbi_core::autoencoder::{Image, ImageShape};
use lbi_core::denoiser::LinearGaussianDenoiser;
use lbi_core::dynamics::Sampler;
use lbi_core::lbo::{self, LboConfig};
use lbi_core::metrics::{psnr, ssim, SsimParams};
use lbi_core::NoiseScheduleF64;

fn model() -> (NoiseScheduleF64, LinearGaussianDenoiser<f64>) {
    let s = NoiseScheduleF64::linear(10, 1e-3, 0.1).unwrap();
    let m = LinearGaussianDenoiser::new(s.clone(), vec![0.2, -0.1], vec![1.5, 0.3, 0.3, 0.8]).unwrap();
    (s, m)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn ddim_inversion_and_replay_match_reference() {
    let (s, m) = model();
    let sampler = Sampler::new(&m, &s);
    let grid = s.uniform_grid(5).unwrap();
    let z0 = [0.5, -1.0];
    let inv = sampler.invert_trajectory(&grid, &z0).unwrap();
    let z_top = inv.last().unwrap();
    assert!(
        close(z_top, &[0.5055954740531707, -1.1070961129323407], 1e-13),
        "{z_top:?}"
    );
    let replay = sampler.generate_trajectory(&grid, z_top).unwrap();
    assert!(close(
        replay.last().unwrap(),
        &[0.49875472051273506, -0.9911549102103234],
        1e-13
    ));
}

#[test]
fn lbo_reaches_the_exact_inverse() {
    let (s, m) = model();
    let sampler = Sampler::new(&m, &s);
    let grid = s.uniform_grid(5).unwrap();
    let cfg = LboConfig {
        tol: 1e-13,
        max_iters: 60,
        ..LboConfig::numerical()
    };
    let (traj, reports) = lbo::invert_trajectory(&sampler, &grid, &[0.5, -1.0], &cfg).unwrap();
    assert!(reports.iter().all(|r| r.converged));
    let z_top = traj.last().unwrap();
    assert!(
        close(z_top, &[0.5074069657506174, -1.1172047663115487], 1e-11),
        "{z_top:?}"
    );
}

#[test]
fn ssim_matches_reference_implementation() {
    let shape = ImageShape::new(9, 8, 1);
    let x = Image::new(
        shape,
        (0..9)
            .flat_map(|i| (0..8).map(move |j| ((i * 7 + j * 3) % 10) as f64 / 10.0))
            .collect(),
    )
    .unwrap();
    let y = Image::new(
        shape,
        (0..9)
            .flat_map(|i| (0..8).map(move |j| ((i * i + 2 * j) % 7) as f64 / 7.0))
            .collect(),
    )
    .unwrap();
    let v = ssim(&x, &y, &SsimParams::default()).unwrap();
    assert!((v - 0.3018250848375822).abs() < 1e-12, "{v}");
}

#[test]
fn psnr_hand_value() {
    let shape = ImageShape::new(2, 2, 1);
    let x = Image::filled(shape, 0.5f64);
    let y = Image::new(shape, vec![0.6, 0.4, 0.6, 0.4]).unwrap();
    assert!((psnr(&x, &y, 1.0).unwrap() - 20.0).abs() < 1e-9);
}
