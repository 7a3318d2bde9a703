use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vesselgen::baselines::{fit_gaussian, pca_fit, sample_pca_decoupled, sample_pca_gaussian, PcaModel};
use vesselgen::geometry::RadialProfile;

fn random_data(k: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // correlated: a few latent factors plus small isotropic noise
    let factors: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..k)
        .map(|_| {
            let z: Vec<f64> = (0..3).map(|f| { let e: f64 = StandardNormal.sample(&mut rng); (3 - f) as f64 * e }).collect();
            (0..d)
                .map(|j| 5.0 + (0..3).map(|f| z[f] * factors[f][j]).sum::<f64>() + 0.1 * rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect()
}

/// Textbook two-pass covariance, entry by entry.
fn two_pass_cov(data: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = data.len() as f64;
    let d = data[0].len();
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / k).collect();
    let cov = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| data.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (k - 1.0))
                .collect()
        })
        .collect();
    (mean, cov)
}

#[test]
fn gaussian_matches_two_pass_oracle() {
    let data = random_data(100, 7, 1);
    let g = fit_gaussian(&data).unwrap();
    let (mean, cov) = two_pass_cov(&data);
    for j in 0..7 {
        assert!((g.mean[j] - mean[j]).abs() < 1e-10);
        for i in 0..7 {
            assert!((g.covariance[i][j] - cov[i][j]).abs() < 1e-10);
            assert!((g.covariance[i][j] - g.covariance[j][i]).abs() <= 1e-12);
        }
    }
    let l = g.factor_matrix();
    for i in 0..7 {
        for j in i + 1..7 {
            assert_eq!(l[(i, j)], 0.0, "factor must be lower triangular");
        }
    }
    let err = (&l * l.transpose() - g.covariance_matrix() - DMatrix::identity(7, 7) * g.jitter).abs().max();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn rank_deficient_covariance_gets_jitter() {
    // 5 samples in 12 dimensions: rank ≤ 4
    let data = random_data(5, 12, 2);
    let g = fit_gaussian(&data).unwrap();
    assert!(g.jitter > 0.0);
    let trace: f64 = (0..12).map(|i| g.covariance[i][i]).sum();
    assert!(g.jitter >= 1e-10 * trace / 12.0 * (1.0 - 1e-12));
    let l = g.factor_matrix();
    let err = (&l * l.transpose() - g.covariance_matrix() - DMatrix::identity(12, 12) * g.jitter).abs().max();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn pca_reconstructs_training_samples() {
    let k = 12;
    let data = random_data(k, 30, 3);
    let pca = pca_fit(&data, Some(k - 1)).unwrap();
    assert_eq!(pca.num_modes(), k - 1);
    for v in &data {
        let a = pca.project(v).unwrap();
        let back = pca.reconstruct(&a).unwrap();
        let err = v.iter().zip(&back).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!(pca.subspace_distance(v).unwrap() < 1e-8);
    }
    let u = pca.basis();
    let gram = u.transpose() * &u;
    assert!((gram - DMatrix::identity(k - 1, k - 1)).abs().max() < 1e-8);
    assert!(pca.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn pca_eigenvalues_match_covariance_eigendecomposition() {
    let data = random_data(25, 10, 4);
    let pca = pca_fit(&data, None).unwrap();
    // min(K, 21) = 21 requested, capped at D = 10
    assert_eq!(pca.num_modes(), 10);
    let (_, cov) = two_pass_cov(&data);
    let c = DMatrix::from_fn(10, 10, |i, j| cov[i][j]);
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in pca.eigenvalues.iter().zip(&ev) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn default_mode_count() {
    let data = random_data(30, 40, 5);
    assert_eq!(pca_fit(&data, None).unwrap().num_modes(), 21);
    let small = random_data(8, 40, 5);
    // 8 requested, rank bound 7
    assert_eq!(pca_fit(&small, None).unwrap().num_modes(), 7);
    assert!(pca_fit(&data[..1], None).unwrap_err().is_validation());
}

#[test]
fn reconstruction_is_affine_in_coefficients() {
    let pca = pca_fit(&random_data(20, 15, 6), Some(5)).unwrap();
    let zero = vec![0.0; 5];
    assert_eq!(pca.reconstruct(&zero).unwrap(), pca.mean);
    for t in [-2.0, 0.5, 3.0] {
        let mut a = zero.clone();
        a[0] = t;
        let v = pca.reconstruct(&a).unwrap();
        for j in 0..15 {
            assert!((v[j] - pca.mean[j] - t * pca.modes[0][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn generated_coefficients_follow_fitted_covariance() {
    let pca = pca_fit(&random_data(40, 20, 7), Some(6)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shapes = sample_pca_gaussian(&pca, 5000, &mut rng);
    let coeffs: Vec<Vec<f64>> = shapes.iter().map(|v| pca.project(v).unwrap()).collect();
    let (mean, cov) = two_pass_cov(&coeffs);
    let target = pca.gaussian.covariance_matrix();
    let emp = DMatrix::from_fn(6, 6, |i, j| cov[i][j]);
    let rel = (&emp - &target).norm() / target.norm();
    assert!(rel < 0.1, "relative Frobenius error {rel}");
    for (m, t) in mean.iter().zip(&pca.gaussian.mean) {
        assert!((m - t).abs() < 0.1 * target.norm().sqrt());
    }
    for v in shapes.iter().take(50) {
        assert!(pca.subspace_distance(v).unwrap() < 1e-8);
    }
}

#[test]
fn subspace_distance_matches_pythagoras_and_normal_equations() {
    let pca = pca_fit(&random_data(10, 25, 9), None).unwrap();
    let u = pca.basis();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // a unit vector orthogonal to span(U)
    let r = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
    let n = &r - &u * (u.transpose() * &r);
    let n = n.normalize();
    let a: Vec<f64> = (0..pca.num_modes()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let inside = pca.reconstruct(&a).unwrap();
    for delta in [0.0, 0.3, 7.5] {
        let v: Vec<f64> = inside.iter().zip(n.iter()).map(|(x, e)| x + delta * e).collect();
        assert!((pca.subspace_distance(&v).unwrap() - delta).abs() < 1e-10);
    }
    for _ in 0..5 {
        let v: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..10.0)).collect();
        let ours = pca.subspace_distance(&v).unwrap();
        assert!((ours - normal_equations(&pca, &v)).abs() < 1e-10);
    }
}

/// Residual of min_a ‖(v − v̄) − U a‖ via `UᵀU a = Uᵀ r`.
fn normal_equations(pca: &PcaModel, v: &[f64]) -> f64 {
    let u = pca.basis();
    let r = DVector::from_iterator(v.len(), v.iter().zip(&pca.mean).map(|(x, m)| x - m));
    let a = (u.transpose() * &u).lu().solve(&(u.transpose() * &r)).unwrap();
    (r - u * a).norm()
}

fn tube_latents(k: usize, n: usize, m: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cls = Vec::new();
    let mut rads = Vec::new();
    for _ in 0..k {
        let bend = rng.random_range(0.5..1.5);
        let width = rng.random_range(0.8..1.2);
        cls.push(
            (0..n)
                .flat_map(|i| {
                    let s = i as f64 / (n - 1) as f64;
                    [width * 3.0 * (std::f64::consts::PI * s).cos(), 0.2 * bend * s, 3.0 * bend * (std::f64::consts::PI * s).sin()]
                })
                .collect(),
        );
        let r0 = rng.random_range(0.8..1.2);
        rads.push((0..n * m).map(|q| r0 * (1.0 - 0.2 * (q / m) as f64 / n as f64) + 0.02 * rng.random_range(-1.0..1.0)).collect());
    }
    (cls, rads)
}

#[test]
fn decoupled_draws_are_independent_and_decode() {
    let (n, m) = (6, 8);
    let (cls, rads) = tube_latents(20, n, m, 11);
    let cl = pca_fit(&cls, None).unwrap();
    let rad = pca_fit(&rads, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let lats = sample_pca_decoupled(&cl, &rad, m, 5000, 1e-3, &mut rng).unwrap();
    let a_c: Vec<f64> = lats.iter().map(|l| cl.project(&l.flatten_centerline()).unwrap()[0]).collect();
    let a_r: Vec<f64> = lats.iter().map(|l| rad.project(&l.radii.radii).unwrap()[0]).collect();
    let corr = correlation(&a_c, &a_r);
    assert!(corr.abs() < 0.05, "{corr}");
    for l in lats.iter().take(20) {
        let mesh = l.mesh(24, 16).unwrap();
        assert!(mesh.vertices.iter().all(|p| p.is_finite()));
    }
    // zero draws decode the mean latents
    let zc = cl.reconstruct(&vec![0.0; cl.num_modes()]).unwrap();
    let zr = rad.reconstruct(&vec![0.0; rad.num_modes()]).unwrap();
    assert_eq!(zc, cl.mean);
    RadialProfile::new(n, m, zr).unwrap();
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn sampling_is_seed_deterministic_and_models_round_trip() {
    let pca = pca_fit(&random_data(15, 9, 13), None).unwrap();
    let a = sample_pca_gaussian(&pca, 10, &mut ChaCha8Rng::seed_from_u64(1));
    let b = sample_pca_gaussian(&pca, 10, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a, b);
    let dir = std::env::temp_dir().join(format!("pca-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("pca.json");
    pca.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["mean", "modes", "eigenvalues", "gaussian"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(PcaModel::load(&path).unwrap(), pca);
    std::fs::remove_dir_all(&dir).ok();
}
