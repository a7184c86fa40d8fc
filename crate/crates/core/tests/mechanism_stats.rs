use rand::seq::SliceRandom;
use rand::Rng;
use sanitizer_core::data::{generate_synthetic, SENSITIVE_ATTR};
use sanitizer_core::math::{standard_normal_vec, Matrix, RngStream};
use sanitizer_core::mechanisms::{
    dp_obfuscate, fit_dp_gmm, pixel_noise, sample_dp_gmm, sanitize_dataset, ClassGaussian, GaussianClassModel,
};
use sanitizer_core::{DecouplerConfig, DecouplerModel, LabeledDataset, MechanismConfig, MechanismKind, PrivacyBudget, SynthConfig};

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

#[test]
fn obfuscation_noise_matches_laplace_variance() {
    let budget = PrivacyBudget::with_epsilon(1.0);
    let mut rng = RngStream::new(0, 0);
    let mut noise = Vec::with_capacity(1_000_000);
    for _ in 0..125_000 {
        noise.extend(dp_obfuscate(&[0.0; 8], &budget, &mut rng).unwrap());
    }
    let want = 2.0 * (8.0f64 * 6.0 / 1.0).powi(2);
    assert_eq!(want, 4608.0);
    let got = variance(&noise);
    assert!((got / want - 1.0).abs() < 0.02, "variance {got}");
}

#[test]
fn pixel_noise_std_before_clamping() {
    let x = vec![0.5; 100_000];
    let out = pixel_noise(&x, 0.1, &mut RngStream::new(1, 0)).unwrap();
    // 5σ from either bound, so clamping is negligible
    let std = variance(&out).sqrt();
    assert!((std / 0.1 - 1.0).abs() < 0.02, "std {std}");
    let wide = pixel_noise(&x, 3.0, &mut RngStream::new(1, 0)).unwrap();
    assert!(wide.iter().all(|v| (0.0..=1.0).contains(v)));
}

/// Two isotropic clusters in 8 dimensions at `±1` along the first axis.
fn two_clusters(n: usize, rng: &mut RngStream) -> (Matrix, Vec<usize>) {
    let mut z = Matrix::zeros(n, 8);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let noise = standard_normal_vec(8, rng);
        for (j, v) in z.row_mut(i).iter_mut().enumerate() {
            let centre = if j == 0 { 2.0 * c as f64 - 1.0 } else { 0.0 };
            *v = centre + 0.3 * noise[j];
        }
        labels.push(c);
    }
    (z, labels)
}

/// Projected per-class mean and population covariance.
fn projected_moments(z: &Matrix, labels: &[usize], class: usize, w: &Matrix) -> (Vec<f64>, Matrix) {
    let rows: Vec<usize> = (0..z.rows()).filter(|&i| labels[i] == class).collect();
    let proj = z.select_rows(&rows).matmul(&w.transpose()).unwrap();
    let mean = proj.col_means();
    let p = w.rows();
    let mut cov = Matrix::zeros(p, p);
    for r in 0..proj.rows() {
        let v = proj.row(r);
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] += (v[a] - mean[a]) * (v[b] - mean[b]);
            }
        }
    }
    (mean, cov.scale(1.0 / proj.rows() as f64))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn high_epsilon_gmm_matches_empirical_moments() {
    let (z, labels) = two_clusters(2000, &mut RngStream::new(2, 0));
    let budget = PrivacyBudget::with_epsilon(1e6);
    let model = fit_dp_gmm(&z, &labels, 2, &budget, 4, &RngStream::new(2, 1)).unwrap();
    assert_eq!(model.epsilon_spent, 1e6);
    for c in 0..2 {
        let (mean, cov) = projected_moments(&z, &labels, c, &model.projection);
        assert!(max_diff(&model.classes[c].mean, &mean) < 0.05, "class {c} mean");
        assert!(cov.zip_map(&model.classes[c].cov, |a, b| a - b).frobenius() < 0.1, "class {c} cov");
    }

    let (draws, drawn) = sample_dp_gmm(&model, 20_000, &mut RngStream::new(2, 2)).unwrap();
    for c in 0..2 {
        let (src_mean, src_cov) = projected_moments(&z, &labels, c, &model.projection);
        let (syn_mean, syn_cov) = projected_moments(&draws, &drawn, c, &model.projection);
        assert!(max_diff(&src_mean, &syn_mean) < 0.05, "class {c} sampled mean");
        assert!(src_cov.zip_map(&syn_cov, |a, b| a - b).frobenius() < 0.1, "class {c} sampled cov");
    }
}

#[test]
fn sampled_label_frequencies_follow_priors() {
    let class = |prior: f64| ClassGaussian {
        mean: vec![0.0; 2],
        cov: Matrix::identity(2),
        prior,
        count: 10,
    };
    let model = GaussianClassModel {
        projection: Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap(),
        classes: vec![class(0.25), class(0.75)],
        clip_radius: 3.0,
        epsilon_spent: 1.0,
        mean_fraction: 0.3,
        cov_fraction: 0.7,
    };
    let (_, labels) = sample_dp_gmm(&model, 100_000, &mut RngStream::new(3, 0)).unwrap();
    let freq = labels.iter().filter(|&&c| c == 0).count() as f64 / 1e5;
    assert!((freq - 0.25).abs() < 0.01, "{freq}");
    let (empty, none) = sample_dp_gmm(&model, 0, &mut RngStream::new(3, 0)).unwrap();
    assert_eq!((empty.rows(), none.len()), (0, 0));
}

fn small_setup() -> (LabeledDataset, DecouplerModel) {
    let cfg = SynthConfig {
        n: 400,
        height: 8,
        width: 8,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg, 4).unwrap();
    let dec = DecouplerConfig {
        encoder_hidden: vec![16],
        decoder_hidden: vec![16],
        ..DecouplerConfig::default()
    };
    let sensitive = vec![data.attribute(SENSITIVE_ATTR).unwrap().clone()];
    let model = DecouplerModel::init(&dec, data.sample_shape, sensitive, &mut RngStream::new(4, 0)).unwrap();
    (data, model)
}

/// Between-class spread of latent rows: Σ_c n_c ‖mean_c − mean‖².
fn class_spread(z: &Matrix, labels: &[usize], classes: usize) -> f64 {
    let overall = z.col_means();
    (0..classes)
        .map(|c| {
            let rows: Vec<usize> = (0..z.rows()).filter(|&i| labels[i] == c).collect();
            if rows.is_empty() {
                return 0.0;
            }
            let m = z.select_rows(&rows).col_means();
            rows.len() as f64 * m.iter().zip(&overall).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum()
}

#[test]
fn dp_sample_rows_are_independent_of_original_labels() {
    let (data, model) = small_setup();
    let out = sanitize_dataset(
        &data,
        Some(&model),
        &MechanismConfig::new(MechanismKind::DpSample),
        &PrivacyBudget::with_epsilon(1.0),
        &RngStream::new(5, 0),
    )
    .unwrap();
    let zs = out.sensitive_latents(model.k()).unwrap();
    let mut labels = data.labels_of(SENSITIVE_ATTR).unwrap();
    let observed = class_spread(&zs, &labels, 4);
    let mut rng = RngStream::new(5, 1);
    let trials = 999;
    let mut as_extreme = 0;
    for _ in 0..trials {
        labels.shuffle(&mut rng);
        if class_spread(&zs, &labels, 4) >= observed {
            as_extreme += 1;
        }
    }
    let p = (as_extreme + 1) as f64 / (trials + 1) as f64;
    assert!(p > 0.01, "permutation p-value {p}");
}

#[test]
fn every_mechanism_is_deterministic_and_preserves_rows() {
    let (data, model) = small_setup();
    let budget = PrivacyBudget::with_epsilon(1.0);
    for kind in MechanismKind::ALL {
        let run = |seed: u64| {
            sanitize_dataset(&data, Some(&model), &MechanismConfig::new(kind), &budget, &RngStream::new(seed, 0)).unwrap()
        };
        let (a, b) = (run(6), run(6));
        assert_eq!(a.data.samples, b.data.samples, "{kind}");
        assert_eq!(a.latents, b.latents, "{kind}");
        assert_eq!(a.synthetic_labels, b.synthetic_labels, "{kind}");
        assert_eq!(a.len(), data.len());
        assert_eq!(a.data.labels, data.labels, "{kind}: labels must be carried over");
        assert!(a.data.samples.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.synthetic_labels.is_some(), kind.emits_labels());
        if kind != MechanismKind::PixelNoise && kind != MechanismKind::Suppress {
            assert_ne!(run(7).data.samples, a.data.samples, "{kind}: seed should matter");
        }
    }
}

#[test]
fn suppression_zeroes_every_sensitive_block() {
    let (data, model) = small_setup();
    let out = sanitize_dataset(
        &data,
        Some(&model),
        &MechanismConfig::new(MechanismKind::Suppress),
        &PrivacyBudget::default(),
        &RngStream::new(8, 0),
    )
    .unwrap();
    let zs = out.sensitive_latents(model.k()).unwrap();
    assert!(zs.data().iter().all(|&v| v == 0.0));
    assert!(out.budget_used.is_none());
}

#[test]
fn vanishing_noise_obfuscation_is_clamped_identity() {
    let budget = PrivacyBudget::with_epsilon(1e9);
    let mut rng = RngStream::new(9, 0);
    let z: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
    let out = dp_obfuscate(&z, &budget, &mut rng).unwrap();
    for (o, v) in out.iter().zip(&z) {
        assert!((o - v.clamp(-3.0, 3.0)).abs() < 1e-3);
    }
}
