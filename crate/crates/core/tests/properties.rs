use pcbias_core::datagen::{frequency_dataset, frequency_score, gaussian_classes, random_orthogonal, Profile, SpectrumSpec, PAPER_PHASES};
use pcbias_core::linnet::{gd_step_moments, init_network, InitScheme};
use pcbias_core::metrics::{accessibility, critical_principal_components, discriminability, CriticalMode, LeastSquaresClassifier, PredictionTensor};
use pcbias_core::relu2::Relu2Net;
use pcbias_core::rng::seeded;
use pcbias_core::spectra::{covariance, eigendecompose, normalize_features, project_to_top_pcs, zca_whiten};
use pcbias_core::theory::{gradient_check, predict_thm3, predict_thm4};
use pcbias_core::{Dataset, Matrix, SpectralBasis, Vector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn labelled(q: usize, n: usize, seed: u64) -> Dataset {
    let x = gaussian(q, n, seed);
    let labels = (0..n).map(|i| i % 2).collect();
    Dataset::new(x, labels, 2).unwrap()
}

fn small_spec(q: usize, per_class: usize) -> SpectrumSpec {
    let v: Vec<f64> = (1..=q).map(|j| 1.0 / j as f64).collect();
    let signal = (1..=q).map(|j| (j, 0.5 / (j as f64).sqrt())).collect();
    SpectrumSpec { q, profile: Profile::Explicit(v), signal, classes: 2, per_class, rotate: true }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn basis_is_orthonormal_and_reconstructs(q in 2usize..8, extra in 0usize..12, seed in any::<u64>()) {
        let x = gaussian(q, q + extra, seed);
        let sigma = covariance(&x).unwrap();
        let basis = eigendecompose(&sigma).unwrap();
        let u = basis.u();
        let gram = u.transpose() * u - Matrix::identity(q, q);
        prop_assert!(gram.amax() < 1e-10);
        prop_assert!((basis.reconstruct() - &sigma).norm() / sigma.norm() < 1e-8);
        prop_assert!(basis.values().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn whitened_covariance_is_identity(q in 2usize..6, extra in 2usize..20, seed in any::<u64>()) {
        let x = gaussian(q, q + extra, seed);
        let w = zca_whiten(&x, 1e-12).unwrap();
        let basis = SpectralBasis::of_data(&w).unwrap();
        for &d in basis.values() {
            prop_assert!((d - 1.0).abs() < 1e-4, "eigenvalue {}", d);
        }
    }

    #[test]
    fn projection_is_idempotent_and_contracting(q in 2usize..8, n in 1usize..16, seed in any::<u64>(), p_frac in 0.0f64..1.0) {
        let x = gaussian(q, n, seed);
        let basis = SpectralBasis::of_data(&gaussian(q, 3 * q, seed ^ 0x55)).unwrap();
        let p = 1 + (p_frac * (q - 1) as f64) as usize;
        let once = project_to_top_pcs(&x, &basis, p).unwrap();
        let twice = project_to_top_pcs(&once, &basis, p).unwrap();
        prop_assert!((&twice - &once).amax() < 1e-12 * (1.0 + x.amax()));
        prop_assert!(once.norm() <= x.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn outer_scale_matrices_are_exact_identities(seed in any::<u64>(), steps in 0usize..4, depth in 1usize..4) {
        let mut widths = vec![4];
        widths.extend(std::iter::repeat_n(6, depth - 1));
        widths.push(2);
        let mut net = init_network(&widths, InitScheme::Std, seed).unwrap();
        let data = labelled(4, 10, seed ^ 1);
        let moments = data.moments();
        for _ in 0..steps {
            gd_step_moments(&mut net, &moments, 1e-3).unwrap();
        }
        let (b0, _) = net.scale_matrices(0).unwrap();
        let (_, al) = net.scale_matrices(depth).unwrap();
        prop_assert_eq!(b0, Matrix::identity(4, 4));
        prop_assert_eq!(al, Matrix::identity(2, 2));
    }

    #[test]
    fn analytic_gradients_match_finite_differences(w1 in 2usize..17, w2 in 2usize..17, q in 2usize..9, seed in any::<u64>()) {
        let net = init_network(&[q, w1, w2, 3], InitScheme::Std, seed).unwrap();
        let x = gaussian(q, 12, seed ^ 2);
        let data = Dataset::new(x, (0..12).map(|i| i % 3).collect(), 3).unwrap();
        prop_assert!(gradient_check(&net, &data, 1e-4, 40).unwrap() < 1e-6);
    }

    #[test]
    fn thm3_closed_form_matches_iteration(d in 0.0f64..5.0, lr in 1e-4f64..0.05, depth in 1usize..6, t in 0usize..60, seed in any::<u64>()) {
        let w0 = Vector::from_iterator(2, gaussian(2, 1, seed).iter().copied());
        let wopt = Vector::from_iterator(2, gaussian(2, 1, seed ^ 9).iter().copied());
        let c = lr * d * depth as f64;
        let mut w = w0.clone();
        for _ in 0..t {
            w = &w * (1.0 - c) + &wopt * c;
        }
        let closed = predict_thm3(&w0, &wopt, d, lr, depth, t).unwrap().value;
        prop_assert!((closed - &w).amax() < 1e-12 * (1.0 + w.amax()));
    }

    #[test]
    fn thm4_with_constant_history_is_thm3(d in 0.0f64..5.0, lr in 1e-4f64..0.05, depth in 1usize..6, t in 0usize..40, seed in any::<u64>()) {
        let w0 = Vector::from_iterator(3, gaussian(3, 1, seed).iter().copied());
        let wopt = Vector::from_iterator(3, gaussian(3, 1, seed ^ 3).iter().copied());
        let history = vec![Matrix::identity(3, 3) * depth as f64; t];
        let a = predict_thm4(&w0, &wopt, d, lr, &history).unwrap();
        let b = predict_thm3(&w0, &wopt, d, lr, depth, t).unwrap().value;
        prop_assert!((a - b).amax() < 1e-12 * (1.0 + w0.amax() + wopt.amax()));
    }

    #[test]
    fn relu_pairs_partition_and_start_linear(half in 1usize..20, d in 1usize..10, seed in any::<u64>()) {
        let net = Relu2Net::init(2 * half, d, seed, 1.0).unwrap();
        let x = gaussian(d, 8, seed ^ 4);
        let g = net.effective_linear();
        for col in x.column_iter() {
            let xv = col.into_owned();
            for i in 0..half {
                let up = net.w().row(2 * i).dot(&xv.transpose());
                let down = net.w().row(2 * i + 1).dot(&xv.transpose());
                if up != 0.0 {
                    prop_assert_eq!((up >= 0.0) as u8 + (down >= 0.0) as u8, 1);
                }
            }
            let f = net.forward(&xv).unwrap();
            prop_assert!((f - g.dot(&xv)).abs() < 1e-10 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn normalized_features_are_standard(q in 1usize..6, n in 3usize..30, seed in any::<u64>()) {
        let x = gaussian(q, n, seed) * 7.0 + Matrix::from_element(q, n, 3.0);
        let z = normalize_features(&x);
        for row in z.row_iter() {
            let mean = row.sum() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn generators_are_deterministic_per_seed(seed in any::<u64>()) {
        let spec = small_spec(4, 6);
        prop_assert_eq!(gaussian_classes(&spec, seed).unwrap(), gaussian_classes(&spec, seed).unwrap());
        let kappa: Vec<f64> = (0..10).map(f64::from).collect();
        prop_assert_eq!(
            frequency_dataset(&kappa, &PAPER_PHASES, 50, seed).unwrap(),
            frequency_dataset(&kappa, &PAPER_PHASES, 50, seed).unwrap()
        );
    }

    #[test]
    fn frequency_labels_follow_the_sign_rule(seed in any::<u64>()) {
        let kappa: Vec<f64> = (0..10).map(f64::from).collect();
        let data = frequency_dataset(&kappa, &PAPER_PHASES, 200, seed).unwrap();
        for i in 0..data.len() {
            let score = frequency_score(&kappa, &PAPER_PHASES, data.x()[(0, i)]);
            prop_assert_eq!(data.labels()[i], (score > 0.0) as usize);
        }
    }

    #[test]
    fn accessibility_ignores_member_and_epoch_order(members in 1usize..5, epochs in 1usize..6, n in 1usize..10, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mut rows: Vec<Vec<Vec<bool>>> = (0..members)
            .map(|_| (0..epochs).map(|_| (0..n).map(|_| rand::Rng::random(&mut rng)).collect()).collect())
            .collect();
        let base = accessibility(&PredictionTensor::new(&rows).unwrap());
        rows.shuffle(&mut rng);
        for member in &mut rows {
            member.shuffle(&mut rng);
        }
        let permuted = accessibility(&PredictionTensor::new(&rows).unwrap());
        for (a, b) in base.iter().zip(&permuted) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn critical_component_is_minimal(seed in any::<u64>()) {
        let train = gaussian_classes(&small_spec(6, 20), seed).unwrap();
        let eval = gaussian_classes(&small_spec(6, 8), seed ^ 7).unwrap();
        let basis = SpectralBasis::of_data(train.x()).unwrap();
        let found = critical_principal_components(&train, &basis, &eval, 6, CriticalMode::FitOnce).unwrap();
        let clf = LeastSquaresClassifier::fit(&train).unwrap();
        let sweep: Vec<Vec<usize>> = (1..=6).map(|p| clf.predict(&project_to_top_pcs(eval.x(), &basis, p).unwrap())).collect();
        for (i, crit) in found.iter().enumerate() {
            let first = (1..=6).find(|&p| sweep[p - 1][i] == eval.labels()[i]);
            prop_assert_eq!(*crit, first);
        }
    }

    #[test]
    fn discriminability_survives_isometries(seed in any::<u64>(), k in 1usize..6) {
        let data = labelled(3, 24, seed);
        let rot = random_orthogonal(3, &mut seeded(seed ^ 11));
        let shift = gaussian(3, 1, seed ^ 12);
        let mut moved = &rot * data.x();
        for mut col in moved.column_iter_mut() {
            col += &shift;
        }
        let before = discriminability(data.x(), data.labels(), k).unwrap();
        let after = discriminability(&moved, data.labels(), k).unwrap();
        prop_assert_eq!(before, after);
    }
}
