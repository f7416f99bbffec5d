//! Closed-form trajectory predictors, random-matrix statistics of the
//! gradient scale matrices, and gradient checks.

#[cfg(test)]
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, Moments};
use crate::error::{ensure_dim, invalid, Error, Result};
use crate::linnet::{
    gd_step_moments, gradient_matrix, layer_variances, loss, DeepLinearNet, InitDistribution,
    InitScheme, LossKind, Snapshot,
};
use crate::rng::{seeded, stream};
use crate::spectra::SpectralBasis;
use crate::stats::{mean, std_error};
use crate::{Matrix, Vector};

/// Closed-form per-column solution under constant `A_l = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPrediction {
    pub value: Vector,
    pub lambda: f64,
    /// `|λ| > 1`: the iteration diverges for this component.
    pub step_too_large: bool,
}

/// `w_j(t) = λ^t w0 + (1 − λ^t) wopt` with `λ = 1 − μ d_j L`.
pub fn predict_thm3(
    w0: &Vector,
    wopt: &Vector,
    d: f64,
    lr: f64,
    depth: usize,
    t: usize,
) -> Result<ColumnPrediction> {
    ensure_dim("predict_thm3 wopt", w0.len(), wopt.len())?;
    let lambda = 1.0 - lr * d * depth as f64;
    let coeff = libm::pow(lambda, t as f64);
    Ok(ColumnPrediction {
        value: w0 * coeff + wopt * (1.0 - coeff),
        lambda,
        step_too_large: lambda.abs() > 1.0,
    })
}

/// Column `j` after `history.len()` steps, given the measured
/// `A^(t) = Σ_l A_l^(t)` for each step, via the telescoping product
/// evaluated right-to-left in time.
pub fn predict_thm4(w0: &Vector, wopt: &Vector, d: f64, lr: f64, history: &[Matrix]) -> Result<Vector> {
    let k = w0.len();
    ensure_dim("predict_thm4 wopt", k, wopt.len())?;
    let c = lr * d;
    let id = Matrix::identity(k, k);
    // prod = (I − c A^(t−1)) ⋯ (I − c A^(s+1))
    let mut prod = id.clone();
    let mut acc = Vector::zeros(k);
    for a in history.iter().rev() {
        ensure_dim("predict_thm4 history rows", k, a.nrows())?;
        ensure_dim("predict_thm4 history cols", k, a.ncols())?;
        acc += &prod * (a * wopt) * c;
        prod = &prod * (&id - a * c);
    }
    Ok(prod * w0 + acc)
}

/// Thm-3 predictions for every column of a `K × q` matrix in principal
/// coordinates, for every step `0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPrediction {
    /// `lambda[j] = 1 − μ d_j L`.
    pub lambda: Vec<f64>,
    /// `weights[t]`, `K × q`.
    pub weights: Vec<Matrix>,
}

pub fn predict_trajectory(
    w0: &Matrix,
    wopt: &Matrix,
    d: &[f64],
    lr: f64,
    depth: usize,
    steps: usize,
) -> Result<TrajectoryPrediction> {
    ensure_dim("predict_trajectory wopt rows", w0.nrows(), wopt.nrows())?;
    ensure_dim("predict_trajectory wopt cols", w0.ncols(), wopt.ncols())?;
    ensure_dim("predict_trajectory spectrum", w0.ncols(), d.len())?;
    let lambda: Vec<f64> = d.iter().map(|&dj| 1.0 - lr * dj * depth as f64).collect();
    let weights = (0..=steps)
        .map(|t| {
            let mut w = Matrix::zeros(w0.nrows(), w0.ncols());
            for (j, &lam) in lambda.iter().enumerate() {
                let c = libm::pow(lam, t as f64);
                w.set_column(j, &(w0.column(j) * c + wopt.column(j) * (1.0 - c)));
            }
            w
        })
        .collect();
    Ok(TrajectoryPrediction { lambda, weights })
}

/// `‖w_sim − w_pred‖ / ‖w_opt − w_0‖` for column `j`; 0 when the column
/// starts at its optimum and stays there.
pub fn normalized_column_error(sim: &Matrix, pred: &Matrix, w0: &Matrix, wopt: &Matrix, j: usize) -> f64 {
    let num = (sim.column(j) - pred.column(j)).norm();
    let den = (wopt.column(j) - w0.column(j)).norm();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Rotates every snapshot's `Ŵ` into principal coordinates, `Ŵ U`.
pub fn principal_weights(snapshots: &[Snapshot], basis: &SpectralBasis) -> Vec<Matrix> {
    snapshots.iter().map(|s| &s.compact * basis.u()).collect()
}

/// `(β_l, α_l)` with `β_l = Π_{n=1}^{l} m_n σ_n²` and
/// `α_l = Π_{n=l+1}^{L} m_{n−1} σ_n²`, for `widths = [m_0, …, m_L]` and
/// `variances = [σ_1², …, σ_L²]`.
pub fn analytic_beta_alpha(widths: &[usize], variances: &[f64], l: usize) -> Result<(f64, f64)> {
    if widths.len() < 2 {
        return Err(Error::Empty("widths"));
    }
    let depth = widths.len() - 1;
    ensure_dim("analytic_beta_alpha variances", depth, variances.len())?;
    if l > depth {
        return Err(Error::OutOfRange {
            what: "layer",
            index: l,
            lo: 0,
            hi: depth,
        });
    }
    let beta = (1..=l).map(|n| widths[n] as f64 * variances[n - 1]).product();
    let alpha = (l + 1..=depth)
        .map(|n| widths[n - 1] as f64 * variances[n - 1])
        .product();
    Ok((beta, alpha))
}

/// Monte-Carlo summary of one square random matrix family.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryStats {
    /// Mean over trials of the per-trial mean diagonal entry.
    pub diag_mean: f64,
    pub diag_se: f64,
    /// Mean over trials of the per-trial mean off-diagonal entry (0 for 1×1).
    pub offdiag_mean: f64,
    pub offdiag_se: f64,
    /// Per-entry variance across trials, averaged over all entries.
    pub variance: f64,
}

impl EntryStats {
    fn of(samples: &[Matrix]) -> Self {
        let n = samples[0].nrows();
        let diag: Vec<f64> = samples
            .iter()
            .map(|m| m.diagonal().sum() / n as f64)
            .collect();
        let off: Vec<f64> = samples
            .iter()
            .map(|m| {
                if n < 2 {
                    0.0
                } else {
                    (m.sum() - m.diagonal().sum()) / (n * (n - 1)) as f64
                }
            })
            .collect();
        let t = samples.len() as f64;
        let mut variance = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mu = samples.iter().map(|m| m[(i, j)]).sum::<f64>() / t;
                variance += samples
                    .iter()
                    .map(|m| (m[(i, j)] - mu) * (m[(i, j)] - mu))
                    .sum::<f64>()
                    / (t - 1.0);
            }
        }
        Self {
            diag_mean: mean(&diag),
            diag_se: std_error(&diag),
            offdiag_mean: mean(&off),
            offdiag_se: std_error(&off),
            variance: variance / (n * n) as f64,
        }
    }

    /// `|diag_mean − target| ≤ k·SE` and `|offdiag_mean| ≤ k·SE`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.diag_mean - target).abs() <= k * self.diag_se && self.offdiag_mean.abs() <= k * self.offdiag_se
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub layer: usize,
    pub beta: f64,
    pub alpha: f64,
    pub b: EntryStats,
    pub a: EntryStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandMatReport {
    pub widths: Vec<usize>,
    pub trials: usize,
    /// One entry per `l ∈ 0..=L`.
    pub layers: Vec<LayerReport>,
}

/// `(B_l, A_l)` for `l ∈ 0..=L` of one freshly initialized network. The
/// trial draws from its own RNG stream so trials can run in any order.
pub fn random_matrix_trial(
    widths: &[usize],
    scheme: InitScheme,
    dist: InitDistribution,
    seed: u64,
    trial: u64,
) -> Result<Vec<(Matrix, Matrix)>> {
    let net = DeepLinearNet::init(widths, scheme, dist, &mut stream(seed, trial))?;
    let prefix = net.prefix_products();
    let suffix = net.suffix_products();
    Ok(prefix
        .iter()
        .zip(&suffix)
        .map(|(p, s)| (p.transpose() * p, s * s.transpose()))
        .collect())
}

/// Aggregates per-trial samples from [`random_matrix_trial`].
pub fn summarize_random_matrix_trials(
    widths: &[usize],
    scheme: InitScheme,
    samples: &[Vec<(Matrix, Matrix)>],
) -> Result<RandMatReport> {
    if samples.len() < 2 {
        return Err(invalid("at least two trials are needed for standard errors"));
    }
    let variances = layer_variances(widths, scheme)?;
    let depth = widths.len() - 1;
    let layers = (0..=depth)
        .map(|l| {
            let (beta, alpha) = analytic_beta_alpha(widths, &variances, l)?;
            let bs: Vec<Matrix> = samples.iter().map(|s| s[l].0.clone()).collect();
            let as_: Vec<Matrix> = samples.iter().map(|s| s[l].1.clone()).collect();
            Ok(LayerReport {
                layer: l,
                beta,
                alpha,
                b: EntryStats::of(&bs),
                a: EntryStats::of(&as_),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandMatReport {
        widths: widths.to_vec(),
        trials: samples.len(),
        layers,
    })
}

/// Samples `trials` independent initializations and compares the empirical
/// scale-matrix statistics with `β_l`, `α_l`.
pub fn verify_random_matrix_stats(
    widths: &[usize],
    scheme: InitScheme,
    dist: InitDistribution,
    trials: usize,
    seed: u64,
) -> Result<RandMatReport> {
    let samples = (0..trials as u64)
        .map(|t| random_matrix_trial(widths, scheme, dist, seed, t))
        .collect::<Result<Vec<_>>>()?;
    summarize_random_matrix_trials(widths, scheme, &samples)
}

/// Distances of the recorded scale matrices from their initial analytic means.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub epoch: usize,
    pub layer: usize,
    /// `‖diag(B_l) − β_l‖₂`.
    pub b_diag: f64,
    /// `‖offdiag(B_l)‖_F`.
    pub b_offdiag: f64,
    pub a_diag: f64,
    pub a_offdiag: f64,
}

/// Drift table from snapshots recorded with `record_scale`. The reference
/// values are the `t = 0` analytic `β_l`, `α_l`.
pub fn scale_matrix_drift(snapshots: &[Snapshot], widths: &[usize], scheme: InitScheme) -> Result<Vec<DriftRow>> {
    if snapshots.is_empty() {
        return Err(Error::Empty("snapshots"));
    }
    let variances = layer_variances(widths, scheme)?;
    let mut rows = Vec::new();
    for snap in snapshots {
        let scale = snap
            .scale
            .as_ref()
            .ok_or_else(|| invalid("snapshot has no scale statistics"))?;
        ensure_dim("scale_matrix_drift layers", widths.len(), scale.len())?;
        for (l, s) in scale.iter().enumerate() {
            let (beta, alpha) = analytic_beta_alpha(widths, &variances, l)?;
            let dist = |v: &[f64], target: f64| libm::sqrt(v.iter().map(|x| (x - target) * (x - target)).sum());
            rows.push(DriftRow {
                epoch: snap.epoch,
                layer: l,
                b_diag: dist(&s.b_diag, beta),
                b_offdiag: s.b_offdiag,
                a_diag: dist(&s.a_diag, alpha),
                a_offdiag: s.a_offdiag,
            });
        }
    }
    Ok(rows)
}

/// `−μ Σ_{l=1}^{L} A_l G B_{l−1}`, the first-order change of `Ŵ` after one
/// simultaneous step.
pub fn first_order_update(net: &DeepLinearNet, g: &Matrix, lr: f64) -> Matrix {
    let prefix = net.prefix_products();
    let suffix = net.suffix_products();
    let mut acc = Matrix::zeros(g.nrows(), g.ncols());
    for l in 1..=net.depth() {
        let a = &suffix[l] * suffix[l].transpose();
        let b = prefix[l - 1].transpose() * &prefix[l - 1];
        acc += a * g * b;
    }
    acc * -lr
}

/// `‖ΔŴ − first_order_update‖_F` for one exact full-batch l2 step.
pub fn first_order_residual(net: &DeepLinearNet, moments: &Moments, lr: f64) -> Result<f64> {
    let before = net.compact();
    let g = gradient_matrix(&before, &moments.sxx, &moments.syx)?;
    let predicted = first_order_update(net, &g, lr);
    let mut stepped = net.clone();
    gd_step_moments(&mut stepped, moments, lr)?;
    Ok((stepped.compact() - before - predicted).norm())
}

fn relative(a: f64, b: f64, floor: f64) -> f64 {
    let den = a.abs().max(b.abs()).max(floor);
    if den == 0.0 {
        0.0
    } else {
        (a - b).abs() / den
    }
}

/// Entry-wise central-difference check of the l2 layer gradients, using at
/// most `max_per_layer` evenly spaced entries per layer. Denominators are
/// floored at `1e-8 · max|∇|` so vanishing entries don't dominate.
pub fn gradient_check(net: &DeepLinearNet, data: &Dataset, h: f64, max_per_layer: usize) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let m = data.moments();
    let g = gradient_matrix(&net.compact(), &m.sxx, &m.syx)?;
    let grads = net.layer_gradients(&g);
    let scale = grads
        .iter()
        .flat_map(|gl| gl.iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let floor = 1e-8 * scale;
    let mut worst = 0.0_f64;
    let mut probe = net.clone();
    for (l, gl) in grads.iter().enumerate() {
        let total = gl.len();
        let stride = (total / max_per_layer.max(1)).max(1);
        for idx in (0..total).step_by(stride) {
            let orig = probe.layers()[l][idx];
            probe.layer_mut(l + 1)[idx] = orig + h;
            let up = loss(&probe, data, LossKind::L2)?;
            probe.layer_mut(l + 1)[idx] = orig - h;
            let down = loss(&probe, data, LossKind::L2)?;
            probe.layer_mut(l + 1)[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative(gl[idx], numeric, floor));
        }
    }
    Ok(worst)
}

/// Central-difference check along one random unit direction across all
/// layers. The loss is a degree-`2L` polynomial along the line, so the
/// error scales as `h²`.
pub fn directional_gradient_check(net: &DeepLinearNet, data: &Dataset, h: f64, seed: u64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut rng = seeded(seed);
    let mut dirs: Vec<Matrix> = net
        .layers()
        .iter()
        .map(|w| Matrix::from_fn(w.nrows(), w.ncols(), |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let norm = libm::sqrt(dirs.iter().map(|d| d.norm_squared()).sum());
    for d in &mut dirs {
        *d /= norm;
    }
    let m = data.moments();
    let g = gradient_matrix(&net.compact(), &m.sxx, &m.syx)?;
    let analytic: f64 = net
        .layer_gradients(&g)
        .iter()
        .zip(&dirs)
        .map(|(gl, d)| gl.dot(d))
        .sum();
    let shifted = |sign: f64| -> Result<f64> {
        let layers = net
            .layers()
            .iter()
            .zip(&dirs)
            .map(|(w, d)| w + d * (sign * h))
            .collect();
        loss(&DeepLinearNet::from_layers(layers)?, data, LossKind::L2)
    };
    let numeric = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * h);
    Ok(relative(analytic, numeric, 0.0))
}

/// `log(e₁/e₂) / log(h₁/h₂)` for errors measured at two step sizes.
pub fn convergence_order(errors: (f64, f64), steps: (f64, f64)) -> f64 {
    libm::log(errors.0 / errors.1) / libm::log(steps.0 / steps.1)
}

/// First epoch at which `series` exceeds `factor` times its first value.
pub fn first_exceedance(series: &[(usize, f64)], factor: f64) -> Option<usize> {
    let (_, initial) = *series.first()?;
    series
        .iter()
        .find(|&&(_, v)| v > factor * initial)
        .map(|&(epoch, _)| epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn randn(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn thm3_cases() {
        let w0 = Vector::from_vec(vec![1.0, -2.0]);
        let wopt = Vector::from_vec(vec![0.5, 3.0]);
        assert_eq!(predict_thm3(&w0, &wopt, 2.0, 0.01, 3, 0).unwrap().value, w0);
        assert_eq!(predict_thm3(&w0, &wopt, 0.0, 0.01, 3, 40).unwrap().value, w0);

        let p = predict_thm3(&w0, &wopt, 2.0, 0.01, 3, 10).unwrap();
        assert!((p.lambda - 0.94).abs() < 1e-15);
        let mut w = w0.clone();
        for _ in 0..10 {
            w = &w * 0.94 + &wopt * 0.06;
        }
        assert!((p.value - w).amax() < 1e-12);
        assert!(!p.step_too_large);
        assert!(predict_thm3(&w0, &wopt, 100.0, 0.01, 3, 1).unwrap().step_too_large);
    }

    #[test]
    fn thm4_cases() {
        let mut rng = seeded(1);
        let w0 = Vector::from_vec(vec![1.0, -2.0, 0.3]);
        let wopt = Vector::from_vec(vec![0.5, 3.0, -1.0]);
        let (d, lr) = (2.0, 0.01);

        assert_eq!(predict_thm4(&w0, &wopt, d, lr, &[]).unwrap(), w0);

        let one = predict_thm4(&w0, &wopt, 1.0, 0.1, &[Matrix::identity(3, 3)]).unwrap();
        assert!((one - (&w0 * 0.9 + &wopt * 0.1)).amax() < 1e-15);

        let const_hist = vec![Matrix::identity(3, 3) * 4.0; 25];
        let a = predict_thm4(&w0, &wopt, d, lr, &const_hist).unwrap();
        let b = predict_thm3(&w0, &wopt, d, lr, 4, 25).unwrap().value;
        assert!((a - b).amax() < 1e-12);

        let hist: Vec<Matrix> = (0..5)
            .map(|_| {
                let r = randn(3, 3, &mut rng);
                &r * r.transpose()
            })
            .collect();
        let mut w = w0.clone();
        for a in &hist {
            w = &w - a * &w * (lr * d) + a * &wopt * (lr * d);
        }
        assert!((predict_thm4(&w0, &wopt, d, lr, &hist).unwrap() - w).amax() < 1e-10);
    }

    #[test]
    fn beta_alpha_cases() {
        let widths = [16, 64, 64, 64, 2];
        let v = layer_variances(&widths, InitScheme::Std).unwrap();
        for l in 1..4 {
            let (beta, _) = analytic_beta_alpha(&widths, &v, l).unwrap();
            assert!((beta - 1.0).abs() < 1e-15);
        }
        let (beta_l, alpha_l) = analytic_beta_alpha(&widths, &v, 4).unwrap();
        assert!((beta_l - 2.0 / 64.0).abs() < 1e-15);
        assert_eq!(alpha_l, 1.0);
        let (_, alpha0) = analytic_beta_alpha(&widths, &v, 0).unwrap();
        assert!((alpha0 - 16.0 / 64.0).abs() < 1e-15);

        let (beta, _) = analytic_beta_alpha(&[2, 2, 2, 2], &[1.0, 1.0, 1.0], 3).unwrap();
        assert_eq!(beta, 8.0);
        assert!(analytic_beta_alpha(&[2, 2], &[1.0, 1.0], 1).is_err());
    }

    #[test]
    fn random_matrix_small_network_matches_means() {
        let widths = [4, 32, 32, 2];
        let r = verify_random_matrix_stats(&widths, InitScheme::Std, InitDistribution::Uniform, 200, 7).unwrap();
        for l in &r.layers {
            assert!(l.b.within(l.beta, 4.0), "B layer {}: {:?}", l.layer, l.b);
            assert!(l.a.within(l.alpha, 4.0), "A layer {}: {:?}", l.layer, l.a);
        }
        // B_0 = I exactly
        assert_eq!(r.layers[0].b.variance, 0.0);
        assert!(verify_random_matrix_stats(&widths, InitScheme::Std, InitDistribution::Uniform, 1, 7).is_err());
    }

    #[test]
    fn trials_are_order_independent() {
        let widths = [3, 8, 2];
        let a = random_matrix_trial(&widths, InitScheme::Std, InitDistribution::Uniform, 5, 3).unwrap();
        let _ = random_matrix_trial(&widths, InitScheme::Std, InitDistribution::Uniform, 5, 2).unwrap();
        let b = random_matrix_trial(&widths, InitScheme::Std, InitDistribution::Uniform, 5, 3).unwrap();
        assert_eq!(a, b);
    }

    fn small_problem(seed: u64) -> (DeepLinearNet, Dataset) {
        let mut rng = seeded(seed);
        let layers = vec![randn(8, 5, &mut rng) * 0.4, randn(6, 8, &mut rng) * 0.4, randn(3, 6, &mut rng) * 0.4];
        let net = DeepLinearNet::from_layers(layers).unwrap();
        let x = randn(5, 20, &mut rng);
        let labels = (0..20).map(|i| i % 3).collect();
        (net, Dataset::new(x, labels, 3).unwrap())
    }

    #[test]
    fn gradient_check_cases() {
        let (net, data) = small_problem(2);
        assert!(gradient_check(&net, &data, 1e-6, usize::MAX).unwrap() < 1e-6);
        assert!(gradient_check(&net, &data, 0.0, 10).is_err());

        // zero data and zero-label targets: every gradient vanishes
        let zero = Dataset::new(Matrix::zeros(5, 0), vec![], 3).unwrap();
        assert_eq!(gradient_check(&net, &zero, 1e-6, usize::MAX).unwrap(), 0.0);

        let e1 = directional_gradient_check(&net, &data, 1e-2, 3).unwrap();
        let e2 = directional_gradient_check(&net, &data, 5e-3, 3).unwrap();
        let order = convergence_order((e1, e2), (1e-2, 5e-3));
        assert!((1.5..=2.5).contains(&order), "order {order}");
    }

    #[test]
    fn first_order_residual_is_quadratic() {
        let (net, data) = small_problem(4);
        let m = data.moments();
        let r: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&lr| first_order_residual(&net, &m, lr).unwrap())
            .collect();
        for w in r.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn first_exceedance_cases() {
        let s = [(0, 1.0), (5, 1.5), (10, 2.5), (15, 5.0)];
        assert_eq!(first_exceedance(&s, 2.0), Some(10));
        assert_eq!(first_exceedance(&s, 10.0), None);
        assert_eq!(first_exceedance(&[], 2.0), None);
    }
}
