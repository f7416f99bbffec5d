//! Deep linear networks `y = W_L ⋯ W_1 x` trained by exact gradient descent.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::dataset::{Dataset, Moments};
use crate::error::{ensure_dim, invalid, Error, Result};
use crate::linalg::{argmax_columns, diagonal, offdiag_norm, softmax};
use crate::rng::{seeded, Rng};
use crate::spectra::eigendecompose;
use crate::{Matrix, Vector};

/// Training aborts once the loss exceeds this value.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Glorot variant: `σ²_1 = 1/m_1`, `σ²_L = 1/m_{L−1}`,
    /// `σ²_l = 2/(m_{l−1} + m_l)` in between.
    Std,
    /// `σ²_l = 2/(m_{l−1} + m_l)` for every layer.
    GlorotUniform,
}

/// Zero-mean distribution the initial weights are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitDistribution {
    /// Uniform on `[−√(3σ²), √(3σ²)]`.
    #[default]
    Uniform,
    Gaussian,
}

/// Per-layer weight variances for `widths = [m_0, …, m_L]`.
///
/// With a single layer the output-layer rule applies, `σ² = 1/m_0`.
pub fn layer_variances(widths: &[usize], scheme: InitScheme) -> Result<Vec<f64>> {
    if widths.len() < 2 {
        return Err(Error::Empty("a network needs at least two widths (m_0, m_L)"));
    }
    if widths.contains(&0) {
        return Err(invalid("layer widths must be positive"));
    }
    let depth = widths.len() - 1;
    let glorot = |l: usize| 2.0 / (widths[l - 1] + widths[l]) as f64;
    Ok((1..=depth)
        .map(|l| match scheme {
            InitScheme::GlorotUniform => glorot(l),
            InitScheme::Std if l == depth => 1.0 / widths[depth - 1] as f64,
            InitScheme::Std if l == 1 => 1.0 / widths[1] as f64,
            InitScheme::Std => glorot(l),
        })
        .collect())
}

/// An ordered list of layers `W_1 … W_L`, `W_l ∈ ℝ^{m_l × m_{l−1}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLinearNet {
    layers: Vec<Matrix>,
}

impl DeepLinearNet {
    pub fn from_layers(layers: Vec<Matrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            ensure_dim("layer chain", pair[0].nrows(), pair[1].ncols())?;
        }
        Ok(Self { layers })
    }

    /// Samples every layer from the chosen scheme.
    pub fn init(
        widths: &[usize],
        scheme: InitScheme,
        dist: InitDistribution,
        rng: &mut Rng,
    ) -> Result<Self> {
        let variances = layer_variances(widths, scheme)?;
        let layers = variances
            .iter()
            .enumerate()
            .map(|(i, &var)| {
                let (rows, cols) = (widths[i + 1], widths[i]);
                match dist {
                    InitDistribution::Uniform => {
                        let half = libm::sqrt(3.0 * var);
                        let u = Uniform::new_inclusive(-half, half).expect("finite bounds");
                        Matrix::from_fn(rows, cols, |_, _| u.sample(rng))
                    }
                    InitDistribution::Gaussian => {
                        let sd = libm::sqrt(var);
                        Matrix::from_fn(rows, cols, |_, _| {
                            sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
                        })
                    }
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    /// Mutable access to layer `l` (1-based, as in `W_l`).
    pub fn layer_mut(&mut self, l: usize) -> &mut Matrix {
        &mut self.layers[l - 1]
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `[m_0, …, m_L]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].ncols()];
        w.extend(self.layers.iter().map(|l| l.nrows()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].nrows()
    }

    /// `P_0 = I_q` and `P_l = W_l ⋯ W_1` for `l = 1..=L`.
    pub fn prefix_products(&self) -> Vec<Matrix> {
        let q = self.input_dim();
        let mut out = Vec::with_capacity(self.depth() + 1);
        out.push(Matrix::identity(q, q));
        for w in &self.layers {
            let next = w * out.last().expect("non-empty");
            out.push(next);
        }
        out
    }

    /// `S_L = I_K` and `S_l = W_L ⋯ W_{l+1}` for `l = 0..L`, indexed by `l`.
    pub fn suffix_products(&self) -> Vec<Matrix> {
        self.suffix_transposed().iter().map(Matrix::transpose).collect()
    }

    /// `S_lᵀ` (`m_l × K`) for `l = 0..=L`. Built as `W_{l+1}ᵀ S_{l+1}ᵀ`, which
    /// keeps every product tall rather than `K` rows wide.
    fn suffix_transposed(&self) -> Vec<Matrix> {
        let k = self.output_dim();
        let depth = self.depth();
        let mut out = vec![Matrix::zeros(0, 0); depth + 1];
        out[depth] = Matrix::identity(k, k);
        for l in (0..depth).rev() {
            out[l] = self.layers[l].tr_mul(&out[l + 1]);
        }
        out
    }

    /// The compact representation `Ŵ = W_L ⋯ W_1` (`K × q`).
    pub fn compact(&self) -> Matrix {
        let (last, rest) = self.layers.split_last().expect("non-empty");
        rest.iter()
            .rev()
            .fold(last.transpose(), |acc, w| w.tr_mul(&acc))
            .transpose()
    }

    /// Network output for a `q × n` input, computed layer by layer.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        ensure_dim("forward input rows", self.input_dim(), x.nrows())?;
        let mut h = &self.layers[0] * x;
        for w in &self.layers[1..] {
            h = w * h;
        }
        Ok(h)
    }

    /// Gradient scale matrices `(B_l, A_l)` for `l ∈ 0..=L`:
    /// `B_l = P_lᵀ P_l` (`q × q`) and `A_l = S_l S_lᵀ` (`K × K`).
    pub fn scale_matrices(&self, l: usize) -> Result<(Matrix, Matrix)> {
        if l > self.depth() {
            return Err(Error::OutOfRange {
                what: "layer",
                index: l,
                lo: 0,
                hi: self.depth(),
            });
        }
        let p = self.layers[..l]
            .iter()
            .fold(Matrix::identity(self.input_dim(), self.input_dim()), |acc, w| w * acc);
        let k = self.output_dim();
        let st = self.layers[l..]
            .iter()
            .rev()
            .fold(Matrix::identity(k, k), |acc, w| w.tr_mul(&acc));
        Ok((p.tr_mul(&p), st.tr_mul(&st)))
    }

    /// Per-layer gradients given the gradient `G` of the loss with respect to
    /// the compact representation: `∂/∂W_l = S_lᵀ G P_{l−1}ᵀ`.
    pub fn layer_gradients(&self, g: &Matrix) -> Vec<Matrix> {
        self.rank_factors(g)
            .into_iter()
            .map(|(t, h)| t * h.transpose())
            .collect()
    }

    /// `(S_lᵀ, P_{l−1} Gᵀ)` per layer: each gradient is the rank-`K` product
    /// of the two.
    fn rank_factors(&self, g: &Matrix) -> Vec<(Matrix, Matrix)> {
        let prefix = self.prefix_products();
        let mut suffix = self.suffix_transposed();
        let gt = g.transpose();
        (1..=self.depth())
            .map(|l| (core::mem::take(&mut suffix[l]), &prefix[l - 1] * &gt))
            .collect()
    }

    /// Applies `W_l ← W_l − μ ∂/∂W_l` to every layer at once, all gradients
    /// taken at the pre-step weights.
    pub fn apply_output_gradient(&mut self, g: &Matrix, lr: f64) -> Result<()> {
        let factors = self.rank_factors(g);
        for (w, (t, h)) in self.layers.iter_mut().zip(factors) {
            for k in 0..t.ncols() {
                w.ger(-lr, &t.column(k), &h.column(k), 1.0);
            }
        }
        if self.layers.iter().all(|w| w.iter().all(|v| v.is_finite())) {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }
}

/// Convenience constructor with uniform weights and a seed.
pub fn init_network(widths: &[usize], scheme: InitScheme, seed: u64) -> Result<DeepLinearNet> {
    DeepLinearNet::init(widths, scheme, InitDistribution::Uniform, &mut seeded(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `½ ‖Ŵ X − Y‖²_F`, summed over examples.
    #[default]
    L2,
    /// Softmax cross-entropy on the raw outputs, averaged over examples.
    CrossEntropy,
}

pub fn loss(net: &DeepLinearNet, data: &Dataset, kind: LossKind) -> Result<f64> {
    ensure_dim("loss input rows", net.input_dim(), data.dim())?;
    ensure_dim("loss classes", net.output_dim(), data.classes())?;
    let out = net.compact() * data.x();
    Ok(loss_of_outputs(&out, data, kind))
}

fn loss_of_outputs(out: &Matrix, data: &Dataset, kind: LossKind) -> f64 {
    match kind {
        LossKind::L2 => 0.5 * (out - data.one_hot()).norm_squared(),
        LossKind::CrossEntropy => {
            if data.is_empty() {
                return 0.0;
            }
            let total: f64 = out
                .column_iter()
                .zip(data.labels())
                .map(|(col, &c)| {
                    let max = col.max();
                    let lse = max + libm::log(col.iter().map(|v| libm::exp(v - max)).sum::<f64>());
                    lse - col[c]
                })
                .sum();
            total / data.len() as f64
        }
    }
}

/// `G_r = Ŵ Σ_XX − Σ_YX`, the l2 gradient with respect to `Ŵ`.
pub fn gradient_matrix(w_hat: &Matrix, sxx: &Matrix, syx: &Matrix) -> Result<Matrix> {
    ensure_dim("gradient_matrix Σxx", w_hat.ncols(), sxx.nrows())?;
    ensure_dim("gradient_matrix Σyx rows", w_hat.nrows(), syx.nrows())?;
    ensure_dim("gradient_matrix Σyx cols", w_hat.ncols(), syx.ncols())?;
    Ok(w_hat * sxx - syx)
}

/// Gradient of the loss on `data` with respect to the compact representation.
pub fn output_gradient(w_hat: &Matrix, data: &Dataset, kind: LossKind) -> Matrix {
    let out = w_hat * data.x();
    match kind {
        LossKind::L2 => (out - data.one_hot()) * data.x().transpose(),
        LossKind::CrossEntropy => {
            if data.is_empty() {
                return Matrix::zeros(w_hat.nrows(), w_hat.ncols());
            }
            let mut resid = Matrix::zeros(out.nrows(), out.ncols());
            for (i, col) in out.column_iter().enumerate() {
                let mut p = softmax(&col.into_owned());
                p[data.labels()[i]] -= 1.0;
                resid.set_column(i, &p);
            }
            resid * data.x().transpose() / data.len() as f64
        }
    }
}

/// One simultaneous gradient step on `data` (a full dataset or a minibatch).
pub fn gd_step(net: &mut DeepLinearNet, data: &Dataset, lr: f64, kind: LossKind) -> Result<()> {
    ensure_dim("gd_step input rows", net.input_dim(), data.dim())?;
    ensure_dim("gd_step classes", net.output_dim(), data.classes())?;
    let g = output_gradient(&net.compact(), data, kind);
    net.apply_output_gradient(&g, lr)
}

/// Full-batch l2 step from precomputed moments.
pub fn gd_step_moments(net: &mut DeepLinearNet, moments: &Moments, lr: f64) -> Result<()> {
    let g = gradient_matrix(&net.compact(), &moments.sxx, &moments.syx)?;
    net.apply_output_gradient(&g, lr)
}

/// Least-squares optimum `Σ_YX Σ_XX⁺`; eigenvalues below `tol · d_1` are
/// treated as zero.
pub fn optimal_solution(moments: &Moments, tol: f64) -> Result<Matrix> {
    let basis = eigendecompose(&moments.sxx)?;
    let d1 = basis.values().first().copied().unwrap_or(0.0);
    let inv = Vector::from_iterator(
        basis.dim(),
        basis
            .values()
            .iter()
            .map(|&d| if d > tol * d1 && d > 0.0 { 1.0 / d } else { 0.0 }),
    );
    let pinv = basis.u() * Matrix::from_diagonal(&inv) * basis.u().transpose();
    Ok(&moments.syx * pinv)
}

/// Whether each example's argmax output (lowest index on ties) is its label.
pub fn correctness(w_hat: &Matrix, data: &Dataset) -> Vec<bool> {
    let out = w_hat * data.x();
    argmax_columns(&out)
        .into_iter()
        .zip(data.labels())
        .map(|(p, &y)| p == y)
        .collect()
}

pub fn accuracy(w_hat: &Matrix, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = correctness(w_hat, data).into_iter().filter(|&c| c).count();
    hits as f64 / data.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Full,
    /// Shuffled minibatches of this size, one pass over the data per epoch.
    MiniBatch { size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub loss: LossKind,
    pub batch: BatchMode,
    pub snapshot_every: usize,
    /// Record `B_l`/`A_l` statistics and `Σ_l A_l` at every snapshot.
    pub record_scale: bool,
    /// Record per-example correctness on the training data at every snapshot.
    pub record_correctness: bool,
    /// Seed for minibatch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 100,
            loss: LossKind::L2,
            batch: BatchMode::Full,
            snapshot_every: 1,
            record_scale: false,
            record_correctness: false,
            seed: 0,
        }
    }
}

/// Summary of one layer's gradient scale matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleStats {
    pub b_diag: Vec<f64>,
    pub b_offdiag: f64,
    pub a_diag: Vec<f64>,
    pub a_offdiag: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub loss: f64,
    /// `Ŵ` at this epoch.
    pub compact: Matrix,
    /// One entry per `l ∈ 0..=L`.
    pub scale: Option<Vec<ScaleStats>>,
    /// `Σ_{l=1}^{L} A_l`.
    pub a_sum: Option<Matrix>,
    pub correct: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceStatus {
    Completed,
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub snapshots: Vec<Snapshot>,
    pub status: TraceStatus,
}

impl TrainTrace {
    pub fn diverged(&self) -> bool {
        matches!(self.status, TraceStatus::Diverged { .. })
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.snapshots.last().map(|s| s.loss)
    }
}

fn scale_snapshot(net: &DeepLinearNet) -> (Vec<ScaleStats>, Matrix) {
    let prefix = net.prefix_products();
    let suffix = net.suffix_transposed();
    let k = net.output_dim();
    let mut a_sum = Matrix::zeros(k, k);
    let stats = (0..=net.depth())
        .map(|l| {
            let b = prefix[l].tr_mul(&prefix[l]);
            let a = suffix[l].tr_mul(&suffix[l]);
            if l >= 1 {
                a_sum += &a;
            }
            ScaleStats {
                b_diag: diagonal(&b),
                b_offdiag: offdiag_norm(&b),
                a_diag: diagonal(&a),
                a_offdiag: offdiag_norm(&a),
            }
        })
        .collect();
    (stats, a_sum)
}

/// Trains `net` in place and records snapshots at epoch 0, every
/// `snapshot_every` epochs and at the final epoch.
pub fn train(net: &mut DeepLinearNet, data: &Dataset, config: &TrainConfig) -> Result<TrainTrace> {
    train_with(net, data, config, &mut |_, _| {})
}

/// [`train`] with a callback invoked at every snapshot epoch, for
/// evaluations that need the full network (held-out sets, projections, …).
pub fn train_with(
    net: &mut DeepLinearNet,
    data: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(usize, &DeepLinearNet),
) -> Result<TrainTrace> {
    ensure_dim("train input rows", net.input_dim(), data.dim())?;
    ensure_dim("train classes", net.output_dim(), data.classes())?;
    if !(config.lr > 0.0) {
        return Err(invalid("learning rate must be positive"));
    }
    if config.snapshot_every == 0 {
        return Err(invalid("snapshot cadence must be at least 1"));
    }
    if let BatchMode::MiniBatch { size: 0 } = config.batch {
        return Err(invalid("minibatch size must be at least 1"));
    }

    let moments = match (config.batch, config.loss) {
        (BatchMode::Full, LossKind::L2) => Some(data.moments()),
        _ => None,
    };
    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut snapshots = Vec::new();
    let mut record = |epoch: usize, net: &DeepLinearNet, loss: f64, snapshots: &mut Vec<Snapshot>| {
        let compact = net.compact();
        let (scale, a_sum) = if config.record_scale {
            let (s, a) = scale_snapshot(net);
            (Some(s), Some(a))
        } else {
            (None, None)
        };
        let correct = config
            .record_correctness
            .then(|| correctness(&compact, data));
        observer(epoch, net);
        snapshots.push(Snapshot {
            epoch,
            loss,
            compact,
            scale,
            a_sum,
            correct,
        });
    };

    let initial = loss_of_outputs(&(net.compact() * data.x()), data, config.loss);
    record(0, net, initial, &mut snapshots);

    for epoch in 1..=config.epochs {
        let step = match config.batch {
            BatchMode::Full => match &moments {
                Some(m) => gd_step_moments(net, m, config.lr),
                None => gd_step(net, data, config.lr, config.loss),
            },
            BatchMode::MiniBatch { size } => {
                order.shuffle(&mut rng);
                order
                    .chunks(size)
                    .try_for_each(|idx| gd_step(net, &data.select(idx), config.lr, config.loss))
            }
        };
        let loss = match step {
            Ok(()) => loss_of_outputs(&(net.compact() * data.x()), data, config.loss),
            Err(Error::NonFinite) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Ok(TrainTrace {
                snapshots,
                status: TraceStatus::Diverged { epoch, loss },
            });
        }
        if epoch % config.snapshot_every == 0 || epoch == config.epochs {
            record(epoch, net, loss, &mut snapshots);
        }
    }
    Ok(TrainTrace {
        snapshots,
        status: TraceStatus::Completed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use rand_distr::StandardNormal;

    fn randn(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn random_net(widths: &[usize], seed: u64) -> DeepLinearNet {
        let mut rng = seeded(seed);
        let layers = widths.windows(2).map(|w| randn(w[1], w[0], &mut rng) * 0.5).collect();
        DeepLinearNet::from_layers(layers).unwrap()
    }

    fn random_data(q: usize, k: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let x = randn(q, n, &mut rng);
        let labels = (0..n).map(|i| i % k).collect();
        Dataset::new(x, labels, k).unwrap()
    }

    #[test]
    fn std_variances_match_definition() {
        let v = layer_variances(&[10, 100, 100, 2], InitScheme::Std).unwrap();
        assert_eq!(v, vec![1.0 / 100.0, 2.0 / 200.0, 1.0 / 100.0]);
        // single layer: output rule 1/m_{L-1}
        assert_eq!(layer_variances(&[7, 3], InitScheme::Std).unwrap(), vec![1.0 / 7.0]);
        let g = layer_variances(&[10, 100, 2], InitScheme::GlorotUniform).unwrap();
        assert_eq!(g, vec![2.0 / 110.0, 2.0 / 102.0]);
        assert!(layer_variances(&[], InitScheme::Std).is_err());
        assert!(layer_variances(&[4], InitScheme::Std).is_err());
    }

    #[test]
    fn init_is_deterministic_and_has_declared_moments() {
        let a = init_network(&[10, 100, 100, 2], InitScheme::Std, 9).unwrap();
        let b = init_network(&[10, 100, 100, 2], InitScheme::Std, 9).unwrap();
        assert_eq!(a, b);

        // 10^5 entries from a 100 × 1000 layer with σ² = 1/100
        for dist in [InitDistribution::Uniform, InitDistribution::Gaussian] {
            let net =
                DeepLinearNet::init(&[1000, 100, 1000], InitScheme::Std, dist, &mut seeded(3)).unwrap();
            let w = &net.layers()[0];
            let n = w.len() as f64;
            let mean = w.sum() / n;
            let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let sigma2 = 0.01;
            assert!(mean.abs() < 3.0 * libm::sqrt(sigma2 / n), "mean {mean}");
            assert!((var / sigma2 - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn compact_representation_cases() {
        let net = random_net(&[3, 2], 1);
        assert_eq!(net.compact(), net.layers()[0]);

        let w1 = random_net(&[4, 3], 2).layers()[0].clone();
        let net = DeepLinearNet::from_layers(vec![w1.clone(), Matrix::identity(3, 3)]).unwrap();
        assert_eq!(net.compact(), w1);

        // explicit triple-loop product W3 W2 W1
        let net = random_net(&[4, 5, 3, 2], 3);
        let [w1, w2, w3] = [&net.layers()[0], &net.layers()[1], &net.layers()[2]];
        let mut oracle = Matrix::zeros(2, 4);
        for i in 0..2 {
            for j in 0..4 {
                for a in 0..3 {
                    for b in 0..5 {
                        oracle[(i, j)] += w3[(i, a)] * w2[(a, b)] * w1[(b, j)];
                    }
                }
            }
        }
        assert!(max_abs(&(net.compact() - oracle)) < 1e-12);
        assert!(DeepLinearNet::from_layers(vec![]).is_err());
        assert!(DeepLinearNet::from_layers(vec![Matrix::zeros(3, 2), Matrix::zeros(2, 2)]).is_err());
    }

    #[test]
    fn forward_routes_agree() {
        let net = random_net(&[4, 6, 6, 3], 4);
        let x = randn(4, 9, &mut seeded(5));
        let layered = net.forward(&x).unwrap();
        assert!(max_abs(&(layered - net.compact() * &x)) < 1e-10);
        assert_eq!(net.forward(&Matrix::zeros(4, 3)).unwrap(), Matrix::zeros(3, 3));
        let id = DeepLinearNet::from_layers(vec![Matrix::identity(4, 4)]).unwrap();
        assert_eq!(id.forward(&x).unwrap(), x);
        assert!(net.forward(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn loss_cases() {
        let data = random_data(3, 2, 8, 6);
        let zero = DeepLinearNet::from_layers(vec![Matrix::zeros(2, 3)]).unwrap();
        assert_eq!(loss(&zero, &data, LossKind::L2).unwrap(), 4.0);

        let net = random_net(&[3, 4, 2], 7);
        let w = net.compact();
        let mut oracle = 0.0;
        for i in 0..data.len() {
            for k in 0..2 {
                let mut f = 0.0;
                for j in 0..3 {
                    f += w[(k, j)] * data.x()[(j, i)];
                }
                let y = if data.labels()[i] == k { 1.0 } else { 0.0 };
                oracle += 0.5 * (f - y) * (f - y);
            }
        }
        assert!((loss(&net, &data, LossKind::L2).unwrap() - oracle).abs() < 1e-12);

        // perfect fit: square invertible data, Ŵ = Y X⁻¹
        let x = randn(2, 2, &mut seeded(8));
        let fit = Dataset::new(x.clone(), vec![0, 1], 2).unwrap();
        let w = fit.one_hot() * x.try_inverse().unwrap();
        let net = DeepLinearNet::from_layers(vec![w]).unwrap();
        assert!(loss(&net, &fit, LossKind::L2).unwrap() < 1e-20);

        // cross-entropy of zero logits is ln K
        let ce = loss(&zero, &data, LossKind::CrossEntropy).unwrap();
        assert!((ce - libm::log(2.0)).abs() < 1e-15);
    }

    #[test]
    fn gradient_matrix_cases() {
        let w = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let sxx = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let syx = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_eq!(
            gradient_matrix(&w, &sxx, &syx).unwrap(),
            Matrix::from_row_slice(1, 2, &[1.0, -1.0])
        );

        let data = random_data(4, 3, 20, 9);
        let m = data.moments();
        let opt = optimal_solution(&m, 1e-12).unwrap();
        let g = gradient_matrix(&opt, &m.sxx, &m.syx).unwrap();
        assert!(max_abs(&g) < 1e-8);
    }

    #[test]
    fn optimum_in_principal_coordinates_is_m_over_d() {
        let m = Moments {
            sxx: Matrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
            syx: Matrix::from_row_slice(1, 2, &[2.0, 3.0]),
            yy: 1.0,
        };
        let opt = optimal_solution(&m, 1e-12).unwrap();
        assert!(max_abs(&(opt - Matrix::from_row_slice(1, 2, &[0.5, 3.0]))) < 1e-14);

        let id = Moments {
            sxx: Matrix::identity(3, 3),
            syx: Matrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]),
            yy: 1.0,
        };
        assert!(max_abs(&(optimal_solution(&id, 1e-12).unwrap() - &id.syx)) < 1e-14);
    }

    #[test]
    fn scale_matrices_boundary_identities() {
        let net = random_net(&[4, 6, 5, 3], 10);
        let w = net.compact();
        let (b0, a0) = net.scale_matrices(0).unwrap();
        let (bl, al) = net.scale_matrices(3).unwrap();
        assert_eq!(b0, Matrix::identity(4, 4));
        assert_eq!(al, Matrix::identity(3, 3));
        assert!(max_abs(&(bl - w.transpose() * &w)) < 1e-12);
        assert!(max_abs(&(a0 - &w * w.transpose())) < 1e-12);
        for l in 0..=3 {
            let (b, a) = net.scale_matrices(l).unwrap();
            assert!(max_abs(&(&b - b.transpose())) < 1e-12);
            assert!(max_abs(&(&a - a.transpose())) < 1e-12);
        }
        assert!(net.scale_matrices(4).is_err());
    }

    #[test]
    fn single_layer_step_by_hand() {
        let mut net = DeepLinearNet::from_layers(vec![Matrix::from_row_slice(1, 2, &[1.0, 0.0])]).unwrap();
        let m = Moments {
            sxx: Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            syx: Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            yy: 1.0,
        };
        gd_step_moments(&mut net, &m, 0.1).unwrap();
        assert!(max_abs(&(net.compact() - Matrix::from_row_slice(1, 2, &[0.9, 0.1]))) < 1e-15);
    }

    #[test]
    fn zero_rate_step_leaves_net_unchanged() {
        let data = random_data(3, 2, 10, 11);
        let mut net = random_net(&[3, 5, 2], 12);
        let before = net.clone();
        gd_step(&mut net, &data, 0.0, LossKind::L2).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn layer_gradients_match_dataset_route() {
        let data = random_data(3, 2, 10, 13);
        let net = random_net(&[3, 5, 4, 2], 14);
        let a = gradient_matrix(&net.compact(), &data.moments().sxx, &data.moments().syx).unwrap();
        let b = output_gradient(&net.compact(), &data, LossKind::L2);
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn divergence_is_flagged() {
        let data = random_data(3, 2, 50, 15);
        let mut net = random_net(&[3, 4, 2], 16);
        let cfg = TrainConfig {
            lr: 10.0,
            epochs: 200,
            ..TrainConfig::default()
        };
        let trace = train(&mut net, &data, &cfg).unwrap();
        assert!(trace.diverged());
        assert!(!trace.snapshots.is_empty());
    }

    #[test]
    fn zero_epochs_gives_initial_snapshot_only() {
        let data = random_data(3, 2, 10, 17);
        let mut net = random_net(&[3, 4, 2], 18);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let trace = train(&mut net, &data, &cfg).unwrap();
        assert_eq!(trace.snapshots.len(), 1);
        assert_eq!(trace.snapshots[0].epoch, 0);
        assert_eq!(trace.status, TraceStatus::Completed);
    }

    #[test]
    fn invalid_training_config() {
        let data = random_data(3, 2, 10, 19);
        let mut net = random_net(&[3, 2], 20);
        let bad = TrainConfig {
            snapshot_every: 0,
            ..TrainConfig::default()
        };
        assert!(train(&mut net, &data, &bad).is_err());
        let bad = TrainConfig {
            batch: BatchMode::MiniBatch { size: 0 },
            ..TrainConfig::default()
        };
        assert!(train(&mut net, &data, &bad).is_err());
    }
}
