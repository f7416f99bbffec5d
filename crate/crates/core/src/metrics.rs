//! Learning-order and difficulty metrics.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dataset::Dataset;
use crate::datagen::frequency_prefix_sums;
use crate::error::{ensure_dim, invalid, Error, Result};
use crate::linalg::{argmax, argmax_columns};
use crate::spectra::SpectralBasis;
use crate::Matrix;

pub use crate::stats::{correlate, Correlation, CorrelationKind};

/// Correctness bits indexed by (member, epoch, example).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionTensor {
    members: usize,
    epochs: usize,
    examples: usize,
    bits: Vec<bool>,
}

impl PredictionTensor {
    /// `rows[member][epoch][example]`; must be rectangular and non-empty.
    pub fn new(rows: &[Vec<Vec<bool>>]) -> Result<Self> {
        let members = rows.len();
        let epochs = rows.first().map_or(0, Vec::len);
        let examples = rows.first().and_then(|m| m.first()).map_or(0, Vec::len);
        if members == 0 || epochs == 0 || examples == 0 {
            return Err(Error::Empty("prediction tensor"));
        }
        let mut bits = Vec::with_capacity(members * epochs * examples);
        for member in rows {
            ensure_dim("prediction tensor epochs", epochs, member.len())?;
            for epoch in member {
                ensure_dim("prediction tensor examples", examples, epoch.len())?;
                bits.extend_from_slice(epoch);
            }
        }
        Ok(Self {
            members,
            epochs,
            examples,
            bits,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.members, self.epochs, self.examples)
    }

    pub fn get(&self, member: usize, epoch: usize, example: usize) -> bool {
        self.bits[(member * self.epochs + epoch) * self.examples + example]
    }
}

/// Mean correctness over members and epochs, per example.
pub fn accessibility(tensor: &PredictionTensor) -> Vec<f64> {
    let mut counts = vec![0usize; tensor.examples];
    for chunk in tensor.bits.chunks(tensor.examples) {
        for (c, &b) in counts.iter_mut().zip(chunk) {
            *c += usize::from(b);
        }
    }
    let total = (tensor.members * tensor.epochs) as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

/// Least-squares one-vs-all linear classifier `W = Y Xᵀ (X Xᵀ)⁺`, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresClassifier {
    w: Matrix,
}

impl LeastSquaresClassifier {
    /// Eigenvalues of `X Xᵀ` below `1e-12 · d_1` are treated as zero.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let m = data.moments();
        let w = crate::linnet::optimal_solution(&m, 1e-12)?;
        Ok(Self { w })
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    /// Predicted class per column (lowest index on ties).
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        argmax_columns(&(&self.w * x))
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = self
            .predict(data.x())
            .iter()
            .zip(data.labels())
            .filter(|(p, y)| p == y)
            .count();
        hits as f64 / data.len() as f64
    }
}

/// Whether the classifier used for the critical principal component is fit
/// once on the original data or refit on each projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CriticalMode {
    #[default]
    FitOnce,
    Refit,
}

/// For every example of `eval`, the smallest `P ≤ max_p` such that the
/// classifier is correct on the example projected onto the top `P`
/// principal components of `basis`, or `None`.
pub fn critical_principal_components(
    train: &Dataset,
    basis: &SpectralBasis,
    eval: &Dataset,
    max_p: usize,
    mode: CriticalMode,
) -> Result<Vec<Option<usize>>> {
    let q = basis.dim();
    if max_p == 0 || max_p > q {
        return Err(Error::OutOfRange {
            what: "max principal components",
            index: max_p,
            lo: 1,
            hi: q,
        });
    }
    ensure_dim("critical_principal_components train", q, train.dim())?;
    ensure_dim("critical_principal_components eval", q, eval.dim())?;
    let coords = basis.u().transpose() * eval.x();
    let mut out = vec![None; eval.len()];
    match mode {
        CriticalMode::FitOnce => {
            // scores after P components: Σ_{j<P} (W u_j)(u_jᵀ x)
            let wu = LeastSquaresClassifier::fit(train)?.weights() * basis.u();
            let mut scores = Matrix::zeros(wu.nrows(), eval.len());
            for p in 0..max_p {
                scores += wu.column(p) * coords.row(p);
                for (i, pred) in argmax_columns(&scores).into_iter().enumerate() {
                    if out[i].is_none() && pred == eval.labels()[i] {
                        out[i] = Some(p + 1);
                    }
                }
            }
        }
        CriticalMode::Refit => {
            let train_coords = basis.u().transpose() * train.x();
            for p in 1..=max_p {
                let projected = train.with_x(train_coords.rows(0, p).into_owned())?;
                let clf = LeastSquaresClassifier::fit(&projected)?;
                let preds = clf.predict(&coords.rows(0, p).into_owned());
                for (i, pred) in preds.into_iter().enumerate() {
                    if out[i].is_none() && pred == eval.labels()[i] {
                        out[i] = Some(p);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Critical principal component of a single example (column `index` of
/// `eval`) with the fit-once classifier.
pub fn critical_principal_component(
    train: &Dataset,
    basis: &SpectralBasis,
    eval: &Dataset,
    index: usize,
    max_p: usize,
) -> Result<Option<usize>> {
    if index >= eval.len() {
        return Err(Error::OutOfRange {
            what: "example",
            index,
            lo: 0,
            hi: eval.len().saturating_sub(1),
        });
    }
    let one = eval.select(&[index]);
    Ok(critical_principal_components(train, basis, &one, max_p, CriticalMode::FitOnce)?[0])
}

/// Smallest `j` (1-based) such that the sign of the prefix sum `λ_j(z)`
/// gives `label` (class 1 for positive, class 0 for negative; a zero sum
/// matches neither), or `None`.
pub fn critical_frequency(kappa: &[f64], phi: &[f64], z: f64, label: usize) -> Result<Option<usize>> {
    if kappa.is_empty() {
        return Err(Error::Empty("frequency list"));
    }
    ensure_dim("critical_frequency phases", kappa.len(), phi.len())?;
    Ok(frequency_prefix_sums(kappa, phi, z)
        .into_iter()
        .position(|s| (label == 1 && s > 0.0) || (label == 0 && s < 0.0))
        .map(|j| j + 1))
}

/// Cross-member spread of column `j` of a `K × q` weight matrix:
/// `√(Σ_k Var_members(W_kj))` with the `n − 1` denominator.
pub fn column_spread(members: &[&Matrix], j: usize) -> f64 {
    let n = members.len();
    if n < 2 {
        return 0.0;
    }
    let rows = members[0].nrows();
    let mut total = 0.0;
    for k in 0..rows {
        let mean = members.iter().map(|m| m[(k, j)]).sum::<f64>() / n as f64;
        total += members.iter().map(|m| (m[(k, j)] - mean) * (m[(k, j)] - mean)).sum::<f64>() / (n - 1) as f64;
    }
    libm::sqrt(total)
}

/// Spread of every column at every snapshot. `traces[member][snapshot]`
/// holds `K × q` matrices; the result is indexed `[snapshot][column]`.
pub fn spread_table(traces: &[Vec<Matrix>]) -> Result<Vec<Vec<f64>>> {
    let first = traces.first().ok_or(Error::Empty("ensemble traces"))?;
    let snaps = first.len();
    for t in traces {
        ensure_dim("ensemble trace length", snaps, t.len())?;
    }
    let q = first.first().map_or(0, Matrix::ncols);
    Ok((0..snaps)
        .map(|s| {
            let at: Vec<&Matrix> = traces.iter().map(|t| &t[s]).collect();
            (0..q).map(|j| column_spread(&at, j)).collect()
        })
        .collect())
}

/// First time a series drops to `fraction` of its initial value, linearly
/// interpolated in `log(value)` between the bracketing snapshots. `None` if
/// it never does or the initial value is zero.
pub fn decay_time(epochs: &[usize], values: &[f64], fraction: f64) -> Option<f64> {
    let v0 = *values.first()?;
    if !(v0 > 0.0) {
        return None;
    }
    let target = fraction * v0;
    for i in 1..values.len().min(epochs.len()) {
        if values[i] <= target {
            let (a, b) = (values[i - 1], values[i]);
            let (ta, tb) = (epochs[i - 1] as f64, epochs[i] as f64);
            if b <= 0.0 || a <= target {
                return Some(tb);
            }
            let frac = (libm::log(a) - libm::log(target)) / (libm::log(a) - libm::log(b));
            return Some(ta + frac * (tb - ta));
        }
    }
    None
}

/// Per-column half-time of the cross-member spread.
pub fn half_times(epochs: &[usize], traces: &[Vec<Matrix>]) -> Result<Vec<Option<f64>>> {
    let table = spread_table(traces)?;
    ensure_dim("half_times epochs", table.len(), epochs.len())?;
    let q = table.first().map_or(0, Vec::len);
    Ok((0..q)
        .map(|j| {
            let series: Vec<f64> = table.iter().map(|row| row[j]).collect();
            decay_time(epochs, &series, 0.5)
        })
        .collect())
}

/// Fraction of each example's `k` nearest neighbours (Euclidean, itself
/// excluded, ties to the lower index) sharing its label. `x` holds one
/// example per column.
pub fn discriminability(x: &Matrix, labels: &[usize], k: usize) -> Result<Vec<f64>> {
    let n = x.ncols();
    ensure_dim("discriminability labels", n, labels.len())?;
    if k == 0 || k >= n {
        return Err(invalid("neighbour count must satisfy 0 < k < n"));
    }
    let mut out = Vec::with_capacity(n);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let d = x.nrows();
    let flat = x.as_slice();
    for i in 0..n {
        dists.clear();
        let xi = &flat[i * d..(i + 1) * d];
        for j in (0..n).filter(|&j| j != i) {
            let xj = &flat[j * d..(j + 1) * d];
            let sq: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push((sq, j));
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        dists.select_nth_unstable_by(k - 1, cmp);
        let same = dists[..k].iter().filter(|&&(_, j)| labels[j] == labels[i]).count();
        out.push(same as f64 / k as f64);
    }
    Ok(out)
}

/// Most-voted class per example across an ensemble's predicted labels
/// (lowest class on ties).
pub fn majority_vote(predictions: &[Vec<usize>], classes: usize) -> Vec<usize> {
    let n = predictions.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut votes = vec![0.0; classes];
            for p in predictions {
                votes[p[i]] += 1.0;
            }
            argmax(&votes)
        })
        .collect()
}

/// Mean of `values` within each distinct key, as `(key, mean, count)` sorted
/// by key.
pub fn group_means(keys: &[usize], values: &[f64]) -> Result<Vec<(usize, f64, usize)>> {
    ensure_dim("group_means values", keys.len(), values.len())?;
    let mut groups: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (&k, &v) in keys.iter().zip(values) {
        let g = groups.entry(k).or_insert((0.0, 0));
        g.0 += v;
        g.1 += 1;
    }
    Ok(groups.into_iter().map(|(k, (sum, n))| (k, sum / n as f64, n)).collect())
}
