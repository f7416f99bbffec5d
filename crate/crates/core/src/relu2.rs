//! Two-layer ReLU model `f(x) = aᵀ σ(W x)` with symmetric initialization,
//! trained on the first layer only, with ±1 labels.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{ensure_dim, invalid, Error, Result};
use crate::linnet::{TraceStatus, DIVERGENCE_LOSS};
use crate::rng::{seeded, Rng};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Relu2Net {
    /// `m × d`, trained.
    w: Matrix,
    /// Length `m`, frozen.
    a: Vector,
}

impl Relu2Net {
    pub fn new(w: Matrix, a: Vector) -> Result<Self> {
        ensure_dim("relu2 output weights", w.nrows(), a.len())?;
        Ok(Self { w, a })
    }

    /// Symmetric init: rows `2i` are drawn from `N(0, w_std²)`, rows `2i+1`
    /// are their exact negation; `a_{2i} = ±a_scale` with a random sign and
    /// `a_{2i+1} = −a_{2i}`.
    pub fn init_with(m: usize, d: usize, w_std: f64, a_scale: f64, rng: &mut Rng) -> Result<Self> {
        if m == 0 || !m.is_multiple_of(2) {
            return Err(invalid("hidden width must be a positive even number"));
        }
        if d == 0 {
            return Err(invalid("input dimension must be positive"));
        }
        if !(a_scale > 0.0) || !(w_std >= 0.0) {
            return Err(invalid("init scales must be positive"));
        }
        let mut w = Matrix::zeros(m, d);
        let mut a = Vector::zeros(m);
        for i in 0..m / 2 {
            for j in 0..d {
                let v: f64 = StandardNormal.sample(rng);
                w[(2 * i, j)] = w_std * v;
                w[(2 * i + 1, j)] = -w_std * v;
            }
            let s = if rng.random::<bool>() { a_scale } else { -a_scale };
            a[2 * i] = s;
            a[2 * i + 1] = -s;
        }
        Ok(Self { w, a })
    }

    /// [`Relu2Net::init_with`] with `w_std = 1/√d`.
    pub fn init(m: usize, d: usize, seed: u64, scale: f64) -> Result<Self> {
        let w_std = 1.0 / libm::sqrt(d.max(1) as f64);
        Self::init_with(m, d, w_std, scale, &mut seeded(seed))
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn a(&self) -> &Vector {
        &self.a
    }

    pub fn hidden(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: &Vector) -> Result<f64> {
        ensure_dim("relu2 forward", self.input_dim(), x.len())?;
        Ok((&self.w * x).iter().zip(self.a.iter()).map(|(h, a)| a * h.max(0.0)).sum())
    }

    /// Outputs for every column of a `d × n` matrix.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Vector> {
        ensure_dim("relu2 forward_batch", self.input_dim(), x.nrows())?;
        let h = (&self.w * x).map(|v| v.max(0.0));
        Ok(h.tr_mul(&self.a))
    }

    /// `½ aᵀ W`, the linear map the network computes while the pairing holds.
    pub fn effective_linear(&self) -> Vector {
        self.w.tr_mul(&self.a) * 0.5
    }

    /// `½ Σ_i (f(x_i) − y_i)²`.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        let y = Vector::from_vec(data.signed_labels()?);
        let f = self.forward_batch(data.x())?;
        Ok(0.5 * (f - y).norm_squared())
    }

    /// Exact gradient of the loss with respect to `W`; row `r` is
    /// `a_r Σ_{i: w_r·x_i ≥ 0} (f(x_i) − y_i) x_iᵀ`.
    pub fn gradient(&self, data: &Dataset) -> Result<Matrix> {
        let y = Vector::from_vec(data.signed_labels()?);
        let x = data.x();
        let pre = &self.w * x;
        let resid = self.forward_batch(x)? - y;
        // gated[r, i] = a_r 𝟙(w_r·x_i ≥ 0) (f(x_i) − y_i)
        let gated = Matrix::from_fn(self.hidden(), x.ncols(), |r, i| {
            if pre[(r, i)] >= 0.0 {
                self.a[r] * resid[i]
            } else {
                0.0
            }
        });
        Ok(gated * x.transpose())
    }

    fn step(&mut self, data: &Dataset, lr: f64) -> Result<()> {
        let g = self.gradient(data)?;
        self.w -= g * lr;
        Ok(())
    }
}

/// Whether rows and output weights still come in exactly negated pairs.
pub fn is_paired(net: &Relu2Net) -> bool {
    (0..net.hidden() / 2).all(|i| {
        net.a[2 * i] == -net.a[2 * i + 1]
            && net
                .w
                .row(2 * i)
                .iter()
                .zip(net.w.row(2 * i + 1).iter())
                .all(|(u, v)| *u == -*v)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relu2Snapshot {
    pub epoch: usize,
    pub loss: f64,
    pub w: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relu2Trace {
    pub snapshots: Vec<Relu2Snapshot>,
    pub status: TraceStatus,
}

/// Full-batch gradient descent on `W` with `a` frozen; snapshots at epoch 0,
/// every `snapshot_every` epochs and at the end.
pub fn train(net: &mut Relu2Net, data: &Dataset, lr: f64, epochs: usize, snapshot_every: usize) -> Result<Relu2Trace> {
    ensure_dim("relu2 train input", net.input_dim(), data.dim())?;
    if !(lr >= 0.0) {
        return Err(invalid("learning rate must be non-negative"));
    }
    if snapshot_every == 0 {
        return Err(invalid("snapshot cadence must be at least 1"));
    }
    let mut snapshots = alloc::vec![Relu2Snapshot {
        epoch: 0,
        loss: net.loss(data)?,
        w: net.w.clone(),
    }];
    for epoch in 1..=epochs {
        net.step(data, lr)?;
        let loss = net.loss(data)?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Ok(Relu2Trace {
                snapshots,
                status: TraceStatus::Diverged { epoch, loss },
            });
        }
        if epoch % snapshot_every == 0 || epoch == epochs {
            snapshots.push(Relu2Snapshot {
                epoch,
                loss,
                w: net.w.clone(),
            });
        }
    }
    Ok(Relu2Trace {
        snapshots,
        status: TraceStatus::Completed,
    })
}

/// Which closed form [`predicted_update`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    /// `Δw_r = −μ a_r [¼ aᵀ W Σ_XX − m̃_r]`: the row update with `f = ½aᵀWx`
    /// and the half-space second moment replaced by `½ Σ_XX`.
    #[default]
    Derived,
    /// `ΔW = −μ ½ [(aaᵀ) W Σ_XX − M̃]` taken verbatim, with `M̃_r = a_r m̃_r`.
    Verbatim,
}

/// Predicted first-layer update, where `m̃_r = Σ_{i: w_r·x_i ≥ 0} y_i x_i`
/// (the difference of the class sums restricted to the half-space of `w_r`).
pub fn predicted_update(net: &Relu2Net, data: &Dataset, lr: f64, form: UpdateForm) -> Result<Matrix> {
    ensure_dim("relu2 predicted_update input", net.input_dim(), data.dim())?;
    let y = data.signed_labels()?;
    let x = data.x();
    let pre = &net.w * x;
    let gated = Matrix::from_fn(net.hidden(), x.ncols(), |r, i| if pre[(r, i)] >= 0.0 { y[i] } else { 0.0 });
    let m_tilde = gated * x.transpose();
    let sxx = x * x.transpose();
    // (aaᵀ) W Σ = a (aᵀ W Σ)
    let shared = (net.w.tr_mul(&net.a)).transpose() * sxx;
    let mut out = Matrix::zeros(net.hidden(), net.input_dim());
    for r in 0..net.hidden() {
        let a_r = net.a[r];
        let row = match form {
            UpdateForm::Derived => (&shared * (0.25 * a_r) - m_tilde.row(r) * a_r) * -lr,
            UpdateForm::Verbatim => (&shared * a_r - m_tilde.row(r) * a_r) * (-0.5 * lr),
        };
        out.set_row(r, &row);
    }
    Ok(out)
}

/// `‖predicted − exact‖_F / ‖exact‖_F` for the first step from `net`.
pub fn update_error(net: &Relu2Net, data: &Dataset, lr: f64, form: UpdateForm) -> Result<f64> {
    let exact = net.gradient(data)? * -lr;
    let predicted = predicted_update(net, data, lr, form)?;
    let den = exact.norm();
    if den == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((predicted - &exact).norm() / den)
}
