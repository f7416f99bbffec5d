//! Synthetic datasets and label manipulations.

use alloc::vec::Vec;
use alloc::format;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::metrics::LeastSquaresClassifier;
use crate::rng::{seeded, Rng};
use crate::spectra::{project_to_top_pcs, SpectralBasis};
use crate::{Matrix, Vector};

/// Phases used with frequencies `κ = (0, …, 9)`.
pub const PAPER_PHASES: [f64; 10] = [0.0, 3.46, 5.08, 0.45, 2.10, 1.4, 5.36, 0.85, 5.9, 5.16];

/// Points with `|λ(z)|` below this are redrawn.
pub const FREQUENCY_MARGIN: f64 = 1e-9;

/// Per-direction variances of the noise.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Explicit(Vec<f64>),
    /// `v_j = j^{−exponent}` for `j = 1..=q`.
    PowerLaw { exponent: f64 },
}

/// Shape of a synthetic Gaussian class-conditional dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    pub q: usize,
    pub profile: Profile,
    /// `(direction, magnitude)` pairs, directions 1-based. Along each listed
    /// direction the class means are spread evenly over `[−δ, δ]`.
    pub signal: Vec<(usize, f64)>,
    pub classes: usize,
    pub per_class: usize,
    /// Rotate the axes by a random orthogonal matrix drawn from the seed;
    /// otherwise the noise directions are the coordinate axes.
    pub rotate: bool,
}

impl SpectrumSpec {
    /// Power-law spectrum with class signal of magnitude `delta` along
    /// every direction.
    pub fn power_law(q: usize, exponent: f64, delta: f64, classes: usize, per_class: usize) -> Self {
        Self {
            q,
            profile: Profile::PowerLaw { exponent },
            signal: (1..=q).map(|j| (j, delta)).collect(),
            classes,
            per_class,
            rotate: true,
        }
    }

    pub fn variances(&self) -> Result<Vec<f64>> {
        let v: Vec<f64> = match &self.profile {
            Profile::Explicit(v) => v.clone(),
            Profile::PowerLaw { exponent } => {
                (1..=self.q).map(|j| libm::pow(j as f64, -exponent)).collect()
            }
        };
        if v.len() != self.q {
            return Err(Error::DimensionMismatch {
                context: "spectrum profile",
                expected: self.q,
                found: v.len(),
            });
        }
        if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(invalid("profile values must be positive and finite"));
        }
        if v.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("profile values must be non-increasing"));
        }
        Ok(v)
    }

    fn validate(&self) -> Result<Vec<f64>> {
        if self.q == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if self.classes == 0 {
            return Err(invalid("at least one class is required"));
        }
        if self.per_class == 0 {
            return Err(Error::Empty("a dataset with zero examples per class"));
        }
        for &(j, delta) in &self.signal {
            if j == 0 || j > self.q {
                return Err(Error::OutOfRange {
                    what: "signal direction",
                    index: j,
                    lo: 1,
                    hi: self.q,
                });
            }
            if !delta.is_finite() {
                return Err(invalid("signal magnitude must be finite"));
            }
        }
        self.variances()
    }

    /// Class-mean coordinates (before rotation), `q × K`.
    fn mean_coordinates(&self) -> Matrix {
        let mut means = Matrix::zeros(self.q, self.classes);
        if self.classes < 2 {
            return means;
        }
        let half = (self.classes - 1) as f64 / 2.0;
        for &(j, delta) in &self.signal {
            for c in 0..self.classes {
                means[(j - 1, c)] += delta * (c as f64 - half) / half;
            }
        }
        means
    }
}

/// A Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal(q: usize, rng: &mut Rng) -> Matrix {
    let g = Matrix::from_fn(q, q, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut qm = qr.q();
    let r = qr.r();
    for j in 0..q {
        if r[(j, j)] < 0.0 {
            qm.column_mut(j).neg_mut();
        }
    }
    qm
}

fn axes(spec: &SpectrumSpec, rng: &mut Rng) -> Matrix {
    if spec.rotate {
        random_orthogonal(spec.q, rng)
    } else {
        Matrix::identity(spec.q, spec.q)
    }
}

fn gaussian_noise(axes: &Matrix, variances: &[f64], n: usize, rng: &mut Rng) -> Matrix {
    let q = variances.len();
    let scale = Vector::from_iterator(q, variances.iter().map(|&v| libm::sqrt(v)));
    let z = Matrix::from_fn(q, n, |r, _| scale[r] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
    axes * z
}

/// Class `c` is `mean_c + U diag(√v) z`, examples ordered by class.
pub fn gaussian_classes(spec: &SpectrumSpec, seed: u64) -> Result<Dataset> {
    let variances = spec.validate()?;
    let mut rng = seeded(seed);
    let u = axes(spec, &mut rng);
    let means = &u * spec.mean_coordinates();
    let n = spec.per_class * spec.classes;
    let mut x = gaussian_noise(&u, &variances, n, &mut rng);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.classes {
        for i in 0..spec.per_class {
            let col = c * spec.per_class + i;
            let shifted = x.column(col) + means.column(c);
            x.set_column(col, &shifted);
            labels.push(c);
        }
    }
    Dataset::new(x, labels, spec.classes)
}

/// How [`symmetric_binary`] makes the sample symmetric under `x → −x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetry {
    /// Emit every drawn point together with its negation.
    #[default]
    Mirrored,
    /// Draw every point independently from the (symmetric) distribution.
    Independent,
}

/// Zero-mean Gaussian points with the spec's spectrum, labelled by the sign
/// of `vᵀx` (class 1 for positive) where `v = U Σ δ_j e_j` collects the
/// spec's signal. Produces `2 · per_class` examples.
pub fn symmetric_binary(spec: &SpectrumSpec, symmetry: Symmetry, seed: u64) -> Result<Dataset> {
    if spec.classes != 2 {
        return Err(invalid("symmetric binary data needs exactly two classes"));
    }
    let variances = spec.validate()?;
    let mut rng = seeded(seed);
    let u = axes(spec, &mut rng);
    let mut v = Vector::zeros(spec.q);
    for &(j, delta) in &spec.signal {
        v[j - 1] += delta;
    }
    if v.norm() == 0.0 {
        return Err(invalid("the labelling direction is zero"));
    }
    let v = &u * v;
    let n = 2 * spec.per_class;
    let x = match symmetry {
        Symmetry::Mirrored => {
            let half = gaussian_noise(&u, &variances, spec.per_class, &mut rng);
            let mut x = Matrix::zeros(spec.q, n);
            for i in 0..spec.per_class {
                x.set_column(2 * i, &half.column(i));
                x.set_column(2 * i + 1, &(-half.column(i)));
            }
            x
        }
        Symmetry::Independent => gaussian_noise(&u, &variances, n, &mut rng),
    };
    let labels = x.column_iter().map(|c| usize::from(v.dot(&c) > 0.0)).collect();
    Dataset::new(x, labels, 2)
}

/// `λ_j(z) = Σ_{i ≤ j} sin(2π κ_i z + φ_i)` for every prefix `j = 1..=m`.
pub fn frequency_prefix_sums(kappa: &[f64], phi: &[f64], z: f64) -> Vec<f64> {
    let mut acc = 0.0;
    kappa
        .iter()
        .zip(phi)
        .map(|(&k, &p)| {
            acc += libm::sin(2.0 * core::f64::consts::PI * k * z + p);
            acc
        })
        .collect()
}

/// `λ(z)`, the full sum.
pub fn frequency_score(kappa: &[f64], phi: &[f64], z: f64) -> f64 {
    frequency_prefix_sums(kappa, phi, z).last().copied().unwrap_or(0.0)
}

/// Two-dimensional points: `z ~ U[−1, 1]` (row 0, decides the label through
/// the sign of `λ(z)`) and a label-irrelevant `U[−2π, 2π]` coordinate
/// (row 1). Class 1 is `λ(z) > 0`.
pub fn frequency_dataset(kappa: &[f64], phi: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    if kappa.is_empty() {
        return Err(Error::Empty("frequency list"));
    }
    crate::error::ensure_dim("frequency phases", kappa.len(), phi.len())?;
    if kappa.iter().chain(phi).any(|v| !v.is_finite()) {
        return Err(invalid("frequencies and phases must be finite"));
    }
    let mut rng = seeded(seed);
    let mut x = Matrix::zeros(2, n);
    let mut labels = Vec::with_capacity(n);
    const MAX_DRAWS: usize = 10_000;
    for i in 0..n {
        let mut draws = 0;
        let (z, score) = loop {
            let z: f64 = rng.random_range(-1.0..=1.0);
            let s = frequency_score(kappa, phi, z);
            if s.abs() >= FREQUENCY_MARGIN {
                break (z, s);
            }
            draws += 1;
            if draws == MAX_DRAWS {
                return Err(invalid(format!(
                    "λ(z) stays within {FREQUENCY_MARGIN} of zero after {MAX_DRAWS} draws"
                )));
            }
        };
        x[(0, i)] = z;
        x[(1, i)] = rng.random_range(-2.0 * core::f64::consts::PI..=2.0 * core::f64::consts::PI);
        labels.push(usize::from(score > 0.0));
    }
    Dataset::new(x, labels, 2)
}

/// Labels permuted uniformly at random; for more than one example an
/// identity permutation is redrawn once.
pub fn shuffle_labels(data: &Dataset, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let mut perm: Vec<usize> = (0..data.len()).collect();
    perm.shuffle(&mut rng);
    if data.len() > 1 && perm.iter().enumerate().all(|(i, &p)| i == p) {
        perm.shuffle(&mut rng);
    }
    let labels = perm.iter().map(|&p| data.labels()[p]).collect();
    data.with_labels(labels).expect("permuted labels are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelSource {
    #[default]
    Original,
    Shuffled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableLabels {
    pub data: Dataset,
    /// Labels changed relative to the starting labels.
    pub flipped: usize,
}

/// Starting from the original or shuffled labels, fits the least-squares
/// separator on the projection onto the top `p` principal components and
/// replaces every label it gets wrong by its prediction.
pub fn make_separable_by_top_pcs(data: &Dataset, p: usize, source: LabelSource, seed: u64) -> Result<SeparableLabels> {
    if data.classes() != 2 {
        return Err(invalid("separable relabelling needs exactly two classes"));
    }
    if p == 0 || p > data.dim() {
        return Err(Error::OutOfRange {
            what: "principal components",
            index: p,
            lo: 1,
            hi: data.dim(),
        });
    }
    let start = match source {
        LabelSource::Original => data.clone(),
        LabelSource::Shuffled => shuffle_labels(data, seed),
    };
    let basis = SpectralBasis::of_data(data.x())?;
    let projected = start.with_x(project_to_top_pcs(data.x(), &basis, p)?)?;
    let clf = LeastSquaresClassifier::fit(&projected)?;
    let predicted = clf.predict(projected.x());
    let flipped = predicted.iter().zip(start.labels()).filter(|(a, b)| a != b).count();
    Ok(SeparableLabels {
        data: start.with_labels(predicted)?,
        flipped,
    })
}

/// Examples of `a` followed by those of `b`.
pub fn concat(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    crate::error::ensure_dim("concat dimension", a.dim(), b.dim())?;
    let classes = a.classes().max(b.classes());
    let mut x = Matrix::zeros(a.dim(), a.len() + b.len());
    x.columns_mut(0, a.len()).copy_from(a.x());
    x.columns_mut(a.len(), b.len()).copy_from(b.x());
    let mut labels = a.labels().to_vec();
    labels.extend_from_slice(b.labels());
    Dataset::new(x, labels, classes)
}

/// The first `n_first` examples and the rest.
pub fn split_at(data: &Dataset, n_first: usize) -> (Dataset, Dataset) {
    let n_first = n_first.min(data.len());
    let first: Vec<usize> = (0..n_first).collect();
    let rest: Vec<usize> = (n_first..data.len()).collect();
    (data.select(&first), data.select(&rest))
}

/// A uniformly random reordering of the examples.
pub fn shuffle_examples(data: &Dataset, seed: u64) -> Dataset {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut seeded(seed));
    data.select(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::linalg::max_abs;
    use crate::spectra::project_to_top_pcs;

    #[test]
    fn isotropic_covariance_converges() {
        let spec = SpectrumSpec {
            q: 4,
            profile: Profile::Explicit(vec![1.0; 4]),
            signal: vec![],
            classes: 1,
            per_class: 20_000,
            rotate: true,
        };
        let d = gaussian_classes(&spec, 1).unwrap();
        let n = d.len() as f64;
        let cov = d.x() * d.x().transpose() / n;
        assert!(max_abs(&(cov - Matrix::identity(4, 4))) < 5.0 / libm::sqrt(n));
    }

    #[test]
    fn signal_on_first_pc_only() {
        let spec = SpectrumSpec {
            q: 6,
            profile: Profile::PowerLaw { exponent: 0.5 },
            signal: vec![(1, 1.5)],
            classes: 2,
            per_class: 2000,
            rotate: false,
        };
        let d = gaussian_classes(&spec, 2).unwrap();
        let full = LeastSquaresClassifier::fit(&d).unwrap().accuracy(&d);
        let basis = SpectralBasis::of_data(d.x()).unwrap();
        let proj = d.with_x(project_to_top_pcs(d.x(), &basis, 1).unwrap()).unwrap();
        let one = LeastSquaresClassifier::fit(&proj).unwrap().accuracy(&proj);
        assert!((full - one).abs() < 0.01, "{full} vs {one}");
    }

    #[test]
    fn spec_errors() {
        let mut spec = SpectrumSpec::power_law(4, 1.0, 1.0, 2, 0);
        assert!(matches!(gaussian_classes(&spec, 0), Err(Error::Empty(_))));
        spec.per_class = 3;
        spec.signal = vec![(5, 1.0)];
        assert!(matches!(gaussian_classes(&spec, 0), Err(Error::OutOfRange { .. })));
        spec.signal = vec![(1, 1.0)];
        spec.profile = Profile::Explicit(vec![1.0, 2.0, 0.5, 0.1]);
        assert!(gaussian_classes(&spec, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SpectrumSpec::power_law(5, 1.0, 0.5, 3, 10);
        assert_eq!(gaussian_classes(&spec, 4).unwrap(), gaussian_classes(&spec, 4).unwrap());
        assert_ne!(gaussian_classes(&spec, 4).unwrap(), gaussian_classes(&spec, 5).unwrap());
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let q = random_orthogonal(7, &mut seeded(3));
        assert!(max_abs(&(q.transpose() * &q - Matrix::identity(7, 7))) < 1e-12);
    }

    #[test]
    fn mirrored_data_is_symmetric() {
        let spec = SpectrumSpec::power_law(5, 1.0, 1.0, 2, 50);
        let d = symmetric_binary(&spec, Symmetry::Mirrored, 6).unwrap();
        assert_eq!(d.len(), 100);
        let sum: Vector = d.x().column_iter().map(|c| c.into_owned()).sum();
        assert_eq!(sum, Vector::zeros(5));
        for i in 0..50 {
            assert_eq!(d.x().column(2 * i), -d.x().column(2 * i + 1));
            assert_ne!(d.labels()[2 * i], d.labels()[2 * i + 1]);
        }
        let ind = symmetric_binary(&spec, Symmetry::Independent, 6).unwrap();
        assert_eq!(ind.len(), 100);
        let bad = SpectrumSpec { classes: 3, ..spec };
        assert!(symmetric_binary(&bad, Symmetry::Mirrored, 0).is_err());
    }

    #[test]
    fn frequency_cases() {
        let kappa: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let d = frequency_dataset(&kappa, &PAPER_PHASES, 2000, 7).unwrap();
        for (i, c) in d.x().column_iter().enumerate() {
            assert!((-1.0..=1.0).contains(&c[0]));
            assert!(c[1].abs() <= 2.0 * core::f64::consts::PI);
            let mut s = 0.0;
            for k in 0..10 {
                s += libm::sin(2.0 * core::f64::consts::PI * kappa[k] * c[0] + PAPER_PHASES[k]);
            }
            assert_eq!(d.labels()[i], usize::from(s > 0.0));
        }

        let constant = frequency_dataset(&[0.0], &[1.0], 50, 8).unwrap();
        assert!(constant.labels().iter().all(|&l| l == 1));
        assert!(frequency_dataset(&[0.0], &[0.0], 5, 8).is_err());
        assert!(matches!(frequency_dataset(&[], &[], 5, 8), Err(Error::Empty(_))));
        assert!(frequency_dataset(&[1.0], &[], 5, 8).is_err());
    }

    #[test]
    fn shuffled_labels_keep_counts() {
        let spec = SpectrumSpec::power_law(3, 1.0, 2.0, 2, 600);
        let d = gaussian_classes(&spec, 9).unwrap();
        let s = shuffle_labels(&d, 10);
        assert_eq!(s.x(), d.x());
        assert_eq!(s.class_counts(), d.class_counts());
        assert_ne!(s.labels(), d.labels());
    }

    #[test]
    fn separable_relabelling() {
        let spec = SpectrumSpec::power_law(8, 1.0, 0.3, 2, 200);
        let d = gaussian_classes(&spec, 11).unwrap();
        for source in [LabelSource::Original, LabelSource::Shuffled] {
            let out = make_separable_by_top_pcs(&d, 3, source, 12).unwrap();
            let basis = SpectralBasis::of_data(d.x()).unwrap();
            let z = basis.top(3).transpose() * d.x();
            // perceptron on the projection must reach zero training errors
            let y: Vec<f64> = out.data.labels().iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
            let mut w = Vector::zeros(3);
            let mut converged = false;
            for _ in 0..10_000 {
                let mut mistakes = 0;
                for (c, &yi) in z.column_iter().zip(&y) {
                    if yi * w.dot(&c) <= 0.0 {
                        w += c * yi;
                        mistakes += 1;
                    }
                }
                if mistakes == 0 {
                    converged = true;
                    break;
                }
            }
            assert!(converged);
        }
        assert!(make_separable_by_top_pcs(&d, 0, LabelSource::Original, 0).is_err());
        assert!(make_separable_by_top_pcs(&d, 9, LabelSource::Original, 0).is_err());

        // already separable by the full-dimensional LS rule: nothing changes
        let clf = LeastSquaresClassifier::fit(&d).unwrap();
        let sep = d.with_labels(clf.predict(d.x())).unwrap();
        let out = make_separable_by_top_pcs(&sep, 8, LabelSource::Original, 0).unwrap();
        assert_eq!(out.flipped, 0);
        assert_eq!(out.data, sep);
    }
}
