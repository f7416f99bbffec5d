//! Experiment configuration: a TOML file with a handful of sections, every
//! key optional except `experiment.kind`. Missing keys take the per-kind
//! defaults from [`Settings::defaults`]; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pcbias_core::datagen::Symmetry;
use pcbias_core::linnet::{BatchMode, InitDistribution, InitScheme, LossKind};
use serde::Deserialize;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    PcConvergence,
    WhiteningControl,
    Thm3Check,
    Thm4Check,
    RandmatVerify,
    ReluPcbias,
    ProjectionEval,
    AmplifyEarlystop,
    RandomLabels,
    LocCorrelation,
    FrequencyBias,
}

impl Kind {
    pub const ALL: [Kind; 11] = [
        Kind::PcConvergence,
        Kind::WhiteningControl,
        Kind::Thm3Check,
        Kind::Thm4Check,
        Kind::RandmatVerify,
        Kind::ReluPcbias,
        Kind::ProjectionEval,
        Kind::AmplifyEarlystop,
        Kind::RandomLabels,
        Kind::LocCorrelation,
        Kind::FrequencyBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::PcConvergence => "pc-convergence",
            Kind::WhiteningControl => "whitening-control",
            Kind::Thm3Check => "thm3-check",
            Kind::Thm4Check => "thm4-check",
            Kind::RandmatVerify => "randmat-verify",
            Kind::ReluPcbias => "relu-pcbias",
            Kind::ProjectionEval => "projection-eval",
            Kind::AmplifyEarlystop => "amplify-earlystop",
            Kind::RandomLabels => "random-labels",
            Kind::LocCorrelation => "loc-correlation",
            Kind::FrequencyBias => "frequency-bias",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Gaussian,
    Symmetric,
    Frequency,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    Std,
    Glorot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistName {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    L2,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryName {
    Mirrored,
    Independent,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<Kind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Also write per-member weight traces (pc-convergence, whitening-control).
    pub traces: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: Option<DataSource>,
    pub path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub q: Option<usize>,
    pub exponent: Option<f64>,
    /// Explicit variances; overrides `exponent`.
    pub variances: Option<Vec<f64>>,
    /// Class-mean spread along direction j is `delta · √v_j`.
    pub delta: Option<f64>,
    /// Number of leading directions that carry class signal.
    pub signal_top: Option<usize>,
    pub classes: Option<usize>,
    pub per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub rotate: Option<bool>,
    pub symmetry: Option<SymmetryName>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub init: Option<InitName>,
    pub distribution: Option<DistName>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    /// Absolute step size; overrides `lr_scale`.
    pub lr: Option<f64>,
    /// Step size as a fraction of `1 / (d_1 · L)`.
    pub lr_scale: Option<f64>,
    pub epochs: Option<usize>,
    /// 0 for full-batch gradient descent.
    pub batch: Option<usize>,
    pub loss: Option<LossName>,
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub members: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub top_components: Option<usize>,
    pub tolerance: Option<f64>,
    pub widths: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub drift: Option<bool>,
    pub drift_factor: Option<f64>,
    pub horizon: Option<usize>,
    pub ps: Option<Vec<usize>>,
    pub fraction: Option<f64>,
    pub factor: Option<f64>,
    pub k: Option<usize>,
    pub hidden: Option<usize>,
    pub init_scale: Option<f64>,
    pub check_per_class: Option<usize>,
}

/// Second arm of `random-labels`: labels made separable by the top `P`
/// principal components.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableSection {
    pub enabled: Option<bool>,
    pub ps: Option<Vec<usize>>,
    pub delta: Option<f64>,
    pub per_class: Option<usize>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub epochs: Option<usize>,
    pub target_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub separable: SeparableSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        toml::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    pub fn for_kind(kind: Kind) -> Self {
        let mut c = Self::default();
        c.experiment.kind = Some(kind);
        c
    }

    pub fn resolve(&self) -> Result<Settings> {
        let kind = self
            .experiment
            .kind
            .ok_or_else(|| LabError::Config("missing `experiment.kind`".into()))?;
        let mut s = Settings::defaults(kind);
        s.overlay(self);
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lr {
    Absolute(f64),
    Scaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub q: usize,
    pub exponent: f64,
    pub variances: Option<Vec<f64>>,
    pub delta: f64,
    pub signal_top: usize,
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub rotate: bool,
    pub symmetry: Symmetry,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableSettings {
    pub enabled: bool,
    pub ps: Vec<usize>,
    pub delta: f64,
    pub per_class: usize,
    pub depth: usize,
    pub width: usize,
    pub epochs: usize,
    pub target_accuracy: f64,
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub kind: Kind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub traces: bool,
    pub data: DataSettings,
    pub depth: usize,
    pub width: usize,
    pub init: InitScheme,
    pub distribution: InitDistribution,
    pub lr: Lr,
    pub epochs: usize,
    pub batch: BatchMode,
    pub loss: LossKind,
    pub snapshot_every: usize,
    pub members: usize,
    pub top_components: usize,
    pub tolerance: f64,
    pub widths: Vec<usize>,
    pub trials: usize,
    pub drift: bool,
    pub drift_factor: f64,
    pub horizon: usize,
    pub ps: Vec<usize>,
    pub fraction: f64,
    pub factor: f64,
    pub k: usize,
    pub hidden: usize,
    pub init_scale: f64,
    pub check_per_class: usize,
    pub separable: SeparableSettings,
}

impl Settings {
    /// Desk-scale defaults of each experiment.
    pub fn defaults(kind: Kind) -> Self {
        let mut s = Settings {
            kind,
            seed: 0,
            out: None,
            traces: false,
            data: DataSettings {
                source: DataSource::Gaussian,
                path: None,
                test_path: None,
                q: 32,
                exponent: 1.0,
                variances: None,
                delta: 0.5,
                signal_top: 32,
                classes: 2,
                per_class: 500,
                test_per_class: 0,
                rotate: true,
                symmetry: Symmetry::Mirrored,
                points: 10_000,
            },
            depth: 5,
            width: 256,
            init: InitScheme::Std,
            distribution: InitDistribution::Uniform,
            lr: Lr::Scaled(0.1),
            epochs: 400,
            batch: BatchMode::Full,
            loss: LossKind::L2,
            snapshot_every: 1,
            members: 10,
            top_components: 10,
            tolerance: 0.05,
            widths: vec![128, 256, 512],
            trials: 200,
            drift: false,
            drift_factor: 2.0,
            horizon: 20,
            ps: vec![1, 2, 4, 8, 16, 32],
            fraction: 0.015,
            factor: 10.0,
            k: 20,
            hidden: 100,
            init_scale: 1.0,
            check_per_class: 2000,
            separable: SeparableSettings {
                enabled: false,
                ps: vec![2, 8, 32],
                delta: 0.15,
                per_class: 500,
                depth: 3,
                width: 128,
                epochs: 3000,
                target_accuracy: 0.9,
            },
        };
        match kind {
            Kind::PcConvergence | Kind::WhiteningControl => {}
            Kind::Thm3Check | Kind::Thm4Check => {
                s.data.q = 20;
                s.data.exponent = 2.0;
                s.data.signal_top = 20;
                s.width = 512;
                s.members = 1;
                s.epochs = if kind == Kind::Thm3Check { 50 } else { 200 };
                s.tolerance = if kind == Kind::Thm3Check { 0.05 } else { 0.02 };
            }
            Kind::RandmatVerify => {
                s.data.q = 16;
                s.depth = 4;
            }
            Kind::ReluPcbias => {
                s.data.source = DataSource::Symmetric;
                s.data.q = 20;
                s.data.delta = 1.0;
                s.data.signal_top = 20;
                s.data.per_class = 250;
                s.depth = 2;
                s.lr = Lr::Scaled(0.4);
            }
            Kind::ProjectionEval => {
                s.data.test_per_class = 500;
                s.depth = 3;
                s.width = 128;
                s.epochs = 200;
                s.snapshot_every = 10;
                s.members = 5;
            }
            Kind::AmplifyEarlystop => {
                s.data.q = 64;
                s.data.exponent = 2.0;
                s.data.delta = 0.4;
                s.data.signal_top = 8;
                s.data.per_class = 20;
                s.data.test_per_class = 500;
                s.depth = 3;
                s.width = 128;
                s.epochs = 3000;
                s.snapshot_every = 25;
                s.members = 5;
            }
            Kind::RandomLabels => {
                s.data.q = 64;
                s.data.delta = 1.0;
                s.data.signal_top = 4;
                s.data.per_class = 24;
                s.depth = 2;
                s.epochs = 100;
                s.separable.enabled = true;
            }
            Kind::LocCorrelation => {
                s.data.exponent = 2.0;
                s.data.test_per_class = 500;
                s.depth = 3;
                s.width = 128;
                s.members = 5;
            }
            Kind::FrequencyBias => {
                s.data.source = DataSource::Frequency;
                s.data.q = 2;
            }
        }
        s.data.signal_top = s.data.signal_top.min(s.data.q);
        s
    }

    fn overlay(&mut self, c: &ExperimentConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        let e = &c.experiment;
        set(&mut self.seed, &e.seed);
        if e.out.is_some() {
            self.out = e.out.clone();
        }
        set(&mut self.traces, &e.traces);

        let d = &c.data;
        let q_given = d.q.is_some();
        set(&mut self.data.source, &d.source);
        if d.path.is_some() {
            self.data.path = d.path.clone();
        }
        if d.test_path.is_some() {
            self.data.test_path = d.test_path.clone();
        }
        set(&mut self.data.q, &d.q);
        set(&mut self.data.exponent, &d.exponent);
        if d.variances.is_some() {
            self.data.variances = d.variances.clone();
        }
        set(&mut self.data.delta, &d.delta);
        // signal on every direction unless limited explicitly
        if q_given && d.signal_top.is_none() && self.data.signal_top > self.data.q {
            self.data.signal_top = self.data.q;
        }
        set(&mut self.data.signal_top, &d.signal_top);
        set(&mut self.data.classes, &d.classes);
        set(&mut self.data.per_class, &d.per_class);
        set(&mut self.data.test_per_class, &d.test_per_class);
        set(&mut self.data.rotate, &d.rotate);
        if let Some(sym) = d.symmetry {
            self.data.symmetry = match sym {
                SymmetryName::Mirrored => Symmetry::Mirrored,
                SymmetryName::Independent => Symmetry::Independent,
            };
        }
        set(&mut self.data.points, &d.points);

        let n = &c.network;
        set(&mut self.depth, &n.depth);
        set(&mut self.width, &n.width);
        if let Some(i) = n.init {
            self.init = match i {
                InitName::Std => InitScheme::Std,
                InitName::Glorot => InitScheme::GlorotUniform,
            };
        }
        if let Some(dist) = n.distribution {
            self.distribution = match dist {
                DistName::Uniform => InitDistribution::Uniform,
                DistName::Gaussian => InitDistribution::Gaussian,
            };
        }

        let t = &c.training;
        if let Some(lr) = t.lr {
            self.lr = Lr::Absolute(lr);
        } else if let Some(scale) = t.lr_scale {
            self.lr = Lr::Scaled(scale);
        }
        set(&mut self.epochs, &t.epochs);
        if let Some(b) = t.batch {
            self.batch = if b == 0 { BatchMode::Full } else { BatchMode::MiniBatch { size: b } };
        }
        if let Some(l) = t.loss {
            self.loss = match l {
                LossName::L2 => LossKind::L2,
                LossName::CrossEntropy => LossKind::CrossEntropy,
            };
        }
        set(&mut self.snapshot_every, &t.snapshot_every);
        set(&mut self.members, &c.ensemble.members);

        let a = &c.analysis;
        set(&mut self.top_components, &a.top_components);
        set(&mut self.tolerance, &a.tolerance);
        set(&mut self.widths, &a.widths);
        set(&mut self.trials, &a.trials);
        set(&mut self.drift, &a.drift);
        set(&mut self.drift_factor, &a.drift_factor);
        set(&mut self.horizon, &a.horizon);
        set(&mut self.ps, &a.ps);
        set(&mut self.fraction, &a.fraction);
        set(&mut self.factor, &a.factor);
        set(&mut self.k, &a.k);
        set(&mut self.hidden, &a.hidden);
        set(&mut self.init_scale, &a.init_scale);
        set(&mut self.check_per_class, &a.check_per_class);

        let p = &c.separable;
        let sep = &mut self.separable;
        set(&mut sep.enabled, &p.enabled);
        set(&mut sep.ps, &p.ps);
        set(&mut sep.delta, &p.delta);
        set(&mut sep.per_class, &p.per_class);
        set(&mut sep.depth, &p.depth);
        set(&mut sep.width, &p.width);
        set(&mut sep.epochs, &p.epochs);
        set(&mut sep.target_accuracy, &p.target_accuracy);
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(LabError::Config(msg.to_string()));
        let d = &self.data;
        let positive_counts = [
            ("data.q", d.q),
            ("data.classes", d.classes),
            ("data.per_class", d.per_class),
            ("data.points", d.points),
            ("network.depth", self.depth),
            ("network.width", self.width),
            ("training.snapshot_every", self.snapshot_every),
            ("ensemble.members", self.members),
            ("analysis.top_components", self.top_components),
            ("analysis.trials", self.trials),
            ("analysis.horizon", self.horizon),
            ("analysis.k", self.k),
            ("analysis.hidden", self.hidden),
            ("analysis.check_per_class", self.check_per_class),
            ("separable.per_class", self.separable.per_class),
            ("separable.depth", self.separable.depth),
            ("separable.width", self.separable.width),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(LabError::Config(format!("`{name}` must be positive")));
            }
        }
        let positive_reals = [
            ("analysis.tolerance", self.tolerance),
            ("analysis.drift_factor", self.drift_factor),
            ("analysis.fraction", self.fraction),
            ("analysis.factor", self.factor),
            ("analysis.init_scale", self.init_scale),
            ("separable.target_accuracy", self.separable.target_accuracy),
        ];
        for (name, v) in positive_reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::Config(format!("`{name}` must be positive")));
            }
        }
        if !d.exponent.is_finite() {
            return bad("`data.exponent` must be finite");
        }
        if !(d.delta >= 0.0 && d.delta.is_finite()) || !(self.separable.delta >= 0.0) {
            return bad("signal magnitudes must be non-negative");
        }
        match self.lr {
            Lr::Absolute(v) | Lr::Scaled(v) if !(v > 0.0 && v.is_finite()) => {
                return bad("the learning rate must be positive");
            }
            _ => {}
        }
        if d.signal_top > d.q {
            return bad("`data.signal_top` cannot exceed `data.q`");
        }
        if let Some(v) = &d.variances {
            if v.len() != d.q || v.iter().any(|x| !(*x > 0.0)) {
                return bad("`data.variances` needs q positive entries");
            }
        }
        if d.source == DataSource::File && d.path.is_none() {
            return bad("`data.source = \"file\"` needs `data.path`");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("`analysis.widths` needs positive entries");
        }
        if self.ps.is_empty() || self.ps.contains(&0) || self.separable.ps.contains(&0) {
            return bad("component counts must be positive");
        }
        if self.fraction > 1.0 {
            return bad("`analysis.fraction` must be at most 1");
        }
        if !self.hidden.is_multiple_of(2) {
            return bad("`analysis.hidden` must be even for the paired ReLU init");
        }
        Ok(())
    }

    /// `q, w, …, w, K` for the configured depth and width.
    pub fn net_widths(&self, q: usize, classes: usize) -> Vec<usize> {
        chain_widths(q, self.width, self.depth, classes)
    }
}

pub fn chain_widths(q: usize, width: usize, depth: usize, out: usize) -> Vec<usize> {
    let mut w = vec![q];
    w.extend(std::iter::repeat_n(width, depth.saturating_sub(1)));
    w.push(out);
    w
}
