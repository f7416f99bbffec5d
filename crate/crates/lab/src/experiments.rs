//! The experiment kinds. Each one turns resolved [`Settings`] into an
//! [`Outcome`]: csv tables, summary entries, pass/fail checks and plots.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use pcbias_core::datagen::{
    frequency_dataset, frequency_prefix_sums, gaussian_classes, make_separable_by_top_pcs, shuffle_labels,
    symmetric_binary, LabelSource, Profile, SpectrumSpec, PAPER_PHASES,
};
use pcbias_core::linnet::{
    accuracy, correctness, optimal_solution, train, DeepLinearNet, InitScheme, TrainConfig, TrainTrace, TraceStatus,
};
use pcbias_core::metrics::{
    accessibility, critical_frequency, critical_principal_components, discriminability, group_means, half_times,
    CriticalMode, LeastSquaresClassifier, PredictionTensor,
};
use pcbias_core::relu2::{self, Relu2Net, UpdateForm};
use pcbias_core::rng::{member_seed, seeded};
use pcbias_core::spectra::{amplify_pcs, project_to_top_pcs, Whitener};
use pcbias_core::stats::{correlate, mean, CorrelationKind};
use pcbias_core::theory::{
    directional_gradient_check, first_exceedance, first_order_residual, gradient_check, normalized_column_error,
    predict_thm4, predict_trajectory, principal_weights, random_matrix_trial, scale_matrix_drift,
    summarize_random_matrix_trials,
};
use pcbias_core::{Dataset, Matrix, SpectralBasis};
use rayon::prelude::*;

use crate::config::{chain_widths, DataSource, Kind, Lr, Settings};
use crate::error::{LabError, Result};
use crate::io::{fmt_f64, load_dataset, write_file, Cell, Format, Table};
use crate::plot::LinePlot;
use crate::report::{merge, optimum_table, Trace};

const WHITEN_EPS: f64 = 1e-12;
const PSEUDO_INVERSE_TOL: f64 = 1e-12;
const AUX_BASE: usize = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub kind: String,
    pub tables: Vec<Table>,
    pub summary: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub plots: Vec<LinePlot>,
}

impl Outcome {
    fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            tables: Vec::new(),
            summary: Vec::new(),
            checks: Vec::new(),
            plots: Vec::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl Display) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    fn note_f64(&mut self, key: &str, value: f64) {
        self.summary.push((key.to_string(), fmt_f64(value)));
    }

    fn check(&mut self, name: &str, value: f64, bound: &str, passed: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            bound: bound.to_string(),
            passed,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new("summary", &["key", "value"]);
        t.push(vec!["kind".into(), self.kind.as_str().into()]);
        for (k, v) in &self.summary {
            t.push(vec![k.as_str().into(), v.as_str().into()]);
        }
        t
    }

    pub fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["check", "value", "bound", "passed"]);
        for c in &self.checks {
            t.push(vec![c.name.as_str().into(), c.value.into(), c.bound.as_str().into(), c.passed.into()]);
        }
        t
    }

    /// Writes every table as `<name>.csv` (plus `summary.csv`, `checks.csv`)
    /// and, with `plots`, every chart as `<name>.svg`.
    pub fn write(&self, dir: &Path, plots: bool) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for t in self.tables.iter().chain([&self.summary_table(), &self.checks_table()]) {
            let path = dir.join(format!("{}.csv", t.name));
            write_file(&path, &t.to_csv())?;
            written.push(path);
        }
        if plots {
            for p in &self.plots {
                let path = dir.join(format!("{}.svg", p.name));
                write_file(&path, p.to_svg().as_bytes())?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

pub fn run(s: &Settings) -> Result<Outcome> {
    let mut out = match s.kind {
        Kind::PcConvergence => pc_ensemble(s, false),
        Kind::WhiteningControl => pc_ensemble(s, true),
        Kind::Thm3Check => theorem_check(s, false),
        Kind::Thm4Check => theorem_check(s, true),
        Kind::RandmatVerify => randmat_verify(s),
        Kind::ReluPcbias => relu_pcbias(s),
        Kind::ProjectionEval => projection_eval(s),
        Kind::AmplifyEarlystop => amplify_earlystop(s),
        Kind::RandomLabels => random_labels(s),
        Kind::LocCorrelation => loc_correlation(s),
        Kind::FrequencyBias => frequency_bias(s),
    }?;
    out.summary.insert(0, ("seed".into(), s.seed.to_string()));
    Ok(out)
}

/// Seed of ensemble member `i` (0-based).
pub fn member(master: u64, i: usize) -> u64 {
    member_seed(master, i + 1)
}

/// Seeds for auxiliary draws (held-out data, label shuffles, …).
fn aux(master: u64, tag: usize) -> u64 {
    member_seed(master, AUX_BASE + tag)
}

fn spec(s: &Settings, delta: f64, signal_top: usize, per_class: usize) -> SpectrumSpec {
    let d = &s.data;
    let v: Vec<f64> = match &d.variances {
        Some(v) => v.clone(),
        None => (1..=d.q).map(|j| (j as f64).powf(-d.exponent)).collect(),
    };
    let signal = (1..=signal_top.min(d.q)).map(|j| (j, delta * v[j - 1].sqrt())).collect();
    SpectrumSpec {
        q: d.q,
        profile: Profile::Explicit(v),
        signal,
        classes: d.classes,
        per_class,
        rotate: d.rotate,
    }
}

/// Splits class-major data into the first `train` examples of every class
/// and the rest.
fn split_per_class(data: &Dataset, train: usize) -> (Dataset, Dataset) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut seen = vec![0usize; data.classes()];
    for (i, &c) in data.labels().iter().enumerate() {
        if seen[c] < train {
            a.push(i);
        } else {
            b.push(i);
        }
        seen[c] += 1;
    }
    (data.select(&a), data.select(&b))
}

/// Training data and, when configured, a held-out set drawn from the same
/// distribution.
fn load_data(s: &Settings) -> Result<(Dataset, Option<Dataset>)> {
    let d = &s.data;
    match d.source {
        DataSource::File => {
            let path = d.path.as_ref().expect("validated");
            let train = load_dataset(path, Format::from_path(path))?;
            let test = match &d.test_path {
                Some(p) => Some(load_dataset(p, Format::from_path(p))?),
                None => None,
            };
            Ok((train, test))
        }
        DataSource::Gaussian => {
            let all = gaussian_classes(&spec(s, d.delta, d.signal_top, d.per_class + d.test_per_class), s.seed)?;
            if d.test_per_class == 0 {
                return Ok((all, None));
            }
            let (train, test) = split_per_class(&all, d.per_class);
            Ok((train, Some(test)))
        }
        DataSource::Symmetric => {
            let train = symmetric_binary(&spec(s, d.delta, d.signal_top, d.per_class), d.symmetry, s.seed)?;
            Ok((train, None))
        }
        DataSource::Frequency => {
            let kappa = paper_frequencies();
            Ok((frequency_dataset(&kappa, &PAPER_PHASES, d.points, s.seed)?, None))
        }
    }
}

fn paper_frequencies() -> Vec<f64> {
    (0..PAPER_PHASES.len()).map(|k| k as f64).collect()
}

fn learning_rate(lr: &Lr, d1: f64, depth: usize) -> f64 {
    match *lr {
        Lr::Absolute(v) => v,
        Lr::Scaled(c) => c / (d1 * depth as f64),
    }
}

/// ZCA-whitens with statistics of `fit`, rescaled so the whitened training
/// data keeps the total variance of the original.
fn whiten_pair(fit: &Dataset, other: Option<&Dataset>) -> Result<(Dataset, Option<Dataset>)> {
    let w = Whitener::fit(fit.x(), WHITEN_EPS)?;
    let wx = w.apply(fit.x())?;
    let c = (fit.x().norm_squared() / wx.norm_squared()).sqrt();
    let train = fit.with_x(wx * c)?;
    let test = match other {
        Some(o) => Some(o.with_x(w.apply(o.x())? * c)?),
        None => None,
    };
    Ok((train, test))
}

fn init_net(s: &Settings, widths: &[usize], seed: u64) -> Result<DeepLinearNet> {
    Ok(DeepLinearNet::init(widths, s.init, s.distribution, &mut seeded(seed))?)
}

fn train_config(s: &Settings, lr: f64, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lr,
        epochs,
        loss: s.loss,
        batch: s.batch,
        snapshot_every: s.snapshot_every,
        record_scale: false,
        record_correctness: false,
        seed,
    }
}

fn completed(trace: TrainTrace) -> Result<TrainTrace> {
    match trace.status {
        TraceStatus::Completed => Ok(trace),
        TraceStatus::Diverged { epoch, loss } => Err(LabError::Diverged {
            epoch,
            loss,
            losses: trace.snapshots.iter().map(|sn| (sn.epoch, sn.loss)).collect(),
        }),
    }
}

/// Spearman correlation between component index and half-time over the
/// first `count` components; components that never halve rank last.
fn ordering_spearman(half: &[Option<f64>], count: usize) -> Result<f64> {
    let count = count.min(half.len());
    let idx: Vec<f64> = (1..=count).map(|j| j as f64).collect();
    let times: Vec<f64> = half[..count].iter().map(|h| h.unwrap_or(f64::INFINITY)).collect();
    Ok(correlate(&idx, &times, CorrelationKind::Spearman)?.r)
}

fn half_time_table(basis: &SpectralBasis, half: &[Option<f64>]) -> Table {
    let mut t = Table::new("half_times", &["pc", "eigenvalue", "half_time"]);
    for (j, h) in half.iter().enumerate() {
        t.push(vec![(j + 1).into(), basis.values()[j].into(), (*h).into()]);
    }
    t
}

fn pc_ensemble(s: &Settings, whiten: bool) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let (data, _) = load_data(s)?;
    let basis = SpectralBasis::of_data(data.x())?;
    let lr = learning_rate(&s.lr, basis.values()[0], s.depth);
    let train_data = if whiten { whiten_pair(&data, None)?.0 } else { data.clone() };
    let widths = s.net_widths(data.dim(), data.classes());

    let traces: Vec<TrainTrace> = (0..s.members)
        .into_par_iter()
        .map(|i| {
            let mut net = init_net(s, &widths, member(s.seed, i))?;
            let mut cfg = train_config(s, lr, s.epochs, member(s.seed, i));
            cfg.record_scale = s.drift && i == 0;
            completed(train(&mut net, &train_data, &cfg)?)
        })
        .collect::<Result<_>>()?;

    let members: Vec<Trace> = traces
        .iter()
        .map(|t| Trace {
            epochs: t.snapshots.iter().map(|sn| sn.epoch).collect(),
            weights: principal_weights(&t.snapshots, &basis),
        })
        .collect();
    let wopt = optimal_solution(&train_data.moments(), PSEUDO_INVERSE_TOL)? * basis.u();
    let merged = merge(&members, Some(&wopt))?;
    out.tables.extend(merged.tables());
    if s.traces {
        for (i, m) in members.iter().enumerate() {
            out.tables.push(m.to_table(&format!("trace_member_{i:02}")));
        }
        out.tables.push(optimum_table(&wopt));
    }
    out.plots.extend(merged.plots());

    out.note("whitened", whiten);
    out.note_f64("lr", lr);
    out.note("members", s.members);
    out.note("epochs", s.epochs);
    out.note_f64("final_loss_member0", traces[0].final_loss().unwrap_or(f64::NAN));
    if s.members >= 2 {
        let weights: Vec<Vec<Matrix>> = members.iter().map(|m| m.weights.clone()).collect();
        let half = half_times(&merged.epochs, &weights)?;
        let rho = ordering_spearman(&half, data.dim() / 2)?;
        out.tables.push(half_time_table(&basis, &half));
        out.note_f64("spearman_index_vs_half_time", rho);
        if whiten {
            out.check("whitened |spearman| < 0.2", rho, "< 0.2 in magnitude", rho.abs() < 0.2);
        } else {
            out.check("spearman index vs half-time >= 0.9", rho, ">= 0.9", rho >= 0.9);
        }
    }

    if s.drift {
        drift_report(s, &traces[0], &widths, &mut out)?;
    }
    Ok(out)
}

fn drift_report(s: &Settings, trace: &TrainTrace, widths: &[usize], out: &mut Outcome) -> Result<()> {
    let rows = scale_matrix_drift(&trace.snapshots, widths, s.init)?;
    let mut t = Table::new(
        "drift",
        &["epoch", "layer", "b_diag", "b_offdiag", "a_diag", "a_offdiag", "b_drift", "a_drift"],
    );
    for r in &rows {
        t.push(vec![
            r.epoch.into(),
            r.layer.into(),
            r.b_diag.into(),
            r.b_offdiag.into(),
            r.a_diag.into(),
            r.a_offdiag.into(),
            r.b_diag.hypot(r.b_offdiag).into(),
            r.a_diag.hypot(r.a_offdiag).into(),
        ]);
    }
    out.tables.push(t);

    let depth = widths.len() - 1;
    let mut summary = Table::new("drift_onsets", &["layer", "a_onset", "b_onset", "a_first"]);
    let mut plot = LinePlot::new("drift", "Drift of the gradient scale matrices", "epoch", "drift").log_y();
    let mut all_first = true;
    for l in 1..depth {
        let series = |f: &dyn Fn(&pcbias_core::theory::DriftRow) -> f64| -> Vec<(usize, f64)> {
            rows.iter().filter(|r| r.layer == l).map(|r| (r.epoch, f(r))).collect()
        };
        let a = series(&|r| r.a_diag.hypot(r.a_offdiag));
        let b = series(&|r| r.b_diag.hypot(r.b_offdiag));
        let a_on = first_exceedance(&a, s.drift_factor);
        let b_on = first_exceedance(&b, s.drift_factor);
        let first = match (a_on, b_on) {
            (Some(x), Some(y)) => x < y,
            (Some(_), None) => true,
            _ => false,
        };
        all_first &= first;
        summary.push(vec![l.into(), a_on.into(), b_on.into(), first.into()]);
        plot.add(format!("A{l}"), a.iter().map(|&(e, v)| (e as f64, v)).collect());
        plot.add(format!("B{l}"), b.iter().map(|&(e, v)| (e as f64, v)).collect());
    }
    out.tables.push(summary);
    out.plots.push(plot);
    out.note_f64("drift_factor", s.drift_factor);
    out.check(
        "A drift onset precedes B for every hidden layer",
        all_first as u8 as f64,
        "1",
        all_first,
    );
    Ok(())
}

fn theorem_check(s: &Settings, telescoping: bool) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let (data, _) = load_data(s)?;
    let basis = SpectralBasis::of_data(data.x())?;
    let d = basis.values().to_vec();
    let lr = learning_rate(&s.lr, d[0], s.depth);
    let widths = s.net_widths(data.dim(), data.classes());
    let steps = s.epochs;
    let top = s.top_components.min(data.dim());

    let mut net = init_net(s, &widths, member(s.seed, 0))?;
    let mut cfg = train_config(s, lr, steps, member(s.seed, 0));
    cfg.snapshot_every = 1;
    cfg.record_scale = telescoping;
    let trace = completed(train(&mut net, &data, &cfg)?)?;
    let sim = principal_weights(&trace.snapshots, &basis);
    let wopt = optimal_solution(&data.moments(), PSEUDO_INVERSE_TOL)? * basis.u();
    let w0 = sim[0].clone();
    let pred = predict_trajectory(&w0, &wopt, &d, lr, s.depth, steps)?;

    let mut header = vec!["step".to_string()];
    header.extend((1..=top).map(|j| format!("pc{j}")));
    let mut thm3 = Table::with_header("thm3_error", header.clone());
    let mut worst3 = 0.0_f64;
    for t in 0..=steps {
        let errs: Vec<f64> = (0..top)
            .map(|j| normalized_column_error(&sim[t], &pred.weights[t], &w0, &wopt, j))
            .collect();
        worst3 = errs.iter().fold(worst3, |a, &e| a.max(e));
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(errs.into_iter().map(Cell::Float));
        thm3.push(row);
    }
    let mut lambdas = Table::new("components", &["pc", "eigenvalue", "lambda"]);
    for j in 0..data.dim() {
        lambdas.push(vec![(j + 1).into(), d[j].into(), pred.lambda[j].into()]);
    }
    out.tables.push(thm3);
    out.tables.push(lambdas);
    out.note_f64("lr", lr);
    out.note_f64("lr_d1_depth", lr * d[0] * s.depth as f64);
    out.note("steps", steps);
    out.note("components_checked", top);
    out.note_f64("max_error_closed_form", worst3);

    if telescoping {
        let history: Vec<Matrix> = trace
            .snapshots
            .iter()
            .map(|sn| sn.a_sum.clone().expect("recorded"))
            .collect();
        let mut thm4 = Table::with_header("thm4_error", header);
        let mut worst4 = 0.0_f64;
        let cols: Vec<_> = (0..top)
            .map(|j| (w0.column(j).into_owned(), wopt.column(j).into_owned()))
            .collect();
        for t in 0..=steps {
            let mut row: Vec<Cell> = vec![t.into()];
            for (j, (w0j, woj)) in cols.iter().enumerate() {
                let w = predict_thm4(w0j, woj, d[j], lr, &history[..t])?;
                let mut p = Matrix::zeros(w0.nrows(), w0.ncols());
                p.set_column(j, &w);
                let e = normalized_column_error(&sim[t], &p, &w0, &wopt, j);
                worst4 = worst4.max(e);
                row.push(e.into());
            }
            thm4.push(row);
        }
        out.tables.push(thm4);
        out.note_f64("max_error_telescoping", worst4);
        out.check("telescoping trajectory error", worst4, &format!("< {}", s.tolerance), worst4 < s.tolerance);
    } else {
        out.check("closed-form trajectory error", worst3, &format!("< {}", s.tolerance), worst3 < s.tolerance);
    }

    let mut plot = LinePlot::new("trajectory_error", "Normalized per-component trajectory error", "step", "error");
    let table = out.tables.iter().rev().find(|t| t.name.ends_with("_error")).expect("pushed");
    for j in (0..top).step_by((top / 5).max(1)) {
        let col = table.column(&format!("pc{}", j + 1)).expect("column");
        plot.add(
            format!("pc{}", j + 1),
            col.iter().enumerate().map(|(t, v)| (t as f64, v.unwrap_or(f64::NAN))).collect(),
        );
    }
    out.plots.push(plot);
    Ok(out)
}

fn randmat_verify(s: &Settings) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let q = s.data.q;
    let k = s.data.classes;
    let mut table = Table::new(
        "randmat",
        &[
            "width", "layer", "beta", "alpha", "b_diag_mean", "b_diag_se", "b_offdiag_mean", "b_offdiag_se", "b_variance",
            "a_diag_mean", "a_diag_se", "a_offdiag_mean", "a_offdiag_se", "a_variance", "b_within_3se",
        ],
    );
    let mut reports = Vec::new();
    let mut per_width = Vec::new();
    for (wi, &m) in s.widths.iter().enumerate() {
        let mut all_within = true;
        let widths = chain_widths(q, m, s.depth, k);
        let seed = member(s.seed, wi);
        let samples = (0..s.trials as u64)
            .into_par_iter()
            .map(|t| random_matrix_trial(&widths, s.init, s.distribution, seed, t))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let report = summarize_random_matrix_trials(&widths, s.init, &samples)?;
        for l in &report.layers {
            let within = l.b.within(l.beta, 3.0);
            all_within &= within;
            table.push(vec![
                m.into(),
                l.layer.into(),
                l.beta.into(),
                l.alpha.into(),
                l.b.diag_mean.into(),
                l.b.diag_se.into(),
                l.b.offdiag_mean.into(),
                l.b.offdiag_se.into(),
                l.b.variance.into(),
                l.a.diag_mean.into(),
                l.a.diag_se.into(),
                l.a.offdiag_mean.into(),
                l.a.offdiag_se.into(),
                l.a.variance.into(),
                within.into(),
            ]);
        }
        per_width.push((m, all_within));
        reports.push(report);
    }
    out.tables.push(table);

    let mut ratios = Table::new("variance_ratios", &["layer", "width", "next_width", "ratio", "in_range"]);
    let mut all_ratios = true;
    for pair in reports.windows(2) {
        for l in 1..s.depth {
            let r = pair[0].layers[l].b.variance / pair[1].layers[l].b.variance;
            let ok = (1.6..=2.5).contains(&r);
            all_ratios &= ok;
            ratios.push(vec![
                l.into(),
                pair[0].widths[1].into(),
                pair[1].widths[1].into(),
                r.into(),
                ok.into(),
            ]);
        }
    }
    out.tables.push(ratios);
    out.note("trials", s.trials);
    out.note("depth", s.depth);
    for (m, ok) in per_width {
        out.check(&format!("width {m}: B_l entries within 3 SE of beta_l I"), ok as u8 as f64, "1", ok);
    }
    out.check("variance ratio between consecutive widths in [1.6, 2.5]", all_ratios as u8 as f64, "1", all_ratios);
    Ok(out)
}

fn relu_pcbias(s: &Settings) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let (data, _) = load_data(s)?;
    let q = data.dim();
    let basis = SpectralBasis::of_data(data.x())?;
    let m = s.hidden;
    let lr = match s.lr {
        Lr::Absolute(v) => v,
        Lr::Scaled(c) => c / (m as f64 * s.init_scale * s.init_scale * basis.values()[0]),
    };

    let runs: Vec<(Vec<Matrix>, Vec<usize>, f64)> = (0..s.members)
        .into_par_iter()
        .map(|i| {
            let mut net = Relu2Net::init(m, q, member(s.seed, i), s.init_scale)?;
            let g0 = net.effective_linear();
            let f = net.forward_batch(data.x())?;
            let lin = data.x().tr_mul(&g0);
            let init_err = (f - lin).amax();
            let trace = relu2::train(&mut net, &data, lr, s.epochs, s.snapshot_every)?;
            if let TraceStatus::Diverged { epoch, loss } = trace.status {
                let losses = trace.snapshots.iter().map(|sn| (sn.epoch, sn.loss)).collect();
                return Err(LabError::Diverged { epoch, loss, losses });
            }
            let a = net.a().clone();
            let epochs = trace.snapshots.iter().map(|sn| sn.epoch).collect();
            let weights = trace
                .snapshots
                .iter()
                .map(|sn| {
                    let g = sn.w.tr_mul(&a) * 0.5;
                    Matrix::from_row_slice(1, q, g.as_slice()) * basis.u()
                })
                .collect();
            Ok((weights, epochs, init_err))
        })
        .collect::<Result<_>>()?;

    let epochs = runs[0].1.clone();
    let traces: Vec<Vec<Matrix>> = runs.iter().map(|r| r.0.clone()).collect();
    let init_err = runs.iter().fold(0.0_f64, |a, r| a.max(r.2));
    let half = half_times(&epochs, &traces)?;
    let rho = ordering_spearman(&half, q / 2)?;
    let members: Vec<Trace> = traces
        .iter()
        .map(|w| Trace {
            epochs: epochs.clone(),
            weights: w.clone(),
        })
        .collect();
    let merged = merge(&members, None)?;
    out.tables.extend(merged.tables());
    out.tables.push(half_time_table(&basis, &half));
    out.plots.extend(merged.plots());

    let mut check_spec = spec(s, s.data.delta, s.data.signal_top, s.check_per_class);
    check_spec.classes = 2;
    let check_data = symmetric_binary(&check_spec, pcbias_core::datagen::Symmetry::Independent, aux(s.seed, 0))?;
    let probe = Relu2Net::init(m, q, aux(s.seed, 1), s.init_scale)?;
    let derived = relu2::update_error(&probe, &check_data, lr, UpdateForm::Derived)?;
    let verbatim = relu2::update_error(&probe, &check_data, lr, UpdateForm::Verbatim)?;
    let mut t = Table::new("first_step", &["form", "relative_error", "examples"]);
    t.push(vec!["derived".into(), derived.into(), check_data.len().into()]);
    t.push(vec!["verbatim".into(), verbatim.into(), check_data.len().into()]);
    out.tables.push(t);

    out.note_f64("lr", lr);
    out.note_f64("init_linearity_max_error", init_err);
    out.note_f64("first_step_error_derived", derived);
    out.note_f64("first_step_error_verbatim", verbatim);
    out.note_f64("spearman_index_vs_half_time", rho);
    out.check("init linearity error < 1e-10", init_err, "< 1e-10", init_err < 1e-10);
    out.check("first-step update relative error < 0.1", derived, "< 0.1", derived < 0.1);
    out.check("spearman index vs half-time >= 0.8", rho, ">= 0.8", rho >= 0.8);
    Ok(out)
}

fn held_out(s: &Settings, train: &Dataset, test: Option<Dataset>) -> Result<Dataset> {
    test.ok_or_else(|| {
        LabError::Config(format!(
            "{} needs held-out data: set `data.test_per_class` or `data.test_path` (training set has {} examples)",
            s.kind,
            train.len()
        ))
    })
}

fn projection_eval(s: &Settings) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let (train_data, test) = load_data(s)?;
    let test = held_out(s, &train_data, test)?;
    let q = train_data.dim();
    let basis = SpectralBasis::of_data(train_data.x())?;
    let lr = learning_rate(&s.lr, basis.values()[0], s.depth);
    let widths = s.net_widths(q, train_data.classes());
    let ps: Vec<usize> = s.ps.iter().copied().filter(|&p| p <= q).collect();
    let projected: Vec<Dataset> = ps
        .iter()
        .map(|&p| Ok(test.with_x(project_to_top_pcs(test.x(), &basis, p)?)?))
        .collect::<Result<_>>()?;

    let per_member: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..s.members)
        .into_par_iter()
        .map(|i| {
            let mut net = init_net(s, &widths, member(s.seed, i))?;
            let trace = completed(train(&mut net, &train_data, &train_config(s, lr, s.epochs, member(s.seed, i)))?)?;
            let epochs = trace.snapshots.iter().map(|sn| sn.epoch).collect();
            let acc = trace
                .snapshots
                .iter()
                .map(|sn| projected.iter().map(|d| accuracy(&sn.compact, d)).collect())
                .collect();
            Ok((epochs, acc))
        })
        .collect::<Result<_>>()?;

    let epochs = &per_member[0].0;
    let mut t = Table::new("projected_accuracy", &["epoch", "components", "mean_accuracy"]);
    let mut plot = LinePlot::new("projected_accuracy", "Accuracy on projected test data", "epoch", "accuracy");
    for (pi, &p) in ps.iter().enumerate() {
        let mut pts = Vec::new();
        for (si, &e) in epochs.iter().enumerate() {
            let acc = per_member.iter().map(|m| m.1[si][pi]).sum::<f64>() / s.members as f64;
            t.push(vec![e.into(), p.into(), acc.into()]);
            pts.push((e as f64, acc));
        }
        plot.add(format!("P={p}"), pts);
    }
    out.tables.push(t);
    out.plots.push(plot);

    let clf = LeastSquaresClassifier::fit(&train_data)?;
    let mut reference = Table::new("least_squares_reference", &["components", "accuracy"]);
    for (p, d) in ps.iter().zip(&projected) {
        reference.push(vec![(*p).into(), clf.accuracy(d).into()]);
    }
    out.tables.push(reference);
    let crit = critical_principal_components(&train_data, &basis, &test, q, CriticalMode::FitOnce)?;
    let mut ct = Table::new("critical_components", &["example_index", "label", "critical_pc"]);
    for (i, c) in crit.iter().enumerate() {
        ct.push(vec![i.into(), test.labels()[i].into(), (*c).into()]);
    }
    out.tables.push(ct);
    out.note_f64("lr", lr);
    out.note("classifier", "least squares, fit once on the original training data");
    Ok(out)
}

/// Zero mean, unit std per feature using the statistics of `fit` for both.
fn standardize_with(fit: &Matrix, other: &Matrix) -> (Matrix, Matrix) {
    let n = fit.ncols() as f64;
    let (mut a, mut b) = (fit.clone(), other.clone());
    for i in 0..fit.nrows() {
        let mean = fit.row(i).sum() / n;
        let var = fit.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        a.row_mut(i).apply(|v| *v = (*v - mean) / std);
        b.row_mut(i).apply(|v| *v = (*v - mean) / std);
    }
    (a, b)
}

fn amplify_earlystop(s: &Settings) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let (train_data, test) = load_data(s)?;
    let test = held_out(s, &train_data, test)?;
    let q = train_data.dim();
    let basis = SpectralBasis::of_data(train_data.x())?;
    let count = ((s.fraction * q as f64).ceil() as usize).clamp(1, q);
    let variant = |range: Option<std::ops::Range<usize>>| -> Result<(Dataset, Dataset)> {
        let (a, b) = match range {
            Some(r) => (
                amplify_pcs(train_data.x(), &basis, r.clone(), s.factor, false)?,
                amplify_pcs(test.x(), &basis, r, s.factor, false)?,
            ),
            None => (train_data.x().clone(), test.x().clone()),
        };
        let (a, b) = standardize_with(&a, &b);
        Ok((train_data.with_x(a)?, test.with_x(b)?))
    };
    let variants = [
        ("original", variant(None)?),
        ("top", variant(Some(0..count))?),
        ("bottom", variant(Some(q - count..q))?),
    ];
    let widths = s.net_widths(q, train_data.classes());
    let mut t = Table::new("test_accuracy", &["variant", "epoch", "mean_accuracy"]);
    let mut best = Table::new("early_stopping", &["variant", "best_epoch", "best_accuracy", "final_accuracy", "gain"]);
    let mut plot = LinePlot::new("test_accuracy", "Test accuracy with amplified components", "epoch", "accuracy");
    let mut gains = Vec::new();
    for (name, (data, test_n)) in &variants {
        let d1 = SpectralBasis::of_data(data.x())?.values()[0];
        let lr = learning_rate(&s.lr, d1, s.depth);
        let curves: Vec<(Vec<usize>, Vec<f64>)> = (0..s.members)
            .into_par_iter()
            .map(|i| {
                let mut net = init_net(s, &widths, member(s.seed, i))?;
                let trace = completed(train(&mut net, data, &train_config(s, lr, s.epochs, member(s.seed, i)))?)?;
                Ok((
                    trace.snapshots.iter().map(|sn| sn.epoch).collect(),
                    trace.snapshots.iter().map(|sn| accuracy(&sn.compact, test_n)).collect(),
                ))
            })
            .collect::<Result<_>>()?;
        let epochs = &curves[0].0;
        let mean_curve: Vec<f64> = (0..epochs.len())
            .map(|si| curves.iter().map(|c| c.1[si]).sum::<f64>() / s.members as f64)
            .collect();
        for (e, a) in epochs.iter().zip(&mean_curve) {
            t.push(vec![(*name).into(), (*e).into(), (*a).into()]);
        }
        let (bi, ba) = mean_curve
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &a)| if a > acc.1 { (i, a) } else { acc });
        let fin = *mean_curve.last().unwrap();
        best.push(vec![(*name).into(), epochs[bi].into(), ba.into(), fin.into(), (ba - fin).into()]);
        gains.push(ba - fin);
        plot.add(*name, epochs.iter().zip(&mean_curve).map(|(&e, &a)| (e as f64, a)).collect());
    }
    out.tables.push(t);
    out.tables.push(best);
    out.plots.push(plot);
    out.note("amplified_components", count);
    out.note_f64("factor", s.factor);
    out.note_f64("early_stopping_gain_top", gains[1]);
    out.note_f64("early_stopping_gain_bottom", gains[2]);
    out.check(
        "early stopping helps more with bottom components amplified",
        gains[2] - gains[1],
        "> 0",
        gains[2] > gains[1],
    );
    Ok(out)
}

fn random_labels(s: &Settings) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let (data, _) = load_data(s)?;
    let q = data.dim();
    let basis = SpectralBasis::of_data(data.x())?;
    let lr = learning_rate(&s.lr, basis.values()[0], s.depth);
    let (white, _) = whiten_pair(&data, None)?;
    let widths = s.net_widths(q, data.classes());

    let mut finals = Table::new("final_loss", &["arm", "member", "true_labels", "shuffled_labels", "gap"]);
    let mut curves_table = Table::new(
        "loss_curves",
        &["epoch", "original_true", "original_shuffled", "whitened_true", "whitened_shuffled"],
    );
    let mut curve_means: Vec<Vec<f64>> = Vec::new();
    let mut epochs = Vec::new();
    let mut gaps = Vec::new();
    let mut wins = 0;
    for (arm, ds) in [("original", &data), ("whitened", &white)] {
        let runs: Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> = (0..s.members)
            .into_par_iter()
            .map(|i| {
                let shuffled = shuffle_labels(ds, aux(s.seed, i));
                let mut curves = Vec::new();
                let mut ep = Vec::new();
                for d in [ds, &shuffled] {
                    let mut net = init_net(s, &widths, member(s.seed, i))?;
                    let trace = completed(train(&mut net, d, &train_config(s, lr, s.epochs, member(s.seed, i)))?)?;
                    ep = trace.snapshots.iter().map(|sn| sn.epoch).collect();
                    curves.push(trace.snapshots.iter().map(|sn| sn.loss).collect::<Vec<f64>>());
                }
                let shuffled_curve = curves.pop().unwrap();
                Ok((ep, curves.pop().unwrap(), shuffled_curve))
            })
            .collect::<Result<_>>()?;
        let mut gap_sum = 0.0;
        for (i, (_, t, sh)) in runs.iter().enumerate() {
            let (lt, ls) = (*t.last().unwrap(), *sh.last().unwrap());
            if arm == "original" && ls > lt {
                wins += 1;
            }
            gap_sum += ls - lt;
            finals.push(vec![arm.into(), i.into(), lt.into(), ls.into(), (ls - lt).into()]);
        }
        gaps.push(gap_sum / s.members as f64);
        epochs = runs[0].0.clone();
        for which in [1, 2] {
            curve_means.push(
                (0..epochs.len())
                    .map(|si| {
                        runs.iter().map(|r| if which == 1 { r.1[si] } else { r.2[si] }).sum::<f64>() / s.members as f64
                    })
                    .collect(),
            );
        }
    }
    let mut plot = LinePlot::new("loss_curves", "Loss with true and shuffled labels", "epoch", "loss").log_y();
    let names = ["original_true", "original_shuffled", "whitened_true", "whitened_shuffled"];
    for (si, &e) in epochs.iter().enumerate() {
        let mut row: Vec<Cell> = vec![e.into()];
        row.extend(curve_means.iter().map(|c| Cell::Float(c[si])));
        curves_table.push(row);
    }
    for (n, c) in names.iter().zip(&curve_means) {
        plot.add(*n, epochs.iter().zip(c).map(|(&e, &v)| (e as f64, v)).collect());
    }
    out.tables.push(finals);
    out.tables.push(curves_table);
    out.plots.push(plot);
    let ratio = gaps[1] / gaps[0];
    out.note_f64("lr", lr);
    out.note_f64("mean_gap_original", gaps[0]);
    out.note_f64("mean_gap_whitened", gaps[1]);
    out.note_f64("gap_ratio", ratio);
    out.check(
        "true labels reach lower loss on every seed",
        wins as f64,
        &format!("= {}", s.members),
        wins == s.members,
    );
    out.check("whitened gap below 10% of original", ratio, "< 0.1", ratio.abs() < 0.1);

    if s.separable.enabled {
        separable_arm(s, &mut out)?;
    }
    Ok(out)
}

struct SeparableRun {
    flipped: usize,
    agreement: f64,
    hit: Option<usize>,
    final_accuracy: f64,
    curve: Vec<(usize, f64)>,
}

fn separable_arm(s: &Settings, out: &mut Outcome) -> Result<()> {
    let sep = &s.separable;
    let q = s.data.q;
    let data = gaussian_classes(&spec(s, sep.delta, q, sep.per_class), aux(s.seed, 100))?;
    let basis = SpectralBasis::of_data(data.x())?;
    let lr = learning_rate(&s.lr, basis.values()[0], sep.depth);
    let widths = chain_widths(q, sep.width, sep.depth, data.classes());
    let ps: Vec<usize> = sep.ps.iter().copied().filter(|&p| p <= q).collect();
    let jobs: Vec<(LabelSource, usize)> = [LabelSource::Original, LabelSource::Shuffled]
        .into_iter()
        .flat_map(|src| ps.iter().map(move |&p| (src, p)))
        .collect();
    let results: Vec<SeparableRun> = jobs
        .par_iter()
        .map(|&(src, p)| {
            let labels = make_separable_by_top_pcs(&data, p, src, aux(s.seed, 101))?;
            let agree = labels
                .data
                .labels()
                .iter()
                .zip(data.labels())
                .filter(|(a, b)| a == b)
                .count() as f64
                / data.len() as f64;
            let mut net = init_net(s, &widths, member(s.seed, 0))?;
            let cfg = TrainConfig {
                snapshot_every: 1,
                record_correctness: true,
                ..train_config(s, lr, sep.epochs, member(s.seed, 0))
            };
            let trace = completed(train(&mut net, &labels.data, &cfg)?)?;
            let curve: Vec<(usize, f64)> = trace
                .snapshots
                .iter()
                .map(|sn| {
                    let c = sn.correct.as_ref().expect("recorded");
                    (sn.epoch, c.iter().filter(|&&b| b).count() as f64 / c.len() as f64)
                })
                .collect();
            let hit = curve.iter().find(|(_, a)| *a >= sep.target_accuracy).map(|(e, _)| *e);
            Ok(SeparableRun {
                flipped: labels.flipped,
                agreement: agree,
                hit,
                final_accuracy: curve.last().unwrap().1,
                curve,
            })
        })
        .collect::<Result<_>>()?;

    let mut t = Table::new(
        "separable",
        &["labels", "components", "flipped", "agreement_with_original", "epochs_to_target", "final_accuracy"],
    );
    let mut curves = Table::new("separable_curves", &["labels", "components", "epoch", "train_accuracy"]);
    let mut plot = LinePlot::new("separable_curves", "Training accuracy, labels separable by top components", "epoch", "accuracy");
    let mut monotone = true;
    for (chunk_jobs, chunk) in jobs.chunks(ps.len()).zip(results.chunks(ps.len())) {
        let src = chunk_jobs[0].0;
        let name = match src {
            LabelSource::Original => "original",
            LabelSource::Shuffled => "shuffled",
        };
        let hits: Vec<Option<usize>> = chunk.iter().map(|r| r.hit).collect();
        monotone &= hits.iter().all(Option::is_some) && hits.windows(2).all(|w| w[0] < w[1]);
        for (&(_, p), r) in chunk_jobs.iter().zip(chunk) {
            t.push(vec![
                name.into(),
                p.into(),
                r.flipped.into(),
                r.agreement.into(),
                r.hit.into(),
                r.final_accuracy.into(),
            ]);
            for &(e, a) in r.curve.iter().filter(|(e, _)| e % 10 == 0) {
                curves.push(vec![name.into(), p.into(), e.into(), a.into()]);
            }
            plot.add(format!("{name} P={p}"), r.curve.iter().map(|&(e, a)| (e as f64, a)).collect());
        }
    }
    out.tables.push(t);
    out.tables.push(curves);
    out.plots.push(plot);
    out.note("separable_rule", "least-squares one-vs-all on the top-P projection, no bias");
    out.note_f64("separable_target_accuracy", sep.target_accuracy);
    out.check(
        "epochs to target increase with P for both label sources",
        monotone as u8 as f64,
        "1",
        monotone,
    );
    Ok(())
}

fn loc_correlation(s: &Settings) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let (train_data, test) = load_data(s)?;
    let test = held_out(s, &train_data, test)?;
    let q = train_data.dim();
    let basis = SpectralBasis::of_data(train_data.x())?;
    let lr = learning_rate(&s.lr, basis.values()[0], s.depth);
    let (white_train, white_test) = whiten_pair(&train_data, Some(&test))?;
    let white_test = white_test.expect("held-out set given");
    let widths = s.net_widths(q, train_data.classes());
    let horizon = s.horizon;

    let ensemble = |tr: &Dataset, te: &Dataset, e: usize| -> Result<Vec<f64>> {
        let rows: Vec<Vec<Vec<bool>>> = (0..s.members)
            .into_par_iter()
            .map(|i| {
                let seed = member(s.seed, e * s.members + i);
                let mut net = init_net(s, &widths, seed)?;
                let cfg = TrainConfig {
                    snapshot_every: 1,
                    ..train_config(s, lr, horizon, seed)
                };
                let trace = completed(train(&mut net, tr, &cfg)?)?;
                Ok(trace
                    .snapshots
                    .iter()
                    .filter(|sn| sn.epoch >= 1)
                    .map(|sn| correctness(&sn.compact, te))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(accessibility(&PredictionTensor::new(&rows)?))
    };
    let acc_a = ensemble(&train_data, &test, 0)?;
    let acc_b = ensemble(&train_data, &test, 1)?;
    let white_a = ensemble(&white_train, &white_test, 0)?;
    let white_b = ensemble(&white_train, &white_test, 1)?;
    let r_orig = correlate(&acc_a, &acc_b, CorrelationKind::Pearson)?.r;
    let r_white = correlate(&white_a, &white_b, CorrelationKind::Pearson)?.r;

    let crit = critical_principal_components(&train_data, &basis, &test, q, CriticalMode::FitOnce)?;
    let (cp, ca): (Vec<f64>, Vec<f64>) = crit
        .iter()
        .zip(&acc_a)
        .filter_map(|(c, a)| c.map(|c| (c as f64, *a)))
        .unzip();
    let rho_crit = correlate(&cp, &ca, CorrelationKind::Spearman)?.r;
    let disc = discriminability(test.x(), test.labels(), s.k.min(test.len() - 1))?;
    let rho_disc = correlate(&disc, &acc_a, CorrelationKind::Spearman)?.r;

    let mut order: Vec<usize> = (0..acc_a.len()).collect();
    order.sort_by(|&i, &j| acc_a[j].total_cmp(&acc_a[i]).then(i.cmp(&j)));
    let fastest = &order[..(acc_a.len() / 5).max(2)];
    let pick = |v: &[f64]| fastest.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let r_fast = correlate(&pick(&acc_a), &pick(&acc_b), CorrelationKind::Pearson)?.r;

    let mut t = Table::new(
        "accessibility",
        &["example_index", "label", "critical_pc", "discriminability", "ensemble_a", "ensemble_b", "whitened_a", "whitened_b"],
    );
    for i in 0..test.len() {
        t.push(vec![
            i.into(),
            test.labels()[i].into(),
            crit[i].into(),
            disc[i].into(),
            acc_a[i].into(),
            acc_b[i].into(),
            white_a[i].into(),
            white_b[i].into(),
        ]);
    }
    out.tables.push(t);
    out.note_f64("lr", lr);
    out.note("horizon_epochs", horizon);
    out.note("members_per_ensemble", s.members);
    out.note_f64("mean_accessibility", mean(&acc_a));
    out.note_f64("pearson_original", r_orig);
    out.note_f64("pearson_whitened", r_white);
    out.note_f64("pearson_fastest_quintile", r_fast);
    out.note_f64("spearman_critical_pc_vs_accessibility", rho_crit);
    out.note_f64("spearman_discriminability_vs_accessibility", rho_disc);
    out.note("examples_with_critical_pc", cp.len());
    out.check("ensembles agree on original data", r_orig, ">= 0.8", r_orig >= 0.8);
    out.check("whitening halves the agreement", r_white, &format!("<= {}", fmt_f64(r_orig / 2.0)), r_white <= r_orig / 2.0);
    out.check("critical component vs accessibility", rho_crit, "<= -0.5", rho_crit <= -0.5);
    Ok(out)
}

fn frequency_bias(s: &Settings) -> Result<Outcome> {
    let mut out = Outcome::new(s.kind.name());
    let (data, _) = load_data(s)?;
    if data.dim() != 2 {
        return Err(LabError::Config("frequency-bias needs the two-dimensional frequency data".into()));
    }
    let kappa = paper_frequencies();
    let mut crit = Vec::with_capacity(data.len());
    let mut agree = 0usize;
    for i in 0..data.len() {
        let z = data.x()[(0, i)];
        let label = data.labels()[i];
        let c = critical_frequency(&kappa, &PAPER_PHASES, z, label)?;
        let brute = frequency_prefix_sums(&kappa, &PAPER_PHASES, z)
            .iter()
            .position(|&v| if label == 1 { v > 0.0 } else { v < 0.0 })
            .map(|j| j + 1);
        agree += usize::from(c == brute);
        crit.push(c);
    }
    let disc = discriminability(data.x(), data.labels(), s.k)?;
    let (keys, vals): (Vec<usize>, Vec<f64>) = crit
        .iter()
        .zip(&disc)
        .filter_map(|(c, d)| c.map(|c| (c, *d)))
        .unzip();
    let keyf: Vec<f64> = keys.iter().map(|&k| k as f64).collect();
    let rho_points = correlate(&keyf, &vals, CorrelationKind::Spearman)?.r;
    let groups = group_means(&keys, &vals)?;
    let gk: Vec<f64> = groups.iter().map(|g| g.0 as f64).collect();
    let gm: Vec<f64> = groups.iter().map(|g| g.1).collect();
    let rho_groups = correlate(&gk, &gm, CorrelationKind::Spearman)?;
    let r_groups = correlate(&gk, &gm, CorrelationKind::Pearson)?;

    let mut t = Table::new("frequency", &["example_index", "z", "y", "label", "critical_frequency", "discriminability"]);
    for i in 0..data.len() {
        t.push(vec![
            i.into(),
            data.x()[(0, i)].into(),
            data.x()[(1, i)].into(),
            data.labels()[i].into(),
            crit[i].into(),
            disc[i].into(),
        ]);
    }
    let mut g = Table::new("frequency_groups", &["critical_frequency", "examples", "mean_discriminability"]);
    for &(k, m, n) in &groups {
        g.push(vec![k.into(), n.into(), m.into()]);
    }
    out.tables.push(t);
    out.tables.push(g);
    out.note("points", data.len());
    out.note("k", s.k);
    out.note("oracle_agreement", agree);
    out.note_f64("spearman_per_example", rho_points);
    out.note_f64("spearman_group_means", rho_groups.r);
    out.note_f64("pearson_group_means", r_groups.r);
    out.note_f64("pearson_group_means_p", r_groups.p);
    out.check(
        "critical frequency matches the prefix oracle",
        agree as f64 / data.len() as f64,
        "= 1",
        agree == data.len(),
    );
    out.check(
        "discriminability vs critical frequency (group means)",
        rho_groups.r,
        "<= -0.5",
        rho_groups.r <= -0.5,
    );
    Ok(out)
}

/// Gradient exactness and first-order update checks on small random nets.
pub fn gradient_suite(seed: u64) -> Result<Outcome> {
    let mut out = Outcome::new("gradient-check");
    let spec = SpectrumSpec {
        q: 6,
        profile: Profile::PowerLaw { exponent: 1.0 },
        signal: vec![(1, 1.0), (2, 0.5)],
        classes: 3,
        per_class: 8,
        rotate: true,
    };
    let data = gaussian_classes(&spec, aux(seed, 0))?;
    let net = DeepLinearNet::init(&[6, 16, 12, 3], InitScheme::Std, Default::default(), &mut seeded(member(seed, 0)))?;
    let entry = gradient_check(&net, &data, 1e-4, usize::MAX)?;
    let directional = directional_gradient_check(&net, &data, 1e-4, member(seed, 1))?;
    let moments = data.moments();
    let lrs = [1e-2, 5e-3, 2.5e-3];
    let residuals = lrs
        .iter()
        .map(|&lr| first_order_residual(&net, &moments, lr))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut t = Table::new("first_order", &["lr", "residual", "halving_factor"]);
    let mut ok = true;
    for (i, (&lr, &r)) in lrs.iter().zip(&residuals).enumerate() {
        let f = (i > 0).then(|| residuals[i - 1] / r);
        if let Some(f) = f {
            ok &= (3.5..=4.5).contains(&f);
        }
        t.push(vec![lr.into(), r.into(), f.into()]);
    }
    out.tables.push(t);
    out.note_f64("entrywise_relative_error", entry);
    out.note_f64("directional_relative_error", directional);
    out.check("analytic vs finite-difference gradients", entry, "< 1e-6", entry < 1e-6);
    out.check("first-order residual shrinks ~4x per halving", ok as u8 as f64, "1", ok);
    Ok(out)
}
