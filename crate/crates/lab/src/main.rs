use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcbias::experiments::{gradient_suite, Outcome};
use pcbias::io::{load_dataset, save_dataset, write_file, Format, Table};
use pcbias::report::{merge, Trace};
use pcbias::{with_pool, ExperimentConfig, Kind, LabError, Result};
use pcbias_core::datagen::{
    frequency_dataset, gaussian_classes, make_separable_by_top_pcs, shuffle_labels, symmetric_binary, LabelSource,
    Profile, SpectrumSpec, Symmetry, PAPER_PHASES,
};

#[derive(Parser)]
#[command(name = "pcbias", version, about = "Principal-component learning-order experiments for deep linear and ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file (or the defaults of `--kind`).
    Run(RunArgs),
    /// Generate a dataset file.
    #[command(subcommand)]
    GenData(GenData),
    /// Merge ensemble trace files into spread and distance tables.
    Report(ReportArgs),
    /// Random-matrix statistics plus the gradient-check suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Master seed, overriding `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `experiment.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG line plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "kind")]
    config: Option<PathBuf>,
    /// Run the built-in defaults of this kind instead of a config file.
    #[arg(long, conflicts_with = "config")]
    kind: Option<Kind>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional randmat-verify config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace csv files, one per ensemble member.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Optimum written by a run with `experiment.traces = true`.
    #[arg(long)]
    optimum: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct Output {
    /// Destination file; `.bin`/`.pcb` selects raw-f64 unless `--format` says otherwise.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<FileFormat>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FileFormat {
    Csv,
    #[value(name = "raw-f64", alias = "raw")]
    RawF64,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long, default_value_t = 32)]
    q: usize,
    /// `powerlaw:<exponent>` or `explicit:<v1>,<v2>,…`.
    #[arg(long, default_value = "powerlaw:1.0")]
    profile: String,
    /// Class-mean offset along a direction, in units of its standard deviation.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Number of leading directions carrying the class signal (all when omitted).
    #[arg(long)]
    signal_top: Option<usize>,
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    /// Keep the noise directions on the coordinate axes.
    #[arg(long)]
    no_rotate: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SymmetryArg {
    Mirrored,
    Independent,
}

#[derive(Subcommand)]
enum GenData {
    /// Gaussian classes with a prescribed spectrum.
    Gaussian {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Two classes that are mirror images (or independent draws) of each other.
    Symmetric {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[arg(long, value_enum, default_value = "mirrored")]
        symmetry: SymmetryArg,
        #[command(flatten)]
        output: Output,
    },
    /// One-dimensional sum-of-sines labels plus an irrelevant coordinate.
    Frequency {
        /// Frequencies 0..9 with the reference phase list.
        #[arg(long, conflicts_with_all = ["kappa", "phases"])]
        paper_phases: bool,
        #[arg(long, value_delimiter = ',', requires = "phases")]
        kappa: Vec<f64>,
        #[arg(long, value_delimiter = ',', requires = "kappa")]
        phases: Vec<f64>,
        #[arg(short, long, default_value_t = 10000)]
        n: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Copy of a dataset with labels permuted.
    ShuffleLabels {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Relabel a dataset so it is separable by its top principal components.
    Separable {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        components: usize,
        /// Start from shuffled labels.
        #[arg(long)]
        shuffled: bool,
        #[command(flatten)]
        output: Output,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match with_pool(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run(a) => run(a),
        Command::GenData(g) => gen_data(g).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => report(a).map(|_| ExitCode::SUCCESS),
        Command::Verify(a) => verify(a),
    }
}

fn settings(config: Option<&Path>, kind: Option<Kind>, common: &Common) -> Result<pcbias::Settings> {
    let cfg = match (config, kind) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(k)) => ExperimentConfig::for_kind(k),
        (None, None) => return Err(LabError::Config("pass `--config` or `--kind`".into())),
    };
    let mut s = cfg.resolve()?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(out) = &common.out {
        s.out = Some(out.clone());
    }
    Ok(s)
}

fn out_dir(s: &pcbias::Settings) -> PathBuf {
    s.out.clone().unwrap_or_else(|| PathBuf::from("out").join(s.kind.name()))
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let s = settings(a.config.as_deref(), a.kind, &a.common)?;
    let dir = out_dir(&s);
    match pcbias::run(&s) {
        Ok(outcome) => {
            emit(&outcome, &dir, a.common.plots)?;
            Ok(ExitCode::SUCCESS)
        }
        Err(LabError::Diverged { epoch, loss, losses }) => {
            let mut t = Table::new("diverged_loss", &["epoch", "loss"]);
            for (e, l) in &losses {
                t.push(vec![(*e).into(), (*l).into()]);
            }
            let mut summary = Table::new("summary", &["key", "value"]);
            summary.push(vec!["kind".into(), s.kind.name().into()]);
            summary.push(vec!["status".into(), "diverged".into()]);
            summary.push(vec!["epoch".into(), epoch.into()]);
            summary.push(vec!["loss".into(), loss.into()]);
            for t in [t, summary] {
                write_file(&dir.join(format!("{}.csv", t.name)), &t.to_csv())?;
            }
            Err(LabError::Diverged { epoch, loss, losses })
        }
        Err(e) => Err(e),
    }
}

fn emit(outcome: &Outcome, dir: &Path, plots: bool) -> Result<()> {
    let files = outcome.write(dir, plots)?;
    let mut stdout = std::io::stdout().lock();
    for c in &outcome.checks {
        let _ = writeln!(
            stdout,
            "{} {}: {} (bound {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        );
    }
    let _ = writeln!(stdout, "{}: wrote {} files to {}", outcome.kind, files.len(), dir.display());
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let s = settings(a.config.as_deref(), Some(Kind::RandmatVerify), &a.common)?;
    if s.kind != Kind::RandmatVerify {
        return Err(LabError::Config(format!("verify needs a randmat-verify config, found {}", s.kind)));
    }
    let dir = a.common.out.clone().unwrap_or_else(|| PathBuf::from("out").join("verify"));
    let randmat = pcbias::run(&s)?;
    emit(&randmat, &dir.join("randmat-verify"), a.common.plots)?;
    let grads = gradient_suite(s.seed)?;
    emit(&grads, &dir.join("gradient-check"), a.common.plots)?;
    Ok(if randmat.passed() && grads.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn report(a: ReportArgs) -> Result<()> {
    let traces = a.traces.iter().map(|p| Trace::load(p)).collect::<Result<Vec<_>>>()?;
    let optimum = match &a.optimum {
        Some(p) => {
            let t = Trace::load(p)?;
            Some(t.weights.into_iter().next().ok_or_else(|| LabError::parse(p, "empty optimum file"))?)
        }
        None => None,
    };
    let merged = merge(&traces, optimum.as_ref())?;
    for t in merged.tables() {
        write_file(&a.out.join(format!("{}.csv", t.name)), &t.to_csv())?;
    }
    if a.plots {
        for p in merged.plots() {
            write_file(&a.out.join(format!("{}.svg", p.name)), p.to_svg().as_bytes())?;
        }
    }
    println!("merged {} traces into {}", traces.len(), a.out.display());
    Ok(())
}

fn parse_profile(text: &str, q: usize) -> Result<Profile> {
    let bad = || LabError::Config(format!("--profile `{text}`: expected `powerlaw:<exponent>` or `explicit:<v1>,<v2>,…`"));
    let (name, rest) = text.split_once(':').ok_or_else(bad)?;
    match name {
        "powerlaw" => Ok(Profile::PowerLaw {
            exponent: rest.trim().parse().map_err(|_| bad())?,
        }),
        "explicit" => {
            let v = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            if v.len() != q {
                return Err(LabError::Config(format!("--profile lists {} variances but --q is {q}", v.len())));
            }
            Ok(Profile::Explicit(v))
        }
        _ => Err(bad()),
    }
}

fn spectrum(a: &SpectrumArgs, classes: usize) -> Result<SpectrumSpec> {
    let mut spec = SpectrumSpec {
        q: a.q,
        profile: parse_profile(&a.profile, a.q)?,
        signal: Vec::new(),
        classes,
        per_class: a.per_class,
        rotate: !a.no_rotate,
    };
    let v = spec.variances()?;
    let top = a.signal_top.unwrap_or(a.q);
    if top > a.q {
        return Err(LabError::Config(format!("--signal-top {top} exceeds --q {}", a.q)));
    }
    spec.signal = (1..=top).map(|j| (j, a.delta * v[j - 1].sqrt())).collect();
    Ok(spec)
}

fn require_out(out: &Output) -> Result<&Path> {
    out.out
        .as_deref()
        .ok_or_else(|| LabError::Config("missing output path (`--out FILE`)".into()))
}

fn write_dataset(data: &pcbias_core::Dataset, out: &Output) -> Result<()> {
    let path = require_out(out)?;
    let format = match out.format {
        Some(FileFormat::Csv) => Format::Csv,
        Some(FileFormat::RawF64) => Format::RawF64,
        None => Format::from_path(path),
    };
    save_dataset(data, path, format)?;
    println!("wrote {} examples ({} features, {} classes) to {}", data.len(), data.dim(), data.classes(), path.display());
    Ok(())
}

fn gen_data(g: GenData) -> Result<()> {
    match g {
        GenData::Gaussian { spectrum: sp, classes, output } => {
            require_out(&output)?;
            let data = gaussian_classes(&spectrum(&sp, classes)?, output.seed)?;
            write_dataset(&data, &output)
        }
        GenData::Symmetric { spectrum: sp, symmetry, output } => {
            require_out(&output)?;
            let sym = match symmetry {
                SymmetryArg::Mirrored => Symmetry::Mirrored,
                SymmetryArg::Independent => Symmetry::Independent,
            };
            let data = symmetric_binary(&spectrum(&sp, 2)?, sym, output.seed)?;
            write_dataset(&data, &output)
        }
        GenData::Frequency { paper_phases, kappa, phases, n, output } => {
            require_out(&output)?;
            let (kappa, phases) = if paper_phases || kappa.is_empty() {
                ((0..PAPER_PHASES.len()).map(|k| k as f64).collect(), PAPER_PHASES.to_vec())
            } else {
                (kappa, phases)
            };
            let data = frequency_dataset(&kappa, &phases, n, output.seed)?;
            write_dataset(&data, &output)
        }
        GenData::ShuffleLabels { input, output } => {
            require_out(&output)?;
            let data = load_dataset(&input, Format::from_path(&input))?;
            write_dataset(&shuffle_labels(&data, output.seed), &output)
        }
        GenData::Separable { input, components, shuffled, output } => {
            require_out(&output)?;
            let data = load_dataset(&input, Format::from_path(&input))?;
            let src = if shuffled { LabelSource::Shuffled } else { LabelSource::Original };
            let sep = make_separable_by_top_pcs(&data, components, src, output.seed)?;
            println!("{} labels changed", sep.flipped);
            write_dataset(&sep.data, &output)
        }
    }
}
