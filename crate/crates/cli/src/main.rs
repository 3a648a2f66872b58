//! `pstar`: verification, calibration, tests, merging and power studies for
//! p-, p*- and e-values.
//!
//! Exit status is 0 on success, 1 when an input is outside the domain of the
//! requested operation and 2 on a usage error.

mod dist;
mod output;

use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pstar_core::calibrate::{validate_p_to_e, validate_p_to_pstar, validate_pstar_to_p, Family, TabulatedMap};
use pstar_core::construct::{adversarial_nonconcave_witness, adversarial_step_pstar, adversarial_two_atom};
use pstar_core::construct::{midway_distribution, midway_pvalue, DiscreteNull, WeightVector};
use pstar_core::experiments::{run_figure2, run_figure2a, ExperimentConfig};
use pstar_core::io::{read_column, read_pairs, read_step_csv};
use pstar_core::merge::{harmonic_constant, merge_arithmetic, merge_harmonic, MergeMethod};
use pstar_core::order::{empirical_quantile, is_e_sample, is_p, is_pstar, OrderCheckReport};
use pstar_core::rng::derive_stream;
use pstar_core::testing::{
    averaging_test, combined_p_pstar_test, deterministic_pstar_test, e_test, product_e_test, randomized_e_test,
    randomized_pstar_test, ville_test, ville_test_randomized, AveragingMode, CombinedVariant, DPrimeHolder,
};
use pstar_core::threshold::{DensityTable, RandomThreshold, ThresholdFamily};
use pstar_core::{
    Calibrator, CalibratorKind, EmpiricalSample, MartingalePath, QuantileFn, Scale, StreamRng, ValidatedThreshold,
};

use output::{Format, Out};

/// A usage error detected after argument parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "pstar", version, about = "p-, p*- and e-value calculus")]
struct Cli {
    /// Seed for every randomized output.
    #[arg(long, global = true, env = "PSTAR_SEED")]
    seed: Option<u64>,

    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check whether a distribution is a p-, p*- or e-variable.
    Verify(VerifyArgs),
    /// Build midway p*-values and adversarial distributions.
    #[command(subcommand)]
    Construct(ConstructCmd),
    /// Convert between the p, p* and e scales, or validate a tabulated map.
    Calibrate(CalibrateArgs),
    /// Run a single test and print its decision.
    #[command(subcommand)]
    Test(TestCmd),
    /// Merge a column of p- or p*-values.
    Merge(MergeArgs),
    /// Run a power study and write its table.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Property {
    P,
    Pstar,
    E,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    property: Property,
    /// Named distribution: uniform01, uniform:LO:HI, constant:C, two-atom:T,
    /// step-pstar:U, witness:X:Y:EPS, power-inverse:KAPPA.
    #[arg(long, conflicts_with_all = ["input", "sample"])]
    dist: Option<String>,
    /// Step distribution as CSV rows `atom,probability`.
    #[arg(long, conflicts_with = "sample")]
    input: Option<PathBuf>,
    /// One-column CSV of sample values.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Subcommand)]
enum ConstructCmd {
    /// Midway p*-value of an observation, or the whole midway distribution
    /// when `--t-obs` is absent.
    Midway {
        /// Null distribution as CSV rows `value,probability`.
        #[arg(long)]
        null: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        t_obs: Option<f64>,
    },
    /// Two-atom p*-variable with mass 2t at t.
    TwoAtom {
        #[arg(long)]
        t: f64,
    },
    /// p*-variable collapsing `[x, x+ε] ∪ [y, y+ε]` onto one atom.
    Witness {
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long)]
        eps: f64,
    },
    /// p*-variable equal to `u` on `[0, 2u]` and uniform above.
    StepPstar {
        #[arg(long)]
        u: f64,
    },
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    from: Scale,
    #[arg(long)]
    to: Scale,
    #[arg(long, allow_negative_numbers = true, conflicts_with_all = ["input", "table"])]
    value: Option<f64>,
    /// One-column CSV of values to convert.
    #[arg(long, conflicts_with = "table")]
    input: Option<PathBuf>,
    /// Two-column CSV `input,output` to validate as a calibrator.
    #[arg(long)]
    table: Option<PathBuf>,
    /// shafer or power (p/p* to e only); defaults to the recommended map.
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args, Clone)]
struct ThresholdArgs {
    /// uniform, point:C or table:FILE (CSV `x,density`).
    #[arg(long, default_value = "uniform")]
    threshold: String,
    /// Use the threshold even if it fails validation.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum TestCmd {
    /// Randomized p*-test `p* ≤ V`, or `p* ≤ α/2` with `--deterministic`.
    Pstar {
        #[arg(long, conflicts_with = "input")]
        value: Option<f64>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        deterministic: bool,
        #[command(flatten)]
        threshold: ThresholdArgs,
    },
    /// e-test `e ≥ 1/α`, or `2e ≥ 1/V` with `--randomized`.
    E {
        #[arg(long, conflicts_with = "input")]
        value: Option<f64>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        randomized: bool,
        #[command(flatten)]
        threshold: ThresholdArgs,
    },
    /// `2 e₁ e₂ ≥ 1/α` for independent e-values.
    Product {
        #[arg(long)]
        e1: f64,
        #[arg(long)]
        e2: f64,
        #[arg(long)]
        alpha: f64,
        /// Which input satisfies the decreasing-density condition.
        #[arg(long, value_enum, default_value = "first")]
        holder: Holder,
    },
    /// Deterministic test from a p-value and an independent p*-value.
    Combined {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        pstar: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "star-over-p")]
        variant: Variant,
    },
    /// Ville's test on a martingale path (one-column CSV starting at S₀ = 1).
    Ville {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
        /// The column holds the factors `S_t / S_{t−1}`.
        #[arg(long)]
        factors: bool,
        #[arg(long)]
        randomized: bool,
        #[command(flatten)]
        threshold: ThresholdArgs,
    },
    /// Averaging test for p-values under arbitrary dependence.
    Average {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "randomized")]
        mode: Mode,
        /// One-column CSV of weights; equal weights by default.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Holder {
    First,
    Second,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    StarOverP,
    POverStar,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Deterministic,
    Randomized,
    Enhanced,
}

#[derive(Args)]
struct MergeArgs {
    /// arithmetic, bonferroni-pstar, simes, harmonic or bonferroni-p.
    #[arg(long)]
    method: MergeMethod,
    /// One-column CSV of p- or p*-values.
    #[arg(long)]
    input: PathBuf,
    /// Weights for the arithmetic merger.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Override the harmonic constant c_K.
    #[arg(long)]
    constant: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    /// Averaging tests on correlated p-values.
    Figure2a,
    /// Martingale tests on Gaussian sequences.
    Figure2,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    study: Study,
    /// TOML configuration; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replications per scenario, overriding the configuration.
    #[arg(long, env = "PSTAR_REPS")]
    reps: Option<usize>,
    /// Add the Ville test against 1/V to the martingale study.
    #[arg(long)]
    ville_random: bool,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn column(path: &Path) -> Result<Vec<f64>> {
    Ok(read_column(open(path)?).with_context(|| format!("reading {}", path.display()))?)
}

#[derive(Serialize)]
struct VerifyRow<'a> {
    check: &'static str,
    source: &'a str,
    holds: bool,
    worst_v: f64,
    margin: f64,
}

fn verify(a: VerifyArgs, out: &mut Out) -> Result<()> {
    let (source, q, sample) = match (&a.dist, &a.input, &a.sample) {
        (Some(d), _, _) => (d.clone(), dist::parse(d)?, None),
        (_, Some(p), _) => (p.display().to_string(), QuantileFn::Step(read_step_csv(open(p)?)?), None),
        (_, _, Some(p)) => {
            let s = EmpiricalSample::new(column(p)?)?;
            (p.display().to_string(), empirical_quantile(&s), Some(s))
        }
        _ => bail!(usage("one of --dist, --input or --sample is required")),
    };
    let (check, report) = match a.property {
        Property::P => ("p", is_p(&q, a.grid, a.tol)?),
        Property::Pstar => ("pstar", is_pstar(&q, a.grid, a.tol)?),
        Property::E => match &sample {
            Some(s) => ("e", is_e_sample(s, a.tol)),
            None => ("e", e_report(&q, a.tol)?),
        },
    };
    out.record(&VerifyRow {
        check,
        source: &source,
        holds: report.holds,
        worst_v: report.worst_v,
        margin: report.margin,
    })
}

/// `E ≥ 0` and `E[E] ≤ 1` for a distribution given by its quantile.
fn e_report(q: &QuantileFn, tol: f64) -> Result<OrderCheckReport> {
    let lowest = q.eval(f64::MIN_POSITIVE);
    let margin = if lowest < 0.0 { lowest } else { 1.0 - q.mean()? };
    Ok(OrderCheckReport {
        holds: margin >= -tol,
        worst_v: 1.0,
        margin,
        offending_index: None,
    })
}

#[derive(Serialize)]
struct Atom {
    atom: f64,
    probability: f64,
}

#[derive(Serialize)]
struct Knot {
    u: f64,
    quantile: f64,
}

fn write_quantile(q: &QuantileFn, out: &mut Out) -> Result<()> {
    match q {
        QuantileFn::Step(s) => {
            for (&atom, &probability) in s.atoms().iter().zip(s.probs()) {
                out.record(&Atom { atom, probability })?;
            }
        }
        QuantileFn::Linear(l) => {
            for (u, quantile) in l.knots() {
                out.record(&Knot { u, quantile })?;
            }
        }
        QuantileFn::Closed(_) => bail!("closed-form quantiles have no table"),
    }
    Ok(())
}

#[derive(Serialize)]
struct Midway {
    t_obs: f64,
    p_star: f64,
}

fn construct(c: ConstructCmd, out: &mut Out) -> Result<()> {
    let q = match c {
        ConstructCmd::Midway { null, t_obs } => {
            let null = DiscreteNull::from_pairs(read_pairs(open(&null)?)?)?;
            match t_obs {
                Some(t) => {
                    if !t.is_finite() {
                        return Err(pstar_core::Error::Domain("observed statistic must be finite".into()).into());
                    }
                    return out.record(&Midway {
                        t_obs: t,
                        p_star: midway_pvalue(&null, t),
                    });
                }
                None => midway_distribution(&null),
            }
        }
        ConstructCmd::TwoAtom { t } => adversarial_two_atom(t)?,
        ConstructCmd::Witness { x, y, eps } => adversarial_nonconcave_witness(x, y, eps)?,
        ConstructCmd::StepPstar { u } => adversarial_step_pstar(u)?,
    };
    write_quantile(&q, out)
}

#[derive(Serialize)]
struct Converted<'a> {
    from: Scale,
    to: Scale,
    calibrator: &'a str,
    input: f64,
    output: f64,
}

fn calibrator_for(a: &CalibrateArgs, kind: CalibratorKind) -> Result<Calibrator> {
    let Some(name) = &a.family else {
        return Ok(Calibrator::recommended(kind));
    };
    let family = match name.as_str() {
        "shafer" => Family::Shafer,
        "power" => Family::Power { kappa: a.kappa },
        "reciprocal" => Family::Reciprocal,
        "half-reciprocal" => Family::HalfReciprocal,
        "double" => Family::Double,
        "identity" => Family::Identity,
        other => bail!(usage(format!("unknown calibrator family `{other}`"))),
    };
    Calibrator::new(kind, family).map_err(|e| match e {
        pstar_core::Error::Invalid(msg) => usage(msg),
        e => e.into(),
    })
}

fn calibrate(a: CalibrateArgs, out: &mut Out) -> Result<()> {
    let Some(kind) = CalibratorKind::between(a.from, a.to) else {
        bail!(usage(format!("no calibrator from {} to {}", a.from, a.to)));
    };
    if let Some(path) = &a.table {
        let table = TabulatedMap::new(read_pairs(open(path)?)?)?;
        let report = match kind {
            CalibratorKind::PToE | CalibratorKind::PStarToE => validate_p_to_e(&table, a.tol)?,
            CalibratorKind::PToPStar => validate_p_to_pstar(&table, a.tol)?,
            CalibratorKind::PStarToP => validate_pstar_to_p(&table, a.tol)?,
            _ => bail!(usage(format!("tables from {} to {} cannot be validated", a.from, a.to))),
        };
        return out.record(&report);
    }
    let cal = calibrator_for(&a, kind)?;
    let name = cal.name();
    let values = match (a.value, &a.input) {
        (Some(v), _) => vec![v],
        (None, Some(p)) => column(p)?,
        (None, None) => bail!(usage("one of --value, --input or --table is required")),
    };
    for x in values {
        out.record(&Converted {
            from: a.from,
            to: a.to,
            calibrator: &name,
            input: x,
            output: cal.eval(x)?,
        })?;
    }
    Ok(())
}

fn threshold(t: &ThresholdArgs, alpha: f64) -> Result<ValidatedThreshold> {
    let family = match t.threshold.split_once(':') {
        None if t.threshold == "uniform" => ThresholdFamily::Uniform,
        Some(("point", c)) => ThresholdFamily::PointMass {
            at: c.parse().map_err(|_| usage(format!("bad point mass `{c}`")))?,
        },
        Some(("table", file)) => ThresholdFamily::Tabulated(DensityTable::new(read_pairs(open(Path::new(file))?)?)?),
        _ => bail!(usage(format!(
            "unknown threshold `{}`; use uniform, point:C or table:FILE",
            t.threshold
        ))),
    };
    let v = RandomThreshold::new(alpha, family)?;
    if t.force {
        Ok(ValidatedThreshold::force(v))
    } else {
        Ok(ValidatedThreshold::new(v, 1e-9)?)
    }
}

const TEST_STREAM: u64 = 0x7e57;

fn values(value: Option<f64>, input: &Option<PathBuf>) -> Result<Vec<f64>> {
    match (value, input) {
        (Some(v), _) => Ok(vec![v]),
        (None, Some(p)) => column(p),
        (None, None) => bail!(usage("one of --value or --input is required")),
    }
}

fn run_test(t: TestCmd, seed: u64, out: &mut Out) -> Result<()> {
    // row i of a batch draws from its own stream, so results do not depend
    // on batch composition
    let rng = |i: usize| StreamRng::new(seed, derive_stream(&[TEST_STREAM, i as u64]));
    match t {
        TestCmd::Pstar {
            value,
            input,
            alpha,
            deterministic,
            threshold: th,
        } => {
            let v = if deterministic { None } else { Some(threshold(&th, alpha)?) };
            for (i, x) in values(value, &input)?.into_iter().enumerate() {
                let d = match &v {
                    Some(v) => randomized_pstar_test(x, v, &mut rng(i))?,
                    None => deterministic_pstar_test(x, alpha)?,
                };
                out.decision(&d)?;
            }
        }
        TestCmd::E {
            value,
            input,
            alpha,
            randomized,
            threshold: th,
        } => {
            let v = if randomized { Some(threshold(&th, alpha)?) } else { None };
            for (i, x) in values(value, &input)?.into_iter().enumerate() {
                let d = match &v {
                    Some(v) => randomized_e_test(x, v, &mut rng(i))?,
                    None => e_test(x, alpha)?,
                };
                out.decision(&d)?;
            }
        }
        TestCmd::Product { e1, e2, alpha, holder } => {
            let holder = match holder {
                Holder::First => DPrimeHolder::First,
                Holder::Second => DPrimeHolder::Second,
            };
            out.decision(&product_e_test(e1, e2, alpha, holder)?)?;
        }
        TestCmd::Combined { p, pstar, alpha, variant } => {
            let variant = match variant {
                Variant::StarOverP => CombinedVariant::StarOverP,
                Variant::POverStar => CombinedVariant::POverStar,
            };
            out.decision(&combined_p_pstar_test(p, pstar, alpha, variant)?)?;
        }
        TestCmd::Ville {
            input,
            alpha,
            factors,
            randomized,
            threshold: th,
        } => {
            let col = column(&input)?;
            let path = if factors {
                MartingalePath::from_factors(col)?
            } else {
                MartingalePath::new(col)?
            };
            let d = if randomized {
                ville_test_randomized(&path, &threshold(&th, alpha)?, &mut rng(0))?
            } else {
                ville_test(&path, alpha)?
            };
            out.decision(&d)?;
        }
        TestCmd::Average {
            input,
            alpha,
            mode,
            weights,
        } => {
            let ps = column(&input)?;
            let w = match weights {
                Some(p) => WeightVector::new(column(&p)?)?,
                None if matches!(mode, Mode::Enhanced) => {
                    if ps.len() < 2 {
                        return Err(pstar_core::Error::Domain("enhanced averaging needs K ≥ 2".into()).into());
                    }
                    let mut w = vec![1.0 / (ps.len() - 1) as f64; ps.len()];
                    w[0] = 0.0;
                    WeightVector::new(w)?
                }
                None => WeightVector::equal(ps.len())?,
            };
            let mode = match mode {
                Mode::Deterministic => AveragingMode::Deterministic,
                Mode::Randomized => AveragingMode::Randomized,
                Mode::Enhanced => AveragingMode::Enhanced,
            };
            out.decision(&averaging_test(&ps, &w, alpha, mode, &mut rng(0))?)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Merged {
    method: String,
    k: usize,
    merged: f64,
}

fn merge(a: MergeArgs, out: &mut Out) -> Result<()> {
    let ps = column(&a.input)?;
    let merged = match (a.method, &a.weights, a.constant) {
        (MergeMethod::Arithmetic, Some(w), _) => merge_arithmetic(&ps, Some(&WeightVector::new(column(w)?)?))?,
        (_, Some(_), _) => bail!(usage("--weights applies to the arithmetic merger only")),
        (MergeMethod::Harmonic, None, Some(c)) => merge_harmonic(&ps, c)?,
        (_, None, Some(_)) => bail!(usage("--constant applies to the harmonic merger only")),
        (MergeMethod::Harmonic, None, None) => merge_harmonic(&ps, harmonic_constant(ps.len())?)?,
        (m, None, None) => m.apply(&ps)?,
    };
    out.record(&Merged {
        method: a.method.to_string(),
        k: ps.len(),
        merged,
    })
}

fn experiment(a: ExperimentArgs, seed: Option<u64>, format: Format) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(r) = a.reps {
        config.reps = r;
    }
    if a.ville_random {
        config.figure2.ville_random_threshold = true;
    }
    let rows = match a.study {
        Study::Figure2a => run_figure2a(&config)?,
        Study::Figure2 => run_figure2(&config)?,
    };
    let mut out = match &a.out {
        Some(p) => Out::file(p, format)?,
        None => Out::stdout(format),
    };
    out.table(&rows)?;
    out.finish()
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Experiment(a) => experiment(a, cli.seed, cli.format.unwrap_or(Format::Csv)),
        cmd => {
            let mut out = Out::stdout(cli.format.unwrap_or(Format::Json));
            match cmd {
                Command::Verify(a) => verify(a, &mut out)?,
                Command::Construct(c) => construct(c, &mut out)?,
                Command::Calibrate(a) => calibrate(a, &mut out)?,
                Command::Test(t) => run_test(t, seed, &mut out)?,
                Command::Merge(a) => merge(a, &mut out)?,
                Command::Experiment(_) => unreachable!(),
            }
            out.finish()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
