//! Command-line front end: activation tables and sweeps, the polynomial
//! enumeration, single-neuron fits, and network build / verify.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tlfn::network::default_grid;
use tlfn::{
    build_network, represent_univariate, sup_error, BuildOptions, BuildReport, FitOptions, Integer,
    MonicPoly, PieceIndex, Sigma, SigmaParams, SigmaTermRecord, TlfnModel,
};

pub mod functions;

pub use functions::Target;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Budget(_) => 3,
        }
    }
}

impl From<tlfn::Error> for CliError {
    fn from(e: tlfn::Error) -> Self {
        match e {
            tlfn::Error::Budget { .. } | tlfn::Error::IndexTooLarge { .. } => {
                CliError::Budget(e.to_string())
            }
            tlfn::Error::Inconsistent(_) => CliError::Verification(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "tlfn",
    version,
    about = "Sigmoidal activation and fixed-weight two-layer networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct SigmaArgs {
    /// Interval length s (also the width of the network's input box)
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Monotonicity slack lambda (values above 1/2 act as 1/2)
    #[arg(long = "lambda", default_value_t = 0.5)]
    pub lambda: f64,
    /// Minimum working precision in bits
    #[arg(long, default_value_t = 64)]
    pub precision: u32,
}

impl SigmaArgs {
    fn params(&self) -> CliResult<SigmaParams> {
        Ok(SigmaParams::new(self.s, self.lambda, self.precision)?)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Direction {
    PolyToIndex,
    IndexToPoly,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// CSV of (t, sigma(t)) on an arithmetic grid
    SigmaTable {
        #[arg(long, default_value_t = 3.0)]
        s: f64,
        #[arg(long = "lambda", default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 64)]
        precision: u32,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        start: f64,
        #[arg(long, default_value_t = 49.0, allow_negative_numbers = true)]
        end: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV sweeps of sigma: 1 = [0, 50] with s = 3, lambda = 1/2; 2 = [0, 100]
    /// with s = 1 and lambda in {0.75, 0.5, 0.1}; 3 = [0, 100] with
    /// lambda = 0.75 and s in {1, 3, 5}
    Figure {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        which: u8,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Between monic polynomials ("x^2 - 1/2*x + 3") and their piece index
    Enum {
        #[arg(value_enum)]
        direction: Direction,
        payload: String,
    },
    /// Fit a univariate target on [0, 1] with a single sigma neuron
    Fit1d {
        /// identity, const:C, abs-shift, sin-pi or table:PATH
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 1e-2)]
        eps: f64,
        #[command(flatten)]
        sigma: SigmaArgs,
        /// Equispaced verification points on [0, 1]
        #[arg(long, default_value_t = 1025)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the two-hidden-layer network for a target on [a, a + s]^d
    Build {
        /// identity, const:C, abs-shift, sin-pi, mean2, product2 or table:PATH
        #[arg(long)]
        function: String,
        /// Dimension; defaults to the function's own
        #[arg(long)]
        d: Option<usize>,
        /// Target accuracy; defaults to the documented value for the function
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        a: f64,
        #[command(flatten)]
        sigma: SigmaArgs,
        /// Verification points per axis; defaults by dimension
        #[arg(long)]
        grid: Option<usize>,
        /// Model JSON destination (stdout when absent; the report then goes to stderr)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-measure a stored model against a target
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        function: String,
        #[arg(long)]
        grid: Option<usize>,
    },
}

/// Runs a parsed command. `out` receives the primary output, `err` the
/// secondary report when the primary output already uses `out`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::SigmaTable {
            s,
            lambda,
            precision,
            start,
            end,
            step,
            out: path,
        } => {
            let sg = Sigma::new(SigmaParams::new(s, lambda, precision)?);
            let ts = arithmetic_grid(start, end, step)?;
            let mut rows = Vec::with_capacity(ts.len());
            for t in ts {
                rows.push(vec![t, sg.sigma(t)]);
            }
            emit_csv(&["t", "sigma"], &rows, path.as_deref(), out)
        }
        Command::Figure {
            which,
            step,
            out: path,
        } => {
            let (header, rows) = figure_data(which, step)?;
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            emit_csv(&header, &rows, path.as_deref(), out)
        }
        Command::Enum { direction, payload } => {
            writeln!(out, "{}", enum_command(direction, &payload)?)?;
            Ok(())
        }
        Command::Fit1d {
            function,
            eps,
            sigma,
            grid,
            out: path,
        } => {
            let target = Target::parse(&function)?;
            let doc = fit1d(&target, eps, &sigma.params()?, grid)?;
            let json = serde_json::to_string_pretty(&doc)? + "\n";
            write_or_print(path.as_deref(), &json, out)
        }
        Command::Build {
            function,
            d,
            eps,
            a,
            sigma,
            grid,
            out: path,
        } => {
            let target = Target::parse(&function)?;
            let d = target.dimension(d)?;
            let eps = eps.unwrap_or_else(|| target.documented_eps());
            let (model, report) = build(&target, d, a, eps, &sigma.params()?, grid)?;
            let report_json = serde_json::to_string_pretty(&report)? + "\n";
            let model_json = model.to_json()? + "\n";
            match path {
                Some(p) => {
                    fs::write(&p, model_json)?;
                    out.write_all(report_json.as_bytes())?;
                }
                None => {
                    out.write_all(model_json.as_bytes())?;
                    err.write_all(report_json.as_bytes())?;
                }
            }
            if report.within_eps {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "measured error {} exceeds eps {}",
                    report.measured_error, report.eps
                )))
            }
        }
        Command::Verify {
            model,
            function,
            grid,
        } => {
            let target = Target::parse(&function)?;
            let report = verify(&model, &target, grid)?;
            out.write_all((serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "measured error {} exceeds eps {}",
                    report.measured_error, report.eps
                )))
            }
        }
    }
}

fn arithmetic_grid(start: f64, end: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(CliError::Usage(format!(
            "need start <= end and step > 0, got {start}..{end} by {step}"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    if n > 10_000_000 {
        return Err(CliError::Usage(format!("{} rows requested", n + 1)));
    }
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

pub fn figure_data(which: u8, step: f64) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let (end, curves): (f64, Vec<(String, f64, f64)>) = match which {
        1 => (50.0, vec![("sigma".into(), 3.0, 0.5)]),
        2 => (
            100.0,
            [0.75, 0.5, 0.1]
                .iter()
                .map(|&l| (format!("lambda={l}"), 1.0, l))
                .collect(),
        ),
        3 => (
            100.0,
            [1.0, 3.0, 5.0]
                .iter()
                .map(|&s| (format!("s={s}"), s, 0.75))
                .collect(),
        ),
        _ => return Err(CliError::Usage(format!("no figure {which}"))),
    };
    let sigmas = curves
        .iter()
        .map(|(_, s, l)| Ok(Sigma::new(SigmaParams::new(*s, *l, 64)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let rows = arithmetic_grid(0.0, end, step)?
        .into_iter()
        .map(|t| {
            let mut row = vec![t];
            row.extend(sigmas.iter().map(|sg| sg.sigma(t)));
            row
        })
        .collect();
    let mut header = vec!["t".to_string()];
    header.extend(curves.into_iter().map(|c| c.0));
    Ok((header, rows))
}

pub fn enum_command(direction: Direction, payload: &str) -> CliResult<String> {
    match direction {
        Direction::PolyToIndex => {
            let p: MonicPoly = payload.parse()?;
            let idx = PieceIndex::from_poly(&p)?;
            Ok(match idx.to_integer() {
                Ok(n) => n.to_string(),
                Err(_) => format!("<index of {} bits>", idx.bit_length()),
            })
        }
        Direction::IndexToPoly => {
            let n: Integer = payload
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("not a decimal integer: {payload:?}")))?;
            if n < 1 {
                return Err(CliError::Usage("index must be at least 1".into()));
            }
            Ok(PieceIndex::from_integer(&n)?.poly()?.to_string())
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Fit1dReport {
    pub function: String,
    pub eps: f64,
    pub degree: usize,
    pub polynomial_error: f64,
    pub sigma_error: f64,
    pub index_bits: String,
    pub n: Option<String>,
    pub within_eps: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Fit1dOutput {
    pub term: SigmaTermRecord,
    pub report: Fit1dReport,
}

pub fn fit1d(
    target: &Target,
    eps: f64,
    params: &SigmaParams,
    grid: usize,
) -> CliResult<Fit1dOutput> {
    target.dimension(Some(1))?;
    if grid < 2 {
        return Err(CliError::Usage("grid needs at least 2 points".into()));
    }
    let sg = Sigma::new(*params);
    let mut opts = FitOptions::default();
    opts.grid.equispaced = grid;
    let g = |x: f64| target.eval(&[x]);
    let rep = represent_univariate(&g, eps, &sg, &opts)?;
    let report = Fit1dReport {
        function: target.name(),
        eps,
        degree: rep.fit.degree,
        polynomial_error: rep.fit.sup_error,
        sigma_error: rep.sigma_error,
        index_bits: rep.term.index.bit_length().to_string(),
        n: rep.term.index.to_decimal(),
        within_eps: rep.sigma_error < eps,
    };
    Ok(Fit1dOutput {
        term: rep.term.to_record(),
        report,
    })
}

pub fn build(
    target: &Target,
    d: usize,
    a: f64,
    eps: f64,
    params: &SigmaParams,
    grid: Option<usize>,
) -> CliResult<(TlfnModel, BuildReport)> {
    if let Some(g) = grid {
        if g < 2 {
            return Err(CliError::Usage(
                "grid needs at least 2 points per axis".into(),
            ));
        }
    }
    let opts = BuildOptions {
        verify_grid: grid,
        ..BuildOptions::default()
    };
    let f = |x: &[f64]| target.eval(x);
    Ok(build_network(&f, d, a, eps, *params, &opts)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub function: String,
    pub d: usize,
    pub grid: usize,
    pub eps: f64,
    pub measured_error: f64,
    pub pass: bool,
}

pub fn verify(model_path: &Path, target: &Target, grid: Option<usize>) -> CliResult<VerifyReport> {
    let text = fs::read_to_string(model_path)?;
    let model = TlfnModel::from_json(&text)?;
    target.dimension(Some(model.d))?;
    let grid = grid.unwrap_or_else(|| default_grid(model.d));
    if grid < 2 {
        return Err(CliError::Usage(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    let f = |x: &[f64]| target.eval(x);
    let measured = sup_error(&model, &f, grid)?;
    Ok(VerifyReport {
        function: target.name(),
        d: model.d,
        grid,
        eps: model.eps,
        measured_error: measured,
        pass: measured <= model.eps,
    })
}

fn emit_csv(
    header: &[&str],
    rows: &[Vec<f64>],
    path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => out.write_all(&bytes)?,
    }
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}
