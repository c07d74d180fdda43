//! `schauder` — command-line front end for the Schauder-basis lab.
//!
//! Subcommands:
//!
//! * `coeffs` — expand a function in the hat system and emit the
//!   coefficients as JSON;
//! * `approximate` — Lipschitz rate sweep; writes `rate.csv` and
//!   `slope.json`;
//! * `perturb` — Softplus perturbation-budget table as CSV;
//! * `figures` — plot-ready CSV data for the six standard panels;
//! * `pyramid-fit` — least-squares ReLU-plane fit of the pyramid;
//! * `frame-check` — render one expansion in two frames and compare.
//!
//! Exit codes are a stable contract: 0 success, 2 expression syntax error,
//! 3 evaluation or numerical error, 4 bad arguments, 5 I/O error.
//!
//! The environment variable `SCHAUDER_GRID_BITS` (integer in 5..=20,
//! default 14) sets the exponent of the measurement grid used by
//! `approximate`, `perturb`, and `frame-check`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use schauder::{
    analyze, convergence_sweep_with_bits, d_fn, fit_pyramid, frame_identity_check_with_bits, g_fn,
    perturbation_budget, pyramid, q_fn_with_a, relu, t_fn, BasisKind, DyadicIndex, Error, Func1D,
    RateReport, SoftplusConfig, DEFAULT_GRID_BITS,
};

#[derive(Parser)]
#[command(
    name = "schauder",
    version,
    about = "Constructive Schauder bases for C[0,1]: coefficients, bounds, and plot data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a function in the hat system; emit the coefficients as JSON.
    Coeffs {
        /// Target function of x on [0,1], e.g. "x*(1-x)".
        #[arg(long = "fn", value_name = "EXPR")]
        func: String,
        /// Deepest hat level to include (0..=12).
        #[arg(long, value_name = "L")]
        level: u32,
        /// Write the JSON here instead of stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Sweep the equispaced-peak interpolant and fit the convergence rate.
    Approximate {
        /// Target function of x on [0,1].
        #[arg(long = "fn", value_name = "EXPR")]
        func: String,
        /// Lipschitz constant of the target (certifies the 2c/P bound).
        #[arg(long, value_name = "C")]
        lipschitz: f64,
        /// Largest dyadic exponent p in the sweep (0..=12).
        #[arg(long, value_name = "P")]
        pmax: u32,
        /// Directory receiving rate.csv and slope.json.
        #[arg(long = "out-dir", value_name = "DIR", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Tabulate the Softplus perturbation budget against the 1/(2K) threshold.
    Perturb {
        /// Basis constant K of the perturbation threshold 1/(2K).
        #[arg(long = "K", value_name = "K")]
        k: f64,
        /// Deepest level to include (0..=8).
        #[arg(long, value_name = "L")]
        level: u32,
        /// Write the CSV here instead of stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Emit plot-ready CSV data for the six standard panels.
    Figures {
        /// Directory receiving the panel files (created if missing).
        #[arg(long = "out-dir", value_name = "DIR", default_value = "figures")]
        out_dir: PathBuf,
    },
    /// Fit N random ReLU planes to the pyramid by least squares.
    PyramidFit {
        /// Number of planes (0..=256).
        #[arg(long = "N", value_name = "N")]
        n: usize,
        /// RNG seed for the plane sample.
        #[arg(long, value_name = "SEED", default_value_t = 42)]
        seed: u64,
        /// Training grid resolution per axis (2..=201).
        #[arg(long, value_name = "G", default_value_t = 101)]
        grid: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Render one expansion in two frames and report the largest deviation.
    FrameCheck {
        /// Target function of x on [0,1].
        #[arg(long = "fn", value_name = "EXPR")]
        func: String,
        /// Deepest hat level to include (0..=12).
        #[arg(long, value_name = "L")]
        level: u32,
        /// Two comma-separated frame names, e.g. "hat,relu-pair".
        #[arg(long, value_name = "A,B", default_value = "hat,relu-pair")]
        kinds: String,
        /// Basis constant K of the Softplus sharpness schedule.
        #[arg(long = "K", value_name = "K", default_value_t = 1.0)]
        k: f64,
        /// Write the JSON report here instead of stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

/// Anything that can stop a run, tagged with enough structure to pick the
/// exit code.
#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Lib(e) => match e {
                Error::Parse { .. } => 2,
                Error::Eval { .. }
                | Error::SingularSystem { .. }
                | Error::IllConditioned { .. } => 3,
                Error::InvalidArg(_)
                | Error::TruncationTooLong { .. }
                | Error::UnsupportedBasis(_)
                | Error::Geometry(_) => 4,
            },
            Failure::Io { .. } => 5,
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let bits = match grid_bits_from_env() {
        Ok(bits) => bits,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(4);
        }
    };
    match run(cli.command, bits) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

/// Reads SCHAUDER_GRID_BITS; absent means the library default (14).
fn grid_bits_from_env() -> std::result::Result<u32, String> {
    match std::env::var("SCHAUDER_GRID_BITS") {
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_GRID_BITS),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err("SCHAUDER_GRID_BITS is not valid unicode".to_string())
        }
        Ok(raw) => match raw.trim().parse::<u32>() {
            Ok(bits) if (5..=20).contains(&bits) => Ok(bits),
            _ => Err(format!(
                "SCHAUDER_GRID_BITS must be an integer in 5..=20, got `{raw}`"
            )),
        },
    }
}

fn run(command: Command, bits: u32) -> CliResult<()> {
    match command {
        Command::Coeffs { func, level, out } => cmd_coeffs(&func, level, out.as_deref()),
        Command::Approximate {
            func,
            lipschitz,
            pmax,
            out_dir,
        } => cmd_approximate(&func, lipschitz, pmax, &out_dir, bits),
        Command::Perturb { k, level, out } => cmd_perturb(k, level, out.as_deref(), bits),
        Command::Figures { out_dir } => cmd_figures(&out_dir),
        Command::PyramidFit { n, seed, grid, out } => {
            cmd_pyramid_fit(n, seed, grid, out.as_deref())
        }
        Command::FrameCheck {
            func,
            level,
            kinds,
            k,
            out,
        } => cmd_frame_check(&func, level, &kinds, k, out.as_deref(), bits),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| Failure::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| Failure::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Emits text to `out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn softplus_config(k: f64) -> CliResult<SoftplusConfig> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidArg(format!("K must be finite and positive, got {k}")).into());
    }
    Ok(SoftplusConfig { k })
}

fn cmd_coeffs(func: &str, level: u32, out: Option<&Path>) -> CliResult<()> {
    let f = Func1D::from_expr(func)?;
    let expansion = analyze(&f, level)?;
    let mut json = expansion.to_json_string();
    json.push('\n');
    emit(out, &json)
}

fn cmd_approximate(
    func: &str,
    lipschitz: f64,
    pmax: u32,
    out_dir: &Path,
    bits: u32,
) -> CliResult<()> {
    let f = Func1D::from_expr(func)?.with_lipschitz(lipschitz)?;
    let report = convergence_sweep_with_bits(&f, pmax, bits)?;
    ensure_dir(out_dir)?;

    let rate_path = out_dir.join("rate.csv");
    write_file(&rate_path, &rate_csv(&report))?;

    let slope_json = match report.fitted_slope {
        Some(slope) => format!(
            "{{\"slope\": {}}}\n",
            serde_json::to_string(&slope).unwrap()
        ),
        None => "{\"slope\": null}\n".to_string(),
    };
    let slope_path = out_dir.join("slope.json");
    write_file(&slope_path, &slope_json)?;

    match report.fitted_slope {
        Some(slope) => println!("{} points, fitted slope {slope:.4}", report.points.len()),
        None => println!(
            "{} points, fitted slope null (error at floor)",
            report.points.len()
        ),
    }
    Ok(())
}

fn rate_csv(report: &RateReport) -> String {
    let mut csv = String::from("N,sup_error\n");
    for pt in &report.points {
        csv.push_str(&format!("{},{:.16e}\n", pt.n_terms, pt.sup_error));
    }
    csv
}

fn cmd_perturb(k: f64, level: u32, out: Option<&Path>, bits: u32) -> CliResult<()> {
    let cfg = softplus_config(k)?;
    let report = perturbation_budget(level, &cfg, bits)?;
    let mut csv = String::from("n,k,a,gap,bound\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e}\n",
            row.n, row.k, row.a, row.gap, row.bound
        ));
    }
    csv.push_str(&format!(
        "total,,,{:.16e},{:.16e}\n",
        report.total, report.threshold
    ));
    emit(out, &csv)?;
    if out.is_some() {
        println!(
            "total {:.6e} against threshold {:.6e}",
            report.total, report.threshold
        );
    }
    Ok(())
}

/// Sample count for the 1-D figure panels: x = j/512 for j = 0..=512.
const CURVE_STEPS: usize = 512;
/// Per-axis resolution of the pyramid surface panel.
const PYRAMID_GRID: usize = 101;

fn curve_csv(header: &str, values: impl Fn(f64) -> Vec<f64>) -> String {
    let mut csv = format!("{header}\n");
    for j in 0..=CURVE_STEPS {
        let x = j as f64 / CURVE_STEPS as f64;
        csv.push_str(&format!("{x:.16e}"));
        for v in values(x) {
            csv.push_str(&format!(",{v:.16e}"));
        }
        csv.push('\n');
    }
    csv
}

fn cmd_figures(out_dir: &Path) -> CliResult<()> {
    ensure_dir(out_dir)?;
    let idx = [
        DyadicIndex::new(0, 0),
        DyadicIndex::new(1, 0),
        DyadicIndex::new(1, 1),
    ];

    let panels: Vec<(&str, String)> = vec![
        (
            "relu.csv",
            curve_csv("x,r,r_shift_half,r_shift_one", |x| {
                vec![relu(x), relu(x - 0.5), relu(x - 1.0)]
            }),
        ),
        (
            "first_differences.csv",
            curve_csv("x,d_0_0,d_1_0,d_1_1", |x| {
                idx.iter().map(|&i| d_fn(i, x)).collect()
            }),
        ),
        (
            "second_differences.csv",
            curve_csv("x,t_0_0,t_1_0,t_1_1", |x| {
                idx.iter().map(|&i| t_fn(i, x)).collect()
            }),
        ),
        (
            "g_shifted.csv",
            curve_csv("x,g_0_0,g_1_0,g_1_1", |x| {
                idx.iter().map(|&i| g_fn(i, x) + 0.5).collect()
            }),
        ),
        (
            // The perturbed hat is plotted at fixed a = 10, not at the
            // sharpness schedule value for (0,0).
            "softplus_hat.csv",
            curve_csv("x,t_0_0,q_a10", |x| {
                vec![t_fn(idx[0], x), q_fn_with_a(idx[0], 10.0, x)]
            }),
        ),
        ("pyramid.csv", pyramid_csv()),
    ];

    for (name, text) in &panels {
        write_file(&out_dir.join(name), text)?;
    }
    println!("wrote {} panels to {}", panels.len(), out_dir.display());
    Ok(())
}

fn pyramid_csv() -> String {
    let mut csv = String::from("x,y,z\n");
    let step = (PYRAMID_GRID - 1) as f64;
    for iy in 0..PYRAMID_GRID {
        let y = iy as f64 / step;
        for ix in 0..PYRAMID_GRID {
            let x = ix as f64 / step;
            csv.push_str(&format!("{x:.16e},{y:.16e},{:.16e}\n", pyramid(x, y)));
        }
    }
    csv
}

fn cmd_pyramid_fit(n: usize, seed: u64, grid: usize, out: Option<&Path>) -> CliResult<()> {
    let fit = fit_pyramid(n, seed, grid)?;
    let mut json = serde_json::to_string_pretty(&fit).expect("report serializes");
    json.push('\n');
    let residual = fit.residual_sup;
    emit(out, &json)?;
    println!("residual_sup = {residual:.16e}");
    Ok(())
}

fn parse_kind_pair(kinds: &str) -> CliResult<(BasisKind, BasisKind)> {
    let parts: Vec<&str> = kinds.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArg(format!(
            "--kinds expects two comma-separated frame names, got `{kinds}`"
        ))
        .into());
    }
    Ok((parts[0].parse()?, parts[1].parse()?))
}

fn cmd_frame_check(
    func: &str,
    level: u32,
    kinds: &str,
    k: f64,
    out: Option<&Path>,
    bits: u32,
) -> CliResult<()> {
    let (kind_a, kind_b) = parse_kind_pair(kinds)?;
    let cfg = softplus_config(k)?;
    let f = Func1D::from_expr(func)?;
    let expansion = analyze(&f, level)?;
    let check = frame_identity_check_with_bits(&expansion, kind_a, kind_b, Some(&cfg), bits)?;
    let mut json = serde_json::to_string_pretty(&check).expect("report serializes");
    json.push('\n');
    emit(out, &json)?;
    println!(
        "max |{kind_a} - {kind_b}| = {:.16e} at x = {:.16e}",
        check.max_abs_diff, check.argmax_x
    );
    Ok(())
}
