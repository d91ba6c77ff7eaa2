//! The `scatter` command line: argument model, experiment dispatch and output.
//!
//! Every subcommand's parsed arguments form an [`ExperimentConfig`]. When an
//! output path is given the config is echoed next to it as
//! `<out>.config.json`, and `scatter --config <file>` re-runs it.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use scatter_core::acceptance;
use scatter_core::combinatorics::{build_table, enumerate_partitions, format_fraction};
use scatter_core::limit_laws::{
    density_dl, psi, sample_quotients, sample_r, DensityInverter, KernelDensity, LimitIndex, LimitSampling,
};
use scatter_core::spectrum::{run_simulation, MultiplicityFunction, SimulationConfig};
use scatter_core::torus::{
    build_lattice, deterministic_moment, grid_moment, second_moment_formula, solve_new_eigenvalues,
};
use scatter_core::wavevector::{na_check, Variant};
use scatter_core::weyl::weyl_table;
use scatter_core::Error;

pub mod table;

use table::{fmt_f64, Table};

#[derive(Parser, Debug)]
#[command(name = "scatter", version, about = "Spectral sums, moments and limit laws for point scatterers")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SCATTER_THREADS")]
    pub threads: Option<usize>,

    /// Re-run a configuration written as `<out>.config.json`.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Partition polynomial coefficients and A_p as exact fractions.
    Coeffs(CoeffsArgs),
    /// Lattice levels, deterministic moments and new eigenvalues on a torus.
    Torus(TorusArgs),
    /// Brute-force tuple counts against the closed form.
    NaCheck(NaCheckArgs),
    /// Spectral sums and randomized moments per replica.
    Simulate(SimulateArgs),
    /// Counting-function statistics against the Weyl law.
    Weyl(WeylArgs),
    /// Samples, characteristic function and densities of the limit laws.
    Limit(LimitArgs),
    /// Runs the acceptance suite and writes one JSON report.
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Output {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffsArgs {
    #[arg(long, default_value_t = 6)]
    pub pmax: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusArgs {
    /// Squared aspect ratio as `P/Q`.
    #[arg(long, default_value = "1")]
    pub alpha_sq: String,
    /// Bound on `|ξ|²`, integer or `a/b`.
    #[arg(long)]
    pub cutoff: String,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub moments: Vec<usize>,
    #[arg(long)]
    pub tau: f64,
    /// Self-adjoint extension parameter in (−π, π); enables the new-eigenvalue table.
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// How many new eigenvalues to solve for.
    #[arg(long, default_value_t = 5)]
    pub eigen_count: usize,
    /// Grid size for the quadrature moments; the smallest exact size by default.
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaCheckArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 4)]
    pub max_levels: usize,
    #[arg(long, default_value = "rect")]
    pub variant: Variant,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// `const:c`, `logpow:C,a` or `pow:C,a`.
    #[arg(long)]
    pub m: MultiplicityFunction,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = 2)]
    pub pmax: usize,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0.5)]
    pub window_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylArgs {
    #[arg(long)]
    pub m: MultiplicityFunction,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[command(args_conflicts_with_subcommands = true)]
pub struct LimitArgs {
    #[command(subcommand)]
    pub action: Option<LimitAction>,
    #[command(flatten)]
    pub sample: LimitSampleArgs,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyArgs {
    /// Large `τ` standing in for the limit (at least 1e4).
    #[arg(long, default_value_t = 1e5)]
    pub proxy_tau: f64,
    #[arg(long, default_value_t = 0.5)]
    pub window_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSampleArgs {
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// `inf` or a positive number.
    #[arg(long, default_value = "1")]
    pub l: LimitIndex,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[command(flatten)]
    pub proxy: ProxyArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum LimitAction {
    /// ψ at the points of a CSV file, one point per row.
    Psi(PsiArgs),
    /// Density of the first marginal by Fourier inversion.
    Density(DensityArgs),
    /// Kernel estimate of the density of R(l) at the points of a CSV file.
    Dl(DlArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityArgs {
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlArgs {
    #[arg(long)]
    pub l: f64,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Quotient samples behind the kernel estimate.
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    #[arg(long)]
    pub points: PathBuf,
    #[command(flatten)]
    pub proxy: ProxyArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Criterion ids to run; all when empty.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_ACCURACY: i32 = 2;

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Accuracy(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Accuracy(_) => EXIT_ACCURACY,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Budget(_) => Failure::Validation(e.to_string()),
            Error::Numerical(_) | Error::Quadrature { .. } => Failure::Accuracy(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (including the program name), runs and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute_cli(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Validation(m) => eprintln!("error: {m}"),
                Failure::Accuracy(m) => eprintln!("accuracy not met: {m}"),
            }
            f.code()
        }
    }
}

fn execute_cli(cli: Cli) -> Outcome {
    let config = match (cli.config, cli.command) {
        (Some(_), Some(_)) => return Err(Failure::Validation("--config cannot be combined with a subcommand".into())),
        (Some(path), None) => serde_json::from_str::<ExperimentConfig>(&fs::read_to_string(path)?)?,
        (None, Some(command)) => ExperimentConfig { command },
        (None, None) => return Err(Failure::Validation("a subcommand or --config is required".into())),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Validation("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Validation(e.to_string()))?;
    pool.install(|| execute(&config))
}

/// Runs one experiment.
pub fn execute(config: &ExperimentConfig) -> Outcome {
    match &config.command {
        Command::Coeffs(a) => coeffs(a, config),
        Command::Torus(a) => torus(a, config),
        Command::NaCheck(a) => na(a, config),
        Command::Simulate(a) => simulate(a, config),
        Command::Weyl(a) => weyl(a, config),
        Command::Limit(a) => match &a.action {
            None => limit_sample(&a.sample, config),
            Some(LimitAction::Psi(p)) => limit_psi(p, config),
            Some(LimitAction::Density(d)) => limit_density(d, config),
            Some(LimitAction::Dl(d)) => limit_dl(d, config),
        },
        Command::Report(a) => report(a, config),
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

/// `<stem>.<name>.<ext>` next to `out`.
fn companion_path(out: &Path, name: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}.{name}{ext}"))
}

fn write_config(out: &Path, config: &ExperimentConfig) -> Outcome {
    fs::write(sidecar_path(out), serde_json::to_string_pretty(config)? + "\n")?;
    Ok(())
}

/// Writes the main table to `out` (or stdout) and each named extra table to
/// a companion file.
fn emit(output: &Output, config: &ExperimentConfig, main: &Table, extra: &[(&str, &Table)]) -> Outcome {
    match &output.out {
        Some(path) => {
            fs::write(path, main.render(output.format)?)?;
            for (name, t) in extra {
                fs::write(companion_path(path, name), t.render(output.format)?)?;
            }
            write_config(path, config)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(main.render(output.format)?.as_bytes())?;
            for (_, t) in extra {
                stdout.write_all(b"\n")?;
                stdout.write_all(t.render(output.format)?.as_bytes())?;
            }
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, config: &ExperimentConfig, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => {
            fs::write(path, text)?;
            write_config(path, config)
        }
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn coeffs(a: &CoeffsArgs, config: &ExperimentConfig) -> Outcome {
    let table = build_table(a.pmax)?;
    let mut at = Table::new(["p", "A_p", "A_p_float"]);
    for p in 1..=a.pmax {
        at.push([p.to_string(), format_fraction(table.a(p)), fmt_f64(table.a_f64(p))]);
    }
    let mut ct = Table::new(["poly", "p", "partition", "coefficient"]);
    for p in 1..=a.pmax {
        for part in enumerate_partitions(p) {
            let mults = part
                .multiplicities()
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(";");
            for (name, poly) in [("P", table.p_poly(p)), ("Q", table.q_poly(p))] {
                if let Some(c) = poly.coefficient(&part) {
                    ct.push([name.to_string(), p.to_string(), mults.clone(), format_fraction(c)]);
                }
            }
        }
    }
    emit(&a.output, config, &at, &[("coefficients", &ct)])
}

fn parse_ratio(s: &str, what: &str) -> Result<Ratio<i64>, Failure> {
    s.trim()
        .parse::<Ratio<i64>>()
        .map_err(|e| Failure::Validation(format!("{what} {s:?}: {e}")))
}

fn torus(a: &TorusArgs, config: &ExperimentConfig) -> Outcome {
    let lattice = build_lattice(parse_ratio(&a.alpha_sq, "alpha-sq")?, parse_ratio(&a.cutoff, "cutoff")?)?;
    let mut levels = Table::new(["k", "lambda_k", "r_k"]);
    for (k, l) in lattice.levels().iter().enumerate() {
        levels.push([k.to_string(), fmt_f64(l.lambda), l.multiplicity.to_string()]);
    }
    let mut moments = Table::new(["p", "M_p_formula", "M_p_grid", "rel_err", "grid_size", "M_2_closed_form"]);
    let mut worst: f64 = 0.0;
    for &p in &a.moments {
        let formula = deterministic_moment(&lattice, a.tau, p)?;
        let grid = grid_moment(&lattice, a.tau, p, a.grid)?;
        let rel = (formula - grid.value).abs() / formula.abs().max(grid.value.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        let closed = if p == 2 {
            fmt_f64(second_moment_formula(&lattice, a.tau)?)
        } else {
            String::new()
        };
        moments.push([
            p.to_string(),
            fmt_f64(formula),
            fmt_f64(grid.value),
            fmt_f64(rel),
            grid.grid_size.to_string(),
            closed,
        ]);
    }
    let mut extra = vec![("levels", &levels)];
    let eigen;
    if let Some(phi) = a.phi {
        let available = lattice.levels().len().saturating_sub(1);
        if a.eigen_count == 0 || a.eigen_count >= available {
            return Err(Failure::Validation(format!(
                "eigen-count must be in 1..{available} for this cutoff"
            )));
        }
        let roots = solve_new_eigenvalues(&lattice, phi, 1..=a.eigen_count, available - a.eigen_count)?;
        let mut t = Table::new(["k", "tau_k", "truncation_estimate"]);
        for r in roots {
            t.push([r.k.to_string(), fmt_f64(r.tau), fmt_f64(r.truncation_estimate)]);
        }
        eigen = t;
        extra.push(("eigen", &eigen));
    }
    emit(&a.output, config, &moments, &extra)?;
    if worst > 1e-10 {
        return Err(Failure::Accuracy(format!("tuple sum and grid moments differ by {worst:e}")));
    }
    Ok(())
}

fn na(a: &NaCheckArgs, config: &ExperimentConfig) -> Outcome {
    let report = na_check(a.variant, a.trials, a.max_levels, a.seed)?;
    emit_json(&a.out, config, &report)?;
    if !report.mismatches.is_empty() {
        return Err(Failure::Accuracy(format!("{} mismatches", report.mismatches.len())));
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, config: &ExperimentConfig) -> Outcome {
    let table = build_table(a.pmax)?;
    let cfg = SimulationConfig {
        multiplicity: a.m,
        tau: a.tau,
        p_max: a.pmax,
        replicas: a.replicas,
        window_frac: a.window_frac,
        seed: a.seed,
    };
    let rows = run_simulation(&cfg, &table)?;
    let p = a.pmax;
    let mut header = vec!["replica".to_string()];
    header.extend((1..=p).map(|q| format!("S{q}")));
    header.extend((1..=p).map(|q| format!("M{}", 2 * q)));
    header.extend((2..=p).map(|q| format!("norm{}", 2 * q)));
    header.extend((1..=p).map(|q| format!("tail_bias_{q}")));
    let mut t = Table::new(header);
    for r in rows {
        let mut row = vec![r.replica.to_string()];
        row.extend(r.sums.values.iter().map(|v| fmt_f64(*v)));
        row.extend(r.moments.iter().map(|v| fmt_f64(*v)));
        row.extend(r.normalized.iter().map(|v| fmt_f64(*v)));
        row.extend(r.sums.tail_bias.iter().map(|v| fmt_f64(*v)));
        t.push(row);
    }
    emit(&a.output, config, &t, &[])
}

fn weyl(a: &WeylArgs, config: &ExperimentConfig) -> Outcome {
    let rows = weyl_table(&a.m, &a.lambdas, a.replicas, a.seed)?;
    let mut t = Table::new([
        "lambda",
        "mean",
        "variance",
        "expected_mean",
        "expected_variance",
        "mean_z",
        "variance_z",
        "mean_ratio",
        "max_rel_dev",
        "ks_normal",
    ]);
    for r in rows {
        t.push(
            [
                r.lambda,
                r.mean,
                r.variance,
                r.expected_mean,
                r.expected_variance,
                r.mean_z,
                r.variance_z,
                r.mean_ratio,
                r.max_rel_dev,
                r.ks_normal,
            ]
            .map(fmt_f64),
        );
    }
    emit(&a.output, config, &t, &[])
}

fn sampling(p: &ProxyArgs) -> LimitSampling {
    LimitSampling {
        proxy_tau: p.proxy_tau,
        window_frac: p.window_frac,
        seed: p.seed,
    }
}

fn limit_sample(a: &LimitSampleArgs, config: &ExperimentConfig) -> Outcome {
    let table = build_table(a.p.max(2))?;
    let samples = sample_r(&table, a.l, a.p, a.n, &sampling(&a.proxy))?;
    let mut header = vec!["sample".to_string()];
    header.extend((2..=a.p).map(|q| format!("R{q}")));
    let mut t = Table::new(header);
    for (i, s) in samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.iter().map(|v| fmt_f64(*v)));
        t.push(row);
    }
    emit(&a.output, config, &t, &[])
}

fn read_points(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == dim => out.push(v),
            Err(_) if i == 0 => continue,
            _ => {
                return Err(Failure::Validation(format!(
                    "{}: row {} is not {dim} numbers",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn limit_psi(a: &PsiArgs, config: &ExperimentConfig) -> Outcome {
    let points = read_points(&a.points, a.p)?;
    let mut header: Vec<String> = (1..=a.p).map(|q| format!("x{q}")).collect();
    header.extend(["re", "im", "abs", "error"].map(String::from));
    let mut t = Table::new(header);
    for x in points {
        let v = psi(&x, a.tol)?;
        let mut row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        row.extend([v.value.re, v.value.im, v.value.norm(), v.error].map(fmt_f64));
        t.push(row);
    }
    emit(&a.output, config, &t, &[])
}

fn limit_density(a: &DensityArgs, config: &ExperimentConfig) -> Outcome {
    let t_max = a.t.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let inv = DensityInverter::new(a.p, t_max.max(1e-6), a.tol)?;
    let mut t = Table::new(["t", "density", "cdf"]);
    for &x in &a.t {
        t.push([fmt_f64(x), fmt_f64(inv.density(x)?), fmt_f64(inv.cdf(x)?)]);
    }
    emit(&a.output, config, &t, &[])
}

fn limit_dl(a: &DlArgs, config: &ExperimentConfig) -> Outcome {
    if a.p < 2 {
        return Err(Failure::Validation("D_l needs p ≥ 2".into()));
    }
    let table = build_table(a.p)?;
    let points = read_points(&a.points, a.p - 1)?;
    let kde = KernelDensity::new(sample_quotients(a.p, a.n, &sampling(&a.proxy))?)?;
    let dens = density_dl(&table, a.l, &kde, &points)?;
    let mut header: Vec<String> = (2..=a.p).map(|q| format!("x{q}")).collect();
    header.push("density".into());
    let mut t = Table::new(header);
    for (x, d) in points.iter().zip(dens) {
        let mut row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        row.push(fmt_f64(d));
        t.push(row);
    }
    emit(&a.output, config, &t, &[])
}

#[derive(Serialize)]
struct Report {
    passed: usize,
    failed: usize,
    results: Vec<acceptance::CriterionResult>,
}

fn report(a: &ReportArgs, config: &ExperimentConfig) -> Outcome {
    let known = acceptance::criterion_ids();
    if let Some(bad) = a.only.iter().find(|o| !known.contains(&o.as_str())) {
        return Err(Failure::Validation(format!("unknown criterion {bad:?}")));
    }
    let results = acceptance::run(&a.only);
    for r in &results {
        eprintln!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let rep = Report {
        passed: results.len() - failed,
        failed,
        results,
    };
    emit_json(&a.out, config, &rep)?;
    if failed > 0 {
        return Err(Failure::Accuracy(format!("{failed} acceptance checks failed")));
    }
    Ok(())
}
