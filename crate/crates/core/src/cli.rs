//! Command-line front end: `simulate`, `fit`, `montecarlo` and `benchmark`.
//!
//! Settings resolve as command-line flag, then `--config` file key, then
//! default. Every output file starts with `# key = value` lines holding the
//! resolved settings. Exit codes: 0 success, 2 configuration, 3 data, 4 numerical.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::{bootstrap, fit_model, fitted_values, BootstrapResult, EstimatorConfig, TwoStepFit, WeightModel};
use crate::gridcsv::{parse_key_values, read_grid_csv_path, truth_comments, write_grid_csv};
use crate::lattice::{Lattice, NeighborhoodTemplate};
use crate::metrics::{rmse, support_stats, ZERO_TOL};
use crate::mlbench::{ml_fit, ml_fitted_values, timing_comparison, MlFit, MlOptions, TimingConfig};
use crate::montecarlo::{run_cell, McCell, McConfig, RMode};
use crate::resample::{replication_counts, SamplingMode};
use crate::simulate::{base_weights, simulate_dataset, SarDataset, WeightScheme};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Data { .. } | Error::Io(_) => EXIT_DATA,
        Error::Numerical { .. } | Error::Convergence { .. } | Error::DegenerateInput(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

#[derive(Parser, Debug)]
#[command(name = "lattice-sar", version, about = "Sparse spatial weight estimation for lattice SAR data")]
struct Cli {
    /// Worker threads for parallel iterations.
    #[arg(long, global = true, env = "LATTICE_SAR_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a SAR dataset on a square lattice.
    Simulate(SimulateArgs),
    /// Estimate a model on a grid CSV file.
    Fit(FitArgs),
    /// Run a Monte Carlo recovery study.
    Montecarlo(MonteCarloArgs),
    /// Time the two-step estimator against maximum likelihood.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// queen, rook or ese.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    /// Number of sites (a perfect square).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Grid CSV file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// estimate, queen, rook or ese.
    #[arg(long)]
    weights: Option<String>,
    /// lasso or ml.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    /// First-step replications: min, med, max or a number.
    #[arg(long)]
    r: Option<String>,
    /// Second-step replications, or `auto`.
    #[arg(long)]
    r2: Option<String>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Fit without an intercept.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Args, Debug)]
struct MonteCarloArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated schemes (queen, rook, ese).
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    /// Comma-separated replication modes: min, med, max or numbers.
    #[arg(long, value_delimiter = ',')]
    r: Vec<String>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Lattice side length.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated lattice sizes (perfect squares).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
}

/// Flag, then config-file value, then default; every choice is recorded.
struct Resolver {
    file: HashMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::invalid(format!("cannot read config {}: {e}", p.display())))?;
                parse_key_values(text.lines()).map_err(|e| Error::invalid(format!("config {}: {e}", p.display())))?
            }
            None => HashMap::new(),
        };
        Ok(Resolver { file, resolved: BTreeMap::new() })
    }

    fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::invalid(format!("config key `{key}` has invalid value {s:?}")))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn list<T: FromStr + Display + Clone>(&mut self, key: &str, flag: Vec<T>, default: Vec<T>) -> Result<Vec<T>> {
        let v = if !flag.is_empty() {
            flag
        } else if let Some(s) = self.file.get(key) {
            s.split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| Error::invalid(format!("config key `{key}` has invalid entry {p:?}")))
                })
                .collect::<Result<Vec<T>>>()?
        } else {
            default
        };
        if v.is_empty() {
            return Err(Error::invalid(format!("`{key}` needs at least one value")));
        }
        self.resolved
            .insert(key.to_string(), v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        Ok(v)
    }

    fn flag(&mut self, key: &str, set: bool) -> Result<bool> {
        let v = set
            || match self.file.get(key) {
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::invalid(format!("config key `{key}` must be true or false")))?,
                None => false,
            };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Output location; not part of the recorded settings.
    fn out_dir(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn header(&self) -> Vec<String> {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }
}

fn write_file(dir: &Path, name: &str, header: &[String], body: &str) -> Result<()> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    for h in header {
        writeln!(f, "# {h}")?;
    }
    f.write_all(body.as_bytes())?;
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn scheme_pattern(name: &str) -> Result<WeightScheme> {
    // Only the pattern matters; the strength is estimated.
    WeightScheme::from_name(name, 0.5)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut res = Resolver::new(args.common.config.as_deref())?;
    let scheme_name = res.value("scheme", args.scheme, "queen".to_string())?;
    let c = res.value("c", args.c, 0.5)?;
    let n = res.value("n", args.n, 625)?;
    let k = res.value("k", args.k, 1)?;
    let sigma = res.value("sigma", args.sigma, 1.0)?;
    let seed = res.value("seed", args.common.seed, 0)?;
    let dir = res.out_dir(args.common.out);

    let scheme = WeightScheme::from_name(&scheme_name, c)?;
    let lattice = Lattice::square(n)?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let ds = simulate_dataset(&lattice, &scheme, &vec![1.0; k], sigma, &mut ChaCha8Rng::seed_from_u64(seed))?;

    prepare_out(&dir)?;
    let header = res.header();
    let path = dir.join("data.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_grid_csv(file, &ds, &header)?;

    let truth = ds.truth.as_ref().expect("simulated data carries its truth");
    let mut body: Vec<String> = truth_comments(truth).into_iter().map(|l| l.trim_start_matches("truth ").to_string()).collect();
    for m in [8, 24, 48] {
        if let Ok(w) = scheme.template_vector(&NeighborhoodTemplate::new(m)?) {
            body.push(format!("w_m{m} = {}", fmt_list(&w)));
        }
    }
    write_file(&dir, "truth.txt", &header, &(body.join("\n") + "\n"))?;
    eprintln!("wrote {} sites to {}", lattice.n(), path.display());
    Ok(())
}

fn weight_map_csv(template: &NeighborhoodTemplate, w: &[f64], se: Option<&[f64]>) -> String {
    let ring = template.ring() as isize;
    let mut s = String::from("drow");
    for dc in -ring..=ring {
        s.push_str(&format!(",{dc}"));
    }
    s.push('\n');
    let cell = |v: &[f64], dr: isize, dc: isize| -> String {
        template
            .position(crate::lattice::Offset::new(dr, dc))
            .map_or_else(|| "NA".to_string(), |p| v[p].to_string())
    };
    for dr in -ring..=ring {
        s.push_str(&dr.to_string());
        for dc in -ring..=ring {
            s.push(',');
            s.push_str(&cell(w, dr, dc));
        }
        s.push('\n');
    }
    if let Some(se) = se {
        s.push_str("\nse_drow");
        for dc in -ring..=ring {
            s.push_str(&format!(",{dc}"));
        }
        s.push('\n');
        for dr in -ring..=ring {
            s.push_str(&dr.to_string());
            for dc in -ring..=ring {
                s.push(',');
                s.push_str(&cell(se, dr, dc));
            }
            s.push('\n');
        }
    }
    s
}

fn fitted_csv(ds: &SarDataset, y_hat: &[f64], valid: &[bool]) -> String {
    let mut s = String::from("row,col,y,y_hat,valid\n");
    for i in 0..ds.lattice.n() {
        let (r, c) = ds.lattice.coords(i);
        s.push_str(&format!("{r},{c},{},{},{}\n", ds.y[i], y_hat[i], u8::from(valid[i])));
    }
    s
}

fn lasso_summary(fit: &TwoStepFit, boot: Option<&BootstrapResult>, rmse_value: f64, valid: usize) -> Vec<String> {
    let mut lines = vec![
        format!("c_hat = {}", fit.c_hat),
        format!("beta_hat = {}", fmt_list(&fit.beta_hat)),
        format!("intercept = {}", fit.intercept),
        format!("w_hat = {}", fmt_list(&fit.w_hat)),
        format!("lambda1 = {}", fit.lambda1),
        format!("lambda2 = {}", fit.lambda2),
        format!("r1 = {}", fit.first.r),
        format!("r2 = {}", fit.second.r),
        format!("selected_weights = {}", fit.w_hat.iter().filter(|w| **w > ZERO_TOL).count()),
        format!("rmse = {rmse_value}"),
        format!("rmse_sites = {valid}"),
    ];
    if let Some(b) = boot {
        lines.extend([
            format!("bootstrap_iterations = {}", b.iterations),
            format!("bootstrap_failures = {}", b.failures),
            format!("se_c = {}", b.se_c),
            format!("se_beta = {}", fmt_list(&b.se_beta)),
            format!("se_intercept = {}", b.se_intercept),
            format!("se_w = {}", fmt_list(&b.se_w)),
        ]);
    } else {
        lines.extend([
            format!("cv_error1 = {}", fit.first.cv_error),
            format!("cv_error2 = {}", fit.second.cv_error),
            format!("sweeps1 = {}", fit.first.sweeps),
            format!("sweeps2 = {}", fit.second.sweeps),
            format!("prior1 = {:?}", fit.first.prior),
            format!("prior2 = {:?}", fit.second.prior),
        ]);
    }
    lines
}

fn ml_summary(fit: &MlFit, rmse_value: f64) -> Vec<String> {
    vec![
        format!("c_hat = {}", fit.c_hat),
        format!("beta_hat = {}", fmt_list(&fit.beta_hat)),
        format!("intercept = {}", fit.intercept),
        format!("sigma2_hat = {}", fit.sigma2_hat),
        format!("loglik = {}", fit.loglik),
        format!("se_c = {}", fmt_opt(fit.se_c)),
        format!("se_beta = {}", fit.se_beta.as_deref().map_or_else(|| "NA".into(), fmt_list)),
        format!("se_intercept = {}", fmt_opt(fit.se_intercept)),
        format!("c_interval = {};{}", fit.interval.0, fit.interval.1),
        format!("rmse = {rmse_value}"),
    ]
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut res = Resolver::new(args.common.config.as_deref())?;
    let input = res.value("input", args.input.map(|p| p.display().to_string()), String::new())?;
    if input.is_empty() {
        return Err(Error::invalid("--input is required"));
    }
    let weights = res.value("weights", args.weights, "estimate".to_string())?;
    let method = res.value("method", args.method, "lasso".to_string())?;
    let m = res.value("m", args.m, 24)?;
    let r_text = res.value("r", args.r, "max".to_string())?;
    let r2_text = res.value("r2", args.r2, "auto".to_string())?;
    let boot_b = res.value("bootstrap", args.bootstrap, 0)?;
    let gamma = res.value("gamma", args.gamma, 1.0)?;
    let folds = res.value("folds", args.folds, 10)?;
    let no_intercept = res.flag("no_intercept", args.no_intercept)?;
    let seed = res.value("seed", args.common.seed, 0)?;
    let dir = res.out_dir(args.common.out);

    if !matches!(method.as_str(), "lasso" | "ml") {
        return Err(Error::invalid(format!("method must be lasso or ml, got {method:?}")));
    }
    let model = match weights.as_str() {
        "estimate" => WeightModel::Estimated,
        name => WeightModel::Fixed(scheme_pattern(name)?),
    };
    let template = NeighborhoodTemplate::new(m)?;
    let grid = read_grid_csv_path(Path::new(&input))?;
    let ds = grid.dataset;
    prepare_out(&dir)?;
    let header = res.header();

    let (summary, map, y_hat, valid) = if method == "ml" {
        let WeightModel::Fixed(scheme) = &model else {
            return Err(Error::invalid("the ml method needs fixed weights (queen, rook or ese)"));
        };
        if boot_b > 0 {
            return Err(Error::invalid("bootstrap is only available for the lasso method"));
        }
        let base = base_weights(&ds.lattice, scheme)?;
        let fit = ml_fit(&ds, &base, &MlOptions { intercept: !no_intercept, ..MlOptions::default() })?;
        let y_hat = ml_fitted_values(&fit, &ds, &base)?;
        let r = rmse(&y_hat, ds.y.as_slice())?;
        let w = scheme.with_c(fit.c_hat.max(0.0)).template_vector(&template)?;
        let map = weight_map_csv(&template, &w, None);
        (ml_summary(&fit, r), map, y_hat, vec![true; ds.lattice.n()])
    } else {
        let n = ds.lattice.n();
        let side_ok = ds.lattice.nrows() == ds.lattice.ncols();
        let r1 = match RMode::parse(&r_text)? {
            RMode::Explicit(r) => r,
            mode if side_ok => mode.resolve(n, m)?,
            _ => {
                return Err(Error::invalid("--r min/med/max need a square grid; pass an explicit number"));
            }
        };
        let r2 = match r2_text.as_str() {
            "auto" => None,
            t => Some(t.parse().map_err(|_| Error::invalid(format!("r2 must be auto or an integer, got {t:?}")))?),
        };
        let config = EstimatorConfig {
            m,
            r1,
            r2,
            gamma,
            folds,
            seed,
            intercept: !no_intercept,
            sampling: SamplingMode::WithoutReplacement,
            ..EstimatorConfig::default()
        };
        let (fit, boot) = if boot_b > 0 {
            let b = bootstrap(&ds, &model, &config, boot_b)?;
            for (i, e) in &b.errors {
                eprintln!("bootstrap iteration {i} failed: {e}");
            }
            (b.mean_fit(), Some(b))
        } else {
            (fit_model(&ds, &model, &config)?, None)
        };
        let fv = fitted_values(&fit, &ds)?;
        let r = fv.rmse(&ds.y)?;
        let valid_count = fv.valid.iter().filter(|v| **v).count();
        let map = weight_map_csv(&template, &fit.w_hat, boot.as_ref().map(|b| b.se_w.as_slice()));
        (lasso_summary(&fit, boot.as_ref(), r, valid_count), map, fv.y_hat, fv.valid)
    };

    let mut summary = summary;
    if let Some(truth) = &ds.truth {
        let w_true = truth.scheme.template_vector(&template)?;
        let w_est: Vec<f64> = summary
            .iter()
            .find_map(|l| l.strip_prefix("w_hat = "))
            .map(|s| s.split(';').map(|v| v.parse().unwrap_or(0.0)).collect())
            .unwrap_or_else(|| {
                let c: f64 = summary
                    .iter()
                    .find_map(|l| l.strip_prefix("c_hat = "))
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(0.0);
                match &model {
                    WeightModel::Fixed(s) => s.with_c(c.max(0.0)).template_vector(&template).unwrap_or_default(),
                    WeightModel::Estimated => Vec::new(),
                }
            });
        let eval = support_stats(&w_est, &w_true, ZERO_TOL)?;
        summary.extend([
            format!("eval_mae_w = {}", eval.mae),
            format!("eval_specificity = {}", fmt_opt(eval.specificity)),
            format!("eval_sensitivity = {}", fmt_opt(eval.sensitivity)),
        ]);
    }
    write_file(&dir, "fit_summary.txt", &header, &(summary.join("\n") + "\n"))?;
    write_file(&dir, "weight_map.csv", &header, &map)?;
    write_file(&dir, "fitted.csv", &header, &fitted_csv(&ds, &y_hat, &valid))?;
    for l in &summary {
        println!("{l}");
    }
    Ok(())
}

fn cmd_montecarlo(args: MonteCarloArgs) -> Result<()> {
    let mut res = Resolver::new(args.common.config.as_deref())?;
    let schemes = res.list("scheme", args.scheme, vec!["queen".to_string(), "ese".to_string()])?;
    let cs = res.list("c", args.c, vec![0.5, 0.7, 0.9])?;
    let ms = res.list("m", args.m, vec![24, 48])?;
    let r_texts = res.list("r", args.r, vec!["min".to_string(), "med".to_string(), "max".to_string()])?;
    let iterations = res.value("iterations", args.iterations, 100)?;
    let side = res.value("side", args.side, 25)?;
    let gamma = res.value("gamma", args.gamma, 1.0)?;
    let folds = res.value("folds", args.folds, 10)?;
    let seed = res.value("seed", args.common.seed, 0)?;
    let dir = res.out_dir(args.common.out);

    let r_modes = r_texts.iter().map(|s| RMode::parse(s)).collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for name in &schemes {
        for &c in &cs {
            let scheme = WeightScheme::from_name(name, c)?;
            for &m in &ms {
                let template = NeighborhoodTemplate::new(m)?;
                scheme.template_vector(&template)?;
                for &r_mode in &r_modes {
                    let r = r_mode.resolve(side * side, m)?;
                    EstimatorConfig { m, r1: r, folds, gamma, ..EstimatorConfig::default() }.validate()?;
                    cells.push(McCell { scheme: scheme.clone(), m, r_mode });
                }
            }
        }
    }
    replication_counts(side * side, ms[0])?;
    let config = McConfig {
        side,
        iterations,
        seed,
        estimator: EstimatorConfig { gamma, folds, ..EstimatorConfig::default() },
        ..McConfig::default()
    };
    prepare_out(&dir)?;

    let mut table = String::from("scheme,c,m,r_mode,r,iterations,failures,mae_beta,mae_w,pi0,pi1\n");
    let mut recovery = String::from("scheme,c,m,r_mode,drow,dcol,count,total,frequency\n");
    for cell in &cells {
        let s = run_cell(cell, &config)?;
        for (t, e) in &s.errors {
            eprintln!("{} c={} m={} r={}: iteration {t} failed: {e}", cell.scheme.name(), cell.scheme.c(), cell.m, cell.r_mode);
        }
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            cell.scheme.name(),
            cell.scheme.c(),
            cell.m,
            cell.r_mode,
            s.r,
            s.iterations,
            s.failures,
            s.mae_beta,
            s.mae_w,
            fmt_opt(s.pi0),
            fmt_opt(s.pi1)
        ));
        if let Some(f) = &s.frequency {
            for (o, (count, freq)) in f.template.offsets().iter().zip(f.counts.iter().zip(f.frequencies())) {
                recovery.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    cell.scheme.name(),
                    cell.scheme.c(),
                    cell.m,
                    cell.r_mode,
                    o.drow,
                    o.dcol,
                    count,
                    f.total,
                    freq
                ));
            }
        }
    }
    let header = res.header();
    write_file(&dir, "table1.csv", &header, &table)?;
    write_file(&dir, "recovery.csv", &header, &recovery)?;
    print!("{table}");
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let mut res = Resolver::new(args.common.config.as_deref())?;
    let ns = res.list("n", args.n, vec![400, 900, 1600, 2500])?;
    let ms = res.list("m", args.m, vec![24, 48])?;
    let reps = res.value("reps", args.reps, 20)?;
    let seed = res.value("seed", args.common.seed, 0)?;
    let dir = res.out_dir(args.common.out);
    for &n in &ns {
        for &m in &ms {
            replication_counts(n, m)?;
        }
    }
    let rows = timing_comparison(
        &ns,
        &TimingConfig {
            ms,
            repetitions: reps,
            seed,
            ..TimingConfig::default()
        },
    )?;
    let mut body = String::from("n,method,m,mean_s,sd_s\n");
    for r in rows {
        let m = r.m.map_or_else(|| "NA".to_string(), |m| m.to_string());
        body.push_str(&format!("{},{},{},{},{}\n", r.n, r.method, m, r.mean_s, r.sd_s));
    }
    prepare_out(&dir)?;
    write_file(&dir, "timing.csv", &res.header(), &body)?;
    print!("{body}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    })
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
