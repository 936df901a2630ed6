//! `pheights`: enumerate extension sets, sample surfaces, run the
//! concentration experiment and the verification suites.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible
//! boundary data, 3 verification failure.

mod settings;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perturbed_heights::analysis::{
    azuma_tail_check, boundary_walks, concentration_experiment, corollary19_check, dominance_certificate, identity_suite, lemma18_sweep,
    martingale_audit, ordered_boundary_pairs, BoundaryMode,
};
use perturbed_heights::formats::{write_grid, Grid, RunConfig};
use perturbed_heights::gibbs::{potential_draw, quenched_measure_on, support_and_window};
use perturbed_heights::heights::{enumerate_pinned, kirszbraun_witness, pinned_height_window, DEFAULT_ENUMERATION_CAP};
use perturbed_heights::sampler::{chain_stream, default_burn_in, glauber_step, ChainState};
use perturbed_heights::{Error, HeightFunction, Pinning, PotentialModel, Region};

use settings::Settings;

#[derive(Parser)]
#[command(name = "pheights", version, about = "Height functions on Z^m with a random potential on the edges of Z")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Each overrides the key of the same
/// name in a configuration file.
#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Region file: first line `m`, then one vertex per line.
    #[arg(long)]
    region_file: Option<PathBuf>,
    /// Height file with the pinned boundary data.
    #[arg(long)]
    boundary_file: Option<PathBuf>,
    /// Generated boundary data when no boundary file is given.
    #[arg(long, value_parser = ["parity", "extremal"])]
    boundary: Option<String>,
    /// Potential model: `zero`, `uniform:b=<float>` or `twopoint:a=<float>`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    /// Comma-separated list of thresholds.
    #[arg(long)]
    c: Option<String>,
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["exact", "mc"])]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Count (and optionally list) the extensions of boundary data.
    Enumerate {
        #[command(flatten)]
        common: Common,
        /// Also print every extension, one line of heights in region order.
        #[arg(long)]
        list: bool,
    },
    /// Run a chain on the n x n box and write the final heights as a grid.
    Surface {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Concentration experiment: CSV report plus a PASS/FAIL line per (n, c).
    Concentration {
        /// `key = value` configuration file.
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Verification suites; exit code 3 with a witness on any failure.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        config: Option<PathBuf>,
        /// Dominance suite: the upper boundary of one explicit pair, whose
        /// lower boundary is `--boundary-file`.
        #[arg(long)]
        upper_file: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Identities,
    Dominance,
    Martingale,
}

/// A failed run and its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Infeasible(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotExtendable { .. } | Error::EmptySupport => Failure::Infeasible(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type Outcome = Result<String, Failure>;

impl Common {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), Failure> {
        let path = |p: &PathBuf| p.to_string_lossy().into_owned();
        let pairs: [(&str, Option<String>); 11] = [
            ("region_file", self.region_file.as_ref().map(path)),
            ("boundary_file", self.boundary_file.as_ref().map(path)),
            ("boundary", self.boundary.clone()),
            ("model", self.model.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("samples", self.samples.map(|v| v.to_string())),
            ("c", self.c.clone()),
            ("A", self.a.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(path)),
            ("mode", self.mode.clone()),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v).map_err(|e| Failure::Usage(format!("--{key}: {e}")))?;
            }
        }
        Ok(())
    }
}

fn load_config(file: Option<&PathBuf>, common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::new(),
    };
    common.apply(&mut cfg)?;
    Ok(cfg)
}

/// Writes `text` to the configured output path, or returns it for stdout.
fn emit(settings: &Settings, text: String, summary: impl FnOnce(&str) -> String) -> Outcome {
    match settings.out() {
        Some(path) => {
            fs::write(path, &text).map_err(|e| Failure::Usage(format!("{path}: {e}")))?;
            Ok(summary(path))
        }
        None => Ok(text),
    }
}

fn infeasible_message(region: &Region, pinning: &Pinning) -> Option<String> {
    kirszbraun_witness(region, pinning).map(|w| format!("infeasible: x={} y={} |h(x)-h(y)|={} d_R(x,y)={}\n", w.x, w.y, w.diff, w.dist))
}

fn dense_line(values: &[i64]) -> String {
    values.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
}

fn cmd_enumerate(settings: &Settings, list: bool) -> Outcome {
    let region = settings.region()?.ok_or_else(|| Failure::Usage("enumerate needs --region-file".into()))?;
    let data = settings.boundary_data(&region, BoundaryMode::Parity)?;
    let pinning = Pinning::new(&region, &data)?;
    if let Some(message) = infeasible_message(&region, &pinning) {
        return Err(Failure::Infeasible(format!("0\n{message}")));
    }
    let set = enumerate_pinned(&region, &pinning, DEFAULT_ENUMERATION_CAP)?;
    let mut out = format!("{}\n", set.len());
    if list {
        for g in set.members() {
            out.push_str(&dense_line(g));
            out.push('\n');
        }
    }
    Ok(out)
}

fn cmd_surface(settings: &Settings, n: usize) -> Outcome {
    if n < 2 {
        return Err(Failure::Usage(format!("--n must be at least 2, got {n}")));
    }
    let region = Region::square(n)?;
    let data = settings.boundary_data(&region, BoundaryMode::Extremal)?;
    let pinning = Pinning::new(&region, &data)?;
    if let Some(message) = infeasible_message(&region, &pinning) {
        return Err(Failure::Infeasible(message));
    }
    let seed = settings.seed()?;
    let model = PotentialModel::new(settings.model("zero")?, seed)?;
    let window = pinned_height_window(&region, &pinning)?;
    let (lo, hi) = window.edge_range();
    let p = potential_draw(&model, 0, lo, hi)?;
    let steps = settings.steps()?.unwrap_or_else(|| default_burn_in(&region, &window));
    let mut state = ChainState::new(&region, &pinning, &p)?;
    let mut rng = chain_stream(seed);
    for _ in 0..steps {
        glauber_step(&mut state, &mut rng);
    }
    let grid = Grid::from_dense(&region, state.current())?;
    emit(settings, write_grid(&grid), |path| format!("wrote {n}x{n} grid after {steps} steps to {path}\n"))
}

fn cmd_concentration(settings: &Settings) -> Outcome {
    let cfg = settings.concentration()?;
    let report = concentration_experiment(&cfg)?;
    let csv = report.to_csv();
    let mut out = match settings.out() {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| Failure::Usage(format!("{path}: {e}")))?;
            String::new()
        }
        None => csv,
    };
    for s in &report.sizes {
        let b = &s.burn_in;
        let _ = writeln!(
            out,
            "# n={} |R|={} A={} diam_l1={} max_dist_to_boundary={} mean_stderr_max={} max_dev_q50={} max_dev_q90={} max_dev_max={} chains={} coalesced={} max_coalescence_sweeps={} max_residual_gap={}",
            s.n,
            s.region_size,
            s.a,
            s.l1_diameter,
            s.max_boundary_distance,
            s.mean_stderr_max,
            s.deviation_quantile(0.5),
            s.deviation_quantile(0.9),
            s.deviation_quantile(1.0),
            b.chains,
            b.coalesced,
            b.max_coalescence_sweeps,
            b.max_residual_gap
        );
    }
    for (n, row) in report.checked_rows() {
        let verdict = if row.passes() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{verdict} n={n} c={} tail_freq={} bound={} samples={}", row.c, row.tail_freq, row.bound, row.samples);
    }
    if report.all_pass() {
        Ok(out)
    } else {
        Err(Failure::Verification(out))
    }
}

fn verify_identities(settings: &Settings) -> Outcome {
    let count = settings.samples()?.unwrap_or(10) as usize;
    let cases = identity_suite(count, settings.seed()?)?;
    let worst = cases.iter().map(|c| c.worst_gap()).fold(0.0, f64::max);
    let mut out = format!("identities: {} instances, max relative gap {worst}\n", cases.len());
    let failures: Vec<_> = cases.iter().enumerate().filter(|(_, c)| c.worst_gap().is_nan() || c.worst_gap() > 1e-12).collect();
    if failures.is_empty() {
        return Ok(out);
    }
    for (k, c) in failures {
        let data: Vec<String> = c.pinned.iter().map(|(v, z)| format!("{v}={z}")).collect();
        let _ = writeln!(
            out,
            "FAIL instance={k} region_size={} model={} pinned=[{}] complement_gap={} shift_gap={}",
            c.region.len(),
            c.model,
            data.join(" "),
            c.complement_gap,
            c.shift_gap
        );
    }
    Err(Failure::Verification(out))
}

fn verify_explicit_pair(settings: &Settings, region: &Region, low: &HeightFunction, high: &HeightFunction) -> Outcome {
    let model = PotentialModel::new(settings.model("twopoint:a=1")?, settings.seed()?)?;
    let draws = settings.draws(50)?;
    let (mu_support, w_mu) = support_and_window(region, low)?;
    let (nu_support, w_nu) = support_and_window(region, high)?;
    let (lo, hi) = w_mu.union(&w_nu).edge_range();
    let mut out = String::new();
    let mut violations = 0;
    for d in 0..draws as u64 {
        let p = potential_draw(&model, d, lo, hi)?;
        let mu = quenched_measure_on(region, mu_support.clone(), &p)?;
        let nu = quenched_measure_on(region, nu_support.clone(), &p)?;
        let cert = dominance_certificate(&mu, &nu)?;
        if let Some(w) = cert.witness {
            violations += 1;
            let _ = writeln!(out, "VIOLATION draw={d} flow={} {w}", cert.flow);
        }
    }
    let _ = writeln!(out, "dominance: 1 pair, {draws} draws, {violations} violations");
    if violations == 0 {
        Ok(out)
    } else {
        Err(Failure::Verification(out))
    }
}

fn verify_dominance(settings: &Settings, upper_file: Option<&PathBuf>) -> Outcome {
    let region = match settings.region()? {
        Some(r) => r,
        None => Region::square(3)?,
    };
    if let Some(upper) = upper_file {
        let low = settings.boundary_file_data()?.ok_or_else(|| Failure::Usage("--upper-file needs --boundary-file".into()))?;
        let high = settings::read_heights(&upper.to_string_lossy())?;
        return verify_explicit_pair(settings, &region, &low, &high);
    }
    let seed = settings.seed()?;
    let model = PotentialModel::new(settings.model("twopoint:a=1")?, seed)?;
    let draws = settings.draws(50)?;
    let pairs = ordered_boundary_pairs(&region, settings.pairs(20)?, seed)?;
    let summary = lemma18_sweep(&region, &pairs, &model, draws)?;
    let mut out = format!(
        "dominance: {} pairs, {} draws, {} certificates, {} violations, max marginal error {}, oracle checks {} ({} mismatches)\n",
        summary.pairs,
        summary.draws,
        summary.certificates,
        summary.violations.len(),
        summary.max_marginal_error,
        summary.oracle_checks,
        summary.oracle_mismatches
    );
    let mut ok = summary.passed();
    for v in &summary.violations {
        let _ = writeln!(out, "VIOLATION pair={} draw={} {}", v.pair, v.draw, v.witness);
    }
    let mode = settings.annealing(&model.kind, 200)?;
    let mut worst = f64::NEG_INFINITY;
    for (k, (h, ht)) in pairs.iter().enumerate() {
        let v = region.vertices().iter().find(|v| h.get(v).is_none()).cloned();
        let Some(v) = v else { continue };
        let check = corollary19_check(&region, h, ht, &v, &model, mode)?;
        worst = worst.max(check.lhs.value - check.rhs.value);
        if !check.holds() {
            ok = false;
            let _ = writeln!(out, "FAIL corollary pair={k} v={v} lhs={} rhs={} slack={}", check.lhs.value, check.rhs.value, check.slack);
        }
    }
    let _ = writeln!(out, "expectation ordering: {} pairs, max lhs - rhs {worst} (allowed 2)", pairs.len());
    if ok {
        Ok(out)
    } else {
        Err(Failure::Verification(out))
    }
}

fn verify_martingale(settings: &Settings) -> Outcome {
    let region = match settings.region()? {
        Some(r) => r,
        None => Region::square(3)?,
    };
    let data = settings.boundary_data(&region, BoundaryMode::Parity)?;
    let seed = settings.seed()?;
    let model = PotentialModel::new(settings.model("twopoint:a=1")?, seed)?;
    let mode = settings.annealing(&model.kind, 200)?;
    let max_len = settings.steps()?.unwrap_or(4) as usize;
    let walks = boundary_walks(&region, max_len);
    let mut out = String::new();
    let mut ok = true;
    let mut worst = 0.0f64;
    for walk in &walks {
        let audit = martingale_audit(&region, &data, walk, &model, mode)?;
        worst = worst.max(audit.max_diff);
        if !audit.holds() {
            ok = false;
            let path: Vec<String> = walk.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "FAIL walk={} max_diff={} max_excess={}", path.join("->"), audit.max_diff, audit.max_excess);
        }
    }
    let _ = writeln!(out, "martingale: {} walks of at most {max_len} vertices, max |M_(k+1) - M_k| = {worst}", walks.len());
    let c_grid = settings.c_grid(&[0.5, 0.75, 1.0, 1.25, 1.5, 2.0])?;
    let samples = settings.samples()?.unwrap_or(10_000) as usize;
    let mut ends: Vec<_> = walks.iter().map(|w| w.last().expect("nonempty walk").clone()).collect();
    ends.sort();
    ends.dedup();
    for v in &ends {
        let report = azuma_tail_check(&region, &data, v, &model, mode, &c_grid, samples, seed)?;
        for row in report.rows.iter().filter(|r| r.checked()) {
            let verdict = if row.passes() { "PASS" } else { "FAIL" };
            ok &= row.passes();
            let _ = writeln!(
                out,
                "{verdict} azuma v={v} l={} c={} empirical={} exact={} bound={} samples={}",
                report.l, row.c, row.empirical, row.exact_tail, row.bound, row.samples
            );
        }
    }
    if ok {
        Ok(out)
    } else {
        Err(Failure::Verification(out))
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Enumerate { common, list } => cmd_enumerate(&Settings::new(load_config(None, &common)?), list),
        Command::Surface { n, common } => cmd_surface(&Settings::new(load_config(None, &common)?), n),
        Command::Concentration { config, common } => cmd_concentration(&Settings::new(load_config(config.as_ref(), &common)?)),
        Command::Verify { suite, config, upper_file, common } => {
            let settings = Settings::new(load_config(config.as_ref(), &common)?);
            match suite {
                Suite::Identities => verify_identities(&settings),
                Suite::Dominance => verify_dominance(&settings, upper_file.as_ref()),
                Suite::Martingale => verify_martingale(&settings),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(msg)) => {
            print!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(msg)) => {
            print!("{msg}");
            ExitCode::from(3)
        }
    }
}
