//! Command-line front end: argument parsing, dispatch, CSV/JSON emission.
//!
//! Every CSV starts with `#` comment lines carrying the library version, the
//! seed (when one is used) and a compact echo of the configuration, followed
//! by a header row and numeric rows formatted with 17 significant digits and
//! LF line endings. Errors are reported as one `error: <Tag>: <message>` line
//! on stderr; the exit code is 2 for validation errors, 3 for numerical
//! failures and 1 when `verify` finds a failing comparison.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::crit::{chi_parallel, chi_perp, tune_critical};
use crate::derivs::{deriv_asymptotics, evgp_constant, evgp_predict, run_derivs, PAIRS};
use crate::error::{Error, Result};
use crate::hierarchy::{kernel_trajectory, run_hierarchy};
use crate::homog::{
    correlation_asymptote, correlation_asymptote_derived, correlation_trajectory,
    kappa4_closed_form, kappa4_hat_exact, lognormal_limit_params, sample_exact, HomogParams,
};
use crate::mc::{
    estimate_cumulants, estimate_deriv_cumulants, estimate_evgp, verify_powered, MCEstimate,
    Verdict,
};
use crate::network::{NetworkConfig, NetworkSpec, SCHEMA_VERSION};
use crate::nonlin::parse_activation;

/// Library version written into every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit code for a `verify` run with at least one failing comparison.
pub const EXIT_VERIFY_FAILED: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "hierarchylab",
    version,
    about = "Finite-width cumulant hierarchy of random networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical (C_b, C_W) for an activation, printed as JSON.
    Tune {
        /// `relu`, `tanh` or an activation JSON object.
        #[arg(long)]
        activation: String,
    },
    /// Infinite-width kernel K^{(ℓ)} with the susceptibilities.
    Kernel(SpecOut),
    /// κ₄, κ₆, κ₈ recursions along the network.
    Hierarchy(SpecOut),
    /// Derivative kernels, their fourth cumulants and corrections.
    Derivs(SpecOut),
    /// Predicted first-layer gradient variance ratio.
    Evgp(SpecOut),
    /// Closed forms for 1-homogeneous activations.
    Relu {
        #[arg(long, value_enum)]
        mode: ReluMode,
        #[command(flatten)]
        io: SpecOut,
        /// Initial correlation (mode `corr`).
        #[arg(long, default_value_t = 0.5)]
        eps0: f64,
        /// Number of map steps (mode `corr`; defaults to the network depth).
        #[arg(long)]
        steps: Option<usize>,
        /// Draws (mode `sample`).
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo estimates as a JSON report.
    Mc {
        #[command(flatten)]
        io: SpecOut,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        what: McWhat,
    },
    /// Compares the last row of a prediction CSV with a Monte Carlo report.
    Verify {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        zmax: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
pub struct SpecOut {
    /// Network configuration JSON file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ReluMode {
    Corr,
    Kappa4,
    Limit,
    Sample,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum McWhat {
    Cumulants,
    Derivs,
    Evgp,
}

/// Failure of a command: a library error or a failing verification.
#[derive(Debug)]
pub enum Failure {
    Lib(Error),
    Io(String),
    VerifyFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    /// Process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Lib(e) if e.is_validation() => 2,
            Failure::Lib(_) => 3,
            Failure::Io(_) => 2,
            Failure::VerifyFailed => EXIT_VERIFY_FAILED,
        }
    }

    /// One-line machine-parsable reason.
    pub fn reason(&self) -> String {
        match self {
            Failure::Lib(e) => format!("error: {}: {e}", e.tag()),
            Failure::Io(m) => format!("error: Io: {m}"),
            Failure::VerifyFailed => "error: VerifyFailed: at least one comparison failed".into(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.reason());
            f.exit_code()
        }
    }
}

/// Dispatches one command.
pub fn run(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Tune { activation } => {
            let nl = parse_activation(activation)?;
            let t = tune_critical(&nl)?;
            emit(None, &(to_json(&t)? + "\n"))
        }
        Command::Kernel(io) => cmd_kernel(io),
        Command::Hierarchy(io) => cmd_hierarchy(io),
        Command::Derivs(io) => cmd_derivs(io),
        Command::Evgp(io) => cmd_evgp(io),
        Command::Relu {
            mode,
            io,
            eps0,
            steps,
            samples,
            seed,
        } => cmd_relu(*mode, io, *eps0, *steps, *samples, *seed),
        Command::Mc {
            io,
            samples,
            seed,
            what,
        } => cmd_mc(io, *samples, *seed, *what),
        Command::Verify {
            pred,
            est,
            zmax,
            out,
        } => cmd_verify(pred, est, *zmax, out.as_deref()),
    }
}

fn read_file(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// Reads and validates a network configuration.
fn load_spec(path: &Path) -> std::result::Result<(NetworkConfig, NetworkSpec), Failure> {
    let cfg = NetworkConfig::from_json(&read_file(path)?)?;
    let spec = cfg.build()?;
    Ok((cfg, spec))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::InvalidConfig(format!("serialization: {e}")))
}

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())
                .map_err(|e| Failure::Io(e.to_string()))
        }
    }
}

/// Formats a value with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV table preceded by comment lines.
pub struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(
        cfg_echo: Option<&NetworkConfig>,
        seed: Option<u64>,
        header: Vec<String>,
    ) -> Result<Self> {
        let mut comments = vec![format!("hierarchylab {VERSION}")];
        comments.push(match seed {
            Some(s) => format!("seed: {s}"),
            None => "seed: none (deterministic)".to_string(),
        });
        if let Some(c) = cfg_echo {
            comments.push(format!("config: {}", to_json(c)?));
        }
        Ok(Self {
            comments,
            header,
            rows: Vec::new(),
        })
    }

    fn comment(&mut self, line: String) {
        self.comments.push(line);
    }

    /// Appends a row; the layer index column `ell` is written as an integer.
    fn push(&mut self, row: Vec<f64>) {
        let cells = row
            .into_iter()
            .zip(&self.header)
            .map(|(v, name)| {
                if name == "ell" && v.fract() == 0.0 {
                    format!("{}", v as i64)
                } else {
                    fmt_num(v)
                }
            })
            .collect();
        self.rows.push(cells);
    }

    /// Renders the table with LF line endings.
    pub fn render(&self) -> std::result::Result<String, Failure> {
        let mut text = String::new();
        for c in &self.comments {
            text.push_str("# ");
            text.push_str(c);
            text.push('\n');
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| Failure::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
        text.push_str(&String::from_utf8_lossy(&bytes));
        Ok(text)
    }
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn cmd_kernel(io: &SpecOut) -> CmdResult {
    let (cfg, spec) = load_spec(&io.spec)?;
    let ks = kernel_trajectory(spec.k1(), spec.depth(), spec.c_b, spec.c_w, &spec.nl)?;
    let mut t = Table::new(
        Some(&cfg),
        None,
        strings(&["ell", "K", "chi_parallel", "chi_perp"]),
    )?;
    for (i, &k) in ks.iter().enumerate() {
        let (cp, cq) = if k > 0.0 {
            (
                chi_parallel(&spec.nl, spec.c_w, k)?,
                chi_perp(&spec.nl, spec.c_w, k)?,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        t.push(vec![(i + 1) as f64, k, cp, cq]);
    }
    emit(io.out.as_deref(), &t.render()?)
}

fn cmd_hierarchy(io: &SpecOut) -> CmdResult {
    let (cfg, spec) = load_spec(&io.spec)?;
    let traj = run_hierarchy(&spec)?;
    let mut t = Table::new(
        Some(&cfg),
        None,
        strings(&["ell", "K", "k4", "k6", "k8", "k4_hat", "k6_hat", "k8_hat"]),
    )?;
    if traj.k8_caveat {
        t.comment("caveat: sum of 1/n exceeds the validity range of the k8 recursion".into());
    }
    for s in &traj.states {
        t.push(vec![
            s.ell as f64,
            s.k,
            s.k4,
            s.k6,
            s.k8,
            s.k4_hat(),
            s.k6_hat(),
            s.k8_hat(),
        ]);
    }
    emit(io.out.as_deref(), &t.render()?)
}

const PAIR_NAMES: [&str; 6] = ["00", "10", "20", "11", "12", "22"];

fn cmd_derivs(io: &SpecOut) -> CmdResult {
    let (cfg, spec) = load_spec(&io.spec)?;
    let states = run_derivs(&spec)?;
    let tuning = tune_critical(&spec.nl).ok();
    let with_asym = tuning
        .as_ref()
        .map(|t| {
            t.class == crate::crit::UniversalityClass::KStarZeroClass
                && (t.c_w - spec.c_w).abs() <= 1e-12 * t.c_w
                && (t.c_b - spec.c_b).abs() <= 1e-12
        })
        .unwrap_or(false)
        && spec.widths.windows(2).all(|w| w[0] == w[1]);
    let mut header = vec!["ell".to_string()];
    header.extend(PAIR_NAMES.iter().map(|p| format!("K{p}")));
    let fourth_names: Vec<&str> = states[0]
        .fourth
        .canonical()
        .iter()
        .map(|(n, _)| *n)
        .collect();
    header.extend(fourth_names.iter().map(|s| s.to_string()));
    header.extend(PAIR_NAMES.iter().map(|p| format!("S{p}")));
    header.extend(PAIR_NAMES.iter().map(|p| format!("k{p}")));
    let asym_names = [
        "asym_K00",
        "asym_K10",
        "asym_K11",
        "asym_k1100_hat",
        "asym_k1111_hat",
        "asym_k1122_hat",
        "asym_k1212_hat",
    ];
    if with_asym {
        header.extend(strings(&asym_names));
    }
    let mut t = Table::new(Some(&cfg), None, header)?;
    if !with_asym {
        t.comment(
            "asymptote columns omitted: network is not a constant-width critical K*=0 network"
                .into(),
        );
    }
    let width = spec.widths.first().copied().unwrap_or(1);
    for st in &states {
        let mut row = vec![st.kernel.ell as f64];
        row.extend(st.kernel.pairs());
        row.extend(st.fourth.canonical().iter().map(|(_, v)| *v));
        row.extend(st.s.pairs());
        row.extend(PAIRS.iter().map(|&(a, b)| st.kappa2(a, b)));
        if with_asym {
            // The asymptotics describe ℓ ≥ 1 hidden layers feeding layer ℓ+1.
            let ell = st.kernel.ell - 1;
            if ell == 0 {
                row.extend([f64::NAN; 7]);
            } else {
                let tuning = tuning.as_ref().expect("checked above");
                let a = deriv_asymptotics(ell, width, spec.n0, &spec.input_x, &spec.nl, tuning)?;
                row.extend([
                    a.k00,
                    a.k10,
                    a.k11,
                    a.k1100_hat,
                    a.k1111_hat,
                    a.k1122_hat,
                    a.k1212_hat,
                ]);
            }
        }
        t.push(row);
    }
    emit(io.out.as_deref(), &t.render()?)
}

fn cmd_evgp(io: &SpecOut) -> CmdResult {
    let (cfg, spec) = load_spec(&io.spec)?;
    let c = evgp_constant(&spec)?;
    let r = evgp_predict(&spec)?;
    let mut t = Table::new(Some(&cfg), None, strings(&["xi", "C", "ratio"]))?;
    t.push(vec![spec.xi(), c, r]);
    emit(io.out.as_deref(), &t.render()?)
}

fn cmd_relu(
    mode: ReluMode,
    io: &SpecOut,
    eps0: f64,
    steps: Option<usize>,
    samples: usize,
    seed: u64,
) -> CmdResult {
    let (cfg, spec) = load_spec(&io.spec)?;
    let p = HomogParams::from_nonlinearity(&spec.nl)?;
    let table = match mode {
        ReluMode::Corr => {
            let steps = steps.unwrap_or(spec.depth());
            let eps = correlation_trajectory(eps0, steps, &p)?;
            let mut t = Table::new(
                Some(&cfg),
                None,
                strings(&["ell", "eps", "asymptote_stated", "asymptote_derived"]),
            )?;
            t.comment(format!("eps0: {}", fmt_num(eps0)));
            for (l, e) in eps.iter().enumerate() {
                let (a, b) = if l == 0 {
                    (f64::NAN, f64::NAN)
                } else {
                    (
                        correlation_asymptote(l, &p),
                        correlation_asymptote_derived(l, &p),
                    )
                };
                t.push(vec![l as f64, *e, a, b]);
            }
            t
        }
        ReluMode::Kappa4 => {
            let mut t = Table::new(
                Some(&cfg),
                None,
                strings(&["ell", "K", "k4", "k4_hat", "k4_hat_exact"]),
            )?;
            let k = spec.k1();
            t.push(vec![1.0, k, 0.0, 0.0, 0.0]);
            for l in 1..=spec.depth() {
                let w = &spec.widths[..l];
                let k4 = kappa4_closed_form(spec.norm_sq_over_n0(), w, &p)?;
                t.push(vec![
                    (l + 1) as f64,
                    k,
                    k4,
                    k4 / (k * k),
                    kappa4_hat_exact(w, &p),
                ]);
            }
            t
        }
        ReluMode::Limit => {
            let (mu, s2) = lognormal_limit_params(spec.xi(), &p)?;
            let mut t = Table::new(
                Some(&cfg),
                None,
                strings(&["xi", "mu", "sigma2", "bracket"]),
            )?;
            t.push(vec![spec.xi(), mu, s2, p.bracket]);
            t
        }
        ReluMode::Sample => {
            let zs = sample_exact(&spec, samples, seed)?;
            let mut t = Table::new(Some(&cfg), Some(seed), strings(&["z"]))?;
            for z in zs {
                t.push(vec![z]);
            }
            t
        }
    };
    emit(io.out.as_deref(), &table.render()?)
}

fn cmd_mc(io: &SpecOut, samples: usize, seed: u64, what: McWhat) -> CmdResult {
    let (cfg, spec) = load_spec(&io.spec)?;
    let estimates = match what {
        McWhat::Cumulants => serde_json::to_value(estimate_cumulants(&spec, samples, seed)?),
        McWhat::Derivs => serde_json::to_value(estimate_deriv_cumulants(&spec, samples, seed)?),
        McWhat::Evgp => serde_json::to_value(estimate_evgp(&spec, samples, seed)?),
    }
    .map_err(|e| Error::InvalidConfig(format!("serialization: {e}")))?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "hierarchylab": VERSION,
        "what": what,
        "seed": seed,
        "samples": samples,
        "config": cfg,
        "estimates": estimates,
    });
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?
        + "\n";
    emit(io.out.as_deref(), &text)
}

/// Prediction columns that name the same quantity as a report field.
fn pred_column_for(field: &str) -> &str {
    match field {
        "k2" => "K",
        other => other,
    }
}

/// One verify comparison in the emitted report.
#[derive(Debug, Serialize)]
pub struct VerifyRow {
    pub name: String,
    pub verdict: Verdict,
    pub pred: f64,
    pub value: f64,
    pub std_error: f64,
    pub z: f64,
}

fn cmd_verify(pred: &Path, est: &Path, zmax: f64, out: Option<&Path>) -> CmdResult {
    let pred_text = read_file(pred)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(pred_text.as_bytes());
    let bad = |e: csv::Error| Failure::Lib(Error::InvalidConfig(format!("prediction CSV: {e}")));
    let header: Vec<String> = rdr
        .headers()
        .map_err(bad)?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let last = rdr
        .records()
        .last()
        .ok_or_else(|| Error::InvalidConfig("prediction CSV has no rows".into()))?
        .map_err(bad)?;
    let mut pred_row = BTreeMap::new();
    for (h, v) in header.iter().zip(last.iter()) {
        let x: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("prediction CSV: non-numeric {h} = {v}")))?;
        pred_row.insert(h.clone(), x);
    }
    let report: Value = serde_json::from_str(&read_file(est)?)
        .map_err(|e| Error::InvalidConfig(format!("estimate JSON: {e}")))?;
    let ests = report
        .get("estimates")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::InvalidConfig("estimate JSON lacks an `estimates` object".into()))?;
    let mut rows = Vec::new();
    for (name, v) in ests {
        let Ok(e) = serde_json::from_value::<MCEstimate>(v.clone()) else {
            continue;
        };
        let Some(&p) = pred_row.get(pred_column_for(name)) else {
            continue;
        };
        if !p.is_finite() {
            continue;
        }
        let (verdict, r) = verify_powered(p, &e, zmax)?;
        rows.push(VerifyRow {
            name: name.clone(),
            verdict,
            pred: p,
            value: r.value,
            std_error: r.std_error,
            z: r.z,
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no estimate matches a prediction column".into()).into());
    }
    let failed = rows.iter().any(|r| r.verdict == Verdict::Fail);
    let text = serde_json::to_string_pretty(&json!({
        "schema_version": SCHEMA_VERSION,
        "hierarchylab": VERSION,
        "z_max": zmax,
        "pass": !failed,
        "comparisons": rows,
    }))
    .map_err(|e| Error::InvalidConfig(e.to_string()))?
        + "\n";
    emit(out, &text)?;
    if failed {
        Err(Failure::VerifyFailed)
    } else {
        Ok(())
    }
}
