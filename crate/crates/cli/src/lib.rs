//! Scenario runner behind the `leaky-decoy` binary.
//!
//! Without `--scenario` the runner performs one analysis at fixed settings
//! and prints every intermediate bound. With `--scenario` it optimises the
//! key over a distance sweep and writes one CSV row per cell.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Deserialize;

use leaky_decoy::channel::{read_counts_csv, Basis};
use leaky_decoy::leakage::Intensity;
use leaky_decoy::optimizer::OptimizationSpec;
use leaky_decoy::params::{ChannelParams, LeakCase, LeakageModel, ProtocolParams, SecurityParams};
use leaky_decoy::pipeline::{evaluate, evaluate_with_counts, AnalysisConfig, Evaluation};
use leaky_decoy::sweep::{
    distance_range, run_sweep, write_csv, write_trace_csv, Scenario, SweepSpec,
};

/// Environment variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "LEAKY_DECOY_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical fault: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<leaky_decoy::Error> for CliError {
    fn from(e: leaky_decoy::Error) -> Self {
        use leaky_decoy::Error as E;
        match e {
            E::InvalidArgument(_) | E::InvalidParams(_) => CliError::Config(e.to_string()),
            E::Io(_) | E::Csv(_) => CliError::Io(e.to_string()),
            E::Numeric(_) | E::EstimationAborted(_) => CliError::Numeric(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "leaky-decoy", version, about = "Finite-key decoy-state BB84 key rates with a leaky source")]
pub struct Args {
    /// Sweep scenario: no_leak, case1, case2, case3 or ratio. Omit for a single analysis.
    #[arg(long)]
    pub scenario: Option<String>,
    /// JSON config file (falls back to $LEAKY_DECOY_CONFIG).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Distance in km, or `start:stop:step` for a sweep.
    #[arg(long)]
    pub distance: Option<String>,
    /// Back-reflected intensity bound; comma-separated list in sweeps.
    #[arg(long)]
    pub imax: Option<String>,
    /// Total pulses; comma-separated list in sweeps.
    #[arg(long)]
    pub n: Option<String>,
    /// Include the phase-modulator leak (coin route).
    #[arg(long, overrides_with = "no_pm")]
    pub pm: bool,
    #[arg(long, overrides_with = "pm")]
    pub no_pm: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Seed for the optimiser restarts.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Measured counts CSV (basis,intensity,clicks,errors,trials) replacing the channel model.
    #[arg(long)]
    pub counts_from: Option<PathBuf>,
    /// Write every objective evaluation of a sweep to this CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// Contents of a config file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub protocol: ProtocolParams,
    pub channel: ChannelParams,
    pub security: SecurityParams,
    pub leakage: LeakageModel,
    pub optimizer: OptimizationSpec,
}

impl FileConfig {
    fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            protocol: self.protocol,
            channel: self.channel,
            security: self.security.clone(),
            leakage: self.leakage,
        }
    }
}

/// Parse a JSON config, reporting the failing field path and position.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!(
            "field `{path}` (line {}, column {}): {inner}",
            inner.line(),
            inner.column()
        ))
    })
}

fn load_config(arg: Option<&Path>) -> Result<FileConfig> {
    let path = match arg {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from),
    };
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
    }
}

fn parse_list(flag: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("--{flag}: cannot parse {t:?} as a number")))
        })
        .collect()
}

fn parse_distances(s: &str) -> Result<Vec<f64>> {
    let parts = parse_list("distance", &s.replace(':', ","))?;
    match parts.as_slice() {
        [d] => Ok(vec![*d]),
        [a, b, step] => Ok(distance_range(*a, *b, *step)?),
        _ => Err(CliError::Config(
            "--distance takes a single value or start:stop:step".into(),
        )),
    }
}

fn single(flag: &str, v: Vec<f64>) -> Result<f64> {
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(CliError::Config(format!(
            "--{flag} takes one value without --scenario"
        ))),
    }
}

fn pm_flag(args: &Args) -> Option<bool> {
    match (args.pm, args.no_pm) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(
            std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Run the command line and return the process exit code.
pub fn run(args: Args) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    match &args.scenario {
        Some(s) => sweep(&args, &file, Scenario::parse(s)?),
        None => single_report(&args, &file),
    }
}

fn sweep(args: &Args, file: &FileConfig, scenario: Scenario) -> Result<()> {
    if args.counts_from.is_some() {
        return Err(CliError::Config(
            "--counts-from applies to single analyses only".into(),
        ));
    }
    let base = file.analysis();
    let distances = match &args.distance {
        Some(d) => parse_distances(d)?,
        None => vec![base.channel.distance_km],
    };
    let mut spec = SweepSpec::new(scenario, distances);
    spec.i_max = match &args.imax {
        Some(s) => parse_list("imax", s)?,
        None => vec![base.leakage.i_max],
    };
    spec.n_pulses = match &args.n {
        Some(s) => parse_list("n", s)?,
        None => vec![base.protocol.n_pulses],
    };
    spec.pm = pm_flag(args).unwrap_or(base.leakage.pm_enabled);
    spec.jobs = args.jobs;
    spec.base = base;
    spec.optimizer = file.optimizer.clone();
    if let Some(seed) = args.seed {
        spec.optimizer.seed = seed;
    }
    spec.keep_trace = args.trace.is_some();
    let out = run_sweep(&spec)?;
    write_csv(&out.rows, open_out(args.out.as_deref())?)?;
    if let Some(p) = &args.trace {
        write_trace_csv(&out.trace, open_out(Some(p))?)?;
    }
    Ok(())
}

fn single_report(args: &Args, file: &FileConfig) -> Result<()> {
    if args.trace.is_some() {
        return Err(CliError::Config("--trace applies to sweeps only".into()));
    }
    let mut cfg = file.analysis();
    if let Some(d) = &args.distance {
        cfg.channel.distance_km = single("distance", parse_distances(d)?)?;
    }
    if let Some(s) = &args.imax {
        cfg.leakage.i_max = single("imax", parse_list("imax", s)?)?;
        if cfg.leakage.i_max > 0.0 && cfg.leakage.case == LeakCase::NoLeak {
            return Err(CliError::Config(
                "--imax needs leakage.case set in the config".into(),
            ));
        }
    }
    if let Some(s) = &args.n {
        cfg.protocol.n_pulses = single("n", parse_list("n", s)?)?;
    }
    if let Some(pm) = pm_flag(args) {
        cfg.leakage.pm_enabled = pm;
    }
    let eval = match &args.counts_from {
        Some(p) => evaluate_with_counts(&cfg, read_counts_csv(p)?)?,
        None => evaluate(&cfg)?,
    };
    let mut w = open_out(args.out.as_deref())?;
    let text = report(&cfg, &eval, args.counts_from.is_some());
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Io(e.to_string()))
}

/// Human-readable account of one analysis.
pub fn report(cfg: &AnalysisConfig, e: &Evaluation, measured: bool) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let p = &cfg.protocol;
    let c = &cfg.channel;
    let l = &cfg.leakage;
    let _ = writeln!(s, "# settings");
    let _ = writeln!(
        s,
        "distance_km {}  n_pulses {:e}  gamma {} {} {}  p {} {} {}  p_z {}  p_zac {}",
        c.distance_km, p.n_pulses, p.gamma_s, p.gamma_v, p.gamma_w, p.p_s, p.p_v, p.p_w, p.p_z,
        p.p_zac
    );
    let _ = writeln!(
        s,
        "leakage {:?}  i_max {:e}  theta {} {}  pm {}",
        l.case, l.i_max, l.theta_v, l.theta_w, l.pm_enabled
    );
    let _ = writeln!(
        s,
        "\n# counts ({})",
        if measured { "measured" } else { "channel model" }
    );
    for b in [Basis::Z, Basis::X] {
        for j in Intensity::ALL {
            let _ = writeln!(
                s,
                "{b:?} {j:?}  clicks {:.6e}  errors {:.6e}",
                e.counts.clicks(b, j),
                e.counts.errors(b, j)
            );
        }
    }
    let _ = writeln!(
        s,
        "sifted {:.6e}  qber_z {:.6e}",
        e.counts.sifted_key_size(),
        e.counts.qber_z()
    );
    let d = &e.distances;
    let _ = writeln!(s, "\n# trace distances");
    let _ = writeln!(s, "D_vs {:.6e}  D_ws {:.6e}  D_vw {:.6e}", d.pair[0], d.pair[1], d.pair_vw);
    for (name, row) in ["s|vw", "v|sw", "w|sv"].iter().zip(&d.triple) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.3e}")).collect();
        let _ = writeln!(s, "{name} [{}]", cells.join(" "));
    }
    let k = &e.key;
    let y = &k.yields;
    let _ = writeln!(s, "\n# yields");
    let _ = writeln!(
        s,
        "N0_Z^L {:.6e}  N1_Z^L {:.6e}  N1_X^L {:.6e}  E1_X^U {:.6e}",
        y.n0_z, y.n1_z, y.n1_x, y.e1_x
    );
    if let Some(cb) = &e.coin {
        let _ = writeln!(s, "\n# coin");
        let _ = writeln!(
            s,
            "expected {:.6e}  actual {:.6e}  overlap {:.12}",
            cb.expected, cb.actual, cb.overlap
        );
    }
    let _ = writeln!(s, "\n# phase error");
    let _ = writeln!(
        s,
        "route {}  e_ph {:.6e}  phase_errors {:.6e}",
        k.phase.route.name(),
        k.phase.e_ph,
        k.phase.n_phase_errors
    );
    let _ = writeln!(s, "\n# eps ledger (per use {:.6e})", e.eps_per_use);
    for x in k.ledger.entries() {
        let _ = writeln!(s, "{:<28} {:?} {:.6e}", x.label, x.group, x.eps);
    }
    let _ = writeln!(
        s,
        "composite {:.6e}  product_form {:.6e}",
        k.eps, k.eps_product_form
    );
    let _ = writeln!(s, "\n# key");
    let _ = writeln!(
        s,
        "leak_ec {:.6e}  ell_raw {:.6e}  ell {}  rate {:.6e}  abort {}",
        k.leak_ec, k.ell_raw, k.ell, k.rate, k.abort
    );
    s
}
