use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use equidist::rng::experiment_seed;
use equidist::suite::{env_threads, load_config, report_json, run_experiment, run_suite, single_entry};
use equidist::{Error, SolverSettings};

#[derive(Parser)]
#[command(
    name = "equidist",
    version,
    about = "Backward-orbit equidistribution experiments on P^1 and P^2"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Preset name (z2, z3, basilica, cheb, torus2) or an inline map as JSON.
    #[arg(long, default_value = "z2")]
    map: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Weighted fiber f^-n(point).
    Fiber {
        #[command(flatten)]
        common: Common,
        /// Point as JSON pairs, e.g. '[[2,0],[1,0]]'.
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the equilibrium measure.
    MuSample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 40)]
        burn_in: usize,
        /// CSV of builtin observable pairings with standard errors.
        #[arg(long)]
        moments: Option<PathBuf>,
        /// Embed the sampled atoms in the report.
        #[arg(long)]
        atoms: bool,
    },
    /// Decay of |<nu_n - mu, phi>| against lambda^(-alpha n / 2).
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: Option<String>,
        /// Comma-separated builtin observable labels.
        #[arg(long, value_delimiter = ',')]
        fns: Option<Vec<String>>,
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value_t = 20_000)]
        mu_samples: usize,
        /// Run the logarithmic prefactor scan instead of a single base point.
        #[arg(long)]
        scan: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Hölder exponent of the fiber map near a base point.
    Holder {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        base: String,
        #[arg(long)]
        direction: Option<String>,
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exceptional-set detection and probes.
    ExceptionalScan {
        #[command(flatten)]
        common: Common,
        /// detect, probe-tube, probe-contraction or cocycle.
        #[arg(long, default_value = "detect")]
        mode: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Regularized telescoping iteration diagnostic.
    Telescope {
        #[command(flatten)]
        common: Common,
        #[arg(long = "fn", default_value = "X")]
        function: String,
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 1.5)]
        delta: f64,
    },
    /// theta-regularization of an observable; CSV to stdout unless --csv is given.
    Regularize {
        #[command(flatten)]
        common: Common,
        #[arg(long = "fn", default_value = "X")]
        function: String,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1000)]
        probe_points: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Runs every experiment of a config file.
    Suite {
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn map_value(s: &str) -> Result<Value, Error> {
    if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    } else {
        Ok(Value::String(s.to_string()))
    }
}

fn pairs(s: &str) -> Result<Value, Error> {
    serde_json::from_str(s).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: format!("point `{s}`: {e}"),
    })
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs a single experiment; `Ok(false)` when the experiment itself errored.
fn single(common: &Common, experiment: Value, csv: Option<&PathBuf>, csv_to_stdout: bool) -> Result<bool, Error> {
    let entry = single_entry(&map_value(&common.map)?, experiment)?;
    let seed = experiment_seed(common.seed, &entry.id);
    let run = || run_experiment(&entry, &SolverSettings::default(), seed);
    let out = match env_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(run),
        None => run(),
    };
    let report = serde_json::to_string_pretty(&report_json(&entry, common.seed, &out)).expect("json") + "\n";
    let table = out.as_ref().ok().and_then(|o| o.csv.clone());
    if csv_to_stdout && common.out.is_none() && csv.is_none() {
        if let Some(t) = &table {
            print!("{t}");
        }
    } else {
        write_or_print(common.out.as_ref(), &report)?;
        if let (Some(path), Some(t)) = (csv, &table) {
            fs::write(path, t)?;
        }
    }
    if let Err(e) = &out {
        eprintln!("error: {e}");
    }
    Ok(out.is_ok())
}

fn dispatch(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Fiber { common, point, n, csv } => single(
            &common,
            json!({"kind": "fiber", "id": "fiber", "point": pairs(&point)?, "n": n}),
            csv.as_ref(),
            false,
        ),
        Command::MuSample {
            common,
            samples,
            burn_in,
            moments,
            atoms,
        } => single(
            &common,
            json!({"kind": "mu", "id": "mu", "samples": samples, "burn_in": burn_in, "atoms": atoms}),
            moments.as_ref(),
            false,
        ),
        Command::Rate {
            common,
            point,
            fns,
            nmax,
            lambda,
            alpha,
            mu_samples,
            scan,
            csv,
        } => {
            let mut e = json!({"kind": "rate", "id": "rate", "alpha": alpha, "mu_samples": mu_samples, "scan": scan});
            if let Some(p) = point {
                e["point"] = pairs(&p)?;
            }
            if let Some(f) = fns {
                e["fns"] = json!(f);
            }
            if let Some(n) = nmax {
                e["n_max"] = json!(n);
            }
            if let Some(l) = lambda {
                e["lambda"] = json!(l);
            }
            single(&common, e, csv.as_ref(), false)
        }
        Command::Holder {
            common,
            base,
            direction,
            scales,
            csv,
        } => {
            let mut e = json!({"kind": "holder", "id": "holder", "base": pairs(&base)?});
            if let Some(d) = direction {
                e["direction"] = pairs(&d)?;
            }
            if let Some(s) = scales {
                e["scales"] = json!(s);
            }
            single(&common, e, csv.as_ref(), false)
        }
        Command::ExceptionalScan { common, mode, csv } => single(
            &common,
            json!({"kind": "exceptional", "id": "exceptional", "mode": mode}),
            csv.as_ref(),
            false,
        ),
        Command::Telescope {
            common,
            function,
            point,
            levels,
            m,
            delta,
        } => single(
            &common,
            json!({"kind": "telescope", "id": "telescope", "fn": function, "point": pairs(&point)?,
                   "levels": levels, "m": m, "delta": delta}),
            None,
            false,
        ),
        Command::Regularize {
            common,
            function,
            theta,
            samples,
            probe_points,
            csv,
        } => single(
            &common,
            json!({"kind": "regularize", "id": "regularize", "fn": function, "theta": theta,
                   "samples": samples, "probe_points": probe_points}),
            csv.as_ref(),
            true,
        ),
        Command::Suite {
            config,
            seed,
            output_dir,
        } => {
            let mut suite = load_config(&config)?;
            if let Some(s) = seed {
                suite.seed = s;
            }
            if let Some(d) = output_dir {
                suite.output_dir = d;
            }
            let outcome = run_suite(&suite, env_threads())?;
            for row in &outcome.summary {
                let verdict = row
                    .verdict
                    .map(|v| {
                        serde_json::to_value(v)
                            .expect("json")
                            .as_str()
                            .unwrap_or_default()
                            .to_string()
                    })
                    .unwrap_or_else(|| "-".into());
                match &row.error {
                    Some(e) => println!("{:<24} {:<12} error: {e}", row.id, row.kind),
                    None => println!("{:<24} {:<12} {verdict}", row.id, row.kind),
                }
            }
            Ok(outcome.exit_code == 0)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
