use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factorial_core::config::Config;
use factorial_core::error::{Error, ErrorClass, Result};
use factorial_core::{io, report, Design};

/// Randomization-based inference for balanced 2^K factorial experiments.
#[derive(Parser)]
#[command(name = "factorial", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every stochastic step derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Use the single-threaded path.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian science table and its population quantities.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        /// Number of units.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Randomize units of a science table and write the observed data.
    Assign {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        science: PathBuf,
    },
    /// Neyman, Fisher and Bayesian analysis of observed data.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// `+` separated subset of neyman, fisher, bayes (or `all`).
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        n_draws: Option<usize>,
    },
    /// Compare exact sampling moments of a science table with enumeration or Monte Carlo.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        science: PathBuf,
        /// Use Monte Carlo draws instead of full enumeration.
        #[arg(long)]
        monte_carlo: bool,
    },
    /// Run the binary-outcome study end to end.
    BinaryDemo {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}

fn resolve(common: &Common, extra: &[(&str, Option<String>)]) -> Result<Config> {
    let mut c = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        c.set("seed", seed.to_string());
    }
    if let Some(alpha) = common.alpha {
        c.set("alpha", alpha.to_string());
    }
    if common.sequential {
        c.set("exec.parallel", "false");
    }
    for (key, value) in extra {
        if let Some(v) = value {
            c.set(key, v.clone());
        }
    }
    for item in &common.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        c.set(k.trim(), v.trim());
    }
    fs::create_dir_all(&common.out_dir)?;
    Ok(c)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, k, n } => {
            let c = resolve(
                &common,
                &[
                    ("design.k", k.map(|v| v.to_string())),
                    ("simulate.n", n.map(|v| v.to_string())),
                ],
            )?;
            let (design, science, truth) = report::simulate(&c)?;
            io::write_science(
                create(&common.out_dir.join("science.csv"))?,
                &science,
                &design,
            )?;
            io::write_json(&common.out_dir.join("truth.json"), &truth)?;
            println!(
                "wrote science.csv and truth.json ({} units, K = {})",
                science.units(),
                design.factors()
            );
        }
        Command::Assign { common, science } => {
            let c = resolve(&common, &[])?;
            let (design, science) = io::read_science_file(&science)?;
            let obs = report::assign(&science, &design, &c)?;
            io::write_observed(create(&common.out_dir.join("observed.csv"))?, &obs, &design)?;
            println!("wrote observed.csv ({} units)", obs.units());
        }
        Command::Analyze {
            common,
            input,
            methods,
            n_draws,
        } => {
            let c = resolve(
                &common,
                &[
                    ("methods", methods),
                    ("fisher.n_draws", n_draws.map(|v| v.to_string())),
                ],
            )?;
            let k = io::observed_factor_count(File::open(&input)?)?;
            let design = Design::new(k)?;
            let obs = io::read_observed_file(&input, &design)?;
            let out = report::analyze(&obs, &design, &c)?;
            write_analysis(&common.out_dir, &out)?;
            for row in &out.report.effects {
                println!("{:>8} {:>10.4}", row.name, row.point);
            }
            for d in &out.report.diagnostics {
                eprintln!("note: {d}");
            }
        }
        Command::Oracle {
            common,
            science,
            monte_carlo,
        } => {
            let c = resolve(
                &common,
                &[(
                    "oracle.method",
                    monte_carlo.then(|| "monte_carlo".to_string()),
                )],
            )?;
            let (design, science) = io::read_science_file(&science)?;
            let rep = report::oracle(&science, &design, &c)?;
            io::write_json(&common.out_dir.join("oracle.json"), &rep)?;
            println!(
                "{} over {} assignments, max deviation {:.3e}",
                rep.method, rep.assignments, rep.max_deviation
            );
        }
        Command::BinaryDemo { common } => {
            let c = resolve(&common, &[])?;
            let (rep, obs) = report::binary_demo(&c)?;
            let design = rep.study.design()?;
            io::write_observed(
                create(&common.out_dir.join("binary_observed.csv"))?,
                &obs,
                &design,
            )?;
            io::write_json(&common.out_dir.join("binary_report.json"), &rep)?;
            for e in &rep.effects {
                let (sp, fp) = (&e.super_population, &e.finite_population);
                println!(
                    "{:>8} plug-in {:.3} ({:.4})  super [{:.3}, {:.3}]  finite [{:.3}, {:.3}]",
                    e.name, e.plugin, e.plugin_se, sp.ci[0], sp.ci[1], fp.ci[0], fp.ci[1]
                );
            }
        }
    }
    Ok(())
}

fn write_analysis(dir: &Path, out: &report::AnalyzeOutput) -> Result<()> {
    io::write_json(&dir.join("report.json"), &out.report)?;
    fs::write(
        dir.join("effects.csv"),
        report::effect_table_csv(&out.report),
    )?;
    for iv in &out.fiducial {
        let rows: Vec<Vec<f64>> = iv.curve.iter().map(|&(eta, p)| vec![eta, p]).collect();
        io::write_table(
            &dir.join(format!("pcurve_{}.csv", iv.name)),
            &["eta", "p"],
            &rows,
        )?;
    }
    if let Some(r) = &out.randomization {
        let names: Vec<&str> = out.report.effects.iter().map(|e| e.name.as_str()).collect();
        let rows: Vec<Vec<f64>> = (0..r.n_draws)
            .map(|d| r.draws.iter().map(|col| col[d]).collect())
            .collect();
        io::write_table(&dir.join("randomization.csv"), &names, &rows)?;
        let summary = serde_json::json!({
            "eta": r.eta,
            "observed": r.observed,
            "p_upper": r.p_upper,
            "p_lower": r.p_lower,
            "p_two_sided": r.p_two_sided,
            "n_draws": r.n_draws,
            "mode": r.mode,
        });
        io::write_json(&dir.join("randomization.json"), &summary)?;
    }
    Ok(())
}
