use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mvsmooth::config::{parse_config, RunConfig, ScheduleConfig};
use mvsmooth::output::{self, Manifest, Names};
use mvsmooth::sampler::layout_for;
use mvsmooth::simharness::{self, SimMetrics};
use mvsmooth::{build_designs, ingest_csv, run_chain, Dataset, DesignMatrices, ModelError, ModelSpec, Result};

#[derive(Parser)]
#[command(name = "mvsmooth", version, about = "Semiparametric multivariate Gaussian regression by MCMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler and write draws, tables and a manifest.
    Fit(Common),
    /// Recompute the tables from an existing draws.csv.
    Summarize(Common),
    /// Run the simulation study.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// 10,000 sweeps, 5,000 burn-in, thin 2 (10 replicates when simulating).
    #[arg(long, conflicts_with = "full_scale")]
    desk_scale: bool,
    /// 40,000 sweeps, 20,000 burn-in, thin 2 (40 replicates when simulating).
    #[arg(long)]
    full_scale: bool,
}

struct Prepared {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
    schedule: ScheduleConfig,
}

fn load(c: &Common, default_out: &str) -> Result<Prepared> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let mut cfg = parse_config(&text)?;
            // relative paths in the file are relative to the file
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.data = cfg.data.map(|d| if d.is_relative() { base.join(d) } else { d });
            cfg
        }
        None => parse_config("")?,
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let schedule = if c.desk_scale {
        ScheduleConfig::DESK
    } else if c.full_scale {
        ScheduleConfig::FULL
    } else {
        cfg.schedule_or(ScheduleConfig::FULL)
    };
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(default_out));
    Ok(Prepared {
        seed: cfg.seed,
        cfg,
        out,
        schedule,
    })
}

fn model(p: &Prepared) -> Result<(Dataset, ModelSpec, DesignMatrices)> {
    let path = p
        .cfg
        .data
        .as_ref()
        .ok_or_else(|| ModelError::Config {
            path: "data".into(),
            message: "a data file is required".into(),
        })?;
    let data = ingest_csv(path)?;
    eprintln!("read {} rows x {} columns from {}", data.n_rows(), data.n_cols(), path.display());
    let spec = p.cfg.model_spec(&data)?;
    let designs = build_designs(&data, &spec)?;
    Ok((data, spec, designs))
}

fn tables(p: &Prepared, data: &Dataset, spec: &ModelSpec, designs: &DesignMatrices, samples: &mvsmooth::ChainSamples) -> Result<()> {
    let s = output::summarize(samples, designs, spec, &p.cfg.precision_thresholds, p.cfg.grid_points)?;
    let names = Names {
        columns: data.names(),
        designs,
        spec,
    };
    for f in output::write_summaries(&p.out, &s, &names)? {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn fit(c: &Common) -> Result<()> {
    let p = load(c, "out")?;
    let (data, spec, designs) = model(&p)?;
    output::ensure_dir(&p.out)?;
    let schedule = p.schedule.to_schedule(p.seed);
    schedule.validate()?;
    let start = Instant::now();
    let samples = run_chain(&designs, &spec, &schedule)?;
    eprintln!("{} sweeps in {:.2} s, {} draws kept", schedule.sweeps, start.elapsed().as_secs_f64(), samples.len());
    let draws = p.out.join(output::DRAWS);
    output::write_draws(&draws, &samples)?;
    eprintln!("wrote {}", draws.display());
    tables(&p, &data, &spec, &designs, &samples)?;
    if let Some(report) = &samples.report {
        for a in report.acceptance.iter().filter(|a| a.adapted) {
            if let Some(rate) = a.burn_in_tail {
                if !(0.15..=0.30).contains(&rate) {
                    eprintln!("warning: `{}` ended burn-in with acceptance {rate:.3}", a.name);
                }
            }
        }
        if report.health.total() > 0 {
            eprintln!("warning: numerical events {:?}", report.health);
        }
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: p.seed,
        schedule,
        retained_draws: samples.len(),
        data_rows: data.n_rows(),
        report: samples.report.clone(),
        curves_centered: true,
        config: &p.cfg,
    };
    eprintln!("wrote {}", output::write_manifest(&p.out, &manifest)?.display());
    Ok(())
}

fn summarize(c: &Common) -> Result<()> {
    let p = load(c, "out")?;
    let (data, spec, designs) = model(&p)?;
    let samples = output::read_draws(&p.out.join(output::DRAWS), &layout_for(&designs, &spec))?;
    eprintln!("read {} draws", samples.len());
    tables(&p, &data, &spec, &designs, &samples)
}

fn simulate(c: &Common) -> Result<()> {
    let p = load(c, "sim")?;
    let replicates = if c.full_scale { 40 } else { 10 };
    let scenarios = p.cfg.scenarios(p.schedule, replicates);
    for s in &scenarios {
        s.validate()?;
    }
    output::ensure_dir(&p.out)?;
    let mut metrics: Vec<SimMetrics> = Vec::new();
    for s in &scenarios {
        let start = Instant::now();
        let m = simharness::run_scenario(s)?;
        eprintln!(
            "n={} rho={} done in {:.1} s ({} replicates dropped)",
            s.n,
            s.rho,
            start.elapsed().as_secs_f64(),
            m.failures.len()
        );
        metrics.push(m);
    }
    let tables = p.out.join("simulation.csv");
    std::fs::write(&tables, simharness::format_tables(&metrics)).map_err(|source| ModelError::Io {
        path: tables.display().to_string(),
        source,
    })?;
    let detail = p.out.join("simulation.json");
    let text = output::to_json(&metrics)?;
    std::fs::write(&detail, text).map_err(|source| ModelError::Io {
        path: detail.display().to_string(),
        source,
    })?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: p.seed,
        schedule: p.schedule.to_schedule(p.seed),
        retained_draws: 0,
        data_rows: 0,
        report: None,
        curves_centered: true,
        config: &p.cfg,
    };
    output::write_manifest(&p.out, &manifest)?;
    print!("{}", simharness::format_tables(&metrics));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Fit(c) => fit(c),
        Command::Summarize(c) => summarize(c),
        Command::Simulate(c) => simulate(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
