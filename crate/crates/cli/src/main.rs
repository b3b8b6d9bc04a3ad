use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use graphformer::graph::{generate_regression_set, generate_sbm, load_json, save_json};
use graphformer::pe::{lap_pe, normalized_laplacian, symmetric_eigendecompose, DEFAULT_TOL};
use graphformer::train::{prepare, train_seed, Prepared, SeedResult};
use graphformer::{ExperimentConfig, RunReport, SbmParams};

#[derive(Parser)]
#[command(name = "graphformer", version, about = "Graph transformer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write `report.json` and `report.txt`.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seeds trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the normalized Laplacian spectrum and the Laplacian positional
    /// encoding of one graph.
    PeInspect {
        graph: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Write a synthetic dataset as one JSON file per graph.
    GenerateData {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        num_graphs: usize,
        /// Block sizes of the SBM, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "20,20")]
        block_sizes: Vec<usize>,
        #[arg(long, default_value_t = 0.9)]
        p_intra: f64,
        #[arg(long, default_value_t = 0.1)]
        q_inter: f64,
        #[arg(long, default_value_t = 0.1)]
        feature_noise: f64,
        #[arg(long, default_value_t = 5)]
        min_nodes: usize,
        #[arg(long, default_value_t = 12)]
        max_nodes: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Sbm,
    Regression,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, jobs } => cmd_run(&config, jobs),
        Command::PeInspect { graph, k } => cmd_pe_inspect(&graph, k),
        Command::GenerateData {
            kind,
            out,
            seed,
            num_graphs,
            block_sizes,
            p_intra,
            q_inter,
            feature_noise,
            min_nodes,
            max_nodes,
        } => {
            let graphs = match kind {
                DataKind::Sbm => {
                    let params = SbmParams::new(block_sizes, p_intra, q_inter, feature_noise);
                    (0..num_graphs as u64)
                        .map(|i| generate_sbm(&params, seed.wrapping_add(i)))
                        .collect::<Result<Vec<_>, _>>()?
                }
                DataKind::Regression => generate_regression_set(num_graphs, (min_nodes, max_nodes), seed)?,
            };
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (i, g) in graphs.iter().enumerate() {
                save_json(g, out.join(format!("graph_{i:04}.json")))?;
            }
            println!("wrote {} graphs to {}", graphs.len(), out.display());
            Ok(())
        }
    }
}

fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    // write-then-rename so an interrupted run never leaves a torn file
    for (name, body) in [("report.json", report.to_json()), ("report.txt", report.table())] {
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, body).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, dir.join(name))?;
    }
    Ok(())
}

fn cmd_run(config: &Path, jobs: usize) -> Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let prepared: Prepared = prepare(&cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.txt"), cfg.to_flat_string())?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let done: Mutex<Vec<SeedResult>> = Mutex::new(Vec::new());
    let outcome: Result<()> = pool.install(|| {
        cfg.seeds.par_iter().try_for_each(|&seed| {
            let result = train_seed(&prepared, seed).with_context(|| format!("seed {seed}"))?;
            let mut done = done.lock().expect("no seed panicked while holding the lock");
            done.push(result);
            write_report(out, &prepared.report(done.clone()))
        })
    });
    let done = done.into_inner().expect("lock not poisoned");
    let report = prepared.report(done);
    write_report(out, &report)?;
    outcome?;
    if report.partial {
        bail!("only {} of {} seeds finished", report.seeds.len(), report.seeds_requested);
    }
    print!("{}", report.table());
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}

fn fmt_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
}

fn cmd_pe_inspect(path: &Path, k: usize) -> Result<()> {
    let g = load_json(path)?;
    let spectrum = if g.num_nodes() == 0 {
        vec![]
    } else {
        symmetric_eigendecompose(&normalized_laplacian(&g)?, DEFAULT_TOL)?.eigenvalues
    };
    let pe = lap_pe(&g, k)?;
    println!("eigenvalues: {}", fmt_row(spectrum.iter().copied()));
    println!("selected: {}", fmt_row(pe.eigenvalues.iter().copied()));
    let header: Vec<String> = (0..k).map(|c| format!("pe{c}")).collect();
    println!("node,{}", header.join(","));
    for i in 0..g.num_nodes() {
        println!("{i},{}", fmt_row(pe.encodings.row(i).iter().copied()));
    }
    Ok(())
}
