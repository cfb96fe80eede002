use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use fedsel::cluster::grid_search;
use fedsel::config::parse_config;
use fedsel::data::{histogram_from_counts, PartitionSpec, TABLE1_SPEC, TABLE2_SPEC};
use fedsel::report::{
    compare_runs, emit_gridsearch_csv, emit_run_artifacts, emit_timing_csv, fmt_g6, format_compare_csv,
    format_compare_text, line_chart_svg, moving_average, read_rounds_csv, write_svg, CompareMetric, Series,
};
use fedsel::{sim, Error, Result};

#[derive(Parser)]
#[command(name = "fedsel", version, about = "Federated-learning client-selection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifact set.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "fedsel-out")]
        out: PathBuf,
    },
    /// Benchmark selection overhead for each strategy.
    Timing {
        config: PathBuf,
        #[arg(long, default_value = "fedsel-out")]
        out: PathBuf,
    },
    /// Score clustering hyperparameters by mean silhouette.
    Gridsearch {
        config: PathBuf,
        #[arg(long, default_value = "fedsel-out")]
        out: PathBuf,
    },
    /// Summarize several run directories.
    Compare {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
        /// Restrict output to one column.
        #[arg(long)]
        metric: Option<CompareMetric>,
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Also write compare.csv and accuracy_compare.svg here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a shipped partition spec.
    #[command(group(ArgGroup::new("table").required(true).args(["table1", "table2"])))]
    GenSpec {
        #[arg(long)]
        table1: bool,
        #[arg(long)]
        table2: bool,
        out: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(config: &Path, out: &Path) -> Result<()> {
    let cfg = parse_config(config)?;
    let result = sim::run(&cfg)?;
    let artifacts = emit_run_artifacts(&result, out)?;
    let acc = result.accuracy_series();
    let ma = moving_average(&acc, cfg.moving_average_window)?;
    println!(
        "{}: {} rounds, final accuracy {}, final moving average {}",
        cfg.strategy.label(),
        cfg.total_rounds,
        fmt_g6(*acc.last().unwrap_or(&0.0)),
        fmt_g6(*ma.last().unwrap_or(&0.0))
    );
    println!("wrote {}", artifacts.rounds.parent().unwrap_or(out).display());
    Ok(())
}

fn timing(config: &Path, out: &Path) -> Result<()> {
    let cfg = parse_config(config)?;
    let rows = sim::timing_benchmark(&cfg)?;
    let path = emit_timing_csv(&rows, out)?;
    for r in &rows {
        println!(
            "{:<24} n={:<4} mean {} s  min {} s  max {} s",
            r.strategy,
            r.n_clients,
            fmt_g6(r.stats.mean_s),
            fmt_g6(r.stats.min_s),
            fmt_g6(r.stats.max_s)
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn gridsearch(config: &Path, out: &Path) -> Result<()> {
    let cfg = parse_config(config)?;
    let g = &cfg.gridsearch;
    let snapshots = sim::all_client_snapshots(&cfg, g.rounds)?;
    let results = grid_search(&snapshots, &g.metrics, &g.linkages, &g.k_values)?;
    let path = emit_gridsearch_csv(&results, out)?;
    for (i, r) in results.iter().take(10).enumerate() {
        println!("{:>3}  {:<10} {:<9} k={:<3} {}", i + 1, r.metric, r.linkage, r.k, fmt_g6(r.mean_silhouette));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn compare(dirs: &[PathBuf], metric: Option<CompareMetric>, window: usize, out: Option<&Path>) -> Result<()> {
    let rows = compare_runs(dirs, window)?;
    print!("{}", format_compare_text(&rows, metric));
    if let Some(out) = out {
        write(&out.join("compare.csv"), &format_compare_csv(&rows, metric))?;
        let mut series = Vec::with_capacity(dirs.len());
        for d in dirs {
            let file = if d.is_dir() { d.join("rounds.csv") } else { d.clone() };
            let acc: Vec<f64> = read_rounds_csv(&file)?.iter().map(|r| r.test_accuracy).collect();
            let name = d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
            series.push(Series {
                label: name,
                values: moving_average(&acc, window)?,
            });
        }
        series.sort_by(|a, b| a.label.cmp(&b.label));
        let svg = line_chart_svg(
            &series,
            &format!("Test accuracy (moving average, window {window})"),
            "round",
            "accuracy",
        )?;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_svg(&svg, &out.join("accuracy_compare.svg"))?;
    }
    Ok(())
}

fn gen_spec(table1: bool, out: &Path) -> Result<()> {
    let text = if table1 { TABLE1_SPEC } else { TABLE2_SPEC };
    let spec = PartitionSpec::parse(text, if table1 { "builtin:table1" } else { "builtin:table2" })?;
    write(out, text)?;
    let hist = histogram_from_counts(&spec.class_totals());
    println!("class  count  percent");
    for (class, share) in &hist {
        println!("{class:>5}  {:>5}  {:>7.2}", share.count, share.percent());
    }
    println!("wrote {} ({} clients)", out.display(), spec.clients.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Timing { config, out } => timing(config, out),
        Command::Gridsearch { config, out } => gridsearch(config, out),
        Command::Compare { dirs, metric, window, out } => compare(dirs, *metric, *window, out.as_deref()),
        Command::GenSpec { table1, out, .. } => gen_spec(*table1, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedsel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
