use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use actcomp::blockwise::memory_report;
use actcomp::data::{generate_sbm, write_graph_dir, GraphDataset, SbmConfig};
use actcomp::dist::ClippedNormal;
use actcomp::gnn::{train, Aggregation, Precision, TrainConfig};
use actcomp::quant::{Boundaries, Grouping, QuantScheme};
use actcomp::varopt::{self, BoundaryTable, TableEntry, D_MAX, D_MIN, TABLE_GENERATOR_VERSION};
use actcomp::{Error, Result, SeededRng};
use crate as exp;

/// Command-line interface of the `actcomp` binary.
#[derive(Parser)]
#[command(name = "actcomp", version, about = "Extreme activation compression experiments")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a GNN and write a JSON report.
    Train(TrainArgs),
    /// Train once per block size G/R and write a CSV row for each.
    Sweep(SweepArgs),
    /// JS divergence of saved activations against uniform and clipped-normal models.
    FitDist(FitDistArgs),
    /// Optimal INT2 bin edges: single lookups, the full table, EV grids and reduction curves.
    VarOpt(VarOptArgs),
    /// Quantisation throughput, or a memory report with --memory.
    BenchQuant(BenchArgs),
    /// Write the synthetic two-community graph in the dataset directory format.
    GenSynth(GenSynthArgs),
}

fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_aggregation(s: &str) -> std::result::Result<Aggregation, String> {
    match s {
        "gcn" => Ok(Aggregation::Gcn),
        "sage" => Ok(Aggregation::Sage),
        _ => Err(format!("unknown aggregation {s:?} (expected gcn or sage)")),
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Dataset directory, or `synth200` for the built-in graph.
    #[arg(long, default_value = "synth200")]
    dataset: PathBuf,
    /// fp32, int8, int4 or int2.
    #[arg(long, default_value = "int2", value_parser = parse_precision)]
    precision: Precision,
    #[arg(long, default_value_t = 8)]
    d_over_r: usize,
    /// Block size as a multiple of R; per-row quantisation when omitted.
    #[arg(long)]
    g_over_r: Option<usize>,
    /// Variance-minimised INT2 bin edges from the boundary table.
    #[arg(long)]
    vm: bool,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    lr: f32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// gcn or sage.
    #[arg(long, default_value = "gcn", value_parser = parse_aggregation)]
    aggregation: Aggregation,
    /// Keep one projection matrix per layer for the whole run instead of redrawing it every step.
    #[arg(long)]
    fixed_projection: bool,
}

impl ModelArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            precision: self.precision,
            d_over_r: self.d_over_r,
            g_over_r: self.g_over_r,
            vm: self.vm,
            epochs: self.epochs,
            lr: self.lr,
            seed: self.seed,
            hidden: self.hidden,
            layers: self.layers,
            aggregation: self.aggregation,
            resample_projection: !self.fixed_projection,
        }
    }

    fn dataset(&self) -> Result<GraphDataset> {
        GraphDataset::open(&self.dataset)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the normalised projected activations of the best-validation epoch.
    #[arg(long)]
    save_activations: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Block sizes G/R to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = exp::SWEEP_G_OVER_R)]
    g_list: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitDistArgs {
    /// Directories written by `train --save-activations`; results are averaged over them.
    #[arg(long, num_args = 1..)]
    activations: Vec<PathBuf>,
    /// Without --activations: train this many runs (seeds seed, seed+1, ...) and use their activations.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VarOptArgs {
    /// Dimensionality D for a single entry, grid or reduction curve.
    #[arg(long, conflicts_with = "build_table")]
    d: Option<usize>,
    /// Regenerate the full table for D in 4..=2048.
    #[arg(long)]
    build_table: bool,
    /// Recompute the entry instead of reading the shipped table.
    #[arg(long)]
    fresh: bool,
    /// Emit expected variance on an (alpha, beta) grid with this many steps per axis.
    #[arg(long, requires = "d")]
    grid: Option<usize>,
    /// Emit the variance reduction on synthetic CN data for table entries lo..=hi.
    #[arg(long, requires = "d", value_name = "LO:HI")]
    reduction: Option<String>,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, default_value_t = varopt::DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 4096)]
    rows: usize,
    /// Row width (R).
    #[arg(long, default_value_t = 64)]
    cols: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [2u8, 4, 8])]
    bits: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_values_t = (1..=12).map(|k| 1usize << k).collect::<Vec<_>>())]
    groups: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Print the memory report for --rows x --cols at the first --bits and --g-over-r instead of timing.
    #[arg(long)]
    memory: bool,
    /// Block size as a multiple of --cols for --memory; per-row when omitted.
    #[arg(long)]
    g_over_r: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value_t = 64)]
    features: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Parse {
            path: p.to_path_buf(),
            message: e.to_string(),
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let ds = a.model.dataset()?;
    let out = train(&ds, &a.model.config())?;
    if let Some(dir) = &a.save_activations {
        exp::save_activations(dir, a.model.seed, &out.activations)?;
    }
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "{}", out.report.to_json()?)?;
    w.flush()?;
    Ok(())
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let rows = exp::sweep(&a.model.dataset()?, &a.model.config(), &a.g_list)?;
    let mut w = output(a.out.as_deref())?;
    exp::write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run_fit_dist(a: &FitDistArgs) -> Result<()> {
    let runs = if a.activations.is_empty() {
        exp::train_for_activations(&a.model.dataset()?, &a.model.config(), a.repeats)?
    } else {
        a.activations.iter().map(|d| exp::load_activations(d)).collect::<Result<Vec<_>>>()?
    };
    let rows = exp::fit_dist(&runs)?;
    let mut w = output(a.out.as_deref())?;
    exp::write_jsd_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn check_d(d: usize) -> Result<()> {
    if (D_MIN..=D_MAX).contains(&d) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("D = {d} outside the supported range {D_MIN}..={D_MAX}")))
    }
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("expected LO:HI, got {s:?}"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo = lo.trim().parse().map_err(|_| bad())?;
    let hi = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    check_d(lo)?;
    check_d(hi)?;
    Ok((lo, hi))
}

fn run_var_opt(a: &VarOptArgs) -> Result<()> {
    let mut w = output(a.out.as_deref())?;
    if a.build_table {
        let path = a.out.clone().unwrap_or_else(|| PathBuf::from("boundary_table.csv"));
        drop(w);
        let table = BoundaryTable::build()?;
        table.save(&path)?;
        let meta = serde_json::json!({
            "generator_version": TABLE_GENERATOR_VERSION,
            "entries": table.len(),
            "d_min": D_MIN,
            "d_max": D_MAX,
            "quadrature_tolerance": varopt::QUADRATURE_TOL,
        });
        std::fs::write(path.with_extension("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        eprintln!("wrote {} entries to {}", table.len(), path.display());
        return Ok(());
    }
    let d = a
        .d
        .ok_or_else(|| Error::InvalidArgument("pass --d <D> or --build-table".into()))?;
    check_d(d)?;
    if let Some(steps) = a.grid {
        let dist = ClippedNormal::new(2, d as f64)?;
        writeln!(w, "alpha,beta,expected_variance")?;
        for (al, be, ev) in varopt::expected_variance_grid(&dist, steps.max(2))? {
            writeln!(w, "{al},{be},{ev}")?;
        }
    } else if let Some(range) = &a.reduction {
        let (lo, hi) = parse_range(range)?;
        let dist = ClippedNormal::new(2, d as f64)?;
        let values = dist.sample(a.samples, &mut SeededRng::new(a.seed));
        let candidates: Vec<usize> = (lo..=hi).collect();
        let curve = varopt::variance_reduction_curve(&values, BoundaryTable::builtin(), &candidates, a.draws, a.seed.wrapping_add(1))?;
        writeln!(w, "table_d,variance_reduction")?;
        for (cd, r) in curve {
            writeln!(w, "{cd},{r}")?;
        }
    } else {
        let entry: TableEntry = if a.fresh {
            varopt::optimize_entry(d)?
        } else {
            *BoundaryTable::builtin().lookup(d)?
        };
        writeln!(w, "{}", varopt::TABLE_HEADER)?;
        writeln!(w, "{},{},{},{}", entry.d, entry.alpha, entry.beta, entry.expected_variance)?;
    }
    w.flush()?;
    Ok(())
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let mut w = output(a.out.as_deref())?;
    if a.memory {
        let bits = *a.bits.first().ok_or_else(|| Error::InvalidArgument("--bits is empty".into()))?;
        let grouping = match a.g_over_r {
            None => Grouping::PerRow,
            Some(k) => Grouping::Block(k * a.cols),
        };
        let scheme = QuantScheme::new(bits, grouping, Boundaries::Uniform)?;
        let report = memory_report(a.rows, a.cols, &scheme);
        writeln!(w, "{}", serde_json::to_string(&exp::MemoryJson::new(a.rows, a.cols, &scheme, &report))?)?;
    } else {
        let cfg = exp::BenchConfig {
            rows: a.rows,
            cols: a.cols,
            bits: a.bits.clone(),
            groups: a.groups.clone(),
            reps: a.reps,
            seed: a.seed,
        };
        exp::write_bench_csv(&exp::bench_quant(&cfg)?, &mut w)?;
    }
    w.flush()?;
    Ok(())
}

fn run_gen_synth(a: &GenSynthArgs) -> Result<()> {
    let ds = generate_sbm(&SbmConfig {
        nodes: a.nodes,
        features: a.features,
        seed: a.seed,
        ..SbmConfig::default()
    })?;
    write_graph_dir(&ds, &a.out)
}

/// Runs one parsed command.
pub fn execute(cli: &Cli) -> Result<()> {
    exp::init_threads()?;
    match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Sweep(a) => run_sweep(a),
        Command::FitDist(a) => run_fit_dist(a),
        Command::VarOpt(a) => run_var_opt(a),
        Command::BenchQuant(a) => run_bench(a),
        Command::GenSynth(a) => run_gen_synth(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    execute(&cli)
}
