use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use triggerbench::costmodel::{predict, Preset, DEFAULT_EPSILON};
use triggerbench::harness::{
    analytics_count_base, default_blocks, distribution_base, emit_report, read_grid_csv, recommend,
    recommendation_table, render_series_table, render_table_text, run_analytics_count_experiment,
    run_distribution_experiment, run_mode, run_sweep_with, summarize_records, write_series_csv, write_sweep_csv,
    Distribution, Mode, PoolMode, ReportFormat, SweepSpec, WorkloadSpec, MIB,
};
use triggerbench::orchestrator::{run_pattern, EventLog, TriggerPattern};

#[derive(Parser)]
#[command(name = "triggerbench", version, about = "Benchmark data-driven task trigger patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload and write its run records and event logs.
    Run(WorkloadArgs),
    /// Sweep qualified percentage by data size and emit the grid reports.
    Sweep(WorkloadArgs),
    /// Makespan per pattern as the number of analytics kinds grows.
    AnalyticsCount {
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Comma-separated instance counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3, 4, 5, 6])]
        k_values: Vec<u32>,
    },
    /// Makespan per pattern with the qualified steps packed into blocks.
    Distribution(WorkloadArgs),
    /// Predict makespans with the event simulator and recommend a pattern.
    Predict(WorkloadArgs),
    /// Render grid CSVs as reports, or the recommendation table.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct WorkloadArgs {
    /// JSON workload file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// p, c, m or all.
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    size_mb: Option<u64>,
    /// Percentage of qualified steps, 0 to 100.
    #[arg(long)]
    qualified_pct: Option<f64>,
    /// even or block:<first>-<last>.
    #[arg(long)]
    distribution: Option<Distribution>,
    #[arg(long)]
    instances: Option<u32>,
    #[arg(long)]
    pool: Option<usize>,
    /// a or b.
    #[arg(long)]
    preset: Option<Preset>,
    /// Use proportional slowdown instead of queueing for oversubscribed pools.
    #[arg(long)]
    slowdown: bool,
    /// live, predict or both.
    #[arg(long, default_value = "live")]
    mode: Mode,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u32>,
}

#[derive(Args)]
struct ReportArgs {
    /// Grid CSV files written by `sweep`.
    #[arg(required = true)]
    grids: Vec<PathBuf>,
    /// csv, svg-heatmap, text-table, or table for the recommendation table
    /// (one grid per preset, A first).
    #[arg(long, default_value = "text-table")]
    format: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

fn parse_patterns(s: &str) -> Result<Vec<TriggerPattern>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(TriggerPattern::ALL.to_vec());
    }
    s.split(',')
        .map(|p| p.trim().to_ascii_uppercase().parse().map_err(anyhow::Error::from))
        .collect()
}

impl WorkloadArgs {
    fn spec(&self, base: WorkloadSpec) -> Result<WorkloadSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                WorkloadSpec::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => base,
        };
        if let Some(p) = &self.pattern {
            spec.patterns = parse_patterns(p)?;
        }
        if let Some(v) = self.steps {
            spec.steps = v;
        }
        if let Some(v) = self.size_mb {
            spec.size_bytes = v * MIB;
        }
        if let Some(v) = self.qualified_pct {
            spec.qualified_pct = v;
        }
        if let Some(v) = self.distribution {
            spec.distribution = v;
        }
        if let Some(v) = self.instances {
            spec.instances = v;
        }
        if self.pool.is_some() {
            spec.pool = self.pool;
        }
        if let Some(v) = self.preset {
            spec.preset = v;
        }
        if self.slowdown {
            spec.pool_mode = PoolMode::Slowdown;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.reps {
            spec.reps = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn modes(&self) -> Vec<Mode> {
        match self.mode {
            Mode::Both => vec![Mode::Live, Mode::Predict],
            m => vec![m],
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn cmd_run(args: &WorkloadArgs) -> Result<()> {
    let spec = args.spec(WorkloadSpec::default())?;
    for mode in args.modes() {
        let records = run_mode(&spec, mode)?;
        write_sweep_csv(&records, create(&args.out, &format!("runs-{mode}.csv"))?)?;
        println!("{mode}:\n{}", summarize_records(&records));
    }
    // one event log per pattern from a final traced run
    let plan = spec.plan()?;
    let mut logs: Vec<EventLog> = Vec::new();
    for &pattern in &spec.patterns {
        if args.mode.includes(Mode::Live) {
            logs.push(run_pattern(pattern, &plan, &spec.source, &format!("live-{pattern}"))?.log);
        }
        if args.mode.includes(Mode::Predict) {
            logs.push(predict(&plan, pattern)?.to_log(&pattern.to_string()));
        }
    }
    let refs: Vec<&EventLog> = logs.iter().collect();
    EventLog::write_csv(&refs, create(&args.out, "events.csv")?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_sweep(args: &WorkloadArgs) -> Result<()> {
    let spec = args.spec(WorkloadSpec::default())?;
    let sweep = SweepSpec::default_grid(spec);
    for mode in args.modes() {
        let dir = args.out.join(mode.to_string());
        let result = run_sweep_with(&sweep, mode, |done, total| eprintln!("[{mode}] cell {done}/{total}"))?;
        for f in &result.failures {
            eprintln!(
                "cell q={}% S={} B failed: {}",
                f.qualified_pct, f.size_bytes, f.diagnostic
            );
        }
        write_sweep_csv(&result.records, create(&dir, "sweep.csv")?)?;
        for format in [ReportFormat::Csv, ReportFormat::SvgHeatmap, ReportFormat::TextTable] {
            emit_report(&result.grid, format, &dir)?;
        }
        print!("{}", triggerbench::harness::render_text_table(&result.grid)?);
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_series(args: &WorkloadArgs, name: &str, run: impl Fn(&WorkloadSpec, Mode) -> triggerbench::Result<Vec<triggerbench::harness::SeriesPoint>>, base: WorkloadSpec) -> Result<()> {
    let spec = args.spec(base)?;
    for mode in args.modes() {
        let series = run(&spec, mode)?;
        write_series_csv(&series, create(&args.out, &format!("{name}-{mode}.csv"))?)?;
        println!("{mode}:\n{}", render_series_table(&series)?);
    }
    Ok(())
}

fn cmd_predict(args: &WorkloadArgs) -> Result<()> {
    let spec = args.spec(WorkloadSpec::default())?;
    let rec = recommend(&spec, DEFAULT_EPSILON)?;
    for (pattern, ms) in &rec.ranking {
        let bytes = predict(&spec.plan()?, *pattern)?.bytes_transferred;
        println!("{pattern}: {ms:.1} ms, {bytes} bytes");
    }
    println!("recommendation: {} (spread {:.1}%)", rec.label, rec.spread * 100.0);
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let grids = args
        .grids
        .iter()
        .map(|p| {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_grid_csv(f).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    if args.format == "table" {
        let names: Vec<&str> = Preset::ALL.iter().map(|p| p.as_str()).take(grids.len()).collect();
        if names.len() != grids.len() {
            bail!("the recommendation table takes at most {} grids", Preset::ALL.len());
        }
        let refs: Vec<_> = grids.iter().collect();
        print!("{}", render_table_text(&recommendation_table(&refs, args.epsilon)?, &names));
        return Ok(());
    }
    let format: ReportFormat = args.format.parse()?;
    for (grid, src) in grids.iter().zip(&args.grids) {
        let stem = src.file_stem().map_or("grid".into(), |s| s.to_string_lossy().into_owned());
        let path = emit_report(grid, format, &args.out.join(stem))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::AnalyticsCount { workload, k_values } => cmd_series(
            &workload,
            "analytics-count",
            |spec, mode| run_analytics_count_experiment(spec, &k_values, mode),
            analytics_count_base(),
        ),
        Command::Distribution(a) => cmd_series(
            &a,
            "distribution",
            |spec, mode| run_distribution_experiment(spec, &default_blocks(), mode),
            distribution_base(),
        ),
        Command::Predict(a) => cmd_predict(&a),
        Command::Report(a) => cmd_report(&a),
    }
}
