use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use factlab::harness::charts::{percentile_chart, trace_charts};
use factlab::harness::experiments::{derive_seed, pretrain_budgets, run_id, trace_records};
use factlab::harness::report::{percentile_csv, read_csv_file, trace_csv, verdict_lines, write_bytes, CsvTable, PercentileRow};
use factlab::knowledge::write_dataset;
use factlab::{
    build_kb, downstream_datasets, evaluate, finetune, Error, Experiment, Format, KnowledgeBase, ModelParams, RunConfig,
    SplitSpec, SplitStrategy,
};

#[derive(Parser)]
#[command(name = "factlab", version, about = "One-layer transformer fact salience and attention imbalance lab")]
struct Cli {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Top,
    Bottom,
    Random,
    Whole,
}

impl From<Strategy> for SplitStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Top => SplitStrategy::Top,
            Strategy::Bottom => SplitStrategy::Bottom,
            Strategy::Random => SplitStrategy::Random,
            Strategy::Whole => SplitStrategy::Whole,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the knowledge base, pretraining stream and finetuning splits.
    Gen,
    /// Pretrain one model per seed and save parameters and traces.
    Pretrain,
    /// Finetune a saved model on one popularity split.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "top")]
        strategy: Strategy,
    },
    /// Per-percentile accuracy of a saved model on the held-out subjects.
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the full theorem suite; exits 3 if any check fails.
    Verify,
    /// Run one experiment grid.
    Sweep {
        #[arg(long)]
        experiment: Experiment,
    },
    /// Render SVG charts from a percentile or trace CSV.
    Plot { csv: PathBuf },
}

fn load_config(path: Option<&Path>, experiment: Option<Experiment>, seed: Option<u64>) -> factlab::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config {
                key: "<document>".into(),
                message: format!("cannot read {}: {e}", p.display()),
            })?;
            RunConfig::from_json(&text, experiment)?
        }
        None => RunConfig::defaults_for(experiment.unwrap_or(Experiment::E1)),
    };
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn knowledge_base(cfg: &RunConfig, seed: u64) -> factlab::Result<KnowledgeBase> {
    Ok(build_kb(cfg.vocab.build()?, derive_seed(seed, "kb")))
}

fn read_model(path: &Path) -> anyhow::Result<ModelParams> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(ModelParams::read_from(std::io::BufReader::new(f))?)
}

fn write_model(path: &Path, p: &ModelParams) -> anyhow::Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(f);
    p.write_to(&mut w)?;
    Ok(())
}

fn write_examples(path: &Path, kb: &KnowledgeBase, format: Format, examples: &[factlab::Example]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, kb.vocab(), format, examples)?;
    write_bytes(path, &buf)?;
    Ok(())
}

fn gen(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    for &seed in &cfg.seeds {
        let kb = knowledge_base(cfg, seed)?;
        write_examples(&out.join(format!("seed{seed}_facts.tsv")), &kb, Format::Pre, &kb.pretrain_examples())?;
        let stream = factlab::pretrain_stream(&kb, cfg.zipf_alpha, cfg.train.pretrain_steps, derive_seed(seed, "stream"))?;
        write_examples(&out.join(format!("seed{seed}_stream.tsv")), &kb, Format::Pre, &stream)?;
        for &strategy in &cfg.strategies {
            let spec = SplitSpec { strategy, ..cfg.split };
            let data = downstream_datasets(&kb, cfg.zipf_alpha, &spec, derive_seed(seed, "split"))?;
            let tag = strategy.label().to_ascii_lowercase();
            write_examples(&out.join(format!("seed{seed}_{tag}_ft.tsv")), &kb, Format::Down, &data.ft)?;
            write_examples(&out.join(format!("seed{seed}_{tag}_eval.tsv")), &kb, Format::Down, &data.eval)?;
        }
        println!("seed {seed}: {} facts, {} stream examples", kb.pretrain_examples().len(), stream.len());
    }
    Ok(())
}

fn pretrain_cmd(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    for &seed in &cfg.seeds {
        let kb = knowledge_base(cfg, seed)?;
        let steps = cfg.train.pretrain_steps;
        let pre = pretrain_budgets(&kb, cfg.zipf_alpha, &cfg.train, seed, &[steps])?.remove(0);
        let id = run_id(cfg.experiment, cfg.zipf_alpha, steps, "pretrain");
        write_model(&out.join(format!("seed{seed}_pretrain.params")), &pre.params)?;
        write_bytes(
            &out.join(format!("seed{seed}_pretrain_traces.csv")),
            &trace_csv(&trace_records(&id, seed, &pre.trace))?,
        )?;
        println!(
            "seed {seed}: pretrain accuracy {:.4} after {steps} steps, c_v_max {:.3}, c_kq_max {:.3}",
            pre.accuracy, pre.c_v_max, pre.c_kq_max
        );
    }
    Ok(())
}

fn finetune_cmd(cfg: &RunConfig, out: &Path, model: &Path, strategy: SplitStrategy) -> anyhow::Result<()> {
    let params = read_model(model)?;
    for &seed in &cfg.seeds {
        let kb = knowledge_base(cfg, seed)?;
        if params.side() != kb.vocab().total() {
            bail!("model side {} does not match vocabulary size {}", params.side(), kb.vocab().total());
        }
        let spec = SplitSpec { strategy, ..cfg.split };
        let data = downstream_datasets(&kb, cfg.zipf_alpha, &spec, derive_seed(seed, "split"))?;
        let ft = finetune(params.clone(), &data.ft, &data.eval, &cfg.train, derive_seed(seed, "finetune"))?;
        let tag = strategy.label().to_ascii_lowercase();
        let id = run_id(cfg.experiment, cfg.zipf_alpha, cfg.train.pretrain_steps, strategy.label());
        write_model(&out.join(format!("seed{seed}_{tag}.params")), &ft.params)?;
        write_bytes(&out.join(format!("seed{seed}_{tag}_traces.csv")), &trace_csv(&trace_records(&id, seed, &ft.trace))?)?;
        let last = ft.trace.last().expect("finetune trace is never empty");
        println!(
            "seed {seed}: {} eval accuracy {:.4}, relation attention {:.4}",
            strategy.label(),
            last.eval_acc,
            last.mean_relation_att
        );
    }
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, out: &Path, model: &Path) -> anyhow::Result<()> {
    let params = read_model(model)?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let kb = knowledge_base(cfg, seed)?;
        let pre_acc = params.accuracy(&kb.pretrain_examples())?;
        let data = downstream_datasets(&kb, cfg.zipf_alpha, &cfg.split, derive_seed(seed, "split"))?;
        let curve = evaluate(&params, &data.eval, &data.popularity_rank)?;
        let label = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        rows.extend(curve.points.iter().map(|p| PercentileRow {
            run_id: format!("eval/{label}"),
            seed,
            experiment: cfg.experiment.to_string(),
            alpha: cfg.zipf_alpha,
            pretrain_steps: cfg.train.pretrain_steps,
            strategy: label.to_string(),
            percentile: p.percentile,
            accuracy: p.accuracy,
        }));
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "seed {seed}: pretrain-format accuracy {pre_acc:.4}, held-out downstream accuracy {} (top 5% {}, top 10% {})",
            fmt(curve.overall),
            fmt(curve.at(5)),
            fmt(curve.at(10))
        );
    }
    write_bytes(&out.join("eval_percentiles.csv"), &percentile_csv(&rows)?)?;
    Ok(())
}

fn verify_cmd(cfg: &RunConfig, out: &Path) -> anyhow::Result<bool> {
    let mut report = factlab::harness::verify_suite(cfg)?;
    report.write(out)?;
    print!("{}", verdict_lines(&report.verdicts));
    let failed: Vec<&str> = report.verdicts.iter().filter(|v| !v.passed()).map(|v| v.name.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("theorem checks failed: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}

fn sweep_cmd(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let mut report = factlab::harness::run(cfg)?;
    report.write(out)?;
    for f in &report.files {
        println!("{}", out.join(f).display());
    }
    Ok(())
}

fn plot_cmd(csv: &Path, out: &Path) -> anyhow::Result<()> {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let charts = match read_csv_file(csv)? {
        CsvTable::Percentiles(rows) => vec![(format!("{stem}.svg"), percentile_chart("Accuracy by popularity percentile", &rows))],
        CsvTable::Traces(rows) => trace_charts(stem, &rows),
        CsvTable::Summary(_) => bail!("{} is a summary table; nothing to plot", csv.display()),
    };
    for (name, chart) in charts {
        let path = out.join(name);
        write_bytes(&path, chart.render().as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let experiment = match &cli.command {
        Command::Sweep { experiment } => Some(*experiment),
        Command::Verify => Some(Experiment::Verify),
        _ => None,
    };
    let cfg = match load_config(cli.config.as_deref(), experiment, cli.seed) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating {}", cli.out.display()))
        .and_then(|()| match &cli.command {
            Command::Gen => gen(&cfg, &cli.out).map(|()| true),
            Command::Pretrain => pretrain_cmd(&cfg, &cli.out).map(|()| true),
            Command::Finetune { model, strategy } => finetune_cmd(&cfg, &cli.out, model, (*strategy).into()).map(|()| true),
            Command::Eval { model } => eval_cmd(&cfg, &cli.out, model).map(|()| true),
            Command::Verify => verify_cmd(&cfg, &cli.out),
            Command::Sweep { .. } => sweep_cmd(&cfg, &cli.out).map(|()| true),
            Command::Plot { csv } => plot_cmd(csv, &cli.out).map(|()| true),
        });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
