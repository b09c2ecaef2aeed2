//! `traceformer` — train and evaluate next-activity models on process
//! traces, with sinusoidal or graph-spectral positional encoding.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::RunConfig;
use traceformer::checkpoint::{load_checkpoint, save_checkpoint};
use traceformer::error::{Error, Result};
use traceformer::evaluation::{
    accuracy_at_k, aggregate_runs, write_results_csv, write_summary_table_csv, MethodResult,
};
use traceformer::event_log::{
    dataset_stats, encode_trace, fitting_length, parse_event_log, write_event_log_csv,
    EncodedTrace, Trace, Vocabulary,
};
use traceformer::model::ModelConfig;
use traceformer::ontology::{
    build_laplacian, node_embeddings, parse_ontology, NodeEmbeddingTable, OntologyGraph,
};
use traceformer::pos_encoding::{resolve_spe_inputs, PeMode};
use traceformer::synthgen::{gen_ontology, gen_traces};
use traceformer::tensor::Tensor;
use traceformer::training::{random_search, run_many, write_trials_csv, SearchSpace, SpeSource};

#[derive(Parser)]
#[command(
    name = "traceformer",
    about = "Next-activity prediction on process traces with a decoder-only transformer",
    version
)]
struct Cli {
    /// Flat JSON config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base random seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (created if absent)
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ontology and event log, then print its stats
    Synth {
        /// Number of traces to generate
        #[arg(long)]
        n_traces: Option<usize>,
    },
    /// Print trace-length statistics of an event log
    Stats {
        /// Event log CSV
        #[arg(long)]
        log: PathBuf,
    },
    /// Run seeded training fits; write per-fit metrics, aggregates and the
    /// best checkpoint
    Train {
        /// Event log CSV
        #[arg(long)]
        log: PathBuf,
        /// Ontology JSON (required for --pe spe)
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Positional encoding: none | sin | spe
        #[arg(long)]
        pe: Option<String>,
        /// Number of independent fits
        #[arg(long)]
        fits: Option<usize>,
        /// Max training epochs per fit
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on an event log
    Eval {
        /// Checkpoint directory written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
        /// Event log CSV
        #[arg(long)]
        log: PathBuf,
    },
    /// Random hyperparameter search; writes the trial log and the best
    /// config as a reusable config file
    Tune {
        /// Event log CSV
        #[arg(long)]
        log: PathBuf,
        /// Ontology JSON (required for --pe spe)
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Positional encoding: none | sin | spe
        #[arg(long)]
        pe: Option<String>,
        /// Number of trials
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Factorize an ontology graph and dump spectral node embeddings as CSV
    EncodeGraph {
        /// Ontology JSON
        #[arg(long)]
        ontology: PathBuf,
        /// Embedding dimension
        #[arg(long)]
        k: Option<usize>,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Param(_) => 1,
        Error::Diverged { .. } | Error::Eigen(_) => 3,
        _ => 2,
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut flags = RunConfig {
        seed: cli.seed,
        ..RunConfig::default()
    };
    match &cli.command {
        Command::Synth { n_traces } => flags.n_traces = *n_traces,
        Command::Train {
            pe, fits, epochs, ..
        } => {
            flags.pe = pe.clone();
            flags.n_fits = *fits;
            flags.epochs = *epochs;
        }
        Command::Tune { pe, budget, .. } => {
            flags.pe = pe.clone();
            flags.budget = *budget;
        }
        Command::EncodeGraph { k, .. } => flags.spe_k = *k,
        Command::Stats { .. } | Command::Eval { .. } => {}
    }
    let merged = file.overlaid(flags);
    fs::create_dir_all(&cli.out)?;

    match &cli.command {
        Command::Synth { .. } => cmd_synth(&merged, &cli.out),
        Command::Stats { log } => cmd_stats(&merged, log),
        Command::Train { log, ontology, .. } => {
            cmd_train(&merged, log, ontology.as_deref(), &cli.out)
        }
        Command::Eval { checkpoint, log } => cmd_eval(&merged, checkpoint, log, &cli.out),
        Command::Tune { log, ontology, .. } => {
            cmd_tune(&merged, log, ontology.as_deref(), &cli.out)
        }
        Command::EncodeGraph { ontology, .. } => cmd_encode_graph(&merged, ontology, &cli.out),
    }
}

fn print_stats(stats: &traceformer::event_log::LengthStats) {
    println!("traces:              {}", stats.traces);
    println!("distinct activities: {}", stats.distinct_activities);
    println!("length mean:         {:.2}", stats.mean);
    println!("length std:          {:.2}", stats.std);
    println!("length min:          {}", stats.min);
    println!("length max:          {}", stats.max);
}

fn cmd_synth(config: &RunConfig, out: &Path) -> Result<()> {
    let synth = config.synth_config()?;
    let graph = gen_ontology(&synth)?;
    let traces = gen_traces(&synth, &graph)?;

    let ontology_path = out.join("ontology.json");
    let mut buf = Vec::new();
    graph.to_json_writer(&mut buf)?;
    fs::write(&ontology_path, buf)?;

    let log_path = out.join("log.csv");
    let mut buf = Vec::new();
    write_event_log_csv(&traces, &config.csv_format(), &mut buf)?;
    fs::write(&log_path, buf)?;

    println!("wrote {}", ontology_path.display());
    println!("wrote {}", log_path.display());
    println!(
        "ontology: {} nodes, {} edges",
        graph.node_count(),
        graph.edge_count()
    );
    print_stats(&dataset_stats(&traces)?);
    Ok(())
}

fn cmd_stats(config: &RunConfig, log: &Path) -> Result<()> {
    let traces = parse_event_log(log, &config.csv_format())?;
    print_stats(&dataset_stats(&traces)?);
    Ok(())
}

/// Load the ontology and cut spectral embeddings for the vocabulary.
fn spe_pipeline(
    ontology: Option<&Path>,
    vocab: &Vocabulary,
    spe_k: usize,
) -> Result<(NodeEmbeddingTable, Tensor<f32>, OntologyGraph)> {
    let path = ontology.ok_or_else(|| Error::Param("--pe spe needs --ontology <file>".into()))?;
    let graph = parse_ontology(path)?;
    let factorization = build_laplacian(&graph)?;
    let table = node_embeddings(&factorization, &graph, spe_k)?;
    let inputs = resolve_spe_inputs::<f32>(&table, vocab);
    Ok((table, inputs, graph))
}

fn encode_all(traces: &[Trace], vocab: &Vocabulary) -> Result<Vec<EncodedTrace>> {
    let l_max = fitting_length(traces);
    traces
        .iter()
        .map(|t| encode_trace(t, vocab, l_max))
        .collect()
}

fn cmd_train(config: &RunConfig, log: &Path, ontology: Option<&Path>, out: &Path) -> Result<()> {
    let traces = parse_event_log(log, &config.csv_format())?;
    let vocab = Vocabulary::build(&traces);
    let encoded = encode_all(&traces, &vocab)?;

    let model_config: ModelConfig = config.model_config(vocab.size())?;
    let train_config = config.train_config()?;
    let n_fits = config.n_fits();
    let seed = config.seed();

    let (spe_table, spe_inputs) = if model_config.pe.mode == PeMode::Structural {
        let (table, inputs, _) = spe_pipeline(ontology, &vocab, model_config.pe.spe_k)?;
        (Some(table), Some(inputs))
    } else {
        (None, None)
    };

    println!(
        "training pe={} d_model={} on {} traces ({} fits, seed {seed})",
        model_config.pe.mode.as_str(),
        model_config.d_model,
        encoded.len(),
        n_fits
    );

    let (summary, best_params) = run_many(
        &encoded,
        n_fits,
        seed,
        &model_config,
        &train_config,
        spe_inputs.as_ref(),
    )?;

    for fit in &summary.fits {
        let path = out.join(format!("metrics_fit{}.json", fit.fit_index));
        fs::write(&path, format!("{}\n", fit.to_metrics_json()))?;
    }

    let aggregate = aggregate_runs(&summary.reports)?;
    let result = MethodResult {
        method: model_config.pe.mode.as_str().to_string(),
        model_size: model_config.d_model,
        aggregate,
    };
    let mut buf = Vec::new();
    write_summary_table_csv(std::slice::from_ref(&result), &mut buf)?;
    fs::write(out.join("aggregate.csv"), buf)?;
    let mut buf = Vec::new();
    write_results_csv(std::slice::from_ref(&result), &mut buf)?;
    fs::write(out.join("results.csv"), buf)?;

    let checkpoint_dir = out.join("checkpoint");
    save_checkpoint(&checkpoint_dir, &best_params, &vocab, spe_table.as_ref())?;

    for (k, mean) in &summary.mean {
        println!("acc@{k}: {:.4} ± {:.4}", mean, summary.std[k]);
    }
    println!(
        "best fit: {} (val loss {:.4}); checkpoint at {}",
        summary.best_fit,
        summary.fits[summary.best_fit].best_val_loss,
        checkpoint_dir.display()
    );
    Ok(())
}

fn cmd_eval(config: &RunConfig, checkpoint: &Path, log: &Path, out: &Path) -> Result<()> {
    let loaded = load_checkpoint(checkpoint)?;
    let traces = parse_event_log(log, &config.csv_format())?;
    let encoded = encode_all(&traces, &loaded.vocab)?;

    let report = accuracy_at_k(&loaded.params, &encoded, &[1, 3, 5])?;
    let aggregate = aggregate_runs(std::slice::from_ref(&report))?;
    let result = MethodResult {
        method: loaded.params.config.pe.mode.as_str().to_string(),
        model_size: loaded.params.config.d_model,
        aggregate,
    };
    let mut buf = Vec::new();
    write_results_csv(std::slice::from_ref(&result), &mut buf)?;
    fs::write(out.join("eval.csv"), buf)?;

    let mut prefix_csv = String::from("prefix_len,acc1\n");
    for (len, acc) in &report.per_prefix_acc1 {
        prefix_csv.push_str(&format!("{len},{acc:.6}\n"));
    }
    fs::write(out.join("eval_by_prefix.csv"), prefix_csv)?;

    println!("positions evaluated: {}", report.valid_positions);
    for (k, acc) in &report.per_k {
        println!("acc@{k}: {acc:.4}");
    }
    println!("wrote {}", out.join("eval.csv").display());
    Ok(())
}

fn cmd_tune(config: &RunConfig, log: &Path, ontology: Option<&Path>, out: &Path) -> Result<()> {
    let traces = parse_event_log(log, &config.csv_format())?;
    let vocab = Vocabulary::build(&traces);
    let encoded = encode_all(&traces, &vocab)?;
    let pe_mode = config.pe_mode()?;
    let budget = config.budget.unwrap_or(20);
    let seed = config.seed();
    let train_template = config.train_config()?;

    let spe_parts = if pe_mode == PeMode::Structural {
        let path =
            ontology.ok_or_else(|| Error::Param("--pe spe needs --ontology <file>".into()))?;
        let graph = parse_ontology(path)?;
        let factorization = build_laplacian(&graph)?;
        Some((graph, factorization))
    } else {
        None
    };
    let spe_source = spe_parts.as_ref().map(|(graph, factorization)| SpeSource {
        factorization,
        graph,
        vocab: &vocab,
    });

    println!(
        "tuning pe={} over {budget} trials (seed {seed})",
        pe_mode.as_str()
    );
    let outcome = random_search(
        &encoded,
        vocab.size(),
        pe_mode,
        spe_source.as_ref(),
        &SearchSpace::default(),
        budget,
        seed,
        &train_template,
    )?;

    let mut buf = Vec::new();
    write_trials_csv(&outcome.trials, &mut buf)?;
    fs::write(out.join("trials.csv"), buf)?;

    let best = RunConfig {
        seed: Some(seed),
        d_model: Some(outcome.best_model.d_model),
        hidden: Some(outcome.best_model.hidden),
        heads: Some(outcome.best_model.heads),
        layers: Some(outcome.best_model.layers),
        dropout: Some(outcome.best_model.dropout),
        pe: Some(pe_mode.as_str().to_string()),
        spe_k: Some(outcome.best_model.pe.spe_k),
        lr: Some(outcome.best_train.lr),
        gamma: Some(outcome.best_train.gamma),
        ..RunConfig::default()
    };
    let best_path = out.join("best_config.json");
    fs::write(
        &best_path,
        format!("{}\n", serde_json::to_string_pretty(&best)?),
    )?;

    let best_trial = &outcome.trials[outcome.best_trial];
    println!(
        "best trial {}: val_loss {:.4} (emb {}, hidden {}, heads {}, layers {})",
        best_trial.trial,
        best_trial.val_loss,
        best_trial.emb,
        best_trial.hidden,
        best_trial.heads,
        best_trial.layers
    );
    println!("wrote {}", best_path.display());
    Ok(())
}

fn cmd_encode_graph(config: &RunConfig, ontology: &Path, out: &Path) -> Result<()> {
    let k = config.spe_k.unwrap_or(8);
    let graph = parse_ontology(ontology)?;
    let factorization = build_laplacian(&graph)?;
    let table = node_embeddings(&factorization, &graph, k)?;

    let path = out.join("embeddings.csv");
    let mut buf = Vec::new();
    table.to_csv_writer(&mut buf)?;
    fs::write(&path, buf)?;
    println!(
        "wrote {} ({} nodes, k = {k})",
        path.display(),
        graph.node_count()
    );
    Ok(())
}
