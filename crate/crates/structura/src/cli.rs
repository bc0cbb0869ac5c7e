//! The `structura` command line.
//!
//! Exit codes: 0 on success, 1 for usage, configuration, manifest or label
//! errors, 2 when some pieces failed while the rest completed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use structura_core::align::{dtw_align, AlignParams};
use structura_core::chordify::chordify;
use structura_core::features::{pair_features_with, FeatureWeights};
use structura_core::metrics::Averaging;
use structura_core::tune::{evaluate_params, grid_search, Objective, TuneError};

use crate::config::{load_grid_config, load_run_config, GridConfigFile, RunConfig, RunConfigFile};
use crate::export::{
    alignment_json, chord_sequence_json, leaderboard_json, pair_features_json, params_json, score_report_json,
    write_json, write_leaderboard_csv,
};
use crate::manifest::{load_corpus, load_corpus_lenient};
use crate::pipeline::{cluster_corpus, evaluate_assignments, read_assignments};
use crate::synth::{generate_corpus, load_corpus_spec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "structura", version, about = "Cluster performances of a piece by structural realisation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AveragingArg {
    Macro,
    Micro,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align, cluster and export every piece of a corpus.
    Cluster {
        #[arg(long)]
        manifest: PathBuf,
        /// Run configuration (TOML, or JSON by extension).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Feature weights `cost,warp_opt,warp_mean,len`.
        #[arg(long, value_delimiter = ',', num_args = 4)]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Score stored cluster assignments against the manifest's labels.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding `assignment.csv` files, as written by `cluster`.
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "macro")]
        averaging: AveragingArg,
    },
    /// Grid-search parameters on the labelled, non-held-out pieces.
    Tune {
        #[arg(long)]
        manifest: PathBuf,
        /// Grid configuration; the default grid when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Render a synthetic labelled corpus to MIDI files and a manifest.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the alignment of one pair of transcriptions.
    Align {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        piece: String,
        #[arg(long, num_args = 2, value_names = ["ID1", "ID2"])]
        pair: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Also write both chord sequences to this file.
        #[arg(long)]
        chords: Option<PathBuf>,
    },
}

/// A failure that ends the command with exit code 1.
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

type CmdResult = Result<u8, Fatal>;

fn pool(threads: usize) -> Result<rayon::ThreadPool, Fatal> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

fn run_config(
    path: Option<&Path>,
    threads: Option<usize>,
    weights: Option<Vec<f64>>,
    method: Option<String>,
    threshold: Option<f64>,
    alpha: Option<f64>,
) -> Result<RunConfig, Fatal> {
    let mut file = match path {
        Some(p) => load_run_config(p)?,
        None => RunConfigFile::default(),
    };
    if let Some(t) = threads {
        file.threads = Some(t);
    }
    if let Some(w) = weights {
        let w: [f64; 4] = w.try_into().map_err(|_| Fatal("--weights takes four values".into()))?;
        FeatureWeights::from_array(w)?;
        file.features.weights = Some(w);
    }
    if method.is_some() {
        file.cluster.method = method;
    }
    if threshold.is_some() {
        file.cluster.threshold = threshold;
    }
    if alpha.is_some() {
        file.align.alpha = alpha;
    }
    Ok(file.resolve()?)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn cmd_cluster(config: RunConfig, manifest: &Path, out: &Path) -> CmdResult {
    let (corpus, load_failures) = load_corpus_lenient(manifest)?;
    for f in &load_failures {
        log::error!("piece `{}`: {}", f.piece_id, f.error);
    }
    let summary = pool(config.threads)?.install(|| cluster_corpus(&corpus, &config, out))?;
    let failed = summary.failures().count() + load_failures.len();
    if failed > 0 {
        log::error!("{failed} piece(s) failed");
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn cmd_evaluate(manifest: &Path, assignments: &Path, out: &Path, averaging: Averaging) -> CmdResult {
    let corpus = load_corpus(manifest)?;
    if corpus.labels().is_none() {
        return Err(Fatal("manifest has no group labels".into()));
    }
    let assigned = read_assignments(assignments)?;
    let evaluation = evaluate_assignments(&corpus, &assigned, averaging)?;
    let report = score_report_json(&evaluation);
    write_json(out, &report)?;
    print_json(&report);
    Ok(EXIT_OK)
}

fn cmd_tune(manifest: &Path, grid: Option<&Path>, out: &Path, threads: Option<usize>) -> CmdResult {
    let grid_file = match grid {
        Some(p) => load_grid_config(p)?,
        None => GridConfigFile::default(),
    };
    let (config, grid) = grid_file.resolve()?;
    let threads = threads.unwrap_or_else(crate::config::default_threads);
    if threads == 0 {
        return Err(Fatal("threads must be at least 1".into()));
    }
    let corpus = load_corpus(manifest)?;
    let (train, holdout) = corpus.split_holdout();
    for (id, ts) in corpus.pieces() {
        if ts.len() < 2 {
            log::warn!("piece `{id}` has {} transcription(s); left out", ts.len());
        }
    }
    let (train, holdout) = (train.clusterable(), holdout.clusterable());
    log::info!(
        "searching {} parameter sets on {} piece(s); {} held out",
        grid.len(),
        train.pieces().len(),
        holdout.pieces().len()
    );
    let partial = |e: TuneError| match e {
        TuneError::Piece { .. } => Ok(EXIT_PARTIAL),
        other => Err(Fatal(other.to_string())),
    };
    let result = match pool(threads)?.install(|| grid_search(&train, &config, &grid)) {
        Ok(r) => r,
        Err(e) => {
            log::error!("{e}");
            return partial(e);
        }
    };
    write_leaderboard_csv(&out.join("leaderboard.csv"), &result.leaderboard)?;
    write_json(&out.join("leaderboard.json"), &leaderboard_json(&result.leaderboard))?;

    let holdout_report = if holdout.pieces().is_empty() {
        None
    } else {
        match pool(threads)?.install(|| evaluate_params(&holdout, &config, &result.best_params)) {
            Ok(e) => {
                let report = score_report_json(&e);
                write_json(&out.join("holdout.json"), &report)?;
                Some(report)
            }
            Err(e) => {
                log::error!("held-out evaluation: {e}");
                return partial(e);
            }
        }
    };
    let best = &result.leaderboard[0];
    let summary = json!({
        "objective": match result.objective {
            Objective::Homogeneity => "homogeneity",
            Objective::Completeness => "completeness",
            Objective::VMeasure => "v_measure",
        },
        "best_score": result.best_score,
        "best_params": params_json(&result.best_params),
        "train": { "h": best.mean.homogeneity, "c": best.mean.completeness, "v": best.mean.v_measure },
        "holdout": holdout_report,
    });
    write_json(&out.join("best.json"), &summary)?;
    print_json(&summary);
    Ok(EXIT_OK)
}

fn cmd_synth(spec: &Path, out: &Path) -> CmdResult {
    let spec = load_corpus_spec(spec)?;
    let corpus = generate_corpus(&spec, out)?;
    log::info!(
        "wrote {} transcriptions of {} piece(s) to {}",
        corpus.num_transcriptions(),
        corpus.pieces().len(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_align(config: RunConfig, manifest: &Path, piece: &str, pair: &[String], out: &Path, chords: Option<&Path>) -> CmdResult {
    let corpus = load_corpus(manifest)?;
    let transcriptions = corpus
        .piece(piece)
        .ok_or_else(|| Fatal(format!("piece `{piece}` is not in the manifest")))?;
    let find = |id: &str| {
        transcriptions
            .iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Fatal(format!("transcription `{id}` is not part of piece `{piece}`")))
    };
    let (ti, tj) = (find(&pair[0])?, find(&pair[1])?);
    let (ci, cj) = (chordify(ti, &config.pipeline.chordify), chordify(tj, &config.pipeline.chordify));
    let params = AlignParams::new(config.params.alpha)?.with_max_cells(config.pipeline.max_cells);
    let alignment = dtw_align(&ci.chords, &cj.chords, &params)?;
    if alignment.path.is_none() {
        log::warn!("alignment exceeds the cell budget; path omitted");
    }
    let mut dump = alignment_json(ti.id(), tj.id(), &alignment);
    if let Ok(f) = pair_features_with(&alignment, config.pipeline.cost_norm) {
        dump["features"] = pair_features_json(&f);
    }
    write_json(out, &dump)?;
    if let Some(path) = chords {
        write_json(path, &json!([chord_sequence_json(&ci), chord_sequence_json(&cj)]))?;
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Cluster {
            manifest,
            config,
            out,
            threads,
            weights,
            method,
            threshold,
            alpha,
        } => {
            let config = run_config(config.as_deref(), threads, weights, method, threshold, alpha)?;
            cmd_cluster(config, &manifest, &out)
        }
        Command::Evaluate {
            manifest,
            assignments,
            out,
            averaging,
        } => {
            let averaging = match averaging {
                AveragingArg::Macro => Averaging::Macro,
                AveragingArg::Micro => Averaging::Micro,
            };
            cmd_evaluate(&manifest, &assignments, &out, averaging)
        }
        Command::Tune {
            manifest,
            grid,
            out,
            threads,
        } => cmd_tune(&manifest, grid.as_deref(), &out, threads),
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Align {
            manifest,
            piece,
            pair,
            out,
            config,
            alpha,
            chords,
        } => {
            let config = run_config(config.as_deref(), Some(1), None, None, None, alpha)?;
            cmd_align(config, &manifest, &piece, &pair, &out, chords.as_deref())
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Fatal(msg)) => {
            log::error!("{msg}");
            EXIT_USAGE
        }
    }
}
