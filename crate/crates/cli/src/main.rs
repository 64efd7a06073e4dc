//! Command-line surface: `preprocess`, `train`, `evaluate`, `predict` and
//! `adapt`, with a TOML configuration file, flag overrides and stable exit
//! codes (0 success, 1 validation error, 2 I/O error, 3 incompatibility).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use marlids_core::persist::{self, DatasetContainer};
use marlids_core::{data, eval, Dataset, Error, MarlEnsemble, Result, RunConfig};

#[derive(Parser)]
#[command(name = "marlids", version, about = "Multi-agent DQN network intrusion detection")]
struct Cli {
    /// TOML configuration file; flags override file values.
    #[arg(long, global = true, env = "MARLIDS_CONFIG")]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = automatic).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load labeled flow files, clean, downsample benign, split and
    /// z-score; writes train/test containers plus a counts summary.
    Preprocess {
        /// Input flow files (delimiter-separated with a Label column).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory for train.container / test.container / summary.txt.
        #[arg(long)]
        out: PathBuf,
        /// Reuse the z-score parameters of an existing container instead of
        /// fitting new ones (for data that feeds an existing model).
        #[arg(long)]
        normalization_from: Option<PathBuf>,
        /// Skip the train/test split and write a single all.container.
        #[arg(long)]
        no_split: bool,
    },
    /// Train the two-level ensemble on a preprocessed train container.
    Train {
        /// Train container from `preprocess`.
        #[arg(long)]
        data: PathBuf,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
        /// Training log path (defaults to <out>.log).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Episode count override.
        #[arg(long)]
        episodes: Option<u32>,
    },
    /// Evaluate a model on a test container; writes report files.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory for report.txt / report.json / roc.csv / confusion.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify raw flow records (CSV file or a single inline record).
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV file with a header row; a Label column, if present, is ignored.
        #[arg(long, conflicts_with = "record")]
        input: Option<PathBuf>,
        /// One comma-separated feature vector.
        #[arg(long)]
        record: Option<String>,
        /// Output file (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain only the affected agents (plus the decider) on new data.
    Adapt {
        #[arg(long)]
        model: PathBuf,
        /// The container the model was originally trained on.
        #[arg(long)]
        train: PathBuf,
        /// Container with the newly acquired flows.
        #[arg(long)]
        new_data: PathBuf,
        /// Comma-separated attack labels to retrain; unknown labels are
        /// added as new attacks.
        #[arg(long, value_delimiter = ',', required = true)]
        affected: Vec<String>,
        /// Adaptation episodes.
        #[arg(long, default_value_t = 20)]
        episodes: u32,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Ingestion { .. } | Error::Corrupt(_) => 2,
        Error::Incompatible(_) | Error::VersionMismatch { .. } => 3,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str::<RunConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(cfg: &RunConfig) {
    if cfg.threads > 0 {
        // Ignore the error if a pool already exists (tests share a process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    init_threads(&config);
    match &cli.command {
        Command::Preprocess {
            inputs,
            out,
            normalization_from,
            no_split,
        } => preprocess(inputs, out, normalization_from.as_deref(), *no_split, config),
        Command::Train {
            data,
            out,
            log,
            episodes,
        } => train(data, out, log.as_deref(), *episodes, config),
        Command::Evaluate { model, data, out } => evaluate(model, data, out),
        Command::Predict {
            model,
            input,
            record,
            out,
        } => predict(model, input.as_deref(), record.as_deref(), out.as_deref()),
        Command::Adapt {
            model,
            train,
            new_data,
            affected,
            episodes,
            out,
        } => adapt(model, train, new_data, affected, *episodes, out),
    }
}

fn preprocess(
    inputs: &[PathBuf],
    out_dir: &Path,
    normalization_from: Option<&Path>,
    no_split: bool,
    config: RunConfig,
) -> Result<()> {
    let raw = data::load_flows(inputs)?;
    let raw_counts = raw.label_counts();
    let mut cleaned = raw.clean();
    drop(raw);
    if !config.label_grouping.is_empty() {
        cleaned = cleaned.regroup_labels(&config.label_grouping)?;
    }
    let clean_counts = cleaned.label_counts();
    if cleaned.is_empty() {
        eprintln!("warning: no records survived cleaning");
    }

    let mut balanced = cleaned;
    if config.benign_downsample_target > 0 {
        let available = balanced
            .label_counts()
            .get(&config.benign_label)
            .copied()
            .unwrap_or(0) as usize;
        let target = config.benign_downsample_target.min(available);
        if target < config.benign_downsample_target {
            eprintln!(
                "warning: benign downsample target {} clamped to {target} available records",
                config.benign_downsample_target
            );
        }
        if target > 0 {
            balanced = balanced.downsample_benign(&config.benign_label, target, config.seed)?;
        }
    }

    let reused_params = match normalization_from {
        Some(path) => Some(load_normalized_container(path)?.normalization.expect("checked")),
        None => None,
    };

    fs::create_dir_all(out_dir)?;
    let (train_counts, test_counts);
    if no_split {
        let params = match reused_params {
            Some(p) => p,
            None => balanced.fit_zscore()?,
        };
        let all = balanced.apply_zscore(&params)?;
        train_counts = all.label_counts();
        test_counts = BTreeMap::new();
        persist::save_dataset(
            &DatasetContainer {
                dataset: all,
                normalization: Some(params),
                normalized: true,
                config: config.clone(),
            },
            &out_dir.join("all.container"),
        )?;
    } else {
        let (train_raw, test_raw) = balanced.split(config.split_fraction, config.seed)?;
        let params = match reused_params {
            Some(p) => p,
            None => train_raw.fit_zscore()?,
        };
        let train = train_raw.apply_zscore(&params)?;
        let test = test_raw.apply_zscore(&params)?;
        train_counts = train.label_counts();
        test_counts = test.label_counts();
        persist::save_dataset(
            &DatasetContainer {
                dataset: train,
                normalization: Some(params.clone()),
                normalized: true,
                config: config.clone(),
            },
            &out_dir.join("train.container"),
        )?;
        persist::save_dataset(
            &DatasetContainer {
                dataset: test,
                normalization: Some(params),
                normalized: true,
                config: config.clone(),
            },
            &out_dir.join("test.container"),
        )?;
    }

    let summary = render_summary(&raw_counts, &clean_counts, &train_counts, &test_counts);
    fs::write(out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn render_summary(
    raw: &BTreeMap<String, u64>,
    clean: &BTreeMap<String, u64>,
    train: &BTreeMap<String, u64>,
    test: &BTreeMap<String, u64>,
) -> String {
    let mut labels: Vec<&String> = clean.keys().collect();
    // Raw-only labels (fully cleaned away or regrouped) still show up.
    for l in raw.keys() {
        if !clean.contains_key(l) {
            labels.push(l);
        }
    }
    let width = labels
        .iter()
        .map(|l| l.len())
        .max()
        .unwrap_or(5)
        .max("Class".len());
    let mut out = format!(
        "{:<width$}  {:>12}  {:>12}  {:>12}  {:>12}\n",
        "Class", "Total", "Preprocessed", "Training", "Testing"
    );
    let get = |m: &BTreeMap<String, u64>, l: &String| m.get(l).copied().unwrap_or(0);
    for l in &labels {
        out.push_str(&format!(
            "{:<width$}  {:>12}  {:>12}  {:>12}  {:>12}\n",
            l,
            get(raw, l),
            get(clean, l),
            get(train, l),
            get(test, l)
        ));
    }
    out
}

fn load_normalized_container(path: &Path) -> Result<DatasetContainer> {
    let container = persist::load_dataset(path)?;
    if !container.normalized || container.normalization.is_none() {
        return Err(Error::Incompatible(format!(
            "{} is not a normalized container from `preprocess`",
            path.display()
        )));
    }
    Ok(container)
}

fn train(
    data_path: &Path,
    out: &Path,
    log_path: Option<&Path>,
    episodes: Option<u32>,
    mut config: RunConfig,
) -> Result<()> {
    if let Some(e) = episodes {
        config.episodes = e;
    }
    if config.episodes == 0 {
        eprintln!("warning: episodes = 0, the model keeps its initialization");
    }
    let container = load_normalized_container(data_path)?;
    let params = container.normalization.expect("checked above");
    let mut ensemble = MarlEnsemble::for_dataset(&container.dataset, params, config)?;
    let log = ensemble.train(&container.dataset)?;
    persist::save_model(&ensemble, out)?;

    let log_file = log_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.log", out.display())));
    fs::write(&log_file, log.render_lines())?;
    println!(
        "trained {} agents + decider on {} records; model -> {}, log -> {}",
        ensemble.registry().num_attacks(),
        container.dataset.len(),
        out.display(),
        log_file.display()
    );
    Ok(())
}

/// Greedy predictions over a normalized dataset: (truths, predictions,
/// per-record decider Q-vectors).
fn predict_dataset(
    ensemble: &MarlEnsemble,
    ds: &Dataset,
) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f32>>)> {
    let mut truths = Vec::with_capacity(ds.len());
    let mut preds = Vec::with_capacity(ds.len());
    let mut scores = Vec::with_capacity(ds.len());
    let mut state = Vec::new();
    for r in ds.records() {
        state.clear();
        state.extend(r.features.iter().map(|&x| x as f32));
        let (label, q) = ensemble.predict(&state)?;
        truths.push(r.label.clone());
        preds.push(label);
        scores.push(q);
    }
    Ok((truths, preds, scores))
}

fn evaluate(model_path: &Path, data_path: &Path, out_dir: &Path) -> Result<()> {
    let ensemble = persist::load_model(model_path)?;
    let container = load_normalized_container(data_path)?;
    let ds = &container.dataset;
    if ds.feature_dim() != ensemble.feature_dim() {
        return Err(Error::Incompatible(format!(
            "container has {} features, model expects {}",
            ds.feature_dim(),
            ensemble.feature_dim()
        )));
    }
    for label in ds.label_counts().keys() {
        if !ensemble.registry().contains(label) {
            return Err(Error::Incompatible(format!(
                "label {label:?} in the container is not in the model registry"
            )));
        }
    }
    let (truths, preds, scores) = predict_dataset(&ensemble, ds)?;
    let report = eval::evaluate(&truths, &preds, &scores, &ensemble.registry().all_labels())?;

    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("report.txt"), report.render_text())?;
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_vec_pretty(&report)
            .map_err(|e| Error::Validation(format!("report serialization failed: {e}")))?,
    )?;
    fs::write(out_dir.join("roc.csv"), report.render_roc_csv())?;
    fs::write(out_dir.join("confusion.txt"), report.render_confusion())?;
    print!("{}", report.render_text());
    Ok(())
}

fn predict(
    model_path: &Path,
    input: Option<&Path>,
    record: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let ensemble = persist::load_model(model_path)?;
    let mut lines = String::new();
    let mut row_errors = 0usize;

    match (input, record) {
        (None, Some(record)) => {
            let features = parse_record(record, ensemble.feature_dim())?;
            let (label, q) = ensemble.predict_raw(&features)?;
            lines.push_str(&format_prediction(0, &label, &q));
        }
        (Some(path), None) => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .trim(csv::Trim::All)
                .from_path(path)
                .map_err(|e| Error::Ingestion {
                    path: path.display().to_string(),
                    row: 0,
                    message: e.to_string(),
                })?;
            let label_col = reader
                .headers()
                .map_err(|e| Error::Ingestion {
                    path: path.display().to_string(),
                    row: 0,
                    message: e.to_string(),
                })?
                .iter()
                .position(|h| h == "Label");
            for (idx, row) in reader.records().enumerate() {
                let row = row.map_err(|e| Error::Ingestion {
                    path: path.display().to_string(),
                    row: idx as u64 + 2,
                    message: e.to_string(),
                })?;
                let mut features = Vec::with_capacity(row.len());
                let mut bad_cell = None;
                for (i, cell) in row.iter().enumerate() {
                    if Some(i) == label_col {
                        continue;
                    }
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => features.push(v),
                        _ => {
                            bad_cell = Some(cell.to_string());
                            break;
                        }
                    }
                }
                if let Some(cell) = bad_cell {
                    eprintln!("row {}: non-numeric feature {cell:?}, skipped", idx + 1);
                    row_errors += 1;
                    continue;
                }
                match ensemble.predict_raw(&features) {
                    Ok((label, q)) => lines.push_str(&format_prediction(idx, &label, &q)),
                    Err(e) => {
                        eprintln!("row {}: {e}", idx + 1);
                        row_errors += 1;
                    }
                }
            }
        }
        _ => {
            return Err(Error::Validation(
                "predict needs exactly one of --input or --record".to_string(),
            ))
        }
    }

    match out {
        Some(path) => fs::write(path, &lines)?,
        None => print!("{lines}"),
    }
    if row_errors > 0 {
        return Err(Error::Validation(format!(
            "{row_errors} rows could not be classified"
        )));
    }
    Ok(())
}

fn parse_record(record: &str, expected_dim: usize) -> Result<Vec<f64>> {
    let features = record
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| Error::Validation(format!("bad --record value: {e}")))?;
    if features.len() != expected_dim {
        return Err(Error::Validation(format!(
            "--record has {} features, model expects {expected_dim}",
            features.len()
        )));
    }
    Ok(features)
}

fn format_prediction(row: usize, label: &str, q: &[f32]) -> String {
    let qs: Vec<String> = q.iter().map(|v| format!("{v}")).collect();
    format!("{row},{label},{}\n", qs.join(","))
}

fn adapt(
    model_path: &Path,
    train_path: &Path,
    new_data_path: &Path,
    affected: &[String],
    episodes: u32,
    out: &Path,
) -> Result<()> {
    let mut ensemble = persist::load_model(model_path)?;
    let train = load_normalized_container(train_path)?;
    let new_data = load_normalized_container(new_data_path)?;

    let before: BTreeMap<String, String> = ensemble.weight_digests().into_iter().collect();
    let report = ensemble.adapt(&train.dataset, &new_data.dataset, affected, episodes)?;
    let after: BTreeMap<String, String> = ensemble.weight_digests().into_iter().collect();

    persist::save_model(&ensemble, out)?;
    let holdout_path = PathBuf::from(format!("{}.holdout", out.display()));
    persist::save_dataset(
        &DatasetContainer {
            dataset: report.holdout.clone(),
            normalization: Some(ensemble.normalization().clone()),
            normalized: true,
            config: ensemble.config().clone(),
        },
        &holdout_path,
    )?;

    println!("agent digest diff:");
    for (label, digest) in &after {
        let status = match before.get(label) {
            None => "new",
            Some(old) if old == digest => "unchanged",
            Some(_) => "changed",
        };
        println!("  {label}: {status} ({}..)", &digest[..12]);
    }
    println!(
        "adapted {:?} for {episodes} episodes; model -> {}, holdout -> {}",
        report.trained,
        out.display(),
        holdout_path.display()
    );
    Ok(())
}
