//! `ovid`: the changeset-vandalism pipeline as subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod cfgfile;
mod manifest;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use manifest::ManifestBuilder;
use ovid_core::eval::{
    grid_search_rules, pr_sweep, random_baseline, random_search, rule_baseline, write_pr_curve,
    ConfusionCounts, EvalReport, RuleGrids, SearchSpace,
};
use ovid_core::features::{
    apply_norm, fit_norm, read_features, write_features, EditorVocab, FeatureFile, FeatureRecord,
    Featurizer, FeaturizerConfig, MapFeatures,
};
use ovid_core::ingest::{open_xml, parse_changeset_metadata, parse_osc, IngestStats};
use ovid_core::miner::{
    mine, read_dataset, read_split, split_user_disjoint, write_dataset, write_split, Label,
    SplitName,
};
use ovid_core::model::{
    ablate, classify, fit, load_checkpoint, predict, save_checkpoint, AblationVariant, FeatureDims,
    ModelCheckpoint, OvidConfig, TrainExample,
};
use ovid_core::store::ChangesetStore;

#[derive(Parser)]
#[command(
    name = "ovid",
    version,
    about = "Mine OSM revert history for vandalism labels, extract features, train and evaluate the attention classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigOverrides {
    /// Model configuration file (flat key=value, keys match field names)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    th_e_max: Option<usize>,
    #[arg(long)]
    n_pred: Option<usize>,
    #[arg(long)]
    n_head: Option<usize>,
    #[arg(long)]
    d_h: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    th_class: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

impl ConfigOverrides {
    fn build(&self, seed: Option<u64>) -> Result<OvidConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Data(format!("cannot read config {}: {e}", path.display()))
                })?;
                cfgfile::parse_config(&text).map_err(CliError::Usage)?
            }
            None => OvidConfig::default(),
        };
        macro_rules! over {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        over!(
            th_e_max,
            n_pred,
            n_head,
            d_h,
            dropout,
            lambda,
            th_class,
            batch_size,
            learning_rate,
            patience,
            max_epochs
        );
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse changeset-dump and osmChange XML into a store
    Ingest {
        /// Changeset-metadata dump(s), optionally gzipped
        #[arg(long, required = true)]
        changesets: Vec<PathBuf>,
        /// osmChange file(s), optionally gzipped, in chronological order
        #[arg(long)]
        osc: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract vandalism labels from revert history into a balanced dataset
    Mine {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a dataset into user-disjoint train/validation/test sets
    Split {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated train,validation,test fractions
        #[arg(long, default_value = "0.70,0.10,0.20")]
        ratios: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute feature vectors for a split, fitting normalization on train
    Featurize {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Count distinct top-12 keys instead of addition events
        #[arg(long)]
        top12_distinct: bool,
    },
    /// Train a model on the train split, early-stopping on validation
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Random search over the hyperparameter grid
    Tune {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Evaluate a checkpoint (plus optional baselines) on one split
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Comma-separated subset of: random, rules
        #[arg(long, default_value = "")]
        baselines: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision/recall curve over the classification threshold
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate an ablated configuration
    Ablate {
        #[arg(long)]
        features: PathBuf,
        /// One of: -Changeset, -User, -Edits, -Changeset&Edits, -User&Edits
        #[arg(long, allow_hyphen_values = true)]
        variant: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Score a single stored changeset with a trained model
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        changeset_id: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_thread_pool();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("data error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// OVID_THREADS caps worker parallelism for the whole process.
fn init_thread_pool() {
    if let Some(n) = std::env::var("OVID_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest {
            changesets,
            osc,
            out,
        } => cmd_ingest(&changesets, &osc, &out),
        Command::Mine { store, seed, out } => cmd_mine(&store, seed, &out),
        Command::Split {
            dataset,
            ratios,
            seed,
            out,
        } => cmd_split(&dataset, &ratios, seed, &out),
        Command::Featurize {
            store,
            split,
            out,
            top12_distinct,
        } => cmd_featurize(&store, &split, &out, top12_distinct),
        Command::Train {
            features,
            seed,
            out,
            overrides,
        } => cmd_train(&features, seed, &out, &overrides),
        Command::Tune {
            features,
            trials,
            seed,
            out,
            overrides,
        } => cmd_tune(&features, trials, seed, &out, &overrides),
        Command::Eval {
            checkpoint,
            features,
            split,
            baselines,
            seed,
            out,
        } => cmd_eval(&checkpoint, &features, &split, &baselines, seed, &out),
        Command::Sweep {
            checkpoint,
            features,
            points,
            out,
        } => cmd_sweep(&checkpoint, &features, points, &out),
        Command::Ablate {
            features,
            variant,
            seed,
            out,
            overrides,
        } => cmd_ablate(&features, &variant, seed, &out, &overrides),
        Command::Predict {
            checkpoint,
            store,
            changeset_id,
            out,
        } => cmd_predict(&checkpoint, &store, changeset_id, out.as_deref()),
    }
}

/// Inputs may name the output directory of an earlier stage; resolve to the
/// canonical file inside it.
fn resolve(path: &Path, canonical: &str) -> PathBuf {
    if path.is_dir() {
        path.join(canonical)
    } else {
        path.to_path_buf()
    }
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| {
        CliError::Data(format!(
            "cannot create output directory {}: {e}",
            out.display()
        ))
    })
}

fn load_store(path: &Path) -> Result<ChangesetStore, CliError> {
    ChangesetStore::load_path(&resolve(path, "store.jsonl")).map_err(CliError::data)
}

fn load_feature_file(path: &Path) -> Result<FeatureFile, CliError> {
    let path = resolve(path, "features.jsonl");
    let f = std::fs::File::open(&path)
        .map_err(|e| CliError::Data(format!("cannot open features {}: {e}", path.display())))?;
    read_features(std::io::BufReader::new(f)).map_err(CliError::data)
}

fn cmd_ingest(changesets: &[PathBuf], osc: &[PathBuf], out: &Path) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let mut manifest = ManifestBuilder::new("ingest");
    let mut store = ChangesetStore::new();
    let mut totals = IngestStats::default();

    for path in changesets {
        manifest = manifest.input(path);
        let reader = open_xml(path).map_err(CliError::data)?;
        let stats = parse_changeset_metadata(reader, &mut store).map_err(CliError::data)?;
        totals.changesets_added += stats.changesets_added;
        totals.changesets_skipped += stats.changesets_skipped;
    }
    for path in osc {
        manifest = manifest.input(path);
        let reader = open_xml(path).map_err(CliError::data)?;
        let stats = parse_osc(reader, &mut store).map_err(CliError::data)?;
        totals.edits_attached += stats.edits_attached;
        totals.edits_parked += stats.edits_parked;
    }

    let store_path = out.join("store.jsonl");
    store.save_path(&store_path).map_err(CliError::data)?;
    manifest
        .output(&store_path)
        .write(out)
        .map_err(CliError::data)?;
    println!(
        "ingested {} changesets ({} skipped), {} edits ({} parked) -> {}",
        totals.changesets_added,
        totals.changesets_skipped,
        totals.edits_attached,
        totals.edits_parked,
        store_path.display()
    );
    Ok(())
}

fn cmd_mine(store_path: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let manifest = ManifestBuilder::new("mine").seed(seed).input(store_path);
    ensure_out_dir(out)?;
    let store = load_store(store_path)?;
    let examples = mine(&store, seed).map_err(CliError::data)?;

    let dataset_path = out.join("dataset.jsonl");
    let f = std::fs::File::create(&dataset_path).map_err(CliError::data)?;
    write_dataset(std::io::BufWriter::new(f), &examples, seed).map_err(CliError::data)?;
    manifest
        .output(&dataset_path)
        .write(out)
        .map_err(CliError::data)?;

    let positives = examples
        .iter()
        .filter(|e| e.label == Label::Vandalism)
        .count();
    println!(
        "mined {} examples ({} vandalism, {} regular) -> {}",
        examples.len(),
        positives,
        examples.len() - positives,
        dataset_path.display()
    );
    Ok(())
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("bad ratios {s:?}: {e}")))?;
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "expected three ratios, got {}",
            parts.len()
        )));
    }
    let sum: f64 = parts.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CliError::Usage(format!("ratios must sum to 1, got {sum}")));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn cmd_split(dataset: &Path, ratios: &str, seed: u64, out: &Path) -> Result<(), CliError> {
    let ratios = parse_ratios(ratios)?;
    ensure_out_dir(out)?;
    let path = resolve(dataset, "dataset.jsonl");
    let manifest = ManifestBuilder::new("split").seed(seed).input(&path);
    let f = std::fs::File::open(&path)
        .map_err(|e| CliError::Data(format!("cannot open dataset {}: {e}", path.display())))?;
    let (examples, _) = read_dataset(std::io::BufReader::new(f)).map_err(CliError::data)?;
    let split = split_user_disjoint(&examples, ratios, seed);

    let split_path = out.join("split.jsonl");
    let f = std::fs::File::create(&split_path).map_err(CliError::data)?;
    write_split(std::io::BufWriter::new(f), &split).map_err(CliError::data)?;
    manifest
        .output(&split_path)
        .write(out)
        .map_err(CliError::data)?;
    println!(
        "split {} examples into {}/{}/{} -> {}",
        split.total(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split_path.display()
    );
    Ok(())
}

fn cmd_featurize(
    store_path: &Path,
    split_path: &Path,
    out: &Path,
    top12_distinct: bool,
) -> Result<(), CliError> {
    let manifest = ManifestBuilder::new("featurize").input(store_path);
    ensure_out_dir(out)?;
    let store = load_store(store_path)?;
    let split_file = resolve(split_path, "split.jsonl");
    let manifest = manifest.input(&split_file);
    let f = std::fs::File::open(&split_file)
        .map_err(|e| CliError::Data(format!("cannot open split {}: {e}", split_file.display())))?;
    let split = read_split(std::io::BufReader::new(f)).map_err(CliError::data)?;

    let featurizer = Featurizer::new(
        &store,
        EditorVocab::bundled(),
        MapFeatures::bundled(),
        FeaturizerConfig { top12_distinct },
    );

    let mut records = Vec::new();
    let mut train_bundles = Vec::new();
    for (name, part) in [
        (SplitName::Train, &split.train),
        (SplitName::Validation, &split.validation),
        (SplitName::Test, &split.test),
    ] {
        for ex in part {
            let cs = store.get(ex.changeset).ok_or_else(|| {
                CliError::Data(format!(
                    "changeset {} from the split file is absent from the store",
                    ex.changeset
                ))
            })?;
            let bundle = featurizer.bundle(cs);
            if name == SplitName::Train {
                train_bundles.push(bundle.clone());
            }
            records.push(FeatureRecord {
                label: ex.label,
                user: ex.user,
                split: name,
                bundle,
            });
        }
    }
    let stats = fit_norm(&train_bundles).map_err(CliError::data)?;
    let file = FeatureFile {
        d_changeset: featurizer.d_changeset(),
        editor_vocab_hash: featurizer.vocab().hash(),
        stats,
        records,
    };

    let features_path = out.join("features.jsonl");
    let f = std::fs::File::create(&features_path).map_err(CliError::data)?;
    write_features(std::io::BufWriter::new(f), &file).map_err(CliError::data)?;
    manifest
        .output(&features_path)
        .write(out)
        .map_err(CliError::data)?;
    println!(
        "featurized {} examples -> {}",
        file.records.len(),
        features_path.display()
    );
    Ok(())
}

fn training_sets(file: &FeatureFile) -> (Vec<TrainExample>, Vec<TrainExample>, Vec<TrainExample>) {
    let mut parts = (Vec::new(), Vec::new(), Vec::new());
    for r in &file.records {
        let ex = TrainExample::new(apply_norm(&r.bundle, &file.stats), r.label);
        match r.split {
            SplitName::Train => parts.0.push(ex),
            SplitName::Validation => parts.1.push(ex),
            SplitName::Test => parts.2.push(ex),
        }
    }
    parts
}

fn train_and_checkpoint(
    file: &FeatureFile,
    config: &OvidConfig,
    out: &Path,
) -> Result<(ModelCheckpoint, PathBuf, PathBuf), CliError> {
    let (train_set, val_set, _) = training_sets(file);
    let dims = FeatureDims::standard(file.d_changeset);
    let (params, log) = fit(&train_set, &val_set, config, dims).map_err(CliError::data)?;
    let checkpoint = ModelCheckpoint::assemble(
        config.clone(),
        params,
        file.stats.clone(),
        file.editor_vocab_hash.clone(),
    )
    .map_err(CliError::data)?;

    let ckpt_path = out.join("model.ckpt");
    save_checkpoint(&checkpoint, &ckpt_path).map_err(CliError::data)?;
    let log_path = out.join("training_log.jsonl");
    let mut log_lines = String::new();
    for e in &log.epochs {
        log_lines.push_str(&serde_json::to_string(e).map_err(CliError::data)?);
        log_lines.push('\n');
    }
    std::fs::write(&log_path, log_lines).map_err(CliError::data)?;
    println!(
        "trained {} epochs (best {}), final val loss {:.6} -> {}",
        log.stopped_epoch,
        log.best_epoch,
        log.epochs.last().map(|e| e.val_loss).unwrap_or(f64::NAN),
        ckpt_path.display()
    );
    Ok((checkpoint, ckpt_path, log_path))
}

fn cmd_train(
    features: &Path,
    seed: Option<u64>,
    out: &Path,
    overrides: &ConfigOverrides,
) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("train").input(features);
    ensure_out_dir(out)?;
    let file = load_feature_file(features)?;
    let config = overrides.build(seed)?;
    let (_, ckpt_path, log_path) = train_and_checkpoint(&file, &config, out)?;
    manifest = manifest.output(&ckpt_path).output(&log_path);
    if let Some(s) = seed {
        manifest = manifest.seed(s);
    }
    manifest.write(out).map_err(CliError::data)
}

fn cmd_tune(
    features: &Path,
    trials: usize,
    seed: u64,
    out: &Path,
    overrides: &ConfigOverrides,
) -> Result<(), CliError> {
    let manifest = ManifestBuilder::new("tune").seed(seed).input(features);
    ensure_out_dir(out)?;
    let file = load_feature_file(features)?;
    let base = overrides.build(None)?;
    let (train_set, val_set, _) = training_sets(&file);
    let dims = FeatureDims::standard(file.d_changeset);
    let (best, log) = random_search(
        &SearchSpace::default(),
        trials,
        seed,
        &base,
        &train_set,
        &val_set,
        dims,
    )
    .map_err(CliError::data)?;

    let trials_path = out.join("trials.jsonl");
    let mut lines = String::new();
    for t in &log {
        lines.push_str(&serde_json::to_string(t).map_err(CliError::data)?);
        lines.push('\n');
    }
    std::fs::write(&trials_path, lines).map_err(CliError::data)?;
    let config_path = out.join("best_config.txt");
    std::fs::write(&config_path, cfgfile::render_config(&best)).map_err(CliError::data)?;
    manifest
        .output(&trials_path)
        .output(&config_path)
        .write(out)
        .map_err(CliError::data)?;
    let best_f1 = log.iter().map(|t| t.val_f1).fold(f64::MIN, f64::max);
    println!(
        "tuned over {} trials; best val F1 {:.4} (d_h={}, n_head={}) -> {}",
        log.len(),
        best_f1,
        best.d_h,
        best.n_head,
        config_path.display()
    );
    Ok(())
}

fn parse_split_name(s: &str) -> Result<SplitName, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "train" => Ok(SplitName::Train),
        "validation" | "val" => Ok(SplitName::Validation),
        "test" => Ok(SplitName::Test),
        other => Err(CliError::Usage(format!("unknown split {other:?}"))),
    }
}

fn checkpoint_scores(
    checkpoint: &ModelCheckpoint,
    file: &FeatureFile,
    split: SplitName,
) -> Result<Vec<(f64, Label)>, CliError> {
    if checkpoint.dims.d_changeset != file.d_changeset {
        return Err(CliError::Data(format!(
            "DimMismatch: checkpoint expects {}-dimensional changeset vectors, features file has {}",
            checkpoint.dims.d_changeset, file.d_changeset
        )));
    }
    file.part(split)
        .iter()
        .map(|r| {
            let bundle = apply_norm(&r.bundle, &checkpoint.stats);
            let score =
                predict(&checkpoint.params, &checkpoint.config, &bundle).map_err(CliError::data)?;
            Ok((score, r.label))
        })
        .collect()
}

fn cmd_eval(
    checkpoint_path: &Path,
    features: &Path,
    split: &str,
    baselines: &str,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let split = parse_split_name(split)?;
    let requested: HashSet<String> = baselines
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .filter(|s| !s.is_empty())
        .collect();
    for b in &requested {
        if b != "random" && b != "rules" {
            return Err(CliError::Usage(format!(
                "unknown baseline {b:?} (expected random, rules)"
            )));
        }
    }
    ensure_out_dir(out)?;
    let manifest = ManifestBuilder::new("eval")
        .seed(seed)
        .input(checkpoint_path)
        .input(features);
    let checkpoint =
        load_checkpoint(&resolve(checkpoint_path, "model.ckpt")).map_err(CliError::data)?;
    let file = load_feature_file(features)?;
    let scored = checkpoint_scores(&checkpoint, &file, split)?;
    if scored.is_empty() {
        return Err(CliError::Data(format!("split {split:?} holds no examples")));
    }

    let mut report = EvalReport::default();
    report
        .push(
            "ovid",
            ConfusionCounts::from_scores(&scored, checkpoint.config.th_class),
        )
        .map_err(CliError::data)?;

    if requested.contains("random") {
        let coin = random_baseline(scored.len(), seed);
        let mut cc = ConfusionCounts::default();
        for ((_, actual), predicted) in scored.iter().zip(&coin) {
            cc.tally(*predicted, *actual);
        }
        report.push("random", cc).map_err(CliError::data)?;
    }
    if requested.contains("rules") {
        // Thresholds are fitted on the raw train+validation bundles, then
        // applied to the requested split.
        let fit_set: Vec<_> = file
            .records
            .iter()
            .filter(|r| r.split != SplitName::Test)
            .map(|r| (r.bundle.clone(), r.label))
            .collect();
        if fit_set.is_empty() {
            return Err(CliError::Data(
                "rules baseline needs train/validation examples".into(),
            ));
        }
        let (thresholds, _) =
            grid_search_rules(&fit_set, &RuleGrids::default()).map_err(CliError::data)?;
        let mut cc = ConfusionCounts::default();
        for r in file.part(split) {
            cc.tally(rule_baseline(&r.bundle, &thresholds), r.label);
        }
        // An approximation of the published rule-based system, over this
        // crate's own feature set.
        report.push("rules-approx", cc).map_err(CliError::data)?;
    }

    let table = report.to_table();
    let txt_path = out.join("report.txt");
    std::fs::write(&txt_path, &table).map_err(CliError::data)?;
    let jsonl_path = out.join("report.jsonl");
    let mut lines = String::new();
    for e in &report.entries {
        lines.push_str(&serde_json::to_string(e).map_err(CliError::data)?);
        lines.push('\n');
    }
    std::fs::write(&jsonl_path, lines).map_err(CliError::data)?;
    manifest
        .output(&txt_path)
        .output(&jsonl_path)
        .write(out)
        .map_err(CliError::data)?;
    print!("{table}");
    Ok(())
}

fn cmd_sweep(
    checkpoint_path: &Path,
    features: &Path,
    points: usize,
    out: &Path,
) -> Result<(), CliError> {
    let manifest = ManifestBuilder::new("sweep")
        .input(checkpoint_path)
        .input(features);
    ensure_out_dir(out)?;
    let checkpoint =
        load_checkpoint(&resolve(checkpoint_path, "model.ckpt")).map_err(CliError::data)?;
    let file = load_feature_file(features)?;
    let scored = checkpoint_scores(&checkpoint, &file, SplitName::Test)?;
    let curve = pr_sweep(&scored, points).map_err(CliError::data)?;

    let csv_path = out.join("pr_curve.csv");
    let f = std::fs::File::create(&csv_path).map_err(CliError::data)?;
    write_pr_curve(std::io::BufWriter::new(f), &curve).map_err(CliError::data)?;
    manifest
        .output(&csv_path)
        .write(out)
        .map_err(CliError::data)?;
    println!("swept {} thresholds -> {}", curve.len(), csv_path.display());
    Ok(())
}

fn cmd_ablate(
    features: &Path,
    variant: &str,
    seed: Option<u64>,
    out: &Path,
    overrides: &ConfigOverrides,
) -> Result<(), CliError> {
    let variant = AblationVariant::parse(variant).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown ablation variant {variant:?} (expected one of -Changeset, -User, -Edits, -Changeset&Edits, -User&Edits)"
        ))
    })?;
    ensure_out_dir(out)?;
    let mut manifest = ManifestBuilder::new("ablate").input(features);
    let file = load_feature_file(features)?;
    let base = overrides.build(seed)?;
    let config = ablate(&base, variant).map_err(CliError::data)?;
    let (checkpoint, ckpt_path, log_path) = train_and_checkpoint(&file, &config, out)?;

    // Report the ablated model on the test split.
    let scored = checkpoint_scores(&checkpoint, &file, SplitName::Test)?;
    let mut report = EvalReport::default();
    report
        .push(
            format!("ovid{}", variant.name()),
            ConfusionCounts::from_scores(&scored, config.th_class),
        )
        .map_err(CliError::data)?;
    let table = report.to_table();
    let txt_path = out.join("report.txt");
    std::fs::write(&txt_path, &table).map_err(CliError::data)?;

    manifest = manifest
        .output(&ckpt_path)
        .output(&log_path)
        .output(&txt_path);
    if let Some(s) = seed {
        manifest = manifest.seed(s);
    }
    manifest.write(out).map_err(CliError::data)?;
    print!("{table}");
    Ok(())
}

fn cmd_predict(
    checkpoint_path: &Path,
    store_path: &Path,
    changeset_id: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let manifest = ManifestBuilder::new("predict")
        .input(checkpoint_path)
        .input(store_path);
    let checkpoint =
        load_checkpoint(&resolve(checkpoint_path, "model.ckpt")).map_err(CliError::data)?;
    let store = load_store(store_path)?;
    let cs = store
        .get(changeset_id)
        .ok_or_else(|| CliError::Data(format!("changeset {changeset_id} is not in the store")))?;

    let vocab = EditorVocab::bundled();
    if vocab.hash() != checkpoint.editor_vocab_hash {
        return Err(CliError::Data(
            "checkpoint was trained with a different editor vocabulary".into(),
        ));
    }
    let featurizer = Featurizer::new(
        &store,
        vocab,
        MapFeatures::bundled(),
        FeaturizerConfig::default(),
    );
    let bundle = apply_norm(&featurizer.bundle(cs), &checkpoint.stats);
    let score = predict(&checkpoint.params, &checkpoint.config, &bundle).map_err(CliError::data)?;
    let label = classify(score, checkpoint.config.th_class);

    let line = serde_json::json!({
        "changeset": changeset_id,
        "score": score,
        "threshold": checkpoint.config.th_class,
        "label": label,
    });
    println!("{line}");
    if let Some(out) = out {
        ensure_out_dir(out)?;
        let path = out.join("prediction.json");
        std::fs::write(&path, format!("{line}\n")).map_err(CliError::data)?;
        manifest.output(&path).write(out).map_err(CliError::data)?;
    }
    Ok(())
}
