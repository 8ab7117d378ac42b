//! The subcommands. Each one reads a validated configuration and writes
//! under the output directory.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use prosody_mi::baseline::{self, Instance, MixedPairConfig};
use prosody_mi::corpus::{
    filter_short, join_embeddings, load_alignment, load_column, load_split_assignment, make_splits, read_embedding_set,
    DatasetSplit, JoinedDataset, Lexicon, SplitName,
};
use prosody_mi::density::write_kde;
use prosody_mi::dsp::table::write_zstats;
use prosody_mi::dsp::{extract_utterance, read_wav, Feature, FeatureTable};
use prosody_mi::infometrics::{
    correlate_columns, emit_report, future_context_mi, mutual_information, LabeledEntropy, MiResult,
};
use prosody_mi::pipeline::{self, EstimateParams};
use prosody_mi::predictor::{write_head, write_trial_log, SearchSpace};
use prosody_mi::synth::{write_sawtooth_corpus, SawtoothSpec};
use prosody_mi::{ContextType, PredictiveFamily};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    ConfigError, CorpusConfig, DensityConfig, EmbeddingPaths, FeatureConfig, Loaded, PipelineConfig, PredictorConfig,
    ValidationConfig,
};
use crate::exit::{CliResult, Failure};

pub const FEATURES_FILE: &str = "features.csv";
pub const ZSTATS_FILE: &str = "zstats.json";
pub const EXTRACT_MANIFEST_FILE: &str = "extract_manifest.csv";
pub const RESULTS_DIR: &str = "results";
pub const ESTIMATES_DIR: &str = "estimates";
pub const REPORT_DIR: &str = "report";
pub const VALIDATION_FILE: &str = "validation_report.csv";
/// Share of utterances that may have unreadable audio before extraction
/// gives up.
pub const MAX_AUDIO_FAILURE_FRACTION: f64 = 0.10;
pub const FLAG_TARGET_SHIFT: &str = "target_shift";

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| Failure::from(e).context(format!("creating {}", path.display())))
}

fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::from(e).context(format!("creating {}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut out = create_file(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Lists `files` with their SHA-256 under a header line, so outputs that
/// cannot hold a comment (JSON, binary) are still tied to the config digest.
fn write_manifest(loaded: &Loaded, path: &Path, files: &[&Path]) -> CliResult<()> {
    let mut manifest = create_file(path)?;
    writeln!(manifest, "# {}", loaded.header())?;
    writeln!(manifest, "file,sha256")?;
    for p in files {
        let name = p.strip_prefix(&loaded.output_dir).unwrap_or(p);
        writeln!(manifest, "{},{}", name.display(), sha256_file(p)?)?;
    }
    manifest.flush()?;
    Ok(())
}

pub fn extract(loaded: &Loaded) -> CliResult<()> {
    let cfg = &loaded.config;
    let corpus = &cfg.corpus;
    let utterances = filter_short(
        load_alignment(&corpus.alignments, cfg.alignment_format())?,
        corpus.min_words,
    );
    if utterances.is_empty() {
        return Err(Failure::data(format!(
            "no utterance in {} has at least {} words",
            corpus.alignments.display(),
            corpus.min_words
        )));
    }
    let lexicon = Lexicon::load(&corpus.lexicon)?;
    let prominence = corpus.prominence.as_deref().map(load_column).transpose()?;
    let assignment = load_split_assignment(&corpus.splits)?;
    let [train, _, _] = make_splits(&utterances, &assignment)?;

    let mut records = Vec::new();
    let mut dropped = 0usize;
    for utt in &utterances {
        let audio = corpus.audio_root.join(&utt.audio_path);
        let (signal, sample_rate) = match read_wav(&audio) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("warning: skipping utterance {}: {e}", utt.utterance_id);
                dropped += 1;
                continue;
            }
        };
        let rows = extract_utterance(
            utt,
            &signal,
            sample_rate,
            &lexicon,
            prominence.as_ref(),
            &cfg.features.extraction,
        )
        .map_err(|e| Failure::from(e).context(format!("utterance {}", utt.utterance_id)))?;
        records.extend(rows);
    }
    if dropped as f64 > MAX_AUDIO_FAILURE_FRACTION * utterances.len() as f64 {
        return Err(Failure::data(format!(
            "{dropped} of {} utterances have unreadable audio (limit {:.0}%)",
            utterances.len(),
            MAX_AUDIO_FAILURE_FRACTION * 100.0
        )));
    }

    let mut table = FeatureTable::new(cfg.features.extraction.dct_k, records)?;
    let pauses = table.targets(Feature::PauseAfter, 0.0);
    let zero_pauses = pauses.values.values().filter(|v| v[0] == 0.0).count();
    let counts: Vec<(Feature, usize)> = Feature::ALL
        .iter()
        .map(|&f| (f, table.targets(f, 0.0).values.len()))
        .collect();
    let zstats = table.zscore(&train.token_ids, &cfg.zscore_columns())?;

    create_dir(&loaded.output_dir)?;
    let features_path = loaded.output_dir.join(FEATURES_FILE);
    let mut out = create_file(&features_path)?;
    table.write_csv(&mut out, Some(&loaded.header()))?;
    out.flush()?;
    let zstats_path = loaded.output_dir.join(ZSTATS_FILE);
    let mut out = create_file(&zstats_path)?;
    write_zstats(&zstats, &mut out)?;
    out.flush()?;
    write_manifest(
        loaded,
        &loaded.output_dir.join(EXTRACT_MANIFEST_FILE),
        &[&features_path, &zstats_path],
    )?;

    println!(
        "extracted {} tokens from {} utterances ({dropped} skipped)",
        table.records.len(),
        utterances.len() - dropped
    );
    for (feature, n) in counts {
        println!("  {feature}: {n} values");
    }
    if !pauses.values.is_empty() {
        println!(
            "  zero pauses: {:.1}% of words (most words in fluent read speech have no following pause)",
            100.0 * zero_pauses as f64 / pauses.values.len() as f64
        );
    }
    println!("wrote {}", features_path.display());
    Ok(())
}

/// Everything recorded about one estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub config_sha256: String,
    pub seed: u64,
    pub family: PredictiveFamily,
    pub target_shift: f64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub bandwidth: f64,
    pub best_trial: usize,
    pub best_config: prosody_mi::MlpConfig,
    pub result: MiResult,
}

pub fn result_file_name(feature: Feature, context: ContextType) -> String {
    format!("mi_{}_{}.json", feature.as_str(), context.short_name())
}

fn token_splits(
    table: &FeatureTable,
    feature_ids: &BTreeSet<prosody_mi::TokenId>,
    splits_path: &Path,
) -> CliResult<[DatasetSplit; 3]> {
    let assignment = load_split_assignment(splits_path)?;
    let mut sets: [BTreeSet<prosody_mi::TokenId>; 3] = Default::default();
    for r in &table.records {
        if !feature_ids.contains(&r.token_id) {
            continue;
        }
        let split = assignment.get(&r.token_id.utterance_id).ok_or_else(|| {
            Failure::data(format!(
                "utterance {} has no split in {}",
                r.token_id.utterance_id,
                splits_path.display()
            ))
        })?;
        let slot = SplitName::ALL.iter().position(|s| s == split).expect("split in ALL");
        sets[slot].insert(r.token_id.clone());
    }
    let [train, dev, test] = sets;
    Ok([
        DatasetSplit {
            name: SplitName::Train,
            token_ids: train,
        },
        DatasetSplit {
            name: SplitName::Dev,
            token_ids: dev,
        },
        DatasetSplit {
            name: SplitName::Test,
            token_ids: test,
        },
    ])
}

pub fn estimate(loaded: &Loaded, feature: Feature, context: ContextType) -> CliResult<PathBuf> {
    let cfg = &loaded.config;
    let emb_path = cfg.embeddings.get(context).ok_or_else(|| {
        ConfigError(format!(
            "no embedding file is configured for context `{}`",
            context.short_name()
        ))
    })?;
    let features_path = loaded.output_dir.join(FEATURES_FILE);
    if !features_path.exists() {
        return Err(Failure::data(format!(
            "{} not found; run `prosody-mi extract` first",
            features_path.display()
        )));
    }
    let table = FeatureTable::read_csv(&features_path)?;
    let family = cfg.family(feature);
    let shift = if feature == Feature::PauseAfter && family == PredictiveFamily::GammaScalar {
        cfg.features.pause_epsilon_s
    } else {
        0.0
    };
    let targets = table.targets(feature, shift);
    let embeddings = read_embedding_set(emb_path)?;
    if embeddings.context != context {
        return Err(Failure::data(format!(
            "{} holds `{}` embeddings, not `{}`",
            emb_path.display(),
            embeddings.context.short_name(),
            context.short_name()
        )));
    }
    let ids: BTreeSet<_> = targets.values.keys().cloned().collect();
    let splits = token_splits(&table, &ids, &cfg.corpus.splits)?;
    let joined: Vec<JoinedDataset> = splits
        .iter()
        .map(|s| {
            if s.token_ids.is_empty() {
                return Err(Failure::data(format!(
                    "the {} split has no `{feature}` values",
                    s.name.as_str()
                )));
            }
            Ok(join_embeddings(s, &embeddings, &targets)?)
        })
        .collect::<CliResult<_>>()?;

    let params = EstimateParams {
        bandwidth_grid: cfg.density.bandwidth_grid.clone(),
        n_folds: cfg.density.n_folds,
        search: cfg.predictor.search.clone(),
        n_trials: cfg.predictor.n_trials,
        seed: cfg.seed,
    };
    let out = pipeline::estimate(&joined[0], &joined[1], &joined[2], family, &params)?;
    let zscored = cfg.zscore_columns().contains(&feature);
    let label = |estimate| LabeledEntropy {
        feature: feature.as_str().to_string(),
        zscored,
        estimate,
    };
    let mut result = mutual_information(&label(out.h), &label(out.h_cond), context, &embeddings.model)?;
    if shift > 0.0 {
        result.flags.push(format!("{FLAG_TARGET_SHIFT}={shift}"));
    }

    let dir = loaded
        .output_dir
        .join(ESTIMATES_DIR)
        .join(format!("{}_{}", feature.as_str(), context.short_name()));
    create_dir(&dir)?;
    let kde_path = dir.join("kde.bin");
    write_kde(&out.kde, &kde_path)?;
    let mut head = out.search.best.clone();
    head.context_type = Some(context);
    head.zscore_ref = zscored.then(|| ZSTATS_FILE.to_string());
    let head_path = dir.join("head.bin");
    write_head(&head, &head_path)?;
    let trials_path = dir.join("trials.csv");
    let mut w = create_file(&trials_path)?;
    writeln!(w, "# {}", loaded.header())?;
    write_trial_log(&mut w, &out.search.trials)?;
    w.flush()?;

    let record = EstimateRecord {
        config_sha256: loaded.digest.clone(),
        seed: cfg.seed,
        family,
        target_shift: shift,
        n_train: joined[0].len(),
        n_dev: joined[1].len(),
        n_test: joined[2].len(),
        bandwidth: out.kde.bandwidth(),
        best_trial: out.search.best_trial,
        best_config: out.search.best.config.clone(),
        result: result.clone(),
    };
    let results_dir = loaded.output_dir.join(RESULTS_DIR);
    create_dir(&results_dir)?;
    let result_path = results_dir.join(result_file_name(feature, context));
    write_json(&record, &result_path)?;

    write_manifest(
        loaded,
        &dir.join("manifest.csv"),
        &[&kde_path, &head_path, &trials_path, &result_path],
    )?;

    println!(
        "{feature} | {}: H = {:.4} ± {:.4}, H(.|W) = {:.4} ± {:.4}, MI = {:.4} ± {:.4} nats{}",
        context.short_name(),
        result.h_nats,
        result.h_std,
        result.h_cond_nats,
        result.h_cond_std,
        result.mi_nats,
        result.mi_std,
        if result.flags.is_empty() {
            String::new()
        } else {
            format!(" [{}]", result.flags.join(";"))
        }
    );
    Ok(result_path)
}

pub fn validation_suite(cfg: &ValidationConfig, seed: u64) -> Vec<Instance> {
    let mut suite: Vec<Instance> = cfg
        .separations
        .iter()
        .enumerate()
        .map(|(i, &sep)| Instance::two_gaussians(sep, cfg.n_samples, seed.wrapping_add(i as u64)))
        .collect();
    if cfg.include_null {
        let mut null = baseline::default_suite(cfg.n_samples, seed)
            .pop()
            .expect("default suite ends with the null instance");
        null.seed = seed.wrapping_add(cfg.separations.len() as u64);
        suite.push(null);
    }
    suite
}

pub fn validate(loaded: &Loaded) -> CliResult<PathBuf> {
    let cfg = &loaded.config;
    let suite = validation_suite(&cfg.validation, cfg.seed);
    if suite.is_empty() {
        return Err(ConfigError("validation: no separations and no null instance".into()).into());
    }
    let mut mp = MixedPairConfig {
        min_class_size: cfg.validation.min_class_size,
        seed: cfg.seed,
        ..MixedPairConfig::default()
    };
    mp.head.seed = cfg.seed;
    let rows = baseline::run_suite(&suite, &mp)?;
    create_dir(&loaded.output_dir)?;
    let path = loaded.output_dir.join(VALIDATION_FILE);
    let mut out = create_file(&path)?;
    baseline::write_validation_report(&mut out, &loaded.header(), &rows)?;
    out.flush()?;
    for r in &rows {
        println!(
            "{}: oracle {:.4}, kernel smoothing {:.4}, pipeline {:.4}, histogram {:.4}",
            r.instance, r.oracle_mi, r.ks_mi, r.pipeline_mi, r.histogram_mi
        );
    }
    println!("wrote {}", path.display());
    Ok(path)
}

pub fn load_results(dir: &Path) -> CliResult<Vec<EstimateRecord>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Failure::from(e).context(format!("{}: run `prosody-mi estimate` first", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("mi_") && name.ends_with(".json")
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::from(e).context(p.display()))?;
            serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn report(loaded: &Loaded) -> CliResult<PathBuf> {
    let cfg = &loaded.config;
    let records = load_results(&loaded.output_dir.join(RESULTS_DIR))?;
    if records.is_empty() {
        return Err(Failure::data("no estimates found; run `prosody-mi estimate` first"));
    }
    for r in records.iter().filter(|r| r.config_sha256 != loaded.digest) {
        eprintln!(
            "warning: {} | {} was estimated under a different configuration ({})",
            r.result.feature,
            r.result.context_type.short_name(),
            r.config_sha256
        );
    }
    let results: Vec<MiResult> = records.iter().map(|r| r.result.clone()).collect();
    let mut correlations = Vec::new();
    if let (Some(p), Some(s)) = (&cfg.corpus.prominence, &cfg.corpus.surprisal) {
        let (p, s) = (load_column(p)?, load_column(s)?);
        let name = format!("{}~{}", p.name, s.name);
        correlations.push((name, correlate_columns(&p, &s)?));
    }
    let out_dir = loaded.output_dir.join(REPORT_DIR);
    create_dir(&out_dir)?;
    let files = emit_report(&results, &correlations, &loaded.header(), cfg.h_min_nats, &out_dir)?;

    for bi in results.iter().filter(|r| r.context_type == ContextType::Bidirectional) {
        let past = results.iter().find(|r| {
            r.context_type == ContextType::PastContext && r.feature == bi.feature && r.model_name == bi.model_name
        });
        if let Some(past) = past {
            let gain = future_context_mi(bi, past)?;
            println!(
                "{}: future context adds {:.4} ± {:.4} nats{}",
                bi.feature,
                gain.mi_nats,
                gain.std_nats,
                if gain.negative { " (negative)" } else { "" }
            );
        }
    }
    for (name, c) in &correlations {
        println!(
            "{name}: pearson {:.3}, spearman {:.3} (n = {})",
            c.pearson_r, c.spearman_rho, c.n
        );
    }
    println!("wrote {}", files.table.display());
    Ok(files.table)
}

/// Search space sized for the bundled ten-utterance corpus.
pub fn small_search_space() -> SearchSpace {
    SearchSpace {
        learning_rate: [1e-3, 1e-2],
        l2_lambda: [1e-8, 1e-4],
        dropout_p: vec![0.0],
        n_layers: vec![1],
        hidden_units: vec![16, 32],
        batch_size: vec![16, 32],
        max_epochs: 30,
        patience: 5,
    }
}

fn relative(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).unwrap_or(path).to_path_buf()
}

/// Writes the sawtooth corpus and a `config.json` that runs the whole
/// pipeline on it.
pub fn synth(out: &Path, seed: Option<u64>) -> CliResult<PathBuf> {
    let spec = SawtoothSpec {
        seed: seed.unwrap_or(SawtoothSpec::default().seed),
        ..SawtoothSpec::default()
    };
    create_dir(out)?;
    let files = write_sawtooth_corpus(out, &spec)?;
    let mut embeddings = EmbeddingPaths::default();
    for (context, path) in &files.embeddings {
        let slot = match context {
            ContextType::CurrentWord => &mut embeddings.current,
            ContextType::PastContext => &mut embeddings.past,
            ContextType::Bidirectional => &mut embeddings.bidirectional,
        };
        *slot = Some(relative(path, out));
    }
    let config = PipelineConfig {
        corpus: CorpusConfig {
            alignments: relative(&files.alignments, out),
            alignment_format: "json".into(),
            audio_root: relative(&files.audio_root, out),
            lexicon: relative(&files.lexicon, out),
            splits: relative(&files.splits, out),
            prominence: Some(relative(&files.prominence, out)),
            surprisal: Some(relative(&files.surprisal, out)),
            min_words: 2,
        },
        features: FeatureConfig::default(),
        density: DensityConfig {
            bandwidth_grid: None,
            n_folds: 2,
        },
        predictor: PredictorConfig {
            search: small_search_space(),
            n_trials: 4,
            ..PredictorConfig::default()
        },
        embeddings,
        validation: ValidationConfig {
            n_samples: 2_000,
            ..ValidationConfig::default()
        },
        seed: 0,
        output_dir: Some(PathBuf::from("run")),
        h_min_nats: prosody_mi::infometrics::DEFAULT_H_MIN_NATS,
    };
    let path = out.join("config.json");
    write_json(&config, &path)?;
    println!("wrote synthetic corpus and {}", path.display());
    Ok(path)
}
