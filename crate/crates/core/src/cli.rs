// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end. Exit codes: 0 success, 1 invalid input or
//! config, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{
    cumulative_counts, document_counts, generate_synthetic_corpus, merge_counts, scan_corpus, write_checkpoints,
    write_positions, CheckpointSchedule, CountTable, Matcher, PairMode, ScanOptions, SynthSpecFile, TermDictionary,
    TokenCorpus,
};
use crate::error::{Error, Result};
use crate::lre::{fit_lre, load_lre, save_lre, write_metrics, JacobianMethod, RelationData, DEFAULT_FD_STEP};
use crate::pipeline::{
    fit_relation, relation_model, measure_with_lre, report, run, write_planted, Experiment, JacobianKind,
    LreConfig, PlantedSpec,
};
use crate::regress::{
    build_feature_table, cross_model_transfer, loro_cv, loro_importance, mean, pearson, read_feature_table,
    read_records, train_forest, write_feature_table, Dataset, FeatureSet, Forest, ForestParams, TargetKind,
    DEFAULT_TREES,
};

#[derive(Parser, Debug)]
#[command(name = "freqlens", version, about = "Term counting, relational embeddings and frequency regression")]
pub struct Cli {
    /// Seed for anything randomized; overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Batch shards scanned in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    shards: usize,
    /// Output location; defaults to `out` or the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Corpus directory (manifest.toml, tokens.bin, optional docs.idx).
    #[arg(long)]
    corpus: PathBuf,
    /// Term dictionary (JSON lines).
    #[arg(long)]
    dict: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Occurrence and per-sequence presence counts.
    Count {
        #[command(flatten)]
        input: CorpusArgs,
        /// Also write every match to this position log.
        #[arg(long)]
        positions: Option<PathBuf>,
    },
    /// Per-sequence co-occurrence counts.
    Cooc {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, default_value = "presence")]
        pair_mode: PairMode,
    },
    /// Co-occurrence counts with documents as the window.
    DocCooc {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, default_value = "presence")]
        pair_mode: PairMode,
    },
    /// Cumulative counts at token budgets.
    Checkpoints {
        #[command(flatten)]
        input: CorpusArgs,
        /// Comma-separated, strictly increasing token cutoffs.
        #[arg(long, value_delimiter = ',', required = true)]
        schedule: Vec<u64>,
        #[arg(long, default_value = "presence")]
        pair_mode: PairMode,
    },
    /// Synthetic corpus with planted counts, or the planted experiment.
    Synth {
        /// Synthesis spec (TOML); with --planted, an optional planted spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Write the full planted-frequency experiment instead.
        #[arg(long)]
        planted: bool,
    },
    /// Sums count directories.
    Merge {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Fits one relation at fixed settings.
    FitLre {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Edit rank; full rank when absent.
        #[arg(long)]
        rank: Option<usize>,
        /// Probe point; the last one when absent.
        #[arg(long)]
        probe: Option<usize>,
        #[arg(long, default_value_t = crate::lre::DEFAULT_FIT_EXAMPLES)]
        fit_examples: usize,
        #[arg(long)]
        analytic: bool,
    },
    /// Sweeps β, rank and probe point, then refits at the best setting.
    Sweep {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long, default_value_t = crate::lre::DEFAULT_FIT_EXAMPLES)]
        fit_examples: usize,
        #[arg(long)]
        analytic: bool,
    },
    /// Relation metrics and per-example records for fitted LREs.
    Metrics {
        #[arg(long, required = true)]
        relation: Vec<PathBuf>,
        /// Directory holding `<relation>.lre` files.
        #[arg(long)]
        lre_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        fewshot_trials: u32,
    },
    /// Joins example records with counts into a feature table.
    Features {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, default_value = "subject_object")]
        target_kind: TargetKind,
    },
    /// Leave-one-relation-out regression.
    Regress {
        #[arg(long)]
        features: PathBuf,
        /// Number of seeds, starting at the global seed.
        #[arg(long, default_value_t = 4)]
        seeds: u64,
        #[arg(long, default_value_t = DEFAULT_TREES)]
        trees: usize,
        /// Use only the language-model features.
        #[arg(long)]
        lm_only: bool,
    },
    /// Held-out permutation importance.
    Importance {
        #[arg(long)]
        features: PathBuf,
        /// Features merged into their first principal component; `none` disables.
        #[arg(long, value_delimiter = ',', default_value = "faithfulness,faith_prob")]
        pca_merge: Vec<String>,
        #[arg(long, default_value_t = 4)]
        seeds: u64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = DEFAULT_TREES)]
        trees: usize,
    },
    /// Scores a trained forest on another model's rows.
    Transfer {
        #[arg(long)]
        forest: PathBuf,
        /// Feature table the forest was trained on (for baselines).
        #[arg(long)]
        train_features: PathBuf,
        #[arg(long)]
        eval_features: PathBuf,
        /// Target-model training tokens over source-model training tokens.
        #[arg(long)]
        token_ratio: f64,
        #[arg(long, default_value = "source")]
        source_model: String,
        #[arg(long, default_value = "target")]
        target_model: String,
    },
    /// Per-relation correlation of log frequency with a feature.
    Correlate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "hard_causality")]
        feature: String,
    },
    /// Checks an experiment config without running anything.
    Validate { config: PathBuf },
    /// Runs every stage of an experiment.
    Run { config: PathBuf },
    /// Rebuilds the summary tables of a finished run.
    Report { run_dir: PathBuf },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::InvalidArgument(_)
        | Error::Schedule(_)
        | Error::Dictionary(_)
        | Error::DuplicatePattern { .. }
        | Error::UnresolvedTerms(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_input(input: &CorpusArgs) -> Result<(Matcher, TokenCorpus)> {
    let dict = TermDictionary::load(&input.dict)?;
    Ok((Matcher::compile(&dict), TokenCorpus::load(&input.corpus)?))
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn seed_list(start: u64, n: u64) -> Vec<u64> {
    (start..start + n).collect()
}

fn method(analytic: bool) -> JacobianMethod {
    if analytic {
        JacobianMethod::Analytic
    } else {
        JacobianMethod::CentralDifference { h: DEFAULT_FD_STEP }
    }
}

fn lre_config(fit_examples: usize, analytic: bool) -> LreConfig {
    LreConfig {
        fit_examples,
        jacobian: if analytic { JacobianKind::Analytic } else { JacobianKind::CentralDifference },
        ..Default::default()
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let seed = cli.seed.unwrap_or(0);
    let scan = |pair_mode: PairMode, emit_positions: bool| ScanOptions {
        emit_positions,
        pair_mode,
        shards: cli.shards,
    };
    match cli.command {
        Command::Count { input, positions } => {
            let (m, corpus) = load_input(&input)?;
            let out = scan_corpus(&m, &corpus, &scan(PairMode::Presence, positions.is_some()));
            out.counts.write_dir(&out_dir(&cli.out)?)?;
            if let (Some(path), Some(records)) = (positions, out.positions) {
                write_positions(&path, &records)?;
            }
        }
        Command::Cooc { input, pair_mode } => {
            let (m, corpus) = load_input(&input)?;
            scan_corpus(&m, &corpus, &scan(pair_mode, false)).counts.write_dir(&out_dir(&cli.out)?)?;
        }
        Command::DocCooc { input, pair_mode } => {
            let (m, corpus) = load_input(&input)?;
            document_counts(&m, &corpus, pair_mode)?.write_dir(&out_dir(&cli.out)?)?;
        }
        Command::Checkpoints {
            input,
            schedule,
            pair_mode,
        } => {
            let schedule = CheckpointSchedule::new(schedule)?;
            let (m, corpus) = load_input(&input)?;
            let tables = cumulative_counts(&m, &corpus, &schedule, &scan(pair_mode, false))?;
            write_checkpoints(&out_dir(&cli.out)?, &tables)?;
        }
        Command::Synth { spec, planted } => {
            let dir = out_dir(&cli.out)?;
            if planted {
                let mut ps = match spec {
                    Some(p) => {
                        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                        toml::from_str(&text).map_err(|e| Error::parse(p.display().to_string(), e))?
                    }
                    None => PlantedSpec::default(),
                };
                if let Some(s) = cli.seed {
                    ps.seed = s;
                }
                println!("{}", write_planted(&ps, &dir)?.display());
            } else {
                let path = spec.ok_or_else(|| Error::InvalidArgument("synth needs --spec or --planted".into()))?;
                let file = SynthSpecFile::load(&path)?;
                let mut spec = file.resolve(path.parent().unwrap_or(Path::new(".")))?;
                if let Some(s) = cli.seed {
                    spec.seed = s;
                }
                let (corpus, truth) = generate_synthetic_corpus(&spec)?;
                corpus.save(&dir.join("corpus"))?;
                truth.write_dir(&dir.join("truth"))?;
            }
        }
        Command::Merge { inputs } => {
            let mut total = CountTable::new();
            for dir in &inputs {
                total = merge_counts(&total, &CountTable::read_dir(dir)?);
            }
            total.write_dir(&out_dir(&cli.out)?)?;
        }
        Command::FitLre {
            relation,
            beta,
            rank,
            probe,
            fit_examples,
            analytic,
        } => {
            let data = RelationData::load(&relation)?;
            let model = relation_model(&data)?;
            let points = crate::lre::RelationModel::probe_points(&model);
            let probe = match probe {
                Some(p) if !points.contains(&p) => {
                    return Err(Error::InvalidArgument(format!("probe point {p} not in {points:?}")));
                }
                Some(p) => p,
                None => points.into_iter().max().unwrap_or(0),
            };
            let lre = fit_lre(&model, &data.fit_set(fit_examples)?, beta, probe, method(analytic))?;
            let lre = match rank {
                Some(r) => lre.with_rank(r),
                None => lre,
            };
            let path = out_dir(&cli.out)?.join(format!("{}.lre", data.relation));
            save_lre(&path, &data.relation, &lre)?;
            println!("{}", path.display());
        }
        Command::Sweep {
            relation,
            fit_examples,
            analytic,
        } => {
            let data = RelationData::load(&relation)?;
            let (lre, sweep) = fit_relation(&data, &lre_config(fit_examples, analytic))?;
            let dir = out_dir(&cli.out)?;
            save_lre(&dir.join(format!("{}.lre", data.relation)), &data.relation, &lre)?;
            let text = serde_json::to_string_pretty(&sweep).expect("sweep serializes");
            write(&dir.join(format!("{}.sweep.json", data.relation)), &(text + "\n"))?;
            let b = &sweep.best;
            println!(
                "probe_point={} beta={} rank={} faithfulness={:.6} hard_causality={:.6}",
                b.probe_point, b.beta, b.rank, b.faithfulness, b.hard_causality
            );
        }
        Command::Metrics {
            relation,
            lre_dir,
            fewshot_trials,
        } => {
            let mut cfg = lre_config(crate::lre::DEFAULT_FIT_EXAMPLES, false);
            cfg.fewshot_trials = fewshot_trials;
            let mut rows = Vec::new();
            let mut records = Vec::new();
            for path in &relation {
                let data = RelationData::load(path)?;
                let (_, lre) = load_lre(&lre_dir.join(format!("{}.lre", data.relation)))?;
                let (row, recs) = measure_with_lre(&data, &lre, &cfg)?;
                rows.push(row);
                records.extend(recs);
            }
            let dir = out_dir(&cli.out)?;
            write_metrics(&dir.join("relation_metrics.tsv"), &rows)?;
            crate::regress::write_records(&dir.join("example_records.tsv"), &records)?;
        }
        Command::Features {
            records,
            counts,
            dict,
            target_kind,
        } => {
            let records = read_records(&records)?;
            let counts = CountTable::read_dir(&counts)?;
            let n_terms = TermDictionary::load(&dict)?.len();
            let rows = build_feature_table(&records, &counts, n_terms, target_kind)?;
            let path = out_dir(&cli.out)?.join("features.tsv");
            write_feature_table(&path, &rows)?;
            println!("{} rows kept of {}", rows.len(), records.len());
        }
        Command::Regress {
            features,
            seeds,
            trees,
            lm_only,
        } => {
            let rows = read_feature_table(&features)?;
            let set = if lm_only { FeatureSet::LmOnly } else { FeatureSet::LmAndLre };
            let params = ForestParams {
                n_trees: trees,
                ..Default::default()
            };
            let report = loro_cv(&rows, set, &seed_list(seed, seeds), &params)?;
            let dir = out_dir(&cli.out)?;
            write(&dir.join(format!("loro_{set}.tsv")), &report.to_tsv())?;
            let names = set.names();
            let data = Dataset::from_rows(&rows, &names)?;
            train_forest(&data.x, &data.y, &names, &params, seed)?.save(&dir.join("forest.bin"))?;
            println!(
                "within_magnitude_accuracy {:.4}±{:.4} mean_baseline {:.4} random_baseline {:.4}",
                report.accuracy.mean, report.accuracy.std, report.mean_baseline.mean, report.random_baseline.mean
            );
        }
        Command::Importance {
            features,
            pca_merge,
            seeds,
            repeats,
            trees,
        } => {
            let rows = read_feature_table(&features)?;
            let merge: Vec<&str> = pca_merge.iter().map(String::as_str).filter(|s| *s != "none").collect();
            let params = ForestParams {
                n_trees: trees,
                ..Default::default()
            };
            let report = loro_importance(&rows, &seed_list(seed, seeds), &params, &merge, repeats)?;
            let tsv = report.to_tsv();
            write(&out_dir(&cli.out)?.join("importance.tsv"), &tsv)?;
            print!("{tsv}");
        }
        Command::Transfer {
            forest,
            train_features,
            eval_features,
            token_ratio,
            source_model,
            target_model,
        } => {
            let forest = Forest::load(&forest)?;
            let train_ln: Vec<f64> =
                read_feature_table(&train_features)?.iter().map(|r| r.target_ln_count).collect();
            let rows = read_feature_table(&eval_features)?;
            let report =
                cross_model_transfer(&forest, &rows, &train_ln, token_ratio, &source_model, &target_model, seed)?;
            let tsv = report.to_tsv();
            write(&out_dir(&cli.out)?.join("transfer.tsv"), &tsv)?;
            print!("{tsv}");
        }
        Command::Correlate { features, feature } => {
            let rows = read_feature_table(&features)?;
            let mut by_rel: std::collections::BTreeMap<&str, (Vec<f64>, Vec<f64>)> = Default::default();
            for r in &rows {
                let v = r.feature(&feature).ok_or_else(|| {
                    Error::InvalidArgument(format!("unknown feature `{feature}`"))
                })?;
                let e = by_rel.entry(&r.relation_id).or_default();
                e.0.push(r.target_ln_count / std::f64::consts::LN_10);
                e.1.push(v);
            }
            println!("relation\tmean_log10_1p_count\tmean_{feature}");
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (rel, (x, y)) in &by_rel {
                xs.push(mean(x));
                ys.push(mean(y));
                println!("{rel}\t{:.6}\t{:.6}", mean(x), mean(y));
            }
            println!("pearson_r\t{:.6}", pearson(&xs, &ys)?);
        }
        Command::Validate { config } => {
            let exp = Experiment::load(&config)?;
            let problems = exp.validate();
            for p in &problems {
                println!("{p}");
            }
            return Ok(if problems.is_empty() { 0 } else { 1 });
        }
        Command::Run { config } => {
            let mut exp = Experiment::load(&config)?;
            if let Some(out) = cli.out {
                exp = exp.with_out(out);
            }
            if let Some(s) = cli.seed {
                exp.config.seed = s;
            }
            let problems = exp.validate();
            if !problems.is_empty() {
                for p in &problems {
                    eprintln!("{p}");
                }
                return Ok(1);
            }
            let manifest = run(&exp, cli.shards)?;
            for s in &manifest.stages {
                println!("{}\t{:?}\t{} ms", s.name, s.status, s.wall_ms);
            }
        }
        Command::Report { run_dir } => {
            println!("{}", report(&run_dir)?.display());
        }
    }
    Ok(0)
}
