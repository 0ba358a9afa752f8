use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use opfreq::classic::ClassifierKind;
use opfreq::cluster::Algorithm;
use opfreq::corpus::{self, FeatureMatrix};
use opfreq::features::{self, ClassFilter};
use opfreq::pipeline::{self, CorpusSource, PipelineConfig, ReducerKind};
use opfreq::Scale;

/// Exit status when every sweep cell (or every cluster classifier) failed.
const EXIT_ALL_FAILED: u8 = 3;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "opfreq",
    version,
    about = "Android malware triage from Dalvik opcode frequencies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Seed for every random stream (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports (overrides the config file).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Also write per-figure CSVs under <out-dir>/plots.
    #[arg(long, global = true)]
    plot_data: bool,
    /// Worker threads for parallel cells.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Default)]
struct CorpusArgs {
    /// Feature-matrix CSV.
    #[arg(long, conflicts_with_all = ["manifest", "profile"])]
    matrix: Option<PathBuf>,
    /// `app_id,path,label` manifest of dex/smali files.
    #[arg(long, conflicts_with = "profile")]
    manifest: Option<PathBuf>,
    /// Synthetic profile: `default`, `benign-mode` or a TOML file.
    #[arg(long)]
    profile: Option<String>,
    /// Synthetic benign apps.
    #[arg(long)]
    benign: Option<usize>,
    /// Synthetic malware apps.
    #[arg(long)]
    malware: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the apps of a manifest into a raw-count feature matrix.
    Extract {
        manifest: PathBuf,
        /// Output CSV (default <out-dir>/features.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prominent-opcode, correlation and unused-opcode reports.
    Features {
        matrix: PathBuf,
        #[arg(short, long, default_value_t = 15)]
        k: usize,
        /// Correlated pairs kept per class subset.
        #[arg(long, default_value_t = 10)]
        pairs: usize,
    },
    /// Draw a synthetic corpus.
    Synth {
        #[arg(long, default_value = "default")]
        profile: String,
        #[arg(long, default_value_t = 100)]
        benign: usize,
        #[arg(long, default_value_t = 100)]
        malware: usize,
        /// Output CSV (default <out-dir>/synthetic.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every reducer × classifier cell as one report table.
    Sweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Comma-separated reducers (none, VT, PCA, AE-1L, AE-3L).
        #[arg(long, value_delimiter = ',')]
        reducers: Vec<String>,
        /// Comma-separated classifiers (DT, kNN, SVM, RF, AdaBoost, DNN-2L, DNN-4L, DNN-7L).
        #[arg(long, value_delimiter = ',')]
        classifiers: Vec<String>,
    },
    /// Clustering algorithms over a k range, scored by silhouette and CH.
    ClusterStudy {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        /// Cluster row-normalized frequencies instead of raw counts.
        #[arg(long)]
        normalized: bool,
    },
    /// k-means (k = 2), then direct-label pure clusters and train in the rest.
    ClusterClassify {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        purity: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        classifiers: Vec<String>,
        /// Cluster row-normalized frequencies instead of raw counts.
        #[arg(long)]
        normalized: bool,
    },
}

/// Error carrying its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            error,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = String>>(items: &[String]) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| s.trim().parse::<T>().map_err(|e| anyhow!(e)))
        .collect()
}

fn parse_classifiers(items: &[String]) -> Result<Vec<ClassifierKind>> {
    items
        .iter()
        .map(|s| s.trim().parse::<ClassifierKind>().map_err(|e| anyhow!("{e}")))
        .collect()
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    Ok(cfg)
}

fn apply_corpus(cfg: &mut PipelineConfig, args: &CorpusArgs) {
    if let Some(path) = &args.matrix {
        cfg.corpus = CorpusSource::Matrix { path: path.clone() };
    } else if let Some(path) = &args.manifest {
        cfg.corpus = CorpusSource::Manifest { path: path.clone() };
    } else if args.profile.is_some() || args.benign.is_some() || args.malware.is_some() {
        let (mut profile, mut n_benign, mut n_malware) = match &cfg.corpus {
            CorpusSource::Synthetic {
                profile,
                n_benign,
                n_malware,
            } => (profile.clone(), *n_benign, *n_malware),
            _ => (Default::default(), 2000, 2000),
        };
        if let Some(p) = &args.profile {
            profile = pipeline::ProfileRef(p.clone());
        }
        n_benign = args.benign.unwrap_or(n_benign);
        n_malware = args.malware.unwrap_or(n_malware);
        cfg.corpus = CorpusSource::Synthetic {
            profile,
            n_benign,
            n_malware,
        };
    }
}

fn load(cfg: &PipelineConfig) -> Result<FeatureMatrix> {
    let loaded = pipeline::load_corpus(&cfg.corpus, cfg.seed)?;
    if !loaded.warnings.is_empty() {
        eprintln!("warning: {} apps skipped", loaded.warnings.len());
        for w in &loaded.warnings {
            eprintln!("  {w}");
        }
    }
    Ok(loaded.matrix)
}

fn plots(common: &Common, cfg: &PipelineConfig, matrix: &FeatureMatrix) {
    if !common.plot_data {
        return;
    }
    let dir = cfg.out_dir.join("plots");
    match pipeline::write_plot_data(&dir, matrix, cfg.cluster_study.input, cfg.seed) {
        Ok(()) => println!("plot data in {}", dir.display()),
        Err(e) => eprintln!("warning: plot data skipped: {e}"),
    }
}

fn out_path(cfg: &PipelineConfig, explicit: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
    let path = explicit.clone().unwrap_or_else(|| cfg.out_dir.join(default));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(path)
}

fn write_text(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = &cli.common;
    let mut cfg = load_config(common)?;
    match &cli.command {
        Command::Extract { manifest, out } => {
            let m = corpus::load_manifest(manifest).map_err(anyhow::Error::from)?;
            let ex = corpus::extract_corpus(&m).map_err(anyhow::Error::from)?;
            let path = out_path(&cfg, out, "features.csv")?;
            corpus::save_matrix(&ex.matrix, &path).map_err(anyhow::Error::from)?;
            for f in &ex.failures {
                eprintln!("warning: {} ({}): {}", f.app_id, f.path.display(), f.message);
            }
            println!(
                "extracted {} apps to {} ({} failed, {} unknown smali lines)",
                ex.matrix.n_rows(),
                path.display(),
                ex.failures.len(),
                ex.unknown_smali_lines
            );
            plots(common, &cfg, &ex.matrix);
        }
        Command::Features { matrix, k, pairs } => {
            let m = corpus::load_matrix(matrix).map_err(anyhow::Error::from)?;
            features_reports(&cfg, &m, *k, *pairs)?;
            plots(common, &cfg, &m);
        }
        Command::Synth {
            profile,
            benign,
            malware,
            out,
        } => {
            let p = pipeline::ProfileRef(profile.clone())
                .resolve()
                .map_err(anyhow::Error::from)?;
            let m = corpus::synth_corpus(*benign, *malware, &p, cfg.seed).map_err(anyhow::Error::from)?;
            let path = out_path(&cfg, out, "synthetic.csv")?;
            corpus::save_matrix(&m, &path).map_err(anyhow::Error::from)?;
            println!("wrote {} synthetic apps to {}", m.n_rows(), path.display());
            plots(common, &cfg, &m);
        }
        Command::Sweep {
            corpus,
            reducers,
            classifiers,
        } => {
            apply_corpus(&mut cfg, corpus);
            if !reducers.is_empty() {
                cfg.sweep.reducers = parse_list::<ReducerKind>(reducers)?;
            }
            if !classifiers.is_empty() {
                cfg.sweep.classifiers = parse_classifiers(classifiers)?;
            }
            cfg.validate().map_err(anyhow::Error::from)?;
            let m = load(&cfg)?;
            let out = pipeline::run_sweep(&m, &cfg.sweep, cfg.seed, cfg.workers).map_err(anyhow::Error::from)?;
            pipeline::write_sweep(&cfg.out_dir, &out).map_err(anyhow::Error::from)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let ok = out.rows.iter().filter(|r| !r.is_failed()).count();
            println!(
                "sweep: {ok}/{} cells ok, report in {}",
                out.rows.len(),
                cfg.out_dir.join("sweep_report.csv").display()
            );
            plots(common, &cfg, &m);
            if out.all_failed() {
                return Err(Failure {
                    code: EXIT_ALL_FAILED,
                    error: anyhow!("every sweep cell failed"),
                });
            }
        }
        Command::ClusterStudy {
            corpus,
            algorithms,
            eps,
            normalized,
        } => {
            apply_corpus(&mut cfg, corpus);
            if !algorithms.is_empty() {
                cfg.cluster_study.algorithms = parse_list::<Algorithm>(algorithms)?;
            }
            if !eps.is_empty() {
                cfg.cluster_study.eps = eps.clone();
            }
            if *normalized {
                cfg.cluster_study.input = Scale::RowNormalized;
            }
            cfg.validate().map_err(anyhow::Error::from)?;
            let m = load(&cfg)?;
            let out =
                pipeline::cluster_study(&m, &cfg.cluster_study, cfg.seed, cfg.workers).map_err(anyhow::Error::from)?;
            pipeline::write_cluster_study(&cfg.out_dir, &out).map_err(anyhow::Error::from)?;
            for r in out.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("warning: {} {}: {}", r.algorithm, r.param, r.error.as_deref().unwrap());
            }
            match out.recommended() {
                Some(r) => println!(
                    "recommended: {} {} (silhouette {:.5})",
                    r.algorithm,
                    r.param,
                    r.silhouette.unwrap_or(f64::NAN)
                ),
                None => println!("no configuration produced two or more clusters"),
            }
            plots(common, &cfg, &m);
        }
        Command::ClusterClassify {
            corpus,
            purity,
            classifiers,
            normalized,
        } => {
            apply_corpus(&mut cfg, corpus);
            if let Some(p) = purity {
                cfg.cluster_classify.purity = *p;
            }
            if !classifiers.is_empty() {
                cfg.cluster_classify.classifiers = parse_classifiers(classifiers)?;
            }
            if *normalized {
                cfg.cluster_classify.cluster_input = Scale::RowNormalized;
            }
            cfg.validate().map_err(anyhow::Error::from)?;
            let m = load(&cfg)?;
            let report = pipeline::cluster_classify(&m, &cfg.cluster_classify, cfg.seed, cfg.workers)
                .map_err(anyhow::Error::from)?;
            pipeline::write_cluster_classify(&cfg.out_dir, &report).map_err(anyhow::Error::from)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for c in &report.clusters {
                let decision = match c.decision {
                    pipeline::ClusterDecision::DirectLabel { label } => format!("direct-label {label}"),
                    pipeline::ClusterDecision::TrainClassifier => "train".to_string(),
                };
                println!(
                    "cluster {}: {} apps, {:.2}% malware, {decision}",
                    c.cluster, c.size, c.malware_pct
                );
            }
            plots(common, &cfg, &m);
            let trained: Vec<_> = report.trained().collect();
            if !trained.is_empty() && trained.iter().all(|c| c.rows.iter().all(|r| r.is_failed())) {
                return Err(Failure {
                    code: EXIT_ALL_FAILED,
                    error: anyhow!("every cluster classifier failed"),
                });
            }
        }
    }
    Ok(())
}

fn features_reports(cfg: &PipelineConfig, m: &FeatureMatrix, k: usize, pairs: usize) -> Result<()> {
    let normalized = match m.scale {
        Scale::RawCounts => features::normalize_rows(m).matrix,
        _ => m.clone(),
    };
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let report = features::prominent_opcodes(&normalized, k)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf, &normalized.feature_names)?;
    write_text(&dir.join("prominent_opcodes.csv"), buf)?;

    let mut all_pairs = Vec::new();
    for class in [ClassFilter::Malware, ClassFilter::Benign, ClassFilter::All] {
        match features::correlation_pairs(&normalized, class, pairs) {
            Ok(p) => all_pairs.extend(p),
            Err(e) => eprintln!("warning: {} correlations skipped: {e}", class.as_str()),
        }
    }
    let mut buf = Vec::new();
    features::write_correlations_csv(&mut buf, &all_pairs, &normalized.feature_names)?;
    write_text(&dir.join("correlations.csv"), buf)?;

    if m.n_features() != 256 {
        bail!(
            "unused-opcode report needs the 256 opcode columns, got {}",
            m.n_features()
        );
    }
    let unused = features::unused_opcodes(m);
    let mut buf = Vec::new();
    features::write_unused_csv(&mut buf, &unused)?;
    write_text(&dir.join("unused_opcodes.csv"), buf)?;

    let summary = if report.is_flat() {
        "no discriminative opcodes: class profiles are identical".to_string()
    } else {
        match report.top().first() {
            Some(&top) => format!(
                "top opcode {} (D = {:.6})",
                normalized.feature_names[top], report.difference[top]
            ),
            None => "ranking not requested (k = 0)".to_string(),
        }
    };
    let summary = format!("{summary}; {} unused opcodes", unused.len());
    write_text(&dir.join("features_summary.txt"), format!("{summary}\n"))?;
    println!("{summary}");
    Ok(())
}
