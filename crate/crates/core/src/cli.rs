//! Command-line front end. Every subcommand is a thin composition of library
//! calls; outputs carry a config echo (seed, archive checksums, input
//! hashes) and nothing time-dependent, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::baselines::{Baseline, MsSsimConfig, MseSpace, SsimConfig};
use crate::error::{Error, Result};
use crate::eval::{
    bootstrap_ci, consensus_matrix, cut_k, hac, normalize01, read_groupings, spearman_rho,
    ClusterLabels, ClusterScores, Linkage, ResultsDoc, VisualChannel,
};
use crate::matrix::{format_f64, DistanceMatrix};
use crate::metric::{
    exclude_layer, layer_matrices_from_features, matrix_from_features, DeepMetric, DistanceConfig,
    ScalingWeights,
};
use crate::nn::{load_archive, random_init, ArchName, ArchitectureSpec, TensorArchive, WeightSet};
use crate::preprocess::{list_images, load_image_dir, read_image, ImageStimulus, PreprocessConfig};
use crate::stimuli::{write_palette, PaletteSpec};

pub const WEIGHTS_DIR_ENV: &str = "VIZSIM_WEIGHTS_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "vizsim",
    version,
    about = "Perceptual distances between visualization images"
)]
pub struct Cli {
    /// Worker threads for feature extraction and pairwise distances.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance between two images.
    Dist {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Optional JSON sidecar path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise distance matrix over every image in a directory.
    Matrix {
        dir: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// CSV destination; `<out>.meta.json` receives the run metadata.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ward clustering of a distance matrix, cut into `k` clusters.
    Cluster {
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "d2")]
        linkage: Linkage,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement between cluster labels and a reference (groupings JSON or labels CSV).
    Evalclust {
        labels: PathBuf,
        reference: PathBuf,
        /// Clusters in the reference cut; defaults to the label count of `labels`.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "d2")]
        linkage: Linkage,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spearman correlation between a distance matrix and a perceptual kernel.
    KernelEval {
        matrix: PathBuf,
        kernel: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Layer ablations and random-weight trials against a reference.
    Ablate {
        #[arg(long, value_enum)]
        mode: AblateMode,
        dir: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        reference: ReferenceArgs,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render stimulus palettes as PNGs.
    Stimuli {
        #[arg(long, default_value = "all")]
        channel: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblateMode {
    PerLayer,
    Loo,
    Random,
}

#[derive(Clone, Debug, Args)]
pub struct BackendArgs {
    /// alexnet, squeezenet, vgg16, resnet18, resnet50, mse, ssim or ms-ssim.
    #[arg(long, default_value = "alexnet")]
    pub backend: String,
    /// Archive directory, a weight-set name resolved under the weights
    /// directory, or `random`.
    #[arg(long, default_value = "imagenet")]
    pub weights: String,
    /// Channel-scaling archive directory or `lpips`; channels weigh 1 when absent.
    #[arg(long)]
    pub scaling: Option<String>,
    #[arg(long, default_value_t = 64, value_parser = parse_size)]
    pub size: usize,
    /// Comma-separated extraction layer indices.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long)]
    pub exclude_layer: Option<usize>,
    /// Color space for the MSE backend.
    #[arg(long, default_value = "srgb")]
    pub space: String,
    /// Number of MS-SSIM scales.
    #[arg(long, default_value_t = 5)]
    pub scales: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = WEIGHTS_DIR_ENV)]
    pub weights_dir: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<usize, String> {
    match s {
        "64" => Ok(64),
        "224" => Ok(224),
        _ => Err(format!("size must be 64 or 224, got `{s}`")),
    }
}

#[derive(Clone, Debug, Args)]
pub struct ReferenceArgs {
    /// Kernel CSV; evaluation is Spearman correlation after range normalization.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Grouping records JSON; evaluation is cluster agreement at `--k`.
    #[arg(long)]
    pub groupings: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value = "d2")]
    pub linkage: Linkage,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A configured distance: a deep backbone or a pixel baseline.
enum Engine {
    Deep {
        metric: Box<DeepMetric>,
        checksum: String,
        scaling_checksum: Option<String>,
    },
    Pixel(Baseline),
}

fn resolve_archive(
    arg: &str,
    arch: ArchName,
    set_suffix: &str,
    dir: Option<&Path>,
) -> Result<TensorArchive> {
    let as_path = Path::new(arg);
    if as_path.join(crate::nn::archive::MANIFEST_FILE).is_file() {
        return load_archive(as_path);
    }
    let base = dir.ok_or_else(|| {
        Error::invalid(format!(
            "`{arg}` is not an archive directory and {WEIGHTS_DIR_ENV} is not set"
        ))
    })?;
    let candidate = base.join(format!("{}-{set_suffix}", arch.as_str()));
    if !candidate.join(crate::nn::archive::MANIFEST_FILE).is_file() {
        return Err(Error::invalid(format!(
            "no archive for `{arg}` at {}",
            candidate.display()
        )));
    }
    load_archive(&candidate)
}

impl BackendArgs {
    fn distance_config(&self, layers: usize) -> Result<DistanceConfig> {
        let cfg = match &self.layers {
            Some(l) => DistanceConfig::with_layers(l.clone()),
            None => DistanceConfig::default(),
        };
        match self.exclude_layer {
            Some(l) => exclude_layer(&cfg, layers, l),
            None => {
                cfg.validate(layers)?;
                Ok(cfg)
            }
        }
    }

    fn arch(&self) -> Result<Option<ArchName>> {
        match self.backend.as_str() {
            "mse" | "ssim" | "ms-ssim" => Ok(None),
            other => {
                let a: ArchName = other.parse()?;
                if !a.is_available() {
                    return Err(Error::invalid(format!(
                        "{a} needs the extended-backbones feature"
                    )));
                }
                Ok(Some(a))
            }
        }
    }

    fn weights_for(&self, arch: ArchName, seed: u64) -> Result<TensorArchive> {
        if self.weights == "random" {
            return Ok(random_init(&ArchitectureSpec::get(arch)?, seed));
        }
        let suffix = self
            .weights
            .parse::<WeightSet>()
            .map(|w| w.as_str().to_string())
            .unwrap_or_else(|_| self.weights.clone());
        resolve_archive(&self.weights, arch, &suffix, self.weights_dir.as_deref())
    }

    fn engine_with_weights(&self, weights: TensorArchive) -> Result<Engine> {
        let spec = ArchitectureSpec::get(weights.architecture)?;
        let (scaling, scaling_checksum) = match &self.scaling {
            None => (None, None),
            Some(s) => {
                let ar = resolve_archive(
                    s,
                    spec.name,
                    WeightSet::LpipsScaling.as_str(),
                    self.weights_dir.as_deref(),
                )?;
                (
                    Some(ScalingWeights::from_archive(&ar, &spec)?),
                    Some(ar.checksum()),
                )
            }
        };
        let config = self.distance_config(spec.extraction_layer_count)?;
        let checksum = weights.checksum();
        let metric = DeepMetric::new(
            weights,
            scaling,
            PreprocessConfig::imagenet(self.size),
            config,
        )?;
        Ok(Engine::Deep {
            metric: Box::new(metric),
            checksum,
            scaling_checksum,
        })
    }

    fn engine(&self) -> Result<Engine> {
        match self.arch()? {
            Some(arch) => self.engine_with_weights(self.weights_for(arch, self.seed)?),
            None => Ok(Engine::Pixel(match self.backend.as_str() {
                "mse" => Baseline::Mse {
                    space: self.space.parse::<MseSpace>()?,
                },
                "ssim" => Baseline::Ssim(SsimConfig::default()),
                _ => Baseline::MsSsim(MsSsimConfig::with_scales(self.scales)),
            })),
        }
    }

    fn echo(&self, engine: &Engine) -> Value {
        let mut v = json!({
            "backend": self.backend,
            "size": self.size,
            "seed": self.seed,
        });
        match engine {
            Engine::Deep {
                metric,
                checksum,
                scaling_checksum,
            } => {
                v["weights"] = json!(self.weights);
                v["weight_set"] = json!(metric.weights.weight_set.as_str());
                v["archive_sha256"] = json!(checksum);
                v["scaling"] = json!(metric.scaling.label);
                v["scaling_sha256"] = json!(scaling_checksum);
                v["layers"] = json!(metric
                    .config
                    .resolve(metric.spec.extraction_layer_count)
                    .unwrap_or_default());
                v["eps"] = json!(metric.config.eps);
            }
            Engine::Pixel(b) => {
                v["baseline"] = serde_json::to_value(b).expect("baseline serializes");
                if !matches!(b, Baseline::Mse { .. }) {
                    v["distance"] = json!("1 - similarity");
                }
            }
        }
        v
    }
}

impl Engine {
    fn distance(&self, a: &ImageStimulus, b: &ImageStimulus, size: usize) -> Result<f64> {
        match self {
            Engine::Deep { metric, .. } => metric.distance(a, b),
            Engine::Pixel(p) => {
                let m = p.pairwise_matrix(&[a.clone(), rename(b, a)], size)?;
                Ok(m.get(0, 1))
            }
        }
    }

    fn matrix(&self, images: &[ImageStimulus], size: usize) -> Result<DistanceMatrix> {
        match self {
            Engine::Deep { metric, .. } => metric.pairwise_matrix(images),
            Engine::Pixel(p) => p.pairwise_matrix(images, size),
        }
    }
}

/// Gives `b` an id distinct from `a`'s so a two-image matrix is well formed.
fn rename(b: &ImageStimulus, a: &ImageStimulus) -> ImageStimulus {
    let mut b = b.clone();
    if b.source_id == a.source_id {
        b.source_id.push_str("#2");
    }
    b
}

fn input_hashes(paths: &[PathBuf]) -> Result<Value> {
    let mut m = serde_json::Map::new();
    for p in paths {
        let name = p
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        m.insert(name, json!(sha256_file(p)?));
    }
    Ok(Value::Object(m))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// `<out>.meta.json` next to a CSV output.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Reference used to score a distance matrix.
enum Reference {
    Kernel(DistanceMatrix),
    Groupings {
        labels: ClusterLabels,
        k: usize,
        linkage: Linkage,
    },
}

impl Reference {
    fn from_args(args: &ReferenceArgs, ids: &[String]) -> Result<Self> {
        match (&args.kernel, &args.groupings) {
            (Some(k), None) => Ok(Reference::Kernel(DistanceMatrix::read_csv(k)?)),
            (None, Some(g)) => {
                let labels = reference_labels(g, ids, args.k, args.linkage)?;
                Ok(Reference::Groupings {
                    labels,
                    k: args.k,
                    linkage: args.linkage,
                })
            }
            _ => Err(Error::invalid(
                "give exactly one of --kernel or --groupings",
            )),
        }
    }

    fn score(&self, m: &DistanceMatrix) -> Result<BTreeMap<String, f64>> {
        match self {
            Reference::Kernel(kernel) => {
                let rho = spearman_rho(&normalize01(kernel)?, &normalize01(m)?)?;
                Ok(BTreeMap::from([("spearman".to_string(), rho)]))
            }
            Reference::Groupings { labels, k, linkage } => {
                let ours = cut_k(&hac(m, *linkage)?, *k)?;
                let s = ClusterScores::compute(labels, &ours)?;
                Ok(s.as_pairs()
                    .into_iter()
                    .map(|(n, v)| (n.to_string(), v))
                    .collect())
            }
        }
    }

    fn echo(&self, args: &ReferenceArgs) -> Result<Value> {
        Ok(match self {
            Reference::Kernel(_) => {
                let path = args.kernel.as_ref().expect("kernel reference");
                json!({"kernel": path.display().to_string(), "kernel_sha256": sha256_file(path)?, "measure": "spearman"})
            }
            Reference::Groupings { k, linkage, .. } => {
                let path = args.groupings.as_ref().expect("groupings reference");
                json!({"groupings": path.display().to_string(), "groupings_sha256": sha256_file(path)?,
                       "k": k, "linkage": linkage, "mi_normalization": "arithmetic"})
            }
        })
    }
}

/// Consensus distances over `ids`, Ward clustering, cut at `k`.
pub fn reference_labels(
    groupings: &Path,
    ids: &[String],
    k: usize,
    linkage: Linkage,
) -> Result<ClusterLabels> {
    let records = read_groupings(groupings)?;
    let consensus = consensus_matrix(ids, &records)?;
    cut_k(&hac(&consensus, linkage)?, k)
}

/// What a command produced: text for stdout and files written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
}

fn emit(out: &Option<PathBuf>, text: String) -> Result<Outcome> {
    match out {
        Some(p) => {
            std::fs::write(p, &text).map_err(|e| Error::io(p, e))?;
            Ok(Outcome::default())
        }
        None => Ok(Outcome { stdout: text }),
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.threads {
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| run_command(cli.command))
        }
        None => run_command(cli.command),
    }
}

fn run_command(command: Command) -> Result<Outcome> {
    match command {
        Command::Dist { a, b, backend, out } => {
            let engine = backend.engine()?;
            let (ia, ib) = (read_image(&a)?, read_image(&b)?);
            let d = engine.distance(&ia, &ib, backend.size)?;
            if let Some(path) = &out {
                let meta = json!({
                    "command": "dist",
                    "config": backend.echo(&engine),
                    "inputs": input_hashes(&[a.clone(), b.clone()])?,
                    "distance": d,
                });
                write_json(path, &meta)?;
            }
            Ok(Outcome {
                stdout: format!("{}\n", format_f64(d)),
            })
        }
        Command::Matrix { dir, backend, out } => {
            let engine = backend.engine()?;
            let images = load_image_dir(&dir)?;
            let m = engine.matrix(&images, backend.size)?;
            if let Some(path) = &out {
                let meta = json!({
                    "command": "matrix",
                    "config": backend.echo(&engine),
                    "inputs": input_hashes(&list_images(&dir)?)?,
                    "n": m.len(),
                });
                write_json(&meta_path(path), &meta)?;
            }
            emit(&out, m.to_csv_string())
        }
        Command::Cluster {
            matrix,
            k,
            linkage,
            out,
        } => {
            let m = DistanceMatrix::read_csv(&matrix)?;
            let labels = cut_k(&hac(&m, linkage)?, k)?;
            if let Some(path) = &out {
                let meta = json!({
                    "command": "cluster",
                    "config": {"k": k, "linkage": linkage, "matrix_sha256": sha256_file(&matrix)?},
                });
                write_json(&meta_path(path), &meta)?;
            }
            emit(&out, labels.to_csv_string())
        }
        Command::Evalclust {
            labels,
            reference,
            k,
            linkage,
            out,
        } => {
            let ours = ClusterLabels::read_csv(&labels)?;
            let is_csv = reference
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let k = k.unwrap_or_else(|| ours.cluster_count());
            let theirs = if is_csv {
                ClusterLabels::read_csv(&reference)?
            } else {
                reference_labels(&reference, &ours.ids, k, linkage)?
            };
            let scores = ClusterScores::compute(&theirs, &ours)?;
            let mut doc = ResultsDoc::new(json!({
                "command": "evalclust",
                "labels_sha256": sha256_file(&labels)?,
                "reference_sha256": sha256_file(&reference)?,
                "reference_kind": if is_csv { "labels" } else { "groupings" },
                "k": k,
                "linkage": linkage,
                "mi_normalization": "arithmetic",
            }));
            for (n, v) in scores.as_pairs() {
                doc.insert(n, v);
            }
            emit(&out, doc.to_json_string())
        }
        Command::KernelEval {
            matrix,
            kernel,
            out,
        } => {
            let m = DistanceMatrix::read_csv(&matrix)?;
            let k = DistanceMatrix::read_csv(&kernel)?;
            if m.len() != k.len() {
                return Err(Error::invalid(format!(
                    "matrix is {0}x{0} but kernel is {1}x{1}",
                    m.len(),
                    k.len()
                )));
            }
            let rho = spearman_rho(&normalize01(&k)?, &normalize01(&m)?)?;
            let mut doc = ResultsDoc::new(json!({
                "command": "kernel-eval",
                "matrix_sha256": sha256_file(&matrix)?,
                "kernel_sha256": sha256_file(&kernel)?,
                "normalization": "min-max off-diagonal",
            }));
            doc.insert("spearman", rho);
            emit(&out, doc.to_json_string())
        }
        Command::Ablate {
            mode,
            dir,
            backend,
            reference,
            trials,
            bootstrap,
            out,
        } => {
            let doc = ablate(mode, &dir, &backend, &reference, trials, bootstrap)?;
            emit(&out, doc.to_json_string())
        }
        Command::Stimuli { channel, out } => {
            let channels: Vec<VisualChannel> = if channel == "all" {
                VisualChannel::ALL.to_vec()
            } else {
                vec![channel.parse()?]
            };
            let mut lines = String::new();
            for ch in channels {
                let files = write_palette(&PaletteSpec::standard(ch)?, &out)?;
                lines.push_str(&format!("{ch}: {} images\n", files.len() - 1));
            }
            Ok(Outcome { stdout: lines })
        }
    }
}

fn ablate(
    mode: AblateMode,
    dir: &Path,
    backend: &BackendArgs,
    reference_args: &ReferenceArgs,
    trials: usize,
    bootstrap: usize,
) -> Result<ResultsDoc> {
    let arch = backend
        .arch()?
        .ok_or_else(|| Error::invalid("ablations need a deep backend"))?;
    let images = load_image_dir(dir)?;
    let ids: Vec<String> = images.iter().map(|im| im.source_id.clone()).collect();
    let reference = Reference::from_args(reference_args, &ids)?;
    let mut config = json!({
        "command": "ablate",
        "mode": format!("{mode:?}").to_lowercase(),
        "backend": backend.backend,
        "size": backend.size,
        "seed": backend.seed,
        "reference": reference.echo(reference_args)?,
        "inputs": input_hashes(&list_images(dir)?)?,
    });
    let mut doc = ResultsDoc::default();
    match mode {
        AblateMode::PerLayer | AblateMode::Loo => {
            let Engine::Deep {
                metric, checksum, ..
            } = backend.engine_with_weights(backend.weights_for(arch, backend.seed)?)?
            else {
                unreachable!("deep backend")
            };
            config["archive_sha256"] = json!(checksum);
            config["weights"] = json!(backend.weights);
            let stacks = metric.feature_cache(&images)?;
            let n_layers = metric.spec.extraction_layer_count;
            let full = matrix_from_features(
                ids.clone(),
                &stacks,
                &metric.scaling,
                &DistanceConfig::default(),
            )?;
            for (name, v) in reference.score(&full)? {
                doc.insert(format!("all/{name}"), v);
            }
            let per_layer = if mode == AblateMode::PerLayer {
                layer_matrices_from_features(ids.clone(), &stacks, &metric.scaling)?
            } else {
                (0..n_layers)
                    .map(|l| {
                        let cfg = exclude_layer(&DistanceConfig::default(), n_layers, l)?;
                        matrix_from_features(ids.clone(), &stacks, &metric.scaling, &cfg)
                    })
                    .collect::<Result<_>>()?
            };
            let tag = if mode == AblateMode::PerLayer {
                "layer"
            } else {
                "without"
            };
            for (l, m) in per_layer.iter().enumerate() {
                for (name, v) in reference.score(m)? {
                    doc.insert(format!("{tag}-{l}/{name}"), v);
                }
            }
        }
        AblateMode::Random => {
            if trials < 2 {
                return Err(Error::invalid("random ablation needs at least 2 trials"));
            }
            let spec = ArchitectureSpec::get(arch)?;
            let mut per_measure: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            let mut checksums = Vec::new();
            for t in 0..trials {
                let seed = backend.seed.wrapping_add(t as u64);
                let weights = random_init(&spec, seed);
                let Engine::Deep {
                    metric, checksum, ..
                } = backend.engine_with_weights(weights)?
                else {
                    unreachable!("deep backend")
                };
                checksums.push(checksum);
                let m = metric.pairwise_matrix(&images)?;
                for (name, v) in reference.score(&m)? {
                    doc.insert(format!("trial-{t}/{name}"), v);
                    per_measure.entry(name).or_default().push(v);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(backend.seed);
            for (name, values) in &per_measure {
                doc.insert(
                    format!("ci/{name}"),
                    bootstrap_ci(values, bootstrap, 0.95, &mut rng)?,
                );
            }
            config["trials"] = json!(trials);
            config["bootstrap"] = json!(bootstrap);
            config["level"] = json!(0.95);
            config["trial_seeds"] = json!((0..trials)
                .map(|t| backend.seed.wrapping_add(t as u64))
                .collect::<Vec<_>>());
            config["archive_sha256"] = json!(checksums);
        }
    }
    doc.config = config;
    Ok(doc)
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(o) => {
            print!("{}", o.stdout);
            0
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", json!({"error": e.to_string(), "exit_code": code}));
            code
        }
    }
}
