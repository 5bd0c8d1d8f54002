mod model;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use delco::aggregation::{fit_delco_detailed, DelcoConfig};
use delco::baselines::{
    accuracy, classifier_selection, correct_count, BaseModel, StackedEnsemble, StackingEncoding, WeightedVoteEnsemble,
};
use delco::copula::lambda_grid;
use delco::data::{
    load_csv, partition_synthetic, pca_class_split, validation_size, write_csv, write_csv_to, BinarizeRule, ColumnSpec,
    CsvOptions, PartitionPlan, RegionScheme, SyntheticProcess,
};
use delco::harness::{
    clopper_pearson, run_clone_experiment, run_real_experiment, run_synthetic_experiment, CiSettings, CloneConfig,
    ExperimentReport, Method, RealConfig, SyntheticConfig,
};
use delco::network::{predicted_load, run_protocol, ProtocolConfig};
use delco::{train_logreg, LabeledDataset, TrainOptions};

use model::{Combiner, ModelFile};

#[derive(Parser)]
#[command(name = "delco", version, about = "Copula-based aggregation of decentralized classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic data set and write it as CSV.
    Gen(GenArgs),
    /// Fit one combiner and write a model file.
    Train(TrainArgs),
    /// Accuracy of a model file on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Run the star protocol over partitioned data and print its message trace as JSON lines.
    Simulate(SimulateArgs),
    /// Run an experiment loop and write its report.
    Reproduce {
        #[command(subcommand)]
        table: Table,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_process)]
    process: SyntheticProcess,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct CsvArgs {
    /// Labeled CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Label column: zero-based index, header name or `last`.
    #[arg(long, default_value = "last")]
    label: String,
    /// `threshold:<col>:<value>` or `group:<l1,l2,..>`.
    #[arg(long)]
    binarize: Option<String>,
    /// Scale every feature to zero mean and unit variance.
    #[arg(long)]
    standardize: bool,
}

impl CsvArgs {
    fn load(&self) -> Result<LabeledDataset> {
        let opts = CsvOptions {
            label: self.label.parse::<ColumnSpec>()?,
            binarize: self.binarize.as_deref().map(str::parse::<BinarizeRule>).transpose()?,
            standardize: self.standardize,
            has_header: None,
        };
        load_csv(&self.data, &opts).with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Args, Clone)]
struct PartitionArgs {
    /// `regions:<moons-3|blobs-2|circles-3>`, `pca:<m>` or `single`.
    #[arg(long, default_value = "pca:10")]
    partition: String,
}

impl PartitionArgs {
    fn plan(&self, data: &LabeledDataset, seed: u64) -> Result<PartitionPlan> {
        let spec = self.partition.as_str();
        if spec == "single" {
            return Ok(PartitionPlan::new(vec![0; data.len()], 1)?);
        }
        if let Some(scheme) = spec.strip_prefix("regions:") {
            return Ok(partition_synthetic(data, scheme.parse::<RegionScheme>()?)?);
        }
        if let Some(m) = spec.strip_prefix("pca:") {
            let m: usize = m.parse().with_context(|| format!("bad node count in {spec:?}"))?;
            return Ok(pca_class_split(data, m, seed)?);
        }
        bail!("unknown partition {spec:?}")
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    csv: CsvArgs,
    #[command(flatten)]
    partition: PartitionArgs,
    #[arg(long, default_value = "delco", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    /// Keep the classifiers trained without the validation rows.
    #[arg(long)]
    no_retrain: bool,
    /// One-hot vote features for stacking.
    #[arg(long)]
    one_hot: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    csv: CsvArgs,
    #[command(flatten)]
    partition: PartitionArgs,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ReportArgs {
    /// Directory for the CSV summary, text table, JSON report and echoed config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of methods; all when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
}

#[derive(Subcommand)]
enum Table {
    /// Synthetic data sets, region partitions.
    Table1 {
        /// One process; all three when omitted.
        #[arg(long, value_parser = parse_process)]
        process: Option<SyntheticProcess>,
        /// One training size; 200 and 400 when omitted.
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// 3000 repetitions and a 0.2% interval target.
        #[arg(long)]
        paper_scale: bool,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Real data set, principal-direction partition, shuffled 2-fold cross validation.
    Table3 {
        #[command(flatten)]
        real: RealArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Like table3 with six of ten classifiers replaced by one shared majority vote.
    /// Without --data, runs the synthetic variant.
    Table4 {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "last")]
        label: String,
        #[arg(long)]
        binarize: Option<String>,
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = 5)]
        shuffles: usize,
        #[arg(long, value_parser = parse_process, default_value = "blobs")]
        process: SyntheticProcess,
        #[arg(long, default_value_t = 1000)]
        n_train: usize,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Args, Clone)]
struct RealArgs {
    #[command(flatten)]
    csv: CsvArgs,
    /// Name echoed in the report; the file stem when omitted.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = 5)]
    shuffles: usize,
}

fn parse_process(s: &str) -> Result<SyntheticProcess, String> {
    s.parse().map_err(|e: delco::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: delco::Error| e.to_string())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn gen(args: &GenArgs) -> Result<()> {
    let noise = args.noise.unwrap_or(args.process.default_noise());
    let mut rng = delco::rng::rng_from_seed(args.seed);
    let data = args.process.sample(args.n, noise, &mut rng)?;
    match &args.out {
        Some(p) => write_csv(&data, p)?,
        None => write_csv_to(&data, std::io::stdout().lock())?,
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let data = args.csv.load()?;
    let seed = args.seed;
    let file = if args.method == Method::Centralized {
        ModelFile::new(args.method, Combiner::Single { classifier: train_logreg(&data, &TrainOptions::default())? })
    } else {
        let plan = args.partition.plan(&data, delco::rng::derive_seed(seed, "partition", 0))?;
        let grid = if plan.num_nodes() >= 2 { lambda_grid(plan.num_nodes(), args.grid_points)? } else { vec![0.0] };
        let cfg = DelcoConfig {
            n_val: validation_size(data.len(), args.val_fraction)?,
            grid,
            retrain: !args.no_retrain,
            optimizer: TrainOptions::default(),
            seed: delco::rng::derive_seed(seed, "val", 0),
        };
        let fit = fit_delco_detailed(&data, &plan, &cfg)?;
        let first: Vec<BaseModel> = fit.first_pass.iter().cloned().map(BaseModel::Linear).collect();
        let deployed = fit.final_classifiers.clone();
        let deployed_bases: Vec<BaseModel> = deployed.iter().cloned().map(BaseModel::Linear).collect();
        match args.method {
            Method::Delco => ModelFile::copula(Method::Delco, &fit.ensemble)?,
            Method::IndependentCopula => ModelFile::copula(Method::IndependentCopula, &fit.ensemble.with_lambda(0.0)?)?,
            Method::WeightedVote => {
                let vote = WeightedVoteEnsemble::fit(first, &fit.validation)?;
                ModelFile::new(
                    args.method,
                    Combiner::WeightedVote { classifiers: deployed, weights: vote.weights().to_vec() },
                )
            }
            Method::Stacking => {
                let encoding = if args.one_hot { StackingEncoding::OneHot } else { StackingEncoding::RawIndex };
                let stacked = StackedEnsemble::fit(first, &fit.validation, encoding, &TrainOptions::default())?
                    .with_classifiers(deployed_bases)?;
                ModelFile::new(
                    args.method,
                    Combiner::Stacking {
                        classifiers: deployed,
                        second_stage: stacked.second_stage().clone(),
                        one_hot: args.one_hot,
                    },
                )
            }
            Method::ClassifierSelection => {
                let k = classifier_selection(&first, &fit.validation)?;
                ModelFile::new(args.method, Combiner::Single { classifier: deployed[k].clone() })
            }
            Method::BestClassifier => bail!("best-classifier picks by test accuracy and cannot be trained"),
            Method::Centralized => unreachable!("handled above"),
        }
    };
    file.save(&args.out)?;
    eprintln!("wrote {} model to {}", file.method, args.out.display());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let clf = file.classifier()?;
    let data = args.csv.load()?;
    if data.dim() != clf.input_dim() {
        bail!("model expects {} features, data has {}", clf.input_dim(), data.dim());
    }
    let hits = correct_count(clf.as_ref(), &data)?;
    let (low, high) = clopper_pearson(hits, data.len() as u64, args.confidence)?;
    let out = serde_json::json!({
        "method": file.method,
        "accuracy": accuracy(clf.as_ref(), &data)?,
        "correct": hits,
        "n": data.len(),
        "ci_low": low,
        "ci_high": high,
        "confidence": args.confidence,
    });
    println!("{out}");
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let data = args.csv.load()?;
    let plan = args.partition.plan(&data, delco::rng::derive_seed(args.seed, "partition", 0))?;
    let m = plan.num_nodes();
    if m < 2 {
        bail!("the protocol needs at least two nodes");
    }
    let nodes = plan.node_datasets(&data)?;
    let grid = lambda_grid(m, args.grid_points)?;
    let g = grid.len();
    let cfg = ProtocolConfig { val_fraction: args.val_fraction, grid: Some(grid), seed: args.seed, ..Default::default() };
    let (ensemble, trace) = run_protocol(&nodes, &cfg)?;
    let load = predicted_load(m, data.dim(), data.num_classes(), g);
    write_output(args.out.as_deref(), &trace.to_json_lines(load))?;
    eprintln!(
        "{} messages, {} bytes (predicted {load}), lambda_hat {}",
        trace.messages().len(),
        trace.total_bytes(),
        ensemble.lambda_hat()
    );
    Ok(())
}

fn emit(report: &ExperimentReport, out_dir: Option<&Path>, stem: &str) -> Result<()> {
    print!("{}", report.to_table());
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(format!("{stem}.csv")), report.to_csv())?;
        fs::write(dir.join(format!("{stem}.txt")), report.to_table())?;
        fs::write(dir.join(format!("{stem}.config.json")), report.config_json())?;
        fs::write(dir.join(format!("{stem}.json")), report.to_json())?;
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

fn reproduce(table: &Table) -> Result<()> {
    match table {
        Table::Table1 { process, n_train, repetitions, paper_scale, report } => {
            let processes =
                process.map_or_else(|| vec![SyntheticProcess::Moons, SyntheticProcess::Blobs, SyntheticProcess::Circles], |p| vec![p]);
            let sizes = n_train.map_or_else(|| vec![200, 400], |n| vec![n]);
            for &n in &sizes {
                for &p in &processes {
                    let base = if *paper_scale { SyntheticConfig::paper(p, n) } else { SyntheticConfig::new(p, n) };
                    let cfg = SyntheticConfig {
                        repetitions: repetitions.unwrap_or(base.repetitions),
                        methods: report.methods.clone(),
                        seed: report.seed,
                        ci: if *paper_scale { CiSettings::paper() } else { base.ci },
                        ..base
                    };
                    let r = run_synthetic_experiment(&cfg)?;
                    emit(&r, report.out_dir.as_deref(), &format!("table1-{p}-{n}"))?;
                }
            }
        }
        Table::Table3 { real, report } => {
            let data = real.csv.load()?;
            let name = real.name.clone().unwrap_or_else(|| file_stem(&real.csv.data));
            let cfg = RealConfig {
                m: real.nodes,
                shuffles: real.shuffles,
                methods: report.methods.clone(),
                seed: report.seed,
                ..RealConfig::new(name.clone())
            };
            let r = run_real_experiment(&data, &cfg)?;
            emit(&r, report.out_dir.as_deref(), &format!("table3-{name}"))?;
        }
        Table::Table4 {
            data,
            label,
            binarize,
            standardize,
            name,
            shuffles,
            process,
            n_train,
            repetitions,
            report,
        } => match data {
            Some(path) => {
                let csv = CsvArgs {
                    data: path.clone(),
                    label: label.clone(),
                    binarize: binarize.clone(),
                    standardize: *standardize,
                };
                let dataset = csv.load()?;
                let name = name.clone().unwrap_or_else(|| file_stem(path));
                let cfg = RealConfig {
                    shuffles: *shuffles,
                    methods: report.methods.clone(),
                    seed: report.seed,
                    clone: true,
                    ..RealConfig::new(name.clone())
                };
                let r = run_real_experiment(&dataset, &cfg)?;
                emit(&r, report.out_dir.as_deref(), &format!("table4-{name}"))?;
            }
            None => {
                let cfg = CloneConfig {
                    repetitions: *repetitions,
                    methods: report.methods.clone(),
                    seed: report.seed,
                    ..CloneConfig::new(*process, *n_train)
                };
                let r = run_clone_experiment(&cfg)?;
                emit(&r, report.out_dir.as_deref(), &format!("table4-{process}-{n_train}"))?;
            }
        },
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(a),
        Command::Reproduce { table } => reproduce(table),
    }
}
