use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use sparse_sr::experiments::image::{denoise_image, GrayImage, ImageDenoiseConfig};
use sparse_sr::experiments::sure::run_sure_study;
use sparse_sr::experiments::{
    build_dictionary, run_bernoulli_sweep, run_cardinality_sweep, run_mse_sweep, ExperimentConfig, SingleAtomStudy,
    SweepVar,
};
use sparse_sr::single_atom::{domain_equivalence_experiment, support_study, SupportStudyConfig};
use sparse_sr::unitary::UnitaryModel;
use sparse_sr::{CoefficientModel, Error};

mod selftest;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "SPARSE_SR_OUT";

type Sink = BufWriter<File>;

#[derive(Parser, Debug)]
#[command(name = "sparse-sr", version, about = "Sparse-coding MMSE and stochastic-resonance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct RunArgs {
    /// Experiment description (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: $SPARSE_SR_OUT or ./results].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the configured dictionary as text.
    GenDict(RunArgs),
    /// MSE curves of the configured estimators.
    Sweep(RunArgs),
    /// SURE tuning of the asymptotic SR estimator (unitary dictionary).
    SureTune(RunArgs),
    /// Single-atom support histograms or noise-domain comparison.
    SingleAtom(RunArgs),
    /// Patch-based image denoising with subspace pursuit, plain and SR.
    Denoise(RunArgs),
    /// Quick invariant checks.
    Selftest {
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

/// Errors caused by the config contents count as config errors even when
/// they surface while running.
fn classify(e: Error) -> Failure {
    match e {
        Error::Parse { .. } | Error::UnknownKey { .. } | Error::MissingKey(_) | Error::InvalidArgument(_) => {
            Failure::Config(e.to_string())
        }
        other => Failure::Runtime(other.to_string()),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

struct Job {
    cfg: ExperimentConfig,
    config_path: PathBuf,
    out: PathBuf,
}

impl Job {
    fn load(args: &RunArgs) -> Result<Self, Failure> {
        let text = fs::read_to_string(&args.config)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", args.config.display())))?;
        let mut cfg =
            ExperimentConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = args.threads {
            cfg.threads = Some(threads);
        }
        let out = args
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"));
        fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
        Ok(Self { cfg, config_path: args.config.clone(), out })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.out.join(format!("{}{suffix}", self.cfg.scenario))
    }

    /// Writes `suffix` under the output directory through a temporary file
    /// and a rename, so readers never see a partial artifact.
    fn write(&self, suffix: &str, fill: impl FnOnce(&mut Sink) -> std::io::Result<()>) -> Result<(), Failure> {
        let path = self.path(suffix);
        write_atomic(&path, fill).map_err(|e| io_failure(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn run_in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
        in_pool(self.cfg.threads, f)
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Failure::Config("threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(pool.install(f))
}

fn write_atomic(path: &Path, fill: impl FnOnce(&mut Sink) -> std::io::Result<()>) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        fill(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn gen_dict(job: &Job) -> Result<(), Failure> {
    let dict = build_dictionary(&job.cfg).map_err(classify)?;
    job.write("_dictionary.txt", |w| dict.write_text(w).map_err(std::io::Error::other))
}

fn sweep(job: &Job) -> Result<(), Failure> {
    let cfg = &job.cfg;
    cfg.require_estimators().map_err(classify)?;
    let start = Instant::now();
    match cfg.sweep {
        Some(SweepVar::PMask) if !cfg.baseline_sigma_n.is_empty() => {
            let cmp = job.run_in_pool(|| run_bernoulli_sweep(cfg))?.map_err(classify)?;
            job.write(".csv", |w| cmp.write_csv(w))?;
            job.write(".meta", |w| {
                cmp.mask.write_meta(w)?;
                for (token, ratio) in cmp.optimal_ratios() {
                    writeln!(w, "optimal_ratio = {token}: {ratio}")?;
                }
                Ok(())
            })?;
        }
        Some(SweepVar::Cardinality) => {
            let res = job.run_in_pool(|| run_cardinality_sweep(cfg))?.map_err(classify)?;
            job.write(".csv", |w| res.write_csv(w))?;
            job.write(".meta", |w| res.write_meta(w))?;
        }
        _ => {
            let res = job.run_in_pool(|| run_mse_sweep(cfg))?.map_err(classify)?;
            job.write(".csv", |w| res.write_csv(w))?;
            job.write(".meta", |w| res.write_meta(w))?;
            for (name, why) in &res.absent {
                eprintln!("note: {name} left out: {why}");
            }
        }
    }
    eprintln!("{} finished in {:.1}s", cfg.scenario, start.elapsed().as_secs_f64());
    Ok(())
}

fn sure_tune(job: &Job) -> Result<(), Failure> {
    let cfg = &job.cfg;
    let study = job.run_in_pool(|| run_sure_study(cfg))?.map_err(classify)?;
    let model = UnitaryModel::new(cfg.sigma_alpha, cfg.sigma_nu, cfg.p).map_err(classify)?;
    job.write(".csv", |w| study.write_csv(w))?;
    job.write("_sure_grid.csv", |w| study.write_grid(w))?;
    job.write("_shrinkage.csv", |w| study.write_shrinkage(&model, 3.0 * study.lambda_map, w))?;
    println!("lambda = {} sigma_n = {} (lambda_MAP = {})", study.choice.lambda, study.choice.sigma_n, study.lambda_map);
    Ok(())
}

fn single_atom(job: &Job) -> Result<(), Failure> {
    let cfg = &job.cfg;
    if cfg.grid.is_empty() {
        return Err(Failure::Config("single-atom studies need `sweep = sigma_n` and a `grid`".into()));
    }
    let dict = build_dictionary(cfg).map_err(classify)?;
    let model = CoefficientModel::new(cfg.sigma_alpha, cfg.sigma_nu).map_err(classify)?;
    match cfg.study {
        SingleAtomStudy::Support => {
            let study_cfg = SupportStudyConfig {
                model,
                sigma_ns: cfg.grid.clone(),
                trials: cfg.trials,
                iterations: cfg.k,
                atom: cfg.atom,
                with_integral: cfg.integral,
                seed: cfg.seed,
            };
            let study = job.run_in_pool(|| support_study(&dict, &study_cfg))?.map_err(classify)?;
            job.write(".csv", |w| study.write_csv(w))?;
            job.write("_histograms.csv", |w| study.write_histograms(w))?;
        }
        SingleAtomStudy::Domains => {
            let res = job
                .run_in_pool(|| domain_equivalence_experiment(&dict, model, &cfg.grid, cfg.trials, cfg.k, cfg.seed))?
                .map_err(classify)?;
            job.write(".csv", |w| res.write_csv(w))?;
            println!("max relative gap {:.2}%", 100.0 * res.max_relative_gap());
        }
    }
    Ok(())
}

fn denoise(job: &Job) -> Result<(), Failure> {
    let cfg = &job.cfg;
    let image = cfg.image.as_ref().ok_or_else(|| classify(Error::MissingKey("image".into())))?;
    // relative image paths are taken from the config file's directory
    let image_path = match Path::new(image) {
        p if p.is_absolute() => p.to_path_buf(),
        p => job.config_path.parent().unwrap_or(Path::new(".")).join(p),
    };
    let clean = GrayImage::read_pgm_file(&image_path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", image_path.display())))?;
    let denoise_cfg = ImageDenoiseConfig::from_experiment(cfg).map_err(classify)?;
    let report = job.run_in_pool(|| denoise_image(&clean, &denoise_cfg))?.map_err(classify)?;
    job.write(".csv", |w| report.write_csv(w))?;
    job.write("_noisy.pgm", |w| report.noisy.write_pgm(w))?;
    job.write("_sp.pgm", |w| report.plain.write_pgm(w))?;
    job.write("_sr.pgm", |w| report.sr.write_pgm(w))?;
    println!(
        "PSNR noisy {:.2} dB, SP {:.2} dB (L = {}), SR-SP {:.2} dB (sigma_n = {})",
        report.noisy_psnr, report.plain_psnr, report.sparsity, report.sr_psnr, report.sigma_n
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenDict(a) => gen_dict(&Job::load(&a)?),
        Command::Sweep(a) => sweep(&Job::load(&a)?),
        Command::SureTune(a) => sure_tune(&Job::load(&a)?),
        Command::SingleAtom(a) => single_atom(&Job::load(&a)?),
        Command::Denoise(a) => denoise(&Job::load(&a)?),
        Command::Selftest { threads } => {
            let failed = in_pool(threads, selftest::run)?;
            if failed == 0 {
                Ok(())
            } else {
                Err(Failure::Runtime(format!("{failed} self-test check(s) failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
