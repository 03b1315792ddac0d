//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=C2,C9 cargo test --test acceptance -- --nocapture`
//! runs a subset.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use sparse_sr::bayes::{exhaustive_mmse, weighted_average_over_set};
use sparse_sr::experiments::image::{denoise_image, GrayImage, ImageDenoiseConfig};
use sparse_sr::experiments::sure::run_sure_study;
use sparse_sr::experiments::{paired_difference, run_bernoulli_sweep, run_mse_sweep, CurveResult, ExperimentConfig};
use sparse_sr::pursuits::Pursuit;
use sparse_sr::single_atom::{
    domain_equivalence_experiment, sample_single_atom_signal, sr_support_probabilities, support_study,
    SupportHistogram, SupportStudyConfig,
};
use sparse_sr::sr::{general_sr, prior_based_sr, Averaging, NoiseDomain, SrConfig, SrNoiseSpec};
use sparse_sr::unitary::{subtractive_hard_threshold_mean, sure_objective, SureGrid, UnitaryModel};
use sparse_sr::{
    enumerate_supports, make_random_dictionary, make_unitary_dictionary, sample_signal, CoefficientModel, PriorSpec,
    RngSeed,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).expect("acceptance config parses")
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn image_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cameraman256.pgm")
}

/// `b - a` in paired standard errors, computed at one grid point.
fn paired_margin(res: &CurveResult, better: &str, worse: &str, at: f64) -> (f64, f64, f64) {
    let a = res.row(better, at).unwrap_or_else(|| panic!("missing {better} at {at}"));
    let b = res.row(worse, at).unwrap_or_else(|| panic!("missing {worse} at {at}"));
    let (d, se) = paired_difference(b, a).unwrap();
    (d, se, if se > 0.0 { d / se } else { f64::INFINITY })
}

fn c1_exact_mmse() -> Outcome {
    let start = Instant::now();
    let d = make_random_dictionary(8, 10, RngSeed::new(101, 0)).unwrap();
    let prior = PriorSpec::fixed(1, 1.0, 0.3).unwrap();
    let omega = enumerate_supports(&prior, 10).unwrap();
    let mut worst = 0.0f64;
    let mut covered = true;
    for t in 0..100 {
        let s = sample_signal(&d, &prior, RngSeed::new(101, 1).child(t)).unwrap();
        let cfg = SrConfig {
            noise: SrNoiseSpec::gaussian(2.0).in_domain(NoiseDomain::Representation),
            iterations: 2000,
            pursuit: Pursuit::MatchedFilter,
            averaging: Averaging::PosteriorWeighted,
            seed: RngSeed::new(101, 2).child(t),
        };
        let report = prior_based_sr(&s.y, &d, &prior, &cfg).unwrap();
        covered &= report.distinct_supports == omega.len();
        let exact = exhaustive_mmse(&d, &prior, &s.y).unwrap();
        let direct = weighted_average_over_set(&d, &prior, &s.y, &omega).unwrap();
        worst = worst.max((&report.estimate - &exact).amax()).max((&direct - &exact).amax());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        covered && worst <= 1e-10 && secs < 10.0,
        format!("all 100 runs covered Omega: {covered}; max |diff| = {worst:.2e}; {secs:.1}s"),
    )
}

fn c2_config(trials: usize) -> String {
    format!(
        "scenario = c2\nn = 50\nm = 100\ncardinality = 1\nsigma_nu = 0.2\nestimators = map, mmse, alg1:omp\n\
         sweep = sigma_n\ngrid = 0.4, 0.5, 0.6\nk = 100\ntrials = {trials}\nseed = 2\n"
    )
}

fn c2_prior_based_near_mmse() -> Outcome {
    let start = Instant::now();
    let res = run_mse_sweep(&config(&c2_config(10_000))).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for sn in [0.4, 0.5, 0.6] {
        let alg1 = res.row("alg1:omp", sn).unwrap().mse_mean;
        let mmse = res.row("mmse", sn).unwrap().mse_mean;
        let rel = (alg1 - mmse).abs() / mmse;
        let (_, _, z) = paired_margin(&res, "alg1:omp", "map", sn);
        pass &= rel <= 0.05 && z >= 3.0;
        parts.push(format!("sn={sn}: |alg1-mmse|/mmse={:.2}%, map-alg1={z:.1} SE", 100.0 * rel));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    outcome(pass, format!("{}; {secs:.0}s", parts.join("; ")))
}

fn c3_config(trials: usize, holdout: usize) -> String {
    format!(
        "scenario = c3\nn = 50\nm = 100\ncardinality = 3\nsigma_nu = 0.2\n\
         estimators = plain:omp, plain_oracle:omp, alg1:omp, map\ninner_sigma_n = 0.1, 0.2, 0.3, 0.4, 0.6\n\
         k = 300\ntrials = {trials}\nholdout_trials = {holdout}\nseed = 3\n"
    )
}

fn c3_prior_based_beats_map() -> Outcome {
    let res = run_mse_sweep(&config(&c3_config(1000, 200))).unwrap();
    let sn = res.row("alg1:omp", 0.0).unwrap().sigma_n.unwrap();
    let (_, _, z_map) = paired_margin(&res, "alg1:omp", "map", 0.0);
    let (_, _, z_ls) = paired_margin(&res, "alg1:omp", "plain:omp", 0.0);
    let (_, _, z_or) = paired_margin(&res, "alg1:omp", "plain_oracle:omp", 0.0);
    outcome(
        z_map >= 3.0 && z_ls >= 3.0 && z_or >= 3.0,
        format!(
            "held-out sigma_n={sn}; MAP-alg1 = {z_map:.1} SE; OMP(LS)-alg1 = {z_ls:.1} SE; \
             OMP(oracle)-alg1 = {z_or:.1} SE; |Omega| = 161700 enumerated"
        ),
    )
}

fn c4_config(trials: usize, holdout: usize, k: usize) -> String {
    format!(
        "scenario = c4\nn = 25\nm = 50\ncardinality = 3\nsigma_nu = 0.2\n\
         estimators = plain_oracle:omp, sr_oracle:omp, plain:omp, sr_ls:omp, plain_oracle:bp, sr_oracle:bp, \
         plain:bp, sr_ls:bp\nepsilon = auto\ninner_sigma_n = 0.05, 0.1, 0.2, 0.3, 0.4\nk = {k}\n\
         trials = {trials}\nholdout_trials = {holdout}\nseed = 4\n"
    )
}

fn c4_general_sr_beats_pursuits() -> Outcome {
    let res = run_mse_sweep(&config(&c4_config(500, 150, 300))).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (sr, plain) in [
        ("sr_oracle:omp", "plain_oracle:omp"),
        ("sr_ls:omp", "plain:omp"),
        ("sr_oracle:bp", "plain_oracle:bp"),
        ("sr_ls:bp", "plain:bp"),
    ] {
        let (_, _, z) = paired_margin(&res, sr, plain, 0.0);
        pass &= z >= 3.0;
        let sn = res.row(sr, 0.0).unwrap().sigma_n.unwrap();
        parts.push(format!("{sr} {z:.1} SE (sigma_n={sn})"));
    }
    outcome(pass, parts.join("; "))
}

fn c5_closed_form_mean() -> Outcome {
    let draws = 100_000;
    let c2 = 1.0 / 1.04;
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut rng = RngSeed::new(5, 0).rng();
    let mut count = 0;
    for &beta in &[-0.9, -0.3, 0.2, 0.5, 1.1] {
        for &(lambda, sigma_n) in &[(0.3, 0.1), (0.6, 0.2), (0.5, 0.5), (0.9, 0.3)] {
            count += 1;
            let mut sum = 0.0;
            for _ in 0..draws {
                let n: f64 = rng.sample(StandardNormal);
                if (beta + sigma_n * n).abs() >= lambda {
                    sum += c2 * beta;
                }
            }
            let mean = sum / draws as f64;
            let closed = subtractive_hard_threshold_mean(beta, lambda, sigma_n, c2);
            // binomial SE at the closed-form selection rate; tiny floor for rates at 0 or 1
            let rate = closed / (c2 * beta);
            let se = (c2 * beta).abs() * (rate * (1.0 - rate) / draws as f64).sqrt() + 1e-12;
            let z = (closed - mean).abs() / se;
            worst = worst.max(z);
            pass &= z < 3.0;
        }
    }
    outcome(pass, format!("{count} points, worst |closed - MC| = {worst:.2} SE"))
}

struct UnitaryBatch {
    betas: Vec<Vec<f64>>,
    alphas: Vec<Vec<f64>>,
}

fn unitary_batch(stream: u64, trials: usize) -> (UnitaryModel, UnitaryBatch) {
    let m = 100;
    let d = make_unitary_dictionary(m, RngSeed::new(6, 0)).unwrap();
    let prior = PriorSpec::bernoulli(m, 0.05, 1.0, 0.2).unwrap();
    let mut betas = Vec::with_capacity(trials);
    let mut alphas = Vec::with_capacity(trials);
    for t in 0..trials {
        let s = sample_signal(&d, &prior, RngSeed::new(6, stream).child(t as u64)).unwrap();
        betas.push(d.correlations(&s.y).iter().copied().collect());
        alphas.push(s.alpha.iter().copied().collect());
    }
    (UnitaryModel::new(1.0, 0.2, 0.05).unwrap(), UnitaryBatch { betas, alphas })
}

fn per_entry_error(b: &UnitaryBatch, f: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (beta, alpha) in b.betas.iter().zip(&b.alphas) {
        for (x, a) in beta.iter().zip(alpha) {
            total += (f(*x) - a).powi(2);
            count += 1;
        }
    }
    total / count as f64
}

fn c6_config(trials: usize, holdout: usize) -> String {
    format!(
        "scenario = c6\nn = 100\nm = 100\ndictionary = unitary\nprior = bernoulli\np = 0.05\nsigma_nu = 0.2\n\
         trials = {trials}\nholdout_trials = {holdout}\nseed = 6\n"
    )
}

fn c6_sure_tuned_sr_near_mmse() -> Outcome {
    let study = run_sure_study(&config(&c6_config(10_000, 1000))).unwrap();
    let sr = study.estimate("sr_asymptotic").unwrap().mse_mean;
    let mmse = study.estimate("mmse_shrinkage").unwrap().mse_mean;
    let ratio = sr / mmse;
    outcome(
        ratio <= 1.05,
        format!(
            "SURE pooled over 1000 held-out signals: lambda={:.3}, sigma_n={:.3}; SR MSE / MMSE MSE = {ratio:.4} \
             over 10^4 signals",
            study.choice.lambda, study.choice.sigma_n
        ),
    )
}

fn c7_sure_tracks_mse() -> Outcome {
    let (model, batch) = unitary_batch(5, 2000);
    let grid = SureGrid::default_for(&model);
    let c2 = model.c_squared();
    let energy: f64 = batch.alphas.iter().flatten().map(|a| a * a).sum();
    let entries = (batch.betas.len() * 100) as f64;
    let mut sure = Vec::new();
    let mut err = Vec::new();
    for &sn in &grid.sigma_ns {
        for &l in &grid.lambdas {
            let s: f64 = batch.betas.iter().map(|b| sure_objective(b, l, sn, &model)).sum();
            sure.push((s + energy) / entries);
            err.push(per_entry_error(&batch, |b| subtractive_hard_threshold_mean(b, l, sn, c2)));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, me) = (mean(&sure), mean(&err));
    let cov: f64 = sure.iter().zip(&err).map(|(a, b)| (a - ms) * (b - me)).sum();
    let vs: f64 = sure.iter().map(|a| (a - ms).powi(2)).sum();
    let ve: f64 = err.iter().map(|b| (b - me).powi(2)).sum();
    let corr = cov / (vs * ve).sqrt();
    let argmin = |v: &[f64]| v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let (a, b) = (argmin(&sure), argmin(&err));
    let n = grid.lambdas.len();
    let (ra, ca, rb, cb) = (a / n, a % n, b / n, b % n);
    let near = ra.abs_diff(rb) <= 1 && ca.abs_diff(cb) <= 1;
    outcome(corr >= 0.99 && near, format!("corr = {corr:.5}; argmin SURE cell ({ra},{ca}) vs MSE cell ({rb},{cb})"))
}

fn c8_selection_integral() -> Outcome {
    let d = make_random_dictionary(25, 50, RngSeed::new(8, 0)).unwrap();
    let model = CoefficientModel::new(1.0, 0.2).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (t, sn) in [0.1, 0.25, 0.5].into_iter().enumerate() {
        let (_, y) = sample_single_atom_signal(&d, model, 21, RngSeed::new(8, 1).child(t as u64)).unwrap();
        let integral = sr_support_probabilities(&y, &d, sn).unwrap();
        let cfg = SrConfig {
            noise: SrNoiseSpec::gaussian(sn).in_domain(NoiseDomain::Representation),
            iterations: 10_000,
            pursuit: Pursuit::MatchedFilter,
            averaging: Averaging::OracleMean,
            seed: RngSeed::new(8, 2).child(t as u64),
        };
        let report = general_sr(&y, &d, Some(model), &cfg).unwrap();
        let empirical = SupportHistogram::from_supports(50, &report.per_iteration_supports).unwrap();
        let dev = integral.probabilities.iter().zip(&empirical.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let total: f64 = integral.probabilities.iter().sum();
        pass &= dev <= 0.02 && (total - 1.0).abs() <= 1e-3 && integral.converged;
        parts.push(format!("sn={sn}: max dev {dev:.4}, sum {total:.7}"));
    }
    outcome(pass, parts.join("; "))
}

fn c9_study_config(trials: usize, iterations: usize) -> SupportStudyConfig {
    SupportStudyConfig {
        model: CoefficientModel::new(1.0, 0.2).unwrap(),
        sigma_ns: vec![0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6],
        trials,
        iterations,
        atom: 21,
        with_integral: false,
        seed: 9,
    }
}

fn c9_kl_tracks_mse() -> Outcome {
    let d = make_random_dictionary(25, 50, RngSeed::new(9, 0)).unwrap();
    let study = support_study(&d, &c9_study_config(1000, 100)).unwrap();
    let (k, e) = (study.kl_argmin(), study.mse_argmin());
    let grid = &study.rows;
    outcome(
        k.abs_diff(e) <= 1,
        format!("argmin KL at sigma_n={} vs argmin MSE at sigma_n={}", grid[k].sigma_n, grid[e].sigma_n),
    )
}

fn c10_domains(n: usize, m: usize, budget: f64) -> Outcome {
    let start = Instant::now();
    let d = make_random_dictionary(n, m, RngSeed::new(10, 0)).unwrap();
    let model = CoefficientModel::new(1.0, 0.2).unwrap();
    let grid = [0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5];
    let r = domain_equivalence_experiment(&d, model, &grid, 2000, 500, 10).unwrap();
    let gap = r.max_relative_gap();
    let secs = start.elapsed().as_secs_f64();
    let per_point: Vec<String> = r
        .sigma_ns
        .iter()
        .zip(r.signal_domain.iter().zip(&r.representation_domain))
        .map(|(sn, (a, b))| format!("{sn}:{:+.1}%", 100.0 * (a.0 - b.0) / a.0.max(b.0)))
        .collect();
    outcome(
        gap <= 0.05 && secs < budget,
        format!("{n}x{m}: max relative gap {:.2}% ({}); {secs:.0}s", 100.0 * gap, per_point.join(" ")),
    )
}

fn c11_config(trials: usize) -> String {
    format!(
        "scenario = c11\nn = 50\nm = 100\ncardinality = 1\nsigma_nu = 0.2\n\
         estimators = sr_oracle:mf:gaussian, sr_oracle:mf:uniform\nsweep = sigma_n\n\
         grid = 0.05, 0.1, 0.2, 0.3, 0.5, 0.8\nk = 100\ntrials = {trials}\nseed = 11\n"
    )
}

fn c11_uniform_matches_gaussian() -> Outcome {
    let res = run_mse_sweep(&config(&c11_config(2000))).unwrap();
    let worst = res
        .curve("sr_oracle:mf:gaussian")
        .iter()
        .map(|g| {
            let u = res.row("sr_oracle:mf:uniform", g.sweep_value).unwrap();
            (g.mse_mean - u.mse_mean).abs() / g.mse_mean.max(u.mse_mean)
        })
        .fold(0.0, f64::max);
    outcome(worst <= 0.05, format!("max relative gap {:.2}%", 100.0 * worst))
}

fn c12_config(trials: usize) -> String {
    format!(
        "scenario = c12\nn = 50\nm = 100\ncardinality = 1\nsigma_nu = 0.2\nestimators = alg1:omp:bernoulli\n\
         sweep = p_mask\ngrid = 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0\n\
         baseline_sigma_n = 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6\nk = 100\ntrials = {trials}\nseed = 12\n"
    )
}

fn c12_mask_matches_gaussian() -> Outcome {
    let cmp = run_bernoulli_sweep(&config(&c12_config(2000))).unwrap();
    let ratio = cmp.optimal_ratios()[0].1;
    let flops = cmp
        .mask
        .curve("alg1:omp:bernoulli")
        .iter()
        .map(|r| (r.rows_per_iteration.unwrap() / (50.0 * r.sweep_value) - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        (ratio - 1.0).abs() <= 0.10,
        format!(
            "best mask MSE / best Gaussian MSE = {ratio:.4}; rows per iteration within {:.1}% of p n",
            100.0 * flops
        ),
    )
}

fn image_config(k: usize) -> ImageDenoiseConfig {
    ImageDenoiseConfig {
        sigma_nu: 40.0,
        sparsity_grid: (4..=16).collect(),
        sigma_n_grid: vec![20.0, 40.0, 60.0, 80.0, 100.0],
        iterations: k,
        tune_fraction: 0.05,
        seed: 13,
    }
}

fn c13_image() -> Outcome {
    let img = GrayImage::read_pgm_file(&image_path()).unwrap();
    let r = denoise_image(&img, &image_config(10)).unwrap();
    let gain = r.sr_psnr - r.plain_psnr;
    outcome(
        gain >= 0.3 && (r.noisy_psnr - 16.1).abs() < 0.1,
        format!(
            "noisy {:.2} dB, SP {:.2} dB (L={}), SR-SP {:.2} dB (sigma_n={}, K={}): gain {gain:.2} dB",
            r.noisy_psnr, r.plain_psnr, r.sparsity, r.sr_psnr, r.sigma_n, r.iterations
        ),
    )
}

fn c14_determinism() -> Outcome {
    let runs: Vec<(&str, Box<dyn Fn() -> String + Sync>)> = vec![
        ("c2", Box::new(|| run_mse_sweep(&config(&c2_config(200))).unwrap().csv_string())),
        (
            "c3",
            Box::new(|| run_mse_sweep(&config(&c3_config(4, 4).replace("map", "plain_raw:omp"))).unwrap().csv_string()),
        ),
        ("c4", Box::new(|| run_mse_sweep(&config(&c4_config(20, 10, 20))).unwrap().csv_string())),
        (
            "c9",
            Box::new(|| {
                let d = make_random_dictionary(25, 50, RngSeed::new(9, 0)).unwrap();
                let mut buf = Vec::new();
                let mut cfg = c9_study_config(30, 20);
                cfg.with_integral = true;
                let s = support_study(&d, &cfg).unwrap();
                s.write_csv(&mut buf).unwrap();
                s.write_histograms(&mut buf).unwrap();
                String::from_utf8(buf).unwrap()
            }),
        ),
        (
            "c10",
            Box::new(|| {
                let d = make_random_dictionary(20, 40, RngSeed::new(10, 0)).unwrap();
                let model = CoefficientModel::new(1.0, 0.2).unwrap();
                format!("{:?}", domain_equivalence_experiment(&d, model, &[0.1, 0.3], 50, 30, 10).unwrap())
            }),
        ),
        (
            "c6",
            Box::new(|| {
                let mut buf = Vec::new();
                let s = run_sure_study(&config(&c6_config(200, 100))).unwrap();
                s.write_csv(&mut buf).unwrap();
                s.write_grid(&mut buf).unwrap();
                String::from_utf8(buf).unwrap()
            }),
        ),
        ("c11", Box::new(|| run_mse_sweep(&config(&c11_config(100))).unwrap().csv_string())),
        (
            "c12",
            Box::new(|| {
                let mut buf = Vec::new();
                run_bernoulli_sweep(&config(&c12_config(100))).unwrap().write_csv(&mut buf).unwrap();
                String::from_utf8(buf).unwrap()
            }),
        ),
        (
            "c13",
            Box::new(|| {
                let img = GrayImage::read_pgm_file(&image_path()).unwrap();
                let crop: Vec<u8> = (0..40 * 40).map(|i| img.pixels[(100 + i / 40) * 256 + 100 + i % 40]).collect();
                let small = GrayImage { width: 40, height: 40, pixels: crop };
                let r = denoise_image(&small, &ImageDenoiseConfig { sparsity_grid: vec![4, 6], ..image_config(4) })
                    .unwrap();
                let mut buf = Vec::new();
                r.write_csv(&mut buf).unwrap();
                r.sr.write_pgm(&mut buf).unwrap();
                String::from_utf8_lossy(&buf).into_owned()
            }),
        ),
    ];
    let mut differing = Vec::new();
    for (name, run) in &runs {
        let one = with_threads(1, run);
        let many = with_threads(3, run);
        if one != many {
            differing.push(*name);
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} reduced runs identical with 1 and 3 threads", runs.len())
        } else {
            format!("outputs differ across thread counts for {differing:?}")
        },
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    ("C1", "exact MMSE from the full support set", c1_exact_mmse),
    ("C2", "prior-based SR near MMSE, below MAP (M=1)", c2_prior_based_near_mmse),
    ("C3", "prior-based SR below MAP and OMP (M=3)", c3_prior_based_beats_map),
    ("C4", "general SR improves OMP and BP", c4_general_sr_beats_pursuits),
    ("C5", "closed-form hard-threshold SR mean", c5_closed_form_mean),
    ("C6", "SURE-tuned SR within 5% of MMSE shrinkage", c6_sure_tuned_sr_near_mmse),
    ("C7", "SURE tracks MSE on the parameter grid", c7_sure_tracks_mse),
    ("C8", "selection-probability integral vs simulation", c8_selection_integral),
    ("C9", "KL argmin next to MSE argmin", c9_kl_tracks_mse),
    ("C10", "signal vs representation noise (200x400)", || c10_domains(200, 400, 1800.0)),
    ("C11", "uniform vs Gaussian SR noise", c11_uniform_matches_gaussian),
    ("C12", "mask noise vs Gaussian noise at the optimum", c12_mask_matches_gaussian),
    ("C13", "image denoising gain", c13_image),
    ("C14", "thread-count determinism", c14_determinism),
];

#[test]
fn all_criteria() {
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_uppercase()).collect());
    let mut failed = Vec::new();
    for (id, title, run) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {id} {title}: {} [{:.1}s]", result.detail, start.elapsed().as_secs_f64());
        if !result.pass {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

/// The 50x100 stand-in for C10. Atom correlations of order 1/sqrt(50) open a
/// systematic gap between the two noise domains that reaches about 6.6% at
/// sigma_n = 0.3, so this variant misses the 5% bar that the full size meets.
#[test]
#[ignore = "finite-dimension gap exceeds 5% on 50x100; the full-size C10 in all_criteria passes"]
fn c10_reduced_size() {
    let result = c10_domains(50, 100, 120.0);
    println!("{} C10 reduced (50x100): {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    assert!(result.pass);
}

#[test]
fn mmse_of_single_signal_is_reachable_directly() {
    // guards the C1 oracle itself: the weighted average over all supports is exhaustive MMSE
    let d = make_random_dictionary(6, 8, RngSeed::new(1, 0)).unwrap();
    let prior = PriorSpec::fixed(2, 1.0, 0.2).unwrap();
    let y = DVector::from_fn(6, |i, _| (i as f64 * 0.7).sin());
    let all = enumerate_supports(&prior, 8).unwrap();
    let a = weighted_average_over_set(&d, &prior, &y, &all).unwrap();
    let b = exhaustive_mmse(&d, &prior, &y).unwrap();
    assert!((a - b).amax() < 1e-12);
}
