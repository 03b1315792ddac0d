//! Fast invariant checks behind `sparse-sr selftest`.

use sparse_sr::bayes::{exhaustive_mmse, weighted_average_over_set};
use sparse_sr::experiments::{run_mse_sweep, ExperimentConfig};
use sparse_sr::pursuits::Pursuit;
use sparse_sr::single_atom::sr_support_probabilities;
use sparse_sr::sr::{prior_based_sr, Averaging, NoiseDomain, SrConfig, SrNoiseSpec};
use sparse_sr::unitary::{mmse_shrinkage, subtractive_hard_threshold_mean, UnitaryModel};
use sparse_sr::{enumerate_supports, make_random_dictionary, sample_signal, PriorSpec, RngSeed};

pub const SHIPPED_CONFIGS: &[(&str, &str)] = &[
    ("fig1", include_str!("../configs/fig1.cfg")),
    ("fig2", include_str!("../configs/fig2.cfg")),
    ("fig3", include_str!("../configs/fig3.cfg")),
    ("fig4", include_str!("../configs/fig4.cfg")),
    ("fig5", include_str!("../configs/fig5.cfg")),
    ("fig7", include_str!("../configs/fig7.cfg")),
    ("fig8", include_str!("../configs/fig8.cfg")),
    ("fig10", include_str!("../configs/fig10.cfg")),
    ("fig11", include_str!("../configs/fig11.cfg")),
    ("fig12", include_str!("../configs/fig12.cfg")),
];

type Check = fn() -> Result<(), String>;

fn full_set_average_is_mmse() -> Result<(), String> {
    let d = make_random_dictionary(8, 10, RngSeed::new(1, 0)).map_err(|e| e.to_string())?;
    let prior = PriorSpec::fixed(2, 1.0, 0.3).map_err(|e| e.to_string())?;
    let all = enumerate_supports(&prior, 10).map_err(|e| e.to_string())?;
    for t in 0..10 {
        let s = sample_signal(&d, &prior, RngSeed::new(1, 1).child(t)).map_err(|e| e.to_string())?;
        let a = weighted_average_over_set(&d, &prior, &s.y, &all).map_err(|e| e.to_string())?;
        let b = exhaustive_mmse(&d, &prior, &s.y).map_err(|e| e.to_string())?;
        let gap = (a - b).amax();
        if gap > 1e-10 {
            return Err(format!("signal {t}: gap {gap:e}"));
        }
    }
    Ok(())
}

fn covering_prior_based_sr_is_mmse() -> Result<(), String> {
    let d = make_random_dictionary(8, 10, RngSeed::new(2, 0)).map_err(|e| e.to_string())?;
    let prior = PriorSpec::fixed(1, 1.0, 0.3).map_err(|e| e.to_string())?;
    let s = sample_signal(&d, &prior, RngSeed::new(2, 1)).map_err(|e| e.to_string())?;
    let cfg = SrConfig {
        noise: SrNoiseSpec::gaussian(2.0).in_domain(NoiseDomain::Representation),
        iterations: 2000,
        pursuit: Pursuit::MatchedFilter,
        averaging: Averaging::PosteriorWeighted,
        seed: RngSeed::new(2, 2),
    };
    let r = prior_based_sr(&s.y, &d, &prior, &cfg).map_err(|e| e.to_string())?;
    if r.distinct_supports != 10 {
        return Err(format!("only {} of 10 supports visited", r.distinct_supports));
    }
    let exact = exhaustive_mmse(&d, &prior, &s.y).map_err(|e| e.to_string())?;
    let gap = (r.estimate - exact).amax();
    if gap > 1e-10 {
        return Err(format!("gap {gap:e}"));
    }
    Ok(())
}

fn unitary_closed_forms() -> Result<(), String> {
    let m = UnitaryModel::new(1.0, 0.2, 0.05).map_err(|e| e.to_string())?;
    let c2 = m.c_squared();
    if mmse_shrinkage(0.0, &m) != 0.0 {
        return Err("shrinkage of zero is not zero".into());
    }
    let l = m.lambda_map(0);
    for b in [-1.0, -0.3, 0.2, 0.9] {
        let hard = if f64::abs(b) >= l { c2 * b } else { 0.0 };
        if subtractive_hard_threshold_mean(b, l, 0.0, c2) != hard {
            return Err(format!("zero SR noise is not hard thresholding at beta = {b}"));
        }
    }
    Ok(())
}

fn selection_probabilities_sum_to_one() -> Result<(), String> {
    let d = make_random_dictionary(25, 50, RngSeed::new(3, 0)).map_err(|e| e.to_string())?;
    let prior = PriorSpec::fixed(1, 1.0, 0.2).map_err(|e| e.to_string())?;
    let s = sample_signal(&d, &prior, RngSeed::new(3, 1)).map_err(|e| e.to_string())?;
    for sn in [0.05, 0.2, 1.0] {
        let p = sr_support_probabilities(&s.y, &d, sn).map_err(|e| e.to_string())?;
        let total: f64 = p.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-3 {
            return Err(format!("sigma_n = {sn}: probabilities sum to {total}"));
        }
    }
    Ok(())
}

fn shipped_configs_parse() -> Result<(), String> {
    for (name, text) in SHIPPED_CONFIGS {
        let cfg = ExperimentConfig::parse(text).map_err(|e| format!("{name}: {e}"))?;
        let again = ExperimentConfig::parse(&cfg.to_string()).map_err(|e| format!("{name} rendered: {e}"))?;
        if again != cfg {
            return Err(format!("{name} does not survive a render/parse round trip"));
        }
    }
    Ok(())
}

fn sweep_ignores_thread_count() -> Result<(), String> {
    let cfg = ExperimentConfig::parse(
        "n = 10\nm = 20\ncardinality = 1\nestimators = mmse, alg1:omp, sr_oracle:omp\n\
         sweep = sigma_n\ngrid = 0.1, 0.3\nk = 20\ntrials = 30\n",
    )
    .map_err(|e| e.to_string())?;
    let run = |threads| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| run_mse_sweep(&cfg)).map(|r| r.csv_string()).map_err(|e| e.to_string())
    };
    if run(1)? != run(3)? {
        return Err("CSV differs between 1 and 3 threads".into());
    }
    Ok(())
}

const CHECKS: &[(&str, Check)] = &[
    ("full-set posterior average equals exhaustive MMSE", full_set_average_is_mmse),
    ("prior-based SR visiting every support equals MMSE", covering_prior_based_sr_is_mmse),
    ("unitary closed forms at their limits", unitary_closed_forms),
    ("selection probabilities sum to one", selection_probabilities_sum_to_one),
    ("shipped configs parse and round-trip", shipped_configs_parse),
    ("sweep output independent of thread count", sweep_ignores_thread_count),
];

/// Runs every check, printing one line each; returns the failure count.
pub fn run() -> usize {
    let mut failed = 0;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => println!("ok   {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    failed
}
