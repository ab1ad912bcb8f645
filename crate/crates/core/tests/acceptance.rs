//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails. Pass criterion numbers as arguments to
//! run a subset.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use reflection_mcmc::diagnostics::{
    asymptotic_variance, burnin_steps, histogram, kv_variance_bound, posterior_quadrature_oracle, rudolf_mse_bound,
    total_variation,
};
use reflection_mcmc::experiment::{self, ExperimentConfig};
use reflection_mcmc::field::{sample_prior, BasisSpec, DEFAULT_ABAR};
use reflection_mcmc::forward::{solve_pressure, ForwardModel, Mesh, ObservationOperator, SourceTerm};
use reflection_mcmc::posterior::FlatLikelihood;
use reflection_mcmc::rng::ChainRng;
use reflection_mcmc::samplers::{run_chain, Algorithm, ChainState, Functional, ProposalKind, RunOptions};
use reflection_mcmc::spectral::{
    cheeger_check, remark34_probe, run_suite, spectral_gap, tensor_product, theorem31_check, theorem42_table,
    FiniteKernel, InstanceGenerator,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn p_half(a: &[f64], mesh: &Mesh) -> f64 {
    solve_pressure(a, &SourceTerm::unit(mesh), mesh).unwrap().at(0.5)
}

fn forward_solver() -> Outcome {
    let mesh = Mesh::new(4096).unwrap();
    let spec = BasisSpec::with_k(25);
    let model = ForwardModel::new(spec.clone(), mesh.clone(), SourceTerm::unit(&mesh), ObservationOperator::new(0.1).unwrap())
        .unwrap();
    let constant = model.pressure(&vec![0.0; spec.dim()]).unwrap().at(0.5);
    let constant_err = (constant - 0.125 / DEFAULT_ABAR).abs();

    let a: Vec<f64> = mesh.nodes().iter().map(|&x| if x <= 0.5 { 1.0 } else { 2.0 }).collect();
    let piecewise_err = (p_half(&a, &mesh) - 1.0 / 12.0).abs();

    let f = |x: f64| 3.0 + (2.0 * std::f64::consts::PI * x).cos() + 0.5 * (6.0 * x).sin();
    let at = |n: usize| {
        let mesh = Mesh::new(n).unwrap();
        let a: Vec<f64> = mesh.nodes().iter().map(|&x| f(x)).collect();
        p_half(&a, &mesh)
    };
    let reference = at(1 << 16);
    let ratio = (at(256) - reference).abs() / (at(512) - reference).abs();
    outcome(
        constant_err < 1e-6 && piecewise_err < 1e-5 && (3.5..=4.5).contains(&ratio),
        format!("constant error {constant_err:.2e} (< 1e-6), piecewise error {piecewise_err:.2e} (< 1e-5), Richardson ratio {ratio:.3} (in [3.5, 4.5])"),
    )
}

fn chi_square_uniform(samples: &[f64], bins: usize) -> f64 {
    let n = samples.len() as f64;
    let expected = n / bins as f64;
    let stat: f64 = histogram(samples, bins).iter().map(|p| (p * n - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

fn stationarity() -> Outcome {
    const STEPS: usize = 1_000_000;
    const THIN: usize = 50;
    let mut lines = Vec::new();
    let mut pass = true;
    for k in [0usize, 25] {
        let dim = 2 * k + 1;
        let mut functionals = vec![Functional::Coefficient(0)];
        if dim > 1 {
            functionals.push(Functional::Coefficient(dim - 1));
        }
        for kind in [
            ProposalKind::Independence,
            ProposalKind::ReflectedUniform { eps: 0.5 },
            ProposalKind::ReflectedGaussian { eps: 0.5 },
        ] {
            let mut rng = ChainRng::seed_from_u64(17 + k as u64);
            let init = ChainState::new(sample_prior(&mut rng, dim), &FlatLikelihood).unwrap();
            let out = run_chain(&kind, init, &RunOptions::new(STEPS, 0, 29 + k as u64), &functionals, &FlatLikelihood)
                .unwrap();
            for (id, series) in out.functional_ids.iter().zip(&out.series) {
                let thinned: Vec<f64> = series.iter().step_by(THIN).copied().collect();
                let p = chi_square_uniform(&thinned, 50);
                pass &= p > 0.001;
                lines.push(format!("{} J={dim} {id}: p={p:.3}", kind.algorithm()));
            }
        }
    }
    outcome(pass, format!("chi-square over 50 bins, every {THIN}th state: {}", lines.join(", ")))
}

fn posterior_oracle() -> Outcome {
    let cfg = ExperimentConfig::parse("K = 0\nsigma = 0.01\nobs_spacing_d = 0.1\nn_cells = 1024\nmaster_seed = 5").unwrap();
    let data = experiment::dataset(&cfg).unwrap();
    let post = experiment::posterior(&cfg, &data, 0).unwrap();
    let oracle = posterior_quadrature_oracle(&post, 1).unwrap();
    let mut rng = ChainRng::seed_from_u64(3);
    let init = ChainState::new(sample_prior(&mut rng, 1), &post).unwrap();
    let out = run_chain(
        &ProposalKind::ReflectedUniform { eps: 0.5 },
        init,
        &RunOptions::new(1_010_000, 10_000, 4),
        &[Functional::Coefficient(0)],
        &post,
    )
    .unwrap();
    let tv = total_variation(&histogram(&out.series[0], 50), &oracle.bin_probabilities(50));
    outcome(tv < 0.02, format!("TV(chain, quadrature) = {tv:.4} over 50 bins, 10^6 steps (< 0.02); acceptance {:.3}", out.accept_rate()))
}

fn proposal_gap() -> Outcome {
    let rows = theorem42_table(&[0.1, 0.25, 0.5], 2001).unwrap();
    for r in &rows {
        println!(
            "    eps {:<4} numeric gap {:.6}  closed form {:.6}  minorization bound {:.6} ({})  linear bound {:.6} ({})",
            r.eps,
            r.numeric_gap,
            r.fourier_gap,
            r.minorization_bound,
            if r.numeric_ge_minorization { "holds" } else { "fails" },
            r.linear_bound,
            if r.numeric_ge_linear { "holds" } else { "fails" },
        );
    }
    let half = rows.iter().find(|r| r.eps == 0.5).unwrap();
    let rel = (half.numeric_gap - 0.0997).abs() / 0.0997;
    outcome(rel < 0.02, format!("eps 0.5, 2001 cells: gap {:.6} vs 0.0997 (relative error {rel:.2e}, < 2%)", half.numeric_gap))
}

fn cheeger_suite() -> Outcome {
    let generator = InstanceGenerator::new(101, 12);
    let reports = run_suite(&generator, 1000, |inst| cheeger_check(&inst.q).unwrap());
    let failures = reports.iter().filter(|r| !r.holds(1e-10)).count();
    outcome(failures == 0, format!("{failures} of 1000 chains violate C^2/2 <= gap <= 2C at slack 1e-10"))
}

fn quantiles(mut v: Vec<f64>) -> String {
    v.retain(|x| x.is_finite());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    format!("min {:.3e} median {:.3e} max {:.3e}", v[0], v[v.len() / 2], v[v.len() - 1])
}

fn gap_transfer_suite() -> Outcome {
    let generator = InstanceGenerator::new(202, 12);
    let results = run_suite(&generator, 1000, |inst| {
        (theorem31_check(&inst.q, &inst.l_values).unwrap(), remark34_probe(&inst.q, &inst.l_values).unwrap())
    });
    let lower_fail = results.iter().filter(|(t, _)| !t.lower_holds).count();
    let upper_fail = results.iter().filter(|(t, _)| !t.upper_holds).count();
    let linear_fail = results.iter().filter(|(_, r)| !(r.lower_holds && r.upper_holds)).count();
    let max_ratio = results.iter().map(|(t, _)| t.l_max / t.l_min).fold(0.0, f64::max);
    println!("    lower bound tightness gap / bound: {}", quantiles(results.iter().map(|(t, _)| t.lower_tightness).collect()));
    println!(
        "    upper bound (report only): {upper_fail} violations; gap / bound {}",
        quantiles(results.iter().map(|(t, _)| t.upper_tightness).collect())
    );
    println!("    linear-in-ratio bounds (report only): {linear_fail} violations");
    outcome(
        lower_fail == 0 && max_ratio <= 10.0,
        format!("{lower_fail} of 1000 instances violate the lower bound (largest likelihood ratio {max_ratio:.2})"),
    )
}

fn tensorization() -> Outcome {
    let generator = InstanceGenerator::new(303, 12);
    let diffs = run_suite(&generator, 100, |inst| {
        let g = spectral_gap(&inst.q).unwrap().gap;
        let g2 = spectral_gap(&tensor_product(&inst.q, &inst.q).unwrap()).unwrap().gap;
        (g - g2).abs()
    });
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    outcome(worst <= 1e-9, format!("max |gap(k x k) - gap(k)| = {worst:.2e} over 100 kernels (<= 1e-9)"))
}

fn sweep_config(extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "preset = fig1\nK = 25, 250\nn_cells = 512\nn_steps = 200000\nburn_in = 10%\n\
         epsilon = 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.9\nmaster_seed = 1\n{extra}"
    ))
    .unwrap()
}

fn acceptance_sweep(out: &Path) -> Outcome {
    let cfg = sweep_config("");
    let rows = experiment::sweep_acceptance(&cfg, out).unwrap();
    let rate = |alg: Algorithm, k: usize, eps: f64| {
        rows.iter().find(|r| r.algorithm == alg && r.k == k && r.eps == eps).unwrap().accept_rate
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for &eps in &[0.01, 0.02, 0.05, 0.1, 0.2] {
        let (a, b) = (rate(Algorithm::Rwm, 25, eps), rate(Algorithm::Rwm, 250, eps));
        pass &= b < a;
        detail.push(format!("RWM eps {eps}: {a:.3} -> {b:.3}"));
    }
    let mut widest: f64 = 0.0;
    for alg in [Algorithm::Rurwm, Algorithm::Rsrwm] {
        for &eps in &cfg.epsilons {
            widest = widest.max((rate(alg, 250, eps) - rate(alg, 25, eps)).abs());
        }
    }
    pass &= widest <= 0.05;
    detail.push(format!("largest reflected change {widest:.4}"));
    for k in [25, 250] {
        let is: Vec<f64> = cfg.epsilons.iter().map(|&e| rate(Algorithm::Is, k, e)).collect();
        let constant = is.iter().all(|r| *r == is[0]);
        pass &= constant;
        detail.push(format!("IS K={k} {:.3} constant {constant}", is[0]));
    }
    outcome(pass, detail.join(", "))
}

fn autocorrelation(out: &Path) -> Outcome {
    let cfg = ExperimentConfig::parse(
        "preset = concentrated\nK = 25, 250\nn_cells = 512\nn_steps = 3000000\nburn_in = 10%\n\
         algorithms = is, rwm, rurwm\nepsilon = 0.1\nmax_lag = 500\nmaster_seed = 2\n\
         rwm_eps_grid = 0.0001, 0.000125893, 0.000158489, 0.000199526, 0.000251189, 0.000316228, 0.000398107, 0.000501187, 0.000630957, 0.000794328, 0.001, 0.00125893, 0.00158489, 0.00199526, 0.00251189, 0.00316228, 0.00398107, 0.00501187, 0.00630957, 0.00794328, 0.01, 0.0125893, 0.0158489, 0.0199526, 0.0251189, 0.0316228, 0.0398107, 0.0501187, 0.0630957, 0.0794328, 0.1\n\
         tune_steps = 20000",
    )
    .unwrap();
    let rows = experiment::autocorr(&cfg, out).unwrap();
    let get = |alg: Algorithm, k: usize| {
        rows.iter().find(|r| r.algorithm == alg && r.k == k && r.functional_id == "u0").unwrap()
    };
    for r in &rows {
        println!(
            "    {:<5} K={:<3} eps={:<8} {:<6} accept {:.4} IAT {:.1}",
            r.algorithm.to_string(),
            r.k,
            r.eps.map_or("-".into(), |e| format!("{e}")),
            r.functional_id,
            r.accept_rate,
            r.iat
        );
    }
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [25, 250] {
        let ratio = get(Algorithm::Is, k).iat / get(Algorithm::Rurwm, k).iat;
        pass &= ratio > 10.0;
        detail.push(format!("IAT(IS)/IAT(RURWM) K={k}: {ratio:.1}"));
    }
    let rurwm = get(Algorithm::Rurwm, 250).iat / get(Algorithm::Rurwm, 25).iat;
    pass &= (0.5..=2.0).contains(&rurwm);
    detail.push(format!("RURWM IAT ratio K=250/K=25: {rurwm:.2}"));
    let (small, large) = (get(Algorithm::Rwm, 25), get(Algorithm::Rwm, 250));
    let matched = [small, large].iter().all(|r| (r.accept_rate - 0.135).abs() <= 0.05);
    pass &= matched && large.iat > small.iat;
    detail.push(format!(
        "RWM IAT {:.0} (accept {:.3}) -> {:.0} (accept {:.3})",
        small.iat, small.accept_rate, large.iat, large.accept_rate
    ));
    outcome(pass, format!("u0: {}", detail.join(", ")))
}

fn error_bounds() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    // f = (1, -1) has mean 0 and unit norm under the uniform weights
    let f = [1.0, -1.0];
    let mut worst_variance: f64 = 0.0;
    let mut worst_mse: f64 = 0.0;
    let mut rng = ChainRng::seed_from_u64(10);
    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let kernel = FiniteKernel::uniform(nalgebra::DMatrix::from_row_slice(2, 2, &[1.0 - p, p, p, 1.0 - p])).unwrap();
        let gap = spectral_gap(&kernel).unwrap();
        let exact = asymptotic_variance(&kernel, &f).unwrap();
        let bound = kv_variance_bound(1.0, gap.lambda2_gap).unwrap();
        pass &= exact <= bound + 1e-12;
        worst_variance = worst_variance.max(exact / bound);

        let n = 100;
        let replicates = 10_000;
        let mut sum_sq = 0.0;
        for _ in 0..replicates {
            let mut state = rng.random_range(0..2usize);
            let mut total = 0.0;
            for _ in 0..n {
                if rng.random::<f64>() < p {
                    state = 1 - state;
                }
                total += f[state];
            }
            sum_sq += (total / n as f64).powi(2);
        }
        let mse = sum_sq / replicates as f64;
        let mse_bound = rudolf_mse_bound(n, gap.gap).unwrap();
        pass &= mse <= mse_bound;
        worst_mse = worst_mse.max(mse / mse_bound);
    }
    detail.push(format!("largest variance / bound {worst_variance:.3}, largest MSE / bound {worst_mse:.3}"));
    let b4 = burnin_steps(4.0, 0.5, 1.0).unwrap();
    let b3 = burnin_steps(3.0, 0.5, 1.0).unwrap();
    pass &= b4 == 6 && b3 == 10;
    detail.push(format!("burn-in p=4: {b4} (6), p=3: {b3} (10)"));
    outcome(pass, detail.join(", "))
}

fn run_cli(args: &[&str], config: &Path, out: &Path, workers: usize) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_rmcmc"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg(workers.to_string())
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            for (name, bytes) in files(&path) {
                out.push((format!("{}/{name}", path.file_name().unwrap().to_string_lossy()), bytes));
            }
        } else {
            out.push((path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        "preset = fig2\nK = 3, 10\nn_cells = 256\nn_steps = 6000\nepsilon = 0.2, 0.6\nmax_lag = 40\n\
         tune_steps = 2000\naccept_tolerance = 0.2\nwrite_chains = true\nspectral_instances = 50\n\
         tensor_instances = 10\ntheorem42_n_grid = 200\nminorization_n_grid = 100\n",
    )
    .unwrap();
    let mut runs = Vec::new();
    let mut codes = Vec::new();
    for (i, workers) in [1usize, 3].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        for cmd in ["generate-data", "sweep-acceptance", "autocorr", "spectral-verify"] {
            codes.push(run_cli(&[cmd, "--seed", "77"], &config, &out, *workers));
        }
        let svg = out.join("acf_all.svg");
        let status = Command::new(env!("CARGO_BIN_EXE_rmcmc"))
            .args(["plot", "--output"])
            .arg(&svg)
            .arg(out.join("acf.csv"))
            .output()
            .unwrap()
            .status;
        codes.push(status.code().unwrap_or(-1));
        runs.push(files(&out));
    }
    let identical = runs[0] == runs[1];
    let all_ok = codes.iter().all(|c| *c == 0);
    let count = runs[0].len();
    let csv_svg = runs[0].iter().filter(|(n, _)| n.ends_with(".csv") || n.ends_with(".svg")).count();
    outcome(
        identical && all_ok && csv_svg > 10,
        format!("{count} files ({csv_svg} CSV/SVG) byte-identical across two runs with 1 and 3 workers: {identical}; exit codes {codes:?}"),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let scratch = tempfile::tempdir().unwrap();
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "forward solver", Box::new(forward_solver)),
        (2, "prior invariance", Box::new(stationarity)),
        (3, "posterior oracle", Box::new(posterior_oracle)),
        (4, "proposal gap", Box::new(proposal_gap)),
        (5, "Cheeger suite", Box::new(cheeger_suite)),
        (6, "gap transfer suite", Box::new(gap_transfer_suite)),
        (7, "tensorization", Box::new(tensorization)),
        (8, "acceptance sweep", Box::new(|| acceptance_sweep(&scratch.path().join("sweep")))),
        (9, "autocorrelation", Box::new(|| autocorrelation(&scratch.path().join("autocorr")))),
        (10, "error-bound formulas", Box::new(error_bounds)),
        (11, "determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (id, name, run) in &criteria {
        if !selected.is_empty() && !selected.contains(id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        failed += !result.pass as usize;
        println!(
            "criterion {id:>2} {} {name} [{:.1}s]: {}",
            if result.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
