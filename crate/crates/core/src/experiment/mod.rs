//! The experiments behind the `rmcmc` binary.
//!
//! Each command reads an [`ExperimentConfig`], derives one random stream per
//! task from the master seed, runs the tasks on the rayon pool and writes
//! its results in task order, so output bytes never depend on scheduling.

pub mod config;
pub mod output;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::diagnostics::{acf, asymptotic_variance, iat, kv_variance_bound};
use crate::error::{Error, Result};
use crate::field::sample_prior;
use crate::forward::{ForwardModel, Mesh, ObservationOperator, SourceTerm};
use crate::posterior::{make_synthetic_data, Dataset, Posterior};
use crate::rng::{self, stream_seed};
use crate::samplers::{run_chain, Algorithm, ChainOutput, ChainState, Functional, ProposalKind, RunOptions};
use crate::spectral::{
    cheeger_check, corollary43_log_bound, minorization_probe, mh_finite, reflected_uniform_fourier_gap,
    remark34_probe, spectral_gap, tensor_product, theorem31_check, theorem42_table, InstanceGenerator,
};

pub use config::{BurnIn, ExperimentConfig, Preset, SourceProfile};
pub use output::{num, Provenance, Table};

const DATA_TAG: u64 = 0;
const SWEEP_TAG: u64 = 1;
const TUNE_TAG: u64 = 2;
const AUTOCORR_TAG: u64 = 3;
const SPECTRAL_TAG: u64 = 4;
const TENSOR_TAG: u64 = 5;

/// Seed of the task identified by `parts` under `tag`.
pub fn task_seed(master_seed: u64, tag: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(stream_seed(master_seed, tag), |s, &p| stream_seed(s, p))
}

fn source_term(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<SourceTerm> {
    match &cfg.source {
        SourceProfile::Constant(c) => SourceTerm::new(vec![*c; mesh.n_nodes()]),
        SourceProfile::Nodes(v) => SourceTerm::new(v.clone()),
    }
}

/// Forward model for dimension parameter `k`.
pub fn forward_model(cfg: &ExperimentConfig, k: usize) -> Result<ForwardModel> {
    let mesh = Mesh::new(cfg.n_cells)?;
    let source = source_term(cfg, &mesh)?;
    ForwardModel::new(cfg.basis(k)?, mesh, source, ObservationOperator::new(cfg.d)?)
}

/// Synthetic data from a prior draw with `truth_K`, shared by every `K`.
pub fn dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let model = forward_model(cfg, cfg.truth_k)?;
    make_synthetic_data(&model, cfg.sigma, task_seed(cfg.master_seed, DATA_TAG, &[]))
}

pub fn posterior(cfg: &ExperimentConfig, data: &Dataset, k: usize) -> Result<Posterior> {
    Posterior::new(forward_model(cfg, k)?, data.clone())
}

fn out_path(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

/// Writes `dataset.csv`, `truth.csv` and the `dataset.meta` sidecar.
pub fn generate_data(cfg: &ExperimentConfig, out: &Path) -> Result<Dataset> {
    let prov = Provenance::of(cfg);
    let data = dataset(cfg)?;
    let rows: Vec<Vec<String>> = data
        .y
        .iter()
        .zip(&data.locations)
        .enumerate()
        .map(|(i, (y, x))| vec![i.to_string(), num(*x), num(*y)])
        .collect();
    output::write_csv(&out_path(out, "dataset.csv"), &prov, &["index", "location", "y"], &rows)?;
    let truth = data.truth.as_ref().expect("synthetic data records its truth");
    let truth_rows: Vec<Vec<String>> = truth
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, u)| vec![i.to_string(), num(*u)])
        .collect();
    output::write_csv(&out_path(out, "truth.csv"), &prov, &["index", "value"], &truth_rows)?;
    let mut meta = prov.header();
    for (k, v) in [
        ("sigma", num(data.sigma)),
        ("d", num(data.d)),
        ("n_obs", data.y.len().to_string()),
        ("n_cells", cfg.n_cells.to_string()),
        ("truth_K", cfg.truth_k.to_string()),
        ("abar", num(cfg.abar)),
        ("truth_seed", data.truth_seed.to_string()),
        ("preset", cfg.preset.map_or("none".into(), |p| p.name().to_string())),
    ] {
        let _ = writeln!(meta, "{k}={v}");
    }
    output::write_text(&out_path(out, "dataset.meta"), &meta)?;
    Ok(data)
}

/// One chain of a sweep or autocorrelation run.
#[derive(Clone, Debug, PartialEq)]
struct Cell {
    kind: ProposalKind,
    k: usize,
    seed: u64,
}

fn run_cell(cell: &Cell, post: &Posterior, opts: &RunOptions, functionals: &[Functional]) -> Result<ChainOutput> {
    let init_u = sample_prior(&mut rng::stream(cell.seed, 0), post.model().spec().dim());
    let init = ChainState::new(init_u, post)?;
    let opts = RunOptions { seed: stream_seed(cell.seed, 1), ..opts.clone() };
    run_chain(&cell.kind, init, &opts, functionals, post)
}

fn posteriors(cfg: &ExperimentConfig, data: &Dataset) -> Result<BTreeMap<usize, Posterior>> {
    cfg.k_list.iter().map(|&k| Ok((k, posterior(cfg, data, k)?))).collect()
}

fn algorithm_index(alg: Algorithm) -> u64 {
    Algorithm::ALL.iter().position(|a| *a == alg).expect("listed") as u64
}

fn sorted_unique<T: PartialOrd + Copy>(v: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for &x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcceptanceRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub eps: f64,
    pub accept_rate: f64,
    pub accept_count: usize,
    pub retained: usize,
    pub seed: u64,
}

pub const ACCEPTANCE_COLUMNS: [&str; 7] = ["algorithm", "K", "epsilon", "accept_rate", "accept_count", "retained", "seed"];

/// Post-burn-in acceptance rate for every `(algorithm, K, epsilon)`.
/// IS ignores the step size, so it runs once per `K` and the row repeats.
pub fn sweep_acceptance(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AcceptanceRow>> {
    let data = dataset(cfg)?;
    let posts = posteriors(cfg, &data)?;
    let algorithms = sorted_unique(&cfg.algorithms);
    let ks = sorted_unique(&cfg.k_list);
    let epsilons = sorted_unique(&cfg.epsilons);
    let mut cells = Vec::new();
    for &alg in &algorithms {
        for (ki, &k) in ks.iter().enumerate() {
            if alg == Algorithm::Is {
                let seed = task_seed(cfg.master_seed, SWEEP_TAG, &[algorithm_index(alg), ki as u64, 0]);
                cells.push(Cell { kind: ProposalKind::Independence, k, seed });
                continue;
            }
            for (ei, &eps) in epsilons.iter().enumerate() {
                let seed = task_seed(cfg.master_seed, SWEEP_TAG, &[algorithm_index(alg), ki as u64, ei as u64 + 1]);
                cells.push(Cell { kind: alg.with_eps(eps)?, k, seed });
            }
        }
    }
    let opts = RunOptions::new(cfg.n_steps, cfg.burn_in_steps(), 0);
    let results: Vec<ChainOutput> = cells
        .par_iter()
        .map(|c| run_cell(c, &posts[&c.k], &opts, &[]))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (cell, res) in cells.iter().zip(&results) {
        let eps_values: Vec<f64> = match cell.kind.eps() {
            Some(e) => vec![e],
            None => epsilons.clone(),
        };
        for eps in eps_values {
            rows.push(AcceptanceRow {
                algorithm: cell.kind.algorithm(),
                k: cell.k,
                eps,
                accept_rate: res.accept_rate(),
                accept_count: res.accept_count,
                retained: res.retained(),
                seed: cell.seed,
            });
        }
    }
    let prov = Provenance::of(cfg);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.algorithm.to_string(),
                r.k.to_string(),
                num(r.eps),
                num(r.accept_rate),
                r.accept_count.to_string(),
                r.retained.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    let path = out_path(out, "acceptance.csv");
    output::write_csv(&path, &prov, &ACCEPTANCE_COLUMNS, &table)?;
    plot_csv(&path, PlotKind::Auto, None, None)?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuningRow {
    pub k: usize,
    pub eps: f64,
    pub accept_rate: f64,
    pub chosen: bool,
}

/// RWM step size per `K`: the table entry if given, otherwise the grid
/// point whose pilot acceptance is closest to the target. Fails when the
/// closest rate misses the target by more than the tolerance.
fn tune_rwm(
    cfg: &ExperimentConfig,
    posts: &BTreeMap<usize, Posterior>,
    ks: &[usize],
) -> Result<(BTreeMap<usize, f64>, Vec<TuningRow>)> {
    let mut chosen = BTreeMap::new();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (ki, &k) in ks.iter().enumerate() {
        if let Some(&(_, eps)) = cfg.rwm_eps_table.iter().find(|(tk, _)| *tk == k) {
            chosen.insert(k, eps);
            continue;
        }
        for (ei, &eps) in cfg.rwm_eps_grid.iter().enumerate() {
            let seed = task_seed(cfg.master_seed, TUNE_TAG, &[ki as u64, ei as u64]);
            cells.push(Cell { kind: ProposalKind::RandomWalk { eps }, k, seed });
        }
    }
    let opts = RunOptions::new(cfg.tune_steps, cfg.tune_steps / 10, 0);
    let rates: Vec<f64> = cells
        .par_iter()
        .map(|c| run_cell(c, &posts[&c.k], &opts, &[]).map(|o| o.accept_rate()))
        .collect::<Result<_>>()?;
    for &k in ks {
        if chosen.contains_key(&k) {
            continue;
        }
        let pilot: Vec<(f64, f64)> = cells
            .iter()
            .zip(&rates)
            .filter(|(c, _)| c.k == k)
            .map(|(c, r)| (c.kind.eps().expect("RWM has a step"), *r))
            .collect();
        let best = pilot
            .iter()
            .copied()
            .min_by(|a, b| {
                (a.1 - cfg.target_accept)
                    .abs()
                    .partial_cmp(&(b.1 - cfg.target_accept).abs())
                    .expect("finite rates")
            })
            .expect("non-empty grid");
        for &(eps, rate) in &pilot {
            rows.push(TuningRow { k, eps, accept_rate: rate, chosen: eps == best.0 });
        }
        if (best.1 - cfg.target_accept).abs() > cfg.accept_tolerance {
            return Err(Error::Tuning(format!(
                "K = {k}: closest pilot acceptance {} at eps = {} misses {} by more than {}",
                best.1, best.0, cfg.target_accept, cfg.accept_tolerance
            )));
        }
        chosen.insert(k, best.0);
    }
    Ok((chosen, rows))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutocorrRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub eps: Option<f64>,
    pub functional_id: String,
    pub accept_rate: f64,
    /// Infinite when the chain never moved.
    pub iat: f64,
    pub ess: f64,
    pub seed: u64,
    pub rho: Vec<f64>,
}

pub const ACF_COLUMNS: [&str; 6] = ["algorithm", "K", "epsilon", "functional_id", "lag", "rho"];
pub const SUMMARY_COLUMNS: [&str; 8] = ["algorithm", "K", "epsilon", "functional_id", "accept_rate", "iat", "ess", "seed"];

fn eps_label(eps: Option<f64>) -> String {
    eps.map_or("NA".into(), num)
}

/// Production chains with ACF and IAT per functional. RWM runs at the
/// tuned step size, the reflected walks at every configured `epsilon`.
pub fn autocorr(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AutocorrRow>> {
    let data = dataset(cfg)?;
    let posts = posteriors(cfg, &data)?;
    let algorithms = sorted_unique(&cfg.algorithms);
    let ks = sorted_unique(&cfg.k_list);
    let epsilons = sorted_unique(&cfg.epsilons);
    let prov = Provenance::of(cfg);

    let rwm_eps = if algorithms.contains(&Algorithm::Rwm) {
        let (chosen, tuning) = tune_rwm(cfg, &posts, &ks)?;
        let rows: Vec<Vec<String>> = tuning
            .iter()
            .map(|r| vec![r.k.to_string(), num(r.eps), num(r.accept_rate), r.chosen.to_string()])
            .collect();
        output::write_csv(
            &out_path(out, "tuning.csv"),
            &prov,
            &["K", "epsilon", "accept_rate", "chosen"],
            &rows,
        )?;
        chosen
    } else {
        BTreeMap::new()
    };

    let mut cells = Vec::new();
    for &alg in &algorithms {
        for (ki, &k) in ks.iter().enumerate() {
            let steps: Vec<(u64, Option<f64>)> = match alg {
                Algorithm::Is => vec![(0, None)],
                Algorithm::Rwm => vec![(0, Some(rwm_eps[&k]))],
                _ => epsilons.iter().enumerate().map(|(i, e)| (i as u64 + 1, Some(*e))).collect(),
            };
            for (ei, eps) in steps {
                let seed = task_seed(cfg.master_seed, AUTOCORR_TAG, &[algorithm_index(alg), ki as u64, ei]);
                cells.push(Cell { kind: alg.with_eps(eps.unwrap_or(0.0))?, k, seed });
            }
        }
    }
    let mut opts = RunOptions::new(cfg.n_steps, cfg.burn_in_steps(), 0);
    if cfg.write_chains {
        opts.dump_every = Some(cfg.chain_dump_every);
    }
    let results: Vec<(ChainOutput, Vec<AutocorrRow>)> = cells
        .par_iter()
        .map(|cell| {
            let post = &posts[&cell.k];
            let spec = post.model().spec();
            let functionals: Vec<Functional> = cfg
                .functionals
                .iter()
                .map(|id| Functional::parse(id, spec))
                .collect::<Result<_>>()?;
            let res = run_cell(cell, post, &opts, &functionals)?;
            let rows = res
                .functional_ids
                .iter()
                .zip(&res.series)
                .map(|(id, series)| {
                    let (rho, tau, ess) = match (acf(series, cfg.max_lag), iat(series)) {
                        (Ok(a), Ok(t)) => (a.rho, t.tau, t.ess),
                        (Err(Error::ZeroVariance), _) | (_, Err(Error::ZeroVariance)) => {
                            (Vec::new(), f64::INFINITY, 0.0)
                        }
                        (Err(e), _) | (_, Err(e)) => return Err(e),
                    };
                    Ok(AutocorrRow {
                        algorithm: cell.kind.algorithm(),
                        k: cell.k,
                        eps: cell.kind.eps(),
                        functional_id: id.clone(),
                        accept_rate: res.accept_rate(),
                        iat: tau,
                        ess,
                        seed: cell.seed,
                        rho,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((res, rows))
        })
        .collect::<Result<_>>()?;

    let mut acf_rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut all = Vec::new();
    for (res, rows) in results {
        if cfg.write_chains {
            write_chain_csv(cfg, out, &prov, &res)?;
        }
        for r in rows {
            let head = vec![r.algorithm.to_string(), r.k.to_string(), eps_label(r.eps), r.functional_id.clone()];
            for (lag, rho) in r.rho.iter().enumerate() {
                let mut row = head.clone();
                row.push(lag.to_string());
                row.push(num(*rho));
                acf_rows.push(row);
            }
            let mut row = head;
            row.extend([num(r.accept_rate), num(r.iat), num(r.ess), r.seed.to_string()]);
            summary_rows.push(row);
            all.push(r);
        }
    }
    let acf_path = out_path(out, "acf.csv");
    output::write_csv(&acf_path, &prov, &ACF_COLUMNS, &acf_rows)?;
    output::write_csv(&out_path(out, "summary.csv"), &prov, &SUMMARY_COLUMNS, &summary_rows)?;
    if !acf_rows.is_empty() {
        plot_csv(&acf_path, PlotKind::Acf, Some(&cfg.functionals[0]), None)?;
    }
    Ok(all)
}

pub const CHAIN_COLUMNS: [&str; 3] = ["step", "functional_id", "value"];

/// `step, functional_id, value` for every dumped step, with a trailing
/// summary line.
fn write_chain_csv(cfg: &ExperimentConfig, out: &Path, prov: &Provenance, res: &ChainOutput) -> Result<()> {
    let k = (res.final_state.u().len() - 1) / 2;
    let name = format!("chain_{}_K{}_eps{}.csv", res.algorithm, k, eps_label(res.eps));
    let every = cfg.chain_dump_every;
    let mut rows = Vec::new();
    for t in (0..res.retained()).step_by(every) {
        for (id, s) in res.functional_ids.iter().zip(&res.series) {
            rows.push(vec![(res.burn_in + t).to_string(), id.clone(), num(s[t])]);
        }
    }
    let mut text = output::render_csv(prov, &CHAIN_COLUMNS, &rows);
    text.push_str(&output::summary_line(&[
        ("accept_rate", num(res.accept_rate())),
        ("n_steps", res.n_steps.to_string()),
        ("seed", res.seed.to_string()),
    ]));
    output::write_text(&out_path(out, &name), &text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Auto,
    Acceptance,
    Acf,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(PlotKind::Auto),
            "acceptance" => Ok(PlotKind::Acceptance),
            "acf" => Ok(PlotKind::Acf),
            other => Err(Error::Config(format!("unknown plot kind `{other}`"))),
        }
    }
}

fn group_series(table: &Table, key_cols: &[usize], x: usize, y: usize) -> Result<Vec<svg::Series>> {
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for i in 0..table.rows.len() {
        let label = key_cols.iter().map(|&c| table.rows[i][c].as_str()).collect::<Vec<_>>().join(" ");
        let point = (table.float(i, x)?, table.float(i, y)?);
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push(point),
            None => groups.push((label, vec![point])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite x"));
            svg::Series { label, points }
        })
        .collect())
}

/// Renders an `acceptance.csv` or `acf.csv` as SVG next to the input (or at
/// `output`). `functional` restricts an ACF plot to one functional. Nothing
/// is written when the file does not match a known schema.
pub fn plot_csv(input: &Path, kind: PlotKind, functional: Option<&str>, output: Option<&Path>) -> Result<PathBuf> {
    let mut table = Table::read(input)?;
    let is_acceptance = table.has_columns(&["algorithm", "K", "epsilon", "accept_rate"]);
    let is_acf = table.has_columns(&ACF_COLUMNS);
    let kind = match kind {
        PlotKind::Auto if is_acf => PlotKind::Acf,
        PlotKind::Auto if is_acceptance => PlotKind::Acceptance,
        PlotKind::Auto => return Err(Error::Schema(format!("unrecognised columns {:?}", table.columns))),
        PlotKind::Acf if !is_acf => return Err(Error::Schema(format!("acf plot needs columns {ACF_COLUMNS:?}"))),
        PlotKind::Acceptance if !is_acceptance => {
            return Err(Error::Schema("acceptance plot needs algorithm, K, epsilon, accept_rate".into()))
        }
        k => k,
    };
    if table.rows.is_empty() {
        return Err(Error::Schema(format!("{} has no records", input.display())));
    }
    let svg_text = match kind {
        PlotKind::Acceptance => {
            let keys = [table.column("algorithm")?, table.column("K")?];
            let series = group_series(&table, &keys, table.column("epsilon")?, table.column("accept_rate")?)?;
            let series: Vec<svg::Series> = series
                .into_iter()
                .map(|s| svg::Series { label: s.label.replacen(' ', " K=", 1), ..s })
                .collect();
            svg::line_plot("Acceptance rate against step size", "epsilon", "acceptance rate", &series)
        }
        PlotKind::Acf => {
            let f_col = table.column("functional_id")?;
            if let Some(f) = functional {
                table.rows.retain(|r| r[f_col] == f);
                if table.rows.is_empty() {
                    return Err(Error::Schema(format!("no records for functional `{f}`")));
                }
            }
            let mut keys = vec![table.column("algorithm")?, table.column("K")?, table.column("epsilon")?];
            if functional.is_none() {
                keys.push(f_col);
            }
            let series = group_series(&table, &keys, table.column("lag")?, table.column("rho")?)?;
            let title = match functional {
                Some(f) => format!("Autocorrelation of {f}"),
                None => "Autocorrelation".to_string(),
            };
            svg::line_plot(&title, "lag", "rho", &series)
        }
        PlotKind::Auto => unreachable!("resolved above"),
    };
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("svg"));
    output::write_text(&path, &svg_text)?;
    Ok(path)
}

/// Outcome of `spectral-verify`: asserted failures decide the exit code,
/// audit lines only report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectralOutcome {
    pub asserted_failures: usize,
    pub report: String,
}

fn stats(values: &[f64]) -> (f64, f64, f64) {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    (v[0], v[v.len() / 2], v[v.len() - 1])
}

fn flag(ok: bool) -> &'static str {
    if ok { "PASS" } else { "FAIL" }
}

/// Runs the finite-chain suites and writes one CSV per suite, a text
/// report, and plain-text dumps of every instance that violates an
/// asserted invariant.
pub fn spectral_verify(cfg: &ExperimentConfig, out: &Path) -> Result<SpectralOutcome> {
    let prov = Provenance::of(cfg);
    let mut report = prov.header();
    let mut failures = 0;
    let mut dumps: Vec<(String, String)> = Vec::new();

    // Cheeger, gap transfer, conjectured linear bounds, asymptotic variance
    let generator = InstanceGenerator::new(task_seed(cfg.master_seed, SPECTRAL_TAG, &[]), cfg.spectral_max_n);
    let suite = crate::spectral::run_suite(&generator, cfg.spectral_instances, |inst| {
        let cheeger = cheeger_check(&inst.q)?;
        let t31 = theorem31_check(&inst.q, &inst.l_values)?;
        let r34 = remark34_probe(&inst.q, &inst.l_values)?;
        let mh = mh_finite(&inst.q, &inst.l_values)?;
        let f = &inst.l_values;
        let mean: f64 = f.iter().zip(mh.weights().iter()).map(|(a, w)| a * w).sum();
        let var: f64 = f.iter().zip(mh.weights().iter()).map(|(a, w)| w * (a - mean).powi(2)).sum();
        let asym = asymptotic_variance(&mh, f)?;
        let bound = kv_variance_bound(var, spectral_gap(&mh)?.lambda2_gap)?;
        Ok::<_, Error>((inst.q.n(), cheeger, t31, r34, asym, bound))
    });
    let mut cheeger_rows = Vec::new();
    let mut t31_rows = Vec::new();
    let mut r34_rows = Vec::new();
    let mut var_rows = Vec::new();
    let (mut cheeger_fail, mut lower_fail, mut upper_fail, mut r34_fail, mut var_fail) = (0, 0, 0, 0, 0);
    let mut lower_tight = Vec::new();
    let mut upper_tight = Vec::new();
    for (i, res) in suite.into_iter().enumerate() {
        let (n, c, t, r, asym, bound) = res?;
        let c_ok = c.holds(cfg.cheeger_slack);
        let v_ok = asym <= bound * (1.0 + 1e-9) + 1e-12;
        if !c_ok || !t.lower_holds || !v_ok {
            let inst = generator.instance(i);
            dumps.push((format!("instance_{i}.txt"), inst.dump()));
        }
        cheeger_fail += !c_ok as usize;
        lower_fail += !t.lower_holds as usize;
        upper_fail += !t.upper_holds as usize;
        r34_fail += !(r.lower_holds && r.upper_holds) as usize;
        var_fail += !v_ok as usize;
        lower_tight.push(t.lower_tightness);
        upper_tight.push(t.upper_tightness);
        cheeger_rows.push(vec![
            i.to_string(),
            n.to_string(),
            num(c.conductance),
            num(c.lambda2_gap),
            num(c.abs_gap),
            num(c.lower_slack),
            num(c.upper_slack),
            c_ok.to_string(),
        ]);
        t31_rows.push(vec![
            i.to_string(),
            n.to_string(),
            num(t.l_min / t.l_max),
            num(t.proposal_gap),
            num(t.mh_gap),
            num(t.lower_bound),
            num(t.upper_bound),
            t.lower_holds.to_string(),
            t.upper_holds.to_string(),
            num(t.lower_tightness),
            num(t.upper_tightness),
        ]);
        r34_rows.push(vec![
            i.to_string(),
            num(r.ratio),
            num(r.proposal_gap),
            num(r.mh_gap),
            num(r.lower),
            num(r.upper),
            r.lower_holds.to_string(),
            r.upper_holds.to_string(),
        ]);
        var_rows.push(vec![i.to_string(), num(asym), num(bound), v_ok.to_string()]);
    }
    output::write_csv(
        &out_path(out, "cheeger.csv"),
        &prov,
        &["index", "n", "conductance", "lambda2_gap", "abs_gap", "lower_slack", "upper_slack", "holds"],
        &cheeger_rows,
    )?;
    output::write_csv(
        &out_path(out, "theorem31.csv"),
        &prov,
        &[
            "index",
            "n",
            "l_ratio",
            "proposal_gap",
            "mh_gap",
            "lower_bound",
            "upper_bound",
            "lower_holds",
            "upper_holds",
            "lower_tightness",
            "upper_tightness",
        ],
        &t31_rows,
    )?;
    output::write_csv(
        &out_path(out, "remark34.csv"),
        &prov,
        &["index", "l_ratio", "proposal_gap", "mh_gap", "lower", "upper", "lower_holds", "upper_holds"],
        &r34_rows,
    )?;
    output::write_csv(
        &out_path(out, "asymptotic_variance.csv"),
        &prov,
        &["index", "asymptotic_variance", "bound", "holds"],
        &var_rows,
    )?;
    let count = cfg.spectral_instances;
    let _ = writeln!(report, "[{}] cheeger: {cheeger_fail} of {count} violate C^2/2 <= gap <= 2C", flag(cheeger_fail == 0));
    let _ = writeln!(report, "[{}] gap transfer lower bound: {lower_fail} of {count} violations", flag(lower_fail == 0));
    let _ = writeln!(
        report,
        "[{}] variance bound 2 Var(f) / gap: {var_fail} of {count} violations",
        flag(var_fail == 0)
    );
    let (lo, med, hi) = stats(&lower_tight);
    let _ = writeln!(report, "[info] lower bound tightness gap / bound: min {lo:.4e} median {med:.4e} max {hi:.4e}");
    let (lo, med, hi) = stats(&upper_tight);
    let _ = writeln!(
        report,
        "[info] upper bound: {upper_fail} of {count} violations; gap / bound min {lo:.4e} median {med:.4e} max {hi:.4e}"
    );
    let _ = writeln!(report, "[info] linear-in-ratio bounds: {r34_fail} of {count} violations");
    failures += cheeger_fail + lower_fail + var_fail;

    // tensorization
    let tgen = InstanceGenerator::new(task_seed(cfg.master_seed, TENSOR_TAG, &[]), cfg.tensor_max_n);
    let tensor = crate::spectral::run_suite(&tgen, cfg.tensor_instances, |inst| {
        let g = spectral_gap(&inst.q)?.gap;
        let g2 = spectral_gap(&tensor_product(&inst.q, &inst.q)?)?.gap;
        Ok::<_, Error>((inst.q.n(), g, g2))
    });
    let mut tensor_rows = Vec::new();
    let mut tensor_fail = 0;
    for (i, res) in tensor.into_iter().enumerate() {
        let (n, g, g2) = res?;
        let ok = (g - g2).abs() <= cfg.tensor_tolerance;
        if !ok {
            tensor_fail += 1;
            dumps.push((format!("tensor_instance_{i}.txt"), tgen.instance(i).dump()));
        }
        tensor_rows.push(vec![i.to_string(), n.to_string(), num(g), num(g2), num((g - g2).abs()), ok.to_string()]);
    }
    output::write_csv(
        &out_path(out, "tensor.csv"),
        &prov,
        &["index", "n", "gap", "product_gap", "abs_diff", "holds"],
        &tensor_rows,
    )?;
    let _ = writeln!(
        report,
        "[{}] tensorization: {tensor_fail} of {} differ by more than {:e}",
        flag(tensor_fail == 0),
        cfg.tensor_instances,
        cfg.tensor_tolerance
    );
    failures += tensor_fail;

    // reflected uniform walk against its closed-form gap and claimed bounds
    let rows = theorem42_table(&cfg.theorem42_eps, cfg.theorem42_n_grid)?;
    let t42: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.eps),
                r.n_grid.to_string(),
                num(r.numeric_gap),
                num(r.numeric_lambda2_gap),
                num(r.fourier_gap),
                num(r.minorization_bound),
                num(r.linear_bound),
                r.numeric_ge_minorization.to_string(),
                r.minorization_ge_linear.to_string(),
                r.numeric_ge_linear.to_string(),
            ]
        })
        .collect();
    output::write_csv(
        &out_path(out, "theorem42.csv"),
        &prov,
        &[
            "epsilon",
            "n_grid",
            "numeric_gap",
            "numeric_lambda2_gap",
            "fourier_gap",
            "minorization_bound",
            "linear_bound",
            "numeric_ge_minorization",
            "minorization_ge_linear",
            "numeric_ge_linear",
        ],
        &t42,
    )?;
    for r in &rows {
        let _ = writeln!(
            report,
            "[audit] eps {}: numeric gap {:.6} (closed form {:.6}), minorization bound {:.6} holds {}, linear bound {:.6} holds {}, minorization >= linear {}",
            r.eps,
            r.numeric_gap,
            r.fourier_gap,
            r.minorization_bound,
            r.numeric_ge_minorization,
            r.linear_bound,
            r.numeric_ge_linear,
            r.minorization_ge_linear
        );
    }

    let minor: Vec<_> = cfg
        .theorem42_eps
        .par_iter()
        .map(|&eps| minorization_probe(eps, cfg.minorization_n_grid, None))
        .collect::<Result<_>>()?;
    let minor_rows: Vec<Vec<String>> = minor
        .iter()
        .map(|m| {
            vec![
                num(m.eps),
                m.n_grid.to_string(),
                m.steps.to_string(),
                num(m.min_density),
                num(m.claimed),
                m.meets_claim().to_string(),
                num(m.max_row_sum_error),
            ]
        })
        .collect();
    output::write_csv(
        &out_path(out, "minorization.csv"),
        &prov,
        &["epsilon", "n_grid", "steps", "min_density", "claimed", "meets_claim", "max_row_sum_error"],
        &minor_rows,
    )?;
    for m in &minor {
        let _ = writeln!(
            report,
            "[audit] eps {}: min {}-step density {:.4e} against claimed {} ({})",
            m.eps,
            m.steps,
            m.min_density,
            m.claimed,
            if m.meets_claim() { "met" } else { "not met" }
        );
    }

    // J-independent lower bound for the posterior chains
    let data = dataset(cfg)?;
    let mut c43_rows = Vec::new();
    for &k in &sorted_unique(&cfg.k_list) {
        let bounds = posterior(cfg, &data, k)?.bounds()?;
        for &eps in &cfg.theorem42_eps {
            let gap = reflected_uniform_fourier_gap(eps);
            let log_bound = corollary43_log_bound(&bounds, gap);
            let _ = writeln!(
                report,
                "[info] K {k} eps {eps}: log L_lower {:.6e}, proposal gap {gap:.6}, gap >= exp({log_bound:.6e})",
                bounds.log_lower
            );
            c43_rows.push(vec![
                k.to_string(),
                num(eps),
                num(bounds.log_lower),
                num(bounds.log_upper),
                num(gap),
                num(log_bound),
                num(log_bound.exp()),
            ]);
        }
    }
    output::write_csv(
        &out_path(out, "corollary43.csv"),
        &prov,
        &["K", "epsilon", "log_l_lower", "log_l_upper", "proposal_gap", "log_bound", "bound"],
        &c43_rows,
    )?;

    for (name, text) in &dumps {
        output::write_text(&out.join("counterexamples").join(name), text)?;
    }
    let _ = writeln!(report, "asserted failures: {failures}");
    output::write_text(&out_path(out, "spectral_report.txt"), &report)?;
    Ok(SpectralOutcome { asserted_failures: failures, report })
}
