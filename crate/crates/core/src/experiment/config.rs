//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. List values are comma
//! separated. A `preset` line fills defaults first; every other key then
//! overrides, wherever it appears in the file. Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{BasisSpec, DEFAULT_ABAR};
use crate::forward::{Mesh, ObservationOperator};
use crate::samplers::Algorithm;

/// Noise level and observation spacing for each stated experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// "33 measurements with sigma = 0.05": acceptance sweeps.
    Fig1,
    /// "for d = 0.1 and sigma = 0.1": first autocorrelation figure.
    Fig2,
    /// "more observations and lower observational noise (d = 0.04 and
    /// sigma = 0.03)": text of the second autocorrelation figure.
    Fig3Text,
    /// "posterior for sigma = 0.05 and d = 0.05": its caption.
    Fig3Caption,
    /// "observing p on a fine mesh with small noise (dx = 0.03 and
    /// sigma = 0.03)".
    Peaked,
    /// Small noise on a dense grid; with a unit source this is the setting
    /// where the independence sampler degrades.
    Concentrated,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig1,
        Preset::Fig2,
        Preset::Fig3Text,
        Preset::Fig3Caption,
        Preset::Peaked,
        Preset::Concentrated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3Text => "fig3-text",
            Preset::Fig3Caption => "fig3-caption",
            Preset::Peaked => "peaked",
            Preset::Concentrated => "concentrated",
        }
    }

    /// `(sigma, d)`.
    pub fn noise_and_spacing(self) -> (f64, f64) {
        match self {
            Preset::Fig1 => (0.05, 1.0 / 32.0),
            Preset::Fig2 => (0.1, 0.1),
            Preset::Fig3Text => (0.03, 0.04),
            Preset::Fig3Caption => (0.05, 0.05),
            Preset::Peaked => (0.03, 0.03),
            Preset::Concentrated => (0.0005, 0.01),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceProfile {
    /// `g = c` at every node.
    Constant(f64),
    /// One value per mesh node.
    Nodes(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub k_list: Vec<usize>,
    /// Dimension parameter of the coefficients that generate the data.
    pub truth_k: usize,
    pub abar: f64,
    pub gamma_override: Option<Vec<f64>>,
    pub n_cells: usize,
    pub d: f64,
    pub source: SourceProfile,
    pub sigma: f64,
    pub epsilons: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub n_steps: usize,
    pub burn_in: BurnIn,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub functionals: Vec<String>,
    pub max_lag: usize,
    pub write_chains: bool,
    pub chain_dump_every: usize,
    pub target_accept: f64,
    pub accept_tolerance: f64,
    /// Candidate RWM step sizes for tuning.
    pub rwm_eps_grid: Vec<f64>,
    /// Fixed RWM step sizes per `K`, bypassing the tuning sweep.
    pub rwm_eps_table: Vec<(usize, f64)>,
    pub tune_steps: usize,
    pub spectral_instances: usize,
    pub spectral_max_n: usize,
    pub tensor_instances: usize,
    pub tensor_max_n: usize,
    pub theorem42_eps: Vec<f64>,
    pub theorem42_n_grid: usize,
    pub minorization_n_grid: usize,
    pub cheeger_slack: f64,
    pub tensor_tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BurnIn {
    Steps(usize),
    Fraction(f64),
}

impl BurnIn {
    pub fn steps(self, n_steps: usize) -> usize {
        match self {
            BurnIn::Steps(s) => s,
            BurnIn::Fraction(f) => (f * n_steps as f64).floor() as usize,
        }
    }
}

pub const KEYS: &[&str] = &[
    "preset",
    "K",
    "truth_K",
    "abar",
    "gamma_override",
    "n_cells",
    "obs_spacing_d",
    "source_profile",
    "sigma",
    "epsilon",
    "algorithms",
    "n_steps",
    "burn_in",
    "master_seed",
    "output_dir",
    "functionals",
    "max_lag",
    "write_chains",
    "chain_dump_every",
    "target_accept",
    "accept_tolerance",
    "rwm_eps_grid",
    "rwm_eps_table",
    "tune_steps",
    "spectral_instances",
    "spectral_max_n",
    "tensor_instances",
    "tensor_max_n",
    "theorem42_eps",
    "theorem42_n_grid",
    "minorization_n_grid",
    "cheeger_slack",
    "tensor_tolerance",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (sigma, d) = Preset::Fig1.noise_and_spacing();
        Self {
            preset: None,
            k_list: vec![25, 250],
            truth_k: 250,
            abar: DEFAULT_ABAR,
            gamma_override: None,
            n_cells: 4096,
            d,
            source: SourceProfile::Constant(1.0),
            sigma,
            epsilons: vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9],
            algorithms: Algorithm::ALL.to_vec(),
            n_steps: 200_000,
            burn_in: BurnIn::Fraction(0.1),
            master_seed: 2024,
            output_dir: PathBuf::from("out"),
            functionals: vec!["u0".into(), "loglik".into(), "a@0.5".into()],
            max_lag: 200,
            write_chains: false,
            chain_dump_every: 100,
            target_accept: 0.135,
            accept_tolerance: 0.05,
            rwm_eps_grid: geometric_grid(1e-3, 1.0, 61),
            rwm_eps_table: Vec::new(),
            tune_steps: 20_000,
            spectral_instances: 1000,
            spectral_max_n: 12,
            tensor_instances: 100,
            tensor_max_n: 12,
            theorem42_eps: vec![0.1, 0.25, 0.5],
            theorem42_n_grid: 2001,
            minorization_n_grid: 400,
            cheeger_slack: 1e-10,
            tensor_tolerance: 1e-9,
        }
    }
}

/// `count` log-spaced points from `lo` to `hi`, rounded to 4 significant
/// digits so they print cleanly.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| {
            let v = lo * (step * i as f64).exp();
            let scale = 10f64.powi(3 - v.log10().floor() as i32);
            (v * scale).round() / scale
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("`{key}` needs at least one value")));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let mut cfg = ExperimentConfig::default();
        if let Some(p) = entries.get("preset") {
            cfg.apply_preset(Preset::parse(p)?);
        }
        let mut truth_k_set = false;
        for (key, v) in &entries {
            let key = key.as_str();
            match key {
                "preset" => {}
                "K" => cfg.k_list = parse_list(key, v)?,
                "truth_K" => {
                    cfg.truth_k = parse_num(key, v)?;
                    truth_k_set = true;
                }
                "abar" => cfg.abar = parse_num(key, v)?,
                "gamma_override" => cfg.gamma_override = Some(parse_list(key, v)?),
                "n_cells" => cfg.n_cells = parse_num(key, v)?,
                "obs_spacing_d" => cfg.d = parse_num(key, v)?,
                "source_profile" => {
                    let values: Vec<f64> = parse_list(key, v)?;
                    cfg.source = if values.len() == 1 {
                        SourceProfile::Constant(values[0])
                    } else {
                        SourceProfile::Nodes(values)
                    };
                }
                "sigma" => cfg.sigma = parse_num(key, v)?,
                "epsilon" => cfg.epsilons = parse_list(key, v)?,
                "algorithms" => {
                    cfg.algorithms = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| Error::Config(format!("unknown algorithm `{s}`"))))
                        .collect::<Result<_>>()?
                }
                "n_steps" => cfg.n_steps = parse_num(key, v)?,
                "burn_in" => {
                    cfg.burn_in = match v.strip_suffix('%') {
                        Some(pct) => BurnIn::Fraction(parse_num::<f64>(key, pct)? / 100.0),
                        None => BurnIn::Steps(parse_num(key, v)?),
                    }
                }
                "master_seed" => cfg.master_seed = parse_num(key, v)?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "functionals" => {
                    cfg.functionals = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
                }
                "max_lag" => cfg.max_lag = parse_num(key, v)?,
                "write_chains" => cfg.write_chains = parse_bool(key, v)?,
                "chain_dump_every" => cfg.chain_dump_every = parse_num(key, v)?,
                "target_accept" => cfg.target_accept = parse_num(key, v)?,
                "accept_tolerance" => cfg.accept_tolerance = parse_num(key, v)?,
                "rwm_eps_grid" => cfg.rwm_eps_grid = parse_list(key, v)?,
                "rwm_eps_table" => {
                    cfg.rwm_eps_table = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|pair| {
                            let (k, e) = pair
                                .split_once(':')
                                .ok_or_else(|| Error::Config(format!("`rwm_eps_table`: expected K:eps, got `{pair}`")))?;
                            Ok((parse_num(key, k)?, parse_num(key, e)?))
                        })
                        .collect::<Result<_>>()?
                }
                "tune_steps" => cfg.tune_steps = parse_num(key, v)?,
                "spectral_instances" => cfg.spectral_instances = parse_num(key, v)?,
                "spectral_max_n" => cfg.spectral_max_n = parse_num(key, v)?,
                "tensor_instances" => cfg.tensor_instances = parse_num(key, v)?,
                "tensor_max_n" => cfg.tensor_max_n = parse_num(key, v)?,
                "theorem42_eps" => cfg.theorem42_eps = parse_list(key, v)?,
                "theorem42_n_grid" => cfg.theorem42_n_grid = parse_num(key, v)?,
                "minorization_n_grid" => cfg.minorization_n_grid = parse_num(key, v)?,
                "cheeger_slack" => cfg.cheeger_slack = parse_num(key, v)?,
                "tensor_tolerance" => cfg.tensor_tolerance = parse_num(key, v)?,
                _ => unreachable!("keys are checked against KEYS"),
            }
        }
        if !truth_k_set {
            cfg.truth_k = cfg.k_list.iter().copied().max().unwrap_or(cfg.truth_k);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let (sigma, d) = preset.noise_and_spacing();
        self.preset = Some(preset);
        self.sigma = sigma;
        self.d = d;
    }

    pub fn burn_in_steps(&self) -> usize {
        self.burn_in.steps(self.n_steps)
    }

    /// Checks every entry against the module constraints.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k_list.is_empty() {
            return bad("`K` needs at least one value".into());
        }
        for &k in self.k_list.iter().chain(std::iter::once(&self.truth_k)) {
            self.basis(k)?;
        }
        if self.gamma_override.is_some() && (self.k_list.len() != 1 || self.truth_k != self.k_list[0]) {
            return bad("`gamma_override` needs a single `K` equal to `truth_K`".into());
        }
        Mesh::new(self.n_cells).map_err(|e| Error::Config(e.to_string()))?;
        ObservationOperator::new(self.d).map_err(|e| Error::Config(e.to_string()))?;
        match &self.source {
            SourceProfile::Constant(c) if !c.is_finite() => return bad("`source_profile` must be finite".into()),
            SourceProfile::Nodes(v) if v.len() != self.n_cells + 1 => {
                return bad(format!(
                    "`source_profile` has {} values, the mesh has {} nodes",
                    v.len(),
                    self.n_cells + 1
                ))
            }
            SourceProfile::Nodes(v) if v.iter().any(|g| !g.is_finite()) => {
                return bad("`source_profile` must be finite".into())
            }
            _ => {}
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("`sigma` must be positive, got {}", self.sigma));
        }
        for &alg in &self.algorithms {
            for &eps in &self.epsilons {
                alg.with_eps(eps).map_err(|e| Error::Config(format!("`epsilon` = {eps} for {alg}: {e}")))?;
            }
        }
        if self.algorithms.is_empty() {
            return bad("`algorithms` needs at least one value".into());
        }
        let burn = self.burn_in_steps();
        if self.n_steps <= burn {
            return bad(format!("`n_steps` ({}) must exceed the burn-in ({burn})", self.n_steps));
        }
        if let BurnIn::Fraction(f) = self.burn_in {
            if !(0.0..1.0).contains(&f) {
                return bad("`burn_in` percentage must lie in [0, 100)".into());
            }
        }
        for k in &self.k_list {
            let spec = self.basis(*k)?;
            for id in &self.functionals {
                crate::samplers::Functional::parse(id, &spec).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        if self.functionals.is_empty() {
            return bad("`functionals` needs at least one value".into());
        }
        if self.max_lag == 0 || self.n_steps - burn < 4 * self.max_lag {
            return bad(format!("`max_lag` = {} needs at least {} retained steps", self.max_lag, 4 * self.max_lag));
        }
        if self.chain_dump_every == 0 {
            return bad("`chain_dump_every` must be positive".into());
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) || !(self.accept_tolerance > 0.0) {
            return bad("`target_accept` must lie in (0, 1) and `accept_tolerance` be positive".into());
        }
        if self.rwm_eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("`rwm_eps_grid` entries must be positive".into());
        }
        if self.rwm_eps_table.iter().any(|(_, e)| !(*e > 0.0 && e.is_finite())) {
            return bad("`rwm_eps_table` entries must be positive".into());
        }
        if self.tune_steps < 100 {
            return bad("`tune_steps` must be at least 100".into());
        }
        if !(2..=crate::spectral::MAX_CONDUCTANCE_STATES).contains(&self.spectral_max_n) {
            return bad(format!(
                "`spectral_max_n` must lie in [2, {}]",
                crate::spectral::MAX_CONDUCTANCE_STATES
            ));
        }
        if self.tensor_max_n < 2 || self.tensor_max_n * self.tensor_max_n > crate::spectral::MAX_STATES {
            return bad("`tensor_max_n` squared must fit the dense eigen-solver".into());
        }
        if self.theorem42_eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("`theorem42_eps` entries must lie in (0, 1)".into());
        }
        if self.theorem42_n_grid < 64 || self.minorization_n_grid < 64 {
            return bad("spectral grids need at least 64 cells".into());
        }
        if self.theorem42_n_grid > crate::spectral::MAX_STATES || self.minorization_n_grid > crate::spectral::MAX_STATES {
            return bad(format!("spectral grids are limited to {} cells", crate::spectral::MAX_STATES));
        }
        if !(self.cheeger_slack >= 0.0) || !(self.tensor_tolerance >= 0.0) {
            return bad("tolerances must be non-negative".into());
        }
        Ok(())
    }

    /// Basis for dimension parameter `k`, honouring `abar` and
    /// `gamma_override`.
    pub fn basis(&self, k: usize) -> Result<BasisSpec> {
        let spec = match &self.gamma_override {
            Some(g) => BasisSpec::with_gamma(k, self.abar, g.clone()),
            None => BasisSpec::new(k, self.abar),
        };
        spec.map_err(|e| Error::Config(format!("K = {k}: {e}")))
    }

    /// Resolved configuration, one `key = value` per line in key order.
    /// Output directory is excluded so that moving outputs does not change
    /// the hash.
    pub fn canonical(&self) -> String {
        fn list<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("preset", self.preset.map_or("none".into(), |p| p.name().to_string()));
        m.insert("K", list(&self.k_list));
        m.insert("truth_K", self.truth_k.to_string());
        m.insert("abar", self.abar.to_string());
        m.insert("gamma_override", self.gamma_override.as_deref().map_or("none".into(), list));
        m.insert("n_cells", self.n_cells.to_string());
        m.insert("obs_spacing_d", self.d.to_string());
        m.insert(
            "source_profile",
            match &self.source {
                SourceProfile::Constant(c) => c.to_string(),
                SourceProfile::Nodes(v) => list(v),
            },
        );
        m.insert("sigma", self.sigma.to_string());
        m.insert("epsilon", list(&self.epsilons));
        m.insert("algorithms", list(&self.algorithms));
        m.insert("n_steps", self.n_steps.to_string());
        m.insert("burn_in", self.burn_in_steps().to_string());
        m.insert("master_seed", self.master_seed.to_string());
        m.insert("functionals", self.functionals.join(","));
        m.insert("max_lag", self.max_lag.to_string());
        m.insert("write_chains", self.write_chains.to_string());
        m.insert("chain_dump_every", self.chain_dump_every.to_string());
        m.insert("target_accept", self.target_accept.to_string());
        m.insert("accept_tolerance", self.accept_tolerance.to_string());
        m.insert("rwm_eps_grid", list(&self.rwm_eps_grid));
        m.insert(
            "rwm_eps_table",
            self.rwm_eps_table.iter().map(|(k, e)| format!("{k}:{e}")).collect::<Vec<_>>().join(","),
        );
        m.insert("tune_steps", self.tune_steps.to_string());
        m.insert("spectral_instances", self.spectral_instances.to_string());
        m.insert("spectral_max_n", self.spectral_max_n.to_string());
        m.insert("tensor_instances", self.tensor_instances.to_string());
        m.insert("tensor_max_n", self.tensor_max_n.to_string());
        m.insert("theorem42_eps", list(&self.theorem42_eps));
        m.insert("theorem42_n_grid", self.theorem42_n_grid.to_string());
        m.insert("minorization_n_grid", self.minorization_n_grid.to_string());
        m.insert("cheeger_slack", self.cheeger_slack.to_string());
        m.insert("tensor_tolerance", self.tensor_tolerance.to_string());
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
