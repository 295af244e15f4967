//! Experiment configuration files.
//!
//! The grammar is line based: `[section]` headers, `key = value` pairs, `#`
//! comments, and comma-separated lists. Every error names its dotted key
//! path. [`ExperimentConfig::serialize`] writes every key explicitly, so
//! `parse_config(&cfg.serialize())` reproduces `cfg`.
//!
//! ```text
//! [experiment]
//! rounds = 100
//! seeds = 0, 1, 2
//! mode = zero_init
//!
//! [problem]
//! kind = quadratic
//! noise = gaussian:0.1, student_t:1.5
//!
//! [server]
//! kind = adagrad
//! eta = 0.1
//!
//! [client]
//! kind = sm3_ii
//! cover = row_col
//! shape = 4x5
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::bounds::BoundInputs;
use crate::cover::{Cover, CoverPolicy, ShapeManifest};
use crate::engine::{
    strategy_prefix, Assignment, ClientSchedule, EngineConfig, OptimizerStrategy, PrivacyConfig,
};
use crate::error::ConfigError;
use crate::ledger::TransmissionMode;
use crate::local::{LocalOptConfig, LocalOptKind, StrategyBounds};
use crate::numeric::{NoiseSpec, ParamVector};
use crate::problems::{
    load_csv_dataset, Dataset, LogisticProblem, Problem, QuadraticProblem, SyntheticLogistic,
};
use crate::server::{ServerConfig, ServerKind};

/// Every problem found while reading a configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl From<ConfigError> for ConfigErrors {
    fn from(e: ConfigError) -> Self {
        ConfigErrors(vec![e])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Quadratic {
        noises: Vec<NoiseSpec>,
        d: usize,
        steps_per_epoch: usize,
    },
    /// Synthetic classification; `data_seed = None` regenerates the data from each run seed.
    Logistic {
        recipe: SyntheticLogistic,
        data_seed: Option<u64>,
    },
    /// One CSV file per client plus an optional test file.
    Csv {
        clients: Vec<PathBuf>,
        test: Option<PathBuf>,
        classes: usize,
        lambda: f64,
        batch: usize,
    },
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Quadratic {
            noises: vec![NoiseSpec::Gaussian { sigma: 0.0 }],
            d: 1,
            steps_per_epoch: 1,
        }
    }
}

impl ProblemSpec {
    pub fn build(&self, seed: u64) -> Result<Box<dyn Problem>, ConfigError> {
        match self {
            ProblemSpec::Quadratic {
                noises,
                d,
                steps_per_epoch,
            } => {
                let p = QuadraticProblem {
                    noises: noises.clone(),
                    d: *d,
                    steps_per_epoch: *steps_per_epoch,
                };
                p.validate()?;
                Ok(Box::new(p))
            }
            ProblemSpec::Logistic { recipe, data_seed } => {
                let r = SyntheticLogistic {
                    seed: data_seed.unwrap_or(seed),
                    ..recipe.clone()
                };
                Ok(Box::new(r.build()?))
            }
            ProblemSpec::Csv {
                clients,
                test,
                classes,
                lambda,
                batch,
            } => {
                let load = |key: String, p: &PathBuf| {
                    load_csv_dataset(p, Some(*classes))
                        .map_err(|e| ConfigError::invalid(key, e.to_string()))
                };
                let data: Vec<Dataset> = clients
                    .iter()
                    .enumerate()
                    .map(|(i, p)| load(format!("problem.data[{i}]"), p))
                    .collect::<Result<_, _>>()?;
                let test = match test {
                    Some(p) => load("problem.test".into(), p)?,
                    None => Dataset::new(data.first().map_or(0, |d| d.p), vec![], vec![]),
                };
                Ok(Box::new(LogisticProblem::new(
                    *classes, data, test, *lambda, *batch,
                )?))
            }
        }
    }
}

/// One client strategy as written in the file; the cover is built once the model size is known.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientSpec {
    /// Optimizer settings; `cover` is left empty here.
    pub opt: LocalOptConfig,
    pub epochs: usize,
    pub weight: f64,
    pub cover: CoverPolicy,
    /// Tensor shapes for the cover; `None` means one flat vector.
    pub shape: Option<Vec<Vec<usize>>>,
}

impl Default for ClientSpec {
    fn default() -> Self {
        Self {
            opt: LocalOptConfig::default(),
            epochs: 1,
            weight: 1.0,
            cover: CoverPolicy::Auto,
            shape: None,
        }
    }
}

impl ClientSpec {
    pub fn strategy(&self, d: usize, prefix: &str) -> Result<OptimizerStrategy, ConfigError> {
        let mut opt = self.opt.clone();
        if opt.kind.uses_cover() {
            let manifest = match &self.shape {
                Some(s) => ShapeManifest::new(s.clone()),
                None => ShapeManifest::flat(d),
            };
            manifest
                .validate()
                .map_err(|m| ConfigError::invalid(format!("{prefix}.shape"), m))?;
            if manifest.num_params() != d {
                return Err(ConfigError::invalid(
                    format!("{prefix}.shape"),
                    format!(
                        "shapes hold {} parameters but the model has {d}",
                        manifest.num_params()
                    ),
                ));
            }
            let cover = Cover::for_manifest(&manifest, self.cover)
                .map_err(|e| ConfigError::invalid(format!("{prefix}.cover"), e.to_string()))?;
            opt.cover = Some(Arc::new(cover));
        }
        Ok(OptimizerStrategy {
            local_cfg: opt,
            epochs: self.epochs,
            weight: self.weight,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AssignmentSpec {
    Static(Vec<usize>),
    RoundRobin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub rounds: u64,
    pub fraction: f64,
    pub seeds: Vec<u64>,
    pub x0: f64,
    pub mode: TransmissionMode,
    pub warmup: usize,
    pub grad_clamp: Option<f64>,
    pub bound_check: bool,
    pub output: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub server: ServerConfig,
    pub clients: Vec<ClientSpec>,
    pub assignment: AssignmentSpec,
    pub privacy: Option<PrivacyConfig>,
    pub schedule: ClientSchedule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            fraction: 1.0,
            seeds: vec![0],
            x0: 0.0,
            mode: TransmissionMode::ZeroInit,
            warmup: 0,
            grad_clamp: None,
            bound_check: false,
            output: None,
            problem: ProblemSpec::default(),
            server: ServerConfig::default(),
            clients: vec![ClientSpec::default()],
            assignment: AssignmentSpec::Static(Vec::new()),
            privacy: None,
            schedule: ClientSchedule::Constant,
        }
    }
}

impl ExperimentConfig {
    /// Engine configuration for one seed on a model of size `d`.
    pub fn engine_config(&self, seed: u64, d: usize) -> Result<EngineConfig, ConfigError> {
        let strategies = self
            .clients
            .iter()
            .enumerate()
            .map(|(i, c)| c.strategy(d, &strategy_prefix(i)))
            .collect::<Result<_, _>>()?;
        let cfg = EngineConfig {
            rounds: self.rounds,
            fraction: self.fraction,
            seed,
            x0: self.x0,
            server: self.server.clone(),
            strategies,
            assignment: match &self.assignment {
                AssignmentSpec::Static(m) => Assignment::Static(m.clone()),
                AssignmentSpec::RoundRobin => Assignment::RoundRobin,
            },
            mode: self.mode,
            privacy: self.privacy,
            warmup: self.warmup,
            schedule: self.schedule,
            grad_clamp: self.grad_clamp,
            bound_check: self.bound_check,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Scalars for the convergence bound, when the run fits its assumptions:
    /// a gradient clamp, an adagrad server, one strategy and a problem with
    /// known smoothness and optimum.
    pub fn bound_inputs(&self, problem: &dyn Problem) -> Option<BoundInputs> {
        let g = self.grad_clamp?;
        let l = problem.smoothness()?;
        let f_star = problem.optimum_value()?;
        if self.server.kind != ServerKind::Adagrad
            || self.clients.len() != 1
            || self.mode.forces_sgd()
        {
            return None;
        }
        let c = &self.clients[0];
        let d = problem.dim();
        let x0 = ParamVector::filled(d, self.x0);
        Some(BoundInputs {
            eta: self.server.lr,
            eta_l: c.opt.lr,
            tau: self.server.tau,
            eps: c.opt.eps,
            eps_s: c.opt.eps_s,
            beta1: self.server.beta1,
            k: c.epochs * problem.steps_per_epoch(0),
            z: c.opt.delay,
            d,
            g,
            v0: c.opt.v0,
            v0_server: self.server.initial_v(),
            t: self.rounds as usize,
            l,
            f_gap: problem.global_loss(&x0) - f_star,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        if self.seeds.is_empty() {
            errs.push(ConfigError::invalid(
                "experiment.seeds",
                "need at least one seed",
            ));
        }
        if let ProblemSpec::Quadratic {
            noises,
            d,
            steps_per_epoch,
        } = &self.problem
        {
            let q = QuadraticProblem {
                noises: noises.clone(),
                d: *d,
                steps_per_epoch: *steps_per_epoch,
            };
            if let Err(e) = q.validate() {
                errs.push(e);
            }
        }
        if let ProblemSpec::Logistic { recipe, .. } = &self.problem {
            if recipe.clients == 0 {
                errs.push(ConfigError::invalid(
                    "problem.clients",
                    "need at least one client",
                ));
            }
            if !(recipe.alpha > 0.0 && recipe.alpha.is_finite()) {
                errs.push(ConfigError::invalid(
                    "problem.alpha",
                    "Dirichlet concentration must be > 0",
                ));
            }
            if recipe.classes < 2 {
                errs.push(ConfigError::invalid(
                    "problem.classes",
                    "need at least two classes",
                ));
            }
            if recipe.batch == 0 {
                errs.push(ConfigError::invalid(
                    "problem.batch",
                    "batch size must be >= 1",
                ));
            }
        }
        // Engine-level checks that do not depend on the model size.
        let probe = EngineConfig {
            rounds: self.rounds,
            fraction: self.fraction,
            seed: 0,
            x0: self.x0,
            server: self.server.clone(),
            strategies: self
                .clients
                .iter()
                .map(|c| {
                    let mut opt = c.opt.clone();
                    if opt.kind.uses_cover() {
                        opt.cover = Some(Arc::new(Cover::singleton(1)));
                    }
                    OptimizerStrategy {
                        local_cfg: opt,
                        epochs: c.epochs,
                        weight: c.weight,
                    }
                })
                .collect(),
            assignment: match &self.assignment {
                AssignmentSpec::Static(m) => Assignment::Static(m.clone()),
                AssignmentSpec::RoundRobin => Assignment::RoundRobin,
            },
            mode: self.mode,
            privacy: self.privacy,
            warmup: self.warmup,
            schedule: self.schedule,
            grad_clamp: self.grad_clamp,
            bound_check: self.bound_check,
        };
        if let Err(e) = probe.validate() {
            errs.push(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("[experiment]\nrounds", self.rounds.to_string());
        line("fraction", self.fraction.to_string());
        line("seeds", join(&self.seeds));
        line("x0", self.x0.to_string());
        line("mode", self.mode.to_string());
        line("warmup", self.warmup.to_string());
        if let Some(g) = self.grad_clamp {
            line("g", g.to_string());
        }
        line("bound_check", self.bound_check.to_string());
        if let Some(p) = &self.output {
            line("output", p.display().to_string());
        }

        match &self.problem {
            ProblemSpec::Quadratic {
                noises,
                d,
                steps_per_epoch,
            } => {
                line("\n[problem]\nkind", "quadratic".into());
                line("noise", join(noises));
                line("d", d.to_string());
                line("steps_per_epoch", steps_per_epoch.to_string());
            }
            ProblemSpec::Logistic { recipe, data_seed } => {
                line("\n[problem]\nkind", "logistic".into());
                line("clients", recipe.clients.to_string());
                line("classes", recipe.classes.to_string());
                line("features", recipe.features.to_string());
                line("train", recipe.train.to_string());
                line("test", recipe.test.to_string());
                line("alpha", recipe.alpha.to_string());
                line("lambda", recipe.lambda.to_string());
                line("batch", recipe.batch.to_string());
                line("margin", recipe.margin.to_string());
                if let Some(s) = data_seed {
                    line("data_seed", s.to_string());
                }
            }
            ProblemSpec::Csv {
                clients,
                test,
                classes,
                lambda,
                batch,
            } => {
                line("\n[problem]\nkind", "csv".into());
                line("data", join(clients.iter().map(|p| p.display())));
                if let Some(t) = test {
                    line("test", t.display().to_string());
                }
                line("classes", classes.to_string());
                line("lambda", lambda.to_string());
                line("batch", batch.to_string());
            }
        }

        let s = &self.server;
        line("\n[server]\nkind", s.kind.to_string());
        line("eta", s.lr.to_string());
        line("tau", s.tau.to_string());
        line("beta1", s.beta1.to_string());
        line("beta2", s.beta2.to_string());
        if let Some(v) = s.v0 {
            line("v0", v.to_string());
        }

        for (i, c) in self.clients.iter().enumerate() {
            let o = &c.opt;
            line(
                &format!("\n[{}]\nkind", strategy_prefix(i)),
                o.kind.to_string(),
            );
            line("eta", o.lr.to_string());
            line("eps", o.eps.to_string());
            line("eps_s", o.eps_s.to_string());
            line("z", o.delay.to_string());
            line("beta1", o.beta1.to_string());
            line("beta2", o.beta2.to_string());
            line("v0", o.v0.to_string());
            line("epochs", c.epochs.to_string());
            line("weight", c.weight.to_string());
            line("cover", c.cover.name().into());
            if let Some(shape) = &c.shape {
                line("shape", join(shape.iter().map(|t| join_with(t, "x"))));
            }
            if let Some(b) = o.strategy_bounds {
                line("bounds", join([b.m_l, b.big_m, b.a_l, b.big_a]));
            }
        }

        match &self.assignment {
            AssignmentSpec::Static(map) => {
                line("\n[assignment]\nmode", "static".into());
                if !map.is_empty() {
                    line("map", join(map));
                }
            }
            AssignmentSpec::RoundRobin => line("\n[assignment]\nmode", "round_robin".into()),
        }

        if let Some(p) = &self.privacy {
            line("\n[privacy]\nclip", p.clip.to_string());
            line("sigma", p.noise_multiplier.to_string());
        }

        match self.schedule {
            ClientSchedule::Constant => line("\n[schedule]\nkind", "constant".into()),
            ClientSchedule::Harmonic { t0, eps_hat } => {
                line("\n[schedule]\nkind", "harmonic".into());
                line("t0", t0.to_string());
                line("eps_hat", eps_hat.to_string());
            }
        }
        out
    }
}

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    join_with(items, ", ")
}

fn join_with<T: fmt::Display>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

/// `gaussian:SIGMA`, `student_t:NU` or `cauchy:LOCATION:SCALE`.
pub fn parse_noise(s: &str) -> Option<NoiseSpec> {
    let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
    let num = |i: usize| parts.get(i).and_then(|v| v.parse::<f64>().ok());
    match (parts.first().copied(), parts.len()) {
        (Some("gaussian"), 2) => Some(NoiseSpec::Gaussian { sigma: num(1)? }),
        (Some("student_t"), 2) => Some(NoiseSpec::StudentT { nu: num(1)? }),
        (Some("cauchy"), 3) => Some(NoiseSpec::Cauchy {
            location: num(1)?,
            scale: num(2)?,
        }),
        _ => None,
    }
}

/// Sections of `key = value` pairs, before any typing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let mut raw = RawConfig::default();
        let mut errs = Vec::new();
        let mut current: Option<String> = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                if raw.sections.contains_key(&name) {
                    errs.push(ConfigError::invalid(
                        name.clone(),
                        format!("line {}: duplicate section", n + 1),
                    ));
                }
                raw.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errs.push(ConfigError::invalid(
                    current.clone().unwrap_or_default(),
                    format!("line {}: expected `key = value`", n + 1),
                ));
                continue;
            };
            let Some(sec) = &current else {
                errs.push(ConfigError::invalid(
                    k.trim(),
                    format!("line {}: key outside any section", n + 1),
                ));
                continue;
            };
            let k = k.trim().to_string();
            let map = raw.sections.get_mut(sec).expect("section inserted");
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                errs.push(ConfigError::invalid(
                    format!("{sec}.{k}"),
                    format!("line {}: duplicate key", n + 1),
                ));
            }
        }
        if errs.is_empty() {
            Ok(raw)
        } else {
            Err(ConfigErrors(errs))
        }
    }

    /// Set `section.key` (split at the last dot).
    pub fn set(&mut self, path: &str, value: &str) -> Result<(), ConfigError> {
        let (sec, key) = path
            .rsplit_once('.')
            .ok_or_else(|| ConfigError::invalid(path, "expected `section.key`"))?;
        self.sections
            .entry(sec.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (sec, kv) in &self.sections {
            let _ = writeln!(out, "[{sec}]");
            for (k, v) in kv {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Typed reader over one section; every key read is consumed so leftovers can be reported.
struct Section<'e> {
    name: String,
    kv: BTreeMap<String, String>,
    errs: &'e mut Vec<ConfigError>,
}

impl<'e> Section<'e> {
    fn new(
        name: &str,
        kv: Option<BTreeMap<String, String>>,
        errs: &'e mut Vec<ConfigError>,
    ) -> Self {
        Self {
            name: name.to_string(),
            kv: kv.unwrap_or_default(),
            errs,
        }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn fail(&mut self, key: &str, msg: String) {
        let p = self.path(key);
        self.errs.push(ConfigError::invalid(p, msg));
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.kv.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let v = self.raw(key)?;
        match v.parse() {
            Ok(t) => Some(t),
            Err(_) => {
                self.fail(key, format!("expected {what}, got {v:?}"));
                None
            }
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        self.get(key, "a number").unwrap_or(default)
    }

    fn usize_or(&mut self, key: &str, default: usize) -> usize {
        self.get(key, "a non-negative integer").unwrap_or(default)
    }

    fn list<T>(
        &mut self,
        key: &str,
        what: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Option<Vec<T>> {
        let v = self.raw(key)?;
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match parse(item) {
                Some(t) => out.push(t),
                None => {
                    self.fail(key, format!("expected a list of {what}, bad item {item:?}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn finish(self) {
        for k in self.kv.keys() {
            self.errs.push(ConfigError::invalid(
                format!("{}.{k}", self.name),
                "unknown key",
            ));
        }
    }
}

fn parse_client(sec: &mut Section<'_>) -> ClientSpec {
    let d = ClientSpec::default();
    let mut opt = LocalOptConfig::default();
    if let Some(k) = sec.raw("kind") {
        match LocalOptKind::parse(&k) {
            Some(kind) => opt.kind = kind,
            None => sec.fail("kind", format!("unknown optimizer {k:?}; expected one of sgd, agdu, admu, sm3_i, sm3_ii, sm3_adam")),
        }
    }
    opt.lr = sec.f64_or("eta", opt.lr);
    opt.eps = sec.f64_or("eps", opt.eps);
    opt.eps_s = sec.f64_or("eps_s", opt.eps_s);
    opt.delay = sec.usize_or("z", opt.delay);
    opt.beta1 = sec.f64_or("beta1", opt.beta1);
    opt.beta2 = sec.f64_or("beta2", opt.beta2);
    opt.v0 = sec.f64_or("v0", opt.v0);
    if let Some(b) = sec.list("bounds", "numbers", |s| s.parse::<f64>().ok()) {
        if let [m_l, big_m, a_l, big_a] = b[..] {
            opt.strategy_bounds = Some(StrategyBounds {
                m_l,
                big_m,
                a_l,
                big_a,
            });
        } else {
            sec.fail("bounds", "expected four numbers: m_l, M_l, a_l, A_l".into());
        }
    }
    let cover = match sec.raw("cover") {
        Some(c) => CoverPolicy::parse(&c).unwrap_or_else(|| {
            sec.fail(
                "cover",
                format!("unknown cover policy {c:?}; expected singleton, row_col or auto"),
            );
            d.cover
        }),
        None => d.cover,
    };
    let shape = sec.list("shape", "tensor shapes like 4x5", |t| {
        t.split('x')
            .map(|n| n.trim().parse::<usize>().ok())
            .collect::<Option<Vec<_>>>()
    });
    ClientSpec {
        opt,
        epochs: sec.usize_or("epochs", d.epochs),
        weight: sec.f64_or("weight", d.weight),
        cover,
        shape,
    }
}

fn parse_problem(sec: &mut Section<'_>) -> ProblemSpec {
    let kind = sec.raw("kind").unwrap_or_else(|| "quadratic".into());
    match kind.as_str() {
        "quadratic" => {
            let clients: Option<usize> = sec.get("clients", "a positive integer");
            let mut noises = sec
                .list("noise", "noise laws", parse_noise)
                .unwrap_or_else(|| vec![NoiseSpec::Gaussian { sigma: 0.0 }]);
            if let Some(n) = clients {
                if noises.len() == 1 {
                    noises = vec![noises[0]; n];
                } else if noises.len() != n {
                    sec.fail(
                        "noise",
                        format!("{} noise laws for {n} clients", noises.len()),
                    );
                }
            }
            ProblemSpec::Quadratic {
                noises,
                d: sec.usize_or("d", 1),
                steps_per_epoch: sec.usize_or("steps_per_epoch", 1),
            }
        }
        "logistic" => {
            let r = SyntheticLogistic::default();
            let recipe = SyntheticLogistic {
                clients: sec.usize_or("clients", r.clients),
                classes: sec.usize_or("classes", r.classes),
                features: sec.usize_or("features", r.features),
                train: sec.usize_or("train", r.train),
                test: sec.usize_or("test", r.test),
                alpha: sec.f64_or("alpha", r.alpha),
                lambda: sec.f64_or("lambda", r.lambda),
                batch: sec.usize_or("batch", r.batch),
                margin: sec.f64_or("margin", r.margin),
                seed: 0,
            };
            ProblemSpec::Logistic {
                recipe,
                data_seed: sec.get("data_seed", "a non-negative integer"),
            }
        }
        "csv" => {
            let clients = sec
                .list("data", "paths", |s| Some(PathBuf::from(s)))
                .unwrap_or_default();
            if clients.is_empty() {
                sec.fail("data", "need one CSV file per client".into());
            }
            ProblemSpec::Csv {
                clients,
                test: sec.raw("test").map(PathBuf::from),
                classes: sec.usize_or("classes", 2),
                lambda: sec.f64_or("lambda", 0.0),
                batch: sec.usize_or("batch", 32),
            }
        }
        other => {
            sec.fail(
                "kind",
                format!("unknown problem {other:?}; expected quadratic, logistic or csv"),
            );
            ProblemSpec::default()
        }
    }
}

/// Parse and validate a configuration file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let raw = RawConfig::parse(text)?;
    from_raw(raw)
}

pub fn from_raw(mut raw: RawConfig) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errs = Vec::new();
    let mut cfg = ExperimentConfig::default();

    {
        let mut s = Section::new("experiment", raw.sections.remove("experiment"), &mut errs);
        cfg.rounds = s
            .get("rounds", "a non-negative integer")
            .unwrap_or(cfg.rounds);
        cfg.fraction = s.f64_or("fraction", cfg.fraction);
        let seed: Option<u64> = s.get("seed", "a non-negative integer");
        if let Some(seeds) = s.list("seeds", "integers", |v| v.parse::<u64>().ok()) {
            cfg.seeds = seeds;
        } else if let Some(seed) = seed {
            cfg.seeds = vec![seed];
        }
        cfg.x0 = s.f64_or("x0", cfg.x0);
        if let Some(m) = s.raw("mode") {
            match TransmissionMode::parse(&m) {
                Some(mode) => cfg.mode = mode,
                None => s.fail(
                    "mode",
                    format!("unknown mode {m:?}; expected zero_init, transmit_preconditioner, server_only or none"),
                ),
            }
        }
        cfg.warmup = s.usize_or("warmup", cfg.warmup);
        cfg.grad_clamp = s.get("g", "a number");
        cfg.bound_check = s.get("bound_check", "true or false").unwrap_or(false);
        cfg.output = s.raw("output").map(PathBuf::from);
        s.finish();
    }
    {
        let mut s = Section::new("problem", raw.sections.remove("problem"), &mut errs);
        cfg.problem = parse_problem(&mut s);
        s.finish();
    }
    {
        let mut s = Section::new("server", raw.sections.remove("server"), &mut errs);
        let mut sv = ServerConfig::default();
        if let Some(k) = s.raw("kind") {
            match ServerKind::parse(&k) {
                Some(kind) => sv.kind = kind,
                None => s.fail(
                    "kind",
                    format!("unknown server {k:?}; expected avg, adagrad or adam"),
                ),
            }
        }
        sv.lr = s.f64_or("eta", sv.lr);
        sv.tau = s.f64_or("tau", sv.tau);
        sv.beta1 = s.f64_or("beta1", sv.beta1);
        sv.beta2 = s.f64_or("beta2", sv.beta2);
        sv.v0 = s.get("v0", "a number");
        cfg.server = sv;
        s.finish();
    }
    {
        let mut clients = Vec::new();
        let mut s = Section::new("client", raw.sections.remove("client"), &mut errs);
        clients.push(parse_client(&mut s));
        s.finish();
        let mut i = 1;
        while let Some(kv) = raw.sections.remove(&format!("client.{i}")) {
            let mut s = Section::new(&format!("client.{i}"), Some(kv), &mut errs);
            clients.push(parse_client(&mut s));
            s.finish();
            i += 1;
        }
        cfg.clients = clients;
    }
    {
        let mut s = Section::new("assignment", raw.sections.remove("assignment"), &mut errs);
        let mode = s.raw("mode").unwrap_or_else(|| "static".into());
        let map = s.list("map", "strategy indices", |v| v.parse::<usize>().ok());
        cfg.assignment = match mode.as_str() {
            "static" => AssignmentSpec::Static(map.unwrap_or_default()),
            "round_robin" => AssignmentSpec::RoundRobin,
            other => {
                s.fail(
                    "mode",
                    format!("unknown assignment {other:?}; expected static or round_robin"),
                );
                AssignmentSpec::Static(Vec::new())
            }
        };
        s.finish();
    }
    if let Some(kv) = raw.sections.remove("privacy") {
        let mut s = Section::new("privacy", Some(kv), &mut errs);
        cfg.privacy = Some(PrivacyConfig {
            clip: s.f64_or("clip", 1.0),
            noise_multiplier: s.f64_or("sigma", 1.0),
        });
        s.finish();
    }
    {
        let mut s = Section::new("schedule", raw.sections.remove("schedule"), &mut errs);
        let kind = s.raw("kind").unwrap_or_else(|| "constant".into());
        cfg.schedule = match kind.as_str() {
            "constant" => ClientSchedule::Constant,
            "harmonic" => {
                let eps_hat = s.f64_or("eps_hat", 0.05);
                ClientSchedule::Harmonic {
                    t0: s.f64_or("t0", 1.0),
                    eps_hat,
                }
            }
            other => {
                s.fail(
                    "kind",
                    format!("unknown schedule {other:?}; expected constant or harmonic"),
                );
                ClientSchedule::Constant
            }
        };
        s.finish();
    }
    for name in raw.sections.keys() {
        errs.push(ConfigError::invalid(name.clone(), "unknown section"));
    }
    // Fields that failed to parse keep their defaults, so validation adds no spurious errors.
    if let Err(ConfigErrors(more)) = cfg.validate() {
        errs.extend(more);
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errs))
    }
}
