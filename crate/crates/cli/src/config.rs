//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment, dotted keys group settings:
//!
//! ```text
//! problem.name = cournot-linear
//! cournot.a = 10
//! solver.variants = rbcd, a_rbcd
//! solver.alpha = 0.05
//! seeds = 1..20
//! output_dir = out/cournot
//! ```
//!
//! Lists are comma separated; `seeds` also accepts inclusive ranges `a..b`.
//! LQ matrices are row-major number lists, one key per player for `B`, `Q`
//! and `R` (`lq.b.1`, `lq.q.1`, ...).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use nashpl::lqgame::{self, LQGameSpec, PolicyBox};
use nashpl::problems::{build_cournot, lq_problem, Demand};
use nashpl::{registry_get, ProblemSpec, SolverConfig, Variant, PROBLEM_NAMES};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub variants: Vec<Variant>,
    pub solver: SolverSettings,
    pub seeds: Vec<u64>,
    /// Shared start point; when absent every seed draws its own from the test box.
    pub x0: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    /// Also write an `iter,sum_f` companion file per run.
    pub write_sum_f: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub name: String,
    pub cournot: Option<CournotConfig>,
    pub lq: Option<LqConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CournotConfig {
    pub firms: usize,
    pub a: f64,
    pub b: f64,
    pub costs: Vec<f64>,
}

impl Default for CournotConfig {
    fn default() -> Self {
        Self { firms: 2, a: 10.0, b: 1.0, costs: vec![1.0, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqConfig {
    pub instance: LqInstance,
    /// Samples for the constant estimates.
    pub samples: usize,
    pub estimate_seed: u64,
    pub radius: f64,
    pub max_rho: f64,
}

impl Default for LqConfig {
    fn default() -> Self {
        let pb = PolicyBox::default();
        Self {
            instance: LqInstance::Random { players: 3, state_dim: 2, inputs: 1, seed: 7 },
            samples: 200,
            estimate_seed: 7,
            radius: pb.radius,
            max_rho: pb.max_rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LqInstance {
    Random { players: usize, state_dim: usize, inputs: usize, seed: u64 },
    Explicit(LqMatrices),
}

/// Row-major matrices; `inputs[i]` is the column count of `B_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqMatrices {
    pub inputs: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub sigma0: Vec<f64>,
}

/// The file-level solver fields; variant and seed vary per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c: f64,
    pub t: usize,
    pub t_prime: usize,
    pub tol: f64,
    pub case_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self { alpha: d.alpha, beta: d.beta, gamma: d.gamma, c: d.c, t: d.t, t_prime: d.t_prime, tol: d.tol, case_tol: d.case_tol }
    }
}

impl SolverSettings {
    pub fn solver_config(&self, variant: Variant, seed: u64) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            c: self.c,
            t: self.t,
            t_prime: self.t_prime,
            seed,
            variant,
            tol: self.tol,
            case_tol: self.case_tol,
            record_points: false,
        }
    }
}

impl ExperimentConfig {
    pub fn new(problem: &str) -> Self {
        Self {
            problem: ProblemConfig { name: problem.into(), cournot: None, lq: None },
            variants: vec![Variant::Rbcd],
            solver: SolverSettings::default(),
            seeds: vec![1],
            x0: None,
            output_dir: PathBuf::from("out"),
            write_sum_f: false,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if !PROBLEM_NAMES.contains(&self.problem.name.as_str()) {
            return Err(HarnessError::Unknown(format!("unknown problem `{}`", self.problem.name)));
        }
        if self.problem.cournot.is_some() && !self.problem.name.starts_with("cournot") {
            return Err(HarnessError::Config(format!("cournot.* keys do not apply to `{}`", self.problem.name)));
        }
        if self.problem.lq.is_some() && self.problem.name != "lq" {
            return Err(HarnessError::Config(format!("lq.* keys do not apply to `{}`", self.problem.name)));
        }
        if self.variants.is_empty() {
            return Err(HarnessError::Config("solver.variants is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds is empty".into()));
        }
        // runs write to per-(variant, seed) paths, so repeats would collide
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(HarnessError::Config("seeds repeat".into()));
        }
        if self.variants.iter().collect::<HashSet<_>>().len() != self.variants.len() {
            return Err(HarnessError::Config("solver.variants repeat".into()));
        }
        self.solver.solver_config(Variant::Rbcd, 0).validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        let spec = match (&self.cournot, &self.lq) {
            (Some(c), _) => {
                let demand = if self.name == "cournot-quadratic" { Demand::Quadratic } else { Demand::Linear };
                build_cournot(c.firms, demand, c.a, c.b, &c.costs)
            }
            (_, Some(l)) => {
                let game = match &l.instance {
                    LqInstance::Random { players, state_dim, inputs, seed } => {
                        lqgame::random_instance(*players, *state_dim, *inputs, *seed)?
                    }
                    LqInstance::Explicit(m) => m.to_spec()?,
                };
                lq_problem(game, PolicyBox { radius: l.radius, max_rho: l.max_rho }, l.samples, l.estimate_seed)
            }
            _ => registry_get(&self.name),
        };
        spec.map_err(|e| match e {
            nashpl::Error::UnknownProblem(name) => HarnessError::Unknown(format!("unknown problem `{name}`")),
            nashpl::Error::InvalidParameter(m) => HarnessError::Config(m),
            other => other.into(),
        })
    }
}

impl LqMatrices {
    pub fn to_spec(&self) -> Result<LQGameSpec> {
        let d = (self.a.len() as f64).sqrt().round() as usize;
        if d * d != self.a.len() {
            return Err(HarnessError::Config(format!("lq.a has {} entries, not a square", self.a.len())));
        }
        let n = self.inputs.len();
        if self.b.len() != n || self.q.len() != n || self.r.len() != n {
            return Err(HarnessError::Config(format!("lq.inputs lists {n} players but B, Q, R are incomplete")));
        }
        let mat = |key: String, rows: usize, cols: usize, v: &[f64]| {
            if v.len() != rows * cols {
                return Err(HarnessError::Config(format!("{key} needs {rows}x{cols} = {} entries, got {}", rows * cols, v.len())));
            }
            Ok(DMatrix::from_row_slice(rows, cols, v))
        };
        let mut b = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for i in 0..n {
            let k = self.inputs[i];
            b.push(mat(format!("lq.b.{}", i + 1), d, k, &self.b[i])?);
            q.push(mat(format!("lq.q.{}", i + 1), d, d, &self.q[i])?);
            r.push(mat(format!("lq.r.{}", i + 1), k, k, &self.r[i])?);
        }
        let a = mat("lq.a".into(), d, d, &self.a)?;
        let sigma0 = mat("lq.sigma0".into(), d, d, &self.sigma0)?;
        LQGameSpec::new(a, b, q, r, sigma0).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(HarnessError::Config(format!("line {}: empty key", n + 1)));
            }
            if map.insert(key.to_string(), (n + 1, value.trim().to_string())).is_some() {
                return Err(HarnessError::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(Self { map })
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        self.map.keys().any(|k| k.starts_with(prefix))
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.raw(key).map(|(line, v)| parse_one(key, line, &v)).transpose()
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key).map(|(line, v)| split_list(&v).map(|s| parse_one(key, line, s)).collect()).transpose()
    }

    fn require_list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        self.list(key)?.ok_or_else(|| HarnessError::Config(format!("missing `{key}`")))
    }
}

fn parse_one<T: FromStr>(key: &str, line: usize, v: &str) -> Result<T> {
    v.parse().map_err(|_| HarnessError::Config(format!("line {line}: cannot parse `{v}` for `{key}`")))
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_seeds(line: usize, v: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in split_list(v) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (parse_one("seeds", line, a.trim())?, parse_one("seeds", line, b.trim())?);
                if a > b {
                    return Err(HarnessError::Config(format!("line {line}: empty seed range {item}")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_one("seeds", line, item)?),
        }
    }
    Ok(out)
}

fn parse_lq(e: &mut Entries) -> Result<LqConfig> {
    let d = LqConfig::default();
    let instance = if e.map.contains_key("lq.a") {
        for key in ["lq.players", "lq.state_dim", "lq.instance_seed"] {
            if e.map.contains_key(key) {
                return Err(HarnessError::Config(format!("`{key}` only applies to generated instances, but lq.a is set")));
            }
        }
        let inputs: Vec<usize> = e.require_list("lq.inputs")?;
        let n = inputs.len();
        let per_player = |e: &mut Entries, m: &str| -> Result<Vec<Vec<f64>>> {
            (1..=n).map(|i| e.require_list(&format!("lq.{m}.{i}"))).collect()
        };
        LqInstance::Explicit(LqMatrices {
            a: e.require_list("lq.a")?,
            b: per_player(e, "b")?,
            q: per_player(e, "q")?,
            r: per_player(e, "r")?,
            sigma0: e.require_list("lq.sigma0")?,
            inputs,
        })
    } else {
        let LqInstance::Random { players, state_dim, inputs, seed } = d.instance else { unreachable!() };
        LqInstance::Random {
            players: e.get("lq.players")?.unwrap_or(players),
            state_dim: e.get("lq.state_dim")?.unwrap_or(state_dim),
            inputs: e.get("lq.inputs")?.unwrap_or(inputs),
            seed: e.get("lq.instance_seed")?.unwrap_or(seed),
        }
    };
    Ok(LqConfig {
        instance,
        samples: e.get("lq.samples")?.unwrap_or(d.samples),
        estimate_seed: e.get("lq.estimate_seed")?.unwrap_or(d.estimate_seed),
        radius: e.get("lq.radius")?.unwrap_or(d.radius),
        max_rho: e.get("lq.max_rho")?.unwrap_or(d.max_rho),
    })
}

impl FromStr for ExperimentConfig {
    type Err = HarnessError;

    fn from_str(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let name: String = e.get("problem.name")?.ok_or_else(|| HarnessError::Config("missing `problem.name`".into()))?;
        let mut cfg = ExperimentConfig::new(&name);
        if e.has_prefix("cournot.") {
            let d = CournotConfig::default();
            cfg.problem.cournot = Some(CournotConfig {
                firms: e.get("cournot.firms")?.unwrap_or(d.firms),
                a: e.get("cournot.a")?.unwrap_or(d.a),
                b: e.get("cournot.b")?.unwrap_or(d.b),
                costs: e.list("cournot.costs")?.unwrap_or(d.costs),
            });
        }
        if e.has_prefix("lq.") {
            cfg.problem.lq = Some(parse_lq(&mut e)?);
        }
        if let Some((line, v)) = e.raw("solver.variants") {
            cfg.variants = split_list(&v)
                .map(|s| s.parse().map_err(|_| HarnessError::Unknown(format!("line {line}: unknown solver variant `{s}`"))))
                .collect::<Result<_>>()?;
        }
        let s = &mut cfg.solver;
        s.alpha = e.get("solver.alpha")?.unwrap_or(s.alpha);
        s.beta = e.get("solver.beta")?.unwrap_or(s.beta);
        s.gamma = e.get("solver.gamma")?.unwrap_or(s.gamma);
        s.c = e.get("solver.c")?.unwrap_or(s.c);
        s.t = e.get("solver.t")?.unwrap_or(s.t);
        s.t_prime = e.get("solver.t_prime")?.unwrap_or(s.t_prime);
        s.tol = e.get("solver.tol")?.unwrap_or(s.tol);
        s.case_tol = e.get("solver.case_tol")?.unwrap_or(s.case_tol);
        if let Some((line, v)) = e.raw("seeds") {
            cfg.seeds = parse_seeds(line, &v)?;
        }
        cfg.x0 = e.list("start.x0")?;
        if let Some((_, v)) = e.raw("output_dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        cfg.write_sum_f = e.get("output.sum_f")?.unwrap_or(false);
        if let Some((key, (line, _))) = e.map.iter().next() {
            return Err(HarnessError::Config(format!("line {line}: unknown key `{key}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn join<T: fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

/// Serializes every field, so parsing the output reproduces the config.
/// Floats use the shortest representation that reads back exactly.
impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "problem.name = {}", self.problem.name)?;
        if let Some(c) = &self.problem.cournot {
            writeln!(f, "cournot.firms = {}", c.firms)?;
            writeln!(f, "cournot.a = {:?}", c.a)?;
            writeln!(f, "cournot.b = {:?}", c.b)?;
            writeln!(f, "cournot.costs = {}", join(&c.costs))?;
        }
        if let Some(l) = &self.problem.lq {
            match &l.instance {
                LqInstance::Random { players, state_dim, inputs, seed } => {
                    writeln!(f, "lq.players = {players}")?;
                    writeln!(f, "lq.state_dim = {state_dim}")?;
                    writeln!(f, "lq.inputs = {inputs}")?;
                    writeln!(f, "lq.instance_seed = {seed}")?;
                }
                LqInstance::Explicit(m) => {
                    writeln!(f, "lq.inputs = {}", join(&m.inputs))?;
                    writeln!(f, "lq.a = {}", join(&m.a))?;
                    for (name, mats) in [("b", &m.b), ("q", &m.q), ("r", &m.r)] {
                        for (i, v) in mats.iter().enumerate() {
                            writeln!(f, "lq.{name}.{} = {}", i + 1, join(v))?;
                        }
                    }
                    writeln!(f, "lq.sigma0 = {}", join(&m.sigma0))?;
                }
            }
            writeln!(f, "lq.samples = {}", l.samples)?;
            writeln!(f, "lq.estimate_seed = {}", l.estimate_seed)?;
            writeln!(f, "lq.radius = {:?}", l.radius)?;
            writeln!(f, "lq.max_rho = {:?}", l.max_rho)?;
        }
        let names: Vec<&str> = self.variants.iter().map(|v| v.name()).collect();
        writeln!(f, "solver.variants = {}", names.join(", "))?;
        let s = &self.solver;
        writeln!(f, "solver.alpha = {:?}", s.alpha)?;
        writeln!(f, "solver.beta = {:?}", s.beta)?;
        writeln!(f, "solver.gamma = {:?}", s.gamma)?;
        writeln!(f, "solver.c = {:?}", s.c)?;
        writeln!(f, "solver.t = {}", s.t)?;
        writeln!(f, "solver.t_prime = {}", s.t_prime)?;
        writeln!(f, "solver.tol = {:?}", s.tol)?;
        writeln!(f, "solver.case_tol = {:?}", s.case_tol)?;
        writeln!(f, "seeds = {}", join(&self.seeds))?;
        if let Some(x0) = &self.x0 {
            writeln!(f, "start.x0 = {}", join(x0))?;
        }
        writeln!(f, "output_dir = {}", self.output_dir.display())?;
        writeln!(f, "output.sum_f = {}", self.write_sum_f)
    }
}
