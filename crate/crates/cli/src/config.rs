//! Experiment configuration.
//!
//! Configs are TOML files with a mandatory top-level `schema_version = 1`
//! and four sections:
//!
//! ```toml
//! schema_version = 1
//!
//! [experiment]
//! name = "tro-topology"
//! seed = 7
//! runs = 20              # default 100
//! iterations = 150       # default 100
//! mode = "batch"         # or "adaptive"; default "batch"
//! samples = 10000        # N, default 10000
//! output_dir = "results/tro-topology"
//! threads = 0            # 0 = one worker per core
//! scheme = "ti"          # "ti" or "fc" (fc needs a complete graph)
//!
//! [network]
//! topology = ["fully_connected", "erdos_renyi(0.8)", "path", "random_tree"]
//! nodes = 15             # or a list to sweep K
//! total_channels = 60    # M; M_k = M/K. Alternatively channels_per_node
//!                        # or an explicit `channels = [..]` list.
//!
//! [problem]
//! kind = "tro"           # mmse | qcqp | tro | scqp
//! q = 3                  # required; a list sweeps Q
//! source_variance = 0.5  # defaults depend on the kind
//! noise_variance = 0.1
//!
//! [tracking]             # MMSE in adaptive mode only
//! drift_variance = 0.01
//! schedule = [[0, 0.0], [30, 0.0], [90, 0.5], [120, 0.5], [120, 1.0]]
//! ```
//!
//! Schedule knots are `(iteration, λ)` pairs; a repeated iteration is a jump.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: i64 = 1;
pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_ITERATIONS: usize = 100;
pub const DEFAULT_DRIFT_VARIANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    fn from_vec(mut v: Vec<T>) -> Self {
        if v.len() == 1 {
            OneOrMany::One(v.remove(0))
        } else {
            OneOrMany::Many(v)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<i64>,
    #[serde(default)]
    pub experiment: RawExperiment,
    #[serde(default)]
    pub network: RawNetwork,
    #[serde(default)]
    pub problem: RawProblem,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracking: Option<RawTracking>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology: Option<OneOrMany<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<OneOrMany<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels_per_node: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_channels: Option<i64>,
    /// Default edge probability for `erdos_renyi` entries without one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawProblem {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<OneOrMany<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawTracking {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Batch,
    Adaptive,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "batch" => Some(Mode::Batch),
            "adaptive" => Some(Mode::Adaptive),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Batch => "batch",
            Mode::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    TopologyIndependent,
    FullyConnected,
}

impl Scheme {
    fn as_str(self) -> &'static str {
        match self {
            Scheme::TopologyIndependent => "ti",
            Scheme::FullyConnected => "fc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    FullyConnected,
    ErdosRenyi(f64),
    RandomTree,
    Path,
}

impl Topology {
    /// Accepts `fully_connected`/`fc`, `random_tree`/`tree`, `path`, and
    /// `erdos_renyi`/`er` with an optional `(p)` or `:p` suffix.
    fn parse(s: &str, default_p: Option<f64>) -> Result<Self, String> {
        let s = s.trim();
        match s {
            "fully_connected" | "fc" => return Ok(Topology::FullyConnected),
            "random_tree" | "tree" => return Ok(Topology::RandomTree),
            "path" => return Ok(Topology::Path),
            _ => {}
        }
        let rest = s
            .strip_prefix("erdos_renyi")
            .or_else(|| s.strip_prefix("er"))
            .ok_or_else(|| format!("unknown topology `{s}`"))?;
        let p_text = rest
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| rest.strip_prefix(':'));
        let p = match p_text {
            Some(t) => t.trim().parse::<f64>().map_err(|_| format!("bad probability in `{s}`"))?,
            None if rest.is_empty() => default_p.ok_or_else(|| format!("`{s}` needs a probability"))?,
            None => return Err(format!("unknown topology `{s}`")),
        };
        if !(p > 0.0 && p <= 1.0) {
            return Err(format!("probability {p} outside (0, 1]"));
        }
        Ok(Topology::ErdosRenyi(p))
    }

    /// Short label used in file names and CSV columns.
    pub fn label(&self) -> String {
        match self {
            Topology::FullyConnected => "fc".into(),
            Topology::ErdosRenyi(p) => format!("er{p}"),
            Topology::RandomTree => "tree".into(),
            Topology::Path => "path".into(),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::FullyConnected => write!(f, "fully_connected"),
            Topology::ErdosRenyi(p) => write!(f, "erdos_renyi({p})"),
            Topology::RandomTree => write!(f, "random_tree"),
            Topology::Path => write!(f, "path"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Mmse,
    Qcqp,
    Tro,
    Scqp,
}

impl Family {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "mmse" => Some(Family::Mmse),
            "qcqp" => Some(Family::Qcqp),
            "tro" => Some(Family::Tro),
            "scqp" => Some(Family::Scqp),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Mmse => "mmse",
            Family::Qcqp => "qcqp",
            Family::Tro => "tro",
            Family::Scqp => "scqp",
        }
    }

    /// `(σ_r², σ_n²)` used when the config leaves them out.
    fn default_variances(self) -> (f64, f64) {
        match self {
            Family::Tro => (0.5, 0.1),
            Family::Mmse => (1.0, 0.1),
            Family::Qcqp | Family::Scqp => (1.0, 1.0),
        }
    }
}

/// Channel layout for a given `K`.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    PerNode(usize),
    Total(usize),
    Explicit(Vec<usize>),
}

impl ChannelSpec {
    pub fn layout(&self, nodes: usize) -> Vec<usize> {
        match self {
            ChannelSpec::PerNode(m) => vec![*m; nodes],
            ChannelSpec::Total(m) => vec![m / nodes; nodes],
            ChannelSpec::Explicit(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSpec {
    pub drift_variance: f64,
    /// `(iteration, λ)` knots.
    pub schedule: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub runs: usize,
    pub iterations: usize,
    pub mode: Mode,
    pub samples: usize,
    pub output_dir: Option<PathBuf>,
    pub threads: usize,
    pub scheme: Scheme,
    pub topologies: Vec<Topology>,
    pub nodes: Vec<usize>,
    pub channels: ChannelSpec,
    pub family: Family,
    pub q: Vec<usize>,
    pub source_variance: f64,
    pub noise_variance: f64,
    pub tracking: Option<TrackingSpec>,
}

/// One point of the topology × K × Q sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub index: usize,
    pub topology: Topology,
    pub channels: Vec<usize>,
    pub q: usize,
}

impl Variant {
    pub fn nodes(&self) -> usize {
        self.channels.len()
    }

    pub fn label(&self) -> String {
        format!("{}_k{}_q{}", self.topology.label(), self.nodes(), self.q)
    }
}

impl ExperimentConfig {
    /// Sweep points in topology-major, then K, then Q order.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &topology in &self.topologies {
            for &k in &self.nodes {
                for &q in &self.q {
                    out.push(Variant { index: out.len(), topology, channels: self.channels.layout(k), q });
                }
            }
        }
        out
    }

    /// Fully resolved config in the input dialect.
    pub fn to_raw(&self) -> RawConfig {
        let channels = match &self.channels {
            ChannelSpec::Explicit(v) => Some(v.iter().map(|&m| m as i64).collect()),
            _ => None,
        };
        RawConfig {
            schema_version: Some(SCHEMA_VERSION),
            experiment: RawExperiment {
                name: Some(self.name.clone()),
                seed: Some(self.seed),
                runs: Some(self.runs as i64),
                iterations: Some(self.iterations as i64),
                mode: Some(self.mode.as_str().into()),
                samples: Some(self.samples as i64),
                output_dir: self.output_dir.clone(),
                threads: Some(self.threads as i64),
                scheme: Some(self.scheme.as_str().into()),
            },
            network: RawNetwork {
                topology: Some(OneOrMany::from_vec(self.topologies.iter().map(|t| t.to_string()).collect())),
                nodes: Some(OneOrMany::from_vec(self.nodes.iter().map(|&k| k as i64).collect())),
                channels,
                channels_per_node: match self.channels {
                    ChannelSpec::PerNode(m) => Some(m as i64),
                    _ => None,
                },
                total_channels: match self.channels {
                    ChannelSpec::Total(m) => Some(m as i64),
                    _ => None,
                },
                probability: None,
            },
            problem: RawProblem {
                kind: Some(self.family.as_str().into()),
                q: Some(OneOrMany::from_vec(self.q.iter().map(|&q| q as i64).collect())),
                source_variance: Some(self.source_variance),
                noise_variance: Some(self.noise_variance),
            },
            tracking: self.tracking.as_ref().map(|t| RawTracking {
                drift_variance: Some(t.drift_variance),
                schedule: Some(t.schedule.iter().map(|&(i, l)| [i, l]).collect()),
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("resolved config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct ConfigError {
    pub errors: Vec<FieldError>,
}

impl ConfigError {
    pub fn mentions(&self, path: &str) -> bool {
        self.errors.iter().any(|e| e.path == path)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.errors.iter().map(|e| format!("{}: {}", e.path, e.message)).collect();
        write!(f, "invalid config: {}", parts.join("; "))
    }
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub iterations: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub mode: Option<String>,
}

impl Overrides {
    pub fn apply(&self, raw: &mut RawConfig) {
        let e = &mut raw.experiment;
        if let Some(s) = self.seed {
            e.seed = Some(s);
        }
        if let Some(r) = self.runs {
            e.runs = Some(r as i64);
        }
        if let Some(i) = self.iterations {
            e.iterations = Some(i as i64);
        }
        if let Some(o) = &self.output_dir {
            e.output_dir = Some(o.clone());
        }
        if let Some(m) = &self.mode {
            e.mode = Some(m.clone());
        }
    }
}

pub fn parse_config(text: &str) -> Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError {
        errors: vec![FieldError { path: "<file>".into(), message: e.to_string().trim().to_string() }],
    })
}

/// Validation errors, plus the defaults applied (logged only if the config
/// turns out valid).
#[derive(Default)]
struct Collector {
    errors: Vec<FieldError>,
    defaults: Vec<String>,
}

impl Collector {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(FieldError { path: path.into(), message: message.into() });
    }

    fn defaulted(&mut self, path: &str, value: impl fmt::Display) {
        self.defaults.push(format!("{path} not set, using {value}"));
    }

    fn count(&mut self, path: &str, value: Option<i64>, default: Option<usize>, min: i64) -> usize {
        match (value, default) {
            (Some(v), _) if v >= min => v as usize,
            (Some(v), _) => {
                self.push(path, format!("must be at least {min}, got {v}"));
                0
            }
            (None, Some(d)) => {
                self.defaulted(path, d);
                d
            }
            (None, None) => {
                self.push(path, "required");
                0
            }
        }
    }

    fn variance(&mut self, path: &str, value: Option<f64>, default: f64) -> f64 {
        match value {
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => {
                self.push(path, format!("must be positive, got {v}"));
                default
            }
            None => {
                self.defaulted(path, default);
                default
            }
        }
    }
}

/// Checks every field and applies defaults. All violations are reported
/// together.
pub fn validate_config(raw: &RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut c = Collector::default();
    match raw.schema_version {
        Some(SCHEMA_VERSION) => {}
        Some(v) => c.push("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}")),
        None => c.push("schema_version", "required"),
    }

    let e = &raw.experiment;
    let name = e.name.clone().unwrap_or_else(|| "study".into());
    let seed = e.seed.unwrap_or_else(|| {
        c.defaulted("experiment.seed", 0);
        0
    });
    let runs = c.count("experiment.runs", e.runs, Some(DEFAULT_RUNS), 1);
    let iterations = c.count("experiment.iterations", e.iterations, Some(DEFAULT_ITERATIONS), 0);
    let samples = c.count("experiment.samples", e.samples, Some(DEFAULT_SAMPLES), 1);
    let threads = c.count("experiment.threads", e.threads, Some(0), 0);
    let mode = match e.mode.as_deref() {
        None if raw.tracking.is_some() => Mode::Adaptive,
        None => Mode::Batch,
        Some(m) => Mode::parse(m).unwrap_or_else(|| {
            c.push("experiment.mode", format!("expected `batch` or `adaptive`, got `{m}`"));
            Mode::Batch
        }),
    };
    let scheme = match e.scheme.as_deref() {
        None | Some("ti") => Scheme::TopologyIndependent,
        Some("fc") => Scheme::FullyConnected,
        Some(s) => {
            c.push("experiment.scheme", format!("expected `ti` or `fc`, got `{s}`"));
            Scheme::TopologyIndependent
        }
    };

    let n = &raw.network;
    if let Some(p) = n.probability {
        if !(p > 0.0 && p <= 1.0) {
            c.push("network.probability", format!("{p} outside (0, 1]"));
        }
    }
    let mut topologies = Vec::new();
    match &n.topology {
        None => c.push("network.topology", "required"),
        Some(t) => {
            let list = t.to_vec();
            if list.is_empty() {
                c.push("network.topology", "empty list");
            }
            for (i, s) in list.iter().enumerate() {
                match Topology::parse(s, n.probability) {
                    Ok(t) => topologies.push(t),
                    Err(msg) => c.push(&format!("network.topology[{i}]"), msg),
                }
            }
        }
    }
    let mut nodes = Vec::new();
    match &n.nodes {
        Some(list) => {
            for (i, k) in list.to_vec().into_iter().enumerate() {
                if k >= 1 {
                    nodes.push(k as usize);
                } else {
                    c.push(&format!("network.nodes[{i}]"), format!("must be at least 1, got {k}"));
                }
            }
        }
        None => match &n.channels {
            Some(list) => nodes.push(list.len()),
            None => c.push("network.nodes", "required"),
        },
    }

    let channels = match (&n.channels, n.channels_per_node, n.total_channels) {
        (Some(list), per, total) => {
            if per.is_some() {
                c.push("network.channels_per_node", "conflicts with network.channels");
            }
            let mut ok = Vec::new();
            for (i, &m) in list.iter().enumerate() {
                if m >= 1 {
                    ok.push(m as usize);
                } else {
                    c.push(&format!("network.channels[{i}]"), format!("must be at least 1, got {m}"));
                }
            }
            let sum: usize = ok.iter().sum();
            if let Some(total) = total {
                if total != sum as i64 {
                    c.push(
                        "network.total_channels",
                        format!("M = {total} differs from the sum of network.channels = {sum}"),
                    );
                }
            }
            if nodes.len() > 1 || nodes.first().is_some_and(|&k| k != list.len()) {
                c.push("network.channels", format!("{} entries for nodes = {:?}", list.len(), nodes));
            }
            ChannelSpec::Explicit(ok)
        }
        (None, Some(per), total) => {
            if per < 1 {
                c.push("network.channels_per_node", format!("must be at least 1, got {per}"));
            }
            if let Some(total) = total {
                for &k in &nodes {
                    if total != per * k as i64 {
                        c.push(
                            "network.total_channels",
                            format!("M = {total} differs from K·M_k = {k}·{per} = {}", per * k as i64),
                        );
                    }
                }
            }
            ChannelSpec::PerNode(per.max(1) as usize)
        }
        (None, None, Some(total)) => {
            if total < 1 {
                c.push("network.total_channels", format!("must be at least 1, got {total}"));
            }
            for &k in &nodes {
                if total % k as i64 != 0 || total < k as i64 {
                    c.push("network.total_channels", format!("M = {total} is not a multiple of K = {k}"));
                }
            }
            ChannelSpec::Total(total.max(1) as usize)
        }
        (None, None, None) => {
            c.push("network.channels", "one of channels, channels_per_node or total_channels is required");
            ChannelSpec::PerNode(1)
        }
    };

    let p = &raw.problem;
    let family = match p.kind.as_deref() {
        Some(k) => Family::parse(k).unwrap_or_else(|| {
            c.push("problem.kind", format!("unknown kind `{k}` (mmse, qcqp, tro, scqp)"));
            Family::Mmse
        }),
        None => {
            c.push("problem.kind", "required");
            Family::Mmse
        }
    };
    let mut q = Vec::new();
    match &p.q {
        None => c.push("problem.q", "required"),
        Some(list) => {
            for (i, v) in list.to_vec().into_iter().enumerate() {
                if v >= 1 {
                    q.push(v as usize);
                } else {
                    c.push(&format!("problem.q[{i}]"), format!("must be at least 1, got {v}"));
                }
            }
        }
    }
    let min_total = nodes.iter().map(|&k| channels.layout(k).iter().sum::<usize>()).min().unwrap_or(0);
    if let Some(&q_max) = q.iter().max() {
        if min_total > 0 && q_max > min_total {
            c.push("problem.q", format!("Q = {q_max} exceeds M = {min_total}"));
        }
    }
    let (sv, nv) = family.default_variances();
    let source_variance = c.variance("problem.source_variance", p.source_variance, sv);
    let noise_variance = c.variance("problem.noise_variance", p.noise_variance, nv);

    let tracking = raw.tracking.as_ref().map(|t| {
        if family != Family::Mmse {
            c.push("tracking", "only the mmse problem supports tracking");
        }
        if q.iter().any(|&q| q != 1) {
            c.push("problem.q", "tracking uses a single source, so Q must be 1");
        }
        if mode != Mode::Adaptive {
            c.push("experiment.mode", "tracking needs adaptive mode");
        }
        let drift_variance = c.variance("tracking.drift_variance", t.drift_variance, DEFAULT_DRIFT_VARIANCE);
        let schedule: Vec<(f64, f64)> = t.schedule.clone().unwrap_or_default().iter().map(|k| (k[0], k[1])).collect();
        if schedule.is_empty() {
            c.push("tracking.schedule", "required and non-empty");
        }
        if schedule.windows(2).any(|w| w[1].0 < w[0].0) {
            c.push("tracking.schedule", "knot iterations must be non-decreasing");
        }
        if schedule.iter().any(|&(_, l)| !(0.0..=1.0).contains(&l)) {
            c.push("tracking.schedule", "λ values must lie in [0, 1]");
        }
        TrackingSpec { drift_variance, schedule }
    });

    if scheme == Scheme::FullyConnected && topologies.iter().any(|t| *t != Topology::FullyConnected) {
        c.push("experiment.scheme", "`fc` needs every topology to be fully_connected");
    }

    if !c.errors.is_empty() {
        return Err(ConfigError { errors: c.errors });
    }
    for note in &c.defaults {
        log::info!("{note}");
    }

    for &k in &nodes {
        let layout = channels.layout(k);
        let widest = layout.iter().max().copied().unwrap_or(0);
        let q_max = q.iter().max().copied().unwrap_or(0);
        let local = widest + q_max * k.saturating_sub(1);
        if samples < local {
            log::warn!("N = {samples} is below the largest local dimension {local} for K = {k}; covariances will be rank deficient");
        }
    }

    Ok(ExperimentConfig {
        name,
        seed,
        runs,
        iterations,
        mode,
        samples,
        output_dir: e.output_dir.clone(),
        threads,
        scheme,
        topologies,
        nodes,
        channels,
        family,
        q,
        source_variance,
        noise_variance,
        tracking,
    })
}

/// Parses, applies overrides and validates.
pub fn load_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = parse_config(text)?;
    overrides.apply(&mut raw);
    validate_config(&raw)
}
