//! Run configuration: built-in presets, file overlays and flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deeptv::energy::EnergySpec;
use deeptv::optimize::TrainConfig;
use deeptv::{Boundary, NetworkSpec, Smoothing, TvVariant};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Denoise,
    Inpaint,
    Deblur,
    Sweep1d,
    Sweep2d,
    FdBaseline,
    ErrorTrack,
}

impl Task {
    pub const ALL: [Task; 7] =
        [Task::Denoise, Task::Inpaint, Task::Deblur, Task::Sweep1d, Task::Sweep2d, Task::FdBaseline, Task::ErrorTrack];

    pub fn name(self) -> &'static str {
        match self {
            Task::Denoise => "denoise",
            Task::Inpaint => "inpaint",
            Task::Deblur => "deblur",
            Task::Sweep1d => "sweep1d",
            Task::Sweep2d => "sweep2d",
            Task::FdBaseline => "fd-baseline",
            Task::ErrorTrack => "error-track",
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, Task::Denoise | Task::Inpaint | Task::Deblur)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Reduced grids and iteration counts that finish in minutes.
    #[default]
    Ci,
    /// The published experiment settings.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Bound on `|theta|_inf`; absent means unconstrained.
    pub c: Option<f64>,
    /// History and checkpoint interval.
    pub log_every: usize,
}

/// Adam settings for the pixel-space baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSection {
    pub learning_rate: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub bc: Boundary,
    /// Nodes per axis of the synthetic data (ignored when `input` is set).
    pub size: usize,
    /// 1D interval; the step jumps at its midpoint.
    pub domain: [f64; 2],
    /// Disk radius of the synthetic image, centered in the unit square.
    pub disk_radius: f64,
    pub input: Option<PathBuf>,
    /// Nonzero pixels are kept; absent uses the built-in cross mask.
    pub mask: Option<PathBuf>,
    /// Plain-text kernel matrix; absent generates a Gaussian.
    pub kernel: Option<PathBuf>,
    pub blur_size: usize,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub sp_prob: f64,
    /// Refinement factor of the extra reconstruction rendered off-grid.
    pub fine_factor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rung {
    /// Nodes per axis.
    pub nodes: usize,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub out: PathBuf,
    pub energy: EnergySpec,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub fd: FdSection,
    pub data: DataSection,
    pub ladder: Vec<Rung>,
}

impl RunConfig {
    pub fn preset(task: Task, preset: Preset) -> RunConfig {
        let paper = preset == Preset::Paper;
        let energy = EnergySpec::default();
        let mut cfg = RunConfig {
            task,
            seed: 0,
            out: PathBuf::from("runs").join(task.name()),
            energy: energy.clone(),
            network: NetworkSection { hidden_widths: vec![64, 128] },
            train: TrainSection {
                learning_rate: 1e-2,
                iterations: if paper { 100_001 } else { 20_001 },
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                c: Some(100.0),
                log_every: 100,
            },
            fd: FdSection { learning_rate: 1e-4, iterations: 1_000_000 },
            data: DataSection {
                bc: Boundary::Neumann,
                size: 1000,
                domain: [0.0, 2.0],
                disk_radius: 0.25,
                input: None,
                mask: None,
                kernel: None,
                blur_size: 11,
                blur_sigma: 20.0,
                noise_sigma: 0.0,
                sp_prob: 0.0,
                fine_factor: 10,
            },
            ladder: Vec::new(),
        };
        match task {
            Task::Sweep1d => {
                cfg.ladder = [0.0, 0.1, 0.5, 1.0, 10.0, 100.0].iter().map(|&c| Rung { nodes: 1000, c }).collect();
            }
            Task::ErrorTrack => {
                if !paper {
                    cfg.train.iterations = 5001;
                }
            }
            Task::FdBaseline => {
                cfg.data.size = 50;
                cfg.train.c = Some(1e4);
                cfg.train.learning_rate = 1e-3;
                cfg.train.iterations = if paper { 100_001 } else { 20_001 };
            }
            Task::Sweep2d => {
                cfg.energy = EnergySpec { alpha1: 1.0, alpha2: 7.0, ..energy };
                cfg.network.hidden_widths = vec![128, 128, 128];
                cfg.train.learning_rate = 1e-3;
                cfg.train.iterations = if paper { 300_001 } else { 10_001 };
                cfg.data.bc = Boundary::Dirichlet;
                let rungs: &[(usize, f64)] = if paper {
                    &[(33, 0.0), (65, 1.0), (129, 10.0), (257, 100.0), (513, 1000.0), (1025, 1e4)]
                } else {
                    &[(33, 0.0), (65, 1.0)]
                };
                cfg.ladder = rungs.iter().map(|&(nodes, c)| Rung { nodes, c }).collect();
            }
            Task::Denoise | Task::Inpaint | Task::Deblur => {
                let (alpha1, alpha2) = if task == Task::Denoise { (10.0, 30.0) } else { (300.0, 300.0) };
                cfg.energy = EnergySpec { alpha1, alpha2, smoothing: Smoothing::Lift, ..energy };
                cfg.network.hidden_widths = vec![128, 128, 128];
                cfg.train.learning_rate = 1e-3;
                cfg.train.iterations = if paper { 300_001 } else { 1001 };
                cfg.train.c = Some(1e4);
                cfg.data.size = if paper { 129 } else { 33 };
                cfg.data.fine_factor = if paper { 10 } else { 4 };
                if task == Task::Denoise {
                    cfg.data.noise_sigma = 0.1;
                    cfg.data.sp_prob = 0.1;
                }
            }
        }
        cfg
    }

    /// Preset, then the optional config document, then flags.
    pub fn resolve(task: Task, preset: Preset, file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
        let mut value = serde_json::to_value(RunConfig::preset(task, preset))?;
        if let Some(path) = file {
            let doc = read_document(path)?;
            if let Some(t) = doc.get("task") {
                if t != &Value::String(task.name().into()) {
                    bail!("{} configures task {t}, not {}", path.display(), task.name());
                }
            }
            merge(&mut value, doc);
        }
        let mut cfg: RunConfig = serde_json::from_value(value).context("invalid configuration")?;
        overrides.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let dim = if matches!(self.task, Task::Sweep1d | Task::FdBaseline | Task::ErrorTrack) { 1 } else { 2 };
        Ok(NetworkSpec::new(dim, self.network.hidden_widths.clone())?)
    }

    pub fn train_config(&self, c: Option<f64>) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            iterations: t.iterations,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            seed: self.seed,
            weight_bound: c,
            log_every: t.log_every,
        }
    }

    pub fn fd_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.fd.learning_rate,
            iterations: self.fd.iterations,
            weight_bound: None,
            ..self.train_config(None)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        self.network_spec()?;
        self.train_config(self.train.c).validate()?;
        self.fd_config().validate()?;
        let d = &self.data;
        if d.size == 0 || d.fine_factor == 0 {
            bail!("data.size and data.fine_factor must be positive");
        }
        if !(d.domain[0] < d.domain[1]) {
            bail!("data.domain must be an increasing interval");
        }
        if !(d.noise_sigma >= 0.0) || !(0.0..1.0).contains(&d.sp_prob) {
            bail!("noise_sigma must be nonnegative and sp_prob in [0, 1)");
        }
        if matches!(self.task, Task::Sweep1d | Task::Sweep2d) {
            if self.ladder.is_empty() {
                bail!("{} needs a nonempty ladder", self.task.name());
            }
            if self.ladder.iter().any(|r| r.nodes == 0 || !(r.c >= 0.0)) {
                bail!("ladder rungs need nodes > 0 and c >= 0");
            }
        }
        if self.task == Task::ErrorTrack && !(self.energy.alpha2 > 0.0) {
            bail!("the error estimate needs alpha2 > 0");
        }
        Ok(())
    }
}

/// Values given on the command line; `None` keeps the configured value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub lambda: Option<f64>,
    pub tv: Option<TvVariant>,
    pub smoothing: Option<Smoothing>,
    pub gamma: Option<f64>,
    pub c: Option<f64>,
    pub lr: Option<f64>,
    pub iters: Option<usize>,
    pub arch: Option<Vec<usize>>,
    pub bc: Option<Boundary>,
    pub input: Option<PathBuf>,
    pub size: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub sp_prob: Option<f64>,
    pub mask: Option<PathBuf>,
    pub kernel: Option<PathBuf>,
    pub blur_size: Option<usize>,
    pub blur_sigma: Option<f64>,
    pub fine_factor: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.out, &self.out);
        set(&mut cfg.energy.alpha1, &self.alpha1);
        set(&mut cfg.energy.alpha2, &self.alpha2);
        set(&mut cfg.energy.lambda, &self.lambda);
        set(&mut cfg.energy.tv, &self.tv);
        set(&mut cfg.energy.smoothing, &self.smoothing);
        set(&mut cfg.energy.gamma, &self.gamma);
        set(&mut cfg.train.learning_rate, &self.lr);
        set(&mut cfg.train.iterations, &self.iters);
        set(&mut cfg.network.hidden_widths, &self.arch);
        set(&mut cfg.data.bc, &self.bc);
        set(&mut cfg.data.size, &self.size);
        set(&mut cfg.data.noise_sigma, &self.noise_sigma);
        set(&mut cfg.data.sp_prob, &self.sp_prob);
        set(&mut cfg.data.blur_size, &self.blur_size);
        set(&mut cfg.data.blur_sigma, &self.blur_sigma);
        set(&mut cfg.data.fine_factor, &self.fine_factor);
        if self.input.is_some() {
            cfg.data.input = self.input.clone();
        }
        if self.mask.is_some() {
            cfg.data.mask = self.mask.clone();
        }
        if self.kernel.is_some() {
            cfg.data.kernel = self.kernel.clone();
        }
        if let Some(c) = self.c {
            if matches!(cfg.task, Task::Sweep1d | Task::Sweep2d) {
                bail!("--c does not apply to ladder sweeps; set the ladder in the config file");
            }
            cfg.train.c = Some(c);
        }
        Ok(())
    }
}

/// Parses a TOML or JSON document by extension (TOML when unknown).
pub fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    if !value.is_object() {
        bail!("{} must be a table of settings", path.display());
    }
    Ok(value)
}

/// Deep merge of tables; anything else in `over` replaces `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
