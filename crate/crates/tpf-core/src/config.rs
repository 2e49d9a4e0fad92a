//! Sectioned key-value run configuration.
//!
//! Format: `[section]` headers with `key = value` lines; `#` starts a
//! comment. Unknown sections or keys are hard errors so typos cannot
//! silently fall back to defaults. Every run writes a resolved echo of the
//! configuration it actually used next to its outputs.

use crate::datasets::{Instability, MixtureConfig, VlasovConfig, VorticityConfig};
use crate::error::{Error, Result};
use crate::flow::{OdeConfig, Scheme};
use crate::gaussian::GaussianPath;
use crate::interpolant::Schedule;
use std::collections::BTreeMap;

/// Which generator `[data]` describes.
#[derive(Debug, Clone)]
pub enum DataConfig {
    /// Analytic Gaussian marginal path (isotropic-linear, sampled clouds).
    Gaussian {
        dim: usize,
        sigma: f64,
        marginals: usize,
        samples: usize,
        span: f64,
        seed: u64,
    },
    Mixture(MixtureConfig),
    Vlasov {
        base: VlasovConfig,
        /// One dataset is generated per value.
        mus: Vec<f64>,
    },
    Vorticity(VorticityConfig),
}

impl DataConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            DataConfig::Gaussian { .. } => "gaussian",
            DataConfig::Mixture(_) => "mixture",
            DataConfig::Vlasov { .. } => "vlasov",
            DataConfig::Vorticity(_) => "vorticity",
        }
    }

    pub fn gaussian_path(&self) -> Option<GaussianPath> {
        match self {
            DataConfig::Gaussian { dim, sigma, .. } => Some(GaussianPath::IsotropicLinear {
                dim: *dim,
                sigma: *sigma,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CfmSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub schedule: Schedule,
    pub hidden_width: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
    pub residual: bool,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct FlowSection {
    pub steps: usize,
    pub scheme: Scheme,
    pub bundle_size: usize,
    pub threads: usize,
}

impl FlowSection {
    pub fn ode(&self) -> OdeConfig {
        OdeConfig {
            steps: self.steps,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden_width: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
    pub threads: usize,
    pub fd: crate::regression::FdKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W2Mode {
    Exact,
    Entropic,
}

#[derive(Debug, Clone)]
pub struct EvalSection {
    pub w2: W2Mode,
    /// Entropic regularization as a fraction of the median pairwise squared
    /// distance.
    pub epsilon_scale: f64,
    pub sinkhorn_iters: usize,
    /// Clouds larger than this are subsampled before exact assignment.
    pub subsample: usize,
    /// Times whose distances enter the reported average.
    pub report_times: Vec<f64>,
    /// Held-out physics parameters to evaluate parameter transfer on.
    pub test_mu: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataConfig,
    pub cfm: CfmSection,
    pub flow: FlowSection,
    pub regression: RegressionSection,
    pub eval: EvalSection,
}

// Paper-stated training defaults (Gaussian-path smoke values are far smaller
// and live in the checked-in config files instead).
impl Default for CfmSection {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 100_000,
            lr: 1e-4,
            weight_decay: 0.0,
            seed: 0,
            schedule: Schedule::Trig,
            hidden_width: 256,
            depth: 6,
            time_embed_dim: 32,
            residual: true,
            threads: 1,
        }
    }
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            steps: 100,
            scheme: Scheme::Rk4,
            bundle_size: 1024,
            threads: 1,
        }
    }
}

impl Default for RegressionSection {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 4096,
            lr: 1e-3,
            seed: 0,
            hidden_width: 256,
            depth: 6,
            time_embed_dim: 32,
            threads: 1,
            fd: crate::regression::FdKind::Forward,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            w2: W2Mode::Exact,
            epsilon_scale: 0.05,
            sinkhorn_iters: 5000,
            subsample: 2048,
            report_times: vec![0.33, 0.66, 1.0],
            test_mu: Vec::new(),
            seed: 0,
        }
    }
}

struct Section {
    name: String,
    entries: BTreeMap<String, String>,
}

fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                Error::Config(format!("line {}: malformed section header", lineno + 1))
            })?;
            sections.push(Section {
                name: name.trim().to_string(),
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        let section = sections.last_mut().ok_or_else(|| {
            Error::Config(format!("line {}: key before any [section]", lineno + 1))
        })?;
        let key = key.trim().to_string();
        if section
            .entries
            .insert(key.clone(), value.trim().to_string())
            .is_some()
        {
            return Err(Error::Config(format!(
                "duplicate key '{key}' in [{}]",
                section.name
            )));
        }
    }
    Ok(sections)
}

/// Typed view over one section that records which keys were consumed and
/// rejects the rest.
struct Keys<'a> {
    section: &'a str,
    entries: &'a BTreeMap<String, String>,
    used: Vec<String>,
}

impl<'a> Keys<'a> {
    fn new(s: &'a Section) -> Self {
        Self {
            section: &s.name,
            entries: &s.entries,
            used: Vec::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        self.used.push(key.to_string());
        self.entries.get(key).map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse::<T>().map_err(|_| {
                Error::Config(format!("bad value '{v}' for key '{key}' in [{}]", self.section))
            }),
        }
    }

    fn parse_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::Config(format!(
                "bad boolean '{v}' for key '{key}' in [{}]",
                self.section
            ))),
        }
    }

    fn parse_list(&mut self, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::Config(format!(
                            "bad number '{tok}' in list '{key}' of [{}]",
                            self.section
                        ))
                    })
                })
                .collect(),
        }
    }

    fn finish(self) -> Result<()> {
        for key in self.entries.keys() {
            if !self.used.contains(key) {
                return Err(Error::Config(format!(
                    "unknown key '{key}' in section [{}]",
                    self.section
                )));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let sections = parse_sections(text)?;
        let mut data = None;
        let mut cfm = CfmSection::default();
        let mut flow = FlowSection::default();
        let mut regression = RegressionSection::default();
        let mut eval = EvalSection::default();

        for s in &sections {
            match s.name.as_str() {
                "data" => data = Some(Self::parse_data(s)?),
                "cfm" => cfm = Self::parse_cfm(s)?,
                "flow" => flow = Self::parse_flow(s)?,
                "regression" => regression = Self::parse_regression(s)?,
                "eval" => eval = Self::parse_eval(s)?,
                other => {
                    return Err(Error::Config(format!("unknown section [{other}]")));
                }
            }
        }
        let data =
            data.ok_or_else(|| Error::Config("missing required section [data]".into()))?;
        Ok(RunConfig {
            data,
            cfm,
            flow,
            regression,
            eval,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn parse_data(s: &Section) -> Result<DataConfig> {
        let mut k = Keys::new(s);
        let kind = k.raw("kind").unwrap_or("gaussian").to_string();
        let seed = k.parse("seed", 0u64)?;
        let out = match kind.as_str() {
            "gaussian" => DataConfig::Gaussian {
                dim: k.parse("dim", 1usize)?,
                sigma: k.parse("sigma", 1.0f64)?,
                marginals: k.parse("marginals", 11usize)?,
                samples: k.parse("samples", 2000usize)?,
                span: k.parse("span", 1.0f64)?,
                seed,
            },
            "mixture" => DataConfig::Mixture(MixtureConfig {
                components: k.parse("components", 5usize)?,
                mean_std: k.parse("mean_std", 1.5f64)?,
                cov_range: (
                    k.parse("cov_min", 0.1f64)?,
                    k.parse("cov_max", 0.4f64)?,
                ),
                walk_step: k.parse("walk_step", 0.7f64)?,
                rotation_coeff: k.parse("rotation_coeff", 0.25f64)?,
                drift_coeff: k.parse("drift_coeff", 0.1f64)?,
                marginals: k.parse("marginals", 6usize)?,
                samples: k.parse("samples", 3000usize)?,
                seed,
            }),
            "vlasov" => {
                let base = VlasovConfig {
                    instability: Instability::from_name(
                        k.raw("instability").unwrap_or("two-stream"),
                    )?,
                    mu: 0.0, // set per dataset from the list below
                    particles: k.parse("particles", 25_000usize)?,
                    dt: k.parse("dt", 0.025f64)?,
                    steps: k.parse("steps", 2400usize)?,
                    domain_length: k.parse("domain_length", 4.0 * std::f64::consts::PI)?,
                    grid_cells: k.parse("grid_cells", 64usize)?,
                    seed,
                    export_every: k.parse("export_every", 200usize)?,
                    paper_force_sign: k.parse_bool("paper_force_sign", true)?,
                };
                let mus = k.parse_list("mu", vec![1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9])?;
                if mus.is_empty() {
                    return Err(Error::Config("vlasov needs at least one mu".into()));
                }
                DataConfig::Vlasov { base, mus }
            }
            "vorticity" => DataConfig::Vorticity(VorticityConfig {
                grid: k.parse("grid", 32usize)?,
                nu: k.parse("nu", 0.0f64)?,
                kappa: k.parse("kappa", 1e-2f64)?,
                hyper_order: k.parse("hyper_order", 2u32)?,
                dt: k.parse("dt", 1e-3f64)?,
                snapshots: k.parse("snapshots", 11usize)?,
                steps_per_snapshot: k.parse("steps_per_snapshot", 100usize)?,
                ensembles: k.parse("ensembles", 64usize)?,
                seed,
                grf_exponent: k.parse("grf_exponent", 2.0f64)?,
                grf_cutoff: k.parse("grf_cutoff", 32.0 / 3.0)?,
                threads: k.parse("threads", 1usize)?,
            }),
            other => {
                return Err(Error::Config(format!("unknown data kind '{other}'")));
            }
        };
        k.finish()?;
        Ok(out)
    }

    fn parse_cfm(s: &Section) -> Result<CfmSection> {
        let d = CfmSection::default();
        let mut k = Keys::new(s);
        let out = CfmSection {
            epochs: k.parse("epochs", d.epochs)?,
            batch_size: k.parse("batch_size", d.batch_size)?,
            lr: k.parse("lr", d.lr)?,
            weight_decay: k.parse("weight_decay", d.weight_decay)?,
            seed: k.parse("seed", d.seed)?,
            schedule: Schedule::from_name(k.raw("schedule").unwrap_or("trig"))?,
            hidden_width: k.parse("hidden_width", d.hidden_width)?,
            depth: k.parse("depth", d.depth)?,
            time_embed_dim: k.parse("time_embed_dim", d.time_embed_dim)?,
            residual: k.parse_bool("residual", d.residual)?,
            threads: k.parse("threads", d.threads)?,
        };
        k.finish()?;
        Ok(out)
    }

    fn parse_flow(s: &Section) -> Result<FlowSection> {
        let d = FlowSection::default();
        let mut k = Keys::new(s);
        let out = FlowSection {
            steps: k.parse("steps", d.steps)?,
            scheme: Scheme::from_name(k.raw("scheme").unwrap_or("rk4"))?,
            bundle_size: k.parse("bundle_size", d.bundle_size)?,
            threads: k.parse("threads", d.threads)?,
        };
        k.finish()?;
        Ok(out)
    }

    fn parse_regression(s: &Section) -> Result<RegressionSection> {
        let d = RegressionSection::default();
        let mut k = Keys::new(s);
        let out = RegressionSection {
            epochs: k.parse("epochs", d.epochs)?,
            batch_size: k.parse("batch_size", d.batch_size)?,
            lr: k.parse("lr", d.lr)?,
            seed: k.parse("seed", d.seed)?,
            hidden_width: k.parse("hidden_width", d.hidden_width)?,
            depth: k.parse("depth", d.depth)?,
            time_embed_dim: k.parse("time_embed_dim", d.time_embed_dim)?,
            threads: k.parse("threads", d.threads)?,
            fd: match k.raw("fd").unwrap_or("forward") {
                "forward" => crate::regression::FdKind::Forward,
                "central" => crate::regression::FdKind::Central,
                "midpoint" => crate::regression::FdKind::Midpoint,
                other => {
                    return Err(Error::Config(format!("unknown fd kind '{other}'")));
                }
            },
        };
        k.finish()?;
        Ok(out)
    }

    fn parse_eval(s: &Section) -> Result<EvalSection> {
        let d = EvalSection::default();
        let mut k = Keys::new(s);
        let w2 = match k.raw("w2").unwrap_or("exact") {
            "exact" => W2Mode::Exact,
            "entropic" => W2Mode::Entropic,
            other => {
                return Err(Error::Config(format!("unknown w2 mode '{other}'")));
            }
        };
        let out = EvalSection {
            w2,
            epsilon_scale: k.parse("epsilon_scale", d.epsilon_scale)?,
            sinkhorn_iters: k.parse("sinkhorn_iters", d.sinkhorn_iters)?,
            subsample: k.parse("subsample", d.subsample)?,
            report_times: k.parse_list("report_times", d.report_times.clone())?,
            test_mu: k.parse_list("test_mu", d.test_mu.clone())?,
            seed: k.parse("seed", d.seed)?,
        };
        k.finish()?;
        Ok(out)
    }

    /// Render every resolved value; re-parsing the echo reproduces the run.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        out.push_str("[data]\n");
        match &self.data {
            DataConfig::Gaussian {
                dim,
                sigma,
                marginals,
                samples,
                span,
                seed,
            } => {
                out.push_str("kind = gaussian\n");
                out.push_str(&format!("dim = {dim}\nsigma = {sigma}\nmarginals = {marginals}\n"));
                out.push_str(&format!("samples = {samples}\nspan = {span}\nseed = {seed}\n"));
            }
            DataConfig::Mixture(m) => {
                out.push_str("kind = mixture\n");
                out.push_str(&format!(
                    "components = {}\nmean_std = {}\ncov_min = {}\ncov_max = {}\n",
                    m.components, m.mean_std, m.cov_range.0, m.cov_range.1
                ));
                out.push_str(&format!(
                    "walk_step = {}\nrotation_coeff = {}\ndrift_coeff = {}\n",
                    m.walk_step, m.rotation_coeff, m.drift_coeff
                ));
                out.push_str(&format!(
                    "marginals = {}\nsamples = {}\nseed = {}\n",
                    m.marginals, m.samples, m.seed
                ));
            }
            DataConfig::Vlasov { base, mus } => {
                out.push_str("kind = vlasov\n");
                out.push_str(&format!("instability = {}\n", base.instability.name()));
                out.push_str(&format!(
                    "mu = {}\n",
                    mus.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
                ));
                out.push_str(&format!(
                    "particles = {}\ndt = {}\nsteps = {}\ndomain_length = {}\n",
                    base.particles, base.dt, base.steps, base.domain_length
                ));
                out.push_str(&format!(
                    "grid_cells = {}\nexport_every = {}\npaper_force_sign = {}\nseed = {}\n",
                    base.grid_cells, base.export_every, base.paper_force_sign, base.seed
                ));
            }
            DataConfig::Vorticity(v) => {
                out.push_str("kind = vorticity\n");
                out.push_str(&format!(
                    "grid = {}\nnu = {}\nkappa = {}\nhyper_order = {}\ndt = {}\n",
                    v.grid, v.nu, v.kappa, v.hyper_order, v.dt
                ));
                out.push_str(&format!(
                    "snapshots = {}\nsteps_per_snapshot = {}\nensembles = {}\n",
                    v.snapshots, v.steps_per_snapshot, v.ensembles
                ));
                out.push_str(&format!(
                    "grf_exponent = {}\ngrf_cutoff = {}\nthreads = {}\nseed = {}\n",
                    v.grf_exponent, v.grf_cutoff, v.threads, v.seed
                ));
            }
        }
        out.push_str("\n[cfm]\n");
        let c = &self.cfm;
        out.push_str(&format!(
            "epochs = {}\nbatch_size = {}\nlr = {}\nweight_decay = {}\nseed = {}\n",
            c.epochs, c.batch_size, c.lr, c.weight_decay, c.seed
        ));
        out.push_str(&format!(
            "schedule = {}\nhidden_width = {}\ndepth = {}\ntime_embed_dim = {}\nresidual = {}\nthreads = {}\n",
            c.schedule.name(),
            c.hidden_width,
            c.depth,
            c.time_embed_dim,
            c.residual,
            c.threads
        ));
        out.push_str("\n[flow]\n");
        let f = &self.flow;
        out.push_str(&format!(
            "steps = {}\nscheme = {}\nbundle_size = {}\nthreads = {}\n",
            f.steps,
            f.scheme.name(),
            f.bundle_size,
            f.threads
        ));
        out.push_str("\n[regression]\n");
        let r = &self.regression;
        out.push_str(&format!(
            "epochs = {}\nbatch_size = {}\nlr = {}\nseed = {}\n",
            r.epochs, r.batch_size, r.lr, r.seed
        ));
        out.push_str(&format!(
            "hidden_width = {}\ndepth = {}\ntime_embed_dim = {}\nthreads = {}\nfd = {}\n",
            r.hidden_width,
            r.depth,
            r.time_embed_dim,
            r.threads,
            match r.fd {
                crate::regression::FdKind::Forward => "forward",
                crate::regression::FdKind::Central => "central",
                crate::regression::FdKind::Midpoint => "midpoint",
            }
        ));
        out.push_str("\n[eval]\n");
        let e = &self.eval;
        out.push_str(&format!(
            "w2 = {}\n",
            match e.w2 {
                W2Mode::Exact => "exact",
                W2Mode::Entropic => "entropic",
            }
        ));
        out.push_str(&format!(
            "epsilon_scale = {}\nsinkhorn_iters = {}\nsubsample = {}\n",
            e.epsilon_scale, e.sinkhorn_iters, e.subsample
        ));
        out.push_str(&format!(
            "report_times = {}\n",
            e.report_times
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        ));
        if !e.test_mu.is_empty() {
            out.push_str(&format!(
                "test_mu = {}\n",
                e.test_mu
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
        }
        out.push_str(&format!("seed = {}\n", e.seed));
        out
    }
}
