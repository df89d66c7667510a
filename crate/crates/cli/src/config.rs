//! Experiment configuration: a `key = value` text file overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lrgm::experiment::{default_noise, TrialConfig};
use lrgm::graphon::{GraphonSpec, NoiseMode};
use lrgm::laplace::LossConfig;
use lrgm::ortho::SearchConfig;
use lrgm::pipeline::Method;

/// A graphon together with the label used in reports and seed derivation.
#[derive(Clone, Debug)]
pub struct NamedGraphon {
    pub label: String,
    pub spec: GraphonSpec,
}

/// Parses `1`, `2`, `3`, `er:<p>` or `sbm:<w1>,<w2>,...;<between>`.
pub fn parse_graphon(text: &str) -> Result<NamedGraphon> {
    let text = text.trim();
    let spec = match text {
        "1" => GraphonSpec::graphon1(),
        "2" => GraphonSpec::graphon2(),
        "3" => GraphonSpec::graphon3(),
        _ => {
            if let Some(p) = text.strip_prefix("er:") {
                GraphonSpec::erdos_renyi(p.trim().parse().with_context(|| format!("edge probability in {text:?}"))?)
            } else if let Some(body) = text.strip_prefix("sbm:") {
                let (within, between) = body
                    .split_once(';')
                    .ok_or_else(|| anyhow!("block model {text:?} needs `within,...;between`"))?;
                let within = within
                    .split(',')
                    .map(|w| w.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .with_context(|| format!("within-block probabilities in {text:?}"))?;
                let between = between
                    .trim()
                    .parse()
                    .with_context(|| format!("between-block probability in {text:?}"))?;
                GraphonSpec::Sbm { within, between }
            } else {
                bail!("unknown graphon {text:?}; expected 1, 2, 3, er:<p> or sbm:<w1>,...;<b>")
            }
        }
    };
    spec.validate()?;
    Ok(NamedGraphon {
        label: text.to_string(),
        spec,
    })
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub graphons: Vec<NamedGraphon>,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub d: usize,
    pub loss: LossConfig,
    pub p: usize,
    /// Additive Gaussian noise level; `None` picks the graphon's default.
    pub noise_sigma: Option<f64>,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub out: Option<PathBuf>,
    pub budget: Option<usize>,
    pub shared_latents: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graphons: vec![parse_graphon("1").expect("built-in graphon")],
            ns: vec![100],
            reps: 30,
            d: 4,
            loss: LossConfig::default(),
            p: 4,
            noise_sigma: None,
            seed: 0,
            methods: vec![Method::Laplace],
            out: None,
            budget: None,
            shared_latents: true,
        }
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().with_context(|| format!("{what}: {s:?}")))
        .collect()
}

pub fn parse_method(text: &str) -> Result<Method> {
    match text.trim() {
        "laplace" => Ok(Method::Laplace),
        "icp" => Ok(Method::Icp),
        other => bail!("unknown method {other:?}; expected laplace or icp"),
    }
}

fn parse_bool(text: &str) -> Result<bool> {
    match text.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => bail!("expected a boolean, got {other:?}"),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. Keys match the long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            // several graphons are separated by whitespace
            "graphon" => {
                self.graphons = value.split_whitespace().map(parse_graphon).collect::<Result<_>>()?;
            }
            "n" => self.ns = parse_list(value, "n")?,
            "reps" => self.reps = value.parse().context("reps")?,
            "d" => self.d = value.parse().context("d")?,
            "ms" => self.loss.m_s = value.parse().context("ms")?,
            "R" | "r" => self.loss.r = value.parse().context("R")?,
            "gamma" => self.loss.gamma = value.parse().context("gamma")?,
            "p" => self.p = value.parse().context("p")?,
            "noise-sigma" | "noise_sigma" => self.noise_sigma = Some(value.parse().context("noise-sigma")?),
            "seed" => self.seed = value.parse().context("seed")?,
            "method" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(parse_method)
                    .collect::<Result<_>>()?
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "budget" => self.budget = Some(value.parse().context("budget")?),
            "shared-latents" | "shared_latents" => self.shared_latents = parse_bool(value)?,
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    pub fn parse_text(&mut self, text: &str) -> Result<()> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", k + 1))?;
            self.set(key, value).with_context(|| format!("line {}", k + 1))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::default();
        cfg.parse_text(&text).with_context(|| format!("in {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.graphons.is_empty() || self.ns.is_empty() || self.methods.is_empty() {
            bail!("need at least one graphon, one n and one method");
        }
        if self.ns.contains(&0) || self.reps == 0 || self.d == 0 || self.p == 0 || self.budget == Some(0) {
            bail!("n, reps, d, p and budget must all be at least 1");
        }
        if let Some(&n) = self.ns.iter().find(|&&n| n < self.d) {
            bail!("n = {n} is smaller than d = {}", self.d);
        }
        self.loss.validate()?;
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                bail!("noise-sigma must be a non-negative number");
            }
        }
        Ok(())
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            p: self.p,
            budget_per_start: self.budget,
            ..SearchConfig::default()
        }
    }

    pub fn noise_for(&self, spec: &GraphonSpec) -> NoiseMode {
        match (self.noise_sigma, default_noise(spec)) {
            (Some(sigma), NoiseMode::Gaussian { .. }) => NoiseMode::Gaussian { sigma },
            (_, mode) => mode,
        }
    }

    pub fn trial(&self, graphon: &NamedGraphon, n: usize, method: Method) -> TrialConfig {
        let mut t = TrialConfig::new(graphon.spec.clone(), n, self.d);
        t.noise = self.noise_for(&graphon.spec);
        t.shared_latents = self.shared_latents;
        t.loss = self.loss;
        t.search = self.search();
        t.method = method;
        t
    }
}
