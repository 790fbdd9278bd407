use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::inference::VarianceMode;
use crate::tensor::Shape;
use crate::tucker::MultilinearRank;

pub const SCHEMA_MAJOR: u64 = 1;
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Clt,
    Coverage,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    /// Fixed heteroskedastic sd field drawn uniformly from `[lo, hi]`.
    HeteroUniform { lo: f64, hi: f64 },
}

impl NoiseSpec {
    /// Largest noise standard deviation.
    pub fn sigma_max(&self) -> f64 {
        match self {
            NoiseSpec::Gaussian { sigma } => *sigma,
            NoiseSpec::HeteroUniform { hi, .. } => *hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SamplingSpec {
    #[serde(rename = "p")]
    Rate(f64),
    #[serde(rename = "n")]
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitSpec {
    /// Truth plus scaled Gaussian noise; the default target is `σ√(d̄ log d̄ / n)`.
    Independent {
        #[serde(skip_serializing_if = "Option::is_none")]
        target_linf: Option<f64>,
    },
    /// Diagonal-deletion spectral init refined by offline RGD on the same sample.
    Dependent { rgd_steps: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FormsSpec {
    /// One indicator form `Σ e_c` (cells 1-based).
    Cells { cells: Vec<Vec<usize>> },
    /// `count` forms `Σ_a e_a − e_c` with `c` uniform over the non-anchor cells.
    CoverageFamily { anchors: Vec<Vec<usize>>, count: usize },
    /// `count` forms with `support` uniform cells and random ±1 weights.
    RandomSparse { support: usize, count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub schema_version: String,
    pub experiment: ExperimentKind,
    pub shape: Vec<usize>,
    pub rank: Vec<usize>,
    pub gamma: f64,
    pub lambda_coeff: f64,
    pub noise: NoiseSpec,
    pub sampling: SamplingSpec,
    pub init: InitSpec,
    pub forms: FormsSpec,
    pub variance_mode: VarianceMode,
    pub trials: usize,
    pub seed: u64,
    /// Miscoverage levels; a level `a` gives a `1 − a` interval.
    pub alphas: Vec<f64>,
    pub redraw_truth: bool,
}

impl ExperimentConfig {
    pub fn shape(&self) -> Shape {
        Shape::new(self.shape.clone()).expect("validated")
    }

    pub fn rank(&self) -> MultilinearRank {
        MultilinearRank::new(self.rank.clone()).expect("validated")
    }

    /// `λ_min = c·d̄^γ`.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_coeff * (*self.shape.iter().max().expect("validated") as f64).powf(self.gamma)
    }

    pub fn sample_size(&self) -> usize {
        match self.sampling {
            SamplingSpec::Count(n) => n,
            SamplingSpec::Rate(p) => ((p * self.shape().numel() as f64).round() as usize).max(1),
        }
    }

    pub fn target_linf(&self) -> Option<f64> {
        match self.init {
            InitSpec::Independent { target_linf: Some(t) } => Some(t),
            InitSpec::Independent { target_linf: None } => {
                let d = *self.shape.iter().max().expect("validated") as f64;
                Some(self.noise.sigma_max() * (d * d.ln() / self.sample_size() as f64).sqrt())
            }
            InitSpec::Dependent { .. } => None,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        Self::from_value(&v)
    }

    /// Validates every key and reports all violations at once.
    pub fn from_value(v: &Value) -> Result<Self> {
        let mut c = Checker { errors: Vec::new() };
        let Some(obj) = v.as_object() else {
            return Err(Error::Schema(vec!["config must be a JSON object".into()]));
        };
        const KEYS: [&str; 15] = [
            "schema_version",
            "experiment",
            "shape",
            "rank",
            "gamma",
            "lambda_coeff",
            "noise",
            "sampling",
            "init",
            "forms",
            "variance_mode",
            "trials",
            "seed",
            "alphas",
            "redraw_truth",
        ];
        for k in obj.keys().filter(|k| !KEYS.contains(&k.as_str())) {
            c.err(k, "unknown key");
        }

        let schema_version = match obj.get("schema_version").and_then(Value::as_str) {
            Some(s) => {
                let major = s.split('.').next().and_then(|m| m.parse::<u64>().ok());
                if major != Some(SCHEMA_MAJOR) {
                    c.err("schema_version", &format!("unsupported version {s:?}, expected {SCHEMA_MAJOR}.x"));
                }
                s.to_string()
            }
            None => {
                c.err("schema_version", "required string");
                String::new()
            }
        };
        let experiment = match obj.get("experiment").and_then(Value::as_str) {
            Some("clt") => Some(ExperimentKind::Clt),
            Some("coverage") => Some(ExperimentKind::Coverage),
            _ => {
                c.err("experiment", "must be \"clt\" or \"coverage\"");
                None
            }
        };
        let shape = c.usize_list(obj, "shape", 1).unwrap_or_default();
        if !shape.is_empty() && (shape.len() < 2 || shape.contains(&0)) {
            c.err("shape", "needs at least two positive dimensions");
        }
        let rank = c.usize_list(obj, "rank", 1).unwrap_or_default();
        if !rank.is_empty() && shape.len() >= 2 {
            if rank.len() != shape.len() {
                c.err("rank", "must have one entry per mode");
            } else if let Err(e) = MultilinearRank::new(rank.clone())
                .and_then(|r| Shape::new(shape.clone()).and_then(|s| r.validate_for(&s)))
            {
                c.err("rank", &e.to_string());
            }
        }
        let gamma = c.number(obj, "gamma", None, |_| true, "must be a number").unwrap_or(0.0);
        let lambda_coeff = c.number(obj, "lambda_coeff", Some(10.0), |x| x > 0.0, "must be > 0").unwrap_or(10.0);

        let noise = c.noise(obj.get("noise"));
        let numel: usize = if shape.len() >= 2 && !shape.contains(&0) { shape.iter().product() } else { 0 };
        let sampling = c.sampling(obj.get("sampling"), numel);
        let init = c.init(obj.get("init"));
        let forms = c.forms(obj.get("forms"), &shape);

        let variance_mode = match obj.get("variance_mode") {
            None => match noise {
                Some(NoiseSpec::HeteroUniform { .. }) => VarianceMode::Heteroskedastic,
                _ => VarianceMode::Homoskedastic,
            },
            Some(Value::String(s)) if s == "homo" => VarianceMode::Homoskedastic,
            Some(Value::String(s)) if s == "hetero" => VarianceMode::Heteroskedastic,
            Some(_) => {
                c.err("variance_mode", "must be \"homo\" or \"hetero\"");
                VarianceMode::Homoskedastic
            }
        };
        let trials = match obj.get("trials").and_then(Value::as_u64) {
            Some(t) if t >= 1 => t as usize,
            _ => {
                c.err("trials", "must be an integer >= 1");
                0
            }
        };
        let seed = match obj.get("seed") {
            None => 0,
            Some(s) => s.as_u64().unwrap_or_else(|| {
                c.err("seed", "must be a non-negative integer");
                0
            }),
        };
        let alphas = match obj.get("alphas") {
            None => vec![0.05, 0.1],
            Some(Value::Array(a)) if !a.is_empty() => {
                let xs: Vec<f64> = a.iter().filter_map(Value::as_f64).collect();
                if xs.len() != a.len() || xs.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
                    c.err("alphas", "every level must lie in (0, 1)");
                }
                xs
            }
            Some(_) => {
                c.err("alphas", "must be a non-empty array");
                Vec::new()
            }
        };
        let redraw_truth = match obj.get("redraw_truth") {
            None => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                c.err("redraw_truth", "must be a boolean");
                false
            }
        };

        if let (Some(ExperimentKind::Clt), Some(f)) = (experiment, &forms) {
            let single = match f {
                FormsSpec::Cells { .. } => true,
                FormsSpec::RandomSparse { count, .. } => *count == 1,
                FormsSpec::CoverageFamily { .. } => false,
            };
            if !single {
                c.err("forms", "a clt experiment needs exactly one form");
            }
        }

        if !c.errors.is_empty() {
            return Err(Error::Schema(c.errors));
        }
        Ok(ExperimentConfig {
            schema_version,
            experiment: experiment.expect("checked"),
            shape,
            rank,
            gamma,
            lambda_coeff,
            noise: noise.expect("checked"),
            sampling: sampling.expect("checked"),
            init: init.expect("checked"),
            forms: forms.expect("checked"),
            variance_mode,
            trials,
            seed,
            alphas,
            redraw_truth,
        })
    }
}

struct Checker {
    errors: Vec<String>,
}

impl Checker {
    fn err(&mut self, key: &str, msg: &str) {
        self.errors.push(format!("{key}: {msg}"));
    }

    fn number(
        &mut self,
        obj: &Map<String, Value>,
        key: &str,
        default: Option<f64>,
        ok: impl Fn(f64) -> bool,
        msg: &str,
    ) -> Option<f64> {
        match (obj.get(key), default) {
            (None, Some(d)) => Some(d),
            (v, _) => match v.and_then(Value::as_f64).filter(|x| x.is_finite() && ok(*x)) {
                Some(x) => Some(x),
                None => {
                    self.err(key, msg);
                    None
                }
            },
        }
    }

    fn usize_list(&mut self, obj: &Map<String, Value>, key: &str, min: u64) -> Option<Vec<usize>> {
        let list = obj.get(key).and_then(Value::as_array).and_then(|a| {
            a.iter().map(|x| x.as_u64().filter(|v| *v >= min).map(|v| v as usize)).collect::<Option<Vec<_>>>()
        });
        if list.is_none() {
            self.err(key, &format!("must be an array of integers >= {min}"));
        }
        list
    }

    fn sub<'a>(&mut self, v: Option<&'a Value>, key: &str, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        let Some(obj) = v.and_then(Value::as_object) else {
            self.err(key, "required object");
            return None;
        };
        for k in obj.keys().filter(|k| !allowed.contains(&k.as_str())) {
            self.err(&format!("{key}.{k}"), "unknown key");
        }
        Some(obj)
    }

    fn noise(&mut self, v: Option<&Value>) -> Option<NoiseSpec> {
        let obj = self.sub(v, "noise", &["kind", "sigma", "lo", "hi"])?;
        match obj.get("kind").and_then(Value::as_str) {
            Some("gaussian") => {
                match obj.get("sigma").and_then(Value::as_f64).filter(|s| s.is_finite() && *s >= 0.0) {
                    Some(sigma) => Some(NoiseSpec::Gaussian { sigma }),
                    None => {
                        self.err("noise.sigma", "must be a number >= 0");
                        None
                    }
                }
            }
            Some("hetero_uniform") => {
                let lo = obj.get("lo").and_then(Value::as_f64);
                let hi = obj.get("hi").and_then(Value::as_f64);
                match (lo, hi) {
                    (Some(lo), Some(hi)) if lo >= 0.0 && hi >= lo && hi.is_finite() => {
                        Some(NoiseSpec::HeteroUniform { lo, hi })
                    }
                    _ => {
                        self.err("noise.lo/hi", "need 0 <= lo <= hi");
                        None
                    }
                }
            }
            _ => {
                self.err("noise.kind", "must be \"gaussian\" or \"hetero_uniform\"");
                None
            }
        }
    }

    fn sampling(&mut self, v: Option<&Value>, numel: usize) -> Option<SamplingSpec> {
        let obj = self.sub(v, "sampling", &["p", "n"])?;
        match (obj.get("p"), obj.get("n")) {
            (Some(p), None) => match p.as_f64().filter(|p| *p > 0.0 && *p <= 1.0) {
                Some(p) => Some(SamplingSpec::Rate(p)),
                None => {
                    self.err("sampling.p", "must lie in (0, 1]");
                    None
                }
            },
            (None, Some(n)) => match n.as_u64().filter(|n| *n >= 1) {
                Some(n) if numel > 0 && n as usize > 20 * numel => {
                    self.err("sampling.n", "must not exceed 20 times the number of entries");
                    None
                }
                Some(n) => Some(SamplingSpec::Count(n as usize)),
                None => {
                    self.err("sampling.n", "must be an integer >= 1");
                    None
                }
            },
            _ => {
                self.err("sampling", "give exactly one of p or n");
                None
            }
        }
    }

    fn init(&mut self, v: Option<&Value>) -> Option<InitSpec> {
        let obj = self.sub(v, "init", &["mode", "target_linf", "rgd_steps"])?;
        match obj.get("mode").and_then(Value::as_str) {
            Some("independent") => match obj.get("target_linf") {
                None => Some(InitSpec::Independent { target_linf: None }),
                Some(t) => match t.as_f64().filter(|t| t.is_finite() && *t >= 0.0) {
                    Some(t) => Some(InitSpec::Independent { target_linf: Some(t) }),
                    None => {
                        self.err("init.target_linf", "must be a number >= 0");
                        None
                    }
                },
            },
            Some("dependent") => match obj.get("rgd_steps").map(Value::as_u64) {
                None => Some(InitSpec::Dependent { rgd_steps: 30 }),
                Some(Some(k)) => Some(InitSpec::Dependent { rgd_steps: k as usize }),
                Some(None) => {
                    self.err("init.rgd_steps", "must be a non-negative integer");
                    None
                }
            },
            _ => {
                self.err("init.mode", "must be \"independent\" or \"dependent\"");
                None
            }
        }
    }

    fn cells(&mut self, v: Option<&Value>, key: &str, shape: &[usize]) -> Option<Vec<Vec<usize>>> {
        let cells = v.and_then(Value::as_array).and_then(|a| {
            a.iter()
                .map(|c| {
                    c.as_array()?.iter().map(|i| i.as_u64().filter(|i| *i >= 1).map(|i| i as usize)).collect()
                })
                .collect::<Option<Vec<Vec<usize>>>>()
        });
        match cells {
            Some(c) if !c.is_empty() => {
                let fits = |cell: &Vec<usize>| cell.len() == shape.len() && cell.iter().zip(shape).all(|(i, d)| i <= d);
                if !shape.is_empty() && !c.iter().all(fits) {
                    self.err(key, "every cell must be a 1-based index inside the shape");
                    return None;
                }
                Some(c)
            }
            _ => {
                self.err(key, "must be a non-empty array of 1-based index arrays");
                None
            }
        }
    }

    fn forms(&mut self, v: Option<&Value>, shape: &[usize]) -> Option<FormsSpec> {
        let obj = self.sub(v, "forms", &["kind", "cells", "anchors", "count", "support"])?;
        let count = |c: &mut Self, default: usize| match obj.get("count").map(Value::as_u64) {
            None => Some(default),
            Some(Some(n)) if n >= 1 => Some(n as usize),
            _ => {
                c.err("forms.count", "must be an integer >= 1");
                None
            }
        };
        match obj.get("kind").and_then(Value::as_str) {
            Some("cells") => Some(FormsSpec::Cells { cells: self.cells(obj.get("cells"), "forms.cells", shape)? }),
            Some("coverage_family") => {
                let anchors = match obj.get("anchors") {
                    None => vec![vec![1; shape.len().max(2)], {
                        let mut a = vec![1; shape.len().max(2)];
                        *a.last_mut().expect("nonempty") = 2;
                        a
                    }],
                    v => self.cells(v, "forms.anchors", shape)?,
                };
                Some(FormsSpec::CoverageFamily { anchors, count: count(self, 100)? })
            }
            Some("random_sparse") => match obj.get("support").and_then(Value::as_u64) {
                Some(s) if s >= 1 => Some(FormsSpec::RandomSparse { support: s as usize, count: count(self, 1)? }),
                _ => {
                    self.err("forms.support", "must be an integer >= 1");
                    None
                }
            },
            _ => {
                self.err("forms.kind", "must be \"cells\", \"coverage_family\" or \"random_sparse\"");
                None
            }
        }
    }
}
