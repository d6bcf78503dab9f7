//! Stream, model and run documents (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adf::AdfConfig;
use crate::arf::ForestConfig;
use crate::error::{Error, Result};
use crate::hoeffding::{Subspace, TreeConfig};
use crate::stream::{
    load_csv_stream, make_class_shift_stream, make_gradual_sigmoid_drift, make_incremental_drift,
    make_sudden_drift, Exhaustion, GaussianMixture, Instance, Shape, Stream, StreamMeta,
};

/// Reserved `source` value selecting the synthetic Gaussian generator.
pub const GAUSSIAN_SOURCE: &str = "gaussian";

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    #[default]
    None,
    Sudden,
    Sigmoid,
    Incremental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default)]
    pub mode: DriftMode,
    /// Change point (sudden) or drift centre, as an instance index.
    /// Defaults to the end of the first concept.
    pub center: Option<f64>,
    /// Drift width as a fraction of the whole output stream.
    #[serde(default = "default_width_frac")]
    pub width_frac: f64,
    /// Double a CSV source and rotate the labels of the second copy.
    /// Defaults to true when no second source is given.
    pub class_shift: Option<bool>,
    /// Second CSV concept.
    pub source_b: Option<String>,
}

fn default_width_frac() -> f64 {
    0.1
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            mode: DriftMode::None,
            center: None,
            width_frac: default_width_frac(),
            class_shift: None,
            source_b: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Distance of each class mean from the origin, in standard deviations.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_separation() -> f64 {
    3.0
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            separation: default_separation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    /// CSV path (relative to the document) or `"gaussian"`.
    pub source: String,
    pub class_count: usize,
    pub dims: usize,
    /// Vector length (dims = 1) or matrix side (dims = 2).
    pub shape: usize,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub seed: u64,
    /// Instance cap; required for generator sources.
    pub length: Option<usize>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub drift: DriftConfig,
}

/// Where and how wide the synthesized change is.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftManifest {
    pub mode: DriftMode,
    pub seed: u64,
    pub t0: Option<u64>,
    pub w: Option<u64>,
    pub length: u64,
}

impl StreamConfig {
    pub fn meta(&self) -> Result<StreamMeta> {
        if self.class_count == 0 {
            return Err(Error::config("class_count must be positive"));
        }
        Ok(StreamMeta::new(
            self.class_count,
            Shape::from_dims(self.dims, self.shape)?,
        ))
    }

    fn is_generator(&self) -> bool {
        self.source == GAUSSIAN_SOURCE
    }

    /// Builds the configured stream; relative paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<(Stream, DriftManifest)> {
        let meta = self.meta()?;
        let drift = &self.drift;
        if !(drift.width_frac > 0.0 && drift.width_frac.is_finite()) {
            return Err(Error::config("drift.width_frac must be positive"));
        }
        if self.is_generator() {
            return self.build_generator(meta);
        }
        if drift.mode == DriftMode::Incremental {
            return Err(Error::Unsupported(
                "incremental drift needs a parametric generator source, not a replayed file".into(),
            ));
        }
        let data = load_csv_stream(resolve(base, &self.source), meta, self.header, None)?;
        if drift.mode == DriftMode::None {
            let data = match self.length {
                Some(n) => data.into_iter().take(n).collect(),
                None => data,
            };
            let manifest = DriftManifest {
                mode: DriftMode::None,
                seed: self.seed,
                t0: None,
                w: None,
                length: data.len() as u64,
            };
            return Ok((Stream::from_vec(meta, data), manifest));
        }
        let (a, b) = match (&drift.source_b, drift.class_shift) {
            (Some(path), Some(true)) => {
                return Err(Error::config(format!(
                    "drift.class_shift conflicts with drift.source_b = {path:?}"
                )))
            }
            (Some(path), _) => {
                let b = load_csv_stream(resolve(base, path), meta, self.header, None)?;
                (data, b)
            }
            (None, Some(false)) => {
                return Err(Error::config(
                    "drift on a single CSV needs class_shift or a source_b",
                ))
            }
            (None, _) => {
                let mut doubled = make_class_shift_stream(&data, meta.class_count, self.seed)?;
                let b = doubled.split_off(data.len());
                (doubled, b)
            }
        };
        compose_drift(meta, a, b, drift, self.seed, self.length)
    }

    fn build_generator(&self, meta: StreamMeta) -> Result<(Stream, DriftManifest)> {
        let length = self
            .length
            .ok_or_else(|| Error::config("generator sources need a length"))?;
        let g0 = GaussianMixture::separated(meta.class_count, meta.shape, self.generator.separation)?;
        let g1 = g0.with_shifted_labels();
        let drift = &self.drift;
        let t0 = drift.center.unwrap_or(length as f64 / 2.0);
        let w = (drift.width_frac * length as f64).floor().max(1.0);
        let stream = match drift.mode {
            DriftMode::None => g0.stream(self.seed),
            DriftMode::Sudden => {
                make_sudden_drift(g0.stream(self.seed), g1.stream(self.seed ^ 1), t0 as usize)?
            }
            DriftMode::Sigmoid => make_gradual_sigmoid_drift(
                g0.stream(self.seed),
                g1.stream(self.seed ^ 1),
                t0,
                w,
                self.seed.wrapping_add(2),
                Exhaustion::Truncate,
            )?,
            DriftMode::Incremental => {
                let t1 = (t0 - w / 2.0).max(0.0) as usize;
                make_incremental_drift(&g0, &g1, t1, t1 + w as usize, self.seed)?
            }
        };
        let manifest = DriftManifest {
            mode: drift.mode,
            seed: self.seed,
            t0: (drift.mode != DriftMode::None).then_some(t0 as u64),
            w: matches!(drift.mode, DriftMode::Sigmoid | DriftMode::Incremental).then_some(w as u64),
            length: length as u64,
        };
        Ok((stream.limit(length), manifest))
    }
}

/// Joins two replayed concepts with a sudden or sigmoid change.
pub fn compose_drift(
    meta: StreamMeta,
    a: Vec<Instance>,
    b: Vec<Instance>,
    drift: &DriftConfig,
    seed: u64,
    length: Option<usize>,
) -> Result<(Stream, DriftManifest)> {
    let total = a.len() + b.len();
    let t0 = drift.center.unwrap_or(a.len() as f64);
    let w = (drift.width_frac * total as f64).floor().max(1.0);
    let a = Stream::from_vec(meta, a);
    let b = Stream::from_vec(meta, b);
    let (stream, w) = match drift.mode {
        DriftMode::Sudden => (make_sudden_drift(a, b, t0 as usize)?, None),
        DriftMode::Sigmoid => (
            make_gradual_sigmoid_drift(a, b, t0, w, seed.wrapping_add(2), Exhaustion::DrawFromOther)?,
            Some(w as u64),
        ),
        DriftMode::None | DriftMode::Incremental => {
            return Err(Error::config(format!("cannot compose {:?} drift", drift.mode)))
        }
    };
    let length = length.unwrap_or(total).min(total);
    let manifest = DriftManifest {
        mode: drift.mode,
        seed,
        t0: Some(t0 as u64),
        w,
        length: length as u64,
    };
    Ok((stream.limit(length), manifest))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    pub grace_period: Option<f64>,
    pub split_confidence: Option<f64>,
    pub tie_threshold: Option<f64>,
    pub split_points: Option<usize>,
    /// Candidate features per leaf; 0 means all. Forests default to
    /// `round(sqrt(M)) + 1`.
    pub subspace: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSection {
    pub lambda: Option<f64>,
    pub warning_delta: Option<f64>,
    pub drift_delta: Option<f64>,
    pub drift_detection: Option<bool>,
    pub parallel: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub depth: Option<usize>,
    /// Forests per sublayer, both input and cascade.
    pub forests: Option<usize>,
    pub input_forests: Option<usize>,
    pub cascade_forests: Option<usize>,
    pub trees: Option<usize>,
    pub append_original_inner: Option<bool>,
    #[serde(default)]
    pub carf: bool,
    pub seed: Option<u64>,
    pub parallel: Option<bool>,
    pub weight_delta: Option<f64>,
    #[serde(default)]
    pub tree: TreeSection,
    #[serde(default)]
    pub forest: ForestSection,
}

impl ModelConfig {
    /// Tree settings with explicit keys applied over `base`.
    pub fn tree_config(&self, base: TreeConfig) -> TreeConfig {
        let t = &self.tree;
        TreeConfig {
            grace_period: t.grace_period.unwrap_or(base.grace_period),
            split_confidence: t.split_confidence.unwrap_or(base.split_confidence),
            tie_threshold: t.tie_threshold.unwrap_or(base.tie_threshold),
            split_points: t.split_points.unwrap_or(base.split_points),
            subspace: t.subspace.map_or(base.subspace, |k| {
                if k == 0 {
                    Subspace::All
                } else {
                    Subspace::Fixed(k)
                }
            }),
            ..base
        }
    }

    pub fn forest_config(&self, default_trees: usize) -> ForestConfig {
        let d = ForestConfig::default();
        let f = &self.forest;
        ForestConfig {
            trees: self.trees.unwrap_or(default_trees),
            lambda: f.lambda.unwrap_or(d.lambda),
            warning_delta: f.warning_delta.unwrap_or(d.warning_delta),
            drift_delta: f.drift_delta.unwrap_or(d.drift_delta),
            drift_detection: f.drift_detection.unwrap_or(d.drift_detection),
            parallel: f.parallel.unwrap_or(d.parallel),
            tree: self.tree_config(d.tree),
        }
    }

    /// Deep model settings for a stream; explicit keys override the
    /// shape-based defaults.
    pub fn adf_config(&self, meta: StreamMeta, carf: bool) -> Result<AdfConfig> {
        let base = AdfConfig::for_stream(meta.shape, meta.class_count);
        let forests = self.forests;
        let mut cfg = AdfConfig {
            depth: self.depth.unwrap_or(base.depth),
            input_forests: self.input_forests.or(forests).unwrap_or(base.input_forests),
            cascade_forests: self.cascade_forests.or(forests).unwrap_or(base.cascade_forests),
            forest: self.forest_config(base.forest.trees),
            append_original_inner: self.append_original_inner.unwrap_or(base.append_original_inner),
            seed: self.seed.unwrap_or(base.seed),
            parallel: self.parallel.unwrap_or(base.parallel),
            weight_delta: self.weight_delta.unwrap_or(base.weight_delta),
            ..base
        };
        if carf || self.carf {
            cfg = cfg.into_carf();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Adf,
    Carf,
    Arf,
    Hoeffding,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Adf => "adf",
            LearnerKind::Carf => "carf",
            LearnerKind::Arf => "arf",
            LearnerKind::Hoeffding => "hoeffding",
        }
    }
}

/// One evaluation job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub stream: PathBuf,
    pub model: Option<PathBuf>,
    pub learner: LearnerKind,
    pub out: PathBuf,
    #[serde(default = "default_emit_every")]
    pub emit_every: usize,
    pub seed: Option<u64>,
    /// Algorithm label in summaries; defaults to the learner kind.
    pub name: Option<String>,
    #[serde(default = "default_timing")]
    pub timing: bool,
}

fn default_emit_every() -> usize {
    100
}

fn default_timing() -> bool {
    true
}

impl RunManifest {
    /// Loads a manifest, resolving its paths against the document's folder.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: RunManifest = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut m.stream, &mut m.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(model) = m.model.as_mut() {
            if model.is_relative() {
                *model = base.join(&*model);
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.emit_every == 0 {
            return Err(Error::config("emit_every must be positive"));
        }
        if !self.stream.is_file() {
            return Err(Error::config(format!(
                "stream config {} not found",
                self.stream.display()
            )));
        }
        if let Some(model) = &self.model {
            if !model.is_file() {
                return Err(Error::config(format!(
                    "model config {} not found",
                    model.display()
                )));
            }
        }
        Ok(())
    }

    pub fn algorithm(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.learner.name().to_string())
    }

    pub fn stream_name(&self) -> String {
        self.stream
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "stream".into())
    }
}
