//! Stream instances, CSV ingestion, zero padding and drift synthesis.
//!
//! A [`Stream`] is a single-consumer iterator of [`Instance`]s tagged with
//! the metadata (class count and shape) every consumer needs up front.
//! Drift operators take one or two streams and compose a new one lazily.

use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Layout of an instance's feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "size")]
pub enum Shape {
    /// A flat vector of the given length.
    Vec(usize),
    /// A square matrix of the given side, stored row-major.
    Mat(usize),
}

impl Shape {
    pub fn from_dims(dims: usize, size: usize) -> Result<Self> {
        match dims {
            1 => Ok(Shape::Vec(size)),
            2 => Ok(Shape::Mat(size)),
            other => Err(Error::config(format!("dims must be 1 or 2, got {other}"))),
        }
    }

    /// Number of feature values.
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vec(l) => l,
            Shape::Mat(s) => s * s,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        match self {
            Shape::Vec(_) => 1,
            Shape::Mat(_) => 2,
        }
    }

    /// Vector length or matrix side.
    pub fn extent(&self) -> usize {
        match *self {
            Shape::Vec(l) | Shape::Mat(l) => l,
        }
    }

    /// Shape after zero padding to the next power of two (length or side).
    pub fn padded(&self) -> Shape {
        match *self {
            Shape::Vec(l) => Shape::Vec(l.max(1).next_power_of_two()),
            Shape::Mat(s) => Shape::Mat(s.max(1).next_power_of_two()),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vec(l) => write!(f, "vec[{l}]"),
            Shape::Mat(s) => write!(f, "mat[{s}x{s}]"),
        }
    }
}

/// One labeled stream element.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<f64>,
    pub shape: Shape,
    pub label: usize,
}

impl Instance {
    pub fn new(features: Vec<f64>, shape: Shape, label: usize) -> Result<Self> {
        if features.len() != shape.len() {
            return Err(Error::input(format!(
                "{} features do not fit shape {shape}",
                features.len()
            )));
        }
        Ok(Instance {
            features,
            shape,
            label,
        })
    }

    pub fn vector(features: Vec<f64>, label: usize) -> Self {
        let shape = Shape::Vec(features.len());
        Instance {
            features,
            shape,
            label,
        }
    }
}

/// Zero-pads an instance to a power-of-two length (vectors) or side
/// (matrices). Vectors get trailing zeros; matrices grow on the right and
/// bottom. Already padded instances are returned unchanged.
pub fn pad_instance(x: &Instance) -> Instance {
    let padded = x.shape.padded();
    if padded == x.shape {
        return x.clone();
    }
    let features = match (x.shape, padded) {
        (Shape::Vec(_), Shape::Vec(target)) => {
            let mut f = x.features.clone();
            f.resize(target, 0.0);
            f
        }
        (Shape::Mat(side), Shape::Mat(target)) => {
            let mut f = vec![0.0; target * target];
            for r in 0..side {
                f[r * target..r * target + side].copy_from_slice(&x.features[r * side..(r + 1) * side]);
            }
            f
        }
        _ => unreachable!("padding preserves dimensionality"),
    };
    Instance {
        features,
        shape: padded,
        label: x.label,
    }
}

/// Class count and shape shared by every instance of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub class_count: usize,
    pub shape: Shape,
}

impl StreamMeta {
    pub fn new(class_count: usize, shape: Shape) -> Self {
        StreamMeta { class_count, shape }
    }

    fn ensure_compatible(&self, other: &StreamMeta) -> Result<()> {
        if self != other {
            return Err(Error::config(format!(
                "incompatible streams: {} classes / {} vs {} classes / {}",
                self.class_count, self.shape, other.class_count, other.shape
            )));
        }
        Ok(())
    }
}

/// A single-consumer sequence of instances.
pub struct Stream {
    meta: StreamMeta,
    source: Box<dyn Iterator<Item = Instance> + Send>,
}

impl Stream {
    pub fn new(meta: StreamMeta, source: impl Iterator<Item = Instance> + Send + 'static) -> Self {
        Stream {
            meta,
            source: Box::new(source),
        }
    }

    pub fn from_vec(meta: StreamMeta, instances: Vec<Instance>) -> Self {
        Stream::new(meta, instances.into_iter())
    }

    pub fn meta(&self) -> StreamMeta {
        self.meta
    }

    /// Caps the stream at `n` instances.
    pub fn limit(self, n: usize) -> Stream {
        let meta = self.meta;
        Stream::new(meta, self.source.take(n))
    }
}

impl Iterator for Stream {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        self.source.next()
    }
}

impl fmt::Debug for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stream").field("meta", &self.meta).finish()
    }
}

/// Parses `f_1,...,f_L,label` rows. Row and field numbers in errors are
/// 1-based and count physical lines, including a skipped header.
pub fn read_csv<R: BufRead>(reader: R, meta: StreamMeta, header: bool) -> Result<Vec<Instance>> {
    let arity = meta.shape.len();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let row = idx + 1;
        if header && idx == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != arity + 1 {
            return Err(Error::Parse {
                row,
                field: fields.len().min(arity + 1),
                message: format!("expected {} fields, found {}", arity + 1, fields.len()),
            });
        }
        let mut features = Vec::with_capacity(arity);
        for (f, text) in fields[..arity].iter().enumerate() {
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                row,
                field: f + 1,
                message: format!("non-numeric value {text:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    field: f + 1,
                    message: format!("missing or non-finite value {text:?}"),
                });
            }
            features.push(value);
        }
        let label_text = fields[arity];
        let label: usize = label_text.parse().map_err(|_| Error::Parse {
            row,
            field: arity + 1,
            message: format!("label {label_text:?} is not a class index"),
        })?;
        if label >= meta.class_count {
            return Err(Error::Parse {
                row,
                field: arity + 1,
                message: format!("label {label} not below class count {}", meta.class_count),
            });
        }
        out.push(Instance {
            features,
            shape: meta.shape,
            label,
        });
    }
    Ok(out)
}

/// Loads a CSV stream file. When `expected` is given and the file holds
/// fewer rows, the shorter stream is returned and the count is logged.
pub fn load_csv_stream(
    path: impl AsRef<Path>,
    meta: StreamMeta,
    header: bool,
    expected: Option<usize>,
) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut instances = read_csv(BufReader::new(file), meta, header)?;
    if let Some(n) = expected {
        if instances.len() < n {
            log::warn!(
                "{}: stream ended early after {} of {n} instances",
                path.display(),
                instances.len()
            );
        }
        instances.truncate(n);
    }
    Ok(instances)
}

/// Emits `a` for indices below `t`, then `b` from its start.
pub fn make_sudden_drift(a: Stream, b: Stream, t: usize) -> Result<Stream> {
    a.meta.ensure_compatible(&b.meta)?;
    let meta = a.meta;
    Ok(Stream::new(meta, a.take(t).chain(b)))
}

/// Probability of drawing from the new concept at index `t` for a sigmoid
/// drift centred at `t0` with width `w`.
pub fn sigmoid_drift_probability(t: f64, t0: f64, w: f64) -> f64 {
    1.0 / (1.0 + (-4.0 * (t - t0) / w).exp())
}

/// What a mixing drift does once the source it picked has run dry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exhaustion {
    /// Stop the output stream and log a warning.
    #[default]
    Truncate,
    /// Keep drawing from whichever source still has instances.
    DrawFromOther,
}

struct SigmoidMix {
    a: Stream,
    b: Stream,
    t: usize,
    t0: f64,
    w: f64,
    rng: ChaCha8Rng,
    policy: Exhaustion,
    done: bool,
}

impl Iterator for SigmoidMix {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        if self.done {
            return None;
        }
        let p = sigmoid_drift_probability(self.t as f64, self.t0, self.w);
        let take_b = self.rng.random::<f64>() < p;
        let (first, second) = if take_b {
            (&mut self.b, &mut self.a)
        } else {
            (&mut self.a, &mut self.b)
        };
        let picked = match first.next() {
            Some(x) => Some(x),
            None => match self.policy {
                Exhaustion::Truncate => {
                    log::warn!(
                        "sigmoid drift truncated at index {}: source {} exhausted",
                        self.t,
                        if take_b { "b" } else { "a" }
                    );
                    None
                }
                Exhaustion::DrawFromOther => second.next(),
            },
        };
        match picked {
            Some(x) => {
                self.t += 1;
                Some(x)
            }
            None => {
                self.done = true;
                None
            }
        }
    }
}

/// Gradual drift: index `t` draws from `b` with the sigmoid probability
/// and from `a` otherwise. Each source advances only when drawn from.
pub fn make_gradual_sigmoid_drift(
    a: Stream,
    b: Stream,
    t0: f64,
    w: f64,
    seed: u64,
    policy: Exhaustion,
) -> Result<Stream> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::config(format!("drift width must be positive, got {w}")));
    }
    a.meta.ensure_compatible(&b.meta)?;
    let meta = a.meta;
    Ok(Stream::new(
        meta,
        SigmoidMix {
            a,
            b,
            t: 0,
            t0,
            w,
            rng: rng_from(seed),
            policy,
            done: false,
        },
    ))
}

/// Mixing weight of the new concept at index `j` of an incremental drift
/// running from `t1` to `t2`.
pub fn incremental_mixing_weight(j: usize, t1: usize, t2: usize) -> f64 {
    if j < t1 {
        0.0
    } else if j >= t2 {
        1.0
    } else {
        (j - t1) as f64 / (t2 - t1) as f64
    }
}

/// Incremental drift between two parametric generators. Inside `[t1, t2)`
/// each instance comes from `g1` when a uniform draw falls below the
/// linear mixing weight, else from `g0`. The stream is unbounded.
pub fn make_incremental_drift(
    g0: &GaussianMixture,
    g1: &GaussianMixture,
    t1: usize,
    t2: usize,
    seed: u64,
) -> Result<Stream> {
    if t1 >= t2 {
        return Err(Error::config(format!(
            "incremental drift needs t1 < t2, got {t1} >= {t2}"
        )));
    }
    g0.meta().ensure_compatible(&g1.meta())?;
    let meta = g0.meta();
    let g0 = g0.clone();
    let g1 = g1.clone();
    let mut rng = rng_from(seed);
    let source = (0usize..).map(move |j| {
        let alpha = incremental_mixing_weight(j, t1, t2);
        let u: f64 = rng.random();
        if u < alpha {
            g1.sample(&mut rng)
        } else {
            g0.sample(&mut rng)
        }
    });
    Ok(Stream::new(meta, source))
}

/// Doubles a dataset: a seeded shuffle of it, followed by a second shuffle
/// (seed + 1) whose labels are rotated `l -> (l + 1) mod c`.
pub fn make_class_shift_stream(dataset: &[Instance], class_count: usize, seed: u64) -> Result<Vec<Instance>> {
    if class_count < 2 {
        return Err(Error::config("class shift needs at least two classes"));
    }
    double_dataset(dataset, class_count, seed, true)
}

/// Two independently shuffled copies of a dataset (seeds `seed` and
/// `seed + 1`), the second optionally with labels rotated by one class.
pub fn double_dataset(
    dataset: &[Instance],
    class_count: usize,
    seed: u64,
    shift: bool,
) -> Result<Vec<Instance>> {
    if dataset.is_empty() {
        return Err(Error::input("cannot double an empty dataset"));
    }
    let mut first = dataset.to_vec();
    first.shuffle(&mut rng_from(seed));
    let mut second = dataset.to_vec();
    second.shuffle(&mut rng_from(seed.wrapping_add(1)));
    if shift {
        for x in &mut second {
            x.label = (x.label + 1) % class_count;
        }
    }
    first.extend(second);
    Ok(first)
}

/// Diagonal Gaussian component for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub prior: f64,
}

/// Class-conditional diagonal Gaussian generator; the component at index
/// `k` produces label `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    classes: Vec<GaussianClass>,
    shape: Shape,
    cumulative: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(classes: Vec<GaussianClass>, shape: Shape) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::config("gaussian mixture needs at least one class"));
        }
        let dim = shape.len();
        let mut total = 0.0;
        for (k, c) in classes.iter().enumerate() {
            if c.mean.len() != dim || c.std.len() != dim {
                return Err(Error::config(format!(
                    "class {k}: parameters do not match {dim} features"
                )));
            }
            if c.std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::config(format!(
                    "class {k}: degenerate covariance (std entries must be > 0)"
                )));
            }
            if !(c.prior >= 0.0 && c.prior.is_finite()) {
                return Err(Error::config(format!("class {k}: invalid prior {}", c.prior)));
            }
            total += c.prior;
        }
        if total <= 0.0 {
            return Err(Error::config("class priors sum to zero"));
        }
        let mut acc = 0.0;
        let cumulative = classes
            .iter()
            .map(|c| {
                acc += c.prior / total;
                acc
            })
            .collect();
        Ok(GaussianMixture {
            classes,
            shape,
            cumulative,
        })
    }

    /// Equal-prior classes with unit variance whose means sit on distinct
    /// coordinate axes, `separation` apart from the origin.
    pub fn separated(class_count: usize, shape: Shape, separation: f64) -> Result<Self> {
        let dim = shape.len();
        if dim == 0 {
            return Err(Error::config("gaussian mixture needs at least one feature"));
        }
        let classes = (0..class_count)
            .map(|k| {
                let mut mean = vec![0.0; dim];
                let axis = k % dim;
                let sign = if (k / dim).is_multiple_of(2) { 1.0 } else { -1.0 };
                mean[axis] = sign * separation;
                GaussianClass {
                    mean,
                    std: vec![1.0; dim],
                    prior: 1.0,
                }
            })
            .collect();
        GaussianMixture::new(classes, shape)
    }

    pub fn meta(&self) -> StreamMeta {
        StreamMeta::new(self.classes.len(), self.shape)
    }

    pub fn classes(&self) -> &[GaussianClass] {
        &self.classes
    }

    /// The same components with labels rotated by one: instances that used
    /// to carry label `k` now carry `(k + 1) mod c`.
    pub fn with_shifted_labels(&self) -> GaussianMixture {
        let c = self.classes.len();
        let classes = (0..c).map(|l| self.classes[(l + c - 1) % c].clone()).collect();
        GaussianMixture::new(classes, self.shape).expect("rotation keeps parameters valid")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Instance {
        let u: f64 = rng.random();
        let label = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.classes.len() - 1);
        let class = &self.classes[label];
        let features = class
            .mean
            .iter()
            .zip(&class.std)
            .map(|(&m, &s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect();
        Instance {
            features,
            shape: self.shape,
            label,
        }
    }

    /// Unbounded deterministic stream for `seed`.
    pub fn stream(&self, seed: u64) -> Stream {
        let g = self.clone();
        let mut rng = rng_from(seed);
        Stream::new(self.meta(), std::iter::repeat_with(move || g.sample(&mut rng)))
    }
}
