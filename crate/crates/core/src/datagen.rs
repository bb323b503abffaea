//! Synthetic instances with a planted classifier/rejector pair, and a
//! multiclass instance with a class-grouped expert.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution as _, Normal, StandardNormal};

use crate::defer::{augmented_dot, ClassId, ClassifierWeights, DeferDataset, HalfspacePair};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, streams, Rng};

/// Each side of a planted halfspace keeps at least this share of the mass.
pub const MIN_REGION_MASS: f64 = 0.1;
const PILOT_SAMPLES: usize = 4000;
const MAX_HALFSPACE_TRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureDistribution {
    /// `Unif(0, upper)^d`.
    Uniform { upper: f64 },
    /// Equally weighted Gaussians with means in `Unif(0, upper)^d` and
    /// per-coordinate standard deviations in `Unif(0, 1) * upper`.
    GaussianMixture { components: usize, upper: f64 },
}

impl FeatureDistribution {
    pub fn upper(&self) -> f64 {
        match *self {
            Self::Uniform { upper } | Self::GaussianMixture { upper, .. } => upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub n: usize,
    pub distribution: FeatureDistribution,
    pub p_m: f64,
    pub p_h0: f64,
    pub p_h1: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            n: 100,
            distribution: FeatureDistribution::Uniform { upper: 1.0 },
            p_m: 0.0,
            p_h0: 0.3,
            p_h1: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return invalid("dim must be at least 1");
        }
        if self.n == 0 {
            return invalid("n must be at least 1");
        }
        for (name, p) in [("p_m", self.p_m), ("p_h0", self.p_h0), ("p_h1", self.p_h1)] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        let upper = self.distribution.upper();
        if !(upper > 0.0 && upper.is_finite()) {
            return invalid(format!("upper must be positive and finite, got {upper}"));
        }
        if let FeatureDistribution::GaussianMixture { components: 0, .. } = self.distribution {
            return invalid("gaussian mixture needs at least one component");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    pub dataset: DeferDataset,
    pub planted_pair: HalfspacePair,
}

#[derive(Debug, Clone)]
struct Component {
    mean: Vec<f64>,
    std: Vec<f64>,
}

/// The population behind a synthetic config: feature law, planted pair and
/// noise levels. Draws of any size come from it without re-planting.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    config: SyntheticConfig,
    components: Vec<Component>,
    planted: HalfspacePair,
}

impl SyntheticSource {
    pub fn new(config: &SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(config.seed, streams::PLANTED);
        let components = match config.distribution {
            FeatureDistribution::Uniform { .. } => Vec::new(),
            FeatureDistribution::GaussianMixture { components, upper } => (0..components)
                .map(|_| Component {
                    mean: (0..config.dim).map(|_| rng.gen_range(0.0..upper)).collect(),
                    std: (0..config.dim).map(|_| rng.gen::<f64>() * upper).collect(),
                })
                .collect(),
        };
        let mut source = Self {
            config: config.clone(),
            components,
            planted: HalfspacePair::new(
                ClassifierWeights::Binary(vec![0.0; config.dim + 1]),
                vec![0.0; config.dim + 1],
            )?,
        };
        let pilot: Vec<Vec<f64>> = (0..PILOT_SAMPLES)
            .map(|_| source.draw_x(&mut rng))
            .collect();
        let classifier = source.plant_halfspace(&pilot, &mut rng)?;
        let rejector = source.plant_halfspace(&pilot, &mut rng)?;
        source.planted = HalfspacePair::new(ClassifierWeights::Binary(classifier), rejector)?;
        Ok(source)
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn planted_pair(&self) -> &HalfspacePair {
        &self.planted
    }

    /// `n` fresh points from the given stream of this source's seed.
    pub fn sample(&self, n: usize, stream: u64) -> Result<DeferDataset> {
        if n == 0 {
            return invalid("sample size must be at least 1");
        }
        let mut rng = rng::stream(self.config.seed, stream);
        let d = self.config.dim;
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut human = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.draw_x(&mut rng);
            let (y, h) = self.draw_labels(&x, &mut rng);
            features.extend_from_slice(&x);
            labels.push(y);
            human.push(h);
        }
        DeferDataset::from_flat(features, d, labels, human, 2)
    }

    /// The training draw described by the config.
    pub fn instance(&self) -> Result<PlantedInstance> {
        Ok(PlantedInstance {
            dataset: self.sample(self.config.n, streams::DATA)?,
            planted_pair: self.planted.clone(),
        })
    }

    /// A test draw independent of the training draw.
    pub fn heldout(&self, n: usize) -> Result<DeferDataset> {
        self.sample(n, streams::HELDOUT)
    }

    fn draw_x(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.config.dim;
        match self.config.distribution {
            FeatureDistribution::Uniform { upper } => {
                (0..d).map(|_| rng.gen_range(0.0..upper)).collect()
            }
            FeatureDistribution::GaussianMixture { .. } => {
                let c = &self.components[rng.gen_range(0..self.components.len())];
                (0..d)
                    .map(|j| {
                        let z: f64 = rng.sample(StandardNormal);
                        c.mean[j] + c.std[j] * z
                    })
                    .collect()
            }
        }
    }

    fn draw_labels(&self, x: &[f64], rng: &mut Rng) -> (ClassId, ClassId) {
        // fixed number of draws per point keeps streams aligned across configs
        let u_noise: f64 = rng.gen();
        let u_label: bool = rng.gen();
        let u_human: f64 = rng.gen();
        let random_label = usize::from(u_label);
        let deferred = augmented_dot(&self.planted.rejector, x) >= 0.0;
        let (y, p_h) = if deferred {
            (random_label, self.config.p_h1)
        } else {
            let m = self.planted.classifier.predict(x);
            let y = if u_noise < self.config.p_m {
                random_label
            } else {
                m
            };
            (y, self.config.p_h0)
        };
        let h = if u_human < p_h { 1 - y } else { y };
        (y, h)
    }

    /// Unit-norm `(w, b)` with `w ~ N(0, I)` and the hyperplane through a
    /// random pilot point, redrawn until both sides hold enough pilot mass.
    fn plant_halfspace(&self, pilot: &[Vec<f64>], rng: &mut Rng) -> Result<Vec<f64>> {
        let d = self.config.dim;
        for _ in 0..MAX_HALFSPACE_TRIES {
            let mut w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            w.iter_mut().for_each(|v| *v /= norm);
            let anchor = &pilot[rng.gen_range(0..pilot.len())];
            let bias = -w.iter().zip(anchor).map(|(a, b)| a * b).sum::<f64>();
            w.push(bias);
            let positive = pilot.iter().filter(|x| augmented_dot(&w, x) >= 0.0).count();
            let share = positive as f64 / pilot.len() as f64;
            if (MIN_REGION_MASS..=1.0 - MIN_REGION_MASS).contains(&share) {
                let full = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                w.iter_mut().for_each(|v| *v /= full);
                return Ok(w);
            }
        }
        Err(Error::Internal(
            "could not plant a halfspace with both regions above the mass floor".into(),
        ))
    }
}

/// Training draw of `config` together with its planted pair.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<PlantedInstance> {
    SyntheticSource::new(config)?.instance()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedExpertConfig {
    pub dim: usize,
    pub n: usize,
    pub num_classes: usize,
    /// The expert is perfect on classes `0..k`.
    pub k: usize,
    /// Standard deviation of the class means; points have unit noise.
    pub separation: f64,
    pub seed: u64,
}

impl GroupedExpertConfig {
    pub const DEFAULT_SEPARATION: f64 = 0.6;

    pub fn new(dim: usize, n: usize, num_classes: usize, k: usize, seed: u64) -> Self {
        Self {
            dim,
            n,
            num_classes,
            k,
            separation: Self::DEFAULT_SEPARATION,
            seed,
        }
    }
}

/// Gaussian blobs, one per class, with classes balanced up to rounding.
/// The expert answers `y` when `y < k` and guesses uniformly otherwise.
pub fn generate_grouped_expert(
    dim: usize,
    n: usize,
    num_classes: usize,
    k: usize,
    seed: u64,
) -> Result<DeferDataset> {
    generate_grouped_expert_with(&GroupedExpertConfig::new(dim, n, num_classes, k, seed))
}

pub fn generate_grouped_expert_with(cfg: &GroupedExpertConfig) -> Result<DeferDataset> {
    if cfg.k > cfg.num_classes {
        return invalid(format!(
            "expert strength K={} exceeds the class count C={}",
            cfg.k, cfg.num_classes
        ));
    }
    if cfg.num_classes < 2 || cfg.dim == 0 || cfg.n == 0 {
        return invalid("grouped expert needs C >= 2, d >= 1 and n >= 1");
    }
    if !(cfg.separation >= 0.0 && cfg.separation.is_finite()) {
        return invalid("separation must be finite and non-negative");
    }
    let spread =
        Normal::new(0.0, cfg.separation).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut planted = rng::stream(cfg.seed, streams::PLANTED);
    let means: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| (0..cfg.dim).map(|_| spread.sample(&mut planted)).collect())
        .collect();

    let mut rng = rng::stream(cfg.seed, streams::DATA);
    let mut labels: Vec<ClassId> = (0..cfg.n).map(|i| i % cfg.num_classes).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(cfg.n * cfg.dim);
    let mut human = Vec::with_capacity(cfg.n);
    for &y in &labels {
        for j in 0..cfg.dim {
            let z: f64 = rng.sample(StandardNormal);
            features.push(means[y][j] + z);
        }
        let guess = rng.gen_range(0..cfg.num_classes);
        human.push(if y < cfg.k { y } else { guess });
    }
    DeferDataset::from_flat(features, cfg.dim, labels, human, cfg.num_classes)
}

/// Sidecar `key=value` record for a generated instance.
pub fn metadata(config: &SyntheticConfig, planted: &HalfspacePair) -> String {
    let join = |w: &[f64]| {
        w.iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut s = String::new();
    let _ = writeln!(s, "seed={}", config.seed);
    let _ = writeln!(s, "dim={}", config.dim);
    let _ = writeln!(s, "n={}", config.n);
    match config.distribution {
        FeatureDistribution::Uniform { upper } => {
            let _ = writeln!(s, "distribution=uniform");
            let _ = writeln!(s, "upper={upper:?}");
        }
        FeatureDistribution::GaussianMixture { components, upper } => {
            let _ = writeln!(s, "distribution=gaussian_mixture");
            let _ = writeln!(s, "components={components}");
            let _ = writeln!(s, "upper={upper:?}");
        }
    }
    let _ = writeln!(s, "p_m={:?}", config.p_m);
    let _ = writeln!(s, "p_h0={:?}", config.p_h0);
    let _ = writeln!(s, "p_h1={:?}", config.p_h1);
    if let ClassifierWeights::Binary(w) = &planted.classifier {
        let _ = writeln!(s, "planted_classifier={}", join(w));
    }
    let _ = writeln!(s, "planted_rejector={}", join(&planted.rejector));
    s
}

/// Planted pair recorded in a sidecar produced by [`metadata`].
pub fn planted_from_metadata(text: &str) -> Result<HalfspacePair> {
    let mut classifier = None;
    let mut rejector = None;
    for (no, line) in text.lines().enumerate() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let parse = || -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: no + 1,
                        msg: format!("bad weight {t:?}"),
                    })
                })
                .collect()
        };
        match key.trim() {
            "planted_classifier" => classifier = Some(parse()?),
            "planted_rejector" => rejector = Some(parse()?),
            _ => {}
        }
    }
    match (classifier, rejector) {
        (Some(m), Some(r)) => HalfspacePair::new(ClassifierWeights::Binary(m), r),
        _ => invalid("metadata lacks planted_classifier or planted_rejector"),
    }
}
