//! Synthetic logit generator: class-conditional own-logit distributions
//! with an OoD mode sitting below them, for desk-scale experiments.
//!
//! In-distribution samples draw a true class uniformly, give it its
//! class-specific own-logit distribution, and fill the remaining columns
//! from a shared off-class distribution. OoD samples come in two flavors:
//! fully i.i.d. logits, or a variant where one column partially tracks a
//! class mean (which is what trained networks produce for near-distribution
//! outliers, and what gives per-predicted-class OoD scores class-dependent
//! structure).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{LogitRecord, Origin};

/// How OoD logit vectors are generated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OodModel {
    /// Every logit drawn i.i.d. from Normal(ood_mean, ood_std).
    #[default]
    Iid,
    /// One uniformly chosen column drawn from
    /// Normal(ood_mean + pull * (class_mean - ood_mean), ood_std); the
    /// remaining columns use the off-class distribution.
    ClassTracking { pull: f64 },
}

/// Sample counts for the three generated splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub in_test: usize,
    pub ood_test: usize,
}

/// Generator parameters. All standard deviations must be positive and the
/// per-class lists must have length `num_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    /// Own-class logit mean per class, in logit units.
    pub class_mean: Vec<f64>,
    /// Own-class logit standard deviation per class.
    pub class_std: Vec<f64>,
    pub off_mean: f64,
    pub off_std: f64,
    pub ood_mean: f64,
    pub ood_std: f64,
    #[serde(default)]
    pub ood_model: OodModel,
    pub counts: SplitCounts,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidParam("num_classes must be >= 1".into()));
        }
        if self.class_mean.len() != self.num_classes || self.class_std.len() != self.num_classes {
            return Err(Error::Shape {
                expected: self.num_classes,
                actual: self.class_mean.len().min(self.class_std.len()),
            });
        }
        let stds = self
            .class_std
            .iter()
            .copied()
            .chain([self.off_std, self.ood_std]);
        for s in stds {
            if !(s > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "standard deviations must be > 0, got {s}"
                )));
            }
        }
        if self.counts.train == 0 || self.counts.in_test == 0 || self.counts.ood_test == 0 {
            return Err(Error::InvalidParam("split counts must be >= 1".into()));
        }
        if let OodModel::ClassTracking { pull } = self.ood_model {
            if !pull.is_finite() {
                return Err(Error::InvalidParam("pull must be finite".into()));
            }
        }
        Ok(())
    }

    /// The pinned desk-scale benchmark: three classes whose own-logit
    /// distributions peak at different heights and spreads, an OoD mode
    /// near the weakest classes, and OoD samples that partially track the
    /// predicted class.
    pub fn fig1_like(seed: u64) -> Self {
        Self {
            num_classes: 3,
            class_mean: vec![10.4, 19.6, 10.6],
            class_std: vec![2.8, 6.8, 1.0],
            off_mean: 9.3,
            off_std: 1.1,
            ood_mean: 9.3,
            ood_std: 1.7,
            ood_model: OodModel::ClassTracking { pull: 0.57 },
            counts: SplitCounts {
                train: 5000,
                in_test: 2000,
                ood_test: 2000,
            },
            seed,
        }
    }
}

/// The three generated splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<LogitRecord>,
    pub in_test: Vec<LogitRecord>,
    pub ood_test: Vec<LogitRecord>,
}

/// Logits are quantized through `f32` so generated data is identical to
/// what survives a file round trip.
fn q(v: f64) -> f32 {
    v as f32
}

/// Generate the three splits deterministically from `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_classes;
    let off = Normal::new(config.off_mean, config.off_std).unwrap();
    let own: Vec<Normal<f64>> = (0..n)
        .map(|j| Normal::new(config.class_mean[j], config.class_std[j]).unwrap())
        .collect();

    let in_split = |count: usize, origin: Origin, rng: &mut ChaCha8Rng| -> Result<Vec<LogitRecord>> {
        (0..count)
            .map(|_| {
                let label = rng.gen_range(0..n);
                let logits: Vec<f32> = (0..n)
                    .map(|j| {
                        if j == label {
                            q(own[j].sample(rng))
                        } else {
                            q(off.sample(rng))
                        }
                    })
                    .collect();
                LogitRecord::new(logits, Some(label), origin)
            })
            .collect()
    };

    let train = in_split(config.counts.train, Origin::Train, &mut rng)?;
    let in_test = in_split(config.counts.in_test, Origin::InTest, &mut rng)?;

    let ood_test: Vec<LogitRecord> = match config.ood_model {
        OodModel::Iid => {
            let dist = Normal::new(config.ood_mean, config.ood_std).unwrap();
            (0..config.counts.ood_test)
                .map(|_| {
                    let logits: Vec<f32> = (0..n).map(|_| q(dist.sample(&mut rng))).collect();
                    LogitRecord::new(logits, None, Origin::OodTest)
                })
                .collect::<Result<_>>()?
        }
        OodModel::ClassTracking { pull } => (0..config.counts.ood_test)
            .map(|_| {
                let pseudo = rng.gen_range(0..n);
                let spike_mean =
                    config.ood_mean + pull * (config.class_mean[pseudo] - config.ood_mean);
                let spike = Normal::new(spike_mean, config.ood_std).unwrap();
                let logits: Vec<f32> = (0..n)
                    .map(|j| {
                        if j == pseudo {
                            q(spike.sample(&mut rng))
                        } else {
                            q(off.sample(&mut rng))
                        }
                    })
                    .collect();
                LogitRecord::new(logits, None, Origin::OodTest)
            })
            .collect::<Result<_>>()?,
    };

    Ok(SynthDataset {
        train,
        in_test,
        ood_test,
    })
}
