//! Per-class logit statistics and norm-scaling.
//!
//! Norm-scaling is a per-class Z-score normalization of classifier logits:
//! each class column is centered on its training-set mean and divided by its
//! training-set standard deviation. The statistics can be frozen after
//! fitting or updated online as test samples arrive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::LogitRecord;

/// Default floor for the scaling divisor when a column has zero spread.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Per-class logit mean and standard deviation fitted on a training set.
///
/// `sigma` is the population standard deviation (divide by the set size,
/// not size minus one). Immutable after fitting; safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub num_classes: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sample_count: usize,
}

impl ClassStats {
    /// Validate the cross-field invariants after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.num_classes || self.sigma.len() != self.num_classes {
            return Err(Error::Shape {
                expected: self.num_classes,
                actual: self.mu.len().min(self.sigma.len()),
            });
        }
        if self.sample_count == 0 {
            return Err(Error::Fit("sample_count must be >= 1".into()));
        }
        if let Some(j) = self.sigma.iter().position(|&s| !(s >= 0.0)) {
            return Err(Error::InvalidParam(format!(
                "sigma[{j}] must be non-negative, got {}",
                self.sigma[j]
            )));
        }
        Ok(())
    }
}

/// Statistics file schema: `ClassStats` plus the divisor floor used when
/// scaling. Serialized as JSON with full round-trip precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub num_classes: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sample_count: usize,
    pub epsilon: f64,
}

impl StatsFile {
    pub fn new(stats: &ClassStats, epsilon: f64) -> Self {
        Self {
            num_classes: stats.num_classes,
            mu: stats.mu.clone(),
            sigma: stats.sigma.clone(),
            sample_count: stats.sample_count,
            epsilon,
        }
    }

    pub fn into_stats(self) -> Result<(ClassStats, f64)> {
        let stats = ClassStats {
            num_classes: self.num_classes,
            mu: self.mu,
            sigma: self.sigma,
            sample_count: self.sample_count,
        };
        stats.validate()?;
        Ok((stats, self.epsilon))
    }
}

/// Sum in a canonical order so the result does not depend on how the
/// caller happened to order the records.
fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Fit per-class mean and population standard deviation over a training set.
///
/// Every class column is fitted on the whole set, not on per-predicted-class
/// subsets. Deterministic and independent of record order.
pub fn fit_class_stats(train: &[LogitRecord]) -> Result<ClassStats> {
    let first = train
        .first()
        .ok_or_else(|| Error::Fit("cannot fit statistics on an empty training set".into()))?;
    let n_classes = first.width();
    for r in train {
        if r.width() != n_classes {
            return Err(Error::Shape {
                expected: n_classes,
                actual: r.width(),
            });
        }
    }
    let count = train.len() as f64;
    let mut mu = Vec::with_capacity(n_classes);
    let mut sigma = Vec::with_capacity(n_classes);
    let mut column = Vec::with_capacity(train.len());
    for j in 0..n_classes {
        column.clear();
        column.extend(train.iter().map(|r| r.logits()[j] as f64));
        let mean = canonical_sum(&mut column) / count;
        column.clear();
        column.extend(train.iter().map(|r| {
            let d = r.logits()[j] as f64 - mean;
            d * d
        }));
        let var = canonical_sum(&mut column) / count;
        mu.push(mean);
        sigma.push(var.max(0.0).sqrt());
    }
    Ok(ClassStats {
        num_classes: n_classes,
        mu,
        sigma,
        sample_count: train.len(),
    })
}

fn check_width(stats_width: usize, logits: &[f64]) -> Result<()> {
    if logits.len() != stats_width {
        return Err(Error::Shape {
            expected: stats_width,
            actual: logits.len(),
        });
    }
    Ok(())
}

/// Z-score each logit with the fitted per-class statistics.
///
/// The divisor is floored at `epsilon` so constant columns map to zero
/// instead of dividing by zero.
pub fn norm_scale(logits: &[f64], stats: &ClassStats, epsilon: f64) -> Result<Vec<f64>> {
    check_width(stats.num_classes, logits)?;
    Ok(logits
        .iter()
        .enumerate()
        .map(|(j, &z)| (z - stats.mu[j]) / stats.sigma[j].max(epsilon))
        .collect())
}

/// Norm-scaling with a temperature in the divisor: `(z - mu) / (tau * sigma)`.
///
/// Computed as `norm_scale(..) / tau` componentwise so that `tau = 1`
/// reproduces [`norm_scale`] bit for bit.
pub fn tau_norm_scale(
    logits: &[f64],
    stats: &ClassStats,
    tau: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParam(format!("tau must be > 0, got {tau}")));
    }
    let mut scaled = norm_scale(logits, stats, epsilon)?;
    for v in &mut scaled {
        *v /= tau;
    }
    Ok(scaled)
}

/// Plain temperature scaling: divide every logit by `tau`.
pub fn temperature_scale(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParam(format!("tau must be > 0, got {tau}")));
    }
    Ok(logits.iter().map(|&z| z / tau).collect())
}

/// How running statistics are updated at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// The recurrence `mu_t = (mu_{t-1} + z) / (t + 1)` applied verbatim.
    /// Note this discounts history exponentially; it is not the standard
    /// running mean.
    Literal,
    /// Conventional running average with the training mean counting as one
    /// pseudo-sample: `mu_t = (t * mu_{t-1} + z) / (t + 1)`, variance via
    /// a Welford-style update with the same weighting.
    Standard,
}

/// Time-indexed running mean/variance per class.
///
/// Order-dependent by construction: one writer, sequential updates.
/// Snapshots may be cloned out and read concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    base: ClassStats,
    mode: StreamMode,
    t: u64,
    mu_t: Vec<f64>,
    var_t: Vec<f64>,
    /// Welford accumulator for `Standard` mode; `var_t * (t + 1)`.
    m2: Vec<f64>,
}

impl StreamState {
    /// Initialize at `t = 0` from training statistics: `mu_0 = mu_tr`,
    /// `var_0 = sigma_tr^2`. Identical for both modes.
    pub fn init(stats: &ClassStats, mode: StreamMode) -> Self {
        let var: Vec<f64> = stats.sigma.iter().map(|s| s * s).collect();
        Self {
            base: stats.clone(),
            mode,
            t: 0,
            mu_t: stats.mu.clone(),
            m2: var.clone(),
            var_t: var,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu_t
    }

    pub fn var(&self) -> &[f64] {
        &self.var_t
    }

    pub fn mode(&self) -> StreamMode {
        self.mode
    }

    /// Current statistics as a `ClassStats` snapshot (`sigma = sqrt(var_t)`).
    pub fn snapshot(&self) -> ClassStats {
        ClassStats {
            num_classes: self.base.num_classes,
            mu: self.mu_t.clone(),
            sigma: self.var_t.iter().map(|v| v.max(0.0).sqrt()).collect(),
            sample_count: self.base.sample_count,
        }
    }

    /// Fold one test sample into the running statistics.
    ///
    /// The first update produces `t = 1`, so the literal divisor is 2.
    /// The literal variance uses the freshly updated mean in the squared
    /// deviation. Variance is clamped at zero in both modes.
    pub fn update(&mut self, logits: &[f64]) -> Result<()> {
        check_width(self.base.num_classes, logits)?;
        self.t += 1;
        let t = self.t as f64;
        match self.mode {
            StreamMode::Literal => {
                for j in 0..logits.len() {
                    self.mu_t[j] = (self.mu_t[j] + logits[j]) / (t + 1.0);
                    let d = logits[j] - self.mu_t[j];
                    self.var_t[j] = ((self.var_t[j] + d * d) / (t + 1.0)).max(0.0);
                }
            }
            StreamMode::Standard => {
                // Training stats count as one pseudo-sample, so after t
                // updates the effective count is t + 1.
                for j in 0..logits.len() {
                    let delta = logits[j] - self.mu_t[j];
                    self.mu_t[j] += delta / (t + 1.0);
                    self.m2[j] += delta * (logits[j] - self.mu_t[j]);
                    self.var_t[j] = (self.m2[j] / (t + 1.0)).max(0.0);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Origin;

    fn rec(logits: &[f32]) -> LogitRecord {
        LogitRecord::new(logits.to_vec(), None, Origin::Train).unwrap()
    }

    fn stats(mu: &[f64], sigma: &[f64]) -> ClassStats {
        ClassStats {
            num_classes: mu.len(),
            mu: mu.to_vec(),
            sigma: sigma.to_vec(),
            sample_count: 1,
        }
    }

    #[test]
    fn fit_matches_hand_computation() {
        let s = fit_class_stats(&[rec(&[1.0]), rec(&[3.0]), rec(&[5.0])]).unwrap();
        assert_eq!(s.mu[0], 3.0);
        assert!((s.sigma[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.sample_count, 3);
    }

    #[test]
    fn fit_zero_variance_and_single_record() {
        let s = fit_class_stats(&[rec(&[2.0, -1.0]), rec(&[2.0, -1.0])]).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        let s = fit_class_stats(&[rec(&[2.0, -1.0])]).unwrap();
        assert_eq!(s.mu, vec![2.0, -1.0]);
        assert_eq!(s.sigma, vec![0.0, 0.0]);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_class_stats(&[]), Err(Error::Fit(_))));
        let r = fit_class_stats(&[rec(&[1.0, 2.0]), rec(&[1.0])]);
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn fit_is_order_independent() {
        let a = [rec(&[1.5, -2.0]), rec(&[0.3, 4.4]), rec(&[9.1, 0.07])];
        let b = [a[2].clone(), a[0].clone(), a[1].clone()];
        assert_eq!(fit_class_stats(&a).unwrap(), fit_class_stats(&b).unwrap());
    }

    #[test]
    fn norm_scale_identities() {
        let s = stats(&[3.0], &[2.0]);
        assert_eq!(norm_scale(&[7.0], &s, 1e-12).unwrap(), vec![2.0]);
        assert_eq!(norm_scale(&[3.0], &s, 1e-12).unwrap(), vec![0.0]);
        assert_eq!(norm_scale(&[5.0], &s, 1e-12).unwrap(), vec![1.0]);
    }

    #[test]
    fn norm_scale_zero_sigma_floors_at_epsilon() {
        let s = stats(&[3.0], &[0.0]);
        // centered value is 0 regardless of the floor
        assert_eq!(norm_scale(&[3.0], &s, 1e-12).unwrap(), vec![0.0]);
    }

    #[test]
    fn norm_scale_shape_error() {
        let s = stats(&[3.0], &[2.0]);
        assert!(matches!(
            norm_scale(&[1.0, 2.0], &s, 1e-12),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn tau_norm_matches_examples() {
        let s = stats(&[3.0], &[2.0]);
        assert_eq!(tau_norm_scale(&[7.0], &s, 2.0, 1e-12).unwrap(), vec![1.0]);
        assert_eq!(
            tau_norm_scale(&[7.0], &s, 1.0, 1e-12).unwrap(),
            norm_scale(&[7.0], &s, 1e-12).unwrap()
        );
        assert!(tau_norm_scale(&[7.0], &s, 0.0, 1e-12).is_err());
        assert!(tau_norm_scale(&[7.0], &s, -1.0, 1e-12).is_err());
    }

    #[test]
    fn temperature_scale_basics() {
        assert_eq!(temperature_scale(&[2.0, 4.0], 2.0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(temperature_scale(&[2.0, 4.0], 1.0).unwrap(), vec![2.0, 4.0]);
        assert!(temperature_scale(&[1.0], 0.0).is_err());
        for tau in [0.1, 1.0, 100.0] {
            let scaled = temperature_scale(&[3.0, -1.0, 5.0], tau).unwrap();
            let argmax = scaled
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, 2);
        }
    }

    #[test]
    fn stream_init_copies_training_stats() {
        let s = stats(&[3.0], &[2.0]);
        for mode in [StreamMode::Literal, StreamMode::Standard] {
            let st = StreamState::init(&s, mode);
            assert_eq!(st.t(), 0);
            assert_eq!(st.mu(), &[3.0]);
            assert_eq!(st.var(), &[4.0]);
        }
        let z = StreamState::init(&stats(&[1.0], &[0.0]), StreamMode::Literal);
        assert_eq!(z.var(), &[0.0]);
    }

    #[test]
    fn stream_update_literal_examples() {
        let s = stats(&[2.0], &[1.0]);
        let mut st = StreamState::init(&s, StreamMode::Literal);
        st.update(&[4.0]).unwrap();
        assert_eq!(st.t(), 1);
        assert_eq!(st.mu(), &[3.0]); // (2 + 4) / 2
        st.update(&[3.0]).unwrap();
        assert_eq!(st.mu(), &[2.0]); // (3 + 3) / 3
    }

    #[test]
    fn stream_update_standard_closed_form() {
        let s = stats(&[2.0], &[1.0]);
        let mut st = StreamState::init(&s, StreamMode::Standard);
        st.update(&[4.0]).unwrap();
        st.update(&[3.0]).unwrap();
        assert!((st.mu()[0] - 3.0).abs() < 1e-12); // (2 + 4 + 3) / 3
    }

    #[test]
    fn stream_update_shape_error() {
        let mut st = StreamState::init(&stats(&[2.0], &[1.0]), StreamMode::Literal);
        assert!(matches!(st.update(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn stats_file_round_trip() {
        let s = stats(&[3.0, -0.1234567890123], &[2.0, 0.000012345]);
        let f = StatsFile::new(&s, 1e-12);
        let json = serde_json::to_string(&f).unwrap();
        let back: StatsFile = serde_json::from_str(&json).unwrap();
        let (s2, eps) = back.into_stats().unwrap();
        assert_eq!(s2.mu, s.mu);
        assert_eq!(s2.sigma, s.sigma);
        assert_eq!(eps, 1e-12);
    }
}
