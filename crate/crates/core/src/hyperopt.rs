//! Tree-structured Parzen Estimator over the forecaster's hyperparameters.
//!
//! Every dimension except dropout is categorical, learning rate included.
//! Past trials are split at the γ-quantile of their objective; the good and
//! the remaining trials each define a product density, and the suggestion is
//! the candidate drawn from the good density with the highest log ratio.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{Activation, HyperParams, OptimizerKind};
use crate::seed::derive_seed;

const MIN_BANDWIDTH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub layers: Vec<usize>,
    pub neurons: Vec<usize>,
    /// Open interval for the dropout rate.
    pub dropout: (f64, f64),
    pub activations: Vec<Activation>,
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            layers: vec![1, 2],
            neurons: vec![10, 20, 50, 100],
            dropout: (0.0, 0.5),
            activations: Activation::ALL.to_vec(),
            optimizers: OptimizerKind::ALL.to_vec(),
            learning_rates: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            batch_sizes: vec![64, 128],
        }
    }
}

/// Categorical choice indices in the order layers, neurons, activation, optimizer, lr, batch.
type Choice = [usize; 6];

impl SearchSpace {
    /// Space with every categorical dimension pinned to `base`; only dropout varies.
    pub fn dropout_only(base: &HyperParams) -> Self {
        Self {
            layers: vec![base.layers],
            neurons: vec![base.neurons],
            dropout: (0.0, 0.5),
            activations: vec![base.activation],
            optimizers: vec![base.optimizer],
            learning_rates: vec![base.learning_rate],
            batch_sizes: vec![base.batch_size],
        }
    }

    fn sizes(&self) -> [usize; 6] {
        [
            self.layers.len(),
            self.neurons.len(),
            self.activations.len(),
            self.optimizers.len(),
            self.learning_rates.len(),
            self.batch_sizes.len(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes().contains(&0) {
            return Err(Error::Argument("search space has an empty dimension".into()));
        }
        let (lo, hi) = self.dropout;
        if !(lo >= 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::Argument(format!("dropout range ({lo}, {hi}) is invalid")));
        }
        Ok(())
    }

    fn choice_of(&self, hp: &HyperParams) -> Option<Choice> {
        Some([
            self.layers.iter().position(|&v| v == hp.layers)?,
            self.neurons.iter().position(|&v| v == hp.neurons)?,
            self.activations.iter().position(|&v| v == hp.activation)?,
            self.optimizers.iter().position(|&v| v == hp.optimizer)?,
            self.learning_rates.iter().position(|&v| v == hp.learning_rate)?,
            self.batch_sizes.iter().position(|&v| v == hp.batch_size)?,
        ])
    }

    fn point(&self, c: Choice, dropout: f64) -> HyperParams {
        HyperParams {
            layers: self.layers[c[0]],
            neurons: self.neurons[c[1]],
            dropout,
            activation: self.activations[c[2]],
            optimizer: self.optimizers[c[3]],
            learning_rate: self.learning_rates[c[4]],
            batch_size: self.batch_sizes[c[5]],
        }
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        let (lo, hi) = self.dropout;
        self.choice_of(hp).is_some() && hp.dropout > lo && hp.dropout < hi
    }

    fn uniform_dropout<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.dropout;
        loop {
            let v = rng.random_range(lo..hi);
            if v > lo {
                return v;
            }
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> HyperParams {
        let sizes = self.sizes();
        let c: Choice = std::array::from_fn(|d| rng.random_range(0..sizes[d]));
        let dropout = self.uniform_dropout(rng);
        self.point(c, dropout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Argument(format!("gamma {} not in (0,1)", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(Error::Argument("n_candidates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: HyperParams,
    /// Validation loss; `None` for a failed evaluation.
    pub objective: Option<f64>,
    pub seed: u64,
    pub duration_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Count-based categorical density with a +1 prior per choice.
fn categorical(obs: &[Choice], sizes: &[usize; 6]) -> Vec<Vec<f64>> {
    (0..6)
        .map(|d| {
            let mut counts = vec![1.0; sizes[d]];
            for o in obs {
                counts[o[d]] += 1.0;
            }
            let total: f64 = counts.iter().sum();
            counts.into_iter().map(|c| c / total).collect()
        })
        .collect()
}

/// Equal-weight truncated Gaussian mixture on `(lo, hi)`.
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    mass: Vec<f64>,
    lo: f64,
    hi: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

impl Parzen {
    fn fit(obs: &[f64], lo: f64, hi: f64) -> Self {
        let mut mus = obs.to_vec();
        mus.sort_by(f64::total_cmp);
        let sigmas: Vec<f64> = (0..mus.len())
            .map(|i| {
                let left = if i == 0 { mus[i] - lo } else { mus[i] - mus[i - 1] };
                let right = if i + 1 == mus.len() { hi - mus[i] } else { mus[i + 1] - mus[i] };
                left.max(right).clamp(MIN_BANDWIDTH, hi - lo)
            })
            .collect();
        let mass = mus
            .iter()
            .zip(&sigmas)
            .map(|(m, s)| std_normal_cdf((hi - m) / s) - std_normal_cdf((lo - m) / s))
            .collect();
        Self { mus, sigmas, mass, lo, hi }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        if self.mus.is_empty() {
            return -(self.hi - self.lo).ln();
        }
        let total: f64 = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .zip(&self.mass)
            .map(|((m, s), z)| {
                let u = (x - m) / s;
                (-0.5 * u * u).exp() / (s * (2.0 * std::f64::consts::PI).sqrt() * z)
            })
            .sum();
        (total / self.mus.len() as f64).ln()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mus.is_empty() {
            return loop {
                let v = rng.random_range(self.lo..self.hi);
                if v > self.lo {
                    break v;
                }
            };
        }
        let i = rng.random_range(0..self.mus.len());
        let normal = Normal::new(self.mus[i], self.sigmas[i]).expect("bandwidth is positive");
        loop {
            let v = normal.sample(rng);
            if v > self.lo && v < self.hi {
                return v;
            }
        }
    }
}

struct Density {
    cat: Vec<Vec<f64>>,
    dropout: Parzen,
}

impl Density {
    fn fit(obs: &[(Choice, f64)], space: &SearchSpace) -> Self {
        let choices: Vec<Choice> = obs.iter().map(|o| o.0).collect();
        let drops: Vec<f64> = obs.iter().map(|o| o.1).collect();
        Self {
            cat: categorical(&choices, &space.sizes()),
            dropout: Parzen::fit(&drops, space.dropout.0, space.dropout.1),
        }
    }

    fn log_pdf(&self, c: &Choice, dropout: f64) -> f64 {
        self.cat.iter().zip(c).map(|(p, &i)| p[i].ln()).sum::<f64>() + self.dropout.log_pdf(dropout)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Choice, f64) {
        let c: Choice = std::array::from_fn(|d| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let probs = &self.cat[d];
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        });
        (c, self.dropout.sample(rng))
    }
}

/// Next point to evaluate given the history so far.
pub fn tpe_suggest<R: Rng + ?Sized>(history: &[Trial], space: &SearchSpace, cfg: &TpeConfig, rng: &mut R) -> Result<HyperParams> {
    space.validate()?;
    cfg.validate()?;
    let mut ok: Vec<(f64, usize, Choice, f64)> = history
        .iter()
        .filter_map(|t| {
            let obj = t.objective.filter(|v| v.is_finite())?;
            Some((obj, t.index, space.choice_of(&t.params)?, t.params.dropout))
        })
        .collect();
    if ok.len() < cfg.n_startup.max(1) {
        return Ok(space.sample_uniform(rng));
    }
    ok.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_good = ((cfg.gamma * ok.len() as f64).ceil() as usize).clamp(1, ok.len());
    let obs: Vec<(Choice, f64)> = ok.iter().map(|o| (o.2, o.3)).collect();
    let good = Density::fit(&obs[..n_good], space);
    let rest = Density::fit(&obs[n_good..], space);
    let mut best: Option<(f64, Choice, f64)> = None;
    for _ in 0..cfg.n_candidates {
        let (c, d) = good.sample(rng);
        let score = good.log_pdf(&c, d) - rest.log_pdf(&c, d);
        if best.is_none_or(|b| score > b.0) {
            best = Some((score, c, d));
        }
    }
    let (_, c, d) = best.expect("at least one candidate");
    Ok(space.point(c, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStrategy {
    Tpe,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Trial,
    pub history: Vec<Trial>,
}

/// Sequential search; failed evaluations are logged and excluded from the fit.
///
/// `objective` receives the point and a per-trial seed. Each finished trial
/// is appended to `log` as one JSON line.
pub fn run_search<F>(
    mut objective: F,
    space: &SearchSpace,
    cfg: &TpeConfig,
    strategy: SearchStrategy,
    n_trials: usize,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<SearchResult>
where
    F: FnMut(&HyperParams, u64) -> Result<f64>,
{
    if n_trials == 0 {
        return Err(Error::Argument("n_trials must be at least 1".into()));
    }
    space.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "suggest", &[]));
    let mut history: Vec<Trial> = Vec::with_capacity(n_trials);
    for index in 0..n_trials {
        let params = match strategy {
            SearchStrategy::Tpe => tpe_suggest(&history, space, cfg, &mut rng)?,
            SearchStrategy::Random => space.sample_uniform(&mut rng),
        };
        let trial_seed = derive_seed(seed, "trial", &[index as u64]);
        let start = Instant::now();
        let outcome = objective(&params, trial_seed);
        let duration_seconds = start.elapsed().as_secs_f64();
        let (objective_value, error) = match outcome {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("non-finite objective {v}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        let trial = Trial {
            index,
            params,
            objective: objective_value,
            seed: trial_seed,
            duration_seconds,
            error,
        };
        if let Some(w) = log.as_deref_mut() {
            let line = serde_json::to_string(&trial)?;
            writeln!(w, "{line}").map_err(|e| Error::io("trial log", e))?;
        }
        history.push(trial);
    }
    let best = history
        .iter()
        .filter(|t| t.objective.is_some())
        .min_by(|a, b| a.objective.unwrap().total_cmp(&b.objective.unwrap()).then(a.index.cmp(&b.index)))
        .cloned()
        .ok_or(Error::AllTrialsFailed(n_trials))?;
    Ok(SearchResult { best, history })
}
