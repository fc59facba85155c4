//! Path simulation of exit times and plug-in estimators.
//!
//! Path `i` draws from a ChaCha8 stream `(seed, i)`, so results do not depend
//! on how paths are scheduled across threads.

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::Chain;
use crate::io::{csv_string, fmt_f64};
use crate::poisson::DomainMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Start {
    State(usize),
    /// Initial distribution over all states (normalized internally).
    Distribution(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub start: Start,
    #[serde(default)]
    pub betas: Vec<f64>,
    pub max_time: f64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Argument("n_paths must be at least 1".into()));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::Argument(format!(
                "max_time must be > 0, got {}",
                self.max_time
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSamples {
    pub tau: Vec<f64>,
    pub censored: Vec<bool>,
    /// The start state lies outside the domain; every sample is 0.
    pub start_outside: bool,
}

impl ExitSamples {
    pub fn censored_count(&self) -> usize {
        self.censored.iter().filter(|c| **c).count()
    }

    /// Columns `path,tau,censored`.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .tau
            .iter()
            .zip(&self.censored)
            .enumerate()
            .map(|(i, (t, c))| vec![i.to_string(), fmt_f64(*t), c.to_string()])
            .collect();
        csv_string(&["path", "tau", "censored"], &rows)
    }
}

/// Per-state holding rate and jump law; `None` targets mean exit.
struct JumpTable {
    rate: Vec<f64>,
    targets: Vec<Vec<Option<usize>>>,
    law: Vec<Option<WeightedIndex<f64>>>,
}

impl JumpTable {
    fn new(chain: &Chain, mask: &DomainMask) -> Self {
        let n = chain.n();
        let q = chain.q();
        let mut rate = vec![0.0; n];
        let mut targets = vec![Vec::new(); n];
        let mut law = Vec::with_capacity(n);
        for i in 0..n {
            let total = -q[(i, i)];
            rate[i] = total.max(0.0);
            let mut weights = Vec::new();
            let mut inside = 0.0;
            let mut outside = 0.0;
            for j in 0..n {
                if j == i || q[(i, j)] <= 0.0 {
                    continue;
                }
                if mask.contains(j) {
                    targets[i].push(Some(j));
                    weights.push(q[(i, j)]);
                    inside += q[(i, j)];
                } else {
                    outside += q[(i, j)];
                }
            }
            // killing plus jumps off the domain
            let exit = (total - inside).max(outside);
            if exit > 0.0 {
                targets[i].push(None);
                weights.push(exit);
            }
            law.push(WeightedIndex::new(&weights).ok());
        }
        JumpTable { rate, targets, law }
    }

    fn path(&self, mut x: usize, max_time: f64, rng: &mut ChaCha8Rng) -> (f64, bool) {
        let mut t = 0.0;
        loop {
            let (r, law) = (self.rate[x], &self.law[x]);
            let Some(law) = law.as_ref().filter(|_| r > 0.0) else {
                return (max_time, true);
            };
            let hold: f64 = Exp1.sample(rng);
            t += hold / r;
            if t > max_time {
                return (max_time, true);
            }
            match self.targets[x][law.sample(rng)] {
                Some(y) => x = y,
                None => return (t, false),
            }
        }
    }
}

/// Simulates `n_paths` exit times from the domain; censored paths record
/// `max_time`.
pub fn simulate_exit_times(
    chain: &Chain,
    mask: &DomainMask,
    config: &McConfig,
) -> Result<ExitSamples> {
    config.validate()?;
    mask.check_len(chain)?;
    let n = chain.n();
    let initial = match &config.start {
        Start::State(s) => {
            if *s >= n {
                return Err(Error::Argument(format!("start state {s} out of range")));
            }
            if !mask.contains(*s) {
                return Ok(ExitSamples {
                    tau: vec![0.0; config.n_paths],
                    censored: vec![false; config.n_paths],
                    start_outside: true,
                });
            }
            None
        }
        Start::Distribution(p) => {
            if p.len() != n {
                return Err(Error::Dimension {
                    what: "start distribution",
                    expected: n,
                    got: p.len(),
                });
            }
            Some(
                WeightedIndex::new(p)
                    .map_err(|e| Error::Argument(format!("invalid start distribution: {e}")))?,
            )
        }
    };
    let table = JumpTable::new(chain, mask);
    let results: Vec<(f64, bool)> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let x = match (&initial, &config.start) {
                (Some(law), _) => law.sample(&mut rng),
                (None, Start::State(s)) => *s,
                (None, Start::Distribution(_)) => unreachable!(),
            };
            if !mask.contains(x) {
                (0.0, false)
            } else {
                table.path(x, config.max_time, &mut rng)
            }
        })
        .collect();
    let (tau, censored) = results.into_iter().unzip();
    Ok(ExitSamples {
        tau,
        censored,
        start_outside: false,
    })
}

/// Mean and standard error of the sample mean.
fn sample_mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub beta: f64,
    pub laplace: f64,
    pub laplace_se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_moment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_moment_se: Option<f64>,
    /// The largest 1% of samples carry more than 20% of the estimator mass.
    #[serde(default)]
    pub heavy_tail: bool,
    /// Censoring present: the exponential-moment estimate is only a lower bound.
    #[serde(default)]
    pub lower_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub n_paths: usize,
    pub censored: usize,
    pub start_outside: bool,
    pub mean: f64,
    pub mean_se: f64,
    pub per_beta: Vec<BetaEstimate>,
}

impl McEstimate {
    pub fn at(&self, beta: f64) -> Option<&BetaEstimate> {
        self.per_beta.iter().find(|b| b.beta == beta)
    }
}

fn heavy_tail(values: &[f64]) -> bool {
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return false;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = values.len().div_ceil(100);
    sorted[..top].iter().sum::<f64>() > 0.2 * total
}

/// Plug-in estimates. `E[e^{beta tau}]` is reported for `beta < edge` when an
/// edge is given.
pub fn estimate_exit_functionals(
    samples: &ExitSamples,
    betas: &[f64],
    exp_moment_edge: Option<f64>,
) -> Result<McEstimate> {
    if samples.tau.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    let censored = samples.censored_count();
    let (mean, mean_se) = sample_mean_se(&samples.tau);
    let per_beta = betas
        .iter()
        .map(|&beta| {
            let decay: Vec<f64> = samples.tau.iter().map(|t| (-beta * t).exp()).collect();
            let (laplace, laplace_se) = sample_mean_se(&decay);
            let mut est = BetaEstimate {
                beta,
                laplace,
                laplace_se,
                exp_moment: None,
                exp_moment_se: None,
                heavy_tail: false,
                lower_bound: false,
            };
            if exp_moment_edge.is_some_and(|edge| beta < edge) {
                let growth: Vec<f64> = samples.tau.iter().map(|t| (beta * t).exp()).collect();
                let (m, se) = sample_mean_se(&growth);
                est.exp_moment = Some(m);
                est.exp_moment_se = Some(se);
                est.heavy_tail = heavy_tail(&growth);
                est.lower_bound = censored > 0;
            }
            est
        })
        .collect();
    Ok(McEstimate {
        n_paths: samples.tau.len(),
        censored,
        start_outside: samples.start_outside,
        mean,
        mean_se,
        per_beta,
    })
}
