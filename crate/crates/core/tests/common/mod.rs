#![allow(dead_code)]

use exitlab_core::forms::{Chain, Generator, Measure};
use exitlab_core::linalg::Matrix;
use exitlab_core::models::weighted_graph;
use exitlab_core::poisson::{stuck_states, DomainMask};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Arbitrary sub-Markov generator and measure.
    General,
    /// Symmetric conductances, possibly with killing.
    Reversible,
    /// Symmetric conductances on a connected graph, no killing.
    Ergodic,
}

pub struct Instance {
    pub chain: Chain,
    pub mask: DomainMask,
    pub rng: ChaCha8Rng,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_chain(rng: &mut ChaCha8Rng, n: usize, kind: Kind) -> Chain {
    let mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    match kind {
        Kind::General => {
            let mut q = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random_bool(0.5) {
                        q[(i, j)] = rng.random_range(0.1..2.0);
                    }
                }
                let off: f64 = q.row(i).sum();
                let kill = if rng.random_bool(0.5) {
                    rng.random_range(0.0..1.0)
                } else {
                    0.0
                };
                q[(i, i)] = -off - kill;
            }
            Chain::new(Generator::new(q).unwrap(), Measure::new(mu).unwrap()).unwrap()
        }
        Kind::Reversible | Kind::Ergodic => {
            let mut edges = Vec::new();
            for i in 1..n {
                let j = rng.random_range(0..i);
                edges.push((i, j, rng.random_range(0.1..2.0)));
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(0.3) {
                        edges.push((i, j, rng.random_range(0.1..2.0)));
                    }
                }
            }
            let killing = (kind == Kind::Reversible).then(|| {
                (0..n)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            rng.random_range(0.0..1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect::<Vec<f64>>()
            });
            weighted_graph(&edges, mu, killing.as_deref()).unwrap()
        }
    }
}

/// Random nonempty domain; `proper` keeps at least one state outside.
pub fn random_domain(rng: &mut ChaCha8Rng, n: usize, proper: bool) -> DomainMask {
    let max = if proper { n - 1 } else { n };
    let size = rng.random_range(1..=max);
    let states = sample(rng, n, size).into_vec();
    DomainMask::from_states(n, &states).unwrap()
}

/// A chain on `2..=n_max` states with a domain every state can exit.
pub fn random_instance(seed: u64, n_max: usize, kind: Kind) -> Instance {
    let mut rng = rng(seed);
    loop {
        let n = rng.random_range(2..=n_max);
        let chain = random_chain(&mut rng, n, kind);
        let mask = random_domain(&mut rng, n, kind == Kind::Ergodic);
        if stuck_states(&chain, &mask).is_empty() {
            return Instance { chain, mask, rng };
        }
    }
}

/// Random source, positive on the domain and zero off it.
pub fn random_source(rng: &mut ChaCha8Rng, mask: &DomainMask) -> Vec<f64> {
    (0..mask.len())
        .map(|i| {
            if mask.contains(i) {
                rng.random_range(0.1..1.0)
            } else {
                0.0
            }
        })
        .collect()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn complete3() -> Chain {
    exitlab_core::models::complete_graph(3, 1.0).unwrap()
}
