//! Bayes-optimal unweighted accuracy under a [`GeneratorSpec`].
//!
//! A segment's observation is its vector of token counts per class block.
//! Because unweighted accuracy averages per-class recall, the optimal rule
//! picks the label maximising the likelihood of the observation (priors drop
//! out). With previous-segment context the likelihood of the previous
//! observation is marginalised over the previous label, whose distribution
//! given the current label comes from reversing the chain at stationarity.
//!
//! The oracle reads token content only; frame rows are ignored.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{emitted_class, sample_categorical, GeneratorSpec};
use crate::corpus::N_CLASSES;
use crate::error::{Error, Result};
use crate::rng;

/// Joint enumeration beyond this many (current, previous) pairs is refused.
const MAX_ENUMERATED_PAIRS: usize = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ExactEnumeration,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub bayes_ua_no_context: f64,
    pub bayes_ua_with_prev_context: Option<f64>,
    pub method: OracleMethod,
    /// 0 for exact enumeration.
    pub n_samples: usize,
    pub std_error_no_context: f64,
    pub std_error_with_prev_context: Option<f64>,
}

type Probs = [f64; N_CLASSES];

/// `emission[label][content]`: probability that one token of a `label`
/// segment comes from the `content` block.
fn emission(spec: &GeneratorSpec) -> [Probs; N_CLASSES] {
    let a = spec.emission_ambiguity;
    let mut e = [[a / (N_CLASSES - 1) as f64; N_CLASSES]; N_CLASSES];
    for (l, row) in e.iter_mut().enumerate() {
        row[l] = 1.0 - a;
    }
    e
}

/// Stationary distribution of the label chain.
pub fn stationary_distribution(transition: &[[f64; N_CLASSES]; N_CLASSES]) -> Probs {
    // Cesàro average of the power iterates; converges for periodic chains too.
    let mut p = [1.0 / N_CLASSES as f64; N_CLASSES];
    let mut avg = [0.0; N_CLASSES];
    const STEPS: usize = 20_000;
    for _ in 0..STEPS {
        let mut next = [0.0; N_CLASSES];
        for i in 0..N_CLASSES {
            for j in 0..N_CLASSES {
                next[j] += p[i] * transition[i][j];
            }
        }
        p = next;
        for j in 0..N_CLASSES {
            avg[j] += p[j];
        }
    }
    let s: f64 = avg.iter().sum();
    avg.map(|v| v / s)
}

/// `back[p][l] = P(previous label = p | label = l)` at stationarity.
fn reverse_chain(spec: &GeneratorSpec) -> [Probs; N_CLASSES] {
    let pi = stationary_distribution(&spec.transition);
    let mut back = [[0.0; N_CLASSES]; N_CLASSES];
    for l in 0..N_CLASSES {
        let denom: f64 = (0..N_CLASSES).map(|p| pi[p] * spec.transition[p][l]).sum();
        if denom > 0.0 {
            for p in 0..N_CLASSES {
                back[p][l] = pi[p] * spec.transition[p][l] / denom;
            }
        }
    }
    back
}

/// Likelihood of token counts `x` under each label, up to a label-independent factor.
fn count_likelihood(e: &[Probs; N_CLASSES], x: &[u32; N_CLASSES]) -> Probs {
    let mut out = [1.0; N_CLASSES];
    for (l, o) in out.iter_mut().enumerate() {
        for k in 0..N_CLASSES {
            *o *= e[l][k].powi(x[k] as i32);
        }
    }
    out
}

fn context_likelihood(back: &[Probs; N_CLASSES], prev: &Probs) -> Probs {
    let mut out = [0.0; N_CLASSES];
    for (l, o) in out.iter_mut().enumerate() {
        for p in 0..N_CLASSES {
            *o += back[p][l] * prev[p];
        }
    }
    out
}

fn argmax(v: &Probs) -> usize {
    let mut best = 0;
    for i in 1..N_CLASSES {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn product(a: &Probs, b: &Probs) -> Probs {
    std::array::from_fn(|i| a[i] * b[i])
}

fn multinomial(n: u32, x: &[u32; N_CLASSES]) -> f64 {
    let ln_fact = |k: u32| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    (ln_fact(n) - x.iter().map(|&k| ln_fact(k)).sum::<f64>()).exp()
}

/// Every possible observation with its exact probability under each label.
fn observation_table(spec: &GeneratorSpec) -> Vec<(Probs, Probs)> {
    let e = emission(spec);
    let (lo, hi) = spec.tokens_per_segment;
    let p_len = 1.0 / (hi - lo + 1) as f64;
    let mut out = Vec::new();
    for n in lo as u32..=hi as u32 {
        for a in 0..=n {
            for b in 0..=n - a {
                for c in 0..=n - a - b {
                    let x = [a, b, c, n - a - b - c];
                    let shape = count_likelihood(&e, &x);
                    let w = p_len * multinomial(n, &x);
                    out.push((shape.map(|v| v * w), shape));
                }
            }
        }
    }
    out
}

/// Exact Bayes-optimal UA by enumerating all (previous, current) observations.
pub fn exact_bayes_ua(spec: &GeneratorSpec) -> Result<OracleReport> {
    spec.validate()?;
    let table = observation_table(spec);
    if table.len().saturating_mul(table.len()) > MAX_ENUMERATED_PAIRS {
        return Err(Error::InvalidSpec(format!(
            "{} observations are too many for exact enumeration",
            table.len()
        )));
    }
    let back = reverse_chain(spec);

    let mut correct0 = [0.0; N_CLASSES];
    for (prob, shape) in &table {
        let d = argmax(shape);
        correct0[d] += prob[d];
    }

    let ctx: Vec<Probs> = table
        .iter()
        .map(|(prob, _)| context_likelihood(&back, prob))
        .collect();
    let ctx_shape: Vec<Probs> = table
        .iter()
        .map(|(_, shape)| context_likelihood(&back, shape))
        .collect();
    let mut correct1 = [0.0; N_CLASSES];
    for (prob, shape) in &table {
        for (q, q_shape) in ctx.iter().zip(&ctx_shape) {
            let d = argmax(&product(shape, q_shape));
            correct1[d] += prob[d] * q[d];
        }
    }
    let mean = |c: Probs| c.iter().sum::<f64>() / N_CLASSES as f64;
    Ok(OracleReport {
        bayes_ua_no_context: mean(correct0),
        bayes_ua_with_prev_context: Some(mean(correct1)),
        method: OracleMethod::ExactEnumeration,
        n_samples: 0,
        std_error_no_context: 0.0,
        std_error_with_prev_context: Some(0.0),
    })
}

fn sample_counts<R: Rng>(rng: &mut R, spec: &GeneratorSpec, label: usize) -> [u32; N_CLASSES] {
    let n = rng.random_range(spec.tokens_per_segment.0..=spec.tokens_per_segment.1);
    let mut x = [0u32; N_CLASSES];
    for _ in 0..n {
        x[emitted_class(rng, label, spec.emission_ambiguity)] += 1;
    }
    x
}

/// Monte Carlo estimate of the Bayes-optimal UA, with per-sample decisions
/// made by exact posterior computation.
pub fn bayes_optimal_ua(
    spec: &GeneratorSpec,
    use_prev_context: bool,
    n_samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    spec.validate()?;
    if n_samples < 100 {
        return Err(Error::InvalidSpec(format!("n_samples must be >= 100, got {n_samples}")));
    }
    let e = emission(spec);
    let pi = stationary_distribution(&spec.transition);
    let back = reverse_chain(spec);
    let mut rng = rng::substream(seed, rng::Stream::Oracle);

    let mut support = [0usize; N_CLASSES];
    let mut hits0 = [0usize; N_CLASSES];
    let mut hits1 = [0usize; N_CLASSES];
    for _ in 0..n_samples {
        let prev = sample_categorical(&mut rng, &pi);
        let label = sample_categorical(&mut rng, &spec.transition[prev]);
        let x = sample_counts(&mut rng, spec, label);
        let lik = count_likelihood(&e, &x);
        support[label] += 1;
        if argmax(&lik) == label {
            hits0[label] += 1;
        }
        if use_prev_context {
            let x_prev = sample_counts(&mut rng, spec, prev);
            let q = context_likelihood(&back, &count_likelihood(&e, &x_prev));
            if argmax(&product(&lik, &q)) == label {
                hits1[label] += 1;
            }
        }
    }
    let summarize = |hits: &[usize; N_CLASSES]| {
        let mut ua = 0.0;
        let mut var = 0.0;
        let mut classes = 0.0;
        for l in 0..N_CLASSES {
            if support[l] > 0 {
                let p = hits[l] as f64 / support[l] as f64;
                ua += p;
                var += p * (1.0 - p) / support[l] as f64;
                classes += 1.0;
            }
        }
        (ua / classes, var.sqrt() / classes)
    };
    let (ua0, se0) = summarize(&hits0);
    let (ua1, se1) = summarize(&hits1);
    Ok(OracleReport {
        bayes_ua_no_context: ua0,
        bayes_ua_with_prev_context: use_prev_context.then_some(ua1),
        method: OracleMethod::MonteCarlo,
        n_samples,
        std_error_no_context: se0,
        std_error_with_prev_context: use_prev_context.then_some(se1),
    })
}
