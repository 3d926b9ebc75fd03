//! Reference computations for the test suites.
//!
//! Everything here is a literal, index-by-index transcription of the
//! selection rules with 1-based positions, recomputing every prefix sum
//! from scratch. It is slow on purpose and shares no code with `hv-core`.
//! Probabilities are always passed sorted ascending; sample sets come back
//! as ascending 0-based positions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Law = BTreeMap<Vec<usize>, f64>;

/// `p(k)` for `k = 1..=N`, with `p(N + 1) = 1`.
fn at(pi: &[f64], k: usize) -> f64 {
    if k == pi.len() + 1 {
        1.0
    } else {
        pi[k - 1]
    }
}

/// `sum_{k=1}^{l} p(k)`.
fn plus(p: &[f64], l: usize) -> f64 {
    (1..=l).map(|k| p[k - 1]).sum()
}

pub fn deltas(pi: &[f64], n: usize) -> Vec<f64> {
    let big = pi.len();
    let base = plus(pi, big - n);
    let pivot = at(pi, big - n + 1);
    (1..=n)
        .map(|i| (at(pi, big - n + i + 1) - at(pi, big - n + i)) * (base + i as f64 * pivot) / base)
        .collect()
}

pub fn pi0(pi: &[f64], n: usize, n_prime: usize) -> Vec<f64> {
    let big = pi.len();
    let np = n_prime as f64;
    let base = plus(pi, big - n);
    let pivot = at(pi, big - n + 1);
    let d = base + np * pivot;
    let big_prime = big - n + n_prime;
    (1..=big)
        .map(|k| {
            if k <= big - (n - 1) {
                np * at(pi, k) / d
            } else if k <= big_prime {
                np * pivot / d
            } else {
                1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    DrawByDraw,
    Sequential,
}

/// Law of the whole sample given `n'`, certain units included.
pub fn conditional_law(pi: &[f64], n: usize, n_prime: usize, alg: Algorithm) -> Law {
    let big = pi.len();
    let p0 = pi0(pi, n, n_prime);
    let big_prime = big - n + n_prime;
    let mut law = Law::new();
    let mut push = |mut s: Vec<usize>, p: f64| {
        s.extend(big_prime..big);
        *law.entry(s).or_insert(0.0) += p;
    };
    match alg {
        Algorithm::DrawByDraw => draw_by_draw(&p0, big, n, n_prime, 1, 0, 1.0, &mut Vec::new(), &mut push),
        Algorithm::Sequential => {
            let state = p0[..big_prime].to_vec();
            sequential(&p0, big_prime, n_prime, 1, 0, state, 1.0, &mut Vec::new(), &mut push)
        }
    }
    law
}

#[allow(clippy::too_many_arguments)]
fn draw_by_draw(
    p0: &[f64],
    big: usize,
    n: usize,
    n_prime: usize,
    j: usize,
    prev: usize,
    prob: f64,
    chosen: &mut Vec<usize>,
    push: &mut impl FnMut(Vec<usize>, f64),
) {
    if j > n_prime {
        push(chosen.clone(), prob);
        return;
    }
    let np = n_prime as f64;
    let jf = j as f64;
    let window: Vec<usize> = (prev + 1..=big - n + j).collect();
    let a: Vec<f64> = window
        .iter()
        .map(|&k| {
            let mut prod = 1.0;
            for l in prev + 1..k {
                prod *= 1.0 - (np - jf) * p0[l - 1] / (np - plus(p0, l));
            }
            prod * (np - jf + 1.0) / np * p0[k - 1]
        })
        .collect();
    let total: f64 = a.iter().sum();
    for (&k, &w) in window.iter().zip(&a) {
        if w <= 0.0 {
            continue;
        }
        chosen.push(k - 1);
        draw_by_draw(p0, big, n, n_prime, j + 1, k, prob * w / total, chosen, push);
        chosen.pop();
    }
}

/// `state[k - 1]` holds `pi_k(t - 1)`.
#[allow(clippy::too_many_arguments)]
fn sequential(
    p0: &[f64],
    big_prime: usize,
    n_prime: usize,
    t: usize,
    taken: usize,
    state: Vec<f64>,
    prob: f64,
    chosen: &mut Vec<usize>,
    push: &mut impl FnMut(Vec<usize>, f64),
) {
    let accept = state[t - 1].clamp(0.0, 1.0);
    for (indicator, p) in [(1usize, accept), (0, 1.0 - accept)] {
        if p <= 0.0 {
            continue;
        }
        let n_t = taken + indicator;
        if indicator == 1 {
            chosen.push(t - 1);
        }
        if t == big_prime {
            push(chosen.clone(), prob * p);
        } else {
            let mut next = state.clone();
            next[t - 1] = indicator as f64;
            let denom = n_prime as f64 - plus(p0, t);
            for k in t + 1..=big_prime {
                next[k - 1] = (n_prime - n_t) as f64 * p0[k - 1] / denom;
            }
            sequential(p0, big_prime, n_prime, t + 1, n_t, next, prob * p, chosen, push);
        }
        if indicator == 1 {
            chosen.pop();
        }
    }
}

/// Unconditional law: mixture of the conditional laws over `n'`.
pub fn law(pi: &[f64], n: usize, alg: Algorithm) -> Law {
    let mut out = Law::new();
    for (i, d) in deltas(pi, n).into_iter().enumerate() {
        if d <= 0.0 {
            continue;
        }
        for (s, p) in conditional_law(pi, n, i + 1, alg) {
            *out.entry(s).or_insert(0.0) += d * p;
        }
    }
    out
}

pub fn total_variation(a: &Law, b: &Law) -> f64 {
    let mut keys: Vec<&Vec<usize>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|s| (a.get(s).copied().unwrap_or(0.0) - b.get(s).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Row-major `N x N` matrix of `P(k and l in S)`.
pub fn second_moments(law: &Law, big: usize) -> Vec<f64> {
    let mut m = vec![0.0; big * big];
    for (s, &p) in law {
        for &k in s {
            for &l in s {
                m[k * big + l] += p;
            }
        }
    }
    m
}

pub fn marginals(law: &Law, big: usize) -> Vec<f64> {
    let mut m = vec![0.0; big];
    for (s, &p) in law {
        for &k in s {
            m[k] += p;
        }
    }
    m
}

/// `E[f(S)]` and `Var[f(S)]` by direct summation.
pub fn mean_var(law: &Law, mut f: impl FnMut(&[usize]) -> f64) -> (f64, f64) {
    let vals: Vec<(f64, f64)> = law.iter().map(|(s, &p)| (p, f(s))).collect();
    let mean: f64 = vals.iter().map(|(p, v)| p * v).sum();
    let var: f64 = vals.iter().map(|(p, v)| p * (v - mean) * (v - mean)).sum();
    (mean, var)
}

/// Shifts raw values in `(0, 1)` by a common constant (clamped to
/// `[lo, 1 - lo]`) so that they sum to the nearest admissible integer.
/// Returns the probabilities in the original order and `n`.
pub fn integer_sum_design(raw: &[f64], lo: f64) -> (Vec<f64>, usize) {
    let big = raw.len();
    let n = (raw.iter().sum::<f64>().round() as usize).clamp(1, big - 1);
    let shifted = |c: f64| -> Vec<f64> { raw.iter().map(|&r| (r + c).clamp(lo, 1.0 - lo)).collect() };
    let (mut a, mut b) = (-1.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if shifted(mid).iter().sum::<f64>() < n as f64 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut pi = shifted(0.5 * (a + b));
    // put the residual rounding on the entry farthest from the bounds
    let resid = n as f64 - pi.iter().sum::<f64>();
    let k = (0..big)
        .max_by(|&i, &j| {
            let gi = (pi[i] - lo).min(1.0 - lo - pi[i]);
            let gj = (pi[j] - lo).min(1.0 - lo - pi[j]);
            gi.total_cmp(&gj)
        })
        .unwrap();
    pi[k] += resid;
    (pi, n)
}

/// Deterministic battery of `(probabilities, y)` pairs in caller order.
/// `N` is log-uniform on `[min_n, max_n]`, and the first design always has
/// `N = max_n`. Roughly one design in five has tied probabilities.
pub fn battery(count: usize, min_n: usize, max_n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let big = if i == 0 {
                max_n
            } else {
                let u: f64 = rng.random();
                ((min_n as f64) * (max_n as f64 / min_n as f64).powf(u)).round() as usize
            }
            .clamp(min_n, max_n);
            let spread = rng.random_range(0.02..0.47);
            let centre = rng.random_range(spread..1.0 - spread);
            let tied = rng.random_bool(0.2);
            let raw: Vec<f64> = (0..big)
                .map(|_| {
                    let r: f64 = centre + spread * rng.random_range(-1.0..1.0);
                    if tied {
                        ((r * 5.0).round() / 5.0).clamp(0.2, 0.8)
                    } else {
                        r
                    }
                })
                .collect();
            let (pi, _) = integer_sum_design(&raw, 1e-3);
            let y = (0..big).map(|_| rng.random_range(-5.0..5.0)).collect();
            (pi, y)
        })
        .collect()
}
