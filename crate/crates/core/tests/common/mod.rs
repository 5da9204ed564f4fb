//! Brute-force oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use oobai::oracle::BanditInstance;
use oobai::spef::Family;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance whose best arm leads the runner-up by at least `min_gap`.
pub fn random_instance(rng: &mut ChaCha8Rng, family: Family, k: usize, min_gap: f64) -> BanditInstance {
    let (lo, hi) = match family {
        Family::Bernoulli => (0.05, 0.95),
        Family::Gaussian => (-1.0, 1.0),
    };
    loop {
        let means: Vec<f64> = (0..k).map(|_| rng.random_range(lo..hi)).collect();
        let mut sorted = means.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted[0] - sorted[1] >= min_gap {
            return BanditInstance::new(family, means).unwrap();
        }
    }
}

pub fn random_family(rng: &mut ChaCha8Rng) -> Family {
    if rng.random_bool(0.5) {
        Family::Bernoulli
    } else {
        Family::Gaussian
    }
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn index(inst: &BanditInstance, best: usize, a: usize, w_best: f64, w_a: f64) -> f64 {
    let m = inst.means();
    inst.family().weighted_index(w_best, m[best], w_a, m[a])
}

/// Exhaustive grid search for `min sum N` subject to every pairwise index of
/// the best arm reaching `threshold`, with each `N_a` on the grid `h * {0, 1, ...}`.
/// Returns the best grid objective (an upper bound on the continuous optimum).
pub fn grid_p2(inst: &BanditInstance, offline: &[f64], threshold: f64, h: f64) -> f64 {
    let best = inst.best();
    let k = inst.num_arms();
    // Smallest grid count of arm a that meets the threshold, given the best
    // arm's pooled weight; None when unreachable.
    let smallest = |a: usize, w_best: f64| -> Option<f64> {
        let ok = |j: u64| index(inst, best, a, w_best, offline[a] + j as f64 * h) >= threshold;
        if ok(0) {
            return Some(0.0);
        }
        let mut hi = 1u64;
        while !ok(hi) {
            hi *= 2;
            if hi > 1 << 40 {
                return None;
            }
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi as f64 * h)
    };
    let mut best_total = f64::INFINITY;
    let mut i = 0u64;
    loop {
        let n1 = i as f64 * h;
        if n1 >= best_total {
            break;
        }
        let w_best = offline[best] + n1;
        let mut total = n1;
        let mut feasible = true;
        for a in (0..k).filter(|&a| a != best) {
            match smallest(a, w_best) {
                Some(n) => total += n,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible {
            best_total = best_total.min(total);
        }
        i += 1;
    }
    best_total
}

/// `min_j index(best, j)` at offline weights `z p` plus online weights `(1 - z) w`.
pub fn v_objective(inst: &BanditInstance, z: f64, p: &[f64], w: &[f64]) -> f64 {
    let best = inst.best();
    let pooled = |a: usize| z * p[a] + (1.0 - z) * w[a];
    (0..inst.num_arms())
        .filter(|&a| a != best)
        .map(|a| index(inst, best, a, pooled(best), pooled(a)))
        .fold(f64::INFINITY, f64::min)
}

/// Max over a 3-arm simplex grid of step `step`, refined by a shrinking
/// pattern search around the best grid point.
pub fn grid_v3(inst: &BanditInstance, z: f64, p: &[f64], step: f64) -> f64 {
    assert_eq!(inst.num_arms(), 3);
    let n = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, vec![1.0 / 3.0; 3]);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let w = vec![i as f64 * step, j as f64 * step, (n - i - j) as f64 * step];
            let v = v_objective(inst, z, p, &w);
            if v > best.0 {
                best = (v, w);
            }
        }
    }
    let (mut value, mut w) = best;
    let mut delta = step;
    while delta > 1e-12 {
        let mut improved = false;
        for (a, b) in [(0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1)] {
            let mut cand = w.clone();
            let moved = delta.min(cand[b]);
            cand[a] += moved;
            cand[b] -= moved;
            let v = v_objective(inst, z, p, &cand);
            if v > value {
                value = v;
                w = cand;
                improved = true;
            }
        }
        if !improved {
            delta *= 0.5;
        }
    }
    value
}

/// `(value at the best of `points` evenly spaced x, that x)` for a function on `[lo, hi]`.
pub fn grid_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    (0..=points)
        .map(|i| lo + (hi - lo) * i as f64 / points as f64)
        .map(|x| (f(x), x))
        .fold((f64::NEG_INFINITY, lo), |acc, cur| if cur.0 > acc.0 { cur } else { acc })
}
