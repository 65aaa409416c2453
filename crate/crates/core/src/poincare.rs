//! Poincaré moduli of maps from finite reversible chains into metric spaces.
//!
//! For `f: V → Y` the Rayleigh-type ratio is
//!
//! ```text
//!   Σ ν(u)ν(v) d(f(u),f(v))^p  /  Σ ν(u)μ(u→v) d(f(u),f(v))^p
//! ```
//!
//! and the modulus is the supremum of its `p`-th root over all `f`. For the
//! real line at `p = 2` the supremum is `1/σ` (σ the spectral gap), attained
//! by the second eigenvector. Everywhere else the optimizer returns a lower
//! bound.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::barycenter::{grad_dist_pow, p_center, FiniteMeasure};
use crate::error::{Error, Result};
use crate::markov::{convolve, spectral_gap, MarkovChain};
use crate::seed;
use crate::spaces::{Point, Space};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioReport {
    /// `Σ ν(u)ν(v) d^p`.
    pub lhs: f64,
    /// `Σ ν(u)μ(u→v) d^p`.
    pub rhs: f64,
    /// `lhs / rhs`, or 0 when `rhs = 0`.
    pub ratio: f64,
    pub degenerate: bool,
}

fn check_map(chain: &MarkovChain, space: &Space, f: &[Point]) -> Result<()> {
    if !chain.is_reversible() {
        return Err(Error::NotReversible);
    }
    if f.len() != chain.state_count() {
        return Err(Error::InvalidPoint {
            space: space.kind().into(),
            msg: format!("map has {} values for {} states", f.len(), chain.state_count()),
        });
    }
    f.iter().try_for_each(|x| space.validate(x))
}

/// `Σ ν(u)μ(u→v) d(f(u),f(v))^p` for the given kernel.
pub fn walk_energy(chain: &MarkovChain, space: &Space, p: f64, f: &[Point]) -> f64 {
    let n = chain.state_count();
    let nu = chain.stationary();
    let mut acc = 0.0;
    for u in 0..n {
        for (v, &m) in chain.row(u).iter().enumerate() {
            if m > 0.0 && u != v {
                acc += nu[u] * m * space.dist(&f[u], &f[v]).powf(p);
            }
        }
    }
    acc
}

/// `Σ ν(u)ν(v) d(f(u),f(v))^p`.
pub fn pair_energy(chain: &MarkovChain, space: &Space, p: f64, f: &[Point]) -> f64 {
    let nu = chain.stationary();
    let mut acc = 0.0;
    for u in 0..f.len() {
        for v in u + 1..f.len() {
            acc += 2.0 * nu[u] * nu[v] * space.dist(&f[u], &f[v]).powf(p);
        }
    }
    acc
}

fn ratio_unchecked(chain: &MarkovChain, space: &Space, p: f64, f: &[Point]) -> RatioReport {
    let lhs = pair_energy(chain, space, p, f);
    let rhs = walk_energy(chain, space, p, f);
    let degenerate = rhs == 0.0;
    RatioReport { lhs, rhs, ratio: if degenerate { 0.0 } else { lhs / rhs }, degenerate }
}

pub fn rayleigh_ratio(chain: &MarkovChain, space: &Space, p: f64, f: &[Point]) -> Result<RatioReport> {
    check_map(chain, space, f)?;
    Ok(ratio_unchecked(chain, space, p, f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareEstimate {
    pub space: String,
    pub p: f64,
    /// Estimated modulus: a lower bound unless `exact`.
    pub lambda: f64,
    /// `lambda^p`, the ratio achieved by the witness.
    pub ratio: f64,
    pub exact: bool,
    pub witness: Vec<Point>,
    /// Spectral gap of the chain.
    pub sigma: f64,
    pub restarts: usize,
}

const ASCENT_ITERS: usize = 400;
const SEARCH_SWEEPS: usize = 60;

/// Maximizes the ratio over maps `V → Y` by multi-start ascent. Restart 0
/// starts from the second eigenvector laid along a geodesic; the others
/// from random maps. For the real line at `p = 2` the eigenvector value is
/// returned directly and flagged exact.
pub fn modulus_estimate(
    chain: &MarkovChain,
    space: &Space,
    p: f64,
    restarts: usize,
    seed: u64,
) -> Result<PoincareEstimate> {
    if !(p >= 1.0) {
        return Err(Error::OutOfRange(format!("p must be at least 1 (got {p})")));
    }
    if !chain.is_reversible() {
        return Err(Error::NotReversible);
    }
    chain.require_ergodic()?;
    let spec = spectral_gap(chain)?;
    if matches!(space, Space::Euclidean { dim: 1 }) && p == 2.0 {
        let witness: Vec<Point> = spec.eigenvector.iter().map(|x| vec![*x]).collect();
        let r = ratio_unchecked(chain, space, p, &witness);
        return Ok(PoincareEstimate {
            space: space.kind().into(),
            p,
            lambda: 1.0 / spec.gap.sqrt(),
            ratio: r.ratio,
            exact: true,
            witness,
            sigma: spec.gap,
            restarts: 0,
        });
    }
    let (ratio, witness) = best_of_restarts(chain, space, p, restarts.max(1), seed, &spec.eigenvector);
    Ok(PoincareEstimate {
        space: space.kind().into(),
        p,
        lambda: ratio.powf(1.0 / p),
        ratio,
        exact: false,
        witness,
        sigma: spec.gap,
        restarts: restarts.max(1),
    })
}

/// Runs the restarts in parallel and keeps the best ratio, ties broken by
/// the lower restart index.
fn best_of_restarts(
    chain: &MarkovChain,
    space: &Space,
    p: f64,
    restarts: usize,
    seed: u64,
    eigvec: &[f64],
) -> (f64, Vec<Point>) {
    let results: Vec<(f64, Vec<Point>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed, &[0x706f_696e, r as u64]);
            let mut f =
                if r == 0 { eigen_embedding(space, eigvec, &mut rng) } else { random_map(chain, space, p, &mut rng) };
            let ratio = ascend(chain, space, p, &mut f, &mut rng);
            (ratio, f)
        })
        .collect();
    results.into_iter().reduce(|best, cur| if cur.0 > best.0 { cur } else { best }).expect("at least one restart")
}

/// The eigenvector, rescaled to `[0,1]`, placed on a geodesic between two
/// random points. A geodesic is isometric to an interval, so this realizes
/// the real-line ratio in any target.
fn eigen_embedding<R: Rng>(space: &Space, v: &[f64], rng: &mut R) -> Vec<Point> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (a, b) = loop {
        let a = space.random_point(rng);
        let b = space.random_point(rng);
        if space.dist(&a, &b) > 1e-6 {
            break (a, b);
        }
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    v.iter().map(|x| space.geodesic_unchecked(&a, &b, ((x - lo) / span).clamp(0.0, 1.0))).collect()
}

/// Random map with nonzero walk energy.
fn random_map<R: Rng>(chain: &MarkovChain, space: &Space, p: f64, rng: &mut R) -> Vec<Point> {
    loop {
        let f: Vec<Point> = (0..chain.state_count()).map(|_| space.random_point(rng)).collect();
        if walk_energy(chain, space, p, &f) > 0.0 {
            return f;
        }
    }
}

fn smooth(space: &Space) -> bool {
    match space {
        Space::Product { factors, .. } => factors.iter().all(smooth),
        Space::Euclidean { .. } | Space::Lp { .. } | Space::Hyperbolic => true,
        Space::Tree(_) => false,
    }
}

fn ascend<R: Rng>(chain: &MarkovChain, space: &Space, p: f64, f: &mut Vec<Point>, rng: &mut R) -> f64 {
    if smooth(space) {
        gradient_ascent(chain, space, p, f)
    } else {
        local_search(chain, space, p, f, rng)
    }
}

/// Gradient ascent on the ratio in coordinates, with backtracking.
fn gradient_ascent(chain: &MarkovChain, space: &Space, p: f64, f: &mut Vec<Point>) -> f64 {
    let n = chain.state_count();
    let nu = chain.stationary();
    let mut cur = ratio_unchecked(chain, space, p, f);
    let mut step = 1.0;
    for _ in 0..ASCENT_ITERS {
        if cur.degenerate {
            return 0.0;
        }
        // ∇(L/Q) = (∇L − R ∇Q) / Q.
        let mut grad: Vec<Vec<f64>> = f.iter().map(|x| vec![0.0; x.len()]).collect();
        for u in 0..n {
            for v in 0..n {
                if u == v {
                    continue;
                }
                let w = 2.0 * nu[u] * nu[v] - cur.ratio * 2.0 * nu[u] * chain.transition(u, v);
                if w == 0.0 {
                    continue;
                }
                let g = grad_dist_pow(space, &f[u], &f[v], p);
                for (a, b) in grad[u].iter_mut().zip(g) {
                    *a += w * b / cur.rhs;
                }
            }
        }
        let gnorm: f64 = grad.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < 1e-14 {
            break;
        }
        let scale: f64 = f.iter().map(|x| space.dist(x, &f[0])).fold(0.0, f64::max).max(1e-9);
        let mut improved = false;
        for _ in 0..40 {
            let t = step * scale / gnorm;
            let cand: Vec<Point> =
                f.iter().zip(&grad).map(|(x, g)| x.iter().zip(g).map(|(a, b)| a + t * b).collect()).collect();
            if cand.iter().all(|x| space.validate(x).is_ok()) {
                let r = ratio_unchecked(chain, space, p, &cand);
                if r.ratio > cur.ratio {
                    let gain = r.ratio - cur.ratio;
                    *f = cand;
                    cur = r;
                    improved = true;
                    step *= 2.0;
                    if gain <= 1e-13 * cur.ratio {
                        return cur.ratio;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    cur.ratio
}

/// Stochastic local search for non-smooth targets: each value moves along
/// geodesics toward other values or to random nearby points.
fn local_search<R: Rng>(chain: &MarkovChain, space: &Space, p: f64, f: &mut [Point], rng: &mut R) -> f64 {
    let n = chain.state_count();
    let mut cur = ratio_unchecked(chain, space, p, f).ratio;
    let mut scale: f64 = f.iter().map(|x| space.dist(x, &f[0])).fold(0.0, f64::max).max(1e-3) / 2.0;
    for _ in 0..SEARCH_SWEEPS {
        let mut improved = false;
        for u in 0..n {
            let old = f[u].clone();
            let mut best = (cur, old.clone());
            let mut cands = Vec::new();
            for _ in 0..3 {
                let v = rng.random_range(0..n);
                for t in [0.25, 0.5, 1.0] {
                    if v != u {
                        cands.push(space.geodesic_unchecked(&old, &f[v], t));
                    }
                }
            }
            for _ in 0..4 {
                cands.push(space.perturb(&old, scale, rng));
            }
            cands.push(space.random_point(rng));
            for c in cands {
                f[u] = c;
                let r = ratio_unchecked(chain, space, p, f);
                if !r.degenerate && r.ratio > best.0 {
                    best = (r.ratio, f[u].clone());
                }
            }
            f[u] = best.1;
            if best.0 > cur {
                cur = best.0;
                improved = true;
            }
        }
        if !improved {
            scale *= 0.5;
        }
    }
    cur
}

/// Both branches of the extrapolation lemma, for a chain whose exponent-`p`
/// modulus on the line is `A·p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatousekBound {
    pub a: f64,
    pub p: f64,
    pub q: f64,
    /// `4Aq`, valid for `q ≥ p`.
    pub upper_branch: Option<f64>,
    /// `Aq`, valid for `1 < q ≤ p`.
    pub lower_branch: Option<f64>,
    /// Smallest applicable branch.
    pub bound: f64,
}

pub fn matousek_bound(a: f64, p: f64, q: f64) -> Result<MatousekBound> {
    if !(q > 1.0) || !(p >= 1.0) || !(a >= 0.0) {
        return Err(Error::OutOfRange(format!("need q > 1, p >= 1, A >= 0 (got A={a}, p={p}, q={q})")));
    }
    let upper_branch = (q >= p).then_some(4.0 * a * q);
    let lower_branch = (q <= p).then_some(a * q);
    let bound = match (upper_branch, lower_branch) {
        (Some(u), Some(l)) => u.min(l),
        (Some(u), None) => u,
        (None, Some(l)) => l,
        (None, None) => unreachable!("q is on one side of p"),
    };
    Ok(MatousekBound { a, p, q, upper_branch, lower_branch, bound })
}

/// `2p/√σ`: the exponent-`p` bound for the line obtained from the Hilbert
/// value at `p = 2`.
pub fn line_modulus_bound(p: f64, sigma: f64) -> f64 {
    2.0 * p / sigma.sqrt()
}

/// Modulus restricted to maps with at most `n_points` distinct values, each
/// restart choosing its own candidate set.
pub fn local_modulus(
    chain: &MarkovChain,
    space: &Space,
    p: f64,
    n_points: usize,
    restarts: usize,
    seed: u64,
) -> Result<PoincareEstimate> {
    if !chain.is_reversible() {
        return Err(Error::NotReversible);
    }
    chain.require_ergodic()?;
    let n = chain.state_count();
    if n_points >= n {
        return modulus_estimate(chain, space, p, restarts, seed);
    }
    let spec = spectral_gap(chain)?;
    if n_points <= 1 {
        return Ok(PoincareEstimate {
            space: space.kind().into(),
            p,
            lambda: 0.0,
            ratio: 0.0,
            exact: true,
            witness: vec![space.origin(); n],
            sigma: spec.gap,
            restarts: 0,
        });
    }
    let restarts = restarts.max(1);
    let v = &spec.eigenvector;
    let results: Vec<(f64, Vec<Point>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed, &[0x6c6f_6361, r as u64]);
            let (cands, mut assign) = if r == 0 {
                // Evenly spaced points on a geodesic, eigenvector quantized.
                let a = space.random_point(&mut rng);
                let b = loop {
                    let b = space.random_point(&mut rng);
                    if space.dist(&a, &b) > 1e-6 {
                        break b;
                    }
                };
                let cands: Vec<Point> =
                    (0..n_points).map(|i| space.geodesic_unchecked(&a, &b, i as f64 / (n_points - 1) as f64)).collect();
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = if hi > lo { hi - lo } else { 1.0 };
                let assign: Vec<usize> =
                    v.iter().map(|x| (((x - lo) / span) * (n_points - 1) as f64).round() as usize).collect();
                (cands, assign)
            } else {
                let cands: Vec<Point> = (0..n_points).map(|_| space.random_point(&mut rng)).collect();
                let assign = (0..n).map(|_| rng.random_range(0..n_points)).collect();
                (cands, assign)
            };
            let eval = |assign: &[usize]| {
                let f: Vec<Point> = assign.iter().map(|&i| cands[i].clone()).collect();
                ratio_unchecked(chain, space, p, &f).ratio
            };
            let mut cur = eval(&assign);
            loop {
                let mut changed = false;
                for u in 0..n {
                    let keep = assign[u];
                    let mut best = (cur, keep);
                    for i in 0..n_points {
                        if i == keep {
                            continue;
                        }
                        assign[u] = i;
                        let r = eval(&assign);
                        if r > best.0 * (1.0 + 1e-12) {
                            best = (r, i);
                        }
                    }
                    assign[u] = best.1;
                    if best.1 != keep {
                        cur = best.0;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            (cur, assign.iter().map(|&i| cands[i].clone()).collect())
        })
        .collect();
    let (ratio, witness) =
        results.into_iter().reduce(|best, cur| if cur.0 > best.0 { cur } else { best }).expect("at least one restart");
    Ok(PoincareEstimate {
        space: space.kind().into(),
        p,
        lambda: ratio.powf(1.0 / p),
        ratio,
        exact: false,
        witness,
        sigma: spec.gap,
        restarts,
    })
}

/// Compares the two forms of the Poincaré inequality for one map: with
/// `c̄^p = pair energy / E_m` measured, checks `E_n ≤ (2c̄)^p E_m`, where
/// `E_k` is the walk energy of the `k`-step chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteFormCheck {
    pub m: usize,
    pub n: usize,
    /// `c̄^p` measured on this map.
    pub infinite_ratio: f64,
    /// `E_n / E_m`.
    pub finite_ratio: f64,
    /// `(2c̄)^p`.
    pub bound: f64,
    pub holds: bool,
}

pub fn finite_form_check(
    chain: &MarkovChain,
    space: &Space,
    p: f64,
    f: &[Point],
    m: usize,
    n: usize,
) -> Result<FiniteFormCheck> {
    check_map(chain, space, f)?;
    if !(n > m && m >= 1) {
        return Err(Error::OutOfRange(format!("need n > m >= 1 (got m={m}, n={n})")));
    }
    let em = walk_energy(&convolve(chain, m)?, space, p, f);
    let en = walk_energy(&convolve(chain, n)?, space, p, f);
    if em == 0.0 {
        return Err(Error::InvalidMeasure("map has zero m-step energy".into()));
    }
    let infinite_ratio = pair_energy(chain, space, p, f) / em;
    let finite_ratio = en / em;
    let bound = 2f64.powf(p) * infinite_ratio;
    Ok(FiniteFormCheck { m, n, infinite_ratio, finite_ratio, bound, holds: finite_ratio <= bound * (1.0 + 1e-12) })
}

/// `V^{(p)}(f) = Σ ν(x) d(f(x), c_p(f_*ν))^p` next to the pair energy it
/// sandwiches: `V ≤ pair ≤ 2^p V`.
///
/// The triangle inequality only yields `2^p`; `2^{p−1}` is tight in Hilbert
/// space at `p = 2` but fails in the disk, so both are reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceSandwich {
    pub variance: f64,
    pub pair_energy: f64,
    /// `2^p V`.
    pub upper: f64,
    /// Whether `pair ≤ 2^{p−1} V` also held.
    pub within_half_upper: bool,
    pub holds: bool,
}

pub fn variance_sandwich(chain: &MarkovChain, space: &Space, p: f64, f: &[Point]) -> Result<VarianceSandwich> {
    check_map(chain, space, f)?;
    let sigma = FiniteMeasure::normalized(space, f.to_vec(), chain.stationary().to_vec())?;
    let tol = if matches!(space, Space::Tree(_)) { 1e-10 } else { 1e-12 };
    let c = p_center(space, &sigma, p, tol)?;
    let pair = pair_energy(chain, space, p, f);
    let upper = 2f64.powf(p) * c.moment;
    let slack = 1e-9 * pair.max(1e-300);
    Ok(VarianceSandwich {
        variance: c.moment,
        pair_energy: pair,
        upper,
        within_half_upper: pair <= upper / 2.0 + slack,
        holds: c.moment <= pair + slack && pair <= upper + slack,
    })
}
