//! Geodesic p-centers of mass and circumcenters.
//!
//! `p_center` minimizes the moment `y ↦ Σ σ(x) d(x,y)^p`. The solver depends
//! on the space:
//!
//! * trees: the moment is convex and piecewise smooth along each edge, so
//!   every edge is solved by bisection on the derivative;
//! * `ℓ_p` sums with matching exponent: the moment separates over factors;
//! * Euclidean, `ℓ_p`, the disk (and products of these): damped Newton in
//!   coordinates, with analytic gradients;
//! * anything else: geodesic line-search descent toward the support points.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spaces::{Point, Space, WeightedTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMeasure {
    pub support: Vec<Point>,
    pub weights: Vec<f64>,
}

impl FiniteMeasure {
    pub fn new(space: &Space, support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::InvalidMeasure("support and weights must be non-empty and of equal length".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        for x in &support {
            space.validate(x)?;
        }
        Ok(FiniteMeasure { support, weights })
    }

    /// Normalizes nonnegative weights and drops zero-weight atoms.
    pub fn normalized(space: &Space, support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::InvalidMeasure("support and weights differ in length".into()));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidMeasure("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("total weight is zero".into()));
        }
        let (s, w): (Vec<_>, Vec<_>) =
            support.into_iter().zip(weights).filter(|(_, w)| *w > 0.0).map(|(x, w)| (x, w / total)).unzip();
        Self::new(space, s, w)
    }

    pub fn uniform(space: &Space, support: Vec<Point>) -> Result<Self> {
        let n = support.len();
        Self::normalized(space, support, vec![1.0; n])
    }

    pub fn dirac(space: &Space, x: Point) -> Result<Self> {
        Self::new(space, vec![x], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// `(g·σ)`: the measure pushed forward by a point map.
    pub fn map(&self, f: impl Fn(&[f64]) -> Point) -> FiniteMeasure {
        FiniteMeasure { support: self.support.iter().map(|x| f(x)).collect(), weights: self.weights.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarycenterResult {
    pub center: Point,
    /// `d_p(σ, c)^p`.
    pub moment: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `Σ σ(x) d(x,y)^p`.
pub fn moment(space: &Space, sigma: &FiniteMeasure, y: &[f64], p: f64) -> f64 {
    sigma.support.iter().zip(&sigma.weights).map(|(x, w)| w * space.dist(x, y).powf(p)).sum()
}

const NEWTON_CAP: usize = 1000;
const DESCENT_CAP: usize = 10_000;

/// The unique minimizer of the p-th moment of `sigma`.
pub fn p_center(space: &Space, sigma: &FiniteMeasure, p: f64, tol: f64) -> Result<BarycenterResult> {
    if !(tol > 0.0) {
        return Err(Error::OutOfRange(format!("tol must be positive (got {tol})")));
    }
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::OutOfRange(format!("p-centers need p >= 2 (got {p})")));
    }
    let first = &sigma.support[0];
    if sigma.support.iter().all(|x| space.dist(x, first) == 0.0) {
        return Ok(BarycenterResult { center: first.clone(), moment: 0.0, iterations: 0, converged: true });
    }
    let (center, iterations, converged) = solve(space, sigma, p, tol)?;
    if !converged {
        return Err(Error::NoConvergence { iterations, residual: moment(space, sigma, &center, p) });
    }
    let moment = moment(space, sigma, &center, p);
    Ok(BarycenterResult { center, moment, iterations, converged })
}

fn solve(space: &Space, sigma: &FiniteMeasure, p: f64, tol: f64) -> Result<(Point, usize, bool)> {
    match space {
        Space::Euclidean { .. } if p == 2.0 => {
            let dim = space.point_len();
            let mut mean = vec![0.0; dim];
            for (x, w) in sigma.support.iter().zip(&sigma.weights) {
                for (m, c) in mean.iter_mut().zip(x) {
                    *m += w * c;
                }
            }
            Ok((mean, 1, true))
        }
        Space::Euclidean { dim: 1 } => {
            let xs: Vec<(f64, f64)> = sigma.support.iter().zip(&sigma.weights).map(|(x, w)| (x[0], *w)).collect();
            Ok((vec![line_center(&xs, p)], 1, true))
        }
        Space::Lp { dim, p: r } if *r == p => {
            let center = (0..*dim)
                .map(|i| {
                    let xs: Vec<(f64, f64)> =
                        sigma.support.iter().zip(&sigma.weights).map(|(x, w)| (x[i], *w)).collect();
                    line_center(&xs, p)
                })
                .collect();
            Ok((center, 1, true))
        }
        Space::Tree(t) => Ok((tree_center(space, t, sigma, p), t.edges().len(), true)),
        Space::Product { p: q, factors } if *q == p => {
            let mut center = Vec::with_capacity(space.point_len());
            let mut iters = 0;
            let mut ok = true;
            let parts: Vec<Vec<&[f64]>> = sigma.support.iter().map(|x| space.split(x)).collect();
            for (i, f) in factors.iter().enumerate() {
                let sub = FiniteMeasure {
                    support: parts.iter().map(|s| s[i].to_vec()).collect(),
                    weights: sigma.weights.clone(),
                };
                let first = &sub.support[0];
                if sub.support.iter().all(|x| f.dist(x, first) == 0.0) {
                    center.extend_from_slice(first);
                    continue;
                }
                let (c, it, conv) = solve(f, &sub, p, tol)?;
                center.extend(c);
                iters += it;
                ok &= conv;
            }
            Ok((center, iters, ok))
        }
        _ if smooth(space) => {
            let start = chart_start(space, sigma);
            let obj = |y: &[f64]| moment(space, sigma, y, p);
            let grad = |y: &[f64]| {
                let mut g = vec![0.0; y.len()];
                for (x, w) in sigma.support.iter().zip(&sigma.weights) {
                    for (gi, d) in g.iter_mut().zip(grad_dist_pow(space, y, x, p)) {
                        *gi += w * d;
                    }
                }
                g
            };
            Ok(newton(space, &obj, &grad, start, tol))
        }
        _ => Err(Error::Unsupported(format!(
            "p-centers at p={p} in this {} space (an l_p sum needs the same exponent)",
            space.kind()
        ))),
    }
}

/// Minimizer of `Σ w |t − x|^p` on the line, by bisection on the derivative.
fn line_center(xs: &[(f64, f64)], p: f64) -> f64 {
    let deriv = |t: f64| -> f64 {
        xs.iter()
            .map(|&(x, w)| {
                let d = t - x;
                w * p * d.abs().powf(p - 1.0) * d.signum()
            })
            .sum()
    };
    let lo = xs.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let hi = xs.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    bisect_root(deriv, lo, hi)
}

/// Root of a nondecreasing function on `[lo, hi]` (or the endpoint where it
/// has constant sign).
fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    if f(lo) >= 0.0 {
        return lo;
    }
    if f(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact tree p-center. Along an edge `(a, b)` the distance to any point off
/// the edge is `s + d(a,x)` or `w − s + d(b,x)`, whichever side `x` hangs
/// from, so the moment is a convex function of the offset `s`.
fn tree_center(space: &Space, t: &WeightedTree, sigma: &FiniteMeasure, p: f64) -> Point {
    let mut best: Option<(f64, Point)> = None;
    for (e, &(a, b, w)) in t.edges().iter().enumerate() {
        let va = t.vertex_point(a);
        let vb = t.vertex_point(b);
        // Signed position c and weight: d(s) = |s − c|.
        let terms: Vec<(f64, f64)> = sigma
            .support
            .iter()
            .zip(&sigma.weights)
            .map(|(x, &wt)| {
                if x[0] as usize == e {
                    (x[1], wt)
                } else {
                    let da = space.dist(&va, x);
                    let db = space.dist(&vb, x);
                    if da <= db {
                        (-da, wt)
                    } else {
                        (w + db, wt)
                    }
                }
            })
            .collect();
        let deriv = |s: f64| -> f64 {
            terms
                .iter()
                .map(|&(c, wt)| {
                    let d = s - c;
                    wt * p * d.abs().powf(p - 1.0) * d.signum()
                })
                .sum()
        };
        let s = bisect_root(deriv, 0.0, w);
        let cand = t.canonical(&[e as f64, s]);
        let m = moment(space, sigma, &cand, p);
        let better = match &best {
            None => true,
            Some((bm, bp)) => m < *bm || (m == *bm && lex_less(&cand, bp)),
        };
        if better {
            best = Some((m, cand));
        }
    }
    best.map(|b| b.1).unwrap_or_else(|| t.vertex_point(0))
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

/// Whether every coordinate of the space is a smooth chart.
fn smooth(space: &Space) -> bool {
    match space {
        Space::Product { factors, .. } => factors.iter().all(smooth),
        s => s.is_smooth_chart(),
    }
}

/// Coordinate mean, which lies in the disk when all atoms do.
fn chart_start(space: &Space, sigma: &FiniteMeasure) -> Point {
    let mut y = vec![0.0; space.point_len()];
    for (x, w) in sigma.support.iter().zip(&sigma.weights) {
        for (a, b) in y.iter_mut().zip(x) {
            *a += w * b;
        }
    }
    y
}

/// Gradient of `y ↦ d(y, x)^p` in coordinates. Requires a smooth space and
/// `p ≥ 2` (or `y ≠ x`).
pub(crate) fn grad_dist_pow(space: &Space, y: &[f64], x: &[f64], p: f64) -> Vec<f64> {
    match space {
        Space::Euclidean { .. } => {
            let d = space.dist(y, x);
            let s = if d == 0.0 { 0.0 } else { p * d.powf(p - 2.0) };
            y.iter().zip(x).map(|(a, b)| s * (a - b)).collect()
        }
        Space::Lp { p: r, .. } => {
            let d = space.dist(y, x);
            if d == 0.0 {
                return vec![0.0; y.len()];
            }
            let s = p * d.powf(p - r);
            y.iter()
                .zip(x)
                .map(|(a, b)| {
                    let u = a - b;
                    s * u.abs().powf(r - 1.0) * u.signum()
                })
                .collect()
        }
        Space::Hyperbolic => {
            let dx = y[0] - x[0];
            let dy = y[1] - x[1];
            let dd = dx * dx + dy * dy;
            if dd == 0.0 {
                return vec![0.0, 0.0];
            }
            let a = 1.0 - y[0] * y[0] - y[1] * y[1];
            let b = 1.0 - x[0] * x[0] - x[1] * x[1];
            let delta = 2.0 * dd / (a * b);
            let d = space.dist(y, x);
            let root = (delta * (delta + 2.0)).sqrt();
            let r = if root == 0.0 { 1.0 } else { d / root };
            let k = 4.0 / (a * b);
            let scale = p * d.powf(p - 2.0) * r * k;
            vec![scale * (dx + dd * y[0] / a), scale * (dy + dd * y[1] / a)]
        }
        Space::Product { p: q, factors } => {
            let ys = space.split(y);
            let xs = space.split(x);
            let ds: Vec<f64> = factors.iter().zip(&ys).zip(&xs).map(|((f, a), b)| f.dist(a, b)).collect();
            let s: f64 = ds.iter().map(|d| d.powf(*q)).sum();
            if s == 0.0 {
                return vec![0.0; y.len()];
            }
            let outer = (p / q) * s.powf(p / q - 1.0);
            factors
                .iter()
                .zip(&ys)
                .zip(&xs)
                .flat_map(|((f, a), b)| grad_dist_pow(f, a, b, *q).into_iter().map(move |g| outer * g))
                .collect()
        }
        Space::Tree(_) => panic!("trees have no smooth chart"),
    }
}

/// Damped Newton with a finite-difference Hessian of the analytic gradient.
/// Stops once half the Newton decrement (the predicted gap to the minimum)
/// is below `tol / 100`.
pub(crate) fn newton(
    space: &Space,
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    start: Point,
    tol: f64,
) -> (Point, usize, bool) {
    let n = start.len();
    let mut y = start;
    let mut fy = f(&y);
    for it in 1..=NEWTON_CAP {
        let g = DVector::from_vec(grad(&y));
        let gnorm = g.norm();
        if gnorm == 0.0 {
            return (y, it, true);
        }
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let step = 1e-6 * (1.0 + y[j].abs());
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += step;
            ym[j] -= step;
            let (gp, gm) = if space.validate(&ym).is_ok() && space.validate(&yp).is_ok() {
                (grad(&yp), grad(&ym))
            } else {
                (grad(&yp), grad(&y))
            };
            for i in 0..n {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let mut dir = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -&g,
        };
        let mut decrement = -g.dot(&dir);
        if !(decrement > 0.0) {
            dir = -&g;
            decrement = gnorm * gnorm;
        }
        if decrement / 2.0 <= tol * 1e-2 && decrement <= 1e-24_f64.max(tol * 1e-6) {
            return (y, it, true);
        }
        // Backtracking line search that also keeps the iterate in the space.
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Point = y.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            if space.validate(&cand).is_ok() {
                let fc = f(&cand);
                if fc <= fy - 1e-4 * t * decrement || (fc <= fy && t * dir.norm() < 1e-15 * (1.0 + norm(&y))) {
                    let improvement = fy - fc;
                    y = cand;
                    fy = fc;
                    moved = true;
                    if improvement <= tol * 1e-3 && decrement / 2.0 <= tol * 1e-2 {
                        return (y, it, true);
                    }
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            // No representable descent left: we are at the minimum to
            // floating-point accuracy.
            return (y, it, decrement / 2.0 <= tol.max(1e-12 * (1.0 + fy.abs())));
        }
    }
    (y, NEWTON_CAP, false)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Golden-section minimum of a unimodal function on `[0, 1]`.
fn golden(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    let ft = f(t);
    let f0 = f(0.0);
    if f0 <= ft {
        (0.0, f0)
    } else {
        (t, ft)
    }
}

/// Derivative-free descent: repeated exact line searches along the
/// geodesics from the current point to each support atom. Slow, and only
/// reliable where the moment is smooth; kept as an independent cross-check.
pub fn geodesic_descent(space: &Space, sigma: &FiniteMeasure, p: f64, tol: f64) -> (Point, usize, bool) {
    let mut y = if p == 2.0 { inductive_mean(space, sigma, 2000, 0) } else { sigma.support[0].clone() };
    let mut fy = moment(space, sigma, &y, p);
    for sweep in 1..=DESCENT_CAP {
        let before = fy;
        for x in &sigma.support {
            let (t, ft) = golden(|t| moment(space, sigma, &space.geodesic_unchecked(&y, x, t), p));
            if ft < fy {
                y = space.geodesic_unchecked(&y, x, t);
                fy = ft;
            }
        }
        if before - fy <= tol * 1e-3 {
            return (y, sweep, true);
        }
    }
    (y, DESCENT_CAP, false)
}

/// Sturm's inductive mean: `y_{k+1} = [y_k, x_k]_{1/(k+1)}` with `x_k`
/// drawn from `σ`. Converges to the barycenter (`p = 2`) in CAT(0) spaces.
pub fn inductive_mean(space: &Space, sigma: &FiniteMeasure, steps: usize, seed: u64) -> Point {
    let mut rng = seed::rng(seed, &[0x7374_7572]);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut r = rng.random::<f64>();
        for (i, w) in sigma.weights.iter().enumerate() {
            if r < *w {
                return i;
            }
            r -= w;
        }
        sigma.weights.len() - 1
    };
    let mut y = sigma.support[draw(&mut rng)].clone();
    for k in 1..steps {
        let x = &sigma.support[draw(&mut rng)];
        y = space.geodesic_unchecked(&y, x, 1.0 / (k as f64 + 1.0));
    }
    y
}

/// Radius function `r_A(y) = max_a d(y, a)`.
pub fn radius(space: &Space, points: &[Point], y: &[f64]) -> f64 {
    points.iter().map(|a| space.dist(y, a)).fold(0.0, f64::max)
}

/// Minimizer of the radius function of a finite set.
pub fn circumcenter(space: &Space, points: &[Point], tol: f64) -> Result<Point> {
    if points.is_empty() {
        return Err(Error::InvalidMeasure("circumcenter of an empty set".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::OutOfRange(format!("tol must be positive (got {tol})")));
    }
    for a in points {
        space.validate(a)?;
    }
    if points.iter().all(|a| space.dist(a, &points[0]) == 0.0) {
        return Ok(points[0].clone());
    }
    match space {
        Space::Tree(_) | Space::Euclidean { dim: 1 } => Ok(diameter_midpoint(space, points)),
        _ if smooth(space) => Ok(smooth_circumcenter(space, points, tol)),
        _ => farthest_point_descent(space, points, tol),
    }
}

/// In an ℝ-tree the circumcenter is the midpoint of any diameter.
fn diameter_midpoint(space: &Space, points: &[Point]) -> Point {
    let mut best = (0.0, 0, 0);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = space.dist(&points[i], &points[j]);
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let m = space.geodesic_unchecked(&points[best.1], &points[best.2], 0.5);
    match space {
        Space::Tree(t) => t.canonical(&m),
        _ => m,
    }
}

/// Log-sum-exp smoothing of `max_a d(y,a)²` with increasing sharpness, then
/// an active-set Gauss-Newton solve of the optimality conditions
/// `d(y,a_i)² = r` (active `i`), `Σ λ_i ∇d(y,a_i)² = 0`, `Σ λ_i = 1`.
fn smooth_circumcenter(space: &Space, points: &[Point], tol: f64) -> Point {
    let diam2 = points
        .iter()
        .flat_map(|a| points.iter().map(move |b| (a, b)))
        .map(|(a, b)| space.dist(a, b).powi(2))
        .fold(0.0, f64::max);
    let sq = |y: &[f64], a: &[f64]| space.dist(y, a).powi(2);
    let mut y = chart_start(
        space,
        &FiniteMeasure { support: points.to_vec(), weights: vec![1.0 / points.len() as f64; points.len()] },
    );
    let mut beta = 1.0 / diam2;
    let mut weights = vec![0.0; points.len()];
    for _ in 0..25 {
        let b = beta;
        let lse = |y: &[f64]| {
            let vals: Vec<f64> = points.iter().map(|a| b * sq(y, a)).collect();
            let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()) / b
        };
        let soft = |y: &[f64]| -> Vec<f64> {
            let vals: Vec<f64> = points.iter().map(|a| b * sq(y, a)).collect();
            let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = vals.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        };
        let grad = |y: &[f64]| {
            let w = soft(y);
            let mut g = vec![0.0; y.len()];
            for (a, wi) in points.iter().zip(&w) {
                for (gi, d) in g.iter_mut().zip(grad_dist_pow(space, y, a, 2.0)) {
                    *gi += wi * d;
                }
            }
            g
        };
        let (ny, _, _) = newton(space, &lse, &grad, y.clone(), tol * 1e-4 * diam2);
        y = ny;
        weights = soft(&y);
        beta *= 4.0;
    }
    active_set_polish(space, points, y.clone(), &weights).unwrap_or(y)
}

fn active_set_polish(space: &Space, points: &[Point], y0: Point, weights: &[f64]) -> Option<Point> {
    let r0 = radius(space, points, &y0);
    let active: Vec<usize> =
        (0..points.len()).filter(|&i| weights[i] > 1e-6 || space.dist(&y0, &points[i]) >= r0 * (1.0 - 1e-6)).collect();
    let n = y0.len();
    let k = active.len();
    // Unknowns: y (n), λ (k), r (1).
    let residual = |z: &[f64]| -> Vec<f64> {
        let (y, rest) = z.split_at(n);
        let (lam, r) = rest.split_at(k);
        let mut out = Vec::with_capacity(k + n + 1);
        for &i in &active {
            out.push(space.dist(y, &points[i]).powi(2) - r[0]);
        }
        let mut g = vec![0.0; n];
        for (j, &i) in active.iter().enumerate() {
            for (gi, d) in g.iter_mut().zip(grad_dist_pow(space, y, &points[i], 2.0)) {
                *gi += lam[j] * d;
            }
        }
        out.extend(g);
        out.push(lam.iter().sum::<f64>() - 1.0);
        out
    };
    let lam_sum: f64 = active.iter().map(|&i| weights[i]).sum();
    let mut z: Vec<f64> = y0.clone();
    z.extend(active.iter().map(|&i| weights[i] / lam_sum.max(1e-300)));
    z.push(r0 * r0);
    let mut best = (radius(space, points, &y0), y0.clone());
    for _ in 0..50 {
        let f0 = residual(&z);
        let res = norm(&f0);
        if res < 1e-15 {
            break;
        }
        let m = f0.len();
        let mut jac = DMatrix::zeros(m, z.len());
        for c in 0..z.len() {
            let h = 1e-7 * (1.0 + z[c].abs());
            let mut zp = z.clone();
            zp[c] += h;
            if c < n && space.validate(&zp[..n]).is_err() {
                zp[c] -= 2.0 * h;
                let fm = residual(&zp);
                for r in 0..m {
                    jac[(r, c)] = (f0[r] - fm[r]) / h;
                }
            } else {
                let fp = residual(&zp);
                for r in 0..m {
                    jac[(r, c)] = (fp[r] - f0[r]) / h;
                }
            }
        }
        let step = jac.svd(true, true).solve(&DVector::from_vec(f0.clone()), 1e-12).ok()?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if space.validate(&cand[..n]).is_ok() && norm(&residual(&cand)) < res {
                z = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let y = &z[..n];
        let r = radius(space, points, y);
        if r < best.0 {
            best = (r, y.to_vec());
        }
    }
    Some(best.1)
}

/// Generic minimax descent: step toward the farthest point by `t_k`, with
/// `t_k` halved whenever the radius fails to drop.
fn farthest_point_descent(space: &Space, points: &[Point], tol: f64) -> Result<Point> {
    let mut y = points[0].clone();
    let mut r = radius(space, points, &y);
    let mut t = 0.5;
    for it in 0..DESCENT_CAP * 10 {
        let far = points.iter().max_by(|a, b| space.dist(&y, a).total_cmp(&space.dist(&y, b))).expect("non-empty");
        let cand = space.geodesic_unchecked(&y, far, t);
        let rc = radius(space, points, &cand);
        if rc < r {
            y = cand;
            r = rc;
        } else {
            t *= 0.5;
        }
        if t * r < tol * 1e-3 {
            return Ok(y);
        }
        if it + 1 == DESCENT_CAP * 10 {
            break;
        }
    }
    Err(Error::NoConvergence { iterations: DESCENT_CAP * 10, residual: t * r })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub p: f64,
    pub c: f64,
    pub center: Point,
    pub min_moment: f64,
    pub samples: usize,
    /// `min_y [d_p(σ,y)^p − d_p(σ,c)^p − c^p d(c,y)^p]`.
    pub min_slack: f64,
    pub witness: Option<Point>,
}

/// Samples points `y` (half global, half near the center) and reports the
/// smallest slack of the quadratic-growth inequality around the p-center.
pub fn growth_check(space: &Space, sigma: &FiniteMeasure, p: f64, samples: usize, seed: u64) -> Result<GrowthReport> {
    let c = space
        .convexity_constant(p)
        .ok_or_else(|| Error::Unsupported(format!("no convexity constant for a {} space at p={p}", space.kind())))?;
    let tol = if matches!(space, Space::Tree(_)) { 1e-6 } else { 1e-8 };
    let res = p_center(space, sigma, p, tol)?;
    let mut rng = seed::rng(seed, &[0x6772_6f77]);
    let spread = sigma.support.iter().map(|x| space.dist(x, &res.center)).fold(0.0, f64::max).max(1e-3);
    let mut min_slack = f64::INFINITY;
    let mut witness = None;
    for i in 0..samples {
        let y = if i % 2 == 0 {
            space.random_point(&mut rng)
        } else {
            space.perturb(&res.center, spread * rng.random::<f64>(), &mut rng)
        };
        let s = moment(space, sigma, &y, p) - res.moment - c.powf(p) * space.dist(&res.center, &y).powf(p);
        if s < min_slack {
            min_slack = s;
            witness = Some(y);
        }
    }
    Ok(GrowthReport { p, c, center: res.center, min_moment: res.moment, samples, min_slack, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::Isometry;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_measure(space: &Space, atoms: usize, seed: u64) -> FiniteMeasure {
        let mut rng = seed::rng(seed, &[1]);
        let support = (0..atoms).map(|_| space.random_point(&mut rng)).collect();
        let weights = (0..atoms).map(|_| 0.1 + rng.random::<f64>()).collect();
        FiniteMeasure::normalized(space, support, weights).unwrap()
    }

    fn spaces() -> Vec<Space> {
        let tree = WeightedTree::new(5, &[(0, 1, 1.0), (1, 2, 2.0), (1, 3, 0.5), (3, 4, 1.5)]).unwrap();
        vec![
            Space::real_line(),
            Space::euclidean(3),
            Space::lp(2, 3.0).unwrap(),
            Space::Hyperbolic,
            Space::tree(tree.clone()),
            Space::product(2.0, vec![Space::Hyperbolic, Space::euclidean(1)]).unwrap(),
            Space::product(3.0, vec![Space::tree(tree), Space::euclidean(1)]).unwrap(),
        ]
    }

    #[test]
    fn line_examples() {
        let r = Space::real_line();
        let s = FiniteMeasure::new(&r, vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert!((p_center(&r, &s, 2.0, 1e-10).unwrap().center[0] - 0.5).abs() < 1e-12);
        let s = FiniteMeasure::new(&r, vec![vec![0.0], vec![1.0]], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let c = p_center(&r, &s, 4.0, 1e-10).unwrap().center[0];
        // Newton oracle on (2/3)t⁴ + (1/3)(1−t)⁴.
        let mut t: f64 = 0.5;
        for _ in 0..50 {
            let g = 8.0 / 3.0 * t.powi(3) - 4.0 / 3.0 * (1.0 - t).powi(3);
            let h = 8.0 * t * t + 4.0 * (1.0 - t).powi(2);
            t -= g / h;
        }
        assert!((c - t).abs() < 1e-10);
        assert!((c - 1.0 / (1.0 + 2f64.cbrt())).abs() < 1e-10);
    }

    #[test]
    fn euclidean_p2_is_the_linear_mean() {
        let e = Space::euclidean(3);
        let s = random_measure(&e, 7, 3);
        let c = p_center(&e, &s, 2.0, 1e-10).unwrap().center;
        for i in 0..3 {
            let m: f64 = s.support.iter().zip(&s.weights).map(|(x, w)| w * x[i]).sum();
            assert!((c[i] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn centers_beat_every_sampled_point() {
        let mut rng = seed::rng(2, &[]);
        for space in spaces() {
            for p in [2.0, 3.0] {
                let s = random_measure(&space, 5, 7);
                let res = match p_center(&space, &s, p, 1e-9) {
                    Err(Error::Unsupported(_)) => continue,
                    r => r.unwrap(),
                };
                space.validate(&res.center).unwrap();
                for x in &s.support {
                    assert!(res.moment <= moment(&space, &s, x, p) + 1e-9);
                }
                for _ in 0..300 {
                    let y = space.perturb(&res.center, 0.3 * rng.random::<f64>(), &mut rng);
                    let m = moment(&space, &s, &y, p);
                    assert!(res.moment <= m + 1e-8, "{} p={p}: {} > {m}", space.kind(), res.moment);
                }
            }
        }
    }

    #[test]
    fn smooth_solver_matches_generic_descent() {
        let h = Space::Hyperbolic;
        let s = random_measure(&h, 6, 5);
        for p in [2.0, 4.0] {
            let a = p_center(&h, &s, p, 1e-10).unwrap();
            let (b, _, ok) = geodesic_descent(&h, &s, p, 1e-12);
            assert!(ok);
            assert!(h.dist(&a.center, &b) < 1e-4, "p={p}");
            assert!(a.moment <= moment(&h, &s, &b, p) + 1e-12);
        }
    }

    #[test]
    fn inductive_mean_approaches_the_barycenter() {
        let h = Space::Hyperbolic;
        let s = random_measure(&h, 4, 9);
        let c = p_center(&h, &s, 2.0, 1e-10).unwrap().center;
        let y = inductive_mean(&h, &s, 200_000, 1);
        assert!(h.dist(&c, &y) < 2e-2);
    }

    #[test]
    fn tree_center_on_a_star() {
        // Equal mass at three unit leaves: the hub.
        let t = WeightedTree::star(3).unwrap();
        let space = Space::tree(t.clone());
        let s = FiniteMeasure::uniform(&space, (1..=3).map(|v| t.vertex_point(v)).collect()).unwrap();
        let c = p_center(&space, &s, 2.0, 1e-8).unwrap().center;
        assert!(space.dist(&c, &t.vertex_point(0)) < 1e-12);
        // Two leaves, 3:1: on the path, a quarter from the heavy leaf... for
        // p = 2, the 1D mean of positions 0 and 2 with weights 3/4, 1/4.
        let s = FiniteMeasure::new(&space, vec![t.vertex_point(1), t.vertex_point(2)], vec![0.75, 0.25]).unwrap();
        let c = p_center(&space, &s, 2.0, 1e-8).unwrap().center;
        assert!((space.dist(&c, &t.vertex_point(1)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let r = Space::real_line();
        assert!(FiniteMeasure::new(&r, vec![], vec![]).is_err());
        assert!(FiniteMeasure::new(&r, vec![vec![0.0]], vec![0.5]).is_err());
        assert!(FiniteMeasure::new(&Space::Hyperbolic, vec![vec![1.0, 0.0]], vec![1.0]).is_err());
        let s = FiniteMeasure::dirac(&r, vec![2.0]).unwrap();
        assert!(p_center(&r, &s, 2.0, 0.0).is_err());
        assert!(p_center(&r, &s, 1.0, 1e-8).is_err());
        assert_eq!(p_center(&r, &s, 3.0, 1e-8).unwrap().center, vec![2.0]);
    }

    #[test]
    fn equivariance_under_isometries() {
        let cases = vec![
            (Space::euclidean(2), Isometry::rotation2(0.4).compose(&Isometry::translation(vec![0.5, 1.0])).unwrap()),
            (Space::Hyperbolic, Isometry::disk_translation(0.6).compose(&Isometry::disk_rotation(2.0)).unwrap()),
            (Space::tree(WeightedTree::star(3).unwrap()), Isometry::tree(vec![0, 3, 1, 2]).unwrap()),
        ];
        for (space, g) in cases {
            let s = random_measure(&space, 5, 11);
            let gs = s.map(|x| g.apply(&space, x));
            for p in [2.0, 3.0] {
                let c = p_center(&space, &s, p, 1e-10).unwrap().center;
                let gc = p_center(&space, &gs, p, 1e-10).unwrap().center;
                assert!(space.dist(&g.apply(&space, &c), &gc) < 1e-7, "{}", space.kind());
            }
        }
    }

    #[test]
    fn circumcenter_examples() {
        let r = Space::real_line();
        let c = circumcenter(&r, &[vec![0.0], vec![1.0]], 1e-10).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-12);
        let x = vec![0.3, -0.2];
        assert_eq!(circumcenter(&Space::Hyperbolic, &[x.clone()], 1e-9).unwrap(), x);
        let e = Space::euclidean(2);
        let tri = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]];
        let c = circumcenter(&e, &tri, 1e-10).unwrap();
        for a in &tri {
            assert!((e.dist(&c, a) - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        }
        // Obtuse triangle: the midpoint of the long side.
        let obtuse = vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![2.0, 0.5]];
        let c = circumcenter(&e, &obtuse, 1e-10).unwrap();
        assert!(e.dist(&c, &[2.0, 0.0]) < 1e-9);
    }

    #[test]
    fn circumcenters_are_local_minima_of_the_radius() {
        let mut rng = seed::rng(6, &[]);
        for space in spaces() {
            let pts: Vec<Point> = (0..6).map(|_| space.random_point(&mut rng)).collect();
            let c = circumcenter(&space, &pts, 1e-10).unwrap();
            let r = radius(&space, &pts, &c);
            for _ in 0..500 {
                let y = space.perturb(&c, 0.2 * rng.random::<f64>(), &mut rng);
                assert!(radius(&space, &pts, &y) >= r - 1e-7, "{}", space.kind());
            }
        }
    }

    #[test]
    fn growth_examples() {
        let e = Space::euclidean(2);
        let s = random_measure(&e, 5, 1);
        let g = growth_check(&e, &s, 2.0, 2000, 1).unwrap();
        assert!(g.min_slack.abs() < 1e-9);
        let r = Space::real_line();
        let d = FiniteMeasure::dirac(&r, vec![0.0]).unwrap();
        assert!(growth_check(&r, &d, 2.0, 500, 2).unwrap().min_slack.abs() < 1e-12);
        let h = Space::Hyperbolic;
        let s = random_measure(&h, 5, 3);
        let g = growth_check(&h, &s, 2.0, 10_000, 4).unwrap();
        assert!(g.min_slack >= -1e-9, "{}", g.min_slack);
    }

    #[test]
    fn sublevel_sets_are_small() {
        let mut rng = seed::rng(8, &[]);
        for space in spaces() {
            let p = 2.0;
            let Some(c) = space.convexity_constant(p) else { continue };
            let s = random_measure(&space, 4, 2);
            let res = p_center(&space, &s, p, 1e-10).unwrap();
            for _ in 0..500 {
                let y = space.perturb(&res.center, rng.random::<f64>(), &mut rng);
                let eps = moment(&space, &s, &y, p) - res.moment;
                let bound = (4.0 * eps.max(0.0) / c.powf(p)).powf(1.0 / p);
                assert!(space.dist(&y, &res.center) <= bound + 1e-6);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn line_center_is_stationary(xs in proptest::collection::vec((-5.0f64..5.0, 0.1f64..1.0), 1..6), p in 2.0f64..6.0) {
            let r = Space::real_line();
            let (pts, ws): (Vec<_>, Vec<_>) = xs.into_iter().map(|(x, w)| (vec![x], w)).unzip();
            let s = FiniteMeasure::normalized(&r, pts, ws).unwrap();
            let c = p_center(&r, &s, p, 1e-10).unwrap();
            for dy in [-1e-4, 1e-4] {
                prop_assert!(c.moment <= moment(&r, &s, &[c.center[0] + dy], p) + 1e-12);
            }
        }
    }
}
