//! Finite groups acting by isometries, equivariant energies, the nonlinear
//! averaging operator and its iteration to a fixed point.
//!
//! The Cayley graph of a finite group has a single orbit of vertices, so an
//! equivariant map is determined by its value `y0 = f(x0)` and every energy
//! reduces to a sum over group elements.

use serde::{Deserialize, Serialize};

use crate::barycenter::{p_center, FiniteMeasure};
use crate::error::{Error, Result};
use crate::graph::UndirectedGraph;
use crate::markov::standard_walk;
use crate::poincare::modulus_estimate;
use crate::random_group::{effective_simulation_check, EffectiveSimulation, Labeling};
use crate::seed;
use crate::spaces::{Isometry, Point, Space, SpaceDescriptor};

const MAX_ORDER: usize = 2000;
const PROBES: usize = 6;
const SAME_TOL: f64 = 1e-9;

/// A finite group given by its isometries, with a symmetric generating
/// multiset `S`.
#[derive(Debug, Clone)]
pub struct GroupAction {
    pub space: Space,
    pub elements: Vec<Isometry>,
    /// Indices into `elements`, with repetition.
    pub generators: Vec<usize>,
    /// `mult[a][b]` is the index of `ρ(a)∘ρ(b)`.
    mult: Vec<Vec<usize>>,
    inverse: Vec<usize>,
    probes: Vec<Point>,
    images: Vec<Vec<Point>>,
}

/// JSON form: a space and the generating multiset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionDescriptor {
    pub space: SpaceDescriptor,
    pub generators: Vec<Isometry>,
}

impl GroupAction {
    /// Closes `generators` under composition. Elements are identified by
    /// their images of a few random probe points.
    pub fn new(space: Space, generators: Vec<Isometry>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidAction("empty generating set".into()));
        }
        for g in &generators {
            g.check(&space).map_err(|e| Error::InvalidAction(e.to_string()))?;
        }
        let mut rng = seed::rng(0x6163_7473, &[]);
        let probes: Vec<Point> = (0..PROBES).map(|_| space.random_point(&mut rng)).collect();
        let mut action = GroupAction {
            space,
            elements: Vec::new(),
            generators: Vec::new(),
            mult: Vec::new(),
            inverse: Vec::new(),
            probes,
            images: Vec::new(),
        };
        action.push(Isometry::Identity);
        let mut gen_idx = Vec::new();
        for g in &generators {
            gen_idx.push(action.find_or_push(g.clone())?);
        }
        let mut i = 0;
        while i < action.elements.len() {
            for &s in &gen_idx {
                let c = action.elements[i].compose(&action.elements[s])?;
                action.find_or_push(c)?;
            }
            i += 1;
        }
        let n = action.elements.len();
        let mut mult = vec![vec![0; n]; n];
        for (a, row) in mult.iter_mut().enumerate() {
            for (b, m) in row.iter_mut().enumerate() {
                let c = action.elements[a].compose(&action.elements[b])?;
                *m = action.find(&c).ok_or_else(|| Error::InvalidAction("generated set is not closed".into()))?;
            }
        }
        action.inverse = (0..n)
            .map(|a| {
                (0..n).find(|&b| mult[a][b] == 0).ok_or_else(|| Error::InvalidAction("element without inverse".into()))
            })
            .collect::<Result<_>>()?;
        action.mult = mult;
        action.generators = gen_idx;
        action.validate()?;
        Ok(action)
    }

    pub fn from_descriptor(d: &ActionDescriptor) -> Result<Self> {
        Self::new(Space::from_descriptor(&d.space)?, d.generators.clone())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: ActionDescriptor =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        Self::from_descriptor(&d)
    }

    /// The dihedral group of order `2n` on the plane or the disk, generated
    /// by `S = {r, r⁻¹, t, t}` with `r` the rotation by `2π/n` about the
    /// origin and `t` the reflection in the horizontal axis.
    pub fn dihedral(n: usize, space: Space) -> Result<Self> {
        if n < 2 {
            return Err(Error::OutOfRange("dihedral groups need n >= 2".into()));
        }
        let a = 2.0 * std::f64::consts::PI / n as f64;
        let (r, t) = match space {
            Space::Euclidean { dim: 2 } => (Isometry::rotation2(a), Isometry::reflection2(0.0)),
            Space::Hyperbolic => (Isometry::disk_rotation(a), Isometry::disk_conjugation()),
            _ => return Err(Error::Unsupported("dihedral actions are defined on the plane and the disk".into())),
        };
        Self::new(space, vec![r.clone(), r.inverse(), t.clone(), t])
    }

    /// `Z/2` acting on the line by `y ↦ −y`, with `S = {s, s}`.
    pub fn line_reflection() -> Self {
        let s = Isometry::point_reflection(&[0.0]);
        Self::new(Space::real_line(), vec![s.clone(), s]).expect("reflection generates Z/2")
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn apply(&self, g: usize, x: &[f64]) -> Point {
        self.elements[g].apply(&self.space, x)
    }

    pub fn multiply(&self, a: usize, b: usize) -> usize {
        self.mult[a][b]
    }

    pub fn inverse_of(&self, a: usize) -> usize {
        self.inverse[a]
    }

    fn push(&mut self, g: Isometry) -> usize {
        self.images.push(self.probes.iter().map(|x| g.apply(&self.space, x)).collect());
        self.elements.push(g);
        self.elements.len() - 1
    }

    fn find(&self, g: &Isometry) -> Option<usize> {
        let img: Vec<Point> = self.probes.iter().map(|x| g.apply(&self.space, x)).collect();
        self.images.iter().position(|other| other.iter().zip(&img).all(|(a, b)| self.space.dist(a, b) < SAME_TOL))
    }

    fn find_or_push(&mut self, g: Isometry) -> Result<usize> {
        if let Some(i) = self.find(&g) {
            return Ok(i);
        }
        if self.elements.len() >= MAX_ORDER {
            return Err(Error::InvalidAction(format!("group order exceeds {MAX_ORDER}")));
        }
        Ok(self.push(g))
    }

    /// Checks `S = S⁻¹` as multisets, the homomorphism property on all pairs
    /// at a random point, and that every element preserves distances.
    pub fn validate(&self) -> Result<()> {
        let n = self.order();
        let mut count = vec![0usize; n];
        for &s in &self.generators {
            count[s] += 1;
        }
        for a in 0..n {
            if count[a] != count[self.inverse[a]] {
                return Err(Error::InvalidAction("generating multiset is not symmetric".into()));
            }
        }
        let mut rng = seed::rng(0x686f_6d6f, &[]);
        let x = self.space.random_point(&mut rng);
        let y = self.space.random_point(&mut rng);
        for a in 0..n {
            let (ax, ay) = (self.apply(a, &x), self.apply(a, &y));
            if (self.space.dist(&ax, &ay) - self.space.dist(&x, &y)).abs() > 1e-10 * (1.0 + self.space.dist(&x, &y)) {
                return Err(Error::InvalidAction(format!("element {a} is not an isometry")));
            }
            for b in 0..n {
                let lhs = self.apply(a, &self.apply(b, &x));
                let rhs = self.apply(self.mult[a][b], &x);
                if self.space.dist(&lhs, &rhs) > 1e-10 {
                    return Err(Error::InvalidAction(format!("composition of {a} and {b} is inconsistent")));
                }
            }
        }
        Ok(())
    }

    /// `μ^n`: the law of `s_1⋯s_n` for i.i.d. uniform draws from `S`.
    pub fn walk(&self, n: usize) -> Vec<f64> {
        let step = self.step_law();
        self.walk_with(&step, n)
    }

    fn step_law(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.order()];
        for &s in &self.generators {
            mu[s] += 1.0 / self.generators.len() as f64;
        }
        mu
    }

    /// `n`-fold convolution power of `step`.
    pub fn walk_with(&self, step: &[f64], n: usize) -> Vec<f64> {
        let mut cur = vec![0.0; self.order()];
        cur[0] = 1.0;
        for _ in 0..n {
            let mut next = vec![0.0; self.order()];
            for (h, &a) in cur.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (s, &b) in step.iter().enumerate() {
                    if b > 0.0 {
                        next[self.mult[h][s]] += a * b;
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Diameter of `{y} ∪ S·y`.
    pub fn orbit_diameter(&self, y: &[f64]) -> f64 {
        let mut pts = vec![y.to_vec()];
        pts.extend(self.generators.iter().map(|&s| self.apply(s, y)));
        let mut d: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.max(self.space.dist(&pts[i], &pts[j]));
            }
        }
        d
    }
}

fn check_law(action: &GroupAction, mu: &[f64]) -> Result<()> {
    if mu.len() != action.order() || mu.iter().any(|&m| !(m >= 0.0)) || (mu.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidMeasure("walk must be a probability vector over the group".into()));
    }
    Ok(())
}

/// `E_μ(f) = ½ Σ_γ μ(γ) d(y0, ρ(γ)y0)^p`.
pub fn energy(action: &GroupAction, y0: &[f64], mu: &[f64], p: f64) -> Result<f64> {
    check_law(action, mu)?;
    action.space.validate(y0)?;
    Ok(0.5
        * mu.iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(g, &m)| m * action.space.dist(y0, &action.apply(g, y0)).powf(p))
            .sum::<f64>())
}

/// `f_* μ_{x0}`.
pub fn pushforward(action: &GroupAction, y0: &[f64], mu: &[f64]) -> Result<FiniteMeasure> {
    check_law(action, mu)?;
    let (pts, w): (Vec<Point>, Vec<f64>) =
        mu.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(g, &m)| (action.apply(g, y0), m)).unzip();
    FiniteMeasure::normalized(&action.space, pts, w)
}

/// New basepoint value of `A_μ f`: the `p`-center of the pushforward.
pub fn average_map(action: &GroupAction, y0: &[f64], mu: &[f64], p: f64, tol: f64) -> Result<Point> {
    Ok(p_center(&action.space, &pushforward(action, y0, mu)?, p, tol)?.center)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub energy: f64,
    pub value: Point,
    /// `E(f_k) / E(f_{k−1})`.
    pub contraction: Option<f64>,
    /// `d(f_k(x0), f_{k−1}(x0))`.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointRun {
    pub converged: bool,
    pub fixed_point: Option<Point>,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    /// Largest contraction factor over the last five rounds, when the
    /// energy decays geometrically there.
    pub geometric_rate: Option<f64>,
}

const CENTER_TOL: f64 = 1e-13;

/// `f_{k+1} = A_{μ^n} f_k` until `E_μ(f_k) < tol` and the generator orbit
/// of the value has diameter below `tol^{1/p}`.
pub fn iterate_to_fixed_point(
    action: &GroupAction,
    y0: &[f64],
    n: usize,
    p: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointRun> {
    if n == 0 || !(tol > 0.0) {
        return Err(Error::OutOfRange("need n >= 1 and tol > 0".into()));
    }
    let mu = action.walk(1);
    let mun = action.walk(n);
    let mut y = y0.to_vec();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut converged = false;
    for it in 0..=max_iter {
        let e = energy(action, &y, &mu, p)?;
        let contraction = trace.last().and_then(|t| (t.energy > 0.0).then(|| e / t.energy));
        let step = trace.last().map(|t| action.space.dist(&t.value, &y));
        trace.push(TraceEntry { iteration: it, energy: e, value: y.clone(), contraction, step });
        if e < tol && action.orbit_diameter(&y) < tol.powf(1.0 / p) {
            converged = true;
            break;
        }
        if it == max_iter {
            break;
        }
        y = average_map(action, &y, &mun, p, CENTER_TOL)?;
    }
    let tail: Vec<f64> = trace.iter().rev().take(5).filter_map(|t| t.contraction).collect();
    let geometric_rate = (tail.len() == 5).then(|| tail.iter().copied().fold(0.0, f64::max)).filter(|&c| c < 1.0);
    Ok(FixedPointRun {
        converged,
        fixed_point: converged.then(|| y.clone()),
        iterations: trace.len() - 1,
        trace,
        geometric_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        InequalityCheck { lhs, rhs, holds: lhs <= rhs + tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySuite {
    pub p: f64,
    pub n: usize,
    pub c: f64,
    pub energy: f64,
    pub energy_n: f64,
    /// `E_{μ^n}(f) ≤ n^{p−1} E_μ(f)`.
    pub bound_energies: InequalityCheck,
    /// `c^p d(f, A_μ f)^p ≤ 2 E_μ(f)`.
    pub avg_control: InequalityCheck,
    /// `Σ μ^n(γ) d(A_{μ^n}f(x0), ρ(γ)y0)^p ≤ 2^{p−1}(1 + 2/c^p) E_{μ^n}(f)`.
    pub cancellation: InequalityCheck,
    /// The same integral against `2 E_{μ^n}(f)`, the bound from minimality
    /// of the center.
    pub cancellation_minimal: InequalityCheck,
    pub holds: bool,
}

pub fn energy_inequality_suite(action: &GroupAction, y0: &[f64], p: f64, n: usize, tol: f64) -> Result<EnergySuite> {
    if n == 0 {
        return Err(Error::OutOfRange("n must be positive".into()));
    }
    let c = action
        .space
        .convexity_constant(p)
        .ok_or_else(|| Error::Unsupported(format!("no convexity constant for {} at p={p}", action.space.kind())))?;
    let cp = c.powf(p);
    let mu = action.walk(1);
    let mun = action.walk(n);
    let e = energy(action, y0, &mu, p)?;
    let en = energy(action, y0, &mun, p)?;
    let bound_energies = InequalityCheck::new(en, (n as f64).powf(p - 1.0) * e, tol);
    let a1 = average_map(action, y0, &mu, p, CENTER_TOL)?;
    let avg_control = InequalityCheck::new(cp * action.space.dist(y0, &a1).powf(p), 2.0 * e, tol);
    let an = average_map(action, y0, &mun, p, CENTER_TOL)?;
    let integral: f64 = mun
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(g, &m)| m * action.space.dist(&an, &action.apply(g, y0)).powf(p))
        .sum();
    let cancellation = InequalityCheck::new(integral, 2f64.powf(p - 1.0) * (1.0 + 2.0 / cp) * en, tol);
    let cancellation_minimal = InequalityCheck::new(integral, 2.0 * en, tol);
    Ok(EnergySuite {
        p,
        n,
        c,
        energy: e,
        energy_n: en,
        holds: bound_energies.holds && avg_control.holds && cancellation.holds,
        bound_energies,
        avg_control,
        cancellation,
        cancellation_minimal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionRow {
    pub n: usize,
    /// `E_{μ^j}(A_{μ^{jn}} f)`.
    pub energy_after: f64,
    /// `E_{μ^j}(f)`.
    pub energy_before: f64,
    /// `None` when both energies vanish.
    pub ratio: Option<f64>,
    /// `√(log n / n) · E_{μ^{jn}}(f) / E_{μ^j}(f)`.
    pub shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub j: usize,
    pub rows: Vec<ContractionRow>,
    /// Nonnegative least-squares fit `ratio ≈ c1·shape + c2/n`.
    pub c1: f64,
    pub c2: f64,
    pub degenerate: bool,
}

pub fn contraction_report(
    action: &GroupAction,
    y0: &[f64],
    p: f64,
    n_list: &[usize],
    j: usize,
) -> Result<ContractionReport> {
    if j == 0 || n_list.iter().any(|&n| n == 0) {
        return Err(Error::OutOfRange("j and every n must be positive".into()));
    }
    let muj = action.walk(j);
    let before = energy(action, y0, &muj, p)?;
    let rows: Vec<ContractionRow> = n_list
        .iter()
        .map(|&n| {
            let mujn = action.walk(j * n);
            let a = average_map(action, y0, &mujn, p, CENTER_TOL)?;
            let after = energy(action, &a, &muj, p)?;
            let en = energy(action, y0, &mujn, p)?;
            let nf = n as f64;
            Ok(ContractionRow {
                n,
                energy_after: after,
                energy_before: before,
                ratio: (before > 0.0).then(|| after / before),
                shape: if before > 0.0 { (nf.ln() / nf).sqrt() * en / before } else { 0.0 },
            })
        })
        .collect::<Result<_>>()?;
    let degenerate = before == 0.0;
    let (c1, c2) = if degenerate { (0.0, 0.0) } else { fit_nonnegative(&rows) };
    Ok(ContractionReport { j, rows, c1, c2, degenerate })
}

fn fit_nonnegative(rows: &[ContractionRow]) -> (f64, f64) {
    let data: Vec<(f64, f64, f64)> =
        rows.iter().filter_map(|r| r.ratio.map(|y| (r.shape, 1.0 / r.n as f64, y))).collect();
    let sse = |c1: f64, c2: f64| data.iter().map(|(a, b, y)| (y - c1 * a - c2 * b).powi(2)).sum::<f64>();
    let one = |sel: fn(&(f64, f64, f64)) -> f64| {
        let num: f64 = data.iter().map(|d| sel(d) * d.2).sum();
        let den: f64 = data.iter().map(|d| sel(d) * sel(d)).sum();
        if den > 0.0 {
            (num / den).max(0.0)
        } else {
            0.0
        }
    };
    let mut best = vec![(0.0, 0.0), (one(|d| d.0), 0.0), (0.0, one(|d| d.1))];
    let (saa, sab, sbb) = data.iter().fold((0.0, 0.0, 0.0), |s, d| (s.0 + d.0 * d.0, s.1 + d.0 * d.1, s.2 + d.1 * d.1));
    let (say, sby) = data.iter().fold((0.0, 0.0), |s, d| (s.0 + d.0 * d.2, s.1 + d.1 * d.2));
    let det = saa * sbb - sab * sab;
    if det.abs() > 1e-300 {
        let c1 = (say * sbb - sby * sab) / det;
        let c2 = (saa * sby - sab * say) / det;
        if c1 >= 0.0 && c2 >= 0.0 {
            best.push((c1, c2));
        }
    }
    best.into_iter().min_by(|a, b| sse(a.0, a.1).total_cmp(&sse(b.0, b.1))).expect("candidates")
}

/// A free-group action through a finite quotient: free generator `i` acts
/// as `action.elements[images[i]]`.
#[derive(Debug, Clone)]
pub struct FactorAction {
    pub action: GroupAction,
    pub images: Vec<usize>,
}

impl FactorAction {
    pub fn new(action: GroupAction, images: Vec<usize>) -> Result<Self> {
        if images.is_empty() || images.iter().any(|&i| i >= action.order()) {
            return Err(Error::InvalidAction("generator images must be group elements".into()));
        }
        Ok(FactorAction { action, images })
    }

    /// The image of `μ_X` (uniform on the `2k` letters) in the group.
    pub fn letter_law(&self) -> Vec<f64> {
        let k = self.images.len() as f64;
        let mut mu = vec![0.0; self.action.order()];
        for &g in &self.images {
            mu[g] += 0.5 / k;
            mu[self.action.inverse_of(g)] += 0.5 / k;
        }
        mu
    }

    /// `E_{μ_X^m}(f)` for the equivariant `f(w) = ρ(w)y0` on the tree.
    pub fn tree_energy(&self, y0: &[f64], m: usize, p: f64) -> Result<f64> {
        let law = self.action.walk_with(&self.letter_law(), m);
        energy(&self.action, y0, &law, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferRow {
    pub m: usize,
    /// `E_{μ_X^{jm}}(f)`.
    pub lhs: f64,
    /// `Λ^p E_{μ_X^j}(f)`.
    pub rhs: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub simulation: EffectiveSimulation,
    pub lambda: f64,
    pub lambda_exact: bool,
    pub rows: Vec<TransferRow>,
    /// Smallest ratio and the `m` achieving it; the measured constant.
    pub best: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct TransferParams {
    pub p: f64,
    pub q0: usize,
    pub m_max: usize,
    pub restarts: usize,
    pub seed: u64,
}

/// Compares `E_{μ_X^{jm}}(f)` with `Λ^p E_{μ_X^j}(f)` for `1 ≤ m ≤ m_max`,
/// with `Λ` the estimated Poincaré modulus of the target for the graph's
/// standard walk. Requires `j` even and an effectively simulating labeling
/// up to `q0`.
pub fn transfer_experiment(
    g: &UndirectedGraph,
    alpha: &Labeling,
    factor: &FactorAction,
    y0: &[f64],
    params: TransferParams,
) -> Result<TransferReport> {
    if alpha.j % 2 != 0 {
        return Err(Error::Prerequisite(format!("word length must be even (got {})", alpha.j)));
    }
    if factor.images.len() != alpha.k {
        return Err(Error::Prerequisite("factor action must assign an image to every generator".into()));
    }
    let simulation = effective_simulation_check(alpha, g, params.q0)?;
    if !simulation.ok {
        return Err(Error::Prerequisite(format!(
            "labeling does not effectively simulate up to q0={} (low ratio {:?}, high ratio {})",
            params.q0, simulation.worst_ratio_low, simulation.worst_ratio_high
        )));
    }
    let chain = standard_walk(g)?;
    let est = modulus_estimate(&chain, &factor.action.space, params.p, params.restarts, params.seed)?;
    let base = factor.tree_energy(y0, alpha.j, params.p)?;
    let rhs = est.lambda.powf(params.p) * base;
    let rows: Vec<TransferRow> = (1..=params.m_max)
        .map(|m| {
            let lhs = factor.tree_energy(y0, alpha.j * m, params.p)?;
            Ok(TransferRow { m, lhs, rhs, ratio: (rhs > 0.0).then(|| lhs / rhs) })
        })
        .collect::<Result<_>>()?;
    let best = rows.iter().filter_map(|r| r.ratio.map(|x| (r.m, x))).min_by(|a, b| a.1.total_cmp(&b.1));
    Ok(TransferReport { simulation, lambda: est.lambda, lambda_exact: est.exact, rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_group::sample_labeling;
    use crate::spaces::WeightedTree;

    fn d3() -> GroupAction {
        GroupAction::dihedral(3, Space::euclidean(2)).unwrap()
    }

    #[test]
    fn dihedral_group_structure() {
        let g = d3();
        assert_eq!(g.order(), 6);
        assert_eq!(g.generators.len(), 4);
        let h = GroupAction::dihedral(3, Space::Hyperbolic).unwrap();
        assert_eq!(h.order(), 6);
        assert_eq!(GroupAction::line_reflection().order(), 2);
        let w = g.walk(3);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // An asymmetric multiset is rejected.
        let r = Isometry::rotation2(2.0 * std::f64::consts::PI / 3.0);
        assert!(GroupAction::new(Space::euclidean(2), vec![r]).is_err());
    }

    #[test]
    fn energy_examples() {
        let z2 = GroupAction::line_reflection();
        let mu = z2.walk(1);
        let e = energy(&z2, &[1.5], &mu, 2.0).unwrap();
        assert!((e - 2.0 * 1.5 * 1.5).abs() < 1e-14);
        assert_eq!(energy(&z2, &[0.0], &mu, 2.0).unwrap(), 0.0);
        // Homogeneity.
        let g = d3();
        let mu = g.walk(2);
        for p in [2.0, 3.0] {
            let a = energy(&g, &[0.4, -0.3], &mu, p).unwrap();
            let b = energy(&g, &[1.2, -0.9], &mu, p).unwrap();
            assert!((b - 3f64.powf(p) * a).abs() < 1e-12 * b);
        }
        assert!(energy(&g, &[1.0, 0.0], &[1.0], 2.0).is_err());
    }

    #[test]
    fn linear_average() {
        let g = d3();
        let mu = g.walk(1);
        let y = [0.7, -0.2];
        let a = average_map(&g, &y, &mu, 2.0, 1e-13).unwrap();
        let mut lin = [0.0, 0.0];
        for (h, &m) in mu.iter().enumerate() {
            let z = g.apply(h, &y);
            lin[0] += m * z[0];
            lin[1] += m * z[1];
        }
        assert!((a[0] - lin[0]).abs() < 1e-12 && (a[1] - lin[1]).abs() < 1e-12);
        // Uniform on the two rotations: midpoint of the rotated images.
        let mut rot = vec![0.0; 6];
        rot[g.generators[0]] = 0.5;
        rot[g.generators[1]] = 0.5;
        let m = average_map(&g, &[1.0, 0.0], &rot, 2.0, 1e-13).unwrap();
        assert!((m[0] + 0.5).abs() < 1e-12 && m[1].abs() < 1e-12);
        assert_eq!(average_map(&g, &[0.0, 0.0], &mu, 2.0, 1e-13).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn iteration_finds_the_center() {
        for space in [Space::euclidean(2), Space::Hyperbolic] {
            let g = GroupAction::dihedral(3, space).unwrap();
            let run = iterate_to_fixed_point(&g, &[0.3, 0.2], 1, 2.0, 1e-14, 200).unwrap();
            assert!(run.converged);
            let y = run.fixed_point.unwrap();
            assert!(y[0].hypot(y[1]) < 1e-6);
            for w in run.trace.windows(2).skip(1) {
                assert!(w[1].energy <= w[0].energy * (1.0 + 1e-12));
            }
        }
        let g = d3();
        let run = iterate_to_fixed_point(&g, &[0.0, 0.0], 1, 2.0, 1e-14, 200).unwrap();
        assert_eq!(run.iterations, 0);
        let short = iterate_to_fixed_point(&g, &[1.0, 0.0], 1, 2.0, 1e-14, 3).unwrap();
        assert!(!short.converged && short.fixed_point.is_none());
    }

    #[test]
    fn inequality_suite() {
        let z2 = GroupAction::line_reflection();
        let s = energy_inequality_suite(&z2, &[0.8], 2.0, 2, 1e-9).unwrap();
        assert!(s.energy_n.abs() < 1e-15 || s.energy_n <= s.energy);
        assert!(s.holds);
        let c = energy_inequality_suite(&d3(), &[0.0, 0.0], 2.0, 3, 1e-9).unwrap();
        assert_eq!((c.energy, c.energy_n, c.cancellation.lhs), (0.0, 0.0, 0.0));
        for n in 1..=3 {
            let s = energy_inequality_suite(&d3(), &[1.0, 0.5], 2.0, n, 1e-9).unwrap();
            assert!(s.holds && s.cancellation_minimal.holds, "{s:?}");
        }
        let t = Space::tree(WeightedTree::star(3).unwrap());
        let act = GroupAction::new(
            t.clone(),
            vec![
                Isometry::tree(vec![0, 2, 3, 1]).unwrap(),
                Isometry::tree(vec![0, 3, 1, 2]).unwrap(),
                Isometry::tree(vec![0, 1, 3, 2]).unwrap(),
                Isometry::tree(vec![0, 1, 3, 2]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(act.order(), 6);
        let s = energy_inequality_suite(&act, &[1.0, 0.6], 4.0, 3, 1e-6).unwrap();
        assert!(s.holds, "{s:?}");
    }

    #[test]
    fn contraction_table() {
        let g = d3();
        let r = contraction_report(&g, &[1.0, 0.3], 2.0, &[1, 2, 3, 4, 5, 6], 1).unwrap();
        assert!(r.rows[0].ratio.unwrap() <= 1.0 + 1e-9);
        for w in r.rows.windows(2) {
            assert!(w[1].ratio.unwrap() <= w[0].ratio.unwrap() + 1e-12);
        }
        assert!(r.c1 >= 0.0 && r.c2 >= 0.0);
        let fixed = contraction_report(&g, &[0.0, 0.0], 2.0, &[1, 2], 1).unwrap();
        assert!(fixed.degenerate && fixed.rows.iter().all(|r| r.ratio.is_none()));
    }

    #[test]
    fn transfer() {
        let c5 = UndirectedGraph::cycle(5).unwrap();
        let g = d3();
        let factor = FactorAction::new(g.clone(), vec![g.generators[0], g.generators[2]]).unwrap();
        let alpha = (0..)
            .map(|s| sample_labeling(&c5, 2, 2, s).unwrap())
            .find(|a| effective_simulation_check(a, &c5, 0).unwrap().ok)
            .unwrap();
        let params = TransferParams { p: 2.0, q0: 0, m_max: 2, restarts: 4, seed: 1 };
        let r = transfer_experiment(&c5, &alpha, &factor, &[1.0, 0.2], params).unwrap();
        let (_, c) = r.best.unwrap();
        assert!(c <= 8.0, "{r:?}");
        // Rescaling the target scales both sides alike.
        let r2 = transfer_experiment(&c5, &alpha, &factor, &[2.0, 0.4], params).unwrap();
        assert!((r2.best.unwrap().1 - c).abs() < 1e-9 * c);
        let zero = transfer_experiment(&c5, &alpha, &factor, &[0.0, 0.0], params).unwrap();
        assert!(zero.rows.iter().all(|r| r.lhs == 0.0 && r.rhs == 0.0));
        let odd = sample_labeling(&c5, 2, 1, 0).unwrap();
        assert!(matches!(transfer_experiment(&c5, &odd, &factor, &[1.0, 0.0], params), Err(Error::Prerequisite(_))));
        let bad = Labeling::constant(&c5, 2, &[1, 2]).unwrap();
        assert!(matches!(transfer_experiment(&c5, &bad, &factor, &[1.0, 0.0], params), Err(Error::Prerequisite(_))));
    }

    #[test]
    fn descriptors_load() {
        let d = ActionDescriptor {
            space: Space::euclidean(2).descriptor(),
            generators: vec![Isometry::reflection2(0.0), Isometry::reflection2(0.0)],
        };
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(GroupAction::from_json(&json).unwrap().order(), 2);
    }
}
