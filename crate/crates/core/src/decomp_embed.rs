//! Padded stochastic decompositions of finite point sets and the snowflake
//! embedding of `(X, d^θ)` into Hilbert space.
//!
//! All metric notions are taken on the finite working set: a cluster's
//! diameter is the largest distance between its points, and
//! `d(x, X ∖ P(x))` is the distance to the nearest working point outside
//! the cluster (infinite when the cluster is everything).

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed;
use crate::spaces::{Point, Space, WeightedTree};

/// A finite metric space: points of some [`Space`] with their distance table.
#[derive(Debug, Clone)]
pub struct WorkingSet {
    pub space: Space,
    pub points: Vec<Point>,
    dist: Vec<f64>,
}

impl WorkingSet {
    pub fn new(space: Space, points: Vec<Point>) -> Result<Self> {
        for x in &points {
            space.validate(x)?;
        }
        let n = points.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = space.dist(&points[i], &points[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Ok(WorkingSet { space, points, dist })
    }

    /// `side × side` unit grid in the plane.
    pub fn grid(side: usize) -> Self {
        let pts = (0..side * side).map(|i| vec![(i % side) as f64, (i / side) as f64]).collect();
        Self::new(Space::euclidean(2), pts).expect("grid points are valid")
    }

    /// Points given as CSV rows of coordinates, in Euclidean space of the
    /// row width. Blank lines and `#` comments are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut pts: Vec<Point> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if let Some(first) = pts.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected {} columns, got {}", first.len(), row.len()),
                    });
                }
            }
            pts.push(row);
        }
        let dim = pts.first().map_or(1, Vec::len);
        Self::new(Space::euclidean(dim), pts)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// Smallest and largest nonzero distances.
    pub fn distance_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for &d in &self.dist {
            if d > 0.0 {
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        (hi > 0.0).then_some((lo, hi))
    }
}

/// A partition of a working set: `labels[i]` is the smallest index in the
/// cluster of point `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub labels: Vec<usize>,
}

impl Partition {
    /// Canonicalizes arbitrary cluster keys.
    pub fn from_keys<K: Eq + std::hash::Hash + Clone>(keys: &[K]) -> Self {
        let mut first = std::collections::HashMap::new();
        let labels = keys.iter().enumerate().map(|(i, k)| *first.entry(k.clone()).or_insert(i)).collect();
        Partition { labels }
    }

    pub fn max_diameter(&self, ws: &WorkingSet) -> f64 {
        let n = ws.len();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if self.labels[i] == self.labels[j] {
                    m = m.max(ws.dist(i, j));
                }
            }
        }
        m
    }

    /// `d(x, X ∖ P(x))` on the working set.
    pub fn boundary_distance(&self, ws: &WorkingSet, i: usize) -> f64 {
        (0..ws.len()).filter(|&j| self.labels[j] != self.labels[i]).map(|j| ws.dist(i, j)).fold(f64::INFINITY, f64::min)
    }

    /// Whether `B(x, r) ∩ X ⊆ P(x)`.
    pub fn pads(&self, ws: &WorkingSet, i: usize, r: f64) -> bool {
        (0..ws.len()).all(|j| self.labels[j] == self.labels[i] || ws.dist(i, j) > r)
    }

    pub fn cluster_count(&self) -> usize {
        self.labels.iter().enumerate().filter(|(i, l)| *i == **l).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    ShiftedGrid,
    TreeCut,
    NagataPeeling,
}

/// A random `Δ`-bounded decomposition with a declared padding `(ε, δ)`.
#[derive(Debug, Clone)]
pub struct DecompositionScheme {
    pub kind: SchemeKind,
    pub epsilon: f64,
    pub delta: f64,
    sampler: Sampler,
}

#[derive(Debug, Clone)]
enum Sampler {
    Grid { dim: usize },
    Tree { tree: Arc<WeightedTree>, root: usize },
    Intervals,
}

/// Randomly shifted axis-parallel grid with cells of side `Δ/√dim`. A point
/// is padded at radius `Δ/(4 dim)` when every coordinate is that far from
/// its cell walls, which happens with probability `(1 − 1/(2√dim))^dim`.
pub fn shifted_grid_scheme(dim: usize) -> Result<DecompositionScheme> {
    if dim == 0 {
        return Err(Error::OutOfRange("grid dimension must be positive".into()));
    }
    let d = dim as f64;
    Ok(DecompositionScheme {
        kind: SchemeKind::ShiftedGrid,
        epsilon: 1.0 / (4.0 * d),
        delta: (1.0 - 1.0 / (2.0 * d.sqrt())).powi(dim as i32),
        sampler: Sampler::Grid { dim },
    })
}

/// Bands of width `Δ/2` in the distance from `root` with a random offset;
/// each band is split by the ancestor at its lower edge. Padded at radius
/// `Δ/8` with probability `1/2`.
pub fn tree_cut_scheme(tree: Arc<WeightedTree>, root: usize) -> Result<DecompositionScheme> {
    if root >= tree.vertex_count() {
        return Err(Error::OutOfRange(format!("root {root} is not a vertex")));
    }
    Ok(DecompositionScheme {
        kind: SchemeKind::TreeCut,
        epsilon: 1.0 / 8.0,
        delta: 0.5,
        sampler: Sampler::Tree { tree, root },
    })
}

/// Nagata peeling of the interleaved-interval cover of a set on the line
/// (dimension 1): padded at radius `Δ/5` with probability `1/2`.
pub fn interval_peeling_scheme() -> DecompositionScheme {
    DecompositionScheme { kind: SchemeKind::NagataPeeling, epsilon: 0.2, delta: 0.5, sampler: Sampler::Intervals }
}

impl DecompositionScheme {
    /// One random `Δ`-bounded partition of the working set.
    pub fn sample(&self, ws: &WorkingSet, delta_scale: f64, rng: &mut ChaCha8Rng) -> Result<Partition> {
        if !(delta_scale > 0.0) {
            return Err(Error::OutOfRange(format!("scale must be positive (got {delta_scale})")));
        }
        match &self.sampler {
            Sampler::Grid { dim } => {
                if !matches!(ws.space, Space::Euclidean { dim: d } if d == *dim) {
                    return Err(Error::Unsupported(
                        "shifted grids need Euclidean points of the scheme's dimension".into(),
                    ));
                }
                let side = delta_scale / (*dim as f64).sqrt();
                let shift: Vec<f64> = (0..*dim).map(|_| rng.random::<f64>() * side).collect();
                let keys: Vec<Vec<i64>> = ws
                    .points
                    .iter()
                    .map(|x| x.iter().zip(&shift).map(|(c, s)| ((c + s) / side).floor() as i64).collect())
                    .collect();
                Ok(Partition::from_keys(&keys))
            }
            Sampler::Tree { tree, root } => {
                let Space::Tree(t) = &ws.space else {
                    return Err(Error::Unsupported("tree cuts need tree points".into()));
                };
                if t.as_ref() != tree.as_ref() {
                    return Err(Error::Unsupported("working set lives on a different tree".into()));
                }
                tree_cut(tree, *root, ws, delta_scale, rng)
            }
            Sampler::Intervals => {
                let cover = interval_cover(ws, delta_scale)?;
                nagata_peeling(ws, &cover, rng)
            }
        }
    }
}

fn tree_cut(t: &WeightedTree, root: usize, ws: &WorkingSet, scale: f64, rng: &mut ChaCha8Rng) -> Result<Partition> {
    let width = scale / 2.0;
    let offset = rng.random::<f64>() * width;
    let space = &ws.space;
    let r = t.vertex_point(root);
    let keys: Vec<(i64, Vec<u64>)> = ws
        .points
        .iter()
        .map(|x| {
            let h = space.dist(&r, x);
            let band = ((h + offset) / width).floor();
            // Ancestor of x at height band·width − offset (clamped at the root).
            let cut = (band * width - offset).max(0.0);
            let anc = if h == 0.0 { r.clone() } else { space.geodesic_unchecked(&r, x, cut / h) };
            let anc = t.canonical(&anc);
            // Round to absorb geodesic arithmetic.
            let key = anc.iter().map(|c| (c * 1e9).round() as i64 as u64).collect();
            (band as i64, key)
        })
        .collect();
    Ok(Partition::from_keys(&keys))
}

/// A cover by `d + 1` families of pairwise-disjoint sets, such that every
/// ball `B(x, ball_radius)` lies inside some member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NagataCover {
    pub families: Vec<Vec<Vec<usize>>>,
    pub ball_radius: f64,
    pub diameter_bound: f64,
}

impl NagataCover {
    pub fn dimension(&self) -> usize {
        self.families.len().saturating_sub(1)
    }

    pub fn validate(&self, ws: &WorkingSet) -> Result<()> {
        let n = ws.len();
        if self.families.is_empty() {
            return Err(Error::InvalidCover("no families".into()));
        }
        for (fi, fam) in self.families.iter().enumerate() {
            let mut seen = vec![false; n];
            for set in fam {
                if set.is_empty() {
                    return Err(Error::InvalidCover(format!("family {fi} has an empty set")));
                }
                for &i in set {
                    if i >= n {
                        return Err(Error::InvalidCover(format!("point {i} out of range")));
                    }
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(Error::InvalidCover(format!("family {fi} is not disjoint at point {i}")));
                    }
                }
                for (a, &i) in set.iter().enumerate() {
                    for &j in &set[a + 1..] {
                        if ws.dist(i, j) > self.diameter_bound * (1.0 + 1e-12) {
                            return Err(Error::InvalidCover(format!(
                                "a set in family {fi} has diameter above the bound"
                            )));
                        }
                    }
                }
            }
        }
        for x in 0..n {
            let ball: Vec<usize> = (0..n).filter(|&y| ws.dist(x, y) <= self.ball_radius).collect();
            let inside = self.families.iter().flatten().any(|set| ball.iter().all(|b| set.contains(b)));
            if !inside {
                return Err(Error::InvalidCover(format!("no member contains the ball around point {x}")));
            }
        }
        Ok(())
    }
}

/// Two interleaved families of half-open intervals of length `L`:
/// `[kL, (k+1)L)` and `[kL + L/2, (k+1)L + L/2)`. Balls of radius below
/// `L/4` fit in one of them. Needs points on the line.
pub fn interval_cover(ws: &WorkingSet, length: f64) -> Result<NagataCover> {
    if !matches!(ws.space, Space::Euclidean { dim: 1 }) {
        return Err(Error::Unsupported("interval covers need points on the line".into()));
    }
    let fam = |off: f64| -> Vec<Vec<usize>> {
        let mut sets: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
        for (i, x) in ws.points.iter().enumerate() {
            sets.entry(((x[0] - off) / length).floor() as i64).or_default().push(i);
        }
        sets.into_values().collect()
    };
    Ok(NagataCover { families: vec![fam(0.0), fam(length / 2.0)], ball_radius: 0.2 * length, diameter_bound: length })
}

/// Random permutation `π` of the families; family `π(i)` keeps only what
/// earlier families left uncovered.
pub fn nagata_peeling(ws: &WorkingSet, cover: &NagataCover, rng: &mut ChaCha8Rng) -> Result<Partition> {
    cover.validate(ws)?;
    let mut order: Vec<usize> = (0..cover.families.len()).collect();
    order.shuffle(rng);
    Ok(peel(ws.len(), cover, &order))
}

fn peel(n: usize, cover: &NagataCover, order: &[usize]) -> Partition {
    let mut key = vec![usize::MAX; n];
    let mut next = 0;
    for &f in order {
        for set in &cover.families[f] {
            let mut used = false;
            for &i in set {
                if key[i] == usize::MAX {
                    key[i] = next;
                    used = true;
                }
            }
            if used {
                next += 1;
            }
        }
    }
    Partition::from_keys(&key)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaddingReport {
    pub scale: f64,
    pub radius: f64,
    pub samples: usize,
    pub declared_delta: f64,
    /// Per point fraction of samples with `B(x, εΔ) ⊆ P(x)`.
    pub fractions: Vec<f64>,
    pub min_fraction: f64,
    pub worst_point: usize,
    /// Standard error of the worst point's fraction.
    pub stderr: f64,
    pub max_diameter: f64,
    pub bounded: bool,
    /// `min_fraction ≥ δ − 3·stderr` and every sample bounded.
    pub passed: bool,
}

/// Samples `samples` partitions at scale `Δ` and measures padding at radius
/// `εΔ` (or `radius` when given).
pub fn padding_report(
    scheme: &DecompositionScheme,
    ws: &WorkingSet,
    scale: f64,
    radius: Option<f64>,
    samples: usize,
    seed: u64,
) -> Result<PaddingReport> {
    if ws.is_empty() || samples == 0 {
        return Err(Error::OutOfRange("need points and samples".into()));
    }
    let radius = radius.unwrap_or(scheme.epsilon * scale);
    let parts: Vec<Partition> = (0..samples)
        .into_par_iter()
        .map(|s| scheme.sample(ws, scale, &mut seed::rng(seed, &[0x7061_6464, s as u64])))
        .collect::<Result<_>>()?;
    let n = ws.len();
    let mut hits = vec![0usize; n];
    let mut max_diameter: f64 = 0.0;
    for p in &parts {
        max_diameter = max_diameter.max(p.max_diameter(ws));
        for (i, h) in hits.iter_mut().enumerate() {
            if p.pads(ws, i, radius) {
                *h += 1;
            }
        }
    }
    let fractions: Vec<f64> = hits.iter().map(|&h| h as f64 / samples as f64).collect();
    let (worst_point, &min_fraction) =
        fractions.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let stderr = (min_fraction * (1.0 - min_fraction) / samples as f64).sqrt();
    let bounded = max_diameter <= scale * (1.0 + 1e-12);
    Ok(PaddingReport {
        scale,
        radius,
        samples,
        declared_delta: scheme.delta,
        fractions,
        min_fraction,
        worst_point,
        stderr,
        max_diameter,
        bounded,
        passed: bounded && min_fraction >= scheme.delta - 3.0 * stderr,
    })
}

/// Rejects a scheme whose sampled partitions are unbounded or under-padded
/// at any of the given scales.
pub fn certify(scheme: &DecompositionScheme, ws: &WorkingSet, scales: &[f64], samples: usize, seed: u64) -> Result<()> {
    for (i, &s) in scales.iter().enumerate() {
        let r = padding_report(scheme, ws, s, None, samples, seed::derive(seed, &[i as u64]))?;
        if !r.passed {
            return Err(Error::PaddingCertification(format!(
                "scale {s}: padding {:.4} (declared {:.4}, stderr {:.4}), max diameter {:.4}",
                r.min_fraction, r.declared_delta, r.stderr, r.max_diameter
            )));
        }
    }
    Ok(())
}

/// `F(x) = Σ_k 2^{−k(1−θ)} f_k(x) ⊗ e_k`, realized with `samples`
/// independent (partition, sign) draws per scale. `raw[k][s][x]` holds the
/// unscaled sample `σ_{P(x)} · min{d(x, X∖P(x)), 2^k}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnowflakeEmbedding {
    pub theta: f64,
    pub scales: Vec<i32>,
    pub samples: usize,
    pub raw: Vec<Vec<Vec<f64>>>,
    /// Bound on `‖F(x)−F(y)‖²` lost to scales outside the range, at the
    /// largest working distance.
    pub truncation_bound: f64,
}

/// Scale range `[⌊log₂ d_min⌋ − 2, ⌈log₂ d_max⌉ + 2]`.
pub fn default_scales(ws: &WorkingSet) -> Vec<i32> {
    match ws.distance_range() {
        None => vec![0],
        Some((lo, hi)) => ((lo.log2().floor() as i32 - 2)..=(hi.log2().ceil() as i32 + 2)).collect(),
    }
}

/// ±1 sign for cluster `c` at `(scale, sample)`.
fn cluster_sign(seed: u64, k: i32, s: usize, c: usize) -> f64 {
    if seed::derive(seed, &[0x7369_676e, k as i64 as u64, s as u64, c as u64]) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn snowflake_embed(
    scheme: &DecompositionScheme,
    ws: &WorkingSet,
    theta: f64,
    scales: &[i32],
    samples: usize,
    seed: u64,
) -> Result<SnowflakeEmbedding> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::OutOfRange(format!("theta must lie in (0,1) (got {theta})")));
    }
    if scales.is_empty() {
        return Err(Error::OutOfRange("empty scale range".into()));
    }
    if samples == 0 {
        return Err(Error::OutOfRange("need at least one sample".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..scales.len()).flat_map(|k| (0..samples).map(move |s| (k, s))).collect();
    let values: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(ki, s)| {
            let k = scales[ki];
            let cap = 2f64.powi(k);
            let mut rng = seed::rng(seed, &[0x736e_6f77, k as i64 as u64, s as u64]);
            let part = scheme.sample(ws, cap, &mut rng)?;
            Ok((0..ws.len())
                .map(|x| cluster_sign(seed, k, s, part.labels[x]) * part.boundary_distance(ws, x).min(cap))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut raw = vec![Vec::with_capacity(samples); scales.len()];
    for ((ki, _), v) in tasks.into_iter().zip(values) {
        raw[ki].push(v);
    }
    let kmin = *scales.iter().min().expect("non-empty") as f64;
    let kmax = *scales.iter().max().expect("non-empty") as f64;
    let dmax = ws.distance_range().map_or(0.0, |r| r.1);
    // Each omitted scale j contributes at most 4 min{d², 4^j} / 4^{j(1−θ)}.
    let below = 4.0 * 4f64.powf(kmin * theta) / (4f64.powf(theta) - 1.0);
    let above = 4.0 * dmax * dmax * 4f64.powf(-(kmax + 1.0) * (1.0 - theta)) / (1.0 - 4f64.powf(-(1.0 - theta)));
    Ok(SnowflakeEmbedding { theta, scales: scales.to_vec(), samples, raw, truncation_bound: below + above })
}

impl SnowflakeEmbedding {
    fn weight(&self, ki: usize) -> f64 {
        2f64.powf(-(self.scales[ki] as f64) * (1.0 - self.theta))
    }

    /// `‖f_k(x) − f_k(y)‖²` for scale index `ki` (mean over samples).
    pub fn block_sq(&self, ki: usize, x: usize, y: usize) -> f64 {
        let r = &self.raw[ki];
        r.iter().map(|v| (v[x] - v[y]).powi(2)).sum::<f64>() / r.len() as f64
    }

    /// `‖F(x) − F(y)‖²`.
    pub fn dist_sq(&self, x: usize, y: usize) -> f64 {
        (0..self.scales.len()).map(|ki| self.weight(ki).powi(2) * self.block_sq(ki, x, y)).sum()
    }

    /// The coordinates of `F(x)`: scale-major, then sample.
    pub fn vector(&self, x: usize) -> Vec<f64> {
        let norm = 1.0 / (self.samples as f64).sqrt();
        (0..self.scales.len())
            .flat_map(|ki| {
                let w = self.weight(ki) * norm;
                self.raw[ki].iter().map(move |v| w * v[x])
            })
            .collect()
    }

    /// Checks `|Δ sample| ≤ 2 min{d(x,y), 2^k}` for every pair, scale and
    /// sample; returns the number of violations and the worst excess.
    pub fn check_cases(&self, ws: &WorkingSet) -> (usize, f64) {
        let n = ws.len();
        let mut count = 0;
        let mut worst: f64 = 0.0;
        for (ki, &k) in self.scales.iter().enumerate() {
            let cap = 2f64.powi(k);
            for v in &self.raw[ki] {
                for x in 0..n {
                    for y in x + 1..n {
                        let excess = (v[x] - v[y]).abs() - 2.0 * ws.dist(x, y).min(cap);
                        if excess > 1e-12 * cap {
                            count += 1;
                            worst = worst.max(excess);
                        }
                    }
                }
            }
        }
        (count, worst)
    }

    /// For each pair with `2^k < d ≤ 2^{k+1}` (`k` in range), the scale-`k`
    /// block against `δ(ε2^k)²` in expectation.
    pub fn lower_bound_check(&self, ws: &WorkingSet, epsilon: f64, delta: f64) -> LowerBoundReport {
        let n = ws.len();
        let mut pairs = 0;
        let mut failures = 0;
        let mut worst_z = f64::INFINITY;
        for x in 0..n {
            for y in x + 1..n {
                let d = ws.dist(x, y);
                if d == 0.0 {
                    continue;
                }
                let k = (d.log2().ceil() as i32) - 1;
                let Some(ki) = self.scales.iter().position(|&s| s == k) else { continue };
                pairs += 1;
                let r = &self.raw[ki];
                let vals: Vec<f64> = r.iter().map(|v| (v[x] - v[y]).powi(2)).collect();
                let m = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / m;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
                let se = (var / m).sqrt();
                let bound = delta * (epsilon * 2f64.powi(k)).powi(2);
                let z = if se > 0.0 {
                    (mean - bound) / se
                } else if mean >= bound {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                };
                worst_z = worst_z.min(z);
                if mean < bound - 3.0 * se {
                    failures += 1;
                }
            }
        }
        LowerBoundReport { pairs, failures, worst_z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub pairs: usize,
    pub failures: usize,
    /// Smallest `(mean − bound)/stderr` over pairs.
    pub worst_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    /// `max ‖F(x)−F(y)‖ / d^θ`.
    pub expansion: f64,
    /// `min ‖F(x)−F(y)‖ / d^θ`.
    pub contraction: f64,
    pub distortion: f64,
    /// `1/(ε√(δθ(1−θ)))`.
    pub theory: f64,
    /// `distortion / theory`.
    pub fitted_constant: f64,
    /// `max ‖F(x)−F(y)‖² θ(1−θ) / d^{2θ}`, the constant in the upper estimate.
    pub upper_constant: f64,
    pub pairs: usize,
}

pub fn distortion(ws: &WorkingSet, emb: &SnowflakeEmbedding, epsilon: f64, delta: f64) -> Result<DistortionReport> {
    let n = ws.len();
    if n < 2 {
        return Err(Error::OutOfRange("distortion needs at least two points".into()));
    }
    let th = emb.theta;
    let mut hi: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut upper: f64 = 0.0;
    let mut pairs = 0;
    for x in 0..n {
        for y in x + 1..n {
            let d = ws.dist(x, y);
            if d == 0.0 {
                continue;
            }
            pairs += 1;
            let sq = emb.dist_sq(x, y);
            let r = sq.sqrt() / d.powf(th);
            hi = hi.max(r);
            lo = lo.min(r);
            upper = upper.max(sq * th * (1.0 - th) / d.powf(2.0 * th));
        }
    }
    if pairs == 0 {
        return Err(Error::OutOfRange("all points coincide".into()));
    }
    let dist = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let theory = 1.0 / (epsilon * (delta * th * (1.0 - th)).sqrt());
    Ok(DistortionReport {
        expansion: hi,
        contraction: lo,
        distortion: dist,
        theory,
        fitted_constant: dist / theory,
        upper_constant: upper,
        pairs,
    })
}

/// The right-hand side of the θ-tradeoff,
/// `((p/(θ√σ)) · c/(ε√(δθ(1−θ))))^{1/θ}`, in logs.
pub fn log_theta_bound(theta: f64, epsilon: f64, delta: f64, p: f64, sigma: f64, c: f64) -> f64 {
    let inner = (p / (theta * sigma.sqrt())) * c / (epsilon * (delta * theta * (1.0 - theta)).sqrt());
    inner.ln() / theta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaReport {
    pub theta: f64,
    pub bound: f64,
    /// `1 − log log(1/σ) / log(1/σ)` when it lies in `(0,1)`.
    pub formula_theta: Option<f64>,
    pub bound_at_formula: Option<f64>,
    pub bound_at_half: f64,
}

pub fn optimize_theta(epsilon: f64, delta: f64, p: f64, sigma: f64, c: f64) -> Result<ThetaReport> {
    let open = |x: f64| x > 0.0 && x < 1.0;
    if !(open(epsilon) && open(delta) && open(sigma) && p > 0.0 && c > 0.0) {
        return Err(Error::OutOfRange("need ε, δ, σ in (0,1) and p, c > 0".into()));
    }
    let f = |t: f64| log_theta_bound(t, epsilon, delta, p, sigma, c);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-9f64, 1.0 - 1e-12);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a < 1e-13 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let theta = 0.5 * (a + b);
    let l = (1.0 / sigma).ln();
    let formula_theta = (l > 1.0).then(|| 1.0 - l.ln() / l).filter(|t| open(*t));
    Ok(ThetaReport {
        theta,
        bound: f(theta).exp(),
        formula_theta,
        bound_at_formula: formula_theta.map(|t| f(t).exp()),
        bound_at_half: f(0.5).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbeddingModulusBound {
    /// Snowflake distortion at `θ = 1/2`: `2c/(ε√δ)`.
    pub distortion: f64,
    /// Hilbert modulus at exponent `2p`: `4p/√σ`.
    pub hilbert_modulus: f64,
    /// `distortion² · hilbert_modulus²`.
    pub bound: f64,
}

/// Chains the `θ = 1/2` snowflake with the Hilbert modulus at exponent `2p`:
/// `Λ_Y^{(p)} ≤ D² · (Λ_H^{(2p)})²`.
pub fn modulus_via_embedding(epsilon: f64, delta: f64, p: f64, sigma: f64, c: f64) -> Result<EmbeddingModulusBound> {
    if !(epsilon > 0.0 && delta > 0.0 && p >= 1.0 && sigma > 0.0 && c > 0.0) {
        return Err(Error::OutOfRange("need positive ε, δ, σ, c and p >= 1".into()));
    }
    let distortion = c / (epsilon * (delta * 0.25).sqrt());
    let hilbert_modulus = 2.0 * (2.0 * p) / sigma.sqrt();
    Ok(EmbeddingModulusBound { distortion, hilbert_modulus, bound: distortion.powi(2) * hilbert_modulus.powi(2) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> WorkingSet {
        WorkingSet::new(Space::real_line(), xs.iter().map(|x| vec![*x]).collect()).unwrap()
    }

    #[test]
    fn grid_partitions_are_bounded_and_padded() {
        let ws = WorkingSet::grid(8);
        let scheme = shifted_grid_scheme(2).unwrap();
        assert!((scheme.delta - (1.0 - 1.0 / (2.0 * 2f64.sqrt())).powi(2)).abs() < 1e-15);
        let r = padding_report(&scheme, &ws, 4.0, Some(0.5), 10_000, 1).unwrap();
        assert!(r.bounded);
        assert!(r.min_fraction >= 0.5);
        let r = padding_report(&scheme, &ws, 4.0, None, 2000, 2).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn continuous_grid_padding_matches_the_declared_probability() {
        // A dense sample of a single cell: the fraction of (point, shift)
        // pairs padded at radius Δ/8 estimates (1 − 1/(2√2))².
        let scheme = shifted_grid_scheme(2).unwrap();
        let ws = WorkingSet::new(Space::euclidean(2), vec![vec![0.3, 0.7]]).unwrap();
        let mut hits = 0;
        let trials = 20_000;
        let side = 4.0 / 2f64.sqrt();
        let mut rng = seed::rng(3, &[]);
        for _ in 0..trials {
            let _ = scheme.sample(&ws, 4.0, &mut rng).unwrap();
            let u: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * side).collect();
            let ok = (0..2).all(|i| {
                let t = (ws.points[0][i] + u[i]).rem_euclid(side);
                t >= 0.5 && side - t >= 0.5
            });
            hits += ok as usize;
        }
        let frac = hits as f64 / trials as f64;
        assert!((frac - scheme.delta).abs() < 0.02, "{frac} vs {}", scheme.delta);
    }

    #[test]
    fn trivial_partition_cases() {
        let scheme = shifted_grid_scheme(1).unwrap();
        let one = line(&[0.5]);
        let r = padding_report(&scheme, &one, 1.0, Some(100.0), 100, 0).unwrap();
        assert_eq!(r.min_fraction, 1.0);
        let two = line(&[0.0, 5.0]);
        for s in 0..100 {
            let p = scheme.sample(&two, 4.0, &mut seed::rng(s, &[])).unwrap();
            assert_eq!(p.cluster_count(), 2);
        }
    }

    #[test]
    fn tree_cuts() {
        let t = Arc::new(
            WeightedTree::new(7, &[(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (1, 4, 1.0), (2, 5, 1.0), (2, 6, 1.0)])
                .unwrap(),
        );
        let ws = WorkingSet::new(Space::Tree(t.clone()), (0..7).map(|v| t.vertex_point(v)).collect()).unwrap();
        let scheme = tree_cut_scheme(t, 0).unwrap();
        for scale in [1.0, 2.0, 4.0] {
            let r = padding_report(&scheme, &ws, scale, None, 4000, 5).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn nagata_examples() {
        let ws = line(&(0..40).map(|i| i as f64).collect::<Vec<_>>());
        let cover = interval_cover(&ws, 10.0).unwrap();
        cover.validate(&ws).unwrap();
        assert_eq!(cover.dimension(), 1);
        let mut rng = seed::rng(0, &[]);
        for _ in 0..20 {
            let p = nagata_peeling(&ws, &cover, &mut rng).unwrap();
            assert!(p.max_diameter(&ws) <= 10.0);
        }
        // A single disjoint family covering everything: the partition is the
        // family itself and every point is padded.
        let single = NagataCover {
            families: vec![vec![(0..20).collect(), (20..40).collect()]],
            ball_radius: 0.0,
            diameter_bound: 19.0,
        };
        let p = nagata_peeling(&ws, &single, &mut rng).unwrap();
        assert_eq!(p.cluster_count(), 2);
        // Broken covers are rejected.
        let overlapping = NagataCover {
            families: vec![vec![(0..25).collect(), (20..40).collect()]],
            ball_radius: 0.0,
            diameter_bound: 30.0,
        };
        assert!(overlapping.validate(&ws).is_err());
        let uncovered = NagataCover {
            families: vec![vec![(0..20).collect(), (20..40).collect()]],
            ball_radius: 1.0,
            diameter_bound: 30.0,
        };
        assert!(uncovered.validate(&ws).is_err());
    }

    #[test]
    fn interval_peeling_pads_half_the_time() {
        let ws = line(&(0..30).map(|i| i as f64).collect::<Vec<_>>());
        let scheme = interval_peeling_scheme();
        let r = padding_report(&scheme, &ws, 10.0, None, 4000, 2).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.min_fraction < 0.6);
    }

    #[test]
    fn snowflake_inequalities() {
        let ws = WorkingSet::grid(5);
        let scheme = shifted_grid_scheme(2).unwrap();
        let scales = default_scales(&ws);
        let emb = snowflake_embed(&scheme, &ws, 0.5, &scales, 300, 7).unwrap();
        assert_eq!(emb.check_cases(&ws).0, 0);
        let lb = emb.lower_bound_check(&ws, scheme.epsilon, scheme.delta);
        assert!(lb.pairs > 0);
        assert_eq!(lb.failures, 0);
        let d = distortion(&ws, &emb, scheme.epsilon, scheme.delta).unwrap();
        assert!(d.distortion.is_finite() && d.distortion >= 1.0);
        // Vectors agree with the block formula.
        let (a, b) = (emb.vector(0), emb.vector(7));
        let sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        assert!((sq - emb.dist_sq(0, 7)).abs() < 1e-9 * sq);
        // Determinism.
        assert_eq!(emb, snowflake_embed(&scheme, &ws, 0.5, &scales, 300, 7).unwrap());
    }

    #[test]
    fn snowflake_edge_cases() {
        let scheme = shifted_grid_scheme(1).unwrap();
        let one = line(&[1.0]);
        let emb = snowflake_embed(&scheme, &one, 0.5, &[0, 1], 10, 0).unwrap();
        // A lone point is never separated, so each coordinate is ±2^k scaled.
        let v = emb.vector(0);
        let expect = [1.0, 2f64.sqrt()].map(|m| m / 10f64.sqrt());
        for (i, x) in v.iter().enumerate() {
            assert!((x.abs() - expect[i / 10]).abs() < 1e-12);
        }
        assert!(snowflake_embed(&scheme, &one, 1.0, &[0], 10, 0).is_err());
        assert!(snowflake_embed(&scheme, &one, 0.5, &[], 10, 0).is_err());
        let two = line(&[0.0, 3.0]);
        let emb = snowflake_embed(&scheme, &two, 0.5, &default_scales(&two), 50, 0).unwrap();
        let d = distortion(&two, &emb, scheme.epsilon, scheme.delta).unwrap();
        assert!((d.distortion - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theta_optimizer() {
        let r = optimize_theta(0.25, 0.5, 2.0, 0.01, 1.0).unwrap();
        assert!(r.theta > 0.0 && r.theta < 1.0);
        assert!(r.bound <= r.bound_at_half * (1.0 + 1e-12));
        assert!(r.bound <= r.bound_at_formula.unwrap() * (1.0 + 1e-12));
        let f = r.formula_theta.unwrap();
        assert!((f - (1.0 - 100f64.ln().ln() / 100f64.ln())).abs() < 1e-12);
        // Limits blow up.
        assert!(log_theta_bound(1e-4, 0.25, 0.5, 2.0, 0.01, 1.0) > r.bound.ln() + 10.0);
        assert!(log_theta_bound(1.0 - 1e-12, 0.25, 0.5, 2.0, 0.01, 1.0) > r.bound.ln());
        // Both move toward 1 as σ shrinks.
        let small = optimize_theta(0.25, 0.5, 2.0, 1e-8, 1.0).unwrap();
        assert!(small.theta > r.theta);
        assert!(small.formula_theta.unwrap() > f);
        assert!(optimize_theta(0.25, 0.5, 2.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn chained_modulus_bound() {
        let b = modulus_via_embedding(0.25, 0.5, 2.0, 0.5, 1.0).unwrap();
        assert!((b.distortion.powi(2) - 128.0).abs() < 1e-9);
        assert!((b.hilbert_modulus.powi(2) - 128.0).abs() < 1e-9);
        assert!((b.bound - 16384.0).abs() < 1e-6);
        let doubled = modulus_via_embedding(0.5, 0.5, 2.0, 0.5, 1.0).unwrap();
        assert!((doubled.distortion - b.distortion / 2.0).abs() < 1e-12);
        assert!((doubled.bound - b.bound / 4.0).abs() < 1e-6);
        let looser = modulus_via_embedding(0.25, 0.5, 2.0, 0.8, 1.0).unwrap();
        assert!(looser.bound < b.bound);
    }

    #[test]
    fn csv_points() {
        let ws = WorkingSet::from_csv("# pts\n0,0\n1, 0\n\n0,2\n").unwrap();
        assert_eq!(ws.len(), 3);
        assert_eq!(ws.dist(1, 2), 5f64.sqrt());
        assert!(WorkingSet::from_csv("0,0\n1\n").is_err());
        assert!(WorkingSet::from_csv("0,x\n").is_err());
    }
}
