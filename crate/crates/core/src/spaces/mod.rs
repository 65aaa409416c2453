//! Metric-space oracles: distance, geodesics and uniform-convexity
//! parameters for the target spaces of every inequality in the crate.
//!
//! Points are plain coordinate vectors whose layout depends on the space:
//!
//! | space        | layout                                   |
//! |--------------|------------------------------------------|
//! | `Euclidean`  | `dim` coordinates                        |
//! | `Lp`         | `dim` coordinates                        |
//! | `Hyperbolic` | `(x, y)` in the open unit disk           |
//! | `Tree`       | `(edge index, offset from edge tail)`    |
//! | `Product`    | factor layouts concatenated              |

mod hyperbolic;
mod isometry;
mod tree;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use hyperbolic::{mobius_from_origin, mobius_to_origin};
pub use isometry::Isometry;
pub use tree::WeightedTree;

/// A point of some [`Space`].
pub type Point = Vec<f64>;

/// Largest Euclidean radius used when sampling disk points.
const DISK_SAMPLE_RADIUS: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Euclidean {
        dim: usize,
    },
    /// `ℓ_p^dim` with `p ≥ 2`.
    Lp {
        dim: usize,
        p: f64,
    },
    /// Poincaré disk model of the hyperbolic plane (curvature −1).
    Hyperbolic,
    Tree(Arc<WeightedTree>),
    /// `ℓ_p` sum of the factors.
    Product {
        p: f64,
        factors: Vec<Space>,
    },
}

impl Space {
    pub fn euclidean(dim: usize) -> Self {
        Space::Euclidean { dim }
    }

    pub fn real_line() -> Self {
        Space::Euclidean { dim: 1 }
    }

    pub fn lp(dim: usize, p: f64) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) || dim == 0 {
            return Err(Error::OutOfRange(format!("L_p needs p >= 2 and dim >= 1 (got p={p}, dim={dim})")));
        }
        Ok(Space::Lp { dim, p })
    }

    pub fn tree(tree: WeightedTree) -> Self {
        Space::Tree(Arc::new(tree))
    }

    pub fn product(p: f64, factors: Vec<Space>) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) || factors.is_empty() {
            return Err(Error::OutOfRange("product needs p >= 1 and at least one factor".into()));
        }
        Ok(Space::Product { p, factors })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Space::Euclidean { .. } => "euclidean",
            Space::Lp { .. } => "lp",
            Space::Hyperbolic => "hyperbolic",
            Space::Tree(_) => "tree",
            Space::Product { .. } => "product",
        }
    }

    /// Length of the coordinate vector of a point.
    pub fn point_len(&self) -> usize {
        match self {
            Space::Euclidean { dim } | Space::Lp { dim, .. } => *dim,
            Space::Hyperbolic | Space::Tree(_) => 2,
            Space::Product { factors, .. } => factors.iter().map(Space::point_len).sum(),
        }
    }

    /// Whether the space is CAT(0), i.e. 2-uniformly convex with `c_Y = 1`.
    pub fn is_cat0(&self) -> bool {
        match self {
            Space::Euclidean { .. } | Space::Hyperbolic | Space::Tree(_) => true,
            Space::Lp { p, .. } => *p == 2.0,
            Space::Product { p, factors } => *p == 2.0 && factors.iter().all(Space::is_cat0),
        }
    }

    /// Whether the coordinates form a smooth chart in which the moment
    /// functional is differentiable (used by the solvers).
    pub(crate) fn is_smooth_chart(&self) -> bool {
        matches!(self, Space::Euclidean { .. } | Space::Lp { .. } | Space::Hyperbolic)
    }

    /// Claimed uniform-convexity constant `c_Y` for exponent `p`, where the
    /// defining inequality carries the coefficient `c_Y^p t(1−t) d(y,z)^p`.
    ///
    /// CAT(0) spaces: `1` at `p = 2`, otherwise the plane's constant
    /// `c_Y^p = 2^{2−p}`. `ℓ_r` (`r ≥ 2`) at its own exponent: `c^r = 2^{2−r}`.
    /// `ℓ_p` sums of factors sharing the exponent: the smallest factor constant.
    pub fn convexity_constant(&self, p: f64) -> Option<f64> {
        if !(p >= 2.0) {
            return None;
        }
        let plane = |p: f64| if p == 2.0 { 1.0 } else { 2f64.powf((2.0 - p) / p) };
        match self {
            Space::Euclidean { .. } | Space::Hyperbolic | Space::Tree(_) => Some(plane(p)),
            Space::Lp { p: r, .. } => {
                if *r == 2.0 {
                    Some(plane(p))
                } else {
                    (p == *r).then(|| plane(p))
                }
            }
            Space::Product { p: q, factors } => {
                if *q != p {
                    return None;
                }
                factors.iter().map(|f| f.convexity_constant(p)).try_fold(f64::INFINITY, |acc, c| c.map(|c| acc.min(c)))
            }
        }
    }

    pub fn validate(&self, x: &[f64]) -> Result<()> {
        let bad = |msg: String| Error::InvalidPoint { space: self.kind().into(), msg };
        if x.len() != self.point_len() {
            return Err(bad(format!("expected {} coordinates, got {}", self.point_len(), x.len())));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(bad("non-finite coordinate".into()));
        }
        match self {
            Space::Euclidean { .. } | Space::Lp { .. } => Ok(()),
            Space::Hyperbolic => {
                if x[0] * x[0] + x[1] * x[1] < 1.0 {
                    Ok(())
                } else {
                    Err(bad("disk points need norm < 1".into()))
                }
            }
            Space::Tree(t) => t.validate(x).map_err(bad),
            Space::Product { factors, .. } => {
                let mut off = 0;
                for f in factors {
                    let len = f.point_len();
                    f.validate(&x[off..off + len])?;
                    off += len;
                }
                Ok(())
            }
        }
    }

    /// Distance, assuming valid points.
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Space::Euclidean { .. } => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Space::Lp { p, .. } => x.iter().zip(y).map(|(a, b)| (a - b).abs().powf(*p)).sum::<f64>().powf(1.0 / p),
            Space::Hyperbolic => hyperbolic::dist(x, y),
            Space::Tree(t) => t.dist(x, y),
            Space::Product { p, factors } => {
                let mut off = 0;
                let mut acc = 0.0;
                for f in factors {
                    let len = f.point_len();
                    acc += f.dist(&x[off..off + len], &y[off..off + len]).powf(*p);
                    off += len;
                }
                acc.powf(1.0 / p)
            }
        }
    }

    /// Validating distance.
    pub fn try_dist(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.validate(x)?;
        self.validate(y)?;
        Ok(self.dist(x, y))
    }

    /// The point `[y, z]_t` at distance `t·d(y,z)` from `y` on the unique
    /// geodesic from `y` to `z`.
    pub fn geodesic(&self, y: &[f64], z: &[f64], t: f64) -> Result<Point> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange(format!("geodesic parameter {t} outside [0,1]")));
        }
        Ok(self.geodesic_unchecked(y, z, t))
    }

    pub(crate) fn geodesic_unchecked(&self, y: &[f64], z: &[f64], t: f64) -> Point {
        match self {
            Space::Euclidean { .. } | Space::Lp { .. } => y.iter().zip(z).map(|(a, b)| (1.0 - t) * a + t * b).collect(),
            Space::Hyperbolic => hyperbolic::geodesic(y, z, t),
            Space::Tree(tr) => tr.geodesic(y, z, t),
            Space::Product { factors, .. } => {
                let mut out = Vec::with_capacity(y.len());
                let mut off = 0;
                for f in factors {
                    let len = f.point_len();
                    out.extend(f.geodesic_unchecked(&y[off..off + len], &z[off..off + len], t));
                    off += len;
                }
                out
            }
        }
    }

    /// A basepoint: the origin, or vertex 0 of a tree.
    pub fn origin(&self) -> Point {
        match self {
            Space::Tree(t) => t.vertex_point(0),
            Space::Product { factors, .. } => factors.iter().flat_map(Space::origin).collect(),
            _ => vec![0.0; self.point_len()],
        }
    }

    /// Random point: Gaussian coordinates in linear spaces, radius uniform in
    /// `[0, 0.9)` on the disk, length-weighted uniform on trees.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            Space::Euclidean { dim } | Space::Lp { dim, .. } => (0..*dim).map(|_| StandardNormal.sample(rng)).collect(),
            Space::Hyperbolic => {
                let r = DISK_SAMPLE_RADIUS * rng.random::<f64>();
                let a = std::f64::consts::TAU * rng.random::<f64>();
                vec![r * a.cos(), r * a.sin()]
            }
            Space::Tree(t) => t.random_point(rng),
            Space::Product { factors, .. } => factors.iter().flat_map(|f| f.random_point(rng)).collect(),
        }
    }

    /// A random point at distance about `scale` from `x`.
    pub fn perturb<R: Rng + ?Sized>(&self, x: &[f64], scale: f64, rng: &mut R) -> Point {
        match self {
            Space::Euclidean { .. } | Space::Lp { .. } => x
                .iter()
                .map(|c| {
                    let g: f64 = StandardNormal.sample(rng);
                    c + scale * g / (x.len() as f64).sqrt()
                })
                .collect(),
            Space::Hyperbolic => {
                let a = std::f64::consts::TAU * rng.random::<f64>();
                let r = (scale * rng.random::<f64>() / 2.0).tanh();
                mobius_from_origin(x, &[r * a.cos(), r * a.sin()])
            }
            Space::Tree(t) => t.perturb(x, scale, rng),
            Space::Product { factors, .. } => {
                let mut out = Vec::with_capacity(x.len());
                let mut off = 0;
                let share = scale / (factors.len() as f64).sqrt();
                for f in factors {
                    let len = f.point_len();
                    out.extend(f.perturb(&x[off..off + len], share, rng));
                    off += len;
                }
                out
            }
        }
    }

    /// Factor slices of a product point.
    pub(crate) fn split<'a>(&self, x: &'a [f64]) -> Vec<&'a [f64]> {
        match self {
            Space::Product { factors, .. } => {
                let mut off = 0;
                factors
                    .iter()
                    .map(|f| {
                        let len = f.point_len();
                        let s = &x[off..off + len];
                        off += len;
                        s
                    })
                    .collect()
            }
            _ => vec![x],
        }
    }

    pub fn descriptor(&self) -> SpaceDescriptor {
        match self {
            Space::Euclidean { dim } => {
                SpaceDescriptor { kind: "euclidean".into(), dim: Some(*dim), ..Default::default() }
            }
            Space::Lp { dim, p } => {
                SpaceDescriptor { kind: "lp".into(), dim: Some(*dim), p: Some(*p), ..Default::default() }
            }
            Space::Hyperbolic => SpaceDescriptor { kind: "hyperbolic".into(), ..Default::default() },
            Space::Tree(t) => SpaceDescriptor {
                kind: "tree".into(),
                vertices: Some(t.vertex_count()),
                edges: Some(t.edges().to_vec()),
                ..Default::default()
            },
            Space::Product { p, factors } => SpaceDescriptor {
                kind: "product".into(),
                p: Some(*p),
                factors: Some(factors.iter().map(Space::descriptor).collect()),
                ..Default::default()
            },
        }
    }

    pub fn from_descriptor(d: &SpaceDescriptor) -> Result<Self> {
        let need = |what: &str| Error::OutOfRange(format!("space descriptor {:?} needs `{what}`", d.kind));
        match d.kind.as_str() {
            "euclidean" | "real" => {
                Ok(Space::Euclidean { dim: if d.kind == "real" { 1 } else { d.dim.ok_or_else(|| need("dim"))? } })
            }
            "lp" => Space::lp(d.dim.ok_or_else(|| need("dim"))?, d.p.ok_or_else(|| need("p"))?),
            "hyperbolic" => Ok(Space::Hyperbolic),
            "tree" => {
                let edges = d.edges.as_ref().ok_or_else(|| need("edges"))?;
                let n = d.vertices.unwrap_or(edges.len() + 1);
                Ok(Space::tree(WeightedTree::new(n, edges)?))
            }
            "product" => {
                let fs = d.factors.as_ref().ok_or_else(|| need("factors"))?;
                let factors = fs.iter().map(Space::from_descriptor).collect::<Result<Vec<_>>>()?;
                Space::product(d.p.unwrap_or(2.0), factors)
            }
            other => Err(Error::Unsupported(format!("unknown space kind {other:?}"))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: SpaceDescriptor =
            serde_json::from_str(text).map_err(|e| Error::Unsupported(format!("bad space JSON: {e}")))?;
        Self::from_descriptor(&d)
    }
}

/// JSON form of a [`Space`]:
/// `{kind, dim?, p?, vertices?, edges?: [[u, v, w], ...], factors?}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<SpaceDescriptor>>,
}

/// A triple and parameter witnessing the smallest convexity slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityWitness {
    pub x: Point,
    pub y: Point,
    pub z: Point,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub p: f64,
    pub c: f64,
    pub samples: usize,
    /// Minimum over samples of RHS − LHS of the convexity inequality.
    pub min_slack: f64,
    pub witness: Option<ConvexityWitness>,
    /// `min_slack >= -1e-9`.
    pub holds: bool,
}

/// Slack threshold below which a convexity claim counts as violated.
pub const CONVEXITY_SLACK_TOL: f64 = 1e-9;

fn convexity_samples(space: &Space, samples: usize, seed: u64) -> Vec<(Point, Point, Point, f64)> {
    let mut rng = seed::rng(seed, &[0x636f_6e76]);
    (0..samples)
        .map(|i| {
            let y = space.random_point(&mut rng);
            let z = space.random_point(&mut rng);
            // Every fourth sample puts x near the segment, where curvature
            // effects are strongest.
            let x = if i % 4 == 3 {
                let m = space.geodesic_unchecked(&y, &z, rng.random::<f64>());
                let d = space.dist(&y, &z);
                space.perturb(&m, 0.1 * d, &mut rng)
            } else {
                space.random_point(&mut rng)
            };
            let t = rng.random::<f64>();
            (x, y, z, t)
        })
        .collect()
}

fn slack(space: &Space, p: f64, c: f64, (x, y, z, t): &(Point, Point, Point, f64)) -> f64 {
    let m = space.geodesic_unchecked(y, z, *t);
    let lhs = space.dist(x, &m).powf(p);
    let rhs = (1.0 - t) * space.dist(x, y).powf(p) + t * space.dist(x, z).powf(p)
        - c.powf(p) * t * (1.0 - t) * space.dist(y, z).powf(p);
    rhs - lhs
}

/// Samples `samples` random triples `(x, y, z)` and `t ∈ [0,1]` and reports
/// the smallest slack of
/// `d(x,[y,z]_t)^p ≤ (1−t)d(x,y)^p + t d(x,z)^p − c^p t(1−t) d(y,z)^p`.
pub fn verify_p_convexity(space: &Space, p: f64, c: f64, samples: usize, seed: u64) -> Result<ConvexityReport> {
    if !(p >= 2.0) || !(c > 0.0) {
        return Err(Error::OutOfRange(format!("need p >= 2 and c > 0 (got p={p}, c={c})")));
    }
    let triples = convexity_samples(space, samples, seed);
    let mut min_slack = f64::INFINITY;
    let mut witness = None;
    for tr in &triples {
        let s = slack(space, p, c, tr);
        if s < min_slack {
            min_slack = s;
            witness = Some(tr);
        }
    }
    let holds = min_slack >= -CONVEXITY_SLACK_TOL;
    Ok(ConvexityReport {
        p,
        c,
        samples,
        min_slack,
        witness: witness.filter(|_| !holds).map(|(x, y, z, t)| ConvexityWitness {
            x: x.clone(),
            y: y.clone(),
            z: z.clone(),
            t: *t,
        }),
        holds,
    })
}

/// Largest `c` (to relative precision `1e-6`) for which the sampled
/// convexity check passes, found by bisection on a fixed sample set.
pub fn certify_convexity_constant(space: &Space, p: f64, samples: usize, seed: u64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::OutOfRange(format!("need p >= 2 (got {p})")));
    }
    let triples = convexity_samples(space, samples, seed);
    let passes = |c: f64| triples.iter().all(|tr| slack(space, p, c, tr) >= -CONVEXITY_SLACK_TOL);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while passes(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(hi);
        }
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests;
