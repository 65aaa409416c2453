//! Metric trees: finite weighted trees with points on edges.
//!
//! A point is `(edge index, offset)` with `0 ≤ offset ≤ length`, measured from
//! the edge's first endpoint. A vertex has several encodings; distances do not
//! care, and [`WeightedTree::canonical`] picks one.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTree {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    /// `dist[u*n+v]` between vertices.
    dist: Vec<f64>,
    /// `next[u*n+v]`: first edge on the path from `u` to `v` (`usize::MAX` if `u == v`).
    next: Vec<usize>,
    /// Smallest edge index incident to each vertex.
    home: Vec<usize>,
}

impl WeightedTree {
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("tree needs a vertex".into()));
        }
        if edges.len() + 1 != n {
            return Err(Error::InvalidGraph(format!(
                "a tree on {n} vertices has {} edges, got {}",
                n - 1,
                edges.len()
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for (i, &(u, v, w)) in edges.iter().enumerate() {
            if u >= n || v >= n || u == v {
                return Err(Error::InvalidGraph(format!("bad tree edge ({u},{v})")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidGraph(format!("edge ({u},{v}) needs a positive length")));
            }
            adj[u].push((v, i));
            adj[v].push((u, i));
        }
        let mut dist = vec![f64::INFINITY; n * n];
        let mut next = vec![usize::MAX; n * n];
        for s in 0..n {
            dist[s * n + s] = 0.0;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &(v, e) in &adj[u] {
                    if dist[s * n + v].is_infinite() {
                        dist[s * n + v] = dist[s * n + u] + edges[e].2;
                        next[s * n + v] = if u == s { e } else { next[s * n + u] };
                        stack.push(v);
                    }
                }
            }
        }
        if dist.iter().any(|d| d.is_infinite()) {
            return Err(Error::Disconnected);
        }
        let home = adj.iter().map(|a| a.iter().map(|&(_, e)| e).min().unwrap_or(usize::MAX)).collect();
        Ok(WeightedTree { n, edges: edges.to_vec(), dist, next, home })
    }

    /// Star with `leaves` unit edges around vertex 0.
    pub fn star(leaves: usize) -> Result<Self> {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i, 1.0)).collect();
        Self::new(leaves + 1, &edges)
    }

    /// Unit-length path on `n` vertices.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::new(n, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn vertex_distance(&self, u: usize, v: usize) -> f64 {
        self.dist[u * self.n + v]
    }

    pub fn vertex_point(&self, v: usize) -> Vec<f64> {
        if self.edges.is_empty() {
            return vec![0.0, 0.0];
        }
        let e = self.home[v];
        let (a, _, w) = self.edges[e];
        vec![e as f64, if a == v { 0.0 } else { w }]
    }

    pub(crate) fn validate(&self, x: &[f64]) -> std::result::Result<(), String> {
        if self.edges.is_empty() {
            return if x[0] == 0.0 && x[1] == 0.0 {
                Ok(())
            } else {
                Err("single-vertex tree has only the point (0, 0)".into())
            };
        }
        let e = x[0];
        if e < 0.0 || e.fract() != 0.0 || e as usize >= self.edges.len() {
            return Err(format!("edge index {e} is not an edge"));
        }
        let w = self.edges[e as usize].2;
        if x[1] < 0.0 || x[1] > w {
            return Err(format!("offset {} outside [0, {w}]", x[1]));
        }
        Ok(())
    }

    fn parts(&self, x: &[f64]) -> (usize, usize, usize, f64, f64) {
        let e = x[0] as usize;
        let (a, b, w) = self.edges[e];
        (e, a, b, x[1], w - x[1])
    }

    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        let (ex, ax, bx, xa, xb) = self.parts(x);
        let (ey, ay, by, ya, yb) = self.parts(y);
        if ex == ey {
            return (x[1] - y[1]).abs();
        }
        let d = |u: usize, v: usize| self.dist[u * self.n + v];
        (xa + d(ax, ay) + ya).min(xa + d(ax, by) + yb).min(xb + d(bx, ay) + ya).min(xb + d(bx, by) + yb)
    }

    /// Canonical encoding: vertices move to their smallest incident edge.
    pub fn canonical(&self, x: &[f64]) -> Vec<f64> {
        if self.edges.is_empty() {
            return vec![0.0, 0.0];
        }
        let (_, a, b, xa, xb) = self.parts(x);
        if xa == 0.0 {
            self.vertex_point(a)
        } else if xb == 0.0 {
            self.vertex_point(b)
        } else {
            x.to_vec()
        }
    }

    /// Point at distance `s` from vertex `u` toward vertex `v` (`s ≤ d(u,v)`).
    fn walk(&self, u: usize, v: usize, s: f64) -> Vec<f64> {
        let mut cur = u;
        let mut left = s;
        while cur != v {
            let e = self.next[cur * self.n + v];
            let (a, b, w) = self.edges[e];
            let other = if a == cur { b } else { a };
            if left <= w {
                let off = if a == cur { left } else { w - left };
                return vec![e as f64, off];
            }
            left -= w;
            cur = other;
        }
        self.vertex_point(v)
    }

    pub fn geodesic(&self, y: &[f64], z: &[f64], t: f64) -> Vec<f64> {
        if self.edges.is_empty() {
            return vec![0.0, 0.0];
        }
        let total = self.dist(y, z);
        let s = t * total;
        let (ey, ay, by, ya, yb) = self.parts(y);
        let (ez, az, bz, za, zb) = self.parts(z);
        if ey == ez {
            return vec![ey as f64, (1.0 - t) * y[1] + t * z[1]];
        }
        // Choose the exit vertex of y's edge and entry vertex of z's edge
        // realizing the distance.
        let d = |u: usize, v: usize| self.dist[u * self.n + v];
        let options = [(ya, ay, az, za), (ya, ay, bz, zb), (yb, by, az, za), (yb, by, bz, zb)];
        let &(off_y, exit, entry, off_z) = options
            .iter()
            .min_by(|p, q| (p.0 + d(p.1, p.2) + p.3).total_cmp(&(q.0 + d(q.1, q.2) + q.3)))
            .expect("four options");
        if s <= off_y {
            let off = if exit == ay { y[1] - s } else { y[1] + s };
            return vec![ey as f64, off];
        }
        let mid = d(exit, entry);
        if s <= off_y + mid {
            return self.walk(exit, entry, s - off_y);
        }
        let r = (s - off_y - mid).min(off_z);
        let off = if entry == az { r } else { self.edges[ez].2 - r };
        vec![ez as f64, off]
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.edges.is_empty() {
            return vec![0.0, 0.0];
        }
        let total: f64 = self.edges.iter().map(|e| e.2).sum();
        let mut r = rng.random::<f64>() * total;
        for (i, &(_, _, w)) in self.edges.iter().enumerate() {
            if r <= w {
                return vec![i as f64, r];
            }
            r -= w;
        }
        let last = self.edges.len() - 1;
        vec![last as f64, self.edges[last].2]
    }

    /// Random point at distance at most `scale` from `x`, found by walking
    /// toward a random target.
    pub fn perturb<R: Rng + ?Sized>(&self, x: &[f64], scale: f64, rng: &mut R) -> Vec<f64> {
        let target = self.random_point(rng);
        let d = self.dist(x, &target);
        if d == 0.0 {
            return x.to_vec();
        }
        let t = (scale * rng.random::<f64>() / d).min(1.0);
        self.geodesic(x, &target, t)
    }
}
