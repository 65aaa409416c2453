//! Isometries of the supported spaces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Point, Space, WeightedTree};
use crate::error::{Error, Result};

type C = Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Isometry {
    Identity,
    /// `x ↦ A x + b`, `A` row-major. Orthogonal for Euclidean spaces, a signed
    /// permutation for `ℓ_p`.
    Affine {
        dim: usize,
        linear: Vec<f64>,
        shift: Vec<f64>,
    },
    /// `z ↦ (a w + b)/(b̄ w + ā)` with `w = z̄` if `conj`, else `w = z`, and
    /// `|a|² − |b|² = 1`.
    Mobius {
        a: (f64, f64),
        b: (f64, f64),
        conj: bool,
    },
    /// Tree automorphism given by a vertex permutation.
    Tree {
        perm: Vec<usize>,
    },
    Product(Vec<Isometry>),
}

fn cx(p: (f64, f64)) -> C {
    C::new(p.0, p.1)
}

fn pair(c: C) -> (f64, f64) {
    (c.re, c.im)
}

impl Isometry {
    /// Rotation of the plane by `angle`.
    pub fn rotation2(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Isometry::Affine { dim: 2, linear: vec![c, -s, s, c], shift: vec![0.0, 0.0] }
    }

    /// Reflection of the plane across the line at `angle` through the origin.
    pub fn reflection2(angle: f64) -> Self {
        let (s, c) = (2.0 * angle).sin_cos();
        Isometry::Affine { dim: 2, linear: vec![c, s, s, -c], shift: vec![0.0, 0.0] }
    }

    pub fn translation(shift: Vec<f64>) -> Self {
        let dim = shift.len();
        let mut linear = vec![0.0; dim * dim];
        for i in 0..dim {
            linear[i * dim + i] = 1.0;
        }
        Isometry::Affine { dim, linear, shift }
    }

    /// `x ↦ −x + 2c`, the point reflection through `c`.
    pub fn point_reflection(center: &[f64]) -> Self {
        let dim = center.len();
        let mut linear = vec![0.0; dim * dim];
        for i in 0..dim {
            linear[i * dim + i] = -1.0;
        }
        Isometry::Affine { dim, linear, shift: center.iter().map(|c| 2.0 * c).collect() }
    }

    /// `x ↦ sign·x_{perm}` coordinatewise; an isometry of every `ℓ_p`.
    pub fn signed_permutation(perm: &[usize], signs: &[f64]) -> Result<Self> {
        let dim = perm.len();
        if signs.len() != dim || signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::InvalidAction("signs must be ±1, one per coordinate".into()));
        }
        check_perm(perm)?;
        let mut linear = vec![0.0; dim * dim];
        for i in 0..dim {
            linear[i * dim + perm[i]] = signs[i];
        }
        Ok(Isometry::Affine { dim, linear, shift: vec![0.0; dim] })
    }

    /// Rotation of the disk about the origin.
    pub fn disk_rotation(angle: f64) -> Self {
        let a = C::from_polar(1.0, angle / 2.0);
        Isometry::Mobius { a: pair(a), b: (0.0, 0.0), conj: false }
    }

    /// Hyperbolic translation by `s` along the real axis.
    pub fn disk_translation(s: f64) -> Self {
        Isometry::Mobius { a: ((s / 2.0).cosh(), 0.0), b: ((s / 2.0).sinh(), 0.0), conj: false }
    }

    /// Complex conjugation of the disk.
    pub fn disk_conjugation() -> Self {
        Isometry::Mobius { a: (1.0, 0.0), b: (0.0, 0.0), conj: true }
    }

    pub fn tree(perm: Vec<usize>) -> Result<Self> {
        check_perm(&perm)?;
        Ok(Isometry::Tree { perm })
    }

    /// Checks that the map is an isometry of `space` (structure, not samples).
    pub fn check(&self, space: &Space) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidAction(format!("{m} for a {} space", space.kind())));
        match (self, space) {
            (Isometry::Identity, _) => Ok(()),
            (Isometry::Affine { dim, linear, shift }, Space::Euclidean { dim: d }) => {
                if dim != d || shift.len() != *d || linear.len() != d * d {
                    return bad("dimension mismatch");
                }
                for i in 0..*d {
                    for j in 0..*d {
                        let dot: f64 = (0..*d).map(|k| linear[k * d + i] * linear[k * d + j]).sum();
                        let want = if i == j { 1.0 } else { 0.0 };
                        if (dot - want).abs() > 1e-9 {
                            return bad("linear part is not orthogonal");
                        }
                    }
                }
                Ok(())
            }
            (Isometry::Affine { dim, linear, shift }, Space::Lp { dim: d, .. }) => {
                if dim != d || shift.len() != *d || linear.len() != d * d {
                    return bad("dimension mismatch");
                }
                for i in 0..*d {
                    let row = &linear[i * d..(i + 1) * d];
                    let nz: Vec<_> = row.iter().filter(|x| **x != 0.0).collect();
                    if nz.len() != 1 || nz[0].abs() != 1.0 {
                        return bad("linear part is not a signed permutation");
                    }
                    let col_nz = (0..*d).filter(|k| linear[k * d + i] != 0.0).count();
                    if col_nz != 1 {
                        return bad("linear part is not a signed permutation");
                    }
                }
                Ok(())
            }
            (Isometry::Mobius { a, b, .. }, Space::Hyperbolic) => {
                let det = cx(*a).norm_sqr() - cx(*b).norm_sqr();
                if (det - 1.0).abs() > 1e-9 {
                    return bad("|a|² − |b|² must be 1");
                }
                Ok(())
            }
            (Isometry::Tree { perm }, Space::Tree(t)) => {
                if perm.len() != t.vertex_count() {
                    return bad("permutation length mismatch");
                }
                for &(u, v, w) in t.edges() {
                    match find_edge(t, perm[u], perm[v]) {
                        Some(e) if (t.edges()[e].2 - w).abs() <= 1e-12 * w => {}
                        _ => return bad("permutation does not preserve weighted edges"),
                    }
                }
                Ok(())
            }
            (Isometry::Product(parts), Space::Product { factors, .. }) => {
                if parts.len() != factors.len() {
                    return bad("factor count mismatch");
                }
                parts.iter().zip(factors).try_for_each(|(g, f)| g.check(f))
            }
            _ => bad("isometry kind does not match"),
        }
    }

    /// Image of a point. The isometry is assumed to match the space.
    pub fn apply(&self, space: &Space, x: &[f64]) -> Point {
        match (self, space) {
            (Isometry::Identity, _) => x.to_vec(),
            (Isometry::Affine { dim, linear, shift }, _) => {
                (0..*dim).map(|i| (0..*dim).map(|j| linear[i * dim + j] * x[j]).sum::<f64>() + shift[i]).collect()
            }
            (Isometry::Mobius { a, b, conj }, _) => {
                let mut z = C::new(x[0], x[1]);
                if *conj {
                    z = z.conj();
                }
                let (a, b) = (cx(*a), cx(*b));
                let w = (a * z + b) / (b.conj() * z + a.conj());
                vec![w.re, w.im]
            }
            (Isometry::Tree { perm }, Space::Tree(t)) => {
                if t.edges().is_empty() {
                    return x.to_vec();
                }
                let (u, v, w) = t.edges()[x[0] as usize];
                let e = find_edge(t, perm[u], perm[v]).expect("checked automorphism");
                let off = if t.edges()[e].0 == perm[u] { x[1] } else { w - x[1] };
                vec![e as f64, off]
            }
            (Isometry::Product(parts), Space::Product { factors, .. }) => {
                let slices = space.split(x);
                parts.iter().zip(factors).zip(slices).flat_map(|((g, f), s)| g.apply(f, s)).collect()
            }
            _ => panic!("isometry does not match the space"),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Isometry) -> Result<Isometry> {
        let err = || Err(Error::InvalidAction("cannot compose isometries of different kinds".into()));
        Ok(match (self, other) {
            (Isometry::Identity, g) | (g, Isometry::Identity) => g.clone(),
            (Isometry::Affine { dim, linear: l1, shift: s1 }, Isometry::Affine { dim: d2, linear: l2, shift: s2 }) => {
                if dim != d2 {
                    return err();
                }
                let d = *dim;
                let mut linear = vec![0.0; d * d];
                let mut shift = s1.clone();
                for i in 0..d {
                    for j in 0..d {
                        linear[i * d + j] = (0..d).map(|k| l1[i * d + k] * l2[k * d + j]).sum();
                        shift[i] += l1[i * d + j] * s2[j];
                    }
                }
                Isometry::Affine { dim: d, linear, shift }
            }
            (Isometry::Mobius { a: a1, b: b1, conj: c1 }, Isometry::Mobius { a: a2, b: b2, conj: c2 }) => {
                // f∘g(z) = M_f · conj^{c_f}(M_g · conj^{c_g} z)
                //        = M_f · M_g' · conj^{c_f + c_g} z, M_g' = conj^{c_f}(M_g).
                let (a1, b1) = (cx(*a1), cx(*b1));
                let (mut a2, mut b2) = (cx(*a2), cx(*b2));
                if *c1 {
                    a2 = a2.conj();
                    b2 = b2.conj();
                }
                // [[a1, b1], [b̄1, ā1]] · [[a2, b2], [b̄2, ā2]]
                let a = a1 * a2 + b1 * b2.conj();
                let b = a1 * b2 + b1 * a2.conj();
                Isometry::Mobius { a: pair(a), b: pair(b), conj: c1 ^ c2 }
            }
            (Isometry::Tree { perm: p1 }, Isometry::Tree { perm: p2 }) => {
                if p1.len() != p2.len() {
                    return err();
                }
                Isometry::Tree { perm: p2.iter().map(|&v| p1[v]).collect() }
            }
            (Isometry::Product(f), Isometry::Product(g)) => {
                if f.len() != g.len() {
                    return err();
                }
                Isometry::Product(f.iter().zip(g).map(|(a, b)| a.compose(b)).collect::<Result<_>>()?)
            }
            _ => return err(),
        })
    }

    pub fn inverse(&self) -> Isometry {
        match self {
            Isometry::Identity => Isometry::Identity,
            Isometry::Affine { dim, linear, shift } => {
                // Orthogonal and signed-permutation matrices invert by transpose.
                let d = *dim;
                let mut lt = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        lt[i * d + j] = linear[j * d + i];
                    }
                }
                let shift = (0..d).map(|i| -(0..d).map(|j| lt[i * d + j] * shift[j]).sum::<f64>()).collect();
                Isometry::Affine { dim: d, linear: lt, shift }
            }
            Isometry::Mobius { a, b, conj } => {
                // (M conj^c)^{-1} = conj^c M^{-1} = (conj^c M^{-1}) conj^c.
                let (mut a, mut b) = (cx(*a).conj(), -cx(*b));
                if *conj {
                    a = a.conj();
                    b = b.conj();
                }
                Isometry::Mobius { a: pair(a), b: pair(b), conj: *conj }
            }
            Isometry::Tree { perm } => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                Isometry::Tree { perm: inv }
            }
            Isometry::Product(parts) => Isometry::Product(parts.iter().map(Isometry::inverse).collect()),
        }
    }
}

fn check_perm(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidAction("not a permutation".into()));
        }
    }
    Ok(())
}

fn find_edge(t: &WeightedTree, u: usize, v: usize) -> Option<usize> {
    t.edges().iter().position(|&(a, b, _)| (a == u && b == v) || (a == v && b == u))
}
