//! Gromov's graph model: random symmetric labelings of a finite graph by
//! words in a free group, and the walks they induce on the free group's
//! Cayley tree.
//!
//! Generators are the letters `1..=k`, inverses are negated. In text form
//! generator `i` is the `i`-th lowercase letter and its inverse the
//! uppercase one.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use num_traits::ToPrimitive;

use crate::graph::{
    distance_distribution, distance_distribution_exact, gen_random_regular, girth, UndirectedGraph,
    EXACT_MODE_MAX_VERTICES,
};
use crate::seed;

/// A freely reduced word.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<i32>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    /// Freely reduces a letter sequence. Letters must be nonzero.
    pub fn reduce(letters: &[i32]) -> Result<Self> {
        let mut out: Vec<i32> = Vec::with_capacity(letters.len());
        for &l in letters {
            if l == 0 {
                return Err(Error::UnknownLetter('0'));
            }
            push_reduced(&mut out, l);
        }
        Ok(Word(out))
    }

    pub fn letters(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn multiply(&self, other: &Word) -> Word {
        let mut out = self.0.clone();
        for &l in &other.0 {
            push_reduced(&mut out, l);
        }
        Word(out)
    }

    pub fn inverse(&self) -> Word {
        Word(invert(&self.0))
    }

    /// Parses the letter text form; an empty string or `e` is the identity.
    pub fn parse(text: &str) -> Result<Self> {
        if text == "e" {
            return Ok(Word::identity());
        }
        let letters = text
            .chars()
            .map(|c| match c {
                'a'..='z' => Ok(c as i32 - 'a' as i32 + 1),
                'A'..='Z' => Ok(-(c as i32 - 'A' as i32 + 1)),
                _ => Err(Error::UnknownLetter(c)),
            })
            .collect::<Result<Vec<_>>>()?;
        Word::reduce(&letters)
    }

    /// Largest generator index used.
    pub fn rank(&self) -> usize {
        self.0.iter().map(|l| l.unsigned_abs() as usize).max().unwrap_or(0)
    }
}

fn push_reduced(out: &mut Vec<i32>, l: i32) {
    if out.last() == Some(&-l) {
        out.pop();
    } else {
        out.push(l);
    }
}

fn invert(letters: &[i32]) -> Vec<i32> {
    letters.iter().rev().map(|l| -l).collect()
}

fn letter_char(l: i32) -> char {
    let i = (l.unsigned_abs() - 1) as u8;
    if l > 0 {
        (b'a' + i) as char
    } else {
        (b'A' + i) as char
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("e");
        }
        self.0.iter().try_for_each(|&l| write!(f, "{}", letter_char(l)))
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Word::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn check_rank(k: usize) -> Result<()> {
    if k == 0 || k > 26 {
        return Err(Error::OutOfRange(format!("generator count must be in 1..=26 (got {k})")));
    }
    Ok(())
}

/// A symmetric labeling: each undirected edge `(u, v)` (in the graph's edge
/// order) carries an unreduced length-`j` string read from `u` to `v`; the
/// reverse orientation reads its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub k: usize,
    pub j: usize,
    edges: Vec<(usize, usize)>,
    labels: Vec<Vec<i32>>,
    index: HashMap<(usize, usize), usize>,
}

#[derive(Serialize, Deserialize)]
struct LabelingRecord {
    k: usize,
    j: usize,
    labels: Vec<(usize, usize, String)>,
}

impl Labeling {
    fn build(k: usize, j: usize, edges: Vec<(usize, usize)>, labels: Vec<Vec<i32>>) -> Self {
        let index = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        Labeling { k, j, edges, labels, index }
    }

    /// Every edge labeled by the same string (reduced or not).
    pub fn constant(g: &UndirectedGraph, k: usize, letters: &[i32]) -> Result<Self> {
        check_rank(k)?;
        if letters.is_empty() || letters.iter().any(|&l| l == 0 || l.unsigned_abs() as usize > k) {
            return Err(Error::OutOfRange("label letters must be nonzero and within the generator count".into()));
        }
        Ok(Self::build(k, letters.len(), g.edges().to_vec(), vec![letters.to_vec(); g.edge_count()]))
    }

    /// The unreduced string read along the oriented edge `u → v`.
    pub fn label(&self, u: usize, v: usize) -> Result<Vec<i32>> {
        if let Some(&i) = self.index.get(&(u, v)) {
            Ok(self.labels[i].clone())
        } else if let Some(&i) = self.index.get(&(v, u)) {
            Ok(invert(&self.labels[i]))
        } else {
            Err(Error::NotAdjacent(u, v))
        }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn to_json(&self) -> String {
        let rec = LabelingRecord {
            k: self.k,
            j: self.j,
            labels: self
                .edges
                .iter()
                .zip(&self.labels)
                .map(|(&(u, v), l)| (u, v, l.iter().map(|&c| letter_char(c)).collect()))
                .collect(),
        };
        serde_json::to_string(&rec).expect("labeling serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: LabelingRecord =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        check_rank(rec.k)?;
        let mut edges = Vec::new();
        let mut labels = Vec::new();
        for (u, v, s) in rec.labels {
            // Unreduced: parse letter by letter.
            let letters: Vec<i32> =
                s.chars().map(|c| Word::parse(&c.to_string()).map(|w| w.letters()[0])).collect::<Result<_>>()?;
            if letters.len() != rec.j || letters.iter().any(|l| l.unsigned_abs() as usize > rec.k) {
                return Err(Error::OutOfRange(format!("label {s:?} does not fit k={}, j={}", rec.k, rec.j)));
            }
            edges.push((u, v));
            labels.push(letters);
        }
        Ok(Self::build(rec.k, rec.j, edges, labels))
    }
}

/// I.i.d. uniform length-`j` strings over the `2k` letters, one per edge.
pub fn sample_labeling(g: &UndirectedGraph, k: usize, j: usize, seed: u64) -> Result<Labeling> {
    check_rank(k)?;
    if j == 0 {
        return Err(Error::OutOfRange("word length must be positive".into()));
    }
    let mut rng = seed::rng(seed, &[0x6c61_6265]);
    let labels = g
        .edges()
        .iter()
        .map(|_| {
            (0..j)
                .map(|_| {
                    let i = rng.random_range(0..2 * k) as i32;
                    if i % 2 == 0 {
                        i / 2 + 1
                    } else {
                        -(i / 2 + 1)
                    }
                })
                .collect()
        })
        .collect();
    Ok(Labeling::build(k, j, g.edges().to_vec(), labels))
}

/// Reduced product of the edge labels along a vertex path.
pub fn alpha_path(alpha: &Labeling, path: &[usize]) -> Result<Word> {
    let mut out = Vec::new();
    for w in path.windows(2) {
        for l in alpha.label(w[0], w[1])? {
            push_reduced(&mut out, l);
        }
    }
    Ok(Word(out))
}

/// Words of a fundamental cycle basis: one cycle per non-tree edge of the
/// BFS tree from vertex 0, read from vertex 0. The normal closure of these
/// words is the normal closure of all cycle words.
pub fn relators(alpha: &Labeling, g: &UndirectedGraph) -> Result<Vec<Word>> {
    g.require_connected()?;
    if g.vertex_count() == 0 {
        return Ok(Vec::new());
    }
    let (parent, _) = g.bfs_tree(0);
    let root_path = |mut v: usize| {
        let mut p = vec![v];
        while parent[v] != usize::MAX {
            v = parent[v];
            p.push(v);
        }
        p.reverse();
        p
    };
    let mut out = Vec::new();
    for &(u, v) in g.edges() {
        if parent[u] == v || parent[v] == u {
            continue;
        }
        let mut cycle = root_path(u);
        let mut back = root_path(v);
        back.reverse();
        cycle.extend(back);
        out.push(alpha_path(alpha, &cycle)?);
    }
    Ok(out)
}

/// A finitely supported probability on the vertices of the `2k`-regular
/// tree, keyed by reduced words (relative to the basepoint).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeDistribution {
    pub masses: BTreeMap<Word, f64>,
}

impl TreeDistribution {
    pub fn point(w: Word) -> Self {
        TreeDistribution { masses: BTreeMap::from([(w, 1.0)]) }
    }

    pub fn get(&self, w: &Word) -> f64 {
        self.masses.get(w).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, w: Word, m: f64) {
        *self.masses.entry(w).or_insert(0.0) += m;
    }

    pub fn total(&self) -> f64 {
        self.masses.values().sum()
    }

    pub fn support_len(&self) -> usize {
        self.masses.values().filter(|&&m| m > 0.0).count()
    }

    pub fn radius(&self) -> usize {
        self.masses.iter().filter(|(_, &m)| m > 0.0).map(|(w, _)| w.len()).max().unwrap_or(0)
    }

    pub fn min_nonzero(&self) -> Option<f64> {
        self.masses.values().copied().filter(|&m| m > 0.0).reduce(f64::min)
    }

    /// Mass by word length.
    pub fn radial(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for (w, &m) in &self.masses {
            *out.entry(w.len()).or_insert(0.0) += m;
        }
        out
    }

    /// Left translation by `g`: the distribution seen from basepoint `g`.
    pub fn translate(&self, g: &Word) -> Self {
        let mut out = TreeDistribution::default();
        for (w, &m) in &self.masses {
            out.add(g.multiply(w), m);
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.masses.values_mut().for_each(|m| *m *= s);
    }

    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        for (w, &m) in &other.masses {
            self.add(w.clone(), s * m);
        }
    }

    pub fn tv_distance(&self, other: &Self) -> f64 {
        let mut sum = 0.0;
        for (w, &m) in &self.masses {
            sum += (m - other.get(w)).abs();
        }
        for (w, &m) in &other.masses {
            if !self.masses.contains_key(w) {
                sum += m.abs();
            }
        }
        sum / 2.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.masses).expect("distribution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let masses = serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        Ok(TreeDistribution { masses })
    }
}

impl Serialize for TreeDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.masses.serialize(s)
    }
}

/// All reduced words of length `r` over `k` generators.
pub fn reduced_words(k: usize, r: usize) -> Vec<Word> {
    let mut out = vec![Vec::new()];
    for _ in 0..r {
        let mut next = Vec::with_capacity(out.len() * (2 * k));
        for w in &out {
            for g in 1..=k as i32 {
                for l in [g, -g] {
                    if w.last() != Some(&-l) {
                        let mut v: Vec<i32> = w.clone();
                        v.push(l);
                        next.push(v);
                    }
                }
            }
        }
        out = next;
    }
    out.into_iter().map(Word).collect()
}

/// Distribution of the word length after `m` steps of the simple walk on the
/// `2k`-regular tree.
pub fn radial_profile(k: usize, m: usize) -> Vec<f64> {
    let deg = 2.0 * k as f64;
    let mut cur = vec![0.0; m + 1];
    cur[0] = 1.0;
    for _ in 0..m {
        let mut next = vec![0.0; m + 1];
        for (r, &p) in cur.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            if r == 0 {
                next[1] += p;
            } else {
                next[r - 1] += p / deg;
                if r < m {
                    next[r + 1] += p * (deg - 1.0) / deg;
                }
            }
        }
        cur = next;
    }
    cur
}

/// `μ_X^m` from the identity. Computed radially: every word of length `r`
/// carries `profile[r] / #words(r)`.
pub fn tree_walk(k: usize, m: usize) -> Result<TreeDistribution> {
    check_rank(k)?;
    let prof = radial_profile(k, m);
    let mut out = TreeDistribution::default();
    for (r, &p) in prof.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let words = reduced_words(k, r);
        let each = p / words.len() as f64;
        for w in words {
            out.masses.insert(w, each);
        }
    }
    Ok(out)
}

fn require_short(g: &UndirectedGraph, q: usize) -> Result<()> {
    let gi = girth(g);
    if gi.is_some_and(|gi| 2 * q >= gi) {
        return Err(Error::GirthTooSmall { q, needed: 2 * q, girth: gi.map_or("infinite".into(), |v| v.to_string()) });
    }
    Ok(())
}

/// `μ^q_{G,α}(e → ·)`: for each start `u` (weighted by the stationary
/// measure) every `q`-step walk is read through `α`. Also checks that each
/// walk reads the same element as its backtrack-erased path, and that the
/// erased path is a shortest path.
pub fn simulate_walk(alpha: &Labeling, g: &UndirectedGraph, q: usize) -> Result<TreeDistribution> {
    require_short(g, q)?;
    let table = g.distances()?;
    let two_m = 2.0 * g.edge_count() as f64;
    let mut out = TreeDistribution::default();
    for u in 0..g.vertex_count() {
        if g.degree(u) == 0 {
            if q == 0 {
                out.add(Word::identity(), 0.0);
            }
            continue;
        }
        let nu = g.degree(u) as f64 / two_m;
        let mut stack = vec![(vec![u], Vec::<i32>::new(), nu)];
        while let Some((path, word, mass)) = stack.pop() {
            let v = *path.last().expect("non-empty path");
            if path.len() == q + 1 {
                let mut erased: Vec<usize> = Vec::new();
                for &x in &path {
                    if erased.len() >= 2 && erased[erased.len() - 2] == x {
                        erased.pop();
                    } else {
                        erased.push(x);
                    }
                }
                if erased.len() - 1 != table.get(u, v) as usize {
                    return Err(Error::InvariantViolated(format!(
                        "erased walk from {u} to {v} is not a shortest path"
                    )));
                }
                let direct = alpha_path(alpha, &erased)?;
                if direct.0 != word {
                    return Err(Error::InvariantViolated(format!(
                        "walk from {u} reads {} but its erased path reads {direct}",
                        Word(word)
                    )));
                }
                out.add(Word(word), mass);
                continue;
            }
            let share = mass / g.degree(v) as f64;
            for &w in g.neighbors(v) {
                let mut nw = word.clone();
                for l in alpha.label(v, w)? {
                    push_reduced(&mut nw, l);
                }
                let mut np = path.clone();
                np.push(w);
                stack.push((np, nw, share));
            }
        }
    }
    if q == 0 {
        return Ok(TreeDistribution::point(Word::identity()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanWalk {
    /// `P_G^q(l)`.
    pub weights: BTreeMap<usize, f64>,
    pub distribution: TreeDistribution,
}

/// `μ̄^q = Σ_l P_G^q(l) μ_X^{jl}`. Weights are computed in exact arithmetic
/// on small graphs.
pub fn mean_walk(g: &UndirectedGraph, q: usize, j: usize, k: usize) -> Result<MeanWalk> {
    check_rank(k)?;
    require_short(g, q)?;
    let weights = if g.vertex_count() <= EXACT_MODE_MAX_VERTICES {
        distance_distribution_exact(g, q)?
            .into_iter()
            .map(|(l, p)| (l, p.to_f64().expect("probabilities are finite")))
            .collect()
    } else {
        distance_distribution(g, q)?
    };
    let mut distribution = TreeDistribution::default();
    for (&l, &p) in &weights {
        distribution.add_scaled(&tree_walk(k, j * l)?, p);
    }
    Ok(MeanWalk { weights, distribution })
}

/// Empirical mean of `μ^q_{G,α}` over `samples` labelings.
pub fn monte_carlo_walk(
    g: &UndirectedGraph,
    q: usize,
    k: usize,
    j: usize,
    samples: usize,
    seed: u64,
) -> Result<TreeDistribution> {
    if samples == 0 {
        return Err(Error::OutOfRange("need at least one sample".into()));
    }
    let runs: Vec<TreeDistribution> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let a = sample_labeling(g, k, j, seed::derive(seed, &[s as u64]))?;
            simulate_walk(&a, g, q)
        })
        .collect::<Result<_>>()?;
    let mut out = TreeDistribution::default();
    for r in &runs {
        out.add_scaled(r, 1.0 / samples as f64);
    }
    Ok(out)
}

/// `ε(d,k,j) = 1/(d(2k)^j)`.
pub fn epsilon(d: usize, k: usize, j: usize) -> f64 {
    1.0 / (d as f64 * (2.0 * k as f64).powi(j as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveSimulation {
    pub ok: bool,
    /// `min μ^q_α / μ̄^q` over the support of `μ̄^q` and `1 ≤ q ≤ q0`;
    /// `None` when `q0 = 0`.
    pub worst_ratio_low: Option<f64>,
    /// `max μ^1_α / μ_X^j` over the support of `μ^1_α`.
    pub worst_ratio_high: f64,
    /// `(q, min ratio)` per step.
    pub per_step: Vec<(usize, f64)>,
    pub low_ok: bool,
    pub high_ok: bool,
}

/// Checks `μ^q_α ≥ ½ μ̄^q` for `1 ≤ q ≤ q0` and `μ^1_α ≤ 2 μ_X^j`, pointwise
/// from the identity (equivariance covers every other basepoint).
pub fn effective_simulation_check(alpha: &Labeling, g: &UndirectedGraph, q0: usize) -> Result<EffectiveSimulation> {
    require_short(g, q0.max(1))?;
    let (k, j) = (alpha.k, alpha.j);
    let slack = 1e-12;
    let mut per_step = Vec::new();
    for q in 1..=q0 {
        let sim = simulate_walk(alpha, g, q)?;
        let mean = mean_walk(g, q, j, k)?;
        let r = mean
            .distribution
            .masses
            .iter()
            .filter(|(_, &m)| m > 0.0)
            .map(|(w, &m)| sim.get(w) / m)
            .fold(f64::INFINITY, f64::min);
        per_step.push((q, r));
    }
    let one = simulate_walk(alpha, g, 1)?;
    let xj = tree_walk(k, j)?;
    let worst_ratio_high = one
        .masses
        .iter()
        .filter(|(_, &m)| m > 0.0)
        .map(|(w, &m)| {
            let t = xj.get(w);
            if t > 0.0 {
                m / t
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let worst_ratio_low = per_step.iter().map(|p| p.1).reduce(f64::min);
    let low_ok = worst_ratio_low.is_none_or(|r| r >= 0.5 - slack);
    let high_ok = worst_ratio_high <= 2.0 + slack;
    Ok(EffectiveSimulation { ok: low_ok && high_ok, worst_ratio_low, worst_ratio_high, per_step, low_ok, high_ok })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AzumaTerm {
    pub q: usize,
    /// `τ_q = (4q/(3N))(d/3)^q`.
    pub tau: f64,
    /// `exp(−ε^{2q} / (8|E| τ_q²))`.
    pub tail: f64,
    /// `(2k)^{qj}`.
    pub multiplicity: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AzumaBound {
    pub epsilon: f64,
    pub terms: Vec<AzumaTerm>,
    pub total: f64,
    /// `min(total, 1)`.
    pub probability: f64,
}

/// Union bound over `1 ≤ q ≤ q0` of the Azuma tail for one deviation,
/// multiplied by the number of tree vertices within reach.
pub fn azuma_failure_bound(d: usize, k: usize, j: usize, q0: usize, n: usize, edge_count: usize) -> Result<AzumaBound> {
    if d == 0 || k == 0 || j == 0 || q0 == 0 || n == 0 || edge_count == 0 {
        return Err(Error::OutOfRange("all parameters must be positive".into()));
    }
    let eps = epsilon(d, k, j);
    let terms: Vec<AzumaTerm> = (1..=q0)
        .map(|q| {
            let tau = tau_q(d, q, n);
            let tail = (-eps.powi(2 * q as i32) / (8.0 * edge_count as f64 * tau * tau)).exp();
            let multiplicity = (2.0 * k as f64).powi((q * j) as i32);
            AzumaTerm { q, tau, tail, multiplicity, contribution: tail * multiplicity }
        })
        .collect();
    let total = terms.iter().map(|t| t.contribution).sum::<f64>();
    Ok(AzumaBound { epsilon: eps, terms, total, probability: total.min(1.0) })
}

pub fn tau_q(d: usize, q: usize, n: usize) -> f64 {
    4.0 * q as f64 / (3.0 * n as f64) * (d as f64 / 3.0).powi(q as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRate {
    pub n: usize,
    pub trials: usize,
    pub failures: usize,
    pub rate: f64,
}

/// Fraction of seeds for which a fresh random `d`-regular graph on `n`
/// vertices with a fresh labeling fails the effective simulation check.
pub fn effsim_failure_rate(
    n: usize,
    d: usize,
    k: usize,
    j: usize,
    q0: usize,
    trials: usize,
    seed: u64,
) -> Result<FailureRate> {
    let fails: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = seed::derive(seed, &[n as u64, t as u64]);
            let g = gen_random_regular(n, d, s)?;
            let a = sample_labeling(&g, k, j, s)?;
            Ok(!effective_simulation_check(&a, &g, q0)?.ok)
        })
        .collect::<Result<_>>()?;
    let failures = fails.iter().filter(|&&f| f).count();
    Ok(FailureRate { n, trials, failures, rate: failures as f64 / trials.max(1) as f64 })
}
