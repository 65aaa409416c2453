//! Finite reversible Markov chains stored as dense row-stochastic kernels.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::UndirectedGraph;
use crate::seed;

const ROW_SUM_TOL: f64 = 1e-12;
const BALANCE_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// Chains up to this many states are solved with a dense eigensolver.
pub const DENSE_LIMIT: usize = 2000;

/// A finite Markov chain with kernel `μ(u→v)` (row-major) and measure `ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    n: usize,
    kernel: Vec<f64>,
    nu: Vec<f64>,
    reversible: bool,
}

impl MarkovChain {
    /// Validates a kernel/measure pair. The `reversible` flag is computed
    /// from detailed balance.
    pub fn new(n: usize, kernel: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        if n == 0 || kernel.len() != n * n || nu.len() != n {
            return Err(Error::InvalidChain(format!(
                "expected {n} states, kernel of length {} and measure of length {}",
                kernel.len(),
                nu.len()
            )));
        }
        for u in 0..n {
            let row = &kernel[u * n..(u + 1) * n];
            if row.iter().any(|&x| !(0.0..=1.0 + ROW_SUM_TOL).contains(&x)) {
                return Err(Error::InvalidChain(format!("row {u} has entries outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidChain(format!("row {u} sums to {s}")));
            }
        }
        if nu.iter().any(|&x| x < 0.0) || (nu.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidChain("measure is not a probability vector".into()));
        }
        let mut chain = Self { n, kernel, nu, reversible: false };
        for v in 0..n {
            let flow: f64 = (0..n).map(|u| chain.nu[u] * chain.kernel[u * n + v]).sum();
            if (flow - chain.nu[v]).abs() > STATIONARY_TOL {
                return Err(Error::InvalidChain(format!("measure is not stationary at state {v}")));
            }
        }
        chain.reversible = chain.detailed_balance_defect() <= BALANCE_TOL;
        Ok(chain)
    }

    /// Chain with transition weights `w(u,v) = w(v,u) ≥ 0`:
    /// `μ(u→v) = w(u,v)/W(u)` and `ν(u) ∝ W(u)`.
    pub fn from_symmetric_weights(n: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::InvalidChain("weight matrix has the wrong size".into()));
        }
        let mut total = 0.0;
        let mut row_sums = vec![0.0; n];
        for u in 0..n {
            for v in 0..n {
                let w = weights[u * n + v];
                if w < 0.0 || (w - weights[v * n + u]).abs() > 1e-15 * w.abs().max(1.0) {
                    return Err(Error::InvalidChain("weights must be symmetric and nonnegative".into()));
                }
                row_sums[u] += w;
            }
            if row_sums[u] <= 0.0 {
                return Err(Error::InvalidChain(format!("state {u} has no outgoing weight")));
            }
            total += row_sums[u];
        }
        let mut kernel = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                kernel[u * n + v] = weights[u * n + v] / row_sums[u];
            }
        }
        let nu = row_sums.iter().map(|w| w / total).collect();
        Self::new(n, kernel, nu)
    }

    /// Random reversible chain on `n` states: a random connected weighted
    /// graph (a spanning path plus random extra weights, some on the diagonal).
    pub fn random_reversible(n: usize, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed, &[0x6368_6169]);
        let mut w = vec![0.0; n * n];
        for u in 0..n {
            for v in u..n {
                let x: f64 = if v == u + 1 {
                    0.2 + rng.random::<f64>()
                } else if rng.random::<f64>() < 0.4 {
                    rng.random::<f64>()
                } else {
                    0.0
                };
                w[u * n + v] = x;
                w[v * n + u] = x;
            }
        }
        if n == 1 {
            w[0] = 1.0;
        }
        Self::from_symmetric_weights(n, &w)
    }

    pub fn state_count(&self) -> usize {
        self.n
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn transition(&self, u: usize, v: usize) -> f64 {
        self.kernel[u * self.n + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.kernel[u * self.n..(u + 1) * self.n]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.nu
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    /// `max |ν(u)μ(u→v) − ν(v)μ(v→u)|`.
    pub fn detailed_balance_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for u in 0..n {
            for v in u + 1..n {
                let a = self.nu[u] * self.kernel[u * n + v];
                let b = self.nu[v] * self.kernel[v * n + u];
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// Strong connectivity of the positive-entry digraph.
    pub fn is_irreducible(&self) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.n];
            seen[0] = true;
            let mut stack = vec![0];
            while let Some(u) = stack.pop() {
                for v in 0..self.n {
                    let p = if forward { self.transition(u, v) } else { self.transition(v, u) };
                    if p > 0.0 && !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Period of an irreducible chain: gcd of `level(u) + 1 − level(v)` over
    /// positive transitions, where `level` is BFS depth from state 0.
    pub fn period(&self) -> usize {
        let mut level = vec![usize::MAX; self.n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0]);
        let mut g = 0usize;
        while let Some(u) = queue.pop_front() {
            for v in 0..self.n {
                if self.transition(u, v) <= 0.0 {
                    continue;
                }
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    let diff = (level[u] + 1).abs_diff(level[v]);
                    g = gcd(g, diff);
                }
            }
        }
        g
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period() == 1
    }

    /// Ergodic in the sense used for spectral gaps: irreducible. Periodic
    /// chains are accepted; see [`Self::is_aperiodic`].
    pub fn require_ergodic(&self) -> Result<()> {
        if self.is_irreducible() {
            Ok(())
        } else {
            Err(Error::NotErgodic("positive-transition digraph is not strongly connected".into()))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("chain serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            kernel: Vec<f64>,
            nu: Vec<f64>,
            #[serde(default)]
            reversible: Option<bool>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::InvalidChain(format!("bad chain JSON: {e}")))?;
        let chain = Self::new(raw.n, raw.kernel, raw.nu)?;
        if raw.reversible == Some(true) && !chain.reversible {
            return Err(Error::NotReversible);
        }
        Ok(chain)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The standard random walk on a connected graph.
pub fn standard_walk(g: &UndirectedGraph) -> Result<MarkovChain> {
    g.require_connected()?;
    let n = g.vertex_count();
    let two_m = 2.0 * g.edge_count() as f64;
    if g.edge_count() == 0 {
        return MarkovChain::new(1, vec![1.0], vec![1.0]);
    }
    let mut kernel = vec![0.0; n * n];
    for u in 0..n {
        let share = 1.0 / g.degree(u) as f64;
        for &v in g.neighbors(u) {
            kernel[u * n + v] = share;
        }
    }
    let nu = (0..n).map(|u| g.degree(u) as f64 / two_m).collect();
    MarkovChain::new(n, kernel, nu)
}

fn mat_mul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let row_b = &b[k * n..(k + 1) * n];
            let row_o = &mut out[i * n..(i + 1) * n];
            for (o, &bkj) in row_o.iter_mut().zip(row_b) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// `n`-th convolution power `μ^n`, by repeated squaring.
pub fn convolve(c: &MarkovChain, power: usize) -> Result<MarkovChain> {
    if power == 0 {
        return Err(Error::OutOfRange("convolution power must be positive".into()));
    }
    let n = c.n;
    let mut result: Option<Vec<f64>> = None;
    let mut base = c.kernel.clone();
    let mut e = power;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => mat_mul(n, &r, &base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = mat_mul(n, &base, &base);
        }
    }
    let mut kernel = result.expect("power >= 1");
    // Renormalize rows against rounding drift.
    for u in 0..n {
        let row = &mut kernel[u * n..(u + 1) * n];
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    let mut out = MarkovChain { n, kernel, nu: c.nu.clone(), reversible: false };
    out.reversible = c.reversible && out.detailed_balance_defect() <= BALANCE_TOL;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    ExactDense,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub second_largest_eigenvalue: f64,
    /// `σ = 1 − λ₂`.
    pub gap: f64,
    pub method: SpectralMethod,
    /// Right eigenvector of the kernel for `λ₂`, normalized in `L²(ν)`.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

/// Spectral gap of a reversible irreducible chain. Dense up to
/// [`DENSE_LIMIT`] states, Lanczos beyond.
pub fn spectral_gap(c: &MarkovChain) -> Result<SpectralReport> {
    let method = if c.n <= DENSE_LIMIT { SpectralMethod::ExactDense } else { SpectralMethod::Iterative };
    spectral_gap_with(c, method)
}

pub fn spectral_gap_with(c: &MarkovChain, method: SpectralMethod) -> Result<SpectralReport> {
    if !c.reversible {
        return Err(Error::NotReversible);
    }
    c.require_ergodic()?;
    let n = c.n;
    if n == 1 {
        return Err(Error::NotErgodic("a single state has no spectral gap".into()));
    }
    let sqrt_nu: Vec<f64> = c.nu.iter().map(|x| x.sqrt()).collect();
    if sqrt_nu.iter().any(|&x| x == 0.0) {
        return Err(Error::NotErgodic("stationary measure has empty states".into()));
    }
    // S = D^{1/2} P D^{-1/2}; symmetric by detailed balance.
    let sym = |u: usize, v: usize| {
        let a = sqrt_nu[u] * c.kernel[u * n + v] / sqrt_nu[v];
        let b = sqrt_nu[v] * c.kernel[v * n + u] / sqrt_nu[u];
        0.5 * (a + b)
    };
    let (lambda2, phi) = match method {
        SpectralMethod::ExactDense => {
            let s = DMatrix::from_fn(n, n, sym);
            let eig = SymmetricEigen::new(s);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let top = eig.eigenvalues[order[0]];
            let second = eig.eigenvalues[order[1]];
            if top - second < 1e-12 {
                return Err(Error::NotErgodic("eigenvalue 1 is not simple".into()));
            }
            let phi: Vec<f64> = eig.eigenvectors.column(order[1]).iter().copied().collect();
            (second, phi)
        }
        SpectralMethod::Iterative => {
            let mut s = vec![0.0; n * n];
            for u in 0..n {
                for v in 0..n {
                    s[u * n + v] = sym(u, v);
                }
            }
            lanczos_second(n, &s, &sqrt_nu, 0x6c61_6e63)?
        }
    };
    // Back to a right eigenvector of the kernel, unit norm in L²(ν).
    let mut f: Vec<f64> = phi.iter().zip(&sqrt_nu).map(|(p, s)| p / s).collect();
    let norm: f64 = f.iter().zip(&c.nu).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
    f.iter_mut().for_each(|x| *x /= norm);
    Ok(SpectralReport { second_largest_eigenvalue: lambda2, gap: 1.0 - lambda2, method, eigenvector: f })
}

/// Largest eigenpair of the symmetric matrix `s` on the orthogonal complement
/// of `top` (its Perron vector), by restarted Lanczos with full
/// reorthogonalization.
fn lanczos_second(n: usize, s: &[f64], top: &[f64], seed_tag: u64) -> Result<(f64, Vec<f64>)> {
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n).map(|i| s[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };
    let top_norm: f64 = top.iter().map(|x| x * x).sum::<f64>().sqrt();
    let top: Vec<f64> = top.iter().map(|x| x / top_norm).collect();
    let project = |x: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for b in std::iter::once(&top).chain(basis.iter()) {
            let d: f64 = x.iter().zip(b).map(|(a, c)| a * c).sum();
            x.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
        }
    };
    let normalize = |x: &mut Vec<f64>| -> f64 {
        let nrm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nrm > 0.0 {
            x.iter_mut().for_each(|a| *a /= nrm);
        }
        nrm
    };

    let mut rng = seed::rng(seed_tag, &[n as u64]);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let krylov = (n - 1).min(150);
    let mut last = (f64::NAN, f64::INFINITY);
    for _restart in 0..200 {
        project(&mut start, &[]);
        normalize(&mut start);
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for k in 0..krylov {
            let mut w = apply(&basis[k]);
            let a: f64 = w.iter().zip(&basis[k]).map(|(x, y)| x * y).sum();
            alpha.push(a);
            // Full reorthogonalization, twice for stability.
            project(&mut w, &basis);
            project(&mut w, &basis);
            let b = normalize(&mut w);
            if k + 1 == krylov || b < 1e-13 {
                beta.push(b);
                break;
            }
            beta.push(b);
            basis.push(w);
        }
        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (idx, &theta) =
            eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty tridiagonal");
        let y = eig.eigenvectors.column(idx);
        let residual = (beta[m - 1] * y[m - 1]).abs();
        let mut ritz = vec![0.0; n];
        for (j, b) in basis.iter().enumerate().take(m) {
            ritz.iter_mut().zip(b).for_each(|(r, x)| *r += y[j] * x);
        }
        if residual < 1e-10 || m < krylov {
            return Ok((theta, ritz));
        }
        last = (theta, residual);
        start = ritz;
    }
    Err(Error::NoConvergence { iterations: 200, residual: last.1 })
}

/// `(D^{1/2} P D^{-1/2})` as an nalgebra matrix, for callers needing the full
/// spectrum.
pub fn symmetrized(c: &MarkovChain) -> DMatrix<f64> {
    let n = c.n;
    let s: Vec<f64> = c.nu.iter().map(|x| x.sqrt()).collect();
    DMatrix::from_fn(n, n, |u, v| s[u] * c.kernel[u * n + v] / s[v])
}

/// Applies the kernel to a function: `(Pf)(u) = Σ_v μ(u→v) f(v)`.
pub fn apply(c: &MarkovChain, f: &[f64]) -> Vec<f64> {
    let v = DVector::from_column_slice(f);
    let p = DMatrix::from_row_slice(c.n, c.n, &c.kernel);
    (p * v).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn standard_walk_examples() {
        let k4 = standard_walk(&UndirectedGraph::complete(4).unwrap()).unwrap();
        assert!(k4.is_reversible());
        for u in 0..4 {
            for v in 0..4 {
                let expect = if u == v { 0.0 } else { 1.0 / 3.0 };
                assert!((k4.transition(u, v) - expect).abs() < 1e-15);
            }
            assert!((k4.stationary()[u] - 0.25).abs() < 1e-15);
        }
        let p3 = standard_walk(&UndirectedGraph::path(3).unwrap()).unwrap();
        assert_eq!(p3.stationary(), &[0.25, 0.5, 0.25]);
        let c5 = standard_walk(&UndirectedGraph::cycle(5).unwrap()).unwrap();
        assert!(c5.stationary().iter().all(|&x| (x - 0.2).abs() < 1e-15));
        let disconnected = UndirectedGraph::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(standard_walk(&disconnected).unwrap_err(), Error::Disconnected);
    }

    #[test]
    fn convolution_examples() {
        let c4 = standard_walk(&UndirectedGraph::cycle(4).unwrap()).unwrap();
        assert_eq!(convolve(&c4, 1).unwrap(), c4);
        let sq = convolve(&c4, 2).unwrap();
        assert!((sq.transition(0, 0) - 0.5).abs() < 1e-15);
        assert!(sq.is_reversible());
        let k4 = standard_walk(&UndirectedGraph::complete(4).unwrap()).unwrap();
        assert!((convolve(&k4, 2).unwrap().transition(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!(convolve(&k4, 0).is_err());
    }

    #[test]
    fn convolution_powers_compose() {
        let c = MarkovChain::random_reversible(7, 3).unwrap();
        for (a, b) in [(1, 2), (2, 3), (3, 4)] {
            let whole = convolve(&c, a * b).unwrap();
            let split = convolve(&convolve(&c, a).unwrap(), b).unwrap();
            for (x, y) in whole.kernel().iter().zip(split.kernel()) {
                assert!((x - y).abs() < 1e-10);
            }
            assert!(whole.is_reversible());
        }
    }

    #[test]
    fn gap_examples() {
        let k4 = standard_walk(&UndirectedGraph::complete(4).unwrap()).unwrap();
        let r = spectral_gap(&k4).unwrap();
        assert!((r.second_largest_eigenvalue + 1.0 / 3.0).abs() < 1e-12);
        assert!((r.gap - 4.0 / 3.0).abs() < 1e-12);
        let c5 = standard_walk(&UndirectedGraph::cycle(5).unwrap()).unwrap();
        assert!((spectral_gap(&c5).unwrap().gap - (1.0 - (2.0 * PI / 5.0).cos())).abs() < 1e-12);
        let c4 = standard_walk(&UndirectedGraph::cycle(4).unwrap()).unwrap();
        let r = spectral_gap(&c4).unwrap();
        assert!(r.second_largest_eigenvalue.abs() < 1e-12 && (r.gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_gaps() {
        for n in 3..=20 {
            let c = standard_walk(&UndirectedGraph::complete(n).unwrap()).unwrap();
            let gap = spectral_gap(&c).unwrap().gap;
            assert!((gap - n as f64 / (n as f64 - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn eigenvector_is_an_eigenvector() {
        let g = crate::graph::gen_random_regular(30, 3, 5).unwrap();
        let c = standard_walk(&g).unwrap();
        let r = spectral_gap(&c).unwrap();
        let pf = apply(&c, &r.eigenvector);
        for (a, b) in pf.iter().zip(&r.eigenvector) {
            assert!((a - r.second_largest_eigenvalue * b).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        for seed in 0..3 {
            let g = crate::graph::gen_random_regular(120, 3, seed).unwrap();
            let c = standard_walk(&g).unwrap();
            let dense = spectral_gap_with(&c, SpectralMethod::ExactDense).unwrap();
            let iter = spectral_gap_with(&c, SpectralMethod::Iterative).unwrap();
            assert!((dense.gap - iter.gap).abs() < 1e-6, "{} vs {}", dense.gap, iter.gap);
        }
        let c = MarkovChain::random_reversible(60, 9).unwrap();
        let dense = spectral_gap_with(&c, SpectralMethod::ExactDense).unwrap();
        let iter = spectral_gap_with(&c, SpectralMethod::Iterative).unwrap();
        assert!((dense.gap - iter.gap).abs() < 1e-6);
    }

    #[test]
    fn gap_rejects_bad_chains() {
        // Non-reversible cyclic rotation with a drift.
        let kernel = vec![0.0, 0.9, 0.1, 0.1, 0.0, 0.9, 0.9, 0.1, 0.0];
        let c = MarkovChain::new(3, kernel, vec![1.0 / 3.0; 3]).unwrap();
        assert!(!c.is_reversible());
        assert_eq!(spectral_gap(&c).unwrap_err(), Error::NotReversible);
        // Two absorbing blocks.
        let w = vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let c = MarkovChain::from_symmetric_weights(4, &w).unwrap();
        assert!(matches!(spectral_gap(&c), Err(Error::NotErgodic(_))));
    }

    #[test]
    fn period_detection() {
        let c6 = standard_walk(&UndirectedGraph::cycle(6).unwrap()).unwrap();
        assert_eq!(c6.period(), 2);
        let c5 = standard_walk(&UndirectedGraph::cycle(5).unwrap()).unwrap();
        assert!(c5.is_aperiodic());
    }

    #[test]
    fn json_round_trip() {
        let c = MarkovChain::random_reversible(5, 1).unwrap();
        let back = MarkovChain::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
        assert!(MarkovChain::from_json(r#"{"n":2,"kernel":[0.5,0.5,0.5],"nu":[0.5,0.5]}"#).is_err());
    }
}
