//! `pfp`: seeded batch experiments over the poincare-fp library, reporting
//! JSON.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use poincare_fp::barycenter::{growth_check, p_center, FiniteMeasure};
use poincare_fp::decomp_embed::{
    default_scales, distortion, interval_peeling_scheme, modulus_via_embedding, optimize_theta, padding_report,
    shifted_grid_scheme, snowflake_embed, DecompositionScheme, WorkingSet,
};
use poincare_fp::fixed_point::{
    contraction_report, energy, energy_inequality_suite, iterate_to_fixed_point, transfer_experiment, FactorAction,
    GroupAction, TransferParams,
};
use poincare_fp::graph::{distance_distribution, gen_random_regular, girth, UndirectedGraph};
use poincare_fp::markov::{convolve, spectral_gap, standard_walk, MarkovChain};
use poincare_fp::poincare::{line_modulus_bound, matousek_bound, modulus_estimate};
use poincare_fp::random_group::{
    alpha_path, azuma_failure_bound, effective_simulation_check, mean_walk, relators, sample_labeling, simulate_walk,
    Labeling,
};
use poincare_fp::spaces::{Point, Space};

#[derive(Parser, Debug)]
#[command(name = "pfp", version, about = "Poincaré inequalities and fixed points: seeded experiments")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Serialize)]
struct Opts {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    workers: Option<usize>,
    /// Report path (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Graph edge list: header `n m`, then `u v` per line.
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Markov chain JSON (alternative to --graph for chain commands).
    #[arg(long, global = true)]
    chain: Option<PathBuf>,
    /// Points as CSV rows.
    #[arg(long, global = true)]
    points: Option<PathBuf>,
    /// Space descriptor: a JSON file or inline JSON.
    #[arg(long, global = true)]
    space: Option<String>,
    #[arg(long, global = true, default_value_t = 2.0)]
    p: f64,
    /// Walk length, convolution power or comparison exponent.
    #[arg(long, global = true, default_value_t = 1.0)]
    q: f64,
    #[arg(long, global = true, default_value_t = 1)]
    j: usize,
    #[arg(long, global = true, default_value_t = 2)]
    k: usize,
    #[arg(long, global = true, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, global = true, default_value_t = 1000)]
    samples: usize,
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Vertex count, walk power or scan length.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Degree.
    #[arg(long, global = true, default_value_t = 3)]
    d: usize,
    /// Spectral gap, when no graph is given.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Restarts for modulus estimates.
    #[arg(long, global = true, default_value_t = 8)]
    restarts: usize,
    /// Group action: d3-euclidean, d3-hyperbolic, z2-line, or a JSON file.
    #[arg(long = "action", global = true, default_value = "d3-euclidean")]
    group_action: String,
    /// Basepoint value `f(x0)`, comma separated.
    #[arg(long, global = true)]
    start: Option<String>,
    /// Labeling JSON (default: sampled from the seed).
    #[arg(long, global = true)]
    labeling: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 200)]
    max_iter: usize,
    /// Decomposition scheme for embed commands.
    #[arg(long, global = true, value_enum, default_value_t = SchemeArg::Grid)]
    scheme: SchemeArg,
    /// Decomposition scale Δ.
    #[arg(long, global = true, default_value_t = 4.0)]
    scale: f64,
    /// Vertex path for `rgm relators` style word reads, comma separated.
    #[arg(long, global = true)]
    path: Option<String>,
    /// Also write the tabular part of the result as CSV.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SchemeArg {
    Grid,
    Intervals,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Cmd {
    /// Random regular graphs, girth, walk distance distributions
    Graph {
        #[arg(value_enum)]
        action: GraphCmd,
    },
    /// Spectral gap and convolution powers of a Markov chain
    Chain {
        #[arg(value_enum)]
        action: ChainCmd,
    },
    /// Poincaré modulus estimates and the Matoušek comparison
    Poincare {
        #[arg(value_enum)]
        action: PoincareCmd,
    },
    /// p-centers and the growth inequality
    Barycenter {
        #[arg(value_enum)]
        action: BarycenterCmd,
    },
    /// Padded decompositions and snowflake embeddings
    Embed {
        #[arg(value_enum)]
        action: EmbedCmd,
    },
    /// Random labelings, induced walks and effective simulation
    Rgm {
        #[arg(value_enum)]
        action: RgmCmd,
    },
    /// Energies, averaging iteration and the transfer experiment
    Fp {
        #[arg(value_enum)]
        action: FpCmd,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum GraphCmd {
    /// Sample a random d-regular graph
    Gen,
    /// Girth of a graph
    Girth,
    /// Distance law of the q-step walk
    Distdist,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ChainCmd {
    /// Spectral gap
    Gap,
    /// q-th convolution power
    Convolve,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PoincareCmd {
    /// Lower estimate of the Poincaré modulus
    Estimate,
    /// Compare exponents p and q
    Matousek,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BarycenterCmd {
    /// p-center of a finite measure
    Solve,
    /// Sample the growth inequality
    Growth,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EmbedCmd {
    /// Padding probability of a decomposition scheme
    Decompose,
    /// Snowflake embedding and its checks
    Snowflake,
    /// Distortion report, optional pair CSV
    Distortion,
    /// Optimal snowflake exponent and the chained bound
    Theta,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum RgmCmd {
    /// Sample a labeling
    Label,
    /// Induced walk law for a labeling
    Walk,
    /// Mean induced walk over labelings
    Meanwalk,
    /// Effective simulation check
    Effsim,
    /// Concentration bound for effective simulation
    Azuma,
    /// Relators of a labeling, optional path word
    Relators,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FpCmd {
    /// Energy of a point under the walk
    Energy,
    /// Iterate the averaging map
    Iterate,
    /// Energy inequality checks
    Suite,
    /// Energy contraction across walk powers
    Contraction,
    /// Tree-walk transfer experiment
    Transfer,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a Cmd,
    config: &'a Opts,
    result: Value,
    violations: Vec<String>,
}

struct Outcome {
    result: Value,
    violations: Vec<String>,
    csv: Option<String>,
}

impl Outcome {
    fn ok(result: impl Serialize) -> Result<Self> {
        Ok(Outcome { result: serde_json::to_value(result)?, violations: Vec::new(), csv: None })
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(w) = cli.opts.workers {
        rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global().context("configuring worker pool")?;
    }
    let outcome = run(&cli.cmd, &cli.opts)?;
    if let (Some(path), Some(text)) = (&cli.opts.csv, &outcome.csv) {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = Report {
        tool: "pfp",
        version: env!("CARGO_PKG_VERSION"),
        command: &cli.cmd,
        config: &cli.opts,
        result: outcome.result,
        violations: outcome.violations,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &cli.opts.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_graph(o: &Opts) -> Result<UndirectedGraph> {
    let path = o.graph.as_ref().context("--graph is required")?;
    Ok(UndirectedGraph::parse_edge_list(&read(path)?)?)
}

fn load_chain(o: &Opts) -> Result<MarkovChain> {
    match (&o.chain, &o.graph) {
        (Some(c), _) => Ok(MarkovChain::from_json(&read(c)?)?),
        (None, Some(_)) => Ok(standard_walk(&load_graph(o)?)?),
        (None, None) => bail!("--graph or --chain is required"),
    }
}

fn load_space(o: &Opts, default: Space) -> Result<Space> {
    match &o.space {
        None => Ok(default),
        Some(s) if s.trim_start().starts_with('{') => Ok(Space::from_json(s)?),
        Some(path) => Ok(Space::from_json(&read(Path::new(path))?)?),
    }
}

fn load_points(o: &Opts) -> Result<WorkingSet> {
    let path = o.points.as_ref().context("--points is required")?;
    let csv = WorkingSet::from_csv(&read(path)?)?;
    match &o.space {
        None => Ok(csv),
        Some(_) => Ok(WorkingSet::new(load_space(o, csv.space.clone())?, csv.points)?),
    }
}

fn load_action(o: &Opts) -> Result<GroupAction> {
    Ok(match o.group_action.as_str() {
        "d3-euclidean" => GroupAction::dihedral(3, Space::euclidean(2))?,
        "d3-hyperbolic" => GroupAction::dihedral(3, Space::Hyperbolic)?,
        "z2-line" => GroupAction::line_reflection(),
        path => GroupAction::from_json(&read(Path::new(path))?)?,
    })
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',').map(|c| c.trim().parse::<T>().map_err(anyhow::Error::from)).collect()
}

fn start_point(o: &Opts, space: &Space) -> Result<Point> {
    let y = match &o.start {
        Some(s) => parse_list(s)?,
        None => {
            let mut y = space.origin();
            y[0] = 0.5;
            y
        }
    };
    space.validate(&y)?;
    Ok(y)
}

fn int_q(o: &Opts) -> Result<usize> {
    if o.q < 0.0 || o.q.fract() != 0.0 {
        bail!("--q must be a nonnegative integer here (got {})", o.q);
    }
    Ok(o.q as usize)
}

fn labeling(o: &Opts, g: &UndirectedGraph) -> Result<Labeling> {
    match &o.labeling {
        Some(path) => Ok(Labeling::from_json(&read(path)?)?),
        None => Ok(sample_labeling(g, o.k, o.j, o.seed)?),
    }
}

fn scheme(o: &Opts, ws: &WorkingSet) -> Result<DecompositionScheme> {
    Ok(match o.scheme {
        SchemeArg::Grid => shifted_grid_scheme(ws.space.point_len())?,
        SchemeArg::Intervals => interval_peeling_scheme(),
    })
}

fn run(cmd: &Cmd, o: &Opts) -> Result<Outcome> {
    match cmd {
        Cmd::Graph { action } => graph(*action, o),
        Cmd::Chain { action } => chain(*action, o),
        Cmd::Poincare { action } => poincare(*action, o),
        Cmd::Barycenter { action } => barycenter(*action, o),
        Cmd::Embed { action } => embed(*action, o),
        Cmd::Rgm { action } => rgm(*action, o),
        Cmd::Fp { action } => fp(*action, o),
    }
}

fn graph(cmd: GraphCmd, o: &Opts) -> Result<Outcome> {
    match cmd {
        GraphCmd::Gen => {
            let n = o.n.context("--n is required")?;
            let g = gen_random_regular(n, o.d, o.seed)?;
            Outcome::ok(json!({
                "vertices": g.vertex_count(),
                "edges": g.edge_count(),
                "girth": girth(&g),
                "edge_list": g.to_edge_list(),
            }))
        }
        GraphCmd::Girth => {
            let g = load_graph(o)?;
            Outcome::ok(json!({ "girth": girth(&g), "vertices": g.vertex_count() }))
        }
        GraphCmd::Distdist => {
            let g = load_graph(o)?;
            Outcome::ok(json!({ "q": int_q(o)?, "weights": distance_distribution(&g, int_q(o)?)? }))
        }
    }
}

fn chain(cmd: ChainCmd, o: &Opts) -> Result<Outcome> {
    let c = load_chain(o)?;
    match cmd {
        ChainCmd::Gap => {
            let r = spectral_gap(&c)?;
            Outcome::ok(json!({
                "sigma": r.gap,
                "second_largest_eigenvalue": r.second_largest_eigenvalue,
                "method": r.method,
                "states": c.state_count(),
            }))
        }
        ChainCmd::Convolve => {
            let power = int_q(o)?;
            let cq = convolve(&c, power)?;
            let gap = spectral_gap(&cq)?.gap;
            Outcome::ok(json!({
                "power": power,
                "sigma": gap,
                "chain": serde_json::from_str::<Value>(&cq.to_json())?,
            }))
        }
    }
}

fn poincare(cmd: PoincareCmd, o: &Opts) -> Result<Outcome> {
    match cmd {
        PoincareCmd::Estimate => {
            let c = load_chain(o)?;
            let space = load_space(o, Space::real_line())?;
            let est = modulus_estimate(&c, &space, o.p, o.restarts, o.seed)?;
            let mut violations = Vec::new();
            let bound = matches!(space, Space::Euclidean { dim: 1 }).then(|| line_modulus_bound(o.p, est.sigma));
            if let Some(b) = bound {
                if est.lambda > b + 1e-6 {
                    violations.push(format!("line modulus {} exceeds 2p/sqrt(sigma) = {b}", est.lambda));
                }
            }
            Ok(Outcome { result: json!({ "estimate": est, "line_bound": bound }), violations, csv: None })
        }
        PoincareCmd::Matousek => {
            let sigma = match o.sigma {
                Some(s) => s,
                None => spectral_gap(&load_chain(o)?)?.gap,
            };
            // The Hilbert value 1/√σ at exponent 2 gives A = 1/(2√σ).
            let a = 1.0 / (2.0 * sigma.sqrt());
            let b = matousek_bound(a, 2.0, o.q)?;
            let mut violations = Vec::new();
            let mut estimate = Value::Null;
            if o.chain.is_some() || o.graph.is_some() {
                let est = modulus_estimate(&load_chain(o)?, &Space::real_line(), o.q, o.restarts, o.seed)?;
                if est.lambda > b.bound + 1e-6 {
                    violations.push(format!("estimate {} exceeds the extrapolated bound {}", est.lambda, b.bound));
                }
                estimate = serde_json::to_value(&est)?;
            }
            Ok(Outcome { result: json!({ "sigma": sigma, "bound": b, "estimate": estimate }), violations, csv: None })
        }
    }
}

fn barycenter(cmd: BarycenterCmd, o: &Opts) -> Result<Outcome> {
    let ws = load_points(o)?;
    let sigma = FiniteMeasure::uniform(&ws.space, ws.points.clone())?;
    match cmd {
        BarycenterCmd::Solve => Outcome::ok(p_center(&ws.space, &sigma, o.p, o.tol)?),
        BarycenterCmd::Growth => {
            let r = growth_check(&ws.space, &sigma, o.p, o.samples, o.seed)?;
            let violations = if r.min_slack < -1e-9 {
                vec![format!("growth slack {} below -1e-9", r.min_slack)]
            } else {
                Vec::new()
            };
            Ok(Outcome { result: serde_json::to_value(&r)?, violations, csv: None })
        }
    }
}

fn embed(cmd: EmbedCmd, o: &Opts) -> Result<Outcome> {
    if let EmbedCmd::Theta = cmd {
        let sigma = o.sigma.context("--sigma is required")?;
        let dim = o.n.unwrap_or(1);
        let s = shifted_grid_scheme(dim)?;
        let t = optimize_theta(s.epsilon, s.delta, o.p, sigma, 1.0)?;
        let chained = modulus_via_embedding(s.epsilon, s.delta, o.p, sigma, 1.0)?;
        return Outcome::ok(json!({ "epsilon": s.epsilon, "delta": s.delta, "theta": t, "chained": chained }));
    }
    let ws = load_points(o)?;
    let sch = scheme(o, &ws)?;
    match cmd {
        EmbedCmd::Decompose => {
            let r = padding_report(&sch, &ws, o.scale, None, o.samples, o.seed)?;
            let violations = if r.passed {
                Vec::new()
            } else {
                vec![format!("padding {} below declared {} - 3 stderr", r.min_fraction, r.declared_delta)]
            };
            Ok(Outcome { result: serde_json::to_value(&r)?, violations, csv: None })
        }
        EmbedCmd::Snowflake | EmbedCmd::Distortion => {
            let emb = snowflake_embed(&sch, &ws, o.theta, &default_scales(&ws), o.samples, o.seed)?;
            let (cases, worst) = emb.check_cases(&ws);
            let lower = emb.lower_bound_check(&ws, sch.epsilon, sch.delta);
            let dist = distortion(&ws, &emb, sch.epsilon, sch.delta)?;
            let mut violations = Vec::new();
            if cases > 0 {
                violations.push(format!("{cases} coordinate differences exceed 2 min(d, 2^k) (worst excess {worst})"));
            }
            if lower.failures > 0 {
                violations.push(format!("{} pairs below the expected lower bound", lower.failures));
            }
            let mut csv = String::from("x,y,d,embedded\n");
            for x in 0..ws.len() {
                for y in x + 1..ws.len() {
                    csv += &format!("{x},{y},{},{}\n", ws.dist(x, y), emb.dist_sq(x, y).sqrt());
                }
            }
            let mut result = json!({
                "scales": emb.scales,
                "truncation_bound": emb.truncation_bound,
                "cases_violations": cases,
                "lower_bound": lower,
                "distortion": dist,
            });
            if let EmbedCmd::Snowflake = cmd {
                result["vectors"] = json!((0..ws.len()).map(|x| emb.vector(x)).collect::<Vec<_>>());
            }
            Ok(Outcome { result, violations, csv: Some(csv) })
        }
        EmbedCmd::Theta => unreachable!("handled above"),
    }
}

fn rgm(cmd: RgmCmd, o: &Opts) -> Result<Outcome> {
    if let RgmCmd::Azuma = cmd {
        let (n, edges) = match &o.graph {
            Some(_) => {
                let g = load_graph(o)?;
                (g.vertex_count(), g.edge_count())
            }
            None => {
                let n = o.n.context("--n or --graph is required")?;
                (n, n * o.d / 2)
            }
        };
        return Outcome::ok(azuma_failure_bound(o.d, o.k, o.j, int_q(o)?, n, edges)?);
    }
    let g = load_graph(o)?;
    match cmd {
        RgmCmd::Label => {
            let a = sample_labeling(&g, o.k, o.j, o.seed)?;
            Outcome::ok(serde_json::from_str::<Value>(&a.to_json())?)
        }
        RgmCmd::Walk => {
            let a = labeling(o, &g)?;
            let d = simulate_walk(&a, &g, int_q(o)?)?;
            Outcome::ok(json!({ "distribution": d, "total": d.total() }))
        }
        RgmCmd::Meanwalk => Outcome::ok(mean_walk(&g, int_q(o)?, o.j, o.k)?),
        RgmCmd::Effsim => {
            let a = labeling(o, &g)?;
            let r = effective_simulation_check(&a, &g, int_q(o)?)?;
            Outcome::ok(r)
        }
        RgmCmd::Relators => {
            let a = labeling(o, &g)?;
            let rel: Vec<String> = relators(&a, &g)?.iter().map(ToString::to_string).collect();
            let path = match &o.path {
                Some(p) => Some(alpha_path(&a, &parse_list(p)?)?.to_string()),
                None => None,
            };
            Outcome::ok(json!({ "relators": rel, "path_word": path }))
        }
        RgmCmd::Azuma => unreachable!("handled above"),
    }
}

fn fp(cmd: FpCmd, o: &Opts) -> Result<Outcome> {
    let action = load_action(o)?;
    let y0 = start_point(o, &action.space)?;
    let n = o.n.unwrap_or(1);
    let tol = if o.p == 2.0 { 1e-9 } else { 1e-6 };
    match cmd {
        FpCmd::Energy => {
            let e = energy(&action, &y0, &action.walk(n), o.p)?;
            Outcome::ok(json!({ "energy": e, "n": n, "order": action.order() }))
        }
        FpCmd::Iterate => {
            let run = iterate_to_fixed_point(&action, &y0, n, o.p, o.tol, o.max_iter)?;
            let violations = if run.converged {
                Vec::new()
            } else {
                vec![format!("no convergence within {} iterations", o.max_iter)]
            };
            Ok(Outcome { result: serde_json::to_value(&run)?, violations, csv: None })
        }
        FpCmd::Suite => {
            let s = energy_inequality_suite(&action, &y0, o.p, n, tol)?;
            let mut violations = Vec::new();
            for (name, c) in
                [("bound_energies", s.bound_energies), ("avg_control", s.avg_control), ("cancellation", s.cancellation)]
            {
                if !c.holds {
                    violations.push(format!("{name}: {} > {}", c.lhs, c.rhs));
                }
            }
            Ok(Outcome { result: serde_json::to_value(&s)?, violations, csv: None })
        }
        FpCmd::Contraction => {
            let ns: Vec<usize> = (1..=o.n.unwrap_or(6)).collect();
            let r = contraction_report(&action, &y0, o.p, &ns, o.j)?;
            let mut csv = String::from("n,ratio,shape\n");
            for row in &r.rows {
                csv += &format!("{},{},{}\n", row.n, row.ratio.map_or(String::new(), |x| x.to_string()), row.shape);
            }
            Ok(Outcome { result: serde_json::to_value(&r)?, violations: Vec::new(), csv: Some(csv) })
        }
        FpCmd::Transfer => {
            if o.j % 2 != 0 {
                bail!("transfer experiments need an even word length: with j even, S^j contains S^2");
            }
            let g = load_graph(o)?;
            let a = labeling(o, &g)?;
            // Free generator i acts as the i-th distinct generator of the group.
            let mut images: Vec<usize> = Vec::new();
            for &s in &action.generators {
                if !images.contains(&s) && !images.contains(&action.inverse_of(s)) {
                    images.push(s);
                }
            }
            if images.len() < a.k {
                bail!("the action has {} independent generators, need {}", images.len(), a.k);
            }
            images.truncate(a.k);
            let factor = FactorAction::new(action, images)?;
            let params =
                TransferParams { p: o.p, q0: int_q(o)?, m_max: o.n.unwrap_or(2), restarts: o.restarts, seed: o.seed };
            Outcome::ok(transfer_experiment(&g, &a, &factor, &y0, params)?)
        }
    }
}
