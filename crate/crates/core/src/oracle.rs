//! Independent reference answers for tests and acceptance checks.
//!
//! [`reference_solve`] is the vanilla engine pushed to tight tolerances.
//! [`grid_oracle`] shares no code with the engine: on a two-bus, one-branch,
//! one-generator network the load-bus balance fixes the load-end flows, so
//! for every `(w_gen, w_load)` pair the lifted cross terms follow from a 2x2
//! linear solve. The relaxation then collapses to a convex problem in the two
//! squared magnitudes, solved by a refined grid over one and a closed-form
//! interval search over the other.

use thiserror::Error;

use crate::admm::{run, AlgorithmConfig, EngineError, Scheme, SolveReport};
use crate::network::{BranchModel, ConsensusLayout, Network};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("reference solve did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("grid oracle needs exactly two buses, one branch and one generator")]
    WrongTopology,
    #[error("no grid point satisfies every constraint")]
    NoFeasibleGridPoint,
    #[error("grid resolution must be positive and finite")]
    BadResolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub objective: f64,
    pub iterations: usize,
    pub max_abs_r: f64,
    /// `w_i w_j - wr^2 - wi^2` per branch at the final iterate.
    pub soc_gaps: Vec<f64>,
    pub report: SolveReport,
}

/// Tolerances used by [`reference_solve`].
pub fn reference_config() -> AlgorithmConfig {
    AlgorithmConfig {
        scheme: Scheme::Vanilla,
        eps_abs: 1e-9,
        eps_rel: 1e-8,
        max_iter: 500_000,
        threads: 1,
        ..AlgorithmConfig::default()
    }
}

pub fn reference_solve(net: &Network, layout: &ConsensusLayout) -> Result<ReferenceSolution, OracleError> {
    reference_solve_with(net, layout, &reference_config())
}

pub fn reference_solve_with(
    net: &Network,
    layout: &ConsensusLayout,
    config: &AlgorithmConfig,
) -> Result<ReferenceSolution, OracleError> {
    let report = run(net, layout, config)?;
    if !report.converged {
        return Err(OracleError::NotConverged { iterations: report.iterations });
    }
    Ok(ReferenceSolution {
        objective: report.objective,
        iterations: report.iterations,
        max_abs_r: report.max_abs_r,
        soc_gaps: report.branch_lifted.iter().map(|v| soc_gap(*v)).collect(),
        report,
    })
}

pub fn soc_gap(v: [f64; 4]) -> f64 {
    let [w_i, w_j, wr, wi] = v;
    w_i * w_j - wr * wr - wi * wi
}

/// Best grid point and an objective bracket around the true optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBracket {
    /// Cost at the best feasible grid point, an upper bound on the optimum.
    pub objective: f64,
    /// Lower end of the bracket: `objective` minus the largest cost change to
    /// a feasible neighbor at the finest spacing.
    pub lower: f64,
    /// `(w_i, w_j, wr, wi)` in branch orientation.
    pub lifted: [f64; 4],
    pub p_gen: f64,
    pub q_gen: f64,
    pub evaluated: usize,
}

impl GridBracket {
    pub fn contains(&self, objective: f64, rel_tol: f64) -> bool {
        let slack = rel_tol * self.objective.abs().max(1.0);
        objective >= self.lower - slack && objective <= self.objective + slack
    }
}

const REFINEMENTS: usize = 3;
const REFINED_POINTS: usize = 21;

/// `a0 + a1 t`
#[derive(Debug, Clone, Copy)]
struct Affine(f64, f64);

impl Affine {
    fn at(self, t: f64) -> f64 {
        self.0 + self.1 * t
    }

    fn scale(self, k: f64) -> Affine {
        Affine(k * self.0, k * self.1)
    }

    fn add(self, o: Affine) -> Affine {
        Affine(self.0 + o.0, self.1 + o.1)
    }

    fn square(self) -> [f64; 3] {
        [self.0 * self.0, 2.0 * self.0 * self.1, self.1 * self.1]
    }
}

type Interval = (f64, f64);

fn intersect(a: Interval, b: Interval) -> Option<Interval> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo <= hi).then_some((lo, hi))
}

/// `{t : a0 + a1 t >= 0}`
fn affine_nonneg(a: Affine) -> Option<Interval> {
    let Affine(a0, a1) = a;
    if a1 > 0.0 {
        Some((-a0 / a1, f64::INFINITY))
    } else if a1 < 0.0 {
        Some((f64::NEG_INFINITY, -a0 / a1))
    } else {
        (a0 >= 0.0).then_some((f64::NEG_INFINITY, f64::INFINITY))
    }
}

/// `{t : c0 + c1 t + c2 t^2 >= 0}` for `c2 <= 0`.
fn concave_nonneg([c0, c1, c2]: [f64; 3]) -> Option<Interval> {
    if c2 == 0.0 {
        return affine_nonneg(Affine(c0, c1));
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return None;
    }
    // Stable roots of the quadratic.
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / c2, c0 / q) };
    Some((r1.min(r2), r1.max(r2)))
}

struct TwoBus<'a> {
    net: &'a Network,
    br: &'a BranchModel,
    gen_bus: usize,
    load_bus: usize,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    cost: f64,
    lifted: [f64; 4],
    p_gen: f64,
    q_gen: f64,
}

impl TwoBus<'_> {
    fn w_box(&self, bus: usize) -> (f64, f64) {
        let b = &self.net.buses[bus];
        (b.w_min, b.w_max)
    }

    /// Cheapest feasible point with the generator-bus magnitude fixed. Every
    /// quantity is affine in the load-bus magnitude `t`, so the feasible set
    /// is an interval found in closed form.
    fn slice(&self, w_gen: f64) -> Option<Point> {
        let br = self.br;
        let load = &self.net.buses[self.load_bus];
        let genbus = &self.net.buses[self.gen_bus];
        let gen = &self.net.gens[0];

        // Load-end flows fixed by the load-bus balance.
        let p_load_end = Affine(-load.p_d, -load.g_sh);
        let q_load_end = Affine(-load.q_d, load.b_sh);

        let gen_is_from = br.from == self.gen_bus;
        let t = Affine(0.0, 1.0);
        let wg = Affine(w_gen, 0.0);
        let (w_i, w_j) = if gen_is_from { (wg, t) } else { (t, wg) };
        // Load-end equations in (wr, wi): [a b; c d] [wr; wi] = rhs.
        let (a, b, c, d, rp, rq) = if gen_is_from {
            (
                -br.g_ji,
                -br.b_ji,
                -br.b_ji,
                br.g_ji,
                p_load_end.add(w_j.scale(-br.gc_ji)),
                q_load_end.add(w_j.scale(-br.bc_ji)),
            )
        } else {
            (
                -br.g_ij,
                br.b_ij,
                -br.b_ij,
                -br.g_ij,
                p_load_end.add(w_i.scale(-br.gc_ij)),
                q_load_end.add(w_i.scale(-br.bc_ij)),
            )
        };
        let det = a * d - b * c;
        if det == 0.0 {
            return None;
        }
        let wr = rp.scale(d / det).add(rq.scale(-b / det));
        let wi = rq.scale(a / det).add(rp.scale(-c / det));

        let p_ij = w_i.scale(br.gc_ij).add(wr.scale(-br.g_ij)).add(wi.scale(br.b_ij));
        let q_ij = w_i.scale(br.bc_ij).add(wr.scale(-br.b_ij)).add(wi.scale(-br.g_ij));
        let p_ji = w_j.scale(br.gc_ji).add(wr.scale(-br.g_ji)).add(wi.scale(-br.b_ji));
        let q_ji = w_j.scale(br.bc_ji).add(wr.scale(-br.b_ji)).add(wi.scale(br.g_ji));
        let (p_end, q_end) = if gen_is_from { (p_ij, q_ij) } else { (p_ji, q_ji) };
        let p_gen = p_end.add(Affine(genbus.p_d + genbus.g_sh * w_gen, 0.0));
        let q_gen = q_end.add(Affine(genbus.q_d - genbus.b_sh * w_gen, 0.0));

        let (ll, lh) = self.w_box(self.load_bus);
        let mut feasible = (ll, lh);
        let mut keep = |iv: Option<Interval>| -> bool {
            match iv.and_then(|iv| intersect(feasible, iv)) {
                Some(iv) => {
                    feasible = iv;
                    true
                }
                None => false,
            }
        };

        // w_i w_j - wr^2 - wi^2 >= 0, with w_i w_j linear in t.
        let (wr2, wi2) = (wr.square(), wi.square());
        let cone = [-wr2[0] - wi2[0], w_gen - wr2[1] - wi2[1], -wr2[2] - wi2[2]];
        let mut ok = keep(concave_nonneg(cone));
        if let Some((lo, hi)) = br.tan_bounds {
            ok = ok && keep(affine_nonneg(wi.add(wr.scale(-lo))));
            ok = ok && keep(affine_nonneg(wr.scale(hi).add(wi.scale(-1.0))));
        }
        if let Some(smax) = br.s_max {
            for (p, q) in [(p_ij, q_ij), (p_ji, q_ji)] {
                let (p2, q2) = (p.square(), q.square());
                ok = ok && keep(concave_nonneg([smax * smax - p2[0] - q2[0], -p2[1] - q2[1], -p2[2] - q2[2]]));
            }
        }
        ok = ok
            && keep(affine_nonneg(p_gen.add(Affine(-gen.p_min, 0.0))))
            && keep(affine_nonneg(Affine(gen.p_max, 0.0).add(p_gen.scale(-1.0))))
            && keep(affine_nonneg(q_gen.add(Affine(-gen.q_min, 0.0))))
            && keep(affine_nonneg(Affine(gen.q_max, 0.0).add(q_gen.scale(-1.0))));
        if !ok {
            return None;
        }

        // Cost is convex in t: check both ends and the clamped vertex.
        let (lo, hi) = feasible;
        let mut candidates = vec![lo, hi];
        if gen.c2 > 0.0 && p_gen.1 != 0.0 {
            let p_star = -gen.c1 / (2.0 * gen.c2 * gen.base);
            candidates.push(((p_star - p_gen.0) / p_gen.1).clamp(lo, hi));
        }
        candidates
            .into_iter()
            .map(|tv| {
                let p = p_gen.at(tv);
                let (wi_v, wj_v) = if gen_is_from { (w_gen, tv) } else { (tv, w_gen) };
                Point { cost: gen.cost(p), lifted: [wi_v, wj_v, wr.at(tv), wi.at(tv)], p_gen: p, q_gen: q_gen.at(tv) }
            })
            .min_by(|x, y| x.cost.total_cmp(&y.cost))
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
}

/// Brackets the relaxation optimum of a two-bus network.
///
/// The generator-bus squared magnitude is gridded at spacing `resolution`
/// and refined three times around the incumbent with ten-fold finer
/// spacing. For each grid value the load-bus magnitude is optimized exactly
/// (see `TwoBus::slice`). The slice optimum is convex in the gridded
/// variable, so the cost drop to the cheaper feasible neighbor at the final
/// spacing bounds how far the true optimum can lie below the incumbent.
pub fn grid_oracle(net: &Network, resolution: f64) -> Result<GridBracket, OracleError> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(OracleError::BadResolution);
    }
    if net.buses.len() != 2 || net.branches.len() != 1 || net.gens.len() != 1 {
        return Err(OracleError::WrongTopology);
    }
    let gen_bus = net.gens[0].bus;
    let sys = TwoBus { net, br: &net.branches[0], gen_bus, load_bus: 1 - gen_bus };
    let (gl, gh) = sys.w_box(sys.gen_bus);

    let mut evaluated = 0;
    let mut best: Option<(f64, Point)> = None;
    let mut scan = |lo: f64, hi: f64, n: usize, best: &mut Option<(f64, Point)>| {
        for wg in axis(lo, hi, n) {
            evaluated += 1;
            if let Some(p) = sys.slice(wg) {
                if best.is_none_or(|(_, b)| p.cost < b.cost) {
                    *best = Some((wg, p));
                }
            }
        }
    };

    let mut step = (gh - gl) / ((gh - gl) / resolution).round().max(1.0);
    scan(gl, gh, ((gh - gl) / step).round() as usize + 1, &mut best);
    for _ in 0..REFINEMENTS {
        let Some((wg, _)) = best else { break };
        scan((wg - step).max(gl), (wg + step).min(gh), REFINED_POINTS, &mut best);
        step /= 10.0;
    }
    let (wg, point) = best.ok_or(OracleError::NoFeasibleGridPoint)?;

    let drop = [wg - step, wg + step]
        .into_iter()
        .filter(|g| (gl..=gh).contains(g))
        .filter_map(|g| sys.slice(g))
        .map(|p| (p.cost - point.cost).abs())
        .fold(0.0, f64::max);

    Ok(GridBracket {
        objective: point.cost,
        lower: point.cost - drop,
        lifted: point.lifted,
        p_gen: point.p_gen,
        q_gen: point.q_gen,
        evaluated,
    })
}
