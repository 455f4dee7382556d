//! Fixtures, random instance generators and independent oracles shared by
//! the integration tests and the acceptance gate.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod invariants;

use std::path::PathBuf;

use dopf::local_solvers::{BranchProxInput, BusEndTerm, BusGenTerm, BusProxInput, GenProxInput};
use dopf::network::BranchModel;
use dopf::{build_layout, build_network, read_case, ConsensusLayout, Network};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn load(name: &str) -> (Network, ConsensusLayout) {
    let case = read_case(data(name)).expect("fixture parses");
    let net = build_network(&case).expect("fixture validates");
    let layout = build_layout(&net);
    (net, layout)
}

// ---------------------------------------------------------------- generator

pub fn random_gen_input(rng: &mut ChaCha8Rng) -> GenProxInput {
    let p_min = rng.gen_range(0.0..0.5);
    let q_min = rng.gen_range(-2.0..0.0);
    GenProxInput {
        c2: if rng.gen_bool(0.5) { rng.gen_range(0.0..0.1) } else { 0.0 },
        c1: rng.gen_range(0.0..50.0),
        base: 100.0,
        lambda_p: rng.gen_range(-3000.0..3000.0),
        lambda_q: rng.gen_range(-50.0..50.0),
        rho_p: rng.gen_range(0.1..1000.0),
        rho_q: rng.gen_range(0.1..1000.0),
        p_dup: rng.gen_range(-1.0..6.0),
        q_dup: rng.gen_range(-3.0..3.0),
        p_min,
        p_max: p_min + rng.gen_range(0.0..5.0),
        q_min,
        q_max: q_min + rng.gen_range(0.0..4.0),
    }
}

/// Largest violation of the generator prox optimality conditions, relative
/// to the magnitude of the terms in each derivative.
pub fn gen_kkt_violation(inp: &GenProxInput, p: f64, q: f64) -> f64 {
    fn one(value: f64, lo: f64, hi: f64, deriv: f64, scale: f64) -> f64 {
        let box_viol = (lo - value).max(value - hi).max(0.0);
        let d = deriv / scale;
        let stat = if value > lo && value < hi {
            d.abs()
        } else if value == lo && value == hi {
            0.0
        } else if value == lo {
            (-d).max(0.0)
        } else if value == hi {
            d.max(0.0)
        } else {
            f64::INFINITY
        };
        box_viol.max(stat)
    }
    let mw = p * inp.base;
    let dp = 2.0 * inp.c2 * mw * inp.base + inp.c1 * inp.base + inp.lambda_p + inp.rho_p * (p - inp.p_dup);
    let sp = (2.0 * inp.c2 * mw * inp.base).abs()
        + (inp.c1 * inp.base).abs()
        + inp.lambda_p.abs()
        + (inp.rho_p * p).abs()
        + (inp.rho_p * inp.p_dup).abs();
    let dq = inp.lambda_q + inp.rho_q * (q - inp.q_dup);
    let sq = inp.lambda_q.abs() + (inp.rho_q * q).abs() + (inp.rho_q * inp.q_dup).abs();
    one(p, inp.p_min, inp.p_max, dp, sp.max(1.0)).max(one(q, inp.q_min, inp.q_max, dq, sq.max(1.0)))
}

// ---------------------------------------------------------------------- bus

pub fn random_bus_input(rng: &mut ChaCha8Rng) -> BusProxInput {
    let n_gens = rng.gen_range(0..4);
    let n_ends = rng.gen_range(1..6);
    let rho = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(-1.0..3.0));
    let gens = (0..n_gens)
        .map(|_| BusGenTerm {
            lambda_p: rng.gen_range(-50.0..50.0),
            lambda_q: rng.gen_range(-50.0..50.0),
            rho_p: rho(rng),
            rho_q: rho(rng),
            p: rng.gen_range(-1.0..5.0),
            q: rng.gen_range(-3.0..3.0),
        })
        .collect();
    let ends = (0..n_ends)
        .map(|_| BusEndTerm {
            lambda_p: rng.gen_range(-50.0..50.0),
            lambda_q: rng.gen_range(-50.0..50.0),
            lambda_w: rng.gen_range(-50.0..50.0),
            rho_p: rho(rng),
            rho_q: rho(rng),
            rho_w: rho(rng),
            p: rng.gen_range(-4.0..4.0),
            q: rng.gen_range(-3.0..3.0),
            w: rng.gen_range(0.8..1.25),
        })
        .collect();
    let shunt = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { rng.gen_range(-0.5..0.5) } else { 0.0 };
    BusProxInput {
        gens,
        ends,
        p_d: rng.gen_range(-1.0..4.0),
        q_d: rng.gen_range(-1.0..2.0),
        g_sh: shunt(rng),
        b_sh: shunt(rng),
    }
}

/// Bus prox solved as one dense equality-constrained least-squares KKT
/// system, returned in the order gen p, gen q, end p, end q, w.
pub fn dense_bus_oracle(inp: &BusProxInput) -> Vec<f64> {
    let (ng, ne) = (inp.gens.len(), inp.ends.len());
    let n = 2 * ng + 2 * ne + 1;
    // Weights and prox targets of every variable.
    let mut weight = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for g in &inp.gens {
        weight.push(g.rho_p);
        target.push(g.p + g.lambda_p / g.rho_p);
    }
    for g in &inp.gens {
        weight.push(g.rho_q);
        target.push(g.q + g.lambda_q / g.rho_q);
    }
    for e in &inp.ends {
        weight.push(e.rho_p);
        target.push(e.p + e.lambda_p / e.rho_p);
    }
    for e in &inp.ends {
        weight.push(e.rho_q);
        target.push(e.q + e.lambda_q / e.rho_q);
    }
    // Several copies of w collapse to one variable with summed weight.
    let w_weight: f64 = inp.ends.iter().map(|e| e.rho_w).sum();
    weight.push(w_weight);
    target.push(inp.ends.iter().map(|e| e.rho_w * e.w + e.lambda_w).sum::<f64>() / w_weight);

    let mut a = DMatrix::<f64>::zeros(2, n);
    for k in 0..ng {
        a[(0, k)] = 1.0;
        a[(1, ng + k)] = 1.0;
    }
    for k in 0..ne {
        a[(0, 2 * ng + k)] = -1.0;
        a[(1, 2 * ng + ne + k)] = -1.0;
    }
    a[(0, n - 1)] = -inp.g_sh;
    a[(1, n - 1)] = inp.b_sh;

    let mut kkt = DMatrix::<f64>::zeros(n + 2, n + 2);
    let mut rhs = DVector::<f64>::zeros(n + 2);
    for i in 0..n {
        kkt[(i, i)] = weight[i];
        rhs[i] = weight[i] * target[i];
        for r in 0..2 {
            kkt[(i, n + r)] = a[(r, i)];
            kkt[(n + r, i)] = a[(r, i)];
        }
    }
    rhs[n] = inp.p_d;
    rhs[n + 1] = inp.q_d;
    let sol = kkt.lu().solve(&rhs).expect("nonsingular bus KKT");
    sol.iter().take(n).copied().collect()
}

// ------------------------------------------------------------------- branch

pub struct BranchInstance {
    pub branch: BranchModel,
    pub lambda: [f64; 6],
    pub rho: [f64; 6],
    pub centers: [f64; 6],
}

impl BranchInstance {
    pub fn input(&self) -> BranchProxInput<'_> {
        BranchProxInput { branch: &self.branch, lambda: self.lambda, rho: self.rho, centers: self.centers, start: None }
    }

    /// Branch share of the augmented Lagrangian, written out from the flow
    /// equations.
    pub fn objective(&self, v: [f64; 4]) -> f64 {
        let br = &self.branch;
        let [w_i, w_j, wr, wi] = v;
        let values = [
            br.gc_ij * w_i - br.g_ij * wr + br.b_ij * wi,
            br.bc_ij * w_i - br.b_ij * wr - br.g_ij * wi,
            w_i,
            br.gc_ji * w_j - br.g_ji * wr - br.b_ji * wi,
            br.bc_ji * w_j - br.b_ji * wr + br.g_ji * wi,
            w_j,
        ];
        (0..6)
            .map(|k| {
                let d = values[k] - self.centers[k];
                self.lambda[k] * values[k] + 0.5 * self.rho[k] * d * d
            })
            .sum()
    }

    /// Largest constraint violation at `v` (zero when feasible).
    pub fn violation(&self, v: [f64; 4]) -> f64 {
        let br = &self.branch;
        let [w_i, w_j, wr, wi] = v;
        let mut viol: f64 = 0.0;
        viol = viol.max(br.w_from.0 - w_i).max(w_i - br.w_from.1);
        viol = viol.max(br.w_to.0 - w_j).max(w_j - br.w_to.1);
        viol = viol.max(wr * wr + wi * wi - w_i * w_j);
        if let Some((lo, hi)) = br.tan_bounds {
            viol = viol.max(lo * wr - wi).max(wi - hi * wr);
        }
        if let Some(s) = br.s_max {
            let f = br.flows(w_i, w_j, wr, wi);
            viol = viol.max(f.p_ij.hypot(f.q_ij) - s).max(f.p_ji.hypot(f.q_ji) - s);
        }
        viol.max(0.0)
    }

    /// Lifted point from cone coordinates: magnitudes, radial fraction of
    /// the cone and angle.
    fn cone_point(&self, w_i: f64, w_j: f64, frac: f64, theta: f64) -> [f64; 4] {
        let m = (w_i * w_j).sqrt() * frac;
        [w_i, w_j, m * theta.cos(), m * theta.sin()]
    }

    fn theta_range(&self) -> (f64, f64) {
        match self.branch.tan_bounds {
            Some((lo, hi)) => (lo.atan(), hi.atan()),
            None => (-std::f64::consts::PI, std::f64::consts::PI),
        }
    }
}

pub fn random_branch_instance(rng: &mut ChaCha8Rng) -> BranchInstance {
    let r = rng.gen_range(0.002..0.05);
    let x = rng.gen_range(0.01..0.3);
    let b = if rng.gen_bool(0.7) { rng.gen_range(0.0..0.05) } else { 0.0 };
    let tap = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.9..1.1) };
    let shift = if rng.gen_bool(0.3) { rng.gen_range(-10f64..10.0).to_radians() } else { 0.0 };
    let mut br = BranchModel::from_parameters(r, x, b, tap, shift);
    let vbox = |rng: &mut ChaCha8Rng| {
        let lo = rng.gen_range(0.9f64..0.97);
        let hi = rng.gen_range(1.03f64..1.1);
        (lo * lo, hi * hi)
    };
    br.w_from = vbox(rng);
    br.w_to = vbox(rng);
    if rng.gen_bool(0.5) {
        let lo = -rng.gen_range(10f64..60.0).to_radians();
        let hi = rng.gen_range(10f64..60.0).to_radians();
        br.tan_bounds = Some((lo.tan(), hi.tan()));
    }

    let mut inst = BranchInstance { branch: br, lambda: [0.0; 6], rho: [1.0; 6], centers: [0.0; 6] };
    let random_point = |inst: &BranchInstance, rng: &mut ChaCha8Rng| {
        let (tl, th) = inst.theta_range();
        let w_i = rng.gen_range(inst.branch.w_from.0..inst.branch.w_from.1);
        let w_j = rng.gen_range(inst.branch.w_to.0..inst.branch.w_to.1);
        let th_mid = 0.5 * (tl + th);
        let theta = th_mid + 0.3 * (th - th_mid) * rng.gen_range(-1.0..1.0);
        inst.cone_point(w_i, w_j, rng.gen_range(0.95..0.999), theta)
    };
    if rng.gen_bool(0.5) {
        let v = random_point(&inst, rng);
        let f = inst.branch.flows(v[0], v[1], v[2], v[3]);
        let biggest = f.p_ij.hypot(f.q_ij).max(f.p_ji.hypot(f.q_ji));
        inst.branch.s_max = Some(biggest * rng.gen_range(1.05..2.0));
    }
    // Centers near a feasible point so the prox target is realistic.
    let v = random_point(&inst, rng);
    let f = inst.branch.flows(v[0], v[1], v[2], v[3]);
    let base = [f.p_ij, f.q_ij, v[0], f.p_ji, f.q_ji, v[1]];
    for k in 0..6 {
        let noise = if k == 2 || k == 5 { 0.05 } else { 0.3 };
        inst.centers[k] = base[k] + noise * rng.gen_range(-1.0..1.0);
        inst.lambda[k] = rng.gen_range(-5.0..5.0);
        inst.rho[k] = 10f64.powf(rng.gen_range(0.0..2.0));
    }
    inst
}

/// Visits every point of a `POINTS^N` grid on `[-1, 1]^N`.
fn for_each_grid_point<const N: usize>(mut f: impl FnMut([f64; N])) {
    const POINTS: usize = 7;
    let mut idx = [0usize; N];
    loop {
        f(idx.map(|i| i as f64 / (POINTS - 1) as f64 * 2.0 - 1.0));
        let mut d = 0;
        while d < N {
            idx[d] += 1;
            if idx[d] < POINTS {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == N {
            return;
        }
    }
}

/// Grid points count as feasible up to this absolute violation, which
/// covers rounding in charts that place points on a boundary.
const GRID_FEASIBILITY: f64 = 1e-12;

/// Constraint on the cross terms `u = (wr, wi)` for fixed magnitudes, as a
/// slack that is nonnegative when satisfied.
enum Planar {
    /// `r2 - |A u + b|^2`
    Ellipse { a: [[f64; 2]; 2], b: [f64; 2], r2: f64 },
    /// `n . u`
    Half { n: [f64; 2] },
}

impl Planar {
    fn slack(&self, u: [f64; 2]) -> f64 {
        match self {
            Planar::Ellipse { a, b, r2 } => {
                let e = [a[0][0] * u[0] + a[0][1] * u[1] + b[0], a[1][0] * u[0] + a[1][1] * u[1] + b[1]];
                r2 - e[0] * e[0] - e[1] * e[1]
            }
            Planar::Half { n } => n[0] * u[0] + n[1] * u[1],
        }
    }

    /// Slack relative to the constraint's natural size.
    fn relative_slack(&self, u: [f64; 2]) -> f64 {
        match self {
            Planar::Ellipse { r2, .. } => self.slack(u) / r2,
            Planar::Half { n } => self.slack(u) / n[0].hypot(n[1]),
        }
    }
}

impl BranchInstance {
    /// Lifted point whose from-end (`to_end == false`) or to-end flow sits at
    /// `frac * s_max` and angle `phi` in the (p, q) plane.
    fn disk_point(&self, to_end: bool, w_i: f64, w_j: f64, frac: f64, phi: f64) -> [f64; 4] {
        let br = &self.branch;
        let s = br.s_max.unwrap_or(0.0) * frac;
        let (p, q) = (s * phi.cos(), s * phi.sin());
        let (a, b, c, d, rp, rq) = if to_end {
            (-br.g_ji, -br.b_ji, -br.b_ji, br.g_ji, p - br.gc_ji * w_j, q - br.bc_ji * w_j)
        } else {
            (-br.g_ij, br.b_ij, -br.b_ij, -br.g_ij, p - br.gc_ij * w_i, q - br.bc_ij * w_i)
        };
        let det = a * d - b * c;
        [w_i, w_j, (rp * d - b * rq) / det, (a * rq - c * rp) / det]
    }

    /// Cone, thermal and angle constraints at fixed magnitudes, always in
    /// that order.
    fn planar(&self, w_i: f64, w_j: f64) -> Vec<Planar> {
        let br = &self.branch;
        let mut out = vec![Planar::Ellipse { a: [[1.0, 0.0], [0.0, 1.0]], b: [0.0, 0.0], r2: w_i * w_j }];
        if let Some(s) = br.s_max {
            out.push(Planar::Ellipse {
                a: [[-br.g_ij, br.b_ij], [-br.b_ij, -br.g_ij]],
                b: [br.gc_ij * w_i, br.bc_ij * w_i],
                r2: s * s,
            });
            out.push(Planar::Ellipse {
                a: [[-br.g_ji, -br.b_ji], [-br.b_ji, br.g_ji]],
                b: [br.gc_ji * w_j, br.bc_ji * w_j],
                r2: s * s,
            });
        }
        if let Some((lo, hi)) = br.tan_bounds {
            out.push(Planar::Half { n: [-lo, 1.0] });
            out.push(Planar::Half { n: [hi, -1.0] });
        }
        out
    }

    /// Cheapest feasible lifted point with both constraints of `pair`
    /// active. The first constraint's boundary is walked by angle and every
    /// sign change of the second slack is bisected.
    fn on_pair(&self, pair: (usize, usize), w_i: f64, w_j: f64) -> Option<[f64; 4]> {
        let cons = self.planar(w_i, w_j);
        let (first, second) = (&cons[pair.0], &cons[pair.1]);
        let Planar::Ellipse { a, b, r2 } = first else {
            // Two angle limits only meet at the origin.
            let v = [w_i, w_j, 0.0, 0.0];
            return (self.violation(v) <= GRID_FEASIBILITY).then_some(v);
        };
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let radius = r2.sqrt();
        let point = |phi: f64| {
            let e = [radius * phi.cos() - b[0], radius * phi.sin() - b[1]];
            [(a[1][1] * e[0] - a[0][1] * e[1]) / det, (a[0][0] * e[1] - a[1][0] * e[0]) / det]
        };
        let slack = |phi: f64| second.slack(point(phi));
        let bisect = |mut lo: f64, mut hi: f64| {
            let s_lo = slack(lo);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if slack(mid).signum() == s_lo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        const SAMPLES: usize = 720;
        let step = std::f64::consts::TAU / SAMPLES as f64;
        let at = |k: usize| k as f64 * step;
        let vals: Vec<f64> = (0..=SAMPLES).map(|k| slack(at(k))).collect();
        let mut roots = Vec::new();
        for k in 0..SAMPLES {
            if vals[k] != 0.0 && vals[k].signum() != vals[k + 1].signum() {
                roots.push(bisect(at(k), at(k + 1)));
            }
            // A sliver where the slack turns positive between two samples.
            let prev = vals[(k + SAMPLES - 1) % SAMPLES];
            if vals[k] < 0.0 && vals[k] >= prev && vals[k] >= vals[k + 1] {
                let (peak, top) = golden(at(k) - step, at(k) + step, |p| Some(-slack(p)));
                if -top > 0.0 {
                    roots.push(bisect(at(k) - step, peak));
                    roots.push(bisect(peak, at(k) + step));
                }
            }
        }
        let mut best: Option<([f64; 4], f64)> = None;
        for phi in roots {
            let u = point(phi);
            let v = [w_i, w_j, u[0], u[1]];
            if self.violation(v) <= GRID_FEASIBILITY {
                let f = self.objective(v);
                if best.is_none_or(|(_, b)| f < b) {
                    best = Some((v, f));
                }
            }
        }
        best.map(|(v, _)| v)
    }
}

/// Best lifted point found by grid pattern search, and its objective.
///
/// The search runs over boxes in several charts of the feasible set. Cone
/// coordinates `(w_i, w_j, radial fraction, angle)` map a box onto the cone
/// and angle band exactly. When a thermal limit is present, polar
/// coordinates of either end's flow disk follow that limit exactly.
/// Constraints a chart does not map are handled by rejection. Finally, for
/// each pair of constraints nearly active at the incumbent, a chart over the
/// two magnitudes places the cross terms at the cheapest point on both
/// boundaries at once, which is where rejection stalls.
///
/// A coarse phase uses axis-aligned windows. A polish phase aligns the grid
/// with the eigenvectors of a finite-difference Hessian at the incumbent,
/// scaled to unit curvature, so narrow valleys do not stall it. In both
/// phases the window recenters on any improvement and halves otherwise; the
/// polish window also doubles again after an improvement.
pub fn branch_grid_oracle(inst: &BranchInstance) -> Option<([f64; 4], f64)> {
    let pi = std::f64::consts::PI;
    let (tl, th) = inst.theta_range();
    let (wf, wt) = (inst.branch.w_from, inst.branch.w_to);
    let mut found = vec![pattern_search(inst, [wf.0, wt.0, 0.0, tl], [wf.1, wt.1, 1.0, th], &|u| {
        Some(inst.cone_point(u[0], u[1], u[2], u[3]))
    })];
    if inst.branch.s_max.is_some() {
        for to_end in [false, true] {
            found.push(pattern_search(inst, [wf.0, wt.0, 0.0, -pi], [wf.1, wt.1, 1.0, pi], &|u| {
                Some(inst.disk_point(to_end, u[0], u[1], u[2], u[3]))
            }));
        }
    }
    let (v0, _) = found.iter().flatten().min_by(|a, b| a.1.total_cmp(&b.1)).copied()?;

    let active: Vec<usize> = inst
        .planar(v0[0], v0[1])
        .iter()
        .enumerate()
        .filter(|(_, c)| c.relative_slack([v0[2], v0[3]]) < 1e-4)
        .map(|(k, _)| k)
        .collect();
    for (a, &m) in active.iter().enumerate() {
        for &n in &active[a + 1..] {
            found.push(pattern_search(inst, [wf.0, wt.0], [wf.1, wt.1], &|w| inst.on_pair((m, n), w[0], w[1])));
        }
    }
    found.into_iter().flatten().min_by(|a, b| a.1.total_cmp(&b.1))
}

fn pattern_search<const N: usize>(
    inst: &BranchInstance,
    lo: [f64; N],
    hi: [f64; N],
    chart: &dyn Fn([f64; N]) -> Option<[f64; 4]>,
) -> Option<([f64; 4], f64)> {
    let clamp = |u: [f64; N]| -> [f64; N] { std::array::from_fn(|d| u[d].clamp(lo[d], hi[d])) };
    let raw = |u: [f64; N]| chart(u).map_or(f64::NAN, |v| inst.objective(v));
    let eval = |u: [f64; N]| -> Option<f64> {
        let v = chart(u)?;
        (inst.violation(v) <= GRID_FEASIBILITY).then(|| inst.objective(v))
    };

    let mut best: Option<([f64; N], f64)> = None;
    let consider = |u: [f64; N], best: &mut Option<([f64; N], f64)>| -> bool {
        match eval(u) {
            Some(f) if best.is_none_or(|(_, b)| f < b) => {
                let moved = best.is_none_or(|(bu, _)| bu != u);
                *best = Some((u, f));
                moved
            }
            _ => false,
        }
    };

    // Coarse phase.
    let mut center: [f64; N] = std::array::from_fn(|d| 0.5 * (lo[d] + hi[d]));
    let mut half: [f64; N] = std::array::from_fn(|d| 0.5 * (hi[d] - lo[d]));
    for _ in 0..12 {
        let mut improved = false;
        for_each_grid_point::<N>(|t| {
            let u = std::array::from_fn(|d| center[d] + t[d] * half[d]);
            improved |= consider(clamp(u), &mut best);
        });
        center = best?.0;
        if !improved {
            half = half.map(|h| 0.5 * h);
        }
    }

    // Polish phase.
    let mut scale = 1.0;
    for _ in 0..3000 {
        let (c, _) = best?;
        let step: [f64; N] = std::array::from_fn(|d| 1e-5 * (hi[d] - lo[d]));
        let mut hess = DMatrix::<f64>::zeros(N, N);
        for a in 0..N {
            for b in 0..N {
                let shifted = |sa: f64, sb: f64| {
                    let mut u = c;
                    u[a] += sa * step[a];
                    u[b] += sb * step[b];
                    raw(u)
                };
                hess[(a, b)] = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
                    / (4.0 * step[a] * step[b]);
            }
        }
        if hess.iter().any(|h| !h.is_finite()) {
            hess = DMatrix::from_fn(N, N, |a, b| if a == b { 1.0 / (step[a] * step[a]) } else { 0.0 });
        }
        let eig = nalgebra::SymmetricEigen::new(hess);
        let floor = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs())) * 1e-12 + 1e-300;
        let axes: [[f64; N]; N] = std::array::from_fn(|k| {
            let len = 1.0 / eig.eigenvalues[k].abs().max(floor).sqrt();
            std::array::from_fn(|d| eig.eigenvectors[(d, k)] * len)
        });
        let mut improved = false;
        for_each_grid_point::<N>(|t| {
            let mut u = c;
            for k in 0..N {
                for d in 0..N {
                    u[d] += scale * t[k] * axes[k][d];
                }
            }
            improved |= consider(clamp(u), &mut best);
        });
        if improved {
            scale = (2.0 * scale).min(1.0);
        } else {
            scale *= 0.5;
            if scale < 1e-9 {
                break;
            }
        }
    }
    let (u, f) = best?;
    chart(u).map(|v| (v, f))
}

/// Golden-section minimization on `[lo, hi]`; returns the best point seen
/// and its value.
fn golden(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Option<f64>) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut best = (0.5 * (lo + hi), f64::INFINITY);
    for _ in 0..90 {
        let x1 = hi - INV_PHI * (hi - lo);
        let x2 = lo + INV_PHI * (hi - lo);
        let f1 = f(x1).unwrap_or(f64::INFINITY);
        let f2 = f(x2).unwrap_or(f64::INFINITY);
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v < best.1 {
                best = (x, v);
            }
        }
        if f1 < f2 {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    best
}

// -------------------------------------------------- branch, cutting planes

/// Objective and constraint bracket from a central-cut ellipsoid method.
#[derive(Debug, Clone, Copy)]
pub struct EllipsoidBracket {
    /// Certified lower bound on the optimum.
    pub lower: f64,
    /// Best feasible center and its objective, an upper bound.
    pub point: [f64; 4],
    pub upper: f64,
    pub iterations: usize,
}

impl BranchInstance {
    /// Rows of the linear map from the lifted point to the six consensus
    /// values, read off the flow equations.
    fn rows(&self) -> [[f64; 4]; 6] {
        let br = &self.branch;
        [
            [br.gc_ij, 0.0, -br.g_ij, br.b_ij],
            [br.bc_ij, 0.0, -br.b_ij, -br.g_ij],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, br.gc_ji, -br.g_ji, -br.b_ji],
            [0.0, br.bc_ji, -br.b_ji, br.g_ji],
            [0.0, 1.0, 0.0, 0.0],
        ]
    }

    fn objective_gradient(&self, v: [f64; 4]) -> [f64; 4] {
        let rows = self.rows();
        let mut g = [0.0; 4];
        for (k, row) in rows.iter().enumerate() {
            let value: f64 = (0..4).map(|d| row[d] * v[d]).sum();
            let weight = self.lambda[k] + self.rho[k] * (value - self.centers[k]);
            for d in 0..4 {
                g[d] += weight * row[d];
            }
        }
        g
    }

    /// Most violated convex constraint at `v` as `(value, gradient)`, or
    /// `None` when `v` is feasible. The cone enters in its second-order form
    /// `|(2 wr, 2 wi, w_i - w_j)| <= w_i + w_j`.
    fn violated_cut(&self, v: [f64; 4]) -> Option<(f64, [f64; 4])> {
        let br = &self.branch;
        let [w_i, w_j, wr, wi] = v;
        let mut cuts: Vec<(f64, [f64; 4])> = vec![
            (br.w_from.0 - w_i, [-1.0, 0.0, 0.0, 0.0]),
            (w_i - br.w_from.1, [1.0, 0.0, 0.0, 0.0]),
            (br.w_to.0 - w_j, [0.0, -1.0, 0.0, 0.0]),
            (w_j - br.w_to.1, [0.0, 1.0, 0.0, 0.0]),
        ];
        let norm = (4.0 * wr * wr + 4.0 * wi * wi + (w_i - w_j).powi(2)).sqrt();
        if norm > 0.0 {
            let d = w_i - w_j;
            cuts.push((norm - w_i - w_j, [d / norm - 1.0, -d / norm - 1.0, 4.0 * wr / norm, 4.0 * wi / norm]));
        }
        if let Some((lo, hi)) = br.tan_bounds {
            cuts.push((lo * wr - wi, [0.0, 0.0, lo, -1.0]));
            cuts.push((wi - hi * wr, [0.0, 0.0, -hi, 1.0]));
        }
        if let Some(s) = br.s_max {
            let rows = self.rows();
            for (pr, qr) in [(0, 1), (3, 4)] {
                let p: f64 = (0..4).map(|d| rows[pr][d] * v[d]).sum();
                let q: f64 = (0..4).map(|d| rows[qr][d] * v[d]).sum();
                let m = p.hypot(q);
                if m > 0.0 {
                    cuts.push((m - s, std::array::from_fn(|d| (p * rows[pr][d] + q * rows[qr][d]) / m)));
                }
            }
        }
        cuts.into_iter().filter(|c| c.0 > 0.0).max_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// Deep-cut ellipsoid method on the branch problem. Every cut keeps all
/// optimal points, so at a feasible center `x` with gradient `g` the
/// optimum is at least `f(x) - sqrt(g' P g)`.
pub fn branch_ellipsoid(inst: &BranchInstance) -> Option<EllipsoidBracket> {
    const N: f64 = 4.0;
    let br = &inst.branch;
    let half = [
        0.5 * (br.w_from.1 - br.w_from.0),
        0.5 * (br.w_to.1 - br.w_to.0),
        (br.w_from.1 * br.w_to.1).sqrt(),
        (br.w_from.1 * br.w_to.1).sqrt(),
    ];
    let mut x = [0.5 * (br.w_from.0 + br.w_from.1), 0.5 * (br.w_to.0 + br.w_to.1), 0.0, 0.0];
    let mut p = DMatrix::<f64>::from_fn(4, 4, |a, b| if a == b { N * half[a] * half[a] } else { 0.0 });
    let mut lower = f64::NEG_INFINITY;
    let mut best: Option<([f64; 4], f64)> = None;
    let mut iterations = 0;
    for _ in 0..20_000 {
        iterations += 1;
        let (depth, g) = match inst.violated_cut(x) {
            Some((value, g)) => (value, g),
            None => {
                let f = inst.objective(x);
                if best.is_none_or(|(_, b)| f < b) {
                    best = Some((x, f));
                }
                let g = inst.objective_gradient(x);
                let gv = DVector::from_row_slice(&g);
                let width = (gv.transpose() * &p * &gv)[(0, 0)].max(0.0).sqrt();
                lower = lower.max(f - width);
                // Deep objective cut against the incumbent.
                (f - best.map_or(f, |b| b.1), g)
            }
        };
        let gv = DVector::from_row_slice(&g);
        let pg = &p * &gv;
        let gpg = gv.dot(&pg);
        if !(gpg > 0.0) {
            break;
        }
        let root = gpg.sqrt();
        let alpha = depth / root;
        if alpha >= 1.0 {
            // The cut removes the whole ellipsoid: no point remains.
            break;
        }
        let b = pg / root;
        let step = (1.0 + N * alpha) / (N + 1.0);
        for d in 0..4 {
            x[d] -= step * b[d];
        }
        let shrink = N * N * (1.0 - alpha * alpha) / (N * N - 1.0);
        let tilt = 2.0 * (1.0 + N * alpha) / ((N + 1.0) * (1.0 + alpha));
        p = (&p - (&b * b.transpose()) * tilt) * shrink;
        p = (&p + p.transpose()) * 0.5;
        if best.is_some_and(|(_, f)| f - lower <= 1e-13 * (1.0 + f.abs())) {
            break;
        }
    }
    let (point, upper) = best?;
    Some(EllipsoidBracket { lower, point, upper, iterations })
}

/// Bracket on the branch optimum: the best feasible point from the grid
/// search or the cutting-plane centers, and the certified lower bound.
#[derive(Debug, Clone, Copy)]
pub struct BranchBracket {
    pub lower: f64,
    pub upper: f64,
    pub point: [f64; 4],
    /// Best value the grid search alone reached.
    pub grid: f64,
}

pub fn branch_oracle(inst: &BranchInstance) -> Option<BranchBracket> {
    let (grid_point, grid) = branch_grid_oracle(inst)?;
    let cut = branch_ellipsoid(inst)?;
    let (point, upper) = if grid < cut.upper { (grid_point, grid) } else { (cut.point, cut.upper) };
    Some(BranchBracket { lower: cut.lower, upper, point, grid })
}
