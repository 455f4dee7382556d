//! Branch prox: a four-variable convex program solved by a log-barrier
//! Newton method.
//!
//! The six branch-side consensus variables are affine in the lifted voltage
//! variables `v = (w_i, w_j, wr, wi)` (see [`BranchModel::lift_matrix`]), so
//! the flow definitions are eliminated exactly and only inequalities remain:
//!
//! * voltage boxes on `w_i`, `w_j`
//! * the rotated cone `wr^2 + wi^2 <= w_i w_j`
//! * the angle band `tan_lo wr <= wi <= tan_hi wr`, when present
//! * thermal limits `p^2 + q^2 <= s_max^2` at both ends, when present

use thiserror::Error;

use crate::network::BranchModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPrimal {
    pub p_ij: f64,
    pub q_ij: f64,
    pub w_i: f64,
    pub p_ji: f64,
    pub q_ji: f64,
    pub w_j: f64,
    pub wr: f64,
    pub wi: f64,
}

impl BranchPrimal {
    pub fn from_lifted(branch: &BranchModel, v: [f64; 4]) -> Self {
        let f = branch.flows(v[0], v[1], v[2], v[3]);
        BranchPrimal {
            p_ij: f.p_ij,
            q_ij: f.q_ij,
            w_i: v[0],
            p_ji: f.p_ji,
            q_ji: f.q_ji,
            w_j: v[1],
            wr: v[2],
            wi: v[3],
        }
    }

    /// `[p_ij, q_ij, w_i, p_ji, q_ji, w_j]`, the order of the branch's
    /// consensus slots.
    pub fn consensus(&self) -> [f64; 6] {
        [self.p_ij, self.q_ij, self.w_i, self.p_ji, self.q_ji, self.w_j]
    }

    pub fn lifted(&self) -> [f64; 4] {
        [self.w_i, self.w_j, self.wr, self.wi]
    }

    /// `w_i w_j - wr^2 - wi^2`.
    pub fn soc_gap(&self) -> f64 {
        self.w_i * self.w_j - self.wr * self.wr - self.wi * self.wi
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BranchError {
    #[error("no strictly feasible point for the branch constraints")]
    BranchInfeasible,
    #[error("barrier Newton stalled at mu {mu:e} with decrement {decrement:e}")]
    NoConvergence { best: BranchPrimal, mu: f64, decrement: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchProxInput<'a> {
    pub branch: &'a BranchModel,
    /// Duals in consensus order `[p_ij, q_ij, w_ij, p_ji, q_ji, w_ji]`.
    pub lambda: [f64; 6],
    pub rho: [f64; 6],
    /// Bus-side values in the same order.
    pub centers: [f64; 6],
    /// Strictly feasible starting point from [`interior_point`]; computed on
    /// the fly when absent.
    pub start: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub mu_start: f64,
    pub mu_end: f64,
    pub mu_factor: f64,
    pub backtrack: f64,
    pub armijo: f64,
    /// Stage tolerance on half the squared Newton decrement.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        BarrierSettings {
            mu_start: 1.0,
            mu_end: 1e-10,
            mu_factor: 10.0,
            backtrack: 0.5,
            armijo: 1e-4,
            newton_tol: 1e-16,
            max_newton: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierStats {
    pub newton_steps: usize,
    pub final_mu: f64,
    /// Infinity norm of the barrier-problem gradient at the returned point.
    pub stationarity: f64,
}

/// Box bounds narrower than this are widened symmetrically so the barrier has
/// an interior.
const MIN_BOX_WIDTH: f64 = 2e-9;

#[derive(Debug, Clone, Copy)]
struct Constraints {
    w_i: (f64, f64),
    w_j: (f64, f64),
    tan_bounds: Option<(f64, f64)>,
    s_max_sq: Option<f64>,
    /// Gradient rows of `p_ij, q_ij, p_ji, q_ji` with respect to `v`.
    flow_rows: [[f64; 4]; 4],
}

fn widen(bounds: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = bounds;
    if hi - lo < MIN_BOX_WIDTH {
        let mid = 0.5 * (lo + hi);
        (mid - 0.5 * MIN_BOX_WIDTH, mid + 0.5 * MIN_BOX_WIDTH)
    } else {
        bounds
    }
}

impl Constraints {
    fn n_terms(&self) -> usize {
        5 + 2 * usize::from(self.tan_bounds.is_some()) + 2 * usize::from(self.s_max_sq.is_some())
    }

    fn new(branch: &BranchModel) -> Self {
        let m = branch.lift_matrix();
        Constraints {
            w_i: widen(branch.w_from),
            w_j: widen(branch.w_to),
            tan_bounds: branch.tan_bounds,
            s_max_sq: branch.s_max.map(|s| s * s),
            flow_rows: [m[0], m[1], m[3], m[4]],
        }
    }

    fn flow(&self, k: usize, v: &[f64; 4]) -> f64 {
        dot(&self.flow_rows[k], v)
    }

    /// Slacks scaled to be comparable across constraint types; all positive
    /// iff `v` is strictly feasible.
    fn min_scaled_slack(&self, v: &[f64; 4]) -> f64 {
        let mut worst = f64::INFINITY;
        for (w, (lo, hi)) in [(v[0], self.w_i), (v[1], self.w_j)] {
            worst = worst.min((w - lo) / (hi - lo)).min((hi - w) / (hi - lo));
        }
        let scale = (v[0] * v[1]).abs().max(f64::MIN_POSITIVE);
        worst = worst.min((v[0] * v[1] - v[2] * v[2] - v[3] * v[3]) / scale);
        if let Some((lo, hi)) = self.tan_bounds {
            let norm = v[2].abs() + v[3].abs() + f64::MIN_POSITIVE;
            worst = worst.min((v[3] - lo * v[2]) / norm).min((hi * v[2] - v[3]) / norm);
        }
        if let Some(s2) = self.s_max_sq {
            for pair in [(0, 1), (2, 3)] {
                let p = self.flow(pair.0, v);
                let q = self.flow(pair.1, v);
                worst = worst.min((s2 - p * p - q * q) / s2);
            }
        }
        worst
    }

    /// Barrier value, gradient and Hessian; `None` outside the interior.
    fn barrier(&self, v: &[f64; 4], want_derivs: bool) -> Option<(f64, [f64; 4], [[f64; 4]; 4])> {
        let mut value = 0.0;
        let mut grad = [0.0; 4];
        let mut hess = [[0.0; 4]; 4];

        let mut linear = |a: [f64; 4], s: f64| -> bool {
            if !(s > 0.0) {
                return false;
            }
            value -= s.ln();
            if want_derivs {
                for r in 0..4 {
                    grad[r] -= a[r] / s;
                    for c in 0..4 {
                        hess[r][c] += a[r] * a[c] / (s * s);
                    }
                }
            }
            true
        };
        let ok = linear([1.0, 0.0, 0.0, 0.0], v[0] - self.w_i.0)
            && linear([-1.0, 0.0, 0.0, 0.0], self.w_i.1 - v[0])
            && linear([0.0, 1.0, 0.0, 0.0], v[1] - self.w_j.0)
            && linear([0.0, -1.0, 0.0, 0.0], self.w_j.1 - v[1])
            && match self.tan_bounds {
                Some((lo, hi)) => {
                    linear([0.0, 0.0, -lo, 1.0], v[3] - lo * v[2]) && linear([0.0, 0.0, hi, -1.0], hi * v[2] - v[3])
                }
                None => true,
            };
        if !ok {
            return None;
        }

        // Quadratic slacks s(v) = c - v'Av / 2 handled as -log s with
        // grad -g/s and Hessian g g'/s^2 + A/s where g = grad s = -A v.
        let mut quadratic = |s: f64, g: [f64; 4], a: [[f64; 4]; 4]| -> bool {
            if !(s > 0.0) {
                return false;
            }
            value -= s.ln();
            if want_derivs {
                for r in 0..4 {
                    grad[r] -= g[r] / s;
                    for c in 0..4 {
                        hess[r][c] += g[r] * g[c] / (s * s) + a[r][c] / s;
                    }
                }
            }
            true
        };

        let cone = v[0] * v[1] - v[2] * v[2] - v[3] * v[3];
        let cone_curv = [[0.0, -1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0], [0.0, 0.0, 0.0, 2.0]];
        if !quadratic(cone, [v[1], v[0], -2.0 * v[2], -2.0 * v[3]], cone_curv) {
            return None;
        }

        if let Some(s2) = self.s_max_sq {
            for (kp, kq) in [(0, 1), (2, 3)] {
                let rp = self.flow_rows[kp];
                let rq = self.flow_rows[kq];
                let p = dot(&rp, v);
                let q = dot(&rq, v);
                let s = s2 - p * p - q * q;
                let mut g = [0.0; 4];
                let mut a = [[0.0; 4]; 4];
                for r in 0..4 {
                    g[r] = -2.0 * (p * rp[r] + q * rq[r]);
                    for c in 0..4 {
                        a[r][c] = 2.0 * (rp[r] * rp[c] + rq[r] * rq[c]);
                    }
                }
                if !quadratic(s, g, a) {
                    return None;
                }
            }
        }
        Some((value, grad, hess))
    }
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Finds a deterministic strictly feasible point of the branch's constraint
/// set, or `None` when the candidate search finds none.
///
/// Candidates place both voltages inside their boxes and put `(wr, wi)` on a
/// ray at angle `phi` inside the band, at a fraction `t` of the cone radius.
/// The candidate with the largest scaled slack wins.
pub fn interior_point(branch: &BranchModel) -> Option<[f64; 4]> {
    let cons = Constraints::new(branch);
    let fractions = [0.5, 0.3, 0.7, 0.1, 0.9];
    let radii = [0.999, 0.995, 0.99, 0.98, 0.95, 0.9, 0.8, 0.6, 0.4, 0.2, 0.0];
    let mut angles = vec![0.0];
    match cons.tan_bounds {
        Some((lo, hi)) => {
            let (a_lo, a_hi) = (lo.atan(), hi.atan());
            let mid = 0.5 * (a_lo + a_hi);
            angles = vec![mid];
            for k in 1..=4 {
                let f = f64::from(k) / 5.0;
                angles.push(mid + f * (a_hi - mid));
                angles.push(mid + f * (a_lo - mid));
            }
            if a_lo < 0.0 && a_hi > 0.0 {
                angles.insert(0, 0.0);
            }
        }
        None => {
            for deg in [5.0_f64, 15.0, 30.0, 60.0] {
                angles.push(deg.to_radians());
                angles.push(-deg.to_radians());
            }
        }
    }

    let mut best: Option<([f64; 4], f64)> = None;
    for &fi in &fractions {
        let w_i = cons.w_i.0 + fi * (cons.w_i.1 - cons.w_i.0);
        for &fj in &fractions {
            let w_j = cons.w_j.0 + fj * (cons.w_j.1 - cons.w_j.0);
            let radius = (w_i * w_j).sqrt();
            for &phi in &angles {
                for &t in &radii {
                    let v = [w_i, w_j, t * radius * phi.cos(), t * radius * phi.sin()];
                    let slack = cons.min_scaled_slack(&v);
                    if slack > 0.0 && best.is_none_or(|(_, s)| slack > s) {
                        best = Some((v, slack));
                    }
                }
            }
        }
    }
    best.map(|(v, _)| v)
}

struct Objective {
    hess: [[f64; 4]; 4],
    rows: [[f64; 4]; 6],
    rho: [f64; 6],
    /// Prox targets `c - lambda / rho` of the six consensus values.
    targets: [f64; 6],
}

impl Objective {
    /// `sum rho_k/2 (M_k v - t_k)^2`, equal to the augmented Lagrangian terms
    /// up to a constant. Evaluated in residual form to avoid cancellation.
    fn new(input: &BranchProxInput) -> Self {
        let rows = input.branch.lift_matrix();
        let mut hess = [[0.0; 4]; 4];
        let mut targets = [0.0; 6];
        for k in 0..6 {
            targets[k] = input.centers[k] - input.lambda[k] / input.rho[k];
            for r in 0..4 {
                for c in 0..4 {
                    hess[r][c] += input.rho[k] * rows[k][r] * rows[k][c];
                }
            }
        }
        Objective { hess, rows, rho: input.rho, targets }
    }

    fn residual(&self, k: usize, v: &[f64; 4]) -> f64 {
        dot(&self.rows[k], v) - self.targets[k]
    }

    fn value(&self, v: &[f64; 4]) -> f64 {
        (0..6).map(|k| 0.5 * self.rho[k] * self.residual(k, v).powi(2)).sum()
    }

    /// Bound on the absolute rounding error of [`Objective::value`] at `v`,
    /// in units of machine epsilon.
    fn error_scale(&self, v: &[f64; 4]) -> f64 {
        (0..6)
            .map(|k| {
                let mag: f64 = (0..4).map(|r| (self.rows[k][r] * v[r]).abs()).sum::<f64>() + self.targets[k].abs();
                self.rho[k] * self.residual(k, v).abs() * mag
            })
            .sum()
    }

    fn gradient(&self, v: &[f64; 4]) -> [f64; 4] {
        let mut g = [0.0; 4];
        for k in 0..6 {
            let w = self.rho[k] * self.residual(k, v);
            for r in 0..4 {
                g[r] += w * self.rows[k][r];
            }
        }
        g
    }
}

/// Cholesky solve, retried with a growing diagonal shift when round-off
/// makes the barrier Hessian lose definiteness.
fn regularized_solve(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let scale = (0..4).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(1.0);
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut m = *a;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += shift;
        }
        if let Some(x) = cholesky_solve(&m, b) {
            return Some(x);
        }
        shift = if shift == 0.0 { scale * 1e-14 } else { shift * 10.0 };
    }
    None
}

/// Cholesky solve of a 4x4 symmetric positive definite system.
fn cholesky_solve(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = [0.0; 4];
    for i in 0..4 {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let mut sum = y[i];
        for k in i + 1..4 {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

pub fn solve_branch(input: &BranchProxInput) -> Result<BranchPrimal, BranchError> {
    solve_branch_detailed(input, &BarrierSettings::default()).map(|(p, _)| p)
}

/// Barrier path following from `mu_start` down to `mu_end`.
pub fn solve_branch_detailed(
    input: &BranchProxInput,
    settings: &BarrierSettings,
) -> Result<(BranchPrimal, BarrierStats), BranchError> {
    let cons = Constraints::new(input.branch);
    let start = match input.start {
        Some(v) if cons.min_scaled_slack(&v) > 0.0 => v,
        _ => interior_point(input.branch).ok_or(BranchError::BranchInfeasible)?,
    };
    let obj = Objective::new(input);

    let mut v = start;
    // Large penalties put the objective far above the unit barrier scale;
    // starting where both are comparable keeps the damped phase short.
    let mut mu = settings.mu_start.max(obj.value(&v) / cons.n_terms() as f64);
    let mut steps = 0;
    let mut stationarity;
    loop {
        let mut stage_done = false;
        let mut decrement = f64::INFINITY;
        for _ in 0..settings.max_newton {
            let (bar, bar_grad, bar_hess) = cons.barrier(&v, true).expect("iterate stays interior");
            let bar_scale = bar.abs() + cons.n_terms() as f64;
            let f_obj = obj.value(&v);
            let f0 = f_obj + mu * bar;
            // Decrease below this is lost in the rounding of f0.
            let floor = 16.0 * f64::EPSILON * (f_obj + obj.error_scale(&v) + mu * bar_scale);
            let og = obj.gradient(&v);
            let mut grad = [0.0; 4];
            let mut hess = obj.hess;
            for r in 0..4 {
                grad[r] = og[r] + mu * bar_grad[r];
                for c in 0..4 {
                    hess[r][c] += mu * bar_hess[r][c];
                }
            }
            let neg = grad.map(|g| -g);
            let Some(dir) = regularized_solve(&hess, &neg) else {
                break;
            };
            decrement = -dot(&grad, &dir);
            if decrement / 2.0 <= settings.newton_tol.max(floor) {
                stage_done = true;
                break;
            }
            steps += 1;
            let slope = dot(&grad, &dir);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-14 {
                let cand = [v[0] + t * dir[0], v[1] + t * dir[1], v[2] + t * dir[2], v[3] + t * dir[3]];
                if let Some((b, _, _)) = cons.barrier(&cand, false) {
                    let f = obj.value(&cand) + mu * b;
                    if f <= f0 + settings.armijo * t * slope {
                        accepted = f < f0;
                        v = cand;
                        break;
                    }
                }
                t *= settings.backtrack;
            }
            if !accepted {
                // Round-off floor: no representable decrease left.
                stage_done = decrement.is_finite() && decrement / 2.0 <= settings.newton_tol.sqrt().max(1e3 * floor);
                break;
            }
        }
        if !stage_done {
            return Err(BranchError::NoConvergence { best: BranchPrimal::from_lifted(input.branch, v), mu, decrement });
        }
        let (_, bar_grad, _) = cons.barrier(&v, true).expect("iterate stays interior");
        let og = obj.gradient(&v);
        stationarity = (0..4).map(|r| (og[r] + mu * bar_grad[r]).abs()).fold(0.0, f64::max);
        if mu <= settings.mu_end * (1.0 + 1e-9) {
            break;
        }
        mu = (mu / settings.mu_factor).max(settings.mu_end);
    }

    Ok((BranchPrimal::from_lifted(input.branch, v), BarrierStats { newton_steps: steps, final_mu: mu, stationarity }))
}
