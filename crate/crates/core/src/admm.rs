//! The consensus ADMM engine and its accelerated variants.
//!
//! Constraints are written `x - Pz = 0` where `P` duplicates bus-side `z`
//! entries onto the component-side `x` slots (see
//! [`ConsensusLayout::duplicate`]). Duals are unscaled and every penalty is
//! per constraint, so the scalar-penalty listings are the special case of a
//! constant `rho` vector.
//!
//! Schemes:
//!
//! * `Vanilla`: plain alternating minimization plus dual ascent.
//! * `OverRelaxed`: the z-update sees the dual shifted by
//!   `rho (alpha - 1)(x - P z_prev)`; the dual ascent starts from the shifted
//!   dual. This is exactly classical over-relaxation with `A = I`.
//! * `Fast`: Nesterov-type extrapolation of `(z, lambda)` with a restart
//!   whenever the combined residual fails to drop by a factor `eta`.
//! * `Adaptive`: per-constraint residual balancing every `k_f` iterations.
//! * The two overlays combine adaptation with over-relaxation or fast steps.
//!
//! Iterations are bulk synchronous: every x-subproblem, then every
//! z-subproblem, then elementwise dual and residual work. Subproblems run on a
//! private rayon pool when more than one thread is requested; norms are
//! always reduced sequentially in layout order, so traces do not depend on
//! the thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::local_solvers::{
    interior_point, solve_branch, solve_bus, solve_generator, BranchError, BranchProxInput, BusEndTerm, BusError,
    BusGenTerm, BusProxInput, GenProxInput,
};
use crate::network::{evaluate_objective, ConsensusLayout, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Vanilla,
    #[serde(rename = "or")]
    OverRelaxed,
    Fast,
    Adaptive,
    #[serde(rename = "or-adaptive")]
    OverRelaxedAdaptive,
    FastAdaptive,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Vanilla,
        Scheme::OverRelaxed,
        Scheme::Fast,
        Scheme::Adaptive,
        Scheme::OverRelaxedAdaptive,
        Scheme::FastAdaptive,
    ];

    pub fn is_fast(self) -> bool {
        matches!(self, Scheme::Fast | Scheme::FastAdaptive)
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Scheme::Adaptive | Scheme::OverRelaxedAdaptive | Scheme::FastAdaptive)
    }

    pub fn is_over_relaxed(self) -> bool {
        matches!(self, Scheme::OverRelaxed | Scheme::OverRelaxedAdaptive)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Vanilla => "vanilla",
            Scheme::OverRelaxed => "or",
            Scheme::Fast => "fast",
            Scheme::Adaptive => "adaptive",
            Scheme::OverRelaxedAdaptive => "or-adaptive",
            Scheme::FastAdaptive => "fast-adaptive",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .or(match s {
                "over-relaxed" | "over_relaxed" => Some(Scheme::OverRelaxed),
                "over-relaxed-adaptive" | "over_relaxed_adaptive" => Some(Scheme::OverRelaxedAdaptive),
                "fast_adaptive" => Some(Scheme::FastAdaptive),
                _ => None,
            })
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub scheme: Scheme,
    /// Relaxation parameter, over-relaxed schemes only.
    pub alpha: f64,
    /// Restart threshold, fast schemes only.
    pub eta: f64,
    /// Initial penalty on generator and flow consensus.
    pub rho_power: f64,
    /// Initial penalty on voltage consensus.
    pub rho_voltage: f64,
    pub tau_incr: f64,
    pub tau_decr: f64,
    pub mu_incr: f64,
    pub mu_decr: f64,
    /// Penalties adapt on iterations `k` with `k % k_f == 0`.
    pub k_f: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    /// In fast adaptive runs, only adapt on iterations that restarted.
    pub freeze_rho_between_restarts: bool,
    /// Worker threads for the subproblem sweeps; `0` lets rayon decide.
    pub threads: usize,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            scheme: Scheme::Vanilla,
            alpha: 1.0,
            eta: 0.999,
            rho_power: 10.0,
            rho_voltage: 100.0,
            tau_incr: 1.0,
            tau_decr: 0.5,
            mu_incr: 10.0,
            mu_decr: 100.0,
            k_f: 2,
            eps_abs: 1e-6,
            eps_rel: 5e-5,
            max_iter: 10_000,
            rho_min: 1e-4,
            rho_max: 1e8,
            freeze_rho_between_restarts: false,
            threads: 1,
        }
    }
}

impl AlgorithmConfig {
    pub fn with_scheme(scheme: Scheme) -> Self {
        AlgorithmConfig { scheme, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |what: &str| Err(EngineError::InvalidConfig(what.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("alpha must lie in (0, 2)");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.rho_power > 0.0 && self.rho_voltage > 0.0) {
            return bad("initial penalties must be positive");
        }
        if !(self.rho_min > 0.0 && self.rho_min <= self.rho_max) {
            return bad("penalty clamps must satisfy 0 < rho_min <= rho_max");
        }
        if !(self.tau_incr > 0.0 && self.tau_decr > 0.0) {
            return bad("tau_incr and tau_decr must be positive");
        }
        if !(self.mu_incr > 1.0 && self.mu_decr > 1.0) {
            return bad("mu_incr and mu_decr must exceed 1");
        }
        if self.k_f == 0 {
            return bad("k_f must be at least 1");
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    fn initial_rho(&self, voltage: bool) -> f64 {
        let rho = if voltage { self.rho_voltage } else { self.rho_power };
        rho.clamp(self.rho_min, self.rho_max)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("branch {branch}: {source}")]
    Branch {
        branch: usize,
        #[source]
        source: BranchError,
    },
    #[error("bus {bus}: {source}")]
    Bus {
        bus: usize,
        #[source]
        source: BusError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    /// Momentum sequence of the fast schemes.
    pub alpha_acc: f64,
    /// Last accepted combined residual; infinite before the first iteration.
    pub c_comb: f64,
    /// Index of the next iteration, starting at 1.
    pub k: usize,
    /// Latest `(w_i, w_j, wr, wi)` of every branch.
    pub branch_lifted: Vec<[f64; 4]>,
}

impl IterateState {
    /// Zero duals and x; bus-side generator duplicates at their box midpoints,
    /// flows at zero and voltages at one.
    pub fn initial(net: &Network, layout: &ConsensusLayout, config: &AlgorithmConfig) -> Self {
        let mut z = vec![0.0; layout.n_z];
        for (g, gen) in net.gens.iter().enumerate() {
            z[layout.z_gen_p(g)] = 0.5 * (gen.p_min + gen.p_max);
            z[layout.z_gen_q(g)] = 0.5 * (gen.q_min + gen.q_max);
        }
        for bus in 0..layout.n_buses {
            z[layout.z_voltage(bus)] = 1.0;
        }
        let rho = layout.slots.iter().map(|s| config.initial_rho(s.kind.is_voltage())).collect();
        IterateState {
            x: vec![0.0; layout.n_lambda],
            z_hat: z.clone(),
            z,
            lambda: vec![0.0; layout.n_lambda],
            lambda_hat: vec![0.0; layout.n_lambda],
            rho,
            alpha_acc: 1.0,
            c_comb: f64::INFINITY,
            k: 1,
            branch_lifted: vec![[1.0, 1.0, 1.0, 0.0]; net.branches.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `x - Pz`
    pub r: Vec<f64>,
    /// `-rho * P(z - z_ref)`
    pub s: Vec<f64>,
    pub r_norm: f64,
    pub s_norm: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub max_abs_r: f64,
}

impl ResidualReport {
    pub fn converged(&self) -> bool {
        self.r_norm <= self.eps_pri && self.s_norm <= self.eps_dual
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub r_norm: f64,
    pub s_norm: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub objective: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub restart: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub converged: bool,
    pub iterations: usize,
    /// $/h at the final generator-side dispatch.
    pub objective: f64,
    pub max_abs_r: f64,
    pub trace: Vec<TraceRow>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    pub branch_lifted: Vec<[f64; 4]>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `lambda + rho (x - Pz)` elementwise.
pub fn dual_ascent(lambda: &[f64], rho: &[f64], x: &[f64], pz: &[f64]) -> Vec<f64> {
    lambda.iter().zip(rho).zip(x.iter().zip(pz)).map(|((l, r), (xv, zv))| l + r * (xv - zv)).collect()
}

/// Shifted dual used by the over-relaxed z-update:
/// `lambda + rho (alpha - 1)(x - P z_prev)`.
pub fn over_relaxed_dual(lambda: &[f64], rho: &[f64], alpha: f64, x: &[f64], pz_prev: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .zip(rho)
        .zip(x.iter().zip(pz_prev))
        .map(|((l, r), (xv, zv))| l + r * (alpha - 1.0) * (xv - zv))
        .collect()
}

/// Primal and dual residuals with their stopping thresholds.
///
/// `z_ref` is the previous `z` for the plain schemes and the extrapolated
/// `z_hat` for the fast ones.
#[allow(clippy::too_many_arguments)]
pub fn compute_residuals(
    layout: &ConsensusLayout,
    x: &[f64],
    z: &[f64],
    z_ref: &[f64],
    lambda: &[f64],
    rho: &[f64],
    eps_abs: f64,
    eps_rel: f64,
) -> ResidualReport {
    let pz = layout.duplicate(z);
    let r: Vec<f64> = x.iter().zip(&pz).map(|(a, b)| a - b).collect();
    let s: Vec<f64> =
        layout.slots.iter().zip(rho).map(|(slot, rho)| -rho * (z[slot.z_slot] - z_ref[slot.z_slot])).collect();
    let n = layout.n_lambda as f64;
    let eps_pri = n.sqrt() * eps_abs + eps_rel * norm2(x).max(norm2(&pz));
    let eps_dual = (layout.n_x() as f64).sqrt() * eps_abs + eps_rel * norm2(lambda);
    ResidualReport {
        r_norm: norm2(&r),
        s_norm: norm2(&s),
        max_abs_r: r.iter().fold(0.0, |m, v| m.max(v.abs())),
        r,
        s,
        eps_pri,
        eps_dual,
    }
}

/// `sum rho_p r_p^2 + sum s_p^2 / rho_p`.
pub fn combined_residual(res: &ResidualReport, rho: &[f64]) -> f64 {
    let primal: f64 = res.r.iter().zip(rho).map(|(r, p)| p * r * r).sum();
    let dual: f64 = res.s.iter().zip(rho).map(|(s, p)| s * s / p).sum();
    primal + dual
}

/// Next term of the momentum sequence, `(1 + sqrt(1 + 4 a^2)) / 2`.
pub fn next_momentum(alpha: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt())
}

/// Acceleration or restart after an iteration whose new iterates are already
/// in `state.z` / `state.lambda`. Returns whether a restart happened.
pub fn fast_step(
    state: &mut IterateState,
    z_prev: &[f64],
    lambda_prev: &[f64],
    res: &ResidualReport,
    rho: &[f64],
    eta: f64,
) -> bool {
    let c_new = combined_residual(res, rho);
    if c_new < eta * state.c_comb {
        let alpha_new = next_momentum(state.alpha_acc);
        let weight = (state.alpha_acc - 1.0) / alpha_new;
        state.z_hat = state.z.iter().zip(z_prev).map(|(z, zp)| z + weight * (z - zp)).collect();
        state.lambda_hat = state.lambda.iter().zip(lambda_prev).map(|(l, lp)| l + weight * (l - lp)).collect();
        state.alpha_acc = alpha_new;
        state.c_comb = c_new;
        false
    } else {
        state.alpha_acc = 1.0;
        state.z_hat.clone_from(&state.z);
        state.lambda_hat.clone_from(&state.lambda);
        true
    }
}

/// Residual balancing on every constraint using its local residual pair.
/// Returns the number of penalties that changed.
pub fn adapt_rho(rho: &mut [f64], r: &[f64], s: &[f64], config: &AlgorithmConfig) -> usize {
    let mut changed = 0;
    for ((rho_p, r_p), s_p) in rho.iter_mut().zip(r).zip(s) {
        let (r_abs, s_abs) = (r_p.abs(), s_p.abs());
        let updated = if r_abs > config.mu_incr * s_abs {
            *rho_p * (1.0 + config.tau_incr)
        } else if s_abs > config.mu_decr * r_abs {
            *rho_p / (1.0 + config.tau_decr)
        } else {
            continue;
        };
        let updated = updated.clamp(config.rho_min, config.rho_max);
        if updated != *rho_p {
            *rho_p = updated;
            changed += 1;
        }
    }
    changed
}

/// Result of one engine iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub residuals: ResidualReport,
    pub restarted: bool,
    pub objective: f64,
    /// Extremes of the penalties in effect during the iteration.
    pub rho_range: (f64, f64),
    pub rho_changes: usize,
}

pub struct Engine<'a> {
    net: &'a Network,
    layout: &'a ConsensusLayout,
    config: AlgorithmConfig,
    starts: Vec<[f64; 4]>,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Engine<'a> {
    pub fn new(net: &'a Network, layout: &'a ConsensusLayout, config: AlgorithmConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let starts = net
            .branches
            .iter()
            .enumerate()
            .map(|(b, br)| {
                interior_point(br).ok_or(EngineError::Branch { branch: b, source: BranchError::BranchInfeasible })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pool = if config.threads == 1 {
            None
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| EngineError::InvalidConfig(format!("thread pool: {e}")))?;
            Some(pool)
        };
        Ok(Engine { net, layout, config, starts, pool })
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.config
    }

    fn map_indexed<T, E, F>(&self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }

    /// Generator and branch subproblems against the given bus-side values.
    /// Returns the new `x` and each branch's lifted voltages.
    pub fn x_update(&self, z: &[f64], lambda: &[f64], rho: &[f64]) -> Result<(Vec<f64>, Vec<[f64; 4]>), EngineError> {
        let layout = self.layout;
        let mut x = vec![0.0; layout.n_lambda];
        for (g, gen) in self.net.gens.iter().enumerate() {
            let (ip, iq) = (layout.gen_p(g), layout.gen_q(g));
            let (p, q) = solve_generator(&GenProxInput {
                c2: gen.c2,
                c1: gen.c1,
                base: gen.base,
                lambda_p: lambda[ip],
                lambda_q: lambda[iq],
                rho_p: rho[ip],
                rho_q: rho[iq],
                p_dup: z[layout.z_gen_p(g)],
                q_dup: z[layout.z_gen_q(g)],
                p_min: gen.p_min,
                p_max: gen.p_max,
                q_min: gen.q_min,
                q_max: gen.q_max,
            });
            x[ip] = p;
            x[iq] = q;
        }

        let nl = self.net.branches.len();
        let solved = self.map_indexed(nl, |b| {
            let br = &self.net.branches[b];
            let from = layout.end_slots(b);
            let to = layout.end_slots(nl + b);
            let slots = [from[0], from[1], from[2], to[0], to[1], to[2]];
            let zf = layout.z_flow(b);
            let zt = layout.z_flow(nl + b);
            let centers =
                [z[zf[0]], z[zf[1]], z[layout.z_voltage(br.from)], z[zt[0]], z[zt[1]], z[layout.z_voltage(br.to)]];
            let input = BranchProxInput {
                branch: br,
                lambda: slots.map(|p| lambda[p]),
                rho: slots.map(|p| rho[p]),
                centers,
                start: Some(self.starts[b]),
            };
            solve_branch(&input).map(|sol| (slots, sol)).map_err(|source| EngineError::Branch { branch: b, source })
        })?;
        let mut lifted = Vec::with_capacity(nl);
        for (slots, sol) in solved {
            for (p, v) in slots.iter().zip(sol.consensus()) {
                x[*p] = v;
            }
            lifted.push(sol.lifted());
        }
        Ok((x, lifted))
    }

    /// Bus subproblems against the component-side values in `x`.
    pub fn z_update(&self, x: &[f64], lambda: &[f64], rho: &[f64]) -> Result<Vec<f64>, EngineError> {
        let layout = self.layout;
        let net = self.net;
        let solved = self.map_indexed(net.buses.len(), |i| {
            let bus = &net.buses[i];
            let gens = net.bus_gens[i]
                .iter()
                .map(|&g| {
                    let (ip, iq) = (layout.gen_p(g), layout.gen_q(g));
                    BusGenTerm {
                        lambda_p: lambda[ip],
                        lambda_q: lambda[iq],
                        rho_p: rho[ip],
                        rho_q: rho[iq],
                        p: x[ip],
                        q: x[iq],
                    }
                })
                .collect();
            let ends = net.bus_ends[i]
                .iter()
                .map(|&e| {
                    let [sp, sq, sw] = layout.end_slots(e);
                    BusEndTerm {
                        lambda_p: lambda[sp],
                        lambda_q: lambda[sq],
                        lambda_w: lambda[sw],
                        rho_p: rho[sp],
                        rho_q: rho[sq],
                        rho_w: rho[sw],
                        p: x[sp],
                        q: x[sq],
                        w: x[sw],
                    }
                })
                .collect();
            let input = BusProxInput { gens, ends, p_d: bus.p_d, q_d: bus.q_d, g_sh: bus.g_sh, b_sh: bus.b_sh };
            solve_bus(&input).map_err(|source| EngineError::Bus { bus: i, source })
        })?;

        let mut z = vec![0.0; layout.n_z];
        for (i, sol) in solved.into_iter().enumerate() {
            for (k, &g) in net.bus_gens[i].iter().enumerate() {
                z[layout.z_gen_p(g)] = sol.gen_p[k];
                z[layout.z_gen_q(g)] = sol.gen_q[k];
            }
            for (k, &e) in net.bus_ends[i].iter().enumerate() {
                let [zp, zq] = layout.z_flow(e);
                z[zp] = sol.flow_p[k];
                z[zq] = sol.flow_q[k];
            }
            z[layout.z_voltage(i)] = sol.w;
        }
        Ok(z)
    }

    /// One full iteration of the configured scheme.
    pub fn step(&self, state: &mut IterateState) -> Result<IterationOutcome, EngineError> {
        let cfg = &self.config;
        let scheme = cfg.scheme;
        let layout = self.layout;

        let (x, lifted) = if scheme.is_fast() {
            self.x_update(&state.z_hat, &state.lambda_hat, &state.rho)?
        } else {
            self.x_update(&state.z, &state.lambda, &state.rho)?
        };

        let lambda_base = if scheme.is_over_relaxed() {
            over_relaxed_dual(&state.lambda, &state.rho, cfg.alpha, &x, &layout.duplicate(&state.z))
        } else if scheme.is_fast() {
            state.lambda_hat.clone()
        } else {
            state.lambda.clone()
        };

        let z = self.z_update(&x, &lambda_base, &state.rho)?;
        let lambda = dual_ascent(&lambda_base, &state.rho, &x, &layout.duplicate(&z));

        let z_ref = if scheme.is_fast() { &state.z_hat } else { &state.z };
        let residuals = compute_residuals(layout, &x, &z, z_ref, &lambda, &state.rho, cfg.eps_abs, cfg.eps_rel);

        let z_prev = std::mem::replace(&mut state.z, z);
        let lambda_prev = std::mem::replace(&mut state.lambda, lambda);
        state.x = x;
        state.branch_lifted = lifted;

        let rho_range =
            state.rho.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));

        let restarted = if scheme.is_fast() {
            let rho = state.rho.clone();
            fast_step(state, &z_prev, &lambda_prev, &residuals, &rho, cfg.eta)
        } else {
            false
        };

        let mut rho_changes = 0;
        if scheme.is_adaptive() && state.k.is_multiple_of(cfg.k_f) {
            let frozen = scheme.is_fast() && cfg.freeze_rho_between_restarts && !restarted;
            if !frozen {
                rho_changes = adapt_rho(&mut state.rho, &residuals.r, &residuals.s, cfg);
            }
        }
        state.k += 1;

        Ok(IterationOutcome {
            objective: evaluate_objective(self.net, &state.x),
            residuals,
            restarted,
            rho_range,
            rho_changes,
        })
    }

    pub fn run(&self) -> Result<SolveReport, EngineError> {
        let state = IterateState::initial(self.net, self.layout, &self.config);
        self.run_from(state)
    }

    /// Iterates until both residuals meet their thresholds or `max_iter`
    /// iterations have run.
    pub fn run_from(&self, mut state: IterateState) -> Result<SolveReport, EngineError> {
        let mut trace = Vec::new();
        let mut converged = false;
        let mut max_abs_r = f64::INFINITY;
        for _ in 0..self.config.max_iter {
            let out = self.step(&mut state)?;
            trace.push(TraceRow {
                iter: state.k - 1,
                r_norm: out.residuals.r_norm,
                s_norm: out.residuals.s_norm,
                eps_pri: out.residuals.eps_pri,
                eps_dual: out.residuals.eps_dual,
                objective: out.objective,
                rho_min: out.rho_range.0,
                rho_max: out.rho_range.1,
                restart: out.restarted,
            });
            max_abs_r = out.residuals.max_abs_r;
            if out.residuals.converged() {
                converged = true;
                break;
            }
        }
        Ok(SolveReport {
            scheme: self.config.scheme,
            converged,
            iterations: trace.len(),
            objective: evaluate_objective(self.net, &state.x),
            max_abs_r,
            trace,
            x: state.x,
            z: state.z,
            lambda: state.lambda,
            rho: state.rho,
            branch_lifted: state.branch_lifted,
        })
    }
}

/// Convenience wrapper: build an engine and run it.
pub fn run(net: &Network, layout: &ConsensusLayout, config: &AlgorithmConfig) -> Result<SolveReport, EngineError> {
    Engine::new(net, layout, config.clone())?.run()
}
