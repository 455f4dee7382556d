//! Engine invariants checked by stepping the engine by hand. Each check
//! returns a short summary on success and the first violation otherwise.

use dopf::admm::{combined_residual, compute_residuals, IterateState};
use dopf::{AlgorithmConfig, ConsensusLayout, Engine, Network, Scheme, SolveReport};

pub type Check = Result<String, String>;

fn engine<'a>(net: &'a Network, layout: &'a ConsensusLayout, config: AlgorithmConfig) -> Engine<'a> {
    Engine::new(net, layout, config).expect("valid config")
}

fn trace_bits(report: &SolveReport) -> Vec<[u64; 9]> {
    report
        .trace
        .iter()
        .map(|t| {
            [
                t.iter as u64,
                t.r_norm.to_bits(),
                t.s_norm.to_bits(),
                t.eps_pri.to_bits(),
                t.eps_dual.to_bits(),
                t.objective.to_bits(),
                t.rho_min.to_bits(),
                t.rho_max.to_bits(),
                t.restart as u64,
            ]
        })
        .collect()
}

/// Over-relaxation with unit weight reproduces the plain trace bit for bit.
pub fn unit_alpha_identity(net: &Network, layout: &ConsensusLayout) -> Check {
    let plain = engine(net, layout, AlgorithmConfig::default()).run().map_err(|e| e.to_string())?;
    let relaxed =
        engine(net, layout, AlgorithmConfig { alpha: 1.0, ..AlgorithmConfig::with_scheme(Scheme::OverRelaxed) })
            .run()
            .map_err(|e| e.to_string())?;
    if trace_bits(&plain) != trace_bits(&relaxed) || plain.x != relaxed.x || plain.lambda != relaxed.lambda {
        return Err("over-relaxed trace at alpha = 1 differs from vanilla".into());
    }
    Ok(format!("{} identical rows", plain.trace.len()))
}

/// Every accepted fast step satisfies the decrease test against the stored
/// combined residual; every restart resets momentum and extrapolation and
/// keeps the stored value.
pub fn restart_rule(net: &Network, layout: &ConsensusLayout, scheme: Scheme) -> Check {
    let config = AlgorithmConfig::with_scheme(scheme);
    let eta = config.eta;
    let eng = engine(net, layout, config.clone());
    let mut state = IterateState::initial(net, layout, &config);
    let (mut accepted, mut restarts) = (0, 0);
    for _ in 0..config.max_iter {
        let c_old = state.c_comb;
        let rho = state.rho.clone();
        let out = eng.step(&mut state).map_err(|e| e.to_string())?;
        let c_new = combined_residual(&out.residuals, &rho);
        let k = state.k - 1;
        if out.restarted {
            restarts += 1;
            if !(c_new >= eta * c_old) {
                return Err(format!("iteration {k}: restart although {c_new} < eta * {c_old}"));
            }
            if state.alpha_acc != 1.0 || state.z_hat != state.z || state.lambda_hat != state.lambda {
                return Err(format!("iteration {k}: restart did not reset the extrapolation"));
            }
            if state.c_comb != c_old {
                return Err(format!("iteration {k}: restart overwrote the stored combined residual"));
            }
        } else {
            accepted += 1;
            if !(c_new < eta * c_old) || state.c_comb != c_new {
                return Err(format!("iteration {k}: accepted step with {c_new} vs eta * {c_old}"));
            }
        }
        if out.residuals.converged() {
            return Ok(format!("{accepted} accepted, {restarts} restarts"));
        }
    }
    Err("did not converge".into())
}

/// Penalties change only on multiples of the adaptation period, and every
/// change is exactly one increase or decrease factor (or a clamp).
pub fn adaptation_cadence(net: &Network, layout: &ConsensusLayout, scheme: Scheme) -> Check {
    let config = AlgorithmConfig::with_scheme(scheme);
    let (up, down) = (1.0 + config.tau_incr, 1.0 + config.tau_decr);
    let eng = engine(net, layout, config.clone());
    let mut state = IterateState::initial(net, layout, &config);
    let (mut ups, mut downs) = (0, 0);
    for _ in 0..config.max_iter {
        let before = state.rho.clone();
        let k = state.k;
        let out = eng.step(&mut state).map_err(|e| e.to_string())?;
        for (p, (&old, &new)) in before.iter().zip(&state.rho).enumerate() {
            if old == new {
                continue;
            }
            if !k.is_multiple_of(config.k_f) {
                return Err(format!("iteration {k}: penalty {p} changed off cadence"));
            }
            if new == (old * up).min(config.rho_max) {
                ups += 1;
            } else if new == (old / down).max(config.rho_min) {
                downs += 1;
            } else {
                return Err(format!("iteration {k}: penalty {p} went {old} -> {new}"));
            }
            if !(config.rho_min..=config.rho_max).contains(&new) {
                return Err(format!("iteration {k}: penalty {p} = {new} outside its clamp"));
            }
        }
        if out.residuals.converged() {
            return Ok(format!("{ups} increases, {downs} decreases"));
        }
    }
    Err("did not converge".into())
}

/// Recomputes the final residuals from the stored iterates of a converged run
/// and checks them against the thresholds.
pub fn stopping_soundness(net: &Network, layout: &ConsensusLayout, scheme: Scheme) -> Check {
    let config = AlgorithmConfig::with_scheme(scheme);
    let eng = engine(net, layout, config.clone());
    let report = eng.run().map_err(|e| e.to_string())?;
    if !report.converged {
        return Err("did not converge".into());
    }
    // The reference point of the dual residual is not part of the report, so
    // replay to the state just before the final iteration.
    let mut state = IterateState::initial(net, layout, &config);
    for _ in 1..report.iterations {
        eng.step(&mut state).map_err(|e| e.to_string())?;
    }
    let z_ref = if scheme.is_fast() { state.z_hat.clone() } else { state.z.clone() };
    let rho = state.rho.clone();
    eng.step(&mut state).map_err(|e| e.to_string())?;
    if state.x != report.x || state.z != report.z || state.lambda != report.lambda {
        return Err("replay does not reproduce the reported iterates".into());
    }
    let res =
        compute_residuals(layout, &report.x, &report.z, &z_ref, &report.lambda, &rho, config.eps_abs, config.eps_rel);
    if !res.converged() || res.max_abs_r > res.eps_pri || res.max_abs_r != report.max_abs_r {
        return Err(format!(
            "recomputed r {:e} / {:e}, s {:e} / {:e}",
            res.r_norm, res.eps_pri, res.s_norm, res.eps_dual
        ));
    }
    let short = engine(net, layout, AlgorithmConfig { max_iter: report.iterations - 1, ..config })
        .run()
        .map_err(|e| e.to_string())?;
    if short.converged {
        return Err("converged before the reported iteration".into());
    }
    Ok(format!("r {:.3e} <= {:.3e}, s {:.3e} <= {:.3e}", res.r_norm, res.eps_pri, res.s_norm, res.eps_dual))
}

/// Traces are bitwise identical for one, two and eight workers.
pub fn thread_determinism(net: &Network, layout: &ConsensusLayout, scheme: Scheme) -> Check {
    let mut traces = Vec::new();
    for threads in [1, 2, 8] {
        let report = engine(net, layout, AlgorithmConfig { threads, ..AlgorithmConfig::with_scheme(scheme) })
            .run()
            .map_err(|e| e.to_string())?;
        traces.push((trace_bits(&report), report.x));
    }
    if traces.iter().any(|t| *t != traces[0]) {
        return Err(format!("{scheme} trace depends on the thread count"));
    }
    Ok(format!("{} rows", traces[0].0.len()))
}
