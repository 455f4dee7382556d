use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BusError {
    #[error("bus KKT system is singular (det {det:e})")]
    SingularBusSystem { det: f64 },
}

/// Consensus data for one attached generator: duals, penalties and the
/// generator-side values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusGenTerm {
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub rho_p: f64,
    pub rho_q: f64,
    pub p: f64,
    pub q: f64,
}

/// Consensus data for one incident branch end: `(p, q, w)` triples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusEndTerm {
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub lambda_w: f64,
    pub rho_p: f64,
    pub rho_q: f64,
    pub rho_w: f64,
    pub p: f64,
    pub q: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusProxInput {
    pub gens: Vec<BusGenTerm>,
    pub ends: Vec<BusEndTerm>,
    pub p_d: f64,
    pub q_d: f64,
    pub g_sh: f64,
    pub b_sh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusSolution {
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub flow_p: Vec<f64>,
    pub flow_q: Vec<f64>,
    pub w: f64,
    /// Multipliers of the active and reactive balance equations.
    pub nu: (f64, f64),
}

impl BusSolution {
    /// `(active, reactive)` balance residuals.
    pub fn kcl_residual(&self, input: &BusProxInput) -> (f64, f64) {
        let p = self.gen_p.iter().sum::<f64>() - self.flow_p.iter().sum::<f64>() - input.g_sh * self.w - input.p_d;
        let q = self.gen_q.iter().sum::<f64>() - self.flow_q.iter().sum::<f64>() + input.b_sh * self.w - input.q_d;
        (p, q)
    }
}

/// Voltage held by a bus that has no incident branch.
const DETACHED_VOLTAGE: f64 = 1.0;

/// Minimizes the bus share of the augmented Lagrangian subject to
///
/// ```text
/// sum p_g - sum p_ij - g_sh w = p_d
/// sum q_g - sum q_ij + b_sh w = q_d
/// ```
///
/// Each variable `z_k` enters as `rho_k/2 (z_k - t_k)^2` with prox target
/// `t_k = x_k + lambda_k / rho_k`; stationarity gives
/// `z_k = t_k - (nu_p a_k + nu_q c_k) / rho_k` and the multipliers solve a
/// 2x2 system.
pub fn solve_bus(input: &BusProxInput) -> Result<BusSolution, BusError> {
    let gen_p_t: Vec<f64> = input.gens.iter().map(|g| g.p + g.lambda_p / g.rho_p).collect();
    let gen_q_t: Vec<f64> = input.gens.iter().map(|g| g.q + g.lambda_q / g.rho_q).collect();
    let flow_p_t: Vec<f64> = input.ends.iter().map(|e| e.p + e.lambda_p / e.rho_p).collect();
    let flow_q_t: Vec<f64> = input.ends.iter().map(|e| e.q + e.lambda_q / e.rho_q).collect();

    let w_weight: f64 = input.ends.iter().map(|e| e.rho_w).sum();
    let has_w = w_weight > 0.0;
    let w_t = if has_w {
        input.ends.iter().map(|e| e.rho_w * e.w + e.lambda_w).sum::<f64>() / w_weight
    } else {
        DETACHED_VOLTAGE
    };

    // Constraint coefficient of w in each balance equation.
    let a_w = -input.g_sh;
    let c_w = input.b_sh;

    let inv_sum = |it: &mut dyn Iterator<Item = f64>| it.map(|r| 1.0 / r).sum::<f64>();
    let mut m_pp = inv_sum(&mut input.gens.iter().map(|g| g.rho_p)) + inv_sum(&mut input.ends.iter().map(|e| e.rho_p));
    let mut m_qq = inv_sum(&mut input.gens.iter().map(|g| g.rho_q)) + inv_sum(&mut input.ends.iter().map(|e| e.rho_q));
    let mut m_pq = 0.0;
    let mut rhs_p = gen_p_t.iter().sum::<f64>() - flow_p_t.iter().sum::<f64>() - input.p_d;
    let mut rhs_q = gen_q_t.iter().sum::<f64>() - flow_q_t.iter().sum::<f64>() - input.q_d;
    if has_w {
        m_pp += a_w * a_w / w_weight;
        m_qq += c_w * c_w / w_weight;
        m_pq += a_w * c_w / w_weight;
    }
    rhs_p += a_w * w_t;
    rhs_q += c_w * w_t;

    let nu = solve_2x2(m_pp, m_pq, m_qq, rhs_p, rhs_q)?;
    let (nu_p, nu_q) = nu;

    let gen_p = input.gens.iter().zip(&gen_p_t).map(|(g, t)| t - nu_p / g.rho_p).collect();
    let gen_q = input.gens.iter().zip(&gen_q_t).map(|(g, t)| t - nu_q / g.rho_q).collect();
    let flow_p = input.ends.iter().zip(&flow_p_t).map(|(e, t)| t + nu_p / e.rho_p).collect();
    let flow_q = input.ends.iter().zip(&flow_q_t).map(|(e, t)| t + nu_q / e.rho_q).collect();
    let w = if has_w { w_t - (nu_p * a_w + nu_q * c_w) / w_weight } else { w_t };
    Ok(BusSolution { gen_p, gen_q, flow_p, flow_q, w, nu })
}

/// Solves the symmetric multiplier system. An equation without variables is
/// dropped when it already holds.
fn solve_2x2(m_pp: f64, m_pq: f64, m_qq: f64, rhs_p: f64, rhs_q: f64) -> Result<(f64, f64), BusError> {
    const EMPTY_TOL: f64 = 1e-12;
    match (m_pp > 0.0, m_qq > 0.0) {
        (true, true) => {
            let det = m_pp * m_qq - m_pq * m_pq;
            if !(det > f64::EPSILON * m_pp * m_qq) {
                return Err(BusError::SingularBusSystem { det });
            }
            Ok(((rhs_p * m_qq - rhs_q * m_pq) / det, (m_pp * rhs_q - m_pq * rhs_p) / det))
        }
        (true, false) if rhs_q.abs() <= EMPTY_TOL => Ok((rhs_p / m_pp, 0.0)),
        (false, true) if rhs_p.abs() <= EMPTY_TOL => Ok((0.0, rhs_q / m_qq)),
        (false, false) if rhs_p.abs() <= EMPTY_TOL && rhs_q.abs() <= EMPTY_TOL => Ok((0.0, 0.0)),
        _ => Err(BusError::SingularBusSystem { det: 0.0 }),
    }
}
