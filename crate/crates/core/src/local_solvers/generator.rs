/// Generator prox data. `p_dup`/`q_dup` are the bus-side duplicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenProxInput {
    pub c2: f64,
    pub c1: f64,
    /// MW per p.u.
    pub base: f64,
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub rho_p: f64,
    pub rho_q: f64,
    pub p_dup: f64,
    pub q_dup: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

/// Minimizes `f(p) + lambda_p p + lambda_q q + rho_p/2 (p - p_dup)^2 +
/// rho_q/2 (q - q_dup)^2` over the generator's box.
///
/// The objective is separable and strictly convex in each coordinate, so the
/// clamped stationary point is exact.
pub fn solve_generator(input: &GenProxInput) -> (f64, f64) {
    let curvature = 2.0 * input.c2 * input.base * input.base + input.rho_p;
    let p = (input.rho_p * input.p_dup - input.lambda_p - input.c1 * input.base) / curvature;
    let q = input.q_dup - input.lambda_q / input.rho_q;
    (p.clamp(input.p_min, input.p_max), q.clamp(input.q_min, input.q_max))
}
