//! Per-unit network model and the consensus layout over it.
//!
//! Every in-service branch contributes two directed ends: its "from" end
//! (the set `L`) and its "to" end (`L_t`). Ends are numbered `0..nl` for the
//! from ends in branch order followed by `nl..2nl` for the to ends.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::case_io::{validate_case, CaseData, ValidationIssue, MAX_ANGLE_BAND_DEG};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("case has fatal validation issues: {}", format_issues(.0))]
    Invalid(Vec<ValidationIssue>),
    #[error("branch row {0} is in service with zero impedance")]
    ZeroImpedanceBranch(usize),
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Serialize)]
pub struct BusModel {
    pub id: i64,
    pub p_d: f64,
    pub q_d: f64,
    pub g_sh: f64,
    pub b_sh: f64,
    /// Squared voltage magnitude bounds.
    pub w_min: f64,
    pub w_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenModel {
    /// Row in the case's generator table.
    pub case_index: usize,
    /// Bus position in [`Network::buses`].
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// $/MW^2h
    pub c2: f64,
    /// $/MWh
    pub c1: f64,
    /// $/h
    pub c0: f64,
    /// MW per p.u.
    pub base: f64,
}

impl GenModel {
    /// Cost in $/h of a p.u. active power output.
    pub fn cost(&self, p_pu: f64) -> f64 {
        let p = p_pu * self.base;
        self.c2 * p * p + self.c1 * p + self.c0
    }
}

/// Lifted-voltage branch coefficients plus the limits the branch owns.
///
/// Flows are affine in `(w_i, w_j, wr, wi)`:
///
/// ```text
/// p_ij = gc_ij w_i - g_ij wr + b_ij wi
/// q_ij = bc_ij w_i - b_ij wr - g_ij wi
/// p_ji = gc_ji w_j - g_ji wr - b_ji wi
/// q_ji = bc_ji w_j - b_ji wr + g_ji wi
/// ```
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchModel {
    pub case_index: usize,
    pub from: usize,
    pub to: usize,
    pub gc_ij: f64,
    pub bc_ij: f64,
    pub g_ij: f64,
    pub b_ij: f64,
    pub gc_ji: f64,
    pub bc_ji: f64,
    pub g_ji: f64,
    pub b_ji: f64,
    /// Apparent power limit in p.u.
    pub s_max: Option<f64>,
    /// `(tan(ang_min), tan(ang_max))` when the band is meaningful.
    pub tan_bounds: Option<(f64, f64)>,
    /// `(w_min, w_max)` of the from bus.
    pub w_from: (f64, f64),
    /// `(w_min, w_max)` of the to bus.
    pub w_to: (f64, f64),
}

/// Flows `[p_ij, q_ij, p_ji, q_ji]` at a lifted voltage point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlows {
    pub p_ij: f64,
    pub q_ij: f64,
    pub p_ji: f64,
    pub q_ji: f64,
}

impl BranchModel {
    /// Builds the coefficients from series impedance, total charging, tap
    /// magnitude and phase shift (radians).
    pub fn from_parameters(r: f64, x: f64, b_charge: f64, tap: f64, shift: f64) -> Self {
        let y = Complex64::new(r, x).inv();
        let t = Complex64::from_polar(tap, shift);
        let half_charge = Complex64::new(0.0, b_charge / 2.0);
        let from_shunt = (y.conj() - half_charge) / t.norm_sqr();
        let from_series = y.conj() / t;
        let to_shunt = y.conj() - half_charge;
        let to_series = y.conj() / t.conj();
        BranchModel {
            case_index: 0,
            from: 0,
            to: 1,
            gc_ij: from_shunt.re,
            bc_ij: from_shunt.im,
            g_ij: from_series.re,
            b_ij: from_series.im,
            gc_ji: to_shunt.re,
            bc_ji: to_shunt.im,
            g_ji: to_series.re,
            b_ji: to_series.im,
            s_max: None,
            tan_bounds: None,
            w_from: (0.81, 1.21),
            w_to: (0.81, 1.21),
        }
    }

    pub fn flows(&self, w_i: f64, w_j: f64, wr: f64, wi: f64) -> BranchFlows {
        BranchFlows {
            p_ij: self.gc_ij * w_i - self.g_ij * wr + self.b_ij * wi,
            q_ij: self.bc_ij * w_i - self.b_ij * wr - self.g_ij * wi,
            p_ji: self.gc_ji * w_j - self.g_ji * wr - self.b_ji * wi,
            q_ji: self.bc_ji * w_j - self.b_ji * wr + self.g_ji * wi,
        }
    }

    /// Rows of the map from `(w_i, w_j, wr, wi)` to the branch-side consensus
    /// variables `[p_ij, q_ij, w_i, p_ji, q_ji, w_j]`.
    pub fn lift_matrix(&self) -> [[f64; 4]; 6] {
        [
            [self.gc_ij, 0.0, -self.g_ij, self.b_ij],
            [self.bc_ij, 0.0, -self.b_ij, -self.g_ij],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, self.gc_ji, -self.g_ji, -self.b_ji],
            [0.0, self.bc_ji, -self.b_ji, self.g_ji],
            [0.0, 1.0, 0.0, 0.0],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EndSide {
    From,
    To,
}

/// One directed branch end as seen from its bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BranchEnd {
    pub branch: usize,
    pub side: EndSide,
}

#[derive(Debug, Clone, Serialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<BusModel>,
    pub gens: Vec<GenModel>,
    pub branches: Vec<BranchModel>,
    /// Generators attached to each bus.
    pub bus_gens: Vec<Vec<usize>>,
    /// End indices attached to each bus, in end order.
    pub bus_ends: Vec<Vec<usize>>,
    /// Buses with no generator, branch, demand or shunt.
    pub isolated_buses: Vec<usize>,
    /// Non-fatal validation findings carried over from the case.
    pub warnings: Vec<ValidationIssue>,
}

impl Network {
    pub fn n_ends(&self) -> usize {
        2 * self.branches.len()
    }

    pub fn end(&self, e: usize) -> BranchEnd {
        let nl = self.branches.len();
        if e < nl {
            BranchEnd { branch: e, side: EndSide::From }
        } else {
            BranchEnd { branch: e - nl, side: EndSide::To }
        }
    }

    pub fn end_bus(&self, e: usize) -> usize {
        let end = self.end(e);
        let br = &self.branches[end.branch];
        match end.side {
            EndSide::From => br.from,
            EndSide::To => br.to,
        }
    }
}

/// Converts a validated case into the per-unit network.
pub fn build_network(case: &CaseData) -> Result<Network, NetworkError> {
    let issues = validate_case(case);
    let (fatal, warnings): (Vec<_>, Vec<_>) = issues.into_iter().partition(|i| i.is_fatal());
    if !fatal.is_empty() {
        return Err(NetworkError::Invalid(fatal));
    }
    let base = case.base_mva;

    let buses: Vec<BusModel> = case
        .buses
        .iter()
        .map(|b| BusModel {
            id: b.id,
            p_d: b.p_demand / base,
            q_d: b.q_demand / base,
            g_sh: b.g_shunt / base,
            b_sh: b.b_shunt / base,
            w_min: b.v_min * b.v_min,
            w_max: b.v_max * b.v_max,
        })
        .collect();
    let bus_index = |id: i64| case.bus_position(id).expect("validated bus reference");

    let gens: Vec<GenModel> = case
        .generators
        .iter()
        .zip(&case.gencosts)
        .enumerate()
        .filter(|(_, (g, _))| g.in_service)
        .map(|(i, (g, c))| GenModel {
            case_index: i,
            bus: bus_index(g.bus),
            p_min: g.p_min / base,
            p_max: g.p_max / base,
            q_min: g.q_min / base,
            q_max: g.q_max / base,
            c2: c.c2,
            c1: c.c1,
            c0: c.c0,
            base,
        })
        .collect();

    let mut branches = Vec::new();
    for (i, br) in case.branches.iter().enumerate().filter(|(_, b)| b.in_service) {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(NetworkError::ZeroImpedanceBranch(i));
        }
        let from = bus_index(br.from);
        let to = bus_index(br.to);
        let mut model = BranchModel::from_parameters(br.r, br.x, br.b_charge, br.tap, br.shift);
        model.case_index = i;
        model.from = from;
        model.to = to;
        model.s_max = (br.rate_a > 0.0).then(|| br.rate_a / base);
        model.tan_bounds = (br.ang_min > -MAX_ANGLE_BAND_DEG && br.ang_max < MAX_ANGLE_BAND_DEG)
            .then(|| (br.ang_min.to_radians().tan(), br.ang_max.to_radians().tan()));
        model.w_from = (buses[from].w_min, buses[from].w_max);
        model.w_to = (buses[to].w_min, buses[to].w_max);
        branches.push(model);
    }

    let mut bus_gens = vec![Vec::new(); buses.len()];
    for (g, gen) in gens.iter().enumerate() {
        bus_gens[gen.bus].push(g);
    }
    let nl = branches.len();
    let mut bus_ends = vec![Vec::new(); buses.len()];
    for e in 0..2 * nl {
        let br = &branches[e % nl];
        let bus = if e < nl { br.from } else { br.to };
        bus_ends[bus].push(e);
    }
    let isolated_buses = (0..buses.len())
        .filter(|&i| {
            let b = &buses[i];
            bus_gens[i].is_empty()
                && bus_ends[i].is_empty()
                && b.p_d == 0.0
                && b.q_d == 0.0
                && b.g_sh == 0.0
                && b.b_sh == 0.0
        })
        .collect::<Vec<_>>();
    for &i in &isolated_buses {
        log::warn!("bus {} is isolated", buses[i].id);
    }

    Ok(Network { base_mva: base, buses, gens, branches, bus_gens, bus_ends, isolated_buses, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConstraintKind {
    GenP,
    GenQ,
    FlowP,
    FlowQ,
    Voltage,
}

impl ConstraintKind {
    pub fn is_voltage(self) -> bool {
        self == ConstraintKind::Voltage
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Owner {
    Generator(usize),
    End(usize),
}

/// One consensus constraint `x[p] = z[z_slot]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Slot {
    pub kind: ConstraintKind,
    pub owner: Owner,
    pub z_slot: usize,
    /// Bus holding the duplicate; local residuals live here.
    pub bus: usize,
}

/// Index spaces of the consensus problem.
///
/// `x` and `lambda` share one index space of size `n_lambda`: all generator
/// `p`, all generator `q`, then `(p, q, w)` for every branch end. `z` holds
/// generator duplicates `(p..., q...)`, then `(p, q)` per branch end, then one
/// squared voltage per bus.
#[derive(Debug, Clone, Serialize)]
pub struct ConsensusLayout {
    pub n_gens: usize,
    pub n_ends: usize,
    pub n_buses: usize,
    pub n_lambda: usize,
    pub n_z: usize,
    pub slots: Vec<Slot>,
    /// The x-slots duplicating each z-slot.
    pub z_to_x: Vec<Vec<usize>>,
}

impl ConsensusLayout {
    pub fn n_x(&self) -> usize {
        self.n_lambda
    }

    pub fn gen_p(&self, g: usize) -> usize {
        g
    }

    pub fn gen_q(&self, g: usize) -> usize {
        self.n_gens + g
    }

    /// `(flow-p, flow-q, voltage)` x-slots of an end.
    pub fn end_slots(&self, e: usize) -> [usize; 3] {
        let base = 2 * self.n_gens + 3 * e;
        [base, base + 1, base + 2]
    }

    pub fn z_gen_p(&self, g: usize) -> usize {
        g
    }

    pub fn z_gen_q(&self, g: usize) -> usize {
        self.n_gens + g
    }

    pub fn z_flow(&self, e: usize) -> [usize; 2] {
        let base = 2 * self.n_gens + 2 * e;
        [base, base + 1]
    }

    pub fn z_voltage(&self, bus: usize) -> usize {
        2 * self.n_gens + 2 * self.n_ends + bus
    }

    /// `(Pz)[p] = z[slot(p).z_slot]`.
    pub fn duplicate(&self, z: &[f64]) -> Vec<f64> {
        self.slots.iter().map(|s| z[s.z_slot]).collect()
    }
}

pub fn build_layout(net: &Network) -> ConsensusLayout {
    let n_gens = net.gens.len();
    let n_ends = net.n_ends();
    let n_buses = net.buses.len();
    let n_lambda = 2 * n_gens + 3 * n_ends;
    let n_z = 2 * n_gens + 2 * n_ends + n_buses;

    let mut slots = Vec::with_capacity(n_lambda);
    for (kind, offset) in [(ConstraintKind::GenP, 0), (ConstraintKind::GenQ, n_gens)] {
        for (g, gen) in net.gens.iter().enumerate() {
            slots.push(Slot { kind, owner: Owner::Generator(g), z_slot: offset + g, bus: gen.bus });
        }
    }
    for e in 0..n_ends {
        let bus = net.end_bus(e);
        let flow = 2 * n_gens + 2 * e;
        let owner = Owner::End(e);
        slots.push(Slot { kind: ConstraintKind::FlowP, owner, z_slot: flow, bus });
        slots.push(Slot { kind: ConstraintKind::FlowQ, owner, z_slot: flow + 1, bus });
        slots.push(Slot { kind: ConstraintKind::Voltage, owner, z_slot: 2 * n_gens + 2 * n_ends + bus, bus });
    }

    let mut z_to_x = vec![Vec::new(); n_z];
    for (p, slot) in slots.iter().enumerate() {
        z_to_x[slot.z_slot].push(p);
    }

    ConsensusLayout { n_gens, n_ends, n_buses, n_lambda, n_z, slots, z_to_x }
}

/// Generation cost in $/h of the generator-side active powers in `x`.
pub fn evaluate_objective(net: &Network, x: &[f64]) -> f64 {
    net.gens.iter().enumerate().map(|(g, gen)| gen.cost(x[g])).sum()
}
