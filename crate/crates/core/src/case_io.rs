//! MATPOWER case parsing, validation and writing.
//!
//! Two encodings are understood. The MATPOWER `.m` subset assigns `baseMVA`
//! and the `bus`, `gen`, `branch` and `gencost` matrices (optionally with an
//! `mpc.` prefix); every other statement is ignored. The line-oriented
//! fixture format carries the same columns, one record per line, prefixed by
//! the matrix name:
//!
//! ```text
//! baseMVA 100
//! bus 1 3 0 0 0 0 1 1 0 230 1 1.1 0.9
//! gen 1 0 0 100 -100 1 100 1 200 0
//! branch 1 2 0.01 0.10 0.0 250 250 250 0 0 1 -30 30
//! gencost 2 0 0 3 0.01 10 0
//! ```
//!
//! Both formats accept `%` comments; the fixture format also accepts `#`.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 13;
const GENCOST_MIN_COLS: usize = 4;

/// Polynomial cost model code.
pub const POLYNOMIAL: u8 = 2;
/// Piecewise-linear cost model code (rejected).
pub const PW_LINEAR: u8 = 1;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: `{matrix}` row has {found} columns, expected {expected}")]
    MalformedMatrix { matrix: &'static str, line: usize, found: usize, expected: usize },
    #[error("missing `{0}` section")]
    MissingSection(&'static str),
    #[error("line {line}: non-numeric token `{token}`")]
    NonNumericToken { line: usize, token: String },
    #[error("gencost row {row}: {reason}")]
    UnsupportedCostModel { row: usize, reason: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: i64,
    pub bus_type: i64,
    /// MW
    pub p_demand: f64,
    /// MVAr
    pub q_demand: f64,
    /// MW consumed at 1 p.u. voltage
    pub g_shunt: f64,
    /// MVAr injected at 1 p.u. voltage
    pub b_shunt: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRecord {
    pub bus: i64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b_charge: f64,
    /// MVA, `0` means unlimited.
    pub rate_a: f64,
    /// Tap ratio magnitude; a file value of `0` is stored as `1`.
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    /// Degrees.
    pub ang_min: f64,
    /// Degrees.
    pub ang_max: f64,
    pub in_service: bool,
}

/// Quadratic generator cost `c2 P^2 + c1 P + c0` with `P` in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub model: u8,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseData {
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub generators: Vec<GenRecord>,
    pub branches: Vec<BranchRecord>,
    pub gencosts: Vec<CostRecord>,
}

impl CaseData {
    pub fn bus_position(&self, id: i64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }
}

/// Reads a case from disk. Files ending in `.m` are parsed as MATPOWER,
/// anything else as the line-oriented fixture format.
pub fn read_case<P: AsRef<Path>>(path: P) -> Result<CaseData, CaseError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
    if path.extension().is_some_and(|e| e == "m") {
        parse_matpower(&text)
    } else {
        parse_structured(&text)
    }
}

#[derive(Default)]
struct RawCase {
    base_mva: Option<f64>,
    bus: Option<Vec<Row>>,
    gen: Option<Vec<Row>>,
    branch: Option<Vec<Row>>,
    gencost: Option<Vec<Row>>,
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

fn parse_number(token: &str, line: usize) -> Result<f64, CaseError> {
    token.parse::<f64>().map_err(|_| CaseError::NonNumericToken { line, token: token.to_string() })
}

fn strip_comment<'a>(line: &'a str, markers: &[char]) -> &'a str {
    match line.find(|c| markers.contains(&c)) {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Parses the MATPOWER `.m` subset.
pub fn parse_matpower(text: &str) -> Result<CaseData, CaseError> {
    // Comments are blanked line by line so that byte offsets keep their line.
    let cleaned: String = text.lines().map(|l| strip_comment(l, &['%'])).collect::<Vec<_>>().join("\n");
    let bytes = cleaned.as_bytes();
    let line_of = |pos: usize| 1 + bytes[..pos].iter().filter(|&&b| b == b'\n').count();

    let mut raw = RawCase::default();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        if !(c.is_ascii_alphabetic() || c == b'_') {
            pos += 1;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || matches!(bytes[pos], b'_' | b'.')) {
            pos += 1;
        }
        let ident = &cleaned[start..pos];
        let name = ident.rsplit('.').next().unwrap_or(ident);
        let mut p = pos;
        while p < bytes.len() && matches!(bytes[p], b' ' | b'\t') {
            p += 1;
        }
        if p >= bytes.len() || bytes[p] != b'=' {
            continue;
        }
        p += 1;
        while p < bytes.len() && bytes[p].is_ascii_whitespace() {
            p += 1;
        }
        if p < bytes.len() && bytes[p] == b'[' {
            let open = p;
            let close = cleaned[open..].find(']').map(|i| open + i).ok_or_else(|| CaseError::Syntax {
                line: line_of(open),
                reason: format!("unterminated matrix `{name}`"),
            })?;
            let body_line = line_of(open);
            let rows = matrix_rows(&cleaned[open + 1..close], body_line)?;
            match name {
                "bus" => raw.bus = Some(rows),
                "gen" => raw.gen = Some(rows),
                "branch" => raw.branch = Some(rows),
                "gencost" => raw.gencost = Some(rows),
                _ => {}
            }
            pos = close + 1;
        } else {
            let end = cleaned[p..].find([';', '\n']).map_or(bytes.len(), |i| p + i);
            if name == "baseMVA" {
                let token = cleaned[p..end].trim();
                raw.base_mva = Some(parse_number(token, line_of(p))?);
            }
            pos = end;
        }
    }
    assemble(raw)
}

fn matrix_rows(body: &str, first_line: usize) -> Result<Vec<Row>, CaseError> {
    let mut rows = Vec::new();
    for (offset, line) in body.split('\n').enumerate() {
        let line_no = first_line + offset;
        for chunk in line.split(';') {
            let tokens: Vec<&str> =
                chunk.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
            if tokens.is_empty() {
                continue;
            }
            let values = tokens.iter().map(|t| parse_number(t, line_no)).collect::<Result<Vec<_>, _>>()?;
            rows.push(Row { line: line_no, values });
        }
    }
    Ok(rows)
}

/// Parses the line-oriented fixture format.
pub fn parse_structured(text: &str) -> Result<CaseData, CaseError> {
    let mut raw = RawCase::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = strip_comment(line, &['%', '#']).trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let key = tokens.next().unwrap_or_default();
        let values = tokens.map(|t| parse_number(t.trim_end_matches(';'), line_no)).collect::<Result<Vec<_>, _>>()?;
        let row = Row { line: line_no, values };
        let target = match key {
            "baseMVA" => {
                if row.values.len() != 1 {
                    return Err(CaseError::Syntax { line: line_no, reason: "baseMVA takes exactly one value".into() });
                }
                raw.base_mva = Some(row.values[0]);
                continue;
            }
            "bus" => &mut raw.bus,
            "gen" => &mut raw.gen,
            "branch" => &mut raw.branch,
            "gencost" => &mut raw.gencost,
            other => return Err(CaseError::Syntax { line: line_no, reason: format!("unknown record kind `{other}`") }),
        };
        target.get_or_insert_with(Vec::new).push(row);
    }
    assemble(raw)
}

fn check_arity(rows: &[Row], matrix: &'static str, min: usize) -> Result<(), CaseError> {
    let width = rows.first().map_or(min, |r| r.values.len());
    for row in rows {
        if row.values.len() < min || row.values.len() != width {
            return Err(CaseError::MalformedMatrix {
                matrix,
                line: row.line,
                found: row.values.len(),
                expected: width.max(min),
            });
        }
    }
    Ok(())
}

fn assemble(raw: RawCase) -> Result<CaseData, CaseError> {
    let base_mva = raw.base_mva.ok_or(CaseError::MissingSection("baseMVA"))?;
    let bus = raw.bus.ok_or(CaseError::MissingSection("bus"))?;
    let gen = raw.gen.ok_or(CaseError::MissingSection("gen"))?;
    let branch = raw.branch.ok_or(CaseError::MissingSection("branch"))?;
    let gencost = raw.gencost.ok_or(CaseError::MissingSection("gencost"))?;

    check_arity(&bus, "bus", BUS_COLS)?;
    check_arity(&gen, "gen", GEN_COLS)?;
    check_arity(&branch, "branch", BRANCH_COLS)?;

    let buses = bus
        .iter()
        .map(|r| {
            let v = &r.values;
            BusRecord {
                id: v[0] as i64,
                bus_type: v[1] as i64,
                p_demand: v[2],
                q_demand: v[3],
                g_shunt: v[4],
                b_shunt: v[5],
                v_max: v[11],
                v_min: v[12],
            }
        })
        .collect();

    let generators = gen
        .iter()
        .map(|r| {
            let v = &r.values;
            GenRecord { bus: v[0] as i64, q_max: v[3], q_min: v[4], in_service: v[7] > 0.0, p_max: v[8], p_min: v[9] }
        })
        .collect();

    let branches = branch
        .iter()
        .map(|r| {
            let v = &r.values;
            BranchRecord {
                from: v[0] as i64,
                to: v[1] as i64,
                r: v[2],
                x: v[3],
                b_charge: v[4],
                rate_a: v[5],
                tap: if v[8] == 0.0 { 1.0 } else { v[8] },
                shift: v[9].to_radians(),
                in_service: v[10] > 0.0,
                ang_min: v[11],
                ang_max: v[12],
            }
        })
        .collect();

    let gencosts = gencost.iter().enumerate().map(|(i, r)| parse_cost_row(i, r)).collect::<Result<Vec<_>, _>>()?;

    Ok(CaseData { base_mva, buses, generators, branches, gencosts })
}

fn parse_cost_row(index: usize, row: &Row) -> Result<CostRecord, CaseError> {
    let v = &row.values;
    if v.len() < GENCOST_MIN_COLS {
        return Err(CaseError::MalformedMatrix {
            matrix: "gencost",
            line: row.line,
            found: v.len(),
            expected: GENCOST_MIN_COLS,
        });
    }
    let model = v[0];
    if model != f64::from(POLYNOMIAL) {
        return Err(CaseError::UnsupportedCostModel {
            row: index,
            reason: if model == f64::from(PW_LINEAR) {
                "piecewise-linear costs are not supported".into()
            } else {
                format!("unknown cost model {model}")
            },
        });
    }
    let n = v[3];
    if n < 0.0 || n.fract() != 0.0 {
        return Err(CaseError::UnsupportedCostModel { row: index, reason: format!("invalid coefficient count {n}") });
    }
    let n = n as usize;
    if v.len() < GENCOST_MIN_COLS + n {
        return Err(CaseError::MalformedMatrix {
            matrix: "gencost",
            line: row.line,
            found: v.len(),
            expected: GENCOST_MIN_COLS + n,
        });
    }
    // Highest degree first.
    let coeffs = &v[GENCOST_MIN_COLS..GENCOST_MIN_COLS + n];
    if n > 3 && coeffs[..n - 3].iter().any(|&c| c != 0.0) {
        return Err(CaseError::UnsupportedCostModel {
            row: index,
            reason: format!("polynomial of degree {} is not quadratic", n - 1),
        });
    }
    let coeff = |degree: usize| if degree < n { coeffs[n - 1 - degree] } else { 0.0 };
    Ok(CostRecord { model: POLYNOMIAL, c2: coeff(2), c1: coeff(1), c0: coeff(0) })
}

/// Serializes a case to the MATPOWER `.m` subset understood by
/// [`parse_matpower`]. Numbers use Rust's shortest round-trip formatting.
pub fn write_matpower(case: &CaseData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = case_export");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", case.base_mva);
    let _ = writeln!(out, "\n%% bus data\nmpc.bus = [");
    for b in &case.buses {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t0\t1\t{}\t{};",
            b.id, b.bus_type, b.p_demand, b.q_demand, b.g_shunt, b.b_shunt, b.v_max, b.v_min
        );
    }
    let _ = writeln!(out, "];\n\n%% generator data\nmpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t{}\t{}\t{};",
            g.bus,
            g.q_max,
            g.q_min,
            case.base_mva,
            u8::from(g.in_service),
            g.p_max,
            g.p_min
        );
    }
    let _ = writeln!(out, "];\n\n%% branch data\nmpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b_charge,
            br.rate_a,
            br.rate_a,
            br.rate_a,
            br.tap,
            br.shift.to_degrees(),
            u8::from(br.in_service),
            br.ang_min,
            br.ang_max
        );
    }
    let _ = writeln!(out, "];\n\n%% generator cost data\nmpc.gencost = [");
    for c in &case.gencosts {
        let _ = writeln!(out, "\t{}\t0\t0\t3\t{}\t{}\t{};", c.model, c.c2, c.c1, c.c0);
    }
    let _ = writeln!(out, "];");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RecordRef {
    Case,
    Bus(usize),
    Generator(usize),
    Branch(usize),
    GenCost(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rule {
    NonPositiveBaseMva,
    DuplicateBusId,
    NonPositiveVoltageBound,
    VoltageBoundsInverted,
    DanglingGeneratorBus,
    DanglingBranchBus,
    ActiveBoundsInverted,
    ReactiveBoundsInverted,
    ZeroImpedanceBranch,
    AngleBoundsInverted,
    AngleBandIgnored,
    NegativeRating,
    NonPositiveTap,
    CostCountMismatch,
    NonConvexCost,
    NoInServiceGenerator,
    NonFiniteValue,
}

impl Rule {
    pub fn description(self) -> &'static str {
        match self {
            Rule::NonPositiveBaseMva => "non-positive system base",
            Rule::DuplicateBusId => "duplicate bus id",
            Rule::NonPositiveVoltageBound => "non-positive voltage bound",
            Rule::VoltageBoundsInverted => "voltage bounds inverted",
            Rule::DanglingGeneratorBus => "dangling generator bus reference",
            Rule::DanglingBranchBus => "dangling branch bus reference",
            Rule::ActiveBoundsInverted => "active power bounds inverted",
            Rule::ReactiveBoundsInverted => "reactive power bounds inverted",
            Rule::ZeroImpedanceBranch => "zero-impedance in-service branch",
            Rule::AngleBoundsInverted => "angle difference bounds inverted",
            Rule::AngleBandIgnored => "angle difference band not within (-89.9, 89.9) degrees, constraint dropped",
            Rule::NegativeRating => "negative thermal rating",
            Rule::NonPositiveTap => "non-positive tap ratio",
            Rule::CostCountMismatch => "gencost rows do not match generator rows",
            Rule::NonConvexCost => "negative quadratic cost coefficient",
            Rule::NoInServiceGenerator => "no in-service generator",
            Rule::NonFiniteValue => "non-finite value",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            Rule::AngleBandIgnored => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub record: RecordRef,
    pub rule: Rule,
}

impl ValidationIssue {
    pub fn is_fatal(&self) -> bool {
        self.rule.severity() == Severity::Error
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.record {
            RecordRef::Case => write!(f, "case: {}", self.rule.description()),
            RecordRef::Bus(i) => write!(f, "bus row {}: {}", i + 1, self.rule.description()),
            RecordRef::Generator(i) => write!(f, "gen row {}: {}", i + 1, self.rule.description()),
            RecordRef::Branch(i) => write!(f, "branch row {}: {}", i + 1, self.rule.description()),
            RecordRef::GenCost(i) => write!(f, "gencost row {}: {}", i + 1, self.rule.description()),
        }
    }
}

/// Angle bands at or beyond this magnitude (degrees) are treated as absent.
pub const MAX_ANGLE_BAND_DEG: f64 = 89.9;

pub fn validate_case(case: &CaseData) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut push = |record, rule| issues.push(ValidationIssue { record, rule });

    if !(case.base_mva > 0.0) {
        push(RecordRef::Case, Rule::NonPositiveBaseMva);
    }

    for (i, b) in case.buses.iter().enumerate() {
        let values = [b.p_demand, b.q_demand, b.g_shunt, b.b_shunt, b.v_min, b.v_max];
        if values.iter().any(|v| !v.is_finite()) {
            push(RecordRef::Bus(i), Rule::NonFiniteValue);
        }
        if case.buses[..i].iter().any(|o| o.id == b.id) {
            push(RecordRef::Bus(i), Rule::DuplicateBusId);
        }
        if !(b.v_min > 0.0) {
            push(RecordRef::Bus(i), Rule::NonPositiveVoltageBound);
        }
        if b.v_min > b.v_max {
            push(RecordRef::Bus(i), Rule::VoltageBoundsInverted);
        }
    }

    for (i, g) in case.generators.iter().enumerate() {
        if [g.p_min, g.p_max, g.q_min, g.q_max].iter().any(|v| !v.is_finite()) {
            push(RecordRef::Generator(i), Rule::NonFiniteValue);
        }
        if case.bus_position(g.bus).is_none() {
            push(RecordRef::Generator(i), Rule::DanglingGeneratorBus);
        }
        if g.p_min > g.p_max {
            push(RecordRef::Generator(i), Rule::ActiveBoundsInverted);
        }
        if g.q_min > g.q_max {
            push(RecordRef::Generator(i), Rule::ReactiveBoundsInverted);
        }
    }
    if !case.generators.iter().any(|g| g.in_service) {
        push(RecordRef::Case, Rule::NoInServiceGenerator);
    }

    for (i, br) in case.branches.iter().enumerate() {
        let values = [br.r, br.x, br.b_charge, br.rate_a, br.tap, br.shift, br.ang_min, br.ang_max];
        if values.iter().any(|v| !v.is_finite()) {
            push(RecordRef::Branch(i), Rule::NonFiniteValue);
        }
        if case.bus_position(br.from).is_none() || case.bus_position(br.to).is_none() {
            push(RecordRef::Branch(i), Rule::DanglingBranchBus);
        }
        if br.in_service && br.r * br.r + br.x * br.x == 0.0 {
            push(RecordRef::Branch(i), Rule::ZeroImpedanceBranch);
        }
        if br.ang_min > br.ang_max {
            push(RecordRef::Branch(i), Rule::AngleBoundsInverted);
        } else if br.in_service
            && !(br.ang_min <= -MAX_ANGLE_BAND_DEG && br.ang_max >= MAX_ANGLE_BAND_DEG)
            && (br.ang_min <= -MAX_ANGLE_BAND_DEG || br.ang_max >= MAX_ANGLE_BAND_DEG)
        {
            // Partially open band: one side is meaningful, the other is not.
            push(RecordRef::Branch(i), Rule::AngleBandIgnored);
        }
        if br.rate_a < 0.0 {
            push(RecordRef::Branch(i), Rule::NegativeRating);
        }
        if !(br.tap > 0.0) {
            push(RecordRef::Branch(i), Rule::NonPositiveTap);
        }
    }

    if case.gencosts.len() != case.generators.len() {
        push(RecordRef::Case, Rule::CostCountMismatch);
    }
    for (i, c) in case.gencosts.iter().enumerate() {
        if [c.c2, c.c1, c.c0].iter().any(|v| !v.is_finite()) {
            push(RecordRef::GenCost(i), Rule::NonFiniteValue);
        }
        if c.c2 < 0.0 {
            push(RecordRef::GenCost(i), Rule::NonConvexCost);
        }
    }
    issues
}
