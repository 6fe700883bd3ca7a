//! Binary quadratic (QUBO) formulation of contiguous regionalization.
//!
//! Variables come in three blocks: one-hot assignment bits `x_{ik}` (area
//! `i` takes region `k`), binary flow bits encoding each directed edge's
//! flow value, and link bits `u_{e,k}` that stand for "both endpoints of
//! edge `e` sit in region `k`". Flow balance forces every region to span a
//! connected flow network rooted at its seed; the link bits gate flow off
//! boundary edges. At any energy minimum the links equal the assignment
//! products, every balance holds, and the energy equals the partition's
//! heterogeneity exactly.

use crate::dqm::{DqmModel, DqmVarKind, ModelError, PenaltyConfig, Seeds};
use crate::instance::{Assignment, Instance};
use crate::verify::{check_contiguity, FlowConfig};
use std::collections::BTreeMap;
use std::sync::OnceLock;

/// A plain binary quadratic model: linear vector, upper-triangular
/// quadratic coefficients, and a constant offset.
#[derive(Debug, Clone, Default)]
pub struct Qubo {
    /// Number of binary variables.
    pub num_vars: usize,
    /// Linear coefficient per variable.
    pub linear: Vec<f64>,
    /// Quadratic coefficients keyed `(i, j)` with `i < j`.
    pub quadratic: BTreeMap<(u32, u32), f64>,
    /// Constant energy shift.
    pub offset: f64,
    adjacency: OnceLock<Vec<Vec<(u32, f64)>>>,
}

impl Qubo {
    /// A model from parts. Keys are normalized to the upper triangle;
    /// diagonal entries fold into the linear part (bits are idempotent).
    pub fn new(
        num_vars: usize,
        linear: Vec<f64>,
        quadratic: BTreeMap<(u32, u32), f64>,
        offset: f64,
    ) -> Self {
        assert_eq!(linear.len(), num_vars, "one linear coefficient per variable");
        let mut model = Self {
            num_vars,
            linear,
            quadratic: BTreeMap::new(),
            offset,
            adjacency: OnceLock::new(),
        };
        for ((i, j), q) in quadratic {
            model.add_quadratic(i, j, q);
        }
        model
    }

    /// An all-zero model over `num_vars` variables.
    pub fn zeroed(num_vars: usize) -> Self {
        Self {
            num_vars,
            linear: vec![0.0; num_vars],
            quadratic: BTreeMap::new(),
            offset: 0.0,
            adjacency: OnceLock::new(),
        }
    }

    /// Adds to a linear coefficient.
    pub fn add_linear(&mut self, var: u32, value: f64) {
        self.linear[var as usize] += value;
        self.adjacency.take();
    }

    /// Adds to a quadratic coefficient; orientation-insensitive, and a
    /// diagonal pair folds into the linear part.
    pub fn add_quadratic(&mut self, i: u32, j: u32, value: f64) {
        if i == j {
            self.linear[i as usize] += value;
        } else {
            *self.quadratic.entry((i.min(j), i.max(j))).or_insert(0.0) += value;
        }
        self.adjacency.take();
    }

    /// Number of stored quadratic coefficients.
    pub fn num_interactions(&self) -> usize {
        self.quadratic.len()
    }

    fn adjacency(&self) -> &Vec<Vec<(u32, f64)>> {
        self.adjacency.get_or_init(|| {
            let mut adj = vec![Vec::new(); self.num_vars];
            for (&(i, j), &q) in &self.quadratic {
                adj[i as usize].push((j, q));
                adj[j as usize].push((i, q));
            }
            adj
        })
    }

    /// Full energy of a bit vector.
    pub fn evaluate(&self, bits: &[bool]) -> f64 {
        assert_eq!(
            bits.len(),
            self.num_vars,
            "bit vector length {} does not match {} variables",
            bits.len(),
            self.num_vars
        );
        let mut energy = self.offset;
        for (i, &bit) in bits.iter().enumerate() {
            if bit {
                energy += self.linear[i];
            }
        }
        for (&(i, j), &q) in &self.quadratic {
            if bits[i as usize] && bits[j as usize] {
                energy += q;
            }
        }
        energy
    }

    /// Energy change from flipping one bit, in O(degree of that variable).
    pub fn flip_delta(&self, bits: &[bool], var: usize) -> f64 {
        let mut field = self.linear[var];
        for &(other, coeff) in &self.adjacency()[var] {
            if bits[other as usize] {
                field += coeff;
            }
        }
        if bits[var] {
            -field
        } else {
            field
        }
    }

    /// Coordinate text export: a `# vars=<N> offset=<c>` header, then one
    /// sorted `i j coeff` line per nonzero coefficient (`i = j` for linear
    /// terms). Byte-identical across runs for identical models.
    pub fn to_coordinate_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "# vars={} offset={}", self.num_vars, self.offset).unwrap();
        for i in 0..self.num_vars as u32 {
            if self.linear[i as usize] != 0.0 {
                writeln!(out, "{i} {i} {}", self.linear[i as usize]).unwrap();
            }
            for (&(_, j), &q) in self.quadratic.range((i, i)..(i, u32::MAX)) {
                if q != 0.0 {
                    writeln!(out, "{i} {j} {q}").unwrap();
                }
            }
        }
        out
    }

    /// Affine spin-model view of the same energy: with `s = 2x - 1`,
    /// `E(x) = offset' + sum h_i s_i + sum J_ij s_i s_j`.
    pub fn to_ising(&self) -> Ising {
        let mut h = vec![0.0; self.num_vars];
        let mut couplings = BTreeMap::new();
        let mut offset = self.offset;
        for (i, &l) in self.linear.iter().enumerate() {
            h[i] += l / 2.0;
            offset += l / 2.0;
        }
        for (&(i, j), &q) in &self.quadratic {
            couplings.insert((i, j), q / 4.0);
            h[i as usize] += q / 4.0;
            h[j as usize] += q / 4.0;
            offset += q / 4.0;
        }
        Ising {
            h,
            couplings,
            offset,
        }
    }
}

/// Spin (±1) form of a binary model; see [`Qubo::to_ising`].
#[derive(Debug, Clone)]
pub struct Ising {
    /// Field per spin.
    pub h: Vec<f64>,
    /// Couplings keyed `(i, j)` with `i < j`.
    pub couplings: BTreeMap<(u32, u32), f64>,
    /// Constant shift.
    pub offset: f64,
}

impl Ising {
    /// Energy of a spin vector (entries ±1).
    pub fn evaluate(&self, spins: &[i8]) -> f64 {
        let mut energy = self.offset;
        for (i, &s) in spins.iter().enumerate() {
            energy += self.h[i] * s as f64;
        }
        for (&(i, j), &c) in &self.couplings {
            energy += c * (spins[i as usize] as f64) * (spins[j as usize] as f64);
        }
        energy
    }
}

/// What one binary variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// `x_{ik}`: area `area` assigned to region `region`.
    Assign { area: usize, region: usize },
    /// Bit `bit` of directed edge `edge`'s flow value.
    FlowBit { edge: usize, bit: u32 },
    /// `u_{e,k}`: both endpoints of directed edge `edge` in region
    /// `region` (in transcribed discrete models: the edge's gap variable
    /// one-hot case).
    Link { edge: usize, region: usize },
}

/// Index arithmetic for the three variable blocks:
/// assignments, then flow bits, then links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableRegistry {
    pub num_areas: usize,
    pub p: usize,
    pub num_edges: usize,
    pub flow_bits: u32,
}

impl VariableRegistry {
    /// Registry for explicit block sizes.
    pub fn new(num_areas: usize, p: usize, num_edges: usize, flow_bits: u32) -> Self {
        let reg = Self {
            num_areas,
            p,
            num_edges,
            flow_bits,
        };
        assert!(reg.num_vars() < u32::MAX as usize, "variable space overflow");
        reg
    }

    /// Registry sized for an instance under a penalty configuration.
    pub fn for_instance(instance: &Instance, penalty: &PenaltyConfig) -> Self {
        Self::new(
            instance.num_areas(),
            instance.p(),
            instance.num_directed_edges(),
            penalty.l,
        )
    }

    /// Total variable count: `n*p + |E|*L + |E|*p`.
    pub fn num_vars(&self) -> usize {
        self.num_areas * self.p
            + self.num_edges * self.flow_bits as usize
            + self.num_edges * self.p
    }

    /// Assignment bit `x_{area,region}`.
    pub fn assign(&self, area: usize, region: usize) -> u32 {
        debug_assert!(area < self.num_areas && region < self.p);
        (area * self.p + region) as u32
    }

    /// Flow bit `bit` of directed edge `edge`.
    pub fn flow_bit(&self, edge: usize, bit: u32) -> u32 {
        debug_assert!(edge < self.num_edges && bit < self.flow_bits);
        (self.num_areas * self.p + edge * self.flow_bits as usize + bit as usize) as u32
    }

    /// Link bit `u_{edge,region}`.
    pub fn link(&self, edge: usize, region: usize) -> u32 {
        debug_assert!(edge < self.num_edges && region < self.p);
        (self.num_areas * self.p
            + self.num_edges * self.flow_bits as usize
            + edge * self.p
            + region) as u32
    }

    /// Decodes a variable id into its meaning.
    pub fn kind(&self, var: u32) -> VarKind {
        let var = var as usize;
        let assign_end = self.num_areas * self.p;
        let flow_end = assign_end + self.num_edges * self.flow_bits as usize;
        if var < assign_end {
            VarKind::Assign {
                area: var / self.p,
                region: var % self.p,
            }
        } else if var < flow_end {
            let rel = var - assign_end;
            VarKind::FlowBit {
                edge: rel / self.flow_bits as usize,
                bit: (rel % self.flow_bits as usize) as u32,
            }
        } else {
            let rel = var - flow_end;
            VarKind::Link {
                edge: rel / self.p,
                region: rel % self.p,
            }
        }
    }
}

/// A built binary model plus the registry and roots needed to interpret
/// its bits. Immutable after build; evaluation and decoding are read-only.
#[derive(Debug, Clone)]
pub struct QuboModel {
    pub qubo: Qubo,
    pub registry: VariableRegistry,
    pub roots: Seeds,
    pub penalty: PenaltyConfig,
}

/// Constraint-group diagnostics of one decoded bit vector. Violations are
/// data, not errors.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// Areas whose assignment row is not exactly one-hot.
    pub one_hot_violations: Vec<usize>,
    /// `(edge, region)` pairs whose link bit differs from the product of
    /// its endpoint assignment bits.
    pub link_violations: Vec<(usize, usize)>,
    /// Nonzero flow-balance residuals by area (net inflow minus target).
    pub conservation_residuals: BTreeMap<usize, i64>,
    /// Whether every decoded region is nonempty and connected.
    pub contiguous: bool,
}

impl FeasibilityReport {
    /// True when every constraint group is clean.
    pub fn feasible(&self) -> bool {
        self.one_hot_violations.is_empty()
            && self.link_violations.is_empty()
            && self.conservation_residuals.is_empty()
            && self.contiguous
    }
}

impl QuboModel {
    /// Honest bit encoding of an assignment plus flows: one-hot labels,
    /// binary flow values, links set to assignment products.
    pub fn encode(
        &self,
        instance: &Instance,
        assignment: &Assignment,
        flows: &FlowConfig,
    ) -> Result<Vec<bool>, ModelError> {
        let reg = &self.registry;
        let p = reg.p;
        let mut bits = vec![false; reg.num_vars()];
        for area in 0..reg.num_areas {
            let label = assignment.label(area);
            if label >= p {
                return Err(ModelError::LabelOutOfRange { area, label, p });
            }
            bits[reg.assign(area, label) as usize] = true;
        }
        let max = (1u64 << reg.flow_bits) - 1;
        for (e, &(from, to)) in instance.directed_edges().iter().enumerate() {
            let value = flows.get(from, to);
            if value > max {
                return Err(ModelError::FlowTooLarge {
                    from,
                    to,
                    value,
                    max,
                });
            }
            for bit in 0..reg.flow_bits {
                if (value >> bit) & 1 == 1 {
                    bits[reg.flow_bit(e, bit) as usize] = true;
                }
            }
            let k = assignment.label(from);
            if k == assignment.label(to) {
                bits[reg.link(e, k) as usize] = true;
            }
        }
        Ok(bits)
    }

    /// Region labels read off the assignment block: the lowest set region
    /// bit of each area, or region 0 when no bit is set.
    pub fn decode_assignment(&self, bits: &[bool]) -> Assignment {
        let reg = &self.registry;
        let labels = (0..reg.num_areas)
            .map(|area| {
                (0..reg.p)
                    .find(|&k| bits[reg.assign(area, k) as usize])
                    .unwrap_or(0)
            })
            .collect();
        Assignment::new(labels)
    }

    /// Flow values read off the flow-bit block.
    pub fn decode_flows(&self, instance: &Instance, bits: &[bool]) -> FlowConfig {
        let reg = &self.registry;
        let mut flows = FlowConfig::new();
        for (e, &(from, to)) in instance.directed_edges().iter().enumerate() {
            let mut value = 0u64;
            for bit in 0..reg.flow_bits {
                if bits[reg.flow_bit(e, bit) as usize] {
                    value |= 1 << bit;
                }
            }
            flows.set(from, to, value);
        }
        flows
    }

    /// Decodes bits into an assignment, flows, and a feasibility report.
    pub fn decode(
        &self,
        instance: &Instance,
        bits: &[bool],
    ) -> (Assignment, FlowConfig, FeasibilityReport) {
        let reg = &self.registry;
        let assignment = self.decode_assignment(bits);
        let flows = self.decode_flows(instance, bits);
        let one_hot_violations = (0..reg.num_areas)
            .filter(|&area| {
                (0..reg.p)
                    .filter(|&k| bits[reg.assign(area, k) as usize])
                    .count()
                    != 1
            })
            .collect();
        let mut link_violations = Vec::new();
        for (e, &(from, to)) in instance.directed_edges().iter().enumerate() {
            for k in 0..reg.p {
                let product =
                    bits[reg.assign(from, k) as usize] && bits[reg.assign(to, k) as usize];
                if bits[reg.link(e, k) as usize] != product {
                    link_violations.push((e, k));
                }
            }
        }
        let sizes = assignment.region_sizes(reg.p);
        let mut conservation_residuals = BTreeMap::new();
        for area in 0..reg.num_areas {
            let net = flows.net_inflow(instance, area);
            let residual = match self.roots.region_of_root(area) {
                // Root target: net outflow of region size minus one.
                Some(region) => -net - (sizes[region] as i64 - 1),
                None => net - 1,
            };
            if residual != 0 {
                conservation_residuals.insert(area, residual);
            }
        }
        let contiguous = check_contiguity(instance, &assignment).all_connected();
        (
            assignment,
            flows,
            FeasibilityReport {
                one_hot_violations,
                link_violations,
                conservation_residuals,
                contiguous,
            },
        )
    }
}

/// Full model energy of a bit vector.
pub fn evaluate_qubo(model: &QuboModel, bits: &[bool]) -> f64 {
    model.qubo.evaluate(bits)
}

/// Decodes bits into an assignment, flows, and a feasibility report.
pub fn decode(
    model: &QuboModel,
    bits: &[bool],
    instance: &Instance,
) -> (Assignment, FlowConfig, FeasibilityReport) {
    model.decode(instance, bits)
}

/// Adds `scale * (sum_t coef_t * bit_t + constant)^2`, using bit
/// idempotence for the squares.
fn add_squared_bits(qubo: &mut Qubo, terms: &[(u32, f64)], constant: f64, scale: f64) {
    qubo.offset += scale * constant * constant;
    for &(var, coef) in terms {
        qubo.add_linear(var, scale * (coef * coef + 2.0 * constant * coef));
    }
    for (t, &(var_t, coef_t)) in terms.iter().enumerate() {
        for &(var_s, coef_s) in &terms[t + 1..] {
            qubo.add_quadratic(var_t, var_s, scale * 2.0 * coef_t * coef_s);
        }
    }
}

/// Builds the binary model of an instance.
///
/// Root labels are substituted as constants inside every structural term,
/// and the root assignment bits themselves are pinned by a strong linear
/// term — the variable block keeps its full `n*p` shape so exports and
/// indices stay uniform.
pub fn build_qubo(
    instance: &Instance,
    seeds: &Seeds,
    penalty: &PenaltyConfig,
) -> Result<QuboModel, ModelError> {
    penalty.validate(instance)?;
    seeds.check_range(instance.num_areas())?;
    if seeds.roots().len() != instance.p() {
        return Err(ModelError::RootCount {
            expected: instance.p(),
            got: seeds.roots().len(),
        });
    }
    let n = instance.num_areas();
    let p = instance.p();
    let reg = VariableRegistry::for_instance(instance, penalty);
    let mut qubo = Qubo::zeroed(reg.num_vars());
    let mut pinned: Vec<Option<usize>> = vec![None; n];
    for (region, &root) in seeds.roots().iter().enumerate() {
        pinned[root] = Some(region);
    }

    // Objective: within-region dissimilarity over all area pairs.
    for i in 0..n {
        for j in (i + 1)..n {
            let w = instance.weight(i, j);
            if w == 0.0 {
                continue;
            }
            match (pinned[i], pinned[j]) {
                (Some(ki), Some(kj)) => {
                    if ki == kj {
                        qubo.offset += w;
                    }
                }
                (Some(ki), None) => qubo.add_linear(reg.assign(j, ki), w),
                (None, Some(kj)) => qubo.add_linear(reg.assign(i, kj), w),
                (None, None) => {
                    for k in 0..p {
                        qubo.add_quadratic(reg.assign(i, k), reg.assign(j, k), w);
                    }
                }
            }
        }
    }

    // Exactly one region per free area.
    for i in 0..n {
        if pinned[i].is_some() {
            continue;
        }
        let terms: Vec<(u32, f64)> = (0..p).map(|k| (reg.assign(i, k), 1.0)).collect();
        add_squared_bits(&mut qubo, &terms, -1.0, penalty.lambda1);
    }

    // Pin each root's assignment row onto its own region.
    for (region, &root) in seeds.roots().iter().enumerate() {
        qubo.offset += 10.0 * penalty.lambda1;
        for k in 0..p {
            let sign = if k == region { -1.0 } else { 1.0 };
            qubo.add_linear(reg.assign(root, k), sign * 10.0 * penalty.lambda1);
        }
    }

    // Flow-link gating per directed edge: flow is free exactly when some
    // link bit is set, link bits are priced to equal the assignment
    // products, and simultaneous link bits on one edge are surcharged so
    // that over-linking can never pay for itself at any encodable flow.
    let flow_max = (1u64 << penalty.l) - 1;
    for (e, &(i, j)) in instance.directed_edges().iter().enumerate() {
        for bit in 0..penalty.l {
            let weight = (1u64 << bit) as f64;
            qubo.add_linear(reg.flow_bit(e, bit), penalty.lambda2 * weight);
            for k in 0..p {
                qubo.add_quadratic(
                    reg.flow_bit(e, bit),
                    reg.link(e, k),
                    -penalty.lambda2 * weight,
                );
            }
        }
        for k in 0..p {
            let u = reg.link(e, k);
            match (pinned[i], pinned[j]) {
                (None, None) => {
                    qubo.add_quadratic(reg.assign(i, k), reg.assign(j, k), penalty.lambda2);
                    qubo.add_quadratic(reg.assign(i, k), u, -2.0 * penalty.lambda2);
                    qubo.add_quadratic(reg.assign(j, k), u, -2.0 * penalty.lambda2);
                    qubo.add_linear(u, 3.0 * penalty.lambda2);
                }
                (Some(ki), None) => {
                    let c = (ki == k) as u8 as f64;
                    if c == 1.0 {
                        qubo.add_linear(reg.assign(j, k), penalty.lambda2);
                    }
                    qubo.add_quadratic(reg.assign(j, k), u, -2.0 * penalty.lambda2);
                    qubo.add_linear(u, penalty.lambda2 * (3.0 - 2.0 * c));
                }
                (None, Some(kj)) => {
                    let c = (kj == k) as u8 as f64;
                    if c == 1.0 {
                        qubo.add_linear(reg.assign(i, k), penalty.lambda2);
                    }
                    qubo.add_quadratic(reg.assign(i, k), u, -2.0 * penalty.lambda2);
                    qubo.add_linear(u, penalty.lambda2 * (3.0 - 2.0 * c));
                }
                (Some(ki), Some(kj)) => {
                    let ci = (ki == k) as u8 as f64;
                    let cj = (kj == k) as u8 as f64;
                    qubo.offset += penalty.lambda2 * ci * cj;
                    qubo.add_linear(u, penalty.lambda2 * (3.0 - 2.0 * ci - 2.0 * cj));
                }
            }
        }
        if flow_max > 0 {
            for k in 0..p {
                for k2 in (k + 1)..p {
                    qubo.add_quadratic(
                        reg.link(e, k),
                        reg.link(e, k2),
                        penalty.lambda2 * flow_max as f64,
                    );
                }
            }
        }
    }

    // Non-root flow balance: net inflow of one unit.
    for i in 0..n {
        if pinned[i].is_some() {
            continue;
        }
        let mut terms = Vec::new();
        for &j in instance.neighbors(i) {
            let e_in = instance.edge_id(j, i).unwrap();
            let e_out = instance.edge_id(i, j).unwrap();
            for bit in 0..penalty.l {
                let weight = (1u64 << bit) as f64;
                terms.push((reg.flow_bit(e_in, bit), weight));
                terms.push((reg.flow_bit(e_out, bit), -weight));
            }
        }
        add_squared_bits(&mut qubo, &terms, -1.0, penalty.lambda3);
    }

    // Root flow balance: net outflow of the region population minus one;
    // the root's own pinned membership cancels the constant.
    for (region, &root) in seeds.roots().iter().enumerate() {
        let mut terms = Vec::new();
        for &j in instance.neighbors(root) {
            let e_out = instance.edge_id(root, j).unwrap();
            let e_in = instance.edge_id(j, root).unwrap();
            for bit in 0..penalty.l {
                let weight = (1u64 << bit) as f64;
                terms.push((reg.flow_bit(e_out, bit), weight));
                terms.push((reg.flow_bit(e_in, bit), -weight));
            }
        }
        for i in 0..n {
            if pinned[i].is_none() {
                terms.push((reg.assign(i, region), -1.0));
            }
        }
        add_squared_bits(&mut qubo, &terms, 0.0, penalty.lambda4);
    }

    Ok(QuboModel {
        qubo,
        registry: reg,
        roots: seeds.clone(),
        penalty: penalty.clone(),
    })
}

/// Exact affine fit `alpha*phi^2 + beta*phi + gamma` over consecutive
/// integer cases, or `None` when the values do not fit.
fn fit_flow_column(values: &[f64]) -> Option<(f64, f64, f64)> {
    let gamma = values[0];
    let (alpha, beta) = match values.len() {
        1 => (0.0, 0.0),
        2 => (0.0, values[1] - gamma),
        _ => {
            let alpha = (values[2] - 2.0 * values[1] + gamma) / 2.0;
            (alpha, values[1] - gamma - alpha)
        }
    };
    let tol = 1e-9 * (1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for (case, &v) in values.iter().enumerate() {
        let phi = case as f64;
        if (alpha * phi * phi + beta * phi + gamma - v).abs() > tol {
            return None;
        }
    }
    Some((alpha, beta, gamma))
}

/// Adds `alpha*phi^2 + beta*phi + gamma` for the binary-encoded flow of
/// `edge`, optionally multiplied by one gating bit.
fn add_flow_poly(
    qubo: &mut Qubo,
    reg: &VariableRegistry,
    edge: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    gate: Option<u32>,
) {
    match gate {
        Some(g) => {
            qubo.add_linear(g, gamma);
            for bit in 0..reg.flow_bits {
                let w = (1u64 << bit) as f64;
                qubo.add_quadratic(reg.flow_bit(edge, bit), g, alpha * w * w + beta * w);
            }
            // A gated quadratic flow term would need cubic interactions.
            assert_eq!(alpha, 0.0, "gated flow terms must be affine");
        }
        None => {
            qubo.offset += gamma;
            for bit in 0..reg.flow_bits {
                let w = (1u64 << bit) as f64;
                qubo.add_linear(reg.flow_bit(edge, bit), alpha * w * w + beta * w);
            }
            for b1 in 0..reg.flow_bits {
                for b2 in (b1 + 1)..reg.flow_bits {
                    let w = ((1u64 << b1) * (1u64 << b2)) as f64;
                    qubo.add_quadratic(
                        reg.flow_bit(edge, b1),
                        reg.flow_bit(edge, b2),
                        2.0 * alpha * w,
                    );
                }
            }
        }
    }
}

/// Transcribes a discrete model into binary form.
///
/// Label and gap variables become one-hot bit groups (backed by a one-hot
/// penalty at weight `lambda1`); flow variables become binary bit strings
/// over the same value range, extended past `m` up to `2^l - 1` by the
/// fitted polynomials. On every case-feasible configuration the energies
/// of the two models agree. `seeds` are carried through for decoding.
pub fn dqm_to_qubo(dqm: &DqmModel, seeds: &Seeds) -> Result<QuboModel, ModelError> {
    let num_areas = dqm
        .vars
        .iter()
        .filter(|v| matches!(v.kind, DqmVarKind::Area { .. }))
        .count();
    let num_edges = dqm
        .vars
        .iter()
        .filter(|v| matches!(v.kind, DqmVarKind::Flow { .. }))
        .count();
    let p = dqm
        .vars
        .iter()
        .find(|v| matches!(v.kind, DqmVarKind::Area { .. }))
        .map_or(1, |v| v.num_cases);
    let reg = VariableRegistry::new(num_areas, p, num_edges, dqm.penalty.l);
    let mut qubo = Qubo::zeroed(reg.num_vars());
    qubo.offset = dqm.offset;

    // Bit of one case of a one-hot (label or gap) variable.
    let case_bit = |kind: DqmVarKind, case: usize| -> u32 {
        match kind {
            DqmVarKind::Area { area } => reg.assign(area, case),
            DqmVarKind::Gap { edge } => reg.link(edge, case),
            DqmVarKind::Flow { .. } => unreachable!("flow variables are binary-encoded"),
        }
    };
    let is_flow = |v: usize| matches!(dqm.vars[v].kind, DqmVarKind::Flow { .. });
    let flow_edge = |v: usize| match dqm.vars[v].kind {
        DqmVarKind::Flow { edge } => edge,
        _ => unreachable!(),
    };

    for (v, biases) in dqm.linear.iter().enumerate() {
        if is_flow(v) {
            let (alpha, beta, gamma) =
                fit_flow_column(biases).ok_or(ModelError::TranscodeMisfit { v, w: v })?;
            add_flow_poly(&mut qubo, &reg, flow_edge(v), alpha, beta, gamma, None);
        } else {
            for (case, &bias) in biases.iter().enumerate() {
                if bias != 0.0 {
                    qubo.add_linear(case_bit(dqm.vars[v].kind, case), bias);
                }
            }
        }
    }

    for (&(v, w), table) in &dqm.quadratic {
        let (cv, cw) = (dqm.vars[v].num_cases, dqm.vars[w].num_cases);
        match (is_flow(v), is_flow(w)) {
            (false, false) => {
                for case_v in 0..cv {
                    for case_w in 0..cw {
                        let val = table[case_v * cw + case_w];
                        if val != 0.0 {
                            qubo.add_quadratic(
                                case_bit(dqm.vars[v].kind, case_v),
                                case_bit(dqm.vars[w].kind, case_w),
                                val,
                            );
                        }
                    }
                }
            }
            (false, true) => {
                for case_v in 0..cv {
                    let column: Vec<f64> =
                        (0..cw).map(|phi| table[case_v * cw + phi]).collect();
                    let (alpha, beta, gamma) =
                        fit_flow_column(&column).ok_or(ModelError::TranscodeMisfit { v, w })?;
                    if alpha != 0.0 {
                        return Err(ModelError::TranscodeMisfit { v, w });
                    }
                    add_flow_poly(
                        &mut qubo,
                        &reg,
                        flow_edge(w),
                        0.0,
                        beta,
                        gamma,
                        Some(case_bit(dqm.vars[v].kind, case_v)),
                    );
                }
            }
            (true, false) => {
                for case_w in 0..cw {
                    let column: Vec<f64> =
                        (0..cv).map(|phi| table[phi * cw + case_w]).collect();
                    let (alpha, beta, gamma) =
                        fit_flow_column(&column).ok_or(ModelError::TranscodeMisfit { v, w })?;
                    if alpha != 0.0 {
                        return Err(ModelError::TranscodeMisfit { v, w });
                    }
                    add_flow_poly(
                        &mut qubo,
                        &reg,
                        flow_edge(v),
                        0.0,
                        beta,
                        gamma,
                        Some(case_bit(dqm.vars[w].kind, case_w)),
                    );
                }
            }
            (true, true) => {
                // Bilinear fit c00 + c10*phi + c01*phi' + c11*phi*phi'.
                let t = |a: usize, b: usize| table[a * cw + b];
                let c00 = t(0, 0);
                let c10 = if cv > 1 { t(1, 0) - c00 } else { 0.0 };
                let c01 = if cw > 1 { t(0, 1) - c00 } else { 0.0 };
                let c11 = if cv > 1 && cw > 1 {
                    t(1, 1) - c10 - c01 - c00
                } else {
                    0.0
                };
                let max = table.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let tol = 1e-9 * (1.0 + max);
                for a in 0..cv {
                    for b in 0..cw {
                        let fitted = c00 + c10 * a as f64 + c01 * b as f64 + c11 * (a * b) as f64;
                        if (t(a, b) - fitted).abs() > tol {
                            return Err(ModelError::TranscodeMisfit { v, w });
                        }
                    }
                }
                qubo.offset += c00;
                let (e1, e2) = (flow_edge(v), flow_edge(w));
                for bit in 0..reg.flow_bits {
                    let weight = (1u64 << bit) as f64;
                    qubo.add_linear(reg.flow_bit(e1, bit), c10 * weight);
                    qubo.add_linear(reg.flow_bit(e2, bit), c01 * weight);
                }
                if c11 != 0.0 {
                    for b1 in 0..reg.flow_bits {
                        for b2 in 0..reg.flow_bits {
                            let weight = ((1u64 << b1) * (1u64 << b2)) as f64;
                            qubo.add_quadratic(
                                reg.flow_bit(e1, b1),
                                reg.flow_bit(e2, b2),
                                c11 * weight,
                            );
                        }
                    }
                }
            }
        }
    }

    // One-hot penalties for every transcribed discrete variable.
    for var in &dqm.vars {
        let cases = var.num_cases;
        if matches!(var.kind, DqmVarKind::Flow { .. }) {
            continue;
        }
        let terms: Vec<(u32, f64)> = (0..cases)
            .map(|case| (case_bit(var.kind, case), 1.0))
            .collect();
        add_squared_bits(&mut qubo, &terms, -1.0, dqm.penalty.lambda1);
    }

    Ok(QuboModel {
        qubo,
        registry: reg,
        roots: seeds.clone(),
        penalty: dqm.penalty.clone(),
    })
}
