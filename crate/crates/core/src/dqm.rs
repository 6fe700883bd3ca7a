//! Discrete quadratic model for contiguous regionalization.
//!
//! Variables are discrete cases: one label variable per area (cases are
//! region indices), one flow variable per directed edge (cases are integer
//! flow values), and one gap variable per directed edge (cases are
//! one-sided label differences). Region connectivity is enforced through
//! flow balance: every non-root area must absorb one net unit of flow,
//! every root must emit its region's size minus one, and flow is gated off
//! edges that cross region boundaries. Balanced gated flows exist exactly
//! for assignments whose regions are all connected.
//!
//! The gap variables make the gating pairwise: for each adjacent pair the
//! two opposing gaps are driven to `(d_i - d_j)^+` and `(d_j - d_i)^+` by
//! an exact penalty (zero at the intended values, positive elsewhere), and
//! a flow unit is charged whenever either gap of its edge is positive —
//! i.e. whenever the endpoints disagree on their region.

use crate::instance::{Assignment, Instance};
use crate::verify::FlowConfig;
use std::collections::BTreeMap;

/// Errors raised while configuring or building discrete models.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid penalty configuration: {0}")]
    InvalidPenalty(String),
    #[error("{l} flow bits encode at most {max}, below the flow bound {m}")]
    FlowBitsTooSmall { l: u32, max: u64, m: u64 },
    #[error("expected {expected} roots, got {got}")]
    RootCount { expected: usize, got: usize },
    #[error("area {0} appears more than once among the roots")]
    DuplicateRoot(usize),
    #[error("root index {root} out of range for {n} areas")]
    RootOutOfRange { root: usize, n: usize },
    #[error("unknown area name {0:?}")]
    UnknownArea(String),
    #[error("label {label} of area {area} out of range for p = {p}")]
    LabelOutOfRange { area: usize, label: usize, p: usize },
    #[error("flow {value} on edge ({from}, {to}) exceeds the encodable maximum {max}")]
    FlowTooLarge {
        from: usize,
        to: usize,
        value: u64,
        max: u64,
    },
    #[error("discrete model would need ~{entries} table entries; use the binary model path")]
    ModelTooLarge { entries: u64 },
    #[error("interaction of discrete variables {v} and {w} does not fit the binary flow encoding")]
    TranscodeMisfit { v: usize, w: usize },
}

/// Penalty weights and encoding sizes shared by the discrete and binary
/// models.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    /// Weight of the one-label-per-area constraint (binary model only; the
    /// discrete model is one-hot by construction. Also scales root pinning).
    pub lambda1: f64,
    /// Weight of the boundary gating that charges flow on cross-region
    /// edges, and scale of the gap-consistency penalty.
    pub lambda2: f64,
    /// Weight of the non-root flow-balance constraint.
    pub lambda3: f64,
    /// Weight of the root flow-balance constraint.
    pub lambda4: f64,
    /// Upper bound on any single flow value (at least the largest region
    /// size minus one).
    pub m: u64,
    /// Bits per flow variable in the binary encoding; flow cases run over
    /// `0..2^l`.
    pub l: u32,
    /// Tie-break weight that selects the honest gap pair among all
    /// consistent ones; must stay below `lambda2 / (p - 1)`.
    pub epsilon: f64,
}

impl PenaltyConfig {
    /// Defaults for an instance: every penalty weight strictly dominates
    /// the total objective weight, flows are bounded by `n - 1`, and the
    /// gap tie-break sits well inside its admissible range.
    pub fn defaults_for(instance: &Instance) -> Self {
        let lambda = 1.0 + instance.total_weight();
        let m = instance.num_areas() as u64 - 1;
        let l = if m == 0 { 0 } else { 64 - m.leading_zeros() };
        let epsilon = lambda / (2.0 * instance.p() as f64);
        Self {
            lambda1: lambda,
            lambda2: lambda,
            lambda3: lambda,
            lambda4: lambda,
            m,
            l,
            epsilon,
        }
    }

    /// Largest flow value one variable can carry (`2^l - 1`).
    pub fn flow_max(&self) -> u64 {
        (1u64 << self.l) - 1
    }

    /// Gap-consistency scale `lambda2 * (2 * flow_max + 1)`.
    ///
    /// A dishonest zero gap on a boundary edge saves at most the gating
    /// charge of both opposing flows. Discrete flows stop at `m`, but their
    /// binary transcription reaches `2^l - 1`, so the scale covers the
    /// larger bound and beats the saving by at least
    /// `lambda2 - epsilon * (p - 1)`.
    pub fn mu(&self) -> f64 {
        self.lambda2 * (2.0 * self.flow_max() as f64 + 1.0)
    }

    /// Number of cases of one flow variable (`m + 1`: the values `0..=m`).
    pub fn flow_cases(&self) -> usize {
        self.m as usize + 1
    }

    /// Validates the configuration against an instance.
    pub fn validate(&self, instance: &Instance) -> Result<(), ModelError> {
        for (name, value) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("epsilon", self.epsilon),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ModelError::InvalidPenalty(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.l > 20 {
            return Err(ModelError::InvalidPenalty(format!(
                "l = {} flow bits is beyond any supported scale",
                self.l
            )));
        }
        let max = (1u64 << self.l) - 1;
        if max < self.m {
            return Err(ModelError::FlowBitsTooSmall {
                l: self.l,
                max,
                m: self.m,
            });
        }
        let p = instance.p();
        if p > 1 && instance.num_directed_edges() > 0 {
            if self.epsilon * (p as f64 - 1.0) >= self.lambda2 {
                return Err(ModelError::InvalidPenalty(format!(
                    "epsilon = {} erodes the gap margin; it must stay below lambda2 / (p - 1) = {}",
                    self.epsilon,
                    self.lambda2 / (p as f64 - 1.0)
                )));
            }
        }
        Ok(())
    }
}

/// Predetermined root area of each region; region `k` grows from
/// `roots()[k]` and the root's label is pinned to `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds {
    roots: Vec<usize>,
}

impl Seeds {
    /// Roots by internal area index, one per region.
    pub fn new(roots: Vec<usize>, p: usize) -> Result<Self, ModelError> {
        if roots.len() != p {
            return Err(ModelError::RootCount {
                expected: p,
                got: roots.len(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for &r in &roots {
            if !seen.insert(r) {
                return Err(ModelError::DuplicateRoot(r));
            }
        }
        Ok(Self { roots })
    }

    /// Roots by external area name, one per region in region order.
    pub fn from_names<S: AsRef<str>>(instance: &Instance, names: &[S]) -> Result<Self, ModelError> {
        let roots = names
            .iter()
            .map(|name| {
                instance
                    .index_of(name.as_ref())
                    .ok_or_else(|| ModelError::UnknownArea(name.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let seeds = Self::new(roots, instance.p())?;
        seeds.check_range(instance.num_areas())?;
        Ok(seeds)
    }

    /// Root of each region, indexed by region.
    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    /// The region whose root is `area`, if any.
    pub fn region_of_root(&self, area: usize) -> Option<usize> {
        self.roots.iter().position(|&r| r == area)
    }

    pub(crate) fn check_range(&self, n: usize) -> Result<(), ModelError> {
        match self.roots.iter().find(|&&r| r >= n) {
            Some(&root) => Err(ModelError::RootOutOfRange { root, n }),
            None => Ok(()),
        }
    }
}

/// What a discrete variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqmVarKind {
    /// Region label of one area; cases are region indices.
    Area { area: usize },
    /// Flow on one directed edge; cases are flow values.
    Flow { edge: usize },
    /// One-sided label gap on one directed edge `(i, j)`; cases are values
    /// of `(d_i - d_j)^+`.
    Gap { edge: usize },
}

/// One discrete variable.
#[derive(Debug, Clone, Copy)]
pub struct DqmVar {
    pub kind: DqmVarKind,
    pub num_cases: usize,
}

/// A discrete quadratic model: per-case linear biases, dense per-pair
/// interaction tables, and a constant offset.
#[derive(Debug, Clone)]
pub struct DqmModel {
    /// Variables in layout order: areas, then flows, then gaps.
    pub vars: Vec<DqmVar>,
    /// Per-variable, per-case linear bias.
    pub linear: Vec<Vec<f64>>,
    /// Interaction tables keyed by `(v, w)` with `v < w`, row-major
    /// `cases(v) x cases(w)`.
    pub quadratic: BTreeMap<(usize, usize), Vec<f64>>,
    /// Constant energy shift, so that feasible energies equal the
    /// objective exactly.
    pub offset: f64,
    /// The configuration the model was built with.
    pub penalty: PenaltyConfig,
}

/// Value a term contributes per case of its variable.
enum Term {
    /// The case index itself.
    Case(usize),
    /// 1 when the case equals the payload, else 0.
    Indicator(usize, usize),
}

impl Term {
    fn var(&self) -> usize {
        match *self {
            Term::Case(v) | Term::Indicator(v, _) => v,
        }
    }

    fn value(&self, case: usize) -> f64 {
        match *self {
            Term::Case(_) => case as f64,
            Term::Indicator(_, k) => {
                if case == k {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl DqmModel {
    fn empty(vars: Vec<DqmVar>, penalty: PenaltyConfig) -> Self {
        let linear = vars.iter().map(|v| vec![0.0; v.num_cases]).collect();
        Self {
            vars,
            linear,
            quadratic: BTreeMap::new(),
            offset: 0.0,
            penalty,
        }
    }

    /// Number of discrete variables.
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Variable index of area `i`'s label.
    pub fn area_var(&self, area: usize) -> usize {
        area
    }

    /// Variable index of directed edge `edge`'s flow.
    pub fn flow_var(&self, num_areas: usize, edge: usize) -> usize {
        num_areas + edge
    }

    /// Variable index of directed edge `edge`'s gap.
    pub fn gap_var(&self, num_areas: usize, num_edges: usize, edge: usize) -> usize {
        num_areas + num_edges + edge
    }

    fn add_linear(&mut self, term: &Term, scale: f64) {
        let v = term.var();
        for case in 0..self.vars[v].num_cases {
            self.linear[v][case] += scale * term.value(case);
        }
    }

    fn add_pair(&mut self, a: &Term, b: &Term, scale: f64) {
        let (va, vb) = (a.var(), b.var());
        assert_ne!(va, vb, "interaction table needs two distinct variables");
        let (v, w, row_term, col_term) = if va < vb { (va, vb, a, b) } else { (vb, va, b, a) };
        let (cv, cw) = (self.vars[v].num_cases, self.vars[w].num_cases);
        let table = self
            .quadratic
            .entry((v, w))
            .or_insert_with(|| vec![0.0; cv * cw]);
        for rc in 0..cv {
            let rv = row_term.value(rc);
            if rv == 0.0 {
                continue;
            }
            for cc in 0..cw {
                table[rc * cw + cc] += scale * rv * col_term.value(cc);
            }
        }
    }

    /// Adds `scale * (sum_t coef_t * value_t + constant)^2`.
    fn add_squared(&mut self, terms: &[(Term, f64)], constant: f64, scale: f64) {
        self.offset += scale * constant * constant;
        for (term, coef) in terms {
            let v = term.var();
            for case in 0..self.vars[v].num_cases {
                let val = term.value(case);
                self.linear[v][case] += scale * (coef * coef * val * val + 2.0 * constant * coef * val);
            }
        }
        for (t, (term_t, coef_t)) in terms.iter().enumerate() {
            for (term_s, coef_s) in &terms[t + 1..] {
                self.add_pair(term_t, term_s, scale * 2.0 * coef_t * coef_s);
            }
        }
    }

    /// Total model energy of a case vector (layout order).
    pub fn evaluate(&self, cases: &[usize]) -> f64 {
        assert_eq!(
            cases.len(),
            self.vars.len(),
            "case vector length {} does not match {} variables",
            cases.len(),
            self.vars.len()
        );
        let mut energy = self.offset;
        for (v, &case) in cases.iter().enumerate() {
            energy += self.linear[v][case];
        }
        for (&(v, w), table) in &self.quadratic {
            energy += table[cases[v] * self.vars[w].num_cases + cases[w]];
        }
        energy
    }

    /// The case vector that honestly represents an assignment plus flows:
    /// labels as given, gaps at their intended one-sided differences, flow
    /// cases at the given values.
    pub fn configuration(
        &self,
        instance: &Instance,
        assignment: &Assignment,
        flows: &FlowConfig,
    ) -> Result<Vec<usize>, ModelError> {
        let n = instance.num_areas();
        let p = instance.p();
        let mut cases = Vec::with_capacity(self.vars.len());
        for area in 0..n {
            let label = assignment.label(area);
            if label >= p {
                return Err(ModelError::LabelOutOfRange { area, label, p });
            }
            cases.push(label);
        }
        let max = self.penalty.m;
        for &(from, to) in instance.directed_edges() {
            let value = flows.get(from, to);
            if value > max {
                return Err(ModelError::FlowTooLarge {
                    from,
                    to,
                    value,
                    max,
                });
            }
            cases.push(value as usize);
        }
        for &(from, to) in instance.directed_edges() {
            cases.push(assignment.label(from).saturating_sub(assignment.label(to)));
        }
        Ok(cases)
    }

    /// Deterministic text form: a header, then nonzero linear and table
    /// entries in variable order.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "# dqm vars={} offset={}", self.vars.len(), self.offset).unwrap();
        for (v, var) in self.vars.iter().enumerate() {
            let kind = match var.kind {
                DqmVarKind::Area { area } => format!("area {area}"),
                DqmVarKind::Flow { edge } => format!("flow {edge}"),
                DqmVarKind::Gap { edge } => format!("gap {edge}"),
            };
            writeln!(out, "# var {v} {kind} cases={}", var.num_cases).unwrap();
        }
        for (v, biases) in self.linear.iter().enumerate() {
            for (case, &value) in biases.iter().enumerate() {
                if value != 0.0 {
                    writeln!(out, "lin {v} {case} {value}").unwrap();
                }
            }
        }
        for (&(v, w), table) in &self.quadratic {
            let cw = self.vars[w].num_cases;
            for (idx, &value) in table.iter().enumerate() {
                if value != 0.0 {
                    writeln!(out, "quad {v} {w} {} {} {value}", idx / cw, idx % cw).unwrap();
                }
            }
        }
        out
    }
}

/// Rough upper bound on the number of table entries the build would
/// allocate, used to refuse hopeless sizes before touching memory.
fn estimate_entries(instance: &Instance, penalty: &PenaltyConfig) -> u64 {
    let n = instance.num_areas() as u64;
    let p = instance.p() as u64;
    let e = instance.num_directed_edges() as u64;
    let fc = penalty.flow_cases() as u64;
    let mut flow_pairs = 0u64;
    for i in 0..instance.num_areas() {
        let t = 2 * instance.neighbors(i).len() as u64;
        flow_pairs += t * t.saturating_sub(1) / 2;
    }
    let label_pairs = n * n.saturating_sub(1) / 2;
    let cross = 2 * e * n; // root-balance flow x indicator tables, generously
    flow_pairs * fc * fc + label_pairs * p * p + cross * fc * p + 3 * e * p * (p + fc)
}

/// Builds the discrete quadratic model of an instance.
///
/// The energy of a case vector is the within-region objective plus
/// penalties that vanish exactly on honest encodings of contiguous
/// assignments: gap consistency and its tie-break, boundary-gated flow,
/// non-root flow balance, root flow balance, and a pin holding each root's
/// label variable on its own region.
pub fn build_dqm(
    instance: &Instance,
    seeds: &Seeds,
    penalty: &PenaltyConfig,
) -> Result<DqmModel, ModelError> {
    penalty.validate(instance)?;
    seeds.check_range(instance.num_areas())?;
    if seeds.roots().len() != instance.p() {
        return Err(ModelError::RootCount {
            expected: instance.p(),
            got: seeds.roots().len(),
        });
    }
    let entries = estimate_entries(instance, penalty);
    if entries > 50_000_000 {
        return Err(ModelError::ModelTooLarge { entries });
    }

    let n = instance.num_areas();
    let p = instance.p();
    let num_edges = instance.num_directed_edges();
    let flow_cases = penalty.flow_cases();
    let mut vars = Vec::with_capacity(n + 2 * num_edges);
    for area in 0..n {
        vars.push(DqmVar {
            kind: DqmVarKind::Area { area },
            num_cases: p,
        });
    }
    for edge in 0..num_edges {
        vars.push(DqmVar {
            kind: DqmVarKind::Flow { edge },
            num_cases: flow_cases,
        });
    }
    for edge in 0..num_edges {
        vars.push(DqmVar {
            kind: DqmVarKind::Gap { edge },
            num_cases: p,
        });
    }
    let mut model = DqmModel::empty(vars, penalty.clone());

    // Pinned label of each root area, None for free areas.
    let mut pinned: Vec<Option<usize>> = vec![None; n];
    for (region, &root) in seeds.roots().iter().enumerate() {
        pinned[root] = Some(region);
    }
    let area_var = |i: usize| i;
    let flow_var = |e: usize| n + e;
    let gap_var = |e: usize| n + num_edges + e;

    // Objective: within-region dissimilarity over all area pairs, with
    // pinned labels folded to constants.
    for i in 0..n {
        for j in (i + 1)..n {
            let w = instance.weight(i, j);
            if w == 0.0 {
                continue;
            }
            match (pinned[i], pinned[j]) {
                (Some(ki), Some(kj)) => {
                    if ki == kj {
                        model.offset += w;
                    }
                }
                (Some(ki), None) => model.linear[area_var(j)][ki] += w,
                (None, Some(kj)) => model.linear[area_var(i)][kj] += w,
                (None, None) => {
                    for k in 0..p {
                        model.add_pair(
                            &Term::Indicator(area_var(i), k),
                            &Term::Indicator(area_var(j), k),
                            w,
                        );
                    }
                }
            }
        }
    }

    let mu = penalty.mu();
    let eps = penalty.epsilon;
    // Gap consistency per adjacent pair: the two opposing gaps must differ
    // by the label difference, and the tie-break selects the smallest such
    // pair — exactly the one-sided differences.
    for &(i, j) in instance.directed_edges().iter().filter(|&&(i, j)| i < j) {
        let e_ij = instance.edge_id(i, j).unwrap();
        let e_ji = instance.edge_id(j, i).unwrap();
        let (g_ij, g_ji) = (gap_var(e_ij), gap_var(e_ji));
        let mut terms = vec![(Term::Case(g_ij), 1.0), (Term::Case(g_ji), -1.0)];
        let mut constant = 0.0;
        match pinned[i] {
            Some(k) => constant -= k as f64,
            None => terms.push((Term::Case(area_var(i)), -1.0)),
        }
        match pinned[j] {
            Some(k) => constant += k as f64,
            None => terms.push((Term::Case(area_var(j)), 1.0)),
        }
        model.add_squared(&terms, constant, mu);
        model.add_linear(&Term::Case(g_ij), eps);
        model.add_linear(&Term::Case(g_ji), eps);
        // Calibration so the honest pair lands exactly on zero.
        match (pinned[i], pinned[j]) {
            (Some(a), Some(b)) => model.offset -= eps * (a as f64 - b as f64).abs(),
            (Some(a), None) => {
                for b in 0..p {
                    let v = -eps * (a as f64 - b as f64).abs();
                    if v != 0.0 {
                        model.linear[area_var(j)][b] += v;
                    }
                }
            }
            (None, Some(b)) => {
                for a in 0..p {
                    let v = -eps * (a as f64 - b as f64).abs();
                    if v != 0.0 {
                        model.linear[area_var(i)][a] += v;
                    }
                }
            }
            (None, None) => {
                for a in 0..p {
                    for b in 0..p {
                        if a != b {
                            model.add_pair(
                                &Term::Indicator(area_var(i), a),
                                &Term::Indicator(area_var(j), b),
                                -eps * (a as f64 - b as f64).abs(),
                            );
                        }
                    }
                }
            }
        }
    }

    // Boundary gating: each unit of flow on a directed edge is charged
    // whenever either gap of its pair is positive.
    for (e, &(i, j)) in instance.directed_edges().iter().enumerate() {
        let f = flow_var(e);
        let e_rev = instance.edge_id(j, i).unwrap();
        for gap in [gap_var(e), gap_var(e_rev)] {
            let (fv, gv) = (f.min(gap), f.max(gap));
            let (fc, gc) = (model.vars[fv].num_cases, model.vars[gv].num_cases);
            let table = model
                .quadratic
                .entry((fv, gv))
                .or_insert_with(|| vec![0.0; fc * gc]);
            // Row variable is the flow (flows precede gaps in the layout).
            for phi in 0..fc {
                for c in 1..gc {
                    table[phi * gc + c] += penalty.lambda2 * phi as f64;
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
            terms.push((Term::Case(flow_var(instance.edge_id(j, i).unwrap())), 1.0));
            terms.push((Term::Case(flow_var(instance.edge_id(i, j).unwrap())), -1.0));
        }
        model.add_squared(&terms, -1.0, penalty.lambda3);
    }

    // Root flow balance: net outflow equal to the region population minus
    // one. The root's own membership cancels the constant exactly.
    for (region, &root) in seeds.roots().iter().enumerate() {
        let mut terms = Vec::new();
        for &j in instance.neighbors(root) {
            terms.push((Term::Case(flow_var(instance.edge_id(root, j).unwrap())), 1.0));
            terms.push((Term::Case(flow_var(instance.edge_id(j, root).unwrap())), -1.0));
        }
        for i in 0..n {
            if pinned[i].is_none() {
                terms.push((Term::Indicator(area_var(i), region), -1.0));
            }
        }
        model.add_squared(&terms, 0.0, penalty.lambda4);
    }

    // Pin each root's label variable onto its own region.
    for (region, &root) in seeds.roots().iter().enumerate() {
        for k in 0..p {
            if k != region {
                model.linear[area_var(root)][k] += 10.0 * penalty.lambda1;
            }
        }
    }

    Ok(model)
}
