//! Spatially contiguous regionalization via quadratic models.
//!
//! The library groups `n` areas of a planar adjacency graph into `p`
//! regions that minimize attribute heterogeneity while every region stays
//! connected. Connectivity is enforced through a per-region flow network:
//! each region has a predetermined root area, every non-root member must
//! absorb one unit of network flow, and flow may only travel along edges
//! whose endpoints share a region. A labeling admits a balanced flow if and
//! only if every region is connected, which turns contiguity into a set of
//! quadratic penalties.
//!
//! Two encodings are provided: a discrete quadratic model ([`dqm`]) over
//! case-valued variables, and a plain binary QUBO ([`qubo`]) with one-hot
//! assignment bits, binary-expanded flows, and product-linearization bits.
//! [`solve`] contains a deterministic exhaustive solver and a seeded
//! multi-restart simulated annealer. [`verify`] holds the independent
//! oracles (connectivity, flow completion, articulation areas, and an
//! exhaustive flow-space search). [`hybrid`] implements a decomposition
//! pipeline that grows regions greedily and then improves the boundary with
//! small assignment-only QUBOs.

pub mod dqm;
pub mod fixtures;
pub mod hybrid;
pub mod instance;
pub mod qubo;
pub mod solve;
pub mod verify;

pub use dqm::{build_dqm, DqmModel, ModelError, PenaltyConfig, Seeds};
pub use hybrid::{
    build_boundary_qubo, grow_regions, movable_areas, run_pipeline, select_seeds, HybridError,
    PipelineParams, PipelineState, SeedStrategy,
};
pub use instance::{Assignment, AttributeRule, Instance, Metric};
pub use qubo::{
    build_qubo, decode, dqm_to_qubo, evaluate_qubo, FeasibilityReport, Qubo, QuboModel,
    VariableRegistry,
};
pub use solve::{solve_exact, solve_sa, SaParams, SampleResult, SolveError};
pub use verify::{
    articulation_areas, check_contiguity, complete_flows, theorem1_harness, ContiguityReport,
    FlowConfig, Theorem1Verdict, VerifyError,
};
