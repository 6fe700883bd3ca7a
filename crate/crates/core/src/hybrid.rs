//! Decomposition pipeline for instances beyond direct solver reach.
//!
//! The pipeline picks well-spread seed areas, grows contiguous regions
//! greedily around them, then repeatedly re-optimizes the region borders
//! with a small binary model over just the movable border areas. Region
//! contiguity is an invariant between every phase: moves that would break
//! it are filtered during repair, and an iteration that fails to improve
//! the objective is rolled back before the loop stops.

use crate::dqm::{ModelError, Seeds};
use crate::instance::{Assignment, Instance};
use crate::qubo::Qubo;
use crate::solve::{solve_exact, solve_sa, SaParams, SolveError};
use crate::verify::{articulation_areas, VerifyError};

/// Errors from the decomposition pipeline.
#[derive(Debug, thiserror::Error)]
pub enum HybridError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("invalid pipeline parameter: {0}")]
    InvalidParameter(String),
}

/// How the pipeline picks its seed areas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStrategy {
    /// Start from a lowest-id area of maximum eccentricity, then
    /// repeatedly take the area farthest (in hops) from the chosen set.
    GreedyMaxMin,
    /// Bisect on a pairwise hop-distance threshold, checking each
    /// threshold with a small binary dispersion model.
    Dispersion { seed: u64 },
}

/// Hop distances from `source` to every area.
fn hop_distances(instance: &Instance, source: usize) -> Vec<u32> {
    let n = instance.num_areas();
    let mut dist = vec![u32::MAX; n];
    dist[source] = 0;
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(area) = queue.pop_front() {
        for &next in instance.neighbors(area) {
            if dist[next] == u32::MAX {
                dist[next] = dist[area] + 1;
                queue.push_back(next);
            }
        }
    }
    dist
}

fn greedy_maxmin_seeds(instance: &Instance) -> Vec<usize> {
    let n = instance.num_areas();
    let p = instance.p();
    let all_dist: Vec<Vec<u32>> = (0..n).map(|i| hop_distances(instance, i)).collect();
    let first = (0..n)
        .max_by_key(|&i| (*all_dist[i].iter().max().unwrap(), std::cmp::Reverse(i)))
        .unwrap();
    let mut chosen = vec![first];
    let mut dist_to_chosen = all_dist[first].clone();
    while chosen.len() < p {
        let next = (0..n)
            .filter(|i| !chosen.contains(i))
            .max_by_key(|&i| (dist_to_chosen[i], std::cmp::Reverse(i)))
            .unwrap();
        for (d, &nd) in dist_to_chosen.iter_mut().zip(&all_dist[next]) {
            *d = (*d).min(nd);
        }
        chosen.push(next);
    }
    chosen
}

/// Binary dispersion check: can `p` areas be chosen with pairwise hop
/// distance at least `threshold`? Returns the chosen areas if so.
fn dispersion_round(
    instance: &Instance,
    all_dist: &[Vec<u32>],
    threshold: u32,
    seed: u64,
) -> Result<Option<Vec<usize>>, SolveError> {
    let n = instance.num_areas();
    let p = instance.p();
    let mut qubo = Qubo::zeroed(n);
    // (sum z - p)^2 plus a conflict surcharge per too-close pair.
    qubo.offset += (p * p) as f64;
    for i in 0..n as u32 {
        qubo.add_linear(i, 1.0 - 2.0 * p as f64);
        for j in (i + 1)..n as u32 {
            let conflict = all_dist[i as usize][j as usize] < threshold;
            qubo.add_quadratic(i, j, 2.0 + if conflict { (p * p) as f64 } else { 0.0 });
        }
    }
    let best = if n <= 22 {
        solve_exact(&qubo, 22)?
    } else {
        let params = SaParams::with_seed(seed ^ u64::from(threshold));
        solve_sa(&qubo, &params)?.remove(0)
    };
    if best.energy.abs() < 1e-9 {
        Ok(Some(
            best.bits
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i))
                .collect(),
        ))
    } else {
        Ok(None)
    }
}

/// Picks `p` well-spread seed areas.
pub fn select_seeds(instance: &Instance, strategy: SeedStrategy) -> Result<Seeds, HybridError> {
    let roots = match strategy {
        SeedStrategy::GreedyMaxMin => greedy_maxmin_seeds(instance),
        SeedStrategy::Dispersion { seed } => {
            let n = instance.num_areas();
            let all_dist: Vec<Vec<u32>> = (0..n).map(|i| hop_distances(instance, i)).collect();
            let diameter = all_dist
                .iter()
                .flat_map(|row| row.iter().copied())
                .max()
                .unwrap_or(0);
            // Bisect the largest feasible threshold; 1 is always feasible.
            let mut lo = 1u32;
            let mut lo_set = dispersion_round(instance, &all_dist, 1, seed)?
                .unwrap_or_else(|| greedy_maxmin_seeds(instance));
            let mut hi = diameter + 1;
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                match dispersion_round(instance, &all_dist, mid, seed)? {
                    Some(set) => {
                        lo = mid;
                        lo_set = set;
                    }
                    None => hi = mid,
                }
            }
            lo_set
        }
    };
    Ok(Seeds::new(roots, instance.p())?)
}

/// Grows contiguous regions around the seeds by repeatedly assigning the
/// unassigned area with the cheapest heterogeneity increment toward a
/// region it already touches. Ties prefer the lower region, then the
/// lower area id.
pub fn grow_regions(instance: &Instance, seeds: &Seeds) -> Result<Assignment, HybridError> {
    let n = instance.num_areas();
    let p = instance.p();
    if seeds.roots().len() != p {
        return Err(HybridError::Model(ModelError::RootCount {
            expected: p,
            got: seeds.roots().len(),
        }));
    }
    seeds.check_range(n)?;
    let mut labels: Vec<Option<usize>> = vec![None; n];
    // Heterogeneity increment of putting an area into each region, kept
    // current as regions gain members.
    let mut increment = vec![vec![0.0f64; p]; n];
    let mut touches = vec![vec![false; p]; n];
    let assign = |area: usize,
                      region: usize,
                      labels: &mut Vec<Option<usize>>,
                      increment: &mut Vec<Vec<f64>>,
                      touches: &mut Vec<Vec<bool>>| {
        labels[area] = Some(region);
        for other in 0..n {
            if labels[other].is_none() {
                increment[other][region] += instance.weight(area, other);
            }
        }
        for &next in instance.neighbors(area) {
            touches[next][region] = true;
        }
    };
    for (region, &root) in seeds.roots().iter().enumerate() {
        if labels[root].is_some() {
            return Err(HybridError::Model(ModelError::DuplicateRoot(root)));
        }
        assign(root, region, &mut labels, &mut increment, &mut touches);
    }
    for _ in seeds.roots().len()..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for area in 0..n {
            if labels[area].is_some() {
                continue;
            }
            for region in 0..p {
                if !touches[area][region] {
                    continue;
                }
                let candidate = (increment[area][region], region, area);
                if best.is_none_or(|b| candidate < b) {
                    best = Some(candidate);
                }
            }
        }
        let (_, region, area) =
            best.expect("a connected instance always exposes a growable frontier");
        assign(area, region, &mut labels, &mut increment, &mut touches);
    }
    Ok(Assignment::new(
        labels.into_iter().map(Option::unwrap).collect(),
    ))
}

/// Border areas that can change region without breaking anything: not a
/// root, not the last member of its region, not an articulation area of
/// its region, and adjacent to at least one other region.
pub fn movable_areas(
    instance: &Instance,
    assignment: &Assignment,
    seeds: &Seeds,
) -> Result<Vec<usize>, HybridError> {
    let p = instance.p();
    let sizes = assignment.region_sizes(p);
    let mut blocked = vec![false; instance.num_areas()];
    for region in 0..p {
        for area in articulation_areas(instance, assignment, region)? {
            blocked[area] = true;
        }
    }
    Ok((0..instance.num_areas())
        .filter(|&area| {
            let region = assignment.label(area);
            !blocked[area]
                && seeds.region_of_root(area).is_none()
                && sizes[region] > 1
                && instance
                    .neighbors(area)
                    .iter()
                    .any(|&b| assignment.label(b) != region)
        })
        .collect())
}

/// One movable border area and the region options open to it.
#[derive(Debug, Clone)]
pub struct BoundarySlot {
    pub area: usize,
    /// Candidate regions, sorted; always contains the current region.
    pub options: Vec<usize>,
}

/// A small one-hot binary model over border moves. At any one-hot
/// configuration its energy equals the heterogeneity of the combined
/// assignment (fixed areas plus chosen options).
#[derive(Debug, Clone)]
pub struct BoundaryModel {
    pub qubo: Qubo,
    pub slots: Vec<BoundarySlot>,
    starts: Vec<usize>,
}

impl BoundaryModel {
    /// Variable id of one slot option.
    pub fn var(&self, slot: usize, option_idx: usize) -> u32 {
        (self.starts[slot] + option_idx) as u32
    }
}

/// Builds the border re-optimization model.
pub fn build_boundary_qubo(
    instance: &Instance,
    assignment: &Assignment,
    movable: &[usize],
    one_hot_weight: f64,
) -> BoundaryModel {
    let is_movable: std::collections::BTreeSet<usize> = movable.iter().copied().collect();
    let slots: Vec<BoundarySlot> = movable
        .iter()
        .map(|&area| {
            let mut options: Vec<usize> = instance
                .neighbors(area)
                .iter()
                .map(|&b| assignment.label(b))
                .chain([assignment.label(area)])
                .collect();
            options.sort_unstable();
            options.dedup();
            BoundarySlot { area, options }
        })
        .collect();
    let mut starts = Vec::with_capacity(slots.len());
    let mut total = 0usize;
    for slot in &slots {
        starts.push(total);
        total += slot.options.len();
    }
    let mut qubo = Qubo::zeroed(total);
    // Fixed-fixed heterogeneity as the constant part.
    let n = instance.num_areas();
    for i in 0..n {
        if is_movable.contains(&i) {
            continue;
        }
        for j in (i + 1)..n {
            if !is_movable.contains(&j) && assignment.label(i) == assignment.label(j) {
                qubo.offset += instance.weight(i, j);
            }
        }
    }
    for (s, slot) in slots.iter().enumerate() {
        // Movable-fixed interaction folds into the option's linear cost.
        for (o, &option) in slot.options.iter().enumerate() {
            let var = (starts[s] + o) as u32;
            let cost: f64 = (0..n)
                .filter(|&b| b != slot.area && !is_movable.contains(&b))
                .filter(|&b| assignment.label(b) == option)
                .map(|b| instance.weight(slot.area, b))
                .sum();
            qubo.add_linear(var, cost);
        }
        // Exactly one option per slot.
        let terms: Vec<(u32, f64)> = (0..slot.options.len())
            .map(|o| ((starts[s] + o) as u32, 1.0))
            .collect();
        qubo.offset += one_hot_weight;
        for &(var, _) in &terms {
            qubo.add_linear(var, -one_hot_weight);
        }
        for (t, &(var_t, _)) in terms.iter().enumerate() {
            for &(var_s, _) in &terms[t + 1..] {
                qubo.add_quadratic(var_t, var_s, 2.0 * one_hot_weight);
            }
        }
    }
    // Movable-movable pairs interact where their option sets overlap.
    for s1 in 0..slots.len() {
        for s2 in (s1 + 1)..slots.len() {
            let w = instance.weight(slots[s1].area, slots[s2].area);
            if w == 0.0 {
                continue;
            }
            for (o1, &k1) in slots[s1].options.iter().enumerate() {
                for (o2, &k2) in slots[s2].options.iter().enumerate() {
                    if k1 == k2 {
                        qubo.add_quadratic(
                            (starts[s1] + o1) as u32,
                            (starts[s2] + o2) as u32,
                            w,
                        );
                    }
                }
            }
        }
    }
    BoundaryModel { qubo, slots, starts }
}

/// Tuning for [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub seed_strategy: SeedStrategy,
    /// Sampler settings for border models beyond exact reach.
    pub sa: SaParams,
    /// Border models with at most this many variables are solved exactly.
    pub exact_threshold: usize,
    /// Upper bound on border re-optimization rounds.
    pub max_iterations: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            seed_strategy: SeedStrategy::GreedyMaxMin,
            sa: SaParams::default(),
            exact_threshold: 20,
            max_iterations: 25,
        }
    }
}

/// One border round's bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub heterogeneity_before: f64,
    pub heterogeneity_after: f64,
    /// Moves applied this round.
    pub moved: usize,
    /// Moves proposed by the sampler but rejected during repair.
    pub rejected: usize,
}

/// Pipeline output: seeds, final contiguous assignment, and per-round
/// history.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub seeds: Seeds,
    pub assignment: Assignment,
    pub heterogeneity: f64,
    pub history: Vec<IterationRecord>,
}

/// Heterogeneity change of moving `area` to `dst` under `assignment`.
fn move_gain(instance: &Instance, assignment: &Assignment, area: usize, dst: usize) -> f64 {
    let src = assignment.label(area);
    let mut gain = 0.0;
    for other in 0..instance.num_areas() {
        if other == area {
            continue;
        }
        if assignment.label(other) == dst {
            gain += instance.weight(area, other);
        } else if assignment.label(other) == src {
            gain -= instance.weight(area, other);
        }
    }
    gain
}

/// Whether `area` may leave its region under `assignment` right now and
/// join the adjacent region `dst`.
fn move_is_safe(
    instance: &Instance,
    assignment: &Assignment,
    seeds: &Seeds,
    area: usize,
    dst: usize,
) -> Result<bool, HybridError> {
    let src = assignment.label(area);
    if dst == src || seeds.region_of_root(area).is_some() {
        return Ok(false);
    }
    if assignment.region_sizes(instance.p())[src] < 2 {
        return Ok(false);
    }
    if !instance
        .neighbors(area)
        .iter()
        .any(|&b| assignment.label(b) == dst)
    {
        return Ok(false);
    }
    Ok(!articulation_areas(instance, assignment, src)?.contains(&area))
}

/// Runs the full pipeline: seed, grow, then border re-optimization until
/// a round fails to improve the objective.
pub fn run_pipeline(
    instance: &Instance,
    params: &PipelineParams,
) -> Result<PipelineState, HybridError> {
    if params.max_iterations == 0 {
        return Err(HybridError::InvalidParameter(
            "max_iterations must be at least 1".into(),
        ));
    }
    let seeds = select_seeds(instance, params.seed_strategy)?;
    let mut assignment = grow_regions(instance, &seeds)?;
    let mut heterogeneity = instance.heterogeneity(&assignment);
    let mut history = Vec::new();
    let one_hot_weight = 1.0 + instance.total_weight();

    for iteration in 0..params.max_iterations {
        let movable = movable_areas(instance, &assignment, &seeds)?;
        if movable.is_empty() {
            break;
        }
        let model = build_boundary_qubo(instance, &assignment, &movable, one_hot_weight);
        let best = if model.qubo.num_vars <= params.exact_threshold {
            solve_exact(&model.qubo, params.exact_threshold)?
        } else {
            let mut sa = params.sa.clone();
            sa.seed = sa.seed.wrapping_add(iteration as u64);
            solve_sa(&model.qubo, &sa)?.remove(0)
        };
        // Proposed moves: slots whose chosen option differs from the
        // current label. Non-one-hot slots keep their label.
        let mut proposals: Vec<(f64, usize, usize)> = Vec::new();
        for (s, slot) in model.slots.iter().enumerate() {
            let set: Vec<usize> = (0..slot.options.len())
                .filter(|&o| best.bits[model.var(s, o) as usize])
                .collect();
            if let [only] = set[..] {
                let dst = slot.options[only];
                if dst != assignment.label(slot.area) {
                    proposals.push((
                        move_gain(instance, &assignment, slot.area, dst),
                        slot.area,
                        dst,
                    ));
                }
            }
        }
        // Apply best-gain-first; each move must stay safe under the
        // assignment as already modified by earlier moves.
        proposals.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2))
        });
        let before = heterogeneity;
        let snapshot = assignment.clone();
        let mut moved = 0usize;
        for &(_, area, dst) in &proposals {
            if move_is_safe(instance, &assignment, &seeds, area, dst)? {
                assignment.set_label(area, dst);
                moved += 1;
            }
        }
        let after = instance.heterogeneity(&assignment);
        history.push(IterationRecord {
            heterogeneity_before: before,
            heterogeneity_after: after.min(before),
            moved,
            rejected: proposals.len() - moved,
        });
        if after < before - 1e-12 {
            heterogeneity = after;
        } else {
            assignment = snapshot;
            history.last_mut().unwrap().moved = 0;
            break;
        }
    }
    Ok(PipelineState {
        seeds,
        assignment,
        heterogeneity,
        history,
    })
}
