//! Ground-truth oracles independent of the quadratic models.
//!
//! Everything here works directly on the adjacency graph: per-region
//! connectivity, constructive flow completion (the converse direction of
//! the flow-balance/connectivity equivalence), an exhaustive flow-space
//! search that can falsify that equivalence on small instances, and
//! articulation-area detection for the hybrid pipeline.

use crate::dqm::Seeds;
use crate::instance::{Assignment, Instance};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Integer flows on directed edges. Absent edges carry zero flow.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowConfig {
    flows: BTreeMap<(usize, usize), u64>,
}

impl FlowConfig {
    /// Empty (all-zero) flow configuration.
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the flow on a directed edge; zero entries are dropped.
    pub fn set(&mut self, from: usize, to: usize, value: u64) {
        if value == 0 {
            self.flows.remove(&(from, to));
        } else {
            self.flows.insert((from, to), value);
        }
    }

    /// Flow on a directed edge (zero when unset).
    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.flows.get(&(from, to)).copied().unwrap_or(0)
    }

    /// Nonzero flows in deterministic (lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.flows.iter().map(|(&e, &v)| (e, v))
    }

    /// Largest flow value present.
    pub fn max_flow(&self) -> u64 {
        self.flows.values().copied().max().unwrap_or(0)
    }

    /// Net inflow minus outflow of one area.
    pub fn net_inflow(&self, instance: &Instance, area: usize) -> i64 {
        let mut net = 0i64;
        for &j in instance.neighbors(area) {
            net += self.get(j, area) as i64;
            net -= self.get(area, j) as i64;
        }
        net
    }
}

/// Errors raised by the verification oracles.
#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("root {root} of region {region} is labeled {actual}, not inside its region")]
    RootOutsideRegion {
        root: usize,
        region: usize,
        actual: usize,
    },
    #[error("region {0} is empty")]
    EmptyRegion(usize),
    #[error("region {0} is disconnected")]
    DisconnectedRegion(usize),
    #[error("label {label} of area {area} out of range for p = {p}")]
    LabelOutOfRange { area: usize, label: usize, p: usize },
}

/// Connectivity status of one region.
#[derive(Debug, Clone)]
pub struct RegionStatus {
    /// Region index (0-based).
    pub region: usize,
    /// Connected components of the induced subgraph, each sorted ascending.
    /// An empty region has no components.
    pub components: Vec<Vec<usize>>,
}

impl RegionStatus {
    /// A region is contiguous when it has exactly one component.
    pub fn connected(&self) -> bool {
        self.components.len() == 1
    }
}

/// Result of [`check_contiguity`] over all regions.
#[derive(Debug, Clone)]
pub struct ContiguityReport {
    /// One status per region `0..p`.
    pub regions: Vec<RegionStatus>,
}

impl ContiguityReport {
    /// True when every region is nonempty and connected.
    pub fn all_connected(&self) -> bool {
        self.regions.iter().all(|r| r.connected())
    }

    /// Regions that are empty or split into several components.
    pub fn violations(&self) -> Vec<&RegionStatus> {
        self.regions.iter().filter(|r| !r.connected()).collect()
    }
}

fn region_components(instance: &Instance, members: &[usize]) -> Vec<Vec<usize>> {
    let member_set: BTreeSet<usize> = members.iter().copied().collect();
    let mut components = Vec::new();
    let mut visited = BTreeSet::new();
    for &start in members {
        if visited.contains(&start) {
            continue;
        }
        let mut component = vec![start];
        visited.insert(start);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in instance.neighbors(i) {
                if member_set.contains(&j) && visited.insert(j) {
                    component.push(j);
                    queue.push_back(j);
                }
            }
        }
        component.sort_unstable();
        components.push(component);
    }
    components
}

/// Checks per-region connectivity of an assignment.
pub fn check_contiguity(instance: &Instance, assignment: &Assignment) -> ContiguityReport {
    let p = instance.p();
    let regions = (0..p)
        .map(|k| RegionStatus {
            region: k,
            components: region_components(instance, &assignment.region_members(k)),
        })
        .collect();
    ContiguityReport { regions }
}

fn region_bfs_tree(
    instance: &Instance,
    members: &BTreeSet<usize>,
    root: usize,
) -> (Vec<usize>, BTreeMap<usize, usize>) {
    // BFS over the induced subgraph; neighbor lists are already sorted, so
    // children are visited in ascending-id order.
    let mut order = vec![root];
    let mut parent = BTreeMap::new();
    let mut visited = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(i) = queue.pop_front() {
        for &j in instance.neighbors(i) {
            if members.contains(&j) && visited.insert(j) {
                parent.insert(j, i);
                order.push(j);
                queue.push_back(j);
            }
        }
    }
    (order, parent)
}

/// Builds balanced within-region flows for an assignment, or reports that
/// none exist.
///
/// Each region gets a BFS spanning tree from its root; the edge from a
/// parent to a child carries the child's subtree size. The result satisfies
/// net inflow 1 at every non-root member and net outflow `|region| - 1` at
/// the root. Returns `Ok(None)` when some region is disconnected (no
/// balanced within-region flow exists in that case).
pub fn complete_flows(
    instance: &Instance,
    assignment: &Assignment,
    seeds: &Seeds,
) -> Result<Option<FlowConfig>, VerifyError> {
    let mut flows = FlowConfig::new();
    for (region, &root) in seeds.roots().iter().enumerate() {
        if assignment.label(root) != region {
            return Err(VerifyError::RootOutsideRegion {
                root,
                region,
                actual: assignment.label(root),
            });
        }
        let members: BTreeSet<usize> = assignment.region_members(region).into_iter().collect();
        let (order, parent) = region_bfs_tree(instance, &members, root);
        if order.len() != members.len() {
            return Ok(None);
        }
        // Subtree sizes accumulate leaf-to-root in reverse BFS order.
        let mut subtree: BTreeMap<usize, u64> = order.iter().map(|&i| (i, 1u64)).collect();
        for &i in order.iter().rev() {
            if let Some(&par) = parent.get(&i) {
                let size = subtree[&i];
                *subtree.get_mut(&par).unwrap() += size;
            }
        }
        for (&child, &par) in &parent {
            flows.set(par, child, subtree[&child]);
        }
    }
    Ok(Some(flows))
}

/// Outcome of the exhaustive flow-space search of [`theorem1_harness`].
#[derive(Debug, Clone)]
pub enum Theorem1Verdict {
    /// A zero-penalty (balanced, within-region) flow configuration exists.
    Found {
        flows: FlowConfig,
        all_connected: bool,
    },
    /// The full search space holds no balanced flow configuration.
    NoneExists { all_connected: bool },
    /// The search budget ran out before the space was exhausted.
    Inconclusive,
}

impl Theorem1Verdict {
    /// True when the search result matches the connectivity oracle:
    /// a balanced flow exists if and only if every region is connected.
    /// `None` when the search was inconclusive.
    pub fn consistent(&self) -> Option<bool> {
        match self {
            Theorem1Verdict::Found { all_connected, .. } => Some(*all_connected),
            Theorem1Verdict::NoneExists { all_connected } => Some(!*all_connected),
            Theorem1Verdict::Inconclusive => None,
        }
    }
}

struct FlowSearch<'a> {
    edges: Vec<(usize, usize)>,
    m: u64,
    targets: BTreeMap<usize, i64>,
    /// Remaining unassigned incident edges per area.
    remaining: BTreeMap<usize, (u64, u64)>, // (in-capacity, out-capacity) still open
    net: BTreeMap<usize, i64>,
    budget: &'a mut u64,
}

impl FlowSearch<'_> {
    fn search(&mut self, edge: usize, flows: &mut FlowConfig) -> Option<bool> {
        if *self.budget == 0 {
            return None; // budget exhausted
        }
        *self.budget -= 1;
        if edge == self.edges.len() {
            let balanced = self
                .targets
                .iter()
                .all(|(area, &t)| self.net.get(area).copied().unwrap_or(0) == t);
            return Some(balanced);
        }
        let (from, to) = self.edges[edge];
        self.remaining.get_mut(&from).unwrap().1 -= self.m;
        self.remaining.get_mut(&to).unwrap().0 -= self.m;
        for value in 0..=self.m {
            *self.net.get_mut(&from).unwrap() -= value as i64;
            *self.net.get_mut(&to).unwrap() += value as i64;
            if self.feasible(from) && self.feasible(to) {
                flows.set(from, to, value);
                match self.search(edge + 1, flows) {
                    Some(true) => return Some(true),
                    Some(false) => {}
                    None => return None,
                }
                flows.set(from, to, 0);
            }
            *self.net.get_mut(&from).unwrap() += value as i64;
            *self.net.get_mut(&to).unwrap() -= value as i64;
        }
        self.remaining.get_mut(&from).unwrap().1 += self.m;
        self.remaining.get_mut(&to).unwrap().0 += self.m;
        Some(false)
    }

    /// An area stays feasible while its target is still reachable given the
    /// open in/out capacity of its unassigned incident edges.
    fn feasible(&self, area: usize) -> bool {
        let target = self.targets[&area];
        let net = self.net[&area];
        let (in_cap, out_cap) = self.remaining[&area];
        target - net <= in_cap as i64 && net - target <= out_cap as i64
    }
}

/// Exhaustively searches the within-region flow space for a balanced
/// configuration.
///
/// Cross-region flows are pinned to zero (any positive cross-region flow is
/// penalized, so a zero-penalty configuration cannot use one), which prunes
/// the search to each region's induced directed edges with values `0..=m`.
/// `budget` bounds the number of search nodes; when it runs out the verdict
/// is [`Theorem1Verdict::Inconclusive`].
pub fn theorem1_harness(
    instance: &Instance,
    assignment: &Assignment,
    seeds: &Seeds,
    m: u64,
    budget: u64,
) -> Result<Theorem1Verdict, VerifyError> {
    let all_connected = check_contiguity(instance, assignment).all_connected();
    let mut combined = FlowConfig::new();
    let mut budget = budget;
    for (region, &root) in seeds.roots().iter().enumerate() {
        if assignment.label(root) != region {
            return Err(VerifyError::RootOutsideRegion {
                root,
                region,
                actual: assignment.label(root),
            });
        }
        let members: BTreeSet<usize> = assignment.region_members(region).into_iter().collect();
        let edges: Vec<(usize, usize)> = instance
            .directed_edges()
            .iter()
            .copied()
            .filter(|&(a, b)| members.contains(&a) && members.contains(&b))
            .collect();
        let targets: BTreeMap<usize, i64> = members
            .iter()
            .map(|&i| {
                let t = if i == root {
                    1 - members.len() as i64
                } else {
                    1
                };
                (i, t)
            })
            .collect();
        let mut remaining: BTreeMap<usize, (u64, u64)> =
            members.iter().map(|&i| (i, (0, 0))).collect();
        for &(from, to) in &edges {
            remaining.get_mut(&from).unwrap().1 += m;
            remaining.get_mut(&to).unwrap().0 += m;
        }
        let mut search = FlowSearch {
            edges,
            m,
            targets,
            remaining,
            net: members.iter().map(|&i| (i, 0i64)).collect(),
            budget: &mut budget,
        };
        let mut flows = FlowConfig::new();
        match search.search(0, &mut flows) {
            Some(true) => {
                for (edge, value) in flows.iter() {
                    combined.set(edge.0, edge.1, value);
                }
            }
            Some(false) => return Ok(Theorem1Verdict::NoneExists { all_connected }),
            None => return Ok(Theorem1Verdict::Inconclusive),
        }
    }
    Ok(Theorem1Verdict::Found {
        flows: combined,
        all_connected,
    })
}

/// Articulation areas (cut vertices) of one region's induced subgraph.
///
/// Removing any returned area disconnects the region; removing any other
/// member keeps it connected. Errors when the region is empty or already
/// disconnected.
pub fn articulation_areas(
    instance: &Instance,
    assignment: &Assignment,
    region: usize,
) -> Result<BTreeSet<usize>, VerifyError> {
    let members = assignment.region_members(region);
    if members.is_empty() {
        return Err(VerifyError::EmptyRegion(region));
    }
    let components = region_components(instance, &members);
    if components.len() != 1 {
        return Err(VerifyError::DisconnectedRegion(region));
    }
    let member_set: BTreeSet<usize> = members.iter().copied().collect();
    // Iterative Tarjan lowpoint DFS; explicit stack keeps large regions safe.
    let mut disc: BTreeMap<usize, usize> = BTreeMap::new();
    let mut low: BTreeMap<usize, usize> = BTreeMap::new();
    let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cuts = BTreeSet::new();
    let root = members[0];
    let mut timer = 0usize;
    let mut root_children = 0usize;
    // Stack frames: (node, index into its neighbor list).
    let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
    disc.insert(root, timer);
    low.insert(root, timer);
    timer += 1;
    while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
        let neighbors = instance.neighbors(node);
        if *idx < neighbors.len() {
            let next = neighbors[*idx];
            *idx += 1;
            if !member_set.contains(&next) {
                continue;
            }
            if !disc.contains_key(&next) {
                parent.insert(next, node);
                disc.insert(next, timer);
                low.insert(next, timer);
                timer += 1;
                if node == root {
                    root_children += 1;
                }
                stack.push((next, 0));
            } else if parent.get(&node) != Some(&next) {
                let back = disc[&next];
                let entry = low.get_mut(&node).unwrap();
                *entry = (*entry).min(back);
            }
        } else {
            stack.pop();
            if let Some(&par) = parent.get(&node) {
                let child_low = low[&node];
                let entry = low.get_mut(&par).unwrap();
                *entry = (*entry).min(child_low);
                if par != root && child_low >= disc[&par] {
                    cuts.insert(par);
                }
            }
        }
    }
    if root_children > 1 {
        cuts.insert(root);
    }
    Ok(cuts)
}
