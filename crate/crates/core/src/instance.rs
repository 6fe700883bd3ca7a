//! Problem instances: areas, adjacency, attributes, and dissimilarity weights.
//!
//! An [`Instance`] is an undirected connected graph of `n` areas, each
//! carrying a numeric attribute vector, plus the target region count `p`.
//! Areas are addressed by dense indices `0..n` internally; external files
//! and reports use the 1-based (or arbitrary string) ids from the source
//! document, kept in a side map.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

/// Dissimilarity metric applied to attribute-vector differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Euclidean norm of the attribute difference (default).
    #[default]
    L2,
    /// Manhattan norm of the attribute difference.
    L1,
}

/// Attribute rule used by [`Instance::grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttributeRule {
    /// Every area gets the single attribute `[0.0]`.
    Constant,
    /// Every area gets `[row + col]` of its cell (0-based).
    CoordinateSum,
    /// Uniform values in `[0, 10)` drawn from a seeded generator.
    SeededRandom { seed: u64 },
}

/// Errors raised while constructing or validating an [`Instance`].
#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("duplicate area id {0:?}")]
    DuplicateAreaId(String),
    #[error("unknown area id {0:?} referenced by an edge")]
    UnknownAreaId(String),
    #[error("self-loop on area {0:?}")]
    SelfLoop(String),
    #[error("asymmetric adjacency: edge ({0:?}, {1:?}) has no reverse orientation")]
    AsymmetricAdjacency(String, String),
    #[error("adjacency graph is disconnected: area {0:?} unreachable from {1:?}")]
    Disconnected(String, String),
    #[error("p = {p} out of range for {n} areas (need 1 <= p <= n)")]
    POutOfRange { p: usize, n: usize },
    #[error("area {0:?} has {1} attributes, expected {2}")]
    AttributeLength(String, usize, usize),
    #[error("instance has no areas")]
    Empty,
    #[error("grid needs rows*cols >= p, got {rows}x{cols} with p = {p}")]
    GridTooSmall { rows: usize, cols: usize, p: usize },
    #[error("invalid instance document: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct AreaDoc {
    id: String,
    attrs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    areas: Vec<AreaDoc>,
    edges: Vec<(String, String)>,
    p: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    edges_directed: bool,
    #[serde(default)]
    metric: Metric,
}

fn is_false(b: &bool) -> bool {
    !b
}

/// A validated regionalization instance.
///
/// Immutable after construction; safe to share across solver restarts.
pub struct Instance {
    names: Vec<String>,
    attributes: Vec<Vec<f64>>,
    coordinates: Option<Vec<(f64, f64)>>,
    neighbors: Vec<Vec<usize>>,
    directed_edges: Vec<(usize, usize)>,
    edge_index: HashMap<(usize, usize), usize>,
    p: usize,
    metric: Metric,
    weight_cache: OnceLock<Vec<f64>>,
}

impl fmt::Debug for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Instance")
            .field("n", &self.num_areas())
            .field("directed_edges", &self.directed_edges.len())
            .field("p", &self.p)
            .field("metric", &self.metric)
            .finish()
    }
}

/// Largest area count for which the full weight matrix is cached.
/// Beyond this, weights are recomputed on demand to bound memory.
const WEIGHT_CACHE_LIMIT: usize = 1500;

impl Instance {
    /// Builds an instance from parts. `edges` are undirected pairs of
    /// internal indices; both orientations are derived automatically.
    pub fn new(
        names: Vec<String>,
        attributes: Vec<Vec<f64>>,
        coordinates: Option<Vec<(f64, f64)>>,
        edges: &[(usize, usize)],
        p: usize,
        metric: Metric,
    ) -> Result<Self, InstanceError> {
        let n = names.len();
        if n == 0 {
            return Err(InstanceError::Empty);
        }
        let mut seen = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if seen.insert(name.clone(), i).is_some() {
                return Err(InstanceError::DuplicateAreaId(name.clone()));
            }
        }
        let dim = attributes[0].len();
        for (i, row) in attributes.iter().enumerate() {
            if row.len() != dim {
                return Err(InstanceError::AttributeLength(
                    names[i].clone(),
                    row.len(),
                    dim,
                ));
            }
        }
        if p < 1 || p > n {
            return Err(InstanceError::POutOfRange { p, n });
        }
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a == b {
                return Err(InstanceError::SelfLoop(names[a].clone()));
            }
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        // Connectivity check (BFS from area 0).
        let mut visited = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &neighbors[i] {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(InstanceError::Disconnected(
                names[i].clone(),
                names[0].clone(),
            ));
        }
        let mut directed_edges = Vec::new();
        for (i, list) in neighbors.iter().enumerate() {
            for &j in list {
                directed_edges.push((i, j));
            }
        }
        directed_edges.sort_unstable();
        let edge_index = directed_edges
            .iter()
            .enumerate()
            .map(|(e, &pair)| (pair, e))
            .collect();
        Ok(Self {
            names,
            attributes,
            coordinates,
            neighbors,
            directed_edges,
            edge_index,
            p,
            metric,
            weight_cache: OnceLock::new(),
        })
    }

    /// Parses and validates a JSON instance document.
    pub fn from_json_str(text: &str) -> Result<Self, InstanceError> {
        let doc: InstanceDoc =
            serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
        let mut index = HashMap::new();
        for (i, area) in doc.areas.iter().enumerate() {
            if index.insert(area.id.clone(), i).is_some() {
                return Err(InstanceError::DuplicateAreaId(area.id.clone()));
            }
        }
        let resolve = |id: &String| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| InstanceError::UnknownAreaId(id.clone()))
        };
        let mut undirected = Vec::new();
        if doc.edges_directed {
            // Directed input mode: every orientation must have its reverse.
            let declared: std::collections::HashSet<(usize, usize)> = doc
                .edges
                .iter()
                .map(|(a, b)| Ok((resolve(a)?, resolve(b)?)))
                .collect::<Result<_, InstanceError>>()?;
            for (a, b) in &doc.edges {
                let (ia, ib) = (resolve(a)?, resolve(b)?);
                if !declared.contains(&(ib, ia)) {
                    return Err(InstanceError::AsymmetricAdjacency(a.clone(), b.clone()));
                }
                if ia < ib {
                    undirected.push((ia, ib));
                }
            }
        } else {
            for (a, b) in &doc.edges {
                undirected.push((resolve(a)?, resolve(b)?));
            }
        }
        let names = doc.areas.iter().map(|a| a.id.clone()).collect();
        let attributes = doc.areas.iter().map(|a| a.attrs.clone()).collect();
        let coordinates = if doc.areas.iter().all(|a| a.x.is_some() && a.y.is_some()) {
            Some(
                doc.areas
                    .iter()
                    .map(|a| (a.x.unwrap(), a.y.unwrap()))
                    .collect(),
            )
        } else {
            None
        };
        Self::new(names, attributes, coordinates, &undirected, doc.p, doc.metric)
    }

    /// Reads an instance document from a file path.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Serializes the instance back to its JSON document form.
    pub fn to_json_string(&self) -> String {
        let areas = (0..self.num_areas())
            .map(|i| AreaDoc {
                id: self.names[i].clone(),
                attrs: self.attributes[i].clone(),
                x: self.coordinates.as_ref().map(|c| c[i].0),
                y: self.coordinates.as_ref().map(|c| c[i].1),
            })
            .collect();
        let edges = self
            .directed_edges
            .iter()
            .filter(|&&(a, b)| a < b)
            .map(|&(a, b)| (self.names[a].clone(), self.names[b].clone()))
            .collect();
        let doc = InstanceDoc {
            areas,
            edges,
            p: self.p,
            edges_directed: false,
            metric: self.metric,
        };
        serde_json::to_string_pretty(&doc).expect("instance document serializes")
    }

    /// Generates a rook-adjacency `rows x cols` grid. Areas are numbered
    /// row-major starting at 1; cell centers become coordinates.
    pub fn grid(
        rows: usize,
        cols: usize,
        p: usize,
        rule: AttributeRule,
    ) -> Result<Self, InstanceError> {
        let n = rows * cols;
        if n < p || p == 0 || n == 0 {
            return Err(InstanceError::GridTooSmall { rows, cols, p });
        }
        let names = (1..=n).map(|i| i.to_string()).collect();
        let mut attributes = Vec::with_capacity(n);
        let mut coordinates = Vec::with_capacity(n);
        let mut rng = match rule {
            AttributeRule::SeededRandom { seed } => Some(crate::solve::seeded_rng(seed, 0)),
            _ => None,
        };
        for r in 0..rows {
            for c in 0..cols {
                coordinates.push((c as f64, r as f64));
                let attr = match rule {
                    AttributeRule::Constant => 0.0,
                    AttributeRule::CoordinateSum => (r + c) as f64,
                    AttributeRule::SeededRandom { .. } => {
                        use rand::Rng;
                        rng.as_mut().unwrap().gen_range(0.0..10.0)
                    }
                };
                attributes.push(vec![attr]);
            }
        }
        let mut edges = Vec::new();
        let idx = |r: usize, c: usize| r * cols + c;
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((idx(r, c), idx(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((idx(r, c), idx(r + 1, c)));
                }
            }
        }
        Self::new(names, attributes, Some(coordinates), &edges, p, Metric::L2)
    }

    /// Number of areas `n`.
    pub fn num_areas(&self) -> usize {
        self.names.len()
    }

    /// Target region count `p`.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Returns a copy of this instance with a different target region count.
    pub fn with_p(&self, p: usize) -> Result<Self, InstanceError> {
        let undirected: Vec<(usize, usize)> = self
            .directed_edges
            .iter()
            .copied()
            .filter(|&(a, b)| a < b)
            .collect();
        Self::new(
            self.names.clone(),
            self.attributes.clone(),
            self.coordinates.clone(),
            &undirected,
            p,
            self.metric,
        )
    }

    /// External id of an internal area index.
    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    /// Internal index of an external id, if present.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Attribute vector of an area.
    pub fn attributes(&self, i: usize) -> &[f64] {
        &self.attributes[i]
    }

    /// Optional 2-D centroid coordinates (column-like x, row-like y).
    pub fn coordinates(&self) -> Option<&[(f64, f64)]> {
        self.coordinates.as_deref()
    }

    /// Sorted neighbor list of an area.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// All directed edges, sorted lexicographically. Both orientations of
    /// every undirected adjacency are present.
    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed_edges
    }

    /// Index of a directed edge in [`Self::directed_edges`].
    pub fn edge_id(&self, from: usize, to: usize) -> Option<usize> {
        self.edge_index.get(&(from, to)).copied()
    }

    /// Number of directed edges `|E|`.
    pub fn num_directed_edges(&self) -> usize {
        self.directed_edges.len()
    }

    /// Dissimilarity metric in use.
    pub fn metric(&self) -> Metric {
        self.metric
    }

    fn compute_weight(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.attributes[i], &self.attributes[j]);
        match self.metric {
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }

    /// Dissimilarity weight `w_ij`; symmetric, zero on the diagonal.
    /// Computed on demand and cached for instances up to a size threshold.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let n = self.num_areas();
        if n <= WEIGHT_CACHE_LIMIT {
            let cache = self.weight_cache.get_or_init(|| {
                let mut m = vec![0.0; n * n];
                for a in 0..n {
                    for b in (a + 1)..n {
                        let w = self.compute_weight(a, b);
                        m[a * n + b] = w;
                        m[b * n + a] = w;
                    }
                }
                m
            });
            cache[i * n + j]
        } else {
            self.compute_weight(i, j)
        }
    }

    /// Sum of `w_ij` over all unordered area pairs (used for default
    /// penalty strengths).
    pub fn total_weight(&self) -> f64 {
        let n = self.num_areas();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                total += self.weight(i, j);
            }
        }
        total
    }

    /// Heterogeneity of an assignment: the sum of `w_ij` over unordered
    /// pairs sharing a region.
    pub fn heterogeneity(&self, assignment: &Assignment) -> f64 {
        let n = self.num_areas();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                if assignment.label(i) == assignment.label(j) {
                    total += self.weight(i, j);
                }
            }
        }
        total
    }
}

/// A full labeling of areas by region, `0..p` internally (1-based in
/// external files and reports).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    labels: Vec<usize>,
}

impl Assignment {
    /// Wraps internal 0-based labels.
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    /// Builds from external 1-based labels.
    pub fn from_external(labels: &[usize]) -> Self {
        Self {
            labels: labels.iter().map(|&l| l - 1).collect(),
        }
    }

    /// Internal 0-based label of an area.
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Reassigns one area.
    pub fn set_label(&mut self, i: usize, region: usize) {
        self.labels[i] = region;
    }

    /// All internal labels in area order.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// External 1-based labels in area order.
    pub fn external_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l + 1).collect()
    }

    /// Number of labeled areas.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// True when no areas are labeled.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member areas of one region, ascending.
    pub fn region_members(&self, region: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == region)
            .collect()
    }

    /// Number of areas labeled with each region in `0..p`.
    pub fn region_sizes(&self, p: usize) -> Vec<usize> {
        let mut sizes = vec![0; p];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// True when every region in `0..p` has at least one member.
    pub fn all_regions_nonempty(&self, p: usize) -> bool {
        self.region_sizes(p).iter().all(|&s| s > 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_area_instance(a: f64, b: f64) -> Instance {
        Instance::new(
            vec!["1".into(), "2".into()],
            vec![vec![a], vec![b]],
            None,
            &[(0, 1)],
            1,
            Metric::L2,
        )
        .unwrap()
    }

    #[test]
    fn grid_3x3_has_24_directed_edges() {
        let inst = Instance::grid(3, 3, 3, AttributeRule::Constant).unwrap();
        assert_eq!(inst.num_areas(), 9);
        assert_eq!(inst.num_directed_edges(), 24);
        // Row-major numbering: area 1 at (0,0), area 5 at (1,1).
        assert_eq!(inst.name(0), "1");
        assert_eq!(inst.coordinates().unwrap()[4], (1.0, 1.0));
    }

    #[test]
    fn grid_degenerate_and_small() {
        let inst = Instance::grid(1, 1, 1, AttributeRule::Constant).unwrap();
        assert_eq!(inst.num_areas(), 1);
        assert_eq!(inst.num_directed_edges(), 0);

        let inst = Instance::grid(2, 3, 2, AttributeRule::CoordinateSum).unwrap();
        assert_eq!(inst.num_areas(), 6);
        assert_eq!(inst.num_directed_edges(), 14); // 7 undirected rook adjacencies
        assert_eq!(inst.attributes(5), &[3.0]); // cell (1,2)
    }

    #[test]
    fn grid_rejects_oversized_p() {
        assert!(matches!(
            Instance::grid(2, 2, 5, AttributeRule::Constant),
            Err(InstanceError::GridTooSmall { .. })
        ));
    }

    #[test]
    fn grid_seeded_random_is_reproducible() {
        let a = Instance::grid(3, 3, 2, AttributeRule::SeededRandom { seed: 7 }).unwrap();
        let b = Instance::grid(3, 3, 2, AttributeRule::SeededRandom { seed: 7 }).unwrap();
        let c = Instance::grid(3, 3, 2, AttributeRule::SeededRandom { seed: 8 }).unwrap();
        for i in 0..9 {
            assert_eq!(a.attributes(i), b.attributes(i));
        }
        assert!((0..9).any(|i| a.attributes(i) != c.attributes(i)));
    }

    #[test]
    fn load_from_json_round_trip() {
        let inst = Instance::grid(3, 3, 3, AttributeRule::CoordinateSum).unwrap();
        let text = inst.to_json_string();
        let back = Instance::from_json_str(&text).unwrap();
        assert_eq!(back.num_areas(), 9);
        assert_eq!(back.num_directed_edges(), 24);
        assert_eq!(back.p(), 3);
        assert_eq!(back.attributes(4), inst.attributes(4));
    }

    #[test]
    fn load_single_area() {
        let text = r#"{"areas": [{"id": "1", "attrs": [0.0]}], "edges": [], "p": 1}"#;
        let inst = Instance::from_json_str(text).unwrap();
        assert_eq!(inst.num_areas(), 1);
        assert_eq!(inst.num_directed_edges(), 0);
    }

    #[test]
    fn load_rejects_duplicate_ids() {
        let text = r#"{"areas": [{"id": "1", "attrs": [0.0]}, {"id": "1", "attrs": [0.0]}],
                       "edges": [["1", "1"]], "p": 1}"#;
        assert!(matches!(
            Instance::from_json_str(text),
            Err(InstanceError::DuplicateAreaId(id)) if id == "1"
        ));
    }

    #[test]
    fn load_rejects_asymmetric_directed_input() {
        let text = r#"{"areas": [{"id": "1", "attrs": [0.0]}, {"id": "2", "attrs": [0.0]}],
                       "edges": [["1", "2"]], "p": 1, "edges_directed": true}"#;
        assert!(matches!(
            Instance::from_json_str(text),
            Err(InstanceError::AsymmetricAdjacency(a, b)) if a == "1" && b == "2"
        ));
        let ok = r#"{"areas": [{"id": "1", "attrs": [0.0]}, {"id": "2", "attrs": [0.0]}],
                     "edges": [["1", "2"], ["2", "1"]], "p": 1, "edges_directed": true}"#;
        assert_eq!(Instance::from_json_str(ok).unwrap().num_directed_edges(), 2);
    }

    #[test]
    fn load_rejects_disconnected_graph() {
        let text = r#"{"areas": [{"id": "1", "attrs": [0.0]}, {"id": "2", "attrs": [0.0]},
                                  {"id": "3", "attrs": [0.0]}],
                       "edges": [["1", "2"]], "p": 1}"#;
        assert!(matches!(
            Instance::from_json_str(text),
            Err(InstanceError::Disconnected(id, _)) if id == "3"
        ));
    }

    #[test]
    fn load_rejects_p_out_of_range() {
        let text = r#"{"areas": [{"id": "1", "attrs": [0.0]}, {"id": "2", "attrs": [0.0]}],
                       "edges": [["1", "2"]], "p": 3}"#;
        assert!(matches!(
            Instance::from_json_str(text),
            Err(InstanceError::POutOfRange { p: 3, n: 2 })
        ));
    }

    #[test]
    fn heterogeneity_single_pair_l2() {
        let inst = two_area_instance(3.0, 7.0);
        let same = Assignment::new(vec![0, 0]);
        assert_eq!(inst.heterogeneity(&same), 4.0);
    }

    #[test]
    fn heterogeneity_all_distinct_regions_is_zero() {
        let inst = Instance::grid(2, 2, 4, AttributeRule::SeededRandom { seed: 3 }).unwrap();
        let distinct = Assignment::new(vec![0, 1, 2, 3]);
        assert_eq!(inst.heterogeneity(&distinct), 0.0);
    }

    #[test]
    fn heterogeneity_2x2_block_partition() {
        // Attributes [1,1,9,9]: the six pairwise weights are
        // w12=0, w13=8, w14=8, w23=8, w24=8, w34=0.
        let inst = Instance::new(
            vec!["1".into(), "2".into(), "3".into(), "4".into()],
            vec![vec![1.0], vec![1.0], vec![9.0], vec![9.0]],
            None,
            &[(0, 1), (0, 2), (1, 3), (2, 3)],
            2,
            Metric::L2,
        )
        .unwrap();
        let blocks = Assignment::new(vec![0, 0, 1, 1]);
        assert_eq!(inst.heterogeneity(&blocks), 0.0);
        let stripes = Assignment::new(vec![0, 1, 0, 1]);
        assert_eq!(inst.heterogeneity(&stripes), 16.0);
        assert_eq!(inst.total_weight(), 32.0);
    }

    #[test]
    fn heterogeneity_invariant_under_label_permutation() {
        let inst = Instance::grid(3, 3, 3, AttributeRule::SeededRandom { seed: 11 }).unwrap();
        let a = Assignment::new(vec![0, 0, 1, 0, 1, 1, 2, 2, 2]);
        let b = Assignment::new(vec![2, 2, 0, 2, 0, 0, 1, 1, 1]);
        assert_eq!(inst.heterogeneity(&a), inst.heterogeneity(&b));
    }

    #[test]
    fn l1_metric_behind_flag() {
        let inst = Instance::new(
            vec!["1".into(), "2".into()],
            vec![vec![0.0, 0.0], vec![3.0, 4.0]],
            None,
            &[(0, 1)],
            1,
            Metric::L1,
        )
        .unwrap();
        assert_eq!(inst.weight(0, 1), 7.0);
        let l2 = Instance::new(
            vec!["1".into(), "2".into()],
            vec![vec![0.0, 0.0], vec![3.0, 4.0]],
            None,
            &[(0, 1)],
            1,
            Metric::L2,
        )
        .unwrap();
        assert_eq!(l2.weight(0, 1), 5.0);
    }
}
