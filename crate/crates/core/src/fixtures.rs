//! Reference instances shared by tests and the benchmark harness.
//!
//! The centerpiece is a nine-area grid whose area numbering is
//! deliberately scrambled relative to the geometry, with three regions,
//! fixed roots, and a known balanced flow — small enough to reason about
//! by hand, rich enough to exercise every penalty term.

use crate::dqm::Seeds;
use crate::instance::{Assignment, Instance, Metric};
use crate::verify::FlowConfig;
use rand::Rng;

/// Nine areas on a 3x3 grid with rook adjacency and scrambled numbering:
///
/// ```text
///   5 7 6
///   1 2 9
///   3 4 8
/// ```
///
/// Area "6" neighbors "7" and "9" but not "5"; "7" bridges "5" and "6".
/// Each area's single attribute equals its number, so the dissimilarity of
/// two areas is the absolute difference of their numbers.
pub fn three_by_three() -> Instance {
    let layout: [[usize; 3]; 3] = [[5, 7, 6], [1, 2, 9], [3, 4, 8]];
    let names: Vec<String> = (1..=9).map(|i| i.to_string()).collect();
    let attrs: Vec<Vec<f64>> = (1..=9).map(|i| vec![i as f64]).collect();
    let mut coords = vec![(0.0, 0.0); 9];
    let mut edges = Vec::new();
    for (row, row_names) in layout.iter().enumerate() {
        for (col, &name) in row_names.iter().enumerate() {
            coords[name - 1] = (col as f64, row as f64);
            if col + 1 < 3 {
                edges.push((name - 1, layout[row][col + 1] - 1));
            }
            if row + 1 < 3 {
                edges.push((name - 1, layout[row + 1][col] - 1));
            }
        }
    }
    Instance::new(names, attrs, Some(coords), &edges, 3, Metric::L2)
        .expect("reference instance is well-formed")
}

/// The contiguous three-region partition of [`three_by_three`]:
/// `{8, 9}`, `{1, 2, 3, 4}`, `{5, 6, 7}`. Heterogeneity 15.
pub fn connected_labels() -> Assignment {
    Assignment::new(vec![1, 1, 1, 1, 2, 2, 2, 0, 0])
}

/// The broken variant: area "7" defects to the first region, which
/// disconnects both the first region (`{7}` vs `{8, 9}`) and the third
/// (`{5}` vs `{6}`).
pub fn disconnected_labels() -> Assignment {
    Assignment::new(vec![1, 1, 1, 1, 2, 2, 0, 0, 0])
}

/// Roots of the three regions: "9", "2", and "6". Both label fixtures keep
/// every root inside its own region.
pub fn roots() -> Seeds {
    Seeds::new(vec![8, 1, 5], 3).expect("distinct roots")
}

/// A balanced flow for [`connected_labels`] that is not the spanning-tree
/// completion: the third region routes three units "6" -> "7" and returns
/// one unit "7" -> "6", so flow circulates yet every balance holds.
pub fn worked_flows(instance: &Instance) -> FlowConfig {
    let mut flows = FlowConfig::new();
    let mut set = |from: &str, to: &str, value: u64| {
        flows.set(
            instance.index_of(from).unwrap(),
            instance.index_of(to).unwrap(),
            value,
        );
    };
    set("6", "7", 3);
    set("7", "6", 1);
    set("7", "5", 1);
    set("9", "8", 1);
    set("2", "1", 1);
    set("2", "4", 2);
    set("4", "3", 1);
    flows
}

/// Random connected instance: `2..=max_n` areas on a random spanning tree
/// plus a few extra edges, uniform attributes in `[0, 10)`, and a random
/// region count in `1..=min(3, n)`. The returned assignment labels every
/// region nonempty but makes no contiguity promise.
pub fn random_connected<R: Rng>(rng: &mut R, max_n: usize) -> (Instance, Assignment) {
    let n = rng.gen_range(2..=max_n.max(2));
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b && !edges.contains(&(a.min(b), b.max(a))) {
            edges.push((a.min(b), b.max(a)));
        }
    }
    let names: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    let attrs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..10.0)]).collect();
    let p = rng.gen_range(1..=3.min(n));
    let inst = Instance::new(names, attrs, None, &edges, p, Metric::L2)
        .expect("spanning tree keeps the instance connected");
    let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..p)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for (k, &area) in order.iter().take(p).enumerate() {
        labels[area] = k;
    }
    (inst, Assignment::new(labels))
}

/// Lowest-numbered member of each region, as root seeds.
pub fn lowest_member_roots(assignment: &Assignment, p: usize) -> Seeds {
    let roots = (0..p)
        .map(|k| {
            *assignment
                .region_members(k)
                .first()
                .expect("every region nonempty")
        })
        .collect();
    Seeds::new(roots, p).expect("region members are distinct")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::check_contiguity;

    #[test]
    fn layout_has_the_advertised_adjacencies() {
        let inst = three_by_three();
        let idx = |name: &str| inst.index_of(name).unwrap();
        let adjacent = |a: &str, b: &str| inst.neighbors(idx(a)).contains(&idx(b));
        assert!(adjacent("6", "7"));
        assert!(adjacent("7", "5"));
        assert!(!adjacent("5", "6"));
        assert!(adjacent("6", "9"));
        assert_eq!(inst.num_directed_edges(), 24);
    }

    #[test]
    fn label_fixtures_behave_as_documented() {
        let inst = three_by_three();
        assert!(check_contiguity(&inst, &connected_labels()).all_connected());
        assert!(!check_contiguity(&inst, &disconnected_labels()).all_connected());
        assert_eq!(inst.heterogeneity(&connected_labels()), 15.0);
        for labels in [connected_labels(), disconnected_labels()] {
            for (region, &root) in roots().roots().iter().enumerate() {
                assert_eq!(labels.label(root), region);
            }
        }
    }

    #[test]
    fn worked_flows_balance_every_area() {
        let inst = three_by_three();
        let labels = connected_labels();
        let seeds = roots();
        let flows = worked_flows(&inst);
        for i in 0..inst.num_areas() {
            let region = labels.label(i);
            let expected = if seeds.roots()[region] == i {
                1 - labels.region_members(region).len() as i64
            } else {
                1
            };
            assert_eq!(flows.net_inflow(&inst, i), expected, "area {}", inst.name(i));
        }
        // Flow stays within regions.
        for ((from, to), value) in flows.iter() {
            assert_eq!(labels.label(from), labels.label(to));
            assert!(value >= 1);
        }
    }

    #[test]
    fn random_instances_are_connected_with_nonempty_regions() {
        let mut rng = crate::solve::seeded_rng(7, 0);
        for _ in 0..50 {
            let (inst, labels) = random_connected(&mut rng, 12);
            let all = Assignment::new(vec![0; inst.num_areas()]);
            assert!(check_contiguity(&inst, &all).regions[0].connected());
            assert!(labels.all_regions_nonempty(inst.p()));
            let seeds = lowest_member_roots(&labels, inst.p());
            for (region, &root) in seeds.roots().iter().enumerate() {
                assert_eq!(labels.label(root), region);
            }
        }
    }
}
