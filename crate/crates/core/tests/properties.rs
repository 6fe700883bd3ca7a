//! Randomized cross-checks between independent code paths: the flow
//! oracles against graph search, model energies against their closed
//! forms, and codecs against round-trips.

use proptest::prelude::*;
use rand::Rng;
use regionflow::fixtures;
use regionflow::solve::seeded_rng;
use regionflow::{
    build_qubo, check_contiguity, complete_flows, solve_sa, theorem1_harness, PenaltyConfig,
    Qubo, SaParams, Theorem1Verdict, VariableRegistry,
};
use std::collections::BTreeMap;

fn random_qubo(seed: u64) -> Qubo {
    let mut rng = seeded_rng(seed, 7);
    let n = rng.gen_range(1..=24usize);
    let linear: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut quadratic = BTreeMap::new();
    for i in 0..n as u32 {
        for j in (i + 1)..n as u32 {
            if rng.gen_bool(0.3) {
                quadratic.insert((i, j), rng.gen_range(-2.0..2.0));
            }
        }
    }
    Qubo::new(n, linear, quadratic, rng.gen_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn heterogeneity_is_the_within_region_pair_sum(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, 0);
        let (inst, assignment) = fixtures::random_connected(&mut rng, 12);
        let mut expected = 0.0;
        for i in 0..inst.num_areas() {
            for j in (i + 1)..inst.num_areas() {
                if assignment.label(i) == assignment.label(j) {
                    expected += inst.weight(i, j);
                }
            }
        }
        let got = inst.heterogeneity(&assignment);
        prop_assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn flow_completion_agrees_with_contiguity(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, 1);
        let (inst, assignment) = fixtures::random_connected(&mut rng, 10);
        let p = inst.p();
        let seeds = fixtures::lowest_member_roots(&assignment, p);
        let report = check_contiguity(&inst, &assignment);
        let flows = complete_flows(&inst, &assignment, &seeds).unwrap();
        prop_assert_eq!(report.all_connected(), flows.is_some());
        if let Some(flows) = flows {
            let sizes = assignment.region_sizes(p);
            for area in 0..inst.num_areas() {
                let net = flows.net_inflow(&inst, area);
                match seeds.region_of_root(area) {
                    Some(region) => {
                        prop_assert_eq!(-net, sizes[region] as i64 - 1)
                    }
                    None => prop_assert_eq!(net, 1),
                }
            }
            for ((from, to), value) in flows.iter() {
                prop_assert!(value > 0);
                prop_assert_eq!(assignment.label(from), assignment.label(to));
            }
        }
    }

    #[test]
    fn theorem1_search_is_consistent_with_contiguity(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, 2);
        let (inst, assignment) = fixtures::random_connected(&mut rng, 5);
        let seeds = fixtures::lowest_member_roots(&assignment, inst.p());
        let m = (inst.num_areas() - 1) as u64;
        let verdict = theorem1_harness(&inst, &assignment, &seeds, m, 100_000_000).unwrap();
        let connected = check_contiguity(&inst, &assignment).all_connected();
        match verdict {
            Theorem1Verdict::Found { .. } => prop_assert!(connected),
            Theorem1Verdict::NoneExists { .. } => prop_assert!(!connected),
            Theorem1Verdict::Inconclusive => prop_assert!(false, "budget too small"),
        }
    }

    #[test]
    fn registry_indexing_round_trips(
        n in 1usize..12,
        p in 1usize..4,
        e in 0usize..30,
        l in 0u32..6,
    ) {
        let reg = VariableRegistry::new(n, p, e, l);
        prop_assert_eq!(reg.num_vars(), n * p + e * l as usize + e * p);
        for var in 0..reg.num_vars() as u32 {
            let back = match reg.kind(var) {
                regionflow::qubo::VarKind::Assign { area, region } => reg.assign(area, region),
                regionflow::qubo::VarKind::FlowBit { edge, bit } => reg.flow_bit(edge, bit),
                regionflow::qubo::VarKind::Link { edge, region } => reg.link(edge, region),
            };
            prop_assert_eq!(back, var);
        }
    }

    #[test]
    fn flip_delta_matches_reevaluation(seed in any::<u64>()) {
        let qubo = random_qubo(seed);
        let mut rng = seeded_rng(seed, 8);
        let mut bits: Vec<bool> = (0..qubo.num_vars).map(|_| rng.gen()).collect();
        let mut energy = qubo.evaluate(&bits);
        for _ in 0..30 {
            let var = rng.gen_range(0..qubo.num_vars);
            energy += qubo.flip_delta(&bits, var);
            bits[var] = !bits[var];
            prop_assert!((energy - qubo.evaluate(&bits)).abs() < 1e-9);
        }
    }

    #[test]
    fn encode_then_decode_round_trips(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, 3);
        let (inst, assignment) = fixtures::random_connected(&mut rng, 8);
        let seeds = fixtures::lowest_member_roots(&assignment, inst.p());
        let penalty = PenaltyConfig::defaults_for(&inst);
        let model = build_qubo(&inst, &seeds, &penalty).unwrap();
        let mut flows = regionflow::FlowConfig::new();
        for &(from, to) in inst.directed_edges() {
            flows.set(from, to, rng.gen_range(0..=penalty.flow_max()));
        }
        let bits = model.encode(&inst, &assignment, &flows).unwrap();
        let (labels, decoded_flows, _) = model.decode(&inst, &bits);
        prop_assert_eq!(labels.labels(), assignment.labels());
        prop_assert_eq!(decoded_flows, flows);
    }

    #[test]
    fn removing_a_non_articulation_area_keeps_its_region_connected(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, 4);
        let (inst, assignment) = fixtures::random_connected(&mut rng, 10);
        let report = check_contiguity(&inst, &assignment);
        for region in 0..inst.p() {
            let members = assignment.region_members(region);
            if members.len() < 2 || !report.regions[region].connected() {
                continue;
            }
            let cut = regionflow::articulation_areas(&inst, &assignment, region).unwrap();
            for &area in &members {
                if cut.contains(&area) {
                    continue;
                }
                // BFS over the member set with this area removed.
                let remaining: Vec<usize> =
                    members.iter().copied().filter(|&b| b != area).collect();
                let mut seen = std::collections::BTreeSet::from([remaining[0]]);
                let mut queue = std::collections::VecDeque::from([remaining[0]]);
                while let Some(a) = queue.pop_front() {
                    for &b in inst.neighbors(a) {
                        if remaining.contains(&b) && seen.insert(b) {
                            queue.push_back(b);
                        }
                    }
                }
                prop_assert_eq!(seen.len(), remaining.len());
            }
        }
    }

    #[test]
    fn annealer_output_is_sorted_and_reproducible(seed in any::<u64>()) {
        let qubo = random_qubo(seed);
        let params = SaParams {
            restarts: 4,
            sweeps: 60,
            seed,
            ..SaParams::default()
        };
        let first = solve_sa(&qubo, &params).unwrap();
        let second = solve_sa(&qubo, &params).unwrap();
        prop_assert_eq!(&first, &second);
        for pair in first.windows(2) {
            prop_assert!(pair[0].energy <= pair[1].energy);
        }
        for sample in &first {
            prop_assert!((sample.energy - qubo.evaluate(&sample.bits)).abs() < 1e-9);
        }
    }
}
