//! Seeded property tests over the public API.

use proptest::prelude::*;
use rand::Rng;
use robcond_core::bounds::{
    conditional_lower_bound_general, min_joint_probability, rank_by_confidence,
    smoothed_multiclass_ratios, smoothed_multiclass_scores, ConditionalQuery,
};
use robcond_core::estimation::{estimate_marginals, Sample, SampleTable};
use robcond_core::flow::{build_flow_network, chain_max_flow};
use robcond_core::model::{
    validate_marginals, Assignment, AssignmentUniverse, DiscreteDomain, GraphStructure,
    MarginalVector, PairwiseTables,
};
use robcond_core::oracle::{
    instance_rng, oracle_max_universe, oracle_min_conditional, oracle_min_joint, random_assignment,
    random_domain, random_member, random_tree, random_universe, sample_consistent_joint,
    InstanceRng,
};
use robcond_core::polytope::{max_universe_probability, max_universe_probability_excluding};
use robcond_core::Error;

const CAP: usize = 4096;

fn random_rows(
    rng: &mut InstanceRng,
    domain: &DiscreteDomain,
    count: usize,
    labels: Option<usize>,
) -> SampleTable {
    SampleTable::new(
        (0..count)
            .map(|_| Sample {
                values: random_assignment(rng, domain),
                label: labels.map(|l| rng.gen_range(0..l)),
            })
            .collect(),
    )
}

/// A random tree with one edge removed, so at least two components.
fn random_forest(rng: &mut InstanceRng, n: usize) -> GraphStructure {
    let domain = random_domain(rng, n, 3);
    let tree = random_tree(rng, domain);
    let mut edges = tree.edges().to_vec();
    edges.remove(rng.gen_range(0..edges.len()));
    tree.with_edges(&edges).unwrap()
}

/// Grows each allowed set by at most one value.
fn superset(
    rng: &mut InstanceRng,
    u: &AssignmentUniverse,
    d: &DiscreteDomain,
) -> AssignmentUniverse {
    let allowed = (0..d.num_variables())
        .map(|i| {
            let mut set = u.allowed(i).to_vec();
            let extra = rng.gen_range(0..d.cardinality(i));
            if !set.contains(&extra) {
                set.push(extra);
                set.sort_unstable();
            }
            set
        })
        .collect();
    AssignmentUniverse::new(d, allowed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimates_always_validate(seed in any::<u64>(), alpha in 0.0f64..3.0, labeled in any::<bool>()) {
        let mut rng = instance_rng(seed);
        let n = rng.gen_range(1..=5);
        let domain = random_domain(&mut rng, n, 4);
        let graph = random_tree(&mut rng, domain);
        let labels = labeled.then(|| rng.gen_range(2..=3));
        let count = rng.gen_range(1..=30);
        let data = random_rows(&mut rng, graph.domain(), count, labels);
        let m = estimate_marginals(&data, &graph, alpha, labels).unwrap();
        let report = validate_marginals(&m);
        prop_assert!(report.is_ok(), "{}", report.summary());
        if let Some(l) = labels {
            let total: f64 = (0..l)
                .map(|y| {
                    let s = m.label_slice(y).unwrap();
                    (0..graph.domain().cardinality(0)).map(|a| s.single(0, a)).sum::<f64>()
                })
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unsmoothed_estimates_are_frequencies(seed in any::<u64>()) {
        let mut rng = instance_rng(seed);
        let n = rng.gen_range(2..=4);
        let domain = random_domain(&mut rng, n, 3);
        let graph = random_tree(&mut rng, domain);
        let count = rng.gen_range(1..=25);
        let data = random_rows(&mut rng, graph.domain(), count, Some(2));
        let m = estimate_marginals(&data, &graph, 0.0, Some(2)).unwrap();
        let domain = graph.domain();
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            for a in 0..domain.cardinality(i) {
                for b in 0..domain.cardinality(j) {
                    for y in 0..2 {
                        let hits = data
                            .rows
                            .iter()
                            .filter(|r| r.values[i] == a && r.values[j] == b && r.label == Some(y))
                            .count();
                        let want = hits as f64 / count as f64;
                        prop_assert!((m.labeled_pair(e, a, b, y) - want).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn universe_maximum_is_monotone(seed in any::<u64>()) {
        let mut rng = instance_rng(seed);
        let n = rng.gen_range(2..=4);
        let graph = GraphStructure::chain(random_domain(&mut rng, n, 3));
        let (_, m) = sample_consistent_joint(&graph, None, rng.gen(), CAP).unwrap();
        let small = random_universe(&mut rng, graph.domain());
        let large = superset(&mut rng, &small, graph.domain());
        let lp_small = max_universe_probability(&small, &m).unwrap().value;
        let lp_large = max_universe_probability(&large, &m).unwrap().value;
        prop_assert!(lp_small <= lp_large + 1e-9);
        let flow_small = chain_max_flow(&build_flow_network(&small, &m).unwrap()).value;
        let flow_large = chain_max_flow(&build_flow_network(&large, &m).unwrap()).value;
        prop_assert!(flow_small <= flow_large + 1e-12);
    }

    #[test]
    fn flow_decomposition_is_feasible(seed in any::<u64>()) {
        let mut rng = instance_rng(seed);
        let n = rng.gen_range(1..=5);
        let graph = GraphStructure::chain(random_domain(&mut rng, n, 3));
        let (_, m) = sample_consistent_joint(&graph, None, rng.gen(), CAP).unwrap();
        let u = random_universe(&mut rng, graph.domain());
        let net = build_flow_network(&u, &m).unwrap();
        let flow = chain_max_flow(&net);
        let dist = flow.decompose(&net);
        prop_assert!((dist.total() - flow.value).abs() < 1e-12);
        for (x, p) in &dist.atoms {
            prop_assert!(u.contains(x));
            prop_assert!(*p > 0.0);
        }
        let (singles, pairs) = dist.marginals(&graph);
        for (i, t) in singles.iter().enumerate() {
            for (a, v) in t.iter().enumerate() {
                prop_assert!(*v <= m.single(i, a) + 1e-12);
            }
        }
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            let kj = graph.domain().cardinality(j);
            for a in 0..graph.domain().cardinality(i) {
                for b in 0..kj {
                    prop_assert!(pairs[e][a * kj + b] <= m.pair(e, a, b) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn forests_match_the_oracle(seed in any::<u64>()) {
        let mut rng = instance_rng(seed);
        let n = rng.gen_range(2..=4);
        let graph = random_forest(&mut rng, n);
        let (_, m) = sample_consistent_joint(&graph, None, rng.gen(), CAP).unwrap();
        let x = random_assignment(&mut rng, graph.domain());

        let closed = min_joint_probability(&Assignment::full(x.clone()), &m).unwrap().value;
        let oracle = oracle_min_joint(&x, &m, CAP).unwrap();
        prop_assert!((closed - oracle).abs() <= 1e-6, "min joint {} vs {}", closed, oracle);

        let u = random_universe(&mut rng, graph.domain());
        let member = random_member(&mut rng, &u);
        let lp = max_universe_probability_excluding(&u, &Assignment::full(member.clone()), &m)
            .unwrap()
            .value;
        let oracle = oracle_max_universe(&u, &m, Some(&member), CAP).unwrap();
        prop_assert!((lp - oracle).abs() <= 1e-6, "exclusion {} vs {}", lp, oracle);

        let observed_var = rng.gen_range(0..n);
        let mut observed = Assignment::empty(n);
        let mut hidden = Assignment::empty(n);
        for (i, &v) in x.iter().enumerate() {
            if i == observed_var {
                observed.set(i, Some(v));
            } else {
                hidden.set(i, Some(v));
            }
        }
        let bound = conditional_lower_bound_general(&observed, &hidden, &m);
        let oracle = oracle_min_conditional(&observed, &hidden, &m, CAP);
        match (bound, oracle) {
            (Ok(b), Ok(o)) => prop_assert!((b.value - o).abs() <= 1e-6, "conditional {} vs {}", b.value, o),
            (Err(Error::Unconditioned), Err(Error::Unconditioned)) => {}
            (b, o) => prop_assert!(false, "bound {:?} vs oracle {:?}", b.map(|r| r.value), o),
        }
    }

    #[test]
    fn ranking_orders_individual_bounds(seed in any::<u64>()) {
        let mut rng = instance_rng(seed);
        let n = rng.gen_range(2..=3);
        let domain = random_domain(&mut rng, n, 3);
        let graph = random_tree(&mut rng, domain);
        let (_, m) = sample_consistent_joint(&graph, Some(3), rng.gen(), CAP).unwrap();
        let queries: Vec<ConditionalQuery> = (0..6)
            .map(|_| {
                let x = random_assignment(&mut rng, graph.domain());
                ConditionalQuery::multiclass(&x, rng.gen_range(0..3))
            })
            .collect();
        let ranked = rank_by_confidence(&queries, &m);
        prop_assert_eq!(ranked.len(), queries.len());
        let mut seen = vec![false; queries.len()];
        let mut last = f64::INFINITY;
        let mut failed = false;
        for entry in &ranked {
            seen[entry.index] = true;
            let direct = queries[entry.index].bound(&m);
            match (&entry.outcome, direct) {
                (Ok(r), Ok(d)) => {
                    prop_assert!(!failed, "errors must rank last");
                    prop_assert_eq!(r.value, d.value);
                    prop_assert!(r.value <= last);
                    last = r.value;
                }
                (Err(e), Err(d)) => {
                    failed = true;
                    prop_assert_eq!(e, &d);
                }
                (r, d) => prop_assert!(false, "{:?} vs {:?}", r, d),
            }
        }
        prop_assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn smoothed_scores_are_continuous(seed in any::<u64>(), coordinate in 0usize..4) {
        let mut rng = instance_rng(seed);
        let n = rng.gen_range(2..=4);
        let graph = random_tree(&mut rng, DiscreteDomain::new(vec![2; n]).unwrap());
        let (_, m) = sample_consistent_joint(&graph, Some(3), rng.gen(), CAP).unwrap();
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let scores = smoothed_multiclass_scores(&z, &m).unwrap();
        prop_assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let base = smoothed_multiclass_ratios(&z, &m).unwrap();
        let mut nudged = z.clone();
        nudged[coordinate % n] += 1e-9;
        let moved = smoothed_multiclass_ratios(&nudged, &m).unwrap();
        // Undefined ratios are pinned to 0, which is the one allowed jump.
        let reachable = base.iter().any(|r| *r > 0.0) && moved.iter().any(|r| *r > 0.0);
        if reachable {
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a - b).abs() <= 1e-4, "{:?} vs {:?}", base, moved);
            }
        }
    }
}

#[test]
fn forest_slice_mass_is_shared_across_components() {
    // Two fair coins with no edge: perfect correlation gives (0, 1) zero mass.
    let graph = GraphStructure::new(DiscreteDomain::new(vec![2, 2]).unwrap(), &[]).unwrap();
    let m = MarginalVector::new(graph, None, vec![vec![0.5, 0.5]; 2], Vec::new()).unwrap();
    let x = Assignment::full(vec![0, 1]);
    assert_eq!(min_joint_probability(&x, &m).unwrap().value, 0.0);
    assert_eq!(oracle_min_joint(&[0, 1], &m, CAP).unwrap(), 0.0);

    let graph = GraphStructure::new(DiscreteDomain::new(vec![2, 2]).unwrap(), &[]).unwrap();
    let m = MarginalVector::new(
        graph,
        None,
        vec![vec![0.8, 0.2], vec![0.7, 0.3]],
        Vec::new(),
    )
    .unwrap();
    // 0.8 + 0.7 - 1
    let v = min_joint_probability(&Assignment::full(vec![0, 0]), &m)
        .unwrap()
        .value;
    assert!((v - 0.5).abs() < 1e-15);
}
