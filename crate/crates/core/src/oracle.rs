//! Brute-force reference solvers over the full assignment space, plus seeded
//! instance generators.
//!
//! Every oracle materializes one LP variable per joint assignment of the
//! coordinate domain (features, then the label as a trailing coordinate when
//! the marginals carry one), so they are limited to small instances.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Relation, Sense};
use crate::model::{
    validate_marginals, Assignment, AssignmentUniverse, DiscreteDomain, GraphStructure,
    MarginalVector,
};

pub use crate::polytope::DEFAULT_ATOM_CAP;

/// Seeded generator used by the instance builders.
pub type InstanceRng = ChaCha8Rng;

pub fn instance_rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A dense joint distribution over every assignment of a domain.
///
/// Probabilities are stored in lexicographic order, last coordinate fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    domain: DiscreteDomain,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(domain: DiscreteDomain, probs: Vec<f64>) -> Result<Self> {
        let count = domain.num_assignments();
        if count != probs.len() as u128 {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for {count} assignments",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidMarginals(
                "negative or non-finite probability".into(),
            ));
        }
        Ok(Self { domain, probs })
    }

    pub fn domain(&self) -> &DiscreteDomain {
        &self.domain
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, values: &[usize]) -> usize {
        values
            .iter()
            .zip(self.domain.cardinalities())
            .fold(0, |acc, (&v, &k)| acc * k + v)
    }

    pub fn probability(&self, values: &[usize]) -> f64 {
        self.probs[self.index_of(values)]
    }

    /// Total mass of the assignments agreeing with a partial assignment.
    pub fn mass(&self, partial: &Assignment) -> f64 {
        AssignmentUniverse::full(&self.domain)
            .iter()
            .zip(&self.probs)
            .filter(|(u, _)| partial.assigned().all(|(i, v)| u[i] == v))
            .map(|(_, p)| p)
            .sum()
    }

    /// `p(hidden | observed)`, or `None` when `p(observed) = 0`.
    pub fn conditional(&self, observed: &Assignment, hidden: &Assignment) -> Result<Option<f64>> {
        let den = self.mass(observed);
        if den <= 0.0 {
            return Ok(None);
        }
        Ok(Some(self.mass(&observed.merge(hidden)?) / den))
    }

    /// Exact singleton and pairwise marginals on `graph`. With a label
    /// cardinality, the distribution's last coordinate is the label and
    /// `graph` covers the remaining ones.
    pub fn marginals(
        &self,
        graph: &GraphStructure,
        label_cardinality: Option<usize>,
    ) -> Result<MarginalVector> {
        let expected = match label_cardinality {
            Some(l) => graph.domain().with_extra(l)?,
            None => graph.domain().clone(),
        };
        if expected != self.domain {
            return Err(Error::ShapeMismatch(
                "joint domain does not match the graph".into(),
            ));
        }
        let l = label_cardinality.unwrap_or(1);
        let n = graph.num_nodes();
        let domain = graph.domain();
        let mut singles: Vec<Vec<f64>> = domain
            .cardinalities()
            .iter()
            .map(|&k| vec![0.0; k * l])
            .collect();
        let mut pairs: Vec<Vec<f64>> = graph
            .edges()
            .iter()
            .map(|&(i, j)| vec![0.0; domain.cardinality(i) * domain.cardinality(j) * l])
            .collect();
        for (u, &p) in AssignmentUniverse::full(&self.domain)
            .iter()
            .zip(&self.probs)
        {
            let y = if label_cardinality.is_some() { u[n] } else { 0 };
            for i in 0..n {
                singles[i][u[i] * l + y] += p;
            }
            for (e, &(i, j)) in graph.edges().iter().enumerate() {
                pairs[e][(u[i] * domain.cardinality(j) + u[j]) * l + y] += p;
            }
        }
        MarginalVector::new(graph.clone(), label_cardinality, singles, pairs)
    }
}

struct ExponentialSystem {
    atoms: Vec<Vec<usize>>,
    /// Per marginal entry, the atoms it sums over and its target value.
    rows: Vec<(Vec<usize>, f64)>,
}

fn exponential_system(marginals: &MarginalVector, cap: usize) -> Result<ExponentialSystem> {
    let coords = marginals.coordinate_domain();
    let count = coords.num_assignments();
    if count > cap as u128 {
        return Err(Error::CapExceeded { atoms: count, cap });
    }
    let graph = marginals.graph();
    let domain = graph.domain();
    let n = graph.num_nodes();
    let l = marginals.label_cardinality().unwrap_or(1);

    let mut offsets = Vec::with_capacity(n + graph.edges().len());
    let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
    for i in 0..n {
        offsets.push(rows.len());
        rows.extend(marginals.single_table(i).iter().map(|&v| (Vec::new(), v)));
    }
    for e in 0..graph.edges().len() {
        offsets.push(rows.len());
        rows.extend(marginals.pair_table(e).iter().map(|&v| (Vec::new(), v)));
    }

    let atoms: Vec<Vec<usize>> = AssignmentUniverse::full(&coords).iter().collect();
    for (a, u) in atoms.iter().enumerate() {
        let y = if marginals.is_labeled() { u[n] } else { 0 };
        for i in 0..n {
            rows[offsets[i] + u[i] * l + y].0.push(a);
        }
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            rows[offsets[n + e] + (u[i] * domain.cardinality(j) + u[j]) * l + y]
                .0
                .push(a);
        }
    }
    Ok(ExponentialSystem { atoms, rows })
}

fn realizability_error(marginals: &MarginalVector) -> Error {
    let report = validate_marginals(marginals);
    if report.is_ok() {
        Error::Unrealizable
    } else {
        Error::InvalidMarginals(report.summary())
    }
}

/// Optimizes the total mass of the atoms selected by `objective` over P(μ).
fn optimize_mass<F: Fn(&[usize]) -> bool>(
    marginals: &MarginalVector,
    sense: Sense,
    objective: F,
    cap: usize,
) -> Result<f64> {
    let system = exponential_system(marginals, cap)?;
    let mut lp = LinearProgram::new(sense);
    for u in &system.atoms {
        lp.add_variable(if objective(u) { 1.0 } else { 0.0 }, 0.0, f64::INFINITY);
    }
    for (atoms, target) in &system.rows {
        lp.add_constraint(
            atoms.iter().map(|&a| (a, 1.0)).collect(),
            Relation::Eq,
            *target,
        );
    }
    let sol = lp.solve();
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        LpStatus::Infeasible => Err(realizability_error(marginals)),
        LpStatus::Unbounded => Err(Error::Unbounded),
        LpStatus::NumericalFailure => Err(Error::NumericalFailure),
    }
}

fn check_coordinates(marginals: &MarginalVector, values: &[usize]) -> Result<()> {
    Assignment::full(values.to_vec()).validate(&marginals.coordinate_domain())
}

/// `min_{p ∈ P(μ)} p(x)`; `x` covers the coordinate domain (label last when labeled).
pub fn oracle_min_joint(x: &[usize], marginals: &MarginalVector, cap: usize) -> Result<f64> {
    check_coordinates(marginals, x)?;
    optimize_mass(marginals, Sense::Minimize, |u| u == x, cap)
}

/// `max_{p ∈ P(μ)} p(x)`; `x` covers the coordinate domain (label last when labeled).
pub fn oracle_max_joint(x: &[usize], marginals: &MarginalVector, cap: usize) -> Result<f64> {
    check_coordinates(marginals, x)?;
    optimize_mass(marginals, Sense::Maximize, |u| u == x, cap)
}

/// `max_{p ∈ P(μ)} Σ_{u ∈ U \ {exclude}} p(u)` with `U` over the coordinate domain.
pub fn oracle_max_universe(
    universe: &AssignmentUniverse,
    marginals: &MarginalVector,
    exclude: Option<&[usize]>,
    cap: usize,
) -> Result<f64> {
    let coords = marginals.coordinate_domain();
    if universe.num_variables() != coords.num_variables() {
        return Err(Error::DimensionMismatch {
            expected: coords.num_variables(),
            found: universe.num_variables(),
        });
    }
    if let Some(x) = exclude {
        check_coordinates(marginals, x)?;
    }
    optimize_mass(
        marginals,
        Sense::Maximize,
        |u| universe.contains(u) && exclude != Some(u),
        cap,
    )
}

/// `min_{p ∈ P(μ), p(x_o) > 0} p(x_h | x_o)` through the Charnes-Cooper
/// linearization: with `q = p / p(x_o)` and `t = 1 / p(x_o)`,
///
/// ```text
/// min Σ_{u = (x_o, x_h)} q(u)
/// s.t. Σ_{u ∈ entry} q(u) = t μ_entry   for every marginal entry
///      Σ_{u_o = x_o} q(u) = 1,  q, t >= 0
/// ```
///
/// Observed and hidden assignments partition the coordinate domain.
pub fn oracle_min_conditional(
    observed: &Assignment,
    hidden: &Assignment,
    marginals: &MarginalVector,
    cap: usize,
) -> Result<f64> {
    let coords = marginals.coordinate_domain();
    let x = observed
        .merge(hidden)?
        .full_values(&coords)
        .map_err(|e| match e {
            Error::PartialAssignment => {
                Error::InvalidQuery("observed and hidden must cover every coordinate".into())
            }
            other => other,
        })?;
    if hidden.assigned().next().is_none() {
        return Err(Error::InvalidQuery("no hidden variables".into()));
    }

    let system = exponential_system(marginals, cap)?;
    let mut lp = LinearProgram::new(Sense::Minimize);
    for u in &system.atoms {
        lp.add_variable(if *u == x { 1.0 } else { 0.0 }, 0.0, f64::INFINITY);
    }
    let t = lp.add_variable(0.0, 0.0, f64::INFINITY);
    for (atoms, target) in &system.rows {
        let mut terms: Vec<(usize, f64)> = atoms.iter().map(|&a| (a, 1.0)).collect();
        terms.push((t, -target));
        lp.add_constraint(terms, Relation::Eq, 0.0);
    }
    let normalization = system
        .atoms
        .iter()
        .enumerate()
        .filter(|(_, u)| observed.assigned().all(|(i, v)| u[i] == v))
        .map(|(a, _)| (a, 1.0))
        .collect();
    lp.add_constraint(normalization, Relation::Eq, 1.0);

    let sol = lp.solve();
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective.clamp(0.0, 1.0)),
        LpStatus::Infeasible => {
            // Either no feasible p gives x_o positive mass, or P(μ) is empty.
            optimize_mass(marginals, Sense::Maximize, |_| false, cap)?;
            Err(Error::Unconditioned)
        }
        LpStatus::Unbounded => Err(Error::Unbounded),
        LpStatus::NumericalFailure => Err(Error::NumericalFailure),
    }
}

/// How a sampled joint spreads its mass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum JointShape {
    Dense,
    Sparse,
    Patchy,
}

/// Draws a random joint over the coordinate domain of `graph` (plus a
/// trailing label coordinate) and returns it with its exact marginals.
///
/// The seed picks one of three shapes: dense flat-Dirichlet weights, a
/// handful of atoms, or dense weights with about half the atoms zeroed. The
/// last two produce the zero-mass edge cases the bounds must handle.
pub fn sample_consistent_joint(
    graph: &GraphStructure,
    label_cardinality: Option<usize>,
    seed: u64,
    cap: usize,
) -> Result<(JointDistribution, MarginalVector)> {
    let coords = match label_cardinality {
        Some(l) => graph.domain().with_extra(l)?,
        None => graph.domain().clone(),
    };
    let count = coords.num_assignments();
    if count > cap as u128 {
        return Err(Error::CapExceeded { atoms: count, cap });
    }
    let count = count as usize;
    let mut rng = instance_rng(seed);
    let shape = match rng.gen_range(0..4) {
        0 => JointShape::Sparse,
        1 => JointShape::Patchy,
        _ => JointShape::Dense,
    };
    let mut weights = vec![0.0; count];
    match shape {
        JointShape::Dense => weights.iter_mut().for_each(|w| *w = exponential(&mut rng)),
        JointShape::Patchy => {
            for w in weights.iter_mut() {
                if rng.gen_bool(0.5) {
                    *w = exponential(&mut rng);
                }
            }
            if weights.iter().all(|&w| w == 0.0) {
                weights[rng.gen_range(0..count)] = 1.0;
            }
        }
        JointShape::Sparse => {
            let support = rng.gen_range(1..=count.min(4));
            let mut idx: Vec<usize> = (0..count).collect();
            idx.shuffle(&mut rng);
            for &a in &idx[..support] {
                weights[a] = exponential(&mut rng);
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let joint = JointDistribution::new(coords, weights)?;
    let marginals = joint.marginals(graph, label_cardinality)?;
    Ok((joint, marginals))
}

fn exponential(rng: &mut InstanceRng) -> f64 {
    -libm::log(1.0 - rng.gen::<f64>())
}

/// A uniformly drawn domain with `n` variables of cardinality in `2..=max_card`.
pub fn random_domain(rng: &mut InstanceRng, n: usize, max_card: usize) -> DiscreteDomain {
    let cards = (0..n).map(|_| rng.gen_range(2..=max_card.max(2))).collect();
    DiscreteDomain::new(cards).expect("positive cardinalities")
}

/// A random spanning tree: node `i > 0` attaches to a uniform earlier node,
/// then labels are shuffled.
pub fn random_tree(rng: &mut InstanceRng, domain: DiscreteDomain) -> GraphStructure {
    let n = domain.num_variables();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let edges: Vec<(usize, usize)> = (1..n)
        .map(|i| (perm[rng.gen_range(0..i)], perm[i]))
        .collect();
    GraphStructure::new(domain, &edges).expect("valid tree")
}

/// A connected graph with at least one cycle (needs `n >= 3`).
pub fn random_cyclic(rng: &mut InstanceRng, domain: DiscreteDomain) -> GraphStructure {
    let n = domain.num_variables();
    assert!(n >= 3, "a cycle needs three nodes");
    let tree = random_tree(rng, domain.clone());
    let mut edges = tree.edges().to_vec();
    let mut missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| tree.edge_index(i, j).is_none())
        .collect();
    missing.shuffle(rng);
    let extra = rng.gen_range(1..=missing.len().min(3));
    edges.extend_from_slice(&missing[..extra]);
    GraphStructure::new(domain, &edges).expect("valid graph")
}

/// A box universe whose allowed sets are uniform nonempty subsets.
pub fn random_universe(rng: &mut InstanceRng, domain: &DiscreteDomain) -> AssignmentUniverse {
    let allowed = domain
        .cardinalities()
        .iter()
        .map(|&k| loop {
            let set: Vec<usize> = (0..k).filter(|_| rng.gen_bool(0.5)).collect();
            if !set.is_empty() {
                break set;
            }
        })
        .collect();
    AssignmentUniverse::new(domain, allowed).expect("nonempty subsets in range")
}

pub fn random_assignment(rng: &mut InstanceRng, domain: &DiscreteDomain) -> Vec<usize> {
    domain
        .cardinalities()
        .iter()
        .map(|&k| rng.gen_range(0..k))
        .collect()
}

/// A random assignment inside a universe.
pub fn random_member(rng: &mut InstanceRng, universe: &AssignmentUniverse) -> Vec<usize> {
    (0..universe.num_variables())
        .map(|i| *universe.allowed(i).choose(rng).expect("nonempty"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_chain3() -> MarginalVector {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![2, 2, 2]).unwrap());
        MarginalVector::new(graph, None, vec![vec![0.5; 2]; 3], vec![vec![0.25; 4]; 2]).unwrap()
    }

    #[test]
    fn uniform_chain_joint_range() {
        let mu = uniform_chain3();
        for x in AssignmentUniverse::full(mu.graph().domain()).iter() {
            assert!(oracle_min_joint(&x, &mu, 64).unwrap().abs() < 1e-9);
            assert!((oracle_max_joint(&x, &mu, 64).unwrap() - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_chain_conditional_is_zero() {
        let mu = uniform_chain3();
        let observed = Assignment::partial(3, &[(2, 0)]).unwrap();
        let hidden = Assignment::partial(3, &[(0, 0), (1, 0)]).unwrap();
        assert!(
            oracle_min_conditional(&observed, &hidden, &mu, 64)
                .unwrap()
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn full_universe_carries_all_mass() {
        let mu = uniform_chain3();
        let u = AssignmentUniverse::full(mu.graph().domain());
        assert!((oracle_max_universe(&u, &mu, None, 64).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn point_mass_oracles() {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![2, 3]).unwrap());
        let domain = graph.domain().clone();
        let mut probs = vec![0.0; 6];
        probs[5] = 1.0;
        let joint = JointDistribution::new(domain.clone(), probs).unwrap();
        let mu = joint.marginals(&graph, None).unwrap();
        assert!((oracle_min_joint(&[1, 2], &mu, 64).unwrap() - 1.0).abs() < 1e-9);
        assert!(oracle_max_joint(&[0, 2], &mu, 64).unwrap().abs() < 1e-9);
        let u = AssignmentUniverse::full(&domain);
        assert!(
            oracle_max_universe(&u, &mu, Some(&[1, 2]), 64)
                .unwrap()
                .abs()
                < 1e-9
        );
        let observed = Assignment::partial(2, &[(0, 1)]).unwrap();
        let hidden = Assignment::partial(2, &[(1, 2)]).unwrap();
        assert!((oracle_min_conditional(&observed, &hidden, &mu, 64).unwrap() - 1.0).abs() < 1e-9);
        let observed = Assignment::partial(2, &[(0, 0)]).unwrap();
        assert_eq!(
            oracle_min_conditional(&observed, &hidden, &mu, 64),
            Err(Error::Unconditioned)
        );
    }

    #[test]
    fn two_variable_conditional_is_the_table_ratio() {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![2]).unwrap());
        let (joint, mu) = sample_consistent_joint(&graph, Some(3), 11, 64).unwrap();
        let observed = Assignment::partial(2, &[(0, 1)]).unwrap();
        let hidden = Assignment::partial(2, &[(1, 2)]).unwrap();
        let want = joint.conditional(&observed, &hidden).unwrap();
        match want {
            Some(v) => assert!(
                (oracle_min_conditional(&observed, &hidden, &mu, 64).unwrap() - v).abs() < 1e-9
            ),
            None => assert_eq!(
                oracle_min_conditional(&observed, &hidden, &mu, 64),
                Err(Error::Unconditioned)
            ),
        }
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let mut rng = instance_rng(3);
        let domain = random_domain(&mut rng, 4, 3);
        let graph = random_tree(&mut rng, domain);
        let (a, mu) = sample_consistent_joint(&graph, Some(2), 99, DEFAULT_ATOM_CAP).unwrap();
        let (b, _) = sample_consistent_joint(&graph, Some(2), 99, DEFAULT_ATOM_CAP).unwrap();
        assert_eq!(a, b);
        assert!(validate_marginals(&mu).is_ok());
        assert!((a.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![3; 8]).unwrap());
        assert!(matches!(
            sample_consistent_joint(&graph, None, 0, DEFAULT_ATOM_CAP),
            Err(Error::CapExceeded { atoms: 6561, .. })
        ));
    }

    #[test]
    fn locally_consistent_but_unrealizable() {
        // The frustrated binary triangle: every edge anti-correlated.
        let domain = DiscreteDomain::new(vec![2, 2, 2]).unwrap();
        let graph = GraphStructure::new(domain, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let anti = vec![0.0, 0.5, 0.5, 0.0];
        let mu = MarginalVector::new(graph, None, vec![vec![0.5; 2]; 3], vec![anti; 3]).unwrap();
        assert!(validate_marginals(&mu).is_ok());
        assert_eq!(
            oracle_max_joint(&[0, 1, 0], &mu, 64),
            Err(Error::Unrealizable)
        );
    }

    #[test]
    fn cyclic_generator_has_a_cycle() {
        let mut rng = instance_rng(5);
        for _ in 0..20 {
            let domain = random_domain(&mut rng, 4, 2);
            let g = random_cyclic(&mut rng, domain);
            assert!(g.is_connected() && !g.is_acyclic());
        }
    }
}
