//! Polynomial-size LPs over the local marginal polytope of a box universe.
//!
//! For a universe `U = X̄_1 × .. × X̄_n` and capacity tables `μ`, the LP has
//! one variable per allowed singleton and pairwise cell plus a partition
//! variable `Z`:
//!
//! ```text
//! max Z
//! s.t. Σ_{x_i ∈ X̄_i} μ̃_ij(x_i, x_j) = μ̃_j(x_j)      every edge, x_j ∈ X̄_j
//!      Σ_{x_j ∈ X̄_j} μ̃_ij(x_i, x_j) = μ̃_i(x_i)      every edge, x_i ∈ X̄_i
//!      Σ_{x_r ∈ X̄_r} μ̃_r(x_r) = Z                    one root per component
//!      0 <= μ̃ <= μ
//! ```
//!
//! On acyclic graphs the optimum equals `max_{p ∈ P(μ)} p(U)`. The exclusion
//! variant adds the linear constraint `Ĩ(x; μ̃) <= (c - 1) Z` where `c` is the
//! number of connected components (so `Ĩ <= 0` on a tree), and then equals
//! `max_{p ∈ P(μ)} p(U \ {x})`. On cyclic graphs the same LP is an outer
//! relaxation and its value is an upper bound.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Relation, Sense};
use crate::model::{
    universe_size, Assignment, AssignmentUniverse, BoundKind, BoundResult, Certificate, Exactness,
    GraphStructure, PairwiseTables, PseudoMarginals, SparseDistribution,
};

/// Default cap on materialized assignment spaces.
pub const DEFAULT_ATOM_CAP: usize = 4096;

/// Pseudo-marginal entries at or below this are treated as zero support
/// during reconstruction.
const SUPPORT_EPSILON: f64 = 1e-15;

/// An assembled polytope LP and the variable layout needed to read it back.
#[derive(Clone, Debug)]
pub struct PolytopeLp {
    pub lp: LinearProgram,
    graph: GraphStructure,
    universe: AssignmentUniverse,
    single_vars: Vec<Vec<Option<usize>>>,
    pair_vars: Vec<Vec<Option<usize>>>,
    z_var: usize,
}

fn check_universe(graph: &GraphStructure, universe: &AssignmentUniverse) -> Result<()> {
    let domain = graph.domain();
    if universe.num_variables() != domain.num_variables() {
        return Err(Error::DimensionMismatch {
            expected: domain.num_variables(),
            found: universe.num_variables(),
        });
    }
    for i in 0..domain.num_variables() {
        if let Some(&v) = universe
            .allowed(i)
            .iter()
            .find(|&&v| v >= domain.cardinality(i))
        {
            return Err(Error::ValueOutOfRange {
                variable: i,
                value: v,
            });
        }
    }
    Ok(())
}

/// Assembles the polytope LP; `exclude` adds the exclusion constraint for
/// that full assignment, which must lie in `universe`.
pub fn build_polytope_lp<T: PairwiseTables + ?Sized>(
    universe: &AssignmentUniverse,
    capacity: &T,
    exclude: Option<&[usize]>,
) -> Result<PolytopeLp> {
    let graph = capacity.graph();
    check_universe(graph, universe)?;
    let domain = graph.domain();
    if let Some(x) = exclude {
        if x.len() != domain.num_variables() {
            return Err(Error::DimensionMismatch {
                expected: domain.num_variables(),
                found: x.len(),
            });
        }
        if !universe.contains(x) {
            return Err(Error::InvalidUniverse(
                "excluded assignment is not in the universe".into(),
            ));
        }
    }

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut single_vars = Vec::with_capacity(graph.num_nodes());
    for i in 0..graph.num_nodes() {
        let mut vars = vec![None; domain.cardinality(i)];
        for &x in universe.allowed(i) {
            vars[x] = Some(lp.add_variable(0.0, 0.0, capacity.single(i, x).max(0.0)));
        }
        single_vars.push(vars);
    }
    let mut pair_vars = Vec::with_capacity(graph.edges().len());
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let kj = domain.cardinality(j);
        let mut vars = vec![None; domain.cardinality(i) * kj];
        for &xi in universe.allowed(i) {
            for &xj in universe.allowed(j) {
                vars[xi * kj + xj] =
                    Some(lp.add_variable(0.0, 0.0, capacity.pair(e, xi, xj).max(0.0)));
            }
        }
        pair_vars.push(vars);
    }
    let z_var = lp.add_variable(1.0, 0.0, f64::INFINITY);

    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let kj = domain.cardinality(j);
        for &xj in universe.allowed(j) {
            let mut terms: Vec<(usize, f64)> = universe
                .allowed(i)
                .iter()
                .map(|&xi| (pair_vars[e][xi * kj + xj].expect("allowed cell"), 1.0))
                .collect();
            terms.push((single_vars[j][xj].expect("allowed value"), -1.0));
            lp.add_constraint(terms, Relation::Eq, 0.0);
        }
        for &xi in universe.allowed(i) {
            let mut terms: Vec<(usize, f64)> = universe
                .allowed(j)
                .iter()
                .map(|&xj| (pair_vars[e][xi * kj + xj].expect("allowed cell"), 1.0))
                .collect();
            terms.push((single_vars[i][xi].expect("allowed value"), -1.0));
            lp.add_constraint(terms, Relation::Eq, 0.0);
        }
    }
    let mut seen_component = vec![false; graph.num_components()];
    for (r, vars) in single_vars.iter().enumerate() {
        let c = graph.component_of(r);
        if seen_component[c] {
            continue;
        }
        seen_component[c] = true;
        let mut terms: Vec<(usize, f64)> = universe
            .allowed(r)
            .iter()
            .map(|&x| (vars[x].expect("allowed value"), 1.0))
            .collect();
        terms.push((z_var, -1.0));
        lp.add_constraint(terms, Relation::Eq, 0.0);
    }

    if let Some(x) = exclude {
        let mut terms = Vec::new();
        for (i, &xi) in x.iter().enumerate() {
            let coeff = 1.0 - graph.degree(i) as f64;
            if coeff != 0.0 {
                terms.push((single_vars[i][xi].expect("excluded value allowed"), coeff));
            }
        }
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            let kj = domain.cardinality(j);
            terms.push((
                pair_vars[e][x[i] * kj + x[j]].expect("excluded cell allowed"),
                1.0,
            ));
        }
        let extra_components = graph.num_components() as f64 - 1.0;
        if extra_components != 0.0 {
            terms.push((z_var, -extra_components));
        }
        lp.add_constraint(terms, Relation::Le, 0.0);
    }

    Ok(PolytopeLp {
        lp,
        graph: graph.clone(),
        universe: universe.clone(),
        single_vars,
        pair_vars,
        z_var,
    })
}

impl PolytopeLp {
    /// Solves and packages the optimum with its pseudo-marginal certificate.
    pub fn solve(&self, kind: BoundKind) -> Result<BoundResult> {
        let sol = self.lp.solve();
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(Error::Infeasible),
            LpStatus::Unbounded => return Err(Error::Unbounded),
            LpStatus::NumericalFailure => return Err(Error::NumericalFailure),
        }
        let read = |v: Option<usize>| v.map_or(0.0, |k| sol.x[k].max(0.0));
        let singles = self
            .single_vars
            .iter()
            .map(|vars| vars.iter().map(|&v| read(v)).collect())
            .collect();
        let pairs = self
            .pair_vars
            .iter()
            .map(|vars| vars.iter().map(|&v| read(v)).collect())
            .collect();
        let certificate =
            PseudoMarginals::new(self.graph.clone(), self.universe.clone(), singles, pairs)?;
        let mut result = BoundResult::new(sol.x[self.z_var], kind, Exactness::of(&self.graph));
        result.certificate = Some(Certificate {
            pseudo_marginals: Some(certificate),
            distribution: None,
        });
        result.duals = Some(sol.duals);
        Ok(result)
    }
}

/// `max_{p ∈ P(μ)} Σ_{u ∈ U} p(u)`, exact on acyclic graphs and an upper
/// bound on cyclic ones.
pub fn max_universe_probability<T: PairwiseTables + ?Sized>(
    universe: &AssignmentUniverse,
    marginals: &T,
) -> Result<BoundResult> {
    build_polytope_lp(universe, marginals, None)?.solve(BoundKind::MaxUniverse)
}

/// `max_{p ∈ P(μ)} Σ_{u ∈ U \ {x}} p(u)` for a full assignment `x ∈ U`.
pub fn max_universe_probability_excluding<T: PairwiseTables + ?Sized>(
    universe: &AssignmentUniverse,
    excluded: &Assignment,
    marginals: &T,
) -> Result<BoundResult> {
    let x = excluded.full_values(marginals.graph().domain())?;
    build_polytope_lp(universe, marginals, Some(&x))?.solve(BoundKind::MaxUniverseExcluding)
}

/// `max_{p ∈ P(μ)} p(x)` through the polytope LP with `U = {x}`.
pub fn max_joint_probability<T: PairwiseTables + ?Sized>(
    x: &Assignment,
    marginals: &T,
) -> Result<BoundResult> {
    let domain = marginals.graph().domain();
    let values = x.full_values(domain)?;
    let universe = AssignmentUniverse::new(domain, values.iter().map(|&v| vec![v]).collect())?;
    let mut result = max_universe_probability(&universe, marginals)?;
    result.kind = BoundKind::MaxJoint;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReconstructionMode {
    /// Rooted product over the whole universe.
    Plain,
    /// A function over `U \ {x}` with the same marginals.
    Excluding(Vec<usize>),
}

/// Materializes a nonnegative function over the universe of `pseudo` whose
/// singleton and pairwise marginals are `pseudo` and whose total is `Z`.
///
/// Plain mode uses the rooted product
/// `p(u) = μ̃_r(u_r) Π_i μ̃_{i,pa(i)}(u_i, u_pa(i)) / μ̃_pa(i)(u_pa(i))` per
/// component (components joined by dividing by `Z^(c-1)`); cells whose parent
/// singleton is zero get `p(u) = 0`. Excluding mode solves the exponential
/// feasibility LP over `U \ {x}` with the pseudo-marginals as targets, so it
/// is limited to universes under `cap`.
pub fn reconstruct_distribution(
    pseudo: &PseudoMarginals,
    mode: &ReconstructionMode,
    cap: usize,
) -> Result<SparseDistribution> {
    let graph = pseudo.graph();
    if !graph.is_acyclic() {
        return Err(Error::NotATree);
    }
    let universe = pseudo.universe();
    let size = universe_size(universe, cap);
    if size.exceeds_cap {
        return Err(Error::CapExceeded {
            atoms: size.count,
            cap,
        });
    }
    let z = pseudo.partition_function();
    if z <= SUPPORT_EPSILON {
        return Err(Error::ZeroPartition);
    }
    match mode {
        ReconstructionMode::Plain => Ok(rooted_product(pseudo, z)),
        ReconstructionMode::Excluding(x) => reconstruct_excluding(pseudo, x),
    }
}

fn rooted_product(pseudo: &PseudoMarginals, z: f64) -> SparseDistribution {
    let graph = pseudo.graph();
    let (parent, _) = graph.rooted_order();
    let extra = graph.num_components() as i32 - 1;
    let scale = 1.0 / libm::pow(z, extra as f64);
    let mut atoms = Vec::new();
    'atoms: for u in pseudo.universe().iter() {
        let mut p = scale;
        for (i, link) in parent.iter().enumerate() {
            match *link {
                None => p *= pseudo.single(i, u[i]),
                Some((pa, e)) => {
                    let denom = pseudo.single(pa, u[pa]);
                    if denom <= SUPPORT_EPSILON {
                        continue 'atoms;
                    }
                    let (a, _) = graph.edges()[e];
                    let cell = if a == i {
                        pseudo.pair(e, u[i], u[pa])
                    } else {
                        pseudo.pair(e, u[pa], u[i])
                    };
                    p *= cell / denom;
                }
            }
        }
        if p > 0.0 {
            atoms.push((u, p));
        }
    }
    SparseDistribution { atoms }
}

fn reconstruct_excluding(pseudo: &PseudoMarginals, x: &[usize]) -> Result<SparseDistribution> {
    let graph = pseudo.graph();
    let universe = pseudo.universe();
    if !universe.contains(x) {
        return Err(Error::InvalidUniverse(
            "excluded assignment is not in the universe".into(),
        ));
    }
    let atoms: Vec<Vec<usize>> = universe.iter().filter(|u| u.as_slice() != x).collect();
    let domain = graph.domain();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let vars: Vec<usize> = atoms
        .iter()
        .map(|_| lp.add_variable(1.0, 0.0, f64::INFINITY))
        .collect();
    for i in 0..graph.num_nodes() {
        for &a in universe.allowed(i) {
            let terms = atoms
                .iter()
                .zip(&vars)
                .filter(|(u, _)| u[i] == a)
                .map(|(_, &v)| (v, 1.0))
                .collect();
            lp.add_constraint(terms, Relation::Eq, pseudo.single(i, a));
        }
    }
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        for &a in universe.allowed(i) {
            for &b in universe.allowed(j) {
                let terms = atoms
                    .iter()
                    .zip(&vars)
                    .filter(|(u, _)| u[i] == a && u[j] == b)
                    .map(|(_, &v)| (v, 1.0))
                    .collect();
                lp.add_constraint(terms, Relation::Eq, pseudo.pair(e, a, b));
            }
        }
    }
    let _ = domain;
    let sol = lp.solve();
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Unbounded),
        LpStatus::NumericalFailure => return Err(Error::NumericalFailure),
    }
    Ok(SparseDistribution {
        atoms: atoms
            .into_iter()
            .zip(&vars)
            .filter_map(|(u, &v)| (sol.x[v] > 0.0).then_some((u, sol.x[v])))
            .collect(),
    })
}

/// Value of the LP relaxation of weighted set cover: cover every `u ∈ U`
/// with the sets `S_{ij,a,b} = {z : z_i = a, z_j = b}` of weight `μ_ij(a, b)`
/// and `S_{i,a} = {z : z_i = a}` of weight `μ_i(a)`.
///
/// One covering row per assignment in `U`, so this is a small-instance tool.
pub fn set_cover_lp_value<T: PairwiseTables + ?Sized>(
    universe: &AssignmentUniverse,
    marginals: &T,
    cap: usize,
) -> Result<f64> {
    let graph = marginals.graph();
    check_universe(graph, universe)?;
    let size = universe_size(universe, cap);
    if size.exceeds_cap {
        return Err(Error::CapExceeded {
            atoms: size.count,
            cap,
        });
    }
    let domain = graph.domain();
    let mut lp = LinearProgram::new(Sense::Minimize);
    let mut single_sets: Vec<Vec<Option<usize>>> = Vec::new();
    for i in 0..graph.num_nodes() {
        let mut sets = vec![None; domain.cardinality(i)];
        for &a in universe.allowed(i) {
            sets[a] = Some(lp.add_variable(marginals.single(i, a).max(0.0), 0.0, f64::INFINITY));
        }
        single_sets.push(sets);
    }
    let mut pair_sets: Vec<Vec<Option<usize>>> = Vec::new();
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let kj = domain.cardinality(j);
        let mut sets = vec![None; domain.cardinality(i) * kj];
        for &a in universe.allowed(i) {
            for &b in universe.allowed(j) {
                sets[a * kj + b] =
                    Some(lp.add_variable(marginals.pair(e, a, b).max(0.0), 0.0, f64::INFINITY));
            }
        }
        pair_sets.push(sets);
    }
    for u in universe.iter() {
        let mut terms: Vec<(usize, f64)> = (0..graph.num_nodes())
            .map(|i| (single_sets[i][u[i]].expect("allowed"), 1.0))
            .collect();
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            let kj = domain.cardinality(j);
            terms.push((pair_sets[e][u[i] * kj + u[j]].expect("allowed"), 1.0));
        }
        lp.add_constraint(terms, Relation::Ge, 1.0);
    }
    let sol = lp.solve();
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        LpStatus::Infeasible => Err(Error::Infeasible),
        LpStatus::Unbounded => Err(Error::Unbounded),
        LpStatus::NumericalFailure => Err(Error::NumericalFailure),
    }
}
