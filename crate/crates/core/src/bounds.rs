//! Closed-form bounds, the conditional lower bound pipeline, smoothed scores
//! and confidence ranking.
//!
//! The conditional lower bound is
//!
//! ```text
//! min_{p ∈ P(μ)} p(x_h | x_o) = I / (I + D)
//! ```
//!
//! where `I = min_p p(x_o, x_h)` has a closed form on trees and
//! `D = max_p Σ_{z_h ≠ x_h} p(x_o, z_h)` is the exclusion LP over the
//! universe with the observed variables pinned. When the marginals carry a
//! label axis, P(μ) splits into independent per-label slices, so both terms
//! are sums of per-slice quantities.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimation::max_spanning_tree_edges;
use crate::model::{
    clamp_unit, Assignment, AssignmentUniverse, BoundKind, BoundResult, Certificate,
    DiscreteDomain, Exactness, GraphStructure, MarginalVector, PairwiseTables,
};
use crate::polytope::{max_universe_probability, max_universe_probability_excluding};
use crate::sum::exact_sum;

/// Probabilities at or below this are treated as zero when deciding the
/// degenerate cases of a conditional bound.
pub const ZERO_TOLERANCE: f64 = 1e-10;

/// `Ĩ(x; μ) = Σ_i (1 - d_i) μ_i(x_i) + Σ_{ij ∈ E} μ_ij(x_i, x_j)` for a full
/// assignment of the graph's variables.
pub fn i_tilde<T: PairwiseTables + ?Sized>(x: &[usize], tables: &T) -> f64 {
    // Correctly rounded, so equal values on different graphs compare equal.
    let graph = tables.graph();
    let singles = x.iter().enumerate().flat_map(|(i, &xi)| {
        let v = tables.single(i, xi);
        let d = graph.degree(i);
        let (sign, times) = if d == 0 { (1.0, 1) } else { (-1.0, d - 1) };
        core::iter::repeat(sign * v).take(times)
    });
    let pairs = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| tables.pair(e, x[i], x[j]));
    exact_sum(singles.chain(pairs))
}

/// Resolves a coordinate assignment (features, then the label when present)
/// into feature values and the optional label.
fn split_coordinates(
    x: &Assignment,
    marginals: &MarginalVector,
) -> Result<(Vec<usize>, Option<usize>)> {
    let mut values = x.full_values(&marginals.coordinate_domain())?;
    let label = marginals.label_cardinality().and_then(|_| values.pop());
    Ok((values, label))
}

/// The I functional at `x`; with a label axis, `x` ends with the label and the
/// formula is evaluated on that label's slice.
pub fn i_functional(x: &Assignment, marginals: &MarginalVector, apply_relu: bool) -> Result<f64> {
    let (features, label) = split_coordinates(x, marginals)?;
    let raw = match label {
        Some(y) => i_tilde(&features, &marginals.label_slice(y)?),
        None => i_tilde(&features, marginals),
    };
    Ok(if apply_relu { raw.max(0.0) } else { raw })
}

/// `min p(x)` over every nonnegative function with the given (possibly
/// sub-normalized) tables on an acyclic graph.
///
/// On a forest with `c` components and total mass `m` the components can be
/// coupled arbitrarily, so the tree value becomes `[Ĩ - (c - 1) m]_+`.
fn acyclic_min_joint<T: PairwiseTables + ?Sized>(x: &[usize], tables: &T) -> f64 {
    let graph = tables.graph();
    let mut raw = i_tilde(x, tables);
    let extra = graph.num_components() - 1;
    if extra > 0 {
        let mass: f64 = (0..graph.domain().cardinality(0))
            .map(|v| tables.single(0, v))
            .sum();
        raw -= extra as f64 * mass;
    }
    raw.max(0.0)
}

/// `min_{p ∈ P(μ)} p(x)`, exact on trees and forests.
pub fn min_joint_probability(x: &Assignment, marginals: &MarginalVector) -> Result<BoundResult> {
    if !marginals.graph().is_acyclic() {
        return Err(Error::NotATree);
    }
    let (features, label) = split_coordinates(x, marginals)?;
    let value = match label {
        Some(y) => acyclic_min_joint(&features, &marginals.label_slice(y)?),
        None => acyclic_min_joint(&features, marginals),
    };
    Ok(BoundResult::new(
        value,
        BoundKind::MinJoint,
        Exactness::ExactTree,
    ))
}

fn require_labeled_tree(marginals: &MarginalVector) -> Result<usize> {
    let l = marginals
        .label_cardinality()
        .ok_or(Error::LabelAxisMissing)?;
    let graph = marginals.graph();
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    if !graph.is_acyclic() {
        return Err(Error::NotATree);
    }
    Ok(l)
}

fn check_features(x: &[usize], domain: &DiscreteDomain) -> Result<()> {
    Assignment::full(x.to_vec()).validate(domain)
}

/// `min_{ij ∈ E} μ_ij(x_i, x_j, ȳ)`, or the singleton entry for a single feature.
fn min_edge_entry(x: &[usize], marginals: &MarginalVector, label: usize) -> f64 {
    let graph = marginals.graph();
    if graph.edges().is_empty() {
        return marginals.labeled_single(0, x[0], label);
    }
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| marginals.labeled_pair(e, x[i], x[j], label))
        .fold(f64::INFINITY, f64::min)
}

/// `max_{p ∈ P(μ)} p(x, ȳ) = min_{ij} μ_ij(x_i, x_j, ȳ)` on a labeled tree.
pub fn max_joint_probability_multiclass(
    x: &[usize],
    label: usize,
    marginals: &MarginalVector,
) -> Result<BoundResult> {
    let l = require_labeled_tree(marginals)?;
    check_features(x, marginals.graph().domain())?;
    if label >= l {
        return Err(Error::LabelOutOfRange {
            label,
            cardinality: l,
        });
    }
    Ok(BoundResult::new(
        min_edge_entry(x, marginals, label),
        BoundKind::MaxJoint,
        Exactness::ExactTree,
    ))
}

/// Applies the degenerate-case rules to a numerator `I = min p(x_o, x_h)`,
/// an exclusion maximum `D` and the largest attainable `p(x_o)`.
fn conditional_ratio(numerator: f64, exclusion: f64, reachable: f64) -> Result<f64> {
    if reachable <= ZERO_TOLERANCE {
        return Err(Error::Unconditioned);
    }
    if exclusion <= ZERO_TOLERANCE {
        return Ok(1.0);
    }
    if numerator <= ZERO_TOLERANCE {
        return Ok(0.0);
    }
    Ok(clamp_unit(numerator / (numerator + exclusion)))
}

/// `min_{p ∈ P(μ)} p(y | x)` for a full feature assignment on a labeled tree:
///
/// ```text
/// I(x, y; μ) / (I(x, y; μ) + Σ_{ȳ ≠ y} min_{ij} μ_ij(x_i, x_j, ȳ))
/// ```
///
/// Returns 1 when no other label can co-occur with `x`, 0 when `I = 0` and
/// some other label can, and [`Error::Unconditioned`] when no label can.
pub fn multiclass_conditional_lower_bound(
    x: &[usize],
    label: usize,
    marginals: &MarginalVector,
) -> Result<BoundResult> {
    let l = require_labeled_tree(marginals)?;
    check_features(x, marginals.graph().domain())?;
    if label >= l {
        return Err(Error::LabelOutOfRange {
            label,
            cardinality: l,
        });
    }
    let numerator = i_tilde(x, &marginals.label_slice(label)?).max(0.0);
    let mut exclusion = 0.0;
    let mut reachable = 0.0;
    for y in 0..l {
        let m = min_edge_entry(x, marginals, y);
        reachable += m;
        if y != label {
            exclusion += m;
        }
    }
    let value = conditional_ratio(numerator, exclusion, reachable)?;
    Ok(BoundResult::new(
        value,
        BoundKind::MinConditional,
        Exactness::ExactTree,
    ))
}

/// The same bound as [`multiclass_conditional_lower_bound`] with every
/// per-label maximum solved through the polytope LP over `U = {x}`.
pub fn multiclass_conditional_lower_bound_lp(
    x: &[usize],
    label: usize,
    marginals: &MarginalVector,
) -> Result<BoundResult> {
    let l = require_labeled_tree(marginals)?;
    check_features(x, marginals.graph().domain())?;
    if label >= l {
        return Err(Error::LabelOutOfRange {
            label,
            cardinality: l,
        });
    }
    ConditionalQuery::multiclass(x, label).bound(marginals)
}

/// Splits a query over the coordinate domain and checks that the observed
/// and hidden parts partition it.
fn query_coordinates(
    observed: &Assignment,
    hidden: &Assignment,
    coords: &DiscreteDomain,
) -> Result<Vec<usize>> {
    let n = coords.num_variables();
    if observed.num_variables() != n || hidden.num_variables() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if observed.num_variables() != n {
                observed.num_variables()
            } else {
                hidden.num_variables()
            },
        });
    }
    if hidden.assigned().next().is_none() {
        return Err(Error::InvalidQuery("no hidden variables".into()));
    }
    let merged = observed
        .merge(hidden)
        .map_err(|_| Error::InvalidQuery("observed and hidden variables overlap".into()))?;
    merged.validate(coords)?;
    merged.to_full().ok_or_else(|| {
        Error::InvalidQuery("observed and hidden variables must cover every variable".into())
    })
}

/// Read-only view of a table set restricted to a subset of its edges.
struct EdgeSubset<'a, T: ?Sized> {
    tables: &'a T,
    graph: GraphStructure,
    edge_map: Vec<usize>,
}

impl<'a, T: PairwiseTables + ?Sized> EdgeSubset<'a, T> {
    fn new(tables: &'a T, edges: &[(usize, usize)]) -> Result<Self> {
        let graph = tables.graph().with_edges(edges)?;
        let edge_map = graph
            .edges()
            .iter()
            .map(|&(i, j)| tables.graph().edge_index(i, j).expect("subset edge"))
            .collect();
        Ok(Self {
            tables,
            graph,
            edge_map,
        })
    }
}

impl<T: PairwiseTables + ?Sized> PairwiseTables for EdgeSubset<'_, T> {
    fn graph(&self) -> &GraphStructure {
        &self.graph
    }

    fn single(&self, i: usize, xi: usize) -> f64 {
        self.tables.single(i, xi)
    }

    fn pair(&self, e: usize, xi: usize, xj: usize) -> f64 {
        self.tables.pair(self.edge_map[e], xi, xj)
    }
}

/// Conditional bound over per-label slices; `numerator` indexes the slice
/// holding the queried assignment and the other slices only contribute to
/// the exclusion mass.
fn bound_from_slices(
    slices: &[&dyn PairwiseTables],
    numerator: usize,
    x: &[usize],
    universe: &AssignmentUniverse,
) -> Result<BoundResult> {
    let graph = slices[numerator].graph();
    let exactness = Exactness::of(graph);
    let top = match exactness {
        Exactness::ExactTree => acyclic_min_joint(x, slices[numerator]),
        Exactness::RelaxationCyclic => {
            if !graph.is_connected() {
                return Err(Error::Disconnected);
            }
            let edges = max_spanning_tree_edges(slices[numerator], x);
            i_tilde(x, &EdgeSubset::new(slices[numerator], &edges)?).max(0.0)
        }
    };

    let excluded = Assignment::full(x.to_vec());
    let mut exclusion = 0.0;
    let mut reachable = 0.0;
    let mut certificate = None;
    for (k, slice) in slices.iter().enumerate() {
        let total = max_universe_probability(universe, *slice)?.value;
        reachable += total;
        if k == numerator {
            let r = max_universe_probability_excluding(universe, &excluded, *slice)?;
            exclusion += r.value;
            certificate = r.certificate;
        } else {
            exclusion += total;
        }
    }
    let value = conditional_ratio(top, exclusion, reachable)?;
    let mut result = BoundResult::new(value, BoundKind::MinConditional, exactness);
    result.certificate = certificate.map(|c| Certificate {
        pseudo_marginals: c.pseudo_marginals,
        distribution: None,
    });
    Ok(result)
}

/// `min_{p ∈ P(μ), p(x_o) > 0} p(x_h | x_o)`.
///
/// `observed` and `hidden` are partial assignments over the coordinate
/// domain (features, then the label when present) that partition it. On
/// acyclic graphs the value is exact. On connected cyclic graphs the
/// numerator comes from the best spanning tree and the exclusion maximum
/// from the local-polytope relaxation, which yields a valid lower bound
/// flagged [`Exactness::RelaxationCyclic`].
pub fn conditional_lower_bound_general(
    observed: &Assignment,
    hidden: &Assignment,
    marginals: &MarginalVector,
) -> Result<BoundResult> {
    let graph = marginals.graph();
    let coords = marginals.coordinate_domain();
    let x = query_coordinates(observed, hidden, &coords)?;
    let n = graph.num_nodes();
    let features = &x[..n];
    let mut pinned = Assignment::empty(n);
    for (i, v) in observed.assigned().filter(|&(i, _)| i < n) {
        pinned.set(i, Some(v));
    }
    let universe = AssignmentUniverse::pinned(graph.domain(), &pinned)?;

    match marginals.label_cardinality() {
        None => bound_from_slices(&[marginals], 0, features, &universe),
        Some(l) => {
            let y = x[n];
            if observed.get(n).is_some() {
                let slice = marginals.label_slice(y)?;
                bound_from_slices(&[&slice], 0, features, &universe)
            } else {
                let slices = (0..l)
                    .map(|k| marginals.label_slice(k))
                    .collect::<Result<Vec<_>>>()?;
                let views: Vec<&dyn PairwiseTables> =
                    slices.iter().map(|s| s as &dyn PairwiseTables).collect();
                bound_from_slices(&views, y, features, &universe)
            }
        }
    }
}

/// A conditional query: the observed part and the hidden outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionalQuery {
    pub observed: Assignment,
    pub hidden: Assignment,
}

impl ConditionalQuery {
    /// A multiclass query: every feature observed, the label hidden.
    pub fn multiclass(x: &[usize], label: usize) -> Self {
        let n = x.len();
        let mut observed = Assignment::empty(n + 1);
        for (i, &v) in x.iter().enumerate() {
            observed.set(i, Some(v));
        }
        let mut hidden = Assignment::empty(n + 1);
        hidden.set(n, Some(label));
        Self { observed, hidden }
    }

    pub fn bound(&self, marginals: &MarginalVector) -> Result<BoundResult> {
        conditional_lower_bound_general(&self.observed, &self.hidden, marginals)
    }
}

/// One row of a confidence ranking.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedEntry<E = Error> {
    /// Position of the query in the input batch.
    pub index: usize,
    pub outcome: core::result::Result<BoundResult, E>,
}

/// Stable descending sort by bound value; failed queries (such as
/// unconditioned ones) rank last, in input order.
pub fn rank_outcomes<E>(
    outcomes: Vec<core::result::Result<BoundResult, E>>,
) -> Vec<RankedEntry<E>> {
    let mut entries: Vec<RankedEntry<E>> = outcomes
        .into_iter()
        .enumerate()
        .map(|(index, outcome)| RankedEntry { index, outcome })
        .collect();
    let key = |e: &RankedEntry<E>| e.outcome.as_ref().map_or(f64::NEG_INFINITY, |r| r.value);
    entries.sort_by(|a, b| key(b).total_cmp(&key(a)));
    entries
}

/// Bounds every query and ranks them by [`rank_outcomes`].
pub fn rank_by_confidence(
    queries: &[ConditionalQuery],
    marginals: &MarginalVector,
) -> Vec<RankedEntry> {
    rank_outcomes(queries.iter().map(|q| q.bound(marginals)).collect())
}

/// Marginals of soft binary indicators: `μ̄_i(1, y)` is the sum of `z_i` over
/// examples with label `y`, divided by the total number of examples, and
/// pairwise tables use products of the per-coordinate weights
/// `w_1(z) = z`, `w_0(z) = 1 - z`.
pub fn smoothed_marginals(
    rows: &[(Vec<f64>, usize)],
    graph: &GraphStructure,
    label_cardinality: usize,
) -> Result<MarginalVector> {
    require_binary(graph)?;
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = graph.num_nodes();
    let l = label_cardinality;
    let mut singles = vec![vec![0.0; 2 * l]; n];
    let mut pairs = vec![vec![0.0; 4 * l]; graph.edges().len()];
    let scale = 1.0 / rows.len() as f64;
    for (z, y) in rows {
        check_scores(z, n)?;
        if *y >= l {
            return Err(Error::LabelOutOfRange {
                label: *y,
                cardinality: l,
            });
        }
        for i in 0..n {
            singles[i][*y] += (1.0 - z[i]) * scale;
            singles[i][l + *y] += z[i] * scale;
        }
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    pairs[e][(a * 2 + b) * l + *y] += weight(z[i], a) * weight(z[j], b) * scale;
                }
            }
        }
    }
    MarginalVector::new(graph.clone(), Some(l), singles, pairs)
}

fn require_binary(graph: &GraphStructure) -> Result<()> {
    if graph.domain().cardinalities().iter().any(|&k| k != 2) {
        return Err(Error::ShapeMismatch(
            "smoothed scores need binary features".into(),
        ));
    }
    Ok(())
}

fn check_scores(z: &[f64], n: usize) -> Result<()> {
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: z.len(),
        });
    }
    if let Some((index, &value)) = z
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidScore { index, value });
    }
    Ok(())
}

fn weight(z: f64, value: usize) -> f64 {
    if value == 1 {
        z
    } else {
        1.0 - z
    }
}

/// Interpolated tables at soft memberships `z`.
struct SoftSlice<'a> {
    marginals: &'a MarginalVector,
    z: &'a [f64],
    label: usize,
}

impl SoftSlice<'_> {
    fn single(&self, i: usize) -> f64 {
        (0..2)
            .map(|a| weight(self.z[i], a) * self.marginals.labeled_single(i, a, self.label))
            .sum()
    }

    fn pair(&self, e: usize) -> f64 {
        let (i, j) = self.marginals.graph().edges()[e];
        let mut total = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                total += weight(self.z[i], a)
                    * weight(self.z[j], b)
                    * self.marginals.labeled_pair(e, a, b, self.label);
            }
        }
        total
    }

    fn i_tilde(&self) -> f64 {
        let graph = self.marginals.graph();
        let mut value = 0.0;
        for i in 0..graph.num_nodes() {
            let coeff = 1.0 - graph.degree(i) as f64;
            if coeff != 0.0 {
                value += coeff * self.single(i);
            }
        }
        for e in 0..graph.edges().len() {
            value += self.pair(e);
        }
        value
    }

    fn min_entry(&self) -> f64 {
        let graph = self.marginals.graph();
        if graph.edges().is_empty() {
            return self.single(0);
        }
        (0..graph.edges().len())
            .map(|e| self.pair(e))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-label multiclass ratios with every table lookup replaced by its
/// multilinear interpolation at `z`. Labels whose ratio is undefined
/// (no label reachable) score 0.
pub fn smoothed_multiclass_ratios(z: &[f64], marginals: &MarginalVector) -> Result<Vec<f64>> {
    let l = require_labeled_tree(marginals)?;
    require_binary(marginals.graph())?;
    check_scores(z, marginals.graph().num_nodes())?;
    let slices: Vec<SoftSlice> = (0..l)
        .map(|label| SoftSlice {
            marginals,
            z,
            label,
        })
        .collect();
    let mins: Vec<f64> = slices.iter().map(SoftSlice::min_entry).collect();
    let reachable: f64 = mins.iter().sum();
    Ok(slices
        .iter()
        .map(|s| {
            let numerator = s.i_tilde().max(0.0);
            conditional_ratio(numerator, reachable - mins[s.label], reachable).unwrap_or(0.0)
        })
        .collect())
}

/// Softmax of [`smoothed_multiclass_ratios`].
pub fn smoothed_multiclass_scores(z: &[f64], marginals: &MarginalVector) -> Result<Vec<f64>> {
    Ok(softmax(&smoothed_multiclass_ratios(z, marginals)?))
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| libm::exp(v - top)).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}
