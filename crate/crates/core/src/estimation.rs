//! Marginal estimation from discrete samples and query-specific spanning
//! tree selection.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::bounds::i_tilde;
use crate::error::{Error, Result};
use crate::model::{Assignment, GraphStructure, MarginalVector, PairwiseTables, UnionFind};
use crate::sum::exact_sum;

/// One data row: feature values and an optional label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub values: Vec<usize>,
    pub label: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleTable {
    pub rows: Vec<Sample>,
}

impl SampleTable {
    pub fn new(rows: Vec<Sample>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labeled_len(&self) -> usize {
        self.rows.iter().filter(|r| r.label.is_some()).count()
    }
}

/// Smoothed singleton and pairwise frequencies, consistent by construction.
///
/// Every edge table receives the same total pseudo-mass
/// `A = α · max_e k_i k_j L` (with `L` the label cardinality, 1 without a
/// label axis), spread evenly over its cells:
///
/// ```text
/// μ_ij(a, b[, y]) = (count_ij(a, b[, y]) + A / (k_i k_j L)) / (N + A)
/// ```
///
/// Singletons are the marginals of the pair tables, which every incident
/// edge agrees on. Isolated nodes use `(count_i(a) + α) / (N + α k_i L)`.
/// With a label axis only labeled rows are counted.
pub fn estimate_marginals(
    data: &SampleTable,
    graph: &GraphStructure,
    smoothing: f64,
    label_cardinality: Option<usize>,
) -> Result<MarginalVector> {
    if !smoothing.is_finite() || smoothing < 0.0 {
        return Err(Error::InvalidSmoothing);
    }
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let domain = graph.domain();
    let n = graph.num_nodes();
    for row in &data.rows {
        if row.values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.values.len(),
            });
        }
        for (i, &v) in row.values.iter().enumerate() {
            if v >= domain.cardinality(i) {
                return Err(Error::ValueOutOfRange {
                    variable: i,
                    value: v,
                });
            }
        }
        if let (Some(y), Some(l)) = (row.label, label_cardinality) {
            if y >= l {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    cardinality: l,
                });
            }
        }
    }
    let l = label_cardinality.unwrap_or(1);
    let rows: Vec<(&[usize], usize)> = match label_cardinality {
        Some(_) => data
            .rows
            .iter()
            .filter_map(|r| r.label.map(|y| (r.values.as_slice(), y)))
            .collect(),
        None => data.rows.iter().map(|r| (r.values.as_slice(), 0)).collect(),
    };
    if rows.is_empty() {
        return Err(Error::NoLabeledRows);
    }
    let count = rows.len() as f64;

    let cells = |i: usize, j: usize| (domain.cardinality(i) * domain.cardinality(j) * l) as f64;
    let pseudo_mass = smoothing
        * graph
            .edges()
            .iter()
            .map(|&(i, j)| cells(i, j))
            .fold(0.0, f64::max);

    let mut pairs = Vec::with_capacity(graph.edges().len());
    for &(i, j) in graph.edges() {
        let kj = domain.cardinality(j);
        let mut table = vec![pseudo_mass / cells(i, j); domain.cardinality(i) * kj * l];
        for &(values, y) in &rows {
            table[(values[i] * kj + values[j]) * l + y] += 1.0;
        }
        table.iter_mut().for_each(|v| *v /= count + pseudo_mass);
        pairs.push(table);
    }

    let mut singles = Vec::with_capacity(n);
    for i in 0..n {
        let ki = domain.cardinality(i);
        let table = match graph.incident(i).min_by_key(|&(e, _)| e) {
            Some((e, _)) => {
                let (a, b) = graph.edges()[e];
                let kb = domain.cardinality(b);
                let mut t = vec![0.0; ki * l];
                for xa in 0..domain.cardinality(a) {
                    for xb in 0..kb {
                        for y in 0..l {
                            let v = pairs[e][(xa * kb + xb) * l + y];
                            let own = if a == i { xa } else { xb };
                            t[own * l + y] += v;
                        }
                    }
                }
                t
            }
            None => {
                let mut t = vec![smoothing; ki * l];
                for &(values, y) in &rows {
                    t[values[i] * l + y] += 1.0;
                }
                let total = count + smoothing * (ki * l) as f64;
                t.iter_mut().for_each(|v| *v /= total);
                t
            }
        };
        singles.push(table);
    }
    MarginalVector::new(graph.clone(), label_cardinality, singles, pairs)
}

/// Edges of the spanning forest maximizing `Ĩ(x; μ|_T)`, i.e. a maximum
/// spanning tree under `w_ij = μ_ij(x_i, x_j) - μ_i(x_i) - μ_j(x_j)`.
///
/// Kruskal over edges sorted by weight, ties in lexicographic edge order.
pub fn max_spanning_tree_edges<T: PairwiseTables + ?Sized>(
    tables: &T,
    x: &[usize],
) -> Vec<(usize, usize)> {
    let graph = tables.graph();
    // Weight terms (μ_ij, μ_i, μ_j); weights are compared exactly through the
    // sign of a correctly rounded difference.
    let mut weighted: Vec<([f64; 3], (usize, usize))> = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let terms = [
                tables.pair(e, x[i], x[j]),
                tables.single(i, x[i]),
                tables.single(j, x[j]),
            ];
            (terms, (i, j))
        })
        .collect();
    // Edges are already in lexicographic order and the sort is stable.
    weighted.sort_by(|(a, _), (b, _)| {
        exact_sum([b[0], -b[1], -b[2], -a[0], a[1], a[2]])
            .partial_cmp(&0.0)
            .unwrap_or(Ordering::Equal)
    });
    let mut forest = UnionFind::new(graph.num_nodes());
    let mut chosen: Vec<(usize, usize)> = weighted
        .into_iter()
        .filter(|&(_, (i, j))| forest.union(i, j))
        .map(|(_, edge)| edge)
        .collect();
    chosen.sort_unstable();
    chosen
}

/// A query-specific spanning tree and its I value.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanningTreeChoice {
    pub tree: GraphStructure,
    /// The input marginals restricted to the tree's edges.
    pub marginals: MarginalVector,
    /// `I(x; μ|_T)` after the ReLU.
    pub value: f64,
    /// `Ĩ(x; μ|_T)` before the ReLU.
    pub raw: f64,
}

/// The spanning tree of a connected graph that maximizes the I functional
/// at `x` (features, then the label when `μ` carries one).
pub fn best_spanning_tree(marginals: &MarginalVector, x: &[usize]) -> Result<SpanningTreeChoice> {
    let graph = marginals.graph();
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let coords = marginals.coordinate_domain();
    Assignment::full(x.to_vec()).validate(&coords)?;
    let n = graph.num_nodes();
    let (edges, raw) = match marginals.label_cardinality() {
        Some(_) => {
            let slice = marginals.label_slice(x[n])?;
            let edges = max_spanning_tree_edges(&slice, &x[..n]);
            let restricted = marginals.restrict_to_edges(&edges)?;
            let raw = i_tilde(&x[..n], &restricted.label_slice(x[n])?);
            (edges, raw)
        }
        None => {
            let edges = max_spanning_tree_edges(marginals, x);
            let raw = i_tilde(x, &marginals.restrict_to_edges(&edges)?);
            (edges, raw)
        }
    };
    let restricted = marginals.restrict_to_edges(&edges)?;
    Ok(SpanningTreeChoice {
        tree: restricted.graph().clone(),
        marginals: restricted,
        value: raw.max(0.0),
        raw,
    })
}
