//! Domain types shared by every bounding routine: variable domains, graphs,
//! assignments, assignment universes, marginal tables and bound results.
//!
//! Variables are indexed `0..n` and values `0..k_i`. Edges are stored in
//! canonical form `(i, j)` with `i < j`, sorted lexicographically; every
//! per-edge table is indexed by the edge's position in that order.
//!
//! Table layouts are row-major with the label coordinate innermost:
//! `single[i][x_i * L + y]` and `pair[e][(x_i * k_j + x_j) * L + y]`, where
//! `L` is the label cardinality (1 when there is no label axis).

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Absolute tolerance for every consistency and normalization check.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteDomain {
    cardinalities: Vec<usize>,
}

impl DiscreteDomain {
    pub fn new(cardinalities: Vec<usize>) -> Result<Self> {
        if cardinalities.is_empty() {
            return Err(Error::InvalidDomain("no variables".into()));
        }
        if let Some(i) = cardinalities.iter().position(|&k| k == 0) {
            return Err(Error::InvalidDomain(format!(
                "variable {i} has cardinality 0"
            )));
        }
        Ok(Self { cardinalities })
    }

    pub fn num_variables(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.cardinalities[i]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Number of joint assignments, saturating at `u128::MAX`.
    pub fn num_assignments(&self) -> u128 {
        self.cardinalities
            .iter()
            .fold(1u128, |acc, &k| acc.saturating_mul(k as u128))
    }

    /// The domain with one extra trailing coordinate of the given cardinality.
    pub fn with_extra(&self, cardinality: usize) -> Result<Self> {
        let mut cards = self.cardinalities.clone();
        cards.push(cardinality);
        Self::new(cards)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructureClass {
    Tree,
    Forest,
    Cyclic,
}

/// An undirected graph over the variables of a domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStructure {
    domain: DiscreteDomain,
    edges: Vec<(usize, usize)>,
    degrees: Vec<usize>,
    component: Vec<usize>,
    num_components: usize,
    class: StructureClass,
}

impl GraphStructure {
    pub fn new(domain: DiscreteDomain, edges: &[(usize, usize)]) -> Result<Self> {
        let n = domain.num_variables();
        let mut canonical = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            canonical.push((a.min(b), a.max(b)));
        }
        canonical.sort_unstable();
        if let Some(w) = canonical.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({},{})",
                w[0].0, w[0].1
            )));
        }

        let mut degrees = vec![0; n];
        let mut uf = UnionFind::new(n);
        for &(i, j) in &canonical {
            degrees[i] += 1;
            degrees[j] += 1;
            uf.union(i, j);
        }
        // Components are numbered by their smallest node.
        let mut label = vec![usize::MAX; n];
        let mut component = vec![0; n];
        let mut num_components = 0;
        for (v, slot) in component.iter_mut().enumerate() {
            let root = uf.find(v);
            if label[root] == usize::MAX {
                label[root] = num_components;
                num_components += 1;
            }
            *slot = label[root];
        }
        let class = if canonical.len() + num_components == n {
            if num_components == 1 {
                StructureClass::Tree
            } else {
                StructureClass::Forest
            }
        } else {
            StructureClass::Cyclic
        };

        Ok(Self {
            domain,
            edges: canonical,
            degrees,
            component,
            num_components,
            class,
        })
    }

    /// The path graph `0-1-..-(n-1)`.
    pub fn chain(domain: DiscreteDomain) -> Self {
        let edges: Vec<_> = (1..domain.num_variables()).map(|i| (i - 1, i)).collect();
        Self::new(domain, &edges).expect("chain edges are valid")
    }

    pub fn domain(&self) -> &DiscreteDomain {
        &self.domain
    }

    pub fn num_nodes(&self) -> usize {
        self.domain.num_variables()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.component[i]
    }

    pub fn class(&self) -> StructureClass {
        self.class
    }

    pub fn is_tree(&self) -> bool {
        self.class == StructureClass::Tree
    }

    pub fn is_acyclic(&self) -> bool {
        self.class != StructureClass::Cyclic
    }

    pub fn is_connected(&self) -> bool {
        self.num_components == 1
    }

    /// True for the path `0-1-..-(n-1)` (a single node counts).
    pub fn is_chain(&self) -> bool {
        self.edges.len() + 1 == self.num_nodes()
            && self
                .edges
                .iter()
                .enumerate()
                .all(|(e, &(i, j))| i == e && j == e + 1)
    }

    /// Position of the edge `{i, j}` in canonical order.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&(i.min(j), i.max(j))).ok()
    }

    /// `(edge index, neighbour)` pairs incident to `i`, in edge order.
    pub fn incident(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter_map(move |(e, &(a, b))| {
                if a == i {
                    Some((e, b))
                } else if b == i {
                    Some((e, a))
                } else {
                    None
                }
            })
    }

    /// Same domain, a subset of this graph's edges.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Self> {
        for &(i, j) in edges {
            if self.edge_index(i, j).is_none() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i},{j}) is not in the graph"
                )));
            }
        }
        Self::new(self.domain.clone(), edges)
    }

    /// Graph induced on `nodes` (renumbered in the given order).
    pub fn induced(&self, nodes: &[usize]) -> Result<Self> {
        let mut position = vec![usize::MAX; self.num_nodes()];
        for (new, &old) in nodes.iter().enumerate() {
            position[old] = new;
        }
        let domain =
            DiscreteDomain::new(nodes.iter().map(|&v| self.domain.cardinality(v)).collect())?;
        let edges: Vec<_> = self
            .edges
            .iter()
            .filter(|&&(i, j)| position[i] != usize::MAX && position[j] != usize::MAX)
            .map(|&(i, j)| (position[i], position[j]))
            .collect();
        Self::new(domain, &edges)
    }

    /// Parent of every node when each component is rooted at its smallest
    /// node, together with a breadth-first order. Only meaningful on forests.
    pub(crate) fn rooted_order(&self) -> (Vec<Option<(usize, usize)>>, Vec<usize>) {
        let n = self.num_nodes();
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut queue = VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for (e, w) in self.incident(v) {
                    if !seen[w] {
                        seen[w] = true;
                        parent[w] = Some((v, e));
                        queue.push_back(w);
                    }
                }
            }
        }
        (parent, order)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

/// A possibly partial assignment of values to variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment {
    values: Vec<Option<usize>>,
}

impl Assignment {
    pub fn full(values: Vec<usize>) -> Self {
        Self {
            values: values.into_iter().map(Some).collect(),
        }
    }

    pub fn empty(num_variables: usize) -> Self {
        Self {
            values: vec![None; num_variables],
        }
    }

    pub fn partial(num_variables: usize, assigned: &[(usize, usize)]) -> Result<Self> {
        let mut out = Self::empty(num_variables);
        for &(i, v) in assigned {
            if i >= num_variables {
                return Err(Error::InvalidQuery(format!("variable {i} out of range")));
            }
            if out.values[i].is_some() {
                return Err(Error::InvalidQuery(format!("variable {i} assigned twice")));
            }
            out.values[i] = Some(v);
        }
        Ok(out)
    }

    pub fn num_variables(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.values.get(i).copied().flatten()
    }

    pub fn set(&mut self, i: usize, value: Option<usize>) {
        self.values[i] = value;
    }

    pub fn is_full(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// `(variable, value)` pairs in variable order.
    pub fn assigned(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }

    pub fn to_full(&self) -> Option<Vec<usize>> {
        self.values.iter().copied().collect()
    }

    /// Checks arity and value ranges against `domain`.
    pub fn validate(&self, domain: &DiscreteDomain) -> Result<()> {
        if self.values.len() != domain.num_variables() {
            return Err(Error::DimensionMismatch {
                expected: domain.num_variables(),
                found: self.values.len(),
            });
        }
        for (i, v) in self.assigned() {
            if v >= domain.cardinality(i) {
                return Err(Error::ValueOutOfRange {
                    variable: i,
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Validated full values.
    pub fn full_values(&self, domain: &DiscreteDomain) -> Result<Vec<usize>> {
        self.validate(domain)?;
        self.to_full().ok_or(Error::PartialAssignment)
    }

    /// Union of two assignments over disjoint variable sets.
    pub fn merge(&self, other: &Assignment) -> Result<Assignment> {
        if self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        let mut out = self.clone();
        for (i, v) in other.assigned() {
            if out.values[i].is_some() {
                return Err(Error::InvalidQuery(format!(
                    "variable {i} is both observed and hidden"
                )));
            }
            out.values[i] = Some(v);
        }
        Ok(out)
    }
}

/// A box of joint assignments: variable `i` ranges over `allowed(i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssignmentUniverse {
    allowed: Vec<Vec<usize>>,
}

impl AssignmentUniverse {
    pub fn new(domain: &DiscreteDomain, allowed: Vec<Vec<usize>>) -> Result<Self> {
        if allowed.len() != domain.num_variables() {
            return Err(Error::DimensionMismatch {
                expected: domain.num_variables(),
                found: allowed.len(),
            });
        }
        let mut allowed = allowed;
        for (i, set) in allowed.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(Error::InvalidUniverse(format!(
                    "variable {i} has no allowed value"
                )));
            }
            if let Some(&v) = set.iter().find(|&&v| v >= domain.cardinality(i)) {
                return Err(Error::ValueOutOfRange {
                    variable: i,
                    value: v,
                });
            }
        }
        Ok(Self { allowed })
    }

    pub fn full(domain: &DiscreteDomain) -> Self {
        Self {
            allowed: domain
                .cardinalities()
                .iter()
                .map(|&k| (0..k).collect())
                .collect(),
        }
    }

    /// Assigned variables pinned to their value, the rest unrestricted.
    pub fn pinned(domain: &DiscreteDomain, assignment: &Assignment) -> Result<Self> {
        assignment.validate(domain)?;
        let allowed = (0..domain.num_variables())
            .map(|i| match assignment.get(i) {
                Some(v) => vec![v],
                None => (0..domain.cardinality(i)).collect(),
            })
            .collect();
        Ok(Self { allowed })
    }

    pub fn num_variables(&self) -> usize {
        self.allowed.len()
    }

    pub fn allowed(&self, i: usize) -> &[usize] {
        &self.allowed[i]
    }

    pub fn is_allowed(&self, i: usize, value: usize) -> bool {
        self.allowed[i].binary_search(&value).is_ok()
    }

    pub fn contains(&self, values: &[usize]) -> bool {
        values.len() == self.allowed.len()
            && values
                .iter()
                .enumerate()
                .all(|(i, &v)| self.is_allowed(i, v))
    }

    /// All assignments in the box, last variable fastest.
    pub fn iter(&self) -> UniverseIter<'_> {
        UniverseIter {
            universe: self,
            cursor: Some(vec![0; self.allowed.len()]),
        }
    }

    pub fn is_subset_of(&self, other: &AssignmentUniverse) -> bool {
        self.allowed.len() == other.allowed.len()
            && self
                .allowed
                .iter()
                .enumerate()
                .all(|(i, set)| set.iter().all(|&v| other.is_allowed(i, v)))
    }
}

pub struct UniverseIter<'a> {
    universe: &'a AssignmentUniverse,
    cursor: Option<Vec<usize>>,
}

impl Iterator for UniverseIter<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cursor = self.cursor.as_mut()?;
        let allowed = &self.universe.allowed;
        let item = cursor
            .iter()
            .enumerate()
            .map(|(i, &c)| allowed[i][c])
            .collect();
        let mut pos = cursor.len();
        loop {
            if pos == 0 {
                self.cursor = None;
                break;
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < allowed[pos].len() {
                break;
            }
            cursor[pos] = 0;
        }
        Some(item)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniverseSize {
    /// Exact count, saturating at `u128::MAX`.
    pub count: u128,
    pub exceeds_cap: bool,
}

/// Number of assignments in `universe`, flagged against `cap`.
pub fn universe_size(universe: &AssignmentUniverse, cap: usize) -> UniverseSize {
    let count = universe
        .allowed
        .iter()
        .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
    UniverseSize {
        count,
        exceeds_cap: count > cap as u128,
    }
}

/// Read access to unlabeled singleton and pairwise tables over a graph.
///
/// Implemented by unlabeled (or label-marginalized) [`MarginalVector`]s,
/// by a single label slice of a labeled one, and by [`PseudoMarginals`].
pub trait PairwiseTables {
    fn graph(&self) -> &GraphStructure;
    fn single(&self, i: usize, xi: usize) -> f64;
    /// Entry of edge `e = (i, j)` (canonical order) at `(x_i, x_j)`.
    fn pair(&self, e: usize, xi: usize, xj: usize) -> f64;
}

/// Singleton and pairwise marginals, optionally joint with a label.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalVector {
    graph: GraphStructure,
    label_cardinality: Option<usize>,
    singles: Vec<Vec<f64>>,
    pairs: Vec<Vec<f64>>,
}

impl MarginalVector {
    /// Checks shapes and finiteness only; see [`validate_marginals`] for the
    /// numeric invariants.
    pub fn new(
        graph: GraphStructure,
        label_cardinality: Option<usize>,
        singles: Vec<Vec<f64>>,
        pairs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if label_cardinality == Some(0) {
            return Err(Error::ShapeMismatch(
                "label cardinality must be positive".into(),
            ));
        }
        let l = label_cardinality.unwrap_or(1);
        let domain = graph.domain();
        if singles.len() != graph.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "{} singleton tables for {} nodes",
                singles.len(),
                graph.num_nodes()
            )));
        }
        for (i, t) in singles.iter().enumerate() {
            let want = domain.cardinality(i) * l;
            if t.len() != want {
                return Err(Error::ShapeMismatch(format!(
                    "singleton table {i} has {} entries, expected {want}",
                    t.len()
                )));
            }
        }
        if pairs.len() != graph.edges().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} pairwise tables for {} edges",
                pairs.len(),
                graph.edges().len()
            )));
        }
        for (t, &(i, j)) in pairs.iter().zip(graph.edges()) {
            let want = domain.cardinality(i) * domain.cardinality(j) * l;
            if t.len() != want {
                return Err(Error::ShapeMismatch(format!(
                    "pairwise table ({i},{j}) has {} entries, expected {want}",
                    t.len()
                )));
            }
        }
        if singles
            .iter()
            .chain(pairs.iter())
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::ShapeMismatch("non-finite table entry".into()));
        }
        Ok(Self {
            graph,
            label_cardinality,
            singles,
            pairs,
        })
    }

    pub fn graph(&self) -> &GraphStructure {
        &self.graph
    }

    pub fn label_cardinality(&self) -> Option<usize> {
        self.label_cardinality
    }

    pub fn is_labeled(&self) -> bool {
        self.label_cardinality.is_some()
    }

    fn stride(&self) -> usize {
        self.label_cardinality.unwrap_or(1)
    }

    pub fn single_table(&self, i: usize) -> &[f64] {
        &self.singles[i]
    }

    pub fn pair_table(&self, e: usize) -> &[f64] {
        &self.pairs[e]
    }

    /// `μ_i(x_i, y)`; `y` must be 0 for unlabeled marginals.
    pub fn labeled_single(&self, i: usize, xi: usize, y: usize) -> f64 {
        self.singles[i][xi * self.stride() + y]
    }

    /// `μ_ij(x_i, x_j, y)` for edge `e = (i, j)`; `y` must be 0 for unlabeled marginals.
    pub fn labeled_pair(&self, e: usize, xi: usize, xj: usize, y: usize) -> f64 {
        let kj = self.graph.domain().cardinality(self.graph.edges()[e].1);
        self.pairs[e][(xi * kj + xj) * self.stride() + y]
    }

    /// Borrowed view of the tables at label `y`.
    pub fn label_slice(&self, y: usize) -> Result<LabelSlice<'_>> {
        let l = self.label_cardinality.ok_or(Error::LabelAxisMissing)?;
        if y >= l {
            return Err(Error::LabelOutOfRange {
                label: y,
                cardinality: l,
            });
        }
        Ok(LabelSlice {
            marginals: self,
            label: y,
        })
    }

    /// Feature domain, plus the label as a trailing coordinate when present.
    pub fn coordinate_domain(&self) -> DiscreteDomain {
        match self.label_cardinality {
            Some(l) => self
                .graph
                .domain()
                .with_extra(l)
                .expect("positive label cardinality"),
            None => self.graph.domain().clone(),
        }
    }

    /// The same marginals restricted to a subset of the edges.
    pub fn restrict_to_edges(&self, edges: &[(usize, usize)]) -> Result<Self> {
        let graph = self.graph.with_edges(edges)?;
        let pairs = graph
            .edges()
            .iter()
            .map(|&(i, j)| self.pairs[self.graph.edge_index(i, j).expect("checked")].clone())
            .collect();
        Ok(Self {
            graph,
            label_cardinality: self.label_cardinality,
            singles: self.singles.clone(),
            pairs,
        })
    }
}

impl PairwiseTables for MarginalVector {
    fn graph(&self) -> &GraphStructure {
        &self.graph
    }

    /// Label-marginalized when a label axis is present.
    fn single(&self, i: usize, xi: usize) -> f64 {
        let l = self.stride();
        self.singles[i][xi * l..(xi + 1) * l].iter().sum()
    }

    fn pair(&self, e: usize, xi: usize, xj: usize) -> f64 {
        let l = self.stride();
        let kj = self.graph.domain().cardinality(self.graph.edges()[e].1);
        let base = (xi * kj + xj) * l;
        self.pairs[e][base..base + l].iter().sum()
    }
}

/// Tables of a labeled [`MarginalVector`] at one fixed label.
#[derive(Clone, Copy, Debug)]
pub struct LabelSlice<'a> {
    marginals: &'a MarginalVector,
    label: usize,
}

impl LabelSlice<'_> {
    pub fn label(&self) -> usize {
        self.label
    }
}

impl PairwiseTables for LabelSlice<'_> {
    fn graph(&self) -> &GraphStructure {
        &self.marginals.graph
    }

    fn single(&self, i: usize, xi: usize) -> f64 {
        self.marginals.labeled_single(i, xi, self.label)
    }

    fn pair(&self, e: usize, xi: usize, xj: usize) -> f64 {
        self.marginals.labeled_pair(e, xi, xj, self.label)
    }
}

/// Sub-normalized, locally consistent pseudo-marginals over a universe.
///
/// Tables are full-domain sized; entries outside the universe are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoMarginals {
    graph: GraphStructure,
    universe: AssignmentUniverse,
    singles: Vec<Vec<f64>>,
    pairs: Vec<Vec<f64>>,
}

impl PseudoMarginals {
    pub fn new(
        graph: GraphStructure,
        universe: AssignmentUniverse,
        singles: Vec<Vec<f64>>,
        pairs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let unlabeled = MarginalVector::new(graph, None, singles, pairs)?;
        if universe.num_variables() != unlabeled.graph.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: unlabeled.graph.num_nodes(),
                found: universe.num_variables(),
            });
        }
        let MarginalVector {
            graph,
            singles,
            pairs,
            ..
        } = unlabeled;
        for (i, t) in singles.iter().enumerate() {
            for (x, &v) in t.iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::InvalidMarginals(format!(
                        "negative entry at node {i}, value {x}"
                    )));
                }
                if v != 0.0 && !universe.is_allowed(i, x) {
                    return Err(Error::InvalidMarginals(format!(
                        "mass outside the universe at node {i}, value {x}"
                    )));
                }
            }
        }
        for (e, (t, &(i, j))) in pairs.iter().zip(graph.edges()).enumerate() {
            let kj = graph.domain().cardinality(j);
            for (idx, &v) in t.iter().enumerate() {
                let (xi, xj) = (idx / kj, idx % kj);
                if v < 0.0 {
                    return Err(Error::InvalidMarginals(format!(
                        "negative entry on edge {e}"
                    )));
                }
                if v != 0.0 && !(universe.is_allowed(i, xi) && universe.is_allowed(j, xj)) {
                    return Err(Error::InvalidMarginals(format!(
                        "mass outside the universe on edge ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self {
            graph,
            universe,
            singles,
            pairs,
        })
    }

    /// Copies `tables` on the cells of `universe`, zero elsewhere.
    pub fn from_tables<T: PairwiseTables + ?Sized>(
        tables: &T,
        universe: AssignmentUniverse,
    ) -> Result<Self> {
        let graph = tables.graph().clone();
        let domain = graph.domain();
        let singles = (0..graph.num_nodes())
            .map(|i| {
                (0..domain.cardinality(i))
                    .map(|x| {
                        if universe.is_allowed(i, x) {
                            tables.single(i, x)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let pairs = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, &(i, j))| {
                let (ki, kj) = (domain.cardinality(i), domain.cardinality(j));
                let mut t = vec![0.0; ki * kj];
                for xi in 0..ki {
                    for xj in 0..kj {
                        if universe.is_allowed(i, xi) && universe.is_allowed(j, xj) {
                            t[xi * kj + xj] = tables.pair(e, xi, xj);
                        }
                    }
                }
                t
            })
            .collect();
        Self::new(graph, universe, singles, pairs)
    }

    pub fn universe(&self) -> &AssignmentUniverse {
        &self.universe
    }

    pub fn single_table(&self, i: usize) -> &[f64] {
        &self.singles[i]
    }

    pub fn pair_table(&self, e: usize) -> &[f64] {
        &self.pairs[e]
    }

    /// Total mass of node `i`.
    pub fn node_total(&self, i: usize) -> f64 {
        self.singles[i].iter().sum()
    }

    /// `Z`, read off node 0; all node totals agree on a consistent vector.
    pub fn partition_function(&self) -> f64 {
        self.node_total(0)
    }

    /// Largest violation of local consistency or of equal node totals.
    pub fn consistency_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let z = self.partition_function();
        for i in 0..self.graph.num_nodes() {
            worst = worst.max((self.node_total(i) - z).abs());
        }
        let domain = self.graph.domain();
        for (e, &(i, j)) in self.graph.edges().iter().enumerate() {
            let (ki, kj) = (domain.cardinality(i), domain.cardinality(j));
            for xi in 0..ki {
                let s: f64 = (0..kj).map(|xj| self.pairs[e][xi * kj + xj]).sum();
                worst = worst.max((s - self.singles[i][xi]).abs());
            }
            for xj in 0..kj {
                let s: f64 = (0..ki).map(|xi| self.pairs[e][xi * kj + xj]).sum();
                worst = worst.max((s - self.singles[j][xj]).abs());
            }
        }
        worst
    }

    /// Largest amount by which an entry exceeds the matching entry of `bound`.
    pub fn excess_over<T: PairwiseTables + ?Sized>(&self, bound: &T) -> f64 {
        let mut worst: f64 = 0.0;
        let domain = self.graph.domain();
        for i in 0..self.graph.num_nodes() {
            for x in 0..domain.cardinality(i) {
                worst = worst.max(self.singles[i][x] - bound.single(i, x));
            }
        }
        for (e, &(_, j)) in self.graph.edges().iter().enumerate() {
            let kj = domain.cardinality(j);
            for (idx, &v) in self.pairs[e].iter().enumerate() {
                worst = worst.max(v - bound.pair(e, idx / kj, idx % kj));
            }
        }
        worst
    }

    /// Pseudo-marginals on the subgraph induced by `nodes` (renumbered).
    pub fn restrict_nodes(&self, nodes: &[usize]) -> Result<Self> {
        let graph = self.graph.induced(nodes)?;
        let singles = nodes.iter().map(|&v| self.singles[v].clone()).collect();
        let pairs = graph
            .edges()
            .iter()
            .map(|&(a, b)| {
                let e = self
                    .graph
                    .edge_index(nodes[a], nodes[b])
                    .expect("induced edge");
                if nodes[a] < nodes[b] {
                    self.pairs[e].clone()
                } else {
                    // Renumbering flipped the orientation: transpose.
                    let (ka, kb) = (graph.domain().cardinality(a), graph.domain().cardinality(b));
                    let mut t = vec![0.0; ka * kb];
                    for xa in 0..ka {
                        for xb in 0..kb {
                            t[xa * kb + xb] = self.pairs[e][xb * ka + xa];
                        }
                    }
                    t
                }
            })
            .collect();
        let allowed = nodes
            .iter()
            .map(|&v| self.universe.allowed(v).to_vec())
            .collect();
        let universe = AssignmentUniverse::new(graph.domain(), allowed)?;
        Self::new(graph, universe, singles, pairs)
    }
}

impl PairwiseTables for PseudoMarginals {
    fn graph(&self) -> &GraphStructure {
        &self.graph
    }

    fn single(&self, i: usize, xi: usize) -> f64 {
        self.singles[i][xi]
    }

    fn pair(&self, e: usize, xi: usize, xj: usize) -> f64 {
        let kj = self.graph.domain().cardinality(self.graph.edges()[e].1);
        self.pairs[e][xi * kj + xj]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableId {
    Single(usize),
    Pair(usize, usize),
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableId::Single(i) => write!(f, "singleton {i}"),
            TableId::Pair(i, j) => write!(f, "pair ({i},{j})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NegativeEntry {
        table: TableId,
        index: usize,
        value: f64,
    },
    EntryAboveOne {
        table: TableId,
        index: usize,
        value: f64,
    },
    Normalization {
        node: usize,
        total: f64,
    },
    /// `Σ_{other} μ_ij(..) ≠ μ_node(value[, label])`.
    Consistency {
        edge: (usize, usize),
        node: usize,
        value: usize,
        label: Option<usize>,
        pair_sum: f64,
        single: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeEntry {
                table,
                index,
                value,
            } => {
                write!(f, "negative entry {value} in {table} at index {index}")
            }
            Violation::EntryAboveOne {
                table,
                index,
                value,
            } => {
                write!(f, "entry {value} > 1 in {table} at index {index}")
            }
            Violation::Normalization { node, total } => {
                write!(f, "singleton {node} sums to {total}, not 1")
            }
            Violation::Consistency {
                edge,
                node,
                value,
                label,
                pair_sum,
                single,
            } => {
                write!(
                    f,
                    "pair ({},{}) marginalizes to {pair_sum} at x_{node}={value}",
                    edge.0, edge.1
                )?;
                if let Some(y) = label {
                    write!(f, ", y={y}")?;
                }
                write!(f, " but singleton is {single}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

/// Checks range, normalization and local consistency of `marginals` at
/// [`CONSISTENCY_TOLERANCE`].
pub fn validate_marginals(marginals: &MarginalVector) -> ValidationReport {
    let tol = CONSISTENCY_TOLERANCE;
    let mut violations = Vec::new();
    let graph = &marginals.graph;
    let domain = graph.domain();
    let l = marginals.stride();

    let tables = marginals
        .singles
        .iter()
        .enumerate()
        .map(|(i, t)| (TableId::Single(i), t))
        .chain(
            marginals
                .pairs
                .iter()
                .zip(graph.edges())
                .map(|(t, &(i, j))| (TableId::Pair(i, j), t)),
        );
    for (table, t) in tables {
        for (index, &value) in t.iter().enumerate() {
            if value < -tol {
                violations.push(Violation::NegativeEntry {
                    table,
                    index,
                    value,
                });
            } else if value > 1.0 + tol {
                violations.push(Violation::EntryAboveOne {
                    table,
                    index,
                    value,
                });
            }
        }
    }

    for (node, t) in marginals.singles.iter().enumerate() {
        let total: f64 = t.iter().sum();
        if (total - 1.0).abs() > tol {
            violations.push(Violation::Normalization { node, total });
        }
    }

    let label_of = |y: usize| marginals.label_cardinality.map(|_| y);
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let (ki, kj) = (domain.cardinality(i), domain.cardinality(j));
        for y in 0..l {
            for xi in 0..ki {
                let pair_sum: f64 = (0..kj).map(|xj| marginals.labeled_pair(e, xi, xj, y)).sum();
                let single = marginals.labeled_single(i, xi, y);
                if (pair_sum - single).abs() > tol {
                    violations.push(Violation::Consistency {
                        edge: (i, j),
                        node: i,
                        value: xi,
                        label: label_of(y),
                        pair_sum,
                        single,
                    });
                }
            }
            for xj in 0..kj {
                let pair_sum: f64 = (0..ki).map(|xi| marginals.labeled_pair(e, xi, xj, y)).sum();
                let single = marginals.labeled_single(j, xj, y);
                if (pair_sum - single).abs() > tol {
                    violations.push(Violation::Consistency {
                        edge: (i, j),
                        node: j,
                        value: xj,
                        label: label_of(y),
                        pair_sum,
                        single,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// The tables of `marginals` at label `y`, as pseudo-marginals over the full
/// feature domain.
pub fn slice_by_label(marginals: &MarginalVector, y: usize) -> Result<PseudoMarginals> {
    let slice = marginals.label_slice(y)?;
    PseudoMarginals::from_tables(&slice, AssignmentUniverse::full(marginals.graph.domain()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    MinConditional,
    MinJoint,
    MaxJoint,
    MaxUniverse,
    MaxUniverseExcluding,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::MinConditional => "min_conditional",
            BoundKind::MinJoint => "min_joint",
            BoundKind::MaxJoint => "max_joint",
            BoundKind::MaxUniverse => "max_universe",
            BoundKind::MaxUniverseExcluding => "max_universe_excluding",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exactness {
    /// Exact: the marginals live on an acyclic graph.
    ExactTree,
    /// A valid but possibly loose bound from a relaxation over a cyclic graph.
    RelaxationCyclic,
}

impl Exactness {
    pub fn as_str(&self) -> &'static str {
        match self {
            Exactness::ExactTree => "exact_tree",
            Exactness::RelaxationCyclic => "relaxation_cyclic",
        }
    }

    pub(crate) fn of(graph: &GraphStructure) -> Self {
        if graph.is_acyclic() {
            Exactness::ExactTree
        } else {
            Exactness::RelaxationCyclic
        }
    }
}

/// An explicit nonnegative function over a set of joint assignments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseDistribution {
    pub atoms: Vec<(Vec<usize>, f64)>,
}

impl SparseDistribution {
    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|(_, p)| p).sum()
    }

    pub fn probability(&self, values: &[usize]) -> f64 {
        self.atoms
            .iter()
            .filter(|(u, _)| u.as_slice() == values)
            .map(|(_, p)| p)
            .sum()
    }

    /// Singleton and pairwise marginals over `graph`.
    pub fn marginals(&self, graph: &GraphStructure) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let domain = graph.domain();
        let mut singles: Vec<Vec<f64>> = domain
            .cardinalities()
            .iter()
            .map(|&k| vec![0.0; k])
            .collect();
        let mut pairs: Vec<Vec<f64>> = graph
            .edges()
            .iter()
            .map(|&(i, j)| vec![0.0; domain.cardinality(i) * domain.cardinality(j)])
            .collect();
        for (u, p) in &self.atoms {
            for (i, &v) in u.iter().enumerate() {
                singles[i][v] += p;
            }
            for (e, &(i, j)) in graph.edges().iter().enumerate() {
                pairs[e][u[i] * domain.cardinality(j) + u[j]] += p;
            }
        }
        (singles, pairs)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Certificate {
    pub pseudo_marginals: Option<PseudoMarginals>,
    pub distribution: Option<SparseDistribution>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundResult {
    pub value: f64,
    pub kind: BoundKind,
    pub exactness: Exactness,
    pub certificate: Option<Certificate>,
    /// LP dual values, for diagnostics only.
    pub duals: Option<Vec<f64>>,
}

impl BoundResult {
    pub(crate) fn new(value: f64, kind: BoundKind, exactness: Exactness) -> Self {
        Self {
            value: clamp_unit(value),
            kind,
            exactness,
            certificate: None,
            duals: None,
        }
    }
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_chain3() -> MarginalVector {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![2, 2, 2]).unwrap());
        MarginalVector::new(graph, None, vec![vec![0.5; 2]; 3], vec![vec![0.25; 4]; 2]).unwrap()
    }

    #[test]
    fn graph_classification() {
        let d = DiscreteDomain::new(vec![2; 4]).unwrap();
        let tree = GraphStructure::new(d.clone(), &[(1, 0), (1, 2), (3, 1)]).unwrap();
        assert_eq!(tree.class(), StructureClass::Tree);
        assert_eq!(tree.edges(), &[(0, 1), (1, 2), (1, 3)]);
        assert_eq!(tree.degree(1), 3);
        let forest = GraphStructure::new(d.clone(), &[(0, 1)]).unwrap();
        assert_eq!(forest.class(), StructureClass::Forest);
        assert_eq!(forest.num_components(), 3);
        let cyc = GraphStructure::new(d.clone(), &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(cyc.class(), StructureClass::Cyclic);
        assert!(GraphStructure::new(d.clone(), &[(0, 0)]).is_err());
        assert!(GraphStructure::new(d.clone(), &[(0, 1), (1, 0)]).is_err());
        assert!(GraphStructure::new(d, &[(0, 4)]).is_err());
    }

    #[test]
    fn chain_detection() {
        let d = DiscreteDomain::new(vec![2; 3]).unwrap();
        assert!(GraphStructure::chain(d.clone()).is_chain());
        assert!(!GraphStructure::new(d.clone(), &[(0, 2), (1, 2)])
            .unwrap()
            .is_chain());
        assert!(GraphStructure::chain(DiscreteDomain::new(vec![3]).unwrap()).is_chain());
    }

    #[test]
    fn uniform_chain_validates() {
        assert!(validate_marginals(&uniform_chain3()).is_ok());
    }

    #[test]
    fn inconsistent_row_is_reported_at_its_edge() {
        let mut m = uniform_chain3();
        // edge (1,2): μ_12(0,0)=0.3, μ_12(0,1)=0.25, row sum 0.55 ≠ μ_1(0)=0.5
        m.pairs[1][0] = 0.3;
        let report = validate_marginals(&m);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::Consistency {
                edge: (1, 2),
                node: 1,
                value: 0,
                ..
            }
        )));
    }

    #[test]
    fn negative_entry_is_reported() {
        let mut m = uniform_chain3();
        m.singles[0] = vec![-0.01, 1.01];
        let report = validate_marginals(&m);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::NegativeEntry {
                table: TableId::Single(0),
                ..
            }
        )));
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![2, 2]).unwrap());
        let err = MarginalVector::new(graph, None, vec![vec![0.5; 2]; 2], vec![vec![0.25; 3]])
            .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn universe_sizes() {
        let d = DiscreteDomain::new(vec![2, 2, 2]).unwrap();
        assert_eq!(
            universe_size(&AssignmentUniverse::full(&d), 1_000_000).count,
            8
        );
        let pinned =
            AssignmentUniverse::pinned(&d, &Assignment::partial(3, &[(0, 1)]).unwrap()).unwrap();
        assert_eq!(universe_size(&pinned, 1_000_000).count, 4);
        let big = DiscreteDomain::new(vec![10; 7]).unwrap();
        let s = universe_size(&AssignmentUniverse::full(&big), 1_000_000);
        assert_eq!(s.count, 10_000_000);
        assert!(s.exceeds_cap);
    }

    #[test]
    fn universe_iteration_matches_size() {
        let d = DiscreteDomain::new(vec![2, 3, 2]).unwrap();
        let u = AssignmentUniverse::new(&d, vec![vec![0, 1], vec![2, 0], vec![1]]).unwrap();
        let all: Vec<_> = u.iter().collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0], vec![0, 0, 1]);
        assert!(all.iter().all(|a| u.contains(a)));
        assert!(AssignmentUniverse::new(&d, vec![vec![0], vec![], vec![1]]).is_err());
        assert!(AssignmentUniverse::new(&d, vec![vec![0], vec![3], vec![1]]).is_err());
    }

    #[test]
    fn slicing_a_uniform_two_label_vector_halves_it() {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![2, 2, 2]).unwrap());
        let m = MarginalVector::new(
            graph,
            Some(2),
            vec![vec![0.25; 4]; 3],
            vec![vec![0.125; 8]; 2],
        )
        .unwrap();
        assert!(validate_marginals(&m).is_ok());
        let s = slice_by_label(&m, 1).unwrap();
        for i in 0..3 {
            assert!((s.node_total(i) - 0.5).abs() < 1e-15);
        }
        assert!(s.consistency_residual() < 1e-12);
        assert!(matches!(
            slice_by_label(&m, 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn assignment_merge_rejects_overlap() {
        let a = Assignment::partial(3, &[(0, 1)]).unwrap();
        let b = Assignment::partial(3, &[(1, 0), (2, 1)]).unwrap();
        assert_eq!(a.merge(&b).unwrap().to_full(), Some(vec![1, 0, 1]));
        assert!(a.merge(&a).is_err());
    }

    #[test]
    fn restrict_nodes_transposes_flipped_edges() {
        let d = DiscreteDomain::new(vec![2, 3]).unwrap();
        let g = GraphStructure::chain(d.clone());
        let pm = PseudoMarginals::new(
            g,
            AssignmentUniverse::full(&d),
            vec![vec![0.3, 0.7], vec![0.2, 0.3, 0.5]],
            vec![vec![0.1, 0.1, 0.1, 0.1, 0.2, 0.4]],
        )
        .unwrap();
        let r = pm.restrict_nodes(&[1, 0]).unwrap();
        assert_eq!(r.pair(0, 2, 1), pm.pair(0, 1, 2));
        assert!(r.consistency_residual() < 1e-12);
    }
}
