//! Max-flow form of the universe maximization on chain graphs.
//!
//! For the chain `0-1-..-(n-1)` and a box universe, the network has one node
//! per allowed `(i, x_i)`, arcs `(i, x_i) -> (i+1, x_{i+1})` with capacity
//! `μ_{i,i+1}(x_i, x_{i+1})`, and uncapacitated arcs from the source into
//! layer 0 and from layer `n-1` into the sink. Every s-t path is an assignment
//! in `U`, and the maximum flow equals `max_{p ∈ P(μ)} p(U)`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{AssignmentUniverse, PairwiseTables, SparseDistribution};

/// Residual capacities at or below this count as saturated.
const FLOW_EPSILON: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetwork {
    /// Per variable, `(value, node)` for every allowed value.
    layers: Vec<Vec<(usize, usize)>>,
    arcs: Vec<FlowArc>,
    num_nodes: usize,
    inter_layer_arcs: usize,
}

impl FlowNetwork {
    pub const SOURCE: usize = 0;
    pub const SINK: usize = 1;

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Nodes other than the source and sink.
    pub fn num_internal_nodes(&self) -> usize {
        self.num_nodes - 2
    }

    pub fn arcs(&self) -> &[FlowArc] {
        &self.arcs
    }

    pub fn num_inter_layer_arcs(&self) -> usize {
        self.inter_layer_arcs
    }

    pub fn layer(&self, i: usize) -> &[(usize, usize)] {
        &self.layers[i]
    }

    /// Graphviz rendering; internal nodes are named `"i:x_i"`.
    pub fn to_dot(&self) -> String {
        let mut names = vec![String::new(); self.num_nodes];
        names[Self::SOURCE] = "s".into();
        names[Self::SINK] = "t".into();
        for (i, layer) in self.layers.iter().enumerate() {
            for &(v, node) in layer {
                names[node] = format!("{i}:{v}");
            }
        }
        let mut out = String::from("digraph flow {\n  rankdir=LR;\n");
        for arc in &self.arcs {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                names[arc.from], names[arc.to], arc.capacity
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Builds the layered network for a chain and a box universe.
///
/// "Infinite" capacities are the total of all pairwise entries plus one,
/// which no flow can reach. With a single variable there are no pairwise
/// arcs, so the source arcs carry the singleton capacities instead.
pub fn build_flow_network<T: PairwiseTables + ?Sized>(
    universe: &AssignmentUniverse,
    marginals: &T,
) -> Result<FlowNetwork> {
    let graph = marginals.graph();
    if !graph.is_chain() {
        return Err(Error::NotAChain);
    }
    let domain = graph.domain();
    let n = graph.num_nodes();
    if universe.num_variables() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: universe.num_variables(),
        });
    }
    let mut next = 2;
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let mut layer = Vec::with_capacity(universe.allowed(i).len());
        for &v in universe.allowed(i) {
            if v >= domain.cardinality(i) {
                return Err(Error::ValueOutOfRange {
                    variable: i,
                    value: v,
                });
            }
            layer.push((v, next));
            next += 1;
        }
        layers.push(layer);
    }

    let mut infinite = 1.0;
    for e in 0..graph.edges().len() {
        for a in 0..domain.cardinality(e) {
            for b in 0..domain.cardinality(e + 1) {
                infinite += marginals.pair(e, a, b).max(0.0);
            }
        }
    }

    let mut arcs = Vec::new();
    for &(v, node) in &layers[0] {
        let capacity = if n == 1 {
            marginals.single(0, v).max(0.0)
        } else {
            infinite
        };
        arcs.push(FlowArc {
            from: FlowNetwork::SOURCE,
            to: node,
            capacity,
        });
    }
    for e in 0..n.saturating_sub(1) {
        for &(a, from) in &layers[e] {
            for &(b, to) in &layers[e + 1] {
                arcs.push(FlowArc {
                    from,
                    to,
                    capacity: marginals.pair(e, a, b).max(0.0),
                });
            }
        }
    }
    let inter_layer_arcs = arcs.len() - layers[0].len();
    for &(_, node) in &layers[n - 1] {
        arcs.push(FlowArc {
            from: node,
            to: FlowNetwork::SINK,
            capacity: infinite,
        });
    }
    Ok(FlowNetwork {
        layers,
        arcs,
        num_nodes: next,
        inter_layer_arcs,
    })
}

/// A maximum flow and the flow on every network arc.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxFlow {
    pub value: f64,
    pub arc_flows: Vec<f64>,
}

struct Residual {
    head: Vec<usize>,
    cap: Vec<f64>,
    adjacency: Vec<Vec<usize>>,
}

impl Residual {
    fn new(net: &FlowNetwork) -> Self {
        let mut r = Self {
            head: Vec::with_capacity(2 * net.arcs.len()),
            cap: Vec::with_capacity(2 * net.arcs.len()),
            adjacency: vec![Vec::new(); net.num_nodes],
        };
        for arc in &net.arcs {
            r.adjacency[arc.from].push(r.head.len());
            r.head.push(arc.to);
            r.cap.push(arc.capacity);
            r.adjacency[arc.to].push(r.head.len());
            r.head.push(arc.from);
            r.cap.push(0.0);
        }
        r
    }

    fn levels(&self, source: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adjacency.len()];
        level[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &a in &self.adjacency[v] {
                let w = self.head[a];
                if self.cap[a] > FLOW_EPSILON && level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        level
    }

    fn augment(
        &mut self,
        v: usize,
        sink: usize,
        limit: f64,
        level: &[usize],
        cursor: &mut [usize],
    ) -> f64 {
        if v == sink {
            return limit;
        }
        while cursor[v] < self.adjacency[v].len() {
            let a = self.adjacency[v][cursor[v]];
            let w = self.head[a];
            if self.cap[a] > FLOW_EPSILON && level[w] == level[v] + 1 {
                let pushed = self.augment(w, sink, limit.min(self.cap[a]), level, cursor);
                if pushed > 0.0 {
                    self.cap[a] -= pushed;
                    self.cap[a ^ 1] += pushed;
                    return pushed;
                }
            }
            cursor[v] += 1;
        }
        0.0
    }
}

/// Maximum s-t flow by Dinic's shortest-augmenting-path algorithm.
pub fn chain_max_flow(net: &FlowNetwork) -> MaxFlow {
    let mut residual = Residual::new(net);
    let (source, sink) = (FlowNetwork::SOURCE, FlowNetwork::SINK);
    loop {
        let level = residual.levels(source);
        if level[sink] == usize::MAX {
            break;
        }
        let mut cursor = vec![0; net.num_nodes];
        while residual.augment(source, sink, f64::INFINITY, &level, &mut cursor) > 0.0 {}
    }
    let arc_flows: Vec<f64> = (0..net.arcs.len())
        .map(|k| residual.cap[2 * k + 1])
        .collect();
    let value = net
        .arcs
        .iter()
        .zip(&arc_flows)
        .filter(|(arc, _)| arc.from == source)
        .map(|(_, f)| f)
        .sum();
    MaxFlow { value, arc_flows }
}

impl MaxFlow {
    /// Splits the flow into s-t paths; each path is an assignment in the
    /// universe weighted by the flow it carries.
    pub fn decompose(&self, net: &FlowNetwork) -> SparseDistribution {
        let mut remaining = self.arc_flows.clone();
        let mut outgoing = vec![Vec::new(); net.num_nodes];
        for (k, arc) in net.arcs.iter().enumerate() {
            outgoing[arc.from].push(k);
        }
        let mut value_of = vec![0; net.num_nodes];
        for layer in &net.layers {
            for &(v, node) in layer {
                value_of[node] = v;
            }
        }
        let mut atoms = Vec::new();
        loop {
            let mut path = Vec::with_capacity(net.layers.len() + 1);
            let mut v = FlowNetwork::SOURCE;
            while v != FlowNetwork::SINK {
                match outgoing[v].iter().find(|&&k| remaining[k] > FLOW_EPSILON) {
                    Some(&k) => {
                        path.push(k);
                        v = net.arcs[k].to;
                    }
                    None => break,
                }
            }
            if v != FlowNetwork::SINK {
                break;
            }
            let amount = path
                .iter()
                .map(|&k| remaining[k])
                .fold(f64::INFINITY, f64::min);
            path.iter().for_each(|&k| remaining[k] -= amount);
            let assignment = path[..path.len() - 1]
                .iter()
                .map(|&k| value_of[net.arcs[k].to])
                .collect();
            atoms.push((assignment, amount));
        }
        SparseDistribution { atoms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscreteDomain, GraphStructure, MarginalVector};

    fn uniform_chain3() -> MarginalVector {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![2, 2, 2]).unwrap());
        MarginalVector::new(graph, None, vec![vec![0.5; 2]; 3], vec![vec![0.25; 4]; 2]).unwrap()
    }

    #[test]
    fn network_shape() {
        let mu = uniform_chain3();
        let net = build_flow_network(&AssignmentUniverse::full(mu.graph().domain()), &mu).unwrap();
        assert_eq!(net.num_nodes(), 8);
        assert_eq!(net.num_internal_nodes(), 6);
        assert_eq!(net.num_inter_layer_arcs(), 8);
        assert!(net
            .arcs()
            .iter()
            .filter(|a| a.from >= 2 && a.to >= 2)
            .all(|a| a.capacity == 0.25));
        let pinned =
            AssignmentUniverse::new(mu.graph().domain(), vec![vec![0], vec![0, 1], vec![0, 1]])
                .unwrap();
        assert_eq!(build_flow_network(&pinned, &mu).unwrap().layer(0).len(), 1);
    }

    #[test]
    fn uniform_chain_flows() {
        let mu = uniform_chain3();
        let full = AssignmentUniverse::full(mu.graph().domain());
        let flow = chain_max_flow(&build_flow_network(&full, &mu).unwrap());
        assert!((flow.value - 1.0).abs() < 1e-12);
        let pinned =
            AssignmentUniverse::new(mu.graph().domain(), vec![vec![0], vec![0, 1], vec![0, 1]])
                .unwrap();
        let net = build_flow_network(&pinned, &mu).unwrap();
        let flow = chain_max_flow(&net);
        assert!((flow.value - 0.5).abs() < 1e-12);
        let paths = flow.decompose(&net);
        assert!((paths.total() - 0.5).abs() < 1e-12);
        assert!(paths.atoms.iter().all(|(u, _)| pinned.contains(u)));
    }

    #[test]
    fn single_variable_uses_singleton_capacity() {
        let graph = GraphStructure::chain(DiscreteDomain::new(vec![3]).unwrap());
        let mu = MarginalVector::new(graph, None, vec![vec![0.2, 0.3, 0.5]], vec![]).unwrap();
        let u = AssignmentUniverse::new(mu.graph().domain(), vec![vec![0, 2]]).unwrap();
        let flow = chain_max_flow(&build_flow_network(&u, &mu).unwrap());
        assert!((flow.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn non_chain_is_rejected() {
        let domain = DiscreteDomain::new(vec![2, 2, 2]).unwrap();
        let graph = GraphStructure::new(domain, &[(0, 1), (0, 2)]).unwrap();
        let mu = MarginalVector::new(graph, None, vec![vec![0.5; 2]; 3], vec![vec![0.25; 4]; 2])
            .unwrap();
        let u = AssignmentUniverse::full(mu.graph().domain());
        assert_eq!(build_flow_network(&u, &mu), Err(Error::NotAChain));
    }

    #[test]
    fn dot_output_names_every_arc() {
        let mu = uniform_chain3();
        let net = build_flow_network(&AssignmentUniverse::full(mu.graph().domain()), &mu).unwrap();
        let dot = net.to_dot();
        assert!(dot.starts_with("digraph flow {"));
        assert_eq!(dot.matches("->").count(), net.arcs().len());
        assert!(dot.contains("\"0:1\" -> \"1:0\" [label=\"0.25\"]"));
    }
}
