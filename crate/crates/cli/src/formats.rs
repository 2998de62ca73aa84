//! JSON and CSV file formats.
//!
//! Marginal tables are nested arrays indexed `[x_i]` for singletons and
//! `[x_i][x_j]` for pairs, with a trailing `[y]` level when a label axis is
//! present. Pair keys are `"i-j"` with `i < j`. Objects are written with
//! sorted keys.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use robcond_core::bounds::ConditionalQuery;
use robcond_core::estimation::{Sample, SampleTable};
use robcond_core::model::{
    Assignment, BoundResult, DiscreteDomain, GraphStructure, MarginalVector, PairwiseTables,
    PseudoMarginals, SparseDistribution,
};
use serde_json::{json, Map, Value};

use crate::error::CliError;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn as_index(v: &Value, what: &str) -> Result<usize, CliError> {
    v.as_u64().map(|u| u as usize).ok_or_else(|| {
        usage(format!(
            "{what}: expected a non-negative integer, found {v}"
        ))
    })
}

fn index_list(v: &Value, what: &str) -> Result<Vec<usize>, CliError> {
    v.as_array()
        .ok_or_else(|| usage(format!("{what}: expected an array")))?
        .iter()
        .map(|x| as_index(x, what))
        .collect()
}

fn edge_list(v: &Value) -> Result<Vec<(usize, usize)>, CliError> {
    v.as_array()
        .ok_or_else(|| usage("\"edges\": expected an array of pairs"))?
        .iter()
        .map(|e| match index_list(e, "edge")?.as_slice() {
            &[i, j] => Ok((i, j)),
            _ => Err(usage(format!("edge {e}: expected [i, j]"))),
        })
        .collect()
}

fn edges_json(graph: &GraphStructure) -> Value {
    Value::Array(graph.edges().iter().map(|&(i, j)| json!([i, j])).collect())
}

fn pair_key(i: usize, j: usize) -> String {
    format!("{i}-{j}")
}

/// Nests a flat row-major table with the given shape.
fn nest(flat: &[f64], shape: &[usize]) -> Value {
    match shape {
        [] => json!(flat[0]),
        [_] => Value::Array(flat.iter().map(|&v| json!(v)).collect()),
        [first, rest @ ..] => {
            let stride: usize = rest.iter().product();
            Value::Array(
                (0..*first)
                    .map(|k| nest(&flat[k * stride..(k + 1) * stride], rest))
                    .collect(),
            )
        }
    }
}

/// Flattens a nested array, checking it has exactly the given shape.
fn flatten(v: &Value, shape: &[usize], what: &str, out: &mut Vec<f64>) -> Result<(), CliError> {
    match shape.split_first() {
        None => {
            let x = v
                .as_f64()
                .ok_or_else(|| usage(format!("{what}: expected a number, found {v}")))?;
            out.push(x);
            Ok(())
        }
        Some((&len, rest)) => {
            let items = v
                .as_array()
                .filter(|a| a.len() == len)
                .ok_or_else(|| usage(format!("{what}: expected an array of length {len}")))?;
            items
                .iter()
                .try_for_each(|item| flatten(item, rest, what, out))
        }
    }
}

fn table_shape(dims: &[usize], label: Option<usize>) -> Vec<usize> {
    let mut shape = dims.to_vec();
    shape.extend(label);
    shape
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, CliError> {
    obj.get(key)
        .ok_or_else(|| usage(format!("missing field \"{key}\"")))
}

fn tables_json<T: PairwiseTables + ?Sized>(
    tables: &T,
    label: Option<usize>,
    single: impl Fn(usize) -> Vec<f64>,
    pair: impl Fn(usize) -> Vec<f64>,
) -> Map<String, Value> {
    let graph = tables.graph();
    let domain = graph.domain();
    let mut obj = Map::new();
    obj.insert("n".into(), json!(graph.num_nodes()));
    obj.insert("cardinalities".into(), json!(domain.cardinalities()));
    obj.insert("edges".into(), edges_json(graph));
    let singles: Map<String, Value> = (0..graph.num_nodes())
        .map(|i| {
            let shape = table_shape(&[domain.cardinality(i)], label);
            (i.to_string(), nest(&single(i), &shape))
        })
        .collect();
    let pairs: Map<String, Value> = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let shape = table_shape(&[domain.cardinality(i), domain.cardinality(j)], label);
            (pair_key(i, j), nest(&pair(e), &shape))
        })
        .collect();
    obj.insert("singles".into(), Value::Object(singles));
    obj.insert("pairs".into(), Value::Object(pairs));
    obj
}

pub fn marginals_to_json(m: &MarginalVector) -> Value {
    let mut obj = tables_json(
        m,
        m.label_cardinality(),
        |i| m.single_table(i).to_vec(),
        |e| m.pair_table(e).to_vec(),
    );
    if let Some(l) = m.label_cardinality() {
        obj.insert("label_cardinality".into(), json!(l));
    }
    Value::Object(obj)
}

/// Pseudo-marginals use the marginal schema plus `"Z"` and the universe's
/// allowed values per variable.
pub fn pseudo_marginals_to_json(m: &PseudoMarginals) -> Value {
    let mut obj = tables_json(
        m,
        None,
        |i| m.single_table(i).to_vec(),
        |e| m.pair_table(e).to_vec(),
    );
    obj.insert("Z".into(), json!(m.partition_function()));
    let universe = m.universe();
    obj.insert(
        "universe".into(),
        Value::Array(
            (0..universe.num_variables())
                .map(|i| json!(universe.allowed(i)))
                .collect(),
        ),
    );
    Value::Object(obj)
}

pub fn marginals_from_json(v: &Value) -> Result<MarginalVector, CliError> {
    let obj = v
        .as_object()
        .ok_or_else(|| usage("marginals: expected a JSON object"))?;
    let cards = index_list(field(obj, "cardinalities")?, "\"cardinalities\"")?;
    if let Some(n) = obj.get("n") {
        let n = as_index(n, "\"n\"")?;
        if n != cards.len() {
            return Err(usage(format!(
                "\"n\" is {n} but {} cardinalities are listed",
                cards.len()
            )));
        }
    }
    let label = match obj.get("label_cardinality") {
        None | Some(Value::Null) => None,
        Some(l) => Some(as_index(l, "\"label_cardinality\"")?),
    };
    let domain = DiscreteDomain::new(cards)?;
    let graph = GraphStructure::new(domain, &edge_list(field(obj, "edges")?)?)?;
    let domain = graph.domain();

    let singles_obj = field(obj, "singles")?
        .as_object()
        .ok_or_else(|| usage("\"singles\": expected an object"))?;
    let pairs_obj = field(obj, "pairs")?
        .as_object()
        .ok_or_else(|| usage("\"pairs\": expected an object"))?;
    if singles_obj.len() != graph.num_nodes() {
        return Err(usage(format!(
            "{} singleton tables for {} variables",
            singles_obj.len(),
            graph.num_nodes()
        )));
    }
    if pairs_obj.len() != graph.edges().len() {
        return Err(usage(format!(
            "{} pairwise tables for {} edges",
            pairs_obj.len(),
            graph.edges().len()
        )));
    }
    let mut singles = Vec::with_capacity(graph.num_nodes());
    for i in 0..graph.num_nodes() {
        let key = i.to_string();
        let table = singles_obj
            .get(&key)
            .ok_or_else(|| usage(format!("missing singleton table \"{key}\"")))?;
        let mut flat = Vec::new();
        let shape = table_shape(&[domain.cardinality(i)], label);
        flatten(table, &shape, &format!("singles[\"{key}\"]"), &mut flat)?;
        singles.push(flat);
    }
    let mut pairs = Vec::with_capacity(graph.edges().len());
    for &(i, j) in graph.edges() {
        let key = pair_key(i, j);
        let table = pairs_obj
            .get(&key)
            .ok_or_else(|| usage(format!("missing pairwise table \"{key}\"")))?;
        let mut flat = Vec::new();
        let shape = table_shape(&[domain.cardinality(i), domain.cardinality(j)], label);
        flatten(table, &shape, &format!("pairs[\"{key}\"]"), &mut flat)?;
        pairs.push(flat);
    }
    Ok(MarginalVector::new(graph, label, singles, pairs)?)
}

fn distribution_json(d: &SparseDistribution) -> Value {
    Value::Array(
        d.atoms
            .iter()
            .map(|(x, p)| json!({ "assignment": x, "probability": p }))
            .collect(),
    )
}

pub fn bound_result_to_json(r: &BoundResult) -> Value {
    let mut obj = Map::new();
    obj.insert("bound".into(), json!(r.value));
    obj.insert("kind".into(), json!(r.kind.as_str()));
    obj.insert("exactness".into(), json!(r.exactness.as_str()));
    if let Some(c) = &r.certificate {
        let mut cert = Map::new();
        if let Some(pm) = &c.pseudo_marginals {
            cert.insert("pseudo_marginals".into(), pseudo_marginals_to_json(pm));
        }
        if let Some(d) = &c.distribution {
            cert.insert("distribution".into(), distribution_json(d));
        }
        obj.insert("certificate".into(), Value::Object(cert));
    }
    Value::Object(obj)
}

/// Number of query coordinates: the features, plus the label when present.
fn coordinate_count(m: &MarginalVector) -> usize {
    m.graph().num_nodes() + usize::from(m.is_labeled())
}

fn partial_from_object(v: &Value, what: &str, n: usize) -> Result<Assignment, CliError> {
    let obj = v
        .as_object()
        .ok_or_else(|| usage(format!("\"{what}\": expected an object")))?;
    let mut pairs = Vec::with_capacity(obj.len());
    for (k, val) in obj {
        let i: usize = k
            .parse()
            .map_err(|_| usage(format!("\"{what}\": key \"{k}\" is not a variable index")))?;
        pairs.push((i, as_index(val, &format!("\"{what}\".\"{k}\""))?));
    }
    Ok(Assignment::partial(n, &pairs)?)
}

/// Reads `{"observed": {...}, "hidden": {...}}` or `{"x": [...], "y": v}`.
pub fn query_from_json(v: &Value, m: &MarginalVector) -> Result<ConditionalQuery, CliError> {
    let obj = v
        .as_object()
        .ok_or_else(|| usage("query: expected a JSON object"))?;
    if let Some(x) = obj.get("x") {
        if !m.is_labeled() {
            return Err(usage(
                "a multiclass query {\"x\", \"y\"} needs marginals with a label axis",
            ));
        }
        let x = index_list(x, "\"x\"")?;
        if x.len() != m.graph().num_nodes() {
            return Err(usage(format!(
                "\"x\" has {} values for {} features",
                x.len(),
                m.graph().num_nodes()
            )));
        }
        let y = as_index(field(obj, "y")?, "\"y\"")?;
        return Ok(ConditionalQuery::multiclass(&x, y));
    }
    let n = coordinate_count(m);
    let observed = match obj.get("observed") {
        Some(o) => partial_from_object(o, "observed", n)?,
        None => Assignment::empty(n),
    };
    let hidden = partial_from_object(field(obj, "hidden")?, "hidden", n)?;
    Ok(ConditionalQuery { observed, hidden })
}

/// Structure file: `{"edges": [[i, j], ...]}` with optional
/// `"cardinalities"` and `"label_cardinality"`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureFile {
    pub edges: Vec<(usize, usize)>,
    pub cardinalities: Option<Vec<usize>>,
    pub label_cardinality: Option<usize>,
}

pub fn structure_from_json(v: &Value) -> Result<StructureFile, CliError> {
    let obj = v
        .as_object()
        .ok_or_else(|| usage("structure: expected a JSON object"))?;
    let cardinalities = match obj.get("cardinalities") {
        None | Some(Value::Null) => None,
        Some(c) => Some(index_list(c, "\"cardinalities\"")?),
    };
    let label_cardinality = match obj.get("label_cardinality") {
        None | Some(Value::Null) => None,
        Some(l) => Some(as_index(l, "\"label_cardinality\"")?),
    };
    Ok(StructureFile {
        edges: edge_list(field(obj, "edges")?)?,
        cardinalities,
        label_cardinality,
    })
}

/// Integer-coded samples; the column named `y` holds the label.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCsv {
    pub variables: Vec<String>,
    pub has_label_column: bool,
    pub table: SampleTable,
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<usize, CliError> {
    cell.trim().parse().map_err(|_| {
        usage(format!(
            "row {row}, column \"{column}\": \"{cell}\" is not a non-negative integer"
        ))
    })
}

pub fn read_samples(path: &Path) -> Result<SampleCsv, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_col = headers.iter().position(|h| h.trim() == "y");
    let variables: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| Some(c) != label_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = r + 1;
        let mut values = Vec::with_capacity(variables.len());
        let mut label = None;
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_col {
                if !cell.trim().is_empty() {
                    label = Some(parse_cell(cell, row, "y")?);
                }
            } else {
                values.push(parse_cell(cell, row, &headers[c])?);
            }
        }
        rows.push(Sample { values, label });
    }
    Ok(SampleCsv {
        variables,
        has_label_column: label_col.is_some(),
        table: SampleTable::new(rows),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        },
        _ => usage(format!("{}: {e}", path.display())),
    }
}

/// One row of a ranking batch. `query` holds the parse error for rows that
/// could not be read.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRow {
    pub id: String,
    pub query: Result<ConditionalQuery, String>,
    /// True when the row uses the `x<i>`/`y` multiclass columns only.
    pub multiclass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum QueryColumn {
    Id,
    Observed(usize),
    Hidden(usize),
    Feature(usize),
    Label,
}

fn query_column(name: &str) -> Option<QueryColumn> {
    let name = name.trim();
    if name == "id" {
        return Some(QueryColumn::Id);
    }
    if name == "y" {
        return Some(QueryColumn::Label);
    }
    let (prefix, rest) = name.split_at(1.min(name.len()));
    let i = rest.parse().ok()?;
    match prefix {
        "o" => Some(QueryColumn::Observed(i)),
        "h" => Some(QueryColumn::Hidden(i)),
        "x" => Some(QueryColumn::Feature(i)),
        _ => None,
    }
}

/// Reads a query batch. Columns: optional `id`, then `x<i>` (observed
/// feature) and `y` (hidden label) for multiclass queries, or `o<i>` and
/// `h<i>` (observed and hidden coordinate `i`) in general. Empty cells are
/// unassigned. Rows without an id are numbered from 0. A file with no
/// content at all (not even a header) yields `None`.
pub fn read_queries(path: &Path, m: &MarginalVector) -> Result<Option<Vec<QueryRow>>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let columns = headers
        .iter()
        .map(|h| query_column(h).ok_or_else(|| usage(format!("unknown query column \"{h}\""))))
        .collect::<Result<Vec<_>, _>>()?;
    let multiclass = columns.iter().all(|c| {
        matches!(
            c,
            QueryColumn::Id | QueryColumn::Feature(_) | QueryColumn::Label
        )
    });
    let n = coordinate_count(m);
    let features = m.graph().num_nodes();

    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let mut id = r.to_string();
        let mut observed = BTreeMap::new();
        let mut hidden = BTreeMap::new();
        let mut problem = None;
        for (cell, &col) in record.iter().zip(&columns) {
            let cell = cell.trim();
            if col == QueryColumn::Id {
                id = cell.to_string();
                continue;
            }
            if cell.is_empty() {
                continue;
            }
            let Ok(v) = cell.parse::<usize>() else {
                problem.get_or_insert(format!("\"{cell}\" is not a non-negative integer"));
                continue;
            };
            let (target, i) = match col {
                QueryColumn::Observed(i) | QueryColumn::Feature(i) => (&mut observed, i),
                QueryColumn::Hidden(i) => (&mut hidden, i),
                QueryColumn::Label => (&mut hidden, features),
                QueryColumn::Id => unreachable!(),
            };
            target.insert(i, v);
        }
        let query = match problem {
            Some(p) => Err(p),
            None => build_query(n, &observed, &hidden).map_err(|e| e.to_string()),
        };
        rows.push(QueryRow {
            id,
            query,
            multiclass,
        });
    }
    Ok(Some(rows))
}

fn build_query(
    n: usize,
    observed: &BTreeMap<usize, usize>,
    hidden: &BTreeMap<usize, usize>,
) -> Result<ConditionalQuery, CliError> {
    let to_pairs = |m: &BTreeMap<usize, usize>| m.iter().map(|(&i, &v)| (i, v)).collect::<Vec<_>>();
    Ok(ConditionalQuery {
        observed: Assignment::partial(n, &to_pairs(observed))?,
        hidden: Assignment::partial(n, &to_pairs(hidden))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled_pair() -> MarginalVector {
        let domain = DiscreteDomain::new(vec![2, 3]).unwrap();
        let graph = GraphStructure::new(domain, &[(0, 1)]).unwrap();
        let pair: Vec<f64> = (0..12).map(|k| (k + 1) as f64 / 78.0).collect();
        let mut s0 = vec![0.0; 4];
        let mut s1 = vec![0.0; 6];
        for a in 0..2 {
            for b in 0..3 {
                for y in 0..2 {
                    let v = pair[(a * 3 + b) * 2 + y];
                    s0[a * 2 + y] += v;
                    s1[b * 2 + y] += v;
                }
            }
        }
        MarginalVector::new(graph, Some(2), vec![s0, s1], vec![pair]).unwrap()
    }

    #[test]
    fn marginals_round_trip() {
        let m = labeled_pair();
        let v = marginals_to_json(&m);
        assert_eq!(v["pairs"]["0-1"][1][2][1], json!(12.0 / 78.0));
        assert_eq!(marginals_from_json(&v).unwrap(), m);
        let text = to_pretty(&v);
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(marginals_from_json(&back).unwrap(), m);
    }

    #[test]
    fn keys_are_sorted() {
        let text = to_pretty(&marginals_to_json(&labeled_pair()));
        let order: Vec<usize> = [
            "\"cardinalities\"",
            "\"edges\"",
            "\"label_cardinality\"",
            "\"n\"",
            "\"pairs\"",
            "\"singles\"",
        ]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut v = marginals_to_json(&labeled_pair());
        v["singles"]["1"] = json!([[0.1, 0.2]]);
        assert!(matches!(marginals_from_json(&v), Err(CliError::Usage(_))));
        let mut v = marginals_to_json(&labeled_pair());
        v["n"] = json!(3);
        assert!(marginals_from_json(&v).is_err());
    }

    #[test]
    fn query_forms() {
        let m = labeled_pair();
        let q = query_from_json(&json!({"x": [1, 2], "y": 0}), &m).unwrap();
        assert_eq!(q, ConditionalQuery::multiclass(&[1, 2], 0));
        let q = query_from_json(
            &json!({"observed": {"0": 1}, "hidden": {"1": 2, "2": 0}}),
            &m,
        )
        .unwrap();
        assert_eq!(q.observed.get(0), Some(1));
        assert_eq!(q.hidden.get(2), Some(0));
        assert!(query_from_json(&json!({"x": [1], "y": 0}), &m).is_err());
        assert!(query_from_json(&json!({"hidden": {"a": 1}}), &m).is_err());
    }

    #[test]
    fn query_columns() {
        assert_eq!(query_column("x3"), Some(QueryColumn::Feature(3)));
        assert_eq!(query_column("h0"), Some(QueryColumn::Hidden(0)));
        assert_eq!(query_column(" id "), Some(QueryColumn::Id));
        assert_eq!(query_column("z1"), None);
        assert_eq!(query_column("x"), None);
    }
}
