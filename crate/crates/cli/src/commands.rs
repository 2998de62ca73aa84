use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use robcond_core::bounds::{
    conditional_lower_bound_general, min_joint_probability, multiclass_conditional_lower_bound,
    rank_outcomes, ConditionalQuery,
};
use robcond_core::estimation::estimate_marginals;
use robcond_core::model::{
    validate_marginals, Assignment, AssignmentUniverse, BoundResult, DiscreteDomain,
    GraphStructure, MarginalVector,
};
use robcond_core::polytope::build_polytope_lp;
use robcond_core::verify::{run_trial, summarize, trial_seed, Suite, SuiteReport, VerifyConfig};

use crate::error::CliError;
use crate::formats::{
    bound_result_to_json, marginals_from_json, marginals_to_json, query_from_json, read_json,
    read_queries, read_samples, structure_from_json, to_pretty,
};
use crate::Method;

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

/// Loads marginals and rejects those failing validation (exit 3).
pub fn load_valid_marginals(path: &Path) -> Result<MarginalVector, CliError> {
    let marginals = marginals_from_json(&read_json(path)?)?;
    let report = validate_marginals(&marginals);
    if !report.is_ok() {
        eprint!("{}", report.summary());
        return Err(CliError::Validation(format!(
            "{}: {} validation violation(s)",
            path.display(),
            report.violations.len()
        )));
    }
    Ok(marginals)
}

#[derive(Clone, Debug)]
pub struct EstimateArgs {
    pub input: PathBuf,
    pub structure: PathBuf,
    pub smoothing: f64,
    pub label_axis: bool,
    pub out: Option<PathBuf>,
}

pub fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let samples = read_samples(&args.input)?;
    let layout = structure_from_json(&read_json(&args.structure)?)?;
    if args.label_axis && !samples.has_label_column {
        return Err(CliError::Usage(format!(
            "{}: --label-axis needs a \"y\" column",
            args.input.display()
        )));
    }
    let n = samples.variables.len();
    let table = &samples.table;
    let cardinalities = match &layout.cardinalities {
        Some(c) => c.clone(),
        None => (0..n)
            .map(|i| {
                table
                    .rows
                    .iter()
                    .map(|r| r.values[i] + 1)
                    .max()
                    .unwrap_or(1)
            })
            .collect(),
    };
    if cardinalities.len() != n {
        return Err(CliError::Usage(format!(
            "structure lists {} cardinalities but the input has {n} variables",
            cardinalities.len()
        )));
    }
    let label = if args.label_axis {
        let inferred = table
            .rows
            .iter()
            .filter_map(|r| r.label)
            .max()
            .map(|y| y + 1);
        Some(
            layout
                .label_cardinality
                .or(inferred)
                .ok_or_else(|| CliError::Usage("no labeled rows".into()))?,
        )
    } else {
        None
    };
    let graph = GraphStructure::new(DiscreteDomain::new(cardinalities)?, &layout.edges)?;
    let marginals = estimate_marginals(table, &graph, args.smoothing, label)?;

    eprintln!(
        "read {} rows ({} labeled), {} variables, {} edges",
        table.len(),
        table.labeled_len(),
        n,
        graph.edges().len()
    );
    let report = validate_marginals(&marginals);
    if !report.is_ok() {
        eprint!("{}", report.summary());
        return Err(CliError::Validation(format!(
            "estimated marginals fail validation ({} violation(s))",
            report.violations.len()
        )));
    }
    eprintln!("validation: ok");
    write_output(
        args.out.as_deref(),
        &to_pretty(&marginals_to_json(&marginals)),
    )
}

/// The observed assignment covers every feature and the hidden one is the
/// label alone.
fn is_multiclass(q: &ConditionalQuery, m: &MarginalVector) -> bool {
    let n = m.graph().num_nodes();
    m.is_labeled()
        && (0..n).all(|i| q.observed.get(i).is_some() && q.hidden.get(i).is_none())
        && q.observed.get(n).is_none()
        && q.hidden.get(n).is_some()
}

/// Closed-form route, when one applies: the multiclass formula on labeled
/// trees, and the minimum joint on acyclic graphs when nothing is observed.
fn closed_form(
    q: &ConditionalQuery,
    m: &MarginalVector,
) -> Option<robcond_core::Result<BoundResult>> {
    let graph = m.graph();
    if is_multiclass(q, m) && graph.is_acyclic() && graph.is_connected() {
        let n = graph.num_nodes();
        let x: Vec<usize> = (0..n)
            .map(|i| q.observed.get(i).expect("observed"))
            .collect();
        let y = q.hidden.get(n).expect("hidden label");
        return Some(multiclass_conditional_lower_bound(&x, y, m));
    }
    if graph.is_acyclic() && q.observed.assigned().next().is_none() && q.hidden.is_full() {
        return Some(min_joint_probability(&q.hidden, m));
    }
    None
}

pub fn bound_query(
    q: &ConditionalQuery,
    m: &MarginalVector,
    method: Method,
) -> Result<BoundResult, CliError> {
    let result = match method {
        Method::ClosedForm => closed_form(q, m).ok_or_else(|| {
            CliError::Usage(
                "closed-form needs a multiclass query on a labeled tree, or a fully hidden query on an acyclic structure"
                    .into(),
            )
        })?,
        Method::Lp => conditional_lower_bound_general(&q.observed, &q.hidden, m),
        Method::Auto => closed_form(q, m)
            .unwrap_or_else(|| conditional_lower_bound_general(&q.observed, &q.hidden, m)),
    };
    Ok(result?)
}

#[derive(Clone, Debug)]
pub struct BoundArgs {
    pub marginals: PathBuf,
    pub query: PathBuf,
    pub method: Method,
    pub out: Option<PathBuf>,
    pub dump_lp: Option<PathBuf>,
}

pub fn bound(args: &BoundArgs) -> Result<(), CliError> {
    let marginals = load_valid_marginals(&args.marginals)?;
    let query = query_from_json(&read_json(&args.query)?, &marginals)?;
    if let Some(path) = &args.dump_lp {
        dump_exclusion_lp(&query, &marginals, path)?;
    }
    let result = bound_query(&query, &marginals, args.method)?;
    write_output(
        args.out.as_deref(),
        &to_pretty(&bound_result_to_json(&result)),
    )
}

/// Writes the exclusion LP of the queried label slice in MPS form.
fn dump_exclusion_lp(
    q: &ConditionalQuery,
    m: &MarginalVector,
    path: &Path,
) -> Result<(), CliError> {
    let graph = m.graph();
    let n = graph.num_nodes();
    let merged = q.observed.merge(&q.hidden)?;
    let x = merged
        .to_full()
        .ok_or_else(|| CliError::Usage("observed and hidden must cover every variable".into()))?;
    let mut pinned = Assignment::empty(n);
    for (i, v) in q.observed.assigned().filter(|&(i, _)| i < n) {
        pinned.set(i, Some(v));
    }
    let universe = AssignmentUniverse::pinned(graph.domain(), &pinned)?;
    let lp = match m.label_cardinality() {
        Some(_) => build_polytope_lp(&universe, &m.label_slice(x[n])?, Some(&x[..n]))?,
        None => build_polytope_lp(&universe, m, Some(&x[..n]))?,
    };
    fs::write(path, lp.lp.to_mps("EXCLUSION")).map_err(|e| CliError::io(path, e))
}

#[derive(Clone, Debug)]
pub struct RankArgs {
    pub marginals: PathBuf,
    pub queries: PathBuf,
    pub method: Method,
    pub out: Option<PathBuf>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Bounds a batch in parallel and writes it sorted by bound, highest first.
/// Rows that fail keep their message in the `error` column and sort last.
pub fn rank(args: &RankArgs) -> Result<(), CliError> {
    let marginals = load_valid_marginals(&args.marginals)?;
    let Some(rows) = read_queries(&args.queries, &marginals)? else {
        return write_output(args.out.as_deref(), "");
    };
    let outcomes: Vec<Result<BoundResult, CliError>> = rows
        .par_iter()
        .map(|row| match &row.query {
            Ok(q) => bound_query(q, &marginals, args.method),
            Err(e) => Err(CliError::Usage(e.clone())),
        })
        .collect();
    let total = outcomes.len();
    let failed = outcomes.iter().filter(|o| o.is_err()).count();

    let mut text = String::from("id,bound,exactness,error\n");
    let mut first_error: Option<(usize, CliError)> = None;
    for entry in rank_outcomes(outcomes) {
        let id = csv_field(&rows[entry.index].id);
        match entry.outcome {
            Ok(r) => text.push_str(&format!("{id},{},{},\n", r.value, r.exactness.as_str())),
            Err(e) => {
                text.push_str(&format!("{id},,,{}\n", csv_field(&e.to_string())));
                if first_error.as_ref().map_or(true, |(k, _)| entry.index < *k) {
                    first_error = Some((entry.index, e));
                }
            }
        }
    }
    write_output(args.out.as_deref(), &text)?;

    if failed > 0 {
        eprintln!("{failed} of {total} queries failed");
    }
    match first_error {
        Some((_, e)) if failed == total => Err(e),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug)]
pub struct VerifyArgs {
    pub seed: u64,
    pub trials: Option<usize>,
    pub max_atoms: usize,
    pub suites: Vec<Suite>,
    pub inject_corruption: bool,
    pub tolerance: Option<f64>,
}

/// Runs the suites with trials spread across the thread pool. The report is
/// independent of scheduling.
pub fn run_verify(args: &VerifyArgs) -> Vec<SuiteReport> {
    let config = VerifyConfig {
        seed: args.seed,
        cap: args.max_atoms,
        inject_corruption: args.inject_corruption,
        tolerance: args.tolerance,
    };
    let suites: Vec<Suite> = if args.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        args.suites.clone()
    };
    suites
        .into_iter()
        .map(|suite| {
            let trials = args.trials.unwrap_or_else(|| suite.default_trials());
            let seeds: Vec<u64> = (0..trials)
                .map(|k| trial_seed(args.seed, suite, k))
                .collect();
            let outcomes = seeds
                .par_iter()
                .map(|&s| run_trial(suite, s, &config))
                .collect();
            summarize(suite, &config, &seeds, outcomes)
        })
        .collect()
}

/// Prints one line per suite; returns whether every suite passed.
pub fn verify(args: &VerifyArgs) -> bool {
    let reports = run_verify(args);
    let mut all_passed = true;
    for report in &reports {
        println!("{}", report.line());
        if !report.passed() {
            all_passed = false;
            let seeds: Vec<String> = report
                .failures
                .iter()
                .take(5)
                .map(|(s, _)| s.to_string())
                .collect();
            println!(
                "       reproduce with --seed {} --suite {}; failing trial seeds: {}",
                args.seed,
                report.suite.name(),
                seeds.join(", ")
            );
        }
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    println!(
        "{passed}/{} suites passed (seed {})",
        reports.len(),
        args.seed
    );
    all_passed
}
