//! Seeded oracle-equivalence suites.
//!
//! Each suite draws random instances, computes a bound through the fast path
//! and through an independent reference (usually the exponential LPs in
//! [`crate::oracle`]), and records the largest deviation. Trials are
//! independent and addressed by `(seed, suite, trial)`, so callers may run
//! them in any order or in parallel and merge the results.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::bounds::{
    conditional_lower_bound_general, i_tilde, max_joint_probability_multiclass,
    min_joint_probability, multiclass_conditional_lower_bound,
    multiclass_conditional_lower_bound_lp, smoothed_marginals, smoothed_multiclass_ratios,
    smoothed_multiclass_scores, softmax, ConditionalQuery,
};
use crate::error::{Error, Result};
use crate::estimation::best_spanning_tree;
use crate::flow::{build_flow_network, chain_max_flow};
use crate::model::{
    validate_marginals, Assignment, AssignmentUniverse, DiscreteDomain, GraphStructure,
    MarginalVector, PairwiseTables, UnionFind,
};
use crate::oracle::{
    instance_rng, oracle_max_joint, oracle_max_universe, oracle_min_conditional, oracle_min_joint,
    random_assignment, random_cyclic, random_domain, random_member, random_tree, random_universe,
    sample_consistent_joint, InstanceRng, JointDistribution,
};
use crate::polytope::{
    max_universe_probability, max_universe_probability_excluding, reconstruct_distribution,
    set_cover_lp_value, ReconstructionMode,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suite {
    MinJoint,
    Multiclass,
    UniverseExactness,
    MaxJoint,
    ChainFlow,
    SetCover,
    Degenerate,
    SpanningTree,
    Reconstruction,
    CyclicSoundness,
    SmoothedScores,
    SampledValidity,
    /// Generated marginals pass validation (with optional corruption).
    Validation,
}

impl Suite {
    pub const ALL: [Suite; 13] = [
        Suite::MinJoint,
        Suite::Multiclass,
        Suite::UniverseExactness,
        Suite::MaxJoint,
        Suite::ChainFlow,
        Suite::SetCover,
        Suite::Degenerate,
        Suite::SpanningTree,
        Suite::Reconstruction,
        Suite::CyclicSoundness,
        Suite::SmoothedScores,
        Suite::SampledValidity,
        Suite::Validation,
    ];

    pub fn id(self) -> u64 {
        self as u64 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::MinJoint => "min-joint-closed-form",
            Suite::Multiclass => "multiclass-closed-form",
            Suite::UniverseExactness => "universe-lp-exactness",
            Suite::MaxJoint => "max-joint-identity",
            Suite::ChainFlow => "chain-max-flow",
            Suite::SetCover => "set-cover-equivalence",
            Suite::Degenerate => "degenerate-cases",
            Suite::SpanningTree => "spanning-tree-selection",
            Suite::Reconstruction => "reconstruction-certificate",
            Suite::CyclicSoundness => "cyclic-relaxation-soundness",
            Suite::SmoothedScores => "smoothed-scores",
            Suite::SampledValidity => "sampled-joint-validity",
            Suite::Validation => "marginal-validation",
        }
    }

    /// Largest deviation accepted from the reference.
    pub fn tolerance(self) -> f64 {
        match self {
            Suite::MinJoint
            | Suite::Multiclass
            | Suite::UniverseExactness
            | Suite::MaxJoint
            | Suite::SetCover
            | Suite::Degenerate => 1e-6,
            Suite::ChainFlow | Suite::Reconstruction | Suite::SmoothedScores => 1e-9,
            Suite::CyclicSoundness | Suite::SampledValidity => 1e-8,
            Suite::SpanningTree | Suite::Validation => 0.0,
        }
    }

    /// Default number of trials.
    pub fn default_trials(self) -> usize {
        match self {
            Suite::MinJoint | Suite::Multiclass | Suite::Degenerate => 200,
            Suite::UniverseExactness
            | Suite::MaxJoint
            | Suite::ChainFlow
            | Suite::SmoothedScores
            | Suite::SampledValidity
            | Suite::Validation => 100,
            Suite::SetCover | Suite::Reconstruction => 50,
            Suite::SpanningTree | Suite::CyclicSoundness => 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    pub cap: usize,
    /// Perturb generated marginals before the validation suite checks them.
    pub inject_corruption: bool,
    /// Replaces every suite's own tolerance when set.
    pub tolerance: Option<f64>,
}

impl VerifyConfig {
    pub fn tolerance_for(&self, suite: Suite) -> f64 {
        self.tolerance.unwrap_or_else(|| suite.tolerance())
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cap: crate::polytope::DEFAULT_ATOM_CAP,
            inject_corruption: false,
            tolerance: None,
        }
    }
}

/// Result of one trial.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialOutcome {
    /// Number of individual comparisons made.
    pub checks: usize,
    pub max_deviation: f64,
    pub failure: Option<String>,
}

impl TrialOutcome {
    fn record(&mut self, deviation: f64) {
        self.checks += 1;
        if deviation > self.max_deviation || deviation.is_nan() {
            self.max_deviation = deviation;
        }
    }

    fn fail(&mut self, detail: String) {
        if self.failure.is_none() {
            self.failure = Some(detail);
        }
    }
}

/// Aggregated results of one suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    pub checks: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// `(trial seed, detail)` for every failing trial.
    pub failures: Vec<(u64, String)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.max_deviation <= self.tolerance
    }

    /// One-line summary.
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut line = format!(
            "[{status}] {:>2} {:<28} trials={:<4} checks={:<6} max_dev={:.3e} tol={:.0e}",
            self.suite.id(),
            self.suite.name(),
            self.trials,
            self.checks,
            self.max_deviation,
            self.tolerance
        );
        if let Some((seed, detail)) = self.failures.first() {
            line.push_str(&format!(
                " first failure: trial seed {seed}: {}",
                detail.trim_end()
            ));
        }
        line
    }
}

/// Seed of trial `k` of `suite` under a base seed.
pub fn trial_seed(seed: u64, suite: Suite, k: usize) -> u64 {
    let mut z = seed
        ^ suite.id().wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (k as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines trial outcomes (in trial order) into a report.
pub fn summarize(
    suite: Suite,
    config: &VerifyConfig,
    seeds: &[u64],
    outcomes: Vec<TrialOutcome>,
) -> SuiteReport {
    let mut report = SuiteReport {
        suite,
        trials: outcomes.len(),
        checks: 0,
        max_deviation: 0.0,
        tolerance: config.tolerance_for(suite),
        failures: Vec::new(),
    };
    for (outcome, &seed) in outcomes.into_iter().zip(seeds) {
        report.checks += outcome.checks;
        if outcome.max_deviation > report.max_deviation || outcome.max_deviation.is_nan() {
            report.max_deviation = outcome.max_deviation;
        }
        if let Some(detail) = outcome.failure {
            report.failures.push((seed, detail));
        }
    }
    report
}

/// Runs `trials` trials of a suite sequentially.
pub fn run_suite(suite: Suite, trials: usize, config: &VerifyConfig) -> SuiteReport {
    let seeds: Vec<u64> = (0..trials)
        .map(|k| trial_seed(config.seed, suite, k))
        .collect();
    let outcomes = seeds.iter().map(|&s| run_trial(suite, s, config)).collect();
    summarize(suite, config, &seeds, outcomes)
}

/// Runs a single trial; deviations above the tolerance are failures.
pub fn run_trial(suite: Suite, seed: u64, config: &VerifyConfig) -> TrialOutcome {
    let mut rng = instance_rng(seed);
    let mut outcome = TrialOutcome::default();
    let result = match suite {
        Suite::MinJoint => min_joint_trial(&mut rng, config, &mut outcome),
        Suite::Multiclass => multiclass_trial(&mut rng, config, &mut outcome),
        Suite::UniverseExactness => universe_trial(&mut rng, config, &mut outcome),
        Suite::MaxJoint => max_joint_trial(&mut rng, config, &mut outcome),
        Suite::ChainFlow => flow_trial(&mut rng, config, &mut outcome),
        Suite::SetCover => set_cover_trial(&mut rng, config, &mut outcome),
        Suite::Degenerate => degenerate_trial(&mut rng, config, &mut outcome),
        Suite::SpanningTree => spanning_tree_trial(&mut rng, config, &mut outcome),
        Suite::Reconstruction => reconstruction_trial(&mut rng, config, &mut outcome),
        Suite::CyclicSoundness => cyclic_trial(&mut rng, config, &mut outcome),
        Suite::SmoothedScores => smoothed_trial(&mut rng, config, &mut outcome),
        Suite::SampledValidity => validity_trial(&mut rng, config, &mut outcome),
        Suite::Validation => validation_trial(&mut rng, config, &mut outcome),
    };
    if let Err(e) = result {
        outcome.fail(format!("unexpected error: {e}"));
    }
    if outcome.max_deviation > config.tolerance_for(suite) || outcome.max_deviation.is_nan() {
        let detail = format!("deviation {:.3e} above tolerance", outcome.max_deviation);
        outcome.fail(detail);
    }
    outcome
}

struct Instance {
    joint: JointDistribution,
    marginals: MarginalVector,
}

fn tree_instance(
    rng: &mut InstanceRng,
    sizes: core::ops::RangeInclusive<usize>,
    max_card: usize,
    label: Option<usize>,
    cap: usize,
) -> Result<Instance> {
    let n = rng.gen_range(sizes);
    let domain = random_domain(rng, n, max_card);
    let graph = random_tree(rng, domain);
    joint_instance(rng, &graph, label, cap)
}

fn joint_instance(
    rng: &mut InstanceRng,
    graph: &GraphStructure,
    label: Option<usize>,
    cap: usize,
) -> Result<Instance> {
    let (joint, marginals) = sample_consistent_joint(graph, label, rng.gen(), cap)?;
    Ok(Instance { joint, marginals })
}

/// A query assignment over the joint's coordinates: half the time the most
/// probable atom, otherwise uniform.
fn pick_assignment(rng: &mut InstanceRng, joint: &JointDistribution) -> Vec<usize> {
    if rng.gen_bool(0.5) {
        let best = joint
            .probabilities()
            .iter()
            .enumerate()
            .fold(
                0,
                |b, (k, &p)| if p > joint.probabilities()[b] { k } else { b },
            );
        AssignmentUniverse::full(joint.domain())
            .iter()
            .nth(best)
            .expect("index in range")
    } else {
        random_assignment(rng, joint.domain())
    }
}

/// A random observed/hidden split with at least one hidden coordinate.
fn random_split(rng: &mut InstanceRng, x: &[usize]) -> (Assignment, Assignment) {
    let n = x.len();
    let forced_hidden = rng.gen_range(0..n);
    let mut observed = Assignment::empty(n);
    let mut hidden = Assignment::empty(n);
    for (i, &v) in x.iter().enumerate() {
        if i != forced_hidden && rng.gen_bool(0.5) {
            observed.set(i, Some(v));
        } else {
            hidden.set(i, Some(v));
        }
    }
    (observed, hidden)
}

/// Deviation between two outcomes that may both be "unconditioned".
fn compare(a: &Result<f64>, b: &Result<f64>) -> core::result::Result<f64, String> {
    match (a, b) {
        (Ok(a), Ok(b)) => Ok((a - b).abs()),
        (Err(Error::Unconditioned), Err(Error::Unconditioned)) => Ok(0.0),
        _ => Err(format!("outcomes differ: {a:?} vs {b:?}")),
    }
}

fn check_pair(outcome: &mut TrialOutcome, label: &str, a: &Result<f64>, b: &Result<f64>) {
    match compare(a, b) {
        Ok(d) => outcome.record(d),
        Err(msg) => outcome.fail(format!("{label}: {msg}")),
    }
}

fn value_of(r: Result<crate::model::BoundResult>) -> Result<f64> {
    r.map(|b| b.value)
}

fn min_joint_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let inst = tree_instance(rng, 2..=4, 3, None, config.cap)?;
    for _ in 0..2 {
        let x = pick_assignment(rng, &inst.joint);
        let fast = value_of(min_joint_probability(
            &Assignment::full(x.clone()),
            &inst.marginals,
        ));
        let oracle = oracle_min_joint(&x, &inst.marginals, config.cap);
        check_pair(out, "min joint", &fast, &oracle);
    }
    Ok(())
}

fn multiclass_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let labels = rng.gen_range(2..=3);
    let inst = tree_instance(rng, 1..=3, 3, Some(labels), config.cap)?;
    let n = inst.marginals.graph().num_nodes();
    for _ in 0..2 {
        let coords = pick_assignment(rng, &inst.joint);
        let (x, y) = (&coords[..n], coords[n]);
        let closed = value_of(multiclass_conditional_lower_bound(x, y, &inst.marginals));
        let lp = value_of(multiclass_conditional_lower_bound_lp(x, y, &inst.marginals));
        let query = ConditionalQuery::multiclass(x, y);
        let oracle =
            oracle_min_conditional(&query.observed, &query.hidden, &inst.marginals, config.cap);
        check_pair(out, "closed form vs oracle", &closed, &oracle);
        check_pair(out, "closed form vs LP route", &closed, &lp);
    }
    Ok(())
}

fn universe_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let inst = tree_instance(rng, 2..=4, 3, None, config.cap)?;
    let domain = inst.marginals.graph().domain();
    let universe = random_universe(rng, domain);
    let x = random_member(rng, &universe);
    let plain = value_of(max_universe_probability(&universe, &inst.marginals));
    let oracle = oracle_max_universe(&universe, &inst.marginals, None, config.cap);
    check_pair(out, "max universe", &plain, &oracle);
    let excluding = value_of(max_universe_probability_excluding(
        &universe,
        &Assignment::full(x.clone()),
        &inst.marginals,
    ));
    let oracle = oracle_max_universe(&universe, &inst.marginals, Some(&x), config.cap);
    check_pair(out, "max universe excluding", &excluding, &oracle);
    Ok(())
}

fn max_joint_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let labels = rng.gen_range(2..=3);
    let inst = tree_instance(rng, 1..=3, 3, Some(labels), config.cap)?;
    let n = inst.marginals.graph().num_nodes();
    for _ in 0..2 {
        let coords = pick_assignment(rng, &inst.joint);
        let fast = value_of(max_joint_probability_multiclass(
            &coords[..n],
            coords[n],
            &inst.marginals,
        ));
        let oracle = oracle_max_joint(&coords, &inst.marginals, config.cap);
        check_pair(out, "max joint", &fast, &oracle);
    }
    Ok(())
}

fn flow_trial(rng: &mut InstanceRng, config: &VerifyConfig, out: &mut TrialOutcome) -> Result<()> {
    let n = rng.gen_range(1..=5);
    let domain = random_domain(rng, n, 3);
    let graph = GraphStructure::chain(domain);
    let inst = joint_instance(rng, &graph, None, config.cap)?;
    let universe = random_universe(rng, graph.domain());
    let net = build_flow_network(&universe, &inst.marginals)?;
    let flow = chain_max_flow(&net);
    let lp = max_universe_probability(&universe, &inst.marginals)?;
    out.record((flow.value - lp.value).abs());

    // The path decomposition is a feasible point of the inequality-form LP.
    let paths = flow.decompose(&net);
    if paths
        .atoms
        .iter()
        .any(|(u, p)| !universe.contains(u) || *p < 0.0)
    {
        out.fail("flow path outside the universe".into());
    }
    let (singles, pairs) = paths.marginals(&graph);
    let mut excess: f64 = 0.0;
    for (e, table) in pairs.iter().enumerate() {
        for (k, v) in table.iter().enumerate() {
            let kj = graph.domain().cardinality(graph.edges()[e].1);
            excess = excess.max(v - inst.marginals.pair(e, k / kj, k % kj));
        }
    }
    for (i, table) in singles.iter().enumerate() {
        for (v, m) in table.iter().enumerate() {
            excess = excess.max(m - inst.marginals.single(i, v));
        }
    }
    out.record(excess.max(0.0));
    out.record((paths.total() - flow.value).abs());
    Ok(())
}

fn set_cover_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let inst = tree_instance(rng, 1..=4, 3, None, config.cap)?;
    let universe = random_universe(rng, inst.marginals.graph().domain());
    let cover = set_cover_lp_value(&universe, &inst.marginals, 256);
    let lp = value_of(max_universe_probability(&universe, &inst.marginals));
    check_pair(out, "set cover", &cover, &lp);
    Ok(())
}

fn degenerate_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let inst = tree_instance(rng, 2..=4, 3, None, config.cap)?;
    let mu = &inst.marginals;
    let x = random_assignment(rng, mu.graph().domain());
    if i_tilde(&x, mu) > 0.0 {
        return Ok(());
    }
    let (observed, hidden) = random_split(rng, &x);
    let bound = value_of(conditional_lower_bound_general(&observed, &hidden, mu));
    let oracle = oracle_min_conditional(&observed, &hidden, mu, config.cap);
    let universe = AssignmentUniverse::pinned(mu.graph().domain(), &observed)?;
    let reachable = max_universe_probability(&universe, mu)?.value;
    let exclusion = max_universe_probability_excluding(&universe, &Assignment::full(x), mu)?.value;
    let expected = if reachable <= crate::bounds::ZERO_TOLERANCE {
        Err(Error::Unconditioned)
    } else if exclusion > crate::bounds::ZERO_TOLERANCE {
        Ok(0.0)
    } else {
        Ok(1.0)
    };
    match (&bound, &expected) {
        (Ok(b), Ok(e)) if b == e => out.record(0.0),
        (Err(Error::Unconditioned), Err(Error::Unconditioned)) => out.record(0.0),
        _ => out.fail(format!(
            "bound {bound:?}, degenerate rule gives {expected:?}"
        )),
    }
    check_pair(out, "oracle", &expected, &oracle);
    Ok(())
}

/// Every spanning tree of a connected graph, as edge lists.
pub fn enumerate_spanning_trees(graph: &GraphStructure) -> Vec<Vec<(usize, usize)>> {
    let edges = graph.edges();
    let n = graph.num_nodes();
    let mut trees = Vec::new();
    let mut chosen = Vec::with_capacity(n - 1);
    fn extend(
        edges: &[(usize, usize)],
        start: usize,
        need: usize,
        n: usize,
        chosen: &mut Vec<(usize, usize)>,
        trees: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if need == 0 {
            let mut uf = UnionFind::new(n);
            if chosen.iter().all(|&(i, j)| uf.union(i, j)) {
                trees.push(chosen.clone());
            }
            return;
        }
        for k in start..edges.len() {
            if edges.len() - k < need {
                break;
            }
            chosen.push(edges[k]);
            extend(edges, k + 1, need - 1, n, chosen, trees);
            chosen.pop();
        }
    }
    extend(edges, 0, n - 1, n, &mut chosen, &mut trees);
    trees
}

fn cyclic_instance(rng: &mut InstanceRng, max_card: usize, cap: usize) -> Result<Instance> {
    let n = rng.gen_range(4..=5);
    let domain = random_domain(rng, n, max_card);
    let graph = random_cyclic(rng, domain);
    joint_instance(rng, &graph, None, cap)
}

fn spanning_tree_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let inst = cyclic_instance(rng, 3, config.cap)?;
    let mu = &inst.marginals;
    let x = pick_assignment(rng, &inst.joint);
    let choice = best_spanning_tree(mu, &x)?;
    let best = enumerate_spanning_trees(mu.graph())
        .iter()
        .map(|edges| mu.restrict_to_edges(edges).map(|t| i_tilde(&x, &t)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    out.record((choice.raw - best).abs());
    Ok(())
}

fn reconstruction_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let inst = tree_instance(rng, 2..=4, 3, None, config.cap)?;
    let mu = &inst.marginals;
    let graph = mu.graph();
    let universe = random_universe(rng, graph.domain());
    let x = random_member(rng, &universe);
    let plain = max_universe_probability(&universe, mu)?;
    let excluding =
        max_universe_probability_excluding(&universe, &Assignment::full(x.clone()), mu)?;
    for (result, mode) in [
        (plain, ReconstructionMode::Plain),
        (excluding, ReconstructionMode::Excluding(x.clone())),
    ] {
        let certificate = result
            .certificate
            .and_then(|c| c.pseudo_marginals)
            .ok_or(Error::NumericalFailure)?;
        if certificate.partition_function() <= 1e-12 {
            continue;
        }
        let dist = reconstruct_distribution(&certificate, &mode, config.cap)?;
        if dist
            .atoms
            .iter()
            .any(|(u, p)| *p < 0.0 || !universe.contains(u))
        {
            out.fail("negative or out-of-universe atom".into());
        }
        if let ReconstructionMode::Excluding(ref x) = mode {
            out.record(dist.probability(x));
        }
        let (singles, pairs) = dist.marginals(graph);
        let mut residual: f64 = 0.0;
        let mut excess: f64 = 0.0;
        for (i, table) in singles.iter().enumerate() {
            for (v, m) in table.iter().enumerate() {
                residual = residual.max((m - certificate.single(i, v)).abs());
                excess = excess.max(m - mu.single(i, v));
            }
        }
        for (e, table) in pairs.iter().enumerate() {
            let kj = graph.domain().cardinality(graph.edges()[e].1);
            for (k, m) in table.iter().enumerate() {
                residual = residual.max((m - certificate.pair(e, k / kj, k % kj)).abs());
                excess = excess.max(m - mu.pair(e, k / kj, k % kj));
            }
        }
        out.record(residual);
        out.record(excess.max(0.0));
        out.record((dist.total() - result.value).abs());
    }
    Ok(())
}

fn cyclic_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let inst = cyclic_instance(rng, 3, config.cap)?;
    let mu = &inst.marginals;
    for _ in 0..3 {
        let x = pick_assignment(rng, &inst.joint);
        let (observed, hidden) = random_split(rng, &x);
        let oracle = oracle_min_conditional(&observed, &hidden, mu, config.cap);
        let bound = conditional_lower_bound_general(&observed, &hidden, mu);
        match (&bound, &oracle) {
            (Ok(b), Ok(o)) => out.record((b.value - o).max(0.0)),
            (_, Err(Error::Unconditioned)) => out.record(0.0),
            _ => out.fail(format!("bound {bound:?}, oracle {oracle:?}")),
        }
    }
    Ok(())
}

fn smoothed_trial(
    rng: &mut InstanceRng,
    _config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let n = rng.gen_range(1..=4);
    let labels = rng.gen_range(2..=3);
    let graph = random_tree(rng, DiscreteDomain::new(vec![2; n])?);
    let rows: Vec<(Vec<f64>, usize)> = (0..rng.gen_range(1..=12))
        .map(|_| {
            let z = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        rng.gen_range(0..2) as f64
                    } else {
                        rng.gen()
                    }
                })
                .collect();
            (z, rng.gen_range(0..labels))
        })
        .collect();
    let mu = smoothed_marginals(&rows, &graph, labels)?;

    let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let z: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let discrete: Vec<f64> = (0..labels)
        .map(|y| match multiclass_conditional_lower_bound(&x, y, &mu) {
            Ok(r) => Ok(r.value),
            Err(Error::Unconditioned) => Ok(0.0),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let smooth = smoothed_multiclass_ratios(&z, &mu)?;
    for (a, b) in smooth.iter().zip(&discrete) {
        out.record((a - b).abs());
    }
    let scores = smoothed_multiclass_scores(&z, &mu)?;
    for (a, b) in scores.iter().zip(softmax(&discrete)) {
        out.record((a - b).abs());
    }

    let soft: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let total: f64 = smoothed_multiclass_scores(&soft, &mu)?.iter().sum();
    let sum_error = (total - 1.0).abs();
    if sum_error > 1e-12 {
        out.fail(format!("scores sum to {total}"));
    }
    out.record(0.0);
    Ok(())
}

fn validity_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let inst = match rng.gen_range(0..3) {
        0 => {
            let labels = rng.gen_range(2..=3);
            tree_instance(rng, 1..=3, 3, Some(labels), config.cap)?
        }
        1 => cyclic_instance(rng, 2, config.cap)?,
        _ => tree_instance(rng, 2..=4, 3, None, config.cap)?,
    };
    let coords = inst.joint.domain().clone();
    let m = coords.num_variables();
    // One observed/hidden split per joint, checked at every assignment.
    let forced_hidden = rng.gen_range(0..m);
    let observed_set: Vec<bool> = (0..m)
        .map(|i| i != forced_hidden && rng.gen_bool(0.5))
        .collect();
    for x in AssignmentUniverse::full(&coords).iter() {
        let mut observed = Assignment::empty(m);
        let mut hidden = Assignment::empty(m);
        for (i, &v) in x.iter().enumerate() {
            if observed_set[i] {
                observed.set(i, Some(v));
            } else {
                hidden.set(i, Some(v));
            }
        }
        let truth = match inst.joint.conditional(&observed, &hidden)? {
            Some(t) => t,
            None => continue,
        };
        match conditional_lower_bound_general(&observed, &hidden, &inst.marginals) {
            Ok(b) => out.record((b.value - truth).max(0.0)),
            Err(e) => out.fail(format!("well-posed query failed: {e}")),
        }
    }
    Ok(())
}

fn validation_trial(
    rng: &mut InstanceRng,
    config: &VerifyConfig,
    out: &mut TrialOutcome,
) -> Result<()> {
    let labels = if rng.gen_bool(0.5) {
        Some(rng.gen_range(2..=3))
    } else {
        None
    };
    let inst = tree_instance(rng, 1..=4, 3, labels, config.cap)?;
    let mut mu = inst.marginals;
    if config.inject_corruption {
        mu = corrupt(rng, &mu)?;
    }
    let report = validate_marginals(&mu);
    out.record(0.0);
    if !report.is_ok() {
        out.fail(format!(
            "generated marginals rejected: {}",
            report.summary()
        ));
    }
    Ok(())
}

/// Adds 0.05 to one random entry of one random table.
pub fn corrupt(rng: &mut InstanceRng, marginals: &MarginalVector) -> Result<MarginalVector> {
    let graph = marginals.graph();
    let mut singles: Vec<Vec<f64>> = (0..graph.num_nodes())
        .map(|i| marginals.single_table(i).to_vec())
        .collect();
    let mut pairs: Vec<Vec<f64>> = (0..graph.edges().len())
        .map(|e| marginals.pair_table(e).to_vec())
        .collect();
    let table = if pairs.is_empty() || rng.gen_bool(0.5) {
        &mut singles[rng.gen_range(0..graph.num_nodes())]
    } else {
        let e = rng.gen_range(0..pairs.len());
        &mut pairs[e]
    };
    let k = rng.gen_range(0..table.len());
    table[k] += 0.05;
    MarginalVector::new(graph.clone(), marginals.label_cardinality(), singles, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..100)
            .map(|k| trial_seed(7, Suite::MinJoint, k))
            .collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_ne!(
            trial_seed(7, Suite::MinJoint, 0),
            trial_seed(7, Suite::Multiclass, 0)
        );
    }

    #[test]
    fn spanning_trees_of_k4() {
        let domain = DiscreteDomain::new(vec![2; 4]).unwrap();
        let edges: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .collect();
        let graph = GraphStructure::new(domain, &edges).unwrap();
        assert_eq!(enumerate_spanning_trees(&graph).len(), 16);
    }

    #[test]
    fn corruption_is_caught() {
        let config = VerifyConfig {
            inject_corruption: true,
            ..VerifyConfig::default()
        };
        let report = run_suite(Suite::Validation, 5, &config);
        assert!(!report.passed());
        assert!(run_suite(Suite::Validation, 5, &VerifyConfig::default()).passed());
    }
}
