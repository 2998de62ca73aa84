//! Dense two-phase primal simplex.
//!
//! The solver works on a full tableau. Variables with finite lower bounds are
//! shifted to start at zero, finite upper bounds become explicit `<=` rows,
//! and free variables are split into a difference of two nonnegative parts.
//! Rows are sign-normalized to a nonnegative right-hand side; `<=` rows start
//! with a slack in the basis, `>=` and `=` rows with an artificial.
//!
//! Pricing is Dantzig's rule (most negative reduced cost, lowest index on
//! ties). After [`DEGENERACY_THRESHOLD`] consecutive degenerate pivots the
//! phase switches to Bland's rule for the rest of that phase, which
//! guarantees termination without any perturbation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

/// Feasibility and optimality tolerance.
pub const TOLERANCE: f64 = 1e-9;
const PIVOT_TOLERANCE: f64 = 1e-9;
const PHASE_ONE_TOLERANCE: f64 = 1e-8;
pub const DEGENERACY_THRESHOLD: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` terms.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// Adds a variable with objective coefficient `cost` and bounds
    /// `[lower, upper]` (either may be infinite). Returns its index.
    pub fn add_variable(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        terms: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            terms,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Largest constraint or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn is_well_formed(&self) -> bool {
        let n = self.objective.len();
        self.objective.iter().all(|c| c.is_finite())
            && self.lower.iter().zip(&self.upper).all(|(l, u)| {
                !l.is_nan() && !u.is_nan() && *l != f64::INFINITY && *u != f64::NEG_INFINITY
            })
            && self
                .constraints
                .iter()
                .all(|c| c.rhs.is_finite() && c.terms.iter().all(|&(j, a)| j < n && a.is_finite()))
    }

    pub fn solve(&self) -> LpSolution {
        solve_lp(self)
    }

    /// Fixed-column MPS text. Rows are named `R<k>`, columns `C<j>`; a
    /// maximization is written with `OBJSENSE MAX`.
    pub fn to_mps(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NAME          {name}");
        if self.sense == Sense::Maximize {
            let _ = writeln!(out, "OBJSENSE\n    MAX");
        }
        let _ = writeln!(out, "ROWS\n N  OBJ");
        for (k, c) in self.constraints.iter().enumerate() {
            let tag = match c.relation {
                Relation::Le => 'L',
                Relation::Ge => 'G',
                Relation::Eq => 'E',
            };
            let _ = writeln!(out, " {tag}  R{k}");
        }
        let mut columns: Vec<Vec<(String, f64)>> = vec![Vec::new(); self.num_variables()];
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                columns[j].push(("OBJ".into(), c));
            }
        }
        for (k, c) in self.constraints.iter().enumerate() {
            for &(j, a) in &c.terms {
                if a != 0.0 {
                    columns[j].push((format!("R{k}"), a));
                }
            }
        }
        let _ = writeln!(out, "COLUMNS");
        for (j, entries) in columns.iter().enumerate() {
            for (row, a) in entries {
                let _ = writeln!(out, "    {:<8}  {:<8}  {:>12e}", format!("C{j}"), row, a);
            }
        }
        let _ = writeln!(out, "RHS");
        for (k, c) in self.constraints.iter().enumerate() {
            if c.rhs != 0.0 {
                let _ = writeln!(
                    out,
                    "    {:<8}  {:<8}  {:>12e}",
                    "RHS",
                    format!("R{k}"),
                    c.rhs
                );
            }
        }
        let _ = writeln!(out, "BOUNDS");
        for j in 0..self.num_variables() {
            let (l, u) = (self.lower[j], self.upper[j]);
            let col = format!("C{j}");
            match (l.is_finite(), u.is_finite()) {
                (true, true) if l == u => {
                    let _ = writeln!(out, " FX BND       {col:<8}  {l:>12e}");
                }
                (false, false) => {
                    let _ = writeln!(out, " FR BND       {col:<8}");
                }
                _ => {
                    if !l.is_finite() {
                        let _ = writeln!(out, " MI BND       {col:<8}");
                    } else if l != 0.0 {
                        let _ = writeln!(out, " LO BND       {col:<8}  {l:>12e}");
                    }
                    if u.is_finite() {
                        let _ = writeln!(out, " UP BND       {col:<8}  {u:>12e}");
                    }
                }
            }
        }
        let _ = writeln!(out, "ENDATA");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The iteration limit was hit or pivots became unstable; `x` holds the
    /// last basic solution.
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One multiplier per constraint, in the sign convention of the original
    /// sense: for a maximization, `<=` rows get nonnegative duals.
    pub duals: Vec<f64>,
    pub objective: f64,
    /// Objective of the dual solution, including bound rows.
    pub dual_objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn failed(status: LpStatus, num_vars: usize, num_rows: usize) -> Self {
        Self {
            status,
            x: vec![0.0; num_vars],
            duals: vec![0.0; num_rows],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// How an original variable is recovered from standard-form columns.
#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `x = offset + col`
    Shifted { col: usize, offset: f64 },
    /// `x = offset - col`
    Mirrored { col: usize, offset: f64 },
    /// `x = plus - minus`
    Split { plus: usize, minus: usize },
}

struct StandardForm {
    /// Rows of `A` over structural columns (dense).
    rows: Vec<Vec<f64>>,
    relation: Vec<Relation>,
    rhs: Vec<f64>,
    /// Minimization costs per structural column.
    cost: Vec<f64>,
    cost_offset: f64,
    maps: Vec<VarMap>,
    num_user_rows: usize,
}

fn to_standard_form(lp: &LinearProgram) -> StandardForm {
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut maps = Vec::with_capacity(lp.num_variables());
    let mut cost = Vec::new();
    let mut cost_offset = 0.0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..lp.num_variables() {
        let c = sign * lp.objective[j];
        let (l, u) = (lp.lower[j], lp.upper[j]);
        let col = cost.len();
        if l.is_finite() {
            maps.push(VarMap::Shifted { col, offset: l });
            cost.push(c);
            cost_offset += c * l;
            if u.is_finite() {
                bound_rows.push((col, u - l));
            }
        } else if u.is_finite() {
            maps.push(VarMap::Mirrored { col, offset: u });
            cost.push(-c);
            cost_offset += c * u;
        } else {
            maps.push(VarMap::Split {
                plus: col,
                minus: col + 1,
            });
            cost.push(c);
            cost.push(-c);
        }
    }
    let ncols = cost.len();

    let mut rows = Vec::new();
    let mut relation = Vec::new();
    let mut rhs = Vec::new();
    for con in &lp.constraints {
        let mut row = vec![0.0; ncols];
        let mut b = con.rhs;
        for &(j, a) in &con.terms {
            match maps[j] {
                VarMap::Shifted { col, offset } => {
                    row[col] += a;
                    b -= a * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    row[col] -= a;
                    b -= a * offset;
                }
                VarMap::Split { plus, minus } => {
                    row[plus] += a;
                    row[minus] -= a;
                }
            }
        }
        rows.push(row);
        relation.push(con.relation);
        rhs.push(b);
    }
    let num_user_rows = rows.len();
    for (col, ub) in bound_rows {
        let mut row = vec![0.0; ncols];
        row[col] = 1.0;
        rows.push(row);
        relation.push(Relation::Le);
        rhs.push(ub);
    }
    StandardForm {
        rows,
        relation,
        rhs,
        cost,
        cost_offset,
        maps,
        num_user_rows,
    }
}

struct Tableau {
    /// `m` rows of `ncols + 1` entries; the last is the right-hand side.
    a: Vec<Vec<f64>>,
    /// Reduced costs, last entry is minus the objective value.
    d: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    /// First artificial column; artificials occupy `art_start..ncols`.
    art_start: usize,
    iterations: usize,
    max_iterations: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.a[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.ncols + 1;
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        self.a[r][c] = 1.0;
        let pivot_row = self.a[r].clone();
        for (k, row) in self.a.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(&pivot_row).take(width) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.d[c];
        if f != 0.0 {
            for (v, &pv) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.d[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Installs reduced costs for `cost` (indexed by column) given the current basis.
    fn price(&mut self, cost: &[f64]) {
        let mut d: Vec<f64> = cost.to_vec();
        d.push(0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (v, &a) in d.iter_mut().zip(&self.a[r]) {
                    *v -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        self.d = d;
    }

    fn run(&mut self, allow_artificial: bool) -> PhaseOutcome {
        let entering_limit = if allow_artificial {
            self.ncols
        } else {
            self.art_start
        };
        let mut degenerate_run = 0;
        let mut bland = false;
        loop {
            if self.iterations >= self.max_iterations {
                return PhaseOutcome::Stalled;
            }
            let entering = if bland {
                (0..entering_limit).find(|&j| self.d[j] < -TOLERANCE)
            } else {
                let mut best = None;
                let mut best_val = -TOLERANCE;
                for j in 0..entering_limit {
                    if self.d[j] < best_val {
                        best_val = self.d[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(c) = entering else {
                return PhaseOutcome::Optimal;
            };

            // Ratio test.
            let mut min_ratio = f64::INFINITY;
            for r in 0..self.a.len() {
                let a = self.a[r][c];
                if a > PIVOT_TOLERANCE {
                    min_ratio = min_ratio.min(self.rhs(r).max(0.0) / a);
                }
            }
            if min_ratio == f64::INFINITY {
                return PhaseOutcome::Unbounded;
            }
            let mut leaving: Option<usize> = None;
            for r in 0..self.a.len() {
                let a = self.a[r][c];
                if a <= PIVOT_TOLERANCE {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                if ratio > min_ratio + TOLERANCE {
                    continue;
                }
                leaving = match leaving {
                    None => Some(r),
                    Some(cur) => {
                        let better = if bland {
                            self.basis[r] < self.basis[cur]
                        } else {
                            let (ac, ar) = (self.a[cur][c], a);
                            ar > ac || (ar == ac && self.basis[r] < self.basis[cur])
                        };
                        if better {
                            Some(r)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
            let r = leaving.expect("a row passed the ratio test");
            if min_ratio <= TOLERANCE {
                degenerate_run += 1;
                if degenerate_run >= DEGENERACY_THRESHOLD {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
    }
}

/// Solves `lp` with the two-phase simplex method.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    let num_vars = lp.num_variables();
    let num_cons = lp.constraints.len();
    if !lp.is_well_formed() {
        return LpSolution::failed(LpStatus::NumericalFailure, num_vars, num_cons);
    }
    let sf = to_standard_form(lp);
    let m = sf.rows.len();
    let nstruct = sf.cost.len();

    // Column layout: structural | slack/surplus | artificial.
    let mut flipped = vec![false; m];
    let mut relation = sf.relation.clone();
    let mut rhs = sf.rhs.clone();
    let mut rows = sf.rows;
    for r in 0..m {
        if rhs[r] < 0.0 {
            flipped[r] = true;
            rhs[r] = -rhs[r];
            for v in rows[r].iter_mut() {
                *v = -*v;
            }
            relation[r] = match relation[r] {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }
    let num_slack = relation.iter().filter(|&&r| r != Relation::Eq).count();
    let num_art = relation.iter().filter(|&&r| r != Relation::Le).count();
    let art_start = nstruct + num_slack;
    let ncols = art_start + num_art;

    let mut a = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0; m];
    // Column holding the initial identity for each row (for dual recovery).
    let mut identity_col = vec![0; m];
    let mut next_slack = nstruct;
    let mut next_art = art_start;
    for r in 0..m {
        a[r][..nstruct].copy_from_slice(&rows[r]);
        a[r][ncols] = rhs[r];
        match relation[r] {
            Relation::Le => {
                a[r][next_slack] = 1.0;
                basis[r] = next_slack;
                identity_col[r] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                a[r][next_slack] = -1.0;
                next_slack += 1;
                a[r][next_art] = 1.0;
                basis[r] = next_art;
                identity_col[r] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                a[r][next_art] = 1.0;
                basis[r] = next_art;
                identity_col[r] = next_art;
                next_art += 1;
            }
        }
    }

    let mut tab = Tableau {
        a,
        d: Vec::new(),
        basis,
        ncols,
        art_start,
        iterations: 0,
        max_iterations: 50_000 + 50 * (m + ncols),
    };

    // Phase 1: minimize the sum of artificials.
    if num_art > 0 {
        let mut cost1 = vec![0.0; ncols];
        for c in cost1.iter_mut().skip(art_start) {
            *c = 1.0;
        }
        tab.price(&cost1);
        match tab.run(true) {
            PhaseOutcome::Optimal => {}
            // Phase 1 is bounded below by zero.
            PhaseOutcome::Unbounded | PhaseOutcome::Stalled => {
                return LpSolution::failed(LpStatus::NumericalFailure, num_vars, num_cons);
            }
        }
        let infeasibility = -tab.d[ncols];
        if infeasibility > PHASE_ONE_TOLERANCE {
            return LpSolution::failed(LpStatus::Infeasible, num_vars, num_cons);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] < art_start {
                continue;
            }
            let mut best: Option<usize> = None;
            let mut best_abs = PIVOT_TOLERANCE;
            for j in 0..art_start {
                let v = tab.a[r][j].abs();
                if v > best_abs {
                    best_abs = v;
                    best = Some(j);
                }
            }
            match best {
                Some(j) => tab.pivot(r, j),
                None => {
                    // Redundant row: keep the artificial pinned at zero.
                    for j in 0..art_start {
                        tab.a[r][j] = 0.0;
                    }
                    tab.a[r][ncols] = 0.0;
                }
            }
        }
    }

    // Phase 2.
    let mut cost2 = vec![0.0; ncols];
    cost2[..nstruct].copy_from_slice(&sf.cost);
    tab.price(&cost2);
    let outcome = tab.run(false);

    let mut xs = vec![0.0; ncols];
    for (r, &b) in tab.basis.iter().enumerate() {
        xs[b] = tab.rhs(r).max(0.0);
    }
    let x: Vec<f64> = sf
        .maps
        .iter()
        .map(|&mp| match mp {
            VarMap::Shifted { col, offset } => offset + xs[col],
            VarMap::Mirrored { col, offset } => offset - xs[col],
            VarMap::Split { plus, minus } => xs[plus] - xs[minus],
        })
        .collect();

    // Standard-form duals (minimization): y_r = -(reduced cost of identity column).
    let mut y: Vec<f64> = (0..m).map(|r| -tab.d[identity_col[r]]).collect();
    for r in 0..m {
        if flipped[r] {
            y[r] = -y[r];
        }
    }
    let dual_min: f64 = y.iter().zip(&sf.rhs).map(|(y, b)| y * b).sum::<f64>() + sf.cost_offset;
    let sense_sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let duals: Vec<f64> = y[..sf.num_user_rows]
        .iter()
        .map(|v| sense_sign * v)
        .collect();
    let status = match outcome {
        PhaseOutcome::Optimal => LpStatus::Optimal,
        PhaseOutcome::Unbounded => LpStatus::Unbounded,
        PhaseOutcome::Stalled => LpStatus::NumericalFailure,
    };
    let objective = lp.objective_value(&x);
    LpSolution {
        status,
        x,
        duals,
        objective: if status == LpStatus::Unbounded {
            sense_sign * f64::NEG_INFINITY
        } else {
            objective
        },
        dual_objective: sense_sign * dual_min,
        iterations: tab.iterations,
    }
}
