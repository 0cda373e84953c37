//! Primal active-set solver for the condensed program: all constraints are
//! bounds on single inputs or on differences of consecutive inputs, so the
//! working-set equality problems reduce to a null-space solve over the
//! connected components of the active rows, with multipliers recovered by
//! peeling the constraint forest. Warm starts reuse both the previous point
//! and the previous active set, shifted by one sampling step.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::mpc::condense::{BoxBounds, CondensedQp};
use crate::scalar::{lit, Scalar};

/// Solution of one QP solve.
#[derive(Debug, Clone)]
pub struct QpSolution<T> {
    pub u: DVector<T>,
    pub iterations: usize,
    /// Infinity norm of the stationarity residual at the solution.
    pub kkt_residual: T,
    /// Active constraint rows at the solution, reusable as a warm start.
    pub active_rows: Vec<usize>,
}

/// One-sided inequality `sign * (u_var - u_prev_opt) <= bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Constraint<T> {
    var: usize,
    prev: Option<usize>,
    sign: T,
    bound: T,
}

/// Stable identity of a constraint row within the horizon layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct RowId {
    step: usize,
    channel: usize,
    kind: RowKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum RowKind {
    BoxHi,
    BoxLo,
    RateHi,
    RateLo,
}

impl<T: Scalar> Constraint<T> {
    fn value(&self, u: &DVector<T>) -> T {
        let diff = match self.prev {
            Some(p) => u[self.var] - u[p],
            None => u[self.var],
        };
        self.sign * diff
    }
}

/// Reusable solver state for repeated solves against one Hessian.
pub struct QpEngine<T: Scalar> {
    h: DMatrix<T>,
    chol: Cholesky<T, Dyn>,
}

impl<T: Scalar> QpEngine<T> {
    pub fn new(h: &DMatrix<T>) -> Result<Self> {
        let chol = Cholesky::new(h.clone()).ok_or(Error::Nonfinite("qp hessian"))?;
        Ok(QpEngine {
            h: h.clone(),
            chol,
        })
    }

    /// Minimize `1/2 u'Hu + g'u` under box and rate bounds; `u_prev` anchors
    /// the first rate constraint.
    pub fn solve(
        &mut self,
        g: &DVector<T>,
        bounds: &BoxBounds<T>,
        n_u: usize,
        horizon: usize,
        u_prev: &DVector<T>,
        warm: Option<&QpSolution<T>>,
    ) -> Result<QpSolution<T>> {
        let vars = n_u * horizon;
        if u_prev.len() != n_u {
            return Err(Error::dim("qp u_prev", n_u, u_prev.len()));
        }
        if g.len() != vars {
            return Err(Error::dim("qp gradient", vars, g.len()));
        }

        let (constraints, lo, hi) = build_constraints(bounds, n_u, horizon, u_prev)?;

        // Feasible start: clip the warm point forward through the reachable windows.
        let mut u = DVector::<T>::zeros(vars);
        for k in 0..horizon {
            for c in 0..n_u {
                let idx = k * n_u + c;
                let (mut l, mut h) = (lo[idx], hi[idx]);
                if k > 0 {
                    let prev = u[(k - 1) * n_u + c];
                    l = l.max(prev + bounds.du_min[c]);
                    h = h.min(prev + bounds.du_max[c]);
                    if l > h {
                        return Err(Error::InfeasibleBounds(idx));
                    }
                }
                let want = warm.map(|w| w.u[idx]).unwrap_or(T::zero());
                u[idx] = want.max(l).min(h);
            }
        }

        let feas_tol = lit::<T>(1e-10);
        let tight =
            |row: usize, u: &DVector<T>| (constraints[row].value(u) - constraints[row].bound).abs() <= feas_tol;
        let mut active: Vec<usize> = match warm {
            Some(w) => w
                .active_rows
                .iter()
                .copied()
                .filter(|row| *row < constraints.len() && tight(*row, &u))
                .collect(),
            None => (0..constraints.len()).filter(|row| tight(*row, &u)).collect(),
        };
        prune_dependent(&mut active, &constraints, vars);
        let mut in_set = vec![false; constraints.len()];
        for &row in &active {
            in_set[row] = true;
        }

        let unconstrained = self.chol.solve(&(-g));
        let scale = T::one().max(if vars == 0 { T::zero() } else { g.amax() });
        let max_iter = 50 * (vars + constraints.len());
        for iter in 0..max_iter {
            let (u_eq, lambda) = self.equality_solve(g, &unconstrained, &constraints, &active, vars)?;
            let step = &u_eq - &u;
            let step_norm = if vars == 0 { T::zero() } else { step.amax() };

            if step_norm <= lit::<T>(1e-9) * T::one().max(u.amax()) {
                // No progress on this working set: optimal unless a
                // multiplier asks to release a constraint. The release
                // threshold sits above the multiplier noise floor, and the
                // lowest-index rule avoids cycling at degenerate vertices.
                let lambda_scale = lambda.iter().fold(T::zero(), |m, x| m.max(x.abs()));
                let drop_tol = lit::<T>(1e-7) * scale.max(lambda_scale);
                let mut release: Option<usize> = None;
                for (pos, &row) in active.iter().enumerate() {
                    if lambda[pos] < -drop_tol && release.map(|r| row < r).unwrap_or(true) {
                        release = Some(row);
                    }
                }
                match release {
                    None => {
                        let residual =
                            stationarity_residual(&self.h, g, &constraints, &active, &lambda, &u_eq);
                        return Ok(QpSolution {
                            u: u_eq,
                            iterations: iter,
                            kkt_residual: residual,
                            active_rows: active,
                        });
                    }
                    Some(row) => {
                        active.retain(|&r| r != row);
                        in_set[row] = false;
                        u = u_eq;
                    }
                }
            } else {
                // Longest feasible step toward the equality solution. A
                // two-pass ratio test with a small feasibility relaxation
                // picks the largest pivot among the near-blocking rows,
                // which avoids stalling on clusters of degenerate bounds.
                let relax = lit::<T>(1e-10) * T::one().max(u.amax());
                let mut limit = T::one();
                for (row, con) in constraints.iter().enumerate() {
                    if in_set[row] {
                        continue;
                    }
                    let dir = con.value(&step);
                    if dir > feas_tol {
                        let slack = (con.bound - con.value(&u)).max(T::zero());
                        let relaxed = (slack + relax) / dir;
                        if relaxed < limit {
                            limit = relaxed;
                        }
                    }
                }
                let mut alpha = T::one();
                let mut blocking = None;
                let mut best_dir = feas_tol;
                if limit < T::one() {
                    for (row, con) in constraints.iter().enumerate() {
                        if in_set[row] {
                            continue;
                        }
                        let dir = con.value(&step);
                        if dir > best_dir {
                            let slack = (con.bound - con.value(&u)).max(T::zero());
                            if slack / dir <= limit {
                                best_dir = dir;
                                blocking = Some(row);
                                alpha = (slack / dir).min(T::one());
                            }
                        }
                    }
                }
                u += step.scale(alpha);
                if let Some(row) = blocking {
                    // A blocking row is never dependent on the working set:
                    // its normal has positive product with the step while
                    // every active normal is orthogonal to it.
                    active.push(row);
                    in_set[row] = true;
                }
            }
        }
        Err(Error::QpIterationLimit(max_iter))
    }

    /// Equality-constrained solve on the working set by a null-space method
    /// tailored to the box/rate structure: the active edges partition the
    /// variables into components that are either pinned (connected to the
    /// bound "ground") or carry exactly one free parameter. Multipliers are
    /// recovered exactly by peeling the forest from its leaves.
    fn equality_solve(
        &mut self,
        g: &DVector<T>,
        unconstrained: &DVector<T>,
        constraints: &[Constraint<T>],
        active: &[usize],
        vars: usize,
    ) -> Result<(DVector<T>, DVector<T>)> {
        let m = active.len();
        if m == 0 {
            return Ok((unconstrained.clone(), DVector::zeros(0)));
        }
        let ground = vars;

        // Component labeling and particular solution by traversal from each
        // unvisited node. Box edge: sign * u_v = bound; rate edge:
        // sign * (u_v - u_p) = bound.
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); vars + 1];
        for (pos, &row) in active.iter().enumerate() {
            let con = &constraints[row];
            adjacency[con.var].push(pos);
            adjacency[con.prev.unwrap_or(ground)].push(pos);
        }
        // free_index[v] = Some(column in the reduced system); offsets hold
        // the particular solution.
        let mut component: Vec<Option<usize>> = vec![None; vars + 1];
        let mut offset = vec![T::zero(); vars + 1];
        let mut is_fixed = vec![false; vars + 1];
        let mut components: Vec<Vec<usize>> = Vec::new();

        // Ground component first: everything reachable from ground is pinned.
        {
            let mut stack = vec![ground];
            component[ground] = Some(usize::MAX);
            is_fixed[ground] = true;
            while let Some(node) = stack.pop() {
                for &pos in &adjacency[node] {
                    let con = &constraints[active[pos]];
                    let (a, b) = (con.var, con.prev.unwrap_or(ground));
                    let next = if a == node { b } else { a };
                    if component[next].is_some() {
                        continue;
                    }
                    offset[next] = match con.prev {
                        // sign * u_var = bound
                        None => con.sign * con.bound,
                        Some(p) => {
                            if next == con.var {
                                offset[p] + con.sign * con.bound
                            } else {
                                offset[con.var] - con.sign * con.bound
                            }
                        }
                    };
                    component[next] = Some(usize::MAX);
                    is_fixed[next] = true;
                    stack.push(next);
                }
            }
        }
        for start in 0..vars {
            if component[start].is_some() || adjacency[start].is_empty() {
                continue;
            }
            let id = components.len();
            let mut members = vec![start];
            component[start] = Some(id);
            let mut stack = vec![start];
            while let Some(node) = stack.pop() {
                for &pos in &adjacency[node] {
                    let con = &constraints[active[pos]];
                    let (a, b) = (con.var, con.prev.unwrap_or(ground));
                    let next = if a == node { b } else { a };
                    if component[next].is_some() {
                        continue;
                    }
                    offset[next] = if next == con.var {
                        offset[con.prev.unwrap()] + con.sign * con.bound
                    } else {
                        offset[con.var] - con.sign * con.bound
                    };
                    component[next] = Some(id);
                    members.push(next);
                    stack.push(next);
                }
            }
            components.push(members);
        }

        // Particular solution: pinned values and in-component offsets; loose
        // variables keep the unconstrained optimum.
        let mut u_part = DVector::<T>::zeros(vars);
        let mut loose: Vec<usize> = Vec::new();
        for v in 0..vars {
            if is_fixed[v] || component[v].is_some() {
                u_part[v] = offset[v];
            } else {
                loose.push(v);
            }
        }

        // Reduced problem over one parameter per free component plus every
        // untouched variable.
        let f = components.len() + loose.len();
        let mut col_of = vec![usize::MAX; vars];
        for (c, members) in components.iter().enumerate() {
            for &v in members {
                col_of[v] = c;
            }
        }
        for (extra, &v) in loose.iter().enumerate() {
            col_of[v] = components.len() + extra;
        }

        let mut u_eq = u_part.clone();
        if f > 0 {
            let w = &self.h * &u_part + g;
            let mut h_f = DMatrix::<T>::zeros(f, f);
            let mut g_f = DVector::<T>::zeros(f);
            for i in 0..vars {
                let ci = col_of[i];
                if ci == usize::MAX {
                    continue;
                }
                g_f[ci] += w[i];
                for j in 0..vars {
                    let cj = col_of[j];
                    if cj != usize::MAX {
                        h_f[(ci, cj)] += self.h[(i, j)];
                    }
                }
            }
            let p = Cholesky::new(h_f.clone())
                .map(|c| c.solve(&(-&g_f)))
                .or_else(|| h_f.lu().solve(&(-&g_f)))
                .ok_or(Error::Nonfinite("qp reduced system"))?;
            for v in 0..vars {
                if col_of[v] != usize::MAX {
                    u_eq[v] = u_part[v] + p[col_of[v]];
                }
            }
        }

        // Multipliers by leaf peeling of r = -(H u + g) over the forest.
        let mut residual = -(&self.h * &u_eq) - g;
        let mut lambda = DVector::<T>::zeros(m);
        let mut degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
        let mut used = vec![false; m];
        let mut queue: Vec<usize> = (0..vars).filter(|&v| degree[v] == 1).collect();
        while let Some(v) = queue.pop() {
            if degree[v] != 1 || v == ground {
                continue;
            }
            let pos = match adjacency[v].iter().find(|&&p| !used[p]) {
                Some(&p) => p,
                None => continue,
            };
            let con = &constraints[active[pos]];
            let coef = if con.var == v { con.sign } else { -con.sign };
            // residual = sum lambda_e c_e over remaining edges.
            lambda[pos] = residual[v] / coef;
            used[pos] = true;
            residual[v] = T::zero();
            let other = if con.var == v {
                con.prev.unwrap_or(ground)
            } else {
                con.var
            };
            if other != ground {
                let coef_other = if con.var == other { con.sign } else { -con.sign };
                residual[other] -= lambda[pos] * coef_other;
            }
            degree[v] -= 1;
            degree[other] -= 1;
            if other != ground && degree[other] == 1 {
                queue.push(other);
            }
        }
        Ok((u_eq, lambda))
    }
}


/// Minimize the condensed program. Fresh factorization per call; closed-loop
/// code should hold a `QpEngine` instead.
pub fn qp_solve<T: Scalar>(
    qp: &CondensedQp<T>,
    u_prev: &DVector<T>,
    warm: Option<&QpSolution<T>>,
) -> Result<QpSolution<T>> {
    QpEngine::new(&qp.h)?.solve(&qp.g, &qp.bounds, qp.n_u, qp.horizon, u_prev, warm)
}

type ConstraintSet<T> = (Vec<Constraint<T>>, Vec<T>, Vec<T>);

/// Row identities in construction order. The layout only depends on the
/// bounds shape, so it is stable across solves with the same bounds.
fn row_ids<T: Scalar>(bounds: &BoxBounds<T>, n_u: usize, horizon: usize) -> Vec<RowId> {
    let inf = T::from_f64(f64::INFINITY).unwrap();
    let mut ids = Vec::new();
    for step in 0..horizon {
        for channel in 0..n_u {
            if bounds.u_max[channel] < inf || step == 0 {
                ids.push(RowId {
                    step,
                    channel,
                    kind: RowKind::BoxHi,
                });
            }
            if bounds.u_min[channel] > -inf || step == 0 {
                ids.push(RowId {
                    step,
                    channel,
                    kind: RowKind::BoxLo,
                });
            }
            if step > 0 {
                if bounds.du_max[channel] < inf {
                    ids.push(RowId {
                        step,
                        channel,
                        kind: RowKind::RateHi,
                    });
                }
                if bounds.du_min[channel] > -inf {
                    ids.push(RowId {
                        step,
                        channel,
                        kind: RowKind::RateLo,
                    });
                }
            }
        }
    }
    ids
}

fn build_constraints<T: Scalar>(
    bounds: &BoxBounds<T>,
    n_u: usize,
    horizon: usize,
    u_prev: &DVector<T>,
) -> Result<ConstraintSet<T>> {
    let vars = n_u * horizon;
    let inf = T::from_f64(f64::INFINITY).unwrap();
    let mut constraints = Vec::new();
    let mut lo = vec![T::zero(); vars];
    let mut hi = vec![T::zero(); vars];
    for k in 0..horizon {
        for c in 0..n_u {
            let idx = k * n_u + c;
            let (mut l, mut h) = (bounds.u_min[c], bounds.u_max[c]);
            if k == 0 {
                // The first step merges the rate window around the last input.
                l = l.max(u_prev[c] + bounds.du_min[c]);
                h = h.min(u_prev[c] + bounds.du_max[c]);
            }
            if l > h {
                return Err(Error::InfeasibleBounds(idx));
            }
            lo[idx] = l;
            hi[idx] = h;
            // Row order must match `row_ids`.
            if h < inf || k == 0 {
                constraints.push(Constraint {
                    var: idx,
                    prev: None,
                    sign: T::one(),
                    bound: h,
                });
            }
            if l > -inf || k == 0 {
                constraints.push(Constraint {
                    var: idx,
                    prev: None,
                    sign: -T::one(),
                    bound: -l,
                });
            }
            if k > 0 {
                let prev = (k - 1) * n_u + c;
                if bounds.du_max[c] < inf {
                    constraints.push(Constraint {
                        var: idx,
                        prev: Some(prev),
                        sign: T::one(),
                        bound: bounds.du_max[c],
                    });
                }
                if bounds.du_min[c] > -inf {
                    constraints.push(Constraint {
                        var: idx,
                        prev: Some(prev),
                        sign: -T::one(),
                        bound: -bounds.du_min[c],
                    });
                }
            }
        }
    }
    Ok((constraints, lo, hi))
}

/// Shift a solution one sampling step for use as the next warm start: the
/// input blocks move one step earlier (the tail block repeats) and the
/// active rows move with them.
pub fn shift_solution<T: Scalar>(
    sol: &QpSolution<T>,
    bounds: &BoxBounds<T>,
    n_u: usize,
    horizon: usize,
) -> QpSolution<T> {
    let vars = n_u * horizon;
    let mut u = DVector::zeros(vars);
    if sol.u.len() == vars && vars > n_u {
        u.rows_mut(0, vars - n_u).copy_from(&sol.u.rows(n_u, vars - n_u));
        u.rows_mut(vars - n_u, n_u)
            .copy_from(&sol.u.rows(vars - n_u, n_u));
    } else if sol.u.len() == vars {
        u.copy_from(&sol.u);
    }

    let ids = row_ids(bounds, n_u, horizon);
    let position: HashMap<RowId, usize> = ids
        .iter()
        .enumerate()
        .map(|(row, id)| (*id, row))
        .collect();
    let active_rows = sol
        .active_rows
        .iter()
        .filter_map(|&row| {
            let id = ids.get(row)?;
            if id.step == 0 {
                return None;
            }
            position
                .get(&RowId {
                    step: id.step - 1,
                    channel: id.channel,
                    kind: id.kind,
                })
                .copied()
        })
        .collect();

    QpSolution {
        u,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        active_rows,
    }
}

/// Drop rows of the starting working set until the constraint normals are
/// independent. Rows are edges of a graph (box row: variable to ground, rate
/// row: variable to predecessor); a set of such normals is independent
/// exactly when the edges form a forest, checked by union-find.
fn prune_dependent<T: Scalar>(
    active: &mut Vec<usize>,
    constraints: &[Constraint<T>],
    vars: usize,
) {
    active.sort_unstable();
    active.dedup();
    let mut parent: Vec<usize> = (0..=vars).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut kept = Vec::with_capacity(active.len());
    for &row in active.iter() {
        let con = &constraints[row];
        let a = find(&mut parent, con.var);
        let b = find(&mut parent, con.prev.unwrap_or(vars));
        if a != b {
            parent[a] = b;
            kept.push(row);
        }
    }
    *active = kept;
}

fn stationarity_residual<T: Scalar>(
    h: &DMatrix<T>,
    g: &DVector<T>,
    constraints: &[Constraint<T>],
    active: &[usize],
    lambda: &DVector<T>,
    u: &DVector<T>,
) -> T {
    let mut grad = h * u + g;
    for (pos, &row) in active.iter().enumerate() {
        let con = &constraints[row];
        grad[con.var] += lambda[pos] * con.sign;
        if let Some(p) = con.prev {
            grad[p] -= lambda[pos] * con.sign;
        }
    }
    if grad.is_empty() {
        T::zero()
    } else {
        grad.amax()
    }
}
