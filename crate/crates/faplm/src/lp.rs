//! Dense linear programming for the row problems
//! `min ‖γ‖₁  subject to  ‖Gγ − t‖∞ ≤ δ`.
//!
//! The problem is put in standard form with split variables and bounded
//! slacks,
//!
//! ```text
//! min 1ᵀγ⁺ + 1ᵀγ⁻   s.t.  G(γ⁺ − γ⁻) + s = t + δ·1,   γ± ≥ 0,   0 ≤ s ≤ 2δ,
//! ```
//!
//! and solved by a two-phase revised simplex with bounded variables and
//! an explicit basis inverse. The slack identity block makes the initial
//! basis trivial; artificial variables are only introduced for rows whose
//! slack starts outside its bounds, so well-posed instances need a
//! handful of pivots per row.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{FaplmError, Result};

const REDUCED_COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 128;

/// Optimal point of one row problem.
#[derive(Debug, Clone)]
pub struct L1MinSolution {
    pub gamma: Array1<f64>,
    pub l1: f64,
    /// `‖Gγ − t‖∞` recomputed at the solution.
    pub max_residual: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub enum L1MinOutcome {
    Optimal(L1MinSolution),
    Infeasible,
}

/// Variable bookkeeping: structural columns first (`γ⁺`, `γ⁻`, `s`),
/// then one artificial per initially violated row.
#[derive(Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Simplex<'a> {
    g: ArrayView2<'a, f64>,
    m: usize,
    q: usize,
    n_vars: usize,
    rhs: Vec<f64>,
    upper: Vec<f64>,
    artificial_rows: Vec<(usize, f64)>, // (row, sign) per artificial
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Array2<f64>,
    vals: Vec<f64>,
    pivots: usize,
}

/// Solves `min ‖γ‖₁ s.t. ‖Gγ − t‖∞ ≤ δ` exactly.
pub fn min_l1_under_max_residual(
    g: ArrayView2<'_, f64>,
    target: ArrayView1<'_, f64>,
    delta: f64,
) -> Result<L1MinOutcome> {
    let (m, q) = g.dim();
    if target.len() != m {
        return Err(FaplmError::DimensionMismatch {
            context: "lp target length vs rows",
            expected: m,
            got: target.len(),
        });
    }
    if !(delta >= 0.0) || g.iter().any(|v| !v.is_finite()) || target.iter().any(|v| !v.is_finite())
    {
        return Err(FaplmError::InvalidConfig(
            "lp inputs must be finite with delta >= 0".into(),
        ));
    }

    let mut s = Simplex::new(g, target, delta);
    if !s.phase_one()? {
        return Ok(L1MinOutcome::Infeasible);
    }
    s.phase_two()?;

    let mut gamma = Array1::zeros(q);
    for j in 0..q {
        gamma[j] = s.vals[j] - s.vals[q + j];
    }
    let l1 = gamma.iter().map(|v| v.abs()).sum();
    let resid = g.dot(&gamma) - &target;
    let max_residual = resid.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    Ok(L1MinOutcome::Optimal(L1MinSolution {
        gamma,
        l1,
        max_residual,
        pivots: s.pivots,
    }))
}

impl<'a> Simplex<'a> {
    fn new(g: ArrayView2<'a, f64>, target: ArrayView1<'_, f64>, delta: f64) -> Self {
        let (m, q) = g.dim();
        let n_struct = 2 * q + m;
        let rhs: Vec<f64> = target.iter().map(|v| v + delta).collect();
        let mut upper = vec![f64::INFINITY; 2 * q];
        upper.extend(std::iter::repeat(2.0 * delta).take(m));

        let mut state = vec![VarState::AtLower; n_struct];
        let mut basis = Vec::with_capacity(m);
        let mut vals = vec![0.0; n_struct];
        let mut artificial_rows = Vec::new();

        // Start from the slack identity basis; rows whose slack value
        // falls outside [0, 2δ] get an artificial variable instead.
        for i in 0..m {
            let slack = 2 * q + i;
            if rhs[i] < 0.0 {
                // slack pinned at lower, artificial covers −rhs.
                artificial_rows.push((i, -1.0));
                let art = n_struct + artificial_rows.len() - 1;
                basis.push(art);
            } else if rhs[i] > upper[slack] {
                // slack pinned at upper, artificial covers the excess.
                state[slack] = VarState::AtUpper;
                vals[slack] = upper[slack];
                artificial_rows.push((i, 1.0));
                let art = n_struct + artificial_rows.len() - 1;
                basis.push(art);
            } else {
                state[slack] = VarState::Basic(i);
                basis.push(slack);
            }
        }
        let n_art = artificial_rows.len();
        let n_vars = n_struct + n_art;
        state.extend(std::iter::repeat(VarState::AtLower).take(n_art));
        vals.extend(std::iter::repeat(0.0).take(n_art));
        upper.extend(std::iter::repeat(f64::INFINITY).take(n_art));
        for (r, &col) in basis.iter().enumerate() {
            state[col] = VarState::Basic(r);
        }

        let mut s = Self {
            g,
            m,
            q,
            n_vars,
            rhs,
            upper,
            artificial_rows,
            state,
            basis,
            binv: Array2::eye(m),
            vals,
            pivots: 0,
        };
        s.recompute_basics();
        s
    }

    fn n_struct(&self) -> usize {
        2 * self.q + self.m
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_struct()
    }

    /// Objective coefficient in the given phase.
    fn cost(&self, j: usize, phase_one: bool) -> f64 {
        if phase_one {
            if self.is_artificial(j) {
                1.0
            } else {
                0.0
            }
        } else if j < 2 * self.q {
            1.0
        } else {
            0.0
        }
    }

    /// Column j of the constraint matrix into `out`.
    fn column(&self, j: usize, out: &mut [f64]) {
        out.fill(0.0);
        if j < self.q {
            for i in 0..self.m {
                out[i] = self.g[[i, j]];
            }
        } else if j < 2 * self.q {
            for i in 0..self.m {
                out[i] = -self.g[[i, j - self.q]];
            }
        } else if j < self.n_struct() {
            out[j - 2 * self.q] = 1.0;
        } else {
            let (row, sign) = self.artificial_rows[j - self.n_struct()];
            out[row] = sign;
        }
    }

    /// Basic values from scratch: `x_B = B⁻¹ (b − Σ_nonbasic A_j x_j)`.
    fn recompute_basics(&mut self) {
        let mut r = self.rhs.clone();
        let mut col = vec![0.0; self.m];
        for j in 0..self.n_vars {
            if let VarState::Basic(_) = self.state[j] {
                continue;
            }
            if self.vals[j] != 0.0 {
                self.column(j, &mut col);
                for i in 0..self.m {
                    r[i] -= col[i] * self.vals[j];
                }
            }
        }
        for row in 0..self.m {
            let mut acc = 0.0;
            for i in 0..self.m {
                acc += self.binv[[row, i]] * r[i];
            }
            self.vals[self.basis[row]] = acc;
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = Array2::zeros((m, m));
        let mut col = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                b[[i, r]] = col[i];
            }
        }
        let mut inv = Array2::eye(m);
        for k in 0..m {
            let mut piv = k;
            for i in (k + 1)..m {
                if b[[i, k]].abs() > b[[piv, k]].abs() {
                    piv = i;
                }
            }
            if b[[piv, k]].abs() < 1e-13 {
                return Err(FaplmError::LpStalled(self.pivots));
            }
            if piv != k {
                for j in 0..m {
                    b.swap((k, j), (piv, j));
                    inv.swap((k, j), (piv, j));
                }
            }
            let d = b[[k, k]];
            for j in 0..m {
                b[[k, j]] /= d;
                inv[[k, j]] /= d;
            }
            for i in 0..m {
                if i != k {
                    let f = b[[i, k]];
                    if f != 0.0 {
                        for j in 0..m {
                            b[[i, j]] -= f * b[[k, j]];
                            inv[[i, j]] -= f * inv[[k, j]];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_basics();
        Ok(())
    }

    /// Simplex multipliers `y = B⁻ᵀ c_B`.
    fn multipliers(&self, phase_one: bool) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = self.cost(j, phase_one);
            if c != 0.0 {
                for i in 0..self.m {
                    y[i] += c * self.binv[[r, i]];
                }
            }
        }
        y
    }

    /// Picks the entering variable. Dantzig rule normally, Bland's rule
    /// when asked (anti-cycling).
    fn choose_entering(&self, phase_one: bool, bland: bool) -> Option<(usize, f64)> {
        let y = self.multipliers(phase_one);
        // w = Gᵀ y prices both split blocks in one pass.
        let mut w = vec![0.0; self.q];
        for i in 0..self.m {
            let yi = y[i];
            if yi != 0.0 {
                for j in 0..self.q {
                    w[j] += yi * self.g[[i, j]];
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        let consider = |j: usize, d: f64, best: &mut Option<(usize, f64)>| {
            let score = match self.state[j] {
                VarState::AtLower if d < -REDUCED_COST_TOL => -d,
                VarState::AtUpper if d > REDUCED_COST_TOL => d,
                _ => return false,
            };
            match best {
                Some((_, s)) if *s >= score => false,
                _ => {
                    *best = Some((j, d));
                    true
                }
            }
        };
        for j in 0..self.n_vars {
            if self.is_artificial(j) {
                continue; // artificials never re-enter once driven out
            }
            let d = if j < self.q {
                self.cost(j, phase_one) - w[j]
            } else if j < 2 * self.q {
                self.cost(j, phase_one) + w[j - self.q]
            } else if j < self.n_struct() {
                self.cost(j, phase_one) - y[j - 2 * self.q]
            } else {
                continue;
            };
            let took = consider(j, d, &mut best);
            if bland && took {
                return best; // first eligible index
            }
        }
        best
    }

    /// One bounded-variable pivot. Returns whether the step was
    /// nondegenerate, or None when the problem is unbounded.
    fn pivot(&mut self, entering: usize, d: f64) -> Result<Option<bool>> {
        let m = self.m;
        let from_lower = matches!(self.state[entering], VarState::AtLower);
        // Direction of motion for the entering variable.
        let dir = if from_lower { 1.0 } else { -1.0 };
        debug_assert!(if from_lower { d < 0.0 } else { d > 0.0 });

        let mut col = vec![0.0; m];
        self.column(entering, &mut col);
        let mut w = vec![0.0; m];
        for r in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                acc += self.binv[[r, i]] * col[i];
            }
            w[r] = acc;
        }

        // Ratio test: basic variables move as x_B − dir·t·w; the entering
        // variable itself may stop at its opposite bound (bound flip).
        let mut t_max = self.upper[entering]; // lb = 0 throughout
        let mut leaving: Option<(usize, bool)> = None; // (row, hits_upper)
        for r in 0..m {
            let rate = dir * w[r];
            let bx = self.vals[self.basis[r]];
            let ub = self.upper[self.basis[r]];
            if rate > PIVOT_TOL {
                let t = (bx / rate).max(0.0);
                if t < t_max {
                    t_max = t;
                    leaving = Some((r, false));
                }
            } else if rate < -PIVOT_TOL && ub.is_finite() {
                let t = ((ub - bx) / (-rate)).max(0.0);
                if t < t_max {
                    t_max = t;
                    leaving = Some((r, true));
                }
            }
        }
        if !t_max.is_finite() {
            return Ok(None); // unbounded
        }

        let t = t_max;
        for r in 0..m {
            let j = self.basis[r];
            self.vals[j] -= dir * t * w[r];
        }
        let nondegenerate = t > 1e-12;

        match leaving {
            None => {
                // Bound flip: entering crosses to its other bound.
                self.vals[entering] = if from_lower { self.upper[entering] } else { 0.0 };
                self.state[entering] = if from_lower {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
            }
            Some((row, hits_upper)) => {
                let leaver = self.basis[row];
                self.vals[entering] = if from_lower {
                    t
                } else {
                    self.upper[entering] - t
                };
                self.vals[leaver] = if hits_upper { self.upper[leaver] } else { 0.0 };
                self.state[leaver] = if hits_upper {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                self.state[entering] = VarState::Basic(row);
                self.basis[row] = entering;
                // Rank-one update of the basis inverse.
                let pivot_val = w[row];
                if pivot_val.abs() < PIVOT_TOL {
                    return Err(FaplmError::LpStalled(self.pivots));
                }
                for i in 0..m {
                    self.binv[[row, i]] /= pivot_val;
                }
                for r in 0..m {
                    if r != row {
                        let f = w[r];
                        if f != 0.0 {
                            for i in 0..m {
                                self.binv[[r, i]] -= f * self.binv[[row, i]];
                            }
                        }
                    }
                }
            }
        }
        self.pivots += 1;
        if self.pivots % REFACTOR_EVERY == 0 {
            self.refactor()?;
        }
        Ok(Some(nondegenerate))
    }

    fn run_phase(&mut self, phase_one: bool) -> Result<()> {
        let cap = 200 * (self.n_vars + self.m) + 10_000;
        let mut degenerate_streak = 0usize;
        let mut iterations = 0usize;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(FaplmError::LpStalled(self.pivots));
            }
            let bland = degenerate_streak > 2 * (self.m + self.n_vars);
            let Some((entering, d)) = self.choose_entering(phase_one, bland) else {
                return Ok(());
            };
            match self.pivot(entering, d)? {
                None => {
                    // Unbounded: impossible for phase 1 (objective >= 0)
                    // and for the ℓ1 objective; treat as numerical failure.
                    return Err(FaplmError::LpStalled(self.pivots));
                }
                Some(true) => degenerate_streak = 0,
                Some(false) => degenerate_streak += 1,
            }
        }
    }

    /// Returns false when the constraints are infeasible at this δ.
    fn phase_one(&mut self) -> Result<bool> {
        if self.artificial_rows.is_empty() {
            return Ok(true);
        }
        self.run_phase(true)?;
        let infeas: f64 = (0..self.artificial_rows.len())
            .map(|a| self.vals[self.n_struct() + a])
            .sum();
        let scale = self.rhs.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if infeas > FEAS_TOL * scale {
            return Ok(false);
        }
        // Pivot any zero-valued artificial out of the basis so phase 2
        // never touches artificial columns.
        for row in 0..self.m {
            if !self.is_artificial(self.basis[row]) {
                continue;
            }
            let mut col = vec![0.0; self.m];
            let mut replacement = None;
            'cols: for j in 0..self.n_struct() {
                if matches!(self.state[j], VarState::Basic(_)) {
                    continue;
                }
                self.column(j, &mut col);
                let mut piv = 0.0;
                for i in 0..self.m {
                    piv += self.binv[[row, i]] * col[i];
                }
                if piv.abs() > 1e-7 {
                    replacement = Some(j);
                    break 'cols;
                }
            }
            let j = replacement.ok_or(FaplmError::LpStalled(self.pivots))?;
            self.column(j, &mut col);
            let mut w = vec![0.0; self.m];
            for r in 0..self.m {
                let mut acc = 0.0;
                for i in 0..self.m {
                    acc += self.binv[[r, i]] * col[i];
                }
                w[r] = acc;
            }
            let art = self.basis[row];
            self.state[art] = VarState::AtLower;
            self.vals[art] = 0.0;
            self.state[j] = VarState::Basic(row);
            self.basis[row] = j;
            let pivot_val = w[row];
            for i in 0..self.m {
                self.binv[[row, i]] /= pivot_val;
            }
            for r in 0..self.m {
                if r != row {
                    let f = w[r];
                    if f != 0.0 {
                        for i in 0..self.m {
                            self.binv[[r, i]] -= f * self.binv[[row, i]];
                        }
                    }
                }
            }
            self.recompute_basics();
        }
        Ok(true)
    }

    fn phase_two(&mut self) -> Result<()> {
        self.run_phase(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn solve(g: &Array2<f64>, t: &Array1<f64>, delta: f64) -> L1MinOutcome {
        min_l1_under_max_residual(g.view(), t.view(), delta).unwrap()
    }

    #[test]
    fn identity_gram_shrinks_toward_target() {
        let g = Array2::eye(3);
        let t = array![1.0, 0.0, 0.0];
        match solve(&g, &t, 0.1) {
            L1MinOutcome::Optimal(s) => {
                assert!((s.gamma[0] - 0.9).abs() < 1e-9);
                assert!(s.gamma[1].abs() < 1e-12 && s.gamma[2].abs() < 1e-12);
                assert!((s.l1 - 0.9).abs() < 1e-9);
                assert!(s.max_residual <= 0.1 + 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_delta_reproduces_diagonal_inverse() {
        let g = array![[2.0, 0.0], [0.0, 4.0]];
        match solve(&g, &array![1.0, 0.0], 0.0) {
            L1MinOutcome::Optimal(s) => {
                assert!((s.gamma[0] - 0.5).abs() < 1e-10);
                assert!(s.gamma[1].abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        match solve(&g, &array![0.0, 1.0], 0.0) {
            L1MinOutcome::Optimal(s) => {
                assert!((s.gamma[1] - 0.25).abs() < 1e-10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn large_delta_admits_zero() {
        let g = array![[1.0, 0.3], [0.3, 1.0]];
        match solve(&g, &array![1.0, 0.0], 1.0) {
            L1MinOutcome::Optimal(s) => {
                assert!(s.l1 < 1e-10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible_rows() {
        let g = Array2::zeros((2, 2));
        match solve(&g, &array![1.0, 0.0], 0.5) {
            L1MinOutcome::Infeasible => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn hand_worked_two_by_two() {
        // Optimum at γ = (14/15, −4/15) with both constraints active.
        let g = array![[1.0, 0.5], [0.5, 1.0]];
        match solve(&g, &array![1.0, 0.0], 0.2) {
            L1MinOutcome::Optimal(s) => {
                assert!((s.l1 - 1.2).abs() < 1e-9, "l1 = {}", s.l1);
                assert!((s.gamma[0] - 14.0 / 15.0).abs() < 1e-9);
                assert!((s.gamma[1] + 4.0 / 15.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_delta() {
        let g = Array2::eye(2);
        assert!(min_l1_under_max_residual(g.view(), array![1.0, 0.0].view(), -0.1).is_err());
    }
}
