//! Exact rational linear programming: two-phase dense simplex with Bland's rule.

use num_traits::{One, Signed, Zero};

use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<Rat>,
    pub cmp: Cmp,
    pub rhs: Rat,
}

/// `maximize objective·x` subject to the constraints; variables are free
/// unless listed in `nonneg`.
#[derive(Debug, Clone)]
pub struct Lp {
    pub num_vars: usize,
    pub objective: Vec<Rat>,
    pub constraints: Vec<Constraint>,
    pub nonneg: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    Optimal { x: Vec<Rat>, value: Rat },
    Infeasible,
    Unbounded,
}

impl Lp {
    pub fn new(num_vars: usize) -> Self {
        Lp {
            num_vars,
            objective: vec![Rat::zero(); num_vars],
            constraints: Vec::new(),
            nonneg: vec![false; num_vars],
        }
    }

    pub fn add(&mut self, coeffs: Vec<Rat>, cmp: Cmp, rhs: Rat) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.constraints.push(Constraint { coeffs, cmp, rhs });
    }

    /// Sparse form of [`Lp::add`].
    pub fn add_sparse(&mut self, terms: &[(usize, Rat)], cmp: Cmp, rhs: Rat) {
        let mut coeffs = vec![Rat::zero(); self.num_vars];
        for (i, c) in terms {
            coeffs[*i] += c;
        }
        self.add(coeffs, cmp, rhs);
    }

    pub fn solve(&self) -> LpResult {
        solve(self)
    }
}

struct Tableau {
    rows: Vec<Vec<Rat>>,
    rhs: Vec<Rat>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v /= &p;
        }
        self.rhs[r] /= &p;
        let prow = self.rows[r].clone();
        let prhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            for (v, pv) in self.rows[i].iter_mut().zip(&prow) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
            self.rhs[i] -= &f * &prhs;
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost·x` over allowed columns starting from the current basis.
    /// Returns false on unboundedness.
    fn optimize(&mut self, cost: &[Rat], allowed: &dyn Fn(usize) -> bool) -> bool {
        loop {
            // Reduced costs: cost_j - cost_B · column_j.
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j].clone();
                for (i, &b) in self.basis.iter().enumerate() {
                    if !cost[b].is_zero() && !self.rows[i][j].is_zero() {
                        rc -= &cost[b] * &self.rows[i][j];
                    }
                }
                if rc.is_positive() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return true;
            };
            let mut leave: Option<(usize, Rat)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if a.is_positive() {
                    let ratio = &self.rhs[i] / a;
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

fn solve(lp: &Lp) -> LpResult {
    // Column layout: for each variable a positive part and, if free, a
    // negative part; then one slack per inequality; then one artificial per row.
    let mut var_cols: Vec<(usize, Option<usize>)> = Vec::with_capacity(lp.num_vars);
    let mut cols = 0;
    for v in 0..lp.num_vars {
        if lp.nonneg[v] {
            var_cols.push((cols, None));
            cols += 1;
        } else {
            var_cols.push((cols, Some(cols + 1)));
            cols += 2;
        }
    }
    let m = lp.constraints.len();
    let n_slack = lp
        .constraints
        .iter()
        .filter(|c| c.cmp != Cmp::Eq)
        .count();
    let slack_start = cols;
    let art_start = slack_start + n_slack;
    let total = art_start + m;

    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut slack = slack_start;
    for con in &lp.constraints {
        let mut row = vec![Rat::zero(); total];
        for (v, a) in con.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let (p, n) = var_cols[v];
            row[p] = a.clone();
            if let Some(n) = n {
                row[n] = -a.clone();
            }
        }
        match con.cmp {
            Cmp::Le => {
                row[slack] = Rat::one();
                slack += 1;
            }
            Cmp::Ge => {
                row[slack] = -Rat::one();
                slack += 1;
            }
            Cmp::Eq => {}
        }
        let mut b = con.rhs.clone();
        if b.is_negative() {
            for v in row.iter_mut() {
                *v = -v.clone();
            }
            b = -b;
        }
        rows.push(row);
        rhs.push(b);
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row[art_start + i] = Rat::one();
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis: (art_start..art_start + m).collect(),
        cols: total,
    };

    // Phase 1: maximize -Σ artificials.
    let mut cost1 = vec![Rat::zero(); total];
    for c in cost1.iter_mut().skip(art_start) {
        *c = -Rat::one();
    }
    t.optimize(&cost1, &|_| true);
    let infeas: Rat = t
        .basis
        .iter()
        .zip(&t.rhs)
        .filter(|(b, _)| **b >= art_start)
        .map(|(_, v)| v.clone())
        .sum();
    if infeas.is_positive() {
        return LpResult::Infeasible;
    }
    // Drive remaining zero-valued artificials out of the basis.
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= art_start {
            if let Some(c) = (0..art_start).find(|&c| !t.rows[i][c].is_zero()) {
                t.pivot(i, c);
            } else {
                // Redundant row.
                t.rows.remove(i);
                t.rhs.remove(i);
                t.basis.remove(i);
                continue;
            }
        }
        i += 1;
    }

    // Phase 2.
    let mut cost2 = vec![Rat::zero(); total];
    for (v, c) in lp.objective.iter().enumerate() {
        let (p, n) = var_cols[v];
        cost2[p] = c.clone();
        if let Some(n) = n {
            cost2[n] = -c.clone();
        }
    }
    if !t.optimize(&cost2, &|j| j < art_start) {
        return LpResult::Unbounded;
    }
    let mut col_val = vec![Rat::zero(); total];
    for (i, &b) in t.basis.iter().enumerate() {
        col_val[b] = t.rhs[i].clone();
    }
    let x: Vec<Rat> = var_cols
        .iter()
        .map(|&(p, n)| match n {
            Some(n) => &col_val[p] - &col_val[n],
            None => col_val[p].clone(),
        })
        .collect();
    let value = x
        .iter()
        .zip(&lp.objective)
        .map(|(a, b)| a * b)
        .sum();
    LpResult::Optimal { x, value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{frac, int};

    fn r(v: &[i64]) -> Vec<Rat> {
        v.iter().map(|&x| int(x)).collect()
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18, x,y ≥ 0 → (2,6), 36.
        let mut lp = Lp::new(2);
        lp.objective = r(&[3, 5]);
        lp.nonneg = vec![true, true];
        lp.add(r(&[1, 0]), Cmp::Le, int(4));
        lp.add(r(&[0, 2]), Cmp::Le, int(12));
        lp.add(r(&[3, 2]), Cmp::Le, int(18));
        match lp.solve() {
            LpResult::Optimal { x, value } => {
                assert_eq!(value, int(36));
                assert_eq!(x, r(&[2, 6]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_variables_and_equalities() {
        // max -x, x + y = 1, y ≤ 3/2 → x = -1/2.
        let mut lp = Lp::new(2);
        lp.objective = r(&[-1, 0]);
        lp.add(r(&[1, 1]), Cmp::Eq, int(1));
        lp.add(r(&[0, 1]), Cmp::Le, frac(3, 2));
        match lp.solve() {
            LpResult::Optimal { x, .. } => assert_eq!(x[0], frac(-1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = Lp::new(1);
        lp.add(r(&[1]), Cmp::Ge, int(2));
        lp.add(r(&[1]), Cmp::Le, int(1));
        assert_eq!(lp.solve(), LpResult::Infeasible);
        let mut lp = Lp::new(1);
        lp.objective = r(&[1]);
        lp.add(r(&[1]), Cmp::Ge, int(0));
        assert_eq!(lp.solve(), LpResult::Unbounded);
    }

    #[test]
    fn degenerate_redundant_rows() {
        let mut lp = Lp::new(2);
        lp.objective = r(&[1, 1]);
        lp.add(r(&[1, 1]), Cmp::Eq, int(2));
        lp.add(r(&[2, 2]), Cmp::Eq, int(4));
        lp.add(r(&[1, 0]), Cmp::Ge, int(0));
        lp.add(r(&[0, 1]), Cmp::Ge, int(0));
        match lp.solve() {
            LpResult::Optimal { value, .. } => assert_eq!(value, int(2)),
            other => panic!("{other:?}"),
        }
    }
}
