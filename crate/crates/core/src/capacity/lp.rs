//! Dense two-phase simplex with Bland's rule. Instances here are small
//! (pooled capacity LPs, per-instance refinement checks), so the tableau is
//! kept dense and pivots are exact up to `TOL`.

use crate::error::{Error, Result};

pub const TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

/// `minimize c.x` subject to linear rows and `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct Lp {
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl Lp {
    pub fn new(num_vars: usize) -> Self {
        Lp { objective: vec![0.0; num_vars], rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64) -> usize {
        self.objective.push(cost);
        self.objective.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    /// Sparse row; repeated indices are summed.
    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars()));
        self.rows.push(Row { coeffs, sense, rhs });
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    /// m rows of width `cols + 1`, the last entry being the rhs.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_orig: usize,
    /// First artificial column; artificials occupy `art..cols`.
    art: usize,
    cols: usize,
}

impl Tableau {
    fn build(lp: &Lp) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let n_slack = lp.rows.iter().filter(|r| r.sense != Sense::Eq).count();
        let art = n + n_slack;
        let cols = art + m;
        let mut a = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let mut slack = n;
        for (i, row) in lp.rows.iter().enumerate() {
            let flip = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            for &(j, v) in &row.coeffs {
                a[i][j] += flip * v;
            }
            a[i][cols] = flip * row.rhs;
            let sense = match (row.sense, flip < 0.0) {
                (Sense::Le, true) => Sense::Ge,
                (Sense::Ge, true) => Sense::Le,
                (s, _) => s,
            };
            match sense {
                Sense::Le => {
                    a[i][slack] = 1.0;
                    slack += 1;
                }
                Sense::Ge => {
                    a[i][slack] = -1.0;
                    slack += 1;
                }
                Sense::Eq => {}
            }
            // Every row gets an artificial; phase 1 drives them out.
            a[i][art + i] = 1.0;
            basis[i] = art + i;
        }
        Tableau { a, basis, n_orig: n, art, cols }
    }

    fn run(mut self, objective: &[f64]) -> Result<LpOutcome> {
        let m = self.a.len();
        // Phase 1: minimize the sum of artificials.
        let mut cost = vec![0.0; self.cols];
        cost[self.art..].fill(1.0);
        match self.optimize(&cost, self.cols)? {
            Phase::Optimal => {}
            Phase::Unbounded => unreachable!("phase 1 is bounded below by 0"),
        }
        let infeas: f64 = (0..m).filter(|&i| self.basis[i] >= self.art).map(|i| self.a[i][self.cols]).sum();
        let scale = 1.0 + self.a.iter().map(|r| r[self.cols].abs()).fold(0.0, f64::max);
        if infeas > TOL * scale {
            return Ok(LpOutcome::Infeasible);
        }
        self.drive_out_artificials();

        let mut cost = vec![0.0; self.cols];
        cost[..self.n_orig].copy_from_slice(objective);
        match self.optimize(&cost, self.art)? {
            Phase::Unbounded => return Ok(LpOutcome::Unbounded),
            Phase::Optimal => {}
        }
        let mut x = vec![0.0; self.n_orig];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_orig {
                x[b] = self.a[i][self.cols].max(0.0);
            }
        }
        let objective = x.iter().zip(objective).map(|(x, c)| x * c).sum();
        Ok(LpOutcome::Optimal(LpSolution { x, objective }))
    }

    /// Bland's rule over columns `0..limit`.
    fn optimize(&mut self, cost: &[f64], limit: usize) -> Result<Phase> {
        let m = self.a.len();
        for _ in 0..MAX_PIVOTS {
            // Reduced costs: c_j - c_B B^-1 A_j, read off the current tableau.
            let entering = (0..limit).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let z: f64 = (0..m).map(|i| cost[self.basis[i]] * self.a[i][j]).sum();
                cost[j] - z < -TOL
            });
            let Some(j) = entering else { return Ok(Phase::Optimal) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let aij = self.a[i][j];
                if aij > TOL {
                    let ratio = self.a[i][self.cols] / aij;
                    let better = match leave {
                        None => true,
                        Some((l, r)) => ratio < r - TOL || (ratio <= r + TOL && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((i, _)) = leave else { return Ok(Phase::Unbounded) };
            self.pivot(i, j);
        }
        Err(Error::NoConvergence(format!("simplex exceeded {MAX_PIVOTS} pivots")))
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Pivots zero-valued artificials out of the basis where possible; rows
    /// where that fails are redundant and keep their artificial at zero.
    fn drive_out_artificials(&mut self) {
        for i in 0..self.a.len() {
            if self.basis[i] < self.art {
                continue;
            }
            if let Some(j) = (0..self.art).find(|&j| !self.basis.contains(&j) && self.a[i][j].abs() > TOL) {
                self.pivot(i, j);
            }
        }
        // Redundant rows: zero them so no artificial can re-enter the objective.
        for i in 0..self.a.len() {
            if self.basis[i] >= self.art {
                self.a[i].fill(0.0);
                self.a[i][self.basis[i]] = 1.0;
            }
        }
    }
}

enum Phase {
    Optimal,
    Unbounded,
}
