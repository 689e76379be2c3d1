//! Exact linear programming over a credal polytope and random feasible
//! points, used to cross-check vertex enumeration.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::evidence::SLICE_SUM_TOL;
use crate::search::SolutionSet;
use crate::system::ConstraintSystem;

/// Denominator used to turn floating right-hand sides into rationals.
pub const RHS_DENOMINATOR: i64 = 1_000_000_000_000;

type Q = BigRational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// A linear function of the distribution of one exogenous variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctional {
    pub coefficients: Vec<f64>,
}

impl LinearFunctional {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    /// Indicator of a set of states.
    pub fn indicator(size: usize, states: &[usize]) -> Self {
        let mut c = vec![0.0; size];
        for &s in states {
            c[s] = 1.0;
        }
        Self::new(c)
    }

    pub fn evaluate(&self, p: &[f64]) -> f64 {
        self.coefficients.iter().zip(p).map(|(c, x)| c * x).sum()
    }
}

/// Nearest rational with denominator [`RHS_DENOMINATOR`].
pub fn rationalize(x: f64) -> Q {
    let scaled = (x * RHS_DENOMINATOR as f64).round();
    let numer = BigInt::from(scaled as i128);
    Q::new(numer, BigInt::from(RHS_DENOMINATOR))
}

/// Rational right-hand side in which every block that partitions the
/// columns and sums to one within [`SLICE_SUM_TOL`] sums to exactly one;
/// the last row of such a block absorbs the rounding error.
fn rational_rhs(system: &ConstraintSystem) -> Vec<Q> {
    let mut b: Vec<Q> = system.rhs().iter().map(|&x| rationalize(x)).collect();
    for block in system.blocks() {
        let partitions = (0..system.columns()).all(|c| {
            block.clone().map(|r| u32::from(system.coefficient(r, c))).sum::<u32>() == 1
        });
        if partitions && !block.is_empty() {
            let last = block.end - 1;
            let others: Q = block.clone().take(block.len() - 1).map(|r| b[r].clone()).sum();
            let fixed = Q::one() - others;
            let drift = (&fixed - &b[last]).abs();
            if !fixed.is_negative() && drift <= rationalize(SLICE_SUM_TOL) {
                b[last] = fixed;
            }
        }
    }
    b
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    rhs: Vec<Q>,
    basis: Vec<usize>,
    cost: Vec<Q>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let inv = Q::one() / &self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v *= &inv;
        }
        self.rhs[r] *= &inv;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            for (v, p) in self.rows[i].iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
            self.rhs[i] -= &f * &pivot_rhs;
        }
        if !self.cost[c].is_zero() {
            let f = self.cost[c].clone();
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule over the columns below `limit`.
    fn optimise(&mut self, limit: usize) -> Result<()> {
        loop {
            let Some(enter) = (0..limit).find(|&j| self.cost[j].is_negative()) else {
                return Ok(());
            };
            let mut leave: Option<(usize, Q)> = None;
            for i in 0..self.rows.len() {
                if self.rows[i][enter].is_positive() {
                    let ratio = &self.rhs[i] / &self.rows[i][enter];
                    let better = match &leave {
                        None => true,
                        Some((l, best)) => ratio < *best || (ratio == *best && self.basis[i] < self.basis[*l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return Err(Error::Internal("unbounded linear program over a simplex".into())),
            }
        }
    }
}

/// Optimal value and point of `min c x` subject to `A x = b`, `x >= 0`.
fn simplex(a: Vec<Vec<Q>>, b: Vec<Q>, c: &[Q]) -> Result<(Q, Vec<Q>)> {
    let m = a.len();
    let n = c.len();
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (i, (mut row, mut bi)) in a.into_iter().zip(b).enumerate() {
        if bi.is_negative() {
            row.iter_mut().for_each(|v| *v = -v.clone());
            bi = -bi;
        }
        row.extend((0..m).map(|k| if k == i { Q::one() } else { Q::zero() }));
        rows.push(row);
        rhs.push(bi);
    }
    // Phase one: minimise the sum of the artificial variables.
    let mut cost = vec![Q::zero(); n + m];
    for j in 0..n {
        cost[j] = -rows.iter().map(|r| r[j].clone()).sum::<Q>();
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis: (n..n + m).collect(),
        cost,
    };
    t.optimise(n + m)?;
    let infeasibility: Q = (0..m).filter(|&i| t.basis[i] >= n).map(|i| t.rhs[i].clone()).sum();
    if infeasibility.is_positive() {
        return Err(Error::LpInfeasible);
    }
    // Drive remaining artificials out of the basis or drop redundant rows.
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            match (0..n).find(|&j| !t.rows[i][j].is_zero()) {
                Some(j) => t.pivot(i, j),
                None => {
                    t.rows.remove(i);
                    t.rhs.remove(i);
                    t.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }
    // Phase two on the original objective.
    t.cost = (0..n + m)
        .map(|j| {
            if j >= n {
                return Q::zero();
            }
            let mut d = c[j].clone();
            for (i, &bv) in t.basis.iter().enumerate() {
                if !c[bv].is_zero() {
                    d -= &c[bv] * &t.rows[i][j];
                }
            }
            d
        })
        .collect();
    t.optimise(n)?;
    let mut x = vec![Q::zero(); n];
    for (i, &bv) in t.basis.iter().enumerate() {
        x[bv] = t.rhs[i].clone();
    }
    let value = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok((value, x))
}

/// Exact optimum of `objective` over the credal polytope of `system`.
pub fn lp_solve(system: &ConstraintSystem, objective: &LinearFunctional, sense: Sense) -> Result<(f64, Vec<f64>)> {
    let n = system.columns();
    if objective.coefficients.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: objective.coefficients.len(),
        });
    }
    let mut a: Vec<Vec<Q>> = (0..system.rows())
        .map(|r| system.row(r).iter().map(|&v| Q::from_integer(BigInt::from(v))).collect())
        .collect();
    let mut b = rational_rhs(system);
    a.push(vec![Q::one(); n]);
    b.push(Q::one());
    let sign = match sense {
        Sense::Min => Q::one(),
        Sense::Max => -Q::one(),
    };
    let c: Vec<Q> = objective
        .coefficients
        .iter()
        .map(|&v| rationalize(v) * &sign)
        .collect();
    let (value, x) = simplex(a, b, &c)?;
    let value = (value * sign).to_f64().unwrap_or(f64::NAN);
    let x = x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    Ok((value, x))
}

pub fn lp_bound(system: &ConstraintSystem, objective: &LinearFunctional, sense: Sense) -> Result<f64> {
    lp_solve(system, objective, sense).map(|(v, _)| v)
}

/// `[min, max]` of `objective` over the polytope.
pub fn lp_interval(system: &ConstraintSystem, objective: &LinearFunctional) -> Result<(f64, f64)> {
    Ok((
        lp_bound(system, objective, Sense::Min)?,
        lp_bound(system, objective, Sense::Max)?,
    ))
}

/// `n` random convex combinations of the vertices in `set`, with
/// Dirichlet(1, ..., 1) weights.
pub fn sample_feasible(set: &SolutionSet, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if set.points.is_empty() {
        return Err(Error::InfeasibleEvidence(set.exogenous.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = set.points.len();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        let mut p = vec![0.0; set.domain_size];
        for (wi, v) in w.iter().zip(&set.points) {
            for (pj, vj) in p.iter_mut().zip(&v.probabilities) {
                *pj += wi / total * vj;
            }
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::CanonicalDomain;
    use crate::evidence::{Evidence, EvidenceFile, ObservationalEntry};
    use crate::models;
    use crate::search::{exhaustive_search, SearchConfig};
    use crate::system::build_markovian_system;

    fn treatment_survival() -> ConstraintSystem {
        let m = models::treatment_survival();
        let d = CanonicalDomain::from_model(&m, "R").unwrap();
        let file = EvidenceFile {
            observational: vec![ObservationalEntry {
                targets: vec!["S".into()],
                context: vec!["T".into()],
                table: vec![0.462, 0.538, 0.323, 0.677],
            }],
            experimental: vec![],
        };
        build_markovian_system(&d, &Evidence::new(&m, file).unwrap()).unwrap()
    }

    #[test]
    fn treatment_survival_bounds_on_r1() {
        let (lo, hi) = lp_interval(&treatment_survival(), &LinearFunctional::indicator(4, &[1])).unwrap();
        assert!((lo - 0.139).abs() < 1e-12);
        assert!((hi - 0.462).abs() < 1e-12);
    }

    #[test]
    fn normalisation_objective_is_one() {
        let (lo, hi) = lp_interval(&treatment_survival(), &LinearFunctional::new(vec![1.0; 4])).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn infeasible_system_is_reported() {
        let s = treatment_survival().with_rhs(vec![0.5, 0.5, 0.9, 0.3]).unwrap();
        assert!(matches!(
            lp_bound(&s, &LinearFunctional::indicator(4, &[0]), Sense::Min),
            Err(Error::LpInfeasible)
        ));
    }

    #[test]
    fn samples_satisfy_the_system() {
        let s = treatment_survival();
        let set = exhaustive_search(&s, &SearchConfig::default()).unwrap();
        assert!(sample_feasible(&set, 0, 1).unwrap().is_empty());
        for p in sample_feasible(&set, 20, 3).unwrap() {
            assert!(s.is_satisfied_by(&p, 1e-7));
        }
        let mut one = set.clone();
        one.points.truncate(1);
        let p = &sample_feasible(&one, 1, 9).unwrap()[0];
        assert!(one.points[0].distance(&crate::system::ExtremePoint::new("R", p.clone())) < 1e-15);
    }
}
