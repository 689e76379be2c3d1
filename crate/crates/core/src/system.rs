//! Linear constraint systems over the states of one exogenous variable.
//!
//! Every row is the indicator of the exogenous states that produce one
//! endogenous outcome in one context, and its right-hand side is the
//! empirical probability of that outcome. Rows are grouped in blocks; the
//! rows of a block partition the columns.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::ops::Range;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::canonical::{encode_digits_mixed, CanonicalDomain};
use crate::error::{Error, Result};
use crate::evidence::Evidence;

/// Residual tolerance for accepting a solved support.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Entries above `-NEGATIVE_TOL` are clamped to zero instead of rejected.
pub const NEGATIVE_TOL: f64 = 1e-9;
/// Pivot magnitude below which a column is considered dependent.
pub const PIVOT_TOL: f64 = 1e-9;
/// Entries above this value form the support of a point.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Observational,
    Interventional,
}

/// Which endogenous outcome, in which context, a row constrains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowLabel {
    pub kind: RowKind,
    pub context: Vec<(String, usize)>,
    pub outcome: Vec<(String, usize)>,
}

impl std::fmt::Display for RowLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |v: &[(String, usize)]| {
            v.iter()
                .map(|(n, s)| format!("{n}={s}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let outcome = join(&self.outcome);
        match (self.kind, self.context.is_empty()) {
            (_, true) => write!(f, "P({outcome})"),
            (RowKind::Observational, false) => write!(f, "P({outcome}|{})", join(&self.context)),
            (RowKind::Interventional, false) => write!(f, "P({outcome}|do({}))", join(&self.context)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    exogenous: String,
    columns: usize,
    matrix: Vec<u8>,
    rhs: Vec<f64>,
    row_labels: Vec<RowLabel>,
    col_labels: Vec<usize>,
    blocks: Vec<Range<usize>>,
    rank: usize,
}

/// Incremental construction of a system, one block at a time.
struct Builder<'a> {
    domain: &'a CanonicalDomain,
    matrix: Vec<u8>,
    rhs: Vec<f64>,
    labels: Vec<RowLabel>,
    blocks: Vec<Range<usize>>,
}

impl<'a> Builder<'a> {
    fn new(domain: &'a CanonicalDomain) -> Self {
        Self {
            domain,
            matrix: Vec::new(),
            rhs: Vec::new(),
            labels: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Adds one block per configuration of `context`, with one row per joint
    /// state of `outcome`. `value(state, context values)` returns the joint
    /// outcome index selected by an exogenous state.
    fn blocks(
        &mut self,
        kind: RowKind,
        context: &[(String, usize)],
        outcome: &[(String, usize)],
        table: &[f64],
        value: impl Fn(usize, &[usize]) -> usize,
    ) {
        let n = self.domain.size();
        let outer: usize = context.iter().map(|(_, c)| c).product();
        let inner: usize = outcome.iter().map(|(_, c)| c).product();
        debug_assert_eq!(table.len(), outer * inner);
        for c in 0..outer {
            let cvals = encode_digits_mixed(c, context.iter().map(|(_, k)| *k));
            let start = self.rhs.len();
            let selected: Vec<usize> = (0..n).map(|u| value(u, &cvals)).collect();
            for o in 0..inner {
                let ovals = encode_digits_mixed(o, outcome.iter().map(|(_, k)| *k));
                self.matrix.extend(selected.iter().map(|&s| u8::from(s == o)));
                self.rhs.push(table[c * inner + o]);
                self.labels.push(RowLabel {
                    kind,
                    context: context.iter().map(|(id, _)| id.clone()).zip(cvals.iter().copied()).collect(),
                    outcome: outcome.iter().map(|(id, _)| id.clone()).zip(ovals).collect(),
                });
            }
            self.blocks.push(start..self.rhs.len());
        }
    }

    /// Rows `I(f_child(parents) = y)` with `P(child | do(parents))` or the
    /// observational `P(child | parents)` on the right.
    fn mechanism_blocks(&mut self, kind: RowKind, child: usize, table: &[f64]) {
        let c = &self.domain.children()[child];
        let context: Vec<(String, usize)> = c.parents.iter().cloned().zip(c.parent_cards.iter().copied()).collect();
        let outcome = vec![(c.id.clone(), c.cardinality)];
        let domain = self.domain;
        let cards = c.parent_cards.clone();
        self.blocks(kind, &context, &outcome, table, |u, cv| {
            let cfg = cv.iter().zip(&cards).fold(0, |acc, (&v, &k)| acc * k + v);
            domain.mechanism(u, child)[cfg]
        });
    }

    fn finish(self) -> ConstraintSystem {
        ConstraintSystem::from_parts(
            self.domain.exogenous().to_string(),
            self.domain.size(),
            self.matrix,
            self.rhs,
            self.labels,
            self.domain.labels().to_vec(),
            self.blocks,
        )
    }
}

fn ids(v: &[(String, usize)]) -> Vec<String> {
    v.iter().map(|(id, _)| id.clone()).collect()
}

fn single_child(domain: &CanonicalDomain) -> Result<()> {
    if domain.children().len() != 1 {
        return Err(Error::Topology {
            exogenous: domain.exogenous().to_string(),
            children: domain.children().len(),
            expected: "a Markovian system needs exactly one child",
        });
    }
    Ok(())
}

fn chain(domain: &CanonicalDomain) -> Result<()> {
    let c = domain.children();
    if c.len() != 2 || c[1].parents != [c[0].id.clone()] {
        return Err(Error::Topology {
            exogenous: domain.exogenous().to_string(),
            children: c.len(),
            expected: "a semi-Markovian chain system needs two chained children",
        });
    }
    Ok(())
}

fn evidence_for(evidence: &Evidence, child: &str, parents: &[String], observational_first: bool) -> Result<(RowKind, Vec<f64>)> {
    let target = [child.to_string()];
    let obs = || evidence.observational(&target, parents).map(|t| (RowKind::Observational, t));
    let exp = || {
        if parents.is_empty() {
            Err(Error::MissingEvidence(format!("P({child})")))
        } else {
            evidence.experimental(child, parents).map(|t| (RowKind::Interventional, t))
        }
    };
    if observational_first {
        obs().or_else(|_| exp())
    } else {
        exp()
    }
}

/// System of a Markovian exogenous variable from `P(Y | parents)`, falling
/// back to `P(Y | do(parents))` when no observational table is available.
pub fn build_markovian_system(domain: &CanonicalDomain, evidence: &Evidence) -> Result<ConstraintSystem> {
    single_child(domain)?;
    let c = &domain.children()[0];
    let (kind, table) = evidence_for(evidence, &c.id, &c.parents, true)?;
    let mut b = Builder::new(domain);
    b.mechanism_blocks(kind, 0, &table);
    Ok(b.finish())
}

/// Same as [`build_markovian_system`] with an explicit conditional table,
/// used when the child is a merged variable.
pub fn build_markovian_system_from_table(domain: &CanonicalDomain, table: &[f64]) -> Result<ConstraintSystem> {
    single_child(domain)?;
    let c = &domain.children()[0];
    let expected = c.configurations() * c.cardinality;
    if table.len() != expected {
        return Err(Error::Shape {
            expected,
            found: table.len(),
        });
    }
    let mut b = Builder::new(domain);
    b.mechanism_blocks(RowKind::Observational, 0, table);
    Ok(b.finish())
}

fn observational_rows(b: &mut Builder, domain: &CanonicalDomain, evidence: &Evidence) -> Result<()> {
    let ext = domain.external().to_vec();
    let outcome: Vec<(String, usize)> = domain.children().iter().map(|c| (c.id.clone(), c.cardinality)).collect();
    let table = evidence.observational(&ids(&outcome), &ids(&ext))?;
    let radices: Vec<usize> = ext.iter().map(|(_, c)| *c).collect();
    b.blocks(RowKind::Observational, &ext, &outcome, &table, |u, cv| {
        let cfg = cv.iter().zip(&radices).fold(0, |acc, (&v, &k)| acc * k + v);
        domain.joint_response(u, cfg)
    });
    Ok(())
}

/// Observational system of a two-child chain from `P(Y1, Y2 | X)`.
pub fn build_semimarkovian_observational(domain: &CanonicalDomain, evidence: &Evidence) -> Result<ConstraintSystem> {
    chain(domain)?;
    let mut b = Builder::new(domain);
    observational_rows(&mut b, domain, evidence)?;
    Ok(b.finish())
}

/// Experimental system of a two-child chain from `P(Y1 | do(X))` and
/// `P(Y2 | do(Y1))`.
pub fn build_semimarkovian_experimental(domain: &CanonicalDomain, evidence: &Evidence) -> Result<ConstraintSystem> {
    chain(domain)?;
    let mut b = Builder::new(domain);
    for (i, c) in domain.children().iter().enumerate() {
        let (kind, table) = evidence_for(evidence, &c.id, &c.parents, false)?;
        b.mechanism_blocks(kind, i, &table);
    }
    Ok(b.finish())
}

/// Observational rows followed by the `P(Y2 | do(Y1))` rows.
pub fn build_semimarkovian_combined(domain: &CanonicalDomain, evidence: &Evidence) -> Result<ConstraintSystem> {
    chain(domain)?;
    let mut b = Builder::new(domain);
    observational_rows(&mut b, domain, evidence)?;
    let c = &domain.children()[1];
    let (kind, table) = evidence_for(evidence, &c.id, &c.parents, false)?;
    b.mechanism_blocks(kind, 1, &table);
    Ok(b.finish())
}

/// Rank of `rows` (row-major over `columns`) with the all-ones row
/// appended, by fraction-free Gaussian elimination over the integers.
pub fn exact_rank_of(matrix: &[u8], columns: usize) -> usize {
    let mut m: Vec<Vec<BigInt>> = matrix
        .chunks(columns.max(1))
        .filter(|_| columns > 0)
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect();
    if columns == 0 {
        return 0;
    }
    m.push(vec![BigInt::from(1); columns]);
    let rows = m.len();
    let mut rank = 0;
    let mut prev = BigInt::from(1);
    for col in 0..columns {
        let Some(p) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        for r in rank + 1..rows {
            for c in col + 1..columns {
                let v = (&m[rank][col] * &m[r][c] - &m[r][col] * &m[rank][c]) / &prev;
                m[r][c] = v;
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[rank][col].abs();
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Why a support yields no point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Infeasible {
    RankDeficient,
    Inconsistent,
    Negative,
}

/// A probability vector over the states of one exogenous variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremePoint {
    pub exogenous: String,
    pub probabilities: Vec<f64>,
    pub support: Vec<usize>,
}

impl ExtremePoint {
    pub fn new(exogenous: impl Into<String>, probabilities: Vec<f64>) -> Self {
        let support = probabilities
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > SUPPORT_TOL)
            .map(|(i, _)| i)
            .collect();
        Self {
            exogenous: exogenous.into(),
            probabilities,
            support,
        }
    }

    pub fn point_mass(exogenous: impl Into<String>, size: usize, state: usize) -> Self {
        let mut p = vec![0.0; size];
        p[state] = 1.0;
        Self::new(exogenous, p)
    }

    /// Largest absolute coordinate difference.
    pub fn distance(&self, other: &Self) -> f64 {
        self.probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Solved {
    Point(ExtremePoint),
    Infeasible(Infeasible),
}

/// Reusable buffers for [`ConstraintSystem::solve_support_with`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    a: Vec<f64>,
    x: Vec<f64>,
    pivots: Vec<usize>,
}

impl ConstraintSystem {
    fn from_parts(
        exogenous: String,
        columns: usize,
        matrix: Vec<u8>,
        rhs: Vec<f64>,
        row_labels: Vec<RowLabel>,
        col_labels: Vec<usize>,
        blocks: Vec<Range<usize>>,
    ) -> Self {
        let rank = exact_rank_of(&matrix, columns);
        Self {
            exogenous,
            columns,
            matrix,
            rhs,
            row_labels,
            col_labels,
            blocks,
            rank,
        }
    }

    /// A system from explicit parts, one block per row unless `blocks` is
    /// given. Entries must be 0 or 1.
    pub fn new(
        exogenous: impl Into<String>,
        columns: usize,
        matrix: Vec<u8>,
        rhs: Vec<f64>,
        blocks: Option<Vec<Range<usize>>>,
    ) -> Result<Self> {
        let rows = rhs.len();
        if matrix.len() != rows * columns {
            return Err(Error::Shape {
                expected: rows * columns,
                found: matrix.len(),
            });
        }
        if matrix.iter().any(|&x| x > 1) {
            return Err(Error::InvalidEvidence("coefficients must be 0 or 1".into()));
        }
        let labels = (0..rows)
            .map(|r| RowLabel {
                kind: RowKind::Observational,
                context: vec![],
                outcome: vec![("row".into(), r)],
            })
            .collect();
        Ok(Self::from_parts(
            exogenous.into(),
            columns,
            matrix,
            rhs,
            labels,
            (0..columns).collect(),
            blocks.unwrap_or_else(|| (0..rows).map(|r| r..r + 1).collect()),
        ))
    }

    pub fn exogenous(&self) -> &str {
        &self.exogenous
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.matrix[r * self.columns..(r + 1) * self.columns]
    }

    pub fn coefficient(&self, r: usize, c: usize) -> u8 {
        self.matrix[r * self.columns + c]
    }

    pub fn matrix(&self) -> &[u8] {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row_labels(&self) -> &[RowLabel] {
        &self.row_labels
    }

    /// Original canonical index of each column.
    pub fn col_labels(&self) -> &[usize] {
        &self.col_labels
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// Rank of the coefficient matrix together with the normalisation row.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Column `c` as a vector over rows.
    pub fn column(&self, c: usize) -> Vec<u8> {
        (0..self.rows()).map(|r| self.coefficient(r, c)).collect()
    }

    /// A copy keeping only the rows in `rows`.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let matrix = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        let mut blocks = Vec::new();
        for b in &self.blocks {
            let kept: Vec<usize> = rows.iter().filter(|r| b.contains(r)).copied().collect();
            if !kept.is_empty() {
                let start = rows.iter().position(|r| *r == kept[0]).expect("present");
                blocks.push(start..start + kept.len());
            }
        }
        Self::from_parts(
            self.exogenous.clone(),
            self.columns,
            matrix,
            rows.iter().map(|&r| self.rhs[r]).collect(),
            rows.iter().map(|&r| self.row_labels[r].clone()).collect(),
            self.col_labels.clone(),
            blocks,
        )
    }

    /// A copy keeping only the columns in `keep`.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let matrix = (0..self.rows())
            .flat_map(|r| keep.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.coefficient(r, c))
            .collect();
        Self::from_parts(
            self.exogenous.clone(),
            keep.len(),
            matrix,
            self.rhs.clone(),
            self.row_labels.clone(),
            keep.iter().map(|&c| self.col_labels[c]).collect(),
            self.blocks.clone(),
        )
    }

    /// Same matrix with a different right-hand side.
    pub fn with_rhs(&self, rhs: Vec<f64>) -> Result<Self> {
        if rhs.len() != self.rows() {
            return Err(Error::Shape {
                expected: self.rows(),
                found: rhs.len(),
            });
        }
        let mut s = self.clone();
        s.rhs = rhs;
        Ok(s)
    }

    /// Largest absolute violation of `A p = rhs` and `sum p = 1`.
    pub fn residual(&self, p: &[f64]) -> f64 {
        let mut worst = (p.iter().sum::<f64>() - 1.0).abs();
        for r in 0..self.rows() {
            let lhs: f64 = self.row(r).iter().zip(p).filter(|(&a, _)| a == 1).map(|(_, x)| x).sum();
            worst = worst.max((lhs - self.rhs[r]).abs());
        }
        worst
    }

    /// Whether `p` is a distribution satisfying the system within `tol`.
    pub fn is_satisfied_by(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.columns && p.iter().all(|&x| x >= -tol) && self.residual(p) <= tol
    }

    /// Solves the system restricted to the columns in `support`, with every
    /// other state fixed at zero.
    pub fn solve_support(&self, support: &[usize]) -> Result<Solved> {
        self.solve_support_with(support, &mut Scratch::default())
    }

    pub fn solve_support_with(&self, support: &[usize], scratch: &mut Scratch) -> Result<Solved> {
        if let Some(&bad) = support.iter().find(|&&i| i >= self.columns) {
            return Err(Error::SupportOutOfRange {
                index: bad,
                columns: self.columns,
            });
        }
        let k = support.len();
        let m = self.rows() + 1;
        if k == 0 || k > self.rank {
            return Ok(Solved::Infeasible(Infeasible::RankDeficient));
        }
        let w = k + 1;
        let a = &mut scratch.a;
        a.clear();
        a.resize(m * w, 0.0);
        for r in 0..self.rows() {
            let row = self.row(r);
            for (j, &c) in support.iter().enumerate() {
                a[r * w + j] = f64::from(row[c]);
            }
            a[r * w + k] = self.rhs[r];
        }
        for j in 0..w {
            a[(m - 1) * w + j] = 1.0;
        }

        // Gauss-Jordan with partial pivoting.
        let pivots = &mut scratch.pivots;
        pivots.clear();
        let mut row = 0;
        for col in 0..k {
            let (best, mag) = (row..m)
                .map(|r| (r, a[r * w + col].abs()))
                .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if mag <= PIVOT_TOL {
                return Ok(Solved::Infeasible(Infeasible::RankDeficient));
            }
            if best != row {
                for j in 0..w {
                    a.swap(best * w + j, row * w + j);
                }
            }
            let inv = 1.0 / a[row * w + col];
            for j in col..w {
                a[row * w + j] *= inv;
            }
            for r in 0..m {
                if r != row {
                    let f = a[r * w + col];
                    if f != 0.0 {
                        for j in col..w {
                            a[r * w + j] -= f * a[row * w + j];
                        }
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }

        let x = &mut scratch.x;
        x.clear();
        x.extend((0..k).map(|i| a[i * w + k]));

        // Residual against the original rows, including normalisation.
        let mut worst = (x.iter().sum::<f64>() - 1.0).abs();
        for r in 0..self.rows() {
            let row = self.row(r);
            let lhs: f64 = support.iter().zip(x.iter()).filter(|(&c, _)| row[c] == 1).map(|(_, v)| v).sum();
            worst = worst.max((lhs - self.rhs[r]).abs());
        }
        if worst > RESIDUAL_TOL {
            return Ok(Solved::Infeasible(Infeasible::Inconsistent));
        }
        if x.iter().any(|&v| v < -NEGATIVE_TOL) {
            return Ok(Solved::Infeasible(Infeasible::Negative));
        }
        let mut p = vec![0.0; self.columns];
        for (&c, &v) in support.iter().zip(x.iter()) {
            p[c] = v.max(0.0);
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        Ok(Solved::Point(ExtremePoint::new(self.exogenous.clone(), p)))
    }

    /// Writes the system as CSV: one line per constraint, one column per
    /// state, then the right-hand side.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["constraint".to_string()];
        header.extend(self.col_labels.iter().map(|c| format!("{}_{c}", self.exogenous)));
        header.push("rhs".into());
        w.write_record(&header)?;
        for r in 0..self.rows() {
            let mut rec = vec![self.row_labels[r].to_string()];
            rec.extend(self.row(r).iter().map(|x| x.to_string()));
            rec.push(format!("{}", self.rhs[r]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable listing of the equations.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows() {
            let terms: Vec<String> = (0..self.columns)
                .filter(|&c| self.coefficient(r, c) == 1)
                .map(|c| format!("P(u{})", self.col_labels[c]))
                .collect();
            let _ = writeln!(s, "{} = {} = {}", self.row_labels[r], terms.join(" + "), self.rhs[r]);
        }
        s
    }

    /// Map from row label text to row index.
    pub fn row_index(&self) -> HashMap<String, usize> {
        self.row_labels.iter().enumerate().map(|(i, l)| (l.to_string(), i)).collect()
    }
}
