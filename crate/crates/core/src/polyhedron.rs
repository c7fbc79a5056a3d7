//! Sparse linear constraint systems `{x : lo ≤ x ≤ hi, A x (≤ | = | ≥) b}`.

use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

impl RowKind {
    fn symbol(self) -> &'static str {
        match self {
            Self::Le => "<=",
            Self::Ge => ">=",
            Self::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
    /// Short family tag used by the text export.
    pub tag: &'static str,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.kind {
            RowKind::Le => (act - self.rhs).max(0.0),
            RowKind::Ge => (self.rhs - act).max(0.0),
            RowKind::Eq => (act - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Polyhedron {
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

impl Polyhedron {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `[lo, hi]`; either bound may be infinite.
    pub fn add_var(&mut self, lo: f64, hi: f64) -> usize {
        assert!(lo <= hi, "empty variable range [{lo}, {hi}]");
        self.lower.push(lo);
        self.upper.push(hi);
        self.lower.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64, tag: &'static str) {
        debug_assert!(coeffs.iter().all(|&(j, a)| j < self.lower.len() && a.is_finite()));
        self.rows.push(Row {
            coeffs,
            kind,
            rhs,
            tag,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [Row] {
        &mut self.rows
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        assert!(lo <= hi);
        self.lower[var] = lo;
        self.upper[var] = hi;
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Largest violation restricted to rows carrying `tag`.
    pub fn max_violation_tagged(&self, x: &[f64], tag: &str) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.tag == tag)
            .map(|r| r.violation(x))
            .fold(0.0, f64::max)
    }

    /// Plain-text dump: a header, one `bound` line per variable, then one
    /// line per row followed by its `(row, col, value)` triplets.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# polyhedron vars={} rows={}", self.num_vars(), self.num_rows())?;
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            writeln!(w, "bound {j} {lo} {hi}")?;
        }
        for (i, row) in self.rows.iter().enumerate() {
            writeln!(w, "row {i} {} {} {}", row.tag, row.kind.symbol(), row.rhs)?;
            for &(j, a) in &row.coeffs {
                writeln!(w, "{i} {j} {a}")?;
            }
        }
        Ok(())
    }
}
