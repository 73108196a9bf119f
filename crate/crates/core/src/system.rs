//! Solver-neutral container for an optimisation model.
//!
//! A [`ConstraintSystem`] holds bounded variables with integrality marks,
//! sparse linear rows, nonlinear rows with analytic gradients, and a linear
//! objective. Backends read it; model builders (`des`, `opf`) write it.
//!
//! Nonlinear equality rows may be grouped into [`EqualityBlock`]s: square
//! subsystems paired with the variables they determine. Those dependent
//! variables must not appear in any linear row, so a backend can re-solve a
//! block by Newton's method without disturbing linear feasibility.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    pub fixed: Option<f64>,
}

impl Variable {
    /// Declared bounds intersected with the fixed value, if any.
    pub fn bounds(&self) -> (f64, f64) {
        match self.fixed {
            Some(v) => (v, v),
            None => (self.lower, self.upper),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    /// Amount by which `value sense rhs` is violated (>= 0).
    pub fn violation(self, value: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (value - rhs).max(0.0),
            Sense::Ge => (rhs - value).max(0.0),
            Sense::Eq => (value - rhs).abs(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub name: String,
    /// Constraint family, used when reporting infeasibility.
    pub family: &'static str,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * x[v.0]).sum()
    }
}

/// Smooth scalar function of a few model variables.
pub trait NonlinearFunction: Send + Sync + fmt::Debug {
    /// Variables the function depends on. Gradients are reported in this order.
    fn vars(&self) -> &[VarId];

    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient (aligned with [`NonlinearFunction::vars`]) into
    /// `grad` and returns the value.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone)]
pub struct NonlinearConstraint {
    pub name: String,
    pub family: &'static str,
    pub func: Arc<dyn NonlinearFunction>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct EqualityBlock {
    /// Indices into [`ConstraintSystem::nonlinear`]; all equality rows.
    pub rows: Vec<usize>,
    pub dependents: Vec<VarId>,
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintSystem {
    pub vars: Vec<Variable>,
    pub linear: Vec<LinearConstraint>,
    pub nonlinear: Vec<NonlinearConstraint>,
    pub blocks: Vec<EqualityBlock>,
    objective: Vec<f64>,
    pub objective_constant: f64,
}

impl ConstraintSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
    ) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind,
            fixed: None,
        });
        self.objective.push(0.0);
        VarId(self.vars.len() - 1)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, VarKind::Continuous)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn add_linear(
        &mut self,
        name: impl Into<String>,
        family: &'static str,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        self.linear.push(LinearConstraint {
            name: name.into(),
            family,
            terms,
            sense,
            rhs,
        });
        self.linear.len() - 1
    }

    pub fn add_nonlinear(
        &mut self,
        name: impl Into<String>,
        family: &'static str,
        func: Arc<dyn NonlinearFunction>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        self.nonlinear.push(NonlinearConstraint {
            name: name.into(),
            family,
            func,
            sense,
            rhs,
        });
        self.nonlinear.len() - 1
    }

    pub fn add_block(&mut self, rows: Vec<usize>, dependents: Vec<VarId>) {
        self.blocks.push(EqualityBlock { rows, dependents });
    }

    pub fn add_objective(&mut self, var: VarId, coeff: f64) {
        self.objective[var.0] += coeff;
    }

    pub fn objective_coeff(&self, var: VarId) -> f64 {
        self.objective[var.0]
    }

    pub fn objective_coeffs(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Fixes a variable. The value must lie within the declared bounds
    /// (up to 1e-9, in which case it is clamped).
    pub fn fix(&mut self, id: VarId, value: f64) -> Result<()> {
        let var = &mut self.vars[id.0];
        const SLACK: f64 = 1e-9;
        if !(value >= var.lower - SLACK && value <= var.upper + SLACK) {
            return Err(Error::invalid(format!(
                "cannot fix `{}` to {value}: outside [{}, {}]",
                var.name, var.lower, var.upper
            )));
        }
        var.fixed = Some(value.clamp(var.lower, var.upper));
        Ok(())
    }

    pub fn unfix(&mut self, id: VarId) {
        self.vars[id.0].fixed = None;
    }

    pub fn integer_vars(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind.is_integral())
            .map(|(k, _)| VarId(k))
            .collect()
    }

    /// Appends a linear-only system, returning the variable offset applied
    /// to the appended variables.
    pub fn append(&mut self, other: ConstraintSystem) -> Result<usize> {
        if !other.nonlinear.is_empty() || !other.blocks.is_empty() {
            return Err(Error::invalid("only linear systems can be appended"));
        }
        let offset = self.vars.len();
        self.vars.extend(other.vars);
        self.objective.extend(other.objective);
        self.objective_constant += other.objective_constant;
        for mut row in other.linear {
            for t in &mut row.terms {
                t.0 = VarId(t.0 .0 + offset);
            }
            self.linear.push(row);
        }
        Ok(offset)
    }

    /// Checks that rows only reference declared variables and that
    /// equality blocks are square and disjoint from linear rows.
    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        for row in &self.linear {
            if let Some((v, _)) = row.terms.iter().find(|(v, _)| v.0 >= n) {
                return Err(Error::invalid(format!(
                    "row `{}` references undeclared variable {}",
                    row.name, v.0
                )));
            }
        }
        for row in &self.nonlinear {
            if let Some(v) = row.func.vars().iter().find(|v| v.0 >= n) {
                return Err(Error::invalid(format!(
                    "row `{}` references undeclared variable {}",
                    row.name, v.0
                )));
            }
        }
        let mut in_linear = HashSet::new();
        for row in &self.linear {
            in_linear.extend(row.terms.iter().map(|(v, _)| *v));
        }
        for (k, block) in self.blocks.iter().enumerate() {
            if block.rows.len() != block.dependents.len() {
                return Err(Error::invalid(format!(
                    "equality block {k} is not square ({} rows, {} dependents)",
                    block.rows.len(),
                    block.dependents.len()
                )));
            }
            for &r in &block.rows {
                let row = self
                    .nonlinear
                    .get(r)
                    .ok_or_else(|| Error::invalid(format!("block {k} row {r} out of range")))?;
                if row.sense != Sense::Eq {
                    return Err(Error::invalid(format!(
                        "block {k} row `{}` is not an equality",
                        row.name
                    )));
                }
            }
            if let Some(v) = block.dependents.iter().find(|v| in_linear.contains(v)) {
                return Err(Error::invalid(format!(
                    "dependent variable `{}` of block {k} appears in a linear row",
                    self.vars[v.0].name
                )));
            }
        }
        for v in &self.vars {
            let (lo, hi) = v.bounds();
            if lo > hi {
                return Err(Error::invalid(format!(
                    "variable `{}` has empty bounds",
                    v.name
                )));
            }
        }
        Ok(())
    }

    pub fn max_linear_violation(&self, x: &[f64]) -> f64 {
        self.linear
            .iter()
            .map(|r| r.sense.violation(r.activity(x), r.rhs))
            .fold(0.0, f64::max)
    }

    pub fn max_nonlinear_violation(&self, x: &[f64]) -> f64 {
        self.nonlinear
            .iter()
            .map(|r| r.sense.violation(r.func.value(x), r.rhs))
            .fold(0.0, f64::max)
    }

    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(x)
            .map(|(v, &xv)| {
                let (lo, hi) = v.bounds();
                (lo - xv).max(xv - hi).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Square(Vec<VarId>);

    impl NonlinearFunction for Square {
        fn vars(&self) -> &[VarId] {
            &self.0
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[self.0[0].0].powi(2)
        }
        fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = 2.0 * x[self.0[0].0];
            self.value(x)
        }
    }

    #[test]
    fn fix_respects_bounds() {
        let mut s = ConstraintSystem::new();
        let a = s.continuous("a", 0.0, 5.0);
        assert!(s.fix(a, 6.0).is_err());
        s.fix(a, 5.0 + 1e-12).unwrap();
        assert_eq!(s.var(a).bounds(), (5.0, 5.0));
        s.unfix(a);
        assert_eq!(s.var(a).bounds(), (0.0, 5.0));
    }

    #[test]
    fn append_offsets_rows() {
        let mut a = ConstraintSystem::new();
        a.continuous("x", 0.0, 1.0);
        let mut b = ConstraintSystem::new();
        let y = b.continuous("y", 0.0, 1.0);
        b.add_linear("r", "f", vec![(y, 1.0)], Sense::Le, 0.5);
        b.add_objective(y, 2.0);
        let off = a.append(b).unwrap();
        assert_eq!(off, 1);
        assert_eq!(a.linear[0].terms[0].0, VarId(1));
        assert_eq!(a.objective_value(&[0.0, 1.0]), 2.0);
        a.validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_references_and_blocks() {
        let mut s = ConstraintSystem::new();
        let x = s.continuous("x", -1.0, 1.0);
        s.add_linear("r", "f", vec![(VarId(7), 1.0)], Sense::Le, 1.0);
        assert!(s.validate().is_err());

        let mut s = ConstraintSystem::new();
        let x2 = s.continuous("x", -1.0, 1.0);
        let r = s.add_nonlinear("sq", "f", Arc::new(Square(vec![x2])), Sense::Eq, 0.25);
        s.add_block(vec![r], vec![x2]);
        s.validate().unwrap();
        s.add_linear("lin", "f", vec![(x2, 1.0)], Sense::Le, 1.0);
        assert!(s.validate().is_err());
        let _ = x;
    }

    #[test]
    fn violations() {
        let mut s = ConstraintSystem::new();
        let x = s.continuous("x", 0.0, 1.0);
        s.add_linear("r", "f", vec![(x, 1.0)], Sense::Ge, 0.5);
        s.add_nonlinear("sq", "f", Arc::new(Square(vec![x])), Sense::Le, 0.25);
        assert_eq!(s.max_linear_violation(&[0.25]), 0.25);
        assert!((s.max_nonlinear_violation(&[1.0]) - 0.75).abs() < 1e-15);
        assert_eq!(s.max_bound_violation(&[1.5]), 0.5);
    }
}
