//! Indicator constraints and Boolean connectives as plain linear rows.

use serde::{Deserialize, Serialize};

use super::model::{Indicator, LinExpr, MilpModel, Sense, VarId, VarKind};
use super::OptError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigMConfig {
    /// Fallback constant when a row's bound cannot be derived.
    pub m: f64,
    /// Margin used to express strict inequalities.
    pub epsilon: f64,
}

impl Default for BigMConfig {
    fn default() -> Self {
        Self {
            m: 1e4,
            epsilon: 1e-6,
        }
    }
}

impl BigMConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        if !(self.m > 0.0 && self.epsilon > 0.0 && self.epsilon * 1e3 < self.m) {
            return Err(OptError::InvalidModel(format!(
                "big-M config needs M > 0, eps > 0, eps << M (got M={}, eps={})",
                self.m, self.epsilon
            )));
        }
        Ok(())
    }
}

fn require_binary(model: &MilpModel, v: VarId) -> Result<(), OptError> {
    match model.vars.get(v.0) {
        Some(var) if var.kind == VarKind::Binary => Ok(()),
        Some(var) => Err(OptError::InvalidModel(format!("{} is not binary", var.name))),
        None => Err(OptError::InvalidModel(format!("missing variable {}", v.0))),
    }
}

/// Adds `binary = trigger -> expr <= rhs` using the constant `big_m`.
///
/// Fails with `BigMTooSmall` when interval arithmetic over the declared
/// bounds shows the relaxed row could still cut off points.
pub fn encode_indicator(
    model: &mut MilpModel,
    name: impl Into<String>,
    binary: VarId,
    trigger: bool,
    expr: LinExpr,
    rhs: f64,
    big_m: f64,
) -> Result<usize, OptError> {
    require_binary(model, binary)?;
    let name = name.into();
    let expr = expr.normalized();
    let rhs = rhs - expr.constant;
    let mut lhs = LinExpr {
        terms: expr.terms.clone(),
        constant: 0.0,
    };
    let (_, reach) = lhs.bounds(model);
    if !(reach <= rhs + big_m + 1e-9 * (1.0 + big_m.abs())) {
        return Err(OptError::BigMTooSmall {
            row: name,
            m: big_m,
            reach,
        });
    }
    // trigger = 1: expr + M b <= rhs + M ; trigger = 0: expr - M b <= rhs
    let row_rhs = if trigger {
        lhs.add_term(binary, big_m);
        rhs + big_m
    } else {
        lhs.add_term(binary, -big_m);
        rhs
    };
    let row = model.add_constraint(name, lhs, Sense::Le, row_rhs);
    model.indicators.push(Indicator {
        binary,
        trigger,
        expr: LinExpr {
            terms: expr.terms,
            constant: 0.0,
        },
        rhs,
        big_m,
        row,
    });
    Ok(row)
}

/// As [`encode_indicator`] with M derived from the variable bounds of `expr`
/// (the smallest M that keeps the relaxed row vacuous). Falls back to
/// `cfg.m` when the expression is unbounded above.
pub fn encode_indicator_tight(
    model: &mut MilpModel,
    name: impl Into<String>,
    binary: VarId,
    trigger: bool,
    expr: LinExpr,
    rhs: f64,
    cfg: &BigMConfig,
) -> Result<usize, OptError> {
    let (_, hi) = expr.bounds(model);
    let m = if hi.is_finite() {
        (hi - rhs).max(0.0) + cfg.epsilon
    } else {
        log::warn!("indicator row without finite bound, using fallback M={}", cfg.m);
        cfg.m
    };
    encode_indicator(model, name, binary, trigger, expr, rhs, m)
}

/// `binary = trigger -> expr > rhs`, encoded as `expr >= rhs + eps`.
pub fn encode_indicator_gt(
    model: &mut MilpModel,
    name: impl Into<String>,
    binary: VarId,
    trigger: bool,
    expr: LinExpr,
    rhs: f64,
    cfg: &BigMConfig,
) -> Result<usize, OptError> {
    let mut neg = LinExpr::new();
    neg.add_scaled(&expr, -1.0);
    encode_indicator_tight(model, name, binary, trigger, neg, -rhs - cfg.epsilon, cfg)
}

/// `out = AND(ins)`.
pub fn encode_and(model: &mut MilpModel, out: VarId, ins: &[VarId]) -> Result<(), OptError> {
    require_binary(model, out)?;
    let mut sum = LinExpr::var(out);
    for (i, &v) in ins.iter().enumerate() {
        require_binary(model, v)?;
        model.add_constraint(
            format!("and_le_{}_{i}", out.0),
            LinExpr::var(out).with_term(v, -1.0),
            Sense::Le,
            0.0,
        );
        sum.add_term(v, -1.0);
    }
    // out >= sum(ins) - (n - 1)
    model.add_constraint(
        format!("and_ge_{}", out.0),
        sum,
        Sense::Ge,
        1.0 - ins.len() as f64,
    );
    Ok(())
}

/// `out = OR(ins)`.
pub fn encode_or(model: &mut MilpModel, out: VarId, ins: &[VarId]) -> Result<(), OptError> {
    require_binary(model, out)?;
    let mut sum = LinExpr::var(out);
    for (i, &v) in ins.iter().enumerate() {
        require_binary(model, v)?;
        model.add_constraint(
            format!("or_ge_{}_{i}", out.0),
            LinExpr::var(out).with_term(v, -1.0),
            Sense::Ge,
            0.0,
        );
        sum.add_term(v, -1.0);
    }
    model.add_constraint(format!("or_le_{}", out.0), sum, Sense::Le, 0.0);
    Ok(())
}
