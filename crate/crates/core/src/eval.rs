//! Four-state expression evaluation over resolved expressions.
//!
//! Sizing follows the usual context rules: arithmetic and bitwise operands
//! are extended to the width of the enclosing context, relational operands
//! to the wider of the two, and shift amounts and concatenation items are
//! self-determined. All values are unsigned.

use std::cmp::Ordering;

use crate::hdl::ast::{BinaryOp, CaseKind, UnaryOp};
use crate::hdl::elab::{EExpr, LValue, SignalId, SignalRef, TExpr};
use crate::logic::{Logic, LogicVec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unsupported operator `{0}`")]
    UnsupportedOperator(String),
    #[error("signal `{0}` is not recorded in the waveform")]
    SignalNotRecorded(String),
    #[error("cycle {cycle} is out of range (waveform has {count} cycles)")]
    CycleOutOfRange { cycle: i64, count: usize },
}

/// Source of signal values for evaluation.
pub trait Env {
    fn value(&self, s: SignalId) -> Result<LogicVec, EvalError>;
}

impl<F: Fn(SignalId) -> Result<LogicVec, EvalError>> Env for F {
    fn value(&self, s: SignalId) -> Result<LogicVec, EvalError> {
        self(s)
    }
}

/// Evaluates `e` in a context of width `ctx`; the result has width
/// `max(e.width, ctx)`.
pub fn eval<E: Env + ?Sized>(e: &TExpr, ctx: u32, env: &E) -> Result<LogicVec, EvalError> {
    let w = e.width.max(ctx);
    let v = match &e.kind {
        EExpr::Sig(s) => env.value(*s)?.resize(w),
        EExpr::Const(v) => v.resize(w),
        EExpr::Fill(b) => LogicVec::filled(w, *b),
        EExpr::Bit { sig, index, lsb } => {
            let v = env.value(*sig)?;
            let i = eval(index, 0, env)?;
            let bit = match i.to_u64() {
                Some(i) => {
                    let k = i as i64 - lsb;
                    if k < 0 || k >= v.width() as i64 {
                        Logic::X
                    } else {
                        v.get(k as u32)
                    }
                }
                None => Logic::X,
            };
            LogicVec::filled(1, bit).resize(w)
        }
        EExpr::Part { sig, msb, lsb } => env.value(*sig)?.slice(*msb, *lsb).resize(w),
        EExpr::Unary { op, arg } => match op {
            UnaryOp::Plus => eval(arg, w, env)?,
            UnaryOp::Neg => eval(arg, w, env)?.neg(),
            UnaryOp::Not => eval(arg, w, env)?.not(),
            UnaryOp::LogNot => logic_vec(not_logic(eval(arg, 0, env)?.truthiness())).resize(w),
            _ => {
                let a = eval(arg, 0, env)?;
                let r = match op {
                    UnaryOp::RedAnd => reduce_and(&a),
                    UnaryOp::RedNand => not_logic(reduce_and(&a)),
                    UnaryOp::RedOr => a.truthiness(),
                    UnaryOp::RedNor => not_logic(a.truthiness()),
                    UnaryOp::RedXor => reduce_xor(&a),
                    _ => not_logic(reduce_xor(&a)),
                };
                logic_vec(r).resize(w)
            }
        },
        EExpr::Binary { op, lhs, rhs } => binary(*op, lhs, rhs, w, env)?,
        EExpr::Ternary { cond, then_, else_ } => {
            let c = eval(cond, 0, env)?.truthiness();
            match c {
                Logic::One => eval(then_, w, env)?,
                Logic::Zero => eval(else_, w, env)?,
                _ => merge_unknown(&eval(then_, w, env)?, &eval(else_, w, env)?),
            }
        }
        EExpr::Concat(items) => concat(items, env)?.resize(w),
        EExpr::Replicate { count, items } => {
            let one = concat(items, env)?;
            let mut acc = one.clone();
            for _ in 1..*count {
                acc = acc.concat(&one);
            }
            acc.resize(w)
        }
    };
    Ok(v)
}

fn concat<E: Env + ?Sized>(items: &[TExpr], env: &E) -> Result<LogicVec, EvalError> {
    let mut acc: Option<LogicVec> = None;
    for it in items {
        let v = eval(it, 0, env)?.resize(it.width);
        acc = Some(match acc {
            None => v,
            Some(hi) => hi.concat(&v),
        });
    }
    Ok(acc.unwrap_or_else(|| LogicVec::zeros(0)))
}

fn binary<E: Env + ?Sized>(op: BinaryOp, lhs: &TExpr, rhs: &TExpr, w: u32, env: &E) -> Result<LogicVec, EvalError> {
    use BinaryOp::*;
    Ok(match op {
        Add => eval(lhs, w, env)?.add(&eval(rhs, w, env)?),
        Sub => eval(lhs, w, env)?.sub(&eval(rhs, w, env)?),
        And => eval(lhs, w, env)?.and(&eval(rhs, w, env)?),
        Or => eval(lhs, w, env)?.or(&eval(rhs, w, env)?),
        Xor => eval(lhs, w, env)?.xor(&eval(rhs, w, env)?),
        Xnor => eval(lhs, w, env)?.xor(&eval(rhs, w, env)?).not(),
        Mul | Div | Mod => {
            if w > 128 {
                return Err(EvalError::UnsupportedOperator(format!("{} wider than 128 bits", op.symbol())));
            }
            let (a, b) = (eval(lhs, w, env)?, eval(rhs, w, env)?);
            match (a.to_u128(), b.to_u128()) {
                (Some(a), Some(b)) => {
                    let r = match op {
                        Mul => Some(a.wrapping_mul(b)),
                        Div => a.checked_div(b),
                        _ => a.checked_rem(b),
                    };
                    r.map_or_else(|| LogicVec::unknown(w), |r| LogicVec::from_u128(r, w))
                }
                _ => LogicVec::unknown(w),
            }
        }
        Pow => return Err(EvalError::UnsupportedOperator("**".into())),
        LogAnd | LogOr => {
            let a = eval(lhs, 0, env)?.truthiness();
            let b = eval(rhs, 0, env)?.truthiness();
            let r = if op == LogAnd {
                match (a, b) {
                    (Logic::Zero, _) | (_, Logic::Zero) => Logic::Zero,
                    (Logic::One, Logic::One) => Logic::One,
                    _ => Logic::X,
                }
            } else {
                match (a, b) {
                    (Logic::One, _) | (_, Logic::One) => Logic::One,
                    (Logic::Zero, Logic::Zero) => Logic::Zero,
                    _ => Logic::X,
                }
            };
            logic_vec(r).resize(w)
        }
        CaseEq | CaseNe => {
            let cw = lhs.width.max(rhs.width);
            let eq = eval(lhs, cw, env)?.case_eq(&eval(rhs, cw, env)?);
            LogicVec::from_bool(eq == (op == CaseEq)).resize(w)
        }
        Eq | Ne | Lt | Le | Gt | Ge => {
            let cw = lhs.width.max(rhs.width);
            let (a, b) = (eval(lhs, cw, env)?, eval(rhs, cw, env)?);
            let r = match a.cmp_known(&b) {
                None => Logic::X,
                Some(o) => {
                    let t = match op {
                        Eq => o == Ordering::Equal,
                        Ne => o != Ordering::Equal,
                        Lt => o == Ordering::Less,
                        Le => o != Ordering::Greater,
                        Gt => o == Ordering::Greater,
                        _ => o != Ordering::Less,
                    };
                    if t {
                        Logic::One
                    } else {
                        Logic::Zero
                    }
                }
            };
            logic_vec(r).resize(w)
        }
        Shl | Shr | AShl | AShr => {
            let a = eval(lhs, w, env)?;
            match eval(rhs, 0, env)?.to_u128() {
                None => LogicVec::unknown(w),
                Some(n) => {
                    let n = n.min(u64::MAX as u128) as u64;
                    if matches!(op, Shl | AShl) {
                        a.shl(n)
                    } else {
                        a.shr(n)
                    }
                }
            }
        }
    })
}

fn logic_vec(b: Logic) -> LogicVec {
    LogicVec::filled(1, b)
}

fn not_logic(b: Logic) -> Logic {
    match b {
        Logic::Zero => Logic::One,
        Logic::One => Logic::Zero,
        _ => Logic::X,
    }
}

fn reduce_and(a: &LogicVec) -> Logic {
    let bits: Vec<Logic> = (0..a.width()).map(|i| a.get(i)).collect();
    if bits.contains(&Logic::Zero) {
        Logic::Zero
    } else if bits.iter().all(|b| *b == Logic::One) {
        Logic::One
    } else {
        Logic::X
    }
}

fn reduce_xor(a: &LogicVec) -> Logic {
    if a.has_unknown() {
        return Logic::X;
    }
    let ones = (0..a.width()).filter(|i| a.get(*i) == Logic::One).count();
    if ones % 2 == 1 {
        Logic::One
    } else {
        Logic::Zero
    }
}

/// Bits that agree keep their value; disagreeing or unknown bits become X.
fn merge_unknown(a: &LogicVec, b: &LogicVec) -> LogicVec {
    let w = a.width().max(b.width());
    let mut out = LogicVec::zeros(w);
    for i in 0..w {
        let (x, y) = (a.get(i), b.get(i));
        out.set(i, if x == y && x.is_known() { x } else { Logic::X });
    }
    out
}

/// Whether `label` selects `subject` under the given case flavor. Label
/// bits that are Z (casez) or X/Z (casex) are wildcards. Any unknown
/// subject bit outside the wildcard positions yields X.
pub fn case_match(kind: CaseKind, subject: &LogicVec, label: &LogicVec) -> Logic {
    let w = subject.width().max(label.width());
    let (s, l) = (subject.resize(w), label.resize(w));
    let mut unknown = false;
    let mut mismatch = false;
    for i in 0..w {
        let (sb, lb) = (s.get(i), l.get(i));
        let wildcard = match kind {
            CaseKind::Case => false,
            CaseKind::Casez => lb == Logic::Z,
            CaseKind::Casex => !lb.is_known(),
        };
        if wildcard {
            continue;
        }
        if !sb.is_known() {
            unknown = true;
        } else if !lb.is_known() || sb != lb {
            mismatch = true;
        }
    }
    if unknown {
        Logic::X
    } else if mismatch {
        Logic::Zero
    } else {
        Logic::One
    }
}

/// Evaluates a case subject and its labels at their common width.
pub fn case_width(subject: &TExpr, items: &[(Vec<TExpr>, impl Sized)]) -> u32 {
    items
        .iter()
        .flat_map(|(labels, _)| labels.iter().map(|l| l.width))
        .fold(subject.width, u32::max)
}

/// Computes the new full values of the signals written by `lv` when it is
/// assigned `value`. `current` supplies the value before the write; a bit
/// select with an unknown or out-of-range index writes nothing.
pub fn assign_lvalue<E: Env + ?Sized>(
    lv: &LValue,
    value: &LogicVec,
    signals: &[SignalRef],
    current: &E,
) -> Result<Vec<(SignalId, LogicVec)>, EvalError> {
    let mut out = Vec::new();
    let total = lv.width(signals);
    let v = value.resize(total);
    write_parts(lv, &v, 0, signals, current, &mut out)?;
    Ok(out)
}

fn write_parts<E: Env + ?Sized>(
    lv: &LValue,
    v: &LogicVec,
    offset: u32,
    signals: &[SignalRef],
    current: &E,
    out: &mut Vec<(SignalId, LogicVec)>,
) -> Result<(), EvalError> {
    let w = lv.width(signals);
    let part = v.slice(offset + w - 1, offset);
    // later writes in one concat see earlier ones
    let cur = |s: SignalId, out: &Vec<(SignalId, LogicVec)>| -> Result<LogicVec, EvalError> {
        match out.iter().rev().find(|(x, _)| *x == s) {
            Some((_, v)) => Ok(v.clone()),
            None => current.value(s),
        }
    };
    match lv {
        LValue::Whole(s) => out.push((*s, part)),
        LValue::Part { sig, msb, lsb } => {
            let mut c = cur(*sig, out)?;
            for i in *lsb..=*msb {
                c.set(i, part.get(i - lsb));
            }
            out.push((*sig, c));
        }
        LValue::Bit { sig, index, lsb } => {
            let i = eval(index, 0, current)?;
            if let Some(i) = i.to_u64() {
                let k = i as i64 - lsb;
                if k >= 0 && k < signals[*sig].width as i64 {
                    let mut c = cur(*sig, out)?;
                    c.set(k as u32, part.get(0));
                    out.push((*sig, c));
                }
            }
        }
        LValue::Concat(items) => {
            let mut off = offset + w;
            for it in items {
                off -= it.width(signals);
                write_parts(it, v, off, signals, current, out)?;
            }
        }
    }
    Ok(())
}
