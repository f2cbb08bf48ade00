//! Block-structured intermediate representation: expressions, programs,
//! evaluation and a reference interpreter.

mod eval;
mod expr;
mod interp;
mod parse;
mod program;

pub use eval::{eval, eval_bool, eval_partial, eval_with, AccessHook, Env, EvalError, MemValue, Value};
pub use expr::{mask, BinOp, Expr, IrExpr, Shared, Ty, TypeError, UnOp, Var, VarName};
pub use interp::{run_ir, IrRun};
pub use parse::{parse_expr, parse_var, ParseCtx, ParseError};
pub use program::{IrBlock, IrError, IrProgram, IrStmt, Label, Terminator};
