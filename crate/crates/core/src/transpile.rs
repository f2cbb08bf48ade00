//! Translation of instruction sequences into the block IR.

use alloc::vec::Vec;

use crate::concrete::ACCESS_BYTES;
use crate::ir::{Expr, IrBlock, IrProgram, IrStmt, Terminator, Var};
use crate::isa::{Instruction, MalformedProgram, MemOperand, Operand, Program, Reg};

fn reg(r: Reg) -> Expr {
    match Var::of_reg(r) {
        Some(v) => Expr::var(v),
        None => Expr::c64(0),
    }
}

fn operand(o: Operand) -> Expr {
    match o {
        Operand::Reg(r) => reg(r),
        Operand::Imm(v) => Expr::c64(v),
    }
}

/// Address expression of a memory operand.
pub fn address(m: &MemOperand) -> Expr {
    Expr::add(reg(m.base), Expr::c64(m.displacement() as u64))
}

fn assign(out: &mut Vec<IrStmt>, rd: Reg, e: Expr) {
    // writes to the zero register vanish
    if let Some(v) = Var::of_reg(rd) {
        out.push(IrStmt::Assign(v, e));
    }
}

/// One block per instruction, labelled by its index. Falling off the last
/// instruction halts; a branch to the end of the program either halts
/// directly or, for conditional branches, targets an extra `HALT` block
/// labelled with the program length.
pub fn transpile(program: &Program) -> Result<IrProgram, MalformedProgram> {
    program.validate()?;
    let len = program.len();
    let mut blocks = Vec::with_capacity(len + 1);
    let mut needs_exit = false;
    let goto = |target: usize| if target == len { Terminator::Halt } else { Terminator::Jmp(target) };
    for (i, insn) in program.instructions().iter().enumerate() {
        let mut stmts = Vec::new();
        let mut term = goto(i + 1);
        let mut cjmp = |cond: Expr, offset: u32| -> Terminator {
            let target = i + offset as usize;
            match cond.as_bool() {
                Some(true) => goto(target),
                Some(false) => goto(i + 1),
                None => {
                    needs_exit |= target == len || i + 1 == len;
                    Terminator::CJmp(cond, target, i + 1)
                }
            }
        };
        match *insn {
            Instruction::Ldr { rt, addr } => {
                let load = Expr::load(Expr::var(Var::M), address(&addr), ACCESS_BYTES);
                match Var::of_reg(rt) {
                    Some(v) => stmts.push(IrStmt::Assign(v, load)),
                    // the access still happens
                    None => stmts.push(IrStmt::Assign(Var::DISCARD, load)),
                }
            }
            Instruction::Str { rt, addr } => {
                let m = Expr::var(Var::M);
                stmts.push(IrStmt::Assign(Var::M, Expr::store(m, address(&addr), reg(rt), ACCESS_BYTES)));
            }
            Instruction::Mov { rd, src } => assign(&mut stmts, rd, operand(src)),
            Instruction::Add { rd, rn, rm } => assign(&mut stmts, rd, Expr::add(reg(rn), operand(rm))),
            Instruction::Sub { rd, rn, rm } => assign(&mut stmts, rd, Expr::sub(reg(rn), operand(rm))),
            Instruction::Mul { rd, rn, rm } => assign(&mut stmts, rd, Expr::mul(reg(rn), reg(rm))),
            Instruction::Cmp { rn, rm } => {
                let (a, b) = (reg(rn), operand(rm));
                stmts.push(IrStmt::Assign(Var::Z, Expr::eq(a.clone(), b.clone())));
                let top = Expr::lshr(Expr::sub(a, b), Expr::c64(63));
                stmts.push(IrStmt::Assign(Var::N, Expr::eq(top, Expr::c64(1))));
            }
            Instruction::B { offset } => term = goto(i + offset as usize),
            Instruction::BEq { offset } => term = cjmp(Expr::var(Var::Z), offset),
            Instruction::Cbz { rt, offset } => term = cjmp(Expr::eq(reg(rt), Expr::c64(0)), offset),
            Instruction::Cbnz { rt, offset } => term = cjmp(Expr::ne(reg(rt), Expr::c64(0)), offset),
            Instruction::Nop => {}
        }
        blocks.push(IrBlock { label: i, source: Some(i), stmts, term });
    }
    if len == 0 {
        blocks.push(IrBlock { label: 0, source: None, stmts: Vec::new(), term: Terminator::Halt });
    } else if needs_exit {
        blocks.push(IrBlock { label: len, source: None, stmts: Vec::new(), term: Terminator::Halt });
    }
    Ok(IrProgram { blocks })
}
