//! Seeded program generators built from small composable recipes.
//!
//! All randomness comes from ChaCha8 seeded with a `u64`, so a seed names a
//! program on every platform.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::isa::{Instruction, MemOperand, Operand, Program, Reg, MAX_MEM_OFFSET};

pub type GenRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> GenRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generator of `T` values.
pub struct Gen<T>(Arc<dyn Fn(&mut GenRng) -> T + Send + Sync>);

impl<T> Clone for Gen<T> {
    fn clone(&self) -> Self {
        Gen(self.0.clone())
    }
}

impl<T: 'static> Gen<T> {
    pub fn new(f: impl Fn(&mut GenRng) -> T + Send + Sync + 'static) -> Self {
        Gen(Arc::new(f))
    }

    pub fn sample(&self, rng: &mut GenRng) -> T {
        (self.0)(rng)
    }

    pub fn sample_seeded(&self, seed: u64) -> T {
        self.sample(&mut rng_from_seed(seed))
    }

    pub fn constant(v: T) -> Self
    where
        T: Clone + Send + Sync,
    {
        Gen::new(move |_| v.clone())
    }

    pub fn elements(items: Vec<T>) -> Self
    where
        T: Clone + Send + Sync,
    {
        assert!(!items.is_empty(), "elements of an empty list");
        Gen::new(move |r| items[r.random_range(0..items.len())].clone())
    }

    pub fn map<U: 'static>(self, f: impl Fn(T) -> U + Send + Sync + 'static) -> Gen<U> {
        Gen::new(move |r| f(self.sample(r)))
    }

    pub fn pair<U: 'static>(self, other: Gen<U>) -> Gen<(T, U)> {
        Gen::new(move |r| {
            let a = self.sample(r);
            (a, other.sample(r))
        })
    }

    /// Sequencing: the second generator depends on the first value.
    pub fn and_then<U: 'static>(self, f: impl Fn(T) -> Gen<U> + Send + Sync + 'static) -> Gen<U> {
        Gen::new(move |r| {
            let a = self.sample(r);
            f(a).sample(r)
        })
    }

    /// Weighted choice. Zero weights are never picked.
    pub fn one_of_weighted(options: Vec<(u32, Gen<T>)>) -> Self {
        let total: u64 = options.iter().map(|(w, _)| *w as u64).sum();
        assert!(total > 0, "all weights are zero");
        Gen::new(move |r| {
            let mut x = r.random_range(0..total);
            for (w, g) in &options {
                if x < *w as u64 {
                    return g.sample(r);
                }
                x -= *w as u64;
            }
            unreachable!()
        })
    }

    pub fn list_of(self, len: Gen<usize>) -> Gen<Vec<T>> {
        Gen::new(move |r| {
            let n = len.sample(r);
            (0..n).map(|_| self.sample(r)).collect()
        })
    }
}

impl Gen<u64> {
    /// Uniform over `lo..=hi`.
    pub fn range(lo: u64, hi: u64) -> Self {
        Gen::new(move |r| r.random_range(lo..=hi))
    }
}

impl Gen<usize> {
    pub fn range_usize(lo: usize, hi: usize) -> Self {
        Gen::new(move |r| r.random_range(lo..=hi))
    }
}

/// Any of `x0..=x30`.
pub fn reg() -> Gen<Reg> {
    Gen::elements(Reg::all().collect())
}

/// A register other than `avoid`.
pub fn reg_except(avoid: Reg) -> Gen<Reg> {
    Gen::elements(Reg::all().filter(|r| *r != avoid).collect())
}

/// Memory operand: bare or with one of a few small immediates.
pub fn mem_operand() -> Gen<MemOperand> {
    reg().pair(Gen::elements(alloc::vec![None, Some(4), Some(8), Some(16)])).map(|(base, off)| MemOperand { base, offset: off })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassWeights {
    pub load_store: u32,
    pub arith: u32,
    pub compare_branch: u32,
    /// No conditional select exists in the modelled ISA; this class emits
    /// register moves.
    pub cond_select: u32,
    pub nop: u32,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights { load_store: 4, arith: 2, compare_branch: 2, cond_select: 0, nop: 1 }
    }
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights { load_store: 1, arith: 1, compare_branch: 1, cond_select: 1, nop: 1 }
    }

    pub fn is_valid(&self) -> bool {
        self.total() > 0
    }

    fn total(&self) -> u64 {
        [self.load_store, self.arith, self.compare_branch, self.cond_select, self.nop].iter().map(|w| *w as u64).sum()
    }
}

fn imm() -> Gen<u64> {
    Gen::range(0, 64).map(|x| x * 8)
}

fn operand() -> Gen<Operand> {
    Gen::one_of_weighted(alloc::vec![(1, reg().map(Operand::Reg)), (1, imm().map(Operand::Imm))])
}

fn load_store() -> Gen<Instruction> {
    Gen::one_of_weighted(alloc::vec![
        (3, reg().pair(mem_operand()).map(|(rt, addr)| Instruction::Ldr { rt, addr })),
        (1, reg().pair(mem_operand()).map(|(rt, addr)| Instruction::Str { rt, addr })),
    ])
}

fn arith() -> Gen<Instruction> {
    let rrr = reg().pair(reg());
    Gen::one_of_weighted(alloc::vec![
        (2, rrr.clone().pair(operand()).map(|((rd, rn), rm)| Instruction::Add { rd, rn, rm })),
        (1, rrr.clone().pair(operand()).map(|((rd, rn), rm)| Instruction::Sub { rd, rn, rm })),
        (1, rrr.pair(reg()).map(|((rd, rn), rm)| Instruction::Mul { rd, rn, rm })),
    ])
}

fn cond_select() -> Gen<Instruction> {
    reg().pair(operand()).map(|(rd, src)| Instruction::Mov { rd, src })
}

/// A compare or a forward branch whose target is at most `room` ahead.
fn compare_branch(room: u32) -> Gen<Instruction> {
    let off = Gen::range(1, room as u64).map(|x| x as u32);
    Gen::one_of_weighted(alloc::vec![
        (2, reg().pair(operand()).map(|(rn, rm)| Instruction::Cmp { rn, rm })),
        (2, off.clone().map(|offset| Instruction::BEq { offset })),
        (1, off.clone().map(|offset| Instruction::B { offset })),
        (1, reg().pair(off.clone()).map(|(rt, offset)| Instruction::Cbz { rt, offset })),
        (1, reg().pair(off).map(|(rt, offset)| Instruction::Cbnz { rt, offset })),
    ])
}

/// Mixed program of exactly `length` instructions with forward branches.
/// All-zero weights yield only nops.
pub fn gen_random(weights: &ClassWeights, length: usize, seed: u64) -> Program {
    let mut rng = rng_from_seed(seed);
    let w = if weights.is_valid() { *weights } else { ClassWeights { nop: 1, ..Default::default() } };
    let mut out = Vec::with_capacity(length);
    for i in 0..length {
        let room = (length - i) as u32;
        let g = Gen::one_of_weighted(alloc::vec![
            (w.load_store, load_store()),
            (w.arith, arith()),
            (w.compare_branch, compare_branch(room)),
            (w.cond_select, cond_select()),
            (w.nop, Gen::constant(Instruction::Nop)),
        ]);
        out.push(g.sample(&mut rng));
    }
    Program(out)
}

/// Between 1 and `max_len` loads with mixed addressing. With `allow_xzr`
/// the destination may be the zero register.
pub fn loads_recipe(max_len: usize, allow_xzr: bool) -> Gen<Vec<Instruction>> {
    let mut dests: Vec<Reg> = Reg::all().collect();
    if allow_xzr {
        dests.push(Reg::Xzr);
    }
    let ld = Gen::elements(dests).pair(mem_operand()).map(|(rt, addr)| Instruction::Ldr { rt, addr });
    ld.list_of(Gen::range_usize(1, max_len.max(1)))
}

pub fn gen_loads(max_len: usize, allow_xzr: bool, seed: u64) -> Program {
    Program(loads_recipe(max_len, allow_xzr).sample_seeded(seed))
}

/// `ldr r_i, [base, #64*n*i]` for `i` in `0..steps`, each `r_i != base`.
pub fn strides_recipe(base: Reg, steps: usize, stride_lines: u32) -> Gen<Vec<Instruction>> {
    let step = 64 * stride_lines as i64;
    assert!(step * (steps as i64 - 1) <= MAX_MEM_OFFSET, "stride program exceeds the offset range");
    reg_except(base).list_of(Gen::constant(steps)).map(move |dests| {
        dests
            .into_iter()
            .enumerate()
            .map(|(i, rt)| Instruction::Ldr { rt, addr: MemOperand::new(base, step * i as i64) })
            .collect()
    })
}

pub fn gen_strides(base: Reg, steps: usize, stride_lines: u32, seed: u64) -> Program {
    Program(strides_recipe(base, steps, stride_lines).sample_seeded(seed))
}

/// `if r1 = r2 then b1 else b2`:
/// `cmp r1, r2; b.eq then; <else>; b end; <then>`.
pub fn branch_recipe(then_gen: Gen<Vec<Instruction>>, else_gen: Gen<Vec<Instruction>>) -> Gen<Vec<Instruction>> {
    Gen::new(move |r| {
        let (r1, r2) = (reg().sample(r), reg().sample(r));
        let then_body = then_gen.sample(r);
        let else_body = else_gen.sample(r);
        let mut out = alloc::vec![
            Instruction::Cmp { rn: r1, rm: Operand::Reg(r2) },
            Instruction::BEq { offset: else_body.len() as u32 + 2 },
        ];
        out.extend(else_body);
        out.push(Instruction::B { offset: then_body.len() as u32 + 1 });
        out.extend(then_body);
        out
    })
}

pub fn gen_branch(then_gen: Gen<Vec<Instruction>>, else_gen: Gen<Vec<Instruction>>, seed: u64) -> Program {
    Program(branch_recipe(then_gen, else_gen).sample_seeded(seed))
}

/// The named generators selectable from a campaign.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Random {
        #[serde(default)]
        weights: ClassWeights,
        #[serde(default = "default_length")]
        length: usize,
    },
    Loads {
        #[serde(default = "default_max_len")]
        max_len: usize,
        #[serde(default = "yes")]
        allow_xzr: bool,
    },
    Strides {
        #[serde(default = "default_base")]
        base: Reg,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_stride")]
        stride_lines: u32,
    },
    BranchLoads {
        #[serde(default = "default_max_len")]
        max_len: usize,
    },
}

fn default_length() -> usize {
    5
}
fn default_max_len() -> usize {
    3
}
fn yes() -> bool {
    true
}
fn default_base() -> Reg {
    Reg::X(10)
}
fn default_steps() -> usize {
    3
}
fn default_stride() -> u32 {
    2
}

impl GeneratorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::Random { .. } => "random",
            GeneratorSpec::Loads { .. } => "loads",
            GeneratorSpec::Strides { .. } => "strides",
            GeneratorSpec::BranchLoads { .. } => "branch-loads",
        }
    }

    pub fn generate(&self, seed: u64) -> Program {
        match self {
            GeneratorSpec::Random { weights, length } => gen_random(weights, *length, seed),
            GeneratorSpec::Loads { max_len, allow_xzr } => gen_loads(*max_len, *allow_xzr, seed),
            GeneratorSpec::Strides { base, steps, stride_lines } => gen_strides(*base, *steps, *stride_lines, seed),
            GeneratorSpec::BranchLoads { max_len } => {
                let body = loads_recipe(*max_len, false);
                gen_branch(body.clone(), body, seed)
            }
        }
    }
}
