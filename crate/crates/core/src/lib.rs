//! Core of obsval: ISA, IR, observational models, symbolic relational
//! analysis, test-case generation and a cache simulator.
#![no_std]

extern crate alloc;

pub mod brute;
pub mod concrete;
pub mod experiment;
pub mod gen;
pub mod geometry;
pub mod ir;
pub mod isa;
pub mod obs;
pub mod relation;
pub mod smtlib;
pub mod solve;
pub mod symexec;
pub mod testcase;
pub mod transpile;
pub mod uarch;
