//! L1 data-cache geometry and address bit-field extraction.

use serde::{Deserialize, Serialize};

use crate::ir::Expr;

/// Shape of a set-associative cache: `2^offset_bits`-byte lines,
/// `2^index_bits` sets, `ways` lines per set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub offset_bits: u8,
    pub index_bits: u8,
    pub ways: u8,
}

impl Default for CacheGeometry {
    /// 32 KiB, 4-way, 64-byte lines, 128 sets.
    fn default() -> Self {
        CacheGeometry { offset_bits: 6, index_bits: 7, ways: 4 }
    }
}

impl CacheGeometry {
    pub fn new(offset_bits: u8, index_bits: u8, ways: u8) -> Self {
        assert!(offset_bits as u32 + index_bits as u32 <= 63, "geometry wider than an address");
        assert!(ways >= 1, "a cache needs at least one way");
        CacheGeometry { offset_bits, index_bits, ways }
    }

    /// The reduced geometry used for exhaustive checks: 8-byte lines,
    /// 4 sets, 2 ways.
    pub fn reduced() -> Self {
        CacheGeometry { offset_bits: 3, index_bits: 2, ways: 2 }
    }

    pub fn line_bytes(&self) -> u64 {
        1 << self.offset_bits
    }

    pub fn sets(&self) -> u64 {
        1 << self.index_bits
    }

    pub fn total_bytes(&self) -> u64 {
        self.line_bytes() * self.sets() * self.ways as u64
    }

    fn tag_shift(&self) -> u32 {
        self.offset_bits as u32 + self.index_bits as u32
    }

    pub fn offset(&self, addr: u64) -> u64 {
        addr & (self.line_bytes() - 1)
    }

    pub fn index(&self, addr: u64) -> u64 {
        (addr >> self.offset_bits) & (self.sets() - 1)
    }

    pub fn tag(&self, addr: u64) -> u64 {
        addr >> self.tag_shift()
    }

    /// Line-aligned address, i.e. the address with its offset bits cleared.
    pub fn line_addr(&self, addr: u64) -> u64 {
        addr & !(self.line_bytes() - 1)
    }

    /// Inverse of the three extractors.
    pub fn compose(&self, tag: u64, index: u64, offset: u64) -> u64 {
        (tag << self.tag_shift()) | (index << self.offset_bits) | offset
    }

    pub fn offset_expr(&self, addr: Expr) -> Expr {
        Expr::and(addr, Expr::c64(self.line_bytes() - 1))
    }

    pub fn index_expr(&self, addr: Expr) -> Expr {
        Expr::and(Expr::lshr(addr, Expr::c64(self.offset_bits as u64)), Expr::c64(self.sets() - 1))
    }

    pub fn tag_expr(&self, addr: Expr) -> Expr {
        Expr::lshr(addr, Expr::c64(self.tag_shift() as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_32k() {
        let g = CacheGeometry::default();
        assert_eq!((g.line_bytes(), g.sets(), g.total_bytes()), (64, 128, 32 * 1024));
    }

    #[test]
    fn extraction_spot_values() {
        let g = CacheGeometry::default();
        assert_eq!(g.index(0x8000_0040), 1);
        assert_eq!(g.index(0x8000_0038), 0);
        assert_eq!(g.index(0x8010_0cc0), 51);
        assert_eq!(g.tag(0x8010_0080), 0x40080);
        assert_eq!((g.offset(0), g.index(0), g.tag(0)), (0, 0, 0));
    }

    #[test]
    fn reconstruction_is_exhaustive_at_16_bits() {
        let g = CacheGeometry::default();
        for a in 0..=u16::MAX as u64 {
            assert_eq!(g.compose(g.tag(a), g.index(a), g.offset(a)), a);
        }
    }
}
