//! Bit-level models of the arithmetic building blocks: 3:2 and 4:2
//! compressors, MOD-4 grouped carry-save reduction, Kogge-Stone addition,
//! Wallace-tree multiplication and leading-zero counting.
//!
//! Every vector is a `u128` interpreted as a `width`-bit field. All results
//! are reduced modulo `2^width`, which is what fixed-width hardware computes.
//! Signed operands enter as two's complement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_WIDTH: u32 = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitmathError {
    #[error("carry-save reduction needs at least one operand")]
    EmptyOperands,
}

#[inline]
pub fn mask(width: u32) -> u128 {
    debug_assert!((1..=MAX_WIDTH).contains(&width), "width {width}");
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// Redundant (sum, carry) form of a multi-operand total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrySavePair {
    pub sum: u128,
    pub carry: u128,
    pub width: u32,
}

impl CarrySavePair {
    /// `(sum + carry) mod 2^width`, using the host adder.
    pub fn total(&self) -> u128 {
        self.sum.wrapping_add(self.carry) & mask(self.width)
    }

    /// Collapses the pair with a Kogge-Stone adder.
    pub fn resolve(&self) -> u128 {
        kogge_stone_add(self.sum, self.carry, false, self.width).0
    }
}

/// Full-adder row: three vectors in, one sum and one shifted carry vector out.
pub fn compress_3_2(a: u128, b: u128, c: u128, width: u32) -> CarrySavePair {
    let m = mask(width);
    let (a, b, c) = (a & m, b & m, c & m);
    CarrySavePair {
        sum: a ^ b ^ c,
        carry: (((a & b) | (a & c) | (b & c)) << 1) & m,
        width,
    }
}

/// 4:2 compressor built from two cascaded 3:2 rows.
///
/// Returns the pair together with the unshifted lateral carry vector `cout`,
/// so that `a + b + c + d + cin == sum + carry + (cout << 1) (mod 2^width)`.
/// Column `i` of `cout` feeds `cin` of column `i + 1` in a chained row.
pub fn compress_4_2(a: u128, b: u128, c: u128, d: u128, cin: u128, width: u32) -> (CarrySavePair, u128) {
    let m = mask(width);
    let (a, b, c) = (a & m, b & m, c & m);
    let partial = a ^ b ^ c;
    let cout = (a & b) | (a & c) | (b & c);
    (compress_3_2(partial, d, cin, width), cout)
}

/// Four operands down to two with the lateral carries wired into the
/// neighbouring columns.
fn reduce_four(ops: &[u128], width: u32) -> CarrySavePair {
    let m = mask(width);
    let cout = (ops[0] & ops[1]) | (ops[0] & ops[2]) | (ops[1] & ops[2]);
    let (pair, _) = compress_4_2(ops[0], ops[1], ops[2], ops[3], (cout << 1) & m, width);
    pair
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompressorKind {
    FourTwo,
    ThreeTwo,
    PassThrough,
}

/// Record of a MOD-4 carry-save reduction.
///
/// `levels[0]` is the input operand list and the last entry holds the final
/// two vectors (or one, for a single operand). For every level but the last,
/// `compressor_kinds[l]` tags each group and `group_boundaries[l][i]` names
/// the group operand `i` of `levels[l]` belongs to.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub levels: Vec<Vec<u128>>,
    pub compressor_kinds: Vec<Vec<CompressorKind>>,
    pub group_boundaries: Vec<Vec<usize>>,
}

impl ReductionTrace {
    pub fn group_counts(&self) -> Vec<usize> {
        self.compressor_kinds.iter().map(Vec::len).collect()
    }
}

/// Carry-save reduction with parallel MOD-4 operand grouping.
///
/// Each level splits its operands into groups of four (the remainder group
/// last). Groups of four go through a 4:2 compressor, groups of three through
/// a 3:2 row, and groups of one or two pass through. Levels repeat until at
/// most two vectors remain.
pub fn csa_reduce_mod4(operands: &[u128], width: u32) -> Result<(CarrySavePair, ReductionTrace), BitmathError> {
    if operands.is_empty() {
        return Err(BitmathError::EmptyOperands);
    }
    let m = mask(width);
    let mut trace = ReductionTrace::default();
    let mut level: Vec<u128> = operands.iter().map(|&x| x & m).collect();

    while level.len() > 2 {
        let mut next = Vec::with_capacity(level.len() / 2 + 2);
        let mut kinds = Vec::with_capacity(level.len().div_ceil(4));
        let mut groups = Vec::with_capacity(level.len());
        for (g, chunk) in level.chunks(4).enumerate() {
            groups.extend(std::iter::repeat_n(g, chunk.len()));
            match chunk.len() {
                4 => {
                    let p = reduce_four(chunk, width);
                    next.extend([p.sum, p.carry]);
                    kinds.push(CompressorKind::FourTwo);
                }
                3 => {
                    let p = compress_3_2(chunk[0], chunk[1], chunk[2], width);
                    next.extend([p.sum, p.carry]);
                    kinds.push(CompressorKind::ThreeTwo);
                }
                _ => {
                    next.extend_from_slice(chunk);
                    kinds.push(CompressorKind::PassThrough);
                }
            }
        }
        trace.levels.push(level);
        trace.compressor_kinds.push(kinds);
        trace.group_boundaries.push(groups);
        level = next;
    }

    let pair = CarrySavePair {
        sum: level[0],
        carry: level.get(1).copied().unwrap_or(0),
        width,
    };
    trace.levels.push(level);
    Ok((pair, trace))
}

/// Number of prefix levels a `width`-bit Kogge-Stone adder needs.
pub fn kogge_stone_levels(width: u32) -> u32 {
    if width <= 1 {
        0
    } else {
        32 - (width - 1).leading_zeros()
    }
}

/// Kogge-Stone addition that also reports how many prefix levels ran.
pub fn kogge_stone_add_traced(a: u128, b: u128, cin: bool, width: u32) -> (u128, bool, u32) {
    let m = mask(width);
    let (a, b) = (a & m, b & m);
    let propagate = a ^ b;

    // Fold the carry-in into bit 0's generate term.
    let mut g = (a & b) | (propagate & cin as u128);
    let mut p = propagate;
    let mut distance = 1u32;
    let mut levels = 0;
    while distance < width {
        g = (g | (p & (g << distance))) & m;
        p = (p & (p << distance)) & m;
        distance <<= 1;
        levels += 1;
    }

    // g[i] is now the carry out of bit i.
    let carries_in = ((g << 1) | cin as u128) & m;
    let sum = propagate ^ carries_in;
    let cout = (g >> (width - 1)) & 1 == 1;
    (sum, cout, levels)
}

/// `a + b + cin` over `width` bits through an explicit parallel-prefix
/// carry network. Returns the wrapped sum and the carry out.
pub fn kogge_stone_add(a: u128, b: u128, cin: bool, width: u32) -> (u128, bool) {
    let (sum, cout, _) = kogge_stone_add_traced(a, b, cin, width);
    (sum, cout)
}

/// Exact `a * b` for `a_width`- and `b_width`-bit unsigned operands.
///
/// One AND-row per multiplier bit, reduced by [`csa_reduce_mod4`] and
/// resolved with [`kogge_stone_add`]. No Booth recoding.
pub fn wallace_multiply(a: u64, a_width: u32, b: u64, b_width: u32) -> u128 {
    let width = a_width + b_width;
    debug_assert!(width <= MAX_WIDTH);
    let a = a as u128 & mask(a_width);
    let b = b as u128 & mask(b_width);
    let partials: Vec<u128> = (0..b_width)
        .map(|j| if (b >> j) & 1 == 1 { a << j } else { 0 })
        .collect();
    let (pair, _) = csa_reduce_mod4(&partials, width).expect("multiplier width is nonzero");
    pair.resolve()
}

/// Zero bits above the most significant one within a `width`-bit field.
///
/// Binary-search priority encoder: each step asks whether the upper half of
/// the remaining window is empty.
pub fn leading_zero_count(x: u128, width: u32) -> u32 {
    let mut x = x & mask(width);
    if x == 0 {
        return width;
    }
    // Left-justify the field in 128 bits, then search from the top.
    x <<= MAX_WIDTH - width;
    let mut count = 0;
    let mut window = MAX_WIDTH / 2;
    while window > 0 {
        if x >> (MAX_WIDTH - window) == 0 {
            count += window;
            x <<= window;
        }
        window /= 2;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compress_3_2_examples() {
        assert_eq!(compress_3_2(0, 0, 0, 8), CarrySavePair { sum: 0, carry: 0, width: 8 });
        let p = compress_3_2(1, 1, 1, 4);
        assert_eq!((p.sum, p.carry, p.total()), (1, 2, 3));
    }

    #[test]
    fn compress_4_2_examples() {
        let (p, cout) = compress_4_2(0, 0, 0, 0, 0, 8);
        assert_eq!((p.sum, p.carry, cout), (0, 0, 0));
        let (p, cout) = compress_4_2(1, 1, 1, 1, 0, 8);
        assert_eq!(p.sum + p.carry + (cout << 1), 4);
    }

    #[test]
    fn csa_examples() {
        assert!(matches!(csa_reduce_mod4(&[], 8), Err(BitmathError::EmptyOperands)));
        let (p, _) = csa_reduce_mod4(&[0x5A], 8).unwrap();
        assert_eq!((p.sum, p.carry), (0x5A, 0));
        let (p, _) = csa_reduce_mod4(&[1, 1, 1, 1], 8).unwrap();
        assert_eq!(p.total(), 4);
    }

    #[test]
    fn csa_group_structure() {
        // 9 -> [4,4,1] -> 5 -> [4,1] -> 3 -> [3] -> 2
        let (_, t) = csa_reduce_mod4(&[1; 9], 16).unwrap();
        assert_eq!(t.group_counts(), vec![3, 2, 1]);
        assert_eq!(
            t.compressor_kinds[0],
            vec![CompressorKind::FourTwo, CompressorKind::FourTwo, CompressorKind::PassThrough]
        );
        assert_eq!(t.group_boundaries[0], vec![0, 0, 0, 0, 1, 1, 1, 1, 2]);
        assert_eq!(t.compressor_kinds[2], vec![CompressorKind::ThreeTwo]);
        assert_eq!(t.levels.last().unwrap().len(), 2);

        // two operands need no compressor level at all
        let (p, t) = csa_reduce_mod4(&[3, 4], 8).unwrap();
        assert!(t.compressor_kinds.is_empty());
        assert_eq!((p.sum, p.carry), (3, 4));
    }

    #[test]
    fn csa_negative_operands_wrap() {
        let w = 27;
        let neg = |x: u128| x.wrapping_neg() & mask(w);
        let (p, _) = csa_reduce_mod4(&[100, neg(40), neg(60), 5, neg(5)], w).unwrap();
        assert_eq!(p.resolve(), 0);
    }

    #[test]
    fn ksa_examples() {
        assert_eq!(kogge_stone_add(0x1234, 0, false, 16), (0x1234, false));
        assert_eq!(kogge_stone_add(0xFFFF, 1, false, 16), (0, true));
        assert_eq!(kogge_stone_add(0xFF, 0, true, 8), (0, true));
        assert_eq!(kogge_stone_add(u128::MAX, 1, false, 128), (0, true));
        assert_eq!(kogge_stone_add(1, 0, true, 1), (0, true));
    }

    #[test]
    fn ksa_prefix_depth() {
        for (w, depth) in [(1, 0), (2, 1), (8, 3), (16, 4), (27, 5), (32, 5), (64, 6), (128, 7)] {
            assert_eq!(kogge_stone_levels(w), depth, "W={w}");
            assert_eq!(kogge_stone_add_traced(1, 1, false, w).2, depth, "W={w}");
        }
    }

    #[test]
    fn wallace_examples() {
        assert_eq!(wallace_multiply(3, 4, 5, 4), 15);
        assert_eq!(wallace_multiply(0, 11, 1234, 11), 0);
        assert_eq!(wallace_multiply(2047, 11, 2047, 11), 4_190_209);
        assert_eq!(wallace_multiply(1, 1, 1, 1), 1);
    }

    #[test]
    fn lzc_examples() {
        assert_eq!(leading_zero_count(0, 27), 27);
        assert_eq!(leading_zero_count(1, 27), 26);
        assert_eq!(leading_zero_count(1 << 26, 27), 0);
        assert_eq!(leading_zero_count(u128::MAX, 128), 0);
        assert_eq!(leading_zero_count(1, 128), 127);
    }

    fn lzc_loop(x: u128, w: u32) -> u32 {
        let mut n = 0;
        for bit in (0..w).rev() {
            if (x >> bit) & 1 == 1 {
                break;
            }
            n += 1;
        }
        n
    }

    proptest! {
        #[test]
        fn compress_3_2_preserves_total(a: u128, b: u128, c: u128, w in 1u32..=128) {
            let m = mask(w);
            let p = compress_3_2(a, b, c, w);
            prop_assert_eq!(p.total(), a.wrapping_add(b).wrapping_add(c) & m);
        }

        #[test]
        fn compress_4_2_preserves_total(a: u128, b: u128, c: u128, d: u128, cin: u128, w in 1u32..=128) {
            let m = mask(w);
            let (p, cout) = compress_4_2(a, b, c, d, cin, w);
            let lhs = a.wrapping_add(b).wrapping_add(c).wrapping_add(d).wrapping_add(cin) & m;
            prop_assert_eq!(lhs, p.total().wrapping_add(cout << 1) & m);
        }

        #[test]
        fn csa_levels_preserve_total(ops in prop::collection::vec(any::<u32>(), 1..34)) {
            let w = 32;
            let ops: Vec<u128> = ops.into_iter().map(u128::from).collect();
            let direct = ops.iter().fold(0u128, |s, &x| s.wrapping_add(x)) & mask(w);
            let (p, t) = csa_reduce_mod4(&ops, w).unwrap();
            prop_assert_eq!(p.total(), direct);
            for level in &t.levels {
                let s = level.iter().fold(0u128, |s, &x| s.wrapping_add(x)) & mask(w);
                prop_assert_eq!(s, direct);
            }
            for (l, kinds) in t.compressor_kinds.iter().enumerate() {
                prop_assert_eq!(kinds.len(), t.levels[l].len().div_ceil(4));
            }
        }

        #[test]
        fn ksa_matches_native(a: u128, b: u128, cin: bool, w in 8u32..=128) {
            let m = mask(w);
            let (a, b) = (a & m, b & m);
            let wide = num_bigint::BigUint::from(a) + b + cin as u32;
            let (sum, cout) = kogge_stone_add(a, b, cin, w);
            prop_assert_eq!(num_bigint::BigUint::from(sum), &wide & num_bigint::BigUint::from(m));
            prop_assert_eq!(cout, (wide >> w) != num_bigint::BigUint::from(0u8));
        }

        #[test]
        fn wallace_matches_native_11bit(a in 0u64..2048, b in 0u64..2048) {
            prop_assert_eq!(wallace_multiply(a, 11, b, 11), (a * b) as u128);
        }

        #[test]
        fn lzc_matches_loop(x: u128, w in 1u32..=128) {
            let x = x >> (128 - w);
            prop_assert_eq!(leading_zero_count(x, w), lzc_loop(x, w));
            if x != 0 {
                prop_assert_eq!(leading_zero_count(x, w), w - 1 - (127 - x.leading_zeros()));
            }
        }
    }
}
