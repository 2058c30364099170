//! Four-state bit vectors.
//!
//! Bits are stored in two planes. A bit is known when its `unk` bit is clear,
//! in which case `val` holds the value. An unknown bit is X when `val` is 0
//! and Z when `val` is 1.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Logic {
    Zero,
    One,
    X,
    Z,
}

impl Logic {
    pub fn from_char(c: char) -> Option<Logic> {
        match c {
            '0' => Some(Logic::Zero),
            '1' => Some(Logic::One),
            'x' | 'X' => Some(Logic::X),
            'z' | 'Z' | '?' => Some(Logic::Z),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Logic::Zero => '0',
            Logic::One => '1',
            Logic::X => 'x',
            Logic::Z => 'z',
        }
    }

    pub fn is_known(self) -> bool {
        matches!(self, Logic::Zero | Logic::One)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LogicVec {
    width: u32,
    val: Vec<u64>,
    unk: Vec<u64>,
}

fn words(width: u32) -> usize {
    (width as usize).div_ceil(64).max(1)
}

impl LogicVec {
    pub fn zeros(width: u32) -> Self {
        LogicVec {
            width,
            val: vec![0; words(width)],
            unk: vec![0; words(width)],
        }
    }

    pub fn filled(width: u32, bit: Logic) -> Self {
        let mut v = LogicVec::zeros(width);
        for i in 0..width {
            v.set(i, bit);
        }
        v
    }

    pub fn unknown(width: u32) -> Self {
        LogicVec::filled(width, Logic::X)
    }

    pub fn from_u64(value: u64, width: u32) -> Self {
        LogicVec::from_u128(value as u128, width)
    }

    pub fn from_u128(value: u128, width: u32) -> Self {
        let mut v = LogicVec::zeros(width);
        v.val[0] = value as u64;
        if v.val.len() > 1 {
            v.val[1] = (value >> 64) as u64;
        }
        v.mask();
        v
    }

    pub fn from_bool(b: bool) -> Self {
        LogicVec::from_u64(b as u64, 1)
    }

    /// Parses an MSB-first string of `0 1 x z` characters. The width is the
    /// string length.
    pub fn from_bin_str(s: &str) -> Option<Self> {
        let chars: Vec<char> = s.chars().filter(|c| *c != '_').collect();
        if chars.is_empty() {
            return None;
        }
        let width = chars.len() as u32;
        let mut v = LogicVec::zeros(width);
        for (i, c) in chars.iter().rev().enumerate() {
            v.set(i as u32, Logic::from_char(*c)?);
        }
        Some(v)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn get(&self, i: u32) -> Logic {
        if i >= self.width {
            return Logic::Zero;
        }
        let (w, b) = ((i / 64) as usize, i % 64);
        let v = (self.val[w] >> b) & 1;
        let u = (self.unk[w] >> b) & 1;
        match (u, v) {
            (0, 0) => Logic::Zero,
            (0, _) => Logic::One,
            (_, 0) => Logic::X,
            _ => Logic::Z,
        }
    }

    pub fn set(&mut self, i: u32, bit: Logic) {
        if i >= self.width {
            return;
        }
        let (w, b) = ((i / 64) as usize, i % 64);
        let (u, v) = match bit {
            Logic::Zero => (0, 0),
            Logic::One => (0, 1),
            Logic::X => (1, 0),
            Logic::Z => (1, 1),
        };
        self.val[w] = (self.val[w] & !(1 << b)) | (v << b);
        self.unk[w] = (self.unk[w] & !(1 << b)) | (u << b);
    }

    fn mask(&mut self) {
        let n = words(self.width);
        self.val.truncate(n);
        self.unk.truncate(n);
        let rem = self.width % 64;
        if rem != 0 {
            let m = (1u64 << rem) - 1;
            self.val[n - 1] &= m;
            self.unk[n - 1] &= m;
        }
        if self.width == 0 {
            self.val[0] = 0;
            self.unk[0] = 0;
        }
    }

    pub fn is_known(&self) -> bool {
        self.unk.iter().all(|w| *w == 0)
    }

    pub fn has_unknown(&self) -> bool {
        !self.is_known()
    }

    pub fn to_u64(&self) -> Option<u64> {
        if !self.is_known() || self.val.iter().skip(1).any(|w| *w != 0) {
            return None;
        }
        Some(self.val[0])
    }

    pub fn to_u128(&self) -> Option<u128> {
        if !self.is_known() || self.val.iter().skip(2).any(|w| *w != 0) {
            return None;
        }
        let hi = self.val.get(1).copied().unwrap_or(0) as u128;
        Some((hi << 64) | self.val[0] as u128)
    }

    /// Zero-extends or truncates to `width`.
    pub fn resize(&self, width: u32) -> Self {
        let mut out = LogicVec::zeros(width);
        for i in 0..width.min(self.width) {
            out.set(i, self.get(i));
        }
        out
    }

    /// Left-extension used by VCD vector values: the leftmost bit is
    /// replicated when it is X or Z, otherwise zero-fill.
    pub fn extend_vcd(&self, width: u32) -> Self {
        if width <= self.width {
            return self.resize(width);
        }
        let top = if self.width == 0 {
            Logic::Zero
        } else {
            self.get(self.width - 1)
        };
        let fill = if top.is_known() { Logic::Zero } else { top };
        let mut out = self.resize(width);
        for i in self.width..width {
            out.set(i, fill);
        }
        out
    }

    pub fn slice(&self, msb: u32, lsb: u32) -> Self {
        let w = msb - lsb + 1;
        let mut out = LogicVec::zeros(w);
        for i in 0..w {
            out.set(i, self.get(lsb + i));
        }
        out
    }

    /// Concatenates with `self` as the most significant part.
    pub fn concat(&self, low: &LogicVec) -> Self {
        let mut out = LogicVec::zeros(self.width + low.width);
        for i in 0..low.width {
            out.set(i, low.get(i));
        }
        for i in 0..self.width {
            out.set(low.width + i, self.get(i));
        }
        out
    }

    pub fn not(&self) -> Self {
        let mut out = LogicVec::zeros(self.width);
        for (i, (v, u)) in self.val.iter().zip(&self.unk).enumerate() {
            out.val[i] = !v & !u;
            out.unk[i] = *u;
            // unknown results are X, never Z
        }
        out.mask();
        out
    }

    pub fn and(&self, other: &LogicVec) -> Self {
        let w = self.width.max(other.width);
        let (a, b) = (self.resize(w), other.resize(w));
        let mut out = LogicVec::zeros(w);
        for i in 0..out.val.len() {
            let zero = (!a.unk[i] & !a.val[i]) | (!b.unk[i] & !b.val[i]);
            let one = (!a.unk[i] & a.val[i]) & (!b.unk[i] & b.val[i]);
            out.val[i] = one;
            out.unk[i] = !(zero | one);
        }
        out.mask();
        out
    }

    pub fn or(&self, other: &LogicVec) -> Self {
        let w = self.width.max(other.width);
        let (a, b) = (self.resize(w), other.resize(w));
        let mut out = LogicVec::zeros(w);
        for i in 0..out.val.len() {
            let one = (!a.unk[i] & a.val[i]) | (!b.unk[i] & b.val[i]);
            let zero = (!a.unk[i] & !a.val[i]) & (!b.unk[i] & !b.val[i]);
            out.val[i] = one;
            out.unk[i] = !(zero | one);
        }
        out.mask();
        out
    }

    pub fn xor(&self, other: &LogicVec) -> Self {
        let w = self.width.max(other.width);
        let (a, b) = (self.resize(w), other.resize(w));
        let mut out = LogicVec::zeros(w);
        for i in 0..out.val.len() {
            let unk = a.unk[i] | b.unk[i];
            out.val[i] = (a.val[i] ^ b.val[i]) & !unk;
            out.unk[i] = unk;
        }
        out.mask();
        out
    }

    /// Reduction OR with 4-state semantics: 1 if any bit is 1, 0 if all bits
    /// are 0, X otherwise.
    pub fn truthiness(&self) -> Logic {
        let any_one = self
            .val
            .iter()
            .zip(&self.unk)
            .any(|(v, u)| v & !u != 0);
        if any_one {
            Logic::One
        } else if self.is_known() {
            Logic::Zero
        } else {
            Logic::X
        }
    }

    pub fn to_bin_string(&self) -> String {
        (0..self.width).rev().map(|i| self.get(i).to_char()).collect()
    }

    /// Wrapping sum at `max(width)`. Any unknown operand bit makes the
    /// whole result X.
    pub fn add(&self, other: &LogicVec) -> Self {
        let w = self.width.max(other.width);
        if self.has_unknown() || other.has_unknown() {
            return LogicVec::unknown(w);
        }
        let (a, b) = (self.resize(w), other.resize(w));
        let mut out = LogicVec::zeros(w);
        let mut carry = 0u64;
        for i in 0..out.val.len() {
            let (s1, c1) = a.val[i].overflowing_add(b.val[i]);
            let (s2, c2) = s1.overflowing_add(carry);
            out.val[i] = s2;
            carry = (c1 || c2) as u64;
        }
        out.mask();
        out
    }

    pub fn neg(&self) -> Self {
        if self.has_unknown() {
            return LogicVec::unknown(self.width);
        }
        self.not().add(&LogicVec::from_u64(1, self.width))
    }

    pub fn sub(&self, other: &LogicVec) -> Self {
        let w = self.width.max(other.width);
        self.resize(w).add(&other.resize(w).neg())
    }

    pub fn shl(&self, n: u64) -> Self {
        let mut out = LogicVec::zeros(self.width);
        if n < self.width as u64 {
            for i in n as u32..self.width {
                out.set(i, self.get(i - n as u32));
            }
        }
        out
    }

    pub fn shr(&self, n: u64) -> Self {
        let mut out = LogicVec::zeros(self.width);
        if n < self.width as u64 {
            for i in 0..self.width - n as u32 {
                out.set(i, self.get(i + n as u32));
            }
        }
        out
    }

    /// Unsigned comparison of two fully known vectors.
    pub fn cmp_known(&self, other: &LogicVec) -> Option<std::cmp::Ordering> {
        if self.has_unknown() || other.has_unknown() {
            return None;
        }
        let n = self.val.len().max(other.val.len());
        for i in (0..n).rev() {
            let a = self.val.get(i).copied().unwrap_or(0);
            let b = other.val.get(i).copied().unwrap_or(0);
            if a != b {
                return Some(a.cmp(&b));
            }
        }
        Some(std::cmp::Ordering::Equal)
    }

    /// Exact 4-state equality after zero-extension to a common width.
    pub fn case_eq(&self, other: &LogicVec) -> bool {
        let w = self.width.max(other.width);
        self.resize(w) == other.resize(w)
    }

    /// Hex rendering, MSB first. A nibble with unknown bits prints as `x`
    /// (or `z` when all of its bits are Z).
    pub fn to_hex_string(&self) -> String {
        let nibbles = self.width.div_ceil(4).max(1);
        let mut s = String::with_capacity(nibbles as usize);
        for n in (0..nibbles).rev() {
            let bits: Vec<Logic> = (0..4)
                .map(|k| n * 4 + k)
                .filter(|i| *i < self.width)
                .map(|i| self.get(i))
                .collect();
            if bits.iter().all(|b| b.is_known()) {
                let v = bits
                    .iter()
                    .enumerate()
                    .fold(0u32, |acc, (k, b)| acc | ((*b == Logic::One) as u32) << k);
                s.push(std::char::from_digit(v, 16).unwrap());
            } else if bits.iter().all(|b| *b == Logic::Z) {
                s.push('z');
            } else {
                s.push('x');
            }
        }
        s
    }
}

impl fmt::Debug for LogicVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'b{}", self.width, self.to_bin_string())
    }
}

impl fmt::Display for LogicVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_bin_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bin_roundtrip_preserves_unknowns() {
        let v = LogicVec::from_bin_str("10xz").unwrap();
        assert_eq!(v.width(), 4);
        assert_eq!(v.get(0), Logic::Z);
        assert_eq!(v.get(1), Logic::X);
        assert_eq!(v.get(3), Logic::One);
        assert_eq!(v.to_bin_string(), "10xz");
        assert!(v.to_u64().is_none());
    }

    #[test]
    fn vcd_extension_rules() {
        let v = LogicVec::from_bin_str("1").unwrap().extend_vcd(4);
        assert_eq!(v.to_bin_string(), "0001");
        let v = LogicVec::from_bin_str("x0").unwrap().extend_vcd(4);
        assert_eq!(v.to_bin_string(), "xxx0");
        let v = LogicVec::from_bin_str("z").unwrap().extend_vcd(3);
        assert_eq!(v.to_bin_string(), "zzz");
    }

    #[test]
    fn four_state_and_or() {
        let a = LogicVec::from_bin_str("01xz").unwrap();
        let zero = LogicVec::from_bin_str("0000").unwrap();
        let one = LogicVec::from_bin_str("1111").unwrap();
        assert_eq!(a.and(&zero).to_bin_string(), "0000");
        assert_eq!(a.and(&one).to_bin_string(), "01xx");
        assert_eq!(a.or(&one).to_bin_string(), "1111");
        assert_eq!(a.or(&zero).to_bin_string(), "01xx");
        assert_eq!(a.not().to_bin_string(), "10xx");
    }

    #[test]
    fn hex_rendering() {
        assert_eq!(LogicVec::from_u64(0x000f5fc0, 32).to_hex_string(), "000f5fc0");
        assert_eq!(LogicVec::from_bin_str("1x0000").unwrap().to_hex_string(), "x0");
        assert_eq!(LogicVec::from_bin_str("zzzz").unwrap().to_hex_string(), "z");
    }

    proptest! {
        #[test]
        fn known_ops_match_integers(a in any::<u64>(), b in any::<u64>(), w in 1u32..=64) {
            let m = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
            let (x, y) = (LogicVec::from_u64(a, w), LogicVec::from_u64(b, w));
            prop_assert_eq!(x.and(&y).to_u64(), Some(a & b & m));
            prop_assert_eq!(x.or(&y).to_u64(), Some((a | b) & m));
            prop_assert_eq!(x.xor(&y).to_u64(), Some((a ^ b) & m));
            prop_assert_eq!(x.not().to_u64(), Some(!a & m));
            prop_assert_eq!(x.add(&y).to_u64(), Some(a.wrapping_add(b) & m));
            prop_assert_eq!(x.sub(&y).to_u64(), Some(a.wrapping_sub(b) & m));
            prop_assert_eq!(x.cmp_known(&y), Some((a & m).cmp(&(b & m))));
            let k = b % 70;
            prop_assert_eq!(x.shl(k).to_u64(), Some(if k >= w as u64 { 0 } else { ((a & m) << k) & m }));
            prop_assert_eq!(x.shr(k).to_u64(), Some(if k >= w as u64 { 0 } else { (a & m) >> k }));
        }
    }
}
