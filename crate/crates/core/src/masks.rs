//! Binary pixel masks at annotation resolution.
//!
//! Pixels are packed row-major into `u64` words; bits past `height * width`
//! in the final word are always zero, so word-level popcounts are exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskOp {
    And,
    Or,
    Not,
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    height: u16,
    width: u16,
    words: Vec<u64>,
}

impl std::fmt::Debug for BitMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitMask {}x{} [", self.height, self.width)?;
        for r in 0..self.height as usize {
            if r > 0 {
                f.write_str("/")?;
            }
            for c in 0..self.width as usize {
                f.write_str(if self.get(r, c) { "1" } else { "0" })?;
            }
        }
        f.write_str("]")
    }
}

fn word_count(pixels: usize) -> usize {
    pixels.div_ceil(WORD_BITS)
}

impl BitMask {
    /// All-zeros mask.
    pub fn new(height: u16, width: u16) -> Self {
        let pixels = height as usize * width as usize;
        BitMask {
            height,
            width,
            words: vec![0; word_count(pixels)],
        }
    }

    /// All-ones mask covering the whole frame.
    pub fn full(height: u16, width: u16) -> Self {
        let mut m = BitMask::new(height, width);
        m.words.iter_mut().for_each(|w| *w = !0);
        m.clear_padding();
        m
    }

    /// Builds a mask from row-major pixel values.
    pub fn from_bools(height: u16, width: u16, pixels: &[bool]) -> Result<Self> {
        let n = height as usize * width as usize;
        if pixels.len() != n {
            return Err(Error::LengthMismatch(format!(
                "{} pixels supplied for a {height}x{width} mask",
                pixels.len()
            )));
        }
        let mut m = BitMask::new(height, width);
        for (p, _) in pixels.iter().enumerate().filter(|(_, &v)| v) {
            m.words[p / WORD_BITS] |= 1 << (p % WORD_BITS);
        }
        Ok(m)
    }

    /// Builds a mask from nested rows of 0/1 values. Panics on ragged input.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut pixels = Vec::with_capacity(height * width);
        for row in rows {
            let row = row.as_ref();
            assert_eq!(row.len(), width, "ragged rows");
            pixels.extend(row.iter().map(|&v| v != 0));
        }
        BitMask::from_bools(height as u16, width as u16, &pixels).expect("sized above")
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn dims(&self) -> (u16, u16) {
        (self.height, self.width)
    }

    /// Number of pixels in the frame.
    pub fn len(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.get_index(row * self.width as usize + col)
    }

    pub fn get_index(&self, p: usize) -> bool {
        assert!(p < self.len(), "pixel {p} out of range");
        self.words[p / WORD_BITS] >> (p % WORD_BITS) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let p = row * self.width as usize + col;
        assert!(p < self.len(), "pixel ({row}, {col}) out of range");
        let bit = 1u64 << (p % WORD_BITS);
        if value {
            self.words[p / WORD_BITS] |= bit;
        } else {
            self.words[p / WORD_BITS] &= !bit;
        }
    }

    /// Sets every pixel in the half-open rectangle `[r0, r1) x [c0, c1)`.
    pub fn fill_rect(&mut self, r0: usize, r1: usize, c0: usize, c1: usize) {
        let w = self.width as usize;
        for r in r0..r1.min(self.height as usize) {
            for c in c0..c1.min(w) {
                let p = r * w + c;
                self.words[p / WORD_BITS] |= 1 << (p % WORD_BITS);
            }
        }
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len()).map(|p| self.get_index(p)).collect()
    }

    /// Exact number of set pixels.
    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    fn clear_padding(&mut self) {
        let rem = self.len() % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn check_dims(&self, other: &BitMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &BitMask, f: impl Fn(u64, u64) -> u64) -> Result<BitMask> {
        self.check_dims(other)?;
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(BitMask {
            height: self.height,
            width: self.width,
            words,
        })
    }

    pub fn and(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn and_not(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_with(other, |a, b| a & !b)
    }

    /// Complement within the image frame.
    pub fn not(&self) -> BitMask {
        let mut m = BitMask {
            height: self.height,
            width: self.width,
            words: self.words.iter().map(|w| !w).collect(),
        };
        m.clear_padding();
        m
    }

    /// `|self ∩ other|` without materializing the intersection.
    pub fn and_count(&self, other: &BitMask) -> Result<u64> {
        self.check_dims(other)?;
        Ok(and_count_words(&self.words, &other.words))
    }

    /// `|self ∪ other|` without materializing the union.
    pub fn or_count(&self, other: &BitMask) -> Result<u64> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as u64)
            .sum())
    }

    /// True when the two masks share at least one pixel.
    pub fn intersects(&self, other: &BitMask) -> Result<bool> {
        self.check_dims(other)?;
        Ok(self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0))
    }
}

pub(crate) fn and_count_words(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as u64).sum()
}

/// Returns `(|a ∩ b|, |m ∩ a ∩ b|)` in a single pass.
pub(crate) fn and_counts_with(m: &[u64], a: &[u64], b: &[u64]) -> (u64, u64) {
    let mut ab = 0u64;
    let mut mab = 0u64;
    for ((x, y), z) in a.iter().zip(b).zip(m) {
        let t = x & y;
        ab += t.count_ones() as u64;
        mab += (t & z).count_ones() as u64;
    }
    (ab, mab)
}

/// Pixel-wise boolean operation. `b` must be present for AND/OR and absent for NOT.
pub fn mask_apply(op: MaskOp, a: &BitMask, b: Option<&BitMask>) -> Result<BitMask> {
    match (op, b) {
        (MaskOp::And, Some(b)) => a.and(b),
        (MaskOp::Or, Some(b)) => a.or(b),
        (MaskOp::Not, None) => Ok(a.not()),
        (MaskOp::Not, Some(_)) => Err(Error::InvalidDimensions(
            "NOT takes a single operand".into(),
        )),
        (_, None) => Err(Error::InvalidDimensions(format!(
            "{op:?} requires two operands"
        ))),
    }
}

/// Canonical run-length encoding: alternating zero-runs and one-runs over the
/// row-major pixels, always starting with a (possibly empty) zero-run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleRuns(pub Vec<u32>);

impl RleRuns {
    pub fn runs(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&r| r as u64).sum()
    }

    /// Set-pixel count read directly from the one-runs.
    pub fn ones(&self) -> u64 {
        self.0.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }
}

pub fn rle_encode(mask: &BitMask) -> RleRuns {
    let mut runs = Vec::new();
    let mut current = false;
    let mut count = 0u32;
    for p in 0..mask.len() {
        let v = mask.get_index(p);
        if v != current {
            runs.push(count);
            count = 0;
            current = v;
        }
        count += 1;
    }
    if count > 0 || runs.is_empty() {
        runs.push(count);
    }
    RleRuns(runs)
}

pub fn rle_decode(runs: &RleRuns, height: u16, width: u16) -> Result<BitMask> {
    let n = height as u64 * width as u64;
    if runs.total() != n {
        return Err(Error::LengthMismatch(format!(
            "runs sum to {} but a {height}x{width} mask has {n} pixels",
            runs.total()
        )));
    }
    let mut mask = BitMask::new(height, width);
    let mut p = 0usize;
    for (i, &r) in runs.0.iter().enumerate() {
        let r = r as usize;
        if i % 2 == 1 {
            for q in p..p + r {
                mask.words[q / WORD_BITS] |= 1 << (q % WORD_BITS);
            }
        }
        p += r;
    }
    Ok(mask)
}
