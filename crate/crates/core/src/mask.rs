//! Run-length encoded binary raster.
//!
//! Runs alternate 0s and 1s over row-major scan order, starting with the
//! 0-run (which may be empty). The encoding is canonical: no other run is
//! ever zero-length. Boolean algebra is evaluated directly on the runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("bitmap holds {actual} pixels, expected {expected}")]
    BitmapLength { expected: usize, actual: usize },
    #[error("run lengths sum to {actual}, expected width*height = {expected}")]
    BadRunSum { expected: u64, actual: u64 },
    #[error("zero-length run at index {index}; only the leading run may be empty")]
    NonCanonical { index: usize },
    #[error("mask dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMask", into = "RawMask")]
pub struct BinaryMask {
    width: usize,
    height: usize,
    rle: Vec<u64>,
    popcount: u64,
}

/// Wire form of [`BinaryMask`].
#[derive(Serialize, Deserialize)]
struct RawMask {
    width: usize,
    height: usize,
    rle: Vec<u64>,
}

impl TryFrom<RawMask> for BinaryMask {
    type Error = MaskError;

    fn try_from(raw: RawMask) -> Result<Self, Self::Error> {
        BinaryMask::from_rle(raw.width, raw.height, raw.rle)
    }
}

impl From<BinaryMask> for RawMask {
    fn from(m: BinaryMask) -> Self {
        RawMask {
            width: m.width,
            height: m.height,
            rle: m.rle,
        }
    }
}

/// Accumulates runs, merging neighbours of equal value.
struct RleBuilder {
    rle: Vec<u64>,
    value: bool,
    len: u64,
}

impl RleBuilder {
    fn new() -> Self {
        Self {
            rle: Vec::new(),
            value: false,
            len: 0,
        }
    }

    fn push(&mut self, value: bool, len: u64) {
        if len == 0 {
            return;
        }
        if value != self.value {
            self.rle.push(self.len);
            self.value = value;
            self.len = 0;
        }
        self.len += len;
    }

    fn finish(mut self) -> Vec<u64> {
        if self.len > 0 || self.rle.is_empty() {
            self.rle.push(self.len);
        }
        self.rle
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), MaskError> {
    if width == 0 || height == 0 {
        Err(MaskError::ZeroDimension { width, height })
    } else {
        Ok(())
    }
}

impl BinaryMask {
    /// Encodes a row-major bitmap.
    pub fn from_bitmap(width: usize, height: usize, bits: &[bool]) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(MaskError::BitmapLength {
                expected: width * height,
                actual: bits.len(),
            });
        }
        let mut b = RleBuilder::new();
        for &bit in bits {
            b.push(bit, 1);
        }
        Ok(Self::from_canonical(width, height, b.finish()))
    }

    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Result<Self, MaskError>
    where
        F: FnMut(usize, usize) -> bool,
    {
        check_dims(width, height)?;
        let mut b = RleBuilder::new();
        for y in 0..height {
            for x in 0..width {
                b.push(f(x, y), 1);
            }
        }
        Ok(Self::from_canonical(width, height, b.finish()))
    }

    /// Validates and wraps an RLE run list.
    pub fn from_rle(width: usize, height: usize, rle: Vec<u64>) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        if let Some(index) = rle.iter().skip(1).position(|&r| r == 0) {
            return Err(MaskError::NonCanonical { index: index + 1 });
        }
        let actual: u64 = rle.iter().sum();
        let expected = (width * height) as u64;
        if actual != expected {
            return Err(MaskError::BadRunSum { expected, actual });
        }
        Ok(Self::from_canonical(width, height, rle))
    }

    fn from_canonical(width: usize, height: usize, rle: Vec<u64>) -> Self {
        let popcount = rle.iter().skip(1).step_by(2).sum();
        Self {
            width,
            height,
            rle,
            popcount,
        }
    }

    pub fn empty(width: usize, height: usize) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        Ok(Self::from_canonical(width, height, vec![(width * height) as u64]))
    }

    pub fn full(width: usize, height: usize) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        Ok(Self::from_canonical(width, height, vec![0, (width * height) as u64]))
    }

    /// Filled rectangle; the box is clipped to the raster.
    pub fn from_bbox(width: usize, height: usize, bbox: BBox) -> Result<Self, MaskError> {
        Self::from_fn(width, height, |x, y| bbox.contains_pixel(x, y))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn area(&self) -> u64 {
        (self.width * self.height) as u64
    }

    pub fn rle(&self) -> &[u64] {
        &self.rle
    }

    /// Number of on-pixels.
    pub fn popcount(&self) -> u64 {
        self.popcount
    }

    pub fn is_empty(&self) -> bool {
        self.popcount == 0
    }

    /// `(value, length)` runs, skipping the empty leading run.
    pub fn runs(&self) -> impl Iterator<Item = (bool, u64)> + '_ {
        self.rle
            .iter()
            .enumerate()
            .filter(|(_, &len)| len > 0)
            .map(|(i, &len)| (i % 2 == 1, len))
    }

    /// Half-open linear index ranges of on-pixels in scan order.
    pub fn on_spans(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.rle.iter().enumerate().filter_map(move |(i, &len)| {
            let start = pos;
            pos += len;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    pub fn decode(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for (value, len) in self.runs() {
            out.extend(std::iter::repeat_n(value, len as usize));
        }
        out
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        let target = (y * self.width + x) as u64;
        self.on_spans().any(|(s, e)| (s..e).contains(&target))
    }

    fn same_dims(&self, other: &Self) -> Result<(), MaskError> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(MaskError::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            })
        }
    }

    /// Pixel-wise `op(self, other)` evaluated run by run.
    pub fn combine(&self, other: &Self, op: impl Fn(bool, bool) -> bool) -> Result<Self, MaskError> {
        self.same_dims(other)?;
        let mut out = RleBuilder::new();
        let mut a = self.runs();
        let mut b = other.runs();
        let mut ra = a.next();
        let mut rb = b.next();
        while let (Some((va, la)), Some((vb, lb))) = (ra, rb) {
            let step = la.min(lb);
            out.push(op(va, vb), step);
            ra = if la > step { Some((va, la - step)) } else { a.next() };
            rb = if lb > step { Some((vb, lb - step)) } else { b.next() };
        }
        Ok(Self::from_canonical(self.width, self.height, out.finish()))
    }

    pub fn union(&self, other: &Self) -> Result<Self, MaskError> {
        self.combine(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self, MaskError> {
        self.combine(other, |a, b| a && b)
    }

    /// Pixels of `self` that are not in `other`.
    pub fn difference(&self, other: &Self) -> Result<Self, MaskError> {
        self.combine(other, |a, b| a && !b)
    }

    pub fn xor(&self, other: &Self) -> Result<Self, MaskError> {
        self.combine(other, |a, b| a != b)
    }

    pub fn complement(&self) -> Self {
        let rle = if self.rle[0] == 0 {
            self.rle[1..].to_vec()
        } else {
            std::iter::once(0).chain(self.rle.iter().copied()).collect()
        };
        Self::from_canonical(self.width, self.height, rle)
    }

    /// Union of any number of same-sized masks; `None` for an empty iterator.
    pub fn union_all<'a, I>(masks: I) -> Result<Option<Self>, MaskError>
    where
        I: IntoIterator<Item = &'a BinaryMask>,
    {
        let mut acc: Option<BinaryMask> = None;
        for m in masks {
            acc = Some(match acc {
                None => m.clone(),
                Some(a) => a.union(m)?,
            });
        }
        Ok(acc)
    }

    /// Smallest half-open box covering every on-pixel; `None` when empty.
    pub fn tight_bbox(&self) -> Option<BBox> {
        let w = self.width as u64;
        let (mut x0, mut y0, mut x1, mut y1) = (u64::MAX, u64::MAX, 0u64, 0u64);
        for (start, end) in self.on_spans() {
            let last = end - 1;
            let (r0, c0) = (start / w, start % w);
            let (r1, c1) = (last / w, last % w);
            y0 = y0.min(r0);
            y1 = y1.max(r1 + 1);
            if r0 == r1 {
                x0 = x0.min(c0);
                x1 = x1.max(c1 + 1);
            } else {
                // A run wrapping a row boundary touches column 0 and the last column.
                x0 = 0;
                x1 = w;
            }
        }
        (y0 != u64::MAX).then(|| BBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }
}
