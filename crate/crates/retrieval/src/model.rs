//! Shared domain types: the source array, peers, segments and the message
//! size model.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::ModelError;

/// Identifier of a peer, `1..=k`. Internally peers are addressed by a 0-based
/// `usize`; this type only appears at the edges (configs, traces).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub u32);

impl PeerId {
    pub fn from_index(idx: usize) -> Self {
        PeerId(idx as u32 + 1)
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// The source's array. Cells are `width`-bit words; a bit array has width 1.
/// Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputArray {
    width: u8,
    cells: Vec<u32>,
}

impl InputArray {
    pub fn bits(bits: &[u8]) -> Result<Self, ModelError> {
        if bits.is_empty() {
            return Err(ModelError::Empty);
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(ModelError::NotABit { index: pos + 1, value: bits[pos] as u32 });
        }
        Ok(InputArray { width: 1, cells: bits.iter().map(|&b| b as u32).collect() })
    }

    pub fn words(width: u8, cells: Vec<u32>) -> Result<Self, ModelError> {
        if cells.is_empty() {
            return Err(ModelError::Empty);
        }
        if width == 0 || width > 32 {
            return Err(ModelError::BadWidth(width));
        }
        if width < 32 {
            let limit = 1u64 << width;
            if let Some(pos) = cells.iter().position(|&c| c as u64 >= limit) {
                return Err(ModelError::NotABit { index: pos + 1, value: cells[pos] });
            }
        }
        Ok(InputArray { width, cells })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "input array needs at least one cell");
        InputArray { width: 1, cells: vec![0; n] }
    }

    pub fn random_bits<R: rand::Rng>(n: usize, rng: &mut R) -> Self {
        assert!(n >= 1, "input array needs at least one cell");
        InputArray { width: 1, cells: (0..n).map(|_| rng.gen_range(0..2)).collect() }
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    /// Value at 1-based index `i`.
    pub fn get(&self, i: usize) -> Option<u32> {
        if i == 0 {
            return None;
        }
        self.cells.get(i - 1).copied()
    }

    /// Copy with cell `i` (1-based) replaced.
    pub fn with_cell(&self, i: usize, value: u32) -> Self {
        let mut out = self.clone();
        out.cells[i - 1] = value;
        out
    }
}

/// Read one cell from the source. Accounting is the caller's job.
pub fn source_query(x: &InputArray, i: usize) -> Result<u32, ModelError> {
    x.get(i).ok_or(ModelError::IndexOutOfRange { index: i, n: x.n() })
}

/// What a peer sees when it queries the source. Honest sources answer the
/// same to everyone; byzantine data sources (used by the oracle application)
/// may not.
pub trait Source {
    fn n(&self) -> usize;
    fn width(&self) -> u8;
    /// `peer` is 0-based, `i` is 1-based.
    fn read(&self, peer: usize, i: usize) -> Option<u32>;
}

impl Source for InputArray {
    fn n(&self) -> usize {
        self.cells.len()
    }

    fn width(&self) -> u8 {
        self.width
    }

    fn read(&self, _peer: usize, i: usize) -> Option<u32> {
        self.get(i)
    }
}

/// A contiguous block of the input, 1-based `index` out of `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    /// Last covered global index.
    pub fn end(&self) -> usize {
        self.offset + self.len - 1
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.offset && i <= self.end()
    }

    /// Segment `index` (1-based) of the `(n, seg_len)` partition.
    pub fn nth(n: usize, seg_len: usize, index: usize) -> Segment {
        let offset = (index - 1) * seg_len + 1;
        let len = seg_len.min(n + 1 - offset);
        Segment { index, offset, len }
    }
}

/// A segment together with a claimed value for it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentString {
    pub segment: Segment,
    pub value: Vec<u32>,
}

impl SegmentString {
    pub fn new(segment: Segment, value: Vec<u32>) -> Result<Self, ModelError> {
        if value.len() != segment.len {
            return Err(ModelError::LengthMismatch { expected: segment.len, got: value.len() });
        }
        Ok(SegmentString { segment, value })
    }
}

/// Split `[1, n]` into `⌈n/seg_len⌉` consecutive segments; the last one may be
/// shorter.
pub fn partition_segments(n: usize, seg_len: usize) -> Vec<Segment> {
    assert!(n >= 1 && seg_len >= 1, "partition needs n >= 1 and seg_len >= 1");
    let count = n.div_ceil(seg_len);
    (1..=count).map(|l| Segment::nth(n, seg_len, l)).collect()
}

pub fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Bit costs used to size every payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub n: usize,
    pub k: usize,
    pub width: u8,
}

impl Encoding {
    pub const TAG_BITS: u64 = 8;

    pub fn new(n: usize, k: usize, width: u8) -> Self {
        Encoding { n, k, width }
    }

    pub fn index_bits(&self) -> u64 {
        ceil_log2(self.n) as u64
    }

    pub fn id_bits(&self) -> u64 {
        ceil_log2(self.k) as u64
    }

    pub fn value_bits(&self) -> u64 {
        self.width as u64
    }

    /// Cost of a set of indices sent as runs of consecutive values
    /// (start, length), each field an index.
    pub fn index_set_bits(&self, sorted: &[usize]) -> u64 {
        count_runs(sorted) as u64 * 2 * self.index_bits()
    }

    /// Cost of `(index, value)` pairs sent as an index set plus the values.
    pub fn pairs_bits(&self, sorted: &[usize]) -> u64 {
        self.index_set_bits(sorted) + sorted.len() as u64 * self.value_bits()
    }

    pub fn peer_set_bits(&self, count: usize) -> u64 {
        count as u64 * self.id_bits()
    }
}

/// Number of maximal runs of consecutive integers in a sorted slice.
pub fn count_runs(sorted: &[usize]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[1] != w[0] + 1).count()
}

/// Median of an odd-length multiset (lower median for even lengths).
pub fn median(values: &mut [u32]) -> u32 {
    assert!(!values.is_empty(), "median of empty set");
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}
