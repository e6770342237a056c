//! Download protocols. Each one is a [`Handler`](crate::sim::Handler) per
//! peer plus its own message type.

pub mod committee;
pub mod crash_multi;
pub mod crash_single;
pub mod naive;
pub mod rand;

use crate::model::Encoding;

/// Kind tag plus phase/stage or cycle number.
pub(crate) const HEADER_BITS: u64 = 2 * Encoding::TAG_BITS;

/// Known cells as `(index, value)`, sorted by index.
pub type Pairs = Vec<(usize, u32)>;

pub(crate) fn pairs_bits(enc: &Encoding, pairs: &[(usize, u32)]) -> u64 {
    let runs = if pairs.is_empty() {
        0
    } else {
        1 + pairs.windows(2).filter(|w| w[1].0 != w[0].0 + 1).count()
    };
    runs as u64 * 2 * enc.index_bits() + pairs.len() as u64 * enc.value_bits()
}

/// Partially known output array.
#[derive(Debug, Clone)]
pub struct Res {
    cells: Vec<Option<u32>>,
    unknown: usize,
}

impl Res {
    pub fn new(n: usize) -> Self {
        Res { cells: vec![None; n], unknown: n }
    }

    /// `i` is 1-based.
    pub fn get(&self, i: usize) -> Option<u32> {
        self.cells[i - 1]
    }

    pub fn known(&self, i: usize) -> bool {
        self.cells[i - 1].is_some()
    }

    /// Write-once store. Returns `Err` on a conflicting value.
    pub fn set(&mut self, i: usize, v: u32) -> Result<bool, String> {
        match self.cells[i - 1] {
            None => {
                self.cells[i - 1] = Some(v);
                self.unknown -= 1;
                Ok(true)
            }
            Some(old) if old == v => Ok(false),
            Some(old) => Err(format!("conflicting values {old} and {v} for index {i}")),
        }
    }

    pub fn absorb(&mut self, pairs: &[(usize, u32)]) -> Result<(), String> {
        for &(i, v) in pairs {
            self.set(i, v)?;
        }
        Ok(())
    }

    pub fn unknown(&self) -> usize {
        self.unknown
    }

    pub fn complete(&self) -> bool {
        self.unknown == 0
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn pairs_for(&self, indices: impl IntoIterator<Item = usize>) -> Pairs {
        indices.into_iter().filter_map(|i| self.get(i).map(|v| (i, v))).collect()
    }

    pub fn all_pairs(&self) -> Pairs {
        self.pairs_for(1..=self.n())
    }

    pub fn known_mask(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.is_some()).collect()
    }

    /// The finished array; unknown cells read as 0.
    pub fn output(&self) -> Vec<u32> {
        self.cells.iter().map(|c| c.unwrap_or(0)).collect()
    }
}

/// Contiguous block split: index `i` (1-based) of `n` goes to peer
/// `⌊(i−1)/⌈n/k⌉⌋` (0-based).
pub fn block_owner(i: usize, n: usize, k: usize) -> usize {
    (i - 1) / n.div_ceil(k)
}

/// Spread `indices` (ascending) over `peers` in order, in blocks of
/// `⌈len/peers.len()⌉`.
pub fn spread(indices: &[usize], peers: &[usize]) -> Vec<(usize, usize)> {
    if indices.is_empty() || peers.is_empty() {
        return Vec::new();
    }
    let block = indices.len().div_ceil(peers.len());
    indices.iter().enumerate().map(|(l, &i)| (i, peers[l / block])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn res_is_write_once() {
        let mut r = Res::new(3);
        assert_eq!(r.set(2, 1), Ok(true));
        assert_eq!(r.set(2, 1), Ok(false));
        assert!(r.set(2, 0).is_err());
        assert_eq!(r.unknown(), 2);
        assert_eq!(r.all_pairs(), vec![(2, 1)]);
    }

    #[test]
    fn spread_in_blocks() {
        assert_eq!(spread(&[4, 5, 6], &[0, 2, 3]), vec![(4, 0), (5, 2), (6, 3)]);
        assert_eq!(spread(&[1, 2, 3], &[0, 1, 2, 3]), vec![(1, 0), (2, 1), (3, 2)]);
    }
}
