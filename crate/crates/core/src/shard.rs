use std::fmt;

use serde::{Deserialize, Serialize};

/// Maximum number of shards representable in a [`ShardSet`].
pub const MAX_SHARDS: usize = 64;

/// A set of shard indices backed by a 64-bit mask.
/// Serialized as its bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShardSet(u64);

impl ShardSet {
    pub const EMPTY: ShardSet = ShardSet(0);

    pub fn single(shard: usize) -> Self {
        debug_assert!(shard < MAX_SHARDS);
        ShardSet(1 << shard)
    }

    pub fn from_bits(bits: u64) -> Self {
        ShardSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, shard: usize) {
        debug_assert!(shard < MAX_SHARDS);
        self.0 |= 1 << shard;
    }

    pub fn with(self, shard: usize) -> Self {
        let mut s = self;
        s.insert(shard);
        s
    }

    pub fn contains(self, shard: usize) -> bool {
        shard < MAX_SHARDS && self.0 & (1 << shard) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl FromIterator<usize> for ShardSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = ShardSet::EMPTY;
        for shard in iter {
            s.insert(shard);
        }
        s
    }
}

/// Formats as semicolon-separated indices, e.g. `0;3`.
impl fmt::Display for ShardSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, shard) in self.iter().enumerate() {
            if n > 0 {
                f.write_str(";")?;
            }
            write!(f, "{shard}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_ops() {
        let s: ShardSet = [3, 0, 3, 63].into_iter().collect();
        assert_eq!(s.len(), 3);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 3, 63]);
        assert!(s.contains(63) && !s.contains(1) && !s.contains(64));
        assert_eq!(s.to_string(), "0;3;63");
        assert_eq!(ShardSet::EMPTY.to_string(), "");
    }
}
