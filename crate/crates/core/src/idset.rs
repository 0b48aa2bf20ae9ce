//! A set of small integers with fast minimum extraction.
//!
//! Bits live in a 64-ary tree of words: a bit at level `l + 1` is set when
//! the corresponding word at level `l` is non-zero. Insert, remove-min and
//! membership cost one word per level, and the whole set takes about
//! `n / 8` bytes, so it stays cache resident where a binary heap over the
//! same IDs would not.

#[derive(Debug, Clone)]
pub(crate) struct IdSet {
    /// `levels[0]` holds one bit per ID; the last level is a single word.
    levels: Vec<Vec<u64>>,
    len: usize,
}

impl IdSet {
    pub(crate) fn new(universe: usize) -> Self {
        let mut levels = Vec::new();
        let mut words = universe.div_ceil(64).max(1);
        loop {
            levels.push(vec![0u64; words]);
            if words == 1 {
                break;
            }
            words = words.div_ceil(64);
        }
        Self { levels, len: 0 }
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn insert(&mut self, v: usize) {
        if self.levels[0][v / 64] & (1 << (v % 64)) != 0 {
            return;
        }
        self.len += 1;
        let mut i = v;
        for level in &mut self.levels {
            let (w, b) = (i / 64, i % 64);
            let was_empty = level[w] == 0;
            level[w] |= 1 << b;
            if !was_empty {
                return;
            }
            i = w;
        }
    }

    pub(crate) fn pop_min(&mut self) -> Option<usize> {
        if self.len == 0 {
            return None;
        }
        let mut w = 0;
        for level in self.levels.iter().rev() {
            w = w * 64 + level[w].trailing_zeros() as usize;
        }
        let v = w;
        let mut i = v;
        for level in &mut self.levels {
            let (w, b) = (i / 64, i % 64);
            level[w] &= !(1 << b);
            if level[w] != 0 {
                break;
            }
            i = w;
        }
        self.len -= 1;
        Some(v)
    }

    /// Members in ascending order.
    pub(crate) fn to_vec(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len);
        for (w, &word) in self.levels[0].iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                out.push(w * 64 + bits.trailing_zeros() as usize);
                bits &= bits - 1;
            }
        }
        out
    }
}

impl Extend<usize> for IdSet {
    fn extend<I: IntoIterator<Item = usize>>(&mut self, iter: I) {
        for v in iter {
            self.insert(v);
        }
    }
}
