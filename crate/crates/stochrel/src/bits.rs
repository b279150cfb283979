//! Dense bit matrices for relations over pairs of finite spaces.

/// Row-major dense bit matrix with `rows * cols` cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            words_per_row,
            data: vec![0; rows * words_per_row],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.rows && j < self.cols);
        let w = i * self.words_per_row + j / 64;
        self.data[w] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize) {
        debug_assert!(i < self.rows && j < self.cols);
        let w = i * self.words_per_row + j / 64;
        self.data[w] |= 1 << (j % 64);
    }

    #[inline]
    pub fn clear(&mut self, i: usize, j: usize) {
        let w = i * self.words_per_row + j / 64;
        self.data[w] &= !(1 << (j % 64));
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&w| w != 0)
    }

    /// Set bits of row `i`, ascending.
    pub fn row_ones(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(k, &w)| {
            BitIter(w).map(move |b| k * 64 + b)
        })
    }

    /// All set cells in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |i| self.row_ones(i).map(move |j| (i, j)))
    }

    pub fn intersect(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (w, o) in out.data.iter_mut().zip(&other.data) {
            *w &= o;
        }
        out
    }

    pub fn is_subset_of(&self, other: &BitMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.data.iter().zip(&other.data).all(|(a, b)| a & !b == 0)
    }

    /// OR of the given rows, as a word vector of `cols` bits.
    pub fn union_of_rows<I: IntoIterator<Item = usize>>(&self, rows: I) -> Vec<u64> {
        let mut acc = vec![0u64; self.words_per_row];
        for i in rows {
            for (a, w) in acc.iter_mut().zip(self.row(i)) {
                *a |= w;
            }
        }
        acc
    }
}

/// Set bits of a single word, ascending.
pub(crate) struct BitIter(pub u64);

impl Iterator for BitIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(b)
    }
}

pub(crate) fn word_ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words
        .iter()
        .enumerate()
        .flat_map(|(k, &w)| BitIter(w).map(move |b| k * 64 + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_iterate() {
        let mut m = BitMatrix::new(3, 70);
        m.set(0, 0);
        m.set(1, 63);
        m.set(1, 64);
        m.set(2, 69);
        assert!(m.get(1, 63) && m.get(1, 64) && !m.get(1, 65));
        assert_eq!(m.count_ones(), 4);
        assert_eq!(m.row_ones(1).collect::<Vec<_>>(), vec![63, 64]);
        assert_eq!(
            m.ones().collect::<Vec<_>>(),
            vec![(0, 0), (1, 63), (1, 64), (2, 69)]
        );
        m.clear(1, 64);
        assert_eq!(m.row_ones(1).collect::<Vec<_>>(), vec![63]);
    }

    #[test]
    fn subset_and_intersect() {
        let mut a = BitMatrix::new(2, 2);
        a.set(0, 0);
        a.set(1, 1);
        let mut b = a.clone();
        b.set(0, 1);
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert_eq!(a.intersect(&b), a);
    }
}
