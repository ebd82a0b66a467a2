//! Lazy enumeration of `{0..radix}^len` index tuples in lexicographic order.

/// Odometer over index tuples; the last position turns fastest.
#[derive(Debug, Clone)]
pub struct IndexTuples {
    radix: usize,
    digits: Vec<usize>,
    started: bool,
    exhausted: bool,
}

impl IndexTuples {
    pub fn new(radix: usize, len: usize) -> Self {
        IndexTuples {
            radix,
            digits: vec![0; len],
            started: false,
            exhausted: radix == 0,
        }
    }

    /// Moves to the next tuple without allocating. Returns the lowest
    /// position whose digit changed (everything after it changed too), or
    /// `None` once every tuple has been visited.
    pub fn advance(&mut self) -> Option<usize> {
        if self.exhausted {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(0);
        }
        for pos in (0..self.digits.len()).rev() {
            self.digits[pos] += 1;
            if self.digits[pos] < self.radix {
                return Some(pos);
            }
            self.digits[pos] = 0;
        }
        self.exhausted = true;
        None
    }

    pub fn digits(&self) -> &[usize] {
        &self.digits
    }

    /// `radix^len`, or `None` on overflow.
    pub fn count(radix: usize, len: usize) -> Option<usize> {
        radix.checked_pow(u32::try_from(len).ok()?)
    }

    /// Lexicographic rank of a tuple.
    pub fn rank(radix: usize, digits: &[usize]) -> usize {
        digits.iter().fold(0, |acc, &d| acc * radix + d)
    }
}

impl Iterator for IndexTuples {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        self.advance().map(|_| self.digits.clone())
    }
}
