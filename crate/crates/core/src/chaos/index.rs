//! Index tuples and the combinatorial classes of the cancellation rule.

use super::ChaosError;
use serde::Serialize;

/// `(i_1, .., i_p)` with entries in `1..=n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IndexTuple {
    entries: Vec<usize>,
    n: usize,
}

impl IndexTuple {
    pub fn new(entries: Vec<usize>, n: usize) -> Result<Self, ChaosError> {
        if entries.iter().any(|e| *e == 0 || *e > n) {
            return Err(ChaosError::InvalidArgument(format!("entries must lie in 1..={n}")));
        }
        Ok(Self { entries, n })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `a_l` = number of positions holding `l`, for `l = 1..=n` (index 0 is `l = 1`).
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut a = vec![0; self.n];
        for e in &self.entries {
            a[e - 1] += 1;
        }
        a
    }

    /// Number of values occurring exactly once.
    pub fn singles(&self) -> usize {
        self.multiplicities().iter().filter(|a| **a == 1).count()
    }

    /// Number of values occurring more than once.
    pub fn repeated(&self) -> usize {
        self.multiplicities().iter().filter(|a| **a > 1).count()
    }

    /// Multiplicities start positive and nondecreasing on the values used,
    /// and vanish afterwards.
    pub fn in_reduced_set(&self) -> bool {
        let a = self.multiplicities();
        let used = self.singles() + self.repeated();
        a[..used].iter().all(|v| *v >= 1)
            && a[..used].windows(2).all(|w| w[0] <= w[1])
            && a[used..].iter().all(|v| *v == 0)
    }

    /// Membership of this tuple (as the partner `J`) in the class with
    /// parameters `(singles, repeated)`: every value `l <= singles` occurs,
    /// and no value `l > singles + repeated` occurs exactly once.
    pub fn in_partner_class(&self, singles: usize, repeated: usize) -> bool {
        let b = self.multiplicities();
        b.iter().enumerate().all(|(i, v)| {
            let l = i + 1;
            (l > singles || *v >= 1) && (l <= singles + repeated || *v != 1)
        })
    }

    /// All tuples of length `p` over `1..=n` in lexicographic order.
    pub fn all(n: usize, p: usize) -> Vec<IndexTuple> {
        let total = n.checked_pow(p as u32).unwrap_or(usize::MAX);
        let mut out = Vec::with_capacity(total.min(1 << 20));
        let mut cur = vec![1; p];
        loop {
            out.push(IndexTuple { entries: cur.clone(), n });
            let mut pos = p;
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                if cur[pos] < n {
                    cur[pos] += 1;
                    cur[pos + 1..].iter_mut().for_each(|v| *v = 1);
                    break;
                }
            }
        }
    }
}

/// Pairs `(I, J)` of length-`2k` tuples over `1..=n` with `I` in the reduced
/// set and `J` outside the partner class of `I`.
pub fn qualifying_pairs(n: usize, k: usize) -> Vec<(IndexTuple, IndexTuple)> {
    let tuples = IndexTuple::all(n, 2 * k);
    let mut out = Vec::new();
    for i in tuples.iter().filter(|t| t.in_reduced_set()) {
        let (m, r) = (i.singles(), i.repeated());
        for j in tuples.iter().filter(|t| !t.in_partner_class(m, r)) {
            out.push((i.clone(), j.clone()));
        }
    }
    out
}
