//! Paired source/target windows over the rate difference of two neighbouring
//! nodes on a path.
//!
//! Where the upstream node forwards at least as fast as its successor
//! receives (difference `>= 0`) the interval belongs to a source window `T1`;
//! the following stretch where the successor is ahead (difference `< 0`) is
//! the matching target window `T2`. Flow conservation ties the two together.

use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

/// One `<T1, T2>` pair of contiguous index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPair {
    pub source: Range<usize>,
    pub target: Range<usize>,
}

impl WindowPair {
    /// Both sides non-empty.
    pub fn is_complete(&self) -> bool {
        !self.source.is_empty() && !self.target.is_empty()
    }

    pub fn span(&self) -> Range<usize> {
        let start = if self.source.is_empty() {
            self.target.start
        } else {
            self.source.start
        };
        let end = if self.target.is_empty() {
            self.source.end
        } else {
            self.target.end
        };
        start..end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPairing {
    pub pairs: Vec<WindowPair>,
}

/// Role of one time index within a pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source,
    Target,
}

impl WindowPairing {
    /// Number of indices covered.
    pub fn len(&self) -> usize {
        self.pairs.last().map_or(0, |p| p.span().end)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Per-index role, plus whether the index opens a new pair.
    pub fn roles(&self) -> Vec<(Role, bool)> {
        let mut out = Vec::with_capacity(self.len());
        for p in &self.pairs {
            for (k, _) in p.source.clone().enumerate() {
                out.push((Role::Source, k == 0));
            }
            for (k, _) in p.target.clone().enumerate() {
                out.push((Role::Target, k == 0 && p.source.is_empty()));
            }
        }
        out
    }
}

/// Scans `diff` left to right. A non-negative value extends the current
/// source window while the target window is still empty; a negative value
/// extends the target window; a negative-to-non-negative transition closes
/// the pair and opens a new one. A leading negative run forms a pair with an
/// empty source window. NaN counts as non-negative.
pub fn split(diff: &[f64]) -> WindowPairing {
    let mut pairs = Vec::new();
    let mut source = 0..0;
    let mut target = 0..0;
    let mut open = false;
    for (tau, &d) in diff.iter().enumerate() {
        let negative = d < 0.0;
        if !open {
            open = true;
            source = tau..tau;
            target = tau..tau;
        }
        if negative {
            if target.is_empty() {
                target = tau..tau + 1;
            } else {
                target.end = tau + 1;
            }
        } else if target.is_empty() {
            source.end = tau + 1;
        } else {
            pairs.push(WindowPair {
                source: source.clone(),
                target: target.clone(),
            });
            source = tau..tau + 1;
            target = tau + 1..tau + 1;
        }
    }
    if open {
        if target.is_empty() {
            target = source.end..source.end;
        }
        pairs.push(WindowPair { source, target });
    }
    WindowPairing { pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    /// Independent reference: cut at every negative-to-non-negative
    /// crossing, then split each chunk at its first negative value.
    fn reference(diff: &[f64]) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut cuts = vec![0];
        for i in 1..diff.len() {
            if diff[i - 1] < 0.0 && diff[i] >= 0.0 {
                cuts.push(i);
            }
        }
        cuts.push(diff.len());
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            let chunk: Vec<usize> = (w[0]..w[1]).collect();
            let first_neg = chunk.iter().position(|&i| diff[i] < 0.0).unwrap_or(chunk.len());
            out.push((chunk[..first_neg].to_vec(), chunk[first_neg..].to_vec()));
        }
        out
    }

    fn as_lists(p: &WindowPairing) -> Vec<(Vec<usize>, Vec<usize>)> {
        p.pairs
            .iter()
            .map(|w| (w.source.clone().collect(), w.target.clone().collect()))
            .collect()
    }

    #[test]
    fn alternating_example() {
        let p = split(&[2.0, 1.0, -1.0, -2.0, 3.0, -1.0]);
        assert_eq!(
            p.pairs,
            vec![
                WindowPair { source: 0..2, target: 2..4 },
                WindowPair { source: 4..5, target: 5..6 },
            ]
        );
    }

    #[test]
    fn all_zero_is_one_source_window() {
        let p = split(&[0.0, 0.0, 0.0]);
        assert_eq!(p.pairs.len(), 1);
        assert_eq!(p.pairs[0].source, 0..3);
        assert!(p.pairs[0].target.is_empty());
    }

    #[test]
    fn leading_negative_has_empty_source() {
        let p = split(&[-1.0, 2.0, -1.0]);
        assert_eq!(as_lists(&p), vec![(vec![], vec![0]), (vec![1], vec![2])]);
    }

    #[test]
    fn roles_mark_pair_starts() {
        let p = split(&[-1.0, 2.0, 3.0, -1.0, 1.0]);
        let roles = p.roles();
        assert_eq!(
            roles,
            vec![
                (Role::Target, true),
                (Role::Source, true),
                (Role::Source, false),
                (Role::Target, false),
                (Role::Source, true),
            ]
        );
    }

    #[test]
    fn empty_series_has_no_pairs() {
        assert!(split(&[]).is_empty());
    }

    fn diff_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(
            prop_oneof![Just(0.0), -5.0..5.0f64, Just(-0.0), Just(1e-300), Just(-1e-300)],
            1..200,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn agrees_with_reference(diff in diff_strategy()) {
            prop_assert_eq!(as_lists(&split(&diff)), reference(&diff));
        }

        #[test]
        fn covers_ordered_and_classified(diff in diff_strategy()) {
            let p = split(&diff);
            let mut next = 0;
            for (i, pair) in p.pairs.iter().enumerate() {
                // only the first pair may lack a source; only the last may lack a target
                if pair.source.is_empty() { prop_assert_eq!(i, 0); }
                if pair.target.is_empty() { prop_assert_eq!(i, p.pairs.len() - 1); }
                for t in pair.source.clone() {
                    prop_assert_eq!(t, next);
                    prop_assert!(diff[t] >= 0.0);
                    next += 1;
                }
                for t in pair.target.clone() {
                    prop_assert_eq!(t, next);
                    prop_assert!(diff[t] < 0.0);
                    next += 1;
                }
            }
            prop_assert_eq!(next, diff.len());
            prop_assert_eq!(p.roles().len(), diff.len());
        }

        #[test]
        fn constant_sign_gives_one_pair(v in proptest::collection::vec(0.0..3.0f64, 1..50), neg in any::<bool>()) {
            let diff: Vec<f64> = v.iter().map(|x| if neg { -x - 0.1 } else { *x }).collect();
            prop_assert_eq!(split(&diff).pairs.len(), 1);
        }
    }
}
