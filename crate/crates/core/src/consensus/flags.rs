//! Flag-table algebra: the two merge procedures, creator-table derivation
//! and the thresholds built on top of them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{CreatorFlagTable, EventId, FlagTable, FrameNumber, PeerId};
use crate::store::EventStore;

/// Number of distinct creators' roots an event must see to become a root of
/// the next frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RootMajority(pub usize);

/// Default threshold is the nearest integer to (n + 3) / 3, kept strictly
/// between 1 and n. For n = 2 that interval is empty and 2 is used.
pub fn root_majority(n: usize, override_value: Option<usize>) -> Result<RootMajority> {
    if n < 2 {
        return Err(Error::Config(format!("peer list needs at least 2 peers, got {n}")));
    }
    let hi = (n - 1).max(2);
    match override_value {
        Some(v) if (2..=hi).contains(&v) => Ok(RootMajority(v)),
        Some(v) => Err(Error::Config(format!(
            "root majority {v} outside the valid range 2..={hi} for n = {n}"
        ))),
        // (n+3)/3 is never half-integral, so rounding is unambiguous.
        None => Ok(RootMajority(((2 * n + 9) / 6).clamp(2, hi))),
    }
}

fn merge_filtered(
    a: &FlagTable,
    b: &FlagTable,
    keep: impl Fn(FrameNumber) -> bool,
) -> Result<FlagTable> {
    let mut out = BTreeMap::new();
    for (id, frame) in a.iter().chain(b.iter()) {
        if !keep(*frame) {
            continue;
        }
        if let Some(prev) = out.insert(*id, *frame) {
            if prev != *frame {
                return Err(Error::Integrity(format!(
                    "root {id} carries frames {prev} and {frame} in merged flag tables"
                )));
            }
        }
    }
    Ok(FlagTable(out))
}

/// Entries of `a` and `b` whose frame equals `frame`.
pub fn strict_merge_flag_tables(frame: FrameNumber, a: &FlagTable, b: &FlagTable) -> Result<FlagTable> {
    merge_filtered(a, b, |f| f == frame)
}

/// Entries of `a` and `b` whose frame is at least `min_frame`.
pub fn open_merge_flag_tables(min_frame: FrameNumber, a: &FlagTable, b: &FlagTable) -> Result<FlagTable> {
    merge_filtered(a, b, |f| f >= min_frame)
}

/// Resolves an event id to its creator.
pub trait CreatorLookup {
    fn creator_of(&self, id: &EventId) -> Option<PeerId>;
}

impl CreatorLookup for EventStore {
    fn creator_of(&self, id: &EventId) -> Option<PeerId> {
        self.get_event(id).map(|e| e.creator)
    }
}

impl CreatorLookup for BTreeMap<EventId, PeerId> {
    fn creator_of(&self, id: &EventId) -> Option<PeerId> {
        self.get(id).copied()
    }
}

/// For every root in `ft` with frame >= `min_frame`, maps its creator to the
/// smallest such frame.
pub fn derive_creator_table(
    ft: &FlagTable,
    min_frame: FrameNumber,
    lookup: &impl CreatorLookup,
) -> Result<CreatorFlagTable> {
    let mut out: BTreeMap<PeerId, FrameNumber> = BTreeMap::new();
    for (id, &frame) in ft.iter() {
        if frame < min_frame {
            continue;
        }
        let creator = lookup
            .creator_of(id)
            .ok_or_else(|| Error::Integrity(format!("flag table references unknown event {id}")))?;
        out.entry(creator)
            .and_modify(|f| {
                if *f > frame {
                    *f = frame
                }
            })
            .or_insert(frame);
    }
    Ok(CreatorFlagTable(out))
}

/// Finalisation bound of a Visibilis flag table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisibilisBound {
    /// Frames strictly below this may be finalised.
    pub upto: FrameNumber,
    /// `derive_creator_table(ft, upto)`: covers all n creators, minimum `upto`.
    pub creator_table: CreatorFlagTable,
}

/// Highest floor at which the creator table of `ft` still covers all `n`
/// creators.
///
/// That floor is the minimum, over creators, of the largest root frame seen
/// from each creator. Every creator then has a visible root at or above it,
/// so all of its events in lower frames are already ancestors of the table's
/// owner. Returns `None` when some creator has no visible root at all.
pub fn visibilis_bound(
    ft: &FlagTable,
    n: usize,
    lookup: &impl CreatorLookup,
) -> Result<Option<VisibilisBound>> {
    let mut highest: BTreeMap<PeerId, FrameNumber> = BTreeMap::new();
    for (id, &frame) in ft.iter() {
        let creator = lookup
            .creator_of(id)
            .ok_or_else(|| Error::Integrity(format!("flag table references unknown event {id}")))?;
        let slot = highest.entry(creator).or_insert(frame);
        if *slot < frame {
            *slot = frame;
        }
    }
    if highest.len() != n {
        return Ok(None);
    }
    let upto = *highest.values().min().expect("n >= 2");
    let creator_table = derive_creator_table(ft, upto, lookup)?;
    debug_assert_eq!(creator_table.len(), n);
    debug_assert_eq!(creator_table.min_frame(), Some(upto));
    Ok(Some(VisibilisBound {
        upto,
        creator_table,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Digest;
    use proptest::prelude::*;

    fn e(b: u8) -> EventId {
        Digest([b; 32])
    }

    fn p(b: u8) -> PeerId {
        PeerId([b; 32])
    }

    fn ft(entries: &[(u8, u64)]) -> FlagTable {
        entries.iter().map(|&(id, f)| (e(id), FrameNumber(f))).collect()
    }

    #[test]
    fn root_majority_examples() {
        assert_eq!(root_majority(4, None).unwrap(), RootMajority(2));
        assert_eq!(root_majority(10, None).unwrap(), RootMajority(4));
        assert_eq!(root_majority(3, None).unwrap(), RootMajority(2));
        assert_eq!(root_majority(5, None).unwrap(), RootMajority(3));
        assert_eq!(root_majority(7, None).unwrap(), RootMajority(3));
        assert_eq!(root_majority(2, None).unwrap(), RootMajority(2));
        assert_eq!(root_majority(10, Some(6)).unwrap(), RootMajority(6));
        assert!(root_majority(4, Some(1)).is_err());
        assert!(root_majority(4, Some(4)).is_err());
        assert!(root_majority(1, None).is_err());
    }

    #[test]
    fn root_majority_is_nearest_integer_for_all_n() {
        for n in 3..200usize {
            let exact = (n as f64 + 3.0) / 3.0;
            let nearest = exact.round() as usize;
            assert_eq!(root_majority(n, None).unwrap().0, nearest.clamp(2, n - 1), "n={n}");
        }
    }

    #[test]
    fn strict_merge_examples() {
        assert_eq!(
            strict_merge_flag_tables(FrameNumber(2), &ft(&[(1, 1), (2, 2)]), &ft(&[(2, 2), (3, 3)])).unwrap(),
            ft(&[(2, 2)])
        );
        assert_eq!(
            strict_merge_flag_tables(FrameNumber(5), &FlagTable::new(), &FlagTable::new()).unwrap(),
            FlagTable::new()
        );
        assert_eq!(
            strict_merge_flag_tables(FrameNumber(1), &ft(&[(1, 1)]), &ft(&[(1, 1)])).unwrap(),
            ft(&[(1, 1)])
        );
    }

    #[test]
    fn open_merge_examples() {
        assert_eq!(
            open_merge_flag_tables(FrameNumber(2), &ft(&[(1, 1), (2, 2)]), &ft(&[(3, 3)])).unwrap(),
            ft(&[(2, 2), (3, 3)])
        );
        let a = ft(&[(1, 0), (2, 4)]);
        let b = ft(&[(3, 1)]);
        assert_eq!(
            open_merge_flag_tables(FrameNumber(0), &a, &b).unwrap(),
            ft(&[(1, 0), (2, 4), (3, 1)])
        );
    }

    #[test]
    fn disagreeing_frames_are_integrity_faults() {
        let a = ft(&[(1, 1)]);
        let b = ft(&[(1, 2)]);
        assert!(matches!(open_merge_flag_tables(FrameNumber(0), &a, &b), Err(Error::Integrity(_))));
    }

    fn creators() -> BTreeMap<EventId, PeerId> {
        [(e(1), p(0xA)), (e(2), p(0xA)), (e(3), p(0xB))].into_iter().collect()
    }

    #[test]
    fn derive_creator_table_keeps_smaller() {
        let table = ft(&[(1, 1), (2, 2), (3, 2)]);
        let got = derive_creator_table(&table, FrameNumber(1), &creators()).unwrap();
        assert_eq!(got.0, [(p(0xA), FrameNumber(1)), (p(0xB), FrameNumber(2))].into());
        let got = derive_creator_table(&table, FrameNumber(2), &creators()).unwrap();
        assert_eq!(got.0, [(p(0xA), FrameNumber(2)), (p(0xB), FrameNumber(2))].into());
        assert!(derive_creator_table(&ft(&[(9, 1)]), FrameNumber(0), &creators()).is_err());
    }

    #[test]
    fn visibilis_bound_uses_highest_covering_floor() {
        // A has roots at 0 and 2, B at 0 and 3, C at 0 and 1.
        let lookup: BTreeMap<EventId, PeerId> = [
            (e(1), p(0xA)),
            (e(2), p(0xA)),
            (e(3), p(0xB)),
            (e(4), p(0xB)),
            (e(5), p(0xC)),
            (e(6), p(0xC)),
        ]
        .into_iter()
        .collect();
        let table = ft(&[(1, 0), (2, 2), (3, 0), (4, 3), (5, 0), (6, 1)]);
        let bound = visibilis_bound(&table, 3, &lookup).unwrap().unwrap();
        assert_eq!(bound.upto, FrameNumber(1));
        assert_eq!(bound.creator_table.len(), 3);
        assert!(visibilis_bound(&table, 4, &lookup).unwrap().is_none());
    }

    fn arb_table() -> impl Strategy<Value = FlagTable> {
        // Frame is a function of the id so shared keys always agree.
        proptest::collection::btree_set(0u8..40, 0..20)
            .prop_map(|ids| ids.into_iter().map(|i| (e(i), FrameNumber(u64::from(i % 7)))).collect())
    }

    fn arb_lookup() -> BTreeMap<EventId, PeerId> {
        (0u8..40).map(|i| (e(i), p(i % 5))).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn strict_is_subset_of_open(f in 0u64..7, a in arb_table(), b in arb_table()) {
            let strict = strict_merge_flag_tables(FrameNumber(f), &a, &b).unwrap();
            let open = open_merge_flag_tables(FrameNumber(f), &a, &b).unwrap();
            for (id, fr) in strict.iter() {
                prop_assert_eq!(open.get(id), Some(*fr));
            }
            let mut union = a.0.clone();
            union.extend(b.0.iter().map(|(k, v)| (*k, *v)));
            prop_assert_eq!(open_merge_flag_tables(FrameNumber(0), &a, &b).unwrap().0, union);
        }

        #[test]
        fn creator_table_size_bounded(f in 0u64..7, a in arb_table()) {
            let got = derive_creator_table(&a, FrameNumber(f), &arb_lookup()).unwrap();
            prop_assert!(got.len() <= a.len().min(5));
        }

        #[test]
        fn visibilis_bound_is_highest_full_floor(a in arb_table()) {
            let lookup = arb_lookup();
            let bound = visibilis_bound(&a, 5, &lookup).unwrap();
            // Brute force over floors with the keep-smaller derivation.
            let full: Vec<u64> = (0..8)
                .filter(|&m| derive_creator_table(&a, FrameNumber(m), &lookup).unwrap().len() == 5)
                .collect();
            match bound {
                None => prop_assert!(full.is_empty()),
                Some(b) => {
                    prop_assert_eq!(Some(b.upto.0), full.iter().max().copied());
                    prop_assert_eq!(b.creator_table.min_frame(), Some(b.upto));
                }
            }
        }
    }
}
