mod common;

use std::collections::HashMap;

use indexmap::IndexMap;
use proptest::prelude::*;
use recbench_core::atomic::{Column, Frame, SourceKind};
use recbench_core::pipeline::{leave_one_out, ratio_split, SplitOrder, SplitResult};

fn frame(users: &[u32], stamps: &[f64]) -> Frame {
    Frame::from_columns(
        SourceKind::Inter,
        IndexMap::from([
            ("user_id".to_string(), Column::Id(users.to_vec())),
            ("item_id".to_string(), Column::Id((0..users.len() as u32).collect())),
            ("timestamp".to_string(), Column::Float(stamps.to_vec())),
        ]),
    )
    .unwrap()
}

fn dataset() -> impl Strategy<Value = (Vec<u32>, Vec<f64>)> {
    (1usize..200).prop_flat_map(|n| {
        (
            proptest::collection::vec(1u32..15, n),
            proptest::collection::vec((0u32..40).prop_map(f64::from), n),
        )
    })
}

fn is_partition(split: &SplitResult, n: usize) -> bool {
    let mut all: Vec<usize> = split.train.iter().chain(&split.valid).chain(&split.test).copied().collect();
    all.sort_unstable();
    all == (0..n).collect::<Vec<_>>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn leave_one_out_holds_out_the_newest((users, ts) in dataset()) {
        let split = leave_one_out(&frame(&users, &ts)).unwrap();
        prop_assert!(is_partition(&split, users.len()));
        for &t in &split.test {
            let u = users[t];
            // Nothing of the same user is newer than the test row, and ties
            // resolve to the later row.
            for r in 0..users.len() {
                if users[r] == u && r != t {
                    prop_assert!(ts[r] < ts[t] || (ts[r] == ts[t] && r < t));
                }
            }
        }
        for &v in &split.valid {
            let u = users[v];
            for &r in &split.train {
                if users[r] == u {
                    prop_assert!(ts[r] <= ts[v]);
                }
            }
        }
        let per_user = users.iter().fold(HashMap::new(), |mut m, u| { *m.entry(u).or_insert(0usize) += 1; m });
        prop_assert_eq!(split.test.len(), per_user.values().filter(|&&c| c >= 2).count());
        prop_assert_eq!(split.valid.len(), per_user.values().filter(|&&c| c >= 3).count());
    }

    #[test]
    fn ratio_split_counts_match_oracle((users, ts) in dataset()) {
        let split = ratio_split(&frame(&users, &ts), &[0.8, 0.1, 0.1], SplitOrder::Temporal, 1).unwrap();
        prop_assert!(is_partition(&split, users.len()));
        let mut counts: HashMap<u32, [usize; 4]> = HashMap::new();
        for &u in &users {
            counts.entry(u).or_default()[0] += 1;
        }
        for (part, rows) in [&split.train, &split.valid, &split.test].into_iter().enumerate() {
            for &r in rows {
                counts.get_mut(&users[r]).unwrap()[part + 1] += 1;
            }
        }
        for (u, [c, tr, va, te]) in counts {
            prop_assert_eq!((tr, va, te), common::ratio_811_oracle(c), "user {}", u);
        }
        // Temporal: every train row is no newer than every held-out row of its user.
        for &h in split.valid.iter().chain(&split.test) {
            for &r in &split.train {
                if users[r] == users[h] {
                    prop_assert!(ts[r] <= ts[h]);
                }
            }
        }
    }

    #[test]
    fn random_order_is_seeded((users, ts) in dataset(), seed in any::<u64>()) {
        let f = frame(&users, &ts);
        let a = ratio_split(&f, &[0.8, 0.1, 0.1], SplitOrder::Random, seed).unwrap();
        let b = ratio_split(&f, &[0.8, 0.1, 0.1], SplitOrder::Random, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(is_partition(&a, users.len()));
    }
}

#[test]
fn equal_timestamps_keep_file_order() {
    let users = [1; 10];
    let ts = [5.0; 10];
    let split = ratio_split(&frame(&users, &ts), &[0.8, 0.1, 0.1], SplitOrder::Temporal, 0).unwrap();
    assert_eq!(split.train, (0..8).collect::<Vec<_>>());
    assert_eq!(split.valid, vec![8]);
    assert_eq!(split.test, vec![9]);
    let loo = leave_one_out(&frame(&users, &ts)).unwrap();
    assert_eq!((loo.valid.clone(), loo.test.clone()), (vec![8], vec![9]));
}

#[test]
fn oracle_table_spot_values() {
    assert_eq!(common::ratio_811_oracle(2), (2, 0, 0));
    assert_eq!(common::ratio_811_oracle(3), (3, 0, 0));
    assert_eq!(common::ratio_811_oracle(10), (8, 1, 1));
    assert_eq!(common::ratio_811_oracle(11), (9, 2, 0));
    assert_eq!(common::ratio_811_oracle(20), (16, 2, 2));
}
