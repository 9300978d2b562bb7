use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recbench_core::sampling::{
    sample_pns, sample_rns, select_hardest, AliasTable, DegreeTable, PositiveSet,
};

#[test]
fn alias_table_tracks_weights() {
    let weights = [1.0, 0.0, 3.0, 6.0];
    let table = AliasTable::new(&weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = [0usize; 4];
    let n = 200_000;
    for _ in 0..n {
        counts[table.sample(&mut rng)] += 1;
    }
    assert_eq!(counts[1], 0);
    for (c, w) in counts.iter().zip(weights) {
        let p = w / 10.0;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((*c as f64 / n as f64 - p).abs() < 5.0 * sd + 1e-12);
    }
}

#[test]
fn negatives_never_hit_positives() {
    let users = [0, 0, 0, 1, 1];
    let items = [0, 2, 4, 1, 3];
    let positives = PositiveSet::from_pairs(&users, &items);
    let degrees = DegreeTable::from_items(&items, 6, 0.75).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for user in [0u32, 1] {
        let own: HashSet<u32> = positives.items(user).collect();
        let rns = sample_rns(user, 500, &positives, 6, &mut rng).unwrap();
        let pns = sample_pns(user, 500, &degrees, &positives, &mut rng).unwrap();
        assert!(rns.iter().chain(&pns).all(|i| !own.contains(i) && *i < 6));
    }
}

#[test]
fn exhausted_users_are_an_error() {
    let positives = PositiveSet::from_pairs(&[0, 0, 0], &[0, 1, 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sample_rns(0, 1, &positives, 3, &mut rng).is_err());
}

#[test]
fn hardest_candidate_prefers_lowest_id_on_ties() {
    let scores = [0.5, 2.0, 2.0, -1.0];
    assert_eq!(select_hardest(0, &[3, 2, 1, 0], |_, i| scores[i as usize]), 1);
    assert_eq!(select_hardest(0, &[3, 0], |_, i| scores[i as usize]), 0);
}
