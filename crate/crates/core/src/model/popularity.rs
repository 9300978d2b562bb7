use super::Scorer;

/// Scores every item by its training degree, identically for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    degrees: Vec<f64>,
}

impl PopularityModel {
    pub fn fit(train_items: &[u32], item_count: usize) -> Self {
        let mut degrees = vec![0.0; item_count];
        for &i in train_items {
            degrees[i as usize] += 1.0;
        }
        PopularityModel { degrees }
    }

    pub fn score(&self, item: u32) -> f64 {
        self.degrees[item as usize]
    }
}

impl Scorer for PopularityModel {
    fn item_count(&self) -> usize {
        self.degrees.len()
    }

    fn score_items(&self, _user: u32, out: &mut [f64]) {
        out.copy_from_slice(&self.degrees);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rank_top_k;

    #[test]
    fn top_item_is_most_popular() {
        let m = PopularityModel::fit(&[0, 0, 0, 0, 0, 1], 2);
        let mut scores = vec![0.0; 2];
        for user in 0..3 {
            m.score_items(user, &mut scores);
            assert_eq!(rank_top_k(&scores, |_| false, 1), vec![0]);
        }
    }

    #[test]
    fn empty_train_scores_zero() {
        let m = PopularityModel::fit(&[], 4);
        let mut scores = vec![1.0; 4];
        m.score_items(0, &mut scores);
        assert_eq!(scores, vec![0.0; 4]);
    }

    #[test]
    fn ranking_matches_sort_by_degree() {
        let items = [3, 1, 3, 2, 2, 0, 3, 5, 5];
        let m = PopularityModel::fit(&items, 6);
        let mut scores = vec![0.0; 6];
        m.score_items(0, &mut scores);
        let mut oracle: Vec<u32> = (0..6).collect();
        oracle.sort_by_key(|&i| (std::cmp::Reverse(items.iter().filter(|&&x| x == i).count()), i));
        assert_eq!(rank_top_k(&scores, |_| false, 6), oracle);
    }
}
