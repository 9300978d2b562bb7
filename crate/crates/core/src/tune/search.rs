use rand::Rng;

use super::space::{Assignment, Domain, SearchSpace};
use super::TuneError;
use crate::seed::{stage_rng, StageRng};

/// Full Cartesian product; the last declared parameter varies fastest.
pub fn grid_search(space: &SearchSpace) -> Result<Vec<Assignment>, TuneError> {
    let mut choices = Vec::with_capacity(space.params().len());
    for p in space.params() {
        match &p.domain {
            Domain::Choice(values) => choices.push((p.name.clone(), values.clone())),
            _ => return Err(TuneError::ContinuousDomainInGrid(p.name.clone())),
        }
    }
    let mut out = vec![Assignment::default()];
    for (name, values) in &choices {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.0.push((name.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    Ok(out)
}

/// One independent draw from every domain.
pub fn sample_assignment<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Assignment {
    use super::space::ParamValue;
    Assignment(
        space
            .params()
            .iter()
            .map(|p| {
                let value = match &p.domain {
                    Domain::Choice(values) => values[rng.gen_range(0..values.len())].clone(),
                    Domain::Uniform(lo, hi) => ParamValue::Float(rng.gen_range(*lo..*hi)),
                    Domain::LogUniform(lo, hi) => {
                        ParamValue::Float(rng.gen_range(lo.ln()..hi.ln()).exp().clamp(*lo, *hi))
                    }
                };
                (p.name.clone(), value)
            })
            .collect(),
    )
}

/// `n` i.i.d. assignments, reproducible from `seed`.
pub fn random_search(space: &SearchSpace, n: usize, seed: u64) -> Vec<Assignment> {
    let mut rng: StageRng = stage_rng(seed, "random-search");
    (0..n).map(|_| sample_assignment(space, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tune::space::ParamValue;
    use std::collections::HashSet;

    fn space(text: &str) -> SearchSpace {
        SearchSpace::parse(text).unwrap()
    }

    #[test]
    fn grid_orders() {
        let one = grid_search(&space("a choice 1 2 3")).unwrap();
        assert_eq!(one.iter().map(|a| a.to_string()).collect::<Vec<_>>(), ["a=1", "a=2", "a=3"]);
        let two = grid_search(&space("a choice x y\nb choice 1 2 3")).unwrap();
        let names: Vec<String> = two.iter().map(|a| a.to_string()).collect();
        assert_eq!(
            names,
            ["a=x, b=1", "a=x, b=2", "a=x, b=3", "a=y, b=1", "a=y, b=2", "a=y, b=3"]
        );
    }

    #[test]
    fn grid_of_three_binary_params_is_unique() {
        let g = grid_search(&space("a choice 0 1\nb choice 0 1\nc choice 0 1")).unwrap();
        let set: HashSet<String> = g.iter().map(|a| a.to_string()).collect();
        assert_eq!(g.len(), 8);
        assert_eq!(set.len(), 8);
    }

    #[test]
    fn grid_rejects_continuous() {
        assert!(matches!(
            grid_search(&space("a choice 1\nb uniform 0 1")),
            Err(TuneError::ContinuousDomainInGrid(name)) if name == "b"
        ));
    }

    #[test]
    fn random_search_properties() {
        let single = random_search(&space("a choice 7"), 20, 1);
        assert!(single.iter().all(|a| a.get("a") == Some(&ParamValue::Int(7))));

        let s = space("x uniform 0 1\nlr loguniform 1e-4 1e-1");
        assert_eq!(random_search(&s, 30, 5), random_search(&s, 30, 5));
        assert_ne!(random_search(&s, 30, 5), random_search(&s, 30, 6));

        let draws = random_search(&s, 100_000, 9);
        let mean = draws
            .iter()
            .map(|a| a.get("x").unwrap().as_f64().unwrap())
            .sum::<f64>()
            / draws.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        assert!(draws.iter().all(|a| {
            let lr = a.get("lr").unwrap().as_f64().unwrap();
            (1e-4..=1e-1).contains(&lr)
        }));
    }
}
