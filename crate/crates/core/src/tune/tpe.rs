//! Tree-structured Parzen Estimator.
//!
//! Completed trials are split into a good set (the top `gamma` fraction by
//! objective) and a bad set. Each parameter gets two densities, `l` over the
//! good set and `g` over the bad set; candidates are drawn from `l` and the
//! one maximizing `Σ ln l(x) - ln g(x)` over parameters is suggested.
//!
//! Continuous densities are mixtures of domain-truncated Gaussians, one per
//! observation with a neighbour-gap bandwidth, plus one uniform prior
//! component. Log-uniform parameters are
//! modelled in log space. Categorical densities are Laplace-smoothed counts.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::erf::erf;

use super::scheduler::{TrialRecord, TrialStatus};
use super::search::sample_assignment;
use super::space::{Assignment, Domain, ParamValue, SearchSpace};
use crate::seed::StageRng;
use rand::SeedableRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpeSettings {
    /// Fraction of completed trials forming the good set.
    pub gamma: f64,
    /// Candidates drawn from `l` per suggestion.
    pub n_candidates: usize,
    /// Completed trials required before leaving random sampling.
    pub n_startup: usize,
}

impl Default for TpeSettings {
    fn default() -> Self {
        TpeSettings {
            gamma: 0.25,
            n_candidates: 24,
            n_startup: 10,
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Mixture of truncated Gaussians over `[lo, hi]` plus a uniform prior.
/// Each kernel's bandwidth is the larger gap to its sorted neighbours, so
/// dense clusters of observations get narrow kernels.
#[derive(Debug, Clone)]
struct Parzen {
    lo: f64,
    hi: f64,
    centers: Vec<f64>,
    bandwidths: Vec<f64>,
    /// Mass of each kernel inside `[lo, hi]`.
    mass: Vec<f64>,
}

impl Parzen {
    fn fit(observations: &[f64], lo: f64, hi: f64) -> Self {
        let width = hi - lo;
        let mut centers = observations.to_vec();
        centers.sort_by(f64::total_cmp);
        let n = centers.len();
        let floor = width / (n as f64 + 1.0).min(100.0);
        let bandwidths: Vec<f64> = (0..n)
            .map(|k| {
                let left = if k == 0 { centers[k] - lo } else { centers[k] - centers[k - 1] };
                let right = if k + 1 == n { hi - centers[k] } else { centers[k + 1] - centers[k] };
                left.max(right).clamp(floor, width)
            })
            .collect();
        let mass = centers
            .iter()
            .zip(&bandwidths)
            .map(|(&mu, &h)| (normal_cdf((hi - mu) / h) - normal_cdf((lo - mu) / h)).max(1e-300))
            .collect();
        Parzen {
            lo,
            hi,
            centers,
            bandwidths,
            mass,
        }
    }

    fn density(&self, x: f64) -> f64 {
        let kernels: f64 = self
            .centers
            .iter()
            .zip(&self.bandwidths)
            .zip(&self.mass)
            .map(|((&mu, &h), &z)| {
                let u = (x - mu) / h;
                (-0.5 * u * u).exp() / (h * (2.0 * std::f64::consts::PI).sqrt() * z)
            })
            .sum();
        let prior = 1.0 / (self.hi - self.lo);
        (kernels + prior) / (self.centers.len() + 1) as f64
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let component = rng.gen_range(0..=self.centers.len());
        if component == self.centers.len() {
            return rng.gen_range(self.lo..self.hi);
        }
        let (mu, h) = (self.centers[component], self.bandwidths[component]);
        let normal = Normal::new(mu, h).expect("positive bandwidth");
        for _ in 0..100 {
            let x = normal.sample(rng);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        mu.clamp(self.lo, self.hi)
    }
}

/// Laplace-smoothed frequencies over choice indices.
#[derive(Debug, Clone)]
struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    fn fit(observations: &[usize], k: usize) -> Self {
        let mut counts = vec![1.0; k];
        for &o in observations {
            counts[o] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        Categorical {
            probs: counts.into_iter().map(|c| c / total).collect(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = rng.gen::<f64>();
        for (k, &p) in self.probs.iter().enumerate() {
            if u < p {
                return k;
            }
            u -= p;
        }
        self.probs.len() - 1
    }
}

enum Estimators {
    Continuous {
        good: Parzen,
        bad: Parzen,
        log: bool,
    },
    Categorical {
        good: Categorical,
        bad: Categorical,
        values: Vec<ParamValue>,
    },
}

/// Internal coordinate of an observed value.
fn coordinate(domain: &Domain, value: &ParamValue) -> Option<f64> {
    let x = value.as_f64()?;
    match domain {
        Domain::LogUniform(..) if x > 0.0 => Some(x.ln()),
        Domain::LogUniform(..) => None,
        _ => Some(x),
    }
}

/// Suggests the next assignment from the completed trials in `history`.
/// Falls back to an independent random draw while fewer than
/// `settings.n_startup` trials are done.
pub fn tpe_suggest(
    space: &SearchSpace,
    history: &[TrialRecord],
    seed: u64,
    settings: &TpeSettings,
) -> Assignment {
    let mut rng = StageRng::seed_from_u64(seed);
    let mut done: Vec<&TrialRecord> = history
        .iter()
        .filter(|t| t.status == TrialStatus::Done && t.objective.is_some())
        .collect();
    if done.len() < settings.n_startup.max(1) {
        return sample_assignment(space, &mut rng);
    }
    done.sort_by(|a, b| {
        b.objective
            .unwrap()
            .total_cmp(&a.objective.unwrap())
            .then(a.trial_id.cmp(&b.trial_id))
    });
    let n_good = ((settings.gamma * done.len() as f64).ceil() as usize).clamp(1, done.len());
    let (good, bad) = done.split_at(n_good);

    let estimators: Vec<Estimators> = space
        .params()
        .iter()
        .map(|p| match &p.domain {
            Domain::Choice(values) => {
                let index = |set: &[&TrialRecord]| -> Vec<usize> {
                    set.iter()
                        .filter_map(|t| {
                            let v = t.params.get(&p.name)?;
                            values.iter().position(|c| c == v)
                        })
                        .collect()
                };
                Estimators::Categorical {
                    good: Categorical::fit(&index(good), values.len()),
                    bad: Categorical::fit(&index(bad), values.len()),
                    values: values.clone(),
                }
            }
            Domain::Uniform(lo, hi) | Domain::LogUniform(lo, hi) => {
                let log = matches!(p.domain, Domain::LogUniform(..));
                let (lo, hi) = if log { (lo.ln(), hi.ln()) } else { (*lo, *hi) };
                let coords = |set: &[&TrialRecord]| -> Vec<f64> {
                    set.iter()
                        .filter_map(|t| coordinate(&p.domain, t.params.get(&p.name)?))
                        .map(|x| x.clamp(lo, hi))
                        .collect()
                };
                Estimators::Continuous {
                    good: Parzen::fit(&coords(good), lo, hi),
                    bad: Parzen::fit(&coords(bad), lo, hi),
                    log,
                }
            }
        })
        .collect();

    let mut best: Option<(f64, Assignment)> = None;
    for _ in 0..settings.n_candidates.max(1) {
        let mut score = 0.0;
        let mut values = Vec::with_capacity(estimators.len());
        for (p, est) in space.params().iter().zip(&estimators) {
            let value = match est {
                Estimators::Continuous { good, bad, log } => {
                    let x = good.sample(&mut rng);
                    score += good.density(x).ln() - bad.density(x).ln();
                    if *log {
                        let (lo, hi) = (good.lo.exp(), good.hi.exp());
                        ParamValue::Float(x.exp().clamp(lo, hi))
                    } else {
                        ParamValue::Float(x)
                    }
                }
                Estimators::Categorical { good, bad, values } => {
                    let k = good.sample(&mut rng);
                    score += good.probs[k].ln() - bad.probs[k].ln();
                    values[k].clone()
                }
            };
            values.push((p.name.clone(), value));
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, Assignment(values)));
        }
    }
    best.expect("at least one candidate").1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn done(id: usize, x: f64, objective: f64) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            params: Assignment(vec![("x".into(), ParamValue::Float(x))]),
            objective: Some(objective),
            wall_clock: 0.0,
            status: TrialStatus::Done,
        }
    }

    #[test]
    fn defaults_are_locked() {
        let s = TpeSettings::default();
        assert_eq!(s.gamma, 0.25);
        assert_eq!(s.n_candidates, 24);
        assert_eq!(s.n_startup, 10);
    }

    #[test]
    fn empty_history_matches_random_draw() {
        let space = SearchSpace::parse("x uniform 0 1\nc choice a b").unwrap();
        let a = tpe_suggest(&space, &[], 17, &TpeSettings::default());
        let b = sample_assignment(&space, &mut StageRng::seed_from_u64(17));
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_history_stays_in_domain() {
        let space = SearchSpace::parse("x uniform -1 2\nlr loguniform 1e-3 1").unwrap();
        let history: Vec<TrialRecord> = (0..20)
            .map(|i| TrialRecord {
                trial_id: i,
                params: Assignment(vec![
                    ("x".into(), ParamValue::Float(0.5)),
                    ("lr".into(), ParamValue::Float(0.01)),
                ]),
                objective: Some(1.0),
                wall_clock: 0.0,
                status: TrialStatus::Done,
            })
            .collect();
        for seed in 0..50 {
            let a = tpe_suggest(&space, &history, seed, &TpeSettings::default());
            let x = a.get("x").unwrap().as_f64().unwrap();
            let lr = a.get("lr").unwrap().as_f64().unwrap();
            assert!((-1.0..=2.0).contains(&x));
            assert!((1e-3..=1.0).contains(&lr));
        }
    }

    #[test]
    fn concentrates_near_good_region() {
        let space = SearchSpace::parse("x uniform 0 10").unwrap();
        let history: Vec<TrialRecord> = (0..40)
            .map(|i| {
                let x = i as f64 * 0.25;
                done(i, x, -(x - 3.0).powi(2))
            })
            .collect();
        let xs: Vec<f64> = (0..30)
            .map(|s| {
                tpe_suggest(&space, &history, s, &TpeSettings::default())
                    .get("x")
                    .unwrap()
                    .as_f64()
                    .unwrap()
            })
            .collect();
        let near = xs.iter().filter(|x| (**x - 3.0).abs() < 1.5).count();
        assert!(near >= 25, "{xs:?}");
    }

    #[test]
    fn categorical_prefers_good_choice() {
        let space = SearchSpace::parse("c choice a b c").unwrap();
        let history: Vec<TrialRecord> = (0..30)
            .map(|i| {
                let v = ["a", "b", "c"][i % 3];
                TrialRecord {
                    trial_id: i,
                    params: Assignment(vec![("c".into(), ParamValue::Text(v.into()))]),
                    objective: Some(if v == "b" { 1.0 } else { 0.0 }),
                    wall_clock: 0.0,
                    status: TrialStatus::Done,
                }
            })
            .collect();
        for seed in 0..10 {
            let a = tpe_suggest(&space, &history, seed, &TpeSettings::default());
            assert_eq!(a.get("c"), Some(&ParamValue::Text("b".into())));
        }
    }

    #[test]
    fn truncated_kernel_integrates_to_one() {
        let p = Parzen::fit(&[0.05, 0.1, 0.9], 0.0, 1.0);
        let n = 20_000;
        let integral: f64 = (0..n)
            .map(|k| p.density((k as f64 + 0.5) / n as f64) / n as f64)
            .sum();
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }
}
