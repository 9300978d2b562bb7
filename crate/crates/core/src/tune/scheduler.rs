//! Trial scheduler over a pool of worker threads.
//!
//! The scheduler owns the queue and the history. Workers receive immutable
//! assignments over a channel and send back finished records. Grid and
//! random schedules are fixed up front; TPE asks for a suggestion whenever a
//! worker slot frees up and conditions on everything completed so far.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::search::{grid_search, random_search};
use super::space::{Assignment, ParamValue, SearchSpace};
use super::tpe::{tpe_suggest, TpeSettings};
use super::TuneError;
use crate::seed::derive_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneStrategy {
    Grid,
    Random,
    Tpe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub params: Assignment,
    /// Present iff the trial is `Done`.
    pub objective: Option<f64>,
    /// Seconds spent inside the trial function.
    pub wall_clock: f64,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerSpec {
    pub strategy: TuneStrategy,
    /// Trial budget for random and TPE; grid always runs the full product.
    pub max_trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub tpe: TpeSettings,
}

impl TunerSpec {
    pub fn new(strategy: TuneStrategy, max_trials: usize, seed: u64, workers: usize) -> Self {
        TunerSpec {
            strategy,
            max_trials,
            seed,
            workers,
            tpe: TpeSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        if self.workers == 0 {
            return Err(TuneError::InvalidSpec("workers must be >= 1".into()));
        }
        if self.max_trials == 0 && self.strategy != TuneStrategy::Grid {
            return Err(TuneError::InvalidSpec("max_trials must be >= 1".into()));
        }
        if !(self.tpe.gamma > 0.0 && self.tpe.gamma <= 1.0) {
            return Err(TuneError::InvalidSpec(format!("gamma {}", self.tpe.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TuningOutcome {
    pub best: Option<TrialRecord>,
    /// Every trial, in trial-id order.
    pub history: Vec<TrialRecord>,
    /// Seconds for the whole search.
    pub wall_clock: f64,
}

/// Highest objective among completed trials, lowest trial id on ties.
pub fn best_trial(history: &[TrialRecord]) -> Option<&TrialRecord> {
    history
        .iter()
        .filter(|t| t.status == TrialStatus::Done)
        .filter_map(|t| t.objective.map(|o| (o, t)))
        .fold(None, |best: Option<(f64, &TrialRecord)>, (o, t)| match best {
            Some((bo, bt)) if bo > o || (bo == o && bt.trial_id < t.trial_id) => Some((bo, bt)),
            _ => Some((o, t)),
        })
        .map(|(_, t)| t)
}

fn run_one<F>(trial_fn: &F, trial_id: usize, params: Assignment) -> TrialRecord
where
    F: Fn(&Assignment) -> Result<f64, String>,
{
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| trial_fn(&params)));
    let wall_clock = start.elapsed().as_secs_f64();
    let objective = match result {
        Ok(Ok(v)) if !v.is_nan() => Some(v),
        Ok(Ok(_)) => {
            log::warn!("trial {trial_id} returned NaN");
            None
        }
        Ok(Err(e)) => {
            log::warn!("trial {trial_id} failed: {e}");
            None
        }
        Err(_) => {
            log::warn!("trial {trial_id} panicked");
            None
        }
    };
    TrialRecord {
        trial_id,
        params,
        status: if objective.is_some() {
            TrialStatus::Done
        } else {
            TrialStatus::Failed
        },
        objective,
        wall_clock,
    }
}

/// Runs the search described by `spec`, maximizing `trial_fn`. An `Err`,
/// NaN or panic from `trial_fn` marks the trial `Failed`.
pub fn run_tuning<F>(
    spec: &TunerSpec,
    space: &SearchSpace,
    trial_fn: F,
) -> Result<TuningOutcome, TuneError>
where
    F: Fn(&Assignment) -> Result<f64, String> + Sync,
{
    spec.validate()?;
    let fixed = match spec.strategy {
        TuneStrategy::Grid => Some(grid_search(space)?),
        TuneStrategy::Random => Some(random_search(space, spec.max_trials, spec.seed)),
        TuneStrategy::Tpe => None,
    };
    let total = fixed.as_ref().map_or(spec.max_trials, Vec::len);
    let workers = spec.workers.min(total.max(1));
    let started = Instant::now();
    let trial_fn = &trial_fn;

    let mut history: Vec<TrialRecord> = Vec::with_capacity(total);
    thread::scope(|scope| {
        let (job_tx, job_rx) = crossbeam_channel::unbounded::<(usize, Assignment)>();
        let (done_tx, done_rx) = crossbeam_channel::unbounded::<TrialRecord>();
        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let done_tx = done_tx.clone();
            scope.spawn(move || {
                for (trial_id, params) in job_rx {
                    if done_tx.send(run_one(trial_fn, trial_id, params)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(done_tx);

        let mut next = 0usize;
        let mut in_flight = 0usize;
        loop {
            while in_flight < workers && next < total {
                let params = match &fixed {
                    Some(list) => list[next].clone(),
                    None => tpe_suggest(
                        space,
                        &history,
                        derive_indexed(spec.seed, "tpe", next as u64),
                        &spec.tpe,
                    ),
                };
                job_tx.send((next, params)).expect("workers alive");
                next += 1;
                in_flight += 1;
            }
            if in_flight == 0 {
                break;
            }
            let record = done_rx.recv().expect("worker result");
            in_flight -= 1;
            history.push(record);
        }
        drop(job_tx);
    });
    history.sort_by_key(|t| t.trial_id);
    Ok(TuningOutcome {
        best: best_trial(&history).cloned(),
        history,
        wall_clock: started.elapsed().as_secs_f64(),
    })
}

/// Tab-separated trial log: `trial_id status objective wall_clock <params...>`.
pub fn trial_log(space: &SearchSpace, history: &[TrialRecord]) -> String {
    let mut out = String::from("trial_id\tstatus\tobjective\twall_clock");
    for p in space.params() {
        out.push('\t');
        out.push_str(&p.name);
    }
    out.push('\n');
    for t in history {
        let status = match t.status {
            TrialStatus::Done => "done",
            TrialStatus::Failed => "failed",
        };
        let objective = t.objective.map(|o| format!("{o:?}")).unwrap_or_default();
        let _ = write!(out, "{}\t{status}\t{objective}\t{:.6}", t.trial_id, t.wall_clock);
        for p in space.params() {
            out.push('\t');
            if let Some(v) = t.params.get(&p.name) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// `name = value` lines (TOML) for the best assignment.
pub fn best_config(best: &TrialRecord) -> String {
    let mut out = String::new();
    if let Some(o) = best.objective {
        let _ = writeln!(out, "# trial {} objective {o:?}", best.trial_id);
    }
    for (name, value) in best.params.iter() {
        match value {
            ParamValue::Text(s) => {
                let _ = writeln!(out, "{name} = {s:?}");
            }
            other => {
                let _ = writeln!(out, "{name} = {other}");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn value(a: &Assignment, name: &str) -> f64 {
        a.get(name).unwrap().as_f64().unwrap()
    }

    #[test]
    fn grid_single_worker_keeps_product_order() {
        let space = SearchSpace::parse("a choice 1 2\nb choice 1 2 3").unwrap();
        let spec = TunerSpec::new(TuneStrategy::Grid, 0, 0, 1);
        let out = run_tuning(&spec, &space, |a| Ok(value(a, "a") * 10.0 + value(a, "b"))).unwrap();
        assert_eq!(
            out.history.iter().map(|t| t.trial_id).collect::<Vec<_>>(),
            (0..6).collect::<Vec<_>>()
        );
        assert_eq!(out.history, {
            let mut h = out.history.clone();
            h.sort_by_key(|t| t.trial_id);
            h
        });
        assert_eq!(out.best.unwrap().params.to_string(), "a=2, b=3");
    }

    #[test]
    fn table_objective_argmax() {
        let space = SearchSpace::parse("k choice a b c").unwrap();
        let table: HashMap<&str, f64> = [("a", 1.0), ("b", 3.0), ("c", 2.0)].into();
        let spec = TunerSpec::new(TuneStrategy::Grid, 0, 0, 2);
        let out = run_tuning(&spec, &space, |a| match a.get("k") {
            Some(ParamValue::Text(k)) => Ok(table[k.as_str()]),
            _ => Err("missing".into()),
        })
        .unwrap();
        assert_eq!(out.best.unwrap().params.get("k"), Some(&ParamValue::Text("b".into())));
    }

    #[test]
    fn failures_are_recorded_and_excluded() {
        let space = SearchSpace::parse("x choice 1 2 3 4").unwrap();
        let spec = TunerSpec::new(TuneStrategy::Grid, 0, 0, 2);
        let out = run_tuning(&spec, &space, |a| {
            let x = value(a, "x");
            if x == 4.0 {
                Err("boom".into())
            } else if x == 3.0 {
                panic!("trial panic")
            } else {
                Ok(x)
            }
        })
        .unwrap();
        let failed: Vec<_> = out
            .history
            .iter()
            .filter(|t| t.status == TrialStatus::Failed)
            .map(|t| t.trial_id)
            .collect();
        assert_eq!(failed, vec![2, 3]);
        assert!(out.history.iter().all(|t| t.objective.is_some() == (t.status == TrialStatus::Done)));
        assert_eq!(out.best.unwrap().trial_id, 1);
    }

    #[test]
    fn best_tie_goes_to_lowest_id() {
        let space = SearchSpace::parse("x choice 1 2 3").unwrap();
        let spec = TunerSpec::new(TuneStrategy::Grid, 0, 0, 3);
        let out = run_tuning(&spec, &space, |_| Ok(5.0)).unwrap();
        assert_eq!(out.best.unwrap().trial_id, 0);
    }

    #[test]
    fn random_budget_and_determinism() {
        let space = SearchSpace::parse("x uniform 0 1").unwrap();
        let spec = TunerSpec::new(TuneStrategy::Random, 7, 3, 3);
        let a = run_tuning(&spec, &space, |a| Ok(value(a, "x"))).unwrap();
        let b = run_tuning(&spec, &space, |a| Ok(value(a, "x"))).unwrap();
        assert_eq!(a.history.len(), 7);
        let strip = |h: &[TrialRecord]| h.iter().map(|t| (t.params.clone(), t.objective)).collect::<Vec<_>>();
        assert_eq!(strip(&a.history), strip(&b.history));
    }

    #[test]
    fn tpe_single_worker_is_reproducible() {
        let space = SearchSpace::parse("x uniform -2 2").unwrap();
        let spec = TunerSpec::new(TuneStrategy::Tpe, 25, 8, 1);
        let f = |a: &Assignment| Ok(-(value(a, "x") - 0.7).powi(2));
        let a = run_tuning(&spec, &space, f).unwrap();
        let b = run_tuning(&spec, &space, f).unwrap();
        let strip = |h: &[TrialRecord]| h.iter().map(|t| t.params.clone()).collect::<Vec<_>>();
        assert_eq!(strip(&a.history), strip(&b.history));
        assert_eq!(a.history.len(), 25);
    }

    #[test]
    fn spec_validation() {
        let space = SearchSpace::parse("x uniform 0 1").unwrap();
        assert!(run_tuning(&TunerSpec::new(TuneStrategy::Random, 3, 0, 0), &space, |_| Ok(0.0)).is_err());
        assert!(run_tuning(&TunerSpec::new(TuneStrategy::Tpe, 0, 0, 1), &space, |_| Ok(0.0)).is_err());
        assert!(matches!(
            run_tuning(&TunerSpec::new(TuneStrategy::Grid, 0, 0, 1), &space, |_| Ok(0.0)),
            Err(TuneError::ContinuousDomainInGrid(_))
        ));
    }

    #[test]
    fn log_and_best_config_text() {
        let space = SearchSpace::parse("lr choice 0.1 0.01\nopt choice sgd").unwrap();
        let spec = TunerSpec::new(TuneStrategy::Grid, 0, 0, 1);
        let out = run_tuning(&spec, &space, |a| Ok(value(a, "lr"))).unwrap();
        let log = trial_log(&space, &out.history);
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines[0], "trial_id\tstatus\tobjective\twall_clock\tlr\topt");
        assert!(lines[1].starts_with("0\tdone\t0.1\t"));
        assert!(lines[1].ends_with("\t0.1\tsgd"));
        let best = best_config(out.best.as_ref().unwrap());
        assert!(best.contains("lr = 0.1\n"));
        assert!(best.contains("opt = \"sgd\"\n"));
    }
}
