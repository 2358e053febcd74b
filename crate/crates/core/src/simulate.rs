//! Monte Carlo simulators and brute-force oracles.
//!
//! Replica r of a run with master seed s draws everything from
//! `ChaCha8Rng::seed_from_u64(s)` on stream r, sequentially: first the
//! database, then guesses round by round. Replicas run in parallel and are
//! collected in index order, so a report does not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::adaptive::{adaptive_pmf, AttackerConfig};
use crate::ball_solver::{
    column_partition, intersection_cardinality, partition_size_pmf, Template, TemplateDatabase,
};
use crate::combinatorics::{ball_volume_capped, pow_complement, LogProb};
use crate::error::{domain, Error, Result};
use crate::master_template::{
    disjoint_balls_probability_bounds, full_master_template_bounds, k_master_template_bounds,
    k_near_collision_probability,
};
use crate::metric_bounds::{
    outsider_bounds, strong_nc_probability, union_hit_bounds, weak_nc_probability_bounds,
    BoundForm, SystemParams,
};

pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub replica: u64,
    /// trial or round count, or a count of objects; `None` when censored
    pub value: Option<u64>,
    pub event: Option<bool>,
}

/// A binomial proportion with its 3-sigma interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Frequency {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Frequency {
    pub fn new(successes: u64, trials: u64) -> Frequency {
        let estimate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let std_error = if trials == 0 {
            0.0
        } else {
            (estimate * (1.0 - estimate) / trials as f64).sqrt()
        };
        Frequency {
            successes,
            trials,
            estimate,
            std_error,
            lower: (estimate - 3.0 * std_error).max(0.0),
            upper: (estimate + 3.0 * std_error).min(1.0),
        }
    }

    /// Within 3 binomial sigmas of the nearest point of [lo, hi], with sigma taken at that point.
    pub fn consistent_with(&self, lo: f64, hi: f64) -> bool {
        let b = self.estimate.clamp(lo, hi);
        let sigma = (b * (1.0 - b) / self.trials.max(1) as f64).sqrt();
        (self.estimate - b).abs() <= 3.0 * sigma
    }
}

/// An estimate compared against an analytic interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichCheck {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub pass: bool,
}

impl SandwichCheck {
    fn frequency(name: &str, f: &Frequency, lo: f64, hi: f64) -> SandwichCheck {
        SandwichCheck {
            name: name.into(),
            lower: lo,
            upper: hi,
            estimate: f.estimate,
            std_error: f.std_error,
            pass: f.consistent_with(lo, hi),
        }
    }

    fn mean(name: &str, values: &[f64], lo: f64, hi: f64) -> SandwichCheck {
        let r = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / r;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
        let se = (var / r).sqrt();
        let b = mean.clamp(lo, hi);
        SandwichCheck {
            name: name.into(),
            lower: lo,
            upper: hi,
            estimate: mean,
            std_error: se,
            pass: (mean - b).abs() <= 3.0 * se,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub kind: String,
    pub seed: u64,
    pub replicas: u64,
    pub parameters: Value,
    pub outcomes: Vec<Outcome>,
    pub censored: u64,
    /// smallest v with at least half the replicas <= v; only when most replicas are uncensored
    pub empirical_median: Option<u64>,
    /// mean of the uncensored values
    pub empirical_mean: Option<f64>,
    /// frequency of `event == Some(true)` among replicas where it was measured
    pub frequency: Option<Frequency>,
    pub checks: Vec<SandwichCheck>,
    pub extra: Value,
}

impl SimulationReport {
    fn assemble(
        kind: &str,
        seed: u64,
        parameters: Value,
        outcomes: Vec<Outcome>,
    ) -> SimulationReport {
        let replicas = outcomes.len() as u64;
        let censored = outcomes.iter().filter(|o| o.value.is_none()).count() as u64;
        let mut vals: Vec<u64> = outcomes.iter().filter_map(|o| o.value).collect();
        vals.sort_unstable();
        let empirical_median =
            (2 * vals.len() as u64 > replicas).then(|| vals[(replicas as usize).div_ceil(2) - 1]);
        let empirical_mean = (!vals.is_empty())
            .then(|| vals.iter().map(|&v| v as f64).sum::<f64>() / vals.len() as f64);
        let measured: Vec<bool> = outcomes.iter().filter_map(|o| o.event).collect();
        let frequency = (!measured.is_empty()).then(|| {
            Frequency::new(
                measured.iter().filter(|&&e| e).count() as u64,
                measured.len() as u64,
            )
        });
        SimulationReport {
            kind: kind.into(),
            seed,
            replicas,
            parameters,
            outcomes,
            censored,
            empirical_median,
            empirical_mean,
            frequency,
            checks: vec![],
            extra: json!({}),
        }
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Values with censored replicas as `None`, sorted with those last.
    fn sorted_values(&self) -> Vec<Option<u64>> {
        let mut v: Vec<Option<u64>> = self.outcomes.iter().map(|o| o.value).collect();
        v.sort_by_key(|x| x.unwrap_or(u64::MAX));
        v
    }

    /// Order-statistic interval around the median: positions R/2 -+ 1.5 sqrt(R).
    pub fn median_interval(&self) -> (Option<u64>, Option<u64>) {
        let v = self.sorted_values();
        if v.is_empty() {
            return (None, None);
        }
        let r = v.len() as f64;
        let lo = ((r / 2.0 - 1.5 * r.sqrt()).floor().max(0.0) as usize).min(v.len() - 1);
        let hi = ((r / 2.0 + 1.5 * r.sqrt()).ceil() as usize).min(v.len() - 1);
        (v[lo], v[hi])
    }
}

pub fn run_replicas<F>(seed: u64, replicas: u64, f: F) -> Vec<Outcome>
where
    F: Fn(&mut ChaCha8Rng) -> (Option<u64>, Option<bool>) + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let (value, event) = f(&mut replica_rng(seed, r));
            Outcome {
                replica: r,
                value,
                event,
            }
        })
        .collect()
}

/// N uniform templates from stream 0 of `seed`.
pub fn generate_database(
    n: u32,
    users: usize,
    seed: u64,
    distinct: bool,
) -> Result<TemplateDatabase> {
    TemplateDatabase::random(n, users, distinct, &mut replica_rng(seed, 0))
}

fn draw(n: u32, users: u64, rng: &mut ChaCha8Rng) -> TemplateDatabase {
    TemplateDatabase::random(n, users as usize, false, rng).expect("non-distinct draw")
}

fn within(t: &Template, db: &TemplateDatabase, eps: u32) -> bool {
    db.templates.iter().any(|v| t.distance(v) <= eps)
}

fn small_params(params: &SystemParams) -> Result<()> {
    if params.users > 1 << 20 {
        return domain(format!("simulation with N = {} is too large", params.users));
    }
    Ok(())
}

/// Uniform guesses against a fresh database until one lands within eps.
/// The event is success at the first trial.
pub fn simulate_outsider(
    params: &SystemParams,
    seed: u64,
    replicas: u64,
    max_trials: u64,
) -> Result<SimulationReport> {
    small_params(params)?;
    if max_trials == 0 {
        return domain("max_trials must be at least 1");
    }
    let SystemParams { n, users, eps, .. } = *params;
    let outcomes = run_replicas(seed, replicas, |rng| {
        let db = draw(n, users, rng);
        for t in 1..=max_trials {
            if within(&Template::random(n, rng), &db, eps) {
                return (Some(t), Some(t == 1));
            }
        }
        (None, Some(false))
    });
    let mut report = SimulationReport::assemble(
        "outsider",
        seed,
        json!({"n": n, "N": users, "eps": eps, "max_trials": max_trials}),
        outcomes,
    );
    let per_trial = 1.0 - pow_complement(params.volume().log_prob(), users as f64).to_f64();
    if let Some(f) = report.frequency {
        report.checks.push(SandwichCheck::frequency(
            "per-trial success",
            &f,
            per_trial,
            per_trial,
        ));
    }
    if 2 * eps <= n {
        let b = outsider_bounds(params, BoundForm::Exact)?;
        let (lo, hi) = (
            b.bound.lower_log2.exp2().ceil(),
            b.bound.upper_log2.exp2().ceil(),
        );
        let (ml, mh) = report.median_interval();
        let pass = ml.is_some_and(|x| x as f64 <= hi) && mh.is_none_or(|x| x as f64 >= lo);
        report.checks.push(SandwichCheck {
            name: "median trials".into(),
            lower: lo,
            upper: hi,
            estimate: report.empirical_median.map_or(f64::INFINITY, |m| m as f64),
            std_error: 0.0,
            pass,
        });
        report.extra = json!({
            "per_trial_probability": per_trial,
            "median_interval": [ml, mh],
            "median_bounds_log2": [b.bound.lower_log2, b.bound.upper_log2],
        });
    }
    Ok(report)
}

/// The urn behind the kappa-adaptive attacker: 2^n states, `success_states`
/// of them hits; every miss removes kappa missing states.
pub fn simulate_adaptive(
    n: u32,
    success_states: u64,
    kappa: u64,
    seed: u64,
    replicas: u64,
    max_trials: u64,
) -> Result<SimulationReport> {
    if n > 62 {
        return domain("adaptive simulation needs n <= 62");
    }
    let total = 1u64 << n;
    if success_states == 0 || success_states > total {
        return domain(format!("success states must lie in 1..=2^{n}"));
    }
    let outcomes = run_replicas(seed, replicas, |rng| {
        let mut fail = total - success_states;
        for t in 1..=max_trials {
            if rng.gen_range(0..success_states + fail) < success_states {
                return (Some(t), None);
            }
            fail = fail.saturating_sub(kappa);
        }
        (None, None)
    });
    let mut report = SimulationReport::assemble(
        "adaptive",
        seed,
        json!({"n": n, "success_states": success_states, "kappa": kappa, "max_trials": max_trials}),
        outcomes,
    );
    let cfg = AttackerConfig::new(success_states as f64 / total as f64, kappa as u128, n)?;
    report.checks = pmf_bin_checks(
        &report,
        |a| adaptive_pmf(&cfg, a).map(|p| p.to_f64()).unwrap_or(0.0),
        10,
    )?;
    Ok(report)
}

/// Groups trial counts 1, 2, ... into about `bins` consecutive bins of similar
/// mass and checks each empirical bin frequency against the law, plus the tail.
fn pmf_bin_checks(
    report: &SimulationReport,
    pmf: impl Fn(u64) -> f64,
    bins: usize,
) -> Result<Vec<SandwichCheck>> {
    let target = 1.0 / bins as f64;
    let r = report.replicas;
    let mut checks = Vec::new();
    let (mut start, mut a, mut mass, mut covered) = (1u64, 1u64, 0.0, 0.0);
    while checks.len() + 1 < bins && a < 1 << 24 {
        mass += pmf(a);
        if mass >= target {
            let hits = report
                .outcomes
                .iter()
                .filter(|o| o.value.is_some_and(|v| (start..=a).contains(&v)))
                .count();
            let f = Frequency::new(hits as u64, r);
            checks.push(SandwichCheck::frequency(
                &format!("trials {start}..={a}"),
                &f,
                mass,
                mass,
            ));
            covered += mass;
            start = a + 1;
            mass = 0.0;
        }
        a += 1;
    }
    let tail = (1.0 - covered).max(0.0);
    let hits = report
        .outcomes
        .iter()
        .filter(|o| o.value.is_none_or(|v| v >= start))
        .count();
    checks.push(SandwichCheck::frequency(
        &format!("trials >= {start}"),
        &Frequency::new(hits as u64, r),
        tail,
        tail,
    ));
    Ok(checks)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InsiderMode {
    /// a fresh database without weak near-collision every round
    Redraw,
    /// the round-0 database throughout
    FixedDb,
}

const REDRAW_ATTEMPTS: u32 = 100_000;

fn draw_without_nc(n: u32, users: u64, eps: u32, rng: &mut ChaCha8Rng) -> Option<TemplateDatabase> {
    (0..REDRAW_ATTEMPTS)
        .map(|_| draw(n, users, rng))
        .find(|db| !brute_force_weak_nc(db, eps).found)
}

/// One round: attacker k draws a template and wins if it lands within eps of another user.
fn insider_round(db: &TemplateDatabase, ell: u64, eps: u32, rng: &mut ChaCha8Rng) -> bool {
    let mut hit = false;
    for k in 0..ell as usize {
        let t = Template::random(db.n, rng);
        hit |= db
            .templates
            .iter()
            .enumerate()
            .any(|(j, v)| j != k && t.distance(v) <= eps);
    }
    hit
}

/// Insider rounds. The value is the first successful round (0 when the
/// database already holds a weak near-collision); the event is success at
/// round 1 given none at round 0.
pub fn simulate_insider(
    params: &SystemParams,
    ell: u64,
    seed: u64,
    replicas: u64,
    max_rounds: u64,
    mode: InsiderMode,
) -> Result<SimulationReport> {
    small_params(params)?;
    let SystemParams { n, users, eps, .. } = *params;
    if ell == 0 || ell > users {
        return domain(format!("ell = {ell} must lie in 1..=N"));
    }
    // (value, round-1 success, round-0 collision, first success after round 0)
    type Row = (Option<u64>, Option<bool>, bool, Option<u64>);
    let rows: Vec<Row> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let rng = &mut replica_rng(seed, r);
            let db = draw(n, users, rng);
            let zero = brute_force_weak_nc(&db, eps).found;
            if users < 2 {
                return (None, None, false, None);
            }
            let mut db = match (mode, zero) {
                (InsiderMode::FixedDb, true) => return (Some(0), None, true, None),
                (InsiderMode::FixedDb, false) => Some(db),
                (InsiderMode::Redraw, _) => None,
            };
            let mut first = None;
            let mut event = None;
            for round in 1..=max_rounds {
                let current = match &db {
                    Some(d) => d.clone(),
                    None => match draw_without_nc(n, users, eps, rng) {
                        Some(d) => d,
                        None => break,
                    },
                };
                let hit = insider_round(&current, ell, eps, rng);
                if round == 1 {
                    event = Some(hit);
                }
                if mode == InsiderMode::FixedDb {
                    db = Some(current);
                }
                if hit {
                    first = Some(round);
                    break;
                }
            }
            let value = if zero { Some(0) } else { first };
            (value, event, zero, first)
        })
        .collect();
    let outcomes = rows
        .iter()
        .enumerate()
        .map(|(r, &(value, event, _, _))| Outcome {
            replica: r as u64,
            value,
            event,
        })
        .collect();
    let mut report = SimulationReport::assemble(
        "insider",
        seed,
        json!({"n": n, "N": users, "eps": eps, "ell": ell, "max_rounds": max_rounds, "mode": mode}),
        outcomes,
    );
    let zero = Frequency::new(rows.iter().filter(|r| r.2).count() as u64, replicas);
    let mut conditional: Vec<u64> = rows.iter().filter_map(|r| r.3).collect();
    conditional.sort_unstable();
    let measured = rows
        .iter()
        .filter(|r| !(mode == InsiderMode::FixedDb && r.2))
        .count();
    let conditional_median = (2 * conditional.len() > measured && measured > 0)
        .then(|| conditional[measured.div_ceil(2) - 1]);
    if users >= 2 {
        let w = weak_nc_probability_bounds(params)?;
        report.checks.push(SandwichCheck::frequency(
            "round-0 weak near-collision",
            &zero,
            w.lower.to_f64(),
            w.upper.to_f64(),
        ));
        if let Some(f) = report.frequency {
            let (lo, hi) = insider_round_bounds(params, ell)?;
            report.checks.push(SandwichCheck::frequency(
                "round success given no round-0 success",
                &f,
                lo,
                hi,
            ));
        }
    }
    report.extra = json!({
        "round0": zero,
        "conditional_median": conditional_median,
        "conditional_censored": measured - conditional.len(),
    });
    Ok(report)
}

/// Bounds on the success probability of one insider round given no weak
/// near-collision: each attacker hits the union of N-1 balls with probability
/// in [(N-1)V - C(N-1,2) I, (N-1)V].
pub fn insider_round_bounds(params: &SystemParams, ell: u64) -> Result<(f64, f64)> {
    let (lo, hi) = union_hit_bounds(params, params.users - 1)?;
    let lo = 1.0 - pow_complement(lo, ell as f64).to_f64();
    let hi = 1.0 - pow_complement(hi.min(LogProb::ONE), ell as f64).to_f64();
    Ok((lo, hi))
}

/// Random-database events with exact or bounded probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum EventKind {
    /// some other template within eps of template 0
    StrongNc,
    /// some pair within eps
    WeakNc,
    /// all pairwise distances exceed 2 eps
    Disjoint,
    /// exactly k other templates within eps of template 0
    KNearCollision { k: u64 },
    /// a vector within eps of every template
    Master,
    /// number of k-subsets whose covering balls all exclude the other templates (n <= 16)
    KMasterCount { k: u64 },
    /// number of column classes; checked per class count
    PartitionSize,
    /// first uniform guess within eps of some template
    OutsiderTrial,
}

fn master_exists(db: &TemplateDatabase, eps: u32) -> bool {
    intersection_cardinality(db, eps, crate::ball_solver::DEFAULT_BUDGET)
        .is_ok_and(|c| c > num_bigint::BigUint::from(0u8))
}

/// Number of k-subsets S that some eps-ball covers while no ball covering S
/// reaches another template: the sets of templates within eps of x, over all
/// x, that have size k and lie in no larger such set.
pub fn k_master_count(db: &TemplateDatabase, eps: u32, k: u64) -> Result<u64> {
    if db.n > 16 || db.len() > 64 {
        return domain("k-master scan needs n <= 16 and N <= 64");
    }
    let mut exact = std::collections::HashSet::new();
    let mut larger = std::collections::HashSet::new();
    for x in 0..1u64 << db.n {
        let p = Template::from_u64(db.n, x);
        let mask = db.templates.iter().enumerate().fold(0u64, |m, (i, v)| {
            if p.distance(v) <= eps {
                m | 1 << i
            } else {
                m
            }
        });
        match (mask.count_ones() as u64).cmp(&k) {
            std::cmp::Ordering::Equal => {
                exact.insert(mask);
            }
            std::cmp::Ordering::Greater => {
                larger.insert(mask);
            }
            std::cmp::Ordering::Less => {}
        }
    }
    Ok(exact
        .iter()
        .filter(|&&s| !larger.iter().any(|&l| s & !l == 0))
        .count() as u64)
}

pub fn estimate_event(
    params: &SystemParams,
    kind: EventKind,
    seed: u64,
    replicas: u64,
) -> Result<SimulationReport> {
    small_params(params)?;
    let SystemParams { n, users, eps, .. } = *params;
    match kind {
        EventKind::KNearCollision { k } if k >= users => return domain("k must be below N"),
        EventKind::KMasterCount { k } if k < 2 || k > users || n > 16 => {
            return domain("k-master counting needs 2 <= k <= N and n <= 16")
        }
        EventKind::Master if n > 64 => return domain("master search needs n <= 64"),
        _ => {}
    }
    let outcomes = run_replicas(seed, replicas, |rng| {
        let db = draw(n, users, rng);
        let v0 = &db.templates[0];
        let close = |e: u32| {
            db.templates[1..]
                .iter()
                .filter(|v| v0.distance(v) <= e)
                .count() as u64
        };
        match kind {
            EventKind::StrongNc => (None, Some(close(eps) > 0)),
            EventKind::WeakNc => (None, Some(brute_force_weak_nc(&db, eps).found)),
            EventKind::Disjoint => (None, Some(!brute_force_weak_nc(&db, 2 * eps).found)),
            EventKind::KNearCollision { k } => {
                let c = close(eps);
                (Some(c), Some(c == k))
            }
            EventKind::Master => (None, Some(master_exists(&db, eps))),
            EventKind::KMasterCount { k } => {
                let c = k_master_count(&db, eps, k).unwrap_or(0);
                (Some(c), Some(c > 0))
            }
            EventKind::PartitionSize => (
                Some(column_partition(&db).map_or(0, |c| c.len() as u64)),
                None,
            ),
            EventKind::OutsiderTrial => (None, Some(within(&Template::random(n, rng), &db, eps))),
        }
    });
    let mut report = SimulationReport::assemble(
        "event",
        seed,
        json!({"n": n, "N": users, "eps": eps, "kind": kind}),
        outcomes,
    );
    let f = report.frequency;
    let exact = |lp: LogProb| (lp.to_f64(), lp.to_f64());
    let interval = match kind {
        EventKind::StrongNc => Some(exact(strong_nc_probability(params))),
        EventKind::WeakNc => {
            let b = weak_nc_probability_bounds(params)?;
            Some((b.lower.to_f64(), b.upper.to_f64()))
        }
        EventKind::Disjoint => {
            let b = disjoint_balls_probability_bounds(params)?;
            Some((b.lower.to_f64(), b.upper.to_f64()))
        }
        EventKind::KNearCollision { k } => Some(exact(k_near_collision_probability(params, k)?)),
        EventKind::Master => {
            let b = full_master_template_bounds(params)?;
            Some((b.lower.to_f64(), b.upper.to_f64()))
        }
        EventKind::OutsiderTrial => {
            let p = 1.0 - pow_complement(params.volume().log_prob(), users as f64).to_f64();
            Some((p, p))
        }
        EventKind::KMasterCount { k } => {
            let b = k_master_template_bounds(params, k)?;
            let values: Vec<f64> = report
                .outcomes
                .iter()
                .map(|o| o.value.unwrap_or(0) as f64)
                .collect();
            // the bounds are on the expected count; clipping at 1 does not apply to a count
            let (lo, hi) = k_master_expected_count_bounds(params, k)?;
            report.checks.push(SandwichCheck::mean(
                "expected k-master count",
                &values,
                lo,
                hi,
            ));
            report.extra = json!({"probability_bounds": b});
            None
        }
        EventKind::PartitionSize => {
            let pmf = partition_size_pmf(n, users as u32)?;
            for (i, &p) in pmf.iter().enumerate() {
                let hits = report
                    .outcomes
                    .iter()
                    .filter(|o| o.value == Some(i as u64 + 1))
                    .count();
                let fr = Frequency::new(hits as u64, replicas);
                report.checks.push(SandwichCheck::frequency(
                    &format!("{} classes", i + 1),
                    &fr,
                    p,
                    p,
                ));
            }
            None
        }
    };
    if let (Some((lo, hi)), Some(f)) = (interval, f) {
        report
            .checks
            .push(SandwichCheck::frequency("event frequency", &f, lo, hi));
    }
    Ok(report)
}

/// Unclipped k-master bounds as plain numbers.
pub fn k_master_expected_count_bounds(params: &SystemParams, k: u64) -> Result<(f64, f64)> {
    let users = params.users;
    let choose = crate::combinatorics::binomial(users, k)?;
    let choose = LogProb::from_biguint(&choose);
    let v = params.volume().log_prob();
    let v2 = ball_volume_capped(params.n, 2 * params.eps)?.log_prob();
    let rest = (users - k) as f64;
    let lo = choose.mul(v.powu(k - 1)).mul(pow_complement(v2, rest));
    let hi = choose.mul(v2.powu(k - 1)).mul(pow_complement(v, rest));
    Ok((lo.to_f64(), hi.to_f64()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WeakNcScan {
    pub found: bool,
    /// (i, j, distance) with i < j
    pub pairs: Vec<(usize, usize, u32)>,
}

/// Every pair of templates within eps.
pub fn brute_force_weak_nc(db: &TemplateDatabase, eps: u32) -> WeakNcScan {
    let mut pairs = Vec::new();
    for i in 0..db.len() {
        for j in i + 1..db.len() {
            let d = db.templates[i].distance(&db.templates[j]);
            if d <= eps {
                pairs.push((i, j, d));
            }
        }
    }
    WeakNcScan {
        found: !pairs.is_empty(),
        pairs,
    }
}

/// Default node budget of the clique search.
pub const CLIQUE_BUDGET: u64 = 10_000_000;

/// An m-subset of templates pairwise within eps, if one exists.
pub fn find_clique(
    db: &TemplateDatabase,
    eps: u32,
    m: usize,
    budget: u64,
) -> Result<Option<Vec<usize>>> {
    if m < 2 {
        return domain("clique size must be at least 2");
    }
    let nn = db.len();
    let words = nn.div_ceil(64);
    let mut adj = vec![vec![0u64; words]; nn];
    for (i, row) in adj.iter_mut().enumerate() {
        for j in 0..nn {
            if i != j && db.templates[i].distance(&db.templates[j]) <= eps {
                row[j / 64] |= 1 << (j % 64);
            }
        }
    }
    let mut nodes = 0u64;
    let mut chosen = Vec::with_capacity(m);
    let all: Vec<u64> = (0..words)
        .map(|w| {
            let live = nn - 64 * w;
            if live >= 64 {
                u64::MAX
            } else {
                (1u64 << live) - 1
            }
        })
        .collect();
    let found = extend_clique(&adj, all, m, &mut chosen, &mut nodes, budget)?;
    Ok(found.then_some(chosen))
}

fn extend_clique(
    adj: &[Vec<u64>],
    cand: Vec<u64>,
    m: usize,
    chosen: &mut Vec<usize>,
    nodes: &mut u64,
    budget: u64,
) -> Result<bool> {
    if chosen.len() == m {
        return Ok(true);
    }
    let count: u32 = cand.iter().map(|w| w.count_ones()).sum();
    if (count as usize) < m - chosen.len() {
        return Ok(false);
    }
    let mut cand = cand;
    for w in 0..cand.len() {
        while cand[w] != 0 {
            *nodes += 1;
            if *nodes > budget {
                return Err(Error::Budget {
                    size: format!("> {budget} nodes"),
                    budget,
                });
            }
            let b = cand[w].trailing_zeros() as usize;
            let v = 64 * w + b;
            cand[w] &= !(1u64 << b);
            // later candidates only, so each subset is visited once
            let next: Vec<u64> = cand.iter().zip(&adj[v]).map(|(c, a)| c & a).collect();
            chosen.push(v);
            if extend_clique(adj, next, m, chosen, nodes, budget)? {
                return Ok(true);
            }
            chosen.pop();
        }
    }
    Ok(false)
}

/// Whether some m templates are pairwise within eps.
pub fn brute_force_multi_nc(
    db: &TemplateDatabase,
    eps: u32,
    m: usize,
    budget: u64,
) -> Result<bool> {
    Ok(find_clique(db, eps, m, budget)?.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32, users: u64, eps: u32) -> SystemParams {
        SystemParams::new(n, users, eps).unwrap()
    }

    #[test]
    fn forced_distinct_database() {
        for seed in 0..20 {
            let db = generate_database(1, 2, seed, true).unwrap();
            assert_ne!(db.templates[0], db.templates[1]);
        }
        assert!(generate_database(2, 5, 0, true).is_err());
        assert_eq!(
            generate_database(20, 30, 9, false).unwrap(),
            generate_database(20, 30, 9, false).unwrap()
        );
    }

    #[test]
    fn full_space_ball_hits_at_once() {
        let r = simulate_outsider(&p(10, 3, 10), 1, 50, 100).unwrap();
        assert!(r.outcomes.iter().all(|o| o.value == Some(1)));
    }

    #[test]
    fn adaptive_full_success() {
        let r = simulate_adaptive(6, 64, 3, 5, 40, 10).unwrap();
        assert!(r.outcomes.iter().all(|o| o.value == Some(1)));
    }

    #[test]
    fn insider_single_user_never_succeeds() {
        let r = simulate_insider(&p(12, 1, 2), 1, 3, 20, 5, InsiderMode::Redraw).unwrap();
        assert_eq!(r.censored, 20);
    }

    #[test]
    fn weak_nc_and_cliques() {
        let t = |v| Template::from_u64(8, v);
        let db = TemplateDatabase::new(8, vec![t(0), t(0xff), t(0)]).unwrap();
        let s = brute_force_weak_nc(&db, 0);
        assert_eq!(s.pairs, vec![(0, 2, 0)]);
        let db = TemplateDatabase::new(8, vec![t(0), t(0b1111)]).unwrap();
        assert!(!brute_force_weak_nc(&db, 3).found);
        let db = TemplateDatabase::new(8, vec![t(0), t(1), t(0xf0), t(3), t(0xf1)]).unwrap();
        assert_eq!(
            find_clique(&db, 2, 3, CLIQUE_BUDGET).unwrap(),
            Some(vec![0, 1, 3])
        );
        assert!(!brute_force_multi_nc(&db, 2, 4, CLIQUE_BUDGET).unwrap());
    }

    #[test]
    fn determinism_across_thread_counts() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                serde_json::to_string(&simulate_outsider(&p(16, 20, 3), 42, 200, 10_000).unwrap())
                    .unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }
}
