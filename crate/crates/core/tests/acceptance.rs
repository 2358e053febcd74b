//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use hamsec::adaptive::{adaptive_pmf, adaptive_pmf_series, AttackerConfig};
use hamsec::ball_solver::{
    build_linear_system, intersection_cardinality, partition_size_bounds, partition_size_pmf,
    Template, TemplateDatabase, DEFAULT_BUDGET,
};
use hamsec::combinatorics::intersection_count;
use hamsec::metric_bounds::SystemParams;
use hamsec::reproduce::{self, Reproduction};
use hamsec::simulate::{
    estimate_event, replica_rng, simulate_adaptive, simulate_insider, simulate_outsider, EventKind,
    InsiderMode, SimulationReport,
};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let pass = out.pass && took <= limit;
    let status = if pass { "PASS" } else { "FAIL" };
    let time_note = if took > limit {
        format!(", over the {limit:?} limit")
    } else {
        String::new()
    };
    println!(
        "[{status}] criterion {id:>2}: {title}: {} ({took:.2?}{time_note})",
        out.detail
    );
    pass
}

fn table(rep: Reproduction) -> Outcome {
    let fails = rep.failures();
    let exact = rep
        .cells
        .iter()
        .filter(|c| c.computed == c.expected)
        .count();
    let mut detail = format!(
        "{} cells, {} exact, {} outside tolerance",
        rep.cells.len(),
        exact,
        fails.len()
    );
    for c in fails {
        detail.push_str(&format!(
            "; {} expected {} got {}",
            c.id, c.expected, c.computed
        ));
    }
    Outcome {
        pass: rep.pass,
        detail,
    }
}

fn criterion_5() -> Outcome {
    let mut rng = replica_rng(0x5eed_0005, 0);
    let mut bad = Vec::new();
    for inst in 0..200 {
        let n = rng.gen_range(2..=14u32);
        let users = rng.gen_range(1..=5usize);
        let eps = rng.gen_range(0..=n / 2);
        let db = TemplateDatabase::random(n, users, false, &mut rng).unwrap();
        let sys = build_linear_system(&db, eps, 0).unwrap();
        let mut brute = 0u64;
        for x in 0..1u64 << n {
            let p = Template::from_u64(n, x);
            let inside = db.templates.iter().all(|v| p.distance(v) <= eps);
            brute += inside as u64;
            if sys.membership(&sys.signature(&db, &p)) != inside {
                bad.push(format!("instance {inst}: membership differs at {x:#x}"));
                break;
            }
        }
        let count = intersection_cardinality(&db, eps, DEFAULT_BUDGET).unwrap();
        if count != BigUint::from(brute) {
            bad.push(format!(
                "instance {inst}: count {count} vs brute force {brute}"
            ));
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!("200 instances, {} mismatches {}", bad.len(), bad.join("; ")),
    }
}

fn criterion_6() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for n in 1..=12u32 {
        for eps in 0..=n / 2 {
            for d in 0..=n {
                let v = if d == 0 { 0 } else { (1u64 << d) - 1 };
                let brute = (0..1u64 << n)
                    .filter(|&x| (x.count_ones() <= eps) && ((x ^ v).count_ones() <= eps))
                    .count();
                checked += 1;
                if intersection_count(n, eps, d).unwrap() != BigUint::from(brute) {
                    bad.push(format!("(n={n}, eps={eps}, d={d})"));
                }
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{checked} (n, eps, d) triples, {} mismatches {}",
            bad.len(),
            bad.join(" ")
        ),
    }
}

fn p(n: u32, users: u64, eps: u32) -> SystemParams {
    SystemParams::new(n, users, eps).unwrap()
}

fn criterion_7() -> Outcome {
    const R: u64 = 10_000;
    let mut reports: Vec<(String, SimulationReport)> = Vec::new();
    let mut seed = 0x7000u64;
    let mut next = || {
        seed += 1;
        seed
    };
    let mut event = |label: &str, q: SystemParams, kind: EventKind| {
        let r = estimate_event(&q, kind, next(), R).unwrap();
        reports.push((format!("{label} n={} N={} eps={}", q.n, q.users, q.eps), r));
    };
    for (n, users, eps) in [
        (16, 10, 3),
        (20, 50, 3),
        (24, 100, 4),
        (12, 5, 2),
        (18, 30, 3),
        (22, 20, 5),
        (14, 8, 2),
        (24, 40, 6),
    ] {
        event("strong-nc", p(n, users, eps), EventKind::StrongNc);
    }
    for (n, users, eps) in [
        (20, 50, 3),
        (16, 10, 2),
        (24, 100, 4),
        (18, 20, 3),
        (20, 200, 3),
        (22, 30, 4),
        (14, 6, 2),
        (24, 60, 5),
    ] {
        event("weak-nc", p(n, users, eps), EventKind::WeakNc);
    }
    for (n, users, eps) in [
        (20, 50, 3),
        (24, 100, 4),
        (16, 10, 2),
        (12, 3, 1),
        (18, 40, 3),
        (22, 200, 4),
        (14, 20, 2),
        (24, 10, 6),
    ] {
        event("outsider-trial", p(n, users, eps), EventKind::OutsiderTrial);
    }
    for (n, users, eps) in [
        (16, 5, 2),
        (20, 10, 2),
        (24, 20, 3),
        (18, 8, 2),
        (12, 4, 1),
        (22, 15, 3),
        (16, 3, 3),
    ] {
        event("disjoint", p(n, users, eps), EventKind::Disjoint);
    }
    for (n, users, eps, k) in [
        (12, 10, 2, 1),
        (12, 10, 2, 0),
        (16, 20, 3, 2),
        (14, 15, 2, 1),
        (20, 50, 4, 1),
        (10, 8, 2, 2),
        (18, 30, 3, 0),
    ] {
        event(
            &format!("k-nc k={k}"),
            p(n, users, eps),
            EventKind::KNearCollision { k },
        );
    }
    for (n, users, eps) in [
        (8, 3, 2),
        (10, 3, 2),
        (12, 3, 3),
        (8, 4, 2),
        (10, 4, 3),
        (14, 3, 3),
        (16, 2, 3),
    ] {
        event("master", p(n, users, eps), EventKind::Master);
    }
    for (n, users, eps, ell) in [
        (20, 50, 3, 50),
        (16, 10, 2, 10),
        (18, 20, 3, 5),
        (24, 100, 4, 100),
        (20, 30, 3, 1),
        (14, 6, 1, 6),
        (22, 40, 4, 20),
    ] {
        let q = p(n, users, eps);
        let r = simulate_insider(&q, ell, next(), R, 1, InsiderMode::Redraw).unwrap();
        reports.push((format!("insider n={n} N={users} eps={eps} ell={ell}"), r));
    }
    let points = reports.len();
    let mut fails = Vec::new();
    let mut checks = 0;
    for (label, r) in &reports {
        for c in &r.checks {
            checks += 1;
            if !c.pass {
                fails.push(format!(
                    "{label} {}: {:.5} outside [{:.5}, {:.5}] (se {:.5})",
                    c.name, c.estimate, c.lower, c.upper, c.std_error
                ));
            }
        }
    }
    Outcome {
        pass: fails.is_empty() && points >= 50,
        detail: format!(
            "{points} parameter points, {checks} checks, {} failed {}",
            fails.len(),
            fails.join("; ")
        ),
    }
}

/// Exact urn law in rationals: `total` states, `s` hits, `kappa` misses removed per failure.
fn urn_pmf_exact(total: u64, s: u64, kappa: u64, trials: u64) -> Vec<BigRational> {
    let mut reach = BigRational::from_integer(BigInt::from(1));
    let mut fail = total - s;
    let mut out = Vec::new();
    for _ in 0..trials {
        let pop = BigInt::from(s + fail);
        out.push(&reach * BigRational::new(BigInt::from(s), pop.clone()));
        reach *= BigRational::new(BigInt::from(fail), pop);
        fail = fail.saturating_sub(kappa);
    }
    out
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let mut worst = 0.0f64;
    for (n, s, kappa) in [
        (12u32, 64u64, 4u64),
        (8, 5, 1),
        (10, 1, 3),
        (16, 1000, 20),
        (14, 7, 2),
        (16, 1, 1),
        (12, 64, 0),
    ] {
        let cfg = AttackerConfig::new(s as f64 / (1u64 << n) as f64, kappa as u128, n).unwrap();
        let horizon = cfg.horizon().unwrap_or(400);
        let exact = urn_pmf_exact(1 << n, s, kappa, horizon.min(300));
        for (i, e) in exact.iter().enumerate() {
            let e = e.to_f64().unwrap();
            let got = adaptive_pmf(&cfg, i as u64 + 1).unwrap().to_f64();
            let rel = if e == 0.0 {
                got.abs()
            } else {
                ((got - e) / e).abs()
            };
            worst = worst.max(rel);
        }
        if kappa > 0 {
            let total: f64 = adaptive_pmf_series(&cfg, horizon)
                .unwrap()
                .iter()
                .map(|x| x.to_f64())
                .sum();
            if (total - 1.0).abs() > 1e-6 {
                pass = false;
                notes.push(format!("sum {total} for (2^{n}, {s}, {kappa})"));
            }
        }
    }
    if worst >= 1e-9 {
        pass = false;
    }
    let sim = simulate_adaptive(12, 64, 4, 0x8008, 100_000, 10_000).unwrap();
    let failed: Vec<_> = sim
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.clone())
        .collect();
    pass &= failed.is_empty();
    Outcome {
        pass,
        detail: format!(
            "worst relative error vs exact urn {worst:.2e}; {} simulated bins, failing {:?} {}",
            sim.checks.len(),
            failed,
            notes.join("; ")
        ),
    }
}

fn criterion_9() -> Outcome {
    let mut worst_sum = 0.0f64;
    for n in 1..=64u32 {
        for users in 1..=16u32 {
            let s: f64 = partition_size_pmf(n, users).unwrap().iter().sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
    }
    let mut sandwich_fail = Vec::new();
    let mut sandwiched = 0;
    for n in 1..=30u32 {
        for users in 1..=10u32 {
            let pmf = partition_size_pmf(n, users).unwrap();
            for i in 1..=n {
                let (lo, hi) = partition_size_bounds(n, users, i).unwrap();
                let dp = pmf[i as usize - 1];
                sandwiched += 1;
                if lo.to_f64() > dp * (1.0 + 1e-9) + 1e-300
                    || dp > hi.to_f64() * (1.0 + 1e-9) + 1e-300
                {
                    sandwich_fail.push(format!("(n={n}, N={users}, i={i})"));
                }
            }
        }
    }
    let mc = estimate_event(&p(8, 3, 0), EventKind::PartitionSize, 0x9009, 100_000).unwrap();
    let mc_fail: Vec<_> = mc
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.clone())
        .collect();
    Outcome {
        pass: worst_sum <= 1e-12 && sandwich_fail.is_empty() && mc_fail.is_empty(),
        detail: format!(
            "max |sum - 1| {worst_sum:.1e}; {sandwiched} Stirling sandwiches, {} violated; Monte Carlo bins failing {:?}",
            sandwich_fail.len(),
            mc_fail
        ),
    }
}

fn criterion_10() -> Outcome {
    let in_pool = |threads: usize, f: &(dyn Fn() -> String + Sync)| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(f)
    };
    type Run<'a> = (&'a str, Box<dyn Fn() -> String + Sync>);
    let runs: Vec<Run> = vec![
        (
            "outsider",
            Box::new(|| {
                serde_json::to_string(&simulate_outsider(&p(24, 100, 4), 7, 1000, 100_000).unwrap())
                    .unwrap()
            }),
        ),
        (
            "adaptive",
            Box::new(|| {
                serde_json::to_string(&simulate_adaptive(12, 64, 4, 11, 5000, 10_000).unwrap())
                    .unwrap()
            }),
        ),
        (
            "insider",
            Box::new(|| {
                serde_json::to_string(
                    &simulate_insider(&p(20, 50, 3), 50, 13, 500, 1000, InsiderMode::Redraw)
                        .unwrap(),
                )
                .unwrap()
            }),
        ),
        (
            "weak-nc",
            Box::new(|| {
                serde_json::to_string(
                    &estimate_event(&p(20, 50, 3), EventKind::WeakNc, 17, 2000).unwrap(),
                )
                .unwrap()
            }),
        ),
        (
            "master",
            Box::new(|| {
                serde_json::to_string(
                    &estimate_event(&p(10, 3, 2), EventKind::Master, 19, 2000).unwrap(),
                )
                .unwrap()
            }),
        ),
    ];
    let mut differ = Vec::new();
    for (name, f) in &runs {
        let a = in_pool(1, f.as_ref());
        let b = in_pool(1, f.as_ref());
        let c = in_pool(8, f.as_ref());
        if a != b || a != c {
            differ.push(*name);
        }
    }
    Outcome {
        pass: differ.is_empty(),
        detail: format!(
            "{} randomized runs repeated on 1 and 8 workers, differing: {:?}",
            runs.len(),
            differ
        ),
    }
}

fn main() {
    let results = [
        run(1, "Table 1 reproduction", Duration::from_secs(5), || {
            table(reproduce::table1().unwrap())
        }),
        run(
            2,
            "Table 2 reproduction within +-1",
            Duration::from_secs(60),
            || table(reproduce::table2().unwrap()),
        ),
        run(
            3,
            "Table 3 reproduction within 0.0005",
            Duration::from_secs(10),
            || table(reproduce::table3().unwrap()),
        ),
        run(
            4,
            "scores and robustness thresholds",
            Duration::from_secs(60),
            || table(reproduce::scores().unwrap()),
        ),
        run(
            5,
            "linear-system intersection vs brute force",
            Duration::from_secs(120),
            criterion_5,
        ),
        run(
            6,
            "intersection measure vs pairwise enumeration",
            Duration::from_secs(120),
            criterion_6,
        ),
        run(
            7,
            "Monte Carlo sandwiching of analytic bounds",
            Duration::from_secs(600),
            criterion_7,
        ),
        run(
            8,
            "adaptive law vs exact urn and simulation",
            Duration::from_secs(120),
            criterion_8,
        ),
        run(
            9,
            "partition-size distribution",
            Duration::from_secs(120),
            criterion_9,
        ),
        run(
            10,
            "determinism across worker counts",
            Duration::from_secs(120),
            criterion_10,
        ),
    ];
    let failed = results.iter().filter(|&&r| !r).count();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed,
        failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
