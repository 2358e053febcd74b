//! Exact intersections of Hamming balls around a template database.
//!
//! Coordinates whose database columns are equal or complementary form one
//! class. Relative to a reference template v0, a point p is summarized by
//! P_k = number of coordinates of class k where p differs from v0, and
//! d(p, v_i) <= eps becomes the linear condition `sum_k A_ik P_k <= eps - d(v_i, v0)`.

use std::collections::HashMap;

use itertools::Itertools;
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{binomial_row, ldexp, stirling2, LogProb};
use crate::error::{domain, Error, Result};

/// A binary vector; coordinate i lives in word i / 64, bit i % 64.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Template {
    n: u32,
    words: Vec<u64>,
}

fn word_count(n: u32) -> usize {
    (n as usize).div_ceil(64)
}

impl Template {
    pub fn zeros(n: u32) -> Template {
        Template {
            n,
            words: vec![0; word_count(n)],
        }
    }

    pub fn from_bits(bits: &[bool]) -> Template {
        let mut t = Template::zeros(bits.len() as u32);
        for (i, &b) in bits.iter().enumerate() {
            t.set(i as u32, b);
        }
        t
    }

    /// Low n bits of `v`, bit i as coordinate i.
    pub fn from_u64(n: u32, v: u64) -> Template {
        assert!(n <= 64, "from_u64 needs n <= 64");
        let mut t = Template::zeros(n);
        if n > 0 {
            t.words[0] = if n == 64 { v } else { v & ((1u64 << n) - 1) };
        }
        t
    }

    pub fn random<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Template {
        let mut t = Template {
            n,
            words: (0..word_count(n)).map(|_| rng.gen::<u64>()).collect(),
        };
        t.mask();
        t
    }

    fn mask(&mut self) {
        let r = self.n % 64;
        if r != 0 {
            if let Some(w) = self.words.last_mut() {
                *w &= (1u64 << r) - 1;
            }
        }
    }

    pub fn len(&self) -> u32 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: u32) -> bool {
        self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: u32, b: bool) {
        let (w, m) = ((i / 64) as usize, 1u64 << (i % 64));
        if b {
            self.words[w] |= m;
        } else {
            self.words[w] &= !m;
        }
    }

    pub fn flip(&mut self, i: u32) {
        self.words[(i / 64) as usize] ^= 1u64 << (i % 64);
    }

    pub fn distance(&self, other: &Template) -> u32 {
        debug_assert_eq!(self.n, other.n);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn to_u64(&self) -> Option<u64> {
        (self.n <= 64).then(|| self.words.first().copied().unwrap_or(0))
    }
}

/// An ordered list of N templates of the same length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateDatabase {
    pub n: u32,
    pub templates: Vec<Template>,
}

impl TemplateDatabase {
    pub fn new(n: u32, templates: Vec<Template>) -> Result<TemplateDatabase> {
        if let Some((i, t)) = templates.iter().enumerate().find(|(_, t)| t.len() != n) {
            return domain(format!(
                "template {i} has length {} instead of {n}",
                t.len()
            ));
        }
        Ok(TemplateDatabase { n, templates })
    }

    /// N uniform templates; with `distinct`, duplicates are redrawn.
    pub fn random<R: Rng + ?Sized>(
        n: u32,
        users: usize,
        distinct: bool,
        rng: &mut R,
    ) -> Result<TemplateDatabase> {
        if distinct && n < 64 && users as u64 > 1u64 << n {
            return domain(format!(
                "cannot draw {users} distinct templates of length {n}"
            ));
        }
        let mut templates = Vec::with_capacity(users);
        let mut seen = std::collections::HashSet::new();
        while templates.len() < users {
            let t = Template::random(n, rng);
            if distinct && !seen.insert(t.clone()) {
                continue;
            }
            templates.push(t);
        }
        Ok(TemplateDatabase { n, templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn is_distinct(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.templates.iter().all(|t| seen.insert(t))
    }

    /// Column i packed as N bits.
    fn column(&self, i: u32) -> Vec<u64> {
        let mut c = vec![0u64; self.len().div_ceil(64)];
        for (r, t) in self.templates.iter().enumerate() {
            if t.bit(i) {
                c[r / 64] |= 1 << (r % 64);
            }
        }
        c
    }
}

/// Classes of coordinates with equal or complementary columns, in order of
/// their smallest coordinate.
pub fn column_partition(db: &TemplateDatabase) -> Result<Vec<Vec<u32>>> {
    if db.is_empty() {
        return domain("column partition needs at least one template");
    }
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut classes: Vec<Vec<u32>> = Vec::new();
    for i in 0..db.n {
        let mut c = db.column(i);
        if c[0] & 1 == 1 {
            // Flip so that template 0 reads 0: complementary columns share a key.
            for (w, word) in c.iter_mut().enumerate() {
                let live = db.len() - 64 * w;
                *word = !*word
                    & if live >= 64 {
                        u64::MAX
                    } else {
                        (1u64 << live) - 1
                    };
            }
        }
        let k = *index.entry(c).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        classes[k].push(i);
    }
    Ok(classes)
}

/// The linear system `A P <= e` for a database, threshold and reference template.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionSystem {
    pub n: u32,
    pub eps: u32,
    pub classes: Vec<Vec<u32>>,
    /// N x K, entries +1 (agrees with v0 on the class) or -1 (disagrees everywhere)
    pub sign_matrix: Vec<Vec<i8>>,
    /// eps - d(v_i, v0)
    pub slack: Vec<i64>,
    pub reference_index: usize,
    /// min(eps, |I_k|)
    pub caps: Vec<u32>,
}

pub fn build_linear_system(
    db: &TemplateDatabase,
    eps: u32,
    v0_index: usize,
) -> Result<PartitionSystem> {
    if v0_index >= db.len() {
        return domain(format!(
            "reference index {v0_index} out of range for N = {}",
            db.len()
        ));
    }
    if eps > db.n {
        return domain(format!("epsilon {eps} exceeds n = {}", db.n));
    }
    let classes = column_partition(db)?;
    let v0 = &db.templates[v0_index];
    let mut sign_matrix = Vec::with_capacity(db.len());
    let mut slack = Vec::with_capacity(db.len());
    for (r, v) in db.templates.iter().enumerate() {
        let mut row = Vec::with_capacity(classes.len());
        for (k, class) in classes.iter().enumerate() {
            let diff = class.iter().filter(|&&i| v.bit(i) != v0.bit(i)).count();
            row.push(match diff {
                0 => 1,
                d if d == class.len() => -1,
                d => {
                    return Err(Error::Invariant(format!(
                    "template {r} differs from the reference on {d} of {} coordinates of class {k}",
                    class.len()
                )))
                }
            });
        }
        sign_matrix.push(row);
        slack.push(eps as i64 - v.distance(v0) as i64);
    }
    let caps = classes.iter().map(|c| (c.len() as u32).min(eps)).collect();
    Ok(PartitionSystem {
        n: db.n,
        eps,
        classes,
        sign_matrix,
        slack,
        reference_index: v0_index,
        caps,
    })
}

impl PartitionSystem {
    pub fn class_sizes(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.len() as u32).collect()
    }

    /// P(p): per-class distance from p to the reference.
    pub fn signature(&self, db: &TemplateDatabase, p: &Template) -> Vec<u32> {
        let v0 = &db.templates[self.reference_index];
        self.classes
            .iter()
            .map(|c| c.iter().filter(|&&i| p.bit(i) != v0.bit(i)).count() as u32)
            .collect()
    }

    /// `A P <= e`.
    pub fn membership(&self, signature: &[u32]) -> bool {
        self.sign_matrix.iter().zip(&self.slack).all(|(row, &e)| {
            row.iter()
                .zip(signature)
                .map(|(&a, &p)| a as i64 * p as i64)
                .sum::<i64>()
                <= e
        })
    }

    /// |P-space| = prod_k (cap_k + 1).
    pub fn search_space_size(&self) -> BigUint {
        self.caps
            .iter()
            .map(|&c| BigUint::from(c as u64 + 1))
            .product()
    }

    fn check_budget(&self, budget: u64) -> Result<()> {
        let size = self.search_space_size();
        if size > BigUint::from(budget) {
            return Err(Error::Budget {
                size: size.to_string(),
                budget,
            });
        }
        Ok(())
    }

    /// suffix[k][i]: smallest contribution of classes k.. to row i.
    fn suffix_minima(&self) -> Vec<Vec<i64>> {
        let k = self.classes.len();
        let mut out = vec![vec![0i64; self.slack.len()]; k + 1];
        for c in (0..k).rev() {
            let (head, tail) = out.split_at_mut(c + 1);
            for (i, (o, next)) in head[c].iter_mut().zip(&tail[0]).enumerate() {
                let m = if self.sign_matrix[i][c] < 0 {
                    -(self.caps[c] as i64)
                } else {
                    0
                };
                *o = next + m;
            }
        }
        out
    }

    /// Every feasible signature with `first` fixed for class 0, lexicographically.
    fn walk(&self, first: u32, suffix: &[Vec<i64>], visit: &mut dyn FnMut(&[u32])) {
        let mut sums = vec![0i64; self.slack.len()];
        let mut sig = Vec::with_capacity(self.classes.len());
        if self.extend(0, first, &mut sums, suffix) {
            sig.push(first);
            self.dfs(1, &mut sums, &mut sig, suffix, visit);
        }
    }

    fn extend(&self, k: usize, v: u32, sums: &mut [i64], suffix: &[Vec<i64>]) -> bool {
        let mut ok = true;
        for i in 0..sums.len() {
            sums[i] += self.sign_matrix[i][k] as i64 * v as i64;
            ok &= sums[i] + suffix[k + 1][i] <= self.slack[i];
        }
        if !ok {
            self.retract(k, v, sums);
        }
        ok
    }

    fn retract(&self, k: usize, v: u32, sums: &mut [i64]) {
        for (i, s) in sums.iter_mut().enumerate() {
            *s -= self.sign_matrix[i][k] as i64 * v as i64;
        }
    }

    fn dfs(
        &self,
        k: usize,
        sums: &mut [i64],
        sig: &mut Vec<u32>,
        suffix: &[Vec<i64>],
        visit: &mut dyn FnMut(&[u32]),
    ) {
        if k == self.classes.len() {
            visit(sig);
            return;
        }
        for v in 0..=self.caps[k] {
            if self.extend(k, v, sums, suffix) {
                sig.push(v);
                self.dfs(k + 1, sums, sig, suffix, visit);
                sig.pop();
                self.retract(k, v, sums);
            }
        }
    }

    /// All feasible signatures in lexicographic order.
    pub fn feasible_signatures(&self, budget: u64) -> Result<Vec<Vec<u32>>> {
        self.check_budget(budget)?;
        let suffix = self.suffix_minima();
        let mut out = Vec::new();
        if self.classes.is_empty() {
            return Ok(out);
        }
        for v in 0..=self.caps[0] {
            self.walk(v, &suffix, &mut |s| out.push(s.to_vec()));
        }
        Ok(out)
    }
}

/// Default cap on the number of signature vectors.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// |intersection of B_eps(v_i)| as an exact integer.
pub fn intersection_cardinality(db: &TemplateDatabase, eps: u32, budget: u64) -> Result<BigUint> {
    let sys = build_linear_system(db, eps, 0)?;
    sys.check_budget(budget)?;
    let suffix = sys.suffix_minima();
    let rows: Vec<Vec<BigUint>> = sys
        .class_sizes()
        .iter()
        .map(|&s| binomial_row(s as u64))
        .collect();
    let parts: Vec<BigUint> = (0..=sys.caps[0])
        .into_par_iter()
        .map(|first| {
            let mut total = BigUint::zero();
            sys.walk(first, &suffix, &mut |sig| {
                let mut w = BigUint::one();
                for (k, &p) in sig.iter().enumerate() {
                    w *= &rows[k][p as usize];
                }
                total += w;
            });
            total
        })
        .collect();
    Ok(parts.into_iter().sum())
}

/// Every template within eps of all database templates, sorted.
pub fn enumerate_intersection(
    db: &TemplateDatabase,
    eps: u32,
    budget: u64,
) -> Result<Vec<Template>> {
    let count = intersection_cardinality(db, eps, budget)?;
    if count > BigUint::from(budget) {
        return Err(Error::Budget {
            size: count.to_string(),
            budget,
        });
    }
    let sys = build_linear_system(db, eps, 0)?;
    let v0 = &db.templates[0];
    let mut out = Vec::new();
    for sig in sys.feasible_signatures(budget)? {
        let choices = sys
            .classes
            .iter()
            .zip(&sig)
            .map(|(class, &p)| {
                class
                    .iter()
                    .copied()
                    .combinations(p as usize)
                    .collect::<Vec<_>>()
            })
            .multi_cartesian_product();
        for pick in choices {
            let mut t = v0.clone();
            pick.iter().flatten().for_each(|&i| t.flip(i));
            out.push(t);
        }
        if sys.classes.is_empty() {
            out.push(v0.clone());
        }
    }
    out.sort();
    Ok(out)
}

/// log2 of prod_k 2^{|I_k|} / (|I_k| + 1), a lower bound on 2^n / |P-space|.
pub fn cardinal_reduction_ratio(class_sizes: &[u32]) -> f64 {
    class_sizes
        .iter()
        .map(|&s| s as f64 - (s as f64 + 1.0).log2())
        .sum()
}

/// P(partition has i classes) for i = 1..=n with N uniform templates, by the
/// column-appending Markov chain: with j classes, a new column joins one with
/// probability j / 2^{N-1}.
pub fn partition_size_pmf(n: u32, users: u32) -> Result<Vec<f64>> {
    if n == 0 || users == 0 {
        return domain("partition distribution needs n >= 1 and N >= 1");
    }
    let stay = |j: usize| ldexp(j as f64, -(users as i64 - 1)).min(1.0);
    let mut dist = vec![0.0f64; n as usize + 1];
    dist[1] = 1.0;
    for _ in 1..n {
        let mut next = vec![0.0f64; n as usize + 1];
        for j in 1..=n as usize {
            if dist[j] == 0.0 {
                continue;
            }
            let s = stay(j);
            next[j] += dist[j] * s;
            if j < n as usize {
                next[j + 1] += dist[j] * (1.0 - s);
            }
        }
        dist = next;
    }
    Ok(dist[1..].to_vec())
}

/// Stirling bounds on P(|I| = i): the lower form, then the form with i^{n-i}.
pub fn partition_size_bounds(n: u32, users: u32, i: u32) -> Result<(LogProb, LogProb)> {
    if i == 0 || i > n || users == 0 {
        return domain(format!("class count {i} outside 1..={n}"));
    }
    let mut prod = LogProb::ONE;
    for j in 1..=i {
        let f = LogProb::from_f64(ldexp((j - 1) as f64, -(users as i64 - 1)).min(1.0)).complement();
        prod = prod.mul(f);
    }
    let base = LogProb::from_biguint(&stirling2(n, i)?)
        .mul(LogProb::from_log2(-((users as f64 - 1.0) * (n - i) as f64)))
        .mul(prod);
    let spread = LogProb::from_log2((n - i) as f64 * (i as f64).log2());
    Ok((base, base.mul(spread)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::{ball_count, intersection_count};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn db(n: u32, vals: &[u64]) -> TemplateDatabase {
        TemplateDatabase::new(n, vals.iter().map(|&v| Template::from_u64(n, v)).collect()).unwrap()
    }

    #[test]
    fn partition_trivial_cases() {
        assert_eq!(column_partition(&db(10, &[0b1011])).unwrap().len(), 1);
        assert_eq!(column_partition(&db(10, &[5, 5, 5])).unwrap().len(), 1);
        let p = column_partition(&db(3, &[0b000, 0b011, 0b101])).unwrap();
        assert_eq!(p, vec![vec![0], vec![1], vec![2]]);
        let p = column_partition(&db(4, &[0b0000, 0b0011, 0b1100])).unwrap();
        assert_eq!(p, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn single_ball_and_pair() {
        let one = db(12, &[0x5a5]);
        let s = build_linear_system(&one, 3, 0).unwrap();
        assert_eq!(s.sign_matrix, vec![vec![1]]);
        assert_eq!(s.slack, vec![3]);
        assert_eq!(
            intersection_cardinality(&one, 3, DEFAULT_BUDGET).unwrap(),
            ball_count(12, 3).unwrap()
        );
        let pair = db(12, &[0, 0b11111]);
        let s = build_linear_system(&pair, 3, 0).unwrap();
        assert_eq!(s.slack, vec![3, -2]);
        assert_eq!(
            intersection_cardinality(&pair, 3, DEFAULT_BUDGET).unwrap(),
            intersection_count(12, 3, 5).unwrap()
        );
    }

    #[test]
    fn enumerate_small() {
        let one = db(8, &[0x3c]);
        assert_eq!(
            enumerate_intersection(&one, 0, DEFAULT_BUDGET).unwrap(),
            vec![Template::from_u64(8, 0x3c)]
        );
        let far = db(8, &[0, 0xff]);
        assert!(enumerate_intersection(&far, 3, DEFAULT_BUDGET)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn brute_force_n14() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = TemplateDatabase::random(14, 3, false, &mut rng).unwrap();
        let brute = (0..1u64 << 14)
            .filter(|&x| {
                let p = Template::from_u64(14, x);
                d.templates.iter().all(|v| p.distance(v) <= 4)
            })
            .count();
        assert_eq!(
            intersection_cardinality(&d, 4, DEFAULT_BUDGET).unwrap(),
            BigUint::from(brute)
        );
    }

    #[test]
    fn budget_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = TemplateDatabase::random(64, 8, false, &mut rng).unwrap();
        assert!(matches!(
            intersection_cardinality(&d, 20, 1000),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn reduction_ratio_edges() {
        assert!((cardinal_reduction_ratio(&[10]) - (10.0 - 11f64.log2())).abs() < 1e-12);
        assert_eq!(cardinal_reduction_ratio(&[1; 9]), 0.0);
    }

    #[test]
    fn partition_pmf_edges() {
        assert_eq!(partition_size_pmf(1, 5).unwrap(), vec![1.0]);
        for n in [1u32, 5, 17, 64] {
            for users in 1..=16u32 {
                let s: f64 = partition_size_pmf(n, users).unwrap().iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "{n} {users} {s}");
            }
        }
        let (lo, up) = partition_size_bounds(6, 4, 6).unwrap();
        assert_eq!(lo, up);
        let pmf = partition_size_pmf(6, 4).unwrap();
        assert!((lo.to_f64() - pmf[5]).abs() < 1e-15);
    }
}
