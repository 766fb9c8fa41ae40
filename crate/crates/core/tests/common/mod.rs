#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use pbw_core::order::{OutcomeId, PartialOrder, RankedAnswer, Universe};
use pbw_core::voting::{choose, raw_scores, score_table, Profile};
use pbw_core::exec::Execution;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn universe(m: usize) -> Arc<Universe> {
    let names: Vec<String> = (0..m).map(|i| format!("o{i}")).collect();
    Arc::new(Universe::from_names(&names).unwrap())
}

/// Transitive closure of `edges` on `m` nodes as a boolean matrix.
#[allow(clippy::needless_range_loop)]
pub fn closure(m: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; m]; m];
    for &(a, b) in edges {
        r[a][b] = true;
    }
    for k in 0..m {
        for i in 0..m {
            if r[i][k] {
                for j in 0..m {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

pub fn pairs_of(rel: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let m = rel.len();
    (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).filter(|&(i, j)| rel[i][j]).collect()
}

pub fn order_from(u: &Arc<Universe>, rel: &[Vec<bool>]) -> PartialOrder {
    PartialOrder::from_index_pairs(u.clone(), &pairs_of(rel)).unwrap()
}

/// Every strict partial order on `m` labelled elements, found by trying all
/// three states (none, below, above) for each unordered pair and keeping the
/// transitive ones.
pub fn all_partial_orders(m: usize) -> Vec<Vec<Vec<bool>>> {
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    for mut code in 0..total {
        let mut r = vec![vec![false; m]; m];
        for &(i, j) in &pairs {
            match code % 3 {
                1 => r[i][j] = true,
                2 => r[j][i] = true,
                _ => {}
            }
            code /= 3;
        }
        let transitive = (0..m).all(|i| {
            (0..m).all(|j| !r[i][j] || (0..m).all(|k| !r[j][k] || r[i][k]))
        });
        if transitive {
            out.push(r);
        }
    }
    out
}

/// A random strict partial order: a random linear extension plus a random
/// subset of its forward pairs, closed transitively. `forced` pairs are put
/// in the extension order first and always included.
pub fn random_relation<R: Rng>(rng: &mut R, m: usize, forced: &[(usize, usize)], density: f64) -> Vec<Vec<bool>> {
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    // bubble forced pairs into a consistent order
    for _ in 0..m {
        for &(a, b) in forced {
            let pa = perm.iter().position(|&x| x == a).unwrap();
            let pb = perm.iter().position(|&x| x == b).unwrap();
            if pa > pb {
                perm.swap(pa, pb);
            }
        }
    }
    let mut edges: Vec<(usize, usize)> = forced.to_vec();
    for i in 0..m {
        for j in (i + 1)..m {
            if rng.random_bool(density) {
                edges.push((perm[i], perm[j]));
            }
        }
    }
    closure(m, &edges)
}

pub fn random_order<R: Rng>(rng: &mut R, u: &Arc<Universe>) -> PartialOrder {
    let density = rng.random_range(0.0..=1.0);
    order_from(u, &random_relation(rng, u.len(), &[], density))
}

pub fn random_profile<R: Rng>(rng: &mut R, u: &Arc<Universe>, voters: usize) -> Profile {
    Profile::new((0..voters).map(|_| random_order(rng, u)).collect()).unwrap()
}

pub fn random_answer<R: Rng>(rng: &mut R, u: &Universe) -> RankedAnswer {
    let mut items: Vec<OutcomeId> = u.outcomes().to_vec();
    items.shuffle(rng);
    let len = rng.random_range(0..=items.len());
    items.truncate(len);
    RankedAnswer::new(items).unwrap()
}

pub fn reversed(order: &PartialOrder) -> PartialOrder {
    let pairs: Vec<(OutcomeId, OutcomeId)> = order.strict_pairs().into_iter().map(|(a, b)| (b, a)).collect();
    PartialOrder::from_pairs(order.universe().clone(), &pairs).unwrap()
}

fn scores(p: &Profile) -> Vec<u64> {
    raw_scores(p, Execution::Sequential)
}

// Each check returns Err with a description of the counterexample.

pub fn check_faithfulness<R: Rng>(rng: &mut R) -> Result<(), String> {
    let m = rng.random_range(1..=6);
    let u = universe(m);
    let order = random_order(rng, &u);
    let chosen = choose(&Profile::new(vec![order.clone()]).unwrap());
    for (b, a) in order.strict_pairs() {
        if chosen.contains(&a) {
            return Err(format!("{a} is dominated by {b} but chosen from {:?}", order.strict_pairs()));
        }
    }
    let answer = random_answer(rng, &u);
    if let Some(first) = answer.first() {
        let chosen = choose(&Profile::from_answers(std::slice::from_ref(&answer), u.clone()).unwrap());
        if chosen != BTreeSet::from([first.clone()]) {
            return Err(format!("answer {:?} chose {chosen:?}", answer.items()));
        }
    }
    Ok(())
}

pub fn check_neutrality<R: Rng>(rng: &mut R) -> Result<(), String> {
    let m = rng.random_range(1..=6);
    let u = universe(m);
    let voters = rng.random_range(1..=4);
    let p = random_profile(rng, &u, voters);
    let mut sigma: Vec<usize> = (0..m).collect();
    sigma.shuffle(rng);
    let renamed = Profile::new(
        p.orders()
            .iter()
            .map(|o| {
                let pairs: Vec<(usize, usize)> = (0..m)
                    .flat_map(|i| (0..m).map(move |j| (i, j)))
                    .filter(|&(i, j)| o.prefers_at(i, j))
                    .map(|(i, j)| (sigma[i], sigma[j]))
                    .collect();
                PartialOrder::from_index_pairs(u.clone(), &pairs).unwrap()
            })
            .collect(),
    )
    .unwrap();
    let (before, after) = (scores(&p), scores(&renamed));
    for i in 0..m {
        if before[i] != after[sigma[i]] {
            return Err(format!("score of o{i} changed under renaming {sigma:?}"));
        }
    }
    let mapped: BTreeSet<OutcomeId> =
        choose(&p).iter().map(|o| u.get(sigma[u.index_of(o).unwrap()]).unwrap().clone()).collect();
    if mapped != choose(&renamed) {
        return Err(format!("choice not equivariant under {sigma:?}"));
    }
    Ok(())
}

/// Profiles built from orders and their reversals, so every pair is
/// preferred both ways equally often.
pub fn check_cancellation<R: Rng>(rng: &mut R) -> Result<(), String> {
    let m = rng.random_range(1..=6);
    let u = universe(m);
    let halves = rng.random_range(1..=2);
    let mut orders = Vec::new();
    for _ in 0..halves {
        let o = random_order(rng, &u);
        orders.push(reversed(&o));
        orders.push(o);
    }
    orders.shuffle(rng);
    let p = Profile::new(orders).unwrap();
    for a in 0..m {
        for b in 0..m {
            let ab = p.orders().iter().filter(|o| o.prefers_at(a, b)).count();
            let ba = p.orders().iter().filter(|o| o.prefers_at(b, a)).count();
            if ab != ba {
                return Err("premise construction failed".into());
            }
        }
    }
    let s = scores(&p);
    if s.iter().any(|&x| x != s[0]) {
        return Err(format!("unequal scores {s:?}"));
    }
    if choose(&p).len() != m {
        return Err("choice is not the whole universe".into());
    }
    Ok(())
}

/// `Ok(true)` when the premise held and the conclusion was verified.
pub fn check_consistency<R: Rng>(rng: &mut R) -> Result<bool, String> {
    let m = rng.random_range(1..=6);
    let u = universe(m);
    let v1 = rng.random_range(1..=2);
    let v2 = rng.random_range(1..=2);
    let p1 = random_profile(rng, &u, v1);
    let p2 = random_profile(rng, &u, v2);
    let (c1, c2) = (choose(&p1), choose(&p2));
    let both: BTreeSet<OutcomeId> = c1.intersection(&c2).cloned().collect();
    if both.is_empty() {
        return Ok(false);
    }
    let joint = choose(&p1.concat(&p2).unwrap());
    if joint != both {
        return Err(format!("f(p1) ∩ f(p2) = {both:?} but f(p1 ∪ p2) = {joint:?}"));
    }
    Ok(true)
}

pub fn check_partial_agreement<R: Rng>(rng: &mut R) -> Result<(), String> {
    let m = rng.random_range(2..=6);
    let u = universe(m);
    let a = rng.random_range(0..m);
    let b = (a + rng.random_range(1..m)) % m;
    let voters = rng.random_range(1..=4);
    let orders: Vec<PartialOrder> = (0..voters)
        .map(|_| {
            let density = rng.random_range(0.0..=1.0);
            order_from(&u, &random_relation(rng, m, &[(a, b)], density))
        })
        .collect();
    let table = score_table(&Profile::new(orders).unwrap());
    if table.normalized_at(a) <= table.normalized_at(b) {
        return Err(format!("o{a} above o{b} everywhere but normalized scores {} <= {}", table.normalized_at(a), table.normalized_at(b)));
    }
    Ok(())
}

pub fn check_full_agreement<R: Rng>(rng: &mut R) -> Result<(), String> {
    let m = rng.random_range(1..=6);
    let u = universe(m);
    let answer = random_answer(rng, &u);
    let voters = rng.random_range(1..=4);
    let p = Profile::from_answers(&vec![answer.clone(); voters], u.clone()).unwrap();
    let order = &p.orders()[0];
    let s = scores(&p);
    for i in 0..m {
        for j in 0..m {
            if (s[i] > s[j]) != order.prefers_at(i, j) {
                return Err(format!("answer {:?}: score order disagrees on (o{i}, o{j})", answer.items()));
            }
        }
    }
    Ok(())
}

pub fn check_domination<R: Rng>(rng: &mut R) -> Result<(), String> {
    let m = rng.random_range(1..=6);
    let u = universe(m);
    let top = rng.random_range(0..m);
    let forced: Vec<(usize, usize)> = (0..m).filter(|&o| o != top).map(|o| (top, o)).collect();
    let voters = rng.random_range(1..=4);
    let orders: Vec<PartialOrder> = (0..voters)
        .map(|_| {
            let density = rng.random_range(0.0..=1.0);
            order_from(&u, &random_relation(rng, m, &forced, density))
        })
        .collect();
    let chosen = choose(&Profile::new(orders).unwrap());
    if chosen != BTreeSet::from([u.get(top).unwrap().clone()]) {
        return Err(format!("o{top} dominates but the choice is {chosen:?}"));
    }
    Ok(())
}

/// Kendall tau from scratch on tie-free ranks.
pub fn brute_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut c, mut d) = (0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            if (x[i] < x[j]) == (y[i] < y[j]) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c - d) as f64 / (n * (n - 1) / 2) as f64
}

pub fn closed_form_spearman(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn random_permutation_ranks<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    v.shuffle(rng);
    v
}
