//! Column generation checked against independent brute-force oracles.

use cgx::cg::{self, CgConfig, CgProblem, Clause};
use cgx::data::{binarize, BinarizedDataset, Dataset, LiteralCatalog};
use cgx::ruleset::{rulesets_equal, Literal, Op};
use cgx::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum of `c'x` over `Ax = b, x >= 0` by enumerating every basis
/// (Gaussian elimination per column subset).
fn lp_vertex_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..m).collect();
    loop {
        // solve B x_B = b
        let mut aug: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut row: Vec<f64> = subset.iter().map(|&j| a[i][j]).collect();
                row.push(b[i]);
                row
            })
            .collect();
        let mut ok = true;
        for col in 0..m {
            let piv = (col..m).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs())).unwrap();
            if aug[piv][col].abs() < 1e-12 {
                ok = false;
                break;
            }
            aug.swap(col, piv);
            let p = aug[col][col];
            for v in aug[col].iter_mut() {
                *v /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = aug[r][col];
                    for k in 0..=m {
                        aug[r][k] -= f * aug[col][k];
                    }
                }
            }
        }
        if ok {
            let xb: Vec<f64> = (0..m).map(|i| aug[i][m]).collect();
            if xb.iter().all(|&v| v >= -1e-9) {
                let obj: f64 = subset.iter().zip(&xb).map(|(&j, v)| c[j] * v).sum();
                best = best.min(obj);
            }
        }
        // next combination
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < n - m + i {
                subset[i] += 1;
                for k in i + 1..m {
                    subset[k] = subset[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Every clause of length `1..=max_len`, no pruning.
fn all_clauses(n_literals: usize, max_len: usize) -> Vec<Clause> {
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << n_literals) {
        if (mask.count_ones() as usize) <= max_len {
            out.push((0..n_literals).filter(|&j| mask & (1 << j) != 0).collect());
        }
    }
    out
}

/// Pricing oracle: recomputes each reduced cost from raw bits.
fn pricing_oracle(
    x_bin: &BinarizedDataset,
    y: &[u8],
    positive: u8,
    duals: &[f64],
    lambda: f64,
    kappa: impl Fn(usize) -> f64,
    max_len: usize,
    epsilon: f64,
) -> Option<(Clause, f64)> {
    let positives: Vec<usize> = (0..y.len()).filter(|&i| y[i] == positive).collect();
    let mut scored: Vec<(Clause, f64)> = all_clauses(x_bin.n_literals(), max_len)
        .into_iter()
        .map(|k| {
            let fires = |i: usize| k.iter().all(|&j| x_bin.bit(i, j));
            let neg = (0..y.len()).filter(|&i| y[i] != positive && fires(i)).count() as f64;
            let gain: f64 = positives
                .iter()
                .zip(duals)
                .filter(|(&i, _)| fires(i))
                .map(|(_, &d)| d)
                .sum();
            let rc = neg + lambda * kappa(k.len()) - gain;
            (k, rc)
        })
        .collect();
    let min = scored.iter().map(|(_, r)| *r).fold(f64::INFINITY, f64::min);
    if min >= -epsilon {
        return None;
    }
    scored.retain(|(_, r)| *r <= min + cg::TIE_TOL);
    scored.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
    scored.into_iter().next()
}

fn hand_binarized(bits: &[&[u8]]) -> BinarizedDataset {
    // one binary feature per literal column: literal j is `x_j > 0.5`
    let n_lit = bits[0].len();
    let rows: Vec<Vec<f64>> = bits.iter().map(|r| r.iter().map(|&b| b as f64).collect()).collect();
    let lits = (0..n_lit).map(|j| Literal::new(j, Op::Gt, 0.5)).collect();
    let catalog = LiteralCatalog::from_literals(lits, n_lit).unwrap();
    BinarizedDataset::from_catalog(catalog, &Matrix::from_rows(&rows)).unwrap()
}

#[test]
fn master_with_perfect_clause_has_zero_objective() {
    let x = hand_binarized(&[&[1, 0], &[1, 1], &[0, 1], &[0, 0]]);
    let y = [1, 1, 0, 0];
    let cfg = CgConfig::absolute(0.0, 0.0);
    let p = CgProblem::new(&x, &y, &cfg).unwrap();
    let sol = p.solve_master(&[vec![0]]).unwrap();
    assert_eq!(sol.objective, 0.0);
    assert_eq!(sol.primal_weights, vec![1.0]);
}

#[test]
fn master_with_vacuous_pool_pays_every_positive() {
    let x = hand_binarized(&[&[0, 0], &[0, 1], &[0, 1], &[1, 0]]);
    let y = [1, 1, 1, 0];
    let mut cfg = CgConfig::absolute(0.0, 0.0);
    cfg.positive_class = Some(1);
    let p = CgProblem::new(&x, &y, &cfg).unwrap();
    // literal 0 covers only the negative sample
    let sol = p.solve_master(&[vec![0]]).unwrap();
    assert_eq!(sol.objective, 3.0);
    assert_eq!(sol.slacks, vec![1.0, 1.0, 1.0]);
}

#[test]
fn master_matches_vertex_enumeration() {
    // 6 samples, 3 literals, lambda0 = 1, lambda1 = 0.1
    let x = hand_binarized(&[&[1, 1, 0], &[1, 0, 1], &[0, 1, 1], &[1, 1, 1], &[0, 0, 1], &[1, 0, 0]]);
    let y = [1, 1, 1, 0, 0, 0];
    let mut cfg = CgConfig::absolute(1.0, 0.1);
    cfg.positive_class = Some(1);
    let p = CgProblem::new(&x, &y, &cfg).unwrap();
    let pool: Vec<Clause> = vec![vec![0], vec![1], vec![2]];
    let sol = p.solve_master(&pool).unwrap();

    // build the same LP by hand: cols xi0..2, w0..2, s0..2
    let positives = [0usize, 1, 2];
    let mut c = vec![1.0, 1.0, 1.0];
    let mut a = vec![vec![0.0; 9]; 3];
    for (r, _) in positives.iter().enumerate() {
        a[r][r] = 1.0;
        a[r][6 + r] = -1.0;
    }
    for j in 0..3 {
        let neg = (3..6).filter(|&i| x.bit(i, j)).count() as f64;
        c.push(neg + 1.0 + 0.1);
        for (r, &i) in positives.iter().enumerate() {
            if x.bit(i, j) {
                a[r][3 + j] = 1.0;
            }
        }
    }
    c.extend([0.0, 0.0, 0.0]);
    let oracle = lp_vertex_oracle(&c, &a, &[1.0, 1.0, 1.0]);
    assert!((sol.objective - oracle).abs() < 1e-9, "{} vs {oracle}", sol.objective);
    assert!(sol.duality_gap() <= 1e-6);
}

#[test]
fn price_examples() {
    let x = hand_binarized(&[&[1, 0], &[0, 1], &[0, 0]]);
    let y = [1, 0, 0];
    let mut cfg = CgConfig::absolute(0.5, 0.1);
    cfg.positive_class = Some(1);
    let p = CgProblem::new(&x, &y, &cfg).unwrap();
    assert_eq!(p.price(&[0.0], 1.0).unwrap(), None);
    let best = p.price(&[2.0], 0.0).unwrap().unwrap();
    assert_eq!(best.clause, vec![0]);
    assert_eq!(best.reduced_cost, -2.0);
}

#[test]
fn price_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..200 {
        let rows: Vec<Vec<u8>> = (0..8).map(|_| (0..4).map(|_| rng.random_range(0..2)).collect()).collect();
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let x = hand_binarized(&refs);
        let y: Vec<u8> = (0..8).map(|_| rng.random_range(0..2)).collect();
        let mut cfg = CgConfig::absolute(rng.random_range(0.0..1.0), rng.random_range(0.0..0.3));
        cfg.positive_class = Some(1);
        cfg.max_rule_len = rng.random_range(1..=4);
        let p = CgProblem::new(&x, &y, &cfg).unwrap();
        let duals: Vec<f64> = p.positives().iter().map(|_| rng.random_range(0.0..2.0)).collect();
        let lambda = if trial % 3 == 0 { 0.0 } else { 1.0 };
        let got = p.price(&duals, lambda).unwrap().map(|c| (c.clause, c.reduced_cost));
        let want = pricing_oracle(&x, &y, 1, &duals, lambda, |l| p.complexity_cost(l), cfg.max_rule_len, cfg.epsilon);
        match (&got, &want) {
            (Some((gk, gr)), Some((wk, wr))) => {
                assert_eq!(gk, wk, "trial {trial}");
                assert!((gr - wr).abs() < 1e-9);
            }
            (None, None) => {}
            _ => panic!("trial {trial}: got {got:?}, want {want:?}"),
        }
    }
}

#[test]
fn fit_single_threshold_concept() {
    let rows: Vec<[f64; 2]> = (0..40).map(|i| [i as f64 / 40.0 + 0.0125, ((i * 7) % 40) as f64 / 40.0]).collect();
    let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] > 0.5)).collect();
    let ds = Dataset::new(Matrix::from_rows(&rows), labels.clone()).unwrap();
    let x = binarize(&ds, 1).unwrap();
    let fit = cg::fit(&x, &labels, &CgConfig::default()).unwrap();
    assert_eq!(fit.ruleset.to_text(), "IF x1 > 0.5 THEN class=1\nELSE class=0\n");
    assert!(fit.converged);
}

#[test]
fn fit_xor_labels_gives_two_two_term_rules() {
    // bins = 3 keeps the catalog at 12 literals so the exact oracle applies
    let ds = cgx::data::generate_xor(400, 2, 3).unwrap();
    let x = binarize(&ds, 3).unwrap();
    let cfg = CgConfig::default();
    let fit = cg::fit(&x, ds.labels(), &cfg).unwrap();
    assert_eq!(fit.ruleset.complexity(), (2, 4), "{}", fit.ruleset);
    for rule in fit.ruleset.rules() {
        let feats: Vec<usize> = rule.literals().iter().map(|l| l.feature).collect();
        assert_eq!(feats, vec![0, 1]);
        for l in rule.literals() {
            assert!((l.threshold - 0.5).abs() < 0.05, "{l}");
        }
    }
    let exact = cg::exact_fit_bruteforce(&x, ds.labels(), &cfg, 3).unwrap();
    assert!(rulesets_equal(&exact.ruleset, &fit.ruleset), "{}\nvs\n{}", exact.ruleset, fit.ruleset);
}

#[test]
fn wider_pricing_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..40 {
        let n = 30;
        let rows: Vec<Vec<u8>> = (0..n).map(|_| (0..10).map(|_| u8::from(rng.random_bool(0.6))).collect()).collect();
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let x = hand_binarized(&refs);
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let mut cfg = CgConfig::absolute(rng.random_range(0.0..1.0), rng.random_range(0.0..0.3));
        cfg.positive_class = Some(1);
        cfg.max_rule_len = 4;
        let p = CgProblem::new(&x, &y, &cfg).unwrap();
        let duals: Vec<f64> = p.positives().iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let got = p.price(&duals, 1.0).unwrap().map(|c| c.clause);
        let want = pricing_oracle(&x, &y, 1, &duals, 1.0, |l| p.complexity_cost(l), 4, cfg.epsilon).map(|w| w.0);
        assert_eq!(got, want, "trial {trial}");
    }
}

#[test]
fn pricing_budget_is_reported() {
    let ds = cgx::data::generate_xor(200, 4, 5).unwrap();
    let x = binarize(&ds, 9).unwrap();
    let cfg = CgConfig {
        max_pricing_nodes: 50,
        ..CgConfig::default()
    };
    let p = CgProblem::new(&x, ds.labels(), &cfg).unwrap();
    let duals = vec![1.0; p.positives().len()];
    let out = p.price_detailed(&duals, 1.0).unwrap();
    assert!(!out.complete);
    assert!(out.nodes <= 50 + x.n_literals() * 8 * 5);
    let best = out.best.unwrap();
    let rc = p.reduced_cost(&best.clause, &duals, 1.0);
    assert!((rc - best.reduced_cost).abs() < 1e-9 && rc < -cfg.epsilon);

    let full = CgProblem::new(&x, ds.labels(), &CgConfig { max_pricing_nodes: 0, ..cfg }).unwrap();
    let exact = full.price_detailed(&duals, 1.0).unwrap();
    assert!(exact.complete);
    assert!(exact.best.unwrap().reduced_cost <= best.reduced_cost + 1e-9);
}

#[test]
fn fit_degenerate_labels() {
    let ds = cgx::data::generate_xor(30, 2, 1).unwrap();
    let x = binarize(&ds, 3).unwrap();
    let fit = cg::fit(&x, &[1; 30], &CgConfig::default()).unwrap();
    assert!(fit.ruleset.is_empty());
    assert_eq!(fit.ruleset.default_class(), 1);
    let fit = cg::fit(&x, &[0; 30], &CgConfig::default()).unwrap();
    assert_eq!(fit.ruleset.default_class(), 0);
}

#[test]
fn exact_refuses_large_instances() {
    let ds = cgx::data::generate_xor(30, 2, 1).unwrap();
    let x = binarize(&ds, 9).unwrap();
    assert!(cg::exact_fit_bruteforce(&x, ds.labels(), &CgConfig::default(), 2).is_err());
    let x = binarize(&ds, 1).unwrap();
    assert!(cg::exact_fit_bruteforce(&x, ds.labels(), &CgConfig::default(), 4).is_err());
}

#[test]
fn exact_empty_positive_class() {
    let x = hand_binarized(&[&[1, 0], &[0, 1]]);
    let mut cfg = CgConfig::absolute(0.5, 0.1);
    cfg.positive_class = Some(1);
    let exact = cg::exact_fit_bruteforce(&x, &[0, 0], &cfg, 3).unwrap();
    assert!(exact.ruleset.is_empty());
    assert_eq!(exact.objective, 0.0);
}

#[test]
fn exact_finds_two_clause_optimum_where_greedy_stalls() {
    // Positives sit in two blocks, {a} and {b}; a wide literal c covers
    // both blocks plus 2 negatives. Greedy picks c first (largest single
    // improvement) and then cannot remove it.
    //         a  b  c
    let x = hand_binarized(&[
        &[1, 0, 1],
        &[1, 0, 1],
        &[1, 0, 1],
        &[0, 1, 1],
        &[0, 1, 1],
        &[0, 1, 1],
        &[0, 0, 1],
        &[0, 0, 1],
        &[0, 0, 0],
        &[0, 0, 0],
    ]);
    let y = [1, 1, 1, 1, 1, 1, 0, 0, 0, 0];
    let mut cfg = CgConfig::absolute(0.9, 0.0);
    cfg.positive_class = Some(1);
    let p = CgProblem::new(&x, &y, &cfg).unwrap();

    // one-at-a-time greedy from empty
    let mut chosen: Vec<Clause> = Vec::new();
    let mut cur = p.selection_objective(&chosen);
    loop {
        let best = (0..3)
            .map(|j| vec![j])
            .filter(|k| !chosen.contains(k))
            .map(|k| {
                let mut s = chosen.clone();
                s.push(k.clone());
                (p.selection_objective(&s), k)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((obj, k)) if obj < cur - 1e-12 => {
                chosen.push(k);
                cur = obj;
            }
            _ => break,
        }
    }
    assert_eq!(chosen, vec![vec![2]]);
    assert!((cur - 2.9).abs() < 1e-12);

    let exact = cg::exact_fit_bruteforce(&x, &y, &cfg, 3).unwrap();
    assert_eq!(exact.clauses, vec![vec![0], vec![1]]);
    assert!((exact.objective - 1.8).abs() < 1e-12);
    let fit = cg::fit(&x, &y, &cfg).unwrap();
    assert!((fit.objective - exact.objective).abs() < 1e-9);
}

fn random_binary_instance(rng: &mut ChaCha8Rng) -> (BinarizedDataset, Vec<u8>) {
    let n = rng.random_range(4..=12);
    let f = rng.random_range(1..=4);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..f).map(|_| rng.random_range(0..2) as f64).collect()).collect();
    let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    y[0] = 1;
    y[n - 1] = 0;
    let ds = Dataset::new(Matrix::from_rows(&rows), y.clone()).unwrap();
    (binarize(&ds, 1).unwrap(), y)
}

#[test]
fn exact_terms_non_increasing_in_lambda1() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let (x, y) = random_binary_instance(&mut rng);
        for l0 in [0.0, 0.5, 1.0] {
            let mut prev = usize::MAX;
            for l1 in [0.0, 0.05, 0.1, 0.5] {
                let mut cfg = CgConfig::absolute(l0, l1);
                cfg.positive_class = Some(1);
                let terms = cg::exact_fit_bruteforce(&x, &y, &cfg, 3).unwrap().ruleset.complexity().1;
                assert!(terms <= prev, "lambda0 {l0}, lambda1 {l1}: {terms} > {prev}");
                prev = terms;
            }
        }
    }
}

#[test]
fn fit_prices_match_oracle_each_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (x, y) = random_binary_instance(&mut rng);
        let mut cfg = CgConfig::absolute(0.5, 0.05);
        cfg.positive_class = Some(1);
        let fit = cg::fit(&x, &y, &cfg).unwrap();
        let p = CgProblem::new(&x, &y, &cfg).unwrap();
        for it in &fit.trace {
            let want = pricing_oracle(&x, &y, 1, &it.sample_duals, it.complexity_dual, |l| p.complexity_cost(l), cfg.max_rule_len, cfg.epsilon);
            assert_eq!(it.added.as_ref().map(|c| c.clause.clone()), want.map(|w| w.0));
            if let Some(added) = &it.added {
                let rc = p.reduced_cost(&added.clause, &it.sample_duals, it.complexity_dual);
                assert!(rc < -cfg.epsilon);
            }
            assert!(it.duality_gap <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_deterministic_and_bounded_by_exact(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_binary_instance(&mut rng);
        let mut cfg = CgConfig::absolute(0.5, 0.05);
        cfg.positive_class = Some(1);
        let a = cg::fit(&x, &y, &cfg).unwrap();
        let b = cg::fit(&x, &y, &cfg).unwrap();
        prop_assert!(cgx::ruleset::rulesets_equal(&a.ruleset, &b.ruleset));
        let exact = cg::exact_fit_bruteforce(&x, &y, &cfg, 3).unwrap();
        if a.clauses.len() <= 3 {
            prop_assert!(exact.objective <= a.objective + 1e-9);
        }
        prop_assert!(a.lp_objective <= a.objective + 1e-9);
    }
}
