use keyprint_core::gf256;
use keyprint_core::rs_codec::{rs_decode, rs_encode, Codeword, ReceivedWord, RsParams};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_message(rng: &mut impl Rng, k: usize) -> Vec<u8> {
    (0..k).map(|_| rng.random()).collect()
}

/// Corrupts `errors` random positions with nonzero magnitudes and erases
/// `erasures` others.
fn damage(rng: &mut impl Rng, c: &Codeword, errors: usize, erasures: usize) -> ReceivedWord {
    let n = c.symbols.len();
    let mut r = ReceivedWord::clean(c);
    let pos = sample(rng, n, errors + erasures).into_vec();
    for &p in &pos[..errors] {
        r.symbols[p] ^= rng.random_range(1..=255u8);
    }
    for &p in &pos[errors..] {
        r.symbols[p] = rng.random();
        r.erase(p);
    }
    r
}

fn random_trials(params: RsParams, trials: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nsym = params.parity_len();
    for trial in 0..trials {
        let msg = random_message(&mut rng, params.k_msg);
        let c = rs_encode(&msg, &params).unwrap();
        let s = rng.random_range(0..=nsym);
        let e = rng.random_range(0..=(nsym - s) / 2);
        let r = damage(&mut rng, &c, e, s);
        let d = rs_decode(&r, &params).unwrap_or_else(|f| panic!("trial {trial}: e={e} s={s}: {f}"));
        assert_eq!(d.message, msg, "trial {trial}: e={e} s={s}");
        assert_eq!(d.codeword, c);
    }
}

#[test]
fn small_code_all_error_sets_up_to_three() {
    let params = RsParams::new(15, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let msg = random_message(&mut rng, 9);
    let c = rs_encode(&msg, &params).unwrap();
    let mut sets: Vec<Vec<usize>> = vec![vec![]];
    for a in 0..15 {
        sets.push(vec![a]);
        for b in a + 1..15 {
            sets.push(vec![a, b]);
            for d in b + 1..15 {
                sets.push(vec![a, b, d]);
            }
        }
    }
    assert_eq!(sets.len(), 1 + 15 + 105 + 455);
    for set in &sets {
        for _ in 0..50 {
            let mut r = ReceivedWord::clean(&c);
            for &p in set {
                r.symbols[p] ^= rng.random_range(1..=255u8);
            }
            let d = rs_decode(&r, &params).unwrap_or_else(|f| panic!("{set:?}: {f}"));
            assert_eq!(d.message, msg, "{set:?}");
            assert_eq!(d.errors, set.len());
        }
    }
}

#[test]
fn random_errata_within_budget() {
    for (n, k, seed) in [(15, 9, 1), (31, 19, 2), (63, 39, 3), (255, 223, 4)] {
        random_trials(RsParams::new(n, k).unwrap(), 1000, seed);
    }
}

#[test]
fn erasure_only_at_full_parity() {
    let params = RsParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let msg = random_message(&mut rng, params.k_msg);
        let c = rs_encode(&msg, &params).unwrap();
        let r = damage(&mut rng, &c, 0, params.parity_len());
        assert_eq!(rs_decode(&r, &params).unwrap().message, msg);
    }
}

#[test]
fn beyond_radius_never_returns_the_original_silently_wrong() {
    // t + 1 errors: the decoder must fail or land on some other codeword
    let params = RsParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..300 {
        let msg = random_message(&mut rng, params.k_msg);
        let c = rs_encode(&msg, &params).unwrap();
        let r = damage(&mut rng, &c, params.t() + 1, 0);
        if let Ok(d) = rs_decode(&r, &params) {
            assert_ne!(d.message, msg);
            let re = rs_encode(&d.message, &params).unwrap();
            assert_eq!(re, d.codeword, "decoder output must be a codeword");
        }
    }
}

/// Parity from the parity-check equations `c(alpha^i) = 0`, i = 1..n-k,
/// solved by Gaussian elimination over GF(2^8). Symbol j is the coefficient
/// of x^(n-1-j).
fn parity_by_elimination(msg: &[u8], n: usize) -> Vec<u8> {
    let k = msg.len();
    let m = n - k;
    let mut rows: Vec<Vec<u8>> = (1..=m)
        .map(|i| {
            let root = gf256::alpha_pow(i as i64);
            let pw = |j: usize| {
                let mut v = 1u8;
                for _ in 0..(n - 1 - j) {
                    v = gf256::mul(v, root);
                }
                v
            };
            let mut row: Vec<u8> = (k..n).map(pw).collect();
            let rhs = (0..k).fold(0u8, |acc, j| acc ^ gf256::mul(msg[j], pw(j)));
            row.push(rhs);
            row
        })
        .collect();
    for col in 0..m {
        let piv = (col..m).find(|&r| rows[r][col] != 0).expect("parity-check matrix has full rank");
        rows.swap(col, piv);
        let inv = gf256::inv(rows[col][col]);
        for v in rows[col].iter_mut() {
            *v = gf256::mul(*v, inv);
        }
        for r in 0..m {
            if r != col && rows[r][col] != 0 {
                let f = rows[r][col];
                let pivot = rows[col].clone();
                for (v, p) in rows[r].iter_mut().zip(pivot) {
                    *v ^= gf256::mul(f, p);
                }
            }
        }
    }
    rows.into_iter().map(|r| r[m]).collect()
}

#[test]
fn parity_matches_linear_algebra_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, k) in [(15, 9), (31, 19), (63, 39)] {
        let params = RsParams::new(n, k).unwrap();
        for _ in 0..20 {
            let msg = random_message(&mut rng, k);
            let c = rs_encode(&msg, &params).unwrap();
            assert_eq!(&c.symbols[..k], &msg[..], "systematic prefix");
            assert_eq!(c.symbols[k..].to_vec(), parity_by_elimination(&msg, n));
        }
    }
}

#[test]
fn codewords_vanish_at_generator_roots_full_length() {
    // evaluation view: a codeword polynomial is zero at alpha^1..alpha^(n-k)
    let params = RsParams::new(255, 223).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let msg = random_message(&mut rng, 223);
        let c = rs_encode(&msg, &params).unwrap();
        for i in 1..=32 {
            assert_eq!(gf256::poly_eval_high_first(&c.symbols, gf256::alpha_pow(i)), 0, "root alpha^{i}");
        }
    }
}

#[test]
fn generator_has_the_expected_roots() {
    for (n, k) in [(15, 9), (63, 39), (255, 223)] {
        let g = RsParams::new(n, k).unwrap().generator();
        assert_eq!(g.len(), n - k + 1);
        for i in 1..=(n - k) as i64 {
            assert_eq!(gf256::poly_eval_high_first(&g, gf256::alpha_pow(i)), 0);
        }
        assert_ne!(gf256::poly_eval_high_first(&g, gf256::alpha_pow(0)), 0);
    }
}
