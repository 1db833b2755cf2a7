//! GF(2^8) with primitive polynomial 0x11d and generator 2.

pub const POLY: u16 = 0x11d;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

const TABLES: Tables = build_tables();

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    // doubled so exp[log a + log b] needs no reduction
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    Tables { exp, log }
}

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    TABLES.exp[TABLES.log[a as usize] as usize + TABLES.log[b as usize] as usize]
}

/// Multiplicative inverse; panics on zero.
#[inline]
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(256)");
    TABLES.exp[255 - TABLES.log[a as usize] as usize]
}

#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    mul(a, inv(b))
}

/// `2^e` for any integer exponent.
#[inline]
pub fn alpha_pow(e: i64) -> u8 {
    TABLES.exp[e.rem_euclid(255) as usize]
}

#[inline]
pub fn log(a: u8) -> u8 {
    assert!(a != 0, "log of zero");
    TABLES.log[a as usize]
}

/// Horner evaluation; `coeffs[0]` is the highest-degree coefficient.
pub fn poly_eval_high_first(coeffs: &[u8], x: u8) -> u8 {
    coeffs.iter().fold(0, |acc, &c| mul(acc, x) ^ c)
}

/// Horner evaluation; `coeffs[0]` is the constant term.
pub fn poly_eval_low_first(coeffs: &[u8], x: u8) -> u8 {
    coeffs.iter().rev().fold(0, |acc, &c| mul(acc, x) ^ c)
}

/// Product of two polynomials in low-first order.
pub fn poly_mul_low_first(a: &[u8], b: &[u8]) -> Vec<u8> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u8; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] ^= mul(x, y);
        }
    }
    out
}
