//! Arithmetic in GF(2^8) modulo `x^8 + x^4 + x^3 + x^2 + 1` (0x11D).
//!
//! Addition is XOR. Multiplication and inversion go through log / antilog
//! tables for the generator `2`, built at compile time.

pub const POLY: u16 = 0x11D;
pub const ORDER: usize = 256;

const fn build_exp() -> [u8; 512] {
    let mut t = [0u8; 512];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        t[i] = x as u8;
        t[i + 255] = x as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    t
}

const fn build_log(exp: &[u8; 512]) -> [u8; 256] {
    let mut t = [0u8; 256];
    let mut i = 0;
    while i < 255 {
        t[exp[i] as usize] = i as u8;
        i += 1;
    }
    t
}

static EXP: [u8; 512] = build_exp();
static LOG: [u8; 256] = build_log(&EXP);

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
    }
}

/// Multiplicative inverse; `None` for zero.
#[inline]
pub fn inv(a: u8) -> Option<u8> {
    (a != 0).then(|| EXP[255 - LOG[a as usize] as usize])
}

#[inline]
pub fn div(a: u8, b: u8) -> Option<u8> {
    inv(b).map(|ib| mul(a, ib))
}

/// `dst += c * src`, elementwise.
#[inline]
pub fn axpy(dst: &mut [u8], c: u8, src: &[u8]) {
    if c == 0 {
        return;
    }
    let lc = LOG[c as usize] as usize;
    for (d, &s) in dst.iter_mut().zip(src) {
        if s != 0 {
            *d ^= EXP[lc + LOG[s as usize] as usize];
        }
    }
}

/// `v *= c`, elementwise.
#[inline]
pub fn scale(v: &mut [u8], c: u8) {
    for x in v {
        *x = mul(*x, c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Shift-and-add multiplication, independent of the tables.
    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= (POLY & 0xFF) as u8;
            }
            b >>= 1;
        }
        p
    }

    #[test]
    fn tables_match_shift_and_add() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), slow_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn generator_has_full_order() {
        let mut seen = [false; 256];
        for &e in &EXP[..255] {
            assert!(!seen[e as usize]);
            seen[e as usize] = true;
        }
        assert!(!seen[0]);
    }

    #[test]
    fn axpy_and_scale() {
        let mut d = vec![1, 2, 3];
        axpy(&mut d, 7, &[4, 0, 9]);
        assert_eq!(d, vec![1 ^ mul(7, 4), 2, 3 ^ mul(7, 9)]);
        scale(&mut d, 0);
        assert_eq!(d, vec![0, 0, 0]);
    }

    #[test]
    fn known_products() {
        assert_eq!(mul(2, 0x80), 0x1D);
        assert_eq!(mul(0x53, inv(0x53).unwrap()), 1);
        assert_eq!(inv(0), None);
        assert_eq!(div(6, 3), Some(2));
    }
}
