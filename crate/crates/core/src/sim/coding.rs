//! Random linear network coding over GF(256).

use rand::Rng;
use thiserror::Error;

use super::gf256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodingError {
    #[error("cannot encode an empty bucket")]
    EmptyBucket,
    #[error("packet {index} has {found} symbols, expected {expected}")]
    PacketLength { index: usize, found: usize, expected: usize },
    #[error("coded packet has {found} coefficients, decoder expects {expected}")]
    CoefficientLength { found: usize, expected: usize },
}

/// Coefficient header plus coded payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    pub coeffs: Vec<u8>,
    pub payload: Vec<u8>,
}

fn check_bucket(bucket: &[Vec<u8>]) -> Result<usize, CodingError> {
    let first = bucket.first().ok_or(CodingError::EmptyBucket)?;
    let m = first.len();
    for (index, p) in bucket.iter().enumerate() {
        if p.len() != m {
            return Err(CodingError::PacketLength {
                index,
                found: p.len(),
                expected: m,
            });
        }
    }
    Ok(m)
}

/// Combines the bucket with given coefficients.
pub fn encode_with(bucket: &[Vec<u8>], coeffs: Vec<u8>) -> Result<CodedPacket, CodingError> {
    let m = check_bucket(bucket)?;
    if coeffs.len() != bucket.len() {
        return Err(CodingError::CoefficientLength {
            found: coeffs.len(),
            expected: bucket.len(),
        });
    }
    let mut payload = vec![0u8; m];
    for (c, p) in coeffs.iter().zip(bucket) {
        gf256::axpy(&mut payload, *c, p);
    }
    Ok(CodedPacket { coeffs, payload })
}

/// Draws coefficients uniformly from GF(256)^K and combines the bucket.
pub fn encode<R: Rng + ?Sized>(bucket: &[Vec<u8>], rng: &mut R) -> Result<CodedPacket, CodingError> {
    check_bucket(bucket)?;
    let mut coeffs = vec![0u8; bucket.len()];
    rng.fill(coeffs.as_mut_slice());
    encode_with(bucket, coeffs)
}

/// Incremental Gaussian elimination. Rows are kept in reduced echelon form,
/// so each push costs `O(K (K + m))`.
#[derive(Debug, Clone)]
pub struct Decoder {
    k: usize,
    // rows[i] has its pivot at pivots[i]; coefficients then payload.
    rows: Vec<Vec<u8>>,
    pivots: Vec<usize>,
}

impl Decoder {
    pub fn new(k: usize) -> Self {
        Decoder {
            k,
            rows: Vec::with_capacity(k),
            pivots: Vec::with_capacity(k),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_complete(&self) -> bool {
        self.rank() == self.k
    }

    /// Adds a coded packet; returns whether it was innovative.
    pub fn push(&mut self, pkt: &CodedPacket) -> Result<bool, CodingError> {
        if pkt.coeffs.len() != self.k {
            return Err(CodingError::CoefficientLength {
                found: pkt.coeffs.len(),
                expected: self.k,
            });
        }
        if self.is_complete() {
            return Ok(false);
        }
        let mut row: Vec<u8> = pkt.coeffs.iter().chain(&pkt.payload).copied().collect();
        for (r, &p) in self.rows.iter().zip(&self.pivots) {
            let c = row[p];
            if c != 0 {
                gf256::axpy(&mut row, c, r);
            }
        }
        let pivot = match row[..self.k].iter().position(|&c| c != 0) {
            Some(p) => p,
            None => return Ok(false),
        };
        let inv = gf256::inv(row[pivot]).expect("nonzero pivot");
        gf256::scale(&mut row, inv);
        for r in &mut self.rows {
            let c = r[pivot];
            if c != 0 {
                gf256::axpy(r, c, &row);
            }
        }
        self.rows.push(row);
        self.pivots.push(pivot);
        Ok(true)
    }

    /// The original packets once the rank reaches `K`.
    pub fn decode(&self) -> Option<Vec<Vec<u8>>> {
        if !self.is_complete() {
            return None;
        }
        let mut out = vec![Vec::new(); self.k];
        for (r, &p) in self.rows.iter().zip(&self.pivots) {
            out[p] = r[self.k..].to_vec();
        }
        Some(out)
    }
}

/// The `K` originals if the coefficient matrix has rank `K`.
pub fn try_decode(received: &[CodedPacket], k: usize) -> Result<Option<Vec<Vec<u8>>>, CodingError> {
    let mut dec = Decoder::new(k);
    for pkt in received {
        dec.push(pkt)?;
        if dec.is_complete() {
            break;
        }
    }
    Ok(dec.decode())
}

/// Probability that a uniformly random `K x K` matrix over GF(q) is singular:
/// `1 - prod_{i=1..K} (1 - q^-i)`.
pub fn singular_probability(k: usize, q: f64) -> f64 {
    1.0 - (1..=k).map(|i| 1.0 - q.powi(-(i as i32))).product::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pkt(coeffs: &[u8], payload: &[u8]) -> CodedPacket {
        CodedPacket {
            coeffs: coeffs.to_vec(),
            payload: payload.to_vec(),
        }
    }

    #[test]
    fn identity_system_decodes() {
        let got = try_decode(&[pkt(&[1, 0], &[7, 8]), pkt(&[0, 1], &[9, 10])], 2).unwrap();
        assert_eq!(got, Some(vec![vec![7, 8], vec![9, 10]]));
    }

    #[test]
    fn dependent_rows_do_not_decode() {
        assert_eq!(try_decode(&[pkt(&[1, 1], &[0]), pkt(&[2, 2], &[0])], 2).unwrap(), None);
    }

    #[test]
    fn scalar_bucket() {
        let c = encode_with(&[vec![5, 6]], vec![3]).unwrap();
        assert_eq!(c.payload, vec![gf256::mul(3, 5), gf256::mul(3, 6)]);
        assert_eq!(try_decode(&[c], 1).unwrap(), Some(vec![vec![5, 6]]));
    }

    #[test]
    fn zero_packets_stay_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(encode(&vec![vec![0; 4]; 3], &mut rng).unwrap().payload, vec![0; 4]);
        }
    }

    #[test]
    fn empty_bucket_and_length_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(encode(&[], &mut rng), Err(CodingError::EmptyBucket));
        assert!(matches!(encode(&[vec![1], vec![1, 2]], &mut rng), Err(CodingError::PacketLength { index: 1, .. })));
        let mut d = Decoder::new(2);
        assert!(d.push(&pkt(&[1], &[])).is_err());
    }

    #[test]
    fn singular_probability_k8() {
        let p = singular_probability(8, 256.0);
        assert!((p - 0.003922).abs() < 1e-6, "{p}");
    }

    proptest! {
        #[test]
        fn roundtrip(seed in any::<u64>(), k in 1usize..10, m in 0usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bucket: Vec<Vec<u8>> = (0..k).map(|_| (0..m).map(|_| rand::Rng::gen(&mut rng)).collect()).collect();
            let mut dec = Decoder::new(k);
            let mut sent = 0;
            while !dec.is_complete() {
                let c = encode(&bucket, &mut rng).unwrap();
                dec.push(&c).unwrap();
                sent += 1;
                prop_assert!(sent < 10 * k + 20);
            }
            prop_assert_eq!(dec.decode().unwrap(), bucket);
        }

        #[test]
        fn rank_never_exceeds_k(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bucket = vec![vec![1u8]; k];
            let mut dec = Decoder::new(k);
            for _ in 0..3 * k {
                let c = encode(&bucket, &mut rng).unwrap();
                let before = dec.rank();
                let innovative = dec.push(&c).unwrap();
                prop_assert_eq!(dec.rank(), before + innovative as usize);
                prop_assert!(dec.rank() <= k);
            }
        }
    }
}
