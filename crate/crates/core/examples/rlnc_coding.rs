//! Random linear network coding of one bucket over GF(256).
//!
//! Encodes `K` packets, drops coded packets on an erasure channel, and
//! decodes incrementally once the receiver has `K` innovative packets.
//! Then estimates how often `K` receptions are not enough.

use bucketopt::sim::coding::{encode, singular_probability, Decoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = 8;
    let bucket: Vec<Vec<u8>> = (0..k).map(|i| format!("packet {i} payload").into_bytes()).collect();
    let mut dec = Decoder::new(k);
    let (mut sent, mut received) = (0, 0);
    while !dec.is_complete() {
        let coded = encode(&bucket, &mut rng)?;
        sent += 1;
        if rng.gen::<f64>() < 0.3 {
            println!("slot {sent:>2}: erased");
            continue;
        }
        received += 1;
        let innovative = dec.push(&coded)?;
        println!("slot {sent:>2}: received, rank {} ({})", dec.rank(), if innovative { "innovative" } else { "redundant" });
    }
    let decoded = dec.decode().expect("full rank");
    assert_eq!(decoded, bucket);
    println!("decoded {k} packets after {sent} transmissions and {received} receptions");
    println!("first packet: {:?}", String::from_utf8_lossy(&decoded[0]));

    let trials = 200_000;
    let mut short = 0;
    for _ in 0..trials {
        let mut d = Decoder::new(k);
        for _ in 0..k {
            d.push(&encode(&bucket, &mut rng)?)?;
        }
        short += !d.is_complete() as usize;
    }
    println!(
        "K receptions fail to decode: {:.5} measured, {:.5} = 1 - prod(1 - 256^-i)",
        short as f64 / trials as f64,
        singular_probability(k, 256.0)
    );
    Ok(())
}
