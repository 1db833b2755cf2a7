use hmac::{Hmac, KeyInit, Mac};
use keyprint_core::keymat::{derive_layer_seed, drbg_stream, hmac_sha256, SecretKey};
use proptest::prelude::*;
use sha2::Sha256;

struct Vector {
    key: Vec<u8>,
    data: Vec<u8>,
    mac: &'static str,
}

fn rfc4231() -> Vec<Vector> {
    let v = |key: Vec<u8>, data: &[u8], mac| Vector { key, data: data.to_vec(), mac };
    vec![
        v(vec![0x0b; 20], b"Hi There", "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"),
        v(b"Jefe".to_vec(), b"what do ya want for nothing?", "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"),
        v(vec![0xaa; 20], &[0xdd; 50], "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"),
        v((1..=25).collect(), &[0xcd; 50], "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b"),
        // truncated to 128 bits in the RFC
        v(vec![0x0c; 20], b"Test With Truncation", "a3b6167473100ee06e0c796c2955552b"),
        v(vec![0xaa; 131], b"Test Using Larger Than Block-Size Key - Hash Key First", "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54"),
        v(
            vec![0xaa; 131],
            b"This is a test using a larger than block-size key and a larger than block-size data. The key needs to be hashed before being used by the HMAC algorithm.",
            "9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2",
        ),
    ]
}

fn reference_hmac(key: &[u8], msg: &[u8]) -> [u8; 32] {
    let mut m = <Hmac<Sha256> as KeyInit>::new_from_slice(key).unwrap();
    m.update(msg);
    m.finalize().into_bytes().into()
}

#[test]
fn all_rfc4231_vectors() {
    for (i, v) in rfc4231().iter().enumerate() {
        let got = hex::encode(hmac_sha256(&v.key, &v.data));
        assert!(got.starts_with(v.mac), "case {}: {got}", i + 1);
    }
}

proptest! {
    #[test]
    fn agrees_with_reference_crate(key in proptest::collection::vec(any::<u8>(), 0..200),
                                   msg in proptest::collection::vec(any::<u8>(), 0..300)) {
        prop_assert_eq!(hmac_sha256(&key, &msg), reference_hmac(&key, &msg));
    }

    #[test]
    fn seeds_fit_the_key_width(digits in 1usize..=40, bytes in proptest::collection::vec(any::<u8>(), 20), layer in 1u32..64) {
        let key = SecretKey::sample(&mut &bytes[..], digits).unwrap();
        let seed = derive_layer_seed(&key, layer).unwrap();
        if digits < 64 {
            prop_assert!(seed.value < 1u64 << digits);
        }
    }
}

#[test]
fn seeds_are_hmac_of_the_ascii_key() {
    let key = SecretKey::parse("0123456789abcdef0123456789abcdef").unwrap();
    for i in 1..=3u32 {
        let d = reference_hmac(key.as_hex().as_bytes(), i.to_string().as_bytes());
        let low = u64::from_be_bytes(d[24..].try_into().unwrap());
        assert_eq!(derive_layer_seed(&key, i).unwrap().value, low % (1u64 << 32), "layer {i}");
    }
}

#[test]
fn drbg_values_come_from_counter_hmac() {
    let key = SecretKey::parse("0123456789abcdef0123456789abcdef").unwrap();
    let seed = derive_layer_seed(&key, 1).unwrap();
    let vals = drbg_stream(seed, 16);
    for (j, v) in vals.iter().enumerate() {
        let d = reference_hmac(&seed.value.to_be_bytes(), &(j as u64).to_be_bytes());
        let top = u64::from_be_bytes(d[..8].try_into().unwrap()) >> 11;
        assert_eq!(*v, top as f64 / (1u64 << 53) as f64);
        assert!((0.0..1.0).contains(v));
    }
}
