use std::sync::OnceLock;

use he_core::rng::stream;
use he_core::{BackendKind, HeContext, HeError, HeParams, KeySet, RotationKeys};
use rand::Rng;

struct Fixture {
    ctx: HeContext,
    keys: KeySet,
}

fn ckks() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let ctx = HeContext::new(HeParams::default()).unwrap();
        let keys = ctx.keygen(1);
        Fixture { ctx, keys }
    })
}

fn sim() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let ctx = HeContext::new(HeParams::default().with_backend(BackendKind::Simulator)).unwrap();
        let keys = ctx.keygen(1);
        Fixture { ctx, keys }
    })
}

fn uniform(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = stream(seed, &[99]);
    (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn relative_l2(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = want.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn roundtrip(f: &Fixture, values: &[f64], seed: u64) -> Vec<f64> {
    let ct = f.ctx.encrypt(&f.ctx.encode(values).unwrap(), &f.keys.public, &mut stream(seed, &[])).unwrap();
    f.ctx.decrypt(&ct, &f.keys).unwrap().values
}

#[test]
fn keygen_is_deterministic() {
    let params = HeParams::from_chain(8192, 40, 60, 1, 40, BackendKind::Ckks);
    let ctx = HeContext::new(params).unwrap();
    let rotations = RotationKeys::Steps(vec![1, -1]);
    let a = ctx.keygen_with(7, &rotations);
    let b = ctx.keygen_with(7, &rotations);
    let c = ctx.keygen_with(8, &rotations);
    assert_eq!(ctx.serialize_public_keys(&a.public), ctx.serialize_public_keys(&b.public));
    assert_eq!(
        ctx.serialize_secret_key(a.secret.as_ref().unwrap()),
        ctx.serialize_secret_key(b.secret.as_ref().unwrap())
    );
    assert_ne!(ctx.serialize_public_keys(&a.public), ctx.serialize_public_keys(&c.public));
}

#[test]
fn invalid_params_name_the_constraint() {
    let low = HeParams::from_chain(8192, 19, 60, 2, 19, BackendKind::Simulator);
    let err = HeContext::new(low).unwrap_err().to_string();
    assert!(err.contains("Q_M ≥ 20 violated"), "{err}");

    let big = HeParams::from_chain(4096, 40, 60, 1, 40, BackendKind::Ckks);
    assert!(big.q_max() > he_core::security_bound(4096, 128).unwrap());
    let err = HeContext::new(big).unwrap_err().to_string();
    assert!(err.contains("Q_max"), "{err}");
}

#[test]
fn default_rotation_keys_cover_signed_powers_of_two() {
    let f = ckks();
    let steps: Vec<usize> = f.keys.public.rotation_steps().collect();
    let slots = f.ctx.slot_count();
    for i in 0..slots.trailing_zeros() {
        let p = 1usize << i;
        assert!(steps.contains(&p));
        assert!(steps.contains(&(slots - p)));
    }
}

#[test]
fn encode_zero_and_capacity() {
    for f in [sim(), ckks()] {
        let pt = f.ctx.encode(&vec![0.0; 64]).unwrap();
        assert!(f.ctx.decode(&pt).iter().all(|&v| v == 0.0));
        let cap = f.ctx.slot_count();
        assert!(matches!(f.ctx.encode(&vec![0.0; cap + 1]), Err(HeError::Capacity { .. })));
        assert!(f.ctx.encode(&vec![0.0; cap]).is_ok());
    }
}

#[test]
fn ckks_encode_precision() {
    let f = ckks();
    let v = uniform(2, 512);
    let pt = f.ctx.encode(&v).unwrap();
    let bound = 2f64.powi(-(f.ctx.params().scale_bits as i32 - 10));
    let err = max_abs_diff(&f.ctx.decode(&pt)[..512], &v);
    assert!(err <= bound, "{err} > {bound}");
}

#[test]
fn simulator_roundtrip_is_exact() {
    let f = sim();
    let v = uniform(3, 4096);
    assert_eq!(roundtrip(f, &v, 1), v);
}

#[test]
fn ckks_roundtrip_relative_error() {
    let f = ckks();
    let v = uniform(4, 1024);
    let back = roundtrip(f, &v, 2);
    let err = relative_l2(&back[..1024], &v);
    assert!(err <= 1e-6, "{err}");
    assert!(back[1024..].iter().all(|x| x.abs() < 1e-6));
}

#[test]
fn fresh_level_and_public_only_decryption() {
    for f in [sim(), ckks()] {
        let ct = f.ctx.encrypt(&f.ctx.encode(&[1.0]).unwrap(), &f.keys.public, &mut stream(1, &[])).unwrap();
        assert_eq!(ct.level(), f.ctx.depth());
        assert_eq!(f.ctx.decrypt(&ct, &f.keys.public_only()), Err(HeError::Unauthorized));
    }
}

#[test]
fn addition_identities() {
    for (tol, f) in [(0.0f64, sim()), (1e-6, ckks())] {
        let ev = f.ctx.evaluator(&f.keys.public).unwrap();
        let v = uniform(5, 300);
        let w = uniform(6, 300);
        let mut rng = stream(9, &[]);
        let cv = f.ctx.encrypt(&f.ctx.encode(&v).unwrap(), &f.keys.public, &mut rng).unwrap();
        let cw = f.ctx.encrypt(&f.ctx.encode(&w).unwrap(), &f.keys.public, &mut rng).unwrap();
        let dec = |ct| f.ctx.decrypt(&ct, &f.keys).unwrap().values;

        let plus_zero = ev.add_plain(&cv, &f.ctx.encode(&[0.0; 300]).unwrap()).unwrap();
        assert_eq!(plus_zero.level(), cv.level());
        assert!(max_abs_diff(&dec(plus_zero), &v) <= tol.max(1e-7));

        let sum = dec(ev.add(&cv, &cw).unwrap());
        let want: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        assert!(max_abs_diff(&sum, &want) <= tol.max(f64::EPSILON * 4.0));

        let neg = ev.negate(&cv).unwrap();
        let zero = dec(ev.add(&cv, &neg).unwrap());
        assert!(zero.iter().all(|x| x.abs() <= tol.max(0.0)));
    }
}

#[test]
fn multiplication_identities_and_depth() {
    for (tol, f) in [(0.0f64, sim()), (1e-5, ckks())] {
        let ev = f.ctx.evaluator(&f.keys.public).unwrap();
        let v = uniform(7, 256);
        let w = uniform(8, 256);
        let mut rng = stream(10, &[]);
        let cv = f.ctx.encrypt(&f.ctx.encode(&v).unwrap(), &f.keys.public, &mut rng).unwrap();
        let cw = f.ctx.encrypt(&f.ctx.encode(&w).unwrap(), &f.keys.public, &mut rng).unwrap();
        let dec = |ct: &he_core::SlotCipher| f.ctx.decrypt(ct, &f.keys).unwrap().values;

        let ones = ev.mul_plain(&cv, &f.ctx.encode(&vec![1.0; 256]).unwrap()).unwrap();
        assert_eq!(ones.level(), cv.level() - 1);
        assert!(max_abs_diff(&dec(&ones)[..256], &v) <= tol.max(0.0));

        let prod = ev.mul(&cv, &cw).unwrap();
        assert_eq!(prod.level(), cv.level() - 1);
        let want: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a * b).collect();
        assert!(max_abs_diff(&dec(&prod)[..256], &want) <= tol.max(0.0));

        let mut acc = cv.clone();
        for _ in 0..f.ctx.depth() {
            acc = ev.mul(&acc, &cw).unwrap();
        }
        assert_eq!(acc.level(), 0);
        assert!(matches!(ev.mul(&acc, &cw), Err(HeError::DepthExhausted { .. })));
        assert!(matches!(
            ev.mul_plain(&acc, &f.ctx.encode(&[1.0]).unwrap()),
            Err(HeError::DepthExhausted { .. })
        ));
    }
}

#[test]
fn rotations() {
    for (tol, f) in [(0.0f64, sim()), (1e-6, ckks())] {
        let ev = f.ctx.evaluator(&f.keys.public).unwrap();
        let slots = f.ctx.slot_count();
        let v = uniform(11, slots);
        let ct = f.ctx.encrypt(&f.ctx.encode(&v).unwrap(), &f.keys.public, &mut stream(12, &[])).unwrap();
        let dec = |ct: &he_core::SlotCipher| f.ctx.decrypt(ct, &f.keys).unwrap().values;

        assert!(max_abs_diff(&dec(&ev.rotate(&ct, 0).unwrap()), &v) <= tol.max(1e-7));

        for k in [1i64, 5, 37, -3] {
            let got = dec(&ev.rotate(&ct, k).unwrap());
            let want: Vec<f64> =
                (0..slots).map(|i| v[(i as i64 + k).rem_euclid(slots as i64) as usize]).collect();
            assert!(max_abs_diff(&got, &want) <= tol, "step {k}");
        }

        let k = 123i64;
        let back = ev.rotate(&ev.rotate(&ct, k).unwrap(), slots as i64 - k).unwrap();
        assert!(max_abs_diff(&dec(&back), &v) <= tol * 2.0);
        assert_eq!(back.level(), ct.level());
    }

    let f = sim();
    let mut e0 = vec![0.0; f.ctx.slot_count()];
    e0[1] = 1.0;
    let ev = f.ctx.evaluator(&f.keys.public).unwrap();
    let ct = f.ctx.encrypt(&f.ctx.encode(&e0).unwrap(), &f.keys.public, &mut stream(1, &[])).unwrap();
    let out = f.ctx.decrypt(&ev.rotate(&ct, 1).unwrap(), &f.keys).unwrap().values;
    assert_eq!(out[0], 1.0);
    assert_eq!(out.iter().filter(|&&x| x != 0.0).count(), 1);
}

#[test]
fn missing_rotation_key_errors() {
    let f = sim();
    let keys = f.ctx.keygen_with(1, &RotationKeys::Steps(vec![2]));
    let ev = f.ctx.evaluator(&keys.public).unwrap();
    let ct = f.ctx.encrypt(&f.ctx.encode(&[1.0]).unwrap(), &keys.public, &mut stream(1, &[])).unwrap();
    assert!(ev.rotate(&ct, 2).is_ok());
    assert!(ev.rotate(&ct, -2 - 4096).is_err());
    assert_eq!(ev.rotate(&ct, 3), Err(HeError::MissingRotationKey { step: 3 }));
}

#[test]
fn params_mismatch_is_rejected() {
    let a = sim();
    let other = HeContext::new(
        HeParams::from_chain(8192, 40, 60, 1, 40, BackendKind::Simulator),
    )
    .unwrap();
    let other_keys = other.keygen(1);
    let ct = a.ctx.encrypt(&a.ctx.encode(&[1.0]).unwrap(), &a.keys.public, &mut stream(1, &[])).unwrap();
    let ev = other.evaluator(&other_keys.public).unwrap();
    assert_eq!(ev.add(&ct, &ct), Err(HeError::ParamsMismatch));
    assert!(a.ctx.evaluator(&other_keys.public).is_err());
}

#[test]
fn seeded_encryption_is_byte_stable() {
    let f = ckks();
    let pt = f.ctx.encode(&uniform(13, 100)).unwrap();
    let a = f.ctx.encrypt(&pt, &f.keys.public, &mut stream(42, &[])).unwrap();
    let b = f.ctx.encrypt(&pt, &f.keys.public, &mut stream(42, &[])).unwrap();
    let c = f.ctx.encrypt(&pt, &f.keys.public, &mut stream(43, &[])).unwrap();
    assert_eq!(f.ctx.serialize_ciphertext(&a), f.ctx.serialize_ciphertext(&b));
    assert_ne!(f.ctx.serialize_ciphertext(&a), f.ctx.serialize_ciphertext(&c));
}

#[test]
fn ckks_serialization_roundtrip() {
    let f = ckks();
    let ev = f.ctx.evaluator(&f.keys.public).unwrap();
    let v = uniform(14, 64);
    let ct = f.ctx.encrypt(&f.ctx.encode(&v).unwrap(), &f.keys.public, &mut stream(3, &[])).unwrap();
    let lower = ev.mul_plain(&ct, &f.ctx.encode(&[2.0; 64]).unwrap()).unwrap();
    for c in [&ct, &lower] {
        let bytes = f.ctx.serialize_ciphertext(c);
        assert_eq!(&bytes[4..8], b"SCT1");
        assert_eq!(bytes[8], BackendKind::Ckks.tag());
        assert_eq!(bytes[9] as u32, c.level());
        assert_eq!(&f.ctx.deserialize_ciphertext(&bytes).unwrap(), c);
    }

    let pk_bytes = f.ctx.serialize_public_keys(&f.keys.public);
    let public = f.ctx.deserialize_public_keys(&pk_bytes).unwrap();
    let sk_bytes = f.ctx.serialize_secret_key(f.keys.secret.as_ref().unwrap());
    let secret = f.ctx.deserialize_secret_key(&sk_bytes).unwrap();
    let restored = KeySet { public, secret: Some(secret) };
    let ev2 = f.ctx.evaluator(&restored.public).unwrap();
    let rotated = ev2.rotate(&ct, 3).unwrap();
    let got = f.ctx.decrypt(&rotated, &restored).unwrap().values;
    let mut want = v.clone();
    want.resize(f.ctx.slot_count(), 0.0);
    want.rotate_left(3);
    assert!(max_abs_diff(&got, &want) < 1e-6);
}
