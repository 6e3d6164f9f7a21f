use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rhe_engine::{HeadSpec, PlainHead};
use shadow_harness::{
    add_dp_noise, generate_shadow, normalize_weights, poisson_batch, run_toy_attack, shadow_record, simulate_weight_extraction,
    toy_attack, train_head, train_head_dpsgd, write_jsonl, ClassCounts, DpConfig, LabeledSet, NormStats, Prior, PriorSpec,
    ShadowConfig, TrainConfig,
};

fn prior(classes: usize, dim: usize) -> (PriorSpec, Prior) {
    let spec = PriorSpec::isotropic(classes, dim, 1.0, 1);
    (spec.clone(), Prior::from_spec(spec, None).unwrap())
}

fn one_shot(dim: usize, dp: Option<DpConfig>) -> (Prior, ShadowConfig) {
    let (spec, prior) = prior(2, dim);
    let train = TrainConfig::linear_probe(HeadSpec::new(vec![dim, 2]).unwrap(), 2);
    (prior, ShadowConfig { prior: spec, counts: ClassCounts::balanced(2, 1), train, dp })
}

fn random_set(n: usize, dim: usize, classes: usize, seed: u64) -> LabeledSet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    LabeledSet {
        features: (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        labels: (0..n).map(|i| i % classes).collect(),
        indices: None,
    }
}

#[test]
fn mixture_class_means_match_the_generator() {
    let (_, p) = prior(2, 8);
    let n = 10_000;
    let set = p.sample_training_set(&ClassCounts::balanced(2, n / 2), &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
    for c in 0..2 {
        let items: Vec<&[f64]> = set.of_class(c).collect();
        for j in 0..8 {
            let mean = items.iter().map(|x| x[j]).sum::<f64>() / items.len() as f64;
            let tol = 3.0 * p.feature_sd()[j] / (items.len() as f64).sqrt();
            assert!((mean - p.class_mean(c).unwrap()[j]).abs() <= tol, "class {c} coord {j}");
        }
    }
}

/// Largest eigenvalue of `XᵀX/N` by power iteration.
fn gram_top_eigenvalue(set: &LabeledSet) -> f64 {
    let d = set.features[0].len();
    let n = set.len() as f64;
    let mut v = vec![1.0; d];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let mut w = vec![0.0; d];
        for x in &set.features {
            let dot: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += dot * xi / n);
        }
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / lambda).collect();
    }
    lambda
}

#[test]
fn loss_decreases_below_the_smoothness_step() {
    let set = random_set(20, 8, 3, 4);
    let spec = HeadSpec::new(vec![8, 3]).unwrap();
    let wd = 1e-3;
    // Softmax cross-entropy Hessians are bounded by ½·XᵀX/N (on inputs augmented with the bias 1).
    let augmented = LabeledSet {
        features: set.features.iter().map(|x| x.iter().copied().chain([1.0]).collect()).collect(),
        ..set.clone()
    };
    let smooth = 0.5 * gram_top_eigenvalue(&augmented) + wd;
    for frac in [0.1, 0.5, 0.99] {
        let cfg = TrainConfig { lr: frac / smooth, weight_decay: wd, epochs: 300, sigma_init: 0.1, head: spec.clone(), class_weights: None };
        let t = train_head(&set, &cfg, 2).unwrap();
        assert!(t.losses.windows(2).all(|w| w[1] <= w[0] + 1e-15), "lr = {frac}/L");
        assert!(t.losses.last() < t.losses.first());
    }
}

#[test]
fn noiseless_full_batch_dpsgd_is_gradient_descent() {
    let set = random_set(12, 5, 3, 8);
    let cfg = TrainConfig { class_weights: Some(vec![1.0, 2.0, 0.5]), ..TrainConfig::linear_probe(HeadSpec::new(vec![5, 4, 3]).unwrap(), 12) };
    let dp = DpConfig::new(1e6, 0.0, 1.0);
    let gd = train_head(&set, &cfg, 6).unwrap();
    let private = train_head_dpsgd(&set, &cfg, &dp, 6).unwrap();
    assert_eq!(gd.head, private.head);
    assert_eq!(gd.losses, private.losses);
    assert_eq!(private.dp.unwrap().clipped_examples, 0);
}

#[test]
fn dp_noise_has_the_configured_scale() {
    let dp = DpConfig::new(1.5, 2.0, 1.0);
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let frozen = [0.3, -1.2, 4.0];
    let mut draws = Vec::with_capacity(30_000);
    for _ in 0..10_000 {
        let mut g = frozen;
        add_dp_noise(&mut g, &dp, &mut rng);
        draws.extend(g.iter().zip(&frozen).map(|(a, b)| a - b));
    }
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
    assert!((sd / 3.0 - 1.0).abs() < 0.05, "{sd}");
}

#[test]
fn poisson_batch_sizes_average_to_qn() {
    let (n, q, draws) = (50, 0.3, 10_000);
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let sizes: Vec<usize> = (0..draws).map(|_| poisson_batch(n, q, &mut rng).len()).collect();
    let mean = sizes.iter().sum::<usize>() as f64 / draws as f64;
    let se = (n as f64 * q * (1.0 - q) / draws as f64).sqrt();
    assert!((mean - q * n as f64).abs() <= 3.0 * se, "{mean}");
}

#[test]
fn empty_batches_skip_the_step() {
    let set = random_set(2, 3, 2, 1);
    let cfg = TrainConfig { epochs: 40, ..TrainConfig::linear_probe(HeadSpec::new(vec![3, 2]).unwrap(), 2) };
    let t = train_head_dpsgd(&set, &cfg, &DpConfig::largest_batch(1.0, 1.0, 2), 3).unwrap();
    let stats = t.dp.unwrap();
    assert!(!stats.skipped_steps.is_empty());
    assert!(stats.skipped_steps.iter().all(|&e| stats.batch_sizes[e] == 0));
    assert!(t.head.flatten().iter().all(|x| x.is_finite()));
}

#[test]
fn worker_count_does_not_change_output() {
    let (prior, cfg) = one_shot(8, Some(DpConfig::largest_batch(1.0, 1.0, 2)));
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for workers in [1, 8] {
        let path = dir.path().join(format!("w{workers}.jsonl"));
        let records = generate_shadow(&prior, &cfg, 1000, 77, workers).unwrap();
        write_jsonl(std::io::BufWriter::new(std::fs::File::create(&path).unwrap()), &records).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn records_are_reproducible_from_their_seed() {
    let (prior, cfg) = one_shot(8, None);
    let records = generate_shadow(&prior, &cfg, 5, 3, 1).unwrap();
    for r in &records {
        assert_eq!(&shadow_record(&prior, &cfg, r.seed).unwrap(), r);
    }
}

#[test]
fn normalization_matches_a_streaming_oracle() {
    let (prior, cfg) = one_shot(4, None);
    let records = generate_shadow(&prior, &cfg, 10_000, 5, 1).unwrap();
    let (z, stats) = normalize_weights(&records).unwrap();
    // Welford's single-pass recurrence.
    let dim = records[0].theta.len();
    let (mut mean, mut m2) = (vec![0.0; dim], vec![0.0; dim]);
    for (k, r) in records.iter().enumerate() {
        for j in 0..dim {
            let delta = r.theta[j] - mean[j];
            mean[j] += delta / (k + 1) as f64;
            m2[j] += delta * (r.theta[j] - mean[j]);
        }
    }
    for j in 0..dim {
        let sd = (m2[j] / records.len() as f64).sqrt();
        assert!((stats.mean[j] - mean[j]).abs() <= 1e-12 * (1.0 + mean[j].abs()));
        assert!((stats.sd[j] / sd - 1.0).abs() <= 1e-9, "coord {j}");
        let col_mean = z.iter().map(|r| r[j]).sum::<f64>() / z.len() as f64;
        let col_var = z.iter().map(|r| (r[j] - col_mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert!(col_mean.abs() < 1e-10 && (col_var - 1.0).abs() < 1e-10);
    }
    let same = vec![records[0].clone(); 3];
    let (z, stats) = normalize_weights(&same).unwrap();
    assert!(z.iter().flatten().all(|&x| x == 0.0) && stats.degenerate.iter().all(|&d| d));
}

#[test]
fn extraction_preserves_the_network_function() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let random = PlainHead::random(&HeadSpec::new(vec![16, 8, 4]).unwrap(), 0.5, &mut rng);
    let set = random_set(30, 16, 3, 2);
    let cfg = TrainConfig { lr: 0.05, epochs: 50, sigma_init: 0.3, ..TrainConfig::linear_probe(HeadSpec::new(vec![16, 6, 5, 3]).unwrap(), 30) };
    let trained = train_head(&set, &cfg, 4).unwrap().head;
    for head in [random, trained] {
        let extracted = simulate_weight_extraction(&head, 8).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x: Vec<f64> = (0..head.layers[0].d_in()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, b) = (head.forward(&x).unwrap(), extracted.forward(&x).unwrap());
            worst = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(worst, f64::max);
        }
        assert!(worst <= 1e-6, "{worst}");
    }
}

fn centered_cosine(a: &[f64], b: &[f64], center: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for ((x, y), c) in a.iter().zip(b).zip(center) {
        dot += (x - c) * (y - c);
        na += (x - c) * (x - c);
        nb += (y - c) * (y - c);
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Mean fraction of 100 fresh class-`c` prior draws whose similarity to the true training item is
/// below the candidate's.
fn ranking_advantage(dp: Option<DpConfig>) -> f64 {
    let (prior, cfg) = one_shot(16, dp);
    let spec = cfg.train.head.clone();
    let fit = generate_shadow(&prior, &cfg, 2000, 1, 1).unwrap();
    let stats = NormStats::fit(fit.iter().map(|r| r.theta.as_slice())).unwrap();
    let trials = generate_shadow(&prior, &cfg, 1000, 2, 1).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let mut total = 0.0;
    for (k, r) in trials.iter().enumerate() {
        let c = k % 2;
        let set = r.training_set(&prior).unwrap();
        let truth = set.of_class(c).next().unwrap();
        let mu = prior.class_mean(c).unwrap();
        let candidate = toy_attack(&r.theta, &stats, &prior, &spec, c).unwrap();
        let score = centered_cosine(&candidate, truth, mu);
        let beaten = (0..100)
            .filter(|_| centered_cosine(&prior.draw(c, &mut rng).unwrap(), truth, mu) < score)
            .count();
        total += beaten as f64 / 100.0;
    }
    total / trials.len() as f64
}

#[test]
fn toy_attack_outranks_prior_draws_without_dp() {
    let clean = ranking_advantage(None);
    assert!(clean >= 0.95, "{clean}");
    let noisy = ranking_advantage(Some(DpConfig::largest_batch(1.0, 4.0, 2)));
    assert!(noisy < 0.7, "{noisy}");
}

#[test]
fn robustness_declines_with_dp_noise() {
    let mut previous: Option<(f64, f64)> = None;
    for sigma in [None, Some(0.5), Some(1.0), Some(2.0), Some(4.0)] {
        let (prior, cfg) = one_shot(16, sigma.map(|s| DpConfig::largest_batch(1.0, s, 2)));
        let out = run_toy_attack(&prior, &cfg, 6000, 31, 1).unwrap();
        let tpr = out.tpr_at(0.01).unwrap();
        let n = out.samples.l0.len() as f64;
        let se = (tpr * (1.0 - tpr) / n).sqrt().max(1.0 / n);
        if let Some((prev, prev_se)) = previous {
            assert!(tpr <= prev + 3.0 * (se + prev_se), "σ = {sigma:?}: {tpr} after {prev}");
        }
        previous = Some((tpr, se));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn clipped_norms_never_exceed_the_bound(seed in any::<u64>(), clip in 0.01f64..5.0, sigma in 0.0f64..4.0, n in 2usize..12) {
        let set = random_set(n, 6, 3, seed);
        let cfg = TrainConfig { lr: 0.1, epochs: 20, ..TrainConfig::linear_probe(HeadSpec::new(vec![6, 4, 3]).unwrap(), n) };
        let dp = DpConfig::largest_batch(clip, sigma, n);
        let a = train_head_dpsgd(&set, &cfg, &dp, seed).unwrap();
        prop_assert!(a.dp.as_ref().unwrap().max_clipped_norm <= clip);
        let b = train_head_dpsgd(&set, &cfg, &dp, seed).unwrap();
        prop_assert_eq!(a.head.flatten(), b.head.flatten());
    }
}
