use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;
use std::time::Instant;

use he_core::{HeContext, HeParams, KeySet};
use np_eval::{format_significant, tpr_at_fpr, FitReport, RocCurve, RocSource, Test};
use planner::{calibrate, configure, predict_cost, timing_table, CalibrationOptions, ConfigRequest, CostProfile, TimingRow};
use rand::Rng;
use rhe_engine::{decrypt_logits, encrypt_head, forward, EncryptedHead, ForwardOptions, HeadSpec, PlainHead, PlainLayer};
use shadow_harness::{evaluate_records, generate_shadow, read_jsonl, write_jsonl, ClassCounts, DpConfig, Prior, ShadowConfig, TrainConfig};

use crate::error::{CliError, Result};
use crate::{
    Attack, BenchArgs, CalibrateArgs, Command, ConfigureArgs, EncryptHeadArgs, EvalRocArgs, InferArgs, ShadowGenArgs, TestKind,
    TprAtFprArgs,
};

/// Set to `1` to pin every unseeded random choice to seed 0.
pub const TEST_MODE_ENV: &str = "RHE_TEST_MODE";

const LOGIT_DIGITS: usize = 10;

/// `--seed` wins; otherwise 0 under test mode, fresh entropy outside it.
pub fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.unwrap_or_else(|| {
        if std::env::var(TEST_MODE_ENV).is_ok_and(|v| v == "1") {
            0
        } else {
            he_core::rng::entropy_seed()
        }
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| CliError::Domain(e.to_string()))
}

/// One feature vector per non-empty line, comma separated, each of length `dim`.
pub fn read_features(text: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Domain(format!("line {}: bad number {v:?}", i + 1))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != dim {
                return Err(CliError::Domain(format!("line {}: {} features, head expects {dim}", i + 1, row.len())));
            }
            Ok(row)
        })
        .collect()
}

/// Header `logit_0,…,decision`; values to ten significant digits.
pub fn write_logits_csv(rows: &[(Vec<f64>, usize)]) -> String {
    let width = rows.first().map_or(0, |(l, _)| l.len());
    let mut csv: String = (0..width).map(|i| format!("logit_{i},")).collect();
    csv.push_str("decision\n");
    for (logits, decision) in rows {
        logits.iter().for_each(|v| {
            csv.push_str(&format_significant(*v, LOGIT_DIGITS));
            csv.push(',');
        });
        csv.push_str(&format!("{decision}\n"));
    }
    csv
}

pub(crate) fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Configure(a) => configure_cmd(a, out),
        Command::EncryptHead(a) => encrypt_head_cmd(a, out),
        Command::Infer(a) => infer_cmd(a, out),
        Command::Bench(a) => bench_cmd(a, out),
        Command::Calibrate(a) => calibrate_cmd(a, out),
        Command::ShadowGen(a) => shadow_gen_cmd(a, out),
        Command::EvalRoc(a) => eval_roc_cmd(a, out),
        Command::TprAtFpr(a) => tpr_at_fpr_cmd(a, out),
    }
}

fn load_params(path: &Path) -> Result<HeParams> {
    Ok(HeParams::from_json(&read_text(path)?)?)
}

fn configure_cmd(a: ConfigureArgs, out: &mut dyn Write) -> Result<()> {
    let head = HeadSpec::parse(&a.dims).map_err(|e| CliError::Usage(format!("--dims: {e}")))?;
    let mut req = ConfigRequest::new(head, a.security, a.exp_bits, a.frac_bits);
    req.backend = a.backend.into();
    let params = configure(&req)?;
    write_file(&a.out, params.to_json())?;
    writeln!(
        out,
        "poly_modulus_degree={} chain={:?} scale_bits={}",
        params.poly_modulus_degree, params.coeff_mod_bit_sizes, params.scale_bits
    )?;
    if a.keys.is_some() || a.secret_key.is_some() {
        let ctx = HeContext::new(params)?;
        let keys = ctx.keygen(resolve_seed(a.seed));
        if let Some(path) = &a.keys {
            write_file(path, ctx.serialize_public_keys(&keys.public))?;
        }
        if let Some(path) = &a.secret_key {
            let sk = keys.secret.as_ref().expect("fresh key set holds a secret key");
            write_file(path, ctx.serialize_secret_key(sk))?;
        }
    }
    Ok(())
}

fn encrypt_head_cmd(a: EncryptHeadArgs, out: &mut dyn Write) -> Result<()> {
    let ctx = HeContext::new(load_params(&a.params)?)?;
    let head = PlainHead::from_json(&read_text(&a.head)?)?;
    let public = ctx.deserialize_public_keys(&read_bytes(&a.keys)?)?;
    let encrypted = encrypt_head(&head, &ctx, &public, resolve_seed(a.seed))?;
    let bytes = encrypted.to_bytes(&ctx);
    write_file(&a.out, &bytes)?;
    writeln!(out, "encrypted {} layers, {} bytes", encrypted.layers.len(), bytes.len())?;
    Ok(())
}

fn infer_cmd(a: InferArgs, out: &mut dyn Write) -> Result<()> {
    let bytes = read_bytes(&a.head)?;
    let ctx = HeContext::new(EncryptedHead::read_params(&bytes)?)?;
    let head = EncryptedHead::from_bytes(&ctx, &bytes)?;
    let public = ctx.deserialize_public_keys(&read_bytes(&a.keys)?)?;
    let secret = ctx.deserialize_secret_key(&read_bytes(&a.secret_key)?)?;
    let dim = head.spec.input_dim();
    let features = read_features(&read_text(&a.features)?, dim)?;
    let keys = KeySet { public, secret: Some(secret) };
    let ev = ctx.evaluator(&keys.public)?;
    let opts = ForwardOptions { parallel: a.workers > 1, tracer: None };
    let rows = worker_pool(a.workers)?.install(|| {
        features
            .iter()
            .map(|x| {
                let logits = forward(&head, &ctx, ev, x, opts)?;
                decrypt_logits(&logits, &ctx, &keys)
            })
            .collect::<rhe_engine::Result<Vec<_>>>()
    })?;
    write_file(&a.out, write_logits_csv(&rows))?;
    writeln!(out, "{} predictions", rows.len())?;
    Ok(())
}

/// Weights uniform in `±1/√d_in`, biases in `±0.5`: keeps logits of order one at every width.
fn bench_head(spec: &HeadSpec, seed: u64) -> Result<PlainHead> {
    let mut rng = he_core::rng::stream(seed, &[6]);
    let layers = spec
        .dims
        .windows(2)
        .map(|w| {
            let bound = 1.0 / (w[0] as f64).sqrt();
            PlainLayer {
                weights: (0..w[1]).map(|_| (0..w[0]).map(|_| rng.random_range(-bound..=bound)).collect()).collect(),
                bias: (0..w[1]).map(|_| rng.random_range(-0.5..=0.5)).collect(),
            }
        })
        .collect();
    Ok(PlainHead::new(layers)?)
}

fn mean_seconds<F: FnMut() -> Result<()>>(repetitions: usize, mut f: F) -> Result<f64> {
    f()?;
    let start = Instant::now();
    for _ in 0..repetitions {
        f()?;
    }
    Ok(start.elapsed().as_secs_f64() / repetitions as f64)
}

fn bench_cmd(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    if a.repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be at least 1".into()));
    }
    let params = load_params(&a.params)?;
    let seed = resolve_seed(a.seed);
    let pool = worker_pool(a.workers)?;
    let specs = a
        .dims
        .iter()
        .map(|d| HeadSpec::parse(d).map_err(|e| CliError::Usage(format!("--dims {d}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let profile = match &a.profile {
        Some(path) => CostProfile::from_json(&read_text(path)?)?,
        None => calibrate(&params, &CalibrationOptions { seed, ..CalibrationOptions::default() })?,
    };
    let ctx = HeContext::new(params.clone())?;
    let keys = ctx.keygen(he_core::rng::derive_seed(seed, &[0]));
    let ev = ctx.evaluator(&keys.public)?;
    let opts = ForwardOptions { parallel: a.workers > 1, tracer: None };
    let mut rows = Vec::with_capacity(specs.len());
    for (k, spec) in specs.iter().enumerate() {
        spec.validate(ctx.slot_count())?;
        let head = bench_head(spec, he_core::rng::derive_seed(seed, &[1, k as u64]))?;
        let encrypted = encrypt_head(&head, &ctx, &keys.public, he_core::rng::derive_seed(seed, &[2, k as u64]))?;
        let mut rng = he_core::rng::stream(seed, &[3, k as u64]);
        let x: Vec<f64> = (0..spec.input_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let plain = mean_seconds(a.repetitions, || {
            head.forward(&x)?;
            Ok(())
        })?;
        let enc = pool.install(|| {
            mean_seconds(a.repetitions, || {
                forward(&encrypted, &ctx, ev, &x, opts)?;
                Ok(())
            })
        })?;
        let breakdown = predict_cost(spec, &params, &profile)?;
        rows.push(TimingRow::from_breakdown(&breakdown, Some(plain), Some(enc)));
    }
    write!(out, "{}", timing_table(&rows))?;
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs, out: &mut dyn Write) -> Result<()> {
    let params = load_params(&a.params)?;
    let opts = CalibrationOptions { repetitions: a.repetitions, seed: resolve_seed(a.seed), threads: a.workers, ..Default::default() };
    let profile = calibrate(&params, &opts)?;
    write_file(&a.out, profile.to_json())?;
    writeln!(out, "t_R={}", planner::format_seconds(profile.t_r))?;
    Ok(())
}

fn shadow_gen_cmd(a: ShadowGenArgs, out: &mut dyn Write) -> Result<()> {
    let prior = Prior::load(&a.prior)?;
    let head = HeadSpec::new(vec![prior.dim(), prior.classes()])?;
    let mut train = match &a.train {
        Some(path) => serde_json::from_str::<TrainConfig>(&read_text(path)?)?,
        None => TrainConfig::linear_probe(head, a.n),
    };
    if let Some(epochs) = a.epochs {
        train.epochs = epochs;
    }
    let dp = match &a.dp {
        Some(path) => {
            let dp: DpConfig = serde_json::from_str(&read_text(path)?)?;
            if dp.schema != shadow_harness::DP_SCHEMA {
                return Err(CliError::Domain(format!("unsupported DP schema {:?}", dp.schema)));
            }
            Some(dp)
        }
        None => None,
    };
    let cfg = ShadowConfig { prior: prior.spec().clone(), counts: ClassCounts::from_total(a.n, prior.classes())?, train, dp };
    let records = generate_shadow(&prior, &cfg, a.count, resolve_seed(a.seed), a.workers)?;
    let file = fs::File::create(&a.out).map_err(|e| CliError::Domain(format!("{}: {e}", a.out.display())))?;
    write_jsonl(std::io::BufWriter::new(file), &records)?;
    writeln!(out, "{} shadow records, config {}", records.len(), cfg.hash())?;
    Ok(())
}

fn eval_roc_cmd(a: EvalRocArgs, out: &mut dyn Write) -> Result<()> {
    let Attack::Toy = a.attack;
    let prior = Prior::load(&a.prior)?;
    let file = fs::File::open(&a.shadows).map_err(|e| CliError::Domain(format!("{}: {e}", a.shadows.display())))?;
    let records = read_jsonl(BufReader::new(file))?;
    let spec = HeadSpec::new(vec![prior.dim(), prior.classes()])?;
    let outcome = evaluate_records(&prior, &spec, &records, resolve_seed(a.seed))?;
    write_file(&a.out, outcome.curve.to_csv())?;
    if let Some(path) = &a.fits {
        let (h0, h1) = outcome.samples.fit()?;
        write_file(path, FitReport::new(h0, h1, outcome.samples.l0.len(), outcome.samples.l1.len()).to_json())?;
    }
    writeln!(out, "tpr@fpr=0.01 {}", format_significant(outcome.tpr_at(0.01)?, 6))?;
    Ok(())
}

fn tpr_at_fpr_cmd(a: TprAtFprArgs, out: &mut dyn Write) -> Result<()> {
    let curve = RocCurve::from_csv(&read_text(&a.roc)?, RocSource::Empirical)?;
    let test = match a.test {
        TestKind::Np => Test::NeymanPearson,
        TestKind::Cum => Test::Cumulative,
    };
    writeln!(out, "{}", format_significant(tpr_at_fpr(&curve, a.fpr, test)?, LOGIT_DIGITS))?;
    Ok(())
}
