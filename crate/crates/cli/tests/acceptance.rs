//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Every tolerance is a constant in this file.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use prosody_mi::baseline::{default_suite, run_suite, MixedPairConfig};
use prosody_mi::corpus::{SplitName, TokenId, WordToken};
use prosody_mi::density::{default_bandwidth_grid, entropy_mc, fit_kde, Points};
use prosody_mi::dsp::{bandpass, dct_ii, dct_iii, pause_after, track_f0, YinParams};
use prosody_mi::infometrics::{mutual_information, uncertainty_coefficient, LabeledEntropy, DEFAULT_H_MIN_NATS};
use prosody_mi::pipeline::{estimate, EstimateParams};
use prosody_mi::predictor::{train_head, SearchSpace};
use prosody_mi::synth::{planted_linear_gaussian, ContextCorpus, ContextSpec};
use prosody_mi::{ContextType, EntropyEstimate, MlpConfig, PredictiveFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const KDE_TOL_NATS: f64 = 0.02;
const KDE_MAX_RUNTIME: Duration = Duration::from_secs(60);
const KDE_N: usize = 50_000;
const KDE_HELDOUT_N: usize = 5_000;
const H_STD_NORMAL: f64 = 1.418_938_533_204_672_7;
const H_HALF_SD_NORMAL: f64 = 0.725_791_352_644_727_4;
const SCALING_TOL_NATS: f64 = 0.03;

const MIXED_N: usize = 20_000;
const MIXED_SEED: u64 = 7;
const KS_TOL_NATS: f64 = 0.03;
const PIPELINE_TOL_NATS: f64 = 0.05;
const PIPELINE_OVER_KS_TOL_NATS: f64 = 0.02;
const NULL_TOL_NATS: f64 = 0.02;

const GRAD_DRAWS: usize = 100;
const GRAD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-5;

const HEAD_TOL_NATS: f64 = 0.05;
const HEAD_MAX_EPOCHS: usize = 100;
const HEAD_MAX_RUNTIME: Duration = Duration::from_secs(300);
const HEAD_SIGMA: f64 = 0.1;
const HEAD_DIM: usize = 4;

const YIN_TOL_HZ: f64 = 2.0;
const DCT_TOL: f64 = 1e-9;
const STOPBAND_MIN_DB: f64 = 20.0;
/// Float rounding bound for 25 words with decimal times: two roundings per
/// word plus the running sum.
const SPAN_MAX_ULPS_DECIMAL: f64 = 75.0;

const E2E_MAX_RUNTIME: Duration = Duration::from_secs(600);

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal_points(n: usize, sd: f64, seed: u64) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, sd).expect("valid sd");
    Points::from_scalars(&(0..n).map(|_| dist.sample(&mut rng)).collect::<Vec<_>>()).expect("finite points")
}

fn kde_entropy(sd: f64, seed: u64) -> (f64, Duration) {
    let start = Instant::now();
    let train = normal_points(KDE_N, sd, seed);
    let heldout = normal_points(KDE_HELDOUT_N, sd, seed + 1);
    let eval = normal_points(KDE_N, sd, seed + 2);
    let model = fit_kde(&train, &heldout, &default_bandwidth_grid(KDE_N, 1)).expect("kde fit");
    (entropy_mc(&model, &eval).expect("entropy"), start.elapsed())
}

fn kde_accuracy() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for (sd, expected, seed) in [(1.0, H_STD_NORMAL, 10), (0.5, H_HALF_SD_NORMAL, 20)] {
        let (h, t) = kde_entropy(sd, seed);
        ok &= (h - expected).abs() <= KDE_TOL_NATS && t < KDE_MAX_RUNTIME;
        details.push(format!(
            "sd {sd}: H = {h:.5} (want {expected:.5} ± {KDE_TOL_NATS}) in {:.1}s",
            t.as_secs_f64()
        ));
    }
    ensure(ok, details.join("; "))
}

fn entropy_scaling() -> Check {
    let (h1, _) = kde_entropy(1.0, 30);
    let (h2, _) = kde_entropy(2.0, 40);
    let diff = h2 - h1;
    ensure(
        (diff - std::f64::consts::LN_2).abs() <= SCALING_TOL_NATS,
        format!("H(sd 2) - H(sd 1) = {diff:.5} (want ln 2 ± {SCALING_TOL_NATS})"),
    )
}

fn mixed_pair_and_null() -> (Check, Check) {
    let suite = default_suite(MIXED_N, MIXED_SEED);
    let rows = match run_suite(&suite, &MixedPairConfig::default()) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let (null, separated): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.instance.starts_with("null"));

    let mut ok = true;
    let mut details = Vec::new();
    for r in &separated {
        let over = r.pipeline_mi - r.ks_mi;
        ok &= r.abs_gap_ks() <= KS_TOL_NATS
            && r.abs_gap_pipeline() <= PIPELINE_TOL_NATS
            && over <= PIPELINE_OVER_KS_TOL_NATS;
        details.push(format!(
            "{}: oracle {:.4} ks {:.4} pipeline {:.4}",
            r.instance, r.oracle_mi, r.ks_mi, r.pipeline_mi
        ));
    }
    let recovery = ensure(ok, details.join("; "));

    let mut ok = !null.is_empty();
    let mut details = Vec::new();
    for r in &null {
        ok &= r.ks_mi.abs() < NULL_TOL_NATS
            && r.pipeline_mi.abs() < NULL_TOL_NATS
            && r.histogram_mi.abs() < NULL_TOL_NATS;
        details.push(format!(
            "{}: ks {:.4} pipeline {:.4} histogram {:.4} (want |MI| < {NULL_TOL_NATS})",
            r.instance, r.ks_mi, r.pipeline_mi, r.histogram_mi
        ));
    }
    (recovery, ensure(ok, details.join("; ")))
}

fn random_case(family: PredictiveFamily, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    match family {
        PredictiveFamily::GaussianScalar => (
            vec![rng.random_range(-3.0..3.0), rng.random_range(0.2..3.0)],
            vec![rng.random_range(-4.0..4.0)],
        ),
        PredictiveFamily::GammaScalar => (
            vec![rng.random_range(0.5..5.0), rng.random_range(0.5..5.0)],
            vec![rng.random_range(0.05..5.0)],
        ),
        PredictiveFamily::GaussianDiag { k } => {
            let mu: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let sd: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
            let y: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
            ([mu, sd].concat(), y)
        }
    }
}

fn gradient_checks() -> Check {
    let mut worst: f64 = 0.0;
    for (i, family) in [
        PredictiveFamily::GaussianScalar,
        PredictiveFamily::GammaScalar,
        PredictiveFamily::GaussianDiag { k: 8 },
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        for _ in 0..GRAD_DRAWS {
            let (params, target) = random_case(family, &mut rng);
            let (_, grad) = family.nll_grad(&params, &target).map_err(|e| e.to_string())?;
            for j in 0..params.len() {
                let mut up = params.clone();
                let mut down = params.clone();
                up[j] += GRAD_STEP;
                down[j] -= GRAD_STEP;
                let fd = (family.nll(&up, &target).map_err(|e| e.to_string())?
                    - family.nll(&down, &target).map_err(|e| e.to_string())?)
                    / (2.0 * GRAD_STEP);
                worst = worst.max((grad[j] - fd).abs() / grad[j].abs().max(1.0));
            }
        }
    }
    ensure(
        worst <= GRAD_REL_TOL,
        format!("worst relative error {worst:.2e} over {GRAD_DRAWS} draws per family (want <= {GRAD_REL_TOL:e})"),
    )
}

fn head_oracle() -> Check {
    let start = Instant::now();
    let train = planted_linear_gaussian(10_000, HEAD_DIM, HEAD_SIGMA, 1);
    let val = planted_linear_gaussian(2_000, HEAD_DIM, HEAD_SIGMA, 2);
    let config = MlpConfig {
        hidden_units: 16,
        learning_rate: 3e-3,
        batch_size: 128,
        max_epochs: HEAD_MAX_EPOCHS,
        patience: 10,
        ..Default::default()
    };
    let head = train_head(&train, &val, &config, PredictiveFamily::GaussianScalar).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let analytic = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * HEAD_SIGMA * HEAD_SIGMA).ln();
    ensure(
        (head.val_xent_nats - analytic).abs() <= HEAD_TOL_NATS
            && head.val_history.len() <= HEAD_MAX_EPOCHS
            && t < HEAD_MAX_RUNTIME,
        format!(
            "val xent {:.4} vs analytic {analytic:.4} (± {HEAD_TOL_NATS}) after {} epochs in {:.1}s",
            head.val_xent_nats,
            head.val_history.len(),
            t.as_secs_f64()
        ),
    )
}

fn context_ordering() -> Check {
    let corpus = ContextCorpus::generate(&ContextSpec::default());
    let params = EstimateParams {
        n_folds: 10,
        search: SearchSpace {
            learning_rate: [3e-3, 1e-2],
            l2_lambda: [1e-8, 1e-5],
            dropout_p: vec![0.0],
            n_layers: vec![1],
            hidden_units: vec![32, 64],
            batch_size: vec![128],
            max_epochs: 50,
            patience: 5,
        },
        n_trials: 4,
        seed: 3,
        ..Default::default()
    };
    let mut mis = Vec::new();
    for context in ContextType::ALL {
        let [train, dev, test] = SplitName::ALL.map(|s| corpus.dataset(context, s));
        let out =
            estimate(&train, &dev, &test, PredictiveFamily::GaussianScalar, &params).map_err(|e| e.to_string())?;
        let label = |estimate: EntropyEstimate| LabeledEntropy {
            feature: "planted".into(),
            zscored: false,
            estimate,
        };
        let r = mutual_information(&label(out.h), &label(out.h_cond), context, "onehot").map_err(|e| e.to_string())?;
        mis.push((context, r.mi_nats, r.mi_std));
    }
    let within = |a: (ContextType, f64, f64), b: (ContextType, f64, f64)| a.1 <= b.1 + a.2.hypot(b.2);
    let detail = mis
        .iter()
        .map(|(c, m, s)| format!("{}: {m:.4} ± {s:.4}", c.short_name()))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(within(mis[0], mis[1]) && within(mis[1], mis[2]), detail)
}

fn sawtooth(freq: f64, sr: u32, secs: f64) -> Vec<f64> {
    (0..(sr as f64 * secs) as usize)
        .map(|i| 2.0 * (freq * i as f64 / sr as f64).fract() - 1.0)
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn tiled_tokens(rng: &mut ChaCha8Rng, snap: impl Fn(f64) -> f64) -> Vec<WordToken> {
    let mut t = 0.37;
    (0..25)
        .map(|i| {
            let start = snap(t + if i % 3 == 0 { 0.0 } else { rng.random_range(0.0..0.4) });
            let end = snap(start + rng.random_range(0.05..0.6));
            t = end;
            WordToken {
                id: TokenId::new("u", i),
                text: "w".into(),
                start_s: start,
                end_s: end,
                speaker_id: String::new(),
                phones: vec![],
            }
        })
        .collect()
}

fn tiled_sum(tokens: &[WordToken]) -> Result<(f64, f64), String> {
    let mut total = 0.0;
    for (i, tok) in tokens.iter().enumerate() {
        total += tok.duration() + pause_after(tok, tokens.get(i + 1)).map_err(|e| e.to_string())?;
    }
    Ok((total, tokens[tokens.len() - 1].end_s - tokens[0].start_s))
}

fn dsp_oracles() -> Check {
    let mut details = Vec::new();
    let mut ok = true;

    let track = track_f0(&sawtooth(120.0, 16_000, 1.0), 16_000, &YinParams::default()).map_err(|e| e.to_string())?;
    let mut voiced: Vec<f64> = track.f0_hz.iter().copied().filter(|&f| f > 0.0).collect();
    voiced.sort_by(f64::total_cmp);
    let median = voiced.get(voiced.len() / 2).copied().unwrap_or(0.0);
    ok &= (median - 120.0).abs() <= YIN_TOL_HZ;
    details.push(format!("yin median {median:.2} Hz"));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    let back = dct_iii(&dct_ii(&x));
    let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= err <= DCT_TOL;
    details.push(format!("dct k=100 round trip {err:.1e}"));

    // Exact equality on a dyadic grid, where every time is representable;
    // decimal times are held to float rounding only.
    let tick = 1.0 / 1024.0;
    let dyadic = tiled_tokens(&mut rng, |x| (x / tick).round() * tick);
    let (total, span) = tiled_sum(&dyadic)?;
    ok &= total == span;
    let decimal = tiled_tokens(&mut rng, |x| x);
    let (dec_total, dec_span) = tiled_sum(&decimal)?;
    let ulps = (dec_total - dec_span).abs() / (dec_span * f64::EPSILON);
    ok &= ulps <= SPAN_MAX_ULPS_DECIMAL;
    details.push(format!(
        "duration + pause {total} vs span {span} on a dyadic grid, {ulps:.1} ulp apart on decimal times"
    ));

    let sr = 16_000;
    let hum: Vec<f64> = (0..sr * 2)
        .map(|i| (2.0 * std::f64::consts::PI * 50.0 * i as f64 / sr as f64).sin())
        .collect();
    let filtered = bandpass(&hum, sr as u32, 300.0, 5000.0).map_err(|e| e.to_string())?;
    let mid = sr / 2..3 * sr / 2;
    let db = 20.0 * (rms(&hum[mid.clone()]) / rms(&filtered[mid])).log10();
    ok &= db >= STOPBAND_MIN_DB;
    details.push(format!("50 Hz attenuated {db:.1} dB"));

    ensure(ok, details.join("; "))
}

fn arithmetic() -> Check {
    let labeled = |feature: &str, value: f64, std: f64| LabeledEntropy {
        feature: feature.into(),
        zscored: false,
        estimate: EntropyEstimate {
            value_nats: value,
            std_nats: std,
            n_eval: 1,
            n_folds: 1,
        },
    };
    let bi = ContextType::Bidirectional;
    let prom = mutual_information(
        &labeled("prominence", 0.536, 0.0),
        &labeled("prominence", -0.165, 0.0),
        bi,
        "m",
    )
    .map_err(|e| e.to_string())?;
    let dct = mutual_information(&labeled("f0_dct", 11.619, 0.0), &labeled("f0_dct", 2.936, 0.0), bi, "m")
        .map_err(|e| e.to_string())?;
    let uc = uncertainty_coefficient(&prom, DEFAULT_H_MIN_NATS).map_err(|e| e.to_string())?;
    let (a, b) = (format!("{:.3}", prom.mi_nats), format!("{:.3}", dct.mi_nats));
    ensure(
        a == "0.701" && b == "8.683" && (uc.value - 0.0942).abs() <= 1e-4,
        format!("prominence MI {a}, f0 MI {b}, uc {:.5}", uc.value),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_prosody-mi"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .expect("readable dir")
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, base, out);
        } else {
            out.push((p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
        }
    }
}

fn pipeline_run(root: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let corpus = root.join("corpus");
    run_cli(&["synth", "--out", corpus.to_str().unwrap()])?;
    let config = corpus.join("config.json");
    let config = config.to_str().unwrap();
    run_cli(&["extract", "--config", config])?;
    for feature in ["energy", "duration", "pause", "prominence", "prominence_relative", "f0"] {
        for context in ["current", "past", "bidirectional"] {
            run_cli(&[
                "estimate",
                "--config",
                config,
                "--feature",
                feature,
                "--context",
                context,
            ])?;
        }
    }
    run_cli(&["report", "--config", config])?;
    let mut files = Vec::new();
    let run = corpus.join("run");
    collect_files(&run, &run, &mut files);
    Ok(files)
}

fn end_to_end_determinism() -> Check {
    let start = Instant::now();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let a = pipeline_run(dirs[0].path())?;
    let b = pipeline_run(dirs[1].path())?;
    let t = start.elapsed();
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    ensure(
        a.len() == b.len() && differing.is_empty() && !a.is_empty() && t < E2E_MAX_RUNTIME,
        format!(
            "{} files compared, {} differ{}; two runs in {:.1}s",
            a.len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" ({})", differing.join(", "))
            },
            t.as_secs_f64()
        ),
    )
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    })
}

fn main() {
    let (recovery, null) = std::panic::catch_unwind(mixed_pair_and_null)
        .unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    let results: Vec<(&str, Check)> = vec![
        ("KDE entropy accuracy", guarded(kde_accuracy)),
        ("entropy scaling law", guarded(entropy_scaling)),
        ("mixed-pair MI recovery", recovery),
        ("independence null", null),
        ("gradient checks", guarded(gradient_checks)),
        ("conditional-entropy head oracle", guarded(head_oracle)),
        ("context ordering", guarded(context_ordering)),
        ("DSP oracles", guarded(dsp_oracles)),
        ("arithmetic checks", guarded(arithmetic)),
        ("end-to-end determinism", guarded(end_to_end_determinism)),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
