//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use boosthd::boost::{boost_rounds, BoostConfig, RoundBranch, SammeState};
use boosthd::data::{macro_accuracy, moving_window_features, synth_blobs, RawRecording, SynthConfig};
use boosthd::encoder::EncoderKind;
use boosthd::model_io::{from_bytes, load_model, save_model, to_bytes};
use boosthd::perturb::{bitflip_model, flip_bits, mad, PerturbConfig};
use boosthd::spectral::{limit_terms, monte_carlo_spectrum, mp_moments_numeric, MpParams};
use boosthd::sweep::{
    heatmap_sweep, overfit_sweep, robustness_grid, stability_sweep, HeatmapMode, ModelTemplate, SweepSummary, BOOSTHD,
    ONLINEHD,
};
use boosthd::{BoostHdModel, Error, HdClassifier, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn seeds10() -> Vec<u64> {
    (0..10).collect()
}

fn template() -> ModelTemplate {
    ModelTemplate::new(BoostConfig::default())
}

/// Three-class task in the wide-kernel regime used for stability and
/// imbalance.
fn small_task() -> (boosthd::data::Dataset, boosthd::data::Dataset) {
    let base = SynthConfig {
        n_classes: 3,
        n_per_class: 60,
        n_features: 4,
        separation: 0.25,
        noise_std: 0.15,
        n_subjects: 4,
        seed: 100,
    };
    let test = SynthConfig { n_per_class: 200, seed: 101, ..base };
    (synth_blobs(&base).unwrap(), synth_blobs(&test).unwrap())
}

/// Six-class task where a width-10 learner is weak.
fn narrow_task(n_test_per_class: usize) -> (boosthd::data::Dataset, boosthd::data::Dataset) {
    let base = SynthConfig {
        n_classes: 6,
        n_per_class: 40,
        n_features: 8,
        separation: 1.2,
        noise_std: 0.3,
        n_subjects: 4,
        seed: 100,
    };
    let test = SynthConfig { n_per_class: n_test_per_class, seed: 101, ..base };
    (synth_blobs(&base).unwrap(), synth_blobs(&test).unwrap())
}

fn aggregate(s: &SweepSummary, model: &str, name: &str) -> f64 {
    s.aggregates[model][name]
}

fn c01_reduction_equivalence() -> Outcome {
    let cases = [
        (SynthConfig { n_classes: 3, n_per_class: 50, n_features: 4, seed: 1, ..Default::default() }, 600, 7),
        (
            SynthConfig {
                n_classes: 5,
                n_per_class: 30,
                n_features: 10,
                noise_std: 1.0,
                seed: 2,
                ..Default::default()
            },
            1000,
            11,
        ),
        (
            SynthConfig {
                n_classes: 2,
                n_per_class: 80,
                n_features: 3,
                separation: 0.5,
                seed: 3,
                ..Default::default()
            },
            257,
            13,
        ),
    ];
    let mut total = 0;
    for (synth, d, seed) in cases {
        let train = synth_blobs(&synth).unwrap();
        let test = synth_blobs(&SynthConfig { seed: synth.seed + 50, ..synth }).unwrap();
        let tc = TrainConfig { epochs: 10, shuffle_seed: seed + 1, ..Default::default() };
        let cfg = BoostConfig { n_learners: 1, d_total: d, seed, train: tc, ..Default::default() };
        let boost = BoostHdModel::fit(&train.x, &train.y, train.n_classes(), &cfg).unwrap().model;
        let (single, _) =
            HdClassifier::fit(&train.x, &train.y, train.n_classes(), d, seed, EncoderKind::CosSin, &tc).unwrap();
        let a = boost.predict_batch(&test.x).unwrap();
        let b = single.predict_batch(&test.x).unwrap();
        if a != b {
            let diff = a.iter().zip(&b).filter(|(x, y)| x != y).count();
            return Err(format!("dataset {} differs on {diff} of {} predictions", synth.seed, a.len()));
        }
        total += a.len();
    }
    Ok(format!("3 datasets, {total} identical predictions"))
}

fn c02_boosting_oracle() -> Outcome {
    let labels = [0usize, 0, 0, 1, 1, 1];
    let wrong: [&[usize]; 5] = [&[0], &[3], &[1, 4], &[5], &[2]];
    let preds: Vec<Vec<usize>> = wrong
        .iter()
        .map(|w| labels.iter().enumerate().map(|(j, &y)| if w.contains(&j) { 1 - y } else { y }).collect())
        .collect();

    let k = 2.0f64;
    let mut w = vec![1.0 / 6.0; 6];
    let mut expected = Vec::new();
    for p in &preds {
        let miss: Vec<f64> = p.iter().zip(&labels).map(|(a, b)| if a != b { 1.0 } else { 0.0 }).collect();
        let e = w.iter().zip(&miss).map(|(w, m)| w * m).sum::<f64>() / w.iter().sum::<f64>();
        let alpha = (1.0 / e - 1.0).ln() + (k - 1.0).ln();
        let scaled: Vec<f64> = w.iter().zip(&miss).map(|(w, m)| w * (alpha * m).exp()).collect();
        let z: f64 = scaled.iter().sum();
        w = scaled.iter().map(|v| v / z).collect();
        expected.push((e, alpha, w.clone()));
    }

    let mut state = SammeState::new(6, 2, 10.0);
    let mut worst = 0.0f64;
    for (i, p) in preds.iter().enumerate() {
        let miss: Vec<bool> = p.iter().zip(&labels).map(|(a, b)| a != b).collect();
        let rec = state.step(&miss);
        let (e, alpha, ref wv) = expected[i];
        if rec.branch != RoundBranch::Weighted {
            return Err(format!("round {i} took branch {:?}", rec.branch));
        }
        worst = worst.max((rec.error - e).abs()).max((rec.alpha - alpha).abs());
        for (a, b) in state.weights().iter().zip(wv) {
            worst = worst.max((a - b).abs());
        }
    }

    let mut seen = Vec::new();
    let (_, records) = boost_rounds(&labels, 2, 5, 10.0, |i, weights| {
        seen.push(weights.to_vec());
        Ok(((), preds[i].clone()))
    })
    .unwrap();
    for (i, rec) in records.iter().enumerate() {
        worst = worst.max((rec.error - expected[i].0).abs()).max((rec.alpha - expected[i].1).abs());
        if i > 0 {
            for (a, b) in seen[i].iter().zip(&expected[i - 1].2) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("5 rounds, max deviation {worst:.3e}"))
}

fn c03_mp_moments() -> Outcome {
    let mut worst = 0.0f64;
    for q in [0.1, 0.25, 0.5, 1.0] {
        let (mean, var) = mp_moments_numeric(MpParams::new(q), 1e-9).unwrap();
        worst = worst.max((mean - 1.0).abs()).max((var - q).abs());
    }
    check(worst <= 1e-6, format!("max |error| {worst:.3e}"))
}

fn c04_spectrum_convergence() -> Outcome {
    let (target, _) = mp_moments_numeric(MpParams::new(0.25), 1e-10).unwrap();
    let dev = |nr: usize| {
        let stats = monte_carlo_spectrum(nr, nr / 4, &seeds10()).unwrap();
        let mean = stats.iter().map(|s| s.mean).sum::<f64>() / stats.len() as f64;
        (mean - target).abs() / target
    };
    let small = dev(200);
    let large = dev(2000);
    check(large <= 0.03 && large < small, format!("relative deviation {small:.3e} at N_r=200, {large:.3e} at N_r=2000"))
}

fn c05_axis_ratio_trend() -> Outcome {
    let ratios: Vec<f64> = [500usize, 1000, 2000, 4000]
        .iter()
        .map(|&nr| {
            let stats = monte_carlo_spectrum(nr, 100, &seeds10()).unwrap();
            stats.iter().map(|s| s.axis_ratio).sum::<f64>() / stats.len() as f64
        })
        .collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    check(increasing, format!("mean axis ratios {ratios:.4?}"))
}

fn c06_limit_terms() -> Outcome {
    let terms: Vec<(f64, f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&q| limit_terms(q).unwrap()).collect();
    let dec = |f: fn(&(f64, f64, f64)) -> f64| terms.windows(2).all(|w| f(&w[1]).abs() < f(&w[0]).abs());
    let ok = dec(|t| t.1) && dec(|t| t.2) && terms.iter().all(|t| t.0.is_finite());
    check(ok, format!("(t1, t2, t3) at q=10,100,1000: {terms:.4?}"))
}

fn c07_stability() -> Outcome {
    let (train, test) = small_task();
    let res = stability_sweep(&train, &test, &[500, 1000, 2000, 4000], 10, &seeds10(), &template()).unwrap();
    let s = res.summary().unwrap();
    let b = aggregate(&s, BOOSTHD, "mu_sigma");
    let o = aggregate(&s, ONLINEHD, "mu_sigma");
    check(b < o, format!("mu_sigma boosthd {b:.4} onlinehd {o:.4}"))
}

fn c08_heatmap() -> Outcome {
    let (train, test) = narrow_task(100);
    let t = template();
    let mean_at = |n: usize, d: usize| {
        let s =
            heatmap_sweep(&train, &test, &[n], &[d], HeatmapMode::Divided, &seeds10(), &t).unwrap().summary().unwrap();
        s.cells[0].mean
    };
    let n10 = mean_at(10, 1000);
    let n100 = mean_at(100, 1000);
    let width10 = mean_at(1, 10);
    check(
        width10 < 0.90 && n10 - n100 >= 0.02,
        format!("N_L=10 {n10:.4}, N_L=100 {n100:.4}, drop {:.4}; width-10 learner {width10:.4}", n10 - n100),
    )
}

fn c09_overfit() -> Outcome {
    let (train, test) = small_task();
    let res = overfit_sweep(&train, &test, 0, &[1.0, 8.0], 1000, 10, &seeds10(), &template()).unwrap();
    let s = res.summary().unwrap();
    let b = aggregate(&s, BOOSTHD, "macro_accuracy_drop");
    let o = aggregate(&s, ONLINEHD, "macro_accuracy_drop");
    check(b < o, format!("macro accuracy drop boosthd {b:.4} onlinehd {o:.4}"))
}

fn c10_robustness() -> Outcome {
    let (train, test) = narrow_task(200);
    let p_b = [0.0, 1e-6, 1e-5, 1e-4];
    let cfg = PerturbConfig { trials: 100, ..Default::default() };
    let res = robustness_grid(&train, &test, 1000, 10, &p_b, &[0], &cfg, &template()).unwrap();
    let s = res.summary().unwrap();
    let cell = |model: &str, p: f64| {
        s.cells.iter().find(|c| c.model == model && c.metric == "accuracy" && c.p_b == Some(p)).expect("cell").clone()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for &p in &p_b[1..] {
        let (b, o) = (cell(BOOSTHD, p), cell(ONLINEHD, p));
        ok &= b.mad <= o.mad;
        parts.push(format!("p_b={p:e} MAD {:.4}/{:.4}", b.mad, o.mad));
    }
    for m in [BOOSTHD, ONLINEHD] {
        let (clean, hit) = (cell(m, 0.0).mean, cell(m, 1e-4).mean);
        ok &= hit <= clean;
        parts.push(format!("{m} mean {clean:.4} -> {hit:.4}"));
    }
    check(ok, parts.join("; "))
}

fn c11_fault_injection() -> Outcome {
    let (train, _) = small_task();
    let model = template().fit_boost(&train, 400, 4, 3).unwrap();
    let original = to_bytes(&model);
    for include_encoder in [false, true] {
        let zero = PerturbConfig { p_b: 0.0, seed: 9, include_encoder, ..Default::default() };
        let (m0, n0) = bitflip_model(&model, &zero, 0).unwrap();
        if n0 != 0 || to_bytes(&m0) != original {
            return Err("p_b = 0 changed the model".into());
        }
        let one = PerturbConfig { p_b: 1.0, ..zero };
        let (m1, n1) = bitflip_model(&model, &one, 0).unwrap();
        let (m2, _) = bitflip_model(&m1, &one, 0).unwrap();
        if n1 == 0 || to_bytes(&m2) != original {
            return Err("p_b = 1 twice is not the identity".into());
        }
    }
    let n_bits = 1_000_000u64;
    let mut buf = vec![0.0f32; (n_bits / 32) as usize];
    let flipped = flip_bits(&mut [&mut buf[..]], 1e-3, 42, 0).unwrap();
    let counted: u64 = buf.iter().map(|v| u64::from(v.to_bits().count_ones())).sum();
    let dist = Binomial::new(1e-3, n_bits).unwrap();
    let (lo, hi) = (dist.inverse_cdf(0.005), dist.inverse_cdf(0.995));
    check(
        flipped == counted && (lo..=hi).contains(&flipped),
        format!("identity and involution hold; {flipped} flips in 1e6 bits, 99% bounds [{lo}, {hi}]"),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_boosthd")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn dir_digest(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn c12_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data =
        r#""data": {"synth": {"n_classes": 3, "n_per_class": 30, "n_features": 4, "noise_std": 0.4, "seed": 5}}"#;
    let model = r#""model": {"train": {"epochs": 5}}"#;
    let configs: Vec<(&str, Vec<&str>, String)> = vec![
        (
            "train",
            vec!["train"],
            format!(r#"{{{data}, "model": {{"train": {{"epochs": 5}}, "d_total": 400, "n_learners": 4, "seed": 2}}}}"#),
        ),
        (
            "train-single",
            vec!["train", "--single"],
            format!(r#"{{{data}, "model": {{"train": {{"epochs": 5}}, "d_total": 300, "n_learners": 1}}}}"#),
        ),
        (
            "heatmap",
            vec!["sweep", "heatmap"],
            format!(
                r#"{{{data}, {model}, "seeds": [0, 1], "params": {{"n_learners": [1, 4], "d_values": [200, 400]}}}}"#
            ),
        ),
        (
            "stability",
            vec!["sweep", "stability"],
            format!(
                r#"{{{data}, {model}, "seeds": [0, 1, 2], "params": {{"d_values": [200, 400], "n_learners": 4}}}}"#
            ),
        ),
        (
            "robustness",
            vec!["sweep", "robustness"],
            format!(
                r#"{{{data}, {model}, "seeds": [0], "params": {{"d_total": 400, "n_learners": 4, "p_b": [0.0, 1e-4], "trials": 10}}}}"#
            ),
        ),
        (
            "overfit",
            vec!["sweep", "overfit"],
            format!(
                r#"{{{data}, {model}, "seeds": [0, 1], "params": {{"r_values": [1.0, 4.0], "d_total": 400, "n_learners": 4}}}}"#
            ),
        ),
        ("synth", vec!["data", "synth"], r#"{"synth": {"n_per_class": 20, "seed": 4}}"#.to_string()),
        ("spectral", vec!["analyze", "spectral"], r#"{"q": [0.25, 0.5], "mc_rows": 200, "mc_seeds": 2}"#.to_string()),
    ];
    let mut files = 0;
    for (name, cmd, cfg) in &configs {
        let cfg_path = root.join(format!("{name}.json"));
        std::fs::write(&cfg_path, cfg).unwrap();
        let mut digests = Vec::new();
        for run in 0..2 {
            let out = root.join(format!("{name}-{run}"));
            let mut args = cmd.clone();
            let (c, o) = (cfg_path.to_str().unwrap(), out.to_str().unwrap());
            args.extend(["--config", c, "--out", o]);
            run_cli(&args)?;
            digests.push(dir_digest(&out));
        }
        if digests[0].is_empty() || digests[0] != digests[1] {
            return Err(format!("{name}: outputs differ between identical runs"));
        }
        files += digests[0].len();
    }
    Ok(format!("{} commands, {files} files byte-identical across reruns", configs.len()))
}

fn c13_serialization() -> Outcome {
    let (train, _) = small_task();
    let model = template().fit_boost(&train, 1000, 10, 8).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("model.bhd");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..train.n_features()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, sa) = model.predict(&x).unwrap();
        let (b, sb) = loaded.predict(&x).unwrap();
        let same = a == b && sa.iter().zip(&sb).all(|(p, q)| p.to_bits() == q.to_bits());
        if !same {
            return Err("prediction changed after reload".into());
        }
    }
    let bytes = std::fs::read(&path).unwrap();
    let mut rejected = 0;
    let positions = [0, 7, bytes.len() / 3, bytes.len() / 2, bytes.len() - 5, bytes.len() - 1];
    for &i in &positions {
        let mut bad = bytes.clone();
        bad[i] ^= 0x10;
        if from_bytes(&bad).is_err() {
            rejected += 1;
        }
    }
    let mut mid = bytes.clone();
    mid[bytes.len() / 2] ^= 0x01;
    let checksum = matches!(from_bytes(&mid), Err(Error::ChecksumMismatch));
    let truncated = from_bytes(&bytes[..bytes.len() - 10]).is_err();
    check(
        rejected == positions.len() && checksum && truncated,
        format!("1000 queries identical; {rejected}/{} corruptions rejected, truncation rejected", positions.len()),
    )
}

fn brute_median(v: &[f64]) -> f64 {
    let rank = |k: usize| {
        *v.iter()
            .find(|&&c| {
                let below = v.iter().filter(|&&x| x < c).count();
                let equal = v.iter().filter(|&&x| x == c).count();
                below <= k && k < below + equal
            })
            .unwrap()
    };
    let n = v.len();
    if n % 2 == 1 {
        rank(n / 2)
    } else {
        (rank(n / 2 - 1) + rank(n / 2)) / 2.0
    }
}

fn c14_pipeline_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for case in 0..1000 {
        let len = rng.random_range(5..80);
        let window = rng.random_range(1..=len);
        let stride = rng.random_range(1..10);
        let n_ch = rng.random_range(1..4);
        let channels: Vec<(String, Vec<f64>)> =
            (0..n_ch).map(|c| (format!("c{c}"), (0..len).map(|_| rng.random_range(-100.0..100.0)).collect())).collect();
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
        let rec = RawRecording {
            channels: channels.clone(),
            labels,
            label_names: vec!["a".into(), "b".into(), "c".into()],
            subject_id: "s".into(),
        };
        let ds = moving_window_features(&rec, window, stride).unwrap();
        let n_windows = (len - window) / stride + 1;
        if ds.len() != n_windows {
            return Err(format!("window case {case}: {} windows, expected {n_windows}", ds.len()));
        }
        for k in 0..n_windows {
            for (c, (_, series)) in channels.iter().enumerate() {
                let w = &series[k * stride..k * stride + window];
                let mut sorted = w.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mut sum = 0.0;
                for v in w {
                    sum += v;
                }
                let mean = sum / window as f64;
                let mut ss = 0.0;
                for v in w {
                    ss += (v - mean).powi(2);
                }
                let want = [sorted[0], sorted[window - 1], mean, (ss / window as f64).sqrt()];
                let got = &ds.x.row(k)[4 * c..4 * c + 4];
                if got.iter().zip(&want).any(|(a, b)| a.to_bits() != b.to_bits()) {
                    return Err(format!("window case {case}: {got:?} vs {want:?}"));
                }
            }
        }
    }
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        let k = rng.random_range(2..6);
        let y_true: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let y_pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut per: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (t, p) in y_true.iter().zip(&y_pred) {
            let e = per.entry(*t).or_default();
            e.0 += 1;
            e.1 += usize::from(t == p);
        }
        let mut acc = 0.0;
        for (total, hit) in per.values() {
            acc += *hit as f64 / *total as f64;
        }
        let want = acc / per.len() as f64;
        let got = macro_accuracy(&y_true, &y_pred).unwrap();
        if got.to_bits() != want.to_bits() {
            return Err(format!("macro accuracy case {case}: {got} vs {want}"));
        }
    }
    for case in 0..1000 {
        let n = rng.random_range(1..50);
        let v: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    f64::from(rng.random_range(0..5)) * 0.25
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let m = brute_median(&v);
        let dev: Vec<f64> = v.iter().map(|x| (x - m).abs()).collect();
        let want = brute_median(&dev);
        let got = mad(&v).unwrap();
        if got.to_bits() != want.to_bits() {
            return Err(format!("MAD case {case}: {got} vs {want}"));
        }
    }
    Ok("1000 window, 1000 macro accuracy and 1000 MAD cases exact".into())
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("reduction equivalence", Duration::from_secs(60), c01_reduction_equivalence),
        ("boosting math oracle", Duration::from_secs(1), c02_boosting_oracle),
        ("MP moment identity", Duration::from_secs(5), c03_mp_moments),
        ("spectrum convergence", Duration::from_secs(120), c04_spectrum_convergence),
        ("axis-ratio trend", Duration::from_secs(120), c05_axis_ratio_trend),
        ("limit-term trends", Duration::from_secs(1), c06_limit_terms),
        ("stability ordering", Duration::from_secs(600), c07_stability),
        ("heatmap degradation", Duration::from_secs(600), c08_heatmap),
        ("overfitting resistance", Duration::from_secs(600), c09_overfit),
        ("robustness ordering", Duration::from_secs(900), c10_robustness),
        ("fault-injection exactness", Duration::from_secs(60), c11_fault_injection),
        ("determinism battery", Duration::from_secs(300), c12_determinism),
        ("serialization", Duration::from_secs(60), c13_serialization),
        ("pipeline oracles", Duration::from_secs(60), c14_pipeline_oracles),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if took <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget {budget:?}")),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({detail}) [{:.2}s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
