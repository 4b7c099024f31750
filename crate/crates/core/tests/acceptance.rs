//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, in order, even on success.
//!
//! Criteria 9-11 train on the full synthetic corpus and dominate the
//! runtime. `ACCEPTANCE_FAST=1` runs them on a reduced corpus for a quick
//! smoke check; the verdicts are then not meaningful.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng as _;
use robust_units::augment::{
    add_noise, pitch_shift, reverberate, time_stretch, AugmentationKind, AugmentationSet,
    NoiseKind, VOCODER_HOP,
};
use robust_units::cli::{gen_synth_corpus, pool_frames, CorpusConfig, Split};
use robust_units::ctc::{ctc_brute_force, ctc_grad, ctc_loss, min_frames};
use robust_units::encoder::{FrameEncoder, FrameSequence, LogMelEncoder};
use robust_units::quantizer::{
    dedup, kmeans_fit, ConstantQuantizer, Dense, KMeansConfig, KMeansQuantizer, Logits, MlpQuantizer,
    Quantize,
};
use robust_units::robustness::{levenshtein, ued_dataset, UedOptions, UedReport};
use robust_units::signal::{seeded_rng, Rng, Signal, Utterance};
use robust_units::training::{train_iterative, TrainConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_logits(rng: &mut Rng, frames: usize, classes: usize) -> Logits {
    Logits {
        data: (0..frames * classes).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        classes,
    }
}

fn random_feasible_target(rng: &mut Rng, frames: usize, units: usize) -> Vec<u32> {
    loop {
        let len = rng.gen_range(0..=frames);
        let t: Vec<u32> = (0..len).map(|_| rng.gen_range(0..units as u32)).collect();
        if min_frames(&t) <= frames {
            return t;
        }
    }
}

fn c1_ctc_vs_brute_force() -> Verdict {
    let started = Instant::now();
    let mut rng = seeded_rng(101);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let frames = rng.gen_range(1..=6);
        let units = rng.gen_range(1..=4);
        let logits = random_logits(&mut rng, frames, units + 1);
        let target = random_feasible_target(&mut rng, frames, units);
        let a = ctc_loss(&logits, &target).expect("feasible");
        let b = ctc_brute_force(&logits, &target).expect("small");
        worst = worst.max((a - b).abs());
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(worst <= 1e-6 && secs < 60.0, format!("max |dp - brute| = {worst:.2e} over 1000 instances in {secs:.2} s"))
}

fn c2_ctc_gradient() -> Verdict {
    let mut rng = seeded_rng(202);
    let delta = 1e-4;
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let frames = rng.gen_range(1..=6);
        let units = rng.gen_range(1..=4);
        let mut logits = random_logits(&mut rng, frames, units + 1);
        let target = random_feasible_target(&mut rng, frames, units);
        let (_, grad) = ctc_grad(&logits, &target).expect("feasible");
        for i in 0..logits.data.len() {
            let orig = logits.data[i];
            logits.data[i] = orig + delta;
            let up = ctc_loss(&logits, &target).unwrap();
            logits.data[i] = orig - delta;
            let down = ctc_loss(&logits, &target).unwrap();
            logits.data[i] = orig;
            worst = worst.max(((up - down) / (2.0 * delta) - grad[i]).abs());
        }
    }
    verdict(worst <= 1e-5, format!("max |analytic - central difference| = {worst:.2e} over 200 instances"))
}

fn all_sequences(units: u32, max_len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for u in 0..units {
                let mut t: Vec<u32> = s.clone();
                t.push(u);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn c3_total_probability() -> Verdict {
    let mut rng = seeded_rng(303);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for frames in 1..=4 {
        for units in 1..=3u32 {
            for _ in 0..5 {
                let logits = random_logits(&mut rng, frames, units as usize + 1);
                let total: f64 = all_sequences(units, frames)
                    .iter()
                    .filter(|t| min_frames(t) <= frames)
                    .map(|t| (-ctc_loss(&logits, t).unwrap()).exp())
                    .sum();
                worst = worst.max((total - 1.0).abs());
                cases += 1;
            }
        }
    }
    verdict(worst <= 1e-6, format!("max |sum p(target) - 1| = {worst:.2e} over {cases} instances"))
}

/// Textbook recursion on suffixes, memoized only to keep 10^4 pairs fast.
fn naive_levenshtein(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(v) = memo.get(&(a.len(), b.len())) {
        return *v;
    }
    let v = if a[0] == b[0] {
        naive_levenshtein(&a[1..], &b[1..], memo)
    } else {
        1 + naive_levenshtein(&a[1..], b, memo)
            .min(naive_levenshtein(a, &b[1..], memo))
            .min(naive_levenshtein(&a[1..], &b[1..], memo))
    };
    memo.insert((a.len(), b.len()), v);
    v
}

fn c4_levenshtein() -> Verdict {
    let mut rng = seeded_rng(404);
    let seq = |rng: &mut Rng| -> Vec<u8> {
        let n = rng.gen_range(0..=8);
        (0..n).map(|_| rng.gen_range(0..4)).collect()
    };
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let (a, b) = (seq(&mut rng), seq(&mut rng));
        if levenshtein(&a, &b) != naive_levenshtein(&a, &b, &mut HashMap::new()) {
            mismatches += 1;
        }
    }
    let mut violations = 0;
    for _ in 0..10_000 {
        let (a, b, c) = (seq(&mut rng), seq(&mut rng), seq(&mut rng));
        let ab = levenshtein(&a, &b);
        if ab != levenshtein(&b, &a)
            || levenshtein(&a, &c) > ab + levenshtein(&b, &c)
            || levenshtein(&a, &a) != 0
            || (ab == 0) != (a == b)
        {
            violations += 1;
        }
    }
    verdict(
        mismatches == 0 && violations == 0,
        format!("{mismatches} DP/recursion mismatches in 10000 pairs, {violations} axiom violations in 10000 triples"),
    )
}

fn small_utterances(n: usize, seed: u64) -> Vec<Utterance> {
    let mut rng = seeded_rng(seed);
    let inventory = robust_units::cli::sample_inventory(8, &mut rng);
    (0..n)
        .map(|i| {
            let s = robust_units::cli::synth_utterance(&inventory, 2.0, 16000, &mut rng).unwrap().signal;
            Utterance::new(format!("u{i}"), s)
        })
        .collect()
}

fn c5_ued_sanity() -> Verdict {
    let enc = LogMelEncoder::new(Default::default()).unwrap();
    let data = small_utterances(8, 505);
    let frames = pool_frames(&enc, &data).unwrap();
    let (km, _) = kmeans_fit(&frames, 10, &KMeansConfig::default(), &mut seeded_rng(5)).unwrap();
    let options = UedOptions { seed: 5, trials_per_sample: 2, ..Default::default() };
    let identity = ued_dataset(&km, &enc, &AugmentationSet::identity(), &data, &options).unwrap();
    let identity_zero = identity.records.iter().all(|r| r.measurement.distance == 0)
        && identity.summaries.iter().all(|s| s.value == 0.0);
    let constant = ued_dataset(&ConstantQuantizer { num_units: 10 }, &enc, &AugmentationSet::all_four(), &data, &options)
        .unwrap();
    let constant_zero = constant.summaries.iter().all(|s| s.value == 0.0) && constant.records.len() == 8 * 2 * 4;
    verdict(
        identity_zero && constant_zero,
        format!(
            "identity UED {:?}, constant-quantizer UED {:?}",
            identity.summaries.iter().map(|s| s.value).collect::<Vec<_>>(),
            constant.summaries.iter().map(|s| s.value).collect::<Vec<_>>()
        ),
    )
}

/// Frequency of the largest Hann-windowed DFT magnitude over `bins`.
fn dft_peak_hz(x: &[f64], sample_rate: f64, n: usize) -> (f64, f64) {
    let start = (x.len() - n) / 2;
    let frame: Vec<f64> = (0..n)
        .map(|i| x[start + i] * (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect();
    let mut best = (0, 0.0);
    for k in 1..n / 2 {
        let w = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in frame.iter().enumerate() {
            re += v * (w * i as f64).cos();
            im -= v * (w * i as f64).sin();
        }
        let mag = re * re + im * im;
        if mag > best.1 {
            best = (k, mag);
        }
    }
    (best.0 as f64 * sample_rate / n as f64, sample_rate / n as f64)
}

fn naive_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in h.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

fn c6_augmentations() -> Verdict {
    let mut rng = seeded_rng(606);
    let mut notes = Vec::new();
    let mut pass = true;

    let mut worst_len = 0usize;
    for _ in 0..20 {
        let len = rng.gen_range(4000..40000);
        let rate = rng.gen_range(0.8..=1.2);
        let x = Signal::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16000).unwrap();
        let y = time_stretch(&x, rate).unwrap();
        worst_len = worst_len.max(y.len().abs_diff((len as f64 / rate).round() as usize));
    }
    pass &= worst_len <= VOCODER_HOP;
    notes.push(format!("stretch length error <= {worst_len} samples"));

    let tone = Signal::sine(440.0, 0.5, 32000, 16000);
    let shifted = pitch_shift(&tone, 12).unwrap();
    let (peak, bin) = dft_peak_hz(shifted.samples(), 16000.0, 4096);
    pass &= (peak - 880.0).abs() <= bin;
    notes.push(format!("+12 st peak {peak:.1} Hz (bin {bin:.2})"));

    let mut worst_snr = 0.0_f64;
    for kind in NoiseKind::ALL {
        for snr in [5.0, 10.0, 15.0] {
            let x = Signal::sine(300.0, 0.3, 16000, 16000);
            let noise = kind.generate(9000, 16000, &mut rng);
            let y = add_noise(&x, &noise, snr, &mut rng).unwrap();
            let px: f64 = x.samples().iter().map(|v| v * v).sum();
            let pn: f64 = y.samples().iter().zip(x.samples()).map(|(a, b)| (a - b).powi(2)).sum();
            worst_snr = worst_snr.max((10.0 * (px / pn).log10() - snr).abs());
        }
    }
    pass &= worst_snr <= 0.01;
    notes.push(format!("SNR error {worst_snr:.1e} dB"));

    let mut worst_conv = 0.0_f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..rng.gen_range(1..200)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..rng.gen_range(1..100)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = reverberate(&Signal::new(x.clone(), 16000).unwrap(), &Signal::new(h.clone(), 16000).unwrap()).unwrap();
        let direct = naive_convolution(&x, &h);
        let peak = |v: &[f64]| v.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        let scale = peak(&x) / peak(&direct);
        for (a, b) in y.samples().iter().zip(&direct) {
            worst_conv = worst_conv.max((a - b * scale).abs());
        }
        pass &= y.len() == direct.len();
    }
    pass &= worst_conv <= 1e-10;
    notes.push(format!("reverb vs naive convolution {worst_conv:.1e}"));
    verdict(pass, notes.join("; "))
}

fn c7_kmeans() -> Verdict {
    let mut rng = seeded_rng(707);
    let mut monotone = true;
    let mut worst_mean = 0.0_f64;
    let mut mismatches = 0;
    for trial in 0..20 {
        let dim = rng.gen_range(1..6);
        let n = rng.gen_range(20..200);
        let data: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let frames = FrameSequence::new(data.clone(), dim, 50.0).unwrap();
        let k = rng.gen_range(2..8);
        let (q, fit) = kmeans_fit(&frames, k, &KMeansConfig::default(), &mut seeded_rng(trial)).unwrap();
        monotone &= fit.inertia.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));

        let (one, _) = kmeans_fit(&frames, 1, &KMeansConfig::default(), &mut seeded_rng(trial)).unwrap();
        for d in 0..dim {
            let mean = (0..n).map(|i| data[i * dim + d]).sum::<f64>() / n as f64;
            worst_mean = worst_mean.max((one.centroid(0)[d] - mean).abs());
        }

        let units = q.quantize(&frames).unwrap();
        for (t, u) in units.units().iter().enumerate() {
            if *u as usize != brute_nearest(&q, frames.frame(t)) {
                mismatches += 1;
            }
        }
    }
    verdict(
        monotone && worst_mean <= 1e-8 && mismatches == 0,
        format!("inertia monotone: {monotone}; K=1 centroid error {worst_mean:.1e}; {mismatches} assignment mismatches"),
    )
}

fn brute_nearest(q: &KMeansQuantizer, x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for j in 0..q.num_units() {
        let d: f64 = q.centroid(j).iter().zip(x).map(|(c, v)| (c - v).powi(2)).sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

fn mlp_loss(mlp: &MlpQuantizer, frames: &FrameSequence, target: &[u32]) -> f64 {
    ctc_loss(&mlp.forward(frames).unwrap(), target).unwrap()
}

fn c8_mlp_backprop() -> Verdict {
    let mut rng = seeded_rng(808);
    let delta = 1e-4;
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for _ in 0..30 {
        let dim = rng.gen_range(1..=5);
        let units = rng.gen_range(1..=5);
        let t = rng.gen_range(1..=4);
        let h1 = rng.gen_range(units + 1..=7);
        let h2 = rng.gen_range(units + 1..=7);
        let mut mlp = MlpQuantizer::from_layers([
            Dense::random(dim, h1, &mut rng),
            Dense::random(h1, h2, &mut rng),
            Dense::random(h2, units + 1, &mut rng),
        ])
        .unwrap();
        let frames = FrameSequence::new((0..t * dim).map(|_| rng.gen_range(-2.0..2.0)).collect(), dim, 50.0).unwrap();
        let target = random_feasible_target(&mut rng, t, units);
        let cache = mlp.forward_cached(&frames).unwrap();
        let (_, g) = ctc_grad(&cache.logits, &target).unwrap();
        let grads = mlp.backward(&cache, &g).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|v| v.to_vec()).collect();
        for (ti, a) in analytic.iter().enumerate() {
            for i in 0..a.len() {
                let orig = mlp.tensors()[ti][i];
                // five-point stencil: truncation O(delta^4), rounding eps*|loss|/delta
                let mut at = |h: f64| {
                    mlp.tensors_mut()[ti][i] = orig + h;
                    mlp_loss(&mlp, &frames, &target)
                };
                let numeric = (at(-2.0 * delta) - 8.0 * at(-delta) + 8.0 * at(delta) - at(2.0 * delta)) / (12.0 * delta);
                mlp.tensors_mut()[ti][i] = orig;
                let rel = (a[i] - numeric).abs() / a[i].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    verdict(worst <= 1e-4, format!("max relative error {worst:.1e} over {checked} parameters"))
}

/// Shared corpus, k-means baselines and trained students for 9-11.
struct Pipeline {
    kmeans: Vec<(usize, UedReport)>,
    rounds: Vec<UedReport>,
    log_lines: Vec<String>,
}

fn relative(a: f64, b: f64) -> f64 {
    100.0 * (a - b) / a
}

/// Mean deduplicated unit count per clean utterance; a collapsed quantizer
/// emits very few units and scores a trivially low UED.
fn mean_units(q: &dyn Quantize, enc: &LogMelEncoder, utts: &[Utterance]) -> f64 {
    let total: usize = utts
        .iter()
        .map(|u| dedup(q.quantize(&enc.encode(&u.signal).unwrap()).unwrap().units()).len())
        .sum();
    total as f64 / utts.len() as f64
}

fn run_pipeline(dir: &Path, fast: bool) -> Pipeline {
    let started = Instant::now();
    let corpus = if fast {
        CorpusConfig { train_utterances: 60, dev_utterances: 20, ..CorpusConfig::default() }
    } else {
        CorpusConfig::default()
    };
    let manifest = gen_synth_corpus(&corpus, 2024, dir).unwrap();
    let train = manifest.utterances(Split::Train).unwrap();
    let dev = manifest.utterances(Split::Dev).unwrap();
    let enc = LogMelEncoder::new(Default::default()).unwrap();
    let frames = pool_frames(&enc, &train).unwrap();
    let set = AugmentationSet::all_four();
    let options = UedOptions { seed: 77, ..Default::default() };
    let mut log_lines = vec![format!(
        "corpus {} train / {} dev, {} frames ({:.0} s)",
        train.len(),
        dev.len(),
        frames.num_frames(),
        started.elapsed().as_secs_f64()
    )];

    let mut kmeans = Vec::new();
    let mut teacher = None;
    for k in [10, 20, 50] {
        let (q, _) = kmeans_fit(&frames, k, &KMeansConfig::default(), &mut seeded_rng(k as u64)).unwrap();
        kmeans.push((k, ued_dataset(&q, &enc, &set, &dev, &options).unwrap()));
        if k == 50 {
            log_lines.push(format!("k-means K=50: {:.1} units per clean dev utterance", mean_units(&q, &enc, &dev)));
            teacher = Some(q);
        }
    }
    log_lines.push(format!("k-means baselines done ({:.0} s)", started.elapsed().as_secs_f64()));

    let config = TrainConfig {
        seed: 31,
        max_epochs: if fast { 2 } else { TRAIN_EPOCHS },
        ..TrainConfig::default()
    };
    let (students, log) = train_iterative(&teacher.unwrap(), &enc, &train, &set, &config, 2).unwrap();
    for r in &log.rounds {
        log_lines.push(format!(
            "round {}: val loss {:.2} -> {:.2} (best epoch {}, early stop {})",
            r.round + 1,
            r.initial_val_loss,
            r.best_val_loss,
            r.best_epoch,
            r.stopped_early
        ));
    }
    for (r, s) in students.iter().enumerate() {
        log_lines.push(format!("round {}: {:.1} units per clean dev utterance", r + 1, mean_units(s, &enc, &dev)));
    }
    let rounds = students.iter().map(|s| ued_dataset(s, &enc, &set, &dev, &options).unwrap()).collect();
    log_lines.push(format!("pipeline finished in {:.0} s", started.elapsed().as_secs_f64()));
    Pipeline { kmeans, rounds, log_lines }
}

/// Epoch cap per training round for the desk-scale run.
const TRAIN_EPOCHS: usize = 40;

fn values(r: &UedReport) -> Vec<f64> {
    AugmentationKind::FOUR.iter().map(|k| r.summary(*k).unwrap().value).collect()
}

fn fmt_row(v: &[f64]) -> String {
    AugmentationKind::FOUR
        .iter()
        .zip(v)
        .map(|(k, x)| format!("{}={x:.2}", k.name()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn c9_table1(p: &Pipeline) -> Verdict {
    let base = values(&p.kmeans.iter().find(|(k, _)| *k == 50).unwrap().1);
    let ours = values(&p.rounds[0]);
    let rel: Vec<f64> = base.iter().zip(&ours).map(|(a, b)| relative(*a, *b)).collect();
    let lower_all = base.iter().zip(&ours).all(|(a, b)| b < a);
    let ten = rel.iter().filter(|r| **r >= 10.0).count();
    verdict(
        lower_all && ten >= 3,
        format!(
            "k-means [{}] vs pseudo-labeled [{}], relative % [{}]",
            fmt_row(&base),
            fmt_row(&ours),
            rel.iter().map(|r| format!("{r:.1}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn c10_monotone_in_k(p: &Pipeline) -> Verdict {
    let rows: Vec<Vec<f64>> = p.kmeans.iter().map(|(_, r)| values(r)).collect();
    let monotone = (0..4).filter(|&j| rows.windows(2).all(|w| w[1][j] >= w[0][j])).count();
    verdict(
        monotone >= 3,
        format!(
            "{monotone}/4 families non-decreasing; {}",
            p.kmeans
                .iter()
                .zip(&rows)
                .map(|((k, _), v)| format!("K={k}: [{}]", fmt_row(v)))
                .collect::<Vec<_>>()
                .join("; ")
        ),
    )
}

/// Soft: 2 of 4 is logged as a warning but not a failure.
fn c11_iterative(p: &Pipeline) -> Verdict {
    let r1 = values(&p.rounds[0]);
    let r2 = values(&p.rounds[1]);
    let better = r1.iter().zip(&r2).filter(|(a, b)| b <= a).count();
    let detail = format!("{better}/4 families with round 2 <= round 1; round 1 [{}], round 2 [{}]", fmt_row(&r1), fmt_row(&r2));
    if better == 2 {
        return verdict(true, format!("{detail} (soft criterion: 2/4 tolerated, WARNING)"));
    }
    verdict(better >= 3, detail)
}

fn run_cli(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_robust-units")).args(args).output().expect("binary runs");
    (out.status.code() != Some(1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn c12_cli_determinism(root: &Path) -> Verdict {
    std::fs::create_dir_all(root).unwrap();
    let config = root.join("config.json");
    std::fs::write(
        &config,
        r#"{"corpus": {"train_utterances": 8, "dev_utterances": 3, "max_duration_secs": 3.0},
            "train": {"max_epochs": 2, "batch_size": 4}}"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let d = root.join(run);
        let s = |p: &str| d.join(p).to_string_lossy().into_owned();
        let corpus = s("corpus");
        let mut ok = true;
        let mut stdout = String::new();
        let mut step = |args: Vec<String>| {
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let (success, out) = run_cli(&refs);
            ok &= success;
            stdout.push_str(&out);
        };
        let v = |items: &[&str]| items.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        step(v(&["gen-corpus", "--seed", "5", "--config", cfg, "--out", &corpus]));
        step(v(&["train-kmeans", &corpus, "--seed", "5", "--units", "6", "--config", cfg, "--out", &s("models")]));
        let kmeans = s("models/kmeans_k6.ruq");
        step(v(&["train-robust", &corpus, "--teacher", &kmeans, "--seed", "5", "--rounds", "2", "--aug", "all", "--config", cfg, "--out", &s("robust")]));
        step(v(&["eval-ued", &corpus, "--quantizer", &kmeans, "--seed", "5", "--config", cfg, "--out", &s("reports")]));
        step(v(&["eval-ued", &corpus, "--quantizer", &s("robust/robust_round1.ruq"), "--seed", "5", "--config", cfg, "--out", &s("reports")]));
        step(v(&["compare", &s("reports/kmeans_k6.ued.json"), &s("reports/robust_round1.ued.json")]));
        let wav = s("corpus/audio/dev-0000.wav");
        step(v(&["augment", &wav, "--seed", "5", "--aug", "all", "--out", &s("augmented")]));
        step(v(&["encode", &wav, "--out", &s("features")]));
        outputs.push((ok, stdout.replace(d.to_str().unwrap(), "<run>"), read_all(&d)));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let identical = a.2 == b.2 && a.1 == b.1;
    let reports = a.2.iter().filter(|(n, _)| n.ends_with(".json") || n.ends_with(".csv") || n.ends_with(".jsonl")).count();
    verdict(
        a.0 && b.0 && identical && reports >= 7,
        format!(
            "{} output files ({reports} JSON/CSV) compared across two runs: {}",
            a.2.len(),
            if identical { "byte-identical" } else { "DIFFERENT" }
        ),
    )
}

fn main() {
    // libtest-style flags such as --nocapture are accepted and ignored.
    let fast = std::env::var("ACCEPTANCE_FAST").is_ok_and(|v| v == "1");
    let started = Instant::now();
    let work = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(usize, &str, Verdict, f64)> = Vec::new();
    let mut record = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {n:>2} [{}] {name}: {} ({secs:.1} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((n, name, v, secs));
    };

    record(1, "CTC loss equals brute-force path sum", &mut c1_ctc_vs_brute_force);
    record(2, "CTC gradient matches finite differences", &mut c2_ctc_gradient);
    record(3, "CTC target probabilities sum to one", &mut c3_total_probability);
    record(4, "Levenshtein DP and metric axioms", &mut c4_levenshtein);
    record(5, "UED degenerate cases are zero", &mut c5_ued_sanity);
    record(6, "augmentation contracts", &mut c6_augmentations);
    record(7, "k-means invariants", &mut c7_kmeans);
    record(8, "MLP backprop matches finite differences", &mut c8_mlp_backprop);
    let cli_dir = work.path().join("cli");
    record(12, "CLI outputs are deterministic", &mut || c12_cli_determinism(&cli_dir));

    let t = Instant::now();
    let pipeline = run_pipeline(&work.path().join("corpus"), fast);
    for line in &pipeline.log_lines {
        println!("    pipeline: {line}");
    }
    let pipeline_secs = t.elapsed().as_secs_f64();
    record(9, "pseudo-labeling beats k-means on every augmentation", &mut || {
        let v = c9_table1(&pipeline);
        let within = pipeline_secs < 1800.0;
        verdict(v.pass && within, format!("{}; pipeline {pipeline_secs:.0} s", v.detail))
    });
    record(10, "k-means UED grows with K", &mut || c10_monotone_in_k(&pipeline));
    record(11, "second round does not hurt", &mut || c11_iterative(&pipeline));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s{}",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64(),
        if fast { " (fast mode)" } else { "" }
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
