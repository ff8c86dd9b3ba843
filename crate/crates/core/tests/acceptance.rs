//! Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
//! as arguments to run a subset, e.g. `cargo test --test acceptance -- 1 4`.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mmser_core::augment::{spec_augment, MaskFill, MaskSpec};
use mmser_core::dsp::{stft, HOP_LENGTH, WIN_LENGTH};
use mmser_core::eval::{bootstrap_ci, format_acc_ci, EvalResult};
use mmser_core::fusion::{model_inputs, FusionMode, MelImage};
use mmser_core::grad::Tape;
use mmser_core::io::{load_tensor, save_tensor, Dtype};
use mmser_core::model::{load_checkpoint, save_checkpoint, HtsatModel, ModelConfig};
use mmser_core::pipeline::{
    generate_toy_corpus, run_eval, run_report, run_train, simulate_corpus, RunConfig, Split, ToySpec,
    CHECKPOINT_FILE, TRAIN_LOG_FILE,
};
use mmser_core::room::{fft_convolve, image_source_rir, sample_room, schroeder_t60, RoomScene};
use mmser_core::train::TrainConfig;
use mmser_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dsp_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(100);
    let mut worst = 0.0f64;
    let mut frames = 0;
    for _ in 0..50 {
        let n = r.gen_range(WIN_LENGTH..WIN_LENGTH + 4 * HOP_LENGTH);
        let x = common::uniform_vec(&mut r, n);
        for (t, frame) in stft(&x)?.iter().enumerate() {
            let oracle = common::dft_frame(&x[t * HOP_LENGTH..t * HOP_LENGTH + WIN_LENGTH]);
            for (c, (re, im)) in frame.iter().zip(oracle) {
                worst = worst.max((c.re - re).abs()).max((c.im - im).abs());
            }
            frames += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-6 && secs < 60.0,
        format!("50 signals, {frames} frames, max |d| = {worst:.2e}, {secs:.1} s"),
    ))
}

fn convolution_oracle() -> Outcome {
    let mut r = rng(200);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = common::uniform_vec(&mut r, 2000);
        let h = common::uniform_vec(&mut r, 500);
        let fast = fft_convolve(&x, &h);
        let slow = common::naive_convolve(&x, &h);
        if fast.len() != slow.len() {
            return Ok((false, format!("length {} vs {}", fast.len(), slow.len())));
        }
        worst = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Ok((worst < 1e-8, format!("20 pairs, max |d| = {worst:.2e}")))
}

fn room_validity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for target in [0.3, 0.5, 0.7] {
        let scene = RoomScene {
            dims: [5.0, 4.0, 2.9],
            source_pos: [1.5, 1.2, 1.75],
            mic_pos: vec![[3.6, 2.7, 1.6], [3.2, 2.9, 1.6], [4.1, 1.0, 1.6]],
            t60_target: target,
            seed: 0,
        };
        let set = image_source_rir(&scene)?;
        let est: Vec<f64> = set.rirs.iter().map(|h| schroeder_t60(h).unwrap_or(f64::NAN)).collect();
        ok &= est.iter().all(|e| (e - target).abs() <= 0.2 * target);
        let shown: Vec<String> = est.iter().map(|e| format!("{e:.3}")).collect();
        parts.push(format!("{target} s -> [{}]", shown.join(", ")));
    }
    let mut violations = 0;
    for seed in 0..10_000 {
        if sample_room(seed, (0.2, 0.8), 4)?.validate().is_err() {
            violations += 1;
        }
    }
    ok &= violations == 0;
    Ok((ok, format!("Schroeder T60 {}; {violations} violations in 10000 scenes", parts.join("; "))))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let model = HtsatModel::new(ModelConfig::tiny(3))?;
    let params = model.init_params(400);
    let img = [common::random_image(&mut rng(400), 32)];
    let samples = common::gradient_check(&model, &params, &img, 2, 500, 1e-4, 401);
    let good = samples.iter().filter(|s| s.rel_error() < 1e-4).count();
    let worst = samples.iter().map(|s| s.rel_error()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    Ok((
        good as f64 >= 0.99 * samples.len() as f64 && secs < 300.0,
        format!("{good}/{} within 1e-4 relative (worst {worst:.1e}), {secs:.1} s", samples.len()),
    ))
}

fn shape_trace() -> Outcome {
    let model = HtsatModel::new(ModelConfig::halved(7))?;
    let params = model.init_params(500);
    let mut tape = Tape::new(&params);
    let out = model.forward(&mut tape, &[common::random_image(&mut rng(500), 256)], None)?;
    let want = vec![(4096, 96), (1024, 192), (256, 384), (64, 768)];
    let shown: Vec<String> = out.trace.iter().map(|(t, d)| format!("{t}x{d}")).collect();
    let logits = tape.value(out.logits).len();
    Ok((
        out.trace == want && logits == 7,
        format!("{} -> {logits} logits", shown.join(" -> ")),
    ))
}

fn fusion_invariants() -> Outcome {
    let model = HtsatModel::new(ModelConfig::halved(7))?;
    let mut params = model.init_params(600);
    let bias_id = params.id("patch_embed.bias").ok_or("no patch_embed.bias")?;
    for (i, v) in params.get_mut(bias_id).value.data_mut().iter_mut().enumerate() {
        *v = 0.01 * (i % 7) as f64 - 0.03;
    }
    let mut r = rng(600);
    let mels: Vec<_> = (0..3).map(|_| common::random_mel(&mut r, 1024)).collect();

    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut perm_dev = 0.0f64;
    for mode in [FusionMode::AvgMel, FusionMode::SumPe] {
        let base = model.predict(&params, &model_inputs(&mels, mode, 4)?)?;
        for p in &perms[1..] {
            let permuted: Vec<_> = p.iter().map(|&i| mels[i].clone()).collect();
            let out = model.predict(&params, &model_inputs(&permuted, mode, 4)?)?;
            perm_dev = base.iter().zip(&out).map(|(a, b)| (a - b).abs()).fold(perm_dev, f64::max);
        }
    }

    let one = &mels[..1];
    let single = model.predict(&params, &model_inputs(one, FusionMode::Single, 4)?)?;
    let mut m1_exact = true;
    for mode in [FusionMode::AvgMel, FusionMode::SumPe] {
        let out = model.predict(&params, &model_inputs(one, mode, 4)?)?;
        m1_exact &= out.iter().zip(&single).all(|(a, b)| a.to_bits() == b.to_bits());
    }

    let images = model_inputs(&mels, FusionMode::SumPe, 4)?;
    let summed: Vec<f64> = (0..256 * 256).map(|i| images.iter().map(|im| im.values()[i]).sum()).collect();
    let mut tape = Tape::new(&params);
    let lhs = model.embed_channels(&mut tape, &images)?;
    let rhs = model.patch_embed(&mut tape, &MelImage::new(256, summed)?)?;
    let bias = params.value(bias_id).data();
    let affine_dev = tape
        .value(lhs)
        .data()
        .iter()
        .zip(tape.value(rhs).data())
        .enumerate()
        .map(|(i, (a, b))| (a - b - 2.0 * bias[i % bias.len()]).abs())
        .fold(0.0, f64::max);

    Ok((
        perm_dev < 1e-12 && m1_exact && affine_dev < 1e-9,
        format!(
            "permutation max |d logits| = {perm_dev:.1e}; M=1 bit-identical: {m1_exact}; affine identity max |d| = {affine_dev:.1e}"
        ),
    ))
}

fn specaugment_collectivity() -> Outcome {
    let mut r = rng(700);
    let spec = MaskSpec::default();
    let mut shared = 0;
    for _ in 0..100 {
        let frames = r.gen_range(40..300);
        let mels: Vec<_> = (0..3).map(|_| common::random_mel(&mut r, frames)).collect();
        let (out, _) = spec_augment(&mels, &spec, &mut r)?;
        let masked = |i: usize| -> Vec<usize> {
            let (a, b) = (mels[i].values(), out[i].values());
            (0..a.len()).filter(|&j| a[j] != b[j]).collect()
        };
        let first = masked(0);
        if (1..3).all(|i| masked(i) == first) {
            shared += 1;
        }
    }
    let mels: Vec<_> = (0..3).map(|_| common::random_mel(&mut r, 100)).collect();
    let none = MaskSpec {
        fill: MaskFill::Value(0.0),
        ..MaskSpec::none()
    };
    let identity = spec_augment(&mels, &none, &mut r)?.0 == mels;
    Ok((
        shared == 100 && identity,
        format!("{shared}/100 draws share mask coordinates across 3 channels; zero masks identity: {identity}"),
    ))
}

fn toy_config(manifest: PathBuf) -> RunConfig {
    RunConfig {
        fusion: FusionMode::Single,
        train_mics: 1,
        eval_mics: 1,
        segments: 2,
        model: ModelConfig {
            base_dim: 24,
            image_size: 128,
            ..ModelConfig::halved(4)
        },
        train: TrainConfig {
            max_epochs: 200,
            patience: 10,
            batch_size: 16,
            log_wall_time: false,
            ..TrainConfig::default()
        },
        manifest: Some(manifest),
        ..RunConfig::default()
    }
}

fn toy_corpus(dir: &Path) -> Result<PathBuf, Box<dyn std::error::Error>> {
    let corpus = dir.join("toy");
    if !corpus.join("manifest.csv").exists() {
        let spec = ToySpec {
            n_classes: 4,
            n_per_class: 50,
            duration_s: 1.0,
            seed: 0,
        };
        generate_toy_corpus(&spec, &corpus)?;
    }
    Ok(corpus.join("manifest.csv"))
}

fn toy_learnability(work: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = toy_config(toy_corpus(work)?);
    let (a, b) = (work.join("toy_run_a"), work.join("toy_run_b"));
    let summary = run_train(&cfg, &a)?;
    run_train(&cfg, &b)?;
    let same_log = fs::read(a.join(TRAIN_LOG_FILE))? == fs::read(b.join(TRAIN_LOG_FILE))?;
    let same_ck = fs::read(a.join(CHECKPOINT_FILE))? == fs::read(b.join(CHECKPOINT_FILE))?;
    let train = run_eval(&cfg, &a.join(CHECKPOINT_FILE), Split::Train, &a.join("eval_train"))?;
    let test = run_eval(&cfg, &a.join(CHECKPOINT_FILE), Split::Test, &a.join("eval_test"))?;
    let (train_acc, test_acc) = (train.results[0].accuracy, test.results[0].accuracy);
    let secs = start.elapsed().as_secs_f64();
    Ok((
        train_acc >= 0.95 && test_acc >= 0.80 && summary.epochs_run <= 200 && same_log && same_ck && secs < 1800.0,
        format!(
            "train acc {:.3}, clean test acc {:.3} ({} test clips), best epoch {} of {}, {} params; rerun log/checkpoint identical: {same_log}/{same_ck}; {:.0} s for both runs",
            train_acc,
            test_acc,
            test.results[0].n,
            summary.best_epoch,
            summary.epochs_run,
            summary.num_parameters,
            secs
        ),
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn multichannel_experiment(work: &Path) -> Outcome {
    let start = Instant::now();
    let clean = toy_config(toy_corpus(work)?);
    let sim_dir = work.join("reverb");
    let sim_cfg = RunConfig {
        train_mics: 3,
        eval_mics: 3,
        scenes_per_clip: 1,
        scene_pool: Some(8),
        ..clean.clone()
    };
    if !sim_dir.join("manifest.csv").exists() {
        let manifest = mmser_core::pipeline::Manifest::load(clean.manifest.as_ref().ok_or("no manifest")?, &[])?;
        simulate_corpus(&manifest, &sim_cfg, &sim_dir)?;
    }
    let mut medians = Vec::new();
    let mut chosen = Vec::new();
    for mode in FusionMode::ALL {
        let mut runs = Vec::new();
        for seed in 0..3 {
            let mut cfg = RunConfig {
                fusion: mode,
                manifest: Some(sim_dir.join("manifest.csv")),
                ..sim_cfg.clone()
            }
            .with_seed(seed);
            cfg.train.patience = 5;
            let out = work.join(format!("mc_{mode}_{seed}"));
            run_train(&cfg, &out)?;
            let res = run_eval(&cfg, &out.join(CHECKPOINT_FILE), Split::Test, &out)?;
            runs.push((res.results[0].accuracy, out));
        }
        let accs: Vec<f64> = runs.iter().map(|(a, _)| *a).collect();
        let med = median(accs.clone());
        let at_median = runs.iter().find(|(a, _)| *a == med).map(|(_, p)| p.clone()).ok_or("no median run")?;
        println!("    {mode}: test acc per seed {accs:?}, median {med:.3}");
        medians.push(med);
        chosen.push(at_median);
    }
    let report = run_report(&chosen, &work.join("mc_report"))?;
    for line in report.to_text().lines() {
        println!("    {line}");
    }
    let (single, avg, sum) = (medians[0], medians[1], medians[2]);
    let secs = start.elapsed().as_secs_f64();
    Ok((
        sum >= single && avg >= single - 0.02,
        format!("median test acc single {single:.3}, avg_mel {avg:.3}, sum_pe {sum:.3} (M=3, 8 rooms, 3 seeds); {secs:.0} s"),
    ))
}

fn harness_fidelity(work: &Path) -> Outcome {
    let rendered = format_acc_ci(0.813, 0.746, 0.873);
    let mut r = rng(1000);
    let correct: Vec<bool> = (0..638).map(|_| r.gen_bool(0.8)).collect();
    let ci_same = bootstrap_ci(&correct, 1000, 0.95, 5) == bootstrap_ci(&correct, 1000, 0.95, 5)
        && EvalResult::from_correctness("x", &correct, 1000, 5)? == EvalResult::from_correctness("x", &correct, 1000, 5)?;

    let t = Tensor::new(vec![4, 5, 6], common::uniform_vec(&mut r, 120))?;
    let tpath = work.join("t.mmtn");
    save_tensor(&tpath, &t, Dtype::F64)?;
    let (back, _) = load_tensor(&tpath)?;
    let tensor_ok = back.shape() == t.shape() && back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    let mut ck_ok = true;
    for dtype in [Dtype::F64, Dtype::F32] {
        let cfg = ModelConfig::halved(7);
        let model = HtsatModel::new(cfg.clone())?;
        let params = model.init_params(1001);
        let (p1, p2) = (work.join("a.mmck"), work.join("b.mmck"));
        save_checkpoint(&p1, &cfg, &params, dtype)?;
        let ck = load_checkpoint(&p1)?;
        save_checkpoint(&p2, &ck.config, &ck.params, dtype)?;
        ck_ok &= fs::read(&p1)? == fs::read(&p2)? && ck.config == cfg;
        if dtype == Dtype::F64 {
            ck_ok &= ck.params == params;
        }
    }
    Ok((
        rendered == "81.3 (74.6-87.3)" && ci_same && tensor_ok && ck_ok,
        format!("rendered \"{rendered}\"; CI deterministic: {ci_same}; tensor round trip: {tensor_ok}; checkpoint round trip (f64, f32): {ck_ok}"),
    ))
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let work = tempfile::tempdir().expect("temp dir");
    let w = work.path();
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "DSP oracle equivalence", Box::new(dsp_oracle)),
        (2, "Convolution oracle equivalence", Box::new(convolution_oracle)),
        (3, "Room-acoustics validity", Box::new(room_validity)),
        (4, "Gradient correctness", Box::new(gradient_check)),
        (5, "Architecture shape trace", Box::new(shape_trace)),
        (6, "Fusion invariants", Box::new(fusion_invariants)),
        (7, "SpecAugment collectivity", Box::new(specaugment_collectivity)),
        (8, "Toy-task learnability", Box::new(|| toy_learnability(w))),
        (9, "Multi-channel behavioral experiment", Box::new(|| multichannel_experiment(w))),
        (10, "Harness fidelity", Box::new(|| harness_fidelity(w))),
    ];
    let mut failed = Vec::new();
    let mut total = Duration::ZERO;
    for (id, name, run) in &criteria {
        if !only.is_empty() && !only.contains(id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        total += start.elapsed();
        println!("{} criterion {id:>2}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(*id);
        }
    }
    println!("acceptance: {} failed {failed:?}, {:.0} s", failed.len(), total.as_secs_f64());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
