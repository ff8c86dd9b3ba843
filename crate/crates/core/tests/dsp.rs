mod common;

use std::f64::consts::PI;

use mmser_core::dsp::{
    frame_count, hann_window, log_mel, mel_filterbank, stft, AudioClip, EPS_FLOOR, HOP_LENGTH, N_FFT_BINS, N_MELS,
    WIN_LENGTH,
};
use mmser_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn stft_matches_direct_dft() {
    let mut r = rng(1);
    let x = common::uniform_vec(&mut r, 1024 + 3 * 160);
    let spec = stft(&x).unwrap();
    assert_eq!(spec.len(), 4);
    let mut worst = 0.0f64;
    for (t, frame) in spec.iter().enumerate() {
        let oracle = common::dft_frame(&x[t * HOP_LENGTH..t * HOP_LENGTH + WIN_LENGTH]);
        assert_eq!(frame.len(), N_FFT_BINS);
        for (c, (re, im)) in frame.iter().zip(oracle) {
            worst = worst.max((c.re - re).abs()).max((c.im - im).abs());
        }
    }
    assert!(worst < 1e-6, "max deviation {worst}");
}

#[test]
fn sine_peaks_at_expected_bin() {
    let x: Vec<f64> = (0..16640).map(|n| (2.0 * PI * 1000.0 * n as f64 / 16000.0).sin()).collect();
    let spec = stft(&x).unwrap();
    assert_eq!(spec.len(), 98);
    for frame in &spec {
        let mags: Vec<f64> = frame.iter().map(|c| c.norm()).collect();
        assert_eq!(common::peak_bin(&mags), 64);
    }
}

#[test]
fn short_input_and_silence() {
    assert!(matches!(stft(&[0.0; 1023]), Err(Error::InputTooShort { .. })));
    let spec = stft(&vec![0.0; 2048]).unwrap();
    assert!(spec.iter().flatten().all(|c| c.re == 0.0 && c.im == 0.0));

    let mels = log_mel(&AudioClip::new(vec![vec![0.0; 4000]; 2]).unwrap()).unwrap();
    assert!(mels.iter().all(|m| m.values().iter().all(|&v| v == EPS_FLOOR.ln())));
}

#[test]
fn filterbank_shape_and_triangles() {
    let fb = mel_filterbank();
    assert_eq!((fb.n_mels(), fb.n_bins()), (64, 513));
    assert!(fb.centers_hz().windows(2).all(|w| w[0] < w[1]));
    assert_eq!(fb.weight(0, 512), 0.0);
    for m in 0..N_MELS {
        let row = fb.row(m);
        assert!(row.iter().all(|&w| w >= 0.0));
        assert!(row.iter().any(|&w| w > 0.0), "filter {m} is empty");
    }
    // Triangle formula at one interior bin, evaluated from the HTK edges.
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let edge = |i: usize| hz(mel(8000.0) * i as f64 / 65.0);
    let (m, k) = (10, 20);
    let f = k as f64 * 16000.0 / 1024.0;
    let want = ((f - edge(m)) / (edge(m + 1) - edge(m)))
        .min((edge(m + 2) - f) / (edge(m + 2) - edge(m + 1)))
        .max(0.0);
    assert!((fb.weight(m, k) - want).abs() < 1e-12);
}

#[test]
fn log_mel_matches_composition() {
    let mut r = rng(2);
    let x = common::uniform_vec(&mut r, 8000);
    let fb = mel_filterbank();
    let spec = stft(&x).unwrap();
    let mel = &log_mel(&AudioClip::mono(x)).unwrap()[0];
    let mut worst = 0.0f64;
    for (t, frame) in spec.iter().enumerate() {
        for m in 0..N_MELS {
            let e: f64 = (0..N_FFT_BINS).map(|k| fb.weight(m, k) * frame[k].norm()).sum();
            worst = worst.max((e.max(EPS_FLOOR).ln() - mel.get(t, m)).abs());
        }
    }
    assert!(worst < 1e-9, "max deviation {worst}");
}

#[test]
fn parseval_on_one_sided_spectrum() {
    let mut r = rng(3);
    let x = common::uniform_vec(&mut r, 1024);
    let w = hann_window(1024);
    let energy: f64 = x.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum();
    let frame = &stft(&x).unwrap()[0];
    let mut s = frame[0].norm_sqr() + frame[512].norm_sqr();
    s += 2.0 * frame[1..512].iter().map(|c| c.norm_sqr()).sum::<f64>();
    let rel = (s / 1024.0 - energy).abs() / energy;
    assert!(rel < 1e-6, "relative error {rel}");
}

#[test]
fn identical_channels_give_identical_features() {
    let mut r = rng(4);
    let x = common::uniform_vec(&mut r, 3000);
    let mels = log_mel(&AudioClip::new(vec![x.clone(), x.clone(), x]).unwrap()).unwrap();
    assert_eq!(mels[0], mels[1]);
    assert_eq!(mels[1], mels[2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frame_count_formula(n in 1024usize..6000) {
        let spec = stft(&vec![0.5; n]).unwrap();
        prop_assert_eq!(spec.len(), (n - 1024) / 160 + 1);
        prop_assert_eq!(frame_count(n), spec.len());
    }

    #[test]
    fn stft_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x = common::uniform_vec(&mut r, 1500);
        let y = common::uniform_vec(&mut r, 1500);
        let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (sx, sy, sz) = (stft(&x).unwrap(), stft(&y).unwrap(), stft(&z).unwrap());
        for t in 0..sz.len() {
            for k in 0..N_FFT_BINS {
                let want = sx[t][k] * a + sy[t][k] * b;
                prop_assert!((sz[t][k] - want).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn log_mel_is_permutation_equivariant(seed in any::<u64>(), perm in Just([2usize, 0, 1]).prop_shuffle()) {
        let mut r = rng(seed);
        let chans: Vec<Vec<f64>> = (0..3).map(|_| common::uniform_vec(&mut r, 2000)).collect();
        let base = log_mel(&AudioClip::new(chans.clone()).unwrap()).unwrap();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| chans[i].clone()).collect();
        let out = log_mel(&AudioClip::new(permuted).unwrap()).unwrap();
        for (o, &i) in out.iter().zip(perm.iter()) {
            prop_assert_eq!(o, &base[i]);
        }
    }

    #[test]
    fn log_mel_respects_floor(seed in any::<u64>(), scale in 0.0f64..1e-3) {
        let mut r = rng(seed);
        let x: Vec<f64> = common::uniform_vec(&mut r, 1200).iter().map(|v| v * scale).collect();
        let mel = &log_mel(&AudioClip::mono(x)).unwrap()[0];
        prop_assert_eq!(mel.n_mels(), 64);
        prop_assert!(mel.values().iter().all(|&v| v >= EPS_FLOOR.ln()));
    }
}
