mod common;

use mmser_core::dsp::{MelSpectrogram, N_MELS};
use mmser_core::fusion::{avg_mel, model_inputs, to_mel_image, FusionMode, MelImage};
use mmser_core::grad::Tape;
use mmser_core::model::HtsatModel;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn image_rearranges_constant_maps() {
    let mel = MelSpectrogram::new(1024, vec![-3.5; 1024 * N_MELS]).unwrap();
    let img = to_mel_image(&mel);
    assert_eq!(img.side(), 256);
    assert!(img.values().iter().all(|&v| v == -3.5));
}

#[test]
fn short_inputs_are_zero_padded() {
    let mut r = rng(0);
    let mel = common::random_mel(&mut r, 500);
    let img = to_mel_image(&mel);
    for frame in 0..1024 {
        let (s, row) = (frame / 256, frame % 256);
        for m in 0..N_MELS {
            let want = if frame < 500 { mel.get(frame, m) } else { 0.0 };
            assert_eq!(img.get(row, 64 * s + m), want);
        }
    }
}

#[test]
fn full_length_image_preserves_values() {
    let mut r = rng(1);
    let mel = common::random_mel(&mut r, 1024);
    assert_eq!(sorted(to_mel_image(&mel).into_values()), sorted(mel.values().to_vec()));
    // longer inputs are cropped
    let long = common::random_mel(&mut r, 1100);
    let img = to_mel_image(&long);
    assert_eq!(sorted(img.into_values()), sorted(long.values()[..1024 * N_MELS].to_vec()));
}

#[test]
fn avg_mel_oracles() {
    let mut r = rng(2);
    let a = common::random_mel(&mut r, 40);
    let b = common::random_mel(&mut r, 40);
    let avg = avg_mel(&[a.clone(), b.clone()]).unwrap();
    for ((o, x), y) in avg.values().iter().zip(a.values()).zip(b.values()) {
        assert_eq!(*o, (x + y) / 2.0);
    }
    let same = avg_mel(&[a.clone(), a.clone(), a.clone()]).unwrap();
    for (o, x) in same.values().iter().zip(a.values()) {
        assert!((o - x).abs() <= 1e-15 * x.abs());
    }
    assert!(avg_mel(&[]).is_err());
    assert!(avg_mel(&[a, common::random_mel(&mut r, 41)]).is_err());
}

fn setup(seed: u64) -> (HtsatModel, mmser_core::grad::ParamStore) {
    let model = HtsatModel::new(common::small_config(3)).unwrap();
    let mut params = model.init_params(seed);
    // nonzero biases make the affine identity non-trivial
    let id = params.id("patch_embed.bias").unwrap();
    for (i, v) in params.get_mut(id).value.data_mut().iter_mut().enumerate() {
        *v = 0.1 * (i as f64 - 3.0);
    }
    (model, params)
}

#[test]
fn single_channel_paths_coincide() {
    let (model, params) = setup(3);
    let mut r = rng(3);
    let mels = vec![common::random_mel(&mut r, 64)];
    let single = model_inputs(&mels, FusionMode::Single, 1).unwrap();
    let reference = model.predict(&params, &single).unwrap();
    for mode in [FusionMode::AvgMel, FusionMode::SumPe] {
        let out = model.predict(&params, &model_inputs(&mels, mode, 1).unwrap()).unwrap();
        assert_eq!(out, reference, "{mode}");
    }
}

#[test]
fn sum_pe_affine_identity() {
    let (model, params) = setup(4);
    let mut r = rng(4);
    let mels: Vec<MelSpectrogram> = (0..3).map(|_| common::random_mel(&mut r, 64)).collect();
    let images = model_inputs(&mels, FusionMode::SumPe, 1).unwrap();
    let summed: Vec<f64> = (0..64 * 64).map(|i| images.iter().map(|im| im.values()[i]).sum()).collect();
    let summed = MelImage::new(64, summed).unwrap();

    let mut tape = Tape::new(&params);
    let lhs = model.embed_channels(&mut tape, &images).unwrap();
    let rhs = model.patch_embed(&mut tape, &summed).unwrap();
    let bias = params.value(params.id("patch_embed.bias").unwrap()).data().to_vec();
    let (lhs, rhs) = (tape.value(lhs), tape.value(rhs));
    assert_eq!(lhs.shape(), &[256, 8]);
    let d = bias.len();
    let worst = lhs
        .data()
        .iter()
        .zip(rhs.data())
        .enumerate()
        .map(|(i, (a, b))| (a - (b + 2.0 * bias[i % d])).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "max deviation {worst}");
}

#[test]
fn avg_and_sum_are_different_models() {
    let (model, params) = setup(5);
    let mut r = rng(5);
    let mels: Vec<MelSpectrogram> = (0..3).map(|_| common::random_mel(&mut r, 64)).collect();
    let avg = model.predict(&params, &model_inputs(&mels, FusionMode::AvgMel, 1).unwrap()).unwrap();
    let sum = model.predict(&params, &model_inputs(&mels, FusionMode::SumPe, 1).unwrap()).unwrap();
    assert_ne!(avg, sum);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn channel_order_does_not_matter(seed in any::<u64>(), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let (model, params) = setup(seed);
        let mut r = rng(seed);
        let mels: Vec<MelSpectrogram> = (0..4).map(|_| common::random_mel(&mut r, 64)).collect();
        let permuted: Vec<MelSpectrogram> = perm.iter().map(|&i| mels[i].clone()).collect();
        prop_assert_eq!(avg_mel(&mels).unwrap(), avg_mel(&permuted).unwrap());
        for mode in [FusionMode::AvgMel, FusionMode::SumPe] {
            let a = model.predict(&params, &model_inputs(&mels, mode, 1).unwrap()).unwrap();
            let b = model.predict(&params, &model_inputs(&permuted, mode, 1).unwrap()).unwrap();
            // sorted reduction order makes this exact, well inside 1e-12
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn parameter_layout_ignores_channels(m in 1usize..5) {
        let (model, params) = setup(0);
        let mut r = rng(m as u64);
        let mels: Vec<MelSpectrogram> = (0..m).map(|_| common::random_mel(&mut r, 64)).collect();
        for mode in FusionMode::ALL {
            let logits = model.predict(&params, &model_inputs(&mels, mode, 1).unwrap()).unwrap();
            prop_assert_eq!(logits.len(), 3);
        }
        model.check_params(&params).unwrap();
    }
}
