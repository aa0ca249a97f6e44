use proptest::prelude::*;
use vqat_audio::synth::{synth_utterance, write_synthetic_corpus};
use vqat_audio::{preprocess_file, preprocess_waveform, PreprocessConfig, Waveform};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn output_is_always_unit_range_64_by_88(
        digit in 0u8..10,
        speaker in 0u32..8,
        rate in prop::sample::select(vec![8000u32, 16000, 22050, 44100, 48000]),
        seed in any::<u64>(),
    ) {
        let w = Waveform::new(synth_utterance(digit, speaker, rate, seed), rate);
        let m = preprocess_waveform(&w, &PreprocessConfig::default()).unwrap();
        prop_assert_eq!(m.values.shape(), &[1, 64, 88]);
        prop_assert!(m.values.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(m.scale_max > m.scale_min);
    }
}

#[test]
fn files_preprocess_identically_twice() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_synthetic_corpus(dir.path(), &[1, 6], 1, 2, 48000, 5).unwrap();
    let cfg = PreprocessConfig::default();
    for p in &paths {
        let a = preprocess_file(p, &cfg).unwrap();
        let b = preprocess_file(p, &cfg).unwrap();
        assert_eq!(a.values.data(), b.values.data());
        assert!(a.label.is_some());
    }
}
