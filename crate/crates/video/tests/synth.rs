use std::fs;

use gdsnet_video::manifest::{load_manifest, State};
use gdsnet_video::synth::{
    class_counts, frame_difference_energy, generate_corpus, generate_subject, subject_classes, SynthSpec,
    SCORE_BANDS,
};

fn small(n: usize, noise: f64) -> SynthSpec {
    SynthSpec {
        n_subjects: n,
        height: 24,
        width: 28,
        length: 24,
        noise,
        seed: 11,
        ..SynthSpec::default()
    }
}

#[test]
fn subject_generation_is_deterministic() {
    let spec = small(4, 0.01);
    assert_eq!(generate_subject(2, &spec).unwrap(), generate_subject(2, &spec).unwrap());
    assert_ne!(generate_subject(1, &spec).unwrap(), generate_subject(2, &spec).unwrap());
}

#[test]
fn gds_matches_class_band() {
    let spec = small(12, 0.0);
    let classes = subject_classes(12, &spec.class_distribution, spec.seed);
    for (i, &c) in classes.iter().enumerate() {
        let (lo, hi) = SCORE_BANDS[c];
        for r in generate_subject(i, &spec).unwrap() {
            assert!((lo..=hi).contains(&r.record.gds));
        }
    }
}

#[test]
fn zero_amplitude_is_static() {
    let spec = SynthSpec {
        amplitude: [1.0, 0.5, 0.0],
        class_distribution: [0.0, 0.0, 1.0],
        ..small(1, 0.0)
    };
    for r in generate_subject(0, &spec).unwrap() {
        assert_eq!(frame_difference_energy(&r.video.frames), 0.0);
    }
}

#[test]
fn motion_energy_ordered_by_severity() {
    let spec = SynthSpec {
        n_subjects: 3,
        class_distribution: [1.0 / 3.0; 3],
        ..small(3, 0.0)
    };
    let classes = subject_classes(3, &spec.class_distribution, spec.seed);
    let mut by_class = [Vec::new(), Vec::new(), Vec::new()];
    for (i, &c) in classes.iter().enumerate() {
        by_class[c] = generate_subject(i, &spec).unwrap();
    }
    for k in 0..by_class[0].len() {
        let e: Vec<f64> = (0..3).map(|c| frame_difference_energy(&by_class[c][k].video.frames)).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "video {k}: {e:?}");
    }
}

#[test]
fn threshold_separates_absent_from_severe() {
    let spec = SynthSpec {
        class_distribution: [0.5, 0.0, 0.5],
        height: 40,
        width: 48,
        length: 16,
        ..small(20, 0.0)
    };
    let classes = subject_classes(20, &spec.class_distribution, spec.seed);
    let mut samples = Vec::new();
    for (i, &c) in classes.iter().enumerate() {
        for r in generate_subject(i, &spec).unwrap() {
            samples.push((frame_difference_energy(&r.video.frames), c == 0));
        }
    }
    let best = samples
        .iter()
        .map(|&(t, _)| samples.iter().filter(|&&(e, absent)| (e >= t) == absent).count())
        .max()
        .unwrap();
    let acc = best as f64 / samples.len() as f64;
    assert!(acc >= 0.95, "threshold accuracy {acc}");
}

#[test]
fn clinical_distribution_counts() {
    let spec = SynthSpec {
        n_subjects: 178,
        height: 8,
        width: 8,
        length: 1,
        tasks: vec![1],
        states: vec![State::On],
        ..SynthSpec::default()
    };
    assert_eq!(class_counts(178, &spec.class_distribution), [58, 95, 25]);
    let dir = tempfile::tempdir().unwrap();
    let m = generate_corpus(&spec, dir.path()).unwrap();
    let mut counts = [0usize; 3];
    for r in &m {
        counts[SCORE_BANDS.iter().position(|&(lo, hi)| (lo..=hi).contains(&r.gds)).unwrap()] += 1;
    }
    assert_eq!(counts, [58, 95, 25]);
}

#[test]
fn uniform_three_subjects() {
    let spec = SynthSpec {
        class_distribution: [1.0 / 3.0; 3],
        ..small(3, 0.0)
    };
    let mut c = subject_classes(3, &spec.class_distribution, 99);
    c.sort_unstable();
    assert_eq!(c, [0, 1, 2]);
}

#[test]
fn corpus_is_byte_identical_and_complete() {
    let spec = SynthSpec {
        tasks: vec![1, 4],
        ..small(3, 0.02)
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate_corpus(&spec, a.path()).unwrap();
    generate_corpus(&spec, b.path()).unwrap();
    let manifest = load_manifest(a.path().join("manifest.json")).unwrap();
    assert_eq!(manifest, ma);
    assert_eq!(manifest.len(), 3 * 2 * 2);
    assert_eq!(
        fs::read(a.path().join("manifest.json")).unwrap(),
        fs::read(b.path().join("manifest.json")).unwrap()
    );
    for r in &manifest {
        let fa = fs::read(a.path().join(&r.video)).unwrap();
        assert_eq!(fa, fs::read(b.path().join(&r.video)).unwrap());
    }
}
