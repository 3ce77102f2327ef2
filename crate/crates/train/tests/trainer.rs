use gdsnet_models::nn::Linear;
use gdsnet_models::VideoModel;
use gdsnet_tensor::{Float, ParamBuilder, ParamStore, Result, Tape, Tensor, Var};
use gdsnet_train::*;
use gdsnet_video::AugmentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Logistic regression over the flattened clip.
struct Toy {
    lin: Linear,
    input: [usize; 4],
}

impl Toy {
    fn new(store: &mut ParamStore<f32>, input: [usize; 4], bias: bool, seed: u64) -> Self {
        let n = input.iter().product();
        let mut pb = ParamBuilder::new(store, seed);
        Toy { lin: Linear::new(&mut pb, "toy", n, 2, bias).unwrap(), input }
    }
}

impl<T: Float> VideoModel<T> for Toy {
    fn classes(&self) -> usize {
        2
    }
    fn input_shape(&self) -> [usize; 4] {
        self.input
    }
    fn forward_traced(&self, tape: &mut Tape<T>, store: &ParamStore<T>, clip: Var, _: &mut Vec<Var>) -> Result<Var> {
        let n = self.input.iter().product();
        let x = tape.reshape(clip, &[1, n])?;
        let y = self.lin.forward(tape, store, x)?;
        tape.reshape(y, &[2])
    }
}

const SHAPE: [usize; 4] = [2, 2, 2, 1];

/// Clips whose mean brightness decides the class.
fn toy_set(n: usize, seed: u64) -> Vec<(Tensor<f32>, usize, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let y = i % 2;
            let base = if y == 1 { 0.7 } else { 0.3 };
            let clip = Tensor::from_fn(&SHAPE, |_| base + rng.random_range(-0.15f32..0.15)).unwrap();
            (clip, y, format!("s{}", i % 5))
        })
        .collect()
}

fn examples(set: &[(Tensor<f32>, usize, String)]) -> Vec<Example<'_>> {
    set.iter().map(|(c, t, s)| Example { clip: c, target: *t, subject: s }).collect()
}

fn cfg(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        lr: 0.05,
        lr_decay: LrDecay::Constant,
        augment: AugmentConfig::none(),
        ..TrainConfig::for_model(gdsnet_models::ModelKind::Vivit)
    }
}

#[test]
fn table_defaults() {
    use gdsnet_models::ModelKind::*;
    for kind in [Vivit, Swin3dT] {
        let c = TrainConfig::for_model(kind);
        assert_eq!((c.optimizer, c.lr, c.lr_decay), (OptimizerKind::Adam, 1e-4, LrDecay::Plateau));
    }
    let c = TrainConfig::for_model(CnnLstm);
    assert_eq!((c.optimizer, c.lr, c.lr_decay), (OptimizerKind::AdamW, 1e-3, LrDecay::Cosine));
    assert_eq!((c.max_epochs, c.batch_size, c.patience, c.val_fraction), (200, 8, 10, 0.1));
}

#[test]
fn separable_loss_decreases() {
    let train = toy_set(40, 1);
    let val = toy_set(10, 2);
    let mut store = ParamStore::new();
    let m = Toy::new(&mut store, SHAPE, true, 3);
    let c = TrainConfig { lr: 0.01, ..cfg(5) };
    let out = train_model(&m, &mut store, &examples(&train), &examples(&val), &c, LossKind::Bce, &[]).unwrap();
    let losses: Vec<f64> = out.log.iter().map(|r| r.train_loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn single_epoch_and_determinism() {
    let train = toy_set(20, 1);
    let val = toy_set(6, 2);
    let run = |epochs| {
        let mut store = ParamStore::new();
        let m = Toy::new(&mut store, SHAPE, true, 3);
        let c = TrainConfig { augment: AugmentConfig::default(), ..cfg(epochs) };
        let out = train_model(&m, &mut store, &examples(&train), &examples(&val), &c, LossKind::SparseCce, &[]).unwrap();
        (out, store.snapshot())
    };
    assert_eq!(run(1).0.epochs_run, 1);
    let (a, wa) = run(4);
    let (b, wb) = run(4);
    assert_eq!(a, b);
    assert_eq!(wa, wb);
}

#[test]
fn plateau_stops_at_best_plus_patience_and_restores() {
    // zero validation clips through a bias-free model give a constant loss
    let train = toy_set(16, 1);
    let zero = Tensor::zeros(&SHAPE).unwrap();
    let val = vec![Example { clip: &zero, target: 1, subject: "v" }];
    let run = |epochs| {
        let mut store = ParamStore::new();
        let m = Toy::new(&mut store, SHAPE, false, 3);
        let c = cfg(epochs);
        let out = train_model(&m, &mut store, &examples(&train), &val, &c, LossKind::Bce, &[]).unwrap();
        (out, weights_hash(&store))
    };
    let (out, hash) = run(50);
    assert!(out.early_stopped);
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.epochs_run, out.best_epoch + 10);
    assert!(out.log.last().unwrap().stopped);
    let (first, hash1) = run(1);
    assert_eq!(hash, hash1);
    assert_eq!(out.weights_hash, first.weights_hash);
}

#[test]
fn held_out_subject_in_batch_is_rejected() {
    let train = toy_set(10, 1);
    let mut store = ParamStore::new();
    let m = Toy::new(&mut store, SHAPE, true, 3);
    let r = train_model(&m, &mut store, &examples(&train), &[], &cfg(2), LossKind::Bce, &["s3".into()]);
    assert!(matches!(r, Err(TrainError::Leakage(s)) if s == "s3"));
    let r = train_model(&m, &mut store, &[], &[], &cfg(2), LossKind::Bce, &[]);
    assert!(matches!(r, Err(TrainError::EmptyTrainingSet)));
}

#[test]
fn non_finite_weights_abort() {
    let train = toy_set(10, 1);
    let mut store = ParamStore::new();
    let m = Toy::new(&mut store, SHAPE, true, 3);
    let id = store.id("toy.w").unwrap();
    let mut w = store.value(id).clone();
    w.data_mut()[0] = f32::NAN;
    store.set(id, w).unwrap();
    let err = train_model(&m, &mut store, &examples(&train), &[], &cfg(2), LossKind::Bce, &[]).unwrap_err();
    assert!(err.is_numeric(), "{err}");
    assert!(matches!(err, TrainError::NonFinite { epoch: 1, batch: 0, .. }));
}
