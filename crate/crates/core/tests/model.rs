use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempokey::model::*;
use tempokey::{Error, Grid, Task};
use tempokey_tensor::{Mode, Tensor};

fn build(arch: Arch, task: Task, k: usize) -> Model<f32> {
    Model::build(ModelConfig::new(arch, task, k, 0.3), &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
}

fn random_input(rng: &mut ChaCha8Rng, n: usize, f: usize, t: usize) -> Tensor<f32> {
    Tensor::new(vec![n, 1, f, t], (0..n * f * t).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// Hand tally: kernel volume times channels plus biases per conv, four
/// values per batch-norm channel.
fn shallow_tally(short: usize, long: usize, k: usize, classes: usize) -> usize {
    let f = 64 * k;
    (short * k + k) + (long * k * f + f) + (f * classes + classes)
}

fn deep_tally(k5: usize, k3: usize, k: usize, classes: usize) -> usize {
    let mut total = 0;
    let mut c_in = 1;
    for l in [0u32, 1, 2, 2, 3, 3] {
        let f = 2usize.pow(l) * k;
        total += k5 * c_in * f + f + 4 * f;
        total += k3 * f * f + f + 4 * f;
        c_in = f;
    }
    total + c_in * classes + classes
}

#[test]
fn published_parameter_counts() {
    let cases = [
        (Arch::ShallowTemp, Task::Tempo, 1, 33092),
        (Arch::ShallowTemp, Task::Tempo, 2, 98696),
        (Arch::ShallowSpec, Task::Key, 1, 12380),
        (Arch::ShallowSpec, Task::Key, 8, 700984),
        (Arch::DeepTemp, Task::Tempo, 2, 9322),
        (Arch::DeepSpec, Task::Key, 2, 5378),
        (Arch::DeepSquare, Task::Tempo, 1, 7134),
        (Arch::DeepSquare, Task::Key, 1, 5046),
    ];
    for (arch, task, k, expected) in cases {
        assert_eq!(build(arch, task, k).count_parameters(), expected, "{arch} {task} k={k}");
    }
}

#[test]
fn tallies_agree_with_the_published_counts() {
    assert_eq!(shallow_tally(3, 256, 1, 256), 33092);
    assert_eq!(shallow_tally(3, 256, 2, 256), 98696);
    assert_eq!(shallow_tally(3, 168, 1, 24), 12380);
    assert_eq!(shallow_tally(3, 168, 8, 24), 700984);
    assert_eq!(deep_tally(5, 3, 2, 256), 9322);
    assert_eq!(deep_tally(5, 3, 2, 24), 5378);
    assert_eq!(deep_tally(25, 9, 1, 256), 7134);
    assert_eq!(deep_tally(25, 9, 1, 24), 5046);
}

#[test]
fn deep_square_key_layer_by_layer() {
    // module (l, f): conv5x5, bn, conv3x3, bn
    // (0,1):    26 +   4 +   10 +   4 =   44
    // (1,2):    52 +   8 +   38 +   8 =  106
    // (2,4):   204 +  16 +  148 +  16 =  384
    // (2,4):   404 +  16 +  148 +  16 =  584
    // (3,8):   808 +  32 +  584 +  32 = 1456
    // (3,8):  1608 +  32 +  584 +  32 = 2256
    // head: 8 * 24 + 24 = 216
    assert_eq!(44 + 106 + 384 + 584 + 1456 + 2256 + 216, 5046);
    assert_eq!(build(Arch::DeepSquare, Task::Key, 1).count_parameters(), 5046);
}

#[test]
fn single_head_conv() {
    assert_eq!(64 * 256 + 256, 16640);
    let m = build(Arch::ShallowTemp, Task::Tempo, 1);
    let Some(Layer::Conv { weight, bias, .. }) =
        m.layers().iter().rev().find(|l| matches!(l, Layer::Conv { .. }))
    else {
        panic!("no head conv")
    };
    assert_eq!(weight.shape(), &[256, 64, 1, 1]);
    assert_eq!(weight.numel() + bias.numel(), 16640);
}

#[test]
fn every_combination_builds_and_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for arch in Arch::ALL {
        for task in [Task::Tempo, Task::Key] {
            for k in [1, 2, 4] {
                let m = build(arch, task, k);
                let tc = TaskConfig::of(task);
                let out = m.infer(&random_input(&mut rng, 2, tc.input_bins, tc.train_frames)).unwrap();
                assert_eq!(out.shape(), &[2, tc.n_classes], "{arch} {task} k={k}");
            }
        }
    }
}

#[test]
fn square_shallow_is_refused() {
    assert!(Arch::from_parts(Family::Shallow, Direction::Square).is_err());
    assert!("shallow-square".parse::<Arch>().is_err());
    assert_eq!("deep-square".parse::<Arch>().unwrap(), Arch::DeepSquare);
}

#[test]
fn invalid_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (k, p) in [(0, 0.1), (1, 1.0), (1, -0.1)] {
        let err = Model::<f32>::build(ModelConfig::new(Arch::DeepTemp, Task::Tempo, k, p), &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
    }
    let mut c = ModelConfig::new(Arch::DeepTemp, Task::Tempo, 1, 0.1);
    c.arch.long_filter_len = Some(10);
    assert!(Model::<f32>::build(c, &mut rng).is_err());
}

#[test]
fn distributions_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for arch in Arch::ALL {
        let task = if arch == Arch::ShallowSpec { Task::Key } else { Task::Tempo };
        let m = build(arch, task, 1);
        let tc = TaskConfig::of(task);
        let out = m.infer(&random_input(&mut rng, 3, tc.input_bins, tc.train_frames)).unwrap();
        for row in out.to_vec().chunks(tc.n_classes) {
            let s: f64 = row.iter().map(|&p| p as f64).sum();
            assert!((s - 1.0).abs() < 1e-6, "{arch}: sum {s}");
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn longer_inputs_are_accepted() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = build(Arch::ShallowTemp, Task::Tempo, 1);
    let x = random_input(&mut rng, 1, 40, 256);
    let mut padded = vec![0.0f32; 40 * 300];
    for r in 0..40 {
        padded[r * 300..r * 300 + 256].copy_from_slice(&x.to_vec()[r * 256..(r + 1) * 256]);
    }
    for input in [x, Tensor::new(vec![1, 1, 40, 300], padded).unwrap()] {
        let out = m.infer(&input).unwrap().to_vec();
        assert_eq!(out.len(), 256);
        assert!((out.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn inputs_are_checked() {
    let m = build(Arch::ShallowTemp, Task::Tempo, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    assert!(matches!(m.infer(&random_input(&mut rng, 1, 40, 255)), Err(Error::Shape(_))));
    assert!(matches!(m.infer(&random_input(&mut rng, 1, 41, 256)), Err(Error::Shape(_))));
    let deep = build(Arch::DeepTemp, Task::Tempo, 1);
    assert_eq!(deep.infer(&random_input(&mut rng, 1, 40, 1)).unwrap().shape(), &[1, 256]);
}

#[test]
fn deep_pooling_trace() {
    let m = build(Arch::DeepTemp, Task::Tempo, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let trace = m.shape_trace(&random_input(&mut rng, 1, 40, 256)).unwrap();
    let pooled: Vec<(usize, usize)> = trace
        .iter()
        .filter(|(name, _)| name.starts_with("maxpool"))
        .map(|(_, s)| (s[2], s[3]))
        .collect();
    assert_eq!(trace[0].1, vec![1, 1, 40, 256]);
    assert_eq!(pooled, vec![(20, 128), (10, 64), (5, 32), (2, 16), (1, 8), (1, 4)]);
    assert_eq!(trace.last().unwrap().1, vec![1, 256]);
}

#[test]
fn pooling_skips_unit_axes() {
    // key input through DeepSpec: 168 rows halve six times, 1 column stays 1
    let m = build(Arch::DeepSpec, Task::Key, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trace = m.shape_trace(&random_input(&mut rng, 1, 168, 1)).unwrap();
    let pooled: Vec<(usize, usize)> = trace
        .iter()
        .filter(|(name, _)| name.starts_with("maxpool"))
        .map(|(_, s)| (s[2], s[3]))
        .collect();
    assert_eq!(pooled, vec![(84, 1), (42, 1), (21, 1), (10, 1), (5, 1), (2, 1)]);
}

fn permute_rows(x: &Tensor<f32>, perm: &[usize]) -> Tensor<f32> {
    let s = x.shape().to_vec();
    let (f, t) = (s[2], s[3]);
    let v = x.to_vec();
    let mut out = vec![0.0; v.len()];
    for n in 0..s[0] {
        for (dst, &src) in perm.iter().enumerate() {
            out[n * f * t + dst * t..n * f * t + (dst + 1) * t]
                .copy_from_slice(&v[n * f * t + src * t..n * f * t + (src + 1) * t]);
        }
    }
    Tensor::new(s, out).unwrap()
}

fn permute_cols(x: &Tensor<f32>, perm: &[usize]) -> Tensor<f32> {
    let s = x.shape().to_vec();
    let (f, t) = (s[2], s[3]);
    let v = x.to_vec();
    let mut out = vec![0.0; v.len()];
    for n in 0..s[0] {
        for r in 0..f {
            for (dst, &src) in perm.iter().enumerate() {
                out[n * f * t + r * t + dst] = v[n * f * t + r * t + src];
            }
        }
    }
    Tensor::new(s, out).unwrap()
}

fn max_abs_diff(a: &Tensor<f32>, b: &Tensor<f32>) -> f32 {
    a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shallow_temp_ignores_frequency_order(seed in any::<u64>()) {
        let m = build(Arch::ShallowTemp, Task::Tempo, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_input(&mut rng, 1, 40, 256);
        let mut perm: Vec<usize> = (0..40).collect();
        perm.shuffle(&mut rng);
        let d = max_abs_diff(&m.infer(&x).unwrap(), &m.infer(&permute_rows(&x, &perm)).unwrap());
        prop_assert!(d <= 1e-5, "difference {}", d);
    }

    #[test]
    fn shallow_spec_ignores_time_order(seed in any::<u64>()) {
        let m = build(Arch::ShallowSpec, Task::Key, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_input(&mut rng, 1, 168, 60);
        let mut perm: Vec<usize> = (0..60).collect();
        perm.shuffle(&mut rng);
        let d = max_abs_diff(&m.infer(&x).unwrap(), &m.infer(&permute_cols(&x, &perm)).unwrap());
        prop_assert!(d <= 1e-5, "difference {}", d);
    }
}

#[test]
fn the_other_axis_does_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = build(Arch::ShallowTemp, Task::Tempo, 1);
    let x = random_input(&mut rng, 1, 40, 256);
    let mut perm: Vec<usize> = (0..256).collect();
    perm.shuffle(&mut rng);
    assert!(max_abs_diff(&m.infer(&x).unwrap(), &m.infer(&permute_cols(&x, &perm)).unwrap()) > 1e-6);
}

#[test]
fn eval_is_deterministic_and_train_mode_uses_dropout() {
    let mut m = build(Arch::DeepTemp, Task::Tempo, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_input(&mut rng, 2, 40, 64);
    let a = m.infer(&x).unwrap().to_vec();
    assert_eq!(a, m.infer(&x).unwrap().to_vec());
    let e = m.forward(&x, Mode::Eval, &mut rng).unwrap().to_vec();
    assert_eq!(a, e);
    let t1 = m.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap().to_vec();
    let t2 = m.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(2)).unwrap().to_vec();
    assert_ne!(t1, t2);
}

#[test]
fn weights_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (arch, task) in [(Arch::DeepSquare, Task::Key), (Arch::ShallowTemp, Task::Tempo)] {
        let mut m = build(arch, task, 1);
        // move the batch-norm statistics away from their initial values
        let tc = TaskConfig::of(task);
        m.forward(&random_input(&mut rng, 4, tc.input_bins, tc.train_frames), Mode::Train, &mut rng)
            .unwrap();
        let path = dir.path().join(format!("{arch}.tkwt"));
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.config(), m.config());
        assert_eq!(back.blobs(), m.blobs());
        let x = random_input(&mut rng, 2, tc.input_bins, tc.train_frames + 7);
        let a: Vec<u32> = m.infer(&x).unwrap().to_vec().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.infer(&x).unwrap().to_vec().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(&std::fs::read(&path).unwrap()[..4], WEIGHTS_MAGIC);
    }
}

#[test]
fn weight_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = build(Arch::ShallowTemp, Task::Tempo, 1);
    let path = dir.path().join("m.tkwt");
    save_weights(&m, &path).unwrap();

    let key_config = ModelConfig::new(Arch::ShallowTemp, Task::Key, 1, 0.3);
    assert!(matches!(load_weights_matching(&path, &key_config), Err(Error::ConfigMismatch(_))));
    assert!(load_weights_matching(&path, m.config()).is_ok());

    let bytes = std::fs::read(&path).unwrap();
    assert!(matches!(decode_weights(&bytes[..bytes.len() - 1]), Err(Error::Checksum { .. })));
    let mut flipped = bytes.clone();
    flipped[100] ^= 1;
    assert!(matches!(decode_weights(&flipped), Err(Error::Checksum { .. })));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode_weights(&magic), Err(Error::Corrupt(_))));
    assert!(decode_weights(&bytes[..5]).is_err());
    assert!(matches!(load_weights(dir.path().join("missing")), Err(Error::Io { .. })));

    // blobs from one architecture do not fit another
    let mut other = build(Arch::ShallowTemp, Task::Key, 1);
    assert!(matches!(other.set_blobs(&m.blobs()), Err(Error::ConfigMismatch(_))));
}

#[test]
fn canonical_config_text() {
    let mut c = ModelConfig::new(Arch::ShallowSpec, Task::Key, 4, 0.5);
    assert_eq!(ModelConfig::from_canonical(&c.to_canonical()).unwrap(), c);
    c.arch.long_filter_len = Some(84);
    assert_eq!(ModelConfig::from_canonical(&c.to_canonical()).unwrap(), c);
    assert!(ModelConfig::from_canonical(&format!("{}colour=red\n", c.to_canonical())).is_err());
    assert!(ModelConfig::from_canonical("arch=deep-temp\n").is_err());
}

#[test]
fn half_length_variant() {
    let mut c = ModelConfig::new(Arch::ShallowTemp, Task::Tempo, 1, 0.0);
    c.arch.long_filter_len = Some(128);
    let m = Model::<f32>::build(c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(m.count_parameters(), shallow_tally(3, 128, 1, 256));
    assert_eq!(m.min_frames(), 128);
}

#[test]
fn grids_batch_in_order() {
    let a = Grid::from_fn(2, 3, |r, c| (r * 3 + c) as f32);
    let b = Grid::from_fn(2, 3, |r, c| -((r * 3 + c) as f32));
    let t: Tensor<f32> = batch_tensor(&[&a, &b]).unwrap();
    assert_eq!(t.shape(), &[2, 1, 2, 3]);
    assert_eq!(t.to_vec()[6..], [0.0, -1.0, -2.0, -3.0, -4.0, -5.0]);
    assert!(batch_tensor::<f32>(&[&a, &Grid::zeros(3, 3)]).is_err());
    assert!(batch_tensor::<f32>(&[]).is_err());
}
