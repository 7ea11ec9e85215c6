use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempokey_tensor::gradcheck::{check, check_probe, check_probe_twin, GradCheckReport, Settings};
use tempokey_tensor::*;

fn random_vec<F: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<F> {
    (0..n).map(|_| F::from_f64(rng.gen_range(-1.0..1.0))).collect()
}

const DOUBLE_LIMIT: f64 = 1e-5;
const SINGLE_LIMIT: f64 = 1e-3;

/// Double-precision differences. Single-precision gradients are checked
/// against the same differences taken on a double-precision twin, with the
/// floor raised to the single-precision noise level.
fn settings(limit: f64, floor: f64) -> Settings {
    Settings { probes: 24, step: 1e-6, floor, kink: 2.0 * limit }
}

fn assert_report(name: &str, report: &GradCheckReport, limit: f64) {
    assert!(report.probes.len() >= 20, "{name}: only {} usable probes", report.probes.len());
    let worst = report.worst().unwrap();
    assert!(
        report.max_rel_error() < limit,
        "{name}: max relative error {} >= {limit} at {worst:?}",
        report.max_rel_error()
    );
}

type Forward<F> = Box<dyn FnMut() -> Result<Tensor<F>>>;

/// Parameter of `shape` filled from the front of `values`.
fn param<F: Real>(shape: &[usize], values: &[f64]) -> Tensor<F> {
    let n: usize = shape.iter().product();
    Tensor::param(shape.to_vec(), values[..n].iter().map(|&v| F::from_f64(v)).collect()).unwrap()
}

const LAYERS: usize = 11;

/// One layer under test in precision `F`, built from shared values so the
/// single- and double-precision versions agree.
fn layer<F: Real>(case: usize, v: &[Vec<f64>]) -> (String, Vec<Tensor<F>>, Forward<F>) {
    match case {
        0 | 1 => {
            let padding = [Padding::Same, Padding::Valid][case];
            let (x, w, b) = (param::<F>(&[2, 2, 5, 6], &v[0]), param(&[3, 2, 3, 2], &v[1]), param(&[3], &v[2]));
            let ps = vec![x.clone(), w.clone(), b.clone()];
            (format!("conv2d {padding:?}"), ps, Box::new(move || conv2d(&x, &w, &b, padding)))
        }
        2 | 3 => {
            let mode = [PoolMode::Max, PoolMode::Avg][case - 2];
            let x = param::<F>(&[2, 2, 5, 7], &v[0]);
            (format!("pool2d {mode:?}"), vec![x.clone()], Box::new(move || pool2d(&x, (2, 2), mode)))
        }
        4 => {
            let x = param::<F>(&[3, 4], &v[0]);
            ("relu".into(), vec![x.clone()], Box::new(move || Ok(relu(&x))))
        }
        5 => {
            let x = param::<F>(&[2, 3, 2, 3], &v[0]);
            ("global_avg_pool".into(), vec![x.clone()], Box::new(move || global_avg_pool(&x)))
        }
        6 => {
            let x = param::<F>(&[3, 5], &v[0]);
            ("softmax".into(), vec![x.clone()], Box::new(move || softmax(&x)))
        }
        7 => {
            let x = param::<F>(&[3, 5], &v[0]);
            let ps = vec![x.clone()];
            ("softmax + cross_entropy".into(), ps, Box::new(move || cross_entropy(&softmax(&x)?, &[4, 0, 2])))
        }
        8 | 9 => {
            let mode = [Mode::Train, Mode::Eval][case - 8];
            let x = param::<F>(&[3, 2, 2, 3], &v[0]);
            let mut bn = BatchNorm::<F>::new(2);
            bn.gamma.set_data(&[F::from_f64(v[1][0]), F::from_f64(v[1][1])]).unwrap();
            bn.beta.set_data(&[F::from_f64(v[1][2]), F::from_f64(v[1][3])]).unwrap();
            bn.moving_mean = vec![F::from_f64(v[1][4]), F::from_f64(v[1][5])];
            bn.moving_var = vec![F::from_f64(0.7), F::from_f64(1.3)];
            let ps = vec![x.clone(), bn.gamma.clone(), bn.beta.clone()];
            (format!("batch_norm {mode:?}"), ps, Box::new(move || batch_norm(&x, &mut bn, mode)))
        }
        10 => {
            let x = param::<F>(&[4, 6], &v[0]);
            let ps = vec![x.clone()];
            ("dropout".into(), ps, Box::new(move || dropout(&x, 0.4, Mode::Train, &mut ChaCha8Rng::seed_from_u64(99))))
        }
        _ => unreachable!(),
    }
}

/// Values for one layer case, exactly representable in single precision.
fn layer_values(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    [140, 36, 6]
        .iter()
        .map(|&n| random_vec::<f32>(rng, n).into_iter().map(f64::from).collect())
        .collect()
}

fn double_layer_checks(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = settings(DOUBLE_LIMIT, 1e-4);
    for case in 0..LAYERS {
        let (name, params, mut forward) = layer::<f64>(case, &layer_values(&mut rng));
        let report = check_probe(&params, &mut forward, &s, &mut rng).unwrap();
        assert_report(&name, &report, DOUBLE_LIMIT);
    }
}

fn single_layer_checks(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = settings(SINGLE_LIMIT, 1e-2);
    for case in 0..LAYERS {
        let values = layer_values(&mut rng);
        let (name, params, mut forward) = layer::<f32>(case, &values);
        let (_, twin_params, mut twin) = layer::<f64>(case, &values);
        let report = check_probe_twin(&params, &mut forward, &twin_params, &mut twin, &s, &mut rng).unwrap();
        assert_report(&name, &report, SINGLE_LIMIT);
    }
}

#[test]
fn every_layer_passes_finite_differences_in_double() {
    double_layer_checks(11);
}

#[test]
fn every_layer_passes_finite_differences_in_single() {
    single_layer_checks(11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn layer_checks_hold_for_any_draw(seed in any::<u64>()) {
        double_layer_checks(seed);
        single_layer_checks(seed);
    }
}

#[test]
fn twin_layouts_must_match() {
    let a = Tensor::<f32>::param(vec![2], vec![1.0, 2.0]).unwrap();
    let b = Tensor::<f64>::param(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    let s = settings(SINGLE_LIMIT, 1e-2);
    let err = check_probe_twin(
        std::slice::from_ref(&a),
        || Ok(relu(&a)),
        std::slice::from_ref(&b),
        || Ok(relu(&b)),
        &s,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    assert!(err.is_err());
}

#[test]
fn a_wrong_backward_rule_is_caught() {
    // x * x written as x * detach(x) halves the true gradient
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::<f64>::param(vec![6], random_vec(&mut rng, 6)).unwrap();
    let s = settings(DOUBLE_LIMIT, 1e-4);
    let report = check_probe(std::slice::from_ref(&x), || x.mul(&Tensor::new(vec![6], x.to_vec())?), &s, &mut rng).unwrap();
    assert!(report.max_rel_error() > 0.1, "{}", report.max_rel_error());
}

#[test]
fn composed_graph_passes_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::<f64>::param(vec![2, 1, 6, 8], random_vec(&mut rng, 96)).unwrap();
    let w1 = Tensor::<f64>::param(vec![3, 1, 3, 3], random_vec(&mut rng, 27)).unwrap();
    let b1 = Tensor::<f64>::param(vec![3], random_vec(&mut rng, 3)).unwrap();
    let w2 = Tensor::<f64>::param(vec![4, 3, 1, 1], random_vec(&mut rng, 12)).unwrap();
    let b2 = Tensor::<f64>::param(vec![4], random_vec(&mut rng, 4)).unwrap();
    let mut bn = BatchNorm::<f64>::new(3);
    let params = [x.clone(), w1.clone(), b1.clone(), w2.clone(), b2.clone(), bn.gamma.clone(), bn.beta.clone()];
    let report = check(
        &params,
        || {
            let h = relu(&conv2d(&x, &w1, &b1, Padding::Same)?);
            let h = batch_norm(&h, &mut bn, Mode::Train)?;
            let h = pool2d(&h, (2, 2), PoolMode::Max)?;
            let h = dropout(&h, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1))?;
            let h = relu(&conv2d(&h, &w2, &b2, Padding::Valid)?);
            cross_entropy(&softmax(&global_avg_pool(&h)?)?, &[1, 3])
        },
        &Settings { probes: 40, ..settings(DOUBLE_LIMIT, 1e-4) },
        &mut rng,
    )
    .unwrap();
    assert_report("composed", &report, DOUBLE_LIMIT);
}

/// Direct nested-loop convolution with explicit zero padding.
fn reference_conv(x: &[f64], xs: [usize; 4], w: &[f64], ws: [usize; 4], b: &[f64], same: bool) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = xs;
    let [k, _, kh, kw] = ws;
    let (pt, pl) = if same { ((kh - 1) / 2, (kw - 1) / 2) } else { (0, 0) };
    let (oh, ow) = if same { (h, wd) } else { (h - kh + 1, wd - kw + 1) };
    let mut out = vec![0.0; n * k * oh * ow];
    for bi in 0..n {
        for ko in 0..k {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b[ko];
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = y as isize + i as isize - pt as isize;
                                let ix = xo as isize + j as isize - pl as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w[((ko * c + ci) * kh + i) * kw + j]
                                    * x[((bi * c + ci) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out[((bi * k + ko) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    (out, [n, k, oh, ow])
}

#[test]
fn conv_matches_nested_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs = [1, 2, 6, 7];
    let ws = [3, 2, 3, 3];
    let x: Vec<f64> = random_vec(&mut rng, 84);
    let w: Vec<f64> = random_vec(&mut rng, 54);
    let b: Vec<f64> = random_vec(&mut rng, 3);
    for (same, padding) in [(true, Padding::Same), (false, Padding::Valid)] {
        let (expected, shape) = reference_conv(&x, xs, &w, ws, &b, same);
        let got = conv2d(
            &Tensor::new(xs.to_vec(), x.clone()).unwrap(),
            &Tensor::new(ws.to_vec(), w.clone()).unwrap(),
            &Tensor::new(vec![3], b.clone()).unwrap(),
            padding,
        )
        .unwrap();
        assert_eq!(got.shape(), &shape);
        for (a, e) in got.to_vec().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_commutes_with_batch_concatenation(seed in 0u64..1000, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per = 2 * 5 * 6;
        let data: Vec<f32> = random_vec(&mut rng, n * per);
        let w = Tensor::new(vec![3, 2, 3, 3], random_vec(&mut rng, 54)).unwrap();
        let b = Tensor::new(vec![3], random_vec(&mut rng, 3)).unwrap();
        let batched = conv2d(&Tensor::new(vec![n, 2, 5, 6], data.clone()).unwrap(), &w, &b, Padding::Same).unwrap().to_vec();
        let mut stacked = Vec::new();
        for i in 0..n {
            let xi = Tensor::new(vec![1, 2, 5, 6], data[i * per..(i + 1) * per].to_vec()).unwrap();
            stacked.extend(conv2d(&xi, &w, &b, Padding::Same).unwrap().to_vec());
        }
        for (a, e) in batched.iter().zip(&stacked) {
            prop_assert!((a - e).abs() <= 1e-6);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-1e4f32..1e4, 12)) {
        let p = softmax(&Tensor::new(vec![3, 4], values).unwrap()).unwrap().to_vec();
        for row in p.chunks(4) {
            prop_assert!((row.iter().sum::<f32>() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn avg_pool_is_linear(values in prop::collection::vec(-10f64..10.0, 2 * 6 * 6), a in -5f64..5.0) {
        let x = Tensor::new(vec![1, 2, 6, 6], values.clone()).unwrap();
        let scaled = Tensor::new(vec![1, 2, 6, 6], values.iter().map(|v| v * a).collect()).unwrap();
        let lhs: Vec<f64> = pool2d(&x, (2, 3), PoolMode::Avg).unwrap().to_vec().iter().map(|v| v * a).collect();
        let rhs = pool2d(&scaled, (2, 3), PoolMode::Avg).unwrap().to_vec();
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() <= 1e-9);
        }
    }

    #[test]
    fn dropout_is_seed_deterministic(seed in 0u64..10_000) {
        let x = Tensor::<f32>::new(vec![1, 1, 4, 8], vec![1.0; 32]).unwrap();
        let a = dropout(&x, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().to_vec();
        let b = dropout(&x, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().to_vec();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
