//! Central finite-difference verification of tape gradients.
//!
//! The numeric side only evaluates the forward pass, so it is independent
//! of every backward rule it checks.

use super::{ResidualWeights, Tape, Tensor, TensorError, Var};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error over all checked elements.
    pub max_rel_err: f64,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Relative error with a tiny absolute floor so exact zeros compare equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Compares analytic gradients of the scalar produced by `build` against
/// central differences with the given `step`.
///
/// `build` receives a fresh tape and one parameter handle per input and
/// must return a scalar node.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], step: f64, build: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
        let out = build(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.len() != 1 {
            return Err(TensorError::NotScalar(v.shape().to_vec()));
        }
        Ok(v.data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let out = build(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, grads) in analytic.iter().enumerate() {
        for j in 0..grads.len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(grads[j], numeric);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (i, j);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Result of checking one operation over several random shapes.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub shapes: usize,
    pub max_rel_err: f64,
}

fn random_tensor<R: rand::Rng>(rng: &mut R, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Tensor whose entries all stay at least `margin` away from zero.
fn away_from_zero<R: rand::Rng>(rng: &mut R, shape: &[usize], margin: f64) -> Tensor<f64> {
    let mut t = random_tensor(rng, shape);
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin - v.abs() } else { margin + v.abs() };
        }
    }
    t
}

/// Reduces any node to a scalar through a fixed random linear projection.
fn project(tape: &mut Tape<f64>, x: Var, weights: &Tensor<f64>) -> Result<Var, TensorError> {
    let n = tape.value(x).len();
    let flat = tape.reshape(x, &[1, n])?;
    let w = tape.constant(weights.clone().reshape(&[1, n])?);
    let b = tape.constant(Tensor::zeros(&[1]));
    let y = tape.linear(flat, w, b)?;
    tape.reshape(y, &[1])
}

/// Finite-difference checks of every differentiable tape operation on
/// `shapes_per_op` random shapes each, in 64-bit precision with step 1e-3.
///
/// Inputs are drawn away from the non-differentiable points of ReLU,
/// |x| and max(x, 0) by at least 1e-2.
pub fn standard_suite(seed: u64, shapes_per_op: usize) -> Result<Vec<OpCheck>, TensorError> {
    use rand::{Rng, SeedableRng};
    const STEP: f64 = 1e-3;
    const MARGIN: f64 = 1e-2;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();
    let mut record = |op: &'static str, errs: Vec<f64>| {
        results.push(OpCheck {
            op,
            shapes: errs.len(),
            max_rel_err: errs.into_iter().fold(0.0, f64::max),
        });
    };

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=3);
        let o = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=3);
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..=1);
        let h = rng.gen_range(k.max(3)..=6);
        let w = rng.gen_range(k.max(3)..=6);
        let x = random_tensor(&mut rng, &[n, c, h, w]);
        let wt = random_tensor(&mut rng, &[o, c, k, k]);
        let b = random_tensor(&mut rng, &[o]);
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let proj = random_tensor(&mut rng, &[n * o * oh * ow]);
        let r = check_gradients(&[x, wt, b], STEP, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], stride, pad)?;
            project(t, y, &proj)
        })?;
        errs.push(r.max_rel_err);
    }
    record("conv2d", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=5), rng.gen_range(1..=5)];
        let x = away_from_zero(&mut rng, &shape, MARGIN);
        let proj = random_tensor(&mut rng, &[x.len()]);
        let r = check_gradients(&[x], STEP, |t, v| {
            let y = t.relu(v[0]);
            project(t, y, &proj)
        })?;
        errs.push(r.max_rel_err);
    }
    record("relu", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=8)];
        let x = random_tensor(&mut rng, &shape);
        let x = Tensor::from_vec(&shape, x.data().iter().map(|v| v * 4.0).collect())?;
        let proj = random_tensor(&mut rng, &[x.len()]);
        let r = check_gradients(&[x], STEP, |t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y, &proj)
        })?;
        errs.push(r.max_rel_err);
    }
    record("sigmoid", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4)];
        let a = random_tensor(&mut rng, &shape);
        let b = random_tensor(&mut rng, &shape);
        let proj = random_tensor(&mut rng, &[a.len()]);
        let r = check_gradients(&[a, b], STEP, |t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y, &proj)
        })?;
        errs.push(r.max_rel_err);
    }
    record("add", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=6)];
        let x = random_tensor(&mut rng, &shape);
        let proj = random_tensor(&mut rng, &[shape[0] * shape[1]]);
        let r = check_gradients(&[x], STEP, |t, v| {
            let y = t.adaptive_avg_pool(v[0])?;
            project(t, y, &proj)
        })?;
        errs.push(r.max_rel_err);
    }
    record("adaptive_avg_pool", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let (n, i, o) = (rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=5));
        let x = random_tensor(&mut rng, &[n, i]);
        let w = random_tensor(&mut rng, &[o, i]);
        let b = random_tensor(&mut rng, &[o]);
        let proj = random_tensor(&mut rng, &[n * o]);
        let r = check_gradients(&[x, w, b], STEP, |t, v| {
            let y = t.linear(v[0], v[1], v[2])?;
            project(t, y, &proj)
        })?;
        errs.push(r.max_rel_err);
    }
    record("linear", errs);

    let mut errs = Vec::new();
    let mut attempts = 0;
    while errs.len() < shapes_per_op {
        attempts += 1;
        if attempts > 1000 * shapes_per_op {
            return Err(TensorError::InvalidArgument(
                "could not draw residual block inputs away from ReLU kinks".into(),
            ));
        }
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=3);
        let (h, w) = (rng.gen_range(2..=5), rng.gen_range(2..=5));
        let inputs = vec![
            random_tensor(&mut rng, &[n, c, h, w]),
            random_tensor(&mut rng, &[c, c, 3, 3]),
            random_tensor(&mut rng, &[c]),
            random_tensor(&mut rng, &[c, c, 3, 3]),
            random_tensor(&mut rng, &[c]),
        ];
        // every pre-activation must sit outside the kink band
        let mut probe = Tape::new();
        let v: Vec<Var> = inputs.iter().map(|t| probe.param(t)).collect();
        let z1 = probe.conv2d(v[0], v[1], v[2], 1, 1)?;
        let a1 = probe.relu(z1);
        let z2 = probe.conv2d(a1, v[3], v[4], 1, 1)?;
        let s = probe.add(v[0], z2)?;
        let clear = |t: &Tape<f64>, var: Var| t.value(var).data().iter().all(|z| z.abs() > 2.0 * MARGIN);
        if !clear(&probe, z1) || !clear(&probe, s) {
            continue;
        }
        let proj = random_tensor(&mut rng, &[n * c * h * w]);
        let r = check_gradients(&inputs, STEP, |t, v| {
            let weights = ResidualWeights {
                conv1_w: v[1],
                conv1_b: v[2],
                conv2_w: v[3],
                conv2_b: v[4],
            };
            let y = t.residual_block(v[0], &weights)?;
            project(t, y, &proj)
        })?;
        errs.push(r.max_rel_err);
    }
    record("residual_block", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let (rows, classes) = (rng.gen_range(1..=6), rng.gen_range(2..=7));
        let x = Tensor::from_vec(
            &[rows, classes],
            (0..rows * classes).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )?;
        let targets: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
        let r = check_gradients(&[x], STEP, |t, v| t.softmax_cross_entropy(v[0], &targets))?;
        errs.push(r.max_rel_err);
    }
    record("softmax_cross_entropy", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let shape = [rng.gen_range(1..=4), rng.gen_range(1..=8)];
        let target = random_tensor(&mut rng, &shape);
        let offset = away_from_zero(&mut rng, &shape, MARGIN);
        let pred = Tensor::from_vec(
            &shape,
            target.data().iter().zip(offset.data()).map(|(t, o)| t + 0.3 * o).collect(),
        )?;
        let r = check_gradients(&[pred], STEP, |t, v| t.exp_l1_loss(v[0], &target, 5.0))?;
        errs.push(r.max_rel_err);
    }
    record("exp_l1_loss", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let shape = [rng.gen_range(1..=4), rng.gen_range(2..=10)];
        let mut x = random_tensor(&mut rng, &shape);
        // keep adjacent differences out of the kink band
        for row in x.data_mut().chunks_mut(shape[1]) {
            for j in 1..row.len() {
                if (row[j] - row[j - 1]).abs() < MARGIN {
                    row[j] += 3.0 * MARGIN;
                }
            }
        }
        let r = check_gradients(&[x], STEP, |t, v| t.monotonicity_loss(v[0]))?;
        errs.push(r.max_rel_err);
    }
    record("monotonicity_loss", errs);

    let mut errs = Vec::new();
    for _ in 0..shapes_per_op {
        let k = rng.gen_range(1..=4);
        let inputs: Vec<Tensor<f64>> = (0..k).map(|_| random_tensor(&mut rng, &[1])).collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let r = check_gradients(&inputs, STEP, |t, v| {
            let terms: Vec<(Var, f64)> = v.iter().copied().zip(weights.iter().copied()).collect();
            t.weighted_sum(&terms)
        })?;
        errs.push(r.max_rel_err);
    }
    record("weighted_sum", errs);

    Ok(results)
}
