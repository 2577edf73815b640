use rand::Rng as _;

use super::*;
use crate::error::Error;
use crate::rng::SeedTree;

fn random(shape: &[usize], rng: &mut crate::rng::Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// Reduces `out` to a scalar with fixed random weights so that every output
/// element contributes a distinct sensitivity.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var, Error> {
    let (m, n) = tape.shape(out);
    let mut rng = SeedTree::new(seed).rng("weights");
    let w = tape.constant(random(&[m, n], &mut rng));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum_all(prod))
}

fn check<F>(name: &str, shapes: &[&[usize]], f: F)
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, Error>,
{
    let mut rng = SeedTree::new(11).rng(name);
    for trial in 0..3 {
        let inputs: Vec<Tensor<f64>> = shapes.iter().map(|s| random(s, &mut rng)).collect();
        let report = finite_diff_check(
            |tape, vars| {
                let out = f(tape, vars)?;
                weighted_sum(tape, out, trial)
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(
            report.max_rel_error <= 1e-4,
            "{name} trial {trial}: rel err {} at {:?}",
            report.max_rel_error,
            report.worst_coordinate
        );
    }
}

#[test]
fn primitive_gradients_match_finite_differences() {
    check("add", &[&[2, 3], &[2, 3]], |t, v| t.add(v[0], v[1]));
    check("sub", &[&[2, 3], &[2, 3]], |t, v| t.sub(v[0], v[1]));
    check("mul", &[&[2, 3], &[2, 3]], |t, v| t.mul(v[0], v[1]));
    check("scale", &[&[2, 3]], |t, v| Ok(t.scale(v[0], -1.7)));
    check("add_row", &[&[3, 4], &[1, 4]], |t, v| t.add_row(v[0], v[1]));
    check("mul_row", &[&[3, 4], &[1, 4]], |t, v| t.mul_row(v[0], v[1]));
    check("matmul", &[&[3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1]));
    check("transpose", &[&[3, 2]], |t, v| Ok(t.transpose(v[0])));
    check("concat_cols", &[&[2, 3], &[2, 1]], |t, v| t.concat_cols(&[v[0], v[1], v[0]]));
    check("concat_rows", &[&[2, 3], &[1, 3]], |t, v| t.concat_rows(&[v[0], v[1]]));
    check("slice_cols", &[&[3, 5]], |t, v| t.slice_cols(v[0], 1, 4));
    check("slice_rows", &[&[4, 2]], |t, v| t.slice_rows(v[0], 1, 3));
    check("tile_rows", &[&[1, 3]], |t, v| t.tile_rows(v[0], 4));
    check("tanh", &[&[2, 3]], |t, v| Ok(t.tanh(v[0])));
    check("sigmoid", &[&[2, 3]], |t, v| Ok(t.sigmoid(v[0])));
    check("relu", &[&[3, 3]], |t, v| Ok(t.relu(v[0])));
    check("exp", &[&[2, 3]], |t, v| Ok(t.exp(v[0])));
    check("log", &[&[2, 3]], |t, v| {
        let e = t.exp(v[0]);
        Ok(t.log(e))
    });
    check("softmax_rows", &[&[3, 4]], |t, v| Ok(t.softmax_rows(v[0])));
    check("log_softmax_rows", &[&[3, 4]], |t, v| Ok(t.log_softmax_rows(v[0])));
    check("layer_norm_rows", &[&[3, 5]], |t, v| Ok(t.layer_norm_rows(v[0], 1e-5)));
    check("mean_rows", &[&[4, 3]], |t, v| t.mean_rows(v[0]));
    check("mean_rows_masked", &[&[4, 3]], |t, v| t.mean_rows_masked(v[0], vec![true, false, true, true]));
    check("mean_cols", &[&[4, 3]], |t, v| Ok(t.mean_cols(v[0])));
    check("mask_rows", &[&[3, 2]], |t, v| t.mask_rows(v[0], vec![true, false, true]));
    check("gather_rows", &[&[4, 3]], |t, v| t.gather_rows(v[0], &[2, 0, 2, 3]));
    check("gather_flat", &[&[2, 3]], |t, v| t.gather_flat(v[0], &[Some(5), Some(0), Some(5)]));
    check("logsumexp", &[&[2, 3], &[2, 3], &[2, 3]], |t, v| t.logsumexp(&[v[0], v[1], v[2]]));
    check("unfold", &[&[7, 3]], |t, v| t.unfold(v[0], 3, 2));
    check("cross_entropy", &[&[1, 5]], |t, v| cross_entropy(t, v[0], 3));
}

#[test]
fn logsumexp_ignores_negative_infinity_entries() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::row(vec![0.5, -1.0]).unwrap());
    let with_hole = tape.gather_flat(x, &[Some(0), None]).unwrap();
    let lse = tape.logsumexp(&[with_hole]).unwrap();
    assert_eq!(tape.value(with_hole).data()[1], f64::NEG_INFINITY);
    let both = tape.gather_flat(lse, &[Some(0), Some(1)]).unwrap();
    assert_eq!(tape.value(both).data(), tape.value(with_hole).data());
    let ninf = tape.gather_flat(x, &[None]).unwrap();
    let all_inf = tape.logsumexp(&[ninf, ninf]).unwrap();
    assert_eq!(tape.value(all_inf).data()[0], f64::NEG_INFINITY);
    let picked = tape.gather_flat(both, &[Some(0)]).unwrap();
    let g = tape.backward(picked).unwrap().wrt(x);
    assert!(g.is_finite());
    assert_eq!(g.data(), &[1.0, 0.0]);
}

#[test]
fn matmul_examples() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let i = tape.constant(Tensor::identity(2));
    let out = tape.matmul(a, i).unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let r = tape.constant(Tensor::row(vec![1.0, 2.0]).unwrap());
    let c = tape.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
    let out = tape.matmul(r, c).unwrap();
    assert_eq!(tape.value(out).data(), &[11.0]);

    let x = tape.constant(Tensor::zeros(&[2, 3]));
    let y = tape.constant(Tensor::zeros(&[2, 3]));
    match tape.matmul(x, y) {
        Err(Error::Dimension(msg)) => {
            assert!(msg.contains("[2, 3]"), "{msg}");
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::<f64>::new();
    let rows = Tensor::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0f64.ln(), 3.0f64.ln()],
        vec![1000.0, 1000.0],
    ])
    .unwrap();
    let x = tape.constant(rows);
    let s = tape.softmax_rows(x);
    let v = tape.value(s).data();
    let expect = [0.5, 0.5, 0.25, 0.75, 0.5, 0.5];
    for (a, b) in v.iter().zip(expect) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn cross_entropy_examples() {
    let ce = |logits: Vec<f64>, label| {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::row(logits).unwrap());
        let l = cross_entropy(&mut tape, x, label)?;
        Ok::<f64, Error>(tape.value(l).data()[0])
    };
    assert!((ce(vec![0.0, 0.0], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
    // −log σ(20) = log(1 + e^{−20}); value from the closed form.
    let expected = (-20f64).exp().ln_1p();
    assert!((ce(vec![10.0, -10.0], 0).unwrap() - expected).abs() < 1e-9 * expected);
    assert!((expected - 2.0611536e-9).abs() < 1e-15);
    assert!((ce(vec![0.0; 4], 3).unwrap() - 4f64.ln()).abs() < 1e-15);
    assert!(matches!(ce(vec![0.0, 0.0], 2), Err(Error::Index(_))));
}

#[test]
fn backward_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::scalar(3.0));
    let unused = tape.param(Tensor::zeros(&[2, 2]));
    let sq = tape.mul(x, x).unwrap();
    let grads = tape.backward(sq).unwrap();
    assert_eq!(grads.wrt(x).data(), &[6.0]);
    assert_eq!(grads.wrt(unused), Tensor::zeros(&[2, 2]));

    let wide = tape.tile_rows(x, 3).unwrap();
    assert!(matches!(tape.backward(wide), Err(Error::Contract(_))));
}

#[test]
fn softmax_ce_composite_matches_finite_differences() {
    let mut rng = SeedTree::new(3).rng("ce");
    let logits = random(&[1, 6], &mut rng);
    let w = random(&[6, 6], &mut rng);
    let report = finite_diff_check(
        |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let s = t.softmax_rows(h);
            let l = t.log(s);
            let picked = t.gather_flat(l, &[Some(2)])?;
            Ok(t.scale(picked, -1.0))
        },
        &[logits, w],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{}", report.max_rel_error);
}

#[test]
fn finite_diff_check_examples() {
    let mut rng = SeedTree::new(5).rng("quad");
    let a = random(&[4, 4], &mut rng);
    let x = random(&[4, 1], &mut rng);
    let report = finite_diff_check(
        |t, v| {
            let ax = t.matmul(v[0], v[1])?;
            let xt = t.transpose(v[1]);
            t.matmul(xt, ax)
        },
        &[a, x.clone()],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);

    let report = finite_diff_check(
        |t, _v| Ok(t.constant(Tensor::scalar(4.0))),
        std::slice::from_ref(&x),
        1e-5,
    )
    .unwrap();
    assert!(report.analytic[0].data().iter().all(|g| *g == 0.0));
    assert!(report.numeric[0].data().iter().all(|g| g.abs() < 1e-12));

    let err = finite_diff_check(|t, v| Ok(t.log(v[0])), &[Tensor::scalar(-1.0)], 1e-5);
    assert!(matches!(err, Err(Error::Evaluation(_))));
}

#[test]
fn constants_receive_no_gradient_path() {
    let mut tape = Tape::<f64>::new();
    let w = tape.constant(Tensor::scalar(2.0));
    let x = tape.param(Tensor::scalar(1.5));
    let y = tape.mul(w, x).unwrap();
    assert!(!tape.requires_grad(w));
    assert!(tape.requires_grad(y));
    let g = tape.backward(y).unwrap();
    assert!(g.get(w).is_none());
    assert_eq!(g.wrt(x).data(), &[2.0]);
}

#[test]
fn generic_over_f32() {
    let mut tape = Tape::<f32>::new();
    let x = tape.param(Tensor::row(vec![0.0f32, 0.0]).unwrap());
    let s = tape.softmax_rows(x);
    assert_eq!(tape.value(s).data(), &[0.5f32, 0.5]);
}

mod props {
    use proptest::prelude::*;

    use super::super::*;

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(rows in proptest::collection::vec(
            proptest::collection::vec(-10.0f64..10.0, 4), 1..5)) {
            let mut tape = Tape::<f64>::new();
            let x = tape.constant(Tensor::from_rows(&rows).unwrap());
            let s = tape.softmax_rows(x);
            let out = tape.value(s);
            for r in 0..out.rows() {
                let row = out.row_slice(r);
                let total: f64 = row.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
            }
        }
    }
}
