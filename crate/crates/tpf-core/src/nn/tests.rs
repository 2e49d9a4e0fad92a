use super::*;
use crate::linalg::SeededRng;

fn tiny_spec() -> MlpSpec {
    MlpSpec {
        input_dim: 2,
        output_dim: 2,
        hidden_width: 4,
        depth: 2,
        activation: Activation::Gelu,
        residual: true,
        time_embed_dim: 0,
        mu_conditioned: false,
    }
}

#[test]
fn param_count_matches_hand_count() {
    // One hidden layer of width 4 on 2 -> 2, no conditioning:
    // (2+1)*4 + (4+1)*2 = 22.
    let spec = MlpSpec {
        depth: 1,
        ..tiny_spec()
    };
    assert_eq!(spec.param_count(), 22);
}

#[test]
fn init_is_deterministic() {
    let spec = tiny_spec();
    let a = net_init(&spec, &mut SeededRng::from_seed(5)).unwrap();
    let b = net_init(&spec, &mut SeededRng::from_seed(5)).unwrap();
    assert_eq!(a.weights, b.weights);
}

#[test]
fn init_within_six_sigma_of_fan_in_scaling() {
    let spec = MlpSpec {
        input_dim: 8,
        output_dim: 8,
        hidden_width: 256,
        depth: 6,
        activation: Activation::Gelu,
        residual: true,
        time_embed_dim: 32,
        mu_conditioned: false,
    };
    let p = net_init(&spec, &mut SeededRng::from_seed(1)).unwrap();
    for b in spec.layout().all_blocks() {
        let bound = if b.bias {
            0.0
        } else {
            6.0 / (b.fan_in as f64).sqrt()
        };
        for &w in &p.weights[b.range()] {
            assert!(w.abs() <= bound + 1e-12, "weight {w} exceeds bound {bound}");
        }
    }
}

#[test]
fn zero_weights_give_zero_output() {
    let spec = MlpSpec {
        time_embed_dim: 8,
        ..tiny_spec()
    };
    let p = NetParams {
        weights: vec![0.0; spec.param_count()],
        spec,
    };
    let y = net_forward(&p, &[0.3, -1.2], 0.5, 0.7, None).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn forward_is_deterministic() {
    let spec = MlpSpec {
        time_embed_dim: 16,
        ..tiny_spec()
    };
    let p = net_init(&spec, &mut SeededRng::from_seed(2)).unwrap();
    let a = net_forward(&p, &[0.1, 0.2], 0.3, 0.4, None).unwrap();
    let b = net_forward(&p, &[0.1, 0.2], 0.3, 0.4, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forward_matches_straight_line_reimplementation() {
    let spec = MlpSpec {
        input_dim: 2,
        output_dim: 2,
        hidden_width: 3,
        depth: 2,
        activation: Activation::Gelu,
        residual: true,
        time_embed_dim: 4,
        mu_conditioned: false,
    };
    let mut p = net_init(&spec, &mut SeededRng::from_seed(31)).unwrap();
    // conditioning projections start at zero; give them values so the
    // straight-line comparison exercises every path
    let mut wr = SeededRng::from_seed(32);
    for w in p.weights.iter_mut() {
        if *w == 0.0 {
            *w = 0.3 * wr.normal();
        }
    }
    let (x, t, s) = ([0.4, -0.9], 0.37, 0.81);
    let got = net_forward(&p, &x, t, s, None).unwrap();

    // Independent evaluation, explicit loops only.
    let w = &p.weights;
    let lay = spec.layout();
    let g = |z: f64| 0.5 * z * (1.0 + libm::erf(z / 2f64.sqrt()));
    let mut feats = Vec::new();
    for z in [t, s] {
        for j in 0..16 {
            let omega = SIN_FREQ_MAX.powf(j as f64 / 15.0);
            feats.push(libm::sin(omega * z));
            feats.push(libm::cos(omega * z));
        }
    }
    let we1 = lay.embed_w1.unwrap();
    let be1 = lay.embed_b1.unwrap();
    let mut hid = [0.0f64; 64];
    for (i, h) in hid.iter_mut().enumerate() {
        let mut acc = w[be1.start + i];
        for (k, f) in feats.iter().enumerate() {
            acc += w[we1.start + i * feats.len() + k] * f;
        }
        *h = g(acc);
    }
    let we2 = lay.embed_w2.unwrap();
    let be2 = lay.embed_b2.unwrap();
    let mut emb = [0.0f64; 4];
    for (i, e) in emb.iter_mut().enumerate() {
        let mut acc = w[be2.start + i];
        for (k, h) in hid.iter().enumerate() {
            acc += w[we2.start + i * 64 + k] * h;
        }
        *e = acc;
    }
    let mut h = vec![x[0], x[1]];
    for l in 0..2 {
        let (wb, bb, cb) = &lay.layers[l];
        let cb = cb.unwrap();
        let fan_in = h.len();
        let mut next = vec![0.0f64; 3];
        for (i, nv) in next.iter_mut().enumerate() {
            let mut acc = w[bb.start + i];
            for (k, hv) in h.iter().enumerate() {
                acc += w[wb.start + i * fan_in + k] * hv;
            }
            for (k, ev) in emb.iter().enumerate() {
                acc += w[cb.start + i * 4 + k] * ev;
            }
            *nv = g(acc) + if l > 0 { h[i] } else { 0.0 };
        }
        h = next;
    }
    let mut want = vec![0.0f64; 2];
    for (i, yv) in want.iter_mut().enumerate() {
        let mut acc = w[lay.out_b.start + i];
        for (k, hv) in h.iter().enumerate() {
            acc += w[lay.out_w.start + i * 3 + k] * hv;
        }
        *yv = acc;
    }
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

fn finite_difference_grad(p: &NetParams, batch: &Batch, h: f64) -> Vec<f64> {
    let mut fd = vec![0.0; p.weights.len()];
    let mut pp = p.clone();
    for i in 0..p.weights.len() {
        let orig = pp.weights[i];
        pp.weights[i] = orig + h;
        let lp = batch_loss(&pp, batch).unwrap();
        pp.weights[i] = orig - h;
        let lm = batch_loss(&pp, batch).unwrap();
        pp.weights[i] = orig;
        fd[i] = (lp - lm) / (2.0 * h);
    }
    fd
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn densely_init(spec: &MlpSpec, rng: &mut SeededRng) -> NetParams {
    // net_init zeroes the conditioning projections; gradient checks want
    // every block active.
    let mut p = net_init(spec, rng).unwrap();
    for w in p.weights.iter_mut() {
        if *w == 0.0 {
            *w = 0.2 * rng.normal();
        }
    }
    p
}

fn random_batch(rng: &mut SeededRng, spec: &MlpSpec, rows: usize) -> Batch {
    Batch {
        x: Matrix::from_fn(rows, spec.input_dim, |_, _| rng.normal()),
        t: (0..rows).map(|_| rng.uniform()).collect(),
        s: (0..rows).map(|_| rng.uniform()).collect(),
        mu: if spec.time_embed_dim > 0 && spec.mu_conditioned {
            Some((0..rows).map(|_| 1.0 + rng.uniform()).collect())
        } else {
            None
        },
        target: Matrix::from_fn(rows, spec.output_dim, |_, _| rng.normal()),
    }
}

#[test]
fn gradient_matches_central_differences_small_net() {
    let spec = tiny_spec();
    let mut rng = SeededRng::from_seed(8);
    let p = densely_init(&spec, &mut rng);
    let batch = random_batch(&mut rng, &spec, 8);
    let (_, grad) = batch_loss_grad(&p, &batch, 1).unwrap();
    let fd = finite_difference_grad(&p, &batch, 1e-5);
    let err = max_rel_err(&grad, &fd);
    assert!(err < 1e-4, "max rel err {err:e}");
}

#[test]
fn gradient_matches_central_differences_random_configs() {
    let mut rng = SeededRng::from_seed(4242);
    for trial in 0..20 {
        let spec = MlpSpec {
            input_dim: 1 + rng.below(3),
            output_dim: 1 + rng.below(3),
            hidden_width: 3 + rng.below(4),
            depth: 1 + rng.below(3),
            activation: Activation::Gelu,
            residual: rng.uniform() < 0.5,
            time_embed_dim: if rng.uniform() < 0.5 { 0 } else { 4 },
            mu_conditioned: rng.uniform() < 0.5,
        };
        let p = densely_init(&spec, &mut rng);
        let batch = random_batch(&mut rng, &spec, 4);
        let (_, grad) = batch_loss_grad(&p, &batch, 1).unwrap();
        let fd = finite_difference_grad(&p, &batch, 1e-5);
        let err = max_rel_err(&grad, &fd);
        assert!(err < 1e-4, "trial {trial}: max rel err {err:e}");
    }
}

#[test]
fn sharded_gradient_matches_serial() {
    let spec = MlpSpec {
        time_embed_dim: 8,
        ..tiny_spec()
    };
    let mut rng = SeededRng::from_seed(66);
    let p = densely_init(&spec, &mut rng);
    let batch = random_batch(&mut rng, &spec, 17);
    let (l1, g1) = batch_loss_grad(&p, &batch, 1).unwrap();
    let (l2, g2) = batch_loss_grad(&p, &batch, 4).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    assert!(max_rel_err(&g1, &g2) < 1e-10);
}

#[test]
fn zero_residual_batch_gives_zero_gradient() {
    let spec = tiny_spec();
    let mut rng = SeededRng::from_seed(12);
    let p = net_init(&spec, &mut rng).unwrap();
    let mut batch = random_batch(&mut rng, &spec, 5);
    for r in 0..batch.len() {
        let y = net_forward(&p, batch.x.row(r), batch.t[r], batch.s[r], None).unwrap();
        batch.target.row_mut(r).copy_from_slice(&y);
    }
    let (loss, grad) = batch_loss_grad(&p, &batch, 1).unwrap();
    assert!(loss < 1e-28);
    assert!(grad.iter().all(|&g| g.abs() < 1e-14));
}

#[test]
fn doubling_the_problem_scale_quadruples_hidden_gradients() {
    // Double the output layer and the targets: every residual doubles, the
    // loss quadruples, and gradients of the layers feeding the (doubled)
    // output layer scale by 4.
    let spec = tiny_spec();
    let mut rng = SeededRng::from_seed(13);
    let p = net_init(&spec, &mut rng).unwrap();
    let batch = random_batch(&mut rng, &spec, 6);
    let (loss1, grad1) = batch_loss_grad(&p, &batch, 1).unwrap();

    let lay = spec.layout();
    let mut p2 = p.clone();
    for w in &mut p2.weights[lay.out_w.range()] {
        *w *= 2.0;
    }
    for w in &mut p2.weights[lay.out_b.range()] {
        *w *= 2.0;
    }
    let mut batch2 = batch.clone();
    for v in batch2.target.data_mut() {
        *v *= 2.0;
    }
    let (loss2, grad2) = batch_loss_grad(&p2, &batch2, 1).unwrap();
    assert!((loss2 / loss1 - 4.0).abs() < 1e-9, "loss ratio {}", loss2 / loss1);
    for (wb, bb, _) in &lay.layers {
        for i in wb.range().chain(bb.range()) {
            let want = 4.0 * grad1[i];
            assert!(
                (grad2[i] - want).abs() <= 1e-9 * want.abs().max(1e-9),
                "hidden grad {i}: {} vs {}",
                grad2[i],
                want
            );
        }
    }
}

#[test]
fn adamw_zero_gradient_zero_decay_is_identity() {
    let spec = tiny_spec();
    let p0 = net_init(&spec, &mut SeededRng::from_seed(3)).unwrap();
    let mut p = p0.clone();
    let mut st = AdamWState::new(p.param_count(), 1e-3, 0.0);
    adamw_step(&mut st, &mut p, &vec![0.0; p0.param_count()]).unwrap();
    assert_eq!(p.weights, p0.weights);
    assert_eq!(st.step, 1);
}

#[test]
fn adamw_first_step_matches_scalar_recurrence() {
    let spec = tiny_spec();
    let p0 = net_init(&spec, &mut SeededRng::from_seed(3)).unwrap();
    let mut p = p0.clone();
    let lr = 1e-3;
    let mut st = AdamWState::new(p.param_count(), lr, 0.0);
    let c = 0.37;
    let grad = vec![c; p0.param_count()];
    adamw_step(&mut st, &mut p, &grad).unwrap();
    // Textbook recurrence from zero moments: m_hat = c, v_hat = c^2, so the
    // step is -lr * c / (|c| + eps) = -lr * sign(c) up to the eps correction.
    let expected = lr * c / (c.abs() + st.eps);
    for (w, w0) in p.weights.iter().zip(&p0.weights) {
        assert!((w0 - w - expected).abs() < 1e-15);
    }
}

#[test]
fn adamw_decay_shrinks_weights_multiplicatively() {
    let spec = tiny_spec();
    let p0 = net_init(&spec, &mut SeededRng::from_seed(3)).unwrap();
    let mut p = p0.clone();
    let lr = 1e-2;
    let wd = 0.1;
    let mut st = AdamWState::new(p.param_count(), lr, wd);
    adamw_step(&mut st, &mut p, &vec![0.0; p0.param_count()]).unwrap();
    for (w, w0) in p.weights.iter().zip(&p0.weights) {
        assert!((w - w0 * (1.0 - lr * wd)).abs() < 1e-15);
    }
}

#[test]
fn finite_outputs_on_huge_inputs() {
    let spec = MlpSpec {
        time_embed_dim: 8,
        ..tiny_spec()
    };
    let p = net_init(&spec, &mut SeededRng::from_seed(9)).unwrap();
    for scale in [1.0, 1e3, 1e6] {
        let y = net_forward(&p, &[scale, -scale], 0.5, 0.5, None).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn fits_linear_target_below_1e6_within_5000_steps() {
    let a = [[0.5, -0.3], [0.2, 0.8]];
    let spec = MlpSpec {
        input_dim: 2,
        output_dim: 2,
        hidden_width: 16,
        depth: 2,
        activation: Activation::Gelu,
        residual: true,
        time_embed_dim: 0,
        mu_conditioned: false,
    };
    let mut rng = SeededRng::from_seed(21);
    let mut p = net_init(&spec, &mut rng).unwrap();
    let n = 256;
    let x = Matrix::from_fn(n, 2, |_, _| rng.normal());
    let target = Matrix::from_fn(n, 2, |i, j| {
        a[j][0] * x[(i, 0)] + a[j][1] * x[(i, 1)]
    });
    let batch = Batch {
        x,
        t: vec![0.0; n],
        s: vec![0.0; n],
        mu: None,
        target,
    };
    let mut st = AdamWState::new(p.param_count(), 3e-3, 0.0);
    let mut best = f64::INFINITY;
    for step in 0..5000 {
        st.lr = if step < 3000 { 1e-2 } else { 1e-2 * 0.3f64.powi(((step - 3000) / 400) as i32) };
        let (loss, grad) = batch_loss_grad(&p, &batch, 2).unwrap();
        best = best.min(loss);
        if best < 1e-6 {
            break;
        }
        adamw_step(&mut st, &mut p, &grad).unwrap();
    }
    assert!(best < 1e-6, "best loss {best:e}");
}
