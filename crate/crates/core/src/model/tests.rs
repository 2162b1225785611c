use super::*;
use crate::autodiff::grad_check;
use crate::rng::SeededRng;
use crate::series::Mask;
use alloc::vec;

fn small_config(n: usize) -> ModelConfig {
    ModelConfig {
        n_channels: n,
        window: 5,
        hidden_h: 4,
        hidden_z: 3,
        fc_hidden: 8,
        fc_layers: 2,
        embed_dim: 2,
        solver: Solver::Rk4,
        steps_per_unit: 2,
        include_time_channel: true,
        shared_temporal: false,
    }
}

fn sine_window(n: usize, w: usize, phase: f64) -> Window {
    let mut values = Matrix::zeros(w, n);
    for r in 0..w {
        for c in 0..n {
            values[(r, c)] = 0.5 + 0.4 * libm::sin(0.7 * r as f64 + phase + c as f64);
        }
    }
    Window { values, mask: Mask::full(w, n), target: vec![0.5; n], target_mask: vec![true; n], target_index: w as i64 }
}

fn random_matrix(rng: &mut SeededRng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect())
}

fn zero_fields(model: &mut DgNcdeModel) {
    let p = model.params_mut();
    for l in p.spatial_in.layers.iter_mut().chain(p.spatial_out.layers.iter_mut()) {
        l.weight.fill(0.0);
        l.bias.fill(0.0);
    }
    p.spatial_mix.fill(0.0);
    for s in &mut p.temporal {
        for l in &mut s.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
    }
}

#[test]
fn adjacency_of_zero_embeddings_is_identity() {
    assert_eq!(learned_adjacency_matrix(&Matrix::zeros(3, 2)), Matrix::identity(3));
}

#[test]
fn symmetric_normalization_arithmetic() {
    let mut tape = Tape::new();
    let a = tape.constant(Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
    let eye = tape.constant(Matrix::identity(2));
    let a_hat = tape.add(a, eye).unwrap();
    let out = tape.sym_normalize(a_hat).unwrap();
    assert!(tape.value(out).as_slice().iter().all(|v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn adjacency_matches_elementwise_oracle() {
    let mut rng = SeededRng::new(4);
    let e = random_matrix(&mut rng, 3, 2);
    let got = learned_adjacency_matrix(&e);
    let mut a_hat = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let dot = e[(i, 0)] * e[(j, 0)] + e[(i, 1)] * e[(j, 1)];
            a_hat[i][j] = dot.max(0.0) + if i == j { 1.0 } else { 0.0 };
        }
    }
    let deg: Vec<f64> = a_hat.iter().map(|r| r.iter().sum()).collect();
    for i in 0..3 {
        for j in 0..3 {
            let expected = a_hat[i][j] / libm::sqrt(deg[i] * deg[j]);
            assert!((got[(i, j)] - expected).abs() < 1e-14);
            assert!((got[(i, j)] - got[(j, i)]).abs() < 1e-12);
        }
    }
}

#[test]
fn spatial_field_shape_and_locality() {
    let mut cfg = small_config(3);
    cfg.hidden_h = 4;
    let mut model = DgNcdeModel::new(cfg, 1).unwrap();
    let mut rng = SeededRng::new(2);
    let h = random_matrix(&mut rng, 3, 4);
    assert_eq!(model.spatial_field(&h).unwrap().shape(), (3, 8));

    model.params_mut().node_embeddings.fill(0.0);
    let base = model.spatial_field(&h).unwrap();
    let mut h2 = h.clone();
    for c in 0..4 {
        h2[(2, c)] += 1.5;
    }
    let moved = model.spatial_field(&h2).unwrap();
    assert_eq!(base.row(0), moved.row(0));
    assert_eq!(base.row(1), moved.row(1));
    assert_ne!(base.row(2), moved.row(2));

    assert!(model.spatial_field(&Matrix::zeros(2, 4)).is_err());
}

#[test]
fn spatial_field_is_permutation_equivariant_on_complete_graph() {
    let mut model = DgNcdeModel::new(small_config(2), 3).unwrap();
    let e = &mut model.params_mut().node_embeddings;
    let first: Vec<f64> = e.row(0).to_vec();
    e.row_mut(1).copy_from_slice(&first);
    let mut rng = SeededRng::new(5);
    let h = random_matrix(&mut rng, 2, 4);
    let mut swapped = h.clone();
    swapped.row_mut(0).copy_from_slice(h.row(1));
    swapped.row_mut(1).copy_from_slice(h.row(0));
    let a = model.spatial_field(&h).unwrap();
    let b = model.spatial_field(&swapped).unwrap();
    for c in 0..a.cols() {
        assert!((a[(0, c)] - b[(1, c)]).abs() < 1e-14);
        assert!((a[(1, c)] - b[(0, c)]).abs() < 1e-14);
    }
}

#[test]
fn temporal_field_shape_and_node_independence() {
    let model = DgNcdeModel::new(small_config(3), 7).unwrap();
    let mut rng = SeededRng::new(8);
    let z = random_matrix(&mut rng, 3, 3);
    let base = model.temporal_field(&z).unwrap();
    assert_eq!(base.shape(), (3, 3 * 4));
    let mut z2 = z.clone();
    z2[(1, 0)] += 2.0;
    let moved = model.temporal_field(&z2).unwrap();
    assert_eq!(base.row(0), moved.row(0));
    assert_eq!(base.row(2), moved.row(2));
    assert_ne!(base.row(1), moved.row(1));
}

/// Standalone single-series NCDE field evaluated without the tape.
fn plain_stack(stack: &FcStack<Matrix>, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, l) in stack.layers.iter().enumerate() {
        let mut next = l.bias.as_slice().to_vec();
        for (k, &hk) in h.iter().enumerate() {
            for (j, o) in next.iter_mut().enumerate() {
                *o += hk * l.weight[(k, j)];
            }
        }
        if i + 1 < stack.layers.len() {
            next.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = next;
    }
    h
}

#[test]
fn single_node_temporal_field_matches_plain_ncde() {
    let model = DgNcdeModel::new(small_config(1), 9).unwrap();
    let z = Matrix::from_rows(&[&[0.3, -0.7, 1.1]]);
    let got = model.temporal_field(&z).unwrap();
    let expected = plain_stack(&model.params().temporal[0], z.row(0));
    for (g, e) in got.row(0).iter().zip(&expected) {
        assert!((g - e).abs() < 1e-14);
    }
}

#[test]
fn zero_fields_freeze_the_state() {
    let mut model = DgNcdeModel::new(small_config(3), 11).unwrap();
    zero_fields(&mut model);
    let w = sine_window(3, 5, 0.2);
    let path = model.path(&w).unwrap();
    let state = model.integrate(&path).unwrap();
    // Initial values computed by hand from the first window row.
    let p = model.params();
    for i in 0..3 {
        let x0 = [w.values[(0, i)], 0.0];
        let h0: Vec<f64> = (0..4)
            .map(|j| p.init_hidden.bias.as_slice()[j] + x0[0] * p.init_hidden.weight[(0, j)] + x0[1] * p.init_hidden.weight[(1, j)])
            .collect();
        for j in 0..4 {
            assert!((state.h[(i, j)] - h0[j]).abs() < 1e-14);
        }
    }
}

#[test]
fn constant_path_without_time_channel_is_frozen() {
    let mut cfg = small_config(2);
    cfg.include_time_channel = false;
    let model = DgNcdeModel::new(cfg.clone(), 12).unwrap();
    let mut w = sine_window(2, 5, 0.0);
    w.values.fill(0.4);
    let path = model.path(&w).unwrap();
    let state = model.integrate(&path).unwrap();

    let mut frozen = model.clone();
    zero_fields(&mut frozen);
    let expected = frozen.integrate(&path).unwrap();
    assert_eq!(state, expected);

    // With the time channel on, the same constant path does move the state.
    cfg.include_time_channel = true;
    let timed = DgNcdeModel::new(cfg, 12).unwrap();
    let moving = timed.integrate(&timed.path(&w).unwrap()).unwrap();
    let mut timed_frozen = timed.clone();
    zero_fields(&mut timed_frozen);
    assert_ne!(moving, timed_frozen.integrate(&timed.path(&w).unwrap()).unwrap());
}

#[test]
fn zero_head_weights_forecast_the_bias() {
    let mut model = DgNcdeModel::new(small_config(3), 13).unwrap();
    zero_fields(&mut model);
    for (i, l) in model.params_mut().head.iter_mut().enumerate() {
        l.weight.fill(0.0);
        l.bias.fill(i as f64 - 0.5);
    }
    let y = model.forecast(&sine_window(3, 5, 1.0)).unwrap();
    assert_eq!(y, vec![-0.5, 0.5, 1.5]);
}

#[test]
fn forecast_is_deterministic_and_batch_consistent() {
    let model = DgNcdeModel::new(small_config(3), 14).unwrap();
    let windows: Vec<Window> = (0..5).map(|k| sine_window(3, 5, k as f64)).collect();
    let a = model.forecast(&windows[2]).unwrap();
    let b = model.forecast(&windows[2]).unwrap();
    assert_eq!(a, b);
    let batch = model.forecast_batch(&windows).unwrap();
    for (k, w) in windows.iter().enumerate() {
        let single = model.forecast(w).unwrap();
        for i in 0..3 {
            assert!((batch[k][i] - single[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn window_shape_is_checked() {
    let model = DgNcdeModel::new(small_config(3), 14).unwrap();
    assert!(model.forecast(&sine_window(2, 5, 0.0)).is_err());
    assert!(model.forecast(&sine_window(3, 4, 0.0)).is_err());
}

#[test]
fn masking_a_channel_keeps_forecasts_finite() {
    let model = DgNcdeModel::new(small_config(3), 15).unwrap();
    let mut w = sine_window(3, 5, 0.3);
    let base = model.forecast(&w).unwrap();
    for r in 0..5 {
        w.mask.set(r, 1, false);
    }
    let masked = model.forecast(&w).unwrap();
    assert!(masked.iter().all(|v| v.is_finite()));
    assert!(base.iter().zip(&masked).all(|(a, b)| (a - b).abs().is_finite()));
}

#[test]
fn divergence_is_reported_with_step() {
    let mut model = DgNcdeModel::new(small_config(2), 16).unwrap();
    for l in &mut model.params_mut().spatial_out.layers {
        l.bias.fill(1e300);
    }
    for s in &mut model.params_mut().temporal {
        for l in &mut s.layers {
            l.weight.fill(1e200);
        }
    }
    match model.forecast(&sine_window(2, 5, 0.0)) {
        Err(Error::Divergence { step, .. }) => assert!(step < model.config().solver_steps()),
        other => panic!("expected divergence, got {other:?}"),
    }
}

fn loss_on(tape: &mut Tape, p: &Parameters<Var>, cfg: &ModelConfig, paths: &[WindowPath], targets: &Matrix) -> Result<Var> {
    let y = forward(tape, p, cfg, paths)?;
    let t = tape.constant(targets.clone());
    let d = tape.sub(y, t)?;
    let d = tape.abs(d);
    Ok(tape.mean(d))
}

#[test]
fn every_parameter_group_receives_gradient() {
    let cfg = small_config(3);
    let model = DgNcdeModel::new(cfg.clone(), 17).unwrap();
    let paths: Vec<WindowPath> = (0..4).map(|k| model.path(&sine_window(3, 5, k as f64)).unwrap()).collect();
    let targets = Matrix::filled(12, 1, 3.0);
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, true);
    let loss = loss_on(&mut tape, &p, &cfg, &paths, &targets).unwrap();
    tape.backward(loss).unwrap();
    let grads = p.map(|v| tape.grad(*v));
    for group in ["embeddings", "spatial", "temporal", "init", "head"] {
        let max = grads.grouped().iter().filter(|(g, _)| *g == group).map(|(_, m)| m.max_abs()).fold(0.0, f64::max);
        assert!(max > 0.0, "group {group} received no gradient");
    }
}

#[test]
fn full_forward_gradients_match_finite_differences() {
    let mut cfg = small_config(2);
    cfg.solver = Solver::Euler;
    cfg.steps_per_unit = 1;
    let model = DgNcdeModel::new(cfg.clone(), 18).unwrap();
    let paths: Vec<WindowPath> = (0..3).map(|k| model.path(&sine_window(2, 5, 0.5 * k as f64)).unwrap()).collect();
    let targets = Matrix::filled(6, 1, 2.0);
    let flat: Vec<Matrix> = model.params().iter().cloned().collect();
    let report = grad_check(
        |tape, vars| {
            let mut it = vars.iter().copied();
            let bound = model.params().map(|_| it.next().unwrap());
            loss_on(tape, &bound, &cfg, &paths, &targets)
        },
        &flat,
        1e-5,
        usize::MAX,
        1e-6,
        1,
    )
    .unwrap();
    assert!(report.checked > 100);
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

#[test]
fn checkpoint_layout_round_trips_through_flat_list() {
    let cfg = small_config(3);
    let model = DgNcdeModel::new(cfg.clone(), 19).unwrap();
    let flat: Vec<Matrix> = model.params().iter().cloned().collect();
    let rebuilt = Parameters::from_flat(&cfg, flat.clone()).unwrap();
    assert_eq!(&rebuilt, model.params());
    let mut short = flat;
    short.pop();
    assert!(Parameters::from_flat(&cfg, short).is_err());
}

#[test]
fn shared_temporal_stack_has_one_entry() {
    let mut cfg = small_config(4);
    cfg.shared_temporal = true;
    let model = DgNcdeModel::new(cfg, 20).unwrap();
    assert_eq!(model.params().temporal.len(), 1);
    assert!(model.forecast(&sine_window(4, 5, 0.0)).unwrap().iter().all(|v| v.is_finite()));
}
