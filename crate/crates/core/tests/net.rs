use basisop::dynamics::MapDescriptor;
use basisop::function_space::{Grid, TrigPoly, TrigEvaluator};
use basisop::galerkin::{galerkin_operator, BasisSet, FourierBasis, TransferQuadrature};
use basisop::net::checkpoint::{Checkpoint, RngState};
use basisop::net::*;
use basisop::Error;
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model(weights: LossWeights, k: usize, seed: u64) -> BasisOperatorModel<f64> {
    let arch = ArchitectureSpec::new(2, vec![8], 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m: BasisOperatorModel<f64> = init_model(&arch, weights, k, &mut rng).unwrap();
    // non-trivial biases and latent map so every path carries signal
    for l in &mut m.params.layers {
        l.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    m.params.latent.mapv_inplace(|v| v + rng.random_range(-0.4..0.4));
    m
}

fn random_block(rng: &mut ChaCha8Rng, n: usize, b: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, b), |_| rng.random_range(-1.0..1.0))
}

/// Relative gap between analytic and central-difference gradients, with the
/// denominator floored so entries near zero are judged absolutely.
fn gradient_gap(model: &BasisOperatorModel<f64>, grid: &Grid, batch: &BatchView<f64>) -> f64 {
    const H: f64 = 1e-6;
    const FLOOR: f64 = 1e-4;
    let emb = grid.embedded.view();
    let (_, grads) = model.backward(emb, batch).unwrap();
    let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    let mut flat = 0;
    let counts: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in counts.iter().enumerate() {
        for i in 0..len {
            let orig = probe.params.tensors()[ti][i];
            probe.params.tensors_mut()[ti][i] = orig + H;
            let plus = probe.compute_loss(grid, batch).unwrap().total;
            probe.params.tensors_mut()[ti][i] = orig - H;
            let minus = probe.compute_loss(grid, batch).unwrap().total;
            probe.params.tensors_mut()[ti][i] = orig;
            let fd = (plus - minus) / (2.0 * H);
            let a = analytic[flat];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(FLOOR));
            flat += 1;
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_per_term() {
    let grid = Grid::new(1, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let inputs = random_block(&mut rng, 16, 5);
    let targets = random_block(&mut rng, 16, 5);
    let iterates = random_block(&mut rng, 16, 5);
    let batch = BatchView {
        inputs: inputs.view(),
        targets: targets.view(),
        iterates: Some(iterates.view()),
    };
    let toggles = [
        ("E1", LossWeights { beta1: 1.0, beta2: 0.0, beta3: 0.0, beta_p1: 0.0 }),
        ("E2", LossWeights { beta1: 0.0, beta2: 1.0, beta3: 0.0, beta_p1: 0.0 }),
        ("E3", LossWeights { beta1: 0.0, beta2: 0.0, beta3: 1.0, beta_p1: 0.0 }),
        ("Ep1", LossWeights { beta1: 0.0, beta2: 0.0, beta3: 0.0, beta_p1: 1.0 }),
        ("all", LossWeights { beta1: 1.0, beta2: 0.6, beta3: 0.7, beta_p1: 0.3 }),
    ];
    for (name, w) in toggles {
        for seed in 0..3 {
            let model = tiny_model(w, 2, seed);
            let gap = gradient_gap(&model, &grid, &batch);
            assert!(gap <= 1e-5, "{name} seed {seed}: relative gap {gap:e}");
        }
    }
}

#[test]
fn latent_gradient_matches_least_squares_form() {
    let grid = Grid::new(1, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = tiny_model(LossWeights { beta1: 1.0, beta2: 0.0, beta3: 0.0, beta_p1: 0.0 }, 0, 9);
    let x = random_block(&mut rng, 16, 4);
    let y = random_block(&mut rng, 16, 4);
    let batch = BatchView { inputs: x.view(), targets: y.view(), iterates: None };
    let (_, grads) = model.backward(grid.embedded.view(), &batch).unwrap();
    let phi = model.encode_basis(&grid).unwrap();
    let g = &model.params.latent;
    let (n, nb) = phi.dim();
    // d/dG of (1/B) Σ_b ‖y_b − Φ G c_b‖ / ‖y_b‖, written with explicit sums
    let mut expected = Array2::<f64>::zeros((nb, nb));
    for b in 0..4 {
        let c: Vec<f64> = (0..nb).map(|j| (0..n).map(|i| phi[[i, j]] * x[[i, b]]).sum::<f64>() / n as f64).collect();
        let pred: Vec<f64> = (0..n)
            .map(|i| (0..nb).map(|j| phi[[i, j]] * (0..nb).map(|l| g[[j, l]] * c[l]).sum::<f64>()).sum())
            .collect();
        let r: Vec<f64> = (0..n).map(|i| y[[i, b]] - pred[i]).collect();
        let nr = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = (0..n).map(|i| y[[i, b]] * y[[i, b]]).sum::<f64>().sqrt();
        for j in 0..nb {
            let phit_r: f64 = (0..n).map(|i| phi[[i, j]] * r[i]).sum();
            for l in 0..nb {
                expected[[j, l]] -= phit_r * c[l] / (4.0 * nr * ny);
            }
        }
    }
    for (a, e) in grads.latent.iter().zip(expected.iter()) {
        assert!((a - e).abs() <= 1e-8 * e.abs().max(1e-12), "{a} vs {e}");
    }
}

#[test]
fn zero_loss_weights_give_zero_gradients() {
    let grid = Grid::new(1, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = tiny_model(LossWeights { beta1: 0.0, beta2: 0.0, beta3: 0.0, beta_p1: 0.0 }, 0, 3);
    let x = random_block(&mut rng, 16, 3);
    let batch = BatchView { inputs: x.view(), targets: x.view(), iterates: None };
    let (loss, grads) = model.backward(grid.embedded.view(), &batch).unwrap();
    assert_eq!(loss.total, 0.0);
    assert!(grads.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
}

#[test]
fn constant_and_identity_networks() {
    let grid = Grid::new(1, 100).unwrap();
    let arch = ArchitectureSpec::new(2, vec![], 2).unwrap();
    let mut model: BasisOperatorModel<f64> =
        init_model(&arch, LossWeights::default(), 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    model.params.layers[0].weight = Array2::eye(2);
    let basis = model.encode_basis(&grid).unwrap();
    for (i, p) in grid.points.iter().enumerate() {
        let basisop::dynamics::StatePoint::Angle(t) = *p else { unreachable!() };
        assert!((basis[[i, 0]] - t.cos()).abs() < 1e-15);
        assert!((basis[[i, 1]] - t.sin()).abs() < 1e-15);
    }

    let arch = ArchitectureSpec::new(2, vec![6, 6], 4).unwrap();
    let mut model: BasisOperatorModel<f64> =
        init_model(&arch, LossWeights::default(), 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    model.params.layers[2].weight.fill(0.0);
    model.params.layers[2].bias = Array1::from(vec![0.5, -1.0, 2.0, 0.0]);
    let basis = model.encode_basis(&grid).unwrap();
    for row in basis.axis_iter(Axis(0)) {
        assert_eq!(row.to_vec(), vec![0.5, -1.0, 2.0, 0.0]);
    }
}

#[test]
fn batched_encoder_matches_pointwise_oracle() {
    let grid = Grid::new(2, 10).unwrap();
    let arch = ArchitectureSpec::new(4, vec![32, 32, 32], 7).unwrap();
    let model: BasisOperatorModel<f32> =
        init_model(&arch, LossWeights::default(), 0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let basis = model.encode_basis(&grid).unwrap();
    let layers = &model.params.layers;
    for (i, p) in grid.points.iter().enumerate() {
        let mut x: Vec<f64> = p.embed();
        for (li, l) in layers.iter().enumerate() {
            let (fan_in, fan_out) = l.weight.dim();
            let mut z = vec![0.0f64; fan_out];
            for o in 0..fan_out {
                z[o] = l.bias[o] as f64 + (0..fan_in).map(|j| x[j] * l.weight[[j, o]] as f64).sum::<f64>();
                if li + 1 < layers.len() {
                    z[o] = z[o].max(0.0);
                }
            }
            x = z;
        }
        for j in 0..7 {
            assert!((basis[[i, j]] as f64 - x[j]).abs() <= 1e-6 * (1.0 + x[j].abs()));
        }
    }
    // evaluation away from the grid agrees with the grid path
    let at_points = model.eval_points(&grid.points).unwrap();
    assert!(at_points.iter().zip(basis.iter()).all(|(a, &b)| (*a - b as f64).abs() < 1e-7));
}

#[test]
fn block_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // QR-orthonormalized synthetic basis, scaled so ΦᵀΦ/n = I
    let n = 40;
    let raw = random_block(&mut rng, n, 5);
    let q = nalgebra::DMatrix::from_fn(n, 5, |i, j| raw[[i, j]]).qr().q();
    let phi = Array2::from_shape_fn((n, 5), |(i, j)| q[(i, j)] * (n as f64).sqrt());
    let coeffs = random_block(&mut rng, 5, 3);
    let g = phi.dot(&coeffs);
    let c = project(&phi, g.view()).unwrap();
    assert!((&c - &coeffs).iter().all(|v| v.abs() < 1e-12));
    let back = reconstruct(&phi, &c).unwrap();
    assert!((&back - &g).iter().all(|v| v.abs() < 1e-10));
    assert!(project(&phi, Array2::zeros((n, 2)).view()).unwrap().iter().all(|&v| v == 0.0));
    assert!(matches!(project(&phi, Array2::zeros((n + 1, 2)).view()), Err(Error::GridMismatch { .. })));

    let gm = random_block(&mut rng, 5, 5);
    let a = latent_apply(&gm, &c).unwrap();
    for b in 0..3 {
        for i in 0..5 {
            let naive: f64 = (0..5).map(|j| gm[[i, j]] * c[[j, b]]).sum();
            assert!((a[[i, b]] - naive).abs() < 1e-13);
        }
    }
    assert_eq!(latent_apply(&Array2::eye(5), &c).unwrap(), c);

    // forward is the explicit composition
    let arch = ArchitectureSpec::new(2, vec![8], 5).unwrap();
    let model: BasisOperatorModel<f64> =
        init_model(&arch, LossWeights::default(), 0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let out = model.forward(&phi, g.view()).unwrap();
    let explicit = reconstruct(&phi, &latent_apply(model.latent(), &project(&phi, g.view()).unwrap()).unwrap()).unwrap();
    assert_eq!(out, explicit);
    let zero = Array2::<f64>::zeros((n, 5));
    assert!(model.forward(&zero, g.view()).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn exact_invariant_basis_has_zero_error() {
    let grid = Grid::new(1, 100).unwrap();
    let map = MapDescriptor::circle_rotation(-1.0);
    let fourier = FourierBasis::new(1, 19).unwrap();
    let quad = TransferQuadrature::new(&map, 100).unwrap();
    let latent = galerkin_operator(&quad, &fourier).unwrap().matrix;
    let basis = fourier.sample(&grid).unwrap();
    let arch = ArchitectureSpec::new(2, vec![4], 19).unwrap();
    let mut model: BasisOperatorModel<f64> =
        init_model(&arch, LossWeights::default(), 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    model.params.latent = latent;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eval = TrigEvaluator::new(&grid.points, 9);
    let mut inputs = Array2::zeros((100, 6));
    let mut targets = Array2::zeros((100, 6));
    for b in 0..6 {
        let p = TrigPoly::sample(&mut rng, 1, 9).unwrap();
        inputs.column_mut(b).assign(&eval.eval(&p));
        let lg = basisop::function_space::transfer_apply(&map, &p, &grid, 1).unwrap();
        targets.column_mut(b).assign(&lg.values);
    }
    let batch = BatchView { inputs: inputs.view(), targets: targets.view(), iterates: None };
    let loss = model.loss_with_basis(&basis, &batch).unwrap();
    assert!(loss.e1 < 1e-12, "{loss:?}");

    let zero = Array2::zeros((100, 19));
    let loss = model.loss_with_basis(&zero, &batch).unwrap();
    assert_eq!(loss.e1, 1.0);
    assert_eq!(loss.e2, 0.0);

    let mut bad = targets.clone();
    bad.column_mut(0).fill(0.0);
    let batch = BatchView { inputs: inputs.view(), targets: bad.view(), iterates: None };
    assert!(matches!(model.loss_with_basis(&basis, &batch), Err(Error::ZeroDenominator)));
}

#[test]
fn missing_iterates_are_reported() {
    let grid = Grid::new(1, 16).unwrap();
    let model = tiny_model(LossWeights::default(), 2, 0);
    let x = Array2::from_elem((16, 2), 1.0);
    let batch = BatchView { inputs: x.view(), targets: x.view(), iterates: None };
    assert!(model.compute_loss(&grid, &batch).is_err());
    let no_e3 = tiny_model(LossWeights::default(), 0, 0);
    assert_eq!(no_e3.compute_loss(&grid, &batch).unwrap().e3, 0.0);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let arch = ArchitectureSpec::new(4, vec![16, 8], 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    rng.set_stream(3);
    let mut model: BasisOperatorModel<f32> = init_model(&arch, LossWeights::default(), 2, &mut rng).unwrap();
    let mut opt = AdamState::new(AdamConfig::default(), &model.params);
    let mut grads = Params::zeros_like(&model.params);
    for t in grads.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    opt.update(&mut model.params, &grads, 1.0).unwrap();
    let ck = Checkpoint {
        model,
        optimizer: opt,
        config_hash: [7; 32],
        rng: RngState::capture(&rng),
        epoch: 12,
        best_epoch: 10,
        best_validation: 0.125,
    };
    let path = dir.path().join("model.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), ck.to_bytes());
    let mut resumed = back.rng.restore();
    assert_eq!(resumed.next_u64(), rng.next_u64());

    assert!(matches!(Checkpoint::<f64>::load(&path), Err(Error::Format(_))));
    let mut bytes = ck.to_bytes();
    bytes[100] ^= 1;
    assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes), Err(Error::Format(_))));
    assert!(Checkpoint::<f32>::from_bytes(&bytes[..20]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_is_linear(seed in 0u64..10_000, alpha in -3.0f64..3.0) {
        let grid = Grid::new(1, 32).unwrap();
        let arch = ArchitectureSpec::new(2, vec![16], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model: BasisOperatorModel<f32> = init_model(&arch, LossWeights::default(), 0, &mut rng).unwrap();
        let basis = model.encode_basis(&grid).unwrap();
        let g1 = Array2::from_shape_fn((32, 1), |_| rng.random_range(-1.0f32..1.0));
        let g2 = Array2::from_shape_fn((32, 1), |_| rng.random_range(-1.0f32..1.0));
        let combo = &g1 * alpha as f32 + &g2;
        let lhs = model.forward(&basis, combo.view()).unwrap();
        let rhs = model.forward(&basis, g1.view()).unwrap() * alpha as f32 + model.forward(&basis, g2.view()).unwrap();
        let scale = lhs.iter().fold(1.0f32, |a, v| a.max(v.abs()));
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((a - b).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn relative_error_is_scale_invariant(seed in 0u64..10_000, c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let grid = Grid::new(1, 24).unwrap();
        let arch = ArchitectureSpec::new(2, vec![8], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model: BasisOperatorModel<f64> =
            init_model(&arch, LossWeights { beta1: 1.0, beta2: 0.0, beta3: 0.0, beta_p1: 0.0 }, 0, &mut rng).unwrap();
        let x = random_block(&mut rng, 24, 2);
        let y = random_block(&mut rng, 24, 2);
        let base = model.compute_loss(&grid, &BatchView { inputs: x.view(), targets: y.view(), iterates: None }).unwrap();
        let (xs, ys) = (&x * c, &y * c);
        let scaled = model.compute_loss(&grid, &BatchView { inputs: xs.view(), targets: ys.view(), iterates: None }).unwrap();
        prop_assert!((base.e1 - scaled.e1).abs() <= 1e-6);
    }
}
