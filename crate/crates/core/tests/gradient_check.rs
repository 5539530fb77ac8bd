//! Analytic gradients of the full training loss against central finite
//! differences, for every activation with and without batch normalization.

use mortality_nas::linalg::Matrix;
use mortality_nas::neural::{Activation, ArchitectureSpec, ClassWeights, Mlp};
use mortality_nas::rng::rng_from;
use proptest::prelude::*;
use rand::Rng as _;

const STEP: f64 = 1e-5;

fn check(activation: Activation, batch_norm: bool, dropout: f64, seed: u64) -> Result<(), TestCaseError> {
    let spec = ArchitectureSpec { hidden_layer_widths: vec![16, 16], activation, dropout_rate: dropout, batch_norm };
    let mut mlp = Mlp::new(spec, 4, seed).unwrap();
    let mut r = rng_from(seed, &[99]);
    // Nonzero shift/scale so batch-norm parameters are exercised away from init.
    for v in mlp.params_mut().iter_mut() {
        *v += r.random_range(-0.2..0.2);
    }
    let rows = 7;
    let x = Matrix::from_vec(rows, 4, (0..rows * 4).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
    let y: Vec<u8> = (0..rows).map(|i| (i % 3 == 0) as u8).collect();
    let w = ClassWeights { negative: 1.0, positive: 2.5 };
    let mask_rng = rng_from(seed, &[7]);

    if activation == Activation::Relu {
        prop_assume!(mlp.min_abs_pre_activation(&x, &mut mask_rng.clone()) > 1e-3);
    }

    let (_, grad, _) = mlp.loss_and_gradient(&x, &y, w, &mut mask_rng.clone()).unwrap();
    for (k, &analytic) in grad.iter().enumerate() {
        let orig = mlp.params()[k];
        mlp.params_mut()[k] = orig + STEP;
        let (up, _, _) = mlp.loss_and_gradient(&x, &y, w, &mut mask_rng.clone()).unwrap();
        mlp.params_mut()[k] = orig - STEP;
        let (down, _, _) = mlp.loss_and_gradient(&x, &y, w, &mut mask_rng.clone()).unwrap();
        mlp.params_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let tol = 1e-4 * analytic.abs().max(numeric.abs()) + 1e-9;
        prop_assert!(
            (analytic - numeric).abs() <= tol,
            "param {k}: analytic {analytic} numeric {numeric} ({activation:?}, bn={batch_norm})"
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn gradients_match_finite_differences(
        act in prop::sample::select(Activation::ALL.to_vec()),
        bn in any::<bool>(),
        dropout in prop::sample::select(vec![0.0, 0.3]),
        seed in 0u64..1_000_000,
    ) {
        check(act, bn, dropout, seed)?;
    }
}

#[test]
fn every_activation_and_norm_combination() {
    for act in Activation::ALL {
        for bn in [false, true] {
            let mut done = false;
            for seed in 0..50 {
                match check(act, bn, 0.2, seed) {
                    Ok(()) => {
                        done = true;
                        break;
                    }
                    Err(TestCaseError::Reject(_)) => continue,
                    Err(e) => panic!("{e}"),
                }
            }
            assert!(done, "no kink-free draw for {act:?}");
        }
    }
}
