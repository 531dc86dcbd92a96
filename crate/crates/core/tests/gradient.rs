use autobias::classifier::cnn::cross_entropy;
use autobias::classifier::{Architecture, Workspace};
use autobias::Cnn64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(params: &Cnn64, input: &[f64], label: usize) -> f64 {
    cross_entropy(params.forward(input).unwrap(), label).0
}

#[test]
fn flatten_is_64_by_28_by_28() {
    let arch = Architecture::STANDARD;
    assert_eq!(arch.pooled_shape(2), (64, 28, 28));
    assert_eq!(arch.flatten_len(), 64 * 28 * 28);
    let params = Cnn64::kaiming(arch, 1).unwrap();
    let mut ws = Workspace::new(&arch);
    params.forward_with(&vec![0.5; arch.input_len()], &mut ws).unwrap();
    assert_eq!(ws.pooled_shape(2), (64, 28, 28));
    assert_eq!(ws.flattened_len(), 50_176);
    assert_eq!(arch.dense_dims()[0], (50_176, 32));
}

/// Analytic gradients of the full-size network against central differences.
#[test]
fn backprop_matches_finite_differences() {
    let arch = Architecture::STANDARD;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params = Cnn64::kaiming(arch, 3).unwrap();
    // Sparse, event-frame-like input in [0, 1].
    let input: Vec<f64> = (0..arch.input_len())
        .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.0..1.0) } else { 0.5 })
        .collect();
    let label = 1;
    let mut grads = Cnn64::zeros(arch).unwrap();
    let mut ws = Workspace::new(&arch);
    params.loss_and_grad(&input, label, &mut ws, &mut grads).unwrap();

    let names = Cnn64::tensor_names();
    // Small enough that a perturbation rarely crosses a ReLU or pooling kink.
    let h = 1e-6;
    let mut checked = 0;
    for (t, name) in names.iter().enumerate() {
        let len = grads.tensors()[t].len();
        // Prefer entries with a gradient large enough for a meaningful ratio.
        let mut tried = 0;
        let mut kept = 0;
        while kept < 3 && tried < 200 {
            tried += 1;
            let i = rng.gen_range(0..len);
            let analytic = grads.tensors()[t][i];
            if analytic.abs() < 1e-6 {
                continue;
            }
            let mut plus = params.clone();
            plus.tensors_mut()[t][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t][i] -= h;
            let numeric = (loss(&plus, &input, label) - loss(&minus, &input, label)) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            assert!(rel <= 1e-3, "{name}[{i}]: analytic {analytic:e} numeric {numeric:e} rel {rel:e}");
            kept += 1;
        }
        checked += kept;
    }
    assert!(checked >= 20, "only {checked} parameters had usable gradients");
}
