use autobias::frame::EventFrame;
use autobias::metrics::{average_gradient, average_gradient_raw};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Literal reading of the metric: build both derivative images first, using
/// `(f[i+1] - f[i-1]) / 2` inside and the one-sided difference on the edges,
/// then average the per-pixel magnitudes.
fn ag_oracle(f: &[Vec<f64>]) -> f64 {
    let (m, n) = (f.len(), f[0].len());
    let d = |lo: f64, hi: f64, span: usize| (hi - lo) / span as f64;
    let mut gx = vec![vec![0.0; n]; m];
    let mut gy = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            gx[i][j] = if j == 0 {
                d(f[i][0], f[i][1], 1)
            } else if j == n - 1 {
                d(f[i][n - 2], f[i][n - 1], 1)
            } else {
                d(f[i][j - 1], f[i][j + 1], 2)
            };
            gy[i][j] = if i == 0 {
                d(f[0][j], f[1][j], 1)
            } else if i == m - 1 {
                d(f[m - 2][j], f[m - 1][j], 1)
            } else {
                d(f[i - 1][j], f[i + 1][j], 2)
            };
        }
    }
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..n {
            sum += (gx[i][j] * gx[i][j] + gy[i][j] * gy[i][j]).sqrt();
        }
    }
    sum / (m * n) as f64
}

fn random_frame(rng: &mut ChaCha8Rng) -> (usize, usize, Vec<f64>) {
    let w = rng.gen_range(3..40);
    let h = rng.gen_range(3..40);
    let data = match rng.gen_range(0..3) {
        // Event-frame-like: sparse integers.
        0 => (0..w * h).map(|_| if rng.gen_bool(0.2) { rng.gen_range(-3..=3) as f64 } else { 0.0 }).collect(),
        1 => (0..w * h).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        _ => (0..w * h).map(|_| rng.gen_range(-1e3..1e3)).collect(),
    };
    (w, h, data)
}

#[test]
fn uniform_frames_have_zero_gradient() {
    for (w, h, v) in [(3, 3, 0.0), (16, 9, 1.0), (128, 128, -2.5), (5, 40, 1e6)] {
        let f = EventFrame::from_data(w, h, vec![v; usize::from(w) * usize::from(h)]);
        assert_eq!(average_gradient::<f64>(&f).unwrap(), 0.0);
    }
}

#[test]
fn gradient_is_absolutely_homogeneous() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (w, h, data) = random_frame(&mut rng);
        let data: Vec<f64> = data.iter().map(|v| v / 100.0).collect();
        let alpha: f64 = rng.gen_range(-10.0..10.0);
        let scaled: Vec<f64> = data.iter().map(|v| alpha * v).collect();
        let base = average_gradient_raw(&data, w, h).unwrap();
        let lhs = average_gradient_raw(&scaled, w, h).unwrap();
        assert!((lhs - alpha.abs() * base).abs() <= 1e-12, "alpha {alpha}: {lhs} vs {}", alpha.abs() * base);
    }
}

#[test]
fn gradient_matches_literal_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..150 {
        let (w, h, data) = random_frame(&mut rng);
        let rows: Vec<Vec<f64>> = data.chunks(w).map(<[f64]>::to_vec).collect();
        let expected = ag_oracle(&rows);
        let got = average_gradient_raw(&data, w, h).unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{w}x{h}: {got} vs {expected}");
    }
}

#[test]
fn single_precision_tracks_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (w, h, data) = random_frame(&mut rng);
    let single: Vec<f32> = data.iter().map(|&v| v as f32).collect();
    let a = f64::from(average_gradient_raw(&single, w, h).unwrap());
    let b = average_gradient_raw(&data, w, h).unwrap();
    assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0));
}
