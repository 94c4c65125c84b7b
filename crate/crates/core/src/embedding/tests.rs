use super::*;
use crate::nn::linalg::norm;
use crate::testutil::{central_difference, max_relative_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape(h: usize, w: usize, c: usize) -> ImageShape {
    ImageShape {
        height: h,
        width: w,
        channels: c,
    }
}

fn random_image(s: ImageShape, rng: &mut ChaCha8Rng) -> Image {
    Image::new(s, (0..s.len()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn encoder_output_is_unit_norm_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = shape(16, 12, 3);
    let params = EmbeddingParams::new(s, 5, &[4, 4, 4], &mut rng).unwrap();
    for _ in 0..5 {
        let im = random_image(s, &mut rng);
        let z = params.encode(&im).unwrap();
        assert_eq!(z.dim(), 5);
        assert!((norm(z.as_slice()) - 1.0).abs() <= 1e-6);
        assert_eq!(params.encode(&im).unwrap(), z);
    }
}

#[test]
fn single_linear_encoder_yields_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = EmbeddingParams::new(shape(1, 1, 1), 1, &[], &mut rng).unwrap();
    let lin = params.encoder_linear_mut();
    lin.weight = vec![3.0];
    lin.bias = vec![0.0];
    let im = Image::filled(shape(1, 1, 1), 0.5);
    assert_eq!(params.encode(&im).unwrap().as_slice(), &[1.0]);
}

#[test]
fn zero_pre_norm_vector_stays_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = EmbeddingParams::new(shape(1, 1, 1), 2, &[], &mut rng).unwrap();
    params.encoder_linear_mut().weight.fill(0.0);
    params.encoder_linear_mut().bias.fill(0.0);
    let z = params.encode(&Image::filled(shape(1, 1, 1), 0.3)).unwrap();
    assert!(z.as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn shape_mismatch_is_a_configuration_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = EmbeddingParams::new(shape(8, 8, 1), 3, &[2], &mut rng).unwrap();
    let im = Image::filled(shape(8, 8, 3), 0.5);
    assert!(matches!(params.encode(&im), Err(Error::Config(_))));
    assert!(matches!(params.decode(&[1.0, 0.0]), Err(Error::Config(_))));
}

#[test]
fn decoder_output_has_image_shape_and_bounded_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = shape(10, 7, 3);
    let params = EmbeddingParams::new(s, 4, &[3, 5, 2], &mut rng).unwrap();
    let im = random_image(s, &mut rng);
    let z = params.encode(&im).unwrap();
    let recon = params.decode(z.as_slice()).unwrap();
    assert_eq!(recon.shape(), s);
    assert!(recon.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(params.decode(z.as_slice()).unwrap(), recon);
}

#[test]
fn autoencoder_loss_examples() {
    let s = shape(2, 2, 1);
    let a = Image::new(s, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    assert_eq!(reconstruction_error(&a, &a), 0.0);
    let b = Image::new(s, vec![0.1, 0.7, 0.3, 0.4]).unwrap();
    assert!((reconstruction_error(&a, &b) - 0.5).abs() < 1e-7);
}

#[test]
fn contrastive_loss_examples() {
    let z = [1.0, 0.0];
    // identical latents: only the margin remains
    assert_eq!(contrastive_from_latents(&z, &z, &z, 0.5), 0.5);
    // positive at 0.1, negative at 0.3
    let loss = contrastive_from_latents(&[0.0, 0.0], &[0.1, 0.0], &[0.0, 0.3], 0.5);
    assert!((loss - 0.3).abs() < 1e-12);
    // negative beyond the margin, positive coincident
    assert_eq!(contrastive_from_latents(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.6], 0.5), 0.0);
}

#[test]
fn total_loss_is_sum_of_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = shape(4, 4, 1);
    let params = EmbeddingParams::new(s, 2, &[2, 2], &mut rng).unwrap();
    let ims: Vec<Image> = (0..3).map(|_| random_image(s, &mut rng)).collect();
    let t = Triplet::new(&ims[0], &ims[1], &ims[2]);
    let total = loss_total(&t, &params, 0.5).unwrap();
    let parts = loss_autoencoder(&ims[0], &params).unwrap() + loss_contrastive(&t, &params, 0.5).unwrap();
    assert!((total - parts).abs() < 1e-12);
    assert!(total >= 0.0);
    let (batched, _) = loss_and_grad(&params, &[t], 0.5, LossTerms::TOTAL).unwrap();
    assert!((batched - total).abs() < 1e-12);
    assert!(loss_contrastive(&t, &params, 0.0).is_err());
}

fn gradient_error(terms: LossTerms, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = shape(4, 4, 1);
    let params = EmbeddingParams::new(s, 2, &[2, 2, 2], &mut rng).unwrap();
    let ims: Vec<Image> = (0..6).map(|_| random_image(s, &mut rng)).collect();
    let batch = [Triplet::new(&ims[0], &ims[1], &ims[2]), Triplet::new(&ims[3], &ims[4], &ims[5])];
    // a large margin keeps the hinge active so both branches are exercised
    let alpha = 1.9;
    let (_, grads) = loss_and_grad(&params, &batch, alpha, terms).unwrap();
    let flat = params.flatten();
    let numeric = central_difference(
        |p| {
            let mut q = params.clone();
            q.load_flat(p).unwrap();
            loss_and_grad(&q, &batch, alpha, terms).unwrap().0
        },
        &flat,
        1e-5,
    );
    max_relative_error(&grads.flatten(), &numeric, 1e-6)
}

#[test]
fn autoencoder_gradient_matches_finite_differences() {
    let err = gradient_error(LossTerms::AUTOENCODER, 11);
    assert!(err <= 1e-3, "max relative error {err}");
}

#[test]
fn total_gradient_matches_finite_differences() {
    let err = gradient_error(LossTerms::TOTAL, 12);
    assert!(err <= 1e-3, "max relative error {err}");
}

#[test]
fn hinge_deadzone_contributes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = shape(4, 4, 1);
    let params = EmbeddingParams::new(s, 3, &[2], &mut rng).unwrap();
    let ims: Vec<Image> = (0..3).map(|_| random_image(s, &mut rng)).collect();
    let t = Triplet::new(&ims[0], &ims[1], &ims[2]);
    let z = params.encode_batch(&ims).unwrap();
    let dn = distance(z[0].as_slice(), z[2].as_slice());
    // alpha below the negative distance: the negative branch is inactive
    let alpha = dn * 0.5;
    let (_, with_neg) = loss_and_grad(&params, &[t], alpha, LossTerms::CONTRASTIVE).unwrap();
    // replacing the negative by any other far frame must not change the gradient
    let t2 = Triplet::new(&ims[0], &ims[1], &ims[1]);
    let dn2 = distance(z[0].as_slice(), z[1].as_slice());
    if dn2 >= alpha {
        let (_, other) = loss_and_grad(&params, &[t2], alpha, LossTerms::CONTRASTIVE).unwrap();
        assert_eq!(with_neg.flatten(), other.flatten());
    }
    let lc = loss_contrastive(&t, &params, alpha).unwrap();
    assert!((lc - distance(z[0].as_slice(), z[1].as_slice())).abs() < 1e-12);
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = EmbeddingParams::new(shape(8, 6, 3), 4, &[3, 2], &mut rng).unwrap();
    let ck = params.to_checkpoint(0.5).unwrap();
    let ck = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    let (back, alpha) = EmbeddingParams::from_checkpoint(&ck).unwrap();
    assert_eq!(alpha, 0.5);
    assert_eq!(back, params);
}

#[test]
fn parameter_count_is_a_function_of_geometry() {
    let count = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingParams::new(shape(64, 64, 3), 20, &[16, 32, 32], &mut rng)
            .unwrap()
            .num_params()
    };
    assert_eq!(count(1), count(2));
    // 3 convs + linear, mirrored
    let enc = (27 * 16 + 16) + (144 * 32 + 32) + (288 * 32 + 32) + (8 * 8 * 32 * 20 + 20);
    let dec = (20 * 2048 + 2048) + (32 * 288 + 32) + (32 * 144 + 16) + (16 * 27 + 3);
    assert_eq!(count(1), enc + dec);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn encodings_lie_on_the_sphere(seed in 0u64..10_000, fill in 0.0f32..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = shape(8, 8, 1);
        let params = EmbeddingParams::new(s, 3, &[2, 2], &mut rng).unwrap();
        let mut im = random_image(s, &mut rng);
        im.set(0, 0, 0, fill);
        let other = random_image(s, &mut rng);
        let z = params.encode(&im).unwrap();
        let w = params.encode(&other).unwrap();
        prop_assert!((norm(z.as_slice()) - 1.0).abs() <= 1e-6);
        prop_assert!(distance(z.as_slice(), w.as_slice()) <= 2.0 + 1e-12);
    }
}
