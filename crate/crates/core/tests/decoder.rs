use dcs_core::conv::{conv2d, dcsconv_forward};
use dcs_core::decoder::{
    dcsd_decode_level, decoder_backward, decoder_forward, feature_to_depth, random_pyramid, DcsdLevelParams, DecoderOptions,
    DecoderParams, DecoderShape, DepthRange, Guidance, LEVELS,
};
use dcs_core::fusion::dcsf_forward;
use dcs_core::geometry::{ScaleConversion, ScaleMap};
use dcs_core::gradcheck::{check_param_grads, check_tensor_grad, FdOptions};
use dcs_core::rng::{uniform_tensor, SeedStream};
use dcs_core::tensor::{resize, ResizeMode};
use dcs_core::{ParamSet, Shape4, Tensor4};

fn toy(seed: u64) -> (Vec<Tensor4>, DecoderParams, Vec<Tensor4>) {
    let streams = SeedStream::new(seed);
    let shape = DecoderShape::uniform(4);
    let params = DecoderParams::random(&mut streams.rng("params"), &shape);
    let pyramid = random_pyramid(&streams, 1, &shape, 16, 16).unwrap();
    let mut rng = streams.rng("prior");
    let prior = pyramid
        .iter()
        .map(|f| uniform_tensor(&mut rng, f.shape().with_channels(1), 0.5, 20.0))
        .collect();
    (pyramid, params, prior)
}

#[test]
fn level_matches_composition() {
    let mut rng = SeedStream::new(80).rng("compose");
    let p = DcsdLevelParams::random(&mut rng, 3, 2, 4);
    let prev = uniform_tensor(&mut rng, Shape4::new(2, 3, 3, 4), -1.0, 1.0);
    let enc = uniform_tensor(&mut rng, Shape4::new(2, 2, 6, 8), -1.0, 1.0);
    let conv = ScaleConversion::standard(1.0).unwrap();
    let low = ScaleMap::new(uniform_tensor(&mut rng, Shape4::new(2, 1, 3, 4), 1.0, 9.0), conv).unwrap();
    let high = ScaleMap::new(uniform_tensor(&mut rng, Shape4::new(2, 1, 6, 8), 1.0, 9.0), conv).unwrap();
    let range = DepthRange::default();

    let fs_fdec = dcsf_forward(
        &dcsconv_forward(&prev, &p.dec_dcsc, &low).unwrap(),
        &conv2d(&prev, &p.dec_conv).unwrap(),
        &low,
        &p.dec_fuse,
    )
    .unwrap();
    let fs_enc = dcsf_forward(&dcsconv_forward(&enc, &p.enc_dcsc, &high).unwrap(), &enc, &high, &p.enc_fuse).unwrap();
    let up = resize(&fs_fdec, 6, 8, ResizeMode::Nearest).unwrap();
    let merged = Tensor4::concat_channels(&[&up, &fs_enc]).unwrap();
    let fs_dec = dcsf_forward(
        &dcsconv_forward(&merged, &p.merge_dcsc, &high).unwrap(),
        &conv2d(&merged, &p.merge_conv).unwrap(),
        &high,
        &p.merge_fuse,
    )
    .unwrap();
    let f_dec = conv2d(&fs_dec, &p.squeeze).unwrap();
    let depth = feature_to_depth(&f_dec, &p.depth_head, &range).unwrap();

    let (f, d) = dcsd_decode_level(&prev, &enc, &low, &high, &p, &range).unwrap();
    assert!(f.bitwise_eq(&f_dec));
    assert!(d.bitwise_eq(&depth));
}

/// Mean of the finest depth map, checked on a seeded subset of every tensor.
/// Scale maps come from a fixed prior so perturbations leave the guidance unchanged.
#[test]
fn decoder_gradients_match_finite_differences() {
    let (pyramid, params, prior) = toy(81);
    let opts = DecoderOptions::default();
    let guidance = Guidance::Prior(&prior);
    let loss = |pyr: &[Tensor4], p: &DecoderParams| decoder_forward(pyr, p, &opts, guidance).unwrap()[0].mean();
    let finest = pyramid[0].shape().with_channels(1);
    let upstream = Tensor4::full(finest, 1.0 / finest.numel() as f64);
    let g = decoder_backward(&pyramid, &params, &opts, guidance, &upstream).unwrap();

    let fd = FdOptions {
        rel_tol: 1e-3,
        max_elements: Some(24),
        seed: 81,
        ..FdOptions::default()
    };
    let mut reports = check_param_grads(&params, &g.params, |p| loss(&pyramid, p), &fd).unwrap();
    for l in 0..LEVELS {
        reports.push(
            check_tensor_grad(
                &format!("pyramid{l}"),
                &pyramid[l],
                &g.features[l],
                |probe| {
                    let mut pyr = pyramid.clone();
                    pyr[l] = probe.clone();
                    loss(&pyr, &params)
                },
                &fd,
            )
            .unwrap(),
        );
    }
    assert_eq!(reports.len(), params.named_tensors().len() + LEVELS);
    for r in &reports {
        assert!(r.analytic.iter().all(|v| v.is_finite()));
        assert!(r.pass, "{}\n{}", r.summary(), r.failing_rows_csv());
    }
}
