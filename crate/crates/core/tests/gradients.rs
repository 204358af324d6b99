//! Analytic backward passes against central finite differences.

use dcs_core::conv::{
    dcsconv_backward, dcsconv_forward, glsconv_backward, glsconv_forward, ConvKernel, DepthToScale, ScaleGradient,
    ScaleHeadParams,
};
use dcs_core::fusion::{dcsf_backward, dcsf_forward, DcsfParams};
use dcs_core::geometry::{ScaleConversion, ScaleMap};
use dcs_core::gradcheck::{check_param_grads, check_tensor_grad, keep_off_odd_integers, FdOptions, GradReport};
use dcs_core::rng::{uniform_tensor, SeedStream};
use dcs_core::{ParamSet, Shape4, Tensor4};

fn assert_all(reports: &[GradReport]) {
    for r in reports {
        assert!(r.pass, "{}\n{}", r.summary(), r.failing_rows_csv());
    }
}

/// Uniform draws in `[lo, hi]` kept at least 0.1 away from odd integers.
fn smooth_scale_field(seed: u64, shape: Shape4, lo: f64, hi: f64) -> Tensor4 {
    let mut rng = SeedStream::new(seed).rng("scale-field");
    keep_off_odd_integers(&uniform_tensor(&mut rng, shape, lo, hi), 0.1)
}

fn dcsconv_case(scale_values: Tensor4, seed: u64) {
    let streams = SeedStream::new(seed);
    let mut rng = streams.rng("dcsconv");
    let shape = Shape4::new(1, 2, 7, 7);
    let x = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let kernel = ConvKernel::random(&mut rng, 2, 2, 3);
    let probe = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let conv = ScaleConversion::standard(1.0).unwrap();
    let scale = ScaleMap::new(scale_values.clone(), conv).unwrap();
    let loss = |x: &Tensor4, k: &ConvKernel, s: &ScaleMap| dcsconv_forward(x, k, s).unwrap().dot(&probe).unwrap();

    let g = dcsconv_backward(&x, &kernel, &scale, &probe, ScaleGradient::Propagate).unwrap();
    let opts = FdOptions::default();
    let mut reports = vec![check_tensor_grad("input", &x, &g.input, |p| loss(p, &kernel, &scale), &opts).unwrap()];
    reports.extend(check_param_grads(&kernel, &g.kernel, |k| loss(&x, k, &scale), &opts).unwrap());
    let gs = g.scale.expect("propagated");
    reports.push(
        check_tensor_grad(
            "scale",
            &scale_values,
            &gs,
            |p| loss(&x, &kernel, &ScaleMap::new(p.clone(), conv).unwrap()),
            &opts,
        )
        .unwrap(),
    );
    assert_eq!(reports.len(), 4);
    assert_all(&reports);

    let detached = dcsconv_backward(&x, &kernel, &scale, &probe, ScaleGradient::Detached).unwrap();
    assert!(detached.scale.is_none());
    assert!(detached.input.bitwise_eq(&g.input));
}

#[test]
fn dcsconv_constant_scale_gradients() {
    dcsconv_case(Tensor4::full(Shape4::new(1, 1, 7, 7), 2.7), 100);
}

#[test]
fn dcsconv_random_scale_gradients() {
    let field = smooth_scale_field(101, Shape4::new(1, 1, 7, 7), 1.2, 8.8);
    assert!(field.data().iter().all(|&k| {
        let d = (k - (2.0 * ((k - 1.0) / 2.0).round() + 1.0)).abs();
        d >= 0.1 && (1.0..=9.0).contains(&k)
    }));
    dcsconv_case(field, 101);
}

#[test]
fn glsconv_end_to_end_gradients() {
    let mut rng = SeedStream::new(102).rng("gls");
    let x = uniform_tensor(&mut rng, Shape4::new(1, 2, 6, 6), -1.0, 1.0);
    let kernel = ConvKernel::random(&mut rng, 2, 2, 3);
    let conv = ScaleConversion::standard(1.0).unwrap();
    let mut head = ScaleHeadParams::random(&mut rng, 2, DepthToScale::affine(0.6, 1.3), conv).unwrap();
    head.projection.weight = head.projection.weight.map(|w| 0.3 * w);
    let probe = uniform_tensor(&mut rng, Shape4::new(1, 2, 6, 6), -1.0, 1.0);

    // softplus(z) + eps lies in about (0.45, 1.0) here, so scales stay inside (1.1, 2.9)
    let (_, scale) = glsconv_forward(&x, &kernel, &head).unwrap();
    assert!(scale.values().data().iter().all(|&k| k > 1.1 && k < 2.9));

    let g = glsconv_backward(&x, &kernel, &head, &probe).unwrap();
    let loss = |x: &Tensor4, k: &ConvKernel, h: &ScaleHeadParams| glsconv_forward(x, k, h).unwrap().0.dot(&probe).unwrap();
    let opts = FdOptions::default();
    let mut reports = vec![check_tensor_grad("input", &x, &g.input, |p| loss(p, &kernel, &head), &opts).unwrap()];
    reports.extend(check_param_grads(&kernel, &g.kernel, |k| loss(&x, k, &head), &opts).unwrap());
    let head_reports = check_param_grads(&head, &g.head, |h| loss(&x, &kernel, h), &opts).unwrap();
    let names: Vec<_> = head_reports.iter().map(|r| r.parameter_name.as_str()).collect();
    assert_eq!(names, ["projection.weight", "projection.bias", "affine"]);
    reports.extend(head_reports);
    assert_all(&reports);
}

#[test]
fn glsconv_geometric_head_gradients() {
    let mut rng = SeedStream::new(103).rng("gls-geo");
    let x = uniform_tensor(&mut rng, Shape4::new(1, 2, 5, 5), -1.0, 1.0);
    let kernel = ConvKernel::random(&mut rng, 1, 2, 3);
    let conv = ScaleConversion::new(3.0, 0.5, 1.0, 9.0).unwrap();
    let head = ScaleHeadParams::random(&mut rng, 2, DepthToScale::Geometric, conv).unwrap();
    let (_, scale) = glsconv_forward(&x, &kernel, &head).unwrap();
    assert!(scale.values().data().iter().all(|&k| k > 1.0 && k < 9.0));
    let probe = uniform_tensor(&mut rng, Shape4::new(1, 1, 5, 5), -1.0, 1.0);
    let g = glsconv_backward(&x, &kernel, &head, &probe).unwrap();
    let reports = check_param_grads(
        &head,
        &g.head,
        |h| glsconv_forward(&x, &kernel, h).unwrap().0.dot(&probe).unwrap(),
        &FdOptions::default(),
    )
    .unwrap();
    assert_all(&reports);
}

#[test]
fn dcsf_gradients() {
    let mut rng = SeedStream::new(104).rng("dcsf");
    let shape = Shape4::new(1, 2, 5, 5);
    let fd = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let fc = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let params = DcsfParams::random(&mut rng, 2, 2);
    let conv = ScaleConversion::standard(1.0).unwrap();
    let scale = ScaleMap::new(uniform_tensor(&mut rng, Shape4::new(1, 1, 5, 5), 1.0, 9.0), conv).unwrap();
    let probe = uniform_tensor(&mut rng, shape, -1.0, 1.0);
    let loss = |a: &Tensor4, b: &Tensor4, p: &DcsfParams| dcsf_forward(a, b, &scale, p).unwrap().dot(&probe).unwrap();

    let g = dcsf_backward(&fd, &fc, &scale, &params, &probe).unwrap();
    let opts = FdOptions::default();
    let mut reports = vec![
        check_tensor_grad("f_dcsc", &fd, &g.f_dcsc, |p| loss(p, &fc, &params), &opts).unwrap(),
        check_tensor_grad("f_c", &fc, &g.f_c, |p| loss(&fd, p, &params), &opts).unwrap(),
    ];
    let param_reports = check_param_grads(&params, &g.params, |p| loss(&fd, &fc, p), &opts).unwrap();
    assert_eq!(param_reports.len(), params.named_tensors().len());
    reports.extend(param_reports);
    assert_all(&reports);
}
