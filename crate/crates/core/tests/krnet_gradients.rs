use mbfusion::krnet::{
    cprelu, cv_conv, CPReLUParams, ComplexTensor, ConvLayerParams, KrNet, NetworkConfig, SpectralPlans, Variant,
};
use mbfusion::signal::Domain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn random_tensor(rng: &mut impl Rng, c: usize, b: usize, n: usize) -> ComplexTensor<f64> {
    let re: Vec<f64> = (0..c * b * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let im: Vec<f64> = (0..c * b * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ComplexTensor::from_planes(c, b, n, &re, &im).unwrap()
}

fn dot(a: &ComplexTensor<f64>, b: &ComplexTensor<f64>) -> f64 {
    a.re().iter().zip(b.re()).map(|(x, y)| x * y).sum::<f64>()
        + a.im().iter().zip(b.im()).map(|(x, y)| x * y).sum::<f64>()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Checks every parameter of `net` against central differences of the
/// linear functional `<w, net(x)>`. Returns the worst relative error.
fn network_gradient_check(net: &KrNet<f64>, x: &ComplexTensor<f64>, w: &ComplexTensor<f64>) -> f64 {
    let (_, tape) = net.forward_tape(x).unwrap();
    let mut grad = vec![0.0; net.param_count()];
    net.backward(tape, w, &mut grad).unwrap();

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.param_count() {
        let p0 = net.params()[i];
        probe.params_mut()[i] = p0 + H;
        let up = dot(w, &probe.forward(x).unwrap());
        probe.params_mut()[i] = p0 - H;
        let down = dot(w, &probe.forward(x).unwrap());
        probe.params_mut()[i] = p0;
        let fd = (up - down) / (2.0 * H);
        let e = rel_err(grad[i], fd);
        assert!(e < TOL, "param {i} ({}): analytic {} vs numeric {fd}", net.layer_of(i), grad[i]);
        worst = worst.max(e);
    }
    worst
}

#[test]
fn tiny_network_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = KrNet::<f64>::new(NetworkConfig::tiny(), 7).unwrap();
    let x = random_tensor(&mut rng, 1, 2, 8);
    let w = random_tensor(&mut rng, 1, 2, 8);
    let worst = network_gradient_check(&net, &x, &w);
    assert!(worst < TOL);
}

#[test]
fn ablation_variants_parameter_gradients() {
    for (k, v) in [Variant::K, Variant::R].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(20 + k as u64);
        let net = KrNet::<f64>::new(NetworkConfig::tiny().with_variant(v), 3).unwrap();
        let x = random_tensor(&mut rng, 1, 1, 8);
        let w = random_tensor(&mut rng, 1, 1, 8);
        network_gradient_check(&net, &x, &w);
    }
}

#[test]
fn tiny_network_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let net = KrNet::<f64>::new(NetworkConfig::tiny(), 8).unwrap();
    let x = random_tensor(&mut rng, 1, 1, 8);
    let w = random_tensor(&mut rng, 1, 1, 8);
    let (_, tape) = net.forward_tape(&x).unwrap();
    let mut grad = vec![0.0; net.param_count()];
    let gx = net.backward(tape, &w, &mut grad).unwrap();
    for n in 0..8 {
        for part in 0..2 {
            let bump = |s: f64| {
                let mut xp = x.clone();
                let mut v = xp.get(0, 0, n);
                if part == 0 {
                    v.re += s;
                } else {
                    v.im += s;
                }
                xp.set(0, 0, n, v);
                dot(&w, &net.forward(&xp).unwrap())
            };
            let fd = (bump(H) - bump(-H)) / (2.0 * H);
            let g = gx.get(0, 0, n);
            let an = if part == 0 { g.re } else { g.im };
            assert!(rel_err(an, fd) < TOL, "input {n}/{part}: {an} vs {fd}");
        }
    }
}

#[test]
fn isolated_conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random_tensor(&mut rng, 1, 3, 10);
    let w = random_tensor(&mut rng, 1, 3, 10);
    // The conv is linear in its kernel, so the exact derivative along one
    // tap is the response to a unit tap.
    let mut p = ConvLayerParams::<f64>::zeros(1, 1, 3);
    for v in p.kernel_re.iter_mut().chain(p.kernel_im.iter_mut()) {
        *v = rng.gen_range(-1.0..1.0);
    }
    for t in 0..3 {
        let f = |s: f64, imag: bool| {
            let mut q = p.clone();
            if imag {
                q.kernel_im[t] += s;
            } else {
                q.kernel_re[t] += s;
            }
            dot(&w, &cv_conv(&x, &q).unwrap())
        };
        for imag in [false, true] {
            let fd = (f(H, imag) - f(-H, imag)) / (2.0 * H);
            let mut e = ConvLayerParams::<f64>::zeros(1, 1, 3);
            if imag {
                e.kernel_im[t] = 1.0;
            } else {
                e.kernel_re[t] = 1.0;
            }
            let exact = dot(&w, &cv_conv(&x, &e).unwrap());
            assert!(rel_err(exact, fd) < 1e-8);
        }
    }
}

#[test]
fn isolated_cprelu_is_piecewise_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random_tensor(&mut rng, 2, 2, 9);
    let w = random_tensor(&mut rng, 2, 2, 9);
    let p = CPReLUParams { eta_r: 0.3, eta_i: -0.2 };
    let f = |er: f64, ei: f64| dot(&w, &cprelu(&x, CPReLUParams { eta_r: er, eta_i: ei }));
    let fd_r = (f(0.3 + H, -0.2) - f(0.3 - H, -0.2)) / (2.0 * H);
    let exact_r: f64 = x
        .re()
        .iter()
        .zip(w.re())
        .filter(|(v, _)| **v < 0.0)
        .map(|(v, g)| v * g)
        .sum();
    assert!(rel_err(exact_r, fd_r) < 1e-8);
    let y = cprelu(&x, p);
    for (a, b) in y.re().iter().zip(x.re()) {
        assert!(if *b >= 0.0 { a == b } else { (a - 0.3 * b).abs() < 1e-15 });
    }
}

#[test]
fn transform_adjoint_is_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let plans = SpectralPlans::<f64>::new(16);
    let x = random_tensor(&mut rng, 2, 1, 16);
    let g = random_tensor(&mut rng, 2, 1, 16);
    let mut fx = x.clone();
    plans.transform(&mut fx, Domain::R);
    let mut ag = g.clone();
    plans.transform_adjoint(&mut ag, Domain::R);
    assert!((dot(&fx, &g) - dot(&x, &ag)).abs() < 1e-10);
    let mut ig = g.clone();
    plans.transform(&mut ig, Domain::K);
    for (a, b) in ag.re().iter().chain(ag.im()).zip(ig.re().iter().chain(ig.im())) {
        assert!((a - b).abs() < 1e-10);
    }
}
