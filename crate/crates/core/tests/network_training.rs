use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relfeed::corpus::{synthesize_corpus, SynthConfig};
use relfeed::losses::LossKind;
use relfeed::network::{backprop_loss, nt_xent_eval, pretrain, Activation, PretrainConfig, ProjectionNet};

fn rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn loss_at(net: &ProjectionNet, p: &[f64], s: &[Vec<f64>], d: &[Vec<f64>], kind: LossKind) -> f64 {
    let mut n = net.clone();
    n.set_params(p).unwrap();
    backprop_loss(&n, s, d, 0.5, kind).unwrap().0
}

/// Central differences only mean something away from ReLU kinks and from a zero
/// projection, where cosine similarity is discontinuous.
fn differentiable_at(net: &ProjectionNet, inputs: &[Vec<f64>], margin: f64) -> bool {
    inputs.iter().all(|x| {
        let mut cur = x.clone();
        for l in net.layers() {
            let z: Vec<f64> = (0..l.out_dim)
                .map(|o| l.bias[o] + (0..l.in_dim).map(|i| l.weights[o * l.in_dim + i] * cur[i]).sum::<f64>())
                .collect();
            if l.activation == Activation::Relu && z.iter().any(|v| v.abs() < margin) {
                return false;
            }
            cur = match l.activation {
                Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => z,
            };
        }
        cur.iter().map(|v| v * v).sum::<f64>().sqrt() > margin
    })
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = ProjectionNet::new(6, &[4], 3, seed).unwrap();
        let s = rows(&mut rng, 3, 6);
        let d = rows(&mut rng, 2, 6);
        seed += 1;
        if !differentiable_at(&net, &[s.clone(), d.clone()].concat(), 10.0 * h) {
            continue;
        }
        checked += 1;
        for kind in [LossKind::Scloss, LossKind::SclossAlt] {
            let (_, grads) = backprop_loss(&net, &s, &d, 0.5, kind).unwrap();
            let analytic = grads.flatten();
            let p0 = net.params();
            for k in 0..p0.len() {
                let mut plus = p0.clone();
                let mut minus = p0.clone();
                plus[k] += h;
                minus[k] -= h;
                let fd = (loss_at(&net, &plus, &s, &d, kind) - loss_at(&net, &minus, &s, &d, kind)) / (2.0 * h);
                let rel = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    assert!(seed < 40, "too many configurations sat on a kink");
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn forward_matches_layer_algebra() {
    let net = ProjectionNet::new(4, &[3], 2, 77).unwrap();
    let x = [0.3, -1.2, 0.5, 2.0];
    let l = net.layers();
    assert_eq!(l[0].activation, Activation::Relu);
    let mut h = [0.0; 3];
    for (o, hv) in h.iter_mut().enumerate() {
        let z: f64 = l[0].bias[o] + (0..4).map(|i| l[0].weights[o * 4 + i] * x[i]).sum::<f64>();
        *hv = z.max(0.0);
    }
    let y: Vec<f64> = (0..2)
        .map(|o| l[1].bias[o] + (0..3).map(|i| l[1].weights[o * 3 + i] * h[i]).sum::<f64>())
        .collect();
    let got = net.forward(&x).unwrap();
    for (a, b) in got.iter().zip(&y) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn pretraining_lowers_the_contrastive_loss() {
    let c = synthesize_corpus(&SynthConfig::standard(300, 4, 0.1, 1)).unwrap();
    let view = c.view("mix").unwrap();
    let fresh = ProjectionNet::new(view.dim(), &[128], 64, 3).unwrap();
    let cfg = PretrainConfig { seed: 3, ..Default::default() };
    let before = nt_xent_eval(&fresh, view, &cfg, 99).unwrap();
    let trained = pretrain(fresh.clone(), view, &cfg).unwrap();
    let after = nt_xent_eval(&trained, view, &cfg, 99).unwrap();
    assert!(after < before, "{after} >= {before}");

    let unchanged = pretrain(fresh.clone(), view, &PretrainConfig { steps: 0, ..cfg }).unwrap();
    assert_eq!(unchanged, fresh);
    assert!(pretrain(fresh, view, &PretrainConfig { batch_size: 1, ..cfg }).is_err());
}
