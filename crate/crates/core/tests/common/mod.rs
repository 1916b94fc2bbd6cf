#![allow(dead_code)]

pub mod criteria;
pub mod oracle;

use lakewatch::tensor::{ParamStore, Tape, Tensor, Var};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-3;
/// Coordinates probed per tensor.
pub const FD_PROBES: usize = 8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_tensor<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Overwrite every parameter with `N(0, scale²)` draws.
pub fn randomize<R: Rng>(store: &mut ParamStore<f64>, rng: &mut R, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        }
    }
}

pub fn zero_all(store: &mut ParamStore<f64>) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.value_mut(id).data_mut().fill(0.0);
    }
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel: f64,
    pub worst: String,
    pub probes: usize,
}

impl GradCheck {
    pub fn ok(&self) -> bool {
        self.max_rel < FD_REL_TOL
    }
}

/// Central finite differences against the tape gradient of
/// `Σ build(params, inputs) ⊙ R` for a fixed random `R`, probing up to
/// [`FD_PROBES`] coordinates of every parameter and input tensor.
pub fn gradcheck<F>(
    store: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    seed: u64,
    build: F,
) -> GradCheck
where
    F: Fn(&mut Tape<f64>, &[Var]) -> lakewatch::Result<Var>,
{
    let mut rng = rng(seed ^ 0xfd);
    let forward = |store: &ParamStore<f64>, inputs: &[Tensor<f64>]| -> Tensor<f64> {
        let mut g = Tape::bind(store, false);
        let xs: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let y = build(&mut g, &xs).expect("forward");
        g.value(y).clone()
    };
    let shape = forward(store, inputs).shape().to_vec();
    let weights = normal_tensor(&mut rng, &shape, 1.0);
    let objective = |store: &ParamStore<f64>, inputs: &[Tensor<f64>]| -> f64 {
        let y = forward(store, inputs);
        y.data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let mut g = Tape::bind(store, true);
    let xs: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let y = build(&mut g, &xs).expect("forward");
    let r = g.constant(weights.clone());
    let prod = g.mul(y, r).expect("weights");
    let loss = g.sum(prod);
    g.backward(loss).expect("backward");
    let grad_of = |v: Var, len: usize| {
        g.grad(v)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; len])
    };

    let mut report = GradCheck {
        max_rel: 0.0,
        worst: String::new(),
        probes: 0,
    };
    let mut record = |name: String, analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        report.probes += 1;
        if rel > report.max_rel || rel.is_nan() {
            report.max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
            report.worst = format!("{name}: analytic {analytic:.8e} numeric {numeric:.8e}");
        }
    };

    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.value(id).len();
        let analytic = grad_of(g.p(id), len);
        for k in probe_indices(&mut rng, len) {
            let mut s = store.clone();
            let base = s.value(id).data()[k];
            s.value_mut(id).data_mut()[k] = base + FD_STEP;
            let up = objective(&s, inputs);
            s.value_mut(id).data_mut()[k] = base - FD_STEP;
            let down = objective(&s, inputs);
            record(
                format!("{}[{k}]", store.name(id)),
                analytic[k],
                (up - down) / (2.0 * FD_STEP),
            );
        }
    }
    for (i, (x, &v)) in inputs.iter().zip(&xs).enumerate() {
        let analytic = grad_of(v, x.len());
        for k in probe_indices(&mut rng, x.len()) {
            let mut moved = inputs.to_vec();
            let base = x.data()[k];
            moved[i].data_mut()[k] = base + FD_STEP;
            let up = objective(store, &moved);
            moved[i].data_mut()[k] = base - FD_STEP;
            let down = objective(store, &moved);
            record(
                format!("input{i}[{k}]"),
                analytic[k],
                (up - down) / (2.0 * FD_STEP),
            );
        }
    }
    report
}

fn probe_indices<R: Rng>(rng: &mut R, len: usize) -> Vec<usize> {
    if len <= FD_PROBES {
        (0..len).collect()
    } else {
        sample(rng, len, FD_PROBES).into_vec()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
