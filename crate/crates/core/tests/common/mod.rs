//! Oracles and helpers shared by the integration tests.
#![allow(dead_code)]

use drpu_core::baselines::{PuMethod, PuRiskObjective, SurrogateLoss};
use drpu_core::data::{seeded_rng, Points};
use drpu_core::divergence::{objective_gradient, Branch};
use drpu_core::models::{OutputMap, RatioModel};
use drpu_core::trainer::PuObjective;
use drpu_core::BregmanGenerator;
use rand::Rng;

/// O(n²) pair-counting AUC.
pub fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                s += 1.0;
            } else if p == n {
                s += 0.5;
            }
        }
    }
    s / (pos.len() as f64 * neg.len() as f64)
}

pub fn epsilon_oracle(n: f64, delta: f64) -> f64 {
    (4.0 * (std::f64::consts::E * n / 2.0).ln() / n).sqrt() + ((2.0 / delta).ln() / (2.0 * n)).sqrt()
}

pub fn gamma_bar_oracle(n_pos: usize, n_unl: usize, gamma: f64) -> f64 {
    let (p, u) = (n_pos as f64, n_unl as f64);
    epsilon_oracle(p, 1.0 / p).max(epsilon_oracle(u, 1.0 / u)) / gamma
}

/// Exhaustive thresholding: every distinct attained value of either sample
/// and `+∞`, acceptance `r ≥ θ`, counts recomputed from scratch for every
/// threshold. Returns the minimum of `P(θ) / P+(θ)` over `P+(θ) > γ̄`.
pub fn exhaustive_prior(r_pos: &[f64], r_other: &[f64], gamma_bar: f64) -> Option<f64> {
    let mut thresholds: Vec<f64> = r_pos.iter().chain(r_other).copied().collect();
    thresholds.push(f64::INFINITY);
    let (np, nu) = (r_pos.len() as f64, r_other.len() as f64);
    let mut best: Option<f64> = None;
    for &t in &thresholds {
        let cp = r_pos.iter().filter(|&&r| r >= t).count() as f64;
        let cu = r_other.iter().filter(|&&r| r >= t).count() as f64;
        let pp = cp / np;
        if pp <= gamma_bar {
            continue;
        }
        let v = (cu / nu) / pp;
        if best.is_none_or(|b| v < b) {
            best = Some(v);
        }
    }
    best
}

/// Independent formulas for `f'`, `f*` and `F`.
#[derive(Debug, Clone, Copy)]
pub enum GenOracle {
    Quadratic(f64),
    Exp,
}

impl GenOracle {
    pub fn generator(self) -> BregmanGenerator {
        match self {
            GenOracle::Quadratic(mu) => BregmanGenerator::scaled_quadratic(mu).unwrap(),
            GenOracle::Exp => BregmanGenerator::exp(),
        }
    }
    fn fp(self, t: f64) -> f64 {
        match self {
            GenOracle::Quadratic(mu) => mu * t,
            GenOracle::Exp => t.exp(),
        }
    }
    fn fstar(self, t: f64) -> f64 {
        match self {
            GenOracle::Quadratic(mu) => mu * t * t / 2.0,
            GenOracle::Exp => t * t.exp() - t.exp(),
        }
    }
    fn big_f(self, t: f64) -> f64 {
        match self {
            GenOracle::Quadratic(_) => self.fstar(t),
            GenOracle::Exp => self.fstar(t) + 1.0,
        }
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0.0;
    let mut s = 0.0;
    for x in v {
        s += x;
        n += 1.0;
    }
    s / n
}

fn surrogate(loss: SurrogateLoss, y: f64, v: f64) -> f64 {
    match loss {
        SurrogateLoss::Logistic => (1.0 + (-y * v).exp()).ln(),
        SurrogateLoss::Sigmoid => 1.0 / (1.0 + (y * v).exp()),
    }
}

#[derive(Debug, Clone)]
pub enum GradTarget {
    Ratio { gen: GenOracle, alpha: f64 },
    Baseline { method: PuMethod, loss: SurrogateLoss, prior: f64 },
}

pub struct GradCase {
    pub name: String,
    pub model: RatioModel,
    pub pos: Points,
    pub unl: Points,
    pub target: GradTarget,
    pub want: Branch,
}

#[derive(Debug, Clone)]
pub struct GradResult {
    pub name: String,
    pub branch: Branch,
    pub want: Branch,
    pub rel_err: f64,
}

/// The function whose gradient the selected branch descends, evaluated
/// from scratch with the oracle formulas.
fn descended_value(case: &GradCase, model: &RatioModel, branch: Branch) -> f64 {
    let vp = model.predict_all(&case.pos).unwrap();
    let vu = model.predict_all(&case.unl).unwrap();
    match &case.target {
        GradTarget::Ratio { gen, alpha } => match branch {
            Branch::Normal => mean(vp.iter().map(|&r| -gen.fp(r))) + mean(vu.iter().map(|&r| gen.fstar(r))),
            Branch::Corrected => {
                -(mean(vu.iter().map(|&r| gen.big_f(r))) - alpha * mean(vp.iter().map(|&r| gen.big_f(r))))
            }
        },
        GradTarget::Baseline { method, loss, prior } => {
            let pos_term = prior * mean(vp.iter().map(|&g| surrogate(*loss, 1.0, g)));
            let bracket = mean(vu.iter().map(|&g| surrogate(*loss, -1.0, g)))
                - prior * mean(vp.iter().map(|&g| surrogate(*loss, -1.0, g)));
            match (method, branch) {
                (PuMethod::Upu, _) | (PuMethod::Nnpu, Branch::Normal) => pos_term + bracket,
                (PuMethod::Nnpu, Branch::Corrected) => -bracket,
            }
        }
    }
}

fn analytic(case: &GradCase) -> (Vec<f64>, Branch) {
    match &case.target {
        GradTarget::Ratio { gen, alpha } => objective_gradient(&gen.generator(), *alpha, &case.model, &case.pos, &case.unl).unwrap(),
        GradTarget::Baseline { method, loss, prior } => {
            let obj = PuRiskObjective {
                method: *method,
                loss: *loss,
                prior: *prior,
            };
            let vp = case.model.predict_all(&case.pos).unwrap();
            let vu = case.model.predict_all(&case.unl).unwrap();
            let (dp, du, branch) = obj.output_gradients(&vp, &vu).unwrap();
            let mut grad = vec![0.0; case.model.params().len()];
            for (x, s) in case.pos.rows().zip(&dp).chain(case.unl.rows().zip(&du)) {
                let (_, g) = case.model.predict_grad(x).unwrap();
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += s * b);
            }
            (grad, branch)
        }
    }
}

/// Relative error `max_i |a_i - n_i| / max(‖a‖∞, ‖n‖∞)` against central
/// differences.
pub fn check_gradient(case: &GradCase) -> GradResult {
    let (grad, branch) = analytic(case);
    let mut fd = vec![0.0; grad.len()];
    let mut m = case.model.clone();
    for i in 0..grad.len() {
        let p0 = m.params()[i];
        let h = 1e-6 * p0.abs().max(1.0);
        m.params_mut()[i] = p0 + h;
        let up = descended_value(case, &m, branch);
        m.params_mut()[i] = p0 - h;
        let down = descended_value(case, &m, branch);
        m.params_mut()[i] = p0;
        fd[i] = (up - down) / (2.0 * h);
    }
    let scale = grad
        .iter()
        .chain(&fd)
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-12);
    let diff = grad.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    GradResult {
        name: case.name.clone(),
        branch,
        want: case.want,
        rel_err: diff / scale,
    }
}

fn random_points(rng: &mut impl Rng, n: usize, dim: usize, scale: f64) -> Points {
    Points::new(dim, (0..n * dim).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Splits a pool by model output: the top half becomes the positive batch
/// when a corrected step is wanted, otherwise the split is by position.
fn split_pool(model: &RatioModel, pool: &Points, top_as_positive: bool) -> (Points, Points) {
    let n = pool.len();
    let mut idx: Vec<usize> = (0..n).collect();
    if top_as_positive {
        let v = model.predict_all(pool).unwrap();
        idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    }
    let (p, u) = idx.split_at(n / 2);
    (pool.select(p), pool.select(u))
}

fn models(seed: u64, identity: bool) -> Vec<(String, RatioModel)> {
    let mut rng = seeded_rng(seed, 99);
    let centers = random_points(&mut rng, 15, 2, 2.0);
    let mut basis = RatioModel::gaussian_basis_linear(centers, 0.8).unwrap();
    // positive weights keep the clamp away from its kink
    let w: Vec<f64> = (0..basis.params().len()).map(|_| rng.random_range(0.05..0.6)).collect();
    basis.set_params(w).unwrap();
    // zero biases put every point whose first layer is dead exactly on a
    // second-layer kink, where central differences are meaningless
    let mut mlp = |layers: &[usize], s: u64| {
        let mut m = RatioModel::mlp(layers, s).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.3..0.3));
        m
    };
    let deep = mlp(&[2, 8, 6, 1], seed);
    let shallow = mlp(&[2, 5, 1], seed + 1);
    let mut out = vec![];
    if identity {
        out.push(("basis_identity".to_string(), basis.clone().with_output(OutputMap::Identity)));
        out.push(("mlp_identity".to_string(), deep.with_output(OutputMap::Identity)));
    } else {
        out.push(("basis_clamp".to_string(), basis.clone()));
        out.push(("basis_softplus".to_string(), basis.with_output(OutputMap::Softplus)));
        out.push(("mlp_deep".to_string(), deep));
        out.push(("mlp_shallow".to_string(), shallow));
    }
    out
}

/// 24 density-ratio configurations (4 models × 3 generators × 2 branches)
/// and 12 baseline configurations.
pub fn gradient_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = seeded_rng(seed, 98);
    let mut cases = vec![];
    for (mname, model) in models(seed, false) {
        for gen in [GenOracle::Quadratic(1.0), GenOracle::Quadratic(2.5), GenOracle::Exp] {
            for want in [Branch::Normal, Branch::Corrected] {
                let pool = random_points(&mut rng, 16, 2, 2.0);
                let (pos, unl) = split_pool(&model, &pool, want == Branch::Corrected);
                let alpha = if want == Branch::Normal { 0.0 } else { 0.95 };
                cases.push(GradCase {
                    name: format!("{mname}/{gen:?}/{want:?}"),
                    model: model.clone(),
                    pos,
                    unl,
                    target: GradTarget::Ratio { gen, alpha },
                    want,
                });
            }
        }
    }
    for (mname, model) in models(seed, true) {
        for loss in [SurrogateLoss::Logistic, SurrogateLoss::Sigmoid] {
            for (method, want, prior) in [
                (PuMethod::Upu, Branch::Normal, 0.4),
                (PuMethod::Nnpu, Branch::Normal, 0.1),
                (PuMethod::Nnpu, Branch::Corrected, 0.9),
            ] {
                let pool = random_points(&mut rng, 16, 2, 2.0);
                let (pos, unl) = split_pool(&model, &pool, want == Branch::Corrected);
                cases.push(GradCase {
                    name: format!("{mname}/{method:?}/{loss:?}/{want:?}"),
                    model: model.clone(),
                    pos,
                    unl,
                    target: GradTarget::Baseline { method, loss, prior },
                    want,
                });
            }
        }
    }
    cases
}
