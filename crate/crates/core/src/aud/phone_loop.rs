use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureSequence, TimedUnit, TimedUnitSequence};
use crate::error::{Error, Result};

const NEG_INF: f64 = f64::NEG_INFINITY;

fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(NEG_INF, log_add)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhoneLoopConfig {
    /// Upper bound on the number of units (truncation level).
    pub max_units: usize,
    pub states_per_unit: usize,
    pub components: usize,
    /// Concentration of the symmetric Dirichlet prior on unit weights.
    pub gamma: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor: f64,
    pub init: UnitInit,
    pub kmeans_iterations: usize,
    pub initial_self_loop: f64,
}

/// How unit emission densities start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitInit {
    /// Every unit at the global mean and variance with small seeded
    /// perturbations; units differentiate during EM.
    GlobalMean,
    /// One k-means cluster per unit, clusters assigned round-robin.
    KMeans,
}

impl Default for PhoneLoopConfig {
    fn default() -> Self {
        Self {
            max_units: 100,
            states_per_unit: 3,
            components: 2,
            gamma: 0.5,
            iterations: 20,
            seed: 0,
            variance_floor: 1e-3,
            init: UnitInit::GlobalMean,
            kmeans_iterations: 10,
            initial_self_loop: 0.6,
        }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    #[serde(skip)]
    log_consts: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != means.len() || weights.len() != variances.len() || weights.is_empty() {
            return Err(Error::shape("mixture components", weights.len(), means.len()));
        }
        if variances.iter().flatten().any(|&v| !(v > 0.0)) {
            return Err(Error::Data("mixture variances must be positive".into()));
        }
        let mut g = Self {
            weights,
            means,
            variances,
            log_consts: Vec::new(),
        };
        g.refresh();
        Ok(g)
    }

    fn refresh(&mut self) {
        self.log_consts = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(&w, var)| {
                w.ln() - 0.5 * var.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>()
            })
            .collect();
    }

    fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            if self.weights[m] == 0.0 {
                *o = NEG_INF;
                continue;
            }
            let (mu, var) = (&self.means[m], &self.variances[m]);
            let mut q = 0.0;
            for j in 0..x.len() {
                let d = x[j] - mu[j];
                q += d * d / var[j];
            }
            *o = self.log_consts[m] - 0.5 * q;
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.weights.len()];
        self.component_log_densities(x, &mut buf);
        log_sum(buf)
    }
}

/// Left-to-right unit: state `s` loops with `self_loop[s]` and otherwise
/// advances; the last state leaves the unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitHmm {
    pub states: Vec<GaussianMixture>,
    pub self_loop: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudModel {
    pub dim: usize,
    /// Original unit index of each retained unit; decoded labels use these.
    pub labels: Vec<usize>,
    pub units: Vec<UnitHmm>,
    pub weights: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// MAP objective (log-likelihood plus unnormalized Dirichlet log-prior over
    /// active units) evaluated at the parameters entering each iteration, plus
    /// one final entry for the returned parameters.
    pub objective: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    pub active_units: Vec<usize>,
    pub weight_sums: Vec<f64>,
}

impl AudModel {
    pub fn new(dim: usize, units: Vec<UnitHmm>, weights: Vec<f64>, gamma: f64) -> Result<Self> {
        if units.is_empty() || units.len() != weights.len() {
            return Err(Error::shape("unit weights", units.len(), weights.len()));
        }
        let s = units[0].states.len();
        for u in &units {
            if u.states.len() != s || u.self_loop.len() != s || s == 0 {
                return Err(Error::Data("all units need the same number of states".into()));
            }
            if u.self_loop.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::Data("self-loop probabilities must lie in [0, 1]".into()));
            }
            for st in &u.states {
                if st.means.iter().chain(&st.variances).any(|v| v.len() != dim) {
                    return Err(Error::shape("state mixture dimension", dim, "mismatch"));
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("unit weights must be a distribution (sum {total})")));
        }
        let mut units = units;
        for u in &mut units {
            for st in &mut u.states {
                st.refresh();
            }
        }
        Ok(Self {
            dim,
            labels: (0..weights.len()).collect(),
            units,
            weights,
            gamma,
        })
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn states_per_unit(&self) -> usize {
        self.units[0].states.len()
    }

    fn check_dims(&self, feats: &FeatureSequence) -> Result<()> {
        let d = feats.frames()[0].len();
        if d != self.dim {
            return Err(Error::shape("features", self.dim, d));
        }
        if feats.len() < self.states_per_unit() {
            return Err(Error::Data(format!(
                "{}: {} frames cannot traverse a {}-state unit",
                feats.id,
                feats.len(),
                self.states_per_unit()
            )));
        }
        Ok(())
    }

    /// Per-frame, per-state emission log-densities; inactive units get -inf.
    fn emissions(&self, feats: &FeatureSequence) -> Vec<Vec<f64>> {
        let s = self.states_per_unit();
        feats
            .frames()
            .iter()
            .map(|x| {
                let mut row = vec![NEG_INF; self.num_units() * s];
                for (u, unit) in self.units.iter().enumerate() {
                    if self.weights[u] > 0.0 {
                        for (j, st) in unit.states.iter().enumerate() {
                            row[u * s + j] = st.log_density(x);
                        }
                    }
                }
                row
            })
            .collect()
    }

    fn log_params(&self) -> LogParams {
        let s = self.states_per_unit();
        let mut stay = Vec::with_capacity(self.num_units() * s);
        let mut leave = Vec::with_capacity(self.num_units() * s);
        for u in &self.units {
            for &a in &u.self_loop {
                stay.push(a.ln());
                leave.push((1.0 - a).ln());
            }
        }
        LogParams {
            s,
            weights: self.weights.iter().map(|w| w.ln()).collect(),
            stay,
            leave,
        }
    }

    /// Total log-likelihood of one utterance (forward algorithm).
    pub fn log_likelihood(&self, feats: &FeatureSequence) -> Result<f64> {
        self.check_dims(feats)?;
        let lb = self.emissions(feats);
        let lp = self.log_params();
        let (_, _, ll) = forward(&lp, &lb);
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("{}: non-finite likelihood", feats.id)));
        }
        Ok(ll)
    }

    /// Unnormalized Dirichlet log-prior over active units.
    pub fn log_prior(&self) -> f64 {
        (self.gamma - 1.0) * self.weights.iter().filter(|&&w| w > 0.0).map(|w| w.ln()).sum::<f64>()
    }

    /// Best state path as `(unit index, state)` per frame, with its log score.
    pub fn viterbi(&self, feats: &FeatureSequence) -> Result<(Vec<(usize, usize)>, f64)> {
        self.check_dims(feats)?;
        let lb = self.emissions(feats);
        let lp = self.log_params();
        let s = lp.s;
        let k_total = lb[0].len();
        let n = lb.len();
        let mut delta = vec![NEG_INF; k_total];
        let mut back = vec![vec![usize::MAX; k_total]; n];
        for u in 0..self.num_units() {
            delta[u * s] = lp.weights[u] + lb[0][u * s];
        }
        for t in 1..n {
            let (mut best_exit, mut best_exit_k) = (NEG_INF, usize::MAX);
            for u in 0..self.num_units() {
                let k = u * s + s - 1;
                let v = delta[k] + lp.leave[k];
                if v > best_exit {
                    best_exit = v;
                    best_exit_k = k;
                }
            }
            let mut next = vec![NEG_INF; k_total];
            for k in 0..k_total {
                if lb[t][k] == NEG_INF {
                    continue;
                }
                let (u, j) = (k / s, k % s);
                let stay = delta[k] + lp.stay[k];
                let (from, from_k) = if j == 0 {
                    (best_exit + lp.weights[u], best_exit_k)
                } else {
                    (delta[k - 1] + lp.leave[k - 1], k - 1)
                };
                let (v, p) = if stay >= from { (stay, k) } else { (from, from_k) };
                next[k] = v + lb[t][k];
                back[t][k] = p;
            }
            delta = next;
        }
        let (mut score, mut k) = (NEG_INF, usize::MAX);
        for u in 0..self.num_units() {
            let kk = u * s + s - 1;
            let v = delta[kk] + lp.leave[kk];
            if v > score {
                score = v;
                k = kk;
            }
        }
        if !score.is_finite() {
            return Err(Error::Numerical(format!("{}: no finite-scoring path", feats.id)));
        }
        let mut path = vec![(0, 0); n];
        for t in (0..n).rev() {
            path[t] = (k / s, k % s);
            if t > 0 {
                k = back[t][k];
            }
        }
        Ok((path, score))
    }

    /// Drops units whose weight is exactly zero.
    pub fn pruned(&self) -> AudModel {
        let keep: Vec<usize> = (0..self.num_units()).filter(|&u| self.weights[u] > 0.0).collect();
        AudModel {
            dim: self.dim,
            labels: keep.iter().map(|&u| self.labels[u]).collect(),
            units: keep.iter().map(|&u| self.units[u].clone()).collect(),
            weights: keep.iter().map(|&u| self.weights[u]).collect(),
            gamma: self.gamma,
        }
    }

    pub fn restore_caches(&mut self) {
        for u in &mut self.units {
            for st in &mut u.states {
                st.refresh();
            }
        }
    }
}

struct LogParams {
    s: usize,
    weights: Vec<f64>,
    stay: Vec<f64>,
    leave: Vec<f64>,
}

/// Returns (alpha, log exit mass per frame, total log-likelihood).
fn forward(lp: &LogParams, lb: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    let s = lp.s;
    let n = lb.len();
    let k_total = lb[0].len();
    let units = k_total / s;
    let mut alpha = vec![vec![NEG_INF; k_total]; n];
    let mut exit = vec![NEG_INF; n];
    for u in 0..units {
        alpha[0][u * s] = lp.weights[u] + lb[0][u * s];
    }
    for t in 0..n {
        if t > 0 {
            let (prev, cur) = alpha.split_at_mut(t);
            let (prev, cur) = (&prev[t - 1], &mut cur[0]);
            let e = exit[t - 1];
            for k in 0..k_total {
                if lb[t][k] == NEG_INF {
                    continue;
                }
                let j = k % s;
                let stay = prev[k] + lp.stay[k];
                let from = if j == 0 { e + lp.weights[k / s] } else { prev[k - 1] + lp.leave[k - 1] };
                cur[k] = log_add(stay, from) + lb[t][k];
            }
        }
        exit[t] = log_sum((0..units).map(|u| {
            let k = u * s + s - 1;
            alpha[t][k] + lp.leave[k]
        }));
    }
    let ll = exit[n - 1];
    (alpha, exit, ll)
}

fn backward_pass(lp: &LogParams, lb: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = lp.s;
    let n = lb.len();
    let k_total = lb[0].len();
    let units = k_total / s;
    let mut beta = vec![vec![NEG_INF; k_total]; n];
    for u in 0..units {
        let k = u * s + s - 1;
        beta[n - 1][k] = lp.leave[k];
    }
    for t in (0..n - 1).rev() {
        let (cur, next) = beta.split_at_mut(t + 1);
        let (cur, next) = (&mut cur[t], &next[0]);
        let enter = log_sum((0..units).map(|u| lp.weights[u] + lb[t + 1][u * s] + next[u * s]));
        for k in 0..k_total {
            let j = k % s;
            let stay = lp.stay[k] + lb[t + 1][k] + next[k];
            let go = if j + 1 < s {
                lp.leave[k] + lb[t + 1][k + 1] + next[k + 1]
            } else {
                lp.leave[k] + enter
            };
            cur[k] = log_add(stay, go);
        }
    }
    beta
}

/// Sufficient statistics accumulated by the E-step.
#[derive(Clone)]
struct Stats {
    log_likelihood: f64,
    entries: Vec<f64>,
    occupancy: Vec<f64>,
    stays: Vec<f64>,
    /// Per state, per component: (weight, Σx, Σx²).
    comp_n: Vec<Vec<f64>>,
    comp_s1: Vec<Vec<Vec<f64>>>,
    comp_s2: Vec<Vec<Vec<f64>>>,
}

impl Stats {
    fn zeros(units: usize, s: usize, m: usize, dim: usize) -> Self {
        let k = units * s;
        Self {
            log_likelihood: 0.0,
            entries: vec![0.0; units],
            occupancy: vec![0.0; k],
            stays: vec![0.0; k],
            comp_n: vec![vec![0.0; m]; k],
            comp_s1: vec![vec![vec![0.0; dim]; m]; k],
            comp_s2: vec![vec![vec![0.0; dim]; m]; k],
        }
    }

    fn add(&mut self, o: &Stats) {
        self.log_likelihood += o.log_likelihood;
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.entries, &o.entries);
        add(&mut self.occupancy, &o.occupancy);
        add(&mut self.stays, &o.stays);
        for k in 0..self.comp_n.len() {
            add(&mut self.comp_n[k], &o.comp_n[k]);
            for m in 0..self.comp_n[k].len() {
                add(&mut self.comp_s1[k][m], &o.comp_s1[k][m]);
                add(&mut self.comp_s2[k][m], &o.comp_s2[k][m]);
            }
        }
    }
}

fn e_step(model: &AudModel, feats: &FeatureSequence) -> Result<Stats> {
    model.check_dims(feats)?;
    let lb = model.emissions(feats);
    let lp = model.log_params();
    let (alpha, exit, ll) = forward(&lp, &lb);
    if !ll.is_finite() {
        return Err(Error::Numerical(format!("{}: non-finite likelihood", feats.id)));
    }
    let beta = backward_pass(&lp, &lb);
    let s = lp.s;
    let units = model.num_units();
    let m = model.units[0].states[0].weights.len();
    let mut st = Stats::zeros(units, s, m, model.dim);
    st.log_likelihood = ll;
    let n = lb.len();
    let mut comp = vec![0.0; m];
    for t in 0..n {
        let x = &feats.frames()[t];
        for u in 0..units {
            if model.weights[u] == 0.0 {
                continue;
            }
            let k0 = u * s;
            let enter = if t == 0 {
                lp.weights[u] + lb[0][k0]
            } else {
                exit[t - 1] + lp.weights[u] + lb[t][k0]
            };
            st.entries[u] += (enter + beta[t][k0] - ll).exp();
            for j in 0..s {
                let k = k0 + j;
                let g = (alpha[t][k] + beta[t][k] - ll).exp();
                if g == 0.0 {
                    continue;
                }
                st.occupancy[k] += g;
                if t + 1 < n {
                    st.stays[k] += (alpha[t][k] + lp.stay[k] + lb[t + 1][k] + beta[t + 1][k] - ll).exp();
                }
                let mix = &model.units[u].states[j];
                mix.component_log_densities(x, &mut comp);
                let norm = log_sum(comp.iter().copied());
                for c in 0..m {
                    let r = g * (comp[c] - norm).exp();
                    if r == 0.0 {
                        continue;
                    }
                    st.comp_n[k][c] += r;
                    let (s1, s2) = (&mut st.comp_s1[k][c], &mut st.comp_s2[k][c]);
                    for d in 0..x.len() {
                        s1[d] += r * x[d];
                        s2[d] += r * x[d] * x[d];
                    }
                }
            }
        }
    }
    Ok(st)
}

fn m_step(model: &mut AudModel, st: &Stats, floor: &[f64]) {
    let s = model.states_per_unit();
    let gamma = model.gamma;
    let raw: Vec<f64> = st.entries.iter().map(|&c| (c + gamma - 1.0).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        model.weights = raw.iter().map(|r| r / total).collect();
    }
    for u in 0..model.num_units() {
        if model.weights[u] == 0.0 {
            continue;
        }
        for j in 0..s {
            let k = u * s + j;
            if st.occupancy[k] <= 0.0 {
                continue;
            }
            model.units[u].self_loop[j] = (st.stays[k] / st.occupancy[k]).clamp(0.0, 1.0);
            let mix = &mut model.units[u].states[j];
            let n_state: f64 = st.comp_n[k].iter().sum();
            for c in 0..mix.weights.len() {
                let nc = st.comp_n[k][c];
                mix.weights[c] = nc / n_state;
                if nc <= 0.0 {
                    continue;
                }
                for d in 0..model.dim {
                    let mu = st.comp_s1[k][c][d] / nc;
                    let var = st.comp_s2[k][c][d] / nc - mu * mu;
                    mix.means[c][d] = mu;
                    mix.variances[c][d] = var.max(floor[d]);
                }
            }
            mix.refresh();
        }
    }
}

fn global_moments(features: &[FeatureSequence], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut n = 0.0;
    for f in features {
        for x in f.frames() {
            for d in 0..dim {
                mean[d] += x[d];
                sq[d] += x[d] * x[d];
            }
            n += 1.0;
        }
    }
    for d in 0..dim {
        mean[d] /= n;
        sq[d] = (sq[d] / n - mean[d] * mean[d]).max(1e-12);
    }
    (mean, sq)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means++ followed by Lloyd iterations; empty clusters are
/// reseeded round-robin from the frame list.
fn kmeans(frames: &[&[f64]], k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut centers: Vec<Vec<f64>> = vec![frames[rng.random_range(0..frames.len())].to_vec()];
    let mut d2: Vec<f64> = frames.iter().map(|f| sq_dist(f, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = frames.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            centers.len() % frames.len()
        };
        centers.push(frames[pick].to_vec());
        let c = centers.last().unwrap();
        for (i, f) in frames.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(f, c));
        }
    }
    let dim = frames[0].len();
    let mut assign = vec![0; frames.len()];
    let mut reseed = 0;
    for _ in 0..iterations.max(1) {
        for (i, f) in frames.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, ctr) in centers.iter().enumerate() {
                let d = sq_dist(f, ctr);
                if d < best.0 {
                    best = (d, c);
                }
            }
            assign[i] = best.1;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, f) in frames.iter().enumerate() {
            counts[assign[i]] += 1;
            for d in 0..dim {
                sums[assign[i]][d] += f[d];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                centers[c] = frames[reseed % frames.len()].to_vec();
                reseed += 1;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    (centers, assign)
}

fn build_unit(
    cfg: &PhoneLoopConfig,
    centre: &[f64],
    var: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<UnitHmm> {
    let states = (0..cfg.states_per_unit)
        .map(|_| {
            let means = (0..cfg.components)
                .map(|_| {
                    centre
                        .iter()
                        .zip(var)
                        .map(|(m, v)| m + 0.1 * v.sqrt() * rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            GaussianMixture::new(
                vec![1.0 / cfg.components as f64; cfg.components],
                means,
                vec![var.to_vec(); cfg.components],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitHmm {
        states,
        self_loop: vec![cfg.initial_self_loop; cfg.states_per_unit],
    })
}

fn initialize(features: &[FeatureSequence], cfg: &PhoneLoopConfig, floor: &[f64]) -> Result<AudModel> {
    let dim = features[0].frames()[0].len();
    let (mean, global_var) = global_moments(features, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let units = match cfg.init {
        UnitInit::GlobalMean => (0..cfg.max_units)
            .map(|_| build_unit(cfg, &mean, &global_var, &mut rng))
            .collect::<Result<Vec<_>>>()?,
        UnitInit::KMeans => kmeans_units(features, cfg, floor, &global_var, &mut rng)?,
    };
    AudModel::new(dim, units, vec![1.0 / cfg.max_units as f64; cfg.max_units], cfg.gamma)
}

fn kmeans_units(
    features: &[FeatureSequence],
    cfg: &PhoneLoopConfig,
    floor: &[f64],
    global_var: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<UnitHmm>> {
    let dim = features[0].frames()[0].len();
    let all: Vec<&[f64]> = features.iter().flat_map(|f| f.frames().iter().map(Vec::as_slice)).collect();
    const MAX_INIT_FRAMES: usize = 20_000;
    let frames: Vec<&[f64]> = if all.len() > MAX_INIT_FRAMES {
        let stride = all.len() as f64 / MAX_INIT_FRAMES as f64;
        (0..MAX_INIT_FRAMES).map(|i| all[(i as f64 * stride) as usize]).collect()
    } else {
        all
    };
    let k = cfg.max_units.min(frames.len());
    let (centers, assign) = kmeans(&frames, k, cfg.kmeans_iterations, rng);
    let mut var = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, f) in frames.iter().enumerate() {
        let c = assign[i];
        counts[c] += 1;
        for d in 0..dim {
            let diff = f[d] - centers[c][d];
            var[c][d] += diff * diff;
        }
    }
    let mut units = Vec::with_capacity(cfg.max_units);
    for u in 0..cfg.max_units {
        let c = u % k;
        let v: Vec<f64> = if counts[c] > 1 {
            (0..dim).map(|d| (var[c][d] / counts[c] as f64).max(floor[d])).collect()
        } else {
            global_var.to_vec()
        };
        units.push(build_unit(cfg, &centers[c], &v, rng)?);
    }
    Ok(units)
}

/// MAP-EM training of the phone loop. Unit weights follow
/// `π_u ∝ max(0, E[entries_u] + γ - 1)`; units driven to zero weight are
/// pruned from the returned model.
pub fn train_phone_loop(features: &[FeatureSequence], cfg: &PhoneLoopConfig) -> Result<(AudModel, TrainingTrace)> {
    if features.is_empty() {
        return Err(Error::Data("no feature sequences to train on".into()));
    }
    if cfg.max_units < 2 {
        return Err(Error::Config(format!("max_units must be at least 2, got {}", cfg.max_units)));
    }
    if cfg.states_per_unit == 0 || cfg.components == 0 || !(cfg.gamma > 0.0) {
        return Err(Error::Config("states, components and gamma must be positive".into()));
    }
    let dim = features[0].frames()[0].len();
    let (_, global_var) = global_moments(features, dim);
    let floor: Vec<f64> = global_var.iter().map(|v| v * cfg.variance_floor).collect();
    let mut model = initialize(features, cfg, &floor)?;
    let mut trace = TrainingTrace::default();
    let units = model.num_units();
    let (s, m) = (cfg.states_per_unit, cfg.components);
    for it in 0..=cfg.iterations {
        let per_utt: Vec<Stats> = features
            .par_iter()
            .map(|f| e_step(&model, f))
            .collect::<Result<Vec<_>>>()?;
        let mut st = Stats::zeros(units, s, m, dim);
        for p in &per_utt {
            st.add(p);
        }
        if !st.log_likelihood.is_finite() {
            return Err(Error::Numerical(format!("non-finite likelihood at iteration {it}")));
        }
        trace.log_likelihood.push(st.log_likelihood);
        trace.objective.push(st.log_likelihood + model.log_prior());
        trace.active_units.push(model.weights.iter().filter(|&&w| w > 0.0).count());
        trace.weight_sums.push(model.weights.iter().sum());
        if it == cfg.iterations {
            break;
        }
        m_step(&mut model, &st, &floor);
    }
    Ok((model.pruned(), trace))
}

/// Viterbi decoding into merged, time-stamped unit intervals.
pub fn decode_units(model: &AudModel, feats: &FeatureSequence) -> Result<TimedUnitSequence> {
    let (path, _) = model.viterbi(feats)?;
    let mut segments: Vec<TimedUnit> = Vec::new();
    let mut start = 0;
    for t in 1..=path.len() {
        if t == path.len() || path[t].0 != path[start].0 {
            let end = if t == path.len() { feats.duration() } else { t as f64 * feats.step };
            segments.push(TimedUnit {
                label: model.labels[path[start].0],
                start: start as f64 * feats.step,
                end,
            });
            start = t;
        }
    }
    Ok(TimedUnitSequence {
        id: feats.id.clone(),
        segments,
    })
}

/// Mutual information normalized by the arithmetic mean of the entropies.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *pa.entry(x).or_default() += 1.0;
        *pb.entry(y).or_default() += 1.0;
    }
    let entropy = |p: &HashMap<usize, f64>| -p.values().map(|c| c / n * (c / n).ln()).sum::<f64>();
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c / n;
            pxy * (pxy / (pa[&x] / n * pb[&y] / n)).ln()
        })
        .sum();
    if ha + hb == 0.0 {
        1.0
    } else {
        2.0 * mi / (ha + hb)
    }
}
