//! Joint Gaussian mixture over stacked `[x; y]` vectors.
//!
//! Components carry full covariances. Densities are evaluated in the log
//! domain through cached Cholesky factors, both for the joint vector (training)
//! and for the observable `x` block (posteriors and regression).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;
/// Covariance floor relative to the per-feature data variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;
const ABSOLUTE_FLOOR: f64 = 1e-12;
const LLOYD_ITERATIONS: usize = 20;
const SPLIT_PERTURBATION: f64 = 1e-3;
const CHUNK_ROWS: usize = 2048;
const MIN_RESPONSIBILITY: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Lower Cholesky factor stored row-major, with the Gaussian log normaliser.
#[derive(Debug, Clone)]
struct Factor {
    dim: usize,
    lower: Vec<f64>,
    log_norm: f64,
}

impl Factor {
    fn new(cov: &DMatrix<f64>) -> Option<Factor> {
        let chol = cov.clone().cholesky()?;
        let l = chol.l();
        let dim = cov.nrows();
        let mut lower = vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for i in 0..dim {
            for j in 0..=i {
                lower[i * dim + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        if !log_det.is_finite() {
            return None;
        }
        Some(Factor {
            dim,
            lower,
            log_norm: -0.5 * (dim as f64 * LOG_2PI + log_det),
        })
    }

    /// `log N(v; mean, cov)` with `diff = v - mean` given piecewise.
    fn log_density(&self, v: &[f64], mean: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        let mut maha = 0.0;
        for i in 0..self.dim {
            let row = &self.lower[i * self.dim..i * self.dim + i + 1];
            let mut acc = v[i] - mean[i];
            for (l, z) in row[..i].iter().zip(scratch.iter()) {
                acc -= l * z;
            }
            let z = acc / row[i];
            maha += z * z;
            scratch.push(z);
        }
        self.log_norm - 0.5 * maha
    }
}

#[derive(Debug, Clone)]
struct ComponentCache {
    joint: Factor,
    marginal: Factor,
    mean: Vec<f64>,
    /// `C_yx C_xx^-1`, row-major `dim_y x dim_x`.
    regression: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct JointGmm {
    dim_x: usize,
    dim_y: usize,
    weights: Vec<f64>,
    components: Vec<Component>,
    cache: Vec<ComponentCache>,
}

impl PartialEq for JointGmm {
    fn eq(&self, other: &Self) -> bool {
        self.dim_x == other.dim_x
            && self.dim_y == other.dim_y
            && self.weights == other.weights
            && self.components == other.components
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl JointGmm {
    pub fn new(
        dim_x: usize,
        dim_y: usize,
        weights: Vec<f64>,
        components: Vec<Component>,
    ) -> Result<Self> {
        let dim = dim_x + dim_y;
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::DimMismatch {
                expected: components.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::NumericalFailure("mixture weights are not on the simplex".into()));
        }
        let mut cache = Vec::with_capacity(components.len());
        for c in &components {
            if c.mean.len() != dim || c.cov.nrows() != dim || c.cov.ncols() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: c.mean.len(),
                });
            }
            let joint = Factor::new(&c.cov)
                .ok_or_else(|| Error::NumericalFailure("covariance is not positive definite".into()))?;
            let cxx = c.cov.view((0, 0), (dim_x, dim_x)).into_owned();
            let marginal = Factor::new(&cxx)
                .ok_or_else(|| Error::NumericalFailure("observable covariance is not positive definite".into()))?;
            let cxy = c.cov.view((0, dim_x), (dim_x, dim_y)).into_owned();
            let solved = cxx
                .cholesky()
                .ok_or_else(|| Error::NumericalFailure("observable covariance is singular".into()))?
                .solve(&cxy);
            let mut regression = vec![0.0; dim_y * dim_x];
            for r in 0..dim_y {
                for k in 0..dim_x {
                    regression[r * dim_x + k] = solved[(k, r)];
                }
            }
            cache.push(ComponentCache {
                joint,
                marginal,
                mean: c.mean.iter().copied().collect(),
                regression,
            });
        }
        Ok(JointGmm {
            dim_x,
            dim_y,
            weights,
            components,
            cache,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn dim(&self) -> usize {
        self.dim_x + self.dim_y
    }

    pub fn n_mixtures(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(Error::DimMismatch {
                expected: self.dim_x,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `log w_l + log N(z; mu_l, C_l)` for every component.
    fn joint_log_terms(&self, z: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        for ((o, c), w) in out.iter_mut().zip(&self.cache).zip(&self.weights) {
            *o = w.ln() + c.joint.log_density(z, &c.mean, scratch);
        }
    }

    /// Log density of a stacked `[x; y]` vector.
    pub fn log_likelihood(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: z.len(),
            });
        }
        let mut terms = vec![0.0; self.n_mixtures()];
        self.joint_log_terms(z, &mut terms, &mut Vec::new());
        Ok(log_sum_exp(&terms))
    }

    /// `log N(x; mu_x,l, C_xx,l)` for every component.
    pub fn marginal_log_densities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mut scratch = Vec::with_capacity(self.dim_x);
        Ok(self
            .cache
            .iter()
            .map(|c| c.marginal.log_density(x, &c.mean[..self.dim_x], &mut scratch))
            .collect())
    }

    /// Mixture posterior `p(l | x)` from the weighted observable marginals.
    /// Falls back to the uniform distribution if every term underflows.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut terms = self.marginal_log_densities(x)?;
        for (t, w) in terms.iter_mut().zip(&self.weights) {
            *t += w.ln();
        }
        let norm = log_sum_exp(&terms);
        let l = terms.len();
        if !norm.is_finite() {
            return Ok(vec![1.0 / l as f64; l]);
        }
        let mut post: Vec<f64> = terms.iter().map(|t| (t - norm).exp()).collect();
        let total: f64 = post.iter().sum();
        post.iter_mut().for_each(|p| *p /= total);
        Ok(post)
    }

    /// Per-component regression `mu_y + C_yx C_xx^-1 (x - mu_x)`.
    pub fn conditional_mean(&self, component: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let c = &self.cache[component];
        let (mx, my) = c.mean.split_at(self.dim_x);
        let diff: Vec<f64> = x.iter().zip(mx).map(|(a, b)| a - b).collect();
        Ok(my
            .iter()
            .enumerate()
            .map(|(r, m)| {
                let row = &c.regression[r * self.dim_x..(r + 1) * self.dim_x];
                m + row.iter().zip(&diff).map(|(a, d)| a * d).sum::<f64>()
            })
            .collect())
    }

    /// Soft MMSE estimate: posterior-weighted sum of component regressions.
    pub fn soft_estimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let post = self.posterior(x)?;
        let mut out = vec![0.0; self.dim_y];
        for (l, p) in post.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.conditional_mean(l, x)?) {
                *o += p * v;
            }
        }
        Ok(out)
    }

    /// Hard estimate: the most likely component's regression scaled by its
    /// posterior.
    pub fn hard_estimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let post = self.posterior(x)?;
        let best = argmax(&post);
        Ok(self
            .conditional_mean(best, x)?
            .into_iter()
            .map(|v| post[best] * v)
            .collect())
    }

    /// Best single-component observable log density, used for classification.
    pub fn best_marginal_log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self
            .marginal_log_densities(x)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// First index of the maximum; NaN entries never win.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Index of the class whose best observable component density is largest.
/// Ties go to the lowest index.
pub fn classify(bank: &[&JointGmm], x: &[f64]) -> Result<usize> {
    if bank.is_empty() {
        return Err(Error::InsufficientData("empty model bank".into()));
    }
    let scores = bank
        .iter()
        .map(|m| m.best_marginal_log_density(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax(&scores))
}

fn check_rows(data: &[Vec<f64>]) -> Result<usize> {
    let dim = data.first().map(Vec::len).ok_or(Error::EmptyInput)?;
    if let Some(bad) = data.iter().find(|r| r.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    Ok(dim)
}

fn mean_and_variance(data: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = data.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in data {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

fn variance_floor(var: &[f64]) -> Vec<f64> {
    var.iter()
        .map(|v| (VARIANCE_FLOOR * v).max(ABSOLUTE_FLOOR))
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(row, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn assign_all(data: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    data.par_iter().map(|row| nearest(row, centroids)).collect()
}

fn lloyd_step(data: &[Vec<f64>], centroids: &mut [Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let dim = centroids[0].len();
    let assign = assign_all(data, centroids);
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (row, &a) in data.iter().zip(&assign) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (i, c) in centroids.iter_mut().enumerate() {
        if counts[i] > 0 {
            for (cv, s) in c.iter_mut().zip(&sums[i]) {
                *cv = s / counts[i] as f64;
            }
        }
    }
    // Empty cells take a random member of the most populated one.
    for i in 0..centroids.len() {
        if counts[i] == 0 {
            let donor = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
            let members: Vec<usize> = (0..data.len()).filter(|&n| assign[n] == donor).collect();
            if members.len() > 1 {
                let pick = members[rng.random_range(0..members.len())];
                centroids[i] = data[pick].clone();
                counts[i] = 1;
                counts[donor] -= 1;
            }
        }
    }
    assign
}

/// LBG codebook by binary splitting, converted into an initial mixture.
pub fn vq_initialize(
    data: &[Vec<f64>],
    dim_x: usize,
    n_mixtures: usize,
    seed: u64,
) -> Result<JointGmm> {
    if n_mixtures == 0 {
        return Err(Error::InsufficientData("zero mixtures requested".into()));
    }
    if data.len() < 2 * n_mixtures {
        return Err(Error::InsufficientData(format!(
            "{} vectors for {} mixtures (need at least {})",
            data.len(),
            n_mixtures,
            2 * n_mixtures
        )));
    }
    let dim = check_rows(data)?;
    if dim_x == 0 || dim_x >= dim {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: dim_x,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mean, var) = mean_and_variance(data, dim);
    let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let mut centroids = vec![mean];
    let mut assign = vec![0usize; data.len()];
    while centroids.len() < n_mixtures {
        let current = centroids.len();
        let n_split = current.min(n_mixtures - current);
        let mut counts = vec![0usize; current];
        for &a in &assign {
            counts[a] += 1;
        }
        let mut order: Vec<usize> = (0..current).collect();
        order.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
        for &i in &order[..n_split] {
            let base = centroids[i].clone();
            let up: Vec<f64> = base.iter().zip(&std).map(|(c, s)| c + SPLIT_PERTURBATION * s).collect();
            let down: Vec<f64> = base.iter().zip(&std).map(|(c, s)| c - SPLIT_PERTURBATION * s).collect();
            centroids[i] = up;
            centroids.push(down);
        }
        for _ in 0..LLOYD_ITERATIONS {
            assign = lloyd_step(data, &mut centroids, &mut rng);
        }
    }
    if n_mixtures > 1 {
        assign = assign_all(data, &centroids);
    }

    let floor = variance_floor(&var);
    let n = data.len() as f64;
    let mut counts = vec![0usize; n_mixtures];
    for &a in &assign {
        counts[a] += 1;
    }
    let mut weights: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64 / n).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut components = Vec::with_capacity(n_mixtures);
    for (k, centroid) in centroids.iter().enumerate() {
        let members: Vec<&Vec<f64>> = data.iter().zip(&assign).filter(|(_, &a)| a == k).map(|(r, _)| r).collect();
        let mut cov = DMatrix::zeros(dim, dim);
        let mut mu = DVector::from_column_slice(centroid);
        if members.is_empty() {
            for i in 0..dim {
                cov[(i, i)] = var[i];
            }
        } else {
            let m = members.len() as f64;
            mu = DVector::zeros(dim);
            for r in &members {
                for i in 0..dim {
                    mu[i] += r[i];
                }
            }
            mu /= m;
            for r in &members {
                for i in 0..dim {
                    let di = r[i] - mu[i];
                    for j in 0..=i {
                        cov[(i, j)] += di * (r[j] - mu[j]);
                    }
                }
            }
            for i in 0..dim {
                for j in 0..=i {
                    let v = cov[(i, j)] / m;
                    cov[(i, j)] = v;
                    cov[(j, i)] = v;
                }
            }
        }
        for i in 0..dim {
            cov[(i, i)] += floor[i];
        }
        components.push(Component { mean: mu, cov });
    }
    build_with_repair(dim_x, dim - dim_x, weights, components, &floor)
}

/// Builds the model, inflating the covariance floor if a factorisation fails.
fn build_with_repair(
    dim_x: usize,
    dim_y: usize,
    weights: Vec<f64>,
    mut components: Vec<Component>,
    floor: &[f64],
) -> Result<JointGmm> {
    for attempt in 0..6 {
        match JointGmm::new(dim_x, dim_y, weights.clone(), components.clone()) {
            Ok(model) => return Ok(model),
            Err(Error::NumericalFailure(msg)) => {
                if attempt == 5 {
                    return Err(Error::NumericalFailure(msg));
                }
                let boost = 10f64.powi(attempt + 1);
                for c in &mut components {
                    for (i, f) in floor.iter().enumerate() {
                        c.cov[(i, i)] += boost * f;
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 50,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub model: JointGmm,
    /// Average log-likelihood of each successive model, the returned one last.
    pub log_likelihood: Vec<f64>,
    /// Number of M-steps performed.
    pub iterations: usize,
}

impl EmOutcome {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().expect("at least one evaluation")
    }
}

/// EM accumulators, centred on the means of the model that produced them.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    dim: usize,
    pub responsibility: Vec<f64>,
    first: Vec<Vec<f64>>,
    // Packed lower triangles.
    second: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub count: usize,
}

impl SufficientStats {
    fn new(n_mixtures: usize, dim: usize) -> Self {
        SufficientStats {
            dim,
            responsibility: vec![0.0; n_mixtures],
            first: vec![vec![0.0; dim]; n_mixtures],
            second: vec![vec![0.0; dim * (dim + 1) / 2]; n_mixtures],
            log_likelihood: 0.0,
            count: 0,
        }
    }

    /// Associative merge of two partial accumulations.
    pub fn merge(&mut self, other: &SufficientStats) {
        for (a, b) in self.responsibility.iter_mut().zip(&other.responsibility) {
            *a += b;
        }
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.log_likelihood += other.log_likelihood;
        self.count += other.count;
    }

    pub fn accumulate(model: &JointGmm, rows: &[Vec<f64>]) -> Self {
        let l = model.n_mixtures();
        let dim = model.dim();
        let mut stats = SufficientStats::new(l, dim);
        let mut terms = vec![0.0; l];
        let mut scratch = Vec::with_capacity(dim);
        let mut diff = vec![0.0; dim];
        for row in rows {
            model.joint_log_terms(row, &mut terms, &mut scratch);
            let norm = log_sum_exp(&terms);
            stats.log_likelihood += norm;
            stats.count += 1;
            for (k, t) in terms.iter().enumerate() {
                let r = (t - norm).exp();
                if !(r >= MIN_RESPONSIBILITY) {
                    continue;
                }
                stats.responsibility[k] += r;
                let mean = &model.cache[k].mean;
                for i in 0..dim {
                    diff[i] = row[i] - mean[i];
                    stats.first[k][i] += r * diff[i];
                }
                let second = &mut stats.second[k];
                let mut idx = 0;
                for i in 0..dim {
                    let ri = r * diff[i];
                    for j in 0..=i {
                        second[idx] += ri * diff[j];
                        idx += 1;
                    }
                }
            }
        }
        stats
    }
}

fn expectation(model: &JointGmm, data: &[Vec<f64>]) -> SufficientStats {
    // Fixed chunking plus an ordered merge keeps results independent of the
    // thread count.
    let parts: Vec<SufficientStats> = data
        .par_chunks(CHUNK_ROWS)
        .map(|chunk| SufficientStats::accumulate(model, chunk))
        .collect();
    let mut iter = parts.into_iter();
    let mut total = iter.next().expect("non-empty data");
    for p in iter {
        total.merge(&p);
    }
    total
}

fn maximization(model: &JointGmm, stats: &SufficientStats, floor: &[f64]) -> Result<JointGmm> {
    let l = model.n_mixtures();
    let dim = stats.dim;
    let n = stats.count as f64;
    let mut weights = Vec::with_capacity(l);
    let mut components = Vec::with_capacity(l);
    let mut starved = Vec::new();
    for k in 0..l {
        let nk = stats.responsibility[k];
        let w = nk / n;
        if !(w >= 1e-6 / l as f64) {
            starved.push(k);
            weights.push(0.0);
            components.push(model.components[k].clone());
            continue;
        }
        let shift: Vec<f64> = stats.first[k].iter().map(|s| s / nk).collect();
        let mean = DVector::from_iterator(dim, model.cache[k].mean.iter().zip(&shift).map(|(m, s)| m + s));
        let mut cov = DMatrix::zeros(dim, dim);
        let mut idx = 0;
        for i in 0..dim {
            for j in 0..=i {
                let v = stats.second[k][idx] / nk - shift[i] * shift[j];
                cov[(i, j)] = v;
                cov[(j, i)] = v;
                idx += 1;
            }
        }
        for i in 0..dim {
            cov[(i, i)] += floor[i];
        }
        weights.push(w);
        components.push(Component { mean, cov });
    }
    // Re-seed starved mixtures by splitting the heaviest one.
    for k in starved {
        let heavy = argmax(&weights);
        let spread: Vec<f64> = (0..dim)
            .map(|i| SPLIT_PERTURBATION * components[heavy].cov[(i, i)].sqrt())
            .collect();
        let base = components[heavy].mean.clone();
        components[heavy].mean = DVector::from_iterator(dim, base.iter().zip(&spread).map(|(m, s)| m - s));
        components[k] = Component {
            mean: DVector::from_iterator(dim, base.iter().zip(&spread).map(|(m, s)| m + s)),
            cov: components[heavy].cov.clone(),
        };
        weights[heavy] *= 0.5;
        weights[k] = weights[heavy];
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    build_with_repair(model.dim_x, model.dim_y, weights, components, floor)
}

/// Expectation-maximisation from `init` until the relative improvement of the
/// average log-likelihood drops below `cfg.tol` or `cfg.max_iter` M-steps ran.
pub fn em_train(init: &JointGmm, data: &[Vec<f64>], cfg: &EmConfig) -> Result<EmOutcome> {
    let dim = check_rows(data)?;
    if dim != init.dim() {
        return Err(Error::DimMismatch {
            expected: init.dim(),
            actual: dim,
        });
    }
    let (_, var) = mean_and_variance(data, dim);
    let floor = variance_floor(&var);
    let mut model = init.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let stats = expectation(&model, data);
        let ll = stats.log_likelihood / stats.count as f64;
        if !ll.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite log-likelihood at iteration {iterations}"
            )));
        }
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < cfg.tol);
        trace.push(ll);
        if converged || iterations >= cfg.max_iter {
            break;
        }
        model = maximization(&model, &stats, &floor)?;
        iterations += 1;
    }
    Ok(EmOutcome {
        model,
        log_likelihood: trace,
        iterations,
    })
}

/// Gaussian log density evaluated directly, without any cached factor.
#[doc(hidden)]
pub fn reference_log_density(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let maha = (diff.transpose() * inv * &diff)[(0, 0)];
    -0.5 * (d as f64 * (2.0 * PI).ln() + cov.determinant().ln() + maha)
}
