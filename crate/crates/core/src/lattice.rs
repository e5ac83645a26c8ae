//! Exact finite-state surrogate of the birth-and-death dynamics.
//!
//! The window is cut into `m` cells holding at most one point each. Cell `i`
//! is born at rate `cell_volume · b(center_i, η)` and dies at rate 1, giving a
//! reversible chain on `2^m` occupancy patterns. Patterns are bit masks: bit
//! `i` set means cell `i` is occupied.
//!
//! The generator is kept as a table of flip rates, which is all that the
//! evolution and the entropy functionals need. A dense matrix is only
//! materialized for eigenvalue work.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::{Configuration, Point, Window};
use crate::error::{Error, Result};
use crate::interaction::InteractionSpec;

pub const MAX_CELLS: usize = 14;
/// Largest lattice for which dense matrices are built.
pub const MAX_DENSE_CELLS: usize = 10;
/// Largest `λΔt` handled in one uniformization pass.
const UNIFORMIZATION_CHUNK: f64 = 50.0;
const UNIFORMIZATION_TAIL: f64 = 1e-17;
/// Mixing weight used to make a degenerate initial law strictly positive.
pub const REGULARIZATION: f64 = 1e-9;

/// Cells of a window with an interaction; birth rates and conditional
/// energies tabulated for every pattern.
#[derive(Clone, Debug)]
pub struct LatticeModel {
    spec: InteractionSpec,
    ambient: Window,
    centers: Vec<Point>,
    cell_volume: f64,
    /// `energies[η·m + i]`: conditional energy (without β) of adding cell
    /// `i` to `η` with cell `i` cleared.
    energies: Vec<f64>,
    /// Flip rates: birth rate when `i` is vacant in `η`, else 1.
    flips: Vec<f64>,
}

impl LatticeModel {
    /// Regular grid of `shape[0] (× shape[1])` cells on `window`.
    pub fn regular(spec: InteractionSpec, window: &Window, shape: &[usize]) -> Result<Self> {
        if shape.len() != window.dim() || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!("shape {shape:?} does not fit a {}-d window", window.dim())));
        }
        let h: Vec<f64> = (0..window.dim()).map(|i| window.side(i) / shape[i] as f64).collect();
        let mut centers = Vec::new();
        if window.dim() == 1 {
            for a in 0..shape[0] {
                centers.push(Point::on_line(window.lo(0) + (a as f64 + 0.5) * h[0]));
            }
        } else {
            for a in 0..shape[0] {
                for b in 0..shape[1] {
                    centers.push(Point::planar(
                        window.lo(0) + (a as f64 + 0.5) * h[0],
                        window.lo(1) + (b as f64 + 0.5) * h[1],
                    ));
                }
            }
        }
        Self::from_sites(spec, window, centers, h.iter().product())
    }

    pub fn from_sites(spec: InteractionSpec, window: &Window, centers: Vec<Point>, cell_volume: f64) -> Result<Self> {
        let m = centers.len();
        if m > MAX_CELLS {
            return Err(Error::LatticeTooLarge { m, max: MAX_CELLS });
        }
        if m == 0 || !(cell_volume > 0.0) {
            return Err(Error::InvalidArgument("lattice needs at least one cell of positive volume".into()));
        }
        if spec.dim() != window.dim() {
            return Err(Error::InvalidSpec(format!(
                "interaction is {}-d but the window is {}-d",
                spec.dim(),
                window.dim()
            )));
        }
        if let Some(p) = centers.iter().find(|p| !window.contains(p)) {
            return Err(Error::OutsideWindow(p.coord(0), p.coord(1)));
        }
        let range = spec.range();
        let ambient = window.dilate(range);
        let n = 1usize << m;
        let mut energies = vec![0.0; n * m];
        let mut flips = vec![1.0; n * m];
        let mut cfg = Configuration::new(ambient, range);
        for eta in 0..n {
            for i in 0..m {
                if eta & (1 << i) != 0 {
                    continue;
                }
                cfg = occupancy_into(cfg, &centers, eta)?;
                let h = spec.conditional_energy(&centers[i], &cfg)?;
                let b = spec.birth_rate(&centers[i], &cfg)?;
                energies[eta * m + i] = h;
                energies[(eta | (1 << i)) * m + i] = h;
                flips[eta * m + i] = cell_volume * b;
            }
        }
        Ok(Self {
            spec,
            ambient,
            centers,
            cell_volume,
            energies,
            flips,
        })
    }

    pub fn m(&self) -> usize {
        self.centers.len()
    }

    pub fn n_states(&self) -> usize {
        1 << self.m()
    }

    pub fn spec(&self) -> &InteractionSpec {
        &self.spec
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Birth rate of cell `i` given the other cells of `eta`.
    pub fn birth_rate(&self, eta: usize, i: usize) -> f64 {
        self.flips[(eta & !(1 << i)) * self.m() + i]
    }

    pub fn energy(&self, eta: usize, i: usize) -> f64 {
        self.energies[eta * self.m() + i]
    }

    pub fn occupancy(&self, eta: usize) -> Result<Configuration> {
        occupancy_into(Configuration::new(self.ambient, self.spec.range()), &self.centers, eta)
    }

    pub fn generator(&self) -> Generator {
        Generator::from_flips(self.m(), self.flips.clone()).expect("model flip table is well formed")
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let window = self.ambient.erode(self.spec.range()).expect("ambient is a dilation");
        Self::from_sites(self.spec.with_beta(beta)?, &window, self.centers.clone(), self.cell_volume)
    }
}

fn occupancy_into(mut cfg: Configuration, centers: &[Point], eta: usize) -> Result<Configuration> {
    for p in centers {
        cfg.remove(p);
    }
    for (i, p) in centers.iter().enumerate() {
        if eta & (1 << i) != 0 {
            cfg.insert(*p)?;
        }
    }
    Ok(cfg)
}

/// Generator of a single-flip chain on `{0,1}^m`.
#[derive(Clone, Debug)]
pub struct Generator {
    m: usize,
    flips: Vec<f64>,
    exit: Vec<f64>,
    max_exit: f64,
}

impl Generator {
    /// From flip rates `flips[η·m + i]` (the rate of toggling cell `i`).
    pub fn from_flips(m: usize, flips: Vec<f64>) -> Result<Self> {
        if m > MAX_CELLS {
            return Err(Error::LatticeTooLarge { m, max: MAX_CELLS });
        }
        let n = 1usize << m;
        if flips.len() != n * m || flips.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument("flip table must hold 2^m · m finite nonnegative rates".into()));
        }
        let exit: Vec<f64> = flips.chunks(m.max(1)).map(|c| c.iter().sum()).collect();
        let exit = if m == 0 { vec![0.0] } else { exit };
        let max_exit = exit.iter().cloned().fold(0.0, f64::max);
        Ok(Self { m, flips, exit, max_exit })
    }

    /// Births at `birth(η, i)` into vacant cells, unit deaths.
    pub fn birth_death<F: Fn(usize, usize) -> f64>(m: usize, birth: F) -> Result<Self> {
        let n = 1usize << m;
        let mut flips = vec![1.0; n * m];
        for eta in 0..n {
            for i in 0..m {
                if eta & (1 << i) == 0 {
                    flips[eta * m + i] = birth(eta, i);
                }
            }
        }
        Self::from_flips(m, flips)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_states(&self) -> usize {
        1 << self.m
    }

    pub fn flip_rate(&self, eta: usize, i: usize) -> f64 {
        self.flips[eta * self.m + i]
    }

    pub fn exit_rate(&self, eta: usize) -> f64 {
        self.exit[eta]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.max_exit
    }

    pub fn dense(&self) -> Result<DMatrix<f64>> {
        if self.m > MAX_DENSE_CELLS {
            return Err(Error::LatticeTooLarge { m: self.m, max: MAX_DENSE_CELLS });
        }
        let n = self.n_states();
        let mut q = DMatrix::zeros(n, n);
        for eta in 0..n {
            for i in 0..self.m {
                q[(eta, eta ^ (1 << i))] = self.flip_rate(eta, i);
            }
            q[(eta, eta)] = -self.exit[eta];
        }
        Ok(q)
    }

    /// `(Qf)(η) = Σ_i rate(η, i) (f(η^i) − f(η))`.
    pub fn apply_right(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply_right_into(f, &mut out);
        out
    }

    fn apply_right_into(&self, f: &[f64], out: &mut [f64]) {
        for (eta, o) in out.iter_mut().enumerate() {
            let fe = f[eta];
            let row = &self.flips[eta * self.m..(eta + 1) * self.m];
            *o = row.iter().enumerate().map(|(i, r)| r * (f[eta ^ (1 << i)] - fe)).sum();
        }
    }

    /// Row vector times `Q`.
    pub fn apply_left(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mu.len()];
        self.apply_left_into(mu, &mut out);
        out
    }

    fn apply_left_into(&self, mu: &[f64], out: &mut [f64]) {
        for (eta, o) in out.iter_mut().enumerate() {
            let inflow: f64 = (0..self.m).map(|i| {
                let from = eta ^ (1 << i);
                mu[from] * self.flips[from * self.m + i]
            }).sum();
            *o = inflow - mu[eta] * self.exit[eta];
        }
    }

    /// `v·e^{tQ}` by uniformization; works for signed vectors too.
    pub fn evolve_left(&self, v: &[f64], t: f64) -> Vec<f64> {
        self.uniformize(v, t, |g, x, out| g.apply_left_into(x, out))
    }

    /// `e^{tQ}f` by uniformization.
    pub fn evolve_right(&self, f: &[f64], t: f64) -> Vec<f64> {
        self.uniformize(f, t, |g, x, out| g.apply_right_into(x, out))
    }

    fn uniformize<A: Fn(&Self, &[f64], &mut [f64])>(&self, v: &[f64], t: f64, apply: A) -> Vec<f64> {
        assert!(t >= 0.0 && t.is_finite(), "evolution time must be finite and >= 0");
        let lambda = self.max_exit;
        if t == 0.0 || lambda == 0.0 {
            return v.to_vec();
        }
        let chunks = (lambda * t / UNIFORMIZATION_CHUNK).ceil().max(1.0) as usize;
        let dt = t / chunks as f64;
        let a = lambda * dt;
        let mut cur = v.to_vec();
        let mut term = vec![0.0; v.len()];
        let mut q = vec![0.0; v.len()];
        for _ in 0..chunks {
            let mut weight = (-a).exp();
            let mut acc: Vec<f64> = cur.iter().map(|x| weight * x).collect();
            term.copy_from_slice(&cur);
            let mut k = 0usize;
            loop {
                k += 1;
                // term ← term·P with P = I + Q/λ
                apply(self, &term, &mut q);
                for (x, dq) in term.iter_mut().zip(&q) {
                    *x += dq / lambda;
                }
                weight *= a / k as f64;
                for (s, x) in acc.iter_mut().zip(&term) {
                    *s += weight * x;
                }
                let next = weight * a / (k + 1) as f64;
                if (k + 1) as f64 > a && next / (1.0 - a / (k + 2) as f64) < UNIFORMIZATION_TAIL {
                    break;
                }
            }
            cur = acc;
        }
        cur
    }

    /// Gibbs weights by telescoping birth rates along the lowest-bit path.
    pub fn stationary(&self) -> StateDist {
        let n = self.n_states();
        let mut logw = vec![0.0; n];
        for eta in 1..n {
            let j = eta.trailing_zeros() as usize;
            let prev = eta ^ (1 << j);
            logw[eta] = logw[prev] + (self.flip_rate(prev, j) / self.flip_rate(eta, j)).ln();
        }
        let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        StateDist { probs: w.into_iter().map(|x| x / z).collect() }
    }

    /// `max |ν(η) q(η→η') − ν(η') q(η'→η)|` over all flips.
    pub fn detailed_balance_residual(&self, nu: &StateDist) -> f64 {
        let mut worst = 0.0f64;
        for eta in 0..self.n_states() {
            for i in 0..self.m {
                let other = eta ^ (1 << i);
                let r = nu.probs[eta] * self.flip_rate(eta, i) - nu.probs[other] * self.flip_rate(other, i);
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

/// Probability vector over the `2^m` patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDist {
    probs: Vec<f64>,
}

impl StateDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if !probs.len().is_power_of_two() {
            return Err(Error::InvalidArgument(format!("{} states is not a power of two", probs.len())));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    /// Normalized independent `Exp(1)` weights: strictly positive, spread
    /// over the simplex.
    pub fn random_positive<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).map(|x: f64| x.max(1e-300)).collect();
        let z: f64 = w.iter().sum();
        Self { probs: w.into_iter().map(|x| x / z).collect() }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Mixes with `nu` at weight `REGULARIZATION` if some state has zero
    /// mass; the flag records whether that happened.
    pub fn regularize(&self, nu: &StateDist) -> (StateDist, bool) {
        if self.is_strictly_positive() {
            return (self.clone(), false);
        }
        let e = REGULARIZATION;
        let probs = self.probs.iter().zip(&nu.probs).map(|(m, n)| (1.0 - e) * m + e * n).collect();
        (StateDist { probs }, true)
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        self.probs.iter().zip(f).map(|(p, x)| p * x).sum()
    }

    pub fn evolve(&self, q: &Generator, t: f64) -> StateDist {
        StateDist { probs: q.evolve_left(&self.probs, t) }
    }

    pub fn total_variation(&self, other: &StateDist) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// Signed difference `self − nu`.
    pub fn deviation(&self, nu: &StateDist) -> Vec<f64> {
        self.probs.iter().zip(&nu.probs).map(|(a, b)| a - b).collect()
    }
}

/// `φ(1+u) = (1+u) ln(1+u) − u`, accurate for small `u`.
fn entropy_kernel(u: f64) -> f64 {
    if u.abs() < 0.25 {
        // Σ_{k≥2} (−u)^k / (k(k−1))
        let mut sum = 0.0;
        let mut pow = u * u;
        let mut k = 2.0;
        while k < 60.0 {
            let term = pow / (k * (k - 1.0));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
            pow *= -u;
            k += 1.0;
        }
        sum
    } else if u <= -1.0 {
        1.0
    } else {
        (1.0 + u) * u.ln_1p() - u
    }
}

/// `I(μ|ν) = Σ μ ln(μ/ν)`, with `0 ln 0 = 0`.
pub fn rel_entropy(mu: &StateDist, nu: &StateDist) -> f64 {
    rel_entropy_deviation(&mu.deviation(nu), nu)
}

/// Relative entropy of `ν + d` with respect to `ν`; keeps full precision
/// when `d` is tiny.
pub fn rel_entropy_deviation(d: &[f64], nu: &StateDist) -> f64 {
    d.iter().zip(&nu.probs).map(|(x, n)| n * entropy_kernel(x / n)).sum::<f64>().max(0.0)
}

/// Discrete Fisher information (Dirichlet form of `g` against `ln g`,
/// `g = dμ/dν`); `+∞` when `μ` is not strictly positive.
pub fn fisher(mu: &StateDist, nu: &StateDist, q: &Generator) -> f64 {
    if !mu.is_strictly_positive() {
        return f64::INFINITY;
    }
    fisher_deviation(&mu.deviation(nu), nu, q)
}

pub fn fisher_deviation(d: &[f64], nu: &StateDist, q: &Generator) -> f64 {
    let u: Vec<f64> = d.iter().zip(&nu.probs).map(|(x, n)| x / n).collect();
    let m = q.m();
    let birth = |eta: usize, i: usize| q.flip_rate(eta, i);
    fisher_with_rates(m, &birth, &nu.probs, &u)
}

/// `Σ_η Σ_{i vacant} rate ν(η) Δg Δln g` with `g = 1 + u`.
fn fisher_with_rates(m: usize, birth: &dyn Fn(usize, usize) -> f64, nu: &[f64], u: &[f64]) -> f64 {
    let mut total = 0.0;
    for eta in 0..nu.len() {
        for i in 0..m {
            if eta & (1 << i) != 0 {
                continue;
            }
            let up = eta | (1 << i);
            let dg = u[up] - u[eta];
            let dlog = u[up].ln_1p() - u[eta].ln_1p();
            total += birth(eta, i) * nu[eta] * dg * dlog;
        }
    }
    total
}

/// `μ[(−Q) ln(dμ/dν)]`.
pub fn entropy_production(mu: &StateDist, nu: &StateDist, q: &Generator) -> f64 {
    if !mu.is_strictly_positive() {
        return f64::INFINITY;
    }
    let log_g: Vec<f64> = mu.probs.iter().zip(&nu.probs).map(|(a, b)| (a / b).ln()).collect();
    -mu.expect(&q.apply_right(&log_g))
}

/// Adaptive Simpson on `[a, b]` with Richardson acceptance.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, ends: (f64, f64, f64), tol: f64, depth: u32) -> f64 {
    let (fa, fm, fb) = ends;
    let m = 0.5 * (a + b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let (lm, rm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = (m - a) / 6.0 * (fa + 4.0 * lm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * rm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, (fa, lm, fm), 0.5 * tol, depth - 1)
        + adaptive_simpson(f, m, b, (fm, rm, fb), 0.5 * tol, depth - 1)
}

/// Total Simpson error budget for the integrated Fisher information.
const DE_BRUIJN_QUADRATURE_TOL: f64 = 1e-10;
const DE_BRUIJN_MAX_DEPTH: u32 = 12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeBruijnReport {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub fisher: Vec<f64>,
    pub integrated_fisher: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// The initial law had to be mixed with `ν` to be strictly positive.
    pub regularized: bool,
}

impl DeBruijnReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,entropy,fisher,integrated_fisher,residual")?;
        for j in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[j], self.entropy[j], self.fisher[j], self.integrated_fisher[j], self.residuals[j]
            )?;
        }
        Ok(())
    }
}

/// `I(μ0|ν) − I(μ_t|ν) − ∫_0^t 𝒥(μ_s|ν) ds` at every node of a uniform grid
/// with `n_grid` points on `[0, horizon]`.
pub fn de_bruijn_check(mu0: &StateDist, nu: &StateDist, q: &Generator, horizon: f64, n_grid: usize) -> Result<DeBruijnReport> {
    if n_grid < 3 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument("need a positive horizon and at least 3 grid points".into()));
    }
    let (mu0, regularized) = mu0.regularize(nu);
    let h = horizon / (n_grid - 1) as f64;
    let times: Vec<f64> = (0..n_grid).map(|j| j as f64 * h).collect();
    let mut d = mu0.deviation(nu);
    let mut entropy = vec![rel_entropy_deviation(&d, nu)];
    let mut fish = vec![fisher_deviation(&d, nu, q)];
    let mut integrated = vec![0.0];
    let tol = DE_BRUIJN_QUADRATURE_TOL / (n_grid - 1) as f64;
    for _ in 1..n_grid {
        let start = d.clone();
        let at = |s: f64| fisher_deviation(&q.evolve_left(&start, s), nu, q);
        d = q.evolve_left(&start, h);
        let end = fisher_deviation(&d, nu, q);
        let piece = adaptive_simpson(&at, 0.0, h, (*fish.last().expect("nonempty"), at(0.5 * h), end), tol, DE_BRUIJN_MAX_DEPTH);
        integrated.push(integrated.last().expect("nonempty") + piece);
        entropy.push(rel_entropy_deviation(&d, nu));
        fish.push(end);
    }
    let residuals: Vec<f64> = (0..n_grid).map(|j| entropy[0] - entropy[j] - integrated[j]).collect();
    let max_residual = residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(DeBruijnReport {
        times,
        entropy,
        fisher: fish,
        integrated_fisher: integrated,
        residuals,
        max_residual,
        regularized,
    })
}

/// `I(μ_t|ν)` along `times` (nondecreasing), evolved through the deviation
/// from `ν` so late values keep their precision.
pub fn entropy_curve(mu0: &StateDist, nu: &StateDist, q: &Generator, times: &[f64]) -> Vec<f64> {
    let mut d = mu0.deviation(nu);
    let mut now = 0.0;
    times
        .iter()
        .map(|&t| {
            d = q.evolve_left(&d, t - now);
            now = t;
            rel_entropy_deviation(&d, nu)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesReport {
    /// `Σ_{k≤K} t^k/k! μ[Q^k f]` for `K = 0..=k_max`.
    pub partial_sums: Vec<f64>,
    pub truth: f64,
    /// `|μ[Q^k f]|` against `‖f‖∞ (2λ)^k`, `λ` the largest exit rate.
    pub term_magnitudes: Vec<f64>,
    pub crude_bounds: Vec<f64>,
    /// `‖f‖∞ Σ_{k>K} (2λt)^k / k!` for the final `K`.
    pub remainder_bound: f64,
}

pub fn series_expansion_check(mu: &StateDist, f: &[f64], q: &Generator, t: f64, k_max: usize) -> SeriesReport {
    let sup = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let two_lambda = 2.0 * q.max_exit_rate();
    let mut qk = f.to_vec();
    let mut partial_sums = Vec::with_capacity(k_max + 1);
    let mut term_magnitudes = Vec::with_capacity(k_max + 1);
    let mut crude_bounds = Vec::with_capacity(k_max + 1);
    let mut coef = 1.0;
    let mut sum = 0.0;
    for k in 0..=k_max {
        if k > 0 {
            qk = q.apply_right(&qk);
            coef *= t / k as f64;
        }
        let moment = mu.expect(&qk);
        sum += coef * moment;
        partial_sums.push(sum);
        term_magnitudes.push(moment.abs());
        crude_bounds.push(sup * two_lambda.powi(k as i32));
    }
    let truth = mu.evolve(q, t).expect(f);
    let x = two_lambda * t;
    let mut term = 1.0;
    let mut remainder = 0.0;
    for k in 1..=(k_max + 200) {
        term *= x / k as f64;
        if k > k_max {
            remainder += term;
            if term < 1e-18 * remainder {
                break;
            }
        }
    }
    SeriesReport {
        partial_sums,
        truth,
        term_magnitudes,
        crude_bounds,
        remainder_bound: sup * remainder,
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KappaBound {
    pub epsilon: f64,
    pub kappa: f64,
    /// `log₊ ‖b‖∞` at unit inverse temperature.
    pub log_b_sup: f64,
}

/// `ε(β) = e^{β L} sup_{i, η} Σ_{y ≠ i, |y−i| ≤ R} v [1 − exp(−β ∇⁺_y∇⁺_i H(η) − 2βL)]`
/// with `L = log₊ ‖b‖∞`, `v` the cell volume and the supremum over patterns
/// where both `i` and `y` are vacant; `κ = 1 − ε`.
pub fn kappa_bound(model: &LatticeModel, beta: f64) -> Result<KappaBound> {
    let unit = model.spec().with_beta(1.0)?;
    let log_b_sup = unit.rate_bounds().1.ln().max(0.0);
    let m = model.m();
    let range = model.spec().range();
    let neighbors: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&y| y != i && model.centers[i].dist(&model.centers[y]) <= range)
                .collect()
        })
        .collect();
    let mut sup = f64::NEG_INFINITY;
    for eta in 0..model.n_states() {
        for i in (0..m).filter(|i| eta & (1 << i) == 0) {
            let sum: f64 = neighbors[i]
                .iter()
                .filter(|&&y| eta & (1 << y) == 0)
                .map(|&y| {
                    let second = model.energy(eta | (1 << y), i) - model.energy(eta, i);
                    model.cell_volume * (1.0 - (-beta * second - 2.0 * beta * log_b_sup).exp())
                })
                .sum();
            sup = sup.max(sum);
        }
    }
    let epsilon = (beta * log_b_sup).exp() * sup;
    Ok(KappaBound { epsilon, kappa: 1.0 - epsilon, log_b_sup })
}

/// Second-smallest eigenvalue of `−Q` symmetrized in `ℓ²(ν)`.
pub fn spectral_gap(q: &Generator, nu: &StateDist) -> Result<f64> {
    let dense = q.dense()?;
    let n = q.n_states();
    let s = DMatrix::from_fn(n, n, |a, b| {
        let sym = 0.5 * ((nu.probs[a] / nu.probs[b]).sqrt() * dense[(a, b)] + (nu.probs[b] / nu.probs[a]).sqrt() * dense[(b, a)]);
        -sym
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig.get(1).copied().unwrap_or(0.0))
}

/// `ν[(T_t f) g] − ν[f (T_t g)]`.
pub fn reversibility_check(nu: &StateDist, q: &Generator, f: &[f64], g: &[f64], t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let tf = q.evolve_right(f, t);
    let tg = q.evolve_right(g, t);
    nu.probs.iter().enumerate().map(|(eta, p)| p * (tf[eta] * g[eta] - f[eta] * tg[eta])).sum()
}

/// Ten fixed probe pairs built from occupation counts and single-cell
/// indicators.
pub fn probe_battery(m: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = 1usize << m;
    let count = |eta: usize| eta.count_ones() as f64;
    let cell = |i: usize| move |eta: usize| ((eta >> (i % m.max(1))) & 1) as f64;
    let table = |f: &dyn Fn(usize) -> f64| (0..n).map(f).collect::<Vec<f64>>();
    let last = m.saturating_sub(1);
    vec![
        (table(&cell(0)), table(&count)),
        (table(&cell(0)), table(&cell(last))),
        (table(&count), table(&|e| count(e).powi(2))),
        (table(&|e| (e == 0) as u8 as f64), table(&count)),
        (table(&|e| (e == n - 1) as u8 as f64), table(&cell(0))),
        (table(&|e| (-count(e)).exp()), table(&cell(m / 2))),
        (table(&|e| e as f64 / n as f64), table(&count)),
        (table(&|e| ((e * 2_654_435_761) % 97) as f64 / 97.0), table(&cell(last))),
        (table(&|e| (count(e) - 0.5 * m as f64).abs()), table(&|e| (e == 0) as u8 as f64)),
        (table(&|e| (e.trailing_zeros().min(m as u32)) as f64), table(&|e| (e.leading_zeros()) as f64)),
    ]
}

/// Largest absolute reversibility residual over the probe battery.
pub fn reversibility_battery(nu: &StateDist, q: &Generator, t: f64) -> f64 {
    probe_battery(q.m())
        .iter()
        .map(|(f, g)| reversibility_check(nu, q, f, g, t).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteTimeReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub min_distance: f64,
    pub nonincreasing: bool,
}

/// Total-variation distance `‖μ_t − ν‖` on `n_grid` points of `(0, horizon]`.
pub fn finite_time_gibbs_check(mu0: &StateDist, nu: &StateDist, q: &Generator, horizon: f64, n_grid: usize) -> FiniteTimeReport {
    let h = horizon / n_grid as f64;
    let mut d = mu0.deviation(nu);
    let mut times = Vec::with_capacity(n_grid);
    let mut distances = Vec::with_capacity(n_grid);
    for j in 1..=n_grid {
        d = q.evolve_left(&d, h);
        times.push(j as f64 * h);
        distances.push(0.5 * d.iter().map(|x| x.abs()).sum::<f64>());
    }
    let min_distance = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let nonincreasing = distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    FiniteTimeReport {
        times,
        distances,
        min_distance,
        nonincreasing,
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundaryVariants {
    /// Interior cells see an empty collar.
    pub free: f64,
    /// Interior rates averaged over the collar under `ν(· | η_interior)`.
    pub averaged: f64,
    pub difference: f64,
}

/// Fisher information of the interior marginal `mu` against the interior
/// marginal of the model's Gibbs law, with free and `ν`-averaged collar.
/// Interior patterns index cells in the order listed in `interior`.
pub fn fisher_bc_variants(mu: &StateDist, model: &LatticeModel, interior: &[usize]) -> Result<BoundaryVariants> {
    let m = model.m();
    let k = interior.len();
    if interior.iter().any(|&i| i >= m) || (1usize << k) != mu.len() {
        return Err(Error::InvalidArgument("interior cells and law size do not match".into()));
    }
    let mut seen = 0usize;
    for &i in interior {
        if seen & (1 << i) != 0 {
            return Err(Error::InvalidArgument(format!("cell {i} listed twice")));
        }
        seen |= 1 << i;
    }
    if !mu.is_strictly_positive() {
        return Ok(BoundaryVariants { free: f64::INFINITY, averaged: f64::INFINITY, difference: f64::NAN });
    }
    let nu = model.generator().stationary();
    let embed = |p: usize| (0..k).filter(|&a| p & (1 << a) != 0).fold(0usize, |e, a| e | (1 << interior[a]));
    let project = |eta: usize| (0..k).filter(|&a| eta & (1 << interior[a]) != 0).fold(0usize, |p, a| p | (1 << a));

    let n_int = 1usize << k;
    let mut nu_int = vec![0.0; n_int];
    // Σ over collar of ν(η)(b − b_free) per interior pattern and cell.
    let mut excess = vec![0.0; n_int * k];
    for eta in 0..model.n_states() {
        let p = project(eta);
        nu_int[p] += nu.probs[eta];
        let free_eta = embed(p);
        for a in 0..k {
            if eta & (1 << interior[a]) == 0 {
                let diff = model.birth_rate(eta, interior[a]) - model.birth_rate(free_eta, interior[a]);
                excess[p * k + a] += nu.probs[eta] * diff;
            }
        }
    }
    let u: Vec<f64> = mu.probs.iter().zip(&nu_int).map(|(a, b)| a / b - 1.0).collect();
    let free_rate = |p: usize, a: usize| model.birth_rate(embed(p), interior[a]);
    let avg_rate = |p: usize, a: usize| free_rate(p, a) + excess[p * k + a] / nu_int[p];
    let free = fisher_with_rates(k, &free_rate, &nu_int, &u);
    let averaged = fisher_with_rates(k, &avg_rate, &nu_int, &u);
    Ok(BoundaryVariants { free, averaged, difference: averaged - free })
}
