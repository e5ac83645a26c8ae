//! Statistical functionals of sampled configurations: correlation functions
//! from box counts, Janossy densities and the density `ψ`, discretized
//! relative entropy, moment bounds, spatial ergodic averages and the Poisson
//! variable-change test.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{Configuration, Point, Window};
use crate::error::{Error, Result};
use crate::noise::SeedSpec;
use crate::stats::{self, EstimatorReport, TestOutcome};

/// Highest truncation order of the Janossy inversion series.
pub const MAX_JANOSSY_TRUNCATION: usize = 3;
pub const DEFAULT_OCCUPANCY_CAP: u32 = 8;
pub const MAX_MOMENT_ORDER: usize = 6;

/// Cubes of side `side` around `centers`; must be pairwise disjoint and
/// inside `admissible`.
pub fn boxes_around(centers: &[Point], side: f64, admissible: &Window) -> Result<Vec<Window>> {
    let boxes = centers
        .iter()
        .map(|c| Window::centered(admissible.dim(), c, side))
        .collect::<Result<Vec<_>>>()?;
    for (i, b) in boxes.iter().enumerate() {
        if !admissible.contains_window(b) {
            return Err(Error::SupportViolation(format!("box around {:?} leaves {admissible:?}", centers[i].coords())));
        }
        if boxes[..i].iter().any(|o| o.overlaps(b)) {
            return Err(Error::OverlappingBoxes);
        }
    }
    Ok(boxes)
}

/// `|Q|^{-n} Π_i N_{Q(x_i)}` averaged over samples: the box estimate of the
/// correlation function `ρ_n(x_1, …, x_n)`.
pub fn correlation_estimate(samples: &[Configuration], centers: &[Point], side: f64, admissible: &Window) -> Result<EstimatorReport> {
    let boxes = boxes_around(centers, side, admissible)?;
    let scale = boxes.first().map_or(1.0, |b| b.volume()).powi(boxes.len() as i32);
    let values: Vec<f64> = samples
        .iter()
        .map(|s| boxes.iter().map(|b| s.count(b) as f64).product::<f64>() / scale)
        .collect();
    Ok(EstimatorReport::from_samples(&values, "correlation-box"))
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// A truncated inversion-series estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JanossyEstimate {
    pub order: usize,
    pub value: f64,
    pub std_error: f64,
    /// Mean of the `k`-th signed series term, `k = 0..=K`.
    pub terms: Vec<f64>,
    /// Magnitude of the last included term.
    pub truncation_bound: f64,
    /// Term magnitudes are nonincreasing, so the bound is meaningful.
    pub decreasing: bool,
}

impl JanossyEstimate {
    fn from_terms(order: usize, per_sample: &[Vec<f64>]) -> Self {
        let k = per_sample.first().map_or(0, |t| t.len());
        let terms: Vec<f64> = (0..k).map(|j| stats::mean(&per_sample.iter().map(|t| t[j]).collect::<Vec<_>>())).collect();
        let totals: Vec<f64> = per_sample.iter().map(|t| t.iter().sum()).collect();
        let (value, std_error) = stats::mean_se(&totals);
        let decreasing = terms.windows(2).all(|w| w[1].abs() <= w[0].abs());
        Self {
            order,
            value,
            std_error,
            truncation_bound: terms.last().map_or(0.0, |t| t.abs()),
            terms,
            decreasing,
        }
    }

    /// `|value − target| ≤ truncation_bound + k·se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= self.truncation_bound + k * self.std_error
    }
}

/// Janossy densities on `window` from sampled configurations. The
/// `Λ^k`-integrals of the correlation functions in the inversion series are
/// taken exactly through factorial moments of the counts.
#[derive(Clone, Debug)]
pub struct JanossyTable {
    window: Window,
    samples: Vec<Configuration>,
    max_order: usize,
    truncation: usize,
}

impl JanossyTable {
    pub fn new(samples: Vec<Configuration>, window: Window, max_order: usize, truncation: usize) -> Result<Self> {
        if truncation > MAX_JANOSSY_TRUNCATION {
            return Err(Error::OrderUnavailable {
                requested: truncation,
                available: MAX_JANOSSY_TRUNCATION,
            });
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no samples".into()));
        }
        Ok(Self {
            window,
            samples,
            max_order,
            truncation,
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Highest correlation order used.
    pub fn correlation_order(&self) -> usize {
        self.max_order + self.truncation
    }

    fn check_order(&self, n: usize) -> Result<()> {
        if n > self.max_order {
            return Err(Error::OrderUnavailable {
                requested: n,
                available: self.max_order,
            });
        }
        Ok(())
    }

    fn series(&self, rest: u64) -> Vec<f64> {
        (0..=self.truncation as u64)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * binomial(rest, k))
            .collect()
    }

    /// `ĵ_n(x_1, …, x_n)` from boxes of side `side` around the points.
    pub fn pointwise(&self, xs: &[Point], side: f64) -> Result<JanossyEstimate> {
        self.check_order(xs.len())?;
        let boxes = boxes_around(xs, side, &self.window)?;
        let scale = boxes.first().map_or(1.0, |b| b.volume()).powi(boxes.len() as i32);
        let per: Vec<Vec<f64>> = self
            .samples
            .iter()
            .map(|s| {
                let counts: Vec<u64> = boxes.iter().map(|b| s.count(b) as u64).collect();
                let weight = counts.iter().map(|&c| c as f64).product::<f64>() / scale;
                let rest = (s.count(&self.window) as u64).saturating_sub(xs.len() as u64);
                self.series(rest).into_iter().map(|t| weight * t).collect()
            })
            .collect();
        Ok(JanossyEstimate::from_terms(xs.len(), &per))
    }

    fn integral_terms(&self, n: usize, count: u64) -> Vec<f64> {
        let lead = binomial(count, n as u64);
        self.series(count.saturating_sub(n as u64)).into_iter().map(|t| lead * t).collect()
    }

    /// `(1/n!) ∫_{Λ^n} ĵ_n`, the estimated probability of exactly `n` points.
    pub fn integral(&self, n: usize) -> Result<JanossyEstimate> {
        self.check_order(n)?;
        let per: Vec<Vec<f64>> = self
            .samples
            .iter()
            .map(|s| self.integral_terms(n, s.count(&self.window) as u64))
            .collect();
        Ok(JanossyEstimate::from_terms(n, &per))
    }

    /// `Σ_{n ≤ max_order} (1/n!) ∫ ĵ_n` with its standard error and the summed
    /// truncation bounds.
    pub fn normalization(&self) -> Result<(EstimatorReport, f64)> {
        let totals: Vec<f64> = self
            .samples
            .iter()
            .map(|s| {
                let c = s.count(&self.window) as u64;
                (0..=self.max_order).map(|n| self.integral_terms(n, c).iter().sum::<f64>()).sum()
            })
            .collect();
        let bound = (0..=self.max_order).map(|n| self.integral(n).map(|e| e.truncation_bound)).sum::<Result<f64>>()?;
        Ok((EstimatorReport::from_samples(&totals, "janossy-normalization"), bound))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiEstimate {
    pub value: f64,
    pub std_error: f64,
    pub truncation_bound: f64,
    /// Significantly negative: `value + 3 se + bound < 0`.
    pub negative: bool,
}

impl PsiEstimate {
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= self.truncation_bound + k * self.std_error
    }
}

/// Density `ψ(ζ)` of the sampled law against the unit Poisson process on the
/// table's window: `e^{|Λ|} ĵ_n(ζ)` for nonempty `ζ` and
/// `e^{|Λ|}(1 − Σ_{n≥1} (1/n!) ∫ ĵ_n)` for the empty pattern.
pub fn psi_density(zeta: &[Point], table: &JanossyTable, side: f64) -> Result<PsiEstimate> {
    let scale = table.window.volume().exp();
    let (value, std_error, bound) = if zeta.is_empty() {
        let per: Vec<f64> = table
            .samples
            .iter()
            .map(|s| {
                let c = s.count(&table.window) as u64;
                1.0 - (1..=table.max_order).map(|n| table.integral_terms(n, c).iter().sum::<f64>()).sum::<f64>()
            })
            .collect();
        let (m, se) = stats::mean_se(&per);
        let bound = (1..=table.max_order).map(|n| table.integral(n).map(|e| e.truncation_bound)).sum::<Result<f64>>()?;
        (m, se, bound)
    } else {
        let j = table.pointwise(zeta, side)?;
        (j.value, j.std_error, j.truncation_bound)
    };
    let (value, std_error, truncation_bound) = (scale * value, scale * std_error, scale * bound);
    Ok(PsiEstimate {
        value,
        std_error,
        truncation_bound,
        negative: value + 3.0 * std_error + truncation_bound < 0.0,
    })
}

/// Regular grid of cells on a window.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPartition {
    window: Window,
    shape: [usize; 2],
}

impl CellPartition {
    pub fn regular(window: Window, shape: &[usize]) -> Result<Self> {
        if shape.len() != window.dim() || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!("shape {shape:?} does not fit a {}-d window", window.dim())));
        }
        let mut s = [1, 1];
        s[..shape.len()].copy_from_slice(shape);
        Ok(Self { window, shape: s })
    }

    pub fn m(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn cell_of(&self, p: &Point) -> Option<usize> {
        if !self.window.contains(p) {
            return None;
        }
        let idx = |axis: usize| {
            let f = (p.coord(axis) - self.window.lo(axis)) / self.window.side(axis);
            ((f * self.shape[axis] as f64) as usize).min(self.shape[axis] - 1)
        };
        Some(if self.window.dim() == 1 { idx(0) } else { idx(0) * self.shape[1] + idx(1) })
    }

    pub fn occupancy(&self, cfg: &Configuration) -> Vec<u32> {
        let mut counts = vec![0u32; self.m()];
        for p in cfg.iter() {
            if let Some(c) = self.cell_of(p) {
                counts[c] += 1;
            }
        }
        counts
    }
}

/// A capped occupancy vector; any cell above the cap sends the sample to
/// the single overflow state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Occupancy {
    Capped(Vec<u8>),
    Overflow,
}

/// Empirical law of capped occupancy vectors.
#[derive(Clone, Debug)]
pub struct OccupancyLaw {
    partition: CellPartition,
    cap: u32,
    counts: BTreeMap<Occupancy, u64>,
    n: u64,
}

impl OccupancyLaw {
    pub fn new(partition: CellPartition, cap: u32) -> Result<Self> {
        if cap == 0 || cap > u8::MAX as u32 {
            return Err(Error::InvalidArgument(format!("cap must be in 1..=255, got {cap}")));
        }
        Ok(Self {
            partition,
            cap,
            counts: BTreeMap::new(),
            n: 0,
        })
    }

    pub fn add(&mut self, cfg: &Configuration) {
        let occ = self.partition.occupancy(cfg);
        self.add_counts(&occ);
    }

    pub fn add_counts(&mut self, occupancy: &[u32]) {
        let key = if occupancy.iter().any(|&c| c > self.cap) {
            Occupancy::Overflow
        } else {
            Occupancy::Capped(occupancy.iter().map(|&c| c as u8).collect())
        };
        *self.counts.entry(key).or_insert(0) += 1;
        self.n += 1;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn overflow_mass(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        *self.counts.get(&Occupancy::Overflow).unwrap_or(&0) as f64 / self.n as f64
    }

    pub fn probability(&self, key: &Occupancy) -> f64 {
        *self.counts.get(key).unwrap_or(&0) as f64 / self.n as f64
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &BTreeMap<Occupancy, u64> {
        &self.counts
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscretizedKl {
    /// Bias-corrected estimate clamped at 0; `+∞` when `infinite_states > 0`.
    pub report: EstimatorReport,
    pub plug_in: f64,
    /// μ-states never seen under ν.
    pub infinite_states: usize,
    pub overflow_mu: f64,
    pub overflow_nu: f64,
}

/// Plug-in relative entropy between two occupancy laws with first-order
/// (Miller–Madow type) bias correction for both the entropy and the cross
/// term, and a delta-method standard error.
pub fn rel_entropy_discretized(mu: &OccupancyLaw, nu: &OccupancyLaw) -> Result<DiscretizedKl> {
    if mu.partition != nu.partition || mu.cap != nu.cap {
        return Err(Error::InvalidArgument("occupancy laws use different partitions or caps".into()));
    }
    if mu.n == 0 || nu.n == 0 {
        return Err(Error::InvalidArgument("empty occupancy law".into()));
    }
    let (n_mu, n_nu) = (mu.n as f64, nu.n as f64);
    let mut plug_in = 0.0;
    let mut cross_bias = 0.0;
    let mut second_mu = 0.0;
    let mut ratio_sq = 0.0;
    let mut infinite_states = 0;
    for key in mu.counts.keys() {
        let p = mu.probability(key);
        let q = nu.probability(key);
        if q == 0.0 {
            infinite_states += 1;
            continue;
        }
        let l = (p / q).ln();
        plug_in += p * l;
        second_mu += p * l * l;
        cross_bias += p * (1.0 - q) / (2.0 * n_nu * q);
        ratio_sq += p * p / q;
    }
    let n = (mu.n + nu.n) as usize;
    let method = "discretized-kl";
    let (value, std_error) = if infinite_states > 0 {
        (f64::INFINITY, f64::NAN)
    } else {
        let corrected = plug_in - (mu.support_size() as f64 - 1.0) / (2.0 * n_mu) - cross_bias;
        let var = (second_mu - plug_in * plug_in).max(0.0) / n_mu + (ratio_sq - 1.0).max(0.0) / n_nu;
        (corrected.max(0.0), var.sqrt())
    };
    Ok(DiscretizedKl {
        report: EstimatorReport {
            value,
            std_error,
            n_samples: n,
            method: method.into(),
        },
        plug_in,
        infinite_states,
        overflow_mu: mu.overflow_mass(),
        overflow_nu: nu.overflow_mass(),
    })
}

/// Constants of the moment bound `c₃ c₂^{|Δ|/k} k / log(1 + k/(c₁|Δ|))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl MomentConstants {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        if [c1, c2, c3].iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument("moment constants must be positive".into()));
        }
        Ok(Self { c1, c2, c3 })
    }

    /// `c₃ → e^t c₃`.
    pub fn inflated(&self, t: f64) -> Self {
        Self { c3: t.exp() * self.c3, ..*self }
    }

    /// `c₁ → max(c₁, t‖b‖∞)`, `c₃ → 1 + c₃`: the constants surviving an
    /// evolution of length `t` with birth rates bounded by `b_sup`.
    pub fn evolved(&self, t: f64, b_sup: f64) -> Self {
        Self {
            c1: self.c1.max(t * b_sup),
            c2: self.c2,
            c3: 1.0 + self.c3,
        }
    }

    pub fn bound(&self, volume: f64, k: usize) -> f64 {
        let k = k as f64;
        self.c3 * self.c2.powf(volume / k) * k / (1.0 + k / (self.c1 * volume)).ln()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentRow {
    pub k: usize,
    /// `E[N_Δ^k]^{1/k}`.
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    /// Exceeds the bound by more than three standard errors.
    pub exceeded: bool,
}

pub fn moment_check(samples: &[Configuration], delta: &Window, k_max: usize, constants: &MomentConstants) -> Result<Vec<MomentRow>> {
    if k_max == 0 || k_max > MAX_MOMENT_ORDER {
        return Err(Error::InvalidArgument(format!("moment order must be in 1..={MAX_MOMENT_ORDER}")));
    }
    let counts: Vec<f64> = samples.iter().map(|s| s.count(delta) as f64).collect();
    Ok((1..=k_max)
        .map(|k| {
            let powers: Vec<f64> = counts.iter().map(|c| c.powi(k as i32)).collect();
            let (m, se) = stats::mean_se(&powers);
            let root = m.powf(1.0 / k as f64);
            let se_root = if m > 0.0 { root / (k as f64 * m) * se } else { 0.0 };
            let bound = constants.bound(delta.volume(), k);
            MomentRow {
                k,
                empirical: root,
                std_error: se_root,
                bound,
                exceeded: root - 3.0 * se_root > bound,
            }
        })
        .collect())
}

/// A translation-invariant function of a configuration seen from a root
/// point, depending only on points within `radius` of the root.
pub trait RootedObservable: Sync {
    fn radius(&self) -> f64;
    /// `rest` excludes the root itself.
    fn eval(&self, root: &Point, rest: &Configuration) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct Unit;

impl RootedObservable for Unit {
    fn radius(&self) -> f64 {
        0.0
    }
    fn eval(&self, _: &Point, _: &Configuration) -> f64 {
        1.0
    }
}

/// Number of other points within `radius` of the root.
#[derive(Clone, Copy, Debug)]
pub struct NeighborCount(pub f64);

impl RootedObservable for NeighborCount {
    fn radius(&self) -> f64 {
        self.0
    }
    fn eval(&self, root: &Point, rest: &Configuration) -> f64 {
        let mut n = 0usize;
        rest.for_each_neighbor(root, self.0, |_| n += 1);
        n as f64
    }
}

/// `(1/|Λ_n|) Σ_{x ∈ η_{Λ_n}} h(θ_x(η − δ_x))` for each window of the
/// sequence.
pub fn ergodic_average(eta: &Configuration, h: &dyn RootedObservable, windows: &[Window]) -> Result<Vec<f64>> {
    let mut work = eta.clone();
    windows
        .iter()
        .map(|w| {
            if !eta.window().contains_window(&w.dilate(h.radius())) {
                return Err(Error::WindowTooSmall(format!(
                    "{w:?} dilated by {} is not inside the sample window",
                    h.radius()
                )));
            }
            let roots: Vec<Point> = eta.iter().filter(|p| w.contains(p)).copied().collect();
            let mut sum = 0.0;
            for x in roots {
                work.remove(&x);
                sum += h.eval(&x, &work);
                work.insert(x)?;
            }
            Ok(sum / w.volume())
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariableChangeReport {
    pub p_t: f64,
    /// Joint law of (survivor part, fresh part, total, initial points) on
    /// both sides.
    pub joint: TestOutcome,
    /// Totals on each side against `Poisson((1 + p_t)|Λ|)`.
    pub total_left: TestOutcome,
    pub total_right: TestOutcome,
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Builds both sides of the Poisson variable change on `window` up to time
/// `t` and compares the joint count laws.
///
/// Left: `ω ~ Poisson(1)` with `Exp(1)` lifespans, `ζ ~ Poisson(1)`,
/// `χ = survivors_t(ω) ∪ ζ`. Right: `χ̃ ~ Poisson(1 + p_t)` split by
/// independent coins of bias `1/(1+p_t)` into `ζ̃` and a survivor part,
/// plus `Poisson(1 − p_t)` points that died before `t`; the initial
/// configuration is the survivor part together with those.
pub fn variable_change_test(window: &Window, t: f64, n_reps: usize, seed: &SeedSpec) -> Result<VariableChangeReport> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be finite and >= 0, got {t}")));
    }
    let vol = window.volume();
    let p_t = (-t).exp();
    let mut left = BTreeMap::new();
    let mut right = BTreeMap::new();
    let mut totals_left = Vec::with_capacity(n_reps);
    let mut totals_right = Vec::with_capacity(n_reps);
    for r in 0..n_reps as u64 {
        let mut rng = seed.replica(r).tagged("left").rng();
        let omega: Vec<(Point, f64)> = (0..poisson_draw(vol, &mut rng))
            .map(|_| (window.sample_uniform(&mut rng), Exp1.sample(&mut rng)))
            .collect();
        let zeta: Vec<Point> = (0..poisson_draw(vol, &mut rng)).map(|_| window.sample_uniform(&mut rng)).collect();
        let survivors = omega.iter().filter(|(_, tau)| *tau > t).count() as u64;
        let key = (survivors, zeta.len() as u64, survivors + zeta.len() as u64, omega.len() as u64);
        *left.entry(key).or_insert(0u64) += 1;
        totals_left.push(key.2);

        let mut rng = seed.replica(r).tagged("right").rng();
        let chi: Vec<Point> = (0..poisson_draw((1.0 + p_t) * vol, &mut rng))
            .map(|_| window.sample_uniform(&mut rng))
            .collect();
        let fresh = Binomial::new(chi.len() as u64, 1.0 / (1.0 + p_t))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(&mut rng);
        let kept = chi.len() as u64 - fresh;
        let dead = poisson_draw((1.0 - p_t) * vol, &mut rng);
        let key = (kept, fresh, chi.len() as u64, kept + dead);
        *right.entry(key).or_insert(0u64) += 1;
        totals_right.push(key.2);
    }
    let mean = (1.0 + p_t) * vol;
    Ok(VariableChangeReport {
        p_t,
        joint: stats::chi_square_homogeneity(&left, &right),
        total_left: stats::ks_discrete(&totals_left, |k| stats::poisson_cdf(k, mean)),
        total_right: stats::ks_discrete(&totals_right, |k| stats::poisson_cdf(k, mean)),
    })
}
