//! Finite-volume Gibbs sampling with the reversible dynamics, and the
//! GNZ residual used to test whether samples carry a given Papangelou
//! intensity.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::config::{Configuration, Point, Window};
use crate::dynamics::{run_replica, BoundaryMode, SimOptions};
use crate::error::{Error, Result};
use crate::interaction::InteractionSpec;
use crate::noise::SeedSpec;
use crate::stats::{self, EstimatorReport};

pub const DEFAULT_BURN_IN: f64 = 20.0;
pub const DEFAULT_SPACING: f64 = 5.0;
/// Mean lifetimes after which the count autocorrelation must be small.
const MIXING_LIFETIMES: f64 = 10.0;
const MIXING_THRESHOLD: f64 = 0.1;

/// Homogeneous Poisson process of intensity `z` on `window`.
pub fn sample_poisson(z: f64, window: &Window, range: f64, seed: &SeedSpec) -> Result<Configuration> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidArgument(format!("intensity must be positive, got {z}")));
    }
    let mut rng = seed.rng();
    let mean = z * window.volume();
    let n = Poisson::new(mean).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut rng) as usize;
    let mut cfg = Configuration::new(*window, range);
    while cfg.len() < n {
        let p = window.sample_uniform(&mut rng);
        if !cfg.contains_point(&p) {
            cfg.insert(p)?;
        }
    }
    Ok(cfg)
}

#[derive(Clone, Debug)]
pub struct GibbsSampleSpec {
    pub window: Window,
    pub interaction: InteractionSpec,
    /// Frozen points in `dilate(window, R) \ window`.
    pub boundary: Configuration,
    pub burn_in: f64,
    pub n_samples: usize,
    pub spacing: f64,
}

impl GibbsSampleSpec {
    pub fn new(window: Window, interaction: InteractionSpec, n_samples: usize) -> Self {
        let range = interaction.range();
        Self {
            window,
            boundary: Configuration::new(window.dilate(range), range),
            interaction,
            burn_in: DEFAULT_BURN_IN,
            n_samples,
            spacing: DEFAULT_SPACING,
        }
    }

    pub fn with_boundary(mut self, boundary: Configuration) -> Result<Self> {
        let outer = self.window.dilate(self.interaction.range());
        if let Some(p) = boundary.iter().find(|p| self.window.contains(p) || !outer.contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "boundary point {:?} is not in the R-collar of the window",
                p.coords()
            )));
        }
        self.boundary = boundary.reembed(outer, self.interaction.range())?;
        Ok(self)
    }

    pub fn with_timing(mut self, burn_in: f64, spacing: f64) -> Result<Self> {
        if !(burn_in > 0.0 && spacing > 0.0) {
            return Err(Error::InvalidArgument("burn-in and spacing must be positive".into()));
        }
        self.burn_in = burn_in;
        self.spacing = spacing;
        Ok(self)
    }

    fn horizon(&self) -> f64 {
        self.burn_in + self.spacing * self.n_samples.saturating_sub(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingDiagnostic {
    pub lag: usize,
    /// Lag autocorrelation of the window count, `None` when the chain is too
    /// short to estimate it.
    pub autocorrelation: Option<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct GibbsChain {
    pub samples: Vec<Configuration>,
    pub mixing: MixingDiagnostic,
}

/// One chain of the frozen-boundary dynamics started from a Poisson(1)
/// configuration; states are recorded every `spacing` after `burn_in`.
pub fn sample_gibbs(gspec: &GibbsSampleSpec, seed: &SeedSpec) -> Result<GibbsChain> {
    let range = gspec.interaction.range();
    let start = sample_poisson(1.0, &gspec.window, range, &seed.tagged("start"))?;
    let boundary = if gspec.boundary.is_empty() {
        BoundaryMode::Empty
    } else {
        BoundaryMode::Frozen(gspec.boundary.clone())
    };
    let opts = SimOptions::new(gspec.window, gspec.window, gspec.horizon(), boundary)?;
    let traj = run_replica(&start, &gspec.interaction, &opts, seed)?;
    let samples = (0..gspec.n_samples)
        .map(|k| Ok(traj.state_at(gspec.burn_in + k as f64 * gspec.spacing)?.full))
        .collect::<Result<Vec<_>>>()?;

    let lag = (MIXING_LIFETIMES / gspec.spacing).ceil().max(1.0) as usize;
    let counts: Vec<f64> = samples.iter().map(|s| s.len() as f64).collect();
    let autocorrelation = (counts.len() >= lag + 10).then(|| stats::autocorrelation(&counts, lag));
    let flagged = autocorrelation.is_none_or(|a| a.is_nan() || a > MIXING_THRESHOLD);
    Ok(GibbsChain {
        samples,
        mixing: MixingDiagnostic {
            lag,
            autocorrelation,
            flagged,
        },
    })
}

/// Several independent chains, samples concatenated in chain order.
pub fn sample_gibbs_chains(gspec: &GibbsSampleSpec, seed: &SeedSpec, n_chains: usize) -> Result<Vec<GibbsChain>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|c| sample_gibbs(gspec, &seed.replica(c)))
        .collect()
}

/// A test function `f(x, η)` vanishing for `x` outside its support window.
pub trait TestFn: Sync {
    fn support(&self) -> Window;
    fn eval(&self, x: &Point, eta: &Configuration) -> f64;
    fn name(&self) -> String;
}

/// Local test functions depending on `η` only within `R` of `x`.
#[derive(Clone, Copy, Debug)]
pub enum StandardTest {
    One,
    Coordinate,
    NeighborCount,
    Isolated,
    DecayingNeighbors,
}

#[derive(Clone, Copy, Debug)]
pub struct LocalTest {
    pub kind: StandardTest,
    pub support: Window,
    pub range: f64,
}

impl TestFn for LocalTest {
    fn support(&self) -> Window {
        self.support
    }

    fn eval(&self, x: &Point, eta: &Configuration) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        let near = |r: f64| {
            let mut n = 0usize;
            eta.for_each_neighbor(x, r, |_| n += 1);
            n as f64
        };
        match self.kind {
            StandardTest::One => 1.0,
            StandardTest::Coordinate => (x.coord(0) - self.support.lo(0)) / self.support.side(0),
            StandardTest::NeighborCount => near(0.5 * self.range),
            StandardTest::Isolated => (near(0.5 * self.range) == 0.0) as u8 as f64,
            StandardTest::DecayingNeighbors => (-near(self.range)).exp(),
        }
    }

    fn name(&self) -> String {
        format!("{:?}", self.kind).to_lowercase()
    }
}

/// The five standard local test functions on `support`.
pub fn standard_tests(support: Window, range: f64) -> Vec<LocalTest> {
    [
        StandardTest::One,
        StandardTest::Coordinate,
        StandardTest::NeighborCount,
        StandardTest::Isolated,
        StandardTest::DecayingNeighbors,
    ]
    .into_iter()
    .map(|kind| LocalTest { kind, support, range })
    .collect()
}

/// Mean over samples of `Σ_{x∈η} f(x, η−δ_x) − ∫ b(x,η) f(x,η) dx` for each
/// test function, the integral by midpoint quadrature at step `R/50`.
/// Supports must keep distance `R` from the sample window boundary.
pub fn gnz_residual(
    samples: &[Configuration],
    window: &Window,
    test_fns: &[&dyn TestFn],
    spec: &InteractionSpec,
) -> Result<Vec<EstimatorReport>> {
    let range = spec.range();
    let interior = window.erode(range).ok_or(Error::WindowTooSmall(format!(
        "window {window:?} has no interior at distance {range}"
    )))?;
    for f in test_fns {
        if !interior.contains_window(&f.support()) {
            return Err(Error::SupportViolation(format!(
                "{} support {:?} is not inside {interior:?}",
                f.name(),
                f.support()
            )));
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    // One quadrature grid over the union of supports, shared by all tests.
    let dim = window.dim();
    let lo: Vec<f64> = (0..dim)
        .map(|i| test_fns.iter().map(|f| f.support().lo(i)).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..dim)
        .map(|i| test_fns.iter().map(|f| f.support().hi(i)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let (nodes, cell) = Window::new(&lo, &hi)?.midpoint_grid(range / 50.0);

    let per_sample: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|eta| -> Result<Vec<f64>> {
            let mut work = eta.reembed(window.dilate(range), range)?;
            let mut sums = vec![0.0; test_fns.len()];
            for x in eta.iter() {
                if !test_fns.iter().any(|f| f.support().contains(x)) {
                    continue;
                }
                work.remove(x);
                for (s, f) in sums.iter_mut().zip(test_fns) {
                    *s += f.eval(x, &work);
                }
                work.insert(*x)?;
            }
            for node in &nodes {
                let b = spec.birth_rate(node, &work)?;
                for (s, f) in sums.iter_mut().zip(test_fns) {
                    *s -= cell * b * f.eval(node, &work);
                }
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;

    Ok((0..test_fns.len())
        .map(|j| {
            let col: Vec<f64> = per_sample.iter().map(|r| r[j]).collect();
            EstimatorReport::from_samples(&col, &format!("gnz-{}", test_fns[j].name()))
        })
        .collect())
}
