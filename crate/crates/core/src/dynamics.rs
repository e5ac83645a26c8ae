//! Path-wise birth-and-death simulation from a proposal stream.
//!
//! A proposal `(x, s, r, u)` is accepted when `u <= b(x, X_{s-})`; the new
//! point then lives on `[s, s + r)`. Initial points die at their lifespans.
//! Everything is a single chronological sweep, so replaying a stream
//! reproduces the trajectory bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Configuration, MarkedConfiguration, Point, Window};
use crate::error::{Error, Result};
use crate::interaction::InteractionSpec;
use crate::noise::{propose_events, shared_restriction, EventStream, SeedSpec};
use crate::stats::EstimatorReport;

/// Relative slack when checking rates against the declared envelope.
const ENVELOPE_SLACK: f64 = 1e-12;

/// What lies outside the simulation window.
#[derive(Clone, Debug)]
pub enum BoundaryMode {
    /// Nothing: the local dynamics with empty boundary condition.
    Empty,
    /// Fixed points outside the simulation window that never die and only
    /// enter birth rates.
    Frozen(Configuration),
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub sim_window: Window,
    pub observe_window: Window,
    pub buffer_width: f64,
    pub horizon: f64,
    pub boundary: BoundaryMode,
}

impl SimOptions {
    /// Simulates on `observe` dilated by `buffer`, empty boundary.
    pub fn buffered(observe: Window, buffer: f64, horizon: f64) -> Result<Self> {
        if !(buffer >= 0.0 && buffer.is_finite()) {
            return Err(Error::InvalidArgument(format!("buffer must be >= 0, got {buffer}")));
        }
        Self::new(observe.dilate(buffer), observe, horizon, BoundaryMode::Empty)
    }

    pub fn new(sim: Window, observe: Window, horizon: f64, boundary: BoundaryMode) -> Result<Self> {
        if !sim.contains_window(&observe) {
            return Err(Error::NestingViolation("observe window must lie inside the simulation window".into()));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be finite and >= 0, got {horizon}")));
        }
        if let BoundaryMode::Frozen(b) = &boundary {
            if let Some(p) = b.iter().find(|p| sim.contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "frozen boundary point {:?} lies inside the simulation window",
                    p.coords()
                )));
            }
        }
        let buffer_width = (0..sim.dim())
            .map(|i| (observe.lo(i) - sim.lo(i)).min(sim.hi(i) - observe.hi(i)))
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            sim_window: sim,
            observe_window: observe,
            buffer_width,
            horizon,
            boundary,
        })
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.sim_window, self.observe_window, horizon, self.boundary.clone())
    }

    fn frozen(&self) -> Option<&Configuration> {
        match &self.boundary {
            BoundaryMode::Empty => None,
            BoundaryMode::Frozen(c) => Some(c),
        }
    }
}

#[derive(Clone, Debug)]
pub enum LifespanMode {
    /// Independent `Exp(1)` lifespans drawn from this stream.
    Exponential(SeedSpec),
    Fixed(MarkedConfiguration),
}

#[derive(Clone, Debug)]
pub struct InitialCondition {
    base: Vec<Point>,
    lifespans: LifespanMode,
}

impl InitialCondition {
    pub fn exponential(base: &Configuration, seed: SeedSpec) -> Self {
        Self {
            base: base.points().to_vec(),
            lifespans: LifespanMode::Exponential(seed),
        }
    }

    pub fn fixed(marked: MarkedConfiguration) -> Self {
        Self {
            base: marked.entries().iter().map(|(p, _)| *p).collect(),
            lifespans: LifespanMode::Fixed(marked),
        }
    }

    pub fn empty() -> Self {
        Self::fixed(MarkedConfiguration::default())
    }

    pub fn base(&self) -> &[Point] {
        &self.base
    }

    /// Attaches lifespans (drawing them if exponential).
    pub fn resolve(&self) -> MarkedConfiguration {
        match &self.lifespans {
            LifespanMode::Fixed(m) => m.clone(),
            LifespanMode::Exponential(seed) => {
                let mut rng = seed.rng();
                let entries = self
                    .base
                    .iter()
                    .map(|p| {
                        let tau: f64 = Exp1.sample(&mut rng);
                        (*p, tau.max(f64::MIN_POSITIVE))
                    })
                    .collect();
                MarkedConfiguration::new(entries).expect("exponential lifespans are positive")
            }
        }
    }
}

/// An accepted birth living on `[birth, death)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirthRecord {
    pub x: Point,
    pub birth: f64,
    pub death: f64,
}

/// Full state decomposed into survivors of the initial condition and
/// points born during the run.
#[derive(Clone, Debug)]
pub struct StateSnapshot {
    pub full: Configuration,
    pub survivors: Configuration,
    pub born: Configuration,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    initial: MarkedConfiguration,
    births: Vec<BirthRecord>,
    horizon: f64,
    sim_window: Window,
    range: f64,
    proposals: usize,
}

impl Trajectory {
    pub fn initial(&self) -> &MarkedConfiguration {
        &self.initial
    }

    pub fn births(&self) -> &[BirthRecord] {
        &self.births
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn sim_window(&self) -> &Window {
        &self.sim_window
    }

    pub fn proposals(&self) -> usize {
        self.proposals
    }

    pub fn state_at(&self, t: f64) -> Result<StateSnapshot> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        let mut full = Configuration::new(self.sim_window, self.range);
        let mut survivors = Configuration::new(self.sim_window, self.range);
        let mut born = Configuration::new(self.sim_window, self.range);
        for p in self.initial.survivors_at(t) {
            survivors.insert(*p)?;
            full.insert(*p)?;
        }
        for b in self.births.iter().filter(|b| b.birth <= t && t < b.death) {
            born.insert(b.x)?;
            full.insert(b.x)?;
        }
        Ok(StateSnapshot { full, survivors, born })
    }

    /// Times in `(0, horizon]` at which the state changes, sorted.
    pub fn change_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .initial
            .entries()
            .iter()
            .map(|(_, tau)| *tau)
            .chain(self.births.iter().flat_map(|b| [b.birth, b.death]))
            .filter(|&t| t <= self.horizon)
            .collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    /// Every life interval `(point, start, end)` of a point inside `w`.
    fn lives_in(&self, w: &Window) -> Vec<(u64, u64, u64, u64)> {
        let mut out: Vec<_> = self
            .initial
            .entries()
            .iter()
            .map(|(p, tau)| (*p, 0.0, *tau))
            .chain(self.births.iter().map(|b| (b.x, b.birth, b.death)))
            .filter(|(p, _, _)| w.contains(p))
            .map(|(p, s, e)| {
                let c = p.coords();
                (c[0].to_bits(), c[1].to_bits(), s.to_bits(), e.min(self.horizon).to_bits())
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Dump rows `kind,x0[,x1],time` in chronological order, `kind` one of
    /// `init`, `birth`, `death`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self.sim_window.dim();
        if dim == 1 {
            writeln!(out, "kind,x0,time")?;
        } else {
            writeln!(out, "kind,x0,x1,time")?;
        }
        let mut rows: Vec<(f64, u8, &'static str, Point)> = Vec::new();
        for (p, tau) in self.initial.entries() {
            rows.push((0.0, 0, "init", *p));
            if *tau <= self.horizon {
                rows.push((*tau, 1, "death", *p));
            }
        }
        for b in &self.births {
            rows.push((b.birth, 2, "birth", b.x));
            if b.death <= self.horizon {
                rows.push((b.death, 1, "death", b.x));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, _, kind, p) in rows {
            if dim == 1 {
                writeln!(out, "{kind},{},{t}", p.coord(0))?;
            } else {
                writeln!(out, "{kind},{},{},{t}", p.coord(0), p.coord(1))?;
            }
        }
        Ok(())
    }
}

/// Pending death, ordered so that `BinaryHeap` pops the earliest first.
#[derive(Clone, Copy)]
struct Death {
    time: f64,
    x: Point,
}

impl PartialEq for Death {
    fn eq(&self, other: &Self) -> bool {
        self.time.total_cmp(&other.time) == Ordering::Equal
    }
}
impl Eq for Death {}
impl PartialOrd for Death {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Death {
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time)
    }
}

/// Solves the graphical construction on `opts.sim_window` up to
/// `opts.horizon`.
pub fn simulate(
    init: &InitialCondition,
    spec: &InteractionSpec,
    opts: &SimOptions,
    stream: &EventStream,
) -> Result<Trajectory> {
    if stream.window() != &opts.sim_window {
        return Err(Error::StreamMismatch(format!(
            "stream window {:?} differs from simulation window {:?}",
            stream.window(),
            opts.sim_window
        )));
    }
    if stream.horizon() < opts.horizon {
        return Err(Error::StreamMismatch(format!(
            "stream horizon {} shorter than simulation horizon {}",
            stream.horizon(),
            opts.horizon
        )));
    }
    let (b_inf, b_sup) = spec.rate_bounds();
    if stream.b_sup() < b_sup * (1.0 - ENVELOPE_SLACK) {
        return Err(Error::StreamMismatch(format!(
            "stream marks cover [0, {}] but rates reach {b_sup}",
            stream.b_sup()
        )));
    }
    let initial = init.resolve();
    let range = spec.range();
    let mut state = Configuration::new(opts.sim_window.dilate(range), range);
    if let Some(frozen) = opts.frozen() {
        for p in frozen.iter() {
            state.insert(*p)?;
        }
    }
    let mut deaths = BinaryHeap::with_capacity(initial.len());
    for &(p, tau) in initial.entries() {
        if !opts.sim_window.contains(&p) {
            return Err(Error::OutsideWindow(p.coord(0), p.coord(1)));
        }
        state.insert(p)?;
        deaths.push(Death { time: tau, x: p });
    }

    let constant_rate = spec.is_constant_rate();
    let mut births = Vec::new();
    let mut proposals = 0;
    for e in stream.events().iter().take_while(|e| e.s <= opts.horizon) {
        proposals += 1;
        while deaths.peek().is_some_and(|d| d.time <= e.s) {
            let d = deaths.pop().expect("peeked");
            state.remove(&d.x);
        }
        let b = if constant_rate {
            b_sup
        } else {
            spec.birth_rate(&e.x, &state)?
        };
        if b > b_sup * (1.0 + ENVELOPE_SLACK) || b < b_inf * (1.0 - ENVELOPE_SLACK) {
            return Err(Error::EnvelopeViolation { rate: b, b_inf, b_sup });
        }
        if e.u <= b {
            state.insert(e.x)?;
            let death = e.s + e.r;
            deaths.push(Death { time: death, x: e.x });
            births.push(BirthRecord { x: e.x, birth: e.s, death });
        }
    }

    Ok(Trajectory {
        initial,
        births,
        horizon: opts.horizon,
        sim_window: opts.sim_window,
        range,
        proposals,
    })
}

/// Runs the same initial condition in two nested empty-boundary volumes,
/// the smaller one driven by the restriction of the larger one's noise.
pub fn simulate_coupled(
    init: &InitialCondition,
    spec: &InteractionSpec,
    opts_small: &SimOptions,
    opts_big: &SimOptions,
    stream_big: &EventStream,
) -> Result<(Trajectory, Trajectory)> {
    if !opts_big.sim_window.contains_window(&opts_small.sim_window) {
        return Err(Error::NestingViolation("small simulation window must lie inside the big one".into()));
    }
    if opts_small.observe_window != opts_big.observe_window || opts_small.horizon != opts_big.horizon {
        return Err(Error::NestingViolation("coupled runs need the same observation window and horizon".into()));
    }
    if opts_small.frozen().is_some() || opts_big.frozen().is_some() {
        return Err(Error::NestingViolation("coupled runs use empty boundary conditions".into()));
    }
    let marked = init.resolve();
    let big_init = InitialCondition::fixed(marked.restrict(&opts_big.sim_window));
    let small_init = InitialCondition::fixed(marked.restrict(&opts_small.sim_window));
    let small_stream = shared_restriction(stream_big, &opts_small.sim_window)?;
    let big = simulate(&big_init, spec, opts_big, stream_big)?;
    let small = simulate(&small_init, spec, opts_small, &small_stream)?;
    Ok((small, big))
}

/// Whether the two trajectories ever differ inside `w` on `[0, horizon]`.
pub fn disagree_in(a: &Trajectory, b: &Trajectory, w: &Window) -> bool {
    a.lives_in(w) != b.lives_in(w)
}

/// Fraction of coupled pairs whose restrictions to `observe` ever differ,
/// with its binomial standard error.
pub fn disagreement_probability(pairs: &[(Trajectory, Trajectory)], observe: &Window) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let n = pairs.len() as f64;
    let k = pairs.iter().filter(|(a, b)| disagree_in(a, b, observe)).count() as f64;
    let p = k / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

/// A function of configurations that depends only on the points inside its
/// declared support window.
pub trait Observable: Sync {
    fn support(&self) -> Option<Window>;
    fn eval(&self, cfg: &Configuration) -> f64;
}

/// Number of points in a window.
#[derive(Clone, Copy, Debug)]
pub struct CountIn(pub Window);

impl Observable for CountIn {
    fn support(&self) -> Option<Window> {
        Some(self.0)
    }
    fn eval(&self, cfg: &Configuration) -> f64 {
        cfg.count(&self.0) as f64
    }
}

/// A constant, local to any window.
#[derive(Clone, Copy, Debug)]
pub struct Constant(pub f64, pub Window);

impl Observable for Constant {
    fn support(&self) -> Option<Window> {
        Some(self.1)
    }
    fn eval(&self, _: &Configuration) -> f64 {
        self.0
    }
}

/// Closure-backed observable.
pub struct FnObservable<F> {
    pub support: Option<Window>,
    pub f: F,
}

impl<F: Fn(&Configuration) -> f64 + Sync> Observable for FnObservable<F> {
    fn support(&self) -> Option<Window> {
        self.support
    }
    fn eval(&self, cfg: &Configuration) -> f64 {
        (self.f)(cfg)
    }
}

/// Copy of `eta` in a window large enough to add points anywhere in `extra`.
fn working_copy(eta: &Configuration, extra: &Window, range: f64) -> Result<Configuration> {
    let w = eta.window();
    let lo: Vec<f64> = (0..w.dim()).map(|i| w.lo(i).min(extra.lo(i))).collect();
    let hi: Vec<f64> = (0..w.dim()).map(|i| w.hi(i).max(extra.hi(i))).collect();
    eta.reembed(Window::new(&lo, &hi)?, range)
}

/// Monte Carlo estimate of `(𝓛f)(η)`: the birth integral by `n_samples`
/// uniform points on the support (the integrand vanishes elsewhere), the
/// death sum exactly.
pub fn apply_generator<R: Rng + ?Sized>(
    f: &dyn Observable,
    eta: &Configuration,
    spec: &InteractionSpec,
    n_samples: usize,
    rng: &mut R,
) -> Result<EstimatorReport> {
    let support = f.support().ok_or(Error::MissingSupport)?;
    let mut work = working_copy(eta, &support, spec.range())?;
    generator_terms(f, &support, &mut work, spec, n_samples, rng)
}

fn generator_terms<R: Rng + ?Sized>(
    f: &dyn Observable,
    support: &Window,
    work: &mut Configuration,
    spec: &InteractionSpec,
    n_samples: usize,
    rng: &mut R,
) -> Result<EstimatorReport> {
    let f0 = f.eval(work);
    let inside: Vec<Point> = work.iter().filter(|p| support.contains(p)).copied().collect();
    let mut deaths = 0.0;
    for p in &inside {
        work.remove(p);
        deaths += f.eval(work) - f0;
        work.insert(*p)?;
    }
    let vol = support.volume();
    let mut vals = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x = support.sample_uniform(rng);
        if work.contains_point(&x) {
            vals.push(0.0);
            continue;
        }
        let b = spec.birth_rate(&x, work)?;
        work.insert(x)?;
        let fx = f.eval(work);
        work.remove(&x);
        vals.push(vol * b * (fx - f0));
    }
    let mut report = EstimatorReport::from_samples(&vals, "generator-mc");
    if n_samples == 0 {
        report.value = 0.0;
        report.std_error = 0.0;
    }
    report.value += deaths;
    Ok(report)
}

/// `(𝓛^k f)(η)` for `k ∈ {1, 2}`. The second power nests fresh inner
/// estimates of `𝓛f` (support dilated by `R`) inside an outer generator
/// estimate; the standard error comes from `batches` independent repeats.
#[allow(clippy::too_many_arguments)]
pub fn generator_power_mc(
    f: &dyn Observable,
    eta: &Configuration,
    spec: &InteractionSpec,
    k: usize,
    n_outer: usize,
    n_inner: usize,
    batches: usize,
    seed: &SeedSpec,
) -> Result<EstimatorReport> {
    let support = f.support().ok_or(Error::MissingSupport)?;
    match k {
        0 => Ok(EstimatorReport {
            value: f.eval(eta),
            std_error: 0.0,
            n_samples: 1,
            method: "identity".into(),
        }),
        1 => apply_generator(f, eta, spec, n_outer, &mut seed.rng()),
        2 => {
            if batches < 2 {
                return Err(Error::InvalidArgument("need at least two batches for a standard error".into()));
            }
            let outer_support = support.dilate(spec.range());
            let values: Vec<f64> = (0..batches as u64)
                .into_par_iter()
                .map(|bi| -> Result<f64> {
                    let mut rng = seed.replica(seed.replica_id.wrapping_mul(1 << 20) + bi).rng();
                    let mut work = working_copy(eta, &outer_support, spec.range())?;
                    let inner = |w: &mut Configuration, rng: &mut ChaCha20Rng| -> Result<f64> {
                        Ok(generator_terms(f, &support, w, spec, n_inner, rng)?.value)
                    };
                    let g0 = inner(&mut work, &mut rng)?;
                    let inside: Vec<Point> = work.iter().filter(|p| outer_support.contains(p)).copied().collect();
                    let mut deaths = 0.0;
                    for p in &inside {
                        work.remove(p);
                        deaths += inner(&mut work, &mut rng)? - g0;
                        work.insert(*p)?;
                    }
                    let vol = outer_support.volume();
                    let mut births = 0.0;
                    for _ in 0..n_outer {
                        let x = outer_support.sample_uniform(&mut rng);
                        if work.contains_point(&x) {
                            continue;
                        }
                        let b = spec.birth_rate(&x, &work)?;
                        work.insert(x)?;
                        let gx = inner(&mut work, &mut rng)?;
                        work.remove(&x);
                        births += vol * b * (gx - g0);
                    }
                    Ok(births / n_outer.max(1) as f64 + deaths)
                })
                .collect::<Result<_>>()?;
            Ok(EstimatorReport::from_samples(&values, "generator-squared-mc"))
        }
        _ => Err(Error::InvalidArgument(format!(
            "Monte Carlo generator powers are limited to k <= 2 (got {k}); use the lattice oracle"
        ))),
    }
}

/// Runs `n` replicas in parallel, results in replica order.
pub fn run_replicas<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Simulates one replica from `base` with exponential lifespans and fresh
/// noise derived from `seed`.
pub fn run_replica(
    base: &Configuration,
    spec: &InteractionSpec,
    opts: &SimOptions,
    seed: &SeedSpec,
) -> Result<Trajectory> {
    let init = InitialCondition::exponential(base, seed.tagged("lifespans"));
    let stream = propose_events(&opts.sim_window, opts.horizon, spec.rate_bounds().1, &seed.tagged("noise"))?;
    simulate(&init, spec, opts, &stream)
}

/// Monte Carlo estimate of `(μT_t)[f]`: `n_replicas` independent runs from
/// initial configurations drawn by `sampler`.
pub fn semigroup_expectation<S>(
    f: &dyn Observable,
    sampler: S,
    spec: &InteractionSpec,
    opts: &SimOptions,
    t: f64,
    n_replicas: usize,
    seed: &SeedSpec,
) -> Result<EstimatorReport>
where
    S: Fn(&mut ChaCha20Rng) -> Configuration + Sync + Send,
{
    let opts = opts.with_horizon(t)?;
    let values = run_replicas(n_replicas, |r| {
        let rs = seed.replica(r);
        let base = sampler(&mut rs.tagged("init").rng());
        if t == 0.0 {
            return Ok(f.eval(&base));
        }
        let traj = run_replica(&base, spec, &opts, &rs)?;
        Ok(f.eval(&traj.state_at(t)?.full))
    })?;
    Ok(EstimatorReport::from_samples(&values, "semigroup-mc"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::propose_events;
    use crate::stats;
    use rand::SeedableRng;

    fn line(lo: f64, hi: f64) -> Window {
        Window::interval(lo, hi).unwrap()
    }

    fn empty_stream(w: &Window, horizon: f64, b_sup: f64) -> EventStream {
        // A zero-horizon stream re-labelled with the requested horizon.
        let mut s = serde_json::to_value(propose_events(w, 0.0, b_sup, &SeedSpec::new(0, 0, "")).unwrap()).unwrap();
        s["horizon"] = serde_json::json!(horizon);
        serde_json::from_value(s).unwrap()
    }

    #[test]
    fn pure_death_example() {
        let w = line(0.0, 1.0);
        let spec = InteractionSpec::ideal(1, 1.0, 0.5).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 1.0).unwrap();
        let x = Point::on_line(0.5);
        let init = InitialCondition::fixed(MarkedConfiguration::new(vec![(x, 0.5)]).unwrap());
        let traj = simulate(&init, &spec, &opts, &empty_stream(&w, 1.0, 1.0)).unwrap();
        let s = traj.state_at(0.4).unwrap();
        assert_eq!(s.full.points(), &[x]);
        assert_eq!(s.survivors.points(), &[x]);
        assert!(s.born.is_empty());
        assert!(traj.state_at(0.6).unwrap().full.is_empty());
        assert!(matches!(traj.state_at(1.5), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn state_at_zero_is_initial() {
        let w = line(0.0, 2.0);
        let spec = InteractionSpec::area(1, 1.0, 1.0, 1.0).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 2.0).unwrap();
        let base = Configuration::from_points(w, 1.0, [0.2, 0.9, 1.5].map(Point::on_line)).unwrap();
        let init = InitialCondition::exponential(&base, SeedSpec::new(1, 0, "life"));
        let stream = propose_events(&w, 2.0, 1.0, &SeedSpec::new(1, 0, "noise")).unwrap();
        let traj = simulate(&init, &spec, &opts, &stream).unwrap();
        let s = traj.state_at(0.0).unwrap();
        assert!(s.full.same_points(&base));
        assert!(s.survivors.same_points(&base));
        assert!(s.born.is_empty());
    }

    #[test]
    fn everything_dies_without_births() {
        let w = line(0.0, 1.0);
        let spec = InteractionSpec::ideal(1, 1.0, 0.5).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 10.0).unwrap();
        let init = InitialCondition::fixed(
            MarkedConfiguration::new(vec![(Point::on_line(0.1), 2.0), (Point::on_line(0.7), 3.0)]).unwrap(),
        );
        let traj = simulate(&init, &spec, &opts, &empty_stream(&w, 10.0, 1.0)).unwrap();
        assert!(traj.state_at(5.0).unwrap().full.is_empty());
    }

    #[test]
    fn mismatched_stream_is_rejected() {
        let w = line(0.0, 1.0);
        let spec = InteractionSpec::area(1, -1.0, 1.0, 1.0).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 1.0).unwrap();
        let init = InitialCondition::empty();
        let wrong_window = propose_events(&line(0.0, 2.0), 1.0, 3.0, &SeedSpec::new(0, 0, "")).unwrap();
        assert!(matches!(simulate(&init, &spec, &opts, &wrong_window), Err(Error::StreamMismatch(_))));
        let short = propose_events(&w, 0.5, 3.0, &SeedSpec::new(0, 0, "")).unwrap();
        assert!(matches!(simulate(&init, &spec, &opts, &short), Err(Error::StreamMismatch(_))));
        let low_marks = propose_events(&w, 1.0, 1.0, &SeedSpec::new(0, 0, "")).unwrap();
        assert!(matches!(simulate(&init, &spec, &opts, &low_marks), Err(Error::StreamMismatch(_))));
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let w = Window::cube(2, 0.0, 3.0).unwrap();
        let spec = InteractionSpec::area(2, -0.8, 1.0, 1.0).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 3.0).unwrap();
        let base = Configuration::from_points(w, 1.0, [Point::planar(1.0, 1.0), Point::planar(2.0, 0.5)]).unwrap();
        let seed = SeedSpec::new(17, 2, "replay");
        let a = run_replica(&base, &spec, &opts, &seed).unwrap();
        let b = run_replica(&base, &spec, &opts, &seed).unwrap();
        assert_eq!(a.births(), b.births());
        assert_eq!(a.initial(), b.initial());
        let mut da = Vec::new();
        let mut db = Vec::new();
        a.write_csv(&mut da).unwrap();
        b.write_csv(&mut db).unwrap();
        assert_eq!(da, db);
    }

    #[test]
    fn zero_alpha_matches_ideal_event_for_event() {
        let w = line(0.0, 5.0);
        let ideal = InteractionSpec::ideal(1, 1.0, 1.0).unwrap();
        let zero = InteractionSpec::area(1, 0.0, 1.0, 1.0).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 4.0).unwrap();
        for rep in 0..20 {
            let seed = SeedSpec::new(3, rep, "a0");
            let base = Configuration::new(w, 1.0);
            let a = run_replica(&base, &ideal, &opts, &seed).unwrap();
            let b = run_replica(&base, &zero, &opts, &seed).unwrap();
            assert_eq!(a.births(), b.births());
        }
    }

    #[test]
    fn state_matches_brute_force_replay() {
        let w = line(0.0, 4.0);
        let spec = InteractionSpec::area(1, 1.5, 1.0, 1.0).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 5.0).unwrap();
        let base = Configuration::from_points(w, 1.0, [0.5, 1.5, 3.2].map(Point::on_line)).unwrap();
        let seed = SeedSpec::new(8, 0, "replay");
        let traj = run_replica(&base, &spec, &opts, &seed).unwrap();
        let stream = propose_events(&w, 5.0, spec.rate_bounds().1, &seed.tagged("noise")).unwrap();
        let initial = traj.initial().clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t: f64 = rng.random_range(0.0..5.0);
            // Independent replay: walk the events, rebuilding the alive set
            // from scratch at each proposal.
            let mut alive: Vec<(Point, f64, f64)> = initial.entries().iter().map(|(p, tau)| (*p, 0.0, *tau)).collect();
            for e in stream.events().iter().filter(|e| e.s <= t) {
                let cur = Configuration::from_points(
                    w.dilate(1.0),
                    1.0,
                    alive.iter().filter(|(_, s, d)| *s <= e.s && e.s < *d).map(|(p, _, _)| *p),
                )
                .unwrap();
                if e.u <= spec.birth_rate(&e.x, &cur).unwrap() {
                    alive.push((e.x, e.s, e.s + e.r));
                }
            }
            let want = Configuration::from_points(
                w,
                1.0,
                alive.iter().filter(|(_, s, d)| *s <= t && t < *d).map(|(p, _, _)| *p),
            )
            .unwrap();
            assert!(traj.state_at(t).unwrap().full.same_points(&want), "t = {t}");
        }
    }

    #[test]
    fn ideal_gas_mean_count() {
        let w = Window::cube(2, 0.0, 2.0).unwrap();
        let spec = InteractionSpec::ideal(2, 1.0, 0.5).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 1.0).unwrap();
        let base = Configuration::new(w, 0.5);
        let counts = run_replicas(10_000, |r| {
            let traj = run_replica(&base, &spec, &opts, &SeedSpec::new(11, r, "ig"))?;
            Ok(traj.state_at(1.0)?.born.len() as f64)
        })
        .unwrap();
        let (m, se) = stats::mean_se(&counts);
        let want = 4.0 * (1.0 - (-1.0f64).exp());
        assert!((m - want).abs() <= 3.0 * se, "{m} vs {want} (se {se})");
    }

    #[test]
    fn frozen_boundary_enters_rates_only() {
        let w = line(0.0, 1.0);
        let frozen = Configuration::from_points(w.dilate(1.0), 1.0, [Point::on_line(-0.2), Point::on_line(1.1)]).unwrap();
        let spec = InteractionSpec::area(1, 3.0, 1.0, 1.0).unwrap();
        let free = SimOptions::buffered(w, 0.0, 5.0).unwrap();
        let held = SimOptions::new(w, w, 5.0, BoundaryMode::Frozen(frozen.clone())).unwrap();
        let base = Configuration::new(w, 1.0);
        let mut free_births = 0;
        let mut held_births = 0;
        for rep in 0..200 {
            let seed = SeedSpec::new(4, rep, "frozen");
            let a = run_replica(&base, &spec, &free, &seed).unwrap();
            let b = run_replica(&base, &spec, &held, &seed).unwrap();
            free_births += a.births().len();
            held_births += b.births().len();
            for t in [1.0, 2.5, 5.0] {
                let s = b.state_at(t).unwrap();
                assert!(s.full.iter().all(|p| w.contains(p)));
            }
        }
        // Attractive interaction: boundary points raise nearby birth rates.
        assert!(held_births > free_births);
        assert!(SimOptions::new(w, w, 1.0, BoundaryMode::Frozen(
            Configuration::from_points(w.dilate(1.0), 1.0, [Point::on_line(0.5)]).unwrap()
        ))
        .is_err());
    }

    #[test]
    fn coupled_runs_examples() {
        let observe = line(0.0, 1.0);
        let spec = InteractionSpec::area(1, -1.5, 1.0, 1.0).unwrap();
        let small = SimOptions::buffered(observe, 1.0, 1.0).unwrap();
        let big = SimOptions::buffered(observe, 3.0, 1.0).unwrap();
        let base = Configuration::new(big.sim_window, 1.0);
        let init = InitialCondition::exponential(&base, SeedSpec::new(0, 0, "l"));
        let stream = propose_events(&big.sim_window, 1.0, spec.rate_bounds().1, &SeedSpec::new(0, 0, "n")).unwrap();

        let (a, b) = simulate_coupled(&init, &spec, &big, &big, &stream).unwrap();
        assert_eq!(a.births(), b.births());
        let (p, se) = disagreement_probability(&[(a.clone(), b)], &observe);
        assert_eq!((p, se), (0.0, 0.0));

        let ideal = InteractionSpec::ideal(1, 2.0, 1.0).unwrap();
        let stream = propose_events(&big.sim_window, 1.0, 2.0, &SeedSpec::new(0, 1, "n")).unwrap();
        let (s, l) = simulate_coupled(&init, &ideal, &small, &big, &stream).unwrap();
        assert!(!disagree_in(&s, &l, &small.sim_window));

        assert!(simulate_coupled(&init, &spec, &big, &small, &stream).is_err());
    }

    #[test]
    fn perturbed_pair_disagrees() {
        let w = line(0.0, 1.0);
        let spec = InteractionSpec::ideal(1, 1.0, 1.0).unwrap();
        let opts = SimOptions::buffered(w, 0.0, 1.0).unwrap();
        let traj = run_replica(&Configuration::new(w, 1.0), &spec, &opts, &SeedSpec::new(1, 1, "p")).unwrap();
        let mut other = traj.clone();
        other.births.push(BirthRecord { x: Point::on_line(0.123), birth: 0.5, death: 0.7 });
        let (p, _) = disagreement_probability(&[(traj, other)], &w);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn disagreement_agrees_with_pointwise_check() {
        let observe = line(0.0, 1.0);
        let spec = InteractionSpec::area(1, -2.0, 1.0, 1.0).unwrap();
        let small = SimOptions::buffered(observe, 1.0, 1.0).unwrap();
        let big = SimOptions::buffered(observe, 4.0, 1.0).unwrap();
        for rep in 0..40 {
            let seed = SeedSpec::new(6, rep, "d");
            let base = Configuration::new(big.sim_window, 1.0);
            let init = InitialCondition::exponential(&base, seed.tagged("l"));
            let stream = propose_events(&big.sim_window, 1.0, spec.rate_bounds().1, &seed).unwrap();
            let (s, l) = simulate_coupled(&init, &spec, &small, &big, &stream).unwrap();
            let mut times = s.change_times();
            times.extend(l.change_times());
            times.push(0.0);
            let pointwise = times.iter().filter(|&&t| t <= 1.0).any(|&t| {
                let a = s.state_at(t).unwrap().full.restrict(&observe);
                let b = l.state_at(t).unwrap().full.restrict(&observe);
                !a.same_points(&b)
            });
            assert_eq!(pointwise, disagree_in(&s, &l, &observe));
        }
    }

    #[test]
    fn generator_on_count_with_unit_rate() {
        let lam = line(0.0, 2.0);
        let spec = InteractionSpec::ideal(1, 1.0, 0.5).unwrap();
        let eta = Configuration::from_points(line(-1.0, 3.0), 0.5, [0.1, 0.7, 1.9, 2.5].map(Point::on_line)).unwrap();
        let mut rng = SeedSpec::new(0, 0, "g").rng();
        let r = apply_generator(&CountIn(lam), &eta, &spec, 20_000, &mut rng).unwrap();
        // |Λ| - N_Λ = 2 - 3; the integrand is constant so the MC is exact.
        assert!((r.value + 1.0).abs() <= 3.0 * r.std_error + 1e-12, "{r:?}");
        let c = apply_generator(&Constant(3.0, lam), &eta, &spec, 1000, &mut rng).unwrap();
        assert_eq!(c.value, 0.0);
        let missing = FnObservable { support: None, f: |_: &Configuration| 0.0 };
        assert!(matches!(apply_generator(&missing, &eta, &spec, 10, &mut rng), Err(Error::MissingSupport)));
    }

    #[test]
    fn generator_matches_dense_quadrature_for_area() {
        let lam = line(0.0, 1.5);
        let spec = InteractionSpec::area(1, 1.0, 1.0, 1.0).unwrap();
        let f = FnObservable {
            support: Some(lam),
            f: |c: &Configuration| (-(c.count(&line(0.0, 1.5)) as f64)).exp(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for rep in 0..20 {
            let n = rng.random_range(0..6);
            let ambient = line(-2.0, 3.5);
            let eta = Configuration::from_points(ambient, 1.0, (0..n).map(|_| Point::on_line(rng.random_range(-1.0..2.5)))).unwrap();
            // Oracle: midpoint rule with 10^6 nodes over the support.
            let f0 = f.eval(&eta);
            let nodes = 1_000_000;
            let h = lam.volume() / nodes as f64;
            let mut integral = 0.0;
            let mut work = eta.clone();
            for i in 0..nodes {
                let x = Point::on_line(lam.lo(0) + (i as f64 + 0.5) * h);
                let b = spec.birth_rate(&x, &work).unwrap();
                work.insert(x).unwrap();
                integral += b * (f.eval(&work) - f0) * h;
                work.remove(&x);
            }
            let deaths: f64 = eta
                .iter()
                .filter(|p| lam.contains(p))
                .map(|p| {
                    let mut w = eta.clone();
                    w.remove(p);
                    f.eval(&w) - f0
                })
                .sum();
            let want = integral + deaths;
            let got = apply_generator(&f, &eta, &spec, 20_000, &mut SeedSpec::new(1, rep, "gq").rng()).unwrap();
            assert!((got.value - want).abs() <= 3.5 * got.std_error + 1e-9, "{got:?} vs {want}");
        }
    }

    #[test]
    fn second_generator_power_for_ideal_count() {
        // For b ≡ z and f = N_Λ: 𝓛f = z|Λ| - N_Λ and 𝓛²f = N_Λ - z|Λ|.
        let lam = line(0.0, 1.0);
        let spec = InteractionSpec::ideal(1, 1.5, 0.5).unwrap();
        let eta = Configuration::from_points(line(-1.0, 2.0), 0.5, [0.2, 0.4, 0.6, 1.5].map(Point::on_line)).unwrap();
        let r = generator_power_mc(&CountIn(lam), &eta, &spec, 2, 400, 400, 16, &SeedSpec::new(2, 0, "l2")).unwrap();
        assert!((r.value - 1.5).abs() <= 3.0 * r.std_error + 1e-9, "{r:?}");
        assert!(generator_power_mc(&CountIn(lam), &eta, &spec, 3, 10, 10, 4, &SeedSpec::new(2, 0, "l3")).is_err());
    }

    #[test]
    fn semigroup_examples() {
        let lam = line(0.0, 2.0);
        let spec = InteractionSpec::ideal(1, 1.0, 0.5).unwrap();
        let opts = SimOptions::buffered(lam, 1.0, 1.0).unwrap();
        let empty = |_: &mut ChaCha20Rng| Configuration::new(opts.sim_window, 0.5);
        let r0 = semigroup_expectation(&CountIn(lam), empty, &spec, &opts, 0.0, 100, &SeedSpec::new(0, 0, "s")).unwrap();
        assert_eq!(r0.value, 0.0);
        let t = 0.7;
        let r = semigroup_expectation(&CountIn(lam), empty, &spec, &opts, t, 20_000, &SeedSpec::new(0, 0, "s")).unwrap();
        let want = 2.0 * (1.0 - (-t).exp());
        assert!((r.value - want).abs() <= 3.0 * r.std_error, "{r:?} vs {want}");

        let bounded = FnObservable { support: Some(lam), f: |c: &Configuration| (c.len() as f64).cos() };
        let r = semigroup_expectation(&bounded, empty, &spec, &opts, t, 500, &SeedSpec::new(0, 1, "s")).unwrap();
        assert!((-1.0..=1.0).contains(&r.value));
    }
}
