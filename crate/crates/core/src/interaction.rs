//! Conditional energies and birth rates for finite-range interactions.
//!
//! Three families are supported: the ideal gas (constant rate `z`), the area
//! interaction `H(η) = α |∪_{y∈η} B(y, R/2)|`, and bounded radial pair
//! potentials. Birth rates are `b(x, η) = exp(-β h(x, η))`.

use std::f64::consts::{PI, TAU};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::config::{Configuration, Point, Window};
use crate::error::{Error, Result};

/// Largest number of strips the strip quadrature will use.
const MAX_STRIPS: usize = 2_000_000;

/// How the planar area interaction integrates the uncovered part of a disc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AreaQuadrature {
    /// Closed-form boundary integral over the uncovered arcs.
    Exact,
    /// Midpoint rule across vertical strips, exact chord lengths within each
    /// strip. The strip count is chosen from `tol`.
    Strips { tol: f64 },
}

/// Piecewise-linear radial potential, zero beyond its last abscissa.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPotential {
    r: Vec<f64>,
    phi: Vec<f64>,
    bounds: PairBounds,
}

/// Declared rate envelope for a pair potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PairBounds {
    /// `φ >= 0`; at most `max_neighbors` points ever fall within range of a
    /// proposed location.
    NonNegative { max_neighbors: usize },
    /// User-declared `(b_inf, b_sup)` for signed potentials.
    Explicit { b_inf: f64, b_sup: f64 },
}

impl PairPotential {
    pub fn new(r: Vec<f64>, phi: Vec<f64>, bounds: PairBounds) -> Result<Self> {
        if r.is_empty() || r.len() != phi.len() {
            return Err(Error::InvalidSpec(
                "pair table needs matching, non-empty r and phi columns".into(),
            ));
        }
        if r[0] < 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec(
                "pair table abscissae must be non-negative and strictly increasing".into(),
            ));
        }
        if !r.iter().chain(&phi).all(|v| v.is_finite()) {
            return Err(Error::InvalidSpec("pair table has non-finite entries".into()));
        }
        match bounds {
            PairBounds::NonNegative { .. } if phi.iter().any(|&p| p < 0.0) => {
                return Err(Error::InvalidSpec(
                    "signed pair potentials require explicit rate bounds".into(),
                ))
            }
            PairBounds::Explicit { b_inf, b_sup } if !(0.0 < b_inf && b_inf <= b_sup && b_sup.is_finite()) => {
                return Err(Error::InvalidSpec(format!(
                    "explicit bounds need 0 < b_inf <= b_sup < inf, got ({b_inf}, {b_sup})"
                )))
            }
            _ => {}
        }
        Ok(Self { r, phi, bounds })
    }

    /// Step potential `φ(r) = height` for `r <= radius`.
    pub fn step(radius: f64, height: f64, bounds: PairBounds) -> Result<Self> {
        Self::new(vec![0.0, radius], vec![height, height], bounds)
    }

    /// Parses `r,phi` rows; a leading `r,phi` header is optional.
    pub fn read_csv<R: BufRead>(input: R, bounds: PairBounds) -> Result<Self> {
        let mut r = Vec::new();
        let mut phi = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.replace(' ', "") == "r,phi") {
                continue;
            }
            let mut cols = line.split(',').map(|c| c.trim().parse::<f64>());
            match (cols.next(), cols.next(), cols.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => {
                    r.push(a);
                    phi.push(b);
                }
                _ => return Err(Error::Parse(format!("bad pair-table row {line:?}"))),
            }
        }
        Self::new(r, phi, bounds)
    }

    pub fn eval(&self, dist: f64) -> f64 {
        let n = self.r.len();
        if dist > self.r[n - 1] {
            return 0.0;
        }
        if dist <= self.r[0] {
            return self.phi[0];
        }
        let k = self.r.partition_point(|&ri| ri < dist);
        let (r0, r1) = (self.r[k - 1], self.r[k]);
        let w = (dist - r0) / (r1 - r0);
        self.phi[k - 1] * (1.0 - w) + self.phi[k] * w
    }

    pub fn max_abs(&self) -> f64 {
        self.phi.iter().fold(0.0, |m, p| m.max(p.abs()))
    }

    pub fn bounds(&self) -> PairBounds {
        self.bounds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InteractionKind {
    Ideal { z: f64 },
    Area { alpha: f64 },
    Pair(PairPotential),
}

/// An immutable interaction: family, range `R`, inverse temperature `β`
/// and dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    kind: InteractionKind,
    range: f64,
    beta: f64,
    dim: usize,
    area_quadrature: AreaQuadrature,
}

impl InteractionSpec {
    pub fn new(kind: InteractionKind, dim: usize, range: f64, beta: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidSpec(format!("dimension {dim} not supported")));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::InvalidSpec(format!("range must be positive, got {range}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidSpec(format!("beta must be >= 0, got {beta}")));
        }
        match &kind {
            InteractionKind::Ideal { z } if !(*z > 0.0 && z.is_finite()) => {
                return Err(Error::InvalidSpec(format!("intensity must be positive, got {z}")))
            }
            InteractionKind::Area { alpha } if !alpha.is_finite() => {
                return Err(Error::InvalidSpec("alpha must be finite".into()))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            range,
            beta,
            dim,
            area_quadrature: AreaQuadrature::Exact,
        })
    }

    /// Ideal gas with constant birth rate `z`. `range` only sizes indices and
    /// buffers.
    pub fn ideal(dim: usize, z: f64, range: f64) -> Result<Self> {
        Self::new(InteractionKind::Ideal { z }, dim, range, 1.0)
    }

    pub fn area(dim: usize, alpha: f64, range: f64, beta: f64) -> Result<Self> {
        Self::new(InteractionKind::Area { alpha }, dim, range, beta)
    }

    pub fn pair(dim: usize, potential: PairPotential, range: f64, beta: f64) -> Result<Self> {
        Self::new(InteractionKind::Pair(potential), dim, range, beta)
    }

    pub fn with_area_quadrature(mut self, q: AreaQuadrature) -> Self {
        self.area_quadrature = q;
        self
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut s = Self::new(self.kind.clone(), self.dim, self.range, beta)?;
        s.area_quadrature = self.area_quadrature;
        Ok(s)
    }

    pub fn kind(&self) -> &InteractionKind {
        &self.kind
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the birth rate does not depend on the configuration.
    pub fn is_constant_rate(&self) -> bool {
        match &self.kind {
            InteractionKind::Ideal { .. } => true,
            InteractionKind::Area { alpha } => *alpha == 0.0 || self.beta == 0.0,
            InteractionKind::Pair(p) => p.max_abs() == 0.0 || self.beta == 0.0,
        }
    }

    /// `h(x, η) = H(η + δ_x) - H(η)`, without the factor `β`. Only points of
    /// `η` within distance `R` of `x` contribute.
    ///
    /// For the ideal gas this is `-ln z`, so that `e^{-h} = z` at unit `β`;
    /// birth rates for the ideal gas bypass `h` entirely.
    pub fn conditional_energy(&self, x: &Point, eta: &Configuration) -> Result<f64> {
        match &self.kind {
            InteractionKind::Ideal { z } => Ok(-z.ln()),
            InteractionKind::Area { alpha } => {
                if *alpha == 0.0 {
                    return Ok(0.0);
                }
                let rho = self.range / 2.0;
                let mut rel = Vec::new();
                eta.for_each_neighbor(x, self.range, |y| {
                    let d = y.relative_to(x);
                    rel.push(d.coords());
                });
                let uncovered = if self.dim == 1 {
                    uncovered_interval_length(rho, &rel)
                } else {
                    match self.area_quadrature {
                        AreaQuadrature::Exact => uncovered_disc_area(rho, &rel),
                        AreaQuadrature::Strips { tol } => uncovered_disc_area_strips(rho, &rel, tol)?,
                    }
                };
                Ok(alpha * uncovered)
            }
            InteractionKind::Pair(p) => {
                let mut h = 0.0;
                eta.for_each_neighbor(x, self.range, |y| h += p.eval(x.dist(y)));
                Ok(h)
            }
        }
    }

    /// `b(x, η) = e^{-β h(x, η)}`; the ideal gas returns `z`.
    pub fn birth_rate(&self, x: &Point, eta: &Configuration) -> Result<f64> {
        match &self.kind {
            InteractionKind::Ideal { z } => Ok(*z),
            _ => Ok((-self.beta * self.conditional_energy(x, eta)?).exp()),
        }
    }

    /// `(b_inf, b_sup)` with `b_inf <= b(x, η) <= b_sup` for every `(x, η)`.
    pub fn rate_bounds(&self) -> (f64, f64) {
        match &self.kind {
            InteractionKind::Ideal { z } => (*z, *z),
            InteractionKind::Area { alpha } => {
                let rho = self.range / 2.0;
                let ball = if self.dim == 1 { 2.0 * rho } else { PI * rho * rho };
                let extreme = (-self.beta * alpha * ball).exp();
                (extreme.min(1.0), extreme.max(1.0))
            }
            InteractionKind::Pair(p) => match p.bounds {
                PairBounds::NonNegative { max_neighbors } => (
                    (-self.beta * p.max_abs() * max_neighbors as f64).exp(),
                    1.0,
                ),
                PairBounds::Explicit { b_inf, b_sup } => (b_inf, b_sup),
            },
        }
    }

    /// Energy of the points of `eta` inside `w` given the frozen `boundary`,
    /// relative to the boundary alone, by inserting the points one at a time.
    pub fn energy_in_window(
        &self,
        eta: &Configuration,
        w: &Window,
        boundary: &Configuration,
    ) -> Result<f64> {
        let inner: Vec<Point> = eta.iter().filter(|p| w.contains(p)).copied().collect();
        self.energy_with_order(&inner, w, boundary)
    }

    /// As [`energy_in_window`](Self::energy_in_window) with an explicit
    /// insertion order.
    pub fn energy_with_order(
        &self,
        order: &[Point],
        w: &Window,
        boundary: &Configuration,
    ) -> Result<f64> {
        let hull = w.dilate(self.range);
        let mut work = Configuration::new(hull, self.range);
        for b in boundary.iter() {
            if w.contains(b) || !hull.contains(b) {
                return Err(Error::InvalidArgument(format!(
                    "boundary point {:?} must lie in the collar of width R around the window",
                    b.coords()
                )));
            }
            work.insert(*b)?;
        }
        let mut total = 0.0;
        for p in order {
            if !w.contains(p) {
                return Err(Error::OutsideWindow(p.coord(0), p.coord(1)));
            }
            total += self.conditional_energy(p, &work)?;
            work.insert(*p)?;
        }
        Ok(total)
    }
}

/// Length of `[-rho, rho]` not covered by `[c - rho, c + rho]` for the given
/// neighbour offsets `c`.
fn uncovered_interval_length(rho: f64, rel: &[[f64; 2]]) -> f64 {
    let mut iv: Vec<(f64, f64)> = rel
        .iter()
        .map(|c| ((c[0] - rho).max(-rho), (c[0] + rho).min(rho)))
        .filter(|(a, b)| b > a)
        .collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    (2.0 * rho - union_length(&iv)).max(0.0)
}

/// Total length of a union of sorted closed intervals.
fn union_length(sorted: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for &(a, b) in sorted {
        cur = match cur {
            Some((s, e)) if a <= e => Some((s, e.max(b))),
            Some((s, e)) => {
                total += e - s;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((s, e)) = cur {
        total += e - s;
    }
    total
}

/// Parts of the arc `[0, len]` (angles measured from `start`) not covered by
/// any of the angular intervals `covered` (absolute angles, possibly wrapping).
fn free_arcs(start: f64, len: f64, covered: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut iv = Vec::with_capacity(covered.len() * 2);
    for &(a, b) in covered {
        let width = b - a;
        if width >= TAU {
            return Vec::new();
        }
        let s = (a - start).rem_euclid(TAU);
        let e = s + width;
        if e <= TAU {
            iv.push((s, e));
        } else {
            iv.push((s, TAU));
            iv.push((0.0, e - TAU));
        }
    }
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for (s, e) in iv {
        if s >= len {
            break;
        }
        if s > cursor {
            out.push((start + cursor, start + s));
        }
        cursor = f64::max(cursor, e);
        if cursor >= len {
            break;
        }
    }
    if cursor < len {
        out.push((start + cursor, start + len));
    }
    out
}

/// `½ ∮ (x dy - y dx)` along the counter-clockwise arc `[t1, t2]` of the
/// circle of radius `rho` centred at `c`.
fn arc_green(c: [f64; 2], rho: f64, t1: f64, t2: f64) -> f64 {
    0.5 * (rho * rho * (t2 - t1) + rho * (c[0] * (t2.sin() - t1.sin()) - c[1] * (t2.cos() - t1.cos())))
}

/// Area of `B(0, rho)` not covered by the discs `B(c, rho)`, by integrating
/// over the boundary of the uncovered region.
fn uncovered_disc_area(rho: f64, rel: &[[f64; 2]]) -> f64 {
    let diam = 2.0 * rho;
    let discs: Vec<[f64; 2]> = rel
        .iter()
        .copied()
        .filter(|c| c[0].hypot(c[1]) < diam)
        .collect();
    if discs.iter().any(|c| c[0] == 0.0 && c[1] == 0.0) {
        return 0.0;
    }
    if discs.is_empty() {
        return PI * rho * rho;
    }
    // Angular interval of circle `from` lying inside the disc centred at `to`.
    let inside = |from: [f64; 2], to: [f64; 2]| -> Option<(f64, f64)> {
        let dx = to[0] - from[0];
        let dy = to[1] - from[1];
        let d = dx.hypot(dy);
        if d >= diam {
            return None;
        }
        if d == 0.0 {
            return Some((0.0, TAU));
        }
        let dir = dy.atan2(dx);
        let half = (d / diam).clamp(-1.0, 1.0).acos();
        Some((dir - half, dir + half))
    };

    let origin = [0.0, 0.0];
    let mut area = 0.0;
    let covered0: Vec<_> = discs.iter().filter_map(|&c| inside(origin, c)).collect();
    for (t1, t2) in free_arcs(0.0, TAU, &covered0) {
        area += arc_green(origin, rho, t1, t2);
    }
    for (j, &cj) in discs.iter().enumerate() {
        let Some((a, b)) = inside(cj, origin) else { continue };
        let covered: Vec<_> = discs
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .filter_map(|(_, &ck)| inside(cj, ck))
            .collect();
        for (t1, t2) in free_arcs(a, b - a, &covered) {
            // The region lies outside disc j, so this boundary runs clockwise.
            area -= arc_green(cj, rho, t1, t2);
        }
    }
    area.clamp(0.0, PI * rho * rho)
}

/// Strip-quadrature error model: the midpoint rule on chord lengths has
/// square-root endpoint singularities, giving `O(h^{3/2})` per breakpoint.
fn strip_error_estimate(rho: f64, n_discs: usize, strips: usize) -> f64 {
    let h = 2.0 * rho / strips as f64;
    (1 + n_discs) as f64 * rho.sqrt() * h.powf(1.5)
}

fn uncovered_disc_area_strips(rho: f64, rel: &[[f64; 2]], tol: f64) -> Result<f64> {
    let k = rel.len();
    let needed = 2.0 * rho * (((1 + k) as f64 * rho.sqrt()) / tol).powf(2.0 / 3.0);
    if !(needed.is_finite()) || needed > MAX_STRIPS as f64 {
        return Err(Error::QuadratureResolution {
            requested: tol,
            achievable: strip_error_estimate(rho, k, MAX_STRIPS),
        });
    }
    let strips = (needed.ceil() as usize).max(16);
    Ok(uncovered_disc_area_with_strips(rho, rel, strips))
}

/// Strip quadrature with a fixed strip count.
pub(crate) fn uncovered_disc_area_with_strips(rho: f64, rel: &[[f64; 2]], strips: usize) -> f64 {
    let h = 2.0 * rho / strips as f64;
    let mut chords = Vec::with_capacity(rel.len());
    let mut total = 0.0;
    for s in 0..strips {
        let u = -rho + (s as f64 + 0.5) * h;
        let half = (rho * rho - u * u).max(0.0).sqrt();
        chords.clear();
        for c in rel {
            let du = u - c[0];
            let r2 = rho * rho - du * du;
            if r2 > 0.0 {
                let hw = r2.sqrt();
                let a = (c[1] - hw).max(-half);
                let b = (c[1] + hw).min(half);
                if b > a {
                    chords.push((a, b));
                }
            }
        }
        chords.sort_by(|a, b| a.0.total_cmp(&b.0));
        total += (2.0 * half - union_length(&chords)).max(0.0);
    }
    total * h
}
