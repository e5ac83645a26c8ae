//! Points, box windows and simple point configurations.
//!
//! A [`Configuration`] is a finite set of distinct points inside an ambient
//! [`Window`], backed by a uniform grid so that finite-range neighbour
//! queries touch only a handful of cells.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid resolution cap: at most this many cells along any axis.
const MAX_CELLS_PER_AXIS: f64 = 64.0;

/// A location in one or two dimensions. One-dimensional points keep their
/// second coordinate at zero, so distances need no dimension argument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: [f64; 2],
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        let c = match *coords {
            [x] => [x, 0.0],
            [x, y] => [x, y],
            _ => {
                return Err(Error::InvalidPoint(format!(
                    "dimension {} not supported",
                    coords.len()
                )))
            }
        };
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite coordinates {c:?}")));
        }
        Ok(Self { coords: c })
    }

    /// Point on the line. Panics on non-finite input.
    pub fn on_line(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite coordinate");
        Self { coords: [x, 0.0] }
    }

    /// Point in the plane. Panics on non-finite input.
    pub fn planar(x: f64, y: f64) -> Self {
        assert!(x.is_finite() && y.is_finite(), "non-finite coordinate");
        Self { coords: [x, y] }
    }

    pub fn coord(&self, axis: usize) -> f64 {
        self.coords[axis]
    }

    pub fn coords(&self) -> [f64; 2] {
        self.coords
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.coords[0] - other.coords[0];
        let dy = self.coords[1] - other.coords[1];
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// `self - origin`, i.e. the point seen from `origin`.
    pub fn relative_to(&self, origin: &Point) -> Point {
        Point {
            coords: [
                self.coords[0] - origin.coords[0],
                self.coords[1] - origin.coords[1],
            ],
        }
    }

    fn key(&self) -> (u64, u64) {
        (self.coords[0].to_bits(), self.coords[1].to_bits())
    }
}

/// Half-open axis-aligned box `[lo, hi)` in dimension 1 or 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Window {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || !(1..=2).contains(&lo.len()) {
            return Err(Error::InvalidWindow(format!(
                "corner dimensions {} and {} (expected 1 or 2)",
                lo.len(),
                hi.len()
            )));
        }
        let dim = lo.len();
        let mut l = [0.0, 0.0];
        let mut h = [1.0, 1.0];
        for i in 0..dim {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
                return Err(Error::InvalidWindow(format!(
                    "axis {i}: need finite lo < hi, got [{}, {})",
                    lo[i], hi[i]
                )));
            }
            l[i] = lo[i];
            h[i] = hi[i];
        }
        Ok(Self { dim, lo: l, hi: h })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(&[lo], &[hi])
    }

    /// `[lo, hi)^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(&vec![lo; dim], &vec![hi; dim])
    }

    /// Box of side `side` centred at `center`, in the dimension of the window
    /// the centre belongs to.
    pub fn centered(dim: usize, center: &Point, side: f64) -> Result<Self> {
        let lo: Vec<f64> = (0..dim).map(|i| center.coord(i) - side / 2.0).collect();
        let hi: Vec<f64> = (0..dim).map(|i| center.coord(i) + side / 2.0).collect();
        Self::new(&lo, &hi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn max_side(&self) -> f64 {
        (0..self.dim).map(|i| self.side(i)).fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|i| self.side(i)).product()
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0, 0.0];
        for (i, ci) in c.iter_mut().enumerate().take(self.dim) {
            *ci = 0.5 * (self.lo[i] + self.hi[i]);
        }
        Point { coords: c }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|i| p.coords[i] >= self.lo[i] && p.coords[i] < self.hi[i])
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.dim == other.dim
            && (0..self.dim).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// True when the interiors intersect.
    pub fn overlaps(&self, other: &Window) -> bool {
        (0..self.dim.min(other.dim)).all(|i| self.lo[i] < other.hi[i] && other.lo[i] < self.hi[i])
    }

    /// Box (ℓ∞) dilation `[lo - r, hi + r)`; a superset of the Euclidean
    /// dilation by a ball of radius `r`.
    pub fn dilate(&self, r: f64) -> Window {
        assert!(r >= 0.0 && r.is_finite(), "dilation radius must be finite and >= 0");
        let mut w = *self;
        for i in 0..self.dim {
            w.lo[i] -= r;
            w.hi[i] += r;
        }
        w
    }

    /// Inner parallel box `[lo + r, hi - r)`, or `None` when it is empty.
    pub fn erode(&self, r: f64) -> Option<Window> {
        let lo: Vec<f64> = (0..self.dim).map(|i| self.lo[i] + r).collect();
        let hi: Vec<f64> = (0..self.dim).map(|i| self.hi[i] - r).collect();
        Window::new(&lo, &hi).ok()
    }

    /// ℓ∞ distance from `p` to the complement of the window (0 outside).
    pub fn depth(&self, p: &Point) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        (0..self.dim)
            .map(|i| (p.coords[i] - self.lo[i]).min(self.hi[i] - p.coords[i]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut c = [0.0, 0.0];
        for (i, ci) in c.iter_mut().enumerate().take(self.dim) {
            let u: f64 = rng.random();
            // Guard against rounding onto the open upper face.
            *ci = (self.lo[i] + u * self.side(i)).min(self.hi[i].next_down());
        }
        Point { coords: c }
    }

    /// Midpoints of a regular tensor grid with (at most) `step` spacing.
    pub fn midpoint_grid(&self, step: f64) -> (Vec<Point>, f64) {
        let n: Vec<usize> = (0..self.dim)
            .map(|i| (self.side(i) / step).ceil().max(1.0) as usize)
            .collect();
        let h: Vec<f64> = (0..self.dim).map(|i| self.side(i) / n[i] as f64).collect();
        let cell_volume: f64 = h.iter().product();
        let mut nodes = Vec::with_capacity(n.iter().product());
        if self.dim == 1 {
            for a in 0..n[0] {
                nodes.push(Point::on_line(self.lo[0] + (a as f64 + 0.5) * h[0]));
            }
        } else {
            for a in 0..n[0] {
                for b in 0..n[1] {
                    nodes.push(Point::planar(
                        self.lo[0] + (a as f64 + 0.5) * h[0],
                        self.lo[1] + (b as f64 + 0.5) * h[1],
                    ));
                }
            }
        }
        (nodes, cell_volume)
    }
}

/// Uniform bucket grid over the ambient window.
#[derive(Clone, Debug)]
struct Grid {
    cell: f64,
    shape: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

impl Grid {
    fn new(window: &Window, range: f64) -> Self {
        let cell = range.max(window.max_side() / MAX_CELLS_PER_AXIS);
        let mut shape = [1, 1];
        for (i, s) in shape.iter_mut().enumerate().take(window.dim()) {
            *s = ((window.side(i) / cell).ceil() as usize).max(1);
        }
        Self {
            cell,
            shape,
            buckets: vec![Vec::new(); shape[0] * shape[1]],
        }
    }

    fn axis_index(&self, window: &Window, axis: usize, v: f64) -> isize {
        ((v - window.lo[axis]) / self.cell).floor() as isize
    }

    fn clamp(&self, axis: usize, i: isize) -> usize {
        i.clamp(0, self.shape[axis] as isize - 1) as usize
    }

    fn bucket_of(&self, window: &Window, p: &Point) -> usize {
        let a = self.clamp(0, self.axis_index(window, 0, p.coords[0]));
        let b = if window.dim() == 2 {
            self.clamp(1, self.axis_index(window, 1, p.coords[1]))
        } else {
            0
        };
        a * self.shape[1] + b
    }

    /// Inclusive bucket ranges covering the box `[lo, hi]` per axis.
    fn ranges(&self, window: &Window, lo: [f64; 2], hi: [f64; 2]) -> [(usize, usize); 2] {
        let mut r = [(0, 0), (0, 0)];
        for (axis, ra) in r.iter_mut().enumerate().take(window.dim()) {
            *ra = (
                self.clamp(axis, self.axis_index(window, axis, lo[axis])),
                self.clamp(axis, self.axis_index(window, axis, hi[axis])),
            );
        }
        r
    }
}

/// A finite simple point configuration inside an ambient window.
#[derive(Clone, Debug)]
pub struct Configuration {
    window: Window,
    range: f64,
    points: Vec<Point>,
    grid: Grid,
}

impl Configuration {
    /// Empty configuration whose index supports neighbour queries up to
    /// `range` in a single 3^d-cell sweep.
    pub fn new(window: Window, range: f64) -> Self {
        assert!(range > 0.0 && range.is_finite(), "index range must be positive");
        let grid = Grid::new(&window, range);
        Self {
            window,
            range,
            points: Vec::new(),
            grid,
        }
    }

    pub fn from_points<I>(window: Window, range: f64, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = Point>,
    {
        let mut cfg = Self::new(window, range);
        for p in points {
            cfg.insert(p)?;
        }
        Ok(cfg)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn index_range(&self) -> f64 {
        self.range
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn insert(&mut self, p: Point) -> Result<()> {
        if !self.window.contains(&p) {
            return Err(Error::OutsideWindow(p.coords[0], p.coords[1]));
        }
        let b = self.grid.bucket_of(&self.window, &p);
        if self.grid.buckets[b]
            .iter()
            .any(|&i| self.points[i as usize].key() == p.key())
        {
            return Err(Error::DuplicatePoint(p.coords[0], p.coords[1]));
        }
        self.grid.buckets[b].push(self.points.len() as u32);
        self.points.push(p);
        Ok(())
    }

    /// Removes `p` if present (exact coordinate match).
    pub fn remove(&mut self, p: &Point) -> bool {
        if !self.window.contains(p) {
            return false;
        }
        let b = self.grid.bucket_of(&self.window, p);
        let Some(pos) = self.grid.buckets[b]
            .iter()
            .position(|&i| self.points[i as usize].key() == p.key())
        else {
            return false;
        };
        let idx = self.grid.buckets[b].swap_remove(pos) as usize;
        let last = self.points.len() - 1;
        if idx != last {
            let moved = self.points[last];
            let mb = self.grid.bucket_of(&self.window, &moved);
            let slot = self.grid.buckets[mb]
                .iter_mut()
                .find(|i| **i as usize == last)
                .expect("index out of sync with points");
            *slot = idx as u32;
        }
        self.points.swap_remove(idx);
        true
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        if !self.window.contains(p) {
            return false;
        }
        let b = self.grid.bucket_of(&self.window, p);
        self.grid.buckets[b]
            .iter()
            .any(|&i| self.points[i as usize].key() == p.key())
    }

    fn for_each_in_box<F: FnMut(&Point)>(&self, lo: [f64; 2], hi: [f64; 2], mut f: F) {
        let [(a0, a1), (b0, b1)] = self.grid.ranges(&self.window, lo, hi);
        for a in a0..=a1 {
            for b in b0..=b1 {
                for &i in &self.grid.buckets[a * self.grid.shape[1] + b] {
                    f(&self.points[i as usize]);
                }
            }
        }
    }

    /// Calls `f` on every point `y` with `|x - y| <= r`.
    pub fn for_each_neighbor<F: FnMut(&Point)>(&self, x: &Point, r: f64, mut f: F) {
        let r2 = r * r;
        let lo = [x.coords[0] - r, x.coords[1] - r];
        let hi = [x.coords[0] + r, x.coords[1] + r];
        self.for_each_in_box(lo, hi, |y| {
            if x.dist_sq(y) <= r2 {
                f(y)
            }
        });
    }

    pub fn neighbors_within(&self, x: &Point, r: f64) -> Vec<Point> {
        let mut out = Vec::new();
        self.for_each_neighbor(x, r, |y| out.push(*y));
        out
    }

    pub fn count(&self, w: &Window) -> usize {
        let mut n = 0;
        let hi = [w.hi[0], w.hi[1]];
        self.for_each_in_box(w.lo, hi, |p| {
            if w.contains(p) {
                n += 1
            }
        });
        n
    }

    /// Points inside `w`, kept in the same ambient window and insertion order.
    pub fn restrict(&self, w: &Window) -> Configuration {
        let mut out = Configuration::new(self.window, self.range);
        for p in self.points.iter().filter(|p| w.contains(p)) {
            out.insert(*p).expect("restriction of a simple configuration");
        }
        out
    }

    /// Same points in a different ambient window (and index range).
    pub fn reembed(&self, window: Window, range: f64) -> Result<Configuration> {
        Configuration::from_points(window, range, self.points.iter().copied())
    }

    /// Order-insensitive equality of the point sets.
    pub fn same_points(&self, other: &Configuration) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut a: Vec<_> = self.points.iter().map(Point::key).collect();
        let mut b: Vec<_> = other.points.iter().map(Point::key).collect();
        a.sort_unstable();
        b.sort_unstable();
        a == b
    }

    /// Writes one point per row after a `dim=<d>` header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "dim={}", self.dim())?;
        for p in &self.points {
            if self.dim() == 1 {
                writeln!(out, "{}", p.coords[0])?;
            } else {
                writeln!(out, "{},{}", p.coords[0], p.coords[1])?;
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`Configuration::write_csv`].
    pub fn read_csv<R: BufRead>(input: R, window: Window, range: f64) -> Result<Configuration> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing dim header".into()))??;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?;
        if dim != window.dim() {
            return Err(Error::Parse(format!(
                "file dimension {dim} does not match window dimension {}",
                window.dim()
            )));
        }
        let mut cfg = Configuration::new(window, range);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let coords: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("{line:?}: {e}")))?;
            if coords.len() != dim {
                return Err(Error::Parse(format!("{line:?}: expected {dim} columns")));
            }
            cfg.insert(Point::new(&coords)?)?;
        }
        Ok(cfg)
    }
}

/// Points carrying a lifespan (time until death).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkedConfiguration {
    entries: Vec<(Point, f64)>,
}

impl MarkedConfiguration {
    pub fn new(entries: Vec<(Point, f64)>) -> Result<Self> {
        if let Some(&(_, tau)) = entries.iter().find(|(_, t)| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidLifespan(tau));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(Point, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn restrict(&self, w: &Window) -> MarkedConfiguration {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|(p, _)| w.contains(p))
                .copied()
                .collect(),
        }
    }

    /// Points still alive at time `t` (lifespan strictly greater than `t`).
    pub fn survivors_at(&self, t: f64) -> impl Iterator<Item = &Point> {
        self.entries
            .iter()
            .filter(move |(_, tau)| *tau > t)
            .map(|(p, _)| p)
    }
}
