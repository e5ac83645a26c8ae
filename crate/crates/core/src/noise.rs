//! Seeded driving noise for the graphical construction.
//!
//! Proposals `(x, s, r, u)` arrive at rate `b_sup · |w|` in time, with `x`
//! uniform on the window, lifespan `r ~ Exp(1)` and acceptance mark `u`
//! uniform on `[0, b_sup]`. Marks above `b_sup` could never pass the test
//! `u <= b(x, η)`, so this is the full space–time noise with the irrelevant
//! part discarded.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::{Point, Window};
use crate::error::{Error, Result};

/// Identifies one independent random stream.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub root_seed: u64,
    pub replica_id: u64,
    pub stream_tag: String,
}

impl SeedSpec {
    pub fn new(root_seed: u64, replica_id: u64, stream_tag: &str) -> Self {
        Self {
            root_seed,
            replica_id,
            stream_tag: stream_tag.to_string(),
        }
    }

    pub fn replica(&self, replica_id: u64) -> Self {
        Self {
            replica_id,
            ..self.clone()
        }
    }

    pub fn tagged(&self, tag: &str) -> Self {
        Self {
            stream_tag: tag.to_string(),
            ..self.clone()
        }
    }

    /// ChaCha20 keyed by `(root_seed, replica_id, tag digest)`. The block
    /// counter makes every output a pure function of the key and position.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.root_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replica_id.to_le_bytes());
        key[16..24].copy_from_slice(&fnv1a(self.stream_tag.as_bytes(), 0xcbf2_9ce4_8422_2325).to_le_bytes());
        key[24..].copy_from_slice(&fnv1a(self.stream_tag.as_bytes(), 0x8422_2325_cbf2_9ce4).to_le_bytes());
        ChaCha20Rng::from_seed(key)
    }
}

fn fnv1a(bytes: &[u8], basis: u64) -> u64 {
    bytes.iter().fold(basis, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// One proposal of the driving Poisson noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalEvent {
    pub x: Point,
    /// Proposal (birth) time.
    pub s: f64,
    /// Lifespan if accepted.
    pub r: f64,
    /// Acceptance mark in `[0, b_sup]`.
    pub u: f64,
}

/// Time-ordered proposals on a window up to a horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    window: Window,
    horizon: f64,
    b_sup: f64,
    events: Vec<ProposalEvent>,
}

impl EventStream {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn b_sup(&self) -> f64 {
        self.b_sup
    }

    pub fn events(&self) -> &[ProposalEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Debug dump: `s,x0[,x1],r,u` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if self.window.dim() == 1 {
            writeln!(out, "s,x0,r,u")?;
        } else {
            writeln!(out, "s,x0,x1,r,u")?;
        }
        for e in &self.events {
            if self.window.dim() == 1 {
                writeln!(out, "{},{},{},{}", e.s, e.x.coord(0), e.r, e.u)?;
            } else {
                writeln!(out, "{},{},{},{},{}", e.s, e.x.coord(0), e.x.coord(1), e.r, e.u)?;
            }
        }
        Ok(())
    }
}

/// Pre-generates every proposal on `w` during `[0, horizon]`.
pub fn propose_events(w: &Window, horizon: f64, b_sup: f64, seed: &SeedSpec) -> Result<EventStream> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if !(b_sup > 0.0 && b_sup.is_finite()) {
        return Err(Error::InvalidArgument(format!("b_sup must be positive, got {b_sup}")));
    }
    let mut rng = seed.rng();
    let gaps = Exp::new(b_sup * w.volume()).expect("positive rate");
    let mut events = Vec::new();
    let mut s = 0.0;
    loop {
        s += gaps.sample(&mut rng);
        if s > horizon {
            break;
        }
        let x = w.sample_uniform(&mut rng);
        let r: f64 = Exp1.sample(&mut rng);
        let u = rng.random::<f64>() * b_sup;
        events.push(ProposalEvent { x, s, r, u });
    }
    Ok(EventStream {
        window: *w,
        horizon,
        b_sup,
        events,
    })
}

/// The events of `stream` located in `w_small`, order preserved; both nested
/// simulations then consume identical randomness on the smaller window.
pub fn shared_restriction(stream: &EventStream, w_small: &Window) -> Result<EventStream> {
    if !stream.window.contains_window(w_small) {
        return Err(Error::NestingViolation(format!(
            "{w_small:?} is not inside the stream window {:?}",
            stream.window
        )));
    }
    Ok(EventStream {
        window: *w_small,
        horizon: stream.horizon,
        b_sup: stream.b_sup,
        events: stream
            .events
            .iter()
            .filter(|e| w_small.contains(&e.x))
            .copied()
            .collect(),
    })
}
