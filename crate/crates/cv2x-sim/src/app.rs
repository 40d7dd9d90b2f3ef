//! Application layer: periodic CAM generation and the one-deep transmit
//! buffer. Only the newest packet is ever transmitted; an older pending
//! packet is displaced (and counted as an application drop) when a newer
//! one is generated.

use rand::Rng;

use crate::scenario::VehicleId;

/// Fixed CAM payload size in bytes.
pub const CAM_SIZE_BYTES: u32 = 190;

/// CAM generation period in milliseconds (10 Hz).
pub const CAM_PERIOD_MS: u64 = 100;

/// One cooperative awareness message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cam {
    pub source: VehicleId,
    pub seq: u64,
    pub generated_at_ms: u64,
    pub size_bytes: u32,
}

/// Periodic CAM source with a per-vehicle phase offset in [0, period).
#[derive(Debug, Clone)]
pub struct CamSource {
    vehicle: VehicleId,
    phase_ms: u64,
    next_seq: u64,
}

impl CamSource {
    pub fn new(vehicle: VehicleId, rng: &mut impl Rng) -> Self {
        Self {
            vehicle,
            phase_ms: rng.gen_range(0..CAM_PERIOD_MS),
            next_seq: 0,
        }
    }

    pub fn phase_ms(&self) -> u64 {
        self.phase_ms
    }

    /// Emits a CAM iff `now` hits the source's generation instant.
    pub fn poll(&mut self, now_ms: u64) -> Option<Cam> {
        if now_ms % CAM_PERIOD_MS != self.phase_ms {
            return None;
        }
        let cam = Cam {
            source: self.vehicle,
            seq: self.next_seq,
            generated_at_ms: now_ms,
            size_bytes: CAM_SIZE_BYTES,
        };
        self.next_seq += 1;
        Some(cam)
    }

    pub fn generated_count(&self) -> u64 {
        self.next_seq
    }
}

/// Transmit buffer holding at most the newest generated packet.
#[derive(Debug, Clone, Default)]
pub struct TxBuffer {
    pending: Option<Cam>,
}

impl TxBuffer {
    /// Stores `cam`, returning true iff an older packet was displaced.
    pub fn enqueue(&mut self, cam: Cam) -> bool {
        let replaced = self.pending.is_some();
        self.pending = Some(cam);
        replaced
    }

    pub fn pending(&self) -> Option<&Cam> {
        self.pending.as_ref()
    }

    /// A packet can be sent at a reserved opportunity only if it was
    /// generated strictly before that subframe.
    pub fn has_transmittable(&self, now_ms: u64) -> bool {
        self.pending.map_or(false, |c| c.generated_at_ms < now_ms)
    }

    pub fn take_transmittable(&mut self, now_ms: u64) -> Option<Cam> {
        if self.has_transmittable(now_ms) {
            self.pending.take()
        } else {
            None
        }
    }

    /// Discards the pending packet (packet-dropping congestion control).
    pub fn drop_pending(&mut self) -> Option<Cam> {
        self.pending.take()
    }
}
