//! Central-node/local-node split: the central node solves QPs and ships
//! each new law with its validity region as one byte-exact packet; the
//! bus is transparent, so networked runs reproduce plain runs bit for
//! bit while messages and bytes are counted.

use nalgebra::{DMatrix, DVector};

use crate::controller::{Controller, RunLimits, Trajectory};
use crate::error::{Error, Result};
use crate::qp::QPSolution;
use crate::regions::{AffineLaw, ValidityRegion};

const MAGIC: &[u8; 4] = b"RMPC";
const HEADER_LEN: usize = 16;

/// Region payload of a law packet.
#[derive(Debug, Clone, PartialEq)]
pub enum PacketBody {
    /// Exact polytope rows (T*, d*).
    Optimal { t: DMatrix<f64>, d: DVector<f64> },
    /// Feasibility rows plus the quadric coefficients.
    Extended {
        t1: DMatrix<f64>,
        d1: DVector<f64>,
        t3: DMatrix<f64>,
        t2: DVector<f64>,
        d2: f64,
    },
}

/// One law transmission: the first-input feedback (K, b) and the region
/// the local node may keep using it on.
#[derive(Debug, Clone, PartialEq)]
pub struct LawPacket {
    pub k: DMatrix<f64>,
    pub b: DVector<f64>,
    pub body: PacketBody,
}

impl LawPacket {
    pub fn from_law(law: &AffineLaw, region: &ValidityRegion) -> LawPacket {
        let body = match region {
            ValidityRegion::OptimalPolytope(p) => PacketBody::Optimal {
                t: p.matrix().clone_owned(),
                d: p.offsets().clone_owned(),
            },
            ValidityRegion::Extended {
                feasibility,
                quadric,
            } => PacketBody::Extended {
                t1: feasibility.matrix().clone_owned(),
                d1: feasibility.offsets().clone_owned(),
                t3: quadric.t3.clone(),
                t2: quadric.t2.clone(),
                d2: quadric.d2,
            },
        };
        LawPacket {
            k: law.k.clone(),
            b: law.b.clone(),
            body,
        }
    }

    pub fn kind(&self) -> u32 {
        match self.body {
            PacketBody::Optimal { .. } => 0,
            PacketBody::Extended { .. } => 1,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        let (m, n) = (self.k.nrows(), self.k.ncols());
        let r1 = match &self.body {
            PacketBody::Optimal { t, .. } => t.nrows(),
            PacketBody::Extended { t1, .. } => t1.nrows(),
        };
        (n, m, r1)
    }

    /// Serialized size: 16-byte header plus 8 bytes per matrix entry.
    pub fn byte_len(&self) -> usize {
        let (n, m, r1) = self.dims();
        let law = m * n + m;
        let region = match self.body {
            PacketBody::Optimal { .. } => r1 * n + r1,
            PacketBody::Extended { .. } => r1 * n + r1 + n * n + n + 1,
        };
        HEADER_LEN + 8 * (law + region)
    }
}

fn push_f64s(out: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

/// Layout: magic `RMPC`, kind as u32 LE, then n, m, r1, r2 as u16 LE
/// (r2 is reserved and zero), then row-major f64 LE payloads in
/// declaration order: K, b, region matrices.
pub fn serialize_packet(packet: &LawPacket) -> Vec<u8> {
    let (n, m, r1) = packet.dims();
    let mut out = Vec::with_capacity(packet.byte_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&packet.kind().to_le_bytes());
    for dim in [n, m, r1, 0usize] {
        let dim = u16::try_from(dim).expect("packet dimension exceeds u16");
        out.extend_from_slice(&dim.to_le_bytes());
    }
    push_matrix(&mut out, &packet.k);
    push_f64s(&mut out, packet.b.iter().copied());
    match &packet.body {
        PacketBody::Optimal { t, d } => {
            push_matrix(&mut out, t);
            push_f64s(&mut out, d.iter().copied());
        }
        PacketBody::Extended { t1, d1, t3, t2, d2 } => {
            push_matrix(&mut out, t1);
            push_f64s(&mut out, d1.iter().copied());
            push_matrix(&mut out, t3);
            push_f64s(&mut out, t2.iter().copied());
            push_f64s(&mut out, std::iter::once(*d2));
        }
    }
    debug_assert_eq!(out.len(), packet.byte_len());
    out
}

pub fn deserialize_packet(bytes: &[u8]) -> Result<LawPacket> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedPacket(format!(
            "{} bytes is shorter than the 16-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::MalformedPacket("bad magic".into()));
    }
    let kind = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if kind > 1 {
        return Err(Error::MalformedPacket(format!("unknown kind {kind}")));
    }
    let dim = |at: usize| u16::from_le_bytes(bytes[at..at + 2].try_into().unwrap()) as usize;
    let (n, m, r1, r2) = (dim(8), dim(10), dim(12), dim(14));
    if r2 != 0 {
        return Err(Error::MalformedPacket(format!(
            "reserved dimension is {r2}, expected 0"
        )));
    }
    let region_entries = if kind == 0 {
        r1 * n + r1
    } else {
        r1 * n + r1 + n * n + n + 1
    };
    let expected = HEADER_LEN + 8 * (m * n + m + region_entries);
    if bytes.len() != expected {
        return Err(Error::MalformedPacket(format!(
            "{} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut at = HEADER_LEN;
    let mut next = || {
        let v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        at += 8;
        v
    };
    let matrix = |rows: usize, cols: usize, next: &mut dyn FnMut() -> f64| {
        let mut out = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = next();
            }
        }
        out
    };
    let vector = |len: usize, next: &mut dyn FnMut() -> f64| {
        DVector::from_iterator(len, (0..len).map(|_| next()))
    };
    let k = matrix(m, n, &mut next);
    let b = vector(m, &mut next);
    let body = if kind == 0 {
        PacketBody::Optimal {
            t: matrix(r1, n, &mut next),
            d: vector(r1, &mut next),
        }
    } else {
        PacketBody::Extended {
            t1: matrix(r1, n, &mut next),
            d1: vector(r1, &mut next),
            t3: matrix(n, n, &mut next),
            t2: vector(n, &mut next),
            d2: next(),
        }
    };
    Ok(LawPacket { k, b, body })
}

/// Counters the bus accumulates over one run. Each QP event costs one
/// request message up and one law packet down.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Telemetry {
    pub qp_count: usize,
    pub local_flops: u64,
    pub bytes_tx: u64,
    pub messages: usize,
    pub total_cost: f64,
    pub steps: usize,
}

/// Runs the closed loop with the bus in between. States and inputs are
/// identical to `Controller::run` with the same arguments. When a
/// screening solution is supplied for an already-converged initial
/// state, that solve is still accounted as one QP and one transmission.
pub fn run_networked(
    controller: &Controller,
    x0: &DVector<f64>,
    limits: &RunLimits,
    initial: Option<&QPSolution>,
) -> Result<(Trajectory, Telemetry)> {
    let mut bytes = 0u64;
    let mut packets = 0usize;
    let trajectory = controller.run_with_sink(x0, limits, initial, |law, region| {
        let packet = LawPacket::from_law(law, region);
        bytes += serialize_packet(&packet).len() as u64;
        packets += 1;
    })?;
    let mut telemetry = Telemetry {
        qp_count: trajectory.qp_count(),
        local_flops: trajectory.total_flops(),
        bytes_tx: bytes,
        messages: 2 * trajectory.qp_count(),
        total_cost: trajectory.total_cost(),
        steps: trajectory.steps(),
    };
    debug_assert_eq!(packets, telemetry.qp_count);
    if trajectory.steps() == 0 {
        if let Some(sol) = initial {
            let (law, region) = controller.derive_law(sol)?;
            let packet = LawPacket::from_law(&law, &region);
            telemetry.qp_count = 1;
            telemetry.messages = 2;
            telemetry.bytes_tx = packet.byte_len() as u64;
        }
    }
    Ok((trajectory, telemetry))
}
