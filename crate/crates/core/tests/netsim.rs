//! Wire format for law transmissions and the bus-accounting wrapper
//! around the closed loop.

mod common;

use common::{ex1, ex1_qp, ex1_solver};
use nalgebra::{DMatrix, DVector};
use rmpc_core::{
    deserialize_packet, law_and_polytope, run_networked, sample_initial_states, serialize_packet,
    Controller, Error, LawPacket, Mode, PacketBody, RunLimits, ValidityRegion,
};

fn controller(mode: Mode, lambda: f64) -> Controller<'static> {
    Controller::new(ex1(), ex1_solver(), mode, lambda, None)
}

fn far_feasible_state() -> DVector<f64> {
    sample_initial_states(ex1(), ex1_solver(), 30, 21)
        .unwrap()
        .into_iter()
        .map(|(x, _)| x)
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap()
}

fn sample_packets(mode: Mode) -> Vec<LawPacket> {
    let mut packets = Vec::new();
    controller(mode, 1.0)
        .run_with_sink(&far_feasible_state(), &RunLimits::default(), None, |law, region| {
            packets.push(LawPacket::from_law(law, region))
        })
        .unwrap();
    packets
}

#[test]
fn round_trip_is_the_identity() {
    for mode in [Mode::Optimal, Mode::Suboptimal] {
        let packets = sample_packets(mode);
        assert!(!packets.is_empty());
        for packet in packets {
            let bytes = serialize_packet(&packet);
            assert_eq!(bytes.len(), packet.byte_len());
            let back = deserialize_packet(&bytes).unwrap();
            assert_eq!(back, packet);
            assert_eq!(serialize_packet(&back), bytes);
        }
    }
}

#[test]
fn exact_polytope_law_packet_is_808_bytes() {
    // n = 2, m = 1, 32 region rows: 16-byte header + 99 doubles.
    let (law, polytope) = law_and_polytope(ex1_qp(), &[]).unwrap();
    let packet = LawPacket::from_law(&law, &ValidityRegion::OptimalPolytope(polytope));
    assert_eq!(packet.kind(), 0);
    assert_eq!(serialize_packet(&packet).len(), 808);
}

#[test]
fn header_layout_is_fixed() {
    let packets = sample_packets(Mode::Suboptimal);
    let extended = packets.iter().find(|p| p.kind() == 1).expect("no extended packet");
    let bytes = serialize_packet(extended);
    assert_eq!(&bytes[0..4], b"RMPC");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u16::from_le_bytes(bytes[8..10].try_into().unwrap()), 2); // n
    assert_eq!(u16::from_le_bytes(bytes[10..12].try_into().unwrap()), 1); // m
    let r1 = match &extended.body {
        PacketBody::Extended { t1, .. } => t1.nrows() as u16,
        PacketBody::Optimal { .. } => unreachable!(),
    };
    assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), r1);
    assert_eq!(u16::from_le_bytes(bytes[14..16].try_into().unwrap()), 0); // reserved
    let first = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    assert_eq!(first, extended.k[(0, 0)]);
}

#[test]
fn empty_region_packet_survives_the_trip() {
    let packet = LawPacket {
        k: DMatrix::from_row_slice(1, 2, &[0.25, -0.5]),
        b: DVector::from_element(1, 2.0),
        body: PacketBody::Optimal { t: DMatrix::zeros(0, 2), d: DVector::zeros(0) },
    };
    let bytes = serialize_packet(&packet);
    assert_eq!(bytes.len(), 16 + 8 * 3);
    assert_eq!(deserialize_packet(&bytes).unwrap(), packet);
}

#[test]
fn malformed_packets_are_rejected() {
    let good = serialize_packet(&sample_packets(Mode::Optimal)[0]);

    assert!(matches!(deserialize_packet(&[]), Err(Error::MalformedPacket(_))));
    assert!(matches!(deserialize_packet(&good[..15]), Err(Error::MalformedPacket(_))));
    assert!(matches!(
        deserialize_packet(&good[..good.len() - 1]),
        Err(Error::MalformedPacket(_))
    ));

    let mut extra = good.clone();
    extra.push(0);
    assert!(matches!(deserialize_packet(&extra), Err(Error::MalformedPacket(_))));

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(deserialize_packet(&bad_magic), Err(Error::MalformedPacket(_))));

    let mut bad_kind = good.clone();
    bad_kind[4] = 7;
    assert!(matches!(deserialize_packet(&bad_kind), Err(Error::MalformedPacket(_))));

    let mut reserved_set = good;
    reserved_set[14] = 1;
    assert!(matches!(deserialize_packet(&reserved_set), Err(Error::MalformedPacket(_))));
}

#[test]
fn bus_wrapper_is_transparent_to_the_trajectory() {
    let x0 = far_feasible_state();
    let limits = RunLimits::default();
    for mode in [Mode::Optimal, Mode::Suboptimal] {
        let ctrl = controller(mode, 1.0);
        let plain = ctrl.run(&x0, &limits, None).unwrap();
        let (traj, telemetry) = run_networked(&ctrl, &x0, &limits, None).unwrap();
        assert_eq!(traj.states, plain.states);
        assert_eq!(traj.inputs, plain.inputs);
        assert_eq!(traj.events, plain.events);

        assert_eq!(telemetry.qp_count, plain.qp_count());
        assert_eq!(telemetry.messages, 2 * telemetry.qp_count);
        assert_eq!(telemetry.local_flops, plain.total_flops());
        assert_eq!(telemetry.steps, plain.steps());
        assert_eq!(telemetry.total_cost, plain.total_cost());
    }
}

#[test]
fn transmitted_bytes_sum_every_packet() {
    let x0 = far_feasible_state();
    let limits = RunLimits::default();
    let ctrl = controller(Mode::Suboptimal, 0.9);
    let mut expected = 0u64;
    ctrl.run_with_sink(&x0, &limits, None, |law, region| {
        expected += serialize_packet(&LawPacket::from_law(law, region)).len() as u64;
    })
    .unwrap();
    let (_, telemetry) = run_networked(&ctrl, &x0, &limits, None).unwrap();
    assert_eq!(telemetry.bytes_tx, expected);
    assert!(telemetry.bytes_tx > 0);
}

#[test]
fn screened_converged_start_still_counts_the_solve() {
    let x0 = DVector::zeros(2);
    let sol = ex1_solver().solve(&x0).unwrap();
    let ctrl = controller(Mode::Optimal, 1.0);
    let limits = RunLimits::default();

    let (traj, telemetry) = run_networked(&ctrl, &x0, &limits, Some(&sol)).unwrap();
    assert_eq!(traj.steps(), 0);
    assert_eq!(traj.qp_count(), 0);
    assert_eq!(telemetry.qp_count, 1);
    assert_eq!(telemetry.messages, 2);
    let (law, region) = ctrl.derive_law(&sol).unwrap();
    assert_eq!(telemetry.bytes_tx, LawPacket::from_law(&law, &region).byte_len() as u64);

    // Without the screening solve there is nothing to account.
    let (_, unscreened) = run_networked(&ctrl, &x0, &limits, None).unwrap();
    assert_eq!(unscreened.qp_count, 0);
    assert_eq!(unscreened.messages, 0);
    assert_eq!(unscreened.bytes_tx, 0);
}
