//! Golden wire vectors: one checked-in hex file per frame kind, pinned
//! against hand-assembled octets so the codec cannot drift silently.

use armac_sim::protocol::{Address, Packet, Payload};

fn read_vector(name: &str) -> Vec<u8> {
    let path = format!("{}/tests/vectors/{name}.hex", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    assert!(compact.len() % 2 == 0, "{name}: odd hex length");
    (0..compact.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&compact[i..i + 2], 16).expect("hex digit"))
        .collect()
}

fn assert_vector(name: &str, packet: Packet) {
    let bytes = read_vector(name);
    assert_eq!(
        packet.encode().expect("vector packet encodes"),
        bytes,
        "{name}: encoding changed"
    );
    assert_eq!(
        Packet::decode(&bytes).expect("vector decodes"),
        packet,
        "{name}: decoding changed"
    );
}

#[test]
fn channel_advertisement_vector() {
    assert_vector(
        "channel",
        Packet {
            src: Address::BROADCAST,
            payload: Payload::Channel {
                cn_address: Address(0),
                channel_id: 2,
            },
        },
    );
}

#[test]
fn time_slot_request_vector() {
    assert_vector(
        "time_slot_request",
        Packet {
            src: Address(3),
            payload: Payload::TimeSlotRequest {
                data_rate: 31,
                requested_slot_us: 1_600,
            },
        },
    );
}

#[test]
fn time_slot_request_reply_vector() {
    assert_vector(
        "time_slot_request_reply",
        Packet {
            src: Address(0),
            payload: Payload::TimeSlotRequestReply {
                slot_start_us: 158,
                slot_len_us: 1_584,
                cap_start_us: 900_000,
                cap_len_us: 50_000,
            },
        },
    );
}

#[test]
fn sync_ack_vector() {
    assert_vector(
        "sync_ack",
        Packet {
            src: Address(0),
            payload: Payload::SyncAck {
                dv_us: -330,
                odt: true,
            },
        },
    );
}

#[test]
fn data_request_vector() {
    assert_vector(
        "data_request",
        Packet {
            src: Address(0),
            payload: Payload::DataRequest {
                requested_bytes: 64,
            },
        },
    );
}

#[test]
fn ack_vector() {
    assert_vector(
        "ack",
        Packet {
            src: Address(0),
            payload: Payload::Ack { odt: false },
        },
    );
}

#[test]
fn data_vector() {
    assert_vector(
        "data",
        Packet {
            src: Address(5),
            payload: Payload::Data {
                body: vec![0xde, 0xad, 0xbe, 0xef],
            },
        },
    );
}
