//! Wire format for the MAC control and data frames.
//!
//! Every frame is a fixed three-octet header followed by a kind-specific
//! body. All multi-octet fields are big-endian.
//!
//! ```text
//!  0              1              2              3
//!  +--------------+--------------+--------------+----------------- - -
//!  |  kind code   |        node address         |  body (per kind)
//!  +--------------+--------------+--------------+----------------- - -
//! ```
//!
//! The single address field names the *sensor node* a frame concerns: for
//! node-originated frames it is the sender, for hub-originated frames it
//! is the recipient (everyone already knows the hub sent it in a star
//! topology). The channel advertisement is the one broadcast frame: its
//! header address is [`Address::BROADCAST`] and the hub's own address
//! travels in the body.
//!
//! Encoded frames never exceed [`MAX_FRAME_LEN`] octets (the classic
//! 127-octet MPDU budget), which in practice only constrains `Data`
//! bodies. Decoding is strict: short input, an unassigned kind code, or
//! octets past the body are all errors, so `decode` is an exact inverse
//! of `encode` on its image.

use thiserror::Error;

/// Hard cap on an encoded frame, header included.
pub const MAX_FRAME_LEN: usize = 127;

/// Kind code plus 16-bit address.
pub const HEADER_LEN: usize = 3;

/// Longest `Data` body that still encodes: header + 1-octet length prefix
/// leave 123 octets of the MPDU budget.
pub const MAX_DATA_BODY: usize = MAX_FRAME_LEN - HEADER_LEN - 1;

/// 16-bit short address of a node or the hub.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub u16);

impl Address {
    /// All-ones broadcast address.
    pub const BROADCAST: Address = Address(0xFFFF);
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#06x}", self.0)
    }
}

/// Frame kinds in wire-code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PacketKind {
    /// Hub advertisement of the operating channel.
    Channel = 1,
    /// Node asks for a transmission slot.
    TimeSlotRequest = 2,
    /// Hub grants a slot and describes the contention window.
    TimeSlotRequestReply = 3,
    /// Acknowledgement carrying a clock correction.
    SyncAck = 4,
    /// Hub asks a node for extra data outside its slot.
    DataRequest = 5,
    /// Plain acknowledgement.
    Ack = 6,
    /// Sensor payload.
    Data = 7,
}

impl PacketKind {
    /// Wire code of this kind.
    pub fn code(self) -> u8 {
        self as u8
    }

    /// Inverse of [`PacketKind::code`]; `None` for unassigned codes.
    pub fn from_code(code: u8) -> Option<PacketKind> {
        match code {
            1 => Some(PacketKind::Channel),
            2 => Some(PacketKind::TimeSlotRequest),
            3 => Some(PacketKind::TimeSlotRequestReply),
            4 => Some(PacketKind::SyncAck),
            5 => Some(PacketKind::DataRequest),
            6 => Some(PacketKind::Ack),
            7 => Some(PacketKind::Data),
            _ => None,
        }
    }
}

/// Kind-specific frame body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Channel advertisement: hub address plus the RF channel it picked.
    Channel { cn_address: Address, channel_id: u8 },
    /// Slot request: per-frame payload size (octets) and an optional
    /// explicit slot-duration floor in µs (0 = let the hub size it).
    TimeSlotRequest { data_rate: u16, requested_slot_us: u32 },
    /// Slot grant: slot position/length and contention-window bounds,
    /// all µs offsets within the frame.
    TimeSlotRequestReply {
        slot_start_us: u32,
        slot_len_us: u32,
        cap_start_us: u32,
        cap_len_us: u32,
    },
    /// Acknowledgement with a signed µs wake correction; `odt` mirrors
    /// the on-demand flag of [`Payload::Ack`].
    SyncAck { dv_us: i32, odt: bool },
    /// Pull request for `requested_bytes` of extra data.
    DataRequest { requested_bytes: u16 },
    /// Plain acknowledgement; `odt` tells the node to listen in the
    /// contention window for a follow-up request.
    Ack { odt: bool },
    /// Sensor payload, length-prefixed on the wire.
    Data { body: Vec<u8> },
}

/// One MAC frame: header address plus body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    /// Node address this frame concerns (see module docs for direction).
    pub src: Address,
    pub payload: Payload,
}

/// Frame rejected at encode time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EncodeError {
    /// Encoded frame would exceed [`MAX_FRAME_LEN`] octets.
    #[error("encoded frame would be {len} octets, above the {MAX_FRAME_LEN}-octet limit")]
    BodyTooLong { len: usize },
}

/// Byte stream rejected at decode time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// Input ended before the header or body was complete.
    #[error("frame truncated: need {needed} octets, got {got}")]
    TruncatedFrame { needed: usize, got: usize },
    /// Header carried an unassigned kind code.
    #[error("unknown packet kind code {0:#04x}")]
    UnknownKind(u8),
    /// Octets left over after the kind-specific body.
    #[error("{extra} trailing octets after frame body")]
    TrailingBytes { extra: usize },
    /// A boolean field carried something other than 0 or 1. Rejecting
    /// these keeps every accepted frame canonical: decoding and then
    /// re-encoding reproduces the input octets exactly.
    #[error("flag octet must be 0 or 1, got {value:#04x}")]
    InvalidFlag { value: u8 },
}

/// Strict boolean octet: only the canonical encodings are accepted.
fn flag_octet(value: u8) -> Result<bool, DecodeError> {
    match value {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(DecodeError::InvalidFlag { value }),
    }
}

impl Packet {
    /// Kind implied by the payload variant.
    pub fn kind(&self) -> PacketKind {
        match self.payload {
            Payload::Channel { .. } => PacketKind::Channel,
            Payload::TimeSlotRequest { .. } => PacketKind::TimeSlotRequest,
            Payload::TimeSlotRequestReply { .. } => PacketKind::TimeSlotRequestReply,
            Payload::SyncAck { .. } => PacketKind::SyncAck,
            Payload::DataRequest { .. } => PacketKind::DataRequest,
            Payload::Ack { .. } => PacketKind::Ack,
            Payload::Data { .. } => PacketKind::Data,
        }
    }

    /// Exact on-wire length in octets (header included). May exceed
    /// [`MAX_FRAME_LEN`] for oversized `Data` bodies, in which case
    /// [`Packet::encode`] refuses the frame.
    pub fn encoded_len(&self) -> usize {
        let body = match &self.payload {
            Payload::Channel { .. } => 3,
            Payload::TimeSlotRequest { .. } => 6,
            Payload::TimeSlotRequestReply { .. } => 16,
            Payload::SyncAck { .. } => 5,
            Payload::DataRequest { .. } => 2,
            Payload::Ack { .. } => 1,
            Payload::Data { body } => 1 + body.len(),
        };
        HEADER_LEN + body
    }

    /// Serialize to wire octets.
    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        let len = self.encoded_len();
        if len > MAX_FRAME_LEN {
            return Err(EncodeError::BodyTooLong { len });
        }
        let mut out = Vec::with_capacity(len);
        out.push(self.kind().code());
        out.extend_from_slice(&self.src.0.to_be_bytes());
        match &self.payload {
            Payload::Channel {
                cn_address,
                channel_id,
            } => {
                out.extend_from_slice(&cn_address.0.to_be_bytes());
                out.push(*channel_id);
            }
            Payload::TimeSlotRequest {
                data_rate,
                requested_slot_us,
            } => {
                out.extend_from_slice(&data_rate.to_be_bytes());
                out.extend_from_slice(&requested_slot_us.to_be_bytes());
            }
            Payload::TimeSlotRequestReply {
                slot_start_us,
                slot_len_us,
                cap_start_us,
                cap_len_us,
            } => {
                out.extend_from_slice(&slot_start_us.to_be_bytes());
                out.extend_from_slice(&slot_len_us.to_be_bytes());
                out.extend_from_slice(&cap_start_us.to_be_bytes());
                out.extend_from_slice(&cap_len_us.to_be_bytes());
            }
            Payload::SyncAck { dv_us, odt } => {
                out.extend_from_slice(&dv_us.to_be_bytes());
                out.push(u8::from(*odt));
            }
            Payload::DataRequest { requested_bytes } => {
                out.extend_from_slice(&requested_bytes.to_be_bytes());
            }
            Payload::Ack { odt } => out.push(u8::from(*odt)),
            Payload::Data { body } => {
                out.push(body.len() as u8);
                out.extend_from_slice(body);
            }
        }
        debug_assert_eq!(out.len(), len);
        Ok(out)
    }

    /// Parse wire octets; exact inverse of [`Packet::encode`] on valid
    /// frames, an error on everything else.
    pub fn decode(bytes: &[u8]) -> Result<Packet, DecodeError> {
        if bytes.len() < HEADER_LEN {
            return Err(DecodeError::TruncatedFrame {
                needed: HEADER_LEN,
                got: bytes.len(),
            });
        }
        let kind =
            PacketKind::from_code(bytes[0]).ok_or(DecodeError::UnknownKind(bytes[0]))?;
        let src = Address(u16::from_be_bytes([bytes[1], bytes[2]]));
        let body = &bytes[HEADER_LEN..];

        // Fixed body width per kind; `Data` reads its own length prefix.
        let needed = match kind {
            PacketKind::Channel => 3,
            PacketKind::TimeSlotRequest => 6,
            PacketKind::TimeSlotRequestReply => 16,
            PacketKind::SyncAck => 5,
            PacketKind::DataRequest => 2,
            PacketKind::Ack => 1,
            PacketKind::Data => {
                let prefix = *body.first().ok_or(DecodeError::TruncatedFrame {
                    needed: HEADER_LEN + 1,
                    got: bytes.len(),
                })?;
                1 + prefix as usize
            }
        };
        if body.len() < needed {
            return Err(DecodeError::TruncatedFrame {
                needed: HEADER_LEN + needed,
                got: bytes.len(),
            });
        }
        if body.len() > needed {
            return Err(DecodeError::TrailingBytes {
                extra: body.len() - needed,
            });
        }

        let payload = match kind {
            PacketKind::Channel => Payload::Channel {
                cn_address: Address(u16::from_be_bytes([body[0], body[1]])),
                channel_id: body[2],
            },
            PacketKind::TimeSlotRequest => Payload::TimeSlotRequest {
                data_rate: u16::from_be_bytes([body[0], body[1]]),
                requested_slot_us: u32::from_be_bytes([body[2], body[3], body[4], body[5]]),
            },
            PacketKind::TimeSlotRequestReply => Payload::TimeSlotRequestReply {
                slot_start_us: u32::from_be_bytes([body[0], body[1], body[2], body[3]]),
                slot_len_us: u32::from_be_bytes([body[4], body[5], body[6], body[7]]),
                cap_start_us: u32::from_be_bytes([body[8], body[9], body[10], body[11]]),
                cap_len_us: u32::from_be_bytes([body[12], body[13], body[14], body[15]]),
            },
            PacketKind::SyncAck => Payload::SyncAck {
                dv_us: i32::from_be_bytes([body[0], body[1], body[2], body[3]]),
                odt: flag_octet(body[4])?,
            },
            PacketKind::DataRequest => Payload::DataRequest {
                requested_bytes: u16::from_be_bytes([body[0], body[1]]),
            },
            PacketKind::Ack => Payload::Ack {
                odt: flag_octet(body[0])?,
            },
            PacketKind::Data => Payload::Data {
                body: body[1..needed].to_vec(),
            },
        };
        Ok(Packet { src, payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ack(addr: u16, odt: bool) -> Packet {
        Packet {
            src: Address(addr),
            payload: Payload::Ack { odt },
        }
    }

    #[test]
    fn ack_wire_image() {
        let bytes = ack(0x0001, false).encode().unwrap();
        assert_eq!(bytes, [0x06, 0x00, 0x01, 0x00]);
    }

    #[test]
    fn empty_data_wire_image() {
        let pkt = Packet {
            src: Address(0x0002),
            payload: Payload::Data { body: vec![] },
        };
        assert_eq!(pkt.encode().unwrap(), [0x07, 0x00, 0x02, 0x00]);
    }

    #[test]
    fn sync_ack_encodes_negative_correction_big_endian() {
        let pkt = Packet {
            src: Address(0x0001),
            payload: Payload::SyncAck {
                dv_us: -1500,
                odt: true,
            },
        };
        let bytes = pkt.encode().unwrap();
        // 3-octet header + 4-octet two's-complement dv + 1-octet flag.
        assert_eq!(bytes.len(), 8);
        assert_eq!(&bytes[3..7], &(-1500i32).to_be_bytes());
        assert_eq!(bytes, [0x04, 0x00, 0x01, 0xFF, 0xFF, 0xFA, 0x24, 0x01]);
    }

    #[test]
    fn kind_codes_follow_wire_order() {
        let kinds = [
            PacketKind::Channel,
            PacketKind::TimeSlotRequest,
            PacketKind::TimeSlotRequestReply,
            PacketKind::SyncAck,
            PacketKind::DataRequest,
            PacketKind::Ack,
            PacketKind::Data,
        ];
        for (i, k) in kinds.iter().enumerate() {
            assert_eq!(k.code() as usize, i + 1);
            assert_eq!(PacketKind::from_code(k.code()), Some(*k));
        }
        assert_eq!(PacketKind::from_code(0), None);
        assert_eq!(PacketKind::from_code(8), None);
    }

    #[test]
    fn oversized_data_body_is_refused() {
        let pkt = Packet {
            src: Address(9),
            payload: Payload::Data {
                body: vec![0; MAX_DATA_BODY + 1],
            },
        };
        assert_eq!(
            pkt.encode(),
            Err(EncodeError::BodyTooLong {
                len: MAX_FRAME_LEN + 1
            })
        );
        // The largest legal body is exactly at the MPDU cap.
        let pkt = Packet {
            src: Address(9),
            payload: Payload::Data {
                body: vec![0; MAX_DATA_BODY],
            },
        };
        assert_eq!(pkt.encode().unwrap().len(), MAX_FRAME_LEN);
    }

    #[test]
    fn decode_rejects_malformed_frames() {
        assert_eq!(
            Packet::decode(&[]),
            Err(DecodeError::TruncatedFrame { needed: 3, got: 0 })
        );
        assert_eq!(
            Packet::decode(&[0x06, 0x00]),
            Err(DecodeError::TruncatedFrame { needed: 3, got: 2 })
        );
        assert_eq!(Packet::decode(&[0x00, 0x00, 0x01]), Err(DecodeError::UnknownKind(0)));
        assert_eq!(Packet::decode(&[0x09, 0x00, 0x01]), Err(DecodeError::UnknownKind(9)));
        // SyncAck body cut short.
        assert_eq!(
            Packet::decode(&[0x04, 0x00, 0x01, 0xFF, 0xFF]),
            Err(DecodeError::TruncatedFrame { needed: 8, got: 5 })
        );
        // Data whose length prefix promises more than is present.
        assert_eq!(
            Packet::decode(&[0x07, 0x00, 0x02, 0x05, 0x01, 0x02]),
            Err(DecodeError::TruncatedFrame { needed: 9, got: 6 })
        );
        // Exactly one spare octet after a complete Ack.
        assert_eq!(
            Packet::decode(&[0x06, 0x00, 0x01, 0x00, 0x00]),
            Err(DecodeError::TrailingBytes { extra: 1 })
        );
        // Non-canonical boolean octets, bare and inside a correction.
        assert_eq!(
            Packet::decode(&[0x06, 0xFF, 0x2E, 0xFF]),
            Err(DecodeError::InvalidFlag { value: 0xFF })
        );
        assert_eq!(
            Packet::decode(&[0x04, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x02]),
            Err(DecodeError::InvalidFlag { value: 0x02 })
        );
    }

    #[test]
    fn every_accepted_frame_is_canonical() {
        // Any octet string the decoder accepts must re-encode to itself,
        // so the wire form of every packet is unique.
        for bytes in [
            vec![0x06u8, 0x00, 0x01, 0x01],
            vec![0x04, 0x00, 0x01, 0xFF, 0xFF, 0xFE, 0xB6, 0x00],
            vec![0x07, 0x00, 0x05, 0x00],
        ] {
            let packet = Packet::decode(&bytes).expect("canonical frame");
            assert_eq!(packet.encode().unwrap(), bytes);
        }
    }

    #[test]
    fn slot_grant_round_trips_field_for_field() {
        let pkt = Packet {
            src: Address(0x0003),
            payload: Payload::TimeSlotRequestReply {
                slot_start_us: 158,
                slot_len_us: 1584,
                cap_start_us: 900_000,
                cap_len_us: 50_000,
            },
        };
        let bytes = pkt.encode().unwrap();
        assert_eq!(bytes.len(), 19);
        assert_eq!(&bytes[3..7], &158u32.to_be_bytes());
        assert_eq!(Packet::decode(&bytes).unwrap(), pkt);
    }

    prop_compose! {
        fn arb_packet()(src in any::<u16>(), payload in prop_oneof![
            (any::<u16>(), any::<u8>()).prop_map(|(cn, ch)| Payload::Channel {
                cn_address: Address(cn),
                channel_id: ch,
            }),
            (any::<u16>(), any::<u32>()).prop_map(|(r, s)| Payload::TimeSlotRequest {
                data_rate: r,
                requested_slot_us: s,
            }),
            (any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>()).prop_map(
                |(a, b, c, d)| Payload::TimeSlotRequestReply {
                    slot_start_us: a,
                    slot_len_us: b,
                    cap_start_us: c,
                    cap_len_us: d,
                }
            ),
            (any::<i32>(), any::<bool>()).prop_map(|(dv, odt)| Payload::SyncAck {
                dv_us: dv,
                odt,
            }),
            any::<u16>().prop_map(|b| Payload::DataRequest { requested_bytes: b }),
            any::<bool>().prop_map(|odt| Payload::Ack { odt }),
            proptest::collection::vec(any::<u8>(), 0..=MAX_DATA_BODY)
                .prop_map(|body| Payload::Data { body }),
        ]) -> Packet {
            Packet { src: Address(src), payload }
        }
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(pkt in arb_packet()) {
            let bytes = pkt.encode().unwrap();
            prop_assert!(bytes.len() <= MAX_FRAME_LEN);
            prop_assert_eq!(bytes.len(), pkt.encoded_len());
            prop_assert_eq!(Packet::decode(&bytes).unwrap(), pkt);
        }

        #[test]
        fn truncations_never_decode_to_a_frame(pkt in arb_packet(), cut in 1usize..8) {
            let bytes = pkt.encode().unwrap();
            if cut < bytes.len() {
                let short = &bytes[..bytes.len() - cut];
                let truncated = matches!(
                    Packet::decode(short),
                    Err(DecodeError::TruncatedFrame { .. })
                );
                prop_assert!(truncated, "cut of {} decoded anyway", cut);
            }
        }
    }
}
