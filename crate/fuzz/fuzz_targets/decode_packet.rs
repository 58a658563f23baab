//! Feed arbitrary octets to the wire-format parser. The parser must
//! never panic; whatever it accepts must re-encode to the exact input.

#![no_main]

use libfuzzer_sys::fuzz_target;

use armac_sim::protocol::Packet;

fuzz_target!(|data: &[u8]| {
    if let Ok(packet) = Packet::decode(data) {
        let bytes = packet.encode().expect("decoded packet re-encodes");
        assert_eq!(bytes, data, "decode/encode must be the identity");
    }
});
