//! Feed arbitrary text to the JSON configuration parser and validator.
//! Any input may be rejected; none may panic. Accepted configurations
//! must be internally consistent enough to enumerate their sweep cells.

#![no_main]

use libfuzzer_sys::fuzz_target;

use armac_sim::config::SimConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = SimConfig::from_json_str(text) {
        // A validated configuration must expand without panicking.
        let cells = cfg.cells();
        assert!(!cells.is_empty());
        let _ = cfg.layout().expect("validated layout");
    }
});
