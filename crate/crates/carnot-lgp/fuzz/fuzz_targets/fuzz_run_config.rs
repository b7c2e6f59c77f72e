#![no_main]

use libfuzzer_sys::fuzz_target;

use carnot_lgp::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse_str(src) {
        // a parsed config must resolve and hash without panicking
        let _ = cfg.resolved();
        let _ = cfg.run_id();
        let _ = cfg.domain_spec();
    }
});
