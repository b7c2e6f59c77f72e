#![no_main]

use libfuzzer_sys::fuzz_target;

use carnot_lgp::expr::Expr;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(expr) = Expr::parse(src) {
        // evaluation must not panic on any parsed expression
        let coords = [0.5f64, -1.25, 0.0, 3.5];
        let _ = expr.eval(&coords[..expr.max_coord().map_or(4, |k| (k + 1).max(4)).min(4)]);
        let _ = expr.max_coord();
    }
});
