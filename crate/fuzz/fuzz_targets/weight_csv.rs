#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = degenflow::RadialTable::from_csv(text) {
            let xs = table.positions();
            assert_eq!(xs.len(), table.values().len());
            // Every tabulated node is inside the accepted range.
            for &x in xs {
                let _ = table.eval(x).unwrap();
            }
        }
    }
});
