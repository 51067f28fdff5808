#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = degenflow::grid::FieldTable::parse(text) {
            for i in 0..table.rows() {
                let _ = table.row(i);
            }
        }
    }
});
