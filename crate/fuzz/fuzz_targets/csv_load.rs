#![no_main]

use helio_core::dataset::{clean, irradiance_schema, read_csv, CleanPolicy, ColumnMapping};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = read_csv(data, &irradiance_schema(), &ColumnMapping::new()) {
        assert_eq!(ds.features().rows(), ds.target().len());
        let _ = clean(&ds, CleanPolicy::DropRow);
    }
});
