#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| convsurv_fuzz::model_file(data));
