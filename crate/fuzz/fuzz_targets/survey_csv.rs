#![no_main]

use erppo::dsa::{read_survey_csv, write_survey_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(dataset) = read_survey_csv(data) {
        let mut out = Vec::new();
        write_survey_csv(&dataset, &mut out).expect("parsed survey serializes");
        let again = read_survey_csv(out.as_slice()).expect("written survey reparses");
        assert_eq!(again.samples, dataset.samples);
    }
});
