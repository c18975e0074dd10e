#![no_main]

use erppo::trainer::{read_metrics_csv, write_metrics_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_metrics_csv(data) {
        let mut out = Vec::new();
        write_metrics_csv(&rows, &mut out).expect("parsed rows serialize");
        let again = read_metrics_csv(out.as_slice()).expect("written rows reparse");
        // NaN never compares equal, so compare bit patterns
        let bits = |r: &[erppo::trainer::MetricsRow]| format!("{r:?}");
        assert_eq!(bits(&again), bits(&rows));
    }
});
