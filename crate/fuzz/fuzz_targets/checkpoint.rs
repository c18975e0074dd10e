#![no_main]

use erppo::checkpoint::Container;
use erppo::dsa::DsaModel;
use erppo::trainer::CheckpointBundle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(container) = Container::decode(data) else {
        return;
    };
    assert_eq!(Container::decode(&container.encode()).expect("re-encoded container decodes"), container);
    let _ = DsaModel::from_container(&container);
    if let Ok(bundle) = CheckpointBundle::from_container(&container) {
        assert_eq!(CheckpointBundle::decode(&bundle.encode()).expect("re-encoded bundle decodes"), bundle);
    }
});
