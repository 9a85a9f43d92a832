#![no_main]

use libfuzzer_sys::fuzz_target;

// Model decoding validates magic, manifest, array list, payload length
// and finiteness without panicking. Anything that decodes must survive a
// re-encode/re-decode round trip unchanged.
fuzz_target!(|data: &[u8]| {
    if let Ok(dbn) = deepbelief::data::decode_model(data) {
        let bytes = deepbelief::data::encode_model(&dbn).expect("decoded model re-encodes");
        let again = deepbelief::data::decode_model(&bytes).expect("re-encoded model decodes");
        assert_eq!(again.kind(), dbn.kind());
        assert_eq!(again.layers(), dbn.layers());
        assert_eq!(again.fine_tuned(), dbn.fine_tuned());
    }
});
