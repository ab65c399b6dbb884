#![no_main]
use libfuzzer_sys::fuzz_target;
use modmul::modnum::{read_dataset, write_dataset};

fuzz_target!(|data: &[u8]| {
    let Ok(d) = read_dataset(data) else { return };
    let mut out = Vec::new();
    write_dataset(&d, &mut out).expect("accepted dataset must serialize");
    let again = read_dataset(out.as_slice()).expect("written dataset must parse");
    assert_eq!(d.public(), again.public());
});
