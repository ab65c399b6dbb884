#![no_main]
use libfuzzer_sys::fuzz_target;
use modmul::seqrep::{read_pairs, score_pairs, write_pairs};

fuzz_target!(|data: &[u8]| {
    let Ok(file) = read_pairs(data) else { return };
    let _ = score_pairs(&file);
    let mut out = Vec::new();
    write_pairs(&file, &mut out).expect("accepted pair file must serialize");
    assert_eq!(read_pairs(out.as_slice()).expect("written pairs must parse"), file);
});
