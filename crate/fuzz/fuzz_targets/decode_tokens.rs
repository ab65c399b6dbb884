#![no_main]
use libfuzzer_sys::fuzz_target;
use modmul::seqrep::{encode, TokenSequence};

fuzz_target!(|data: &[u8]| {
    let Some((&base, digits)) = data.split_first() else {
        return;
    };
    let digits: Vec<u32> = digits.iter().map(|&d| d as u32).collect();
    let Ok(seq) = TokenSequence::new(base as u32, digits) else {
        return;
    };
    if let Ok(x) = seq.decode() {
        assert_eq!(encode(x, seq.base(), seq.width()).unwrap(), seq);
    }
});
