#![no_main]
use libfuzzer_sys::fuzz_target;
use modmul::dhloss::{read_dh_dataset, run_checks};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fuzz_target!(|data: &[u8]| {
    let Ok(rec) = read_dh_dataset(data) else { return };
    // the gradient battery is slow; keep to small instances
    if rec.samples.len() <= 4 && rec.p < 1 << 12 {
        let _ = run_checks(&rec, &mut ChaCha8Rng::seed_from_u64(0));
    }
    let _ = rec.into_instance();
});
