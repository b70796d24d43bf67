#![no_main]

use libfuzzer_sys::fuzz_target;
use ppd_cli::ingest::{parse_csv_str, CsvRole};
use ppd_core::Family;

fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let role = [CsvRole::Current, CsvRole::Historical, CsvRole::Covariates][usize::from(selector % 3)];
    let family = [Family::Bernoulli, Family::Binomial, Family::Poisson, Family::Exponential, Family::Normal]
        [usize::from(selector / 3 % 5)];
    if let Ok(got) = parse_csv_str(text, role, family) {
        assert_eq!(got.data.x.ncols(), got.covariates.len());
        assert_eq!(got.data.x.nrows(), got.data.y.len());
    }
});
