//! Replays the checked-in fuzz corpus with the fuzz targets' invariants.

use std::path::PathBuf;

use ppd_cli::config::parse_config;
use ppd_cli::ingest::{parse_csv_str, CsvRole};
use ppd_core::normconst::PolySurface;
use ppd_core::Family;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.display().to_string(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds_parse_and_echo() {
    for (name, bytes) in seeds("fuzz_config") {
        let config = parse_config(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_config(&config.to_toml()).unwrap(), config, "{name}");
    }
}

#[test]
fn csv_seeds_keep_shapes_consistent() {
    let mut parsed = 0;
    for (_, bytes) in seeds("fuzz_csv") {
        let (&selector, rest) = bytes.split_first().unwrap();
        let role = [CsvRole::Current, CsvRole::Historical, CsvRole::Covariates][usize::from(selector % 3)];
        let family = [Family::Bernoulli, Family::Binomial, Family::Poisson, Family::Exponential, Family::Normal]
            [usize::from(selector / 3 % 5)];
        if let Ok(got) = parse_csv_str(std::str::from_utf8(rest).unwrap(), role, family) {
            assert_eq!(got.data.x.ncols(), got.covariates.len());
            assert_eq!(got.data.x.nrows(), got.data.y.len());
            parsed += 1;
        }
    }
    // The corpus holds both accepted and rejected inputs.
    assert!(parsed >= 2);
}

#[test]
fn surface_seeds_round_trip() {
    let mut decoded = 0;
    for (_, bytes) in seeds("fuzz_surface_record") {
        if let Ok(s) = PolySurface::from_text(std::str::from_utf8(&bytes).unwrap()) {
            assert_eq!(PolySurface::from_text(&s.to_text()).unwrap().to_text(), s.to_text());
            decoded += 1;
        }
    }
    assert!(decoded >= 2);
}
