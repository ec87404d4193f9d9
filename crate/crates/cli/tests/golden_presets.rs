//! Golden-file checks: every preset's canonical config must match the
//! checked-in snapshot field for field. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test -p apg-cli --test golden_presets`.

use std::fs;
use std::path::PathBuf;

use apg_cli::{emit_scenario, parse_scenario, preset, PRESET_NAMES};

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.cfg"))
}

#[test]
fn presets_match_golden_configs() {
    let update = std::env::var("UPDATE_GOLDEN").is_ok();
    for name in PRESET_NAMES {
        let scenario = preset(name).unwrap();
        let text = emit_scenario(&scenario).unwrap();
        let path = golden_path(name);
        if update {
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(&path, &text).unwrap();
            continue;
        }
        let golden = fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
        assert_eq!(
            text, golden,
            "preset `{name}` drifted from its golden config"
        );
    }
}

#[test]
fn golden_configs_parse_back() {
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        return;
    }
    for name in PRESET_NAMES {
        let golden = fs::read_to_string(golden_path(name)).unwrap();
        let parsed = parse_scenario(&golden).unwrap();
        assert_eq!(emit_scenario(&parsed).unwrap(), golden);
    }
}
