use std::path::PathBuf;

use learnsim_core::scenario::BUILTIN_NAMES;
use learnsim_core::{builtin_scenario, parse_config, serialize_config};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

#[test]
fn shipped_files_match_builtins() {
    for name in BUILTIN_NAMES {
        let text = std::fs::read_to_string(scenario_path(name)).unwrap();
        let builtin = builtin_scenario(name).unwrap();
        assert_eq!(parse_config(&text).unwrap(), builtin, "{name}");
        assert_eq!(text, serialize_config(&builtin), "{name}");
    }
}

#[test]
fn shipped_files_cover_builtins() {
    let mut shipped: Vec<String> = std::fs::read_dir(scenario_path("x").parent().unwrap())
        .unwrap()
        .map(|e| e.unwrap().path().file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    shipped.sort();
    assert_eq!(shipped, BUILTIN_NAMES);
}
