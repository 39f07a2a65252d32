use std::path::Path;

use seamloc::pipeline::{load_scenario, RunConfig};
use seamloc::sim::presets;

fn repo() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

#[test]
fn shipped_scenarios_match_the_presets() {
    for name in presets::NAMES {
        let spec = load_scenario(&repo().join(format!("scenarios/{name}.json"))).unwrap();
        assert_eq!(spec, presets::by_name(name).unwrap(), "{name}");
    }
}

#[test]
fn shipped_configs_load_and_point_at_scenarios() {
    for name in presets::NAMES {
        let cfg = RunConfig::load(&repo().join(format!("configs/{name}.json"))).unwrap();
        assert!(cfg.scenario.as_ref().unwrap().exists(), "{name}");
        assert_eq!(cfg.backends.len(), 3);
    }
}
