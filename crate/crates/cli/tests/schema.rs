use std::path::Path;

use serde_json::Value;

use multidiv_cli::load;

fn workspace() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap().parent().unwrap()
}

fn keys(v: &Value) -> Vec<String> {
    v.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default()
}

// Every key a parsed config serializes to must be declared in the shipped schema.
#[test]
fn schema_covers_bundled_configs() {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(workspace().join("docs/config.schema.json")).unwrap()).unwrap();
    let top = keys(&schema["properties"]);
    let surface = keys(&schema["$defs"]["surface"]["properties"]);
    let tasks: Vec<&Value> = schema["$defs"]["task"]["oneOf"].as_array().unwrap().iter().collect();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let config = serde_json::to_value(load(&path).unwrap()).unwrap();
        for k in keys(&config) {
            assert!(top.contains(&k), "{}: {k}", path.display());
        }
        if let Some(s) = config.get("surface").filter(|s| !s.is_null()) {
            for k in keys(s) {
                assert!(surface.contains(&k), "{}: surface.{k}", path.display());
            }
        }
        for task in config["tasks"].as_array().unwrap() {
            let def = tasks
                .iter()
                .find(|d| d["properties"]["task"]["const"] == task["task"])
                .unwrap_or_else(|| panic!("task {} missing from schema", task["task"]));
            let allowed = keys(&def["properties"]);
            for k in keys(task) {
                assert!(allowed.contains(&k), "{}: {}.{k}", path.display(), task["task"]);
            }
        }
        seen += 1;
    }
    assert!(seen >= 6);
}
