//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes a scenario config as JSON (the same shape the service
//! accepts) and returns the result document the CLI would write. Only
//! synthetic datasets are accepted since the browser has no file access.

use levers_core::config::ScenarioConfig;
use levers_core::report::ResultDocument;
use levers_core::Error;
use wasm_bindgen::prelude::*;

/// Runs `config_json` if its analysis kind is `expected`.
pub fn run_config(config_json: &str, expected: &str) -> Result<String, Error> {
    let cfg = ScenarioConfig::from_json_str(config_json)?;
    if cfg.dataset.synth.is_none() {
        return Err(Error::config("dataset", "the browser demo only runs `synth` datasets"));
    }
    if cfg.analysis.name() != expected {
        return Err(Error::config(
            "analysis.kind",
            format!("expected `{expected}`, got `{}`", cfg.analysis.name()),
        ));
    }
    let resolved = cfg.resolve(cfg.population(std::path::Path::new(""))?)?;
    let body = resolved.run(1)?;
    Ok(ResultDocument::new(&cfg.hash(), cfg.policy.seed, body).to_json())
}

fn export(config_json: &str, expected: &str) -> Result<String, JsError> {
    run_config(config_json, expected).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn evaluate(config_json: &str) -> Result<String, JsError> {
    export(config_json, "evaluate")
}

#[wasm_bindgen]
pub fn curve(config_json: &str) -> Result<String, JsError> {
    export(config_json, "curve")
}

#[wasm_bindgen(js_name = ratioGrid)]
pub fn ratio_grid(config_json: &str) -> Result<String, JsError> {
    export(config_json, "ratio_grid")
}

#[wasm_bindgen(js_name = engineVersion)]
pub fn engine_version() -> String {
    levers_core::ENGINE_VERSION.to_string()
}
