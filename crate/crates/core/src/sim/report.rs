//! CSV and JSON renderings of sweep results.

use std::fmt::Write as _;

use super::{SimConfig, SimResult};

pub const CSV_COLUMNS: &str = "load,accepted,engine,voq,buffer,seed";

/// Provenance comment placed before the column line.
pub fn csv_header_line(manifest_hash: &str, row_hash: &str) -> String {
    format!(
        "# {} manifest={manifest_hash} row={row_hash}",
        crate::TOOL_VERSION
    )
}

/// Column line plus one row per result, without the provenance comment.
pub fn csv_rows(config: &SimConfig, results: &[SimResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_COLUMNS}");
    let s = &config.settings;
    for r in results {
        let _ = writeln!(
            out,
            "{:.2},{:.6},{},{},{},{}",
            r.offered,
            r.accepted,
            config.routing.engine.name(),
            if s.voq { "on" } else { "off" },
            s.buffer_depth,
            r.seed
        );
    }
    out
}

/// Full document: configuration, hashes and every result.
pub fn results_json(config: &SimConfig, results: &[SimResult]) -> serde_json::Value {
    serde_json::json!({
        "tool": crate::TOOL_VERSION,
        "params": config.topology.params.to_string(),
        "engine": config.routing.engine.name(),
        "routing_digest": config.routing_digest(),
        "resources": { "sls": config.routing.resources.sls, "vls": config.routing.resources.vls },
        "settings": config.settings,
        "results": results,
    })
}
