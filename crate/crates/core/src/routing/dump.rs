//! Text form of a routing configuration.
//!
//! ```text
//! engine dla
//! endnodes 2
//! resources sls 1 vls 2
//! hca sl2vl: 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0
//! slrow 0: 0 0
//! slrow 1: 0 0
//! switch 0 ports 2
//! lid 0 port 0
//! lid 1 port 1
//! sl2vl out 0 in 0: 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0
//! ...
//! ```

use std::fmt::Write as _;

use super::{
    account, Engine, LinearForwardingTable, Resources, RoutingConfig, RoutingError, Sl2VlTable,
    SlPolicy, SL_COUNT, VL_LIMIT,
};

fn join<T: std::fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn emit_fabric_dump(config: &RoutingConfig) -> String {
    let n = config.sl_policy.num_endnodes();
    let mut out = String::new();
    let _ = writeln!(out, "engine {}", config.engine);
    let _ = writeln!(out, "endnodes {n}");
    let _ = writeln!(
        out,
        "resources sls {} vls {}",
        config.resources.sls, config.resources.vls
    );
    let _ = writeln!(out, "hca sl2vl: {}", join(config.hca_sl2vl));
    for src in 0..n {
        let _ = writeln!(out, "slrow {src}: {}", join(config.sl_policy.row(src)));
    }
    for s in 0..config.lft.num_switches() {
        let sw = crate::topology::SwitchId(s as u32);
        let radix = config.sl2vl.radix(sw);
        let _ = writeln!(out, "switch {s} ports {radix}");
        for (dst, port) in config.lft.switch_entries(sw).iter().enumerate() {
            let _ = writeln!(out, "lid {dst} port {port}");
        }
        for o in 0..radix {
            for i in 0..radix {
                let _ = writeln!(
                    out,
                    "sl2vl out {o} in {i}: {}",
                    join(config.sl2vl.row(sw, o as u16, i as u16))
                );
            }
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    current: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        let (idx, line) = self.inner.next()?;
        self.current = idx + 1;
        Some(line)
    }

    fn expect(&mut self, what: &str) -> Result<&'a str, RoutingError> {
        let line = self.current + 1;
        self.next().ok_or_else(|| RoutingError::MalformedDump {
            line,
            reason: format!("unexpected end of dump, expected {what}"),
        })
    }

    fn err(&self, reason: impl Into<String>) -> RoutingError {
        RoutingError::MalformedDump {
            line: self.current,
            reason: reason.into(),
        }
    }
}

fn keyed<'a>(lines: &Lines<'_>, line: &'a str, prefix: &str) -> Result<&'a str, RoutingError> {
    line.strip_prefix(prefix)
        .ok_or_else(|| lines.err(format!("expected `{prefix}...`, found {line:?}")))
}

fn number(lines: &Lines<'_>, token: &str) -> Result<usize, RoutingError> {
    token
        .parse::<usize>()
        .map_err(|_| lines.err(format!("expected a number, found {token:?}")))
}

fn vl_list(lines: &Lines<'_>, text: &str) -> Result<[u8; SL_COUNT], RoutingError> {
    let values: Vec<&str> = text.split_whitespace().collect();
    if values.len() != SL_COUNT {
        return Err(lines.err(format!("expected {SL_COUNT} VLs, found {}", values.len())));
    }
    let mut row = [0u8; SL_COUNT];
    for (slot, token) in row.iter_mut().zip(values) {
        let vl = number(lines, token)?;
        if vl >= VL_LIMIT {
            return Err(lines.err(format!("VL index {vl} out of range (must be < {VL_LIMIT})")));
        }
        *slot = vl as u8;
    }
    Ok(row)
}

pub fn parse_fabric_dump(text: &str) -> Result<RoutingConfig, RoutingError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        current: 0,
    };
    let line = lines.expect("engine")?;
    let engine: Engine = keyed(&lines, line, "engine ")?
        .parse()
        .map_err(|e: String| lines.err(e))?;
    let line = lines.expect("endnodes")?;
    let n = number(&lines, keyed(&lines, line, "endnodes ")?)?;
    let line = lines.expect("resources")?;
    let declared = {
        let rest = keyed(&lines, line, "resources sls ")?;
        let (sls, vls) = rest
            .split_once(" vls ")
            .ok_or_else(|| lines.err("expected `resources sls <n> vls <n>`"))?;
        Resources {
            sls: number(&lines, sls)?,
            vls: number(&lines, vls)?,
        }
    };
    let line = lines.expect("hca sl2vl")?;
    let hca = vl_list(&lines, keyed(&lines, line, "hca sl2vl: ")?)?;

    let mut levels = Vec::with_capacity(n * n);
    for src in 0..n {
        let line = lines.expect("slrow")?;
        let rest = keyed(&lines, line, &format!("slrow {src}: "))?;
        let row: Vec<&str> = rest.split_whitespace().collect();
        if row.len() != n {
            return Err(lines.err(format!(
                "slrow {src} has {} entries, expected {n}",
                row.len()
            )));
        }
        for token in row {
            let sl = number(&lines, token)?;
            if sl >= SL_COUNT {
                return Err(lines.err(format!("SL {sl} out of range")));
            }
            levels.push(sl as u8);
        }
    }

    let mut entries = Vec::new();
    let mut radixes = Vec::new();
    let mut rows: Vec<Vec<[u8; SL_COUNT]>> = Vec::new();
    while let Some(line) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let s = entries.len();
        let rest = keyed(&lines, line, &format!("switch {s} ports "))?;
        let radix = number(&lines, rest)?;
        let mut lft = Vec::with_capacity(n);
        for dst in 0..n {
            let line = lines.expect("lid")?;
            let port = number(&lines, keyed(&lines, line, &format!("lid {dst} port "))?)?;
            if port >= radix {
                return Err(lines.err(format!(
                    "port {port} does not exist on switch {s} ({radix} ports)"
                )));
            }
            lft.push(port as u16);
        }
        let mut table = Vec::with_capacity(radix * radix);
        for o in 0..radix {
            for i in 0..radix {
                let line = lines.expect("sl2vl")?;
                table.push(vl_list(
                    &lines,
                    keyed(&lines, line, &format!("sl2vl out {o} in {i}: "))?,
                )?);
            }
        }
        entries.push(lft);
        radixes.push(radix);
        rows.push(table);
    }

    let sl2vl = Sl2VlTable::from_fn(radixes.clone(), |s, o, i, sl| {
        rows[s][o * radixes[s] + i][sl]
    });
    let policy = SlPolicy { n, levels };
    let resources = account(&sl2vl, &hca, &policy);
    if resources != declared {
        return Err(RoutingError::MalformedDump {
            line: 3,
            reason: format!("declared resources {declared:?} disagree with tables {resources:?}"),
        });
    }
    Ok(RoutingConfig {
        engine,
        lft: LinearForwardingTable::new(entries),
        sl2vl,
        hca_sl2vl: hca,
        sl_policy: policy,
        resources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, DragonflyParams};

    fn tiny() -> RoutingConfig {
        let t = build_topology(DragonflyParams::with_groups(1, 1, 1, 2).unwrap()).unwrap();
        Engine::Dla.route(&t).unwrap()
    }

    #[test]
    fn tiny_dla_dump_shape() {
        let dump = emit_fabric_dump(&tiny());
        assert_eq!(dump.lines().filter(|l| l.starts_with("switch ")).count(), 2);
        assert_eq!(dump.lines().filter(|l| l.starts_with("lid ")).count(), 4);
        assert!(dump.starts_with("engine dla\nendnodes 2\n"));
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for engine in Engine::ALL {
            let t = build_topology(DragonflyParams::new(4, 2, 2).unwrap()).unwrap();
            let cfg = engine.route(&t).unwrap();
            let text = emit_fabric_dump(&cfg);
            let parsed = parse_fabric_dump(&text).unwrap();
            assert_eq!(parsed, cfg);
            assert_eq!(emit_fabric_dump(&parsed), text);
        }
    }

    #[test]
    fn vl_sixteen_is_rejected() {
        let dump = emit_fabric_dump(&tiny());
        let bad = dump.replacen("sl2vl out 0 in 1: 0", "sl2vl out 0 in 1: 16", 1);
        assert_ne!(bad, dump);
        assert!(matches!(
            parse_fabric_dump(&bad),
            Err(RoutingError::MalformedDump { .. })
        ));
    }

    #[test]
    fn truncated_and_garbage_dumps() {
        let dump = emit_fabric_dump(&tiny());
        let truncated: String = dump.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(parse_fabric_dump(&truncated).is_err());
        assert!(parse_fabric_dump("engine lash\n").is_err());
        let bad_port = dump.replacen("lid 0 port 0", "lid 0 port 9", 1);
        assert!(parse_fabric_dump(&bad_port).is_err());
    }
}
