//! One verdict line per acceptance criterion. Runs without the libtest harness
//! so every line is printed; exits non-zero when any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{all_params, flows_per_channel};
use dfly_core::experiment::{
    parse_csv, run_manifest, saturation, voq_factors, CsvRecord, ExperimentManifest,
};
use dfly_core::routing::trace_route;
use dfly_core::topology::{ChannelKind, EndnodeId};
use dfly_core::{
    analytic_flow_counts, build_cdg, build_topology, check_deadlock_free, DragonflyParams, Engine,
};

const ENGINES: [&str; 3] = ["dla", "d3r", "updn"];
const DEPTHS: [usize; 6] = [1, 2, 4, 8, 16, 32];
/// Reference median VOQ factors, reported for comparison only.
const REFERENCE_MEDIANS: [(&str, f64); 3] = [("dla", 1.428), ("d3r", 2.373), ("updn", 1.412)];
/// DLA may trail D3R by this fraction and still count as not worse.
const ORDERING_NOISE: f64 = 0.02;

struct Verdict {
    label: &'static str,
    pass: bool,
    detail: String,
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn flow_counts() -> Verdict {
    let start = Instant::now();
    let mut checked = Vec::new();
    let mut pass = true;
    for params in all_params(100)
        .into_iter()
        .filter(|p| p.is_balanced() && p.is_maximal())
    {
        let t = build_topology(params).unwrap();
        let f = analytic_flow_counts(&params).unwrap();
        let (a, p, n) = (params.a as u64, params.p as u64, t.num_endnodes() as u64);
        pass &= f.f_t == n - 1 && f.f_g == (a * p).pow(2) && f.f_l == (a * p).pow(2) + p * p;
        let counts = flows_per_channel(&t, &Engine::Dla.route(&t).unwrap());
        for (ch, &c) in t.channels.iter().zip(&counts) {
            pass &= c
                == match ch.kind {
                    ChannelKind::Terminal => f.f_t,
                    ChannelKind::Global => f.f_g,
                    ChannelKind::Local => f.f_l,
                };
        }
        checked.push(format!("{params} ({} channels)", t.channels.len()));
    }
    let elapsed = start.elapsed();
    pass &= !checked.is_empty() && elapsed < Duration::from_secs(10);
    Verdict {
        label:
            "traced flow counts equal the closed forms on every balanced network up to 100 endnodes",
        pass,
        detail: format!("{} in {}", checked.join(", "), secs(elapsed)),
    }
}

fn deadlock_suite() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();
    for (a, h, p) in [(4, 2, 2), (6, 3, 3)] {
        let t = build_topology(DragonflyParams::new(a, h, p).unwrap()).unwrap();
        for engine in Engine::ALL {
            let cfg = engine.route(&t).unwrap();
            let acyclic = check_deadlock_free(&build_cdg(&t, &cfg).unwrap()).acyclic;
            pass &= acyclic;
            if !acyclic {
                notes.push(format!("{engine} on {a},{h},{p} cyclic"));
            }
        }
    }
    let t = build_topology(DragonflyParams::new(4, 2, 2).unwrap()).unwrap();
    let cfg = Engine::Dla.route(&t).unwrap().without_vl_shift();
    let cdg = build_cdg(&t, &cfg).unwrap();
    let report = check_deadlock_free(&cdg);
    let k = report.cycle.len();
    // each witness dependency must be induced by its recorded flow
    let induced = (0..k).all(|i| {
        let (x, y) = (report.cycle[i], report.cycle[(i + 1) % k]);
        let (s, d) = report.inducing_flows[i];
        trace_route(&t, &cfg, s, d).unwrap().windows(2).any(|w| {
            (w[0].channel, w[0].vl, w[1].channel, w[1].vl) == (x.channel, x.vl, y.channel, y.vl)
        })
    });
    let witness_ok = !report.acyclic && report.witness_is_valid(&cdg) && induced;
    pass &= witness_ok;
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    notes.push(format!(
        "VL-0 DLA witness of {k} dependencies verified={witness_ok}"
    ));
    Verdict {
        label: "all engines acyclic on 72 and 342 endnodes; DLA without the VL shift cyclic with a verified witness",
        pass,
        detail: format!("{} in {}", notes.join("; "), secs(elapsed)),
    }
}

fn resources() -> Verdict {
    let expected = [
        (Engine::Dla, (1, 2)),
        (Engine::D3r, (2, 2)),
        (Engine::Updn, (1, 1)),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (a, h, p) in [(4, 2, 2), (6, 3, 3), (8, 4, 4), (10, 5, 5)] {
        let t = build_topology(DragonflyParams::new(a, h, p).unwrap()).unwrap();
        let n = t.num_endnodes();
        for (engine, want) in expected {
            let cfg = engine.route(&t).unwrap();
            let declared = (cfg.resources.sls, cfg.resources.vls);
            // recount: SLs from the policy, VLs from traced routes of sampled sources
            let mut sls = [false; 16];
            let mut vls = [false; 16];
            let step = (n / 40).max(1);
            for s in 0..n {
                for d in 0..n {
                    if s == d {
                        continue;
                    }
                    sls[cfg.sl(EndnodeId(s as u32), EndnodeId(d as u32)) as usize] = true;
                    if s % step == 0 {
                        for hop in
                            trace_route(&t, &cfg, EndnodeId(s as u32), EndnodeId(d as u32)).unwrap()
                        {
                            vls[hop.vl as usize] = true;
                        }
                    }
                }
            }
            let used = (
                sls.iter().filter(|&&b| b).count(),
                vls.iter().filter(|&&b| b).count(),
            );
            let ok = declared == want && used == want;
            pass &= ok;
            if !ok {
                notes.push(format!(
                    "{engine} N={n}: declared {declared:?} used {used:?} want {want:?}"
                ));
            }
        }
        notes.push(format!("N={n} ok"));
    }
    Verdict {
        label: "SL and VL counts are DLA (1,2), D3R (2,2), UPDN (1,1) at 72, 342, 1056 and 2550 endnodes",
        pass,
        detail: notes.join(", "),
    }
}

struct Saturation {
    records: Vec<CsvRecord>,
    elapsed: Duration,
}

impl Saturation {
    fn run() -> Saturation {
        let mut text = String::from("format=1\n");
        for engine in ENGINES {
            for voq in ["off", "on"] {
                for depth in DEPTHS {
                    text.push_str(&format!(
                        "row params=4,2,2 engine={engine} voq={voq} buffer={depth} pattern=uniform loads=1.0 seeds=1\n"
                    ));
                }
            }
        }
        let manifest: ExperimentManifest = text.parse().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
        let start = Instant::now();
        let report = run_manifest(&manifest, dir.path(), jobs);
        let elapsed = start.elapsed();
        assert!(report.failed.is_empty(), "{:?}", report.failed);
        let mut records = Vec::new();
        for path in &report.written {
            records.extend(parse_csv(&std::fs::read_to_string(path).unwrap()).unwrap());
        }
        Saturation { records, elapsed }
    }

    fn at(&self, engine: &str, voq: bool, depth: usize) -> f64 {
        saturation(&self.records, engine, voq, depth).unwrap()
    }

    fn factor(&self, engine: &str, depth: usize) -> f64 {
        voq_factors(&self.records)
            .into_iter()
            .find(|(e, b, _)| e == engine && *b == depth)
            .map(|(_, _, f)| f)
            .unwrap()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn voq_ordering(s: &Saturation) -> Verdict {
    let f: Vec<(&str, f64)> = ENGINES.iter().map(|&e| (e, s.factor(e, 16))).collect();
    let get = |name: &str| f.iter().find(|(e, _)| *e == name).unwrap().1;
    let pass = f.iter().all(|(_, x)| *x > 1.0)
        && get("d3r") > get("dla")
        && get("d3r") > get("updn")
        && s.elapsed < Duration::from_secs(30 * 60);
    let medians: Vec<String> = REFERENCE_MEDIANS
        .iter()
        .map(|&(e, reference)| {
            let m = median(DEPTHS.iter().map(|&d| s.factor(e, d)).collect());
            let within = (m / reference - 1.0).abs() <= 0.35;
            format!(
                "{e} median {m:.3} vs {reference} ({})",
                if within { "within 35%" } else { "outside 35%" }
            )
        })
        .collect();
    let minima: Vec<String> = ENGINES
        .iter()
        .map(|&e| {
            let m = DEPTHS[1..]
                .iter()
                .map(|&d| s.factor(e, d))
                .fold(f64::INFINITY, f64::min);
            format!("{e} {m:.3}")
        })
        .collect();
    Verdict {
        label:
            "VOQ raises saturation throughput for every engine at 16 packets per VL, most for D3R",
        pass,
        detail: format!(
            "factors {}; {}; minima over depths 2-32: {}; 36 runs in {}",
            f.iter()
                .map(|(e, x)| format!("{e} {x:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            medians.join(", "),
            minima.join(", "),
            secs(s.elapsed)
        ),
    }
}

fn buffer_plateau(s: &Saturation) -> Verdict {
    let t: Vec<f64> = DEPTHS.iter().map(|&d| s.at("dla", true, d)).collect();
    let monotone = t[..5].windows(2).all(|w| w[1] >= w[0]);
    let (gain_8_16, gain_16_32) = (t[4] / t[3], t[5] / t[4]);
    Verdict {
        label: "DLA with VOQ: saturation non-decreasing over 1-16 packets per VL and gains flatten past 16",
        pass: monotone && gain_16_32 < gain_8_16,
        detail: format!(
            "throughput {}; gain 8->16 {gain_8_16:.3}, 16->32 {gain_16_32:.3}",
            DEPTHS.iter().zip(&t).map(|(d, x)| format!("{d}:{x:.3}")).collect::<Vec<_>>().join(" ")
        ),
    }
}

fn engine_ordering(s: &Saturation) -> Verdict {
    let (dla, d3r, updn) = (
        s.at("dla", true, 16),
        s.at("d3r", true, 16),
        s.at("updn", true, 16),
    );
    Verdict {
        label:
            "with VOQ at 16 packets per VL, UPDN is lowest and DLA is within noise of D3R or better",
        pass: updn < dla && updn < d3r && dla >= d3r * (1.0 - ORDERING_NOISE),
        detail: format!("dla {dla:.3}, d3r {d3r:.3}, updn {updn:.3}"),
    }
}

fn determinism() -> Verdict {
    let text = "format=1\n\
        row params=4,2,2 engine=dla voq=on buffer=4 loads=0.5,1.0 seeds=1,2 warmup=0.1ms measure=0.3ms\n\
        row params=4,2,2 engine=d3r voq=off buffer=2 loads=0.5,1.0 seeds=3 warmup=0.1ms measure=0.3ms\n\
        row params=4,2,2 engine=updn voq=on buffer=1 pattern=hotspot loads=0.8 seeds=1 warmup=0.1ms measure=0.3ms\n";
    let manifest: ExperimentManifest = text.parse().unwrap();
    let read_all = |dir: &std::path::Path| {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_manifest(&manifest, a.path(), 1);
    let rb = run_manifest(&manifest, b.path(), 3);
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    let pass = ra.failed.is_empty() && rb.failed.is_empty() && fa.len() == 3 && fa == fb;
    Verdict {
        label: "rerunning a manifest with the same seeds gives byte-identical CSVs",
        pass,
        detail: format!("{} files compared, 1 vs 3 worker threads", fa.len()),
    }
}

fn large_scale_gated() -> Verdict {
    let text = "format=1\nrow params=8,4,4 engine=dla voq=on buffer=16\nrow params=10,5,5 engine=d3r voq=on buffer=16\n";
    let manifest: ExperimentManifest = text.parse().unwrap();
    let refused = manifest.check_size(false).is_err();
    let allowed = manifest.check_size(true).map(|v| v.len()) == Ok(2);
    Verdict {
        label: "1056- and 2550-node throughput curves are not reproduced here; such rows need an explicit opt-in",
        pass: refused && allowed,
        detail: "substituted by the oracle and 72-node checks above; 342-node simulation is an ignored slow test".into(),
    }
}

fn main() {
    let mut verdicts = vec![flow_counts(), deadlock_suite(), resources()];
    let sat = Saturation::run();
    verdicts.push(voq_ordering(&sat));
    verdicts.push(buffer_plateau(&sat));
    verdicts.push(engine_ordering(&sat));
    verdicts.push(determinism());
    verdicts.push(large_scale_gated());
    let mut failed = 0;
    for v in &verdicts {
        println!(
            "{} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.label,
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        verdicts.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
