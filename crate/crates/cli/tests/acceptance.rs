//! Acceptance run. Prints one line per criterion and exits non-zero if any
//! criterion fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --release --test acceptance -- 5 6`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hyperlab::report::{CheckRecord, ExperimentReport, Verdict};
use hyperlab_cli::config::{Config, GraphKind, Kind, ModelKind, SamplerKind};
use hyperlab_cli::kinds;

const SEED: u64 = 20_261_018;

type Run = Result<(bool, String), String>;

fn run(kind: Kind, cfg: &Config, seed_offset: u64) -> Result<ExperimentReport, String> {
    cfg.validate(kind).map_err(|e| e.to_string())?;
    kinds::run(kind, cfg, SEED + seed_offset).map(|o| o.report).map_err(|e| format!("{kind}: {e}"))
}

fn select<'a>(rep: &'a ExperimentReport, prefixes: &[&str]) -> Vec<&'a CheckRecord> {
    rep.checks.iter().filter(|c| prefixes.iter().any(|p| c.name.starts_with(p))).collect()
}

/// All pass, plus a one-line summary naming anything that did not.
fn tally(label: &str, checks: &[&CheckRecord]) -> (bool, String) {
    let bad: Vec<String> = checks.iter().filter(|c| c.verdict != Verdict::Pass).map(|c| format!("{} {}", c.name, c.verdict)).collect();
    let worst = checks.iter().filter_map(|c| c.z.map(f64::abs)).fold(0.0, f64::max);
    let ok = !checks.is_empty() && bad.is_empty();
    let mut s = format!("{label}: {}/{} pass", checks.len() - bad.len(), checks.len());
    if worst > 0.0 {
        s.push_str(&format!(", max |z| {worst:.2}"));
    }
    if !bad.is_empty() {
        s.push_str(&format!(" [{}]", bad.iter().take(4).cloned().collect::<Vec<_>>().join(", ")));
    }
    (ok, s)
}

fn combine(parts: Vec<(bool, String)>) -> (bool, String) {
    (parts.iter().all(|p| p.0), parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; "))
}

fn chain(cfg: Config, samples: usize, burn_in: usize, thin: usize) -> Config {
    Config { samples, burn_in, thin, ..cfg }
}

fn normalisation_and_localisation() -> Run {
    let rep = run(Kind::VerifySusy, &Config { graph: GraphKind::TwoVertex, ..Config::default() }, 0)?;
    Ok(tally("1-2 vertices", &select(&rep, &["normalisation.", "z_mean.", "localisation.", "q_residual."])))
}

fn ward_identities() -> Run {
    let mut parts = Vec::new();
    for (i, graph) in [GraphKind::Single, GraphKind::TwoVertex].into_iter().enumerate() {
        let cfg = chain(Config { graph, ..Config::default() }, 20_000, 2_000, 2);
        let rep = run(Kind::SampleH22, &cfg, 10 + i as u64)?;
        parts.push(tally(&format!("{graph:?} quadrature"), &select(&rep, &["ward.quadrature."])));
    }
    let torus = chain(Config { graph: GraphKind::Torus, dim: 2, side: 8, ..Config::default() }, 10_000, 5_000, 10);
    let rep = run(Kind::SampleH22, &torus, 12)?;
    parts.push(tally("d=2 L=8 MCMC", &select(&rep, &["ward.mcmc."])));
    Ok(combine(parts))
}

fn dynkin_two_point() -> Run {
    let mut parts = Vec::new();
    for b in 0..2 {
        let cfg = Config { graph: GraphKind::TwoVertex, b, vrjp_samples: 1_000_000, ..chain(Config::default(), 20_000, 2_000, 2) };
        let rep = run(Kind::VerifyDynkin, &cfg, 20 + b as u64)?;
        parts.push(tally(&format!("pair b={b}"), &select(&rep, &["dynkin."])));
    }
    // Isolated vertex: the walk never jumps, so the VRJP side is exactly 1/h.
    let h = 1.0;
    let single = Config { graph: GraphKind::Single, h, vrjp_samples: 1_000_000, ..chain(Config::default(), 20_000, 2_000, 2) };
    let rep = run(Kind::SimulateVrjp, &single, 22)?;
    let c = rep.check("two_point.b0.vrjp_vs_oracle").ok_or("missing isolated VRJP check")?;
    let exact_vrjp = (c.lhs - 1.0 / h).abs() <= 4.0 * f64::EPSILON / h;
    let exact_oracle = (c.rhs - 1.0 / h).abs() < 1e-7;
    parts.push((exact_vrjp && exact_oracle, format!("isolated: VRJP {} oracle {}", c.lhs, c.rhs)));
    let rep = run(Kind::VerifyDynkin, &single, 23)?;
    let s = rep.check("dynkin.two_point.sigma_vs_vrjp").ok_or("missing isolated sigma check")?;
    let z = s.z.unwrap_or(f64::INFINITY);
    parts.push((z.abs() < 3.0 && s.verdict == Verdict::Pass, format!("isolated sigma {:.5} +- {:.5} (z {z:.2})", s.lhs, s.lhs_se)));
    Ok(combine(parts))
}

fn hn_isomorphism() -> Run {
    let base = Config { model: ModelKind::Hn, n: 2, vrjp_samples: 200_000, inner_replicas: 8, ..chain(Config::default(), 20_000, 2_000, 2) };
    let mut parts = Vec::new();
    let cases = [
        ("single g=1", Config { graph: GraphKind::Single, ..base.clone() }),
        ("pair g=1", Config { graph: GraphKind::TwoVertex, ..base.clone() }),
        ("pair g=1{b=1}e^{-<1,l>}", Config { graph: GraphKind::TwoVertex, b: 1, decay: vec![1.0, 1.0], ..base.clone() }),
    ];
    for (i, (label, cfg)) in cases.iter().enumerate() {
        let rep = run(Kind::VerifyDynkin, cfg, 30 + i as u64)?;
        parts.push(tally(label, &select(&rep, &["dynkin."])));
    }
    let rep = run(Kind::SampleHn, &Config { graph: GraphKind::Single, ..base }, 33)?;
    parts.push(tally("single sum rule", &select(&rep, &["sum_rule", "two_point."])));
    Ok(combine(parts))
}

fn mermin_wagner() -> Run {
    let mut parts = Vec::new();
    let mut offset = 40;
    for (dim, side) in [(1, 16), (2, 8)] {
        for h in [1.0, 0.3] {
            for model in [ModelKind::H22, ModelKind::Hn] {
                let mut cfg = Config { dim, side, h, model, n: 2, ..Config::default() };
                if model == ModelKind::Hn {
                    cfg = Config { sampler: SamplerKind::Chain, ..chain(cfg, 20_000, 2_000, 4) };
                }
                let rep = run(Kind::VerifyMw, &cfg, offset)?;
                offset += 1;
                parts.push(tally(&format!("d={dim} L={side} h={h} {model:?}"), &select(&rep, &["mw."])));
            }
        }
    }
    Ok(combine(parts))
}

fn recurrence_trend() -> Run {
    let mut parts = Vec::new();
    let d1 = Config { dim: 1, sides: vec![8, 16, 32, 64, 128], ..Config::default() };
    let d2 = Config { dim: 2, sides: vec![8, 16, 32, 64, 128], max_side: 128, ..Config::default() };
    for (i, cfg) in [d1, d2].iter().enumerate() {
        let rep = run(Kind::ScanH, cfg, 50 + i as u64)?;
        let growth = select(&rep, &["scan.growth."]);
        let plateaus: Vec<String> = select(&rep, &["scan.h"])
            .into_iter()
            .filter(|c| c.name.ends_with(".plateau"))
            .map(|c| format!("{}={:.4}", c.name.trim_start_matches("scan.").trim_end_matches(".plateau"), c.lhs))
            .collect();
        let (ok, s) = tally(&format!("d={}", cfg.dim), &growth);
        parts.push((ok && growth.len() == 3, format!("{s} (G(0): {})", plateaus.join(" "))));
    }
    let d3 = Config { dim: 3, beta: 10.0, hs: vec![0.3, 0.1], sides: vec![8, 12], max_side: 12, contrast: vec![0.3, 0.1], ..Config::default() };
    let rep = run(Kind::ScanH, &d3, 52)?;
    let c = rep.check("scan.contrast.h0.3_to_h0.1").ok_or("missing contrast check")?;
    parts.push((
        c.verdict == Verdict::Pass,
        format!("d=3 beta=10: G(0) {:.5} -> {:.5}, change {:.1}% at {}", c.rhs, c.lhs, 100.0 * (c.lhs / c.rhs - 1.0), c.note.clone().unwrap_or_default()),
    ));
    Ok(combine(parts))
}

fn coordinate_geometry() -> Run {
    let rep = run(Kind::VerifySusy, &Config { graph: GraphKind::Single, ..Config::default() }, 60)?;
    Ok(tally("geometry", &select(&rep, &["jacobian.", "derivatives.", "berezinian"])))
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).collect::<Vec<_>>())
        .unwrap_or_default()
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap_or_default()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Run {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("golden");
    let mut reports: Vec<_> = fs::read_dir(&golden).map_err(|e| e.to_string())?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
    reports.retain(|p| p.extension().is_some_and(|x| x == "jsonl"));
    reports.sort();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    for report in &reports {
        let name = report.file_stem().unwrap().to_string_lossy().into_owned();
        let mut outs = Vec::new();
        for threads in [1, 2] {
            let out = tmp.path().join(format!("{name}-{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_hyperlab"))
                .arg("replay")
                .arg(report)
                .arg("--out")
                .arg(&out)
                .args(["--threads", &threads.to_string()])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                bad.push(format!("{name} on {threads} threads: {}", String::from_utf8_lossy(&status.stderr).trim()));
            }
            outs.push(csvs(&out));
        }
        if outs[0] != outs[1] || outs[0].is_empty() {
            bad.push(format!("{name}: CSVs differ between thread counts"));
        }
    }
    let ok = !reports.is_empty() && bad.is_empty();
    Ok((ok, format!("{} golden reports replayed on 1 and 2 threads{}", reports.len(), if bad.is_empty() { String::new() } else { format!(" [{}]", bad.join("; ")) })))
}

fn main() {
    let criteria: [(u32, &str, f64, fn() -> Run); 8] = [
        (1, "normalisation and localisation", 60.0, normalisation_and_localisation),
        (2, "Ward identities", 600.0, ward_identities),
        (3, "triple consistency", 900.0, dynkin_two_point),
        (4, "H^n isomorphism", 1200.0, hn_isomorphism),
        (5, "Mermin-Wagner bounds", 3600.0, mermin_wagner),
        (6, "recurrence trend", 14_400.0, recurrence_trend),
        (7, "coordinate geometry", 60.0, coordinate_geometry),
        (8, "determinism", f64::INFINITY, determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, title, budget, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < budget;
        let ok = ok && in_time;
        let time = if budget.is_finite() { format!("{secs:.1}s of {budget:.0}s") } else { format!("{secs:.1}s") };
        println!("criterion {n} {} {title} ({time}{}): {detail}", if ok { "PASS" } else { "FAIL" }, if in_time { "" } else { ", over budget" });
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
