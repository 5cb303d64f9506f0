use std::fmt::Write;
use std::path::Path;

use modmark_core::generators::Generated;
use modmark_core::instance::InstanceFile;
use modmark_core::verify::{InstanceInfo, SuiteReport, VerificationReport};
use modmark_core::{Channel, MarkovCheck, ModularData};
use serde_json::{json, Value};

pub const SCHEMA: &str = "modmark-report/1";

fn with_schema(mut v: Value) -> String {
    if let Value::Object(map) = &mut v {
        map.insert("schema".into(), Value::String(SCHEMA.into()));
    }
    serde_json::to_string_pretty(&v).expect("plain data")
}

pub fn json_report(r: &VerificationReport) -> String {
    with_schema(serde_json::to_value(r).expect("plain data"))
}

pub fn json_suite(r: &SuiteReport) -> String {
    with_schema(serde_json::to_value(r).expect("plain data"))
}

pub fn json_markov_rejection(info: &InstanceInfo, c: &MarkovCheck) -> String {
    with_schema(json!({
        "instance": info,
        "passed": false,
        "markov": {
            "unital_residual": c.unital_residual,
            "cp_min_eig": c.cp_min_eig,
            "state_residual": c.state_residual,
            "modular_residual": c.modular_residual,
            "tolerance": c.tolerance,
        },
    }))
}

fn markov_lines(out: &mut String, c: &MarkovCheck) {
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    let _ = writeln!(out, "  unital    {:>11.3e}  {}", c.unital_residual, mark(c.unital));
    let _ = writeln!(
        out,
        "  cp        {:>11.3e}  {}  (min Choi eigenvalue)",
        c.cp_min_eig,
        mark(c.cp)
    );
    let _ = writeln!(
        out,
        "  state     {:>11.3e}  {}",
        c.state_residual,
        mark(c.state_preserving)
    );
    let _ = writeln!(out, "  modular   {:>11.3e}  {}", c.modular_residual, mark(c.modular));
    let _ = writeln!(out, "  tolerance {:>11.3e}", c.tolerance);
}

pub fn gen_summary(g: &Generated, c: &MarkovCheck, path: &Path) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "wrote {} ({} on {:?} -> {:?}, seed {})",
        path.display(),
        g.spec.kind,
        g.channel.source().algebra().block_dims(),
        g.channel.target().algebra().block_dims(),
        g.spec.seed
    );
    markov_lines(&mut out, c);
    if let Some(note) = &g.note {
        let _ = writeln!(out, "  flagged: {note}");
    }
    out
}

pub fn report_table(r: &VerificationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "instance {}  dims {:?} -> {:?}  kappa {:.4}",
        r.instance.id, r.instance.dims, r.instance.target_dims, r.kappa
    );
    let _ = writeln!(out, "  {:<34} {:>11} {:>11}  verdict", "check", "residual", "tolerance");
    for (key, v) in &r.residuals {
        let verdict = if r.verdicts[key] { "pass" } else { "FAIL" };
        let _ = writeln!(out, "  {key:<34} {v:>11.3e} {:>11.3e}  {verdict}", r.tolerances[key]);
    }
    let status = if r.passed {
        "all checks pass"
    } else if r.expected_failure {
        "failed (expected for this kind)"
    } else {
        "FAILED"
    };
    let _ = writeln!(out, "{status}");
    out
}

pub fn suite_table(r: &SuiteReport) -> String {
    let s = &r.suite_summary;
    let mut out = String::new();
    let _ = writeln!(out, "{} instances, {} passed", s.instances, s.passed);
    let _ = writeln!(out, "  {:<34} {:>11}", "check", "max residual");
    for (key, v) in &s.max_residuals {
        let _ = writeln!(out, "  {key:<34} {v:>11.3e}");
    }
    if !s.expected_failures.is_empty() {
        let _ = writeln!(out, "expected failures ({}):", s.expected_failures.len());
        for f in &s.expected_failures {
            let _ = writeln!(out, "  {}: {}", f.id, f.failed_checks.join(", "));
        }
        let _ = writeln!(out, "  {:<34} {:>11}", "check", "max residual");
        for (key, v) in &s.max_residuals_negative {
            let _ = writeln!(out, "  {key:<34} {v:>11.3e}");
        }
    }
    if !s.flagged.is_empty() {
        let _ = writeln!(out, "flagged (generator did not converge): {}", s.flagged.join(", "));
    }
    if s.unexpected_failures.is_empty() {
        let _ = writeln!(out, "no unexpected failures");
    } else {
        let _ = writeln!(out, "UNEXPECTED FAILURES ({}):", s.unexpected_failures.len());
        for f in &s.unexpected_failures {
            let _ = writeln!(out, "  {}: {}", f.id, f.failed_checks.join(", "));
        }
    }
    out
}

pub fn show(file: &InstanceFile, ch: &Channel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "instance format {}", file.version);
    if let Some(spec) = &file.metadata.genspec {
        let _ = writeln!(out, "generator: {}", serde_json::to_string(spec).expect("plain data"));
    }
    if file.metadata.flagged {
        let _ = writeln!(out, "flagged: {}", file.metadata.note.as_deref().unwrap_or("yes"));
    }
    for (label, st) in [("source", ch.source()), ("target", ch.target())] {
        let _ = writeln!(out, "{label} algebra {:?}", st.algebra().block_dims());
        if let Ok(md) = ModularData::new(st) {
            for (k, e) in md.density_eig().iter().enumerate() {
                let eig: Vec<String> = e.eigenvalues.iter().map(|l| format!("{l:.6}")).collect();
                let _ = writeln!(out, "  block {k} density spectrum [{}]", eig.join(", "));
            }
            let _ = writeln!(out, "  kappa {:.6}", md.kappa());
        }
    }
    let sup = ch.superop();
    let _ = writeln!(out, "superoperator {}x{}", sup.nrows(), sup.ncols());
    for i in 0..sup.nrows() {
        let row: Vec<String> = (0..sup.ncols())
            .map(|j| {
                let z = sup[(i, j)];
                format!("{:+.4}{:+.4}i", z.re, z.im)
            })
            .collect();
        let _ = writeln!(out, "  {}", row.join(" "));
    }
    let _ = writeln!(out, "membership:");
    markov_lines(&mut out, &ch.check_markov());
    out
}
