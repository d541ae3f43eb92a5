//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails. Runs without the test harness so
//! the lines always reach the output.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use deputy_core::dot::{export_dot, View};
use deputy_core::engine::Outcome;
use deputy_core::mutate::MutationKind;
use deputy_core::sampler::{
    build_path, limit_eval, obedience_disagreements, oscillation_witness, readback, Strategy, Verdict,
    DEFAULT_MIN_STABLE,
};
use deputy_core::snapshot::{load, save};
use deputy_core::verifier::verify_all;
use deputy_core::{run, BinaryString, ConstructionState, NumTuple, Requirement, ScheduleConfig};

const STAGES: u64 = 20_000;

fn schedule(s: &str) -> ScheduleConfig {
    s.parse().unwrap()
}

struct Report {
    lines: Vec<(u32, bool, String)>,
    since: Instant,
}

impl Report {
    fn record(&mut self, criterion: u32, pass: bool, detail: String) {
        let took = std::mem::replace(&mut self.since, Instant::now()).elapsed();
        println!("criterion {criterion}: {} ({detail}) [{took:.1?}]", if pass { "PASS" } else { "FAIL" });
        self.lines.push((criterion, pass, detail));
    }
}

/// Every string of length below `len`, shortest first.
fn all_strings(len: u64) -> Vec<BinaryString> {
    let mut out = vec![BinaryString::empty()];
    let mut i = 0;
    while i < out.len() {
        if out[i].len() + 1 < len {
            let s = out[i].clone();
            out.push(s.with_bit(false));
            out.push(s.with_bit(true));
        }
        i += 1;
    }
    out
}

/// Paths grown through each short string, plus the constant strategies.
fn sample_paths(state: &ConstructionState, through_len: u64, steps: u64) -> Vec<BinaryString> {
    let mut strategies = vec![Strategy::Zeros, Strategy::Ones];
    strategies.extend(all_strings(through_len).into_iter().map(|sigma| Strategy::Through { sigma }));
    strategies.iter().map(|s| build_path(state, steps, s).path).collect()
}

fn verifier_clean(report: &mut Report, runs: &BTreeMap<u32, ConstructionState>) {
    let mut details = Vec::new();
    let mut pass = true;
    for (n, state) in runs {
        let start = Instant::now();
        let found = verify_all(state);
        pass &= found.is_empty();
        details.push(format!("n={n}: {} violations in {:.2?}", found.len(), start.elapsed()));
        for v in found.iter().take(5) {
            println!("  {v}");
        }
    }
    report.record(1, pass, details.join(", "));
}

fn host(kind: MutationKind) -> ConstructionState {
    let (n, s) = match kind {
        MutationKind::DeputyShape | MutationKind::OneBits | MutationKind::DeltaConsistency => (1, "canonical"),
        MutationKind::GammaMonotone | MutationKind::DGamma | MutationKind::TopLayerValue => (2, "canonical"),
        MutationKind::Uniqueness | MutationKind::MissingReplica => (3, "canonical"),
        MutationKind::Obedience => (2, "focused::2"),
        MutationKind::Threshold => (3, "focused::2"),
    };
    run(n, 6000, schedule(s)).unwrap()
}

fn mutation_sensitivity(report: &mut Report) {
    let mut caught = 0;
    for kind in MutationKind::ALL {
        let mut state = host(kind);
        let Some(what) = kind.apply(&mut state) else {
            println!("  {kind}: no site found");
            continue;
        };
        let names: BTreeSet<String> = verify_all(&state).into_iter().map(|v| v.check).collect();
        let exact = names.len() == 1 && names.contains(kind.target());
        println!("  {kind}: {what}; tripped {names:?}");
        caught += usize::from(exact);
    }
    let total = MutationKind::ALL.len();
    report.record(2, caught == total && total >= 10, format!("{caught}/{total} mutations caught by exactly their check"));
}

fn n1_readback(report: &mut Report, state: &ConstructionState) {
    let qtop: Vec<(BinaryString, u64)> = state
        .events
        .iter()
        .filter_map(|e| match (&e.outcome, &e.requirement) {
            (Outcome::Acted(a), Some(Requirement::Qtop { x, .. })) => Some((a.gamma_key.clone()?, *x)),
            _ => None,
        })
        .collect();
    let mut paths = sample_paths(state, 6, 12);
    paths.extend(qtop.iter().map(|(w, _)| build_path(state, 12, &Strategy::Through { sigma: w.clone() }).path));
    let (mut bad, mut met, mut decided) = (0, 0, 0);
    for path in &paths {
        let back = readback(state, path);
        let value = state.gamma.eval(path);
        // Exactness on the decided domain: Δ agrees with the path wherever defined.
        for t in state.delta.tuples() {
            if let Some(v) = state.delta.eval(&value, t) {
                decided += 1;
                if path.bit(t.0[0]) != Some(v == 1) {
                    bad += 1;
                }
            }
        }
        bad += back.iter().filter(|&&x| path.bit(x) != Some(true)).count();
        for (_, x) in qtop.iter().filter(|(w, _)| w.is_prefix_of(path)) {
            met += 1;
            bad += usize::from(!back.contains(x));
        }
    }
    report.record(
        3,
        bad == 0 && paths.len() >= 50,
        format!(
            "{} paths, {decided} decided positions, {met} Qtop witnesses met, {bad} mismatches ({} Qtop actions)",
            paths.len(),
            qtop.len()
        ),
    );
}

/// `(source, image, attributes)` of every edge with class `deputy`.
fn deputy_edges(dot: &str) -> Vec<(String, String, BTreeMap<String, String>)> {
    dot.lines()
        .filter(|l| l.contains("class=\"deputy\""))
        .map(|l| {
            let quoted: Vec<&str> = l.split('"').collect();
            let strip = |s: &str| s.split_once(':').unwrap().1.to_string();
            let attrs = l[l.find('[').unwrap() + 1..l.rfind(']').unwrap()]
                .split(", ")
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), v.trim_matches('"').to_string()))
                .collect();
            (strip(quoted[1]), strip(quoted[3]), attrs)
        })
        .collect()
}

fn deputy_tree_shape(report: &mut Report) {
    let rho: BinaryString = "01".parse().unwrap();
    let state = run(2, STAGES, schedule("focused:01:2")).unwrap();
    let s = |t: &str| t.parse::<BinaryString>().unwrap();
    let edges = deputy_edges(&export_dot(&state, View::Deputies));
    let top: BTreeSet<(String, String)> =
        edges.iter().filter(|e| e.2["layer"] == "1").map(|e| (e.0.clone(), e.1.clone())).collect();
    let (mut ok, mut bad) = (0, 0);
    for (src, img, a) in &edges {
        let base = s(&a["base"]);
        let good = if a["layer"] == "1" {
            rho.is_prefix_of(&base)
                && base.with_bit(false).is_prefix_of(&s(src))
                && base.with_bit(true).is_prefix_of(&s(img))
        } else {
            let tau = s(&a["from_root"]);
            top.contains(&(a["base"].clone(), a["from_root"].clone()))
                && tau.is_prefix_of(&s(src))
                && base.is_prefix_of(&s(img))
        };
        if good { ok += 1 } else { bad += 1 }
    }
    let gamma_edges = deputy_edges(&export_dot(&state, View::Gamma));
    let nested = gamma_edges.iter().filter(|(from, to, _)| s(from).is_proper_prefix_of(&s(to))).count();
    let pass = bad == 0 && ok > 0 && nested == gamma_edges.len() && !gamma_edges.is_empty();
    report.record(
        4,
        pass,
        format!(
            "focused:01:2, {ok}/{} deputy edges well placed ({} layer 1), {nested}/{} Γ edges nested",
            ok + bad,
            top.len(),
            gamma_edges.len()
        ),
    );
}

fn oscillation(report: &mut Report, state: &ConstructionState) {
    let rho = BinaryString::empty();
    let witness = oscillation_witness(state, &rho).filter(|w| w.revalidate(state));
    let one = rho.with_bit(true);
    let x = rho.len();
    // Among paths through the constraint, keep the stable(1) one with the
    // most values past the threshold.
    let mut stable: Option<(u64, u64, usize)> = None;
    let witnesses = deputy_core::sampler::witnesses(state);
    for c in state.constraints.iter() {
        if c.layer != 0 || c.value != 1 || c.args != NumTuple(vec![x]) || !one.is_prefix_of(&c.loc) {
            continue;
        }
        let through = std::iter::once(c.loc.clone())
            .chain(witnesses.keys().map(|k| k.0.clone()).filter(|w| c.loc.is_prefix_of(w)).take(200));
        for sigma in through {
            let path = build_path(state, 12, &Strategy::Through { sigma }).path;
            let eval = limit_eval(state, &path, 0, &c.args, DEFAULT_MIN_STABLE);
            let past = eval.values.iter().filter(|(y, _)| *y > c.threshold).count();
            if matches!(eval.verdict, Verdict::Stable { bit: 1, .. })
                && past >= DEFAULT_MIN_STABLE
                && stable.is_none_or(|(_, _, best)| past > best)
            {
                stable = Some((c.id, c.threshold, past));
            }
        }
    }
    let detail = match (&witness, stable) {
        (Some(w), Some((id, threshold, past))) => format!(
            "x={}: Δ=0 at y={} and Δ=1 at y={} below θ={}; constraint #{id} stable(1) with {past} values past threshold {threshold}",
            w.x, w.zero.0, w.one.0, w.theta
        ),
        _ => format!("witness {:?}, stable constraint {:?}", witness.is_some(), stable),
    };
    report.record(5, witness.is_some() && stable.is_some(), detail);
}

fn obedience(report: &mut Report, clean: &[(&str, &ConstructionState)]) {
    let (mut checked, mut disagreements) = (0, 0);
    let mut details = Vec::new();
    for (name, state) in clean {
        let mut here = 0;
        for c in state.constraints.iter() {
            for strategy in [Strategy::Through { sigma: c.loc.clone() }, Strategy::Through { sigma: c.loc.with_bit(true) }] {
                let path = build_path(state, 6, &strategy).path;
                disagreements += obedience_disagreements(state, &path, DEFAULT_MIN_STABLE).len();
                here += 1;
            }
        }
        checked += here;
        details.push(format!("{name}: {here} paths"));
    }
    report.record(6, disagreements == 0, format!("{} ; {checked} paths, {disagreements} disagreements", details.join(", ")));
}

fn fixtures() -> Vec<(String, Vec<u8>)> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism(report: &mut Report, runs: &BTreeMap<u32, ConstructionState>) {
    let mut pass = true;
    let mut details = Vec::new();
    for (n, state) in runs {
        let again = run(*n, STAGES, ScheduleConfig::Canonical).unwrap();
        pass &= save(state) == save(&again);
    }
    details.push(format!("{} runs repeated", runs.len()));
    let stored = fixtures();
    for (name, bytes) in &stored {
        let state = match load(bytes) {
            Ok(s) => s,
            Err(e) => {
                println!("  {name}: {e}");
                pass = false;
                continue;
            }
        };
        let replay = run(state.config.n, state.config.stages, state.config.schedule.clone()).unwrap();
        let same = save(&state) == *bytes && save(&replay) == *bytes;
        if !same {
            println!("  {name}: round trip or replay differs");
        }
        pass &= same;
    }
    details.push(format!("{} fixtures round-tripped and replayed", stored.len()));
    report.record(7, pass && !stored.is_empty(), details.join(", "));
}

fn main() {
    let mut report = Report { lines: Vec::new(), since: Instant::now() };
    let runs: BTreeMap<u32, ConstructionState> = (1..=3)
        .map(|n| {
            let start = Instant::now();
            let state = run(n, STAGES, ScheduleConfig::Canonical).unwrap();
            println!("  run(n={n}, {STAGES}, canonical) in {:.2?}", start.elapsed());
            (n, state)
        })
        .collect();
    let focused = run(2, STAGES, schedule("focused::2")).unwrap();

    verifier_clean(&mut report, &runs);
    mutation_sensitivity(&mut report);
    n1_readback(&mut report, &runs[&1]);
    deputy_tree_shape(&mut report);
    let focused_clean = verify_all(&focused).is_empty();
    oscillation(&mut report, &focused);
    let mut clean: Vec<(&str, &ConstructionState)> = Vec::new();
    for (name, state) in [("n=1", &runs[&1]), ("n=2", &runs[&2]), ("n=3", &runs[&3])] {
        if verify_all(state).is_empty() {
            clean.push((name, state));
        }
    }
    if focused_clean {
        clean.push(("n=2 focused", &focused));
    }
    obedience(&mut report, &clean);
    determinism(&mut report, &runs);

    let failed: Vec<u32> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria pass", report.lines.len());
}
