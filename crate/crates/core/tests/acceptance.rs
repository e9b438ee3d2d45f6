//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

use autoviz::bench::{compute_ver, emit_report, run_benchmark, ReportFormat};
use autoviz::llm::{ProviderResponse, ScriptedProvider, TextProvider};
use autoviz::ops::{Dimension, DimensionScore, EvaluationReport};
use autoviz::summary::{build_base_summary, ingest, render_summary, DataFormat, SummaryCondition, DEFAULT_SAMPLE_N};
use autoviz::testing::FixtureModel;
use autoviz::vis::{
    assemble, select_by_consistency, select_by_correctness, CandidateProgram, CandidateStatus, ExecLimits, Executor,
    ScaffoldLibrary, VisError,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    check(took < limit, || format!("took {took:?}, limit {limit:?}"))?;
    Ok(took)
}

fn ver_arithmetic() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0u64;
    for t in 1..=10_000u64 {
        let mut es = vec![0, t, t / 2, t.saturating_sub(1), 1.min(t)];
        es.extend((0..20).map(|_| rng.random_range(0..=t)));
        for e in es {
            let got = compute_ver(e, t).map_err(|err| err.to_string())?;
            let oracle = (100 * e) as f64 / t as f64;
            check((got - oracle).abs() <= 1e-9, || format!("E={e} T={t}: {got} vs {oracle}"))?;
            checked += 1;
        }
    }
    check(compute_ver(0, 10).unwrap() == 0.0, || "E=0 must give 0.0".into())?;
    check(compute_ver(10, 10).unwrap() == 100.0, || "E=T must give 100.0".into())?;
    check(compute_ver(0, 0).is_err(), || "T=0 must be rejected".into())?;
    let took = within(Duration::from_secs(1), started)?;
    Ok(format!("{checked} (E,T) pairs, {took:.2?}"))
}

/// Breaks the codegen reply of the first `k` scheduled runs in a fixed
/// shuffled order of (dataset, condition, goal) keys.
fn fault_injection() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for d in common::DATASETS {
        for c in SummaryCondition::ALL {
            for g in 0..5 {
                keys.push((d.to_string(), c.as_str().to_string(), g.to_string()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in (1..keys.len()).rev() {
        keys.swap(i, rng.random_range(0..=i));
    }
    let mut details = Vec::new();
    for k in [0usize, 3, 10] {
        let broken: BTreeSet<_> = keys.iter().take(k).cloned().collect();
        let fixture = FixtureModel::new().with_data_dir(common::datasets_dir());
        let provider = ScriptedProvider::new(move |req, cfg| {
            if req.meta("task") == Some("codegen") {
                let key = (
                    req.meta("dataset").unwrap_or_default().to_string(),
                    req.meta("condition").unwrap_or_default().to_string(),
                    req.meta("goal_index").unwrap_or_default().to_string(),
                );
                if broken.contains(&key) {
                    return Ok(ProviderResponse::new(vec!["  \"mark\": \"bar\",, \"encoding\": {".into()]));
                }
            }
            fixture.generate(req, cfg)
        });
        let report = run_benchmark(&common::ablation_config(), &provider, &common::generator(tmp.path()))
            .map_err(|e| e.to_string())?;
        check(report.t == 100, || format!("k={k}: T={} (expected 100)", report.t))?;
        check(report.e == k as u64, || format!("k={k}: E={}", report.e))?;
        check(report.ver == k as f64, || format!("k={k}: ver={} (expected {k})", report.ver))?;
        details.push(format!("k={k} ver={}", report.ver));
    }
    let took = within(Duration::from_secs(60), started)?;
    Ok(format!("{}, {took:.2?}", details.join(", ")))
}

const DIMENSION_DIGESTS: [(Dimension, &str); 6] = [
    (Dimension::CodeAccuracy, "3e0c43a7fb5bff79396e4732eee531af764a07806d69a9e82a865fcdea3c8912"),
    (Dimension::DataTransformation, "6efc77e79096f42e060ed664d2461fcbf1148d881ce6387f1a47a62589ae8604"),
    (Dimension::GoalCompliance, "d8df89624b00b1ed1819647d279c300c41f866c32076d3595c9271d159b551cb"),
    (Dimension::VisualizationType, "2c5ac794a0c9719e824153f7c4d003af7f443ce83cae36cf8691666395f68bf8"),
    (Dimension::DataEncoding, "172c752bb45c50bbd8b2780584b1c74d2b639061ee8f94286c47cee9fecc2adb"),
    (Dimension::Aesthetics, "b387c6d6641d03409da4b272b8a8db4c5b480fb2b5fa462a28c8ec2d38ec19e6"),
];

fn sevq_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let raw: Vec<u8> = (0..6).map(|_| rng.random_range(1..=10)).collect();
        let scores = raw
            .iter()
            .zip(Dimension::ALL)
            .map(|(&score, dimension)| DimensionScore { dimension, score, rationale: String::new() })
            .collect();
        let report = EvaluationReport::from_scores(scores, vec![]).map_err(|e| e.to_string())?;
        let oracle = raw.iter().map(|&s| f64::from(s)).sum::<f64>() / 6.0;
        check((report.sevq - oracle).abs() <= 1e-9, || format!("{raw:?}: {} vs {oracle}", report.sevq))?;
    }
    for (dimension, digest) in DIMENSION_DIGESTS {
        let got = hex::encode(Sha256::digest(dimension.prompt().as_bytes()));
        check(got == digest, || format!("{} prompt drifted from the reference text", dimension.as_str()))?;
    }
    Ok("200 tuples, 6 prompts byte-identical".into())
}

fn summarizer_determinism() -> Outcome {
    let mut fields = 0;
    for name in common::DATASETS {
        let golden: Value = serde_json::from_str(
            &std::fs::read_to_string(common::datasets_dir().join("golden").join(format!("{name}.json")))
                .map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let summary = common::base_summary(name);
        check(summary.row_count as u64 == golden["row_count"].as_u64().unwrap(), || format!("{name}: row count"))?;
        let expected = golden["fields"].as_array().unwrap();
        check(expected.len() == summary.fields.len(), || format!("{name}: field count"))?;
        for (f, g) in summary.fields.iter().zip(expected) {
            let actual = serde_json::json!({
                "name": f.name,
                "atomic_type": f.atomic_type.as_str(),
                "n_rows": f.stats.n_rows,
                "n_null": f.stats.n_null,
                "min": f.stats.min,
                "max": f.stats.max,
                "n_unique": f.stats.n_unique,
            });
            check(&actual == g, || format!("{name}.{}: got {actual}, golden {g}", f.name))?;
            fields += 1;
        }
        let a = serde_json::to_string(&common::base_summary(name)).unwrap();
        let b = serde_json::to_string(&summary).unwrap();
        check(a == b, || format!("{name}: two runs with one seed differ"))?;

        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let raw = std::fs::read_to_string(common::dataset_path(name)).map_err(|e| e.to_string())?;
        let (header, body) = raw.split_once('\n').unwrap();
        let big = tmp.path().join(format!("{name}.csv"));
        std::fs::write(&big, format!("{header}\n{}", body.repeat(100))).map_err(|e| e.to_string())?;
        let big_summary = build_base_summary(&ingest(&big, DataFormat::Csv).unwrap(), DEFAULT_SAMPLE_N, 0).unwrap();
        check(big_summary.row_count == summary.row_count * 100, || format!("{name}: 100x variant row count"))?;
        for c in SummaryCondition::ALL {
            let small_len = render_summary(&summary, c).len();
            let big_len = render_summary(&big_summary, c).len();
            check(small_len == big_len, || {
                format!("{name} [{}]: rendered length {small_len} vs {big_len}", c.as_str())
            })?;
        }
    }
    Ok(format!("5 datasets, {fields} golden field profiles, 100x variants render identically"))
}

fn ablation_matrix() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let gen = common::generator(tmp.path());
    let config = common::ablation_config();
    let first = run_benchmark(&config, &common::replay(common::BENCHMARK_CASSETTE), &gen).map_err(|e| e.to_string())?;
    let second =
        run_benchmark(&config, &common::replay(common::BENCHMARK_CASSETTE), &gen).map_err(|e| e.to_string())?;
    check(first.cells.len() == 20, || format!("{} cells", first.cells.len()))?;
    check(first.breakdown.len() == 4, || format!("{} breakdown rows", first.breakdown.len()))?;
    check(first.cells.iter().all(|c| c.t > 0), || "a cell has no runs".into())?;
    let (a, b) = (emit_report(&first, ReportFormat::Json), emit_report(&second, ReportFormat::Json));
    check(a == b, || "two replayed runs produced different JSON".into())?;
    check(gen.executor().processes_spawned() == 0, || "declarative benchmark spawned processes".into())?;
    Ok(format!("20 cells (5 datasets x 4 conditions x 1 grammar), T={}, ver={:.1}, byte-identical", first.t, first.ver))
}

fn cluster_oracle(bases: &[Option<usize>]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, b) in bases.iter().enumerate() {
        let Some(b) = b else { continue };
        if bases[..i].contains(&Some(*b)) {
            continue;
        }
        let size = bases.iter().filter(|x| **x == Some(*b)).count();
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((i, size));
        }
    }
    best.map(|(i, _)| i)
}

fn decorate(base: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    for line in base.lines() {
        if rng.random_bool(0.3) {
            out.push_str("\n    \n");
        }
        let (indent, rest) = line.split_at(line.len() - line.trim_start().len());
        out.push_str(indent);
        for ch in rest.chars() {
            if matches!(ch, '=' | ',' | '(' | ')') && rng.random_bool(0.5) {
                out.push_str(&" ".repeat(rng.random_range(1..3)));
            }
            out.push(ch);
        }
        if rng.random_bool(0.3) {
            out.push_str("  # note");
        }
        out.push('\n');
    }
    out
}

fn filter_oracles() -> Outcome {
    const BASES: [&str; 5] = [
        "    x = 1\n    plt.bar(data['a'], data['b'])",
        "    x = 2\n    plt.bar(data['a'], data['b'])",
        "    plt.scatter(data['a'], data['b'])",
        "    for k in range(3):\n        plt.plot(k, k)",
        "    plt.title('t')",
    ];
    let scaffold = ScaffoldLibrary::bundled().get_scaffold("matplotlib").unwrap();
    let style = scaffold.code_style();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..1000 {
        let n = rng.random_range(1..=6);
        let mut cands = Vec::new();
        let mut bases = Vec::new();
        for i in 0..n {
            let b = rng.random_range(0..BASES.len());
            let code = decorate(BASES[b], &mut rng);
            let mut c = CandidateProgram::new(0, i, &scaffold, code.clone(), code);
            c.status = if rng.random_bool(0.75) { CandidateStatus::CompiledOk } else { CandidateStatus::RuntimeError };
            bases.push((c.status == CandidateStatus::CompiledOk).then_some(b));
            cands.push(c);
        }
        let got = select_by_consistency(&cands, &style).map(|c| c.candidate_index);
        match (cluster_oracle(&bases), got) {
            (Some(i), Ok(j)) if i == j => {}
            (None, Err(VisError::NoViableCandidate { .. })) => {}
            (want, got) => return Err(format!("consistency round {round}: oracle {want:?}, got {got:?}")),
        }
    }

    for round in 0..1000 {
        let n = rng.random_range(1..=6);
        let mut cands = Vec::new();
        let mut scores = Vec::new();
        for i in 0..n {
            let code = format!("    plt.title('candidate {i}')");
            let mut c = CandidateProgram::new(0, i, &scaffold, code.clone(), code);
            let compiled = rng.random_bool(0.8);
            c.status = if compiled { CandidateStatus::CompiledOk } else { CandidateStatus::CompileError };
            let reply = match rng.random_range(0..5) {
                0 => "no idea".to_string(),
                k => format!("{:.1}", [0.0, 0.2, 0.5, 0.5, 0.9][k]),
            };
            scores.push(compiled.then(|| reply.parse::<f64>().unwrap_or(0.0)));
            cands.push((c, reply));
        }
        let replies: Vec<(String, String)> = cands.iter().map(|(c, r)| (c.assembled_code.clone(), r.clone())).collect();
        let provider = ScriptedProvider::new(move |req, _| {
            let body = &req.messages.last().unwrap().content;
            let reply = replies.iter().find(|(code, _)| body.contains(code.as_str())).map(|(_, r)| r.clone()).unwrap();
            Ok(ProviderResponse::new(vec![reply]))
        });
        let mut programs: Vec<CandidateProgram> = cands.into_iter().map(|(c, _)| c).collect();
        programs.reverse();
        let got =
            select_by_correctness(&mut programs, &provider, "ctx", &Default::default()).map(|c| c.candidate_index);
        let mut want: Option<(usize, f64)> = None;
        for (i, s) in scores.iter().enumerate() {
            if let Some(s) = s {
                if want.is_none_or(|(_, best)| *s > best) {
                    want = Some((i, *s));
                }
            }
        }
        match (want, got) {
            (Some((i, _)), Ok(j)) if i == j => {}
            (None, Err(VisError::NoViableCandidate { .. })) => {}
            (want, got) => return Err(format!("correctness round {round}: oracle {want:?}, got {got:?}")),
        }
    }
    Ok("1000 consistency sets and 1000 score vectors agree with the oracles".into())
}

fn scaffold_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let gen = common::generator(tmp.path());
    for c in gen.self_test() {
        check(c.status == CandidateStatus::CompiledOk, || {
            format!("{} self-test: {:?}", c.scaffold_ref, c.error_detail)
        })?;
    }
    let lib = ScaffoldLibrary::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    const ALPHABET: &[char] = &['a', 'Z', ' ', '\n', '\t', '{', '}', '"', '<', '>', '$', '\\', 'é', '図', '`', '#'];
    for i in 0..500 {
        let len = rng.random_range(1..40);
        let mut stub: String = (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect();
        if stub.trim().is_empty() {
            stub.push('x');
        }
        if i % 50 == 0 {
            stub.push_str("<stub>");
        }
        for s in lib.iter() {
            let code = assemble(s, &stub).map_err(|e| e.to_string())?;
            check(code.contains(&stub) && code.contains(&s.preamble) && code.contains(&s.postamble), || {
                format!("{}: identity fails for {stub:?}", s.grammar_id)
            })?;
            check(code.len() == s.preamble.len() + stub.len() + s.postamble.len(), || {
                format!("{}: extra text", s.grammar_id)
            })?;
        }
    }
    let offline = common::generator(tmp.path());
    let report = run_benchmark(&common::ablation_config(), &common::replay(common::BENCHMARK_CASSETTE), &offline)
        .map_err(|e| e.to_string())?;
    check(offline.executor().processes_spawned() == 0, || "declarative path spawned a process".into())?;
    Ok(format!(
        "{} scaffolds self-test, 500 stubs x identity, {} declarative runs with 0 processes",
        lib.iter().count(),
        report.t
    ))
}

fn sandbox_limits() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data_dir = tmp.path().join("data");
    std::fs::create_dir_all(&data_dir).unwrap();
    let path = data_dir.join("d.csv");
    std::fs::write(&path, "a,b\n1,2\n").unwrap();
    let dataset = autoviz::vis::DatasetRef::new(&path, vec!["a".into(), "b".into()]);
    let scaffold = ScaffoldLibrary::bundled().get_scaffold("matplotlib").unwrap();
    let timeout = Duration::from_secs(2);
    let exec =
        Executor::new(tmp.path().join("runs")).unwrap().with_limits(ExecLimits { timeout, ..ExecLimits::default() });
    let run = |stub: &str| {
        let c = CandidateProgram::new(0, 0, &scaffold, stub.into(), assemble(&scaffold, stub).unwrap());
        exec.execute(&scaffold, c, &dataset)
    };
    let started = Instant::now();
    let slept = run(&format!("    import time\n    time.sleep({})", timeout.as_secs() * 2));
    check(slept.status == CandidateStatus::Timeout, || format!("sleeping stub ended as {:?}", slept.status))?;
    check(started.elapsed() < timeout * 2, || "timeout was not enforced early".into())?;
    let target = data_dir.join("escaped.txt");
    let escaped = run(&format!("    open({:?}, 'w').write('x')\n    plt.figure()", target.display().to_string()));
    check(
        escaped.status == CandidateStatus::RuntimeError
            && escaped.error_detail.as_deref().is_some_and(|d| d.contains("sandbox violation")),
        || format!("escape not detected: {:?} {:?}", escaped.status, escaped.error_detail),
    )?;
    Ok("sleep 2x timeout -> timeout; outside write -> sandbox violation".into())
}

fn end_to_end_replay() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = common::cars_walkthrough(&common::replay(common::CARS_CASSETTE), &common::generator(tmp.path()));
    check(run.selected.status == CandidateStatus::CompiledOk, || "selected candidate did not compile".into())?;
    check(run.report.is_complete() && run.report.scores.len() == 6, || "evaluation report is partial".into())?;
    check(run.repair.repaired.status == CandidateStatus::CompiledOk, || "repaired candidate did not compile".into())?;
    check(run.repaired_report.is_complete(), || "repaired report is partial".into())?;
    let took = within(Duration::from_secs(30), started)?;
    Ok(format!(
        "cars: goals={}, sevq {:.2} -> {:.2} after repair, {took:.2?}, strict replay",
        run.goals.len(),
        run.report.sevq,
        run.repaired_report.sevq
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("VER arithmetic", ver_arithmetic),
        ("Fault-injection VER", fault_injection),
        ("SEVQ aggregation", sevq_aggregation),
        ("Summarizer determinism + correctness", summarizer_determinism),
        ("Ablation matrix shape", ablation_matrix),
        ("Filter oracles", filter_oracles),
        ("Scaffold round trip", scaffold_round_trip),
        ("Sandbox limits", sandbox_limits),
        ("End-to-end replay", end_to_end_replay),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let outcome = std::panic::catch_unwind(criterion).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
