//! Acceptance criteria 1-12. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use guidyn::action::{to_absolute, to_normalized, Action, CoordSpace, Direction};
use guidyn::corpus::{mix, placeholder_pool, source_counts, MixSpec, Source};
use guidyn::dedup::structural::{
    dedup_structural, estimate_jaccard, minhash, sign_transitions, tokenize_transition, StructuralParams, TokenSet,
};
use guidyn::dedup::visual::{cluster_fingerprints, is_static, BitSampler, VisualFingerprint, VisualParams};
use guidyn::env::{generate_environment, Bounds, GenerationSpec, GraphSet, StateId, StepOutcome, SCREEN};
use guidyn::eval::{score, EvalRecord, ScoringConfig};
use guidyn::explore::{run_fleet, FleetSpec, RawCorpus, Transition, TransitionFlag};
use guidyn::par::Executor;
use guidyn::pipeline::{Pipeline, PipelineConfig, Stage};
use guidyn::semantic::{RuleVerifier, Verifier};
use guidyn::synth::generalize::{build_generalization_items, candidate_paths, Level, ProbeTask};
use guidyn::synth::judge::{parse_judge_verdict, JudgeKind};
use guidyn::synth::{TaskKind, TrainingSample};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn corpus(seed: u64, apps: usize, workers: usize, steps: usize) -> (GraphSet, Vec<Transition>) {
    let exec = Executor::default();
    let spec = GenerationSpec::new(apps, 120, 30, 0.1);
    let graphs = generate_environment(seed, &spec, &exec).unwrap();
    let raw = run_fleet(&graphs, &FleetSpec::new(workers, steps, seed ^ 0xabcd), &exec).unwrap();
    (GraphSet::new(graphs), raw.to_vec())
}

/// Exact Jaccard via ordered sets.
fn exact_jaccard(a: &TokenSet, b: &TokenSet) -> f64 {
    let sa: BTreeSet<u64> = a.as_slice().iter().copied().collect();
    let sb: BTreeSet<u64> = b.as_slice().iter().copied().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Connected components of `adj` by BFS; label = smallest member.
fn bfs_components(adj: &[Vec<usize>]) -> Vec<usize> {
    let mut label = vec![usize::MAX; adj.len()];
    for s in 0..adj.len() {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = s;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if label[v] == usize::MAX {
                    label[v] = s;
                    q.push_back(v);
                }
            }
        }
    }
    label
}

/// Survivor ids under the representative rule: highest priority, then smallest id.
fn oracle_survivors(ts: &[Transition], labels: &[usize]) -> BTreeSet<String> {
    let mut best: BTreeMap<usize, &Transition> = BTreeMap::new();
    for (t, &l) in ts.iter().zip(labels) {
        best.entry(l)
            .and_modify(|b| {
                if t.source_priority > b.source_priority
                    || (t.source_priority == b.source_priority && t.transition_id < b.transition_id)
                {
                    *b = t;
                }
            })
            .or_insert(t);
    }
    best.values().map(|t| t.transition_id.clone()).collect()
}

fn c1_structural_oracle() -> Outcome {
    let params = StructuralParams::default();
    let exec = Executor::default();
    let mut matched = 0;
    let mut unexplained = 0;
    let mut slowest = Duration::ZERO;
    let mut sizes = Vec::new();
    for i in 0..20u64 {
        let (graphs, mut ts) = corpus(1000 + i, 2, 8, 250);
        ts.truncate(2000);
        sizes.push(ts.len());
        let t0 = Instant::now();
        let got: BTreeSet<String> = dedup_structural(&ts, &graphs, &params, &exec)
            .unwrap()
            .survivors
            .into_iter()
            .map(|t| t.transition_id)
            .collect();
        slowest = slowest.max(t0.elapsed());

        let tokens: Vec<TokenSet> = ts.iter().map(|t| tokenize_transition(t, &graphs).unwrap()).collect();
        let n = ts.len();
        let mut adj = vec![Vec::new(); n];
        let mut exact = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let j = exact_jaccard(&tokens[a], &tokens[b]);
                if j >= params.jaccard_threshold {
                    adj[a].push(b);
                    adj[b].push(a);
                }
                exact.push((a, b, j));
            }
        }
        let want = oracle_survivors(&ts, &bfs_components(&adj));
        if got == want {
            matched += 1;
            continue;
        }
        let sigs = sign_transitions(&ts, &graphs, &params, &exec).unwrap();
        let explained = exact.iter().all(|&(a, b, j)| {
            let e = estimate_jaccard(&sigs[a], &sigs[b]).unwrap();
            (j >= params.jaccard_threshold) == (e >= params.jaccard_threshold) || (j - params.jaccard_threshold).abs() <= 0.05
        });
        if !explained {
            unexplained += 1;
        }
    }
    outcome(
        matched >= 19 && unexplained == 0 && slowest < Duration::from_secs(60),
        format!(
            "{matched}/20 corpora (sizes {}..={}) match brute-force exact Jaccard >= 0.85 (need >= 19), unexplained mismatches {unexplained}, slowest {:.2?} (< 60 s)",
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap(),
            slowest
        ),
    )
}

fn c2_minhash_accuracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total_err = 0.0;
    for i in 0..1000u64 {
        let union = rng.gen_range(10..300usize);
        let shared = rng.gen_range(1..=union);
        let a_only = rng.gen_range(0..=union - shared);
        let base = i << 20;
        let a: TokenSet = (0..shared + a_only).map(|t| base + t as u64).collect();
        let b: TokenSet = (0..shared).chain(shared + a_only..union).map(|t| base + t as u64).collect();
        let exact = exact_jaccard(&a, &b);
        let est = estimate_jaccard(&minhash(&a, 128, 77).unwrap(), &minhash(&b, 128, 77).unwrap()).unwrap();
        total_err += (est - exact).abs();
    }
    let mean = total_err / 1000.0;
    outcome(mean <= 0.05, format!("mean |estimate - exact| = {mean:.4} over 1000 pairs at k=128 (<= 0.05)"))
}

fn flip(fp: &mut VisualFingerprint, bit: usize) {
    fp.0[bit / 64] ^= 1 << (63 - bit % 64);
}

fn c3_visual_oracle() -> Outcome {
    let params = VisualParams::default();
    let sampler = BitSampler::from_params(&params);
    let fixed: BTreeSet<usize> = sampler.projections()[0].iter().map(|&b| b as usize).collect();
    let free: Vec<usize> = (0..256).filter(|b| !fixed.contains(b)).collect();
    let exec = Executor::default();
    let mut exact = 0;
    let mut recall_ok = true;
    let mut sizes = Vec::new();
    for set in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + set);
        let n_clusters = rng.gen_range(20..120);
        let mut fps = Vec::new();
        for _ in 0..n_clusters {
            let center = VisualFingerprint([rng.gen(), rng.gen(), rng.gen(), rng.gen()]);
            fps.push(center);
            for _ in 0..rng.gen_range(0..8) {
                let mut m = center;
                let k = rng.gen_range(0..=8);
                for &b in free.choose_multiple(&mut rng, k) {
                    flip(&mut m, b);
                }
                fps.push(m);
            }
        }
        fps.truncate(1000);
        fps.shuffle(&mut rng);
        sizes.push(fps.len());
        let n = fps.len();
        let mut adj = vec![Vec::new(); n];
        for a in 0..n {
            for b in a + 1..n {
                if fps[a].distance(&fps[b]) <= params.theta_cluster {
                    recall_ok &= sampler.collide(&fps[a], &fps[b]);
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        let want = bfs_components(&adj);
        let mut uf = cluster_fingerprints(&fps, &params, &exec).unwrap();
        let got = uf.labels();
        let same = (0..n).all(|a| (0..n).all(|b| (want[a] == want[b]) == (got[a] == got[b])));
        if same {
            exact += 1;
        }
    }
    outcome(
        exact == 10 && recall_ok,
        format!(
            "{exact}/10 fixture sets ({}..={} fingerprints) match BFS Hamming <= 10 components exactly, candidate recall 1: {recall_ok}",
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        ),
    )
}

fn c4_static_removal(graphs: &GraphSet, raw: &[Transition]) -> Outcome {
    let loops: Vec<&Transition> = raw.iter().filter(|t| t.pre == t.post).collect();
    let identical = loops.iter().all(|t| {
        let (a, b) = t.resolve(graphs).unwrap();
        a.raster.diff_count(&b.raster) == Some(0)
    });
    let dropped = loops.iter().filter(|t| is_static(t, graphs, 4).unwrap()).count();
    let no_ops = raw.iter().filter(|t| t.edge_flag == TransitionFlag::NoOp).count();
    outcome(
        identical && dropped == loops.len() && !loops.is_empty(),
        format!(
            "{dropped}/{} self-loops dropped at theta_static=4 ({no_ops} no_op steps, identical rasters: {identical})",
            loops.len()
        ),
    )
}

fn c5_semantic_fidelity(graphs: &GraphSet, raw: &[Transition]) -> Outcome {
    let v = RuleVerifier::new(graphs);
    let mut flagged = BTreeMap::<TransitionFlag, (usize, usize)>::new();
    let mut false_flag_rejections = 0;
    for t in raw {
        let verdict = v.verify(t).unwrap();
        match t.edge_flag {
            TransitionFlag::SystemError | TransitionFlag::RenderArtifact => {
                let e = flagged.entry(t.edge_flag).or_default();
                e.0 += 1;
                if !verdict.valid && verdict.reason == t.edge_flag.as_str() {
                    e.1 += 1;
                }
            }
            _ => {
                if !verdict.valid && (verdict.reason == "system_error" || verdict.reason == "render_artifact") {
                    false_flag_rejections += 1;
                }
            }
        }
    }
    let recall_ok = flagged.len() == 2 && flagged.values().all(|(n, r)| n == r && *n > 0);
    let parts: Vec<String> = flagged
        .iter()
        .map(|(f, (n, r))| format!("{f} recall {:.3} ({r}/{n})", *r as f64 / *n as f64))
        .collect();
    outcome(
        recall_ok && false_flag_rejections == 0,
        format!("{}, flag-reason rejections of unflagged steps {false_flag_rejections}", parts.join(", ")),
    )
}

fn run_demo(workers: usize) -> (tempfile::TempDir, Pipeline, Duration) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::demo();
    cfg.workers = workers;
    cfg.out = dir.path().to_path_buf();
    let p = Pipeline::new(cfg).unwrap();
    let t0 = Instant::now();
    p.run_all().unwrap();
    (dir, p, t0.elapsed())
}

fn c6_funnel(p: &Pipeline, elapsed: Duration) -> Outcome {
    let funnel = p.funnel().unwrap();
    let counts = funnel.stages();
    let monotone = funnel.check().is_ok();
    let survivors: BTreeSet<String> = p.semantic_survivors().unwrap().into_iter().map(|t| t.transition_id).collect();
    let samples = p.samples().unwrap();
    let orphans = samples.iter().filter(|s| !survivors.contains(&s.provenance)).count();
    let sample_ids: BTreeSet<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    let mixed_orphans = p
        .mixed_corpus()
        .unwrap()
        .iter()
        .filter(|r| match r {
            guidyn::corpus::CorpusRecord::Dynamics(s) => !sample_ids.contains(s.sample_id.as_str()),
            _ => false,
        })
        .count();
    let seq: Vec<String> = counts.iter().map(|(k, n)| format!("{k}={n}")).collect();
    outcome(
        counts[0].1 == 20_000 && monotone && orphans == 0 && mixed_orphans == 0 && elapsed < Duration::from_secs(600),
        format!(
            "{} non-increasing: {monotone}; {} samples, untraceable {orphans}, untraceable mixed {mixed_orphans}; run {:.1?} (< 10 min)",
            seq.join(" "),
            samples.len(),
            elapsed
        ),
    )
}

fn c7_formulations(samples: &[TrainingSample]) -> Outcome {
    let kinds: BTreeSet<TaskKind> = samples.iter().map(|s| s.task_kind).collect();
    let bad_shape = samples.iter().filter(|s| !s.shape_ok()).count();
    let bad_trip = samples
        .iter()
        .filter(|s| {
            let text = serde_json::to_string(s).unwrap();
            let back: TrainingSample = serde_json::from_str(&text).unwrap();
            back != **s || serde_json::to_string(&back).unwrap() != text
        })
        .count();
    outcome(
        kinds.len() == 7 && bad_shape == 0 && bad_trip == 0,
        format!("{}/7 kinds emitted, shape violations {bad_shape}, round-trip mismatches {bad_trip}", kinds.len()),
    )
}

fn c8_mix(samples: &[TrainingSample]) -> Outcome {
    let mut worst: f64 = 0.0;
    let totals = [1000usize, 1001, 1234, 4999, 10_000, samples.len() * 10 / 7];
    for &total in &totals {
        let spec = MixSpec { total, seed: total as u64, ..MixSpec::default() };
        let [_, ng, nu] = spec.counts();
        let general = placeholder_pool(Source::General, ng, 1);
        let grounding = placeholder_pool(Source::Grounding, nu, 2);
        let out = mix(samples, &general, &grounding, &spec).unwrap();
        let c = source_counts(&out);
        for (src, r) in [(Source::Dynamics, 0.7), (Source::General, 0.2), (Source::Grounding, 0.1)] {
            let f = c.get(&src).copied().unwrap_or(0) as f64 / out.len() as f64;
            worst = worst.max((f - r).abs());
        }
    }
    outcome(worst <= 0.01, format!("max |realized - target| = {worst:.5} over totals {totals:?} (<= 0.01)"))
}

fn rec(id: &str, gt: Action, bounds: Option<Bounds>, pred: &str, space: CoordSpace) -> EvalRecord {
    EvalRecord {
        item_id: id.into(),
        gt_action: gt,
        gt_target_node: bounds,
        gt_state: StateId(0),
        prediction_text: pred.into(),
        coord_space: space,
        screen: SCREEN,
    }
}

fn c9_em_tm() -> Outcome {
    use CoordSpace::{Absolute as Abs, Normalized1000 as Norm};
    let click = |x, y| Action::Click { x, y };
    let b = Some(Bounds { x: 90, y: 190, w: 30, h: 20 });
    // radius = 0.07 * hypot(256, 512) = 40.07 px
    let fixture = [
        (rec("bounds-hit", click(100, 200), b, "click 105 205", Abs), true, true),
        (rec("bounds-miss", click(100, 200), b, "click 150 300", Abs), false, true),
        (rec("radius-edge", click(100, 200), None, "click 140 200", Abs), true, true),
        (rec("radius-out", click(100, 200), None, "click 141 200", Abs), false, true),
        (rec("normalized", click(500, 500), None, "click 510 490", Norm), true, true),
        (
            rec("input-ws", Action::Input { x: 50, y: 60, text: "hello  world".into() }, None, "input 52 61  hello world ", Abs),
            true,
            true,
        ),
        (rec("input-case", Action::Input { x: 50, y: 60, text: "hello world".into() }, None, "input 50 60 Hello world", Abs), false, true),
        (
            rec("scroll-dir", Action::Scroll { x: 128, y: 256, direction: Direction::Down }, None, "scroll 10 10 down", Abs),
            true,
            true,
        ),
        (
            rec("scroll-wrong", Action::Scroll { x: 128, y: 256, direction: Direction::Down }, None, "scroll 128 256 up", Abs),
            false,
            true,
        ),
        (rec("kind-wrong", Action::Finish, None, "wait", Abs), false, false),
        (rec("cot", Action::Wait, None, "<think>done</think><sub_goal>pause</sub_goal><answer>wait</answer>", Abs), true, true),
        (rec("out-of-range", click(100, 200), None, "click 300 10", Abs), false, false),
    ];
    let cfg = ScoringConfig::default();
    let fixture_ok = fixture.iter().filter(|(r, em, tm)| {
        let s = score(r, &cfg);
        s.em == *em && s.tm == *tm
    });
    let fixture_hits = fixture_ok.count();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    for i in 0..10_000 {
        let space = if rng.gen() { Abs } else { Norm };
        let (xm, ym) = space.limits(SCREEN);
        let gt = random_action(&mut rng, xm, ym);
        let pred = match rng.gen_range(0..4) {
            0 => gt.to_string(),
            1 => random_action(&mut rng, xm, ym).to_string(),
            2 => format!("{} {}", gt.kind(), rng.gen_range(-50..1500)),
            _ => format!("<think>t</think><sub_goal>g</sub_goal><answer>{}</answer>", random_action(&mut rng, xm, ym)),
        };
        let bounds = rng.gen::<bool>().then(|| Bounds { x: rng.gen_range(0..200), y: rng.gen_range(0..400), w: 40, h: 40 });
        let s = score(&rec(&i.to_string(), gt, bounds, &pred, space), &cfg);
        if s.em && !s.tm {
            violations += 1;
        }
    }

    let mut max_err = [0i64; 2];
    for (k, dim) in [SCREEN.width, SCREEN.height].into_iter().enumerate() {
        for a in 0..=i64::from(dim) {
            let back = to_absolute(to_normalized(a, dim).unwrap(), dim).unwrap();
            max_err[k] = max_err[k].max((back - a).abs());
        }
    }
    let bound = |d: u32| i64::from(d.div_ceil(2000));
    let trip_ok = max_err[0] <= bound(SCREEN.width) && max_err[1] <= bound(SCREEN.height);
    outcome(
        fixture_hits == 12 && violations == 0 && trip_ok,
        format!(
            "fixture {fixture_hits}/12 exact, em > tm in {violations}/10000 fuzzed records, round-trip max error x={} y={} px (<= {}, {})",
            max_err[0],
            max_err[1],
            bound(SCREEN.width),
            bound(SCREEN.height)
        ),
    )
}

fn random_action(rng: &mut ChaCha8Rng, xm: i64, ym: i64) -> Action {
    let (x, y) = (rng.gen_range(0..=xm), rng.gen_range(0..=ym));
    match rng.gen_range(0..5) {
        0 => Action::Click { x, y },
        1 => Action::Input { x, y, text: ["a", "b c", "hello"][rng.gen_range(0..3)].into() },
        2 => Action::Scroll { x, y, direction: Direction::ALL[rng.gen_range(0..4)] },
        3 => Action::Finish,
        _ => Action::Wait,
    }
}

fn c10_l2_soundness(graphs: &GraphSet) -> Outcome {
    let (mut n, mut ok) = (0, 0);
    for g in graphs.graphs() {
        let available = candidate_paths(g, Level::L2).len();
        for task in [ProbeTask::Forward, ProbeTask::Inverse] {
            for item in build_generalization_items(g, Level::L2, task, available.min(500), 10).unwrap() {
                n += 1;
                let mut s = item.path[0];
                let mut moved = true;
                for a in &item.actions {
                    match g.step(s, a).unwrap() {
                        StepOutcome::Moved { next, .. } => s = next,
                        StepOutcome::NoOp => moved = false,
                    }
                }
                if moved && item.actions.len() == 2 && s == item.target_state {
                    ok += 1;
                }
            }
        }
    }
    outcome(n > 0 && ok == n, format!("{ok}/{n} L2 items replay to their target in two steps"))
}

fn c11_determinism(reference: &Pipeline) -> Outcome {
    let manifests = |p: &Pipeline| -> Vec<Vec<u8>> {
        Stage::ALL.iter().map(|&s| std::fs::read(p.manifest_path(s)).unwrap()).collect()
    };
    let want = manifests(reference);
    let mut runs = 0;
    let mut identical = 0;
    for workers in [1, 8, 1, 8] {
        let (_dir, p, _) = run_demo(workers);
        runs += 1;
        if manifests(&p) == want {
            identical += 1;
        }
    }
    let corpus = reference.read_manifest(Stage::Mix).unwrap();
    let digest = guidyn::hashing::sha256_hex(
        corpus.files.iter().map(|f| f.sha256.as_str()).collect::<Vec<_>>().join("").as_bytes(),
    );
    outcome(
        identical == runs,
        format!(
            "{identical}/{runs} extra runs (workers 1, 8, 1, 8) byte-identical across {} manifests; corpus digest {}",
            want.len(),
            &digest[..16]
        ),
    )
}

fn c12_judge() -> Outcome {
    let v = |s: &str| format!("<reason>r</reason><score>{s}</score>");
    use JudgeKind::{Forward as F, Inverse as I};
    let mut cases: Vec<(String, JudgeKind, Option<f64>)> = Vec::new();
    for (s, x) in [("0", 0.0), ("0.2", 0.2), ("0.4", 0.4), ("0.6", 0.6), ("0.8", 0.8), ("1", 1.0), ("1.0", 1.0), ("0.0", 0.0), (" 0.6 ", 0.6)] {
        cases.push((v(s), F, Some(x)));
    }
    for (s, x) in [("0", 0.0), ("1", 1.0), ("1.0", 1.0), ("0.0", 0.0), (" 1 ", 1.0)] {
        cases.push((v(s), I, Some(x)));
    }
    for s in ["0.1", "0.3", "0.5", "0.7", "0.9", "1.2", "2", "-0.2", "-1", "0.25", "1.1", "abc", "", "0.", ".4", "1/5", "20%", "0.2.0", "NaN"] {
        cases.push((v(s), F, None));
    }
    for s in ["0.2", "0.4", "0.6", "0.8", "0.5", "2", "-1", "yes", ""] {
        cases.push((v(s), I, None));
    }
    for text in [
        "<score>1</score>",
        "<reason>r</reason>",
        "<reason>r</reason><score>1</score><score>0</score>",
        "reason: fine, score: 1",
        "<reason>r<score>1</score>",
        "<reason>r</reason><score>1",
        "",
        "<Reason>r</Reason><Score>1</Score>",
    ] {
        cases.push((text.to_string(), F, None));
    }
    let mut correct = 0;
    for (text, kind, want) in &cases {
        let got = parse_judge_verdict(text, *kind).ok().map(|v| v.score);
        let same = match (got, want) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-12,
            (None, None) => true,
            _ => false,
        };
        if same {
            correct += 1;
        } else {
            eprintln!("    judge case {text:?} ({kind:?}): got {got:?}, want {want:?}");
        }
    }
    outcome(
        correct == cases.len() && cases.len() == 50,
        format!("{correct}/{} fixture cases classified as expected", cases.len()),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n, name, o: Outcome| {
        println!("C{n:<2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    record(1, "structural dedup vs exact oracle", c1_structural_oracle());
    record(2, "MinHash accuracy", c2_minhash_accuracy());
    record(3, "visual dedup vs Hamming oracle", c3_visual_oracle());

    let (demo_dir, demo, elapsed) = run_demo(0);
    let graphs = demo.graphs().unwrap();
    let raw = {
        let m = demo.read_manifest(Stage::Explore).unwrap();
        RawCorpus::read(&demo.stage_dir(Stage::Explore), &m.files, &Executor::default()).unwrap().to_vec()
    };
    record(4, "static-transition removal", c4_static_removal(&graphs, &raw));
    record(5, "semantic filter fidelity", c5_semantic_fidelity(&graphs, &raw));
    record(6, "funnel monotonicity and provenance", c6_funnel(&demo, elapsed));
    let samples = demo.samples().unwrap();
    record(7, "formulation coverage", c7_formulations(&samples));
    record(8, "mix ratios", c8_mix(&samples));
    record(9, "EM/TM correctness", c9_em_tm());
    record(10, "L2 soundness", c10_l2_soundness(&graphs));
    record(11, "determinism", c11_determinism(&demo));
    record(12, "judge protocol", c12_judge());
    drop(demo_dir);

    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
