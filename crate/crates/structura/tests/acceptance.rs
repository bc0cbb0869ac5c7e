//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use structura::synth::{builtin_template, generate_corpus, BUILTIN_TEMPLATES};
use structura_core::align::{dtw_align, dtw_cost, AlignParams};
use structura_core::chordify::{chordify, normalize_onsets, Chord, ChordSequence, ChordifyParams, PitchClassSet};
use structura_core::features::{build_matrices, pair_features};
use structura_core::metrics::{LabeledPartition, Scores};
use structura_core::model::Corpus;
use structura_core::rng::SplitMix64;
use structura_core::synth::{random_template, synth_corpus, variant, ArtifactModel, CorpusSpec, PieceSpec, TemplateShape};
use structura_core::tune::{evaluate_params, grid_search, ParamGrid, PipelineConfig, PipelineParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

// ---------------------------------------------------------------- corpora

const SEED: u64 = 2024;

fn builtin_spec(artifacts: ArtifactModel) -> CorpusSpec {
    CorpusSpec {
        pieces: BUILTIN_TEMPLATES
            .iter()
            .map(|(name, _)| PieceSpec {
                template: builtin_template(name).unwrap(),
                performances_per_variant: 4,
                holdout: false,
            })
            .collect(),
        artifacts,
    }
}

fn noisy_artifacts(seed: u64) -> ArtifactModel {
    ArtifactModel {
        p_miss: 0.02,
        p_insert: 0.01,
        onset_jitter_sd: 0.01,
        tempo_range: (0.85, 1.15),
        seed,
    }
}

fn clean_corpus() -> Corpus {
    synth_corpus(&builtin_spec(ArtifactModel::noise_free(SEED))).unwrap()
}

fn noisy_corpus(seed: u64) -> Corpus {
    synth_corpus(&builtin_spec(noisy_artifacts(seed))).unwrap()
}

/// Randomly generated templates with heavier artifacts, to exercise the
/// invariants away from the built-in material.
fn random_corpus(seed: u64) -> Corpus {
    let pieces = (0..4)
        .map(|k| PieceSpec {
            template: random_template(
                &format!("random{k}"),
                &TemplateShape {
                    sections: 3,
                    events_per_section: 6 + 2 * k,
                    bpm: 80.0 + 15.0 * k as f64,
                },
                vec![variant("ABC"), variant("AABC"), variant("ABCB")],
                seed + k as u64,
            ),
            performances_per_variant: 2,
            holdout: false,
        })
        .collect();
    let artifacts = ArtifactModel {
        p_miss: 0.1,
        p_insert: 0.1,
        onset_jitter_sd: 0.03,
        tempo_range: (0.7, 1.3),
        seed,
    };
    synth_corpus(&CorpusSpec { pieces, artifacts }).unwrap()
}

// ------------------------------------------------------------ DTW oracle

fn random_sequence(rng: &mut SplitMix64, len: usize) -> Vec<Chord> {
    let mut onsets: Vec<f64> = (0..len).map(|_| rng.next_f64() * 10.0).collect();
    onsets.sort_by(f64::total_cmp);
    let chords = onsets
        .into_iter()
        .map(|t| {
            let bits = rng.range_inclusive(0, 0x0FFF) as u8;
            let size = rng.range_inclusive(1, 4);
            let classes = (0..size).map(|k| ((u32::from(bits) + k * rng.range_inclusive(1, 11)) % 12) as u8);
            Chord {
                pitch_classes: PitchClassSet::from_classes(classes).unwrap(),
                onset_norm: 0.0,
                onset_raw: t,
                note_count: 1,
            }
        })
        .collect();
    normalize_onsets(ChordSequence {
        transcription_id: String::new(),
        chords,
        params: ChordifyParams::default(),
    })
    .chords
}

/// Local cost recomputed from first principles on raw bitmasks.
fn oracle_local(a: &Chord, b: &Chord, alpha: f64) -> f64 {
    let (x, y) = (a.pitch_classes.bits(), b.pitch_classes.bits());
    let union = (x | y).count_ones();
    let jaccard = if union == 0 {
        0.0
    } else {
        1.0 - f64::from((x & y).count_ones()) / f64::from(union)
    };
    alpha * jaccard + (1.0 - alpha) * (a.onset_norm - b.onset_norm).abs()
}

/// Every monotone path from (0, 0) to (I-1, J-1), materialised.
fn all_paths(i_len: usize, j_len: usize) -> Vec<Vec<(usize, usize)>> {
    fn extend(
        path: &mut Vec<(usize, usize)>,
        i_len: usize,
        j_len: usize,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        let (i, j) = *path.last().unwrap();
        if i + 1 == i_len && j + 1 == j_len {
            out.push(path.clone());
            return;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            if i + di < i_len && j + dj < j_len {
                path.push((i + di, j + dj));
                extend(path, i_len, j_len, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut vec![(0, 0)], i_len, j_len, &mut out);
    out
}

fn dtw_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xD7);
    let mut worst = 0.0f64;
    let mut path_mismatch = 0;
    let mut path_cache: BTreeMap<(usize, usize), Vec<Vec<(usize, usize)>>> = BTreeMap::new();
    for _ in 0..200 {
        let (li, lj) = (rng.range_inclusive(1, 7) as usize, rng.range_inclusive(1, 7) as usize);
        let (ci, cj) = (random_sequence(&mut rng, li), random_sequence(&mut rng, lj));
        let alpha = rng.next_f64();
        let params = AlignParams::new(alpha).unwrap();
        let paths = path_cache.entry((li, lj)).or_insert_with(|| all_paths(li, lj));
        let brute = paths
            .iter()
            .map(|p| p.iter().map(|&(i, j)| oracle_local(&ci[i], &cj[j], alpha)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let dp = dtw_align(&ci, &cj, &params).unwrap();
        let cost_only = dtw_cost(&ci, &cj, &params).unwrap();
        worst = worst
            .max((dp.cumulative_cost - brute).abs())
            .max((cost_only - brute).abs());
        let path = dp.path.unwrap();
        let along: f64 = path.iter().map(|&(i, j)| oracle_local(&ci[i], &cj[j], alpha)).sum();
        if !paths.contains(&path) || (along - brute).abs() > 1e-9 {
            path_mismatch += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && path_mismatch == 0 && elapsed < Duration::from_secs(10),
        format!(
            "200 pairs (lengths 1..=7): max |DP - exhaustive| = {worst:.1e} (tol 1e-9), \
             {path_mismatch} invalid/suboptimal paths, {} (limit 10 s)",
            secs(elapsed)
        ),
    )
}

// -------------------------------------------------------- metrics oracle

/// Entropies in bits via joint and marginal distributions:
/// H(C|K) = H(C,K) - H(K).
fn oracle_scores(truth: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let n = truth.len() as f64;
    let entropy = |counts: &BTreeMap<Vec<usize>, usize>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    };
    let count = |key: &dyn Fn(usize) -> Vec<usize>| {
        let mut m = BTreeMap::new();
        for k in 0..truth.len() {
            *m.entry(key(k)).or_insert(0) += 1;
        }
        m
    };
    let h_c = entropy(&count(&|k| vec![truth[k]]));
    let h_k = entropy(&count(&|k| vec![pred[k]]));
    let h_ck = entropy(&count(&|k| vec![truth[k], pred[k]]));
    let h = if h_c == 0.0 { 1.0 } else { 1.0 - (h_ck - h_k) / h_c };
    let c = if h_k == 0.0 { 1.0 } else { 1.0 - (h_ck - h_c) / h_k };
    let v = if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) };
    (h, c, v)
}

fn metrics_oracle() -> Outcome {
    let mut rng = SplitMix64::new(0x3E7);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.range_inclusive(1, 12) as usize;
        let classes = rng.range_inclusive(1, 5);
        let clusters = rng.range_inclusive(1, 6);
        let truth: Vec<usize> = (0..n).map(|_| rng.range_inclusive(0, classes - 1) as usize).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.range_inclusive(0, clusters - 1) as usize).collect();
        let s = LabeledPartition::new(&truth, &pred).unwrap().scores();
        let (h, c, v) = oracle_scores(&truth, &pred);
        worst = worst
            .max((s.homogeneity - h).abs())
            .max((s.completeness - c).abs())
            .max((s.v_measure - v).abs());
    }
    let hand = LabeledPartition::new(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap().scores();
    let hand_err = (hand.homogeneity - 1.0)
        .abs()
        .max((hand.completeness - 2.0 / 3.0).abs())
        .max((hand.v_measure - 0.8).abs());
    outcome(
        worst <= 1e-9 && hand_err <= 1e-9,
        format!(
            "500 partitions (n <= 12): max deviation {worst:.1e}; [0,0,1,1] vs [0,0,1,2] -> \
             ({:.4}, {:.4}, {:.4}), error {hand_err:.1e} (tol 1e-9)",
            hand.homogeneity, hand.completeness, hand.v_measure
        ),
    )
}

// ------------------------------------------------------ planted structure

fn fmt_scores(s: &Scores) -> String {
    format!("h {:.4} c {:.4} V {:.4}", s.homogeneity, s.completeness, s.v_measure)
}

fn clean_recovery() -> Outcome {
    let start = Instant::now();
    let result = single_threaded(|| {
        let corpus = clean_corpus();
        let config = PipelineConfig::default();
        let default = evaluate_params(&corpus, &config, &PipelineParams::default()).unwrap();
        if default.mean.homogeneity == 1.0 && default.mean.v_measure == 1.0 {
            return (corpus.num_transcriptions(), "default", default.mean);
        }
        let tuned = grid_search(&corpus, &config, &ParamGrid::default()).unwrap();
        let e = evaluate_params(&corpus, &config, &tuned.best_params).unwrap();
        (corpus.num_transcriptions(), "tuned", e.mean)
    });
    let elapsed = start.elapsed();
    let (n, which, s) = result;
    outcome(
        s.homogeneity == 1.0 && s.v_measure == 1.0 && elapsed < Duration::from_secs(60),
        format!(
            "5 pieces, {n} performances, {which} parameters: {}, {} single-threaded (limit 60 s)",
            fmt_scores(&s),
            secs(elapsed)
        ),
    )
}

fn noisy_recovery() -> Outcome {
    let start = Instant::now();
    let corpus = noisy_corpus(SEED);
    let mut lines = Vec::new();
    let mut worst = 1.0f64;
    // Every piece takes a turn as the held-out piece.
    for (held, _) in BUILTIN_TEMPLATES {
        let (train, test) = corpus.clone().with_holdout([held]).split_holdout();
        let tuned = grid_search(&train, &PipelineConfig::default(), &ParamGrid::default()).unwrap();
        let e = evaluate_params(&test, &PipelineConfig::default(), &tuned.best_params).unwrap();
        worst = worst.min(e.mean.homogeneity);
        lines.push(format!("{held} h={:.4}", e.mean.homogeneity));
    }
    let elapsed = start.elapsed();
    outcome(
        worst >= 0.95 && elapsed < Duration::from_secs(600),
        format!(
            "default grid ({} points), each piece held out in turn: {}; min held-out h {worst:.4} \
             (need >= 0.95), {} (limit 600 s)",
            ParamGrid::default().len(),
            lines.join(", "),
            secs(elapsed)
        ),
    )
}

fn weight_finding() -> Outcome {
    let corpus = noisy_corpus(SEED);
    let result = grid_search(&corpus, &PipelineConfig::default(), &ParamGrid::default()).unwrap();
    let w = result.best_params.weights;
    let lhs = w.cost() + w.warp_opt();
    let rhs = w.warp_mean() + w.len();
    let top = result.leaderboard[0].mean;
    let tied: Vec<_> = result
        .leaderboard
        .iter()
        .filter(|e| e.mean.homogeneity == top.homogeneity)
        .collect();
    let tied_ok = tied
        .iter()
        .filter(|e| {
            let w = e.params.weights;
            w.cost() + w.warp_opt() >= w.warp_mean() + w.len()
        })
        .count();
    outcome(
        lhs >= rhs,
        format!(
            "best weights (cost, warp_opt, warp_mean, len) = {:?}: {lhs:.2} >= {rhs:.2} required; \
             best h {:.4}; {} grid points share that h, {tied_ok} of them satisfy the inequality",
            w.as_array(),
            top.homogeneity,
            tied.len()
        ),
    )
}

// --------------------------------------------------------------- invariants

fn matrix_invariants() -> Outcome {
    let corpora = [
        ("clean", clean_corpus()),
        ("noisy", noisy_corpus(SEED)),
        ("random", random_corpus(SEED)),
    ];
    let mut checked = 0;
    let mut violations = Vec::new();
    for (name, corpus) in &corpora {
        for alpha in ParamGrid::default().alpha_candidates {
            let params = AlignParams::new(alpha).unwrap();
            for (piece, ts) in corpus.pieces() {
                let seqs: Vec<_> = ts.iter().map(|t| chordify(t, &ChordifyParams::default())).collect();
                let m = build_matrices(&seqs, &params).unwrap();
                for (feature, mat) in ["cost", "warp_opt", "warp_mean", "len"].iter().zip(m.matrices()) {
                    checked += 1;
                    let n = mat.n();
                    let mut ok = true;
                    for i in 0..n {
                        ok &= mat[(i, i)] == 0.0;
                        for j in 0..n {
                            ok &= (mat[(i, j)] - mat[(j, i)]).abs() <= 1e-9 && mat[(i, j)] >= 0.0;
                        }
                    }
                    if !ok {
                        violations.push(format!("{name}/{piece}/{feature}/alpha={alpha}"));
                    }
                }
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "{checked} matrices over clean, noisy and random corpora at every grid alpha: \
             {} violations{}",
            violations.len(),
            if violations.is_empty() {
                String::new()
            } else {
                format!(" ({})", violations.join(", "))
            }
        ),
    )
}

fn self_alignment() -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for corpus in [clean_corpus(), noisy_corpus(SEED), random_corpus(SEED)] {
        for t in corpus.pieces().values().flatten() {
            let cs = chordify(t, &ChordifyParams::default());
            for alpha in [0.0, 0.5, 1.0] {
                let a = dtw_align(&cs.chords, &cs.chords, &AlignParams::new(alpha).unwrap()).unwrap();
                let f = pair_features(&a).unwrap();
                checked += 1;
                worst = [a.cumulative_cost, f.cost, f.warp_opt, f.warp_mean, f.len]
                    .into_iter()
                    .fold(worst, |w, x| w.max(x.abs()));
            }
        }
    }
    outcome(
        worst == 0.0,
        format!("{checked} self-alignments: largest cost or feature value {worst:e} (must be 0)"),
    )
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(&builtin_spec(noisy_artifacts(SEED)), &dir.path().join("corpus")).unwrap();
    let manifest = dir.path().join("corpus/manifest.json");
    let run = |threads: &str| {
        let out = dir.path().join(format!("out{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_structura"))
            .args(["cluster", "--manifest"])
            .arg(&manifest)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .env("RUST_LOG", "error")
            .status()
            .unwrap();
        (status.code(), read_tree(&out))
    };
    let (code1, one) = run("1");
    let (code8, eight) = run("8");
    let differing: Vec<&String> = one
        .keys()
        .chain(eight.keys())
        .filter(|k| one.get(*k) != eight.get(*k))
        .collect();
    outcome(
        code1 == Some(0) && code8 == Some(0) && differing.is_empty() && !one.is_empty(),
        format!(
            "cluster with 1 and 8 threads: exit codes {code1:?}/{code8:?}, {} files compared, {} differ",
            one.len(),
            differing.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("dtw_oracle_equivalence", dtw_oracle),
        ("metrics_oracle", metrics_oracle),
        ("planted_structure_clean", clean_recovery),
        ("planted_structure_noisy", noisy_recovery),
        ("qualitative_weight_finding", weight_finding),
        ("matrix_invariants", matrix_invariants),
        ("determinism_across_threads", determinism),
        ("self_alignment", self_alignment),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
