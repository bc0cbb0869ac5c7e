use proptest::prelude::*;
use structura_core::align::{chord_cost, dtw_align, AlignParams};
use structura_core::chordify::{chordify, group_chords, normalize_onsets, Chord, ChordSequence, ChordifyParams, PitchClassSet};
use structura_core::cluster::{cut, linkage, LinkageMethod};
use structura_core::features::{combine, min_max_normalize, pair_features, FeatureMatrices, FeatureWeights};
use structura_core::matrix::DistanceMatrix;
use structura_core::metrics::LabeledPartition;
use structura_core::model::{Note, Transcription};

fn chord_strategy() -> impl Strategy<Value = Chord> {
    (1u16..4096, 0.0f64..=1.0).prop_map(|(bits, t)| Chord {
        pitch_classes: PitchClassSet::from_classes((0u8..12).filter(|pc| bits & (1 << pc) != 0)).unwrap(),
        onset_norm: t,
        onset_raw: t,
        note_count: 1,
    })
}

fn sequence(max: usize) -> impl Strategy<Value = Vec<Chord>> {
    prop::collection::vec(chord_strategy(), 1..=max)
}

fn transcription() -> impl Strategy<Value = Transcription> {
    prop::collection::vec((0.0f64..20.0, 21u8..109), 1..60).prop_map(|raw| {
        let notes = raw.into_iter().map(|(t, p)| Note::new(t, p, 0.2, 64)).collect();
        Transcription::new("t", notes).unwrap()
    })
}

fn symmetric_matrix(n: usize) -> impl Strategy<Value = DistanceMatrix> {
    prop::collection::vec(0.0f64..10.0, n * (n - 1) / 2).prop_map(move |vals| {
        let mut m = DistanceMatrix::zeros(n);
        let mut it = vals.into_iter();
        for i in 0..n {
            for j in i + 1..n {
                m.set_sym(i, j, it.next().unwrap());
            }
        }
        m
    })
}

fn path_cost(a: &[Chord], b: &[Chord], path: &[(usize, usize)], p: &AlignParams) -> f64 {
    path.iter().map(|&(i, j)| chord_cost(&a[i], &b[j], p)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dtw_path_shape(a in sequence(12), b in sequence(12), alpha in 0.0f64..=1.0) {
        let p = AlignParams::new(alpha).unwrap();
        let r = dtw_align(&a, &b, &p).unwrap();
        let path = r.path.as_ref().unwrap();
        let (rows, cols) = (a.len(), b.len());
        prop_assert_eq!(path[0], (0, 0));
        prop_assert_eq!(*path.last().unwrap(), (rows - 1, cols - 1));
        for w in path.windows(2) {
            let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            prop_assert!(matches!(step, (1, 0) | (0, 1) | (1, 1)));
        }
        prop_assert!(path.len() >= rows.max(cols));
        prop_assert!(path.len() < rows + cols);
        prop_assert!((path_cost(&a, &b, path, &p) - r.cumulative_cost).abs() < 1e-9);
        prop_assert!(r.cumulative_cost >= 0.0);
        prop_assert!(r.cumulative_cost <= path.len() as f64);
    }

    #[test]
    fn dtw_symmetry(a in sequence(10), b in sequence(10), alpha in 0.0f64..=1.0) {
        let p = AlignParams::new(alpha).unwrap();
        let ab = dtw_align(&a, &b, &p).unwrap();
        let ba = dtw_align(&b, &a, &p).unwrap();
        prop_assert_eq!(ab.cumulative_cost, ba.cumulative_cost);
        // The transposed path is an optimal path of the swapped pair.
        let t = ab.transposed();
        let tp = t.path.as_ref().unwrap();
        prop_assert!((path_cost(&b, &a, tp, &p) - ba.cumulative_cost).abs() < 1e-9);
        prop_assert_eq!(pair_features(&ab).unwrap(), pair_features(&ba).unwrap());
    }

    #[test]
    fn dtw_identity(a in sequence(15), alpha in 0.0f64..=1.0) {
        let r = dtw_align(&a, &a, &AlignParams::new(alpha).unwrap()).unwrap();
        prop_assert_eq!(r.cumulative_cost, 0.0);
        let diag: Vec<_> = (0..a.len()).map(|k| (k, k)).collect();
        prop_assert_eq!(r.path.as_ref().unwrap(), &diag);
        let f = pair_features(&r).unwrap();
        prop_assert_eq!((f.cost, f.warp_opt, f.warp_mean, f.len), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn warp_opt_zero_iff_shortest_path(a in sequence(9), b in sequence(9)) {
        let r = dtw_align(&a, &b, &AlignParams::default()).unwrap();
        let f = pair_features(&r).unwrap();
        let shortest = r.path.as_ref().unwrap().len() == a.len().max(b.len());
        prop_assert_eq!(f.warp_opt == 0.0, shortest);
        prop_assert!(f.len >= 0.0 && f.len < 1.0);
        prop_assert!(f.cost >= 0.0 && f.cost <= 1.0);
    }

    #[test]
    fn chordify_partitions_notes(t in transcription(), ioi in 0.01f64..0.2, extra in 0.0f64..0.5) {
        let p = ChordifyParams::new(ioi, ioi + extra).unwrap();
        let groups = group_chords(t.notes(), &p);
        let mut next = 0;
        for g in &groups {
            prop_assert_eq!(g.start, next);
            prop_assert!(g.end > g.start);
            next = g.end;
        }
        prop_assert_eq!(next, t.len());

        let cs = chordify(&t, &p);
        prop_assert_eq!(cs.chords.iter().map(|c| c.note_count).sum::<usize>(), t.len());
        for w in cs.chords.windows(2) {
            prop_assert!(w[0].onset_raw <= w[1].onset_raw);
            prop_assert!(w[0].onset_norm <= w[1].onset_norm);
        }
        for c in &cs.chords {
            prop_assert!(!c.pitch_classes.is_empty());
            prop_assert!((0.0..=1.0).contains(&c.onset_norm));
        }
        if cs.len() >= 2 && cs.chords[0].onset_raw < cs.chords[cs.len() - 1].onset_raw {
            prop_assert_eq!(cs.chords[0].onset_norm, 0.0);
            prop_assert_eq!(cs.chords[cs.len() - 1].onset_norm, 1.0);
        }
    }

    #[test]
    fn chordify_scale_invariance(
        raw in prop::collection::vec((0u32..400, 21u8..109), 1..40),
        k in prop::sample::select(vec![0.5f64, 2.0, 4.0, 0.25]),
    ) {
        // Onsets on a 1/64 s grid and power-of-two factors keep the scaling exact.
        let make = |scale: f64| {
            let notes = raw.iter().map(|&(t, p)| Note::new(f64::from(t) / 64.0 * scale, p, 0.1, 64)).collect();
            Transcription::new("t", notes).unwrap()
        };
        let p = ChordifyParams::new(0.0625, 0.25).unwrap();
        let pk = ChordifyParams::new(0.0625 * k, 0.25 * k).unwrap();
        let a = chordify(&make(1.0), &p);
        let b = chordify(&make(k), &pk);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.chords.iter().zip(&b.chords) {
            prop_assert_eq!(x.pitch_classes, y.pitch_classes);
            prop_assert!((x.onset_norm - y.onset_norm).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_idempotent(t in transcription()) {
        let once = chordify(&t, &ChordifyParams::default());
        let reinterpreted = ChordSequence {
            chords: once.chords.iter().map(|c| Chord { onset_raw: c.onset_norm, ..*c }).collect(),
            ..once.clone()
        };
        let twice = normalize_onsets(reinterpreted);
        for (x, y) in once.chords.iter().zip(&twice.chords) {
            prop_assert!((x.onset_norm - y.onset_norm).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_linear_without_normalization(
        m in symmetric_matrix(5),
        scale in 0.1f64..10.0,
        w in prop::array::uniform4(0.0f64..1.0),
    ) {
        prop_assume!(w.iter().sum::<f64>() > 1e-3);
        let weights = FeatureWeights::from_array(w).unwrap();
        let ids: Vec<String> = (0..5).map(|k| k.to_string()).collect();
        let fm = |x: &DistanceMatrix| FeatureMatrices {
            ids: ids.clone(),
            cost: x.clone(),
            warp_opt: x.map(|v| v * 0.5),
            warp_mean: x.map(|v| v * v),
            len: x.map(|v| v / 3.0),
        };
        let base = fm(&m);
        let scaled = FeatureMatrices {
            ids: ids.clone(),
            cost: base.cost.map(|v| v * scale),
            warp_opt: base.warp_opt.map(|v| v * scale),
            warp_mean: base.warp_mean.map(|v| v * scale),
            len: base.len.map(|v| v * scale),
        };
        let lhs = combine(&scaled, &weights, false);
        let rhs = combine(&base, &weights, false).map(|v| v * scale);
        for i in 0..5 {
            for j in 0..5 {
                prop_assert!((lhs.get(i, j) - rhs.get(i, j)).abs() < 1e-9);
            }
        }
        prop_assert!(combine(&base, &weights, true).is_distance_matrix(0.0));
    }

    #[test]
    fn min_max_preserves_order(m in symmetric_matrix(6)) {
        let s = min_max_normalize(&m);
        let a: Vec<f64> = m.upper().collect();
        let b: Vec<f64> = s.upper().collect();
        for i in 0..a.len() {
            prop_assert!((0.0..=1.0).contains(&b[i]));
            for j in 0..a.len() {
                if a[i] < a[j] {
                    prop_assert!(b[i] <= b[j]);
                }
            }
        }
    }

    #[test]
    fn cluster_count_monotone_in_threshold(
        m in symmetric_matrix(7),
        method in prop::sample::select(LinkageMethod::ALL.to_vec()),
    ) {
        let d = linkage(&m, method).unwrap();
        prop_assert_eq!(d.merges().len(), 6);
        for w in d.merges().windows(2) {
            prop_assert!(w[0].height <= w[1].height + 1e-12);
        }
        prop_assert_eq!(cut(&d, f64::INFINITY).num_clusters, 1);
        let lowest = d.merges()[0].height;
        if lowest > 0.0 {
            prop_assert_eq!(cut(&d, lowest * 0.5).num_clusters, 7);
        }
        let mut last = usize::MAX;
        for k in 0..=40 {
            let a = cut(&d, f64::from(k) * 0.25);
            prop_assert!(a.num_clusters <= last);
            let mut labels = a.labels.clone();
            labels.sort_unstable();
            labels.dedup();
            prop_assert_eq!(labels, (0..a.num_clusters).collect::<Vec<_>>());
            last = a.num_clusters;
        }
    }

    #[test]
    fn single_linkage_equals_threshold_components(m in symmetric_matrix(8), t in 0.0f64..10.0) {
        let got = cut(&linkage(&m, LinkageMethod::Single).unwrap(), t);
        // Connected components of the graph with edges d <= t, by flood fill.
        let n = m.n();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = next;
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if comp[v] == usize::MAX && m.get(u, v) <= t {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        prop_assert_eq!(got.labels, comp);
    }

    #[test]
    fn clustering_permutation_invariant(
        m in symmetric_matrix(7),
        order in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle(),
        method in prop::sample::select(LinkageMethod::ALL.to_vec()),
        t in 0.0f64..10.0,
    ) {
        let a = cut(&linkage(&m, method).unwrap(), t);
        let b = cut(&linkage(&m.permuted(&order), method).unwrap(), t);
        // Same partition up to label renaming: compare co-membership.
        for x in 0..7 {
            for y in 0..7 {
                let same_a = a.labels[order[x]] == a.labels[order[y]];
                let same_b = b.labels[x] == b.labels[y];
                prop_assert_eq!(same_a, same_b);
            }
        }
    }

    #[test]
    fn metrics_label_permutation_invariance(
        pairs in prop::collection::vec((0u8..4, 0u8..5), 1..=12),
        shift in 1u8..10,
    ) {
        let truth: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let renamed: Vec<u8> = pred.iter().map(|&k| (k + shift) % 16 * 3).collect();
        let s = LabeledPartition::new(&truth, &pred).unwrap().scores();
        let r = LabeledPartition::new(&truth, &renamed).unwrap().scores();
        prop_assert_eq!(s, r);
        for x in [s.homogeneity, s.completeness, s.v_measure] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert!(s.v_measure <= s.homogeneity.max(s.completeness) + 1e-12);
        prop_assert!(s.v_measure >= s.homogeneity.min(s.completeness) - 1e-12);
    }
}
