use proptest::prelude::*;
use raddet::corpus::Label;
use raddet::metrics::{parse_scores, pooled_eer, render_scores, ScoreRecord};

fn records(bona: &[f64], spoof: &[f64]) -> Vec<ScoreRecord> {
    let mut out: Vec<ScoreRecord> = bona
        .iter()
        .enumerate()
        .map(|(i, &s)| ScoreRecord::new(format!("b{i}"), s, Label::Bonafide))
        .collect();
    out.extend(
        spoof
            .iter()
            .enumerate()
            .map(|(i, &s)| ScoreRecord::new(format!("s{i}"), s, Label::Spoof)),
    );
    out
}

/// Brute-force reference: count each class against every candidate threshold,
/// then walk the (FAR, FRR) polyline until FAR − FRR turns non-positive.
fn oracle_eer(bona: &[f64], spoof: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let far = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
            let frr = bona.iter().filter(|&&s| s < t).count() as f64 / bona.len() as f64;
            (far, frr)
        })
        .collect();
    curve.push((0.0, 1.0));
    for w in 0..curve.len() {
        let (far, frr) = curve[w];
        if far <= frr {
            if w == 0 || far == frr {
                return far;
            }
            let (pf, pr) = curve[w - 1];
            // FAR - FRR is linear along the segment; solve for its zero
            let a = pf - pr;
            let b = far - frr;
            return pf + (far - pf) * a / (a - b);
        }
    }
    unreachable!()
}

fn scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    // a coarse grid makes ties common
    let grid = (-20i32..20).prop_map(|v| v as f64 / 4.0);
    (
        prop::collection::vec(grid.clone(), 1..25),
        prop::collection::vec(grid, 1..25),
    )
}

#[test]
fn worked_example_matches_oracle() {
    let bona = [0.9, 0.8, 0.3];
    let spoof = [0.7, 0.2, 0.1];
    assert_eq!(oracle_eer(&bona, &spoof), 1.0 / 3.0);
    let got = pooled_eer(&records(&bona, &spoof)).unwrap();
    assert_eq!(got.eer, 1.0 / 3.0);
    assert_eq!(got.threshold, 0.7);
}

proptest! {
    #[test]
    fn agrees_with_the_oracle((bona, spoof) in scores()) {
        let got = pooled_eer(&records(&bona, &spoof)).unwrap().eer;
        prop_assert!((got - oracle_eer(&bona, &spoof)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn strictly_increasing_transform_is_invisible((bona, spoof) in scores()) {
        let f = |v: &f64| (v * 0.7).exp() * 3.0 - 11.0;
        let base = pooled_eer(&records(&bona, &spoof)).unwrap().eer;
        let bt: Vec<f64> = bona.iter().map(f).collect();
        let st: Vec<f64> = spoof.iter().map(f).collect();
        prop_assert_eq!(pooled_eer(&records(&bt, &st)).unwrap().eer, base);
    }

    #[test]
    fn duplicating_every_trial_changes_nothing((bona, spoof) in scores()) {
        let base = pooled_eer(&records(&bona, &spoof)).unwrap().eer;
        let twice = |v: &[f64]| v.iter().chain(v).copied().collect::<Vec<_>>();
        prop_assert_eq!(pooled_eer(&records(&twice(&bona), &twice(&spoof))).unwrap().eer, base);
    }

    #[test]
    fn negating_and_swapping_labels_keeps_the_eer(
        raw in prop::collection::hash_set(-10_000i32..10_000, 2..40),
        split in 1usize..39,
    ) {
        let all: Vec<f64> = raw.into_iter().map(|v| v as f64 / 100.0).collect();
        let split = split.min(all.len() - 1);
        let (bona, spoof) = all.split_at(split);
        let base = pooled_eer(&records(bona, spoof)).unwrap().eer;
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let flipped = pooled_eer(&records(&neg(spoof), &neg(bona))).unwrap().eer;
        prop_assert!((base - flipped).abs() < 1e-12, "{base} vs {flipped}");
    }

    #[test]
    fn score_files_roundtrip((bona, spoof) in scores(), jitter in -1e3f64..1e3) {
        let recs: Vec<ScoreRecord> = records(&bona, &spoof)
            .into_iter()
            .map(|mut r| { r.score = r.score * jitter + 1e-7; r })
            .collect();
        let text = render_scores(&recs);
        let back = parse_scores(&text, "mem").unwrap();
        prop_assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            prop_assert_eq!(&a.utt_id, &b.utt_id);
            prop_assert_eq!(a.label, b.label);
            prop_assert!((a.score - b.score).abs() <= a.score.abs() * 1e-8);
        }
        prop_assert_eq!(render_scores(&back), text);
    }
}
