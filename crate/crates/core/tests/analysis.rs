mod oracles;

use proptest::prelude::*;
use tsi_core::analysis::{
    clamped_histogram, grouped_tsi_table, masking_comparison, pearson, GroupBin, MaskingInput, ScoreSource, TsiSample,
};
use tsi_core::dataset::{coverage_bin, SubsetLabel};
use tsi_core::grid::build_grid;
use tsi_core::influence::{compute_influence_map, top_n_tokens, InfluenceMap, ScoreKind};
use tsi_core::metrics::{Metric, TsiScores, TsiValue};
use tsi_core::model::{planted_predictor, ImageBuffer};
use tsi_core::tokenize;

fn value() -> impl Strategy<Value = TsiValue> {
    prop_oneof![
        8 => (0.0f64..3.0).prop_map(TsiValue::Finite),
        1 => Just(TsiValue::Infinite),
        1 => Just(TsiValue::Undefined),
    ]
}

fn subset() -> impl Strategy<Value = SubsetLabel> {
    prop_oneof![
        Just(SubsetLabel::Large),
        Just(SubsetLabel::Correct),
        Just(SubsetLabel::Incorrect)
    ]
}

fn samples() -> impl Strategy<Value = Vec<TsiSample>> {
    let one = (0usize..2, subset(), 1usize..=196, value(), value(), 0.0f64..=1.0);
    prop::collection::vec(one, 1..60).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (model, subset, coverage, a, m, confidence))| TsiSample {
                image_id: format!("img-{i:03}"),
                model_id: format!("m{model}"),
                kind: ScoreKind::Influence,
                region: "bbox".into(),
                class_label: format!("c{}", i % 4),
                subset,
                coverage,
                confidence,
                scores: TsiScores { a_tsi: a, m_tsi: m },
            })
            .collect()
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn grouped_table_matches_regroup(samples in samples()) {
        let table = grouped_tsi_table(&samples, &Metric::ALL);
        let mut items = Vec::new();
        for s in samples.iter().filter(|s| s.subset != SubsetLabel::Large) {
            for metric in Metric::ALL {
                let v = s.scores.get(metric).finite();
                items.push(((metric, s.model_id.clone(), s.subset, GroupBin::All), v));
                if let Ok(bin) = coverage_bin(s.coverage) {
                    items.push(((metric, s.model_id.clone(), s.subset, GroupBin::Coverage(bin)), v));
                }
            }
        }
        let want = oracles::regroup(&items);
        prop_assert_eq!(table.rows.len(), want.len());
        for row in &table.rows {
            let k = &row.key;
            let (n, mean, std) = want[&(k.metric, k.model_id.clone(), k.subset, k.bin)];
            prop_assert_eq!(row.n, n);
            prop_assert!(close(row.mean, mean) && close(row.std, std));
        }
        // every non-finite value is tallied exactly once per group
        let tallied: usize = table.non_finite.iter().map(|t| t.infinite + t.undefined).sum();
        let expected = items.iter().filter(|(_, v)| v.is_none()).count();
        prop_assert_eq!(tallied, expected);
    }

    #[test]
    fn histogram_matches_scan_and_conserves(values in prop::collection::vec(value(), 0..200), bins in 1usize..40) {
        let bw = 0.05;
        let clamp = bins as f64 * bw;
        let h = clamped_histogram(&values, bw, clamp).unwrap();
        let (counts, overflow, undefined) = oracles::histogram(&values, bw, clamp);
        prop_assert_eq!(&h.counts, &counts);
        prop_assert_eq!((h.overflow, h.undefined), (overflow, undefined));
        prop_assert_eq!(h.total(), values.len());
    }

    #[test]
    fn pearson_matches_regression(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..100)) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (r, r2) = oracles::regression_r(&xs, &ys);
        let got = pearson(&xs, &ys).unwrap();
        prop_assert!((got.pearson_r - r).abs() < 1e-12, "{} vs {r}", got.pearson_r);
        prop_assert!((got.r_squared - r2).abs() < 1e-12);
    }

    #[test]
    fn exact_linear_relation_gives_unit_r(xs in prop::collection::vec(-10.0f64..10.0, 3..50), a in 0.5f64..4.0, b in -3.0f64..3.0, neg in any::<bool>()) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        let a = if neg { -a } else { a };
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let r = pearson(&xs, &ys).unwrap().pearson_r;
        prop_assert!((r - a.signum()).abs() < 1e-12);
    }

    #[test]
    fn top_n_is_a_prefix(scores in prop::collection::vec(prop_oneof![Just(0.5), 0.0f64..1.0], 1..50)) {
        let map = InfluenceMap {
            image_id: "i".into(),
            model_id: "m".into(),
            target_class: 0,
            base_confidence: 1.0,
            grid: build_grid(scores.len() as u32, 1, 1).unwrap(),
            scores: scores.clone(),
            kind: ScoreKind::Influence,
        };
        let all = top_n_tokens(&map, scores.len()).unwrap();
        for n in 1..=scores.len() {
            prop_assert_eq!(&top_n_tokens(&map, n).unwrap()[..], &all[..n]);
        }
        for w in all.windows(2) {
            prop_assert!(scores[w[0]] > scores[w[1]] || (scores[w[0]] == scores[w[1]] && w[0] < w[1]));
        }
    }
}

#[test]
fn masking_cells_ignore_input_order() {
    let grid = build_grid(16, 16, 4).unwrap();
    let p = planted_predictor([0, 5, 10], 2.5).unwrap();
    let mut inputs = Vec::new();
    let mut maps = Vec::new();
    for i in 0..12u32 {
        let data = (0..256).map(|j| f64::from((j * 7 + i * 13) % 17) / 16.0).collect();
        let img = tokenize(&ImageBuffer::new(16, 16, 1, data), &grid, format!("img-{i:02}")).unwrap();
        maps.push(compute_influence_map(&p, &img, 1).unwrap());
        inputs.push(MaskingInput {
            image: img,
            target_class: 1,
        });
    }
    let ns = [1, 2, 3, 8];
    let sources = [ScoreSource {
        name: "influence".into(),
        maps: maps.clone(),
    }];
    let forward = masking_comparison(&p, &inputs, &sources, &ns).unwrap();
    inputs.reverse();
    let mut rev_maps = maps;
    rev_maps.rotate_left(5);
    let sources = [ScoreSource {
        name: "influence".into(),
        maps: rev_maps,
    }];
    let backward = masking_comparison(&p, &inputs, &sources, &ns).unwrap();
    assert_eq!(forward, backward);
    assert!(forward.iter().all(|c| c.n_images == 12));
}
