mod common;

use chaoswave::eval::{
    compare, compute_metrics, cross_validate, make_folds, mcnemar_from_counts, mcnemar_test, paired_t_test,
    roc_auc, run_ablation, wilcoxon_signed_rank, ConfusionMatrix, CvOptions, EnhancementSetup,
};
use chaoswave::imageio::{DatasetItem, LabeledDataset};
use chaoswave::modulate::ModulationConfig;
use chaoswave::nn::{NetworkSpec, TrainConfig};
use chaoswave::synth::sanity_dataset;
use chaoswave::wavelet::default_cdf97;
use proptest::prelude::*;
use rand::Rng;

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
fn mann_whitney(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

#[test]
fn auc_matches_pairwise_count() {
    let mut g = common::rng(17);
    for _ in 0..30 {
        let n = 20;
        let mut labels: Vec<usize> = (0..n).map(|_| g.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // coarse scores so ties occur
        let scores: Vec<f64> = (0..n).map(|_| (g.random_range(0..8) as f64) / 8.0).collect();
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        assert!((auc - mann_whitney(&scores, &labels)).abs() < 1e-12);
    }
}

fn binomial_two_sided(b: u64, c: u64) -> f64 {
    let n = b + c;
    let k = b.min(c);
    let mut tail = 0.0;
    let mut coef = 1.0f64;
    for i in 0..=k {
        if i > 0 {
            coef = coef * (n - i + 1) as f64 / i as f64;
        }
        tail += coef;
    }
    (2.0 * tail / 2f64.powi(n as i32)).min(1.0)
}

#[test]
fn mcnemar_small_counts_match_enumeration() {
    for b in 0..13u64 {
        for c in 0..13u64 {
            if b + c == 0 || b + c >= 25 {
                continue;
            }
            let r = mcnemar_from_counts(b, c);
            assert!((r.p_value.unwrap() - binomial_two_sided(b, c)).abs() < 1e-12, "({b}, {c})");
        }
    }
}

/// Student-t upper tail by Simpson integration of the density.
fn t_two_sided(t: f64, df: f64) -> f64 {
    let ln_norm = libm_lgamma((df + 1.0) / 2.0) - libm_lgamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |x: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    // integrate the density over [0, |t|] and use symmetry
    let steps = 20_000;
    let h = t.abs() / steps as f64;
    let mut s = density(0.0) + density(t.abs());
    for i in 1..steps {
        s += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

/// Lanczos log-gamma, independent of the library under test.
fn libm_lgamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn signed_rank_oracle(d: &[f64]) -> f64 {
    // ranks of |d| without ties (continuous random data)
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut rank = vec![0.0; d.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = (r + 1) as f64;
    }
    let w_plus: f64 = (0..d.len()).filter(|&i| d[i] > 0.0).map(|i| rank[i]).sum();
    let total: f64 = rank.iter().sum();
    let observed = w_plus.min(total - w_plus);
    let n = d.len();
    let mut at_most = 0usize;
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| rank[i]).sum();
        if s <= observed + 1e-9 {
            at_most += 1;
        }
    }
    (2.0 * at_most as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn paired_tests_match_oracles() {
    let mut g = common::rng(23);
    for _ in 0..20 {
        let xs: Vec<f64> = (0..8).map(|_| g.random_range(0.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x - g.random_range(-0.3..0.5)).collect();
        let d: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x - y).collect();

        let t = paired_t_test(&xs, &ys);
        let mean = d.iter().sum::<f64>() / 8.0;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0).sqrt();
        let t_oracle = mean / (sd / 8f64.sqrt());
        assert!((t.statistic.unwrap() - t_oracle).abs() < 1e-12);
        assert!((t.p_value.unwrap() - t_two_sided(t_oracle, 7.0)).abs() < 0.01);

        let w = wilcoxon_signed_rank(&xs, &ys);
        assert!((w.p_value.unwrap() - signed_rank_oracle(&d)).abs() < 0.01);
    }
}

#[test]
fn constant_shift_is_degenerate() {
    let ys = [0.91, 0.87, 0.95, 0.89, 0.93];
    let xs: Vec<f64> = ys.iter().map(|y| y + 1.0).collect();
    let t = paired_t_test(&xs, &ys);
    assert!(t.statistic.is_none() && !t.significant());
    let w = wilcoxon_signed_rank(&xs, &ys);
    assert_eq!(w.statistic, Some(0.0));
    let w = wilcoxon_signed_rank(&ys, &xs);
    assert_eq!(w.statistic, Some(0.0));
}

fn with_children(per_class: usize, children: usize) -> LabeledDataset {
    let base = sanity_dataset(per_class, 4, 0).unwrap();
    let mut items = base.items.clone();
    for item in &base.items {
        for _ in 0..children {
            items.push(DatasetItem { original: false, ..item.clone() });
        }
    }
    LabeledDataset::new(items)
}

proptest! {
    #[test]
    fn metric_identities(tp in 1u64..500, fp in 1u64..500, tn in 1u64..500, fn_ in 1u64..500) {
        let r = compute_metrics(&ConfusionMatrix::new(tp, fp, tn, fn_));
        let acc = (tp + tn) as f64 / (tp + fp + tn + fn_) as f64 * 100.0;
        let sen = tp as f64 / (tp + fn_) as f64 * 100.0;
        let spe = tn as f64 / (tn + fp) as f64 * 100.0;
        let p = tp as f64 / (tp + fp) as f64 * 100.0;
        prop_assert!((r.acc.unwrap() - acc).abs() < 1e-10);
        prop_assert!((r.sen.unwrap() + fn_ as f64 / (tp + fn_) as f64 * 100.0 - 100.0).abs() < 1e-10);
        prop_assert!((r.fpr.unwrap() + r.spe.unwrap() - 100.0).abs() < 1e-10);
        prop_assert!((r.spe.unwrap() - spe).abs() < 1e-10);
        prop_assert!((r.f1.unwrap() - 2.0 * p * sen / (p + sen)).abs() < 1e-10);
        for v in r.values().into_iter().flatten() {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }

    #[test]
    fn mcnemar_swap_symmetry(pairs in prop::collection::vec((0usize..2, 0usize..2, 0usize..2), 1..80)) {
        let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let y: Vec<usize> = pairs.iter().map(|p| p.2).collect();
        let ab = mcnemar_test(&a, &b, &y).unwrap();
        let ba = mcnemar_test(&b, &a, &y).unwrap();
        prop_assert_eq!((ab.b, ab.c), (ba.c, ba.b));
        prop_assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn auc_bounds_and_inversion(raw in prop::collection::vec((0u8..10, 0usize..2), 2..40)) {
        let mut labels: Vec<usize> = raw.iter().map(|r| r.1).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64).collect();
        let a = roc_auc(&scores, &labels).unwrap().auc;
        let inv: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = roc_auc(&inv, &labels).unwrap().auc;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folds_never_leak(seed in any::<u64>(), k in 2usize..5) {
        let ds = with_children(6, 3);
        let plan = make_folds(&ds.sources(), k, seed).unwrap();
        for fold in 0..k {
            let (train, val) = plan.split(&ds, fold, false).unwrap();
            prop_assert!(val.items.iter().all(|i| i.original));
            for v in &val.items {
                prop_assert!(train.items.iter().all(|t| t.source_id != v.source_id));
            }
            prop_assert_eq!(train.len() + val.len() * 4, ds.len());
        }
    }
}

#[test]
fn augmented_validation_override() {
    let ds = with_children(5, 2);
    let plan = make_folds(&ds.sources(), 5, 1).unwrap();
    let (_, val) = plan.split(&ds, 0, true).unwrap();
    assert_eq!(val.len(), 2 * 3);
    assert_eq!(val.items.iter().filter(|i| !i.original).count(), 4);
}

fn sanity_config() -> TrainConfig {
    TrainConfig { batch_size: 16, max_epochs: 5, seed: 3, ..Default::default() }
}

#[test]
fn two_fold_cross_validation_on_sanity_set() {
    let ds = sanity_dataset(100, 64, 31).unwrap();
    let spec = NetworkSpec::conv_blocks((64, 64), &[4, 8], 2);
    let plan = make_folds(&ds.sources(), 2, 9).unwrap();
    let out = cross_validate(&ds, &spec, &sanity_config(), &plan, &CvOptions::default()).unwrap();
    let accs = out.report.fold_accuracies();
    eprintln!("fold accuracies {accs:?}");
    assert_eq!(accs.len(), 2);
    assert!(accs.iter().all(|a| *a >= 95.0), "{accs:?}");
    // golden: observed with these seeds
    assert_eq!(accs, vec![100.0, 99.0]);
    assert_eq!(out.checkpoints.len(), 2);
    assert_eq!(out.report.pooled_confusion.total(), 200);
}

#[test]
fn ablation_arms_agree_when_both_are_plain() {
    let ds = sanity_dataset(10, 32, 4).unwrap();
    let spec = NetworkSpec::conv_blocks((32, 32), &[2, 2], 2);
    let plan = make_folds(&ds.sources(), 2, 0).unwrap();
    let config = TrainConfig { batch_size: 8, max_epochs: 2, seed: 1, ..Default::default() };
    let setup = EnhancementSetup {
        bank: default_cdf97(),
        levels: 2,
        modulation: ModulationConfig { scale: 0.0, chaos_burn_in: 100, ..Default::default() },
        chua: Default::default(),
    };
    let out = run_ablation(&ds, &spec, &config, &plan, &CvOptions::default(), &setup).unwrap();
    let r = &out.report;
    assert_eq!(r.without_chaos, r.with_chaos);
    assert_eq!((r.mcnemar.b, r.mcnemar.c), (0, 0));
    assert!(r.mcnemar.p_value.is_none());
    assert!(r.accuracy_t_test.p_value.is_none());
    let again = compare(r.with_chaos.clone(), r.without_chaos.clone()).unwrap();
    assert_eq!(&again, r);
}
