use boosthd::boost::{partition_dimensions, BoostConfig};
use boosthd::data::{apply_normalizer, fit_normalizer, make_imbalanced, split_by_subject, synth_blobs, SynthConfig};
use boosthd::perturb::{robustness_sweep, PerturbConfig};
use boosthd::BoostHdModel;
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

fn blobs(seed: u64) -> boosthd::data::Dataset {
    synth_blobs(&SynthConfig { n_per_class: 40, seed, ..Default::default() }).unwrap()
}

#[test]
fn integer_imbalance_replicates_exactly() {
    let ds = blobs(1);
    let out = make_imbalanced(&ds, 1, 3.0, 7).unwrap();
    let count = |c: usize| out.y.iter().filter(|&&y| y == c).count();
    assert_eq!((count(0), count(1), count(2)), (120, 40, 120));
}

#[test]
fn fractional_imbalance_within_binomial_bounds() {
    let ds = synth_blobs(&SynthConfig { n_per_class: 2000, ..Default::default() }).unwrap();
    let out = make_imbalanced(&ds, 0, 2.25, 3).unwrap();
    let extra = (out.len() - 2000 - 2 * 4000) as u64;
    let dist = Binomial::new(0.25, 4000).unwrap();
    assert!((dist.inverse_cdf(0.005)..=dist.inverse_cdf(0.995)).contains(&extra), "{extra}");
}

#[test]
fn subject_split_and_normalizer() {
    let ds = blobs(2);
    let (train, test) = split_by_subject(&ds, &["s1".to_string()]).unwrap();
    assert!(test.subjects.iter().all(|s| s == "s1"));
    assert!(train.subjects.iter().all(|s| s != "s1"));
    assert_eq!(train.len() + test.len(), ds.len());
    let stats = fit_normalizer(&train).unwrap();
    let z = apply_normalizer(&train, &stats).unwrap();
    for c in 0..z.n_features() {
        let col: Vec<f64> = z.x.iter_rows().map(|r| r[c]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }
}

#[test]
fn robustness_rows_are_deterministic() {
    let ds = blobs(3);
    let cfg = BoostConfig { d_total: 200, n_learners: 4, ..Default::default() };
    let model = BoostHdModel::fit(&ds.x, &ds.y, ds.n_classes(), &cfg).unwrap().model;
    let pc = PerturbConfig { trials: 8, seed: 5, ..Default::default() };
    let a = robustness_sweep(&model, "boosthd", &ds, &[0.0, 1e-3], &pc).unwrap();
    let b = robustness_sweep(&model, "boosthd", &ds, &[0.0, 1e-3], &pc).unwrap();
    assert_eq!(a.to_csv_bytes().unwrap(), b.to_csv_bytes().unwrap());
    let clean: Vec<f64> =
        a.rows().iter().filter(|r| r.metric == "accuracy" && r.p_b == Some(0.0)).map(|r| r.value).collect();
    assert_eq!(clean.len(), 8);
    assert!(clean.windows(2).all(|w| w[0] == w[1]));
}

proptest! {
    #[test]
    fn partition_tiles_dimension(d in 1usize..5000, n in 1usize..200) {
        prop_assume!(n <= d);
        let slices = partition_dimensions(d, n).unwrap();
        prop_assert_eq!(slices.len(), n);
        let mut offset = 0;
        for s in &slices {
            prop_assert_eq!(s.offset, offset);
            prop_assert!(s.width == d / n || s.width == d / n + 1);
            offset += s.width;
        }
        prop_assert_eq!(offset, d);
    }

    #[test]
    fn imbalance_keeps_target_rows(r in 1.0f64..6.0, seed in 0u64..1000) {
        let ds = blobs(4);
        let out = make_imbalanced(&ds, 2, r, seed).unwrap();
        prop_assert_eq!(out.y.iter().filter(|&&y| y == 2).count(), 40);
        let others = out.y.iter().filter(|&&y| y != 2).count();
        prop_assert!(others >= 80 * r.floor() as usize && others <= 80 * r.ceil() as usize);
    }
}
