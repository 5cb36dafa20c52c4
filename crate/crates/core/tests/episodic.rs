mod common;

use std::collections::BTreeSet;

use common::*;
use osg_core::episodic::{
    evaluate, knn_classify, sample_episode, sample_training_batch, BatchSpec, EpisodeSpec, EvalSpec, EvalSubset,
    SupportItem, Task,
};
use osg_core::model::{init_model, Method, ModelConfig};
use osg_core::splits::{generate_split, SplitSpec};
use osg_core::Error;
use rand::Rng;

#[test]
fn fsg_episode_invariants() {
    let counts: Vec<usize> = (0..12).map(|c| 2 + c * 3).collect();
    let ds = toy_dataset(&counts, 2, 3, 4, 1);
    let pool: Vec<u32> = (0..12).collect();
    let mut r = rng(2);
    for trial in 0..1000 {
        let spec = EpisodeSpec {
            n: 2 + trial % 5,
            k: 1 + trial % 2,
            m: 1 + trial % 25,
        };
        let ep = sample_episode(&ds, &pool, Task::Fsg, &mut r, &spec).unwrap();
        check_fsg_episode(&ds, &ep, &spec);
    }
}

#[test]
fn cm_fsg_episode_uses_labels() {
    let ds = toy_dataset(&[1, 2, 3, 30, 40], 2, 3, 4, 3);
    let pool: Vec<u32> = (0..5).collect();
    let mut r = rng(4);
    for _ in 0..200 {
        let spec = EpisodeSpec { n: 5, k: 1, m: 20 };
        let ep = sample_episode(&ds, &pool, Task::CmFsg, &mut r, &spec).unwrap();
        assert_eq!(ep.support.len(), 5);
        for (s, c) in &ep.support {
            assert_eq!(*s, SupportItem::Label(*c));
        }
        for &c in &ep.classes {
            let q = ep.queries.iter().filter(|(_, l)| *l == c).count();
            assert_eq!(q, 20.min(ds.instances_of(c).len()));
        }
    }
    let k2 = EpisodeSpec { n: 5, k: 2, m: 20 };
    assert!(matches!(sample_episode(&ds, &pool, Task::CmFsg, &mut r, &k2), Err(Error::Unsupported(_))));
}

#[test]
fn too_few_classes_is_an_error() {
    // A single-instance class cannot host a 1-shot FSG query.
    let ds = toy_dataset(&[1, 5, 5, 5, 5], 2, 3, 4, 5);
    let pool: Vec<u32> = (0..5).collect();
    let spec = EpisodeSpec::default();
    assert!(sample_episode(&ds, &pool, Task::Fsg, &mut rng(0), &spec).is_err());
    assert!(sample_episode(&ds, &pool, Task::CmFsg, &mut rng(0), &spec).is_ok());
}

#[test]
fn knn_matches_exhaustive_oracle() {
    let mut r = rng(6);
    for trial in 0..1000 {
        let n = 2 + trial % 6;
        let per = 1 + trial % 4;
        let d = 3 + trial % 5;
        let mut support: Vec<(Vec<f64>, u32)> = Vec::new();
        for c in 0..n as u32 {
            for _ in 0..per {
                // Coarse grid coordinates so that exact similarity ties occur.
                let v: Vec<f64> = (0..d).map(|_| f64::from(r.gen_range(-2i32..=2))).collect();
                let v = if v.iter().all(|x| *x == 0.0) { vec![1.0; d] } else { v };
                support.push((unit(&v), c));
            }
        }
        let q: Vec<f64> = (0..d).map(|_| f64::from(r.gen_range(-2i32..=2))).collect();
        let q = if q.iter().all(|x| *x == 0.0) { vec![1.0; d] } else { unit(&q) };
        let kappa = 1 + trial % per;
        let refs: Vec<(&[f64], u32)> = support.iter().map(|(v, c)| (v.as_slice(), *c)).collect();
        assert_eq!(knn_classify(&refs, &q, kappa).unwrap(), knn_oracle(&support, &q, kappa), "trial {trial}");
    }
}

#[test]
fn knn_independent_of_support_order() {
    let mut r = rng(7);
    for _ in 0..200 {
        let support: Vec<(Vec<f64>, u32)> = (0..9).map(|i| (random_unit(&mut r, 4), i % 3)).collect();
        let q = random_unit(&mut r, 4);
        let mut refs: Vec<(&[f64], u32)> = support.iter().map(|(v, c)| (v.as_slice(), *c)).collect();
        let a = knn_classify(&refs, &q, 3).unwrap();
        refs.reverse();
        assert_eq!(knn_classify(&refs, &q, 3).unwrap(), a);
    }
}

#[test]
fn one_hot_stub_scores_perfectly() {
    let ds = toy_dataset(&[10; 9], 2, 3, 4, 8);
    let split = all_test_split(&ds);
    let stub = OneHotStub {
        classes: ds.class_table().class_ids().collect(),
    };
    let spec = EvalSpec {
        episode: EpisodeSpec { n: 3, k: 1, m: 5 },
        episodes: 50,
        seed: 1,
    };
    for task in [Task::Fsg, Task::CmFsg] {
        let rep = evaluate(&stub, &ds, &split, task, &spec).unwrap();
        for s in &rep.subsets {
            assert_eq!(s.accuracy, 1.0, "{task} {}", s.subset);
        }
    }
}

#[test]
fn random_stub_scores_chance() {
    let ds = synth(0);
    let split = generate_split(ds.class_table(), &SplitSpec::default()).unwrap();
    let stub = RandomStub { dim: 16, seed: 3 };
    let spec = EvalSpec {
        episodes: 500,
        ..EvalSpec::default()
    };
    let rep = evaluate(&stub, &ds, &split, Task::Fsg, &spec).unwrap();
    let acc = rep.subset(EvalSubset::All).unwrap().accuracy;
    assert!((acc - 0.2).abs() <= 0.03, "{acc}");
}

#[test]
fn pooled_accuracy_identity() {
    let ds = synth(1);
    let split = generate_split(ds.class_table(), &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap();
    let stub = RandomStub { dim: 8, seed: 9 };
    let spec = EvalSpec {
        episode: EpisodeSpec { n: 5, k: 2, m: 7 },
        episodes: 60,
        seed: 4,
    };
    let rep = evaluate(&stub, &ds, &split, Task::Fsg, &spec).unwrap();
    for s in rep.subsets.iter().filter(|s| s.skipped.is_none()) {
        let q: usize = s.episodes.iter().map(|e| e.queries).sum();
        let c: usize = s.episodes.iter().map(|e| e.correct).sum();
        assert_eq!((q, c), (s.queries, s.correct));
        assert_eq!(s.accuracy, c as f64 / q as f64);
        assert_eq!(s.episodes.len(), 60);
    }
}

#[test]
fn evaluation_is_deterministic_and_subset_complete() {
    let ds = synth(2);
    let split = generate_split(ds.class_table(), &SplitSpec { seed: 2, ..SplitSpec::default() }).unwrap();
    let (_, d_in) = ds.feature_shape();
    let model = init_model(
        ModelConfig {
            method: Method::JE,
            d_in,
            hidden: 16,
            embed_dim: 8,
            label_dim: ds.label_dim(),
        },
        0,
    )
    .unwrap();
    let spec = EvalSpec {
        episodes: 40,
        ..EvalSpec::default()
    };
    for task in [Task::Fsg, Task::CmFsg] {
        let a = evaluate(&model, &ds, &split, task, &spec).unwrap();
        let b = evaluate(&model, &ds, &split, task, &spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let names: Vec<String> = a.subsets.iter().map(|s| s.subset.to_string()).collect();
        assert_eq!(names, ["All", "HoV", "HoN"]);
    }
}

#[test]
fn ve_cannot_run_cross_modal() {
    let ds = toy_dataset(&[5; 6], 2, 3, 4, 9);
    let model = init_model(
        ModelConfig {
            method: Method::VE,
            d_in: 3,
            hidden: 4,
            embed_dim: 4,
            label_dim: 4,
        },
        0,
    )
    .unwrap();
    let err = evaluate(&model, &ds, &all_test_split(&ds), Task::CmFsg, &EvalSpec::default()).unwrap_err();
    assert!(matches!(err, Error::Capability { .. }));
}

#[test]
fn undersized_subsets_are_skipped() {
    // Three classes cannot host a 5-way episode.
    let ds = toy_dataset(&[5; 3], 2, 3, 4, 10);
    let rep = evaluate(
        &OneHotStub { classes: vec![0, 1, 2] },
        &ds,
        &all_test_split(&ds),
        Task::Fsg,
        &EvalSpec::default(),
    )
    .unwrap();
    assert!(rep.subsets.iter().all(|s| s.skipped.is_some()));
    assert_eq!(rep.to_csv().lines().count(), 1);
}

#[test]
fn training_batches_respect_shape() {
    let counts: Vec<usize> = (0..20).map(|c| 1 + c % 10).collect();
    let ds = toy_dataset(&counts, 2, 3, 4, 11);
    let classes: Vec<u32> = (0..20).collect();
    let spec = BatchSpec {
        classes: 6,
        max_per_class: 4,
        min_total: 15,
        max_retries: 100,
    };
    let mut r = rng(12);
    for _ in 0..500 {
        let b = sample_training_batch(&ds, &classes, &mut r, &spec).unwrap();
        assert_eq!(b.groups.len(), 6);
        assert!(b.total() >= 15);
        let distinct: BTreeSet<u32> = b.groups.iter().map(|g| g.0).collect();
        assert_eq!(distinct.len(), 6);
        for (c, idx) in &b.groups {
            assert_eq!(idx.len(), 4.min(ds.instances_of(*c).len()));
            assert!(idx.iter().all(|&i| ds.instance(i).class_id == *c));
            assert_eq!(idx.iter().collect::<BTreeSet<_>>().len(), idx.len());
        }
    }
    let impossible = BatchSpec { min_total: 1000, ..spec };
    assert!(matches!(sample_training_batch(&ds, &classes, &mut r, &impossible), Err(Error::Sampling(_))));
}
