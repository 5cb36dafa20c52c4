//! Oracles, generators and stub embedders shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use osg_core::data::{
    synth_generate, ActionLabel, ClassEntry, ClassTable, Dataset, Instance, SynthConfig,
};
use osg_core::episodic::{Embedder, Episode, EpisodeSpec, SupportItem, SupportSpace, Task};
use osg_core::losses::{BatchItem, EmbeddingBatch, MultiSimConfig};
use osg_core::numcore::{l2_normalize, Tensor2};
use osg_core::splits::{context_counts, Category, ItemKind, SplitResult, SplitSpec};
use osg_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    unit(&gaussian(rng, d))
}

/// Raw (unnormalized) vectors with class ids, `per_class` per class.
pub fn raw_batch(rng: &mut impl Rng, classes: usize, per_class: usize, d: usize) -> Vec<(Vec<f64>, u32)> {
    (0..classes as u32)
        .flat_map(|c| (0..per_class).map(move |_| c))
        .map(|c| (gaussian(rng, d), c))
        .collect()
}

pub fn to_batch(items: &[(Vec<f64>, u32)]) -> EmbeddingBatch {
    EmbeddingBatch::new(items.iter().map(|(v, c)| BatchItem::video(unit(v), *c)).collect()).unwrap()
}

pub fn random_batch(rng: &mut impl Rng, classes: usize, per_class: usize, d: usize) -> EmbeddingBatch {
    to_batch(&raw_batch(rng, classes, per_class, d))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Histogram loss written from the triangular-kernel definition: every pair
/// adds `max(0, 1 − |s − t_r| / Δ)` to every node `t_r`.
pub fn histogram_oracle(batch: &EmbeddingBatch, bins: usize) -> f64 {
    let items = batch.items();
    let delta = 2.0 / (bins - 1) as f64;
    let mut hp = vec![0.0; bins];
    let mut hn = vec![0.0; bins];
    let (mut np, mut nn) = (0usize, 0usize);
    for i in 0..items.len() {
        for j in 0..items.len() {
            if j <= i {
                continue;
            }
            let s = dot(&items[i].embedding, &items[j].embedding);
            let same = items[i].class_id == items[j].class_id;
            for (r, (p, n)) in hp.iter_mut().zip(hn.iter_mut()).enumerate() {
                let t = -1.0 + r as f64 * delta;
                let w = (1.0 - (s - t).abs() / delta).max(0.0);
                if same {
                    *p += w;
                } else {
                    *n += w;
                }
            }
            if same {
                np += 1;
            } else {
                nn += 1;
            }
        }
    }
    let mut loss = 0.0;
    for r in 0..bins {
        let mut cdf = 0.0;
        for q in 0..=r {
            cdf += hp[q] / np as f64;
        }
        loss += hn[r] / nn as f64 * cdf;
    }
    loss
}

/// Multi-similarity loss computed anchor by anchor with explicit loops.
pub fn multisim_oracle(batch: &EmbeddingBatch, cfg: &MultiSimConfig) -> f64 {
    let items = batch.items();
    let n = items.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut min_pos = f64::INFINITY;
        let mut max_neg = f64::NEG_INFINITY;
        let mut any_pos = false;
        let mut any_neg = false;
        for j in 0..n {
            if j == i {
                continue;
            }
            let s = dot(&items[i].embedding, &items[j].embedding);
            if items[j].class_id == items[i].class_id {
                any_pos = true;
                if s < min_pos {
                    min_pos = s;
                }
            } else {
                any_neg = true;
                if s > max_neg {
                    max_neg = s;
                }
            }
        }
        let mut pos_sum = 0.0;
        let mut neg_sum = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let s = dot(&items[i].embedding, &items[j].embedding);
            if items[j].class_id == items[i].class_id {
                if !any_neg || s < max_neg + cfg.margin {
                    pos_sum += (-cfg.alpha * (s - cfg.lambda)).exp();
                }
            } else if !any_pos || s > min_pos - cfg.margin {
                neg_sum += (cfg.beta * (s - cfg.lambda)).exp();
            }
        }
        total += (1.0 + pos_sum).ln() / cfg.alpha + (1.0 + neg_sum).ln() / cfg.beta;
    }
    total / n as f64
}

/// Haar-ish random orthogonal matrix by Gram–Schmidt, as rows.
pub fn random_rotation(rng: &mut impl Rng, d: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v = gaussian(rng, d);
        for u in &q {
            let p = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
        q.push(unit(&v));
    }
    q
}

pub fn rotate(batch: &EmbeddingBatch, q: &[Vec<f64>]) -> EmbeddingBatch {
    EmbeddingBatch::new(
        batch
            .items()
            .iter()
            .map(|it| {
                let v: Vec<f64> = q.iter().map(|row| dot(row, &it.embedding)).collect();
                BatchItem {
                    embedding: unit(&v),
                    ..it.clone()
                }
            })
            .collect(),
    )
    .unwrap()
}

pub fn table_from_pairs(pairs: &[(u32, u32)]) -> ClassTable {
    ClassTable::new(
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(v, n))| ClassEntry {
                class_id: i as u32,
                label: ActionLabel {
                    verb_id: v,
                    noun_id: n,
                    verb_text: format!("verb{v}"),
                    noun_text: format!("noun{n}"),
                },
                n_instances: 1,
            })
            .collect(),
    )
    .unwrap()
}

/// Verb–noun grid keeping each pair with probability `density`.
pub fn random_table(seed: u64, verbs: u32, nouns: u32, density: f64) -> ClassTable {
    let mut r = rng(seed);
    let pairs: Vec<(u32, u32)> = (0..verbs)
        .flat_map(|v| (0..nouns).map(move |n| (v, n)))
        .filter(|_| r.gen_bool(density))
        .collect();
    table_from_pairs(&pairs)
}

/// Split generation re-derived step by step.
pub fn split_oracle(table: &ClassTable, spec: &SplitSpec) -> SplitResult {
    let mut verb_nouns: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    let mut noun_verbs: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for e in table.entries() {
        verb_nouns.entry(e.label.verb_id).or_default().insert(e.label.noun_id);
        noun_verbs.entry(e.label.noun_id).or_default().insert(e.label.verb_id);
    }
    let verbs: Vec<u32> = verb_nouns
        .iter()
        .filter(|(_, s)| spec.verb_lower <= s.len() && s.len() <= spec.verb_upper)
        .map(|(v, _)| *v)
        .collect();
    let nouns: Vec<u32> = noun_verbs
        .iter()
        .filter(|(_, s)| spec.noun_lower <= s.len() && s.len() <= spec.noun_upper)
        .map(|(n, _)| *n)
        .collect();

    let mut r = rng(spec.seed);
    let mut draw = |items: &[u32], k: usize| {
        let mut a = items.to_vec();
        for i in 0..k {
            let j = r.gen_range(i..a.len());
            a.swap(i, j);
        }
        a.truncate(k);
        a
    };
    let hv = draw(&verbs, spec.held_verbs);
    let hn = draw(&nouns, spec.held_nouns);
    let vt = (hv.len() as f64 * spec.verb_test_frac).ceil() as usize;
    let nt = (hn.len() as f64 * spec.noun_test_frac).ceil() as usize;

    let mut out = SplitResult {
        held_out_verbs_test: hv[..vt].iter().copied().collect(),
        held_out_verbs_val: hv[vt..].iter().copied().collect(),
        held_out_nouns_test: hn[..nt].iter().copied().collect(),
        held_out_nouns_val: hn[nt..].iter().copied().collect(),
        ..Default::default()
    };
    for e in table.entries() {
        let (v, n) = (e.label.verb_id, e.label.noun_id);
        let vtest = out.held_out_verbs_test.contains(&v);
        let ntest = out.held_out_nouns_test.contains(&n);
        let vval = out.held_out_verbs_val.contains(&v);
        let nval = out.held_out_nouns_val.contains(&n);
        let cat = match (vtest || vval, ntest || nval) {
            (true, true) => Some(Category::HoVN),
            (true, false) => Some(Category::HoV),
            (false, true) => Some(Category::HoN),
            (false, false) => None,
        };
        if vtest || ntest {
            out.test.insert(e.class_id);
        } else if vval || nval {
            out.validation.insert(e.class_id);
        } else {
            out.train.insert(e.class_id);
        }
        if let Some(c) = cat {
            out.categories.insert(e.class_id, c);
        }
    }
    out
}

/// Brute-force Venn counts: for every membership mask, the number of items
/// that are in exactly those sets.
pub fn venn_oracle(sets: &[BTreeSet<u32>]) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for mask in 1u32..(1 << sets.len()) {
        let mut count = 0;
        let universe: BTreeSet<u32> = sets.iter().flatten().copied().collect();
        for x in &universe {
            let inside = (0..sets.len()).all(|i| sets[i].contains(x) == (mask & (1 << i) != 0));
            if inside {
                count += 1;
            }
        }
        if count > 0 {
            out.insert(mask, count);
        }
    }
    out
}

/// κ-NN by exhaustive selection: repeatedly take the most similar unused
/// support item (smaller class id first on equal similarity), then vote.
pub fn knn_oracle(support: &[(Vec<f64>, u32)], query: &[f64], kappa: usize) -> u32 {
    let mut used = vec![false; support.len()];
    let mut picked = Vec::new();
    for _ in 0..kappa {
        let mut best: Option<usize> = None;
        for (i, (e, c)) in support.iter().enumerate() {
            if used[i] {
                continue;
            }
            let s = dot(e, query);
            best = match best {
                None => Some(i),
                Some(b) => {
                    let sb = dot(&support[b].0, query);
                    if s > sb || (s == sb && *c < support[b].1) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let b = best.unwrap();
        used[b] = true;
        picked.push((dot(&support[b].0, query), support[b].1));
    }
    let classes: BTreeSet<u32> = picked.iter().map(|p| p.1).collect();
    let score = |c: u32| {
        let count = picked.iter().filter(|p| p.1 == c).count();
        let sum: f64 = picked.iter().filter(|p| p.1 == c).map(|p| p.0).sum();
        (count, sum)
    };
    let mut winner = *classes.iter().next().unwrap();
    for &c in &classes {
        let (n, s) = score(c);
        let (bn, bs) = score(winner);
        if n > bn || (n == bn && s > bs) {
            winner = c;
        }
    }
    winner
}

/// Small dataset: `classes` classes with the given instance counts, random
/// features and labels.
pub fn toy_dataset(counts: &[usize], frames: usize, d_in: usize, d_label: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let pairs: Vec<(u32, u32)> = (0..counts.len() as u32).map(|c| (c / 4, c % 4 + 100)).collect();
    let mut table_entries = table_from_pairs(&pairs).entries().to_vec();
    for (e, &n) in table_entries.iter_mut().zip(counts) {
        e.n_instances = n as u32;
    }
    let table = ClassTable::new(table_entries).unwrap();
    let mut instances = Vec::new();
    let mut id = 0;
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let values: Vec<f64> = (0..frames * d_in).map(|_| r.sample(StandardNormal)).collect();
            instances.push(Instance {
                instance_id: id,
                class_id: c as u32,
                features: Tensor2::from_vec(frames, d_in, values).unwrap(),
            });
            id += 1;
        }
    }
    let labels = (0..counts.len() as u32).map(|c| (c, random_unit(&mut r, d_label))).collect();
    Dataset::new(table, instances, labels).unwrap()
}

/// Split that places every class in test, with categories cycling HoV/HoN/HoVN.
pub fn all_test_split(dataset: &Dataset) -> SplitResult {
    let mut s = SplitResult::default();
    for (i, c) in dataset.class_table().class_ids().enumerate() {
        s.test.insert(c);
        let cat = [Category::HoV, Category::HoN, Category::HoVN][i % 3];
        s.categories.insert(c, cat);
    }
    s
}

pub fn acceptance_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        n_verbs: 10,
        n_nouns: 10,
        class_density: 0.7,
        instances_min: 30,
        instances_max: 30,
        d_latent: 8,
        d_in: 64,
        frames: 4,
        sigma_frame: 0.1,
        sigma_instance: 0.1,
        seed,
        ..SynthConfig::default()
    }
}

pub fn synth(seed: u64) -> Dataset {
    synth_generate(&acceptance_synth(seed)).unwrap()
}

/// Embeds each instance as the one-hot vector of its class.
pub struct OneHotStub {
    pub classes: Vec<u32>,
}

impl Embedder for OneHotStub {
    fn embed_instance(&self, instance: &Instance) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.classes.len()];
        v[self.classes.iter().position(|&c| c == instance.class_id).unwrap()] = 1.0;
        Ok(v)
    }

    fn embed_label_support(&self, class_id: u32, _label: &[f64]) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.classes.len()];
        v[self.classes.iter().position(|&c| c == class_id).unwrap()] = 1.0;
        Ok(v)
    }

    fn support_space(&self, task: Task) -> Result<SupportSpace> {
        Ok(match task {
            Task::Fsg => SupportSpace::VideoEncoder,
            Task::CmFsg => SupportSpace::RawLabel,
        })
    }
}

/// Embeds each instance as a random unit vector seeded by its id, carrying no
/// class information.
pub struct RandomStub {
    pub dim: usize,
    pub seed: u64,
}

impl Embedder for RandomStub {
    fn embed_instance(&self, instance: &Instance) -> Result<Vec<f64>> {
        let mut r = rng(self.seed ^ (u64::from(instance.instance_id) << 20));
        Ok(random_unit(&mut r, self.dim))
    }

    fn embed_label_support(&self, class_id: u32, _label: &[f64]) -> Result<Vec<f64>> {
        let mut r = rng(!self.seed ^ u64::from(class_id));
        Ok(random_unit(&mut r, self.dim))
    }

    fn support_space(&self, task: Task) -> Result<SupportSpace> {
        Ok(match task {
            Task::Fsg => SupportSpace::VideoEncoder,
            Task::CmFsg => SupportSpace::RawLabel,
        })
    }
}

pub fn flatten(items: &[(Vec<f64>, u32)]) -> Vec<f64> {
    items.iter().flat_map(|(v, _)| v.iter().copied()).collect()
}

pub fn rebuild(flat: &[f64], template: &[(Vec<f64>, u32)]) -> Vec<(Vec<f64>, u32)> {
    let d = template[0].0.len();
    template
        .iter()
        .enumerate()
        .map(|(i, (_, c))| (flat[i * d..(i + 1) * d].to_vec(), *c))
        .collect()
}

/// Loss of the normalized raw vectors, with the gradient pulled back through
/// the normalization.
pub fn through_normalize(
    flat: &[f64],
    template: &[(Vec<f64>, u32)],
    loss: impl Fn(&EmbeddingBatch) -> (f64, Vec<Vec<f64>>),
) -> (f64, Vec<f64>) {
    let raw = rebuild(flat, template);
    let normed: Vec<_> = raw.iter().map(|(v, _)| l2_normalize(v).unwrap()).collect();
    let batch = EmbeddingBatch::new(
        normed
            .iter()
            .zip(&raw)
            .map(|(n, (_, c))| BatchItem::video(n.unit.clone(), *c))
            .collect(),
    )
    .unwrap();
    let (value, grads) = loss(&batch);
    let g = normed.iter().zip(&grads).flat_map(|(n, g)| n.backward(g)).collect();
    (value, g)
}

/// True when no pair similarity is within `margin` of a histogram node.
pub fn away_from_nodes(batch: &EmbeddingBatch, bins: usize, margin: f64) -> bool {
    let delta = 2.0 / (bins - 1) as f64;
    let items = batch.items();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let s = dot(&items[i].embedding, &items[j].embedding);
            let r = ((s + 1.0) / delta).round();
            if (s - (-1.0 + r * delta)).abs() < margin {
                return false;
            }
        }
    }
    true
}

pub fn items(table: &ClassTable, classes: &BTreeSet<u32>, kind: ItemKind) -> BTreeSet<u32> {
    classes
        .iter()
        .map(|&c| {
            let e = table.get(c).unwrap();
            match kind {
                ItemKind::Class => c,
                ItemKind::Verb => e.label.verb_id,
                ItemKind::Noun => e.label.noun_id,
            }
        })
        .collect()
}

/// Every structural property a split must have.
pub fn check_split(table: &ClassTable, spec: &SplitSpec, s: &SplitResult) {
    let all: BTreeSet<u32> = table.class_ids().collect();
    assert!(s.train.is_disjoint(&s.validation));
    assert!(s.train.is_disjoint(&s.test));
    assert!(s.validation.is_disjoint(&s.test));
    let union: BTreeSet<u32> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
    assert_eq!(union, all);

    let held_v: BTreeSet<u32> = s.held_out_verbs_test.union(&s.held_out_verbs_val).copied().collect();
    let held_n: BTreeSet<u32> = s.held_out_nouns_test.union(&s.held_out_nouns_val).copied().collect();
    assert_eq!(held_v.len(), spec.held_verbs);
    assert_eq!(held_n.len(), spec.held_nouns);

    // Eligibility bounds.
    let (vc, nc) = context_counts(table);
    for v in &held_v {
        assert!((spec.verb_lower..=spec.verb_upper).contains(&vc[v]));
    }
    for n in &held_n {
        assert!((spec.noun_lower..=spec.noun_upper).contains(&nc[n]));
    }

    // Coverage: exactly the non-train classes are categorized, consistently.
    for e in table.entries() {
        let (v, n) = (e.label.verb_id, e.label.noun_id);
        let expected = match (held_v.contains(&v), held_n.contains(&n)) {
            (true, true) => Some(Category::HoVN),
            (true, false) => Some(Category::HoV),
            (false, true) => Some(Category::HoN),
            (false, false) => None,
        };
        assert_eq!(s.categories.get(&e.class_id).copied(), expected);
        assert_eq!(expected.is_none(), s.train.contains(&e.class_id));
    }
    // Held verbs and nouns never reach training.
    let train_verbs = items(table, &s.train, ItemKind::Verb);
    let train_nouns = items(table, &s.train, ItemKind::Noun);
    assert!(train_verbs.is_disjoint(&held_v));
    assert!(train_nouns.is_disjoint(&held_n));
}

/// Class, support and query counts plus disjointness of an FSG episode.
pub fn check_fsg_episode(ds: &Dataset, ep: &Episode, spec: &EpisodeSpec) {
    let classes: BTreeSet<u32> = ep.classes.iter().copied().collect();
    assert_eq!(classes.len(), spec.n);
    let mut seen = BTreeSet::new();
    for &c in &ep.classes {
        let support: Vec<usize> = ep
            .support
            .iter()
            .filter(|(_, l)| *l == c)
            .map(|(s, _)| match s {
                SupportItem::Instance(i) => *i,
                SupportItem::Label(_) => panic!("label support in FSG"),
            })
            .collect();
        let queries: Vec<usize> = ep.queries.iter().filter(|(_, l)| *l == c).map(|(i, _)| *i).collect();
        let avail = ds.instances_of(c).len();
        assert_eq!(support.len(), spec.k);
        assert_eq!(queries.len(), spec.m.min(avail - spec.k));
        for i in support.iter().chain(&queries) {
            assert_eq!(ds.instance(*i).class_id, c);
            assert!(seen.insert(*i), "instance drawn twice");
        }
    }
    assert!(ep.support.iter().all(|(_, c)| classes.contains(c)));
}
