//! Open-set split generation: holds out sampled verbs and nouns so that
//! validation and test classes are disjoint from training classes, and
//! tabulates class/verb/noun overlap across and within splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ClassTable;
use crate::error::{Error, Result};
use crate::sampling::choose;

/// Held-out verb/noun sampling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Eligible verbs co-occur with between `verb_lower` and `verb_upper` nouns (inclusive).
    pub verb_lower: usize,
    pub verb_upper: usize,
    pub noun_lower: usize,
    pub noun_upper: usize,
    pub held_verbs: usize,
    pub held_nouns: usize,
    /// Fraction of held-out verbs sent to test; the rest go to validation.
    pub verb_test_frac: f64,
    pub noun_test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            verb_lower: 0,
            verb_upper: usize::MAX,
            noun_lower: 0,
            noun_upper: usize::MAX,
            held_verbs: 2,
            held_nouns: 2,
            verb_test_frac: 1.0,
            noun_test_frac: 1.0,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.verb_lower > self.verb_upper || self.noun_lower > self.noun_upper {
            return Err(Error::Config("split lower cutoff exceeds upper cutoff".into()));
        }
        for f in [self.verb_test_frac, self.noun_test_frac] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config("split test fractions must be in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Val, Subset::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "val" => Ok(Subset::Val),
            "test" => Ok(Subset::Test),
            _ => Err(Error::Format(format!("unknown subset {s:?}"))),
        }
    }
}

/// Why a class is excluded from training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    /// Held-out verb, trained noun.
    HoV,
    /// Held-out noun, trained verb.
    HoN,
    /// Both held out.
    HoVN,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::HoV => "HoV",
            Category::HoN => "HoN",
            Category::HoVN => "HoVN",
        }
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HoV" => Ok(Category::HoV),
            "HoN" => Ok(Category::HoN),
            "HoVN" => Ok(Category::HoVN),
            _ => Err(Error::Format(format!("unknown category {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitResult {
    pub train: BTreeSet<u32>,
    pub validation: BTreeSet<u32>,
    pub test: BTreeSet<u32>,
    pub held_out_verbs_val: BTreeSet<u32>,
    pub held_out_verbs_test: BTreeSet<u32>,
    pub held_out_nouns_val: BTreeSet<u32>,
    pub held_out_nouns_test: BTreeSet<u32>,
    pub categories: BTreeMap<u32, Category>,
}

/// Verb → number of distinct nouns it appears with, and noun → number of distinct verbs.
pub fn context_counts(table: &ClassTable) -> (BTreeMap<u32, usize>, BTreeMap<u32, usize>) {
    let mut verb_ctx: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    let mut noun_ctx: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for e in table.entries() {
        verb_ctx.entry(e.label.verb_id).or_default().insert(e.label.noun_id);
        noun_ctx.entry(e.label.noun_id).or_default().insert(e.label.verb_id);
    }
    let count = |m: BTreeMap<u32, BTreeSet<u32>>| m.into_iter().map(|(k, s)| (k, s.len())).collect();
    (count(verb_ctx), count(noun_ctx))
}

/// Ids whose count lies in `[lower, upper]`.
pub fn eligible_items(counts: &BTreeMap<u32, usize>, lower: usize, upper: usize) -> BTreeSet<u32> {
    counts
        .iter()
        .filter(|(_, &c)| lower <= c && c <= upper)
        .map(|(&id, _)| id)
        .collect()
}

fn test_count(total: usize, frac: f64) -> usize {
    ((total as f64 * frac).ceil() as usize).min(total)
}

pub fn generate_split(table: &ClassTable, spec: &SplitSpec) -> Result<SplitResult> {
    spec.validate()?;
    let (verb_counts, noun_counts) = context_counts(table);
    let verbs = eligible_items(&verb_counts, spec.verb_lower, spec.verb_upper);
    let nouns = eligible_items(&noun_counts, spec.noun_lower, spec.noun_upper);
    if verbs.len() < spec.held_verbs {
        return Err(Error::Eligibility {
            kind: "verbs",
            needed: spec.held_verbs,
            available: verbs.len(),
        });
    }
    if nouns.len() < spec.held_nouns {
        return Err(Error::Eligibility {
            kind: "nouns",
            needed: spec.held_nouns,
            available: nouns.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Ascending id order, then a partial Fisher–Yates draw: verbs first, then nouns.
    let verbs: Vec<u32> = verbs.into_iter().collect();
    let nouns: Vec<u32> = nouns.into_iter().collect();
    let sampled_verbs = choose(&mut rng, &verbs, spec.held_verbs);
    let sampled_nouns = choose(&mut rng, &nouns, spec.held_nouns);
    let vt = test_count(sampled_verbs.len(), spec.verb_test_frac);
    let nt = test_count(sampled_nouns.len(), spec.noun_test_frac);

    let mut out = SplitResult {
        held_out_verbs_test: sampled_verbs[..vt].iter().copied().collect(),
        held_out_verbs_val: sampled_verbs[vt..].iter().copied().collect(),
        held_out_nouns_test: sampled_nouns[..nt].iter().copied().collect(),
        held_out_nouns_val: sampled_nouns[nt..].iter().copied().collect(),
        ..Default::default()
    };

    for e in table.entries() {
        let (v, n) = (e.label.verb_id, e.label.noun_id);
        let subset = if out.held_out_verbs_test.contains(&v) || out.held_out_nouns_test.contains(&n) {
            Subset::Test
        } else if out.held_out_verbs_val.contains(&v) || out.held_out_nouns_val.contains(&n) {
            Subset::Val
        } else {
            Subset::Train
        };
        match subset {
            Subset::Train => {
                out.train.insert(e.class_id);
            }
            Subset::Val | Subset::Test => {
                let verb_held = out.held_out_verbs_test.contains(&v) || out.held_out_verbs_val.contains(&v);
                let noun_held = out.held_out_nouns_test.contains(&n) || out.held_out_nouns_val.contains(&n);
                let cat = match (verb_held, noun_held) {
                    (true, true) => Category::HoVN,
                    (true, false) => Category::HoV,
                    _ => Category::HoN,
                };
                out.categories.insert(e.class_id, cat);
                if subset == Subset::Test {
                    out.test.insert(e.class_id);
                } else {
                    out.validation.insert(e.class_id);
                }
            }
        }
    }
    Ok(out)
}

impl SplitResult {
    pub fn subset(&self, s: Subset) -> &BTreeSet<u32> {
        match s {
            Subset::Train => &self.train,
            Subset::Val => &self.validation,
            Subset::Test => &self.test,
        }
    }

    pub fn subset_of(&self, class_id: u32) -> Option<Subset> {
        Subset::ALL.into_iter().find(|&s| self.subset(s).contains(&class_id))
    }

    /// Classes of `subset` with the given category.
    pub fn with_category(&self, subset: Subset, cat: Category) -> BTreeSet<u32> {
        self.subset(subset)
            .iter()
            .copied()
            .filter(|c| self.categories.get(c) == Some(&cat))
            .collect()
    }

    /// Ratio of the largest to the smallest of the HoV/HoN validation/test class
    /// counts; infinite when any of them is empty.
    pub fn imbalance(&self) -> f64 {
        let counts: Vec<usize> = [Subset::Val, Subset::Test]
            .into_iter()
            .flat_map(|s| [Category::HoV, Category::HoN].map(|c| self.with_category(s, c).len()))
            .collect();
        let max = *counts.iter().max().unwrap_or(&0) as f64;
        let min = *counts.iter().min().unwrap_or(&0) as f64;
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// `class_id,subset,category` rows in ascending class order.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(u32, Subset)> = Subset::ALL
            .into_iter()
            .flat_map(|s| self.subset(s).iter().map(move |&c| (c, s)))
            .collect();
        rows.sort_unstable();
        let mut out = String::from("class_id,subset,category\n");
        for (c, s) in rows {
            let cat = self.categories.get(&c).map_or("-", |k| k.as_str());
            out.push_str(&format!("{c},{s},{cat}\n"));
        }
        out
    }

    /// Parses the CSV form. Held-out verb/noun sets are reconstructed from the
    /// class table: a held verb or noun is test-held unless it also occurs in a
    /// validation class.
    pub fn parse_csv(text: &str, table: &ClassTable, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == "class_id,subset,category" => {}
            _ => return Err(err(1, "expected header class_id,subset,category".into())),
        }
        let mut out = SplitResult::default();
        for (i, raw) in lines {
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(err(i + 1, format!("expected 3 fields, found {}", f.len())));
            }
            let class_id: u32 = f[0].parse().map_err(|_| err(i + 1, format!("bad class_id {:?}", f[0])))?;
            if !table.contains(class_id) {
                return Err(err(i + 1, format!("class {class_id} not in class table")));
            }
            if out.subset_of(class_id).is_some() {
                return Err(Error::DuplicateId { kind: "split class", id: class_id });
            }
            let subset: Subset = f[1].parse().map_err(|e: Error| err(i + 1, e.to_string()))?;
            match (subset, f[2]) {
                (Subset::Train, "-") => {
                    out.train.insert(class_id);
                }
                (Subset::Train, _) | (_, "-") => {
                    return Err(err(i + 1, "training classes have category '-', others must not".into()))
                }
                (s, cat) => {
                    let cat: Category = cat.parse().map_err(|e: Error| err(i + 1, e.to_string()))?;
                    out.categories.insert(class_id, cat);
                    if s == Subset::Test {
                        out.test.insert(class_id);
                    } else {
                        out.validation.insert(class_id);
                    }
                }
            }
        }
        if out.train.len() + out.validation.len() + out.test.len() != table.len() {
            return Err(err(0, "split does not cover every class in the table".into()));
        }

        let mut val_verbs = BTreeSet::new();
        let mut val_nouns = BTreeSet::new();
        for &c in &out.validation {
            let l = &table.get(c).expect("checked").label;
            val_verbs.insert(l.verb_id);
            val_nouns.insert(l.noun_id);
        }
        for (&c, &cat) in &out.categories {
            let l = &table.get(c).expect("checked").label;
            if matches!(cat, Category::HoV | Category::HoVN) {
                if val_verbs.contains(&l.verb_id) {
                    out.held_out_verbs_val.insert(l.verb_id);
                } else {
                    out.held_out_verbs_test.insert(l.verb_id);
                }
            }
            if matches!(cat, Category::HoN | Category::HoVN) {
                if val_nouns.contains(&l.noun_id) {
                    out.held_out_nouns_val.insert(l.noun_id);
                } else {
                    out.held_out_nouns_test.insert(l.noun_id);
                }
            }
        }
        Ok(out)
    }
}

pub fn save_split(path: impl AsRef<Path>, split: &SplitResult) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, split.to_csv()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_split(path: impl AsRef<Path>, table: &ClassTable) -> Result<SplitResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    SplitResult::parse_csv(&text, table, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ItemKind {
    Class,
    Verb,
    Noun,
}

impl ItemKind {
    pub const ALL: [ItemKind; 3] = [ItemKind::Class, ItemKind::Verb, ItemKind::Noun];

    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::Class => "class",
            ItemKind::Verb => "verb",
            ItemKind::Noun => "noun",
        }
    }
}

/// Exclusive regions of a Venn decomposition: bit `i` of a key is set when
/// the region lies inside set `i`. Empty regions are omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VennRegions(pub BTreeMap<u32, usize>);

impl VennRegions {
    pub fn of(sets: &[BTreeSet<u32>]) -> Self {
        assert!(sets.len() <= 32, "at most 32 sets");
        let universe: BTreeSet<u32> = sets.iter().flatten().copied().collect();
        let mut regions = BTreeMap::new();
        for item in universe {
            let mask = sets
                .iter()
                .enumerate()
                .filter(|(_, s)| s.contains(&item))
                .fold(0u32, |m, (i, _)| m | (1 << i));
            *regions.entry(mask).or_insert(0) += 1;
        }
        VennRegions(regions)
    }

    pub fn get(&self, mask: u32) -> usize {
        self.0.get(&mask).copied().unwrap_or(0)
    }

    /// Region label such as `1&3` (1-based set indices), or with custom names.
    pub fn label(mask: u32, names: &[&str]) -> String {
        names
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, n)| *n)
            .collect::<Vec<_>>()
            .join("&")
    }
}

/// Overlap tables: across splits (per subset and item kind) and within each
/// split (train/val/test, per item kind).
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapStats {
    pub n_splits: usize,
    pub across: BTreeMap<(Subset, ItemKind), VennRegions>,
    pub within: Vec<BTreeMap<ItemKind, VennRegions>>,
}

fn items_of(classes: &BTreeSet<u32>, kind: ItemKind, table: &ClassTable) -> BTreeSet<u32> {
    classes
        .iter()
        .filter_map(|&c| table.get(c))
        .map(|e| match kind {
            ItemKind::Class => e.class_id,
            ItemKind::Verb => e.label.verb_id,
            ItemKind::Noun => e.label.noun_id,
        })
        .collect()
}

pub fn overlap_stats(results: &[SplitResult], table: &ClassTable) -> Result<OverlapStats> {
    if results.is_empty() {
        return Err(Error::Precondition("overlap statistics need at least one split".into()));
    }
    let mut across = BTreeMap::new();
    for subset in Subset::ALL {
        for kind in ItemKind::ALL {
            let sets: Vec<_> = results
                .iter()
                .map(|r| items_of(r.subset(subset), kind, table))
                .collect();
            across.insert((subset, kind), VennRegions::of(&sets));
        }
    }
    let within = results
        .iter()
        .map(|r| {
            ItemKind::ALL
                .into_iter()
                .map(|kind| {
                    let sets: Vec<_> = Subset::ALL
                        .into_iter()
                        .map(|s| items_of(r.subset(s), kind, table))
                        .collect();
                    (kind, VennRegions::of(&sets))
                })
                .collect()
        })
        .collect();
    Ok(OverlapStats {
        n_splits: results.len(),
        across,
        within,
    })
}

impl OverlapStats {
    /// `scope,subset,kind,region,count` rows. Across-split regions name split
    /// indices (`1&2`); within-split regions name subsets (`train&test`).
    pub fn to_csv(&self) -> String {
        let split_names: Vec<String> = (1..=self.n_splits).map(|i| i.to_string()).collect();
        let split_refs: Vec<&str> = split_names.iter().map(String::as_str).collect();
        let subset_names = ["train", "val", "test"];
        let mut out = String::from("scope,subset,kind,region,count\n");
        for ((subset, kind), regions) in &self.across {
            for (&mask, &count) in &regions.0 {
                out.push_str(&format!(
                    "across,{subset},{},{},{count}\n",
                    kind.as_str(),
                    VennRegions::label(mask, &split_refs)
                ));
            }
        }
        for (i, per_kind) in self.within.iter().enumerate() {
            for (kind, regions) in per_kind {
                for (&mask, &count) in &regions.0 {
                    out.push_str(&format!(
                        "split{},-,{},{},{count}\n",
                        i + 1,
                        kind.as_str(),
                        VennRegions::label(mask, &subset_names)
                    ));
                }
            }
        }
        out
    }
}
