use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLASS_TABLE_HEADER: &str = "class_id,verb_id,noun_id,verb_text,noun_text,n_instances";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLabel {
    pub verb_id: u32,
    pub noun_id: u32,
    pub verb_text: String,
    pub noun_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub class_id: u32,
    pub label: ActionLabel,
    pub n_instances: u32,
}

/// The universe of verb–noun action classes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassTable {
    entries: Vec<ClassEntry>,
    index: BTreeMap<u32, usize>,
}

impl ClassTable {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut pairs = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.class_id, i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "class",
                    id: e.class_id,
                });
            }
            if !pairs.insert((e.label.verb_id, e.label.noun_id)) {
                return Err(Error::Precondition(format!(
                    "verb {} and noun {} form more than one class",
                    e.label.verb_id, e.label.noun_id
                )));
            }
            if e.n_instances == 0 {
                return Err(Error::Precondition(format!(
                    "class {} has zero instances",
                    e.class_id
                )));
            }
        }
        Ok(Self { entries, index })
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassEntry> {
        self.index.get(&class_id).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.index.contains_key(&class_id)
    }

    /// Class ids in ascending order.
    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.index.keys().copied()
    }

    pub fn verbs(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|e| e.label.verb_id).collect()
    }

    pub fn nouns(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|e| e.label.noun_id).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::from(CLASS_TABLE_HEADER);
        out.push('\n');
        for e in &self.entries {
            for t in [&e.label.verb_text, &e.label.noun_text] {
                if t.contains([',', '\n', '\r']) {
                    return Err(Error::Format(format!(
                        "class {}: text {t:?} cannot be written without quoting",
                        e.class_id
                    )));
                }
            }
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.class_id,
                e.label.verb_id,
                e.label.noun_id,
                e.label.verb_text,
                e.label.noun_text,
                e.n_instances
            ));
        }
        Ok(out)
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == CLASS_TABLE_HEADER => {}
            Some((_, h)) => return Err(err(1, format!("unexpected header {h:?}"))),
            None => return Err(err(1, "missing header".into())),
        }
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in lines {
            let lineno = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(err(
                    lineno,
                    format!(
                        "expected 6 fields, found {} (texts may not contain commas)",
                        fields.len()
                    ),
                ));
            }
            let num = |idx: usize, name: &str| -> Result<u32> {
                fields[idx]
                    .trim()
                    .parse()
                    .map_err(|_| err(lineno, format!("bad {name} {:?}", fields[idx])))
            };
            let class_id = num(0, "class_id")?;
            if !seen.insert(class_id) {
                return Err(Error::DuplicateId {
                    kind: "class",
                    id: class_id,
                });
            }
            let n_instances = num(5, "n_instances")?;
            if n_instances == 0 {
                return Err(err(lineno, "n_instances must be at least 1".into()));
            }
            entries.push(ClassEntry {
                class_id,
                label: ActionLabel {
                    verb_id: num(1, "verb_id")?,
                    noun_id: num(2, "noun_id")?,
                    verb_text: fields[3].to_string(),
                    noun_text: fields[4].to_string(),
                },
                n_instances,
            });
        }
        Self::new(entries)
    }
}

pub fn load_class_table(path: impl AsRef<Path>) -> Result<ClassTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    ClassTable::parse_csv(&text, path)
}

pub fn save_class_table(path: impl AsRef<Path>, table: &ClassTable) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table.to_csv()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
