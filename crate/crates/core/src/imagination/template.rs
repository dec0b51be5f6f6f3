//! Pre-authored slot templates, the base-fidelity floor.
//!
//! A template maps each schema field to a fill rule. Text rules pick one of
//! several sentence skeletons and fill `{slot}` placeholders from filler
//! lists; `{name}`, `{sector}`, `{type}` and `{risk}` come from the node.
//! Every choice is a draw from the node's seed stream, so rendering is pure.

use serde_json::{Map, Value};

use crate::procgen::{pick_index, uniform_int, unit_float, NodeRecord, NodeSeed};
use crate::schema::{GeneratedDocument, SchemaDef};

pub type Slots = &'static [(&'static str, &'static [&'static str])];

#[derive(Debug, Clone, Copy)]
pub enum FieldTemplate {
    /// One sentence.
    Sentence {
        skeletons: &'static [&'static str],
        slots: Slots,
    },
    /// Between `min` and `max` sentences, no two alike.
    SentenceList {
        min: usize,
        max: usize,
        skeletons: &'static [&'static str],
        slots: Slots,
    },
    /// The node's risk label, for enum fields coupled to physics.
    NodeRisk,
    Integer {
        min: i64,
        max: i64,
    },
    /// Uniform real rounded down to one decimal place.
    Real {
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub fields: &'static [(&'static str, FieldTemplate)],
}

const CONTEXT_KEYS: [&str; 4] = ["name", "sector", "type", "risk"];

// Streams 1000 + 100 * field + 16 * item + offset; names use 100..=122.
fn stream(field: usize, item: usize, offset: usize) -> u64 {
    1000 + 100 * field as u64 + 16 * item as u64 + offset as u64
}

fn fill(
    skeleton: &str,
    slots: Slots,
    node: &NodeRecord,
    seed: NodeSeed,
    field: usize,
    item: usize,
) -> String {
    let mut out = String::with_capacity(skeleton.len() + 32);
    let mut rest = skeleton;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').expect("unterminated placeholder");
        let key = &after[..close];
        match key {
            "name" => out.push_str(&node.display_name),
            "sector" => out.push_str(&node.sector),
            "type" => out.push_str(node.node_type.as_str()),
            "risk" => out.push_str(node.risk.as_str()),
            _ => {
                let (pos, (_, words)) = slots
                    .iter()
                    .enumerate()
                    .find(|(_, (slot, _))| *slot == key)
                    .unwrap_or_else(|| panic!("unknown slot {{{key}}}"));
                let w = pick_index(seed, stream(field, item, pos + 1), words.len());
                out.push_str(words[w]);
            }
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}

impl Template {
    pub fn render(&self, schema: &SchemaDef, node: &NodeRecord, seed: NodeSeed) -> GeneratedDocument {
        let mut values = Map::new();
        for (f, (name, rule)) in self.fields.iter().enumerate() {
            let value = match *rule {
                FieldTemplate::Sentence { skeletons, slots } => {
                    let s = pick_index(seed, stream(f, 0, 0), skeletons.len());
                    Value::String(fill(skeletons[s], slots, node, seed, f, 0))
                }
                FieldTemplate::SentenceList {
                    min,
                    max,
                    skeletons,
                    slots,
                } => {
                    let count = uniform_int(seed, stream(f, 15, 15), min as i64, max as i64) as usize;
                    let mut items: Vec<Value> = Vec::with_capacity(count);
                    let mut item = 0;
                    // Repeats are accepted once 3 * count draws have been spent.
                    while items.len() < count {
                        let s = pick_index(seed, stream(f, item, 0), skeletons.len());
                        let text = Value::String(fill(skeletons[s], slots, node, seed, f, item));
                        if !items.contains(&text) || item >= count * 3 {
                            items.push(text);
                        }
                        item += 1;
                    }
                    Value::Array(items)
                }
                FieldTemplate::NodeRisk => Value::String(node.risk.as_str().to_string()),
                FieldTemplate::Integer { min, max } => Value::from(uniform_int(seed, stream(f, 0, 0), min, max)),
                FieldTemplate::Real { min, max } => {
                    let x = min + unit_float(seed, stream(f, 0, 0)) * (max - min);
                    Value::from(((x * 10.0).floor() / 10.0).clamp(min, max))
                }
            };
            values.insert((*name).to_string(), value);
        }
        GeneratedDocument {
            schema_name: schema.name.clone(),
            schema_version: schema.version,
            values,
        }
    }

    /// Every placeholder used by a skeleton, paired with whether it resolves.
    pub fn placeholders(&self) -> Vec<(&'static str, bool)> {
        let mut out = Vec::new();
        for (_, rule) in self.fields {
            let (skeletons, slots) = match *rule {
                FieldTemplate::Sentence { skeletons, slots }
                | FieldTemplate::SentenceList {
                    skeletons, slots, ..
                } => (skeletons, slots),
                _ => continue,
            };
            for sk in skeletons {
                let mut rest: &'static str = sk;
                while let Some(open) = rest.find('{') {
                    let after = &rest[open + 1..];
                    let Some(close) = after.find('}') else {
                        out.push((after, false));
                        break;
                    };
                    let key = &after[..close];
                    let ok = CONTEXT_KEYS.contains(&key) || slots.iter().any(|(s, _)| *s == key);
                    out.push((key, ok));
                    rest = &after[close + 1..];
                }
            }
        }
        out
    }
}
