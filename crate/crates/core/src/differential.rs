//! Comparison of engine results against the oracle.

use std::fmt;

use crate::engine::InferenceResult;
use crate::reference::{Accumulator, ReferenceOutput};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mismatch {
    Class { engine: usize, oracle: usize },
    LogitCount { engine: usize, oracle: usize },
    Logit { index: usize, engine: i64, oracle: i64 },
    IntermediateCount { engine: usize, oracle: usize },
    Shape { layer: usize },
    Feature { layer: usize, channel: usize, h: usize, w: usize, engine: i8, oracle: i8 },
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mismatch::Class { engine, oracle } => write!(f, "class: engine {engine}, oracle {oracle}"),
            Mismatch::LogitCount { engine, oracle } => write!(f, "logit count: engine {engine}, oracle {oracle}"),
            Mismatch::Logit { index, engine, oracle } => {
                write!(f, "logit {index}: engine {engine}, oracle {oracle}")
            }
            Mismatch::IntermediateCount { engine, oracle } => {
                write!(f, "feature-map count: engine {engine}, oracle {oracle}")
            }
            Mismatch::Shape { layer } => write!(f, "layer {layer}: feature-map shape differs"),
            Mismatch::Feature { layer, channel, h, w, engine, oracle } => write!(
                f,
                "layer {layer} at (c={channel}, h={h}, w={w}): engine {engine:+}, oracle {oracle:+}"
            ),
        }
    }
}

/// First difference between an engine run and the oracle, or `None`.
///
/// Feature-maps are compared only when the engine recorded them. Bits the
/// engine marks as don't-care are ignored; pooled outputs are always compared.
pub fn first_mismatch<A: Accumulator>(engine: &InferenceResult, oracle: &ReferenceOutput<A>) -> Option<Mismatch> {
    if engine.logits.len() != oracle.logits.len() {
        return Some(Mismatch::LogitCount {
            engine: engine.logits.len(),
            oracle: oracle.logits.len(),
        });
    }
    for (index, (&e, o)) in engine.logits.iter().zip(&oracle.logits).enumerate() {
        let o = o.to_i64().expect("accumulator fits i64");
        if e as i64 != o {
            return Some(Mismatch::Logit {
                index,
                engine: e as i64,
                oracle: o,
            });
        }
    }
    if engine.class_id != oracle.class_id {
        return Some(Mismatch::Class {
            engine: engine.class_id,
            oracle: oracle.class_id,
        });
    }
    let Some(inter) = &engine.intermediates else {
        return None;
    };
    if inter.len() != oracle.intermediates.len() {
        return Some(Mismatch::IntermediateCount {
            engine: inter.len(),
            oracle: oracle.intermediates.len(),
        });
    }
    for (e, o) in inter.iter().zip(&oracle.intermediates) {
        let s = o.shape();
        if e.tensor.shape() != s {
            return Some(Mismatch::Shape { layer: e.layer });
        }
        for h in 0..s.height {
            for w in 0..s.width {
                for c in 0..s.channels {
                    let idx = s.index(c, h, w);
                    if e.dont_care.as_ref().is_some_and(|m| m.get(idx)) {
                        continue;
                    }
                    let ev = if e.tensor.get(c, h, w) { 1 } else { -1 };
                    let ov = o.get(c, h, w);
                    if ev != ov {
                        return Some(Mismatch::Feature {
                            layer: e.layer,
                            channel: c,
                            h,
                            w,
                            engine: ev,
                            oracle: ov,
                        });
                    }
                }
            }
        }
    }
    None
}
