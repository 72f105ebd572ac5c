//! Provenance tags for converted network entries.
//!
//! Every weight and bias entry produced by a conversion is either a structural
//! constant (0, +1 or -1 forced by the construction pattern) or free, in which case
//! it records which source-model parameters its value was computed from. Counting
//! distinct sources rather than entries keeps tied copies (the same slope difference
//! appearing in several merged rows) from being counted twice.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which scalar of a source activation a parameter is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKind {
    /// Slope of segment `j` (0-based).
    Slope(u32),
    /// Breakpoint `j` (0-based).
    Breakpoint(u32),
    /// Intercept of the first segment.
    Intercept,
}

/// Identifies one scalar parameter of a source KAN: layer, output row, input column
/// and the kind of scalar within that activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ParamId {
    pub layer: u32,
    pub output: u32,
    pub input: u32,
    pub kind: ParamKind,
}

impl ParamId {
    pub fn new(layer: usize, output: usize, input: usize, kind: ParamKind) -> Self {
        ParamId {
            layer: layer as u32,
            output: output as u32,
            input: input as u32,
            kind,
        }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}.o{}.i{}.", self.layer, self.output, self.input)?;
        match self.kind {
            ParamKind::Slope(j) => write!(f, "a{j}"),
            ParamKind::Breakpoint(j) => write!(f, "b{j}"),
            ParamKind::Intercept => write!(f, "c"),
        }
    }
}

impl FromStr for ParamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::invalid("parameter id", format!("malformed parameter id `{s}`"));
        let mut parts = s.split('.');
        let mut field = |prefix: char| -> Result<u32, Error> {
            let p = parts.next().ok_or_else(bad)?;
            p.strip_prefix(prefix)
                .and_then(|n| n.parse().ok())
                .ok_or_else(bad)
        };
        let layer = field('l')?;
        let output = field('o')?;
        let input = field('i')?;
        let kind = match parts.next().ok_or_else(bad)? {
            "c" => ParamKind::Intercept,
            k if k.starts_with('a') => ParamKind::Slope(k[1..].parse().map_err(|_| bad())?),
            k if k.starts_with('b') => ParamKind::Breakpoint(k[1..].parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(ParamId {
            layer,
            output,
            input,
            kind,
        })
    }
}

impl From<ParamId> for String {
    fn from(id: ParamId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for ParamId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Structural,
    /// Sources are kept sorted and deduplicated.
    Free(Vec<ParamId>),
}

impl Tag {
    pub fn free(sources: impl IntoIterator<Item = ParamId>) -> Self {
        let set: BTreeSet<ParamId> = sources.into_iter().collect();
        Tag::Free(set.into_iter().collect())
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Tag::Free(_))
    }

    pub fn sources(&self) -> &[ParamId] {
        match self {
            Tag::Structural => &[],
            Tag::Free(s) => s,
        }
    }
}

/// Tags for one affine layer: `weight` is row-major and matches the weight matrix shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTags {
    pub weight: Vec<Tag>,
    pub bias: Vec<Tag>,
}

/// Tag of a sum of products `Σ_j a_j · b_j` where each factor carries its own tag.
///
/// A term whose factor is a structural zero contributes nothing. If every remaining
/// factor is structural, the result is a forced constant; otherwise it is free and
/// inherits the union of the free factors' sources.
pub(crate) fn product_tag<'a>(terms: impl IntoIterator<Item = ((&'a Tag, f64), (&'a Tag, f64))>) -> Tag {
    let structural_zero = |t: &Tag, v: f64| matches!(t, Tag::Structural) && v == 0.0;
    let mut sources = BTreeSet::new();
    let mut any_free = false;
    for ((ta, va), (tb, vb)) in terms {
        if structural_zero(ta, va) || structural_zero(tb, vb) {
            continue;
        }
        for t in [ta, tb] {
            if let Tag::Free(s) = t {
                any_free = true;
                sources.extend(s.iter().copied());
            }
        }
    }
    if any_free {
        Tag::Free(sources.into_iter().collect())
    } else {
        Tag::Structural
    }
}

/// Tag of `a + b`.
pub(crate) fn sum_tag(a: &Tag, b: &Tag) -> Tag {
    match (a, b) {
        (Tag::Structural, Tag::Structural) => Tag::Structural,
        _ => Tag::free(a.sources().iter().chain(b.sources()).copied()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_id_text_round_trip() {
        for kind in [ParamKind::Slope(3), ParamKind::Breakpoint(0), ParamKind::Intercept] {
            let id = ParamId::new(2, 1, 7, kind);
            assert_eq!(id.to_string().parse::<ParamId>().unwrap(), id);
        }
        assert!("l0.o0.i0".parse::<ParamId>().is_err());
        assert!("l0.o0.i0.z".parse::<ParamId>().is_err());
    }

    #[test]
    fn structural_zero_factor_drops_term() {
        let s = Tag::Structural;
        let f = Tag::free([ParamId::new(0, 0, 0, ParamKind::Slope(0))]);
        assert_eq!(product_tag([((&s, 0.0), (&f, 2.0))]), Tag::Structural);
        assert_eq!(product_tag([((&s, 1.0), (&f, 2.0))]), f);
        assert_eq!(product_tag([((&s, 1.0), (&s, -1.0))]), Tag::Structural);
    }

    #[test]
    fn tag_json_shape() {
        let t = Tag::free([ParamId::new(0, 1, 0, ParamKind::Breakpoint(1))]);
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"{"free":["l0.o1.i0.b1"]}"#);
        assert_eq!(serde_json::to_string(&Tag::Structural).unwrap(), r#""structural""#);
    }
}
