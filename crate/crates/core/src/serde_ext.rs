//! Serde helpers for reals that may be infinite.
//!
//! JSON has no infinities, so `+inf` and `-inf` are written as the strings
//! `"inf"` and `"-inf"`. NaN is rejected on both sides.

use alloc::collections::BTreeMap;
use serde::de::Error as _;
use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Ext<'a> {
    Num(f64),
    #[serde(borrow)]
    Text(&'a str),
}

fn to_ext(v: f64) -> Option<Ext<'static>> {
    if v.is_nan() {
        None
    } else if v == f64::INFINITY {
        Some(Ext::Text("inf"))
    } else if v == f64::NEG_INFINITY {
        Some(Ext::Text("-inf"))
    } else {
        Some(Ext::Num(v))
    }
}

fn from_ext(e: Ext<'_>) -> Option<f64> {
    match e {
        Ext::Num(v) => Some(v),
        Ext::Text("inf") => Some(f64::INFINITY),
        Ext::Text("-inf") => Some(f64::NEG_INFINITY),
        Ext::Text(_) => None,
    }
}

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    to_ext(*v).ok_or_else(|| S::Error::custom("NaN"))?.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    from_ext(Ext::deserialize(d)?).ok_or_else(|| D::Error::custom("expected a number, \"inf\" or \"-inf\""))
}

/// The same encoding for map values.
pub mod map {
    use super::*;

    pub fn serialize<K: Serialize + Ord, S: Serializer>(m: &BTreeMap<K, f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut out = BTreeMap::new();
        for (k, v) in m {
            out.insert(k, to_ext(*v).ok_or_else(|| S::Error::custom("NaN"))?);
        }
        out.serialize(s)
    }

    pub fn deserialize<'de, K, D>(d: D) -> Result<BTreeMap<K, f64>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        D: Deserializer<'de>,
    {
        let raw = BTreeMap::<K, Ext<'de>>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                from_ext(v)
                    .map(|v| (k, v))
                    .ok_or_else(|| D::Error::custom("expected a number, \"inf\" or \"-inf\""))
            })
            .collect()
    }
}
