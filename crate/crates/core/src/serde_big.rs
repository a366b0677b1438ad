//! Big integers cross every JSON boundary as decimal strings. Plain JSON
//! numbers are also accepted on input.

use serde::{Deserialize, Deserializer, Serializer};

#[derive(Deserialize)]
#[serde(untagged)]
enum IntRepr {
    Text(String),
    Signed(i64),
    Unsigned(u64),
}

impl IntRepr {
    fn into_text(self) -> String {
        match self {
            IntRepr::Text(s) => s,
            IntRepr::Signed(v) => v.to_string(),
            IntRepr::Unsigned(v) => v.to_string(),
        }
    }
}

pub mod bigint {
    use super::*;
    use num_bigint::BigInt;

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let text = IntRepr::deserialize(d)?.into_text();
        text.trim().parse().map_err(serde::de::Error::custom)
    }
}

pub mod biguint {
    use super::*;
    use num_bigint::BigUint;

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = IntRepr::deserialize(d)?.into_text();
        text.trim().parse().map_err(serde::de::Error::custom)
    }
}

pub mod bigint4 {
    use super::*;
    use num_bigint::BigInt;
    use serde::ser::SerializeTuple;

    pub fn serialize<S: Serializer>(v: &[BigInt; 4], s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(4)?;
        for c in v {
            t.serialize_element(&c.to_string())?;
        }
        t.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[BigInt; 4], D::Error> {
        let raw: Vec<IntRepr> = Vec::deserialize(d)?;
        if raw.len() != 4 {
            return Err(serde::de::Error::custom(format!("expected 4 coordinates, got {}", raw.len())));
        }
        let mut out: [BigInt; 4] = Default::default();
        for (slot, r) in out.iter_mut().zip(raw) {
            *slot = r.into_text().trim().parse().map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}

pub mod biguint_vec {
    use super::*;
    use num_bigint::BigUint;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for c in v {
            seq.serialize_element(&c.to_string())?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let raw: Vec<IntRepr> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|r| r.into_text().trim().parse().map_err(serde::de::Error::custom))
            .collect()
    }
}
