//! Serde adapters writing complex numbers as `{"re": …, "im": …}`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for ComplexJson {
    fn from(z: C64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<ComplexJson> for C64 {
    fn from(z: ComplexJson) -> Self {
        C64::new(z.re, z.im)
    }
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        ComplexJson::from(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        ComplexJson::deserialize(d).map(C64::from)
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|z| ComplexJson::from(*z)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Vec::<ComplexJson>::deserialize(d).map(|v| v.into_iter().map(C64::from).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Wrap {
        #[serde(with = "scalar")]
        z: C64,
        #[serde(with = "vec")]
        v: Vec<C64>,
    }

    #[test]
    fn round_trip_shape() {
        let w = Wrap {
            z: C64::new(1.5, -2.0),
            v: vec![C64::new(0.0, 1.0)],
        };
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"z":{"re":1.5,"im":-2.0},"v":[{"re":0.0,"im":1.0}]}"#);
        assert_eq!(serde_json::from_str::<Wrap>(&s).unwrap(), w);
    }
}
