//! JSON has no infinity or NaN; these fields write them as the strings `"inf"`, `"-inf"` and `"nan"`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    Finite(f64),
    Text(String),
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Num::Finite(v)
        } else if v.is_nan() {
            Num::Text("nan".into())
        } else if v > 0.0 {
            Num::Text("inf".into())
        } else {
            Num::Text("-inf".into())
        }
    }
}

impl Num {
    fn value<E: serde::de::Error>(self) -> Result<f64, E> {
        match self {
            Num::Finite(v) => Ok(v),
            Num::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}

pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| Num::from(*x)))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    Vec::<Num>::deserialize(d)?.into_iter().map(Num::value).collect()
}
