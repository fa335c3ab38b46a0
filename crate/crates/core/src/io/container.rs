//! Byte-level codec for the safetensors container layout:
//!
//! ```text
//! [u64 LE header length N][N bytes UTF-8 JSON header][raw little-endian payload]
//! ```
//!
//! The header maps tensor names to `{"dtype", "shape", "data_offsets"}`, plus an
//! optional `"__metadata__"` string map. Offsets are relative to the payload.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub(crate) const METADATA_KEY: &str = "__metadata__";

/// Element types the container may declare. Only the floating-point ones can
/// be loaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F64,
    F32,
    F16,
    BF16,
}

impl Dtype {
    pub fn parse(tag: &str) -> Option<Self> {
        match tag {
            "F64" => Some(Dtype::F64),
            "F32" => Some(Dtype::F32),
            "F16" => Some(Dtype::F16),
            "BF16" => Some(Dtype::BF16),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Dtype::F64 => "F64",
            Dtype::F32 => "F32",
            Dtype::F16 => "F16",
            Dtype::BF16 => "BF16",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
            Dtype::F16 | Dtype::BF16 => 2,
        }
    }

    fn decode(self, bytes: &[u8]) -> Vec<f64> {
        match self {
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F16 => bytes
                .chunks_exact(2)
                .map(|c| half::f16::from_le_bytes(c.try_into().unwrap()).to_f64())
                .collect(),
            Dtype::BF16 => bytes
                .chunks_exact(2)
                .map(|c| half::bf16::from_le_bytes(c.try_into().unwrap()).to_f64())
                .collect(),
        }
    }

    fn encode(self, values: &[f64], out: &mut Vec<u8>) {
        match self {
            Dtype::F64 => values.iter().for_each(|v| out.extend(v.to_le_bytes())),
            Dtype::F32 => values.iter().for_each(|&v| out.extend((v as f32).to_le_bytes())),
            Dtype::F16 => values
                .iter()
                .for_each(|&v| out.extend(half::f16::from_f64(v).to_le_bytes())),
            Dtype::BF16 => values
                .iter()
                .for_each(|&v| out.extend(half::bf16::from_f64(v).to_le_bytes())),
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One decoded tensor: original shape, stored dtype, values upcast to f64.
#[derive(Debug, Clone)]
pub(crate) struct RawTensor {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub values: Vec<f64>,
}

#[derive(Debug, Default)]
pub(crate) struct RawContainer {
    pub tensors: BTreeMap<String, RawTensor>,
    pub metadata: BTreeMap<String, String>,
}

/// Header entries in file order, duplicates preserved so they can be rejected.
struct OrderedEntries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = OrderedEntries;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    entries.push((k, v));
                }
                Ok(OrderedEntries(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

#[derive(Deserialize)]
struct TensorHeader {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: (usize, usize),
}

pub(crate) fn decode(bytes: &[u8]) -> Result<RawContainer> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the 8-byte header length prefix",
            bytes.len()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let available = (bytes.len() - 8) as u64;
    if header_len > available {
        return Err(Error::Format(format!(
            "header length {header_len} exceeds remaining file size {available}"
        )));
    }
    let header_end = 8 + header_len as usize;
    let header = std::str::from_utf8(&bytes[8..header_end])
        .map_err(|e| Error::Format(format!("header is not UTF-8: {e}")))?;
    let entries: OrderedEntries = serde_json::from_str(header.trim_end())
        .map_err(|e| Error::Format(format!("header is not a JSON object: {e}")))?;
    let payload = &bytes[header_end..];

    let mut out = RawContainer::default();
    let mut seen = std::collections::HashSet::new();
    for (name, value) in entries.0 {
        if !seen.insert(name.clone()) {
            return Err(Error::Tensor {
                tensor: name,
                message: "duplicate name in header".into(),
            });
        }
        if name == METADATA_KEY {
            out.metadata = serde_json::from_value(value)
                .map_err(|e| Error::Format(format!("__metadata__ must map strings to strings: {e}")))?;
            continue;
        }
        let info: TensorHeader = serde_json::from_value(value).map_err(|e| Error::Tensor {
            tensor: name.clone(),
            message: format!("bad header entry: {e}"),
        })?;
        let dtype = Dtype::parse(&info.dtype).ok_or_else(|| Error::UnsupportedDtype {
            tensor: name.clone(),
            dtype: info.dtype.clone(),
        })?;
        let (start, end) = info.data_offsets;
        if end < start {
            return Err(Error::Tensor {
                tensor: name,
                message: format!("data offsets ({start}, {end}) are reversed"),
            });
        }
        if end > payload.len() {
            return Err(Error::Tensor {
                tensor: name,
                message: format!(
                    "payload truncated: tensor ends at byte {end} but payload has {} bytes",
                    payload.len()
                ),
            });
        }
        let count = info
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Tensor {
                tensor: name.clone(),
                message: "element count overflows".into(),
            })?;
        if count * dtype.size() != end - start {
            return Err(Error::Tensor {
                tensor: name,
                message: format!(
                    "shape {:?} of {dtype} needs {} bytes, offsets span {}",
                    info.shape,
                    count * dtype.size(),
                    end - start
                ),
            });
        }
        let values = dtype.decode(&payload[start..end]);
        out.tensors.insert(
            name,
            RawTensor {
                shape: info.shape,
                dtype,
                values,
            },
        );
    }
    Ok(out)
}

pub(crate) fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || name == METADATA_KEY || name.chars().any(char::is_control) {
        return Err(Error::InvalidArgument(format!(
            "tensor name {name:?} is empty, reserved, or contains control characters"
        )));
    }
    Ok(())
}

/// Encodes tensors in lexicographic name order with every value stored as
/// `dtype`. The output is a pure function of the inputs.
pub(crate) fn encode<'a>(
    tensors: impl IntoIterator<Item = (&'a str, &'a [usize], &'a [f64])>,
    metadata: &BTreeMap<String, String>,
    dtype: Dtype,
) -> Result<Vec<u8>> {
    let mut sorted: Vec<_> = tensors.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));

    let mut header = serde_json::Map::new();
    if !metadata.is_empty() {
        header.insert(METADATA_KEY.into(), serde_json::to_value(metadata)?);
    }
    let mut payload = Vec::new();
    for (name, shape, values) in &sorted {
        validate_name(name)?;
        let start = payload.len();
        dtype.encode(values, &mut payload);
        if dtype != Dtype::F64 {
            let stored = dtype.decode(&payload[start..]);
            if let Some(i) = stored.iter().position(|v| !v.is_finite()) {
                return Err(Error::Tensor {
                    tensor: name.to_string(),
                    message: format!("value {} is not representable as {dtype}", values[i]),
                });
            }
        }
        header.insert(
            name.to_string(),
            serde_json::json!({
                "dtype": dtype.tag(),
                "shape": shape,
                "data_offsets": [start, payload.len()],
            }),
        );
    }
    let mut header_bytes = serde_json::to_vec(&Value::Object(header))?;
    header_bytes.resize(header_bytes.len().next_multiple_of(8), b' ');

    let mut out = Vec::with_capacity(8 + header_bytes.len() + payload.len());
    out.extend((header_bytes.len() as u64).to_le_bytes());
    out.extend(header_bytes);
    out.extend(payload);
    Ok(out)
}
