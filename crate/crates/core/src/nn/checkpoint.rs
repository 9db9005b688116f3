//! Plain-text network checkpoints.
//!
//! ```text
//! betrayal-network 1
//! layers 12:64:tanh 64:64:tanh 64:11:identity
//! heads probe_logits:0:5 message_mean:5:5 value:10:1
//! aux 1
//! meta schema feature-v1
//! values 5708
//! 0.123...
//! ...
//! end
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a save/load cycle
//! restores every parameter bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Scalar;

use super::{Head, LayerSpec, NetworkParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "betrayal-network";

/// A network plus free-form metadata (schema versions, scaler statistics, ids).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub network: NetworkParams<T>,
    pub meta: BTreeMap<String, String>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(network: NetworkParams<T>) -> Self {
        Self {
            network,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn to_text(&self) -> String {
        let net = &self.network;
        let mut out = String::new();
        writeln!(out, "{MAGIC} {CHECKPOINT_VERSION}").unwrap();
        let layers: Vec<String> = net
            .layers()
            .iter()
            .map(|l| format!("{}:{}:{}", l.inputs, l.outputs, l.activation))
            .collect();
        writeln!(out, "layers {}", layers.join(" ")).unwrap();
        let heads: Vec<String> = net
            .heads()
            .iter()
            .map(|h| format!("{}:{}:{}", h.role, h.offset, h.len))
            .collect();
        writeln!(out, "heads {}", heads.join(" ")).unwrap();
        writeln!(out, "aux {}", net.aux().len()).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").unwrap();
        }
        writeln!(out, "values {}", net.len()).unwrap();
        for v in net.values() {
            writeln!(out, "{}", v.as_f64()).unwrap();
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let err = |msg: String| Error::parse(source, msg);
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(format!("file ends before {what}")))
        };

        let header = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(err(format!("not a network checkpoint (header `{header}`)")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err("missing version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }

        let layers = keyed(next("layers")?, "layers", source)?
            .split_whitespace()
            .map(|tok| {
                let f: Vec<&str> = tok.split(':').collect();
                match f.as_slice() {
                    [i, o, a] => Ok(LayerSpec {
                        inputs: i.parse().map_err(|_| err(format!("bad layer `{tok}`")))?,
                        outputs: o.parse().map_err(|_| err(format!("bad layer `{tok}`")))?,
                        activation: a.parse().map_err(err)?,
                    }),
                    _ => Err(err(format!("bad layer `{tok}`"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let heads = keyed(next("heads")?, "heads", source)?
            .split_whitespace()
            .map(|tok| {
                let f: Vec<&str> = tok.split(':').collect();
                match f.as_slice() {
                    [r, o, l] => Ok(Head {
                        role: r.parse().map_err(err)?,
                        offset: o.parse().map_err(|_| err(format!("bad head `{tok}`")))?,
                        len: l.parse().map_err(|_| err(format!("bad head `{tok}`")))?,
                    }),
                    _ => Err(err(format!("bad head `{tok}`"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let aux: usize = keyed(next("aux")?, "aux", source)?
            .trim()
            .parse()
            .map_err(|_| err("bad aux count".into()))?;

        let mut meta = BTreeMap::new();
        let count: usize = loop {
            let line = next("values")?;
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
            } else {
                break keyed(line, "values", source)?
                    .trim()
                    .parse()
                    .map_err(|_| err("bad value count".into()))?;
            }
        };
        let mut values = Vec::with_capacity(count);
        for i in 0..count {
            let line = next("all values")?;
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| err(format!("bad value `{line}` at index {i}")))?;
            values.push(T::of(v));
        }
        if next("end marker")? != "end" {
            return Err(err("missing end marker (truncated or oversized value block)".into()));
        }
        let network = NetworkParams::from_parts(layers, heads, aux, values)?;
        Ok(Self { network, meta })
    }
}

fn keyed<'a>(line: &'a str, key: &str, source: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .map(str::trim_start)
        .ok_or_else(|| Error::parse(source, format!("expected `{key}` line, got `{line}`")))
}

pub fn save_checkpoint<T: Scalar>(checkpoint: &Checkpoint<T>, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_text(&text, &path.display().to_string())
}
