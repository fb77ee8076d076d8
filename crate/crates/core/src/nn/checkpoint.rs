//! Portable text checkpoints.
//!
//! ```text
//! fhcomp-checkpoint v1
//! meta <key> <value...>          (any number, values are single-line text)
//! net <name>
//! input <n>
//! hidden <w1> <w2> ...
//! actions <n>
//! value_heads <n>
//! policy_head <true|false>
//! params <count>
//! <count numbers, whitespace separated, layer by layer: weights row-major
//!  (outputs x inputs) then biases>
//! end
//! ```
//!
//! Numbers are written in shortest round-trip form, so a save/load cycle
//! reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{MultiHeadNet, NetShape};

pub const MAGIC: &str = "fhcomp-checkpoint v1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub nets: Vec<(String, MultiHeadNet)>,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Option<&MultiHeadNet> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }

    pub fn require_net(&self, name: &str) -> Result<&MultiHeadNet> {
        self.net(name).ok_or_else(|| Error::Checkpoint(format!("missing net `{name}`")))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| Error::Checkpoint(format!("missing meta `{key}`")))
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{MAGIC}")?;
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::Checkpoint(format!("meta `{k}` is not single-line text")));
            }
            writeln!(out, "meta {k} {v}")?;
        }
        for (name, net) in &self.nets {
            let s = net.shape();
            writeln!(out, "net {name}")?;
            writeln!(out, "input {}", s.input)?;
            let hidden: Vec<String> = s.hidden.iter().map(ToString::to_string).collect();
            writeln!(out, "hidden {}", hidden.join(" "))?;
            writeln!(out, "actions {}", s.n_actions)?;
            writeln!(out, "value_heads {}", s.value_heads)?;
            writeln!(out, "policy_head {}", s.policy_head)?;
            writeln!(out, "params {}", net.param_count())?;
            for chunk in net.params().chunks(8) {
                let line: Vec<String> = chunk.iter().map(|p| format!("{p:?}")).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
            writeln!(out, "end")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
        match next()? {
            Some(l) if l.trim_end() == MAGIC => {}
            other => return Err(Error::Checkpoint(format!("bad header {other:?}"))),
        }
        let mut ck = Checkpoint::default();
        while let Some(line) = next()? {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    ck.meta.insert(k.to_string(), v.to_string());
                }
                "net" => {
                    let name = rest.to_string();
                    let mut field = |key: &str| -> Result<String> {
                        let l = next()?.ok_or_else(|| Error::Checkpoint(format!("truncated before `{key}`")))?;
                        match l.trim_end().split_once(' ') {
                            Some((k, v)) if k == key => Ok(v.to_string()),
                            None if l.trim_end() == key => Ok(String::new()),
                            _ => Err(Error::Checkpoint(format!("expected `{key}`, found `{l}`"))),
                        }
                    };
                    let input = parse_usize(&field("input")?)?;
                    let hidden = field("hidden")?.split_whitespace().map(parse_usize).collect::<Result<Vec<_>>>()?;
                    let n_actions = parse_usize(&field("actions")?)?;
                    let value_heads = parse_usize(&field("value_heads")?)?;
                    let policy_head = field("policy_head")?
                        .parse::<bool>()
                        .map_err(|e| Error::Checkpoint(format!("policy_head: {e}")))?;
                    let count = parse_usize(&field("params")?)?;
                    let shape = NetShape { input, hidden, n_actions, value_heads, policy_head };
                    if shape.param_count() != count {
                        return Err(Error::Checkpoint(format!(
                            "net `{name}` declares {count} params, shape needs {}",
                            shape.param_count()
                        )));
                    }
                    let mut params = Vec::with_capacity(count);
                    loop {
                        let l = next()?.ok_or_else(|| Error::Checkpoint(format!("net `{name}` lacks `end`")))?;
                        if l.trim() == "end" {
                            break;
                        }
                        for tok in l.split_whitespace() {
                            params.push(
                                tok.parse::<f64>().map_err(|e| Error::Checkpoint(format!("parameter `{tok}`: {e}")))?,
                            );
                        }
                    }
                    let net = MultiHeadNet::from_params(shape, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
                    ck.nets.push((name, net));
                }
                _ => return Err(Error::Checkpoint(format!("unexpected line `{line}`"))),
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|e| Error::Checkpoint(format!("`{s}`: {e}")))
}
