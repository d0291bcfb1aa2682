use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{parse_shape_header, parse_value, ParamStore, Real, Tensor};

/// Parsed checkpoint text: ordered header pairs and named tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Checkpoint<T> {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Header lines, a blank line, then one `path:` + snapshot block per
    /// parameter in store order.
    pub fn render(header: &[(String, String)], store: &ParamStore<T>) -> String {
        let mut out = String::new();
        for (k, v) in header {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push('\n');
        for (_, p) in store.iter() {
            let _ = writeln!(out, "path: {}", p.path());
            out.push_str(&p.value().to_snapshot());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = Vec::new();
        let mut lines = text.lines().enumerate().peekable();
        for (i, line) in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got {line:?}") })?;
            header.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut tensors = Vec::new();
        while let Some((i, line)) = lines.next() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let path = line
                .strip_prefix("path:")
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `path:` line, got {line:?}") })?;
            let (si, shape_line) =
                lines.next().ok_or_else(|| Error::Parse { line: i + 2, msg: "missing shape header".into() })?;
            let shape = parse_shape_header(shape_line, si + 1)?;
            let mut data = Vec::new();
            while let Some((_, next)) = lines.peek() {
                if next.trim_start().starts_with("path:") {
                    break;
                }
                let (vi, values) = lines.next().expect("peeked");
                for tok in values.split_whitespace() {
                    data.push(parse_value(tok, vi + 1)?);
                }
            }
            let t = Tensor::new(shape, data)
                .map_err(|e| Error::Parse { line: si + 1, msg: format!("tensor {}: {e}", path.trim()) })?;
            tensors.push((path.trim().to_string(), t));
        }
        Ok(Self { header, tensors })
    }

    /// Copies every tensor into the parameter with the same path. The set of
    /// paths and every shape must match the store exactly.
    pub fn load_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors but the model has {} parameters",
                self.tensors.len(),
                store.len()
            )));
        }
        self.load_matching(store).map(|_| ())
    }

    /// Copies every checkpoint tensor into the parameter with the same path,
    /// leaving parameters the checkpoint lacks untouched. Every checkpoint
    /// path must exist in the store with the same shape. Returns the number
    /// of tensors loaded.
    pub fn load_matching(&self, store: &mut ParamStore<T>) -> Result<usize> {
        for (path, t) in &self.tensors {
            let id = store
                .id(path)
                .ok_or_else(|| Error::Config(format!("checkpoint tensor {path} is not a model parameter")))?;
            let expected = store.value(id).shape().to_vec();
            if expected != t.shape() {
                return Err(Error::Config(format!(
                    "checkpoint tensor {path} has shape {:?}, model expects {expected:?}",
                    t.shape()
                )));
            }
            store.set_value(id, t.clone())?;
        }
        Ok(self.tensors.len())
    }
}
