//! Plain-text model checkpoints.
//!
//! ```text
//! qcnn-checkpoint v1
//! theta <f64>
//! window <usize>
//! layers <count>
//! layer <in> <out> <kernel> <dilation> <relu|identity>
//! w <out*in*kernel values, [out][in][tap] order>
//! b <out values>
//! ...                      (one layer/w/b triple per layer, head last)
//! end
//! ```
//!
//! Numbers use Rust's shortest round-trip `f64` formatting, so writing a
//! model is byte-stable and reading it back restores every bit.

use std::fmt::Write as _;
use std::path::Path;

use super::layer::{Activation, ConvLayer};
use super::model::QcnnModel;
use crate::error::{Error, Result};

pub const MAGIC: &str = "qcnn-checkpoint v1";

pub fn to_string(model: &QcnnModel) -> String {
    let mut out = String::new();
    let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "theta {:?}", model.theta).unwrap();
    writeln!(out, "window {}", model.window).unwrap();
    writeln!(out, "layers {}", model.hidden.len() + 1).unwrap();
    for l in model.layers() {
        writeln!(
            out,
            "layer {} {} {} {} {}",
            l.in_channels,
            l.out_channels,
            l.kernel,
            l.dilation,
            l.activation.name()
        )
        .unwrap();
        writeln!(out, "w {}", join(&l.weights)).unwrap();
        writeln!(out, "b {}", join(&l.biases)).unwrap();
    }
    out.push_str("end\n");
    out
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: "<checkpoint>".into(),
        line: line as u64,
        message: msg.into(),
    }
}

pub fn from_str(text: &str) -> Result<QcnnModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| bad(0, format!("unexpected end of checkpoint, expected {what}")))
    };
    let (n, magic) = next("header")?;
    if magic != MAGIC {
        return Err(bad(n, format!("expected `{MAGIC}`")));
    }
    fn field<'a>(n: usize, line: &'a str, key: &str) -> Result<&'a str> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
            .ok_or_else(|| bad(n, format!("expected `{key}`")))
    }
    fn num<T: std::str::FromStr>(n: usize, s: &str) -> Result<T> {
        s.parse().map_err(|_| bad(n, format!("bad number `{s}`")))
    }
    fn floats(n: usize, s: &str) -> Result<Vec<f64>> {
        s.split_whitespace().map(|v| num(n, v)).collect()
    }

    let (n, l) = next("theta")?;
    let theta: f64 = num(n, field(n, l, "theta")?)?;
    let (n, l) = next("window")?;
    let window: usize = num(n, field(n, l, "window")?)?;
    let (n, l) = next("layers")?;
    let count: usize = num(n, field(n, l, "layers")?)?;
    if count < 2 {
        return Err(bad(n, "need at least one hidden layer and a head"));
    }

    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = next("layer")?;
        let parts: Vec<&str> = field(n, l, "layer")?.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(bad(n, "layer needs: in out kernel dilation activation"));
        }
        let activation = match parts[4] {
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            other => return Err(bad(n, format!("unknown activation `{other}`"))),
        };
        let mut layer = ConvLayer::zeros(
            num(n, parts[0])?,
            num(n, parts[1])?,
            num(n, parts[2])?,
            num(n, parts[3])?,
            activation,
        )?;
        let (n, l) = next("weights")?;
        let w = floats(n, field(n, l, "w")?)?;
        if w.len() != layer.weights.len() {
            return Err(bad(n, format!("expected {} weights, got {}", layer.weights.len(), w.len())));
        }
        layer.weights = w;
        let (n, l) = next("biases")?;
        let b = floats(n, field(n, l, "b")?)?;
        if b.len() != layer.biases.len() {
            return Err(bad(n, format!("expected {} biases, got {}", layer.biases.len(), b.len())));
        }
        layer.biases = b;
        layers.push(layer);
    }
    let (n, l) = next("end")?;
    if l != "end" {
        return Err(bad(n, "expected `end`"));
    }

    let head = layers.pop().expect("count >= 2");
    let mut in_ch = 1;
    for l in &layers {
        if l.in_channels != in_ch {
            return Err(Error::Shape("layer channel counts do not chain".into()));
        }
        in_ch = l.out_channels;
    }
    if head.in_channels != in_ch || head.out_channels != 1 {
        return Err(Error::Shape("head must map the last hidden layer to one channel".into()));
    }
    if !(theta > 0.0 && theta < 1.0) || window == 0 {
        return Err(Error::Domain(format!("invalid theta {theta} or window {window}")));
    }
    Ok(QcnnModel {
        hidden: layers,
        head,
        theta,
        window,
    })
}

pub fn save(model: &QcnnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<QcnnModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}
