//! Text weight-file format.
//!
//! ```text
//! splitig-model v1
//! kind mlp-classifier
//! activation tanh
//! layer_sizes 2,8,2
//! target_index 0
//! seed 7
//! training_accuracy 0.985
//! param layer0.bias 8
//! 0.0000000000000000e0
//! ...
//! end
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! finite `f64` exactly. `seed` and `training_accuracy` may be `none`.
//! Lines starting with `#` between fields are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Activation, ModelKind, ModelSpec};
use crate::error::{Error, Result};

pub const FORMAT_HEADER: &str = "splitig-model v1";
const FORMAT_MAGIC: &str = "splitig-model";

pub fn render_model(spec: &ModelSpec) -> Result<String> {
    spec.validate()?;
    let mut out = String::new();
    let sizes: Vec<String> = spec.layer_sizes.iter().map(usize::to_string).collect();
    writeln!(out, "{FORMAT_HEADER}").unwrap();
    writeln!(out, "kind {}", spec.kind).unwrap();
    writeln!(out, "activation {}", spec.activation).unwrap();
    writeln!(out, "layer_sizes {}", sizes.join(",")).unwrap();
    writeln!(out, "target_index {}", spec.target_index).unwrap();
    match spec.seed {
        Some(s) => writeln!(out, "seed {s}").unwrap(),
        None => writeln!(out, "seed none").unwrap(),
    }
    match spec.training_accuracy {
        Some(a) => writeln!(out, "training_accuracy {a}").unwrap(),
        None => writeln!(out, "training_accuracy none").unwrap(),
    }
    for (name, values) in &spec.parameters {
        writeln!(out, "param {name} {}", values.len()).unwrap();
        for v in values {
            writeln!(out, "{v:.16e}").unwrap();
        }
    }
    writeln!(out, "end").unwrap();
    Ok(out)
}

pub fn save_model(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
    let text = render_model(spec)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, field, format!("cannot parse `{s}`")))
}

pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, FORMAT_HEADER)) => {}
        Some((_, l)) if l.starts_with(FORMAT_MAGIC) => {
            return Err(Error::Version(format!("unsupported format version `{l}`")))
        }
        Some((n, _)) => return Err(parse_err(n, "header", format!("expected `{FORMAT_HEADER}`"))),
        None => return Err(parse_err(1, "header", "empty file")),
    }

    let mut kind = None;
    let mut activation = None;
    let mut layer_sizes = None;
    let mut target_index = None;
    let mut seed = None;
    let mut training_accuracy = None;
    let mut parameters = BTreeMap::new();
    let mut finished = false;

    while let Some((n, line)) = lines.next() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "kind" => kind = Some(rest.trim().parse::<ModelKind>()?),
            "activation" => {
                activation = Some(
                    rest.trim()
                        .parse::<Activation>()
                        .map_err(|e| parse_err(n, "activation", e.to_string()))?,
                )
            }
            "layer_sizes" => {
                let sizes = rest
                    .split(',')
                    .map(|s| parse_num::<usize>(n, "layer_sizes", s))
                    .collect::<Result<Vec<_>>>()?;
                layer_sizes = Some(sizes);
            }
            "target_index" => target_index = Some(parse_num::<usize>(n, "target_index", rest)?),
            "seed" => {
                seed = Some(match rest.trim() {
                    "none" => None,
                    s => Some(parse_num::<u64>(n, "seed", s)?),
                })
            }
            "training_accuracy" => {
                training_accuracy = Some(match rest.trim() {
                    "none" => None,
                    s => Some(parse_num::<f64>(n, "training_accuracy", s)?),
                })
            }
            "param" => {
                let mut parts = rest.split_whitespace();
                let name = parts
                    .next()
                    .ok_or_else(|| parse_err(n, "param", "missing parameter name"))?
                    .to_string();
                let count: usize = parse_num(
                    n,
                    &name,
                    parts.next().ok_or_else(|| parse_err(n, &name, "missing value count"))?,
                )?;
                let mut values = Vec::with_capacity(count);
                for k in 0..count {
                    let (vn, vl) = lines.next().ok_or_else(|| {
                        parse_err(n, &name, format!("file ends after {k} of {count} values"))
                    })?;
                    let v: f64 = parse_num(vn, &name, vl)?;
                    if !v.is_finite() {
                        return Err(parse_err(vn, &name, "non-finite value"));
                    }
                    values.push(v);
                }
                if parameters.insert(name.clone(), values).is_some() {
                    return Err(parse_err(n, &name, "duplicate parameter"));
                }
            }
            "end" => {
                finished = true;
                break;
            }
            other => return Err(parse_err(n, other, "unknown key")),
        }
    }
    if !finished {
        return Err(parse_err(text.lines().count(), "end", "missing `end` marker (truncated file?)"));
    }
    let missing = |field: &str| parse_err(1, field, "required header field missing");
    let spec = ModelSpec {
        kind: kind.ok_or_else(|| missing("kind"))?,
        activation: activation.ok_or_else(|| missing("activation"))?,
        layer_sizes: layer_sizes.ok_or_else(|| missing("layer_sizes"))?,
        target_index: target_index.ok_or_else(|| missing("target_index"))?,
        seed: seed.unwrap_or(None),
        training_accuracy: training_accuracy.unwrap_or(None),
        parameters,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::FeatureVector;
    use crate::zoo::make_analytic;

    fn sample() -> ModelSpec {
        make_analytic(
            ModelKind::LogisticSaturator,
            &FeatureVector::new(vec![0.1, 1.0 / 3.0]).unwrap(),
            -2.5e-17,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = sample();
        let back = parse_model(&render_model(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = render_model(&sample()).unwrap();
        for cut in [text.len() / 3, text.len() / 2, text.len() - 5] {
            let err = parse_model(&text[..cut]).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{err:?}");
        }
    }

    #[test]
    fn comment_lines_are_ignored() {
        let spec = sample();
        let text = render_model(&spec).unwrap().replacen('\n', "\n# note = 1\n\n", 1);
        assert_eq!(parse_model(&text).unwrap(), spec);
    }

    #[test]
    fn unknown_kind_is_a_version_error() {
        let text = render_model(&sample())
            .unwrap()
            .replace("kind logistic-saturator", "kind resnet-50");
        assert!(matches!(parse_model(&text), Err(Error::Version(_))));
    }

    #[test]
    fn other_version_is_rejected() {
        let text = render_model(&sample())
            .unwrap()
            .replace(FORMAT_HEADER, "splitig-model v9");
        assert!(matches!(parse_model(&text), Err(Error::Version(_))));
    }

    #[test]
    fn bad_value_reports_line_and_field() {
        let text = render_model(&sample()).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let idx = lines.iter().position(|l| l.starts_with("param scale")).unwrap();
        lines[idx + 1] = "ten";
        let err = parse_model(&lines.join("\n")).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: idx + 2,
                field: "scale".into(),
                message: "cannot parse `ten`".into()
            }
        );
    }
}
