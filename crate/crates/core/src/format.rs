//! JSON model files.
//!
//! ```json
//! { "input_shape": [h, w, c], "num_classes": K,
//!   "layers": [ {"kind": "affine", "weights": [[...]], "bias": [...]},
//!               {"kind": "relu"},
//!               {"kind": "conv", "filters": [[[[...]]]], "bias": [...], "stride": 1, "pad": "zero", "padding": 1},
//!               {"kind": "pwl_activation", "functions": [{"breakpoints": [...], "values": [...]}]} ] }
//! ```
//!
//! Conv filters are nested as `[out_channel][in_channel][row][col]`; `bias`
//! defaults to zeros, `stride` to 1 and `padding` to `kernel_h / 2`. Conv
//! layers are lowered to affine layers on load, so saved files only contain
//! `affine`, `relu` and `pwl_activation`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array4};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::conv::{lower_conv_to_affine, ConvSpec, PadMode};
use crate::error::{Error, Result};
use crate::model::{Layer, NetworkModel};
use crate::pwl::PwlFunction;

#[derive(Deserialize)]
struct RawModel {
    input_shape: [usize; 3],
    num_classes: usize,
    layers: Vec<Value>,
}

#[derive(Deserialize)]
struct RawAffine {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
struct RawConv {
    filters: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    bias: Option<Vec<f64>>,
    #[serde(default)]
    stride: Option<usize>,
    #[serde(default)]
    pad: Option<String>,
    #[serde(default)]
    padding: Option<usize>,
    #[serde(default)]
    input_shape: Option<[usize; 3]>,
}

#[derive(Serialize, Deserialize)]
struct RawPwlLayer {
    functions: Vec<PwlFunction>,
}

pub fn parse_model(text: &str) -> Result<NetworkModel> {
    let raw: RawModel = serde_json::from_str(text)?;
    let [h, w, c] = raw.input_shape;
    // activation shape as (h, w, c); affine outputs are treated as (1, 1, n)
    let mut shape = (h, w, c);
    let mut layers = Vec::with_capacity(raw.layers.len());
    for (i, value) in raw.layers.into_iter().enumerate() {
        let kind = value
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(Some(i), "missing \"kind\""))?
            .to_owned();
        let dim = shape.0 * shape.1 * shape.2;
        let layer = match kind.as_str() {
            "affine" => {
                let a: RawAffine = serde_json::from_value(value).map_err(|e| Error::parse(Some(i), e.to_string()))?;
                let layer = affine_from_rows(i, a.weights, a.bias)?;
                if let Layer::Affine(ref aff) = layer {
                    if aff.input_dim() != dim {
                        return Err(Error::parse(
                            Some(i),
                            format!("weights have {} columns, input dimension is {dim}", aff.input_dim()),
                        ));
                    }
                    shape = (1, 1, aff.output_dim());
                }
                layer
            }
            "relu" => Layer::Relu,
            "pwl_activation" => {
                let p: RawPwlLayer = serde_json::from_value(value).map_err(|e| Error::parse(Some(i), e.to_string()))?;
                if p.functions.len() != dim {
                    return Err(Error::parse(
                        Some(i),
                        format!("{} functions for {dim} neurons", p.functions.len()),
                    ));
                }
                Layer::Pwl(p.functions)
            }
            "conv" => {
                let raw: RawConv = serde_json::from_value(value).map_err(|e| Error::parse(Some(i), e.to_string()))?;
                let spec = conv_spec(i, raw, shape)?;
                shape = spec.output_shape().map_err(|e| Error::parse(Some(i), e.to_string()))?;
                lower_conv_to_affine(&spec).map_err(|e| Error::parse(Some(i), e.to_string()))?
            }
            other => return Err(Error::parse(Some(i), format!("unknown layer kind {other:?}"))),
        };
        layers.push(layer);
    }
    NetworkModel::new((h, w, c), raw.num_classes, layers)
}

fn affine_from_rows(i: usize, rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Layer> {
    let n_out = rows.len();
    let n_in = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_in) {
        return Err(Error::parse(Some(i), "ragged weight matrix"));
    }
    if bias.len() != n_out {
        return Err(Error::parse(
            Some(i),
            format!("bias length {} does not match {n_out} weight rows", bias.len()),
        ));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let weights = Array2::from_shape_vec((n_out, n_in), flat).map_err(|e| Error::parse(Some(i), e.to_string()))?;
    Layer::affine(weights, Array1::from(bias))
}

fn conv_spec(i: usize, raw: RawConv, shape: (usize, usize, usize)) -> Result<ConvSpec> {
    let pad: PadMode = raw.pad.as_deref().unwrap_or("zero").parse()?;
    let oc = raw.filters.len();
    let ic = raw.filters.first().map_or(0, Vec::len);
    let kh = raw.filters.first().and_then(|f| f.first()).map_or(0, Vec::len);
    let kw = raw
        .filters
        .first()
        .and_then(|f| f.first())
        .and_then(|k| k.first())
        .map_or(0, Vec::len);
    let flat: Vec<f64> = raw.filters.into_iter().flatten().flatten().flatten().collect();
    let filters = Array4::from_shape_vec((oc, ic, kh, kw), flat)
        .map_err(|_| Error::parse(Some(i), "ragged conv filter array"))?;
    let input_shape = raw.input_shape.map(|[h, w, c]| (h, w, c)).unwrap_or(shape);
    if input_shape.0 * input_shape.1 * input_shape.2 != shape.0 * shape.1 * shape.2 {
        return Err(Error::parse(Some(i), "conv input_shape does not match previous layer"));
    }
    Ok(ConvSpec {
        input_shape,
        bias: Array1::from(raw.bias.unwrap_or_else(|| vec![0.0; oc])),
        stride: raw.stride.unwrap_or(1),
        padding: raw.padding.unwrap_or(kh / 2),
        pad,
        filters,
    })
}

pub fn model_to_json(model: &NetworkModel) -> Value {
    let layers: Vec<Value> = model
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Affine(a) => json!({
                "kind": "affine",
                "weights": a.weights.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
                "bias": a.bias.to_vec(),
            }),
            Layer::Relu => json!({"kind": "relu"}),
            Layer::Pwl(fs) => json!({"kind": "pwl_activation", "functions": fs}),
        })
        .collect();
    let (h, w, c) = model.input_shape();
    json!({
        "input_shape": [h, w, c],
        "num_classes": model.num_classes(),
        "layers": layers,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string(&model_to_json(model))?)?;
    Ok(())
}
