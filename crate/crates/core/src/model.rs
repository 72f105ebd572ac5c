//! JSON model files.
//!
//! Every file is an envelope `{"kind", "version", "metadata", "payload"}` with
//! `version` fixed to `"1"`. Fields are written in a fixed order and floats use the
//! shortest text that parses back to the same `f64`, so `save(load(p))` is
//! byte-stable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::{Kan, KanLayer};
use crate::linalg::Matrix;
use crate::mlp::{Activation, Mlp, MlpLayer};
use crate::network::Network;
use crate::piecewise::PiecewiseLinear;
use crate::provenance::{LayerTags, Tag};
use crate::regions::{exact_regions_1d, Complex1D};
use crate::spline::{MonomialReluBlock, MonomialReluNetwork, PolySegmentSpline, SplineKan, SplineKanLayer};

pub const FORMAT_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Kan,
    Mlp,
    BsplineKan,
    MonomialRelu,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Kan => "kan",
            ModelKind::Mlp => "mlp",
            ModelKind::BsplineKan => "bspline_kan",
            ModelKind::MonomialRelu => "monomial_relu",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kan" => Ok(ModelKind::Kan),
            "mlp" => Ok(ModelKind::Mlp),
            "bspline_kan" => Ok(ModelKind::BsplineKan),
            "monomial_relu" => Ok(ModelKind::MonomialRelu),
            _ => Err(Error::invalid("model kind", format!("unknown kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Kan(Kan),
    Mlp(Mlp),
    SplineKan(SplineKan),
    MonomialRelu(MonomialReluNetwork),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Kan(_) => ModelKind::Kan,
            Model::Mlp(_) => ModelKind::Mlp,
            Model::SplineKan(_) => ModelKind::BsplineKan,
            Model::MonomialRelu(_) => ModelKind::MonomialRelu,
        }
    }

    fn net(&self) -> &dyn Network {
        match self {
            Model::Kan(m) => m,
            Model::Mlp(m) => m,
            Model::SplineKan(m) => m,
            Model::MonomialRelu(m) => m,
        }
    }

    /// Exact region complex; only piecewise linear kinds have one.
    pub fn exact_regions_1d(&self) -> Result<Complex1D> {
        match self {
            Model::Kan(k) => exact_regions_1d(k),
            Model::Mlp(m) => exact_regions_1d(m),
            other => Err(Error::invalid(
                "model kind",
                format!("exact regions need a piecewise linear model, got {}", other.kind()),
            )),
        }
    }
}

impl Network for Model {
    fn input_dim(&self) -> usize {
        self.net().input_dim()
    }

    fn output_dim(&self) -> usize {
        self.net().output_dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net().eval(x)
    }

    fn axis_breakpoints(&self) -> Vec<Vec<f64>> {
        self.net().axis_breakpoints()
    }
}

impl From<Kan> for Model {
    fn from(k: Kan) -> Self {
        Model::Kan(k)
    }
}

impl From<Mlp> for Model {
    fn from(m: Mlp) -> Self {
        Model::Mlp(m)
    }
}

impl From<SplineKan> for Model {
    fn from(k: SplineKan) -> Self {
        Model::SplineKan(k)
    }
}

impl From<MonomialReluNetwork> for Model {
    fn from(n: MonomialReluNetwork) -> Self {
        Model::MonomialRelu(n)
    }
}

/// A loaded model plus its free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub metadata: BTreeMap<String, String>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: impl Into<Model>) -> Self {
        ModelFile {
            metadata: BTreeMap::new(),
            model: model.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SaveOptions {
    /// Write mlp weights as `(row, col, value, tag)` triplets, skipping structural zeros.
    pub sparse: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<P> {
    kind: ModelKind,
    version: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    payload: P,
}

#[derive(Deserialize)]
struct Header {
    kind: ModelKind,
    version: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlDto {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercept: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayersDto<L> {
    layers: Vec<L>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDto<A> {
    activations: Vec<Vec<A>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripletDto {
    row: usize,
    col: usize,
    value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<Tag>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SparseDto {
    rows: usize,
    cols: usize,
    entries: Vec<TripletDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightDto {
    Dense(Vec<Vec<f64>>),
    Sparse(SparseDto),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpLayerDto {
    activation: Activation,
    weight: WeightDto,
    bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_tags: Option<Vec<Vec<Tag>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias_tags: Option<Vec<Tag>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BsplineDto {
    degree: usize,
    knots: Vec<f64>,
    control_points: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SplineDto {
    Pieces {
        breakpoints: Vec<f64>,
        pieces: Vec<Vec<f64>>,
        degree: usize,
    },
    Bspline {
        bspline: BsplineDto,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineDto {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonomialDto {
    input_dim: usize,
    degree: usize,
    blocks: Vec<AffineDto>,
    readout: AffineDto,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(parse_error)
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, cols_if_empty: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols_if_empty));
    }
    Matrix::from_rows(rows)
}

fn kan_from_dto(dto: LayersDto<GridDto<PlDto>>) -> Result<Kan> {
    let layers = dto
        .layers
        .into_iter()
        .map(|l| {
            let rows = l
                .activations
                .into_iter()
                .map(|row| row.into_iter().map(|a| PiecewiseLinear::new(a.breakpoints, a.slopes, a.intercept)).collect())
                .collect::<Result<Vec<Vec<_>>>>()?;
            KanLayer::from_rows(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Kan::new(layers)
}

fn kan_to_dto(k: &Kan) -> LayersDto<GridDto<PlDto>> {
    LayersDto {
        layers: k
            .layers()
            .iter()
            .map(|l| GridDto {
                activations: (0..l.n_out())
                    .map(|q| {
                        l.row(q)
                            .iter()
                            .map(|a| PlDto {
                                breakpoints: a.breakpoints().to_vec(),
                                slopes: a.slopes().to_vec(),
                                intercept: a.intercept(),
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn mlp_layer_from_dto(dto: MlpLayerDto) -> Result<MlpLayer> {
    let mut sparse_tags: Option<Vec<Tag>> = None;
    let weight = match dto.weight {
        WeightDto::Dense(rows) => Matrix::from_rows(rows)?,
        WeightDto::Sparse(s) => {
            let mut m = Matrix::zeros(s.rows, s.cols);
            let mut tags = vec![Tag::Structural; s.rows * s.cols];
            let mut any_tag = false;
            for e in s.entries {
                if e.row >= s.rows || e.col >= s.cols {
                    return Err(Error::invalid(
                        "sparse weight",
                        format!("entry ({}, {}) lies outside the {}×{} matrix", e.row, e.col, s.rows, s.cols),
                    ));
                }
                m.set(e.row, e.col, e.value);
                if let Some(t) = e.tag {
                    tags[e.row * s.cols + e.col] = t;
                    any_tag = true;
                }
            }
            if any_tag || dto.bias_tags.is_some() {
                sparse_tags = Some(tags);
            }
            m
        }
    };
    let layer = MlpLayer::new(weight, dto.bias, dto.activation)?;
    let weight_tags = match (dto.weight_tags, sparse_tags) {
        (Some(rows), _) => Some(rows.into_iter().flatten().collect()),
        (None, t) => t,
    };
    match (weight_tags, dto.bias_tags) {
        (None, None) => Ok(layer),
        (Some(weight), Some(bias)) => layer.with_tags(LayerTags { weight, bias }),
        _ => Err(Error::invalid("mlp layer", "weight and bias tags must be given together")),
    }
}

fn mlp_layer_to_dto(l: &MlpLayer, sparse: bool) -> MlpLayerDto {
    let w = l.weight();
    let tags = l.tags();
    let weight = if sparse {
        let mut entries = Vec::new();
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                let tag = tags.map(|t| t.weight[r * w.cols() + c].clone());
                if w.get(r, c) != 0.0 || tag.as_ref().is_some_and(Tag::is_free) {
                    entries.push(TripletDto {
                        row: r,
                        col: c,
                        value: w.get(r, c),
                        tag,
                    });
                }
            }
        }
        WeightDto::Sparse(SparseDto {
            rows: w.rows(),
            cols: w.cols(),
            entries,
        })
    } else {
        WeightDto::Dense(w.to_rows())
    };
    MlpLayerDto {
        activation: l.activation(),
        weight,
        bias: l.bias().to_vec(),
        weight_tags: match (sparse, tags) {
            (false, Some(t)) => Some(t.weight.chunks(w.cols()).map(<[Tag]>::to_vec).collect()),
            _ => None,
        },
        bias_tags: tags.map(|t| t.bias.clone()),
    }
}

fn spline_from_dto(dto: SplineDto) -> Result<PolySegmentSpline> {
    match dto {
        SplineDto::Pieces {
            breakpoints,
            pieces,
            degree,
        } => PolySegmentSpline::new(breakpoints, pieces, degree),
        SplineDto::Bspline { bspline } => {
            PolySegmentSpline::from_bspline(bspline.degree, &bspline.knots, &bspline.control_points)
        }
    }
}

fn spline_kan_from_dto(dto: LayersDto<GridDto<SplineDto>>) -> Result<SplineKan> {
    let layers = dto
        .layers
        .into_iter()
        .map(|l| {
            let n_out = l.activations.len();
            let n_in = l.activations.first().map(Vec::len).unwrap_or(0);
            if l.activations.iter().any(|r| r.len() != n_in) {
                return Err(Error::invalid("spline kan layer", "activation rows must have equal length"));
            }
            let acts = l.activations.into_iter().flatten().map(spline_from_dto).collect::<Result<Vec<_>>>()?;
            SplineKanLayer::new(n_in, n_out, acts)
        })
        .collect::<Result<Vec<_>>>()?;
    SplineKan::new(layers)
}

fn spline_kan_to_dto(k: &SplineKan) -> LayersDto<GridDto<SplineDto>> {
    LayersDto {
        layers: k
            .layers()
            .iter()
            .map(|l| GridDto {
                activations: (0..l.n_out())
                    .map(|q| {
                        (0..l.n_in())
                            .map(|p| {
                                let s = l.activation(q, p);
                                SplineDto::Pieces {
                                    breakpoints: s.breakpoints().to_vec(),
                                    pieces: s.pieces().to_vec(),
                                    degree: s.degree(),
                                }
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn monomial_from_dto(dto: MonomialDto) -> Result<MonomialReluNetwork> {
    let mut width = dto.input_dim;
    let mut blocks = Vec::with_capacity(dto.blocks.len());
    for b in dto.blocks {
        let w = matrix_from_rows(b.weight, width)?;
        width = w.rows() * (dto.degree + 1);
        blocks.push(MonomialReluBlock::new(w, b.bias, dto.degree)?);
    }
    let readout = matrix_from_rows(dto.readout.weight, width)?;
    MonomialReluNetwork::new(dto.input_dim, dto.degree, blocks, readout, dto.readout.bias)
}

fn monomial_to_dto(n: &MonomialReluNetwork) -> MonomialDto {
    MonomialDto {
        input_dim: n.input_dim(),
        degree: n.degree(),
        blocks: n
            .blocks()
            .iter()
            .map(|b| AffineDto {
                weight: b.weight().to_rows(),
                bias: b.bias().to_vec(),
            })
            .collect(),
        readout: AffineDto {
            weight: n.readout_weight().to_rows(),
            bias: n.readout_bias().to_vec(),
        },
    }
}

/// Parses a model file. Syntax and schema errors carry a line and column;
/// semantic errors name the violated invariant.
pub fn from_json_str(text: &str) -> Result<ModelFile> {
    let header: Header = parse(text)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::invalid(
            "model file",
            format!("unsupported version {:?}, expected {FORMAT_VERSION:?}", header.version),
        ));
    }
    fn typed<P: DeserializeOwned>(text: &str) -> Result<(BTreeMap<String, String>, P)> {
        let e: Envelope<P> = parse(text)?;
        Ok((e.metadata, e.payload))
    }
    let (metadata, model) = match header.kind {
        ModelKind::Kan => {
            let (m, p) = typed(text)?;
            (m, Model::Kan(kan_from_dto(p)?))
        }
        ModelKind::Mlp => {
            let (m, p): (_, LayersDto<MlpLayerDto>) = typed(text)?;
            let layers = p.layers.into_iter().map(mlp_layer_from_dto).collect::<Result<Vec<_>>>()?;
            (m, Model::Mlp(Mlp::new(layers)?))
        }
        ModelKind::BsplineKan => {
            let (m, p) = typed(text)?;
            (m, Model::SplineKan(spline_kan_from_dto(p)?))
        }
        ModelKind::MonomialRelu => {
            let (m, p) = typed(text)?;
            (m, Model::MonomialRelu(monomial_from_dto(p)?))
        }
    };
    Ok(ModelFile { metadata, model })
}

/// Canonical pretty-printed JSON with a trailing newline.
pub fn to_json_string(file: &ModelFile, options: SaveOptions) -> String {
    fn render<P: Serialize>(file: &ModelFile, payload: P) -> String {
        let env = Envelope {
            kind: file.model.kind(),
            version: FORMAT_VERSION.to_string(),
            metadata: file.metadata.clone(),
            payload,
        };
        let mut s = serde_json::to_string_pretty(&env).expect("model payloads always serialize");
        s.push('\n');
        s
    }
    match &file.model {
        Model::Kan(k) => render(file, kan_to_dto(k)),
        Model::Mlp(m) => render(
            file,
            LayersDto {
                layers: m.layers().iter().map(|l| mlp_layer_to_dto(l, options.sparse)).collect(),
            },
        ),
        Model::SplineKan(k) => render(file, spline_kan_to_dto(k)),
        Model::MonomialRelu(n) => render(file, monomial_to_dto(n)),
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelFile> {
    from_json_str(&std::fs::read_to_string(path)?)
}

pub fn save(file: &ModelFile, path: impl AsRef<Path>, options: SaveOptions) -> Result<()> {
    std::fs::write(path, to_json_string(file, options))?;
    Ok(())
}
