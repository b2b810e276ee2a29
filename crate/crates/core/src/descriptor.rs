//! Structural descriptors of building blocks.
//!
//! A block is described either by a [`LayerGraph`] (an ordered list of layers
//! from which the parameter count `n` and the stage count `l` are derived) or
//! directly by its `(k, n, l, f)` tuple. The golden corpus of seven reference
//! blocks ships with the crate and is available through [`golden_corpus`].

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("layer {index}: {reason}")]
    MalformedLayer { index: usize, reason: String },
    #[error("{source_name}:{line}: field `{field}`: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        field: String,
        reason: String,
    },
    #[error("{source_name}: descriptor `{name}`: {reason}")]
    Invariant {
        source_name: String,
        name: String,
        reason: String,
    },
    #[error("duplicate descriptor name `{name}` in {source_name}")]
    Duplicate { source_name: String, name: String },
    #[error("graph has no layers, so l = 0 violates l >= 1")]
    EmptyGraph,
    #[error("f must be positive")]
    ZeroFeatureUnits,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    DepthwiseConv2d,
    Relu,
    ElementwiseAdd,
    ChannelAttentionMarker,
    AttentionMarker,
    NormMarker,
}

impl LayerKind {
    pub fn is_parametric(self) -> bool {
        matches!(self, LayerKind::Conv2d | LayerKind::DepthwiseConv2d)
    }

    fn is_marker(self) -> bool {
        matches!(
            self,
            LayerKind::ChannelAttentionMarker | LayerKind::AttentionMarker | LayerKind::NormMarker
        )
    }

    pub fn token(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::DepthwiseConv2d => "depthwise_conv2d",
            LayerKind::Relu => "relu",
            LayerKind::ElementwiseAdd => "add",
            LayerKind::ChannelAttentionMarker => "channel_attention",
            LayerKind::AttentionMarker => "attention",
            LayerKind::NormMarker => "norm",
        }
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "conv2d" | "conv" => LayerKind::Conv2d,
            "depthwise_conv2d" | "dwconv" => LayerKind::DepthwiseConv2d,
            "relu" => LayerKind::Relu,
            "add" | "elementwise_add" => LayerKind::ElementwiseAdd,
            "channel_attention" => LayerKind::ChannelAttentionMarker,
            "attention" => LayerKind::AttentionMarker,
            "norm" => LayerKind::NormMarker,
            other => return Err(format!("unknown layer kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub has_bias: bool,
    /// Index of an earlier layer whose weights this layer applies again.
    pub reuses: Option<usize>,
    /// Explicit parameter annotation, only meaningful on marker kinds.
    pub params: Option<u64>,
}

impl LayerSpec {
    pub fn conv2d(cin: usize, cout: usize, kh: usize, kw: usize, bias: bool) -> Self {
        Self::parametric(LayerKind::Conv2d, cin, cout, kh, kw, bias)
    }

    pub fn depthwise(channels: usize, kh: usize, kw: usize, bias: bool) -> Self {
        Self::parametric(LayerKind::DepthwiseConv2d, channels, channels, kh, kw, bias)
    }

    pub fn relu(channels: usize) -> Self {
        Self::parametric(LayerKind::Relu, channels, channels, 1, 1, false)
    }

    pub fn add(channels: usize) -> Self {
        Self::parametric(LayerKind::ElementwiseAdd, channels, channels, 1, 1, false)
    }

    fn parametric(kind: LayerKind, cin: usize, cout: usize, kh: usize, kw: usize, bias: bool) -> Self {
        Self {
            kind,
            in_channels: cin,
            out_channels: cout,
            kernel_h: kh,
            kernel_w: kw,
            has_bias: bias,
            reuses: None,
            params: None,
        }
    }

    pub fn reusing(mut self, index: usize) -> Self {
        self.reuses = Some(index);
        self
    }

    /// Parameters owned by this layer, ignoring weight reuse.
    fn own_parameters(&self) -> u64 {
        let (kh, kw) = (self.kernel_h as u64, self.kernel_w as u64);
        let (cin, cout) = (self.in_channels as u64, self.out_channels as u64);
        match self.kind {
            LayerKind::Conv2d => kh * kw * cin * cout + if self.has_bias { cout } else { 0 },
            LayerKind::DepthwiseConv2d => kh * kw * cin + if self.has_bias { cin } else { 0 },
            _ => self.params.unwrap_or(0),
        }
    }

    fn validate(&self, index: usize, earlier: &[LayerSpec]) -> Result<(), DescriptorError> {
        let fail = |reason: String| Err(DescriptorError::MalformedLayer { index, reason });
        if self.in_channels == 0 || self.out_channels == 0 {
            return fail("channel counts must be positive".into());
        }
        if self.kind.is_parametric() && (self.kernel_h == 0 || self.kernel_w == 0) {
            return fail("kernel sizes must be positive".into());
        }
        if self.kind == LayerKind::DepthwiseConv2d && self.in_channels != self.out_channels {
            return fail(format!(
                "depthwise_conv2d needs in_channels == out_channels, got {} and {}",
                self.in_channels, self.out_channels
            ));
        }
        if self.params.is_some() && !self.kind.is_marker() {
            return fail(format!("`params=` is only allowed on marker kinds, not {}", self.kind.token()));
        }
        if let Some(target) = self.reuses {
            if !self.kind.is_parametric() {
                return fail("only convolutions can reuse weights".into());
            }
            let Some(src) = earlier.get(target) else {
                return fail(format!("reuse={target} does not name an earlier layer"));
            };
            if src.kind != self.kind
                || src.in_channels != self.in_channels
                || src.out_channels != self.out_channels
                || src.kernel_h != self.kernel_h
                || src.kernel_w != self.kernel_w
                || src.has_bias != self.has_bias
            {
                return fail(format!("reuse={target} points at a layer with a different shape"));
            }
        }
        Ok(())
    }
}

/// Ordered computational graph of a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerGraph {
    pub layers: Vec<LayerSpec>,
    /// Number of nested sub-modules `k`.
    pub nested_submodules: u32,
    /// Input feature units `f`.
    pub input_feature_units: u32,
}

impl LayerGraph {
    pub fn new(layers: Vec<LayerSpec>, nested_submodules: u32, input_feature_units: u32) -> Self {
        Self {
            layers,
            nested_submodules,
            input_feature_units,
        }
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.input_feature_units == 0 {
            return Err(DescriptorError::ZeroFeatureUnits);
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i, &self.layers[..i])?;
        }
        Ok(())
    }

    /// Appends `other`, shifting its reuse indices.
    pub fn concat(&self, other: &LayerGraph) -> LayerGraph {
        let offset = self.layers.len();
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned().map(|mut l| {
            l.reuses = l.reuses.map(|r| r + offset);
            l
        }));
        LayerGraph::new(layers, self.nested_submodules, self.input_feature_units)
    }
}

/// Total parameter count of a graph. Layers that reuse earlier weights add nothing.
pub fn count_parameters(graph: &LayerGraph) -> Result<u64, DescriptorError> {
    graph.validate()?;
    Ok(graph
        .layers
        .iter()
        .filter(|l| l.reuses.is_none())
        .map(LayerSpec::own_parameters)
        .sum())
}

/// Number of forward-propagation stages: every graph entry is one stage.
pub fn count_forward_layers(graph: &LayerGraph) -> usize {
    graph.layers.len()
}

/// The UAE variable tuple of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleDescriptor {
    pub name: String,
    pub k: u32,
    pub n: u64,
    pub l: u32,
    pub f: u32,
}

impl ModuleDescriptor {
    pub fn new(name: impl Into<String>, k: u32, n: u64, l: u32, f: u32) -> Result<Self, DescriptorError> {
        let d = Self {
            name: name.into(),
            k,
            n,
            l,
            f,
        };
        d.check("<inline>")?;
        Ok(d)
    }

    fn check(&self, source_name: &str) -> Result<(), DescriptorError> {
        let fail = |reason: &str| {
            Err(DescriptorError::Invariant {
                source_name: source_name.to_string(),
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.is_empty() {
            return fail("name is empty");
        }
        if self.l < 1 {
            return fail("l must be at least 1");
        }
        if self.f < 1 {
            return fail("f must be at least 1");
        }
        Ok(())
    }
}

impl fmt::Display for ModuleDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (k={}, n={}, l={}, f={})", self.name, self.k, self.n, self.l, self.f)
    }
}

pub fn derive_descriptor(graph: &LayerGraph, name: &str) -> Result<ModuleDescriptor, DescriptorError> {
    let n = count_parameters(graph)?;
    let l = count_forward_layers(graph);
    if l == 0 {
        return Err(DescriptorError::EmptyGraph);
    }
    ModuleDescriptor::new(name, graph.nested_submodules, n, l as u32, graph.input_feature_units)
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_field<T: FromStr>(source_name: &str, line: usize, field: &str, raw: &str) -> Result<T, DescriptorError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| DescriptorError::Parse {
        source_name: source_name.to_string(),
        line,
        field: field.to_string(),
        reason: format!("`{raw}`: {e}"),
    })
}

/// Parses a graph file body. `k` and `f` are not part of the graph format and
/// are supplied by the caller.
pub fn parse_graph(text: &str, source_name: &str, k: u32, f: u32) -> Result<LayerGraph, DescriptorError> {
    let mut layers = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 6 {
            return Err(DescriptorError::Parse {
                source_name: source_name.to_string(),
                line: line_no,
                field: "layer".into(),
                reason: format!("expected `kind cin cout kh kw bias`, got `{line}`"),
            });
        }
        let kind: LayerKind = parse_field(source_name, line_no, "kind", tokens[0])?;
        let bias = match tokens[5] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(DescriptorError::Parse {
                    source_name: source_name.to_string(),
                    line: line_no,
                    field: "bias".into(),
                    reason: format!("expected 0 or 1, got `{other}`"),
                })
            }
        };
        let mut spec = LayerSpec {
            kind,
            in_channels: parse_field(source_name, line_no, "cin", tokens[1])?,
            out_channels: parse_field(source_name, line_no, "cout", tokens[2])?,
            kernel_h: parse_field(source_name, line_no, "kh", tokens[3])?,
            kernel_w: parse_field(source_name, line_no, "kw", tokens[4])?,
            has_bias: bias,
            reuses: None,
            params: None,
        };
        for extra in &tokens[6..] {
            match extra.split_once('=') {
                Some(("reuse", v)) => spec.reuses = Some(parse_field(source_name, line_no, "reuse", v)?),
                Some(("params", v)) => spec.params = Some(parse_field(source_name, line_no, "params", v)?),
                _ => {
                    return Err(DescriptorError::Parse {
                        source_name: source_name.to_string(),
                        line: line_no,
                        field: "annotation".into(),
                        reason: format!("unknown annotation `{extra}`"),
                    })
                }
            }
        }
        layers.push(spec);
    }
    let graph = LayerGraph::new(layers, k, f);
    graph.validate().map_err(|e| DescriptorError::Parse {
        source_name: source_name.to_string(),
        line: 0,
        field: "layer".into(),
        reason: e.to_string(),
    })?;
    Ok(graph)
}

pub fn format_graph(graph: &LayerGraph) -> String {
    let mut out = String::new();
    for layer in &graph.layers {
        out.push_str(&format!(
            "{} {} {} {} {} {}",
            layer.kind.token(),
            layer.in_channels,
            layer.out_channels,
            layer.kernel_h,
            layer.kernel_w,
            u8::from(layer.has_bias)
        ));
        if let Some(r) = layer.reuses {
            out.push_str(&format!(" reuse={r}"));
        }
        if let Some(p) = layer.params {
            out.push_str(&format!(" params={p}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Default)]
struct PendingRecord {
    line: usize,
    name: String,
    k: Option<u32>,
    n: Option<u64>,
    l: Option<u32>,
    f: Option<u32>,
    graph: Option<String>,
}

/// Parses a descriptor file body. `resolve_graph` maps a `graph = ...`
/// reference to the text of the graph file.
pub fn parse_descriptors<R>(text: &str, source_name: &str, resolve_graph: R) -> Result<Vec<ModuleDescriptor>, DescriptorError>
where
    R: Fn(&str) -> Result<String, DescriptorError>,
{
    let mut records: Vec<PendingRecord> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(DescriptorError::Parse {
                source_name: source_name.to_string(),
                line: line_no,
                field: line.to_string(),
                reason: "expected `key = value`".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "name" {
            records.push(PendingRecord {
                line: line_no,
                name: value.to_string(),
                ..Default::default()
            });
            continue;
        }
        let Some(rec) = records.last_mut() else {
            return Err(DescriptorError::Parse {
                source_name: source_name.to_string(),
                line: line_no,
                field: key.to_string(),
                reason: "field appears before any `name`".into(),
            });
        };
        match key {
            "k" => rec.k = Some(parse_field(source_name, line_no, key, value)?),
            "n" => rec.n = Some(parse_field(source_name, line_no, key, value)?),
            "l" => rec.l = Some(parse_field(source_name, line_no, key, value)?),
            "f" => rec.f = Some(parse_field(source_name, line_no, key, value)?),
            "graph" => rec.graph = Some(value.to_string()),
            other => {
                return Err(DescriptorError::Parse {
                    source_name: source_name.to_string(),
                    line: line_no,
                    field: other.to_string(),
                    reason: "unknown field".into(),
                })
            }
        }
    }

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let missing = |field: &str| DescriptorError::Parse {
            source_name: source_name.to_string(),
            line: rec.line,
            field: field.to_string(),
            reason: format!("missing in descriptor `{}`", rec.name),
        };
        let k = rec.k.ok_or_else(|| missing("k"))?;
        let f = rec.f.ok_or_else(|| missing("f"))?;
        let desc = match &rec.graph {
            Some(reference) => {
                let text = resolve_graph(reference)?;
                let graph = parse_graph(&text, reference, k, f)?;
                let derived = derive_descriptor(&graph, &rec.name).map_err(|e| DescriptorError::Invariant {
                    source_name: source_name.to_string(),
                    name: rec.name.clone(),
                    reason: e.to_string(),
                })?;
                if rec.n.is_some_and(|n| n != derived.n) || rec.l.is_some_and(|l| l != derived.l) {
                    return Err(DescriptorError::Invariant {
                        source_name: source_name.to_string(),
                        name: rec.name.clone(),
                        reason: format!(
                            "literal n/l disagree with graph `{reference}` (n={}, l={})",
                            derived.n, derived.l
                        ),
                    });
                }
                derived
            }
            None => ModuleDescriptor {
                name: rec.name.clone(),
                k,
                n: rec.n.ok_or_else(|| missing("n"))?,
                l: rec.l.ok_or_else(|| missing("l"))?,
                f,
            },
        };
        desc.check(source_name)?;
        if !seen.insert(desc.name.clone()) {
            return Err(DescriptorError::Duplicate {
                source_name: source_name.to_string(),
                name: desc.name,
            });
        }
        out.push(desc);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, DescriptorError> {
    fs::read_to_string(path).map_err(|source| DescriptorError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a descriptor file, or every `*.desc` file of a directory in name order.
pub fn load_corpus(path: &Path) -> Result<Vec<ModuleDescriptor>, DescriptorError> {
    let files = if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|source| DescriptorError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "desc"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let mut all: Vec<ModuleDescriptor> = Vec::new();
    for file in files {
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = read(&file)?;
        let source_name = file.display().to_string();
        let descs = parse_descriptors(&text, &source_name, |reference| read(&dir.join(reference)))?;
        for d in descs {
            if all.iter().any(|x| x.name == d.name) {
                return Err(DescriptorError::Duplicate { source_name, name: d.name });
            }
            all.push(d);
        }
    }
    Ok(all)
}

const GOLDEN_DESC: &str = include_str!("../corpus/golden.desc");

fn golden_graph_text(reference: &str) -> Option<&'static str> {
    Some(match reference {
        "rb.graph" => include_str!("../corpus/rb.graph"),
        "crb.graph" => include_str!("../corpus/crb.graph"),
        "dcrb.graph" => include_str!("../corpus/dcrb.graph"),
        "convffn.graph" => include_str!("../corpus/convffn.graph"),
        _ => return None,
    })
}

/// The seven reference blocks: RB, RCAB, ConvFFN, RSTB, GAL, DCRB, CRB.
pub fn golden_corpus() -> Vec<ModuleDescriptor> {
    parse_descriptors(GOLDEN_DESC, "golden.desc", |reference| {
        golden_graph_text(reference).map(str::to_string).ok_or_else(|| DescriptorError::Parse {
            source_name: "golden.desc".into(),
            line: 0,
            field: "graph".into(),
            reason: format!("unknown embedded graph `{reference}`"),
        })
    })
    .expect("embedded golden corpus is well-formed")
}

/// Layer graph of a golden block that is derived from a graph file.
pub fn golden_graph(name: &str) -> Option<LayerGraph> {
    let (file, k) = match name {
        "RB" => ("rb.graph", 0),
        "CRB" => ("crb.graph", 0),
        "DCRB" => ("dcrb.graph", 1),
        "ConvFFN" => ("convffn.graph", 1),
        _ => return None,
    };
    parse_graph(golden_graph_text(file)?, file, k, 64).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rb(channels: usize) -> LayerGraph {
        LayerGraph::new(
            vec![
                LayerSpec::conv2d(channels, channels, 3, 3, true),
                LayerSpec::relu(channels),
                LayerSpec::conv2d(channels, channels, 3, 3, true),
                LayerSpec::add(channels),
            ],
            0,
            channels as u32,
        )
    }

    #[test]
    fn rb_and_dcrb_parameter_counts() {
        assert_eq!(count_parameters(&rb(64)).unwrap(), 73_856);
        let dcrb = LayerGraph::new(
            vec![
                LayerSpec::depthwise(64, 3, 3, true),
                LayerSpec::relu(64),
                LayerSpec::depthwise(64, 3, 3, true),
                LayerSpec::add(64),
            ],
            1,
            64,
        );
        assert_eq!(count_parameters(&dcrb).unwrap(), 1_280);
    }

    #[test]
    fn parameter_free_graph() {
        let g = LayerGraph::new(vec![LayerSpec::relu(8), LayerSpec::add(8)], 0, 8);
        assert_eq!(count_parameters(&g).unwrap(), 0);
    }

    #[test]
    fn forward_layer_counts() {
        assert_eq!(count_forward_layers(&rb(64)), 4);
        let crb = golden_graph("CRB").unwrap();
        assert_eq!(count_forward_layers(&crb), 8);
        let single = LayerGraph::new(vec![LayerSpec::relu(1)], 0, 1);
        assert_eq!(count_forward_layers(&single), 1);
    }

    #[test]
    fn depthwise_with_unequal_channels_is_rejected() {
        let mut bad = LayerSpec::depthwise(8, 3, 3, true);
        bad.out_channels = 16;
        let g = LayerGraph::new(vec![bad], 0, 8);
        let err = count_parameters(&g).unwrap_err();
        assert!(err.to_string().contains("in_channels == out_channels"), "{err}");
    }

    #[test]
    fn reuse_must_match_shape() {
        let g = LayerGraph::new(
            vec![LayerSpec::conv2d(8, 8, 3, 3, true), LayerSpec::conv2d(8, 4, 3, 3, true).reusing(0)],
            0,
            8,
        );
        assert!(count_parameters(&g).is_err());
    }

    #[test]
    fn derive_descriptor_examples() {
        let d = derive_descriptor(&rb(64), "RB").unwrap();
        assert_eq!((d.k, d.n, d.l, d.f), (0, 73_856, 4, 64));
        let d = derive_descriptor(&golden_graph("DCRB").unwrap(), "DCRB").unwrap();
        assert_eq!((d.k, d.n, d.l, d.f), (1, 1_280, 8, 64));
        let empty = LayerGraph::new(vec![], 0, 1);
        assert!(matches!(derive_descriptor(&empty, "empty"), Err(DescriptorError::EmptyGraph)));
    }

    #[test]
    fn golden_corpus_matches_reference_rows() {
        let corpus = golden_corpus();
        let rows: Vec<(&str, u32, u64, u32)> = corpus.iter().map(|d| (d.name.as_str(), d.k, d.n, d.l)).collect();
        assert_eq!(
            rows,
            vec![
                ("RB", 0, 73_856, 4),
                ("RCAB", 1, 148_292, 15),
                ("ConvFFN", 1, 17_856, 6),
                ("RSTB", 3, 86_784, 11),
                ("GAL", 3, 56_132, 21),
                ("DCRB", 1, 1_280, 8),
                ("CRB", 0, 73_856, 8),
            ]
        );
        assert!(corpus.iter().all(|d| d.f == 64));
    }

    #[test]
    fn negative_parameter_count_is_rejected_with_field() {
        let text = "name = X\nk = 0\nn = -1\nl = 4\nf = 64\n";
        let err = parse_descriptors(text, "bad.desc", |_| unreachable!()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.desc") && msg.contains("`n`"), "{msg}");
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let text = "name = A\nk = 0\nn = 200\nl = 4\nf = 64\nname = A\nk = 1\nn = 300\nl = 5\nf = 64\n";
        let err = parse_descriptors(text, "dup.desc", |_| unreachable!()).unwrap_err();
        assert!(matches!(err, DescriptorError::Duplicate { ref name, .. } if name == "A"));
    }

    #[test]
    fn graph_text_round_trips() {
        let crb = golden_graph("CRB").unwrap();
        let again = parse_graph(&format_graph(&crb), "mem", 0, 64).unwrap();
        assert_eq!(crb, again);
    }

    #[test]
    fn parameters_are_additive_over_concatenation() {
        let a = rb(16);
        let b = golden_graph("ConvFFN").unwrap();
        let joined = a.concat(&b);
        assert_eq!(
            count_parameters(&joined).unwrap(),
            count_parameters(&a).unwrap() + count_parameters(&b).unwrap()
        );
    }
}
