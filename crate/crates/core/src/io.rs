//! File formats: data and matrix CSVs, spectra, cluster labels, graph exports.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::partition::{Clustering, ClusteringMethod};
use crate::spectral::WeightedAdjacency;

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::input(format!("serializing {}: {e}", path.display())))?;
    s.push('\n');
    write_string(path, &s)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Shortest decimal that round-trips the value rounded to 10 significant digits.
pub fn format_sig10(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.9e}").parse().expect("formatted float parses");
    // avoid "-0"
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

/// Load a data CSV: header of variable names, one sample per row.
pub fn load_data(path: &Path) -> Result<DataMatrix> {
    let text = read_to_string(path)?;
    parse_data_csv(&text).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_data_csv(text: &str) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::input(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::input("missing header row"));
    }
    let p = names.len();
    let mut values = Vec::new();
    let mut n = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        if rec.len() != p {
            return Err(Error::input(format!("ragged row {row}: {} fields, expected {p}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::input(format!("non-numeric value `{cell}` at row {row} column `{}`", names[j])))?;
            if !v.is_finite() {
                return Err(Error::input(format!("non-finite value `{cell}` at row {row} column `{}`", names[j])));
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::input("no samples"));
    }
    DataMatrix::new(names, DMatrix::from_row_slice(n, p, &values))
}

pub fn write_data_csv(path: &Path, data: &DataMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::input(e.to_string());
    w.write_record(data.names()).map_err(csv_err)?;
    for row in data.values().row_iter() {
        w.write_record(row.iter().map(|v| format_sig10(*v))).map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub(crate) fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| Error::input(e.to_string()))?;
    write_string(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Square matrix with variable names as header row and first column.
pub fn write_matrix_csv(path: &Path, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::input(e.to_string());
    let mut header = vec![String::new()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in m.row_iter().enumerate() {
        let mut rec = vec![names.get(i).cloned().unwrap_or_default()];
        rec.extend(row.iter().map(|v| format_sig10(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let p = header.len();
    let mut values = Vec::with_capacity(p * p);
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::input(format!("{} row {}: {e}", path.display(), i + 1)))?;
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::input(format!("{}: non-numeric value `{cell}` at row {} column {}", path.display(), i + 1, j + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows != p {
        return Err(Error::dimension(format!("{}: {rows} rows for {p} columns", path.display())));
    }
    Ok((header, DMatrix::from_row_slice(p, p, &values)))
}

/// Two columns: one-based index, eigenvalue.
pub fn write_spectrum_csv(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let mut s = String::from("index,eigenvalue\n");
    for (i, v) in eigenvalues.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, format_sig10(*v)));
    }
    write_string(path, &s)
}

/// Rows are points, columns `v1..vK`, first column the variable name.
pub fn write_embedding_csv(path: &Path, names: &[String], y: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::input(e.to_string());
    let mut header = vec!["variable".to_string()];
    header.extend((1..=y.ncols()).map(|k| format!("v{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in y.row_iter().enumerate() {
        let mut rec = vec![names[i].clone()];
        rec.extend(row.iter().map(|v| format_sig10(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub fn read_embedding_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let dim = reader.headers().map_err(|e| Error::input(e.to_string()))?.len().saturating_sub(1);
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::input(format!("{} row {}: {e}", path.display(), i + 1)))?;
        names.push(rec.get(0).unwrap_or_default().to_string());
        for cell in rec.iter().skip(1) {
            values.push(
                cell.parse::<f64>()
                    .map_err(|_| Error::input(format!("{}: non-numeric value `{cell}` at row {}", path.display(), i + 1)))?,
            );
        }
    }
    if names.is_empty() || dim == 0 {
        return Err(Error::input(format!("{}: empty embedding", path.display())));
    }
    Ok((names.clone(), DMatrix::from_row_slice(names.len(), dim, &values)))
}

/// `variable,label` with one-based labels.
pub fn write_clusters_csv(path: &Path, names: &[String], clustering: &Clustering) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::input(e.to_string());
    w.write_record(["variable", "label"]).map_err(csv_err)?;
    for (name, label) in names.iter().zip(clustering.one_based_labels()) {
        w.write_record([name.clone(), label.to_string()]).map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub fn read_clusters_csv(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut names = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::input(format!("{} row {}: {e}", path.display(), i + 1)))?;
        if rec.len() != 2 {
            return Err(Error::input(format!("{} row {}: expected `variable,label`", path.display(), i + 1)));
        }
        names.push(rec[0].to_string());
        labels.push(
            rec[1]
                .parse()
                .map_err(|_| Error::input(format!("{} row {}: bad label `{}`", path.display(), i + 1, &rec[1])))?,
        );
    }
    Ok((names, labels))
}

/// JSON sidecar written next to a clusters CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSidecar {
    pub k: usize,
    pub sizes: Vec<usize>,
    pub objective: Option<f64>,
    pub method: ClusteringMethod,
}

impl ClusterSidecar {
    pub fn new(c: &Clustering) -> Self {
        ClusterSidecar {
            k: c.k(),
            sizes: c.sizes(),
            objective: c.objective,
            method: c.method.clone(),
        }
    }
}

/// One-based labels, one per line; a `name,label` layout and a header line
/// are also accepted.
pub fn read_label_lines(path: &Path) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::input(format!("{} line {}: bad label `{field}`", path.display(), i + 1))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFormat {
    Dot,
    Graphml,
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(GraphFormat::Dot),
            "graphml" => Ok(GraphFormat::Graphml),
            other => Err(Error::config(format!("unknown graph format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphExportOptions {
    /// Edges with weight at or below this are omitted.
    pub edge_threshold: f64,
    /// Clusters smaller than this are drawn gray.
    pub min_colored_size: usize,
}

impl Default for GraphExportOptions {
    fn default() -> Self {
        GraphExportOptions {
            edge_threshold: 0.05,
            min_colored_size: 4,
        }
    }
}

pub const GRAY: &str = "#bebebe";
const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#393b79", "#637939", "#843c39",
];

/// Fill color per cluster: palette colors in label order for clusters of at
/// least `min_colored_size` members, gray otherwise.
pub fn cluster_colors(c: &Clustering, min_colored_size: usize) -> Vec<String> {
    let mut next = 0;
    c.sizes()
        .iter()
        .map(|&s| {
            if s >= min_colored_size {
                let col = PALETTE[next % PALETTE.len()];
                next += 1;
                col.to_string()
            } else {
                GRAY.to_string()
            }
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn render_graph(w: &WeightedAdjacency, c: &Clustering, format: GraphFormat, opts: &GraphExportOptions) -> Result<String> {
    if w.dim() != c.len() {
        return Err(Error::dimension(format!("graph has {} vertices, clustering {}", w.dim(), c.len())));
    }
    let colors = cluster_colors(c, opts.min_colored_size);
    let names = w.names();
    let labels = c.one_based_labels();
    let mut edges = Vec::new();
    for i in 0..w.dim() {
        for j in i + 1..w.dim() {
            if w.weight(i, j) > opts.edge_threshold {
                edges.push((i, j, w.weight(i, j)));
            }
        }
    }
    let mut s = String::new();
    match format {
        GraphFormat::Dot => {
            s.push_str("graph bngc {\n  node [style=filled];\n");
            for (i, name) in names.iter().enumerate() {
                s.push_str(&format!(
                    "  \"{}\" [cluster={}, fillcolor=\"{}\"];\n",
                    dot_escape(name),
                    labels[i],
                    colors[c.labels()[i]]
                ));
            }
            for (i, j, wt) in edges {
                s.push_str(&format!("  \"{}\" -- \"{}\" [weight={wt}];\n", dot_escape(&names[i]), dot_escape(&names[j])));
            }
            s.push_str("}\n");
        }
        GraphFormat::Graphml => {
            s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
            s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
            s.push_str("  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"int\"/>\n");
            s.push_str("  <key id=\"color\" for=\"node\" attr.name=\"color\" attr.type=\"string\"/>\n");
            s.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
            s.push_str("  <graph id=\"bngc\" edgedefault=\"undirected\">\n");
            for (i, name) in names.iter().enumerate() {
                s.push_str(&format!(
                    "    <node id=\"{}\"><data key=\"cluster\">{}</data><data key=\"color\">{}</data></node>\n",
                    xml_escape(name),
                    labels[i],
                    colors[c.labels()[i]]
                ));
            }
            for (i, j, wt) in edges {
                s.push_str(&format!(
                    "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{wt}</data></edge>\n",
                    xml_escape(&names[i]),
                    xml_escape(&names[j])
                ));
            }
            s.push_str("  </graph>\n</graphml>\n");
        }
    }
    Ok(s)
}

pub fn export_graph(w: &WeightedAdjacency, c: &Clustering, path: &Path, format: GraphFormat, opts: &GraphExportOptions) -> Result<()> {
    let s = render_graph(w, c, format, opts)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Nodes and edges recovered from a GraphML export.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedGraph {
    /// (id, cluster, color)
    pub nodes: Vec<(String, usize, String)>,
    /// (source, target, weight)
    pub edges: Vec<(String, String, f64)>,
}

pub fn parse_graphml(text: &str) -> Result<ParsedGraph> {
    use quick_xml::events::Event;
    let bad = |e: &dyn std::fmt::Display| Error::input(format!("GraphML: {e}"));
    let mut reader = quick_xml::Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut out = ParsedGraph::default();
    let mut node: Option<(String, usize, String)> = None;
    let mut edge: Option<(String, String, f64)> = None;
    let mut key: Option<String> = None;
    loop {
        match reader.read_event().map_err(|e| bad(&e))? {
            Event::Start(e) => {
                let attr = |name: &str| -> Result<Option<String>> {
                    for a in e.attributes() {
                        let a = a.map_err(|e| bad(&e))?;
                        if a.key.as_ref() == name {
                            return Ok(Some(a.normalized_value(quick_xml::XmlVersion::default()).map_err(|e| bad(&e))?.into_owned()));
                        }
                    }
                    Ok(None)
                };
                match e.name().as_ref() {
                    "node" => node = Some((attr("id")?.unwrap_or_default(), 0, String::new())),
                    "edge" => edge = Some((attr("source")?.unwrap_or_default(), attr("target")?.unwrap_or_default(), f64::NAN)),
                    "data" => key = attr("key")?,
                    _ => {}
                }
            }
            Event::Text(t) => {
                let value = t.xml10_content().into_owned();
                match (key.as_deref(), node.as_mut(), edge.as_mut()) {
                    (Some("cluster"), Some(n), _) => n.1 = value.parse().map_err(|e| bad(&e))?,
                    (Some("color"), Some(n), _) => n.2 = value,
                    (Some("weight"), _, Some(ed)) => ed.2 = value.parse().map_err(|e| bad(&e))?,
                    _ => {}
                }
            }
            Event::End(e) => match e.name().as_ref() {
                "node" => out.nodes.extend(node.take()),
                "edge" => out.edges.extend(edge.take()),
                "data" => key = None,
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}
