//! Line-oriented graph interchange.
//!
//! One triple per line:
//! `head_label<TAB>head_type<TAB>relation<TAB>tail_label<TAB>tail_type`.
//! Lines starting with `#` are comments. Two comment forms carry metadata
//! that plain triple readers can ignore:
//!
//! - `#@country<TAB>TAG` sets the graph's country tag
//! - `#@node<TAB>label<TAB>type` declares a node, so that node order and
//!   isolated nodes survive a round trip
//!
//! The writer declares every node in id order, then lists edges in
//! `Triple` order, so reading a written file reproduces the graph exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{GraphBuilder, KgError, KnowledgeGraph, LabeledTriple, NodeType, RelationType};

fn parse_err(line: usize, message: impl Into<String>) -> KgError {
    KgError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a graph. `default_country` is used when the file carries no
/// `#@country` line.
pub fn read_graph(reader: impl BufRead, default_country: &str) -> Result<KnowledgeGraph, KgError> {
    let mut country: Option<String> = None;
    let mut builder = GraphBuilder::new(default_country);
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(directive) = line.strip_prefix("#@") {
            let fields: Vec<&str> = directive.split('\t').collect();
            match fields.as_slice() {
                ["country", tag] => country = Some(tag.to_string()),
                ["node", label, ty] => {
                    let ty: NodeType = ty.parse().map_err(|e: String| parse_err(lineno, e))?;
                    builder
                        .add_node(label, ty)
                        .map_err(|e| parse_err(lineno, e.to_string()))?;
                }
                _ => {}
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [head, head_type, relation, tail, tail_type] = fields.as_slice() else {
            return Err(parse_err(
                lineno,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        };
        let triple = LabeledTriple {
            head: head.to_string(),
            head_type: head_type.parse().map_err(|e: String| parse_err(lineno, e))?,
            relation: relation.parse().map_err(|e: String| parse_err(lineno, e))?,
            tail: tail.to_string(),
            tail_type: tail_type.parse().map_err(|e: String| parse_err(lineno, e))?,
        };
        builder
            .add_triple(&triple)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
    }
    let mut kg = builder.build();
    if let Some(tag) = country {
        kg.country = tag;
    }
    Ok(kg)
}

pub fn read_graph_file(path: &Path) -> Result<KnowledgeGraph, KgError> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unknown")
        .to_string();
    let file = File::open(path).map_err(|e| KgError::Io(format!("{}: {e}", path.display())))?;
    read_graph(BufReader::new(file), &stem)
}

pub fn write_graph(kg: &KnowledgeGraph, mut out: impl Write) -> Result<(), KgError> {
    writeln!(out, "#@country\t{}", kg.country())?;
    for (label, ty) in kg.labels.iter().zip(&kg.node_types) {
        writeln!(out, "#@node\t{label}\t{ty}")?;
    }
    for t in kg.edges() {
        let (ht, tt): (NodeType, NodeType) = t.relation.signature();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            kg.labels[t.head.index()],
            ht,
            RelationType::as_str(t.relation),
            kg.labels[t.tail.index()],
            tt
        )?;
    }
    Ok(())
}

pub fn write_graph_file(kg: &KnowledgeGraph, path: &Path) -> Result<(), KgError> {
    let file = File::create(path).map_err(|e| KgError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write_graph(kg, &mut w)?;
    w.flush()?;
    Ok(())
}
