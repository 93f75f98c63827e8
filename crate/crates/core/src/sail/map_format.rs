//! Plain-text map files.
//!
//! ```text
//! # comment
//! node 0 0 sofa
//! node 1 0
//! edge 0 0 1 0 floor=blue wall=fish
//! ```
//!
//! Nodes must be declared before the edges that use them. The map name is
//! the file stem.

use std::fmt::Write as _;
use std::path::Path;

use super::{EdgeAttrs, Floor, Object, SailMap, Wall};
use crate::error::{Error, Result};

pub fn load_map(path: &Path) -> Result<SailMap> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("map")
        .to_string();
    parse_map(&name, &std::fs::read_to_string(path)?)
}

pub fn parse_map(name: &str, text: &str) -> Result<SailMap> {
    let mut map = SailMap::new(name);
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let err = |message: String| Error::Parse { line, message };
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        let int = |s: &str| {
            s.parse::<i32>()
                .map_err(|_| err(format!("bad coordinate {s:?}")))
        };
        match fields[0] {
            "node" if fields.len() == 3 || fields.len() == 4 => {
                let node = (int(fields[1])?, int(fields[2])?);
                map.nodes.insert(node);
                if let Some(obj) = fields.get(3) {
                    let obj = Object::from_word(obj)
                        .ok_or_else(|| err(format!("unknown object {obj:?}")))?;
                    map.objects.insert(node, obj);
                }
            }
            "edge" if fields.len() == 7 => {
                let a = (int(fields[1])?, int(fields[2])?);
                let b = (int(fields[3])?, int(fields[4])?);
                let mut floor = None;
                let mut wall = None;
                for kv in &fields[5..] {
                    match kv.split_once('=') {
                        Some(("floor", v)) => floor = Floor::from_word(v),
                        Some(("wall", v)) => wall = Wall::from_word(v),
                        _ => return Err(err(format!("bad attribute {kv:?}"))),
                    }
                }
                let attrs = match (floor, wall) {
                    (Some(floor), Some(wall)) => EdgeAttrs { floor, wall },
                    _ => return Err(err("edge needs known floor= and wall=".into())),
                };
                map.add_edge(a, b, attrs).map_err(|e| err(e.to_string()))?;
            }
            other => return Err(err(format!("unrecognised line starting with {other:?}"))),
        }
    }
    if map.nodes.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "map declares no nodes".into(),
        });
    }
    Ok(map)
}

/// Canonical text form; `parse_map` inverts it.
pub fn map_to_text(map: &SailMap) -> String {
    let mut out = String::new();
    for node in &map.nodes {
        match map.objects.get(node) {
            Some(obj) => writeln!(out, "node {} {} {}", node.0, node.1, obj),
            None => writeln!(out, "node {} {}", node.0, node.1),
        }
        .expect("string write");
    }
    for ((a, b), attrs) in &map.edges {
        writeln!(
            out,
            "edge {} {} {} {} floor={} wall={}",
            a.0, a.1, b.0, b.1, attrs.floor, attrs.wall
        )
        .expect("string write");
    }
    out
}

pub fn save_map(map: &SailMap, path: &Path) -> Result<()> {
    std::fs::write(path, map_to_text(map))?;
    Ok(())
}

/// Every `*.map` file in `dir`, keyed by file stem.
pub fn load_map_dir(dir: &Path) -> Result<crate::world::MapLibrary> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "map"));
    paths.sort();
    let mut lib = crate::world::MapLibrary::new();
    for p in paths {
        let m = load_map(&p)?;
        lib.insert(m.name.clone(), std::sync::Arc::new(m));
    }
    Ok(lib)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
# small L-shaped corridor
node 0 0 sofa
node 1 0
node 1 1 lamp
edge 0 0 1 0 floor=blue wall=fish
edge 1 0 1 1 floor=brick wall=plain
";

    #[test]
    fn empty_map_is_an_error() {
        assert!(parse_map("empty", "").is_err());
        assert!(parse_map("empty", "# nothing\n\n").is_err());
    }

    #[test]
    fn fixture_round_trips() {
        let m = parse_map("fixture", FIXTURE).unwrap();
        assert_eq!(m.nodes.len(), 3);
        assert_eq!(m.edges.len(), 2);
        let again = parse_map("fixture", &map_to_text(&m)).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_non_adjacent_edges() {
        let text = "node 0 0\nnode 2 0\nedge 0 0 2 0 floor=blue wall=fish\n";
        assert!(matches!(parse_map("bad", text), Err(Error::Parse { line: 3, .. })));
    }
}
