//! On-disk environment layout, one directory per app:
//!
//! ```text
//! <app_id>/graph.jsonl    header line, then one line per edge
//! <app_id>/states.jsonl   one line per state (tree + label, no pixels)
//! <app_id>/rasters/<state_id>.gray
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action::ScreenDims;
use crate::jsonl::{from_jsonl, to_jsonl, to_line};
use crate::raster::Raster;

use super::{Edge, EnvError, EnvGraph, StateDesc, StateId, UiState};

#[derive(Debug, Serialize, Deserialize)]
struct GraphHeader {
    app_id: String,
    width: u32,
    height: u32,
    entry: Option<StateId>,
    terminals: Vec<StateId>,
    states: usize,
    edges: usize,
}

/// `(graph.jsonl, states.jsonl)` contents for `g`.
pub fn graph_documents(g: &EnvGraph) -> (String, String) {
    let header = GraphHeader {
        app_id: g.app_id.clone(),
        width: g.screen.width,
        height: g.screen.height,
        entry: g.entry,
        terminals: g.terminals.iter().copied().collect(),
        states: g.states.len(),
        edges: g.edges.len(),
    };
    let mut graph = to_line(&header);
    graph.push('\n');
    graph.push_str(&to_jsonl(&g.edges));
    let states = to_jsonl(g.states.iter().map(|s| &s.desc));
    (graph, states)
}

pub fn raster_path(app_dir: &Path, state: StateId) -> PathBuf {
    app_dir.join("rasters").join(format!("{state}.gray"))
}

/// Writes `g` under `dir/<app_id>/`; returns the app directory.
pub fn write_graph(dir: &Path, g: &EnvGraph) -> Result<PathBuf, EnvError> {
    let app_dir = dir.join(&g.app_id);
    std::fs::create_dir_all(app_dir.join("rasters"))?;
    let (graph, states) = graph_documents(g);
    std::fs::write(app_dir.join("graph.jsonl"), graph)?;
    std::fs::write(app_dir.join("states.jsonl"), states)?;
    for s in &g.states {
        s.raster.write_to(&raster_path(&app_dir, s.id()))?;
    }
    Ok(app_dir)
}

pub fn read_graph(app_dir: &Path) -> Result<EnvGraph, EnvError> {
    let malformed = |what: &str, (line, e): (usize, serde_json::Error)| {
        EnvError::Malformed(format!("{what} line {line}: {e}"))
    };
    let graph = std::fs::read_to_string(app_dir.join("graph.jsonl"))?;
    let mut lines = graph.splitn(2, '\n');
    let header: GraphHeader = serde_json::from_str(lines.next().unwrap_or(""))
        .map_err(|e| EnvError::Malformed(format!("graph header: {e}")))?;
    let edges: Vec<Edge> = from_jsonl(lines.next().unwrap_or("")).map_err(|e| malformed("edge", e))?;
    let descs: Vec<StateDesc> = from_jsonl(&std::fs::read_to_string(app_dir.join("states.jsonl"))?)
        .map_err(|e| malformed("state", e))?;
    if descs.len() != header.states || edges.len() != header.edges {
        return Err(EnvError::Malformed(format!(
            "{}: header declares {} states/{} edges, found {}/{}",
            header.app_id,
            header.states,
            header.edges,
            descs.len(),
            edges.len()
        )));
    }
    let screen = ScreenDims::new(header.width, header.height);
    let mut states = Vec::with_capacity(descs.len());
    for desc in descs {
        let raster = Raster::read_from(&raster_path(app_dir, desc.state_id))?;
        if raster.width() != screen.width || raster.height() != screen.height {
            return Err(EnvError::Malformed(format!(
                "raster of {} is {}x{}, screen is {}x{}",
                desc.state_id,
                raster.width(),
                raster.height(),
                screen.width,
                screen.height
            )));
        }
        states.push(UiState { desc, raster });
    }
    EnvGraph::new(
        header.app_id,
        screen,
        header.entry,
        header.terminals.into_iter().collect::<BTreeSet<_>>(),
        states,
        edges,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, GenerationSpec};
    use crate::par::Executor;

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_environment(2, &GenerationSpec::new(1, 12, 3, 0.2), &Executor::sequential())
            .unwrap()
            .remove(0);
        let app_dir = write_graph(dir.path(), &g).unwrap();
        let back = read_graph(&app_dir).unwrap();
        assert_eq!(graph_documents(&back), graph_documents(&g));
        assert_eq!(back.states, g.states);
        let raw = std::fs::read(raster_path(&app_dir, StateId(0))).unwrap();
        assert_eq!(&raw[..8], &[0, 1, 0, 0, 0, 2, 0, 0]);
    }
}
