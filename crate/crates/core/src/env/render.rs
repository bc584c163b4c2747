//! Deterministic rasterization of accessibility trees.
//!
//! Background intensity depends on the template. Each node is a filled
//! rectangle whose intensity comes from its tag plus a text-dependent
//! offset; on top of that sit a text bar proportional to the text length and
//! a 16×4 strip encoding the 64-bit text hash bit by bit. Two trees differing
//! in some node's text therefore differ in at least one pixel of that node's
//! strip, unless the 64-bit hashes collide or a later node occludes it.

use crate::action::ScreenDims;
use crate::hashing::{hash_strs, hash_u64s};
use crate::raster::Raster;

use super::{AxNode, StateDesc};

const STRIP_COLS: u32 = 16;
const STRIP_ROWS: u32 = 4;

fn background(template_id: u32) -> u8 {
    200 + (hash_u64s(&[0xb6, u64::from(template_id)]) % 48) as u8
}

fn node_intensity(node: &AxNode) -> u8 {
    let tag_base = 24 + (hash_strs(&["tag", &node.tag]) % 136) as u8;
    let text_jitter = (hash_strs(&["text", &node.tag, &node.text]) % 32) as u8;
    tag_base + text_jitter
}

fn paint_node(raster: &mut Raster, node: &AxNode) {
    let b = node.bounds;
    let base = node_intensity(node);
    raster.fill_rect(b.x, b.y, b.w, b.h, base);

    // Text bar: 6 px per character, vertically centered.
    if !node.text.is_empty() && b.w > 8 && b.h >= 12 {
        let len = node.text.chars().count() as u32;
        let bar_w = (len * 6).min(b.w - 8);
        raster.fill_rect(b.x + 4, b.y + b.h / 2 + 1, bar_w, 3, base ^ 0x80);
    }

    let bits = hash_strs(&["strip", &node.text]);
    for i in 0..(STRIP_COLS * STRIP_ROWS) {
        let (cx, cy) = (i % STRIP_COLS, i / STRIP_COLS);
        let (px, py) = (b.x + 2 + cx, b.y + 2 + cy);
        if px >= b.x + b.w || py >= b.y + b.h || px >= raster.width() || py >= raster.height() {
            continue;
        }
        if (bits >> i) & 1 == 1 {
            raster.set(px, py, base ^ 0x40);
        }
    }
}

/// Renders a state description. Pure in `(desc.template_id, desc.tree)`.
pub fn render(desc: &StateDesc, screen: ScreenDims) -> Raster {
    let mut raster = Raster::filled(screen.width, screen.height, background(desc.template_id));
    for node in &desc.tree {
        paint_node(&mut raster, node);
    }
    raster
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Bounds, EventKind, EventSet, StateId, SCREEN};

    fn desc(texts: &[&str]) -> StateDesc {
        let tree = texts
            .iter()
            .enumerate()
            .map(|(i, t)| AxNode {
                node_id: format!("n{i}"),
                tag: if i % 2 == 0 { "button" } else { "text" }.into(),
                xpath: format!("/p/n[{i}]"),
                text: (*t).into(),
                bounds: Bounds::new(16, 60 + 40 * i as u32, 224, 32),
                events: EventSet::of(&[EventKind::Clickable]),
            })
            .collect();
        StateDesc {
            state_id: StateId(0),
            template_id: 3,
            semantic_label: String::new(),
            tree,
        }
    }

    #[test]
    fn empty_tree_is_uniform_background() {
        let r = render(&desc(&[]), SCREEN);
        let bg = r.get(0, 0);
        assert!(r.pixels().iter().all(|&p| p == bg));
        assert_eq!((r.width(), r.height()), (256, 512));
    }

    #[test]
    fn rendering_is_pure() {
        let d = desc(&["Submit", "Total 42"]);
        assert_eq!(render(&d, SCREEN), render(&d.clone(), SCREEN));
    }

    #[test]
    fn text_change_changes_pixels() {
        let a = render(&desc(&["Submit", "Total 42"]), SCREEN);
        for alt in ["Total 43", "total 42", "", "Total 42 "] {
            let b = render(&desc(&["Submit", alt]), SCREEN);
            assert!(a.diff_count(&b).unwrap() > 0, "text {alt:?} rendered identically");
        }
    }
}
