//! Procedural app generation.
//!
//! Each app owns a pool of content templates. A template fixes the page
//! skeleton (tags, xpaths, geometry, events) and marks some text slots as
//! dynamic; states instantiate a template with fresh dynamic texts, so many
//! states share one structure. Some templates are near-copies ("variants") of
//! an earlier one, differing in a single component.
//!
//! Edges are laid out in two passes: a reachability pass that attaches every
//! state to an affordance of an earlier non-terminal state, then a density
//! pass that wires remaining affordances to random targets. Exactly
//! `round(fault_rate * |edges|)` edges are flagged as faults.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::rng_for;
use crate::par::Executor;

use super::{
    enumerate_affordances, salient_texts, AxNode, Bounds, Edge, EdgeFlag, EnvError, EnvGraph,
    EventKind, EventSet, StateDesc, StateId, UiState, SCREEN,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSpec {
    pub n_apps: usize,
    pub states_per_app: usize,
    pub templates_per_app: usize,
    pub fault_rate: f64,
    /// Probability that a spare affordance becomes an edge.
    #[serde(default = "default_edge_density")]
    pub edge_density: f64,
    /// Fraction of non-entry states declared terminal.
    #[serde(default = "default_terminal_fraction")]
    pub terminal_fraction: f64,
    /// Probability that a template is a one-component variant of an earlier one.
    #[serde(default = "default_variant_rate")]
    pub variant_rate: f64,
}

fn default_edge_density() -> f64 {
    0.5
}
fn default_terminal_fraction() -> f64 {
    0.05
}
fn default_variant_rate() -> f64 {
    0.25
}

impl GenerationSpec {
    pub fn new(n_apps: usize, states_per_app: usize, templates_per_app: usize, fault_rate: f64) -> Self {
        Self {
            n_apps,
            states_per_app,
            templates_per_app,
            fault_rate,
            edge_density: default_edge_density(),
            terminal_fraction: default_terminal_fraction(),
            variant_rate: default_variant_rate(),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidSpec(m.to_string()));
        if self.states_per_app < 2 {
            return bad("states_per_app must be at least 2");
        }
        if self.templates_per_app == 0 {
            return bad("templates_per_app must be at least 1");
        }
        if !(0.0..=0.5).contains(&self.fault_rate) {
            return bad("fault_rate must lie in [0, 0.5]");
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return bad("edge_density must lie in [0, 1]");
        }
        if !(0.0..=0.3).contains(&self.terminal_fraction) {
            return bad("terminal_fraction must lie in [0, 0.3]");
        }
        if !(0.0..=1.0).contains(&self.variant_rate) {
            return bad("variant_rate must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Generates `spec.n_apps` graphs; app `i` uses its own seeded stream.
pub fn generate_environment(
    seed: u64,
    spec: &GenerationSpec,
    exec: &Executor,
) -> Result<Vec<EnvGraph>, EnvError> {
    spec.validate()?;
    exec.map_range(spec.n_apps, |i| generate_app(seed, spec, i))
        .into_iter()
        .collect()
}

pub fn generate_app(seed: u64, spec: &GenerationSpec, app_index: usize) -> Result<EnvGraph, EnvError> {
    spec.validate()?;
    let mut rng = rng_for(seed, app_index as u64);
    let app_id = format!("app{app_index:03}");

    let mut templates: Vec<Template> = Vec::with_capacity(spec.templates_per_app);
    // Variants derive from originals only, so near-duplicates differ by one node.
    let mut originals: Vec<usize> = Vec::new();
    for t in 0..spec.templates_per_app {
        let tpl = if t > 0 && rng.gen_bool(spec.variant_rate) {
            let base = *originals.choose(&mut rng).expect("template 0 is original");
            templates[base].variant(t as u32, &mut rng)
        } else {
            originals.push(t);
            Template::random(&app_id, t as u32, &mut rng)
        };
        templates.push(tpl);
    }

    let n = spec.states_per_app;
    let states: Vec<UiState> = (0..n)
        .map(|i| {
            let t = if i < templates.len() {
                i
            } else {
                rng.gen_range(0..templates.len())
            };
            UiState::from_desc(templates[t].instantiate(StateId(i as u32), &mut rng))
        })
        .collect();

    let n_terminal = (spec.terminal_fraction * (n - 1) as f64).floor() as usize;
    let mut candidates: Vec<u32> = (1..n as u32).collect();
    candidates.shuffle(&mut rng);
    let terminals: BTreeSet<StateId> = candidates[..n_terminal].iter().map(|&i| StateId(i)).collect();

    let affordances: Vec<_> = states.iter().map(enumerate_affordances).collect();
    // Free (state, affordance) slots of non-terminal states.
    let mut free: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if terminals.contains(&StateId(i as u32)) {
                Vec::new()
            } else {
                (0..affordances[i].len()).collect()
            }
        })
        .collect();

    let mut edges: Vec<Edge> = Vec::new();
    let make_edge = |from: usize, slot: usize, to: usize, edges: &mut Vec<Edge>| {
        let aff = &affordances[from][slot];
        edges.push(Edge {
            from: StateId(from as u32),
            action: aff.action.clone(),
            target_node: states[from].tree()[aff.node].node_id.clone(),
            to: StateId(to as u32),
            flag: EdgeFlag::Valid,
        });
    };
    let take_slot = |free: &mut Vec<Vec<usize>>, state: usize, rng: &mut ChaCha8Rng| {
        let k = rng.gen_range(0..free[state].len());
        free[state].swap_remove(k)
    };

    // Reachability pass.
    for i in 1..n {
        let parents: Vec<usize> = (0..i).filter(|&j| !free[j].is_empty()).collect();
        let Some(&parent) = parents.choose(&mut rng) else {
            return Err(EnvError::InvalidSpec(
                "ran out of affordances while wiring reachability".into(),
            ));
        };
        let slot = take_slot(&mut free, parent, &mut rng);
        make_edge(parent, slot, i, &mut edges);
    }

    let mut out_degree = vec![0usize; n];
    for e in &edges {
        out_degree[e.from.0 as usize] += 1;
    }
    let random_target = |from: usize, rng: &mut ChaCha8Rng| {
        let t = rng.gen_range(0..n - 1);
        if t >= from {
            t + 1
        } else {
            t
        }
    };
    for i in 0..n {
        if out_degree[i] == 0 && !free[i].is_empty() {
            let slot = take_slot(&mut free, i, &mut rng);
            let to = random_target(i, &mut rng);
            make_edge(i, slot, to, &mut edges);
        }
    }
    // Density pass.
    for i in 0..n {
        let mut slots = std::mem::take(&mut free[i]);
        slots.sort_unstable();
        for slot in slots {
            if rng.gen_bool(spec.edge_density) {
                let to = random_target(i, &mut rng);
                make_edge(i, slot, to, &mut edges);
            }
        }
    }
    edges.sort_by_key(|e| e.from);

    let n_faults = (spec.fault_rate * edges.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(&mut rng);
    for (k, &e) in order[..n_faults].iter().enumerate() {
        edges[e].flag = if k % 2 == 0 {
            EdgeFlag::SystemError
        } else {
            EdgeFlag::RenderArtifact
        };
    }

    EnvGraph::new(app_id, SCREEN, Some(StateId(0)), terminals, states, edges)
}

const PAGES: [(&str, &str); 20] = [
    ("home", "Home"),
    ("search", "Search"),
    ("product", "Product details"),
    ("cart", "Shopping cart"),
    ("checkout", "Checkout"),
    ("order_confirm", "Order confirmation"),
    ("profile", "Profile"),
    ("settings", "Settings"),
    ("login", "Sign in"),
    ("category", "Categories"),
    ("coupon", "Coupons"),
    ("address", "Delivery address"),
    ("payment", "Payment"),
    ("messages", "Messages"),
    ("favorites", "Favorites"),
    ("history", "Order history"),
    ("help", "Help center"),
    ("booking", "Booking"),
    ("menu", "Menu"),
    ("store", "Store locator"),
];
const BUTTONS: [&str; 14] = [
    "Submit", "Confirm", "Buy now", "Add to cart", "Continue", "Save", "Apply", "Next",
    "Sign in", "Book", "Pay", "Share", "Follow", "Details",
];
const LINKS: [&str; 8] = [
    "View all", "Terms of service", "Forgot password", "More", "Edit", "Change", "Privacy", "Contact us",
];
const PLACEHOLDERS: [&str; 6] = ["Search", "Phone number", "Name", "Address", "Coupon code", "Message"];
const SWITCHES: [&str; 4] = ["Notifications", "Dark mode", "Auto renew", "Location"];
const TABS: [&str; 4] = ["Home", "Discover", "Cart", "Me"];
const ADJECTIVES: [&str; 12] = [
    "Fresh", "Classic", "Spicy", "Iced", "Organic", "Deluxe", "Mini", "Grand", "Golden", "Smoky",
    "Crispy", "Sweet",
];
const NOUNS: [&str; 12] = [
    "Latte", "Noodles", "Sneakers", "Backpack", "Tea", "Dumplings", "Jacket", "Lamp", "Salad",
    "Ticket", "Burger", "Cake",
];
const CAPTIONS: [&str; 8] = [
    "Limited offer", "New arrival", "Best seller", "Members only", "Free delivery", "Hot deal",
    "Top rated", "Seasonal pick",
];

#[derive(Clone, Copy, Debug)]
enum Dynamic {
    Product,
    Price,
    Caption,
    Count,
}

impl Dynamic {
    fn sample(self, rng: &mut ChaCha8Rng) -> String {
        match self {
            Dynamic::Product => format!(
                "{} {}",
                ADJECTIVES.choose(rng).unwrap(),
                NOUNS.choose(rng).unwrap()
            ),
            Dynamic::Price => format!("Price {}.{:02}", rng.gen_range(1..500), rng.gen_range(0..100)),
            Dynamic::Caption => CAPTIONS.choose(rng).unwrap().to_string(),
            Dynamic::Count => format!("{} items", rng.gen_range(1..60)),
        }
    }
}

#[derive(Clone, Debug)]
enum Slot {
    Fixed(String),
    Dynamic(Dynamic),
}

#[derive(Clone, Debug)]
struct NodeSkel {
    tag: &'static str,
    xpath: String,
    bounds: Bounds,
    events: EventSet,
    text: Slot,
}

#[derive(Clone, Debug)]
struct Template {
    id: u32,
    title: String,
    page: String,
    nodes: Vec<NodeSkel>,
    body_end: u32,
}

const BODY_TOP: u32 = 56;
const TABBAR_TOP: u32 = 464;

struct Builder {
    page: String,
    nodes: Vec<NodeSkel>,
    counts: std::collections::BTreeMap<String, u32>,
}

impl Builder {
    fn xpath(&mut self, parent: &str, tag: &str) -> String {
        let key = format!("{parent}/{tag}");
        let c = self.counts.entry(key.clone()).or_insert(0);
        *c += 1;
        format!("{key}[{c}]")
    }

    fn push(&mut self, parent: Option<&str>, tag: &'static str, bounds: Bounds, events: &[EventKind], text: Slot) -> String {
        let parent = parent.map_or_else(|| format!("/{}", self.page), str::to_string);
        let xpath = self.xpath(&parent, tag);
        self.nodes.push(NodeSkel {
            tag,
            xpath: xpath.clone(),
            bounds,
            events: EventSet::of(events),
            text,
        });
        xpath
    }
}

fn fixed(s: &str) -> Slot {
    Slot::Fixed(s.to_string())
}

impl Template {
    fn random(app_id: &str, id: u32, rng: &mut ChaCha8Rng) -> Self {
        let (page_base, title_base) = PAGES[id as usize % PAGES.len()];
        let round = id as usize / PAGES.len();
        let (page, title) = if round == 0 {
            (format!("{app_id}/{page_base}"), title_base.to_string())
        } else {
            (format!("{app_id}/{page_base}_{}", round + 1), format!("{title_base} {}", round + 1))
        };
        let mut b = Builder {
            page: page.clone(),
            nodes: Vec::new(),
            counts: Default::default(),
        };
        let header = b.push(None, "header", Bounds::new(0, 0, 256, 48), &[], fixed(""));
        b.push(Some(&header), "text", Bounds::new(16, 12, 156, 24), &[], Slot::Fixed(title.clone()));
        b.push(Some(&header), "image", Bounds::new(176, 14, 20, 20), &[], fixed(""));
        if id > 0 {
            b.push(Some(&header), "button", Bounds::new(200, 8, 48, 32), &[EventKind::Clickable], fixed("Back"));
        }
        let has_tabbar = rng.gen_bool(0.5);
        let limit = if has_tabbar { TABBAR_TOP - 8 } else { SCREEN.height - 8 };

        let mut y = BODY_TOP;
        let mut interactive = 0;
        let target_rows = rng.gen_range(6..=9);
        for _ in 0..target_rows {
            let kind = rng.gen_range(0..8);
            let height = match kind {
                0 | 1 => 36,
                2 => 24,
                3 => 32,
                4 => rng.gen_range(64..=96),
                5 => 20,
                6 => 28,
                _ => 3 * 40 + 8,
            };
            if y + height > limit {
                continue;
            }
            match kind {
                0 => {
                    b.push(None, "button", Bounds::new(16, y, 224, 36), &[EventKind::Clickable], fixed(BUTTONS.choose(rng).unwrap()));
                    interactive += 1;
                }
                1 => {
                    b.push(None, "button", Bounds::new(16, y, 108, 36), &[EventKind::Clickable], fixed(BUTTONS.choose(rng).unwrap()));
                    b.push(None, "button", Bounds::new(132, y, 108, 36), &[EventKind::Clickable], fixed(BUTTONS.choose(rng).unwrap()));
                    interactive += 2;
                }
                2 => {
                    let d = if rng.gen_bool(0.5) { Dynamic::Product } else { Dynamic::Price };
                    b.push(None, "text", Bounds::new(16, y, 224, 24), &[], Slot::Dynamic(d));
                }
                3 => {
                    b.push(None, "input", Bounds::new(16, y, 224, 32), &[EventKind::Editable], fixed(PLACEHOLDERS.choose(rng).unwrap()));
                    interactive += 1;
                }
                4 => {
                    let clickable = rng.gen_bool(0.5);
                    let ev: &[EventKind] = if clickable { &[EventKind::Clickable] } else { &[] };
                    let img = b.push(None, "image", Bounds::new(16, y, 224, height), ev, fixed(""));
                    b.push(Some(&img), "text", Bounds::new(24, y + height - 24, 208, 20), &[], Slot::Dynamic(Dynamic::Caption));
                    interactive += usize::from(clickable);
                }
                5 => {
                    b.push(None, "link", Bounds::new(16, y, 120, 20), &[EventKind::Clickable], fixed(LINKS.choose(rng).unwrap()));
                    interactive += 1;
                }
                6 => {
                    b.push(None, "text", Bounds::new(16, y, 150, 28), &[], fixed(SWITCHES.choose(rng).unwrap()));
                    b.push(None, "switch", Bounds::new(180, y, 60, 28), &[EventKind::Clickable], fixed(""));
                    interactive += 1;
                }
                _ => {
                    let list = b.push(None, "list", Bounds::new(0, y, 256, height), &[EventKind::Scrollable], Slot::Dynamic(Dynamic::Count));
                    for i in 0..3 {
                        b.push(Some(&list), "item", Bounds::new(16, y + 8 + 40 * i, 224, 36), &[EventKind::Clickable], Slot::Dynamic(Dynamic::Product));
                    }
                    interactive += 4;
                }
            }
            y += height + 8;
        }
        while interactive < 3 && y + 36 <= limit {
            b.push(None, "button", Bounds::new(16, y, 224, 36), &[EventKind::Clickable], fixed(BUTTONS.choose(rng).unwrap()));
            interactive += 1;
            y += 44;
        }
        if has_tabbar {
            let bar = b.push(None, "tabbar", Bounds::new(0, TABBAR_TOP, 256, 48), &[], fixed(""));
            for (i, t) in TABS.iter().enumerate() {
                b.push(Some(&bar), "tab", Bounds::new(64 * i as u32, TABBAR_TOP, 64, 48), &[EventKind::Clickable], fixed(t));
            }
        }
        Template {
            id,
            title,
            page,
            nodes: b.nodes,
            body_end: y,
        }
    }

    /// Copy of `self` under a new id with one extra text row, or with its
    /// last body node's events toggled when there is no room.
    fn variant(&self, id: u32, rng: &mut ChaCha8Rng) -> Self {
        let mut t = self.clone();
        t.id = id;
        let limit = if t.nodes.iter().any(|n| n.tag == "tabbar") { TABBAR_TOP - 8 } else { SCREEN.height - 8 };
        if t.body_end + 24 <= limit {
            let k = t.nodes.iter().filter(|n| n.xpath.starts_with(&format!("/{}/text[", t.page))).count() + 1;
            let node = NodeSkel {
                tag: "text",
                xpath: format!("/{}/text[{k}]", t.page),
                bounds: Bounds::new(16, t.body_end, 224, 24),
                events: EventSet::default(),
                text: Slot::Dynamic(Dynamic::Caption),
            };
            let at = t.nodes.iter().position(|n| n.tag == "tabbar").unwrap_or(t.nodes.len());
            t.nodes.insert(at, node);
            t.body_end += 32;
        } else {
            let candidates: Vec<usize> = (0..t.nodes.len()).filter(|&i| t.nodes[i].tag == "text").collect();
            if let Some(&i) = candidates.choose(rng) {
                t.nodes[i].events.insert(EventKind::Clickable);
            }
        }
        t
    }

    fn instantiate(&self, state_id: StateId, rng: &mut ChaCha8Rng) -> StateDesc {
        let tree: Vec<AxNode> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| AxNode {
                node_id: format!("n{i}"),
                tag: n.tag.to_string(),
                xpath: n.xpath.clone(),
                text: match &n.text {
                    Slot::Fixed(s) => s.clone(),
                    Slot::Dynamic(d) => d.sample(rng),
                },
                bounds: n.bounds,
                events: n.events.clone(),
            })
            .collect();
        let salient = salient_texts(&tree, 3, Some(&self.title));
        let semantic_label = if salient.is_empty() {
            format!("{} page", self.title)
        } else {
            format!("{} page showing {}", self.title, salient.join(", "))
        };
        StateDesc {
            state_id,
            template_id: self.id,
            semantic_label,
            tree,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::io::graph_documents;

    #[test]
    fn minimal_graph() {
        let spec = GenerationSpec::new(1, 2, 1, 0.0);
        let gs = generate_environment(1, &spec, &Executor::sequential()).unwrap();
        assert_eq!(gs.len(), 1);
        let g = &gs[0];
        assert_eq!(g.states.len(), 2);
        assert!(!g.edges.is_empty());
        assert!(g.edges.iter().all(|e| e.flag == EdgeFlag::Valid));
    }

    #[test]
    fn rejects_bad_specs() {
        let ex = Executor::sequential();
        for spec in [
            GenerationSpec::new(1, 0, 1, 0.0),
            GenerationSpec::new(1, 1, 1, 0.0),
            GenerationSpec::new(1, 5, 0, 0.0),
            GenerationSpec::new(1, 5, 2, 0.6),
        ] {
            assert!(matches!(generate_environment(1, &spec, &ex), Err(EnvError::InvalidSpec(_))));
        }
    }

    #[test]
    fn fault_fraction_near_rate() {
        let spec = GenerationSpec::new(3, 50, 5, 0.1);
        let gs = generate_environment(7, &spec, &Executor::sequential()).unwrap();
        assert_eq!(gs.len(), 3);
        let total: usize = gs.iter().map(|g| g.edges.len()).sum();
        let flagged: usize = gs.iter().map(|g| g.edges.iter().filter(|e| e.flag.is_fault()).count()).sum();
        let frac = flagged as f64 / total as f64;
        assert!((frac - 0.1).abs() <= 0.05, "flagged fraction {frac}");
    }

    #[test]
    fn regeneration_is_byte_identical_across_worker_counts() {
        let spec = GenerationSpec::new(3, 40, 6, 0.2);
        let a = generate_environment(11, &spec, &Executor::sequential()).unwrap();
        let b = generate_environment(11, &spec, &Executor::new(4)).unwrap();
        for (ga, gb) in a.iter().zip(&b) {
            assert_eq!(graph_documents(ga), graph_documents(gb));
            for (sa, sb) in ga.states.iter().zip(&gb.states) {
                assert_eq!(sa.raster, sb.raster);
            }
        }
        let c = generate_environment(12, &spec, &Executor::sequential()).unwrap();
        assert_ne!(graph_documents(&a[0]), graph_documents(&c[0]));
    }

    #[test]
    fn structural_invariants_hold() {
        let spec = GenerationSpec::new(2, 120, 12, 0.1);
        for g in generate_environment(3, &spec, &Executor::sequential()).unwrap() {
            for s in &g.states {
                let mut xp = BTreeSet::new();
                for n in s.tree() {
                    assert!(n.bounds.fits(g.screen), "{n:?} off screen");
                    assert!(xp.insert(n.xpath.clone()), "duplicate xpath {}", n.xpath);
                }
                assert_eq!((s.raster.width(), s.raster.height()), (256, 512));
                if !g.is_terminal(s.id()) {
                    assert!(g.out_edges(s.id()).next().is_some(), "{} has no out edge", s.id());
                }
            }
            // every state reachable from entry
            let mut seen = vec![false; g.states.len()];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for (_, e) in g.out_edges(StateId(u as u32)) {
                    let v = e.to.0 as usize;
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
            // templates are reused
            let templates: BTreeSet<u32> = g.states.iter().map(|s| s.desc.template_id).collect();
            assert!(templates.len() <= 12);
        }
    }

    #[test]
    fn affordances_that_match_edges_reach_their_endpoints() {
        let spec = GenerationSpec::new(1, 60, 8, 0.1);
        let g = &generate_environment(5, &spec, &Executor::sequential()).unwrap()[0];
        for e in &g.edges {
            let s = g.state(e.from).unwrap();
            let aff = enumerate_affordances(s);
            assert!(aff.iter().any(|a| a.action == e.action));
            match g.step(e.from, &e.action).unwrap() {
                super::super::StepOutcome::Moved { next, flag, .. } => {
                    assert_eq!(next, e.to);
                    assert_eq!(flag, e.flag);
                }
                other => panic!("edge action did not move: {other:?}"),
            }
        }
    }
}
