//! Graphviz views of a construction state.
//!
//! Node ids are the quoted string text with a view-specific prefix, so edges
//! can be read back from the output with a line-oriented parser.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::engine::ConstructionState;
use crate::kernel::{BinaryString, Lex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Deputies,
    Constraints,
    Gamma,
}

impl View {
    pub const ALL: [View; 3] = [View::Deputies, View::Constraints, View::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            View::Deputies => "deputies",
            View::Constraints => "constraints",
            View::Gamma => "gamma",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        View::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown view `{s}` (expected deputies, constraints or gamma)"))
    }
}

const LAYER_COLORS: [&str; 6] = ["firebrick", "royalblue", "darkgreen", "darkorange", "purple", "gray40"];

fn label(s: &BinaryString) -> String {
    if s.is_empty() {
        "ε".into()
    } else {
        s.to_string()
    }
}

/// A set of strings drawn as a prefix tree: each node hangs from its longest
/// proper prefix in the set. The root ε is always present.
struct PrefixTree {
    nodes: BTreeSet<Lex>,
}

impl PrefixTree {
    fn new() -> Self {
        let mut nodes = BTreeSet::new();
        nodes.insert(Lex(BinaryString::empty()));
        Self { nodes }
    }

    fn add(&mut self, s: &BinaryString) {
        self.nodes.insert(Lex(s.clone()));
    }

    fn write(&self, out: &mut String, prefix: &str) {
        for Lex(s) in &self.nodes {
            let _ = writeln!(out, "  \"{prefix}{s}\" [label=\"{}\"];", label(s));
        }
        // Lexicographic order visits a prefix before its extensions, so the
        // ancestors of each node are exactly the stack entries that prefix it.
        let mut stack: Vec<&BinaryString> = Vec::new();
        for Lex(s) in &self.nodes {
            while stack.last().is_some_and(|top| !top.is_prefix_of(s)) {
                stack.pop();
            }
            if let Some(parent) = stack.last() {
                let _ = writeln!(out, "  \"{prefix}{parent}\" -> \"{prefix}{s}\" [class=\"tree\"];");
            }
            stack.push(s);
        }
    }
}

pub fn export_dot(state: &ConstructionState, view: View) -> String {
    match view {
        View::Deputies => deputies(state),
        View::Constraints => constraints(state),
        View::Gamma => gamma(state),
    }
}

/// Endpoints and splitting nodes as a prefix tree, with a dashed edge from
/// each source to its image.
fn deputies(state: &ConstructionState) -> String {
    let mut tree = PrefixTree::new();
    for r in state.deputies.iter() {
        tree.add(&r.source);
        tree.add(&r.image);
        tree.add(&r.source.common_prefix(&r.image));
    }
    let mut out = String::from("digraph deputies {\n  node [shape=point, xlabel=\"\"];\n");
    tree.write(&mut out, "s:");
    for r in state.deputies.iter() {
        let color = LAYER_COLORS[r.layer as usize % LAYER_COLORS.len()];
        let _ = writeln!(
            out,
            "  \"s:{}\" -> \"s:{}\" [class=\"deputy\", layer={}, base=\"{}\", from_root=\"{}\", style=dashed, constraint=false, color={color}, label=\"d{}\"];",
            r.source,
            r.image,
            r.layer,
            r.anchor.base(),
            r.anchor.source_root(),
            r.layer,
        );
    }
    out.push_str("}\n");
    out
}

/// Constraint locations as a prefix tree, each constraint as a box on its
/// location, and a dotted edge from every origin to its replica.
fn constraints(state: &ConstructionState) -> String {
    let mut tree = PrefixTree::new();
    for c in state.constraints.iter() {
        tree.add(&c.loc);
    }
    let mut out = String::from("digraph constraints {\n  node [shape=point];\n");
    tree.write(&mut out, "s:");
    for c in state.constraints.iter() {
        let _ = writeln!(
            out,
            "  \"c:{}\" [shape=box, label=\"c({}, {}, {}, {}, {})\"];",
            c.id,
            c.layer,
            label(&c.loc),
            c.args,
            c.threshold,
            c.value,
        );
        let _ = writeln!(out, "  \"s:{}\" -> \"c:{}\" [class=\"at\", arrowhead=none];", c.loc, c.id);
        if let Some(origin) = c.provenance.origin() {
            let _ = writeln!(
                out,
                "  \"c:{origin}\" -> \"c:{}\" [class=\"replica\", style=dotted, constraint=false];",
                c.id
            );
        }
    }
    out.push_str("}\n");
    out
}

/// The Γ values of every key as a prefix tree, with an edge from Γ(source)
/// up to Γ(image) for each deputy.
fn gamma(state: &ConstructionState) -> String {
    let mut tree = PrefixTree::new();
    for (_, e) in state.gamma.iter() {
        tree.add(&e.value);
    }
    let mut out = String::from("digraph gamma {\n  node [shape=point];\n");
    tree.write(&mut out, "g:");
    for r in state.deputies.iter() {
        let (from, to) = (state.gamma.eval(&r.source), state.gamma.eval(&r.image));
        let color = LAYER_COLORS[r.layer as usize % LAYER_COLORS.len()];
        let _ = writeln!(
            out,
            "  \"g:{from}\" -> \"g:{to}\" [class=\"deputy\", layer={}, style=dashed, constraint=false, color={color}];",
            r.layer
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::ScheduleConfig;

    #[test]
    fn empty_state_has_only_the_root() {
        let state = ConstructionState::new(2, ScheduleConfig::Canonical);
        for view in View::ALL {
            let dot = export_dot(&state, view);
            assert_eq!(dot.matches("[label=").count(), 1, "{view}: {dot}");
            assert!(!dot.contains("->"), "{view}: {dot}");
        }
    }

    proptest::proptest! {
        #[test]
        fn tree_edges_hang_from_longest_proper_prefix(
            strings in proptest::collection::vec(proptest::collection::vec(proptest::bool::ANY, 0..9), 0..30)
        ) {
            let strings: Vec<BinaryString> = strings.iter().map(|b| BinaryString::from_bits(b.iter().copied())).collect();
            let mut tree = PrefixTree::new();
            for s in &strings {
                tree.add(s);
            }
            let mut out = String::new();
            tree.write(&mut out, "s:");
            let mut expected = BTreeSet::new();
            for Lex(s) in &tree.nodes {
                let parent = tree.nodes.iter().map(|l| &l.0).filter(|p| p.is_proper_prefix_of(s)).max_by_key(|p| p.len());
                if let Some(p) = parent {
                    expected.insert(format!("  \"s:{p}\" -> \"s:{s}\" [class=\"tree\"];"));
                }
            }
            let got: BTreeSet<String> = out.lines().filter(|l| l.contains("->")).map(str::to_string).collect();
            proptest::prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn views_parse_by_name() {
        for view in View::ALL {
            assert_eq!(view.name().parse::<View>().unwrap(), view);
        }
        assert!("trees".parse::<View>().is_err());
    }
}
