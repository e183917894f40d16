//! Tool dependency graphs and dependency-guided composition.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::ToolResolver;
use crate::registry::RegistryError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("arc {0} -> {1} names a tool outside the graph")]
    UnknownNode(String, String),
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
}

#[derive(Debug, thiserror::Error)]
pub enum CompositionError {
    #[error("tool `{0}` not found")]
    NotFound(String),
    #[error("tool `{tool}` cannot be resolved: {source}")]
    Unresolvable { tool: String, source: RegistryError },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    CyclicDependencies(Vec<String>),
}

/// Tools and their `dependency -> dependent` arcs. Acyclic by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    nodes: BTreeSet<String>,
    arcs: BTreeSet<(String, String)>,
}

impl DependencyGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = String>,
        arcs: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, GraphError> {
        let nodes: BTreeSet<String> = nodes.into_iter().collect();
        let arcs: BTreeSet<(String, String)> = arcs.into_iter().collect();
        if let Some((a, b)) = arcs.iter().find(|(a, b)| !nodes.contains(a) || !nodes.contains(b)) {
            return Err(GraphError::UnknownNode(a.clone(), b.clone()));
        }
        let graph = Self { nodes, arcs };
        if let Err(cycle) = graph.kahn() {
            return Err(GraphError::Cycle(cycle));
        }
        Ok(graph)
    }

    /// The transitive dependency closure of `target`, resolved through
    /// `tools`.
    pub fn closure_of(target: &str, tools: &dyn ToolResolver) -> Result<Self, CompositionError> {
        let mut nodes = BTreeSet::new();
        let mut arcs = BTreeSet::new();
        let mut todo = vec![target.to_string()];
        while let Some(id) = todo.pop() {
            if !nodes.insert(id.clone()) {
                continue;
            }
            let tool = tools.resolve_tool(&id).map_err(|e| match e {
                RegistryError::NotFound { .. } => CompositionError::NotFound(id.clone()),
                other => CompositionError::Unresolvable { tool: id.clone(), source: other },
            })?;
            for dep in &tool.dependencies {
                arcs.insert((dep.clone(), id.clone()));
                todo.push(dep.clone());
            }
        }
        Self::new(nodes, arcs).map_err(|e| match e {
            GraphError::Cycle(c) => CompositionError::CyclicDependencies(c),
            GraphError::UnknownNode(..) => unreachable!("closure arcs only name visited tools"),
        })
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn arcs(&self) -> &BTreeSet<(String, String)> {
        &self.arcs
    }

    /// Kahn traversal taking the smallest ready tool id at every choice.
    pub fn topological_order(&self) -> Vec<String> {
        self.kahn().expect("graph is acyclic by construction")
    }

    fn kahn(&self) -> Result<Vec<String>, Vec<String>> {
        let mut indegree: BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        for (_, b) in &self.arcs {
            *indegree.get_mut(b.as_str()).expect("arcs reference members") += 1;
        }
        let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(next) = ready.pop_first() {
            order.push(next.to_string());
            for (a, b) in &self.arcs {
                if a == next {
                    let d = indegree.get_mut(b.as_str()).expect("arcs reference members");
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(b.as_str());
                    }
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            let left: BTreeSet<&str> = indegree.iter().filter(|(_, &d)| d > 0).map(|(&n, _)| n).collect();
            Err(self.find_cycle(&left))
        }
    }

    /// A cycle among `left`, every member of which has an unprocessed
    /// predecessor. Walking predecessors backwards must revisit a node.
    fn find_cycle(&self, left: &BTreeSet<&str>) -> Vec<String> {
        let start = *left.iter().next().expect("a blocked Kahn traversal leaves nodes");
        let mut path: Vec<&str> = vec![start];
        loop {
            let current = *path.last().unwrap();
            let pred = self
                .arcs
                .iter()
                .find(|(a, b)| b == current && left.contains(a.as_str()))
                .map(|(a, _)| a.as_str())
                .expect("blocked nodes have blocked predecessors");
            if let Some(pos) = path.iter().position(|&p| p == pred) {
                let mut cycle: Vec<String> = path[pos..].iter().rev().map(|s| s.to_string()).collect();
                cycle.push(cycle[0].clone());
                return cycle;
            }
            path.push(pred);
        }
    }
}

/// A dependency-respecting order of `target`'s transitive dependencies,
/// ending at `target`; the lexicographically smallest such order.
pub fn suggest_composition(target: &str, tools: &dyn ToolResolver) -> Result<Vec<String>, CompositionError> {
    Ok(DependencyGraph::closure_of(target, tools)?.topological_order())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> String {
        x.to_string()
    }

    #[test]
    fn rejects_cycles_and_foreign_arcs() {
        assert!(matches!(
            DependencyGraph::new([s("a"), s("b")], [(s("a"), s("b")), (s("b"), s("a"))]),
            Err(GraphError::Cycle(_))
        ));
        assert!(matches!(DependencyGraph::new([s("a")], [(s("a"), s("z"))]), Err(GraphError::UnknownNode(..))));
    }

    #[test]
    fn sorted_frontier() {
        let g = DependencyGraph::new(
            [s("t"), s("b"), s("c"), s("a")],
            [(s("a"), s("b")), (s("a"), s("c")), (s("b"), s("t")), (s("c"), s("t"))],
        )
        .unwrap();
        assert_eq!(g.topological_order(), ["a", "b", "c", "t"]);
    }

    #[test]
    fn cycle_is_reported_closed() {
        let Err(GraphError::Cycle(c)) =
            DependencyGraph::new([s("x"), s("y"), s("z")], [(s("x"), s("y")), (s("y"), s("z")), (s("z"), s("y"))])
        else {
            panic!("cycle not detected");
        };
        assert_eq!(c.first(), c.last());
        assert!(c.contains(&s("y")) && c.contains(&s("z")) && !c.contains(&s("x")));
    }
}
