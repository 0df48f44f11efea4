//! Variability model of energy-consuming concerns.
//!
//! A model is a tree of concerns, variant groups and variants plus a set of
//! cross-tree `implies` / `excludes` constraints. The `rule` of a node states
//! how it relates to its parent: `mandatory` and `optional` children are
//! included individually, while all `alternative` children of a parent form
//! one exactly-one group and all `or` children form one at-least-one group.
//! Every collection is ordered by id so results are reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = String;

/// Upper bound on variant nodes accepted by [`VariabilityModel::enumerate_configurations`].
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Concern,
    VariantGroup,
    Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionRule {
    Mandatory,
    Optional,
    Alternative,
    Or,
}

/// Runtime parameter a concern's energy depends on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterDecl {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcernNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub rule: SelectionRule,
    #[serde(default)]
    pub children: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<ParameterDecl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Implies,
    Excludes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub antecedent: NodeId,
    pub consequents: Vec<NodeId>,
}

/// Serialized form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub nodes: Vec<ConcernNode>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model document does not parse: {0}")]
    Parse(String),
    #[error("model has no nodes")]
    Empty,
    #[error("duplicate node id `{0}`")]
    DuplicateId(NodeId),
    #[error("`{from}` references unknown node `{to}`")]
    DanglingReference { from: NodeId, to: NodeId },
    #[error("node `{0}` is listed as a child of more than one parent")]
    MultipleParents(NodeId),
    #[error("node `{0}` lies on a cyclic parent chain")]
    Cycle(NodeId),
    #[error("model has more than one root: {0:?}")]
    MultipleRoots(Vec<NodeId>),
    #[error("variant `{0}` has children")]
    VariantWithChildren(NodeId),
    #[error("alternative group under `{0}` has fewer than 2 children")]
    AlternativeTooSmall(NodeId),
    #[error("constraint on `{0}` lists its antecedent among its consequents")]
    SelfConstraint(NodeId),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("model has {count} variants, enumeration is limited to {limit}")]
    TooManyVariants { count: usize, limit: usize },
}

/// A single broken configuration rule, naming the nodes involved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Violation {
    RootMissing { root: NodeId },
    ParentMissing { node: NodeId, parent: NodeId },
    MandatoryMissing { parent: NodeId, child: NodeId },
    /// An alternative group with other than exactly one selected child.
    Alternative { group: NodeId, selected: Vec<NodeId> },
    OrEmpty { group: NodeId },
    Implies { antecedent: NodeId, missing: Vec<NodeId> },
    Excludes { antecedent: NodeId, conflicting: NodeId },
    /// A node removed by a change was re-selected by propagation.
    DeactivationOverridden { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RootMissing { root } => write!(f, "root `{root}` is not selected"),
            Violation::ParentMissing { node, parent } => {
                write!(f, "`{node}` is selected but its parent `{parent}` is not")
            }
            Violation::MandatoryMissing { parent, child } => {
                write!(f, "`{parent}` requires mandatory child `{child}`")
            }
            Violation::Alternative { group, selected } => write!(
                f,
                "alternative group `{group}` needs exactly one selected child, found {selected:?}"
            ),
            Violation::OrEmpty { group } => write!(f, "or group `{group}` needs at least one selected child"),
            Violation::Implies { antecedent, missing } => {
                write!(f, "`{antecedent}` implies {missing:?}, which are not selected")
            }
            Violation::Excludes { antecedent, conflicting } => {
                write!(f, "`{antecedent}` excludes `{conflicting}`, both are selected")
            }
            Violation::DeactivationOverridden { node } => {
                write!(f, "`{node}` was deactivated but is required by the remaining selection")
            }
        }
    }
}

/// Result of [`VariabilityModel::validate_configuration`]; empty iff valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub conflicts: Vec<Violation>,
}

impl fmt::Display for ConflictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.conflicts.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// A group whose selection was left open by propagation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenChoice {
    pub group: NodeId,
    pub rule: SelectionRule,
    pub candidates: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("selection conflicts: {0}")]
    Conflict(ConflictReport),
    #[error("selection leaves open choices in {}", .0.iter().map(|c| c.group.as_str()).collect::<Vec<_>>().join(", "))]
    Incomplete(Vec<OpenChoice>),
}

/// A selection of model nodes together with the variant bound for every
/// alternative group that has exactly one selected child.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    selected: BTreeSet<NodeId>,
    #[serde(default)]
    bindings: BTreeMap<NodeId, NodeId>,
}

impl Configuration {
    pub fn new<I, S>(model: &VariabilityModel, selected: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        let selected: BTreeSet<NodeId> = selected.into_iter().map(Into::into).collect();
        let bindings = model.bindings_for(&selected);
        Self { selected, bindings }
    }

    /// Selecting a node selects the path from the root down to it.
    pub fn from_selection<I, S>(model: &VariabilityModel, ids: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        let mut selected = BTreeSet::new();
        selected.insert(model.root().to_string());
        for id in ids {
            let id = id.into();
            model.require(&id)?;
            let mut cur = Some(id);
            while let Some(n) = cur {
                cur = model.parent(&n).map(str::to_string);
                selected.insert(n);
            }
        }
        Ok(Self::new(model, selected))
    }

    /// Recomputes bindings after deserialization.
    pub fn rebind(self, model: &VariabilityModel) -> Self {
        Self::new(model, self.selected)
    }

    pub fn selected(&self) -> &BTreeSet<NodeId> {
        &self.selected
    }

    pub fn bindings(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.bindings
    }

    pub fn is_selected(&self, id: &str) -> bool {
        self.selected.contains(id)
    }

    pub fn binding(&self, group: &str) -> Option<&str> {
        self.bindings.get(group).map(String::as_str)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<&str> = self.selected.iter().map(String::as_str).collect();
        write!(f, "{{{}}}", ids.join(", "))
    }
}

/// Closure of a partial selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Propagation {
    pub configuration: Configuration,
    pub open_choices: Vec<OpenChoice>,
}

/// A change to a configuration, as issued by the reconfiguration runtime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReconfigurationAction {
    /// Select `target`, dropping any alternative sibling it replaces.
    BindVariant { target: NodeId },
    ActivateConcern { targets: Vec<NodeId> },
    /// Drop the targets and their subtrees.
    DeactivateConcern { targets: Vec<NodeId> },
    /// Applied as one step: either every part succeeds or nothing changes.
    Composite { actions: Vec<ReconfigurationAction> },
}

impl ReconfigurationAction {
    pub fn bind(target: impl Into<NodeId>) -> Self {
        Self::BindVariant { target: target.into() }
    }

    /// All node ids the action names, in order.
    pub fn targets(&self) -> Vec<&str> {
        match self {
            Self::BindVariant { target } => vec![target.as_str()],
            Self::ActivateConcern { targets } | Self::DeactivateConcern { targets } => {
                targets.iter().map(String::as_str).collect()
            }
            Self::Composite { actions } => actions.iter().flat_map(|a| a.targets()).collect(),
        }
    }
}

impl fmt::Display for ReconfigurationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BindVariant { target } => write!(f, "bind {target}"),
            Self::ActivateConcern { targets } => write!(f, "activate {}", targets.join("+")),
            Self::DeactivateConcern { targets } => write!(f, "deactivate {}", targets.join("+")),
            Self::Composite { actions } => {
                let parts: Vec<String> = actions.iter().map(|a| a.to_string()).collect();
                write!(f, "[{}]", parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelSummary {
    pub concerns: usize,
    pub variants: usize,
    pub constraints: usize,
}

/// Validated concern tree with cross-tree constraints. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityModel {
    nodes: BTreeMap<NodeId, ConcernNode>,
    document_order: Vec<NodeId>,
    parents: BTreeMap<NodeId, NodeId>,
    root: NodeId,
    constraints: Vec<Constraint>,
    alternative_groups: BTreeMap<NodeId, Vec<NodeId>>,
    or_groups: BTreeMap<NodeId, Vec<NodeId>>,
}

impl VariabilityModel {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, ModelError> {
        if doc.nodes.is_empty() {
            return Err(ModelError::Empty);
        }
        let mut nodes = BTreeMap::new();
        let mut document_order = Vec::with_capacity(doc.nodes.len());
        for node in doc.nodes {
            if nodes.contains_key(&node.id) {
                return Err(ModelError::DuplicateId(node.id));
            }
            document_order.push(node.id.clone());
            nodes.insert(node.id.clone(), node);
        }

        let mut parents: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for id in &document_order {
            let node = &nodes[id];
            if node.kind == NodeKind::Variant && !node.children.is_empty() {
                return Err(ModelError::VariantWithChildren(id.clone()));
            }
            for child in &node.children {
                if !nodes.contains_key(child) {
                    return Err(ModelError::DanglingReference {
                        from: id.clone(),
                        to: child.clone(),
                    });
                }
                if parents.insert(child.clone(), id.clone()).is_some() {
                    return Err(ModelError::MultipleParents(child.clone()));
                }
            }
        }

        let roots: Vec<NodeId> = nodes.keys().filter(|id| !parents.contains_key(*id)).cloned().collect();
        let root = match roots.as_slice() {
            [] => return Err(ModelError::Cycle(nodes.keys().next().cloned().unwrap_or_default())),
            [root] => root.clone(),
            _ => {
                // Extra parentless nodes may just be detached; anything not
                // reachable from any root sits on a cycle and is reported first.
                if let Some(id) = unreachable_from(&nodes, &roots).into_iter().next() {
                    return Err(ModelError::Cycle(id));
                }
                return Err(ModelError::MultipleRoots(roots));
            }
        };
        if let Some(id) = unreachable_from(&nodes, std::slice::from_ref(&root)).into_iter().next() {
            return Err(ModelError::Cycle(id));
        }

        let mut alternative_groups = BTreeMap::new();
        let mut or_groups = BTreeMap::new();
        for (id, node) in &nodes {
            let members = |rule| {
                node.children
                    .iter()
                    .filter(|c| nodes[*c].rule == rule)
                    .cloned()
                    .collect::<Vec<_>>()
            };
            let alt = members(SelectionRule::Alternative);
            if !alt.is_empty() {
                if alt.len() < 2 {
                    return Err(ModelError::AlternativeTooSmall(id.clone()));
                }
                alternative_groups.insert(id.clone(), alt);
            }
            let or = members(SelectionRule::Or);
            if !or.is_empty() {
                or_groups.insert(id.clone(), or);
            }
        }

        for c in &doc.constraints {
            for id in std::iter::once(&c.antecedent).chain(&c.consequents) {
                if !nodes.contains_key(id) {
                    return Err(ModelError::DanglingReference {
                        from: c.antecedent.clone(),
                        to: id.clone(),
                    });
                }
            }
            if c.consequents.contains(&c.antecedent) {
                return Err(ModelError::SelfConstraint(c.antecedent.clone()));
            }
        }

        Ok(Self {
            nodes,
            document_order,
            parents,
            root,
            constraints: doc.constraints,
            alternative_groups,
            or_groups,
        })
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            nodes: self.document_order.iter().map(|id| self.nodes[id].clone()).collect(),
            constraints: self.constraints.clone(),
        }
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn node(&self, id: &str) -> Option<&ConcernNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn parent(&self, id: &str) -> Option<&str> {
        self.parents.get(id).map(String::as_str)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    /// Variant node ids in sorted order.
    pub fn variants(&self) -> Vec<&str> {
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Variant)
            .map(|n| n.id.as_str())
            .collect()
    }

    pub fn summary(&self) -> ModelSummary {
        let concerns = self
            .nodes
            .values()
            .filter(|n| n.kind != NodeKind::Variant && n.id != self.root)
            .count();
        ModelSummary {
            concerns,
            variants: self.nodes.values().filter(|n| n.kind == NodeKind::Variant).count(),
            constraints: self.constraints.len(),
        }
    }

    /// Alternative children of `id`, if it owns such a group.
    pub fn alternative_group(&self, id: &str) -> Option<&[NodeId]> {
        self.alternative_groups.get(id).map(Vec::as_slice)
    }

    fn require(&self, id: &str) -> Result<(), ModelError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(ModelError::UnknownNode(id.to_string()))
        }
    }

    fn bindings_for(&self, selected: &BTreeSet<NodeId>) -> BTreeMap<NodeId, NodeId> {
        let mut bindings = BTreeMap::new();
        for (group, members) in &self.alternative_groups {
            if !selected.contains(group) {
                continue;
            }
            let mut chosen = members.iter().filter(|m| selected.contains(*m));
            if let (Some(one), None) = (chosen.next(), chosen.next()) {
                bindings.insert(group.clone(), one.clone());
            }
        }
        bindings
    }

    fn subtree(&self, id: &str) -> Vec<NodeId> {
        let mut out = vec![id.to_string()];
        let mut i = 0;
        while i < out.len() {
            if let Some(node) = self.nodes.get(&out[i]) {
                out.extend(node.children.iter().cloned());
            }
            i += 1;
        }
        out
    }

    /// Checks every configuration rule. Unknown ids are an error, distinct
    /// from rule violations.
    pub fn validate_configuration(&self, config: &Configuration) -> Result<ValidationReport, ModelError> {
        for id in config.selected() {
            self.require(id)?;
        }
        let selected = config.selected();
        let mut violations = Vec::new();

        if !selected.contains(&self.root) {
            violations.push(Violation::RootMissing { root: self.root.clone() });
        }
        for id in selected {
            if let Some(parent) = self.parents.get(id) {
                if !selected.contains(parent) {
                    violations.push(Violation::ParentMissing {
                        node: id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
            let node = &self.nodes[id];
            for child in &node.children {
                if self.nodes[child].rule == SelectionRule::Mandatory && !selected.contains(child) {
                    violations.push(Violation::MandatoryMissing {
                        parent: id.clone(),
                        child: child.clone(),
                    });
                }
            }
            if let Some(members) = self.alternative_groups.get(id) {
                let chosen: Vec<NodeId> = members.iter().filter(|m| selected.contains(*m)).cloned().collect();
                if chosen.len() != 1 {
                    violations.push(Violation::Alternative {
                        group: id.clone(),
                        selected: chosen,
                    });
                }
            }
            if let Some(members) = self.or_groups.get(id) {
                if !members.iter().any(|m| selected.contains(m)) {
                    violations.push(Violation::OrEmpty { group: id.clone() });
                }
            }
        }
        violations.extend(self.constraint_violations(selected));
        violations.sort();
        Ok(ValidationReport { violations })
    }

    fn constraint_violations(&self, selected: &BTreeSet<NodeId>) -> Vec<Violation> {
        let mut out = Vec::new();
        for c in &self.constraints {
            if !selected.contains(&c.antecedent) {
                continue;
            }
            match c.kind {
                ConstraintKind::Implies => {
                    let missing: Vec<NodeId> =
                        c.consequents.iter().filter(|n| !selected.contains(*n)).cloned().collect();
                    if !missing.is_empty() {
                        out.push(Violation::Implies {
                            antecedent: c.antecedent.clone(),
                            missing,
                        });
                    }
                }
                ConstraintKind::Excludes => {
                    for n in c.consequents.iter().filter(|n| selected.contains(*n)) {
                        out.push(Violation::Excludes {
                            antecedent: c.antecedent.clone(),
                            conflicting: n.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    /// Least superset of `partial` closed under parent inclusion, mandatory
    /// children and `implies` consequents. Groups left without a choice are
    /// reported as open choices; an `excludes` hit or a doubly-bound
    /// alternative group is a conflict.
    pub fn propagate_selection<I, S>(&self, partial: I) -> Result<Propagation, ConfigError>
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        let mut selected = BTreeSet::new();
        for id in partial {
            let id = id.into();
            self.require(&id)?;
            selected.insert(id);
        }
        selected.insert(self.root.clone());
        let selected = self.close(selected);

        let mut conflicts: Vec<Violation> = self
            .constraint_violations(&selected)
            .into_iter()
            .filter(|v| matches!(v, Violation::Excludes { .. }))
            .collect();
        let mut open_choices = Vec::new();
        for (group, members) in &self.alternative_groups {
            if !selected.contains(group) {
                continue;
            }
            let chosen: Vec<NodeId> = members.iter().filter(|m| selected.contains(*m)).cloned().collect();
            match chosen.len() {
                0 => open_choices.push(OpenChoice {
                    group: group.clone(),
                    rule: SelectionRule::Alternative,
                    candidates: members.clone(),
                }),
                1 => {}
                _ => conflicts.push(Violation::Alternative {
                    group: group.clone(),
                    selected: chosen,
                }),
            }
        }
        for (group, members) in &self.or_groups {
            if selected.contains(group) && !members.iter().any(|m| selected.contains(m)) {
                open_choices.push(OpenChoice {
                    group: group.clone(),
                    rule: SelectionRule::Or,
                    candidates: members.clone(),
                });
            }
        }
        if !conflicts.is_empty() {
            conflicts.sort();
            return Err(ConfigError::Conflict(ConflictReport { conflicts }));
        }
        Ok(Propagation {
            configuration: Configuration::new(self, selected),
            open_choices,
        })
    }

    fn close(&self, mut selected: BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let mut queue: Vec<NodeId> = selected.iter().cloned().collect();
        while let Some(id) = queue.pop() {
            let mut add = |n: &NodeId, queue: &mut Vec<NodeId>| {
                if selected.insert(n.clone()) {
                    queue.push(n.clone());
                }
            };
            if let Some(parent) = self.parents.get(&id) {
                add(parent, &mut queue);
            }
            for child in &self.nodes[&id].children {
                if self.nodes[child].rule == SelectionRule::Mandatory {
                    add(child, &mut queue);
                }
            }
            for c in &self.constraints {
                if c.kind == ConstraintKind::Implies && c.antecedent == id {
                    for n in &c.consequents {
                        add(n, &mut queue);
                    }
                }
            }
        }
        selected
    }

    /// Every valid complete configuration that is the closure of some set of
    /// variants, ordered by their sorted id lists.
    pub fn enumerate_configurations(&self) -> Result<Vec<Configuration>, ModelError> {
        let variants = self.variants();
        if variants.len() > ENUMERATION_LIMIT {
            return Err(ModelError::TooManyVariants {
                count: variants.len(),
                limit: ENUMERATION_LIMIT,
            });
        }
        let mut found = BTreeSet::new();
        let mut chosen = Vec::new();
        self.search(&variants, 0, &mut chosen, &mut found);
        Ok(found.into_iter().map(|sel| Configuration::new(self, sel)).collect())
    }

    // Include/exclude search over variants. A conflicting partial selection
    // is pruned: closure is monotone, so every superset conflicts as well.
    fn search(&self, variants: &[&str], next: usize, chosen: &mut Vec<NodeId>, found: &mut BTreeSet<BTreeSet<NodeId>>) {
        if next == variants.len() {
            if let Ok(p) = self.propagate_selection(chosen.iter().cloned()) {
                if p.open_choices.is_empty() {
                    let report = self.validate_configuration(&p.configuration).expect("closure only holds model ids");
                    if report.is_valid() {
                        found.insert(p.configuration.selected().clone());
                    }
                }
            }
            return;
        }
        self.search(variants, next + 1, chosen, found);
        chosen.push(variants[next].to_string());
        if self.propagate_selection(chosen.iter().cloned()).is_ok() {
            self.search(variants, next + 1, chosen, found);
        }
        chosen.pop();
    }

    /// Applies `action` and re-closes the result. The input is left untouched;
    /// on any conflict the error carries the report and nothing changes.
    pub fn apply_change(&self, config: &Configuration, action: &ReconfigurationAction) -> Result<Configuration, ConfigError> {
        let mut selected = config.selected().clone();
        let mut removed = BTreeSet::new();
        self.apply_into(&mut selected, &mut removed, action)?;

        let propagated = self.propagate_selection(selected)?;
        let result = propagated.configuration;
        let overridden: Vec<Violation> = removed
            .iter()
            .filter(|n| result.is_selected(n))
            .map(|n| Violation::DeactivationOverridden { node: n.clone() })
            .collect();
        if !overridden.is_empty() {
            return Err(ConfigError::Conflict(ConflictReport { conflicts: overridden }));
        }
        if !propagated.open_choices.is_empty() {
            return Err(ConfigError::Incomplete(propagated.open_choices));
        }
        let report = self.validate_configuration(&result)?;
        if !report.is_valid() {
            return Err(ConfigError::Conflict(ConflictReport {
                conflicts: report.violations,
            }));
        }
        Ok(result)
    }

    fn apply_into(
        &self,
        selected: &mut BTreeSet<NodeId>,
        removed: &mut BTreeSet<NodeId>,
        action: &ReconfigurationAction,
    ) -> Result<(), ModelError> {
        match action {
            ReconfigurationAction::BindVariant { target } => {
                self.require(target)?;
                if let Some(parent) = self.parent(target) {
                    if let Some(members) = self.alternative_groups.get(parent) {
                        if members.contains(target) {
                            for sibling in members.iter().filter(|m| *m != target) {
                                for n in self.subtree(sibling) {
                                    selected.remove(&n);
                                }
                            }
                        }
                    }
                }
                selected.insert(target.clone());
            }
            ReconfigurationAction::ActivateConcern { targets } => {
                for t in targets {
                    self.require(t)?;
                    selected.insert(t.clone());
                    removed.remove(t);
                }
            }
            ReconfigurationAction::DeactivateConcern { targets } => {
                for t in targets {
                    self.require(t)?;
                    for n in self.subtree(t) {
                        selected.remove(&n);
                    }
                    removed.insert(t.clone());
                }
            }
            ReconfigurationAction::Composite { actions } => {
                for a in actions {
                    self.apply_into(selected, removed, a)?;
                }
            }
        }
        Ok(())
    }
}

fn unreachable_from(nodes: &BTreeMap<NodeId, ConcernNode>, roots: &[NodeId]) -> Vec<NodeId> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack: Vec<&str> = roots.iter().map(String::as_str).collect();
    while let Some(id) = stack.pop() {
        if seen.insert(id) {
            stack.extend(nodes[id].children.iter().map(String::as_str));
        }
    }
    nodes.keys().filter(|id| !seen.contains(id.as_str())).cloned().collect()
}
