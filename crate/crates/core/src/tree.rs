//! Nesting trees: the JSON model description, the immutable [`CopulaTree`]
//! built from it, the map from free parameters to node parameters, and the
//! bottom-up forward pass `t_v = Σ_c ψ_v⁻¹(C_c)`, `C_v = ψ_v(t_v)`.

use crate::error::{Error, Result};
use crate::generators::{nelsen9_theta_max, Family, Generator, Ordering};
use crate::num::{softplus, softplus_inv, Lift, Real};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Inputs are clamped into `[U_MIN, 1 − U_MIN]` before evaluation.
pub const U_MIN: f64 = 1e-12;

pub fn clamp_u(u: f64) -> f64 {
    u.clamp(U_MIN, 1.0 - U_MIN)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    SoftplusDelta,
    ShiftedSoftplus,
}

/// How a node's θ is produced from its free parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    /// θ = p.
    Identity,
    /// θ = θ_parent + softplus(p); always above the parent.
    SoftplusDelta,
    /// θ = base + softplus(p).
    ShiftedSoftplus { base: f64 },
}

impl Transform {
    pub fn kind(&self) -> TransformKind {
        match self {
            Transform::Identity => TransformKind::Identity,
            Transform::SoftplusDelta => TransformKind::SoftplusDelta,
            Transform::ShiftedSoftplus { .. } => TransformKind::ShiftedSoftplus,
        }
    }

    pub fn apply<T: Real>(&self, p: &T, parent: Option<&T>) -> T {
        match self {
            Transform::Identity => p.clone(),
            Transform::SoftplusDelta => {
                parent.expect("softplus_delta needs a parent").clone() + softplus(p)
            }
            Transform::ShiftedSoftplus { base } => T::from_f64(*base) + softplus(p),
        }
    }
}

/// `"theta"` field: a plain number or a transform object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Value(f64),
    Transform {
        transform: TransformKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base: Option<f64>,
    },
}

/// One JSON object of the model description: either `{"leaf": j}` or an
/// internal node with family, theta and children.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaSpec>,
    /// Nodes sharing a name share one free parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<NodeSpec>>,
}

pub type ModelSpec = NodeSpec;

impl NodeSpec {
    pub fn leaf(j: usize) -> Self {
        NodeSpec { leaf: Some(j), ..Default::default() }
    }

    pub fn node(family: Family, theta: ThetaSpec, children: Vec<NodeSpec>) -> Self {
        NodeSpec { family: Some(family), theta: Some(theta), children: Some(children), ..Default::default() }
    }

    pub fn with_param(mut self, name: &str) -> Self {
        self.param = Some(name.to_string());
        self
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    /// Flat copula over `d` leaves.
    pub fn flat(family: Family, theta: f64, d: usize) -> Self {
        NodeSpec::node(family, ThetaSpec::Value(theta), (0..d).map(NodeSpec::leaf).collect())
    }

    /// Two-level tree: an outer node over sectors of the given sizes, each
    /// sector's θ written as outer + softplus(δ) with one shared δ.
    pub fn two_level(family: Family, outer: f64, inner: f64, sectors: &[usize]) -> Self {
        assert!(inner > outer, "delta parameterisation needs inner > outer");
        let delta = softplus_inv(inner - outer);
        let mut j = 0;
        let children = sectors
            .iter()
            .map(|&k| {
                let leaves = (j..j + k).map(NodeSpec::leaf).collect();
                j += k;
                NodeSpec::node(family, ThetaSpec::delta(delta), leaves).with_param("inner")
            })
            .collect();
        NodeSpec::node(family, ThetaSpec::Value(outer), children).with_param("outer")
    }

    /// Two-level tree with independent identity parameters per node.
    pub fn two_level_values(family: Family, outer: f64, inner: &[f64], sectors: &[usize]) -> Self {
        let mut j = 0;
        let children = sectors
            .iter()
            .zip(inner)
            .map(|(&k, &th)| {
                let leaves = (j..j + k).map(NodeSpec::leaf).collect();
                j += k;
                NodeSpec::node(family, ThetaSpec::Value(th), leaves)
            })
            .collect();
        NodeSpec::node(family, ThetaSpec::Value(outer), children)
    }
}

impl ThetaSpec {
    pub fn delta(delta: f64) -> Self {
        ThetaSpec::Transform { transform: TransformKind::SoftplusDelta, value: None, delta: Some(delta), base: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Child {
    Leaf(usize),
    Node(usize),
}

#[derive(Clone, Debug)]
pub struct Node {
    pub family: Family,
    pub transform: Transform,
    pub slot: usize,
    pub children: Vec<Child>,
    pub parent: Option<usize>,
    /// Number of leaves in the subtree.
    pub leaves: usize,
}

/// Immutable nesting tree. Nodes are stored in pre-order, so every parent
/// precedes its children and the root is node 0.
#[derive(Clone, Debug)]
pub struct CopulaTree {
    nodes: Vec<Node>,
    d: usize,
    leaf_parent: Vec<usize>,
    leaf_order: Vec<usize>,
    params: Vec<f64>,
    param_names: Vec<Option<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Structure,
    Domain,
    Ordering,
}

fn violation(kind: ViolationKind, message: String) -> Violation {
    Violation { kind, message }
}

/// Structural problems in a model description.
pub fn structural_violations(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    fn walk(n: &NodeSpec, path: &str, root: bool, seen: &mut BTreeMap<usize, usize>, out: &mut Vec<Violation>) {
        if let Some(j) = n.leaf {
            if n.family.is_some() || n.theta.is_some() || n.children.is_some() || n.param.is_some() {
                out.push(violation(ViolationKind::Structure, format!("{path}: leaf object with node fields")));
            }
            if root {
                out.push(violation(ViolationKind::Structure, format!("{path}: root is a leaf")));
            }
            *seen.entry(j).or_insert(0) += 1;
            return;
        }
        if n.family.is_none() {
            out.push(violation(ViolationKind::Structure, format!("{path}: node without family")));
        }
        if n.theta.is_none() {
            out.push(violation(ViolationKind::Structure, format!("{path}: node without theta")));
        }
        if let Some(ThetaSpec::Transform { transform: TransformKind::SoftplusDelta, .. }) = n.theta {
            if root {
                out.push(violation(ViolationKind::Structure, format!("{path}: softplus_delta on the root")));
            }
        }
        let children = n.children.as_deref().unwrap_or(&[]);
        if children.is_empty() {
            out.push(violation(ViolationKind::Structure, format!("{path}: node without children")));
        }
        let internal = children.iter().filter(|c| c.leaf.is_none()).count();
        if root && children.len() < 2 && internal > 0 {
            out.push(violation(ViolationKind::Structure, format!("{path}: root with a single subtree")));
        }
        for (i, c) in children.iter().enumerate() {
            walk(c, &format!("{path}.children[{i}]"), false, seen, out);
        }
    }
    walk(spec, "root", true, &mut seen, &mut out);
    for (j, count) in &seen {
        if *count > 1 {
            out.push(violation(ViolationKind::Structure, format!("leaf {j} appears {count} times")));
        }
    }
    let d = seen.len();
    for j in 0..d {
        if !seen.contains_key(&j) {
            out.push(violation(ViolationKind::Structure, format!("leaf indices skip {j}")));
        }
    }
    out
}

impl CopulaTree {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let v = structural_violations(spec);
        if !v.is_empty() {
            let msgs: Vec<String> = v.into_iter().map(|x| x.message).collect();
            return Err(Error::Model(msgs.join("; ")));
        }
        let mut tree = CopulaTree {
            nodes: Vec::new(),
            d: 0,
            leaf_parent: Vec::new(),
            leaf_order: Vec::new(),
            params: Vec::new(),
            param_names: Vec::new(),
        };
        let mut named: BTreeMap<String, usize> = BTreeMap::new();
        let mut leaf_parent: BTreeMap<usize, usize> = BTreeMap::new();
        tree.add(spec, None, &mut named, &mut leaf_parent)?;
        tree.d = leaf_parent.len();
        tree.leaf_parent = leaf_parent.into_values().collect();
        for i in (0..tree.nodes.len()).rev() {
            let n: usize = tree.nodes[i]
                .children
                .iter()
                .map(|c| match c {
                    Child::Leaf(_) => 1,
                    Child::Node(k) => tree.nodes[*k].leaves,
                })
                .sum();
            tree.nodes[i].leaves = n;
        }
        Ok(tree)
    }

    fn add(
        &mut self,
        spec: &NodeSpec,
        parent: Option<usize>,
        named: &mut BTreeMap<String, usize>,
        leaf_parent: &mut BTreeMap<usize, usize>,
    ) -> Result<usize> {
        let family = spec.family.expect("checked");
        let (transform, init) = match spec.theta.as_ref().expect("checked") {
            ThetaSpec::Value(v) => (Transform::Identity, *v),
            ThetaSpec::Transform { transform, value, delta, base } => {
                let missing = |f: &str| Error::Model(format!("{f} missing for {transform:?}"));
                match transform {
                    TransformKind::Identity => (Transform::Identity, value.ok_or_else(|| missing("value"))?),
                    TransformKind::SoftplusDelta => (Transform::SoftplusDelta, delta.ok_or_else(|| missing("delta"))?),
                    TransformKind::ShiftedSoftplus => (
                        Transform::ShiftedSoftplus { base: base.ok_or_else(|| missing("base"))? },
                        delta.ok_or_else(|| missing("delta"))?,
                    ),
                }
            }
        };
        let slot = match &spec.param {
            Some(name) => *named.entry(name.clone()).or_insert_with(|| {
                self.params.push(init);
                self.param_names.push(Some(name.clone()));
                self.params.len() - 1
            }),
            None => {
                self.params.push(init);
                self.param_names.push(None);
                self.params.len() - 1
            }
        };
        let id = self.nodes.len();
        self.nodes.push(Node { family, transform, slot, children: Vec::new(), parent, leaves: 0 });
        for c in spec.children.as_deref().unwrap_or(&[]) {
            let child = match c.leaf {
                Some(j) => {
                    leaf_parent.insert(j, id);
                    self.leaf_order.push(j);
                    Child::Leaf(j)
                }
                None => Child::Node(self.add(c, Some(id), named, leaf_parent)?),
            };
            self.nodes[id].children.push(child);
        }
        Ok(id)
    }

    /// Back to a model description at the given free parameters.
    pub fn to_spec_with(&self, params: &[f64]) -> ModelSpec {
        let mut written = vec![false; self.params.len()];
        self.node_spec(0, params, &mut written)
    }

    pub fn to_spec(&self) -> ModelSpec {
        self.to_spec_with(&self.params)
    }

    fn node_spec(&self, i: usize, params: &[f64], written: &mut [bool]) -> NodeSpec {
        let n = &self.nodes[i];
        let p = params[n.slot];
        let theta = match n.transform {
            Transform::Identity => ThetaSpec::Value(p),
            Transform::SoftplusDelta => ThetaSpec::delta(p),
            Transform::ShiftedSoftplus { base } => ThetaSpec::Transform {
                transform: TransformKind::ShiftedSoftplus,
                value: None,
                delta: Some(p),
                base: Some(base),
            },
        };
        written[n.slot] = true;
        let children = n
            .children
            .iter()
            .map(|c| match c {
                Child::Leaf(j) => NodeSpec::leaf(*j),
                Child::Node(k) => self.node_spec(*k, params, written),
            })
            .collect();
        NodeSpec {
            leaf: None,
            family: Some(n.family),
            theta: Some(theta),
            param: self.param_names[n.slot].clone(),
            children: Some(children),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Parent node of leaf `j`.
    pub fn leaf_parent(&self, j: usize) -> usize {
        self.leaf_parent[j]
    }

    /// Leaves in depth-first order.
    pub fn leaf_order(&self) -> &[usize] {
        &self.leaf_order
    }

    /// Initial free parameters as written in the model description.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.param_names
            .iter()
            .enumerate()
            .map(|(i, n)| n.clone().unwrap_or_else(|| format!("p{i}")))
            .collect()
    }

    /// Copy with different free parameters.
    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.params.len());
        let mut t = self.clone();
        t.params = params.to_vec();
        t
    }

    /// Node parameters θ_v from free parameters.
    pub fn thetas<T: Real>(&self, params: &[T]) -> Vec<T> {
        let mut th: Vec<T> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let parent = n.parent.map(|p| &th[p]);
            let v = n.transform.apply(&params[n.slot], parent);
            th.push(v);
        }
        th
    }

    /// Node generators at the given free parameters, domain-checked.
    pub fn generators<T: Real>(&self, params: &[T]) -> Result<Vec<Generator<T>>> {
        let th = self.thetas(params);
        self.nodes
            .iter()
            .zip(th)
            .enumerate()
            .map(|(i, (n, t))| {
                let v = t.value();
                n.family.check_theta(v).map_err(|e| Error::eval(format!("node {i}"), e.to_string()))?;
                if n.family == Family::Nelsen9 {
                    let bound = nelsen9_theta_max(n.leaves);
                    if v > bound {
                        return Err(Error::eval(
                            format!("node {i}"),
                            format!("nelsen9 θ={v} exceeds the {}-monotone bound {bound}", n.leaves),
                        ));
                    }
                }
                Ok(Generator::with_theta(n.family, t))
            })
            .collect()
    }

    /// Domain and same-family ordering violations at the initial parameters.
    pub fn validate(&self) -> Vec<Violation> {
        self.validate_at(&self.params)
    }

    pub fn validate_at(&self, params: &[f64]) -> Vec<Violation> {
        let th = self.thetas(params);
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if let Err(e) = n.family.check_theta(th[i]) {
                out.push(violation(ViolationKind::Domain, format!("node {i}: {e}")));
            }
            if n.family == Family::Nelsen9 && th[i] > nelsen9_theta_max(n.leaves) {
                out.push(violation(
                    ViolationKind::Domain,
                    format!("node {i}: nelsen9 θ={} above the {}-monotone bound", th[i], n.leaves),
                ));
            }
            let Some(p) = n.parent else { continue };
            let pf = self.nodes[p].family;
            if pf != n.family {
                continue;
            }
            let bad = match n.family.ordering() {
                Some(Ordering::ParentBelowChild) => th[p] > th[i],
                Some(Ordering::ParentAboveChild) => th[p] < th[i],
                None => false,
            };
            if bad {
                out.push(violation(
                    ViolationKind::Ordering,
                    format!("edge {p}->{i}: {} θ_parent={} θ_child={}", n.family, th[p], th[i]),
                ));
            }
        }
        out
    }
}

/// Per-node state of the forward pass.
#[derive(Clone, Debug)]
pub struct NodeState<S> {
    /// Inverse-generator argument t_v.
    pub t: S,
    /// Inner CDF C_v = ψ_v(t_v).
    pub c: S,
    /// Uncensored leaves in the subtree.
    pub d: usize,
}

/// Bottom-up pass. Leaf terms ψ⁻¹(u) are computed in the parameter scalar
/// `T`; inner CDFs and their inverses run in `S`, so a log-form `S` never
/// underflows. `u_j = 1` contributes exactly zero.
pub fn forward_pass<T, S>(tree: &CopulaTree, gens: &[Generator<T>], u: &[f64], mask: &[bool]) -> Vec<NodeState<S>>
where
    T: Real + Lift<T>,
    S: Real + Lift<T>,
{
    let n = tree.nodes.len();
    let mut st: Vec<Option<NodeState<S>>> = vec![None; n];
    for i in (0..n).rev() {
        let g = &gens[i];
        let mut terms: Vec<S> = Vec::with_capacity(tree.nodes[i].children.len());
        let mut d = 0;
        for c in &tree.nodes[i].children {
            match c {
                Child::Leaf(j) => {
                    d += mask[*j] as usize;
                    if u[*j] < 1.0 {
                        terms.push(S::lift(&g.psi_inv_of(&T::from_f64(u[*j]))));
                    }
                }
                Child::Node(k) => {
                    let s = st[*k].as_ref().expect("children first");
                    d += s.d;
                    if s.t.value() > 0.0 {
                        terms.push(g.psi_inv_of(&s.c));
                    }
                }
            }
        }
        let t = S::sum_iter(terms);
        let c = if t.value() == 0.0 { S::one() } else { g.psi_of(&t) };
        st[i] = Some(NodeState { t, c, d });
    }
    st.into_iter().map(|s| s.expect("filled")).collect()
}
