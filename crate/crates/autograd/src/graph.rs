use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Maps the upstream gradient to one gradient per parent (in parent order).
/// `None` means "no contribution".
pub type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Arc<Tensor>,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Whether batch normalization uses batch statistics (and records running
/// statistic updates) or the stored running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A reverse-mode tape. Nodes are appended in evaluation order, so the node
/// index order is a valid topological order for the backward sweep.
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    mode: Mode,
    grad_enabled: bool,
    buffer_updates: Vec<(String, Tensor)>,
}

impl Graph {
    pub fn new(mode: Mode) -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
            mode,
            grad_enabled: true,
            buffer_updates: Vec::new(),
        }
    }

    /// Graph that never records backward closures. Parameters enter as
    /// constants.
    pub fn inference() -> Self {
        Graph {
            grad_enabled: false,
            ..Graph::new(Mode::Eval)
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Arc<Tensor>, parents: Vec<Var>, backward: Option<BackwardFn>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input: never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Arc::new(value), Vec::new(), None, false)
    }

    pub fn constant_arc(&mut self, value: Arc<Tensor>) -> Var {
        self.push(value, Vec::new(), None, false)
    }

    /// Leaf that receives a gradient (used for inputs under gradient checks).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let rg = self.grad_enabled;
        self.push(Arc::new(value), Vec::new(), None, rg)
    }

    /// Leaf bound to a named parameter of `store`. Repeated lookups of the
    /// same name return the same node, so a parameter used by several
    /// branches accumulates one gradient.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let value = store
            .value_arc(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        let rg = self.grad_enabled;
        let v = self.push(value, Vec::new(), None, rg);
        self.params.insert(name.to_string(), v);
        v
    }

    /// Same value, cut from the tape: gradients never flow through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Vec::new(), None, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn value_arc(&self, v: Var) -> Arc<Tensor> {
        self.nodes[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an operation. `backward` is dropped when no parent needs a
    /// gradient.
    pub fn custom(
        &mut self,
        parents: &[Var],
        value: Tensor,
        backward: impl Fn(&Tensor) -> Vec<Option<Tensor>> + 'static,
    ) -> Var {
        let rg = self.grad_enabled && parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let bw: Option<BackwardFn> = if rg { Some(Box::new(backward)) } else { None };
        self.push(Arc::new(value), parents.to_vec(), bw, rg)
    }

    /// Latest not-yet-applied update of a buffer recorded on this graph.
    pub(crate) fn pending_buffer(&self, name: &str) -> Option<&Tensor> {
        self.buffer_updates.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub(crate) fn record_buffer_update(&mut self, name: String, value: Tensor) {
        self.buffer_updates.push((name, value));
    }

    /// Running-statistic updates produced by train-mode normalization, in
    /// the order they were computed.
    pub fn take_buffer_updates(&mut self) -> Vec<(String, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    /// Parameters bound on this graph, by name.
    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            self.value(loss).numel(),
            1,
            "backward() needs a scalar, got shape {:?}",
            self.shape(loss)
        );
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape(), vec![1.0]));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(bw) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let parent_grads = bw(&g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[p.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), self.nodes[p.0].value.shape());
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        // only leaves (no backward fn) still hold a gradient here
        let params = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect::<BTreeMap<_, _>>();
        Gradients { grads, params }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: BTreeMap<String, Var>,
}

impl Gradients {
    /// Gradient of a leaf, `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|v| self.get(*v))
    }

    /// `(name, gradient)` for every parameter bound on the graph that
    /// received a gradient, ordered by name.
    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params
            .iter()
            .filter_map(|(k, v)| self.get(*v).map(|g| (k.as_str(), g)))
    }
}
