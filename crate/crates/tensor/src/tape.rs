//! Reverse-mode differentiation by operation recording.
//!
//! A [`Tape`] is an ordered list of primitive applications. Each entry
//! keeps the indices of its tracked inputs and a one-shot adjoint closure
//! holding whatever intermediates its rule needs. [`Tape::backward`]
//! replays the adjoints in reverse, dropping each entry's saved state as
//! soon as it has run.

use std::cell::RefCell;
use std::rc::Rc;

use crate::{instrument, Element, Error, Result, Tensor};

/// Maps the gradient of an output to gradients of each input (`None` for
/// inputs that need none).
pub type Adjoint<T> = Box<dyn FnOnce(&Tensor<T>) -> Result<Vec<Option<Tensor<T>>>>>;

struct Entry<T: Element> {
    op: &'static str,
    inputs: Vec<Option<usize>>,
    adjoint: Option<Adjoint<T>>,
    is_leaf: bool,
}

struct TapeState<T: Element> {
    entries: Vec<Entry<T>>,
    consumed: bool,
}

#[derive(Clone)]
pub struct Tape<T: Element>(Rc<RefCell<TapeState<T>>>);

#[derive(Clone)]
struct Node<T: Element> {
    tape: Tape<T>,
    id: usize,
}

/// A tensor value, optionally tracked on a tape.
#[derive(Clone)]
pub struct Var<T: Element> {
    value: Tensor<T>,
    node: Option<Node<T>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape(Rc::new(RefCell::new(TapeState {
            entries: Vec::new(),
            consumed: false,
        })))
    }

    /// Registers a gradient-tracked leaf.
    pub fn leaf(&self, value: Tensor<T>) -> Var<T> {
        let mut st = self.0.borrow_mut();
        let id = st.entries.len();
        st.entries.push(Entry {
            op: "leaf",
            inputs: Vec::new(),
            adjoint: None,
            is_leaf: true,
        });
        Var {
            value,
            node: Some(Node {
                tape: self.clone(),
                id,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.0.borrow().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_consumed(&self) -> bool {
        self.0.borrow().consumed
    }

    /// Names of the recorded primitives, in order.
    pub fn ops(&self) -> Vec<&'static str> {
        self.0.borrow().entries.iter().map(|e| e.op).collect()
    }

    fn same(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Gradients of the scalar `loss` with respect to every leaf.
    pub fn backward(&self, loss: &Var<T>) -> Result<Gradients<T>> {
        if loss.value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss.value.shape().to_vec()));
        }
        let Some(node) = &loss.node else {
            // Nothing tracked contributes to the loss.
            self.mark_consumed()?;
            return Ok(Gradients { grads: Vec::new() });
        };
        if !node.tape.same(self) {
            return Err(Error::TapeMismatch { op: "backward" });
        }
        let mut entries = {
            let mut st = self.0.borrow_mut();
            if st.consumed {
                return Err(Error::TapeConsumed);
            }
            st.consumed = true;
            std::mem::take(&mut st.entries)
        };
        entries.truncate(node.id + 1);

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; entries.len()];
        let mut leaves: Vec<Option<Tensor<T>>> = vec![None; entries.len()];
        grads[node.id] = Some(Tensor::full(loss.value.shape().to_vec(), T::one())?);

        for id in (0..entries.len()).rev() {
            let Some(g) = grads[id].take() else {
                entries.pop();
                continue;
            };
            let entry = entries.pop().expect("entry per id");
            if entry.is_leaf {
                leaves[id] = Some(g);
                continue;
            }
            let Some(adjoint) = entry.adjoint else {
                continue;
            };
            let input_grads = adjoint(&g)?;
            drop(g);
            for (slot, ig) in entry.inputs.iter().zip(input_grads) {
                if let (Some(src), Some(ig)) = (slot, ig) {
                    grads[*src] = Some(match grads[*src].take() {
                        None => ig,
                        Some(acc) => acc.zip_map(&ig, |a, b| a + b)?,
                    });
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }

    fn mark_consumed(&self) -> Result<()> {
        let mut st = self.0.borrow_mut();
        if st.consumed {
            return Err(Error::TapeConsumed);
        }
        st.consumed = true;
        st.entries.clear();
        Ok(())
    }
}

/// Leaf gradients produced by one backward pass.
pub struct Gradients<T: Element> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient for `leaf`; zeros if the loss does not depend on it.
    pub fn wrt(&self, leaf: &Var<T>) -> Result<Tensor<T>> {
        match leaf.node.as_ref().and_then(|n| self.grads.get(n.id)).and_then(|g| g.clone()) {
            Some(g) => Ok(g),
            None => Tensor::zeros(leaf.shape().to_vec()),
        }
    }

    pub fn get(&self, leaf: &Var<T>) -> Option<&Tensor<T>> {
        leaf.node.as_ref().and_then(|n| self.grads.get(n.id)).and_then(|g| g.as_ref())
    }
}

impl<T: Element> Var<T> {
    /// Untracked value.
    pub fn constant(value: Tensor<T>) -> Self {
        Var { value, node: None }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn into_value(self) -> Tensor<T> {
        self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn rank(&self) -> usize {
        self.value.rank()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub fn tape(&self) -> Option<&Tape<T>> {
        self.node.as_ref().map(|n| &n.tape)
    }

    /// Same value, no longer tracked.
    pub fn detach(&self) -> Self {
        Var::constant(self.value.clone())
    }
}

impl<T: Element> From<Tensor<T>> for Var<T> {
    fn from(t: Tensor<T>) -> Self {
        Var::constant(t)
    }
}

/// Records a primitive application.
///
/// The result is tracked when any input is. `adjoint` receives the gradient
/// of the output and returns one entry per input, in order.
pub fn record<T: Element>(
    op: &'static str,
    inputs: &[&Var<T>],
    value: Tensor<T>,
    adjoint: impl FnOnce(&Tensor<T>) -> Result<Vec<Option<Tensor<T>>>> + 'static,
) -> Result<Var<T>> {
    if instrument::finite_checks() && !value.is_finite() {
        return Err(Error::NonFinite { op });
    }
    let mut tape: Option<&Tape<T>> = None;
    for v in inputs {
        if let Some(n) = &v.node {
            match tape {
                None => tape = Some(&n.tape),
                Some(t) if t.same(&n.tape) => {}
                Some(_) => return Err(Error::TapeMismatch { op }),
            }
        }
    }
    let Some(tape) = tape else {
        return Ok(Var::constant(value));
    };
    let mut st = tape.0.borrow_mut();
    if st.consumed {
        return Err(Error::TapeConsumed);
    }
    let id = st.entries.len();
    st.entries.push(Entry {
        op,
        inputs: inputs.iter().map(|v| v.node.as_ref().map(|n| n.id)).collect(),
        adjoint: Some(Box::new(adjoint)),
        is_leaf: false,
    });
    drop(st);
    Ok(Var {
        value,
        node: Some(Node {
            tape: tape.clone(),
            id,
        }),
    })
}

impl<T: Element> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let id = self.node.as_ref().map(|n| n.id);
        f.debug_struct("Var").field("value", &self.value).field("node", &id).finish()
    }
}
