//! Reverse-mode automatic differentiation on a per-case tape.
//!
//! Every tensor lives on exactly one [`Tape`]. Operations append a node with
//! the parent ids and a boxed vector-Jacobian closure; [`Tape::backward`]
//! walks the node list in reverse insertion order, accumulating gradients
//! with `+=` and freeing interior gradient buffers as soon as their node has
//! been processed. Leaves keep their gradients so parameter updates can read
//! them afterwards.
//!
//! The engine is deliberately f64-only: reconstruction losses sit on top of
//! arc-length integrals whose useful signal is far below f32 resolution.

mod checkpoint;
mod fd;
mod ops;
mod optim;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use fd::{fd_gradient, max_rel_error, op_suite, run_op_suite, FdCase};
pub use optim::{AdamW, AdamWConfig, ParamGroup, StepOutcome};
pub use params::{Binder, Init, ParamStore};

use crate::error::{Error, Result};
use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

static TAPE_IDS: AtomicU64 = AtomicU64::new(1);

#[derive(Clone)]
pub struct Tensor {
    id: usize,
    tape_id: u64,
    pub shape: Vec<usize>,
    pub data: Rc<[f64]>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor(id={}, shape={:?})", self.id, self.shape)
    }
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn scalar(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "scalar() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[1],
        }
    }

    fn shape_str(&self) -> String {
        format!("{:?}", self.shape)
    }
}

type Vjp = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

struct Node {
    parents: Vec<usize>,
    vjp: Option<Vjp>,
}

/// Wengert list. Not thread-safe by design; training uses one tape per case
/// and merges parameter gradients outside.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: TAPE_IDS.fetch_add(1, Ordering::Relaxed), nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, shape: Vec<usize>, data: Rc<[f64]>, parents: Vec<usize>, vjp: Option<Vjp>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { parents, vjp });
        Tensor { id, tape_id: self.id, shape, data }
    }

    /// A leaf the backward pass keeps a gradient for.
    pub fn leaf(&self, shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape {
                op: "leaf".into(),
                lhs: format!("{shape:?}"),
                rhs: format!("data len {}", data.len()),
            });
        }
        Ok(self.push(shape.to_vec(), Rc::from(data), Vec::new(), None))
    }

    /// Same storage as a leaf; named for intent at call sites.
    pub fn constant(&self, shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        self.leaf(shape, data)
    }

    pub fn scalar_const(&self, v: f64) -> Tensor {
        self.push(vec![1], Rc::from(vec![v]), Vec::new(), None)
    }

    fn check(&self, op: &str, t: &Tensor) {
        assert_eq!(t.tape_id, self.id, "{op}: tensor belongs to another tape");
    }

    /// Gradients of a scalar root with respect to every leaf reachable from
    /// it. Interior gradients are dropped as soon as they are consumed.
    pub fn backward(&self, root: &Tensor) -> Result<Grads> {
        self.check("backward", root);
        if root.len() != 1 {
            return Err(Error::Shape { op: "backward".into(), lhs: root.shape_str(), rhs: "scalar".into() });
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[root.id] = Some(vec![1.0]);
        for id in (0..=root.id).rev() {
            if grads[id].is_none() {
                continue;
            }
            let node = &nodes[id];
            let Some(vjp) = &node.vjp else {
                continue; // leaf: keep the gradient
            };
            let g = std::mem::take(&mut grads[id]).unwrap();
            let contribs = vjp(&g);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (&pid, c) in node.parents.iter().zip(contribs) {
                match &mut grads[pid] {
                    Some(acc) => {
                        debug_assert_eq!(acc.len(), c.len());
                        for (a, b) in acc.iter_mut().zip(&c) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(c),
                }
            }
        }
        Ok(Grads { tape_id: self.id, grads })
    }
}

pub struct Grads {
    tape_id: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Gradient with respect to a leaf; None when the leaf is unreachable
    /// from the backward root.
    pub fn wrt(&self, t: &Tensor) -> Option<&[f64]> {
        assert_eq!(t.tape_id, self.tape_id, "gradient query against another tape");
        self.grads.get(t.id).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_accumulates_over_shared_input() {
        let tape = Tape::new();
        let x = tape.leaf(&[2], vec![3.0, -1.0]).unwrap();
        // y = sum(x*x + x) => dy/dx = 2x + 1
        let sq = tape.mul(&x, &x).unwrap();
        let s = tape.add(&sq, &x).unwrap();
        let y = tape.sum_all(&s);
        assert!((y.scalar() - (9.0 + 3.0 + 1.0 - 1.0)).abs() < 1e-12);
        let grads = tape.backward(&y).unwrap();
        let g = grads.wrt(&x).unwrap();
        assert_eq!(g, &[7.0, -1.0]);
    }

    #[test]
    fn unreachable_leaf_has_no_grad() {
        let tape = Tape::new();
        let x = tape.leaf(&[1], vec![2.0]).unwrap();
        let z = tape.leaf(&[1], vec![5.0]).unwrap();
        let y = tape.mul(&x, &x).unwrap();
        let grads = tape.backward(&y).unwrap();
        assert!(grads.wrt(&z).is_none());
        assert_eq!(grads.wrt(&x).unwrap(), &[4.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(&[2], vec![1.0, 2.0]).unwrap();
        assert!(tape.backward(&x).is_err());
    }
}
