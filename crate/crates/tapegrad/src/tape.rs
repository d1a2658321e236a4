use std::fmt;

use ndarray::{s, Array2, Axis};

use crate::params::{ParamId, ParamSet};
use crate::Mat;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Shape or index violation while building a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    ShapeMismatch { op: &'static str, detail: String },
    IndexOutOfRange { op: &'static str, detail: String },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::ShapeMismatch { op, detail } => {
                write!(f, "shape mismatch in {op}: {detail}")
            }
            GraphError::IndexOutOfRange { op, detail } => {
                write!(f, "index out of range in {op}: {detail}")
            }
        }
    }
}

impl std::error::Error for GraphError {}

fn shape_err(op: &'static str, detail: String) -> GraphError {
    GraphError::ShapeMismatch { op, detail }
}

enum Op {
    Const,
    Param(usize),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRow(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Elu(NodeId),
    Ln(NodeId),
    Clamp(NodeId, f64, f64),
    SoftmaxRows(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    MeanRows(NodeId),
    MaxCols(NodeId, Vec<usize>),
    ConcatCols(NodeId, NodeId),
    StackRows(Vec<NodeId>),
    SliceRow(NodeId, usize),
    Transpose(NodeId),
    GatherRows(NodeId, Vec<usize>),
    RepeatRow(NodeId),
    UnfoldRows(NodeId, usize),
    Detach,
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    node_grads: Vec<Option<Mat>>,
    param_grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a parameter; `None` when the parameter was
    /// not reachable from the loss (or not trainable on this tape).
    pub fn param(&self, id: ParamId) -> Option<&Mat> {
        self.param_grads.get(id.index()).and_then(|g| g.as_ref())
    }

    /// Gradient w.r.t. a parameter, materializing zeros of the given shape
    /// when the parameter is unreached.
    pub fn param_or_zeros(&self, id: ParamId, rows: usize, cols: usize) -> Mat {
        match self.param(id) {
            Some(g) => g.clone(),
            None => Array2::zeros((rows, cols)),
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&Mat> {
        self.node_grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Global L2 norm over a group of parameter gradients.
    pub fn global_norm(&self, group: &[ParamId]) -> f64 {
        group
            .iter()
            .filter_map(|id| self.param(*id))
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Scale every gradient in the group so that the global norm does not
    /// exceed `max_norm`. Returns the post-clip norm.
    pub fn clip_global_norm(&mut self, group: &[ParamId], max_norm: f64) -> f64 {
        let norm = self.global_norm(group);
        if norm.is_finite() && norm > max_norm {
            let scale = max_norm / norm;
            for id in group {
                if let Some(g) = self.param_grads[id.index()].as_mut() {
                    g.mapv_inplace(|x| x * scale);
                }
            }
            max_norm
        } else {
            norm
        }
    }
}

/// Append-only record of eagerly evaluated matrix operations.
///
/// Nodes are identified by insertion order, which is also a topological
/// order, so the backward pass is a single reverse sweep.
pub struct Tape<'a> {
    store: &'a ParamSet,
    trainable: Vec<bool>,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    /// Tape on which every parameter of `store` collects gradients.
    pub fn new(store: &'a ParamSet) -> Self {
        Tape {
            store,
            trainable: vec![true; store.len()],
            nodes: Vec::new(),
        }
    }

    /// Tape on which only `trainable` parameters collect gradients; all other
    /// parameters enter as constants (gradient still flows *through* them to
    /// their inputs).
    pub fn with_trainable(store: &'a ParamSet, trainable: &[ParamId]) -> Self {
        let mut mask = vec![false; store.len()];
        for id in trainable {
            mask[id.index()] = true;
        }
        Tape {
            store,
            trainable: mask,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.nodes[id.0].value;
        assert_eq!(v.dim(), (1, 1), "scalar() on non 1x1 node");
        v[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn val(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    // ---- leaves ----

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Const, false)
    }

    pub fn scalar_const(&mut self, x: f64) -> NodeId {
        self.constant(Array2::from_elem((1, 1), x))
    }

    /// Insert a parameter leaf. Collects gradient iff the parameter is
    /// trainable on this tape.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let trainable = self.trainable[id.index()];
        self.push(self.store.value(id).clone(), Op::Param(id.index()), trainable)
    }

    // ---- elementwise and linear algebra ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        if self.val(a).dim() != self.val(b).dim() {
            return Err(shape_err(
                "add",
                format!("{:?} vs {:?}", self.val(a).dim(), self.val(b).dim()),
            ));
        }
        let v = self.val(a) + self.val(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        if self.val(a).dim() != self.val(b).dim() {
            return Err(shape_err(
                "sub",
                format!("{:?} vs {:?}", self.val(a).dim(), self.val(b).dim()),
            ));
        }
        let v = self.val(a) - self.val(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        if self.val(a).dim() != self.val(b).dim() {
            return Err(shape_err(
                "mul_elem",
                format!("{:?} vs {:?}", self.val(a).dim(), self.val(b).dim()),
            ));
        }
        let v = self.val(a) * self.val(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::MulElem(a, b), ng))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (_, ak) = self.val(a).dim();
        let (bk, _) = self.val(b).dim();
        if ak != bk {
            return Err(shape_err(
                "matmul",
                format!("{:?} x {:?}", self.val(a).dim(), self.val(b).dim()),
            ));
        }
        let v = self.val(a).dot(self.val(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.val(a) * c;
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    /// Broadcast add of a 1×c row vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (_, ac) = self.val(a).dim();
        let (br, bc) = self.val(b).dim();
        if br != 1 || bc != ac {
            return Err(shape_err(
                "add_row",
                format!("{:?} + row {:?}", self.val(a).dim(), self.val(b).dim()),
            ));
        }
        let v = self.val(a) + &self.val(b).row(0);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::AddRow(a, b), ng))
    }

    // ---- nonlinearities ----

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.val(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let ng = self.needs(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.val(a).mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let v = self.val(a).mapv(|x| if x > 0.0 { x } else { x.exp() - 1.0 });
        let ng = self.needs(a);
        self.push(v, Op::Elu(a), ng)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.val(a).mapv(f64::ln);
        let ng = self.needs(a);
        self.push(v, Op::Ln(a), ng)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.val(a).mapv(|x| x.max(lo).min(hi));
        let ng = self.needs(a);
        self.push(v, Op::Clamp(a, lo, hi), ng)
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.val(a);
        let mut v = x.clone();
        for mut row in v.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|e| (e - max).exp());
            let sum: f64 = row.iter().sum();
            row.mapv_inplace(|e| e / sum);
        }
        let ng = self.needs(a);
        self.push(v, Op::SoftmaxRows(a), ng)
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.val(a).sum());
        let ng = self.needs(a);
        self.push(v, Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.val(a).len() as f64;
        let v = Array2::from_elem((1, 1), self.val(a).sum() / n);
        let ng = self.needs(a);
        self.push(v, Op::MeanAll(a), ng)
    }

    /// Mean over rows: r×c → 1×c.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.val(a).dim();
        let mut v = Array2::zeros((1, c));
        for row in self.val(a).rows() {
            for (j, x) in row.iter().enumerate() {
                v[[0, j]] += x;
            }
        }
        v.mapv_inplace(|x| x / r as f64);
        let ng = self.needs(a);
        self.push(v, Op::MeanRows(a), ng)
    }

    /// Column-wise max over rows: r×c → 1×c. Ties resolve to the lowest row.
    pub fn max_cols(&mut self, a: NodeId) -> NodeId {
        let x = self.val(a);
        let (r, c) = x.dim();
        let mut v = Array2::zeros((1, c));
        let mut arg = vec![0usize; c];
        for j in 0..c {
            let mut best = x[[0, j]];
            let mut bi = 0usize;
            for i in 1..r {
                if x[[i, j]] > best {
                    best = x[[i, j]];
                    bi = i;
                }
            }
            v[[0, j]] = best;
            arg[j] = bi;
        }
        let ng = self.needs(a);
        self.push(v, Op::MaxCols(a, arg), ng)
    }

    // ---- structure ----

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (ar, ac) = self.val(a).dim();
        let (br, bc) = self.val(b).dim();
        if ar != br {
            return Err(shape_err(
                "concat_cols",
                format!("{ar} rows vs {br} rows"),
            ));
        }
        let mut v = Array2::zeros((ar, ac + bc));
        v.slice_mut(s![.., ..ac]).assign(self.val(a));
        v.slice_mut(s![.., ac..]).assign(self.val(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::ConcatCols(a, b), ng))
    }

    /// Stack 1×c rows into an n×c matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId, GraphError> {
        if rows.is_empty() {
            return Err(shape_err("stack_rows", "empty row list".into()));
        }
        let c = self.val(rows[0]).dim().1;
        for &r in rows {
            let d = self.val(r).dim();
            if d.0 != 1 || d.1 != c {
                return Err(shape_err(
                    "stack_rows",
                    format!("expected 1x{c}, got {d:?}"),
                ));
            }
        }
        let mut v = Array2::zeros((rows.len(), c));
        for (i, &r) in rows.iter().enumerate() {
            v.row_mut(i).assign(&self.val(r).row(0));
        }
        let ng = rows.iter().any(|r| self.needs(*r));
        Ok(self.push(v, Op::StackRows(rows.to_vec()), ng))
    }

    /// Extract row `t` as a 1×c matrix.
    pub fn slice_row(&mut self, a: NodeId, t: usize) -> Result<NodeId, GraphError> {
        let (r, c) = self.val(a).dim();
        if t >= r {
            return Err(GraphError::IndexOutOfRange {
                op: "slice_row",
                detail: format!("row {t} of {r}"),
            });
        }
        let mut v = Array2::zeros((1, c));
        v.row_mut(0).assign(&self.val(a).row(t));
        let ng = self.needs(a);
        Ok(self.push(v, Op::SliceRow(a, t), ng))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.val(a).t().to_owned();
        let ng = self.needs(a);
        self.push(v, Op::Transpose(a), ng)
    }

    /// Gather rows of `table` by index (embedding lookup).
    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId, GraphError> {
        let (r, c) = self.val(table).dim();
        if let Some(bad) = indices.iter().find(|&&i| i >= r) {
            return Err(GraphError::IndexOutOfRange {
                op: "gather_rows",
                detail: format!("row {bad} of {r}"),
            });
        }
        let mut v = Array2::zeros((indices.len(), c));
        for (i, &idx) in indices.iter().enumerate() {
            v.row_mut(i).assign(&self.val(table).row(idx));
        }
        let ng = self.needs(table);
        Ok(self.push(v, Op::GatherRows(table, indices.to_vec()), ng))
    }

    /// Repeat a 1×c row n times into an n×c matrix.
    pub fn repeat_row(&mut self, a: NodeId, n: usize) -> Result<NodeId, GraphError> {
        let (r, c) = self.val(a).dim();
        if r != 1 {
            return Err(shape_err("repeat_row", format!("expected 1 row, got {r}")));
        }
        if n == 0 {
            return Err(shape_err("repeat_row", "zero repetitions".into()));
        }
        let mut v = Array2::zeros((n, c));
        for i in 0..n {
            v.row_mut(i).assign(&self.val(a).row(0));
        }
        let ng = self.needs(a);
        Ok(self.push(v, Op::RepeatRow(a), ng))
    }

    /// Sliding windows of `k` rows (odd `k`, zero padding (k−1)/2 on each
    /// side): r×c → r×(k·c). Row i holds rows i−p..=i+p flattened, which turns
    /// a same-padded 1-D convolution over rows into a single matmul.
    pub fn unfold_rows(&mut self, a: NodeId, k: usize) -> Result<NodeId, GraphError> {
        if k % 2 == 0 || k == 0 {
            return Err(shape_err("unfold_rows", format!("window {k} must be odd")));
        }
        let (r, c) = self.val(a).dim();
        let p = (k - 1) / 2;
        let mut v = Array2::zeros((r, k * c));
        for i in 0..r {
            for w in 0..k {
                let src = i as isize + w as isize - p as isize;
                if src >= 0 && (src as usize) < r {
                    for j in 0..c {
                        v[[i, w * c + j]] = self.val(a)[[src as usize, j]];
                    }
                }
            }
        }
        let ng = self.needs(a);
        Ok(self.push(v, Op::UnfoldRows(a, k), ng))
    }

    /// Forward identity that blocks gradient flow.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.val(a).clone();
        self.push(v, Op::Detach, false)
    }

    // ---- backward ----

    /// Reverse sweep from a 1×1 `root` node. Gradients accumulate for every
    /// node on a path from a trainable parameter to the root.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(
            self.val(root).dim(),
            (1, 1),
            "backward root must be a 1x1 scalar node"
        );
        let mut node_grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        node_grads[root.0] = Some(Array2::from_elem((1, 1), 1.0));
        let mut param_grads: Vec<Option<Mat>> = vec![None; self.store.len()];

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            match &self.nodes[i].op {
                Op::Const | Op::Detach => {}
                Op::Param(p) => {
                    accumulate(&mut param_grads[*p], &g);
                }
                Op::Add(a, b) => {
                    self.acc(&mut node_grads, *a, g.clone());
                    self.acc(&mut node_grads, *b, g);
                }
                Op::Sub(a, b) => {
                    self.acc(&mut node_grads, *a, g.clone());
                    self.acc(&mut node_grads, *b, -g);
                }
                Op::MulElem(a, b) => {
                    let ga = &g * self.val(*b);
                    let gb = &g * self.val(*a);
                    self.acc(&mut node_grads, *a, ga);
                    self.acc(&mut node_grads, *b, gb);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.val(*b).t());
                    let gb = self.val(*a).t().dot(&g);
                    self.acc(&mut node_grads, *a, ga);
                    self.acc(&mut node_grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    self.acc(&mut node_grads, *a, &g * *c);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.acc(&mut node_grads, *a, g);
                    self.acc(&mut node_grads, *b, gb);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = g.clone();
                    ga.zip_mut_with(y, |gi, &yi| *gi *= yi * (1.0 - yi));
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = g.clone();
                    ga.zip_mut_with(y, |gi, &yi| *gi *= 1.0 - yi * yi);
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::Elu(a) => {
                    // d/dx elu = 1 for x > 0, e^x (= y + 1) otherwise
                    let x = self.val(*a);
                    let mut ga = g.clone();
                    ga.zip_mut_with(x, |gi, &xi| {
                        if xi <= 0.0 {
                            *gi *= xi.exp();
                        }
                    });
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::Ln(a) => {
                    let x = self.val(*a);
                    let mut ga = g.clone();
                    ga.zip_mut_with(x, |gi, &xi| *gi /= xi);
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.val(*a);
                    let mut ga = g.clone();
                    ga.zip_mut_with(x, |gi, &xi| {
                        if xi <= *lo || xi >= *hi {
                            *gi = 0.0;
                        }
                    });
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let s = &self.nodes[i].value;
                    let mut ga = Array2::zeros(s.dim());
                    for (r, g_row) in g.rows().into_iter().enumerate() {
                        let s_row = s.row(r);
                        let dot: f64 = g_row
                            .iter()
                            .zip(s_row.iter())
                            .map(|(gi, si)| gi * si)
                            .sum();
                        for (j, (gi, si)) in g_row.iter().zip(s_row.iter()).enumerate() {
                            ga[[r, j]] = si * (gi - dot);
                        }
                    }
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.val(*a).dim(), g[[0, 0]]);
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::MeanAll(a) => {
                    let n = self.val(*a).len() as f64;
                    let ga = Array2::from_elem(self.val(*a).dim(), g[[0, 0]] / n);
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.val(*a).dim();
                    let mut ga = Array2::zeros((r, c));
                    for mut row in ga.rows_mut() {
                        for (j, x) in row.iter_mut().enumerate() {
                            *x = g[[0, j]] / r as f64;
                        }
                    }
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::MaxCols(a, arg) => {
                    let mut ga = Array2::zeros(self.val(*a).dim());
                    for (j, &src) in arg.iter().enumerate() {
                        ga[[src, j]] += g[[0, j]];
                    }
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.val(*a).dim().1;
                    let ga = g.slice(s![.., ..ac]).to_owned();
                    let gb = g.slice(s![.., ac..]).to_owned();
                    self.acc(&mut node_grads, *a, ga);
                    self.acc(&mut node_grads, *b, gb);
                }
                Op::StackRows(rows) => {
                    for (r, &src) in rows.iter().enumerate() {
                        let gr = g.row(r).to_owned().insert_axis(Axis(0));
                        self.acc(&mut node_grads, src, gr);
                    }
                }
                Op::SliceRow(a, t) => {
                    let mut ga = Array2::zeros(self.val(*a).dim());
                    ga.row_mut(*t).assign(&g.row(0));
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::Transpose(a) => {
                    self.acc(&mut node_grads, *a, g.t().to_owned());
                }
                Op::GatherRows(table, indices) => {
                    let mut gt = Array2::zeros(self.val(*table).dim());
                    for (i_out, &idx) in indices.iter().enumerate() {
                        let mut dst = gt.row_mut(idx);
                        dst += &g.row(i_out);
                    }
                    self.acc(&mut node_grads, *table, gt);
                }
                Op::RepeatRow(a) => {
                    let ga = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.acc(&mut node_grads, *a, ga);
                }
                Op::UnfoldRows(a, k) => {
                    let (r, c) = self.val(*a).dim();
                    let p = (k - 1) / 2;
                    let mut ga = Array2::zeros((r, c));
                    for i_out in 0..r {
                        for w in 0..*k {
                            let src = i_out as isize + w as isize - p as isize;
                            if src >= 0 && (src as usize) < r {
                                for j in 0..c {
                                    ga[[src as usize, j]] += g[[i_out, w * c + j]];
                                }
                            }
                        }
                    }
                    self.acc(&mut node_grads, *a, ga);
                }
            }
        }

        Gradients {
            node_grads,
            param_grads,
        }
    }

    fn acc(&self, grads: &mut [Option<Mat>], id: NodeId, g: Mat) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        accumulate(&mut grads[id.0], &g);
    }
}

fn accumulate(slot: &mut Option<Mat>, g: &Mat) {
    match slot {
        Some(acc) => *acc += g,
        None => *slot = Some(g.clone()),
    }
}
