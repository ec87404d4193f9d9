//! Reverse-mode automatic differentiation on an append-only tape of
//! vector-valued operations.
//!
//! Nodes hold small vectors in one flat arena; each operation records its
//! parent indices so the backward pass can visit every node exactly once in
//! reverse topological order (which is construction order). Repeated use of
//! a leaf accumulates into its adjoint. The ReLU derivative at zero is taken
//! to be zero.

use crate::error::{CoreError, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    /// scalar node times vector node
    MulScalar {
        s: u32,
        x: u32,
    },
    Scale {
        x: u32,
        c: f64,
    },
    /// add a constant vector stored in the const arena
    AddConst {
        x: u32,
        off: u32,
    },
    /// weight node (row-major rows x cols) times vector node
    MatVec {
        w: u32,
        x: u32,
        rows: u32,
        cols: u32,
    },
    /// constant matrix (const arena) times vector node
    MatVecConst {
        off: u32,
        x: u32,
        rows: u32,
        cols: u32,
    },
    Relu(u32),
    Exp(u32),
    Square(u32),
    /// reduce-sum to a scalar
    Sum(u32),
    Dot(u32, u32),
    Slice {
        x: u32,
        start: u32,
    },
    /// concatenation of nodes listed in the parts arena
    Concat {
        off: u32,
        count: u32,
    },
}

#[derive(Default)]
pub struct Tape {
    ops: Vec<Op>,
    offs: Vec<u32>,
    lens: Vec<u32>,
    vals: Vec<f64>,
    adj: Vec<f64>,
    consts: Vec<f64>,
    parts: Vec<u32>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_capacity(nodes: usize, values: usize) -> Self {
        Tape {
            ops: Vec::with_capacity(nodes),
            offs: Vec::with_capacity(nodes),
            lens: Vec::with_capacity(nodes),
            vals: Vec::with_capacity(values),
            adj: Vec::new(),
            consts: Vec::with_capacity(values / 4),
            parts: Vec::with_capacity(64),
        }
    }

    /// Drop all nodes but keep allocations.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.offs.clear();
        self.lens.clear();
        self.vals.clear();
        self.adj.clear();
        self.consts.clear();
        self.parts.clear();
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    #[inline]
    fn push(&mut self, op: Op, len: usize) -> Var {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.offs.push(self.vals.len() as u32);
        self.lens.push(len as u32);
        self.vals.resize(self.vals.len() + len, 0.0);
        Var(id)
    }

    #[inline]
    fn range(&self, id: u32) -> std::ops::Range<usize> {
        let off = self.offs[id as usize] as usize;
        off..off + self.lens[id as usize] as usize
    }

    #[inline]
    pub fn val(&self, v: Var) -> &[f64] {
        &self.vals[self.range(v.0)]
    }

    #[inline]
    pub fn scalar(&self, v: Var) -> f64 {
        self.vals[self.offs[v.0 as usize] as usize]
    }

    #[inline]
    pub fn len_of(&self, v: Var) -> usize {
        self.lens[v.0 as usize] as usize
    }

    /// Adjoint of a node after `backward`.
    pub fn adjoint(&self, v: Var) -> &[f64] {
        &self.adj[self.range(v.0)]
    }

    pub fn leaf(&mut self, values: &[f64]) -> Var {
        let v = self.push(Op::Leaf, values.len());
        let r = self.range(v.0);
        self.vals[r].copy_from_slice(values);
        v
    }

    pub fn leaf_scalar(&mut self, value: f64) -> Var {
        self.leaf(&[value])
    }

    fn push_const(&mut self, values: &[f64]) -> u32 {
        let off = self.consts.len() as u32;
        self.consts.extend_from_slice(values);
        off
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.len_of(a), self.len_of(b));
        let len = self.len_of(a);
        let out = self.push(Op::Add(a.0, b.0), len);
        let (ra, rb, ro) = (self.range(a.0), self.range(b.0), self.range(out.0));
        for i in 0..len {
            self.vals[ro.start + i] = self.vals[ra.start + i] + self.vals[rb.start + i];
        }
        out
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.len_of(a), self.len_of(b));
        let len = self.len_of(a);
        let out = self.push(Op::Sub(a.0, b.0), len);
        let (ra, rb, ro) = (self.range(a.0), self.range(b.0), self.range(out.0));
        for i in 0..len {
            self.vals[ro.start + i] = self.vals[ra.start + i] - self.vals[rb.start + i];
        }
        out
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.len_of(a), self.len_of(b));
        let len = self.len_of(a);
        let out = self.push(Op::Mul(a.0, b.0), len);
        let (ra, rb, ro) = (self.range(a.0), self.range(b.0), self.range(out.0));
        for i in 0..len {
            self.vals[ro.start + i] = self.vals[ra.start + i] * self.vals[rb.start + i];
        }
        out
    }

    pub fn mul_scalar(&mut self, s: Var, x: Var) -> Var {
        debug_assert_eq!(self.len_of(s), 1);
        let len = self.len_of(x);
        let out = self.push(Op::MulScalar { s: s.0, x: x.0 }, len);
        let sv = self.vals[self.offs[s.0 as usize] as usize];
        let (rx, ro) = (self.range(x.0), self.range(out.0));
        for i in 0..len {
            self.vals[ro.start + i] = sv * self.vals[rx.start + i];
        }
        out
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let len = self.len_of(x);
        let out = self.push(Op::Scale { x: x.0, c }, len);
        let (rx, ro) = (self.range(x.0), self.range(out.0));
        for i in 0..len {
            self.vals[ro.start + i] = c * self.vals[rx.start + i];
        }
        out
    }

    pub fn add_const(&mut self, x: Var, values: &[f64]) -> Var {
        debug_assert_eq!(self.len_of(x), values.len());
        let off = self.push_const(values);
        let len = values.len();
        let out = self.push(Op::AddConst { x: x.0, off }, len);
        let (rx, ro) = (self.range(x.0), self.range(out.0));
        for i in 0..len {
            self.vals[ro.start + i] =
                self.vals[rx.start + i] + self.consts[off as usize + i];
        }
        out
    }

    /// `w` is a leaf holding a row-major `rows x cols` matrix.
    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Var {
        debug_assert_eq!(self.len_of(w), rows * cols);
        debug_assert_eq!(self.len_of(x), cols);
        let out = self.push(
            Op::MatVec {
                w: w.0,
                x: x.0,
                rows: rows as u32,
                cols: cols as u32,
            },
            rows,
        );
        let (rw, rx, ro) = (self.range(w.0), self.range(x.0), self.range(out.0));
        for r in 0..rows {
            let mut acc = 0.0;
            let wrow = rw.start + r * cols;
            for c in 0..cols {
                acc += self.vals[wrow + c] * self.vals[rx.start + c];
            }
            self.vals[ro.start + r] = acc;
        }
        out
    }

    pub fn matvec_const(&mut self, matrix: &[f64], x: Var, rows: usize, cols: usize) -> Var {
        debug_assert_eq!(matrix.len(), rows * cols);
        debug_assert_eq!(self.len_of(x), cols);
        let off = self.push_const(matrix);
        let out = self.push(
            Op::MatVecConst {
                off,
                x: x.0,
                rows: rows as u32,
                cols: cols as u32,
            },
            rows,
        );
        let (rx, ro) = (self.range(x.0), self.range(out.0));
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += self.consts[off as usize + r * cols + c] * self.vals[rx.start + c];
            }
            self.vals[ro.start + r] = acc;
        }
        out
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let len = self.len_of(x);
        let out = self.push(Op::Relu(x.0), len);
        let (rx, ro) = (self.range(x.0), self.range(out.0));
        for i in 0..len {
            let v = self.vals[rx.start + i];
            self.vals[ro.start + i] = if v > 0.0 { v } else { 0.0 };
        }
        out
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let len = self.len_of(x);
        let out = self.push(Op::Exp(x.0), len);
        let (rx, ro) = (self.range(x.0), self.range(out.0));
        for i in 0..len {
            self.vals[ro.start + i] = self.vals[rx.start + i].exp();
        }
        out
    }

    pub fn square(&mut self, x: Var) -> Var {
        let len = self.len_of(x);
        let out = self.push(Op::Square(x.0), len);
        let (rx, ro) = (self.range(x.0), self.range(out.0));
        for i in 0..len {
            let v = self.vals[rx.start + i];
            self.vals[ro.start + i] = v * v;
        }
        out
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = self.push(Op::Sum(x.0), 1);
        let rx = self.range(x.0);
        let mut acc = 0.0;
        for i in rx.clone() {
            acc += self.vals[i];
        }
        let ro = self.range(out.0);
        self.vals[ro.start] = acc;
        out
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.len_of(a), self.len_of(b));
        let out = self.push(Op::Dot(a.0, b.0), 1);
        let (ra, rb) = (self.range(a.0), self.range(b.0));
        let mut acc = 0.0;
        for i in 0..(ra.end - ra.start) {
            acc += self.vals[ra.start + i] * self.vals[rb.start + i];
        }
        let ro = self.range(out.0);
        self.vals[ro.start] = acc;
        out
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        debug_assert!(start + len <= self.len_of(x));
        let out = self.push(
            Op::Slice {
                x: x.0,
                start: start as u32,
            },
            len,
        );
        let (rx, ro) = (self.range(x.0), self.range(out.0));
        for i in 0..len {
            self.vals[ro.start + i] = self.vals[rx.start + start + i];
        }
        out
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let off = self.parts.len() as u32;
        for p in parts {
            self.parts.push(p.0);
        }
        let total: usize = parts.iter().map(|p| self.len_of(*p)).sum();
        let out = self.push(
            Op::Concat {
                off,
                count: parts.len() as u32,
            },
            total,
        );
        let ro = self.range(out.0);
        let mut cursor = ro.start;
        for p in parts {
            let rp = self.range(p.0);
            for i in rp.clone() {
                self.vals[cursor] = self.vals[i];
                cursor += 1;
            }
        }
        out
    }

    /// Recompute every non-leaf value from the recorded operations; used to
    /// check that the tape is a faithful record of the forward pass.
    pub fn replay_forward(&mut self) {
        for id in 0..self.ops.len() {
            let op = self.ops[id];
            let ro = self.range(id as u32);
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (ra, rb) = (self.range(a), self.range(b));
                    for i in 0..(ro.end - ro.start) {
                        self.vals[ro.start + i] =
                            self.vals[ra.start + i] + self.vals[rb.start + i];
                    }
                }
                Op::Sub(a, b) => {
                    let (ra, rb) = (self.range(a), self.range(b));
                    for i in 0..(ro.end - ro.start) {
                        self.vals[ro.start + i] =
                            self.vals[ra.start + i] - self.vals[rb.start + i];
                    }
                }
                Op::Mul(a, b) => {
                    let (ra, rb) = (self.range(a), self.range(b));
                    for i in 0..(ro.end - ro.start) {
                        self.vals[ro.start + i] =
                            self.vals[ra.start + i] * self.vals[rb.start + i];
                    }
                }
                Op::MulScalar { s, x } => {
                    let sv = self.vals[self.offs[s as usize] as usize];
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.vals[ro.start + i] = sv * self.vals[rx.start + i];
                    }
                }
                Op::Scale { x, c } => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.vals[ro.start + i] = c * self.vals[rx.start + i];
                    }
                }
                Op::AddConst { x, off } => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.vals[ro.start + i] =
                            self.vals[rx.start + i] + self.consts[off as usize + i];
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (rw, rx) = (self.range(w), self.range(x));
                    for r in 0..rows as usize {
                        let mut acc = 0.0;
                        for c in 0..cols as usize {
                            acc += self.vals[rw.start + r * cols as usize + c]
                                * self.vals[rx.start + c];
                        }
                        self.vals[ro.start + r] = acc;
                    }
                }
                Op::MatVecConst { off, x, rows, cols } => {
                    let rx = self.range(x);
                    for r in 0..rows as usize {
                        let mut acc = 0.0;
                        for c in 0..cols as usize {
                            acc += self.consts[off as usize + r * cols as usize + c]
                                * self.vals[rx.start + c];
                        }
                        self.vals[ro.start + r] = acc;
                    }
                }
                Op::Relu(x) => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        let v = self.vals[rx.start + i];
                        self.vals[ro.start + i] = if v > 0.0 { v } else { 0.0 };
                    }
                }
                Op::Exp(x) => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.vals[ro.start + i] = self.vals[rx.start + i].exp();
                    }
                }
                Op::Square(x) => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        let v = self.vals[rx.start + i];
                        self.vals[ro.start + i] = v * v;
                    }
                }
                Op::Sum(x) => {
                    let rx = self.range(x);
                    let mut acc = 0.0;
                    for i in rx.clone() {
                        acc += self.vals[i];
                    }
                    self.vals[ro.start] = acc;
                }
                Op::Dot(a, b) => {
                    let (ra, rb) = (self.range(a), self.range(b));
                    let mut acc = 0.0;
                    for i in 0..(ra.end - ra.start) {
                        acc += self.vals[ra.start + i] * self.vals[rb.start + i];
                    }
                    self.vals[ro.start] = acc;
                }
                Op::Slice { x, start } => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.vals[ro.start + i] = self.vals[rx.start + start as usize + i];
                    }
                }
                Op::Concat { off, count } => {
                    let mut cursor = ro.start;
                    for p in 0..count as usize {
                        let part = self.parts[off as usize + p];
                        let rp = self.range(part);
                        for i in rp.clone() {
                            self.vals[cursor] = self.vals[i];
                            cursor += 1;
                        }
                    }
                }
            }
        }
    }

    /// Reverse pass from a scalar output node. Adjoints of all nodes are
    /// reset; afterwards `adjoint` reads the gradient at any leaf.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if output.0 as usize >= self.ops.len() {
            return Err(CoreError::Invalid(
                "backward output is not a node on this tape".into(),
            ));
        }
        if self.len_of(output) != 1 {
            return Err(CoreError::Invalid(
                "backward requires a scalar output node".into(),
            ));
        }
        self.adj.clear();
        self.adj.resize(self.vals.len(), 0.0);
        self.adj[self.offs[output.0 as usize] as usize] = 1.0;
        for id in (0..=output.0 as usize).rev() {
            let op = self.ops[id];
            let ro = self.range(id as u32);
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (ra, rb) = (self.range(a), self.range(b));
                    for i in 0..(ro.end - ro.start) {
                        let g = self.adj[ro.start + i];
                        self.adj[ra.start + i] += g;
                        self.adj[rb.start + i] += g;
                    }
                }
                Op::Sub(a, b) => {
                    let (ra, rb) = (self.range(a), self.range(b));
                    for i in 0..(ro.end - ro.start) {
                        let g = self.adj[ro.start + i];
                        self.adj[ra.start + i] += g;
                        self.adj[rb.start + i] -= g;
                    }
                }
                Op::Mul(a, b) => {
                    let (ra, rb) = (self.range(a), self.range(b));
                    for i in 0..(ro.end - ro.start) {
                        let g = self.adj[ro.start + i];
                        self.adj[ra.start + i] += g * self.vals[rb.start + i];
                        self.adj[rb.start + i] += g * self.vals[ra.start + i];
                    }
                }
                Op::MulScalar { s, x } => {
                    let rs = self.range(s);
                    let rx = self.range(x);
                    let sv = self.vals[rs.start];
                    let mut sacc = 0.0;
                    for i in 0..(ro.end - ro.start) {
                        let g = self.adj[ro.start + i];
                        sacc += g * self.vals[rx.start + i];
                        self.adj[rx.start + i] += g * sv;
                    }
                    self.adj[rs.start] += sacc;
                }
                Op::Scale { x, c } => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.adj[rx.start + i] += c * self.adj[ro.start + i];
                    }
                }
                Op::AddConst { x, .. } => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.adj[rx.start + i] += self.adj[ro.start + i];
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (rw, rx) = (self.range(w), self.range(x));
                    for r in 0..rows as usize {
                        let g = self.adj[ro.start + r];
                        if g == 0.0 {
                            continue;
                        }
                        let wrow = rw.start + r * cols as usize;
                        for c in 0..cols as usize {
                            self.adj[wrow + c] += g * self.vals[rx.start + c];
                            self.adj[rx.start + c] += g * self.vals[wrow + c];
                        }
                    }
                }
                Op::MatVecConst { off, x, rows, cols } => {
                    let rx = self.range(x);
                    for r in 0..rows as usize {
                        let g = self.adj[ro.start + r];
                        if g == 0.0 {
                            continue;
                        }
                        for c in 0..cols as usize {
                            self.adj[rx.start + c] +=
                                g * self.consts[off as usize + r * cols as usize + c];
                        }
                    }
                }
                Op::Relu(x) => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        if self.vals[rx.start + i] > 0.0 {
                            self.adj[rx.start + i] += self.adj[ro.start + i];
                        }
                    }
                }
                Op::Exp(x) => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.adj[rx.start + i] += self.adj[ro.start + i] * self.vals[ro.start + i];
                    }
                }
                Op::Square(x) => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.adj[rx.start + i] +=
                            2.0 * self.vals[rx.start + i] * self.adj[ro.start + i];
                    }
                }
                Op::Sum(x) => {
                    let rx = self.range(x);
                    let g = self.adj[ro.start];
                    for i in rx.clone() {
                        self.adj[i] += g;
                    }
                }
                Op::Dot(a, b) => {
                    let (ra, rb) = (self.range(a), self.range(b));
                    let g = self.adj[ro.start];
                    for i in 0..(ra.end - ra.start) {
                        self.adj[ra.start + i] += g * self.vals[rb.start + i];
                        self.adj[rb.start + i] += g * self.vals[ra.start + i];
                    }
                }
                Op::Slice { x, start } => {
                    let rx = self.range(x);
                    for i in 0..(ro.end - ro.start) {
                        self.adj[rx.start + start as usize + i] += self.adj[ro.start + i];
                    }
                }
                Op::Concat { off, count } => {
                    let mut cursor = ro.start;
                    for p in 0..count as usize {
                        let part = self.parts[off as usize + p];
                        let rp = self.range(part);
                        for i in rp.clone() {
                            self.adj[i] += self.adj[cursor];
                            cursor += 1;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
