//! A small tape-based reverse-mode differentiation engine over row-major
//! 2-D tensors.
//!
//! Every value is an `f64` matrix. Batched token sequences are stored as
//! stacked rows (`batch * tokens` rows, `channels` columns); ops that need to
//! know the per-sample layout take the batch size explicitly. Transformer and
//! convolution building blocks (attention, layer/group norm, 3x3 im2col) are
//! fused ops with hand-written backward passes, checked against finite
//! differences in the tests below and in [`crate::model::gradcheck`].

use std::ops::Range;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length mismatch");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rows_slice(&self, range: Range<usize>) -> Tensor {
        Tensor::from_vec(
            range.len(),
            self.cols,
            self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        )
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_vec(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Tensor::from_vec(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

/// `c = alpha * a @ b + beta * c` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], usize, isize, isize),
    b: (&[f64], usize, isize, isize),
    beta: f64,
    c: (&mut [f64], usize, isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |off: usize, rs: isize, cs: isize, r: usize, cc: usize| {
        off + (r.saturating_sub(1)) * rs as usize + (cc.saturating_sub(1)) * cs as usize
    };
    assert!(k == 0 || last(a.1, a.2, a.3, m, k) < a.0.len());
    assert!(k == 0 || last(b.1, b.2, b.3, k, n) < b.0.len());
    assert!(last(c.1, c.2, c.3, m, n) < c.0.len());
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr().add(a.1),
            a.2,
            a.3,
            b.0.as_ptr().add(b.1),
            b.2,
            b.3,
            beta,
            c.0.as_mut_ptr().add(c.1),
            c.2,
            c.3,
        );
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Index of a parameter tensor in a parameter store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    AddTiled(Var, Var),
    TileRows(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Maximum(Var, Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        rstd: Vec<f64>,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        batch: usize,
        groups: usize,
        rstd: Vec<f64>,
    },
    Attention {
        qkv: Var,
        batch: usize,
        heads: usize,
        probs: Vec<f64>,
    },
    Im2Col3 {
        x: Var,
        batch: usize,
        h: usize,
        w: usize,
    },
    ConcatSegments {
        parts: Vec<Var>,
        batch: usize,
    },
    SliceSegments {
        x: Var,
        batch: usize,
        start: usize,
        len: usize,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    LogSoftmaxRows(Var),
    Pick(Var, Vec<(usize, usize)>),
    SumAll(Var),
    MeanSegments(Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for later differentiation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Leaf for a parameter. Frozen parameters behave as constants.
    pub fn param(&mut self, id: ParamId, value: &Tensor, trainable: bool) -> Var {
        self.push(value.clone(), Op::Param(id), trainable)
    }

    /// Copy of `v` cut off from the backward pass.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions {m}x{k} @ {k2}x{n}");
        let mut out = Tensor::zeros(m, n);
        gemm(
            m,
            k,
            n,
            (&self.value(a).data, 0, k as isize, 1),
            (&self.value(b).data, 0, n as isize, 1),
            0.0,
            (&mut out.data, 0, n as isize, 1),
        );
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x + y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x - y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x * y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), |x, y| x / y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Div(a, b), ng)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "add_row expects a 1x{n} row");
        let r = self.value(row).data.clone();
        let mut out = self.value(a).clone();
        for chunk in out.data.chunks_mut(n) {
            for (o, b) in chunk.iter_mut().zip(&r) {
                *o += b;
            }
        }
        let ng = self.ng(&[a, row]);
        self.push(out, Op::AddRow(a, row), ng)
    }

    /// Adds an `n x c` block to each of the stacked `batch` blocks of `a`.
    pub fn add_tiled(&mut self, a: Var, block: Var) -> Var {
        let (rows, cols) = self.shape(a);
        let (br, bc) = self.shape(block);
        assert!(bc == cols && br > 0 && rows % br == 0, "add_tiled shape mismatch");
        let b = self.value(block).data.clone();
        let mut out = self.value(a).clone();
        for chunk in out.data.chunks_mut(br * cols) {
            for (o, v) in chunk.iter_mut().zip(&b) {
                *o += v;
            }
        }
        let ng = self.ng(&[a, block]);
        self.push(out, Op::AddTiled(a, block), ng)
    }

    /// Stacks `times` copies of `block` vertically.
    pub fn tile_rows(&mut self, block: Var, times: usize) -> Var {
        let b = self.value(block);
        let mut data = Vec::with_capacity(b.len() * times);
        for _ in 0..times {
            data.extend_from_slice(&b.data);
        }
        let out = Tensor::from_vec(b.rows * times, b.cols, data);
        let ng = self.ng(&[block]);
        self.push(out, Op::TileRows(block), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        let ng = self.ng(&[a]);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v + s);
        let ng = self.ng(&[a]);
        self.push(out, Op::AddScalar(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        let ng = self.ng(&[a]);
        self.push(out, Op::Relu(a), ng)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 0.5 * x * (1.0 + gelu_inner(x).tanh()));
        let ng = self.ng(&[a]);
        self.push(out, Op::Gelu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(&[a]);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let ng = self.ng(&[a]);
        self.push(out, Op::Exp(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let ng = self.ng(&[a]);
        self.push(out, Op::Log(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        let ng = self.ng(&[a]);
        self.push(out, Op::Square(a), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let ng = self.ng(&[a]);
        self.push(out, Op::Abs(a), ng)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        let ng = self.ng(&[a]);
        self.push(out, Op::Clamp(a, lo, hi), ng)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), f64::min);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Minimum(a, b), ng)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip(self.value(b), f64::max);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Maximum(a, b), ng)
    }

    /// Per-row layer normalization with affine `1 x c` gamma and beta.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        const EPS: f64 = 1e-5;
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        let mut out = Tensor::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + EPS).sqrt();
            rstd.push(rs);
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = (row[c] - mean) * rs * g[c] + b[c];
            }
        }
        let ng = self.ng(&[x, gamma, beta]);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                rstd,
            },
            ng,
        )
    }

    /// Group normalization over each sample's positions. `x` holds `batch`
    /// stacked blocks of positions, channels along columns.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, batch: usize, groups: usize) -> Var {
        const EPS: f64 = 1e-5;
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        assert!(rows % batch == 0 && cols % groups == 0, "group_norm layout");
        let positions = rows / batch;
        let cg = cols / groups;
        let n = (positions * cg) as f64;
        let g = &self.value(gamma).data;
        let bt = &self.value(beta).data;
        let mut out = Tensor::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(batch * groups);
        for s in 0..batch {
            for grp in 0..groups {
                let cr = grp * cg..(grp + 1) * cg;
                let mut sum = 0.0;
                for p in 0..positions {
                    sum += xv.row(s * positions + p)[cr.clone()].iter().sum::<f64>();
                }
                let mean = sum / n;
                let mut var = 0.0;
                for p in 0..positions {
                    var += xv.row(s * positions + p)[cr.clone()]
                        .iter()
                        .map(|v| (v - mean) * (v - mean))
                        .sum::<f64>();
                }
                let rs = 1.0 / (var / n + EPS).sqrt();
                rstd.push(rs);
                for p in 0..positions {
                    let r = s * positions + p;
                    for c in cr.clone() {
                        out.data[r * cols + c] = (xv.data[r * cols + c] - mean) * rs * g[c] + bt[c];
                    }
                }
            }
        }
        let ng = self.ng(&[x, gamma, beta]);
        self.push(
            out,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                batch,
                groups,
                rstd,
            },
            ng,
        )
    }

    /// Multi-head scaled dot-product self-attention over packed `[q | k | v]`
    /// columns. Every sample attends over all of its own tokens.
    pub fn attention(&mut self, qkv: Var, batch: usize, heads: usize) -> Var {
        let (rows, c3) = self.shape(qkv);
        assert!(c3 % 3 == 0 && rows % batch == 0, "attention layout");
        let c = c3 / 3;
        assert!(c % heads == 0, "channels not divisible by heads");
        let d = c / heads;
        let n = rows / batch;
        let scale = 1.0 / (d as f64).sqrt();
        let src = &self.value(qkv).data;
        let mut out = Tensor::zeros(rows, c);
        let mut probs = vec![0.0; batch * heads * n * n];
        for s in 0..batch {
            for h in 0..heads {
                let base = s * n * c3;
                let p = &mut probs[(s * heads + h) * n * n..(s * heads + h + 1) * n * n];
                gemm(
                    n,
                    d,
                    n,
                    (src, base + h * d, c3 as isize, 1),
                    (src, base + c + h * d, 1, c3 as isize),
                    0.0,
                    (p, 0, n as isize, 1),
                );
                for row in p.chunks_mut(n) {
                    let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b * scale));
                    let mut z = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v * scale - mx).exp();
                        z += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= z;
                    }
                }
                gemm(
                    n,
                    n,
                    d,
                    (p, 0, n as isize, 1),
                    (src, base + 2 * c + h * d, c3 as isize, 1),
                    0.0,
                    (&mut out.data, s * n * c + h * d, c as isize, 1),
                );
            }
        }
        let ng = self.ng(&[qkv]);
        self.push(
            out,
            Op::Attention {
                qkv,
                batch,
                heads,
                probs,
            },
            ng,
        )
    }

    /// Zero-padded 3x3 neighbourhood gather: `[b*h*w, c] -> [b*h*w, 9c]`.
    pub fn im2col3(&mut self, x: Var, batch: usize, h: usize, w: usize) -> Var {
        let xv = self.value(x);
        let c = xv.cols;
        assert_eq!(xv.rows, batch * h * w, "im2col3 layout");
        let mut out = Tensor::zeros(xv.rows, 9 * c);
        for (dst, src) in im2col_pairs(batch, h, w) {
            out.data[dst * c..(dst + 1) * c].copy_from_slice(xv.row(src));
        }
        let ng = self.ng(&[x]);
        self.push(out, Op::Im2Col3 { x, batch, h, w }, ng)
    }

    /// Interleaves per-sample row groups: sample `s` of the output is the
    /// concatenation of sample `s` of every part.
    pub fn concat_segments(&mut self, parts: &[Var], batch: usize) -> Var {
        let cols = self.shape(parts[0]).1;
        let lens: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape(p);
                assert!(c == cols && r % batch == 0, "concat_segments layout");
                r / batch
            })
            .collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(batch * total * cols);
        for s in 0..batch {
            for (&p, &len) in parts.iter().zip(&lens) {
                let v = &self.value(p).data;
                data.extend_from_slice(&v[s * len * cols..(s + 1) * len * cols]);
            }
        }
        let ng = self.ng(parts);
        self.push(
            Tensor::from_vec(batch * total, cols, data),
            Op::ConcatSegments {
                parts: parts.to_vec(),
                batch,
            },
            ng,
        )
    }

    /// Rows `start..start+len` of every sample.
    pub fn slice_segments(&mut self, x: Var, batch: usize, start: usize, len: usize) -> Var {
        let (rows, cols) = self.shape(x);
        assert!(rows % batch == 0, "slice_segments layout");
        let n = rows / batch;
        assert!(start + len <= n, "slice_segments out of range");
        let v = &self.value(x).data;
        let mut data = Vec::with_capacity(batch * len * cols);
        for s in 0..batch {
            data.extend_from_slice(&v[(s * n + start) * cols..(s * n + start + len) * cols]);
        }
        let ng = self.ng(&[x]);
        self.push(
            Tensor::from_vec(batch * len, cols, data),
            Op::SliceSegments {
                x,
                batch,
                start,
                len,
            },
            ng,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(xv.rows, len);
        for r in 0..xv.rows {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        let ng = self.ng(&[x]);
        self.push(out, Op::SliceCols(x, start), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + v.cols].copy_from_slice(v.row(r));
            }
            off += v.cols;
        }
        let ng = self.ng(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(x);
        assert_eq!(v.len(), rows * cols, "reshape size mismatch");
        let out = Tensor::from_vec(rows, cols, v.data.clone());
        let ng = self.ng(&[x]);
        self.push(out, Op::Reshape(x), ng)
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = xv.clone();
        for r in 0..xv.rows {
            let row = out.row_mut(r);
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let ng = self.ng(&[x]);
        self.push(out, Op::LogSoftmaxRows(x), ng)
    }

    /// Gathers single entries into an `n x 1` column.
    pub fn pick(&mut self, x: Var, idx: &[(usize, usize)]) -> Var {
        let xv = self.value(x);
        let data = idx.iter().map(|&(r, c)| xv.get(r, c)).collect();
        let out = Tensor::from_vec(idx.len(), 1, data);
        let ng = self.ng(&[x]);
        self.push(out, Op::Pick(x, idx.to_vec()), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        let ng = self.ng(&[x]);
        self.push(Tensor::scalar(s), Op::SumAll(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Mean over each sample's rows: `[batch * p, k] -> [batch, k]`.
    pub fn mean_segments(&mut self, x: Var, batch: usize) -> Var {
        let xv = self.value(x);
        assert!(xv.rows % batch == 0, "mean_segments layout");
        let p = xv.rows / batch;
        let mut out = Tensor::zeros(batch, xv.cols);
        for s in 0..batch {
            for r in 0..p {
                for (o, v) in out.row_mut(s).iter_mut().zip(xv.row(s * p + r)) {
                    *o += v;
                }
            }
            for o in out.row_mut(s) {
                *o /= p as f64;
            }
        }
        let ng = self.ng(&[x]);
        self.push(out, Op::MeanSegments(x, batch), ng)
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) if n.needs_grad => grads[i].as_ref().map(|g| (id, g.clone())),
                _ => None,
            })
            .collect();
        Gradients { grads, params }
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn backward_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &self.nodes[i].op {
            Op::Const | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.val(*a).shape();
                let n = self.val(*b).cols;
                if wants(*a) {
                    let mut ga = Tensor::zeros(m, k);
                    gemm(
                        m,
                        n,
                        k,
                        (&g.data, 0, n as isize, 1),
                        (&self.val(*b).data, 0, 1, n as isize),
                        0.0,
                        (&mut ga.data, 0, k as isize, 1),
                    );
                    acc(*a, ga);
                }
                if wants(*b) {
                    let mut gb = Tensor::zeros(k, n);
                    gemm(
                        k,
                        m,
                        n,
                        (&self.val(*a).data, 0, 1, k as isize),
                        (&g.data, 0, n as isize, 1),
                        0.0,
                        (&mut gb.data, 0, n as isize, 1),
                    );
                    acc(*b, gb);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                if wants(*b) {
                    acc(*b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g.zip(self.val(*b), |x, y| x * y));
                }
                if wants(*b) {
                    acc(*b, g.zip(self.val(*a), |x, y| x * y));
                }
            }
            Op::Div(a, b) => {
                let bv = self.val(*b);
                if wants(*a) {
                    acc(*a, g.zip(bv, |x, y| x / y));
                }
                if wants(*b) {
                    let t = g.zip(out, |gg, o| gg * o).zip(bv, |x, y| -x / y);
                    acc(*b, t);
                }
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if wants(*row) {
                    let mut gr = Tensor::zeros(1, g.cols);
                    for chunk in g.data.chunks(g.cols) {
                        for (o, v) in gr.data.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                    acc(*row, gr);
                }
            }
            Op::AddTiled(a, block) => {
                acc(*a, g.clone());
                if wants(*block) {
                    acc(*block, fold_blocks(g, self.val(*block).rows));
                }
            }
            Op::TileRows(block) => {
                acc(*block, fold_blocks(g, self.val(*block).rows));
            }
            Op::Scale(a, s) => acc(*a, g.map(|v| v * s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => acc(*a, g.zip(self.val(*a), |gg, x| if x > 0.0 { gg } else { 0.0 })),
            Op::Gelu(a) => acc(*a, g.zip(self.val(*a), |gg, x| gg * gelu_grad(x))),
            Op::Sigmoid(a) => acc(*a, g.zip(out, |gg, y| gg * y * (1.0 - y))),
            Op::Exp(a) => acc(*a, g.zip(out, |gg, y| gg * y)),
            Op::Log(a) => acc(*a, g.zip(self.val(*a), |gg, x| gg / x)),
            Op::Square(a) => acc(*a, g.zip(self.val(*a), |gg, x| 2.0 * gg * x)),
            Op::Abs(a) => acc(*a, g.zip(self.val(*a), |gg, x| gg * sign(x))),
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                acc(
                    *a,
                    g.zip(self.val(*a), |gg, x| if x >= lo && x <= hi { gg } else { 0.0 }),
                )
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let mask = av.zip(bv, |x, y| if x <= y { 1.0 } else { 0.0 });
                acc(*a, g.zip(&mask, |gg, m| gg * m));
                acc(*b, g.zip(&mask, |gg, m| gg * (1.0 - m)));
            }
            Op::Maximum(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let mask = av.zip(bv, |x, y| if x >= y { 1.0 } else { 0.0 });
                acc(*a, g.zip(&mask, |gg, m| gg * m));
                acc(*b, g.zip(&mask, |gg, m| gg * (1.0 - m)));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                rstd,
            } => {
                let xv = self.val(*x);
                let gm = &self.val(*gamma).data;
                let (rows, cols) = xv.shape();
                let mut gx = Tensor::zeros(rows, cols);
                let mut gg = Tensor::zeros(1, cols);
                let mut gb = Tensor::zeros(1, cols);
                let n = cols as f64;
                for r in 0..rows {
                    let rs = rstd[r];
                    let row = xv.row(r);
                    let mean = row.iter().sum::<f64>() / n;
                    let go = g.row(r);
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for c in 0..cols {
                        let xhat = (row[c] - mean) * rs;
                        let dxh = go[c] * gm[c];
                        s1 += dxh;
                        s2 += dxh * xhat;
                        gg.data[c] += go[c] * xhat;
                        gb.data[c] += go[c];
                    }
                    for c in 0..cols {
                        let xhat = (row[c] - mean) * rs;
                        gx.data[r * cols + c] = rs * (go[c] * gm[c] - s1 / n - xhat * s2 / n);
                    }
                }
                acc(*x, gx);
                acc(*gamma, gg);
                acc(*beta, gb);
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                batch,
                groups,
                rstd,
            } => {
                let xv = self.val(*x);
                let gm = &self.val(*gamma).data;
                let (rows, cols) = xv.shape();
                let positions = rows / batch;
                let cg = cols / groups;
                let n = (positions * cg) as f64;
                let mut gx = Tensor::zeros(rows, cols);
                let mut gg = Tensor::zeros(1, cols);
                let mut gb = Tensor::zeros(1, cols);
                for s in 0..*batch {
                    for grp in 0..*groups {
                        let rs = rstd[s * groups + grp];
                        let cr = grp * cg..(grp + 1) * cg;
                        let mut mean = 0.0;
                        for p in 0..positions {
                            mean += xv.row(s * positions + p)[cr.clone()].iter().sum::<f64>();
                        }
                        mean /= n;
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for p in 0..positions {
                            let r = s * positions + p;
                            for c in cr.clone() {
                                let xhat = (xv.data[r * cols + c] - mean) * rs;
                                let go = g.data[r * cols + c];
                                let dxh = go * gm[c];
                                s1 += dxh;
                                s2 += dxh * xhat;
                                gg.data[c] += go * xhat;
                                gb.data[c] += go;
                            }
                        }
                        for p in 0..positions {
                            let r = s * positions + p;
                            for c in cr.clone() {
                                let xhat = (xv.data[r * cols + c] - mean) * rs;
                                let dxh = g.data[r * cols + c] * gm[c];
                                gx.data[r * cols + c] = rs * (dxh - s1 / n - xhat * s2 / n);
                            }
                        }
                    }
                }
                acc(*x, gx);
                acc(*gamma, gg);
                acc(*beta, gb);
            }
            Op::Attention {
                qkv,
                batch,
                heads,
                probs,
            } => {
                let src = &self.val(*qkv).data;
                let (rows, c3) = self.val(*qkv).shape();
                let c = c3 / 3;
                let d = c / heads;
                let n = rows / batch;
                let scale = 1.0 / (d as f64).sqrt();
                let mut gq = Tensor::zeros(rows, c3);
                let mut dp = vec![0.0; n * n];
                for s in 0..*batch {
                    for h in 0..*heads {
                        let base = s * n * c3;
                        let p = &probs[(s * heads + h) * n * n..(s * heads + h + 1) * n * n];
                        let go = (&g.data[..], s * n * c + h * d, c as isize, 1isize);
                        // dV = P^T dO
                        gemm(
                            n,
                            n,
                            d,
                            (p, 0, 1, n as isize),
                            go,
                            0.0,
                            (&mut gq.data, base + 2 * c + h * d, c3 as isize, 1),
                        );
                        // dP = dO V^T
                        gemm(
                            n,
                            d,
                            n,
                            go,
                            (src, base + 2 * c + h * d, 1, c3 as isize),
                            0.0,
                            (&mut dp, 0, n as isize, 1),
                        );
                        for (prow, drow) in p.chunks(n).zip(dp.chunks_mut(n)) {
                            let dot: f64 = prow.iter().zip(drow.iter()).map(|(a, b)| a * b).sum();
                            for (dv, pv) in drow.iter_mut().zip(prow) {
                                *dv = pv * (*dv - dot) * scale;
                            }
                        }
                        // dQ = dS K
                        gemm(
                            n,
                            n,
                            d,
                            (&dp, 0, n as isize, 1),
                            (src, base + c + h * d, c3 as isize, 1),
                            0.0,
                            (&mut gq.data, base + h * d, c3 as isize, 1),
                        );
                        // dK = dS^T Q
                        gemm(
                            n,
                            n,
                            d,
                            (&dp, 0, 1, n as isize),
                            (src, base + h * d, c3 as isize, 1),
                            0.0,
                            (&mut gq.data, base + c + h * d, c3 as isize, 1),
                        );
                    }
                }
                acc(*qkv, gq);
            }
            Op::Im2Col3 { x, batch, h, w } => {
                let c = self.val(*x).cols;
                let mut gx = Tensor::zeros(self.val(*x).rows, c);
                for (dst, src) in im2col_pairs(*batch, *h, *w) {
                    for k in 0..c {
                        gx.data[src * c + k] += g.data[dst * c + k];
                    }
                }
                acc(*x, gx);
            }
            Op::ConcatSegments { parts, batch } => {
                let cols = g.cols;
                let lens: Vec<usize> = parts.iter().map(|p| self.val(*p).rows / batch).collect();
                let total: usize = lens.iter().sum();
                let mut off = 0;
                for (&p, &len) in parts.iter().zip(&lens) {
                    if wants(p) {
                        let mut gp = Tensor::zeros(batch * len, cols);
                        for s in 0..*batch {
                            let from = (s * total + off) * cols;
                            gp.data[s * len * cols..(s + 1) * len * cols]
                                .copy_from_slice(&g.data[from..from + len * cols]);
                        }
                        acc(p, gp);
                    }
                    off += len;
                }
            }
            Op::SliceSegments {
                x,
                batch,
                start,
                len,
            } => {
                let (rows, cols) = self.val(*x).shape();
                let n = rows / batch;
                let mut gx = Tensor::zeros(rows, cols);
                for s in 0..*batch {
                    let to = (s * n + start) * cols;
                    gx.data[to..to + len * cols]
                        .copy_from_slice(&g.data[s * len * cols..(s + 1) * len * cols]);
                }
                acc(*x, gx);
            }
            Op::SliceCols(x, start) => {
                let (rows, cols) = self.val(*x).shape();
                let mut gx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    gx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                }
                acc(*x, gx);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (rows, cols) = self.val(p).shape();
                    if wants(p) {
                        let mut gp = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        acc(p, gp);
                    }
                    off += cols;
                }
            }
            Op::Reshape(x) => {
                let (rows, cols) = self.val(*x).shape();
                acc(*x, Tensor::from_vec(rows, cols, g.data.clone()));
            }
            Op::LogSoftmaxRows(x) => {
                let mut gx = g.clone();
                for r in 0..g.rows {
                    let gs: f64 = g.row(r).iter().sum();
                    for (v, o) in gx.row_mut(r).iter_mut().zip(out.row(r)) {
                        *v -= o.exp() * gs;
                    }
                }
                acc(*x, gx);
            }
            Op::Pick(x, idx) => {
                let (rows, cols) = self.val(*x).shape();
                let mut gx = Tensor::zeros(rows, cols);
                for (k, &(r, c)) in idx.iter().enumerate() {
                    gx.data[r * cols + c] += g.data[k];
                }
                acc(*x, gx);
            }
            Op::SumAll(x) => {
                let (rows, cols) = self.val(*x).shape();
                acc(*x, Tensor::filled(rows, cols, g.item()));
            }
            Op::MeanSegments(x, batch) => {
                let (rows, cols) = self.val(*x).shape();
                let p = rows / batch;
                let mut gx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let s = r / p;
                    for (o, v) in gx.row_mut(r).iter_mut().zip(g.row(s)) {
                        *o = v / p as f64;
                    }
                }
                acc(*x, gx);
            }
        }
    }
}

fn fold_blocks(g: &Tensor, block_rows: usize) -> Tensor {
    let mut out = Tensor::zeros(block_rows, g.cols);
    for chunk in g.data.chunks(block_rows * g.cols) {
        for (o, v) in out.data.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
}

/// `(destination block, source row)` pairs for a zero-padded 3x3 gather.
/// The destination block index is `row * 9 + tap`.
fn im2col_pairs(batch: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..batch).flat_map(move |s| {
        (0..h).flat_map(move |y| {
            (0..w).flat_map(move |x| {
                (0..9usize).filter_map(move |tap| {
                    let yy = y as isize + (tap / 3) as isize - 1;
                    let xx = x as isize + (tap % 3) as isize - 1;
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        return None;
                    }
                    let row = (s * h + y) * w + x;
                    let src = (s * h + yy as usize) * w + xx as usize;
                    Some((row * 9 + tap, src))
                })
            })
        })
    })
}

fn gelu_inner(x: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    K * (x + 0.044715 * x * x * x)
}

fn gelu_grad(x: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4;
    let t = gelu_inner(x).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * K * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !mx.is_finite() {
        return mx;
    }
    mx + xs.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradients of every trainable parameter leaf that the loss depends on.
    /// A parameter bound more than once appears more than once.
    pub fn params(&self) -> &[(ParamId, Tensor)] {
        &self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Checks d(loss)/d(input) for every entry of every input against central
    /// differences. `build` maps leaf vars to a scalar.
    fn check(inputs: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| g.param(ParamId(i), t, true))
            .collect();
        let loss = build(&mut g, &vars);
        let grads = g.backward(loss);
        let eval = |inputs: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(i, t)| g.param(ParamId(i), t, true))
                .collect();
            let l = build(&mut g, &vars);
            g.value(l).item()
        };
        let eps = 1e-6;
        for (k, t) in inputs.iter().enumerate() {
            let analytic = grads.wrt(vars[k]).cloned().unwrap_or(Tensor::zeros(t.rows, t.cols));
            for idx in 0..t.len() {
                let mut plus = inputs.clone();
                plus[k].data[idx] += eps;
                let mut minus = inputs.clone();
                minus[k].data[idx] -= eps;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let an = analytic.data[idx];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                assert!(err < 1e-6, "input {k}[{idx}]: analytic {an} vs fd {fd}");
            }
        }
    }

    /// Random projection to a scalar so every output entry matters.
    fn project(g: &mut Graph, v: Var, seed: u64) -> Var {
        let (r, c) = g.shape(v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = g.constant(rand_tensor(&mut rng, r, c));
        let m = g.mul(v, w);
        g.sum(m)
    }

    #[test]
    fn matmul_and_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        check(
            vec![rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 4, 5), rand_tensor(&mut rng, 1, 5)],
            |g, v| {
                let m = g.matmul(v[0], v[1]);
                let b = g.add_row(m, v[2]);
                project(g, b, 7)
            },
        );
    }

    #[test]
    fn elementwise_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_tensor(&mut rng, 3, 3);
        let b = rand_tensor(&mut rng, 3, 3).map(|v| v.abs() + 0.5);
        check(vec![a, b], |g, v| {
            let s = g.sigmoid(v[0]);
            let e = g.exp(v[0]);
            let l = g.log(v[1]);
            let d = g.div(s, v[1]);
            let ge = g.gelu(v[0]);
            let sq = g.square(v[0]);
            let mn = g.minimum(e, v[1]);
            let mx = g.maximum(l, s);
            let parts = [d, ge, sq, mn, mx];
            let mut acc = parts[0];
            for &p in &parts[1..] {
                acc = g.add(acc, p);
            }
            let sub = g.sub(acc, v[0]);
            let sc = g.scale(sub, 0.7);
            project(g, sc, 3)
        });
    }

    #[test]
    fn norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check(
            vec![rand_tensor(&mut rng, 4, 6), rand_tensor(&mut rng, 1, 6), rand_tensor(&mut rng, 1, 6)],
            |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2]);
                project(g, y, 11)
            },
        );
        check(
            vec![rand_tensor(&mut rng, 8, 6), rand_tensor(&mut rng, 1, 6), rand_tensor(&mut rng, 1, 6)],
            |g, v| {
                let y = g.group_norm(v[0], v[1], v[2], 2, 3);
                project(g, y, 12)
            },
        );
    }

    #[test]
    fn attention_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        check(vec![rand_tensor(&mut rng, 2 * 5, 3 * 4)], |g, v| {
            let y = g.attention(v[0], 2, 2);
            project(g, y, 13)
        });
    }

    #[test]
    fn attention_rows_are_convex_combinations() {
        let mut g = Graph::new();
        let mut qkv = Tensor::zeros(3, 6);
        for r in 0..3 {
            qkv.data[r * 6 + 4] = r as f64;
            qkv.data[r * 6 + 5] = 1.0;
        }
        let x = g.constant(qkv);
        let y = g.attention(x, 1, 1);
        // zero queries give uniform attention: every output is the mean of V
        for r in 0..3 {
            assert!((g.value(y).get(r, 0) - 1.0).abs() < 1e-12);
            assert!((g.value(y).get(r, 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_and_layout_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        check(
            vec![rand_tensor(&mut rng, 4, 3), rand_tensor(&mut rng, 6, 3), rand_tensor(&mut rng, 3, 3)],
            |g, v| {
                let cat = g.concat_segments(&[v[0], v[1]], 2);
                let sl = g.slice_segments(cat, 2, 1, 3);
                let t = g.tile_rows(v[2], 2);
                let s = g.add(sl, t);
                let at = g.add_tiled(s, v[2]);
                let sc = g.slice_cols(at, 1, 2);
                let cc = g.concat_cols(&[sc, at]);
                let ms = g.mean_segments(cc, 2);
                let r = g.reshape(ms, 5, 2);
                project(g, r, 17)
            },
        );
    }

    #[test]
    fn im2col_and_softmax_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        check(vec![rand_tensor(&mut rng, 2 * 3 * 3, 2)], |g, v| {
            let cols = g.im2col3(v[0], 2, 3, 3);
            let r = g.reshape(cols, 6, 54);
            let ls = g.log_softmax_rows(r);
            let p = g.pick(ls, &[(0, 3), (5, 10), (0, 3)]);
            let a = g.abs(p);
            let c = g.clamp(v[0], -0.5, 0.5);
            let rl = g.relu(c);
            let s1 = g.sum(a);
            let s2 = project(g, rl, 19);
            let tot = g.add(s1, s2);
            g.add_scalar(tot, 1.0)
        });
    }

    #[test]
    fn im2col_zero_pads_borders() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]));
        let c = g.im2col3(x, 1, 2, 2);
        // top-left position: taps (1,1),(1,2),(2,1),(2,2) are in range
        assert_eq!(g.value(c).row(0), &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn frozen_inputs_receive_no_gradient() {
        let mut g = Graph::new();
        let a = g.param(ParamId(0), &Tensor::filled(2, 2, 1.0), false);
        let b = g.param(ParamId(1), &Tensor::filled(2, 2, 2.0), true);
        let m = g.mul(a, b);
        let s = g.sum(m);
        let grads = g.backward(s);
        assert!(grads.wrt(a).is_none());
        assert_eq!(grads.params().len(), 1);
        assert_eq!(grads.params()[0].0, ParamId(1));
    }
}
