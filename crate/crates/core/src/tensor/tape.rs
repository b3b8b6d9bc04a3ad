use super::{matmul_into, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Concat(Vec<Var>),
    Relu(Var),
    Exp(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>, usize),
    BlockSum(Var, usize),
    BlockBroadcast(Var, usize),
    Sum(Var),
    Mean(Var),
    LogSoftmaxRows(Var),
    PickPerRow(Var, Vec<usize>),
    NormalizeRows(Var, Vec<f64>),
    NormalizeCols(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Execution-ordered record of primitive operations.
///
/// Values are appended in the order ops run, so the record is already in
/// topological order and [`Tape::backward`] visits each op once in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    t.dims2().map_err(|_| TensorError::Rank {
        op,
        expected: 2,
        got: t.shape().to_vec(),
    })
}

fn check_segments(op: &'static str, seg: &[usize], rows: usize, num_segments: usize) -> Result<(), TensorError> {
    if seg.len() != rows {
        return Err(TensorError::Shape {
            op,
            lhs: vec![rows],
            rhs: vec![seg.len()],
        });
    }
    if let Some(&bad) = seg.iter().find(|&&s| s >= num_segments) {
        return Err(TensorError::Index {
            op,
            index: bad,
            len: num_segments,
        });
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True when every recorded value (not gradient) is finite.
    pub fn all_finite(&self) -> bool {
        self.nodes.iter().all(|n| n.value.all_finite())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient of the last [`Tape::backward`] loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k) = rank2("matmul", ta)?;
        let (k2, m) = rank2("matmul", tb)?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(ta.data(), tb.data(), &mut out, n, k, m);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        rank2("transpose", self.value(a))?;
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    fn zip_same(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op_name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
            .expect("map preserves shape");
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, f64::abs, Op::Abs(a))
    }

    /// Clamps into `[lo, hi]`. The gradient is 1 strictly inside the interval
    /// and 0 on or beyond either bound.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// `x (n x d) + b (d)` with `b` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(b));
        let (_, d) = rank2("add_row", tx)?;
        if tb.len() != d {
            return Err(shape_err("add_row", tx, tb));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d.max(1)) {
            for (v, bv) in row.iter_mut().zip(tb.data()) {
                *v += bv;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddRow(x, b), rg))
    }

    /// `x (n x d) * g (d)` elementwise with `g` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var, TensorError> {
        let (tx, tg) = (self.value(x), self.value(g));
        let (_, d) = rank2("mul_row", tx)?;
        if tg.len() != d {
            return Err(shape_err("mul_row", tx, tg));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d.max(1)) {
            for (v, gv) in row.iter_mut().zip(tg.data()) {
                *v *= gv;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(g);
        Ok(self.push(out, Op::MulRow(x, g), rg))
    }

    /// `x W^T + b`, the affine map with weights stored as `out x in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let wt = self.transpose(w)?;
        let y = self.matmul(x, wt)?;
        self.add_row(y, b)
    }

    /// Concatenates 2-d tensors with equal row counts along the last dimension.
    pub fn concat_last_dim(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat_last_dim: no inputs".into()))?;
        let (n, _) = rank2("concat_last_dim", self.value(*first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = rank2("concat_last_dim", self.value(p))?;
            if r != n {
                return Err(shape_err("concat_last_dim", self.value(*first), self.value(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for (&p, &c) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(n, total, data)?, Op::Concat(parts.to_vec()), rg))
    }

    /// Row gather: output row `r` is input row `index[r]`.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, _) = rank2("gather_rows", tx)?;
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(TensorError::Index {
                op: "gather_rows",
                index: bad,
                len: n,
            });
        }
        let out = tx.gather_rows(index);
        let rg = self.rg(x);
        Ok(self.push(out, Op::GatherRows(x, index.to_vec()), rg))
    }

    /// Sums rows of `x (m x c)` into `num_segments` buckets given by `seg`.
    /// Empty segments yield zero rows.
    pub fn segment_sum(&mut self, x: Var, seg: &[usize], num_segments: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, c) = rank2("segment_sum", tx)?;
        check_segments("segment_sum", seg, m, num_segments)?;
        let mut out = vec![0.0; num_segments * c];
        for (e, &s) in seg.iter().enumerate() {
            for (o, v) in out[s * c..(s + 1) * c].iter_mut().zip(tx.row(e)) {
                *o += v;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(num_segments, c, out)?,
            Op::SegmentSum(x, seg.to_vec()),
            rg,
        ))
    }

    /// Per-segment mean of rows; empty segments yield zero rows.
    pub fn segment_mean(&mut self, x: Var, seg: &[usize], num_segments: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, c) = rank2("segment_mean", tx)?;
        check_segments("segment_mean", seg, m, num_segments)?;
        let mut counts = vec![0usize; num_segments];
        for &s in seg {
            counts[s] += 1;
        }
        let mut out = vec![0.0; num_segments * c];
        for (e, &s) in seg.iter().enumerate() {
            let inv = 1.0 / counts[s] as f64;
            for (o, v) in out[s * c..(s + 1) * c].iter_mut().zip(tx.row(e)) {
                *o += v * inv;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(num_segments, c, out)?,
            Op::SegmentMean(x, seg.to_vec(), counts),
            rg,
        ))
    }

    /// Softmax of each column of `x (m x c)` taken independently within every
    /// segment. Uses per-segment max subtraction.
    pub fn segment_softmax(&mut self, x: Var, seg: &[usize], num_segments: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, c) = rank2("segment_softmax", tx)?;
        check_segments("segment_softmax", seg, m, num_segments)?;
        let mut max = vec![f64::NEG_INFINITY; num_segments * c];
        for (e, &s) in seg.iter().enumerate() {
            for (mx, &v) in max[s * c..(s + 1) * c].iter_mut().zip(tx.row(e)) {
                if v > *mx {
                    *mx = v;
                }
            }
        }
        let mut out = vec![0.0; m * c];
        let mut denom = vec![0.0; num_segments * c];
        for (e, &s) in seg.iter().enumerate() {
            for j in 0..c {
                let z = (tx.data()[e * c + j] - max[s * c + j]).exp();
                out[e * c + j] = z;
                denom[s * c + j] += z;
            }
        }
        for (e, &s) in seg.iter().enumerate() {
            for j in 0..c {
                out[e * c + j] /= denom[s * c + j];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(m, c, out)?,
            Op::SegmentSoftmax(x, seg.to_vec(), num_segments),
            rg,
        ))
    }

    /// Sums consecutive column blocks: `(m x h*block) -> (m x h)`.
    pub fn block_sum(&mut self, x: Var, block: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, d) = rank2("block_sum", tx)?;
        if block == 0 || d % block != 0 {
            return Err(TensorError::Invalid(format!(
                "block_sum: width {d} not divisible by block {block}"
            )));
        }
        let h = d / block;
        let out: Vec<f64> = tx.data().chunks(block).map(|c| c.iter().sum()).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(m, h, out)?, Op::BlockSum(x, block), rg))
    }

    /// Repeats every column `block` times: `(m x h) -> (m x h*block)`.
    pub fn block_broadcast(&mut self, x: Var, block: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (m, h) = rank2("block_broadcast", tx)?;
        let mut out = Vec::with_capacity(m * h * block);
        for &v in tx.data() {
            out.extend(std::iter::repeat_n(v, block));
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(m, h * block, out)?, Op::BlockBroadcast(x, block), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Row-wise log-softmax of `x (n x c)`.
    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, c) = rank2("log_softmax_rows", tx)?;
        let mut out = Vec::with_capacity(n * c);
        for i in 0..n {
            let row = tx.row(i);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|v| v - lse));
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(n, c, out)?, Op::LogSoftmaxRows(x), rg))
    }

    /// `out[i] = x[i, cols[i]]`, a 1-d tensor of length `n`.
    pub fn pick_per_row(&mut self, x: Var, cols: &[usize]) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, c) = rank2("pick_per_row", tx)?;
        if cols.len() != n {
            return Err(TensorError::Shape {
                op: "pick_per_row",
                lhs: vec![n],
                rhs: vec![cols.len()],
            });
        }
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(TensorError::Index {
                op: "pick_per_row",
                index: bad,
                len: c,
            });
        }
        let out = cols.iter().enumerate().map(|(i, &j)| tx.get(i, j)).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::vector(out), Op::PickPerRow(x, cols.to_vec()), rg))
    }

    /// `(x - mean) / sqrt(var + eps)` over each row (population variance).
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, d) = rank2("normalize_rows", tx)?;
        let mut out = vec![0.0; n * d];
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = tx.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                out[i * d + j] = (row[j] - mean) * r;
            }
            inv_std.push(r);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(n, d, out)?, Op::NormalizeRows(x, inv_std), rg))
    }

    /// `(x - mean) / sqrt(var + eps)` over each column (population variance).
    /// Returns the normalized tensor plus the per-column mean and variance.
    pub fn normalize_cols(&mut self, x: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>), TensorError> {
        let tx = self.value(x);
        let (n, d) = rank2("normalize_cols", tx)?;
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(tx.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(tx.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                out[i * d + j] = (tx.get(i, j) - mean[j]) * inv_std[j];
            }
        }
        let rg = self.rg(x);
        let v = self.push(Tensor::matrix(n, d, out)?, Op::NormalizeCols(x, inv_std), rg);
        Ok((v, mean, var))
    }

    /// Populates gradients of `loss` with respect to every recorded value that
    /// requires one. Repeated uses of a value accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[idx].value;
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (n, k) = (ta.rows(), ta.cols());
                let m = tb.cols();
                acc(*a, &|ga| {
                    // ga += g (n x m) * b^T (m x k)
                    let bt = tb.transpose();
                    matmul_into(g, bt.data(), ga, n, m, k);
                });
                acc(*b, &|gb| {
                    // gb += a^T (k x n) * g (n x m)
                    for (a_row, g_row) in ta.data().chunks_exact(k).zip(g.chunks_exact(m)) {
                        for (&av, gb_row) in a_row.iter().zip(gb.chunks_exact_mut(m)) {
                            if av == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gb_row.iter_mut().zip(g_row) {
                                *o += av * gv;
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (out.rows(), out.cols());
                acc(*a, &|ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &|ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &|gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &|ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &|gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &|ga| {
                    for ((x, gv), bv) in ga.iter_mut().zip(g).zip(tb) {
                        *x += gv * bv;
                    }
                });
                acc(*b, &|gb| {
                    for ((x, gv), av) in gb.iter_mut().zip(g).zip(ta) {
                        *x += gv * av;
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &|ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += s * y)),
            Op::AddRow(x, b) => {
                let d = out.cols();
                acc(*x, &|gx| gx.iter_mut().zip(g).for_each(|(p, q)| *p += q));
                acc(*b, &|gb| {
                    for row in g.chunks(d.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(p, q)| *p += q);
                    }
                });
            }
            Op::MulRow(x, gm) => {
                let d = out.cols();
                let (tx, tg) = (nodes[x.0].value.data(), nodes[gm.0].value.data());
                acc(*x, &|gx| {
                    for (e, v) in gx.iter_mut().enumerate() {
                        *v += g[e] * tg[e % d];
                    }
                });
                acc(*gm, &|gg| {
                    for (e, gv) in g.iter().enumerate() {
                        gg[e % d] += gv * tx[e];
                    }
                });
            }
            Op::Concat(parts) => {
                let (n, total) = (out.rows(), out.cols());
                let mut offset = 0;
                for p in parts {
                    let c = nodes[p.0].value.cols();
                    acc(*p, &|gp| {
                        for i in 0..n {
                            for j in 0..c {
                                gp[i * c + j] += g[i * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::Relu(a) => {
                let ta = nodes[a.0].value.data();
                acc(*a, &|ga| {
                    for ((x, gv), av) in ga.iter_mut().zip(g).zip(ta) {
                        if *av > 0.0 {
                            *x += gv;
                        }
                    }
                });
            }
            Op::Exp(a) => acc(*a, &|ga| {
                for ((x, gv), y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += gv * y;
                }
            }),
            Op::Abs(a) => {
                let ta = nodes[a.0].value.data();
                acc(*a, &|ga| {
                    for ((x, gv), av) in ga.iter_mut().zip(g).zip(ta) {
                        if *av > 0.0 {
                            *x += gv;
                        } else if *av < 0.0 {
                            *x -= gv;
                        }
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let ta = nodes[a.0].value.data();
                acc(*a, &|ga| {
                    for ((x, gv), av) in ga.iter_mut().zip(g).zip(ta) {
                        if *av > *lo && *av < *hi {
                            *x += gv;
                        }
                    }
                });
            }
            Op::GatherRows(x, index) => {
                let c = out.cols();
                acc(*x, &|gx| {
                    for (r, &i) in index.iter().enumerate() {
                        for j in 0..c {
                            gx[i * c + j] += g[r * c + j];
                        }
                    }
                });
            }
            Op::SegmentSum(x, seg) => {
                let c = out.cols();
                acc(*x, &|gx| {
                    for (e, &s) in seg.iter().enumerate() {
                        for j in 0..c {
                            gx[e * c + j] += g[s * c + j];
                        }
                    }
                });
            }
            Op::SegmentMean(x, seg, counts) => {
                let c = out.cols();
                acc(*x, &|gx| {
                    for (e, &s) in seg.iter().enumerate() {
                        let inv = 1.0 / counts[s] as f64;
                        for j in 0..c {
                            gx[e * c + j] += g[s * c + j] * inv;
                        }
                    }
                });
            }
            Op::SegmentSoftmax(x, seg, num_segments) => {
                let c = out.cols();
                let y = out.data();
                let mut dot = vec![0.0; num_segments * c];
                for (e, &s) in seg.iter().enumerate() {
                    for j in 0..c {
                        dot[s * c + j] += g[e * c + j] * y[e * c + j];
                    }
                }
                acc(*x, &|gx| {
                    for (e, &s) in seg.iter().enumerate() {
                        for j in 0..c {
                            gx[e * c + j] += y[e * c + j] * (g[e * c + j] - dot[s * c + j]);
                        }
                    }
                });
            }
            Op::BlockSum(x, block) => acc(*x, &|gx| {
                for (e, v) in gx.iter_mut().enumerate() {
                    *v += g[e / block];
                }
            }),
            Op::BlockBroadcast(x, block) => acc(*x, &|gx| {
                for (e, gv) in g.iter().enumerate() {
                    gx[e / block] += gv;
                }
            }),
            Op::Sum(x) => acc(*x, &|gx| gx.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(x) => {
                let inv = 1.0 / nodes[x.0].value.len() as f64;
                acc(*x, &|gx| gx.iter_mut().for_each(|v| *v += g[0] * inv));
            }
            Op::LogSoftmaxRows(x) => {
                let c = out.cols();
                acc(*x, &|gx| {
                    for (i, (grow, yrow)) in g.chunks(c).zip(out.data().chunks(c)).enumerate() {
                        let gs: f64 = grow.iter().sum();
                        for j in 0..c {
                            gx[i * c + j] += grow[j] - yrow[j].exp() * gs;
                        }
                    }
                });
            }
            Op::PickPerRow(x, cols) => {
                let c = nodes[x.0].value.cols();
                acc(*x, &|gx| {
                    for (i, &j) in cols.iter().enumerate() {
                        gx[i * c + j] += g[i];
                    }
                });
            }
            Op::NormalizeRows(x, inv_std) => {
                let d = out.cols();
                let y = out.data();
                acc(*x, &|gx| {
                    for (i, &r) in inv_std.iter().enumerate() {
                        let (grow, yrow) = (&g[i * d..(i + 1) * d], &y[i * d..(i + 1) * d]);
                        let gm = grow.iter().sum::<f64>() / d as f64;
                        let gym = grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            gx[i * d + j] += r * (grow[j] - gm - yrow[j] * gym);
                        }
                    }
                });
            }
            Op::NormalizeCols(x, inv_std) => {
                let (n, d) = (out.rows(), out.cols());
                let y = out.data();
                let mut gm = vec![0.0; d];
                let mut gym = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        gm[j] += g[i * d + j];
                        gym[j] += g[i * d + j] * y[i * d + j];
                    }
                }
                acc(*x, &|gx| {
                    for i in 0..n {
                        for j in 0..d {
                            let e = i * d + j;
                            gx[e] += inv_std[j] * (g[e] - gm[j] / n as f64 - y[e] * gym[j] / n as f64);
                        }
                    }
                });
            }
        }
    }
}
