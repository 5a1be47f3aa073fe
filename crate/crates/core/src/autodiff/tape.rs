use super::matrix::{self, Matrix};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    /// Parameter block starting at `offset` in the flat parameter vector.
    Param {
        offset: usize,
    },
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softplus(Var),
    Softmax {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        rstd: Vec<f64>,
    },
    Embed {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
    /// Sum over rows of `log_softmax(logits)[row, target]`, each term floored.
    PickLogProb {
        logits: Var,
        targets: Vec<usize>,
        floor: f64,
        clamped: Vec<bool>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param { .. } => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulBT(..) => "matmul_bt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::Gelu(..) => "gelu",
            Op::Softplus(..) => "softplus",
            Op::Softmax { .. } => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Embed { .. } => "embed",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Sum(..) => "sum",
            Op::PickLogProb { .. } => "pick_log_prob",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    label: &'static str,
}

/// Records matrix operations for reverse-mode differentiation.
///
/// Values are computed eagerly when an op is recorded. The first non-finite
/// value is remembered with its location so that callers can report where a
/// computation blew up instead of just that it did.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    label: &'static str,
    first_non_finite: Option<String>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tags subsequently recorded nodes, used in numeric error locations.
    pub fn set_label(&mut self, label: &'static str) {
        self.label = label;
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some(format!(
                "node {} ({}) in {}",
                self.nodes.len(),
                op.name(),
                if self.label.is_empty() {
                    "<unlabelled>"
                } else {
                    self.label
                }
            ));
        }
        self.nodes.push(Node {
            value,
            op,
            label: self.label,
        });
        Var(self.nodes.len() - 1)
    }

    /// Errors if any recorded value so far is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match &self.first_non_finite {
            Some(loc) => Err(Error::Numeric {
                location: format!("forward {loc}"),
            }),
            None => Ok(()),
        }
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m.get(0, 0)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Matrix::scalar(x))
    }

    pub fn param(&mut self, value: Matrix, offset: usize) -> Var {
        self.push(value, Op::Param { offset })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "sub shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds the `1 × n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let mut v = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!(b.rows(), 1);
        assert_eq!(b.cols(), v.cols(), "add_row width mismatch");
        for i in 0..v.rows() {
            for (x, y) in v.row_mut(i).iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|p| p * s).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push(v, Op::Scale(a, s))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|&p| matrix::gelu(p)).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push(v, Op::Gelu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|&p| matrix::softplus(p)).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push(v, Op::Softplus(a))
    }

    /// Row-wise softmax. With `causal`, row `i` only covers columns `0..=i`
    /// and the remaining entries are exactly zero.
    pub fn softmax(&mut self, a: Var, causal: bool) -> Var {
        let mut v = self.value(a).clone();
        let cols = v.cols();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let live = if causal { (i + 1).min(cols) } else { cols };
            matrix::softmax_in_place(&mut row[..live]);
            row[live..].iter_mut().for_each(|x| *x = 0.0);
        }
        self.push(v, Op::Softmax { x: a })
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let input = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut out = Matrix::zeros(input.rows(), input.cols());
        let mut rstd = Vec::with_capacity(input.rows());
        for i in 0..input.rows() {
            rstd.push(matrix::layer_norm_row(
                input.row(i),
                g.data(),
                b.data(),
                out.row_mut(i),
            ));
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                rstd,
            },
        )
    }

    /// Gathers rows of `table`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.row(id));
        }
        self.push(
            out,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        let mut out = Matrix::zeros(m.rows(), len);
        for i in 0..m.rows() {
            out.row_mut(i)
                .copy_from_slice(&m.row(i)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut at = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows(), rows, "concat row mismatch");
            for i in 0..rows {
                out.row_mut(i)[at..at + m.cols()].copy_from_slice(m.row(i));
            }
            at += m.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    /// `Σ_t max(log_softmax(logits_t)[target_t], floor)` as a `1 × 1` node.
    pub fn pick_log_prob(&mut self, logits: Var, targets: &[usize], floor: f64) -> Var {
        let m = self.value(logits);
        assert_eq!(m.rows(), targets.len(), "one target per logit row");
        let mut total = 0.0;
        let mut clamped = Vec::with_capacity(targets.len());
        for (t, &y) in targets.iter().enumerate() {
            let row = m.row(t);
            let lp = row[y] - matrix::log_sum_exp(row);
            if lp < floor {
                total += floor;
                clamped.push(true);
            } else {
                total += lp;
                clamped.push(false);
            }
        }
        self.push(
            Matrix::scalar(total),
            Op::PickLogProb {
                logits,
                targets: targets.to_vec(),
                floor,
                clamped,
            },
        )
    }

    /// Back-propagates from the scalar `root`, adding parameter gradients into
    /// `param_grad` at each parameter node's offset.
    pub fn backward(&self, root: Var, param_grad: &mut [f64]) -> Result<()> {
        self.check_finite()?;
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward needs a scalar root"
        );
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !g.is_finite() {
                return Err(Error::Numeric {
                    location: format!(
                        "backward node {idx} ({}) in {}",
                        self.nodes[idx].op.name(),
                        self.nodes[idx].label
                    ),
                });
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param { offset } => {
                    for (dst, src) in param_grad[*offset..offset + g.data().len()]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *dst += src;
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_bt(self.value(*b));
                    let db = self.value(*a).matmul_at(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulBT(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.matmul_at(self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    let neg = map(&g, |x| -x);
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let da = zip_map(&g, y, |p, q| p * q);
                    let db = zip_map(&g, x, |p, q| p * q);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRow(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, x) in db.data_mut().iter_mut().zip(g.row(i)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, *a, map(&g, |x| x * s));
                }
                Op::Gelu(a) => {
                    let d = zip_map(&g, self.value(*a), |p, x| p * matrix::gelu_grad(x));
                    accumulate(&mut grads, *a, d);
                }
                Op::Softplus(a) => {
                    let d = zip_map(&g, self.value(*a), |p, x| p * matrix::sigmoid(x));
                    accumulate(&mut grads, *a, d);
                }
                Op::Softmax { x, .. } => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let inner = matrix::dot(yr, gr);
                        for ((o, yv), gv) in d.row_mut(i).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - inner);
                        }
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    rstd,
                } => {
                    let input = self.value(*x);
                    let gam = self.value(*gamma);
                    let n = input.cols() as f64;
                    let mut dx = Matrix::zeros(input.rows(), input.cols());
                    let mut dgamma = Matrix::zeros(1, input.cols());
                    let mut dbeta = Matrix::zeros(1, input.cols());
                    let mut xhat = vec![0.0; input.cols()];
                    let mut dxhat = vec![0.0; input.cols()];
                    for i in 0..input.rows() {
                        let row = input.row(i);
                        let mean = row.iter().sum::<f64>() / n;
                        for (h, v) in xhat.iter_mut().zip(row) {
                            *h = (v - mean) * rstd[i];
                        }
                        let gr = g.row(i);
                        for j in 0..input.cols() {
                            dgamma.data_mut()[j] += gr[j] * xhat[j];
                            dbeta.data_mut()[j] += gr[j];
                            dxhat[j] = gr[j] * gam.data()[j];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dx = matrix::dot(&dxhat, &xhat) / n;
                        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
                            *o = rstd[i] * (dxhat[j] - mean_d - xhat[j] * mean_dx);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dgamma);
                    accumulate(&mut grads, *beta, dbeta);
                }
                Op::Embed { table, ids } => {
                    let t = self.value(*table);
                    let mut d = Matrix::zeros(t.rows(), t.cols());
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, v) in d.row_mut(id).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *table, d);
                }
                Op::SliceCols { x, start } => {
                    let m = self.value(*x);
                    let mut d = Matrix::zeros(m.rows(), m.cols());
                    for i in 0..m.rows() {
                        d.row_mut(i)[*start..start + g.cols()].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let m = self.value(*p);
                        let mut d = Matrix::zeros(m.rows(), m.cols());
                        for i in 0..m.rows() {
                            d.row_mut(i).copy_from_slice(&g.row(i)[at..at + m.cols()]);
                        }
                        at += m.cols();
                        accumulate(&mut grads, *p, d);
                    }
                }
                Op::Sum(a) => {
                    let m = self.value(*a);
                    let s = g.get(0, 0);
                    accumulate(
                        &mut grads,
                        *a,
                        Matrix::from_vec(m.rows(), m.cols(), vec![s; m.rows() * m.cols()]),
                    );
                }
                Op::PickLogProb {
                    logits,
                    targets,
                    clamped,
                    ..
                } => {
                    let m = self.value(*logits);
                    let s = g.get(0, 0);
                    let mut d = Matrix::zeros(m.rows(), m.cols());
                    for (t, &y) in targets.iter().enumerate() {
                        if clamped[t] {
                            continue;
                        }
                        let row = d.row_mut(t);
                        row.copy_from_slice(m.row(t));
                        matrix::softmax_in_place(row);
                        for v in row.iter_mut() {
                            *v *= -s;
                        }
                        row[y] += s;
                    }
                    accumulate(&mut grads, *logits, d);
                }
            }
        }
        if let Some(bad) = param_grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                location: format!("parameter gradient index {bad}"),
            });
        }
        Ok(())
    }

    /// Floor applied by a recorded [`Tape::pick_log_prob`]; exposed for tests.
    pub fn pick_floor(&self, v: Var) -> Option<f64> {
        match &self.nodes[v.0].op {
            Op::PickLogProb { floor, .. } => Some(*floor),
            _ => None,
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    Matrix::from_vec(m.rows(), m.cols(), m.data().iter().map(|&x| f(x)).collect())
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!(a.shape(), b.shape());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of every op against a scalar loss that mixes
    /// them all, differentiating w.r.t. one flat parameter vector.
    #[test]
    fn every_op_matches_finite_differences() {
        let theta: Vec<f64> = (0..40)
            .map(|i| ((i * 37 % 17) as f64 - 8.0) / 9.0)
            .collect();
        let eval = |theta: &[f64], grad: Option<&mut Vec<f64>>| -> f64 {
            let mut t = Tape::new();
            let a = t.param(Matrix::from_vec(3, 4, theta[0..12].to_vec()), 0);
            let b = t.param(Matrix::from_vec(4, 4, theta[12..28].to_vec()), 12);
            let gamma = t.param(Matrix::from_vec(1, 4, theta[28..32].to_vec()), 28);
            let beta = t.param(Matrix::from_vec(1, 4, theta[32..36].to_vec()), 32);
            let emb = t.param(Matrix::from_vec(2, 2, theta[36..40].to_vec()), 36);
            let ab = t.matmul(a, b);
            let ln = t.layer_norm(ab, gamma, beta);
            let ge = t.gelu(ln);
            let scores = t.matmul_bt(ge, a);
            let sm = t.softmax(scores, true);
            let mixed = t.matmul(sm, a);
            let left = t.slice_cols(mixed, 0, 2);
            let right = t.slice_cols(mixed, 2, 2);
            let e = t.embed(emb, &[1, 0, 1]);
            let right = t.mul(right, e);
            let cat = t.concat_cols(&[right, left]);
            let biased = t.add_row(cat, beta);
            let scaled = t.scale(biased, 0.7);
            let lp = t.pick_log_prob(scaled, &[0, 3, 1], -80.0);
            let s = t.sum(ge);
            let diff = t.sub(lp, s);
            let sp = t.softplus(diff);
            let out = t.add(sp, lp);
            if let Some(g) = grad {
                t.backward(out, g).unwrap();
            }
            t.scalar_value(out)
        };
        let mut grad = vec![0.0; theta.len()];
        eval(&theta, Some(&mut grad));
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut p = theta.clone();
            p[i] += h;
            let up = eval(&p, None);
            p[i] -= 2.0 * h;
            let down = eval(&p, None);
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(
                (fd - grad[i]).abs() / scale < 1e-5,
                "coordinate {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
    }

    #[test]
    fn clamped_log_probs_have_zero_gradient() {
        let mut t = Tape::new();
        let logits = t.param(Matrix::from_vec(1, 3, vec![0.0, 0.0, -500.0]), 0);
        let lp = t.pick_log_prob(logits, &[2], -80.0);
        assert_eq!(t.scalar_value(lp), -80.0);
        assert_eq!(t.pick_floor(lp), Some(-80.0));
        let mut g = vec![0.0; 3];
        t.backward(lp, &mut g).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn non_finite_values_are_located() {
        let mut t = Tape::new();
        t.set_label("probe");
        let a = t.constant(Matrix::scalar(f64::MAX));
        let b = t.scale(a, 10.0);
        let err = t.backward(b, &mut []).unwrap_err();
        match err {
            Error::Numeric { location } => {
                assert!(location.contains("scale"), "{location}");
                assert!(location.contains("probe"), "{location}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
