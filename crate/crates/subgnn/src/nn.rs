//! Minimal reverse-mode autodiff over 64-bit tensors, plus the gated
//! bidirectional recurrent encoder and the Adam optimizer.
//!
//! A `Tape` records one forward computation as a flat op list; `backward`
//! walks it in reverse and accumulates exact gradients for every trainable
//! leaf. Tapes are single-threaded and rebuilt per step; independent model
//! replicas may train concurrently with independent stores.

use std::collections::HashMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::rng::Stream;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch: {details}")]
    Shape { op: &'static str, details: String },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("non-finite gradient in parameter {name:?}")]
    NonFinite { name: String },
    #[error("unknown parameter {name:?}")]
    UnknownParam { name: String },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major value holder. Rank 0 (scalar), 1, or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length must match shape"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }
}

/// Named trainable tensors plus the seed their initialization consumed.
/// Registration order fixes the rng draw order, so a store rebuilt with the
/// same seed and the same registrations is bit-identical.
pub struct ParamStore {
    pub seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    rng: Stream,
}

impl ParamStore {
    pub fn new(seed: u64) -> ParamStore {
        ParamStore {
            seed,
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
            rng: crate::rng::stream(seed, &[crate::rng::tag::PARAMS]),
        }
    }

    fn insert(&mut self, name: &str, tensor: Tensor) -> usize {
        assert!(
            !self.index.contains_key(name),
            "parameter {name:?} registered twice"
        );
        let slot = self.tensors.len();
        self.index.insert(name.to_string(), slot);
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        slot
    }

    /// Matrix with uniform entries in ±sqrt(6/(fan_in+fan_out)).
    pub fn add_matrix(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| self.rng.gen_range(-bound..bound))
            .collect();
        self.insert(name, Tensor::new(vec![rows, cols], data))
    }

    /// Vector filled with a constant; biases use 0, forget gates +1.
    pub fn add_vector(&mut self, name: &str, len: usize, fill: f64) -> usize {
        self.insert(name, Tensor::new(vec![len], vec![fill; len]))
    }

    /// Glorot-initialized vector, treated as a single output row over `len`
    /// inputs (projection vectors).
    pub fn add_vector_glorot(&mut self, name: &str, len: usize) -> usize {
        let bound = (6.0 / (len + 1) as f64).sqrt();
        let data = (0..len).map(|_| self.rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(vec![len], data))
    }

    pub fn slot(&self, name: &str) -> Result<usize, NnError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NnError::UnknownParam { name: name.into() })
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[self.index[name]]
    }

    pub fn tensor(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter())
    }

    /// Copies every tensor from `other` by name; shapes must match. Used to
    /// restore the best-validation snapshot.
    pub fn restore(&mut self, other: &ParamStore) {
        for (name, tensor) in other.iter() {
            let slot = self.index[name];
            assert_eq!(self.tensors[slot].shape, tensor.shape);
            self.tensors[slot].data.clone_from(&tensor.data);
        }
    }

    pub fn snapshot(&self) -> ParamStore {
        ParamStore {
            seed: self.seed,
            names: self.names.clone(),
            tensors: self.tensors.clone(),
            index: self.index.clone(),
            rng: self.rng.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(b"SGCK")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, tensor) in self.iter() {
            let bytes = name.as_bytes();
            out.write_all(&(bytes.len() as u16).to_le_bytes())?;
            out.write_all(bytes)?;
            // dtype tag: 0 = f64.
            out.write_all(&[0u8, tensor.shape.len() as u8])?;
            for &d in &tensor.shape {
                out.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in &tensor.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ParamStore, NnError> {
        let bad = |msg: &str| NnError::Format {
            path: path.display().to_string(),
            msg: msg.into(),
        };
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], NnError> {
            if pos + n > buf.len() {
                return Err(bad("truncated checkpoint"));
            }
            let s = &buf[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(4)? != b"SGCK" {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != 1 {
            return Err(bad("unsupported checkpoint version"));
        }
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut store = ParamStore::new(seed);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(name_len)?)
                .map_err(|_| bad("invalid parameter name"))?
                .to_string();
            let tag = take(2)?;
            if tag[0] != 0 {
                return Err(bad("unsupported dtype tag"));
            }
            let ndim = tag[1] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
            }
            store.insert(&name, Tensor::new(shape, data));
        }
        if pos != buf.len() {
            return Err(bad("trailing bytes after checkpoint"));
        }
        Ok(store)
    }
}

/// Gradients aligned with a store's slots; untouched parameters hold zeros,
/// so every trainable tensor has a gradient after one backward pass.
pub struct GradStore {
    pub slots: Vec<Vec<f64>>,
}

impl GradStore {
    pub fn zeros(store: &ParamStore) -> GradStore {
        GradStore {
            slots: (0..store.len())
                .map(|i| vec![0.0; store.tensor(i).data.len()])
                .collect(),
        }
    }

    pub fn get<'a>(&'a self, store: &ParamStore, name: &str) -> &'a [f64] {
        &self.slots[store.slot(name).expect("known parameter")]
    }

    /// Adds another gradient set, e.g. to merge micro-batches.
    pub fn accumulate(&mut self, other: &GradStore) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

pub type Id = usize;

enum Op {
    /// Leaf; `Some(slot)` marks a trainable parameter.
    Leaf(Option<usize>),
    MatVec(Id, Id),
    Add(Id, Id),
    AddN(Vec<Id>),
    Mul(Id, Id),
    Scale(Id, f64),
    Concat(Vec<Id>),
    Slice(Id, usize),
    SumReduce(Id),
    Dot(Id, Id),
    Stack(Vec<Id>),
    Relu(Id),
    Sigmoid(Id),
    Tanh(Id),
    Dropout(Id, Vec<f64>),
    Lookup(Id, usize),
    SoftmaxCe { logits: Id, probs: Vec<f64>, label: usize },
    SigmoidBce { logits: Id, probs: Vec<f64>, targets: Vec<f64> },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    needs_grad: bool,
}

/// One recorded forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn value(&self, id: Id) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: Id) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn scalar(&self, id: Id) -> f64 {
        debug_assert!(self.nodes[id].shape.is_empty());
        self.nodes[id].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, needs_grad: bool) -> Id {
        self.nodes.push(Node {
            op,
            shape,
            value,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: Id) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Id {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(Op::Leaf(None), shape, data, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Id {
        self.push(Op::Leaf(None), vec![], vec![v], false)
    }

    pub fn constant_vector(&mut self, data: Vec<f64>) -> Id {
        let shape = vec![data.len()];
        self.push(Op::Leaf(None), shape, data, false)
    }

    /// Trainable leaf holding a snapshot of the named parameter. A
    /// parameter may appear as several leaves; backward merges them.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Id, NnError> {
        let slot = store.slot(name)?;
        let t = store.tensor(slot);
        Ok(self.push(Op::Leaf(Some(slot)), t.shape.clone(), t.data.clone(), true))
    }

    /// W[m×k] · x[k] → [m].
    pub fn matvec(&mut self, w: Id, x: Id) -> Result<Id, NnError> {
        let (ws, xs) = (&self.nodes[w].shape, &self.nodes[x].shape);
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(NnError::Shape {
                op: "matvec",
                details: format!("{ws:?} x {xs:?}"),
            });
        }
        let (m, k) = (ws[0], ws[1]);
        let mut out = vec![0.0; m];
        let wd = &self.nodes[w].value;
        let xd = &self.nodes[x].value;
        for i in 0..m {
            let row = &wd[i * k..(i + 1) * k];
            out[i] = row.iter().zip(xd).map(|(a, b)| a * b).sum();
        }
        let needs = self.needs(w) || self.needs(x);
        Ok(self.push(Op::MatVec(w, x), vec![m], out, needs))
    }

    fn same_shape(&self, op: &'static str, a: Id, b: Id) -> Result<(), NnError> {
        if self.nodes[a].shape != self.nodes[b].shape {
            return Err(NnError::Shape {
                op,
                details: format!("{:?} vs {:?}", self.nodes[a].shape, self.nodes[b].shape),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Id, b: Id) -> Result<Id, NnError> {
        self.same_shape("add", a, b)?;
        let value = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x + y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        let shape = self.nodes[a].shape.clone();
        Ok(self.push(Op::Add(a, b), shape, value, needs))
    }

    /// Elementwise sum of any number of same-shape tensors.
    pub fn add_n(&mut self, xs: &[Id]) -> Result<Id, NnError> {
        let first = *xs.first().ok_or(NnError::EmptyInput { op: "add_n" })?;
        let mut value = self.nodes[first].value.clone();
        let mut needs = self.needs(first);
        for &x in &xs[1..] {
            self.same_shape("add_n", first, x)?;
            for (o, v) in value.iter_mut().zip(&self.nodes[x].value) {
                *o += v;
            }
            needs |= self.needs(x);
        }
        let shape = self.nodes[first].shape.clone();
        Ok(self.push(Op::AddN(xs.to_vec()), shape, value, needs))
    }

    pub fn mul(&mut self, a: Id, b: Id) -> Result<Id, NnError> {
        self.same_shape("mul", a, b)?;
        let value = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x * y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        let shape = self.nodes[a].shape.clone();
        Ok(self.push(Op::Mul(a, b), shape, value, needs))
    }

    /// Multiply by a compile-time constant scalar.
    pub fn scale(&mut self, x: Id, c: f64) -> Id {
        let value = self.nodes[x].value.iter().map(|v| v * c).collect();
        let shape = self.nodes[x].shape.clone();
        let needs = self.needs(x);
        self.push(Op::Scale(x, c), shape, value, needs)
    }

    /// Concatenation of 1-D tensors.
    pub fn concat(&mut self, xs: &[Id]) -> Result<Id, NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptyInput { op: "concat" });
        }
        let mut value = Vec::new();
        let mut needs = false;
        for &x in xs {
            if self.nodes[x].shape.len() != 1 {
                return Err(NnError::Shape {
                    op: "concat",
                    details: format!("rank {} input", self.nodes[x].shape.len()),
                });
            }
            value.extend_from_slice(&self.nodes[x].value);
            needs |= self.needs(x);
        }
        let shape = vec![value.len()];
        Ok(self.push(Op::Concat(xs.to_vec()), shape, value, needs))
    }

    /// One quarter of a gate preactivation vector; `len` divides evenly.
    pub fn slice(&mut self, x: Id, start: usize, len: usize) -> Result<Id, NnError> {
        if self.nodes[x].shape.len() != 1 || start + len > self.nodes[x].value.len() {
            return Err(NnError::Shape {
                op: "slice",
                details: format!(
                    "[{start}..{}] of {:?}",
                    start + len,
                    self.nodes[x].shape
                ),
            });
        }
        let value = self.nodes[x].value[start..start + len].to_vec();
        let needs = self.needs(x);
        Ok(self.push(Op::Slice(x, start), vec![len], value, needs))
    }

    pub fn sum_reduce(&mut self, x: Id) -> Id {
        let value = vec![self.nodes[x].value.iter().sum()];
        let needs = self.needs(x);
        self.push(Op::SumReduce(x), vec![], value, needs)
    }

    pub fn dot(&mut self, a: Id, b: Id) -> Result<Id, NnError> {
        self.same_shape("dot", a, b)?;
        let value = vec![self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x * y)
            .sum()];
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Dot(a, b), vec![], value, needs))
    }

    /// Vector from scalar entries.
    pub fn stack(&mut self, xs: &[Id]) -> Result<Id, NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptyInput { op: "stack" });
        }
        let mut value = Vec::with_capacity(xs.len());
        let mut needs = false;
        for &x in xs {
            if !self.nodes[x].shape.is_empty() {
                return Err(NnError::Shape {
                    op: "stack",
                    details: "non-scalar entry".into(),
                });
            }
            value.push(self.nodes[x].value[0]);
            needs |= self.needs(x);
        }
        let shape = vec![xs.len()];
        Ok(self.push(Op::Stack(xs.to_vec()), shape, value, needs))
    }

    pub fn relu(&mut self, x: Id) -> Id {
        let value = self.nodes[x].value.iter().map(|&v| v.max(0.0)).collect();
        let shape = self.nodes[x].shape.clone();
        let needs = self.needs(x);
        self.push(Op::Relu(x), shape, value, needs)
    }

    pub fn sigmoid(&mut self, x: Id) -> Id {
        let value = self.nodes[x].value.iter().map(|&v| sigmoid(v)).collect();
        let shape = self.nodes[x].shape.clone();
        let needs = self.needs(x);
        self.push(Op::Sigmoid(x), shape, value, needs)
    }

    pub fn tanh(&mut self, x: Id) -> Id {
        let value = self.nodes[x].value.iter().map(|&v| v.tanh()).collect();
        let shape = self.nodes[x].shape.clone();
        let needs = self.needs(x);
        self.push(Op::Tanh(x), shape, value, needs)
    }

    /// Inverted dropout. Training mode zeroes entries with probability
    /// `rate` and scales survivors by 1/(1-rate); rate 0 or eval mode is
    /// exactly the identity (the input id is returned unchanged).
    pub fn dropout(&mut self, x: Id, rate: f64, train: bool, rng: &mut Stream) -> Id {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        if !train || rate == 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.nodes[x].value.len())
            .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
            .collect();
        let value = self.nodes[x]
            .value
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let shape = self.nodes[x].shape.clone();
        let needs = self.needs(x);
        self.push(Op::Dropout(x, mask), shape, value, needs)
    }

    /// Row `row` of a rank-2 tensor.
    pub fn lookup(&mut self, table: Id, row: usize) -> Result<Id, NnError> {
        let shape = &self.nodes[table].shape;
        if shape.len() != 2 || row >= shape[0] {
            return Err(NnError::Shape {
                op: "lookup",
                details: format!("row {row} of {shape:?}"),
            });
        }
        let d = shape[1];
        let value = self.nodes[table].value[row * d..(row + 1) * d].to_vec();
        let needs = self.needs(table);
        Ok(self.push(Op::Lookup(table, row), vec![d], value, needs))
    }

    /// Cross-entropy of softmax(logits) against a class index. The
    /// log-sum-exp is stabilized by the max logit.
    pub fn softmax_cross_entropy(&mut self, logits: Id, label: usize) -> Result<Id, NnError> {
        let ls = &self.nodes[logits];
        if ls.shape.len() != 1 || label >= ls.value.len() {
            return Err(NnError::Shape {
                op: "softmax_cross_entropy",
                details: format!("label {label} for logits {:?}", ls.shape),
            });
        }
        let max = ls.value.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = ls.value.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let loss = z.ln() + max - ls.value[label];
        let needs = self.needs(logits);
        Ok(self.push(
            Op::SoftmaxCe {
                logits,
                probs,
                label,
            },
            vec![],
            vec![loss],
            needs,
        ))
    }

    /// Mean binary cross-entropy of sigmoid(logits) against {0,1} targets,
    /// computed from logits for numerical stability.
    pub fn sigmoid_bce(&mut self, logits: Id, targets: &[f64]) -> Result<Id, NnError> {
        let ls = &self.nodes[logits];
        if ls.shape.len() != 1 || ls.value.len() != targets.len() {
            return Err(NnError::Shape {
                op: "sigmoid_bce",
                details: format!("logits {:?} vs {} targets", ls.shape, targets.len()),
            });
        }
        // -t*log(s) - (1-t)*log(1-s) = max(x,0) - t*x + ln(1+exp(-|x|))
        let loss = ls
            .value
            .iter()
            .zip(targets)
            .map(|(&x, &t)| x.max(0.0) - t * x + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / targets.len() as f64;
        let probs = ls.value.iter().map(|&v| sigmoid(v)).collect();
        let needs = self.needs(logits);
        Ok(self.push(
            Op::SigmoidBce {
                logits,
                probs,
                targets: targets.to_vec(),
            },
            vec![],
            vec![loss],
            needs,
        ))
    }

    /// Reverse pass from a scalar loss. Returns a gradient per trainable
    /// parameter slot (zeros for parameters the tape never touched).
    pub fn backward(&self, loss: Id, store: &ParamStore) -> GradStore {
        assert!(
            self.nodes[loss].shape.is_empty(),
            "backward needs a scalar loss"
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(vec![1.0]);
        let mut out = GradStore::zeros(store);

        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            let send = |grads: &mut Vec<Option<Vec<f64>>>, to: Id, add: &dyn Fn(&mut [f64])| {
                if !self.nodes[to].needs_grad {
                    return;
                }
                let buf = grads[to]
                    .get_or_insert_with(|| vec![0.0; self.nodes[to].value.len()]);
                add(buf);
            };
            match &self.nodes[id].op {
                Op::Leaf(slot) => {
                    if let Some(slot) = *slot {
                        for (o, v) in out.slots[slot].iter_mut().zip(&g) {
                            *o += v;
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let k = self.nodes[*x].value.len();
                    let xd = &self.nodes[*x].value;
                    let wd = &self.nodes[*w].value;
                    send(&mut grads, *w, &|buf| {
                        for (i, gi) in g.iter().enumerate() {
                            for (j, xj) in xd.iter().enumerate() {
                                buf[i * k + j] += gi * xj;
                            }
                        }
                    });
                    send(&mut grads, *x, &|buf| {
                        for (i, gi) in g.iter().enumerate() {
                            let row = &wd[i * k..(i + 1) * k];
                            for (b, w) in buf.iter_mut().zip(row) {
                                *b += gi * w;
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    for t in [*a, *b] {
                        send(&mut grads, t, &|buf| {
                            for (o, v) in buf.iter_mut().zip(&g) {
                                *o += v;
                            }
                        });
                    }
                }
                Op::AddN(xs) => {
                    for &t in xs {
                        send(&mut grads, t, &|buf| {
                            for (o, v) in buf.iter_mut().zip(&g) {
                                *o += v;
                            }
                        });
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    send(&mut grads, *a, &|buf| {
                        for ((o, v), w) in buf.iter_mut().zip(&g).zip(bv) {
                            *o += v * w;
                        }
                    });
                    send(&mut grads, *b, &|buf| {
                        for ((o, v), w) in buf.iter_mut().zip(&g).zip(av) {
                            *o += v * w;
                        }
                    });
                }
                Op::Scale(x, c) => {
                    send(&mut grads, *x, &|buf| {
                        for (o, v) in buf.iter_mut().zip(&g) {
                            *o += v * c;
                        }
                    });
                }
                Op::Concat(xs) => {
                    let mut offset = 0;
                    for &t in xs {
                        let len = self.nodes[t].value.len();
                        let piece = &g[offset..offset + len];
                        send(&mut grads, t, &|buf| {
                            for (o, v) in buf.iter_mut().zip(piece) {
                                *o += v;
                            }
                        });
                        offset += len;
                    }
                }
                Op::Slice(x, start) => {
                    send(&mut grads, *x, &|buf| {
                        for (o, v) in buf[*start..start + g.len()].iter_mut().zip(&g) {
                            *o += v;
                        }
                    });
                }
                Op::SumReduce(x) => {
                    send(&mut grads, *x, &|buf| {
                        for o in buf.iter_mut() {
                            *o += g[0];
                        }
                    });
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    send(&mut grads, *a, &|buf| {
                        for (o, v) in buf.iter_mut().zip(bv) {
                            *o += g[0] * v;
                        }
                    });
                    send(&mut grads, *b, &|buf| {
                        for (o, v) in buf.iter_mut().zip(av) {
                            *o += g[0] * v;
                        }
                    });
                }
                Op::Stack(xs) => {
                    for (i, &t) in xs.iter().enumerate() {
                        send(&mut grads, t, &|buf| buf[0] += g[i]);
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[*x].value;
                    send(&mut grads, *x, &|buf| {
                        for ((o, v), &inp) in buf.iter_mut().zip(&g).zip(xv) {
                            if inp > 0.0 {
                                *o += v;
                            }
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    let yv = &self.nodes[id].value;
                    send(&mut grads, *x, &|buf| {
                        for ((o, v), y) in buf.iter_mut().zip(&g).zip(yv) {
                            *o += v * y * (1.0 - y);
                        }
                    });
                }
                Op::Tanh(x) => {
                    let yv = &self.nodes[id].value;
                    send(&mut grads, *x, &|buf| {
                        for ((o, v), y) in buf.iter_mut().zip(&g).zip(yv) {
                            *o += v * (1.0 - y * y);
                        }
                    });
                }
                Op::Dropout(x, mask) => {
                    send(&mut grads, *x, &|buf| {
                        for ((o, v), m) in buf.iter_mut().zip(&g).zip(mask) {
                            *o += v * m;
                        }
                    });
                }
                Op::Lookup(table, row) => {
                    let d = g.len();
                    send(&mut grads, *table, &|buf| {
                        for (o, v) in buf[row * d..(row + 1) * d].iter_mut().zip(&g) {
                            *o += v;
                        }
                    });
                }
                Op::SoftmaxCe {
                    logits,
                    probs,
                    label,
                } => {
                    send(&mut grads, *logits, &|buf| {
                        for (i, (o, p)) in buf.iter_mut().zip(probs).enumerate() {
                            let ind = if i == *label { 1.0 } else { 0.0 };
                            *o += g[0] * (p - ind);
                        }
                    });
                }
                Op::SigmoidBce {
                    logits,
                    probs,
                    targets,
                } => {
                    let scale = 1.0 / targets.len() as f64;
                    send(&mut grads, *logits, &|buf| {
                        for ((o, p), t) in buf.iter_mut().zip(probs).zip(targets) {
                            *o += g[0] * scale * (p - t);
                        }
                    });
                }
            }
        }
        out
    }
}

/// Distinct forward and backward recurrent cells with LSTM gating. Output
/// is the sum of every hidden state across time steps and both directions,
/// so the result dimension equals the hidden size.
pub struct BiRecurrent {
    pub input_dim: usize,
    pub hidden_dim: usize,
    prefix: String,
}

impl BiRecurrent {
    /// Registers the cell parameters: per direction a fused gate matrix
    /// over [x_t; h_{t-1}] and a gate bias whose forget block starts at +1.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> BiRecurrent {
        for dir in ["fwd", "bwd"] {
            store.add_matrix(
                &format!("{prefix}.{dir}.gates"),
                4 * hidden_dim,
                input_dim + hidden_dim,
            );
            let bias = format!("{prefix}.{dir}.bias");
            let slot = store.add_vector(&bias, 4 * hidden_dim, 0.0);
            // Gate order i, f, g, o; forget block gets the +1 bias.
            for v in &mut store.tensor_mut(slot).data[hidden_dim..2 * hidden_dim] {
                *v = 1.0;
            }
        }
        BiRecurrent {
            input_dim,
            hidden_dim,
            prefix: prefix.to_string(),
        }
    }

    pub fn from_store(prefix: &str, input_dim: usize, hidden_dim: usize) -> BiRecurrent {
        BiRecurrent {
            input_dim,
            hidden_dim,
            prefix: prefix.to_string(),
        }
    }

    fn run_direction(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        seq: &[Id],
        dir: &str,
        sums: &mut Vec<Id>,
    ) -> Result<(), NnError> {
        let h = self.hidden_dim;
        let gates = tape.param(store, &format!("{}.{dir}.gates", self.prefix))?;
        let bias = tape.param(store, &format!("{}.{dir}.bias", self.prefix))?;
        let mut h_prev = tape.constant_vector(vec![0.0; h]);
        let mut c_prev = tape.constant_vector(vec![0.0; h]);
        for &x in seq {
            let joined = tape.concat(&[x, h_prev])?;
            let pre_w = tape.matvec(gates, joined)?;
            let pre = tape.add(pre_w, bias)?;
            let i_pre = tape.slice(pre, 0, h)?;
            let f_pre = tape.slice(pre, h, h)?;
            let g_pre = tape.slice(pre, 2 * h, h)?;
            let o_pre = tape.slice(pre, 3 * h, h)?;
            let i = tape.sigmoid(i_pre);
            let f = tape.sigmoid(f_pre);
            let g = tape.tanh(g_pre);
            let o = tape.sigmoid(o_pre);
            let keep = tape.mul(f, c_prev)?;
            let write = tape.mul(i, g)?;
            let c = tape.add(keep, write)?;
            let c_act = tape.tanh(c);
            let h_t = tape.mul(o, c_act)?;
            sums.push(h_t);
            h_prev = h_t;
            c_prev = c;
        }
        Ok(())
    }

    /// Encodes a non-empty sequence of input vectors.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        seq: &[Id],
    ) -> Result<Id, NnError> {
        if seq.is_empty() {
            return Err(NnError::EmptyInput {
                op: "bi_recurrent_encode",
            });
        }
        let mut sums = Vec::with_capacity(seq.len() * 2);
        self.run_direction(tape, store, seq, "fwd", &mut sums)?;
        let rev: Vec<Id> = seq.iter().rev().copied().collect();
        self.run_direction(tape, store, &rev, "bwd", &mut sums)?;
        tape.add_n(&sums)
    }
}

/// Adam with bias correction and optional global gradient-norm clipping.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: Option<f64>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, clip: Option<f64>) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip,
            m: (0..store.len())
                .map(|i| vec![0.0; store.tensor(i).data.len()])
                .collect(),
            v: (0..store.len())
                .map(|i| vec![0.0; store.tensor(i).data.len()])
                .collect(),
            t: 0,
        }
    }

    /// One update. Rejects non-finite gradients by parameter name before
    /// touching any state.
    pub fn step(&mut self, store: &mut ParamStore, grads: &GradStore) -> Result<(), NnError> {
        assert_eq!(grads.slots.len(), store.len(), "grads must match store");
        for (slot, g) in grads.slots.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite {
                    name: store.name(slot).to_string(),
                });
            }
        }
        let mut factor = 1.0;
        if let Some(clip) = self.clip {
            let norm: f64 = grads
                .slots
                .iter()
                .flat_map(|g| g.iter())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm > clip {
                factor = clip / norm;
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (slot, g) in grads.slots.iter().enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let data = &mut store.tensor_mut(slot).data;
            for i in 0..g.len() {
                let gi = g[i] * factor;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// |a-b| relative to the larger magnitude; safe near zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}
