//! DeepFM, DCN, PNN and FiBiNET over shared field embeddings.
//!
//! Every model maps a [`Batch`] to click probabilities `[B]`. Parameters live
//! in one ordered list per instance; forward passes take the tape vars bound
//! from that list, so the same code serves training, evaluation and gradient
//! checks against perturbed copies.

mod checkpoint;
pub mod layers;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{bind, L2Group, Parameter, Tape, Tensor, Var};
use crate::data::{Batch, FeatureSchema};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, ParamEntry};
use layers::{column, flatten, num_pairs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Deepfm,
    Dcn,
    Pnn,
    Fibinet,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Fibinet,
        Architecture::Dcn,
        Architecture::Pnn,
        Architecture::Deepfm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Deepfm => "deepfm",
            Architecture::Dcn => "dcn",
            Architecture::Pnn => "pnn",
            Architecture::Fibinet => "fibinet",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Architecture::Deepfm => "DeepFM",
            Architecture::Dcn => "DCN",
            Architecture::Pnn => "PNN",
            Architecture::Fibinet => "FiBiNET",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deepfm" => Ok(Architecture::Deepfm),
            "dcn" => Ok(Architecture::Dcn),
            "pnn" => Ok(Architecture::Pnn),
            "fibinet" => Ok(Architecture::Fibinet),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Hyperparameters shared by all architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub tower: Vec<usize>,
    pub cross_depth: usize,
    pub senet_reduction: usize,
    pub l2_embedding: f64,
    pub l2_dense: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            tower: vec![400, 200, 100],
            cross_depth: 3,
            senet_reduction: 3,
            l2_embedding: 1e-5,
            l2_dense: 1e-7,
        }
    }
}

/// Input layout a model is sized for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub field_names: Vec<String>,
    pub vocab_sizes: Vec<usize>,
    pub num_numeric: usize,
    pub schema_hash: String,
}

impl FieldLayout {
    pub fn from_schema(schema: &FeatureSchema) -> Self {
        Self {
            field_names: schema
                .categorical()
                .chain(schema.numeric())
                .map(|f| f.name.clone())
                .collect(),
            vocab_sizes: schema.vocab_sizes(),
            num_numeric: schema.num_numeric(),
            schema_hash: schema.hash(),
        }
    }

    pub fn num_fields(&self) -> usize {
        self.vocab_sizes.len() + self.num_numeric
    }
}

/// Positions of each parameter inside `ModelInstance::params`.
#[derive(Debug, Clone, PartialEq)]
struct Slots {
    embeddings: Vec<usize>,
    numeric_projection: Option<usize>,
    bias: usize,
    tower: Vec<(usize, usize)>,
    head: usize,
    extra: ArchSlots,
}

#[derive(Debug, Clone, PartialEq)]
enum ArchSlots {
    Deepfm {
        first_order: Vec<usize>,
        first_order_numeric: Option<usize>,
    },
    Dcn {
        cross: Vec<(usize, usize)>,
    },
    Pnn,
    Fibinet {
        bilinear: usize,
        senet: (usize, usize),
    },
}

/// One architecture's parameters plus the structure to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInstance {
    pub architecture: Architecture,
    pub config: ModelConfig,
    pub layout: FieldLayout,
    params: Vec<Parameter>,
    slots: Slots,
}

struct Builder {
    rng: ChaCha8Rng,
    params: Vec<Parameter>,
}

impl Builder {
    fn push(&mut self, id: String, tensor: Tensor, group: L2Group) -> usize {
        self.params.push(Parameter::new(id, tensor, group));
        self.params.len() - 1
    }

    /// uniform(−0.01, 0.01) with row 0 (OOV) zeroed when `oov_row`.
    fn embedding(&mut self, id: String, rows: usize, cols: usize, oov_row: bool) -> usize {
        let mut data: Vec<f64> = (0..rows * cols).map(|_| self.rng.gen_range(-0.01..0.01)).collect();
        if oov_row {
            data[..cols].iter_mut().for_each(|v| *v = 0.0);
        }
        self.push(id, Tensor::from_parts(vec![rows, cols], data), L2Group::Embedding)
    }

    /// Glorot-uniform with the given fan-in/fan-out.
    fn glorot(&mut self, id: String, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> usize {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-limit..limit)).collect();
        self.push(id, Tensor::from_parts(shape, data), L2Group::Dense)
    }

    fn zeros(&mut self, id: String, shape: &[usize], group: L2Group) -> usize {
        self.push(id, Tensor::zeros(shape), group)
    }

    fn tower(&mut self, input: usize, dims: &[usize]) -> (Vec<(usize, usize)>, usize) {
        let mut layers = Vec::with_capacity(dims.len());
        let mut width = input;
        for (l, &out) in dims.iter().enumerate() {
            let w = self.glorot(format!("tower.{l}.w"), vec![width, out], width, out);
            let b = self.zeros(format!("tower.{l}.b"), &[out], L2Group::Dense);
            layers.push((w, b));
            width = out;
        }
        (layers, width)
    }
}

impl ModelInstance {
    /// Fresh instance with parameters drawn from `seed`.
    pub fn new(architecture: Architecture, config: &ModelConfig, layout: &FieldLayout, seed: u64) -> Result<Self> {
        let d = config.embedding_dim;
        let f = layout.num_fields();
        if d == 0 || config.tower.contains(&0) {
            return Err(Error::Config("embedding and tower sizes must be positive".into()));
        }
        if f == 0 || layout.vocab_sizes.contains(&0) {
            return Err(Error::Config("layout has no fields or an empty vocabulary".into()));
        }
        let needs_pairs = matches!(architecture, Architecture::Pnn | Architecture::Fibinet);
        if needs_pairs && f < 2 {
            return Err(Error::Config(format!("{architecture} needs at least two fields")));
        }
        if architecture == Architecture::Fibinet && (config.senet_reduction == 0 || config.senet_reduction > f) {
            return Err(Error::Config(format!(
                "SENET reduction ratio {} must be in 1..={f}",
                config.senet_reduction
            )));
        }
        if architecture == Architecture::Dcn && config.cross_depth == 0 {
            return Err(Error::Config("DCN needs at least one cross layer".into()));
        }

        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
        };
        let embeddings = layout
            .vocab_sizes
            .iter()
            .enumerate()
            .map(|(j, &v)| b.embedding(format!("emb.{j}"), v, d, true))
            .collect();
        let numeric_projection =
            (layout.num_numeric > 0).then(|| b.embedding("emb.num".into(), layout.num_numeric, d, false));
        let bias = b.zeros("bias".into(), &[1], L2Group::None);
        let flat = f * d;
        let pairs = num_pairs(f);

        let (extra, tower_input) = match architecture {
            Architecture::Deepfm => {
                let first_order = layout
                    .vocab_sizes
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| b.embedding(format!("fm.first.{j}"), v, 1, true))
                    .collect();
                let first_order_numeric = (layout.num_numeric > 0)
                    .then(|| b.embedding("fm.first.num".into(), layout.num_numeric, 1, false));
                (
                    ArchSlots::Deepfm {
                        first_order,
                        first_order_numeric,
                    },
                    flat,
                )
            }
            Architecture::Dcn => {
                let cross = (0..config.cross_depth)
                    .map(|l| {
                        let w = b.glorot(format!("cross.{l}.w"), vec![flat], flat, 1);
                        let bb = b.zeros(format!("cross.{l}.b"), &[flat], L2Group::Dense);
                        (w, bb)
                    })
                    .collect();
                (ArchSlots::Dcn { cross }, flat)
            }
            Architecture::Pnn => (ArchSlots::Pnn, flat + pairs),
            Architecture::Fibinet => {
                let k = f.div_ceil(config.senet_reduction);
                let bilinear = b.glorot("bilinear.w".into(), vec![d, d], d, d);
                let w1 = b.glorot("senet.w1".into(), vec![f, k], f, k);
                let w2 = b.glorot("senet.w2".into(), vec![k, f], k, f);
                (
                    ArchSlots::Fibinet {
                        bilinear,
                        senet: (w1, w2),
                    },
                    2 * pairs * d,
                )
            }
        };
        let (tower, width) = b.tower(tower_input, &config.tower);
        let head_in = if architecture == Architecture::Dcn { flat + width } else { width };
        let head = b.glorot("head.w".into(), vec![head_in, 1], head_in, 1);

        Ok(Self {
            architecture,
            config: config.clone(),
            layout: layout.clone(),
            params: b.params,
            slots: Slots {
                embeddings,
                numeric_projection,
                bias,
                tower,
                head,
                extra,
            },
        })
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param(&self, id: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.id == id)
    }

    /// Total number of scalar parameters.
    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Records all parameters on `tape`, in [`params`](Self::params) order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        bind(tape, &self.params)
    }

    /// Field-embedding block `[B × F × d]`: categorical lookups followed by
    /// numeric values scaling their learned vectors.
    pub fn embed(&self, tape: &mut Tape, vars: &[Var], batch: &Batch) -> Result<Var> {
        let n = batch.len();
        let d = self.config.embedding_dim;
        let fc = self.layout.vocab_sizes.len();
        if batch.n_cat != fc || batch.n_num != self.layout.num_numeric {
            return Err(Error::shape(
                "embed",
                format!(
                    "batch has {} categorical and {} numeric fields, model expects {fc} and {}",
                    batch.n_cat, batch.n_num, self.layout.num_numeric
                ),
            ));
        }
        let mut parts = Vec::with_capacity(self.layout.num_fields());
        for (j, &slot) in self.slots.embeddings.iter().enumerate() {
            let what = format!("field {} (index {j})", self.layout.field_names[j]);
            parts.push(tape.gather_rows(vars[slot], &batch.cat_column(j), &what)?);
        }
        if let Some(slot) = self.slots.numeric_projection {
            for k in 0..self.layout.num_numeric {
                let col = column(tape, batch.num_column(k));
                let proj = tape.index_select(vars[slot], 0, &[k])?;
                parts.push(tape.matmul(col, proj)?);
            }
        }
        let flat = tape.concat(&parts, 1)?;
        tape.reshape(flat, &[n, self.layout.num_fields(), d])
    }

    fn first_order(&self, tape: &mut Tape, vars: &[Var], batch: &Batch, slots: &[usize], numeric: Option<usize>) -> Result<Var> {
        let mut parts = Vec::with_capacity(slots.len() + 1);
        for (j, &slot) in slots.iter().enumerate() {
            let what = format!("first-order weights of field {j}");
            parts.push(tape.gather_rows(vars[slot], &batch.cat_column(j), &what)?);
        }
        if let Some(slot) = numeric {
            let n = batch.len();
            let values = tape.constant(Tensor::from_parts(vec![n, batch.n_num], batch.num.clone()));
            parts.push(tape.matmul(values, vars[slot])?);
        }
        let all = tape.concat(&parts, 1)?;
        let sum = tape.sum(all, Some(1))?;
        tape.reshape(sum, &[batch.len(), 1])
    }

    fn tower_vars(&self, vars: &[Var]) -> Vec<(Var, Var)> {
        self.slots.tower.iter().map(|&(w, b)| (vars[w], vars[b])).collect()
    }

    /// Click probabilities `[B]` for `batch`, using `vars` bound by [`bind`](Self::bind).
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], batch: &Batch) -> Result<Var> {
        if vars.len() != self.params.len() {
            return Err(Error::shape(
                "forward",
                format!("{} vars for {} parameters", vars.len(), self.params.len()),
            ));
        }
        let n = batch.len();
        let e = self.embed(tape, vars, batch)?;
        let flat = flatten(tape, e)?;
        let tower = self.tower_vars(vars);
        let head = vars[self.slots.head];
        let bias = vars[self.slots.bias];

        let logit = match &self.slots.extra {
            ArchSlots::Deepfm {
                first_order,
                first_order_numeric,
            } => {
                let first = self.first_order(tape, vars, batch, first_order, *first_order_numeric)?;
                let fm = layers::fm_logit(tape, first, e, bias)?;
                let h = layers::mlp(tape, flat, &tower)?;
                let deep = tape.matmul(h, head)?;
                tape.add(fm, deep)?
            }
            ArchSlots::Dcn { cross } => {
                let mut x = flat;
                for &(w, b) in cross {
                    x = layers::cross_layer(tape, flat, x, vars[w], vars[b])?;
                }
                let h = layers::mlp(tape, flat, &tower)?;
                let joined = tape.concat(&[x, h], 1)?;
                let out = tape.matmul(joined, head)?;
                tape.add(out, bias)?
            }
            ArchSlots::Pnn => {
                let products = layers::inner_products(tape, e)?;
                let joined = tape.concat(&[flat, products], 1)?;
                let h = layers::mlp(tape, joined, &tower)?;
                let out = tape.matmul(h, head)?;
                tape.add(out, bias)?
            }
            ArchSlots::Fibinet {
                bilinear,
                senet: (w1, w2),
            } => {
                let w = vars[*bilinear];
                let plain = layers::bilinear_interaction(tape, e, w)?;
                let reweighted = layers::senet(tape, e, vars[*w1], vars[*w2])?;
                let boosted = layers::bilinear_interaction(tape, reweighted, w)?;
                let plain = flatten(tape, plain)?;
                let boosted = flatten(tape, boosted)?;
                let joined = tape.concat(&[plain, boosted], 1)?;
                let h = layers::mlp(tape, joined, &tower)?;
                let out = tape.matmul(h, head)?;
                tape.add(out, bias)?
            }
        };
        let logit = tape.reshape(logit, &[n])?;
        Ok(tape.sigmoid(logit))
    }

    /// Binds parameters and runs [`forward`](Self::forward) on a fresh tape.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let p = self.forward(&mut tape, &vars, batch)?;
        Ok(tape.value(p).data().to_vec())
    }

    /// `l2_embedding · Σ‖embedding params‖² + l2_dense · Σ‖dense params‖²`, on the tape.
    pub fn l2_penalty(&self, tape: &mut Tape, vars: &[Var]) -> Result<Var> {
        let mut terms = Vec::new();
        for (p, &v) in self.params.iter().zip(vars) {
            let coeff = match p.l2_group {
                L2Group::Embedding => self.config.l2_embedding,
                L2Group::Dense => self.config.l2_dense,
                L2Group::None => continue,
            };
            if coeff == 0.0 {
                continue;
            }
            let sq = tape.square(v);
            let s = tape.sum(sq, None)?;
            terms.push(tape.scale(s, coeff));
        }
        if terms.is_empty() {
            return Ok(tape.constant(Tensor::scalar(0.0)));
        }
        let all = tape.concat(&terms, 0)?;
        tape.sum(all, None)
    }

    /// Plain-number counterpart of [`l2_penalty`](Self::l2_penalty).
    pub fn l2_value(&self) -> f64 {
        self.params
            .iter()
            .map(|p| match p.l2_group {
                L2Group::Embedding => self.config.l2_embedding * p.tensor.squared_norm(),
                L2Group::Dense => self.config.l2_dense * p.tensor.squared_norm(),
                L2Group::None => 0.0,
            })
            .sum()
    }

    /// Closed-form parameter count for an architecture and layout.
    pub fn expected_parameter_count(architecture: Architecture, config: &ModelConfig, layout: &FieldLayout) -> usize {
        let d = config.embedding_dim;
        let f = layout.num_fields();
        let vocab: usize = layout.vocab_sizes.iter().sum();
        let flat = f * d;
        let pairs = num_pairs(f);
        let embeddings = vocab * d + layout.num_numeric * d;
        let (extra, tower_in) = match architecture {
            Architecture::Deepfm => (vocab + layout.num_numeric, flat),
            Architecture::Dcn => (2 * config.cross_depth * flat, flat),
            Architecture::Pnn => (0, flat + pairs),
            Architecture::Fibinet => {
                let k = f.div_ceil(config.senet_reduction);
                (d * d + 2 * f * k, 2 * pairs * d)
            }
        };
        let mut tower = 0;
        let mut width = tower_in;
        for &out in &config.tower {
            tower += width * out + out;
            width = out;
        }
        let head = if architecture == Architecture::Dcn { flat + width } else { width };
        embeddings + 1 + extra + tower + head
    }

    fn set_params(&mut self, params: Vec<Parameter>) {
        self.params = params;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;

    fn layout(vocab: &[usize], numeric: usize) -> FieldLayout {
        FieldLayout {
            field_names: (0..vocab.len() + numeric).map(|i| format!("f{i}")).collect(),
            vocab_sizes: vocab.to_vec(),
            num_numeric: numeric,
            schema_hash: "test".into(),
        }
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            embedding_dim: 4,
            tower: vec![8, 4],
            ..ModelConfig::default()
        }
    }

    fn batch(n: usize, vocab: &[usize], numeric: usize) -> Batch {
        let rows: Vec<Example> = (0..n)
            .map(|i| Example {
                label: (i % 2) as u8,
                cat: vocab.iter().enumerate().map(|(j, &v)| ((i + j) % v) as u32).collect(),
                num: (0..numeric).map(|k| (i as f64 - 1.5) * 0.3 + k as f64 * 0.1).collect(),
            })
            .collect();
        Batch::from_examples(&rows)
    }

    #[test]
    fn parameter_counts_match_closed_form() {
        let l = layout(&[5, 7, 3], 2);
        let cfg = ModelConfig {
            senet_reduction: 2,
            ..small_config()
        };
        for arch in Architecture::ALL {
            let m = ModelInstance::new(arch, &cfg, &l, 1).unwrap();
            assert_eq!(
                m.num_parameters(),
                ModelInstance::expected_parameter_count(arch, &cfg, &l),
                "{arch}"
            );
        }
        // DeepFM by hand: emb 15·4 + 2·4 = 68, first order 17, bias 1,
        // tower 20·8+8 + 8·4+4 = 204, head 4 → 294
        let m = ModelInstance::new(Architecture::Deepfm, &cfg, &l, 1).unwrap();
        assert_eq!(m.num_parameters(), 294);
    }

    #[test]
    fn ids_unique_and_oov_rows_zero() {
        let l = layout(&[5, 7, 3], 2);
        for arch in Architecture::ALL {
            let m = ModelInstance::new(arch, &small_config(), &l, 3).unwrap();
            let mut ids: Vec<&str> = m.params().iter().map(|p| p.id.as_str()).collect();
            ids.sort_unstable();
            let n = ids.len();
            ids.dedup();
            assert_eq!(ids.len(), n);
            let emb = m.param("emb.0").unwrap();
            assert!(emb.tensor.data()[..4].iter().all(|&v| v == 0.0));
            assert!(emb.tensor.data()[4..].iter().all(|v| v.abs() < 0.01));
        }
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let l = layout(&[5, 7, 3], 2);
        let b = batch(6, &[5, 7, 3], 2);
        for arch in Architecture::ALL {
            let mut m = ModelInstance::new(arch, &small_config(), &l, 3).unwrap();
            for p in m.params_mut() {
                p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            assert!(m.predict(&b).unwrap().iter().all(|&p| p == 0.5), "{arch}");
        }
    }

    #[test]
    fn forward_shape_range_and_determinism() {
        let l = layout(&[5, 7, 3], 2);
        let b = batch(40, &[5, 7, 3], 2);
        for arch in Architecture::ALL {
            let m = ModelInstance::new(arch, &small_config(), &l, 11).unwrap();
            let p = m.predict(&b).unwrap();
            assert_eq!(p.len(), 40);
            assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
            let again = m.predict(&b).unwrap();
            assert!(p.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn embed_lookup_exact() {
        let l = layout(&[3, 2], 0);
        let cfg = ModelConfig {
            embedding_dim: 2,
            tower: vec![2],
            ..ModelConfig::default()
        };
        let mut m = ModelInstance::new(Architecture::Deepfm, &cfg, &l, 0).unwrap();
        let t0 = Tensor::new(vec![3, 2], vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let t1 = Tensor::new(vec![2, 2], vec![0.0, 0.0, -1.0, 5.0]).unwrap();
        for p in m.params_mut() {
            match p.id.as_str() {
                "emb.0" => p.tensor = t0.clone(),
                "emb.1" => p.tensor = t1.clone(),
                _ => {}
            }
        }
        let b = Batch::from_examples(&[Example { label: 1, cat: vec![2, 1], num: vec![] }]);
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape);
        let e = m.embed(&mut tape, &vars, &b).unwrap();
        assert_eq!(tape.shape(e), &[1, 2, 2]);
        assert_eq!(tape.value(e).data(), &[3.0, 4.0, -1.0, 5.0]);

        let zero = Batch::from_examples(&[Example { label: 0, cat: vec![0, 0], num: vec![] }]);
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape);
        let e = m.embed(&mut tape, &vars, &zero).unwrap();
        assert!(tape.value(e).data().iter().all(|&v| v == 0.0));

        let bad = Batch::from_examples(&[Example { label: 0, cat: vec![3, 0], num: vec![] }]);
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape);
        let err = m.embed(&mut tape, &vars, &bad).unwrap_err().to_string();
        assert!(err.contains("field f0"), "{err}");
    }

    #[test]
    fn embedding_row_used_twice_gets_double_gradient() {
        let l = layout(&[3], 0);
        let cfg = ModelConfig {
            embedding_dim: 2,
            tower: vec![2],
            ..ModelConfig::default()
        };
        let m = ModelInstance::new(Architecture::Deepfm, &cfg, &l, 0).unwrap();
        let b = Batch::from_examples(&[
            Example { label: 0, cat: vec![1], num: vec![] },
            Example { label: 0, cat: vec![1], num: vec![] },
        ]);
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape);
        let e = m.embed(&mut tape, &vars, &b).unwrap();
        let s = tape.sum(e, None).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get("emb.0").unwrap().data(), &[0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn l2_penalty_values() {
        let l = layout(&[2], 0);
        let cfg = ModelConfig {
            embedding_dim: 2,
            tower: vec![],
            ..ModelConfig::default()
        };
        let mut m = ModelInstance::new(Architecture::Pnn, &cfg, &layout(&[2, 2], 0), 0).unwrap();
        for p in m.params_mut() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(m.l2_value(), 0.0);

        let mut m = ModelInstance::new(Architecture::Deepfm, &cfg, &l, 0).unwrap();
        for p in m.params_mut() {
            let data = p.tensor.data_mut();
            data.iter_mut().for_each(|v| *v = 0.0);
            if p.id == "emb.0" {
                data[2] = 3.0;
                data[3] = 4.0;
            }
        }
        assert!((m.l2_value() - 1e-5 * 25.0).abs() < 1e-18);
        let mut tape = Tape::new();
        let vars = m.bind(&mut tape);
        let pen = m.l2_penalty(&mut tape, &vars).unwrap();
        assert!((tape.value(pen).data()[0] - 2.5e-4).abs() < 1e-18);

        m.config.l2_embedding = 1e-3;
        assert!((m.l2_value() - 0.025).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = small_config();
        assert!(ModelInstance::new(Architecture::Pnn, &cfg, &layout(&[4], 0), 0).is_err());
        let cfg3 = ModelConfig {
            senet_reduction: 9,
            ..small_config()
        };
        assert!(ModelInstance::new(Architecture::Fibinet, &cfg3, &layout(&[4, 4], 0), 0).is_err());
        assert!(ModelInstance::new(Architecture::Deepfm, &cfg, &layout(&[0], 0), 0).is_err());
    }
}
