//! Convolutional sentence encoder.
//!
//! Two encoders share one word-embedding table: the context encoder turns
//! context sentences into vectors that get averaged, the candidate encoder
//! embeds targets and negatives. Layers, bottom to top:
//!
//! ```text
//! embedding → conv(128) → conv(256) → maxpool → conv(256) → conv(256)
//!           → maxpool → global average → dense(1024, ReLU) → dense(100) → dropout
//! ```
//!
//! Every convolution has width 2 and is followed by a ReLU unless
//! [`Architecture::linear_convs`] is set. Sentences shorter than
//! [`Architecture::min_sentence_len`] are right-padded with [`PAD`].

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::corpus::PAD;
use crate::error::{Error, Result};
use crate::numcore::{Activation, Mode, NumArray, Real, Tape, Var};

/// Layer sizes and switches shared by both encoders.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub embedding_dim: usize,
    pub conv_channels: [usize; 4],
    pub kernel_width: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub dropout: f64,
    /// Skip the ReLU after each convolution.
    pub linear_convs: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            embedding_dim: 100,
            conv_channels: [128, 256, 256, 256],
            kernel_width: 2,
            hidden_dim: 1024,
            output_dim: 100,
            dropout: 0.5,
            linear_convs: false,
        }
    }
}

impl Architecture {
    /// Shortest input that still leaves one row for global average pooling.
    pub fn min_sentence_len(&self) -> usize {
        let grow = self.kernel_width - 1;
        // conv, conv, pool, conv, conv, pool, walked top-down
        let mut need = 1;
        need *= 2;
        need += 2 * grow;
        need *= 2;
        need += 2 * grow;
        need
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.embedding_dim, self.hidden_dim, self.output_dim, self.kernel_width];
        if dims.contains(&0) || self.conv_channels.contains(&0) {
            return Err(Error::invalid("architecture dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    /// Encodes context sentences.
    Context,
    /// Encodes target and negative sentences.
    Candidate,
}

impl EncoderKind {
    pub fn prefix(self) -> &'static str {
        match self {
            EncoderKind::Context => "cntx",
            EncoderKind::Candidate => "cdd",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weight: NumArray<T>,
    pub bias: NumArray<T>,
}

/// Trainable arrays of one encoder, excluding the shared embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    /// Filters are `[C_out × width × C_in]`.
    pub convs: [Layer<T>; 4],
    /// `[hidden × C_last]`, ReLU.
    pub fc1: Layer<T>,
    /// `[output × hidden]`, linear.
    pub fc2: Layer<T>,
}

impl<T: Real> EncoderParams<T> {
    fn layers(&self) -> impl Iterator<Item = &Layer<T>> {
        self.convs.iter().chain([&self.fc1, &self.fc2])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<T>> {
        self.convs.iter_mut().chain([&mut self.fc1, &mut self.fc2])
    }
}

const LAYER_NAMES: [&str; 6] = ["conv1", "conv2", "conv3", "conv4", "fc1", "fc2"];

/// Both encoders and the embedding table they share.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub arch: Architecture,
    /// `[V × embedding_dim]`
    pub embedding: NumArray<T>,
    pub cntx: EncoderParams<T>,
    pub cdd: EncoderParams<T>,
}

/// Array names in storage order.
pub fn param_names() -> Vec<String> {
    let mut names = vec!["embedding".to_string()];
    for kind in [EncoderKind::Context, EncoderKind::Candidate] {
        for layer in LAYER_NAMES {
            names.push(format!("{}.{layer}.w", kind.prefix()));
            names.push(format!("{}.{layer}.b", kind.prefix()));
        }
    }
    names
}

impl<T: Real> ModelParams<T> {
    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn encoder(&self, kind: EncoderKind) -> &EncoderParams<T> {
        match kind {
            EncoderKind::Context => &self.cntx,
            EncoderKind::Candidate => &self.cdd,
        }
    }

    pub fn encoder_mut(&mut self, kind: EncoderKind) -> &mut EncoderParams<T> {
        match kind {
            EncoderKind::Context => &mut self.cntx,
            EncoderKind::Candidate => &mut self.cdd,
        }
    }

    /// Every array in [`param_names`] order.
    pub fn arrays(&self) -> Vec<&NumArray<T>> {
        let mut out = vec![&self.embedding];
        for enc in [&self.cntx, &self.cdd] {
            for layer in enc.layers() {
                out.push(&layer.weight);
                out.push(&layer.bias);
            }
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut NumArray<T>> {
        let mut out = vec![&mut self.embedding];
        for enc in [&mut self.cntx, &mut self.cdd] {
            for layer in enc.layers_mut() {
                out.push(&mut layer.weight);
                out.push(&mut layer.bias);
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.is_finite())
    }

    /// Rebuilds from arrays in [`param_names`] order, checking every shape
    /// against `arch` and `vocab_size`.
    pub fn from_arrays(arch: Architecture, vocab_size: usize, arrays: Vec<NumArray<T>>) -> Result<Self> {
        let shapes = param_shapes(&arch, vocab_size);
        if arrays.len() != shapes.len() {
            return Err(Error::shape(
                "ModelParams::from_arrays",
                format!("expected {} arrays, got {}", shapes.len(), arrays.len()),
            ));
        }
        let mut it = arrays.into_iter().zip(shapes).zip(param_names()).map(|((a, shape), name)| {
            if a.len() != shape.iter().product::<usize>() {
                return Err(Error::shape(
                    "ModelParams::from_arrays",
                    format!("{name}: {} values for shape {shape:?}", a.len()),
                ));
            }
            NumArray::new(shape, a.into_data())
        });
        let mut next = || it.next().expect("length checked above");
        let embedding = next()?;
        let mut encoder = || -> Result<EncoderParams<T>> {
            let mut layer = || -> Result<Layer<T>> {
                Ok(Layer {
                    weight: next()?,
                    bias: next()?,
                })
            };
            Ok(EncoderParams {
                convs: [layer()?, layer()?, layer()?, layer()?],
                fc1: layer()?,
                fc2: layer()?,
            })
        };
        let cntx = encoder()?;
        let cdd = encoder()?;
        Ok(ModelParams {
            arch,
            embedding,
            cntx,
            cdd,
        })
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let arrays = self.arrays().into_iter().map(|a| a.cast()).collect();
        ModelParams::from_arrays(self.arch.clone(), self.vocab_size(), arrays)
            .expect("shapes are preserved by casting")
    }

    /// Records every array as a trainable leaf.
    pub fn register<'p>(&'p self, tape: &mut Tape<'p, T>) -> ModelVars {
        let vars: Vec<Var> = self.arrays().into_iter().map(|a| tape.param(a)).collect();
        ModelVars::from_slice(&vars)
    }
}

/// Array shapes in [`param_names`] order.
pub fn param_shapes(arch: &Architecture, vocab_size: usize) -> Vec<Vec<usize>> {
    let mut shapes = vec![vec![vocab_size, arch.embedding_dim]];
    for _ in 0..2 {
        let mut c_in = arch.embedding_dim;
        for &c_out in &arch.conv_channels {
            shapes.push(vec![c_out, arch.kernel_width, c_in]);
            shapes.push(vec![c_out]);
            c_in = c_out;
        }
        shapes.push(vec![arch.hidden_dim, c_in]);
        shapes.push(vec![arch.hidden_dim]);
        shapes.push(vec![arch.output_dim, arch.hidden_dim]);
        shapes.push(vec![arch.output_dim]);
    }
    shapes
}

/// Bound rule for conv and dense weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// `±√(6 / (fan_in + fan_out))`
    Glorot,
    /// `±√(6 / fan_in)`, which keeps ReLU activations from shrinking with depth.
    He,
}

impl InitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::Glorot => "glorot",
            InitScheme::He => "he",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "glorot" => Some(InitScheme::Glorot),
            "he" => Some(InitScheme::He),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitOptions {
    pub scheme: InitScheme,
    /// Half-width of the uniform embedding init; `None` means `0.5 / d_w`.
    pub embedding_bound: Option<f64>,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            scheme: InitScheme::Glorot,
            embedding_bound: None,
        }
    }
}

/// Random initialization: embeddings uniform in ±0.5/d, weights Glorot
/// uniform, biases zero. Values are drawn in `f64` so every precision sees
/// the same initial model.
pub fn init_model<T: Real, R: Rng + ?Sized>(
    vocab_size: usize,
    arch: &Architecture,
    rng: &mut R,
) -> Result<ModelParams<T>> {
    init_model_with(vocab_size, arch, &InitOptions::default(), rng)
}

/// [`init_model`] with a chosen weight scheme and embedding bound.
pub fn init_model_with<T: Real, R: Rng + ?Sized>(
    vocab_size: usize,
    arch: &Architecture,
    opts: &InitOptions,
    rng: &mut R,
) -> Result<ModelParams<T>> {
    if vocab_size < 3 {
        return Err(Error::invalid(format!("vocabulary size {vocab_size} < 3")));
    }
    arch.validate()?;
    let embedding_bound = opts.embedding_bound.unwrap_or(0.5 / arch.embedding_dim as f64);
    if !(embedding_bound > 0.0 && embedding_bound.is_finite()) {
        return Err(Error::invalid(format!("embedding init bound {embedding_bound} must be positive")));
    }
    let weight_bound = |fan_in: usize, fan_out: usize| match opts.scheme {
        InitScheme::Glorot => glorot(fan_in, fan_out),
        InitScheme::He => (6.0 / fan_in as f64).sqrt(),
    };
    let arrays = param_shapes(arch, vocab_size)
        .into_iter()
        .enumerate()
        .map(|(i, shape)| {
            let len: usize = shape.iter().product();
            let bound = match shape.len() {
                1 => return NumArray::new(shape, vec![T::zero(); len]),
                _ if i == 0 => embedding_bound,
                // conv: [out, w, in]; dense: [out, in]
                3 => weight_bound(shape[2] * shape[1], shape[0] * shape[1]),
                _ => weight_bound(shape[1], shape[0]),
            };
            let dist = Uniform::new_inclusive(-bound, bound);
            let data = (0..len).map(|_| T::of(dist.sample(rng))).collect();
            NumArray::new(shape, data)
        })
        .collect::<Result<Vec<_>>>()?;
    ModelParams::from_arrays(arch.clone(), vocab_size, arrays)
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub convs: [LayerVars; 4],
    pub fc1: LayerVars,
    pub fc2: LayerVars,
}

/// Tape handles for every model array.
#[derive(Clone, Copy, Debug)]
pub struct ModelVars {
    pub embedding: Var,
    pub cntx: EncoderVars,
    pub cdd: EncoderVars,
}

impl ModelVars {
    /// From leaves in [`param_names`] order.
    pub fn from_slice(vars: &[Var]) -> Self {
        assert_eq!(vars.len(), 25, "model has 25 arrays");
        let layer = |i: usize| LayerVars {
            weight: vars[i],
            bias: vars[i + 1],
        };
        let encoder = |base: usize| EncoderVars {
            convs: [layer(base), layer(base + 2), layer(base + 4), layer(base + 6)],
            fc1: layer(base + 8),
            fc2: layer(base + 10),
        };
        ModelVars {
            embedding: vars[0],
            cntx: encoder(1),
            cdd: encoder(13),
        }
    }

    pub fn to_vec(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for enc in [&self.cntx, &self.cdd] {
            for l in enc.convs.iter().chain([&enc.fc1, &enc.fc2]) {
                out.push(l.weight);
                out.push(l.bias);
            }
        }
        out
    }

    pub fn encoder(&self, kind: EncoderKind) -> &EncoderVars {
        match kind {
            EncoderKind::Context => &self.cntx,
            EncoderKind::Candidate => &self.cdd,
        }
    }
}

/// Right-pads with [`PAD`] up to `min_len`.
pub fn pad_sentence(sentence: &[u32], min_len: usize) -> Vec<u32> {
    let mut ids = sentence.to_vec();
    if ids.len() < min_len {
        ids.resize(min_len, PAD);
    }
    ids
}

/// Records the encoder over a batch of sentences and returns the
/// `[B × output_dim]` matrix of sentence vectors. Dropout masks are drawn
/// row by row, so a batch consumes `rng` exactly like encoding the
/// sentences one at a time.
pub fn encode_on_tape<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<'_, T>,
    vars: &ModelVars,
    arch: &Architecture,
    kind: EncoderKind,
    sentences: &[&[u32]],
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    if sentences.is_empty() {
        return Err(Error::Empty("sentence batch"));
    }
    let vocab = tape.value(vars.embedding).rows();
    let min_len = arch.min_sentence_len();
    let mut ids = Vec::new();
    let mut lens = Vec::with_capacity(sentences.len());
    for (index, s) in sentences.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::InSentence {
                index,
                source: Box::new(Error::Empty("sentence")),
            });
        }
        if let Some(&bad) = s.iter().find(|&&id| id as usize >= vocab) {
            return Err(Error::InSentence {
                index,
                source: Box::new(Error::IndexOutOfRange {
                    what: "embedding table",
                    index: bad as usize,
                    size: vocab,
                }),
            });
        }
        let padded = pad_sentence(s, min_len);
        lens.push(padded.len());
        ids.extend(padded);
    }

    let enc = vars.encoder(kind);
    let mut x = tape.embedding(vars.embedding, &ids)?;
    for (i, conv) in enc.convs.iter().enumerate() {
        let (y, out_lens) = tape.conv1d(x, &lens, conv.weight, conv.bias)?;
        x = if arch.linear_convs { y } else { tape.relu(y)? };
        lens = out_lens;
        if i % 2 == 1 {
            let (y, out_lens) = tape.maxpool(x, &lens)?;
            x = y;
            lens = out_lens;
        }
    }
    let pooled = tape.avgpool(x, &lens)?;
    let hidden = tape.dense(pooled, enc.fc1.weight, enc.fc1.bias, Activation::Relu)?;
    let out = tape.dense(hidden, enc.fc2.weight, enc.fc2.bias, Activation::None)?;
    tape.dropout(out, arch.dropout, mode, rng)
}

/// Fixed-length sentence representation.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVector<T>(pub Vec<T>);

impl<T: Real> SentenceVector<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Encodes one sentence.
pub fn encode<T: Real, R: Rng + ?Sized>(
    model: &ModelParams<T>,
    kind: EncoderKind,
    sentence: &[u32],
    mode: Mode,
    rng: &mut R,
) -> Result<SentenceVector<T>> {
    let mut out = encode_batch(model, kind, &[sentence], mode, rng)?;
    Ok(out.pop().expect("one sentence in, one vector out"))
}

/// Encodes each sentence in order; equal to calling [`encode`] in a loop.
pub fn encode_batch<T: Real, R: Rng + ?Sized, S: AsRef<[u32]>>(
    model: &ModelParams<T>,
    kind: EncoderKind,
    sentences: &[S],
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<SentenceVector<T>>> {
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&[u32]> = sentences.iter().map(AsRef::as_ref).collect();
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let out = encode_on_tape(&mut tape, &vars, &model.arch, kind, &refs, mode, rng)?;
    let m = tape.value(out);
    Ok((0..m.rows()).map(|i| SentenceVector(m.row(i).to_vec())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> Architecture {
        Architecture {
            embedding_dim: 6,
            conv_channels: [5, 7, 7, 4],
            kernel_width: 2,
            hidden_dim: 9,
            output_dim: 3,
            dropout: 0.5,
            linear_convs: false,
        }
    }

    fn model(arch: &Architecture, seed: u64) -> ModelParams<f64> {
        init_model(12, arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn minimum_length_survives_both_pools() {
        fn surviving_rows(mut t: usize) -> usize {
            for i in 0..4 {
                if t < 2 {
                    return 0;
                }
                t -= 1;
                if i % 2 == 1 {
                    t /= 2;
                }
            }
            t
        }
        let arch = Architecture::default();
        assert_eq!(arch.min_sentence_len(), 10);
        assert_eq!(surviving_rows(10), 1);
        assert_eq!(surviving_rows(9), 0);
        assert_eq!(surviving_rows(8), 0);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let arch = Architecture::default();
        let a: ModelParams<f32> = init_model(20, &arch, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b: ModelParams<f32> = init_model(20, &arch, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        for (name, arr) in param_names().iter().zip(a.arrays()) {
            if name.ends_with(".b") {
                assert!(arr.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
        assert_eq!(a.cntx.fc2.weight.shape(), &[100, 1024]);
        assert!(a.embedding.max_abs() <= 0.005);
    }

    #[test]
    fn he_init_uses_fan_in_bounds() {
        let arch = Architecture::default();
        let opts = InitOptions {
            scheme: InitScheme::He,
            embedding_bound: Some(0.5),
        };
        let m: ModelParams<f64> = init_model_with(20, &arch, &opts, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let e = m.embedding.max_abs();
        assert!(e <= 0.5 && e > 0.45);
        // conv1 fan-in is width × embedding_dim, fc1 fan-in the last channel count
        let conv1 = (6.0f64 / 200.0).sqrt();
        let w = m.cdd.convs[0].weight.max_abs();
        assert!(w <= conv1 && w > 0.9 * conv1);
        let fc1 = (6.0f64 / 256.0).sqrt();
        let w = m.cntx.fc1.weight.max_abs();
        assert!(w <= fc1 && w > 0.9 * fc1);
        assert!(m.cntx.fc1.bias.data().iter().all(|&b| b == 0.0));
        let bad = InitOptions {
            embedding_bound: Some(-1.0),
            ..opts
        };
        assert!(init_model_with::<f64, _>(20, &arch, &bad, &mut ChaCha8Rng::seed_from_u64(4)).is_err());
    }

    #[test]
    fn output_dimension_is_fixed() {
        let arch = Architecture::default();
        let m: ModelParams<f32> = init_model(30, &arch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for len in [1, 8, 50] {
            let s: Vec<u32> = (0..len).map(|i| 2 + (i % 28) as u32).collect();
            let v = encode(&m, EncoderKind::Context, &s, Mode::Train, &mut rng).unwrap();
            assert_eq!(v.len(), 100);
        }
    }

    #[test]
    fn explicit_padding_matches_auto_padding() {
        let arch = small_arch();
        let m = model(&arch, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = [4u32, 7, 2];
        let auto = encode(&m, EncoderKind::Candidate, &s, Mode::Infer, &mut rng).unwrap();
        let padded = pad_sentence(&s, arch.min_sentence_len());
        assert_eq!(padded.len(), 10);
        let explicit = encode(&m, EncoderKind::Candidate, &padded, Mode::Infer, &mut rng).unwrap();
        assert_eq!(auto, explicit);
    }

    #[test]
    fn invalid_id_reports_sentence() {
        let m = model(&small_arch(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = encode_batch(&m, EncoderKind::Context, &[vec![2u32], vec![3, 12]], Mode::Infer, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::InSentence { index: 1, .. }));
    }

    #[test]
    fn batch_equals_loop_bitwise() {
        let arch = Architecture::default();
        let m: ModelParams<f64> = init_model(40, &arch, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let sentences: Vec<Vec<u32>> = vec![vec![2, 3, 4], (2..30).collect(), vec![9; 12], vec![5]];
        for mode in [Mode::Infer, Mode::Train] {
            let batch = encode_batch(&m, EncoderKind::Context, &sentences, mode, &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for (s, b) in sentences.iter().zip(&batch) {
                let single = encode(&m, EncoderKind::Context, s, mode, &mut rng).unwrap();
                assert!(single.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
        let empty: Vec<Vec<u32>> = Vec::new();
        assert!(encode_batch(&m, EncoderKind::Context, &empty, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn shared_table_couples_encoders() {
        let arch = Architecture::default();
        let base = model(&arch, 5);
        let s = [3u32, 4, 5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = |m: &ModelParams<f64>, k, rng: &mut ChaCha8Rng| encode(m, k, &s, Mode::Infer, rng).unwrap();

        let mut bumped = base.clone();
        let d = arch.embedding_dim;
        for v in &mut bumped.embedding.data_mut()[4 * d..5 * d] {
            *v += 0.3;
        }
        for k in [EncoderKind::Context, EncoderKind::Candidate] {
            assert_ne!(enc(&base, k, &mut rng), enc(&bumped, k, &mut rng));
        }

        let mut conv_bumped = base.clone();
        for v in conv_bumped.cntx.convs[0].weight.data_mut() {
            *v += 0.1;
        }
        assert_ne!(
            enc(&base, EncoderKind::Context, &mut rng),
            enc(&conv_bumped, EncoderKind::Context, &mut rng)
        );
        assert_eq!(
            enc(&base, EncoderKind::Candidate, &mut rng),
            enc(&conv_bumped, EncoderKind::Candidate, &mut rng)
        );
    }

    #[test]
    fn infer_mode_is_deterministic() {
        let m = model(&small_arch(), 6);
        let s = [2u32, 8, 3, 3];
        let a = encode(&m, EncoderKind::Context, &s, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = encode(&m, EncoderKind::Context, &s, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn from_arrays_rejects_bad_shapes() {
        let m = model(&small_arch(), 0);
        let mut arrays: Vec<NumArray<f64>> = m.arrays().into_iter().cloned().collect();
        arrays[3] = NumArray::zeros(vec![2]);
        assert!(ModelParams::from_arrays(small_arch(), 12, arrays).is_err());
    }
}
