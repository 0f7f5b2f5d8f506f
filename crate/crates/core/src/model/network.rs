use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::block::{accumulate, BlockCache, ConvBlock};
use super::{Architecture, NetworkConfig};
use crate::error::{Error, Result};
use crate::nn::{concat_channels, split_channels, Conv3d, ConvTranspose3d, Real, Tensor};
use crate::par::Exec;
use crate::volume::Modality;

/// Per-branch input tensors sharing spatial dims.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchInput<T> {
    pub branches: Vec<Tensor<T>>,
}

impl<T: Real> BranchInput<T> {
    pub fn pair(a: Tensor<T>, b: Tensor<T>) -> Self {
        BranchInput {
            branches: vec![a, b],
        }
    }

    pub fn single(x: Tensor<T>) -> Self {
        BranchInput { branches: vec![x] }
    }

    /// Splits a four-channel stack (channels in [`Modality::ALL`] order) into branch inputs.
    ///
    /// Pairing: A = (Flair, T2), B = (T1ce, T1). Vanilla: all four in stack order.
    pub fn from_modalities(arch: Architecture, stack: &Tensor<T>) -> Result<Self> {
        if stack.channels() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "modality stack has {} channels, expected 4",
                stack.channels()
            )));
        }
        let pick = |ms: &[Modality]| {
            let mut data = Vec::with_capacity(ms.len() * stack.spatial());
            for m in ms {
                data.extend_from_slice(stack.channel(m.index()));
            }
            Tensor::from_vec(ms.len(), stack.dims(), data).expect("sized")
        };
        Ok(match arch {
            Architecture::Pairing => BranchInput::pair(
                pick(&[Modality::Flair, Modality::T2]),
                pick(&[Modality::T1ce, Modality::T1]),
            ),
            Architecture::Vanilla => BranchInput::single(stack.clone()),
        })
    }
}

/// Main logits, deep-supervision logits and the pre-fusion features.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// `num_classes` × full resolution.
    pub logits: Tensor<T>,
    /// Index `s - 1` holds the logits at level `s` (resolution / 2^s).
    pub aux_logits: Vec<Tensor<T>>,
    /// Last decoder features of each branch (X^A, X^B for the pairing net).
    pub features: Vec<Tensor<T>>,
}

/// Upstream gradients of a [`ForwardOutput`].
#[derive(Debug, Clone)]
pub struct OutputGrads<T> {
    pub logits: Tensor<T>,
    pub aux_logits: Vec<Tensor<T>>,
    pub features: Option<Vec<Tensor<T>>>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    encoder: Vec<Vec<BlockCache<T>>>,
    up_inputs: Vec<Vec<Tensor<T>>>,
    decoder: Vec<Vec<BlockCache<T>>>,
    fuse_input: Tensor<T>,
    head_inputs: Vec<Tensor<T>>,
}

/// U-Net with one or two cross-connected branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    /// `[level][branch]`
    encoder: Vec<Vec<ConvBlock<T>>>,
    /// `[level][branch]`; entry `r` upsamples level `r + 1` to level `r`.
    up: Vec<Vec<ConvTranspose3d<T>>>,
    /// `[level][branch]` for levels `0..depth - 1`.
    decoder: Vec<Vec<ConvBlock<T>>>,
    fuse: Conv3d<T>,
    /// Index `s - 1` is the head at level `s`.
    heads: Vec<Conv3d<T>>,
    exec: Exec,
}

/// Own tensor first, then the siblings in branch order.
fn own_first<'a, T>(items: &'a [Tensor<T>], own: usize) -> Vec<&'a Tensor<T>> {
    std::iter::once(&items[own])
        .chain(items.iter().enumerate().filter(|(i, _)| *i != own).map(|(_, t)| t))
        .collect()
}

impl<T: Real> Network<T> {
    /// Builds a network with He-initialized weights drawn from `config.seed`.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self::build(config, Some(&mut rng)))
    }

    /// The single-branch baseline over all four modalities.
    pub fn vanilla(mut config: NetworkConfig) -> Result<Self> {
        config.architecture = Architecture::Vanilla;
        Self::new(config)
    }

    /// A network of zeros with the same layout (used as a gradient buffer).
    pub fn zeros_like(&self) -> Self {
        Self::build(self.config.clone(), None).with_exec(self.exec)
    }

    fn build(config: NetworkConfig, mut rng: Option<&mut ChaCha8Rng>) -> Self {
        let block = |rng: &mut Option<&mut ChaCha8Rng>, inp, out, stride| match rng {
            Some(g) => ConvBlock::init(*g, inp, out, stride),
            None => ConvBlock::zeros(inp, out, stride),
        };
        let nb = config.architecture.branches();
        let depth = config.depth;
        let classes = config.num_classes;
        let c = |l: usize| config.channels(l);

        let mut encoder = Vec::with_capacity(depth);
        for l in 0..depth {
            let (inp, stride) = if l == 0 {
                (config.input_channels(), 1)
            } else {
                (nb * c(l - 1), 2)
            };
            encoder.push((0..nb).map(|_| block(&mut rng, inp, c(l), stride)).collect());
        }
        let mut up = Vec::with_capacity(depth - 1);
        let mut decoder = Vec::with_capacity(depth - 1);
        for r in 0..depth - 1 {
            up.push(
                (0..nb)
                    .map(|_| match rng.as_deref_mut() {
                        Some(g) => ConvTranspose3d::init(g, c(r + 1), c(r)),
                        None => ConvTranspose3d::zeros(c(r + 1), c(r)),
                    })
                    .collect(),
            );
            decoder.push((0..nb).map(|_| block(&mut rng, c(r) * (1 + nb), c(r), 1)).collect());
        }
        let mut conv1x1 = |inp: usize| match rng.as_deref_mut() {
            Some(g) => Conv3d::init(g, inp, classes, 1, 1, 0),
            None => Conv3d::zeros(inp, classes, 1, 1, 0),
        };
        let fuse = conv1x1(nb * c(0));
        let heads = (1..=config.deep_supervision_levels)
            .map(|s| conv1x1(nb * c(s)))
            .collect();
        Network {
            config,
            encoder,
            up,
            decoder,
            fuse,
            heads,
            exec: Exec::default(),
        }
    }

    /// Selects how convolutions and normalizations run.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    fn branches(&self) -> usize {
        self.config.architecture.branches()
    }

    fn check_input(&self, input: &BranchInput<T>) -> Result<()> {
        let nb = self.branches();
        if input.branches.len() != nb {
            return Err(Error::ShapeMismatch(format!(
                "{} network needs {nb} branch inputs, got {}",
                self.config.architecture,
                input.branches.len()
            )));
        }
        let dims = input.branches[0].dims();
        for t in &input.branches {
            if t.dims() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "branch inputs differ in dims: {} vs {}",
                    dims,
                    t.dims()
                )));
            }
            if t.channels() != self.config.input_channels() {
                return Err(Error::ShapeMismatch(format!(
                    "branch input has {} channels, expected {}",
                    t.channels(),
                    self.config.input_channels()
                )));
            }
        }
        if dims.div_exact(self.config.divisor()).is_none() {
            return Err(Error::ShapeMismatch(format!(
                "input dims {dims} not divisible by {}",
                self.config.divisor()
            )));
        }
        Ok(())
    }

    fn encode_impl(
        &self,
        input: &BranchInput<T>,
        mut tape: Option<&mut Vec<Vec<BlockCache<T>>>>,
    ) -> Result<Vec<Vec<Tensor<T>>>> {
        self.check_input(input)?;
        let nb = self.branches();
        let record = tape.is_some();
        let mut feats: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.config.depth);
        for (l, blocks) in self.encoder.iter().enumerate() {
            let mut level = Vec::with_capacity(nb);
            let mut caches = Vec::with_capacity(nb);
            for (b, block) in blocks.iter().enumerate() {
                let (y, cache) = if l == 0 {
                    block.forward_cached(&input.branches[b], record, self.exec)?
                } else {
                    let x = concat_channels(&own_first(&feats[l - 1], b))?;
                    block.forward_cached(&x, record, self.exec)?
                };
                level.push(y);
                caches.extend(cache);
            }
            if let Some(t) = tape.as_deref_mut() {
                t.push(caches);
            }
            feats.push(level);
        }
        Ok(feats)
    }

    fn decode_impl(
        &self,
        enc: &[Vec<Tensor<T>>],
        mut tape: Option<(&mut Vec<Vec<Tensor<T>>>, &mut Vec<Vec<BlockCache<T>>>)>,
    ) -> Result<Vec<Vec<Tensor<T>>>> {
        let depth = self.config.depth;
        let nb = self.branches();
        if enc.len() != depth || enc.iter().any(|l| l.len() != nb) {
            return Err(Error::ShapeMismatch(format!(
                "decoder needs {depth} levels of {nb} branch features"
            )));
        }
        let record = tape.is_some();
        let mut dec: Vec<Option<Vec<Tensor<T>>>> = vec![None; depth];
        dec[depth - 1] = Some(enc[depth - 1].clone());
        let mut up_inputs = vec![Vec::new(); depth - 1];
        let mut caches = vec![Vec::new(); depth - 1];
        for r in (0..depth - 1).rev() {
            let below = dec[r + 1].take().expect("computed");
            let mut level = Vec::with_capacity(nb);
            for b in 0..nb {
                let up = self.up[r][b].forward(&below[b])?;
                if up.dims() != enc[r][b].dims() {
                    return Err(Error::ShapeMismatch(format!(
                        "upsampled {} vs skip {} at level {r}",
                        up.dims(),
                        enc[r][b].dims()
                    )));
                }
                let mut parts = vec![&up];
                parts.extend(own_first(&enc[r], b));
                let x = concat_channels(&parts)?;
                let (y, cache) = self.decoder[r][b].forward_cached(&x, record, self.exec)?;
                caches[r].extend(cache);
                level.push(y);
            }
            if record {
                up_inputs[r] = below.clone();
            }
            dec[r + 1] = Some(below);
            dec[r] = Some(level);
        }
        if let Some((ups, cs)) = tape.as_mut() {
            **ups = up_inputs;
            **cs = caches;
        }
        Ok(dec.into_iter().map(|l| l.expect("all levels")).collect())
    }

    /// Per-level encoder features `[level][branch]`.
    pub fn encode(&self, input: &BranchInput<T>) -> Result<Vec<Vec<Tensor<T>>>> {
        self.encode_impl(input, None)
    }

    /// Per-level decoder features `[level][branch]`; the deepest level is the bottleneck.
    pub fn decode(&self, enc: &[Vec<Tensor<T>>]) -> Result<Vec<Vec<Tensor<T>>>> {
        self.decode_impl(enc, None)
    }

    /// Concatenates the branch features and applies the 1×1×1 classifier.
    pub fn fuse_and_classify(&self, features: &[Tensor<T>]) -> Result<Tensor<T>> {
        self.classify(&self.fuse, features)
    }

    /// Logits at decoder level `level` (1-based, up to `deep_supervision_levels`).
    pub fn deep_supervision_head(&self, level: usize, features: &[Tensor<T>]) -> Result<Tensor<T>> {
        let head = level
            .checked_sub(1)
            .and_then(|i| self.heads.get(i))
            .ok_or_else(|| {
                Error::Config(format!(
                    "deep-supervision level {level} outside 1..={}",
                    self.heads.len()
                ))
            })?;
        self.classify(head, features)
    }

    fn classify(&self, conv: &Conv3d<T>, features: &[Tensor<T>]) -> Result<Tensor<T>> {
        if features.len() != self.branches() {
            return Err(Error::ShapeMismatch(format!(
                "classifier needs {} branch features, got {}",
                self.branches(),
                features.len()
            )));
        }
        if features.iter().any(|f| !f.same_shape(&features[0])) {
            return Err(Error::ShapeMismatch("branch features differ in shape".into()));
        }
        let refs: Vec<&Tensor<T>> = features.iter().collect();
        conv.forward_with(&concat_channels(&refs)?, self.exec)
    }

    pub fn forward(&self, input: &BranchInput<T>) -> Result<ForwardOutput<T>> {
        let enc = self.encode(input)?;
        let dec = self.decode(&enc)?;
        self.outputs(dec, None)
    }

    /// Forward pass that also records the intermediates for [`backward`](Self::backward).
    pub fn forward_train(&self, input: &BranchInput<T>) -> Result<(ForwardOutput<T>, Tape<T>)> {
        let mut enc_tape = Vec::new();
        let enc = self.encode_impl(input, Some(&mut enc_tape))?;
        let mut up_inputs = Vec::new();
        let mut dec_tape = Vec::new();
        let dec = self.decode_impl(&enc, Some((&mut up_inputs, &mut dec_tape)))?;
        drop(enc);
        let mut tape = Tape {
            encoder: enc_tape,
            up_inputs,
            decoder: dec_tape,
            fuse_input: Tensor::zeros(0, input.branches[0].dims()),
            head_inputs: Vec::new(),
        };
        let out = self.outputs(dec, Some(&mut tape))?;
        Ok((out, tape))
    }

    fn outputs(
        &self,
        mut dec: Vec<Vec<Tensor<T>>>,
        mut tape: Option<&mut Tape<T>>,
    ) -> Result<ForwardOutput<T>> {
        let mut aux_logits = Vec::with_capacity(self.heads.len());
        for s in 1..=self.heads.len() {
            let refs: Vec<&Tensor<T>> = dec[s].iter().collect();
            let x = concat_channels(&refs)?;
            aux_logits.push(self.heads[s - 1].forward_with(&x, self.exec)?);
            if let Some(t) = tape.as_deref_mut() {
                t.head_inputs.push(x);
            }
        }
        let features = std::mem::take(&mut dec[0]);
        let refs: Vec<&Tensor<T>> = features.iter().collect();
        let x = concat_channels(&refs)?;
        let logits = self.fuse.forward_with(&x, self.exec)?;
        if let Some(t) = tape {
            t.fuse_input = x;
        }
        Ok(ForwardOutput {
            logits,
            aux_logits,
            features,
        })
    }

    /// Parameter gradients for the given output gradients.
    pub fn backward(&self, tape: &Tape<T>, grads: &OutputGrads<T>) -> Result<Network<T>> {
        let exec = self.exec;
        let depth = self.config.depth;
        let nb = self.branches();
        let mut g = self.zeros_like();
        let add = |slot: &mut Option<Tensor<T>>, t: Tensor<T>| match slot {
            Some(s) => s.add_assign(&t),
            None => *slot = Some(t),
        };
        let sizes = |l: usize| vec![self.config.channels(l); nb];

        let mut g_dec: Vec<Vec<Option<Tensor<T>>>> = vec![vec![None; nb]; depth];
        let mut g_enc: Vec<Vec<Option<Tensor<T>>>> = vec![vec![None; nb]; depth];

        let (dx, dw, db) = self
            .fuse
            .backward(&tape.fuse_input, &grads.logits, true, exec)?;
        accumulate(&mut g.fuse, &dw, &db);
        for (b, t) in split_channels(&dx.expect("requested"), &sizes(0))
            .into_iter()
            .enumerate()
        {
            add(&mut g_dec[0][b], t);
        }
        if grads.aux_logits.len() != self.heads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} aux gradients for {} heads",
                grads.aux_logits.len(),
                self.heads.len()
            )));
        }
        for (i, (head, gl)) in self.heads.iter().zip(&grads.aux_logits).enumerate() {
            let s = i + 1;
            let (dx, dw, db) = head.backward(&tape.head_inputs[i], gl, true, exec)?;
            accumulate(&mut g.heads[i], &dw, &db);
            for (b, t) in split_channels(&dx.expect("requested"), &sizes(s))
                .into_iter()
                .enumerate()
            {
                add(&mut g_dec[s][b], t);
            }
        }
        if let Some(fg) = &grads.features {
            for (b, t) in fg.iter().enumerate() {
                add(&mut g_dec[0][b], t.clone());
            }
        }

        for r in 0..depth - 1 {
            for b in 0..nb {
                let Some(dy) = g_dec[r][b].take() else {
                    continue;
                };
                let dx = self.decoder[r][b]
                    .backward(&tape.decoder[r][b], &dy, true, &mut g.decoder[r][b], self.exec)?
                    .expect("requested");
                let c = self.config.channels(r);
                let mut parts = split_channels(&dx, &vec![c; 1 + nb]).into_iter();
                let d_up = parts.next().expect("up part");
                // skips arrive own-first
                let order = std::iter::once(b).chain((0..nb).filter(|&o| o != b));
                for (src, t) in order.zip(parts) {
                    add(&mut g_enc[r][src], t);
                }
                let up = &self.up[r][b];
                let (dbelow, dw, db) = up.backward(&tape.up_inputs[r][b], &d_up)?;
                let gu = &mut g.up[r][b];
                gu.weight.iter_mut().zip(&dw).for_each(|(a, &v)| *a += v);
                gu.bias.iter_mut().zip(&db).for_each(|(a, &v)| *a += v);
                add(&mut g_dec[r + 1][b], dbelow);
            }
        }
        for b in 0..nb {
            if let Some(t) = g_dec[depth - 1][b].take() {
                add(&mut g_enc[depth - 1][b], t);
            }
        }
        for l in (0..depth).rev() {
            for b in 0..nb {
                let Some(dy) = g_enc[l][b].take() else {
                    continue;
                };
                let dx = self.encoder[l][b].backward(
                    &tape.encoder[l][b],
                    &dy,
                    l > 0,
                    &mut g.encoder[l][b],
                    self.exec,
                )?;
                if let Some(dx) = dx {
                    let parts = split_channels(&dx, &sizes(l - 1));
                    let order = std::iter::once(b).chain((0..nb).filter(|&o| o != b));
                    for (src, t) in order.zip(parts) {
                        add(&mut g_enc[l - 1][src], t);
                    }
                }
            }
        }
        Ok(g)
    }

    /// Named parameter tensors in a stable order.
    ///
    /// Keys: `encoder.{level}.{branch}.conv{1,2}.{weight,bias}`,
    /// `decoder.{level}.{branch}.up.{weight,bias}`,
    /// `decoder.{level}.{branch}.conv{1,2}.{weight,bias}`, `fuse.{weight,bias}`,
    /// `ds.{level}.{weight,bias}`; branches are `a` and `b`.
    pub fn params(&self) -> Vec<(String, &Vec<T>)> {
        let arch = self.config.architecture;
        let mut out = Vec::new();
        for (l, level) in self.encoder.iter().enumerate() {
            for (b, blk) in level.iter().enumerate() {
                let p = format!("encoder.{l}.{}", arch.branch_name(b));
                push_block(&mut out, &p, blk);
            }
        }
        for r in 0..self.decoder.len() {
            for b in 0..self.decoder[r].len() {
                let p = format!("decoder.{r}.{}", arch.branch_name(b));
                out.push((format!("{p}.up.weight"), &self.up[r][b].weight));
                out.push((format!("{p}.up.bias"), &self.up[r][b].bias));
                push_block(&mut out, &p, &self.decoder[r][b]);
            }
        }
        out.push(("fuse.weight".into(), &self.fuse.weight));
        out.push(("fuse.bias".into(), &self.fuse.bias));
        for (i, h) in self.heads.iter().enumerate() {
            out.push((format!("ds.{}.weight", i + 1), &h.weight));
            out.push((format!("ds.{}.bias", i + 1), &h.bias));
        }
        out
    }

    /// Mutable counterpart of [`params`](Self::params), same order and keys.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let arch = self.config.architecture;
        let mut out = Vec::new();
        for (l, level) in self.encoder.iter_mut().enumerate() {
            for (b, blk) in level.iter_mut().enumerate() {
                let p = format!("encoder.{l}.{}", arch.branch_name(b));
                push_block_mut(&mut out, &p, blk);
            }
        }
        for (r, (ups, decs)) in self.up.iter_mut().zip(self.decoder.iter_mut()).enumerate() {
            for (b, (u, d)) in ups.iter_mut().zip(decs.iter_mut()).enumerate() {
                let p = format!("decoder.{r}.{}", arch.branch_name(b));
                out.push((format!("{p}.up.weight"), &mut u.weight));
                out.push((format!("{p}.up.bias"), &mut u.bias));
                push_block_mut(&mut out, &p, d);
            }
        }
        out.push(("fuse.weight".into(), &mut self.fuse.weight));
        out.push(("fuse.bias".into(), &mut self.fuse.bias));
        for (i, h) in self.heads.iter_mut().enumerate() {
            out.push((format!("ds.{}.weight", i + 1), &mut h.weight));
            out.push((format!("ds.{}.bias", i + 1), &mut h.bias));
        }
        out
    }

    pub fn param(&self, name: &str) -> Option<&Vec<T>> {
        self.params().into_iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Vec<T>> {
        self.params_mut()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Copies every named tensor from `src`; names and lengths must match exactly.
    pub fn load_params<'a>(
        &mut self,
        src: impl IntoIterator<Item = (&'a str, &'a [f64])>,
    ) -> Result<()> {
        let mut own = self.params_mut();
        let mut seen = 0;
        for (name, values) in src {
            let slot = own
                .iter_mut()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
            if slot.1.len() != values.len() {
                return Err(Error::Checkpoint(format!(
                    "{name}: {} values, expected {}",
                    values.len(),
                    slot.1.len()
                )));
            }
            for (d, &v) in slot.1.iter_mut().zip(values) {
                *d = T::from_f64_lossy(v);
            }
            seen += 1;
        }
        if seen != own.len() {
            return Err(Error::Checkpoint(format!(
                "{seen} parameter tensors supplied, network has {}",
                own.len()
            )));
        }
        Ok(())
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let mut out = Network::<U>::build(self.config.clone(), None).with_exec(self.exec);
        for ((_, dst), (_, src)) in out.params_mut().into_iter().zip(self.params()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::from_f64_lossy(s.as_f64());
            }
        }
        out
    }

    /// Exchanges the parameters of the two branches of a pairing network.
    pub fn swap_branches(&mut self) {
        if self.branches() != 2 {
            return;
        }
        for level in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            level.swap(0, 1);
        }
        for level in &mut self.up {
            level.swap(0, 1);
        }
    }
}

fn push_block<'a, T>(out: &mut Vec<(String, &'a Vec<T>)>, prefix: &str, b: &'a ConvBlock<T>) {
    out.push((format!("{prefix}.conv1.weight"), &b.conv1.weight));
    out.push((format!("{prefix}.conv1.bias"), &b.conv1.bias));
    out.push((format!("{prefix}.conv2.weight"), &b.conv2.weight));
    out.push((format!("{prefix}.conv2.bias"), &b.conv2.bias));
}

fn push_block_mut<'a, T>(
    out: &mut Vec<(String, &'a mut Vec<T>)>,
    prefix: &str,
    b: &'a mut ConvBlock<T>,
) {
    out.push((format!("{prefix}.conv1.weight"), &mut b.conv1.weight));
    out.push((format!("{prefix}.conv1.bias"), &mut b.conv1.bias));
    out.push((format!("{prefix}.conv2.weight"), &mut b.conv2.weight));
    out.push((format!("{prefix}.conv2.bias"), &mut b.conv2.bias));
}
