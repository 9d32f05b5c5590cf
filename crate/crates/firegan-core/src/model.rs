//! The four networks: generator G1 (visible to synthetic infrared, as a
//! plain encoder-decoder or a U-Net), generator G2 (6-channel concatenation
//! to 3-channel fused image), and the two patch discriminators D1/D2 with
//! spectral normalization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::{ImageTensor, ValueDomain};
use crate::nn::{
    estimate_spectral_norm, seeded_rng, Activation, BatchNorm2d, Block, Conv2d, ConvLayer,
    ConvTranspose2d, Mode, ParamVisitor, StateEntry, StateVisitor, Tensor4,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    G1EncDec,
    G1Unet,
    G2,
    Discriminator,
}

/// Declarative layer plan for one network. The builders derive the full
/// per-stage schedule (kernels, channel widths, normalization placement)
/// from these knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    /// Down/upsampling stages for G1, stride-2 stages for discriminators,
    /// total layers for G2.
    pub depth: usize,
    pub base_filters: usize,
    pub kernel_size: usize,
    pub use_spectral_norm: bool,
    pub output_channels: usize,
}

impl NetworkSpec {
    pub fn g1_encdec() -> Self {
        Self {
            kind: NetworkKind::G1EncDec,
            depth: 4,
            base_filters: 64,
            kernel_size: 4,
            use_spectral_norm: false,
            output_channels: 3,
        }
    }

    pub fn g1_unet() -> Self {
        Self {
            kind: NetworkKind::G1Unet,
            ..Self::g1_encdec()
        }
    }

    pub fn g2() -> Self {
        Self {
            kind: NetworkKind::G2,
            depth: 5,
            base_filters: 256,
            kernel_size: 5,
            use_spectral_norm: false,
            output_channels: 3,
        }
    }

    pub fn discriminator() -> Self {
        Self {
            kind: NetworkKind::Discriminator,
            depth: 4,
            base_filters: 64,
            kernel_size: 5,
            use_spectral_norm: true,
            output_channels: 1,
        }
    }

    pub fn is_g1(&self) -> bool {
        matches!(self.kind, NetworkKind::G1EncDec | NetworkKind::G1Unet)
    }

    /// Channels the network consumes.
    pub fn input_channels(&self) -> usize {
        match self.kind {
            NetworkKind::G1EncDec | NetworkKind::G1Unet | NetworkKind::Discriminator => 3,
            NetworkKind::G2 => 6,
        }
    }

    /// Spatial downscaling factor inputs must divide by.
    pub fn divisibility(&self) -> usize {
        match self.kind {
            NetworkKind::G1EncDec | NetworkKind::G1Unet | NetworkKind::Discriminator => {
                1usize << self.depth
            }
            NetworkKind::G2 => 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.depth == 0 {
            return Err(ModelError::BadSpec("depth must be at least 1"));
        }
        if self.base_filters == 0 {
            return Err(ModelError::BadSpec("base_filters must be at least 1"));
        }
        match self.kind {
            NetworkKind::G1EncDec | NetworkKind::G1Unet => {
                if !matches!(self.output_channels, 1 | 3) {
                    return Err(ModelError::BadSpec(
                        "generator output must be 1 or 3 channels",
                    ));
                }
                if self.kernel_size < 2 || !self.kernel_size.is_multiple_of(2) {
                    return Err(ModelError::BadSpec(
                        "g1 kernel must be even so stride-2 stages halve exactly",
                    ));
                }
            }
            NetworkKind::G2 => {
                if !matches!(self.output_channels, 1 | 3) {
                    return Err(ModelError::BadSpec(
                        "generator output must be 1 or 3 channels",
                    ));
                }
                if self.kernel_size.is_multiple_of(2) {
                    return Err(ModelError::BadSpec(
                        "g2 kernels must be odd to preserve size",
                    ));
                }
            }
            NetworkKind::Discriminator => {
                if self.output_channels != 1 {
                    return Err(ModelError::BadSpec(
                        "discriminator output must be 1 channel",
                    ));
                }
                if self.kernel_size.is_multiple_of(2) {
                    return Err(ModelError::BadSpec("discriminator kernels must be odd"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    BadSpec(&'static str),
    /// Spatial dims not divisible by the network's downscaling factor.
    Indivisible {
        height: usize,
        width: usize,
        factor: usize,
    },
    BadChannelCount {
        expected: usize,
        got: usize,
    },
    WrongDomain,
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    /// A forward pass produced NaN or infinity.
    NonFiniteOutput,
    /// State import found an unknown name or a shape clash.
    StateMismatch(String),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::BadSpec(msg) => write!(f, "invalid network spec: {msg}"),
            ModelError::Indivisible {
                height,
                width,
                factor,
            } => write!(f, "input {height}x{width} not divisible by {factor}"),
            ModelError::BadChannelCount { expected, got } => {
                write!(f, "expected {expected} input channels, got {got}")
            }
            ModelError::WrongDomain => write!(f, "input must be in the model value domain"),
            ModelError::DimensionMismatch { a, b } => {
                write!(f, "spatial dims differ: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)
            }
            ModelError::NonFiniteOutput => write!(f, "network produced a non-finite value"),
            ModelError::StateMismatch(msg) => write!(f, "state mismatch: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

/// Filter count of encoder stage `i`: base doubling per stage, capped at
/// eight times the base.
fn enc_filters(base: usize, i: usize) -> usize {
    base << i.min(3)
}

/// An instantiated network: an ordered stack of conv blocks plus the skip
/// wiring implied by the spec kind.
pub struct Network {
    pub spec: NetworkSpec,
    enc: Vec<Block>,
    dec: Vec<Block>,
    /// Channel widths of cached encoder outputs, recorded by the last
    /// train-mode forward of a U-Net; drives the backward split.
    skip_channels: Vec<usize>,
}

impl core::fmt::Debug for Network {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "Network({:?}, {} blocks, {} params)",
            self.spec.kind,
            self.enc.len() + self.dec.len(),
            self.param_count()
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_block(
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    sn: bool,
    norm: bool,
    act: Option<Activation>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Block {
    Block {
        conv: ConvLayer::Standard(Conv2d::new(cin, cout, k, stride, pad, sn, rng)),
        norm: norm.then(|| BatchNorm2d::new(cout)),
        act,
    }
}

fn deconv_block(
    cin: usize,
    cout: usize,
    k: usize,
    norm: bool,
    act: Option<Activation>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Block {
    Block {
        conv: ConvLayer::Transpose(ConvTranspose2d::new(cin, cout, k, 2, (k - 2) / 2, rng)),
        norm: norm.then(|| BatchNorm2d::new(cout)),
        act,
    }
}

impl Network {
    /// Builds any network kind from its spec with seeded initialization.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = seeded_rng(seed);
        let d = spec.depth;
        let base = spec.base_filters;
        let k = spec.kernel_size;
        let (enc, dec) = match spec.kind {
            NetworkKind::G1EncDec | NetworkKind::G1Unet => {
                let unet = spec.kind == NetworkKind::G1Unet;
                let mut enc = Vec::with_capacity(d);
                for i in 0..d {
                    let cin = if i == 0 {
                        spec.input_channels()
                    } else {
                        enc_filters(base, i - 1)
                    };
                    enc.push(conv_block(
                        cin,
                        enc_filters(base, i),
                        k,
                        2,
                        (k - 2) / 2,
                        false,
                        i != 0,
                        Some(Activation::leaky_relu(0.2)),
                        &mut rng,
                    ));
                }
                let mut dec = Vec::with_capacity(d);
                for j in 0..d {
                    let main_in = if j == 0 {
                        enc_filters(base, d - 1)
                    } else {
                        enc_filters(base, d - 1 - j)
                    };
                    let cin = if unet && j > 0 {
                        main_in + enc_filters(base, d - 1 - j)
                    } else {
                        main_in
                    };
                    let last = j == d - 1;
                    let cout = if last {
                        spec.output_channels
                    } else {
                        enc_filters(base, d - 2 - j)
                    };
                    dec.push(deconv_block(
                        cin,
                        cout,
                        k,
                        !last,
                        Some(if last {
                            Activation::tanh()
                        } else {
                            Activation::relu()
                        }),
                        &mut rng,
                    ));
                }
                (enc, dec)
            }
            NetworkKind::G2 => {
                // Same-size stack: wide early kernels tapering to a 1x1
                // head, channel widths halving from the base.
                let mut enc = Vec::with_capacity(d);
                let mut cin = spec.input_channels();
                for i in 0..d {
                    let last = i == d - 1;
                    let kr = if last {
                        1
                    } else if i < 2 {
                        k
                    } else {
                        3.min(k)
                    };
                    let cout = if last {
                        spec.output_channels
                    } else {
                        (base >> i).max(1)
                    };
                    enc.push(conv_block(
                        cin,
                        cout,
                        kr,
                        1,
                        kr / 2,
                        false,
                        i != 0 && !last,
                        Some(if last {
                            Activation::tanh()
                        } else {
                            Activation::leaky_relu(0.2)
                        }),
                        &mut rng,
                    ));
                    cin = cout;
                }
                (enc, Vec::new())
            }
            NetworkKind::Discriminator => {
                let mut enc = Vec::with_capacity(d + 1);
                let mut cin = spec.input_channels();
                for i in 0..d {
                    let cout = enc_filters(base, i);
                    enc.push(conv_block(
                        cin,
                        cout,
                        k,
                        2,
                        k / 2,
                        spec.use_spectral_norm,
                        false,
                        Some(Activation::leaky_relu(0.2)),
                        &mut rng,
                    ));
                    cin = cout;
                }
                // Linear 1x1 score head: one real-valued patch decision per
                // surviving spatial cell.
                enc.push(conv_block(
                    cin,
                    1,
                    1,
                    1,
                    0,
                    spec.use_spectral_norm,
                    false,
                    None,
                    &mut rng,
                ));
                (enc, Vec::new())
            }
        };
        Ok(Self {
            spec,
            enc,
            dec,
            skip_channels: Vec::new(),
        })
    }

    /// Checks an input's shape against the spec before a forward pass.
    pub fn validate_input(&self, h: usize, w: usize, c: usize) -> Result<(), ModelError> {
        let expected = self.spec.input_channels();
        if c != expected {
            return Err(ModelError::BadChannelCount { expected, got: c });
        }
        let factor = self.spec.divisibility();
        if !h.is_multiple_of(factor) || !w.is_multiple_of(factor) || h == 0 || w == 0 {
            return Err(ModelError::Indivisible {
                height: h,
                width: w,
                factor,
            });
        }
        Ok(())
    }

    /// Runs the network. Train mode caches activations for [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Result<Tensor4, ModelError> {
        self.validate_input(x.h, x.w, x.c)?;
        match self.spec.kind {
            NetworkKind::G1Unet => {
                let d = self.spec.depth;
                let mut skips: Vec<Tensor4> = Vec::with_capacity(d);
                let mut h = x.clone();
                for stage in self.enc.iter_mut() {
                    h = stage.forward(&h, mode);
                    skips.push(h.clone());
                }
                self.skip_channels = skips.iter().map(|t| t.c).collect();
                for (j, stage) in self.dec.iter_mut().enumerate() {
                    if j > 0 {
                        h = h.concat_channels(&skips[d - 1 - j]);
                    }
                    h = stage.forward(&h, mode);
                }
                Ok(h)
            }
            _ => {
                let mut h = x.clone();
                for stage in self.enc.iter_mut().chain(self.dec.iter_mut()) {
                    h = stage.forward(&h, mode);
                }
                Ok(h)
            }
        }
    }

    /// Backpropagates through the caches of the last train-mode forward,
    /// accumulating parameter gradients; returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor4) -> Tensor4 {
        match self.spec.kind {
            NetworkKind::G1Unet => {
                let d = self.spec.depth;
                let mut skip_grads: Vec<Option<Tensor4>> = (0..d).map(|_| None).collect();
                let mut g = grad_out.clone();
                for j in (0..d).rev() {
                    g = self.dec[j].backward(&g);
                    if j > 0 {
                        let skip_c = self.skip_channels[d - 1 - j];
                        let (main, skip) = g.split_channels(g.c - skip_c);
                        skip_grads[d - 1 - j] = Some(skip);
                        g = main;
                    }
                }
                for i in (0..d).rev() {
                    if let Some(sg) = &skip_grads[i] {
                        g.add_assign(sg);
                    }
                    g = self.enc[i].backward(&g);
                }
                g
            }
            _ => {
                let mut g = grad_out.clone();
                for stage in self.dec.iter_mut().rev().chain(self.enc.iter_mut().rev()) {
                    g = stage.backward(&g);
                }
                g
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for stage in self.enc.iter_mut().chain(self.dec.iter_mut()) {
            stage.zero_grad();
        }
    }

    fn stage_name(&self, enc: bool, i: usize) -> String {
        match self.spec.kind {
            NetworkKind::G1EncDec | NetworkKind::G1Unet => {
                if enc {
                    format!("enc{i}")
                } else {
                    format!("dec{i}")
                }
            }
            _ => format!("layer{i}"),
        }
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        let names: Vec<String> = (0..self.enc.len())
            .map(|i| self.stage_name(true, i))
            .collect();
        for (stage, name) in self.enc.iter_mut().zip(&names) {
            stage.visit_params(name, f);
        }
        let names: Vec<String> = (0..self.dec.len())
            .map(|i| self.stage_name(false, i))
            .collect();
        for (stage, name) in self.dec.iter_mut().zip(&names) {
            stage.visit_params(name, f);
        }
    }

    pub fn visit_state(&mut self, f: &mut StateVisitor<'_>) {
        let names: Vec<String> = (0..self.enc.len())
            .map(|i| self.stage_name(true, i))
            .collect();
        for (stage, name) in self.enc.iter_mut().zip(&names) {
            stage.visit_state(name, f);
        }
        let names: Vec<String> = (0..self.dec.len())
            .map(|i| self.stage_name(false, i))
            .collect();
        for (stage, name) in self.dec.iter_mut().zip(&names) {
            stage.visit_state(name, f);
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        // visit_params needs &mut self; count via a scratch clone of shapes
        // is wasteful, so sum weight/bias/bn lengths directly.
        for stage in self.enc.iter().chain(self.dec.iter()) {
            n += match &stage.conv {
                ConvLayer::Standard(c) => c.weight.len() + c.bias.len(),
                ConvLayer::Transpose(c) => c.weight.len() + c.bias.len(),
            };
            if let Some(bn) = &stage.norm {
                n += bn.gamma.len() + bn.beta.len();
            }
        }
        n
    }

    /// Dumps every persistent array (parameters, batch-norm statistics,
    /// spectral-norm vectors) in visit order.
    pub fn export_state(&mut self) -> Vec<StateEntry> {
        let mut out = Vec::new();
        self.visit_state(&mut |name, shape, data| {
            out.push(StateEntry {
                name,
                shape: shape.to_vec(),
                data: data.clone(),
            });
        });
        out
    }

    /// Restores a state dump. Every entry must match a known name with the
    /// right shape, and every network array must be covered.
    pub fn import_state(&mut self, entries: &[StateEntry]) -> Result<(), ModelError> {
        let mut missing: Vec<String> = Vec::new();
        let mut result = Ok(());
        let mut used = alloc::vec![false; entries.len()];
        self.visit_state(&mut |name, shape, data| {
            if result.is_err() {
                return;
            }
            match entries.iter().position(|e| e.name == name) {
                Some(i) => {
                    let e = &entries[i];
                    let len: usize = e.shape.iter().product();
                    if e.shape != shape || e.data.len() != len || data.len() != len {
                        result = Err(ModelError::StateMismatch(format!(
                            "shape mismatch for {name}"
                        )));
                        return;
                    }
                    data.copy_from_slice(&e.data);
                    used[i] = true;
                }
                None => missing.push(name),
            }
        });
        result?;
        if let Some(name) = missing.first() {
            return Err(ModelError::StateMismatch(format!("missing entry {name}")));
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(ModelError::StateMismatch(format!(
                "unknown entry {}",
                entries[i].name
            )));
        }
        Ok(())
    }

    /// Estimated top singular value of every convolution weight as applied
    /// in the forward pass, each viewed as a (k*k*cin) x cout matrix.
    /// For spectrally normalized layers these should sit near 1.
    pub fn spectral_norm_estimates(&self, iters: usize, seed: u64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (i, stage) in self.enc.iter().enumerate() {
            if let ConvLayer::Standard(c) = &stage.conv {
                let w = c.effective_weight();
                let rows = c.kernel * c.kernel * c.cin;
                let name = self.stage_name(true, i);
                out.push((name, estimate_spectral_norm(&w, rows, c.cout, iters, seed)));
            }
        }
        out
    }
}

/// Builds a G1 generator; the spec must be one of the g1 variants.
pub fn build_g1(spec: NetworkSpec, seed: u64) -> Result<Network, ModelError> {
    if !spec.is_g1() {
        return Err(ModelError::BadSpec("expected a g1 spec"));
    }
    if spec.output_channels != 3 {
        return Err(ModelError::BadSpec("g1 must emit 3 channels"));
    }
    Network::build(spec, seed)
}

/// Builds the fusion generator; the spec kind must be g2.
pub fn build_g2(spec: NetworkSpec, seed: u64) -> Result<Network, ModelError> {
    if spec.kind != NetworkKind::G2 {
        return Err(ModelError::BadSpec("expected a g2 spec"));
    }
    if spec.output_channels != 3 {
        return Err(ModelError::BadSpec("g2 must emit 3 channels"));
    }
    Network::build(spec, seed)
}

/// Builds a discriminator; the spec kind must be discriminator.
pub fn build_discriminator(spec: NetworkSpec, seed: u64) -> Result<Network, ModelError> {
    if spec.kind != NetworkKind::Discriminator {
        return Err(ModelError::BadSpec("expected a discriminator spec"));
    }
    Network::build(spec, seed)
}

/// Runs G1 on one visible image, producing a synthetic infrared image of
/// the same size. Evaluation mode; no state is touched.
pub fn generate_ir(g1: &mut Network, visible: &ImageTensor) -> Result<ImageTensor, ModelError> {
    if !g1.spec.is_g1() {
        return Err(ModelError::BadSpec("expected a g1 network"));
    }
    if visible.domain() != ValueDomain::ModelSigned {
        return Err(ModelError::WrongDomain);
    }
    let x = Tensor4::stack(&[visible]).map_err(|_| ModelError::BadChannelCount {
        expected: 3,
        got: visible.channels(),
    })?;
    let y = g1.forward(&x, Mode::Eval)?;
    y.to_image(0, ValueDomain::ModelSigned)
        .map_err(|_| ModelError::NonFiniteOutput)
}

/// Runs G2 on a visible/infrared pair, producing the fused image.
pub fn fuse(
    g2: &mut Network,
    visible: &ImageTensor,
    infrared: &ImageTensor,
) -> Result<ImageTensor, ModelError> {
    if g2.spec.kind != NetworkKind::G2 {
        return Err(ModelError::BadSpec("expected a g2 network"));
    }
    if visible.domain() != ValueDomain::ModelSigned || infrared.domain() != ValueDomain::ModelSigned
    {
        return Err(ModelError::WrongDomain);
    }
    if visible.height() != infrared.height() || visible.width() != infrared.width() {
        return Err(ModelError::DimensionMismatch {
            a: (visible.height(), visible.width()),
            b: (infrared.height(), infrared.width()),
        });
    }
    let v = Tensor4::stack(&[visible]).map_err(|_| ModelError::BadChannelCount {
        expected: 3,
        got: visible.channels(),
    })?;
    let r = Tensor4::stack(&[infrared]).map_err(|_| ModelError::BadChannelCount {
        expected: 3,
        got: infrared.channels(),
    })?;
    let x = v.concat_channels(&r);
    let y = g2.forward(&x, Mode::Eval)?;
    y.to_image(0, ValueDomain::ModelSigned)
        .map_err(|_| ModelError::NonFiniteOutput)
}
