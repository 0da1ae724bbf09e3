use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::config::BOTTLENECK_FACTOR;
use super::params::{ParamId, ParameterStore};
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::kernels::Mode;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// State shared by the blocks during one forward pass: the graph being
/// recorded, lazily bound parameter leaves, and batch-norm running-stat
/// updates to be written back once the pass is accepted.
pub struct ForwardCtx<'a, T: Scalar> {
    pub graph: &'a mut Graph<T>,
    store: &'a ParameterStore<T>,
    bindings: Vec<Option<Var>>,
    mode: Mode,
    track_grads: bool,
    updates: Vec<(ParamId, Tensor<T>)>,
}

impl<'a, T: Scalar> ForwardCtx<'a, T> {
    pub fn new(
        graph: &'a mut Graph<T>,
        store: &'a ParameterStore<T>,
        mode: Mode,
        track_grads: bool,
    ) -> Self {
        Self {
            graph,
            store,
            bindings: vec![None; store.len()],
            mode,
            track_grads,
            updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Graph leaf holding parameter `id`, created on first use.
    pub fn var(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bindings[id.0] {
            return v;
        }
        let entry = self.store.entry(id);
        let v = self
            .graph
            .leaf(entry.value.clone(), self.track_grads && entry.trainable);
        self.bindings[id.0] = Some(v);
        v
    }

    /// Leaves bound so far (indexed by parameter) and pending buffer writes.
    pub fn finish(self) -> (Vec<Option<Var>>, Vec<(ParamId, Tensor<T>)>) {
        (self.bindings, self.updates)
    }
}

pub(crate) fn he_normal<T: Scalar>(rng: &mut Rng, shape: &[usize]) -> Tensor<T> {
    let fan_in: usize = shape[1..].iter().product();
    let std = num_traits::Float::sqrt(2.0 / fan_in.max(1) as f64);
    let dist = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| T::lit(dist.sample(rng)))
}

/// Convolution without bias, batch norm, ReLU.
#[derive(Clone, Debug)]
pub struct ConvBn {
    pub weight: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParameterStore<T>,
        rng: &mut Rng,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let w = he_normal(rng, &[out_channels, in_channels, kernel, kernel]);
        Ok(Self {
            weight: store.add_param(&format!("{prefix}.conv.weight"), w)?,
            gamma: store.add_param(&format!("{prefix}.bn.gamma"), Tensor::full(&[out_channels], T::one()))?,
            beta: store.add_param(&format!("{prefix}.bn.beta"), Tensor::zeros(&[out_channels]))?,
            running_mean: store
                .add_buffer(&format!("{prefix}.bn.running_mean"), Tensor::zeros(&[out_channels]))?,
            running_var: store
                .add_buffer(&format!("{prefix}.bn.running_var"), Tensor::full(&[out_channels], T::one()))?,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let (w, gamma, beta) = (ctx.var(self.weight), ctx.var(self.gamma), ctx.var(self.beta));
        let y = ctx.graph.conv2d(x, w, None, self.stride, self.padding)?;
        let bn = ctx.graph.batch_norm2d(
            y,
            gamma,
            beta,
            ctx.store.value(self.running_mean),
            ctx.store.value(self.running_var),
            ctx.mode,
        )?;
        if let (Some(m), Some(v)) = (bn.running_mean, bn.running_var) {
            ctx.updates.push((self.running_mean, m));
            ctx.updates.push((self.running_var, v));
        }
        ctx.graph.relu(bn.output)
    }
}

fn channels<T: Scalar>(ctx: &ForwardCtx<'_, T>, x: Var, op: &'static str) -> Result<usize> {
    Ok(ctx.graph.value(x).dims4(op)?[1])
}

/// Concatenating identity block: `concat(x, f(x))` where `f` is a 1x1
/// bottleneck followed by a 3x3 convolution emitting `growth` channels.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub bottleneck: ConvBn,
    pub conv: ConvBn,
    pub in_channels: usize,
    pub growth: usize,
}

impl ConvBlock {
    pub fn new<T: Scalar>(
        store: &mut ParameterStore<T>,
        rng: &mut Rng,
        prefix: &str,
        in_channels: usize,
        growth: usize,
    ) -> Result<Self> {
        let width = BOTTLENECK_FACTOR * growth;
        Ok(Self {
            bottleneck: ConvBn::new(store, rng, &format!("{prefix}.conv1"), in_channels, width, 1, 1, 0)?,
            conv: ConvBn::new(store, rng, &format!("{prefix}.conv2"), width, growth, 3, 1, 1)?,
            in_channels,
            growth,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels + self.growth
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let c = channels(ctx, x, "conv_block")?;
        if c != self.in_channels {
            return Err(shape_err(
                "conv_block",
                format!("input has {c} channels, block expects {}", self.in_channels),
            ));
        }
        let h = self.bottleneck.forward(ctx, x)?;
        let f = self.conv.forward(ctx, h)?;
        ctx.graph.concat_channels(x, f)
    }
}

/// Conv blocks chained on the running concatenation.
#[derive(Clone, Debug)]
pub struct DenseBlock {
    pub layers: Vec<ConvBlock>,
}

impl DenseBlock {
    pub fn new<T: Scalar>(
        store: &mut ParameterStore<T>,
        rng: &mut Rng,
        prefix: &str,
        in_channels: usize,
        num_layers: usize,
        growth: usize,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(crate::Error::Config(format!("{prefix}: dense block needs >= 1 layer")));
        }
        let mut layers = Vec::with_capacity(num_layers);
        let mut c = in_channels;
        for i in 0..num_layers {
            let block = ConvBlock::new(store, rng, &format!("{prefix}.layer{i}"), c, growth)?;
            c = block.out_channels();
            layers.push(block);
        }
        Ok(Self { layers })
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map(ConvBlock::out_channels).unwrap_or(0)
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        self.layers.iter().try_fold(x, |acc, layer| layer.forward(ctx, acc))
    }
}

/// 1x1 compression followed by 2x2 average pooling. Exposes both the pooled
/// output (fed to the next dense block) and the pre-pool output (the skip
/// connection consumed by the decoder).
#[derive(Clone, Debug)]
pub struct TransitionBlock {
    pub conv: ConvBn,
}

impl TransitionBlock {
    pub fn new<T: Scalar>(
        store: &mut ParameterStore<T>,
        rng: &mut Rng,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv: ConvBn::new(store, rng, prefix, in_channels, out_channels, 1, 1, 0)?,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels
    }

    /// Returns `(pooled, pre_pool)`.
    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<(Var, Var)> {
        let c = channels(ctx, x, "transition")?;
        if c != self.conv.in_channels {
            return Err(shape_err(
                "transition",
                format!("input has {c} channels, block expects {}", self.conv.in_channels),
            ));
        }
        let out_b = self.conv.forward(ctx, x)?;
        let out_a = ctx.graph.avg_pool2d(out_b)?;
        Ok((out_a, out_b))
    }
}

/// Upsamples the previous stage, concatenates the matching skip connection
/// and convolves (3x3, BN, ReLU).
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub conv: ConvBn,
    pub in_a_channels: usize,
    pub in_b_channels: usize,
}

impl DecoderBlock {
    pub fn new<T: Scalar>(
        store: &mut ParameterStore<T>,
        rng: &mut Rng,
        prefix: &str,
        in_a_channels: usize,
        in_b_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv: ConvBn::new(store, rng, prefix, in_a_channels + in_b_channels, out_channels, 3, 1, 1)?,
            in_a_channels,
            in_b_channels,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, in_a: Var, in_b: Var) -> Result<Var> {
        let up = ctx.graph.upsample_nearest2x(in_a)?;
        let (su, sb) = (ctx.graph.value(up).shape(), ctx.graph.value(in_b).shape());
        if su.len() != 4 || sb.len() != 4 || su[0] != sb[0] || su[2..] != sb[2..] {
            return Err(shape_err(
                "decoder_block",
                format!("upsampled input {su:?} does not match skip {sb:?}"),
            ));
        }
        let y = ctx.graph.concat_channels(up, in_b)?;
        self.conv.forward(ctx, y)
    }
}
