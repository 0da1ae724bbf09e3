use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::blocks::{ConvBn, DecoderBlock, DenseBlock, ForwardCtx, TransitionBlock};
use super::config::AvNetConfig;
use super::params::{ParamId, ParameterStore};
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::kernels::Mode;
use crate::rng::{self, seeded};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The assembled network and its parameters.
///
/// Topology: stem (7x7 stride 2) -> four dense/transition stages -> four
/// decoder blocks consuming the transitions' pre-pool outputs deepest first
/// -> 2x upsample + 3x3 conv back to input resolution -> 1x1 classifier ->
/// channel softmax.
#[derive(Clone, Debug)]
pub struct AvNet<T> {
    config: AvNetConfig,
    store: ParameterStore<T>,
    stem: ConvBn,
    dense: Vec<DenseBlock>,
    transitions: Vec<TransitionBlock>,
    /// `decoders[i]` consumes the skip of `transitions[i]`.
    decoders: Vec<DecoderBlock>,
    head: ConvBn,
    classifier_weight: ParamId,
    classifier_bias: ParamId,
}

/// A recorded training forward pass, pending [`AvNet::absorb`].
pub struct TrainPass<T> {
    pub output: Var,
    bindings: Vec<Option<Var>>,
    updates: Vec<(ParamId, Tensor<T>)>,
}

impl<T: Scalar> AvNet<T> {
    pub fn build(config: AvNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(rng::derive(seed, rng::stream::MODEL_INIT, 0));
        let mut store = ParameterStore::new();
        let stem = ConvBn::new(
            &mut store,
            &mut rng,
            "encoder.stem",
            config.input_channels,
            config.stem_channels,
            7,
            2,
            3,
        )?;
        let mut c = config.stem_channels;
        let mut dense = Vec::with_capacity(4);
        let mut transitions = Vec::with_capacity(4);
        for (i, &layers) in config.dense_block_layers.iter().enumerate() {
            let d = DenseBlock::new(
                &mut store,
                &mut rng,
                &format!("encoder.dense{}", i + 1),
                c,
                layers,
                config.growth_rate,
            )?;
            c = d.out_channels();
            let t = TransitionBlock::new(
                &mut store,
                &mut rng,
                &format!("encoder.transition{}", i + 1),
                c,
                config.transition_channels(c),
            )?;
            c = t.out_channels();
            dense.push(d);
            transitions.push(t);
        }
        let mut decoders: Vec<Option<DecoderBlock>> = (0..4).map(|_| None).collect();
        let mut in_a = c;
        for i in (0..4).rev() {
            let d = DecoderBlock::new(
                &mut store,
                &mut rng,
                &format!("decoder.block{}", i + 1),
                in_a,
                transitions[i].out_channels(),
                config.decoder_channels[3 - i],
            )?;
            in_a = d.out_channels();
            decoders[i] = Some(d);
        }
        let head = ConvBn::new(&mut store, &mut rng, "head.up", in_a, in_a, 3, 1, 1)?;
        let cw = super::blocks_he_normal(&mut rng, &[config.num_classes, in_a, 1, 1]);
        let classifier_weight = store.add_param("head.classifier.weight", cw)?;
        let classifier_bias =
            store.add_param("head.classifier.bias", Tensor::zeros(&[config.num_classes]))?;
        Ok(Self {
            config,
            store,
            stem,
            dense,
            transitions,
            decoders: decoders.into_iter().map(|d| d.expect("all built")).collect(),
            head,
            classifier_weight,
            classifier_bias,
        })
    }

    pub fn config(&self) -> &AvNetConfig {
        &self.config
    }

    pub fn store(&self) -> &ParameterStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.store
    }

    pub fn dense_blocks(&self) -> &[DenseBlock] {
        &self.dense
    }

    pub fn transitions(&self) -> &[TransitionBlock] {
        &self.transitions
    }

    pub fn decoders(&self) -> &[DecoderBlock] {
        &self.decoders
    }

    /// Trainable element count (batch-norm running statistics excluded).
    pub fn count_parameters(&self) -> usize {
        self.store.count_trainable()
    }

    /// Number of convolution layers in the forward topology.
    pub fn conv_layer_count(&self) -> usize {
        let dense: usize = self.dense.iter().map(|d| 2 * d.layers.len()).sum();
        1 + dense + self.transitions.len() + self.decoders.len() + 2
    }

    /// Records the full forward pass on `ctx` and returns per-pixel class
    /// probabilities.
    pub fn forward(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let shape = ctx.graph.value(x).shape();
        let s = self.config.input_size;
        if shape.len() != 4 || shape[1] != self.config.input_channels || shape[2] != s || shape[3] != s {
            return Err(shape_err(
                "avnet_forward",
                format!("expected Nx{}x{s}x{s}, got {shape:?}", self.config.input_channels),
            ));
        }
        let mut h = self.stem.forward(ctx, x)?;
        let mut skips = Vec::with_capacity(4);
        for (dense, transition) in self.dense.iter().zip(&self.transitions) {
            h = dense.forward(ctx, h)?;
            let (pooled, pre_pool) = transition.forward(ctx, h)?;
            skips.push(pre_pool);
            h = pooled;
        }
        for (decoder, skip) in self.decoders.iter().zip(skips).rev() {
            h = decoder.forward(ctx, h, skip)?;
        }
        let up = ctx.graph.upsample_nearest2x(h)?;
        let h = self.head.forward(ctx, up)?;
        let (w, b) = (ctx.var(self.classifier_weight), ctx.var(self.classifier_bias));
        let logits = ctx.graph.conv2d(h, w, Some(b), 1, 0)?;
        ctx.graph.softmax_channels(logits)
    }

    /// Eval-mode forward; parameters and buffers are left untouched.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let mut ctx = ForwardCtx::new(&mut g, &self.store, Mode::Eval, false);
        let y = self.forward(&mut ctx, x)?;
        drop(ctx);
        Ok(g.value(y).clone())
    }

    /// Train-mode forward with every trainable parameter tracked.
    pub fn train_pass(&self, graph: &mut Graph<T>, input: &Tensor<T>) -> Result<TrainPass<T>> {
        let x = graph.constant(input.clone());
        let mut ctx = ForwardCtx::new(graph, &self.store, Mode::Train, true);
        let output = self.forward(&mut ctx, x)?;
        let (bindings, updates) = ctx.finish();
        Ok(TrainPass {
            output,
            bindings,
            updates,
        })
    }

    /// Moves gradients from `graph` (after backward) into the store and
    /// commits the pass's batch-norm running-stat updates.
    pub fn absorb(&mut self, graph: &mut Graph<T>, pass: TrainPass<T>) {
        for (entry, binding) in self.store.iter_mut().zip(pass.bindings) {
            entry.grad = binding.and_then(|v| graph.take_grad(v));
        }
        for (id, value) in pass.updates {
            self.store.entry_mut(id).value = value;
        }
    }
}

/// Names copied and skipped by [`load_pretrained`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    pub skipped: Vec<String>,
}

/// Copies every tensor of `source` whose name and shape match an entry of
/// `model`. Mismatches are skipped, or rejected up front in strict mode so
/// that a failed strict load leaves the model untouched.
pub fn load_pretrained<T: Scalar, U: Scalar>(
    model: &mut AvNet<T>,
    source: &ParameterStore<U>,
    strict: bool,
) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    let mut plan = Vec::new();
    for (_, e) in source.iter() {
        match model.store.id(&e.name) {
            Some(id) if model.store.value(id).shape() == e.value.shape() => {
                plan.push((id, &e.value));
                report.loaded.push(e.name.clone());
            }
            found => {
                if strict {
                    let why = match found {
                        Some(id) => format!(
                            "{}: shape {:?} does not match model shape {:?}",
                            e.name,
                            e.value.shape(),
                            model.store.value(id).shape()
                        ),
                        None => format!("{}: no such tensor in model", e.name),
                    };
                    return Err(Error::StrictLoad(why));
                }
                report.skipped.push(e.name.clone());
            }
        }
    }
    for (id, value) in plan {
        *model.store.value_mut(id) = value.cast();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_forward_shape_and_softmax() {
        let model = AvNet::<f32>::build(AvNetConfig::desk(), 3).unwrap();
        let x = Tensor::from_fn(&[2, 2, 64, 64], |i| ((i % 13) as f32) / 13.0);
        let y = model.predict(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 64, 64]);
        let hw = 64 * 64;
        for b in 0..2 {
            for px in 0..hw {
                let s: f32 = (0..3).map(|c| y.data()[(b * 3 + c) * hw + px]).sum();
                assert!((s - 1.0).abs() <= 1e-6);
            }
        }
        assert_eq!(model.predict(&x).unwrap(), y);
    }

    #[test]
    fn forward_rejects_wrong_size() {
        let model = AvNet::<f32>::build(AvNetConfig::tiny(), 3).unwrap();
        assert!(model.predict(&Tensor::zeros(&[1, 2, 64, 64])).is_err());
        assert!(model.predict(&Tensor::zeros(&[1, 3, 32, 32])).is_err());
    }

    #[test]
    fn build_is_seeded() {
        let a = AvNet::<f32>::build(AvNetConfig::tiny(), 9).unwrap();
        let b = AvNet::<f32>::build(AvNetConfig::tiny(), 9).unwrap();
        let c = AvNet::<f32>::build(AvNetConfig::tiny(), 10).unwrap();
        assert_eq!(a.store(), b.store());
        assert_ne!(a.store(), c.store());
    }

    #[test]
    fn build_rejects_invalid_config() {
        let cfg = AvNetConfig {
            input_size: 40,
            ..AvNetConfig::tiny()
        };
        assert!(matches!(AvNet::<f32>::build(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn single_conv_count() {
        let mut store = ParameterStore::<f32>::new();
        store.add_param("w", Tensor::zeros(&[4, 2, 3, 3])).unwrap();
        store.add_param("b", Tensor::zeros(&[4])).unwrap();
        store.add_buffer("running", Tensor::zeros(&[4])).unwrap();
        assert_eq!(store.count_trainable(), 76);
    }

    #[test]
    fn eval_leaves_buffers_alone_and_train_updates_them() {
        let mut model = AvNet::<f32>::build(AvNetConfig::tiny(), 1).unwrap();
        let before = model.store().clone();
        let x = Tensor::from_fn(&[2, 2, 32, 32], |i| ((i % 7) as f32) / 7.0);
        model.predict(&x).unwrap();
        assert_eq!(model.store(), &before);

        let mut g = Graph::new();
        let pass = model.train_pass(&mut g, &x).unwrap();
        let loss = g.sum_all(pass.output).unwrap();
        g.backward(loss).unwrap();
        model.absorb(&mut g, pass);
        let rm = model.store().get("encoder.stem.bn.running_mean").unwrap();
        assert_ne!(&rm.value, &before.get("encoder.stem.bn.running_mean").unwrap().value);
        assert!(model.store().trainable().all(|(_, e)| e.grad.is_some()));
        assert!(model.store().iter().filter(|(_, e)| !e.trainable).all(|(_, e)| e.grad.is_none()));
    }

    #[test]
    fn load_pretrained_variants() {
        let src = AvNet::<f32>::build(AvNetConfig::tiny(), 1).unwrap();
        let mut dst = AvNet::<f32>::build(AvNetConfig::tiny(), 2).unwrap();
        let report = load_pretrained(&mut dst, src.store(), true).unwrap();
        assert_eq!(report.loaded.len(), src.store().len());
        assert_eq!(dst.store(), src.store());

        let mut fresh = AvNet::<f32>::build(AvNetConfig::tiny(), 2).unwrap();
        let snapshot = fresh.store().clone();
        let report = load_pretrained(&mut fresh, &ParameterStore::<f32>::new(), false).unwrap();
        assert!(report.loaded.is_empty());
        assert_eq!(fresh.store(), &snapshot);

        let mut odd = ParameterStore::<f32>::new();
        odd.add_param("head.classifier.bias", Tensor::zeros(&[5])).unwrap();
        odd.add_param("encoder.stem.bn.gamma", Tensor::full(&[4], 2.0)).unwrap();
        let report = load_pretrained(&mut fresh, &odd, false).unwrap();
        assert_eq!(report.skipped, ["head.classifier.bias"]);
        assert_eq!(report.loaded, ["encoder.stem.bn.gamma"]);

        let mut strict = AvNet::<f32>::build(AvNetConfig::tiny(), 2).unwrap();
        let err = load_pretrained(&mut strict, &odd, true).unwrap_err();
        assert!(format!("{err}").contains("head.classifier.bias"));
        assert_eq!(strict.store(), &snapshot);
    }
}
