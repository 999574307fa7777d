use super::{LayerSpec, NnError, SeededRng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Generator,
    Critic,
}

/// A layer stack plus its parameters, two tensors (weight, bias) per
/// parameterized layer in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    role: Role,
    layers: Vec<LayerSpec>,
    params: Vec<Tensor>,
    /// `offsets[i]` is the index of layer `i`'s first parameter tensor.
    offsets: Vec<usize>,
}

/// Activations recorded by [`Network::forward`]: the network input followed
/// by every layer output.
#[derive(Clone, Debug)]
pub struct Trace {
    activations: Vec<Tensor>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.activations
            .last()
            .expect("trace holds the input at least")
    }

    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    pub fn activations(&self) -> &[Tensor] {
        &self.activations
    }
}

#[derive(Clone, Debug)]
pub struct Gradients {
    /// One tensor per parameter tensor, same order and shapes.
    pub params: Vec<Tensor>,
    /// Gradient with respect to the network input, when requested.
    pub input: Option<Tensor>,
}

/// Builds a network with Glorot-uniform weights and zero biases drawn from
/// `SeededRng::new(seed)`, layer by layer in row-major order.
pub fn init_network(
    layers: Vec<LayerSpec>,
    role: Role,
    sample_shape: &[usize],
    seed: u64,
) -> Result<Network, NnError> {
    check_structure(&layers, role)?;
    propagate(&layers, sample_shape).map_err(|e| NnError::IncompatibleSpec(e.to_string()))?;
    let mut rng = SeededRng::new(seed);
    let mut params = Vec::new();
    for layer in &layers {
        let shapes = layer.param_shapes();
        if let (Some((fan_in, fan_out)), [wshape, bshape]) = (layer.fans(), shapes.as_slice()) {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = wshape.iter().product();
            let w = (0..n).map(|_| rng.symmetric(bound) as f32).collect();
            params.push(Tensor::new(wshape.clone(), w)?);
            params.push(Tensor::zeros(bshape.clone()));
        }
    }
    Network::from_parts(role, layers, params)
}

fn check_structure(layers: &[LayerSpec], role: Role) -> Result<(), NnError> {
    if layers.is_empty() {
        return Err(NnError::IncompatibleSpec("empty layer list".into()));
    }
    for l in layers {
        l.validate()?;
    }
    let last = layers.last().expect("non-empty");
    match role {
        Role::Generator if *last != LayerSpec::Tanh => Err(NnError::IncompatibleSpec(
            "generator must end in Tanh".into(),
        )),
        Role::Critic if !matches!(last, LayerSpec::Dense { outputs: 1, .. }) => Err(
            NnError::IncompatibleSpec("critic must end in a scalar Dense layer".into()),
        ),
        _ => {
            // Channel counts must chain even when spatial extents are unknown.
            let mut channels: Option<usize> = None;
            for l in layers {
                match *l {
                    LayerSpec::Conv {
                        in_channels,
                        out_channels,
                        ..
                    }
                    | LayerSpec::TransposedConv {
                        in_channels,
                        out_channels,
                        ..
                    } => {
                        if channels.is_some_and(|c| c != in_channels) {
                            return Err(NnError::IncompatibleSpec(format!(
                                "layer {l:?} expects {in_channels} channels, previous layer gives {}",
                                channels.unwrap_or_default()
                            )));
                        }
                        channels = Some(out_channels);
                    }
                    LayerSpec::Dense { outputs, .. } => channels = Some(outputs),
                    _ => {}
                }
            }
            Ok(())
        }
    }
}

fn propagate(layers: &[LayerSpec], sample: &[usize]) -> Result<Vec<usize>, NnError> {
    layers
        .iter()
        .try_fold(sample.to_vec(), |shape, l| l.output_shape(&shape))
}

impl Network {
    /// Assembles a network from explicit parameters, validating structure
    /// and parameter shapes.
    pub fn from_parts(
        role: Role,
        layers: Vec<LayerSpec>,
        params: Vec<Tensor>,
    ) -> Result<Self, NnError> {
        check_structure(&layers, role)?;
        let mut offsets = Vec::with_capacity(layers.len());
        let mut expected = Vec::new();
        for l in &layers {
            offsets.push(expected.len());
            expected.extend(l.param_shapes());
        }
        if expected.len() != params.len()
            || expected
                .iter()
                .zip(&params)
                .any(|(s, p)| s.as_slice() != p.shape())
        {
            return Err(NnError::IncompatibleSpec(format!(
                "parameter shapes {:?} do not match layers (expected {expected:?})",
                params
                    .iter()
                    .map(|p| p.shape().to_vec())
                    .collect::<Vec<_>>()
            )));
        }
        Ok(Self {
            role,
            layers,
            params,
            offsets,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, sample: &[usize]) -> Result<Vec<usize>, NnError> {
        propagate(&self.layers, sample)
    }

    fn layer_params(&self, i: usize) -> &[Tensor] {
        let start = self.offsets[i];
        &self.params[start..start + self.layers[i].param_shapes().len()]
    }

    /// Runs a batch `[N, ...]` through the stack and keeps every activation.
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Trace), NnError> {
        if input.shape().is_empty() || input.batch() == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "input {:?} has no batch axis",
                input.shape()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next =
                layer.forward(self.layer_params(i), activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        let out = activations.last().expect("non-empty").clone();
        Ok((out, Trace { activations }))
    }

    /// Forward pass without retaining a trace.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, NnError> {
        if input.shape().is_empty() || input.batch() == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "input {:?} has no batch axis",
                input.shape()
            )));
        }
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(self.layer_params(i), &x)?;
        }
        Ok(x)
    }

    /// Exact gradients of `sum(output * output_grad)` with respect to every
    /// parameter and to the input.
    pub fn backward(&self, trace: &Trace, output_grad: &Tensor) -> Result<Gradients, NnError> {
        self.backward_impl(trace, output_grad, true)
    }

    /// As [`Network::backward`] but skips the input gradient.
    pub fn backward_params(
        &self,
        trace: &Trace,
        output_grad: &Tensor,
    ) -> Result<Gradients, NnError> {
        self.backward_impl(trace, output_grad, false)
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        output_grad: &Tensor,
        need_input: bool,
    ) -> Result<Gradients, NnError> {
        let acts = &trace.activations;
        if acts.len() != self.layers.len() + 1 {
            return Err(NnError::TraceMismatch(format!(
                "trace has {} activations for {} layers",
                acts.len(),
                self.layers.len()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let want = layer
                .output_shape(&acts[i].shape()[1..])
                .map_err(|e| NnError::TraceMismatch(e.to_string()))?;
            if acts[i + 1].shape()[1..] != want[..] || acts[i + 1].batch() != acts[i].batch() {
                return Err(NnError::TraceMismatch(format!(
                    "activation {} has shape {:?}, layer {layer:?} produces {want:?}",
                    i + 1,
                    acts[i + 1].shape()
                )));
            }
        }
        if output_grad.shape() != trace.output().shape() {
            return Err(NnError::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                output_grad.shape(),
                trace.output().shape()
            )));
        }
        let mut param_grads: Vec<Option<Tensor>> = vec![None; self.params.len()];
        let mut grad = output_grad.clone();
        let mut input_grad = None;
        for i in (0..self.layers.len()).rev() {
            let want_input = i > 0 || need_input;
            let (pg, gx) = self.layers[i].backward(
                self.layer_params(i),
                &acts[i],
                &acts[i + 1],
                &grad,
                want_input,
            );
            for (j, g) in pg.into_iter().enumerate() {
                param_grads[self.offsets[i] + j] = Some(g);
            }
            match gx {
                Some(gx) if i > 0 => grad = gx,
                gx => input_grad = gx,
            }
        }
        Ok(Gradients {
            params: param_grads
                .into_iter()
                .map(|g| g.expect("every parameter visited"))
                .collect(),
            input: input_grad,
        })
    }
}

/// Image-to-image generator preserving spatial size: four 3x3 stride-1
/// convolutions, leaky activations, tanh output.
pub fn default_generator_layers(hidden: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(1, hidden, 3, 1, 1),
        LayerSpec::leaky_relu(0.2),
        LayerSpec::conv(hidden, 2 * hidden, 3, 1, 1),
        LayerSpec::leaky_relu(0.2),
        LayerSpec::conv(2 * hidden, hidden, 3, 1, 1),
        LayerSpec::leaky_relu(0.2),
        LayerSpec::conv(hidden, 1, 3, 1, 1),
        LayerSpec::Tanh,
    ]
}

/// Two stride-2 4x4 convolutions then a scalar dense head, for `h x w`
/// single-channel inputs.
pub fn default_critic_layers(hidden: usize, h: usize, w: usize) -> Vec<LayerSpec> {
    let down = |v: usize| (v + 2 - 4) / 2 + 1;
    let (h2, w2) = (down(down(h)), down(down(w)));
    vec![
        LayerSpec::conv(1, hidden, 4, 2, 1),
        LayerSpec::leaky_relu(0.2),
        LayerSpec::conv(hidden, 2 * hidden, 4, 2, 1),
        LayerSpec::leaky_relu(0.2),
        LayerSpec::dense(2 * hidden * h2 * w2, 1),
    ]
}

/// Encoder-decoder generator for square images whose side is a power of
/// two, at least 8. Stride-2 4x4 convolutions halve the side down to 4, a
/// valid 4x4 convolution reduces that to a `code`-channel 1x1 vector, and
/// transposed convolutions mirror the path back up, ending in tanh. Every
/// output pixel therefore depends on the whole input.
pub fn encoder_decoder_generator_layers(
    side: usize,
    hidden: usize,
    code: usize,
) -> Result<Vec<LayerSpec>, NnError> {
    if side < 8 || !side.is_power_of_two() {
        return Err(NnError::IncompatibleSpec(format!(
            "encoder-decoder generator needs a power-of-two side of at least 8, got {side}"
        )));
    }
    let levels = side.trailing_zeros() as usize - 2;
    let ch: Vec<usize> = (0..levels).map(|i| (hidden << i).min(8 * hidden)).collect();
    let act = || LayerSpec::leaky_relu(0.2);
    let mut layers = Vec::new();
    let mut prev = 1;
    for &c in &ch {
        layers.extend([LayerSpec::conv(prev, c, 4, 2, 1), act()]);
        prev = c;
    }
    layers.extend([LayerSpec::conv(prev, code, 4, 1, 0), act()]);
    layers.extend([LayerSpec::transposed_conv(code, prev, 4, 1, 0), act()]);
    for i in (1..levels).rev() {
        layers.extend([LayerSpec::transposed_conv(ch[i], ch[i - 1], 4, 2, 1), act()]);
    }
    layers.extend([
        LayerSpec::transposed_conv(ch[0], 1, 4, 2, 1),
        LayerSpec::Tanh,
    ]);
    Ok(layers)
}
