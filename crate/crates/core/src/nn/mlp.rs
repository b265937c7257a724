use crate::error::{Error, Result};
use crate::numerics::{gemm, DenseMatrix, RngState, Transpose};

/// Variance of the i.i.d. Gaussian weight initialization.
pub const INIT_VARIANCE: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Network shape: `widths = [input, hidden…, output]`. The hidden activation
/// applies to every hidden layer; the output layer is always linear.
/// `skip[i]` adds the input of hidden layer `i` to its activation.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    widths: Vec<usize>,
    activation: Activation,
    skip: Vec<bool>,
}

impl MlpConfig {
    pub fn new(widths: Vec<usize>, activation: Activation, skip: Vec<bool>) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::Config(format!(
                "an MLP needs at least one hidden layer, got widths {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config(format!("zero layer width in {widths:?}")));
        }
        let hidden = widths.len() - 2;
        if skip.len() != hidden {
            return Err(Error::Config(format!(
                "{} skip flags for {hidden} hidden layers",
                skip.len()
            )));
        }
        for (i, &s) in skip.iter().enumerate() {
            if s && widths[i] != widths[i + 1] {
                return Err(Error::Config(format!(
                    "skip connection on hidden layer {i} joins widths {} and {}",
                    widths[i],
                    widths[i + 1]
                )));
            }
        }
        Ok(Self { widths, activation, skip })
    }

    /// ReLU network without skip connections.
    pub fn relu(widths: Vec<usize>) -> Result<Self> {
        let hidden = widths.len().saturating_sub(2);
        Self::new(widths, Activation::Relu, vec![false; hidden])
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn skip(&self) -> &[bool] {
        &self.skip
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_params(&self, params: &[LayerParams]) -> Result<()> {
        if params.len() != self.num_layers() {
            return Err(Error::Dimension(format!(
                "{} parameter layers for a {}-layer network",
                params.len(),
                self.num_layers()
            )));
        }
        for (i, (p, w)) in params.iter().zip(self.widths.windows(2)).enumerate() {
            if p.w.shape() != (w[0], w[1]) || p.bias.len() != w[1] {
                return Err(Error::Dimension(format!(
                    "layer {i} has W {:?} and bias {}, expected {}x{}",
                    p.w.shape(),
                    p.bias.len(),
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(())
    }
}

/// Weights (`fan_in × fan_out`) and bias of one affine layer. Also used for
/// gradients, which mirror the parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub w: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: DenseMatrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w.rows(), self.w.cols())
    }

    pub fn all_finite(&self) -> bool {
        self.w.all_finite() && self.bias.iter().all(|b| b.is_finite())
    }

    pub fn num_params(&self) -> usize {
        self.w.as_slice().len() + self.bias.len()
    }

    pub fn buffers(&self) -> [&[f64]; 2] {
        [self.w.as_slice(), &self.bias]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 2] {
        [self.w.as_mut_slice(), &mut self.bias]
    }
}

pub type Gradients = Vec<LayerParams>;

pub fn init_params(cfg: &MlpConfig, rng: &mut RngState) -> Vec<LayerParams> {
    init_params_with_variance(cfg, rng, INIT_VARIANCE)
}

pub fn init_params_with_variance(
    cfg: &MlpConfig,
    rng: &mut RngState,
    variance: f64,
) -> Vec<LayerParams> {
    let sd = variance.sqrt();
    cfg.widths
        .windows(2)
        .map(|w| LayerParams {
            w: DenseMatrix::from_fn(w[0], w[1], |_, _| sd * rng.standard_normal()),
            bias: vec![0.0; w[1]],
        })
        .collect()
}

/// Everything the backward pass needs from a forward call.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    input: DenseMatrix,
    /// Pre-activations of the hidden layers.
    pre: Vec<DenseMatrix>,
    /// Outputs of the hidden layers (after activation and skip).
    hidden: Vec<DenseMatrix>,
    widths: Vec<usize>,
}

impl MlpTrace {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn hidden_outputs(&self) -> &[DenseMatrix] {
        &self.hidden
    }
}

fn affine(x: &DenseMatrix, layer: &LayerParams) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(x.rows(), layer.w.cols());
    for i in 0..out.rows() {
        out.row_mut(i).copy_from_slice(&layer.bias);
    }
    gemm(1.0, x, Transpose::No, &layer.w, Transpose::No, 1.0, &mut out)?;
    Ok(out)
}

pub fn mlp_forward(
    params: &[LayerParams],
    cfg: &MlpConfig,
    x: &DenseMatrix,
) -> Result<(MlpTrace, DenseMatrix)> {
    cfg.check_params(params)?;
    if x.cols() != cfg.input_width() {
        return Err(Error::Dimension(format!(
            "input has {} columns, network expects {}",
            x.cols(),
            cfg.input_width()
        )));
    }
    let hidden_count = cfg.num_layers() - 1;
    let mut pre = Vec::with_capacity(hidden_count);
    let mut hidden: Vec<DenseMatrix> = Vec::with_capacity(hidden_count);
    for (i, layer) in params[..hidden_count].iter().enumerate() {
        let prev = hidden.last().unwrap_or(x);
        let a = affine(prev, layer)?;
        let mut h = a.map(|v| cfg.activation.apply(v));
        if cfg.skip[i] {
            h.add_scaled(prev, 1.0)?;
        }
        pre.push(a);
        hidden.push(h);
    }
    let out = affine(hidden.last().unwrap(), &params[hidden_count])?;
    let trace = MlpTrace {
        input: x.clone(),
        pre,
        hidden,
        widths: cfg.widths.clone(),
    };
    Ok((trace, out))
}

/// Reverse pass for `upstream = ∂L/∂output`. The input gradient is only
/// computed when `want_input_grad` is set.
pub fn mlp_backward(
    params: &[LayerParams],
    cfg: &MlpConfig,
    trace: &MlpTrace,
    upstream: &DenseMatrix,
    want_input_grad: bool,
) -> Result<(Gradients, Option<DenseMatrix>)> {
    cfg.check_params(params)?;
    if trace.widths != cfg.widths {
        return Err(Error::Contract(format!(
            "trace recorded for widths {:?}, backward called with {:?}",
            trace.widths, cfg.widths
        )));
    }
    if upstream.shape() != (trace.batch_size(), cfg.output_width()) {
        return Err(Error::Contract(format!(
            "upstream gradient is {:?}, forward output was {:?}",
            upstream.shape(),
            (trace.batch_size(), cfg.output_width())
        )));
    }
    let mut grads: Vec<LayerParams> = params.iter().map(LayerParams::zeros_like).collect();
    // delta = ∂L/∂(affine output of layer l); carry = skip contribution to
    // ∂L/∂(input of layer l) pending from the layer above
    let mut delta = upstream.clone();
    let mut carry: Option<DenseMatrix> = None;
    for l in (0..cfg.num_layers()).rev() {
        let input = if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
        gemm(1.0, input, Transpose::Yes, &delta, Transpose::No, 0.0, &mut grads[l].w)?;
        grads[l].bias = delta.column_sums();
        if l == 0 && !want_input_grad {
            return Ok((grads, None));
        }
        let mut d_input = DenseMatrix::zeros(delta.rows(), params[l].w.rows());
        gemm(1.0, &delta, Transpose::No, &params[l].w, Transpose::Yes, 0.0, &mut d_input)?;
        if let Some(c) = carry.take() {
            d_input.add_scaled(&c, 1.0)?;
        }
        if l == 0 {
            return Ok((grads, Some(d_input)));
        }
        let h = l - 1;
        let mut next = d_input.clone();
        for (d, &a) in next.as_mut_slice().iter_mut().zip(trace.pre[h].as_slice()) {
            *d *= cfg.activation.derivative(a);
        }
        if cfg.skip[h] {
            carry = Some(d_input);
        }
        delta = next;
    }
    unreachable!("the loop returns at layer 0")
}
