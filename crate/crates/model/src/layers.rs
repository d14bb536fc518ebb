use hdrtv_tensor::{add, conv2d, depthwise_conv2d, relu, transposed_conv2d, ConvSpec, Tensor};

use crate::params::{Init, ParamSpec, ParamStore};
use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Plain,
    /// Transposed, with the given output padding.
    Transposed(usize),
}

/// Geometry of one convolution plus the path of its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub path: String,
    pub spec: ConvSpec,
    pub kind: ConvKind,
    pub zero_init: bool,
}

impl Conv {
    pub fn new(path: impl Into<String>, spec: ConvSpec) -> Self {
        Conv { path: path.into(), spec, kind: ConvKind::Plain, zero_init: false }
    }

    pub fn transposed(path: impl Into<String>, spec: ConvSpec, output_padding: usize) -> Self {
        Conv { kind: ConvKind::Transposed(output_padding), ..Self::new(path, spec) }
    }

    pub fn zero_init(mut self) -> Self {
        self.zero_init = true;
        self
    }

    pub fn weight_path(&self) -> String {
        format!("{}.weight", self.path)
    }

    pub fn bias_path(&self) -> String {
        format!("{}.bias", self.path)
    }

    pub fn is_depthwise(&self) -> bool {
        let s = &self.spec;
        s.groups > 1 && s.groups == s.in_channels && s.in_channels == s.out_channels
    }

    pub fn params(&self, out: &mut Vec<ParamSpec>) {
        let s = &self.spec;
        let (shape, fan_in) = match self.kind {
            ConvKind::Plain => (s.weight_shape(), s.in_channels / s.groups * s.taps()),
            ConvKind::Transposed(_) => (s.transposed_weight_shape(), s.out_channels / s.groups * s.taps()),
        };
        let init = if self.zero_init { Init::Zero } else { Init::FanIn(fan_in) };
        out.push(ParamSpec { path: self.weight_path(), shape, init });
        if s.bias {
            out.push(ParamSpec { path: self.bias_path(), shape: [s.out_channels, 1, 1, 1], init });
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<Tensor, ModelError> {
        let w = p.get(&self.weight_path())?;
        let b = if self.spec.bias { Some(p.get(&self.bias_path())?) } else { None };
        Ok(match self.kind {
            ConvKind::Transposed(op) => transposed_conv2d(x, &self.spec, w, b, op)?,
            ConvKind::Plain if self.is_depthwise() && self.spec.stride == 1 => {
                depthwise_conv2d(x, self.spec.kernel.0, w, b)?
            }
            ConvKind::Plain => conv2d(x, &self.spec, w, b)?,
        })
    }
}

/// Large-kernel residual block, `x + Conv3×3(ReLU(DW17×17(ReLU(x))))`.
/// Without the depthwise stage it is `x + Conv3×3(ReLU(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lkrb {
    pub dw: Option<Conv>,
    pub conv: Conv,
}

impl Lkrb {
    pub fn new(path: &str, c: usize, large: bool) -> Self {
        Lkrb {
            dw: large.then(|| Conv::new(format!("{path}.dw"), ConvSpec::depthwise(c, crate::config::LARGE_K))),
            conv: Conv::new(format!("{path}.conv"), ConvSpec::new(c, c, 3)),
        }
    }

    pub fn params(&self, out: &mut Vec<ParamSpec>) {
        if let Some(dw) = &self.dw {
            dw.params(out);
        }
        self.conv.params(out);
    }

    pub fn forward(&self, p: &ParamStore, x: &Tensor) -> Result<Tensor, ModelError> {
        let mut h = relu(x);
        if let Some(dw) = &self.dw {
            h = relu(&dw.forward(p, &h)?);
        }
        Ok(add(x, &self.conv.forward(p, &h)?)?)
    }
}

pub(crate) fn chain(blocks: &[Lkrb], p: &ParamStore, x: Tensor) -> Result<Tensor, ModelError> {
    blocks.iter().try_fold(x, |h, b| b.forward(p, &h))
}
