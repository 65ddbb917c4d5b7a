use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
}

/// A plain conv → dense → classifier network, ReLU everywhere except the logits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    /// (height, width, channels)
    pub input_shape: (usize, usize, usize),
    pub conv_blocks: Vec<ConvBlock>,
    pub fc_widths: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

/// Geometry of one circular-padded convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        self.height / self.stride
    }

    pub fn out_width(&self) -> usize {
        self.width / self.stride
    }

    /// Rows of the im2col patch matrix per example.
    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    /// Columns of the im2col patch matrix.
    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv(ConvGeom),
    Dense { inputs: usize, outputs: usize, relu: bool },
}

/// One parameterized module of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv(g) => vec![g.kernel, g.kernel, g.in_channels, g.out_channels],
            LayerKind::Dense { inputs, outputs, .. } => vec![inputs, outputs],
        }
    }

    pub fn bias_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv(g) => g.out_channels,
            LayerKind::Dense { outputs, .. } => outputs,
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv(g) => g.patch_len(),
            LayerKind::Dense { inputs, .. } => inputs,
        }
    }

    /// Flattened width of this module's output for one example.
    pub fn output_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv(g) => g.positions() * g.out_channels,
            LayerKind::Dense { outputs, .. } => outputs,
        }
    }
}

impl ArchDescriptor {
    /// 16×16×3 input; conv (8,3,1), (16,3,2), (16,3,2); fc [32]; 10 classes.
    pub fn tiny4() -> Self {
        ArchDescriptor {
            input_shape: (16, 16, 3),
            conv_blocks: vec![
                ConvBlock { out_channels: 8, kernel_size: 3, stride: 1 },
                ConvBlock { out_channels: 16, kernel_size: 3, stride: 2 },
                ConvBlock { out_channels: 16, kernel_size: 3, stride: 2 },
            ],
            fc_widths: vec![32],
            num_classes: 10,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input_shape;
        if !h.is_power_of_two() || !w.is_power_of_two() {
            return domain(format!("input height/width must be powers of two, got {h}x{w}"));
        }
        if c == 0 || self.num_classes < 2 {
            return domain("need at least one input channel and two classes");
        }
        if self.conv_blocks.is_empty() || self.fc_widths.is_empty() {
            return domain("need at least one conv block and one fully connected layer");
        }
        let (mut h, mut w) = (h, w);
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.out_channels == 0 || b.kernel_size == 0 || b.stride == 0 {
                return domain(format!("conv{}: zero-sized block {b:?}", i + 1));
            }
            if b.kernel_size > h || b.kernel_size > w {
                return domain(format!("conv{}: kernel {} exceeds {h}x{w} input", i + 1, b.kernel_size));
            }
            if h % b.stride != 0 || w % b.stride != 0 {
                return domain(format!("conv{}: stride {} does not divide {h}x{w}", i + 1, b.stride));
            }
            h /= b.stride;
            w /= b.stride;
        }
        if self.fc_widths.contains(&0) {
            return domain("zero-width fully connected layer");
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        let (h, w, c) = self.input_shape;
        h * w * c
    }

    /// Modules in forward order: `conv1..convN`, `fc1..fcM`, `classifier`.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let (mut h, mut w, mut c) = self.input_shape;
        let mut out = Vec::new();
        for (i, b) in self.conv_blocks.iter().enumerate() {
            let g = ConvGeom {
                height: h,
                width: w,
                in_channels: c,
                out_channels: b.out_channels,
                kernel: b.kernel_size,
                stride: b.stride,
            };
            out.push(LayerSpec { name: format!("conv{}", i + 1), kind: LayerKind::Conv(g) });
            h /= b.stride;
            w /= b.stride;
            c = b.out_channels;
        }
        let mut width = h * w * c;
        for (i, &fw) in self.fc_widths.iter().enumerate() {
            out.push(LayerSpec {
                name: format!("fc{}", i + 1),
                kind: LayerKind::Dense { inputs: width, outputs: fw, relu: true },
            });
            width = fw;
        }
        out.push(LayerSpec {
            name: "classifier".into(),
            kind: LayerKind::Dense { inputs: width, outputs: self.num_classes, relu: false },
        });
        out
    }

    pub fn module_names(&self) -> Vec<String> {
        self.layers().into_iter().map(|l| l.name).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weight_shape().iter().product::<usize>() + l.bias_len())
            .sum()
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let arch: ArchDescriptor = serde_json::from_str(text)
            .map_err(|e| Error::Domain(format!("bad architecture descriptor: {e}")))?;
        arch.validate()?;
        Ok(arch)
    }
}
