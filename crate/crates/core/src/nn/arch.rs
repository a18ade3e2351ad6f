//! Architecture descriptors for the three sequence regressors.

use super::tensor::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Cnn,
    Lstm,
    Tcn,
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Cnn => "cnn",
            Architecture::Lstm => "lstm",
            Architecture::Tcn => "tcn",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, NnError> {
        match s {
            "cnn" => Ok(Architecture::Cnn),
            "lstm" => Ok(Architecture::Lstm),
            "tcn" => Ok(Architecture::Tcn),
            other => Err(NnError::BadSpec(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Per-architecture sizing. Defaults follow the standard instances below;
/// smaller layouts exist so gradient checks can run on miniature models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    /// Two valid convolutions (`channels.0` then `channels.1` outputs) with
    /// ReLU, flattened into one fully connected head.
    Cnn { channels: (usize, usize), kernel: usize },
    /// `layers` stacked unidirectional LSTM layers of `units` each; the head
    /// reads the top layer's last hidden state.
    Lstm { layers: usize, units: usize },
    /// `blocks` residual blocks of causal convolutions with dilation
    /// `2^block`; the head reads the last time step of the final block.
    Tcn { blocks: usize, channels: usize, kernel: usize },
}

/// Full description of a sequence regressor: which architecture, how many
/// input channels, the window length it consumes, and the output dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub window: usize,
    pub output_dim: usize,
    pub layout: Layout,
}

impl ModelSpec {
    /// Standard CNN: conv channels 8 then 16, kernel 3, no pooling.
    pub fn cnn(input_channels: usize, window: usize, output_dim: usize) -> Self {
        Self { input_channels, window, output_dim, layout: Layout::Cnn { channels: (8, 16), kernel: 3 } }
    }

    /// Standard LSTM: 3 stacked layers of 16 units.
    pub fn lstm(input_channels: usize, window: usize, output_dim: usize) -> Self {
        Self { input_channels, window, output_dim, layout: Layout::Lstm { layers: 3, units: 16 } }
    }

    /// Standard TCN: 4 residual blocks, 16 channels, kernel 3, dilations
    /// 1/2/4/8 (receptive field 31).
    pub fn tcn(input_channels: usize, window: usize, output_dim: usize) -> Self {
        Self { input_channels, window, output_dim, layout: Layout::Tcn { blocks: 4, channels: 16, kernel: 3 } }
    }

    /// Standard instance of `arch` for the given shapes.
    pub fn standard(arch: Architecture, input_channels: usize, window: usize, output_dim: usize) -> Self {
        match arch {
            Architecture::Cnn => Self::cnn(input_channels, window, output_dim),
            Architecture::Lstm => Self::lstm(input_channels, window, output_dim),
            Architecture::Tcn => Self::tcn(input_channels, window, output_dim),
        }
    }

    pub fn arch(&self) -> Architecture {
        match self.layout {
            Layout::Cnn { .. } => Architecture::Cnn,
            Layout::Lstm { .. } => Architecture::Lstm,
            Layout::Tcn { .. } => Architecture::Tcn,
        }
    }

    /// Time steps the last output can see backward through the network;
    /// meaningful for the TCN, where it is `1 + (k-1) * sum(dilations)`.
    pub fn receptive_field(&self) -> usize {
        match self.layout {
            Layout::Tcn { blocks, kernel, .. } => {
                let dil_sum: usize = (0..blocks).map(|b| 1 << b).sum();
                1 + (kernel - 1) * dil_sum
            }
            // The CNN sees the whole window through the flattening head, the
            // LSTM through recurrence.
            _ => self.window,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_channels == 0 || self.window == 0 || self.output_dim == 0 {
            return Err(NnError::BadSpec(
                "input_channels, window, and output_dim must all be >= 1".into(),
            ));
        }
        match self.layout {
            Layout::Cnn { channels, kernel } => {
                if channels.0 == 0 || channels.1 == 0 || kernel == 0 {
                    return Err(NnError::BadSpec("cnn channels and kernel must be >= 1".into()));
                }
                if self.window < 2 * (kernel - 1) + 1 {
                    return Err(NnError::BadSpec(format!(
                        "window {} too short for two valid kernel-{} convolutions",
                        self.window, kernel
                    )));
                }
            }
            Layout::Lstm { layers, units } => {
                if layers == 0 || units == 0 {
                    return Err(NnError::BadSpec("lstm layers and units must be >= 1".into()));
                }
            }
            Layout::Tcn { blocks, channels, kernel } => {
                if blocks == 0 || channels == 0 || kernel == 0 {
                    return Err(NnError::BadSpec("tcn blocks, channels, kernel must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}
