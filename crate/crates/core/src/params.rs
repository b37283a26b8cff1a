//! Physical coefficients and task geometry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of the ball equation of motion.
///
/// `Literal` integrates `p'' = +g sin(theta)` exactly as the model is usually
/// written. With the angle convention used here (positive angle raises the
/// right control point) that accelerates the ball toward the raised end, so
/// the default is `Physical`, `p'' = -g sin(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RollSign {
    Literal,
    #[default]
    Physical,
}

impl RollSign {
    /// Multiplier applied to `g sin(theta)` in the ball equation.
    pub fn factor(self) -> f64 {
        match self {
            RollSign::Literal => 1.0,
            RollSign::Physical => -1.0,
        }
    }
}

/// Coefficients of the virtual system model plus geometry, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Board mass `M` (kg).
    pub board_mass: f64,
    /// Ball mass `m` (kg).
    pub ball_mass: f64,
    pub gravity: f64,
    /// Stylus coupling stiffness `k_h` (N/m).
    pub hand_stiffness: f64,
    /// Stylus coupling damping `c_h` (N s/m).
    pub hand_damping: f64,
    /// Stiffness `k_s` of the spring tying the board center to the origin (N/m).
    pub center_stiffness: f64,
    /// Distance `l` from the board center to each control point (m).
    pub half_span: f64,
    /// Board moment of inertia `I` (kg m^2).
    pub inertia: f64,
    pub board_half_length: f64,
    /// Rendering only; the ball is a point mass in the dynamics.
    pub ball_radius: f64,
    /// Distance of each target center from the board center (m).
    pub target_offset: f64,
    pub target_half_width: f64,
    /// Integration step (s).
    pub dt: f64,
    pub roll_sign: RollSign,
    /// Stylus heights are clamped to `[-stylus_limit, stylus_limit]` (m).
    pub stylus_limit: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            board_mass: 0.01,
            ball_mass: 0.05,
            gravity: 9.81,
            hand_stiffness: 200.0,
            hand_damping: 2.0,
            center_stiffness: 140.0,
            half_span: 0.25,
            inertia: 0.0004,
            board_half_length: 0.35,
            ball_radius: 0.025,
            target_offset: 0.150,
            target_half_width: 0.035,
            dt: 0.001,
            roll_sign: RollSign::Physical,
            stylus_limit: 0.15,
        }
    }
}

impl SimParams {
    /// Defaults with the ball equation taken verbatim from the model.
    pub fn literal_sign() -> Self {
        Self {
            roll_sign: RollSign::Literal,
            ..Self::default()
        }
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    /// Signed target center for a side: `+target_offset` on the right.
    pub fn target_center(&self, side: crate::Side) -> f64 {
        side.sign() * self.target_offset
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 12] = [
            ("board_mass", self.board_mass),
            ("ball_mass", self.ball_mass),
            ("gravity", self.gravity),
            ("hand_stiffness", self.hand_stiffness),
            ("hand_damping", self.hand_damping),
            ("center_stiffness", self.center_stiffness),
            ("half_span", self.half_span),
            ("inertia", self.inertia),
            ("board_half_length", self.board_half_length),
            ("target_half_width", self.target_half_width),
            ("dt", self.dt),
            ("stylus_limit", self.stylus_limit),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        for (name, value) in [("ball_radius", self.ball_radius), ("target_offset", self.target_offset)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite and >= 0, got {value}"),
                });
            }
        }
        if self.target_offset + self.target_half_width > self.board_half_length {
            return Err(Error::InvalidParam {
                name: "target_offset",
                reason: "target extends past the board edge".into(),
            });
        }
        Ok(())
    }

    /// Parses a flat key-value config (TOML syntax); missing keys keep defaults.
    pub fn from_config_str(text: &str) -> std::result::Result<Self, String> {
        let params: SimParams = toml::from_str(text).map_err(|e| e.to_string())?;
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text).map_err(|message| Error::Config {
            path: path.to_path_buf(),
            message,
        })
    }
}
