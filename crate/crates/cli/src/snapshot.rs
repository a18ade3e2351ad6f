//! State snapshot schema for one-shot planning: where both parties stand,
//! how they move, the held tension, and the goal. TOML with unknown fields
//! rejected, so typos surface as schema errors naming the offending key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSnapshot {
    pub human_position: [f64; 2],
    pub human_velocity: [f64; 2],
    pub robot_position: [f64; 2],
    pub robot_velocity: [f64; 2],
    /// Held commanded tension in newtons.
    pub tension: f64,
    pub goal: [f64; 2],
    /// Robot command held in the last cycle.
    #[serde(default)]
    pub prev_command: [f64; 3],
    /// Occupancy grid text; omitted means open ground.
    #[serde(default)]
    pub map_text: Option<String>,
}

impl PlanSnapshot {
    pub fn validate(&self) -> Result<(), CliError> {
        let finite = self
            .human_position
            .iter()
            .chain(&self.human_velocity)
            .chain(&self.robot_position)
            .chain(&self.robot_velocity)
            .chain(&self.goal)
            .chain(&self.prev_command)
            .all(|v| v.is_finite());
        if !finite {
            return Err(CliError::Config("snapshot fields must be finite".into()));
        }
        if !(self.tension.is_finite() && self.tension >= 0.0) {
            return Err(CliError::Config(format!(
                "snapshot tension {} must be finite and >= 0",
                self.tension
            )));
        }
        Ok(())
    }
}

pub fn load(path: &Path) -> Result<PlanSnapshot, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read snapshot {}: {e}", path.display())))?;
    let snap: PlanSnapshot = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("snapshot {}: {e}", path.display())))?;
    snap.validate()?;
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
human_position = [0.0, 0.0]
human_velocity = [0.1, 0.0]
robot_position = [1.0, 0.0]
robot_velocity = [0.1, 0.0]
tension = 5.0
goal = [4.0, 0.0]
";

    #[test]
    fn snapshots_parse_with_optional_fields_defaulted() {
        let snap: PlanSnapshot = toml::from_str(GOOD).unwrap();
        snap.validate().unwrap();
        assert_eq!(snap.prev_command, [0.0, 0.0, 0.0]);
        assert!(snap.map_text.is_none());
    }

    #[test]
    fn unknown_fields_name_themselves() {
        let text = format!("{GOOD}tenssion = 3.0\n");
        let err = toml::from_str::<PlanSnapshot>(&text).unwrap_err();
        assert!(err.to_string().contains("tenssion"), "{err}");
    }

    #[test]
    fn missing_fields_name_themselves() {
        let err = toml::from_str::<PlanSnapshot>("tension = 1.0").unwrap_err();
        assert!(err.to_string().contains("human_position"), "{err}");
    }

    #[test]
    fn negative_tension_is_rejected() {
        let mut snap: PlanSnapshot = toml::from_str(GOOD).unwrap();
        snap.tension = -1.0;
        assert!(snap.validate().is_err());
    }
}
