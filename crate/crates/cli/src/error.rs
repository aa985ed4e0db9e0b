use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    GoalUnmet {
        goal: f64,
        achieved: f64,
    },
    Numerical(String),
    /// Failed invariant checks on an artifact.
    Check(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::GoalUnmet { .. } => 3,
            CliError::Numerical(_) | CliError::Check(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::GoalUnmet { .. } => "goal_unmet",
            CliError::Numerical(_) => "numerical",
            CliError::Check(_) => "check_failed",
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::GoalUnmet { goal, achieved } = self {
            v["goal"] = json!(goal);
            v["achieved"] = json!(achieved);
        }
        v
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Check(m) | CliError::Io(m) => {
                f.write_str(m)
            }
            CliError::GoalUnmet { goal, achieved } => {
                write!(f, "mean fidelity {achieved} is below the goal {goal}")
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<qudit_control::Error> for CliError {
    fn from(e: qudit_control::Error) -> Self {
        use qudit_control::Error as E;
        match e {
            E::Numerical(_) => CliError::Numerical(e.to_string()),
            E::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
