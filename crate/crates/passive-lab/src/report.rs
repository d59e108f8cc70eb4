use std::fmt;

/// Outcome of a single verification check.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The check's hypothesis is not met; nothing was asserted.
    Skipped { reason: String },
}

/// Result of one inequality or property check.
///
/// `margin` is oriented so that nonnegative means the asserted inequality
/// holds with room to spare; the worst (smallest) margin over all steps or
/// samples is reported, together with where it occurred.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub name: String,
    pub status: CheckStatus,
    /// Worst signed margin encountered (inequality slack, before tolerance).
    pub margin: f64,
    /// Step or sample index at which the worst margin occurred.
    pub worst_index: Option<usize>,
    /// Tolerance the margin was compared against.
    pub tolerance: f64,
    /// Free-form context: witness values, prerequisite records, counts.
    pub details: String,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        matches!(self.status, CheckStatus::Pass)
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, CheckStatus::Fail)
    }

    pub fn skipped(&self) -> bool {
        matches!(self.status, CheckStatus::Skipped { .. })
    }

    /// Pass/fail from a margin against a (nonnegative) tolerance.
    pub fn from_margin(name: impl Into<String>, margin: f64, tolerance: f64) -> Self {
        let status = if margin >= -tolerance && margin.is_finite() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        VerificationReport {
            name: name.into(),
            status,
            margin,
            worst_index: None,
            tolerance,
            details: String::new(),
        }
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.worst_index = Some(index);
        self
    }

    pub fn with_details(mut self, details: impl Into<String>) -> Self {
        self.details = details.into();
        self
    }

    pub fn skip(name: impl Into<String>, reason: impl Into<String>) -> Self {
        VerificationReport {
            name: name.into(),
            status: CheckStatus::Skipped {
                reason: reason.into(),
            },
            margin: f64::NAN,
            worst_index: None,
            tolerance: 0.0,
            details: String::new(),
        }
    }
}

impl fmt::Display for VerificationReport {
    /// Line-oriented form: `CHECK name PASS|FAIL|SKIPPED margin=… step=…`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match &self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped { .. } => "SKIPPED",
        };
        let step = match self.worst_index {
            Some(k) => k.to_string(),
            None => "-".to_string(),
        };
        write!(
            f,
            "CHECK {} {} margin={:.6e} step={}",
            self.name, status, self.margin, step
        )?;
        if let CheckStatus::Skipped { reason } = &self.status {
            write!(f, " reason={}", reason)?;
        }
        Ok(())
    }
}
