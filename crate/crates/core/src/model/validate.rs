use serde::{Deserialize, Serialize};

use super::VideoBundle;

/// A non-fatal problem: which component, and what constraint it breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub component: String,
    pub message: String,
}

impl Finding {
    pub fn new(component: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            component: component.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.component, self.message)
    }
}

/// Cross-component consistency checks. An empty list means the bundle is
/// consistent.
pub fn validate_bundle(bundle: &VideoBundle) -> Vec<Finding> {
    let n = bundle.n_frames();
    let mut findings = Vec::new();

    let covered = bundle.fragmentation.n_frames();
    if covered != n {
        findings.push(Finding::new(
            "fragmentation",
            format!(
                "last fragment ends at frame {} but features cover {n} frames",
                covered.saturating_sub(1)
            ),
        ));
    }

    if let Some(seg) = &bundle.segmentation {
        if seg.n_frames() != n {
            findings.push(Finding::new(
                "segmentation",
                format!("{} label frames for {n} feature frames", seg.n_frames()),
            ));
        }
    }

    if let Some(frames) = &bundle.frames {
        if frames.n_frames() != n {
            findings.push(Finding::new(
                "frames",
                format!("{} raw frames for {n} feature frames", frames.n_frames()),
            ));
        }
        if let Some(seg) = &bundle.segmentation {
            if (seg.height(), seg.width()) != (frames.height(), frames.width()) {
                findings.push(Finding::new(
                    "segmentation",
                    format!(
                        "label grid {}x{} does not match frame size {}x{}",
                        seg.height(),
                        seg.width(),
                        frames.height(),
                        frames.width()
                    ),
                ));
            }
        }
    }

    findings
}
