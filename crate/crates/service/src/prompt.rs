//! Prompt wire types and their translation into sampler prompts.

use serde::{Deserialize, Serialize};
use vesselgen::diffusion::PromptBundle;
use vesselgen::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    /// Centerline points.
    Point,
    /// A cross-section loop; its centroid also guides the centerline.
    Contour,
    /// A piece of vessel wall.
    Patch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Prompt {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Validation("prompt has no points".into()));
        }
        if self.kind == PromptKind::Contour && self.points.len() < 3 {
            return Err(Error::Validation("contour prompts need at least 3 points".into()));
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("non-finite prompt coordinate".into()));
        }
        Ok(())
    }
}

/// A prompt echoed with its position in the session list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedPrompt {
    pub index: usize,
    #[serde(flatten)]
    pub prompt: Prompt,
}

pub fn indexed(prompts: &[Prompt]) -> Vec<IndexedPrompt> {
    prompts
        .iter()
        .enumerate()
        .map(|(index, p)| IndexedPrompt {
            index,
            prompt: p.clone(),
        })
        .collect()
}

pub fn bundle(prompts: &[Prompt]) -> PromptBundle<f64> {
    let mut b = PromptBundle::default();
    for p in prompts {
        match p.kind {
            PromptKind::Point => b.points.extend(p.points.iter().copied()),
            PromptKind::Contour => b.contours.push(p.points.clone()),
            PromptKind::Patch => b.patches.push(p.points.clone()),
        }
    }
    b
}
