//! Two-stage multi-view captioning and structured attribute extraction.
//!
//! Stage one captions every selected view of an object separately, with the
//! panoptic class as a hint. Stage two merges those captions into a single
//! description plus a JSON attribute block, whose `type` field can correct
//! the panoptic class.

use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::imaging::dominant_palette_color;

/// One cropped view of an object.
#[derive(Debug, Clone)]
pub struct ViewCrop {
    pub frame_id: u32,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub caption: String,
    /// Structured attribute block as returned by the provider.
    pub attributes: Option<Value>,
}

pub trait CaptionProvider: Send + Sync {
    fn name(&self) -> &str;
    fn per_view_caption(&self, crop: &ViewCrop, hint: &str) -> Result<String>;
    fn synthesize(&self, captions: &[String], hint: &str) -> Result<Synthesis>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectAttributes {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colour: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_note: Option<String>,
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

fn normalize_opt(s: Option<String>) -> Option<String> {
    s.map(|v| normalize(&v)).filter(|v| !v.is_empty())
}

impl ObjectAttributes {
    pub fn only_type(kind: &str) -> Self {
        Self {
            kind: normalize(kind),
            ..Default::default()
        }
    }

    pub fn normalized(self) -> Self {
        Self {
            kind: normalize(&self.kind),
            colour: normalize_opt(self.colour),
            material: normalize_opt(self.material),
            shape: normalize_opt(self.shape),
            function: normalize_opt(self.function),
            texture: normalize_opt(self.texture),
            pattern: normalize_opt(self.pattern),
            confidence_note: normalize_opt(self.confidence_note),
        }
    }

    /// Named optional attributes that are present, in a fixed order.
    pub fn present(&self) -> Vec<(&'static str, &str)> {
        [
            ("colour", &self.colour),
            ("material", &self.material),
            ("shape", &self.shape),
            ("function", &self.function),
            ("texture", &self.texture),
            ("pattern", &self.pattern),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

/// Parses a structured attribute block. Unknown keys are ignored; string
/// values are trimmed and lowercased.
pub fn extract_attributes(unified_caption: &str, structured: &Value) -> Result<ObjectAttributes> {
    if unified_caption.trim().is_empty() {
        return Err(Error::AttributeParse("caption is empty".into()));
    }
    let obj = structured
        .as_object()
        .ok_or_else(|| Error::AttributeParse("attribute block is not a JSON object".into()))?;
    let field = |key: &str| -> Result<Option<String>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(Error::AttributeParse(format!("\"{key}\" is not a string: {other}"))),
        }
    };
    let kind = field("type")?.ok_or_else(|| Error::AttributeParse("missing \"type\"".into()))?;
    let attrs = ObjectAttributes {
        kind,
        colour: field("colour")?.or(field("color")?),
        material: field("material")?,
        shape: field("shape")?,
        function: field("function")?,
        texture: field("texture")?,
        pattern: field("pattern")?,
        confidence_note: field("confidence_note")?,
    }
    .normalized();
    if attrs.kind.is_empty() {
        return Err(Error::AttributeParse("\"type\" is empty".into()));
    }
    Ok(attrs)
}

/// Parses attributes from JSON text.
pub fn extract_attributes_str(unified_caption: &str, json: &str) -> Result<ObjectAttributes> {
    let value: Value = serde_json::from_str(json).map_err(|e| Error::AttributeParse(e.to_string()))?;
    extract_attributes(unified_caption, &value)
}

/// Caption-derived type when it differs from the panoptic class
/// (case-insensitively), otherwise the original class.
pub fn correct_label(original_class: &str, attributes: &ObjectAttributes) -> String {
    let refined = attributes.kind.trim();
    let original = original_class.trim();
    if refined.is_empty() || refined.eq_ignore_ascii_case(original) {
        if original.is_empty() {
            crate::lifting::UNKNOWN_CLASS.to_string()
        } else {
            original_class.to_string()
        }
    } else {
        refined.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub object_id: u32,
    pub per_view_captions: Vec<(u32, String)>,
    pub unified_caption: String,
    pub attributes: ObjectAttributes,
    pub original_class: String,
    pub refined_class: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CaptionRecord {
    /// Record for an object whose captioning failed: panoptic class, no caption.
    pub fn fallback(object_id: u32, original_class: &str, warning: impl Into<String>) -> Self {
        Self {
            object_id,
            per_view_captions: Vec::new(),
            unified_caption: String::new(),
            attributes: ObjectAttributes::only_type(original_class),
            original_class: original_class.to_string(),
            refined_class: original_class.to_string(),
            warnings: vec![warning.into()],
        }
    }
}

pub fn caption_object(object_id: u32, original_class: &str, views: &[ViewCrop], provider: &dyn CaptionProvider) -> Result<CaptionRecord> {
    if views.is_empty() {
        return Err(Error::NoViews);
    }
    let mut warnings = Vec::new();
    let mut per_view = Vec::with_capacity(views.len());
    for view in views {
        match provider.per_view_caption(view, original_class) {
            Ok(text) if !text.trim().is_empty() => per_view.push((view.frame_id, text)),
            Ok(_) => warnings.push(format!("frame {}: empty caption", view.frame_id)),
            Err(e) => warnings.push(format!("frame {}: {e}", view.frame_id)),
        }
    }
    if per_view.is_empty() {
        return Err(Error::CaptionUnavailable(object_id, warnings.join("; ")));
    }
    let texts: Vec<String> = per_view.iter().map(|(_, t)| t.clone()).collect();
    let synthesis = provider.synthesize(&texts, original_class)?;
    let unified = synthesis.caption.trim().to_string();
    if unified.is_empty() {
        return Err(Error::CaptionUnavailable(object_id, "empty unified caption".into()));
    }
    let (attributes, refined_class) = match synthesis.attributes.as_ref().map(|a| extract_attributes(&unified, a)) {
        Some(Ok(attrs)) => {
            let refined = correct_label(original_class, &attrs);
            (attrs, refined)
        }
        Some(Err(e)) => {
            warnings.push(format!("attributes: {e}"));
            (ObjectAttributes::only_type(original_class), original_class.to_string())
        }
        None => {
            warnings.push("attributes: provider returned no attribute block".into());
            (ObjectAttributes::only_type(original_class), original_class.to_string())
        }
    };
    Ok(CaptionRecord {
        object_id,
        per_view_captions: per_view,
        unified_caption: unified,
        attributes,
        original_class: original_class.to_string(),
        refined_class,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCaption {
    pub caption: String,
    pub attributes: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorCaption {
    pub rgb: [u8; 3],
    #[serde(flatten)]
    pub entry: FixtureCaption,
}

/// On-disk mapping used by [`FixtureCaptionProvider`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionFixture {
    #[serde(default)]
    pub by_color: Vec<ColorCaption>,
    #[serde(default)]
    pub by_hint: std::collections::BTreeMap<String, FixtureCaption>,
}

/// Deterministic caption provider backed by a JSON mapping.
///
/// A view is captioned by the dominant fixture color in its crop, falling
/// back to the hint class. Synthesis picks the most common view caption and
/// returns the attributes registered for it.
#[derive(Debug, Clone)]
pub struct FixtureCaptionProvider {
    fixture: CaptionFixture,
    palette: Vec<[u8; 3]>,
}

impl FixtureCaptionProvider {
    pub fn new(fixture: CaptionFixture) -> Self {
        let palette = fixture.by_color.iter().map(|c| c.rgb).collect();
        Self { fixture, palette }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::new(serde_json::from_str(&text)?))
    }

    fn lookup(&self, caption: &str) -> Option<&FixtureCaption> {
        self.fixture
            .by_color
            .iter()
            .map(|c| &c.entry)
            .chain(self.fixture.by_hint.values())
            .find(|e| e.caption == caption)
    }
}

impl CaptionProvider for FixtureCaptionProvider {
    fn name(&self) -> &str {
        "fixture"
    }

    fn per_view_caption(&self, crop: &ViewCrop, hint: &str) -> Result<String> {
        if let Some(color) = dominant_palette_color(&crop.image, &self.palette) {
            let entry = self.fixture.by_color.iter().find(|c| c.rgb == color).expect("palette from fixture");
            return Ok(entry.entry.caption.clone());
        }
        self.fixture
            .by_hint
            .get(hint)
            .map(|e| e.caption.clone())
            .ok_or_else(|| Error::provider(format!("fixture has no caption for hint \"{hint}\"")))
    }

    fn synthesize(&self, captions: &[String], hint: &str) -> Result<Synthesis> {
        let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
        for c in captions {
            *counts.entry(c.as_str()).or_default() += 1;
        }
        let mut best: Option<(&str, usize)> = None;
        for (c, n) in counts {
            if best.is_none_or(|(_, bn)| n > bn) {
                best = Some((c, n));
            }
        }
        let (caption, _) = best.ok_or_else(|| Error::provider("nothing to synthesize"))?;
        let entry = self
            .lookup(caption)
            .or_else(|| self.fixture.by_hint.get(hint))
            .ok_or_else(|| Error::provider(format!("fixture cannot synthesize \"{caption}\"")))?;
        Ok(Synthesis {
            caption: entry.caption.clone(),
            attributes: Some(entry.attributes.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use serde_json::json;

    const VASE: [u8; 3] = [240, 240, 230];

    fn provider() -> FixtureCaptionProvider {
        FixtureCaptionProvider::new(CaptionFixture {
            by_color: vec![ColorCaption {
                rgb: VASE,
                entry: FixtureCaption {
                    caption: "A white ceramic vase.".into(),
                    attributes: json!({"type": "Vase", "colour": " White ", "material": "ceramic", "extra": 3}),
                },
            }],
            by_hint: Default::default(),
        })
    }

    fn crop(frame_id: u32, color: [u8; 3]) -> ViewCrop {
        ViewCrop {
            frame_id,
            image: RgbImage::from_pixel(4, 4, Rgb(color)),
        }
    }

    #[test]
    fn fixture_round_trip_corrects_label() {
        let p = provider();
        let views: Vec<_> = (0..3).map(|i| crop(i, VASE)).collect();
        let rec = caption_object(4, "bowl", &views, &p).unwrap();
        assert_eq!(rec.per_view_captions.len(), 3);
        assert_eq!(rec.unified_caption, "A white ceramic vase.");
        assert_eq!(rec.attributes.kind, "vase");
        assert_eq!(rec.attributes.colour.as_deref(), Some("white"));
        assert_eq!(rec.original_class, "bowl");
        assert_eq!(rec.refined_class, "vase");
        let again = caption_object(4, "bowl", &views, &p).unwrap();
        assert_eq!(serde_json::to_string(&rec).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn partial_view_failure_is_tolerated() {
        let p = provider();
        let views = vec![crop(0, VASE), crop(1, [1, 2, 3]), crop(2, VASE)];
        let rec = caption_object(4, "bowl", &views, &p).unwrap();
        assert_eq!(rec.per_view_captions.iter().map(|(f, _)| *f).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(rec.warnings.len(), 1);
    }

    #[test]
    fn all_views_failing_or_none() {
        let p = provider();
        assert!(matches!(caption_object(1, "bowl", &[], &p), Err(Error::NoViews)));
        assert!(matches!(
            caption_object(1, "bowl", &[crop(0, [1, 1, 1])], &p),
            Err(Error::CaptionUnavailable(1, _))
        ));
        let fb = CaptionRecord::fallback(1, "bowl", "no captions");
        assert_eq!(fb.refined_class, "bowl");
        assert!(fb.unified_caption.is_empty());
    }

    #[test]
    fn attribute_parsing() {
        let a = extract_attributes_str("caption", r#"{"type":"vase","colour":"white"}"#).unwrap();
        assert_eq!(a.kind, "vase");
        assert_eq!(a.colour.as_deref(), Some("white"));
        assert!(matches!(
            extract_attributes_str("caption", r#"{"colour":"white"}"#),
            Err(Error::AttributeParse(_))
        ));
        assert!(matches!(extract_attributes_str("caption", "{not json"), Err(Error::AttributeParse(_))));
        let a = extract_attributes_str("c", r#"{"type":"  Coffee TABLE ","Material":"x","texture":"Rough"}"#).unwrap();
        assert_eq!(a.kind, "coffee table");
        assert_eq!(a.texture.as_deref(), Some("rough"));
        assert!(extract_attributes_str("  ", r#"{"type":"vase"}"#).is_err());
    }

    #[test]
    fn label_correction() {
        let vase = ObjectAttributes::only_type("vase");
        assert_eq!(correct_label("bowl", &vase), "vase");
        let vcs = ObjectAttributes::only_type("video conferencing system");
        assert_eq!(correct_label("tv", &vcs), "video conferencing system");
        assert_eq!(correct_label("chair", &ObjectAttributes::only_type("chair")), "chair");
        assert_eq!(correct_label("Chair", &ObjectAttributes::only_type("chair")), "Chair");
    }

    #[test]
    fn attributes_json_round_trip() {
        let a = extract_attributes_str("c", r#"{"type":"lamp","colour":"black","function":"lighting"}"#).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        let b = extract_attributes_str("c", &text).unwrap();
        assert_eq!(a, b);
    }
}
