//! Instruction and response-format templates.
//!
//! A template file is a JSON object whose values are arrays of strings.
//! Localization templates use `{text}`, recognition templates `{bbox}`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::DocType;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template list {0:?} is empty")]
    Empty(&'static str),
    #[error("template {index} of {list:?} lacks the {placeholder} placeholder")]
    MissingPlaceholder {
        list: &'static str,
        index: usize,
        placeholder: &'static str,
    },
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing templates: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    pub localization: Vec<String>,
    pub recognition: Vec<String>,
    pub full_page_poster: Vec<String>,
    pub full_page_chart: Vec<String>,
    pub full_page_pdf: Vec<String>,
    /// Suffixes for grounded short answers.
    pub grounded_answer: Vec<String>,
    /// First half of a grounded-reasoning suffix; alone it serves open-ended answers.
    pub reasoning_first: Vec<String>,
    pub reasoning_second: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            localization: strings(&[
                "Where is the text \"{text}\" located in the image?",
                "Give the bounding box of \"{text}\".",
                "Locate \"{text}\" and output its coordinates.",
                "Find the region containing the text: {text}",
            ]),
            recognition: strings(&[
                "What text is inside {bbox}?",
                "Read the text in the region {bbox}.",
                "Recognize the content of {bbox}.",
                "Transcribe the text located at {bbox}.",
            ]),
            full_page_poster: strings(&[
                "Parse all text in this poster with bounding boxes.",
                "List every text block of the poster together with its coordinates.",
                "Extract the poster's text and locations in reading order.",
            ]),
            full_page_chart: strings(&["Convert this chart into JSON with the coordinates of every text element."]),
            full_page_pdf: strings(&["Parse this document page into text blocks with bounding boxes in reading order."]),
            grounded_answer: strings(&[
                "Answer with the grounded text only.",
                "Reply with the answer text and its bounding box.",
                "Give a short answer wrapped in <ocr></ocr> followed by its <bbox></bbox>.",
                "Respond briefly and ground the answer in the image.",
                "Output only the answer together with its location.",
                "Answer concisely; include the coordinates of the answer.",
                "Provide the answer as grounded text.",
            ]),
            reasoning_first: strings(&[
                "Explain your reasoning and ground the key text you use.",
                "Think step by step, citing the relevant text with its location.",
                "Describe how you reach the answer, grounding the evidence.",
            ]),
            reasoning_second: strings(&[
                "Finish with \"Answer: \" followed by a concise answer.",
                "End your response with \"Answer: \" and the final answer.",
                "Conclude with \"Answer: \" and a short answer.",
            ]),
        }
    }
}

impl TemplateSet {
    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let set: TemplateSet = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let lists: [(&'static str, &Vec<String>); 8] = [
            ("localization", &self.localization),
            ("recognition", &self.recognition),
            ("full_page_poster", &self.full_page_poster),
            ("full_page_chart", &self.full_page_chart),
            ("full_page_pdf", &self.full_page_pdf),
            ("grounded_answer", &self.grounded_answer),
            ("reasoning_first", &self.reasoning_first),
            ("reasoning_second", &self.reasoning_second),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(TemplateError::Empty(name));
            }
        }
        for (list, placeholder, items) in [
            ("localization", "{text}", &self.localization),
            ("recognition", "{bbox}", &self.recognition),
        ] {
            if let Some(index) = items.iter().position(|t| !t.contains(placeholder)) {
                return Err(TemplateError::MissingPlaceholder {
                    list,
                    index,
                    placeholder,
                });
            }
        }
        Ok(())
    }

    pub fn full_page(&self, doc: DocType) -> &[String] {
        match doc {
            DocType::Poster => &self.full_page_poster,
            DocType::Chart => &self.full_page_chart,
            DocType::Pdf => &self.full_page_pdf,
        }
    }
}
